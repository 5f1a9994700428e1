//! Loopback benchmark: runs complete secure inferences in process,
//! checks every trial against the plaintext oracle, and asserts the
//! measured operation counters equal the layout-derived model exactly.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use rand::{Rng, SeedableRng};

use cheetah_core::nn::{self, Tensor};
use cheetah_core::protocol::{self, model, plan_network, ProtocolConfig};
use cheetah_core::report::BenchReport;
use cheetah_core::Scalar;

use crate::util;
use crate::CliFailure;

#[derive(Args)]
pub struct BenchArgs {
    /// Fixture directory holding manifest.json.
    #[arg(long)]
    net: PathBuf,
    #[arg(long, default_value_t = 3)]
    trials: usize,
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "default")]
    params: String,
}

pub fn cmd_bench(a: BenchArgs) -> Result<()> {
    let params = util::load_params(&a.params)?;
    let backend = util::backend_from(a.backend.as_deref())?;
    let engine = util::build_engine(params, backend)?;
    let net =
        nn::load_network::<Scalar>(&a.net.join("manifest.json")).context("loading fixture")?;
    let plans =
        plan_network(&net, engine.params.slots).map_err(|e| CliFailure::Protocol(e.to_string()))?;
    let predicted: Vec<(u64, u64)> = model::predict_all(&plans, engine.params.slots)
        .iter()
        .map(|m| (m.mult, m.add))
        .collect();

    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(a.seed);
    let mut runs = Vec::with_capacity(a.trials);
    let mut max_err: f64 = 0.0;
    let mut agree = 0usize;
    let fp = engine.params.fixedpoint();
    for trial in 0..a.trials {
        let input = Tensor::new(
            net.input,
            (0..net.input.count())
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect(),
        );
        let mut outcome = protocol::run_local_inference(
            engine.clone(),
            &net,
            &input,
            &ProtocolConfig::default(),
            a.seed.wrapping_add(trial as u64),
        )
        .map_err(|e| CliFailure::Protocol(e.to_string()))?;
        protocol::compare_with_oracle(&mut outcome, &net, &input, &fp)
            .map_err(|e| CliFailure::Protocol(e.to_string()))?;
        max_err = max_err.max(outcome.report.max_abs_error.unwrap_or(0.0));
        if outcome.report.argmax_match.unwrap_or(false) {
            agree += 1;
        }
        runs.push(outcome.report);
    }

    // Measured counters must be identical across trials and equal to the
    // model; the permutation counter must be identically zero.
    let measured: Vec<(u64, u64)> = (0..plans.len())
        .map(|l| runs[0].layer_mult_add(l))
        .collect();
    for run in &runs {
        for l in 0..plans.len() {
            if run.layer_mult_add(l) != measured[l] {
                return Err(CliFailure::Verification(format!(
                    "layer {l} counters vary across trials"
                ))
                .into());
            }
        }
        if run.perm_total() != 0 {
            return Err(CliFailure::Verification("nonzero permutation count".into()).into());
        }
    }
    for (l, (got, want)) in measured.iter().zip(&predicted).enumerate() {
        if got != want {
            return Err(CliFailure::Verification(format!(
                "layer {l}: measured (mult, add) = {got:?}, model predicts {want:?}"
            ))
            .into());
        }
    }

    let report = BenchReport {
        network: net.name.clone(),
        backend: format!("{backend:?}").to_lowercase(),
        trials: a.trials,
        layer_mult_add: measured.clone(),
        predicted_mult_add: predicted,
        perm_total: 0,
        mean_wall_ms: runs.iter().map(|r| r.wall_ms).sum::<f64>() / a.trials.max(1) as f64,
        max_abs_error: max_err,
        argmax_agreement: agree as f64 / a.trials.max(1) as f64,
        runs,
    };
    println!(
        "{}: {} trials, perm=0, max |err| = {:.2e}, argmax agreement {:.1}%, mean {:.2} ms",
        report.network,
        report.trials,
        report.max_abs_error,
        100.0 * report.argmax_agreement,
        report.mean_wall_ms
    );
    for (l, (m, ad)) in measured.iter().enumerate() {
        println!(
            "  layer {l} ({}): mult={m} add={ad} (model ok)",
            report.runs[0].layers[l].kind
        );
    }
    if let Some(path) = a.report {
        std::fs::write(&path, serde_json::to_vec_pretty(&report)?)?;
        eprintln!("bench report written to {}", path.display());
    }
    Ok(())
}
