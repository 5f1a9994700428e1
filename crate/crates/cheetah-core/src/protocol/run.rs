//! Session drivers and the in-process loopback runner used by tests and
//! the bench command.

use std::sync::Arc;

use super::server::ServerRunStats;
use super::*;
use crate::phe::{Backend, Owner, PheEngine};
use crate::report::{LayerReport, RunReport};
use crate::transport::{loopback, Channel};

/// What a finished secure inference hands back.
#[derive(Debug, Clone)]
pub struct InferenceOutcome {
    pub scores: Vec<Scalar>,
    pub report: RunReport,
}

/// Drive a client session over an established channel.
pub fn run_client(
    session: &mut ClientSession,
    channel: &mut Channel,
    input: &Tensor<Scalar>,
) -> Result<InferenceOutcome, ProtocolError> {
    let t0 = std::time::Instant::now();
    let scores = session.run(channel, input)?;
    let wall_ms = t0.elapsed().as_secs_f64() * 1e3;
    let layers = session
        .plan
        .iter()
        .enumerate()
        .map(|(l, p)| LayerReport {
            layer: l,
            kind: layer_kind(p),
            client: session.layer_counters.get(l).copied().unwrap_or_default(),
            server: Default::default(),
            wall_ms: session.layer_wall_ms.get(l).copied().unwrap_or_default(),
        })
        .collect();
    let report = RunReport {
        network: session.name.clone(),
        backend: backend_name(session.phe.engine.backend).to_string(),
        layers,
        client_total: session.phe.counters_snapshot(),
        server_total: Default::default(),
        bytes: channel.counters(),
        wall_ms,
        saturation_count: session.phe.saturation.get(),
        max_abs_error: None,
        argmax_match: None,
    };
    Ok(InferenceOutcome { scores, report })
}

/// Drive a server session over an established channel.
pub fn run_server(
    session: &mut ServerSession,
    channel: &mut Channel,
) -> Result<ServerRunStats, ProtocolError> {
    session.run(channel)
}

fn layer_kind(p: &LayerPlan) -> String {
    let mut s = match &p.linear {
        LinearStep::Conv { .. } => "conv".to_string(),
        LinearStep::Fc { .. } => "fc".to_string(),
    };
    if let Some(a) = p.activation {
        s.push('+');
        s.push_str(match a {
            crate::nn::ActivationKind::Relu => "relu",
            crate::nn::ActivationKind::Sigmoid => "sigmoid",
            crate::nn::ActivationKind::Tanh => "tanh",
            crate::nn::ActivationKind::Softmax => "softmax",
        });
    }
    if p.pool.is_some() {
        s.push_str("+pool");
    }
    s
}

fn backend_name(b: Backend) -> &'static str {
    match b {
        Backend::Clear => "clear",
        Backend::Rlwe => "rlwe",
    }
}

/// Run a complete two-party inference in process over a loopback pair.
/// The client sees only the stripped architecture; weights stay inside the
/// server session.
pub fn run_local_inference(
    engine: Arc<PheEngine>,
    net: &NetworkSpec<Scalar>,
    input: &Tensor<Scalar>,
    cfg: &ProtocolConfig,
    seed: u64,
) -> Result<InferenceOutcome, ProtocolError> {
    let client_key = engine.keygen(Owner::Client, seed ^ 0xc11e47);
    let server_key = engine.keygen(Owner::Server, seed ^ 0x5e47e4);
    let arch = net.strip_weights();
    let mut client = ClientSession::new(engine.clone(), client_key, arch, cfg.clone(), seed)?;
    let mut server = ServerSession::new(
        engine,
        server_key,
        net.clone(),
        cfg.clone(),
        seed.wrapping_add(1),
    )?;

    let (ca, cb) = loopback();
    let ct_len = client.phe.params().ciphertext_bytes();
    let mut client_channel = Channel::new(ca, ct_len);
    let mut server_channel = Channel::new(cb, ct_len);

    let handle = std::thread::spawn(move || {
        let stats = server.run(&mut server_channel);
        (server, stats)
    });
    let outcome = run_client(&mut client, &mut client_channel, input);
    let (server, stats) = handle.join().expect("server thread");
    let mut outcome = outcome?;
    let stats = stats?;
    let _ = server;
    for (lr, sc) in outcome.report.layers.iter_mut().zip(&stats.per_layer) {
        lr.server = *sc;
    }
    outcome.report.server_total = stats.total;
    Ok(outcome)
}

/// Plaintext ground truth plus comparison fields for a report.
pub fn compare_with_oracle(
    outcome: &mut InferenceOutcome,
    net: &NetworkSpec<Scalar>,
    input: &Tensor<Scalar>,
    fp: &FpParams,
) -> Result<(), ProtocolError> {
    // The secure path consumes the grid-quantized input, so the oracle
    // does too: the comparison isolates protocol error from input
    // representation error.
    let gridded = Tensor::new(
        input.dims,
        input
            .data
            .iter()
            .map(|&v| crate::fixedpoint::round_to_grid(v, fp.scale_bits))
            .collect(),
    );
    let want = crate::nn::infer_ref(net, &gridded)?;
    let got = &outcome.scores;
    let max_err = want
        .iter()
        .zip(got)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, Scalar::max);
    outcome.report.max_abs_error = Some(max_err);
    outcome.report.argmax_match = Some(argmax(&want) == argmax(got));
    Ok(())
}

pub fn argmax(v: &[Scalar]) -> usize {
    v.iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap_or(0)
}

// Kind strings double as the per-layer labels in reports; keep them in one
// place so bench output and acceptance assertions agree.
pub fn describe_plan(plans: &[LayerPlan]) -> Vec<String> {
    plans.iter().map(layer_kind).collect()
}
