//! Report rendering: tables for humans, fixed-column CSV for scripts.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};

use cheetah_core::report::{BenchReport, RunReport};

/// Fixed CSV schema for per-layer rows.
pub const CSV_HEADER: &str =
    "layer,kind,client_mult,client_add,server_mult,server_add,perm,wall_ms";

pub fn cmd_report(path: PathBuf, format: &str) -> Result<()> {
    let text =
        std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let runs: Vec<RunReport> = if let Ok(bench) = serde_json::from_str::<BenchReport>(&text) {
        render_bench_header(&bench);
        bench.runs.into_iter().take(1).collect()
    } else {
        vec![serde_json::from_str::<RunReport>(&text).context("parsing report")?]
    };
    for run in &runs {
        match format {
            "table" => print!("{}", render_table(run)),
            "csv" => print!("{}", render_csv(run)),
            other => bail!("unknown format {other} (use table or csv)"),
        }
    }
    Ok(())
}

fn render_bench_header(b: &BenchReport) {
    println!(
        "bench {} [{}]: {} trials, perm={}, max |err| {:.2e}, argmax {:.1}%, mean {:.2} ms",
        b.network,
        b.backend,
        b.trials,
        b.perm_total,
        b.max_abs_error,
        100.0 * b.argmax_agreement,
        b.mean_wall_ms
    );
}

pub fn render_table(r: &RunReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "network {} [{}]  wall {:.2} ms  saturations {}\n",
        r.network, r.backend, r.wall_ms, r.saturation_count
    ));
    if let (Some(err), Some(am)) = (r.max_abs_error, r.argmax_match) {
        out.push_str(&format!(
            "max |err| vs oracle {err:.3e}  argmax match {am}\n"
        ));
    }
    out.push_str(&format!(
        "{:<6} {:<14} {:>11} {:>11} {:>11} {:>11} {:>5} {:>9}\n",
        "layer",
        "kind",
        "client mult",
        "client add",
        "server mult",
        "server add",
        "perm",
        "wall ms"
    ));
    for l in &r.layers {
        out.push_str(&format!(
            "{:<6} {:<14} {:>11} {:>11} {:>11} {:>11} {:>5} {:>9.2}\n",
            l.layer,
            l.kind,
            l.client.mult_plain,
            l.client.add_ct + l.client.add_plain,
            l.server.mult_plain,
            l.server.add_ct + l.server.add_plain,
            l.client.perm + l.server.perm,
            l.wall_ms,
        ));
    }
    out.push_str(&format!(
        "totals: client mult {} add {}, server mult {} add {}, perm {}\n",
        r.client_total.mult_plain,
        r.client_total.add_ct + r.client_total.add_plain,
        r.server_total.mult_plain,
        r.server_total.add_ct + r.server_total.add_plain,
        r.perm_total(),
    ));
    out.push_str(&format!(
        "bytes: online {} out / {} in, offline {} out / {} in\n",
        r.bytes.online_sent,
        r.bytes.online_received,
        r.bytes.offline_sent,
        r.bytes.offline_received
    ));
    out
}

pub fn render_csv(r: &RunReport) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for l in &r.layers {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{:.3}\n",
            l.layer,
            l.kind,
            l.client.mult_plain,
            l.client.add_ct + l.client.add_plain,
            l.server.mult_plain,
            l.server.add_ct + l.server.add_plain,
            l.client.perm + l.server.perm,
            l.wall_ms,
        ));
    }
    out
}
