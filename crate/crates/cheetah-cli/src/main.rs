//! Operator surface: key generation, fixture creation, oracle runs,
//! serving, secure inference, benchmarking, and the analytic complexity
//! table.
//!
//! Exit codes: 0 success, 1 usage, 2 protocol failure, 3 verification
//! failure.

mod bench;
mod costmodel;
mod render;
mod util;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use cheetah_core::nn::{self, NetTemplate, Tensor};
use cheetah_core::phe::Owner;
use cheetah_core::protocol::{self, ProtocolConfig};
use cheetah_core::transport;
use cheetah_core::Scalar;

#[derive(Parser)]
#[command(
    name = "cheetah",
    version,
    about = "Permutation-free two-party secure CNN inference"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a party's secret-key file.
    Keygen(KeygenArgs),
    /// Materialize a fixture network (manifest, weights, sample input).
    MakeNet(MakeNetArgs),
    /// Run the plaintext reference inference.
    Oracle(OracleArgs),
    /// Serve secure inference sessions over TCP.
    Serve(ServeArgs),
    /// Run one secure inference against a server.
    Infer(InferArgs),
    /// Benchmark loopback inference and verify the op-count model.
    Bench(bench::BenchArgs),
    /// Print the analytic per-layer complexity table.
    Costmodel(CostmodelArgs),
    /// Render a report file as a table or CSV.
    Report(ReportArgs),
}

#[derive(Args)]
struct KeygenArgs {
    /// Parameter file, or "default".
    #[arg(long, default_value = "default")]
    params: String,
    /// client or server.
    #[arg(long)]
    role: String,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also write the parameter set next to the key.
    #[arg(long)]
    emit_params: Option<PathBuf>,
}

#[derive(Args)]
struct MakeNetArgs {
    /// tiny | netA | netB | vggHead | alexnet | vgg16.
    #[arg(long)]
    template: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct OracleArgs {
    /// Network manifest (with weights).
    #[arg(long)]
    net: PathBuf,
    /// Input tensor file.
    #[arg(long)]
    input: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    /// Fixture directory holding manifest.json.
    #[arg(long)]
    net_dir: PathBuf,
    #[arg(long)]
    key: PathBuf,
    #[arg(long)]
    addr: Option<String>,
    #[arg(long)]
    backend: Option<String>,
    #[arg(long, default_value = "default")]
    params: String,
    /// Serve exactly this many sessions, then exit (0 = forever).
    #[arg(long, default_value_t = 0)]
    sessions: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct InferArgs {
    /// Public architecture manifest (no weights).
    #[arg(long)]
    net_manifest_public: PathBuf,
    #[arg(long)]
    key: PathBuf,
    #[arg(long)]
    addr: Option<String>,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    backend: Option<String>,
    #[arg(long, default_value = "default")]
    params: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct CostmodelArgs {
    /// siso | mimo | fc.
    #[arg(long)]
    layer: String,
    /// cheetah | gazelle-ir | gazelle-or | gazelle-fc | naive-fc | hs-fc | all.
    #[arg(long, default_value = "all")]
    scheme: String,
    #[arg(long, default_value_t = 10000)]
    n: u64,
    #[arg(long, default_value_t = 60.0)]
    log_q: f64,
    #[arg(long, default_value_t = 20.0)]
    log_p: f64,
    #[arg(long, default_value_t = 0)]
    n_i: u64,
    #[arg(long, default_value_t = 0)]
    n_o: u64,
    #[arg(long, default_value_t = 0)]
    r: u64,
    #[arg(long, default_value_t = 0)]
    c_i: u64,
    #[arg(long, default_value_t = 0)]
    c_o: u64,
    /// Inputs per ciphertext; derived as floor(n/r^2) when omitted.
    #[arg(long, default_value_t = 0)]
    c_n: u64,
    /// Input feature width (garbled-circuit terms scale with I^2).
    #[arg(long, default_value_t = 28)]
    i_dim: u64,
    /// Emit JSON instead of the table.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// table | csv.
    #[arg(long, default_value = "table")]
    format: String,
}

/// Error category driving the process exit code.
#[derive(Debug)]
enum CliFailure {
    Usage(String),
    Protocol(String),
    Verification(String),
}

impl std::fmt::Display for CliFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliFailure::Usage(m) => write!(f, "usage error: {m}"),
            CliFailure::Protocol(m) => write!(f, "protocol error: {m}"),
            CliFailure::Verification(m) => write!(f, "verification failure: {m}"),
        }
    }
}

impl std::error::Error for CliFailure {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    CliFailure::Usage(msg.into()).into()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // Help/version requests are success; bad flags are usage errors.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = match e.downcast_ref::<CliFailure>() {
                Some(CliFailure::Usage(_)) => 1,
                Some(CliFailure::Protocol(_)) => 2,
                Some(CliFailure::Verification(_)) => 3,
                // Anything unclassified (I/O, parse) counts as usage.
                None => 1,
            };
            ExitCode::from(code)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Keygen(a) => cmd_keygen(a),
        Cmd::MakeNet(a) => cmd_make_net(a),
        Cmd::Oracle(a) => cmd_oracle(a),
        Cmd::Serve(a) => cmd_serve(a),
        Cmd::Infer(a) => cmd_infer(a),
        Cmd::Bench(a) => bench::cmd_bench(a),
        Cmd::Costmodel(a) => cmd_costmodel(a),
        Cmd::Report(a) => render::cmd_report(a.input, &a.format),
    }
}

fn cmd_keygen(a: KeygenArgs) -> Result<()> {
    let params = util::load_params(&a.params).map_err(|e| usage(format!("{e:#}")))?;
    let role = match a.role.to_ascii_lowercase().as_str() {
        "client" => Owner::Client,
        "server" => Owner::Server,
        other => return Err(usage(format!("role must be client or server, got {other}"))),
    };
    util::write_key(&a.out, role, &params, a.seed)?;
    if let Some(p) = a.emit_params {
        std::fs::write(&p, serde_json::to_vec_pretty(&params)?)?;
    }
    println!("wrote {} key to {}", a.role, a.out.display());
    Ok(())
}

fn cmd_make_net(a: MakeNetArgs) -> Result<()> {
    let template = NetTemplate::parse(&a.template)
        .ok_or_else(|| usage(format!("unknown template {}", a.template)))?;
    let net = nn::gen_random_network::<Scalar>(template, a.seed);
    nn::save_network(&a.out_dir, &net).context("writing fixture")?;
    // A deterministic sample input for demos and smoke tests.
    let dims = net.input;
    let mut vals = Vec::with_capacity(dims.count());
    let mut state = a.seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1);
    for _ in 0..dims.count() {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        let u = ((state >> 33) as f64) / (1u64 << 31) as f64; // [0, 2)
        vals.push(u - 1.0);
    }
    nn::save_tensor(
        &a.out_dir.join("sample_input.chtw"),
        &[dims.height, dims.width, dims.channels],
        &vals,
    )?;
    println!(
        "wrote {} fixture ({} layers) to {}",
        template.name(),
        net.layers.len(),
        a.out_dir.display()
    );
    Ok(())
}

fn load_input(path: &PathBuf, expected: cheetah_core::nn::Dims) -> Result<Tensor<Scalar>> {
    let (dims, data) = nn::load_tensor::<Scalar>(path)?;
    let d = match dims.len() {
        1 => cheetah_core::nn::Dims {
            width: dims[0],
            height: 1,
            channels: 1,
        },
        2 => cheetah_core::nn::Dims {
            width: dims[1],
            height: dims[0],
            channels: 1,
        },
        3 => cheetah_core::nn::Dims {
            width: dims[1],
            height: dims[0],
            channels: dims[2],
        },
        _ => bail!("input tensor must have rank 1..=3"),
    };
    if d != expected {
        return Err(usage(format!(
            "input dims {d:?} do not match network input {expected:?}"
        )));
    }
    Ok(Tensor::new(d, data))
}

fn cmd_oracle(a: OracleArgs) -> Result<()> {
    let net = nn::load_network::<Scalar>(&a.net).map_err(|e| usage(format!("{e}")))?;
    let input = load_input(&a.input, net.input)?;
    let scores = nn::infer_ref(&net, &input).map_err(|e| usage(format!("{e}")))?;
    for s in scores {
        println!("{s}");
    }
    Ok(())
}

fn cmd_serve(a: ServeArgs) -> Result<()> {
    let params = util::load_params(&a.params)?;
    let backend = util::backend_from(a.backend.as_deref())?;
    let engine = util::build_engine(params, backend)?;
    let (key, kf) = util::load_secret_key(&a.key, &engine)?;
    if kf.owner != Owner::Server {
        return Err(usage("serve needs a server key"));
    }
    let net = nn::load_network::<Scalar>(&a.net_dir.join("manifest.json"))?;
    let addr = util::addr_from(a.addr.as_deref());
    let listener = std::net::TcpListener::bind(&addr).with_context(|| format!("binding {addr}"))?;
    eprintln!("serving {} on {addr} ({:?} backend)", net.name, backend);
    let ct_len = engine.params.ciphertext_bytes();
    let run_session = {
        let engine = engine.clone();
        let key = key.clone();
        let net = net.clone();
        move |mut channel: transport::Channel, session_no: u64, seed: u64| {
            match protocol::ServerSession::new(
                engine.clone(),
                key.clone(),
                net.clone(),
                ProtocolConfig::default(),
                seed,
            )
            .and_then(|mut server| protocol::run_server(&mut server, &mut channel))
            {
                Ok(stats) => eprintln!(
                    "session {session_no}: ok ({} online bytes out)",
                    stats.bytes.online_sent
                ),
                Err(e) => eprintln!("session {session_no}: aborted: {e}"),
            }
        }
    };
    let mut session_no = 0u64;
    if a.sessions == 0 {
        // Unbounded mode: one handler thread per connection; sessions are
        // isolated and the engine is shared immutably.
        let run_session = std::sync::Arc::new(run_session);
        loop {
            let channel = transport::serve_once(&listener, ct_len)?;
            session_no += 1;
            let seed = a.seed ^ session_no.wrapping_mul(0x2545f4914f6cdd1d);
            let handler = run_session.clone();
            std::thread::spawn(move || handler(channel, session_no, seed));
        }
    }
    // Bounded mode (tests): serve sequentially, then exit.
    while session_no < a.sessions {
        let channel = transport::serve_once(&listener, ct_len)?;
        session_no += 1;
        let seed = a.seed ^ session_no.wrapping_mul(0x2545f4914f6cdd1d);
        run_session(channel, session_no, seed);
    }
    Ok(())
}

fn cmd_infer(a: InferArgs) -> Result<()> {
    let params = util::load_params(&a.params)?;
    let backend = util::backend_from(a.backend.as_deref())?;
    let engine = util::build_engine(params, backend)?;
    let (key, kf) = util::load_secret_key(&a.key, &engine)?;
    if kf.owner != Owner::Client {
        return Err(usage("infer needs a client key"));
    }
    let arch = nn::load_architecture::<Scalar>(&a.net_manifest_public)?;
    let input = load_input(&a.input, arch.input)?;
    let addr = util::addr_from(a.addr.as_deref());
    let mut channel = transport::connect(&addr, engine.params.ciphertext_bytes())
        .with_context(|| format!("connecting to {addr}"))?;
    let mut client =
        protocol::ClientSession::new(engine, key, arch, ProtocolConfig::default(), a.seed)
            .map_err(|e| CliFailure::Protocol(e.to_string()))?;
    let outcome = protocol::run_client(&mut client, &mut channel, &input)
        .map_err(|e| CliFailure::Protocol(e.to_string()))?;
    for s in &outcome.scores {
        println!("{s}");
    }
    if let Some(path) = a.report {
        std::fs::write(&path, serde_json::to_vec_pretty(&outcome.report)?)?;
        eprintln!("report written to {}", path.display());
    }
    Ok(())
}

fn cmd_costmodel(a: CostmodelArgs) -> Result<()> {
    let layer = costmodel::LayerKind::parse(&a.layer)
        .ok_or_else(|| usage(format!("unknown layer kind {}", a.layer)))?;
    let input = costmodel::CostModelInput {
        layer,
        n: a.n,
        log_q: a.log_q,
        log_p: a.log_p,
        n_i: a.n_i,
        n_o: a.n_o,
        r: a.r,
        c_i: a.c_i,
        c_o: a.c_o,
        c_n: a.c_n,
        i_dim: a.i_dim,
    };
    input.validate().map_err(usage)?;
    let rows = if a.scheme == "all" {
        costmodel::evaluate_all(&input)
    } else {
        let scheme = costmodel::Scheme::parse(&a.scheme)
            .ok_or_else(|| usage(format!("unknown scheme {}", a.scheme)))?;
        costmodel::evaluate(&input, scheme)
            .map(|r| vec![r])
            .ok_or_else(|| {
                usage(format!(
                    "scheme {} does not apply to {:?} layers",
                    a.scheme, layer
                ))
            })?
    };
    if a.json {
        println!("{}", serde_json::to_string_pretty(&rows)?);
    } else {
        print!("{}", costmodel::render_table(&input, &rows));
    }
    Ok(())
}
