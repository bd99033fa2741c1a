//! `zkpot`: proofs, matching, test vectors, scenario synthesis, simulation
//! and curve fitting from the command line.
//!
//! Exit status is 0 on success or a match, 1 when `match` finds no match,
//! and 2 for usage, validation and input errors.

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use zkpot::crypto::{generate_vectors, write_vectors};
use zkpot::sim::{
    event_log, fit_log, fit_points, parse_metrics_csv, run_fcd_stream, run_simulation, station_csv,
    synth_scenario, write_fcd, FcdFormat, FcdOptions, FcdReader, Formation, StationSummary,
    TickMetrics, METRICS_HEADER,
};
use zkpot::wire::{decode_proof_entry, encode_proof_entry, prefix_of};
use zkpot::{
    canonicalize_shared_secret, make_proof, recover_key, ProofEntry, Pseudonym, SharedSecret,
    SimParams, WorkFactor,
};

#[derive(Parser)]
#[command(
    name = "zkpot",
    version,
    about = "Zero-knowledge proof of traffic: proofs and simulations"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print a 70-byte proof entry (object id 0) as hex.
    Prove(ProveArgs),
    /// Check whether two proof entries prove the same vehicle.
    Match(MatchArgs),
    /// Write a crypto test-vector file.
    Vectors(VectorsArgs),
    /// Write a synthetic scenario as FCD.
    Synth(SynthArgs),
    /// Run the traffic simulation.
    Simulate(Box<SimulateArgs>),
    /// Fit cp_rate = a ln(total) + b over metrics CSV files.
    Fit(FitArgs),
}

#[derive(Args)]
struct ProveArgs {
    /// Target pseudonym, 32 hex characters.
    #[arg(long, required_unless_present = "secret_hex", requires = "plate")]
    target: Option<String>,
    /// Target number plate; case, spaces and dashes are ignored.
    #[arg(long)]
    plate: Option<String>,
    /// Raw shared secret as hex, instead of --target and --plate.
    #[arg(long, conflicts_with_all = ["target", "plate"])]
    secret_hex: Option<String>,
    /// Prover pseudonym, 32 hex characters.
    #[arg(long)]
    prover: String,
    #[arg(long, default_value_t = 1)]
    wf: u32,
}

#[derive(Args)]
struct MatchArgs {
    #[arg(long)]
    entry_a: String,
    #[arg(long)]
    sender_a: String,
    #[arg(long)]
    entry_b: String,
    #[arg(long)]
    sender_b: String,
}

#[derive(Args)]
struct VectorsArgs {
    #[arg(long, default_value_t = 24)]
    count: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    wf: u32,
    /// Output file; standard output when absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Xml,
}

impl From<FormatArg> for FcdFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => FcdFormat::Csv,
            FormatArg::Xml => FcdFormat::Xml,
        }
    }
}

#[derive(Args)]
struct SynthShape {
    /// line, grid or ring.
    #[arg(long, default_value = "grid")]
    formation: Formation,
    #[arg(long, default_value_t = 10.0)]
    spacing: f64,
    #[arg(long, default_value_t = 30)]
    ticks: usize,
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    shape: SynthShape,
    #[arg(long)]
    vehicles: usize,
    #[arg(long, default_value_t = zkpot::sim::DEFAULT_SEED)]
    seed: u64,
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

/// Per-parameter overrides, applied after `--params` and `--set`.
#[derive(Args, Default)]
struct ParamFlags {
    #[arg(long)]
    perception_m: Option<f64>,
    #[arg(long)]
    fov_deg: Option<f64>,
    #[arg(long)]
    comm_range_m: Option<f64>,
    #[arg(long)]
    comm_delay_ms: Option<u64>,
    #[arg(long)]
    cadence_ms: Option<u64>,
    #[arg(long)]
    wf: Option<u32>,
    #[arg(long)]
    quota_limit: Option<usize>,
    #[arg(long)]
    ttl_ms: Option<u64>,
    #[arg(long)]
    ttl_confirmed_ms: Option<u64>,
    #[arg(long)]
    confirm_threshold: Option<usize>,
    /// Whether a station's own sighting counts toward confirmation.
    #[arg(long)]
    local_counts: Option<bool>,
    /// Count a vehicle as observed if anyone saw it within this many ms.
    #[arg(long, visible_alias = "window")]
    observed_window_ms: Option<u64>,
}

#[derive(Args)]
struct SimulateArgs {
    /// SUMO FCD trace, XML or CSV; streamed tick by tick.
    #[arg(long, conflicts_with = "synth", required_unless_present = "synth")]
    fcd: Option<PathBuf>,
    /// Synthetic formation instead of a trace.
    #[arg(long)]
    synth: Option<Formation>,
    /// Vehicle counts for --synth; several values run a sweep.
    #[arg(long, value_delimiter = ',', default_value = "25")]
    vehicles: Vec<usize>,
    #[arg(long, default_value_t = 10.0)]
    spacing: f64,
    #[arg(long, default_value_t = 30)]
    ticks: usize,
    /// Keep every vehicle type in the trace, not only passenger cars.
    #[arg(long)]
    all_types: bool,
    /// Skip trace ticks before this time (seconds).
    #[arg(long)]
    begin: Option<f64>,
    /// Stop the trace at this time (seconds).
    #[arg(long)]
    end: Option<f64>,
    /// Parameter file of `key = value` lines.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Extra `key=value` parameter, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Identity seed: changes pseudonyms and plates, never geometry.
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    flags: ParamFlags,
    /// Metrics CSV; standard output when absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Event log.
    #[arg(long)]
    events: Option<PathBuf>,
    /// Per-station totals.
    #[arg(long)]
    stations: Option<PathBuf>,
    /// Fit the log curve over the run's (total, cp_rate) points.
    #[arg(long)]
    fit: bool,
    /// Where the fit report goes; standard error when absent.
    #[arg(long, requires = "fit")]
    fit_out: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    /// Metrics CSV files written by `simulate`.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::Prove(a) => prove(a),
        Command::Match(a) => match_entries(a),
        Command::Vectors(a) => vectors(a),
        Command::Synth(a) => synth(a),
        Command::Simulate(a) => simulate(*a),
        Command::Fit(a) => fit(a),
    }
}

fn pseudonym(text: &str, what: &str) -> Result<Pseudonym> {
    text.trim()
        .parse()
        .with_context(|| format!("{what}: not a 16-byte non-zero pseudonym in hex"))
}

fn work_factor(wf: u32) -> Result<WorkFactor> {
    WorkFactor::new(wf).context("wf must be at least 1")
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) if p.as_os_str() != "-" => {
            let f = File::create(p).with_context(|| format!("cannot create {}", p.display()))?;
            Box::new(BufWriter::new(f))
        }
        _ => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn prove(a: ProveArgs) -> Result<ExitCode> {
    let prover = pseudonym(&a.prover, "prover")?;
    let wf = work_factor(a.wf)?;
    let (ss, prefix) = match (&a.secret_hex, &a.target, &a.plate) {
        (Some(hex_ss), _, _) => {
            let bytes = hex::decode(hex_ss.trim()).context("secret-hex is not hex")?;
            let ss = SharedSecret::from_bytes(bytes).context("secret must not be empty")?;
            (ss, [0; 4])
        }
        (None, Some(target), Some(plate)) => {
            let target = pseudonym(target, "target")?;
            let ss = canonicalize_shared_secret(&target, plate).context("plate")?;
            (ss, prefix_of(&target))
        }
        _ => bail!("give --target with --plate, or --secret-hex"),
    };
    let entry = ProofEntry {
        object_id: 0,
        prefix,
        sig: make_proof(&ss, &prover, wf),
    };
    println!("{}", hex::encode(encode_proof_entry(&entry)?));
    Ok(ExitCode::SUCCESS)
}

fn match_entries(a: MatchArgs) -> Result<ExitCode> {
    let decode = |text: &str, what: &str| -> Result<ProofEntry> {
        let bytes = hex::decode(text.trim()).with_context(|| format!("{what}: not hex"))?;
        decode_proof_entry(&bytes).with_context(|| format!("{what}: not a proof entry"))
    };
    let (ea, eb) = (
        decode(&a.entry_a, "entry-a")?,
        decode(&a.entry_b, "entry-b")?,
    );
    let (sa, sb) = (
        pseudonym(&a.sender_a, "sender-a")?,
        pseudonym(&a.sender_b, "sender-b")?,
    );
    let ka = recover_key(&sa, &ea.sig).ok();
    let kb = recover_key(&sb, &eb.sig).ok();
    let matched = sa != sb && ka.is_some() && ka == kb;
    let show =
        |k: Option<zkpot::PublicKey>| k.map_or("recovery-failed".to_string(), |k| k.to_hex());
    println!("{}", if matched { "MATCH" } else { "NO-MATCH" });
    println!("key_a {}", show(ka));
    println!("key_b {}", show(kb));
    Ok(if matched {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn vectors(a: VectorsArgs) -> Result<ExitCode> {
    let v = generate_vectors(a.count, a.seed, work_factor(a.wf)?);
    let mut out = output(a.out.as_deref())?;
    write_vectors(&mut out, &v)?;
    out.flush()?;
    Ok(ExitCode::SUCCESS)
}

fn synth(a: SynthArgs) -> Result<ExitCode> {
    let s = synth_scenario(
        a.shape.formation,
        a.vehicles,
        a.shape.spacing,
        a.shape.ticks,
        a.seed,
    )?;
    let mut out = output(a.out.as_deref())?;
    write_fcd(&s, a.format.into(), &mut out)?;
    out.flush()?;
    Ok(ExitCode::SUCCESS)
}

fn seconds_to_ms(s: f64, what: &str) -> Result<u64> {
    if !(s.is_finite() && s >= 0.0) {
        bail!("{what} must be a non-negative number of seconds");
    }
    Ok((s * 1000.0).round() as u64)
}

fn build_params(a: &SimulateArgs) -> Result<SimParams> {
    let mut p = SimParams::default();
    if let Some(path) = &a.params {
        let text =
            fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        p.apply_file(&text)
            .with_context(|| format!("in {}", path.display()))?;
    }
    for kv in &a.sets {
        let (k, v) = kv
            .split_once('=')
            .with_context(|| format!("--set expects KEY=VALUE, got {kv:?}"))?;
        p.set(k, v)?;
    }
    let f = &a.flags;
    macro_rules! apply {
        ($($field:ident => $target:expr),* $(,)?) => {
            $(if let Some(v) = f.$field { $target = v; })*
        };
    }
    apply! {
        perception_m => p.perception_m,
        fov_deg => p.fov_deg,
        comm_range_m => p.comm_range_m,
        comm_delay_ms => p.comm_delay_ms,
        cadence_ms => p.cadence_ms,
        quota_limit => p.verifier.quota_limit,
        ttl_ms => p.verifier.ttl_ms,
        ttl_confirmed_ms => p.verifier.ttl_confirmed_ms,
        confirm_threshold => p.verifier.confirm_threshold,
        local_counts => p.verifier.local_counts,
        observed_window_ms => p.observed_window_ms,
    }
    if let Some(wf) = f.wf {
        p.wf = work_factor(wf)?;
    }
    if let Some(seed) = a.seed {
        p.seed = seed;
    }
    p.validate()?;
    Ok(p)
}

/// Where each tick's results go while the simulation runs.
struct Sinks {
    metrics: Box<dyn Write>,
    events: Option<Box<dyn Write>>,
    points: Vec<(f64, f64)>,
}

impl Sinks {
    fn tick(&mut self, m: &TickMetrics, events: &[zkpot::Event]) -> io::Result<()> {
        writeln!(self.metrics, "{}", m.to_csv_row())?;
        if let Some(w) = &mut self.events {
            w.write_all(event_log(events).as_bytes())?;
        }
        self.points.extend(fit_points(std::slice::from_ref(m)));
        Ok(())
    }
}

fn simulate(a: SimulateArgs) -> Result<ExitCode> {
    let p = build_params(&a)?;
    let mut sinks = Sinks {
        metrics: output(a.out.as_deref())?,
        events: a.events.as_deref().map(|e| output(Some(e))).transpose()?,
        points: Vec::new(),
    };
    writeln!(sinks.metrics, "{METRICS_HEADER}")?;
    let mut stations: Vec<StationSummary> = Vec::new();

    if let Some(path) = &a.fcd {
        let opts = FcdOptions {
            seed: p.seed,
            sedans_only: !a.all_types,
            begin_ms: a.begin.map(|s| seconds_to_ms(s, "begin")).transpose()?,
            end_ms: a.end.map(|s| seconds_to_ms(s, "end")).transpose()?,
        };
        let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
        let reader = FcdReader::new(BufReader::new(file), opts)?;
        stations = run_fcd_stream(reader, &p, |r| {
            sinks.tick(&r.metrics, &r.events).map_err(Into::into)
        })
        .with_context(|| format!("in {}", path.display()))?;
    } else if let Some(formation) = a.synth {
        for &n in &a.vehicles {
            let s = synth_scenario(formation, n, a.spacing, a.ticks, p.seed)?;
            let out = run_simulation(&s, &p)?;
            for m in &out.metrics {
                sinks.tick(m, &[])?;
            }
            if let Some(w) = &mut sinks.events {
                w.write_all(out.event_log().as_bytes())?;
            }
            stations.extend(out.stations);
        }
    }
    sinks.metrics.flush()?;
    if let Some(w) = &mut sinks.events {
        w.flush()?;
    }
    if let Some(path) = &a.stations {
        let mut w = output(Some(path))?;
        w.write_all(station_csv(&stations).as_bytes())?;
        w.flush()?;
    }
    if a.fit {
        let report = fit_log(&sinks.points).context("fit")?.report();
        match &a.fit_out {
            Some(path) => fs::write(path, report)
                .with_context(|| format!("cannot write {}", path.display()))?,
            None => eprint!("{report}"),
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn fit(a: FitArgs) -> Result<ExitCode> {
    let mut points = Vec::new();
    for path in &a.inputs {
        let text =
            fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        let rows = parse_metrics_csv(&text).with_context(|| format!("in {}", path.display()))?;
        points.extend(fit_points(&rows));
    }
    let report = fit_log(&points)?.report();
    let mut out = output(a.out.as_deref())?;
    out.write_all(report.as_bytes())?;
    out.flush()?;
    Ok(ExitCode::SUCCESS)
}
