use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use oscint::amplitude::AmplitudeSpec;
use oscint::experiments::{run_named, EXPERIMENTS};
use oscint::exponents::{bct_exponent, broad_to_linear, pbar_fn, tables_csv, tables_markdown, Mode};
use oscint::field::{evaluate_grid, evaluate_on, EvalOptions, FastMode, InputFunction, PointSet, Region, XGrid};
use oscint::kbroad::{ball_family, bl_norm, CapField, KBroadConfig};
use oscint::phase::{PhaseDoc, PhaseSpec};
use oscint::variety::partition;
use oscint::wavepacket::decompose;
use serde::Serialize;
use serde_json::{json, Value};

const USAGE_EXIT: u8 = 64;

#[derive(Parser, Debug)]
#[command(name = "oscint", version, about = "Numerical laboratory for oscillatory integral operators")]
struct Cli {
    /// Directory for output files and the run manifest.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Worker thread cap; overrides OSCINT_THREADS.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate T^λ f on sampled points or a grid.
    Evaluate(EvaluateArgs),
    /// Wave-packet decomposition summary.
    Decompose(DecomposeArgs),
    /// k-broad norm over a family of K²-balls.
    Kbroad(KbroadArgs),
    /// Polynomial partition of a weighted point set.
    Partition(PartitionArgs),
    /// Scaling experiments.
    Experiment {
        #[command(subcommand)]
        action: ExperimentAction,
    },
    /// Exact exponent tables and conversions.
    Exponents {
        #[command(subcommand)]
        action: ExponentAction,
    },
}

#[derive(Args, Debug, Serialize)]
struct Common {
    /// Phase JSON document; the paraboloid in dimension `--n` when omitted.
    #[arg(long)]
    phase: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    n: usize,
    #[arg(long, default_value_t = 64.0)]
    lambda: f64,
    /// `zero`, `bump`, or a JSON file holding an input function.
    #[arg(long, default_value = "bump")]
    f: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args, Debug, Serialize)]
struct EvaluateArgs {
    #[command(flatten)]
    common: Common,
    /// Stratified draws over the ball's bounding box; draws outside the ball are dropped.
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    /// Radius of the sampled ball, as a multiple of λ.
    #[arg(long, default_value_t = 0.25)]
    radius_factor: f64,
    /// Evaluate on a grid of this step over the same ball's bounding box instead of sampling.
    #[arg(long)]
    grid_step: Option<f64>,
    #[arg(long, value_enum, default_value_t = Fast::Off)]
    fast_transform: Fast,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
enum Fast {
    On,
    Off,
    Audit,
}

#[derive(Args, Debug, Serialize)]
struct DecomposeArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long = "R", default_value_t = 64.0)]
    r: f64,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
}

#[derive(Args, Debug, Serialize)]
struct KbroadArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long = "A", default_value_t = 1)]
    a: usize,
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    #[arg(long = "K", default_value_t = 4.0)]
    k_scale: f64,
    #[arg(long, default_value_t = 500)]
    frames: usize,
    /// Balls tile the cube `[-half, half]^n` with `half = radius_factor·λ`.
    #[arg(long, default_value_t = 0.25)]
    radius_factor: f64,
    #[arg(long, default_value_t = 3)]
    per_axis: usize,
}

#[derive(Args, Debug, Serialize)]
struct PartitionArgs {
    /// CSV with a header; columns are coordinates, plus an optional `weight` column.
    #[arg(long)]
    points: PathBuf,
    #[arg(long, default_value_t = 2)]
    degree: u32,
}

#[derive(Subcommand, Debug)]
enum ExperimentAction {
    /// List experiment names.
    List,
    /// Run an experiment; flags override fields of the config file.
    Run {
        name: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        lambdas: Option<Vec<f64>>,
        #[arg(long)]
        seed: Option<u64>,
        /// Report file name inside the output directory.
        #[arg(long, default_value = "report.json")]
        out: String,
    },
}

#[derive(Subcommand, Debug)]
enum ExponentAction {
    /// Endpoint and (m, σ) tables for 2 ≤ n ≤ n_max.
    Table {
        #[arg(long, default_value_t = 20)]
        n_max: u32,
        #[arg(long, value_enum, default_value_t = TableFormat::Markdown)]
        format: TableFormat,
    },
    /// Convert k-broad exponents into a linear exponent.
    Convert {
        #[arg(long)]
        n: u32,
        #[arg(long, value_enum, default_value_t = ConvertMode::Pd)]
        mode: ConvertMode,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TableFormat {
    Markdown,
    Csv,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ConvertMode {
    Pd,
    General,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Core(#[from] oscint::Error),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Input(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) => e.exit_code() as u8,
            _ => 2,
        }
    }
}

type Res<T> = std::result::Result<T, CliError>;

#[derive(Serialize)]
struct RunManifest {
    command: String,
    config: Value,
    seeds: Vec<u64>,
    version: &'static str,
    started: f64,
    finished: f64,
    outputs: Vec<String>,
}

fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

fn read(path: &Path) -> Res<String> {
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("cannot read {}: {}", path.display(), e)))
}

struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn write(&mut self, name: &str, body: &str) -> Res<()> {
        let p = self.dir.join(name);
        fs::write(&p, body).map_err(|e| CliError::Io(format!("cannot write {}: {}", p.display(), e)))?;
        self.files.push(p.display().to_string());
        Ok(())
    }
}

fn load_phase(c: &Common) -> Res<PhaseSpec> {
    match &c.phase {
        Some(p) => {
            let doc: PhaseDoc = serde_json::from_str(&read(p)?).map_err(|e| CliError::Input(format!("phase document: {}", e)))?;
            Ok(doc.build()?)
        }
        None => Ok(PhaseSpec::paraboloid(c.n)),
    }
}

fn load_input(spec: &str, dim: usize) -> Res<InputFunction> {
    match spec {
        "zero" => Ok(InputFunction::Zero { dim }),
        "bump" => Ok(InputFunction::bump(vec![0.0; dim], 0.5)),
        path => serde_json::from_str(&read(Path::new(path))?).map_err(|e| CliError::Input(format!("input function: {}", e))),
    }
}

fn evaluate_cmd(a: &EvaluateArgs, out: &mut Outputs) -> Res<()> {
    let phase = load_phase(&a.common)?;
    let n = phase.n;
    let f = load_input(&a.common.f, n - 1)?;
    let amp = AmplitudeSpec::constant_one(phase.omega_radius);
    let lambda = a.common.lambda;
    let radius = a.radius_factor * lambda;
    let fast = match a.fast_transform {
        Fast::On => FastMode::On,
        Fast::Off => FastMode::Off,
        Fast::Audit => FastMode::Audit,
    };
    let opts = EvalOptions { spacing: None, fast };
    if let Some(step) = a.grid_step {
        let cnt = (2.0 * radius / step).floor() as usize + 1;
        let xn: Vec<f64> = (0..cnt).map(|i| -radius + i as f64 * step).collect();
        let grid = XGrid { start: vec![-radius; n - 1], step, counts: vec![cnt; n - 1], xn };
        let ge = evaluate_grid(&phase, &amp, lambda, &f, &grid, &opts)?;
        let mut s = String::new();
        for i in 1..=n {
            s.push_str(&format!("x{},", i));
        }
        s.push_str("re,im\n");
        for (x, v) in grid.points().iter().zip(&ge.values) {
            for c in x {
                s.push_str(&format!("{:e},", c));
            }
            s.push_str(&format!("{:e},{:e}\n", v.re, v.im));
        }
        out.write("field.csv", &s)?;
        let header = json!({"lambda": lambda, "grid": grid, "lattice_spacing": ge.lattice_spacing, "used_fast": ge.used_fast, "audit_error": ge.audit_error, "seed": a.common.seed});
        out.write("field.json", &serde_json::to_string_pretty(&header).expect("json"))?;
    } else {
        let pts = PointSet::stratified(Region::Ball { center: vec![0.0; n], radius }, a.samples, a.common.seed)?;
        let field = evaluate_on(&phase, &amp, lambda, &f, pts, &opts)?;
        out.write("field.csv", &field.to_csv())?;
        let mut header = field.header_json();
        header["seed"] = json!(a.common.seed);
        out.write("field.json", &serde_json::to_string_pretty(&header).expect("json"))?;
    }
    Ok(())
}

fn decompose_cmd(a: &DecomposeArgs, out: &mut Outputs) -> Res<()> {
    let phase = load_phase(&a.common)?;
    let f = load_input(&a.common.f, phase.n - 1)?;
    let d = decompose(&f, a.r, a.delta, a.common.lambda)?;
    out.write("decomposition.csv", &d.summary_csv(&phase, a.common.lambda))?;
    println!("packets={} residual={:e} orthogonality={:.4} f_norm={:e}", d.packets.len(), d.residual, d.orthogonality_defect, d.f_norm);
    Ok(())
}

fn kbroad_cmd(a: &KbroadArgs, out: &mut Outputs) -> Res<()> {
    let phase = load_phase(&a.common)?;
    let n = phase.n;
    let f = load_input(&a.common.f, n - 1)?;
    let amp = AmplitudeSpec::constant_one(phase.omega_radius);
    let half = a.radius_factor * a.common.lambda;
    let balls = ball_family(n, -half, half, a.k_scale, a.per_axis)?;
    let cf = CapField::from_operator(&phase, &amp, a.common.lambda, &f, a.k_scale, balls, &EvalOptions::default())?;
    let cfg = KBroadConfig::new(n, a.k, a.a, a.p, a.k_scale, a.frames, a.common.seed)?;
    let r = bl_norm(&cf, None, &cfg)?;
    out.write("kbroad.csv", &r.to_csv())?;
    println!("BL={:e}", r.value);
    Ok(())
}

fn partition_cmd(a: &PartitionArgs, out: &mut Outputs) -> Res<()> {
    let text = read(&a.points)?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines.next().ok_or_else(|| CliError::Input("empty point file".into()))?.split(',').map(|s| s.trim()).collect();
    let wcol = header.iter().position(|h| *h == "weight");
    let mut pts = Vec::new();
    let mut weights = Vec::new();
    for (i, l) in lines.enumerate() {
        let vals: Vec<f64> = l.split(',').map(|s| s.trim().parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|e| CliError::Input(format!("line {}: {}", i + 2, e)))?;
        if vals.len() != header.len() {
            return Err(CliError::Input(format!("line {}: expected {} columns", i + 2, header.len())));
        }
        weights.push(wcol.map(|c| vals[c]).unwrap_or(1.0));
        pts.push(vals.iter().enumerate().filter(|(j, _)| Some(*j) != wcol).map(|(_, v)| *v).collect::<Vec<f64>>());
    }
    let p = partition(&pts, &weights, a.degree)?;
    out.write("partition.csv", &p.to_csv())?;
    println!("degree={} cells={} nonempty_ratio={:.3}", p.degree, p.cells.len(), p.nonempty_ratio());
    Ok(())
}

fn experiment_cmd(action: &ExperimentAction, out: &mut Outputs, seeds: &mut Vec<u64>) -> Res<Value> {
    match action {
        ExperimentAction::List => {
            for e in EXPERIMENTS {
                println!("{}", e);
            }
            Ok(Value::Null)
        }
        ExperimentAction::Run { name, config, n, lambdas, seed, out: report } => {
            let name = name.replace('_', "-");
            let mut cfg: Value = match config {
                Some(p) => serde_json::from_str(&read(p)?).map_err(|e| CliError::Input(format!("config: {}", e)))?,
                None => json!({}),
            };
            if !cfg.is_object() {
                return Err(CliError::Input("config must be a JSON object".into()));
            }
            if let Some(n) = n {
                cfg["n"] = json!(n);
            }
            if let Some(l) = lambdas {
                cfg["lambdas"] = json!(l);
            }
            if let Some(s) = seed {
                cfg["seed"] = json!(s);
            }
            let rep = run_named(&name, cfg.clone())?;
            seeds.push(rep.seed);
            out.write(report, &serde_json::to_string_pretty(&rep).expect("json"))?;
            let csv_name = Path::new(report).with_extension("csv").display().to_string();
            out.write(&csv_name, &rep.to_csv())?;
            match (rep.slope(), rep.pass) {
                (Some(s), Some(p)) => println!("{}: slope {:.4} expected {:?} pass {}", name, s, rep.expected, p),
                (Some(s), None) => println!("{}: slope {:.4}", name, s),
                _ => println!("{}: no fit ({})", name, rep.flags.join("; ")),
            }
            Ok(json!({"experiment": name, "config": cfg}))
        }
    }
}

fn exponents_cmd(action: &ExponentAction, out: &mut Outputs) -> Res<Value> {
    match action {
        ExponentAction::Table { n_max, format } => {
            let (text, file) = match format {
                TableFormat::Markdown => (tables_markdown(*n_max)?, "exponents.md"),
                TableFormat::Csv => (tables_csv(*n_max)?, "exponents.csv"),
            };
            print!("{}", text);
            out.write(file, &text)?;
            Ok(json!({"n_max": n_max, "format": format!("{:?}", format)}))
        }
        ExponentAction::Convert { n, mode } => {
            let c = match mode {
                ConvertMode::Pd => broad_to_linear(*n, &pbar_fn(*n), Mode::PositiveDefinite)?,
                ConvertMode::General => broad_to_linear(*n, &bct_exponent, Mode::General)?,
            };
            let body = serde_json::to_string_pretty(&c).expect("json");
            match (c.k_star(), c.p_linear()) {
                (Some(k), Some(p)) => println!("k*={} p={}", k, p),
                _ => println!("no linear range"),
            }
            out.write("conversion.json", &body)?;
            Ok(json!({"n": n, "mode": format!("{:?}", mode)}))
        }
    }
}

fn run(cli: Cli) -> Res<()> {
    let threads = cli.threads.or_else(|| std::env::var("OSCINT_THREADS").ok().and_then(|v| v.parse().ok()));
    if let Some(t) = threads {
        rayon::ThreadPoolBuilder::new().num_threads(t.max(1)).build_global().map_err(|e| CliError::Input(e.to_string()))?;
    }
    fs::create_dir_all(&cli.out_dir).map_err(|e| CliError::Io(format!("cannot create {}: {}", cli.out_dir.display(), e)))?;
    let started = now();
    let mut out = Outputs { dir: cli.out_dir.clone(), files: Vec::new() };
    let mut seeds = Vec::new();
    let (name, config) = match &cli.command {
        Command::Evaluate(a) => {
            evaluate_cmd(a, &mut out)?;
            seeds.push(a.common.seed);
            ("evaluate", serde_json::to_value(a).expect("json"))
        }
        Command::Decompose(a) => {
            decompose_cmd(a, &mut out)?;
            ("decompose", serde_json::to_value(a).expect("json"))
        }
        Command::Kbroad(a) => {
            kbroad_cmd(a, &mut out)?;
            seeds.push(a.common.seed);
            ("kbroad", serde_json::to_value(a).expect("json"))
        }
        Command::Partition(a) => {
            partition_cmd(a, &mut out)?;
            ("partition", serde_json::to_value(a).expect("json"))
        }
        Command::Experiment { action } => ("experiment", experiment_cmd(action, &mut out, &mut seeds)?),
        Command::Exponents { action } => ("exponents", exponents_cmd(action, &mut out)?),
    };
    if out.files.is_empty() {
        return Ok(());
    }
    let manifest = RunManifest { command: name.into(), config, seeds, version: env!("CARGO_PKG_VERSION"), started, finished: now(), outputs: out.files.clone() };
    let body = serde_json::to_string_pretty(&manifest).expect("json");
    out.write("manifest.json", &body)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { USAGE_EXIT } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::from(e.exit_code())
        }
    }
}
