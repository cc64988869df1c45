//! `besov-pdo` command-line front end.
//!
//! Exit codes: 0 on success, 1 when arguments or configuration are
//! invalid, 2 when a computation fails (including failed verifications and
//! experiments whose verdict is `fail`).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use besov_pdo::exponents::{check_smoothness_conditions, critical_order, to_f64, ExponentProfile};
use besov_pdo::experiments::{
    default_profile, run_band_decay, run_embedding_suite, run_keyprop_ratio, run_sharpness_s,
    run_sharpness_sj, run_wainger_contrast, BandDecayConfig, EmbeddingConfig, ExperimentReport,
    KeypropConfig, SharpnessConfig, SharpnessSjConfig, WaingerContrastConfig,
};
use besov_pdo::extremal::{
    coefficient_sum_per_nu, coefficient_sum_total, enumerate_d, make_wainger, SumWeights, Variant,
    WaingerParams,
};
use besov_pdo::operator::{apply_direct, apply_via_expansion, make_plan, ExpansionConfig};
use besov_pdo::partitions::{
    levels_for_grid, make_lp_family, make_uniform_window, verify_family, verify_window,
    FamilyKind, UniformKind, WindowVariant,
};
use besov_pdo::spaces::{
    besov_norm, lq_norm, BlockNorm, MaximalConfig, NormContext, NormRequest, Space,
};
use besov_pdo::symbols::{make_test_symbol, TestSymbolSpec};
use besov_pdo::{Error as CoreError, GridFunction, GridSpec};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

// Writes to stdout, ignoring errors so a closed pipe ends output quietly.
macro_rules! out {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}

macro_rules! out_raw {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = write!(std::io::stdout().lock(), $($arg)*);
    }};
}

#[derive(Debug)]
enum Failure {
    Validation(String),
    Computation(String),
}

type Outcome<T> = std::result::Result<T, Failure>;

impl From<CoreError> for Failure {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Config(_)
            | CoreError::Parse(_)
            | CoreError::Contract(_)
            | CoreError::Index { .. }
            | CoreError::Json(_)
            | CoreError::Io(_) => Failure::Validation(e.to_string()),
            _ => Failure::Computation(e.to_string()),
        }
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure::Validation(msg.into())
}

#[derive(Parser, Debug)]
#[command(name = "besov-pdo", version, about = "Multilinear pseudo-differential operators on a periodic grid")]
struct Cli {
    /// JSON configuration; command-line flags take precedence over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Validate and print the resolved configuration without computing.
    #[arg(long, global = true)]
    dry_run: bool,
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Critical order and smoothness conditions of an exponent profile.
    Exponents {
        #[command(subcommand)]
        action: ExponentsAction,
    },
    /// Evaluate a quasi-norm of a sequence or a grid function.
    Norm(NormArgs),
    /// Build or verify Littlewood–Paley families and uniform windows.
    Windows {
        #[command(subcommand)]
        action: WindowsAction,
    },
    /// Apply a multilinear operator.
    Op {
        #[command(subcommand)]
        action: OpAction,
    },
    /// Lacunary test functions and shell lattices.
    Extremal {
        #[command(subcommand)]
        action: ExtremalAction,
    },
    /// Run a measurement study.
    Experiment(ExperimentArgs),
}

#[derive(Args, Debug, Default)]
struct ProfileArgs {
    #[arg(long = "N")]
    multilinearity: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<String>,
    /// Comma-separated.
    #[arg(long = "p-j")]
    p_j: Option<String>,
    #[arg(long)]
    q: Option<String>,
    #[arg(long = "q-j")]
    q_j: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    s: Option<String>,
    #[arg(long = "s-j", allow_hyphen_values = true)]
    s_j: Option<String>,
}

#[derive(Subcommand, Debug)]
enum ExponentsAction {
    /// Print the critical order m.
    Critical(ProfileArgs),
    /// Print the smoothness and Hölder conditions as JSON.
    Check(ProfileArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SpaceArg {
    Lq,
    Lp,
    Besov,
    BesovHp,
    LocalHardy,
    Bmo,
    Wiener,
    BandSup,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BlockArg {
    Lp,
    Hp,
}

#[derive(Args, Debug)]
struct NormArgs {
    #[arg(long)]
    space: SpaceArg,
    #[arg(long)]
    p: Option<String>,
    #[arg(long)]
    q: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    s: Option<f64>,
    /// Block norm of the Besov estimator.
    #[arg(long)]
    block: Option<BlockArg>,
    /// Comma-separated sequence for `--space lq`.
    #[arg(long)]
    seq: Option<String>,
    /// `.gridfn` input for function spaces.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Window family for Besov-type norms.
    #[arg(long, default_value = "sharp_lp")]
    family: String,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum UniformArg {
    Phi,
    PhiTilde,
    Kappa,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum VariantArg {
    S3,
    S4,
}

#[derive(Args, Debug)]
struct WindowArgs {
    /// Dyadic family: generic_lp, sharp_lp or sharp_lp_tilde.
    #[arg(long, conflicts_with = "window")]
    family: Option<String>,
    /// Uniform window instead of a dyadic family.
    #[arg(long)]
    window: Option<UniformArg>,
    #[arg(long, default_value = "s3")]
    variant: VariantArg,
    /// Largest level `K` (defaults to full grid coverage).
    #[arg(long)]
    levels: Option<usize>,
    #[arg(long, default_value_t = 1)]
    n: usize,
    #[arg(long, default_value_t = 1024)]
    points: usize,
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    /// CSV output for `make`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum WindowsAction {
    /// Tabulate windows on the grid frequencies as CSV.
    Make(WindowArgs),
    /// Check the defining properties; prints a JSON report.
    Verify(WindowArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    Direct,
    Expansion,
}

#[derive(Subcommand, Debug)]
enum OpAction {
    /// `T_σ(f_1, …, f_N)`.
    Apply {
        /// Symbol JSON (constant, separable, oscillatory_x or bracket).
        #[arg(long)]
        symbol: Option<PathBuf>,
        #[arg(long, num_args = 1..)]
        inputs: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "direct")]
        method: MethodArg,
        #[arg(long)]
        radius: Option<usize>,
        #[arg(long)]
        quadrature: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SumMode {
    Total,
    PerNu,
}

#[derive(Args, Debug)]
struct LatticeArgs {
    #[arg(long, default_value = "nec1")]
    variant: String,
    #[arg(long)]
    ell: Option<u32>,
    #[arg(long, default_value_t = 0.5)]
    delta: f64,
    #[arg(long, default_value_t = 0)]
    gap: u32,
    #[arg(long = "N", default_value_t = 2)]
    multilinearity: usize,
    #[arg(long, default_value_t = 1)]
    n: usize,
}

#[derive(Subcommand, Debug)]
enum ExtremalAction {
    /// Sample `f_{a,b,ε}` on a grid.
    Wainger {
        #[arg(long)]
        a: Option<f64>,
        #[arg(long)]
        b: Option<f64>,
        #[arg(long, default_value_t = 0.0)]
        eps: f64,
        #[arg(long = "v-max")]
        v_max: Option<f64>,
        #[arg(long, default_value = "2")]
        p: String,
        #[arg(long, default_value_t = 1)]
        n: usize,
        #[arg(long, default_value_t = 1024)]
        points: usize,
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the members of `D_ℓ` as CSV.
    Enumerate {
        #[command(flatten)]
        lattice: LatticeArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Weighted coefficient sums over `D_ℓ`.
    Sum {
        #[command(flatten)]
        lattice: LatticeArgs,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        order: f64,
        /// Comma-separated `b_1..b_N`.
        #[arg(long, allow_hyphen_values = true)]
        decay: Option<String>,
        #[arg(long, default_value_t = 0.0)]
        eps: f64,
        #[arg(long, value_enum, default_value = "total")]
        mode: SumMode,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ExperimentKind {
    SharpnessS,
    SharpnessSj,
    Keyprop,
    BandDecay,
    Embeddings,
    WaingerContrast,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    kind: ExperimentKind,
    /// CSV output (rows); the JSON report goes next to it.
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON report path (defaults to the CSV path with a `.json` extension).
    #[arg(long)]
    json: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Levels as `lo..hi` (inclusive) or a comma-separated list.
    #[arg(long)]
    levels: Option<String>,
    /// Extra overrides `key=json`, applied after the config file.
    #[arg(long = "set", value_name = "KEY=JSON")]
    overrides: Vec<String>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp
                | ErrorKind::DisplayVersion
                | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be positive");
            return ExitCode::from(1);
        }
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Computation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn read_config(path: &Option<PathBuf>) -> Outcome<Value> {
    match path {
        None => Ok(Value::Object(Default::default())),
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| invalid(format!("cannot read --config {}: {e}", p.display())))?;
            let value: Value = serde_json::from_str(&text)
                .map_err(|e| invalid(format!("--config {}: {e}", p.display())))?;
            if !value.is_object() {
                return Err(invalid("--config must hold a JSON object"));
            }
            Ok(value)
        }
    }
}

fn dispatch(cli: &Cli) -> Outcome<()> {
    let config = read_config(&cli.config)?;
    match &cli.command {
        Command::Exponents { action } => exponents(action, config, cli.dry_run),
        Command::Norm(args) => norm(args, config, cli.dry_run),
        Command::Windows { action } => windows(action, cli.dry_run),
        Command::Op { action } => op(action, config, cli.dry_run),
        Command::Extremal { action } => extremal(action, cli.dry_run),
        Command::Experiment(args) => experiment(args, config, cli.dry_run),
    }
}

fn split_list(text: &str) -> Vec<Value> {
    text.split(',').map(|t| Value::String(t.trim().to_string())).collect()
}

fn resolve_profile(args: &ProfileArgs, config: Value) -> Outcome<ExponentProfile> {
    let mut base = match config.get("profile") {
        Some(p) => p.clone(),
        None if config.as_object().is_some_and(|o| !o.is_empty()) => config,
        None => serde_json::to_value(default_profile()).expect("profile serializes"),
    };
    let obj = base
        .as_object_mut()
        .ok_or_else(|| invalid("profile must be a JSON object"))?;
    if let Some(v) = args.multilinearity {
        obj.insert("N".into(), json!(v));
    }
    if let Some(v) = args.n {
        obj.insert("n".into(), json!(v));
    }
    for (key, value) in [("p", &args.p), ("q", &args.q), ("s", &args.s)] {
        if let Some(v) = value {
            obj.insert(key.into(), Value::String(v.clone()));
        }
    }
    for (key, value) in [("p_j", &args.p_j), ("q_j", &args.q_j), ("s_j", &args.s_j)] {
        if let Some(v) = value {
            obj.insert(key.into(), Value::Array(split_list(v)));
        }
    }
    let text = serde_json::to_string(&base).expect("JSON value");
    ExponentProfile::from_json(&text).map_err(|e| invalid(format!("profile: {e}")))
}

fn print_json(value: &impl serde::Serialize) {
    out!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

fn exponents(action: &ExponentsAction, config: Value, dry_run: bool) -> Outcome<()> {
    let (args, critical) = match action {
        ExponentsAction::Critical(a) => (a, true),
        ExponentsAction::Check(a) => (a, false),
    };
    let profile = resolve_profile(args, config)?;
    if dry_run {
        print_json(&profile);
        return Ok(());
    }
    let m = critical_order(&profile);
    if critical {
        out!("{}", to_f64(&m));
    } else {
        let check = check_smoothness_conditions(&profile);
        print_json(&json!({
            "critical_order": to_f64(&m),
            "critical_order_exact": m.to_string(),
            "holder": profile.holder_conditions(),
            "sufficient": check.sufficient,
            "necessary": check.necessary,
            "margins": check.margins,
        }));
    }
    Ok(())
}

fn exponent_arg(flag: &str, value: &Option<String>, config: &Value, key: &str) -> Outcome<Option<besov_pdo::exponents::Exponent>> {
    let text = match (value, config.get(key)) {
        (Some(v), _) => v.clone(),
        (None, Some(Value::String(v))) => v.clone(),
        (None, Some(v)) if v.is_number() => v.to_string(),
        (None, Some(_)) => return Err(invalid(format!("config key `{key}` must be an exponent"))),
        (None, None) => return Ok(None),
    };
    text.parse()
        .map(Some)
        .map_err(|e: CoreError| invalid(format!("{flag}: {e}")))
}

fn require<T>(value: Option<T>, flag: &str) -> Outcome<T> {
    value.ok_or_else(|| invalid(format!("missing required flag {flag}")))
}

fn norm(args: &NormArgs, config: Value, dry_run: bool) -> Outcome<()> {
    let q = exponent_arg("--q", &args.q, &config, "q")?;
    if let SpaceArg::Lq = args.space {
        let q = require(q, "--q")?;
        let seq_text = require(args.seq.as_ref(), "--seq")?;
        let seq = seq_text
            .split(',')
            .map(|t| t.trim().parse::<f64>().map(f64::abs))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| invalid(format!("--seq: {e}")))?;
        if dry_run {
            print_json(&json!({ "space": "lq", "q": q.to_string(), "seq": seq }));
            return Ok(());
        }
        out!("{}", lq_norm(&seq, q));
        return Ok(());
    }
    let p = exponent_arg("--p", &args.p, &config, "p")?;
    let s = args
        .s
        .or_else(|| config.get("s").and_then(Value::as_f64))
        .unwrap_or(0.0);
    let input = require(args.input.as_ref(), "--input")?;
    let p = require(p, "--p")?;
    let space = match args.space {
        SpaceArg::Lq => unreachable!(),
        SpaceArg::Lp => Space::Lp,
        SpaceArg::Besov => match args.block {
            Some(BlockArg::Hp) => Space::BesovHpVariant,
            _ => Space::Besov,
        },
        SpaceArg::BesovHp => Space::BesovHpVariant,
        SpaceArg::LocalHardy => Space::LocalHardy,
        SpaceArg::Bmo => Space::Bmo,
        SpaceArg::Wiener => Space::WienerAmalgam,
        SpaceArg::BandSup => Space::BandSup,
    };
    let needs_q = matches!(space, Space::Besov | Space::BesovHpVariant | Space::WienerAmalgam);
    let q = if needs_q {
        require(q, "--q")?
    } else {
        q.unwrap_or(besov_pdo::exponents::Exponent::integer(2))
    };
    let kind: FamilyKind = args.family.parse().map_err(|e: CoreError| invalid(format!("--family: {e}")))?;
    let f = GridFunction::load(input)
        .map_err(|e| invalid(format!("--input {}: {e}", input.display())))?;
    if dry_run {
        print_json(&json!({
            "space": format!("{space:?}"),
            "p": p.to_string(),
            "q": q.to_string(),
            "s": s,
            "family": args.family,
            "grid": { "n": f.spec.n, "points": f.spec.points_per_dim, "scale": f.spec.scale() },
        }));
        return Ok(());
    }
    let family = make_lp_family(kind, levels_for_grid(kind, &f.spec), Some(&f.spec))?;
    let maximal = MaximalConfig::default();
    if matches!(space, Space::Besov | Space::BesovHpVariant) {
        let block = if space == Space::Besov {
            BlockNorm::Lp
        } else {
            BlockNorm::Hp
        };
        let report = besov_norm(&f, p, q, s, &family, block, &maximal)?;
        out!("{}", report.value);
        out!("{}", serde_json::to_string(&report).expect("serializable"));
        return Ok(());
    }
    let ctx = NormContext {
        family,
        kappa: make_uniform_window(UniformKind::KappaWiener, WindowVariant::S3, f.spec.n),
        maximal,
    };
    let value = ctx.evaluate(&NormRequest::new(space, p, q, s), &f)?;
    out!("{value}");
    Ok(())
}

fn window_variant(v: VariantArg) -> WindowVariant {
    match v {
        VariantArg::S3 => WindowVariant::S3,
        VariantArg::S4 => WindowVariant::S4,
    }
}

fn windows(action: &WindowsAction, dry_run: bool) -> Outcome<()> {
    let (args, make) = match action {
        WindowsAction::Make(a) => (a, true),
        WindowsAction::Verify(a) => (a, false),
    };
    let spec = GridSpec::new(args.n, args.points, args.scale)?;
    if let Some(w) = args.window {
        let kind = match w {
            UniformArg::Phi => UniformKind::Phi,
            UniformArg::PhiTilde => UniformKind::PhiTilde,
            UniformArg::Kappa => UniformKind::KappaWiener,
        };
        let window = make_uniform_window(kind, window_variant(args.variant), args.n);
        if dry_run {
            print_json(&json!({ "window": format!("{kind:?}"), "variant": format!("{:?}", window.variant), "support_box": window.support_box }));
            return Ok(());
        }
        if make {
            let rows = (0..spec.len()).map(|i| {
                let xi = spec.frequency_vec(i);
                let v = window.eval(&xi);
                (xi, vec![v])
            });
            return write_table(&args.out, args.n, &["value".to_string()], rows);
        }
        let report = verify_window(&window, &spec);
        print_json(&report);
        return verdict(report.passed(), "window verification failed");
    }
    let family_name = args.family.clone().unwrap_or_else(|| "sharp_lp".into());
    let kind: FamilyKind = family_name
        .parse()
        .map_err(|e: CoreError| invalid(format!("--family: {e}")))?;
    let levels = args.levels.unwrap_or_else(|| levels_for_grid(kind, &spec));
    let family = make_lp_family(kind, levels, Some(&spec))?;
    if dry_run {
        print_json(&json!({ "family": family_name, "levels": levels, "n": args.n, "points": args.points, "scale": args.scale }));
        return Ok(());
    }
    if make {
        let names: Vec<String> = (0..=levels).map(|k| format!("psi_{k}")).collect();
        let rows = (0..spec.len()).map(|i| {
            let xi = spec.frequency_vec(i);
            let values = (0..=levels).map(|k| family.eval(k, &xi)).collect();
            (xi, values)
        });
        return write_table(&args.out, args.n, &names, rows);
    }
    let report = verify_family(&family, &spec);
    print_json(&report);
    verdict(report.passed(), "family verification failed")
}

fn verdict(passed: bool, msg: &str) -> Outcome<()> {
    if passed {
        Ok(())
    } else {
        Err(Failure::Computation(msg.into()))
    }
}

fn write_table(
    out: &Option<PathBuf>,
    n: usize,
    names: &[String],
    rows: impl Iterator<Item = (Vec<f64>, Vec<f64>)>,
) -> Outcome<()> {
    let sink: Box<dyn std::io::Write> = match out {
        Some(p) => Box::new(fs::File::create(p).map_err(|e| invalid(format!("--out {}: {e}", p.display())))?),
        None => Box::new(std::io::stdout()),
    };
    let mut w = csv::Writer::from_writer(sink);
    let mut header: Vec<String> = (1..=n).map(|a| format!("xi_{a}")).collect();
    header.extend(names.iter().cloned());
    w.write_record(&header).map_err(|e| Failure::Computation(e.to_string()))?;
    for (xi, values) in rows {
        let record: Vec<String> = xi.iter().chain(&values).map(|v| v.to_string()).collect();
        w.write_record(&record).map_err(|e| Failure::Computation(e.to_string()))?;
    }
    w.flush().map_err(|e| Failure::Computation(e.to_string()))
}

fn op(action: &OpAction, config: Value, dry_run: bool) -> Outcome<()> {
    let OpAction::Apply {
        symbol,
        inputs,
        method,
        radius,
        quadrature,
        out,
    } = action;
    let symbol_value = match (symbol, config.get("symbol")) {
        (Some(path), _) => {
            let text = fs::read_to_string(path)
                .map_err(|e| invalid(format!("--symbol {}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| invalid(format!("--symbol: {e}")))?
        }
        (None, Some(v)) => v.clone(),
        (None, None) => return Err(invalid("missing required flag --symbol")),
    };
    let spec: TestSymbolSpec =
        serde_json::from_value(symbol_value).map_err(|e| invalid(format!("--symbol: {e}")))?;
    let sigma = make_test_symbol(&spec)?;
    if inputs.is_empty() {
        return Err(invalid("missing required flag --inputs"));
    }
    let functions = inputs
        .iter()
        .map(|p| GridFunction::load(p).map_err(|e| invalid(format!("--inputs {}: {e}", p.display()))))
        .collect::<Outcome<Vec<_>>>()?;
    let mut expansion: ExpansionConfig = match config.get("expansion") {
        Some(v) => serde_json::from_value(v.clone()).map_err(|e| invalid(format!("expansion: {e}")))?,
        None => ExpansionConfig::default(),
    };
    if let Some(r) = radius {
        expansion.radius = *r;
    }
    if let Some(q) = quadrature {
        expansion.quadrature = *q;
    }
    let out = require(out.as_ref(), "--out")?;
    if dry_run {
        print_json(&json!({
            "symbol": spec,
            "inputs": inputs,
            "method": format!("{method:?}").to_lowercase(),
            "expansion": expansion,
            "out": out,
        }));
        return Ok(());
    }
    let result = match method {
        MethodArg::Direct => apply_direct(&sigma, &functions)?,
        MethodArg::Expansion => {
            let plan = make_plan(&sigma, &functions, expansion).map_err(|e| match e {
                CoreError::Resolution { .. } => invalid(e.to_string()),
                other => other.into(),
            })?;
            apply_via_expansion(&sigma, &functions, &plan)?
        }
    };
    result
        .save(out)
        .map_err(|e| Failure::Computation(format!("--out {}: {e}", out.display())))
}

fn parse_floats(flag: &str, text: &str) -> Outcome<Vec<f64>> {
    text.split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| invalid(format!("{flag}: {e}")))
}

fn extremal(action: &ExtremalAction, dry_run: bool) -> Outcome<()> {
    match action {
        ExtremalAction::Wainger {
            a,
            b,
            eps,
            v_max,
            p,
            n,
            points,
            scale,
            out,
        } => {
            let params = WaingerParams {
                a: require(*a, "--a")?,
                b: require(*b, "--b")?,
                eps: *eps,
                v_max: require(*v_max, "--v-max")?,
                p: p.parse().map_err(|e: CoreError| invalid(format!("--p: {e}")))?,
                n: *n,
            };
            params.validate()?;
            let out = require(out.as_ref(), "--out")?;
            let spec = GridSpec::new(*n, *points, *scale)?;
            if dry_run {
                print_json(&json!({ "params": params, "above_threshold": params.above_threshold(), "out": out }));
                return Ok(());
            }
            make_wainger(&params, &spec)?
                .save(out)
                .map_err(|e| Failure::Computation(format!("--out {}: {e}", out.display())))
        }
        ExtremalAction::Enumerate { lattice, out } => {
            let (variant, ell) = lattice_head(lattice)?;
            if dry_run {
                print_json(&json!({ "variant": lattice.variant, "ell": ell, "delta": lattice.delta, "gap": lattice.gap, "N": lattice.multilinearity, "n": lattice.n }));
                return Ok(());
            }
            let set = enumerate_d(variant, ell, lattice.delta, lattice.gap, lattice.multilinearity, lattice.n)?;
            match out {
                Some(p) => {
                    let file = fs::File::create(p).map_err(|e| invalid(format!("--out {}: {e}", p.display())))?;
                    set.write_csv(file)?;
                    out!("{}", set.len());
                }
                None => set.write_csv(std::io::stdout())?,
            }
            Ok(())
        }
        ExtremalAction::Sum {
            lattice,
            order,
            decay,
            eps,
            mode,
        } => {
            let (variant, ell) = lattice_head(lattice)?;
            let decay = match decay {
                Some(d) => parse_floats("--decay", d)?,
                None => vec![0.0; lattice.multilinearity],
            };
            let weights = SumWeights {
                order: *order,
                decay,
                eps: *eps,
            };
            if dry_run {
                print_json(&json!({ "variant": lattice.variant, "ell": ell, "weights": weights }));
                return Ok(());
            }
            let set = enumerate_d(variant, ell, lattice.delta, lattice.gap, lattice.multilinearity, lattice.n)?;
            match mode {
                SumMode::Total => out!("{}", coefficient_sum_total(&set, &weights)?),
                SumMode::PerNu => {
                    let d = coefficient_sum_per_nu(&set, &weights)?;
                    let rows: Vec<Value> = d.iter().map(|(nu, v)| json!({ "nu": nu, "d": v })).collect();
                    print_json(&rows);
                }
            }
            Ok(())
        }
    }
}

fn lattice_head(lattice: &LatticeArgs) -> Outcome<(Variant, u32)> {
    let variant: Variant = lattice
        .variant
        .parse()
        .map_err(|e: CoreError| invalid(format!("--variant: {e}")))?;
    Ok((variant, require(lattice.ell, "--ell")?))
}

fn parse_levels(text: &str) -> Outcome<Vec<u64>> {
    let bad = || invalid(format!("--levels: cannot parse `{text}`"));
    if let Some((lo, hi)) = text.split_once("..") {
        let lo: u64 = lo.trim().parse().map_err(|_| bad())?;
        let hi: u64 = hi.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
        if hi < lo {
            return Err(bad());
        }
        return Ok((lo..=hi).collect());
    }
    text.split(',')
        .map(|t| t.trim().parse().map_err(|_| bad()))
        .collect()
}

/// Config file merged over the defaults, then flags merged over that.
fn resolve<T>(defaults: T, mut config: Value, args: &ExperimentArgs) -> Outcome<T>
where
    T: serde::Serialize + serde::de::DeserializeOwned,
{
    let obj = config.as_object_mut().expect("config is an object");
    if let Some(seed) = args.seed {
        obj.insert("seed".into(), json!(seed));
    }
    if let Some(levels) = &args.levels {
        obj.insert("levels".into(), json!(parse_levels(levels)?));
    }
    for item in &args.overrides {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| invalid(format!("--set `{item}`: expected KEY=JSON")))?;
        let value: Value = serde_json::from_str(value)
            .unwrap_or_else(|_| Value::String(value.to_string()));
        obj.insert(key.trim().to_string(), value);
    }
    let mut merged = serde_json::to_value(defaults).expect("defaults serialize");
    let target = merged.as_object_mut().expect("config structs are objects");
    for (k, v) in obj.iter() {
        target.insert(k.clone(), v.clone());
    }
    serde_json::from_value(merged).map_err(|e| invalid(format!("configuration: {e}")))
}

fn experiment(args: &ExperimentArgs, config: Value, dry_run: bool) -> Outcome<()> {
    macro_rules! resolved {
        ($ty:ty, $run:expr) => {{
            let cfg: $ty = resolve(<$ty>::default(), config, args)?;
            if dry_run {
                print_json(&cfg);
                return Ok(());
            }
            $run(&cfg)?
        }};
    }
    let report: ExperimentReport = match args.kind {
        ExperimentKind::SharpnessS => resolved!(SharpnessConfig, run_sharpness_s),
        ExperimentKind::SharpnessSj => resolved!(SharpnessSjConfig, run_sharpness_sj),
        ExperimentKind::Keyprop => resolved!(KeypropConfig, run_keyprop_ratio),
        ExperimentKind::BandDecay => resolved!(BandDecayConfig, run_band_decay),
        ExperimentKind::Embeddings => resolved!(EmbeddingConfig, run_embedding_suite),
        ExperimentKind::WaingerContrast => resolved!(WaingerContrastConfig, run_wainger_contrast),
    };
    let csv = report.to_csv_string()?;
    let json_text = report.to_json()?;
    match &args.out {
        Some(path) => {
            write_file(path, &csv)?;
            let json_path = args.json.clone().unwrap_or_else(|| path.with_extension("json"));
            write_file(&json_path, &json_text)?;
        }
        None => {
            out_raw!("{csv}");
            if let Some(path) = &args.json {
                write_file(path, &json_text)?;
            }
        }
    }
    print_summary(&report, 0);
    verdict(report.passed(), &format!("experiment `{}` failed its criterion", report.name))
}

fn print_summary(report: &ExperimentReport, depth: usize) {
    eprintln!("{}{}", "  ".repeat(depth), report.summary());
    for part in &report.parts {
        print_summary(part, depth + 1);
    }
}

fn write_file(path: &Path, text: &str) -> Outcome<()> {
    fs::write(path, text).map_err(|e| Failure::Computation(format!("{}: {e}", path.display())))
}
