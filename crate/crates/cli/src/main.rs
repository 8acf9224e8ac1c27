//! `msearch`: command-line front end for the m-ary search tree toolkit.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Map, Value};

use msearch::enumeration::load_or_build;
use msearch::io::write_atomic;
use msearch::limits::{load_or_compute, LimitKind};
use msearch::moments::{centered_spec, exact_moments_opts, AnyMomentTable};
use msearch::sampler::{monte_carlo_multi, simulate_values, summarize};
use msearch::scalar::{decimal_string, digits_for_bits, Real};
use msearch::singular::{closed_form_constants, theorem_constants, DEFAULT_MAX_CUTOFF};
use msearch::toll::parse_rational;
use msearch::verify::{run_suite, CheckStatus, Suite, VerifyConfig};
use msearch::{expansion_coefficients, MomentMode, Model, SplitSampler, TollSpec, CACHE_ENV};

#[derive(Parser, Serialize)]
#[command(name = "msearch", version, about = "Additive functionals on uniformly random m-ary search trees")]
struct Cli {
    /// Directory for count and limit-law caches.
    #[arg(long, visible_alias = "cache", global = true, env = CACHE_ENV, default_value = "cache")]
    cache_dir: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "lowercase")]
enum Command {
    /// Count trees on 0..=N keys.
    Enumerate(EnumerateArgs),
    /// Singular-expansion constants and the constants attached to a toll.
    Constants(ConstantsArgs),
    /// Exact moments E[X_n^s] per n and s, written as CSV.
    Moments(MomentsArgs),
    /// Moment sequences of limit laws.
    Limits(LimitsArgs),
    /// Monte Carlo simulation of a functional.
    Simulate(SimulateArgs),
    /// Run the verification checks.
    Verify(VerifyArgs),
}

#[derive(Args, Serialize)]
struct EnumerateArgs {
    /// Branching factor (>= 2).
    #[arg(long)]
    m: usize,
    /// Largest number of keys.
    #[arg(long)]
    n: usize,
    /// Write JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Bypass the count cache.
    #[arg(long)]
    no_cache: bool,
    /// json or csv (columns n,tau).
    #[arg(long, default_value = "json")]
    format: String,
}

#[derive(Args, Serialize)]
struct ConstantsArgs {
    #[arg(long)]
    m: usize,
    /// power:ALPHA, shape, space or leaves.
    #[arg(long)]
    toll: Option<String>,
    /// Binary precision of the constants.
    #[arg(long, default_value_t = 128)]
    bits: u32,
    /// Bound on the error of the toll's series constant.
    #[arg(long, default_value_t = 1e-8)]
    target_error: f64,
    /// Largest truncation point tried for the series constant.
    #[arg(long, default_value_t = DEFAULT_MAX_CUTOFF)]
    max_cutoff: usize,
    /// Only `json` is supported.
    #[arg(long, default_value = "json")]
    format: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct MomentsArgs {
    #[arg(long)]
    m: usize,
    /// power:ALPHA, shape, space or leaves.
    #[arg(long)]
    toll: String,
    /// Highest moment order.
    #[arg(long, default_value_t = 4)]
    smax: usize,
    /// Largest number of keys.
    #[arg(long)]
    n: usize,
    /// `exact` or `float:BITS`.
    #[arg(long, default_value = "exact")]
    mode: String,
    /// Moments of X_n - c (n+1) instead of X_n.
    #[arg(long)]
    center: Option<String>,
    /// Also write r_n^[s] as column `r_exact`.
    #[arg(long)]
    keep_intermediates: bool,
    /// Output CSV file (stdout if absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct LimitsArgs {
    /// yalpha:A, yhalf, shape, space or leaves.
    #[arg(long)]
    law: String,
    /// Branching factor for the normal laws.
    #[arg(long, default_value_t = 2)]
    m: usize,
    #[arg(long, default_value_t = 8)]
    smax: usize,
    #[arg(long, default_value_t = 128)]
    bits: u32,
    /// Only `json` is supported.
    #[arg(long, default_value = "json")]
    format: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct SimulateArgs {
    #[arg(long)]
    m: usize,
    #[arg(long)]
    n: usize,
    /// Toll; repeat the flag to evaluate several functionals on the same trees.
    #[arg(long, required = true)]
    toll: Vec<String>,
    #[arg(long, default_value_t = 10_000)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// uniform or rp.
    #[arg(long, default_value = "uniform")]
    model: String,
    /// Summary JSON (stdout if absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Histogram CSV of the first toll's values.
    #[arg(long)]
    histogram: Option<PathBuf>,
    /// One sampled tree as nested JSON.
    #[arg(long)]
    tree: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct VerifyArgs {
    /// fast or full.
    #[arg(long, default_value = "fast")]
    suite: String,
    /// Run a single check by id.
    #[arg(long)]
    only: Option<String>,
    /// Report JSON path.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, default_value_t = 20030101)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Trees drawn by the sampling checks.
    #[arg(long, default_value_t = 100_000)]
    reps: usize,
    /// Trees per size in the model-contrast check.
    #[arg(long, default_value_t = 2_000)]
    contrast_reps: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => write_atomic(p, text.as_bytes()).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn json_text(v: &Value) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn config_value(cli: &Cli) -> Result<Value> {
    Ok(serde_json::to_value(cli)?)
}

fn fields_object(fields: Vec<(&'static str, String)>) -> Value {
    let mut map = Map::new();
    for (k, v) in fields {
        map.insert(k.to_string(), Value::String(v));
    }
    Value::Object(map)
}

fn run(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Enumerate(a) => enumerate(cli, a),
        Command::Constants(a) => constants(cli, a),
        Command::Moments(a) => moments(a),
        Command::Limits(a) => limits(cli, a),
        Command::Simulate(a) => simulate(cli, a),
        Command::Verify(a) => verify(cli, a),
    }
}

fn count_table(cli: &Cli, m: usize, n: usize, use_cache: bool) -> Result<msearch::TreeCountTable> {
    if use_cache {
        std::fs::create_dir_all(&cli.cache_dir).with_context(|| format!("creating {}", cli.cache_dir.display()))?;
        Ok(load_or_build(&cli.cache_dir, m, n)?)
    } else {
        Ok(msearch::tree_counts(m, n)?)
    }
}

fn enumerate(cli: &Cli, a: &EnumerateArgs) -> Result<ExitCode> {
    let t = count_table(cli, a.m, a.n, !a.no_cache)?;
    let counts: Vec<String> = t.counts().iter().map(|c| c.to_string()).collect();
    let text = match a.format.as_str() {
        "json" => json_text(&json!({ "m": a.m, "N": a.n, "counts": counts }))?,
        "csv" => {
            let mut csv = String::from("n,tau\n");
            for (n, c) in counts.iter().enumerate() {
                writeln!(csv, "{n},{c}")?;
            }
            csv
        }
        f => bail!("unsupported format {f:?} (json|csv)"),
    };
    emit(a.out.as_deref(), &text)?;
    Ok(ExitCode::SUCCESS)
}

fn constants(cli: &Cli, a: &ConstantsArgs) -> Result<ExitCode> {
    if a.format != "json" {
        bail!("unsupported format {:?}; only json is available", a.format);
    }
    let sd = expansion_coefficients(a.m, a.bits)?;
    let mut out = Map::new();
    out.insert("config".into(), config_value(cli)?);
    out.insert("singular".into(), fields_object(sd.fields()));
    if let Some(t) = &a.toll {
        let toll = TollSpec::parse(a.m, t)?;
        let tc = theorem_constants(&toll, &sd, a.target_error, a.max_cutoff)?;
        let digits = digits_for_bits(a.bits);
        let mut obj = fields_object(tc.fields(digits));
        // closed forms, where they exist, as an independent route to d1
        if let Ok(cf) = closed_form_constants(&toll, &sd) {
            if let (Some(d1), Value::Object(map)) = (cf.d1, &mut obj) {
                if !matches!(toll.kind, msearch::TollKind::Shape) {
                    map.insert("d1_closed_form".into(), Value::String(decimal_string(&d1, digits)));
                }
            }
        }
        out.insert("toll".into(), obj);
    }
    emit(a.out.as_deref(), &json_text(&Value::Object(out))?)?;
    Ok(ExitCode::SUCCESS)
}

fn parse_mode(text: &str) -> Result<MomentMode> {
    if text == "exact" {
        return Ok(MomentMode::Exact);
    }
    if let Some(b) = text.strip_prefix("float:") {
        let bits: u32 = b.parse().with_context(|| format!("bad precision in {text:?}"))?;
        if bits < 24 {
            bail!("float precision must be at least 24 bits");
        }
        return Ok(MomentMode::Float(bits));
    }
    bail!("unknown mode {text:?} (exact|float:BITS)")
}

fn moments(a: &MomentsArgs) -> Result<ExitCode> {
    let mode = parse_mode(&a.mode)?;
    let mut toll = TollSpec::parse(a.m, &a.toll)?;
    if let Some(c) = &a.center {
        toll = centered_spec(&toll, &Real::Exact(parse_rational(c)?));
    }
    let table = msearch::tree_counts(a.m, a.n)?;
    let mt = exact_moments_opts(&toll, &table, a.smax, a.n, mode, a.keep_intermediates)?;
    let bits = match mode {
        MomentMode::Float(b) => b,
        MomentMode::Exact => 128,
    };
    let digits = digits_for_bits(bits);
    let stats = if a.smax >= 2 { Some(mt.stats(bits)?) } else { None };
    let mut csv = String::from("n,s,mu_exact,mean,var,skew,kurt");
    if a.keep_intermediates {
        csv.push_str(",r_exact");
    }
    csv.push('\n');
    for n in 0..=a.n {
        let st = stats.as_ref().map(|s| &s[n]);
        // mu_exact keeps exact fractions; the summary columns are decimals
        let dec = |r: &Real| decimal_string(&r.to_float(bits), digits);
        let mean = if a.smax >= 1 { dec(&mt.moment(1, n)) } else { String::new() };
        let var = st.map(|s| dec(&s.variance)).unwrap_or_default();
        let skew = st.and_then(|s| s.skewness.as_ref()).map(|x| decimal_string(x, digits)).unwrap_or_default();
        let kurt = st.and_then(|s| s.excess_kurtosis.as_ref()).map(|x| decimal_string(x, digits)).unwrap_or_default();
        for s in 0..=a.smax {
            write!(csv, "{n},{s},{},{mean},{var},{skew},{kurt}", mt.moment(s, n).render(digits))?;
            if a.keep_intermediates {
                write!(csv, ",{}", r_value(&mt, s, n, digits))?;
            }
            csv.push('\n');
        }
    }
    emit(a.out.as_deref(), &csv)?;
    Ok(ExitCode::SUCCESS)
}

fn r_value(mt: &AnyMomentTable, s: usize, n: usize, digits: usize) -> String {
    use msearch::scalar::Scalar;
    let get = |len: usize| s > 0 && n < len;
    match mt {
        AnyMomentTable::Integer(t) if get(t.r[s].len()) => t.r[s].coeffs()[n].render(digits),
        AnyMomentTable::Rational(t) if get(t.r[s].len()) => t.r[s].coeffs()[n].render(digits),
        AnyMomentTable::Float(t) if get(t.r[s].len()) => t.r[s].coeffs()[n].render(digits),
        _ => String::new(),
    }
}

fn parse_law(text: &str, m: usize) -> Result<LimitKind> {
    Ok(match text {
        "yhalf" => LimitKind::YHalf,
        "shape" => LimitKind::ShapeNormal(m),
        "space" => LimitKind::SpaceNormal(m),
        "leaves" => LimitKind::LeavesNormal(m),
        _ => match text.strip_prefix("yalpha:") {
            Some(a) => LimitKind::YAlpha(parse_rational(a)?),
            None => bail!("unknown law {text:?} (yalpha:A|yhalf|shape|space|leaves)"),
        },
    })
}

fn limits(cli: &Cli, a: &LimitsArgs) -> Result<ExitCode> {
    if a.format != "json" {
        bail!("unsupported format {:?}; only json is available", a.format);
    }
    let kind = parse_law(&a.law, a.m)?;
    std::fs::create_dir_all(&cli.cache_dir)?;
    let seq = load_or_compute(&cli.cache_dir, &kind, a.smax, a.bits)?;
    let render = |v: &[rug::Float]| -> Vec<String> { v.iter().map(|x| decimal_string(x, digits_for_bits(x.prec().min(a.bits)))).collect() };
    let mut out = Map::new();
    out.insert("config".into(), config_value(cli)?);
    out.insert("law".into(), Value::String(kind.to_string()));
    out.insert("provenance".into(), Value::String(seq.provenance.clone()));
    out.insert("moments".into(), json!(render(&seq.moments)));
    if let Some(c) = &seq.closed_form {
        out.insert("normal_closed_form".into(), json!(render(c)));
    }
    if !seq.coefficients.is_empty() {
        out.insert("coefficients".into(), json!(render(&seq.coefficients)));
    }
    if !seq.aux.is_empty() {
        let js: Vec<Value> = seq
            .aux
            .iter()
            .map(|j| json!({ "k": [j.k.0, j.k.1, j.k.2], "value": format!("{:.15e}", j.value), "error": format!("{:.3e}", j.error) }))
            .collect();
        out.insert("j_integrals".into(), Value::Array(js));
    }
    emit(a.out.as_deref(), &json_text(&Value::Object(out))?)?;
    Ok(ExitCode::SUCCESS)
}

fn simulate(cli: &Cli, a: &SimulateArgs) -> Result<ExitCode> {
    let model: Model = a.model.parse()?;
    let tolls: Vec<TollSpec> = a.toll.iter().map(|t| TollSpec::parse(a.m, t)).collect::<msearch::Result<_>>()?;
    let table = Arc::new(count_table(cli, a.m, a.n, true)?);
    let s = SplitSampler::new(table, a.seed, model);
    let summaries = if a.histogram.is_some() {
        let start = std::time::Instant::now();
        let cols = simulate_values(&s, a.n, &tolls, a.reps, a.threads)?;
        let elapsed = start.elapsed().as_secs_f64();
        if let Some(h) = &a.histogram {
            let hist = msearch::stats::histogram(&cols[0], 50);
            let mut csv = String::from("lo,hi,count\n");
            for (i, c) in hist.counts.iter().enumerate() {
                writeln!(csv, "{:.12e},{:.12e},{c}", hist.edges[i], hist.edges[i + 1])?;
            }
            write_atomic(h, csv.as_bytes())?;
        }
        tolls
            .iter()
            .zip(&cols)
            .map(|(t, v)| summarize(&s, a.n, t, v, elapsed))
            .collect::<msearch::Result<Vec<_>>>()?
    } else {
        monte_carlo_multi(&s, a.n, &tolls, a.reps, a.threads)?
    };
    if let Some(p) = &a.tree {
        let mut rng = s.rng(u64::MAX);
        let tree = s.sample_tree(a.n, &mut rng)?;
        write_atomic(p, (serde_json::to_string(&tree)? + "\n").as_bytes())?;
    }
    for sm in &summaries {
        eprintln!("{}: {} replications in {:.2}s", sm.toll, sm.reps, sm.elapsed_secs);
    }
    let v = json!({ "config": config_value(cli)?, "summaries": summaries });
    emit(a.out.as_deref(), &json_text(&v)?)?;
    Ok(ExitCode::SUCCESS)
}

fn verify(cli: &Cli, a: &VerifyArgs) -> Result<ExitCode> {
    let suite: Suite = a.suite.parse()?;
    let config = VerifyConfig {
        seed: a.seed,
        threads: a.threads,
        mc_reps: a.reps,
        contrast_reps: a.contrast_reps,
        cache_dir: Some(cli.cache_dir.clone()),
        ..VerifyConfig::default()
    };
    std::fs::create_dir_all(&cli.cache_dir)?;
    let reports = run_suite(suite, a.only.as_deref(), &config)?;
    let mut failed = false;
    for r in &reports {
        let tag = match r.status {
            CheckStatus::Pass => "PASS",
            CheckStatus::Fail => "FAIL",
            CheckStatus::Skipped => "SKIP",
        };
        failed |= r.status != CheckStatus::Pass;
        eprintln!("{tag} {} ({:.1}s)", r.check_id, r.runtime_secs);
        for d in &r.details {
            eprintln!("     {d}");
        }
    }
    if let Some(p) = &a.report {
        let v = json!({ "config": config_value(cli)?, "checks": reports });
        write_atomic(p, json_text(&v)?.as_bytes())?;
    }
    Ok(if failed { ExitCode::from(1) } else { ExitCode::SUCCESS })
}
