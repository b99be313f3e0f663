//! Command-line driver behind the `siet` binary.
//!
//! Every command resolves an [`ExperimentConfig`] (defaults, then `--config`,
//! then flags), computes, and hands its artifacts to an [`OutputStage`]. The
//! run's digest is embedded in every artifact and recorded in `run.json`,
//! which `siet verify` checks.

mod config;
mod output;
mod plot;

use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::adversary::{bit_error_experiment, lower_bound_experiment};
use crate::capacity::{curve_from_solver, CapacityCurve, CurveOptions, TiltedSolver};
use crate::error::{Error, Result};
use crate::grid::{l2_distance_sq, read_xy_csv_file, sample, write_xy_csv, GridFunction, SampleSet, FINE_GRID};
use crate::loss::{loss_sweep, LossReport, SweepConfig};
use crate::reconstruct::{reconstruct, reconstruct_spline, Method, ReconstructionConfig};

pub use config::{
    AdversarySection, ChannelConfig, CurveSection, DemoSection, ExperimentConfig, ReconstructSection, SweepSection,
    TruthConfig,
};
pub use output::{sha256_hex, verify_dir, Manifest, ManifestEntry, OutputStage, VerifyReport, MANIFEST};
pub use plot::{Plot, Series, Style};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "SIET_OUT_DIR";

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "siet", version, about = "Harvesting-function reconstruction and capacity-energy experiments")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// TOML experiment configuration; flags override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Base seed for every random stream.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, env = OUT_DIR_ENV, default_value = "siet-out")]
    pub out: PathBuf,
    /// Only errors are reported.
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Interpolates `x,value` measurements onto the fine grid.
    Ingest {
        measurements: PathBuf,
        #[arg(long, default_value_t = FINE_GRID)]
        resolution: usize,
    },
    /// Samples the truth (or reads samples) and reconstructs it.
    Reconstruct {
        #[arg(long)]
        method: Option<Method>,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        sigma: Option<f64>,
        /// Reconstruct these `x,value` samples instead of sampling the truth.
        #[arg(long)]
        samples: Option<PathBuf>,
    },
    /// Capacity-energy curve of the truth over the configured channel.
    Curve {
        #[arg(long)]
        points: Option<usize>,
    },
    /// Energy and information loss against the number of samples.
    LossSweep {
        #[arg(long)]
        method: Option<Method>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        m_values: Option<Vec<usize>>,
    },
    /// Lower-bound experiment on the random bump family.
    Adversary {
        #[arg(long)]
        k: Option<f64>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        c0: Option<f64>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        m_values: Option<Vec<usize>>,
    },
    /// Spline against Haar reconstruction of the step test function.
    DemoFig2 {
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        sigma: Option<f64>,
    },
    /// Re-hashes the artifacts listed in a run manifest.
    Verify {
        /// Directory holding `run.json`; defaults to the output directory.
        dir: Option<PathBuf>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Ingest { .. } => "ingest",
            Command::Reconstruct { .. } => "reconstruct",
            Command::Curve { .. } => "curve",
            Command::LossSweep { .. } => "loss-sweep",
            Command::Adversary { .. } => "adversary",
            Command::DemoFig2 { .. } => "demo-fig2",
            Command::Verify { .. } => "verify",
        }
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Invalid(_) | Error::Json(_) => EXIT_VALIDATION,
        Error::NonConvergence { .. } => EXIT_SOLVER,
        Error::Io(_) => EXIT_IO,
        Error::Csv(e) => match e.kind() {
            csv::ErrorKind::Io(_) => EXIT_IO,
            _ => EXIT_VALIDATION,
        },
    }
}

fn error_kind(code: i32) -> &'static str {
    match code {
        EXIT_VALIDATION => "validation",
        EXIT_SOLVER => "solver",
        EXIT_IO => "io",
        _ => "internal",
    }
}

/// One-line JSON error record written to stderr on failure.
pub fn error_record(command: &str, err: &Error) -> String {
    let code = exit_code(err);
    json!({
        "error": {
            "command": command,
            "kind": error_kind(code),
            "exit_code": code,
            "message": err.to_string(),
        }
    })
    .to_string()
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let level = if cli.common.quiet { log::LevelFilter::Error } else { log::LevelFilter::Info };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().try_init();
    let name = cli.command.name();
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("{}", error_record(name, &e));
            exit_code(&e)
        }
    }
}

/// Loads the config file (if any) and applies the common flags.
pub fn resolve_config(common: &CommonArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

pub fn run(cli: &Cli) -> Result<()> {
    let mut cfg = resolve_config(&cli.common)?;
    let out = cli.common.out.clone();
    let say = |line: String| {
        if !cli.common.quiet {
            println!("{line}");
        }
    };
    match &cli.command {
        Command::Ingest { measurements, resolution } => {
            let stage = ingest_command(measurements, *resolution, out)?;
            finish(stage, &say)
        }
        Command::Reconstruct { method, m, sigma, samples } => {
            let r = &mut cfg.reconstruct;
            r.method = method.unwrap_or(r.method);
            r.m = m.unwrap_or(r.m);
            r.sigma = sigma.unwrap_or(r.sigma);
            let stage = reconstruct_command(&cfg, samples.as_deref(), out)?;
            finish(stage, &say)
        }
        Command::Curve { points } => {
            if let Some(n) = points {
                cfg.curve.n_points = *n;
            }
            let (stage, curve) = curve_command(&cfg, out)?;
            say(format!(
                "C_max = {:.6} bits, b_unconstrained = {:.6}, b_max = {:.6}, {} points",
                curve.c_max_bits,
                curve.b_unconstrained,
                curve.b_max,
                curve.points.len()
            ));
            finish(stage, &say)
        }
        Command::LossSweep { method, sigma, trials, m_values } => {
            let s = &mut cfg.sweep;
            s.method = method.unwrap_or(s.method);
            s.sigma = sigma.unwrap_or(s.sigma);
            s.trials = trials.unwrap_or(s.trials);
            if let Some(v) = m_values {
                s.m_values = v.clone();
            }
            let (stage, report) = loss_sweep_command(&cfg, out)?;
            say(report_line(&report));
            finish(stage, &say)
        }
        Command::Adversary { k, sigma, c0, trials, m_values } => {
            let a = &mut cfg.adversary;
            a.k = k.unwrap_or(a.k);
            a.sigma = sigma.unwrap_or(a.sigma);
            a.c0 = c0.or(a.c0);
            a.trials = trials.unwrap_or(a.trials);
            if let Some(v) = m_values {
                a.m_values = v.clone();
            }
            let (stage, report) = adversary_command(&cfg, out)?;
            say(report_line(&report));
            finish(stage, &say)
        }
        Command::DemoFig2 { m, sigma } => {
            cfg.demo.m = m.unwrap_or(cfg.demo.m);
            cfg.demo.sigma = sigma.unwrap_or(cfg.demo.sigma);
            let (stage, table) = demo_fig2_command(&cfg, out)?;
            for row in &table {
                say(format!(
                    "{:<13} max error near 0.5 = {:.5}  max error = {:.5}  L2^2 = {:.3e}",
                    row.method, row.max_error_near_jump, row.max_error, row.l2_sq
                ));
            }
            finish(stage, &say)
        }
        Command::Verify { dir } => {
            let dir = dir.clone().unwrap_or(out);
            let rep = verify_dir(&dir)?;
            for name in &rep.checked {
                say(format!("checked {name}"));
            }
            if rep.ok() {
                say(format!("ok: {} files match config_digest {}", rep.checked.len(), rep.config_digest));
                Ok(())
            } else {
                Err(Error::invalid(format!("verification failed: {}", rep.problems.join("; "))))
            }
        }
    }
}

fn finish(stage: OutputStage, say: &impl Fn(String)) -> Result<()> {
    for p in stage.commit()? {
        say(format!("wrote {}", p.display()));
    }
    Ok(())
}

fn report_line(r: &LossReport) -> String {
    let fmt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |s| format!("{s:.4}"));
    format!(
        "energy-loss slope {} (R^2 {}), info-loss slope {} (R^2 {})",
        fmt(r.fitted_slope_energy),
        fmt(r.fit_r2),
        fmt(r.fitted_slope_info),
        fmt(r.fit_r2_info)
    )
}

/// Reads `x,value` measurements and linearly interpolates them onto an
/// `n`-point grid over `[0, 1]`.
///
/// The rows must start at `x = 0`, end at `x = 1` and be strictly increasing.
pub fn ingest(path: &Path, n: usize) -> Result<GridFunction> {
    let (xs, ys) = read_xy_csv_file(path)?;
    interpolate_measurements(&xs, &ys, n)
}

pub fn interpolate_measurements(xs: &[f64], ys: &[f64], n: usize) -> Result<GridFunction> {
    const EDGE_TOL: f64 = 1e-12;
    if xs.len() < 2 {
        return Err(Error::invalid(format!("need at least 2 measurement rows, got {}", xs.len())));
    }
    if n < 2 {
        return Err(Error::invalid(format!("target resolution must be >= 2, got {n}")));
    }
    if let Some((i, x)) = xs.iter().enumerate().find(|(_, x)| !(**x >= 0.0 && **x <= 1.0)) {
        return Err(Error::invalid(format!("row {}: x = {x} lies outside [0, 1]", i + 1)));
    }
    if let Some(i) = xs.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::invalid(format!("x is not strictly increasing at row {}", i + 2)));
    }
    if xs[0] > EDGE_TOL || xs[xs.len() - 1] < 1.0 - EDGE_TOL {
        return Err(Error::invalid(format!(
            "measurements must cover [0, 1]; got [{}, {}]",
            xs[0],
            xs[xs.len() - 1]
        )));
    }
    if let Some(y) = ys.iter().find(|y| !y.is_finite()) {
        return Err(Error::invalid(format!("non-finite measurement {y}")));
    }
    let mut k = 0;
    let values = (0..n)
        .map(|j| {
            let x = j as f64 / (n - 1) as f64;
            while k + 2 < xs.len() && xs[k + 1] < x {
                k += 1;
            }
            let t = ((x - xs[k]) / (xs[k + 1] - xs[k])).clamp(0.0, 1.0);
            ys[k] + t * (ys[k + 1] - ys[k])
        })
        .collect();
    GridFunction::points(values)
}

fn to_json_text<T: serde::Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

fn fine_locations() -> Vec<f64> {
    (0..FINE_GRID).map(|j| j as f64 / (FINE_GRID - 1) as f64).collect()
}

fn ingest_command(path: &Path, n: usize, out: PathBuf) -> Result<OutputStage> {
    let raw = std::fs::read(path)?;
    let (xs, ys) = crate::grid::read_xy_csv(raw.as_slice())?;
    let f = interpolate_measurements(&xs, &ys, n)?;
    let provenance = json!({
        "command": "ingest",
        "input_sha256": sha256_hex(&raw),
        "resolution": n,
    });
    let mut stage = OutputStage::new(out, "ingest", provenance)?;
    let d = stage.digest().to_string();
    let grid = f.locations();
    stage.add_with("ingested.csv", |b| write_xy_csv(b, &grid, f.values(), Some(&d)))?;
    let svg = Plot::new("Ingested measurements", "x", "value")
        .with(Series::new("interpolant", grid, f.values().to_vec(), Style::Line))
        .with(Series::new("measurements", xs, ys, Style::Markers))
        .render(&d);
    stage.add("ingested.svg", svg);
    Ok(stage)
}

fn provenance(command: &str, cfg: &ExperimentConfig) -> serde_json::Value {
    json!({ "command": command, "config": cfg })
}

fn reconstruct_command(cfg: &ExperimentConfig, samples: Option<&Path>, out: PathBuf) -> Result<OutputStage> {
    let sec = &cfg.reconstruct;
    let rcfg = sec.reconstruction();
    rcfg.validate()?;
    let (set, truth, mut prov) = match samples {
        Some(p) => {
            let raw = std::fs::read(p)?;
            let set = SampleSet::read_csv(raw.as_slice(), sec.sigma)?;
            let mut prov = provenance("reconstruct", cfg);
            prov["samples_sha256"] = json!(sha256_hex(&raw));
            (set, None, prov)
        }
        None => {
            let truth = cfg.truth.load()?;
            let set = sample(&truth, sec.m, sec.sigma, cfg.seed)?;
            (set, Some(truth), provenance("reconstruct", cfg))
        }
    };
    prov["method"] = json!(sec.method);
    let recon = reconstruct(&set, &rcfg)?;
    let mut stage = OutputStage::new(out, "reconstruct", prov)?;
    let d = stage.digest().to_string();
    let grid = fine_locations();
    let rvals: Vec<f64> = grid.iter().map(|&x| recon.eval(x)).collect();
    stage.add_with("samples.csv", |b| write_xy_csv(b, set.locations(), set.values(), Some(&d)))?;
    stage.add_with("reconstruction.csv", |b| write_xy_csv(b, &grid, &rvals, Some(&d)))?;
    let mut plot = Plot::new(format!("{} reconstruction, m = {}", sec.method, set.len()), "x", "value");
    let mut summary = json!({
        "method": sec.method,
        "m": set.len(),
        "sigma": sec.sigma,
        "config_digest": d,
    });
    if let Some(t) = &truth {
        plot = plot.with(Series::new("truth", grid.clone(), t.values().to_vec(), Style::Dashed));
        summary["l2_sq_error"] = json!(l2_distance_sq(t, &recon, FINE_GRID));
    }
    plot = plot
        .with(Series::new("reconstruction", grid, rvals, Style::Line))
        .with(Series::new("samples", set.locations().to_vec(), set.values().to_vec(), Style::Markers));
    stage.add("reconstruction.json", to_json_text(&summary)?);
    stage.add("reconstruction.svg", plot.render(&d));
    Ok(stage)
}

fn curve_options(cfg: &ExperimentConfig) -> CurveOptions {
    cfg.curve.options(cfg.channel.mass_cap())
}

fn curve_command(cfg: &ExperimentConfig, out: PathBuf) -> Result<(OutputStage, CapacityCurve)> {
    let truth = cfg.truth.load()?;
    let ch = cfg.channel.build()?;
    let opts = curve_options(cfg);
    let solver = TiltedSolver::from_function(&ch, &truth, opts.solver)?;
    let curve = curve_from_solver(&solver, &opts, None)?;
    let mut stage = OutputStage::new(out, "curve", provenance("curve", cfg))?;
    let d = stage.digest().to_string();
    stage.add_with("curve.csv", |b| curve.write_csv(b, Some(&d)))?;
    let summary = json!({
        "c_max_bits": curve.c_max_bits,
        "b_unconstrained": curve.b_unconstrained,
        "b_max": curve.b_max,
        "points": curve.points.len(),
        "config_digest": d,
    });
    stage.add("curve.json", to_json_text(&summary)?);
    let (bs, cs): (Vec<f64>, Vec<f64>) = curve.points.iter().map(|p| (p.b, p.c)).unzip();
    let svg = Plot::new("Capacity-energy curve", "B (energy)", "C (bits)")
        .with(Series::new("C(B)", bs.clone(), cs.clone(), Style::Line))
        .with(Series::new("solved tilts", bs, cs, Style::Markers))
        .render(&d);
    stage.add("curve.svg", svg);
    Ok((stage, curve))
}

/// Builds the library sweep configuration; fractional rates and energies are
/// resolved against the true curve.
pub fn sweep_config(cfg: &ExperimentConfig, true_curve: &CapacityCurve) -> SweepConfig {
    let s = &cfg.sweep;
    let mut curve = curve_options(cfg);
    curve.n_points = s.n_points;
    curve.max_refinements = s.max_refinements;
    SweepConfig {
        reconstruction: ReconstructionConfig { sigma: s.known_sigma, ..ReconstructionConfig::new(s.method) },
        sigma: s.sigma,
        m_values: s.m_values.clone(),
        trials: s.trials,
        rates: s.rate_fractions.iter().map(|f| f * true_curve.c_max_bits).collect(),
        energies: s.energy_fractions.iter().map(|f| f * true_curve.b_max).collect(),
        seed: cfg.seed,
        curve,
    }
}

fn loss_sweep_command(cfg: &ExperimentConfig, out: PathBuf) -> Result<(OutputStage, LossReport)> {
    let s = &cfg.sweep;
    let check = |fs: &[f64], what: &str| match fs.iter().find(|f| !(**f >= 0.0 && **f <= 1.0)) {
        Some(f) => Err(Error::invalid(format!("{what} fractions must lie in [0, 1], got {f}"))),
        None => Ok(()),
    };
    check(&s.rate_fractions, "rate")?;
    check(&s.energy_fractions, "energy")?;
    let truth = cfg.truth.load()?;
    let ch = cfg.channel.build()?;
    // Validate everything that does not need the true curve before building it.
    let placeholder = CapacityCurve { points: Vec::new(), c_max_bits: 0.0, b_max: 0.0, b_unconstrained: 0.0 };
    sweep_config(cfg, &placeholder).validate()?;
    let mut opts = curve_options(cfg);
    opts.n_points = s.n_points;
    opts.max_refinements = s.max_refinements;
    let solver = TiltedSolver::from_function(&ch, &truth, opts.solver)?;
    let true_curve = curve_from_solver(&solver, &opts, None)?;
    let scfg = sweep_config(cfg, &true_curve);
    let mut report = loss_sweep(&truth, &ch, &scfg)?;
    let mut stage = OutputStage::new(out, "loss-sweep", provenance("loss-sweep", cfg))?;
    report.config_digest = stage.digest().to_string();
    stage_report(&mut stage, "loss", "Loss sweep", &report)?;
    Ok((stage, report))
}

fn stage_report(stage: &mut OutputStage, stem: &str, title: &str, report: &LossReport) -> Result<()> {
    let d = stage.digest().to_string();
    stage.add_with(&format!("{stem}.csv"), |b| report.write_csv(b))?;
    let mut json = report.summary_json()?;
    json.push('\n');
    stage.add(&format!("{stem}.json"), json);
    let ms: Vec<f64> = report.m_values.iter().map(|&m| m as f64).collect();
    let e: Vec<f64> = report.per_m.iter().map(|r| r.energy_loss_mean).collect();
    let i: Vec<f64> = report.per_m.iter().map(|r| r.info_loss_mean).collect();
    let mut plot = Plot::new(title, "m", "mean loss").log_log();
    plot = plot.with(Series::new("energy loss", ms.clone(), e.clone(), Style::Markers));
    if let Some(line) = fitted_line(&ms, &e, report.fitted_slope_energy) {
        plot = plot.with(Series::new(format!("fit {:.3}", report.fitted_slope_energy.unwrap_or(0.0)), ms.clone(), line, Style::Dashed));
    }
    if i.iter().any(|v| *v > 0.0) {
        plot = plot.with(Series::new("info loss", ms.clone(), i.clone(), Style::Markers));
        if let Some(line) = fitted_line(&ms, &i, report.fitted_slope_info) {
            plot = plot.with(Series::new(format!("fit {:.3}", report.fitted_slope_info.unwrap_or(0.0)), ms, line, Style::Dashed));
        }
    }
    stage.add(&format!("{stem}.svg"), plot.render(&d));
    Ok(())
}

/// Fitted power law through the geometric mean of the positive points.
fn fitted_line(ms: &[f64], ys: &[f64], slope: Option<f64>) -> Option<Vec<f64>> {
    let slope = slope?;
    let pos: Vec<(f64, f64)> = ms.iter().zip(ys).filter(|(_, y)| **y > 0.0).map(|(m, y)| (m.log2(), y.log2())).collect();
    if pos.is_empty() {
        return None;
    }
    let n = pos.len() as f64;
    let mx = pos.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pos.iter().map(|p| p.1).sum::<f64>() / n;
    Some(ms.iter().map(|m| (my + slope * (m.log2() - mx)).exp2()).collect())
}

fn adversary_command(cfg: &ExperimentConfig, out: PathBuf) -> Result<(OutputStage, LossReport)> {
    let acfg = cfg.adversary.config(cfg.seed);
    acfg.validate()?;
    let mut report = lower_bound_experiment(&acfg)?;
    let bits = bit_error_experiment(&acfg)?;
    let mut stage = OutputStage::new(out, "adversary", provenance("adversary", cfg))?;
    let d = stage.digest().to_string();
    report.config_digest = d.clone();
    stage_report(&mut stage, "adversary", "Lower-bound family", &report)?;
    stage.add_with("bit_errors.csv", |b| {
        writeln!(b, "# config_digest={d}")?;
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["m", "r", "empirical", "std_err", "predicted"])?;
        for s in &bits {
            w.write_record([s.m.to_string(), s.r.to_string(), s.empirical.to_string(), s.std_err.to_string(), s.predicted.to_string()])?;
        }
        w.flush()?;
        Ok(())
    })?;
    Ok((stage, report))
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ErrorRow {
    pub method: String,
    pub max_error_near_jump: f64,
    pub max_error: f64,
    pub l2_sq: f64,
}

fn demo_fig2_command(cfg: &ExperimentConfig, out: PathBuf) -> Result<(OutputStage, Vec<ErrorRow>)> {
    let demo = &cfg.demo;
    if !(demo.window > 0.0 && demo.window <= 0.5) {
        return Err(Error::invalid(format!("window must lie in (0, 0.5], got {}", demo.window)));
    }
    let truth = cfg.truth.load()?;
    let set = sample(&truth, demo.m, demo.sigma, cfg.seed)?;
    let spline = reconstruct_spline(&set)?;
    let method = if demo.sigma > 0.0 { Method::HaarShrinkage } else { Method::HaarLinear };
    let haar = reconstruct(&set, &ReconstructionConfig::new(method))?;
    let grid = fine_locations();
    let tv = truth.values().to_vec();
    let sv: Vec<f64> = grid.iter().map(|&x| spline.eval(x)).collect();
    let hv: Vec<f64> = grid.iter().map(|&x| haar.eval(x)).collect();
    let row = |name: &str, v: &[f64], f: &GridFunction| {
        let mut near: f64 = 0.0;
        let mut all: f64 = 0.0;
        for ((&x, &a), &b) in grid.iter().zip(&tv).zip(v) {
            let e = (a - b).abs();
            all = all.max(e);
            if (x - 0.5).abs() <= demo.window {
                near = near.max(e);
            }
        }
        ErrorRow { method: name.to_string(), max_error_near_jump: near, max_error: all, l2_sq: l2_distance_sq(&truth, f, FINE_GRID) }
    };
    let table = vec![row("cubic-spline", &sv, &spline), row(&method.to_string(), &hv, &haar)];

    let mut stage = OutputStage::new(out, "demo-fig2", provenance("demo-fig2", cfg))?;
    let d = stage.digest().to_string();
    stage.add_with("fig2.csv", |b| {
        writeln!(b, "# config_digest={d}")?;
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["x", "truth", "spline", "haar"])?;
        for j in 0..grid.len() {
            w.write_record([grid[j].to_string(), tv[j].to_string(), sv[j].to_string(), hv[j].to_string()])?;
        }
        w.flush()?;
        Ok(())
    })?;
    stage.add_with("fig2_errors.csv", |b| {
        writeln!(b, "# config_digest={d}")?;
        let mut w = csv::Writer::from_writer(b);
        for r in &table {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    })?;
    let svg = Plot::new(format!("Reconstruction at m = {}", demo.m), "x", "value")
        .with(Series::new("truth", grid.clone(), tv.clone(), Style::Dashed))
        .with(Series::new("cubic spline", grid.clone(), sv, Style::Line))
        .with(Series::new("haar", grid, hv, Style::Line))
        .with(Series::new("samples", set.locations().to_vec(), set.values().to_vec(), Style::Markers))
        .render(&d);
    stage.add("fig2.svg", svg);
    Ok((stage, table))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::total_variation;

    #[test]
    fn two_rows_give_the_ramp() {
        let f = interpolate_measurements(&[0.0, 1.0], &[0.0, 1.0], FINE_GRID).unwrap();
        assert_eq!(f.len(), FINE_GRID);
        for (x, y) in f.locations().iter().zip(f.values()) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_rows_stay_constant() {
        let xs: Vec<f64> = (0..101).map(|i| i as f64 / 100.0).collect();
        let f = interpolate_measurements(&xs, &[0.3; 101], FINE_GRID).unwrap();
        assert!(f.values().iter().all(|v| (*v - 0.3).abs() < 1e-15));
    }

    #[test]
    fn step_measurements_keep_variation() {
        let xs: Vec<f64> = (0..101).map(|i| i as f64 / 100.0).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| crate::grid::sine_plus_step(x)).collect();
        let f = interpolate_measurements(&xs, &ys, FINE_GRID).unwrap();
        // Oracle: the interpolant is piecewise linear through the rows, so its
        // variation is the variation of the row sequence.
        let oracle: f64 = ys.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
        assert!((total_variation(&f) - oracle).abs() < 1e-9);
        assert!((total_variation(&f) - 1.8).abs() < 0.02 * 1.8);
    }

    #[test]
    fn bad_measurements_rejected() {
        assert!(interpolate_measurements(&[0.0], &[1.0], 16).is_err());
        assert!(interpolate_measurements(&[0.0, 0.5, 0.5, 1.0], &[0.0; 4], 16).is_err());
        assert!(interpolate_measurements(&[0.0, 1.2], &[0.0; 2], 16).is_err());
        assert!(interpolate_measurements(&[-0.1, 1.0], &[0.0; 2], 16).is_err());
        assert!(interpolate_measurements(&[0.1, 1.0], &[0.0; 2], 16).is_err());
        assert!(interpolate_measurements(&[0.0, 1.0], &[0.0, f64::NAN], 16).is_err());
    }

    #[test]
    fn exit_codes_are_distinct() {
        let io = Error::Io(std::io::Error::other("x"));
        let codes = [
            exit_code(&Error::invalid("x")),
            exit_code(&Error::NonConvergence { iterations: 1, gap: 1.0 }),
            exit_code(&io),
        ];
        assert_eq!(codes, [EXIT_VALIDATION, EXIT_SOLVER, EXIT_IO]);
        let rec: serde_json::Value = serde_json::from_str(&error_record("curve", &io)).unwrap();
        assert_eq!(rec["error"]["kind"], "io");
        assert_eq!(rec["error"]["exit_code"], 4);
    }

    #[test]
    fn fitted_line_passes_through_power_law() {
        let ms = [16.0, 32.0, 64.0];
        let ys: Vec<f64> = ms.iter().map(|m: &f64| 3.0 * m.powf(-0.5)).collect();
        let line = fitted_line(&ms, &ys, Some(-0.5)).unwrap();
        for (a, b) in line.iter().zip(&ys) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
