//! Energy and information losses between the capacity-energy curves of a
//! true harvesting function and of its reconstruction, Monte Carlo sweeps
//! over the sample count `m`, and log-log decay fits.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::capacity::{curve_from_solver, CapacityCurve, CurveOptions, TiltedSolver};
use crate::channel::ChannelModel;
use crate::error::{Error, Result};
use crate::grid::{derive_seed, sample, total_variation, BvBudget, GridFunction, RealFunction, FINE_GRID};
use crate::reconstruct::{reconstruct, ReconstructionConfig};

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

/// `|B_true(R) - B_recon(R)|`.
pub fn energy_loss(true_curve: &CapacityCurve, recon_curve: &CapacityCurve, r: f64) -> Result<f64> {
    Ok((true_curve.energy_capacity(r)? - recon_curve.energy_capacity(r)?).abs())
}

/// `|C_true(B) - C_recon(B)|` in bits; a curve is 0 beyond its `b_max`.
pub fn info_loss(true_curve: &CapacityCurve, recon_curve: &CapacityCurve, b: f64) -> f64 {
    (true_curve.capacity_at(b) - recon_curve.capacity_at(b)).abs()
}

/// Least-squares slope of `log2 y` against `log2 x`, with `R^2`.
/// Nonpositive `y` values are dropped with a warning.
pub fn fit_decay(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    if xs.len() != ys.len() {
        return Err(Error::invalid(format!("fit needs matching lengths ({} vs {})", xs.len(), ys.len())));
    }
    let mut pts = Vec::with_capacity(xs.len());
    for (&x, &y) in xs.iter().zip(ys) {
        if !(x > 0.0) {
            return Err(Error::invalid(format!("fit abscissa must be positive, got {x}")));
        }
        if y > 0.0 && y.is_finite() {
            pts.push((x.log2(), y.log2()));
        } else {
            log::warn!("dropping nonpositive loss {y} at x = {x} from the decay fit");
        }
    }
    if pts.len() < 3 {
        return Err(Error::invalid(format!(
            "decay fit needs at least 3 positive values, {} remain",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("decay fit needs at least two distinct x values"));
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok((slope, r2))
}

/// Mean and normal-approximation 95% confidence half-width.
pub fn mean_ci95(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, Z95 * (var / n).sqrt())
}

/// SHA-256 of the canonical JSON form (sorted keys) of a configuration.
pub fn config_digest<T: Serialize>(cfg: &T) -> Result<String> {
    let value = serde_json::to_value(cfg)?;
    let bytes = serde_json::to_vec(&value)?;
    let hash = Sha256::digest(&bytes);
    Ok(hash.iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRow {
    pub m: usize,
    pub trials: usize,
    pub energy_loss_mean: f64,
    pub energy_loss_ci95: f64,
    pub info_loss_mean: f64,
    pub info_loss_ci95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub m_values: Vec<usize>,
    pub per_m: Vec<LossRow>,
    /// `None` when fewer than three sweep points carry a positive loss.
    pub fitted_slope_energy: Option<f64>,
    pub fitted_slope_info: Option<f64>,
    /// `R^2` of the energy-loss fit.
    pub fit_r2: Option<f64>,
    pub fit_r2_info: Option<f64>,
    pub config_digest: String,
}

#[derive(Serialize)]
struct ReportSummary<'a> {
    slopes: Slopes,
    r2: R2,
    config_digest: &'a str,
}

#[derive(Serialize)]
struct Slopes {
    energy: Option<f64>,
    info: Option<f64>,
}

#[derive(Serialize)]
struct R2 {
    energy: Option<f64>,
    info: Option<f64>,
}

impl LossReport {
    /// Aggregates per-trial losses; fits are attempted separately for the
    /// energy and the information loss.
    pub fn from_trials(m_values: &[usize], per_trial: &[Vec<(f64, f64)>], config_digest: String) -> Self {
        let per_m: Vec<LossRow> = m_values
            .iter()
            .zip(per_trial)
            .map(|(&m, losses)| {
                let e: Vec<f64> = losses.iter().map(|l| l.0).collect();
                let i: Vec<f64> = losses.iter().map(|l| l.1).collect();
                let (em, eci) = mean_ci95(&e);
                let (im, ici) = mean_ci95(&i);
                LossRow {
                    m,
                    trials: losses.len(),
                    energy_loss_mean: em,
                    energy_loss_ci95: eci,
                    info_loss_mean: im,
                    info_loss_ci95: ici,
                }
            })
            .collect();
        let xs: Vec<f64> = m_values.iter().map(|&m| m as f64).collect();
        let fit = |ys: Vec<f64>| fit_decay(&xs, &ys).ok();
        let energy = fit(per_m.iter().map(|r| r.energy_loss_mean).collect());
        let info = fit(per_m.iter().map(|r| r.info_loss_mean).collect());
        Self {
            m_values: m_values.to_vec(),
            per_m,
            fitted_slope_energy: energy.map(|f| f.0),
            fitted_slope_info: info.map(|f| f.0),
            fit_r2: energy.map(|f| f.1),
            fit_r2_info: info.map(|f| f.1),
            config_digest,
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut out = out;
        writeln!(out, "# config_digest={}", self.config_digest)?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["m", "trials", "energy_loss_mean", "energy_loss_ci95", "info_loss_mean", "info_loss_ci95"])?;
        for r in &self.per_m {
            w.write_record([
                r.m.to_string(),
                r.trials.to_string(),
                r.energy_loss_mean.to_string(),
                r.energy_loss_ci95.to_string(),
                r.info_loss_mean.to_string(),
                r.info_loss_ci95.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// JSON summary `{slopes, r2, config_digest}`.
    pub fn summary_json(&self) -> Result<String> {
        let summary = ReportSummary {
            slopes: Slopes { energy: self.fitted_slope_energy, info: self.fitted_slope_info },
            r2: R2 { energy: self.fit_r2, info: self.fit_r2_info },
            config_digest: &self.config_digest,
        };
        Ok(serde_json::to_string_pretty(&summary)?)
    }
}

/// Everything a sweep depends on besides the truth and the channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub reconstruction: ReconstructionConfig,
    /// Per-sample noise standard deviation.
    pub sigma: f64,
    pub m_values: Vec<usize>,
    pub trials: usize,
    /// Rates (bits) for the energy loss.
    pub rates: Vec<f64>,
    /// Energies for the information loss.
    pub energies: Vec<f64>,
    pub seed: u64,
    pub curve: CurveOptions,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        self.reconstruction.validate()?;
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::invalid(format!("sigma must be >= 0, got {}", self.sigma)));
        }
        if self.trials == 0 {
            return Err(Error::invalid("trials must be >= 1"));
        }
        if self.sigma == 0.0 && self.trials > 1 {
            return Err(Error::invalid(format!(
                "noiseless sweeps are deterministic; trials must be 1, got {}",
                self.trials
            )));
        }
        if self.m_values.is_empty() {
            return Err(Error::invalid("m_values is empty"));
        }
        if let Some(&m) = self.m_values.iter().find(|m| !m.is_power_of_two() || **m < 2) {
            return Err(Error::invalid(format!("every m must be a power of 2 (>= 2), got {m}")));
        }
        if self.m_values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("m_values must be strictly increasing"));
        }
        if self.rates.iter().chain(&self.energies).any(|v| !(*v >= 0.0)) {
            return Err(Error::invalid("rates and energies must be >= 0"));
        }
        Ok(())
    }
}

fn sweep_curve_options(cfg: &SweepConfig) -> CurveOptions {
    let mut opts = cfg.curve.clone();
    opts.rate_probes = cfg.rates.clone();
    opts.energy_probes = cfg.energies.clone();
    opts
}

/// Samples, reconstructs and compares curves for every `m` and trial.
///
/// Trial `t` at sample count `m` draws its noise from
/// `derive_seed(seed, m, t)`, so results do not depend on scheduling.
pub fn loss_sweep<F: RealFunction + Sync>(truth: &F, ch: &ChannelModel, cfg: &SweepConfig) -> Result<LossReport> {
    let truth = |x: f64| truth.eval(x);
    cfg.validate()?;
    let opts = sweep_curve_options(cfg);
    let true_solver = TiltedSolver::from_function(ch, truth, opts.solver)?;
    let true_curve = curve_from_solver(&true_solver, &opts, None)?;
    if let Some(&r) = cfg.rates.iter().find(|&&r| r > true_curve.c_max_bits) {
        return Err(Error::invalid(format!(
            "rate {r} exceeds the channel capacity {} bits",
            true_curve.c_max_bits
        )));
    }
    let digest = config_digest(cfg)?;

    let mut per_m = Vec::with_capacity(cfg.m_values.len());
    for &m in &cfg.m_values {
        let trials: Vec<(f64, f64)> = (0..cfg.trials as u64)
            .into_par_iter()
            .map(|t| {
                let samples = sample(truth, m, cfg.sigma, derive_seed(cfg.seed, m as u64, t))?;
                let recon = reconstruct(&samples, &cfg.reconstruction)?;
                let solver = TiltedSolver::from_function(ch, &recon, opts.solver)?;
                if solver.energies() == true_solver.energies() {
                    // Same energy vector, same curve.
                    return Ok((0.0, 0.0));
                }
                let curve = curve_from_solver(&solver, &opts, Some(&true_curve))?;
                trial_losses(&true_curve, &curve, cfg)
            })
            .collect::<Result<_>>()?;
        log::info!("m = {m}: {} trials done", trials.len());
        per_m.push(trials);
    }
    Ok(LossReport::from_trials(&cfg.m_values, &per_m, digest))
}

fn trial_losses(true_curve: &CapacityCurve, curve: &CapacityCurve, cfg: &SweepConfig) -> Result<(f64, f64)> {
    let mean = |v: Vec<f64>| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    let e = cfg.rates.iter().map(|&r| energy_loss(true_curve, curve, r)).collect::<Result<Vec<_>>>()?;
    let i = cfg.energies.iter().map(|&b| info_loss(true_curve, curve, b)).collect();
    Ok((mean(e), mean(i)))
}

/// A member of the set of functions agreeing with `beta` at the `m` sample
/// points: a triangular dip of depth `min(K - TV(beta), 1) / (4m)` spans
/// every gap between neighbouring samples.
///
/// The result lives on a point grid of `2k(m - 1) + 1 >= 2^13` nodes so that
/// the samples and the gap midpoints are nodes.
pub fn bumpy_adversary(beta: &GridFunction, m: usize, k: BvBudget) -> Result<GridFunction> {
    if !m.is_power_of_two() || m < 2 {
        return Err(Error::invalid(format!("m must be a power of 2 (>= 2), got {m}")));
    }
    let slack = k.get() - total_variation(beta);
    if !(slack > 0.0) {
        return Err(Error::invalid(format!(
            "no total-variation slack: TV(beta) = {} with budget {}",
            total_variation(beta),
            k.get()
        )));
    }
    let depth = slack.min(1.0) / (4.0 * m as f64);
    let gaps = m - 1;
    let half = (FINE_GRID - 1).div_ceil(2 * gaps);
    let per_gap = 2 * half;
    let n = per_gap * gaps + 1;
    let values = (0..n)
        .map(|node| {
            let x = node as f64 / (n - 1) as f64;
            let offset = (node % per_gap) as f64;
            let dip = depth * (1.0 - (offset - half as f64).abs() / half as f64);
            beta.eval(x) - dip
        })
        .collect();
    GridFunction::points(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capacity::capacity_energy_curve;
    use crate::channel::awgn_channel;
    use crate::grid::equispaced_locations;
    use crate::reconstruct::Method;
    use proptest::prelude::*;

    #[test]
    fn exact_power_law_fits() {
        let xs: Vec<f64> = (4..12).map(|j| (1u64 << j) as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x.powf(-0.5)).collect();
        let (s, r2) = fit_decay(&xs, &ys).unwrap();
        assert!((s + 0.5).abs() < 1e-12);
        assert!((r2 - 1.0).abs() < 1e-12);
        let (s, _) = fit_decay(&xs, &vec![3.0; xs.len()]).unwrap();
        assert!(s.abs() < 1e-12);
    }

    #[test]
    fn log_factor_flattens_slope() {
        let xs: Vec<f64> = (6..=14).map(|j| (1u64 << j) as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x.powf(-1.0 / 3.0) * x.ln().sqrt()).collect();
        let (s, _) = fit_decay(&xs, &ys).unwrap();
        assert!((-0.27..=-0.21).contains(&s), "slope {s}");
    }

    #[test]
    fn nonpositive_values_dropped() {
        let xs = [2.0, 4.0, 8.0, 16.0];
        let (s, _) = fit_decay(&xs, &[0.5, 0.0, 0.125, 0.0625]).unwrap();
        assert!((s + 1.0).abs() < 1e-12);
        assert!(fit_decay(&xs, &[0.5, 0.0, -1.0, 0.0625]).is_err());
    }

    #[test]
    fn ci_of_constant_is_zero() {
        assert_eq!(mean_ci95(&[2.0, 2.0, 2.0]), (2.0, 0.0));
        assert_eq!(mean_ci95(&[1.5]), (1.5, 0.0));
    }

    #[test]
    fn losses_between_constants() {
        let ch = awgn_channel(17, 33, 0.5, 4.0).unwrap();
        let opts = CurveOptions::with_points(8);
        let a = capacity_energy_curve(&ch, |_x: f64| 0.2, &opts).unwrap();
        let b = capacity_energy_curve(&ch, |_x: f64| 0.5, &opts).unwrap();
        for r in [0.0, 0.3 * a.c_max_bits, a.c_max_bits] {
            assert!((energy_loss(&a, &b, r).unwrap() - 0.3).abs() < 1e-12);
            assert_eq!(energy_loss(&a, &a, r).unwrap(), 0.0);
        }
        assert_eq!(info_loss(&a, &b, 0.0), 0.0);
        assert_eq!(info_loss(&a, &b, 0.35), a.c_max_bits);
        assert_eq!(info_loss(&a, &b, 0.5), a.c_max_bits);
        assert_eq!(info_loss(&b, &a, 0.35), info_loss(&a, &b, 0.35));
    }

    #[test]
    fn sweep_rejects_noiseless_repeats() {
        let ch = awgn_channel(9, 17, 0.5, 4.0).unwrap();
        let cfg = SweepConfig {
            reconstruction: ReconstructionConfig::new(Method::HaarLinear),
            sigma: 0.0,
            m_values: vec![4, 8, 16],
            trials: 2,
            rates: vec![0.2],
            energies: vec![],
            seed: 1,
            curve: CurveOptions::with_points(4),
        };
        assert!(loss_sweep(&|x: f64| x, &ch, &cfg).is_err());
    }

    #[test]
    fn aligned_piecewise_constant_truth_has_zero_loss() {
        let ch = awgn_channel(17, 33, 0.5, 4.0).unwrap();
        let truth = |x: f64| if x < 0.25 { 0.2 } else if x < 0.75 { 0.9 } else { 0.4 };
        let cfg = SweepConfig {
            reconstruction: ReconstructionConfig::new(Method::HaarLinear),
            sigma: 0.0,
            m_values: vec![4, 8, 16],
            trials: 1,
            rates: vec![0.1, 0.3],
            energies: vec![0.5, 0.7],
            seed: 3,
            curve: CurveOptions::with_points(6),
        };
        let report = loss_sweep(&truth, &ch, &cfg).unwrap();
        for row in &report.per_m {
            assert_eq!(row.energy_loss_mean, 0.0);
            assert_eq!(row.info_loss_mean, 0.0);
        }
        assert!(report.fitted_slope_energy.is_none());
    }

    #[test]
    fn digest_is_stable_and_sensitive() {
        let cfg = SweepConfig {
            reconstruction: ReconstructionConfig::new(Method::HaarShrinkage),
            sigma: 0.1,
            m_values: vec![64, 128],
            trials: 10,
            rates: vec![0.2],
            energies: vec![0.4],
            seed: 7,
            curve: CurveOptions::default(),
        };
        let d = config_digest(&cfg).unwrap();
        assert_eq!(d.len(), 64);
        assert_eq!(d, config_digest(&cfg.clone()).unwrap());
        let mut other = cfg;
        other.seed = 8;
        assert_ne!(d, config_digest(&other).unwrap());
    }

    #[test]
    fn bumpy_member_agrees_at_samples() {
        let beta = GridFunction::from_fn_points(FINE_GRID, |x: f64| 0.3 + 0.1 * x).unwrap();
        let k = BvBudget::new(1.0).unwrap();
        for m in [2, 8, 64, 1024] {
            let bumpy = bumpy_adversary(&beta, m, k).unwrap();
            assert!(bumpy.len() >= FINE_GRID);
            for x in equispaced_locations(m) {
                assert!((bumpy.eval(x) - beta.eval(x)).abs() < 1e-12, "m = {m}, x = {x}");
            }
            assert!(total_variation(&bumpy) <= 1.0);
            let mean_b: f64 = bumpy.values().iter().sum::<f64>() / bumpy.len() as f64;
            let mean_a: f64 = (0..bumpy.len()).map(|i| beta.eval(i as f64 / (bumpy.len() - 1) as f64)).sum::<f64>()
                / bumpy.len() as f64;
            assert!(mean_b < mean_a);
        }
    }

    #[test]
    fn bumpy_needs_slack() {
        let beta = GridFunction::from_fn_points(FINE_GRID, |x: f64| x).unwrap();
        assert!(bumpy_adversary(&beta, 8, BvBudget::new(1.0).unwrap()).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn bumpy_respects_budget(j in 1usize..9, amp in 0.0f64..0.4, k in 0.5f64..3.0) {
            let beta = GridFunction::from_fn_points(FINE_GRID, move |x: f64| amp * (6.0 * x).sin()).unwrap();
            prop_assume!(total_variation(&beta) < k);
            let bumpy = bumpy_adversary(&beta, 1 << j, BvBudget::new(k).unwrap()).unwrap();
            prop_assert!(total_variation(&bumpy) <= k + 1e-12);
        }
    }
}
