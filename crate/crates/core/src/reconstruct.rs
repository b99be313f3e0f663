//! Harvesting-function reconstruction from equispaced samples.
//!
//! Sample `i` of `m = 2^J` is assigned to the cell `[i / m, (i + 1) / m)`,
//! which turns a sample vector into a function `f_Y` in `V_J`. Its `L2`
//! Haar coefficients are the orthonormal transform of the sample vector
//! scaled by `2^{-J/2}`, so i.i.d. sample noise of standard deviation `sigma`
//! becomes coefficient noise of standard deviation exactly
//! `sigma_eff = sigma * 2^{-J/2}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridFunction, SampleSet, FINE_GRID};
use crate::spline::NaturalCubicSpline;
use crate::wavelet::{haar_forward, haar_inverse, soft_threshold, universal_threshold};

/// Normalizing constant of the median absolute deviation of a standard normal.
const MAD_TO_SIGMA: f64 = 0.6745;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    HaarLinear,
    HaarShrinkage,
    CubicSpline,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "haar-linear" => Ok(Method::HaarLinear),
            "haar-shrinkage" => Ok(Method::HaarShrinkage),
            "cubic-spline" => Ok(Method::CubicSpline),
            other => Err(Error::invalid(format!(
                "unknown reconstruction method `{other}` (expected haar-linear, haar-shrinkage or cubic-spline)"
            ))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::HaarLinear => "haar-linear",
            Method::HaarShrinkage => "haar-shrinkage",
            Method::CubicSpline => "cubic-spline",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdRule {
    #[default]
    Universal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionConfig {
    pub method: Method,
    /// Known per-sample noise standard deviation; estimated when absent.
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default)]
    pub threshold_rule: ThresholdRule,
}

impl ReconstructionConfig {
    pub fn new(method: Method) -> Self {
        Self { method, sigma: None, threshold_rule: ThresholdRule::Universal }
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = Some(sigma);
        self
    }

    pub fn validate(&self) -> Result<()> {
        match self.sigma {
            Some(s) if !(s >= 0.0) || !s.is_finite() => {
                Err(Error::invalid(format!("sigma must be >= 0, got {s}")))
            }
            _ => Ok(()),
        }
    }
}

fn dyadic_levels(m: usize) -> Result<usize> {
    if !m.is_power_of_two() {
        return Err(Error::invalid(format!(
            "Haar reconstruction needs m = 2^J samples, got m = {m}"
        )));
    }
    Ok(m.trailing_zeros() as usize)
}

/// Linear (scale-`J`) Haar reconstruction: cell `i` of width `2^{-J}` takes
/// the value of sample `i`.
pub fn reconstruct_noiseless(s: &SampleSet) -> Result<GridFunction> {
    dyadic_levels(s.len())?;
    GridFunction::cells(s.values().to_vec())
}

/// Soft-threshold Haar shrinkage with the universal threshold
/// `lambda = sigma_eff sqrt(2 ln m)`. The scaling coefficient is not shrunk.
pub fn reconstruct_shrinkage(s: &SampleSet, cfg: &ReconstructionConfig) -> Result<GridFunction> {
    cfg.validate()?;
    let m = s.len();
    let levels = dyadic_levels(m)?;
    let sigma = match cfg.sigma {
        Some(sigma) => sigma,
        None => estimate_sigma(s)?,
    };
    let cell_norm = (0.5f64).powi(levels as i32).sqrt();
    let coeffs = haar_forward(s.values())?.scaled(cell_norm);
    let sigma_eff = sigma * cell_norm;
    let lambda = match cfg.threshold_rule {
        ThresholdRule::Universal => universal_threshold(sigma_eff, m),
    };
    let shrunk = soft_threshold(&coeffs, lambda)?;
    let values = haar_inverse(&shrunk.scaled(1.0 / cell_norm))?;
    GridFunction::cells(values)
}

/// Natural cubic spline through the samples, evaluated on the `2^13` point grid.
pub fn reconstruct_spline(s: &SampleSet) -> Result<GridFunction> {
    if s.len() < 4 {
        return Err(Error::invalid(format!("spline reconstruction needs m >= 4, got {}", s.len())));
    }
    let spline = NaturalCubicSpline::new(s.locations(), s.values())?;
    GridFunction::from_fn_points(FINE_GRID, &spline)
}

/// Noise level from the finest-scale Haar details: `median(|d|) / 0.6745`.
/// On the orthonormal sample-vector transform this is already the per-sample
/// scale (the `2^{-J/2}` coefficient scaling and its undoing cancel).
pub fn estimate_sigma(s: &SampleSet) -> Result<f64> {
    let m = s.len();
    if m < 4 {
        return Err(Error::invalid(format!("noise estimation needs m >= 4 samples, got {m}")));
    }
    let levels = dyadic_levels(m)?;
    let coeffs = haar_forward(s.values())?;
    let mut finest: Vec<f64> = coeffs.details()[levels - 1].iter().map(|d| d.abs()).collect();
    Ok(median(&mut finest) / MAD_TO_SIGMA)
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn reconstruct(s: &SampleSet, cfg: &ReconstructionConfig) -> Result<GridFunction> {
    match cfg.method {
        Method::HaarLinear => reconstruct_noiseless(s),
        Method::HaarShrinkage => reconstruct_shrinkage(s, cfg),
        Method::CubicSpline => reconstruct_spline(s),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{l2_distance_sq, sample, sine_plus_step, total_variation};
    use crate::loss::fit_decay;
    use proptest::prelude::*;

    fn step(x: f64) -> f64 {
        if x >= 0.5 {
            1.0
        } else {
            0.0
        }
    }

    #[test]
    fn all_methods_exact_on_constants() {
        let s = sample(|_x: f64| 2.5, 64, 0.0, 0).unwrap();
        for method in [Method::HaarLinear, Method::HaarShrinkage, Method::CubicSpline] {
            let cfg = ReconstructionConfig::new(method).with_sigma(0.0);
            let f = reconstruct(&s, &cfg).unwrap();
            assert!(f.values().iter().all(|v| (v - 2.5).abs() < 1e-12), "{method}");
        }
        // shrinkage with estimated sigma on a constant: estimate is 0
        let f = reconstruct(&s, &ReconstructionConfig::new(Method::HaarShrinkage)).unwrap();
        assert!(f.values().iter().all(|v| (v - 2.5).abs() < 1e-12));
    }

    #[test]
    fn noiseless_step_is_exact() {
        let s = sample(step, 64, 0.0, 0).unwrap();
        let f = reconstruct_noiseless(&s).unwrap();
        assert!(l2_distance_sq(&f, step, 1 << 13) == 0.0);
    }

    #[test]
    fn noiseless_equals_haar_round_trip() {
        let s = sample(sine_plus_step, 128, 0.0, 0).unwrap();
        let f = reconstruct_noiseless(&s).unwrap();
        let rt = haar_inverse(&haar_forward(s.values()).unwrap()).unwrap();
        for (a, b) in f.values().iter().zip(&rt) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn non_dyadic_m_rejected() {
        let s = sample(sine_plus_step, 100, 0.0, 0).unwrap();
        assert!(reconstruct_noiseless(&s).is_err());
        let cfg = ReconstructionConfig::new(Method::HaarShrinkage).with_sigma(0.1);
        assert!(reconstruct_shrinkage(&s, &cfg).is_err());
        assert!(reconstruct_spline(&s).is_ok());
    }

    #[test]
    fn shrinkage_without_sigma_needs_four_samples() {
        let s = sample(sine_plus_step, 2, 0.0, 0).unwrap();
        assert!(reconstruct_shrinkage(&s, &ReconstructionConfig::new(Method::HaarShrinkage)).is_err());
    }

    #[test]
    fn shrinkage_with_zero_sigma_is_linear() {
        let s = sample(sine_plus_step, 256, 0.2, 5).unwrap();
        let cfg = ReconstructionConfig::new(Method::HaarShrinkage).with_sigma(0.0);
        let a = reconstruct_shrinkage(&s, &cfg).unwrap();
        let b = reconstruct_noiseless(&s).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn shrinkage_of_pure_noise_is_mostly_constant() {
        // Every detail is pure noise; the output is non-constant only when
        // some |noise| exceeds the threshold. Union bound over 255 details:
        let m = 256;
        let bound = (m - 1) as f64 * 2.0 * crate::grid::q_function((2.0 * (m as f64).ln()).sqrt());
        let cfg = ReconstructionConfig::new(Method::HaarShrinkage).with_sigma(0.5);
        let trials = 400;
        let non_constant = (0..trials)
            .filter(|&seed| {
                let s = sample(|_x: f64| 1.0, m, 0.5, seed).unwrap();
                let f = reconstruct_shrinkage(&s, &cfg).unwrap();
                total_variation(&f) > 1e-12
            })
            .count();
        assert!((non_constant as f64 / trials as f64) <= bound, "{non_constant} non-constant, bound {bound}");
    }

    #[test]
    fn spline_reproduces_cubic_away_from_ends() {
        let cubic = |x: f64| 2.0 * x * x * x - x * x + 0.5 * x - 3.0;
        let s = sample(cubic, 64, 0.0, 0).unwrap();
        let f = reconstruct_spline(&s).unwrap();
        // Compare at fine-grid nodes, away from the natural end conditions.
        let n = f.len();
        for (node, v) in f.values().iter().enumerate() {
            let x = node as f64 / (n - 1) as f64;
            if (20.0 / 63.0..=43.0 / 63.0).contains(&x) {
                assert!((v - cubic(x)).abs() < 1e-8, "x={x}");
            }
        }
    }

    #[test]
    fn spline_overshoots_near_jump() {
        let s = sample(sine_plus_step, 128, 0.0, 0).unwrap();
        let spline = reconstruct_spline(&s).unwrap();
        let haar = reconstruct_noiseless(&s).unwrap();
        let window_err = |g: &GridFunction| {
            (0..FINE_GRID)
                .map(|i| (i as f64 + 0.5) / FINE_GRID as f64)
                .filter(|x| (x - 0.5).abs() <= 0.05)
                .map(|x| (g.eval(x) - sine_plus_step(x)).abs())
                .fold(0.0, f64::max)
        };
        assert!(window_err(&spline) > window_err(&haar));
    }

    #[test]
    fn sigma_estimate_of_constant_is_zero() {
        let s = sample(|_x: f64| 4.0, 64, 0.0, 0).unwrap();
        assert_eq!(estimate_sigma(&s).unwrap(), 0.0);
        let s = sample(|_x: f64| 4.0, 2, 0.0, 0).unwrap();
        assert!(estimate_sigma(&s).is_err());
    }

    #[test]
    fn sigma_estimate_on_pure_noise() {
        let good = (0..100)
            .filter(|&seed| {
                let s = sample(|_x: f64| 0.0, 4096, 1.0, 1000 + seed).unwrap();
                let est = estimate_sigma(&s).unwrap();
                (0.9..=1.1).contains(&est)
            })
            .count();
        assert!(good >= 95, "{good}/100 estimates in range");
    }

    #[test]
    fn sigma_estimate_with_signal() {
        for seed in 0..20 {
            let s = sample(sine_plus_step, 1024, 0.1, seed).unwrap();
            let est = estimate_sigma(&s).unwrap();
            assert!((0.08..=0.13).contains(&est), "seed {seed}: {est}");
        }
    }

    #[test]
    fn noiseless_rate_fit_is_steeper_than_linear_bound() {
        // The jump at 0.5 is dyadic-aligned, so only the smooth part
        // contributes and the squared error falls like m^-2.
        let ms: Vec<f64> = (4..=12).map(|j| (1u64 << j) as f64).collect();
        let errs: Vec<f64> = ms
            .iter()
            .map(|&m| {
                let s = sample(sine_plus_step, m as usize, 0.0, 0).unwrap();
                let f = reconstruct_noiseless(&s).unwrap();
                l2_distance_sq(&f, sine_plus_step, FINE_GRID)
            })
            .collect();
        let (slope, r2) = fit_decay(&ms, &errs).unwrap();
        assert!(slope < -1.8 && r2 > 0.99, "slope {slope}, r2 {r2}");
    }

    #[test]
    fn risk_oracle_inequality_single_batch() {
        use crate::grid::rng_from_seed;
        use rand_distr::{Distribution, StandardNormal};
        let p = 64;
        let sigma = 0.05;
        let theta: Vec<f64> = (0..p).map(|i| if i % 16 == 3 { 5.0 * sigma } else { 0.0 }).collect();
        let lambda = universal_threshold(sigma, p);
        let mut rng = rng_from_seed(3);
        let trials = 1000;
        let mut mse = 0.0;
        for _ in 0..trials {
            mse += theta
                .iter()
                .map(|&t| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    let est = crate::wavelet::soft(t + sigma * z, lambda);
                    (est - t).powi(2)
                })
                .sum::<f64>();
        }
        mse /= trials as f64;
        let oracle: f64 = sigma * sigma + theta.iter().map(|t| (t * t).min(sigma * sigma)).sum::<f64>();
        assert!(mse <= (2.0 * (p as f64).ln() + 1.0) * oracle);
    }

    proptest! {
        #[test]
        fn shrinkage_never_increases_tv(v in prop::collection::vec(-3.0f64..3.0, 64), sigma in 0.0f64..2.0) {
            let s = SampleSet::equispaced(v, 0.0).unwrap();
            let cfg = ReconstructionConfig::new(Method::HaarShrinkage).with_sigma(sigma);
            let f = reconstruct_shrinkage(&s, &cfg).unwrap();
            let fy = reconstruct_noiseless(&s).unwrap();
            prop_assert!(total_variation(&f) <= total_variation(&fy) + 1e-9);
        }

        #[test]
        fn shrinkage_keeps_mean(v in prop::collection::vec(-3.0f64..3.0, 32), sigma in 0.0f64..2.0) {
            let s = SampleSet::equispaced(v.clone(), 0.0).unwrap();
            let cfg = ReconstructionConfig::new(Method::HaarShrinkage).with_sigma(sigma);
            let f = reconstruct_shrinkage(&s, &cfg).unwrap();
            let mean_in = v.iter().sum::<f64>() / 32.0;
            let mean_out = f.values().iter().sum::<f64>() / 32.0;
            prop_assert!((mean_in - mean_out).abs() < 1e-12);
        }
    }
}
