//! Haar-bump family for the `m^{-1/3}` energy-loss lower bound.
//!
//! Bin `i` of `r` equal bins carries `A (1 + b_i)` on its first half and
//! `A (1 - b_i)` on its second half, `A = K / (4r)`, `b_i = +-1`. An
//! estimator that sees noisy samples must decide every `b_i`; the input law
//! is the square pulse putting uniform mass on the first half of every bin,
//! so each wrong bit costs energy `A / r` there.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{derive_seed, q_function, rng_from_seed, sample, GridFunction, RealFunction, SampleSet};
use crate::loss::{config_digest, LossReport};

/// Stream ids for [`derive_seed`].
const BIT_STREAM: u64 = 0xB175;
const NOISE_STREAM: u64 = 0x7015E;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversaryFamily {
    r: usize,
    a: f64,
    k: f64,
    bits: Vec<i8>,
    sigma: f64,
}

impl AdversaryFamily {
    pub fn new(k: f64, bits: Vec<i8>, sigma: f64) -> Result<Self> {
        if !(k > 0.0) || !k.is_finite() {
            return Err(Error::invalid(format!("TV budget must be positive, got {k}")));
        }
        if bits.is_empty() {
            return Err(Error::invalid("family needs at least one bin"));
        }
        if bits.iter().any(|&b| b != 1 && b != -1) {
            return Err(Error::invalid("bits must be +1 or -1"));
        }
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::invalid(format!("noise sigma must be >= 0, got {sigma}")));
        }
        let r = bits.len();
        Ok(Self { r, a: k / (4.0 * r as f64), k, bits, sigma })
    }

    /// Member with independent uniform bits.
    pub fn random(k: f64, r: usize, sigma: f64, rng: &mut impl Rng) -> Result<Self> {
        let bits = (0..r).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect();
        Self::new(k, bits, sigma)
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn amplitude(&self) -> f64 {
        self.a
    }

    pub fn budget(&self) -> f64 {
        self.k
    }

    pub fn bits(&self) -> &[i8] {
        &self.bits
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Per-bit detection error `Q(A sqrt(m) / (sqrt(r) sigma))`.
    pub fn predicted_bit_error(&self, m: usize) -> f64 {
        if self.sigma == 0.0 {
            return 0.0;
        }
        q_function(self.a * (m as f64).sqrt() / ((self.r as f64).sqrt() * self.sigma))
    }

    /// Value on half-bin `h` (`0 .. 2r`).
    fn half_bin_value(&self, h: usize) -> f64 {
        let b = f64::from(self.bits[h / 2]);
        if h.is_multiple_of(2) {
            self.a * (1.0 + b)
        } else {
            self.a * (1.0 - b)
        }
    }
}

/// Half-bin containing `x`; points on a boundary belong to the left half-bin.
fn half_bin(x: f64, r: usize) -> usize {
    let h = (x * (2 * r) as f64).ceil() as i64 - 1;
    h.clamp(0, 2 * r as i64 - 1) as usize
}

impl RealFunction for AdversaryFamily {
    fn eval(&self, x: f64) -> f64 {
        self.half_bin_value(half_bin(x, self.r))
    }
}

impl RealFunction for &AdversaryFamily {
    fn eval(&self, x: f64) -> f64 {
        (**self).eval(x)
    }
}

/// The member as a piecewise-constant cell grid. `cells` must be a power of
/// two that splits every half-bin exactly.
pub fn build_member(fam: &AdversaryFamily, cells: usize) -> Result<GridFunction> {
    let halves = 2 * fam.r;
    if cells < 2 * halves || !cells.is_multiple_of(halves) {
        return Err(Error::invalid(format!(
            "{cells} cells cannot represent {} half-bins exactly (need a multiple of {halves}, at least {})",
            halves,
            2 * halves
        )));
    }
    let per_half = cells / halves;
    GridFunction::cells((0..cells).map(|c| fam.half_bin_value(c / per_half)).collect())
}

/// Per bin, the likelihood-ratio decision between the two Gaussian
/// hypotheses: `+1` when the first-half sample mean exceeds the second.
pub fn detect_bits(samples: &SampleSet, fam: &AdversaryFamily) -> Result<Vec<i8>> {
    let r = fam.r;
    if samples.len() < 2 * r {
        return Err(Error::invalid(format!(
            "{} samples cannot cover {} half-bins",
            samples.len(),
            2 * r
        )));
    }
    let mut sums = vec![0.0; 2 * r];
    let mut counts = vec![0usize; 2 * r];
    for (&x, &y) in samples.locations().iter().zip(samples.values()) {
        let h = half_bin(x, r);
        sums[h] += y;
        counts[h] += 1;
    }
    if let Some(h) = counts.iter().position(|&c| c == 0) {
        return Err(Error::invalid(format!("half-bin {h} holds no sample (m = {})", samples.len())));
    }
    Ok((0..r)
        .map(|i| {
            let first = sums[2 * i] / counts[2 * i] as f64;
            let second = sums[2 * i + 1] / counts[2 * i + 1] as f64;
            if first >= second {
                1
            } else {
                -1
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversaryConfig {
    /// Total-variation budget `K`.
    pub k: f64,
    pub sigma: f64,
    pub m_values: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    /// Override of `c0` in `r = round(c0 m^{1/3})`; defaults to
    /// `(K / (4 sigma))^{2/3}`, which puts the detection SNR at 1.
    #[serde(default)]
    pub c0: Option<f64>,
}

pub const MIN_TRIALS: usize = 50;

impl AdversaryConfig {
    pub fn c0(&self) -> Result<f64> {
        match self.c0 {
            Some(c) if c > 0.0 && c.is_finite() => Ok(c),
            Some(c) => Err(Error::invalid(format!("c0 must be positive, got {c}"))),
            None if self.sigma > 0.0 => Ok((self.k / (4.0 * self.sigma)).powf(2.0 / 3.0)),
            None => Err(Error::invalid("sigma = 0 gives no default c0; set c0 explicitly")),
        }
    }

    /// Number of bins at sample count `m`.
    pub fn bins(&self, m: usize) -> Result<usize> {
        let r = (self.c0()? * (m as f64).cbrt()).round().max(1.0) as usize;
        if m < 2 * r + 1 {
            return Err(Error::invalid(format!("m = {m} is too small for r = {r} bins")));
        }
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k > 0.0) || !self.k.is_finite() {
            return Err(Error::invalid(format!("TV budget must be positive, got {}", self.k)));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::invalid(format!("sigma must be >= 0, got {}", self.sigma)));
        }
        if self.trials < MIN_TRIALS {
            return Err(Error::invalid(format!("need at least {MIN_TRIALS} trials, got {}", self.trials)));
        }
        if self.m_values.is_empty() || self.m_values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("m_values must be non-empty and strictly increasing"));
        }
        if let Some(&m) = self.m_values.iter().find(|m| !m.is_power_of_two()) {
            return Err(Error::invalid(format!("every m must be a power of 2, got {m}")));
        }
        for &m in &self.m_values {
            self.bins(m)?;
        }
        Ok(())
    }
}

/// Draws bits and noise for one trial and returns the number of wrongly
/// detected bits.
fn run_trial(cfg: &AdversaryConfig, m: usize, r: usize, trial: u64) -> Result<(AdversaryFamily, usize)> {
    let mut rng = rng_from_seed(derive_seed(cfg.seed, BIT_STREAM ^ m as u64, trial));
    let fam = AdversaryFamily::random(cfg.k, r, cfg.sigma, &mut rng)?;
    let samples = sample(&fam, m, cfg.sigma, derive_seed(cfg.seed, NOISE_STREAM ^ m as u64, trial))?;
    let detected = detect_bits(&samples, &fam)?;
    let errors = detected.iter().zip(fam.bits()).filter(|(d, b)| d != b).count();
    Ok((fam, errors))
}

/// Mean energy loss of the detection estimator under the square-pulse input
/// law, `(A / r) * #wrong bits`, for each `m`. Information losses are not
/// defined here and reported as 0.
pub fn lower_bound_experiment(cfg: &AdversaryConfig) -> Result<LossReport> {
    cfg.validate()?;
    let digest = config_digest(cfg)?;
    let mut per_m = Vec::with_capacity(cfg.m_values.len());
    for &m in &cfg.m_values {
        let r = cfg.bins(m)?;
        let losses: Vec<(f64, f64)> = (0..cfg.trials as u64)
            .into_par_iter()
            .map(|t| {
                let (fam, errors) = run_trial(cfg, m, r, t)?;
                Ok((fam.amplitude() / r as f64 * errors as f64, 0.0))
            })
            .collect::<Result<_>>()?;
        per_m.push(losses);
    }
    Ok(LossReport::from_trials(&cfg.m_values, &per_m, digest))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BitErrorStats {
    pub m: usize,
    pub r: usize,
    /// Fraction of wrongly detected bits over all trials.
    pub empirical: f64,
    /// Binomial standard error of `empirical`.
    pub std_err: f64,
    pub predicted: f64,
}

/// Empirical per-bit detection error at each `m`, with the Gaussian prediction.
pub fn bit_error_experiment(cfg: &AdversaryConfig) -> Result<Vec<BitErrorStats>> {
    cfg.validate()?;
    cfg.m_values
        .iter()
        .map(|&m| {
            let r = cfg.bins(m)?;
            let errors: Vec<usize> = (0..cfg.trials as u64)
                .into_par_iter()
                .map(|t| run_trial(cfg, m, r, t).map(|(_, e)| e))
                .collect::<Result<_>>()?;
            let n = (cfg.trials * r) as f64;
            let rate = errors.iter().sum::<usize>() as f64 / n;
            let predicted = AdversaryFamily::new(cfg.k, vec![1; r], cfg.sigma)?.predicted_bit_error(m);
            Ok(BitErrorStats { m, r, empirical: rate, std_err: (rate * (1.0 - rate) / n).sqrt(), predicted })
        })
        .collect()
}
