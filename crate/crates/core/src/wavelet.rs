//! Orthonormal Haar multiresolution analysis on `2^J` samples.
//!
//! The butterfly is `(a + b) / sqrt(2)`, `(a - b) / sqrt(2)`, so the transform
//! is orthogonal and Parseval holds exactly up to rounding. Detail scale `j`
//! holds `2^j` coefficients; `j = 0` is the coarsest, `j = J - 1` the finest.
//! The detail sign follows `psi(x) = phi(2x) - phi(2x - 1)`: positive on the
//! left half of its support.

use std::f64::consts::FRAC_1_SQRT_2;
use std::io::Write;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct WaveletCoefficients {
    scaling: f64,
    details: Vec<Vec<f64>>,
}

impl WaveletCoefficients {
    /// Validates the tree shape: `details[j].len() == 2^j`.
    pub fn new(scaling: f64, details: Vec<Vec<f64>>) -> Result<Self> {
        for (j, d) in details.iter().enumerate() {
            if d.len() != 1 << j {
                return Err(Error::invalid(format!(
                    "detail scale {j} has {} coefficients, expected {}",
                    d.len(),
                    1usize << j
                )));
            }
        }
        Ok(Self { scaling, details })
    }

    pub fn scaling(&self) -> f64 {
        self.scaling
    }

    pub fn details(&self) -> &[Vec<f64>] {
        &self.details
    }

    /// Finest scale `J`; the tree describes `2^J` samples.
    pub fn levels(&self) -> usize {
        self.details.len()
    }

    /// Number of detail coefficients (`2^J - 1`).
    pub fn detail_count(&self) -> usize {
        (1usize << self.details.len()) - 1
    }

    pub fn detail(&self, j: usize, k: usize) -> f64 {
        self.details[j][k]
    }

    pub fn set_detail(&mut self, j: usize, k: usize, value: f64) {
        self.details[j][k] = value;
    }

    pub fn energy(&self) -> f64 {
        self.scaling * self.scaling
            + self.details.iter().flatten().map(|d| d * d).sum::<f64>()
    }

    /// Multiplies every coefficient by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            scaling: self.scaling * factor,
            details: self
                .details
                .iter()
                .map(|d| d.iter().map(|v| v * factor).collect())
                .collect(),
        }
    }

    fn map_details(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            scaling: self.scaling,
            details: self.details.iter().map(|d| d.iter().map(|&v| f(v)).collect()).collect(),
        }
    }

    /// `j,k,value` CSV with `j = -1` for the scaling coefficient.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["j", "k", "value"])?;
        w.write_record(["-1".to_string(), "0".to_string(), self.scaling.to_string()])?;
        for (j, d) in self.details.iter().enumerate() {
            for (k, v) in d.iter().enumerate() {
                w.write_record([j.to_string(), k.to_string(), v.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn log2_exact(n: usize) -> Result<usize> {
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::invalid(format!("length must be a power of 2, got {n}")));
    }
    Ok(n.trailing_zeros() as usize)
}

pub fn haar_forward(samples: &[f64]) -> Result<WaveletCoefficients> {
    let levels = log2_exact(samples.len())?;
    let mut approx = samples.to_vec();
    let mut details = vec![Vec::new(); levels];
    for j in (0..levels).rev() {
        let half = approx.len() / 2;
        let mut next = Vec::with_capacity(half);
        let mut d = Vec::with_capacity(half);
        for pair in approx.chunks_exact(2) {
            next.push((pair[0] + pair[1]) * FRAC_1_SQRT_2);
            d.push((pair[0] - pair[1]) * FRAC_1_SQRT_2);
        }
        details[j] = d;
        approx = next;
    }
    Ok(WaveletCoefficients { scaling: approx[0], details })
}

pub fn haar_inverse(c: &WaveletCoefficients) -> Result<Vec<f64>> {
    let mut approx = vec![c.scaling];
    for (j, d) in c.details.iter().enumerate() {
        if d.len() != approx.len() {
            return Err(Error::invalid(format!(
                "malformed coefficient tree at scale {j}: {} details for {} approximations",
                d.len(),
                approx.len()
            )));
        }
        let mut next = Vec::with_capacity(2 * approx.len());
        for (a, b) in approx.iter().zip(d) {
            next.push((a + b) * FRAC_1_SQRT_2);
            next.push((a - b) * FRAC_1_SQRT_2);
        }
        approx = next;
    }
    Ok(approx)
}

/// Zeroes every detail scale `j >= coarse_levels`: the orthogonal projection
/// onto `V_{coarse_levels}`.
pub fn project_to_scale(c: &WaveletCoefficients, coarse_levels: usize) -> Result<WaveletCoefficients> {
    if coarse_levels > c.levels() {
        return Err(Error::invalid(format!(
            "projection scale {coarse_levels} exceeds finest scale {}",
            c.levels()
        )));
    }
    let mut out = c.clone();
    for d in out.details.iter_mut().skip(coarse_levels) {
        d.iter_mut().for_each(|v| *v = 0.0);
    }
    Ok(out)
}

/// Keeps the `t` largest-magnitude detail coefficients across all scales
/// (the scaling coefficient is always kept and not counted). Ties go to the
/// coarser scale, then the lower location.
pub fn keep_largest_t(c: &WaveletCoefficients, t: usize) -> WaveletCoefficients {
    let mut order: Vec<(usize, usize)> = c
        .details
        .iter()
        .enumerate()
        .flat_map(|(j, d)| (0..d.len()).map(move |k| (j, k)))
        .collect();
    if t >= order.len() {
        return c.clone();
    }
    // stable sort keeps the (j, k) enumeration order among equal magnitudes
    order.sort_by(|&(ja, ka), &(jb, kb)| {
        c.details[jb][kb].abs().total_cmp(&c.details[ja][ka].abs())
    });
    let mut out = c.map_details(|_| 0.0);
    for &(j, k) in &order[..t] {
        out.details[j][k] = c.details[j][k];
    }
    out
}

/// Soft shrinkage `y -> sign(y) max(|y| - lambda, 0)` of every detail
/// coefficient; the scaling coefficient is left alone.
pub fn soft_threshold(c: &WaveletCoefficients, lambda: f64) -> Result<WaveletCoefficients> {
    if !(lambda >= 0.0) {
        return Err(Error::invalid(format!("threshold must be >= 0, got {lambda}")));
    }
    Ok(c.map_details(|y| soft(y, lambda)))
}

#[inline]
pub fn soft(y: f64, lambda: f64) -> f64 {
    y.signum() * (y.abs() - lambda).max(0.0)
}

/// Universal threshold `sqrt(2 sigma^2 ln p)`.
pub fn universal_threshold(sigma_eff: f64, p: usize) -> f64 {
    let p = p.max(1) as f64;
    (2.0 * sigma_eff * sigma_eff * p.ln()).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{rng_from_seed, sine_plus_step, GridFunction};
    use proptest::prelude::*;
    use rand::Rng;
    use std::f64::consts::SQRT_2;

    #[test]
    fn forward_constant() {
        let c = haar_forward(&[1.0, 1.0, 1.0, 1.0]).unwrap();
        assert!((c.scaling() - 2.0).abs() < 1e-15);
        assert!(c.details().iter().flatten().all(|&d| d.abs() < 1e-15));
    }

    #[test]
    fn forward_finest_oscillation() {
        let c = haar_forward(&[1.0, -1.0]).unwrap();
        assert_eq!(c.scaling(), 0.0);
        assert!((c.detail(0, 0) - SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn forward_single_butterfly() {
        let c = haar_forward(&[3.0, 1.0]).unwrap();
        assert!((c.scaling() - 2.0 * SQRT_2).abs() < 1e-14);
        assert!((c.detail(0, 0) - SQRT_2).abs() < 1e-14);
        assert!((c.energy() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn forward_rejects_non_power_of_two() {
        assert!(haar_forward(&[1.0, 2.0, 3.0]).is_err());
        assert!(haar_forward(&[]).is_err());
    }

    #[test]
    fn inverse_examples() {
        let c = WaveletCoefficients::new(2.0, vec![vec![0.0], vec![0.0, 0.0]]).unwrap();
        let v = haar_inverse(&c).unwrap();
        for x in v {
            assert!((x - 1.0).abs() < 1e-15);
        }
        let c = WaveletCoefficients::new(0.0, vec![vec![SQRT_2]]).unwrap();
        let v = haar_inverse(&c).unwrap();
        assert!((v[0] - 1.0).abs() < 1e-15 && (v[1] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn malformed_tree_rejected() {
        assert!(WaveletCoefficients::new(0.0, vec![vec![1.0], vec![1.0]]).is_err());
    }

    #[test]
    fn round_trip_random_vectors() {
        let mut rng = rng_from_seed(11);
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let v: Vec<f64> = (0..64).map(|_| rng.random_range(-10.0..10.0)).collect();
            let back = haar_inverse(&haar_forward(&v).unwrap()).unwrap();
            for (a, b) in v.iter().zip(&back) {
                worst = worst.max((a - b).abs());
            }
        }
        assert!(worst < 1e-10, "max round-trip error {worst}");
    }

    #[test]
    fn projection_extremes() {
        let v: Vec<f64> = (0..16).map(|i| (i as f64).sin()).collect();
        let c = haar_forward(&v).unwrap();
        assert_eq!(project_to_scale(&c, 4).unwrap(), c);
        let mean = v.iter().sum::<f64>() / 16.0;
        let coarse = haar_inverse(&project_to_scale(&c, 0).unwrap()).unwrap();
        assert!(coarse.iter().all(|x| (x - mean).abs() < 1e-12));
        assert!(project_to_scale(&c, 5).is_err());
    }

    #[test]
    fn projection_keeps_dyadic_step() {
        let step = GridFunction::from_fn_cells(128, |x: f64| if x >= 0.5 { 1.0 } else { 0.0 }).unwrap();
        let c = haar_forward(step.values()).unwrap();
        let back = haar_inverse(&project_to_scale(&c, 1).unwrap()).unwrap();
        for (a, b) in back.iter().zip(step.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn keep_largest_edge_cases() {
        let v: Vec<f64> = (0..32).map(|i| ((i * 7) % 5) as f64).collect();
        let c = haar_forward(&v).unwrap();
        assert_eq!(keep_largest_t(&c, 31), c);
        assert_eq!(keep_largest_t(&c, 100), c);
        let only = keep_largest_t(&c, 0);
        assert_eq!(only.scaling(), c.scaling());
        assert!(only.details().iter().flatten().all(|&d| d == 0.0));
    }

    #[test]
    fn keep_largest_tie_break() {
        let c = WaveletCoefficients::new(1.0, vec![vec![1.0], vec![-1.0, 1.0]]).unwrap();
        let kept = keep_largest_t(&c, 2);
        assert_eq!(kept.details(), &[vec![1.0], vec![-1.0, 0.0]]);
    }

    #[test]
    fn t_term_error_decay() {
        // Function-normalized coefficients of the sine-plus-step function at J = 10.
        let levels = 10;
        let f = GridFunction::from_fn_cells(1 << levels, sine_plus_step).unwrap();
        let c = haar_forward(f.values()).unwrap().scaled((0.5f64).powi(levels).sqrt());
        let ts: Vec<f64> = (0..6).map(|i| (4 << i) as f64).collect();
        let errs: Vec<f64> = ts
            .iter()
            .map(|&t| {
                let kept = keep_largest_t(&c, t as usize);
                c.energy() - kept.energy()
            })
            .collect();
        let (slope, _) = crate::loss::fit_decay(&ts, &errs).unwrap();
        assert!(slope <= -1.5, "t-term slope {slope}");
    }

    #[test]
    fn soft_threshold_examples() {
        assert_eq!(soft(3.0, 1.0), 2.0);
        assert_eq!(soft(-0.5, 1.0), 0.0);
        assert_eq!(soft(-2.0, 0.5), -1.5);
        let c = WaveletCoefficients::new(5.0, vec![vec![3.0]]).unwrap();
        let s = soft_threshold(&c, 1.0).unwrap();
        assert_eq!(s.scaling(), 5.0);
        assert_eq!(s.detail(0, 0), 2.0);
        assert!(soft_threshold(&c, -0.1).is_err());
    }

    #[test]
    fn universal_threshold_values() {
        assert_eq!(universal_threshold(0.0, 100), 0.0);
        let l3 = universal_threshold(1.0, 3);
        assert!((2.0 * 2f64.ln()).sqrt() < l3 && l3 < (2.0 * 4f64.ln()).sqrt());
        assert!((l3 - 1.4823).abs() < 1e-4);
        assert!((universal_threshold(0.1, 1024) - 0.3724).abs() < 1e-4);
        assert_eq!(universal_threshold(1.0, 1), 0.0);
    }

    #[test]
    fn coefficient_csv_dump() {
        let c = haar_forward(&[3.0, 1.0]).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "j,k,value");
        assert!(lines[1].starts_with("-1,0,2.828"));
        assert!(lines[2].starts_with("0,0,1.414"));
    }

    fn pow2_vec() -> impl Strategy<Value = Vec<f64>> {
        (0usize..9).prop_flat_map(|j| prop::collection::vec(-100.0f64..100.0, 1usize << j))
    }

    proptest! {
        #[test]
        fn parseval(v in pow2_vec()) {
            let c = haar_forward(&v).unwrap();
            let norm: f64 = v.iter().map(|x| x * x).sum();
            prop_assert!((c.energy() - norm).abs() <= 1e-10 * norm.max(1e-300));
        }

        #[test]
        fn soft_threshold_is_contraction(v in pow2_vec(), lambda in 0.0f64..50.0) {
            let c = haar_forward(&v).unwrap();
            let s = soft_threshold(&c, lambda).unwrap();
            for (a, b) in c.details().iter().flatten().zip(s.details().iter().flatten()) {
                prop_assert!((a - b).abs() <= lambda + 1e-12);
            }
        }

        #[test]
        fn t_term_error_is_dropped_energy(v in pow2_vec(), t in 0usize..300) {
            let c = haar_forward(&v).unwrap();
            let kept = keep_largest_t(&c, t);
            let recon = haar_inverse(&kept).unwrap();
            let err: f64 = v.iter().zip(&recon).map(|(a, b)| (a - b).powi(2)).sum();
            let dropped: f64 = c.details().iter().flatten()
                .zip(kept.details().iter().flatten())
                .filter(|(_, k)| **k == 0.0)
                .map(|(d, _)| d * d)
                .sum();
            prop_assert!((err - dropped).abs() <= 1e-9 * (1.0 + dropped));
        }

        #[test]
        fn coefficient_decay_bounded_by_tv(steps in prop::collection::vec(-2.0f64..2.0, 1..12), seed in 0u64..1000) {
            // random BV step function on a 256-cell grid
            let mut rng = rng_from_seed(seed);
            let mut jumps: Vec<(f64, f64)> = steps.iter().map(|&h| (rng.random::<f64>(), h)).collect();
            jumps.sort_by(|a, b| a.0.total_cmp(&b.0));
            let levels = 8;
            let f = GridFunction::from_fn_cells(1 << levels, |x: f64| {
                jumps.iter().filter(|(loc, _)| x >= *loc).map(|(_, h)| h).sum::<f64>()
            }).unwrap();
            let tv = crate::grid::total_variation(&f);
            let c = haar_forward(f.values()).unwrap().scaled((0.5f64).powi(levels).sqrt());
            for (j, d) in c.details().iter().enumerate() {
                let l1: f64 = d.iter().map(|x| x.abs()).sum();
                prop_assert!(l1 <= (0.5f64).powi(j as i32).sqrt() * tv + 1e-12);
            }
        }
    }
}
