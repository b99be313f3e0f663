//! Grid representations of real functions on `[0, 1]`, discrete total
//! variation, equispaced sampling and small numeric helpers shared by the
//! rest of the crate.

use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Resolution of the fine evaluation grid (`2^13` points).
pub const FINE_GRID: usize = 1 << 13;

/// The project-wide seedable generator.
pub type SeededRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Mixes a base seed with a stream id and a counter into an independent seed
/// (splitmix64 finalizer). Used to give every Monte Carlo trial its own stream.
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    let mut z = base
        ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Anything that can be evaluated pointwise on `[0, 1]`.
pub trait RealFunction {
    fn eval(&self, x: f64) -> f64;
}

impl<F: Fn(f64) -> f64> RealFunction for F {
    fn eval(&self, x: f64) -> f64 {
        self(x)
    }
}

/// `0.1 sin(4 pi x) + 1{x >= 0.5}`: a smooth oscillation plus a unit jump.
/// Total variation 1.8.
pub fn sine_plus_step(x: f64) -> f64 {
    0.1 * (4.0 * std::f64::consts::PI * x).sin() + if x >= 0.5 { 1.0 } else { 0.0 }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridKind {
    /// Values at `x_i = i / (n - 1)`, linearly interpolated in between.
    PointSampled,
    /// Value `v_i` on the cell `[i / n, (i + 1) / n)`; `n` is a power of two.
    PiecewiseConstantCells,
}

/// A real function on `[0, 1]` stored on a regular grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    values: Vec<f64>,
    kind: GridKind,
}

impl GridFunction {
    pub fn new(values: Vec<f64>, kind: GridKind) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::invalid(format!(
                "grid function needs at least 2 values, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite grid value at index {i}")));
        }
        if kind == GridKind::PiecewiseConstantCells && !values.len().is_power_of_two() {
            return Err(Error::invalid(format!(
                "cell grid length must be a power of 2, got {}",
                values.len()
            )));
        }
        Ok(Self { values, kind })
    }

    pub fn points(values: Vec<f64>) -> Result<Self> {
        Self::new(values, GridKind::PointSampled)
    }

    pub fn cells(values: Vec<f64>) -> Result<Self> {
        Self::new(values, GridKind::PiecewiseConstantCells)
    }

    /// Samples `f` at the `n` nodes `i / (n - 1)`.
    pub fn from_fn_points(n: usize, f: impl RealFunction) -> Result<Self> {
        let denom = (n.max(2) - 1) as f64;
        Self::points((0..n).map(|i| f.eval(i as f64 / denom)).collect())
    }

    /// Evaluates `f` at the midpoints of `n` equal cells.
    pub fn from_fn_cells(n: usize, f: impl RealFunction) -> Result<Self> {
        let h = 1.0 / n as f64;
        Self::cells((0..n).map(|i| f.eval((i as f64 + 0.5) * h)).collect())
    }

    pub fn constant_points(n: usize, value: f64) -> Result<Self> {
        Self::points(vec![value; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Location associated with each stored value: nodes for point grids,
    /// cell midpoints for cell grids.
    pub fn locations(&self) -> Vec<f64> {
        let n = self.values.len();
        match self.kind {
            GridKind::PointSampled => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
            GridKind::PiecewiseConstantCells => {
                (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect()
            }
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.values.len();
        let x = x.clamp(0.0, 1.0);
        match self.kind {
            GridKind::PointSampled => {
                let pos = x * (n - 1) as f64;
                let nearest = pos.round();
                // snap onto a node when the location is a node up to rounding
                if (pos - nearest).abs() <= 1e-9 {
                    return self.values[nearest as usize];
                }
                let i = (pos.floor() as usize).min(n - 2);
                let t = pos - i as f64;
                self.values[i] * (1.0 - t) + self.values[i + 1] * t
            }
            GridKind::PiecewiseConstantCells => {
                let i = ((x * n as f64).floor() as usize).min(n - 1);
                self.values[i]
            }
        }
    }

    /// Point-grid resampling at `n` nodes; cell functions are evaluated at
    /// the nodes, point functions are linearly interpolated.
    pub fn resample_points(&self, n: usize) -> Result<GridFunction> {
        GridFunction::from_fn_points(n, |x| self.eval(x))
    }

    /// Cell-grid representative with `n` cells by midpoint evaluation.
    pub fn to_cells(&self, n: usize) -> Result<GridFunction> {
        GridFunction::from_fn_cells(n, |x| self.eval(x))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<GridFunction> {
        GridFunction::new(self.values.iter().map(|&v| f(v)).collect(), self.kind)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

impl RealFunction for GridFunction {
    fn eval(&self, x: f64) -> f64 {
        GridFunction::eval(self, x)
    }
}

impl RealFunction for &GridFunction {
    fn eval(&self, x: f64) -> f64 {
        GridFunction::eval(self, x)
    }
}

/// Discrete total variation: sum of absolute increments between successive
/// grid values.
pub fn total_variation(f: &GridFunction) -> f64 {
    f.values().windows(2).map(|w| (w[1] - w[0]).abs()).sum()
}

/// Squared `L2[0,1]` distance by the midpoint rule on `n` cells.
pub fn l2_distance_sq(a: impl RealFunction, b: impl RealFunction, n: usize) -> f64 {
    let h = 1.0 / n as f64;
    (0..n)
        .map(|i| {
            let x = (i as f64 + 0.5) * h;
            let d = a.eval(x) - b.eval(x);
            d * d
        })
        .sum::<f64>()
        * h
}

/// `L1[0,1]` distance by the midpoint rule on `n` cells.
pub fn l1_distance(a: impl RealFunction, b: impl RealFunction, n: usize) -> f64 {
    let h = 1.0 / n as f64;
    (0..n)
        .map(|i| {
            let x = (i as f64 + 0.5) * h;
            (a.eval(x) - b.eval(x)).abs()
        })
        .sum::<f64>()
        * h
}

/// Total-variation budget `K` of the class `BV_K[0,1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BvBudget(f64);

impl BvBudget {
    pub fn new(k: f64) -> Result<Self> {
        if !(k > 0.0) || !k.is_finite() {
            return Err(Error::invalid(format!("TV budget must be positive, got {k}")));
        }
        Ok(Self(k))
    }

    pub fn get(self) -> f64 {
        self.0
    }

    pub fn admits(self, f: &GridFunction) -> bool {
        total_variation(f) <= self.0 + 1e-12
    }
}

/// Equispaced samples `(i / (m - 1), value_i)` with the standard deviation of
/// the additive measurement noise (0 for exact samples).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    locations: Vec<f64>,
    values: Vec<f64>,
    noise_sigma: f64,
}

impl SampleSet {
    pub fn new(locations: Vec<f64>, values: Vec<f64>, noise_sigma: f64) -> Result<Self> {
        let m = locations.len();
        if m < 2 {
            return Err(Error::invalid(format!("need at least 2 samples, got {m}")));
        }
        if values.len() != m {
            return Err(Error::invalid(format!(
                "{} locations but {} values",
                m,
                values.len()
            )));
        }
        if !(noise_sigma >= 0.0) || !noise_sigma.is_finite() {
            return Err(Error::invalid(format!("noise sigma must be >= 0, got {noise_sigma}")));
        }
        for (i, &x) in locations.iter().enumerate() {
            let expected = i as f64 / (m - 1) as f64;
            if (x - expected).abs() > 1e-12 * expected.max(1.0) {
                return Err(Error::invalid(format!(
                    "sample locations must be equispaced on [0,1]: location {i} is {x}, expected {expected}"
                )));
            }
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite sample value at index {i}")));
        }
        Ok(Self { locations, values, noise_sigma })
    }

    /// Builds a sample set on the canonical locations `i / (m - 1)`.
    pub fn equispaced(values: Vec<f64>, noise_sigma: f64) -> Result<Self> {
        let m = values.len();
        let locations = equispaced_locations(m.max(2));
        Self::new(locations, values, noise_sigma)
    }

    pub fn locations(&self) -> &[f64] {
        &self.locations
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Writes `x,value` CSV rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_xy_csv(out, &self.locations, &self.values, None)
    }

    /// Reads an `x,value` CSV; the noise level is not part of the format.
    pub fn read_csv<R: Read>(input: R, noise_sigma: f64) -> Result<Self> {
        let (xs, ys) = read_xy_csv(input)?;
        Self::new(xs, ys, noise_sigma)
    }
}

pub fn equispaced_locations(m: usize) -> Vec<f64> {
    (0..m).map(|i| i as f64 / (m - 1) as f64).collect()
}

/// Samples `f` at `i / (m - 1)` and adds `sigma * Z_i`, `Z_i` i.i.d. standard
/// normal drawn from the generator seeded with `seed`.
pub fn sample(f: impl RealFunction, m: usize, sigma: f64, seed: u64) -> Result<SampleSet> {
    if m < 2 {
        return Err(Error::invalid(format!("need m >= 2 samples, got {m}")));
    }
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::invalid(format!("noise sigma must be >= 0, got {sigma}")));
    }
    let locations = equispaced_locations(m);
    let mut rng = rng_from_seed(seed);
    let values = locations
        .iter()
        .map(|&x| {
            let v = f.eval(x);
            if sigma > 0.0 {
                let z: f64 = StandardNormal.sample(&mut rng);
                v + sigma * z
            } else {
                v
            }
        })
        .collect();
    SampleSet::new(locations, values, sigma)
}

/// Standard normal upper tail `P[N(0,1) > x]`.
pub fn q_function(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(x / std::f64::consts::SQRT_2)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    q_function(-x)
}

/// Writes `x,value` rows, optionally preceded by a `# config_digest=` comment.
pub fn write_xy_csv<W: Write>(
    out: W,
    xs: &[f64],
    ys: &[f64],
    digest: Option<&str>,
) -> Result<()> {
    let mut out = out;
    if let Some(d) = digest {
        writeln!(out, "# config_digest={d}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "value"])?;
    for (x, y) in xs.iter().zip(ys) {
        w.write_record([x.to_string(), y.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads an `x,value` CSV (header required, `#` comment lines skipped).
pub fn read_xy_csv<R: Read>(input: R) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = rdr.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "x" || &headers[1] != "value" {
        return Err(Error::invalid(format!(
            "expected header `x,value`, found `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::invalid(format!("malformed csv row {}: {e}", line + 1)))?;
        if rec.len() != 2 {
            return Err(Error::invalid(format!("row {} has {} fields", line + 1, rec.len())));
        }
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| Error::invalid(format!("row {}: cannot parse `{s}` as a number", line + 1)))
        };
        xs.push(parse(&rec[0])?);
        ys.push(parse(&rec[1])?);
    }
    Ok((xs, ys))
}

pub fn read_xy_csv_file(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    read_xy_csv(std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tv_of_unit_step() {
        let f = GridFunction::from_fn_cells(1024, |x: f64| if x >= 0.5 { 1.0 } else { 0.0 }).unwrap();
        assert_eq!(total_variation(&f), 1.0);
    }

    #[test]
    fn tv_of_constant() {
        let f = GridFunction::constant_points(100, 3.7).unwrap();
        assert_eq!(total_variation(&f), 0.0);
    }

    #[test]
    fn tv_of_sine_plus_step() {
        // 0.4 pi * int_0^1 |cos 4 pi x| dx = 0.8, plus the unit jump
        let f = GridFunction::from_fn_points(FINE_GRID, sine_plus_step).unwrap();
        assert!((total_variation(&f) - 1.8).abs() < 1e-3);
    }

    #[test]
    fn grid_invariants() {
        assert!(GridFunction::points(vec![1.0]).is_err());
        assert!(GridFunction::points(vec![1.0, f64::NAN]).is_err());
        assert!(GridFunction::cells(vec![1.0, 2.0, 3.0]).is_err());
        assert!(GridFunction::cells(vec![1.0, 2.0, 3.0, 4.0]).is_ok());
    }

    #[test]
    fn point_grid_interpolates() {
        let f = GridFunction::points(vec![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(f.eval(0.25), 0.5);
        assert_eq!(f.eval(0.5), 1.0);
        assert_eq!(f.eval(1.0), 0.0);
        let c = GridFunction::cells(vec![1.0, 2.0]).unwrap();
        assert_eq!(c.eval(0.0), 1.0);
        assert_eq!(c.eval(0.5), 2.0);
        assert_eq!(c.eval(1.0), 2.0);
    }

    #[test]
    fn sample_constant_exact() {
        let s = sample(|_x: f64| 1.0, 8, 0.0, 7).unwrap();
        assert_eq!(s.values(), &[1.0; 8]);
        assert_eq!(s.locations()[0], 0.0);
        assert_eq!(s.locations()[7], 1.0);
    }

    #[test]
    fn sample_is_deterministic() {
        let a = sample(sine_plus_step, 64, 0.3, 42).unwrap();
        let b = sample(sine_plus_step, 64, 0.3, 42).unwrap();
        assert_eq!(a, b);
        let c = sample(sine_plus_step, 64, 0.3, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn sample_rejects_small_m() {
        assert!(sample(sine_plus_step, 1, 0.0, 0).is_err());
        assert!(sample(sine_plus_step, 4, -1.0, 0).is_err());
    }

    #[test]
    fn sample_noise_moments() {
        let s = sample(|_x: f64| 0.0, 4096, 1.0, 2024).unwrap();
        let n = s.len() as f64;
        let mean = s.values().iter().sum::<f64>() / n;
        let var = s.values().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 3.0 / n.sqrt(), "mean {mean}");
        assert!((var - 1.0).abs() < 0.1, "var {var}");
    }

    #[test]
    fn q_function_values() {
        assert_eq!(q_function(0.0), 0.5);
        assert!((q_function(1.6449) - 0.05).abs() < 1e-4);
        assert!(q_function(-8.0) >= 1.0 - 1e-14);
        let q1 = q_function(1.0);
        assert!((q1 - 0.158_655_253_931_457).abs() < 1e-10);
    }

    #[test]
    fn sample_set_validation() {
        assert!(SampleSet::new(vec![0.0, 0.4, 1.0], vec![1.0, 2.0, 3.0], 0.0).is_err());
        assert!(SampleSet::new(vec![0.0, 0.5, 1.0], vec![1.0, 2.0], 0.0).is_err());
        assert!(SampleSet::new(vec![0.0, 0.5, 1.0], vec![1.0, 2.0, 3.0], 0.0).is_ok());
    }

    #[test]
    fn csv_round_trip() {
        let s = sample(sine_plus_step, 16, 0.0, 0).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x,value\n"));
        let back = SampleSet::read_csv(&buf[..], 0.0).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn csv_rejects_bad_header() {
        let data = "a,b\n0,1\n1,2\n";
        assert!(read_xy_csv(data.as_bytes()).is_err());
        let data = "x,value\n0,abc\n";
        assert!(read_xy_csv(data.as_bytes()).is_err());
    }

    fn random_steps() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-5.0f64..5.0, 16)
    }

    proptest! {
        #[test]
        fn tv_shift_and_scale(v in random_steps(), shift in -10.0f64..10.0, c in 0.0f64..4.0) {
            let f = GridFunction::cells(v.clone()).unwrap();
            let tv = total_variation(&f);
            let shifted = f.map(|x| x + shift).unwrap();
            prop_assert!((total_variation(&shifted) - tv).abs() < 1e-9);
            let scaled = f.map(|x| c * x).unwrap();
            prop_assert!((total_variation(&scaled) - c * tv).abs() < 1e-9 * (1.0 + tv));
        }

        #[test]
        fn tv_subadditive(a in random_steps(), b in random_steps()) {
            let fa = GridFunction::cells(a.clone()).unwrap();
            let fb = GridFunction::cells(b.clone()).unwrap();
            let sum = GridFunction::cells(a.iter().zip(&b).map(|(x, y)| x + y).collect()).unwrap();
            prop_assert!(total_variation(&sum) <= total_variation(&fa) + total_variation(&fb) + 1e-9);
        }

        #[test]
        fn noiseless_sampling_of_grid_aligned_function(v in prop::collection::vec(-3.0f64..3.0, 2..40)) {
            let f = GridFunction::points(v.clone()).unwrap();
            let s = sample(&f, v.len(), 0.0, 1).unwrap();
            prop_assert_eq!(s.values(), &v[..]);
        }
    }
}
