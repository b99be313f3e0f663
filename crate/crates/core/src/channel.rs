//! Discrete memoryless channels over quantized input and output alphabets.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{normal_cdf, q_function, RealFunction};

const ROW_SUM_TOL: f64 = 1e-9;
const BINARY_MAGIC: &[u8; 8] = b"SIETCHN1";

/// Row-stochastic transition matrix `W[i][j] = P(Y = y_j | X = x_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    input_grid: Vec<f64>,
    output_grid: Vec<f64>,
    /// Row-major `n_x * n_y`.
    w: Vec<f64>,
}

impl ChannelModel {
    pub fn new(input_grid: Vec<f64>, output_grid: Vec<f64>, w: Vec<f64>) -> Result<Self> {
        let (nx, ny) = (input_grid.len(), output_grid.len());
        if nx < 1 || ny < 1 {
            return Err(Error::invalid("channel needs non-empty input and output alphabets"));
        }
        if w.len() != nx * ny {
            return Err(Error::invalid(format!(
                "transition matrix has {} entries, expected {nx} x {ny}",
                w.len()
            )));
        }
        if input_grid.iter().any(|x| !(0.0..=1.0).contains(x))
            || input_grid.windows(2).any(|p| !(p[1] > p[0]))
        {
            return Err(Error::invalid("input grid must be strictly increasing within [0,1]"));
        }
        for (i, row) in w.chunks_exact(ny).enumerate() {
            if row.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
                return Err(Error::invalid(format!("row {i} has a negative or non-finite entry")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::invalid(format!("row {i} sums to {sum}, not 1")));
            }
        }
        Ok(Self { input_grid, output_grid, w })
    }

    /// Builds a channel from rows; inputs are placed at `i / (n_x - 1)`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let nx = rows.len();
        let ny = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ny) {
            return Err(Error::invalid("ragged transition matrix"));
        }
        let input_grid = if nx == 1 {
            vec![0.0]
        } else {
            (0..nx).map(|i| i as f64 / (nx - 1) as f64).collect()
        };
        let output_grid = (0..ny).map(|j| j as f64).collect();
        Self::new(input_grid, output_grid, rows.concat())
    }

    /// Binary symmetric channel with the given crossover probability.
    pub fn binary_symmetric(crossover: f64) -> Result<Self> {
        Self::from_rows(&[vec![1.0 - crossover, crossover], vec![crossover, 1.0 - crossover]])
    }

    /// Z-channel: input 0 is received perfectly, input 1 flips to 0 with
    /// probability `flip`.
    pub fn z_channel(flip: f64) -> Result<Self> {
        Self::from_rows(&[vec![1.0, 0.0], vec![flip, 1.0 - flip]])
    }

    pub fn identity(n: usize) -> Result<Self> {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Self::from_rows(&rows)
    }

    pub fn input_grid(&self) -> &[f64] {
        &self.input_grid
    }

    pub fn output_grid(&self) -> &[f64] {
        &self.output_grid
    }

    pub fn n_inputs(&self) -> usize {
        self.input_grid.len()
    }

    pub fn n_outputs(&self) -> usize {
        self.output_grid.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let ny = self.n_outputs();
        &self.w[i * ny..(i + 1) * ny]
    }

    pub fn matrix(&self) -> &[f64] {
        &self.w
    }

    /// Restriction to a subset of inputs (rows), in the given order.
    pub fn restrict_inputs(&self, rows: &[usize]) -> Result<Self> {
        let input_grid = rows.iter().map(|&i| self.input_grid[i]).collect();
        let w = rows.iter().flat_map(|&i| self.row(i).iter().copied()).collect();
        Self::new(input_grid, self.output_grid.clone(), w)
    }

    /// Persists as: magic `SIETCHN1`, `n_x`, `n_y` (u64 LE), input grid,
    /// output grid, then the row-major matrix (f64 LE).
    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(BINARY_MAGIC)?;
        out.write_all(&(self.n_inputs() as u64).to_le_bytes())?;
        out.write_all(&(self.n_outputs() as u64).to_le_bytes())?;
        for v in self.input_grid.iter().chain(&self.output_grid).chain(&self.w) {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != BINARY_MAGIC {
            return Err(Error::invalid("not a channel file (bad magic)"));
        }
        let mut word = [0u8; 8];
        input.read_exact(&mut word)?;
        let nx = u64::from_le_bytes(word) as usize;
        input.read_exact(&mut word)?;
        let ny = u64::from_le_bytes(word) as usize;
        if nx == 0 || ny == 0 || nx.checked_mul(ny).is_none_or(|n| n > 1 << 32) {
            return Err(Error::invalid(format!("implausible channel dimensions {nx} x {ny}")));
        }
        let mut read_vec = |n: usize| -> Result<Vec<f64>> {
            let mut buf = vec![0u8; n * 8];
            input.read_exact(&mut buf)?;
            Ok(buf
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect())
        };
        let input_grid = read_vec(nx)?;
        let output_grid = read_vec(ny)?;
        let w = read_vec(nx * ny)?;
        Self::new(input_grid, output_grid, w)
    }

    /// Long-format `x,y,prob` CSV for inspection.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "y", "prob"])?;
        for (i, x) in self.input_grid.iter().enumerate() {
            for (y, p) in self.output_grid.iter().zip(self.row(i)) {
                w.write_record([x.to_string(), y.to_string(), p.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Gaussian mass of `[a, b]`, computed on the tail side for accuracy.
fn gaussian_mass(a: f64, b: f64) -> f64 {
    if a >= 0.0 {
        q_function(a) - q_function(b)
    } else {
        normal_cdf(b) - normal_cdf(a)
    }
}

/// Quantized AWGN channel `Y = X + Z`, `Z ~ N(0, noise_std^2)`.
///
/// Inputs: `n_x` equispaced points on `[0, 1]`. Outputs: `n_y` equispaced
/// points on `[-t s, 1 + t s]` with `t = tail_width`, `s = noise_std`; each
/// output point owns the cell of one grid step centred on it. Cell masses
/// are CDF differences; each row is renormalized for the mass that falls
/// outside the covered range.
pub fn awgn_channel(n_x: usize, n_y: usize, noise_std: f64, tail_width: f64) -> Result<ChannelModel> {
    if n_x < 2 || n_y < 2 {
        return Err(Error::invalid(format!("AWGN channel needs n_x, n_y >= 2 (got {n_x}, {n_y})")));
    }
    if !(noise_std > 0.0) || !noise_std.is_finite() {
        return Err(Error::invalid(format!("noise std must be positive, got {noise_std}")));
    }
    if !(tail_width > 0.0) || !tail_width.is_finite() {
        return Err(Error::invalid(format!("tail width must be positive, got {tail_width}")));
    }
    let input_grid: Vec<f64> = (0..n_x).map(|i| i as f64 / (n_x - 1) as f64).collect();
    let lo = -tail_width * noise_std;
    let hi = 1.0 + tail_width * noise_std;
    let step = (hi - lo) / (n_y - 1) as f64;
    let output_grid: Vec<f64> = (0..n_y).map(|j| lo + j as f64 * step).collect();
    let mut edges = Vec::with_capacity(n_y + 1);
    edges.extend((0..=n_y).map(|j| lo + (j as f64 - 0.5) * step));

    let mut w = Vec::with_capacity(n_x * n_y);
    for &x in &input_grid {
        let row_start = w.len();
        for j in 0..n_y {
            let a = (edges[j] - x) / noise_std;
            let b = (edges[j + 1] - x) / noise_std;
            w.push(gaussian_mass(a, b).max(0.0));
        }
        let sum: f64 = w[row_start..].iter().sum();
        w[row_start..].iter_mut().for_each(|v| *v /= sum);
    }
    ChannelModel::new(input_grid, output_grid, w)
}

/// Input distribution on the channel's input grid, optionally with a per-point
/// mass cap (`c_max * dx` for a density bounded by `c_max`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDistribution {
    p: Vec<f64>,
    density_cap: Option<f64>,
}

impl InputDistribution {
    pub fn new(p: Vec<f64>, density_cap: Option<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::invalid("empty input distribution"));
        }
        if p.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::invalid("input probabilities must be finite and >= 0"));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("input probabilities sum to {sum}, not 1")));
        }
        if let Some(cap) = density_cap {
            check_cap(cap, p.len())?;
            if let Some(i) = p.iter().position(|&v| v > cap + 1e-12) {
                return Err(Error::invalid(format!("mass {} at {i} exceeds cap {cap}", p[i])));
            }
        }
        Ok(Self { p, density_cap })
    }

    pub fn uniform(n: usize) -> Self {
        Self { p: vec![1.0 / n as f64; n], density_cap: None }
    }

    pub(crate) fn from_solver(p: Vec<f64>, density_cap: Option<f64>) -> Self {
        Self { p, density_cap }
    }

    pub fn probs(&self) -> &[f64] {
        &self.p
    }

    pub fn density_cap(&self) -> Option<f64> {
        self.density_cap
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }
}

pub(crate) fn check_cap(cap: f64, n: usize) -> Result<()> {
    if !(cap > 0.0) || !cap.is_finite() {
        return Err(Error::invalid(format!("mass cap must be positive, got {cap}")));
    }
    if cap * (n as f64) < 1.0 - 1e-12 {
        return Err(Error::invalid(format!(
            "mass cap {cap} on {n} points cannot hold a probability distribution"
        )));
    }
    Ok(())
}

/// `I(X;Y)` in bits: `sum_i sum_j p_i W_ij log2(W_ij / q_j)` with `0 log 0 = 0`.
pub fn mutual_information(p: &InputDistribution, ch: &ChannelModel) -> Result<f64> {
    if p.len() != ch.n_inputs() {
        return Err(Error::invalid(format!(
            "distribution over {} inputs for a channel with {} inputs",
            p.len(),
            ch.n_inputs()
        )));
    }
    Ok(mutual_information_raw(p.probs(), ch))
}

pub(crate) fn output_distribution(p: &[f64], ch: &ChannelModel) -> Vec<f64> {
    let ny = ch.n_outputs();
    let mut q = vec![0.0; ny];
    for (i, &pi) in p.iter().enumerate() {
        if pi == 0.0 {
            continue;
        }
        for (qj, wij) in q.iter_mut().zip(ch.row(i)) {
            *qj += pi * wij;
        }
    }
    q
}

pub(crate) fn mutual_information_raw(p: &[f64], ch: &ChannelModel) -> f64 {
    let q = output_distribution(p, ch);
    let mut nats = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        if pi == 0.0 {
            continue;
        }
        let d: f64 = ch
            .row(i)
            .iter()
            .zip(&q)
            .filter(|(w, _)| **w > 0.0)
            .map(|(w, qj)| w * (w / qj).ln())
            .sum();
        nats += pi * d;
    }
    (nats / std::f64::consts::LN_2).max(0.0)
}

/// Harvesting function evaluated at the channel's input letters.
pub fn energy_at_inputs(beta: impl RealFunction, ch: &ChannelModel) -> Vec<f64> {
    ch.input_grid().iter().map(|&x| beta.eval(x)).collect()
}

/// `E_p[beta(X)] = sum_i p_i beta(x_i)`.
pub fn expected_energy(p: &InputDistribution, beta: impl RealFunction, ch: &ChannelModel) -> Result<f64> {
    if p.len() != ch.n_inputs() {
        return Err(Error::invalid(format!(
            "distribution over {} inputs for a channel with {} inputs",
            p.len(),
            ch.n_inputs()
        )));
    }
    Ok(p.probs().iter().zip(ch.input_grid()).map(|(pi, &x)| pi * beta.eval(x)).sum())
}
