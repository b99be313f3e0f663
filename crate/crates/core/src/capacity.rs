//! Channel capacity and capacity-energy tradeoff curves.
//!
//! The energy constraint `E[beta(X)] >= B` is handled through a Lagrangian
//! tilt: for `mu >= 0` the Blahut-Arimoto iteration maximizes
//! `I(X;Y) + mu * E[beta(X)]` (both in bits), and sweeping `mu` traces the
//! concave upper boundary of the achievable `(B, C)` region.
//!
//! Per-letter scores are `s_i = D(W_i || q) + mu ln2 (beta_i - max beta)`
//! in nats. Measuring energies relative to their maximum keeps the scores
//! bounded for large `mu` and makes the iteration invariant under a constant
//! shift of `beta`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::channel::{check_cap, mutual_information_raw, ChannelModel, InputDistribution};
use crate::error::{Error, Result};
use crate::grid::RealFunction;

const LN2: f64 = std::f64::consts::LN_2;
/// Floor on output probabilities inside logarithms.
const Q_FLOOR: f64 = 1e-300;
/// Uniform weight blended into warm starts.
const WARM_MIX: f64 = 1e-10;
/// Multiplicative steps between Newton polishing attempts.
const POLISH_EVERY: usize = 25;
/// Relative mass above which a letter counts as active.
const ACTIVE_MASS: f64 = 1e-6;
const MAX_ACTIVE: usize = 96;
const NEWTON_STEPS: usize = 40;
/// Newton stops once the active gradients agree to this (nats).
const NEWTON_FLAT: f64 = 1e-14;
const NEWTON_RIDGE: f64 = 1e-12;

pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_ITER: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Stop when the upper/lower capacity bound gap (bits) drops below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Per-point mass cap on the input distribution.
    pub density_cap: Option<f64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: DEFAULT_TOL, max_iter: DEFAULT_MAX_ITER, density_cap: None }
    }
}

impl SolverOptions {
    pub fn new(tol: f64, max_iter: usize) -> Self {
        Self { tol, max_iter, density_cap: None }
    }

    pub fn with_density_cap(mut self, cap: Option<f64>) -> Self {
        self.density_cap = cap;
        self
    }

    fn validate(&self, n_inputs: usize) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::invalid(format!("solver tolerance must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter must be at least 1"));
        }
        if let Some(cap) = self.density_cap {
            check_cap(cap, n_inputs)?;
        }
        Ok(())
    }
}

/// Output of one tilted solve.
#[derive(Debug, Clone)]
pub struct TiltedSolution {
    /// Mutual information of `p` in bits.
    pub c_bits: f64,
    /// `E_p[beta]`.
    pub b: f64,
    pub mu: f64,
    pub p: InputDistribution,
    pub iterations: usize,
    /// Final bound gap in bits.
    pub gap: f64,
}

struct Run {
    p: Vec<f64>,
    iterations: usize,
    gap: f64,
    converged: bool,
}

/// Reusable tilted Blahut-Arimoto solver for one channel and one energy vector.
#[derive(Debug, Clone)]
pub struct TiltedSolver<'a> {
    ch: &'a ChannelModel,
    /// `sum_j W_ij ln W_ij`.
    neg_entropy: Vec<f64>,
    energies: Vec<f64>,
    rel_energies: Vec<f64>,
    opts: SolverOptions,
}

impl<'a> TiltedSolver<'a> {
    pub fn new(ch: &'a ChannelModel, energies: Vec<f64>, opts: SolverOptions) -> Result<Self> {
        if energies.len() != ch.n_inputs() {
            return Err(Error::invalid(format!(
                "{} energies for a channel with {} inputs",
                energies.len(),
                ch.n_inputs()
            )));
        }
        if let Some(i) = energies.iter().position(|e| !e.is_finite()) {
            return Err(Error::invalid(format!("non-finite energy at input {i}")));
        }
        opts.validate(ch.n_inputs())?;
        let neg_entropy = (0..ch.n_inputs())
            .map(|i| ch.row(i).iter().filter(|&&w| w > 0.0).map(|w| w * w.ln()).sum())
            .collect();
        let top = energies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let rel_energies = energies.iter().map(|e| e - top).collect();
        Ok(Self { ch, neg_entropy, energies, rel_energies, opts })
    }

    pub fn from_function(ch: &'a ChannelModel, beta: impl RealFunction, opts: SolverOptions) -> Result<Self> {
        let energies = ch.input_grid().iter().map(|&x| beta.eval(x)).collect();
        Self::new(ch, energies, opts)
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn options(&self) -> &SolverOptions {
        &self.opts
    }

    pub fn channel(&self) -> &ChannelModel {
        self.ch
    }

    /// Per-letter divergences `D(W_i || q)` in nats for the output law of `p`.
    fn divergences(&self, p: &[f64], d: &mut [f64]) {
        let ny = self.ch.n_outputs();
        let mut q = vec![0.0; ny];
        for (i, &pi) in p.iter().enumerate() {
            if pi == 0.0 {
                continue;
            }
            for (qj, w) in q.iter_mut().zip(self.ch.row(i)) {
                *qj += pi * w;
            }
        }
        let log_q: Vec<f64> = q.iter().map(|&v| v.max(Q_FLOOR).ln()).collect();
        for (i, di) in d.iter_mut().enumerate() {
            let cross: f64 = self.ch.row(i).iter().zip(&log_q).map(|(w, l)| w * l).sum();
            *di = self.neg_entropy[i] - cross;
        }
    }

    /// Largest value of `sum_i p_i s_i` over the feasible set.
    fn best_response(&self, s: &[f64]) -> f64 {
        match self.opts.density_cap {
            None => s.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            Some(cap) => {
                let mut order: Vec<usize> = (0..s.len()).collect();
                order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
                let mut left = 1.0;
                let mut acc = 0.0;
                for i in order {
                    let take = cap.min(left);
                    acc += take * s[i];
                    left -= take;
                    if left <= 0.0 {
                        break;
                    }
                }
                acc
            }
        }
    }

    /// Solves at tilt `mu`, starting from `warm` (uniform when absent).
    pub fn solve(&self, mu: f64, warm: Option<&[f64]>) -> Result<TiltedSolution> {
        self.solve_traced(mu, warm, |_| {})
    }

    /// As [`TiltedSolver::solve`], calling `observe` with the tilted lower
    /// bound `sum_i p_i s_i` (bits) at every iteration.
    pub fn solve_traced(&self, mu: f64, warm: Option<&[f64]>, observe: impl FnMut(f64)) -> Result<TiltedSolution> {
        let run = self.iterate(mu, warm, observe)?;
        if !run.converged {
            return Err(Error::NonConvergence { iterations: run.iterations, gap: run.gap });
        }
        Ok(self.finish(run.p, mu, run.iterations, run.gap))
    }

    /// As [`TiltedSolver::solve`], but an unconverged iterate is accepted
    /// when its bound gap is below `accept_gap`.
    pub fn solve_within(&self, mu: f64, warm: Option<&[f64]>, accept_gap: f64) -> Result<TiltedSolution> {
        let run = self.iterate(mu, warm, |_| {})?;
        if !run.converged {
            if run.gap > accept_gap {
                return Err(Error::NonConvergence { iterations: run.iterations, gap: run.gap });
            }
            log::debug!("accepting mu = {mu} after {} iterations with gap {:.3e}", run.iterations, run.gap);
        }
        Ok(self.finish(run.p, mu, run.iterations, run.gap))
    }

    fn iterate(&self, mu: f64, warm: Option<&[f64]>, mut observe: impl FnMut(f64)) -> Result<Run> {
        if !(mu >= 0.0) || !mu.is_finite() {
            return Err(Error::invalid(format!("tilt mu must be finite and >= 0, got {mu}")));
        }
        let n = self.ch.n_inputs();
        let mut p = match warm {
            Some(w) if w.len() == n => {
                // A little uniform mass revives letters a strongly tilted
                // solution let underflow to zero.
                let revived = w.iter().map(|&v| (1.0 - WARM_MIX) * v + WARM_MIX / n as f64).collect();
                project(revived, self.opts.density_cap)
            }
            Some(w) => {
                return Err(Error::invalid(format!("warm start has {} entries, expected {n}", w.len())))
            }
            None => vec![1.0 / n as f64; n],
        };
        let tilt = mu * LN2;
        let mut d = vec![0.0; n];
        let mut s = vec![0.0; n];
        let mut gap = f64::INFINITY;
        for iter in 1..=self.opts.max_iter {
            self.divergences(&p, &mut d);
            for i in 0..n {
                s[i] = d[i] + tilt * self.rel_energies[i];
            }
            let lower: f64 = p.iter().zip(&s).map(|(pi, si)| pi * si).sum();
            observe(lower / LN2);
            gap = (self.best_response(&s) - lower) / LN2;
            if gap < self.opts.tol {
                return Ok(Run { p, iterations: iter, gap: gap.max(0.0), converged: true });
            }
            if iter == self.opts.max_iter {
                break;
            }
            if iter % POLISH_EVERY == 0 {
                if let Some(polished) = self.polish(&p, &s, lower, tilt) {
                    p = polished;
                    continue;
                }
            }
            let top = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let r: Vec<f64> = p.iter().zip(&s).map(|(pi, si)| pi * (si - top).exp()).collect();
            p = project(r, self.opts.density_cap);
        }
        Ok(Run { p, iterations: self.opts.max_iter, gap, converged: false })
    }

    /// Tilted objective in nats, `I(p) + tilt * sum_i p_i rel_energy_i`.
    fn objective(&self, p: &[f64], rows: &[usize]) -> f64 {
        let ny = self.ch.n_outputs();
        let mut q = vec![0.0; ny];
        let mut linear = 0.0;
        for (&i, &pi) in rows.iter().zip(p) {
            linear += pi * self.neg_entropy[i];
            for (qj, w) in q.iter_mut().zip(self.ch.row(i)) {
                *qj += pi * w;
            }
        }
        let out_entropy: f64 = q.iter().filter(|&&v| v > 0.0).map(|v| -v * v.ln()).sum();
        linear + out_entropy
    }

    /// Newton iterations on the letters that carry mass, the active set of
    /// the KKT conditions. Multiplicative updates crawl when letters next to
    /// the optimal support score almost as well as the support itself; on
    /// the support the objective is smooth and Newton converges in a few
    /// steps. Returns `None` when the polished law does not improve the
    /// objective.
    fn polish(&self, p: &[f64], s: &[f64], lower: f64, tilt: f64) -> Option<Vec<f64>> {
        let cap = self.opts.density_cap;
        // Letters sitting on the density cap keep their mass; Newton moves
        // the remaining letters.
        let mut fixed: Vec<usize> = match cap {
            Some(c) => (0..p.len()).filter(|&i| p[i] >= c * (1.0 - 1e-9)).collect(),
            None => Vec::new(),
        };
        let is_fixed = |i: usize, fixed: &[usize]| fixed.binary_search(&i).is_ok();
        let top = (0..p.len()).filter(|&i| !is_fixed(i, &fixed)).map(|i| p[i]).fold(0.0, f64::max);
        let mut rows: Vec<usize> =
            (0..p.len()).filter(|&i| !is_fixed(i, &fixed) && p[i] > ACTIVE_MASS * top).collect();
        // Common score of the free letters, the multiplier of the mass
        // constraint; without caps it is the current average score.
        let free_mass: f64 = rows.iter().map(|&i| p[i]).sum();
        let level = if free_mass > 0.0 {
            rows.iter().map(|&i| p[i] * s[i]).sum::<f64>() / free_mass
        } else {
            lower
        };
        // Capped letters scoring below the level want to shed mass.
        let released: Vec<usize> = fixed.iter().copied().filter(|&i| s[i] < level).collect();
        fixed.retain(|i| !released.contains(i));
        // Letters scoring above the level are candidates to enter.
        let mut violators: Vec<usize> = (0..p.len())
            .filter(|&i| s[i] > level && !rows.contains(&i) && !is_fixed(i, &fixed) && !released.contains(&i))
            .collect();
        violators.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
        rows.extend(violators.into_iter().take(4));
        rows.extend(released);
        rows.sort_unstable();
        if rows.is_empty() || rows.len() > MAX_ACTIVE {
            return None;
        }
        let cap_mass = cap.unwrap_or(f64::INFINITY);
        let score = |i: usize, x: f64| x * tilt * self.rel_energies[i];
        let tilted = |x: &[f64], rows: &[usize], fixed: &[usize]| {
            let mut all: Vec<usize> = fixed.to_vec();
            all.extend_from_slice(rows);
            let mut mass: Vec<f64> = vec![cap_mass; fixed.len()];
            mass.extend_from_slice(x);
            self.objective(&mass, &all) + all.iter().zip(&mass).map(|(&i, &xi)| score(i, xi)).sum::<f64>()
        };
        let budget = |fixed: &[usize]| 1.0 - fixed.len() as f64 * cap.unwrap_or(0.0);
        let mut x: Vec<f64> = rows.iter().map(|&i| p[i].max(1e-12)).collect();
        let total: f64 = x.iter().sum();
        let free_mass = budget(&fixed);
        x.iter_mut().for_each(|v| *v *= free_mass / total);
        let start = {
            let all: Vec<usize> = (0..p.len()).collect();
            self.objective(p, &all) + all.iter().map(|&i| score(i, p[i])).sum::<f64>()
        };
        let ny = self.ch.n_outputs();
        for _ in 0..NEWTON_STEPS {
            let k = rows.len();
            if k == 0 {
                break;
            }
            let mut q = vec![0.0; ny];
            for (&i, &xi) in rows.iter().zip(&x).chain(fixed.iter().map(|i| (i, &cap_mass))) {
                for (qj, w) in q.iter_mut().zip(self.ch.row(i)) {
                    *qj += xi * w;
                }
            }
            let log_q: Vec<f64> = q.iter().map(|&v| v.max(Q_FLOOR).ln()).collect();
            let grad: Vec<f64> = rows
                .iter()
                .map(|&i| {
                    let cross: f64 = self.ch.row(i).iter().zip(&log_q).map(|(w, l)| w * l).sum();
                    self.neg_entropy[i] - cross + tilt * self.rel_energies[i]
                })
                .collect();
            let mean: f64 = grad.iter().zip(&x).map(|(g, xi)| g * xi).sum::<f64>() / x.iter().sum::<f64>();
            if grad.iter().all(|g| (g - mean).abs() < NEWTON_FLAT) {
                break;
            }
            // KKT system of the equality-constrained quadratic model:
            // [H 1; 1' 0] [d; -lambda] = [-g; 0], H_ab = -sum_j W_aj W_bj / q_j.
            let mut kkt = DMatrix::<f64>::zeros(k + 1, k + 1);
            let inv_q: Vec<f64> = q.iter().map(|&v| if v > Q_FLOOR { 1.0 / v } else { 0.0 }).collect();
            for a in 0..k {
                let wa = self.ch.row(rows[a]);
                for b in a..k {
                    let wb = self.ch.row(rows[b]);
                    let h: f64 = -wa.iter().zip(wb).zip(&inv_q).map(|((x, y), iq)| x * y * iq).sum::<f64>();
                    kkt[(a, b)] = h;
                    kkt[(b, a)] = h;
                }
                kkt[(a, a)] -= NEWTON_RIDGE;
                kkt[(a, k)] = 1.0;
                kkt[(k, a)] = 1.0;
            }
            let mut rhs = DVector::<f64>::zeros(k + 1);
            for a in 0..k {
                rhs[a] = -grad[a];
            }
            let sol = kkt.lu().solve(&rhs)?;
            let d: Vec<f64> = (0..k).map(|a| sol[a]).collect();
            // Longest step keeping every mass inside [0, cap].
            let mut step = 1.0f64;
            let mut blocking = None;
            for a in 0..k {
                if d[a] < 0.0 && x[a] + step * d[a] < 0.0 {
                    step = x[a] / -d[a];
                    blocking = Some((a, false));
                } else if d[a] > 0.0 && x[a] + step * d[a] > cap_mass {
                    step = (cap_mass - x[a]) / d[a];
                    blocking = Some((a, true));
                }
            }
            let here = tilted(&x, &rows, &fixed);
            let mut accepted = false;
            for _ in 0..30 {
                let trial: Vec<f64> =
                    x.iter().zip(&d).map(|(xi, di)| (xi + step * di).clamp(0.0, cap_mass)).collect();
                if tilted(&trial, &rows, &fixed) >= here {
                    x = trial;
                    accepted = true;
                    break;
                }
                step *= 0.5;
                blocking = None;
            }
            if !accepted {
                break;
            }
            if let Some((a, upper)) = blocking {
                x.remove(a);
                let i = rows.remove(a);
                if upper {
                    let at = fixed.binary_search(&i).unwrap_or_else(|e| e);
                    fixed.insert(at, i);
                }
            }
            let total: f64 = x.iter().sum();
            let free_mass = budget(&fixed);
            if total > 0.0 {
                x.iter_mut().for_each(|v| *v *= free_mass / total);
            }
        }
        if !(tilted(&x, &rows, &fixed) > start) {
            return None;
        }
        let mut out = vec![0.0; p.len()];
        for (&i, &xi) in rows.iter().zip(&x) {
            out[i] = xi;
        }
        for &i in &fixed {
            out[i] = cap_mass;
        }
        // Keep every letter alive so later multiplicative steps can revive it.
        let n = p.len() as f64;
        let mixed = out.into_iter().map(|v| (1.0 - WARM_MIX) * v + WARM_MIX / n).collect();
        Some(project(mixed, cap))
    }

    fn finish(&self, p: Vec<f64>, mu: f64, iterations: usize, gap: f64) -> TiltedSolution {
        let c_bits = mutual_information_raw(&p, self.ch).max(0.0);
        let b = p.iter().zip(&self.energies).map(|(pi, e)| pi * e).sum();
        if mu > 0.0 {
            let top = p.iter().copied().fold(0.0, f64::max);
            if top > 1.0 - 1e-9 {
                log::debug!("tilt mu = {mu} collapsed the input law onto a single letter");
            }
        }
        TiltedSolution { c_bits, b, mu, p: InputDistribution::from_solver(p, self.opts.density_cap), iterations, gap }
    }

    /// Largest achievable `E[beta]`, with the distribution attaining it:
    /// all mass on the best letters, or a greedy fill of the caps in
    /// decreasing energy order.
    pub fn max_energy(&self) -> (f64, Vec<f64>) {
        let n = self.energies.len();
        let mut p = vec![0.0; n];
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| self.energies[b].total_cmp(&self.energies[a]).then(a.cmp(&b)));
        match self.opts.density_cap {
            None => {
                let top = self.energies[order[0]];
                let best: Vec<usize> = order.iter().copied().filter(|&i| self.energies[i] == top).collect();
                for &i in &best {
                    p[i] = 1.0 / best.len() as f64;
                }
                (top, p)
            }
            Some(cap) => {
                let mut left = 1.0;
                for i in order {
                    let take = cap.min(left);
                    p[i] = take;
                    left -= take;
                    if left <= 1e-15 {
                        break;
                    }
                }
                let b = p.iter().zip(&self.energies).map(|(pi, e)| pi * e).sum();
                (b, p)
            }
        }
    }

    /// Best rate among input laws delivering the maximum energy.
    fn endpoint(&self) -> Result<TiltedSolution> {
        let (b_max, p_fill) = self.max_energy();
        match self.opts.density_cap {
            Some(cap) => Ok(TiltedSolution {
                c_bits: mutual_information_raw(&p_fill, self.ch),
                b: b_max,
                mu: f64::INFINITY,
                p: InputDistribution::from_solver(p_fill, Some(cap)),
                iterations: 0,
                gap: 0.0,
            }),
            None => {
                let rows: Vec<usize> = (0..p_fill.len()).filter(|&i| p_fill[i] > 0.0).collect();
                let sub = self.ch.restrict_inputs(&rows)?;
                let (c, p_sub) = blahut_arimoto_with(&sub, self.opts.tol, self.opts.max_iter)?;
                let mut p = vec![0.0; p_fill.len()];
                for (&i, &v) in rows.iter().zip(p_sub.probs()) {
                    p[i] = v;
                }
                Ok(TiltedSolution {
                    c_bits: c,
                    b: b_max,
                    mu: f64::INFINITY,
                    p: InputDistribution::from_solver(p, None),
                    iterations: 0,
                    gap: 0.0,
                })
            }
        }
    }
}

/// KL projection of a nonnegative vector onto the (capped) simplex:
/// `p_i = min(cap, t r_i)` with `t` fixing the total mass.
fn project(mut r: Vec<f64>, cap: Option<f64>) -> Vec<f64> {
    let total: f64 = r.iter().sum();
    let Some(cap) = cap else {
        r.iter_mut().for_each(|v| *v /= total);
        return r;
    };
    let mut order: Vec<usize> = (0..r.len()).collect();
    order.sort_by(|&a, &b| r[b].total_cmp(&r[a]));
    let mut rest = total;
    let mut capped = 0usize;
    let mut t = 1.0 / total;
    for &i in &order {
        t = (1.0 - capped as f64 * cap) / rest;
        if t * r[i] <= cap {
            break;
        }
        capped += 1;
        rest -= r[i];
    }
    let positive = r.iter().filter(|&&v| v > 0.0).count();
    if capped == positive {
        // Every supported letter saturates its cap; spread the remainder
        // uniformly over the letters that carried no mass.
        let free = r.len() - capped;
        let fill = (1.0 - capped as f64 * cap) / free.max(1) as f64;
        return r.iter().map(|&v| if v > 0.0 { cap } else { fill }).collect();
    }
    r.iter().map(|&v| (t * v).min(cap)).collect()
}

fn blahut_arimoto_with(ch: &ChannelModel, tol: f64, max_iter: usize) -> Result<(f64, InputDistribution)> {
    let solver = TiltedSolver::new(ch, vec![0.0; ch.n_inputs()], SolverOptions::new(tol, max_iter))?;
    let sol = solver.solve(0.0, None)?;
    Ok((sol.c_bits, sol.p))
}

/// Unconstrained capacity in bits and a capacity-achieving input law.
pub fn blahut_arimoto(ch: &ChannelModel, tol: f64, max_iter: usize) -> Result<(f64, InputDistribution)> {
    blahut_arimoto_with(ch, tol, max_iter)
}

/// Maximizes `I(X;Y) + mu E[beta(X)]`; returns `(C bits, B, p)`.
pub fn tilted_blahut_arimoto(
    ch: &ChannelModel,
    beta: impl RealFunction,
    mu: f64,
    tol: f64,
    max_iter: usize,
) -> Result<(f64, f64, InputDistribution)> {
    let solver = TiltedSolver::from_function(ch, beta, SolverOptions::new(tol, max_iter))?;
    let sol = solver.solve(mu, None)?;
    Ok((sol.c_bits, sol.b, sol.p))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(rename = "C")]
    pub c: f64,
    /// Tilt that produced the point; infinite for the maximum-energy endpoint.
    pub mu: f64,
    pub p: InputDistribution,
}

/// Piecewise-linear concave capacity-energy curve `C(B)`.
///
/// `C(B) = c_max_bits` for `B <= b_unconstrained`, follows the points up to
/// `b_max`, and is `0` beyond `b_max` (no input law delivers more energy).
///
/// For a family `F` of harvesting functions, the robust quantities
/// `C_F(B)` (one input law meeting `B` for every member) and its dual
/// `B_F(R)` are bounded above by the pointwise minimum of the members'
/// curves; [`family_capacity_bound`] and [`family_energy_bound`] compute
/// those minima for finite families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityCurve {
    pub points: Vec<CurvePoint>,
    pub c_max_bits: f64,
    pub b_max: f64,
    pub b_unconstrained: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveOptions {
    /// Number of tilts on the geometric ladder.
    pub n_points: usize,
    pub solver: SolverOptions,
    /// Largest bound gap (bits) accepted from a tilted solve that ran out of
    /// iterations. Near tilts where the optimal support changes the
    /// iteration slows to a sublinear crawl; such points are still
    /// achievable and sit within this gap of the supporting line.
    pub curve_tol: f64,
    /// Rates (bits) at which exact curve points are added by root-finding on `mu`.
    #[serde(default)]
    pub rate_probes: Vec<f64>,
    /// Energies at which exact curve points are added.
    #[serde(default)]
    pub energy_probes: Vec<f64>,
    /// Split tilt intervals whose endpoints are further apart than this
    /// fraction of the curve's extent in `B` or in `C`.
    pub refine_fraction: f64,
    /// Split tilt intervals whose midpoint solution rises more than this
    /// (bits) above the chord.
    pub chord_tol: f64,
    /// Upper bound on extra tilted solves spent on refinement.
    pub max_refinements: usize,
}

impl Default for CurveOptions {
    fn default() -> Self {
        Self {
            n_points: 32,
            solver: SolverOptions::default(),
            curve_tol: 1e-6,
            rate_probes: Vec::new(),
            energy_probes: Vec::new(),
            refine_fraction: 0.05,
            chord_tol: 1e-4,
            max_refinements: 256,
        }
    }
}

impl CurveOptions {
    pub fn with_points(n_points: usize) -> Self {
        Self { n_points, ..Self::default() }
    }
}

const MU_LADDER_START: f64 = 1e-3;
const MU_CAP: f64 = (1u64 << 20) as f64;
const PROBE_ITERS: usize = 60;
/// Probe stopping rules: target residual and bracket width in `ln mu`.
const PROBE_RESIDUAL: f64 = 1e-10;
const PROBE_BRACKET: f64 = 1e-9;

pub fn capacity_energy_curve(ch: &ChannelModel, beta: impl RealFunction, opts: &CurveOptions) -> Result<CapacityCurve> {
    let solver = TiltedSolver::from_function(ch, beta, opts.solver)?;
    curve_from_solver(&solver, opts, None)
}

/// Tilted solves for one curve, warm-started either from the previous
/// solution or from the nearest tilt of a reference curve.
struct Sweep<'s, 'a> {
    solver: &'s TiltedSolver<'a>,
    accept_gap: f64,
    reference: Option<&'s CapacityCurve>,
}

impl Sweep<'_, '_> {
    fn solve(&self, mu: f64, fallback: Option<&[f64]>) -> Result<TiltedSolution> {
        let warm = self.reference.and_then(|c| c.nearest_tilt(mu)).or(fallback);
        self.solver.solve_within(mu, warm, self.accept_gap)
    }
}

/// Builds the curve for an existing solver. A `reference` curve on the same
/// channel (typically of a nearby energy vector) supplies warm starts.
pub fn curve_from_solver(
    solver: &TiltedSolver<'_>,
    opts: &CurveOptions,
    reference: Option<&CapacityCurve>,
) -> Result<CapacityCurve> {
    if opts.n_points < 2 {
        return Err(Error::invalid(format!("a curve needs n_points >= 2, got {}", opts.n_points)));
    }
    if !(opts.curve_tol > 0.0) {
        return Err(Error::invalid(format!("curve tolerance must be positive, got {}", opts.curve_tol)));
    }
    let sweep = Sweep { solver, accept_gap: opts.curve_tol.max(solver.opts.tol), reference };
    let base = sweep.solve(0.0, None)?;
    let c_max = base.c_bits;
    let end = solver.endpoint()?;
    let b_max = end.b;
    if b_max - base.b <= opts.solver.tol * b_max.abs().max(1.0) {
        // The capacity achiever already delivers the maximum energy.
        let flat = CurvePoint { b: b_max, c: c_max, mu: 0.0, p: base.p };
        return Ok(CapacityCurve { points: vec![flat], c_max_bits: c_max, b_max, b_unconstrained: b_max });
    }
    let b_unc = base.b;

    // Upper end of the ladder.
    let target = b_max - 1e-4;
    let mut mu_hi = 1.0;
    let mut hi = sweep.solve(mu_hi, Some(base.p.probs()))?;
    while hi.b < target && mu_hi < MU_CAP {
        mu_hi *= 2.0;
        hi = sweep.solve(mu_hi, Some(hi.p.probs()))?;
    }
    let ratio = (mu_hi / MU_LADDER_START).max(1.0).powf(1.0 / (opts.n_points - 1) as f64);
    let mut sols = vec![base];
    for k in 0..opts.n_points - 1 {
        let mu = MU_LADDER_START * ratio.powi(k as i32);
        let sol = sweep.solve(mu, Some(sols[sols.len() - 1].p.probs()))?;
        sols.push(sol);
    }
    sols.push(hi);
    refine(&sweep, &mut sols, opts)?;
    for &r in &opts.rate_probes {
        if r <= end.c_bits {
            continue;
        }
        if let Some(sol) = probe(&sweep, &sols, |s| s.c_bits - r)? {
            sols.push(sol);
        }
    }
    // The endpoint already pins the curve at `b_max`.
    for &b in &opts.energy_probes {
        if b >= b_max || b <= b_unc {
            continue;
        }
        if let Some(sol) = probe(&sweep, &sols, |s| b - s.b)? {
            sols.push(sol);
        }
    }
    sols.push(end);

    let mut points: Vec<CurvePoint> =
        sols.into_iter().map(|s| CurvePoint { b: s.b, c: s.c_bits, mu: s.mu, p: s.p }).collect();
    points.retain(|pt| pt.b >= b_unc);
    let points = upper_hull(points, b_unc, c_max);
    Ok(CapacityCurve { points, c_max_bits: c_max, b_max, b_unconstrained: b_unc })
}

fn sort_by_mu(sols: &mut [TiltedSolution]) {
    sols.sort_by(|a, b| a.mu.total_cmp(&b.mu));
}

/// Adaptive bisection of tilt intervals: an interval is split while its
/// endpoints are far apart (more than `fraction` of the curve's extent in
/// `B` or in `C`), or while the solution at its geometric-mean tilt lies more
/// than `chord_tol` above the chord.
fn refine(sweep: &Sweep<'_, '_>, sols: &mut Vec<TiltedSolution>, opts: &CurveOptions) -> Result<()> {
    sort_by_mu(sols);
    let (b_lo, b_hi) = (sols[0].b, sols[sols.len() - 1].b);
    let max_b_gap = (b_hi - b_lo) * opts.refine_fraction;
    let max_c_gap = sols[0].c_bits * opts.refine_fraction;
    let mut pending: Vec<(f64, f64)> = (1..sols.len())
        .filter(|&k| sols[k - 1].mu > 0.0)
        .map(|k| (sols[k - 1].mu, sols[k].mu))
        .collect();
    let mut budget = opts.max_refinements;
    while let Some((mu_a, mu_b)) = pending.pop() {
        if budget == 0 {
            break;
        }
        if mu_b / mu_a < 1.0 + 1e-6 {
            continue;
        }
        let find = |mu: f64| sols.iter().position(|s| s.mu == mu).expect("interval endpoint");
        let (a, b) = (find(mu_a), find(mu_b));
        let far = sols[b].b - sols[a].b > max_b_gap || sols[a].c_bits - sols[b].c_bits > max_c_gap;
        let mu = (mu_a * mu_b).sqrt();
        let mid = sweep.solve(mu, Some(sols[a].p.probs()))?;
        budget -= 1;
        let (pa, pb) = (&sols[a], &sols[b]);
        let chord = if pb.b > pa.b { pa.c_bits + (pb.c_bits - pa.c_bits) * (mid.b - pa.b) / (pb.b - pa.b) } else { pa.c_bits };
        let bulge = mid.c_bits - chord;
        sols.push(mid);
        if far || bulge > opts.chord_tol {
            pending.push((mu_a, mu));
            pending.push((mu, mu_b));
        }
    }
    Ok(())
}

/// Root of a function of the tilt that decreases along the curve,
/// bracketed by existing solutions; regula falsi (Illinois) on `ln mu`.
///
/// When the target lies on a straight piece of the curve (one tilt, many
/// optimal laws) the bracket shrinks onto that tilt without a root; the two
/// bracketing points are then returned as knots, since interpolating
/// between them is exact.
fn probe(
    sweep: &Sweep<'_, '_>,
    sols: &[TiltedSolution],
    f: impl Fn(&TiltedSolution) -> f64,
) -> Result<Option<TiltedSolution>> {
    let mut sorted: Vec<&TiltedSolution> = sols.iter().filter(|s| s.mu > 0.0).collect();
    sorted.sort_by(|a, b| a.mu.total_cmp(&b.mu));
    let Some(k) = (1..sorted.len()).find(|&k| f(sorted[k - 1]) >= 0.0 && f(sorted[k]) <= 0.0) else {
        return Ok(None);
    };
    let (mut lo, mut hi) = (sorted[k - 1].clone(), sorted[k].clone());
    let (mut f_lo, mut f_hi) = (f(&lo), f(&hi));
    if f_lo == 0.0 {
        return Ok(Some(lo));
    }
    if f_hi == 0.0 {
        return Ok(Some(hi));
    }
    let mut side = 0i8;
    for _ in 0..PROBE_ITERS {
        let (a, b) = (lo.mu.ln(), hi.mu.ln());
        if b - a < PROBE_BRACKET {
            break;
        }
        let mut x = b - f_hi * (b - a) / (f_hi - f_lo);
        if !(x > a && x < b) {
            x = 0.5 * (a + b);
        }
        let warm = if x - a < b - x { lo.p.probs() } else { hi.p.probs() };
        let mid = sweep.solver.solve_within(x.exp(), Some(warm), sweep.accept_gap)?;
        let fm = f(&mid);
        if fm.abs() < PROBE_RESIDUAL {
            return Ok(Some(mid));
        }
        if fm > 0.0 {
            lo = mid;
            f_lo = fm;
            if side == 1 {
                f_hi *= 0.5;
            }
            side = 1;
        } else {
            hi = mid;
            f_hi = fm;
            if side == -1 {
                f_lo *= 0.5;
            }
            side = -1;
        }
    }
    Ok(Some(if f_lo.abs() < f_hi.abs() { lo } else { hi }))
}

/// Sorts by energy, drops dominated points and keeps the upper concave hull,
/// anchored at `(b_unc, c_max)`.
fn upper_hull(mut points: Vec<CurvePoint>, b_unc: f64, c_max: f64) -> Vec<CurvePoint> {
    points.sort_by(|a, b| a.b.total_cmp(&b.b).then(b.c.total_cmp(&a.c)));
    let mut hull: Vec<CurvePoint> = Vec::with_capacity(points.len());
    for mut pt in points {
        if pt.b <= b_unc {
            pt.c = pt.c.min(c_max);
        }
        if let Some(last) = hull.last() {
            if (pt.b - last.b).abs() <= 1e-14 {
                continue;
            }
        }
        while hull.len() >= 2 {
            let (a, b) = (&hull[hull.len() - 2], &hull[hull.len() - 1]);
            // Remove `b` if it lies on or below the chord from `a` to `pt`.
            let cross = (b.b - a.b) * (pt.c - a.c) - (b.c - a.c) * (pt.b - a.b);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(pt);
    }
    // Enforce monotonicity from the flat segment on.
    let mut out: Vec<CurvePoint> = Vec::with_capacity(hull.len());
    for pt in hull {
        if out.last().is_none_or(|last: &CurvePoint| pt.c <= last.c + 1e-12) {
            out.push(pt);
        }
    }
    out
}

impl CapacityCurve {
    /// Input law of the point whose finite tilt is closest to `mu` (in `ln mu`).
    fn nearest_tilt(&self, mu: f64) -> Option<&[f64]> {
        let dist = |m: f64| if mu == 0.0 || m == 0.0 { (mu - m).abs() } else { (mu.ln() - m.ln()).abs() };
        self.points
            .iter()
            .filter(|pt| pt.mu.is_finite() && (mu == 0.0) == (pt.mu == 0.0))
            .min_by(|a, b| dist(a.mu).total_cmp(&dist(b.mu)))
            .map(|pt| pt.p.probs())
    }

    /// `C(B)` in bits.
    pub fn capacity_at(&self, b: f64) -> f64 {
        if b <= self.b_unconstrained {
            return self.c_max_bits;
        }
        if b > self.b_max + 1e-12 {
            return 0.0;
        }
        let pts = &self.points;
        let k = pts.partition_point(|pt| pt.b < b);
        if k == 0 {
            return pts[0].c;
        }
        if k >= pts.len() {
            return pts[pts.len() - 1].c;
        }
        let (a, z) = (&pts[k - 1], &pts[k]);
        if z.b - a.b <= 0.0 {
            return z.c;
        }
        a.c + (z.c - a.c) * (b - a.b) / (z.b - a.b)
    }

    /// `B(R) = max { B : C(B) >= R }`.
    pub fn energy_capacity(&self, r: f64) -> Result<f64> {
        if !(r >= 0.0) {
            return Err(Error::invalid(format!("rate must be >= 0, got {r}")));
        }
        if r > self.c_max_bits + 1e-9 {
            return Err(Error::invalid(format!(
                "rate {r} bits exceeds the unconstrained capacity {} bits",
                self.c_max_bits
            )));
        }
        let pts = &self.points;
        let last = &pts[pts.len() - 1];
        if r <= last.c {
            return Ok(self.b_max);
        }
        if r >= self.c_max_bits {
            return Ok(self.b_unconstrained);
        }
        // C is non-increasing in B: walk back from the high-energy end.
        for k in (1..pts.len()).rev() {
            let (a, z) = (&pts[k - 1], &pts[k]);
            if a.c >= r {
                if a.c - z.c <= 0.0 {
                    return Ok(z.b);
                }
                return Ok(a.b + (z.b - a.b) * (a.c - r) / (a.c - z.c));
            }
        }
        Ok(self.b_unconstrained)
    }

    /// Writes `B,C_bits,mu` rows (endpoint tilt written as `inf`). A leading
    /// `B = 0` row covers the flat part below `b_unconstrained`.
    pub fn write_csv<W: Write>(&self, out: W, digest: Option<&str>) -> Result<()> {
        let mut out = out;
        if let Some(d) = digest {
            writeln!(out, "# config_digest={d}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["B", "C_bits", "mu"])?;
        if self.points.first().is_some_and(|p| p.b > 0.0) {
            w.write_record(["0".to_string(), self.c_max_bits.to_string(), "0".to_string()])?;
        }
        for pt in &self.points {
            w.write_record([pt.b.to_string(), pt.c.to_string(), pt.mu.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn energy_capacity(curve: &CapacityCurve, r: f64) -> Result<f64> {
    curve.energy_capacity(r)
}

pub fn capacity_at(curve: &CapacityCurve, b: f64) -> f64 {
    curve.capacity_at(b)
}

/// `min_k C_k(B)` over the curves of a finite family.
pub fn family_capacity_bound(curves: &[CapacityCurve], b: f64) -> Result<f64> {
    if curves.is_empty() {
        return Err(Error::invalid("empty family"));
    }
    Ok(curves.iter().map(|c| c.capacity_at(b)).fold(f64::INFINITY, f64::min))
}

/// `min_k B_k(R)` over the curves of a finite family.
pub fn family_energy_bound(curves: &[CapacityCurve], r: f64) -> Result<f64> {
    if curves.is_empty() {
        return Err(Error::invalid("empty family"));
    }
    curves.iter().map(|c| c.energy_capacity(r)).try_fold(f64::INFINITY, |acc, b| Ok(acc.min(b?)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::awgn_channel;
    use proptest::prelude::*;

    fn h2(p: f64) -> f64 {
        if p <= 0.0 || p >= 1.0 {
            0.0
        } else {
            -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
        }
    }

    #[test]
    fn identity_channel_capacity() {
        let (c, p) = blahut_arimoto(&ChannelModel::identity(4).unwrap(), 1e-12, 1000).unwrap();
        assert!((c - 2.0).abs() < 1e-9);
        assert!(p.probs().iter().all(|v| (v - 0.25).abs() < 1e-12));
    }

    #[test]
    fn bsc_and_z_channel() {
        let (c, p) = blahut_arimoto(&ChannelModel::binary_symmetric(0.11).unwrap(), 1e-12, 10_000).unwrap();
        assert!((c - (1.0 - h2(0.11))).abs() < 1e-9);
        assert!((p.probs()[0] - 0.5).abs() < 1e-9);
        let (c, _) = blahut_arimoto(&ChannelModel::z_channel(0.5).unwrap(), 1e-12, 10_000).unwrap();
        assert!((c - (1.25f64).log2()).abs() < 1e-6);
    }

    #[test]
    fn non_convergence_is_reported() {
        let ch = ChannelModel::z_channel(0.5).unwrap();
        match blahut_arimoto(&ch, 1e-15, 2) {
            Err(Error::NonConvergence { iterations, gap }) => {
                assert_eq!(iterations, 2);
                assert!(gap > 0.0);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn lower_bound_is_monotone() {
        let ch = awgn_channel(33, 65, 0.3, 4.0).unwrap();
        let solver = TiltedSolver::new(&ch, vec![0.0; 33], SolverOptions::new(1e-10, 100_000)).unwrap();
        let mut trace = Vec::new();
        solver.solve_traced(0.0, None, |v| trace.push(v)).unwrap();
        assert!(trace.len() > 5);
        for w in trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-12, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn zero_tilt_matches_plain_solver() {
        let ch = awgn_channel(17, 33, 0.4, 4.0).unwrap();
        let (c0, p0) = blahut_arimoto(&ch, 1e-10, 100_000).unwrap();
        let (c, _, p) = tilted_blahut_arimoto(&ch, |x: f64| x * x, 0.0, 1e-10, 100_000).unwrap();
        assert_eq!(c, c0);
        assert_eq!(p.probs(), p0.probs());
    }

    #[test]
    fn constant_energy_ignores_tilt() {
        let ch = ChannelModel::binary_symmetric(0.2).unwrap();
        let (c0, p0) = blahut_arimoto(&ch, 1e-12, 10_000).unwrap();
        for mu in [0.5, 3.0, 100.0] {
            let (c, b, p) = tilted_blahut_arimoto(&ch, |_x: f64| 0.7, mu, 1e-12, 10_000).unwrap();
            assert_eq!(c, c0);
            assert_eq!(p.probs(), p0.probs());
            assert!((b - 0.7).abs() < 1e-15);
        }
    }

    /// Exhaustive search over the 2-simplex of `I + mu E[beta]`.
    fn simplex_oracle(ch: &ChannelModel, beta: &[f64], mu: f64, step: f64) -> (f64, f64) {
        let n = (1.0 / step).round() as usize;
        let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
        for a in 0..=n {
            for b in 0..=(n - a) {
                let p = [a as f64 * step, b as f64 * step, (n - a - b) as f64 * step];
                let c = mutual_information_raw(&p, ch);
                let e: f64 = p.iter().zip(beta).map(|(x, y)| x * y).sum();
                if c + mu * e > best.0 {
                    best = (c + mu * e, c, e);
                }
            }
        }
        (best.1, best.2)
    }

    #[test]
    fn three_input_tilt_matches_simplex_search() {
        let ch = ChannelModel::from_rows(&[
            vec![0.8, 0.1, 0.1],
            vec![0.1, 0.8, 0.1],
            vec![0.1, 0.1, 0.8],
        ])
        .unwrap();
        let beta = [0.0, 0.5, 1.0];
        let solver = TiltedSolver::new(&ch, beta.to_vec(), SolverOptions::new(1e-12, 100_000)).unwrap();
        let sol = solver.solve(2.0, None).unwrap();
        let (c, b) = simplex_oracle(&ch, &beta, 2.0, 1e-3);
        assert!((sol.c_bits - c).abs() < 1e-3, "{} vs {c}", sol.c_bits);
        assert!((sol.b - b).abs() < 1e-3, "{} vs {b}", sol.b);
    }

    /// `(B, C)` pairs for `p = (1 - t, t)`, `t` on a fine grid.
    fn binary_oracle(ch: &ChannelModel, beta: [f64; 2], step: f64) -> Vec<(f64, f64)> {
        let n = (1.0 / step).round() as usize;
        (0..=n)
            .map(|k| {
                let t = k as f64 * step;
                let p = [1.0 - t, t];
                (p[0] * beta[0] + p[1] * beta[1], mutual_information_raw(&p, ch))
            })
            .collect()
    }

    #[test]
    fn bsc_curve_matches_scalar_search() {
        let ch = ChannelModel::binary_symmetric(0.11).unwrap();
        let curve = capacity_energy_curve(&ch, |x: f64| x, &CurveOptions::with_points(40)).unwrap();
        let oracle = binary_oracle(&ch, [0.0, 1.0], 1e-4);
        assert!((curve.c_max_bits - (1.0 - h2(0.11))).abs() < 1e-6);
        assert!((curve.b_unconstrained - 0.5).abs() < 1e-6);
        assert_eq!(curve.b_max, 1.0);
        for k in 0..=20 {
            let b = k as f64 / 20.0;
            let want = oracle
                .iter()
                .filter(|(e, _)| *e >= b - 1e-12)
                .map(|(_, c)| *c)
                .fold(0.0, f64::max);
            assert!((curve.capacity_at(b) - want).abs() < 1e-3, "B = {b}");
        }
        let r = 0.25;
        let want = oracle.iter().filter(|(_, c)| *c >= r).map(|(e, _)| *e).fold(0.0, f64::max);
        assert!((curve.energy_capacity(r).unwrap() - want).abs() < 1e-3);
    }

    #[test]
    fn constant_energy_curve_is_flat() {
        let ch = awgn_channel(17, 33, 0.4, 4.0).unwrap();
        let curve = capacity_energy_curve(&ch, |_x: f64| 0.3, &CurveOptions::default()).unwrap();
        assert_eq!(curve.b_max, 0.3);
        assert!((curve.b_unconstrained - 0.3).abs() < 1e-12);
        assert_eq!(curve.capacity_at(0.0), curve.c_max_bits);
        assert_eq!(curve.capacity_at(0.3), curve.c_max_bits);
        assert_eq!(curve.capacity_at(0.31), 0.0);
        for r in [0.0, 0.5 * curve.c_max_bits, curve.c_max_bits] {
            assert!((curve.energy_capacity(r).unwrap() - 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn rate_above_capacity_rejected() {
        let ch = ChannelModel::binary_symmetric(0.11).unwrap();
        let curve = capacity_energy_curve(&ch, |x: f64| x, &CurveOptions::with_points(8)).unwrap();
        assert!(curve.energy_capacity(curve.c_max_bits + 0.01).is_err());
        assert_eq!(curve.energy_capacity(0.0).unwrap(), 1.0);
    }

    #[test]
    fn probes_are_exact_knots() {
        let ch = awgn_channel(33, 65, 0.5, 4.0).unwrap();
        let beta = |x: f64| x * x;
        let mut opts = CurveOptions::with_points(8);
        opts.rate_probes = vec![0.2, 0.4];
        let curve = capacity_energy_curve(&ch, beta, &opts).unwrap();
        let solver = TiltedSolver::from_function(&ch, beta, opts.solver).unwrap();
        for r in [0.2, 0.4] {
            let b = curve.energy_capacity(r).unwrap();
            let pt = curve.points.iter().find(|pt| (pt.b - b).abs() < 1e-8).expect("knot");
            assert!((pt.c - r).abs() < 1e-8);
            let again = solver.solve(pt.mu, None).unwrap();
            assert!((again.b - b).abs() < 1e-6);
        }
    }

    #[test]
    fn curve_is_concave_and_dual_consistent() {
        let ch = awgn_channel(33, 65, 0.5, 4.0).unwrap();
        let curve =
            capacity_energy_curve(&ch, |x: f64| (3.0 * x).sin().abs(), &CurveOptions::with_points(24)).unwrap();
        let pts = &curve.points;
        for w in pts.windows(2) {
            assert!(w[1].b > w[0].b);
            assert!(w[1].c <= w[0].c + 1e-6);
        }
        for w in pts.windows(3) {
            let s1 = (w[1].c - w[0].c) / (w[1].b - w[0].b);
            let s2 = (w[2].c - w[1].c) / (w[2].b - w[1].b);
            assert!(s2 <= s1 + 1e-6);
        }
        for pt in pts {
            assert!(curve.energy_capacity(pt.c).unwrap() >= pt.b - 1e-6);
        }
        for k in 0..=10 {
            let r = curve.c_max_bits * k as f64 / 10.0;
            let b = curve.energy_capacity(r).unwrap();
            assert!(curve.capacity_at(b) >= r - 1e-6);
        }
    }

    #[test]
    fn density_cap_limits_energy() {
        let ch = awgn_channel(33, 65, 0.5, 4.0).unwrap();
        let cap = 2.0 / 33.0;
        let mut opts = CurveOptions::with_points(12);
        opts.solver.density_cap = Some(cap);
        let curve = capacity_energy_curve(&ch, |x: f64| x, &opts).unwrap();
        // Greedy fill: 16 letters at the cap from the top plus the remainder.
        let mut want = 0.0;
        let mut left = 1.0;
        for i in (0..33).rev() {
            let take = f64::min(cap, left);
            want += take * i as f64 / 32.0;
            left -= take;
        }
        assert!((curve.b_max - want).abs() < 1e-12);
        for pt in &curve.points {
            assert!(pt.p.probs().iter().all(|&v| v <= cap + 1e-12));
        }
    }

    #[test]
    fn family_bounds_take_the_worst_member() {
        let ch = ChannelModel::binary_symmetric(0.11).unwrap();
        let opts = CurveOptions::with_points(12);
        let ramp = capacity_energy_curve(&ch, |x: f64| x, &opts).unwrap();
        let flat = capacity_energy_curve(&ch, |_: f64| 0.7, &opts).unwrap();
        let family = [ramp.clone(), flat.clone()];
        // At B = 0.8 the flat member cannot deliver, so the bound is 0.
        assert_eq!(family_capacity_bound(&family, 0.8).unwrap(), 0.0);
        assert_eq!(family_capacity_bound(&family, 0.6).unwrap(), ramp.capacity_at(0.6));
        let r = 0.3;
        let want = ramp.energy_capacity(r).unwrap().min(0.7);
        assert!((family_energy_bound(&family, r).unwrap() - want).abs() < 1e-12);
        assert!(family_capacity_bound(&[], 0.1).is_err());
    }

    #[test]
    fn tilt_is_shift_invariant() {
        let ch = awgn_channel(9, 17, 0.5, 4.0).unwrap();
        let beta: Vec<f64> = [3, 1, 4, 1, 5, 1, 2, 6, 5].iter().map(|&v| v as f64 / 8.0).collect();
        let shifted: Vec<f64> = beta.iter().map(|v| v + 0.5).collect();
        let opts = SolverOptions::new(1e-11, 100_000);
        let a = TiltedSolver::new(&ch, beta, opts).unwrap();
        let b = TiltedSolver::new(&ch, shifted, opts).unwrap();
        for mu in [0.0, 0.25, 2.0, 16.0] {
            let (sa, sb) = (a.solve(mu, None).unwrap(), b.solve(mu, None).unwrap());
            assert_eq!(sa.p.probs(), sb.p.probs());
            assert_eq!(sa.c_bits, sb.c_bits);
            assert!((sb.b - sa.b - 0.5).abs() < 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn capped_projection_is_feasible(r in prop::collection::vec(0.0f64..5.0, 4..20), slack in 1.0f64..3.0) {
            prop_assume!(r.iter().any(|&v| v > 0.0));
            let cap = slack / r.len() as f64;
            let p = project(r.clone(), Some(cap));
            let sum: f64 = p.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-9);
            prop_assert!(p.iter().all(|&v| v >= 0.0 && v <= cap + 1e-12));
        }

        #[test]
        fn two_input_curves_match_scalar_search(e in 0.01f64..0.45, b0 in 0.0f64..1.0, b1 in 0.0f64..1.0) {
            let ch = ChannelModel::binary_symmetric(e).unwrap();
            let curve = capacity_energy_curve(&ch, |x: f64| if x < 0.5 { b0 } else { b1 }, &CurveOptions::with_points(24)).unwrap();
            let oracle = binary_oracle(&ch, [b0, b1], 1e-4);
            for k in 0..20 {
                let b = b0.min(b1) + (b0.max(b1) - b0.min(b1)) * k as f64 / 19.0;
                let want = oracle.iter().filter(|(x, _)| *x >= b - 1e-12).map(|(_, c)| *c).fold(0.0, f64::max);
                let got = curve.capacity_at(b);
                prop_assert!((got - want).abs() < 1e-3, "B = {}: {} vs {}", b, got, want);
            }
        }
    }
}
