//! Information loss at the edge of the energy range.
//!
//! A constant harvesting function and a "bumpy" one that dips between the
//! sample points produce identical samples, hence identical reconstructions.
//! With a density cap the bumpy function cannot reach the constant's peak
//! energy, so at `B = b_max` the estimated curve promises full capacity while
//! the true curve is zero. Away from the edge the loss vanishes as `m` grows.

use siet::capacity::{capacity_energy_curve, CurveOptions};
use siet::channel::awgn_channel;
use siet::grid::{BvBudget, GridFunction, FINE_GRID};
use siet::loss::{bumpy_adversary, info_loss};

fn main() -> siet::Result<()> {
    let level = 0.05;
    let ch = awgn_channel(257, 257, 0.5, 4.0)?;
    let mut opts = CurveOptions::with_points(8);
    opts.max_refinements = 0;
    opts.solver = opts.solver.with_density_cap(Some(2.0 / 257.0));

    let constant = GridFunction::constant_points(FINE_GRID, level)?;
    let estimate = capacity_energy_curve(&ch, &constant, &opts)?;
    println!("estimated curve: C_max = {:.6} bits, b_max = {:.6}", estimate.c_max_bits, estimate.b_max);

    let energies: Vec<f64> = (1..=9).map(|k| 0.1 * k as f64 * estimate.b_max).collect();
    for m in [2usize, 4, 8, 16, 32, 64, 128] {
        let truth = bumpy_adversary(&constant, m, BvBudget::new(0.2)?)?;
        let actual = capacity_energy_curve(&ch, &truth, &opts)?;
        let edge = info_loss(&actual, &estimate, estimate.b_max);
        let interior = energies.iter().map(|&b| info_loss(&actual, &estimate, b)).fold(0.0, f64::max);
        println!(
            "m = {m:>4}: true b_max = {:.6}, loss at b_max = {edge:.6}, worst interior loss = {interior:.3e}",
            actual.b_max
        );
    }
    Ok(())
}
