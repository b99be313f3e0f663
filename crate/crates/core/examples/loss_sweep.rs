//! Energy and information loss of the reconstructed capacity-energy curve as
//! the number of noiseless samples grows.

use siet::capacity::{capacity_energy_curve, CurveOptions};
use siet::channel::awgn_channel;
use siet::grid::sine_plus_step;
use siet::loss::{loss_sweep, SweepConfig};
use siet::reconstruct::{Method, ReconstructionConfig};

fn main() -> siet::Result<()> {
    let ch = awgn_channel(257, 257, 0.5, 4.0)?;
    let mut curve = CurveOptions::with_points(8);
    curve.max_refinements = 0;
    let truth = capacity_energy_curve(&ch, sine_plus_step, &curve)?;
    let cfg = SweepConfig {
        reconstruction: ReconstructionConfig::new(Method::HaarLinear),
        sigma: 0.0,
        m_values: (4..=9).map(|j| 1 << j).collect(),
        trials: 1,
        rates: [0.25, 0.5, 0.75].iter().map(|f| f * truth.c_max_bits).collect(),
        energies: [0.6, 0.8, 1.0].iter().map(|f| f * truth.b_max).collect(),
        seed: 1,
        curve,
    };
    let report = loss_sweep(&sine_plus_step, &ch, &cfg)?;
    for row in &report.per_m {
        println!("m = {:>4}: energy loss {:.3e}, info loss {:.3e} bits", row.m, row.energy_loss_mean, row.info_loss_mean);
    }
    println!("fitted energy-loss slope {:?} (R^2 {:?})", report.fitted_slope_energy, report.fit_r2);
    println!("{}", report.summary_json()?);
    Ok(())
}
