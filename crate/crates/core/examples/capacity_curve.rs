//! Capacity-energy curves: a binary symmetric channel with `beta = (0, 1)`
//! and a quantized Gaussian channel with the step-plus-sine harvester.

use siet::capacity::{blahut_arimoto, capacity_energy_curve, CurveOptions};
use siet::channel::{awgn_channel, ChannelModel};
use siet::grid::sine_plus_step;

fn main() -> siet::Result<()> {
    let bsc = ChannelModel::binary_symmetric(0.11)?;
    let (c, _) = blahut_arimoto(&bsc, 1e-12, 10_000)?;
    println!("BSC(0.11) capacity: {c:.6} bits");
    let curve = capacity_energy_curve(&bsc, |x: f64| x, &CurveOptions::with_points(16))?;
    for b in [0.5, 0.6, 0.7, 0.8, 0.9, 1.0] {
        println!("  C({b:.1}) = {:.6} bits", curve.capacity_at(b));
    }

    let awgn = awgn_channel(257, 257, 0.5, 4.0)?;
    let curve = capacity_energy_curve(&awgn, sine_plus_step, &CurveOptions::default())?;
    println!(
        "AWGN: C_max = {:.5} bits at B = {:.4}, b_max = {:.4}, {} points",
        curve.c_max_bits,
        curve.b_unconstrained,
        curve.b_max,
        curve.points.len()
    );
    for frac in [0.25, 0.5, 0.75, 1.0] {
        let r = frac * curve.c_max_bits;
        println!("  energy at rate {r:.4}: {:.5}", curve.energy_capacity(r)?);
    }
    let mut csv = Vec::new();
    curve.write_csv(&mut csv, None)?;
    println!("{} CSV rows", String::from_utf8_lossy(&csv).lines().count() - 1);
    Ok(())
}
