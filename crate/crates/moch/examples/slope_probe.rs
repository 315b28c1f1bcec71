//! Probe the step-size dependence of the initial norm-slope measurement
//! and the dt sensitivity of the sup-norm amplification at the largest
//! sweep scale.

use moch::besov::norm_profile;
use moch::dynamics::{step_with_dt, MochState};
use moch::init::{auto_grid_size, build_gamma0, CorrectorMode};
use moch::{DyadicPartition, Grid, InflationPolicy};
use std::time::Instant;

fn slope_at(
    part: &DyadicPartition,
    gamma0: &moch::RealField,
    h: f64,
) -> moch::Result<f64> {
    let n0 = norm_profile(part, gamma0)?.total();
    let s1 = step_with_dt(
        &MochState {
            t: 0.0,
            gamma: gamma0.clone(),
        },
        1.0,
        true,
        1e6,
        h,
    )?;
    let n1 = norm_profile(part, &s1.gamma)?.total();
    let s2 = step_with_dt(&s1, 1.0, true, 1e6, h)?;
    let n2 = norm_profile(part, &s2.gamma)?.total();
    Ok((-3.0 * n0 + 4.0 * n1 - n2) / (2.0 * h))
}

fn main() -> moch::Result<()> {
    let policy = InflationPolicy::default();
    for &scale in &[6i32, 8, 10] {
        let grid = Grid::new(auto_grid_size(scale), 2.0 * std::f64::consts::PI)?;
        let part = DyadicPartition::new(&grid)?;
        let datum = build_gamma0(&part, scale, CorrectorMode::Regular)?;
        let horizon = (scale as f64).powf(-0.5);
        let dt_policy = horizon / policy.steps_for(scale) as f64;
        print!("N={scale:<3}");
        for &h in &[dt_policy, 1e-5, 3e-6, 1e-6, 3e-7, 1e-7] {
            let t0 = Instant::now();
            let s = slope_at(&part, &datum.gamma0, h)?;
            print!("  h={h:.2e} s={s:+.6e} ({:.1}s)", t0.elapsed().as_secs_f64());
        }
        println!();
    }
    Ok(())
}
