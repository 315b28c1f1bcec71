//! Check the step-size sensitivity of the sup-norm amplification at the
//! smallest and largest sweep scales by halving the policy step.

use moch::{inflation_run, InflationPolicy};
use std::time::Instant;

fn main() -> moch::Result<()> {
    for &scale in &[6i32, 10] {
        let policy = InflationPolicy::default();
        let horizon = (scale as f64).powf(-0.5);
        let steps = policy.steps_for(scale);
        for mult in [1usize, 2] {
            let p = InflationPolicy {
                dt_override: Some(horizon / (steps * mult) as f64),
                ..policy
            };
            let t0 = Instant::now();
            let r = inflation_run(scale, &p)?;
            println!(
                "N={scale} steps={} dt={:.3e} sup={:.6} amp={:.6} argmax={:.4} wceil={:.3} slope={:+.4} ({:.0}s)",
                steps * mult,
                r.dt,
                r.sup_norm,
                r.amplification,
                r.argmax_time,
                r.weighted_ceiling,
                r.initial_slope,
                t0.elapsed().as_secs_f64()
            );
        }
    }
    Ok(())
}
