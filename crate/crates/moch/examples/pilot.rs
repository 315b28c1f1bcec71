//! One-shot calibration run: measures every quantity the acceptance
//! gates freeze (ensemble ratio stability, datum spot checks, scaling
//! exponents, inflation growth numbers, flow-map windows) and prints
//! them with timings.

use moch::*;
use std::time::Instant;

fn main() -> Result<()> {
    let t_all = Instant::now();

    // --- Estimate ensembles -------------------------------------------
    let t = Instant::now();
    let cfg_a = EnsembleConfig::default();
    let mut cfg_b = cfg_a;
    cfg_b.seed = 0x7265706f;
    let ens_a = run_ensemble(&cfg_a)?;
    let ens_b = run_ensemble(&cfg_b)?;
    println!("## ensembles ({:.1?})", t.elapsed());
    for (&(id, ra), &(_, rb)) in ens_a.max_ratios.iter().zip(&ens_b.max_ratios) {
        let drift = if rb > 0.0 { ra / rb } else { f64::NAN };
        println!(
            "{:<26} maxA {:>12.6e}  maxB {:>12.6e}  A/B {:.4}",
            id.as_str(),
            ra,
            rb,
            drift
        );
    }

    // --- Datum spot check (scale 8) -----------------------------------
    let t = Instant::now();
    let grid8 = Grid::new(auto_grid_size(8), 2.0 * std::f64::consts::PI)?;
    let part8 = DyadicPartition::new(&grid8)?;
    let datum8 = build_gamma0(&part8, 8, CorrectorMode::Regular)?;
    let spot = commutator_check(&part8, &datum8.gamma0, 1.0, "datum8")?;
    println!("## datum8 commutator spot ({:.1?})", t.elapsed());
    for r in &spot.reports {
        println!(
            "{:<26} lhs {:>12.6e}  rhs {:>12.6e}  ratio {:?}",
            r.id.as_str(),
            r.lhs,
            r.rhs,
            r.ratio
        );
    }
    println!("path gap {:.3e}", spot.max_path_gap);

    // --- Scaling sweep -------------------------------------------------
    let t = Instant::now();
    let table = scaling_sweep(&[6, 7, 8, 9, 10, 11, 12], CorrectorMode::Regular)?;
    println!("## scaling sweep ({:.1?})", t.elapsed());
    for r in &table.rows {
        println!(
            "N={:<3} a {:.6}  w {:.6}  b {:.6}  ratio {:.6}",
            r.scale,
            r.sum_norm,
            r.weighted_norm,
            r.square_norm,
            r.square_norm / r.sum_norm
        );
    }
    println!(
        "exponents: a {:.4}  w {:.4}  b {:.4}",
        table.sum_norm_exponent, table.weighted_norm_exponent, table.square_norm_exponent
    );

    // --- Inflation runs ------------------------------------------------
    let policy = InflationPolicy::default();
    let mut reports = Vec::new();
    for scale in [6, 8, 10] {
        let t = Instant::now();
        let r = inflation_run(scale, &policy)?;
        println!("## inflation N={scale} ({:.1?})", t.elapsed());
        println!(
            "  dt {:.3e} horizon {:.4}  datum a {:.4} w {:.2} b {:.4}",
            r.dt, r.horizon, r.datum_sum_norm, r.datum_weighted_norm, r.datum_square_norm
        );
        println!(
            "  sup {:.6} at t {:.4}  amplification {:.6}  weighted ceiling {:.2} (/N^1.9 = {:.3})",
            r.sup_norm,
            r.argmax_time,
            r.amplification,
            r.weighted_ceiling,
            r.weighted_ceiling / (scale as f64).powf(1.9)
        );
        let b = &r.slope_budget;
        println!(
            "  slope {:.4}  rhs {:.4}  sq/2 {:.4}  linear {:.4}  stretch {:.4}  comm {:.4}",
            r.initial_slope, b.rhs_norm, b.square_half_norm, b.linear_norm, b.stretch_norm, b.commutator_sum
        );
        println!(
            "  slope+drags {:.4} vs 0.1*sq/2 {:.4}   truncated {}",
            r.initial_slope + b.linear_norm + b.stretch_norm + b.commutator_sum,
            0.1 * b.square_half_norm,
            r.truncated
        );
        reports.push(r);
    }
    println!(
        "amplifications: {:?}",
        reports.iter().map(|r| r.amplification).collect::<Vec<_>>()
    );
    let slopes: Vec<(f64, f64)> = reports
        .iter()
        .map(|r| (r.scale as f64, r.initial_slope))
        .collect();
    println!("slope points {slopes:?}");

    // --- Flow maps on datum runs ---------------------------------------
    for (scale, steps_pow, snap_pow, stride) in [(6i32, 10u32, 5u32, 16usize), (8, 12, 7, 32)] {
        let t = Instant::now();
        let grid = Grid::new(auto_grid_size(scale), 2.0 * std::f64::consts::PI)?;
        let part = DyadicPartition::new(&grid)?;
        let datum = build_gamma0(&part, scale, CorrectorMode::Regular)?;
        let horizon = (scale as f64).powf(-0.5);
        let steps = 1usize << steps_pow;
        let mut params = MochParams::new(1.0, horizon / steps as f64, horizon)?;
        params.record_every = steps;
        params.snapshot_every = Some(1 << snap_pow);
        let traj = solve(&datum.gamma0, &part, &params)?;
        let opts = FlowOptions {
            clock: FlowClock::Snapshots,
            particle_stride: stride,
            record_every: 1,
        };
        let flow = flow_map(&traj, 1.0, &opts)?;
        println!(
            "## flow N={scale} ({:.1?}): y_xi in [{:.6}, {:.6}], law err {:.3e}, {} maps",
            t.elapsed(),
            flow.min_y_xi,
            flow.max_y_xi,
            flow.max_jacobian_rel_err,
            flow.maps.len()
        );
    }

    println!("total {:.1?}", t_all.elapsed());
    Ok(())
}
