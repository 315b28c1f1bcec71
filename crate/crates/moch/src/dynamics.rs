//! Pseudospectral time integration of the equation
//!
//! ```text
//! gamma_t + G1[m] gamma_x = gamma^2 / 2 + lambda G1[m] - gamma G1[m_x]
//! m = gamma_x + gamma^2 / (2 lambda)
//! ```
//!
//! with `G1 = (d_xx - 1)^{-1}`, by the method of lines: spectral space
//! derivatives, 2/3-rule dealiasing on every product, classical RK4 in
//! time with a fixed step. Fixed-step integration keeps runs bit
//! reproducible, which the cross-parameter comparisons rely on.
//!
//! The module also carries two consistency probes. `m_form_residual`
//! measures how well the integrated solution satisfies the advected-
//! density form `m_t = -2 v m_x - m v_x + lambda v_x` (and the same with
//! the conventional coefficient ordering `-v m_x - 2 m v_x`), with `m_t`
//! from centered differences of stored snapshots. `flow_map` integrates
//! particle trajectories `dy/dt = v(t, y)` and checks the Jacobian
//! exponential law along them.

use crate::besov::{norm_profile, NormProfile};
use crate::dyadic::DyadicPartition;
use crate::error::{MochError, Result};
use crate::grid::{Grid, RealField, SpectralField};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Integration parameters.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MochParams {
    /// Coupling constant; the equation degenerates at zero.
    pub lambda: f64,
    /// Fixed RK4 step.
    pub dt: f64,
    /// Integration horizon; the solver takes `round(t_final / dt)` steps.
    pub t_final: f64,
    /// 2/3-rule dealiasing on every product (default on).
    pub dealias_on: bool,
    /// Steps between norm-series rows.
    pub record_every: usize,
    /// Steps between stored field snapshots; `None` keeps only the first
    /// and last states.
    pub snapshot_every: Option<usize>,
    /// Sup-norm ceiling; crossing it halts the run as a blow-up.
    pub blowup_ceiling: f64,
}

impl MochParams {
    pub fn new(lambda: f64, dt: f64, t_final: f64) -> Result<MochParams> {
        let p = MochParams {
            lambda,
            dt,
            t_final,
            dealias_on: true,
            record_every: 1,
            snapshot_every: None,
            blowup_ceiling: 1e6,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.lambda.is_finite() || self.lambda == 0.0 {
            return Err(MochError::invalid(format!(
                "the equation requires a nonzero finite lambda, got {}",
                self.lambda
            )));
        }
        if !self.dt.is_finite() || self.dt <= 0.0 {
            return Err(MochError::invalid(format!("dt must be positive, got {}", self.dt)));
        }
        if !self.t_final.is_finite() || self.t_final <= self.dt {
            return Err(MochError::invalid(format!(
                "t_final must exceed dt, got t_final {} with dt {}",
                self.t_final, self.dt
            )));
        }
        if self.record_every == 0 {
            return Err(MochError::invalid("record_every must be at least 1"));
        }
        if self.snapshot_every == Some(0) {
            return Err(MochError::invalid("snapshot_every must be at least 1"));
        }
        if !self.blowup_ceiling.is_finite() || self.blowup_ceiling <= 0.0 {
            return Err(MochError::invalid("blowup ceiling must be positive"));
        }
        Ok(())
    }
}

/// Instantaneous state. `m` and `v` are always recomputed from `gamma`,
/// never stored, so they cannot go stale.
#[derive(Clone, Debug)]
pub struct MochState {
    pub t: f64,
    pub gamma: RealField,
}

impl MochState {
    /// The derived pair `(m, v)` with `m = gamma_x + gamma^2/(2 lambda)`
    /// and `v = G1[m]`.
    pub fn derived(&self, lambda: f64, dealias: bool) -> Result<(RealField, RealField)> {
        let f = SpectralScratch::build(&self.gamma, lambda, dealias)?;
        Ok((f.m_hat.to_physical(), f.v_hat.to_physical()))
    }
}

/// Shared spectral intermediates of one right-hand-side evaluation.
struct SpectralScratch {
    gamma_hat: SpectralField,
    /// `gamma^2`, dealiased when requested; shared between `m` and the
    /// source term so that constant states cancel exactly.
    sq_hat: SpectralField,
    m_hat: SpectralField,
    v_hat: SpectralField,
}

impl SpectralScratch {
    fn build(gamma: &RealField, lambda: f64, dealias: bool) -> Result<SpectralScratch> {
        if !lambda.is_finite() || lambda == 0.0 {
            return Err(MochError::invalid(
                "the equation requires a nonzero finite lambda",
            ));
        }
        let gamma_hat = gamma.to_spectral();
        let mut sq_hat = gamma.pointwise_mul(gamma)?.to_spectral();
        if dealias {
            sq_hat = sq_hat.dealias();
        }
        let m_hat = gamma_hat
            .derivative()
            .add(&sq_hat.scale(1.0 / (2.0 * lambda)))?;
        let v_hat = m_hat.helmholtz_inverse();
        Ok(SpectralScratch {
            gamma_hat,
            sq_hat,
            m_hat,
            v_hat,
        })
    }
}

/// `m = gamma_x + gamma^2 / (2 lambda)`, the square dealiased when asked.
pub fn compute_m(gamma: &RealField, lambda: f64, dealias: bool) -> Result<RealField> {
    Ok(SpectralScratch::build(gamma, lambda, dealias)?
        .m_hat
        .to_physical())
}

/// The smoothed velocity `v = (d_xx - 1)^{-1} m` and its derivative.
pub fn derived_velocity(gamma: &RealField, lambda: f64, dealias: bool) -> Result<(RealField, RealField)> {
    let f = SpectralScratch::build(gamma, lambda, dealias)?;
    Ok((f.v_hat.to_physical(), f.v_hat.derivative().to_physical()))
}

/// Term-by-term right-hand side, for diagnostics and bookkeeping.
#[derive(Clone, Debug)]
pub struct RhsTerms {
    /// `-v gamma_x`.
    pub transport: RealField,
    /// `gamma^2 / 2`.
    pub square_half: RealField,
    /// `lambda v`.
    pub linear: RealField,
    /// `-gamma v_x`.
    pub stretch: RealField,
    pub total: RealField,
}

fn maybe_dealias(f: RealField, dealias: bool) -> RealField {
    if dealias {
        f.dealias()
    } else {
        f
    }
}

/// Full right-hand side with the four-term breakdown.
pub fn rhs(gamma: &RealField, lambda: f64, dealias: bool) -> Result<RhsTerms> {
    let f = SpectralScratch::build(gamma, lambda, dealias)?;
    let gamma_x = f.gamma_hat.derivative().to_physical();
    let v = f.v_hat.to_physical();
    let v_x = f.v_hat.derivative().to_physical();

    let transport = maybe_dealias(v.pointwise_mul(&gamma_x)?, dealias).scale(-1.0)?;
    let square_half = f.sq_hat.to_physical().scale(0.5)?;
    let linear = v.scale(lambda)?;
    let stretch = maybe_dealias(gamma.pointwise_mul(&v_x)?, dealias).scale(-1.0)?;
    let total = transport.add(&square_half)?.add(&linear)?.add(&stretch)?;
    if !total.linf().is_finite() {
        return Err(MochError::NonFinite("right-hand side"));
    }
    Ok(RhsTerms {
        transport,
        square_half,
        linear,
        stretch,
        total,
    })
}

/// Right-hand side without the breakdown. With dealiasing on, transport
/// and stretch are fused through the product rule,
/// `-v gamma_x - gamma v_x = -(gamma v)_x`: both sides alias only into
/// the zeroed band when the inputs are 2/3-band-limited, so the fused
/// form is exact and saves four transforms per evaluation.
fn rhs_total(gamma: &RealField, lambda: f64, dealias: bool) -> Result<RealField> {
    if !dealias {
        return Ok(rhs(gamma, lambda, dealias)?.total);
    }
    let f = SpectralScratch::build(gamma, lambda, dealias)?;
    let advection = gamma
        .pointwise_mul(&f.v_hat.to_physical())?
        .to_spectral()
        .dealias()
        .derivative()
        .scale(-1.0);
    let total = f
        .sq_hat
        .scale(0.5)
        .add(&f.v_hat.scale(lambda))?
        .add(&advection)?
        .to_physical();
    if !total.linf().is_finite() {
        return Err(MochError::NonFinite("right-hand side"));
    }
    Ok(total)
}

/// One classical RK4 step of size `dt` (sign-free, so trajectories can be
/// run backward for reversibility checks).
pub fn step_with_dt(
    state: &MochState,
    lambda: f64,
    dealias: bool,
    ceiling: f64,
    dt: f64,
) -> Result<MochState> {
    let g = &state.gamma;
    let k1 = rhs_total(g, lambda, dealias)?;
    let k2 = rhs_total(&g.add(&k1.scale(0.5 * dt)?)?, lambda, dealias)?;
    let k3 = rhs_total(&g.add(&k2.scale(0.5 * dt)?)?, lambda, dealias)?;
    let k4 = rhs_total(&g.add(&k3.scale(dt)?)?, lambda, dealias)?;
    let incr = k1
        .add(&k2.scale(2.0)?)?
        .add(&k3.scale(2.0)?)?
        .add(&k4)?
        .scale(dt / 6.0)?;
    let gamma = g.add(&incr)?;
    let t = state.t + dt;
    let max_abs = gamma.linf();
    if !max_abs.is_finite() || max_abs > ceiling {
        return Err(MochError::BlowUp { t, max_abs });
    }
    Ok(MochState { t, gamma })
}

pub fn step_rk4(state: &MochState, params: &MochParams) -> Result<MochState> {
    step_with_dt(
        state,
        params.lambda,
        params.dealias_on,
        params.blowup_ceiling,
        params.dt,
    )
}

/// One row of the norm series.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct NormRow {
    pub t: f64,
    pub b0_inf_1: f64,
    pub weighted: f64,
    pub linf: f64,
}

fn norm_row(part: &DyadicPartition, t: f64, gamma: &RealField) -> Result<NormRow> {
    let profile: NormProfile = norm_profile(part, gamma)?;
    Ok(NormRow {
        t,
        b0_inf_1: profile.total(),
        weighted: profile.weighted_sup().value,
        linf: gamma.linf(),
    })
}

/// An integrated run: thinned norm series, thinned field snapshots, and
/// the blow-up verdict.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub params: MochParams,
    pub norm_series: Vec<NormRow>,
    pub snapshot_times: Vec<f64>,
    pub snapshots: Vec<RealField>,
    /// True when the run halted before the horizon.
    pub truncated: bool,
    /// Blow-up time and magnitude when truncated.
    pub blowup: Option<(f64, f64)>,
}

impl Trajectory {
    pub fn final_state(&self) -> MochState {
        MochState {
            t: *self.snapshot_times.last().expect("trajectory holds at least the initial snapshot"),
            gamma: self.snapshots.last().expect("trajectory holds at least the initial snapshot").clone(),
        }
    }

    /// Spacing of the stored snapshots; errors when they are not
    /// uniformly spaced (within rounding).
    pub fn snapshot_spacing(&self) -> Result<f64> {
        if self.snapshot_times.len() < 2 {
            return Err(MochError::invalid("trajectory holds fewer than 2 snapshots"));
        }
        let dt = self.snapshot_times[1] - self.snapshot_times[0];
        for w in self.snapshot_times.windows(2) {
            if ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.abs().max(1.0) {
                return Err(MochError::invalid(
                    "trajectory snapshots are not uniformly spaced",
                ));
            }
        }
        Ok(dt)
    }
}

/// Integrate `gamma0` to the horizon. Blow-up truncates the run and is
/// reported on the trajectory rather than as an error.
pub fn solve(gamma0: &RealField, part: &DyadicPartition, params: &MochParams) -> Result<Trajectory> {
    params.validate()?;
    if !part.grid().same_grid(gamma0.grid()) {
        return Err(MochError::GridMismatch(
            part.grid().num_points(),
            gamma0.grid().num_points(),
        ));
    }
    let gamma = if params.dealias_on {
        gamma0.dealias()
    } else {
        gamma0.clone()
    };
    let n_steps = (params.t_final / params.dt).round() as usize;

    let mut state = MochState { t: 0.0, gamma };
    let mut norm_series = vec![norm_row(part, 0.0, &state.gamma)?];
    let mut snapshot_times = vec![0.0];
    let mut snapshots = vec![state.gamma.clone()];
    let mut truncated = false;
    let mut blowup = None;

    for step in 1..=n_steps {
        match step_rk4(&state, params) {
            Ok(next) => state = next,
            Err(MochError::BlowUp { t, max_abs }) => {
                truncated = true;
                blowup = Some((t, max_abs));
                break;
            }
            Err(e) => return Err(e),
        }
        // Keep the recorded time an exact multiple of dt.
        state.t = step as f64 * params.dt;
        let last = step == n_steps;
        if step % params.record_every == 0 || last {
            norm_series.push(norm_row(part, state.t, &state.gamma)?);
        }
        let want_snapshot = match params.snapshot_every {
            Some(s) => step % s == 0 || last,
            None => last,
        };
        if want_snapshot {
            snapshot_times.push(state.t);
            snapshots.push(state.gamma.clone());
        }
    }

    Ok(Trajectory {
        params: *params,
        norm_series,
        snapshot_times,
        snapshots,
        truncated,
        blowup,
    })
}

/// Residual norms of the advected-density form along a trajectory, with
/// the time derivative taken by centered differences over snapshots.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MFormResidual {
    pub times: Vec<f64>,
    /// `||m_t + 2 v m_x + m v_x - lambda v_x||_inf` per interior snapshot.
    pub verbatim: Vec<f64>,
    /// Same with the conventional ordering: `m_t + v m_x + 2 m v_x - lambda v_x`.
    pub conventional: Vec<f64>,
}

pub fn m_form_residual(traj: &Trajectory, lambda: f64) -> Result<MFormResidual> {
    if traj.snapshots.len() < 3 {
        return Err(MochError::invalid(
            "residual needs at least 3 uniformly spaced snapshots",
        ));
    }
    let spacing = traj.snapshot_spacing()?;
    let dealias = traj.params.dealias_on;
    let fields: Vec<SpectralScratch> = traj
        .snapshots
        .iter()
        .map(|g| SpectralScratch::build(g, lambda, dealias))
        .collect::<Result<_>>()?;

    let mut times = Vec::new();
    let mut verbatim = Vec::new();
    let mut conventional = Vec::new();
    for i in 1..fields.len() - 1 {
        let m_t = fields[i + 1]
            .m_hat
            .add(&fields[i - 1].m_hat.scale(-1.0))?
            .scale(1.0 / (2.0 * spacing))
            .to_physical();
        let f = &fields[i];
        let m = f.m_hat.to_physical();
        let m_x = f.m_hat.derivative().to_physical();
        let v = f.v_hat.to_physical();
        let v_x = f.v_hat.derivative().to_physical();
        let vmx = maybe_dealias(v.pointwise_mul(&m_x)?, dealias);
        let mvx = maybe_dealias(m.pointwise_mul(&v_x)?, dealias);
        let lam_vx = v_x.scale(lambda)?;
        let base = m_t.sub(&lam_vx)?;
        let r_verbatim = base.add(&vmx.scale(2.0)?)?.add(&mvx)?;
        let r_conventional = base.add(&vmx)?.add(&mvx.scale(2.0)?)?;
        times.push(traj.snapshot_times[i]);
        verbatim.push(r_verbatim.linf());
        conventional.push(r_conventional.linf());
    }
    Ok(MFormResidual {
        times,
        verbatim,
        conventional,
    })
}

/// How the particle integrator obtains stage velocity fields.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowClock {
    /// Re-integrate the field alongside the particles at the solver step;
    /// stage fields are exact. Right choice for modest grids.
    Solver,
    /// Use stored snapshots as stage fields, stepping particles by twice
    /// the snapshot spacing. Right choice for large carrier grids, where
    /// off-grid summation dominates the cost.
    Snapshots,
}

#[derive(Clone, Copy, Debug)]
pub struct FlowOptions {
    pub clock: FlowClock,
    /// Keep every `particle_stride`-th grid node as a particle (power of
    /// two, so the particle set is itself a uniform spectral grid).
    pub particle_stride: usize,
    /// Flow steps between stored flow maps.
    pub record_every: usize,
}

impl Default for FlowOptions {
    fn default() -> Self {
        FlowOptions {
            clock: FlowClock::Solver,
            particle_stride: 1,
            record_every: 1,
        }
    }
}

/// Particle positions and Jacobian data at one time.
#[derive(Clone, Debug)]
pub struct FlowMap {
    pub t: f64,
    /// `y(t, xi_i)` at the strided nodes `xi_i`.
    pub y: Vec<f64>,
    /// `d y / d xi` by spectral differentiation of `y - xi`, plus one.
    pub y_xi: Vec<f64>,
    /// Co-integrated `integral of v_x(s, y(s))` along each trajectory;
    /// `exp` of it is the Jacobian according to the exponential law.
    pub log_jacobian: Vec<f64>,
}

/// A flow-map series with its summary statistics.
#[derive(Clone, Debug)]
pub struct FlowSeries {
    pub maps: Vec<FlowMap>,
    pub min_y_xi: f64,
    pub max_y_xi: f64,
    /// Largest relative gap between `y_xi` and `exp(log_jacobian)` over
    /// all recorded maps.
    pub max_jacobian_rel_err: f64,
}

struct ParticleCloud {
    xi: Vec<f64>,
    pgrid: Arc<Grid>,
}

impl ParticleCloud {
    fn new(grid: &Arc<Grid>, stride: usize) -> Result<ParticleCloud> {
        let n = grid.num_points();
        if stride == 0 || !stride.is_power_of_two() || n / stride.max(1) < 8 {
            return Err(MochError::invalid(format!(
                "particle stride must be a power of two leaving at least 8 particles, got {stride} on {n} nodes"
            )));
        }
        let xi: Vec<f64> = (0..n).step_by(stride).map(|i| grid.node(i)).collect();
        let pgrid = Grid::new(n / stride, grid.period())?;
        Ok(ParticleCloud { xi, pgrid })
    }

    /// Spectral Jacobian of the displacement field, checked positive.
    fn jacobian(&self, t: f64, y: &[f64]) -> Result<Vec<f64>> {
        let disp: Vec<f64> = y.iter().zip(&self.xi).map(|(yy, xi)| yy - xi).collect();
        let y_xi: Vec<f64> = RealField::from_samples(&self.pgrid, disp)?
            .derivative()
            .samples()
            .iter()
            .map(|d| d + 1.0)
            .collect();
        if y_xi.iter().any(|&v| v <= 0.0) {
            return Err(MochError::DiffeomorphismLost { t });
        }
        Ok(y_xi)
    }
}

fn axpy(y: &[f64], k: &[f64], h: f64) -> Vec<f64> {
    y.iter().zip(k).map(|(a, b)| a + h * b).collect()
}

struct FlowRecorder {
    cloud: ParticleCloud,
    maps: Vec<FlowMap>,
    min_y_xi: f64,
    max_y_xi: f64,
    max_rel_err: f64,
}

impl FlowRecorder {
    fn record(&mut self, t: f64, y: &[f64], log_jac: &[f64]) -> Result<()> {
        let y_xi = self.cloud.jacobian(t, y)?;
        for (&yx, &lj) in y_xi.iter().zip(log_jac) {
            self.min_y_xi = self.min_y_xi.min(yx);
            self.max_y_xi = self.max_y_xi.max(yx);
            let law = lj.exp();
            self.max_rel_err = self.max_rel_err.max((yx - law).abs() / law);
        }
        self.maps.push(FlowMap {
            t,
            y: y.to_vec(),
            y_xi,
            log_jacobian: log_jac.to_vec(),
        });
        Ok(())
    }
}

/// Integrate the particle flow of a trajectory and check the Jacobian
/// along it. Monotonicity of `y` in `xi` is asserted (via positivity of
/// the spectral Jacobian), never repaired.
pub fn flow_map(traj: &Trajectory, lambda: f64, opts: &FlowOptions) -> Result<FlowSeries> {
    if opts.record_every == 0 {
        return Err(MochError::invalid("flow record_every must be at least 1"));
    }
    let grid = traj.snapshots[0].grid();
    let cloud = ParticleCloud::new(grid, opts.particle_stride)?;
    let mut rec = FlowRecorder {
        maps: Vec::new(),
        min_y_xi: f64::INFINITY,
        max_y_xi: f64::NEG_INFINITY,
        max_rel_err: 0.0,
        cloud,
    };
    let mut y = rec.cloud.xi.clone();
    let mut log_jac = vec![0.0; y.len()];
    let t0 = traj.snapshot_times[0];
    rec.record(t0, &y, &log_jac)?;

    let dealias = traj.params.dealias_on;
    match opts.clock {
        FlowClock::Solver => {
            let dt = traj.params.dt;
            let t_end = *traj.snapshot_times.last().expect("nonempty");
            let n_steps = ((t_end - t0) / dt).round() as usize;
            let mut state = MochState {
                t: t0,
                gamma: traj.snapshots[0].clone(),
            };
            for step in 1..=n_steps {
                // One coupled RK4 step of (gamma, y, log_jac): the field
                // advances through its own stages, and each stage velocity
                // is summed directly at the stage particle positions.
                let stage = |g: &RealField, ys: &[f64]| -> Result<(RealField, Vec<f64>, Vec<f64>)> {
                    let f = SpectralScratch::build(g, lambda, dealias)?;
                    let vy = f.v_hat.eval_at(ys);
                    let vxy = f.v_hat.derivative().eval_at(ys);
                    Ok((rhs_total(g, lambda, dealias)?, vy, vxy))
                };
                let g = &state.gamma;
                let (kg1, ky1, ki1) = stage(g, &y)?;
                let (kg2, ky2, ki2) = stage(&g.add(&kg1.scale(0.5 * dt)?)?, &axpy(&y, &ky1, 0.5 * dt))?;
                let (kg3, ky3, ki3) = stage(&g.add(&kg2.scale(0.5 * dt)?)?, &axpy(&y, &ky2, 0.5 * dt))?;
                let (kg4, ky4, ki4) = stage(&g.add(&kg3.scale(dt)?)?, &axpy(&y, &ky3, dt))?;
                let incr = kg1
                    .add(&kg2.scale(2.0)?)?
                    .add(&kg3.scale(2.0)?)?
                    .add(&kg4)?
                    .scale(dt / 6.0)?;
                state = MochState {
                    t: t0 + step as f64 * dt,
                    gamma: g.add(&incr)?,
                };
                if !state.gamma.linf().is_finite() {
                    return Err(MochError::NonFinite("flow-map field re-integration"));
                }
                for i in 0..y.len() {
                    y[i] += dt / 6.0 * (ky1[i] + 2.0 * ky2[i] + 2.0 * ky3[i] + ky4[i]);
                    log_jac[i] += dt / 6.0 * (ki1[i] + 2.0 * ki2[i] + 2.0 * ki3[i] + ki4[i]);
                }
                if step % opts.record_every == 0 || step == n_steps {
                    rec.record(state.t, &y, &log_jac)?;
                }
            }
        }
        FlowClock::Snapshots => {
            if traj.snapshots.len() < 3 {
                return Err(MochError::invalid(
                    "snapshot-clock flow needs at least 3 snapshots",
                ));
            }
            let spacing = traj.snapshot_spacing()?;
            let h = 2.0 * spacing;
            let n_steps = (traj.snapshots.len() - 1) / 2;
            // Velocity spectra are derived per snapshot on demand and the
            // trailing one is reused across adjacent steps.
            let mut cache: Option<(usize, SpectralField, SpectralField)> = None;
            let vel = |idx: usize,
                           cache: &mut Option<(usize, SpectralField, SpectralField)>|
             -> Result<(SpectralField, SpectralField)> {
                if let Some((i, v, vx)) = cache {
                    if *i == idx {
                        return Ok((v.clone(), vx.clone()));
                    }
                }
                let f = SpectralScratch::build(&traj.snapshots[idx], lambda, dealias)?;
                let v = f.v_hat;
                let vx = v.derivative();
                *cache = Some((idx, v.clone(), vx.clone()));
                Ok((v, vx))
            };
            for step in 0..n_steps {
                let (v0, vx0) = vel(2 * step, &mut cache)?;
                let f_mid = SpectralScratch::build(&traj.snapshots[2 * step + 1], lambda, dealias)?;
                let (v1, vx1) = (f_mid.v_hat.clone(), f_mid.v_hat.derivative());
                let (v2, vx2) = vel(2 * step + 2, &mut cache)?;

                let ky1 = v0.eval_at(&y);
                let ki1 = vx0.eval_at(&y);
                let y2 = axpy(&y, &ky1, 0.5 * h);
                let ky2 = v1.eval_at(&y2);
                let ki2 = vx1.eval_at(&y2);
                let y3 = axpy(&y, &ky2, 0.5 * h);
                let ky3 = v1.eval_at(&y3);
                let ki3 = vx1.eval_at(&y3);
                let y4 = axpy(&y, &ky3, h);
                let ky4 = v2.eval_at(&y4);
                let ki4 = vx2.eval_at(&y4);
                for i in 0..y.len() {
                    y[i] += h / 6.0 * (ky1[i] + 2.0 * ky2[i] + 2.0 * ky3[i] + ky4[i]);
                    log_jac[i] += h / 6.0 * (ki1[i] + 2.0 * ki2[i] + 2.0 * ki3[i] + ki4[i]);
                }
                let t = traj.snapshot_times[2 * step + 2];
                if (step + 1) % opts.record_every == 0 || step + 1 == n_steps {
                    rec.record(t, &y, &log_jac)?;
                }
            }
        }
    }

    Ok(FlowSeries {
        maps: rec.maps,
        min_y_xi: rec.min_y_xi,
        max_y_xi: rec.max_y_xi,
        max_jacobian_rel_err: rec.max_rel_err,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use approx::assert_relative_eq;

    const TAU: f64 = 2.0 * std::f64::consts::PI;

    fn setup(n: usize) -> DyadicPartition {
        DyadicPartition::new(&Grid::new(n, TAU).unwrap()).unwrap()
    }

    fn smooth_field(grid: &Arc<Grid>) -> RealField {
        RealField::from_fn(grid, |x| 0.4 * x.sin() + 0.3 * (2.0 * x).cos()).unwrap()
    }

    #[test]
    fn params_validation_catches_degenerate_inputs() {
        assert!(MochParams::new(1.0, 1e-3, 1.0).is_ok());
        assert!(MochParams::new(0.0, 1e-3, 1.0).is_err());
        assert!(MochParams::new(1.0, 0.0, 1.0).is_err());
        assert!(MochParams::new(1.0, -1e-3, 1.0).is_err());
        assert!(MochParams::new(1.0, 0.5, 0.4).is_err());
        let mut p = MochParams::new(1.0, 1e-3, 1.0).unwrap();
        p.record_every = 0;
        assert!(p.validate().is_err());
        p.record_every = 1;
        p.snapshot_every = Some(0);
        assert!(p.validate().is_err());
    }

    #[test]
    fn compute_m_known_cases() {
        let part = setup(64);
        let grid = part.grid();
        let zero = RealField::zeros(grid);
        assert_eq!(compute_m(&zero, 1.0, true).unwrap().linf(), 0.0);

        let c = RealField::constant(grid, 3.0).unwrap();
        let m = compute_m(&c, 2.0, true).unwrap();
        for s in m.samples() {
            assert_relative_eq!(*s, 9.0 / 4.0, epsilon = 1e-13);
        }

        // gamma = sin x, lambda = 1/2: m = cos x + sin^2 x.
        let g = RealField::from_fn(grid, |x| x.sin()).unwrap();
        let m = compute_m(&g, 0.5, true).unwrap();
        let want = RealField::from_fn(grid, |x| x.cos() + x.sin().powi(2)).unwrap();
        assert!(m.sub(&want).unwrap().linf() < 1e-13);

        assert!(compute_m(&g, 0.0, true).is_err());
    }

    #[test]
    fn rhs_vanishes_on_zero_and_constants() {
        let part = setup(64);
        let grid = part.grid();
        let z = rhs(&RealField::zeros(grid), 0.7, true).unwrap();
        assert_eq!(z.total.linf(), 0.0);

        for c in [1.0, -2.5, 10.0] {
            for lambda in [1.0, 0.3, -2.0] {
                let terms = rhs(&RealField::constant(grid, c).unwrap(), lambda, true).unwrap();
                let tol = 1e-14 * (1.0 + c.abs().powi(3));
                assert!(
                    terms.total.linf() <= tol,
                    "constant {c} lambda {lambda}: residual {}",
                    terms.total.linf()
                );
                assert_eq!(terms.transport.linf(), 0.0);
                assert_eq!(terms.stretch.linf(), 0.0);
            }
        }
    }

    #[test]
    fn rhs_linearizes_to_the_dispersive_term() {
        // gamma = eps sin x, lambda = 1: rhs = -(eps/2) cos x + O(eps^2),
        // from G1[cos x] = -cos(x)/2.
        let part = setup(64);
        let eps = 1e-6;
        let g = RealField::from_fn(part.grid(), |x| eps * x.sin()).unwrap();
        let r = rhs(&g, 1.0, true).unwrap();
        let lin = RealField::from_fn(part.grid(), |x| -0.5 * eps * x.cos()).unwrap();
        let gap = r.total.sub(&lin).unwrap().linf();
        assert!(gap < 10.0 * eps * eps, "linearization gap {gap}");
    }

    #[test]
    fn rhs_breakdown_sums_to_total_and_matches_fused_path() {
        let part = setup(128);
        let g = smooth_field(part.grid());
        for dealias in [true, false] {
            let terms = rhs(&g, 0.8, dealias).unwrap();
            let sum = terms
                .transport
                .add(&terms.square_half)
                .unwrap()
                .add(&terms.linear)
                .unwrap()
                .add(&terms.stretch)
                .unwrap();
            assert!(sum.sub(&terms.total).unwrap().linf() < 1e-15);
            let fused = rhs_total(&g, 0.8, dealias).unwrap();
            assert!(
                fused.sub(&terms.total).unwrap().linf() < 1e-13,
                "fused path diverges with dealias {dealias}"
            );
        }
    }

    #[test]
    fn constants_are_equilibria_of_the_stepper() {
        let grid = Grid::new(64, TAU).unwrap();
        let state = MochState {
            t: 0.0,
            gamma: RealField::constant(&grid, -2.5).unwrap(),
        };
        let next = step_with_dt(&state, 0.7, true, 1e6, 1e-2).unwrap();
        let drift = next.gamma.sub(&state.gamma).unwrap().linf();
        assert!(drift <= 1e-14 * (1.0 + 2.5f64.powi(3)), "drift {drift}");
        assert_relative_eq!(next.t, 1e-2);
    }

    #[test]
    fn stepper_flags_blowup_and_nan() {
        let grid = Grid::new(64, TAU).unwrap();
        let state = MochState {
            t: 0.0,
            gamma: smooth_field(&grid),
        };
        // A ceiling below the current amplitude trips immediately.
        match step_with_dt(&state, 1.0, true, 1e-3, 1e-3) {
            Err(MochError::BlowUp { t, max_abs }) => {
                assert!(t > 0.0);
                assert!(max_abs > 1e-3);
            }
            other => panic!("expected blow-up, got {other:?}"),
        }
    }

    #[test]
    fn rk4_richardson_ratio_is_fourth_order() {
        // Amplitude, horizon, and dt are chosen so the discretization
        // error sits far above rounding noise (~1e-8 at dt = 2e-2) but
        // still deep in the asymptotic regime. Against a dt/8 reference
        // the fourth-order ratio is 4095/255, about 16.06.
        let part = setup(64);
        let g0 = RealField::from_fn(part.grid(), |x| x.sin() + 0.5 * (2.0 * x).cos()).unwrap();
        let run = |dt: f64| {
            let mut p = MochParams::new(0.7, dt, 1.0).unwrap();
            p.record_every = usize::MAX / 2;
            solve(&g0, &part, &p).unwrap().final_state().gamma
        };
        let reference = run(2.5e-3);
        let e1 = run(2e-2).sub(&reference).unwrap().linf();
        let e2 = run(1e-2).sub(&reference).unwrap().linf();
        let ratio = e1 / e2;
        assert!(
            (14.0..=18.0).contains(&ratio),
            "Richardson ratio {ratio} (errors {e1:.3e}, {e2:.3e})"
        );
    }

    #[test]
    fn spatial_resolution_is_already_converged() {
        let coarse = setup(64);
        let fine = setup(128);
        let run = |part: &DyadicPartition| {
            let mut p = MochParams::new(0.7, 1e-3, 0.1).unwrap();
            p.record_every = usize::MAX / 2;
            solve(&smooth_field(part.grid()), part, &p)
                .unwrap()
                .final_state()
                .gamma
        };
        let gc = run(&coarse);
        let gf = run(&fine);
        // Compare on the shared nodes.
        let mut worst = 0.0f64;
        for (i, s) in gc.samples().iter().enumerate() {
            worst = worst.max((s - gf.samples()[2 * i]).abs());
        }
        assert!(worst < 1e-9, "spatial drift {worst}");
    }

    #[test]
    fn time_reversal_returns_to_the_initial_state() {
        let part = setup(64);
        let g0 = smooth_field(part.grid());
        let dt = 1e-3;
        let steps = 100;
        let mut state = MochState {
            t: 0.0,
            gamma: g0.dealias(),
        };
        for _ in 0..steps {
            state = step_with_dt(&state, 0.7, true, 1e6, dt).unwrap();
        }
        for _ in 0..steps {
            state = step_with_dt(&state, 0.7, true, 1e6, -dt).unwrap();
        }
        let gap = state.gamma.sub(&g0.dealias()).unwrap().linf();
        assert!(gap < 1e-10, "reversal gap {gap}");
    }

    #[test]
    fn derived_state_is_consistent_with_the_helmholtz_operator() {
        let grid = Grid::new(128, TAU).unwrap();
        let state = MochState {
            t: 0.0,
            gamma: smooth_field(&grid),
        };
        let (m, v) = state.derived(0.9, true).unwrap();
        // G v = v_xx - v must reproduce m.
        let g_of_v = v
            .to_spectral()
            .apply_multiplier(|xi| -(1.0 + xi * xi))
            .to_physical();
        assert!(g_of_v.sub(&m).unwrap().linf() < 1e-10);
    }

    #[test]
    fn solve_keeps_zero_and_constants() {
        let part = setup(64);
        let mut p = MochParams::new(1.0, 1e-2, 0.2).unwrap();
        p.record_every = 5;
        let traj = solve(&RealField::zeros(part.grid()), &part, &p).unwrap();
        assert!(!traj.truncated);
        for row in &traj.norm_series {
            assert_eq!(row.b0_inf_1, 0.0);
            assert_eq!(row.linf, 0.0);
        }

        let traj = solve(&RealField::constant(part.grid(), 1.5).unwrap(), &part, &p).unwrap();
        for row in &traj.norm_series {
            assert_relative_eq!(row.linf, 1.5, epsilon = 1e-12);
            assert_relative_eq!(row.b0_inf_1, 1.5, epsilon = 1e-12);
        }
        let times: Vec<f64> = traj.norm_series.iter().map(|r| r.t).collect();
        assert!(times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn solve_truncates_on_blowup_with_last_valid_time() {
        let part = setup(64);
        let mut p = MochParams::new(1.0, 1e-2, 0.5).unwrap();
        p.blowup_ceiling = 0.42; // initial sup is ~0.41, first step trips
        let traj = solve(&smooth_field(part.grid()), &part, &p).unwrap();
        assert!(traj.truncated);
        let (t, mag) = traj.blowup.unwrap();
        assert!(t > 0.0 && t <= 0.5);
        assert!(mag > 0.42);
        assert!(traj.norm_series.last().unwrap().t < t);
    }

    #[test]
    fn residual_vanishes_on_trivial_trajectories() {
        let part = setup(64);
        let mut p = MochParams::new(0.8, 1e-2, 0.1).unwrap();
        p.snapshot_every = Some(1);
        let traj = solve(&RealField::zeros(part.grid()), &part, &p).unwrap();
        let res = m_form_residual(&traj, 0.8).unwrap();
        assert!(res.verbatim.iter().all(|&r| r == 0.0));
        assert!(res.conventional.iter().all(|&r| r == 0.0));

        let traj = solve(&RealField::constant(part.grid(), 2.0).unwrap(), &part, &p).unwrap();
        let res = m_form_residual(&traj, 0.8).unwrap();
        assert!(res.verbatim.iter().all(|&r| r < 1e-11));
        assert!(res.conventional.iter().all(|&r| r < 1e-11));
    }

    #[test]
    fn residual_requires_enough_uniform_snapshots() {
        let part = setup(64);
        let p = MochParams::new(0.8, 1e-2, 0.1).unwrap();
        // Default snapshots: first and last only.
        let traj = solve(&smooth_field(part.grid()), &part, &p).unwrap();
        assert!(m_form_residual(&traj, 0.8).is_err());
    }

    #[test]
    fn conventional_residual_refines_while_verbatim_stays_flat() {
        // The solved equation implies the advected-density form with the
        // conventional coefficients (-v m_x - 2 m v_x): that residual is a
        // pure centered-difference artifact and shrinks by ~4x per dt
        // halving. The other ordering differs by the O(1) field
        // v m_x - m v_x and cannot refine.
        let part = setup(64);
        let g0 = smooth_field(part.grid());
        let res = |dt: f64| {
            let mut p = MochParams::new(0.7, dt, 0.1).unwrap();
            p.snapshot_every = Some(1);
            p.record_every = usize::MAX / 2;
            let traj = solve(&g0, &part, &p).unwrap();
            let r = m_form_residual(&traj, 0.7).unwrap();
            let mid = r.times.len() / 2;
            (r.conventional[mid], r.verbatim[mid])
        };
        let (c1, v1) = res(2e-3);
        let (c2, v2) = res(1e-3);
        let contraction = c1 / c2;
        assert!(
            (3.5..=4.5).contains(&contraction),
            "conventional contraction {contraction}"
        );
        // Verbatim stays at the O(1) defect level.
        assert!(v2 > 0.5 * v1, "verbatim unexpectedly refined: {v1} -> {v2}");
        assert!(v2 > 100.0 * c2, "orderings not separated: {v2} vs {c2}");
    }

    #[test]
    fn flow_of_zero_and_constant_solutions() {
        let part = setup(64);
        let mut p = MochParams::new(0.5, 1e-2, 0.2).unwrap();
        p.snapshot_every = Some(1);
        let traj = solve(&RealField::zeros(part.grid()), &part, &p).unwrap();
        let flow = flow_map(&traj, 0.5, &FlowOptions::default()).unwrap();
        let last = flow.maps.last().unwrap();
        for (yy, xi) in last.y.iter().zip((0..64).map(|i| part.grid().node(i))) {
            assert_relative_eq!(*yy, xi, epsilon = 1e-14);
        }
        assert_relative_eq!(flow.min_y_xi, 1.0, epsilon = 1e-13);
        assert_relative_eq!(flow.max_y_xi, 1.0, epsilon = 1e-13);

        // Constant c: v = -c^2/(2 lambda), uniform translation.
        let c = 1.2f64;
        let lambda = 0.5;
        let traj = solve(&RealField::constant(part.grid(), c).unwrap(), &part, &p).unwrap();
        let flow = flow_map(&traj, lambda, &FlowOptions::default()).unwrap();
        let last = flow.maps.last().unwrap();
        let shift = -c * c / (2.0 * lambda) * last.t;
        for (yy, xi) in last.y.iter().zip((0..64).map(|i| part.grid().node(i))) {
            assert_relative_eq!(*yy, xi + shift, epsilon = 1e-12);
        }
        assert!((flow.min_y_xi - 1.0).abs() < 1e-12);
        assert!(flow.max_jacobian_rel_err < 1e-12);
    }

    #[test]
    fn jacobian_law_holds_on_smooth_runs() {
        let part = setup(256);
        let g0 = RealField::from_fn(part.grid(), |x| 0.4 * x.sin() + 0.2 * (2.0 * x).cos()).unwrap();
        let mut p = MochParams::new(1.0, 1e-3, 0.5).unwrap();
        p.record_every = 50;
        p.snapshot_every = Some(50);
        let traj = solve(&g0, &part, &p).unwrap();
        let flow = flow_map(
            &traj,
            1.0,
            &FlowOptions {
                record_every: 100,
                ..FlowOptions::default()
            },
        )
        .unwrap();
        assert!(
            flow.max_jacobian_rel_err < 1e-6,
            "law error {}",
            flow.max_jacobian_rel_err
        );
        assert!(flow.min_y_xi > 0.5 && flow.max_y_xi < 2.0);
    }

    #[test]
    fn snapshot_clock_agrees_with_solver_clock() {
        let part = setup(128);
        let g0 = smooth_field(part.grid());
        let mut p = MochParams::new(0.9, 1e-3, 0.2).unwrap();
        p.snapshot_every = Some(10);
        p.record_every = usize::MAX / 2;
        let traj = solve(&g0, &part, &p).unwrap();
        let exact = flow_map(&traj, 0.9, &FlowOptions::default()).unwrap();
        let coarse = flow_map(
            &traj,
            0.9,
            &FlowOptions {
                clock: FlowClock::Snapshots,
                ..FlowOptions::default()
            },
        )
        .unwrap();
        let ye = &exact.maps.last().unwrap().y;
        let yc = &coarse.maps.last().unwrap().y;
        let gap = ye
            .iter()
            .zip(yc)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        // Coarse clock h = 2e-2: O(h^4) against the solver-clock answer.
        assert!(gap < 1e-7, "clock gap {gap}");
    }

    #[test]
    fn flow_detects_lost_diffeomorphism() {
        // Synthetic trajectory whose velocity folds particles within one
        // coarse step: gamma = 4 sin x gives v of order 2, and a unit
        // flow step folds the map.
        let grid = Grid::new(64, TAU).unwrap();
        let g = RealField::from_fn(&grid, |x| 4.0 * x.sin()).unwrap();
        let params = MochParams {
            lambda: 1.0,
            dt: 0.5,
            t_final: 1.0,
            dealias_on: true,
            record_every: 1,
            snapshot_every: Some(1),
            blowup_ceiling: 1e6,
        };
        let traj = Trajectory {
            params,
            norm_series: Vec::new(),
            snapshot_times: vec![0.0, 0.5, 1.0],
            snapshots: vec![g.clone(), g.clone(), g],
            truncated: false,
            blowup: None,
        };
        match flow_map(
            &traj,
            1.0,
            &FlowOptions {
                clock: FlowClock::Snapshots,
                ..FlowOptions::default()
            },
        ) {
            Err(MochError::DiffeomorphismLost { t }) => assert!(t > 0.0),
            other => panic!("expected lost diffeomorphism, got {other:?}"),
        }
    }

    #[test]
    fn flow_rejects_bad_strides() {
        let part = setup(64);
        let mut p = MochParams::new(0.5, 1e-2, 0.1).unwrap();
        p.snapshot_every = Some(1);
        let traj = solve(&RealField::zeros(part.grid()), &part, &p).unwrap();
        for stride in [0usize, 3, 16] {
            let opts = FlowOptions {
                particle_stride: stride,
                ..FlowOptions::default()
            };
            assert!(flow_map(&traj, 0.5, &opts).is_err(), "stride {stride}");
        }
        let opts = FlowOptions {
            particle_stride: 4,
            ..FlowOptions::default()
        };
        assert!(flow_map(&traj, 0.5, &opts).is_ok());
    }
}
