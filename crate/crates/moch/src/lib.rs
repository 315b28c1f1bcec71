//! Numerical laboratory for a modified Camassa-Holm equation on the torus:
//!
//! ```text
//! gamma_t + G1[m] gamma_x = gamma^2 / 2 + lambda G1[m] - gamma G1[m_x]
//! m = gamma_x + gamma^2 / (2 lambda),     G1 = (d_xx - 1)^{-1}
//! ```
//!
//! The crate provides the spectral plumbing (FFT grid, derivative and
//! Helmholtz multipliers, dealiasing), a smooth dyadic frequency partition
//! with Besov-type block norms, a family of explicit initial data whose
//! square is much rougher than the datum itself, an RK4 pseudospectral
//! solver with particle flow maps, and measurement harnesses that track
//! product and commutator estimates across ensembles and parameter sweeps.
//!
//! Everything is deterministic: random ensembles are seeded, sweeps
//! aggregate in sorted order, and report files are byte-stable.

pub mod error;
pub mod besov;
pub mod chart;
pub mod config;
pub mod dyadic;
pub mod dynamics;
pub mod estimates;
pub mod grid;
pub mod init;
pub mod io;

pub use error::{MochError, Result};
pub use besov::{besov_norm, norm_profile, weighted_sup_norm, BesovIndex, Exponent, NormProfile, WeightedSup};
pub use chart::{LineChart, Series};
pub use config::{
    corrector_from_str, load_config, parse_config, CommandPatch, EstimateSuite, FileConfig,
};
pub use dyadic::{BernsteinReport, BonyDecomposition, DyadicPartition};
pub use dynamics::{
    compute_m, derived_velocity, flow_map, m_form_residual, rhs, solve, step_rk4, step_with_dt,
    FlowClock, FlowMap, FlowOptions, FlowSeries, MFormResidual, MochParams, MochState, NormRow,
    RhsTerms, Trajectory,
};
pub use estimates::{
    commutator_check, inflation_experiment, inflation_run, lp_self_check, product_estimate_check,
    random_band_limited, run_ensemble, scaling_sweep, translate, CommutatorCheck,
    CommutatorProfile, EnsembleConfig, EnsembleSummary, EstimateId, EstimateReport,
    InflationPolicy, InflationReport, InflationSummary, LpCheckReport, MemberReports, ScalingRow,
    ScalingTable, SlopeBudget,
};
pub use grid::{Grid, RealField, SpectralField};
pub use init::{algebra_defect, auto_grid_size, build_gamma0, CorrectorMode, InflationDatum};
