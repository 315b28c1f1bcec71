//! The explicit initial-data family behind the inflation experiments.
//!
//! The datum couples a high-frequency carrier at wavenumber `2^(scale+5)`
//! to a low-pass filtered step profile:
//!
//! ```text
//! gamma0 = [ cos(2^(scale+5) x) (1 + scale^(-1/10) S_scale h) + R ] * scale^(-1/10)
//! ```
//!
//! where `h` is the periodized half-interval indicator, `S_scale` the
//! dyadic low-pass at that scale, and `R` a corrector obtained by applying
//! an inverse Helmholtz-type multiplier to the modulated carrier. The point
//! of the construction: `gamma0` is small in the sum-over-blocks sup norm
//! (like `scale^(-1/10)`), while its square inherits the step's full block
//! ladder at low frequency, one block per scale below the cut, each of a
//! fixed sup size. That ladder is what the quadratic source term in the
//! dynamics feeds on, and it is why no bound `||u^2|| <= C ||u||^2` can
//! hold in this norm.
//!
//! Two corrector readings are supported. The default `Regular` multiplier
//! is `-1/(1 + xi^2)`, the inverse of `d_xx - 1` that also drives the
//! dynamics. The `Literal` variant uses `1/(1 - xi^2)`, singular at
//! `|xi| = 1`; the carrier spectrum lives far from `+-1`, so that line is
//! excluded from the multiplier and the two variants agree to `O(xi^-4)`
//! on the carrier band.

use crate::besov::{besov_norm, weighted_sup_norm, BesovIndex};
use crate::dyadic::DyadicPartition;
use crate::error::{MochError, Result};
use crate::grid::RealField;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Which reading of the corrector multiplier to use.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrectorMode {
    #[default]
    Regular,
    Literal,
}

/// Scales attached to a datum at build time.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DatumNorms {
    /// `||gamma0||` in `B^0_{inf,1}`.
    pub b0_inf_1: f64,
    /// `(j+2)^2`-weighted sup norm of `gamma0`.
    pub weighted: f64,
    /// `||gamma0^2||` in `B^0_{inf,1}`.
    pub square_b0_inf_1: f64,
    /// `square_b0_inf_1 / b0_inf_1^2`: how far the datum is from behaving
    /// like an algebra element.
    pub ratio: f64,
}

/// A built datum together with its three ingredients and measured scales.
#[derive(Clone, Debug)]
pub struct InflationDatum {
    pub scale: i32,
    pub corrector_mode: CorrectorMode,
    pub gamma0: RealField,
    /// Pure carrier `cos(2^(scale+5) x)`.
    pub carrier: RealField,
    /// `1 + scale^(-1/10) S_scale h`.
    pub modulation: RealField,
    /// The corrector applied to `carrier * modulation`, before the outer
    /// amplitude.
    pub corrector: RealField,
    pub norms: DatumNorms,
    /// The asymptotic statements target scales above 10; smaller sweeps
    /// set this flag instead of pretending otherwise.
    pub below_asymptotic_range: bool,
}

/// Indicator of `[0, L/2)` sampled on the nodes: exactly 1 from the node
/// at 0 upward, 0 on the negative half.
pub fn periodized_heaviside(grid: &Arc<crate::grid::Grid>) -> RealField {
    let samples = (0..grid.num_points())
        .map(|i| if grid.node(i) >= 0.0 { 1.0 } else { 0.0 })
        .collect();
    RealField::from_samples(grid, samples).expect("indicator samples are finite")
}

/// Dyadic low-pass of the periodized step at the given scale. Smooth,
/// mean 1/2, converges to the step in the grid-average L2 norm.
pub fn smoothed_step(part: &DyadicPartition, scale: i32) -> Result<RealField> {
    if scale < 0 {
        return Err(MochError::invalid(format!(
            "step scale must be nonnegative, got {scale}"
        )));
    }
    let nyq = part.grid().nyquist();
    let needed = (scale as f64).exp2();
    if needed >= nyq {
        return Err(MochError::Resolution {
            what: "smoothed step",
            needed,
            actual: nyq,
        });
    }
    part.lowpass(&periodized_heaviside(part.grid()), scale)
}

/// Smallest power-of-two grid size whose Nyquist frequency leaves a factor
/// of four of headroom above the carrier, enough for alias-free squares
/// with the modulation sidebands included.
pub fn auto_grid_size(scale: i32) -> usize {
    1usize << (scale + 8).max(3)
}

/// Outer and inner amplitude `scale^(-1/10)`.
fn amplitude(scale: i32) -> f64 {
    (scale as f64).powf(-0.1)
}

/// Build the datum at the given scale. Requires the grid to resolve the
/// whole dyadic neighbourhood of the carrier, `nyquist > (8/3) 2^(scale+5)`.
pub fn build_gamma0(
    part: &DyadicPartition,
    scale: i32,
    mode: CorrectorMode,
) -> Result<InflationDatum> {
    if scale <= 0 {
        return Err(MochError::invalid(format!(
            "datum scale must be positive, got {scale}"
        )));
    }
    let grid = part.grid();
    let carrier_freq = ((scale + 5) as f64).exp2();
    let needed = 8.0 / 3.0 * carrier_freq;
    if grid.nyquist() <= needed {
        return Err(MochError::Resolution {
            what: "inflation datum carrier neighbourhood",
            needed,
            actual: grid.nyquist(),
        });
    }

    let amp = amplitude(scale);
    let step = smoothed_step(part, scale)?;
    let carrier = RealField::from_fn(grid, |x| (carrier_freq * x).cos())?;
    let modulation = step.scale(amp)?.add(&RealField::constant(grid, 1.0)?)?;
    let modulated = carrier.pointwise_mul(&modulation)?;

    let hat = modulated.to_spectral();
    let corrector = match mode {
        CorrectorMode::Regular => hat.helmholtz_inverse(),
        CorrectorMode::Literal => hat.apply_multiplier(|xi| {
            let d = 1.0 - xi * xi;
            // The carrier band sits far above |xi| = 1; the two modes at
            // the singular line carry no mass and are excluded outright.
            if d == 0.0 {
                0.0
            } else {
                1.0 / d
            }
        }),
    }
    .to_physical();

    let gamma0 = modulated.add(&corrector)?.scale(amp)?;

    let b0_inf_1 = besov_norm(part, &gamma0, BesovIndex::b0_inf_1())?;
    let weighted = weighted_sup_norm(part, &gamma0)?.value;
    let square = gamma0.pointwise_mul(&gamma0)?;
    let square_b0_inf_1 = besov_norm(part, &square, BesovIndex::b0_inf_1())?;

    Ok(InflationDatum {
        scale,
        corrector_mode: mode,
        gamma0,
        carrier,
        modulation,
        corrector,
        norms: DatumNorms {
            b0_inf_1,
            weighted,
            square_b0_inf_1,
            ratio: square_b0_inf_1 / (b0_inf_1 * b0_inf_1),
        },
        below_asymptotic_range: scale <= 10,
    })
}

/// How far a field is from satisfying the algebra bound
/// `||u^2|| <= ||u||^2` in `B^0_{inf,1}`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AlgebraDefect {
    pub norm: f64,
    pub square_norm: f64,
    /// `square_norm / norm^2`; large values witness the algebra failure.
    pub ratio: f64,
}

/// Measure the algebra defect of `u`. The square is formed pointwise, so
/// the spectrum of `u` (above rounding level) must fit twice inside the
/// Nyquist range; otherwise the square would alias and the measurement
/// would be meaningless.
pub fn algebra_defect(part: &DyadicPartition, u: &RealField) -> Result<AlgebraDefect> {
    let hat = u.to_spectral();
    let peak = hat.coeffs().iter().fold(0.0f64, |m, c| m.max(c.norm()));
    let mut top = 0.0f64;
    for (c, &xi) in hat.coeffs().iter().zip(u.grid().wavenumbers()) {
        if c.norm() > 1e-12 * peak {
            top = top.max(xi.abs());
        }
    }
    let nyq = u.grid().nyquist();
    if 2.0 * top > nyq {
        return Err(MochError::Resolution {
            what: "alias-free square",
            needed: 2.0 * top,
            actual: nyq,
        });
    }
    let norm = besov_norm(part, u, BesovIndex::b0_inf_1())?;
    if norm == 0.0 {
        return Err(MochError::invalid("algebra defect of the zero field"));
    }
    let square_norm = besov_norm(part, &u.pointwise_mul(u)?, BesovIndex::b0_inf_1())?;
    Ok(AlgebraDefect {
        norm,
        square_norm,
        ratio: square_norm / (norm * norm),
    })
}
