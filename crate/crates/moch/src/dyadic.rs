//! Smooth dyadic partition of frequency space and the block operators
//! built from it.
//!
//! The radial profile is a C-infinity bump `psi` supported in the open
//! annulus `(3/4, 8/3)`, equal to 1 on `[1, 2]`, glued from the classic
//! `exp(-1/t)` ramp. Normalizing `psi(2^-j r)` by its dyadic sum gives the
//! annulus multipliers `phi_j`; they form an exact partition of unity over
//! `j` in `Z` for every `r > 0`, overlap only between neighbouring scales,
//! and each takes values in `[0, 1]`.
//!
//! On a finite grid the family is truncated to `j = 0 ..= j_max`, where
//! `j_max` is the last scale whose annulus still intersects the represented
//! frequencies; everything below scale 0 is folded into the low block
//! `chi = 1 - sum_{j >= 0} phi_j` (index `-1`). Coverage over represented
//! frequencies is exact by construction, so a field always equals the sum
//! of its blocks to rounding accuracy.
//!
//! Multipliers are stored sparsely as contiguous positive-mode bands and
//! mirrored to negative modes, which keeps a partition on a million-point
//! grid at a few megabytes.

use crate::error::{MochError, Result};
use crate::grid::{Grid, RealField, SpectralField};
use rustfft::num_complex::Complex;
use std::sync::Arc;

/// `exp(-1/t)` for positive `t`, zero otherwise. Flat to all orders at 0.
fn theta(t: f64) -> f64 {
    if t > 0.0 {
        (-1.0 / t).exp()
    } else {
        0.0
    }
}

/// Smooth ramp: 0 for `t <= 0`, 1 for `t >= 1`, strictly increasing in
/// between, with `rho(1/2) = 1/2` by symmetry.
pub fn smooth_ramp(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let a = theta(t);
        a / (a + theta(1.0 - t))
    }
}

/// Radial plateau bump: supported in `(3/4, 8/3)`, identically 1 on
/// `[1, 2]`, values in `[0, 1]`.
pub fn bump_psi(r: f64) -> f64 {
    const LO: f64 = 0.75;
    const HI: f64 = 8.0 / 3.0;
    if r <= LO || r >= HI {
        0.0
    } else if r < 1.0 {
        smooth_ramp((r - LO) / (1.0 - LO))
    } else if r <= 2.0 {
        1.0
    } else {
        1.0 - smooth_ramp((r - 2.0) / (HI - 2.0))
    }
}

/// Normalized annulus profile of the homogeneous family at scale `j`,
/// `phi(2^-j r)`. For any `r > 0` these sum to exactly 1 over `j` in `Z`,
/// with at most two consecutive scales contributing.
pub fn phi_homogeneous(j: i32, r: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    let t = r * (-j as f64).exp2();
    let num = bump_psi(t);
    if num == 0.0 {
        return 0.0;
    }
    num / psi_dyadic_sum(r)
}

/// `sum_l psi(2^-l r)`, always in `[1, 2]` for `r > 0`. Only scales within
/// two octaves of `log2 r` can contribute, so the window scan is exact.
fn psi_dyadic_sum(r: f64) -> f64 {
    let center = r.log2().round() as i32;
    let mut sum = 0.0;
    for l in (center - 3)..=(center + 3) {
        sum += bump_psi(r * (-l as f64).exp2());
    }
    sum
}

/// Low-block multiplier `chi(r) = 1 - sum_{j >= 0} phi_j(r)`: equal to 1
/// for `r <= 3/4`, 0 for `r >= 4/3`.
pub fn chi_cutoff(r: f64) -> f64 {
    if r <= 0.75 {
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 0..=2 {
        sum += phi_homogeneous(j, r);
    }
    (1.0 - sum).max(0.0)
}

/// A radial multiplier stored on the contiguous band of positive mode
/// indices where it is nonzero; applied symmetrically to `+-k`.
#[derive(Clone, Debug)]
struct BandMultiplier {
    k_lo: usize,
    values: Vec<f64>,
}

impl BandMultiplier {
    fn value_at(&self, k: usize) -> f64 {
        if k < self.k_lo || k >= self.k_lo + self.values.len() {
            0.0
        } else {
            self.values[k - self.k_lo]
        }
    }

    /// `out_k = mult_k * in_k` over the full FFT layout, zero elsewhere.
    fn apply(&self, input: &[Complex<f64>], out: &mut [Complex<f64>]) {
        let n = input.len();
        out.fill(Complex::default());
        for (offset, &m) in self.values.iter().enumerate() {
            let k = self.k_lo + offset;
            if k > n / 2 {
                break;
            }
            out[k] = input[k] * m;
            if k != 0 && k != n / 2 {
                out[n - k] = input[n - k] * m;
            }
        }
    }
}

/// Report from a single derivative-vs-scale ratio measurement on an
/// annulus-supported field.
#[derive(Clone, Copy, Debug)]
pub struct BernsteinReport {
    /// `||d^k u||_inf / (2^(jk) ||u||_inf)`.
    pub ratio: f64,
    /// `(3/4)^k / 4`, the calibrated lower edge.
    pub lower: f64,
    /// `4 (8/3)^k`, the calibrated upper edge.
    pub upper: f64,
    pub within: bool,
}

/// The three pieces of a paraproduct splitting of `u * v`. Their sum
/// reproduces the pointwise product exactly.
#[derive(Clone, Debug)]
pub struct BonyDecomposition {
    /// Low frequencies of `u` carrying high frequencies of `v`.
    pub t_uv: RealField,
    /// Low frequencies of `v` carrying high frequencies of `u`.
    pub t_vu: RealField,
    /// Diagonal interactions of neighbouring blocks.
    pub remainder: RealField,
}

/// Dyadic partition bound to one grid. Heavy to build (scans the whole
/// spectrum once), cheap to apply; share it wherever the grid is shared.
pub struct DyadicPartition {
    grid: Arc<Grid>,
    j_max: i32,
    /// Annulus multipliers, index `j = 0 ..= j_max`.
    annuli: Vec<BandMultiplier>,
    /// Low block, carries mode 0.
    chi: BandMultiplier,
    /// Cumulative low-pass multipliers; entry `j` keeps blocks strictly
    /// below `j`, for `j = 0 ..= j_max + 1`.
    cumulative: Vec<BandMultiplier>,
}

impl DyadicPartition {
    pub fn new(grid: &Arc<Grid>) -> Result<DyadicPartition> {
        let nyq = grid.nyquist();
        if 1.5 > nyq {
            return Err(MochError::Resolution {
                what: "dyadic partition (needs scales -1, 0, 1)",
                needed: 1.5,
                actual: nyq,
            });
        }
        let mut j_max = 1;
        while 0.75 * ((j_max + 1) as f64).exp2() <= nyq {
            j_max += 1;
        }

        let half = grid.num_points() / 2;
        let xi = |k: usize| grid.wavenumbers()[k].abs();

        let mut annuli = Vec::with_capacity(j_max as usize + 1);
        for j in 0..=j_max {
            let scale = (j as f64).exp2();
            let mut k_lo = half + 1;
            let mut values = Vec::new();
            for k in 0..=half {
                let v = phi_homogeneous(j, xi(k));
                if v > 0.0 {
                    if values.is_empty() {
                        k_lo = k;
                    }
                    values.push(v);
                } else if !values.is_empty() {
                    break;
                }
                // Support ends at 8/3 * 2^j; past that nothing contributes.
                if xi(k) > 2.7 * scale {
                    break;
                }
            }
            annuli.push(BandMultiplier { k_lo, values });
        }

        let mut chi_values = Vec::new();
        for k in 0..=half {
            let v = chi_cutoff(xi(k));
            if v == 0.0 && xi(k) > 4.0 / 3.0 {
                break;
            }
            chi_values.push(v);
        }
        let chi = BandMultiplier {
            k_lo: 0,
            values: chi_values,
        };

        let mut cumulative = Vec::with_capacity(j_max as usize + 2);
        for j in 0..=(j_max + 1) {
            let scale = (j as f64).exp2();
            let top = 4.0 / 3.0 * scale;
            let mut values = Vec::new();
            for k in 0..=half {
                let r = xi(k);
                if r >= top {
                    break;
                }
                let v = if r <= 0.75 * scale {
                    1.0
                } else {
                    // Inside (3/4, 4/3) * 2^j only scale j itself still
                    // transitions; everything above belongs to scale j + 1.
                    (1.0 - phi_homogeneous(j, r)).max(0.0)
                };
                values.push(v);
            }
            cumulative.push(BandMultiplier { k_lo: 0, values });
        }

        Ok(DyadicPartition {
            grid: Arc::clone(grid),
            j_max,
            annuli,
            chi,
            cumulative,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// Largest annulus scale hosted by the grid.
    pub fn j_max(&self) -> i32 {
        self.j_max
    }

    /// Number of blocks including the low block.
    pub fn num_blocks(&self) -> usize {
        self.j_max as usize + 2
    }

    /// Multiplier value of block `j` at wavenumber magnitude implied by
    /// positive mode index `k`.
    pub fn multiplier_value(&self, j: i32, k: usize) -> f64 {
        match j {
            -1 => self.chi.value_at(k),
            j if j >= 0 && j <= self.j_max => self.annuli[j as usize].value_at(k),
            _ => 0.0,
        }
    }

    fn band(&self, j: i32) -> Result<&BandMultiplier> {
        match j {
            -1 => Ok(&self.chi),
            j if j >= 0 && j <= self.j_max => Ok(&self.annuli[j as usize]),
            _ => Err(MochError::invalid(format!(
                "block index {j} outside -1 ..= {}",
                self.j_max
            ))),
        }
    }

    /// Frequency block `Delta_j u` in spectral form, `j` in `-1 ..= j_max`.
    pub fn block_spectral(&self, u: &SpectralField, j: i32) -> Result<SpectralField> {
        if !self.grid.same_grid(u.grid()) {
            return Err(MochError::GridMismatch(
                self.grid.num_points(),
                u.grid().num_points(),
            ));
        }
        let band = self.band(j)?;
        let mut out = SpectralField::zeros(&self.grid);
        band.apply(u.coeffs(), out.coeffs_mut());
        Ok(out)
    }

    /// Frequency block of a physical field, returned in physical form.
    pub fn block(&self, u: &RealField, j: i32) -> Result<RealField> {
        Ok(self.block_spectral(&u.to_spectral(), j)?.to_physical())
    }

    /// Low-pass `S_j u`: sum of all blocks strictly below `j`. Valid for
    /// `j` in `0 ..= j_max + 1`; the top index reproduces `u` exactly.
    pub fn lowpass_spectral(&self, u: &SpectralField, j: i32) -> Result<SpectralField> {
        if !self.grid.same_grid(u.grid()) {
            return Err(MochError::GridMismatch(
                self.grid.num_points(),
                u.grid().num_points(),
            ));
        }
        if j < 0 || j > self.j_max + 1 {
            return Err(MochError::invalid(format!(
                "lowpass index {j} outside 0 ..= {}",
                self.j_max + 1
            )));
        }
        let mut out = SpectralField::zeros(&self.grid);
        self.cumulative[j as usize].apply(u.coeffs(), out.coeffs_mut());
        Ok(out)
    }

    pub fn lowpass(&self, u: &RealField, j: i32) -> Result<RealField> {
        Ok(self.lowpass_spectral(&u.to_spectral(), j)?.to_physical())
    }

    /// Sup norm of every block, low block first. One forward transform and
    /// one inverse transform per block; blocks are not retained.
    pub fn block_sup_norms(&self, u: &RealField) -> Result<Vec<f64>> {
        let hat = u.to_spectral();
        let mut norms = Vec::with_capacity(self.num_blocks());
        for j in -1..=self.j_max {
            norms.push(self.block_spectral(&hat, j)?.to_physical().linf());
        }
        Ok(norms)
    }

    /// All blocks of `u` in physical space, low block first.
    pub fn all_blocks(&self, u: &RealField) -> Result<Vec<RealField>> {
        let hat = u.to_spectral();
        (-1..=self.j_max)
            .map(|j| Ok(self.block_spectral(&hat, j)?.to_physical()))
            .collect()
    }

    /// Paraproduct splitting of `u * v`. The three parts sum to the plain
    /// pointwise product with no dealiasing applied.
    pub fn bony(&self, u: &RealField, v: &RealField) -> Result<BonyDecomposition> {
        let blocks_u = self.all_blocks(u)?;
        let blocks_v = self.all_blocks(v)?;
        let n = self.grid.num_points();
        let idx = |j: i32| (j + 1) as usize;

        let mut t_uv = vec![0.0; n];
        let mut t_vu = vec![0.0; n];
        let mut remainder = vec![0.0; n];

        // Running S_{j-1}: starts at the low block when j = 1.
        let mut run_u = blocks_u[0].samples().to_vec();
        let mut run_v = blocks_v[0].samples().to_vec();
        for j in 1..=self.j_max {
            let dv = blocks_v[idx(j)].samples();
            let du = blocks_u[idx(j)].samples();
            for i in 0..n {
                t_uv[i] += run_u[i] * dv[i];
                t_vu[i] += run_v[i] * du[i];
            }
            let au = blocks_u[idx(j - 1)].samples();
            let av = blocks_v[idx(j - 1)].samples();
            for i in 0..n {
                run_u[i] += au[i];
                run_v[i] += av[i];
            }
        }

        for j in -1..=self.j_max {
            let du = blocks_u[idx(j)].samples();
            for jp in (j - 1).max(-1)..=(j + 1).min(self.j_max) {
                let dv = blocks_v[idx(jp)].samples();
                for i in 0..n {
                    remainder[i] += du[i] * dv[i];
                }
            }
        }

        Ok(BonyDecomposition {
            t_uv: RealField::from_samples(&self.grid, t_uv)?,
            t_vu: RealField::from_samples(&self.grid, t_vu)?,
            remainder: RealField::from_samples(&self.grid, remainder)?,
        })
    }

    /// Measure `||d_x^k u||_inf / (2^(jk) ||u||_inf)` for a field supported
    /// in annulus `j`. Rejects fields with spectral mass outside the
    /// annulus above `1e-10` of the peak, and zero fields.
    pub fn bernstein_check(&self, u: &RealField, j: i32, k: u32) -> Result<BernsteinReport> {
        if j < 0 || j > self.j_max {
            return Err(MochError::invalid(format!(
                "annulus index {j} outside 0 ..= {}",
                self.j_max
            )));
        }
        let sup = u.linf();
        if sup == 0.0 {
            return Err(MochError::invalid("zero field in bernstein_check"));
        }
        let hat = u.to_spectral();
        let scale = (j as f64).exp2();
        let (lo, hi) = (0.75 * scale, 8.0 / 3.0 * scale);
        let peak = hat.coeffs().iter().fold(0.0f64, |m, c| m.max(c.norm()));
        for (c, &xi) in hat.coeffs().iter().zip(self.grid.wavenumbers()) {
            let r = xi.abs();
            if (r < lo || r > hi) && c.norm() > 1e-10 * peak {
                return Err(MochError::invalid(format!(
                    "field is not supported in annulus {j}: mass {:.3e} at wavenumber {r:.3}",
                    c.norm()
                )));
            }
        }
        let mut d = hat;
        for _ in 0..k {
            d = d.derivative();
        }
        let ratio = d.to_physical().linf() / (scale.powi(k as i32) * sup);
        let lower = 0.75f64.powi(k as i32) / 4.0;
        let upper = 4.0 * (8.0f64 / 3.0).powi(k as i32);
        Ok(BernsteinReport {
            ratio,
            lower,
            upper,
            within: ratio >= lower && ratio <= upper,
        })
    }
}
