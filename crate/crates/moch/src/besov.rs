//! Block-norm sequence spaces over the dyadic partition.
//!
//! The scale `B^s_{p,r}` norm is the `l^r` norm of the weighted block
//! norms `2^(js) ||Delta_j u||_(L^p)` over `j = -1 ..= j_max`, with the
//! low block weighted by `2^(-s)` literally. Finite-`p` block norms use
//! the plain grid average, so `||1||_p = 1` for every exponent and the
//! `p = inf` column is the pointwise sup.
//!
//! The refined `weighted_sup_norm` replaces the geometric weight with the
//! polynomial `(j + 2)^2`, which is 1 on the low block; it reports which
//! scale attains the sup, since experiments care where the mass sits.

use crate::dyadic::DyadicPartition;
use crate::error::{MochError, Result};
use crate::grid::RealField;
use serde::{Deserialize, Serialize};
use std::fmt;

/// A Lebesgue or sequence exponent in `[1, inf]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Exponent {
    Finite(f64),
    #[serde(rename = "inf")]
    Infinity,
}

impl Exponent {
    pub fn validate(self) -> Result<Self> {
        match self {
            Exponent::Finite(p) if p.is_finite() && p >= 1.0 => Ok(self),
            Exponent::Infinity => Ok(self),
            Exponent::Finite(p) => Err(MochError::invalid(format!(
                "exponent must be in [1, inf], got {p}"
            ))),
        }
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Exponent::Finite(p) => write!(f, "{p}"),
            Exponent::Infinity => write!(f, "inf"),
        }
    }
}

/// Index triple `(s, p, r)` of a block-norm space.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BesovIndex {
    pub s: f64,
    pub p: Exponent,
    pub r: Exponent,
}

impl BesovIndex {
    pub fn new(s: f64, p: Exponent, r: Exponent) -> Result<BesovIndex> {
        if !s.is_finite() {
            return Err(MochError::invalid(format!("regularity s must be finite, got {s}")));
        }
        Ok(BesovIndex {
            s,
            p: p.validate()?,
            r: r.validate()?,
        })
    }

    /// `B^0_{inf,1}`, the algebra-adjacent space the experiments live in.
    pub fn b0_inf_1() -> BesovIndex {
        BesovIndex {
            s: 0.0,
            p: Exponent::Infinity,
            r: Exponent::Finite(1.0),
        }
    }
}

/// Sup norm of every block together with its scale index; the raw
/// material for any of the weighted norms, and an exportable profile.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NormProfile {
    entries: Vec<(i32, f64)>,
}

impl NormProfile {
    pub fn entries(&self) -> &[(i32, f64)] {
        &self.entries
    }

    pub fn value_at(&self, j: i32) -> Option<f64> {
        self.entries.iter().find(|(jj, _)| *jj == j).map(|(_, v)| *v)
    }

    /// Partial sum of block norms for scales `j <= cut`.
    pub fn low_scale_sum(&self, cut: i32) -> f64 {
        self.entries
            .iter()
            .filter(|(j, _)| *j <= cut)
            .map(|(_, v)| v)
            .sum()
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().map(|(_, v)| v).sum()
    }

    /// The `(j + 2)^2`-weighted sup over this profile's blocks.
    pub fn weighted_sup(&self) -> WeightedSup {
        let mut best = WeightedSup {
            value: 0.0,
            argmax: None,
        };
        for &(j, bn) in &self.entries {
            let w = ((j + 2) as f64).powi(2) * bn;
            if w > best.value {
                best = WeightedSup {
                    value: w,
                    argmax: Some(j),
                };
            }
        }
        best
    }
}

/// Value of the `(j + 2)^2`-weighted sup together with the scale that
/// attains it; `argmax` is `None` only for the zero field.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct WeightedSup {
    pub value: f64,
    pub argmax: Option<i32>,
}

/// Per-block sup norms of `u`, low block first.
pub fn norm_profile(part: &DyadicPartition, u: &RealField) -> Result<NormProfile> {
    let norms = part.block_sup_norms(u)?;
    Ok(NormProfile {
        entries: norms
            .into_iter()
            .enumerate()
            .map(|(i, v)| (i as i32 - 1, v))
            .collect(),
    })
}

/// The `B^s_{p,r}` norm of `u` over this partition.
pub fn besov_norm(part: &DyadicPartition, u: &RealField, idx: BesovIndex) -> Result<f64> {
    let hat = u.to_spectral();
    let mut weighted = Vec::with_capacity(part.num_blocks());
    for j in -1..=part.j_max() {
        let block = part.block_spectral(&hat, j)?.to_physical();
        let bn = match idx.p {
            Exponent::Infinity => block.linf(),
            Exponent::Finite(p) => block.lp(p),
        };
        weighted.push((j as f64 * idx.s).exp2() * bn);
    }
    Ok(match idx.r {
        Exponent::Infinity => weighted.iter().fold(0.0, |m, v| m.max(*v)),
        Exponent::Finite(r) if r == 1.0 => weighted.iter().sum(),
        Exponent::Finite(r) => weighted
            .iter()
            .map(|v| v.powf(r))
            .sum::<f64>()
            .powf(1.0 / r),
    })
}

/// `sup_j (j + 2)^2 ||Delta_j u||_inf` with the attaining scale.
pub fn weighted_sup_norm(part: &DyadicPartition, u: &RealField) -> Result<WeightedSup> {
    Ok(norm_profile(part, u)?.weighted_sup())
}
