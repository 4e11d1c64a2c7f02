//! Corner and octant domains, their reflection groups, and the direction
//! families and truncation radii derived from them.
//!
//! In 2D the domain `Q` is the open sector between the positive `x1` axis and
//! the ray at angle `β = π/N`. Its boundary is part of a Coxeter cross of `N`
//! lines, and the symmetry group is the dihedral group of order `2N`
//! generated by the rotation `Υ` by `2β` and the reflection `𝔯: (x1, x2) ↦ (x1, -x2)`.
//!
//! In 3D `Q` is the open first octant and the group is generated by the three
//! commuting coordinate reflections.

use std::f64::consts::{PI, TAU};

use crate::error::{Error, Result};

/// Directions closer than this (in radians) to a mirror are treated as lying on it.
pub const INTERIOR_TOLERANCE: f64 = 1e-9;

/// Directions whose norm is within this of 1 are silently renormalized.
pub const UNIT_TOLERANCE: f64 = 1e-9;

/// Measurement geometry: an angular sector of opening `π/N` or the first octant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Geometry {
    Sector { order: u32 },
    Octant,
}

impl Geometry {
    pub fn sector(order: u32) -> Result<Self> {
        if order < 2 {
            return Err(Error::input(format!(
                "sector order must be at least 2, got {order}"
            )));
        }
        Ok(Geometry::Sector { order })
    }

    pub fn octant() -> Self {
        Geometry::Octant
    }

    pub fn dim(&self) -> usize {
        match self {
            Geometry::Sector { .. } => 2,
            Geometry::Octant => 3,
        }
    }

    /// `N` for a sector, `None` for the octant.
    pub fn order(&self) -> Option<u32> {
        match *self {
            Geometry::Sector { order } => Some(order),
            Geometry::Octant => None,
        }
    }

    /// Opening angle `β = π/N` of a sector.
    pub fn opening_angle(&self) -> Option<f64> {
        self.order().map(|n| PI / n as f64)
    }

    /// Number of elements in the symmetry group (`2N` or 8).
    pub fn group_order(&self) -> usize {
        match *self {
            Geometry::Sector { order } => 2 * order as usize,
            Geometry::Octant => 8,
        }
    }

    /// All group elements, in the order used by [`direction_family`].
    pub fn group(&self) -> Vec<GroupElement> {
        match *self {
            Geometry::Sector { order } => {
                let n = order;
                let rot = (0..n).map(|k| GroupElement::Dihedral {
                    rotation: (n - k) % n,
                    reflect: false,
                });
                let refl = (0..n).map(|k| GroupElement::Dihedral {
                    rotation: (n - k) % n,
                    reflect: true,
                });
                rot.chain(refl).collect()
            }
            Geometry::Octant => (0..8u8).map(|flips| GroupElement::Octant { flips }).collect(),
        }
    }

    pub fn identity(&self) -> GroupElement {
        match self {
            Geometry::Sector { .. } => GroupElement::Dihedral {
                rotation: 0,
                reflect: false,
            },
            Geometry::Octant => GroupElement::Octant { flips: 0 },
        }
    }

    /// Applies `g` to the point `x`.
    pub fn apply_symmetry(&self, g: GroupElement, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x.len())?;
        self.check_element(g)?;
        let y = self.apply(g, lift(x));
        Ok(y[..self.dim()].to_vec())
    }

    /// Unchecked application on a padded point (`x[2] == 0` in 2D).
    #[inline]
    pub(crate) fn apply(&self, g: GroupElement, x: [f64; 3]) -> [f64; 3] {
        match (*self, g) {
            (Geometry::Sector { order }, GroupElement::Dihedral { rotation, reflect }) => {
                let angle = TAU * rotation as f64 / order as f64;
                let (s, c) = angle.sin_cos();
                let y1 = c * x[0] - s * x[1];
                let y2 = s * x[0] + c * x[1];
                if reflect {
                    [y1, -y2, 0.0]
                } else {
                    [y1, y2, 0.0]
                }
            }
            (Geometry::Octant, GroupElement::Octant { flips }) => {
                let mut y = x;
                for (i, yi) in y.iter_mut().enumerate() {
                    if flips & (1 << i) != 0 {
                        *yi = -*yi;
                    }
                }
                y
            }
            _ => unreachable!("group element does not belong to this geometry"),
        }
    }

    /// Composition `g2 ∘ g1` (apply `g1` first).
    pub fn compose(&self, g2: GroupElement, g1: GroupElement) -> Result<GroupElement> {
        self.check_element(g1)?;
        self.check_element(g2)?;
        Ok(match (*self, g2, g1) {
            (
                Geometry::Sector { order },
                GroupElement::Dihedral {
                    rotation: k2,
                    reflect: f2,
                },
                GroupElement::Dihedral {
                    rotation: k1,
                    reflect: f1,
                },
            ) => {
                // 𝔯^f2 Υ^k2 𝔯^f1 Υ^k1, using Υ^k 𝔯 = 𝔯 Υ^{-k}.
                let k2 = if f1 { (order - k2 % order) % order } else { k2 };
                GroupElement::Dihedral {
                    rotation: (k1 + k2) % order,
                    reflect: f1 ^ f2,
                }
            }
            (Geometry::Octant, GroupElement::Octant { flips: a }, GroupElement::Octant { flips: b }) => {
                GroupElement::Octant { flips: a ^ b }
            }
            _ => unreachable!(),
        })
    }

    /// True when `x` lies in the open domain `Q`.
    pub fn contains(&self, x: &[f64]) -> bool {
        match *self {
            Geometry::Sector { .. } => {
                let beta = self.opening_angle().unwrap();
                x[1] > 0.0 && (-beta.sin() * x[0] + beta.cos() * x[1]) < 0.0
            }
            Geometry::Octant => x.iter().all(|&v| v > 0.0),
        }
    }

    /// Distance from a point of `Q` to the boundary `∂Q` (0 outside `Q`).
    pub fn distance_to_boundary(&self, x: &[f64]) -> f64 {
        if !self.contains(x) {
            return 0.0;
        }
        match *self {
            Geometry::Sector { .. } => {
                let beta = self.opening_angle().unwrap();
                let d_axis = x[1];
                let d_ray = beta.sin() * x[0] - beta.cos() * x[1];
                // When the foot of the perpendicular misses a ray, the corner is nearest.
                let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
                let along_axis = if x[0] >= 0.0 { d_axis } else { r };
                let along_ray = if beta.cos() * x[0] + beta.sin() * x[1] >= 0.0 {
                    d_ray
                } else {
                    r
                };
                along_axis.min(along_ray)
            }
            Geometry::Octant => x.iter().cloned().fold(f64::INFINITY, f64::min),
        }
    }

    pub(crate) fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got,
            });
        }
        Ok(())
    }

    fn check_element(&self, g: GroupElement) -> Result<()> {
        match (*self, g) {
            (Geometry::Sector { order }, GroupElement::Dihedral { rotation, .. }) if rotation < order => Ok(()),
            (Geometry::Octant, GroupElement::Octant { flips }) if flips < 8 => Ok(()),
            _ => Err(Error::input(format!("{g:?} is not an element of the group of {self:?}"))),
        }
    }
}

/// An element of the symmetry group.
///
/// `Dihedral { rotation: k, reflect }` is the map `x ↦ 𝔯^reflect Υ^k x` where
/// `Υ` rotates counterclockwise by `2β`. `Octant { flips }` negates the
/// coordinates whose bits are set (bit `i` is `𝔯_{i+1}`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GroupElement {
    Dihedral { rotation: u32, reflect: bool },
    Octant { flips: u8 },
}

impl GroupElement {
    /// Parity sign: -1 for an odd number of reflections.
    pub fn sign(&self) -> f64 {
        let odd = match *self {
            GroupElement::Dihedral { reflect, .. } => reflect,
            GroupElement::Octant { flips } => flips.count_ones() % 2 == 1,
        };
        if odd {
            -1.0
        } else {
            1.0
        }
    }

    /// True for elements that are their own inverse.
    pub fn is_involution(&self, geom: &Geometry) -> bool {
        match (*self, *geom) {
            (GroupElement::Dihedral { rotation, reflect }, Geometry::Sector { order }) => {
                reflect || (2 * rotation) % order == 0
            }
            (GroupElement::Octant { .. }, Geometry::Octant) => true,
            _ => false,
        }
    }
}

/// One member `(σ_j, ω^(j))` of a signed direction family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignedDirection {
    pub sign: f64,
    /// Padded to three components; the third is 0 in 2D.
    pub direction: [f64; 3],
    pub element: GroupElement,
}

/// The reflected and rotated copies of a seed direction, with parity signs.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedDirectionFamily {
    pub dim: usize,
    pub seed: [f64; 3],
    pub members: Vec<SignedDirection>,
}

impl SignedDirectionFamily {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &SignedDirection> {
        self.members.iter()
    }
}

/// Checks that `omega` is a unit vector (renormalizing tiny drift) of the right dimension.
pub fn normalize_direction(omega: &[f64], geom: &Geometry) -> Result<[f64; 3]> {
    geom.check_dim(omega.len())?;
    let norm = omega.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !norm.is_finite() || (norm - 1.0).abs() > UNIT_TOLERANCE {
        return Err(Error::input(format!(
            "direction {omega:?} is not a unit vector (norm {norm})"
        )));
    }
    let mut out = lift(omega);
    out.iter_mut().for_each(|v| *v /= norm);
    Ok(out)
}

/// Canonical angle of a 2D direction, in `[0, 2π)`.
pub fn direction_angle(omega: &[f64]) -> f64 {
    let a = omega[1].atan2(omega[0]);
    if a < 0.0 {
        a + TAU
    } else {
        a
    }
}

/// Unit vector at angle `gamma`.
pub fn unit_from_angle(gamma: f64) -> [f64; 2] {
    let (s, c) = gamma.sin_cos();
    [c, s]
}

/// Unit vector with azimuth `theta` and polar angle `phi`.
pub fn unit_from_spherical(theta: f64, phi: f64) -> [f64; 3] {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    [sp * ct, sp * st, cp]
}

/// Returns a normalized copy of `omega`, or a domain error when it is not
/// strictly inside `Q`.
pub fn require_interior(omega: &[f64], geom: &Geometry) -> Result<[f64; 3]> {
    let w = normalize_direction(omega, geom)?;
    let inside = match geom {
        Geometry::Sector { .. } => {
            let beta = geom.opening_angle().unwrap();
            let gamma = w[1].atan2(w[0]);
            gamma > INTERIOR_TOLERANCE && gamma < beta - INTERIOR_TOLERANCE
        }
        Geometry::Octant => w.iter().all(|&v| v > INTERIOR_TOLERANCE.sin()),
    };
    if !inside {
        return Err(Error::domain(format!(
            "direction {omega:?} is not strictly inside the domain"
        )));
    }
    Ok(w)
}

/// Builds the signed family `{(σ_j, ω^(j))}` generated by the odd-extension
/// operator applied to a plane wave travelling along `omega`.
///
/// In 2D the members are `(+1, Υ^{-k} ω)` for `k = 0..N` followed by
/// `(-1, 𝔯 Υ^{-k} ω)`; in 3D they are `(±1, (∏_{i∈S} 𝔯_i) ω)` over all subsets `S`
/// in bitmask order, with the sign given by the parity of `|S|`.
pub fn direction_family(omega: &[f64], geom: &Geometry) -> Result<SignedDirectionFamily> {
    let seed = require_interior(omega, geom)?;
    Ok(family_unchecked(seed, geom))
}

pub(crate) fn family_unchecked(seed: [f64; 3], geom: &Geometry) -> SignedDirectionFamily {
    let members = geom
        .group()
        .into_iter()
        .map(|g| SignedDirection {
            sign: g.sign(),
            direction: geom.apply(g, seed),
            element: g,
        })
        .collect();
    SignedDirectionFamily {
        dim: geom.dim(),
        seed,
        members,
    }
}

/// Largest cosine between `omega` and a unit vector lying on `∂Q`.
///
/// 2D: `max(cos γ, cos(β - γ))`; 3D: `max_i sqrt(1 - ω_i²)`.
pub fn alpha_bound(omega: &[f64], geom: &Geometry) -> Result<f64> {
    let w = require_interior(omega, geom)?;
    Ok(alpha_unchecked(&w, geom))
}

pub(crate) fn alpha_unchecked(w: &[f64; 3], geom: &Geometry) -> f64 {
    match geom {
        Geometry::Sector { .. } => {
            let beta = geom.opening_angle().unwrap();
            let gamma = w[1].atan2(w[0]);
            gamma.cos().max((beta - gamma).cos())
        }
        Geometry::Octant => w
            .iter()
            .map(|&v| (1.0 - v * v).max(0.0).sqrt())
            .fold(0.0, f64::max),
    }
}

/// Radius beyond which boundary data no longer contribute to the projection
/// along `omega`: `(ε + 2 r0) / (1 - α(ω))`.
pub fn truncation_radius(omega: &[f64], eps: f64, r0: f64, geom: &Geometry) -> Result<f64> {
    if !(eps >= 0.0) || !(r0 > eps) {
        return Err(Error::input(format!(
            "truncation radius needs r0 > eps >= 0 (r0 = {r0}, eps = {eps})"
        )));
    }
    truncation_radius_for_alpha(alpha_bound(omega, geom)?, eps, r0)
}

/// `(ε + 2 r0) / (1 - α)` for a given bound `α`.
pub fn truncation_radius_for_alpha(alpha: f64, eps: f64, r0: f64) -> Result<f64> {
    if !(eps >= 0.0) || !(r0 > eps) {
        return Err(Error::input(format!(
            "truncation radius needs r0 > eps >= 0 (r0 = {r0}, eps = {eps})"
        )));
    }
    if !(alpha < 1.0) {
        return Err(Error::domain("direction is parallel to the boundary"));
    }
    Ok((eps + 2.0 * r0) / (1.0 - alpha))
}

/// Directions whose projections are exactly recoverable from data on `∂Q ∩ B(0, R)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibleSet {
    pub geometry: Geometry,
    pub radius: f64,
    pub r0: f64,
    /// `1 - 2 r0 / R`, the bound on `α(ω)`.
    pub threshold: f64,
    /// Set when `R <= 2 r0`: no direction is admissible.
    pub empty: bool,
}

/// Admissible directions for data truncated at radius `radius`.
pub fn admissible_set(radius: f64, r0: f64, geom: &Geometry) -> Result<AdmissibleSet> {
    if !(r0 > 0.0) || !radius.is_finite() && radius != f64::INFINITY {
        return Err(Error::input(format!(
            "admissible set needs r0 > 0 and a valid radius (R = {radius}, r0 = {r0})"
        )));
    }
    let threshold = 1.0 - 2.0 * r0 / radius;
    Ok(AdmissibleSet {
        geometry: *geom,
        radius,
        r0,
        threshold,
        empty: radius <= 2.0 * r0,
    })
}

impl AdmissibleSet {
    /// Half-width `γ0 = arccos(1 - 2 r0 / R)` of the excluded band around each
    /// cross line (2D only).
    pub fn gamma0(&self) -> Option<f64> {
        match self.geometry {
            Geometry::Sector { .. } if !self.empty => Some(self.threshold.acos()),
            _ => None,
        }
    }

    /// The angular intervals `[γ0 + kβ, (k+1)β - γ0]`, `k = 0..2N` (2D only).
    pub fn intervals(&self) -> Vec<(f64, f64)> {
        let (Some(beta), Some(g0)) = (self.geometry.opening_angle(), self.gamma0()) else {
            return Vec::new();
        };
        if 2.0 * g0 > beta {
            return Vec::new();
        }
        (0..self.geometry.group_order())
            .map(|k| (g0 + k as f64 * beta, (k + 1) as f64 * beta - g0))
            .collect()
    }

    /// Membership test for an arbitrary unit vector. Directions outside `Q` are
    /// folded back by the symmetry group first.
    pub fn contains(&self, omega: &[f64]) -> bool {
        if self.empty {
            return false;
        }
        match self.geometry {
            Geometry::Sector { .. } => {
                let beta = self.geometry.opening_angle().unwrap();
                let g0 = self.gamma0().unwrap();
                let gamma = direction_angle(omega).rem_euclid(beta);
                gamma >= g0 - 1e-12 && gamma <= beta - g0 + 1e-12
            }
            Geometry::Octant => {
                let folded = [omega[0].abs(), omega[1].abs(), omega[2].abs()];
                alpha_unchecked(&folded, &self.geometry) <= self.threshold + 1e-12
            }
        }
    }
}

#[inline]
pub(crate) fn lift(x: &[f64]) -> [f64; 3] {
    let mut out = [0.0; 3];
    out[..x.len().min(3)].copy_from_slice(&x[..x.len().min(3)]);
    out
}

#[inline]
pub(crate) fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub(crate) fn norm(a: &[f64; 3]) -> f64 {
    dot(a, a).sqrt()
}
