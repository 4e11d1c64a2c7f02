//! Radon projections of the odd extension `f_O` recovered from boundary data,
//! their extension to the full circle or sphere by symmetry, and reference
//! Radon transforms to compare against.
//!
//! For `ω` strictly inside `Q` and `t <= 0`,
//!
//! ```text
//! (R f_O)(t, ω) = ∫_{∂Q} Σ_j σ_j (n(y)·ω^(j)) p(y·ω^(j) - t, y) dy,
//! ```
//!
//! where `(σ_j, ω^(j))` is the signed direction family of `ω`.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::forward::BoundarySignal;
use crate::geometry::{
    admissible_set, dot, family_unchecked, lift, require_interior, unit_from_spherical, Geometry,
    SignedDirectionFamily,
};
use crate::numfmt::g17;
use crate::phantom::Phantom;
use crate::quadrature::GaussLegendre;
use crate::symmetrize::Field;

/// Angles closer than this are treated as the same grid direction.
const ANGLE_TOLERANCE: f64 = 1e-9;

/// Provenance of a sinogram cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellMask {
    /// Evaluated directly by the reconstruction formula (or an oracle).
    Computed,
    /// Filled from a computed cell by a symmetry relation.
    Extended,
    /// Exactly zero: the direction is parallel to a mirror.
    Zero,
    /// Not trustworthy or not available.
    Unknown,
}

impl CellMask {
    pub fn as_str(&self) -> &'static str {
        match self {
            CellMask::Computed => "computed",
            CellMask::Extended => "extended",
            CellMask::Zero => "zero",
            CellMask::Unknown => "unknown",
        }
    }

    pub fn is_known(&self) -> bool {
        !matches!(self, CellMask::Unknown)
    }
}

impl fmt::Display for CellMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CellMask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "computed" => Ok(CellMask::Computed),
            "extended" => Ok(CellMask::Extended),
            "zero" => Ok(CellMask::Zero),
            "unknown" => Ok(CellMask::Unknown),
            other => Err(Error::input(format!("unknown mask label {other:?}"))),
        }
    }
}

/// Direction grid of a sinogram.
///
/// In 3D the grid is the product of azimuths `θ` and polar angles `φ`, with
/// `ω = (sin φ cos θ, sin φ sin θ, cos φ)`; direction `i` has
/// `θ = thetas[i % n_θ]` and `φ = phis[i / n_θ]`.
#[derive(Debug, Clone, PartialEq)]
pub enum Directions {
    Circle(Vec<f64>),
    Sphere { thetas: Vec<f64>, phis: Vec<f64> },
}

impl Directions {
    /// `n + 1` angles `iβ/n`, `i = 0..=n`, spanning the closed fundamental sector.
    pub fn sector_fan(geom: &Geometry, n: usize) -> Result<Self> {
        let beta = geom
            .opening_angle()
            .ok_or_else(|| Error::input("sector fan needs a 2D geometry"))?;
        if n == 0 {
            return Err(Error::input("sector fan needs at least one step"));
        }
        Ok(Directions::Circle((0..=n).map(|i| i as f64 * beta / n as f64).collect()))
    }

    /// Azimuths `i·(π/2)/n_θ`, `i = 0..=n_θ`, crossed with the given polar angles.
    pub fn octant_patch(n_theta: usize, phis: Vec<f64>) -> Result<Self> {
        if n_theta == 0 || phis.is_empty() {
            return Err(Error::input("octant patch needs azimuth steps and polar angles"));
        }
        let thetas = (0..=n_theta).map(|i| i as f64 * FRAC_PI_2 / n_theta as f64).collect();
        Ok(Directions::Sphere { thetas, phis })
    }

    pub fn dim(&self) -> usize {
        match self {
            Directions::Circle(_) => 2,
            Directions::Sphere { .. } => 3,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Directions::Circle(a) => a.len(),
            Directions::Sphere { thetas, phis } => thetas.len() * phis.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(angle1, angle2)`: `(γ, None)` in 2D, `(θ, Some(φ))` in 3D.
    pub fn angles(&self, i: usize) -> (f64, Option<f64>) {
        match self {
            Directions::Circle(a) => (a[i], None),
            Directions::Sphere { thetas, phis } => (thetas[i % thetas.len()], Some(phis[i / thetas.len()])),
        }
    }

    /// Unit vector of direction `i`, padded to three components.
    pub fn vector(&self, i: usize) -> [f64; 3] {
        match self.angles(i) {
            (g, None) => {
                let (s, c) = g.sin_cos();
                [c, s, 0.0]
            }
            (theta, Some(phi)) => unit_from_spherical(theta, phi),
        }
    }
}

/// Sampled Radon data over a direction grid and an increasing offset grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    directions: Directions,
    offsets: Vec<f64>,
    values: Vec<f64>,
    mask: Vec<CellMask>,
}

impl Sinogram {
    /// An all-unknown sinogram on the given grid.
    pub fn new(directions: Directions, offsets: Vec<f64>) -> Result<Self> {
        if offsets.windows(2).any(|w| !(w[1] > w[0])) || offsets.iter().any(|t| !t.is_finite()) {
            return Err(Error::input("sinogram offsets must be finite and strictly increasing"));
        }
        let n = directions.len() * offsets.len();
        Ok(Sinogram {
            directions,
            offsets,
            values: vec![f64::NAN; n],
            mask: vec![CellMask::Unknown; n],
        })
    }

    pub fn dim(&self) -> usize {
        self.directions.dim()
    }

    pub fn directions(&self) -> &Directions {
        &self.directions
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mask(&self) -> &[CellMask] {
        &self.mask
    }

    pub fn n_directions(&self) -> usize {
        self.directions.len()
    }

    pub fn n_offsets(&self) -> usize {
        self.offsets.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn index(&self, dir: usize, off: usize) -> usize {
        dir * self.offsets.len() + off
    }

    pub fn get(&self, dir: usize, off: usize) -> f64 {
        self.values[self.index(dir, off)]
    }

    pub fn mask_at(&self, dir: usize, off: usize) -> CellMask {
        self.mask[self.index(dir, off)]
    }

    pub fn set(&mut self, dir: usize, off: usize, value: f64, mask: CellMask) {
        let i = self.index(dir, off);
        self.values[i] = value;
        self.mask[i] = mask;
    }

    /// Values along the offset axis for one direction.
    pub fn profile(&self, dir: usize) -> &[f64] {
        let n = self.offsets.len();
        &self.values[dir * n..(dir + 1) * n]
    }

    pub fn mask_profile(&self, dir: usize) -> &[CellMask] {
        let n = self.offsets.len();
        &self.mask[dir * n..(dir + 1) * n]
    }

    /// True when both sinograms share direction and offset grids.
    pub fn same_grid(&self, other: &Sinogram) -> bool {
        self.directions == other.directions && self.offsets == other.offsets
    }

    /// Number of cells with an `Unknown` mask.
    pub fn unknown_count(&self) -> usize {
        self.mask.iter().filter(|m| **m == CellMask::Unknown).count()
    }

    /// Writes `dim,angle1_rad[,angle2_rad],t,value,mask`, one row per cell.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        self.write_csv_to(&mut out).map_err(|e| Error::io(path, e))?;
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_csv_to(&self, out: &mut impl Write) -> std::io::Result<()> {
        let dim = self.dim();
        if dim == 2 {
            writeln!(out, "dim,angle1_rad,t,value,mask")?;
        } else {
            writeln!(out, "dim,angle1_rad,angle2_rad,t,value,mask")?;
        }
        for d in 0..self.n_directions() {
            let (a1, a2) = self.directions.angles(d);
            let prefix = match a2 {
                None => format!("{dim},{}", g17(a1)),
                Some(a2) => format!("{dim},{},{}", g17(a1), g17(a2)),
            };
            for (m, t) in self.offsets.iter().enumerate() {
                let i = self.index(d, m);
                writeln!(out, "{prefix},{},{},{}", g17(*t), g17(self.values[i]), self.mask[i])?;
            }
        }
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv_from(BufReader::new(file), &path.display().to_string())
    }

    pub fn read_csv_from(reader: impl BufRead, source: &str) -> Result<Self> {
        let mut rows = Vec::new();
        let mut dim = 0;
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::parse(source, i + 1, e.to_string()))?;
            if i == 0 {
                dim = match line.trim() {
                    "dim,angle1_rad,t,value,mask" => 2,
                    "dim,angle1_rad,angle2_rad,t,value,mask" => 3,
                    _ => return Err(Error::parse(source, 1, "unrecognized sinogram header")),
                };
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != dim + 3 {
                return Err(Error::parse(source, i + 1, format!("expected {} fields", dim + 3)));
            }
            let num = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::parse(source, i + 1, e.to_string()));
            if f[0].trim() != dim.to_string() {
                return Err(Error::parse(source, i + 1, "dimension column disagrees with header"));
            }
            let a1 = num(f[1])?;
            let a2 = if dim == 3 { Some(num(f[2])?) } else { None };
            let t = num(f[dim])?;
            let v = num(f[dim + 1])?;
            let mask: CellMask = f[dim + 2]
                .trim()
                .parse()
                .map_err(|e: Error| Error::parse(source, i + 1, e.to_string()))?;
            rows.push((a1, a2, t, v, mask, i + 1));
        }
        if dim == 0 {
            return Err(Error::parse(source, 0, "empty sinogram file"));
        }
        let mut offsets: Vec<f64> = Vec::new();
        let mut a1s: Vec<f64> = Vec::new();
        let mut a2s: Vec<f64> = Vec::new();
        let push_unique = |v: &mut Vec<f64>, x: f64| {
            if !v.iter().any(|y| *y == x) {
                v.push(x);
            }
        };
        for r in &rows {
            push_unique(&mut offsets, r.2);
            push_unique(&mut a1s, r.0);
            if let Some(a2) = r.1 {
                push_unique(&mut a2s, a2);
            }
        }
        let directions = if dim == 2 {
            Directions::Circle(a1s.clone())
        } else {
            Directions::Sphere {
                thetas: a1s.clone(),
                phis: a2s.clone(),
            }
        };
        let mut s = Sinogram::new(directions, offsets.clone()).map_err(|e| Error::parse(source, 2, e.to_string()))?;
        if rows.len() != s.len() {
            return Err(Error::parse(
                source,
                rows.len() + 1,
                format!("{} rows do not fill a {}x{} grid", rows.len(), s.n_directions(), s.n_offsets()),
            ));
        }
        let mut seen = vec![false; s.len()];
        for (a1, a2, t, v, mask, line) in rows {
            let i1 = a1s.iter().position(|x| *x == a1).unwrap();
            let d = match a2 {
                None => i1,
                Some(a2) => a2s.iter().position(|x| *x == a2).unwrap() * a1s.len() + i1,
            };
            let m = offsets.iter().position(|x| *x == t).unwrap();
            let idx = s.index(d, m);
            if seen[idx] {
                return Err(Error::parse(source, line, "duplicate sinogram cell"));
            }
            seen[idx] = true;
            s.values[idx] = v;
            s.mask[idx] = mask;
        }
        Ok(s)
    }
}

/// Offsets `m·dt` for `m = -M..=0` with `M = round(r0/dt)`.
pub fn nonpositive_offsets(r0: f64, dt: f64) -> Result<Vec<f64>> {
    if !(r0 > 0.0 && dt > 0.0) {
        return Err(Error::input(format!("offset grid needs r0 > 0 and dt > 0 (got {r0}, {dt})")));
    }
    let m = (r0 / dt).round() as i64;
    Ok((-m..=0).map(|k| k as f64 * dt).collect())
}

/// Offsets `m·dt` for `m = -M..=M`.
pub fn symmetric_offsets(r0: f64, dt: f64) -> Result<Vec<f64>> {
    let neg = nonpositive_offsets(r0, dt)?;
    let pos = neg.iter().rev().skip(1).map(|t| -t);
    Ok(neg.iter().copied().chain(pos).collect())
}

/// Smooth delta-approximating kernel `η_ε(t) = η(t/ε)/ε` with
/// `η(t) = C exp(-1/(1 - t²))` on `(-1, 1)`, `∫η = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mollifier {
    eps: f64,
    /// `(s_q, w_q)` with `Σ w_q = 1`, for `p̃(τ) = Σ_q w_q p(τ - s_q)`.
    nodes: Vec<(f64, f64)>,
}

const MOLLIFIER_POINTS: usize = 32;

fn eta_unnormalized(t: f64) -> f64 {
    if t.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - t * t)).exp()
    }
}

fn eta_constant() -> f64 {
    static C: OnceLock<f64> = OnceLock::new();
    *C.get_or_init(|| {
        // Composite Gauss-Legendre; the integrand is flat to all orders at ±1.
        let gl = GaussLegendre::new(40);
        let pieces = 16;
        let integral: f64 = (0..pieces)
            .map(|k| {
                let a = -1.0 + 2.0 * k as f64 / pieces as f64;
                gl.integrate(a, a + 2.0 / pieces as f64, eta_unnormalized)
            })
            .sum();
        1.0 / integral
    })
}

impl Mollifier {
    /// `ε = 0`: plain cubic interpolation of the samples.
    pub fn none() -> Self {
        Mollifier {
            eps: 0.0,
            nodes: Vec::new(),
        }
    }

    pub fn new(eps: f64) -> Result<Self> {
        if !(eps >= 0.0) || !eps.is_finite() {
            return Err(Error::input(format!("mollifier width must be >= 0, got {eps}")));
        }
        if eps == 0.0 {
            return Ok(Self::none());
        }
        let gl = GaussLegendre::new(MOLLIFIER_POINTS);
        let mut nodes: Vec<(f64, f64)> = gl
            .mapped(-eps, eps)
            .map(|(s, w)| (s, w * eta_unnormalized(s / eps)))
            .collect();
        let total: f64 = nodes.iter().map(|n| n.1).sum();
        nodes.iter_mut().for_each(|n| n.1 /= total);
        Ok(Mollifier { eps, nodes })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// `η_ε(t)`; for `ε = 0` returns 0 (the limit is a delta).
    pub fn eval(&self, t: f64) -> f64 {
        if self.eps == 0.0 {
            return 0.0;
        }
        eta_constant() * eta_unnormalized(t / self.eps) / self.eps
    }

    pub fn nodes(&self) -> &[(f64, f64)] {
        &self.nodes
    }
}

impl Default for Mollifier {
    fn default() -> Self {
        Self::none()
    }
}

/// Resolution of the generic Radon quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadonQuadrature {
    /// Midpoint cells across the chord (2D) or per side of the square
    /// circumscribing the disc (3D).
    pub cells: usize,
}

impl Default for RadonQuadrature {
    fn default() -> Self {
        RadonQuadrature { cells: 4000 }
    }
}

/// `(R f)(t, ω)` by the midpoint rule on the part of the hyperplane
/// `{x·ω = t}` inside the support ball. Uses 4000 cells in 2D and 600² in 3D.
pub fn forward_radon(f: &dyn Field, omega: &[f64], t: f64) -> Result<f64> {
    let cells = if f.dim() == 2 { 4000 } else { 600 };
    forward_radon_with(f, omega, t, RadonQuadrature { cells })
}

pub fn forward_radon_with(f: &dyn Field, omega: &[f64], t: f64, q: RadonQuadrature) -> Result<f64> {
    let dim = f.dim();
    if omega.len() != dim {
        return Err(Error::Dimension {
            expected: dim,
            got: omega.len(),
        });
    }
    let r = f.support_radius();
    if !r.is_finite() {
        return Err(Error::input("forward_radon needs a compactly supported field"));
    }
    let w = lift(omega);
    let nw = dot(&w, &w).sqrt();
    if (nw - 1.0).abs() > 1e-9 {
        return Err(Error::input("direction must be a unit vector"));
    }
    let w = w.map(|v| v / nw);
    if t.abs() >= r {
        return Ok(0.0);
    }
    let half = (r * r - t * t).sqrt();
    let n = q.cells.max(1);
    let h = 2.0 * half / n as f64;
    let base = [t * w[0], t * w[1], t * w[2]];
    if dim == 2 {
        let e = [-w[1], w[0]];
        let sum: f64 = (0..n)
            .map(|i| {
                let s = -half + (i as f64 + 0.5) * h;
                f.eval(&[base[0] + s * e[0], base[1] + s * e[1]])
            })
            .sum();
        Ok(sum * h)
    } else {
        let (e1, e2) = plane_basis(&w);
        // Rows in parallel, summed in order so the result is thread-count independent.
        let rows: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|i| {
                let u = -half + (i as f64 + 0.5) * h;
                let mut acc = 0.0;
                for j in 0..n {
                    let v = -half + (j as f64 + 0.5) * h;
                    if u * u + v * v > half * half {
                        continue;
                    }
                    let x = [0, 1, 2].map(|k| base[k] + u * e1[k] + v * e2[k]);
                    acc += f.eval(&x);
                }
                acc
            })
            .collect();
        Ok(rows.iter().sum::<f64>() * h * h)
    }
}

/// Orthonormal basis of the plane perpendicular to a unit vector.
fn plane_basis(w: &[f64; 3]) -> ([f64; 3], [f64; 3]) {
    let pivot = if w[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let d = dot(&pivot, w);
    let mut e1 = [pivot[0] - d * w[0], pivot[1] - d * w[1], pivot[2] - d * w[2]];
    let n = dot(&e1, &e1).sqrt();
    e1.iter_mut().for_each(|v| *v /= n);
    let e2 = [
        w[1] * e1[2] - w[2] * e1[1],
        w[2] * e1[0] - w[0] * e1[2],
        w[0] * e1[1] - w[1] * e1[0],
    ];
    (e1, e2)
}

/// Exact `(R f_O)(t, ω)` for a bump phantom, as the signed sum of the
/// bumps' closed-form transforms over the direction family of `ω`.
pub fn odd_radon_exact(ph: &Phantom, geom: &Geometry, omega: &[f64; 3], t: f64) -> f64 {
    geom.group()
        .into_iter()
        .map(|g| g.sign() * ph.radon(t, &geom.apply(g, *omega)))
        .sum()
}

/// Fills every cell of a sinogram grid with [`odd_radon_exact`].
pub fn oracle_sinogram(ph: &Phantom, geom: &Geometry, directions: Directions, offsets: Vec<f64>) -> Result<Sinogram> {
    geom.check_dim(ph.dim())?;
    if directions.dim() != geom.dim() {
        return Err(Error::Dimension {
            expected: geom.dim(),
            got: directions.dim(),
        });
    }
    let mut s = Sinogram::new(directions, offsets)?;
    let n_t = s.n_offsets();
    let offsets = s.offsets.clone();
    let dirs = s.directions.clone();
    s.values
        .par_chunks_mut(n_t.max(1))
        .zip(s.mask.par_chunks_mut(n_t.max(1)))
        .enumerate()
        .for_each(|(d, (vals, mask))| {
            let w = dirs.vector(d);
            for (m, t) in offsets.iter().enumerate() {
                vals[m] = odd_radon_exact(ph, geom, &w, *t);
                mask[m] = CellMask::Computed;
            }
        });
    Ok(s)
}

/// Per-entry failure while sweeping offsets.
#[derive(Debug, Clone, Copy, PartialEq)]
struct HorizonMiss {
    node: usize,
    time: f64,
    horizon: f64,
}

/// Reconstruction formula for one direction family at every offset in `ts`
/// (ascending), using nodes with `|y| <= r_cut`.
fn projection_profile(
    data: &BoundarySignal,
    fam: &SignedDirectionFamily,
    ts: &[f64],
    moll: &Mollifier,
    r_cut: f64,
) -> (Vec<f64>, Vec<Option<HorizonMiss>>) {
    let mut out = vec![0.0; ts.len()];
    let mut miss: Vec<Option<HorizonMiss>> = vec![None; ts.len()];
    if ts.is_empty() {
        return (out, miss);
    }
    let dt = data.dt();
    let inv_dt = 1.0 / dt;
    let eps = moll.eps();
    let t_min = ts[0];
    for (i, node) in data.grid().nodes().iter().enumerate() {
        if node.radius() > r_cut {
            continue;
        }
        let s = &data.series[i];
        let (lo, hi) = s.support();
        // floor(x) + 2 <= horizon  <=>  x < horizon - 1
        let tau_limit = (s.horizon as f64 - 1.0) * dt - eps;
        for m in &fam.members {
            let c = m.sign * dot(&node.normal, &m.direction) * node.weight;
            if c == 0.0 {
                continue;
            }
            let a = dot(&node.position, &m.direction);
            if a - t_min >= tau_limit {
                for (k, t) in ts.iter().enumerate() {
                    if a - t >= tau_limit && miss[k].is_none() {
                        miss[k] = Some(HorizonMiss {
                            node: i,
                            time: a - t + eps,
                            horizon: data.horizon(i),
                        });
                    }
                }
            }
            if lo >= hi {
                continue;
            }
            // Cubic stencils touch samples k-1..k+2, so only x in (lo-2, hi+1) can be nonzero.
            let tau_lo = (lo as f64 - 2.0) * dt - eps;
            let tau_hi = (hi as f64 + 1.0) * dt + eps;
            let k0 = ts.partition_point(|&t| t <= a - tau_hi);
            let k1 = ts.partition_point(|&t| t < a - tau_lo);
            for k in k0..k1 {
                let tau = a - ts[k];
                let v = if eps == 0.0 {
                    if tau <= 0.0 {
                        0.0
                    } else {
                        s.cubic(tau * inv_dt)
                    }
                } else {
                    moll.nodes
                        .iter()
                        .map(|&(q, w)| {
                            let x = tau - q;
                            if x <= 0.0 {
                                0.0
                            } else {
                                w * s.cubic(x * inv_dt)
                            }
                        })
                        .sum()
                };
                out[k] += c * v;
            }
        }
    }
    (out, miss)
}

/// `(R f_O)(t, ω)` from boundary data on `∂Q ∩ B(0, r_cut)`.
pub fn reconstruct_projection(
    data: &BoundarySignal,
    omega: &[f64],
    t: f64,
    moll: &Mollifier,
    r_cut: f64,
) -> Result<f64> {
    let geom = *data.grid().geometry();
    let w = require_interior(omega, &geom)?;
    if t > 1e-12 || !t.is_finite() {
        return Err(Error::input(format!("reconstruction offset must be <= 0, got {t}")));
    }
    if !(r_cut > 0.0) {
        return Err(Error::input(format!("cutoff radius must be positive, got {r_cut}")));
    }
    let fam = family_unchecked(w, &geom);
    let (v, miss) = projection_profile(data, &fam, &[t], moll, r_cut);
    if let Some(m) = miss[0] {
        return Err(Error::Horizon {
            node: m.node,
            time: m.time,
            horizon: m.horizon,
        });
    }
    Ok(v[0])
}

/// Settings for [`reconstruct_fundamental_sinogram`].
#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionOptions {
    pub mollifier: Mollifier,
    /// Only nodes with `|y| <= r_cut` are used.
    pub r_cut: f64,
    /// Support bound for the admissibility test; defaults to `max |t|` of the offset grid.
    pub r0: Option<f64>,
}

impl Default for ReconstructionOptions {
    fn default() -> Self {
        ReconstructionOptions {
            mollifier: Mollifier::none(),
            r_cut: f64::INFINITY,
            r0: None,
        }
    }
}

/// Angular distance below which a grid direction counts as lying on a mirror.
fn mirror_tolerance(dirs: &Directions) -> f64 {
    let min_step = |v: &[f64]| {
        let mut s: Vec<f64> = v.to_vec();
        s.sort_by(f64::total_cmp);
        s.windows(2)
            .map(|w| w[1] - w[0])
            .filter(|d| *d > ANGLE_TOLERANCE)
            .fold(f64::INFINITY, f64::min)
    };
    let step = match dirs {
        Directions::Circle(a) => min_step(a),
        Directions::Sphere { thetas, phis } => min_step(thetas).min(min_step(phis)),
    };
    if step.is_finite() {
        (0.5 * step).max(ANGLE_TOLERANCE)
    } else {
        ANGLE_TOLERANCE
    }
}

/// Fills a sinogram over directions in the closed fundamental sector (2D)
/// or octant patch (3D) and offsets in `[-r0, 0]`.
///
/// Directions on a mirror are set to exactly 0. With a finite `r_cut`,
/// directions outside the admissible set are computed but marked unknown.
/// Entries that hit the data horizon are marked unknown with a NaN value.
pub fn reconstruct_fundamental_sinogram(
    data: &BoundarySignal,
    directions: Directions,
    offsets: Vec<f64>,
    opts: &ReconstructionOptions,
) -> Result<Sinogram> {
    let geom = *data.grid().geometry();
    if directions.dim() != geom.dim() {
        return Err(Error::Dimension {
            expected: geom.dim(),
            got: directions.dim(),
        });
    }
    if offsets.iter().any(|t| *t > 1e-12) {
        return Err(Error::input("fundamental offsets must be <= 0"));
    }
    if !(opts.r_cut > 0.0) {
        return Err(Error::input(format!("cutoff radius must be positive, got {}", opts.r_cut)));
    }
    let tol = mirror_tolerance(&directions);
    for d in 0..directions.len() {
        if !in_closed_fundamental(&geom, &directions, d, ANGLE_TOLERANCE) {
            return Err(Error::domain(format!(
                "direction {:?} lies outside the fundamental sector",
                directions.angles(d)
            )));
        }
    }
    let mut s = Sinogram::new(directions, offsets)?;
    if s.is_empty() {
        return Ok(s);
    }
    let r0 = opts
        .r0
        .unwrap_or_else(|| s.offsets.iter().fold(0.0f64, |m, t| m.max(t.abs())));
    let admissible = if opts.r_cut.is_finite() && r0 > 0.0 {
        Some(admissible_set(opts.r_cut, r0, &geom)?)
    } else {
        None
    };
    let n_t = s.n_offsets();
    let offsets = s.offsets.clone();
    let dirs = s.directions.clone();
    s.values
        .par_chunks_mut(n_t)
        .zip(s.mask.par_chunks_mut(n_t))
        .enumerate()
        .for_each(|(d, (vals, mask))| {
            if mirror_distance(&geom, &dirs, d) < tol {
                vals.fill(0.0);
                mask.fill(CellMask::Zero);
                return;
            }
            let w = dirs.vector(d);
            let fam = family_unchecked(w, &geom);
            let (v, miss) = projection_profile(data, &fam, &offsets, &opts.mollifier, opts.r_cut);
            let trusted = admissible.as_ref().is_none_or(|a| a.contains(&w[..geom.dim()]));
            for k in 0..n_t {
                if miss[k].is_some() {
                    vals[k] = f64::NAN;
                    mask[k] = CellMask::Unknown;
                } else {
                    vals[k] = v[k];
                    mask[k] = if trusted { CellMask::Computed } else { CellMask::Unknown };
                }
            }
        });
    Ok(s)
}

fn in_closed_fundamental(geom: &Geometry, dirs: &Directions, d: usize, tol: f64) -> bool {
    match (geom, dirs.angles(d)) {
        (Geometry::Sector { .. }, (g, None)) => {
            let beta = geom.opening_angle().unwrap();
            g >= -tol && g <= beta + tol
        }
        (Geometry::Octant, (theta, Some(phi))) => {
            theta >= -tol && theta <= FRAC_PI_2 + tol && phi >= -tol && phi <= FRAC_PI_2 + tol
        }
        _ => false,
    }
}

/// Smallest angular distance from a fundamental-sector grid direction to a mirror.
fn mirror_distance(geom: &Geometry, dirs: &Directions, d: usize) -> f64 {
    match (geom, dirs.angles(d)) {
        (Geometry::Sector { .. }, (g, None)) => {
            let beta = geom.opening_angle().unwrap();
            g.abs().min((beta - g).abs())
        }
        (_, _) => {
            let w = dirs.vector(d);
            w.iter().map(|v| v.abs().min(1.0).asin()).fold(f64::INFINITY, f64::min)
        }
    }
}

fn normalize_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if TAU - r < ANGLE_TOLERANCE {
        0.0
    } else {
        r
    }
}

fn sorted_unique(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() < ANGLE_TOLERANCE);
    v
}

#[cfg(test)]
fn find(sorted: &[f64], x: f64) -> Option<usize> {
    let i = sorted.partition_point(|v| *v < x - ANGLE_TOLERANCE);
    (i < sorted.len() && (sorted[i] - x).abs() < ANGLE_TOLERANCE).then_some(i)
}

/// Lookup of `(direction, offset)` cells in the fundamental part of a sinogram.
struct Fundamental<'a> {
    src: &'a Sinogram,
    /// Sorted `(angle, source index)` pairs: 2D angles, or 3D thetas and phis.
    a1: Vec<(f64, usize)>,
    a2: Vec<(f64, usize)>,
    /// Sorted `(t, source index)` with `t <= 0`.
    t: Vec<(f64, usize)>,
}

impl<'a> Fundamental<'a> {
    fn new(src: &'a Sinogram, geom: &Geometry) -> Self {
        let limit = geom.opening_angle().unwrap_or(FRAC_PI_2);
        let keep = |v: &[f64]| {
            let mut out: Vec<(f64, usize)> = v
                .iter()
                .enumerate()
                .filter(|(_, a)| **a >= -ANGLE_TOLERANCE && **a <= limit + ANGLE_TOLERANCE)
                .map(|(i, a)| (*a, i))
                .collect();
            out.sort_by(|x, y| x.0.total_cmp(&y.0));
            out
        };
        let (a1, a2) = match &src.directions {
            Directions::Circle(a) => (keep(&a.iter().map(|x| normalize_angle(*x)).collect::<Vec<_>>()), Vec::new()),
            Directions::Sphere { thetas, phis } => (
                keep(&thetas.iter().map(|x| normalize_angle(*x)).collect::<Vec<_>>()),
                keep(phis),
            ),
        };
        let mut t: Vec<(f64, usize)> = src
            .offsets
            .iter()
            .enumerate()
            .filter(|(_, t)| **t <= 1e-12)
            .map(|(i, t)| (*t, i))
            .collect();
        t.sort_by(|x, y| x.0.total_cmp(&y.0));
        Fundamental { src, a1, a2, t }
    }

    fn lookup(list: &[(f64, usize)], x: f64) -> Option<usize> {
        let i = list.partition_point(|v| v.0 < x - ANGLE_TOLERANCE);
        (i < list.len() && (list[i].0 - x).abs() < ANGLE_TOLERANCE).then(|| list[i].1)
    }

    fn offset(&self, t: f64) -> Option<usize> {
        let i = self.t.partition_point(|v| v.0 < t - 1e-9);
        (i < self.t.len() && (self.t[i].0 - t).abs() < 1e-9).then(|| self.t[i].1)
    }

    /// Source direction index for fundamental angles.
    fn direction(&self, a1: f64, a2: Option<f64>) -> Option<usize> {
        let i1 = Self::lookup(&self.a1, a1)?;
        match (a2, &self.src.directions) {
            (None, _) => Some(i1),
            (Some(p), Directions::Sphere { thetas, .. }) => Some(Self::lookup(&self.a2, p)? * thetas.len() + i1),
            _ => None,
        }
    }
}

/// Fundamental preimage of a direction: fundamental angles and the sign of
/// the symmetry mapping it there, or `None` when the direction lies on a mirror.
fn fold(geom: &Geometry, a1: f64, a2: Option<f64>) -> Option<(f64, Option<f64>, f64)> {
    match (geom, a2) {
        (Geometry::Sector { .. }, None) => {
            let beta = geom.opening_angle().unwrap();
            let g = normalize_angle(a1).rem_euclid(2.0 * beta);
            let near = |x: f64| x.abs() < ANGLE_TOLERANCE;
            if near(g) || near(g - beta) || near(g - 2.0 * beta) {
                return None;
            }
            if g < beta {
                Some((g, None, 1.0))
            } else {
                Some((2.0 * beta - g, None, -1.0))
            }
        }
        (Geometry::Octant, Some(phi)) => {
            let w = unit_from_spherical(a1, phi);
            if w.iter().any(|v| v.abs() < ANGLE_TOLERANCE) {
                return None;
            }
            let flips = w.iter().filter(|v| **v < 0.0).count();
            let theta_f = w[1].abs().atan2(w[0].abs());
            let phi_f = if phi <= FRAC_PI_2 { phi } else { PI - phi };
            Some((theta_f, Some(phi_f), if flips % 2 == 0 { 1.0 } else { -1.0 }))
        }
        _ => None,
    }
}

/// Extends a sinogram from its fundamental part (directions in the closed
/// fundamental sector, offsets `<= 0`) to all directions and offsets in
/// `[-r0, r0]` using the rotation/reflection relations and
/// `(R f)(t, ω) = (R f)(-t, -ω)`. Directions on mirrors are set to 0.
pub fn symmetry_extend(s: &Sinogram, geom: &Geometry) -> Result<Sinogram> {
    if s.dim() != geom.dim() {
        return Err(Error::Dimension {
            expected: geom.dim(),
            got: s.dim(),
        });
    }
    let fund = Fundamental::new(s, geom);
    let neg: Vec<f64> = fund.t.iter().map(|x| x.0).collect();
    let offsets = sorted_unique(neg.iter().flat_map(|t| [*t, -*t]).collect());
    let directions = match (geom, &s.directions) {
        (Geometry::Sector { order }, Directions::Circle(_)) => {
            let beta = geom.opening_angle().unwrap();
            let mut all: Vec<f64> = (0..2 * *order).map(|k| k as f64 * beta).collect();
            for (g, _) in &fund.a1 {
                for k in 0..*order {
                    let base = 2.0 * k as f64 * beta;
                    all.push(normalize_angle(base + g));
                    all.push(normalize_angle(base - g));
                }
            }
            Directions::Circle(sorted_unique(all.into_iter().map(normalize_angle).collect()))
        }
        (Geometry::Octant, Directions::Sphere { .. }) => {
            let mut thetas: Vec<f64> = (0..4).map(|k| k as f64 * FRAC_PI_2).collect();
            for (t, _) in &fund.a1 {
                thetas.extend([*t, PI - t, PI + t, TAU - t].map(normalize_angle));
            }
            let mut phis = vec![FRAC_PI_2];
            for (p, _) in &fund.a2 {
                phis.extend([*p, PI - p]);
            }
            Directions::Sphere {
                thetas: sorted_unique(thetas),
                phis: sorted_unique(phis),
            }
        }
        _ => {
            return Err(Error::input("sinogram directions do not match the geometry"));
        }
    };
    let mut out = Sinogram::new(directions, offsets)?;
    let n_t = out.n_offsets();
    for d in 0..out.n_directions() {
        let (a1, a2) = out.directions.angles(d);
        for m in 0..n_t {
            let t = out.offsets[m];
            // Positive offsets come from (-t, -ω).
            let (b1, b2, tt, flip) = if t > 1e-12 {
                match a2 {
                    None => (a1 + PI, None, -t, false),
                    Some(p) => (a1 + PI, Some(PI - p), -t, false),
                }
            } else {
                (a1, a2, t, true)
            };
            let (value, mask) = match fold(geom, b1, b2) {
                None => (0.0, CellMask::Zero),
                Some((f1, f2, sign)) => match (fund.direction(f1, f2), fund.offset(tt)) {
                    (Some(sd), Some(sm)) => {
                        let v = s.get(sd, sm);
                        let src_mask = s.mask_at(sd, sm);
                        let identity = flip && sign > 0.0 && (f1 - normalize_angle(a1)).abs() < ANGLE_TOLERANCE
                            && match (f2, a2) {
                                (Some(x), Some(y)) => (x - y).abs() < ANGLE_TOLERANCE,
                                _ => true,
                            };
                        let mask = match src_mask {
                            CellMask::Computed if identity => CellMask::Computed,
                            CellMask::Computed | CellMask::Extended => CellMask::Extended,
                            other => other,
                        };
                        (if mask == CellMask::Zero { 0.0 } else { sign * v }, mask)
                    }
                    _ => (f64::NAN, CellMask::Unknown),
                },
            };
            out.set(d, m, value, mask);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{build_boundary_grid, synthesize_with, BoundaryGrid, GridSpec, SynthesisOptions};
    use crate::geometry::{unit_from_angle, GroupElement};
    use crate::phantom::RadialBump;
    use crate::symmetrize::odd_extend;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn sector3() -> Geometry {
        Geometry::sector(3).unwrap()
    }

    #[test]
    fn mollifier_properties() {
        for eps in [0.02, 0.1, 0.5] {
            let m = Mollifier::new(eps).unwrap();
            let gl = GaussLegendre::new(60);
            let total: f64 = (0..40)
                .map(|k| {
                    let a = -eps + 2.0 * eps * k as f64 / 40.0;
                    gl.integrate(a, a + 2.0 * eps / 40.0, |t| m.eval(t))
                })
                .sum();
            assert!((total - 1.0).abs() < 1e-12, "{total}");
            assert_eq!(m.eval(0.3 * eps), m.eval(-0.3 * eps));
            assert_eq!(m.eval(1.01 * eps), 0.0);
            let w: f64 = m.nodes().iter().map(|n| n.1).sum();
            assert!((w - 1.0).abs() < 1e-14);
            assert!(m.nodes().iter().all(|n| n.0.abs() <= eps));
        }
        assert!(Mollifier::new(-1.0).is_err());
        assert_eq!(Mollifier::new(0.0).unwrap(), Mollifier::none());
    }

    #[test]
    fn forward_radon_examples() {
        let ph = Phantom::new(2, vec![RadialBump::new(&[0.0, 0.0], 0.6, 1.0).unwrap()]).unwrap();
        let v = forward_radon(&ph, &[1.0, 0.0], 0.0).unwrap();
        assert!((v - 0.6 * 256.0 / 315.0).abs() < 1e-9, "{v}");
        assert_eq!(forward_radon(&ph, &[0.0, 1.0], 0.6).unwrap(), 0.0);
        assert_eq!(forward_radon(&ph, &[0.0, 1.0], -0.7).unwrap(), 0.0);

        let ph = Phantom::default_2d();
        let w = unit_from_angle(0.7);
        for t in [-0.4, 0.1, 0.55] {
            let num = forward_radon(&ph, &w, t).unwrap();
            let exact = ph.radon(t, &[w[0], w[1], 0.0]);
            assert!((num - exact).abs() < 1e-9, "{num} {exact}");
        }
        let ph3 = Phantom::default_3d();
        let w = [0.48, 0.6, 0.64];
        let num = forward_radon(&ph3, &w, 0.55).unwrap();
        let exact = ph3.radon(0.55, &w);
        assert!((num - exact).abs() < 1e-6 * exact.abs(), "{num} {exact}");
    }

    #[test]
    fn odd_radon_matches_generic_quadrature() {
        let geom = sector3();
        let ph = Phantom::default_2d();
        let fo = odd_extend(&ph, &geom).unwrap();
        for (g, t) in [(0.4, -0.5), (2.0, 0.3), (4.4, -0.2)] {
            let w = unit_from_angle(g);
            let num = forward_radon(&fo, &w, t).unwrap();
            let exact = odd_radon_exact(&ph, &geom, &[w[0], w[1], 0.0], t);
            assert!((num - exact).abs() < 1e-9, "{num} {exact}");
        }
    }

    #[test]
    fn sinogram_csv_round_trip() {
        let geom = sector3();
        let dirs = Directions::sector_fan(&geom, 6).unwrap();
        let s = oracle_sinogram(&Phantom::default_2d(), &geom, dirs, nonpositive_offsets(1.0, 0.25).unwrap()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        s.write_csv(&p).unwrap();
        assert_eq!(Sinogram::read_csv(&p).unwrap(), s);
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("dim,angle1_rad,t,value,mask\n2,0,-1,"));

        let dirs = Directions::octant_patch(3, vec![0.5, 1.0]).unwrap();
        let mut s = oracle_sinogram(&Phantom::default_3d(), &Geometry::octant(), dirs, vec![-0.5, 0.0]).unwrap();
        s.set(1, 1, f64::NAN, CellMask::Unknown);
        s.write_csv(&p).unwrap();
        let back = Sinogram::read_csv(&p).unwrap();
        assert!(back.same_grid(&s));
        assert!(back.get(1, 1).is_nan());
        assert_eq!(back.mask_at(1, 1), CellMask::Unknown);
        assert!(Sinogram::read_csv_from("dim,x\n".as_bytes(), "bad").is_err());
    }

    #[test]
    fn offsets_must_increase() {
        assert!(Sinogram::new(Directions::Circle(vec![0.1]), vec![0.0, 0.0]).is_err());
        let o = symmetric_offsets(1.0, 0.25).unwrap();
        assert_eq!(o, vec![-1.0, -0.75, -0.5, -0.25, 0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    fn fundamental_oracle(geom: &Geometry, n: usize) -> Sinogram {
        match geom {
            Geometry::Sector { .. } => {
                let dirs = Directions::sector_fan(geom, n).unwrap();
                let mut s = oracle_sinogram(&Phantom::default_2d(), geom, dirs, nonpositive_offsets(1.0, 0.1).unwrap()).unwrap();
                for m in 0..s.n_offsets() {
                    s.set(0, m, 0.0, CellMask::Zero);
                    s.set(n, m, 0.0, CellMask::Zero);
                }
                s
            }
            Geometry::Octant => {
                let phis = (0..=n).map(|i| i as f64 * FRAC_PI_2 / n as f64).collect();
                let dirs = Directions::octant_patch(n, phis).unwrap();
                oracle_sinogram(&Phantom::default_3d(), geom, dirs, nonpositive_offsets(1.0, 0.1).unwrap()).unwrap()
            }
        }
    }

    #[test]
    fn extension_matches_oracle_everywhere() {
        for geom in [Geometry::sector(2).unwrap(), sector3(), Geometry::octant()] {
            let fund = fundamental_oracle(&geom, 6);
            let full = symmetry_extend(&fund, &geom).unwrap();
            assert_eq!(full.unknown_count(), 0);
            let ph = if geom.dim() == 2 { Phantom::default_2d() } else { Phantom::default_3d() };
            for d in 0..full.n_directions() {
                let w = full.directions().vector(d);
                for (m, t) in full.offsets().iter().enumerate() {
                    let exact = odd_radon_exact(&ph, &geom, &w, *t);
                    let got = full.get(d, m);
                    assert!((got - exact).abs() < 1e-12, "{geom:?} {:?} t {t}: {got} {exact}", full.directions().angles(d));
                    if full.mask_at(d, m) == CellMask::Zero {
                        assert_eq!(got, 0.0);
                    }
                }
            }
            // Idempotence, bit for bit.
            assert_eq!(symmetry_extend(&full, &geom).unwrap(), full);
        }
    }

    #[test]
    fn extension_examples() {
        let geom = sector3();
        let beta = PI / 3.0;
        let gamma = beta / 2.0;
        let dirs = Directions::Circle(vec![gamma]);
        let mut s = Sinogram::new(dirs, vec![-0.5, 0.0]).unwrap();
        s.set(0, 0, 0.7, CellMask::Computed);
        s.set(0, 1, 0.2, CellMask::Computed);
        let full = symmetry_extend(&s, &geom).unwrap();
        let dir_of = |a: f64| match full.directions() {
            Directions::Circle(v) => find(v, normalize_angle(a)).unwrap(),
            _ => unreachable!(),
        };
        let t_of = |t: f64| full.offsets().iter().position(|x| (x - t).abs() < 1e-12).unwrap();
        // Rotation by 2β keeps the value; the reflection 𝔯 flips it.
        assert_eq!(full.get(dir_of(gamma + 2.0 * beta), t_of(-0.5)), 0.7);
        assert_eq!(full.mask_at(dir_of(gamma + 2.0 * beta), t_of(-0.5)), CellMask::Extended);
        assert_eq!(full.get(dir_of(-gamma), t_of(-0.5)), -0.7);
        assert_eq!(full.mask_at(dir_of(gamma), t_of(-0.5)), CellMask::Computed);
        // (t, ω) -> (-t, -ω)
        assert_eq!(full.get(dir_of(gamma + PI), t_of(0.5)), 0.7);
        // Cross lines are exactly zero.
        for k in 0..6 {
            assert_eq!(full.get(dir_of(k as f64 * beta), t_of(-0.5)), 0.0);
            assert_eq!(full.mask_at(dir_of(k as f64 * beta), t_of(0.5)), CellMask::Zero);
        }

        let dirs = Directions::Sphere {
            thetas: vec![0.4],
            phis: vec![0.9],
        };
        let mut s = Sinogram::new(dirs, vec![-0.3, 0.0]).unwrap();
        s.set(0, 0, 1.5, CellMask::Computed);
        s.set(0, 1, 0.1, CellMask::Computed);
        let full = symmetry_extend(&s, &Geometry::octant()).unwrap();
        let (thetas, phis) = match full.directions() {
            Directions::Sphere { thetas, phis } => (thetas.clone(), phis.clone()),
            _ => unreachable!(),
        };
        let at = |th: f64, ph: f64, t: f64| {
            let d = find(&phis, ph).unwrap() * thetas.len() + find(&thetas, normalize_angle(th)).unwrap();
            full.get(d, full.offsets().iter().position(|x| (x - t).abs() < 1e-12).unwrap())
        };
        // 𝔯₁𝔯₂ω is ω rotated by π about the z axis.
        assert_eq!(at(0.4 + PI, 0.9, -0.3), 1.5);
        assert_eq!(at(PI - 0.4, 0.9, -0.3), -1.5);
        assert_eq!(at(0.4, PI - 0.9, -0.3), -1.5);
        // -ω at the same t
        assert_eq!(at(0.4 + PI, PI - 0.9, -0.3), -1.5);
        assert_eq!(at(0.4 + PI, PI - 0.9, 0.3), 1.5);
        assert_eq!(at(0.0, 0.9, -0.3), 0.0);
        assert_eq!(at(0.4, FRAC_PI_2, 0.3), 0.0);
    }

    fn small_2d_signal(r_max: f64) -> BoundarySignal {
        let grid = Arc::new(build_boundary_grid(&sector3(), r_max, 0.01, 1.0, 1.02).unwrap());
        let opts = SynthesisOptions {
            horizon_radius: Some(1.0),
            ..SynthesisOptions::new(0.01)
        };
        synthesize_with(&Phantom::default_2d(), &grid, &opts).unwrap()
    }

    #[test]
    fn reconstruction_matches_oracle_2d() {
        let data = small_2d_signal(40.0);
        let geom = sector3();
        let ph = Phantom::default_2d();
        let peak = (0..=20)
            .map(|i| {
                let w = unit_from_angle(i as f64 * PI / 60.0);
                (0..=20).map(|m| odd_radon_exact(&ph, &geom, &[w[0], w[1], 0.0], -0.05 * m as f64).abs()).fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        // Directions with R(ω) well inside the grid.
        for deg in [25.0, 30.0, 35.0] {
            let w = unit_from_angle(f64::to_radians(deg));
            for t in [-0.9, -0.6, -0.45, -0.3, 0.0] {
                let got = reconstruct_projection(&data, &w, t, &Mollifier::none(), f64::INFINITY).unwrap();
                let exact = odd_radon_exact(&ph, &geom, &[w[0], w[1], 0.0], t);
                assert!((got - exact).abs() < 0.01 * peak, "{deg} {t}: {got} vs {exact}");
            }
        }
    }

    #[test]
    fn reconstruction_errors_and_zero_data() {
        let data = small_2d_signal(10.0);
        let w = unit_from_angle(0.5);
        assert!(matches!(
            reconstruct_projection(&data, &[1.0, 0.0], -0.5, &Mollifier::none(), f64::INFINITY),
            Err(Error::Domain(_))
        ));
        assert!(reconstruct_projection(&data, &w, 0.5, &Mollifier::none(), f64::INFINITY).is_err());
        // Horizon was built for r0 = 1.
        assert!(matches!(
            reconstruct_projection(&data, &w, -3.0, &Mollifier::none(), f64::INFINITY),
            Err(Error::Horizon { .. })
        ));
        let zero = Phantom::new(2, vec![RadialBump::new(&[0.5, 0.2], 0.1, 0.0).unwrap()]).unwrap();
        let zdata = synthesize_with(&zero, data.grid(), &SynthesisOptions::new(0.01)).unwrap();
        assert_eq!(reconstruct_projection(&zdata, &w, -0.3, &Mollifier::none(), f64::INFINITY).unwrap(), 0.0);
        // A line that misses the support of f_O.
        let v = reconstruct_projection(&data, &w, -1.0 - 0.02, &Mollifier::none(), f64::INFINITY);
        let peak = 0.3;
        assert!(v.map(|v| v.abs() < 1e-3 * peak).unwrap_or(true));
    }

    #[test]
    fn mollified_reconstruction_converges() {
        let data = small_2d_signal(30.0);
        let w = unit_from_angle(0.5);
        let t = -0.5;
        let base = reconstruct_projection(&data, &w, t, &Mollifier::none(), f64::INFINITY).unwrap();
        let diff = |eps: f64| {
            (reconstruct_projection(&data, &w, t, &Mollifier::new(eps).unwrap(), f64::INFINITY).unwrap() - base).abs()
        };
        let (a, b) = (diff(0.08), diff(0.04));
        assert!(a > b && b > 0.0);
        // O(ε²): halving ε divides the gap by about 4.
        assert!((a / b).log2() > 1.6, "{a} {b}");
    }

    #[test]
    fn fundamental_sweep_marks_bands_and_mirrors() {
        let data = small_2d_signal(20.0);
        let geom = sector3();
        let dirs = Directions::sector_fan(&geom, 12).unwrap();
        let offsets = nonpositive_offsets(1.0, 0.1).unwrap();
        let opts = ReconstructionOptions {
            r_cut: 20.0,
            r0: Some(1.0),
            ..Default::default()
        };
        let s = reconstruct_fundamental_sinogram(&data, dirs, offsets.clone(), &opts).unwrap();
        let g0 = admissible_set(20.0, 1.0, &geom).unwrap().gamma0().unwrap();
        for d in 0..s.n_directions() {
            let (g, _) = s.directions().angles(d);
            let m = s.mask_at(d, 3);
            if d == 0 || d == 12 {
                assert_eq!(m, CellMask::Zero);
                assert_eq!(s.get(d, 3), 0.0);
            } else if g < g0 || g > PI / 3.0 - g0 {
                assert_eq!(m, CellMask::Unknown, "{g}");
            } else {
                assert_eq!(m, CellMask::Computed, "{g}");
            }
        }
        let empty = reconstruct_fundamental_sinogram(&data, Directions::sector_fan(&geom, 12).unwrap(), vec![], &opts).unwrap();
        assert!(empty.is_empty());
        let outside = Directions::Circle(vec![2.0]);
        assert!(reconstruct_fundamental_sinogram(&data, outside, offsets, &opts).is_err());
    }

    #[test]
    fn three_d_reconstruction_spot_check() {
        let ph = Phantom::default_3d();
        let geom = Geometry::octant();
        let spec = GridSpec::new(40.0, 0.02, 1.0, 1.03).with_angles(64);
        let grid = Arc::new(BoundaryGrid::build(&geom, &spec).unwrap());
        let data = synthesize_with(
            &ph,
            &grid,
            &SynthesisOptions {
                horizon_radius: Some(1.0),
                ..SynthesisOptions::new(0.01)
            },
        )
        .unwrap();
        let w = unit_from_spherical(0.7, 0.8);
        let peak = (0..=20).map(|m| odd_radon_exact(&ph, &geom, &w, -0.05 * m as f64).abs()).fold(0.0, f64::max);
        for t in [-0.8, -0.6, -0.4, -0.2] {
            let got = reconstruct_projection(&data, &w, t, &Mollifier::none(), f64::INFINITY).unwrap();
            let exact = odd_radon_exact(&ph, &geom, &w, t);
            assert!((got - exact).abs() < 0.01 * peak, "{t}: {got} {exact}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn radon_redundancy(g in 0.0..TAU, t in -0.9f64..0.9) {
            let ph = Phantom::default_2d();
            let w = unit_from_angle(g);
            let a = forward_radon(&ph, &w, t).unwrap();
            let b = forward_radon(&ph, &[-w[0], -w[1]], -t).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn oracle_symmetries_2d(frac in 0.01f64..0.99, t in -0.9f64..0.0, k in 0u32..3) {
            let geom = sector3();
            let ph = Phantom::default_2d();
            let fo = odd_extend(&ph, &geom).unwrap();
            let w = unit_from_angle(frac * PI / 3.0);
            let v = forward_radon(&fo, &w, t).unwrap();
            let scale = 0.2;
            let rot = geom.apply_symmetry(GroupElement::Dihedral { rotation: k, reflect: false }, &w).unwrap();
            let refl = geom.apply_symmetry(GroupElement::Dihedral { rotation: k, reflect: true }, &w).unwrap();
            prop_assert!((forward_radon(&fo, &rot, t).unwrap() - v).abs() < 1e-6 * scale);
            prop_assert!((forward_radon(&fo, &refl, t).unwrap() + v).abs() < 1e-6 * scale);
        }
    }
}
