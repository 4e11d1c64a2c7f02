//! Detector grids on `∂Q` and synthetic boundary pressure `p(t, y)`.
//!
//! In 2D the pressure is the time derivative of an Abel-type integral of
//! circular means,
//!
//! ```text
//! p(t, y) = ∂/∂t ∫₀ᵗ M(y, r) r / sqrt(t² - r²) dr,
//! ```
//!
//! with `M` the plain average over the circle of radius `r` about `y`. In 3D it
//! is `∂/∂t [t M(y, t)]` with `M` the spherical mean. Both time derivatives are
//! taken by centered differences across half steps of the uniform time grid.

use std::f64::consts::{FRAC_PI_2, PI};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::{Arc, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{dot, lift, norm, Geometry};
use crate::numfmt::g17;
use crate::phantom::{profile, Phantom, RadialBump};
use crate::quadrature::GaussLegendre;

/// Angular nodes per quarter-plane face when none are requested.
pub const DEFAULT_ANGLES: usize = 96;

/// Default Gauss–Legendre order of the Abel integral.
pub const DEFAULT_ABEL_POINTS: usize = 48;

/// Length of the noise window after the arrival time.
pub const NOISE_WINDOW: f64 = 2.0;

/// Radial grading of a boundary grid: uniform spacing `fine_h` up to
/// `fine_extent`, then steps `fine_h·growth^k` until `r_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub r_max: f64,
    pub fine_h: f64,
    pub fine_extent: f64,
    pub growth: f64,
    /// Angular nodes per face (3D only).
    pub angles: usize,
}

impl GridSpec {
    pub fn new(r_max: f64, fine_h: f64, fine_extent: f64, growth: f64) -> Self {
        GridSpec {
            r_max,
            fine_h,
            fine_extent,
            growth,
            angles: DEFAULT_ANGLES,
        }
    }

    pub fn with_angles(mut self, angles: usize) -> Self {
        self.angles = angles;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let GridSpec {
            r_max,
            fine_h,
            fine_extent,
            growth,
            angles,
        } = *self;
        if !(fine_h > 0.0 && fine_h < fine_extent && fine_extent < r_max && r_max.is_finite()) {
            return Err(Error::input(format!(
                "grid needs 0 < fine_h < fine_extent < R_max (got {fine_h}, {fine_extent}, {r_max})"
            )));
        }
        if !(growth > 1.0) || !growth.is_finite() {
            return Err(Error::input(format!("grid growth must exceed 1, got {growth}")));
        }
        if angles == 0 {
            return Err(Error::input("grid needs at least one angular node"));
        }
        Ok(())
    }

    /// Node radii along one ray (2D) or one polar spoke (3D), starting at 0
    /// and ending at `r_max`.
    pub fn radii(&self) -> Result<Vec<f64>> {
        self.validate()?;
        let n_fine = (self.fine_extent / self.fine_h + 1e-9).floor() as usize;
        let mut radii: Vec<f64> = (0..=n_fine).map(|k| k as f64 * self.fine_h).collect();
        let mut last = *radii.last().unwrap();
        let mut step = self.fine_h;
        loop {
            step *= self.growth;
            let next = last + step;
            if next >= self.r_max * (1.0 - 1e-12) {
                radii.push(self.r_max);
                break;
            }
            radii.push(next);
            last = next;
        }
        Ok(radii)
    }
}

/// Trapezoid (dual-cell) weights for sorted abscissae.
fn trapezoid_weights(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|i| {
            let left = if i > 0 { x[i - 1] } else { x[i] };
            let right = if i + 1 < n { x[i + 1] } else { x[i] };
            0.5 * (right - left)
        })
        .collect()
}

/// A quadrature node on `∂Q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryNode {
    /// Padded with a zero third component in 2D.
    pub position: [f64; 3],
    /// Outward unit normal of the face containing the node.
    pub normal: [f64; 3],
    pub weight: f64,
    pub face: usize,
}

impl BoundaryNode {
    pub fn radius(&self) -> f64 {
        norm(&self.position)
    }
}

/// Quadrature nodes covering `∂Q ∩ B(0, R_max)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryGrid {
    geometry: Geometry,
    nodes: Vec<BoundaryNode>,
    r_max: f64,
}

/// Builds a graded grid with the default angular resolution in 3D.
pub fn build_boundary_grid(
    geom: &Geometry,
    r_max: f64,
    fine_h: f64,
    fine_extent: f64,
    growth: f64,
) -> Result<BoundaryGrid> {
    BoundaryGrid::build(geom, &GridSpec::new(r_max, fine_h, fine_extent, growth))
}

/// Outward normal of face `face`.
pub fn face_normal(geom: &Geometry, face: usize) -> Result<[f64; 3]> {
    match (geom, face) {
        (Geometry::Sector { .. }, 0) => Ok([0.0, -1.0, 0.0]),
        (Geometry::Sector { .. }, 1) => {
            let b = geom.opening_angle().unwrap();
            Ok([-b.sin(), b.cos(), 0.0])
        }
        (Geometry::Octant, f) if f < 3 => {
            let mut n = [0.0; 3];
            n[f] = -1.0;
            Ok(n)
        }
        _ => Err(Error::input(format!("{geom:?} has no face {face}"))),
    }
}

impl BoundaryGrid {
    pub fn build(geom: &Geometry, spec: &GridSpec) -> Result<Self> {
        let radii = spec.radii()?;
        let dr = trapezoid_weights(&radii);
        let mut nodes = Vec::new();
        match geom {
            Geometry::Sector { .. } => {
                let beta = geom.opening_angle().unwrap();
                for face in 0..2 {
                    let angle = if face == 0 { 0.0 } else { beta };
                    let (s, c) = angle.sin_cos();
                    let normal = face_normal(geom, face)?;
                    for (&r, &w) in radii.iter().zip(&dr) {
                        nodes.push(BoundaryNode {
                            position: [r * c, r * s, 0.0],
                            normal,
                            weight: w,
                            face,
                        });
                    }
                }
            }
            Geometry::Octant => {
                let dpsi = FRAC_PI_2 / spec.angles as f64;
                for face in 0..3 {
                    let (a, b) = ((face + 1) % 3, (face + 2) % 3);
                    let normal = face_normal(geom, face)?;
                    for (&r, &w) in radii.iter().zip(&dr).skip(1) {
                        for k in 0..spec.angles {
                            let (s, c) = ((k as f64 + 0.5) * dpsi).sin_cos();
                            let mut position = [0.0; 3];
                            position[a] = r * c;
                            position[b] = r * s;
                            nodes.push(BoundaryNode {
                                position,
                                normal,
                                weight: r * w * dpsi,
                                face,
                            });
                        }
                    }
                }
            }
        }
        Ok(BoundaryGrid {
            geometry: *geom,
            nodes,
            r_max: spec.r_max,
        })
    }

    /// Assembles a grid from explicit nodes, checking that each lies on its face.
    pub fn from_nodes(geom: &Geometry, nodes: Vec<BoundaryNode>) -> Result<Self> {
        for (i, n) in nodes.iter().enumerate() {
            let want = face_normal(geom, n.face)?;
            let on_face = -dot(&want, &n.position);
            let tangent_ok = match geom {
                Geometry::Sector { .. } => {
                    // Position must be a nonnegative multiple of the face's ray.
                    let angle = if n.face == 0 { 0.0 } else { geom.opening_angle().unwrap() };
                    let ray = [angle.cos(), angle.sin(), 0.0];
                    dot(&ray, &n.position) >= -1e-12
                }
                Geometry::Octant => n.position.iter().all(|&v| v >= -1e-12),
            };
            let normal_err = (0..3).map(|k| (n.normal[k] - want[k]).abs()).fold(0.0, f64::max);
            if on_face.abs() > 1e-12 * (1.0 + n.radius()) || !tangent_ok || normal_err > 1e-12 {
                return Err(Error::input(format!("node {i} does not lie on face {} of the boundary", n.face)));
            }
            if !(n.weight >= 0.0) {
                return Err(Error::input(format!("node {i} has negative weight")));
            }
        }
        let r_max = nodes.iter().map(|n| n.radius()).fold(0.0, f64::max);
        Ok(BoundaryGrid {
            geometry: *geom,
            nodes,
            r_max,
        })
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn nodes(&self) -> &[BoundaryNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    /// Total weight of nodes with `|y| <= radius`.
    pub fn weight_within(&self, radius: f64) -> f64 {
        self.nodes
            .iter()
            .filter(|n| n.radius() <= radius * (1.0 + 1e-12))
            .map(|n| n.weight)
            .sum()
    }
}

fn gl(n: usize) -> &'static GaussLegendre {
    static GL5: OnceLock<GaussLegendre> = OnceLock::new();
    static GL16: OnceLock<GaussLegendre> = OnceLock::new();
    match n {
        5 => GL5.get_or_init(|| GaussLegendre::new(5)),
        16 => GL16.get_or_init(|| GaussLegendre::new(16)),
        _ => unreachable!(),
    }
}

/// Circular mean of one bump over the circle of radius `r` whose center is
/// `d` away from the bump center.
///
/// With `ρ² = (r - d)² + 4 r d sin²(a/2)` the integrand is a polynomial in
/// `cos a`, supported on `|a| < ψ`, so a 16-point rule on `[0, ψ]` is exact
/// to rounding.
#[inline]
fn bump_circular_mean(b: &RadialBump, d: f64, r: f64) -> f64 {
    let diff = r - d;
    if diff.abs() >= b.radius {
        return 0.0;
    }
    let rb2 = b.radius * b.radius;
    let base = diff * diff;
    let rd4 = 4.0 * r * d;
    let psi = if rd4 <= 0.0 {
        PI
    } else {
        2.0 * ((rb2 - base) / rd4).min(1.0).sqrt().asin()
    };
    let sum: f64 = gl(16)
        .mapped(0.0, psi)
        .map(|(a, w)| {
            let s = (0.5 * a).sin();
            w * profile((base + rd4 * s * s) / rb2)
        })
        .sum();
    b.amplitude * sum / PI
}

/// Spherical mean of one bump; with `v = 1 - cos` the integrand is a quartic
/// in `v`, integrated exactly by a 5-point rule.
#[inline]
fn bump_spherical_mean(b: &RadialBump, d: f64, r: f64) -> f64 {
    let diff = r - d;
    if diff.abs() >= b.radius {
        return 0.0;
    }
    let rb2 = b.radius * b.radius;
    let base = diff * diff;
    let rd2 = 2.0 * r * d;
    let vmax = if rd2 <= 0.0 {
        2.0
    } else {
        ((rb2 - base) / rd2).min(2.0)
    };
    let sum: f64 = gl(5)
        .mapped(0.0, vmax)
        .map(|(v, w)| w * profile((base + rd2 * v) / rb2))
        .sum();
    0.5 * b.amplitude * sum
}

fn check_point(ph: &Phantom, y: &[f64], r: f64, dim: usize) -> Result<[f64; 3]> {
    if ph.dim() != dim {
        return Err(Error::Dimension {
            expected: dim,
            got: ph.dim(),
        });
    }
    if y.len() != dim {
        return Err(Error::Dimension {
            expected: dim,
            got: y.len(),
        });
    }
    if !(r > 0.0) {
        return Err(Error::input(format!("mean radius must be positive, got {r}")));
    }
    Ok(lift(y))
}

fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    norm(&d)
}

/// Average of a 2D phantom over the circle `|x - y| = r`.
pub fn circular_mean(ph: &Phantom, y: &[f64], r: f64) -> Result<f64> {
    let y = check_point(ph, y, r, 2)?;
    Ok(ph
        .bumps()
        .iter()
        .map(|b| bump_circular_mean(b, distance(&y, &b.center), r))
        .sum())
}

/// Average of a 3D phantom over the sphere `|x - y| = r`.
pub fn spherical_mean(ph: &Phantom, y: &[f64], r: f64) -> Result<f64> {
    let y = check_point(ph, y, r, 3)?;
    Ok(ph
        .bumps()
        .iter()
        .map(|b| bump_spherical_mean(b, distance(&y, &b.center), r))
        .sum())
}

/// Samples of `p(·, y)` at one node. Indices below `first` hold 0; so do
/// indices in `first + values.len() ..= horizon`. Past `horizon` the signal
/// is unknown.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSeries {
    pub(crate) first: usize,
    pub(crate) values: Vec<f64>,
    pub(crate) horizon: usize,
}

impl NodeSeries {
    fn from_dense(first: usize, mut values: Vec<f64>, horizon: usize) -> Self {
        let lead = values.iter().take_while(|v| **v == 0.0).count();
        if lead == values.len() {
            return NodeSeries {
                first: 0,
                values: Vec::new(),
                horizon,
            };
        }
        let trail = values.iter().rev().take_while(|v| **v == 0.0).count();
        values.truncate(values.len() - trail);
        values.drain(..lead);
        NodeSeries {
            first: first + lead,
            values,
            horizon,
        }
    }

    #[inline]
    pub(crate) fn at(&self, k: isize) -> f64 {
        let i = k - self.first as isize;
        if i < 0 || i as usize >= self.values.len() {
            0.0
        } else {
            self.values[i as usize]
        }
    }

    /// Cubic 4-point Lagrange interpolation at fractional index `x >= 0`.
    /// The caller guarantees `floor(x) + 2 <= horizon`.
    #[inline]
    pub(crate) fn cubic(&self, x: f64) -> f64 {
        let kf = x.floor();
        let u = x - kf;
        let k = kf as isize;
        let (um1, up1, um2) = (u - 1.0, u + 1.0, u - 2.0);
        let w0 = -u * um1 * um2 / 6.0;
        let w1 = up1 * um1 * um2 / 2.0;
        let w2 = -up1 * u * um2 / 2.0;
        let w3 = up1 * u * um1 / 6.0;
        w0 * self.at(k - 1) + w1 * self.at(k) + w2 * self.at(k + 1) + w3 * self.at(k + 2)
    }

    /// Index range `[lo, hi)` outside of which the series is exactly zero.
    #[inline]
    pub(crate) fn support(&self) -> (usize, usize) {
        (self.first, self.first + self.values.len())
    }
}

/// Pressure time series at every node of a boundary grid, on the uniform
/// grid `t_k = k·dt`, `k = 0..n_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySignal {
    grid: Arc<BoundaryGrid>,
    dt: f64,
    n_t: usize,
    pub(crate) series: Vec<NodeSeries>,
}

/// Knobs for [`synthesize_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthesisOptions {
    pub dt: f64,
    /// Each node keeps samples up to `|y| + horizon_radius` (plus two steps).
    /// Defaults to the phantom's support radius; never smaller than it.
    pub horizon_radius: Option<f64>,
    /// Gauss–Legendre order of the 2D Abel integral.
    pub abel_points: usize,
}

impl SynthesisOptions {
    pub fn new(dt: f64) -> Self {
        SynthesisOptions {
            dt,
            horizon_radius: None,
            abel_points: DEFAULT_ABEL_POINTS,
        }
    }
}

/// Synthesizes `p(t, y)` on every grid node with default options.
pub fn synthesize_boundary_data(ph: &Phantom, grid: &Arc<BoundaryGrid>, dt: f64) -> Result<BoundarySignal> {
    synthesize_with(ph, grid, &SynthesisOptions::new(dt))
}

struct AbelBump {
    bump: RadialBump,
    d: f64,
    lo: f64,
    hi: f64,
    switch: f64,
    /// `(r_k², w_k·M(r_k)·r_k)` on a fixed rule over `[lo, hi]`, for the tail.
    tail: Vec<(f64, f64)>,
}

pub fn synthesize_with(ph: &Phantom, grid: &Arc<BoundaryGrid>, opts: &SynthesisOptions) -> Result<BoundarySignal> {
    let dim = grid.geometry().dim();
    if ph.dim() != dim {
        return Err(Error::Dimension {
            expected: dim,
            got: ph.dim(),
        });
    }
    let dt = opts.dt;
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::input(format!("time step must be positive, got {dt}")));
    }
    if dt > 0.5 * ph.min_radius() {
        return Err(Error::input(format!(
            "time step {dt} exceeds half the smallest bump radius {}; the wavefront would be undersampled",
            ph.min_radius()
        )));
    }
    if opts.abel_points < 2 {
        return Err(Error::input("Abel quadrature needs at least two points"));
    }
    let h = opts
        .horizon_radius
        .unwrap_or(ph.support_radius())
        .max(ph.support_radius());
    let total = grid.r_max() + h + 2.0 * dt;
    let n_t = (total / dt).ceil() as usize + 1;
    let gl = GaussLegendre::new(opts.abel_points);

    let series = grid
        .nodes()
        .par_iter()
        .map(|node| {
            let k_h = (((node.radius() + h) / dt).ceil() as usize + 2).min(n_t - 1);
            match dim {
                2 => series_2d(ph, &node.position, dt, k_h, &gl),
                _ => series_3d(ph, &node.position, dt, k_h),
            }
        })
        .collect();
    Ok(BoundarySignal {
        grid: Arc::clone(grid),
        dt,
        n_t,
        series,
    })
}

/// `p(t_k) = (F(t_k + dt/2) - F(t_k - dt/2)) / dt`, with `F` sampled at the
/// half steps `(j + 1/2)·dt` for `j` in `[j0, j0 + f.len())` and zero outside.
/// Sample 0 is pinned to 0.
fn differentiate(f: &[f64], j0: usize, k_last: usize, dt: f64) -> Vec<f64> {
    let get = |j: usize| {
        if j < j0 || j >= j0 + f.len() {
            0.0
        } else {
            f[j - j0]
        }
    };
    (j0..=k_last)
        .map(|k| if k == 0 { 0.0 } else { (get(k) - get(k - 1)) / dt })
        .collect()
}

/// First half-step index at which `F` can be nonzero when it vanishes for `t <= t_first`.
fn first_half_step(t_first: f64, dt: f64, k_h: usize) -> usize {
    ((t_first / dt - 0.5).floor().max(0.0) as usize).min(k_h)
}

fn series_2d(ph: &Phantom, y: &[f64; 3], dt: f64, k_h: usize, gl: &GaussLegendre) -> NodeSeries {
    let bumps: Vec<AbelBump> = ph
        .bumps()
        .iter()
        .map(|b| {
            let d = distance(y, &b.center);
            let lo = (d - b.radius).max(0.0);
            let hi = d + b.radius;
            let tail = gl
                .mapped(lo, hi)
                .map(|(r, w)| (r * r, w * r * bump_circular_mean(b, d, r)))
                .collect();
            AbelBump {
                bump: *b,
                d,
                lo,
                hi,
                switch: hi + 2.0 * b.radius,
                tail,
            }
        })
        .collect();
    let t_first = bumps.iter().map(|b| b.lo).fold(f64::INFINITY, f64::min);
    let j0 = first_half_step(t_first, dt, k_h);
    let a: Vec<f64> = (j0..=k_h)
        .map(|j| {
            let t = (j as f64 + 0.5) * dt;
            bumps.iter().map(|b| abel(b, t, gl)).sum()
        })
        .collect();
    NodeSeries::from_dense(j0, differentiate(&a, j0, k_h, dt), k_h)
}

/// `∫₀ᵗ M_b(r) r / sqrt(t² - r²) dr` for one bump.
fn abel(b: &AbelBump, t: f64, gl: &GaussLegendre) -> f64 {
    if t <= b.lo {
        return 0.0;
    }
    if t > b.switch {
        let t2 = t * t;
        return b.tail.iter().map(|&(r2, c)| c / (t2 - r2).sqrt()).sum();
    }
    // r = t sin u turns r dr / sqrt(t² - r²) into t sin u du.
    let u_lo = (b.lo / t).min(1.0).asin();
    let u_hi = if t <= b.hi { FRAC_PI_2 } else { (b.hi / t).asin() };
    gl.mapped(u_lo, u_hi)
        .map(|(u, w)| {
            let r = t * u.sin();
            w * r * bump_circular_mean(&b.bump, b.d, r)
        })
        .sum()
}

fn series_3d(ph: &Phantom, y: &[f64; 3], dt: f64, k_h: usize) -> NodeSeries {
    let ds: Vec<f64> = ph.bumps().iter().map(|b| distance(y, &b.center)).collect();
    let lo = ph
        .bumps()
        .iter()
        .zip(&ds)
        .map(|(b, d)| (d - b.radius).max(0.0))
        .fold(f64::INFINITY, f64::min);
    let hi = ph
        .bumps()
        .iter()
        .zip(&ds)
        .map(|(b, d)| d + b.radius)
        .fold(0.0, f64::max);
    let j0 = first_half_step(lo, dt, k_h);
    // F vanishes at half steps with (j + 1/2)·dt >= hi.
    let j_end = ((hi / dt - 0.5).ceil().max(0.0) as usize).clamp(j0, k_h + 1);
    let f: Vec<f64> = (j0..j_end)
        .map(|j| {
            let t = (j as f64 + 0.5) * dt;
            t * ph
                .bumps()
                .iter()
                .zip(&ds)
                .map(|(b, &d)| bump_spherical_mean(b, d, t))
                .sum::<f64>()
        })
        .collect();
    NodeSeries::from_dense(j0, differentiate(&f, j0, j_end.min(k_h), dt), k_h)
}

impl BoundarySignal {
    /// Assembles a signal from dense per-node rows. `rows[i]` holds samples
    /// `0..=horizon_i`; it may be shorter than `n_t`.
    pub fn from_rows(grid: Arc<BoundaryGrid>, dt: f64, n_t: usize, rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.len() != grid.len() {
            return Err(Error::input(format!(
                "{} sample rows for {} grid nodes",
                rows.len(),
                grid.len()
            )));
        }
        if !(dt > 0.0) {
            return Err(Error::input(format!("time step must be positive, got {dt}")));
        }
        let mut series = Vec::with_capacity(rows.len());
        for (i, row) in rows.into_iter().enumerate() {
            if row.is_empty() || row.len() > n_t {
                return Err(Error::input(format!("row {i} has {} samples (N_t = {n_t})", row.len())));
            }
            let horizon = row.len() - 1;
            series.push(NodeSeries::from_dense(0, row, horizon));
        }
        Ok(BoundarySignal { grid, dt, n_t, series })
    }

    pub fn grid(&self) -> &Arc<BoundaryGrid> {
        &self.grid
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of samples `N_t` on the global time grid.
    pub fn len_t(&self) -> usize {
        self.n_t
    }

    pub fn horizon_index(&self, node: usize) -> usize {
        self.series[node].horizon
    }

    /// Last time at which node `node` has data.
    pub fn horizon(&self, node: usize) -> f64 {
        self.series[node].horizon as f64 * self.dt
    }

    /// Sample `k` at `node`, or `None` past the node's horizon.
    pub fn value(&self, node: usize, k: usize) -> Option<f64> {
        let s = &self.series[node];
        (k <= s.horizon).then(|| s.at(k as isize))
    }

    /// Dense samples `0..=horizon` at `node`.
    pub fn row(&self, node: usize) -> Vec<f64> {
        let s = &self.series[node];
        (0..=s.horizon).map(|k| s.at(k as isize)).collect()
    }

    /// First index with a nonzero sample.
    pub fn arrival_index(&self, node: usize) -> Option<usize> {
        let s = &self.series[node];
        (!s.values.is_empty()).then_some(s.first)
    }

    /// `p(τ, y_node)` by cubic interpolation; 0 for `τ <= 0`.
    pub fn sample(&self, node: usize, tau: f64) -> Result<f64> {
        if tau <= 0.0 {
            return Ok(0.0);
        }
        let s = &self.series[node];
        let x = tau / self.dt;
        if x.floor() + 2.0 > s.horizon as f64 {
            return Err(Error::Horizon {
                node,
                time: tau,
                horizon: self.horizon(node),
            });
        }
        Ok(s.cubic(x))
    }

    /// Largest absolute sample at a node.
    pub fn peak(&self, node: usize) -> f64 {
        self.series[node].values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Writes the text format: a header `dim N_nodes N_t dt R_max`, then per
    /// node a line `face y.. n.. w` and a line of `N_t` samples (`nan` past
    /// the node's horizon).
    pub fn write(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        self.write_to(&mut out).map_err(|e| Error::io(path, e))?;
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_to(&self, out: &mut impl Write) -> std::io::Result<()> {
        let dim = self.grid.geometry().dim();
        writeln!(
            out,
            "{dim} {} {} {} {}",
            self.grid.len(),
            self.n_t,
            g17(self.dt),
            g17(self.grid.r_max())
        )?;
        for (node, s) in self.grid.nodes().iter().zip(&self.series) {
            let mut line = node.face.to_string();
            for v in node.position[..dim].iter().chain(&node.normal[..dim]) {
                line.push(' ');
                line.push_str(&g17(*v));
            }
            line.push(' ');
            line.push_str(&g17(node.weight));
            writeln!(out, "{line}")?;
            let mut row = String::with_capacity(self.n_t * 4);
            for k in 0..self.n_t {
                if k > 0 {
                    row.push(' ');
                }
                if k > s.horizon {
                    row.push_str("nan");
                } else {
                    row.push_str(&g17(s.at(k as isize)));
                }
            }
            writeln!(out, "{row}")?;
        }
        Ok(())
    }

    /// Reads the format produced by [`BoundarySignal::write`]. In 2D the
    /// sector order is inferred from the normals of face 1 unless given.
    pub fn read(path: &Path, geometry: Option<Geometry>) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(BufReader::new(file), geometry, &path.display().to_string())
    }

    pub fn read_from(reader: impl BufRead, geometry: Option<Geometry>, source: &str) -> Result<Self> {
        let mut lines = reader.lines().enumerate();
        let mut next = |what: &str| -> Result<(usize, String)> {
            match lines.next() {
                Some((i, Ok(l))) => Ok((i + 1, l)),
                Some((i, Err(e))) => Err(Error::parse(source, i + 1, e.to_string())),
                None => Err(Error::parse(source, 0, format!("unexpected end of file, expected {what}"))),
            }
        };
        let (ln, header) = next("header")?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 5 {
            return Err(Error::parse(source, ln, "header must be `dim N_nodes N_t dt R_max`"));
        }
        let perr = |ln: usize, e: &dyn std::fmt::Display| Error::parse(source, ln, e.to_string());
        let dim: usize = h[0].parse().map_err(|e| perr(ln, &e))?;
        let n_nodes: usize = h[1].parse().map_err(|e| perr(ln, &e))?;
        let n_t: usize = h[2].parse().map_err(|e| perr(ln, &e))?;
        let dt: f64 = h[3].parse().map_err(|e| perr(ln, &e))?;
        let _r_max: f64 = h[4].parse().map_err(|e| perr(ln, &e))?;
        if dim != 2 && dim != 3 {
            return Err(Error::parse(source, ln, format!("dimension must be 2 or 3, got {dim}")));
        }
        if n_t == 0 {
            return Err(Error::parse(source, ln, "N_t must be positive"));
        }
        let mut nodes = Vec::with_capacity(n_nodes);
        let mut rows = Vec::with_capacity(n_nodes);
        for _ in 0..n_nodes {
            let (ln, node_line) = next("node line")?;
            let f: Vec<&str> = node_line.split_whitespace().collect();
            if f.len() != 2 * dim + 2 {
                return Err(Error::parse(source, ln, format!("node line needs {} fields", 2 * dim + 2)));
            }
            let face: usize = f[0].parse().map_err(|e| perr(ln, &e))?;
            let nums: Vec<f64> = f[1..]
                .iter()
                .map(|w| w.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| perr(ln, &e))?;
            nodes.push(BoundaryNode {
                position: lift(&nums[..dim]),
                normal: lift(&nums[dim..2 * dim]),
                weight: nums[2 * dim],
                face,
            });
            let (ln, sample_line) = next("sample line")?;
            let mut row = Vec::with_capacity(n_t);
            for w in sample_line.split_whitespace() {
                let v: f64 = w.parse().map_err(|e| perr(ln, &e))?;
                row.push(v);
            }
            if row.len() != n_t {
                return Err(Error::parse(source, ln, format!("expected {n_t} samples, found {}", row.len())));
            }
            let known = row.iter().take_while(|v| !v.is_nan()).count();
            if known == 0 {
                return Err(Error::parse(source, ln, "node has no samples"));
            }
            row.truncate(known);
            rows.push(row);
        }
        let geom = match (dim, geometry) {
            (_, Some(g)) => {
                if g.dim() != dim {
                    return Err(Error::Dimension { expected: g.dim(), got: dim });
                }
                g
            }
            (3, None) => Geometry::Octant,
            (_, None) => infer_sector(&nodes)
                .ok_or_else(|| Error::parse(source, 1, "cannot infer the sector order; pass the geometry explicitly"))?,
        };
        let grid = Arc::new(BoundaryGrid::from_nodes(&geom, nodes)?);
        Self::from_rows(grid, dt, n_t, rows)
    }
}

fn infer_sector(nodes: &[BoundaryNode]) -> Option<Geometry> {
    let n = nodes.iter().find(|n| n.face == 1)?;
    let beta = (-n.normal[0]).atan2(n.normal[1]);
    let order = (PI / beta).round();
    if order < 2.0 || (PI / order - beta).abs() > 1e-9 {
        return None;
    }
    Geometry::sector(order as u32).ok()
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Adds uniform noise on `[t_arrival, t_arrival + 2]` at every node, scaled
/// so that the noise has `level` times the windowed L2 norm of the clean signal.
pub fn add_noise(sig: &BoundarySignal, level: f64, seed: u64) -> Result<BoundarySignal> {
    add_noise_windowed(sig, level, seed, NOISE_WINDOW)
}

pub fn add_noise_windowed(sig: &BoundarySignal, level: f64, seed: u64, window: f64) -> Result<BoundarySignal> {
    if !(level >= 0.0) || !level.is_finite() {
        return Err(Error::input(format!("noise level must be >= 0, got {level}")));
    }
    if !(window > 0.0) {
        return Err(Error::input(format!("noise window must be positive, got {window}")));
    }
    if level == 0.0 {
        return Ok(sig.clone());
    }
    let steps = (window / sig.dt + 1e-9).floor() as usize;
    let series = sig
        .series
        .par_iter()
        .enumerate()
        .map(|(node, s)| {
            if s.values.is_empty() {
                return s.clone();
            }
            let start = s.first;
            let end = (start + steps).min(s.horizon);
            let mut values = s.values.clone();
            if values.len() < end - start + 1 {
                values.resize(end - start + 1, 0.0);
            }
            let window = &mut values[..=end - start];
            let clean: f64 = window.iter().map(|v| v * v).sum::<f64>().sqrt();
            let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(node as u64)));
            let noise: Vec<f64> = (0..window.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let raw: f64 = noise.iter().map(|v| v * v).sum::<f64>().sqrt();
            if raw > 0.0 {
                let scale = level * clean / raw;
                for (v, n) in window.iter_mut().zip(&noise) {
                    *v += scale * n;
                }
            }
            NodeSeries {
                first: start,
                values,
                horizon: s.horizon,
            }
        })
        .collect();
    Ok(BoundarySignal {
        grid: Arc::clone(&sig.grid),
        dt: sig.dt,
        n_t: sig.n_t,
        series,
    })
}
