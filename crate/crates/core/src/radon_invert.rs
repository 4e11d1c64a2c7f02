//! Classical Radon inversion on a uniform grid, and restriction to `Q`.
//!
//! 2D uses filtered backprojection with a band-limited ramp filter; 3D uses
//! `f(x) = -1/(8π²) ∫_{S²} ∂²_t (R f)(x·ω, ω) dω`.

use std::f64::consts::{PI, TAU};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::geometry::Geometry;
use crate::numfmt::g17;
use crate::radon_core::{CellMask, Directions, Sinogram};

/// Fraction of the Nyquist frequency where the ramp filter starts rolling off.
pub const TAPER_START: f64 = 0.8;

/// Axis-aligned box `[lo, hi]` in 2 or 3 dimensions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub dim: usize,
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

impl BoundingBox {
    pub fn new(lo: &[f64], hi: &[f64]) -> Result<Self> {
        if lo.len() != hi.len() || !(2..=3).contains(&lo.len()) {
            return Err(Error::input("bounding box needs two matching corners in 2D or 3D"));
        }
        let mut b = BoundingBox {
            dim: lo.len(),
            lo: [0.0; 3],
            hi: [0.0; 3],
        };
        for i in 0..lo.len() {
            if !(hi[i] > lo[i]) || !lo[i].is_finite() || !hi[i].is_finite() {
                return Err(Error::input(format!("empty bounding box along axis {i}")));
            }
            b.lo[i] = lo[i];
            b.hi[i] = hi[i];
        }
        Ok(b)
    }

    /// `[0, side]^dim`.
    pub fn unit(dim: usize, side: f64) -> Result<Self> {
        Self::new(&vec![0.0; dim], &vec![side; dim])
    }
}

/// Cell-centred samples on a uniform grid with spacing `h` in every axis.
#[derive(Debug, Clone, PartialEq)]
pub struct GridImage {
    dim: usize,
    origin: [f64; 3],
    h: f64,
    shape: [usize; 3],
    values: Vec<f64>,
    geometry: Option<Geometry>,
}

impl GridImage {
    /// Zero image covering `bbox`; each axis gets `round(extent/h)` cells.
    pub fn zeros(bbox: &BoundingBox, h: f64) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::input(format!("grid spacing must be positive, got {h}")));
        }
        let mut shape = [1usize; 3];
        for (i, s) in shape.iter_mut().enumerate().take(bbox.dim) {
            *s = ((bbox.hi[i] - bbox.lo[i]) / h).round().max(1.0) as usize;
        }
        let n: usize = shape.iter().product();
        if n > 1 << 28 {
            return Err(Error::input(format!("image of {n} cells is too large")));
        }
        Ok(GridImage {
            dim: bbox.dim,
            origin: bbox.lo,
            h,
            shape,
            values: vec![0.0; n],
            geometry: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    /// `[nx, ny, nz]`, with `nz = 1` in 2D.
    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn geometry(&self) -> Option<&Geometry> {
        self.geometry.as_ref()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Flat index, x fastest.
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.shape[1] + j) * self.shape[0] + i
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.index(i, j, k)]
    }

    /// Centre of cell `n` (flat index).
    pub fn center(&self, n: usize) -> [f64; 3] {
        let i = n % self.shape[0];
        let j = (n / self.shape[0]) % self.shape[1];
        let k = n / (self.shape[0] * self.shape[1]);
        let mut c = [0.0; 3];
        for (a, idx) in [i, j, k].into_iter().enumerate().take(self.dim) {
            c[a] = self.origin[a] + (idx as f64 + 0.5) * self.h;
        }
        c
    }

    /// Fills every cell with `f(centre)`.
    pub fn sample(bbox: &BoundingBox, h: f64, f: impl Fn(&[f64]) -> f64 + Sync) -> Result<Self> {
        let mut img = Self::zeros(bbox, h)?;
        let dim = img.dim;
        let centers: Vec<[f64; 3]> = (0..img.len()).map(|n| img.center(n)).collect();
        img.values
            .par_iter_mut()
            .zip(centers.par_iter())
            .for_each(|(v, c)| *v = f(&c[..dim]));
        Ok(img)
    }

    fn minmax(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)))
    }

    /// Writes `x,y[,z],value` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_file(path, |out| {
            if self.dim == 2 {
                writeln!(out, "x,y,value")?;
            } else {
                writeln!(out, "x,y,z,value")?;
            }
            for (n, v) in self.values.iter().enumerate() {
                let c = self.center(n);
                let coords: Vec<String> = c[..self.dim].iter().map(|x| g17(*x)).collect();
                writeln!(out, "{},{}", coords.join(","), g17(*v))?;
            }
            Ok(())
        })
    }

    /// 2D: one 16-bit P2 image plus `<path>.window.txt` with the value window.
    /// 3D: slices `<stem>_z###.pgm` sharing one window, plus `<stem>.meta.txt`
    /// holding `nx ny nz hx hy hz x0 y0 z0` (cell-centre origin).
    pub fn write_pgm(&self, path: &Path) -> Result<Vec<PathBuf>> {
        let (lo, hi) = self.minmax();
        let mut written = Vec::new();
        let window = sidecar(path, "window.txt");
        write_file(&window, |out| writeln!(out, "min {}\nmax {}", g17(lo), g17(hi)))?;
        written.push(window);
        if self.dim == 2 {
            self.write_slice(path, 0, lo, hi)?;
            written.push(path.to_path_buf());
        } else {
            let stem = path.with_extension("");
            for k in 0..self.shape[2] {
                let p = PathBuf::from(format!("{}_z{k:03}.pgm", stem.display()));
                self.write_slice(&p, k, lo, hi)?;
                written.push(p);
            }
            let meta = sidecar(&stem, "meta.txt");
            let c0 = self.center(0);
            write_file(&meta, |out| {
                writeln!(
                    out,
                    "{} {} {} {} {} {} {} {} {}",
                    self.shape[0],
                    self.shape[1],
                    self.shape[2],
                    g17(self.h),
                    g17(self.h),
                    g17(self.h),
                    g17(c0[0]),
                    g17(c0[1]),
                    g17(c0[2])
                )
            })?;
            written.push(meta);
        }
        Ok(written)
    }

    fn write_slice(&self, path: &Path, k: usize, lo: f64, hi: f64) -> Result<()> {
        let span = if hi > lo { hi - lo } else { 1.0 };
        write_file(path, |out| {
            writeln!(out, "P2\n{} {}\n65535", self.shape[0], self.shape[1])?;
            // Top row of the picture is the largest y.
            for j in (0..self.shape[1]).rev() {
                let row: Vec<String> = (0..self.shape[0])
                    .map(|i| {
                        let v = (self.get(i, j, k) - lo) / span;
                        ((v.clamp(0.0, 1.0) * 65535.0).round() as u32).to_string()
                    })
                    .collect();
                writeln!(out, "{}", row.join(" "))?;
            }
            Ok(())
        })
    }
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    PathBuf::from(format!("{}.{suffix}", path.display()))
}

fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<std::fs::File>) -> std::io::Result<()>) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    body(&mut out).and_then(|_| out.flush()).map_err(|e| Error::io(path, e))
}

/// Uniform offset step, or an error if the grid is not uniform.
fn offset_step(s: &Sinogram) -> Result<f64> {
    let t = s.offsets();
    if t.len() < 3 {
        return Err(Error::input("inversion needs at least three offsets"));
    }
    let dt = (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64;
    if t.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.max(1.0)) {
        return Err(Error::input("inversion needs a uniform offset grid"));
    }
    Ok(dt)
}

/// Sinogram values with unknown cells either rejected or replaced by their
/// stored value (0 when it is not finite).
fn usable_values(s: &Sinogram, allow_partial: bool) -> Result<Vec<f64>> {
    if !allow_partial && s.unknown_count() > 0 {
        return Err(Error::input(format!(
            "sinogram has {} unknown cells; extend it first or allow partial data",
            s.unknown_count()
        )));
    }
    Ok(s.values()
        .iter()
        .zip(s.mask())
        .map(|(v, m)| match m {
            CellMask::Zero => 0.0,
            _ if v.is_finite() => *v,
            _ => 0.0,
        })
        .collect())
}

/// Dual-cell widths of sorted periodic angles.
fn periodic_weights(angles: &[f64]) -> Result<Vec<f64>> {
    let n = angles.len();
    if n == 0 {
        return Err(Error::input("inversion needs at least one direction"));
    }
    let mut a: Vec<(usize, f64)> = angles.iter().map(|x| x.rem_euclid(TAU)).enumerate().collect();
    a.sort_by(|x, y| x.1.total_cmp(&y.1));
    let mut w = vec![0.0; n];
    for k in 0..n {
        let prev = if k == 0 { a[n - 1].1 - TAU } else { a[k - 1].1 };
        let next = if k == n - 1 { a[0].1 + TAU } else { a[k + 1].1 };
        w[a[k].0] = if n == 1 { TAU } else { 0.5 * (next - prev) };
    }
    Ok(w)
}

/// Dual-cell widths of sorted polar angles on `[0, π]`.
fn polar_widths(phis: &[f64]) -> Result<Vec<f64>> {
    if phis.windows(2).any(|w| !(w[1] > w[0])) || phis.iter().any(|p| !(0.0..=PI).contains(p)) {
        return Err(Error::input("polar angles must increase within [0, π]"));
    }
    let n = phis.len();
    Ok((0..n)
        .map(|k| {
            let a = if k == 0 { 0.0 } else { 0.5 * (phis[k - 1] + phis[k]) };
            let b = if k == n - 1 { PI } else { 0.5 * (phis[k] + phis[k + 1]) };
            b - a
        })
        .collect())
}

/// Band-limited ramp filter: spatial Ram-Lak kernel, with its spectrum
/// rolled off by a cosine from `TAPER_START` of Nyquist. Returns the
/// filtered profiles `q = h * g` for every direction.
fn ramp_filter(values: &[f64], n_t: usize, dt: f64) -> Vec<f64> {
    let len = (2 * n_t).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(len);
    let ifft = planner.plan_fft_inverse(len);

    let mut kernel = vec![Complex::new(0.0, 0.0); len];
    for (k, c) in kernel.iter_mut().enumerate() {
        let m = if k <= len / 2 { k as i64 } else { k as i64 - len as i64 };
        c.re = if m == 0 {
            1.0 / (4.0 * dt * dt)
        } else if m % 2 != 0 {
            -1.0 / (PI * PI * (m * m) as f64 * dt * dt)
        } else {
            0.0
        };
    }
    fft.process(&mut kernel);
    for (k, c) in kernel.iter_mut().enumerate() {
        let m = if k <= len / 2 { k } else { len - k };
        let frac = m as f64 / (len / 2) as f64;
        let taper = if frac <= TAPER_START {
            1.0
        } else {
            0.5 * (1.0 + (PI * (frac - TAPER_START) / (1.0 - TAPER_START)).cos())
        };
        // Discrete convolution q = dt Σ h g, normalised for the inverse FFT.
        *c *= taper * dt / len as f64;
    }

    let mut out = vec![0.0; values.len()];
    out.par_chunks_mut(n_t)
        .zip(values.par_chunks(n_t))
        .for_each_init(
            || vec![Complex::new(0.0, 0.0); len],
            |buf, (q, g)| {
                buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
                for (b, v) in buf.iter_mut().zip(g) {
                    b.re = *v;
                }
                fft.process(buf);
                for (b, k) in buf.iter_mut().zip(&kernel) {
                    *b *= k;
                }
                ifft.process(buf);
                for (o, b) in q.iter_mut().zip(buf.iter()) {
                    *o = b.re;
                }
            },
        );
    out
}

/// Linear interpolation of a uniformly sampled profile; 0 outside.
#[inline]
fn lerp(profile: &[f64], t0: f64, inv_dt: f64, s: f64) -> f64 {
    let x = (s - t0) * inv_dt;
    if !(x >= 0.0) {
        return 0.0;
    }
    let i = x.floor() as usize;
    if i + 1 >= profile.len() {
        return if i + 1 == profile.len() && x == i as f64 { profile[i] } else { 0.0 };
    }
    let f = x - i as f64;
    profile[i] * (1.0 - f) + profile[i + 1] * f
}

/// 2D filtered backprojection over the box, `f = 1/(4π) ∫_0^{2π} q(x·ω, ω) dω`.
pub fn invert_radon_2d(s: &Sinogram, bbox: &BoundingBox, h: f64, allow_partial: bool) -> Result<GridImage> {
    let angles = match s.directions() {
        Directions::Circle(a) => a.clone(),
        _ => return Err(Error::Dimension { expected: 2, got: s.dim() }),
    };
    if bbox.dim != 2 {
        return Err(Error::Dimension { expected: 2, got: bbox.dim });
    }
    let dt = offset_step(s)?;
    let values = usable_values(s, allow_partial)?;
    let weights = periodic_weights(&angles)?;
    let n_t = s.n_offsets();
    let q = ramp_filter(&values, n_t, dt);
    let dirs: Vec<(f64, f64, f64)> = angles
        .iter()
        .zip(&weights)
        // The Ram-Lak kernel is the ramp |ν| in cycles per unit; |σ| = 2π|ν|.
        .map(|(a, w)| (a.cos(), a.sin(), *w * TAU / (4.0 * PI)))
        .collect();
    let t0 = s.offsets()[0];
    let inv_dt = 1.0 / dt;
    let mut img = GridImage::zeros(bbox, h)?;
    let centers: Vec<[f64; 3]> = (0..img.len()).map(|n| img.center(n)).collect();
    img.values.par_iter_mut().zip(centers.par_iter()).for_each(|(v, c)| {
        *v = dirs
            .iter()
            .enumerate()
            .map(|(d, (cx, cy, w))| w * lerp(&q[d * n_t..(d + 1) * n_t], t0, inv_dt, c[0] * cx + c[1] * cy))
            .sum();
    });
    Ok(img)
}

/// 3D inversion `-1/(8π²) ∫ ∂²_t R f(x·ω, ω) dω` with product weights
/// `sin φ Δφ Δθ`.
pub fn invert_radon_3d(s: &Sinogram, bbox: &BoundingBox, h: f64, allow_partial: bool) -> Result<GridImage> {
    let (thetas, phis) = match s.directions() {
        Directions::Sphere { thetas, phis } => (thetas.clone(), phis.clone()),
        _ => return Err(Error::Dimension { expected: 3, got: s.dim() }),
    };
    if bbox.dim != 3 {
        return Err(Error::Dimension { expected: 3, got: bbox.dim });
    }
    let dt = offset_step(s)?;
    let values = usable_values(s, allow_partial)?;
    let w_theta = periodic_weights(&thetas)?;
    let w_phi = polar_widths(&phis)?;
    let n_t = s.n_offsets();
    let n_theta = thetas.len();

    let mut second = vec![0.0; values.len()];
    for (d2, g) in second.chunks_mut(n_t).zip(values.chunks(n_t)) {
        for m in 1..n_t - 1 {
            d2[m] = (g[m + 1] - 2.0 * g[m] + g[m - 1]) / (dt * dt);
        }
    }
    let scale = -1.0 / (8.0 * PI * PI);
    let dirs: Vec<([f64; 3], f64)> = (0..s.n_directions())
        .map(|d| {
            let (it, ip) = (d % n_theta, d / n_theta);
            (s.directions().vector(d), scale * phis[ip].sin() * w_phi[ip] * w_theta[it])
        })
        .filter(|(_, w)| *w != 0.0)
        .collect();
    let index: Vec<usize> = (0..s.n_directions())
        .filter(|d| phis[d / n_theta].sin() * w_phi[d / n_theta] * w_theta[d % n_theta] != 0.0)
        .collect();
    let t0 = s.offsets()[0];
    let inv_dt = 1.0 / dt;
    let mut img = GridImage::zeros(bbox, h)?;
    let centers: Vec<[f64; 3]> = (0..img.len()).map(|n| img.center(n)).collect();
    img.values.par_iter_mut().zip(centers.par_iter()).for_each(|(v, c)| {
        *v = dirs
            .iter()
            .zip(&index)
            .map(|((w, wt), d)| {
                let sdot = c[0] * w[0] + c[1] * w[1] + c[2] * w[2];
                wt * lerp(&second[d * n_t..(d + 1) * n_t], t0, inv_dt, sdot)
            })
            .sum();
    });
    Ok(img)
}

/// Zeroes every cell whose centre is outside the open domain `Q`.
pub fn restrict_to_domain(img: &GridImage, geom: &Geometry) -> Result<GridImage> {
    geom.check_dim(img.dim)?;
    let mut out = img.clone();
    let dim = img.dim;
    for (n, v) in out.values.iter_mut().enumerate() {
        if !geom.contains(&img.center(n)[..dim]) {
            *v = 0.0;
        }
    }
    out.geometry = Some(*geom);
    Ok(out)
}
