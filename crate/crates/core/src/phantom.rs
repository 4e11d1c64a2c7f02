//! Ground-truth initial pressures built from smooth radial bumps.

use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{dot, lift, Geometry};
use crate::symmetrize::Field;

/// `∫_{-1}^{1} (1 - u²)⁴ du`.
pub const PROFILE_LINE_INTEGRAL: f64 = 256.0 / 315.0;

/// The bump profile `h(s) = (1 - s²)⁴` on `[0, 1)`, zero beyond.
pub fn bump_profile(s: f64) -> Result<f64> {
    if !(s >= 0.0) {
        return Err(Error::input(format!("bump profile argument must be >= 0, got {s}")));
    }
    Ok(profile(s * s))
}

/// Profile as a function of `s²`.
#[inline]
pub(crate) fn profile(s2: f64) -> f64 {
    if s2 >= 1.0 {
        0.0
    } else {
        let q = 1.0 - s2;
        let q2 = q * q;
        q2 * q2
    }
}

/// `a · h(|x - c| / r)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialBump {
    /// Padded with zeros in 2D.
    pub center: [f64; 3],
    pub radius: f64,
    pub amplitude: f64,
}

impl RadialBump {
    pub fn new(center: &[f64], radius: f64, amplitude: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::input(format!("bump radius must be positive, got {radius}")));
        }
        if !amplitude.is_finite() || center.iter().any(|c| !c.is_finite()) {
            return Err(Error::input("bump center and amplitude must be finite"));
        }
        if center.len() != 2 && center.len() != 3 {
            return Err(Error::input(format!(
                "bump center must have 2 or 3 components, got {}",
                center.len()
            )));
        }
        Ok(RadialBump {
            center: lift(center),
            radius,
            amplitude,
        })
    }

    #[inline]
    pub(crate) fn eval3(&self, x: &[f64; 3]) -> f64 {
        let d = [x[0] - self.center[0], x[1] - self.center[1], x[2] - self.center[2]];
        let s2 = dot(&d, &d) / (self.radius * self.radius);
        if s2 >= 1.0 {
            0.0
        } else {
            self.amplitude * profile(s2)
        }
    }

    /// Exact Radon transform of this bump in dimension `dim`.
    #[inline]
    pub fn radon(&self, dim: usize, t: f64, omega: &[f64; 3]) -> f64 {
        let delta = t - dot(&self.center, omega);
        let q = 1.0 - (delta * delta) / (self.radius * self.radius);
        if q <= 0.0 {
            return 0.0;
        }
        let q2 = q * q;
        let q4 = q2 * q2;
        if dim == 2 {
            self.amplitude * self.radius * PROFILE_LINE_INTEGRAL * q4 * q.sqrt()
        } else {
            self.amplitude * std::f64::consts::PI * self.radius * self.radius / 5.0 * q4 * q
        }
    }

    pub fn norm_of_center(&self) -> f64 {
        dot(&self.center, &self.center).sqrt()
    }
}

/// A linear combination of radial bumps.
#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    dim: usize,
    bumps: Vec<RadialBump>,
    support: f64,
}

impl Phantom {
    pub fn new(dim: usize, bumps: Vec<RadialBump>) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::input(format!("phantom dimension must be 2 or 3, got {dim}")));
        }
        if bumps.is_empty() {
            return Err(Error::input("a phantom needs at least one bump"));
        }
        if dim == 2 && bumps.iter().any(|b| b.center[2] != 0.0) {
            return Err(Error::input("2D phantom with a nonzero third coordinate"));
        }
        let support = bumps
            .iter()
            .map(|b| b.norm_of_center() + b.radius)
            .fold(0.0, f64::max);
        Ok(Phantom { dim, bumps, support })
    }

    /// The 2D default: `h₁ - h₂`, both bumps strictly inside the `N = 3` sector and the unit ball.
    pub fn default_2d() -> Self {
        let polar = |r: f64, deg: f64| {
            let a = deg.to_radians();
            [r * a.cos(), r * a.sin()]
        };
        Phantom::new(
            2,
            vec![
                RadialBump::new(&polar(0.5, 25.0), 0.2, 1.0).unwrap(),
                RadialBump::new(&polar(0.78, 38.0), 0.12, -1.0).unwrap(),
            ],
        )
        .unwrap()
    }

    /// The 3D default: four unit bumps in the octant, inside the unit ball.
    pub fn default_3d() -> Self {
        let b = |c: [f64; 3], r: f64| RadialBump::new(&c, r, 1.0).unwrap();
        Phantom::new(
            3,
            vec![
                b([0.35, 0.25, 0.3], 0.15),
                b([0.2, 0.55, 0.3], 0.12),
                b([0.3, 0.3, 0.6], 0.18),
                b([0.55, 0.2, 0.6], 0.13),
            ],
        )
        .unwrap()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bumps(&self) -> &[RadialBump] {
        &self.bumps
    }

    /// `r₀ = max_j (|x_j| + r_j)`.
    pub fn support_radius(&self) -> f64 {
        self.support
    }

    /// Smallest bump radius.
    pub fn min_radius(&self) -> f64 {
        self.bumps.iter().map(|b| b.radius).fold(f64::INFINITY, f64::min)
    }

    #[inline]
    pub(crate) fn eval3(&self, x: &[f64; 3]) -> f64 {
        self.bumps.iter().map(|b| b.eval3(x)).sum()
    }

    /// Exact Radon transform `(R f)(t, ω)` for any unit `ω` (padded to 3 components in 2D).
    pub fn radon(&self, t: f64, omega: &[f64; 3]) -> f64 {
        self.bumps.iter().map(|b| b.radon(self.dim, t, omega)).sum()
    }

    /// Checks that every closed bump ball lies inside the open domain.
    pub fn check_contained(&self, geom: &Geometry) -> Result<()> {
        geom.check_dim(self.dim)?;
        for (i, b) in self.bumps.iter().enumerate() {
            let c = &b.center[..self.dim];
            if geom.distance_to_boundary(c) <= b.radius {
                return Err(Error::input(format!(
                    "bump {i} (center {c:?}, radius {}) is not strictly inside the domain",
                    b.radius
                )));
            }
        }
        Ok(())
    }

    /// Parses the text format `cx cy [cz] radius amplitude`, one bump per line.
    pub fn parse(text: &str, dim: usize, source: &str) -> Result<Self> {
        let mut bumps = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let nums: Vec<f64> = line
                .split_whitespace()
                .map(|w| w.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::parse(source, i + 1, e.to_string()))?;
            if nums.len() != dim + 2 {
                return Err(Error::parse(
                    source,
                    i + 1,
                    format!("expected {} numbers, found {}", dim + 2, nums.len()),
                ));
            }
            let bump = RadialBump::new(&nums[..dim], nums[dim], nums[dim + 1])
                .map_err(|e| Error::parse(source, i + 1, e.to_string()))?;
            bumps.push(bump);
        }
        Phantom::new(dim, bumps)
    }

    pub fn from_file(path: &Path, dim: usize) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Phantom::parse(&text, dim, &path.display().to_string())
    }

    /// Serializes in the format read by [`Phantom::parse`].
    pub fn to_text(&self) -> String {
        let mut out = String::from("# center radius amplitude\n");
        for b in &self.bumps {
            let cols: Vec<String> = b.center[..self.dim]
                .iter()
                .chain([b.radius, b.amplitude].iter())
                .map(|&v| crate::numfmt::g17(v))
                .collect();
            out.push_str(&cols.join(" "));
            out.push('\n');
        }
        out
    }
}

impl Field for Phantom {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64]) -> f64 {
        self.eval3(&lift(x))
    }

    fn support_radius(&self) -> f64 {
        self.support
    }
}
