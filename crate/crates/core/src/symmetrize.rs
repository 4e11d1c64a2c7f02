//! Point-evaluable scalar fields and the odd-extension operator `O`.

use std::sync::Arc;

use crate::error::Result;
use crate::geometry::{lift, GroupElement, Geometry};

/// A scalar field on `R^d` that can be evaluated pointwise.
///
/// Fields with a finite [`support_radius`](Field::support_radius) must
/// return exactly 0 for points farther than that from the origin.
pub trait Field: Send + Sync {
    fn dim(&self) -> usize;

    /// Evaluates at `x`, which has `dim()` components.
    fn eval(&self, x: &[f64]) -> f64;

    /// Radius of a ball about the origin containing the support (may be infinite).
    fn support_radius(&self) -> f64;
}

impl<F: Field + ?Sized> Field for &F {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval(&self, x: &[f64]) -> f64 {
        (**self).eval(x)
    }
    fn support_radius(&self) -> f64 {
        (**self).support_radius()
    }
}

impl<F: Field + ?Sized> Field for Box<F> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval(&self, x: &[f64]) -> f64 {
        (**self).eval(x)
    }
    fn support_radius(&self) -> f64 {
        (**self).support_radius()
    }
}

impl<F: Field + ?Sized> Field for Arc<F> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval(&self, x: &[f64]) -> f64 {
        (**self).eval(x)
    }
    fn support_radius(&self) -> f64 {
        (**self).support_radius()
    }
}

/// Wraps a closure as a [`Field`].
pub struct FnField<F> {
    dim: usize,
    support: f64,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Send + Sync> FnField<F> {
    /// The closure is trusted to vanish outside `support`; evaluation
    /// outside that radius short-circuits to 0.
    pub fn new(dim: usize, support: f64, f: F) -> Self {
        FnField { dim, support, f }
    }
}

impl<F: Fn(&[f64]) -> f64 + Send + Sync> Field for FnField<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, x: &[f64]) -> f64 {
        if self.support.is_finite() && x.iter().map(|v| v * v).sum::<f64>() > self.support * self.support {
            return 0.0;
        }
        (self.f)(x)
    }
    fn support_radius(&self) -> f64 {
        self.support
    }
}

/// `f_O = O f`: the signed sum of `f` over the symmetry group of a geometry.
#[derive(Clone)]
pub struct OddExtension<F> {
    inner: F,
    geometry: Geometry,
    group: Vec<GroupElement>,
}

/// Returns the odd extension of `f` with respect to `geom`.
///
/// ```
/// use corner_radon::geometry::Geometry;
/// use corner_radon::phantom::{Phantom, RadialBump};
/// use corner_radon::symmetrize::{odd_extend, Field};
///
/// let geom = Geometry::sector(3)?;
/// let f = Phantom::new(2, vec![RadialBump::new(&[0.5, 0.2], 0.1, 1.0)?])?;
/// let fo = odd_extend(&f, &geom)?;
/// assert_eq!(fo.eval(&[0.5, 0.2]), 1.0);
/// assert_eq!(fo.eval(&[0.5, -0.2]), -1.0);
/// assert_eq!(fo.eval(&[0.7, 0.0]), 0.0);
/// # Ok::<(), corner_radon::Error>(())
/// ```
pub fn odd_extend<F: Field>(f: F, geom: &Geometry) -> Result<OddExtension<F>> {
    geom.check_dim(f.dim())?;
    Ok(OddExtension {
        inner: f,
        geometry: *geom,
        group: geom.group(),
    })
}

impl<F: Field> OddExtension<F> {
    pub fn inner(&self) -> &F {
        &self.inner
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }
}

impl<F: Field> Field for OddExtension<F> {
    fn dim(&self) -> usize {
        self.geometry.dim()
    }

    fn eval(&self, x: &[f64]) -> f64 {
        let r = self.inner.support_radius();
        if r.is_finite() && x.iter().map(|v| v * v).sum::<f64>() > r * r {
            return 0.0;
        }
        let d = self.dim();
        let p = lift(x);
        self.group
            .iter()
            .map(|&g| g.sign() * self.inner.eval(&self.geometry.apply(g, p)[..d]))
            .sum()
    }

    fn support_radius(&self) -> f64 {
        self.inner.support_radius()
    }
}

/// Midpoint-rule integral of `f·g` over the cube `[-half, half]^d` with `n` cells per side.
pub fn inner_product(f: &dyn Field, g: &dyn Field, half: f64, n: usize) -> f64 {
    let d = f.dim();
    let h = 2.0 * half / n as f64;
    let cell = h.powi(d as i32);
    let coord = |i: usize| -half + (i as f64 + 0.5) * h;
    let mut sum = 0.0;
    let mut x = vec![0.0; d];
    let total = n.pow(d as u32);
    for idx in 0..total {
        let mut rem = idx;
        for xi in x.iter_mut() {
            *xi = coord(rem % n);
            rem /= n;
        }
        let a = f.eval(&x);
        if a != 0.0 {
            sum += a * g.eval(&x);
        }
    }
    sum * cell
}
