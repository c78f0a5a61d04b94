//! Model problem definition: flow field, piecewise absorption coefficient,
//! boundary data, operator actions, and the exact solution of the pure
//! transport model problem along characteristics.

use crate::{Error, Result};
use std::fmt;
use std::sync::Arc;

/// A point in the plane.
pub type Point = [f64; 2];

/// Axis-aligned rectangle, used for the high-absorption subregion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    /// Strict interior test; boundary points are outside.
    pub fn contains_strict(&self, p: Point) -> bool {
        p[0] > self.x0 && p[0] < self.x1 && p[1] > self.y0 && p[1] < self.y1
    }
}

/// Default absorbing subregion `(0.25, 0.75)^2`.
pub const INNER_SQUARE: Rect = Rect { x0: 0.25, y0: 0.25, x1: 0.75, y1: 0.75 };

type Source = Arc<dyn Fn(Point) -> f64 + Send + Sync>;

/// Coefficients of the advection-reaction equation `b . grad(psi) + sigma psi = r`
/// with inflow datum `psi = g`.
///
/// The flow `b = [cos(alpha), sin(alpha)]` is a constant unit vector. The
/// absorption is `sigma_in` strictly inside `omega_in` and `sigma_out`
/// elsewhere (points on the interface take the outer value; conforming meshes
/// never evaluate it there).
#[derive(Clone)]
pub struct Coefficients {
    pub b: [f64; 2],
    pub alpha: f64,
    pub sigma_in: f64,
    pub sigma_out: f64,
    pub omega_in: Rect,
    pub g: f64,
    source: Option<Source>,
}

impl fmt::Debug for Coefficients {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Coefficients")
            .field("alpha", &self.alpha)
            .field("sigma_in", &self.sigma_in)
            .field("sigma_out", &self.sigma_out)
            .field("g", &self.g)
            .field("has_source", &self.source.is_some())
            .finish()
    }
}

impl Coefficients {
    /// Flow angle `alpha` (radians), absorption inside/outside the inner
    /// square, zero source, inflow datum `g = 1`.
    pub fn new(alpha: f64, sigma_in: f64, sigma_out: f64) -> Result<Self> {
        if sigma_in < 0.0 || sigma_out < 0.0 {
            return Err(Error::InvalidArgument("absorption coefficients must be nonnegative".into()));
        }
        Ok(Self {
            b: [alpha.cos(), alpha.sin()],
            alpha,
            sigma_in,
            sigma_out,
            omega_in: INNER_SQUARE,
            g: 1.0,
            source: None,
        })
    }

    /// Uniform absorption `sigma` everywhere.
    pub fn uniform(alpha: f64, sigma: f64) -> Result<Self> {
        Self::new(alpha, sigma, sigma)
    }

    pub fn with_inflow_value(mut self, g: f64) -> Self {
        self.g = g;
        self
    }

    pub fn with_source<F>(mut self, r: F) -> Self
    where
        F: Fn(Point) -> f64 + Send + Sync + 'static,
    {
        self.source = Some(Arc::new(r));
        self
    }

    pub fn has_source(&self) -> bool {
        self.source.is_some()
    }

    /// Source value at a point; zero by default.
    pub fn source_at(&self, p: Point) -> f64 {
        match &self.source {
            Some(r) => r(p),
            None => 0.0,
        }
    }
}

/// Which of the two first-order operators acts: `L = b.grad + sigma I` or its
/// formal adjoint `L* = -b.grad + sigma I` (the flow is divergence free).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorSide {
    Primal,
    Adjoint,
}

/// Absorption coefficient at a point.
pub fn sigma_at(coeffs: &Coefficients, p: Point) -> f64 {
    if coeffs.omega_in.contains_strict(p) {
        coeffs.sigma_in
    } else {
        coeffs.sigma_out
    }
}

/// Applies `L` or `L*` to point data `(value, gradient)` of a function.
pub fn apply_operator(
    side: OperatorSide,
    coeffs: &Coefficients,
    value: f64,
    gradient: [f64; 2],
    p: Point,
) -> f64 {
    let advect = coeffs.b[0] * gradient[0] + coeffs.b[1] * gradient[1];
    let sigma = sigma_at(coeffs, p);
    match side {
        OperatorSide::Primal => advect + sigma * value,
        OperatorSide::Adjoint => -advect + sigma * value,
    }
}

/// Parameter interval (in backward arclength `s`) that the ray `p - s b`
/// spends inside the slab `lo < p[axis] - s b[axis] < hi`.
fn slab_interval(x: f64, bx: f64, lo: f64, hi: f64) -> Option<(f64, f64)> {
    if bx == 0.0 {
        if x > lo && x < hi {
            Some((f64::NEG_INFINITY, f64::INFINITY))
        } else {
            None
        }
    } else {
        let (a, b) = ((x - hi) / bx, (x - lo) / bx);
        Some(if a <= b { (a, b) } else { (b, a) })
    }
}

/// Exact solution of the model problem `b . grad(psi) + sigma psi = 0`,
/// `psi = g` on the inflow boundary, evaluated by backtracking the
/// characteristic through `p` and intersecting it with the absorbing square.
///
/// Valid only for zero source and the constant inflow datum stored in
/// `coeffs`; a configured source is rejected.
pub fn exact_solution(coeffs: &Coefficients, p: Point) -> Result<f64> {
    if coeffs.has_source() {
        return Err(Error::InvalidArgument(
            "the characteristic solution requires a zero source".into(),
        ));
    }
    let total = backward_exit_length(coeffs.b, p);
    let len_in = inner_path_length(coeffs, p, total);
    let len_out = (total - len_in).max(0.0);
    Ok(coeffs.g * (-coeffs.sigma_out * len_out - coeffs.sigma_in * len_in).exp())
}

/// Backward arclength from `p` to the domain boundary along `-b`.
pub fn backward_exit_length(b: [f64; 2], p: Point) -> f64 {
    let mut t = f64::INFINITY;
    for axis in 0..2 {
        if b[axis] > 0.0 {
            t = t.min(p[axis] / b[axis]);
        } else if b[axis] < 0.0 {
            t = t.min((p[axis] - 1.0) / b[axis]);
        }
    }
    t.max(0.0)
}

/// Arclength of the backtracked characteristic inside the absorbing square.
pub fn inner_path_length(coeffs: &Coefficients, p: Point, total: f64) -> f64 {
    let r = &coeffs.omega_in;
    let ix = slab_interval(p[0], coeffs.b[0], r.x0, r.x1);
    let iy = slab_interval(p[1], coeffs.b[1], r.y0, r.y1);
    match (ix, iy) {
        (Some((ax, bx)), Some((ay, by))) => {
            let lo = ax.max(ay).max(0.0);
            let hi = bx.min(by).min(total);
            (hi - lo).max(0.0)
        }
        _ => 0.0,
    }
}
