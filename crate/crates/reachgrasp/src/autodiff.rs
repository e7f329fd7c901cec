//! Scalar reverse-mode automatic differentiation on a Wengert tape.
//!
//! The [`Real`] trait abstracts the scalar type so that kinematics and loss
//! code can be written once and instantiated either with plain `f64` (fast
//! evaluation, also the reference path for finite-difference checks) or with
//! tape-recorded [`Var`]s that yield exact gradients via [`Tape::backward`].
//!
//! Design notes:
//! - Constants are free: a [`Var`] holding a lifted constant records no tape
//!   node, so `R::lift(c) * x` costs one node, not two.
//! - Rotations are built from axis-angle vectors through the smooth helpers
//!   [`Real::sinc_sqrt`] and [`Real::versine_sqrt`] (functions of the squared
//!   angle), which keeps the map differentiable at the identity.
//! - `acos_clamped` returns a zero derivative once its argument is within
//!   `1e-12` of `±1`. Angle-type losses are exactly flat at their constructed
//!   minima instead of feeding NaN or huge subgradients into the optimizer.

use std::cell::RefCell;
use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::geometry::{Mat3, Vec3};

/// Squared-angle threshold below which the Taylor forms of `sinc_sqrt` and
/// `versine_sqrt` are used. The closed-form derivative of `versine_sqrt`
/// cancels catastrophically for small arguments (absolute error ~2e-16/t²),
/// while four Taylor terms truncate at ~t⁴/6e7; the two error curves cross
/// near 1e-2, where both sit at ~1e-14.
const SMALL_SQUARED_ANGLE: f64 = 1e-2;

/// Inputs within this distance of ±1 are treated as exactly ±1 by
/// `acos_clamped`'s derivative (flat region).
const ACOS_FLAT_BAND: f64 = 1e-12;

/// Scalar abstraction over `f64` and tape variables.
pub trait Real:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    /// Embed a constant. Constants carry no derivative.
    fn lift(x: f64) -> Self;
    /// Current numeric value.
    fn value(self) -> f64;
    fn sqrt(self) -> Self;
    fn tanh(self) -> Self;
    fn abs(self) -> Self;
    /// `max(0, -x)`: magnitude of the negative part, zero for `x >= 0`.
    fn neg_part(self) -> Self;
    /// `acos` with the argument clamped to `[-1, 1]`; derivative is zero in
    /// the flat band within `1e-12` of the endpoints.
    fn acos_clamped(self) -> Self;
    /// `sin(sqrt(t)) / sqrt(t)` as a smooth function of `t >= 0`.
    fn sinc_sqrt(self) -> Self;
    /// `(1 - cos(sqrt(t))) / t` as a smooth function of `t >= 0`.
    fn versine_sqrt(self) -> Self;

    /// Square, provided for readability.
    fn sq(self) -> Self {
        self * self
    }
    /// Multiply by an `f64` constant.
    fn scale(self, k: f64) -> Self {
        self * Self::lift(k)
    }
}

fn sinc_sqrt_value(t: f64) -> f64 {
    if t < SMALL_SQUARED_ANGLE {
        1.0 - t / 6.0 + t * t / 120.0 - t * t * t / 5040.0
    } else {
        let s = t.sqrt();
        s.sin() / s
    }
}

fn sinc_sqrt_derivative(t: f64) -> f64 {
    if t < SMALL_SQUARED_ANGLE {
        -1.0 / 6.0 + t / 60.0 - t * t / 1680.0 + t * t * t / 90720.0
    } else {
        let s = t.sqrt();
        (s * s.cos() - s.sin()) / (2.0 * s * s * s)
    }
}

fn versine_sqrt_value(t: f64) -> f64 {
    if t < SMALL_SQUARED_ANGLE {
        0.5 - t / 24.0 + t * t / 720.0 - t * t * t / 40320.0
    } else {
        let s = t.sqrt();
        (1.0 - s.cos()) / t
    }
}

fn versine_sqrt_derivative(t: f64) -> f64 {
    if t < SMALL_SQUARED_ANGLE {
        -1.0 / 24.0 + t / 360.0 - t * t / 13440.0 + t * t * t / 907_200.0
    } else {
        let s = t.sqrt();
        (0.5 * s * s.sin() - (1.0 - s.cos())) / (t * t)
    }
}

fn acos_clamped_value(x: f64) -> f64 {
    x.clamp(-1.0, 1.0).acos()
}

fn acos_clamped_derivative(x: f64) -> f64 {
    if x.abs() >= 1.0 - ACOS_FLAT_BAND {
        0.0
    } else {
        -1.0 / (1.0 - x * x).sqrt()
    }
}

impl Real for f64 {
    fn lift(x: f64) -> Self {
        x
    }
    fn value(self) -> f64 {
        self
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    fn abs(self) -> Self {
        f64::abs(self)
    }
    fn neg_part(self) -> Self {
        (-self).max(0.0)
    }
    fn acos_clamped(self) -> Self {
        acos_clamped_value(self)
    }
    fn sinc_sqrt(self) -> Self {
        sinc_sqrt_value(self)
    }
    fn versine_sqrt(self) -> Self {
        versine_sqrt_value(self)
    }
}

/// One recorded operation: up to two parents with local partial derivatives.
#[derive(Clone, Copy)]
struct Node {
    parent: [u32; 2],
    weight: [f64; 2],
}

/// Gradient tape. Create one per differentiation pass (or [`Tape::clear`] and
/// reuse the allocation), register leaves with [`Tape::var`], evaluate the
/// generic computation with those leaves, then call [`Tape::backward`].
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

impl Tape {
    pub fn new() -> Tape {
        Tape::default()
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Drop all nodes but keep the allocation for reuse.
    pub fn clear(&self) {
        self.nodes.borrow_mut().clear();
    }

    /// Register an independent variable (leaf).
    pub fn var(&self, value: f64) -> Var<'_> {
        let index = self.push(Node {
            parent: [0, 0],
            weight: [0.0, 0.0],
        });
        Var {
            tape: Some(self),
            index,
            val: value,
        }
    }

    fn push(&self, node: Node) -> u32 {
        let mut nodes = self.nodes.borrow_mut();
        let index = nodes.len();
        assert!(index < u32::MAX as usize, "tape overflow");
        nodes.push(node);
        index as u32
    }

    /// Reverse sweep seeding `d(of)/d(of) = 1`; returns all adjoints.
    pub fn backward(&self, of: Var<'_>) -> Gradients {
        let nodes = self.nodes.borrow();
        let mut adjoint = vec![0.0; nodes.len()];
        if let Some(index) = of.tracked_index() {
            adjoint[index as usize] = 1.0;
            for i in (0..nodes.len()).rev() {
                let a = adjoint[i];
                if a == 0.0 {
                    continue;
                }
                let node = nodes[i];
                adjoint[node.parent[0] as usize] += node.weight[0] * a;
                adjoint[node.parent[1] as usize] += node.weight[1] * a;
            }
        }
        Gradients { adjoint }
    }
}

/// Adjoints produced by [`Tape::backward`].
pub struct Gradients {
    adjoint: Vec<f64>,
}

impl Gradients {
    /// Partial derivative with respect to `v`; zero for constants.
    pub fn wrt(&self, v: Var<'_>) -> f64 {
        match v.tracked_index() {
            Some(index) => self.adjoint[index as usize],
            None => 0.0,
        }
    }
}

/// A scalar tracked on a [`Tape`], or an untracked constant.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: Option<&'t Tape>,
    index: u32,
    val: f64,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var({})", self.val)
    }
}

impl<'t> Var<'t> {
    fn tracked_index(self) -> Option<u32> {
        self.tape.map(|_| self.index)
    }

    fn constant(val: f64) -> Var<'t> {
        Var {
            tape: None,
            index: 0,
            val,
        }
    }

    fn unary(self, val: f64, weight: f64) -> Var<'t> {
        match self.tape {
            None => Var::constant(val),
            Some(tape) => {
                let index = tape.push(Node {
                    parent: [self.index, 0],
                    weight: [weight, 0.0],
                });
                Var {
                    tape: Some(tape),
                    index,
                    val,
                }
            }
        }
    }

    fn binary(self, other: Var<'t>, val: f64, wa: f64, wb: f64) -> Var<'t> {
        let tape = match (self.tape, other.tape) {
            (None, None) => return Var::constant(val),
            (Some(t), None) => t,
            (None, Some(t)) => t,
            (Some(a), Some(b)) => {
                debug_assert!(std::ptr::eq(a, b), "variables from different tapes");
                a
            }
        };
        // A constant parent gets weight zero pointing at node 0; the zero
        // weight makes the backward contribution vanish.
        let (p0, w0) = match self.tape {
            Some(_) => (self.index, wa),
            None => (0, 0.0),
        };
        let (p1, w1) = match other.tape {
            Some(_) => (other.index, wb),
            None => (0, 0.0),
        };
        let index = tape.push(Node {
            parent: [p0, p1],
            weight: [w0, w1],
        });
        Var {
            tape: Some(tape),
            index,
            val,
        }
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, o: Var<'t>) -> Var<'t> {
        self.binary(o, self.val + o.val, 1.0, 1.0)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, o: Var<'t>) -> Var<'t> {
        self.binary(o, self.val - o.val, 1.0, -1.0)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, o: Var<'t>) -> Var<'t> {
        self.binary(o, self.val * o.val, o.val, self.val)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, o: Var<'t>) -> Var<'t> {
        self.binary(o, self.val / o.val, 1.0 / o.val, -self.val / (o.val * o.val))
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.unary(-self.val, -1.0)
    }
}

impl<'t> Real for Var<'t> {
    fn lift(x: f64) -> Self {
        Var::constant(x)
    }
    fn value(self) -> f64 {
        self.val
    }
    fn sqrt(self) -> Self {
        let v = self.val.sqrt();
        let w = if self.val > 0.0 { 0.5 / v } else { 0.0 };
        self.unary(v, w)
    }
    fn tanh(self) -> Self {
        let v = self.val.tanh();
        self.unary(v, 1.0 - v * v)
    }
    fn abs(self) -> Self {
        self.unary(self.val.abs(), self.val.signum() * f64::from(self.val != 0.0))
    }
    fn neg_part(self) -> Self {
        let active = self.val < 0.0;
        self.unary(if active { -self.val } else { 0.0 }, if active { -1.0 } else { 0.0 })
    }
    fn acos_clamped(self) -> Self {
        self.unary(acos_clamped_value(self.val), acos_clamped_derivative(self.val))
    }
    fn sinc_sqrt(self) -> Self {
        self.unary(sinc_sqrt_value(self.val), sinc_sqrt_derivative(self.val))
    }
    fn versine_sqrt(self) -> Self {
        self.unary(versine_sqrt_value(self.val), versine_sqrt_derivative(self.val))
    }
}

/// 3-vector over a generic scalar.
#[derive(Debug, Clone, Copy)]
pub struct V3<R> {
    pub x: R,
    pub y: R,
    pub z: R,
}

impl<R: Real> V3<R> {
    pub fn new(x: R, y: R, z: R) -> V3<R> {
        V3 { x, y, z }
    }

    pub fn lift(v: Vec3) -> V3<R> {
        V3::new(R::lift(v.x), R::lift(v.y), R::lift(v.z))
    }

    pub fn zero() -> V3<R> {
        V3::lift(Vec3::ZERO)
    }

    pub fn value(self) -> Vec3 {
        Vec3::new(self.x.value(), self.y.value(), self.z.value())
    }

    pub fn dot(self, o: V3<R>) -> R {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: V3<R>) -> V3<R> {
        V3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm_sq(self) -> R {
        self.dot(self)
    }

    pub fn norm(self) -> R {
        self.norm_sq().sqrt()
    }

    pub fn scale(self, k: R) -> V3<R> {
        V3::new(self.x * k, self.y * k, self.z * k)
    }

    pub fn scale_f64(self, k: f64) -> V3<R> {
        self.scale(R::lift(k))
    }

    /// Unit vector; caller guarantees a norm bounded away from zero.
    pub fn normalized(self) -> V3<R> {
        let inv = R::lift(1.0) / self.norm();
        self.scale(inv)
    }

    pub fn distance_sq(self, o: V3<R>) -> R {
        (self - o).norm_sq()
    }
}

impl<R: Real> Add for V3<R> {
    type Output = V3<R>;
    fn add(self, o: V3<R>) -> V3<R> {
        V3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<R: Real> Sub for V3<R> {
    type Output = V3<R>;
    fn sub(self, o: V3<R>) -> V3<R> {
        V3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<R: Real> Neg for V3<R> {
    type Output = V3<R>;
    fn neg(self) -> V3<R> {
        V3::new(-self.x, -self.y, -self.z)
    }
}

/// 3x3 matrix over a generic scalar, row-major.
#[derive(Debug, Clone, Copy)]
pub struct M3<R>(pub [[R; 3]; 3]);

impl<R: Real> M3<R> {
    pub fn identity() -> M3<R> {
        M3::lift(&Mat3::identity())
    }

    pub fn lift(m: &Mat3) -> M3<R> {
        let a = &m.0;
        M3([
            [R::lift(a[0][0]), R::lift(a[0][1]), R::lift(a[0][2])],
            [R::lift(a[1][0]), R::lift(a[1][1]), R::lift(a[1][2])],
            [R::lift(a[2][0]), R::lift(a[2][1]), R::lift(a[2][2])],
        ])
    }

    pub fn value(&self) -> Mat3 {
        let a = &self.0;
        Mat3([
            [a[0][0].value(), a[0][1].value(), a[0][2].value()],
            [a[1][0].value(), a[1][1].value(), a[1][2].value()],
            [a[2][0].value(), a[2][1].value(), a[2][2].value()],
        ])
    }

    pub fn mul_vec(&self, v: V3<R>) -> V3<R> {
        let a = &self.0;
        V3::new(
            a[0][0] * v.x + a[0][1] * v.y + a[0][2] * v.z,
            a[1][0] * v.x + a[1][1] * v.y + a[1][2] * v.z,
            a[2][0] * v.x + a[2][1] * v.y + a[2][2] * v.z,
        )
    }

    pub fn mul_mat(&self, o: &M3<R>) -> M3<R> {
        let a = &self.0;
        let b = &o.0;
        let mut out = [[R::lift(0.0); 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
            }
        }
        M3(out)
    }

    /// Rodrigues rotation from an (unnormalized) axis-angle vector, smooth at
    /// the identity: `R = I + sinc(θ)·K + versine(θ)/θ²·K²` with `K = [w]×`.
    pub fn from_axis_angle(w: V3<R>) -> M3<R> {
        let t = w.norm_sq();
        let a = t.sinc_sqrt();
        let b = t.versine_sqrt();
        let one = R::lift(1.0);
        let (x, y, z) = (w.x, w.y, w.z);
        let (xx, yy, zz) = (x * x, y * y, z * z);
        let (xy, xz, yz) = (x * y, x * z, y * z);
        M3([
            [one - b * (yy + zz), b * xy - a * z, b * xz + a * y],
            [b * xy + a * z, one - b * (xx + zz), b * yz - a * x],
            [b * xz - a * y, b * yz + a * x, one - b * (xx + yy)],
        ])
    }
}

/// A scalar-valued function of a flat parameter vector, generic over the
/// scalar type, used by the finite-difference gradient harness.
pub trait ScalarFn {
    fn eval<R: Real>(&self, x: &[R]) -> R;
}

/// Outcome of one gradient comparison.
#[derive(Debug, Clone, Copy)]
pub struct FdReport {
    /// Largest `|analytic - fd|` over components.
    pub max_abs_err: f64,
    /// Largest `|analytic - fd| / max(|analytic|, |fd|)` over components with
    /// a denominator above the absolute floor.
    pub max_rel_err: f64,
    /// Index of the worst component by the pass criterion.
    pub worst_index: usize,
    /// Analytic and finite-difference values at the worst component.
    pub worst_pair: (f64, f64),
}

impl FdReport {
    /// Pass criterion: `|a - fd| <= rel_tol·max(|a|, |fd|) + abs_floor`.
    pub fn passes(&self, rel_tol: f64, abs_floor: f64) -> bool {
        let (a, fd) = self.worst_pair;
        (a - fd).abs() <= rel_tol * a.abs().max(fd.abs()) + abs_floor
    }
}

/// Compare the tape gradient of `f` against central finite differences of the
/// `f64` instantiation at `x`.
pub fn check_gradient<F: ScalarFn>(f: &F, x: &[f64], step: f64) -> FdReport {
    let tape = Tape::new();
    let vars: Vec<Var<'_>> = x.iter().map(|&v| tape.var(v)).collect();
    let out = f.eval(&vars);
    let grads = tape.backward(out);
    let analytic: Vec<f64> = vars.iter().map(|v| grads.wrt(*v)).collect();

    let mut report = FdReport {
        max_abs_err: 0.0,
        max_rel_err: 0.0,
        worst_index: 0,
        worst_pair: (0.0, 0.0),
    };
    let mut worst_excess = -1.0;
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + step;
        let hi: f64 = f.eval(&probe);
        probe[i] = x[i] - step;
        let lo: f64 = f.eval(&probe);
        probe[i] = x[i];
        let fd = (hi - lo) / (2.0 * step);
        let a = analytic[i];
        let abs_err = (a - fd).abs();
        let denom = a.abs().max(fd.abs());
        report.max_abs_err = report.max_abs_err.max(abs_err);
        if denom > 1e-12 {
            report.max_rel_err = report.max_rel_err.max(abs_err / denom);
        }
        // Track the component that is closest to violating the pass
        // criterion, normalizing by the mixed tolerance.
        let excess = abs_err / (denom + 1e-7);
        if excess > worst_excess {
            worst_excess = excess;
            report.worst_index = i;
            report.worst_pair = (a, fd);
        }
    }
    report
}
