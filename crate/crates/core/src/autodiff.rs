//! Tape-based reverse-mode automatic differentiation over scalars.
//!
//! Every arithmetic operation on a [`Var`] appends a [`Node`] to its
//! [`Tape`]. Nodes only ever reference earlier nodes, so the tape is a
//! topological order of the expression graph and [`Tape::backward`] is a
//! single reverse sweep.
//!
//! ```
//! use stlgame::autodiff::Tape;
//!
//! let tape = Tape::new();
//! let x = tape.lift(2.0).unwrap();
//! let y = tape.lift(3.0).unwrap();
//! let z = x * y + x;
//! let grads = tape.backward(z);
//! assert_eq!(z.value(), 8.0);
//! assert_eq!(grads.wrt(x), 4.0);
//! assert_eq!(grads.wrt(y), 2.0);
//! ```
//!
//! Non-smooth operations (`min`, `max`, `abs`, `clamp`) use a fixed
//! subgradient: on ties the whole adjoint flows to the left operand, and
//! `abs` at zero has slope `+1`.

use std::cell::RefCell;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use thiserror::Error;

/// Default negative slope of the leaky rectifier.
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdError {
    #[error("non-finite value {0} cannot be placed on the tape")]
    NonFinite(f64),
    #[error("division by zero")]
    DivisionByZero,
    #[error("operands belong to different tapes")]
    MixedTapes,
    #[error("operation {0:?} expects {1} operand(s)")]
    Arity(Op, usize),
}

/// Operation recorded in a tape node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Op {
    /// Leaf: a lifted constant or an independent variable.
    Constant,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Min,
    Max,
    Abs,
    Tanh,
    LeakyRelu(f64),
    Sin,
    Cos,
    Exp,
    PowConst(f64),
}

impl Op {
    pub fn arity(self) -> usize {
        match self {
            Op::Constant => 0,
            Op::Add | Op::Sub | Op::Mul | Op::Div | Op::Min | Op::Max => 2,
            _ => 1,
        }
    }

    /// Forward rule. `b` is ignored by unary operations.
    fn eval(self, a: f64, b: f64) -> f64 {
        match self {
            Op::Constant => a,
            Op::Add => a + b,
            Op::Sub => a - b,
            Op::Mul => a * b,
            Op::Div => a / b,
            Op::Neg => -a,
            Op::Min => min_left(a, b),
            Op::Max => max_left(a, b),
            Op::Abs => a.abs(),
            Op::Tanh => a.tanh(),
            Op::LeakyRelu(slope) => leaky_relu(a, slope),
            Op::Sin => a.sin(),
            Op::Cos => a.cos(),
            Op::Exp => a.exp(),
            Op::PowConst(p) => a.powf(p),
        }
    }

    /// Local partial derivatives `(d/da, d/db)` at the recorded point.
    fn partials(self, a: f64, b: f64, out: f64) -> (f64, f64) {
        match self {
            Op::Constant => (0.0, 0.0),
            Op::Add => (1.0, 1.0),
            Op::Sub => (1.0, -1.0),
            Op::Mul => (b, a),
            Op::Div => (1.0 / b, -a / (b * b)),
            Op::Neg => (-1.0, 0.0),
            Op::Min => {
                if a <= b {
                    (1.0, 0.0)
                } else {
                    (0.0, 1.0)
                }
            }
            Op::Max => {
                if a >= b {
                    (1.0, 0.0)
                } else {
                    (0.0, 1.0)
                }
            }
            Op::Abs => (if a >= 0.0 { 1.0 } else { -1.0 }, 0.0),
            Op::Tanh => (1.0 - out * out, 0.0),
            Op::LeakyRelu(slope) => (if a >= 0.0 { 1.0 } else { slope }, 0.0),
            Op::Sin => (a.cos(), 0.0),
            Op::Cos => (-a.sin(), 0.0),
            Op::Exp => (out, 0.0),
            Op::PowConst(p) => (p * a.powf(p - 1.0), 0.0),
        }
    }
}

/// Minimum that returns the left operand on ties.
#[inline]
pub fn min_left(a: f64, b: f64) -> f64 {
    if a <= b {
        a
    } else {
        b
    }
}

/// Maximum that returns the left operand on ties.
#[inline]
pub fn max_left(a: f64, b: f64) -> f64 {
    if a >= b {
        a
    } else {
        b
    }
}

#[inline]
pub fn leaky_relu(x: f64, slope: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        slope * x
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub op: Op,
    pub parents: [u32; 2],
    pub value: f64,
}

/// Append-only record of scalar operations.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tape").field("len", &self.len()).finish()
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: u32,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var#{}({})", self.id, self.value())
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        Self {
            nodes: RefCell::new(Vec::with_capacity(n)),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Snapshot of the recorded nodes.
    pub fn nodes(&self) -> Vec<Node> {
        self.nodes.borrow().clone()
    }

    fn push(&self, op: Op, parents: [u32; 2], value: f64) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let id = u32::try_from(nodes.len()).expect("tape exceeds u32 nodes");
        nodes.push(Node { op, parents, value });
        Var { tape: self, id }
    }

    /// Places a constant (or independent variable) on the tape.
    pub fn lift(&self, x: f64) -> Result<Var<'_>, AdError> {
        if !x.is_finite() {
            return Err(AdError::NonFinite(x));
        }
        Ok(self.push(Op::Constant, [0, 0], x))
    }

    /// Lifts every element of `xs`.
    pub fn lift_all(&self, xs: &[f64]) -> Result<Vec<Var<'_>>, AdError> {
        xs.iter().map(|&x| self.lift(x)).collect()
    }

    fn value_of(&self, id: u32) -> f64 {
        self.nodes.borrow()[id as usize].value
    }

    /// Checked application of `op`. Binary operations require `b`.
    pub fn apply<'t>(
        &'t self,
        op: Op,
        a: Var<'t>,
        b: Option<Var<'t>>,
    ) -> Result<Var<'t>, AdError> {
        if !std::ptr::eq(a.tape, self) || b.is_some_and(|b| !std::ptr::eq(b.tape, self)) {
            return Err(AdError::MixedTapes);
        }
        match (op.arity(), b) {
            (0, _) => Err(AdError::Arity(op, 0)),
            (1, None) => Ok(self.unary(op, a)),
            (2, Some(b)) => {
                if op == Op::Div && b.value() == 0.0 {
                    return Err(AdError::DivisionByZero);
                }
                Ok(self.binary(op, a, b))
            }
            (n, _) => Err(AdError::Arity(op, n)),
        }
    }

    fn unary(&self, op: Op, a: Var<'_>) -> Var<'_> {
        let value = op.eval(self.value_of(a.id), 0.0);
        self.push(op, [a.id, a.id], value)
    }

    fn binary(&self, op: Op, a: Var<'_>, b: Var<'_>) -> Var<'_> {
        let value = op.eval(self.value_of(a.id), self.value_of(b.id));
        self.push(op, [a.id, b.id], value)
    }

    /// Reverse sweep from `root`; `adjoint(root) = 1`.
    pub fn backward(&self, root: Var<'_>) -> Gradients {
        assert!(std::ptr::eq(root.tape, self), "root belongs to another tape");
        let nodes = self.nodes.borrow();
        let mut adj = vec![0.0; nodes.len()];
        adj[root.id as usize] = 1.0;
        for i in (0..=root.id as usize).rev() {
            let g = adj[i];
            if g == 0.0 {
                continue;
            }
            let node = &nodes[i];
            let arity = node.op.arity();
            if arity == 0 {
                continue;
            }
            let [pa, pb] = node.parents;
            let a = nodes[pa as usize].value;
            let b = if arity == 2 { nodes[pb as usize].value } else { 0.0 };
            let (da, db) = node.op.partials(a, b, node.value);
            adj[pa as usize] += g * da;
            if arity == 2 {
                adj[pb as usize] += g * db;
            }
        }
        Gradients { adjoints: adj }
    }

    /// Recomputes every non-leaf value from its parents.
    pub fn replay(&self) -> Vec<f64> {
        let nodes = self.nodes.borrow();
        let mut values: Vec<f64> = Vec::with_capacity(nodes.len());
        for node in nodes.iter() {
            let v = match node.op {
                Op::Constant => node.value,
                op => {
                    let a = values[node.parents[0] as usize];
                    let b = values[node.parents[1] as usize];
                    op.eval(a, b)
                }
            };
            values.push(v);
        }
        values
    }
}

/// Adjoints produced by [`Tape::backward`], indexed by node id.
#[derive(Debug, Clone)]
pub struct Gradients {
    adjoints: Vec<f64>,
}

impl Gradients {
    pub fn wrt(&self, v: Var<'_>) -> f64 {
        self.adjoints.get(v.id as usize).copied().unwrap_or(0.0)
    }

    pub fn wrt_all(&self, vs: &[Var<'_>]) -> Vec<f64> {
        vs.iter().map(|&v| self.wrt(v)).collect()
    }

    pub fn by_id(&self, id: usize) -> f64 {
        self.adjoints.get(id).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.adjoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjoints.is_empty()
    }
}

impl<'t> Var<'t> {
    pub fn value(&self) -> f64 {
        self.tape.value_of(self.id)
    }

    pub fn id(&self) -> usize {
        self.id as usize
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    fn check(self, other: Var<'t>) {
        assert!(
            std::ptr::eq(self.tape, other.tape),
            "operands belong to different tapes"
        );
    }

    fn bin(self, op: Op, other: Var<'t>) -> Var<'t> {
        self.check(other);
        self.tape.binary(op, self, other)
    }

    fn un(self, op: Op) -> Var<'t> {
        self.tape.unary(op, self)
    }

    fn konst(self, c: f64) -> Var<'t> {
        self.tape.push(Op::Constant, [0, 0], c)
    }
}

macro_rules! var_binop {
    ($tr:ident, $method:ident, $op:expr) => {
        impl<'t> $tr for Var<'t> {
            type Output = Var<'t>;
            fn $method(self, rhs: Var<'t>) -> Var<'t> {
                self.bin($op, rhs)
            }
        }
        impl<'t> $tr<f64> for Var<'t> {
            type Output = Var<'t>;
            fn $method(self, rhs: f64) -> Var<'t> {
                let c = self.konst(rhs);
                self.bin($op, c)
            }
        }
    };
}

var_binop!(Add, add, Op::Add);
var_binop!(Sub, sub, Op::Sub);
var_binop!(Mul, mul, Op::Mul);
var_binop!(Div, div, Op::Div);

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.un(Op::Neg)
    }
}

/// Scalar arithmetic shared by plain `f64` evaluation and tape recording.
///
/// Generic code written against this trait produces bit-identical forward
/// values for both implementations.
pub trait Scalar:
    Copy
    + fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn value(&self) -> f64;
    /// A constant living in the same context as `self`.
    fn constant_like(&self, c: f64) -> Self;
    fn min2(self, other: Self) -> Self;
    fn max2(self, other: Self) -> Self;
    fn abs(self) -> Self;
    fn tanh(self) -> Self;
    fn leaky_relu(self, slope: f64) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn exp(self) -> Self;
    fn powc(self, p: f64) -> Self;

    /// `min(max(self, lo), hi)`.
    fn clamp_to(self, lo: f64, hi: f64) -> Self {
        let lo = self.constant_like(lo);
        let hi = self.constant_like(hi);
        self.max2(lo).min2(hi)
    }
}

impl Scalar for f64 {
    fn value(&self) -> f64 {
        *self
    }
    fn constant_like(&self, c: f64) -> Self {
        c
    }
    fn min2(self, other: Self) -> Self {
        min_left(self, other)
    }
    fn max2(self, other: Self) -> Self {
        max_left(self, other)
    }
    fn abs(self) -> Self {
        f64::abs(self)
    }
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    fn leaky_relu(self, slope: f64) -> Self {
        leaky_relu(self, slope)
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn powc(self, p: f64) -> Self {
        self.powf(p)
    }
}

impl<'t> Scalar for Var<'t> {
    fn value(&self) -> f64 {
        Var::value(self)
    }
    fn constant_like(&self, c: f64) -> Self {
        self.konst(c)
    }
    fn min2(self, other: Self) -> Self {
        self.bin(Op::Min, other)
    }
    fn max2(self, other: Self) -> Self {
        self.bin(Op::Max, other)
    }
    fn abs(self) -> Self {
        self.un(Op::Abs)
    }
    fn tanh(self) -> Self {
        self.un(Op::Tanh)
    }
    fn leaky_relu(self, slope: f64) -> Self {
        self.un(Op::LeakyRelu(slope))
    }
    fn sin(self) -> Self {
        self.un(Op::Sin)
    }
    fn cos(self) -> Self {
        self.un(Op::Cos)
    }
    fn exp(self) -> Self {
        self.un(Op::Exp)
    }
    fn powc(self, p: f64) -> Self {
        self.un(Op::PowConst(p))
    }
}

/// Central finite-difference gradient of `f` at `x`.
pub fn finite_difference<F>(f: F, x: &[f64], step: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + step;
            let up = f(&probe);
            probe[i] = orig - step;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * step)
        })
        .collect()
}
