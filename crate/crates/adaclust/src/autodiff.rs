//! Reverse-mode differentiation over a scalar computation tape.
//!
//! The tape records every primitive operation together with its local
//! partial derivatives, evaluated eagerly during the forward pass. A single
//! reverse sweep then accumulates adjoints in topological order (which the
//! append-only construction guarantees).
//!
//! Model code is written once, generically over [`Scalar`], and instantiated
//! with plain `f64` (no tape, used for evaluation) or with [`Var`] (taped,
//! used for training). Both instantiations execute the identical sequence of
//! floating-point operations, so their results agree bit for bit.

use std::cell::RefCell;
use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::error::{Error, Result};
use crate::linalg::{ActivationKind, Matrix};

/// Primitive operations the tape understands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    Input,
    Const,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Exp,
    Ln,
    Max,
    Activation,
    Scale,
    AddConst,
}

#[derive(Debug, Clone, Copy)]
struct Node {
    kind: OpKind,
    parent0: u32,
    weight0: f64,
    parent1: u32,
    weight1: f64,
}

#[derive(Debug, Default)]
struct TapeInner {
    nodes: Vec<Node>,
    values: Vec<f64>,
    /// First domain violation (node index, op name), if any.
    fault: Option<(usize, &'static str)>,
    /// Smallest |argument| seen at any kinked primitive (activation, max).
    kink_margin: f64,
    loss: Option<u32>,
}

/// Append-only record of a scalar computation.
#[derive(Debug)]
pub struct Tape {
    inner: RefCell<TapeInner>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            inner: RefCell::new(TapeInner { kink_margin: f64::INFINITY, ..Default::default() }),
        }
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, kind: OpKind, value: f64, parents: [(u32, f64); 2]) -> Var<'_> {
        let mut inner = self.inner.borrow_mut();
        let idx = inner.nodes.len() as u32;
        inner.nodes.push(Node {
            kind,
            parent0: parents[0].0,
            weight0: parents[0].1,
            parent1: parents[1].0,
            weight1: parents[1].1,
        });
        inner.values.push(value);
        drop(inner);
        Var { tape: self, idx, value }
    }

    fn push_leaf(&self, kind: OpKind, value: f64) -> Var<'_> {
        let idx = self.inner.borrow().nodes.len() as u32;
        self.push(kind, value, [(idx, 0.0), (idx, 0.0)])
    }

    fn record_fault(&self, idx: u32, op: &'static str) {
        let mut inner = self.inner.borrow_mut();
        if inner.fault.is_none() {
            inner.fault = Some((idx as usize, op));
        }
    }

    fn record_kink(&self, margin: f64) {
        let mut inner = self.inner.borrow_mut();
        if margin < inner.kink_margin {
            inner.kink_margin = margin;
        }
    }

    /// Registers a differentiable leaf (a parameter or data value).
    pub fn input(&self, value: f64) -> Var<'_> {
        self.push_leaf(OpKind::Input, value)
    }

    /// Registers a constant leaf; its adjoint is discarded.
    pub fn constant(&self, value: f64) -> Var<'_> {
        self.push_leaf(OpKind::Const, value)
    }

    /// Smallest |argument| observed at a kinked primitive during the forward
    /// pass; infinite when no kinked primitive was evaluated.
    pub fn kink_margin(&self) -> f64 {
        self.inner.borrow().kink_margin
    }

    fn mark_loss(&self, var: Var<'_>) {
        self.inner.borrow_mut().loss = Some(var.idx);
    }

    fn check_fault(&self) -> Result<()> {
        if let Some((node, op)) = self.inner.borrow().fault {
            return Err(Error::TapeDomain { node, op });
        }
        Ok(())
    }
}

/// Handle to one tape node. Cheap to copy; all arithmetic on it is recorded.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    idx: u32,
    value: f64,
}

impl<'t> Var<'t> {
    pub fn index(self) -> usize {
        self.idx as usize
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        self.tape.push(
            OpKind::Add,
            self.value + rhs.value,
            [(self.idx, 1.0), (rhs.idx, 1.0)],
        )
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        self.tape.push(
            OpKind::Sub,
            self.value - rhs.value,
            [(self.idx, 1.0), (rhs.idx, -1.0)],
        )
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        self.tape.push(
            OpKind::Mul,
            self.value * rhs.value,
            [(self.idx, rhs.value), (rhs.idx, self.value)],
        )
    }
}

impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: Var<'t>) -> Var<'t> {
        let value = self.value / rhs.value;
        let out = self.tape.push(
            OpKind::Div,
            value,
            [
                (self.idx, 1.0 / rhs.value),
                (rhs.idx, -self.value / (rhs.value * rhs.value)),
            ],
        );
        if rhs.value == 0.0 {
            self.tape.record_fault(out.idx, "div");
        }
        out
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.tape.push(OpKind::Neg, -self.value, [(self.idx, -1.0), (self.idx, 0.0)])
    }
}

/// One scalar value in a computation that can run either on the tape or on
/// plain floats. See the module docs.
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    /// Current numeric value (used for branching decisions, never recorded).
    fn value(self) -> f64;
    /// A constant in the same computation context as `self`.
    fn lit(self, x: f64) -> Self;
    fn scale(self, c: f64) -> Self;
    fn add_const(self, c: f64) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn max(self, other: Self) -> Self;
    fn activate(self, kind: ActivationKind) -> Self;
}

impl Scalar for f64 {
    #[inline]
    fn value(self) -> f64 {
        self
    }
    #[inline]
    fn lit(self, x: f64) -> f64 {
        x
    }
    #[inline]
    fn scale(self, c: f64) -> f64 {
        self * c
    }
    #[inline]
    fn add_const(self, c: f64) -> f64 {
        self + c
    }
    #[inline]
    fn exp(self) -> f64 {
        f64::exp(self)
    }
    #[inline]
    fn ln(self) -> f64 {
        f64::ln(self)
    }
    #[inline]
    fn max(self, other: f64) -> f64 {
        if self >= other {
            self
        } else {
            other
        }
    }
    #[inline]
    fn activate(self, kind: ActivationKind) -> f64 {
        kind.apply(self)
    }
}

impl<'t> Scalar for Var<'t> {
    fn value(self) -> f64 {
        self.value
    }

    fn lit(self, x: f64) -> Var<'t> {
        self.tape.constant(x)
    }

    fn scale(self, c: f64) -> Var<'t> {
        self.tape
            .push(OpKind::Scale, self.value * c, [(self.idx, c), (self.idx, 0.0)])
    }

    fn add_const(self, c: f64) -> Var<'t> {
        self.tape
            .push(OpKind::AddConst, self.value + c, [(self.idx, 1.0), (self.idx, 0.0)])
    }

    fn exp(self) -> Var<'t> {
        let value = self.value.exp();
        self.tape
            .push(OpKind::Exp, value, [(self.idx, value), (self.idx, 0.0)])
    }

    fn ln(self) -> Var<'t> {
        let out = self.tape.push(
            OpKind::Ln,
            self.value.ln(),
            [(self.idx, 1.0 / self.value), (self.idx, 0.0)],
        );
        if self.value <= 0.0 {
            self.tape.record_fault(out.idx, "ln");
        }
        out
    }

    fn max(self, other: Var<'t>) -> Var<'t> {
        self.tape.record_kink((self.value - other.value).abs());
        let (value, w0, w1) = if self.value >= other.value {
            (self.value, 1.0, 0.0)
        } else {
            (other.value, 0.0, 1.0)
        };
        self.tape
            .push(OpKind::Max, value, [(self.idx, w0), (other.idx, w1)])
    }

    fn activate(self, kind: ActivationKind) -> Var<'t> {
        if !matches!(kind, ActivationKind::Identity) {
            self.tape.record_kink(self.value.abs());
        }
        self.tape.push(
            OpKind::Activation,
            kind.apply(self.value),
            [(self.idx, kind.derivative(self.value)), (self.idx, 0.0)],
        )
    }
}

/// Runs a graph-building closure on a fresh tape and marks its result as the
/// loss. Fails if any primitive hit an invalid operand.
pub fn forward<F>(build: F) -> Result<(f64, Tape)>
where
    F: for<'t> FnOnce(&'t Tape) -> Result<Var<'t>>,
{
    let tape = Tape::new();
    let loss = {
        let var = build(&tape)?;
        tape.mark_loss(var);
        var.value
    };
    tape.check_fault()?;
    Ok((loss, tape))
}

/// Reverse sweep: adjoints of the recorded loss with respect to every node.
pub fn backward(tape: &Tape) -> Result<Vec<f64>> {
    let inner = tape.inner.borrow();
    let loss = inner
        .loss
        .ok_or(Error::TapeState("backward called before forward recorded a loss"))?;
    let mut adjoints = vec![0.0; inner.nodes.len()];
    adjoints[loss as usize] = 1.0;
    for i in (0..inner.nodes.len()).rev() {
        let a = adjoints[i];
        if a == 0.0 {
            continue;
        }
        let node = inner.nodes[i];
        match node.kind {
            OpKind::Input | OpKind::Const => {}
            _ => {
                adjoints[node.parent0 as usize] += node.weight0 * a;
                if node.weight1 != 0.0 {
                    adjoints[node.parent1 as usize] += node.weight1 * a;
                }
            }
        }
    }
    Ok(adjoints)
}

/// Named view of one parameter block's tape indices.
#[derive(Debug, Clone)]
pub struct ParamBlock {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub indices: Vec<usize>,
}

/// Per-parameter gradients gathered from a reverse sweep.
#[derive(Debug, Clone)]
pub struct GradientReport {
    pub segments: Vec<(String, Matrix)>,
    pub max_abs_gradient: f64,
}

impl GradientReport {
    pub fn from_adjoints(adjoints: &[f64], blocks: &[ParamBlock]) -> Result<Self> {
        let mut segments = Vec::with_capacity(blocks.len());
        let mut max_abs: f64 = 0.0;
        for block in blocks {
            let values: Vec<f64> = block.indices.iter().map(|&i| adjoints[i]).collect();
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical {
                    detail: format!("non-finite gradient in `{}`", block.name),
                    iteration: None,
                });
            }
            max_abs = values.iter().fold(max_abs, |m, v| m.max(v.abs()));
            segments.push((block.name.clone(), Matrix::from_vec(block.rows, block.cols, values)?));
        }
        Ok(GradientReport { segments, max_abs_gradient: max_abs })
    }

    pub fn segment(&self, name: &str) -> Option<&Matrix> {
        self.segments.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    /// Gradients flattened in segment order.
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (_, m) in &self.segments {
            out.extend_from_slice(m.data());
        }
        out
    }
}

/// One loss evaluation for the derivative checker.
#[derive(Debug, Clone, Copy)]
pub struct FdEval {
    pub loss: f64,
    /// Smallest |argument| at any kinked primitive during this evaluation.
    pub kink_margin: f64,
}

/// Outcome of a finite-difference comparison.
#[derive(Debug, Clone, Copy)]
pub struct FdOutcome {
    pub max_rel_error: f64,
    pub checked: usize,
    pub skipped: usize,
}

/// Compares an analytic gradient against central finite differences.
///
/// Coordinates whose perturbed evaluations come within `kink_tol` of a kink
/// (ReLU/LeakyReLU/max argument near zero) are skipped: the difference
/// quotient is meaningless across a kink. Relative error is measured against
/// `max(|analytic|, |numeric|, 1e-8)`.
pub fn finite_diff_check<F>(
    mut eval: F,
    params: &[f64],
    analytic: &[f64],
    h: f64,
    kink_tol: f64,
) -> Result<FdOutcome>
where
    F: FnMut(&[f64]) -> Result<FdEval>,
{
    if !(h > 0.0) {
        return Err(Error::InvalidParameter {
            name: "h",
            detail: format!("step must be positive, got {h}"),
        });
    }
    if params.len() != analytic.len() {
        return Err(Error::Shape {
            context: "finite_diff_check",
            detail: format!("{} params vs {} gradient entries", params.len(), analytic.len()),
        });
    }
    let base = eval(params)?;
    if !base.loss.is_finite() {
        return Err(Error::Evaluation("loss is non-finite at the base point".to_string()));
    }
    let mut work = params.to_vec();
    let mut max_rel: f64 = 0.0;
    let mut checked = 0;
    let mut skipped = 0;
    for i in 0..params.len() {
        work[i] = params[i] + h;
        let plus = eval(&work)?;
        work[i] = params[i] - h;
        let minus = eval(&work)?;
        work[i] = params[i];
        if !plus.loss.is_finite() || !minus.loss.is_finite() {
            return Err(Error::Evaluation(format!(
                "loss is non-finite at a perturbation of coordinate {i}"
            )));
        }
        let margin = base.kink_margin.min(plus.kink_margin).min(minus.kink_margin);
        if margin < kink_tol {
            skipped += 1;
            continue;
        }
        let numeric = (plus.loss - minus.loss) / (2.0 * h);
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-8);
        max_rel = max_rel.max((analytic[i] - numeric).abs() / denom);
        checked += 1;
    }
    Ok(FdOutcome { max_rel_error: max_rel, checked, skipped })
}
