use std::cell::Cell;
use std::fmt;
use std::rc::Rc;

use ndarray::{concatenate, s, Array2, Axis, Zip};

pub type Matrix = Array2<f64>;

thread_local! {
    static NEXT_ID: Cell<u64> = const { Cell::new(0) };
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
}

fn next_id() -> u64 {
    NEXT_ID.with(|c| {
        let id = c.get();
        c.set(id + 1);
        id
    })
}

pub fn grad_enabled() -> bool {
    GRAD_ENABLED.with(|c| c.get())
}

/// Disables graph recording on this thread until dropped.
pub struct NoGradGuard {
    prev: bool,
}

impl Drop for NoGradGuard {
    fn drop(&mut self) {
        GRAD_ENABLED.with(|c| c.set(self.prev));
    }
}

pub fn no_grad() -> NoGradGuard {
    let prev = GRAD_ENABLED.with(|c| c.replace(false));
    NoGradGuard { prev }
}

pub(crate) fn set_grad_enabled(on: bool) -> NoGradGuard {
    let prev = GRAD_ENABLED.with(|c| c.replace(on));
    NoGradGuard { prev }
}

/// Index list shared between a gather and the scatter that undoes it.
pub type Index = Rc<[usize]>;

pub(crate) enum Op {
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    /// `zero_at_zero` maps 1/0 to 0 instead of infinity.
    Recip(Var, bool),
    MatMul(Var, Var),
    Transpose(Var),
    LeakyRelu(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Exp(Var),
    Ln(Var),
    Sqrt(Var),
    SumAll(Var),
    SumRows(Var),
    SumCols(Var),
    BroadcastRows(Var),
    BroadcastCols(Var),
    GatherRows(Var, Index),
    ScatterRows(Var, Index),
    Pick(Var, Index),
    Place(Var, Index),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize, usize),
    SliceRows(Var, usize, usize),
    StraightThrough(Var),
}

impl Op {
    pub(crate) fn parents(&self) -> Vec<&Var> {
        use Op::*;
        match self {
            Add(a, b) | Sub(a, b) | Mul(a, b) | MatMul(a, b) => vec![a, b],
            ConcatCols(v) | ConcatRows(v) => v.iter().collect(),
            Scale(a, _)
            | AddScalar(a)
            | Recip(a, _)
            | Transpose(a)
            | LeakyRelu(a, _)
            | Tanh(a)
            | Sigmoid(a)
            | Exp(a)
            | Ln(a)
            | Sqrt(a)
            | SumAll(a)
            | SumRows(a)
            | SumCols(a)
            | BroadcastRows(a)
            | BroadcastCols(a)
            | GatherRows(a, _)
            | ScatterRows(a, _)
            | Pick(a, _)
            | Place(a, _)
            | SliceCols(a, _, _)
            | SliceRows(a, _, _)
            | StraightThrough(a) => vec![a],
        }
    }

    fn into_parents(self) -> Vec<Var> {
        use Op::*;
        match self {
            Add(a, b) | Sub(a, b) | Mul(a, b) | MatMul(a, b) => vec![a, b],
            ConcatCols(v) | ConcatRows(v) => v,
            Scale(a, _)
            | AddScalar(a)
            | Recip(a, _)
            | Transpose(a)
            | LeakyRelu(a, _)
            | Tanh(a)
            | Sigmoid(a)
            | Exp(a)
            | Ln(a)
            | Sqrt(a)
            | SumAll(a)
            | SumRows(a)
            | SumCols(a)
            | BroadcastRows(a)
            | BroadcastCols(a)
            | GatherRows(a, _)
            | ScatterRows(a, _)
            | Pick(a, _)
            | Place(a, _)
            | SliceCols(a, _, _)
            | SliceRows(a, _, _)
            | StraightThrough(a) => vec![a],
        }
    }
}

pub(crate) struct Node {
    pub(crate) id: u64,
    pub(crate) value: Matrix,
    pub(crate) requires_grad: bool,
    pub(crate) op: Option<Op>,
}

impl Drop for Node {
    // Long chains would otherwise recurse once per node on drop.
    fn drop(&mut self) {
        let Some(op) = self.op.take() else { return };
        let mut stack = op.into_parents();
        while let Some(var) = stack.pop() {
            if let Ok(mut node) = Rc::try_unwrap(var.0) {
                if let Some(op) = node.op.take() {
                    stack.extend(op.into_parents());
                }
            }
        }
    }
}

/// A matrix-valued node in the recorded computation graph.
#[derive(Clone)]
pub struct Var(pub(crate) Rc<Node>);

impl fmt::Debug for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.0.id)
            .field("shape", &self.shape())
            .field("requires_grad", &self.0.requires_grad)
            .finish()
    }
}

impl Var {
    fn leaf(value: Matrix, requires_grad: bool) -> Var {
        Var(Rc::new(Node {
            id: next_id(),
            value,
            requires_grad,
            op: None,
        }))
    }

    /// A trainable leaf.
    pub fn param(value: Matrix) -> Var {
        Var::leaf(value, true)
    }

    pub fn constant(value: Matrix) -> Var {
        Var::leaf(value, false)
    }

    pub fn scalar_const(x: f64) -> Var {
        Var::constant(Array2::from_elem((1, 1), x))
    }

    pub fn zeros(rows: usize, cols: usize) -> Var {
        Var::constant(Array2::zeros((rows, cols)))
    }

    fn from_op(value: Matrix, op: Op) -> Var {
        let requires_grad = grad_enabled() && op.parents().iter().any(|p| p.requires_grad());
        Var(Rc::new(Node {
            id: next_id(),
            value,
            requires_grad,
            op: if requires_grad { Some(op) } else { None },
        }))
    }

    pub fn id(&self) -> u64 {
        self.0.id
    }

    pub fn value(&self) -> &Matrix {
        &self.0.value
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.value.dim()
    }

    pub fn rows(&self) -> usize {
        self.0.value.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.value.ncols()
    }

    /// Value of a 1×1 node.
    pub fn scalar(&self) -> f64 {
        assert_eq!(self.shape(), (1, 1), "scalar() on non-scalar Var");
        self.0.value[[0, 0]]
    }

    /// Same value, cut from the graph.
    pub fn detach(&self) -> Var {
        Var::constant(self.0.value.clone())
    }

    pub(crate) fn op(&self) -> Option<&Op> {
        self.0.op.as_ref()
    }

    fn same_shape(&self, other: &Var, what: &str) {
        assert_eq!(
            self.shape(),
            other.shape(),
            "{what}: shape mismatch {:?} vs {:?}",
            self.shape(),
            other.shape()
        );
    }

    pub fn add(&self, other: &Var) -> Var {
        self.same_shape(other, "add");
        Var::from_op(
            &self.0.value + &other.0.value,
            Op::Add(self.clone(), other.clone()),
        )
    }

    pub fn sub(&self, other: &Var) -> Var {
        self.same_shape(other, "sub");
        Var::from_op(
            &self.0.value - &other.0.value,
            Op::Sub(self.clone(), other.clone()),
        )
    }

    pub fn mul(&self, other: &Var) -> Var {
        self.same_shape(other, "mul");
        Var::from_op(
            &self.0.value * &other.0.value,
            Op::Mul(self.clone(), other.clone()),
        )
    }

    pub fn scale(&self, c: f64) -> Var {
        Var::from_op(&self.0.value * c, Op::Scale(self.clone(), c))
    }

    pub fn neg(&self) -> Var {
        self.scale(-1.0)
    }

    pub fn add_scalar(&self, c: f64) -> Var {
        Var::from_op(&self.0.value + c, Op::AddScalar(self.clone()))
    }

    pub fn recip(&self) -> Var {
        Var::from_op(
            self.0.value.mapv(|x| 1.0 / x),
            Op::Recip(self.clone(), false),
        )
    }

    /// Reciprocal with 1/0 defined as 0.
    pub fn recip_or_zero(&self) -> Var {
        Var::from_op(
            self.0.value.mapv(|x| if x == 0.0 { 0.0 } else { 1.0 / x }),
            Op::Recip(self.clone(), true),
        )
    }

    pub fn div(&self, other: &Var) -> Var {
        self.mul(&other.recip())
    }

    pub fn matmul(&self, other: &Var) -> Var {
        assert_eq!(
            self.cols(),
            other.rows(),
            "matmul: {:?} x {:?}",
            self.shape(),
            other.shape()
        );
        Var::from_op(
            self.0.value.dot(&other.0.value),
            Op::MatMul(self.clone(), other.clone()),
        )
    }

    pub fn t(&self) -> Var {
        Var::from_op(self.0.value.t().to_owned(), Op::Transpose(self.clone()))
    }

    pub fn leaky_relu(&self, slope: f64) -> Var {
        Var::from_op(
            self.0.value.mapv(|x| if x > 0.0 { x } else { slope * x }),
            Op::LeakyRelu(self.clone(), slope),
        )
    }

    pub fn tanh(&self) -> Var {
        Var::from_op(self.0.value.mapv(f64::tanh), Op::Tanh(self.clone()))
    }

    pub fn sigmoid(&self) -> Var {
        Var::from_op(self.0.value.mapv(sigmoid), Op::Sigmoid(self.clone()))
    }

    pub fn exp(&self) -> Var {
        Var::from_op(self.0.value.mapv(f64::exp), Op::Exp(self.clone()))
    }

    pub fn ln(&self) -> Var {
        Var::from_op(self.0.value.mapv(f64::ln), Op::Ln(self.clone()))
    }

    /// Elementwise square root; its derivative at 0 is taken as 0.
    pub fn sqrt(&self) -> Var {
        Var::from_op(self.0.value.mapv(f64::sqrt), Op::Sqrt(self.clone()))
    }

    pub fn square(&self) -> Var {
        self.mul(self)
    }

    pub fn sum(&self) -> Var {
        Var::from_op(
            Array2::from_elem((1, 1), self.0.value.sum()),
            Op::SumAll(self.clone()),
        )
    }

    pub fn mean(&self) -> Var {
        let n = self.0.value.len().max(1) as f64;
        self.sum().scale(1.0 / n)
    }

    /// Column sums as a 1×m row.
    pub fn sum_rows(&self) -> Var {
        let v = self.0.value.sum_axis(Axis(0)).insert_axis(Axis(0));
        Var::from_op(v, Op::SumRows(self.clone()))
    }

    /// Row sums as an n×1 column.
    pub fn sum_cols(&self) -> Var {
        let v = self.0.value.sum_axis(Axis(1)).insert_axis(Axis(1));
        Var::from_op(v, Op::SumCols(self.clone()))
    }

    /// Repeats a 1×m row n times.
    pub fn broadcast_rows(&self, n: usize) -> Var {
        assert_eq!(self.rows(), 1, "broadcast_rows needs a row vector");
        let v = self
            .0
            .value
            .broadcast((n, self.cols()))
            .expect("broadcast")
            .to_owned();
        Var::from_op(v, Op::BroadcastRows(self.clone()))
    }

    /// Repeats an n×1 column m times.
    pub fn broadcast_cols(&self, m: usize) -> Var {
        assert_eq!(self.cols(), 1, "broadcast_cols needs a column vector");
        let n = self.rows();
        let mut v = Array2::zeros((n, m));
        for (mut row, x) in v.rows_mut().into_iter().zip(self.0.value.iter()) {
            row.fill(*x);
        }
        Var::from_op(v, Op::BroadcastCols(self.clone()))
    }

    /// Adds a 1×m bias row to every row.
    pub fn add_row(&self, bias: &Var) -> Var {
        self.add(&bias.broadcast_rows(self.rows()))
    }

    /// Scales row i by `col[i]`.
    pub fn mul_col(&self, col: &Var) -> Var {
        self.mul(&col.broadcast_cols(self.cols()))
    }

    pub fn gather_rows(&self, idx: &Index) -> Var {
        let src = &self.0.value;
        let mut v = Array2::zeros((idx.len(), src.ncols()));
        for (mut row, &i) in v.rows_mut().into_iter().zip(idx.iter()) {
            row.assign(&src.row(i));
        }
        Var::from_op(v, Op::GatherRows(self.clone(), idx.clone()))
    }

    /// Row i of the input is added into row `idx[i]` of an `n`-row output.
    pub fn scatter_rows(&self, idx: &Index, n: usize) -> Var {
        assert_eq!(idx.len(), self.rows(), "scatter_rows: index length");
        let src = &self.0.value;
        let mut v = Array2::zeros((n, src.ncols()));
        for (row, &i) in src.rows().into_iter().zip(idx.iter()) {
            let mut dst = v.row_mut(i);
            dst += &row;
        }
        Var::from_op(v, Op::ScatterRows(self.clone(), idx.clone()))
    }

    /// Picks elements by row-major flat index into a matrix of `shape`.
    pub fn pick(&self, flat: &Index, shape: (usize, usize)) -> Var {
        assert_eq!(flat.len(), shape.0 * shape.1, "pick: index length");
        let src = self.0.value.as_standard_layout();
        let src = src.as_slice().expect("standard layout");
        let data: Vec<f64> = flat.iter().map(|&i| src[i]).collect();
        let v = Array2::from_shape_vec(shape, data).expect("shape");
        Var::from_op(v, Op::Pick(self.clone(), flat.clone()))
    }

    /// Adjoint of `pick`: accumulates elements into a zero matrix of `shape`.
    pub fn place(&self, flat: &Index, shape: (usize, usize)) -> Var {
        assert_eq!(flat.len(), self.0.value.len(), "place: index length");
        let mut out = vec![0.0; shape.0 * shape.1];
        for (x, &i) in self.0.value.iter().zip(flat.iter()) {
            out[i] += *x;
        }
        let v = Array2::from_shape_vec(shape, out).expect("shape");
        Var::from_op(v, Op::Place(self.clone(), flat.clone()))
    }

    pub fn concat_cols(parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let views: Vec<_> = parts.iter().map(|p| p.0.value.view()).collect();
        let v = concatenate(Axis(1), &views).expect("concat_cols: row counts differ");
        Var::from_op(v, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let views: Vec<_> = parts.iter().map(|p| p.0.value.view()).collect();
        let v = concatenate(Axis(0), &views).expect("concat_rows: column counts differ");
        Var::from_op(v, Op::ConcatRows(parts.to_vec()))
    }

    pub fn slice_cols(&self, start: usize, end: usize) -> Var {
        let v = self.0.value.slice(s![.., start..end]).to_owned();
        Var::from_op(v, Op::SliceCols(self.clone(), start, end))
    }

    pub fn slice_rows(&self, start: usize, end: usize) -> Var {
        let v = self.0.value.slice(s![start..end, ..]).to_owned();
        Var::from_op(v, Op::SliceRows(self.clone(), start, end))
    }

    /// Forward value `hard`, gradient passed to `self` unchanged.
    pub fn straight_through(&self, hard: Matrix) -> Var {
        assert_eq!(hard.dim(), self.shape(), "straight_through: shape");
        Var::from_op(hard, Op::StraightThrough(self.clone()))
    }

    /// Squared Frobenius norm as 1×1.
    pub fn sum_squares(&self) -> Var {
        self.square().sum()
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

macro_rules! bin_op {
    ($tr:ident, $m:ident, $f:ident) => {
        impl std::ops::$tr<&Var> for &Var {
            type Output = Var;
            fn $m(self, rhs: &Var) -> Var {
                self.$f(rhs)
            }
        }
        impl std::ops::$tr<Var> for Var {
            type Output = Var;
            fn $m(self, rhs: Var) -> Var {
                (&self).$f(&rhs)
            }
        }
    };
}

bin_op!(Add, add, add);
bin_op!(Sub, sub, sub);
bin_op!(Mul, mul, mul);

/// Elementwise derivative mask for leaky ReLU.
pub(crate) fn leaky_mask(x: &Matrix, slope: f64) -> Matrix {
    let mut m = Array2::zeros(x.dim());
    Zip::from(&mut m)
        .and(x)
        .for_each(|m, &x| *m = if x > 0.0 { 1.0 } else { slope });
    m
}
