use std::collections::{HashMap, HashSet};

use ndarray::Array2;

use crate::var::{leaky_mask, set_grad_enabled, Op, Var};

/// Gradients of `output` (any shape, seeded with ones) with respect to `wrt`.
///
/// With `create_graph` the returned gradients are themselves recorded and can
/// be differentiated again. Inputs that `output` does not depend on get a zero
/// gradient of their own shape.
pub fn grad(output: &Var, wrt: &[Var], create_graph: bool) -> Vec<Var> {
    let (r, c) = output.shape();
    let seed = Var::constant(Array2::ones((r, c)));
    grad_with_seed(output, seed, wrt, create_graph)
}

pub fn grad_with_seed(output: &Var, seed: Var, wrt: &[Var], create_graph: bool) -> Vec<Var> {
    assert_eq!(seed.shape(), output.shape(), "seed shape");
    let _mode = set_grad_enabled(create_graph);

    let order = topo_order(output);
    let mut grads: HashMap<u64, Var> = HashMap::new();
    let wanted: HashSet<u64> = wrt.iter().map(Var::id).collect();
    let mut kept: HashMap<u64, Var> = HashMap::new();
    if output.requires_grad() {
        grads.insert(output.id(), seed);
    }

    for node in order.iter().rev() {
        let Some(g) = grads.remove(&node.id()) else {
            continue;
        };
        if wanted.contains(&node.id()) {
            kept.insert(node.id(), g.clone());
        }
        let Some(op) = node.op() else { continue };
        for (parent, pg) in backward_op(node, op, &g) {
            if !parent.requires_grad() {
                continue;
            }
            match grads.remove(&parent.id()) {
                Some(acc) => grads.insert(parent.id(), acc.add(&pg)),
                None => grads.insert(parent.id(), pg),
            };
        }
    }

    wrt.iter()
        .map(|w| {
            kept.remove(&w.id())
                .unwrap_or_else(|| Var::zeros(w.rows(), w.cols()))
        })
        .collect()
}

/// Post-order over grad-requiring nodes reachable from `root`.
fn topo_order(root: &Var) -> Vec<Var> {
    let mut order = Vec::new();
    if !root.requires_grad() {
        return order;
    }
    let mut visited = HashSet::new();
    let mut stack: Vec<(Var, bool)> = vec![(root.clone(), false)];
    while let Some((v, expanded)) = stack.pop() {
        if expanded {
            order.push(v);
            continue;
        }
        if !visited.insert(v.id()) {
            continue;
        }
        stack.push((v.clone(), true));
        if let Some(op) = v.op() {
            for p in op.parents() {
                if p.requires_grad() && !visited.contains(&p.id()) {
                    stack.push((p.clone(), false));
                }
            }
        }
    }
    order
}

fn backward_op(out: &Var, op: &Op, g: &Var) -> Vec<(Var, Var)> {
    use Op::*;
    match op {
        Add(a, b) => vec![(a.clone(), g.clone()), (b.clone(), g.clone())],
        Sub(a, b) => vec![(a.clone(), g.clone()), (b.clone(), g.neg())],
        Mul(a, b) => vec![(a.clone(), g.mul(b)), (b.clone(), g.mul(a))],
        Scale(a, c) => vec![(a.clone(), g.scale(*c))],
        AddScalar(a) => vec![(a.clone(), g.clone())],
        Recip(a, zero_at_zero) => {
            let r = if *zero_at_zero {
                a.recip_or_zero()
            } else {
                a.recip()
            };
            vec![(a.clone(), g.mul(&r.square()).neg())]
        }
        MatMul(a, b) => vec![(a.clone(), g.matmul(&b.t())), (b.clone(), a.t().matmul(g))],
        Transpose(a) => vec![(a.clone(), g.t())],
        LeakyRelu(a, slope) => {
            let m = Var::constant(leaky_mask(a.value(), *slope));
            vec![(a.clone(), g.mul(&m))]
        }
        Tanh(a) => {
            let t = a.tanh();
            let d = t.square().neg().add_scalar(1.0);
            vec![(a.clone(), g.mul(&d))]
        }
        Sigmoid(a) => {
            let s = a.sigmoid();
            let d = s.mul(&s.neg().add_scalar(1.0));
            vec![(a.clone(), g.mul(&d))]
        }
        Exp(a) => vec![(a.clone(), g.mul(&a.exp()))],
        Ln(a) => vec![(a.clone(), g.mul(&a.recip()))],
        Sqrt(a) => {
            let d = a.sqrt().recip_or_zero().scale(0.5);
            vec![(a.clone(), g.mul(&d))]
        }
        SumAll(a) => {
            let (r, c) = a.shape();
            vec![(a.clone(), g.broadcast_cols(c).broadcast_rows_any(r))]
        }
        SumRows(a) => vec![(a.clone(), g.broadcast_rows(a.rows()))],
        SumCols(a) => vec![(a.clone(), g.broadcast_cols(a.cols()))],
        BroadcastRows(a) => vec![(a.clone(), g.sum_rows())],
        BroadcastCols(a) => vec![(a.clone(), g.sum_cols())],
        GatherRows(a, idx) => vec![(a.clone(), g.scatter_rows(idx, a.rows()))],
        ScatterRows(a, idx) => vec![(a.clone(), g.gather_rows(idx))],
        Pick(a, flat) => vec![(a.clone(), g.place(flat, a.shape()))],
        Place(a, flat) => vec![(a.clone(), g.pick(flat, a.shape()))],
        ConcatCols(parts) => {
            let mut off = 0;
            parts
                .iter()
                .map(|p| {
                    let w = p.cols();
                    let s = g.slice_cols(off, off + w);
                    off += w;
                    (p.clone(), s)
                })
                .collect()
        }
        ConcatRows(parts) => {
            let mut off = 0;
            parts
                .iter()
                .map(|p| {
                    let h = p.rows();
                    let s = g.slice_rows(off, off + h);
                    off += h;
                    (p.clone(), s)
                })
                .collect()
        }
        SliceCols(a, start, end) => {
            let (rows, cols) = a.shape();
            let mut parts = Vec::with_capacity(3);
            if *start > 0 {
                parts.push(Var::zeros(rows, *start));
            }
            parts.push(g.clone());
            if *end < cols {
                parts.push(Var::zeros(rows, cols - end));
            }
            vec![(a.clone(), concat_or_single(parts, true))]
        }
        SliceRows(a, start, end) => {
            let (rows, cols) = a.shape();
            let mut parts = Vec::with_capacity(3);
            if *start > 0 {
                parts.push(Var::zeros(*start, cols));
            }
            parts.push(g.clone());
            if *end < rows {
                parts.push(Var::zeros(rows - end, cols));
            }
            vec![(a.clone(), concat_or_single(parts, false))]
        }
        StraightThrough(a) => {
            debug_assert_eq!(out.shape(), a.shape());
            vec![(a.clone(), g.clone())]
        }
    }
}

fn concat_or_single(mut parts: Vec<Var>, cols: bool) -> Var {
    if parts.len() == 1 {
        parts.pop().unwrap()
    } else if cols {
        Var::concat_cols(&parts)
    } else {
        Var::concat_rows(&parts)
    }
}

impl Var {
    /// `broadcast_rows` that accepts an already n-row input when n == 1.
    fn broadcast_rows_any(&self, n: usize) -> Var {
        if n == 1 {
            self.clone()
        } else {
            self.broadcast_rows(n)
        }
    }
}
