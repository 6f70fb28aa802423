//! Reductions over row groups: row `i` belongs to segment `seg[i]`.

use std::rc::Rc;

use ndarray::Array2;

use crate::var::{Index, Var};

pub fn segment_sum(x: &Var, seg: &Index, n: usize) -> Var {
    x.scatter_rows(seg, n)
}

/// Mean per segment; empty segments yield zero rows.
pub fn segment_mean(x: &Var, seg: &Index, n: usize) -> Var {
    let mut counts = vec![0usize; n];
    for &s in seg.iter() {
        counts[s] += 1;
    }
    let inv = Array2::from_shape_fn((n, 1), |(i, _)| {
        if counts[i] == 0 {
            0.0
        } else {
            1.0 / counts[i] as f64
        }
    });
    x.scatter_rows(seg, n).mul_col(&Var::constant(inv))
}

/// Columnwise max per segment. Ties go to the earliest row.
///
/// # Panics
/// If any of the `n` segments is empty.
pub fn segment_max(x: &Var, seg: &Index, n: usize) -> Var {
    let cols = x.cols();
    let mut best: Vec<Option<usize>> = vec![None; n * cols];
    let v = x.value();
    for (row, &s) in seg.iter().enumerate() {
        for c in 0..cols {
            let slot = &mut best[s * cols + c];
            match slot {
                Some(r) if v[[*r, c]] >= v[[row, c]] => {}
                _ => *slot = Some(row),
            }
        }
    }
    let flat: Vec<usize> = best
        .iter()
        .enumerate()
        .map(|(i, r)| r.expect("segment_max: empty segment") * cols + i % cols)
        .collect();
    x.pick(&Rc::from(flat), (n, cols))
}

/// Softmax of an `P x 1` logit column within each segment.
///
/// The per-segment shift is taken from the current values and treated as a
/// constant; softmax is shift invariant so gradients are exact.
pub fn segment_softmax(logits: &Var, seg: &Index, n: usize) -> Var {
    assert_eq!(logits.cols(), 1, "segment_softmax takes a column");
    let mut maxes = vec![f64::NEG_INFINITY; n];
    for (x, &s) in logits.value().iter().zip(seg.iter()) {
        if *x > maxes[s] {
            maxes[s] = *x;
        }
    }
    let shift = Array2::from_shape_fn((seg.len(), 1), |(i, _)| maxes[seg[i]]);
    let ex = logits.sub(&Var::constant(shift)).exp();
    let denom = ex.scatter_rows(seg, n).gather_rows(seg);
    ex.div(&denom)
}
