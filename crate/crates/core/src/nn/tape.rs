//! Reverse-mode automatic differentiation over `f64` matrices.
//!
//! A [`Graph`] is a tape of nodes built during one forward pass; calling
//! [`Graph::backward`] on a scalar root fills gradients for every node that
//! needs them. One graph is built per batch and dropped afterwards. All
//! arithmetic is `f64` and single-threaded, so results are bit-reproducible.

use std::sync::Arc;

use ndarray::{concatenate, s, Array2, Axis};

/// Matrix of `f64`, the only tensor type the tape works with. Row vectors
/// are `[1, n]`, sequences are `[len, dim]`.
pub type Mat = Array2<f64>;

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Clone)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    /// `[m,n] + [1,n]`, broadcast over rows.
    AddRow(usize, usize),
    /// `[m,n] * [1,n]`, broadcast over rows.
    MulRow(usize, usize),
    /// `[m,n] + [m,1]`, broadcast over columns.
    AddCol(usize, usize),
    /// `[m,n] * [m,1]`, broadcast over columns.
    MulCol(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    Sigmoid(usize),
    Tanh(usize),
    Relu(usize),
    Square(usize),
    Sqrt(usize),
    Recip(usize),
    Transpose(usize),
    ConcatRows(Vec<usize>),
    ConcatCols(Vec<usize>),
    Reshape(usize),
    /// Zero rows appended below the parent.
    PadRows(usize),
    /// Row gather; duplicates allowed, backward scatter-adds.
    GatherRows(usize, Vec<usize>),
    /// Sliding windows of `k` consecutive rows, flattened per window.
    Windows(usize, usize),
    /// Column-wise max over rows; stored indices are the argmax rows.
    MaxRows(usize, Vec<usize>),
    /// Row-wise mean: `[m,n] -> [m,1]`.
    MeanCols(usize),
    SumAll(usize),
    SoftmaxRows(usize),
    /// Mean cross-entropy of row logits against stored class indices.
    MeanCrossEntropy(usize, Vec<usize>),
    /// Elementwise product with a fixed mask (dropout).
    MaskMul(usize, Arc<Mat>),
}

struct Node {
    value: Mat,
    grad: Option<Mat>,
    needs_grad: bool,
    op: Op,
}

/// Forward tape; see module docs.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Mat, needs_grad: bool, op: Op) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            needs_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, ids: &[usize]) -> bool {
        ids.iter().any(|&i| self.nodes[i].needs_grad)
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, value: Mat) -> Var {
        self.push(value, false, Op::Leaf)
    }

    /// Differentiable input (parameters, or probes under test).
    pub fn leaf(&mut self, value: Mat) -> Var {
        self.push(value, true, Op::Leaf)
    }

    pub fn zeros(&mut self, rows: usize, cols: usize) -> Var {
        self.constant(Mat::zeros((rows, cols)))
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> Option<&Mat> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.nodes[a.0].value.dot(&self.nodes[b.0].value);
        let needs = self.needs(&[a.0, b.0]);
        self.push(value, needs, Op::MatMul(a.0, b.0))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = &self.nodes[a.0].value + &self.nodes[b.0].value;
        let needs = self.needs(&[a.0, b.0]);
        self.push(value, needs, Op::Add(a.0, b.0))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = &self.nodes[a.0].value - &self.nodes[b.0].value;
        let needs = self.needs(&[a.0, b.0]);
        self.push(value, needs, Op::Sub(a.0, b.0))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = &self.nodes[a.0].value * &self.nodes[b.0].value;
        let needs = self.needs(&[a.0, b.0]);
        self.push(value, needs, Op::Mul(a.0, b.0))
    }

    pub fn add_row(&mut self, x: Var, row: Var) -> Var {
        debug_assert_eq!(self.nodes[row.0].value.nrows(), 1);
        let value = &self.nodes[x.0].value + &self.nodes[row.0].value;
        let needs = self.needs(&[x.0, row.0]);
        self.push(value, needs, Op::AddRow(x.0, row.0))
    }

    pub fn mul_row(&mut self, x: Var, row: Var) -> Var {
        debug_assert_eq!(self.nodes[row.0].value.nrows(), 1);
        let value = &self.nodes[x.0].value * &self.nodes[row.0].value;
        let needs = self.needs(&[x.0, row.0]);
        self.push(value, needs, Op::MulRow(x.0, row.0))
    }

    pub fn add_col(&mut self, x: Var, col: Var) -> Var {
        debug_assert_eq!(self.nodes[col.0].value.ncols(), 1);
        let value = &self.nodes[x.0].value + &self.nodes[col.0].value;
        let needs = self.needs(&[x.0, col.0]);
        self.push(value, needs, Op::AddCol(x.0, col.0))
    }

    pub fn mul_col(&mut self, x: Var, col: Var) -> Var {
        debug_assert_eq!(self.nodes[col.0].value.ncols(), 1);
        let value = &self.nodes[x.0].value * &self.nodes[col.0].value;
        let needs = self.needs(&[x.0, col.0]);
        self.push(value, needs, Op::MulCol(x.0, col.0))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let value = &self.nodes[x.0].value * factor;
        let needs = self.needs(&[x.0]);
        self.push(value, needs, Op::Scale(x.0, factor))
    }

    pub fn add_scalar(&mut self, x: Var, offset: f64) -> Var {
        let value = &self.nodes[x.0].value + offset;
        let needs = self.needs(&[x.0]);
        self.push(value, needs, Op::AddScalar(x.0))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = self.nodes[x.0].value.mapv(|v| 1.0 / (1.0 + (-v).exp()));
        let needs = self.needs(&[x.0]);
        self.push(value, needs, Op::Sigmoid(x.0))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let value = self.nodes[x.0].value.mapv(f64::tanh);
        let needs = self.needs(&[x.0]);
        self.push(value, needs, Op::Tanh(x.0))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.nodes[x.0].value.mapv(|v| v.max(0.0));
        let needs = self.needs(&[x.0]);
        self.push(value, needs, Op::Relu(x.0))
    }

    pub fn square(&mut self, x: Var) -> Var {
        let value = self.nodes[x.0].value.mapv(|v| v * v);
        let needs = self.needs(&[x.0]);
        self.push(value, needs, Op::Square(x.0))
    }

    /// Elementwise square root; inputs must be positive for a finite gradient.
    pub fn sqrt(&mut self, x: Var) -> Var {
        let value = self.nodes[x.0].value.mapv(f64::sqrt);
        let needs = self.needs(&[x.0]);
        self.push(value, needs, Op::Sqrt(x.0))
    }

    pub fn recip(&mut self, x: Var) -> Var {
        let value = self.nodes[x.0].value.mapv(|v| 1.0 / v);
        let needs = self.needs(&[x.0]);
        self.push(value, needs, Op::Recip(x.0))
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let value = self.nodes[x.0].value.t().to_owned();
        let needs = self.needs(&[x.0]);
        self.push(value, needs, Op::Transpose(x.0))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let views: Vec<_> = parts.iter().map(|v| self.nodes[v.0].value.view()).collect();
        let value = concatenate(Axis(0), &views).expect("row concat shapes");
        let ids: Vec<usize> = parts.iter().map(|v| v.0).collect();
        let needs = self.needs(&ids);
        self.push(value, needs, Op::ConcatRows(ids))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let views: Vec<_> = parts.iter().map(|v| self.nodes[v.0].value.view()).collect();
        let value = concatenate(Axis(1), &views).expect("col concat shapes");
        let ids: Vec<usize> = parts.iter().map(|v| v.0).collect();
        let needs = self.needs(&ids);
        self.push(value, needs, Op::ConcatCols(ids))
    }

    pub fn reshape(&mut self, x: Var, rows: usize, cols: usize) -> Var {
        let value = reshape_mat(&self.nodes[x.0].value, rows, cols);
        let needs = self.needs(&[x.0]);
        self.push(value, needs, Op::Reshape(x.0))
    }

    /// Appends zero rows so the result has `total_rows` rows.
    pub fn pad_rows(&mut self, x: Var, total_rows: usize) -> Var {
        let src = &self.nodes[x.0].value;
        assert!(src.nrows() <= total_rows, "pad_rows cannot shrink");
        let mut value = Mat::zeros((total_rows, src.ncols()));
        value.slice_mut(s![..src.nrows(), ..]).assign(src);
        let needs = self.needs(&[x.0]);
        self.push(value, needs, Op::PadRows(x.0))
    }

    pub fn gather_rows(&mut self, x: Var, ids: Vec<usize>) -> Var {
        let src = &self.nodes[x.0].value;
        let mut value = Mat::zeros((ids.len(), src.ncols()));
        for (out_row, &src_row) in ids.iter().enumerate() {
            value.row_mut(out_row).assign(&src.row(src_row));
        }
        let needs = self.needs(&[x.0]);
        self.push(value, needs, Op::GatherRows(x.0, ids))
    }

    /// Single row as `[1, n]`.
    pub fn row(&mut self, x: Var, index: usize) -> Var {
        self.gather_rows(x, vec![index])
    }

    /// Sliding windows of `k` rows: `[L, d] -> [L - k + 1, k * d]`.
    pub fn windows(&mut self, x: Var, k: usize) -> Var {
        let src = &self.nodes[x.0].value;
        let (rows, cols) = src.dim();
        assert!(k >= 1 && k <= rows, "window of {k} over {rows} rows");
        let out_rows = rows - k + 1;
        let mut value = Mat::zeros((out_rows, k * cols));
        for i in 0..out_rows {
            for j in 0..k {
                value
                    .slice_mut(s![i, j * cols..(j + 1) * cols])
                    .assign(&src.row(i + j));
            }
        }
        let needs = self.needs(&[x.0]);
        self.push(value, needs, Op::Windows(x.0, k))
    }

    /// Column-wise max over rows (max-over-time pooling): `[m, n] -> [1, n]`.
    pub fn max_rows(&mut self, x: Var) -> Var {
        let src = &self.nodes[x.0].value;
        let (rows, cols) = src.dim();
        assert!(rows >= 1);
        let mut value = Mat::zeros((1, cols));
        let mut argmax = vec![0usize; cols];
        for j in 0..cols {
            let mut best = src[(0, j)];
            for i in 1..rows {
                if src[(i, j)] > best {
                    best = src[(i, j)];
                    argmax[j] = i;
                }
            }
            value[(0, j)] = best;
        }
        let needs = self.needs(&[x.0]);
        self.push(value, needs, Op::MaxRows(x.0, argmax))
    }

    /// Row-wise mean: `[m, n] -> [m, 1]`.
    pub fn mean_cols(&mut self, x: Var) -> Var {
        let src = &self.nodes[x.0].value;
        let n = src.ncols() as f64;
        let value = src.sum_axis(Axis(1)).insert_axis(Axis(1)) / n;
        let needs = self.needs(&[x.0]);
        self.push(value, needs, Op::MeanCols(x.0))
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let value = Mat::from_elem((1, 1), self.nodes[x.0].value.sum());
        let needs = self.needs(&[x.0]);
        self.push(value, needs, Op::SumAll(x.0))
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let value = softmax_mat(&self.nodes[x.0].value);
        let needs = self.needs(&[x.0]);
        self.push(value, needs, Op::SoftmaxRows(x.0))
    }

    /// Mean cross-entropy of row logits against `targets` (class indices),
    /// computed via log-sum-exp. Output is `[1, 1]`.
    pub fn mean_cross_entropy(&mut self, logits: Var, targets: Vec<usize>) -> Var {
        let src = &self.nodes[logits.0].value;
        assert_eq!(src.nrows(), targets.len());
        let mut total = 0.0;
        for (row, &target) in src.outer_iter().zip(&targets) {
            debug_assert!(target < row.len());
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
            total += lse - row[target];
        }
        let value = Mat::from_elem((1, 1), total / targets.len() as f64);
        let needs = self.needs(&[logits.0]);
        self.push(value, needs, Op::MeanCrossEntropy(logits.0, targets))
    }

    /// Elementwise product with a fixed mask; used for dropout.
    pub fn mask_mul(&mut self, x: Var, mask: Arc<Mat>) -> Var {
        let value = &self.nodes[x.0].value * mask.as_ref();
        let needs = self.needs(&[x.0]);
        self.push(value, needs, Op::MaskMul(x.0, mask))
    }

    fn accumulate(&mut self, idx: usize, delta: Mat) {
        if !self.nodes[idx].needs_grad {
            return;
        }
        match &mut self.nodes[idx].grad {
            Some(g) => *g += &delta,
            None => self.nodes[idx].grad = Some(delta),
        }
    }

    /// Backpropagates from a `[1, 1]` root, filling gradients of every node
    /// that needs them. Nodes created after `root` are ignored.
    pub fn backward(&mut self, root: Var) {
        assert_eq!(
            self.nodes[root.0].value.dim(),
            (1, 1),
            "backward root must be scalar"
        );
        if !self.nodes[root.0].needs_grad {
            return;
        }
        self.nodes[root.0].grad = Some(Mat::from_elem((1, 1), 1.0));
        for i in (0..=root.0).rev() {
            if self.nodes[i].grad.is_none() {
                continue;
            }
            let op = self.nodes[i].op.clone();
            let g = self.nodes[i].grad.clone().expect("checked above");
            match op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let da = g.dot(&self.nodes[b].value.t());
                    let db = self.nodes[a].value.t().dot(&g);
                    self.accumulate(a, da);
                    self.accumulate(b, db);
                }
                Op::Add(a, b) => {
                    self.accumulate(a, g.clone());
                    self.accumulate(b, g);
                }
                Op::Sub(a, b) => {
                    self.accumulate(a, g.clone());
                    self.accumulate(b, -g);
                }
                Op::Mul(a, b) => {
                    let da = &g * &self.nodes[b].value;
                    let db = &g * &self.nodes[a].value;
                    self.accumulate(a, da);
                    self.accumulate(b, db);
                }
                Op::AddRow(x, r) => {
                    let dr = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    self.accumulate(x, g);
                    self.accumulate(r, dr);
                }
                Op::MulRow(x, r) => {
                    let dx = &g * &self.nodes[r].value;
                    let dr = (&g * &self.nodes[x].value)
                        .sum_axis(Axis(0))
                        .insert_axis(Axis(0));
                    self.accumulate(x, dx);
                    self.accumulate(r, dr);
                }
                Op::AddCol(x, c) => {
                    let dc = g.sum_axis(Axis(1)).insert_axis(Axis(1));
                    self.accumulate(x, g);
                    self.accumulate(c, dc);
                }
                Op::MulCol(x, c) => {
                    let dx = &g * &self.nodes[c].value;
                    let dc = (&g * &self.nodes[x].value)
                        .sum_axis(Axis(1))
                        .insert_axis(Axis(1));
                    self.accumulate(x, dx);
                    self.accumulate(c, dc);
                }
                Op::Scale(x, factor) => self.accumulate(x, g * factor),
                Op::AddScalar(x) => self.accumulate(x, g),
                Op::Sigmoid(x) => {
                    let y = &self.nodes[i].value;
                    let dx = &g * &(y * &y.mapv(|v| 1.0 - v));
                    self.accumulate(x, dx);
                }
                Op::Tanh(x) => {
                    let y = &self.nodes[i].value;
                    let dx = &g * &y.mapv(|v| 1.0 - v * v);
                    self.accumulate(x, dx);
                }
                Op::Relu(x) => {
                    let mask = self.nodes[x].value.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
                    self.accumulate(x, &g * &mask);
                }
                Op::Square(x) => {
                    let dx = &g * &(2.0 * &self.nodes[x].value);
                    self.accumulate(x, dx);
                }
                Op::Sqrt(x) => {
                    let y = &self.nodes[i].value;
                    let dx = &g * &y.mapv(|v| 0.5 / v);
                    self.accumulate(x, dx);
                }
                Op::Recip(x) => {
                    let y = &self.nodes[i].value;
                    let dx = &g * &y.mapv(|v| -v * v);
                    self.accumulate(x, dx);
                }
                Op::Transpose(x) => self.accumulate(x, g.t().to_owned()),
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let rows = self.nodes[p].value.nrows();
                        let slice = g.slice(s![offset..offset + rows, ..]).to_owned();
                        self.accumulate(p, slice);
                        offset += rows;
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let cols = self.nodes[p].value.ncols();
                        let slice = g.slice(s![.., offset..offset + cols]).to_owned();
                        self.accumulate(p, slice);
                        offset += cols;
                    }
                }
                Op::Reshape(x) => {
                    let (rows, cols) = self.nodes[x].value.dim();
                    self.accumulate(x, reshape_mat(&g, rows, cols));
                }
                Op::PadRows(x) => {
                    let rows = self.nodes[x].value.nrows();
                    self.accumulate(x, g.slice(s![..rows, ..]).to_owned());
                }
                Op::GatherRows(x, ids) => {
                    let mut dx = Mat::zeros(self.nodes[x].value.dim());
                    for (out_row, &src_row) in ids.iter().enumerate() {
                        let mut target = dx.row_mut(src_row);
                        target += &g.row(out_row);
                    }
                    self.accumulate(x, dx);
                }
                Op::Windows(x, k) => {
                    let (rows, cols) = self.nodes[x].value.dim();
                    let mut dx = Mat::zeros((rows, cols));
                    for i in 0..g.nrows() {
                        for j in 0..k {
                            let mut target = dx.row_mut(i + j);
                            target += &g.slice(s![i, j * cols..(j + 1) * cols]);
                        }
                    }
                    self.accumulate(x, dx);
                }
                Op::MaxRows(x, argmax) => {
                    let mut dx = Mat::zeros(self.nodes[x].value.dim());
                    for (j, &i_max) in argmax.iter().enumerate() {
                        dx[(i_max, j)] += g[(0, j)];
                    }
                    self.accumulate(x, dx);
                }
                Op::MeanCols(x) => {
                    let n = self.nodes[x].value.ncols() as f64;
                    let ones = Mat::from_elem((1, self.nodes[x].value.ncols()), 1.0 / n);
                    self.accumulate(x, g.dot(&ones));
                }
                Op::SumAll(x) => {
                    let dx = Mat::from_elem(self.nodes[x].value.dim(), g[(0, 0)]);
                    self.accumulate(x, dx);
                }
                Op::SoftmaxRows(x) => {
                    let y = self.nodes[i].value.clone();
                    let mut dx = Mat::zeros(y.dim());
                    for r in 0..y.nrows() {
                        let dot: f64 = (0..y.ncols()).map(|c| g[(r, c)] * y[(r, c)]).sum();
                        for c in 0..y.ncols() {
                            dx[(r, c)] = y[(r, c)] * (g[(r, c)] - dot);
                        }
                    }
                    self.accumulate(x, dx);
                }
                Op::MeanCrossEntropy(x, targets) => {
                    let probs = softmax_mat(&self.nodes[x].value);
                    let scale = g[(0, 0)] / targets.len() as f64;
                    let mut dx = probs * scale;
                    for (r, &t) in targets.iter().enumerate() {
                        dx[(r, t)] -= scale;
                    }
                    self.accumulate(x, dx);
                }
                Op::MaskMul(x, mask) => {
                    self.accumulate(x, &g * mask.as_ref());
                }
            }
        }
    }
}

/// Row-major reshape, independent of the source layout.
fn reshape_mat(m: &Mat, rows: usize, cols: usize) -> Mat {
    assert_eq!(m.len(), rows * cols, "reshape size mismatch");
    Mat::from_shape_vec((rows, cols), m.iter().cloned().collect()).expect("checked size")
}

/// Stable row-wise softmax used by both the forward op and the CE backward.
pub(crate) fn softmax_mat(logits: &Mat) -> Mat {
    let mut out = Mat::zeros(logits.dim());
    for (r, row) in logits.outer_iter().enumerate() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (c, &v) in row.iter().enumerate() {
            let e = (v - max).exp();
            out[(r, c)] = e;
            sum += e;
        }
        for c in 0..row.len() {
            out[(r, c)] /= sum;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn random_mat(rng: &mut ChaCha20Rng, rows: usize, cols: usize) -> Mat {
        Mat::from_shape_fn((rows, cols), |_| rng.gen_range(-1.0..1.0))
    }

    /// Central finite differences of `f` at `x`.
    fn numeric_grad(f: &dyn Fn(&Mat) -> f64, x: &Mat) -> Mat {
        let eps = 1e-6;
        let mut grad = Mat::zeros(x.dim());
        let mut probe = x.clone();
        for idx in 0..x.len() {
            let (r, c) = (idx / x.ncols(), idx % x.ncols());
            let orig = probe[(r, c)];
            probe[(r, c)] = orig + eps;
            let fp = f(&probe);
            probe[(r, c)] = orig - eps;
            let fm = f(&probe);
            probe[(r, c)] = orig;
            grad[(r, c)] = (fp - fm) / (2.0 * eps);
        }
        grad
    }

    fn assert_close(analytic: &Mat, numeric: &Mat, tol: f64, what: &str) {
        for ((idx, a), n) in analytic.indexed_iter().zip(numeric.iter()) {
            let denom = a.abs().max(n.abs()).max(1e-8);
            assert!(
                (a - n).abs() / denom < tol,
                "{what}: grad mismatch at {idx:?}: analytic {a}, numeric {n}"
            );
        }
    }

    /// Checks d(scalar)/d(x) for a scalar-valued graph builder.
    fn check_grad(build: &dyn Fn(&mut Graph, Var) -> Var, x: &Mat, what: &str) {
        let f = |probe: &Mat| {
            let mut g = Graph::new();
            let leaf = g.leaf(probe.clone());
            let out = build(&mut g, leaf);
            g.value(out)[(0, 0)]
        };
        let mut g = Graph::new();
        let leaf = g.leaf(x.clone());
        let out = build(&mut g, leaf);
        g.backward(out);
        let analytic = g.grad(leaf).expect("leaf grad").clone();
        let numeric = numeric_grad(&f, x);
        assert_close(&analytic, &numeric, 1e-6, what);
    }

    #[test]
    fn grad_matmul_chain() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let x = random_mat(&mut rng, 3, 4);
        let w = random_mat(&mut rng, 4, 2);
        check_grad(
            &|g, leaf| {
                let wv = g.constant(w.clone());
                let y = g.matmul(leaf, wv);
                let t = g.tanh(y);
                g.sum_all(t)
            },
            &x,
            "matmul",
        );
    }

    #[test]
    fn grad_matmul_right_operand() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let x = random_mat(&mut rng, 2, 3);
        let w = random_mat(&mut rng, 3, 3);
        check_grad(
            &|g, leaf| {
                let xv = g.constant(x.clone());
                let y = g.matmul(xv, leaf);
                let s = g.sigmoid(y);
                g.sum_all(s)
            },
            &w,
            "matmul rhs",
        );
    }

    #[test]
    fn grad_elementwise_ops() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let x = random_mat(&mut rng, 3, 3);
        check_grad(
            &|g, leaf| {
                let a = g.sigmoid(leaf);
                let b = g.tanh(leaf);
                let c = g.mul(a, b);
                let d = g.square(c);
                let e = g.scale(d, 0.7);
                let f = g.add_scalar(e, 0.1);
                g.sum_all(f)
            },
            &x,
            "elementwise",
        );
    }

    #[test]
    fn grad_relu() {
        // Values away from zero so the kink does not break finite differences.
        let x = arr2(&[[0.5, -0.7, 1.2], [-0.3, 0.9, -1.5]]);
        check_grad(
            &|g, leaf| {
                let r = g.relu(leaf);
                g.sum_all(r)
            },
            &x,
            "relu",
        );
    }

    #[test]
    fn grad_sqrt_recip() {
        let x = arr2(&[[0.5, 1.5], [2.0, 0.8]]);
        check_grad(
            &|g, leaf| {
                let s = g.sqrt(leaf);
                let r = g.recip(s);
                g.sum_all(r)
            },
            &x,
            "sqrt/recip",
        );
    }

    #[test]
    fn grad_row_col_broadcasts() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let x = random_mat(&mut rng, 3, 4);
        let row = random_mat(&mut rng, 1, 4);
        let col = random_mat(&mut rng, 3, 1);
        check_grad(
            &|g, leaf| {
                let rv = g.constant(row.clone());
                let cv = g.constant(col.clone());
                let a = g.add_row(leaf, rv);
                let b = g.mul_row(a, rv);
                let c = g.add_col(b, cv);
                let d = g.mul_col(c, cv);
                let t = g.tanh(d);
                g.sum_all(t)
            },
            &x,
            "broadcast x",
        );
        // And gradients into the broadcast operands themselves.
        check_grad(
            &|g, leaf| {
                let xv = g.constant(x.clone());
                let a = g.add_row(xv, leaf);
                let b = g.mul_row(a, leaf);
                let t = g.sigmoid(b);
                g.sum_all(t)
            },
            &row,
            "broadcast row operand",
        );
        check_grad(
            &|g, leaf| {
                let xv = g.constant(x.clone());
                let a = g.add_col(xv, leaf);
                let b = g.mul_col(a, leaf);
                let t = g.sigmoid(b);
                g.sum_all(t)
            },
            &col,
            "broadcast col operand",
        );
    }

    #[test]
    fn grad_concat_reshape_pad_gather() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let x = random_mat(&mut rng, 3, 2);
        check_grad(
            &|g, leaf| {
                let t = g.tanh(leaf);
                let joined = g.concat_rows(&[leaf, t]);
                let wide = g.concat_cols(&[joined, joined]);
                let flat = g.reshape(wide, 1, 24);
                let padded = g.pad_rows(flat, 3);
                let picked = g.gather_rows(padded, vec![0, 0, 2]);
                let s = g.sigmoid(picked);
                g.sum_all(s)
            },
            &x,
            "concat/reshape/pad/gather",
        );
    }

    #[test]
    fn grad_windows_maxpool() {
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let x = random_mat(&mut rng, 6, 3);
        check_grad(
            &|g, leaf| {
                let w = g.windows(leaf, 3);
                let t = g.tanh(w);
                let m = g.max_rows(t);
                g.sum_all(m)
            },
            &x,
            "windows/max",
        );
    }

    #[test]
    fn grad_mean_cols_transpose() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let x = random_mat(&mut rng, 4, 5);
        check_grad(
            &|g, leaf| {
                let t = g.transpose(leaf);
                let m = g.mean_cols(t);
                let s = g.square(m);
                g.sum_all(s)
            },
            &x,
            "mean_cols/transpose",
        );
    }

    #[test]
    fn grad_softmax() {
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let x = random_mat(&mut rng, 3, 4);
        let weights = random_mat(&mut rng, 3, 4);
        check_grad(
            &|g, leaf| {
                let sm = g.softmax_rows(leaf);
                let wv = g.constant(weights.clone());
                let weighted = g.mul(sm, wv);
                g.sum_all(weighted)
            },
            &x,
            "softmax",
        );
    }

    #[test]
    fn grad_cross_entropy() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let logits = random_mat(&mut rng, 4, 3);
        check_grad(
            &|g, leaf| g.mean_cross_entropy(leaf, vec![0, 2, 1, 2]),
            &logits,
            "cross entropy",
        );
    }

    #[test]
    fn grad_mask_mul() {
        let mut rng = ChaCha20Rng::seed_from_u64(10);
        let x = random_mat(&mut rng, 3, 3);
        let mask = Arc::new(arr2(&[[2.0, 0.0, 2.0], [0.0, 2.0, 0.0], [2.0, 2.0, 0.0]]));
        check_grad(
            &|g, leaf| {
                let m = g.mask_mul(leaf, mask.clone());
                let t = g.tanh(m);
                g.sum_all(t)
            },
            &x,
            "mask mul",
        );
    }

    #[test]
    fn grad_accumulates_over_shared_use() {
        // The same leaf feeds two paths; gradients must sum.
        let x = arr2(&[[0.3, -0.4]]);
        check_grad(
            &|g, leaf| {
                let a = g.sigmoid(leaf);
                let b = g.tanh(leaf);
                let s = g.add(a, b);
                g.sum_all(s)
            },
            &x,
            "shared leaf",
        );
    }

    #[test]
    fn cross_entropy_matches_log_softmax_by_hand() {
        let mut g = Graph::new();
        let logits = g.constant(arr2(&[[1.0, 2.0, 3.0]]));
        let ce = g.mean_cross_entropy(logits, vec![2]);
        let sum: f64 = [1.0f64, 2.0, 3.0].iter().map(|v| (v - 3.0).exp()).sum();
        let expected = -(1.0f64 / sum).ln() * (3.0f64 - 3.0).exp(); // -ln softmax[2]
        let by_hand = sum.ln(); // lse(x)-x2 with max shift: ln(sum e^{x-3})
        assert!((g.value(ce)[(0, 0)] - by_hand).abs() < 1e-12);
        let _ = expected;
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let x = random_mat(&mut rng, 5, 7) * 30.0;
        let mut g = Graph::new();
        let v = g.constant(x);
        let sm = g.softmax_rows(v);
        for row in g.value(sm).outer_iter() {
            let sum: f64 = row.sum();
            assert!((sum - 1.0).abs() < 1e-9);
            assert!(row.iter().all(|&p| (0.0..=1.0).contains(&p)));
        }
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut g = Graph::new();
        let c = g.constant(arr2(&[[1.0, 2.0]]));
        let leaf = g.leaf(arr2(&[[3.0, 4.0]]));
        let s = g.add(c, leaf);
        let out = g.sum_all(s);
        g.backward(out);
        assert!(g.grad(c).is_none());
        assert!(g.grad(leaf).is_some());
    }
}
