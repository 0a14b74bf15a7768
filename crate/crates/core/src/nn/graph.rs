//! Reverse-mode differentiation over a tape of tensor operations.
//!
//! The tape is append-only, so node ids are already a topological order and
//! the backward pass is a single reverse sweep. Every element of every
//! output is computed in a fixed order, so forward and backward passes are
//! bit-deterministic, including under the row-parallel matmul kernels.

use super::tensor::Tensor;
use crate::error::{Error, Result};
use rayon::prelude::*;

/// Handle to a node in the graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    /// Broadcast-add a `[1, n]` row over the rows of `[m, n]`.
    AddRow(usize, usize),
    /// Broadcast-multiply by a `[1, n]` row.
    MulRow(usize, usize),
    Relu(usize),
    Sigmoid(usize),
    Tanh(usize),
    Exp(usize),
    Scale(usize, f64),
    ConcatCols(Vec<usize>),
    SliceCols(usize, usize, usize),
    SumAll(usize),
    MeanAll(usize),
}

struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Below this many multiply-adds the parallel kernels run serially.
const PAR_FLOP_THRESHOLD: usize = 1 << 16;

/// c[m,n] += a[m,k] * b[k,n]
fn matmul_acc(a: &[f64], m: usize, k: usize, b: &[f64], n: usize, c: &mut [f64]) {
    let body = |i: usize, c_row: &mut [f64]| {
        let a_row = &a[i * k..(i + 1) * k];
        for (kk, &av) in a_row.iter().enumerate() {
            if av != 0.0 {
                let b_row = &b[kk * n..(kk + 1) * n];
                for (cv, bv) in c_row.iter_mut().zip(b_row) {
                    *cv += av * bv;
                }
            }
        }
    };
    if m * k * n >= PAR_FLOP_THRESHOLD && m > 1 {
        c.par_chunks_mut(n)
            .enumerate()
            .for_each(|(i, c_row)| body(i, c_row));
    } else {
        for (i, c_row) in c.chunks_mut(n).enumerate() {
            body(i, c_row);
        }
    }
}

/// c[m,k] += g[m,n] * b[k,n]^T
fn matmul_acc_bt(g: &[f64], m: usize, n: usize, b: &[f64], k: usize, c: &mut [f64]) {
    let body = |i: usize, c_row: &mut [f64]| {
        let g_row = &g[i * n..(i + 1) * n];
        for (kk, cv) in c_row.iter_mut().enumerate() {
            let b_row = &b[kk * n..(kk + 1) * n];
            let mut acc = 0.0;
            for (gv, bv) in g_row.iter().zip(b_row) {
                acc += gv * bv;
            }
            *cv += acc;
        }
    };
    if m * k * n >= PAR_FLOP_THRESHOLD && m > 1 {
        c.par_chunks_mut(k)
            .enumerate()
            .for_each(|(i, c_row)| body(i, c_row));
    } else {
        for (i, c_row) in c.chunks_mut(k).enumerate() {
            body(i, c_row);
        }
    }
}

/// c[k,n] += a[m,k]^T * g[m,n]
fn matmul_acc_at(a: &[f64], m: usize, k: usize, g: &[f64], n: usize, c: &mut [f64]) {
    let body = |kk: usize, c_row: &mut [f64]| {
        for i in 0..m {
            let av = a[i * k + kk];
            if av != 0.0 {
                let g_row = &g[i * n..(i + 1) * n];
                for (cv, gv) in c_row.iter_mut().zip(g_row) {
                    *cv += av * gv;
                }
            }
        }
    };
    if m * k * n >= PAR_FLOP_THRESHOLD && k > 1 {
        c.par_chunks_mut(n)
            .enumerate()
            .for_each(|(kk, c_row)| body(kk, c_row));
    } else {
        for (kk, c_row) in c.chunks_mut(n).enumerate() {
            body(kk, c_row);
        }
    }
}

impl Graph {
    pub fn new() -> Graph {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    fn shape2(&self, v: Var) -> (usize, usize) {
        let t = self.value(v);
        (t.rows(), t.cols())
    }

    fn check_same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::ShapeMismatch(format!(
                "{what}: {:?} vs {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.shape2(a);
        let (kb, n) = self.shape2(b);
        if k != kb {
            return Err(Error::ShapeMismatch(format!(
                "matmul: [{m},{k}] x [{kb},{n}]"
            )));
        }
        let mut out = Tensor::zeros(&[m, n]);
        matmul_acc(
            self.value(a).data(),
            m,
            k,
            self.value(b).data(),
            n,
            out.data_mut(),
        );
        Ok(self.push(out, Op::MatMul(a.0, b.0)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same_shape(a, b, "add")?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x + y)
            .collect();
        let t = Tensor::new(self.value(a).shape().to_vec(), data)?;
        Ok(self.push(t, Op::Add(a.0, b.0)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same_shape(a, b, "sub")?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x - y)
            .collect();
        let t = Tensor::new(self.value(a).shape().to_vec(), data)?;
        Ok(self.push(t, Op::Sub(a.0, b.0)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same_shape(a, b, "mul")?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x * y)
            .collect();
        let t = Tensor::new(self.value(a).shape().to_vec(), data)?;
        Ok(self.push(t, Op::Mul(a.0, b.0)))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (m, n) = self.shape2(a);
        let (rm, rn) = self.shape2(row);
        if rm != 1 || rn != n {
            return Err(Error::ShapeMismatch(format!(
                "add_row: [{m},{n}] + [{rm},{rn}]"
            )));
        }
        let rdata = self.value(row).data().to_vec();
        let data = self
            .value(a)
            .data()
            .chunks(n)
            .flat_map(|chunk| chunk.iter().zip(&rdata).map(|(x, y)| x + y))
            .collect();
        let t = Tensor::new(vec![m, n], data)?;
        Ok(self.push(t, Op::AddRow(a.0, row.0)))
    }

    pub fn mul_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (m, n) = self.shape2(a);
        let (rm, rn) = self.shape2(row);
        if rm != 1 || rn != n {
            return Err(Error::ShapeMismatch(format!(
                "mul_row: [{m},{n}] * [{rm},{rn}]"
            )));
        }
        let rdata = self.value(row).data().to_vec();
        let data = self
            .value(a)
            .data()
            .chunks(n)
            .flat_map(|chunk| chunk.iter().zip(&rdata).map(|(x, y)| x * y))
            .collect();
        let t = Tensor::new(vec![m, n], data)?;
        Ok(self.push(t, Op::MulRow(a.0, row.0)))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let data = self.value(a).data().iter().map(|&x| f(x)).collect();
        let t = Tensor::new(self.value(a).shape().to_vec(), data).expect("same shape");
        self.push(t, op)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| if x > 0.0 { x } else { 0.0 }, Op::Relu(a.0))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, |x| 1.0 / (1.0 + (-x).exp()), Op::Sigmoid(a.0))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a.0))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, f64::exp, Op::Exp(a.0))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.unary(a, |x| x * s, Op::Scale(a.0, s))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::ShapeMismatch("concat of nothing".to_string()));
        }
        let m = self.shape2(parts[0]).0;
        let mut total = 0;
        for &p in parts {
            let (pm, pn) = self.shape2(p);
            if pm != m {
                return Err(Error::ShapeMismatch(format!(
                    "concat_cols: rows {pm} != {m}"
                )));
            }
            total += pn;
        }
        let mut data = Vec::with_capacity(m * total);
        for i in 0..m {
            for &p in parts {
                let n = self.shape2(p).1;
                data.extend_from_slice(&self.value(p).data()[i * n..(i + 1) * n]);
            }
        }
        let t = Tensor::new(vec![m, total], data)?;
        Ok(self.push(t, Op::ConcatCols(parts.iter().map(|v| v.0).collect())))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let (m, n) = self.shape2(a);
        if start >= end || end > n {
            return Err(Error::ShapeMismatch(format!(
                "slice_cols {start}..{end} of [{m},{n}]"
            )));
        }
        let w = end - start;
        let mut data = Vec::with_capacity(m * w);
        for i in 0..m {
            data.extend_from_slice(&self.value(a).data()[i * n + start..i * n + end]);
        }
        let t = Tensor::new(vec![m, w], data)?;
        Ok(self.push(t, Op::SliceCols(a.0, start, end)))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s: f64 = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::SumAll(a.0))
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let len = self.value(a).len();
        let s: f64 = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s / len as f64), Op::MeanAll(a.0))
    }

    /// Reverse sweep from a scalar root. Returns one gradient slot per node;
    /// nodes that the root does not depend on stay `None`.
    pub fn backward(&self, root: Var) -> Result<Vec<Option<Tensor>>> {
        if root.0 >= self.nodes.len() {
            return Err(Error::GraphNotRecorded);
        }
        if self.value(root).len() != 1 {
            return Err(Error::ShapeMismatch(
                "backward needs a scalar root".to_string(),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(Tensor::scalar(1.0));

        for id in (0..=root.0).rev() {
            let Some(g) = grads[id].take() else {
                continue;
            };
            let gdata = g.data();
            let node = &self.nodes[id];
            let mut accum = |target: usize, contribution: Tensor| {
                match &mut grads[target] {
                    Some(existing) => {
                        for (e, c) in existing.data_mut().iter_mut().zip(contribution.data()) {
                            *e += c;
                        }
                    }
                    slot @ None => *slot = Some(contribution),
                }
            };
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let (m, k) = (self.nodes[*a].value.rows(), self.nodes[*a].value.cols());
                    let n = self.nodes[*b].value.cols();
                    let mut da = Tensor::zeros(&[m, k]);
                    matmul_acc_bt(gdata, m, n, self.nodes[*b].value.data(), k, da.data_mut());
                    let mut db = Tensor::zeros(&[k, n]);
                    matmul_acc_at(self.nodes[*a].value.data(), m, k, gdata, n, db.data_mut());
                    accum(*a, da);
                    accum(*b, db);
                }
                Op::Add(a, b) => {
                    accum(*a, g.clone());
                    accum(*b, g.clone());
                }
                Op::Sub(a, b) => {
                    accum(*a, g.clone());
                    let neg = Tensor::new(
                        g.shape().to_vec(),
                        gdata.iter().map(|x| -x).collect(),
                    )?;
                    accum(*b, neg);
                }
                Op::Mul(a, b) => {
                    let da = Tensor::new(
                        g.shape().to_vec(),
                        gdata
                            .iter()
                            .zip(self.nodes[*b].value.data())
                            .map(|(g, b)| g * b)
                            .collect(),
                    )?;
                    let db = Tensor::new(
                        g.shape().to_vec(),
                        gdata
                            .iter()
                            .zip(self.nodes[*a].value.data())
                            .map(|(g, a)| g * a)
                            .collect(),
                    )?;
                    accum(*a, da);
                    accum(*b, db);
                }
                Op::AddRow(a, row) => {
                    let n = self.nodes[*row].value.cols();
                    let mut drow = Tensor::zeros(&[1, n]);
                    for chunk in gdata.chunks(n) {
                        for (d, c) in drow.data_mut().iter_mut().zip(chunk) {
                            *d += c;
                        }
                    }
                    accum(*a, g.clone());
                    accum(*row, drow);
                }
                Op::MulRow(a, row) => {
                    let n = self.nodes[*row].value.cols();
                    let rdata = self.nodes[*row].value.data();
                    let da = Tensor::new(
                        g.shape().to_vec(),
                        gdata
                            .chunks(n)
                            .flat_map(|chunk| {
                                chunk.iter().zip(rdata).map(|(g, r)| g * r)
                            })
                            .collect(),
                    )?;
                    let mut drow = Tensor::zeros(&[1, n]);
                    let adata = self.nodes[*a].value.data();
                    for (gchunk, achunk) in gdata.chunks(n).zip(adata.chunks(n)) {
                        for ((d, g), a) in drow.data_mut().iter_mut().zip(gchunk).zip(achunk) {
                            *d += g * a;
                        }
                    }
                    accum(*a, da);
                    accum(*row, drow);
                }
                Op::Relu(a) => {
                    let da = Tensor::new(
                        g.shape().to_vec(),
                        gdata
                            .iter()
                            .zip(self.nodes[*a].value.data())
                            .map(|(g, x)| if *x > 0.0 { *g } else { 0.0 })
                            .collect(),
                    )?;
                    accum(*a, da);
                }
                Op::Sigmoid(a) => {
                    let da = Tensor::new(
                        g.shape().to_vec(),
                        gdata
                            .iter()
                            .zip(node.value.data())
                            .map(|(g, s)| g * s * (1.0 - s))
                            .collect(),
                    )?;
                    accum(*a, da);
                }
                Op::Tanh(a) => {
                    let da = Tensor::new(
                        g.shape().to_vec(),
                        gdata
                            .iter()
                            .zip(node.value.data())
                            .map(|(g, t)| g * (1.0 - t * t))
                            .collect(),
                    )?;
                    accum(*a, da);
                }
                Op::Exp(a) => {
                    let da = Tensor::new(
                        g.shape().to_vec(),
                        gdata
                            .iter()
                            .zip(node.value.data())
                            .map(|(g, e)| g * e)
                            .collect(),
                    )?;
                    accum(*a, da);
                }
                Op::Scale(a, s) => {
                    let da = Tensor::new(
                        g.shape().to_vec(),
                        gdata.iter().map(|g| g * s).collect(),
                    )?;
                    accum(*a, da);
                }
                Op::ConcatCols(parts) => {
                    let m = node.value.rows();
                    let total = node.value.cols();
                    let mut offset = 0;
                    for &p in parts {
                        let n = self.nodes[p].value.cols();
                        let mut dp = Tensor::zeros(&[m, n]);
                        for i in 0..m {
                            let src = &gdata[i * total + offset..i * total + offset + n];
                            dp.data_mut()[i * n..(i + 1) * n].copy_from_slice(src);
                        }
                        accum(p, dp);
                        offset += n;
                    }
                }
                Op::SliceCols(a, start, _end) => {
                    let (m, n) = (self.nodes[*a].value.rows(), self.nodes[*a].value.cols());
                    let w = node.value.cols();
                    let mut da = Tensor::zeros(&[m, n]);
                    for i in 0..m {
                        da.data_mut()[i * n + start..i * n + start + w]
                            .copy_from_slice(&gdata[i * w..(i + 1) * w]);
                    }
                    accum(*a, da);
                }
                Op::SumAll(a) => {
                    let s = gdata[0];
                    let da = Tensor::new(
                        self.nodes[*a].value.shape().to_vec(),
                        vec![s; self.nodes[*a].value.len()],
                    )?;
                    accum(*a, da);
                }
                Op::MeanAll(a) => {
                    let len = self.nodes[*a].value.len();
                    let s = gdata[0] / len as f64;
                    let da = Tensor::new(self.nodes[*a].value.shape().to_vec(), vec![s; len])?;
                    accum(*a, da);
                }
            }
            // take() emptied this node's slot while we propagated; put the
            // gradient back so callers can read every node's gradient.
            grads[id] = Some(g);
        }
        Ok(grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_gradient() {
        // f(x) = x^2 at x = 3 -> df/dx = 6
        let mut g = Graph::new();
        let x = g.leaf(Tensor::scalar(3.0));
        let y = g.mul(x, x).unwrap();
        let grads = g.backward(y).unwrap();
        assert_eq!(grads[x.0].as_ref().unwrap().item(), 6.0);
    }

    #[test]
    fn matmul_forward_matches_straight_line_evaluation() {
        let mut g = Graph::new();
        let a = g.leaf(Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap());
        let b = g.leaf(Tensor::matrix(3, 2, vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]).unwrap());
        let c = g.matmul(a, b).unwrap();
        // Hand-computed product.
        assert_eq!(g.value(c).data(), &[58.0, 64.0, 139.0, 154.0]);
    }

    #[test]
    fn backward_requires_scalar_root() {
        let mut g = Graph::new();
        let a = g.leaf(Tensor::matrix(1, 2, vec![1.0, 2.0]).unwrap());
        assert!(g.backward(a).is_err());
        assert!(matches!(
            Graph::new().backward(Var(5)),
            Err(Error::GraphNotRecorded)
        ));
    }

    #[test]
    fn unreachable_nodes_have_no_gradient() {
        let mut g = Graph::new();
        let a = g.leaf(Tensor::scalar(1.0));
        let b = g.leaf(Tensor::scalar(2.0));
        let c = g.mul(a, a).unwrap();
        let grads = g.backward(c).unwrap();
        assert!(grads[b.0].is_none());
        assert!(grads[a.0].is_some());
    }

    #[test]
    fn shape_mismatches_rejected() {
        let mut g = Graph::new();
        let a = g.leaf(Tensor::matrix(2, 3, vec![0.0; 6]).unwrap());
        let b = g.leaf(Tensor::matrix(2, 2, vec![0.0; 4]).unwrap());
        assert!(g.add(a, b).is_err());
        assert!(g.matmul(a, b).is_err());
        assert!(g.slice_cols(a, 2, 2).is_err());
    }

    /// Central finite differences over every leaf entry. The builder gets
    /// the already-registered leaf vars.
    fn finite_diff_check(build: impl Fn(&mut Graph, &[Var]) -> Var, leaves: Vec<Tensor>) {
        let run = |ts: &[Tensor]| -> (Graph, Vec<Var>, Var) {
            let mut g = Graph::new();
            let vars: Vec<Var> = ts.iter().map(|t| g.leaf(t.clone())).collect();
            let loss = build(&mut g, &vars);
            (g, vars, loss)
        };
        let (g, vars, loss) = run(&leaves);
        let grads = g.backward(loss).unwrap();
        let h = 1e-5;
        for (li, leaf) in leaves.iter().enumerate() {
            for e in 0..leaf.len() {
                let mut plus = leaves.clone();
                plus[li].data_mut()[e] += h;
                let (gp, _, lp) = run(&plus);
                let mut minus = leaves.clone();
                minus[li].data_mut()[e] -= h;
                let (gm, _, lm) = run(&minus);
                let numeric = (gp.value(lp).item() - gm.value(lm).item()) / (2.0 * h);
                let analytic = grads[vars[li].0]
                    .as_ref()
                    .map(|t| t.data()[e])
                    .unwrap_or(0.0);
                let denom = (analytic.abs() + numeric.abs()).max(1e-2);
                assert!(
                    (analytic - numeric).abs() / denom < 1e-4,
                    "leaf {li} entry {e}: analytic {analytic} vs numeric {numeric}"
                );
            }
        }
    }

    #[test]
    fn composite_ops_match_finite_differences() {
        use rand::Rng;
        use rand_chacha::rand_core::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let rand_t = |rng: &mut rand_chacha::ChaCha8Rng, r: usize, c: usize| {
            Tensor::matrix(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
        };
        let leaves = vec![
            rand_t(&mut rng, 2, 3),
            rand_t(&mut rng, 3, 4),
            rand_t(&mut rng, 1, 4),
            rand_t(&mut rng, 2, 4),
        ];
        finite_diff_check(
            |g, vars| {
                let (a, b, bias, w) = (vars[0], vars[1], vars[2], vars[3]);
                let mm = g.matmul(a, b).unwrap();
                let ab = g.add_row(mm, bias).unwrap();
                let act = g.tanh(ab);
                let sg = g.sigmoid(act);
                let sliced = g.slice_cols(sg, 1, 4).unwrap();
                let wz = g.slice_cols(w, 0, 3).unwrap();
                let prod = g.mul(sliced, wz).unwrap();
                let scaled = g.scale(prod, 1.7);
                let ex = g.exp(scaled);
                let cat = g.concat_cols(&[ex, sliced]).unwrap();
                let r = g.relu(cat);
                g.mean_all(r)
            },
            leaves,
        );
    }
}
