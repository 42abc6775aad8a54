//! Reverse-mode differentiation over a per-forward-pass tape.
//!
//! Activations are 2-D `[rows, cols]` tensors where rows index the batch.
//! A 1-D tensor is read as a single row. Nodes are appended in execution
//! order, so the tape is already topologically sorted and `backward` walks
//! it from the end.

use crate::error::{Error, Result};
use crate::params::{ParamId, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::{circular_convolution_into, Tensor};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf { param: Option<ParamId> },
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Affine(Var, T, T),
    Sigmoid(Var),
    Tanh(Var),
    ConcatCols(Var, Var),
    SliceCols(Var, usize),
    Gather(Var, Vec<usize>),
    OuterRows(Var, Var),
    CircConvRows(Var, Var),
    Softmax(Var),
    LogSoftmax(Var),
    Nll(Var, Vec<usize>),
    Mse(Var, Var),
    SumAll(Var),
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Operation tape. Build one per forward pass and drop it after `backward`.
#[derive(Debug, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

/// Gradients produced by [`Graph::backward`].
#[derive(Debug)]
pub struct Gradients<T> {
    by_node: Vec<Option<Tensor<T>>>,
    by_param: Vec<(ParamId, Var)>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of a leaf, or `None` when the leaf does not require grad
    /// or did not influence the loss.
    pub fn wrt(&self, v: Var) -> Option<&Tensor<T>> {
        self.by_node.get(v.0).and_then(Option::as_ref)
    }

    /// Summed gradient for a parameter across every leaf bound to it.
    pub fn param(&self, id: ParamId) -> Option<Tensor<T>> {
        let mut acc: Option<Tensor<T>> = None;
        for &(pid, var) in &self.by_param {
            if pid != id {
                continue;
            }
            if let Some(g) = self.wrt(var) {
                match acc.as_mut() {
                    None => acc = Some(g.clone()),
                    Some(a) => a.data_mut().iter_mut().zip(g.data()).for_each(|(x, y)| *x += *y),
                }
            }
        }
        acc
    }

    /// Per-parameter gradients aligned with the store's ids.
    pub fn collect(&self, store: &ParamStore<T>) -> Vec<Option<Tensor<T>>> {
        store.ids().map(|id| self.param(id)).collect()
    }
}

fn shape2(t: &[usize]) -> (usize, usize) {
    match t.len() {
        0 => (1, 1),
        1 => (1, t[0]),
        _ => (t[0], t[1..].iter().product()),
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    fn dims(&self, v: Var) -> (usize, usize) {
        shape2(self.nodes[v.0].value.shape())
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf { param: None }, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    /// Bind a trainable parameter as a leaf.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        let value = store.get(id).clone();
        self.push(value, Op::Leaf { param: Some(id) }, true)
    }

    /// Bind a parameter without tracking its gradient.
    pub fn frozen(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        self.constant(store.get(id).clone())
    }

    fn mismatch(&self, context: &'static str, a: Var, b: Var) -> Error {
        Error::ShapeMismatch {
            context,
            left: self.nodes[a.0].value.shape().to_vec(),
            right: self.nodes[b.0].value.shape().to_vec(),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims(a);
        let (k2, n) = self.dims(b);
        if k != k2 {
            return Err(self.mismatch("matmul", a, b));
        }
        let mut out = vec![T::zero(); m * n];
        T::gemm(
            m,
            k,
            n,
            T::one(),
            self.nodes[a.0].value.data(),
            k as isize,
            1,
            self.nodes[b.0].value.data(),
            n as isize,
            1,
            T::zero(),
            &mut out,
            n as isize,
            1,
        );
        let rg = self.needs(&[a, b]);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(a, b), rg))
    }

    fn zip(&mut self, a: Var, b: Var, context: &'static str, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        let (x, y) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if x.len() != y.len() || self.dims(a) != self.dims(b) {
            return Err(self.mismatch(context, a, b));
        }
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| f(p, q)).collect();
        Tensor::new(x.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip(a, b, "add", |p, q| p + q)?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip(a, b, "sub", |p, q| p - q)?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(out, Op::Sub(a, b), rg))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip(a, b, "elementwise product", |p, q| p * q)?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    /// `a[m, n] + bias[n]` broadcast over rows.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (m, n) = self.dims(a);
        let (br, bn) = self.dims(bias);
        if br != 1 || bn != n {
            return Err(self.mismatch("bias broadcast", a, bias));
        }
        let x = &self.nodes[a.0].value;
        let b = self.nodes[bias.0].value.data();
        let mut data = x.data().to_vec();
        for row in data.chunks_exact_mut(n) {
            row.iter_mut().zip(b).for_each(|(v, &c)| *v += c);
        }
        let out = Tensor::new(vec![m, n], data)?;
        let rg = self.needs(&[a, bias]);
        Ok(self.push(out, Op::AddRow(a, bias), rg))
    }

    /// `scale * a + shift`.
    pub fn affine(&mut self, a: Var, scale: T, shift: T) -> Var {
        let out = self.nodes[a.0].value.map(|v| scale * v + shift);
        let rg = self.needs(&[a]);
        self.push(out, Op::Affine(a, scale, shift), rg)
    }

    pub fn scale(&mut self, a: Var, factor: T) -> Var {
        self.affine(a, factor, T::zero())
    }

    /// `1 - a`.
    pub fn one_minus(&mut self, a: Var) -> Var {
        self.affine(a, -T::one(), T::one())
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.nodes[a.0].value.map(|v| T::one() / (T::one() + (-v).exp()));
        let rg = self.needs(&[a]);
        self.push(out, Op::Sigmoid(a), rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.nodes[a.0].value.map(T::tanh);
        let rg = self.needs(&[a]);
        self.push(out, Op::Tanh(a), rg)
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, n1) = self.dims(a);
        let (m2, n2) = self.dims(b);
        if m != m2 {
            return Err(self.mismatch("concat", a, b));
        }
        let (x, y) = (self.nodes[a.0].value.data(), self.nodes[b.0].value.data());
        let mut data = Vec::with_capacity(m * (n1 + n2));
        for r in 0..m {
            data.extend_from_slice(&x[r * n1..(r + 1) * n1]);
            data.extend_from_slice(&y[r * n2..(r + 1) * n2]);
        }
        let rg = self.needs(&[a, b]);
        Ok(self.push(Tensor::new(vec![m, n1 + n2], data)?, Op::ConcatCols(a, b), rg))
    }

    /// Columns `start..start + len` of a 2-D node.
    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (m, n) = self.dims(a);
        if start + len > n {
            return Err(Error::DimensionMismatch { context: "column slice", expected: n, found: start + len });
        }
        let x = self.nodes[a.0].value.data();
        let mut data = Vec::with_capacity(m * len);
        for r in 0..m {
            data.extend_from_slice(&x[r * n + start..r * n + start + len]);
        }
        let rg = self.needs(&[a]);
        Ok(self.push(Tensor::new(vec![m, len], data)?, Op::SliceCols(a, start), rg))
    }

    /// Rows of an embedding table selected by `indices`.
    pub fn gather(&mut self, table: Var, indices: &[usize]) -> Result<Var> {
        let (rows, d) = self.dims(table);
        if let Some(&bad) = indices.iter().find(|&&i| i >= rows) {
            return Err(Error::DimensionMismatch { context: "gather index", expected: rows, found: bad });
        }
        let t = self.nodes[table.0].value.data();
        let mut data = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            data.extend_from_slice(&t[i * d..(i + 1) * d]);
        }
        let rg = self.needs(&[table]);
        Ok(self.push(Tensor::new(vec![indices.len(), d], data)?, Op::Gather(table, indices.to_vec()), rg))
    }

    /// Row-wise flattened outer product: `out[r, i*n + j] = a[r, i] * b[r, j]`.
    pub fn outer_rows(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ra, m) = self.dims(a);
        let (rb, n) = self.dims(b);
        if ra != rb {
            return Err(self.mismatch("outer product", a, b));
        }
        let (x, y) = (self.nodes[a.0].value.data(), self.nodes[b.0].value.data());
        let mut data = Vec::with_capacity(ra * m * n);
        for r in 0..ra {
            let yr = &y[r * n..(r + 1) * n];
            for &xi in &x[r * m..(r + 1) * m] {
                data.extend(yr.iter().map(|&yj| xi * yj));
            }
        }
        let rg = self.needs(&[a, b]);
        Ok(self.push(Tensor::new(vec![ra, m * n], data)?, Op::OuterRows(a, b), rg))
    }

    /// Row-wise circular convolution of equal-width operands.
    pub fn circular_conv_rows(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ra, n) = self.dims(a);
        let (rb, n2) = self.dims(b);
        if n != n2 {
            return Err(Error::DimensionMismatch { context: "circular convolution", expected: n, found: n2 });
        }
        if ra != rb {
            return Err(self.mismatch("circular convolution", a, b));
        }
        let (x, y) = (self.nodes[a.0].value.data(), self.nodes[b.0].value.data());
        let mut data = vec![T::zero(); ra * n];
        for r in 0..ra {
            circular_convolution_into(&x[r * n..(r + 1) * n], &y[r * n..(r + 1) * n], &mut data[r * n..(r + 1) * n]);
        }
        let rg = self.needs(&[a, b]);
        Ok(self.push(Tensor::new(vec![ra, n], data)?, Op::CircConvRows(a, b), rg))
    }

    pub fn softmax(&mut self, a: Var) -> Var {
        let (m, n) = self.dims(a);
        let mut data = self.nodes[a.0].value.data().to_vec();
        for row in data.chunks_exact_mut(n.max(1)) {
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut total = T::zero();
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            row.iter_mut().for_each(|v| *v = *v / total);
        }
        let rg = self.needs(&[a]);
        self.push(Tensor::new(vec![m, n], data).expect("shape preserved"), Op::Softmax(a), rg)
    }

    pub fn log_softmax(&mut self, a: Var) -> Var {
        let (m, n) = self.dims(a);
        let mut data = self.nodes[a.0].value.data().to_vec();
        for row in data.chunks_exact_mut(n.max(1)) {
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = row.iter().map(|&v| (v - max).exp()).sum::<T>().ln() + max;
            row.iter_mut().for_each(|v| *v -= lse);
        }
        let rg = self.needs(&[a]);
        self.push(Tensor::new(vec![m, n], data).expect("shape preserved"), Op::LogSoftmax(a), rg)
    }

    /// Mean negative log-likelihood of `targets` under row log-probabilities.
    pub fn nll(&mut self, log_probs: Var, targets: &[usize]) -> Result<Var> {
        let (m, n) = self.dims(log_probs);
        if targets.len() != m {
            return Err(Error::DimensionMismatch { context: "nll targets", expected: m, found: targets.len() });
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= n) {
            return Err(Error::DimensionMismatch { context: "nll class", expected: n, found: bad });
        }
        let lp = self.nodes[log_probs.0].value.data();
        let total: T = targets.iter().enumerate().map(|(r, &t)| lp[r * n + t]).sum();
        let out = Tensor::scalar(-total / T::from_usize_lossy(m));
        let rg = self.needs(&[log_probs]);
        Ok(self.push(out, Op::Nll(log_probs, targets.to_vec()), rg))
    }

    /// Mean squared error over all elements.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        let (x, y) = (&self.nodes[pred.0].value, &self.nodes[target.0].value);
        if x.len() != y.len() {
            return Err(self.mismatch("mse", pred, target));
        }
        let n = T::from_usize_lossy(x.len());
        let total: T = x.data().iter().zip(y.data()).map(|(&p, &t)| (p - t) * (p - t)).sum();
        let rg = self.needs(&[pred, target]);
        Ok(self.push(Tensor::scalar(total / n), Op::Mse(pred, target), rg))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let total = self.nodes[a.0].value.sum();
        let rg = self.needs(&[a]);
        self.push(Tensor::scalar(total), Op::SumAll(a), rg)
    }

    /// Reverse pass from a single-element loss node.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let loss_value = &self.nodes[loss.0].value;
        if loss_value.len() != 1 {
            return Err(Error::NonScalarLoss(loss_value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::filled(loss_value.shape(), T::one()));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                grads[i] = None;
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            if let Op::Leaf { .. } = node.op {
                grads[i] = Some(g);
                continue;
            }
            self.propagate(node, &g, &mut grads);
        }

        let by_param = self
            .nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| match n.op {
                Op::Leaf { param: Some(pid) } => Some((pid, Var(i))),
                _ => None,
            })
            .collect();
        Ok(Gradients { by_node: grads, by_param })
    }

    fn propagate(&self, node: &Node<T>, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let gd = g.data();
        match &node.op {
            Op::Leaf { .. } => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.dims(*a);
                let n = self.dims(*b).1;
                if let Some(buf) = self.slot(*a, grads) {
                    // dA += G * B^T
                    let bd = self.nodes[b.0].value.data();
                    T::gemm(m, n, k, T::one(), gd, n as isize, 1, bd, 1, n as isize, T::one(), buf, k as isize, 1);
                }
                if let Some(buf) = self.slot(*b, grads) {
                    // dB += A^T * G
                    let ad = self.nodes[a.0].value.data();
                    T::gemm(k, m, n, T::one(), ad, 1, k as isize, gd, n as isize, 1, T::one(), buf, n as isize, 1);
                }
            }
            Op::Add(a, b) => {
                if let Some(buf) = self.slot(*a, grads) {
                    buf.iter_mut().zip(gd).for_each(|(x, &y)| *x += y);
                }
                if let Some(buf) = self.slot(*b, grads) {
                    buf.iter_mut().zip(gd).for_each(|(x, &y)| *x += y);
                }
            }
            Op::Sub(a, b) => {
                if let Some(buf) = self.slot(*a, grads) {
                    buf.iter_mut().zip(gd).for_each(|(x, &y)| *x += y);
                }
                if let Some(buf) = self.slot(*b, grads) {
                    buf.iter_mut().zip(gd).for_each(|(x, &y)| *x -= y);
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.nodes[a.0].value.data(), self.nodes[b.0].value.data());
                if let Some(buf) = self.slot(*a, grads) {
                    for ((x, &gg), &y) in buf.iter_mut().zip(gd).zip(bv) {
                        *x += gg * y;
                    }
                }
                if let Some(buf) = self.slot(*b, grads) {
                    for ((x, &gg), &y) in buf.iter_mut().zip(gd).zip(av) {
                        *x += gg * y;
                    }
                }
            }
            Op::AddRow(a, bias) => {
                let n = self.dims(*a).1;
                if let Some(buf) = self.slot(*a, grads) {
                    buf.iter_mut().zip(gd).for_each(|(x, &y)| *x += y);
                }
                if let Some(buf) = self.slot(*bias, grads) {
                    for row in gd.chunks_exact(n) {
                        buf.iter_mut().zip(row).for_each(|(x, &y)| *x += y);
                    }
                }
            }
            Op::Affine(a, scale, _) => {
                if let Some(buf) = self.slot(*a, grads) {
                    buf.iter_mut().zip(gd).for_each(|(x, &y)| *x += *scale * y);
                }
            }
            Op::Sigmoid(a) => {
                let y = node.value.data();
                if let Some(buf) = self.slot(*a, grads) {
                    for ((x, &gg), &s) in buf.iter_mut().zip(gd).zip(y) {
                        *x += gg * s * (T::one() - s);
                    }
                }
            }
            Op::Tanh(a) => {
                let y = node.value.data();
                if let Some(buf) = self.slot(*a, grads) {
                    for ((x, &gg), &t) in buf.iter_mut().zip(gd).zip(y) {
                        *x += gg * (T::one() - t * t);
                    }
                }
            }
            Op::ConcatCols(a, b) => {
                let (m, n1) = self.dims(*a);
                let n2 = self.dims(*b).1;
                let w = n1 + n2;
                if let Some(buf) = self.slot(*a, grads) {
                    for r in 0..m {
                        buf[r * n1..(r + 1) * n1].iter_mut().zip(&gd[r * w..r * w + n1]).for_each(|(x, &y)| *x += y);
                    }
                }
                if let Some(buf) = self.slot(*b, grads) {
                    for r in 0..m {
                        buf[r * n2..(r + 1) * n2].iter_mut().zip(&gd[r * w + n1..(r + 1) * w]).for_each(|(x, &y)| *x += y);
                    }
                }
            }
            Op::SliceCols(a, start) => {
                let (m, n) = self.dims(*a);
                let len = node.value.cols();
                if let Some(buf) = self.slot(*a, grads) {
                    for r in 0..m {
                        buf[r * n + start..r * n + start + len]
                            .iter_mut()
                            .zip(&gd[r * len..(r + 1) * len])
                            .for_each(|(x, &y)| *x += y);
                    }
                }
            }
            Op::Gather(table, indices) => {
                let d = self.dims(*table).1;
                if let Some(buf) = self.slot(*table, grads) {
                    for (r, &i) in indices.iter().enumerate() {
                        buf[i * d..(i + 1) * d].iter_mut().zip(&gd[r * d..(r + 1) * d]).for_each(|(x, &y)| *x += y);
                    }
                }
            }
            Op::OuterRows(a, b) => {
                let (rows, m) = self.dims(*a);
                let n = self.dims(*b).1;
                let (av, bv) = (self.nodes[a.0].value.data(), self.nodes[b.0].value.data());
                if let Some(buf) = self.slot(*a, grads) {
                    for r in 0..rows {
                        let br = &bv[r * n..(r + 1) * n];
                        for i in 0..m {
                            let gr = &gd[r * m * n + i * n..r * m * n + (i + 1) * n];
                            buf[r * m + i] += gr.iter().zip(br).map(|(&x, &y)| x * y).sum::<T>();
                        }
                    }
                }
                if let Some(buf) = self.slot(*b, grads) {
                    for r in 0..rows {
                        for i in 0..m {
                            let ai = av[r * m + i];
                            let gr = &gd[r * m * n + i * n..r * m * n + (i + 1) * n];
                            buf[r * n..(r + 1) * n].iter_mut().zip(gr).for_each(|(x, &y)| *x += ai * y);
                        }
                    }
                }
            }
            Op::CircConvRows(a, b) => {
                let (rows, n) = self.dims(*a);
                let (av, bv) = (self.nodes[a.0].value.data(), self.nodes[b.0].value.data());
                // out[k] = sum_{j+m = k mod n} a[j] b[m]  =>  dA[j] = sum_m g[j+m] b[m]
                let corr = |other: &[T], gr: &[T], buf: &mut [T]| {
                    for (j, slot) in buf.iter_mut().enumerate() {
                        let mut acc = T::zero();
                        for (m, &o) in other.iter().enumerate() {
                            let k = (j + m) % n;
                            acc += gr[k] * o;
                        }
                        *slot += acc;
                    }
                };
                if let Some(buf) = self.slot(*a, grads) {
                    for r in 0..rows {
                        corr(&bv[r * n..(r + 1) * n], &gd[r * n..(r + 1) * n], &mut buf[r * n..(r + 1) * n]);
                    }
                }
                if let Some(buf) = self.slot(*b, grads) {
                    for r in 0..rows {
                        corr(&av[r * n..(r + 1) * n], &gd[r * n..(r + 1) * n], &mut buf[r * n..(r + 1) * n]);
                    }
                }
            }
            Op::Softmax(a) => {
                let n = node.value.cols();
                let y = node.value.data();
                if let Some(buf) = self.slot(*a, grads) {
                    for ((yr, gr), br) in y.chunks_exact(n).zip(gd.chunks_exact(n)).zip(buf.chunks_exact_mut(n)) {
                        let dot: T = yr.iter().zip(gr).map(|(&p, &q)| p * q).sum();
                        for ((x, &p), &q) in br.iter_mut().zip(yr).zip(gr) {
                            *x += p * (q - dot);
                        }
                    }
                }
            }
            Op::LogSoftmax(a) => {
                let n = node.value.cols();
                let y = node.value.data();
                if let Some(buf) = self.slot(*a, grads) {
                    for ((yr, gr), br) in y.chunks_exact(n).zip(gd.chunks_exact(n)).zip(buf.chunks_exact_mut(n)) {
                        let total: T = gr.iter().copied().sum();
                        for ((x, &lp), &q) in br.iter_mut().zip(yr).zip(gr) {
                            *x += q - lp.exp() * total;
                        }
                    }
                }
            }
            Op::Nll(lp, targets) => {
                let n = self.dims(*lp).1;
                let coef = -gd[0] / T::from_usize_lossy(targets.len());
                if let Some(buf) = self.slot(*lp, grads) {
                    for (r, &t) in targets.iter().enumerate() {
                        buf[r * n + t] += coef;
                    }
                }
            }
            Op::Mse(p, t) => {
                let (pv, tv) = (self.nodes[p.0].value.data(), self.nodes[t.0].value.data());
                let coef = gd[0] * T::from_f64_lossy(2.0) / T::from_usize_lossy(pv.len());
                if let Some(buf) = self.slot(*p, grads) {
                    for ((x, &a), &b) in buf.iter_mut().zip(pv).zip(tv) {
                        *x += coef * (a - b);
                    }
                }
                if let Some(buf) = self.slot(*t, grads) {
                    for ((x, &a), &b) in buf.iter_mut().zip(pv).zip(tv) {
                        *x -= coef * (a - b);
                    }
                }
            }
            Op::SumAll(a) => {
                if let Some(buf) = self.slot(*a, grads) {
                    buf.iter_mut().for_each(|x| *x += gd[0]);
                }
            }
        }
    }

    /// Gradient accumulator for `v`, allocated on first use; `None` when
    /// `v` does not require grad.
    fn slot<'g>(&self, v: Var, grads: &'g mut [Option<Tensor<T>>]) -> Option<&'g mut [T]> {
        let node = &self.nodes[v.0];
        if !node.requires_grad {
            return None;
        }
        let entry = &mut grads[v.0];
        if entry.is_none() {
            *entry = Some(Tensor::zeros(node.value.shape()));
        }
        entry.as_mut().map(Tensor::data_mut)
    }
}
