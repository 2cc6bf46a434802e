use crate::error::{shape_err, Error, Result};
use crate::kernels::{self, ConvDims};
use crate::real::Real;
use crate::tensor::{check_shape, Tensor};

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T: Real> {
    Leaf,
    Add(Var, Var),
    Mul(Var, Var),
    MatMul(Var, Var),
    Conv2d { x: Var, k: Var, bias: Var },
    Relu(Var),
    Sigmoid(Var),
    GlobalAvgPool(Var),
    MseLoss(Var, Var),
    Reshape(Var),
    Sum(Var),
    Scale(Var, T),
    /// Complex multiply of `[.., S, 2]` pairs by constant coefficients
    /// `[B, Sh, 2]` with `Sh` either 1 or `S`.
    ComplexMul { x: Var, h: Vec<T>, per_symbol: bool },
    /// Per-leading-index rescale to a fixed mean power; stores the norms.
    NormalizePower { x: Var, gain: T, norms: Vec<T> },
}

#[derive(Debug)]
struct Node<T: Real> {
    shape: Vec<usize>,
    value: Vec<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Define-by-run record of a forward pass. Nodes are appended in creation
/// order, so parents always precede children. A tape supports exactly one
/// backward pass.
#[derive(Debug)]
pub struct Tape<T: Real = f32> {
    nodes: Vec<Node<T>>,
    consumed: bool,
}

/// Gradients of a scalar with respect to the nodes of a consumed tape.
#[derive(Debug)]
pub struct Gradients<T: Real = f32> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn wrt(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Adds the gradient of `v` into `param`'s gradient buffer. A node that
    /// received no gradient contributes zeros.
    pub fn accumulate_into(&self, v: Var, param: &mut Tensor<T>) -> Result<()> {
        match self.wrt(v) {
            Some(g) => param.accumulate_grad(g),
            None if param.requires_grad() => Ok(()),
            None => Err(Error::Contract(
                "accumulate_into target does not require grad".into(),
            )),
        }
    }
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            consumed: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    /// Smallest `|input|` over every ReLU recorded so far, i.e. the distance
    /// of the current point from the nearest kink. `None` without ReLUs.
    /// Finite-difference checks are only meaningful when this exceeds the
    /// perturbation's effect on the pre-activations.
    pub fn relu_margin(&self) -> Option<T> {
        self.nodes
            .iter()
            .filter_map(|n| match n.op {
                Op::Relu(x) => self.value(x).iter().map(|v| v.abs()).reduce(T::min),
                _ => None,
            })
            .reduce(T::min)
    }

    /// Copies the node out as a standalone (non-trainable) tensor.
    pub fn to_tensor(&self, v: Var) -> Tensor<T> {
        let n = &self.nodes[v.0];
        Tensor::from_vec(n.shape.clone(), n.value.clone()).expect("node shape is valid")
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<T>, op: Op<T>, requires_grad: bool) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node {
            shape,
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Records a copy of `t` as a graph leaf. The leaf requires grad iff `t` does.
    pub fn leaf(&mut self, t: &Tensor<T>) -> Var {
        self.push(t.shape().to_vec(), t.data().to_vec(), Op::Leaf, t.requires_grad())
    }

    /// Records an owned constant leaf.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        let shape = t.shape().to_vec();
        self.push(shape, t.into_data(), Op::Leaf, false)
    }

    fn broadcast_shape(&self, a: Var, b: Var, op: &str) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sb.len() > sa.len() {
            return shape_err(format!("{op}: cannot broadcast {sb:?} onto {sa:?}"));
        }
        let off = sa.len() - sb.len();
        for (i, &d) in sb.iter().enumerate() {
            if d != 1 && d != sa[i + off] {
                return shape_err(format!("{op}: cannot broadcast {sb:?} onto {sa:?}"));
            }
        }
        Ok(())
    }

    fn binary_broadcast(&mut self, a: Var, b: Var, mul: bool) -> Result<Var> {
        self.broadcast_shape(a, b, if mul { "mul" } else { "add" })?;
        let shape = self.shape(a).to_vec();
        let (va, vb) = (self.value(a), self.value(b));
        let value: Vec<T> = if va.len() == vb.len() {
            if mul {
                va.iter().zip(vb).map(|(&x, &y)| x * y).collect()
            } else {
                va.iter().zip(vb).map(|(&x, &y)| x + y).collect()
            }
        } else {
            let map = kernels::broadcast_index_map(&shape, self.shape(b));
            if mul {
                va.iter().zip(&map).map(|(&x, &j)| x * vb[j]).collect()
            } else {
                va.iter().zip(&map).map(|(&x, &j)| x + vb[j]).collect()
            }
        };
        let rg = self.rg(a) || self.rg(b);
        let op = if mul { Op::Mul(a, b) } else { Op::Add(a, b) };
        Ok(self.push(shape, value, op, rg))
    }

    /// Elementwise `a + b`; `b` may broadcast onto `a` along size-1 axes.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_broadcast(a, b, false)
    }

    /// Elementwise `a * b`; `b` may broadcast onto `a` along size-1 axes.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_broadcast(a, b, true)
    }

    /// 2-D matrix product.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return shape_err(format!("matmul: incompatible {sa:?} x {sb:?}"));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let value = kernels::matmul(self.value(a), self.value(b), m, k, n);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(vec![m, n], value, Op::MatMul(a, b), rg))
    }

    fn conv_dims(&self, x: Var, k: Var, bias: Var) -> Result<ConvDims> {
        let (sx, sk, sbias) = (self.shape(x), self.shape(k), self.shape(bias));
        if sx.len() != 4 || sk.len() != 4 {
            return shape_err(format!("conv2d: expected NHWC input and HWIO kernel, got {sx:?}, {sk:?}"));
        }
        if sk[0] % 2 == 0 || sk[1] % 2 == 0 {
            return shape_err(format!("conv2d: kernel {sk:?} must have odd spatial size"));
        }
        if sk[2] != sx[3] {
            return shape_err(format!(
                "conv2d: input has {} channels but kernel expects {}",
                sx[3], sk[2]
            ));
        }
        if sbias != [sk[3]] {
            return shape_err(format!("conv2d: bias {sbias:?} does not match {} outputs", sk[3]));
        }
        Ok(ConvDims {
            batch: sx[0],
            height: sx[1],
            width: sx[2],
            cin: sx[3],
            cout: sk[3],
            kh: sk[0],
            kw: sk[1],
        })
    }

    /// NHWC 2-D cross-correlation with stride 1 and same zero padding.
    pub fn conv2d(&mut self, x: Var, k: Var, bias: Var) -> Result<Var> {
        let d = self.conv_dims(x, k, bias)?;
        let value = kernels::conv2d_forward(d, self.value(x), self.value(k), self.value(bias));
        let rg = self.rg(x) || self.rg(k) || self.rg(bias);
        Ok(self.push(
            vec![d.batch, d.height, d.width, d.cout],
            value,
            Op::Conv2d { x, k, bias },
            rg,
        ))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self
            .value(x)
            .iter()
            .map(|&v| if v > T::zero() { v } else { T::zero() })
            .collect();
        let shape = self.shape(x).to_vec();
        let rg = self.rg(x);
        self.push(shape, value, Op::Relu(x), rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = self.value(x).iter().map(|&v| sigmoid(v)).collect();
        let shape = self.shape(x).to_vec();
        let rg = self.rg(x);
        self.push(shape, value, Op::Sigmoid(x), rg)
    }

    /// Mean over the two spatial axes of an NHWC tensor: `[B,H,W,C] -> [B,C]`.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x);
        if s.len() != 4 {
            return shape_err(format!("global_avg_pool: expected NHWC, got {s:?}"));
        }
        let (b, hw, c) = (s[0], s[1] * s[2], s[3]);
        let xv = self.value(x);
        let mut value = Vec::with_capacity(b * c);
        for bi in 0..b {
            let mut acc = vec![0.0f64; c];
            for p in 0..hw {
                let row = &xv[(bi * hw + p) * c..(bi * hw + p + 1) * c];
                acc.iter_mut().zip(row).for_each(|(a, &v)| *a += v.as_f64());
            }
            value.extend(acc.into_iter().map(|a| T::from_f64_lossy(a / hw as f64)));
        }
        let rg = self.rg(x);
        Ok(self.push(vec![b, c], value, Op::GlobalAvgPool(x), rg))
    }

    /// Mean squared error over all elements; returns a `[1]` scalar.
    pub fn mse_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        if self.shape(pred) != self.shape(target) {
            return shape_err(format!(
                "mse_loss: {:?} vs {:?}",
                self.shape(pred),
                self.shape(target)
            ));
        }
        let (p, t) = (self.value(pred), self.value(target));
        let sum: f64 = p
            .iter()
            .zip(t)
            .map(|(&a, &b)| {
                let d = a.as_f64() - b.as_f64();
                d * d
            })
            .sum();
        let value = vec![T::from_f64_lossy(sum / p.len() as f64)];
        let rg = self.rg(pred) || self.rg(target);
        Ok(self.push(vec![1], value, Op::MseLoss(pred, target), rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let n = check_shape(shape)?;
        if n != self.value(x).len() {
            return shape_err(format!("reshape: {:?} -> {shape:?}", self.shape(x)));
        }
        let value = self.value(x).to_vec();
        let rg = self.rg(x);
        Ok(self.push(shape.to_vec(), value, Op::Reshape(x), rg))
    }

    /// Sum of all elements as a `[1]` scalar.
    pub fn sum(&mut self, x: Var) -> Var {
        let s: f64 = self.value(x).iter().map(|v| v.as_f64()).sum();
        let rg = self.rg(x);
        self.push(vec![1], vec![T::from_f64_lossy(s)], Op::Sum(x), rg)
    }

    pub fn scale(&mut self, x: Var, c: T) -> Var {
        let value = self.value(x).iter().map(|&v| v * c).collect();
        let shape = self.shape(x).to_vec();
        let rg = self.rg(x);
        self.push(shape, value, Op::Scale(x, c), rg)
    }

    /// Multiplies complex pairs `x: [B, S, 2]` by constant coefficients
    /// `h: [B, 1, 2]` (one per batch item) or `[B, S, 2]` (one per symbol).
    pub fn complex_mul(&mut self, x: Var, h: &Tensor<T>) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        let sh = h.shape();
        if sx.len() != 3 || sx[2] != 2 || sh.len() != 3 || sh[2] != 2 || sh[0] != sx[0] {
            return shape_err(format!("complex_mul: x {sx:?}, h {sh:?}"));
        }
        let per_symbol = match sh[1] {
            1 => false,
            s if s == sx[1] => true,
            _ => return shape_err(format!("complex_mul: x {sx:?}, h {sh:?}")),
        };
        let hv = h.data();
        let xv = self.value(x);
        let (b, s) = (sx[0], sx[1]);
        let mut value = vec![T::zero(); xv.len()];
        for bi in 0..b {
            for si in 0..s {
                let hi = if per_symbol { bi * s + si } else { bi };
                let (hr, him) = (hv[2 * hi], hv[2 * hi + 1]);
                let xi = 2 * (bi * s + si);
                let (xr, xim) = (xv[xi], xv[xi + 1]);
                value[xi] = hr * xr - him * xim;
                value[xi + 1] = hr * xim + him * xr;
            }
        }
        let rg = self.rg(x);
        Ok(self.push(
            sx,
            value,
            Op::ComplexMul {
                x,
                h: hv.to_vec(),
                per_symbol,
            },
            rg,
        ))
    }

    /// Rescales each leading-axis slice so that its mean power over `units`
    /// equals `target`: `y_b = x_b * sqrt(target * units) / ||x_b||`, where
    /// `units` is the slice length divided by `unit_len` (2 for complex pairs).
    pub fn normalize_power(&mut self, x: Var, unit_len: usize, target: T) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let b = shape[0];
        let per = self.value(x).len() / b;
        if unit_len == 0 || per % unit_len != 0 {
            return shape_err(format!("normalize_power: slice {per} not divisible by {unit_len}"));
        }
        let units = (per / unit_len) as f64;
        let gain = (target.as_f64() * units).sqrt();
        let xv = self.value(x);
        let mut norms = Vec::with_capacity(b);
        let mut value = Vec::with_capacity(xv.len());
        for chunk in xv.chunks_exact(per) {
            let n = chunk.iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>().sqrt().max(1e-12);
            norms.push(T::from_f64_lossy(n));
            let c = gain / n;
            value.extend(chunk.iter().map(|&v| T::from_f64_lossy(v.as_f64() * c)));
        }
        let rg = self.rg(x);
        Ok(self.push(
            shape,
            value,
            Op::NormalizePower {
                x,
                gain: T::from_f64_lossy(gain),
                norms,
            },
            rg,
        ))
    }

    /// Reverse pass from a `[1]`-shaped loss. Consumes the recorded graph;
    /// node values stay readable but a second call fails.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients<T>> {
        if self.consumed {
            return Err(Error::TapeConsumed);
        }
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        self.consumed = true;
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        if !self.rg(loss) {
            return Ok(Gradients { grads });
        }
        grads[loss.0] = Some(vec![T::one()]);

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &mut grads);
            if matches!(self.nodes[i].op, Op::Leaf) {
                grads[i] = Some(g);
            }
        }
        for node in &mut self.nodes {
            node.op = Op::Leaf;
        }
        Ok(Gradients { grads })
    }

    fn backprop_node(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[i];
        let mut send = |v: Var, delta: Vec<T>| {
            if !self.rg(v) {
                return;
            }
            match grads[v.0].as_mut() {
                Some(acc) => acc.iter_mut().zip(delta).for_each(|(a, d)| *a += d),
                None => grads[v.0] = Some(delta),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if self.rg(*a) {
                    send(*a, g.to_vec());
                }
                if self.rg(*b) {
                    send(*b, self.reduce_to(g, &node.shape, *b));
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let same = va.len() == vb.len();
                let map = (!same).then(|| kernels::broadcast_index_map(&node.shape, self.shape(*b)));
                if self.rg(*a) {
                    let da = match &map {
                        None => g.iter().zip(vb).map(|(&gv, &y)| gv * y).collect(),
                        Some(m) => g.iter().zip(m).map(|(&gv, &j)| gv * vb[j]).collect(),
                    };
                    send(*a, da);
                }
                if self.rg(*b) {
                    let db = match &map {
                        None => g.iter().zip(va).map(|(&gv, &x)| gv * x).collect(),
                        Some(m) => {
                            let mut acc = vec![0.0f64; vb.len()];
                            for ((&gv, &x), &j) in g.iter().zip(va).zip(m) {
                                acc[j] += (gv * x).as_f64();
                            }
                            acc.into_iter().map(T::from_f64_lossy).collect()
                        }
                    };
                    send(*b, db);
                }
            }
            Op::MatMul(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                if self.rg(*a) {
                    send(*a, kernels::matmul_bt(g, self.value(*b), m, n, k));
                }
                if self.rg(*b) {
                    send(*b, kernels::matmul_at(self.value(*a), g, m, k, n));
                }
            }
            Op::Conv2d { x, k, bias } => {
                let d = self.conv_dims(*x, *k, *bias).expect("validated in forward");
                let (dx, dk, db) = kernels::conv2d_backward(
                    d,
                    self.value(*x),
                    self.value(*k),
                    g,
                    (self.rg(*x), self.rg(*k), self.rg(*bias)),
                );
                if let Some(dx) = dx {
                    send(*x, dx);
                }
                if let Some(dk) = dk {
                    send(*k, dk);
                }
                if let Some(db) = db {
                    send(*bias, db);
                }
            }
            Op::Relu(x) => {
                let dx = g
                    .iter()
                    .zip(self.value(*x))
                    .map(|(&gv, &v)| if v > T::zero() { gv } else { T::zero() })
                    .collect();
                send(*x, dx);
            }
            Op::Sigmoid(x) => {
                let dx = g
                    .iter()
                    .zip(&node.value)
                    .map(|(&gv, &s)| gv * s * (T::one() - s))
                    .collect();
                send(*x, dx);
            }
            Op::GlobalAvgPool(x) => {
                let s = self.shape(*x);
                let (hw, c) = (s[1] * s[2], s[3]);
                let inv = T::from_f64_lossy(1.0 / hw as f64);
                let mut dx = Vec::with_capacity(self.value(*x).len());
                for gb in g.chunks_exact(c) {
                    for _ in 0..hw {
                        dx.extend(gb.iter().map(|&v| v * inv));
                    }
                }
                send(*x, dx);
            }
            Op::MseLoss(p, t) => {
                let (vp, vt) = (self.value(*p), self.value(*t));
                let c = g[0] * T::from_f64_lossy(2.0 / vp.len() as f64);
                let diff: Vec<T> = vp.iter().zip(vt).map(|(&a, &b)| (a - b) * c).collect();
                if self.rg(*t) {
                    send(*t, diff.iter().map(|&v| -v).collect());
                }
                if self.rg(*p) {
                    send(*p, diff);
                }
            }
            Op::Reshape(x) => send(*x, g.to_vec()),
            Op::Sum(x) => send(*x, vec![g[0]; self.value(*x).len()]),
            Op::Scale(x, c) => send(*x, g.iter().map(|&v| v * *c).collect()),
            Op::ComplexMul { x, h, per_symbol } => {
                let s = self.shape(*x);
                let (b, n) = (s[0], s[1]);
                let mut dx = vec![T::zero(); g.len()];
                for bi in 0..b {
                    for si in 0..n {
                        let hi = if *per_symbol { bi * n + si } else { bi };
                        let (hr, him) = (h[2 * hi], h[2 * hi + 1]);
                        let xi = 2 * (bi * n + si);
                        let (gr, gim) = (g[xi], g[xi + 1]);
                        // multiply by conj(h)
                        dx[xi] = hr * gr + him * gim;
                        dx[xi + 1] = hr * gim - him * gr;
                    }
                }
                send(*x, dx);
            }
            Op::NormalizePower { x, gain, norms } => {
                let xv = self.value(*x);
                let per = xv.len() / norms.len();
                let mut dx = Vec::with_capacity(xv.len());
                for ((xc, gc), &n) in xv.chunks_exact(per).zip(g.chunks_exact(per)).zip(norms) {
                    let n = n.as_f64();
                    let dot: f64 = xc.iter().zip(gc).map(|(&a, &b)| a.as_f64() * b.as_f64()).sum();
                    let c = gain.as_f64() / n;
                    let proj = dot / (n * n);
                    dx.extend(
                        xc.iter()
                            .zip(gc)
                            .map(|(&a, &b)| T::from_f64_lossy(c * (b.as_f64() - a.as_f64() * proj))),
                    );
                }
                send(*x, dx);
            }
        }
    }

    /// Sums a full-shape gradient down to the (broadcast) shape of `b`.
    fn reduce_to(&self, g: &[T], full: &[usize], b: Var) -> Vec<T> {
        let nb = self.value(b).len();
        if nb == g.len() {
            return g.to_vec();
        }
        let map = kernels::broadcast_index_map(full, self.shape(b));
        let mut acc = vec![0.0f64; nb];
        for (&gv, &j) in g.iter().zip(&map) {
            acc[j] += gv.as_f64();
        }
        acc.into_iter().map(T::from_f64_lossy).collect()
    }
}

#[inline]
fn sigmoid<T: Real>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}
