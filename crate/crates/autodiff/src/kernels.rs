//! Raw numeric kernels over flat row-major buffers.

use crate::real::Real;

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvDims {
    pub batch: usize,
    pub height: usize,
    pub width: usize,
    pub cin: usize,
    pub cout: usize,
    pub kh: usize,
    pub kw: usize,
}

impl ConvDims {
    /// Iterates the valid kernel taps for output pixel (h, w) under same
    /// zero padding: yields (input row, input col, kernel row, kernel col).
    #[inline]
    fn taps(&self, h: usize, w: usize) -> impl Iterator<Item = (usize, usize, usize, usize)> {
        let (ph, pw) = (self.kh / 2, self.kw / 2);
        let (height, width, kw) = (self.height, self.width, self.kw);
        (0..self.kh).flat_map(move |i| {
            (0..kw).filter_map(move |j| {
                let ih = (h + i).checked_sub(ph)?;
                let iw = (w + j).checked_sub(pw)?;
                (ih < height && iw < width).then_some((ih, iw, i, j))
            })
        })
    }
}

/// NHWC cross-correlation, stride 1, same zero padding.
/// `k` is laid out [kh, kw, cin, cout].
pub(crate) fn conv2d_forward<T: Real>(d: ConvDims, x: &[T], k: &[T], bias: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); d.batch * d.height * d.width * d.cout];
    for b in 0..d.batch {
        for h in 0..d.height {
            for w in 0..d.width {
                let o = ((b * d.height + h) * d.width + w) * d.cout;
                let acc = &mut out[o..o + d.cout];
                acc.copy_from_slice(bias);
                for (ih, iw, i, j) in d.taps(h, w) {
                    let xi = ((b * d.height + ih) * d.width + iw) * d.cin;
                    let xs = &x[xi..xi + d.cin];
                    let kbase = (i * d.kw + j) * d.cin * d.cout;
                    for (ci, &xv) in xs.iter().enumerate() {
                        let krow = &k[kbase + ci * d.cout..kbase + (ci + 1) * d.cout];
                        for (a, &kv) in acc.iter_mut().zip(krow) {
                            *a += xv * kv;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Returns (dx, dk, dbias) for the given upstream gradient. Each output is
/// computed only when requested.
pub(crate) fn conv2d_backward<T: Real>(
    d: ConvDims,
    x: &[T],
    k: &[T],
    g: &[T],
    want: (bool, bool, bool),
) -> (Option<Vec<T>>, Option<Vec<T>>, Option<Vec<T>>) {
    let mut dx = want.0.then(|| vec![T::zero(); x.len()]);
    let mut dk = want.1.then(|| vec![T::zero(); k.len()]);
    let dbias = want.2.then(|| {
        let mut acc = vec![0.0f64; d.cout];
        for row in g.chunks_exact(d.cout) {
            acc.iter_mut().zip(row).for_each(|(a, &v)| *a += v.as_f64());
        }
        acc.into_iter().map(T::from_f64_lossy).collect::<Vec<_>>()
    });
    if dx.is_none() && dk.is_none() {
        return (None, None, dbias);
    }
    for b in 0..d.batch {
        for h in 0..d.height {
            for w in 0..d.width {
                let o = ((b * d.height + h) * d.width + w) * d.cout;
                let gs = &g[o..o + d.cout];
                for (ih, iw, i, j) in d.taps(h, w) {
                    let xi = ((b * d.height + ih) * d.width + iw) * d.cin;
                    let kbase = (i * d.kw + j) * d.cin * d.cout;
                    for ci in 0..d.cin {
                        let kr = kbase + ci * d.cout;
                        if let Some(dx) = dx.as_mut() {
                            let krow = &k[kr..kr + d.cout];
                            let mut s = T::zero();
                            for (&kv, &gv) in krow.iter().zip(gs) {
                                s += kv * gv;
                            }
                            dx[xi + ci] += s;
                        }
                        if let Some(dk) = dk.as_mut() {
                            let xv = x[xi + ci];
                            for (dkv, &gv) in dk[kr..kr + d.cout].iter_mut().zip(gs) {
                                *dkv += xv * gv;
                            }
                        }
                    }
                }
            }
        }
    }
    (dx, dk, dbias)
}

/// [m, k] x [k, n] -> [m, n]
pub(crate) fn matmul<T: Real>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            for (o, &bv) in row.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *o += av * bv;
            }
        }
    }
    out
}

/// [m, k] x [n, k]^T -> [m, n]
pub(crate) fn matmul_bt<T: Real>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        let ar = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let br = &b[j * k..(j + 1) * k];
            out[i * n + j] = ar.iter().zip(br).map(|(&x, &y)| x * y).sum();
        }
    }
    out
}

/// [k, m]^T x [k, n] -> [m, n]
pub(crate) fn matmul_at<T: Real>(a: &[T], b: &[T], k: usize, m: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    for p in 0..k {
        let br = &b[p * n..(p + 1) * n];
        for i in 0..m {
            let av = a[p * m + i];
            if av == T::zero() {
                continue;
            }
            for (o, &bv) in out[i * n..(i + 1) * n].iter_mut().zip(br) {
                *o += av * bv;
            }
        }
    }
    out
}

/// For each flat index of a tensor with shape `full`, the flat index of the
/// operand with shape `small` broadcast against it (right-aligned, dims equal
/// or 1).
pub(crate) fn broadcast_index_map(full: &[usize], small: &[usize]) -> Vec<usize> {
    let offset = full.len() - small.len();
    let mut strides = vec![0usize; full.len()];
    let mut s = 1;
    for (axis, &dim) in small.iter().enumerate().rev() {
        strides[axis + offset] = if dim == 1 { 0 } else { s };
        s *= dim;
    }
    let total: usize = full.iter().product();
    let mut map = Vec::with_capacity(total);
    let mut idx = vec![0usize; full.len()];
    let mut flat = 0usize;
    for _ in 0..total {
        map.push(flat);
        for axis in (0..full.len()).rev() {
            idx[axis] += 1;
            flat += strides[axis];
            if idx[axis] < full[axis] {
                break;
            }
            flat -= strides[axis] * full[axis];
            idx[axis] = 0;
        }
    }
    map
}
