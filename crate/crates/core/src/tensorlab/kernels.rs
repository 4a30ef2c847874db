use super::graph::ACTIVATION_CLAMP;
use super::tensor::Tensor;

/// How an input of one shape is read when broadcast to a larger output.
#[derive(Clone, Debug, PartialEq)]
pub(crate) enum BroadcastMap {
    /// Shapes are identical.
    Same,
    /// Input is a trailing suffix of the output: index `i % n`.
    Cycle(usize),
    /// Input matches a leading prefix, trailing extents are 1: index `i / t`.
    Block(usize),
    /// Per-output-axis input strides (0 on broadcast axes).
    General {
        out_shape: Vec<usize>,
        strides: Vec<usize>,
    },
}

impl BroadcastMap {
    pub(crate) fn new(input: &[usize], out: &[usize]) -> Option<Self> {
        if input == out {
            return Some(BroadcastMap::Same);
        }
        if input.len() > out.len() {
            return None;
        }
        let pad = out.len() - input.len();
        let padded: Vec<usize> = std::iter::repeat(1).take(pad).chain(input.iter().copied()).collect();
        if padded.iter().zip(out).any(|(&i, &o)| i != o && i != 1) {
            return None;
        }
        let n: usize = input.iter().product();
        // Suffix: every axis before the first non-broadcast one is broadcast.
        if let Some(first) = padded.iter().zip(out).position(|(&i, &o)| i == o && i != 1) {
            if padded[first..] == out[first..] && padded[..first].iter().all(|&d| d == 1) {
                return Some(BroadcastMap::Cycle(n));
            }
        } else {
            // Every axis is either broadcast or of extent 1 on both sides.
            return Some(BroadcastMap::Cycle(n.max(1)));
        }
        for p in 0..=out.len() {
            if padded[..p] == out[..p] && padded[p..].iter().all(|&d| d == 1) {
                let t: usize = out[p..].iter().product();
                return Some(BroadcastMap::Block(t));
            }
        }
        let mut strides = vec![0; out.len()];
        let mut acc = 1;
        for ax in (0..out.len()).rev() {
            if padded[ax] != 1 {
                strides[ax] = acc;
            }
            acc *= padded[ax];
        }
        Some(BroadcastMap::General {
            out_shape: out.to_vec(),
            strides,
        })
    }

    fn for_each_index(&self, n_out: usize, mut f: impl FnMut(usize, usize)) {
        match self {
            BroadcastMap::Same => (0..n_out).for_each(|i| f(i, i)),
            BroadcastMap::Cycle(n) => (0..n_out).for_each(|i| f(i, i % n)),
            BroadcastMap::Block(t) => (0..n_out).for_each(|i| f(i, i / t)),
            BroadcastMap::General { out_shape, strides } => {
                let rank = out_shape.len();
                let mut idx = vec![0usize; rank];
                let mut src = 0usize;
                for i in 0..n_out {
                    f(i, src);
                    for ax in (0..rank).rev() {
                        idx[ax] += 1;
                        src += strides[ax];
                        if idx[ax] < out_shape[ax] {
                            break;
                        }
                        src -= strides[ax] * idx[ax];
                        idx[ax] = 0;
                    }
                }
            }
        }
    }
}

pub(crate) fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for k in 0..rank {
        let da = if k < rank - a.len() { 1 } else { a[k - (rank - a.len())] };
        let db = if k < rank - b.len() { 1 } else { b[k - (rank - b.len())] };
        out[k] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

pub(crate) fn expand(data: &[f64], map: &BroadcastMap, n_out: usize) -> Vec<f64> {
    if *map == BroadcastMap::Same {
        return data.to_vec();
    }
    let mut out = vec![0.0; n_out];
    map.for_each_index(n_out, |i, j| out[i] = data[j]);
    out
}

/// Sum a gradient over broadcast axes back to the input shape.
pub(crate) fn reduce_to(grad: &[f64], map: &BroadcastMap, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    let data = if *map == BroadcastMap::Same {
        grad.to_vec()
    } else {
        let mut acc = vec![0.0; n];
        map.for_each_index(grad.len(), |i, j| acc[j] += grad[i]);
        acc
    };
    Tensor::new(shape, data).expect("reduce shape")
}

pub(crate) fn binary(a: &Tensor, b: &Tensor, out_shape: &[usize], f: impl Fn(f64, f64) -> f64) -> Tensor {
    let n: usize = out_shape.iter().product();
    let ma = BroadcastMap::new(a.shape(), out_shape).expect("broadcastable");
    let mb = BroadcastMap::new(b.shape(), out_shape).expect("broadcastable");
    let data: Vec<f64> = match (&ma, &mb) {
        (BroadcastMap::Same, BroadcastMap::Same) => {
            a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect()
        }
        (BroadcastMap::Same, BroadcastMap::Cycle(m)) => {
            let bd = b.data();
            let mut out = Vec::with_capacity(n);
            for row in a.data().chunks(*m) {
                out.extend(row.iter().zip(bd).map(|(&x, &y)| f(x, y)));
            }
            out
        }
        _ => {
            let ea = expand(a.data(), &ma, n);
            let eb = expand(b.data(), &mb, n);
            ea.iter().zip(&eb).map(|(&x, &y)| f(x, y)).collect()
        }
    };
    Tensor::new(out_shape, data).expect("binary shape")
}

/// `(outer, len, inner)` extents around `axis`.
pub(crate) fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

/// `c = op(a) * op(b)` with `op(a)` of shape `[m, k]` and `op(b)` of `[k, n]`,
/// where `transpose_*` selects reading the stored row-major matrix transposed.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    transpose_a: bool,
    b: &[f64],
    transpose_b: bool,
    c: &mut [f64],
) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if transpose_a { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if transpose_b { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserts above guarantee every strided access stays inside
    // the slices, and `c` does not alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

pub fn sigmoid(x: f64) -> f64 {
    let e = (-x.abs()).exp();
    let num = if x >= 0.0 { 1.0 } else { e };
    num / (1.0 + e)
}

/// Softplus of the input clamped to `[-30, 30]`.
pub fn softplus(x: f64) -> f64 {
    let x = x.clamp(-ACTIVATION_CLAMP, ACTIVATION_CLAMP);
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn binary_entropy(b: f64) -> f64 {
    let plogp = |p: f64| if p <= 0.0 { 0.0 } else { p * p.ln() };
    -(plogp(b) + plogp(1.0 - b))
}
