//! Differentiable image ops over `[H, W, C]` tensors.

use super::graph::{CustomOp, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

fn hwc(op: &'static str, t: &Tensor) -> Result<(usize, usize, usize)> {
    match *t.shape() {
        [h, w, c] => Ok((h, w, c)),
        _ => Err(Error::Shape {
            op,
            lhs: vec![0, 0, 0],
            rhs: t.shape().to_vec(),
        }),
    }
}

/// `[H, W, C]` to `[H * W, 9 * C]` patches of a zero-padded 3x3 window,
/// ordered `(dy, dx, c)`.
struct Im2Col {
    h: usize,
    w: usize,
    c: usize,
}

impl Im2Col {
    /// Calls `f(patch_index, source_index)` for every in-bounds tap.
    fn taps(&self, mut f: impl FnMut(usize, usize)) {
        let (h, w, c) = (self.h as isize, self.w as isize, self.c);
        for y in 0..h {
            for x in 0..w {
                let row = ((y * w + x) as usize) * 9 * c;
                for dy in -1..=1isize {
                    for dx in -1..=1isize {
                        let (sy, sx) = (y + dy, x + dx);
                        if sy < 0 || sy >= h || sx < 0 || sx >= w {
                            continue;
                        }
                        let tap = ((dy + 1) * 3 + dx + 1) as usize;
                        let src = ((sy * w + sx) as usize) * c;
                        for ch in 0..c {
                            f(row + tap * c + ch, src + ch);
                        }
                    }
                }
            }
        }
    }
}

impl CustomOp for Im2Col {
    fn name(&self) -> &'static str {
        "im2col"
    }

    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, grad: &Tensor) -> Vec<Option<Tensor>> {
        let mut g = vec![0.0; inputs[0].numel()];
        let gd = grad.data();
        self.taps(|dst, src| g[src] += gd[dst]);
        vec![Some(Tensor::new(inputs[0].shape(), g).expect("im2col grad"))]
    }
}

/// 3x3 convolution with zero padding: `x` is `[H, W, Cin]`, `weight` is
/// `[9 * Cin, Cout]` with rows ordered `(dy, dx, cin)`, `bias` is `[Cout]`.
pub fn conv3x3<'g>(x: Var<'g>, weight: Var<'g>, bias: Var<'g>) -> Result<Var<'g>> {
    let xv = x.value();
    let (h, w, c) = hwc("conv3x3", &xv)?;
    let wv = weight.value();
    if wv.rank() != 2 || wv.shape()[0] != 9 * c {
        return Err(Error::Shape {
            op: "conv3x3",
            lhs: vec![9 * c, 0],
            rhs: wv.shape().to_vec(),
        });
    }
    let cout = wv.shape()[1];
    let op = Im2Col { h, w, c };
    let mut cols = vec![0.0; h * w * 9 * c];
    let xd = xv.data();
    op.taps(|dst, src| cols[dst] = xd[src]);
    let patches = x.graph().custom(op, &[x], Tensor::new(&[h * w, 9 * c], cols)?)?;
    patches.matmul(weight)?.add(bias)?.reshape(&[h, w, cout])
}

/// Bilinear 2x upsampling with half-pixel centers and edge clamping: each
/// output pixel mixes its nearest input pixel (0.75) with the next one
/// toward it (0.25) along each axis.
struct Upsample2 {
    h: usize,
    w: usize,
    c: usize,
}

impl Upsample2 {
    /// Source index and weight pairs along one axis for output position `o`.
    fn axis(o: usize, n: usize) -> [(usize, f64); 2] {
        let i = o / 2;
        let j = if o % 2 == 0 { i.saturating_sub(1) } else { (i + 1).min(n - 1) };
        [(i, 0.75), (j, 0.25)]
    }

    fn for_each(&self, mut f: impl FnMut(usize, usize, f64)) {
        let (h, w, c) = (self.h, self.w, self.c);
        for oy in 0..2 * h {
            let ys = Self::axis(oy, h);
            for ox in 0..2 * w {
                let xs = Self::axis(ox, w);
                let dst = (oy * 2 * w + ox) * c;
                for &(sy, wy) in &ys {
                    for &(sx, wx) in &xs {
                        let src = (sy * w + sx) * c;
                        for ch in 0..c {
                            f(dst + ch, src + ch, wy * wx);
                        }
                    }
                }
            }
        }
    }
}

impl CustomOp for Upsample2 {
    fn name(&self) -> &'static str {
        "upsample2"
    }

    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, grad: &Tensor) -> Vec<Option<Tensor>> {
        let mut g = vec![0.0; inputs[0].numel()];
        let gd = grad.data();
        self.for_each(|dst, src, wt| g[src] += wt * gd[dst]);
        vec![Some(Tensor::new(inputs[0].shape(), g).expect("upsample grad"))]
    }
}

/// Plain-tensor version of [`upsample2`].
pub fn upsample2_tensor(x: &Tensor) -> Result<Tensor> {
    let (h, w, c) = hwc("upsample2", x)?;
    let op = Upsample2 { h, w, c };
    let mut out = vec![0.0; 4 * x.numel()];
    let xd = x.data();
    op.for_each(|dst, src, wt| out[dst] += wt * xd[src]);
    Tensor::new(&[2 * h, 2 * w, c], out)
}

/// Bilinear 2x upsampling of `[H, W, C]` to `[2H, 2W, C]`.
pub fn upsample2(x: Var<'_>) -> Result<Var<'_>> {
    let xv = x.value();
    let (h, w, c) = hwc("upsample2", &xv)?;
    let out = upsample2_tensor(&xv)?;
    x.graph().custom(Upsample2 { h, w, c }, &[x], out)
}

/// 2x2 average pooling of `[H, W, C]` with even `H` and `W`.
pub fn avgpool2(x: Var<'_>) -> Result<Var<'_>> {
    let s = x.shape();
    if s.len() != 3 || s[0] % 2 != 0 || s[1] % 2 != 0 {
        return Err(Error::Shape {
            op: "avgpool2",
            lhs: vec![2, 2, 0],
            rhs: s,
        });
    }
    let (h, w, c) = (s[0], s[1], s[2]);
    x.reshape(&[h / 2, 2, w / 2, 2, c])?
        .sum_axis(3)?
        .sum_axis(1)?
        .scale(0.25)
}
