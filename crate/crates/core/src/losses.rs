//! Reconstruction, perceptual and blend-weight losses.
//!
//! Images are `[H, W, 3]` graph values. A [`MaskImage`] marks OOD pixels
//! with 1; its complement marks the pixels the in-distribution terms see.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::tensorlab::{avgpool2, conv3x3, Graph, Tensor, Var};

/// Binary per-pixel mask; 1 marks out-of-distribution pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl MaskImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Shape {
                op: "mask",
                lhs: vec![height, width],
                rhs: vec![data.len()],
            });
        }
        if data.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidArgument("mask values must be 0 or 1".into()));
        }
        Ok(Self { width, height, data })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    /// From a single-channel image, thresholding at 0.5.
    pub fn from_image(img: &Image) -> Result<Self> {
        if img.channels != 1 {
            return Err(Error::InvalidArgument(format!("mask image has {} channels", img.channels)));
        }
        let data = img.data.iter().map(|&v| if v >= 0.5 { 1.0 } else { 0.0 }).collect();
        Self::new(img.width, img.height, data)
    }

    /// `1 - M`: the in-distribution pixels.
    pub fn complement(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| 1.0 - v).collect(),
        }
    }

    pub fn count(&self) -> f64 {
        self.data.iter().sum()
    }

    /// `[H, W]` tensor of the mask values.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(&[self.height, self.width], self.data.clone()).expect("mask shape")
    }
}

fn image_dims(op: &'static str, x: &Var<'_>, y: &Var<'_>) -> Result<(usize, usize, usize)> {
    let (sx, sy) = (x.shape(), y.shape());
    if sx != sy || sx.len() != 3 {
        return Err(Error::Shape { op, lhs: sx, rhs: sy });
    }
    Ok((sx[0], sx[1], sx[2]))
}

/// `sum_p m_p * mean_c (x - y)^2 / ||m||_1` for a per-pixel weight `m`
/// (`[H, W]`, typically a mask complement). Fails with
/// [`Error::EmptyRegion`] when the weights sum to zero.
pub fn masked_l2<'g>(x: Var<'g>, y: Var<'g>, m: &MaskImage) -> Result<Var<'g>> {
    let (h, w, c) = image_dims("masked_l2", &x, &y)?;
    if (m.height, m.width) != (h, w) {
        return Err(Error::Shape {
            op: "masked_l2",
            lhs: vec![h, w],
            rhs: vec![m.height, m.width],
        });
    }
    let norm = m.count();
    if norm <= 0.0 {
        return Err(Error::EmptyRegion { frame: None });
    }
    let weights = x.graph().constant(Tensor::new(&[h, w, 1], m.data.clone())?);
    x.sub(y)?
        .square()?
        .mul(weights)?
        .sum()?
        .scale(1.0 / (norm * c as f64))
}

/// Fixed random convolution features standing in for a learned perceptual
/// metric.
///
/// At each of two scales (full and 2x average-pooled), the image passes
/// through one bank of 3x3 filters and `tanh`; each pixel's response vector
/// is then scaled to unit length. The loss is the mask-weighted mean squared
/// distance between the two images' responses, summed over scales.
#[derive(Clone, Debug, PartialEq)]
pub struct PerceptualProxy {
    /// `[27, FILTERS]` for RGB input.
    pub filters: Tensor,
    pub bias: Tensor,
}

impl PerceptualProxy {
    pub const FILTERS: usize = 16;
    pub const SCALES: usize = 2;
    pub const BIAS_STD: f64 = 0.5;
    const EPS: f64 = 1e-6;

    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let std = (1.0f64 / 27.0).sqrt() * 2.0;
        // The bias keeps features of black regions away from zero, where
        // per-pixel normalization would turn noise into unit vectors.
        Self {
            filters: Tensor::randn(&[27, Self::FILTERS], std, &mut rng),
            bias: Tensor::randn(&[Self::FILTERS], Self::BIAS_STD, &mut rng),
        }
    }

    fn features<'g>(&self, g: &'g Graph, x: Var<'g>) -> Result<Var<'g>> {
        let s = x.shape();
        let f = conv3x3(x, g.constant(self.filters.clone()), g.constant(self.bias.clone()))?.tanh()?;
        let norm = f
            .square()?
            .sum_axis(2)?
            .add_scalar(Self::EPS)?
            .sqrt()?
            .reshape(&[s[0], s[1], 1])?;
        f.div(norm)
    }

    /// Weighted by `mask` (1 = pixel counts) when given.
    pub fn loss<'g>(&self, x: Var<'g>, y: Var<'g>, mask: Option<&MaskImage>) -> Result<Var<'g>> {
        let (h, w, c) = image_dims("perceptual", &x, &y)?;
        if c != 3 {
            return Err(Error::InvalidArgument(format!("perceptual loss needs RGB, got {c} channels")));
        }
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::InvalidArgument(format!("perceptual loss needs even sizes, got {h}x{w}")));
        }
        let g = x.graph();
        let mut weight = match mask {
            Some(m) if (m.height, m.width) != (h, w) => {
                return Err(Error::Shape {
                    op: "perceptual",
                    lhs: vec![h, w],
                    rhs: vec![m.height, m.width],
                })
            }
            Some(m) => Tensor::new(&[h, w, 1], m.data.clone())?,
            None => Tensor::ones(&[h, w, 1]),
        };
        let (mut a, mut b) = (x, y);
        let mut total: Option<Var<'g>> = None;
        for scale in 0..Self::SCALES {
            if scale > 0 {
                a = avgpool2(a)?;
                b = avgpool2(b)?;
                weight = avgpool2(g.constant(weight))?.value().as_ref().clone();
            }
            let d = self.features(g, a)?.sub(self.features(g, b)?)?.square()?;
            let norm = weight.sum().max(1.0);
            let term = d.mul(g.constant(weight.clone()))?.sum()?.scale(1.0 / norm)?;
            total = Some(match total {
                None => term,
                Some(t) => t.add(term)?,
            });
        }
        Ok(total.expect("at least one scale"))
    }
}

/// `sum_{i >= 1} ||w_i - w_0||^2` over the rows of an `[L, D]` latent.
pub fn latent_delta_reg(w: Var<'_>) -> Result<Var<'_>> {
    let s = w.shape();
    if s.len() != 2 || s[0] == 0 {
        return Err(Error::InvalidArgument(format!("latent must be [L, D] with L >= 1, got {s:?}")));
    }
    if s[0] == 1 {
        return w.scale(0.0)?.sum();
    }
    w.slice(0, 1, s[0])?.sub(w.slice(0, 0, 1)?)?.square()?.sum()
}

/// `sum` of blend weights `b` (`[R, K]`) over rays whose `ray_weight` is 1.
pub fn blend_sparsity<'g>(b: Var<'g>, ray_weight: &[f64]) -> Result<Var<'g>> {
    let s = b.shape();
    if s.len() != 2 || s[0] != ray_weight.len() {
        return Err(Error::Shape {
            op: "blend_sparsity",
            lhs: vec![ray_weight.len(), 0],
            rhs: s,
        });
    }
    let m = b.graph().constant(Tensor::new(&[s[0], 1], ray_weight.to_vec())?);
    b.mul(m)?.sum()
}

/// Sum of binary entropies `-(b ln b + (1 - b) ln(1 - b))`, with `0 ln 0 = 0`.
pub fn blend_entropy(b: Var<'_>) -> Result<Var<'_>> {
    b.binary_entropy()?.sum()
}

/// Unmasked mean squared error plus the unmasked perceptual term.
pub fn sr_loss<'g>(x: Var<'g>, y: Var<'g>, proxy: &PerceptualProxy) -> Result<Var<'g>> {
    let (h, w, _) = image_dims("sr_loss", &x, &y)?;
    let all = MaskImage {
        width: w,
        height: h,
        data: vec![1.0; w * h],
    };
    masked_l2(x, y, &all)?.add(proxy.loss(x, y, None)?)
}
