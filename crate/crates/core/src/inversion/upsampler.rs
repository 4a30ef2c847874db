use rand::Rng;

use crate::error::Result;
use crate::image::Image;
use crate::tensorlab::{conv3x3, upsample2, Checkpoint, Graph, Precision, Tensor, Var};

/// 2x super-resolution: bilinear upsampling plus a two-layer convolutional
/// residual. The second layer starts at zero, so a fresh upsampler is plain
/// bilinear.
#[derive(Clone, Debug, PartialEq)]
pub struct Upsampler {
    /// `conv1.w [27, H], conv1.b [H], conv2.w [9H, 3], conv2.b [3]`.
    pub params: Vec<Tensor>,
}

pub const UPSAMPLE_FACTOR: usize = 2;

const NAMES: [&str; 4] = ["conv1.w", "conv1.b", "conv2.w", "conv2.b"];

impl Upsampler {
    pub fn new<R: Rng + ?Sized>(hidden: usize, rng: &mut R) -> Self {
        Self {
            params: vec![
                Tensor::randn(&[27, hidden], (1.0 / 27.0f64).sqrt() * 0.1, rng),
                Tensor::zeros(&[hidden]),
                Tensor::zeros(&[9 * hidden, 3]),
                Tensor::zeros(&[3]),
            ],
        }
    }

    /// `[H, W, 3]` to `[2H, 2W, 3]` given bound parameters.
    pub fn forward<'g>(params: &[Var<'g>], x: Var<'g>) -> Result<Var<'g>> {
        let up = upsample2(x)?;
        let h = conv3x3(up, params[0], params[1])?.softplus()?;
        up.add(conv3x3(h, params[2], params[3])?)
    }

    pub fn apply(&self, img: &Image) -> Result<Image> {
        let g = Graph::new();
        let params: Vec<Var> = self.params.iter().map(|p| g.constant(p.clone())).collect();
        let out = Self::forward(&params, g.constant(img.to_tensor()))?;
        Image::from_tensor(&out.value())
    }

    pub fn write_checkpoint(&self, ck: &mut Checkpoint, precision: Precision) {
        for (name, p) in NAMES.iter().zip(&self.params) {
            ck.insert_tensor(format!("upsampler.{name}"), p, precision);
        }
    }

    pub fn read_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let params = NAMES
            .iter()
            .map(|n| ck.tensor(&format!("upsampler.{n}")))
            .collect::<Result<Vec<_>>>()?;
        let hidden = params[1].numel();
        let shapes = [vec![27, hidden], vec![hidden], vec![9 * hidden, 3], vec![3]];
        if params.iter().zip(&shapes).any(|(p, s)| p.shape() != s.as_slice()) {
            return Err(crate::Error::Format("upsampler tensors have inconsistent shapes".into()));
        }
        Ok(Self { params })
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::tensorlab::upsample2_tensor;

    #[test]
    fn fresh_upsampler_is_bilinear() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let up = Upsampler::new(4, &mut rng);
        let img = Image::new(3, 2, 3, (0..18).map(|i| i as f64 / 18.0).collect()).unwrap();
        let out = up.apply(&img).unwrap();
        assert_eq!((out.width, out.height), (6, 4));
        assert_eq!(out.to_tensor(), upsample2_tensor(&img.to_tensor()).unwrap());
        assert_eq!(up.apply(&img).unwrap(), out);
    }

    #[test]
    fn constant_image_stays_constant_at_init() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let up = Upsampler::new(4, &mut rng);
        let out = up.apply(&Image::filled(4, 4, 3, 0.3)).unwrap();
        assert!(out.data.iter().all(|&v| (v - 0.3).abs() < 1e-15));
    }
}
