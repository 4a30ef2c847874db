use crate::error::{Error, Result};
use crate::tensorlab::{Checkpoint, Precision, Tensor, Var};

/// Shared template plus per-frame residuals; frame `t` uses
/// `w_t = template + strength * residuals[t]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentCode {
    pub template: Tensor,
    pub residuals: Vec<Tensor>,
    pub strength: f64,
}

impl LatentCode {
    /// Template at `init`, zero residuals.
    pub fn new(init: Tensor, frames: usize, strength: f64) -> Result<Self> {
        if init.rank() != 2 {
            return Err(Error::InvalidArgument(format!("latent must be [L, D], got {:?}", init.shape())));
        }
        if !(0.0..=1.0).contains(&strength) {
            return Err(Error::InvalidArgument(format!("residual strength {strength} outside [0, 1]")));
        }
        let residuals = vec![Tensor::zeros(init.shape()); frames];
        Ok(Self {
            template: init,
            residuals,
            strength,
        })
    }

    pub fn frames(&self) -> usize {
        self.residuals.len()
    }

    pub fn effective(&self, t: usize) -> Result<Tensor> {
        let r = self
            .residuals
            .get(t)
            .ok_or_else(|| Error::InvalidArgument(format!("no residual for frame {t}")))?;
        let mut w = self.template.clone();
        w.axpy(self.strength, r)?;
        Ok(w)
    }

    /// Graph form of [`LatentCode::effective`].
    pub fn effective_var<'g>(&self, template: Var<'g>, residual: Var<'g>) -> Result<Var<'g>> {
        template.add(residual.scale(self.strength)?)
    }

    pub fn write_checkpoint(&self, ck: &mut Checkpoint, precision: Precision) {
        ck.insert_tensor("latent.template", &self.template, precision);
        for (t, r) in self.residuals.iter().enumerate() {
            ck.insert_tensor(format!("latent.res.{t}"), r, precision);
        }
        ck.insert_tensor("latent.strength", &Tensor::scalar(self.strength), Precision::F64);
    }

    pub fn read_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let template = ck.tensor("latent.template")?;
        let mut residuals = Vec::new();
        while ck.contains(&format!("latent.res.{}", residuals.len())) {
            let r = ck.tensor(&format!("latent.res.{}", residuals.len()))?;
            if r.shape() != template.shape() {
                return Err(Error::Format("latent residual shape differs from template".into()));
            }
            residuals.push(r);
        }
        let strength = ck.tensor("latent.strength")?.item();
        Ok(Self {
            template,
            residuals,
            strength,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn effective_latent_arithmetic() {
        let mut code = LatentCode::new(Tensor::full(&[2, 3], 0.5), 2, 0.7).unwrap();
        code.residuals[1] = Tensor::ones(&[2, 3]);
        let w = code.effective(1).unwrap();
        assert!(w.data().iter().all(|&v| (v - 1.2).abs() < 1e-15));
        assert_eq!(code.effective(0).unwrap(), code.template);
        assert!(code.effective(2).is_err());
        code.strength = 0.0;
        assert_eq!(code.effective(0).unwrap(), code.effective(1).unwrap());
    }

    #[test]
    fn residual_rescaling_is_exact() {
        let mut code = LatentCode::new(Tensor::full(&[1, 2], 0.25), 1, 0.5).unwrap();
        code.residuals[0] = Tensor::new(&[1, 2], vec![0.5, -1.0]).unwrap();
        let before = code.effective(0).unwrap();
        code.residuals[0] = code.residuals[0].map(|v| v * 2.0);
        code.strength = 0.25;
        assert_eq!(code.effective(0).unwrap(), before);
    }

    #[test]
    fn strength_is_bounded() {
        assert!(LatentCode::new(Tensor::zeros(&[1, 2]), 1, 1.5).is_err());
    }
}
