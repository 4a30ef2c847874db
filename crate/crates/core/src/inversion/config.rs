use crate::config::KvReader;
use crate::error::{Error, Result};

/// Every knob of the three optimization stages.
#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Residual strength `a`.
    pub strength: f64,
    /// Depth samples per ray.
    pub samples: usize,
    pub epochs_a: usize,
    pub lr_a: f64,
    pub lambda_delta: f64,
    pub epochs_b: usize,
    pub lr_b: f64,
    pub lambda_b: f64,
    pub lambda_spar: f64,
    /// Fraction of stage B run with the blend regularizers off.
    pub reg_delay: f64,
    /// Fraction of stage B, after the delay, over which the blend
    /// regularizers ramp linearly to full weight.
    pub reg_warmup: f64,
    pub epochs_c: usize,
    pub lr_c: f64,
    /// Weight of the perceptual terms.
    pub perceptual_weight: f64,
    /// Weight of the masked OOD-only term relative to the composite terms.
    pub ood_weight: f64,
    pub ood_resolution: usize,
    pub ood_channels: usize,
    pub ood_hidden: Vec<usize>,
    pub phi_dim: usize,
    /// Standard deviation of the OOD plane and decoder initialization.
    pub init_std: f64,
    pub phi_std: f64,
    pub upsampler_hidden: usize,
    /// Global gradient norm cap; `None` disables clipping.
    pub clip_norm: Option<f64>,
    /// Visit frames in a seeded shuffled order each epoch.
    pub shuffle: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            strength: 0.7,
            samples: 48,
            epochs_a: 200,
            lr_a: 1e-3,
            lambda_delta: 1e-3,
            epochs_b: 200,
            lr_b: 5e-3,
            lambda_b: 1.0,
            lambda_spar: 3.0,
            reg_delay: 0.5,
            reg_warmup: 0.1,
            epochs_c: 100,
            lr_c: 1e-3,
            perceptual_weight: 1.0,
            ood_weight: 1.0,
            ood_resolution: 64,
            ood_channels: 16,
            ood_hidden: vec![64, 64],
            phi_dim: 32,
            init_std: 0.1,
            phi_std: 1.0,
            upsampler_hidden: 8,
            clip_norm: None,
            shuffle: true,
        }
    }
}

/// Gradient norm cap used by the `--clip` flag.
pub const DEFAULT_CLIP_NORM: f64 = 10.0;

fn join(v: &[usize]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl PipelineConfig {
    /// Weight multiplier of the blend regularizers in stage B epoch `epoch`.
    pub fn reg_scale(&self, epoch: usize) -> f64 {
        let e = self.epochs_b as f64;
        let delay = (self.reg_delay * e).round() as usize;
        let ramp = (self.reg_warmup * e).round();
        if epoch < delay {
            0.0
        } else if ramp > 0.0 {
            ((epoch - delay + 1) as f64 / ramp).min(1.0)
        } else {
            1.0
        }
    }

    pub fn validate(&self) -> Result<()> {
        let lambdas = [
            self.lambda_delta,
            self.lambda_b,
            self.lambda_spar,
            self.perceptual_weight,
            self.ood_weight,
        ];
        if lambdas.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
            return Err(Error::Config("loss weights must be finite and non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.reg_delay)
            || !(0.0..=1.0).contains(&self.reg_warmup)
            || self.reg_delay + self.reg_warmup > 1.0
        {
            return Err(Error::Config("reg_delay and reg_warmup must lie in [0, 1] with a sum of at most 1".into()));
        }
        if !(0.0..=1.0).contains(&self.strength) {
            return Err(Error::Config("strength must lie in [0, 1]".into()));
        }
        if self.samples < 2 {
            return Err(Error::Config("samples must be at least 2".into()));
        }
        if [self.lr_a, self.lr_b, self.lr_c].iter().any(|l| !(*l >= 0.0)) {
            return Err(Error::Config("learning rates must be non-negative".into()));
        }
        if self.ood_resolution < 2 || self.ood_channels == 0 || self.phi_dim == 0 || self.upsampler_hidden == 0 {
            return Err(Error::Config("OOD field and upsampler sizes must be positive".into()));
        }
        if self.clip_norm.is_some_and(|c| !(c > 0.0)) {
            return Err(Error::Config("clip_norm must be positive".into()));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let clip = self.clip_norm.map_or("none".to_string(), |c| format!("{c:?}"));
        format!(
            "seed = {}\nstrength = {:?}\nsamples = {}\nepochs_a = {}\nlr_a = {:?}\nlambda_delta = {:?}\n\
             epochs_b = {}\nlr_b = {:?}\nlambda_b = {:?}\nlambda_spar = {:?}\nreg_delay = {:?}\nreg_warmup = {:?}\nepochs_c = {}\nlr_c = {:?}\n\
             perceptual_weight = {:?}\nood_weight = {:?}\nood_resolution = {}\nood_channels = {}\n\
             ood_hidden = {}\nphi_dim = {}\ninit_std = {:?}\nphi_std = {:?}\nupsampler_hidden = {}\n\
             clip_norm = {clip}\nshuffle = {}\n",
            self.seed,
            self.strength,
            self.samples,
            self.epochs_a,
            self.lr_a,
            self.lambda_delta,
            self.epochs_b,
            self.lr_b,
            self.lambda_b,
            self.lambda_spar,
            self.reg_delay,
            self.reg_warmup,
            self.epochs_c,
            self.lr_c,
            self.perceptual_weight,
            self.ood_weight,
            self.ood_resolution,
            self.ood_channels,
            join(&self.ood_hidden),
            self.phi_dim,
            self.init_std,
            self.phi_std,
            self.upsampler_hidden,
            self.shuffle
        )
    }

    /// Parse a config; absent keys keep their defaults, unknown keys fail.
    pub fn from_text(text: &str) -> Result<Self> {
        let d = Self::default();
        let mut r = KvReader::parse(text)?;
        let ood_hidden = match r.take_string("ood_hidden") {
            None => d.ood_hidden.clone(),
            Some(s) if s.trim().is_empty() => Vec::new(),
            Some(s) => s
                .split(',')
                .map(|x| x.trim().parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Config(format!("`ood_hidden`: cannot parse `{s}`")))?,
        };
        let clip_norm = match r.take_string("clip_norm").as_deref() {
            None | Some("none") => None,
            Some(s) => Some(
                s.parse::<f64>()
                    .map_err(|_| Error::Config(format!("`clip_norm`: cannot parse `{s}`")))?,
            ),
        };
        let cfg = Self {
            seed: r.take("seed", d.seed)?,
            strength: r.take("strength", d.strength)?,
            samples: r.take("samples", d.samples)?,
            epochs_a: r.take("epochs_a", d.epochs_a)?,
            lr_a: r.take("lr_a", d.lr_a)?,
            lambda_delta: r.take("lambda_delta", d.lambda_delta)?,
            epochs_b: r.take("epochs_b", d.epochs_b)?,
            lr_b: r.take("lr_b", d.lr_b)?,
            lambda_b: r.take("lambda_b", d.lambda_b)?,
            lambda_spar: r.take("lambda_spar", d.lambda_spar)?,
            reg_delay: r.take("reg_delay", d.reg_delay)?,
            reg_warmup: r.take("reg_warmup", d.reg_warmup)?,
            epochs_c: r.take("epochs_c", d.epochs_c)?,
            lr_c: r.take("lr_c", d.lr_c)?,
            perceptual_weight: r.take("perceptual_weight", d.perceptual_weight)?,
            ood_weight: r.take("ood_weight", d.ood_weight)?,
            ood_resolution: r.take("ood_resolution", d.ood_resolution)?,
            ood_channels: r.take("ood_channels", d.ood_channels)?,
            ood_hidden,
            phi_dim: r.take("phi_dim", d.phi_dim)?,
            init_std: r.take("init_std", d.init_std)?,
            phi_std: r.take("phi_std", d.phi_std)?,
            upsampler_hidden: r.take("upsampler_hidden", d.upsampler_hidden)?,
            clip_norm,
            shuffle: r.take("shuffle", d.shuffle)?,
        };
        r.finish()?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let cfg = PipelineConfig {
            clip_norm: Some(DEFAULT_CLIP_NORM),
            ood_hidden: vec![8],
            ..PipelineConfig::default()
        };
        assert_eq!(PipelineConfig::from_text(&cfg.to_text()).unwrap(), cfg);
        let d = PipelineConfig::default();
        assert_eq!(PipelineConfig::from_text(&d.to_text()).unwrap(), d);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(PipelineConfig::from_text("lambda_b = -1").is_err());
        assert!(PipelineConfig::from_text("strength = 2").is_err());
        assert!(PipelineConfig::from_text("mystery = 2").is_err());
    }

    #[test]
    fn defaults_match_reference_schedule() {
        let d = PipelineConfig::default();
        assert_eq!((d.lr_a, d.epochs_a, d.lambda_delta), (1e-3, 200, 1e-3));
        assert_eq!((d.lr_b, d.epochs_b, d.lambda_b, d.lambda_spar), (5e-3, 200, 1.0, 3.0));
        assert_eq!((d.lr_c, d.epochs_c, d.strength), (1e-3, 100, 0.7));
    }

    #[test]
    fn regularizers_wait_then_ramp() {
        let c = PipelineConfig {
            epochs_b: 10,
            reg_delay: 0.3,
            reg_warmup: 0.2,
            ..PipelineConfig::default()
        };
        let s: Vec<f64> = (0..10).map(|e| c.reg_scale(e)).collect();
        assert_eq!(s, [0.0, 0.0, 0.0, 0.5, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
    }
}
