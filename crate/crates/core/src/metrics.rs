//! Image quality metrics on `[0, 1]` images.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::losses::MaskImage;

/// PSNR reported when the mean squared error is below [`MSE_FLOOR`].
pub const PSNR_CAP: f64 = 99.0;
pub const MSE_FLOOR: f64 = 1e-10;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

fn check_pair(x: &Image, y: &Image) -> Result<()> {
    if !x.shape_matches(y) {
        return Err(Error::Shape {
            op: "metrics",
            lhs: vec![x.height, x.width, x.channels],
            rhs: vec![y.height, y.width, y.channels],
        });
    }
    Ok(())
}

fn check_mask(x: &Image, m: &MaskImage) -> Result<()> {
    if (m.width, m.height) != (x.width, x.height) {
        return Err(Error::Shape {
            op: "metrics",
            lhs: vec![x.height, x.width],
            rhs: vec![m.height, m.width],
        });
    }
    Ok(())
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse < MSE_FLOOR {
        PSNR_CAP
    } else {
        (-10.0 * mse.log10()).min(PSNR_CAP)
    }
}

/// Mean squared error over all channels, restricted to pixels where `mask`
/// is nonzero. `None` when the region is empty.
pub fn mse(x: &Image, y: &Image, mask: Option<&MaskImage>) -> Result<Option<f64>> {
    check_pair(x, y)?;
    if let Some(m) = mask {
        check_mask(x, m)?;
    }
    let c = x.channels;
    let (mut sum, mut n) = (0.0, 0usize);
    for p in 0..x.pixels() {
        if mask.is_some_and(|m| m.data[p] == 0.0) {
            continue;
        }
        for ch in 0..c {
            let d = x.data[p * c + ch] - y.data[p * c + ch];
            sum += d * d;
        }
        n += c;
    }
    Ok((n > 0).then(|| sum / n as f64))
}

pub fn psnr(x: &Image, y: &Image, mask: Option<&MaskImage>) -> Result<Option<f64>> {
    Ok(mse(x, y, mask)?.map(psnr_from_mse))
}

fn gaussian_window() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-(i as f64 - r).powi(2) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Mean SSIM over channels and over every full 11x11 window (no padding).
/// With a mask, only windows whose center pixel lies in the region count.
pub fn ssim(x: &Image, y: &Image, mask: Option<&MaskImage>) -> Result<Option<f64>> {
    check_pair(x, y)?;
    if let Some(m) = mask {
        check_mask(x, m)?;
    }
    if x.width < SSIM_WINDOW || x.height < SSIM_WINDOW {
        return Err(Error::InvalidArgument(format!(
            "ssim needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {}x{}",
            x.width, x.height
        )));
    }
    let g = gaussian_window();
    let half = SSIM_WINDOW / 2;
    let (w, c) = (x.width, x.channels);
    let (mut sum, mut n) = (0.0, 0usize);
    for cy in half..x.height - half {
        for cx in half..w - half {
            if mask.is_some_and(|m| m.data[cy * w + cx] == 0.0) {
                continue;
            }
            for ch in 0..c {
                let (mut mx, mut my, mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for (j, gy) in g.iter().enumerate() {
                    let row = (cy + j - half) * w;
                    for (i, gx) in g.iter().enumerate() {
                        let k = (row + cx + i - half) * c + ch;
                        let wt = gy * gx;
                        let (a, b) = (x.data[k], y.data[k]);
                        mx += wt * a;
                        my += wt * b;
                        xx += wt * a * a;
                        yy += wt * b * b;
                        xy += wt * a * b;
                    }
                }
                let (vx, vy, cov) = (xx - mx * mx, yy - my * my, xy - mx * my);
                sum += ((2.0 * mx * my + C1) * (2.0 * cov + C2))
                    / ((mx * mx + my * my + C1) * (vx + vy + C2));
                n += 1;
            }
        }
    }
    Ok((n > 0).then(|| sum / n as f64))
}

/// Metrics of one frame. Region PSNRs are `None` when the region is empty.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsRow {
    pub frame: usize,
    pub psnr: f64,
    pub ssim: f64,
    /// Mean squared error over the full image.
    pub l2: f64,
    /// Inside the mask.
    pub psnr_masked: Option<f64>,
    /// Outside the mask.
    pub psnr_unmasked: Option<f64>,
}

/// Full-image and region metrics of `x` against reference `y`.
pub fn compute_psnr_ssim(frame: usize, x: &Image, y: &Image, mask: Option<&MaskImage>) -> Result<MetricsRow> {
    let l2 = mse(x, y, None)?.expect("images have at least one pixel");
    let (psnr_masked, psnr_unmasked) = match mask {
        Some(m) => (psnr(x, y, Some(m))?, psnr(x, y, Some(&m.complement()))?),
        None => (None, None),
    };
    Ok(MetricsRow {
        frame,
        psnr: psnr_from_mse(l2),
        ssim: ssim(x, y, None)?.expect("window fits"),
        l2,
        psnr_masked,
        psnr_unmasked,
    })
}

pub const CSV_HEADER: &str = "frame,psnr,ssim,l2,psnr_masked,psnr_unmasked";

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".to_string(), fmt17)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsReport {
    pub rows: Vec<MetricsRow>,
}

impl MetricsReport {
    pub fn mean_psnr(&self) -> f64 {
        self.mean(|r| Some(r.psnr))
    }

    pub fn mean_ssim(&self) -> f64 {
        self.mean(|r| Some(r.ssim))
    }

    pub fn mean_l2(&self) -> f64 {
        self.mean(|r| Some(r.l2))
    }

    pub fn mean_psnr_masked(&self) -> f64 {
        self.mean(|r| r.psnr_masked)
    }

    pub fn mean_psnr_unmasked(&self) -> f64 {
        self.mean(|r| r.psnr_unmasked)
    }

    /// Mean over rows where `f` is defined; NaN when none is.
    fn mean(&self, f: impl Fn(&MetricsRow) -> Option<f64>) -> f64 {
        let vals: Vec<f64> = self.rows.iter().filter_map(f).collect();
        if vals.is_empty() {
            f64::NAN
        } else {
            vals.iter().sum::<f64>() / vals.len() as f64
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{CSV_HEADER}\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.frame,
                fmt17(r.psnr),
                fmt17(r.ssim),
                fmt17(r.l2),
                fmt_opt(r.psnr_masked),
                fmt_opt(r.psnr_unmasked)
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_images_hit_the_cap() {
        let x = Image::filled(16, 12, 3, 0.3);
        let r = compute_psnr_ssim(0, &x, &x, None).unwrap();
        assert_eq!(r.psnr, PSNR_CAP);
        assert!((r.ssim - 1.0).abs() < 1e-12);
    }

    #[test]
    fn window_is_normalized() {
        let g = gaussian_window();
        assert!((g.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(g[0], g[10]);
    }
}
