//! Quadrature along rays, for one field and for two fields under a shared
//! transmittance.
//!
//! For one field, sample `k` contributes `T_k * alpha_k * c_k` with
//! `T_k = exp(-sum_{j<k} sigma_j delta_j)` and `alpha_k = 1 - exp(-sigma_k delta_k)`.
//! The composite uses `T_k = exp(-sum_{j<k} (sigma^O_j + sigma^I_j) delta_j)`
//! and the contribution `T_k * (b_k alpha^O_k c^O_k + (1 - b_k) alpha^I_k c^I_k)`.
//!
//! Both are exposed as plain per-ray functions and as graph ops whose
//! backward is written out by hand: with `S_k` the suffix sum of
//! `g . contribution_j` over `j > k`, every density picks up `-delta_k S_k`
//! from the transmittance of later samples.

use crate::error::{Error, Result};
use crate::tensorlab::{CustomOp, Tensor, Var};

/// Opacity of one interval: `1 - exp(-x)`.
#[inline]
pub fn alpha(x: f64) -> f64 {
    -(-x).exp_m1()
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RayIntegral {
    pub color: [f64; 3],
    pub opacity: f64,
    pub depth: f64,
}

/// Single-field quadrature for one ray. `color` holds `K x 3` values.
pub fn integrate_ray(sigma: &[f64], color: &[f64], deltas: &[f64], depths: &[f64]) -> RayIntegral {
    let mut out = RayIntegral::default();
    let mut acc = 0.0f64;
    for k in 0..sigma.len() {
        let x = sigma[k] * deltas[k];
        let w = (-acc).exp() * alpha(x);
        for ch in 0..3 {
            out.color[ch] += w * color[k * 3 + ch];
        }
        out.opacity += w;
        out.depth += w * depths[k];
        acc += x;
    }
    out
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CompositeIntegral {
    pub color: [f64; 3],
    /// `sum_k T_k * (1 - exp(-(sigma^O_k + sigma^I_k) delta_k)) * b_k`: the
    /// share of the pixel's total sample weight assigned to the OOD field.
    pub blend: f64,
    /// `sum_k T_k (1 - b_k) alpha^I_k`.
    pub opacity_in: f64,
    /// `sum_k T_k b_k alpha^O_k`.
    pub opacity_ood: f64,
    pub depth: f64,
}

/// Two-field quadrature for one ray.
#[allow(clippy::too_many_arguments)]
pub fn integrate_composite(
    sigma_in: &[f64],
    color_in: &[f64],
    sigma_ood: &[f64],
    color_ood: &[f64],
    blend: &[f64],
    deltas: &[f64],
    depths: &[f64],
) -> CompositeIntegral {
    let mut out = CompositeIntegral::default();
    let mut acc = 0.0f64;
    for k in 0..sigma_in.len() {
        let d = deltas[k];
        let t = (-acc).exp();
        let b = blend[k];
        let w_ood = t * (b * alpha(sigma_ood[k] * d));
        let w_in = t * ((1.0 - b) * alpha(sigma_in[k] * d));
        for ch in 0..3 {
            out.color[ch] += w_ood * color_ood[k * 3 + ch] + w_in * color_in[k * 3 + ch];
        }
        let total = sigma_ood[k] + sigma_in[k];
        out.blend += t * alpha(total * d) * b;
        out.opacity_in += w_in;
        out.opacity_ood += w_ood;
        out.depth += (w_ood + w_in) * depths[k];
        acc += total * d;
    }
    out
}

fn dot3(a: &[f64], b: &[f64]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

struct VolumeRender {
    deltas: Vec<f64>,
    samples: usize,
}

impl CustomOp for VolumeRender {
    fn name(&self) -> &'static str {
        "volume_render"
    }

    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, grad: &Tensor) -> Vec<Option<Tensor>> {
        let (sigma, color) = (inputs[0], inputs[1]);
        let k = self.samples;
        let mut g_sigma = vec![0.0; sigma.numel()];
        let mut g_color = vec![0.0; color.numel()];
        let mut trans = vec![0.0; k];
        let mut gc = vec![0.0; k];
        for (r, g) in grad.data().chunks_exact(3).enumerate() {
            let s = &sigma.data()[r * k..(r + 1) * k];
            let c = &color.data()[r * k * 3..(r + 1) * k * 3];
            let d = &self.deltas[r * k..(r + 1) * k];
            let mut acc = 0.0f64;
            for i in 0..k {
                trans[i] = (-acc).exp();
                gc[i] = dot3(g, &c[i * 3..i * 3 + 3]);
                acc += s[i] * d[i];
            }
            let mut suffix = 0.0;
            for i in (0..k).rev() {
                let x = s[i] * d[i];
                let w = trans[i] * alpha(x);
                g_sigma[r * k + i] = gc[i] * trans[i] * d[i] * (-x).exp() - d[i] * suffix;
                for ch in 0..3 {
                    g_color[(r * k + i) * 3 + ch] = w * g[ch];
                }
                suffix += w * gc[i];
            }
        }
        vec![
            Some(Tensor::new(sigma.shape(), g_sigma).expect("sigma grad")),
            Some(Tensor::new(color.shape(), g_color).expect("color grad")),
        ]
    }
}

struct CompositeRender {
    deltas: Vec<f64>,
    samples: usize,
}

impl CustomOp for CompositeRender {
    fn name(&self) -> &'static str {
        "composite_render"
    }

    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, grad: &Tensor) -> Vec<Option<Tensor>> {
        let [sigma_in, color_in, sigma_ood, color_ood, blend] = [0, 1, 2, 3, 4].map(|i| inputs[i]);
        let k = self.samples;
        let mut g_si = vec![0.0; sigma_in.numel()];
        let mut g_ci = vec![0.0; color_in.numel()];
        let mut g_so = vec![0.0; sigma_ood.numel()];
        let mut g_co = vec![0.0; color_ood.numel()];
        let mut g_b = vec![0.0; blend.numel()];
        let mut trans = vec![0.0; k];
        for (r, g) in grad.data().chunks_exact(3).enumerate() {
            let off = r * k;
            let d = &self.deltas[off..off + k];
            let mut acc = 0.0f64;
            for i in 0..k {
                trans[i] = (-acc).exp();
                acc += (sigma_ood.data()[off + i] + sigma_in.data()[off + i]) * d[i];
            }
            let mut suffix = 0.0;
            for i in (0..k).rev() {
                let j = off + i;
                let (si, so, b) = (sigma_in.data()[j], sigma_ood.data()[j], blend.data()[j]);
                let ci = &color_in.data()[j * 3..j * 3 + 3];
                let co = &color_ood.data()[j * 3..j * 3 + 3];
                let (gci, gco) = (dot3(g, ci), dot3(g, co));
                let t = trans[i];
                let (a_in, a_ood) = (alpha(si * d[i]), alpha(so * d[i]));
                let w_in = t * ((1.0 - b) * a_in);
                let w_ood = t * (b * a_ood);
                g_si[j] = t * (1.0 - b) * d[i] * (-si * d[i]).exp() * gci - d[i] * suffix;
                g_so[j] = t * b * d[i] * (-so * d[i]).exp() * gco - d[i] * suffix;
                g_b[j] = t * (a_ood * gco - a_in * gci);
                for ch in 0..3 {
                    g_ci[j * 3 + ch] = w_in * g[ch];
                    g_co[j * 3 + ch] = w_ood * g[ch];
                }
                suffix += w_in * gci + w_ood * gco;
            }
        }
        let t = |x: &Tensor, v: Vec<f64>| Some(Tensor::new(x.shape(), v).expect("composite grad"));
        vec![
            t(sigma_in, g_si),
            t(color_in, g_ci),
            t(sigma_ood, g_so),
            t(color_ood, g_co),
            t(blend, g_b),
        ]
    }
}

fn check_ray_shapes(op: &'static str, sigma: &Tensor, color: &Tensor, deltas: &[f64]) -> Result<(usize, usize)> {
    let [rays, k] = *sigma.shape() else {
        return Err(Error::Shape {
            op,
            lhs: vec![0, 0],
            rhs: sigma.shape().to_vec(),
        });
    };
    if color.shape() != [rays, k, 3] {
        return Err(Error::Shape {
            op,
            lhs: vec![rays, k, 3],
            rhs: color.shape().to_vec(),
        });
    }
    if deltas.len() != rays * k {
        return Err(Error::Shape {
            op,
            lhs: vec![rays * k],
            rhs: vec![deltas.len()],
        });
    }
    Ok((rays, k))
}

/// Differentiable single-field render: `sigma` is `[R, K]`, `color` is
/// `[R, K, 3]`, `deltas` holds `R * K` interval lengths. Returns `[R, 3]`.
pub fn volume_render<'g>(sigma: Var<'g>, color: Var<'g>, deltas: &[f64]) -> Result<Var<'g>> {
    let (sv, cv) = (sigma.value(), color.value());
    let (rays, k) = check_ray_shapes("volume_render", &sv, &cv, deltas)?;
    let zeros = vec![0.0; k];
    let mut out = Vec::with_capacity(rays * 3);
    for r in 0..rays {
        let ri = integrate_ray(
            &sv.data()[r * k..(r + 1) * k],
            &cv.data()[r * k * 3..(r + 1) * k * 3],
            &deltas[r * k..(r + 1) * k],
            &zeros,
        );
        out.extend(ri.color);
    }
    let op = VolumeRender {
        deltas: deltas.to_vec(),
        samples: k,
    };
    sigma
        .graph()
        .custom(op, &[sigma, color], Tensor::new(&[rays, 3], out)?)
}

/// Differentiable composite render of an in-distribution and an OOD field
/// sharing sample positions. Shapes as in [`volume_render`]; `blend` is
/// `[R, K]`. Returns `[R, 3]`.
pub fn composite_render<'g>(
    sigma_in: Var<'g>,
    color_in: Var<'g>,
    sigma_ood: Var<'g>,
    color_ood: Var<'g>,
    blend: Var<'g>,
    deltas: &[f64],
) -> Result<Var<'g>> {
    let (si, ci, so, co, b) = (sigma_in.value(), color_in.value(), sigma_ood.value(), color_ood.value(), blend.value());
    let (rays, k) = check_ray_shapes("composite_render", &si, &ci, deltas)?;
    check_ray_shapes("composite_render", &so, &co, deltas)?;
    if so.shape() != si.shape() || b.shape() != si.shape() {
        return Err(Error::Shape {
            op: "composite_render",
            lhs: si.shape().to_vec(),
            rhs: if so.shape() != si.shape() { so.shape().to_vec() } else { b.shape().to_vec() },
        });
    }
    let zeros = vec![0.0; k];
    let mut out = Vec::with_capacity(rays * 3);
    for r in 0..rays {
        let s = r * k..(r + 1) * k;
        let c = r * k * 3..(r + 1) * k * 3;
        let ri = integrate_composite(
            &si.data()[s.clone()],
            &ci.data()[c.clone()],
            &so.data()[s.clone()],
            &co.data()[c],
            &b.data()[s.clone()],
            &deltas[s],
            &zeros,
        );
        out.extend(ri.color);
    }
    let op = CompositeRender {
        deltas: deltas.to_vec(),
        samples: k,
    };
    sigma_in.graph().custom(
        op,
        &[sigma_in, color_in, sigma_ood, color_ood, blend],
        Tensor::new(&[rays, 3], out)?,
    )
}
