//! Tri-plane features and the MLP decoders that turn them into radiance.
//!
//! Plane convention (checkpoints depend on it): plane 0 is XY indexed by
//! `(x, y)`, plane 1 is XZ indexed by `(x, z)`, plane 2 is YZ indexed by
//! `(y, z)`. Each plane is stored `[R, R, C]` with the first index running
//! along the first named axis. World coordinates in `[-s, s]` map linearly to
//! continuous texel coordinates in `[0, R - 1]`; points outside are clamped to
//! the boundary texels.

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensorlab::{Checkpoint, CustomOp, Graph, Precision, Tensor, Var, ACTIVATION_CLAMP};

pub const PLANE_NAMES: [&str; 3] = ["xy", "xz", "yz"];
const PLANE_AXES: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlaneGeometry {
    pub resolution: usize,
    pub channels: usize,
    /// Half-extent `s` of the cube `[-s, s]^3` the planes span.
    pub bound: f64,
}

impl PlaneGeometry {
    pub fn new(resolution: usize, channels: usize, bound: f64) -> Result<Self> {
        if resolution < 2 || channels == 0 || !(bound > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "tri-plane needs R >= 2, C >= 1 and s > 0 (got R={resolution}, C={channels}, s={bound})"
            )));
        }
        Ok(Self {
            resolution,
            channels,
            bound,
        })
    }

    pub fn plane_len(&self) -> usize {
        self.resolution * self.resolution * self.channels
    }

    pub fn shape(&self) -> [usize; 4] {
        [3, self.resolution, self.resolution, self.channels]
    }

    pub fn numel(&self) -> usize {
        3 * self.plane_len()
    }

    /// Continuous texel coordinate and `du/dx` (zero when clamped).
    fn texel(&self, x: f64) -> (f64, f64) {
        let r1 = (self.resolution - 1) as f64;
        let scale = r1 / (2.0 * self.bound);
        let u = (x + self.bound) * scale;
        if u <= 0.0 {
            (0.0, 0.0)
        } else if u >= r1 {
            (r1, 0.0)
        } else {
            (u, scale)
        }
    }

    /// Bilinear stencil on one plane: base index of the `(i0, j0)` texel,
    /// fractional offsets, and the texel-space derivatives of the query.
    fn stencil(&self, plane: usize, p: [f64; 3]) -> Stencil {
        let (a, b) = PLANE_AXES[plane];
        let (u, du) = self.texel(p[a]);
        let (v, dv) = self.texel(p[b]);
        let last = self.resolution - 2;
        let i0 = (u.floor() as usize).min(last);
        let j0 = (v.floor() as usize).min(last);
        Stencil {
            i0,
            j0,
            fu: u - i0 as f64,
            fv: v - j0 as f64,
            du,
            dv,
        }
    }
}

struct Stencil {
    i0: usize,
    j0: usize,
    fu: f64,
    fv: f64,
    du: f64,
    dv: f64,
}

impl Stencil {
    /// Offsets (in units of channels) of the four corners and their weights.
    fn corners(&self, r: usize) -> [(usize, f64); 4] {
        let base = self.i0 * r + self.j0;
        [
            (base, (1.0 - self.fu) * (1.0 - self.fv)),
            (base + r, self.fu * (1.0 - self.fv)),
            (base + 1, (1.0 - self.fu) * self.fv),
            (base + r + 1, self.fu * self.fv),
        ]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TriPlane {
    pub geometry: PlaneGeometry,
    /// `[3, R, R, C]`.
    pub planes: Tensor,
}

impl TriPlane {
    pub fn zeros(geometry: PlaneGeometry) -> Self {
        Self {
            geometry,
            planes: Tensor::zeros(&geometry.shape()),
        }
    }

    pub fn randn<R: Rng + ?Sized>(geometry: PlaneGeometry, std: f64, rng: &mut R) -> Self {
        Self {
            geometry,
            planes: Tensor::randn(&geometry.shape(), std, rng),
        }
    }

    pub fn from_tensor(geometry: PlaneGeometry, planes: Tensor) -> Result<Self> {
        if planes.shape() != geometry.shape() {
            return Err(Error::Shape {
                op: "triplane",
                lhs: geometry.shape().to_vec(),
                rhs: planes.shape().to_vec(),
            });
        }
        Ok(Self { geometry, planes })
    }

    /// Sum of the three bilinear plane reads at `x`.
    pub fn sample(&self, x: [f64; 3]) -> Vec<f64> {
        let g = &self.geometry;
        let c = g.channels;
        let mut out = vec![0.0; c];
        for plane in 0..3 {
            let data = &self.planes.data()[plane * g.plane_len()..(plane + 1) * g.plane_len()];
            for (off, w) in g.stencil(plane, x).corners(g.resolution) {
                for (o, v) in out.iter_mut().zip(&data[off * c..(off + 1) * c]) {
                    *o += w * v;
                }
            }
        }
        out
    }

    pub fn write_checkpoint(&self, ck: &mut Checkpoint, prefix: &str, precision: Precision) {
        let g = &self.geometry;
        let shape = [g.resolution, g.resolution, g.channels];
        for (p, name) in PLANE_NAMES.iter().enumerate() {
            let data = self.planes.data()[p * g.plane_len()..(p + 1) * g.plane_len()].to_vec();
            let t = Tensor::new(&shape, data).expect("plane shape");
            ck.insert_tensor(format!("{prefix}.{name}"), &t, precision);
        }
        ck.insert_tensor(format!("{prefix}.bound"), &Tensor::scalar(g.bound), Precision::F64);
    }

    pub fn read_checkpoint(ck: &Checkpoint, prefix: &str) -> Result<Self> {
        let bound = ck.tensor(&format!("{prefix}.bound"))?.item();
        let mut data = Vec::new();
        let mut dims = None;
        for name in PLANE_NAMES {
            let t = ck.tensor(&format!("{prefix}.{name}"))?;
            let s = t.shape().to_vec();
            if s.len() != 3 || s[0] != s[1] || dims.is_some_and(|d| d != s) {
                return Err(Error::Format(format!("{prefix}.{name} has shape {s:?}")));
            }
            dims = Some(s);
            data.extend_from_slice(t.data());
        }
        let s = dims.expect("three planes");
        let geometry = PlaneGeometry::new(s[0], s[2], bound)?;
        Self::from_tensor(geometry, Tensor::new(&geometry.shape(), data)?)
    }
}

/// Graph op sampling `[3, R, R, C]` planes at `[N, 3]` points into `[N, C]`.
struct TriplaneSample {
    geometry: PlaneGeometry,
}

impl CustomOp for TriplaneSample {
    fn name(&self) -> &'static str {
        "sample_triplane"
    }

    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, grad: &Tensor) -> Vec<Option<Tensor>> {
        let (planes, points) = (inputs[0], inputs[1]);
        let g = &self.geometry;
        let (r, c, plen) = (g.resolution, g.channels, g.plane_len());
        let mut g_planes = vec![0.0; planes.numel()];
        let mut g_points = vec![0.0; points.numel()];
        let pd = planes.data();
        for (n, p) in points.data().chunks_exact(3).enumerate() {
            let p = [p[0], p[1], p[2]];
            let go = &grad.data()[n * c..(n + 1) * c];
            for plane in 0..3 {
                let st = g.stencil(plane, p);
                let base = plane * plen;
                for (off, w) in st.corners(r) {
                    let dst = &mut g_planes[base + off * c..base + (off + 1) * c];
                    for (d, gv) in dst.iter_mut().zip(go) {
                        *d += w * gv;
                    }
                }
                if st.du != 0.0 || st.dv != 0.0 {
                    let [(o00, _), (o10, _), (o01, _), (o11, _)] = st.corners(r);
                    let texel = |o: usize, ch: usize| pd[base + o * c + ch];
                    let (mut su, mut sv) = (0.0, 0.0);
                    for (ch, gv) in go.iter().enumerate() {
                        let (f00, f10, f01, f11) = (texel(o00, ch), texel(o10, ch), texel(o01, ch), texel(o11, ch));
                        su += gv * ((1.0 - st.fv) * (f10 - f00) + st.fv * (f11 - f01));
                        sv += gv * ((1.0 - st.fu) * (f01 - f00) + st.fu * (f11 - f10));
                    }
                    let (a, b) = PLANE_AXES[plane];
                    g_points[n * 3 + a] += su * st.du;
                    g_points[n * 3 + b] += sv * st.dv;
                }
            }
        }
        vec![
            Some(Tensor::new(planes.shape(), g_planes).expect("plane grad")),
            Some(Tensor::new(points.shape(), g_points).expect("point grad")),
        ]
    }
}

/// Differentiable tri-plane lookup: `planes` is `[3, R, R, C]`, `points` is
/// `[N, 3]`; returns summed features `[N, C]`.
pub fn sample_triplane<'g>(planes: Var<'g>, geometry: PlaneGeometry, points: Var<'g>) -> Result<Var<'g>> {
    let pv = planes.value();
    let xv = points.value();
    if pv.shape() != geometry.shape() {
        return Err(Error::Shape {
            op: "sample_triplane",
            lhs: geometry.shape().to_vec(),
            rhs: pv.shape().to_vec(),
        });
    }
    if xv.rank() != 2 || xv.shape()[1] != 3 {
        return Err(Error::Shape {
            op: "sample_triplane",
            lhs: vec![xv.shape().first().copied().unwrap_or(0), 3],
            rhs: xv.shape().to_vec(),
        });
    }
    let tp = TriPlane {
        geometry,
        planes: (*pv).clone(),
    };
    let n = xv.shape()[0];
    let mut out = Vec::with_capacity(n * geometry.channels);
    for p in xv.data().chunks_exact(3) {
        out.extend(tp.sample([p[0], p[1], p[2]]));
    }
    let out = Tensor::new(&[n, geometry.channels], out)?;
    planes
        .graph()
        .custom(TriplaneSample { geometry }, &[planes, points], out)
}

/// Which outputs a decoder produces.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Head {
    /// Color (3) and density (1), from tri-plane features alone.
    InDistribution,
    /// Color (3), density (1) and blend weight (1), from features
    /// concatenated with a per-frame latent of `latent_dim`.
    OutOfDistribution { latent_dim: usize },
}

impl Head {
    pub fn output_width(&self) -> usize {
        match self {
            Head::InDistribution => 4,
            Head::OutOfDistribution { .. } => 5,
        }
    }

    fn latent_dim(&self) -> usize {
        match self {
            Head::InDistribution => 0,
            Head::OutOfDistribution { latent_dim } => *latent_dim,
        }
    }
}

/// Fully connected decoder with softplus hidden activations.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpDecoder {
    pub head: Head,
    /// Layer widths from input to output.
    pub widths: Vec<usize>,
    /// `weights[l]` is `[widths[l], widths[l + 1]]`.
    pub weights: Vec<Tensor>,
    pub biases: Vec<Tensor>,
}

impl MlpDecoder {
    pub fn zeros(head: Head, feature_channels: usize, hidden: &[usize]) -> Self {
        let widths: Vec<usize> = std::iter::once(feature_channels + head.latent_dim())
            .chain(hidden.iter().copied())
            .chain(std::iter::once(head.output_width()))
            .collect();
        let weights = widths.windows(2).map(|w| Tensor::zeros(&[w[0], w[1]])).collect();
        let biases = widths[1..].iter().map(|&w| Tensor::zeros(&[w])).collect();
        Self {
            head,
            widths,
            weights,
            biases,
        }
    }

    /// Weights and biases drawn from `N(0, std²)`.
    pub fn randn<R: Rng + ?Sized>(head: Head, feature_channels: usize, hidden: &[usize], std: f64, rng: &mut R) -> Self {
        let mut d = Self::zeros(head, feature_channels, hidden);
        for (w, b) in d.weights.iter_mut().zip(d.biases.iter_mut()) {
            *w = Tensor::randn(w.shape(), std, rng);
            *b = Tensor::randn(b.shape(), std, rng);
        }
        d
    }

    /// Fan-in scaled initialization, used where training starts from scratch.
    pub fn init_scaled<R: Rng + ?Sized>(head: Head, feature_channels: usize, hidden: &[usize], rng: &mut R) -> Self {
        let mut d = Self::zeros(head, feature_channels, hidden);
        for w in d.weights.iter_mut() {
            let fan_in = w.shape()[0] as f64;
            *w = Tensor::randn(w.shape(), (1.0 / fan_in).sqrt(), rng);
        }
        d
    }

    pub fn feature_channels(&self) -> usize {
        self.widths[0] - self.head.latent_dim()
    }

    /// Parameters in a fixed order: `w0, b0, w1, b1, ...`.
    pub fn params(&self) -> Vec<&Tensor> {
        self.weights.iter().zip(&self.biases).flat_map(|(w, b)| [w, b]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| [w, b])
            .collect()
    }

    pub fn set_params(&mut self, params: Vec<Tensor>) -> Result<()> {
        if params.len() != 2 * self.weights.len() {
            return Err(Error::InvalidArgument(format!(
                "decoder expects {} tensors, got {}",
                2 * self.weights.len(),
                params.len()
            )));
        }
        for (dst, src) in self.params_mut().into_iter().zip(params) {
            if dst.shape() != src.shape() {
                return Err(Error::Shape {
                    op: "set_params",
                    lhs: dst.shape().to_vec(),
                    rhs: src.shape().to_vec(),
                });
            }
            *dst = src;
        }
        Ok(())
    }

    pub fn bind<'g>(&self, g: &'g Graph, trainable: bool) -> DecoderVars<'g> {
        DecoderVars {
            head: self.head,
            widths: self.widths.clone(),
            weights: self.weights.iter().map(|w| g.input(w.clone(), trainable)).collect(),
            biases: self.biases.iter().map(|b| g.input(b.clone(), trainable)).collect(),
        }
    }

    pub fn write_checkpoint(&self, ck: &mut Checkpoint, prefix: &str, precision: Precision) {
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            ck.insert_tensor(format!("{prefix}.w{l}"), w, precision);
            ck.insert_tensor(format!("{prefix}.b{l}"), b, precision);
        }
        let head = match self.head {
            Head::InDistribution => 0.0,
            Head::OutOfDistribution { latent_dim } => latent_dim as f64,
        };
        ck.insert_tensor(format!("{prefix}.latent_dim"), &Tensor::scalar(head), Precision::F64);
    }

    pub fn read_checkpoint(ck: &Checkpoint, prefix: &str, head_kind: HeadKind) -> Result<Self> {
        let latent_dim = ck.tensor(&format!("{prefix}.latent_dim"))?.item() as usize;
        let head = match head_kind {
            HeadKind::InDistribution => Head::InDistribution,
            HeadKind::OutOfDistribution => Head::OutOfDistribution { latent_dim },
        };
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        while ck.contains(&format!("{prefix}.w{}", weights.len())) {
            let l = weights.len();
            weights.push(ck.tensor(&format!("{prefix}.w{l}"))?);
            biases.push(ck.tensor(&format!("{prefix}.b{l}"))?);
        }
        if weights.is_empty() {
            return Err(Error::MissingEntry(format!("{prefix}.w0")));
        }
        let mut widths = vec![weights[0].shape()[0]];
        for (w, b) in weights.iter().zip(&biases) {
            if w.rank() != 2 || w.shape()[0] != *widths.last().unwrap() || b.shape() != [w.shape()[1]] {
                return Err(Error::Format(format!("{prefix}: inconsistent layer shapes")));
            }
            widths.push(w.shape()[1]);
        }
        if *widths.last().unwrap() != head.output_width() {
            return Err(Error::Format(format!("{prefix}: output width does not match head")));
        }
        Ok(Self {
            head,
            widths,
            weights,
            biases,
        })
    }
}

/// Head selector for deserialization.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HeadKind {
    InDistribution,
    OutOfDistribution,
}

/// Decoder parameters bound to a graph.
pub struct DecoderVars<'g> {
    pub head: Head,
    pub widths: Vec<usize>,
    pub weights: Vec<Var<'g>>,
    pub biases: Vec<Var<'g>>,
}

impl<'g> DecoderVars<'g> {
    pub fn params(&self) -> Vec<Var<'g>> {
        self.weights.iter().zip(&self.biases).flat_map(|(&w, &b)| [w, b]).collect()
    }

    /// Run the MLP; `first_layer_extra` is added to the first pre-activation.
    fn forward(&self, input: Var<'g>, first_weight: Var<'g>, first_layer_extra: Option<Var<'g>>) -> Result<Var<'g>> {
        let mut h = input.matmul(first_weight)?;
        if let Some(extra) = first_layer_extra {
            h = h.add(extra)?;
        }
        h = h.add(self.biases[0])?;
        for l in 1..self.weights.len() {
            h = h.softplus()?.matmul(self.weights[l])?.add(self.biases[l])?;
        }
        Ok(h)
    }

    fn check_features(&self, op: &'static str, features: &Var<'g>, expected_head: HeadKind) -> Result<usize> {
        let kind = match self.head {
            Head::InDistribution => HeadKind::InDistribution,
            Head::OutOfDistribution { .. } => HeadKind::OutOfDistribution,
        };
        if kind != expected_head {
            return Err(Error::InvalidArgument(format!("{op}: decoder has head {:?}", self.head)));
        }
        let shape = features.shape();
        let channels = self.widths[0] - self.head.latent_dim();
        if shape.len() != 2 || shape[1] != channels {
            return Err(Error::Shape {
                op,
                lhs: vec![shape.first().copied().unwrap_or(0), channels],
                rhs: shape,
            });
        }
        Ok(shape[0])
    }
}

/// Per-sample radiance produced by a decoder.
#[derive(Clone, Copy, Debug)]
pub struct FieldSamples<'g> {
    /// `[N, 3]`, in `[0, 1]`.
    pub color: Var<'g>,
    /// `[N]`, non-negative.
    pub sigma: Var<'g>,
    /// `[N]`, in `(0, 1)`; only for out-of-distribution heads.
    pub blend: Option<Var<'g>>,
}

fn column<'g>(out: Var<'g>, col: usize) -> Result<Var<'g>> {
    let n = out.shape()[0];
    out.slice(1, col, col + 1)?.reshape(&[n])
}

/// In-distribution decoding: sigmoid color, softplus density.
pub fn decode_in<'g>(features: Var<'g>, decoder: &DecoderVars<'g>) -> Result<FieldSamples<'g>> {
    decoder.check_features("decode_in", &features, HeadKind::InDistribution)?;
    let out = decoder.forward(features, decoder.weights[0], None)?;
    Ok(FieldSamples {
        color: out.slice(1, 0, 3)?.sigmoid()?,
        sigma: column(out, 3)?.softplus()?,
        blend: None,
    })
}

/// Out-of-distribution decoding of `(features, phi)`.
///
/// The input is the concatenation `[features, phi]`; the first layer is
/// evaluated as `features * W_f + phi * W_phi`, which is the same product
/// without materializing the repeated latent.
pub fn decode_ood<'g>(features: Var<'g>, phi: Var<'g>, decoder: &DecoderVars<'g>) -> Result<FieldSamples<'g>> {
    decoder.check_features("decode_ood", &features, HeadKind::OutOfDistribution)?;
    let latent_dim = decoder.head.latent_dim();
    if phi.shape() != [latent_dim] {
        return Err(Error::Shape {
            op: "decode_ood",
            lhs: vec![latent_dim],
            rhs: phi.shape(),
        });
    }
    let channels = decoder.widths[0] - latent_dim;
    let w0 = decoder.weights[0];
    let w_feat = w0.slice(0, 0, channels)?;
    let w_phi = w0.slice(0, channels, channels + latent_dim)?;
    let phi_term = phi.reshape(&[1, latent_dim])?.matmul(w_phi)?;
    let out = decoder.forward(features, w_feat, Some(phi_term))?;
    Ok(FieldSamples {
        color: out.slice(1, 0, 3)?.sigmoid()?,
        sigma: column(out, 3)?.softplus()?,
        blend: Some(column(out, 4)?.clamp(-ACTIVATION_CLAMP, ACTIVATION_CLAMP)?.sigmoid()?),
    })
}

/// Per-frame latent codes `phi_t` for the out-of-distribution field.
#[derive(Clone, Debug, PartialEq)]
pub struct OodLatents {
    pub dim: usize,
    pub codes: Vec<Tensor>,
}

impl OodLatents {
    pub fn randn<R: Rng + ?Sized>(frames: usize, dim: usize, std: f64, rng: &mut R) -> Self {
        Self {
            dim,
            codes: (0..frames).map(|_| Tensor::randn(&[dim], std, rng)).collect(),
        }
    }

    pub fn get(&self, frame: usize) -> Result<&Tensor> {
        self.codes
            .get(frame)
            .ok_or_else(|| Error::InvalidArgument(format!("no latent for frame {frame} ({} frames)", self.codes.len())))
    }

    pub fn write_checkpoint(&self, ck: &mut Checkpoint, precision: Precision) {
        for (t, code) in self.codes.iter().enumerate() {
            ck.insert_tensor(format!("phi.{t}"), code, precision);
        }
    }

    pub fn read_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let mut codes = Vec::new();
        while ck.contains(&format!("phi.{}", codes.len())) {
            codes.push(ck.tensor(&format!("phi.{}", codes.len()))?);
        }
        let dim = codes.first().map(|c| c.numel()).unwrap_or(0);
        if codes.iter().any(|c| c.shape() != [dim]) {
            return Err(Error::Format("phi codes differ in dimension".into()));
        }
        Ok(Self { dim, codes })
    }
}
