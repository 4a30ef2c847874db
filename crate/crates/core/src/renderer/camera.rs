//! Pinhole cameras in the OpenCV convention: camera `+z` looks forward,
//! `+x` right, `+y` down. Intrinsics act on normalized image coordinates,
//! where `(0, 0)` is the top-left image corner and `(1, 1)` the bottom-right.

use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];

/// Packed length: 16 extrinsic floats followed by 9 intrinsic floats.
pub const PACKED_LEN: usize = 25;

const ORTHO_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Camera {
    /// Row-major camera-to-world transform.
    pub cam2world: [[f64; 4]; 4],
    /// Row-major intrinsics in normalized image coordinates.
    pub intrinsics: [[f64; 3]; 3],
}

/// Intrinsics with focal length `focal` and the principal point at the
/// image center.
pub fn centered_intrinsics(focal: f64) -> [[f64; 3]; 3] {
    [[focal, 0.0, 0.5], [0.0, focal, 0.5], [0.0, 0.0, 1.0]]
}

impl Camera {
    pub fn new(cam2world: [[f64; 4]; 4], intrinsics: [[f64; 3]; 3]) -> Result<Self> {
        let cam = Self {
            cam2world,
            intrinsics,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn identity(focal: f64) -> Self {
        let mut m = [[0.0; 4]; 4];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        Self {
            cam2world: m,
            intrinsics: centered_intrinsics(focal),
        }
    }

    /// Camera at `eye` looking at `target` with world `+y` as up.
    pub fn look_at(eye: Vec3, target: Vec3, focal: f64) -> Result<Self> {
        let forward = normalize(sub(target, eye))
            .ok_or_else(|| Error::InvalidArgument("look_at: eye equals target".into()))?;
        let down = [0.0, -1.0, 0.0];
        let right = normalize(cross(down, forward))
            .ok_or_else(|| Error::InvalidArgument("look_at: view direction is vertical".into()))?;
        let down = cross(forward, right);
        let mut m = [[0.0; 4]; 4];
        for r in 0..3 {
            m[r] = [right[r], down[r], forward[r], eye[r]];
        }
        m[3][3] = 1.0;
        Self::new(m, centered_intrinsics(focal))
    }

    /// Camera on a sphere of `radius` around the origin, looking at it.
    /// Azimuth 0 and elevation 0 put the camera on the `+z` axis; positive
    /// elevation raises it toward `+y`.
    pub fn orbit(radius: f64, azimuth: f64, elevation: f64, focal: f64) -> Result<Self> {
        let eye = [
            radius * azimuth.sin() * elevation.cos(),
            radius * elevation.sin(),
            radius * azimuth.cos() * elevation.cos(),
        ];
        Self::look_at(eye, [0.0; 3], focal)
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.cam2world;
        if m.iter().flatten().chain(self.intrinsics.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("camera has non-finite entries".into()));
        }
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|r| m[r][i] * m[r][j]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                if (dot - want).abs() > ORTHO_TOL {
                    return Err(Error::InvalidArgument(format!(
                        "camera rotation is not orthonormal (column dot {i},{j} = {dot})"
                    )));
                }
            }
        }
        if self.intrinsics[2][2] != 1.0 {
            return Err(Error::InvalidArgument(format!(
                "intrinsics[2][2] must be 1, got {}",
                self.intrinsics[2][2]
            )));
        }
        Ok(())
    }

    pub fn origin(&self) -> Vec3 {
        [self.cam2world[0][3], self.cam2world[1][3], self.cam2world[2][3]]
    }

    pub fn pack(&self) -> [f64; PACKED_LEN] {
        let mut out = [0.0; PACKED_LEN];
        for (o, v) in out.iter_mut().zip(self.cam2world.iter().flatten().chain(self.intrinsics.iter().flatten())) {
            *o = *v;
        }
        out
    }

    pub fn unpack(values: &[f64]) -> Result<Self> {
        if values.len() != PACKED_LEN {
            return Err(Error::InvalidArgument(format!(
                "camera needs {PACKED_LEN} values, got {}",
                values.len()
            )));
        }
        let mut m = [[0.0; 4]; 4];
        let mut k = [[0.0; 3]; 3];
        for i in 0..16 {
            m[i / 4][i % 4] = values[i];
        }
        for i in 0..9 {
            k[i / 3][i % 3] = values[16 + i];
        }
        Self::new(m, k)
    }

    /// Inverse intrinsics, or an error when the matrix is singular.
    pub fn inverse_intrinsics(&self) -> Result<[[f64; 3]; 3]> {
        invert3(&self.intrinsics).ok_or_else(|| Error::InvalidArgument("intrinsics are not invertible".into()))
    }
}

pub(crate) fn invert3(a: &[[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let cof = |r0: usize, r1: usize, c0: usize, c1: usize| a[r0][c0] * a[r1][c1] - a[r0][c1] * a[r1][c0];
    let c00 = cof(1, 2, 1, 2);
    let c01 = -cof(1, 2, 0, 2);
    let c02 = cof(1, 2, 0, 1);
    let det = a[0][0] * c00 + a[0][1] * c01 + a[0][2] * c02;
    if det.abs() < 1e-12 || !det.is_finite() {
        return None;
    }
    let adj = [
        [c00, -cof(0, 2, 1, 2), cof(0, 1, 1, 2)],
        [c01, cof(0, 2, 0, 2), -cof(0, 1, 0, 2)],
        [c02, -cof(0, 2, 0, 1), cof(0, 1, 0, 1)],
    ];
    let mut inv = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            inv[r][c] = adj[r][c] / det;
        }
    }
    Some(inv)
}

pub(crate) fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

pub(crate) fn norm(a: Vec3) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

pub(crate) fn normalize(a: Vec3) -> Option<Vec3> {
    let n = norm(a);
    (n > 1e-12).then(|| [a[0] / n, a[1] / n, a[2] / n])
}
