//! Rotations of label volumes about their geometric center.
//!
//! Angles are degrees, composed as `R = Rz(t3) * Ry(t2) * Rx(t1)`. Resampling
//! works in millimetres so anisotropic spacing is honored, and uses nearest
//! neighbour lookup because labels are categorical.

use serde::{Deserialize, Serialize};

use crate::volume::LabelVolume;

/// Rotation angles `(t1, t2, t3)` about x, y and z, in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EulerAngles(pub [f64; 3]);

impl EulerAngles {
    pub const ZERO: EulerAngles = EulerAngles([0.0; 3]);

    pub fn degrees(&self) -> [f64; 3] {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|a| a.is_finite())
    }

    /// Same rotation with each angle wrapped into `[-180, 180)`.
    pub fn canonical(&self) -> EulerAngles {
        EulerAngles(self.0.map(|a| {
            let w = (a + 180.0).rem_euclid(360.0) - 180.0;
            if w >= 180.0 {
                w - 360.0
            } else {
                w
            }
        }))
    }
}

/// Row-major 3x3 rotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix(pub [[f64; 3]; 3]);

impl RotationMatrix {
    pub const IDENTITY: RotationMatrix =
        RotationMatrix([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);

    pub fn about_x(deg: f64) -> Self {
        let (s, c) = deg.to_radians().sin_cos();
        RotationMatrix([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])
    }

    pub fn about_y(deg: f64) -> Self {
        let (s, c) = deg.to_radians().sin_cos();
        RotationMatrix([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
    }

    pub fn about_z(deg: f64) -> Self {
        let (s, c) = deg.to_radians().sin_cos();
        RotationMatrix([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    }

    pub fn mul(&self, other: &RotationMatrix) -> RotationMatrix {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).map(|k| self.0[i][k] * other.0[k][j]).sum();
            }
        }
        RotationMatrix(out)
    }

    /// For a rotation this is also the inverse.
    pub fn transpose(&self) -> RotationMatrix {
        let m = &self.0;
        RotationMatrix([
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ])
    }

    #[inline]
    pub fn apply(&self, v: [f64; 3]) -> [f64; 3] {
        let m = &self.0;
        [
            m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
            m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
            m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
        ]
    }

    pub fn determinant(&self) -> f64 {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// Largest deviation of `R^T R` from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        let p = self.transpose().mul(self);
        let mut err: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { 1.0 } else { 0.0 };
                err = err.max((p.0[i][j] - target).abs());
            }
        }
        err
    }
}

pub fn rotation_matrix(angles: EulerAngles) -> RotationMatrix {
    let [t1, t2, t3] = angles.0;
    RotationMatrix::about_z(t3)
        .mul(&RotationMatrix::about_y(t2))
        .mul(&RotationMatrix::about_x(t1))
}

/// Geometric center of the voxel grid in voxel-center coordinates.
pub fn volume_center(dims: [usize; 3]) -> [f64; 3] {
    dims.map(|n| (n as f64 - 1.0) / 2.0)
}

/// Resamples `volume` so that output voxel `c` takes the label found at
/// `R^-1 (c - m) + m` in the input, with `m` the volume center and all
/// arithmetic in millimetres. Samples outside the input read as 0.
pub fn rotate_labels(volume: &LabelVolume, angles: EulerAngles) -> LabelVolume {
    let dims = volume.dims();
    let spacing = volume.spacing_mm();
    let center = volume_center(dims);
    let inverse = rotation_matrix(angles).transpose();
    let [nx, ny, nz] = dims;

    let mut data = vec![0u8; volume.len()];
    let mut i = 0;
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let p = [
                    (x as f64 - center[0]) * spacing[0],
                    (y as f64 - center[1]) * spacing[1],
                    (z as f64 - center[2]) * spacing[2],
                ];
                let q = inverse.apply(p);
                if let Some([sx, sy, sz]) = nearest_voxel(q, center, spacing, dims) {
                    data[i] = volume.get(sx, sy, sz);
                }
                i += 1;
            }
        }
    }
    LabelVolume::new(dims, spacing, data).expect("same geometry as input")
}

#[inline]
fn nearest_voxel(
    mm: [f64; 3],
    center: [f64; 3],
    spacing: [f64; 3],
    dims: [usize; 3],
) -> Option<[usize; 3]> {
    let mut out = [0usize; 3];
    for a in 0..3 {
        let idx = (mm[a] / spacing[a] + center[a] + 0.5).floor();
        if idx < 0.0 || idx >= dims[a] as f64 {
            return None;
        }
        out[a] = idx as usize;
    }
    Some(out)
}
