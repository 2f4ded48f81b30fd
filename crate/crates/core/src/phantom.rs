//! Synthetic label volumes built from boxes and ellipsoids.
//!
//! Shapes are given in 0-based voxel coordinates. A spec file uses the same
//! JSON syntax as a volume header:
//!
//! ```json
//! {
//!   "dims": [64, 64, 64],
//!   "spacing_mm": [1.0, 1.0, 1.0],
//!   "shape": { "box": { "corner": [22, 22, 22], "size": [20, 20, 20] } },
//!   "noise": { "p": 0.0, "seed": 0 }
//! }
//! ```

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::LabelVolume;
use crate::Dims;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    /// Voxels with `corner <= c < corner + size`.
    Box { corner: [usize; 3], size: [usize; 3] },
    /// Voxels with `sum(((c - center) / semi_axes)^2) <= 1`.
    Ellipsoid {
        center: [f64; 3],
        semi_axes: [f64; 3],
    },
    Union(Vec<Shape>),
}

impl Shape {
    pub fn sphere(center: [f64; 3], radius: f64) -> Self {
        Shape::Ellipsoid {
            center,
            semi_axes: [radius; 3],
        }
    }

    pub fn contains(&self, c: [usize; 3]) -> bool {
        match self {
            Shape::Box { corner, size } => {
                (0..3).all(|a| corner[a] <= c[a] && c[a] < corner[a] + size[a])
            }
            Shape::Ellipsoid { center, semi_axes } => {
                let d: f64 = (0..3)
                    .map(|a| {
                        let t = (c[a] as f64 - center[a]) / semi_axes[a];
                        t * t
                    })
                    .sum();
                d <= 1.0
            }
            Shape::Union(shapes) => shapes.iter().any(|s| s.contains(c)),
        }
    }

    fn check_bounds(&self, dims: Dims) -> Result<()> {
        match self {
            Shape::Box { corner, size } => {
                if (0..3).any(|a| size[a] == 0 || corner[a] + size[a] > dims[a]) {
                    return Err(Error::ShapeOutOfBounds(format!(
                        "box corner {corner:?} size {size:?} in dims {dims:?}"
                    )));
                }
            }
            Shape::Ellipsoid { center, semi_axes } => {
                let ok = (0..3).all(|a| {
                    semi_axes[a].is_finite()
                        && semi_axes[a] > 0.0
                        && center[a] - semi_axes[a] >= 0.0
                        && center[a] + semi_axes[a] <= (dims[a] - 1) as f64
                });
                if !ok {
                    return Err(Error::ShapeOutOfBounds(format!(
                        "ellipsoid center {center:?} semi-axes {semi_axes:?} in dims {dims:?}"
                    )));
                }
            }
            Shape::Union(shapes) => {
                for s in shapes {
                    s.check_bounds(dims)?;
                }
            }
        }
        Ok(())
    }
}

/// Independent per-voxel label flips.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Noise {
    pub p: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomSpec {
    pub dims: Dims,
    #[serde(default = "unit_spacing")]
    pub spacing_mm: [f64; 3],
    pub shape: Shape,
    #[serde(default)]
    pub noise: Option<Noise>,
}

fn unit_spacing() -> [f64; 3] {
    [1.0; 3]
}

impl PhantomSpec {
    pub fn new(dims: Dims, shape: Shape) -> Self {
        Self {
            dims,
            spacing_mm: unit_spacing(),
            shape,
            noise: None,
        }
    }

    pub fn with_noise(mut self, p: f64, seed: u64) -> Self {
        self.noise = Some(Noise { p, seed });
        self
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::MalformedHeader {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }

    fn validate(&self) -> Result<()> {
        // Geometry errors become InvalidVolume via the constructor.
        LabelVolume::zeros(self.dims, self.spacing_mm)?;
        self.shape.check_bounds(self.dims)?;
        if let Some(noise) = self.noise {
            if !(0.0..1.0).contains(&noise.p) {
                return Err(Error::InvalidConfig(format!(
                    "noise probability must be in [0, 1), got {}",
                    noise.p
                )));
            }
        }
        Ok(())
    }
}

/// Rasterizes the shape, then flips each voxel with probability `p`.
pub fn make_phantom(spec: &PhantomSpec) -> Result<LabelVolume> {
    spec.validate()?;
    let [nx, ny, nz] = spec.dims;
    let mut volume = LabelVolume::zeros(spec.dims, spec.spacing_mm)?;
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                if spec.shape.contains([x, y, z]) {
                    volume.set(x, y, z, 1);
                }
            }
        }
    }
    if let Some(noise) = spec.noise.filter(|n| n.p > 0.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
        let mut data = volume.into_data();
        for v in data.iter_mut() {
            if rng.gen_bool(noise.p) {
                *v ^= 1;
            }
        }
        volume = LabelVolume::new(spec.dims, spec.spacing_mm, data)?;
    }
    Ok(volume)
}
