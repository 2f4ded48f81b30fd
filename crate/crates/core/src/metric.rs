//! Region costs. Both metrics are costs to minimize.
//!
//! * Conventional: `(f - f_target)^2 + lambda1 * (Rx*Ry*Rz - lx*ly*lz)^2`,
//!   the negative log of a product of two Gaussians with the scale dropped.
//! * Proposed: `leaky(f_target - f, beta) + lambda2 * sum_i |R_i - l_i|`.
//!
//! `f` is the tumor fraction of the region. Sizes and targets are in mm.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Conventional,
    Proposed,
}

impl std::str::FromStr for MetricKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "conventional" => Ok(MetricKind::Conventional),
            "proposed" => Ok(MetricKind::Proposed),
            other => Err(format!("unknown metric \"{other}\"")),
        }
    }
}

/// All user-facing metric parameters, shared by both metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricParams {
    pub f_target: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub beta: f64,
    /// Only used by [`conventional_score`].
    pub sigma_r: f64,
    /// Only used by [`conventional_score`].
    pub sigma_f: f64,
    pub target_mm: [f64; 3],
}

impl Default for MetricParams {
    fn default() -> Self {
        Self {
            f_target: 0.9,
            lambda1: 1e-6,
            lambda2: 0.01,
            beta: 0.1,
            // sigma_f^2 / sigma_r^2 = lambda1
            sigma_r: 1000.0,
            sigma_f: 1.0,
            target_mm: [20.0; 3],
        }
    }
}

impl MetricParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(0.0..=1.0).contains(&self.f_target) {
            return bad(format!("f_target must be in [0, 1], got {}", self.f_target));
        }
        if !(self.lambda1 >= 0.0 && self.lambda1.is_finite()) {
            return bad(format!("lambda1 must be >= 0, got {}", self.lambda1));
        }
        if !(self.lambda2 >= 0.0 && self.lambda2.is_finite()) {
            return bad(format!("lambda2 must be >= 0, got {}", self.lambda2));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad(format!("beta must be > 0, got {}", self.beta));
        }
        if !(self.sigma_r > 0.0 && self.sigma_f > 0.0) {
            return bad("sigma_r and sigma_f must be > 0".to_string());
        }
        if self.target_mm.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return bad(format!("target size must be positive, got {:?}", self.target_mm));
        }
        Ok(())
    }

    pub fn conventional(&self) -> ConventionalParams {
        ConventionalParams {
            f_target: self.f_target,
            lambda1: self.lambda1,
            target_mm: self.target_mm,
            sigma_r: self.sigma_r,
            sigma_f: self.sigma_f,
        }
    }

    pub fn proposed(&self) -> ProposedParams {
        ProposedParams {
            f_target: self.f_target,
            lambda2: self.lambda2,
            beta: self.beta,
            target_mm: self.target_mm,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConventionalParams {
    pub f_target: f64,
    pub lambda1: f64,
    pub target_mm: [f64; 3],
    pub sigma_r: f64,
    pub sigma_f: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProposedParams {
    pub f_target: f64,
    pub lambda2: f64,
    pub beta: f64,
    pub target_mm: [f64; 3],
}

/// Leaky rectifier: `s` for `s >= 0`, `beta * s` otherwise.
#[inline]
pub fn leaky(s: f64, beta: f64) -> f64 {
    if s >= 0.0 {
        s
    } else {
        beta * s
    }
}

#[inline]
fn product(v: [f64; 3]) -> f64 {
    v[0] * v[1] * v[2]
}

/// Fraction of the region's physical volume occupied by tumor voxels.
#[inline]
pub fn tumor_fraction(tumor_sum: u64, size_mm: [f64; 3], voxel_volume_mm3: f64) -> f64 {
    (tumor_sum as f64 * voxel_volume_mm3 / product(size_mm)).min(1.0)
}

pub fn conventional_cost(
    tumor_sum: u64,
    size_mm: [f64; 3],
    voxel_volume_mm3: f64,
    p: &ConventionalParams,
) -> f64 {
    let df = tumor_fraction(tumor_sum, size_mm, voxel_volume_mm3) - p.f_target;
    let dv = product(size_mm) - product(p.target_mm);
    df * df + p.lambda1 * dv * dv
}

/// Product of the two Gaussian factors; higher is better.
pub fn conventional_score(
    tumor_sum: u64,
    size_mm: [f64; 3],
    voxel_volume_mm3: f64,
    p: &ConventionalParams,
) -> f64 {
    let dv = (product(size_mm) - product(p.target_mm)) / p.sigma_r;
    let df = (tumor_fraction(tumor_sum, size_mm, voxel_volume_mm3) - p.f_target) / p.sigma_f;
    (-0.5 * dv * dv).exp() * (-0.5 * df * df).exp()
}

pub fn proposed_cost(
    tumor_sum: u64,
    size_mm: [f64; 3],
    voxel_volume_mm3: f64,
    p: &ProposedParams,
) -> f64 {
    let f = tumor_fraction(tumor_sum, size_mm, voxel_volume_mm3);
    let shape: f64 = (0..3).map(|a| (size_mm[a] - p.target_mm[a]).abs()).sum();
    leaky(p.f_target - f, p.beta) + p.lambda2 * shape
}

/// A metric bound to its parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Metric {
    Conventional(ConventionalParams),
    Proposed(ProposedParams),
}

impl Metric {
    pub fn new(kind: MetricKind, params: &MetricParams) -> Self {
        match kind {
            MetricKind::Conventional => Metric::Conventional(params.conventional()),
            MetricKind::Proposed => Metric::Proposed(params.proposed()),
        }
    }

    #[inline]
    pub fn cost(&self, tumor_sum: u64, size_mm: [f64; 3], voxel_volume_mm3: f64) -> f64 {
        match self {
            Metric::Conventional(p) => conventional_cost(tumor_sum, size_mm, voxel_volume_mm3, p),
            Metric::Proposed(p) => proposed_cost(tumor_sum, size_mm, voxel_volume_mm3, p),
        }
    }

    pub fn evaluate(&self, tumor_sum: u64, size_mm: [f64; 3], voxel_volume_mm3: f64) -> RegionEval {
        RegionEval {
            tumor_sum,
            volume_mm3: product(size_mm),
            fraction: tumor_fraction(tumor_sum, size_mm, voxel_volume_mm3),
            cost: self.cost(tumor_sum, size_mm, voxel_volume_mm3),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionEval {
    pub tumor_sum: u64,
    pub volume_mm3: f64,
    pub fraction: f64,
    pub cost: f64,
}
