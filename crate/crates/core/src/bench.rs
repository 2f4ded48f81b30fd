//! Wall-clock comparison of the four computation modes.
//!
//! `c*` modes sum region voxels directly, `p*` modes use summed-area tables;
//! `*1D` modes use line searches for the offset, `*3D` modes the exhaustive
//! offset search. Every mode runs the same coordinate descent, so `c` and
//! `p` variants of one offset mode must agree exactly.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::search::{search_region, OffsetMode, RegionParams, SearchConfig, SumMode};
use crate::volume::LabelVolume;

pub const DEFAULT_REPEATS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BenchMode {
    #[serde(rename = "c1D")]
    C1D,
    #[serde(rename = "p1D")]
    P1D,
    #[serde(rename = "c3D")]
    C3D,
    #[serde(rename = "p3D")]
    P3D,
}

impl BenchMode {
    pub const ALL: [BenchMode; 4] = [BenchMode::C1D, BenchMode::P1D, BenchMode::C3D, BenchMode::P3D];

    pub fn offset_mode(self) -> OffsetMode {
        match self {
            BenchMode::C1D | BenchMode::P1D => OffsetMode::Line1d,
            BenchMode::C3D | BenchMode::P3D => OffsetMode::Full3d,
        }
    }

    pub fn sum_mode(self) -> SumMode {
        match self {
            BenchMode::C1D | BenchMode::C3D => SumMode::Direct,
            BenchMode::P1D | BenchMode::P3D => SumMode::Table,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BenchMode::C1D => "c1D",
            BenchMode::P1D => "p1D",
            BenchMode::C3D => "c3D",
            BenchMode::P3D => "p3D",
        }
    }
}

impl fmt::Display for BenchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BenchMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        BenchMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown bench mode \"{s}\" (expected c1D, p1D, c3D or p3D)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub mode: BenchMode,
    pub sat_build_ms: f64,
    pub search_ms: f64,
    pub total_ms: f64,
    pub evaluations: u64,
    pub volume_mm3: f64,
    pub fraction: f64,
    pub cost: f64,
    pub best: RegionParams,
}

impl BenchRow {
    /// Compact, timing-free summary of the optimum; equal across modes that
    /// found the same region.
    pub fn result_key(&self) -> String {
        let [vx, vy, vz] = self.best.offset;
        let [rx, ry, rz] = self.best.size;
        let [a, b, c] = self.best.angles.0;
        format!(
            "V={vx}:{vy}:{vz} R={rx}:{ry}:{rz} T={a}:{b}:{c} cost={:016x}",
            self.cost.to_bits()
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub dims: [usize; 3],
    pub spacing_mm: [f64; 3],
    pub threads: usize,
    pub repeats: usize,
    pub rows: Vec<BenchRow>,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Runs `search_region` once per repeat for every mode, keeping the median of
/// each timing stage.
pub fn run_bench(
    volume: &LabelVolume,
    cfg: &SearchConfig,
    modes: &[BenchMode],
    repeats: usize,
) -> Result<BenchReport> {
    if repeats == 0 {
        return Err(Error::InvalidConfig("bench repeats must be >= 1".into()));
    }
    let mut rows = Vec::with_capacity(modes.len());
    for &mode in modes {
        let mode_cfg = SearchConfig {
            offset_mode: mode.offset_mode(),
            sum_mode: mode.sum_mode(),
            ..cfg.clone()
        };
        let mut sat = Vec::with_capacity(repeats);
        let mut search = Vec::with_capacity(repeats);
        let mut total = Vec::with_capacity(repeats);
        let mut last = None;
        for _ in 0..repeats {
            let r = search_region(volume, &mode_cfg)?;
            sat.push(r.timings.sat_build_ms);
            search.push(r.timings.search_ms);
            total.push(r.timings.total_ms);
            last = Some(r);
        }
        let r = last.expect("repeats >= 1");
        rows.push(BenchRow {
            mode,
            sat_build_ms: median(&mut sat),
            search_ms: median(&mut search),
            total_ms: median(&mut total),
            evaluations: r.evaluations,
            volume_mm3: r.volume_mm3,
            fraction: r.fraction,
            cost: r.cost,
            best: r.best,
        });
    }
    Ok(BenchReport {
        dims: volume.dims(),
        spacing_mm: volume.spacing_mm(),
        threads: if cfg.threads > 0 {
            cfg.threads
        } else {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        },
        repeats,
        rows,
    })
}
