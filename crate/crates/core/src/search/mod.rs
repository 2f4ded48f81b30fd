//! Coordinate-descent search over offset, size and orientation.
//!
//! The nine parameters are split into six focused ones `(Rx, Ry, Rz, t1, t2,
//! t3)` and the offset. Each outer iteration sweeps the focused parameters in
//! that order while holding the other five fixed; every candidate runs a
//! nested offset search. Size sweeps reuse the current table. Angle sweeps
//! rotate the labels and build a fresh table per candidate.
//!
//! Candidates of one sweep are evaluated on a worker pool and reduced in
//! candidate order with a fixed tie-break, so the result does not depend on
//! the thread count. A sweep only moves the state when it strictly lowers the
//! cost, so the cost never increases from one sweep to the next.

mod offset;

use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use offset::{optimize_offset_full3d, optimize_offset_line1d, OffsetOptimum};

use crate::error::{Error, Result};
use crate::integral::{BruteForceSum, RegionSum, SummedAreaTable3D};
use crate::metric::{Metric, MetricKind, MetricParams, RegionEval};
use crate::rotation::{rotate_labels, rotation_matrix, EulerAngles};
use crate::volume::LabelVolume;
use crate::Dims;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OffsetMode {
    Full3d,
    Line1d,
}

impl FromStr for OffsetMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "full3d" => Ok(OffsetMode::Full3d),
            "line1d" => Ok(OffsetMode::Line1d),
            other => Err(format!("unknown offset mode \"{other}\"")),
        }
    }
}

/// How region sums are computed inside the offset search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SumMode {
    /// Summed-area table lookups, `O(1)` per region.
    Table,
    /// Direct summation over the region's voxels.
    Direct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub metric: MetricKind,
    pub params: MetricParams,
    pub size_min_mm: f64,
    pub size_max_mm: f64,
    pub size_step_mm: f64,
    /// Odd number of angle candidates per angle sweep, centered on the
    /// current angle.
    pub angle_candidates: usize,
    pub angle_step_first_deg: f64,
    pub angle_step_rest_deg: f64,
    pub iterations: usize,
    /// Stop once an iteration brings no improvement and the next one would
    /// use the same angle step.
    pub early_stop: bool,
    pub offset_mode: OffsetMode,
    pub sum_mode: SumMode,
    /// Worker threads; 0 uses the available hardware parallelism.
    pub threads: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            metric: MetricKind::Proposed,
            params: MetricParams::default(),
            size_min_mm: 5.0,
            size_max_mm: 50.0,
            size_step_mm: 1.0,
            angle_candidates: 9,
            angle_step_first_deg: 5.0,
            angle_step_rest_deg: 5.0 / 9.0,
            iterations: 2,
            early_stop: true,
            offset_mode: OffsetMode::Full3d,
            sum_mode: SumMode::Table,
            threads: 0,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.size_min_mm) || !positive(self.size_max_mm) {
            return bad("size bounds must be positive".into());
        }
        if self.size_min_mm > self.size_max_mm {
            return bad(format!(
                "size min {} exceeds max {}",
                self.size_min_mm, self.size_max_mm
            ));
        }
        if !positive(self.size_step_mm) {
            return bad(format!("size step must be > 0, got {}", self.size_step_mm));
        }
        if self.angle_candidates == 0 || self.angle_candidates.is_multiple_of(2) {
            return bad(format!(
                "angle candidate count must be odd and >= 1, got {}",
                self.angle_candidates
            ));
        }
        if !positive(self.angle_step_first_deg) || !positive(self.angle_step_rest_deg) {
            return bad("angle steps must be > 0".into());
        }
        if self.iterations == 0 {
            return bad("iterations must be >= 1".into());
        }
        let target = self.params.target_mm;
        if target
            .iter()
            .any(|&l| l < self.size_min_mm || l > self.size_max_mm)
        {
            return bad(format!(
                "target size {target:?} lies outside [{}, {}] mm",
                self.size_min_mm, self.size_max_mm
            ));
        }
        Ok(())
    }

    pub fn metric(&self) -> Metric {
        Metric::new(self.metric, &self.params)
    }

    fn angle_step(&self, iteration: usize) -> f64 {
        if iteration == 0 {
            self.angle_step_first_deg
        } else {
            self.angle_step_rest_deg
        }
    }

    fn thread_count(&self) -> usize {
        if self.threads > 0 {
            self.threads
        } else {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        }
    }
}

/// A point of the search space. Offset and size are voxels in the rotated
/// frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionParams {
    pub offset: [usize; 3],
    pub size: [usize; 3],
    pub angles: EulerAngles,
}

impl RegionParams {
    pub fn size_mm(&self, spacing_mm: [f64; 3]) -> [f64; 3] {
        [0, 1, 2].map(|a| self.size[a] as f64 * spacing_mm[a])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Parameter {
    #[serde(rename = "Rx")]
    SizeX,
    #[serde(rename = "Ry")]
    SizeY,
    #[serde(rename = "Rz")]
    SizeZ,
    #[serde(rename = "theta1")]
    Angle1,
    #[serde(rename = "theta2")]
    Angle2,
    #[serde(rename = "theta3")]
    Angle3,
}

impl Parameter {
    pub const SWEEP_ORDER: [Parameter; 6] = [
        Parameter::SizeX,
        Parameter::SizeY,
        Parameter::SizeZ,
        Parameter::Angle1,
        Parameter::Angle2,
        Parameter::Angle3,
    ];

    fn axis(self) -> usize {
        match self {
            Parameter::SizeX | Parameter::Angle1 => 0,
            Parameter::SizeY | Parameter::Angle2 => 1,
            Parameter::SizeZ | Parameter::Angle3 => 2,
        }
    }

    fn is_size(self) -> bool {
        matches!(self, Parameter::SizeX | Parameter::SizeY | Parameter::SizeZ)
    }
}

/// Cost before and after one focused-parameter sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub iteration: usize,
    pub parameter: Parameter,
    pub candidates: usize,
    pub cost_before: f64,
    pub cost_after: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Timings {
    /// Label rotation plus table construction.
    pub sat_build_ms: f64,
    pub search_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best: RegionParams,
    pub size_mm: [f64; 3],
    pub world_corners_mm: [[f64; 3]; 8],
    pub tumor_sum: u64,
    pub volume_mm3: f64,
    pub fraction: f64,
    pub cost: f64,
    pub evaluations: u64,
    pub iterations_run: usize,
    pub trace: Vec<SweepRecord>,
    pub timings: Timings,
}

impl SearchResult {
    /// Same result with the timing block zeroed, for comparisons.
    pub fn without_timings(&self) -> SearchResult {
        SearchResult {
            timings: Timings::default(),
            ..self.clone()
        }
    }
}

/// Maps the eight corners of a rotated-frame box to scanner millimetres.
///
/// Corners are taken at voxel edges, so at zero angles they are `V * s` and
/// `(V + R) * s`. The mapping is the one `rotate_labels` samples through:
/// `x = R^-1 (c - m) + m` about the volume center `m`. Corner `i` uses bit 0
/// of `i` for x, bit 1 for y and bit 2 for z.
pub fn region_to_world(region: &RegionParams, dims: Dims, spacing_mm: [f64; 3]) -> [[f64; 3]; 8] {
    let to_source = rotation_matrix(region.angles).transpose();
    let center = [0, 1, 2].map(|a| dims[a] as f64 / 2.0 * spacing_mm[a]);
    let mut corners = [[0.0; 3]; 8];
    for (i, corner) in corners.iter_mut().enumerate() {
        let rel = [0, 1, 2].map(|a| {
            let edge = region.offset[a] + if i >> a & 1 == 1 { region.size[a] } else { 0 };
            edge as f64 * spacing_mm[a] - center[a]
        });
        let p = to_source.apply(rel);
        *corner = [0, 1, 2].map(|a| p[a] + center[a]);
    }
    corners
}

/// Recomputes the metric for `region` from scratch: rotate, sum directly,
/// evaluate.
pub fn evaluate_region(
    volume: &LabelVolume,
    region: &RegionParams,
    metric: &Metric,
) -> Result<RegionEval> {
    let rotated = rotate_labels(volume, region.angles);
    let sum = crate::integral::region_sum_bruteforce(&rotated, region.offset, region.size)?;
    Ok(metric.evaluate(
        sum,
        region.size_mm(volume.spacing_mm()),
        volume.voxel_volume_mm3(),
    ))
}

/// Labels in one orientation, with or without a table.
struct Frame {
    volume: LabelVolume,
    table: Option<SummedAreaTable3D>,
}

impl Frame {
    fn new(volume: LabelVolume, mode: SumMode) -> Result<Frame> {
        let table = match mode {
            SumMode::Table => Some(SummedAreaTable3D::build(&volume)?),
            SumMode::Direct => None,
        };
        Ok(Frame { volume, table })
    }

    fn sum(&self, offset: [usize; 3], size: [usize; 3]) -> u64 {
        match &self.table {
            Some(t) => t.sum_box(offset, size),
            None => BruteForceSum(&self.volume).sum_box(offset, size),
        }
    }

    fn optimize<F: Fn(u64) -> f64>(
        &self,
        mode: OffsetMode,
        size: [usize; 3],
        init: [usize; 3],
        cost: F,
    ) -> Result<OffsetOptimum> {
        match &self.table {
            Some(t) => run_offset(t, mode, size, init, cost),
            None => run_offset(&BruteForceSum(&self.volume), mode, size, init, cost),
        }
    }
}

fn run_offset<S: RegionSum, F: Fn(u64) -> f64>(
    sums: &S,
    mode: OffsetMode,
    size: [usize; 3],
    init: [usize; 3],
    cost: F,
) -> Result<OffsetOptimum> {
    match mode {
        OffsetMode::Full3d => optimize_offset_full3d(sums, size, cost),
        OffsetMode::Line1d => optimize_offset_line1d(sums, size, cost, init),
    }
}

/// Voxel counts reachable from the mm size grid, per axis, ascending and
/// deduplicated.
fn size_candidates(cfg: &SearchConfig, spacing: [f64; 3], dims: Dims) -> Result<[Vec<usize>; 3]> {
    let steps = ((cfg.size_max_mm - cfg.size_min_mm) / cfg.size_step_mm + 1e-9).floor() as usize;
    let grid: Vec<f64> = (0..=steps)
        .map(|k| cfg.size_min_mm + k as f64 * cfg.size_step_mm)
        .collect();
    let mut out: [Vec<usize>; 3] = Default::default();
    for a in 0..3 {
        let mut axis: Vec<usize> = grid
            .iter()
            .map(|mm| ((mm / spacing[a]).round() as usize).max(1))
            .filter(|&n| n <= dims[a])
            .collect();
        axis.dedup();
        if axis.is_empty() {
            return Err(Error::InvalidConfig(format!(
                "no size in [{}, {}] mm fits axis {a} ({} voxels of {} mm)",
                cfg.size_min_mm, cfg.size_max_mm, dims[a], spacing[a]
            )));
        }
        out[a] = axis;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    index: usize,
    size: [usize; 3],
    angles: EulerAngles,
    opt: OffsetOptimum,
}

/// Lower cost wins; then smallest `(Vz, Vy, Vx)`; then smallest candidate
/// index, which orders sizes and angles ascending.
fn beats(a: &Candidate, b: &Candidate) -> bool {
    let key = |c: &Candidate| (c.opt.offset[2], c.opt.offset[1], c.opt.offset[0], c.index);
    match a.opt.cost.total_cmp(&b.opt.cost) {
        std::cmp::Ordering::Less => true,
        std::cmp::Ordering::Greater => false,
        std::cmp::Ordering::Equal => key(a) < key(b),
    }
}

fn reduce(candidates: impl IntoIterator<Item = Candidate>) -> Option<Candidate> {
    candidates.into_iter().fold(None, |best, c| match best {
        Some(b) if !beats(&c, &b) => Some(b),
        _ => Some(c),
    })
}

fn millis(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Runs the full coordinate-descent search on a binary mask.
pub fn search_region(volume: &LabelVolume, cfg: &SearchConfig) -> Result<SearchResult> {
    let started = Instant::now();
    cfg.validate()?;
    if !volume.is_binary() {
        return Err(Error::InvalidVolume(
            "search expects a binary mask; binarize first".into(),
        ));
    }
    let centroid = volume.centroid()?;
    let dims = volume.dims();
    let spacing = volume.spacing_mm();
    let voxel_volume = volume.voxel_volume_mm3();
    let metric = cfg.metric();
    let sizes = size_candidates(cfg, spacing, dims)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.thread_count())
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;

    let mm_of = |size: [usize; 3]| [0, 1, 2].map(|a| size[a] as f64 * spacing[a]);
    let cost_for = |size: [usize; 3]| {
        let size_mm = mm_of(size);
        move |sum: u64| metric.cost(sum, size_mm, voxel_volume)
    };

    let mut prep_ms = 0.0;
    let prep = Instant::now();
    let mut frame = Frame::new(volume.clone(), cfg.sum_mode)?;
    prep_ms += millis(prep);

    let mut size = [sizes[0][0], sizes[1][0], sizes[2][0]];
    let mut offset = [0, 1, 2].map(|a| {
        let corner = (centroid[a] - (size[a] as f64 - 1.0) / 2.0).round().max(0.0) as usize;
        corner.min(dims[a] - size[a])
    });
    let mut angles = EulerAngles::ZERO;
    let mut tumor_sum = frame.sum(offset, size);
    let mut cost = cost_for(size)(tumor_sum);
    let mut evaluations = 1u64;
    let mut trace = Vec::new();
    let mut iterations_run = 0;

    for iteration in 0..cfg.iterations {
        iterations_run += 1;
        let step = cfg.angle_step(iteration);
        let mut improved = false;

        for parameter in Parameter::SWEEP_ORDER {
            let axis = parameter.axis();
            let before = cost;
            let (best, count) = if parameter.is_size() {
                let candidates = &sizes[axis];
                let results: Vec<Result<Candidate>> = pool.install(|| {
                    candidates
                        .par_iter()
                        .enumerate()
                        .map(|(index, &n)| {
                            let mut s = size;
                            s[axis] = n;
                            let opt = frame.optimize(cfg.offset_mode, s, offset, cost_for(s))?;
                            Ok(Candidate {
                                index,
                                size: s,
                                angles,
                                opt,
                            })
                        })
                        .collect()
                });
                let results = results.into_iter().collect::<Result<Vec<_>>>()?;
                evaluations += results.iter().map(|c| c.opt.evaluations).sum::<u64>();
                (reduce(results), candidates.len())
            } else {
                let half = (cfg.angle_candidates / 2) as i64;
                let candidate_angles: Vec<EulerAngles> = (-half..=half)
                    .map(|k| {
                        let mut a = angles;
                        a.0[axis] += k as f64 * step;
                        a
                    })
                    .collect();

                let prep = Instant::now();
                let frames: Vec<Result<Option<Frame>>> = pool.install(|| {
                    candidate_angles
                        .par_iter()
                        .map(|&a| {
                            let rotated = rotate_labels(volume, a);
                            if rotated.total_tumor() == 0 {
                                Ok(None)
                            } else {
                                Frame::new(rotated, cfg.sum_mode).map(Some)
                            }
                        })
                        .collect()
                });
                let mut frames = frames.into_iter().collect::<Result<Vec<_>>>()?;
                prep_ms += millis(prep);

                let results: Vec<Result<Option<Candidate>>> = pool.install(|| {
                    frames
                        .par_iter()
                        .zip(candidate_angles.par_iter())
                        .enumerate()
                        .map(|(index, (f, &a))| {
                            let Some(f) = f else { return Ok(None) };
                            let opt = f.optimize(cfg.offset_mode, size, offset, cost_for(size))?;
                            Ok(Some(Candidate {
                                index,
                                size,
                                angles: a,
                                opt,
                            }))
                        })
                        .collect()
                });
                let results = results.into_iter().collect::<Result<Vec<_>>>()?;
                evaluations += results.iter().flatten().map(|c| c.opt.evaluations).sum::<u64>();
                let best = reduce(results.into_iter().flatten());
                if let Some(b) = best.filter(|b| b.opt.cost < cost) {
                    frame = frames[b.index].take().expect("winning frame exists");
                }
                (best, candidate_angles.len())
            };

            if let Some(b) = best.filter(|b| b.opt.cost < cost) {
                size = b.size;
                angles = b.angles;
                offset = b.opt.offset;
                tumor_sum = b.opt.tumor_sum;
                cost = b.opt.cost;
                improved = true;
            }
            trace.push(SweepRecord {
                iteration,
                parameter,
                candidates: count,
                cost_before: before,
                cost_after: cost,
            });
        }

        let next_step_same = iteration + 1 < cfg.iterations && cfg.angle_step(iteration + 1) == step;
        if cfg.early_stop && !improved && next_step_same {
            break;
        }
    }

    let best = RegionParams {
        offset,
        size,
        angles,
    };
    let check = frame.sum(offset, size);
    debug_assert_eq!(check, tumor_sum);
    let eval = metric.evaluate(check, mm_of(size), voxel_volume);
    debug_assert_eq!(eval.cost.to_bits(), cost.to_bits());

    let total_ms = millis(started);
    Ok(SearchResult {
        best,
        size_mm: mm_of(size),
        world_corners_mm: region_to_world(&best, dims, spacing),
        tumor_sum: eval.tumor_sum,
        volume_mm3: eval.volume_mm3,
        fraction: eval.fraction,
        cost: eval.cost,
        evaluations,
        iterations_run,
        trace,
        timings: Timings {
            sat_build_ms: prep_ms,
            search_ms: (total_ms - prep_ms).max(0.0),
            total_ms,
        },
    })
}
