//! Offset optimizers for a fixed region size.
//!
//! Both take the cost as a function of the tumor sum alone, since the size is
//! fixed for the duration of one offset search.

use crate::error::{Error, Result};
use crate::integral::RegionSum;

/// Best offset found for one size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OffsetOptimum {
    pub offset: [usize; 3],
    pub tumor_sum: u64,
    pub cost: f64,
    /// Number of region sums evaluated.
    pub evaluations: u64,
}

fn placements(dims: [usize; 3], size: [usize; 3]) -> Result<[usize; 3]> {
    if (0..3).any(|a| size[a] == 0 || size[a] > dims[a]) {
        return Err(Error::RegionOutOfBounds {
            offset: [0; 3],
            size,
            dims,
        });
    }
    Ok([0, 1, 2].map(|a| dims[a] - size[a] + 1))
}

/// Evaluates every valid offset. Ties go to the lexicographically smallest
/// `(Vz, Vy, Vx)`, which is the first one visited.
pub fn optimize_offset_full3d<S, F>(sums: &S, size: [usize; 3], cost: F) -> Result<OffsetOptimum>
where
    S: RegionSum + ?Sized,
    F: Fn(u64) -> f64,
{
    let [px, py, pz] = placements(sums.dims(), size)?;
    let mut best = OffsetOptimum {
        offset: [0; 3],
        tumor_sum: 0,
        cost: f64::INFINITY,
        evaluations: 0,
    };
    for z in 0..pz {
        for y in 0..py {
            for x in 0..px {
                let s = sums.sum_box([x, y, z], size);
                let c = cost(s);
                if c < best.cost {
                    best.offset = [x, y, z];
                    best.tumor_sum = s;
                    best.cost = c;
                }
            }
        }
    }
    best.evaluations = (px * py * pz) as u64;
    Ok(best)
}

/// One pass of exhaustive line searches along x, then y, then z, starting
/// from `init` (clamped into the valid range). Each line keeps the smallest
/// coordinate among equal costs.
pub fn optimize_offset_line1d<S, F>(
    sums: &S,
    size: [usize; 3],
    cost: F,
    init: [usize; 3],
) -> Result<OffsetOptimum>
where
    S: RegionSum + ?Sized,
    F: Fn(u64) -> f64,
{
    let count = placements(sums.dims(), size)?;
    let mut offset = [0, 1, 2].map(|a| init[a].min(count[a] - 1));
    let mut tumor_sum = 0;
    let mut best_cost = f64::INFINITY;
    let mut evaluations = 0u64;
    for axis in 0..3 {
        let mut line_best = (f64::INFINITY, 0usize, 0u64);
        for i in 0..count[axis] {
            let mut at = offset;
            at[axis] = i;
            let s = sums.sum_box(at, size);
            let c = cost(s);
            if c < line_best.0 {
                line_best = (c, i, s);
            }
        }
        evaluations += count[axis] as u64;
        offset[axis] = line_best.1;
        best_cost = line_best.0;
        tumor_sum = line_best.2;
    }
    Ok(OffsetOptimum {
        offset,
        tumor_sum,
        cost: best_cost,
        evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integral::{region_sum_bruteforce, SummedAreaTable3D};
    use crate::metric::{proposed_cost, MetricParams};
    use crate::phantom::{make_phantom, PhantomSpec, Shape};
    use crate::volume::LabelVolume;

    fn blocks(n: usize, corners: &[[usize; 3]], side: usize) -> LabelVolume {
        let shapes = corners
            .iter()
            .map(|&corner| Shape::Box {
                corner,
                size: [side; 3],
            })
            .collect();
        make_phantom(&PhantomSpec::new([n; 3], Shape::Union(shapes))).unwrap()
    }

    fn proposed_for(size: [usize; 3]) -> impl Fn(u64) -> f64 {
        let p = MetricParams {
            target_mm: size.map(|s| s as f64),
            ..MetricParams::default()
        }
        .proposed();
        move |s| proposed_cost(s, size.map(|v| v as f64), 1.0, &p)
    }

    #[test]
    fn full3d_finds_single_block() {
        let v = blocks(8, &[[3, 3, 3]], 2);
        let t = SummedAreaTable3D::build(&v).unwrap();
        let best = optimize_offset_full3d(&t, [2; 3], proposed_for([2; 3])).unwrap();
        assert_eq!(best.offset, [3, 3, 3]);
        assert_eq!(best.tumor_sum, 8);
        assert_eq!(best.evaluations, 7 * 7 * 7);

        // Independent enumeration with direct sums.
        let cost = proposed_for([2; 3]);
        let mut oracle = (f64::INFINITY, [0; 3]);
        for z in 0..7 {
            for y in 0..7 {
                for x in 0..7 {
                    let c = cost(region_sum_bruteforce(&v, [x, y, z], [2; 3]).unwrap());
                    if c < oracle.0 {
                        oracle = (c, [x, y, z]);
                    }
                }
            }
        }
        assert_eq!((best.cost, best.offset), oracle);
    }

    #[test]
    fn uniform_volumes_tie_break_to_origin() {
        let ones = LabelVolume::new([6; 3], [1.0; 3], vec![1; 216]).unwrap();
        let zeros = LabelVolume::zeros([6; 3], [1.0; 3]).unwrap();
        for v in [ones, zeros] {
            let t = SummedAreaTable3D::build(&v).unwrap();
            for size in [[1, 1, 1], [3, 2, 4], [6, 6, 6]] {
                let best = optimize_offset_full3d(&t, size, proposed_for(size)).unwrap();
                assert_eq!(best.offset, [0, 0, 0]);
            }
        }
    }

    #[test]
    fn oversized_region_is_an_error() {
        let v = LabelVolume::zeros([4, 4, 4], [1.0; 3]).unwrap();
        let t = SummedAreaTable3D::build(&v).unwrap();
        assert!(optimize_offset_full3d(&t, [5, 1, 1], |_| 0.0).is_err());
        assert!(optimize_offset_line1d(&t, [1, 1, 0], |_| 0.0, [0; 3]).is_err());
    }

    #[test]
    fn line1d_stays_at_optimal_corner() {
        let v = blocks(8, &[[3, 3, 3]], 2);
        let t = SummedAreaTable3D::build(&v).unwrap();
        let best = optimize_offset_line1d(&t, [2; 3], proposed_for([2; 3]), [3, 3, 3]).unwrap();
        assert_eq!(best.offset, [3, 3, 3]);
        assert_eq!(best.evaluations, 7 * 3);
    }

    #[test]
    fn line1d_reaches_block_along_x() {
        let v = blocks(16, &[[5, 5, 5]], 2);
        let t = SummedAreaTable3D::build(&v).unwrap();
        let best = optimize_offset_line1d(&t, [2; 3], proposed_for([2; 3]), [0, 5, 5]).unwrap();
        assert_eq!(best.offset, [5, 5, 5]);
        assert_eq!(best.tumor_sum, 8);
    }

    #[test]
    fn line1d_clamps_initial_offset() {
        let v = blocks(8, &[[6, 6, 6]], 2);
        let t = SummedAreaTable3D::build(&v).unwrap();
        let best = optimize_offset_line1d(&t, [2; 3], proposed_for([2; 3]), [99, 99, 99]).unwrap();
        assert_eq!(best.offset, [6, 6, 6]);
    }

    #[test]
    fn line1d_misses_what_full3d_finds() {
        let v = blocks(16, &[[2, 2, 2], [10, 10, 10]], 2);
        let t = SummedAreaTable3D::build(&v).unwrap();
        let cost = proposed_for([2; 3]);
        let line = optimize_offset_line1d(&t, [2; 3], &cost, [6, 6, 6]).unwrap();
        let full = optimize_offset_full3d(&t, [2; 3], &cost).unwrap();
        assert_eq!(line.tumor_sum, 0);
        assert_eq!(full.tumor_sum, 8);
        assert!(full.cost < line.cost);
        assert_eq!(full.offset, [2, 2, 2]);
    }
}
