//! 3D summed-area tables.
//!
//! The table has one extra zero plane along each axis, so entry `(a, b, c)`
//! holds the sum of all voxels with `x < a`, `y < b` and `z < c`. Boxes are
//! half-open: offset `V` and size `R` cover voxels `V <= p < V + R`. With that
//! convention the sum over a box is the usual eight-corner inclusion-exclusion
//! with corners `A = V` and `B = V + R`, and no `-1` adjustments are needed.

use crate::error::{Error, Result};
use crate::volume::LabelVolume;
use crate::Dims;

/// Anything that can report the label sum of an in-bounds box.
pub trait RegionSum: Sync {
    fn dims(&self) -> Dims;

    /// Sum over `[offset, offset + size)`. The box must lie inside `dims()`;
    /// implementations may panic otherwise.
    fn sum_box(&self, offset: [usize; 3], size: [usize; 3]) -> u64;
}

pub(crate) fn check_region(dims: Dims, offset: [usize; 3], size: [usize; 3]) -> Result<()> {
    let fits = (0..3).all(|a| size[a] > 0 && offset[a] + size[a] <= dims[a]);
    if fits {
        Ok(())
    } else {
        Err(Error::RegionOutOfBounds { offset, size, dims })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SummedAreaTable3D {
    dims: Dims,
    stride_y: usize,
    stride_z: usize,
    table: Vec<u64>,
}

impl SummedAreaTable3D {
    /// Builds the table in one pass: each plane is the previous plane plus the
    /// 2D running sum of the current slice.
    pub fn build(volume: &LabelVolume) -> Result<Self> {
        let dims = volume.dims();
        let [nx, ny, nz] = dims;
        let len = table_len(dims)?;
        let stride_y = nx + 1;
        let stride_z = (nx + 1) * (ny + 1);
        let mut table = vec![0u64; len];
        let data = volume.data();

        for z in 1..=nz {
            for y in 1..=ny {
                let src = &data[nx * ((y - 1) + ny * (z - 1))..][..nx];
                let here = z * stride_z + y * stride_y;
                let up = here - stride_y;
                let back = here - stride_z;
                let back_up = back - stride_y;
                let mut row = 0u64;
                for x in 1..=nx {
                    row += src[x - 1] as u64;
                    table[here + x] = row + table[up + x] + table[back + x] - table[back_up + x];
                }
            }
        }

        Ok(Self {
            dims,
            stride_y,
            stride_z,
            table,
        })
    }

    /// Wraps a precomputed table laid out as `(Nx+1)(Ny+1)(Nz+1)` entries,
    /// x fastest. Only the length is checked.
    pub fn from_raw(dims: Dims, table: Vec<u64>) -> Result<Self> {
        let len = table_len(dims)?;
        if table.len() != len {
            return Err(Error::InvalidVolume(format!(
                "table holds {} entries, dims {:?} require {}",
                table.len(),
                dims,
                len
            )));
        }
        Ok(Self {
            dims,
            stride_y: dims[0] + 1,
            stride_z: (dims[0] + 1) * (dims[1] + 1),
            table,
        })
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.table
    }

    pub fn into_raw(self) -> Vec<u64> {
        self.table
    }

    /// Entry `(a, b, c)` with `0 <= a <= Nx` etc.
    #[inline]
    pub fn at(&self, a: usize, b: usize, c: usize) -> u64 {
        self.table[a + b * self.stride_y + c * self.stride_z]
    }

    pub fn total(&self) -> u64 {
        let [nx, ny, nz] = self.dims;
        self.at(nx, ny, nz)
    }

    /// Checked box sum.
    pub fn region_sum(&self, offset: [usize; 3], size: [usize; 3]) -> Result<u64> {
        check_region(self.dims, offset, size)?;
        Ok(self.sum_box(offset, size))
    }
}

impl RegionSum for SummedAreaTable3D {
    fn dims(&self) -> Dims {
        self.dims
    }

    #[inline]
    fn sum_box(&self, offset: [usize; 3], size: [usize; 3]) -> u64 {
        let (ax, ay, az) = (offset[0], offset[1] * self.stride_y, offset[2] * self.stride_z);
        let bx = ax + size[0];
        let by = ay + size[1] * self.stride_y;
        let bz = az + size[2] * self.stride_z;
        let t = &self.table;
        // Wrapping keeps intermediate negatives harmless; the final value is
        // a non-negative count.
        t[bx + by + bz]
            .wrapping_sub(t[ax + by + bz])
            .wrapping_sub(t[bx + ay + bz])
            .wrapping_sub(t[bx + by + az])
            .wrapping_add(t[ax + ay + bz])
            .wrapping_add(t[bx + ay + az])
            .wrapping_add(t[ax + by + az])
            .wrapping_sub(t[ax + ay + az])
    }
}

fn table_len(dims: Dims) -> Result<usize> {
    let len = dims
        .iter()
        .try_fold(1usize, |acc, &d| d.checked_add(1).and_then(|d| acc.checked_mul(d)));
    match len {
        Some(n) if n <= isize::MAX as usize / std::mem::size_of::<u64>() => Ok(n),
        _ => Err(Error::TableTooLarge(dims)),
    }
}

pub fn build_sat(volume: &LabelVolume) -> Result<SummedAreaTable3D> {
    SummedAreaTable3D::build(volume)
}

/// Direct sum over the box, `O(Rx * Ry * Rz)`.
pub fn region_sum_bruteforce(
    volume: &LabelVolume,
    offset: [usize; 3],
    size: [usize; 3],
) -> Result<u64> {
    check_region(volume.dims(), offset, size)?;
    Ok(BruteForceSum(volume).sum_box(offset, size))
}

/// Sum of a row of labels. Up to 257 labels cannot overflow a u16, and u16
/// lanes vectorize twice as wide as u32.
#[inline]
fn row_sum(row: &[u8]) -> u32 {
    if row.len() <= 257 {
        row.iter().fold(0u16, |a, &v| a + v as u16) as u32
    } else {
        row.iter().map(|&v| v as u32).sum()
    }
}

/// Region sums computed straight from the labels, without a table.
#[derive(Debug, Clone, Copy)]
pub struct BruteForceSum<'a>(pub &'a LabelVolume);

impl RegionSum for BruteForceSum<'_> {
    fn dims(&self) -> Dims {
        self.0.dims()
    }

    fn sum_box(&self, offset: [usize; 3], size: [usize; 3]) -> u64 {
        let [nx, ny, _] = self.0.dims();
        let data = self.0.data();
        // A plane of u8 labels fits a u32 accumulator below this many voxels.
        let narrow = size[0] * size[1] <= (u32::MAX / 255) as usize;
        let mut sum = 0u64;
        for z in offset[2]..offset[2] + size[2] {
            let mut start = offset[0] + nx * (offset[1] + ny * z);
            if narrow {
                let mut plane = 0u32;
                for _ in 0..size[1] {
                    plane += row_sum(&data[start..start + size[0]]);
                    start += nx;
                }
                sum += plane as u64;
            } else {
                for _ in 0..size[1] {
                    sum += data[start..start + size[0]].iter().map(|&v| v as u64).sum::<u64>();
                    start += nx;
                }
            }
        }
        sum
    }
}

/// Outcome of comparing table sums against direct sums on random boxes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VerifyReport {
    pub samples: usize,
    pub matches: usize,
}

impl VerifyReport {
    pub fn mismatches(&self) -> usize {
        self.samples - self.matches
    }

    pub fn passed(&self) -> bool {
        self.matches == self.samples
    }
}

/// Draws `samples` random in-bounds boxes and checks `table` against direct
/// sums over `volume`.
pub fn verify_table(
    volume: &LabelVolume,
    table: &SummedAreaTable3D,
    samples: usize,
    seed: u64,
) -> VerifyReport {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let dims = volume.dims();
    let brute = BruteForceSum(volume);
    let mut matches = 0;
    for _ in 0..samples {
        let mut offset = [0; 3];
        let mut size = [0; 3];
        for a in 0..3 {
            size[a] = rng.gen_range(1..=dims[a]);
            offset[a] = rng.gen_range(0..=dims[a] - size[a]);
        }
        if table.sum_box(offset, size) == brute.sum_box(offset, size) {
            matches += 1;
        }
    }
    VerifyReport { samples, matches }
}
