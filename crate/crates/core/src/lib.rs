//! Volume-of-interest placement over binary tumor masks.
//!
//! A region is a box with a 3D offset, a 3D size and a 3D orientation.
//! Region sums come from 3D summed-area tables built per orientation, so an
//! exhaustive search over offsets stays cheap. The optimizer walks the size
//! and angle parameters one at a time and runs an offset search for every
//! candidate.

pub mod bench;
pub mod error;
pub mod integral;
pub mod metric;
pub mod phantom;
pub mod rotation;
pub mod search;
pub mod volume;

pub use error::{Error, Result};
pub use integral::{region_sum_bruteforce, BruteForceSum, RegionSum, SummedAreaTable3D};
pub use metric::{Metric, MetricKind, MetricParams, RegionEval};
pub use rotation::{rotate_labels, rotation_matrix, EulerAngles, RotationMatrix};
pub use search::{search_region, OffsetMode, RegionParams, SearchConfig, SearchResult, SumMode};
pub use volume::{load_volume, save_volume, LabelVolume};

/// Voxel counts along x, y and z.
pub type Dims = [usize; 3];
