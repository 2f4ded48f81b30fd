//! Label volumes and their on-disk format.
//!
//! A volume is stored as two files: a small JSON header and a raw payload of
//! `Nx * Ny * Nz` unsigned bytes, x fastest, then y, then z. The header names
//! the payload by a path relative to the header's directory.
//!
//! ```json
//! {
//!   "dims": [240, 240, 155],
//!   "spacing_mm": [1.0, 1.0, 1.0],
//!   "dtype": "u8",
//!   "order": "x-fastest",
//!   "payload": "case001.raw"
//! }
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Dims;

pub const DTYPE_U8: &str = "u8";
pub const ORDER_X_FASTEST: &str = "x-fastest";

/// Label values treated as tumor in BraTS-style segmentations.
pub const BRATS_TUMOR_LABELS: [u8; 3] = [1, 2, 4];

/// Dense 3D grid of 8-bit labels with physical voxel spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVolume {
    dims: Dims,
    spacing_mm: [f64; 3],
    data: Vec<u8>,
}

impl LabelVolume {
    pub fn new(dims: Dims, spacing_mm: [f64; 3], data: Vec<u8>) -> Result<Self> {
        validate_geometry(dims, spacing_mm)?;
        let expected = voxel_count(dims)?;
        if data.len() != expected {
            return Err(Error::InvalidVolume(format!(
                "data holds {} voxels, dims {:?} require {}",
                data.len(),
                dims,
                expected
            )));
        }
        Ok(Self {
            dims,
            spacing_mm,
            data,
        })
    }

    pub fn zeros(dims: Dims, spacing_mm: [f64; 3]) -> Result<Self> {
        validate_geometry(dims, spacing_mm)?;
        let n = voxel_count(dims)?;
        Ok(Self {
            dims,
            spacing_mm,
            data: vec![0; n],
        })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing_mm(&self) -> [f64; 3] {
        self.spacing_mm
    }

    pub fn voxel_volume_mm3(&self) -> f64 {
        self.spacing_mm[0] * self.spacing_mm[1] * self.spacing_mm[2]
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Linear index of `(x, y, z)` in x-fastest order.
    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> u8 {
        self.data[self.index(x, y, z)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, value: u8) {
        let i = self.index(x, y, z);
        self.data[i] = value;
    }

    /// Contiguous run of `len` voxels starting at `(x, y, z)` along x.
    #[inline]
    pub fn row(&self, x: usize, y: usize, z: usize, len: usize) -> &[u8] {
        let start = self.index(x, y, z);
        &self.data[start..start + len]
    }

    pub fn is_binary(&self) -> bool {
        self.data.iter().all(|&v| v <= 1)
    }

    /// Maps every voxel whose label is in `tumor_labels` to 1 and the rest to 0.
    pub fn binarize(&self, tumor_labels: &[u8]) -> LabelVolume {
        let mut lut = [0u8; 256];
        for &label in tumor_labels {
            lut[label as usize] = 1;
        }
        LabelVolume {
            dims: self.dims,
            spacing_mm: self.spacing_mm,
            data: self.data.iter().map(|&v| lut[v as usize]).collect(),
        }
    }

    /// Number of voxels labelled 1.
    pub fn total_tumor(&self) -> u64 {
        self.data.iter().filter(|&&v| v == 1).count() as u64
    }

    /// Mean 0-based voxel coordinate of all voxels labelled 1.
    pub fn centroid(&self) -> Result<[f64; 3]> {
        let [nx, ny, _] = self.dims;
        let mut acc = [0u64; 3];
        let mut count = 0u64;
        for (i, &v) in self.data.iter().enumerate() {
            if v == 1 {
                acc[0] += (i % nx) as u64;
                acc[1] += ((i / nx) % ny) as u64;
                acc[2] += (i / (nx * ny)) as u64;
                count += 1;
            }
        }
        if count == 0 {
            return Err(Error::EmptyMask);
        }
        let n = count as f64;
        Ok([acc[0] as f64 / n, acc[1] as f64 / n, acc[2] as f64 / n])
    }
}

fn validate_geometry(dims: Dims, spacing_mm: [f64; 3]) -> Result<()> {
    if dims.contains(&0) {
        return Err(Error::InvalidVolume(format!(
            "dims must be positive, got {dims:?}"
        )));
    }
    if spacing_mm.iter().any(|s| !s.is_finite() || *s <= 0.0) {
        return Err(Error::InvalidVolume(format!(
            "spacing must be positive, got {spacing_mm:?}"
        )));
    }
    Ok(())
}

fn voxel_count(dims: Dims) -> Result<usize> {
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::InvalidVolume(format!("dims {dims:?} overflow")))
}

/// Text header describing a raw label payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolumeHeader {
    pub dims: Dims,
    pub spacing_mm: [f64; 3],
    pub dtype: String,
    pub order: String,
    pub payload: String,
}

impl VolumeHeader {
    fn check(&self, path: &Path) -> Result<()> {
        let malformed = |reason: String| Error::MalformedHeader {
            path: path.to_path_buf(),
            reason,
        };
        if self.dtype != DTYPE_U8 {
            return Err(malformed(format!(
                "dtype must be \"{DTYPE_U8}\", got \"{}\"",
                self.dtype
            )));
        }
        if self.order != ORDER_X_FASTEST {
            return Err(malformed(format!(
                "order must be \"{ORDER_X_FASTEST}\", got \"{}\"",
                self.order
            )));
        }
        validate_geometry(self.dims, self.spacing_mm).map_err(|e| malformed(e.to_string()))
    }
}

pub fn read_header(header_path: impl AsRef<Path>) -> Result<VolumeHeader> {
    let path = header_path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let header: VolumeHeader =
        serde_json::from_str(&text).map_err(|e| Error::MalformedHeader {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
    header.check(path)?;
    Ok(header)
}

fn payload_path(header_path: &Path, payload: &str) -> PathBuf {
    match header_path.parent() {
        Some(dir) => dir.join(payload),
        None => PathBuf::from(payload),
    }
}

/// Reads a header and its raw payload.
pub fn load_volume(header_path: impl AsRef<Path>) -> Result<LabelVolume> {
    let header_path = header_path.as_ref();
    let header = read_header(header_path)?;
    let payload = payload_path(header_path, &header.payload);
    let data = fs::read(&payload).map_err(|e| Error::io(&payload, e))?;
    let expected = voxel_count(header.dims).map_err(|e| Error::MalformedHeader {
        path: header_path.to_path_buf(),
        reason: e.to_string(),
    })?;
    if data.len() != expected {
        return Err(Error::PayloadSize {
            path: payload,
            expected,
            actual: data.len(),
        });
    }
    LabelVolume::new(header.dims, header.spacing_mm, data)
}

/// Writes `header_path` plus a sibling payload named after the header stem
/// with a `.raw` extension.
pub fn save_volume(volume: &LabelVolume, header_path: impl AsRef<Path>) -> Result<()> {
    let header_path = header_path.as_ref();
    let stem = header_path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| {
            Error::InvalidConfig(format!("bad header path {}", header_path.display()))
        })?;
    let payload_name = format!("{stem}.raw");
    let header = VolumeHeader {
        dims: volume.dims,
        spacing_mm: volume.spacing_mm,
        dtype: DTYPE_U8.to_string(),
        order: ORDER_X_FASTEST.to_string(),
        payload: payload_name.clone(),
    };
    let payload = payload_path(header_path, &payload_name);
    fs::write(&payload, &volume.data).map_err(|e| Error::io(&payload, e))?;
    let mut text = serde_json::to_string_pretty(&header).expect("header serializes");
    text.push('\n');
    fs::write(header_path, text).map_err(|e| Error::io(header_path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_volume(n: usize, seed: u64) -> LabelVolume {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n * n * n).map(|_| rng.gen_range(0..2u8)).collect();
        LabelVolume::new([n, n, n], [1.0, 1.0, 1.0], data).unwrap()
    }

    fn write_raw(dir: &Path, dims: Dims, payload: &[u8]) -> PathBuf {
        let header = VolumeHeader {
            dims,
            spacing_mm: [1.0, 1.0, 1.0],
            dtype: "u8".into(),
            order: "x-fastest".into(),
            payload: "p.raw".into(),
        };
        let path = dir.join("h.json");
        fs::write(&path, serde_json::to_string(&header).unwrap()).unwrap();
        fs::write(dir.join("p.raw"), payload).unwrap();
        path
    }

    #[test]
    fn load_reads_payload_verbatim() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_raw(dir.path(), [2, 2, 2], &[1; 8]);
        let v = load_volume(&path).unwrap();
        assert_eq!(v.dims(), [2, 2, 2]);
        assert_eq!(v.data(), &[1u8; 8]);
    }

    #[test]
    fn short_payload_is_size_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_raw(dir.path(), [2, 2, 2], &[1; 7]);
        match load_volume(&path) {
            Err(Error::PayloadSize {
                expected, actual, ..
            }) => {
                assert_eq!((expected, actual), (8, 7));
            }
            other => panic!("expected size mismatch, got {other:?}"),
        }
    }

    #[test]
    fn missing_header_and_missing_payload_are_not_found() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_volume(dir.path().join("nope.json")),
            Err(Error::NotFound(_))
        ));
        let path = write_raw(dir.path(), [1, 1, 1], &[0]);
        fs::remove_file(dir.path().join("p.raw")).unwrap();
        match load_volume(&path) {
            Err(Error::NotFound(p)) => assert!(p.ends_with("p.raw")),
            other => panic!("expected not found, got {other:?}"),
        }
    }

    #[test]
    fn malformed_headers_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        for text in [
            "{not json",
            r#"{"dims":[2,2,2],"spacing_mm":[1,1,1],"dtype":"u16","order":"x-fastest","payload":"p.raw"}"#,
            r#"{"dims":[2,2,2],"spacing_mm":[1,1,1],"dtype":"u8","order":"z-fastest","payload":"p.raw"}"#,
            r#"{"dims":[0,2,2],"spacing_mm":[1,1,1],"dtype":"u8","order":"x-fastest","payload":"p.raw"}"#,
            r#"{"dims":[2,2,2],"spacing_mm":[1,-1,1],"dtype":"u8","order":"x-fastest","payload":"p.raw"}"#,
            r#"{"dims":[2,2,2],"spacing_mm":[1,1,1],"dtype":"u8","order":"x-fastest"}"#,
        ] {
            fs::write(&path, text).unwrap();
            assert!(
                matches!(load_volume(&path), Err(Error::MalformedHeader { .. })),
                "{text}"
            );
        }
    }

    #[test]
    fn round_trip_random_16() {
        let dir = tempfile::tempdir().unwrap();
        let v = random_volume(16, 7);
        let path = dir.path().join("v.json");
        save_volume(&v, &path).unwrap();
        let back = load_volume(&path).unwrap();
        assert_eq!(back.data(), v.data());
        assert_eq!(back, v);
    }

    #[test]
    fn payload_sizes() {
        let dir = tempfile::tempdir().unwrap();
        let one = LabelVolume::new([1, 1, 1], [1.0, 1.0, 1.0], vec![1]).unwrap();
        save_volume(&one, dir.path().join("one.json")).unwrap();
        assert_eq!(fs::read(dir.path().join("one.raw")).unwrap(), vec![1]);

        let v = random_volume(32, 3);
        save_volume(&v, dir.path().join("big.json")).unwrap();
        let len = fs::metadata(dir.path().join("big.raw")).unwrap().len();
        assert_eq!(len, 32 * 32 * 32);
    }

    #[test]
    fn binarize_brats_labels() {
        let v = LabelVolume::new([4, 1, 1], [1.0; 3], vec![0, 1, 2, 4]).unwrap();
        assert_eq!(v.binarize(&BRATS_TUMOR_LABELS).data(), &[0, 1, 1, 1]);
        assert_eq!(v.binarize(&[]).data(), &[0, 0, 0, 0]);
        let zeros = LabelVolume::zeros([3, 3, 3], [1.0; 3]).unwrap();
        assert_eq!(zeros.binarize(&BRATS_TUMOR_LABELS), zeros);
    }

    #[test]
    fn binarize_unit_label_is_idempotent() {
        let v = random_volume(8, 11);
        let once = v.binarize(&[1]);
        assert_eq!(once.binarize(&[1]), once);
        assert_eq!(once, v);
    }

    #[test]
    fn centroid_cases() {
        let mut v = LabelVolume::zeros([8, 8, 8], [1.0; 3]).unwrap();
        assert!(matches!(v.centroid(), Err(Error::EmptyMask)));
        v.set(3, 4, 5, 1);
        assert_eq!(v.centroid().unwrap(), [3.0, 4.0, 5.0]);

        let mut w = LabelVolume::zeros([3, 1, 1], [1.0; 3]).unwrap();
        w.set(0, 0, 0, 1);
        w.set(2, 0, 0, 1);
        assert_eq!(w.centroid().unwrap(), [1.0, 0.0, 0.0]);
    }

    #[test]
    fn centroid_of_point_symmetric_mask() {
        let mut v = LabelVolume::zeros([9, 7, 5], [1.0; 3]).unwrap();
        for &(x, y, z) in &[(1, 1, 1), (7, 5, 3), (4, 3, 2), (2, 5, 0), (6, 1, 4)] {
            v.set(x, y, z, 1);
        }
        assert_eq!(v.centroid().unwrap(), [4.0, 3.0, 2.0]);
    }

    #[test]
    fn total_tumor_matches_loop() {
        let ones = LabelVolume::new([4, 4, 4], [1.0; 3], vec![1; 64]).unwrap();
        assert_eq!(ones.total_tumor(), 64);
        assert_eq!(LabelVolume::zeros([4, 4, 4], [1.0; 3]).unwrap().total_tumor(), 0);

        let v = random_volume(16, 5);
        let mut naive = 0;
        for z in 0..16 {
            for y in 0..16 {
                for x in 0..16 {
                    naive += v.get(x, y, z) as u64;
                }
            }
        }
        assert_eq!(v.total_tumor(), naive);
    }

    #[test]
    fn constructor_rejects_bad_geometry() {
        assert!(LabelVolume::new([2, 2, 2], [1.0; 3], vec![0; 7]).is_err());
        assert!(LabelVolume::zeros([2, 0, 2], [1.0; 3]).is_err());
        assert!(LabelVolume::zeros([2, 2, 2], [1.0, 0.0, 1.0]).is_err());
    }
}
