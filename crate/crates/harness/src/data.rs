//! Dataset handling: synthetic Gaussian blobs and the IDX (MNIST-style)
//! container format.

use std::path::Path;

use lars_core::nn::Batch;
use lars_core::rng::Rng;
use lars_core::tensor::Tensor;

use crate::error::{HarnessError, Result};

/// An in-memory labeled dataset: features `[N, d]`, one label per row.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub features: Tensor,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// Gathers the given rows into a batch.
    pub fn batch(&self, indices: &[usize]) -> Result<Batch> {
        let d = self.dim();
        let mut data = Vec::with_capacity(indices.len() * d);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(&self.features.data()[i * d..(i + 1) * d]);
            labels.push(self.labels[i]);
        }
        Ok(Batch::new(Tensor::new(vec![indices.len(), d], data)?, labels)?)
    }

    /// The first `n` rows as one batch (capped at the dataset size).
    pub fn head_batch(&self, n: usize) -> Result<Batch> {
        let n = n.min(self.len());
        let indices: Vec<usize> = (0..n).collect();
        self.batch(&indices)
    }
}

/// Parameters for [`make_synthetic`].
#[derive(Debug, Clone, Copy)]
pub struct BlobParams {
    pub classes: usize,
    pub dim: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    /// Standard deviation of the class-center placement.
    pub separation: f64,
    /// Standard deviation of samples around their center.
    pub spread: f64,
}

/// Draws Gaussian class blobs. Class centers are placed first, then train
/// and test samples are drawn separately (disjoint split), all from the
/// given generator, so the result is a pure function of the seed. Rows are
/// interleaved round-robin over classes so any prefix is class-balanced.
pub fn make_synthetic(params: &BlobParams, rng: &mut Rng) -> Result<(Dataset, Dataset)> {
    if params.classes < 2 || params.train_per_class == 0 || params.test_per_class == 0 {
        return Err(HarnessError::Config(
            "synthetic blobs need at least 2 classes and 1 sample per class per split".into(),
        ));
    }
    if params.dim == 0 || !(params.spread > 0.0) || !(params.separation >= 0.0) {
        return Err(HarnessError::Config(
            "synthetic blobs need positive dim and spread and non-negative separation".into(),
        ));
    }

    let centers: Vec<Tensor> = (0..params.classes)
        .map(|_| rng.gaussian(vec![params.dim], 0.0, params.separation))
        .collect::<lars_core::Result<_>>()?;

    let mut draw_split = |per_class: usize| -> Result<Dataset> {
        let n = per_class * params.classes;
        let d = params.dim;
        let mut data = vec![0.0; n * d];
        let mut labels = vec![0usize; n];
        for class in 0..params.classes {
            for s in 0..per_class {
                let noise = rng.gaussian(vec![d], 0.0, params.spread)?;
                let row = s * params.classes + class;
                for (j, (&c, &z)) in centers[class].data().iter().zip(noise.data()).enumerate() {
                    data[row * d + j] = c + z;
                }
                labels[row] = class;
            }
        }
        Ok(Dataset {
            features: Tensor::new(vec![n, d], data)?,
            labels,
            num_classes: params.classes,
        })
    };

    let train = draw_split(params.train_per_class)?;
    let test = draw_split(params.test_per_class)?;
    Ok((train, test))
}

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(HarnessError::Data(format!(
            "{}: truncated header",
            path.display()
        )));
    }
    Ok(u32::from_be_bytes([
        bytes[offset],
        bytes[offset + 1],
        bytes[offset + 2],
        bytes[offset + 3],
    ]))
}

/// Loads an IDX image/label file pair. Pixels are scaled to `[0, 1]` and
/// images flattened to rows of `rows * cols` features.
pub fn load_idx(images_path: &Path, labels_path: &Path, num_classes: usize) -> Result<Dataset> {
    let images = std::fs::read(images_path).map_err(|e| HarnessError::io(images_path, e))?;
    let labels = std::fs::read(labels_path).map_err(|e| HarnessError::io(labels_path, e))?;

    let magic = be_u32(&images, 0, images_path)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(HarnessError::Data(format!(
            "{}: bad magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}",
            images_path.display()
        )));
    }
    let n = be_u32(&images, 4, images_path)? as usize;
    let rows = be_u32(&images, 8, images_path)? as usize;
    let cols = be_u32(&images, 12, images_path)? as usize;
    let pixels = n * rows * cols;
    if images.len() != 16 + pixels {
        return Err(HarnessError::Data(format!(
            "{}: expected {} data bytes for {n} images of {rows}x{cols}, found {}",
            images_path.display(),
            pixels,
            images.len().saturating_sub(16)
        )));
    }

    let lmagic = be_u32(&labels, 0, labels_path)?;
    if lmagic != IDX_LABELS_MAGIC {
        return Err(HarnessError::Data(format!(
            "{}: bad magic {lmagic:#010x}, expected {IDX_LABELS_MAGIC:#010x}",
            labels_path.display()
        )));
    }
    let ln = be_u32(&labels, 4, labels_path)? as usize;
    if labels.len() != 8 + ln {
        return Err(HarnessError::Data(format!(
            "{}: expected {ln} label bytes, found {}",
            labels_path.display(),
            labels.len().saturating_sub(8)
        )));
    }
    if ln != n {
        return Err(HarnessError::Data(format!(
            "count mismatch: {n} images vs {ln} labels"
        )));
    }

    let data: Vec<f64> = images[16..].iter().map(|&b| b as f64 / 255.0).collect();
    let label_vec: Vec<usize> = labels[8..].iter().map(|&b| b as usize).collect();
    if let Some(&bad) = label_vec.iter().find(|&&l| l >= num_classes) {
        return Err(HarnessError::Data(format!(
            "label {bad} out of range for {num_classes} classes"
        )));
    }
    Ok(Dataset {
        features: Tensor::new(vec![n, rows * cols], data)?,
        labels: label_vec,
        num_classes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blob_params(separation: f64) -> BlobParams {
        BlobParams {
            classes: 3,
            dim: 4,
            train_per_class: 10,
            test_per_class: 4,
            separation,
            spread: 1.0,
        }
    }

    #[test]
    fn synthetic_is_seed_deterministic() {
        let (a_train, a_test) = make_synthetic(&blob_params(2.0), &mut Rng::new(5)).unwrap();
        let (b_train, b_test) = make_synthetic(&blob_params(2.0), &mut Rng::new(5)).unwrap();
        assert_eq!(a_train.features, b_train.features);
        assert_eq!(a_train.labels, b_train.labels);
        assert_eq!(a_test.features, b_test.features);
        assert_eq!(a_test.labels, b_test.labels);
    }

    #[test]
    fn synthetic_prefix_is_class_balanced() {
        let (train, _) = make_synthetic(&blob_params(2.0), &mut Rng::new(1)).unwrap();
        assert_eq!(&train.labels[..6], &[0, 1, 2, 0, 1, 2]);
        assert_eq!(train.len(), 30);
        assert_eq!(train.dim(), 4);
    }

    #[test]
    fn synthetic_rejects_bad_params() {
        let mut p = blob_params(1.0);
        p.classes = 1;
        assert!(make_synthetic(&p, &mut Rng::new(0)).is_err());
        let mut p = blob_params(1.0);
        p.spread = 0.0;
        assert!(make_synthetic(&p, &mut Rng::new(0)).is_err());
    }

    fn idx_fixture(rows: usize, cols: usize, pixels: &[u8], labels: &[u8]) -> (Vec<u8>, Vec<u8>) {
        let n = labels.len();
        let mut img = Vec::new();
        img.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
        img.extend_from_slice(&(n as u32).to_be_bytes());
        img.extend_from_slice(&(rows as u32).to_be_bytes());
        img.extend_from_slice(&(cols as u32).to_be_bytes());
        img.extend_from_slice(pixels);
        let mut lab = Vec::new();
        lab.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
        lab.extend_from_slice(&(n as u32).to_be_bytes());
        lab.extend_from_slice(labels);
        (img, lab)
    }

    fn write_pair(dir: &Path, img: &[u8], lab: &[u8]) -> (std::path::PathBuf, std::path::PathBuf) {
        let ip = dir.join("images.idx");
        let lp = dir.join("labels.idx");
        std::fs::write(&ip, img).unwrap();
        std::fs::write(&lp, lab).unwrap();
        (ip, lp)
    }

    #[test]
    fn idx_fixture_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lab) = idx_fixture(2, 2, &[0, 255, 128, 0, 10, 20, 30, 40], &[7, 1]);
        let (ip, lp) = write_pair(dir.path(), &img, &lab);
        let ds = load_idx(&ip, &lp, 10).unwrap();
        assert_eq!(ds.features.shape(), &[2, 4]);
        assert_eq!(ds.labels, vec![7, 1]);
        assert_eq!(ds.features.data()[1], 1.0);
        assert!((ds.features.data()[2] - 128.0 / 255.0).abs() < 1e-15);
    }

    #[test]
    fn idx_count_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let (img, mut lab) = idx_fixture(2, 2, &[0; 8], &[1, 0]);
        // Claim three labels but provide two image records.
        lab[7] = 3;
        lab.push(2);
        let (ip, lp) = write_pair(dir.path(), &img, &lab);
        let err = load_idx(&ip, &lp, 10).unwrap_err();
        assert!(err.to_string().contains("mismatch"), "{err}");
    }

    #[test]
    fn idx_bad_magic_and_truncation_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let (mut img, lab) = idx_fixture(2, 2, &[0; 8], &[1, 0]);
        img[3] = 0x99;
        let (ip, lp) = write_pair(dir.path(), &img, &lab);
        assert!(load_idx(&ip, &lp, 10).unwrap_err().to_string().contains("magic"));

        let (img, lab) = idx_fixture(2, 2, &[0; 7], &[1, 0]);
        let (ip, lp) = write_pair(dir.path(), &img, &lab);
        assert!(load_idx(&ip, &lp, 10).is_err());
    }
}
