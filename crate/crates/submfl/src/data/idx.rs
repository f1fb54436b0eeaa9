//! IDX file format (the MNIST/FMNIST container): 4-byte big-endian magic,
//! dimension sizes as big-endian u32, unsigned-byte payload.

use std::path::Path;

use crate::error::{Error, Result};

use super::Dataset;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

struct Reader<'a> {
    path: &'a Path,
    bytes: Vec<u8>,
    pos: usize,
}

impl<'a> Reader<'a> {
    fn open(path: &'a Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(Reader { path, bytes, pos: 0 })
    }

    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::IdxTruncated {
                path: self.path.to_path_buf(),
                needed: self.pos + n,
                have: self.bytes.len(),
            });
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn read_u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn expect_magic(&mut self, expected: u32) -> Result<()> {
        let found = self.read_u32()?;
        if found != expected {
            return Err(Error::IdxBadMagic {
                path: self.path.to_path_buf(),
                expected,
                found,
            });
        }
        Ok(())
    }
}

/// Load an image/label IDX pair into a dataset. Pixels are scaled by 1/255
/// into `[0, 1]` and each image is flattened row-major.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let mut images = Reader::open(images_path)?;
    images.expect_magic(IMAGE_MAGIC)?;
    let n_images = images.read_u32()? as usize;
    let rows = images.read_u32()? as usize;
    let cols = images.read_u32()? as usize;
    let dim = rows * cols;
    let pixels = images.take(n_images * dim)?.to_vec();

    let mut labels = Reader::open(labels_path)?;
    labels.expect_magic(LABEL_MAGIC)?;
    let n_labels = labels.read_u32()? as usize;
    let label_bytes = labels.take(n_labels)?.to_vec();

    if n_images != n_labels {
        return Err(Error::IdxCountMismatch {
            images: n_images,
            labels: n_labels,
        });
    }
    if n_images == 0 {
        return Err(Error::InvalidArgument("IDX pair holds zero samples".into()));
    }

    let features: Vec<f64> = pixels.iter().map(|&b| b as f64 / 255.0).collect();
    let labels: Vec<usize> = label_bytes.iter().map(|&b| b as usize).collect();
    let classes = labels.iter().copied().max().unwrap() + 1;
    Dataset::new(features, labels, dim, classes)
}

/// Write a dataset as an IDX image/label pair. Features are quantized to
/// bytes with `round(v * 255)`; images are written as `n x 1 x dim`.
pub fn write_idx(dataset: &Dataset, images_path: &Path, labels_path: &Path) -> Result<()> {
    let n = dataset.len();
    let dim = dataset.dim();
    let mut image_bytes = Vec::with_capacity(16 + n * dim);
    image_bytes.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    image_bytes.extend_from_slice(&(n as u32).to_be_bytes());
    image_bytes.extend_from_slice(&1u32.to_be_bytes());
    image_bytes.extend_from_slice(&(dim as u32).to_be_bytes());
    for i in 0..n {
        for &v in dataset.feature_row(i) {
            image_bytes.push((v * 255.0).round() as u8);
        }
    }

    let mut label_bytes = Vec::with_capacity(8 + n);
    label_bytes.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    label_bytes.extend_from_slice(&(n as u32).to_be_bytes());
    for i in 0..n {
        label_bytes.push(dataset.label(i) as u8);
    }

    crate::fsio::write_atomic(images_path, &image_bytes)?;
    crate::fsio::write_atomic(labels_path, &label_bytes)?;
    Ok(())
}
