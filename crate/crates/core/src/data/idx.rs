//! Big-endian IDX containers as used by MNIST.
//!
//! Images: magic 2051, then `n`, `rows`, `cols` as `u32`, then `n*rows*cols`
//! unsigned bytes. Labels: magic 2049, then `n`, then `n` bytes.

use std::path::Path;

use super::{Dataset, LabelDomain, Sample};
use crate::error::{Error, Result};

pub const IMAGE_MAGIC: u32 = 2051;
pub const LABEL_MAGIC: u32 = 2049;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    /// Row-major pixels, image after image.
    pub pixels: Vec<u8>,
}

fn read_u32(bytes: &[u8], offset: usize, file: &str) -> Result<u32> {
    let chunk = bytes.get(offset..offset + 4).ok_or_else(|| Error::Length {
        file: file.to_string(),
        expected: offset + 4,
        actual: bytes.len(),
    })?;
    Ok(u32::from_be_bytes(chunk.try_into().expect("four bytes")))
}

fn body<'a>(bytes: &'a [u8], offset: usize, len: usize, file: &str) -> Result<&'a [u8]> {
    bytes
        .get(offset..offset + len)
        .ok_or_else(|| Error::Length {
            file: file.to_string(),
            expected: offset + len,
            actual: bytes.len(),
        })
}

pub fn parse_idx_images(bytes: &[u8], file: &str) -> Result<IdxImages> {
    let magic = read_u32(bytes, 0, file)?;
    if magic != IMAGE_MAGIC {
        return Err(Error::Format {
            file: file.to_string(),
            expected: IMAGE_MAGIC,
            actual: magic,
        });
    }
    let count = read_u32(bytes, 4, file)? as usize;
    let rows = read_u32(bytes, 8, file)? as usize;
    let cols = read_u32(bytes, 12, file)? as usize;
    let pixels = body(bytes, 16, count * rows * cols, file)?.to_vec();
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels,
    })
}

pub fn parse_idx_labels(bytes: &[u8], file: &str) -> Result<Vec<u8>> {
    let magic = read_u32(bytes, 0, file)?;
    if magic != LABEL_MAGIC {
        return Err(Error::Format {
            file: file.to_string(),
            expected: LABEL_MAGIC,
            actual: magic,
        });
    }
    let count = read_u32(bytes, 4, file)? as usize;
    Ok(body(bytes, 8, count, file)?.to_vec())
}

pub fn encode_idx_images(images: &IdxImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    for v in [
        IMAGE_MAGIC,
        images.count as u32,
        images.rows as u32,
        images.cols as u32,
    ] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(&images.pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Decode a pair of IDX files into a 10-class dataset with pixels scaled to
/// `[0, 1]` by `/255`.
pub fn images_to_dataset(images: &IdxImages, labels: &[u8]) -> Result<Dataset> {
    if images.count != labels.len() {
        return Err(Error::Consistency {
            images: images.count,
            labels: labels.len(),
        });
    }
    let dim = images.rows * images.cols;
    let samples = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| Sample {
            features: images.pixels[i * dim..(i + 1) * dim]
                .iter()
                .map(|&p| p as f64 / 255.0)
                .collect(),
            label: l as i64,
        })
        .collect();
    Dataset::new(samples, LabelDomain::Classes(10), dim)
}

pub fn load_mnist_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let img_bytes = std::fs::read(images_path).map_err(|e| Error::io(images_path, e))?;
    let lbl_bytes = std::fs::read(labels_path).map_err(|e| Error::io(labels_path, e))?;
    let images = parse_idx_images(&img_bytes, &images_path.display().to_string())?;
    let labels = parse_idx_labels(&lbl_bytes, &labels_path.display().to_string())?;
    images_to_dataset(&images, &labels)
}
