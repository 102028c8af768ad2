//! IDX (MNIST) loading, the 3-vs-7 filter, seeded splits and mini-batches.
//!
//! Pixels stay as bytes in memory and are scaled by 1/255 when a batch
//! matrix is materialized.

use std::fs;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// Digit mapped to class 0 and digit mapped to class 1.
pub const CLASS_DIGITS: [u8; 2] = [3, 7];

/// Images with one label each. For raw MNIST the labels are digits; after
/// [`filter_digits`] they are class indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    width: usize,
    pixels: Vec<u8>,
    labels: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitDataset {
    pub train: Dataset,
    pub validation: Dataset,
}

impl Dataset {
    pub fn new(width: usize, pixels: Vec<u8>, labels: Vec<u8>) -> Result<Self> {
        if pixels.len() != width * labels.len() {
            return Err(Error::dimension(
                "dataset pixel buffer",
                width * labels.len(),
                pixels.len(),
            ));
        }
        Ok(Dataset {
            width,
            pixels,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn class_labels(&self) -> Vec<usize> {
        self.labels.iter().map(|&l| usize::from(l)).collect()
    }

    pub fn image(&self, index: usize) -> &[u8] {
        &self.pixels[index * self.width..(index + 1) * self.width]
    }

    /// Pixel values in `[0, 1]` of one image.
    pub fn pixel_values(&self, index: usize) -> Vec<f64> {
        self.image(index)
            .iter()
            .map(|&b| f64::from(b) / 255.0)
            .collect()
    }

    /// Feature matrix and class labels for the given sample indices.
    pub fn batch(&self, indices: &[usize]) -> (Matrix, Vec<usize>) {
        let mut data = Vec::with_capacity(indices.len() * self.width);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend(self.image(i).iter().map(|&b| f64::from(b) / 255.0));
            labels.push(usize::from(self.labels[i]));
        }
        let m = Matrix::from_vec(indices.len(), self.width, data).expect("shape by construction");
        (m, labels)
    }

    pub fn features(&self) -> (Matrix, Vec<usize>) {
        let all: Vec<usize> = (0..self.len()).collect();
        self.batch(&all)
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut pixels = Vec::with_capacity(indices.len() * self.width);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            pixels.extend_from_slice(self.image(i));
            labels.push(self.labels[i]);
        }
        Dataset {
            width: self.width,
            pixels,
            labels,
        }
    }
}

fn read_maybe_gzip(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], offset: usize) -> u32 {
    u32::from_be_bytes(bytes[offset..offset + 4].try_into().expect("4-byte slice"))
}

fn check_header(path: &Path, bytes: &[u8], header_len: usize, magic: u32) -> Result<()> {
    if bytes.len() < 4 {
        return Err(Error::IdxTruncated {
            path: path.into(),
            expected: header_len,
            actual: bytes.len(),
        });
    }
    let found = be_u32(bytes, 0);
    if found != magic {
        return Err(Error::IdxMagic {
            path: path.into(),
            found,
            expected: magic,
        });
    }
    if bytes.len() < header_len {
        return Err(Error::IdxTruncated {
            path: path.into(),
            expected: header_len,
            actual: bytes.len(),
        });
    }
    Ok(())
}

/// Parses an IDX image file and its label file; gzip input is detected by its magic bytes.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let (images_path, labels_path) = (images_path.as_ref(), labels_path.as_ref());

    let images = read_maybe_gzip(images_path)?;
    check_header(images_path, &images, 16, IMAGES_MAGIC)?;
    let count = be_u32(&images, 4) as usize;
    let width = be_u32(&images, 8) as usize * be_u32(&images, 12) as usize;
    let needed = 16 + count * width;
    if images.len() < needed {
        return Err(Error::IdxTruncated {
            path: images_path.into(),
            expected: needed,
            actual: images.len(),
        });
    }

    let labels = read_maybe_gzip(labels_path)?;
    check_header(labels_path, &labels, 8, LABELS_MAGIC)?;
    let label_count = be_u32(&labels, 4) as usize;
    if labels.len() < 8 + label_count {
        return Err(Error::IdxTruncated {
            path: labels_path.into(),
            expected: 8 + label_count,
            actual: labels.len(),
        });
    }
    if label_count != count {
        return Err(Error::IdxCountMismatch {
            images: count,
            labels: label_count,
        });
    }

    Dataset::new(
        width,
        images[16..needed].to_vec(),
        labels[8..8 + count].to_vec(),
    )
}

/// Keeps digits 3 and 7 in their original order, relabelled 3 → 0 and 7 → 1.
pub fn filter_digits(raw: &Dataset) -> Dataset {
    let keep: Vec<usize> = (0..raw.len())
        .filter(|&i| CLASS_DIGITS.contains(&raw.labels[i]))
        .collect();
    let mut out = raw.subset(&keep);
    for l in &mut out.labels {
        *l = u8::from(*l == CLASS_DIGITS[1]);
    }
    out
}

/// Seeded permutation of `0..len` cut into disjoint train and validation index sets.
pub fn split_indices(
    len: usize,
    train_size: usize,
    val_size: usize,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if train_size + val_size > len {
        return Err(Error::Argument(format!(
            "split of {train_size} + {val_size} samples exceeds the {len} available"
        )));
    }
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let validation = order[train_size..train_size + val_size].to_vec();
    order.truncate(train_size);
    Ok((order, validation))
}

pub fn split(
    data: &Dataset,
    train_size: usize,
    val_size: usize,
    seed: u64,
) -> Result<SplitDataset> {
    let (train, validation) = split_indices(data.len(), train_size, val_size, seed)?;
    Ok(SplitDataset {
        train: data.subset(&train),
        validation: data.subset(&validation),
    })
}

/// Mini-batches of sample indices for one epoch, reshuffled per `(seed, epoch)`.
/// The last batch may be short.
pub fn batches(
    len: usize,
    batch_size: usize,
    shuffle_seed: u64,
    epoch: u64,
) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::Argument("batch size must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed);
    rng.set_stream(epoch);
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut rng);
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}
