//! MNIST IDX loading and zero-mean normalization.
//!
//! IDX layout: a big-endian `u32` magic (`0x00000803` for image files,
//! `0x00000801` for label files), one big-endian `u32` per dimension, then
//! row-major unsigned bytes.

use std::fs;
use std::io::{self, Read};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;
pub const ROWS: usize = 28;
pub const COLS: usize = 28;
pub const PIXELS: usize = ROWS * COLS;
pub const CLASSES: usize = 10;

pub const TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

#[derive(Debug, Error)]
pub enum IdxError {
    #[error("wrong magic for {kind} file: expected {expected:#010x}, found {found:#010x}")]
    WrongMagic {
        kind: &'static str,
        expected: u32,
        found: u32,
    },
    #[error("truncated {what}: expected {expected} bytes, got {got}")]
    Truncated {
        what: &'static str,
        expected: u64,
        got: u64,
    },
    #[error("image dimensions {rows}x{cols}, expected 28x28")]
    BadDimensions { rows: u32, cols: u32 },
    #[error("invalid label {value} at index {index}")]
    InvalidLabel { index: usize, value: u8 },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("missing data file {}", .0.display())]
    MissingFile(PathBuf),
    #[error("{}: {source}", path.display())]
    Idx {
        path: PathBuf,
        #[source]
        source: IdxError,
    },
    #[error("empty dataset")]
    Empty,
}

/// Raw 28x28 images, `count * 784` bytes in file order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawImages {
    pub count: usize,
    pub pixels: Vec<u8>,
}

impl RawImages {
    pub fn image(&self, i: usize) -> &[u8] {
        &self.pixels[i * PIXELS..(i + 1) * PIXELS]
    }
}

fn read_u32(reader: &mut impl Read, what: &'static str, consumed: u64) -> Result<u32, IdxError> {
    let mut buf = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match reader.read(&mut buf[got..]) {
            Ok(0) => {
                return Err(IdxError::Truncated {
                    what,
                    expected: consumed + 4,
                    got: consumed + got as u64,
                })
            }
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(u32::from_be_bytes(buf))
}

/// Reads exactly `len` bytes without trusting `len` for the allocation.
fn read_payload(reader: &mut impl Read, len: u64, header: u64) -> Result<Vec<u8>, IdxError> {
    let mut out = Vec::with_capacity(len.min(1 << 20) as usize);
    reader.take(len).read_to_end(&mut out)?;
    if (out.len() as u64) < len {
        return Err(IdxError::Truncated {
            what: "payload",
            expected: header + len,
            got: header + out.len() as u64,
        });
    }
    Ok(out)
}

/// Parses an IDX image stream. Consumes exactly the header and
/// `count * 784` payload bytes; anything after that is left unread.
pub fn load_idx_images(mut reader: impl Read) -> Result<RawImages, IdxError> {
    let magic = read_u32(&mut reader, "header", 0)?;
    if magic != IMAGE_MAGIC {
        return Err(IdxError::WrongMagic {
            kind: "image",
            expected: IMAGE_MAGIC,
            found: magic,
        });
    }
    let count = read_u32(&mut reader, "header", 4)?;
    let rows = read_u32(&mut reader, "header", 8)?;
    let cols = read_u32(&mut reader, "header", 12)?;
    if rows as usize != ROWS || cols as usize != COLS {
        return Err(IdxError::BadDimensions { rows, cols });
    }
    let pixels = read_payload(&mut reader, count as u64 * PIXELS as u64, 16)?;
    Ok(RawImages {
        count: count as usize,
        pixels,
    })
}

/// Parses an IDX label stream; every label must be a digit 0..=9.
pub fn load_idx_labels(mut reader: impl Read) -> Result<Vec<u8>, IdxError> {
    let magic = read_u32(&mut reader, "header", 0)?;
    if magic != LABEL_MAGIC {
        return Err(IdxError::WrongMagic {
            kind: "label",
            expected: LABEL_MAGIC,
            found: magic,
        });
    }
    let count = read_u32(&mut reader, "header", 4)?;
    let labels = read_payload(&mut reader, count as u64, 8)?;
    if let Some((index, &value)) = labels.iter().enumerate().find(|(_, &l)| l as usize >= CLASSES) {
        return Err(IdxError::InvalidLabel { index, value });
    }
    Ok(labels)
}

/// Serializes images in IDX form. Used to build test fixtures.
pub fn write_idx_images(images: &RawImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    for word in [IMAGE_MAGIC, images.count as u32, ROWS as u32, COLS as u32] {
        out.extend_from_slice(&word.to_be_bytes());
    }
    out.extend_from_slice(&images.pixels);
    out
}

pub fn write_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Normalization {
    /// Subtract the grand mean of this split's own scaled pixels.
    TrainMean,
    /// Subtract an offset computed elsewhere (the training split's mean).
    GivenOffset(f64),
}

/// Normalized 784-vectors with labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    vectors: Vec<f64>,
    labels: Vec<u8>,
    mean_offset: f64,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        &self.vectors[i * PIXELS..(i + 1) * PIXELS]
    }

    /// All vectors, row-major `len() x 784`.
    pub fn vectors(&self) -> &[f64] {
        &self.vectors
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn mean_offset(&self) -> f64 {
        self.mean_offset
    }

    pub fn grand_mean(&self) -> f64 {
        self.vectors.iter().sum::<f64>() / self.vectors.len() as f64
    }

    /// First `n` examples, keeping the offset.
    pub fn head(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset {
            vectors: self.vectors[..n * PIXELS].to_vec(),
            labels: self.labels[..n].to_vec(),
            mean_offset: self.mean_offset,
        }
    }
}

/// Scales pixels to [0, 1] and subtracts a single scalar offset.
pub fn build_dataset(images: &RawImages, labels: &[u8], normalization: Normalization) -> Result<Dataset, DataError> {
    if images.count != labels.len() {
        return Err(DataError::CountMismatch {
            images: images.count,
            labels: labels.len(),
        });
    }
    let mean_offset = match normalization {
        Normalization::GivenOffset(offset) => offset,
        Normalization::TrainMean if images.pixels.is_empty() => 0.0,
        Normalization::TrainMean => {
            let total: u64 = images.pixels.iter().map(|&p| p as u64).sum();
            total as f64 / (255.0 * images.pixels.len() as f64)
        }
    };
    let vectors = images.pixels.iter().map(|&p| p as f64 / 255.0 - mean_offset).collect();
    Ok(Dataset {
        vectors,
        labels: labels.to_vec(),
        mean_offset,
    })
}

/// SHA-256 of a file's bytes as stored on disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileChecksum {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone)]
pub struct Mnist {
    pub train: Dataset,
    pub test: Dataset,
    pub checksums: Vec<FileChecksum>,
}

/// Finds `name` or `name.gz` inside `dir`.
pub fn locate(dir: &Path, name: &str) -> Result<PathBuf, DataError> {
    let plain = dir.join(name);
    if plain.is_file() {
        return Ok(plain);
    }
    let gz = dir.join(format!("{name}.gz"));
    if gz.is_file() {
        return Ok(gz);
    }
    Err(DataError::MissingFile(plain))
}

/// Returns a missing-file error for the first of the four files not found.
pub fn check_data_dir(dir: &Path) -> Result<(), DataError> {
    for name in [TRAIN_IMAGES, TRAIN_LABELS, TEST_IMAGES, TEST_LABELS] {
        locate(dir, name)?;
    }
    Ok(())
}

fn read_file(dir: &Path, name: &str) -> Result<(PathBuf, Vec<u8>, FileChecksum), DataError> {
    let path = locate(dir, name)?;
    let stored = fs::read(&path).map_err(|e| DataError::Idx {
        path: path.clone(),
        source: e.into(),
    })?;
    let checksum = FileChecksum {
        name: path.file_name().unwrap_or_default().to_string_lossy().into_owned(),
        sha256: hex::encode(Sha256::digest(&stored)),
    };
    let bytes = if path.extension().is_some_and(|e| e == "gz") {
        let mut out = Vec::new();
        GzDecoder::new(&stored[..])
            .read_to_end(&mut out)
            .map_err(|e| DataError::Idx {
                path: path.clone(),
                source: e.into(),
            })?;
        out
    } else {
        stored
    };
    Ok((path, bytes, checksum))
}

fn load_split(dir: &Path, images: &str, labels: &str) -> Result<(RawImages, Vec<u8>, Vec<FileChecksum>), DataError> {
    let (img_path, img_bytes, img_sum) = read_file(dir, images)?;
    let raw = load_idx_images(&img_bytes[..]).map_err(|source| DataError::Idx { path: img_path, source })?;
    let (lbl_path, lbl_bytes, lbl_sum) = read_file(dir, labels)?;
    let lbl = load_idx_labels(&lbl_bytes[..]).map_err(|source| DataError::Idx { path: lbl_path, source })?;
    Ok((raw, lbl, vec![img_sum, lbl_sum]))
}

/// Loads both splits. The test split is shifted by the training offset.
pub fn load_mnist(dir: &Path) -> Result<Mnist, DataError> {
    check_data_dir(dir)?;
    let (train_raw, train_labels, mut checksums) = load_split(dir, TRAIN_IMAGES, TRAIN_LABELS)?;
    let (test_raw, test_labels, test_sums) = load_split(dir, TEST_IMAGES, TEST_LABELS)?;
    checksums.extend(test_sums);
    let train = build_dataset(&train_raw, &train_labels, Normalization::TrainMean)?;
    let test = build_dataset(&test_raw, &test_labels, Normalization::GivenOffset(train.mean_offset()))?;
    if train.is_empty() || test.is_empty() {
        return Err(DataError::Empty);
    }
    Ok(Mnist { train, test, checksums })
}
