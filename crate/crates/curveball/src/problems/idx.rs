//! Reader for the big-endian IDX image/label file pair (the MNIST container
//! format): magic, 32-bit extents, then a flat unsigned-byte payload.

use std::fs;
use std::path::Path;

use thiserror::Error;

use super::Dataset;
use crate::numerics::Tensor;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Error)]
pub enum IdxError {
    #[error("bad magic: expected {expected:#010x}, found {found:#010x}")]
    BadMagic { expected: u32, found: u32 },
    #[error("file ends before the declared payload")]
    TruncatedFile,
    #[error("count mismatch: {images} images vs {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn u32(&mut self) -> Result<u32, IdxError> {
        let end = self.pos + 4;
        let chunk = self.bytes.get(self.pos..end).ok_or(IdxError::TruncatedFile)?;
        self.pos = end;
        Ok(u32::from_be_bytes(chunk.try_into().unwrap()))
    }

    fn payload(&mut self, len: usize) -> Result<&'a [u8], IdxError> {
        let end = self.pos.checked_add(len).ok_or(IdxError::TruncatedFile)?;
        let chunk = self.bytes.get(self.pos..end).ok_or(IdxError::TruncatedFile)?;
        self.pos = end;
        Ok(chunk)
    }
}

/// Loads an images/labels pair: pixels are scaled to `[0, 1]` and flattened
/// to one row per image; the label payload length must match the image count.
pub fn load_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<Dataset, IdxError> {
    let image_bytes = fs::read(images_path.as_ref())?;
    let label_bytes = fs::read(labels_path.as_ref())?;

    let mut images = Reader { bytes: &image_bytes, pos: 0 };
    let magic = images.u32()?;
    if magic != IMAGES_MAGIC {
        return Err(IdxError::BadMagic { expected: IMAGES_MAGIC, found: magic });
    }
    let count = images.u32()? as usize;
    let rows = images.u32()? as usize;
    let cols = images.u32()? as usize;
    let pixels = images.payload(count * rows * cols)?;

    let mut labels = Reader { bytes: &label_bytes, pos: 0 };
    let magic = labels.u32()?;
    if magic != LABELS_MAGIC {
        return Err(IdxError::BadMagic { expected: LABELS_MAGIC, found: magic });
    }
    let label_count = labels.u32()? as usize;
    let raw_labels = labels.payload(label_count)?;

    if count != label_count {
        return Err(IdxError::CountMismatch { images: count, labels: label_count });
    }

    let features = Tensor::matrix(
        count,
        rows * cols,
        pixels.iter().map(|&b| b as f64 / 255.0).collect(),
    );
    let labels: Vec<usize> = raw_labels.iter().map(|&b| b as usize).collect();
    let classes = labels.iter().copied().max().map_or(1, |m| m + 1);
    Ok(Dataset::new(features, labels, classes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_images(path: &Path, magic: u32, images: &[[u8; 4]]) {
        let mut f = fs::File::create(path).unwrap();
        f.write_all(&magic.to_be_bytes()).unwrap();
        f.write_all(&(images.len() as u32).to_be_bytes()).unwrap();
        f.write_all(&2u32.to_be_bytes()).unwrap();
        f.write_all(&2u32.to_be_bytes()).unwrap();
        for img in images {
            f.write_all(img).unwrap();
        }
    }

    fn write_labels(path: &Path, magic: u32, labels: &[u8]) {
        let mut f = fs::File::create(path).unwrap();
        f.write_all(&magic.to_be_bytes()).unwrap();
        f.write_all(&(labels.len() as u32).to_be_bytes()).unwrap();
        f.write_all(labels).unwrap();
    }

    #[test]
    fn round_trips_hand_built_pair() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("images.idx");
        let lab = dir.path().join("labels.idx");
        write_images(&img, IMAGES_MAGIC, &[[0, 51, 102, 255], [255, 204, 153, 0]]);
        write_labels(&lab, LABELS_MAGIC, &[1, 0]);

        let data = load_idx(&img, &lab).unwrap();
        assert_eq!(data.len(), 2);
        assert_eq!(data.dim(), 4);
        assert_eq!(data.labels(), &[1, 0]);
        assert_eq!(data.features().row(0), &[0.0, 0.2, 0.4, 1.0]);
        assert_eq!(data.features().row(1), &[1.0, 0.8, 0.6, 0.0]);
    }

    #[test]
    fn rejects_wrong_image_magic() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("images.idx");
        let lab = dir.path().join("labels.idx");
        write_images(&img, 0x0000_0802, &[[0, 0, 0, 0]]);
        write_labels(&lab, LABELS_MAGIC, &[0]);
        match load_idx(&img, &lab) {
            Err(IdxError::BadMagic { expected, found }) => {
                assert_eq!(expected, IMAGES_MAGIC);
                assert_eq!(found, 0x0000_0802);
            }
            other => panic!("expected BadMagic, got {other:?}"),
        }
    }

    #[test]
    fn rejects_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("images.idx");
        let lab = dir.path().join("labels.idx");
        write_images(&img, IMAGES_MAGIC, &[[0, 0, 0, 0], [0, 0, 0, 0]]);
        write_labels(&lab, LABELS_MAGIC, &[0, 1, 2]);
        match load_idx(&img, &lab) {
            Err(IdxError::CountMismatch { images, labels }) => {
                assert_eq!((images, labels), (2, 3));
            }
            other => panic!("expected CountMismatch, got {other:?}"),
        }
    }

    #[test]
    fn rejects_truncated_payload() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("images.idx");
        let lab = dir.path().join("labels.idx");
        {
            let mut f = fs::File::create(&img).unwrap();
            f.write_all(&IMAGES_MAGIC.to_be_bytes()).unwrap();
            f.write_all(&2u32.to_be_bytes()).unwrap();
            f.write_all(&2u32.to_be_bytes()).unwrap();
            f.write_all(&2u32.to_be_bytes()).unwrap();
            f.write_all(&[7u8; 3]).unwrap();
        }
        write_labels(&lab, LABELS_MAGIC, &[0, 1]);
        assert!(matches!(load_idx(&img, &lab), Err(IdxError::TruncatedFile)));
    }

    #[test]
    fn missing_file_reports_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let lab = dir.path().join("labels.idx");
        write_labels(&lab, LABELS_MAGIC, &[0]);
        assert!(matches!(
            load_idx(dir.path().join("absent.idx"), &lab),
            Err(IdxError::Io(_))
        ));
    }
}
