//! IDX container (big-endian header, unsigned-byte payload).

use std::io::Cursor;
use std::path::Path;

use byteorder::{BigEndian, ReadBytesExt};

use super::Dataset;
use crate::error::{Error, Result};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn format_err(path: &Path, offset: u64, message: impl Into<String>) -> Error {
    Error::Format { path: path.to_path_buf(), offset, message: message.into() }
}

fn read_header(bytes: &[u8], path: &Path, magic: u32, dims: usize) -> Result<Vec<usize>> {
    let mut cur = Cursor::new(bytes);
    let found = cur.read_u32::<BigEndian>().map_err(|_| format_err(path, 0, "truncated magic number"))?;
    if found != magic {
        return Err(format_err(path, 0, format!("bad magic 0x{found:08x}, expected 0x{magic:08x}")));
    }
    (0..dims)
        .map(|i| {
            let off = cur.position();
            cur.read_u32::<BigEndian>()
                .map(|v| v as usize)
                .map_err(|_| format_err(path, off, format!("truncated header dimension {i}")))
        })
        .collect()
}

/// Images as `(count, rows·cols, pixels scaled to [0, 1])`.
pub fn read_idx_images(bytes: &[u8], path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let dims = read_header(bytes, path, IDX_IMAGES_MAGIC, 3)?;
    let (n, width) = (dims[0], dims[1] * dims[2]);
    let need = 16 + n * width;
    if bytes.len() < need {
        return Err(format_err(
            path,
            bytes.len() as u64,
            format!("truncated payload: {n} images of {width} pixels need {need} bytes"),
        ));
    }
    let pixels = bytes[16..need].iter().map(|&b| f64::from(b) / 255.0).collect();
    Ok((n, width, pixels))
}

pub fn read_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<usize>> {
    let dims = read_header(bytes, path, IDX_LABELS_MAGIC, 1)?;
    let n = dims[0];
    if bytes.len() < 8 + n {
        return Err(format_err(path, bytes.len() as u64, format!("truncated payload: {n} labels")));
    }
    Ok(bytes[8..8 + n].iter().map(|&b| usize::from(b)).collect())
}

/// Loads an image/label IDX pair. Class count is `max(label) + 1`, at least 2.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let (n, width, pixels) = read_idx_images(&std::fs::read(images_path)?, images_path)?;
    let labels = read_idx_labels(&std::fs::read(labels_path)?, labels_path)?;
    if labels.len() != n {
        return Err(format_err(labels_path, 4, format!("label count {} does not match image count {n}", labels.len())));
    }
    let classes = labels.iter().copied().max().unwrap_or(0).max(1) + 1;
    Dataset::new(pixels, width, labels, classes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bad_magic_names_offset_zero() {
        let bytes = [0u8, 0, 8, 1, 0, 0, 0, 0];
        match read_idx_images(&bytes, Path::new("x")) {
            Err(Error::Format { offset: 0, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn header_only_is_truncated() {
        let mut bytes = IDX_IMAGES_MAGIC.to_be_bytes().to_vec();
        bytes.extend(2u32.to_be_bytes());
        bytes.extend(2u32.to_be_bytes());
        bytes.extend(2u32.to_be_bytes());
        assert!(matches!(read_idx_images(&bytes, Path::new("x")), Err(Error::Format { offset: 16, .. })));
        assert!(matches!(read_idx_images(&bytes[..10], Path::new("x")), Err(Error::Format { offset: 8, .. })));
    }
}
