//! IDX (MNIST distribution format) reader. Headers are big-endian: a magic
//! word `0x00000803` for u8 image tensors or `0x00000801` for u8 label vectors,
//! followed by one u32 per dimension.

use std::path::Path;

use super::{Dataset, Split};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::format(path, "truncated header"))
}

/// Returns `(dims, payload)` after checking the magic word and payload size.
fn parse_header<'a>(bytes: &'a [u8], magic: u32, path: &Path) -> Result<(Vec<usize>, &'a [u8])> {
    let found = be_u32(bytes, 0, path)?;
    if found != magic {
        return Err(Error::format(
            path,
            format!("bad magic number {found:#010x}, expected {magic:#010x}"),
        ));
    }
    let ndims = (magic & 0xff) as usize;
    let dims = (0..ndims)
        .map(|i| be_u32(bytes, 4 + 4 * i, path).map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let start = 4 + 4 * ndims;
    let expected: usize = dims.iter().product();
    let payload = &bytes[start..];
    if payload.len() < expected {
        return Err(Error::format(
            path,
            format!("truncated payload: {} bytes, expected {expected}", payload.len()),
        ));
    }
    Ok((dims, &payload[..expected]))
}

/// Decodes image and label IDX buffers. Pixels are scaled to `[0, 1]` and
/// each image becomes a `[1, rows, cols]` tensor.
pub fn parse_idx(images: &[u8], labels: &[u8], split: Split, origin: &Path) -> Result<Dataset> {
    let (idims, pixels) = parse_header(images, IMAGES_MAGIC, origin)?;
    let (ldims, label_bytes) = parse_header(labels, LABELS_MAGIC, origin)?;
    let (count, rows, cols) = (idims[0], idims[1], idims[2]);
    if count != ldims[0] {
        return Err(Error::format(origin, format!("{count} images but {} labels", ldims[0])));
    }
    if count == 0 {
        return Err(Error::EmptyDataset);
    }
    let per_image = rows * cols;
    let num_classes = (*label_bytes.iter().max().unwrap() as usize + 1).max(2);
    let samples = pixels
        .chunks_exact(per_image)
        .zip(label_bytes)
        .map(|(img, y)| {
            let data = img.iter().map(|p| f32::from(*p) / 255.0).collect();
            (Tensor::from_parts_unchecked(vec![1, rows, cols], data), *y as usize)
        })
        .collect();
    Dataset::new(samples, split, num_classes)
}

pub fn load_idx(images: impl AsRef<Path>, labels: impl AsRef<Path>, split: Split) -> Result<Dataset> {
    let images = images.as_ref();
    let image_bytes = std::fs::read(images)?;
    let label_bytes = std::fs::read(labels.as_ref())?;
    parse_idx(&image_bytes, &label_bytes, split, images)
}
