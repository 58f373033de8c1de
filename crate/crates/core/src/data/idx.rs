use std::fs;
use std::path::Path;

use super::Dataset;
use crate::error::{Result, SalError};
use crate::numerics::Matrix;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| SalError::io(path, e))
}

fn format_err(path: &Path, message: impl Into<String>) -> SalError {
    SalError::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn be_u32(bytes: &[u8], offset: usize) -> u32 {
    u32::from_be_bytes(bytes[offset..offset + 4].try_into().unwrap())
}

/// Header fields following the magic number, plus the payload.
fn parse<'a>(path: &Path, bytes: &'a [u8], magic: u32) -> Result<(Vec<usize>, &'a [u8])> {
    let dims = (magic & 0xff) as usize;
    let header = 4 + 4 * dims;
    if bytes.len() < 4 {
        return Err(format_err(path, "truncated IDX header"));
    }
    let found = be_u32(bytes, 0);
    if found != magic {
        return Err(format_err(
            path,
            format!("bad IDX magic 0x{found:08x}, expected 0x{magic:08x}"),
        ));
    }
    if bytes.len() < header {
        return Err(format_err(path, "truncated IDX header"));
    }
    let shape: Vec<usize> = (0..dims)
        .map(|d| be_u32(bytes, 4 + 4 * d) as usize)
        .collect();
    let expected: usize = shape.iter().product();
    let payload = &bytes[header..];
    if payload.len() < expected {
        return Err(format_err(
            path,
            format!(
                "truncated IDX payload: {} bytes, header promises {expected}",
                payload.len()
            ),
        ));
    }
    Ok((shape, &payload[..expected]))
}

/// Loads an unsigned-byte IDX image file and its label file.
///
/// Images are flattened row-major; pixel values stay in `0..=255`.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let image_bytes = read(images_path)?;
    let label_bytes = read(labels_path)?;
    let (shape, pixels) = parse(images_path, &image_bytes, IMAGES_MAGIC)?;
    let (label_shape, raw_labels) = parse(labels_path, &label_bytes, LABELS_MAGIC)?;

    let count = shape[0];
    if label_shape[0] != count {
        return Err(format_err(
            labels_path,
            format!(
                "{} labels but {} holds {count} images",
                label_shape[0],
                images_path.display()
            ),
        ));
    }
    let features_per = shape[1] * shape[2];
    let features = Matrix::new(
        count,
        features_per,
        pixels.iter().map(|&p| f64::from(p)).collect(),
    )?;
    let labels: Vec<usize> = raw_labels.iter().map(|&l| usize::from(l)).collect();
    let classes = labels.iter().max().map_or(1, |m| m + 1).max(10);
    let name = images_path
        .file_name()
        .map_or_else(|| "idx".to_string(), |n| n.to_string_lossy().into_owned());
    Dataset::new(name, features, labels, classes, (0.0, 255.0))
}

/// Writes raw `u8` pixel data and labels as an IDX image/label file pair.
pub fn write_idx(
    images_path: &Path,
    labels_path: &Path,
    rows: u32,
    cols: u32,
    pixels: &[u8],
    labels: &[u8],
) -> Result<()> {
    let per = (rows * cols) as usize;
    if per == 0 || pixels.len() != per * labels.len() {
        return Err(SalError::Data(format!(
            "{} pixels for {} images of {rows}x{cols}",
            pixels.len(),
            labels.len()
        )));
    }
    let n = labels.len() as u32;
    let mut img = Vec::with_capacity(16 + pixels.len());
    for v in [IMAGES_MAGIC, n, rows, cols] {
        img.extend_from_slice(&v.to_be_bytes());
    }
    img.extend_from_slice(pixels);
    let mut lab = Vec::with_capacity(8 + labels.len());
    for v in [LABELS_MAGIC, n] {
        lab.extend_from_slice(&v.to_be_bytes());
    }
    lab.extend_from_slice(labels);
    fs::write(images_path, img).map_err(|e| SalError::io(images_path, e))?;
    fs::write(labels_path, lab).map_err(|e| SalError::io(labels_path, e))
}
