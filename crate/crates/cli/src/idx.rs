//! IDX ingestion for standard handwritten-digit corpora: big-endian,
//! image magic 0x00000803, label magic 0x00000801.

use std::fs;
use std::path::Path;

use dataforge_core::dataset::{Dataset, GrayImage, LabeledSample, Provenance, Role};

use crate::{Error, Result};

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

fn read_u32(bytes: &[u8], pos: usize, path: &Path) -> Result<u32> {
    bytes
        .get(pos..pos + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::format(path, "truncated header"))
}

pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let img_bytes = fs::read(images_path).map_err(|e| Error::io(images_path, e))?;
    let magic = read_u32(&img_bytes, 0, images_path)?;
    if magic != IMAGE_MAGIC {
        return Err(Error::format(
            images_path,
            format!("image magic {magic:#010x}, expected {IMAGE_MAGIC:#010x}"),
        ));
    }
    let count = read_u32(&img_bytes, 4, images_path)? as usize;
    let rows = read_u32(&img_bytes, 8, images_path)? as usize;
    let cols = read_u32(&img_bytes, 12, images_path)? as usize;
    let expected = 16 + count * rows * cols;
    if img_bytes.len() < expected {
        return Err(Error::format(
            images_path,
            format!("payload truncated: {} bytes, expected {expected}", img_bytes.len()),
        ));
    }

    let lbl_bytes = fs::read(labels_path).map_err(|e| Error::io(labels_path, e))?;
    let magic = read_u32(&lbl_bytes, 0, labels_path)?;
    if magic != LABEL_MAGIC {
        return Err(Error::format(
            labels_path,
            format!("label magic {magic:#010x}, expected {LABEL_MAGIC:#010x}"),
        ));
    }
    let label_count = read_u32(&lbl_bytes, 4, labels_path)? as usize;
    if label_count != count {
        return Err(Error::format(
            labels_path,
            format!("{label_count} labels for {count} images"),
        ));
    }
    if lbl_bytes.len() < 8 + count {
        return Err(Error::format(labels_path, "payload truncated"));
    }

    let labels = &lbl_bytes[8..8 + count];
    let max_label = labels.iter().cloned().max().unwrap_or(0) as usize;
    if max_label < 1 {
        return Err(Error::format(labels_path, "fewer than two classes present"));
    }
    let mut samples = Vec::with_capacity(count);
    for i in 0..count {
        let at = 16 + i * rows * cols;
        let image = GrayImage::new(cols, rows, img_bytes[at..at + rows * cols].to_vec())?;
        samples.push(LabeledSample {
            id: i as u64,
            image,
            label: labels[i] as usize,
            provenance: Provenance::Original,
            true_label: None,
        });
    }
    let classes = (0..=max_label).map(|c| c.to_string()).collect();
    Ok(Dataset::new(classes, samples, Role::Train)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_images(path: &Path, count: u32, rows: u32, cols: u32, payload: &[u8]) {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
        bytes.extend_from_slice(&count.to_be_bytes());
        bytes.extend_from_slice(&rows.to_be_bytes());
        bytes.extend_from_slice(&cols.to_be_bytes());
        bytes.extend_from_slice(payload);
        fs::write(path, bytes).unwrap();
    }

    fn write_labels(path: &Path, labels: &[u8]) {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
        bytes.extend_from_slice(&(labels.len() as u32).to_be_bytes());
        bytes.extend_from_slice(labels);
        fs::write(path, bytes).unwrap();
    }

    #[test]
    fn parses_hand_built_idx_pair() {
        // One 2x2 image needs a second sample to reach two classes; build
        // two images worth of payload.
        let dir = tempfile::tempdir().unwrap();
        let (imgs, lbls) = (dir.path().join("i"), dir.path().join("l"));
        write_images(&imgs, 2, 2, 2, &[10, 20, 30, 40, 50, 60, 70, 80]);
        write_labels(&lbls, &[0, 1]);
        let ds = load_idx(&imgs, &lbls).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.dims(), (2, 2));
        assert_eq!(ds.samples()[0].image.pixels(), &[10, 20, 30, 40]);
        assert_eq!(ds.labels(), vec![0, 1]);
        assert!(ds.samples().iter().all(|s| s.provenance == Provenance::Original));
    }

    #[test]
    fn rejects_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let (imgs, lbls) = (dir.path().join("i"), dir.path().join("l"));
        write_images(&imgs, 2, 2, 2, &[0; 8]);
        write_labels(&lbls, &[0, 1, 1]);
        let err = load_idx(&imgs, &lbls).unwrap_err();
        assert!(err.to_string().contains("3 labels for 2 images"));
    }

    #[test]
    fn rejects_empty_file() {
        let dir = tempfile::tempdir().unwrap();
        let (imgs, lbls) = (dir.path().join("i"), dir.path().join("l"));
        fs::write(&imgs, []).unwrap();
        write_labels(&lbls, &[0]);
        let err = load_idx(&imgs, &lbls).unwrap_err();
        assert!(err.to_string().contains("truncated"));
    }

    #[test]
    fn rejects_wrong_magic() {
        let dir = tempfile::tempdir().unwrap();
        let (imgs, lbls) = (dir.path().join("i"), dir.path().join("l"));
        let mut bytes = 0x0000_0801u32.to_be_bytes().to_vec();
        bytes.extend_from_slice(&[0; 12]);
        fs::write(&imgs, bytes).unwrap();
        write_labels(&lbls, &[0]);
        let err = load_idx(&imgs, &lbls).unwrap_err();
        assert!(err.to_string().contains("magic"));
    }

    #[test]
    fn rejects_truncated_payload() {
        let dir = tempfile::tempdir().unwrap();
        let (imgs, lbls) = (dir.path().join("i"), dir.path().join("l"));
        write_images(&imgs, 2, 2, 2, &[1, 2, 3]);
        write_labels(&lbls, &[0, 1]);
        let err = load_idx(&imgs, &lbls).unwrap_err();
        assert!(err.to_string().contains("truncated"));
    }
}
