//! On-disk dataset container.
//!
//! Little-endian layout: magic "SSDA", format version u32, K u32, then four
//! sections in fixed order (source_labeled, target_labeled, target_unlabeled,
//! target_validation), each `{ split_tag u8, count u64 }` followed by
//! `{ id u64, label i32, channels u32, height u32, width u32, pixels f32[] }`
//! per sample. Label -1 encodes "absent"; the unlabeled section stores the
//! retained evaluation labels in the label field (hiding is an API property,
//! not a file property), so round trips are lossless.

use std::fs;
use std::path::Path;

use super::SsdaDataset;
use crate::augment::{Domain, PixelBuf, Sample};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"SSDA";
const VERSION: u32 = 1;
const SPLIT_TAGS: [u8; 4] = [0, 1, 2, 3];

pub(super) fn to_bytes(ds: &SsdaDataset) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&ds.num_classes().to_le_bytes());

    let plain = |s: &Sample| s.label.map(|l| l as i32).unwrap_or(-1);
    write_section(&mut out, SPLIT_TAGS[0], ds.source_labeled(), plain);
    write_section(&mut out, SPLIT_TAGS[1], ds.target_labeled(), plain);
    let hidden = ds.hidden_labels();
    let mut idx = 0usize;
    write_section(&mut out, SPLIT_TAGS[2], ds.target_unlabeled(), |_| {
        let l = hidden[idx].map(|l| l as i32).unwrap_or(-1);
        idx += 1;
        l
    });
    write_section(&mut out, SPLIT_TAGS[3], ds.target_validation(), plain);
    out
}

fn write_section(out: &mut Vec<u8>, tag: u8, samples: &[Sample], mut label_of: impl FnMut(&Sample) -> i32) {
    out.push(tag);
    out.extend_from_slice(&(samples.len() as u64).to_le_bytes());
    for s in samples {
        out.extend_from_slice(&s.id.to_le_bytes());
        out.extend_from_slice(&label_of(s).to_le_bytes());
        out.extend_from_slice(&(s.pixels.channels as u32).to_le_bytes());
        out.extend_from_slice(&(s.pixels.height as u32).to_le_bytes());
        out.extend_from_slice(&(s.pixels.width as u32).to_le_bytes());
        for &v in &s.pixels.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

pub fn save_dataset(ds: &SsdaDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_bytes(ds)).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<SsdaDataset> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    from_bytes(&bytes)
}

struct Reader<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, field: &'static str) -> Result<&'a [u8]> {
        if self.offset + n > self.bytes.len() {
            return Err(Error::Parse {
                offset: self.offset as u64,
                field,
                message: format!(
                    "need {n} bytes, only {} remain (truncated file?)",
                    self.bytes.len() - self.offset
                ),
            });
        }
        let slice = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(slice)
    }

    fn u8(&mut self, field: &'static str) -> Result<u8> {
        Ok(self.take(1, field)?[0])
    }

    fn u32(&mut self, field: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, field)?.try_into().expect("4 bytes")))
    }

    fn i32(&mut self, field: &'static str) -> Result<i32> {
        Ok(i32::from_le_bytes(self.take(4, field)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, field: &'static str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, field)?.try_into().expect("8 bytes")))
    }

    fn err(&self, field: &'static str, message: impl Into<String>) -> Error {
        Error::Parse {
            offset: self.offset as u64,
            field,
            message: message.into(),
        }
    }
}

pub(super) fn from_bytes(bytes: &[u8]) -> Result<SsdaDataset> {
    let mut r = Reader { bytes, offset: 0 };
    let magic = r.take(4, "magic")?;
    if magic != MAGIC {
        return Err(r.err("magic", format!("expected \"SSDA\", got {magic:?}")));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(r.err("version", format!("unsupported version {version}")));
    }
    let k = r.u32("num_classes")?;
    if k == 0 {
        return Err(r.err("num_classes", "K must be positive"));
    }

    let mut sections: Vec<(Vec<Sample>, Vec<Option<u32>>)> = Vec::with_capacity(4);
    for (si, &expected_tag) in SPLIT_TAGS.iter().enumerate() {
        let tag = r.u8("split_tag")?;
        if tag != expected_tag {
            return Err(r.err("split_tag", format!("expected tag {expected_tag}, got {tag}")));
        }
        let count = r.u64("sample_count")?;
        let domain = if si == 0 { Domain::Source } else { Domain::Target };
        let mut samples = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..count {
            let id = r.u64("sample_id")?;
            let raw_label = r.i32("label")?;
            let label = match raw_label {
                -1 => None,
                l if l >= 0 && (l as u32) < k => Some(l as u32),
                l => return Err(r.err("label", format!("label {l} out of range for K={k}"))),
            };
            let channels = r.u32("channels")? as usize;
            let height = r.u32("height")? as usize;
            let width = r.u32("width")? as usize;
            let numel = channels
                .checked_mul(height)
                .and_then(|v| v.checked_mul(width))
                .ok_or_else(|| r.err("pixels", "pixel count overflow"))?;
            let raw = r.take(numel * 4, "pixels")?;
            let data: Vec<f32> = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            let pixels = PixelBuf::new(channels, height, width, data)
                .map_err(|e| r.err("pixels", e.to_string()))?;
            // The unlabeled section keeps its label hidden.
            let open_label = if si == 2 { None } else { label };
            labels.push(label);
            samples.push(Sample {
                pixels,
                label: open_label,
                domain,
                id,
            });
        }
        sections.push((samples, labels));
    }
    if r.offset != bytes.len() {
        return Err(r.err("end", format!("{} trailing bytes", bytes.len() - r.offset)));
    }

    let (validation, _) = sections.pop().expect("four sections");
    let (unlabeled, hidden) = sections.pop().expect("four sections");
    let (target_labeled, _) = sections.pop().expect("four sections");
    let (source, _) = sections.pop().expect("four sections");
    SsdaDataset::assemble(source, target_labeled, unlabeled, hidden, validation, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic_ssda, GeneratorKind, ShiftKind, ShiftSpec};

    fn dataset() -> SsdaDataset {
        generate_synthetic_ssda(
            &ShiftSpec {
                generator: GeneratorKind::GaussianBlobs,
                num_classes: 3,
                samples_per_domain: 3 * 17,
                shift_kind: ShiftKind::Noise,
                shift_magnitude: 0.05,
                seed: 9,
            },
            1,
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ds = dataset();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.ssda");
        save_dataset(&ds, &path).unwrap();
        let loaded = load_dataset(&path).unwrap();
        assert_eq!(ds, loaded);
        // Hidden labels survive the trip without being opened.
        assert_eq!(loaded.hidden_label_reads(), 0);
        assert!(loaded.target_unlabeled().iter().all(|s| s.label.is_none()));
        assert_eq!(ds.checksum(), loaded.checksum());
    }

    #[test]
    fn truncated_file_is_rejected_wholesale() {
        let ds = dataset();
        let bytes = to_bytes(&ds);
        for cut in [bytes.len() - 1, bytes.len() / 2, 10] {
            let err = from_bytes(&bytes[..cut]).unwrap_err();
            match err {
                Error::Parse { .. } => {}
                other => panic!("expected parse error, got {other:?}"),
            }
        }
    }

    #[test]
    fn zero_class_header_fails_before_samples() {
        let ds = dataset();
        let mut bytes = to_bytes(&ds);
        bytes[8..12].copy_from_slice(&0u32.to_le_bytes());
        let err = from_bytes(&bytes).unwrap_err();
        match err {
            Error::Parse { offset, field, .. } => {
                assert_eq!(field, "num_classes");
                assert_eq!(offset, 12, "fails right after the K field");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn bad_magic_and_trailing_bytes_are_named() {
        let ds = dataset();
        let mut bytes = to_bytes(&ds);
        bytes.push(0);
        assert!(matches!(
            from_bytes(&bytes),
            Err(Error::Parse { field: "end", .. })
        ));
        let mut bytes = to_bytes(&ds);
        bytes[0] = b'X';
        assert!(matches!(
            from_bytes(&bytes),
            Err(Error::Parse { field: "magic", .. })
        ));
    }
}
