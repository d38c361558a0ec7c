//! On-disk datasets: a JSON-lines manifest plus one `DPX1` file per patch.
//!
//! Patch file layout: magic `DPX1`, rank as u8 (always 3), dims C, H, W as
//! u32 LE, then row-major f32 LE values. Each manifest line records the
//! SHA-256 of its patch file, verified on load.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tremor_tensor::Tensor;

use crate::error::{Error, Result};
use crate::pipeline::labels::Label;

pub const PATCH_MAGIC: &[u8; 4] = b"DPX1";
pub const MANIFEST_NAME: &str = "manifest.jsonl";
pub const PATCH_CHANNELS: usize = 6;

/// One labelled pre/post crop.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchExample {
    pub example_id: String,
    pub region_id: String,
    pub longitude: f64,
    pub label: Label,
    /// `[6, S, S]`, values in `[0, 1]`. Shared, never mutated.
    pub patch: Arc<Tensor<f32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub example_id: String,
    pub region_id: String,
    pub longitude: f64,
    pub label: Label,
    /// Patch file path relative to the manifest directory.
    pub patch: String,
    /// Hex SHA-256 of the patch file.
    pub checksum: String,
}

pub fn encode_patch(patch: &Tensor<f32>) -> Vec<u8> {
    let mut buf = Vec::with_capacity(17 + 4 * patch.len());
    buf.extend_from_slice(PATCH_MAGIC);
    buf.push(patch.rank() as u8);
    for &d in patch.shape() {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in patch.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

pub fn decode_patch(bytes: &[u8], location: &str) -> Result<Tensor<f32>> {
    let bad = |m: &str| Error::parse(location, m.to_string());
    if bytes.len() < 17 || &bytes[..4] != PATCH_MAGIC {
        return Err(bad("not a DPX1 patch"));
    }
    if bytes[4] != 3 {
        return Err(bad("patch rank must be 3"));
    }
    let dim = |i: usize| u32::from_le_bytes(bytes[5 + 4 * i..9 + 4 * i].try_into().unwrap()) as usize;
    let (c, h, w) = (dim(0), dim(1), dim(2));
    if c != PATCH_CHANNELS || h != w || h == 0 {
        return Err(bad(&format!("patch shape [{c}, {h}, {w}] is not [6, S, S]")));
    }
    if bytes.len() != 17 + 4 * c * h * w {
        return Err(bad("patch payload length does not match header"));
    }
    let data: Vec<f32> = bytes[17..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    if data.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(bad("patch values outside [0, 1]"));
    }
    Ok(Tensor::new(vec![c, h, w], data)?)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Checksum of the encoded patch, as stored in the manifest.
pub fn patch_checksum(patch: &Tensor<f32>) -> String {
    sha256_hex(&encode_patch(patch))
}

fn patch_file_name(example_id: &str) -> String {
    let safe: String = example_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect();
    format!("patches/{safe}.dpx")
}

/// Writes `examples` under `directory` and returns the manifest path.
pub fn write_dataset(examples: &[PatchExample], directory: &Path) -> Result<PathBuf> {
    let patch_dir = directory.join("patches");
    fs::create_dir_all(&patch_dir).map_err(|e| Error::io(&patch_dir, e))?;
    let manifest_path = directory.join(MANIFEST_NAME);
    let file = File::create(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let mut manifest = BufWriter::new(file);
    for ex in examples {
        let rel = patch_file_name(&ex.example_id);
        let bytes = encode_patch(&ex.patch);
        let path = directory.join(&rel);
        fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
        let entry = ManifestEntry {
            example_id: ex.example_id.clone(),
            region_id: ex.region_id.clone(),
            longitude: ex.longitude,
            label: ex.label,
            patch: rel,
            checksum: sha256_hex(&bytes),
        };
        let line = serde_json::to_string(&entry).expect("manifest entry serializes");
        writeln!(manifest, "{line}").map_err(|e| Error::io(&manifest_path, e))?;
    }
    manifest.flush().map_err(|e| Error::io(&manifest_path, e))?;
    Ok(manifest_path)
}

/// Parsed manifest whose patches are loaded on demand.
#[derive(Debug, Clone)]
pub struct DatasetReader {
    root: PathBuf,
    entries: Vec<ManifestEntry>,
}

impl DatasetReader {
    pub fn open(manifest: &Path) -> Result<Self> {
        if !manifest.exists() {
            return Err(Error::MissingFile(manifest.to_path_buf()));
        }
        let file = File::open(manifest).map_err(|e| Error::io(manifest, e))?;
        let mut entries = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(manifest, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: ManifestEntry = serde_json::from_str(&line)
                .map_err(|e| Error::parse(format!("{}:{}", manifest.display(), i + 1), e.to_string()))?;
            entries.push(entry);
        }
        let root = manifest.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(DatasetReader { root, entries })
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn patch_path(&self, entry: &ManifestEntry) -> PathBuf {
        self.root.join(&entry.patch)
    }

    /// Loads and validates one example.
    pub fn load(&self, index: usize) -> Result<PatchExample> {
        let entry = &self.entries[index];
        let path = self.patch_path(entry);
        if !path.exists() {
            return Err(Error::MissingFile(path));
        }
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        if sha256_hex(&bytes) != entry.checksum {
            return Err(Error::Integrity {
                example_id: entry.example_id.clone(),
            });
        }
        let patch = decode_patch(&bytes, &path.display().to_string())?;
        Ok(PatchExample {
            example_id: entry.example_id.clone(),
            region_id: entry.region_id.clone(),
            longitude: entry.longitude,
            label: entry.label,
            patch: Arc::new(patch),
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = Result<PatchExample>> + '_ {
        (0..self.entries.len()).map(|i| self.load(i))
    }
}

pub fn read_dataset(manifest: &Path) -> Result<Vec<PatchExample>> {
    DatasetReader::open(manifest)?.iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example(id: &str, value: f32) -> PatchExample {
        PatchExample {
            example_id: id.into(),
            region_id: "r".into(),
            longitude: 1.5,
            label: Label::Damaged,
            patch: Arc::new(Tensor::full(vec![6, 2, 2], value)),
        }
    }

    #[test]
    fn empty_dataset_gives_empty_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_dataset(&[], dir.path()).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "");
        assert!(read_dataset(&path).unwrap().is_empty());
    }

    #[test]
    fn corrupted_patch_names_example() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_dataset(&[example("a", 0.25), example("b", 0.5)], dir.path()).unwrap();
        let target = dir.path().join("patches/b.dpx");
        let mut bytes = fs::read(&target).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 0x01;
        fs::write(&target, bytes).unwrap();
        match read_dataset(&path) {
            Err(Error::Integrity { example_id }) => assert_eq!(example_id, "b"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_patch_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_dataset(&[example("a", 0.25)], dir.path()).unwrap();
        fs::remove_file(dir.path().join("patches/a.dpx")).unwrap();
        assert!(matches!(read_dataset(&path), Err(Error::MissingFile(_))));
    }

    #[test]
    fn bad_label_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_dataset(&[example("a", 0.25)], dir.path()).unwrap();
        let mut text = fs::read_to_string(&path).unwrap();
        text.push_str(&text.replace("\"damaged\"", "\"rubble\"").replace("\"a\"", "\"b\""));
        fs::write(&path, text).unwrap();
        match DatasetReader::open(&path) {
            Err(Error::Parse { location, .. }) => assert!(location.ends_with(":2"), "{location}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn patch_format_layout() {
        let t = Tensor::full(vec![6, 1, 1], 0.5f32);
        let b = encode_patch(&t);
        assert_eq!(&b[..5], b"DPX1\x03");
        assert_eq!(u32::from_le_bytes(b[5..9].try_into().unwrap()), 6);
        assert_eq!(b.len(), 17 + 24);
        assert_eq!(decode_patch(&b, "m").unwrap(), t);
        let wrong = encode_patch(&Tensor::full(vec![3, 1, 1], 0.5f32));
        assert!(decode_patch(&wrong, "m").is_err());
    }
}
