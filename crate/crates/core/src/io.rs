//! Descriptor file formats and dataset manifests.
//!
//! Binary format (little-endian throughout):
//!
//! ```text
//! magic "NBD1"
//! u32 dim
//! u32 bag_count
//! per bag:
//!   u32 label
//!   u32 descriptor_count
//!   u16 image_id byte length, then that many UTF-8 bytes
//!   descriptor_count * dim f32 values, row-major
//! ```
//!
//! Write -> read -> write round-trips are byte-identical.
//!
//! CSV ingest: header `image_id,label,v0,...,v{dim-1}`, one descriptor
//! per row. Consecutive rows with the same (image_id, label) form one
//! bag. No quoting; image ids must not contain commas or line breaks.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataset::{ClassId, Descriptor, DescriptorBag, DomainDataset};

pub const MAGIC: [u8; 4] = *b"NBD1";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("malformed descriptor file: {0}")]
    Format(String),
    #[error("malformed manifest {path}: {reason}")]
    Manifest { path: PathBuf, reason: String },
    #[error("cannot encode dataset: {0}")]
    Encode(String),
}

fn format_err<T>(msg: impl Into<String>) -> Result<T, IoError> {
    Err(IoError::Format(msg.into()))
}

// ---------------------------------------------------------------------------
// binary format

pub fn write_binary(ds: &DomainDataset, w: &mut impl Write) -> Result<(), IoError> {
    if ds.bags.len() > u32::MAX as usize {
        return Err(IoError::Encode("too many bags for u32 count".into()));
    }
    w.write_all(&MAGIC)?;
    w.write_all(&(ds.dim as u32).to_le_bytes())?;
    w.write_all(&(ds.bags.len() as u32).to_le_bytes())?;
    for bag in &ds.bags {
        if bag.image_id.len() > u16::MAX as usize {
            return Err(IoError::Encode(format!(
                "image id of {} bytes exceeds the u16 length field",
                bag.image_id.len()
            )));
        }
        if bag.descriptors.len() > u32::MAX as usize {
            return Err(IoError::Encode("too many descriptors for u32 count".into()));
        }
        w.write_all(&bag.label.to_le_bytes())?;
        w.write_all(&(bag.descriptors.len() as u32).to_le_bytes())?;
        w.write_all(&(bag.image_id.len() as u16).to_le_bytes())?;
        w.write_all(bag.image_id.as_bytes())?;
        for d in &bag.descriptors {
            if d.dim() != ds.dim {
                return Err(IoError::Encode(format!(
                    "bag '{}' holds a descriptor of dim {}, dataset dim is {}",
                    bag.image_id,
                    d.dim(),
                    ds.dim
                )));
            }
            for v in &d.values {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

/// Serializes to an in-memory buffer. Also the basis of content hashes.
pub fn to_bytes(ds: &DomainDataset) -> Result<Vec<u8>, IoError> {
    let mut buf = Vec::new();
    write_binary(ds, &mut buf)?;
    Ok(buf)
}

/// Reads the binary format. `name` becomes the dataset/domain name;
/// `label_set` overrides the inferred one (sorted unique labels seen)
/// when a manifest supplies it.
pub fn read_binary(
    r: &mut impl Read,
    name: &str,
    label_set: Option<Vec<ClassId>>,
) -> Result<DomainDataset, IoError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != MAGIC {
        return format_err("bad magic, not an NBD1 file");
    }
    let dim = read_u32(r)? as usize;
    let bag_count = read_u32(r)?;
    let mut ds = DomainDataset::new(name, Vec::new(), dim);
    for _ in 0..bag_count {
        let label = read_u32(r)?;
        let desc_count = read_u32(r)?;
        let id_len = read_u16(r)? as usize;
        let mut id_bytes = vec![0u8; id_len];
        r.read_exact(&mut id_bytes)?;
        let image_id = match String::from_utf8(id_bytes) {
            Ok(s) => s,
            Err(_) => return format_err("image id is not valid UTF-8"),
        };
        let total = desc_count as usize * dim;
        let mut raw = vec![0u8; total * 4];
        r.read_exact(&mut raw)?;
        let mut descriptors = Vec::with_capacity(desc_count as usize);
        for chunk in raw.chunks_exact(dim * 4) {
            let values = chunk
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            descriptors.push(Descriptor::new(values));
        }
        ds.bags.push(DescriptorBag::new(descriptors, label, name, image_id));
    }
    // reject trailing garbage so round-trips stay honest
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return format_err("trailing bytes after final bag");
    }
    ds.label_set = label_set.unwrap_or_else(|| inferred_label_set(&ds));
    Ok(ds)
}

fn inferred_label_set(ds: &DomainDataset) -> Vec<ClassId> {
    let mut labels: Vec<ClassId> = ds.bags.iter().map(|b| b.label).collect();
    labels.sort_unstable();
    labels.dedup();
    labels
}

fn read_u32(r: &mut impl Read) -> Result<u32, IoError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u16(r: &mut impl Read) -> Result<u16, IoError> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}

/// Hex SHA-256 of the dataset's binary serialization. Reports embed it
/// so a rerun can prove it saw identical data.
pub fn content_hash(ds: &DomainDataset) -> Result<String, IoError> {
    let bytes = to_bytes(ds)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// CSV format

pub fn write_csv(ds: &DomainDataset, w: &mut impl Write) -> Result<(), IoError> {
    let header: Vec<String> = ["image_id".to_string(), "label".to_string()]
        .into_iter()
        .chain((0..ds.dim).map(|i| format!("v{i}")))
        .collect();
    writeln!(w, "{}", header.join(","))?;
    for bag in &ds.bags {
        if bag.image_id.contains([',', '\n', '\r', '"']) {
            return Err(IoError::Encode(format!(
                "image id '{}' contains characters the CSV format cannot carry",
                bag.image_id
            )));
        }
        for d in &bag.descriptors {
            if d.dim() != ds.dim {
                return Err(IoError::Encode("descriptor dim differs from dataset dim".into()));
            }
            let mut line = String::with_capacity(16 + 12 * ds.dim);
            line.push_str(&bag.image_id);
            line.push(',');
            line.push_str(&bag.label.to_string());
            for v in &d.values {
                line.push(',');
                // shortest representation that round-trips f32
                line.push_str(&format!("{v}"));
            }
            writeln!(w, "{line}")?;
        }
    }
    Ok(())
}

pub fn read_csv(
    r: &mut impl Read,
    name: &str,
    label_set: Option<Vec<ClassId>>,
) -> Result<DomainDataset, IoError> {
    let mut text = String::new();
    r.read_to_string(&mut text)?;
    let mut lines = text.lines();
    let header = match lines.next() {
        Some(h) => h,
        None => return format_err("empty CSV file"),
    };
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 3 || cols[0] != "image_id" || cols[1] != "label" {
        return format_err("CSV header must start with image_id,label,v0,...");
    }
    let dim = cols.len() - 2;
    for (i, c) in cols[2..].iter().enumerate() {
        if *c != format!("v{i}") {
            return format_err(format!("unexpected CSV value column '{c}'"));
        }
    }
    let mut ds = DomainDataset::new(name, Vec::new(), dim);
    let mut current: Option<DescriptorBag> = None;
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + 2 {
            return format_err(format!(
                "line {}: expected {} fields, got {}",
                lineno + 2,
                dim + 2,
                fields.len()
            ));
        }
        let image_id = fields[0];
        let label: ClassId = fields[1]
            .parse()
            .map_err(|_| IoError::Format(format!("line {}: bad label '{}'", lineno + 2, fields[1])))?;
        let mut values = Vec::with_capacity(dim);
        for f in &fields[2..] {
            let v: f32 = f.parse().map_err(|_| {
                IoError::Format(format!("line {}: bad value '{f}'", lineno + 2))
            })?;
            values.push(v);
        }
        let start_new = match &current {
            Some(bag) => bag.image_id != image_id || bag.label != label,
            None => true,
        };
        if start_new {
            if let Some(bag) = current.take() {
                ds.bags.push(bag);
            }
            current = Some(DescriptorBag::new(Vec::new(), label, name, image_id));
        }
        current.as_mut().unwrap().descriptors.push(Descriptor::new(values));
    }
    if let Some(bag) = current.take() {
        ds.bags.push(bag);
    }
    ds.label_set = label_set.unwrap_or_else(|| inferred_label_set(&ds));
    Ok(ds)
}

// ---------------------------------------------------------------------------
// paths and manifests

/// Loads one descriptor file, dispatching on extension: `.csv` is the
/// text path, everything else the binary format.
pub fn load_descriptor_file(
    path: &Path,
    name: &str,
    label_set: Option<Vec<ClassId>>,
) -> Result<DomainDataset, IoError> {
    let mut file = fs::File::open(path)?;
    let is_csv = path.extension().map(|e| e.eq_ignore_ascii_case("csv")).unwrap_or(false);
    if is_csv {
        read_csv(&mut file, name, label_set)
    } else {
        read_binary(&mut io::BufReader::new(file), name, label_set)
    }
}

pub fn save_binary(ds: &DomainDataset, path: &Path) -> Result<(), IoError> {
    let mut file = io::BufWriter::new(fs::File::create(path)?);
    write_binary(ds, &mut file)?;
    file.flush()?;
    Ok(())
}

pub fn save_csv(ds: &DomainDataset, path: &Path) -> Result<(), IoError> {
    let mut file = io::BufWriter::new(fs::File::create(path)?);
    write_csv(ds, &mut file)?;
    file.flush()?;
    Ok(())
}

/// Plain-text dataset manifest:
///
/// ```text
/// name: amazon
/// labels: backpack,bike,monitor
/// file: amazon.nbd
/// file: amazon_extra.csv
/// ```
///
/// Label position defines the class id (first label = class 1). `file`
/// paths are resolved relative to the manifest location.
#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub name: String,
    pub labels: Vec<String>,
    pub files: Vec<PathBuf>,
}

impl Manifest {
    pub fn label_set(&self) -> Vec<ClassId> {
        (1..=self.labels.len() as ClassId).collect()
    }
}

pub fn read_manifest(path: &Path) -> Result<Manifest, IoError> {
    let text = fs::read_to_string(path)?;
    let mut name = None;
    let mut labels: Option<Vec<String>> = None;
    let mut files = Vec::new();
    let err = |reason: &str| IoError::Manifest { path: path.to_path_buf(), reason: reason.into() };
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once(':').ok_or_else(|| err("expected 'key: value'"))?;
        let value = value.trim();
        match key.trim() {
            "name" => name = Some(value.to_string()),
            "labels" => {
                labels = Some(value.split(',').map(|l| l.trim().to_string()).collect());
            }
            "file" => files.push(PathBuf::from(value)),
            other => return Err(err(&format!("unknown key '{other}'"))),
        }
    }
    let name = name.ok_or_else(|| err("missing 'name'"))?;
    let labels = labels.ok_or_else(|| err("missing 'labels'"))?;
    if labels.is_empty() || labels.iter().any(|l| l.is_empty()) {
        return Err(err("labels must be a non-empty comma-separated list"));
    }
    if files.is_empty() {
        return Err(err("at least one 'file' entry required"));
    }
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let files = files.into_iter().map(|f| base.join(f)).collect();
    Ok(Manifest { name, labels, files })
}

pub fn write_manifest(m: &Manifest, path: &Path) -> Result<(), IoError> {
    let mut out = String::new();
    out.push_str(&format!("name: {}\n", m.name));
    out.push_str(&format!("labels: {}\n", m.labels.join(",")));
    for f in &m.files {
        out.push_str(&format!("file: {}\n", f.display()));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Loads and merges all files of a manifest into one dataset.
pub fn load_manifest_dataset(path: &Path) -> Result<DomainDataset, IoError> {
    let manifest = read_manifest(path)?;
    let label_set = manifest.label_set();
    let mut merged: Option<DomainDataset> = None;
    for file in &manifest.files {
        let part = load_descriptor_file(file, &manifest.name, Some(label_set.clone()))?;
        match &mut merged {
            None => merged = Some(part),
            Some(ds) => {
                if part.dim != ds.dim {
                    return Err(IoError::Format(format!(
                        "manifest files disagree on dim: {} vs {}",
                        ds.dim, part.dim
                    )));
                }
                ds.bags.extend(part.bags);
            }
        }
    }
    Ok(merged.expect("manifest guarantees at least one file"))
}

/// Per-class map of label names from a manifest.
pub fn label_names(m: &Manifest) -> BTreeMap<ClassId, String> {
    m.labels.iter().enumerate().map(|(i, l)| (i as ClassId + 1, l.clone())).collect()
}
