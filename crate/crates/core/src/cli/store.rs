//! On-disk layout of datasets and models.
//!
//! A dataset directory holds `manifest.txt` and one `traces/<id>.trace` file
//! per manifest entry. A model directory holds `model.ckpt` and `model.meta`,
//! the latter recording the transform, the label mode and the input
//! standardization.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::eval::Standardizer;
use crate::imaging::TransformKind;
use crate::kv;
use crate::nn::{checkpoint, Network};
use crate::traces::{parse_manifest, parse_trace_file, LabeledDataset, Provenance, Trace};

pub const MANIFEST: &str = "manifest.txt";
pub const TRACE_DIR: &str = "traces";
pub const CHECKPOINT: &str = "model.ckpt";
pub const META: &str = "model.meta";

pub fn read_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// File names under `dir`, sorted.
pub fn list_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn trace_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(TRACE_DIR).join(format!("{id}.trace"))
}

pub fn write_dataset(dir: &Path, data: &LabeledDataset) -> Result<()> {
    for t in &data.traces {
        write(&trace_path(dir, &t.id), t.to_file_string())?;
    }
    write(&dir.join(MANIFEST), data.manifest())
}

/// Loads a dataset written by [`write_dataset`]. Labels come from the trace
/// files and must agree with the manifest.
pub fn read_dataset(dir: &Path) -> Result<LabeledDataset> {
    let manifest = parse_manifest(&read_string(&dir.join(MANIFEST))?)?;
    let mut traces = Vec::with_capacity(manifest.entries.len());
    for entry in &manifest.entries {
        let path = trace_path(dir, &entry.id);
        let mut trace: Trace = parse_trace_file(&read_string(&path)?, manifest.trace_length)?;
        if trace.id.is_empty() {
            trace.id = entry.id.clone();
        }
        if trace.label != entry.label {
            return Err(Error::param(
                "traces",
                format!("{}: label {} disagrees with manifest label {}", path.display(), trace.label, entry.label),
            ));
        }
        traces.push(trace);
    }
    LabeledDataset::new(traces, manifest.trace_length, manifest.seed, Provenance::Ingested)
}

/// What a trained model expects of its inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelMeta {
    pub transform: TransformKind,
    pub binary: bool,
    pub norm: Standardizer,
}

impl ModelMeta {
    fn to_kv(&self) -> String {
        format!("transform = {}\nbinary = {}\n{}", self.transform, self.binary, self.norm.to_kv())
    }

    fn from_kv(text: &str) -> Result<Self> {
        let map = kv::parse(text)?;
        let transform = map
            .get("transform")
            .ok_or_else(|| Error::param("cli", "model.meta lacks `transform`"))?
            .parse()?;
        let binary = kv::field(&map, "binary", "cli")?.unwrap_or(false);
        Ok(ModelMeta {
            transform,
            binary,
            norm: Standardizer::from_kv(text)?,
        })
    }
}

pub fn write_model(dir: &Path, net: &Network, meta: &ModelMeta) -> Result<()> {
    write(&dir.join(CHECKPOINT), checkpoint::encode(net))?;
    write(&dir.join(META), meta.to_kv())
}

pub fn read_model(dir: &Path) -> Result<(Network, ModelMeta)> {
    let path = dir.join(CHECKPOINT);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let net = checkpoint::decode(&bytes)?;
    let meta = ModelMeta::from_kv(&read_string(&dir.join(META))?)?;
    Ok((net, meta))
}
