//! On-disk tensors: a JSON manifest plus a row-major little-endian `f32` blob.
//!
//! ```text
//! <stem>.json   { "kind", "seed", "hyperparameters", "tensors": [{name, rows, cols, file, offset}] }
//! <stem>.bin    concatenated f32 LE values, `offset` in bytes
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{DenseMatrix, Parameters};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub file: String,
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub kind: String,
    pub seed: u64,
    pub hyperparameters: serde_json::Value,
    pub tensors: Vec<TensorEntry>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `tensors` under `dir/<stem>.{json,bin}` and returns the manifest path.
pub fn save_tensors(
    dir: &Path,
    stem: &str,
    kind: &str,
    seed: u64,
    hyperparameters: serde_json::Value,
    tensors: &[(String, &DenseMatrix)],
) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let blob_name = format!("{stem}.bin");
    let mut blob = Vec::new();
    let mut entries = Vec::with_capacity(tensors.len());
    for (name, m) in tensors {
        entries.push(TensorEntry {
            name: name.clone(),
            rows: m.rows(),
            cols: m.cols(),
            file: blob_name.clone(),
            offset: blob.len() as u64,
        });
        for &v in m.as_slice() {
            blob.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let blob_path = dir.join(&blob_name);
    fs::write(&blob_path, &blob).map_err(|e| Error::io(&blob_path, e))?;
    let manifest = CheckpointManifest {
        kind: kind.to_string(),
        seed,
        hyperparameters,
        tensors: entries,
    };
    let path = dir.join(format!("{stem}.json"));
    write_json(&path, &manifest)?;
    Ok(path)
}

/// Reads a manifest and all tensors it references.
pub fn load_tensors(manifest_path: &Path) -> Result<(CheckpointManifest, Vec<DenseMatrix>)> {
    let manifest: CheckpointManifest = read_json(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let mut blobs: Vec<(String, Vec<u8>)> = Vec::new();
    let mut out = Vec::with_capacity(manifest.tensors.len());
    for t in &manifest.tensors {
        if !blobs.iter().any(|(f, _)| f == &t.file) {
            let p = dir.join(&t.file);
            let bytes = fs::read(&p).map_err(|e| Error::io(&p, e))?;
            blobs.push((t.file.clone(), bytes));
        }
        let bytes = &blobs.iter().find(|(f, _)| f == &t.file).expect("loaded").1;
        let start = t.offset as usize;
        let end = start + 4 * t.rows * t.cols;
        if end > bytes.len() {
            return Err(Error::Input {
                source_name: t.file.clone(),
                line: 0,
                message: format!("tensor `{}` runs past the end of the blob", t.name),
            });
        }
        let data = bytes[start..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        out.push(DenseMatrix::from_vec(t.rows, t.cols, data)?);
    }
    Ok((manifest, out))
}

/// Flattens a parameter set into one `1 × n` tensor per slot, named `t<i>`.
pub fn parameter_tensors<P: Parameters>(p: &P) -> Vec<(String, DenseMatrix)> {
    p.tensors()
        .into_iter()
        .enumerate()
        .map(|(i, t)| {
            let m = DenseMatrix::from_vec(1, t.len(), t.to_vec()).expect("length matches");
            (format!("t{i}"), m)
        })
        .collect()
}

/// Copies loaded tensors into a parameter set of the same layout.
pub fn assign_parameter_tensors<P: Parameters>(p: &mut P, tensors: &[DenseMatrix]) -> Result<()> {
    let mut slots = p.tensors_mut();
    if slots.len() != tensors.len() {
        return Err(Error::contract(format!(
            "checkpoint has {} tensors, model expects {}",
            tensors.len(),
            slots.len()
        )));
    }
    for (i, (slot, t)) in slots.iter_mut().zip(tensors).enumerate() {
        if slot.len() != t.as_slice().len() {
            return Err(Error::contract(format!(
                "checkpoint tensor t{i} has the wrong length"
            )));
        }
        slot.copy_from_slice(t.as_slice());
    }
    Ok(())
}
