//! Binary export of decompositions.
//!
//! `trial_<id>.imf.f64`: three little-endian `u64` header words
//! `{n_channels, n_imfs, n_samples}`, then `n_imfs` IMF layers followed by the
//! residuum layer. Each layer is channels × samples, channel-major, as
//! little-endian `f64`.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::SiftConfig;
use crate::error::{Error, Result};
use crate::signal::ImfDecomposition;

pub const DECOMPOSITION_MANIFEST: &str = "decomposition.json";

pub fn imf_file_name(trial_id: u32) -> String {
    format!("trial_{trial_id}.imf.f64")
}

/// Sidecar describing a directory of decompositions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionManifest {
    pub sift_config: SiftConfig,
    pub trials: Vec<DecompositionEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionEntry {
    pub trial_id: u32,
    pub file: String,
    pub n_imfs: usize,
}

pub fn encode_decomposition(d: &ImfDecomposition) -> Vec<u8> {
    let (n_ch, n) = d.shape();
    let mut out = Vec::with_capacity(24 + (d.n_imfs() + 1) * n_ch * n * 8);
    for word in [n_ch as u64, d.n_imfs() as u64, n as u64] {
        out.extend_from_slice(&word.to_le_bytes());
    }
    for layer in d.imfs.iter().chain(std::iter::once(&d.residuum)) {
        for v in layer.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_decomposition(bytes: &[u8], trial_id: u32) -> std::result::Result<ImfDecomposition, String> {
    if bytes.len() < 24 {
        return Err("truncated header".into());
    }
    let word = |i: usize| u64::from_le_bytes(bytes[8 * i..8 * i + 8].try_into().expect("8 bytes")) as usize;
    let (n_ch, n_imfs, n) = (word(0), word(1), word(2));
    let layer_len = n_ch
        .checked_mul(n)
        .ok_or_else(|| "header overflows".to_string())?;
    let expected = (n_imfs + 1)
        .checked_mul(layer_len)
        .and_then(|v| v.checked_mul(8))
        .and_then(|v| v.checked_add(24))
        .ok_or_else(|| "header overflows".to_string())?;
    if bytes.len() != expected {
        return Err(format!(
            "header announces {n_imfs} IMFs of {n_ch}×{n} ({expected} bytes) but file has {} bytes",
            bytes.len()
        ));
    }
    let values: Vec<f64> = bytes[24..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let mut layers: Vec<Array2<f64>> = values
        .chunks_exact(layer_len.max(1))
        .take(n_imfs + 1)
        .map(|c| Array2::from_shape_vec((n_ch, n), c.to_vec()).expect("layer shape"))
        .collect();
    if layer_len == 0 {
        layers = vec![Array2::zeros((n_ch, n)); n_imfs + 1];
    }
    let residuum = layers.pop().expect("residuum layer");
    Ok(ImfDecomposition {
        imfs: layers,
        residuum,
        source_trial_id: trial_id,
    })
}

pub fn write_decomposition(dir: &Path, d: &ImfDecomposition) -> Result<String> {
    fs::create_dir_all(dir)?;
    let name = imf_file_name(d.source_trial_id);
    fs::write(dir.join(&name), encode_decomposition(d))?;
    Ok(name)
}

pub fn read_decomposition(path: &Path, trial_id: u32) -> Result<ImfDecomposition> {
    let bytes = fs::read(path).map_err(|e| Error::load(path, e.to_string()))?;
    decode_decomposition(&bytes, trial_id).map_err(|e| Error::load(path, e))
}

/// Writes every decomposition plus the JSON sidecar.
pub fn write_decomposition_dir(dir: &Path, cfg: &SiftConfig, decs: &[ImfDecomposition]) -> Result<()> {
    let mut trials = Vec::with_capacity(decs.len());
    for d in decs {
        let file = write_decomposition(dir, d)?;
        trials.push(DecompositionEntry {
            trial_id: d.source_trial_id,
            file,
            n_imfs: d.n_imfs(),
        });
    }
    let manifest = DecompositionManifest {
        sift_config: cfg.clone(),
        trials,
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(dir.join(DECOMPOSITION_MANIFEST), text)?;
    Ok(())
}

pub fn read_decomposition_dir(dir: &Path) -> Result<(SiftConfig, Vec<ImfDecomposition>)> {
    let mpath = dir.join(DECOMPOSITION_MANIFEST);
    let text = fs::read_to_string(&mpath).map_err(|e| Error::load(&mpath, e.to_string()))?;
    let manifest: DecompositionManifest =
        serde_json::from_str(&text).map_err(|e| Error::load(&mpath, e.to_string()))?;
    let mut decs = Vec::with_capacity(manifest.trials.len());
    for entry in &manifest.trials {
        let d = read_decomposition(&dir.join(&entry.file), entry.trial_id)?;
        if d.n_imfs() != entry.n_imfs {
            return Err(Error::load(
                dir.join(&entry.file),
                format!("manifest says {} IMFs, file has {}", entry.n_imfs, d.n_imfs()),
            ));
        }
        decs.push(d);
    }
    Ok((manifest.sift_config, decs))
}
