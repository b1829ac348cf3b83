//! Dataset directory format.
//!
//! ```text
//! <dir>/manifest.json
//! <dir>/run<r>_trial<id>.csv | .f64
//! ```
//!
//! CSV files hold one row per sample and one column per channel, no header.
//! `.f64` files hold raw little-endian doubles, column-major over the same
//! samples × channels matrix, so each channel's samples are contiguous.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{ClassLabel, DatasetMetadata, MultichannelSignal, Segment, Trial, TrialDataset};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleFormat {
    Csv,
    #[default]
    F64,
}

impl SampleFormat {
    fn extension(self) -> &'static str {
        match self {
            SampleFormat::Csv => "csv",
            SampleFormat::F64 => "f64",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub subject: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub fs: f64,
    pub channel_labels: Vec<String>,
    pub trials: Vec<TrialEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialEntry {
    pub trial_id: u32,
    pub run_id: u32,
    pub label: ClassLabel,
    #[serde(default)]
    pub segments: BTreeMap<String, Segment>,
    pub file: String,
    /// Per-trial sampling rate; must agree with the manifest rate when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fs: Option<f64>,
}

pub fn save_dataset(d: &TrialDataset, dir: &Path, format: SampleFormat) -> Result<()> {
    fs::create_dir_all(dir)?;
    let fs_hz = d.fs().unwrap_or(1.0);
    let mut entries = Vec::with_capacity(d.len());
    for t in d.trials() {
        let file = format!("run{}_trial{}.{}", t.run_id, t.trial_id, format.extension());
        let path = dir.join(&file);
        match format {
            SampleFormat::Csv => write_csv(&path, &t.signal)?,
            SampleFormat::F64 => write_f64(&path, &t.signal)?,
        }
        entries.push(TrialEntry {
            trial_id: t.trial_id,
            run_id: t.run_id,
            label: t.label,
            segments: t.segments.clone(),
            file,
            fs: None,
        });
    }
    let manifest = Manifest {
        subject: d.metadata.subject.clone(),
        description: d.metadata.description.clone(),
        fs: fs_hz,
        channel_labels: d.channel_labels().to_vec(),
        trials: entries,
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(dir.join(MANIFEST_FILE), text)?;
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<TrialDataset> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path)
        .map_err(|e| Error::load(&manifest_path, e.to_string()))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| Error::load(&manifest_path, format!("malformed manifest: {e}")))?;
    if !(manifest.fs.is_finite() && manifest.fs > 0.0) {
        return Err(Error::load(&manifest_path, "fs must be positive"));
    }
    let n_ch = manifest.channel_labels.len();
    if n_ch == 0 {
        return Err(Error::load(&manifest_path, "no channels declared"));
    }

    let mut trials = Vec::with_capacity(manifest.trials.len());
    for entry in &manifest.trials {
        let path = dir.join(&entry.file);
        let fail = |reason: String| Error::load(&path, format!("trial {}: {reason}", entry.trial_id));
        if let Some(fs_t) = entry.fs {
            if fs_t != manifest.fs {
                return Err(fail(format!(
                    "sampled at {fs_t} Hz but the dataset is {} Hz",
                    manifest.fs
                )));
            }
        }
        let data = match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => read_csv(&path, n_ch).map_err(fail)?,
            Some("f64") => read_f64(&path, n_ch).map_err(fail)?,
            other => return Err(fail(format!("unsupported data file extension {other:?}"))),
        };
        if data.iter().any(|v| !v.is_finite()) {
            return Err(fail("non-finite sample".into()));
        }
        let signal = MultichannelSignal::new(data, manifest.fs, manifest.channel_labels.clone())
            .map_err(|e| fail(e.to_string()))?;
        let trial = Trial::new(
            signal,
            entry.label,
            entry.run_id,
            entry.trial_id,
            entry.segments.clone(),
        )
        .map_err(|e| fail(e.to_string()))?;
        trials.push(trial);
    }
    TrialDataset::new(
        trials,
        DatasetMetadata {
            subject: manifest.subject,
            description: manifest.description,
        },
    )
    .map_err(|e| Error::load(&manifest_path, e.to_string()))
}

fn write_csv(path: &PathBuf, s: &MultichannelSignal) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    let data = s.data();
    for t in 0..s.n_samples() {
        for c in 0..s.n_channels() {
            if c > 0 {
                w.write_all(b",")?;
            }
            // Display for f64 prints the shortest string that parses back to the same bits.
            write!(w, "{}", data[[c, t]])?;
        }
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn read_csv(path: &Path, n_ch: usize) -> std::result::Result<Array2<f64>, String> {
    let file = fs::File::open(path).map_err(|e| e.to_string())?;
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); n_ch];
    for (row, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| e.to_string())?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != n_ch {
            return Err(format!(
                "row {row} has {} columns, manifest declares {n_ch} channels",
                fields.len()
            ));
        }
        for (col, field) in fields.iter().enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| format!("row {row}, column {col}: cannot parse {field:?}"))?;
            columns[col].push(v);
        }
    }
    let n = columns[0].len();
    let flat: Vec<f64> = columns.into_iter().flatten().collect();
    Array2::from_shape_vec((n_ch, n), flat).map_err(|e| e.to_string())
}

fn write_f64(path: &PathBuf, s: &MultichannelSignal) -> Result<()> {
    let mut bytes = Vec::with_capacity(s.n_channels() * s.n_samples() * 8);
    for c in 0..s.n_channels() {
        for v in s.channel(c) {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, bytes)?;
    Ok(())
}

fn read_f64(path: &Path, n_ch: usize) -> std::result::Result<Array2<f64>, String> {
    let bytes = fs::read(path).map_err(|e| e.to_string())?;
    if bytes.len() % 8 != 0 {
        return Err(format!("{} bytes is not a whole number of doubles", bytes.len()));
    }
    let values = bytes.len() / 8;
    if values % n_ch != 0 {
        return Err(format!(
            "{values} samples do not divide into {n_ch} channels"
        ));
    }
    let flat: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Array2::from_shape_vec((n_ch, values / n_ch), flat).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_dataset() -> TrialDataset {
        let labels = vec!["C3".to_string(), "C4".to_string()];
        let mk = |id: u32, label, scale: f64| {
            let data = Array2::from_shape_fn((2, 6), |(c, t)| {
                scale * (t as f64 * 0.37 + c as f64).sin() / 3.0
            });
            let s = MultichannelSignal::new(data, 250.0, labels.clone()).unwrap();
            let mut segs = BTreeMap::new();
            segs.insert("mi".to_string(), Segment::new(2, 6));
            Trial::new(s, label, 1, id, segs).unwrap()
        };
        TrialDataset::new(
            vec![
                mk(0, ClassLabel::LeftWrist, 1.0),
                mk(1, ClassLabel::RightWrist, 1e-7),
            ],
            DatasetMetadata {
                subject: "S00".into(),
                description: "tiny".into(),
            },
        )
        .unwrap()
    }

    #[test]
    fn round_trip_both_formats_bit_exact() {
        let d = tiny_dataset();
        for format in [SampleFormat::Csv, SampleFormat::F64] {
            let dir = tempfile::tempdir().unwrap();
            save_dataset(&d, dir.path(), format).unwrap();
            let back = load_dataset(dir.path()).unwrap();
            assert_eq!(back, d, "{format:?}");
        }
    }

    #[test]
    fn column_count_mismatch_is_reported() {
        let d = tiny_dataset();
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&d, dir.path(), SampleFormat::Csv).unwrap();
        let mpath = dir.path().join(MANIFEST_FILE);
        let mut m: Manifest = serde_json::from_str(&fs::read_to_string(&mpath).unwrap()).unwrap();
        m.channel_labels.push("Cz".into());
        fs::write(&mpath, serde_json::to_string(&m).unwrap()).unwrap();
        let err = load_dataset(dir.path()).unwrap_err().to_string();
        assert!(err.contains("trial 0"), "{err}");
        assert!(err.contains("3 channels"), "{err}");
    }

    #[test]
    fn mixed_rates_and_non_finite_rejected() {
        let d = tiny_dataset();
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&d, dir.path(), SampleFormat::F64).unwrap();
        let mpath = dir.path().join(MANIFEST_FILE);
        let orig = fs::read_to_string(&mpath).unwrap();
        let mut m: Manifest = serde_json::from_str(&orig).unwrap();
        m.trials[1].fs = Some(500.0);
        fs::write(&mpath, serde_json::to_string(&m).unwrap()).unwrap();
        let err = load_dataset(dir.path()).unwrap_err().to_string();
        assert!(err.contains("trial 1") && err.contains("500"), "{err}");

        fs::write(&mpath, &orig).unwrap();
        let f = dir.path().join(&m.trials[0].file);
        let mut bytes = fs::read(&f).unwrap();
        bytes[..8].copy_from_slice(&f64::NAN.to_le_bytes());
        fs::write(&f, bytes).unwrap();
        let err = load_dataset(dir.path()).unwrap_err().to_string();
        assert!(err.contains("trial 0") && err.contains("non-finite"), "{err}");
    }

    #[test]
    fn malformed_manifest() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(MANIFEST_FILE), "{\"subject\": 3}").unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(Error::Load { .. })));
    }
}
