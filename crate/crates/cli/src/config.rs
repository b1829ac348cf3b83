use std::path::{Path, PathBuf};

use imfmix_core::dataset::SampleFormat;
use imfmix_core::eval::MAD_THRESHOLD;
use imfmix_core::memd::SiftConfig;
use imfmix_core::simulate::{MiProfile, SimConfig};
use imfmix_core::tfr::{default_bands, Band, WaveletConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::PipelineError;

/// Which synthetic corpus the `simulate` stage produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Simulation {
    /// Two-run wrist motor-imagery session.
    Mi(MiProfile),
    /// Single-run rhythm-sum corpus; the clean version is saved next to it.
    Es(SimConfig),
}

impl Default for Simulation {
    fn default() -> Self {
        Simulation::Mi(MiProfile::good_performer())
    }
}

/// Everything a pipeline run depends on apart from the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Existing dataset directory. When absent, stages read the dataset
    /// written by `simulate` under the output directory.
    pub input: Option<PathBuf>,
    pub simulation: Simulation,
    /// Root seed; see [`derive_seed`].
    pub seed: u64,
    pub sample_format: SampleFormat,
    pub sift: SiftConfig,
    pub wavelet: WaveletConfig,
    pub bands: Vec<Band>,
    pub pcts: Vec<f64>,
    pub reps: usize,
    pub train_run: u32,
    pub test_run: u32,
    pub segment: String,
    /// How many decomposed trials get PGM exports of every IMF image.
    pub image_trials: usize,
    pub mad_threshold: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            input: None,
            simulation: Simulation::default(),
            seed: 1,
            sample_format: SampleFormat::F64,
            sift: SiftConfig::default(),
            wavelet: WaveletConfig::default(),
            bands: default_bands(),
            pcts: vec![2.5, 5.0, 7.5, 10.0, 12.5, 25.0, 37.5, 50.0],
            reps: 100,
            train_run: 1,
            test_run: 2,
            segment: "mi".into(),
            image_trials: 1,
            mad_threshold: MAD_THRESHOLD,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Config {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        serde_json::from_str(&text).map_err(|e| PipelineError::Config {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }

    /// Lower-case hex SHA-256 of the compact JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serialises");
        hex(&Sha256::digest(bytes))
    }
}

/// Seed of a named stage: the first eight bytes, little endian, of
/// SHA-256 over `"<root>:<stage>"`.
pub fn derive_seed(root: u64, stage: &str) -> u64 {
    let digest = Sha256::digest(format!("{root}:{stage}").as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_differ_by_stage_and_root() {
        let a = derive_seed(7, "simulate");
        assert_eq!(a, derive_seed(7, "simulate"));
        assert_ne!(a, derive_seed(7, "augment"));
        assert_ne!(a, derive_seed(8, "simulate"));
    }

    #[test]
    fn config_json_round_trip() {
        let cfg = PipelineConfig::default();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        assert!(text.contains("\"kind\": \"mi\""));
        let back: PipelineConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        assert_eq!(cfg.hash().len(), 64);
    }

    #[test]
    fn partial_config_fills_defaults() {
        let cfg: PipelineConfig =
            serde_json::from_str(r#"{"seed": 5, "simulation": {"kind": "es", "snr_db": 0.0}}"#).unwrap();
        assert_eq!(cfg.seed, 5);
        assert_eq!(cfg.reps, 100);
        match cfg.simulation {
            Simulation::Es(s) => {
                assert_eq!(s.snr_db, Some(0.0));
                assert_eq!(s.channels.len(), 19);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
