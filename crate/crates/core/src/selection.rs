//! Grey-level entropy of TF images and relevant-IMF selection.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::ImfDecomposition;
use crate::tfr::{grey_levels, MorletBank, TfImage, WaveletConfig};

/// Shannon entropy in bits of the 256-bin grey-level histogram of a power matrix.
///
/// Levels come from per-image min-max scaling, so a constant image has a single
/// occupied bin and zero entropy.
pub fn power_entropy(power: &Array2<f64>) -> f64 {
    if power.is_empty() {
        return 0.0;
    }
    let mut hist = [0usize; 256];
    for &g in grey_levels(power).iter() {
        hist[g as usize] += 1;
    }
    let n = power.len() as f64;
    hist.iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum::<f64>()
        .max(0.0)
}

pub fn image_entropy(img: &TfImage) -> f64 {
    power_entropy(&img.power)
}

/// Entropy of every (electrode, IMF) image and the chosen IMF indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub trial_id: u32,
    /// rows = electrodes, columns = IMF indices 1..=n_imfs
    #[serde(rename = "entropy_matrix")]
    pub entropy: Vec<Vec<f64>>,
    pub mean_entropy: f64,
    /// 1-based, ascending.
    #[serde(rename = "selected_indices")]
    pub selected: Vec<usize>,
}

impl SelectionReport {
    /// Builds the report from an electrodes × IMFs entropy matrix.
    pub fn from_entropy(trial_id: u32, entropy: Vec<Vec<f64>>) -> Result<Self> {
        let n_imfs = entropy.first().map_or(0, Vec::len);
        if n_imfs == 0 {
            return Err(Error::domain("selection needs at least one IMF and one electrode"));
        }
        if entropy.iter().any(|r| r.len() != n_imfs) {
            return Err(Error::domain("ragged entropy matrix"));
        }
        let cells = (entropy.len() * n_imfs) as f64;
        let mean_entropy = entropy.iter().flatten().sum::<f64>() / cells;
        let per_index = column_means(&entropy);
        let mut selected: Vec<usize> = per_index
            .iter()
            .enumerate()
            .filter(|(_, &m)| m > mean_entropy)
            .map(|(i, _)| i + 1)
            .collect();
        if selected.is_empty() {
            // lowest index wins ties
            let best = per_index
                .iter()
                .enumerate()
                .fold(0, |b, (i, &v)| if v > per_index[b] { i } else { b });
            selected.push(best + 1);
        }
        Ok(Self {
            trial_id,
            entropy,
            mean_entropy,
            selected,
        })
    }

    pub fn n_imfs(&self) -> usize {
        self.entropy.first().map_or(0, Vec::len)
    }

    /// Mean entropy across electrodes for each IMF index (position 0 = IMF 1).
    pub fn index_mean_entropy(&self) -> Vec<f64> {
        column_means(&self.entropy)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::load(path, e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| Error::load(path, e.to_string()))
    }
}

fn column_means(m: &[Vec<f64>]) -> Vec<f64> {
    let cols = m.first().map_or(0, Vec::len);
    (0..cols)
        .map(|j| m.iter().map(|r| r[j]).sum::<f64>() / m.len() as f64)
        .collect()
}

/// Entropy of every IMF image and the shared index set of one trial.
pub fn select_relevant_imfs(d: &ImfDecomposition, fs: f64, cfg: &WaveletConfig) -> Result<SelectionReport> {
    let (_, n) = d.shape();
    let mut bank = MorletBank::new(fs, n, cfg)?;
    select_with_bank(d, &mut bank)
}

/// [`select_relevant_imfs`] reusing a bank built for the decomposition length.
pub fn select_with_bank(d: &ImfDecomposition, bank: &mut MorletBank) -> Result<SelectionReport> {
    if d.n_imfs() == 0 {
        return Err(Error::domain(format!(
            "trial {} has no IMFs to select from",
            d.source_trial_id
        )));
    }
    let (n_ch, _) = d.shape();
    let mut entropy = vec![vec![0.0; d.n_imfs()]; n_ch];
    for (j, imf) in d.imfs.iter().enumerate() {
        for (c, row) in imf.rows().into_iter().enumerate() {
            let x = row.to_vec();
            entropy[c][j] = image_entropy(&bank.image(&x)?);
        }
    }
    SelectionReport::from_entropy(d.source_trial_id, entropy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn entropy_reference_images() {
        assert_eq!(power_entropy(&Array2::from_elem((3, 4), 2.5)), 0.0);
        let half = array![[0.0, 0.0], [7.0, 7.0]];
        assert!((power_entropy(&half) - 1.0).abs() < 1e-12);
        let ramp = Array2::from_shape_fn((16, 16), |(r, c)| (r * 16 + c) as f64);
        assert!((power_entropy(&ramp) - 8.0).abs() < 1e-12);
    }

    #[test]
    fn criterion_picks_above_grand_mean() {
        let r = SelectionReport::from_entropy(0, vec![vec![1.0, 2.0, 3.0]]).unwrap();
        assert_eq!(r.selected, vec![3]);
        assert!((r.mean_entropy - 2.0).abs() < 1e-15);
        let flat = SelectionReport::from_entropy(0, vec![vec![2.0; 4]; 3]).unwrap();
        assert_eq!(flat.selected, vec![1]);
        assert!(SelectionReport::from_entropy(0, vec![]).is_err());
    }

    #[test]
    fn cross_electrode_average() {
        // index 1 high on one electrode only, index 2 high on average
        let r = SelectionReport::from_entropy(4, vec![vec![6.0, 4.0, 1.0], vec![0.0, 4.0, 1.0]]).unwrap();
        assert_eq!(r.index_mean_entropy(), vec![3.0, 4.0, 1.0]);
        assert_eq!(r.selected, vec![1, 2]);
    }

    #[test]
    fn json_round_trip() {
        let r = SelectionReport::from_entropy(9, vec![vec![1.5, 0.5]]).unwrap();
        let text = serde_json::to_string(&r).unwrap();
        assert!(text.contains("selected_indices") && text.contains("entropy_matrix"));
        let back: SelectionReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
    }
}
