//! Signal containers shared by every stage of the pipeline.
//!
//! Samples are stored as `f64` in a channels × samples matrix. Channel order is
//! the order given at construction (the manifest order) and is never changed
//! implicitly.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// A sampled multichannel EEG segment in µV.
#[derive(Debug, Clone, PartialEq)]
pub struct MultichannelSignal {
    data: Array2<f64>,
    fs: f64,
    channel_labels: Vec<String>,
}

impl MultichannelSignal {
    pub fn new(data: Array2<f64>, fs: f64, channel_labels: Vec<String>) -> Result<Self> {
        if !(fs.is_finite() && fs > 0.0) {
            return Err(Error::InvalidSignal(format!(
                "sampling rate must be positive, got {fs}"
            )));
        }
        if data.nrows() != channel_labels.len() {
            return Err(Error::InvalidSignal(format!(
                "{} data rows but {} channel labels",
                data.nrows(),
                channel_labels.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            let (c, t) = (pos / data.ncols().max(1), pos % data.ncols().max(1));
            return Err(Error::InvalidSignal(format!(
                "non-finite sample at channel {c}, sample {t}"
            )));
        }
        // Rows must be contiguous so that `channel()` can hand out slices.
        let data = if data.is_standard_layout() {
            data
        } else {
            data.as_standard_layout().into_owned()
        };
        Ok(Self {
            data,
            fs,
            channel_labels,
        })
    }

    /// Builds a signal with generated labels `ch0`, `ch1`, ...
    pub fn unlabeled(data: Array2<f64>, fs: f64) -> Result<Self> {
        let labels = (0..data.nrows()).map(|c| format!("ch{c}")).collect();
        Self::new(data, fs, labels)
    }

    pub fn from_channels(channels: &[Vec<f64>], fs: f64, labels: Vec<String>) -> Result<Self> {
        let n = channels.first().map_or(0, Vec::len);
        if channels.iter().any(|c| c.len() != n) {
            return Err(Error::InvalidSignal("channels differ in length".into()));
        }
        let flat: Vec<f64> = channels.iter().flatten().copied().collect();
        let data = Array2::from_shape_vec((channels.len(), n), flat)
            .map_err(|e| Error::InvalidSignal(e.to_string()))?;
        Self::new(data, fs, labels)
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_data(self) -> Array2<f64> {
        self.data
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn channel_labels(&self) -> &[String] {
        &self.channel_labels
    }

    pub fn n_channels(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.data.ncols()
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        self.data
            .row(c)
            .to_slice()
            .expect("signal rows are contiguous")
    }

    pub fn channel_index(&self, label: &str) -> Option<usize> {
        self.channel_labels.iter().position(|l| l == label)
    }

    /// Same fs and labels, different samples.
    pub fn with_data(&self, data: Array2<f64>) -> Result<Self> {
        Self::new(data, self.fs, self.channel_labels.clone())
    }
}

/// Task class of a trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ClassLabel {
    RightWrist,
    LeftWrist,
    Class(u32),
}

impl ClassLabel {
    /// Short column name used in result tables (RW / LW / C<n>).
    pub fn short_name(&self) -> String {
        match self {
            ClassLabel::RightWrist => "RW".into(),
            ClassLabel::LeftWrist => "LW".into(),
            ClassLabel::Class(id) => format!("C{id}"),
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClassLabel::RightWrist => f.write_str("RIGHT_WRIST"),
            ClassLabel::LeftWrist => f.write_str("LEFT_WRIST"),
            ClassLabel::Class(id) => write!(f, "CLASS_{id}"),
        }
    }
}

impl FromStr for ClassLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "RIGHT_WRIST" | "RW" => Ok(ClassLabel::RightWrist),
            "LEFT_WRIST" | "LW" => Ok(ClassLabel::LeftWrist),
            other => other
                .strip_prefix("CLASS_")
                .and_then(|id| id.parse().ok())
                .map(ClassLabel::Class)
                .ok_or_else(|| Error::domain(format!("unknown class label {other:?}"))),
        }
    }
}

impl Serialize for ClassLabel {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ClassLabel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Half-open sample range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
}

impl Segment {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn range(&self) -> Range<usize> {
        self.start..self.end
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub signal: MultichannelSignal,
    pub label: ClassLabel,
    pub run_id: u32,
    pub trial_id: u32,
    pub segments: BTreeMap<String, Segment>,
}

impl Trial {
    pub fn new(
        signal: MultichannelSignal,
        label: ClassLabel,
        run_id: u32,
        trial_id: u32,
        segments: BTreeMap<String, Segment>,
    ) -> Result<Self> {
        let n = signal.n_samples();
        for (name, seg) in &segments {
            if seg.start >= seg.end || seg.end > n {
                return Err(Error::InvalidSignal(format!(
                    "segment {name:?} [{}, {}) outside trial {trial_id} of {n} samples",
                    seg.start, seg.end
                )));
            }
        }
        Ok(Self {
            signal,
            label,
            run_id,
            trial_id,
            segments,
        })
    }

    pub fn segment(&self, name: &str) -> Result<Segment> {
        self.segments.get(name).copied().ok_or_else(|| {
            Error::domain(format!(
                "trial {} has no segment named {name:?}",
                self.trial_id
            ))
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetMetadata {
    pub subject: String,
    #[serde(default)]
    pub description: String,
}

/// Labeled trials sharing sampling rate and montage.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialDataset {
    trials: Vec<Trial>,
    pub metadata: DatasetMetadata,
}

impl TrialDataset {
    pub fn new(trials: Vec<Trial>, metadata: DatasetMetadata) -> Result<Self> {
        if let Some(first) = trials.first() {
            let fs = first.signal.fs();
            let labels = first.signal.channel_labels();
            for t in &trials[1..] {
                if t.signal.fs() != fs {
                    return Err(Error::InvalidSignal(format!(
                        "trial {} sampled at {} Hz, expected {fs} Hz",
                        t.trial_id,
                        t.signal.fs()
                    )));
                }
                if t.signal.channel_labels() != labels {
                    return Err(Error::InvalidSignal(format!(
                        "trial {} has a different montage",
                        t.trial_id
                    )));
                }
            }
        }
        let mut seen = std::collections::HashSet::new();
        for t in &trials {
            if !seen.insert((t.run_id, t.trial_id)) {
                return Err(Error::InvalidSignal(format!(
                    "trial id {} repeated within run {}",
                    t.trial_id, t.run_id
                )));
            }
        }
        Ok(Self { trials, metadata })
    }

    pub fn trials(&self) -> &[Trial] {
        &self.trials
    }

    pub fn into_trials(self) -> Vec<Trial> {
        self.trials
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    pub fn fs(&self) -> Option<f64> {
        self.trials.first().map(|t| t.signal.fs())
    }

    pub fn channel_labels(&self) -> &[String] {
        self.trials
            .first()
            .map_or(&[], |t| t.signal.channel_labels())
    }

    pub fn trial(&self, trial_id: u32) -> Option<&Trial> {
        self.trials.iter().find(|t| t.trial_id == trial_id)
    }

    /// Trials of one run, order preserved.
    pub fn run(&self, run_id: u32) -> Result<TrialDataset> {
        let trials = self
            .trials
            .iter()
            .filter(|t| t.run_id == run_id)
            .cloned()
            .collect();
        TrialDataset::new(trials, self.metadata.clone())
    }

    pub fn run_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.trials.iter().map(|t| t.run_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Distinct labels in sorted order.
    pub fn classes(&self) -> Vec<ClassLabel> {
        let mut c: Vec<ClassLabel> = self.trials.iter().map(|t| t.label).collect();
        c.sort();
        c.dedup();
        c
    }
}

/// IMFs (fastest first) plus residuum, each with the shape of the source signal.
#[derive(Debug, Clone, PartialEq)]
pub struct ImfDecomposition {
    pub imfs: Vec<Array2<f64>>,
    pub residuum: Array2<f64>,
    pub source_trial_id: u32,
}

impl ImfDecomposition {
    pub fn n_imfs(&self) -> usize {
        self.imfs.len()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.residuum.dim()
    }

    /// IMF by 1-based index.
    pub fn imf(&self, index: usize) -> Option<&Array2<f64>> {
        index.checked_sub(1).and_then(|i| self.imfs.get(i))
    }
}

/// Sums IMF layers of a decomposition.
///
/// With `indices = None` every IMF and the residuum are summed, which gives back
/// the decomposed signal. With a subset of 1-based indices only those IMFs are
/// summed; the residuum is left out.
pub fn reconstruct(d: &ImfDecomposition, indices: Option<&[usize]>) -> Result<Array2<f64>> {
    match indices {
        None => {
            let mut out = d.residuum.clone();
            for imf in &d.imfs {
                out += imf;
            }
            Ok(out)
        }
        Some(idx) => {
            let mut out = Array2::zeros(d.shape());
            for &i in idx {
                let layer = d.imf(i).ok_or_else(|| {
                    Error::domain(format!(
                        "IMF index {i} out of range 1..={}",
                        d.n_imfs()
                    ))
                })?;
                out += layer;
            }
            Ok(out)
        }
    }
}

/// Product-moment correlation of two equal-length sequences.
pub fn pearson_correlation(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::domain(format!(
            "sequence lengths differ ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::domain("correlation needs at least 2 samples"));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::Degenerate(
            "constant sequence has no correlation".into(),
        ));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Correlation of two ndarray rows (copies if the views are strided).
pub fn row_correlation(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Result<f64> {
    let a = a.to_vec();
    let b = b.to_vec();
    pearson_correlation(&a, &b)
}

/// Mean over channels of the per-channel correlation between two same-shape matrices.
pub fn mean_channel_correlation(a: &Array2<f64>, b: &Array2<f64>) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::domain("shape mismatch"));
    }
    let mut acc = 0.0;
    for (ra, rb) in a.axis_iter(Axis(0)).zip(b.axis_iter(Axis(0))) {
        acc += row_correlation(ra, rb)?;
    }
    Ok(acc / a.nrows() as f64)
}
