//! Synthetic EEG corpora.
//!
//! Two generators: a rhythm-sum corpus with controllable noise and blink
//! artifacts, and a two-run wrist motor-imagery session in which the α rhythm
//! over the motor cortex opposite the imagined wrist is attenuated.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{ClassLabel, DatasetMetadata, MultichannelSignal, Segment, Trial, TrialDataset};

pub const ES_CHANNELS: [&str; 19] = [
    "C3", "C4", "Cz", "F3", "F4", "F7", "F8", "Fz", "Fp1", "Fp2", "O1", "O2", "P3", "P4", "Pz", "T3", "T4", "T5", "T6",
];

pub const MI_CHANNELS: [&str; 16] = [
    "C1", "C2", "C3", "C4", "C5", "C6", "Cz", "Cp1", "Cp2", "Cp5", "Cp6", "Fc1", "Fc2", "Fc5", "Fc6", "Fcz",
];

/// Channels whose α drops while the right wrist is imagined.
pub const RIGHT_WRIST_CHANNELS: [&str; 3] = ["C3", "C5", "Cp5"];
/// Channels whose α drops while the left wrist is imagined.
pub const LEFT_WRIST_CHANNELS: [&str; 3] = ["C4", "C6", "Cp6"];

/// One sinusoidal component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rhythm {
    pub band: String,
    /// µV
    pub amplitude: f64,
    /// Hz
    pub frequency: f64,
}

impl Rhythm {
    pub fn new(band: &str, amplitude: f64, frequency: f64) -> Self {
        Self {
            band: band.into(),
            amplitude,
            frequency,
        }
    }
}

/// α 10 Hz / β 20 Hz / γ 40 Hz at 1 / 0.5 / 0.25 µV.
pub fn es_rhythms() -> Vec<Rhythm> {
    vec![
        Rhythm::new("alpha", 1.0, 10.0),
        Rhythm::new("beta", 0.5, 20.0),
        Rhythm::new("gamma", 0.25, 40.0),
    ]
}

/// Blink bursts on frontal channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OcularConfig {
    pub channels: Vec<String>,
    /// Expected bursts per 10 s; each trial draws a Poisson count clamped to
    /// `[min_bursts, max_bursts]`.
    pub rate_per_10s: f64,
    pub min_bursts: usize,
    pub max_bursts: usize,
    /// Pulse length in seconds.
    pub pulse_s: f64,
    /// Peak amplitude in µV.
    pub amplitude: f64,
}

impl Default for OcularConfig {
    fn default() -> Self {
        Self {
            channels: vec!["Fp1".into(), "Fp2".into()],
            rate_per_10s: 2.0,
            min_bursts: 1,
            max_bursts: 3,
            pulse_s: 0.3,
            amplitude: 10.0,
        }
    }
}

/// Recipe for a rhythm-sum corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub subject: String,
    pub channels: Vec<String>,
    pub fs: f64,
    /// seconds
    pub duration: f64,
    pub rhythms: Vec<Rhythm>,
    pub snr_db: Option<f64>,
    /// `None` disables blinks.
    pub ocular: Option<OcularConfig>,
    pub n_trials: usize,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            subject: "ES".into(),
            channels: ES_CHANNELS.iter().map(|s| s.to_string()).collect(),
            fs: 256.0,
            duration: 10.0,
            rhythms: es_rhythms(),
            snr_db: None,
            ocular: Some(OcularConfig::default()),
            n_trials: 10,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn n_samples(&self) -> usize {
        (self.duration * self.fs).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() {
            return Err(Error::domain("at least one channel is required"));
        }
        if !(self.fs > 0.0) || !(self.duration > 0.0) || self.n_samples() < 2 {
            return Err(Error::domain("fs and duration must be positive"));
        }
        if let Some(r) = self.rhythms.iter().find(|r| !(r.frequency > 0.0 && r.frequency < self.fs / 2.0)) {
            return Err(Error::domain(format!(
                "rhythm {} at {} Hz is not below fs/2 = {}",
                r.band,
                r.frequency,
                self.fs / 2.0
            )));
        }
        if let Some(snr) = self.snr_db {
            if !snr.is_finite() {
                return Err(Error::domain("snr_db must be finite"));
            }
        }
        Ok(())
    }
}

fn trial_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn whole_trial_segment(n: usize) -> BTreeMap<String, Segment> {
    BTreeMap::from([("full".to_string(), Segment::new(0, n))])
}

/// Rhythm sums with a random phase per trial, channel and component.
///
/// Noise and blinks are not added here; see [`simulate_es_corpus`].
pub fn simulate_clean_trials(cfg: &SimConfig, n_trials: usize) -> Result<TrialDataset> {
    cfg.validate()?;
    let n = cfg.n_samples();
    let mut trials = Vec::with_capacity(n_trials);
    for k in 0..n_trials {
        let mut rng = trial_rng(cfg.seed, k as u64);
        let mut data = Array2::zeros((cfg.n_channels(), n));
        for mut row in data.rows_mut() {
            for r in &cfg.rhythms {
                let phase = rng.random_range(0.0..2.0 * PI);
                let w = 2.0 * PI * r.frequency / cfg.fs;
                for (t, v) in row.iter_mut().enumerate() {
                    *v += r.amplitude * (w * t as f64 + phase).sin();
                }
            }
        }
        let signal = MultichannelSignal::new(data, cfg.fs, cfg.channels.clone())?;
        trials.push(Trial::new(signal, ClassLabel::Class(0), 1, k as u32, whole_trial_segment(n))?);
    }
    TrialDataset::new(
        trials,
        DatasetMetadata {
            subject: cfg.subject.clone(),
            description: "rhythm-sum corpus".into(),
        },
    )
}

fn mean_square(x: impl Iterator<Item = f64>) -> (f64, usize) {
    let (s, n) = x.fold((0.0, 0usize), |(s, n), v| (s + v * v, n + 1));
    (s / n.max(1) as f64, n)
}

/// Adds white Gaussian noise scaled per channel to the exact requested SNR.
pub fn add_noise_at_snr(d: &TrialDataset, snr_db: f64, seed: u64) -> Result<TrialDataset> {
    if !snr_db.is_finite() {
        return Err(Error::domain("snr_db must be finite"));
    }
    let ratio = 10f64.powf(-snr_db / 10.0);
    let mut out = Vec::with_capacity(d.len());
    for t in d.trials() {
        let mut rng = trial_rng(seed, t.trial_id as u64);
        let mut data = t.signal.data().clone();
        for (c, mut row) in data.rows_mut().into_iter().enumerate() {
            let (p_signal, n) = mean_square(row.iter().copied());
            if !(p_signal > 0.0) {
                return Err(Error::Degenerate(format!(
                    "channel {} of trial {} has zero power",
                    t.signal.channel_labels()[c],
                    t.trial_id
                )));
            }
            let noise: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            let (p_noise, _) = mean_square(noise.iter().copied());
            let scale = (p_signal * ratio / p_noise).sqrt();
            for (v, z) in row.iter_mut().zip(&noise) {
                *v += scale * z;
            }
        }
        let mut nt = t.clone();
        nt.signal = t.signal.with_data(data)?;
        out.push(nt);
    }
    TrialDataset::new(out, d.metadata.clone())
}

/// Raised-cosine blink pulses on the configured channels only.
pub fn add_ocular_artifact(d: &TrialDataset, cfg: &OcularConfig, seed: u64) -> Result<TrialDataset> {
    if cfg.channels.is_empty() {
        return Err(Error::domain("ocular channel list is empty"));
    }
    if cfg.min_bursts > cfg.max_bursts {
        return Err(Error::domain("min_bursts exceeds max_bursts"));
    }
    let mut out = Vec::with_capacity(d.len());
    for t in d.trials() {
        let fs = t.signal.fs();
        let n = t.signal.n_samples();
        let targets: Vec<usize> = cfg
            .channels
            .iter()
            .map(|l| {
                t.signal
                    .channel_index(l)
                    .ok_or_else(|| Error::domain(format!("ocular channel {l} not in montage")))
            })
            .collect::<Result<_>>()?;
        let mut rng = trial_rng(seed, t.trial_id as u64);
        let pulse_len = ((cfg.pulse_s * fs).round() as usize).clamp(1, n);
        let expected = cfg.rate_per_10s * (n as f64 / fs) / 10.0;
        let drawn = if expected > 0.0 {
            let p: f64 = Poisson::new(expected)
                .map_err(|e| Error::domain(e.to_string()))?
                .sample(&mut rng);
            p as usize
        } else {
            0
        };
        let count = drawn.clamp(cfg.min_bursts, cfg.max_bursts);
        let mut pulse = vec![0.0; n];
        for _ in 0..count {
            let start = rng.random_range(0..=n - pulse_len);
            for j in 0..pulse_len {
                let phase = 2.0 * PI * (j as f64 + 0.5) / pulse_len as f64;
                pulse[start + j] += cfg.amplitude * 0.5 * (1.0 - phase.cos());
            }
        }
        let mut data = t.signal.data().clone();
        if count > 0 {
            for &c in &targets {
                for (v, p) in data.row_mut(c).iter_mut().zip(&pulse) {
                    *v += p;
                }
            }
        }
        let mut nt = t.clone();
        nt.signal = t.signal.with_data(data)?;
        out.push(nt);
    }
    TrialDataset::new(out, d.metadata.clone())
}

/// Clean and contaminated versions of one corpus.
#[derive(Debug, Clone)]
pub struct EsCorpus {
    pub clean: TrialDataset,
    pub noisy: TrialDataset,
}

/// Clean rhythms, then blinks, then noise at `cfg.snr_db` (if set).
pub fn simulate_es_corpus(cfg: &SimConfig) -> Result<EsCorpus> {
    let clean = simulate_clean_trials(cfg, cfg.n_trials)?;
    let mut noisy = clean.clone();
    if let Some(oc) = &cfg.ocular {
        noisy = add_ocular_artifact(&noisy, oc, cfg.seed.wrapping_add(1))?;
    }
    if let Some(snr) = cfg.snr_db {
        // noise level follows the rhythm power, not the blink power
        noisy = add_noise_relative_to(&clean, &noisy, snr, cfg.seed.wrapping_add(2))?;
    }
    Ok(EsCorpus { clean, noisy })
}

fn add_noise_relative_to(reference: &TrialDataset, target: &TrialDataset, snr_db: f64, seed: u64) -> Result<TrialDataset> {
    let noise_only = add_noise_at_snr(reference, snr_db, seed)?;
    let mut out = Vec::with_capacity(target.len());
    for ((r, n), t) in reference.trials().iter().zip(noise_only.trials()).zip(target.trials()) {
        let data = t.signal.data() + &(n.signal.data() - r.signal.data());
        let mut nt = t.clone();
        nt.signal = t.signal.with_data(data)?;
        out.push(nt);
    }
    TrialDataset::new(out, target.metadata.clone())
}

/// Motor-imagery subject model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MiProfile {
    pub subject: String,
    pub channels: Vec<String>,
    pub fs: f64,
    pub rest_s: f64,
    pub cue_s: f64,
    pub mi_s: f64,
    pub runs: u32,
    pub trials_per_class: usize,
    /// Background rhythms on every channel.
    pub rhythms: Vec<Rhythm>,
    /// Fractional α amplitude drop on contralateral channels during imagery.
    pub alpha_attenuation: f64,
    /// Uniform per-trial, per-channel amplitude factor spread (±).
    pub amplitude_jitter: f64,
    pub snr_db: f64,
}

impl Default for MiProfile {
    fn default() -> Self {
        Self::good_performer()
    }
}

impl MiProfile {
    pub fn good_performer() -> Self {
        Self {
            subject: "good".into(),
            channels: MI_CHANNELS.iter().map(|s| s.to_string()).collect(),
            fs: 250.0,
            rest_s: 2.0,
            cue_s: 1.0,
            mi_s: 5.0,
            runs: 2,
            trials_per_class: 40,
            rhythms: vec![Rhythm::new("alpha", 1.0, 10.0), Rhythm::new("beta", 0.5, 20.0)],
            alpha_attenuation: 0.5,
            amplitude_jitter: 0.7,
            snr_db: 10.0,
        }
    }

    pub fn poor_performer() -> Self {
        Self {
            subject: "poor".into(),
            alpha_attenuation: 0.05,
            snr_db: 0.0,
            ..Self::good_performer()
        }
    }

    pub fn zero_attenuation() -> Self {
        Self {
            subject: "null".into(),
            alpha_attenuation: 0.0,
            ..Self::good_performer()
        }
    }

    pub fn n_samples(&self) -> usize {
        ((self.rest_s + self.cue_s + self.mi_s) * self.fs).round() as usize
    }

    pub fn segments(&self) -> BTreeMap<String, Segment> {
        let rest_end = (self.rest_s * self.fs).round() as usize;
        let cue_end = ((self.rest_s + self.cue_s) * self.fs).round() as usize;
        BTreeMap::from([
            ("rest".to_string(), Segment::new(0, rest_end)),
            ("cue".to_string(), Segment::new(rest_end, cue_end)),
            ("mi".to_string(), Segment::new(cue_end, self.n_samples())),
        ])
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() || self.runs == 0 || self.trials_per_class == 0 {
            return Err(Error::domain("profile needs channels, runs and trials"));
        }
        if !(self.fs > 0.0 && self.rest_s > 0.0 && self.cue_s > 0.0 && self.mi_s > 0.0) {
            return Err(Error::domain("fs and segment durations must be positive"));
        }
        if !(0.0..=1.0).contains(&self.alpha_attenuation) {
            return Err(Error::domain("alpha_attenuation must lie in [0, 1]"));
        }
        if !(0.0..1.0).contains(&self.amplitude_jitter) {
            return Err(Error::domain("amplitude_jitter must lie in [0, 1)"));
        }
        if let Some(r) = self.rhythms.iter().find(|r| !(r.frequency > 0.0 && r.frequency < self.fs / 2.0)) {
            return Err(Error::domain(format!("rhythm {} above Nyquist", r.band)));
        }
        if !self.snr_db.is_finite() {
            return Err(Error::domain("snr_db must be finite"));
        }
        Ok(())
    }
}

/// Two-class wrist imagery session: `runs` runs of `2 × trials_per_class`
/// shuffled trials with globally unique ids.
pub fn simulate_mi_dataset(profile: &MiProfile, seed: u64) -> Result<TrialDataset> {
    profile.validate()?;
    let n = profile.n_samples();
    let segments = profile.segments();
    let mi = segments["mi"];
    let idx = |names: &[&str]| -> Vec<usize> {
        names
            .iter()
            .filter_map(|l| profile.channels.iter().position(|c| c == l))
            .collect()
    };
    let contralateral = [
        (ClassLabel::RightWrist, idx(&RIGHT_WRIST_CHANNELS)),
        (ClassLabel::LeftWrist, idx(&LEFT_WRIST_CHANNELS)),
    ];
    let per_run = 2 * profile.trials_per_class;
    let mut order_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut clean_trials = Vec::with_capacity(per_run * profile.runs as usize);
    for run in 0..profile.runs {
        let mut labels: Vec<ClassLabel> = [ClassLabel::RightWrist, ClassLabel::LeftWrist]
            .iter()
            .flat_map(|&l| std::iter::repeat_n(l, profile.trials_per_class))
            .collect();
        labels.shuffle(&mut order_rng);
        for (k, label) in labels.into_iter().enumerate() {
            let trial_id = (run as usize * per_run + k) as u32;
            let mut rng = trial_rng(seed, 1 + trial_id as u64);
            let attenuated = &contralateral.iter().find(|(l, _)| *l == label).expect("two classes").1;
            let mut data = Array2::zeros((profile.channels.len(), n));
            for (c, mut row) in data.rows_mut().into_iter().enumerate() {
                for r in &profile.rhythms {
                    let phase = rng.random_range(0.0..2.0 * PI);
                    let jitter = 1.0 + profile.amplitude_jitter * rng.random_range(-1.0..=1.0);
                    let w = 2.0 * PI * r.frequency / profile.fs;
                    let drop = r.band == "alpha" && attenuated.contains(&c);
                    for (t, v) in row.iter_mut().enumerate() {
                        let gain = if drop && mi.range().contains(&t) {
                            1.0 - profile.alpha_attenuation
                        } else {
                            1.0
                        };
                        *v += gain * jitter * r.amplitude * (w * t as f64 + phase).sin();
                    }
                }
            }
            let signal = MultichannelSignal::new(data, profile.fs, profile.channels.clone())?;
            clean_trials.push(Trial::new(signal, label, run + 1, trial_id, segments.clone())?);
        }
    }
    let clean = TrialDataset::new(
        clean_trials,
        DatasetMetadata {
            subject: profile.subject.clone(),
            description: "synthetic wrist motor imagery".into(),
        },
    )?;
    add_noise_at_snr(&clean, profile.snr_db, seed ^ 0x9e37_79b9_7f4a_7c15)
}

pub fn read_json_config<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::load(path, e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| Error::load(path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::pearson_correlation;

    fn single_tone() -> SimConfig {
        SimConfig {
            rhythms: vec![Rhythm::new("alpha", 1.0, 10.0)],
            ocular: None,
            ..SimConfig::default()
        }
    }

    #[test]
    fn es_shape_and_determinism() {
        let cfg = SimConfig::default();
        let d = simulate_clean_trials(&cfg, 10).unwrap();
        assert_eq!(d.len(), 10);
        assert_eq!(d.channel_labels().len(), 19);
        assert_eq!(d.trials()[0].signal.n_samples(), 2560);
        assert_eq!(d, simulate_clean_trials(&cfg, 10).unwrap());
    }

    #[test]
    fn tone_variance_is_half_the_squared_amplitude() {
        let d = simulate_clean_trials(&single_tone(), 2).unwrap();
        for t in d.trials() {
            for c in 0..19 {
                let x = t.signal.channel(c);
                let mean = x.iter().sum::<f64>() / x.len() as f64;
                let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / x.len() as f64;
                assert!((var - 0.5).abs() < 0.005, "{var}");
            }
        }
    }

    #[test]
    fn noise_hits_the_requested_snr() {
        let clean = simulate_clean_trials(&SimConfig::default(), 2).unwrap();
        for snr in [-20.0, 0.0, 20.0] {
            let noisy = add_noise_at_snr(&clean, snr, 5).unwrap();
            for (a, b) in clean.trials().iter().zip(noisy.trials()) {
                for c in 0..19 {
                    let x = a.signal.channel(c);
                    let y = b.signal.channel(c);
                    let ps = mean_square(x.iter().copied()).0;
                    let pn = mean_square(x.iter().zip(y).map(|(u, v)| v - u)).0;
                    assert!((10.0 * (ps / pn).log10() - snr).abs() < 0.5);
                    let r = pearson_correlation(x, y).unwrap();
                    if snr == 20.0 {
                        assert!(r > 0.97);
                    }
                    if snr == -20.0 {
                        assert!(r < 0.25);
                    }
                }
            }
        }
        let zero = TrialDataset::new(
            vec![Trial::new(
                MultichannelSignal::new(Array2::zeros((1, 8)), 100.0, vec!["x".into()]).unwrap(),
                ClassLabel::Class(0),
                1,
                0,
                BTreeMap::new(),
            )
            .unwrap()],
            DatasetMetadata::default(),
        )
        .unwrap();
        assert!(matches!(add_noise_at_snr(&zero, 0.0, 1), Err(Error::Degenerate(_))));
    }

    #[test]
    fn blinks_touch_only_frontal_channels() {
        let clean = simulate_clean_trials(&SimConfig::default(), 3).unwrap();
        let art = add_ocular_artifact(&clean, &OcularConfig::default(), 9).unwrap();
        for (a, b) in clean.trials().iter().zip(art.trials()) {
            for (c, label) in ES_CHANNELS.iter().enumerate() {
                let (x, y) = (a.signal.channel(c), b.signal.channel(c));
                if label.starts_with("Fp") {
                    let vx = mean_square(x.iter().copied()).0;
                    let mean = y.iter().sum::<f64>() / y.len() as f64;
                    let vy = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / y.len() as f64;
                    assert!(vy > 2.0 * vx, "{label}: {vy} vs {vx}");
                } else {
                    assert_eq!(x, y);
                }
            }
        }
        let none = OcularConfig {
            min_bursts: 0,
            max_bursts: 0,
            ..OcularConfig::default()
        };
        assert_eq!(add_ocular_artifact(&clean, &none, 9).unwrap(), clean);
    }

    #[test]
    fn mi_session_layout() {
        let p = MiProfile {
            trials_per_class: 4,
            ..MiProfile::good_performer()
        };
        let d = simulate_mi_dataset(&p, 3).unwrap();
        assert_eq!(d.len(), 16);
        assert_eq!(d.run_ids(), vec![1, 2]);
        for run in [1, 2] {
            let r = d.run(run).unwrap();
            let rw = r.trials().iter().filter(|t| t.label == ClassLabel::RightWrist).count();
            assert_eq!(rw, 4);
            assert_eq!(r.len(), 8);
        }
        let ids: Vec<u32> = d.trials().iter().map(|t| t.trial_id).collect();
        assert_eq!(ids, (0..16).collect::<Vec<_>>());
        let seg = d.trials()[0].segment("mi").unwrap();
        assert_eq!((seg.start, seg.end), (750, 2000));
        assert!(d.trials().iter().all(|t| t.segments == d.trials()[0].segments));
        assert_eq!(d, simulate_mi_dataset(&p, 3).unwrap());
        assert_ne!(d, simulate_mi_dataset(&p, 4).unwrap());
    }
}
