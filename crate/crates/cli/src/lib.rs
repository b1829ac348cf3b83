//! Batch pipeline over the on-disk dataset format.
//!
//! Each stage reads its inputs from the output directory (or from the
//! configured input dataset) and writes its own artifacts, so any stage can be
//! rerun on its own once its upstream artifacts exist:
//!
//! ```text
//! <out>/dataset/             simulate   trial data + manifest.json
//! <out>/clean/               simulate   noise-free copy (rhythm-sum corpus only)
//! <out>/imfs/                decompose  trial_<id>.imf.f64 + decomposition.json
//! <out>/tfr/trial_<id>/      tfr        imf<j>_<channel>.pgm + .json
//! <out>/selection/           select     trial_<id>.json
//! <out>/augment/             augment    pct_<p>.json, one plan per repetition
//! <out>/features/            features   train.csv, test.csv
//! <out>/results/             classify   results.csv, medians.csv
//!                            audit      mad.csv
//! <out>/summary.json         pipeline
//! ```
//!
//! Randomness comes from the root seed through [`derive_seed`]: `simulate`
//! uses the `"simulate"` stream, while `augment` and `classify` share the
//! `"augment"` stream so that exported plans match the substitutions scored
//! by the classifier.

mod config;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use imfmix_core::augment::{substitute_trials, AugmentPool, SubstitutionPlan};
use imfmix_core::dataset::{load_dataset, save_dataset};
use imfmix_core::eval::{
    dataset_features, mad_csv, medians_csv, parse_results_csv, results_csv, substitution_experiment, ExperimentConfig,
};
use imfmix_core::memd::io::{read_decomposition_dir, write_decomposition_dir};
use imfmix_core::memd::memd_with_id;
use imfmix_core::selection::{select_with_bank, SelectionReport};
use imfmix_core::simulate::{simulate_es_corpus, simulate_mi_dataset};
use imfmix_core::tfr::{write_pgm, MorletBank};
use imfmix_core::{ClassLabel, Error, ImfDecomposition, TrialDataset};
use rayon::prelude::*;
use serde::Serialize;

pub use config::{derive_seed, PipelineConfig, Simulation};

pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Simulate,
    Decompose,
    Tfr,
    Select,
    Augment,
    Features,
    Classify,
    Audit,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Simulate,
        Stage::Decompose,
        Stage::Tfr,
        Stage::Select,
        Stage::Augment,
        Stage::Features,
        Stage::Classify,
        Stage::Audit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Simulate => "simulate",
            Stage::Decompose => "decompose",
            Stage::Tfr => "tfr",
            Stage::Select => "select",
            Stage::Augment => "augment",
            Stage::Features => "features",
            Stage::Classify => "classify",
            Stage::Audit => "audit",
        }
    }

    /// Marker left in the output directory when the stage fails.
    pub fn partial_marker(self, out: &Path) -> PathBuf {
        out.join(format!("{}.partial", self.name()))
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Error,
    },
    #[error("cannot read config {}: {reason}", path.display())]
    Config { path: PathBuf, reason: String },
    #[error("cannot use output directory {}: {reason}", path.display())]
    Output { path: PathBuf, reason: String },
}

/// Paths of the standard artifacts under one output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub out: PathBuf,
}

impl Layout {
    pub fn new(out: impl Into<PathBuf>) -> Self {
        Self { out: out.into() }
    }

    pub fn dataset(&self) -> PathBuf {
        self.out.join("dataset")
    }
    pub fn clean(&self) -> PathBuf {
        self.out.join("clean")
    }
    pub fn imfs(&self) -> PathBuf {
        self.out.join("imfs")
    }
    pub fn tfr(&self) -> PathBuf {
        self.out.join("tfr")
    }
    pub fn selection(&self) -> PathBuf {
        self.out.join("selection")
    }
    pub fn augment(&self) -> PathBuf {
        self.out.join("augment")
    }
    pub fn features(&self) -> PathBuf {
        self.out.join("features")
    }
    pub fn results(&self) -> PathBuf {
        self.out.join("results")
    }
    pub fn summary(&self) -> PathBuf {
        self.out.join(SUMMARY_FILE)
    }
}

/// Runs one stage, leaving `<stage>.partial` behind on failure.
pub fn run_stage(stage: Stage, cfg: &PipelineConfig, out: &Path) -> Result<(), PipelineError> {
    fs::create_dir_all(out).map_err(|e| PipelineError::Output {
        path: out.to_path_buf(),
        reason: e.to_string(),
    })?;
    let marker = stage.partial_marker(out);
    let layout = Layout::new(out);
    let outcome = match stage {
        Stage::Simulate => simulate(cfg, &layout),
        Stage::Decompose => decompose(cfg, &layout),
        Stage::Tfr => tfr(cfg, &layout),
        Stage::Select => select(cfg, &layout),
        Stage::Augment => augment(cfg, &layout),
        Stage::Features => features(cfg, &layout),
        Stage::Classify => classify(cfg, &layout),
        Stage::Audit => audit(cfg, &layout),
    };
    match outcome {
        Ok(()) => {
            if marker.exists() {
                fs::remove_file(&marker).map_err(|e| PipelineError::Output {
                    path: marker.clone(),
                    reason: e.to_string(),
                })?;
            }
            Ok(())
        }
        Err(source) => {
            // best effort: the stage error is what gets reported
            let _ = fs::write(&marker, format!("{source}\n"));
            Err(PipelineError::Stage { stage, source })
        }
    }
}

#[derive(Debug, Serialize)]
struct Summary {
    config_hash: String,
    root_seed: u64,
    stage_seeds: BTreeMap<&'static str, u64>,
    stages: Vec<&'static str>,
    /// Wall-clock seconds per stage; not covered by determinism guarantees.
    timings: BTreeMap<&'static str, f64>,
}

/// All stages in order (simulation only when no input dataset is configured),
/// then `summary.json`.
pub fn run_pipeline(cfg: &PipelineConfig, out: &Path) -> Result<(), PipelineError> {
    let stages: Vec<Stage> = Stage::ALL
        .into_iter()
        .filter(|&s| s != Stage::Simulate || cfg.input.is_none())
        .collect();
    let mut timings = BTreeMap::new();
    for &stage in &stages {
        eprintln!("[{stage}] running");
        let start = Instant::now();
        run_stage(stage, cfg, out)?;
        timings.insert(stage.name(), start.elapsed().as_secs_f64());
    }
    let summary = Summary {
        config_hash: cfg.hash(),
        root_seed: cfg.seed,
        stage_seeds: ["simulate", "augment"]
            .into_iter()
            .map(|s| (s, derive_seed(cfg.seed, s)))
            .collect(),
        stages: stages.iter().map(|s| s.name()).collect(),
        timings,
    };
    let path = Layout::new(out).summary();
    write_json(&path, &summary).map_err(|e| PipelineError::Output {
        path: path.clone(),
        reason: e.to_string(),
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> imfmix_core::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn input_dir(cfg: &PipelineConfig, layout: &Layout) -> PathBuf {
    cfg.input.clone().unwrap_or_else(|| layout.dataset())
}

fn load_input(cfg: &PipelineConfig, layout: &Layout) -> imfmix_core::Result<TrialDataset> {
    let dir = input_dir(cfg, layout);
    if !dir.is_dir() {
        return Err(Error::Load {
            path: dir,
            reason: "input dataset directory does not exist".into(),
        });
    }
    load_dataset(&dir)
}

fn dataset_fs(d: &TrialDataset) -> imfmix_core::Result<f64> {
    d.fs().ok_or_else(|| Error::Domain("dataset has no trials".into()))
}

fn load_decompositions(layout: &Layout) -> imfmix_core::Result<Vec<ImfDecomposition>> {
    Ok(read_decomposition_dir(&layout.imfs())?.1)
}

fn load_reports(layout: &Layout, decs: &[ImfDecomposition]) -> imfmix_core::Result<Vec<SelectionReport>> {
    decs.iter()
        .map(|d| SelectionReport::read_json(&layout.selection().join(report_name(d.source_trial_id))))
        .collect()
}

fn report_name(trial_id: u32) -> String {
    format!("trial_{trial_id}.json")
}

fn build_pool(cfg: &PipelineConfig, layout: &Layout) -> imfmix_core::Result<(AugmentPool, TrialDataset)> {
    let data = load_input(cfg, layout)?;
    let train = data.run(cfg.train_run)?;
    let decs = load_decompositions(layout)?;
    let reports = load_reports(layout, &decs)?;
    Ok((AugmentPool::new(&train, &decs, &reports)?, data))
}

fn experiment_config(cfg: &PipelineConfig) -> ExperimentConfig {
    ExperimentConfig {
        pcts: cfg.pcts.clone(),
        reps: cfg.reps,
        base_seed: derive_seed(cfg.seed, "augment"),
        bands: cfg.bands.clone(),
        wavelet: cfg.wavelet.clone(),
        segment: cfg.segment.clone(),
    }
}

fn simulate(cfg: &PipelineConfig, layout: &Layout) -> imfmix_core::Result<()> {
    let seed = derive_seed(cfg.seed, "simulate");
    match &cfg.simulation {
        Simulation::Mi(profile) => {
            let d = simulate_mi_dataset(profile, seed)?;
            save_dataset(&d, &layout.dataset(), cfg.sample_format)
        }
        Simulation::Es(sim) => {
            let sim = imfmix_core::simulate::SimConfig { seed, ..sim.clone() };
            let corpus = simulate_es_corpus(&sim)?;
            save_dataset(&corpus.noisy, &layout.dataset(), cfg.sample_format)?;
            save_dataset(&corpus.clean, &layout.clean(), cfg.sample_format)
        }
    }
}

fn decompose(cfg: &PipelineConfig, layout: &Layout) -> imfmix_core::Result<()> {
    let train = load_input(cfg, layout)?.run(cfg.train_run)?;
    let decs = train
        .trials()
        .par_iter()
        .map(|t| memd_with_id(&t.signal, &cfg.sift, t.trial_id))
        .collect::<imfmix_core::Result<Vec<_>>>()?;
    write_decomposition_dir(&layout.imfs(), &cfg.sift, &decs)
}

fn tfr(cfg: &PipelineConfig, layout: &Layout) -> imfmix_core::Result<()> {
    let data = load_input(cfg, layout)?;
    let decs = load_decompositions(layout)?;
    let fs = dataset_fs(&data)?;
    let labels = data.channel_labels().to_vec();
    for d in decs.iter().take(cfg.image_trials) {
        let mut bank = MorletBank::new(fs, d.shape().1, &cfg.wavelet)?;
        let dir = layout.tfr().join(format!("trial_{}", d.source_trial_id));
        for (j, imf) in d.imfs.iter().enumerate() {
            for (row, label) in imf.rows().into_iter().zip(&labels) {
                let img = bank.image(&row.to_vec())?;
                write_pgm(&dir, &format!("imf{:02}_{label}", j + 1), &img)?;
            }
        }
    }
    Ok(())
}

fn select(cfg: &PipelineConfig, layout: &Layout) -> imfmix_core::Result<()> {
    let fs = dataset_fs(&load_input(cfg, layout)?)?;
    let decs = load_decompositions(layout)?;
    let reports = decs
        .par_iter()
        .map_init(
            || None::<MorletBank>,
            |bank, d| {
                let n = d.shape().1;
                if bank.as_ref().map_or(true, |b| b.len() != n) {
                    *bank = Some(MorletBank::new(fs, n, &cfg.wavelet)?);
                }
                select_with_bank(d, bank.as_mut().expect("bank built above"))
            },
        )
        .collect::<imfmix_core::Result<Vec<_>>>()?;
    let dir = layout.selection();
    fs::create_dir_all(&dir)?;
    for r in &reports {
        r.write_json(&dir.join(report_name(r.trial_id)))?;
    }
    Ok(())
}

fn augment(cfg: &PipelineConfig, layout: &Layout) -> imfmix_core::Result<()> {
    let (pool, _) = build_pool(cfg, layout)?;
    let exp = experiment_config(cfg);
    let dir = layout.augment();
    fs::create_dir_all(&dir)?;
    for &pct in cfg.pcts.iter().filter(|&&p| p != 0.0) {
        let plans = (0..cfg.reps)
            .map(|rep| Ok(substitute_trials(&pool, pct, exp.base_seed.wrapping_add(rep as u64))?.1))
            .collect::<imfmix_core::Result<Vec<SubstitutionPlan>>>()?;
        write_json(&dir.join(format!("pct_{pct}.json")), &plans)?;
    }
    Ok(())
}

fn features(cfg: &PipelineConfig, layout: &Layout) -> imfmix_core::Result<()> {
    let (pool, data) = build_pool(cfg, layout)?;
    let test = data.run(cfg.test_run)?;
    let dir = layout.features();
    fs::create_dir_all(&dir)?;
    for (name, d) in [("train.csv", pool.reconstructed()), ("test.csv", &test)] {
        let (x, y) = dataset_features(d, &cfg.bands, &cfg.wavelet, &cfg.segment)?;
        fs::write(dir.join(name), features_csv(d, &cfg.bands, &x, &y))?;
    }
    Ok(())
}

fn features_csv(
    d: &TrialDataset,
    bands: &[imfmix_core::tfr::Band],
    x: &[Vec<f64>],
    y: &[ClassLabel],
) -> String {
    let mut out = String::from("trial_id,label");
    for ch in d.channel_labels() {
        for b in bands {
            out.push_str(&format!(",{ch}_{}", b.name));
        }
    }
    out.push('\n');
    for ((t, row), label) in d.trials().iter().zip(x).zip(y) {
        out.push_str(&format!("{},{label}", t.trial_id));
        for v in row {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

fn classify(cfg: &PipelineConfig, layout: &Layout) -> imfmix_core::Result<()> {
    let (pool, data) = build_pool(cfg, layout)?;
    let test = data.run(cfg.test_run)?;
    let result = substitution_experiment(&pool, &test, &experiment_config(cfg))?;
    let dir = layout.results();
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("results.csv"), results_csv(&result))?;
    fs::write(dir.join("medians.csv"), medians_csv(&result))?;
    Ok(())
}

fn audit(cfg: &PipelineConfig, layout: &Layout) -> imfmix_core::Result<()> {
    let path = layout.results().join("results.csv");
    let text = fs::read_to_string(&path).map_err(|e| Error::Load {
        path: path.clone(),
        reason: e.to_string(),
    })?;
    let result = parse_results_csv(&text)?;
    let records = result.audit(cfg.mad_threshold)?;
    fs::write(layout.results().join("mad.csv"), mad_csv(&result.subject, &records))?;
    Ok(())
}
