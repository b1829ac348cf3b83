//! LDA classification, substitution experiments and double-MAD auditing.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::augment::{substitute_trials, AugmentPool};
use crate::error::{Error, Result};
use crate::signal::{ClassLabel, TrialDataset};
use crate::tfr::{default_bands, Band, FeatureExtractor, WaveletConfig};

/// Relative ridge added to the pooled covariance.
pub const RIDGE: f64 = 1e-3;
/// Default double-MAD cutoff.
pub const MAD_THRESHOLD: f64 = 2.5;

/// Lower median: the element at index `(n - 1) / 2` after sorting.
pub fn lower_median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some(v[(v.len() - 1) / 2])
}

/// Two-class linear discriminant.
#[derive(Debug, Clone, PartialEq)]
pub struct LdaModel {
    /// `labels[1]` is predicted when the discriminant is positive.
    pub labels: [ClassLabel; 2],
    pub means: [DVector<f64>; 2],
    pub covariance: DMatrix<f64>,
    pub weights: DVector<f64>,
    pub bias: f64,
}

impl LdaModel {
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }

    pub fn predict(&self, x: &[f64]) -> ClassLabel {
        if self.decision(x) > 0.0 {
            self.labels[1]
        } else {
            self.labels[0]
        }
    }
}

/// Fits a two-class LDA with a ridge-regularised pooled covariance and a
/// midpoint threshold (equal priors).
pub fn lda_train(features: &[Vec<f64>], labels: &[ClassLabel]) -> Result<LdaModel> {
    if features.len() != labels.len() {
        return Err(Error::domain("one label per feature vector"));
    }
    let d = features.first().map_or(0, Vec::len);
    if d == 0 {
        return Err(Error::domain("feature dimension must be at least 1"));
    }
    if features.iter().any(|f| f.len() != d) {
        return Err(Error::domain("feature vectors differ in length"));
    }
    let mut classes: Vec<ClassLabel> = labels.to_vec();
    classes.sort();
    classes.dedup();
    if classes.len() != 2 {
        return Err(Error::domain(format!(
            "LDA needs exactly two classes, found {}",
            classes.len()
        )));
    }
    let pair = [classes[0], classes[1]];
    let mut means = [DVector::zeros(d), DVector::zeros(d)];
    let mut counts = [0usize; 2];
    for (f, l) in features.iter().zip(labels) {
        let k = usize::from(*l == pair[1]);
        means[k] += DVector::from_column_slice(f);
        counts[k] += 1;
    }
    if counts.iter().any(|&c| c < 2) {
        return Err(Error::domain("LDA needs at least 2 samples per class"));
    }
    for k in 0..2 {
        means[k] /= counts[k] as f64;
    }
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for (f, l) in features.iter().zip(labels) {
        let k = usize::from(*l == pair[1]);
        let c = DVector::from_column_slice(f) - &means[k];
        cov.syger(1.0, &c, &c, 1.0);
    }
    cov /= (counts[0] + counts[1] - 2) as f64;
    cov.fill_lower_triangle_with_upper_triangle();
    let trace = cov.trace();
    let ridge = if trace > 0.0 { RIDGE * trace / d as f64 } else { RIDGE };
    for i in 0..d {
        cov[(i, i)] += ridge;
    }
    let chol = cov
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Degenerate("regularised covariance is not positive definite".into()))?;
    let weights = chol.solve(&(&means[1] - &means[0]));
    let bias = -weights.dot(&((&means[0] + &means[1]) * 0.5));
    if !bias.is_finite() || weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::Degenerate("non-finite discriminant".into()));
    }
    Ok(LdaModel {
        labels: pair,
        means,
        covariance: cov,
        weights,
        bias,
    })
}

/// Per-class misclassification rates of one evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    /// Percent of each true class predicted as something else.
    pub rates: BTreeMap<ClassLabel, f64>,
    pub n_test: BTreeMap<ClassLabel, usize>,
    pub pct: f64,
    pub rep: usize,
    pub seed: u64,
}

pub fn per_class_error(model: &LdaModel, features: &[Vec<f64>], labels: &[ClassLabel]) -> Result<ErrorReport> {
    if features.len() != labels.len() || features.is_empty() {
        return Err(Error::domain("test set must be non-empty with one label per vector"));
    }
    let mut wrong: BTreeMap<ClassLabel, usize> = BTreeMap::new();
    let mut total: BTreeMap<ClassLabel, usize> = BTreeMap::new();
    for (f, l) in features.iter().zip(labels) {
        *total.entry(*l).or_default() += 1;
        let miss = usize::from(model.predict(f) != *l);
        *wrong.entry(*l).or_default() += miss;
    }
    let rates = total
        .iter()
        .map(|(c, &n)| (*c, 100.0 * wrong[c] as f64 / n as f64))
        .collect();
    Ok(ErrorReport {
        rates,
        n_test: total,
        pct: 0.0,
        rep: 0,
        seed: 0,
    })
}

/// Settings of a repeated substitution experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub pcts: Vec<f64>,
    pub reps: usize,
    pub base_seed: u64,
    pub bands: Vec<Band>,
    pub wavelet: WaveletConfig,
    /// Segment over which features are computed.
    pub segment: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            pcts: vec![2.5, 5.0, 7.5, 10.0, 12.5, 25.0, 37.5, 50.0],
            reps: 100,
            base_seed: 0,
            bands: default_bands(),
            wavelet: WaveletConfig::default(),
            segment: "mi".into(),
        }
    }
}

/// One row of the per-repetition results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub pct: f64,
    pub rep: usize,
    pub class: ClassLabel,
    pub error_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedianRecord {
    pub pct: f64,
    pub class: ClassLabel,
    pub median_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub subject: String,
    /// pct = 0 first, then the configured levels, each with `reps` rows per class.
    pub reports: Vec<ErrorReport>,
}

impl ExperimentResult {
    pub fn records(&self) -> Vec<ErrorRecord> {
        self.reports
            .iter()
            .flat_map(|r| {
                r.rates.iter().map(move |(c, &e)| ErrorRecord {
                    pct: r.pct,
                    rep: r.rep,
                    class: *c,
                    error_rate: e,
                })
            })
            .collect()
    }

    /// Distinct pct values in table order.
    pub fn pcts(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for r in &self.reports {
            if !out.contains(&r.pct) {
                out.push(r.pct);
            }
        }
        out
    }

    pub fn errors(&self, pct: f64, class: ClassLabel) -> Vec<f64> {
        self.reports
            .iter()
            .filter(|r| r.pct == pct)
            .filter_map(|r| r.rates.get(&class).copied())
            .collect()
    }

    pub fn classes(&self) -> Vec<ClassLabel> {
        let mut c: Vec<ClassLabel> = self.reports.iter().flat_map(|r| r.rates.keys().copied()).collect();
        c.sort();
        c.dedup();
        c
    }

    pub fn medians(&self) -> Vec<MedianRecord> {
        let mut out = Vec::new();
        for pct in self.pcts() {
            for class in self.classes() {
                if let Some(m) = lower_median(&self.errors(pct, class)) {
                    out.push(MedianRecord {
                        pct,
                        class,
                        median_error: m,
                    });
                }
            }
        }
        out
    }

    /// Double-MAD audit of the pct = 0 median against each level's repetitions.
    pub fn audit(&self, threshold: f64) -> Result<Vec<MadRecord>> {
        let mut out = Vec::new();
        for class in self.classes() {
            let reference = lower_median(&self.errors(0.0, class))
                .ok_or_else(|| Error::domain("experiment has no pct = 0 reference"))?;
            for pct in self.pcts().into_iter().filter(|&p| p != 0.0) {
                let obs = self.errors(pct, class);
                let verdict = double_mad_outliers(&obs, reference, threshold)?;
                out.push(MadRecord {
                    pct,
                    class,
                    reference,
                    verdict,
                });
            }
        }
        Ok(out)
    }
}

/// Features and labels of every trial, in dataset order.
pub fn dataset_features(
    d: &TrialDataset,
    bands: &[Band],
    wavelet: &WaveletConfig,
    segment: &str,
) -> Result<(Vec<Vec<f64>>, Vec<ClassLabel>)> {
    let mut extractor = extractor_for(d, bands, wavelet, segment)?;
    let mut feats = Vec::with_capacity(d.len());
    for t in d.trials() {
        t.segment(segment)?;
        feats.push(extractor.features(t.signal.data().view())?);
    }
    Ok((feats, d.trials().iter().map(|t| t.label).collect()))
}

fn extractor_for(d: &TrialDataset, bands: &[Band], wavelet: &WaveletConfig, segment: &str) -> Result<FeatureExtractor> {
    let first = d
        .trials()
        .first()
        .ok_or_else(|| Error::domain("empty dataset"))?;
    FeatureExtractor::new(
        first.signal.fs(),
        first.signal.n_samples(),
        first.segment(segment)?,
        bands,
        wavelet,
    )
}

/// Trains on the (substituted) pool run and tests on `test` for every
/// configured percentage and repetition.
///
/// Repetition `r` uses seed `base_seed + r`. The pct = 0 condition has no
/// random step, so it is evaluated once and repeated `reps` times.
pub fn substitution_experiment(pool: &AugmentPool, test: &TrialDataset, cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    if cfg.reps == 0 {
        return Err(Error::domain("reps must be at least 1"));
    }
    let train = pool.reconstructed();
    let segment = train
        .trials()
        .first()
        .ok_or_else(|| Error::domain("empty training run"))?
        .segment(&cfg.segment)?;
    if train.trials().iter().chain(test.trials()).any(|t| t.segments.get(&cfg.segment) != Some(&segment)) {
        return Err(Error::domain(format!(
            "segment {:?} must exist with identical bounds in every trial",
            cfg.segment
        )));
    }
    let (test_x, test_y) = dataset_features(test, &cfg.bands, &cfg.wavelet, &cfg.segment)?;
    let (train_x, train_y) = dataset_features(train, &cfg.bands, &cfg.wavelet, &cfg.segment)?;
    let by_id: HashMap<u32, usize> = train.trials().iter().enumerate().map(|(i, t)| (t.trial_id, i)).collect();
    let mut extractor = extractor_for(train, &cfg.bands, &cfg.wavelet, &cfg.segment)?;

    let mut reports = Vec::new();
    let base = per_class_error(&lda_train(&train_x, &train_y)?, &test_x, &test_y)?;
    for rep in 0..cfg.reps {
        reports.push(ErrorReport {
            rep,
            seed: cfg.base_seed.wrapping_add(rep as u64),
            pct: 0.0,
            ..base.clone()
        });
    }
    for &pct in cfg.pcts.iter().filter(|&&p| p != 0.0) {
        for rep in 0..cfg.reps {
            let seed = cfg.base_seed.wrapping_add(rep as u64);
            let (substituted, _) = substitute_trials(pool, pct, seed)?;
            let mut x = Vec::with_capacity(substituted.len());
            for t in substituted.trials() {
                match by_id.get(&t.trial_id) {
                    Some(&i) => x.push(train_x[i].clone()),
                    None => x.push(extractor.features(t.signal.data().view())?),
                }
            }
            let y: Vec<ClassLabel> = substituted.trials().iter().map(|t| t.label).collect();
            let mut r = per_class_error(&lda_train(&x, &y)?, &test_x, &test_y)?;
            r.pct = pct;
            r.rep = rep;
            r.seed = seed;
            reports.push(r);
        }
    }
    Ok(ExperimentResult {
        subject: train.metadata.subject.clone(),
        reports,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MadStatus {
    Ok,
    ZeroMad,
}

/// Outcome of [`double_mad_outliers`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MadVerdict {
    pub status: MadStatus,
    pub median: f64,
    pub left_mad: f64,
    pub right_mad: f64,
    /// Per observation; a nonzero distance over a zero MAD counts as an outlier.
    pub outliers: Vec<bool>,
    /// `None` when the reference falls on a zero-MAD side.
    pub reference_flag: Option<bool>,
    pub reference_score: Option<f64>,
}

impl MadVerdict {
    pub fn outlier_count(&self) -> usize {
        self.outliers.iter().filter(|&&o| o).count()
    }
}

/// Double (left/right) median absolute deviation test.
pub fn double_mad_outliers(observations: &[f64], reference: f64, threshold: f64) -> Result<MadVerdict> {
    if observations.len() < 3 {
        return Err(Error::domain(format!(
            "double MAD needs at least 3 observations, got {}",
            observations.len()
        )));
    }
    if observations.iter().chain([&reference, &threshold]).any(|v| !v.is_finite()) {
        return Err(Error::domain("double MAD inputs must be finite"));
    }
    let m = lower_median(observations).expect("non-empty");
    let side = |keep: &dyn Fn(f64) -> bool| {
        let dev: Vec<f64> = observations.iter().filter(|&&x| keep(x)).map(|&x| (x - m).abs()).collect();
        lower_median(&dev).unwrap_or(0.0)
    };
    let left_mad = side(&|x| x <= m);
    let right_mad = side(&|x| x >= m);
    let score = |x: f64| -> Option<f64> {
        let d = (x - m).abs();
        if d == 0.0 {
            return Some(0.0);
        }
        let mad = if x < m { left_mad } else { right_mad };
        (mad > 0.0).then(|| d / mad)
    };
    let outliers = observations
        .iter()
        .map(|&x| score(x).is_none_or(|s| s > threshold))
        .collect();
    let reference_mad = match reference.partial_cmp(&m) {
        Some(std::cmp::Ordering::Less) => left_mad,
        Some(std::cmp::Ordering::Greater) => right_mad,
        _ => left_mad.min(right_mad),
    };
    let (status, reference_score) = if reference_mad == 0.0 {
        (MadStatus::ZeroMad, None)
    } else {
        (MadStatus::Ok, Some((reference - m).abs() / reference_mad))
    };
    Ok(MadVerdict {
        status,
        median: m,
        left_mad,
        right_mad,
        outliers,
        reference_flag: reference_score.map(|s| s > threshold),
        reference_score,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MadRecord {
    pub pct: f64,
    pub class: ClassLabel,
    pub reference: f64,
    pub verdict: MadVerdict,
}

impl MadRecord {
    /// Short cell text: `0 MAD`, `outlier` or `-`.
    pub fn cell(&self) -> &'static str {
        match (self.verdict.status, self.verdict.reference_flag) {
            (MadStatus::ZeroMad, _) => "0 MAD",
            (_, Some(true)) => "outlier",
            _ => "-",
        }
    }
}

fn csv_escape(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// `subject,pct,rep,class,error_rate`
pub fn results_csv(res: &ExperimentResult) -> String {
    let mut out = String::from("subject,pct,rep,class,error_rate\n");
    let subject = csv_escape(&res.subject);
    for r in res.records() {
        let _ = writeln!(out, "{subject},{},{},{},{}", r.pct, r.rep, r.class, r.error_rate);
    }
    out
}

/// Inverse of [`results_csv`]; test-set sizes and seeds are not stored and
/// come back empty.
pub fn parse_results_csv(text: &str) -> Result<ExperimentResult> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header.trim() != "subject,pct,rep,class,error_rate" {
        return Err(Error::domain(format!("unexpected results header {header:?}")));
    }
    let mut subject = String::new();
    let mut reports: Vec<ErrorReport> = Vec::new();
    for (no, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let bad = |what: &str| Error::domain(format!("results line {}: {what}", no + 2));
        let cols: Vec<&str> = line.rsplitn(5, ',').collect();
        if cols.len() != 5 {
            return Err(bad("expected 5 columns"));
        }
        let (error_rate, class, rep, pct, subj) = (cols[0], cols[1], cols[2], cols[3], cols[4]);
        subject = subj.trim_matches('"').replace("\"\"", "\"");
        let pct: f64 = pct.parse().map_err(|_| bad("bad pct"))?;
        let rep: usize = rep.parse().map_err(|_| bad("bad rep"))?;
        let class: ClassLabel = class.parse().map_err(|_| bad("bad class"))?;
        let rate: f64 = error_rate.parse().map_err(|_| bad("bad error rate"))?;
        match reports.last_mut() {
            Some(r) if r.pct == pct && r.rep == rep => {
                r.rates.insert(class, rate);
            }
            _ => reports.push(ErrorReport {
                rates: BTreeMap::from([(class, rate)]),
                n_test: BTreeMap::new(),
                pct,
                rep,
                seed: 0,
            }),
        }
    }
    Ok(ExperimentResult { subject, reports })
}

/// `subject,pct,class,median_error`, one row per (pct, class).
pub fn medians_csv(res: &ExperimentResult) -> String {
    let mut out = String::from("subject,pct,class,median_error\n");
    let subject = csv_escape(&res.subject);
    for m in res.medians() {
        let _ = writeln!(out, "{subject},{},{},{}", m.pct, m.class, m.median_error);
    }
    out
}

/// One row per (class, pct) audit.
pub fn mad_csv(subject: &str, records: &[MadRecord]) -> String {
    let mut out = String::from(
        "subject,pct,class,status,reference_median,median,left_mad,right_mad,outlier_count,reference_flag,cell\n",
    );
    let subject = csv_escape(subject);
    for r in records {
        let v = &r.verdict;
        let status = match v.status {
            MadStatus::Ok => "OK",
            MadStatus::ZeroMad => "ZERO_MAD",
        };
        let flag = v.reference_flag.map_or(String::new(), |f| f.to_string());
        let _ = writeln!(
            out,
            "{subject},{},{},{status},{},{},{},{},{},{flag},{}",
            r.pct,
            r.class,
            r.reference,
            v.median,
            v.left_mad,
            v.right_mad,
            v.outlier_count(),
            r.cell()
        );
    }
    out
}
