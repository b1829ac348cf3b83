//! Empirical mode decomposition, univariate and multivariate.
//!
//! Both variants share one sifting loop: estimate a mean envelope, subtract it,
//! and stop once the envelope mean carries less than `envelope_mean_tolerance`
//! of the detail's energy and every channel has zero-crossing and extrema
//! counts within one of each other (or `max_sift_iterations` is reached). The
//! accepted detail is an IMF; it is removed from the residual and the next mode
//! is sifted from what remains.
//!
//! The multivariate mean envelope projects the signal onto each direction of a
//! [`DirectionSet`], interpolates every channel through its values at the
//! projection maxima and averages the resulting envelopes. Because the
//! direction set is shared by all channels, every channel ends up with the
//! same number of IMFs.

mod directions;
mod extrema;
pub mod io;

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

pub use directions::{hammersley_directions, DirectionSet};
pub use extrema::{count_zero_crossings, envelope, find_extrema, satisfies_imf_count_condition};

use crate::error::{Error, Result};
use crate::signal::{ImfDecomposition, MultichannelSignal};
use crate::spline::GridSpline;
use extrema::mirrored_knots;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SiftConfig {
    pub max_sift_iterations: usize,
    /// Threshold on Σm² / Σd² (mean envelope energy over detail energy).
    pub envelope_mean_tolerance: f64,
    pub num_directions: usize,
    pub max_imfs: usize,
    /// Extrema mirrored at each end before spline fitting.
    pub boundary_extension: usize,
}

impl Default for SiftConfig {
    fn default() -> Self {
        Self {
            max_sift_iterations: 100,
            envelope_mean_tolerance: 1e-8,
            num_directions: 64,
            max_imfs: 12,
            boundary_extension: 2,
        }
    }
}

impl SiftConfig {
    pub fn validate(&self, n_channels: usize) -> Result<()> {
        if self.max_sift_iterations == 0 {
            return Err(Error::domain("max_sift_iterations must be at least 1"));
        }
        if self.max_imfs == 0 {
            return Err(Error::domain("max_imfs must be at least 1"));
        }
        if !(self.envelope_mean_tolerance >= 0.0) {
            return Err(Error::domain("envelope_mean_tolerance must be non-negative"));
        }
        if n_channels > 1 && self.num_directions < 2 * n_channels {
            return Err(Error::domain(format!(
                "num_directions = {} is below 2 × {n_channels} channels",
                self.num_directions
            )));
        }
        Ok(())
    }
}

fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Result of one mean-envelope estimate.
enum MeanEnvelope {
    Mean(Array2<f64>),
    /// Not enough extrema to form any envelope.
    Monotone,
}

/// Sifts one IMF out of `residual`. Returns `None` when the residual cannot be
/// enveloped at all, which ends the decomposition.
fn sift(
    residual: &Array2<f64>,
    cfg: &SiftConfig,
    imf_index: usize,
    ops: &mut SiftOps<'_>,
) -> Result<Option<Array2<f64>>> {
    let mut detail = residual.clone();
    for iteration in 0..cfg.max_sift_iterations {
        let mean = match (ops.mean_envelope)(&detail) {
            MeanEnvelope::Mean(m) => m,
            MeanEnvelope::Monotone if iteration == 0 => return Ok(None),
            MeanEnvelope::Monotone => break,
        };
        let mean_energy = energy(mean.as_slice().expect("standard layout"));
        let detail_energy = energy(detail.as_slice().expect("standard layout"));
        detail -= &mean;
        if !detail.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric {
                imf: imf_index,
                iteration,
            });
        }
        let small_mean = mean_energy <= cfg.envelope_mean_tolerance * detail_energy;
        if small_mean && (ops.is_imf)(&detail) {
            break;
        }
    }
    Ok(Some(detail))
}

/// Layout-specific pieces of the sifting loop.
struct SiftOps<'a> {
    /// Whether the residual still has enough extrema to yield another IMF.
    oscillates: &'a mut dyn FnMut(&Array2<f64>) -> bool,
    mean_envelope: &'a mut dyn FnMut(&Array2<f64>) -> MeanEnvelope,
    /// Zero-crossing / extrema count condition on every channel.
    is_imf: &'a dyn Fn(&Array2<f64>) -> bool,
}

fn decompose(
    x: Array2<f64>,
    cfg: &SiftConfig,
    source_trial_id: u32,
    ops: &mut SiftOps<'_>,
) -> Result<ImfDecomposition> {
    let mut residual = x;
    let mut imfs = Vec::new();
    while imfs.len() < cfg.max_imfs && (ops.oscillates)(&residual) {
        match sift(&residual, cfg, imfs.len() + 1, ops)? {
            Some(imf) => {
                residual -= &imf;
                imfs.push(imf);
            }
            None => break,
        }
    }
    Ok(ImfDecomposition {
        imfs,
        residuum: residual,
        source_trial_id,
    })
}

fn univariate_mean(x: &[f64], mirror: usize) -> MeanEnvelope {
    let (mx, mn) = find_extrema(x);
    match (envelope(x, &mx, mirror), envelope(x, &mn, mirror)) {
        (Ok(upper), Ok(lower)) => {
            let m: Vec<f64> = upper.iter().zip(&lower).map(|(u, l)| 0.5 * (u + l)).collect();
            MeanEnvelope::Mean(Array2::from_shape_vec((1, m.len()), m).expect("shape"))
        }
        _ => MeanEnvelope::Monotone,
    }
}

fn has_three_extrema(x: &[f64]) -> bool {
    let (mx, mn) = find_extrema(x);
    mx.len() + mn.len() >= 3
}

/// Univariate EMD of a single sample sequence.
pub fn emd(x: &[f64], cfg: &SiftConfig) -> Result<ImfDecomposition> {
    if x.len() < 4 {
        return Err(Error::domain(format!("EMD needs at least 4 samples, got {}", x.len())));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidSignal("non-finite sample".into()));
    }
    cfg.validate(1)?;
    let data = Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("shape");
    let mirror = cfg.boundary_extension;
    decompose(
        data,
        cfg,
        0,
        &mut SiftOps {
            oscillates: &mut |r| has_three_extrema(r.as_slice().expect("standard layout")),
            mean_envelope: &mut |d| univariate_mean(d.as_slice().expect("standard layout"), mirror),
            is_imf: &|d| satisfies_imf_count_condition(d.as_slice().expect("standard layout")),
        },
    )
}

/// Multivariate mean envelope over a samples × channels matrix.
struct Projector<'a> {
    directions: &'a DirectionSet,
    mirror: usize,
    // First `half` direction vectors as rows.
    basis: Array2<f64>,
    // One projection per row, filled by `project_all`.
    projections: Array2<f64>,
    knot_values: Vec<f64>,
    column: Vec<f64>,
    spline: GridSpline,
}

impl<'a> Projector<'a> {
    fn new(directions: &'a DirectionSet, n_samples: usize, mirror: usize) -> Self {
        let half = directions.half();
        let basis = Array2::from_shape_fn((half, directions.dim()), |(i, c)| directions.vectors()[i][c]);
        Self {
            directions,
            mirror,
            basis,
            projections: Array2::zeros((half, n_samples)),
            knot_values: Vec::new(),
            column: Vec::with_capacity(n_samples),
            spline: GridSpline::default(),
        }
    }

    /// Projects `x` onto the first `half` directions; the negated ones
    /// follow by sign.
    fn project_all(&mut self, x: &Array2<f64>) {
        general_mat_mul(1.0, &self.basis, &x.t(), 0.0, &mut self.projections);
    }

    /// True when at least one projection still has three or more extrema.
    fn any_oscillation(&mut self, x: &Array2<f64>) -> bool {
        self.project_all(x);
        self.projections
            .rows()
            .into_iter()
            .any(|p| has_three_extrema(p.as_slice().expect("standard layout")))
    }

    /// Adds the envelope through the channel values at `times` to `acc`.
    fn add_envelope(&mut self, x: &Array2<f64>, times: &[usize], acc: &mut Array2<f64>) {
        let (n, n_ch) = x.dim();
        let xs = x.as_slice().expect("standard layout");
        let (knots, source) = mirrored_knots(times, n, self.mirror);
        self.spline
            .reset(&knots, n)
            .expect("mirrored knots are increasing");
        self.knot_values.clear();
        for &t in &source {
            self.knot_values.extend_from_slice(&xs[t * n_ch..(t + 1) * n_ch]);
        }
        self.spline.accumulate_columns(
            &self.knot_values,
            n_ch,
            acc.as_slice_mut().expect("standard layout"),
        );
    }

    fn mean(&mut self, x: &Array2<f64>) -> MeanEnvelope {
        let mut acc = Array2::<f64>::zeros(x.dim());
        let mut used = 0usize;
        let dirs = self.directions;
        let half = dirs.half();
        self.project_all(x);
        for i in 0..half {
            let (maxima, minima) =
                find_extrema(self.projections.row(i).as_slice().expect("standard layout"));
            if maxima.len() >= 2 {
                self.add_envelope(x, &maxima, &mut acc);
                used += 1;
            }
            // maxima along the negated direction
            if half + i < dirs.len() && minima.len() >= 2 {
                self.add_envelope(x, &minima, &mut acc);
                used += 1;
            }
        }
        if used == 0 {
            return MeanEnvelope::Monotone;
        }
        acc /= used as f64;
        MeanEnvelope::Mean(acc)
    }

    fn channels_are_imfs(&mut self, x: &Array2<f64>) -> bool {
        for col in x.axis_iter(Axis(1)) {
            self.column.clear();
            self.column.extend(col.iter().copied());
            if !satisfies_imf_count_condition(&self.column) {
                return false;
            }
        }
        true
    }
}

fn to_channel_major(a: Array2<f64>) -> Array2<f64> {
    a.reversed_axes().as_standard_layout().into_owned()
}

/// Multivariate EMD of all channels jointly.
///
/// Single-channel signals are handed to [`emd`].
pub fn memd(s: &MultichannelSignal, cfg: &SiftConfig) -> Result<ImfDecomposition> {
    memd_with_id(s, cfg, 0)
}

/// [`memd`] tagging the result with the trial it came from.
pub fn memd_with_id(s: &MultichannelSignal, cfg: &SiftConfig, trial_id: u32) -> Result<ImfDecomposition> {
    if s.n_samples() < 4 {
        return Err(Error::domain(format!(
            "MEMD needs at least 4 samples, got {}",
            s.n_samples()
        )));
    }
    if s.n_channels() == 1 {
        let mut d = emd(s.channel(0), cfg)?;
        d.source_trial_id = trial_id;
        return Ok(d);
    }
    cfg.validate(s.n_channels())?;
    let directions = hammersley_directions(s.n_channels(), cfg.num_directions)?;
    let projector = std::cell::RefCell::new(Projector::new(
        &directions,
        s.n_samples(),
        cfg.boundary_extension,
    ));
    // Sifting runs on samples × channels so that per-sample work is contiguous.
    let samples_major = s.data().t().as_standard_layout().into_owned();
    let d = decompose(
        samples_major,
        cfg,
        trial_id,
        &mut SiftOps {
            oscillates: &mut |r| projector.borrow_mut().any_oscillation(r),
            mean_envelope: &mut |d| projector.borrow_mut().mean(d),
            is_imf: &|d| projector.borrow_mut().channels_are_imfs(d),
        },
    )?;
    Ok(ImfDecomposition {
        imfs: d.imfs.into_iter().map(to_channel_major).collect(),
        residuum: to_channel_major(d.residuum),
        source_trial_id: trial_id,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{pearson_correlation, reconstruct};
    use std::f64::consts::PI;

    fn tone(f: f64, fs: f64, n: usize, phase: f64) -> Vec<f64> {
        (0..n).map(|t| (2.0 * PI * f * t as f64 / fs + phase).sin()).collect()
    }

    fn best_match(d: &ImfDecomposition, reference: &[f64]) -> f64 {
        d.imfs
            .iter()
            .filter_map(|imf| pearson_correlation(imf.row(0).as_slice().unwrap(), reference).ok())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn pure_tone_first_imf() {
        let x = tone(10.0, 250.0, 500, 0.4);
        let d = emd(&x, &SiftConfig::default()).unwrap();
        assert!(d.n_imfs() >= 1);
        let r = pearson_correlation(d.imfs[0].row(0).as_slice().unwrap(), &x).unwrap();
        assert!(r > 0.95, "PCC {r}");
        let res_energy = energy(d.residuum.as_slice().unwrap());
        assert!(res_energy < 0.05 * energy(&x));
    }

    #[test]
    fn two_tones_are_separated() {
        let slow = tone(2.0, 250.0, 1000, 1.1);
        let fast = tone(25.0, 250.0, 1000, 0.2);
        let x: Vec<f64> = slow.iter().zip(&fast).map(|(a, b)| a + b).collect();
        let d = emd(&x, &SiftConfig::default()).unwrap();
        assert!(best_match(&d, &fast) > 0.9);
        assert!(best_match(&d, &slow) > 0.9);
        let rec = reconstruct(&d, None).unwrap();
        let err = rec.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-8);
    }

    #[test]
    fn constant_input_has_no_imfs() {
        let x = vec![3.25; 64];
        let d = emd(&x, &SiftConfig::default()).unwrap();
        assert_eq!(d.n_imfs(), 0);
        assert_eq!(d.residuum.row(0).to_vec(), x);
    }

    #[test]
    fn short_or_bad_input_rejected() {
        assert!(emd(&[1.0, 2.0, 1.0], &SiftConfig::default()).is_err());
        assert!(emd(&[1.0, f64::INFINITY, 1.0, 0.0], &SiftConfig::default()).is_err());
        let cfg = SiftConfig {
            max_sift_iterations: 0,
            ..SiftConfig::default()
        };
        assert!(emd(&[1.0, 2.0, 1.0, 2.0], &cfg).is_err());
    }

    #[test]
    fn identical_channels_give_identical_stacks() {
        let x: Vec<f64> = tone(3.0, 100.0, 400, 0.0)
            .iter()
            .zip(tone(17.0, 100.0, 400, 0.5))
            .map(|(a, b)| a + 0.7 * b)
            .collect();
        let s = MultichannelSignal::from_channels(&[x.clone(), x], 100.0, vec!["a".into(), "b".into()])
            .unwrap();
        let cfg = SiftConfig {
            num_directions: 16,
            ..SiftConfig::default()
        };
        let d = memd(&s, &cfg).unwrap();
        assert!(d.n_imfs() >= 2);
        for imf in &d.imfs {
            for (a, b) in imf.row(0).iter().zip(imf.row(1).iter()) {
                assert!((a - b).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn memd_requires_enough_directions() {
        let s = MultichannelSignal::unlabeled(Array2::from_shape_fn((4, 50), |(c, t)| ((c + 1) * t) as f64 % 3.0), 50.0)
            .unwrap();
        let cfg = SiftConfig {
            num_directions: 6,
            ..SiftConfig::default()
        };
        assert!(matches!(memd(&s, &cfg), Err(Error::Domain(_))));
    }
}
