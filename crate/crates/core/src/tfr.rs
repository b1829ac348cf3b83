//! Complex Morlet time-frequency power.
//!
//! Every frequency row is a same-length convolution of the input with a
//! unit-energy complex Morlet wavelet, computed in the frequency domain. A
//! [`MorletBank`] keeps the transformed wavelets for one signal length so the
//! many images and feature vectors of a session share a single set of FFT
//! plans and kernel spectra.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use ndarray::{Array2, ArrayView2};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{MultichannelSignal, Segment, Trial};

/// Frequency grid and wavelet width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WaveletConfig {
    pub f_min: f64,
    pub f_max: f64,
    pub f_step: f64,
    /// Wavelet width in cycles of the peak frequency.
    pub cycles: f64,
}

impl Default for WaveletConfig {
    fn default() -> Self {
        Self {
            f_min: 8.0,
            f_max: 30.0,
            f_step: 1.0,
            cycles: 7.0,
        }
    }
}

impl WaveletConfig {
    pub fn validate(&self, fs: f64) -> Result<()> {
        let nyquist = fs / 2.0;
        if !(self.f_min > 0.0 && self.f_min < self.f_max && self.f_max < nyquist) {
            return Err(Error::domain(format!(
                "frequency grid [{}, {}] must satisfy 0 < f_min < f_max < fs/2 = {nyquist}",
                self.f_min, self.f_max
            )));
        }
        if !(self.f_step > 0.0) {
            return Err(Error::domain("f_step must be positive"));
        }
        if !(self.cycles > 0.0) {
            return Err(Error::domain("cycles must be positive"));
        }
        Ok(())
    }

    /// `f_min, f_min + f_step, …` up to and including `f_max`.
    pub fn freqs(&self) -> Vec<f64> {
        let count = ((self.f_max - self.f_min) / self.f_step + 1e-9).floor() as usize + 1;
        (0..count).map(|i| self.f_min + i as f64 * self.f_step).collect()
    }
}

/// Time-frequency power, rows = `freqs`, columns = samples.
#[derive(Debug, Clone, PartialEq)]
pub struct TfImage {
    pub power: Array2<f64>,
    pub freqs: Vec<f64>,
    pub fs: f64,
}

impl TfImage {
    /// Power averaged over time for each frequency row.
    pub fn mean_power(&self) -> Vec<f64> {
        self.power
            .rows()
            .into_iter()
            .map(|r| r.sum() / r.len().max(1) as f64)
            .collect()
    }

    /// Frequency of the row with the largest time-averaged power.
    pub fn peak_frequency(&self) -> f64 {
        let m = self.mean_power();
        let best = m
            .iter()
            .enumerate()
            .fold(0, |b, (i, &v)| if v > m[b] { i } else { b });
        self.freqs[best]
    }
}

/// Unit-energy complex Morlet wavelet sampled at `fs`, truncated at ±4σ.
pub fn morlet_wavelet(f: f64, fs: f64, cycles: f64) -> Vec<Complex64> {
    let sigma = cycles / (2.0 * std::f64::consts::PI * f);
    let half = (4.0 * sigma * fs).ceil() as i64;
    let mut w: Vec<Complex64> = (-half..=half)
        .map(|k| {
            let t = k as f64 / fs;
            let g = (-t * t / (2.0 * sigma * sigma)).exp();
            Complex64::from_polar(g, 2.0 * std::f64::consts::PI * f * t)
        })
        .collect();
    let norm = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    w.iter_mut().for_each(|z| *z /= norm);
    w
}

/// Precomputed wavelet spectra for a fixed input length.
pub struct MorletBank {
    fs: f64,
    n: usize,
    freqs: Vec<f64>,
    // per row: (spectrum of the zero-padded wavelet, half-width)
    kernels: Vec<(Vec<Complex64>, usize)>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    spectrum: Vec<Complex64>,
    work: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl std::fmt::Debug for MorletBank {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MorletBank")
            .field("fs", &self.fs)
            .field("n", &self.n)
            .field("freqs", &self.freqs)
            .field("nfft", &self.spectrum.len())
            .finish()
    }
}

impl MorletBank {
    /// Bank over the full grid of `cfg`.
    pub fn new(fs: f64, n: usize, cfg: &WaveletConfig) -> Result<Self> {
        cfg.validate(fs)?;
        Self::with_freqs(fs, n, &cfg.freqs(), cfg.cycles)
    }

    /// Bank over an explicit list of frequencies.
    pub fn with_freqs(fs: f64, n: usize, freqs: &[f64], cycles: f64) -> Result<Self> {
        if !(fs > 0.0) {
            return Err(Error::domain("sampling rate must be positive"));
        }
        if let Some(bad) = freqs.iter().find(|&&f| !(f > 0.0 && f < fs / 2.0)) {
            return Err(Error::domain(format!("frequency {bad} Hz outside (0, {})", fs / 2.0)));
        }
        if freqs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::domain("frequencies must be strictly increasing"));
        }
        if !(cycles > 0.0) {
            return Err(Error::domain("cycles must be positive"));
        }
        let wavelets: Vec<Vec<Complex64>> = freqs.iter().map(|&f| morlet_wavelet(f, fs, cycles)).collect();
        let longest = wavelets.iter().map(Vec::len).max().unwrap_or(1);
        if n < longest {
            return Err(Error::domain(format!(
                "signal of {n} samples is shorter than the {longest}-sample wavelet support"
            )));
        }
        let nfft = (n + longest - 1).next_power_of_two();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(nfft);
        let inverse = planner.plan_fft_inverse(nfft);
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        let mut scratch = vec![Complex64::default(); scratch_len];
        let scale = 1.0 / nfft as f64;
        let kernels = wavelets
            .into_iter()
            .map(|w| {
                let half = (w.len() - 1) / 2;
                let mut buf = vec![Complex64::default(); nfft];
                buf[..w.len()].copy_from_slice(&w);
                forward.process_with_scratch(&mut buf, &mut scratch);
                // fold the inverse transform's 1/N into the kernel
                buf.iter_mut().for_each(|z| *z *= scale);
                (buf, half)
            })
            .collect();
        Ok(Self {
            fs,
            n,
            freqs: freqs.to_vec(),
            kernels,
            forward,
            inverse,
            spectrum: vec![Complex64::default(); nfft],
            work: vec![Complex64::default(); nfft],
            scratch,
        })
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Half-width in samples of the widest wavelet.
    pub fn max_half_width(&self) -> usize {
        self.kernels.iter().map(|k| k.1).max().unwrap_or(0)
    }

    fn load(&mut self, x: &[f64]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::domain(format!(
                "bank built for {} samples, got {}",
                self.n,
                x.len()
            )));
        }
        for (z, &v) in self.spectrum.iter_mut().zip(x) {
            *z = Complex64::new(v, 0.0);
        }
        self.spectrum[x.len()..].fill(Complex64::default());
        self.forward.process_with_scratch(&mut self.spectrum, &mut self.scratch);
        Ok(())
    }

    /// Convolves the loaded signal with row `row`, leaving the result in `work`.
    fn convolve_loaded(&mut self, row: usize) -> usize {
        let (kernel, half) = &self.kernels[row];
        for ((w, s), k) in self.work.iter_mut().zip(&self.spectrum).zip(kernel) {
            *w = s * k;
        }
        self.inverse.process_with_scratch(&mut self.work, &mut self.scratch);
        *half
    }

    /// Power image of `x` over every bank frequency.
    pub fn image(&mut self, x: &[f64]) -> Result<TfImage> {
        self.load(x)?;
        let mut power = Array2::zeros((self.freqs.len(), self.n));
        for (row, mut out) in power.rows_mut().into_iter().enumerate() {
            let half = self.convolve_loaded(row);
            for (p, z) in out.iter_mut().zip(&self.work[half..half + self.n]) {
                *p = z.norm_sqr();
            }
        }
        Ok(TfImage {
            power,
            freqs: self.freqs.clone(),
            fs: self.fs,
        })
    }

    /// Time-averaged power over `range` for each requested row.
    pub fn mean_power_in(&mut self, x: &[f64], rows: &[usize], range: std::ops::Range<usize>) -> Result<Vec<f64>> {
        if range.end > self.n || range.start >= range.end {
            return Err(Error::domain(format!("window {range:?} outside 0..{}", self.n)));
        }
        self.load(x)?;
        let len = range.len() as f64;
        let mut means = Vec::with_capacity(rows.len());
        for &row in rows {
            let half = self.convolve_loaded(row);
            let s: f64 = self.work[half + range.start..half + range.end]
                .iter()
                .map(|z| z.norm_sqr())
                .sum();
            means.push(s / len);
        }
        Ok(means)
    }
}

/// Morlet power of `x` at a single frequency.
pub fn morlet_convolution_power(x: &[f64], fs: f64, f: f64, cfg: &WaveletConfig) -> Result<Vec<f64>> {
    let mut bank = MorletBank::with_freqs(fs, x.len(), &[f], cfg.cycles)?;
    let img = bank.image(x)?;
    Ok(img.power.row(0).to_vec())
}

/// Time-frequency image of `x` over the grid of `cfg`.
pub fn tf_image(x: &[f64], fs: f64, cfg: &WaveletConfig) -> Result<TfImage> {
    MorletBank::new(fs, x.len(), cfg)?.image(x)
}

/// Named frequency band, closed interval in Hz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub name: String,
    pub f_lo: f64,
    pub f_hi: f64,
}

impl Band {
    pub fn new(name: &str, f_lo: f64, f_hi: f64) -> Self {
        Self {
            name: name.to_string(),
            f_lo,
            f_hi,
        }
    }
}

/// α = [8, 13] Hz and β = [13, 30] Hz.
pub fn default_bands() -> Vec<Band> {
    vec![Band::new("alpha", 8.0, 13.0), Band::new("beta", 13.0, 30.0)]
}

/// Band-power features for many signals of one shape.
///
/// Only the wavelet rows falling inside a band are evaluated, and only over an
/// excerpt covering the segment plus one wavelet half-width on each side;
/// samples outside the record count as zero in both cases, so the result equals
/// the full-length convolution restricted to the segment.
#[derive(Debug)]
pub struct FeatureExtractor {
    bands: Vec<Band>,
    // per band, indices into `bank.freqs()`
    band_rows: Vec<Vec<usize>>,
    rows: Vec<usize>,
    segment: Segment,
    excerpt: std::ops::Range<usize>,
    bank: MorletBank,
}

impl FeatureExtractor {
    pub fn new(fs: f64, n_samples: usize, segment: Segment, bands: &[Band], cfg: &WaveletConfig) -> Result<Self> {
        cfg.validate(fs)?;
        if segment.is_empty() || segment.end > n_samples {
            return Err(Error::domain(format!(
                "segment {}..{} outside 0..{n_samples}",
                segment.start, segment.end
            )));
        }
        let grid = cfg.freqs();
        let mut band_rows = Vec::with_capacity(bands.len());
        for b in bands {
            if !(b.f_lo >= cfg.f_min - 1e-9 && b.f_hi <= cfg.f_max + 1e-9 && b.f_lo <= b.f_hi) {
                return Err(Error::domain(format!(
                    "band {} [{}, {}] Hz not inside the wavelet grid [{}, {}]",
                    b.name, b.f_lo, b.f_hi, cfg.f_min, cfg.f_max
                )));
            }
            let rows: Vec<usize> = grid
                .iter()
                .enumerate()
                .filter(|(_, &f)| f >= b.f_lo - 1e-9 && f <= b.f_hi + 1e-9)
                .map(|(i, _)| i)
                .collect();
            if rows.is_empty() {
                return Err(Error::domain(format!("band {} contains no grid frequency", b.name)));
            }
            band_rows.push(rows);
        }
        let mut used: Vec<usize> = band_rows.iter().flatten().copied().collect();
        used.sort_unstable();
        used.dedup();
        let freqs: Vec<f64> = used.iter().map(|&i| grid[i]).collect();
        let half = freqs
            .iter()
            .map(|&f| morlet_wavelet(f, fs, cfg.cycles).len() / 2)
            .max()
            .unwrap_or(0);
        let excerpt = segment.start.saturating_sub(half)..(segment.end + half).min(n_samples);
        let bank_len = excerpt.len().max(2 * half + 1);
        let bank = MorletBank::with_freqs(fs, bank_len, &freqs, cfg.cycles)?;
        // remap band rows onto the bank's reduced frequency list
        let band_rows = band_rows
            .into_iter()
            .map(|rows| rows.iter().map(|r| used.binary_search(r).expect("row in use")).collect())
            .collect();
        Ok(Self {
            bands: bands.to_vec(),
            band_rows,
            rows: (0..used.len()).collect(),
            segment,
            excerpt,
            bank,
        })
    }

    pub fn bands(&self) -> &[Band] {
        &self.bands
    }

    pub fn n_features(&self, n_channels: usize) -> usize {
        n_channels * self.bands.len()
    }

    /// Features of a channels × samples matrix, channel-major, band-minor.
    pub fn features(&mut self, data: ArrayView2<f64>) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.n_features(data.nrows()));
        let mut buf = vec![0.0; self.bank.len()];
        let offset = self.segment.start - self.excerpt.start;
        let window = offset..offset + self.segment.len();
        for ch in data.rows() {
            buf.fill(0.0);
            for (b, &v) in buf.iter_mut().zip(ch.slice(ndarray::s![self.excerpt.clone()])) {
                *b = v;
            }
            let means = self.bank.mean_power_in(&buf, &self.rows, window.clone())?;
            for rows in &self.band_rows {
                out.push(rows.iter().map(|&r| means[r]).sum());
            }
        }
        Ok(out)
    }
}

/// Band-power features of `signal` over `segment`.
pub fn psd_features(
    signal: &MultichannelSignal,
    segment: Segment,
    bands: &[Band],
    cfg: &WaveletConfig,
) -> Result<Vec<f64>> {
    FeatureExtractor::new(signal.fs(), signal.n_samples(), segment, bands, cfg)?.features(signal.data().view())
}

/// Band-power features of a trial over its named segment.
pub fn trial_psd_features(trial: &Trial, segment: &str, bands: &[Band], cfg: &WaveletConfig) -> Result<Vec<f64>> {
    psd_features(&trial.signal, trial.segment(segment)?, bands, cfg)
}

/// Metadata written next to an exported image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PgmSidecar {
    pub f_min: f64,
    pub f_max: f64,
    pub f_step: f64,
    pub fs: f64,
    pub min_power: f64,
    pub max_power: f64,
}

/// 8-bit grey levels of an image, min-max scaled; constant images map to 0.
pub fn grey_levels(power: &Array2<f64>) -> Array2<u8> {
    let (lo, hi) = power
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    power.mapv(|v| {
        if span > 0.0 {
            ((v - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8
        } else {
            0
        }
    })
}

/// Binary PGM (P5) bytes; the highest frequency is the top row.
pub fn encode_pgm(img: &TfImage) -> Vec<u8> {
    let grey = grey_levels(&img.power);
    let (rows, cols) = grey.dim();
    let mut out = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    for r in (0..rows).rev() {
        out.extend(grey.row(r).iter());
    }
    out
}

/// Writes `<stem>.pgm` and `<stem>.json` into `dir`.
pub fn write_pgm(dir: &Path, stem: &str, img: &TfImage) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::File::create(dir.join(format!("{stem}.pgm")))?.write_all(&encode_pgm(img))?;
    let (min_power, max_power) = img
        .power
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let step = if img.freqs.len() > 1 { img.freqs[1] - img.freqs[0] } else { 0.0 };
    let sidecar = PgmSidecar {
        f_min: img.freqs.first().copied().unwrap_or(0.0),
        f_max: img.freqs.last().copied().unwrap_or(0.0),
        f_step: step,
        fs: img.fs,
        min_power,
        max_power,
    };
    let mut text = serde_json::to_string_pretty(&sidecar)?;
    text.push('\n');
    fs::write(dir.join(format!("{stem}.json")), text)?;
    Ok(())
}
