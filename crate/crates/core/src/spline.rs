//! Natural cubic splines.
//!
//! [`GridSpline`] is the workhorse for envelope estimation: knot positions are
//! fixed once, the tridiagonal factorisation and the per-sample evaluation
//! weights are shared, and any number of value vectors (one per channel) can be
//! interpolated onto the sample grid `0..n` for the price of a back-substitution
//! and a cubic Horner step per sample.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct GridSpline {
    knots: Vec<f64>,
    h: Vec<f64>,
    // Thomas factors for the interior second derivatives.
    upper: Vec<f64>,
    inv_denom: Vec<f64>,
    inv_h: Vec<f64>,
    // Grid samples [spans[i], spans[i + 1]) fall in knot interval i.
    spans: Vec<usize>,
    n_samples: usize,
    rhs: Vec<f64>,
    second: Vec<f64>,
    // Per-interval cubic coefficients in the local offset t - knots[i],
    // interval-major with `width` values each.
    c1: Vec<f64>,
    c2: Vec<f64>,
    c3: Vec<f64>,
}

impl GridSpline {
    /// Prepares interpolation through `knots` (strictly increasing) onto `0..n`.
    pub fn new(knots: &[f64], n_samples: usize) -> Result<Self> {
        let mut s = Self::default();
        s.reset(knots, n_samples)?;
        Ok(s)
    }

    /// Re-targets the spline to new knots, reusing allocations.
    pub fn reset(&mut self, knots: &[f64], n_samples: usize) -> Result<()> {
        let k = knots.len();
        if k < 2 {
            return Err(Error::domain(format!("spline needs at least 2 knots, got {k}")));
        }
        self.knots.clear();
        self.knots.extend_from_slice(knots);
        self.h.clear();
        self.h.extend(knots.windows(2).map(|w| w[1] - w[0]));
        if self.h.iter().any(|&d| !(d > 0.0)) {
            return Err(Error::domain("spline knots must be strictly increasing"));
        }

        self.inv_h.clear();
        self.inv_h.extend(self.h.iter().map(|h| 1.0 / h));

        let interior = k - 2;
        self.upper.resize(interior, 0.0);
        self.inv_denom.resize(interior, 0.0);
        for j in 0..interior {
            // row j couples M_j, M_{j+1}, M_{j+2} (knot indices)
            let sub = self.h[j];
            let diag = 2.0 * (self.h[j] + self.h[j + 1]);
            let d = if j == 0 { diag } else { diag - sub * self.upper[j - 1] };
            self.inv_denom[j] = 1.0 / d;
            self.upper[j] = self.h[j + 1] / d;
        }

        // Sample t belongs to the first interval whose right knot is >= t;
        // samples beyond the outer knots use the outermost cubic.
        self.n_samples = n_samples;
        self.spans.clear();
        self.spans.push(0);
        for &x in &knots[1..k - 1] {
            let first_after = if x < 0.0 { 0 } else { (x.floor() as usize).saturating_add(1) };
            let prev = *self.spans.last().expect("non-empty");
            self.spans.push(first_after.clamp(prev, n_samples));
        }
        self.spans.push(n_samples);
        Ok(())
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Solves for the second derivatives of `width` interleaved value sets.
    #[inline(always)]
    fn solve(&mut self, y: &[f64], width: usize) {
        let k = self.knots.len();
        let interior = k - 2;
        // every entry below is overwritten, so stale values are harmless
        self.rhs.resize(interior.max(1) * width, 0.0);
        self.second.resize(k * width, 0.0);
        self.second[..width].fill(0.0);
        self.second[(k - 1) * width..].fill(0.0);

        for j in 0..interior {
            let (ia, ib) = (self.inv_h[j], self.inv_h[j + 1]);
            let (hj, inv_d) = (self.h[j], self.inv_denom[j]);
            let (y0, y1, y2) = (
                &y[j * width..(j + 1) * width],
                &y[(j + 1) * width..(j + 2) * width],
                &y[(j + 2) * width..(j + 3) * width],
            );
            let (prev, cur) = self.rhs.split_at_mut(j * width);
            let cur = &mut cur[..width];
            if j == 0 {
                for c in 0..width {
                    cur[c] = 6.0 * ((y2[c] - y1[c]) * ib - (y1[c] - y0[c]) * ia) * inv_d;
                }
            } else {
                let prev = &prev[(j - 1) * width..];
                for c in 0..width {
                    let r = 6.0 * ((y2[c] - y1[c]) * ib - (y1[c] - y0[c]) * ia);
                    cur[c] = (r - hj * prev[c]) * inv_d;
                }
            }
        }
        for j in (0..interior).rev() {
            let u = self.upper[j];
            let (head, tail) = self.second.split_at_mut((j + 2) * width);
            let next = &tail[..width];
            let dst = &mut head[(j + 1) * width..];
            let r = &self.rhs[j * width..(j + 1) * width];
            for c in 0..width {
                dst[c] = r[c] - u * next[c];
            }
        }

        // S(x_i + s) = y_i + c1 s + c2 s^2 + c3 s^3 on interval i.
        let n_int = k - 1;
        for v in [&mut self.c1, &mut self.c2, &mut self.c3] {
            v.resize(n_int * width, 0.0);
        }
        let m = &self.second;
        let rows = self
            .c1
            .chunks_exact_mut(width)
            .zip(self.c2.chunks_exact_mut(width))
            .zip(self.c3.chunks_exact_mut(width))
            .zip(self.h.iter().zip(&self.inv_h))
            .enumerate();
        for (i, (((c1, c2), c3), (&h, &ih))) in rows {
            let (m0, m1) = (&m[i * width..(i + 1) * width], &m[(i + 1) * width..(i + 2) * width]);
            let (y0, y1) = (&y[i * width..(i + 1) * width], &y[(i + 1) * width..(i + 2) * width]);
            let h6 = h / 6.0;
            let ih6 = ih / 6.0;
            for c in 0..width {
                c1[c] = (y1[c] - y0[c]) * ih - h6 * (2.0 * m0[c] + m1[c]);
                c2[c] = 0.5 * m0[c];
                c3[c] = (m1[c] - m0[c]) * ih6;
            }
        }
    }

    /// Adds the spline through `y` to `out` at every grid sample.
    pub fn accumulate(&mut self, y: &[f64], out: &mut [f64]) {
        self.accumulate_columns(y, 1, out);
    }

    /// Interpolates `width` value sets at once.
    ///
    /// `y` is knots × `width` and `out` is grid samples × `width`, both
    /// row-major; column `c` of `out` receives the spline through column `c`
    /// of `y`. Keeping the channel index innermost lets the solve and the
    /// evaluation run over contiguous memory.
    pub fn accumulate_columns(&mut self, y: &[f64], width: usize, out: &mut [f64]) {
        let k = self.knots.len();
        assert_eq!(y.len(), k * width, "knots × width values");
        assert_eq!(out.len(), self.n_samples * width, "grid × width output");
        #[cfg(target_arch = "x86_64")]
        {
            if width >= 8 && std::arch::is_x86_feature_detected!("avx512f") {
                // SAFETY: feature presence checked just above.
                unsafe { self.accumulate_avx512(y, width, out) };
                return;
            }
            if width >= 2 && std::arch::is_x86_feature_detected!("avx2") {
                // SAFETY: feature presence checked just above.
                unsafe { self.accumulate_avx2(y, width, out) };
                return;
            }
        }
        self.accumulate_generic(y, width, out);
    }

    // The wide variants only change instruction selection; no contraction into
    // fused multiply-adds happens, so every path gives identical bits.
    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx512f")]
    unsafe fn accumulate_avx512(&mut self, y: &[f64], width: usize, out: &mut [f64]) {
        self.accumulate_generic(y, width, out)
    }

    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx2")]
    unsafe fn accumulate_avx2(&mut self, y: &[f64], width: usize, out: &mut [f64]) {
        self.accumulate_generic(y, width, out)
    }

    #[inline(always)]
    fn accumulate_generic(&mut self, y: &[f64], width: usize, out: &mut [f64]) {
        self.solve(y, width);
        let w = width;
        for i in 0..self.knots.len() - 1 {
            let (lo, hi) = (self.spans[i], self.spans[i + 1]);
            if lo == hi {
                continue;
            }
            let r = i * w..(i + 1) * w;
            let (y0, c1, c2, c3) = (&y[r.clone()], &self.c1[r.clone()], &self.c2[r.clone()], &self.c3[r]);
            let x0 = self.knots[i];
            for (t, o) in (lo..hi).zip(out[lo * w..hi * w].chunks_exact_mut(w)) {
                let s = t as f64 - x0;
                for ((((o, &a), &b), &c), &d) in o.iter_mut().zip(y0).zip(c1).zip(c2).zip(c3) {
                    *o += a + s * (b + s * (c + s * d));
                }
            }
        }
    }

    /// Evaluates the spline through `y` on the grid.
    pub fn evaluate(&mut self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_samples];
        self.accumulate(y, &mut out);
        out
    }
}

/// Natural cubic spline evaluated at arbitrary points.
#[derive(Debug, Clone)]
pub struct NaturalCubicSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl NaturalCubicSpline {
    pub fn new(x: &[f64], y: &[f64]) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::domain("knot and value counts differ"));
        }
        let mut grid = GridSpline::new(x, 0)?;
        grid.solve(y, 1);
        Ok(Self {
            x: x.to_vec(),
            y: y.to_vec(),
            m: grid.second,
        })
    }

    pub fn eval(&self, t: f64) -> f64 {
        let k = self.x.len();
        let i = match self.x.partition_point(|&xi| xi < t) {
            0 => 0,
            p if p >= k => k - 2,
            p => p - 1,
        };
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = 1.0 - a;
        a * self.y[i]
            + b * self.y[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }
}
