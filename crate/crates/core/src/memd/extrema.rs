//! Extrema detection, zero crossings and spline envelopes.

use crate::error::{Error, Result};
use crate::spline::GridSpline;

/// Indices of strict local maxima and minima.
///
/// A flat run of equal samples counts as one extremum located at its midpoint
/// (the lower index when the run has even length). Runs touching either end of
/// the sequence are never extrema.
pub fn find_extrema(x: &[f64]) -> (Vec<usize>, Vec<usize>) {
    let mut maxima = Vec::new();
    let mut minima = Vec::new();
    let n = x.len();
    if n < 3 {
        return (maxima, minima);
    }
    let mut s = 1;
    while s < n - 1 {
        let mut e = s;
        while e + 1 < n && x[e + 1] == x[s] {
            e += 1;
        }
        if e >= n - 1 {
            break;
        }
        let (prev, next, v) = (x[s - 1], x[e + 1], x[s]);
        if v > prev && v > next {
            maxima.push((s + e) / 2);
        } else if v < prev && v < next {
            minima.push((s + e) / 2);
        }
        s = e + 1;
    }
    (maxima, minima)
}

/// Number of sign changes, with exact zeros skipped.
pub fn count_zero_crossings(x: &[f64]) -> usize {
    let mut last = 0.0f64;
    let mut count = 0;
    for &v in x {
        if v == 0.0 {
            continue;
        }
        if last != 0.0 && (v > 0.0) != (last > 0.0) {
            count += 1;
        }
        last = v;
    }
    count
}

/// Zero-crossing and extrema counts equal or differing by one.
pub fn satisfies_imf_count_condition(x: &[f64]) -> bool {
    let (mx, mn) = find_extrema(x);
    let zc = count_zero_crossings(x) as i64;
    ((mx.len() + mn.len()) as i64 - zc).abs() <= 1
}

/// Knot positions and mirrored source indices for an extrema set.
///
/// The first and last `mirror` extrema are reflected about the first and last
/// sample so the spline is anchored beyond both ends of the record.
pub(crate) fn mirrored_knots(extrema: &[usize], n: usize, mirror: usize) -> (Vec<f64>, Vec<usize>) {
    let m = mirror.min(extrema.len());
    let last = (n - 1) as f64;
    let mut knots = Vec::with_capacity(extrema.len() + 2 * m);
    let mut source = Vec::with_capacity(extrema.len() + 2 * m);
    for &i in extrema[..m].iter().rev() {
        knots.push(-(i as f64));
        source.push(i);
    }
    for &i in extrema {
        knots.push(i as f64);
        source.push(i);
    }
    for &i in extrema[extrema.len() - m..].iter().rev() {
        knots.push(2.0 * last - i as f64);
        source.push(i);
    }
    (knots, source)
}

/// Cubic spline envelope through `x` at the given extrema.
///
/// `mirror` extrema are reflected at each end before fitting. Fewer than two
/// extrema means there is nothing to envelope (a monotone residual) and is
/// reported as a degenerate input.
pub fn envelope(x: &[f64], extrema: &[usize], mirror: usize) -> Result<Vec<f64>> {
    if extrema.len() < 2 {
        return Err(Error::Degenerate(format!(
            "monotone residual: {} extrema, need 2 for an envelope",
            extrema.len()
        )));
    }
    if let Some(&bad) = extrema.iter().find(|&&i| i >= x.len()) {
        return Err(Error::domain(format!("extremum index {bad} outside signal")));
    }
    let (knots, source) = mirrored_knots(extrema, x.len(), mirror);
    let values: Vec<f64> = source.iter().map(|&i| x[i]).collect();
    let mut spline = GridSpline::new(&knots, x.len())?;
    Ok(spline.evaluate(&values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn one_period_of_sine() {
        let x: Vec<f64> = (0..100).map(|t| (2.0 * PI * t as f64 / 100.0).sin()).collect();
        let (mx, mn) = find_extrema(&x);
        assert_eq!(mx, vec![25]);
        assert_eq!(mn, vec![75]);
    }

    #[test]
    fn monotone_and_plateaus() {
        let (mx, mn) = find_extrema(&[0.0, 1.0, 2.0, 3.5, 9.0]);
        assert!(mx.is_empty() && mn.is_empty());
        assert_eq!(find_extrema(&[0.0, 1.0, 1.0, 0.0]), (vec![1], vec![]));
        assert_eq!(find_extrema(&[3.0, 1.0, 1.0, 1.0, 2.0]), (vec![], vec![2]));
        // plateau running into the end is not an extremum
        assert_eq!(find_extrema(&[0.0, 2.0, 2.0, 2.0]), (vec![], vec![]));
        // shoulder (step) is not an extremum
        assert_eq!(find_extrema(&[0.0, 1.0, 1.0, 2.0, 0.0]), (vec![3], vec![]));
    }

    #[test]
    fn zero_crossings() {
        assert_eq!(count_zero_crossings(&[1.0, -1.0, 1.0]), 2);
        assert_eq!(count_zero_crossings(&[1.0, 0.0, -1.0]), 1);
        assert_eq!(count_zero_crossings(&[1.0, 0.0, 1.0]), 0);
    }

    #[test]
    fn envelope_of_sinusoid_tracks_amplitude() {
        let amp = 2.0;
        let x: Vec<f64> = (0..1000)
            .map(|t| amp * (2.0 * PI * 10.0 * t as f64 / 250.0 + 0.3).sin())
            .collect();
        let (mx, _) = find_extrema(&x);
        let up = envelope(&x, &mx, 2).unwrap();
        for v in &up[100..900] {
            assert!((v - amp).abs() < 0.02 * amp);
        }
    }

    #[test]
    fn envelope_interpolates_knots_and_needs_two() {
        let x = [0.0, 3.0, 1.0, 2.0, 0.5, 4.0, 0.0, 1.0];
        let (mx, _) = find_extrema(&x);
        let up = envelope(&x, &mx, 2).unwrap();
        for &i in &mx {
            assert!((up[i] - x[i]).abs() < 1e-12);
        }
        assert!(matches!(envelope(&x, &mx[..1], 2), Err(Error::Degenerate(_))));
        // no mirroring, 2 knots: straight line between them
        let lin = envelope(&x, &[1, 5], 0).unwrap();
        for t in 1..=5 {
            let expected = 3.0 + (t as f64 - 1.0) * 0.25;
            assert!((lin[t] - expected).abs() < 1e-12);
        }
    }
}
