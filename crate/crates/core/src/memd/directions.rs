//! Projection directions on the unit (n−1)-sphere.

use crate::error::{Error, Result};

/// Unit direction vectors used to project an n-channel signal.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionSet {
    vectors: Vec<Vec<f64>>,
    dim: usize,
    // vectors[half + i] == -vectors[i] for every i < len - half
    half: usize,
}

impl DirectionSet {
    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Index of the first negated vector; `vectors[half + i] = -vectors[i]`.
    pub(crate) fn half(&self) -> usize {
        self.half
    }
}

/// Van der Corput radical inverse of `i` in `base`.
fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut scale = inv;
    let mut acc = 0.0;
    while i > 0 {
        acc += (i % base) as f64 * scale;
        i /= base;
        scale *= inv;
    }
    acc
}

fn first_primes(count: usize) -> Vec<u64> {
    let mut primes = Vec::with_capacity(count);
    let mut candidate = 2u64;
    while primes.len() < count {
        if primes.iter().take_while(|&&p| p * p <= candidate).all(|&p| candidate % p != 0) {
            primes.push(candidate);
        }
        candidate += 1;
    }
    primes
}

/// Deterministic direction set built from a Hammersley point set.
///
/// `ceil(K/2)` Hammersley points are mapped onto the sphere: the first coordinate
/// is `(k + 0.5) / H`, the others are radical inverses of `k + 1` in successive
/// prime bases. In two dimensions the first coordinate sets the angle on the
/// upper half circle; in higher dimensions the cube point is rescaled to
/// `[-1, 1]^n` and normalised. The remaining `floor(K/2)` vectors are the
/// negatives of the first ones, so maxima along `-v` are the minima along `v`.
pub fn hammersley_directions(n: usize, k: usize) -> Result<DirectionSet> {
    if n == 0 {
        return Err(Error::domain("direction dimension must be at least 1"));
    }
    if k < 2 * n {
        return Err(Error::domain(format!(
            "need at least {} directions for {n} channels, got {k}",
            2 * n
        )));
    }
    if n == 1 && k != 2 {
        return Err(Error::domain("only two unit directions exist in one dimension"));
    }

    let half = k.div_ceil(2);
    let primes = first_primes(n.saturating_sub(1));
    let mut vectors = Vec::with_capacity(k);
    for i in 0..half {
        let u0 = (i as f64 + 0.5) / half as f64;
        let v = match n {
            1 => vec![1.0],
            2 => {
                let theta = std::f64::consts::PI * u0;
                vec![theta.cos(), theta.sin()]
            }
            _ => {
                let mut b = Vec::with_capacity(n);
                b.push(2.0 * u0 - 1.0);
                for &p in &primes {
                    b.push(2.0 * radical_inverse(i as u64 + 1, p) - 1.0);
                }
                let norm = b.iter().map(|x| x * x).sum::<f64>().sqrt();
                b.iter().map(|x| x / norm).collect()
            }
        };
        vectors.push(v);
    }
    for i in 0..k - half {
        let neg: Vec<f64> = vectors[i].iter().map(|x| -x).collect();
        vectors.push(neg);
    }
    Ok(DirectionSet {
        vectors,
        dim: n,
        half,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn norms_ok(d: &DirectionSet) -> bool {
        d.vectors()
            .iter()
            .all(|v| (v.iter().map(|x| x * x).sum::<f64>().sqrt() - 1.0).abs() < 1e-12)
    }

    fn pairwise_distinct(d: &DirectionSet) -> bool {
        let v = d.vectors();
        for i in 0..v.len() {
            for j in i + 1..v.len() {
                let dist: f64 = v[i].iter().zip(&v[j]).map(|(a, b)| (a - b).powi(2)).sum();
                if dist < 1e-18 {
                    return false;
                }
            }
        }
        true
    }

    #[test]
    fn circle_eight() {
        let d = hammersley_directions(2, 8).unwrap();
        assert_eq!(d.len(), 8);
        assert!(norms_ok(&d));
        assert!(pairwise_distinct(&d));
    }

    #[test]
    fn sixteen_channels_sixty_four() {
        let d = hammersley_directions(16, 64).unwrap();
        assert_eq!(d.len(), 64);
        assert_eq!(d.dim(), 16);
        assert!(norms_ok(&d));
        assert!(pairwise_distinct(&d));
    }

    #[test]
    fn deterministic_and_antipodal() {
        let a = hammersley_directions(19, 64).unwrap();
        let b = hammersley_directions(19, 64).unwrap();
        assert_eq!(a, b);
        for i in 0..32 {
            for (x, y) in a.vectors()[i].iter().zip(&a.vectors()[i + 32]) {
                assert_eq!(*x, -*y);
            }
        }
        let odd = hammersley_directions(3, 7).unwrap();
        assert_eq!(odd.len(), 7);
        assert!(pairwise_distinct(&odd));
    }

    #[test]
    fn radical_inverse_values() {
        assert_eq!(radical_inverse(1, 2), 0.5);
        assert_eq!(radical_inverse(3, 2), 0.75);
        assert!((radical_inverse(5, 3) - (2.0 / 3.0 + 1.0 / 9.0)).abs() < 1e-15);
        assert_eq!(first_primes(5), vec![2, 3, 5, 7, 11]);
    }

    #[test]
    fn rejects_too_few() {
        assert!(hammersley_directions(4, 7).is_err());
        assert!(hammersley_directions(0, 4).is_err());
        assert!(hammersley_directions(1, 4).is_err());
        assert_eq!(hammersley_directions(1, 2).unwrap().vectors(), &[vec![1.0], vec![-1.0]]);
    }
}
