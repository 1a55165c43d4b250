//! Dense row-major matrices and log-space primitives.
//!
//! Everything in this module is deliberately small and allocation-happy: the
//! models in this crate run at desk scale, where clarity and testability
//! matter more than throughput. Log-space values may use `-inf` as an
//! "impossible" sentinel; all other entries are expected to stay finite.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> Mat<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![S::zero(); rows * cols],
        }
    }

    /// Build from row-major data. Panics if the length is not `rows * cols`;
    /// this is a programming error, not an input error.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<S>) -> Self {
        assert_eq!(data.len(), rows * cols, "row-major data length mismatch");
        Mat { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> S) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Mat { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |r, c| if r == c { S::one() } else { S::zero() })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[S] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [S] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(Error::shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Mat::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == S::zero() {
                    continue;
                }
                let rhs_row = rhs.row(k);
                let out_row = out.row_mut(i);
                for (o, &b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Sum of squared entries (squared Frobenius norm).
    pub fn sum_sq(&self) -> S {
        self.data.iter().fold(S::zero(), |acc, &v| acc + v * v)
    }
}

impl<S: Scalar> Index<(usize, usize)> for Mat<S> {
    type Output = S;

    fn index(&self, (r, c): (usize, usize)) -> &S {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl<S: Scalar> IndexMut<(usize, usize)> for Mat<S> {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut S {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .fold(S::zero(), |acc, (&x, &y)| acc + x * y)
}

/// log(sum(exp(x))) with the max-shift trick. Returns `-inf` iff every input
/// is `-inf`; never overflows for inputs up to ~700 (in f64).
pub fn log_sum_exp<S: Scalar>(xs: &[S]) -> S {
    debug_assert!(!xs.is_empty());
    let m = xs.iter().cloned().fold(S::neg_infinity(), S::max);
    if m == S::neg_infinity() {
        return S::neg_infinity();
    }
    let sum = xs
        .iter()
        .fold(S::zero(), |acc, &x| acc + (x - m).exp());
    m + sum.ln()
}

/// Shift-invariant softmax. Entries are positive and sum to 1.
pub fn softmax<S: Scalar>(xs: &[S]) -> Vec<S> {
    debug_assert!(!xs.is_empty());
    let m = xs.iter().cloned().fold(S::neg_infinity(), S::max);
    let exps: Vec<S> = xs.iter().map(|&x| (x - m).exp()).collect();
    let sum = exps.iter().fold(S::zero(), |acc, &e| acc + e);
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn log_softmax<S: Scalar>(xs: &[S]) -> Vec<S> {
    let lse = log_sum_exp(xs);
    xs.iter().map(|&x| x - lse).collect()
}

/// Central-difference gradient check.
///
/// Returns the maximum over coordinates of
/// `|difference - analytic| / max(1, |analytic|, |difference|)`.
pub fn grad_check<S: Scalar>(
    mut f: impl FnMut(&[S]) -> S,
    theta: &[S],
    analytic: &[S],
    eps: S,
) -> S {
    assert_eq!(theta.len(), analytic.len());
    let mut point = theta.to_vec();
    let mut worst = S::zero();
    for i in 0..theta.len() {
        point[i] = theta[i] + eps;
        let up = f(&point);
        point[i] = theta[i] - eps;
        let down = f(&point);
        point[i] = theta[i];
        let diff = (up - down) / (S::of(2.0) * eps);
        let denom = S::one().max(analytic[i].abs()).max(diff.abs());
        let err = (diff - analytic[i]).abs() / denom;
        worst = worst.max(err);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_mat(rng: &mut impl Rng, rows: usize, cols: usize) -> Mat<f64> {
        Mat::from_fn(rows, cols, |_, _| rng.gen_range(-2.0..2.0))
    }

    /// Independent triple-loop product used as the matmul oracle.
    fn matmul_naive(a: &Mat<f64>, b: &Mat<f64>) -> Mat<f64> {
        let mut out = Mat::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut acc = 0.0;
                for k in 0..a.cols() {
                    acc += a[(i, k)] * b[(k, j)];
                }
                out[(i, j)] = acc;
            }
        }
        out
    }

    #[test]
    fn matmul_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = random_mat(&mut rng, 3, 4);
        let id = Mat::<f64>::identity(3);
        assert_eq!(id.matmul(&b).unwrap(), b);
    }

    #[test]
    fn matmul_hand_example() {
        let a = Mat::from_vec(1, 2, vec![1.0, 2.0]);
        let b = Mat::from_vec(2, 1, vec![3.0, 4.0]);
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.data(), &[11.0]);
    }

    #[test]
    fn matmul_matches_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_mat(&mut rng, 5, 7);
        let b = random_mat(&mut rng, 7, 3);
        let fast = a.matmul(&b).unwrap();
        let slow = matmul_naive(&a, &b);
        for (x, y) in fast.data().iter().zip(slow.data()) {
            assert!((x - y).abs() < 1e-12, "{x} vs {y}");
        }
    }

    #[test]
    fn matmul_shape_mismatch() {
        let a = Mat::<f64>::zeros(2, 3);
        let b = Mat::<f64>::zeros(2, 3);
        assert!(matches!(
            a.matmul(&b),
            Err(crate::error::Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn matmul_associativity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let a = random_mat(&mut rng, 4, 5);
            let b = random_mat(&mut rng, 5, 3);
            let c = random_mat(&mut rng, 3, 6);
            let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
            let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
            for (x, y) in left.data().iter().zip(right.data()) {
                let denom = x.abs().max(y.abs()).max(1.0);
                assert!((x - y).abs() / denom < 1e-9);
            }
        }
    }

    #[test]
    fn log_sum_exp_basics() {
        assert!((log_sum_exp(&[0.0, 0.0]) - 2.0f64.ln()).abs() < 1e-15);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY, 3.5]), 3.5);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]), f64::NEG_INFINITY);
        // Analytic shift identity: lse([x, x]) = x + ln 2, no overflow.
        let v = log_sum_exp(&[1000.0, 1000.0]);
        assert!((v - (1000.0 + 2.0f64.ln())).abs() < 1e-9);
    }

    #[test]
    fn softmax_uniform_and_analytic() {
        let u = softmax(&[0.0f64, 0.0, 0.0]);
        for p in &u {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
        // [c, c + ln 3] -> [1/4, 3/4] for any c.
        for c in [-50.0f64, 0.0, 12.5] {
            let p = softmax(&[c, c + 3.0f64.ln()]);
            assert!((p[0] - 0.25).abs() < 1e-12);
            assert!((p[1] - 0.75).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_shift_invariance() {
        let v = [0.3, -1.2, 4.0, 0.0];
        let shifted: Vec<f64> = v.iter().map(|x| x + 17.0).collect();
        for (a, b) in softmax(&v).iter().zip(softmax(&shifted)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn softmax_is_probability_vector(v in proptest::collection::vec(-50.0f64..50.0, 1..20)) {
            let p = softmax(&v);
            let sum: f64 = p.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            for x in p {
                prop_assert!(x > 0.0);
            }
        }
    }

    #[test]
    fn grad_check_quadratic() {
        let theta = vec![0.4, -1.3, 2.2];
        let grad = theta.clone();
        let err = grad_check(
            |t| 0.5 * t.iter().map(|x| x * x).sum::<f64>(),
            &theta,
            &grad,
            1e-5,
        );
        assert!(err < 1e-9, "err={err}");
    }

    #[test]
    fn grad_check_sine() {
        let theta = vec![0.1f64, 1.0, -0.7, 3.0];
        let grad: Vec<f64> = theta.iter().map(|x| x.cos()).collect();
        let err = grad_check(
            |t| t.iter().map(|x| x.sin()).sum::<f64>(),
            &theta,
            &grad,
            1e-5,
        );
        assert!(err < 1e-8, "err={err}");
    }

    #[test]
    fn grad_check_detects_wrong_gradient() {
        let theta = vec![0.4, -1.3, 2.2];
        let wrong: Vec<f64> = theta.iter().map(|x| 2.0 * x).collect();
        let err = grad_check(
            |t| 0.5 * t.iter().map(|x| x * x).sum::<f64>(),
            &theta,
            &wrong,
            1e-5,
        );
        assert!((err - 0.5).abs() < 1e-3, "err={err}");
    }
}
