//! Simplex-safe elementary numerics: softmax, log-sum-exp and the central
//! finite-difference gradient used to verify every analytic backward pass.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Relative tolerance for loss-level analytic vs. finite-difference gradients.
pub const GRAD_REL_TOL: f64 = 1e-5;
/// Relative tolerance for parameter gradients checked through the network.
pub const NETWORK_GRAD_REL_TOL: f64 = 1e-4;
/// Default central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Pre-softmax scores. Every entry is finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LogitVector<T>(Vec<T>);

impl<T: Scalar> LogitVector<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("logit vector is empty".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "logit {i} is not finite ({})",
                values[i]
            )));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[T] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<T> {
        self.0
    }
}

/// A point on the probability simplex with at least two classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProbVector<T>(Vec<T>);

impl<T: Scalar> ProbVector<T> {
    /// Validates non-negativity, `K >= 2` and the unit sum to [`Scalar::SIMPLEX_TOL`].
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "probability vector needs at least 2 classes, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite() || *v < T::zero()) {
            return Err(Error::InvalidInput(format!(
                "probability {i} is negative or not finite ({})",
                values[i]
            )));
        }
        let sum: T = values.iter().copied().sum();
        if (sum - T::one()).abs() > T::simplex_tol() {
            return Err(Error::InvalidInput(format!(
                "probabilities sum to {sum}, not 1"
            )));
        }
        Ok(Self(values))
    }

    pub fn uniform(k: usize) -> Result<Self> {
        Self::new(vec![T::one() / T::from_usize_lossy(k); k])
    }

    pub fn one_hot(k: usize, class: usize) -> Result<Self> {
        if class >= k {
            return Err(Error::InvalidInput(format!("class {class} out of range for K = {k}")));
        }
        let mut v = vec![T::zero(); k];
        v[class] = T::one();
        Self::new(v)
    }

    /// Skips validation; callers guarantee the simplex invariants.
    pub(crate) fn from_raw(values: Vec<T>) -> Self {
        debug_assert!(values.len() >= 2);
        Self(values)
    }

    pub fn values(&self) -> &[T] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    pub fn max(&self) -> T {
        self.0.iter().copied().fold(T::neg_infinity(), T::max)
    }

    pub fn into_inner(self) -> Vec<T> {
        self.0
    }
}

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax<T: PartialOrd + Copy>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn log_sum_exp_slice<T: Scalar>(z: &[T]) -> T {
    let max = z.iter().copied().fold(T::neg_infinity(), T::max);
    let sum: T = z.iter().map(|&v| (v - max).exp()).sum();
    max + sum.ln()
}

pub(crate) fn softmax_slice<T: Scalar>(z: &[T]) -> Vec<T> {
    let max = z.iter().copied().fold(T::neg_infinity(), T::max);
    let mut out: Vec<T> = z.iter().map(|&v| (v - max).exp()).collect();
    let sum: T = out.iter().copied().sum();
    for v in &mut out {
        *v /= sum;
    }
    out
}

/// `log Σ exp(z_k)` evaluated as `max(z) + log Σ exp(z - max)`.
pub fn log_sum_exp<T: Scalar>(z: &LogitVector<T>) -> T {
    log_sum_exp_slice(z.values())
}

/// Max-subtracted softmax. Needs at least two logits to land on the simplex.
pub fn softmax<T: Scalar>(z: &LogitVector<T>) -> Result<ProbVector<T>> {
    if z.len() < 2 {
        return Err(Error::InvalidInput(
            "softmax needs at least 2 logits".into(),
        ));
    }
    Ok(ProbVector::from_raw(softmax_slice(z.values())))
}

/// Central-difference gradient `(f(x + h e_k) - f(x - h e_k)) / 2h`.
///
/// Returns an error if `h` is not positive or if `f` produces a non-finite
/// value at any probed point.
pub fn finite_diff_gradient<T, F>(mut f: F, x: &[T], h: T) -> Result<Vec<T>>
where
    T: Scalar,
    F: FnMut(&[T]) -> T,
{
    if !(h > T::zero()) || !h.is_finite() {
        return Err(Error::InvalidInput(format!("step size must be positive, got {h}")));
    }
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for k in 0..x.len() {
        probe[k] = x[k] + h;
        let plus = f(&probe);
        probe[k] = x[k] - h;
        let minus = f(&probe);
        probe[k] = x[k];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::InvalidInput(format!(
                "function is not finite around coordinate {k}"
            )));
        }
        grad.push((plus - minus) / (h + h));
    }
    Ok(grad)
}

/// `‖a - b‖₂ / max(‖a‖₂ + ‖b‖₂, floor)` with `floor = 1e-12`.
///
/// Scale-free comparison of two gradient vectors; returns 0 when both are
/// (numerically) zero.
pub fn gradient_relative_error<T: Scalar>(analytic: &[T], numeric: &[T]) -> T {
    assert_eq!(analytic.len(), numeric.len(), "gradient length mismatch");
    let norm = |it: &mut dyn Iterator<Item = T>| it.map(|v| v * v).sum::<T>().sqrt();
    let diff = norm(&mut analytic.iter().zip(numeric).map(|(a, b)| *a - *b));
    let scale = norm(&mut analytic.iter().copied()) + norm(&mut numeric.iter().copied());
    diff / scale.max(T::lit(1e-12))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn logits(v: &[f64]) -> LogitVector<f64> {
        LogitVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let p = softmax(&logits(&[0.0, 0.0, 0.0])).unwrap();
        for v in p.values() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_is_shift_invariant() {
        let a = softmax(&logits(&[0.3, -1.2, 2.0])).unwrap();
        let b = softmax(&logits(&[100.3, 98.8, 102.0])).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn softmax_two_classes() {
        // 1/(1+e) and e/(1+e), evaluated with mpmath at 50 digits.
        let p = softmax(&logits(&[1.0, 2.0])).unwrap();
        assert!((p.values()[0] - 0.268_941_421_369_995_1).abs() < 1e-15);
        assert!((p.values()[1] - 0.731_058_578_630_004_9).abs() < 1e-15);
    }

    #[test]
    fn softmax_rejects_singleton() {
        assert!(softmax(&logits(&[1.0])).is_err());
    }

    #[test]
    fn non_finite_logits_are_rejected() {
        assert!(LogitVector::new(vec![0.0, f64::NAN]).is_err());
        assert!(LogitVector::new(vec![f64::INFINITY, 0.0]).is_err());
        assert!(LogitVector::<f64>::new(vec![]).is_err());
    }

    #[test]
    fn log_sum_exp_cases() {
        assert!((log_sum_exp(&logits(&[0.0, 0.0])) - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(log_sum_exp(&logits(&[-3.25])), -3.25);
        let big = log_sum_exp(&logits(&[1000.0, 1000.0]));
        assert!((big - (1000.0 + std::f64::consts::LN_2)).abs() < 1e-12);
    }

    #[test]
    fn prob_vector_validation() {
        assert!(ProbVector::new(vec![0.5, 0.5]).is_ok());
        assert!(ProbVector::new(vec![1.0]).is_err());
        assert!(ProbVector::new(vec![0.6, 0.6]).is_err());
        assert!(ProbVector::new(vec![1.1, -0.1]).is_err());
        assert!(ProbVector::new(vec![0.5, 0.5 + 5e-10]).is_ok());
        assert!(ProbVector::<f32>::new(vec![0.3, 0.7]).is_ok());
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 2.0]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
    }

    #[test]
    fn fd_quadratic_and_constant() {
        let g = finite_diff_gradient(|x: &[f64]| x.iter().map(|v| v * v).sum(), &[1.0, 2.0], 1e-5)
            .unwrap();
        assert!((g[0] - 2.0).abs() < 1e-8 && (g[1] - 4.0).abs() < 1e-8);
        let g = finite_diff_gradient(|_: &[f64]| 7.0, &[1.0, 2.0, 3.0], 1e-5).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn fd_product_rule() {
        let g = finite_diff_gradient(|x: &[f64]| x[0] * x[1], &[3.0, 5.0], 1e-5).unwrap();
        assert!((g[0] - 5.0).abs() < 1e-8 && (g[1] - 3.0).abs() < 1e-8);
    }

    #[test]
    fn fd_propagates_non_finite() {
        let r = finite_diff_gradient(|x: &[f64]| 1.0 / x[0], &[0.0], 1e-5);
        assert!(r.is_ok(), "1/±h is finite");
        let r = finite_diff_gradient(|x: &[f64]| x[0].ln(), &[0.0], 1e-5);
        assert!(r.is_err());
        assert!(finite_diff_gradient(|x: &[f64]| x[0], &[0.0], 0.0).is_err());
    }

    proptest! {
        #[test]
        fn softmax_lands_on_simplex(z in prop::collection::vec(-1e4f64..1e4, 2..12)) {
            let p = softmax(&LogitVector::new(z).unwrap()).unwrap();
            prop_assert!(ProbVector::new(p.into_inner()).is_ok());
        }

        #[test]
        fn softmax_preserves_unique_argmax(z in prop::collection::vec(-50f64..50.0, 2..12)) {
            let top = argmax(&z);
            prop_assume!(z.iter().enumerate().all(|(i, v)| i == top || *v < z[top]));
            let p = softmax(&LogitVector::new(z.clone()).unwrap()).unwrap();
            prop_assert_eq!(p.argmax(), top);
        }

        #[test]
        fn log_sum_exp_shifts(z in prop::collection::vec(-100f64..100.0, 1..10), c in -500f64..500.0) {
            let base = log_sum_exp(&LogitVector::new(z.clone()).unwrap());
            let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
            let moved = log_sum_exp(&LogitVector::new(shifted).unwrap());
            prop_assert!((moved - (base + c)).abs() <= 1e-12 * (1.0 + moved.abs()));
        }

        #[test]
        fn fd_matches_random_quadratic(
            a in prop::collection::vec(-3f64..3.0, 9),
            b in prop::collection::vec(-3f64..3.0, 3),
            x in prop::collection::vec(-2f64..2.0, 3),
        ) {
            // f(x) = xᵀAx + bᵀx, ∇f = (A + Aᵀ)x + b
            let f = |v: &[f64]| {
                let mut s = 0.0;
                for i in 0..3 {
                    for j in 0..3 {
                        s += v[i] * a[3 * i + j] * v[j];
                    }
                    s += b[i] * v[i];
                }
                s
            };
            let analytic: Vec<f64> = (0..3)
                .map(|i| (0..3).map(|j| (a[3 * i + j] + a[3 * j + i]) * x[j]).sum::<f64>() + b[i])
                .collect();
            let numeric = finite_diff_gradient(f, &x, 1e-5).unwrap();
            prop_assert!(gradient_relative_error(&analytic, &numeric) < 1e-6);
        }
    }
}
