//! Entropies, marginal estimation and the composite information-maximization
//! objective, each with an analytic gradient with respect to the input logits.
//!
//! The objective minimized per mini-batch is
//!
//! ```text
//! L = w · (−H_α(π)) + CE(labeled) + PseudoCE(unlabeled)
//! ```
//!
//! where `π` is the mean softmax prediction over the batch, `H_α` is the
//! Tsallis entropy of order `α` (Shannon entropy at `α = 1`), and the pseudo
//! cross-entropy uses thresholded argmax targets taken from the weak branch.
//! Pseudo-labels and the acceptance mask are constants of the forward pass:
//! no gradient reaches the weak branch through them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{argmax, log_sum_exp_slice, softmax_slice, LogitVector, ProbVector};
use crate::scalar::Scalar;

/// How the class marginal `π` entering the entropy term is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginalEstimate<T> {
    /// Mean prediction over the current mini-batch.
    Batch,
    /// `π = m · π_prev + (1 − m) · π_batch`; gradient flows through the batch part only.
    Running { momentum: T },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossConfig<T> {
    /// Tsallis order. `1` selects the Shannon entropy.
    pub alpha: T,
    /// Confidence threshold for pseudo-labels. Values above 1 reject every sample.
    pub tau: T,
    /// Coefficient on the negative marginal entropy term.
    pub marginal_weight: T,
    pub marginal_estimate: MarginalEstimate<T>,
    /// Also average strong-branch predictions into `π`.
    pub marginal_includes_strong: bool,
}

impl<T: Scalar> Default for LossConfig<T> {
    fn default() -> Self {
        Self {
            alpha: T::lit(1.5),
            tau: T::lit(0.95),
            marginal_weight: T::one(),
            marginal_estimate: MarginalEstimate::Batch,
            marginal_includes_strong: false,
        }
    }
}

impl<T: Scalar> LossConfig<T> {
    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        if !(self.tau > T::zero()) || !self.tau.is_finite() {
            return Err(Error::InvalidConfig(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.marginal_weight >= T::zero()) || !self.marginal_weight.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "marginal_weight must be non-negative, got {}",
                self.marginal_weight
            )));
        }
        if let MarginalEstimate::Running { momentum } = self.marginal_estimate {
            if !(momentum >= T::zero() && momentum < T::one()) {
                return Err(Error::InvalidConfig(format!(
                    "running marginal momentum must lie in [0, 1), got {momentum}"
                )));
            }
        }
        Ok(())
    }
}

/// The three objective terms and their weighted sum.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown<T> {
    pub neg_marginal_entropy: T,
    pub labeled_ce: T,
    pub pseudo_ce: T,
    pub total: T,
    pub accepted_fraction: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledBatch<T> {
    logits: Vec<LogitVector<T>>,
    labels: Vec<usize>,
}

impl<T: Scalar> LabeledBatch<T> {
    pub fn new(logits: Vec<LogitVector<T>>, labels: Vec<usize>) -> Result<Self> {
        if logits.len() != labels.len() {
            return Err(Error::Shape {
                expected: logits.len(),
                got: labels.len(),
            });
        }
        let k = common_width(logits.iter())?;
        if let Some(k) = k {
            if let Some(&bad) = labels.iter().find(|&&y| y >= k) {
                return Err(Error::InvalidInput(format!("label {bad} out of range for K = {k}")));
            }
        }
        Ok(Self { logits, labels })
    }

    pub fn empty() -> Self {
        Self {
            logits: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn logits(&self) -> &[LogitVector<T>] {
        &self.logits
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn num_classes(&self) -> Option<usize> {
        self.logits.first().map(LogitVector::len)
    }
}

/// Paired predictions on weak and strong augmentations of the same samples.
#[derive(Debug, Clone, PartialEq)]
pub struct UnlabeledBatch<T> {
    weak_logits: Vec<LogitVector<T>>,
    strong_logits: Vec<LogitVector<T>>,
}

impl<T: Scalar> UnlabeledBatch<T> {
    pub fn new(weak_logits: Vec<LogitVector<T>>, strong_logits: Vec<LogitVector<T>>) -> Result<Self> {
        if weak_logits.len() != strong_logits.len() {
            return Err(Error::Shape {
                expected: weak_logits.len(),
                got: strong_logits.len(),
            });
        }
        common_width(weak_logits.iter().chain(&strong_logits))?;
        Ok(Self {
            weak_logits,
            strong_logits,
        })
    }

    pub fn empty() -> Self {
        Self {
            weak_logits: Vec::new(),
            strong_logits: Vec::new(),
        }
    }

    pub fn weak_logits(&self) -> &[LogitVector<T>] {
        &self.weak_logits
    }

    pub fn strong_logits(&self) -> &[LogitVector<T>] {
        &self.strong_logits
    }

    pub fn len(&self) -> usize {
        self.weak_logits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weak_logits.is_empty()
    }

    fn num_classes(&self) -> Option<usize> {
        self.weak_logits.first().map(LogitVector::len)
    }
}

fn common_width<'a, T: Scalar + 'a>(
    mut it: impl Iterator<Item = &'a LogitVector<T>>,
) -> Result<Option<usize>> {
    let Some(first) = it.next() else {
        return Ok(None);
    };
    let k = first.len();
    if k < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 classes, got {k}")));
    }
    for v in it {
        if v.len() != k {
            return Err(Error::Shape {
                expected: k,
                got: v.len(),
            });
        }
    }
    Ok(Some(k))
}

fn check_alpha<T: Scalar>(alpha: T) -> Result<()> {
    if alpha > T::zero() && alpha.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("alpha must be positive, got {alpha}")))
    }
}

/// `p ln p` with `0 ln 0 = 0` and the log argument clamped.
#[inline]
fn xlogx<T: Scalar>(p: T) -> T {
    if p <= T::zero() {
        T::zero()
    } else {
        p * p.max(T::log_clamp()).ln()
    }
}

/// Shannon entropy in nats.
pub fn shannon_entropy<T: Scalar>(p: &ProbVector<T>) -> T {
    -p.values().iter().map(|&v| xlogx(v)).sum::<T>()
}

/// Tsallis entropy `(1 − Σ p_k^α) / (α − 1)`; the Shannon entropy at `α = 1`.
pub fn tsallis_entropy<T: Scalar>(p: &ProbVector<T>, alpha: T) -> Result<T> {
    check_alpha(alpha)?;
    if alpha == T::one() {
        return Ok(shannon_entropy(p));
    }
    let power_sum: T = p.values().iter().map(|&v| v.powf(alpha)).sum();
    Ok((T::one() - power_sum) / (alpha - T::one()))
}

/// Upper bound of the Tsallis entropy over `K` classes, reached at the uniform distribution.
pub fn tsallis_log<T: Scalar>(k: usize, alpha: T) -> Result<T> {
    check_alpha(alpha)?;
    let k = T::from_usize_lossy(k);
    if alpha == T::one() {
        Ok(k.ln())
    } else {
        Ok((T::one() - k.powf(T::one() - alpha)) / (alpha - T::one()))
    }
}

/// Partial derivatives of [`tsallis_entropy`] with respect to each `p_k`,
/// treating the coordinates as independent (no simplex projection).
pub fn tsallis_entropy_grad<T: Scalar>(p: &ProbVector<T>, alpha: T) -> Result<Vec<T>> {
    check_alpha(alpha)?;
    Ok(tsallis_grad_slice(p.values(), alpha))
}

fn tsallis_grad_slice<T: Scalar>(p: &[T], alpha: T) -> Vec<T> {
    let clamp = T::log_clamp();
    if alpha == T::one() {
        p.iter().map(|&v| -(v.max(clamp).ln() + T::one())).collect()
    } else {
        let scale = -alpha / (alpha - T::one());
        p.iter()
            .map(|&v| scale * v.max(clamp).powf(alpha - T::one()))
            .collect()
    }
}

/// Soft class proportions `π_k = (1/N) Σ_i p_ik`.
pub fn estimate_marginal<T: Scalar>(all_probs: &[ProbVector<T>]) -> Result<ProbVector<T>> {
    let first = all_probs
        .first()
        .ok_or(Error::EmptyBatch("marginal estimate needs at least one prediction"))?;
    let k = first.len();
    let mut acc = vec![T::zero(); k];
    for p in all_probs {
        if p.len() != k {
            return Err(Error::Shape {
                expected: k,
                got: p.len(),
            });
        }
        for (a, &v) in acc.iter_mut().zip(p.values()) {
            *a += v;
        }
    }
    let n = T::from_usize_lossy(all_probs.len());
    for a in &mut acc {
        *a /= n;
    }
    Ok(ProbVector::from_raw(acc))
}

/// Mean negative log-likelihood of the labels under the softmax of the logits.
pub fn cross_entropy<T: Scalar>(batch: &LabeledBatch<T>) -> Result<T> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch("cross-entropy over an empty labeled batch"));
    }
    let sum: T = batch
        .logits
        .iter()
        .zip(&batch.labels)
        .map(|(z, &y)| nll(z.values(), y))
        .sum();
    Ok(sum / T::from_usize_lossy(batch.len()))
}

#[inline]
fn nll<T: Scalar>(z: &[T], y: usize) -> T {
    // −log softmax(z)_y, never negative even with rounding
    (log_sum_exp_slice(z) - z[y]).max(T::zero())
}

/// Argmax of the weak-branch softmax for every sample whose top probability
/// reaches `tau`, `None` otherwise.
pub fn pseudo_labels<T: Scalar>(weak_logits: &[LogitVector<T>], tau: T) -> Vec<Option<usize>> {
    weak_logits
        .iter()
        .map(|z| {
            let p = softmax_slice(z.values());
            let top = argmax(&p);
            (p[top] >= tau).then_some(top)
        })
        .collect()
}

/// Thresholded pseudo cross-entropy, averaged over the whole unlabeled batch
/// (rejected samples contribute zero). Returns `(loss, accepted_fraction)`;
/// an empty batch yields `(0, 0)`.
pub fn pseudo_cross_entropy<T: Scalar>(batch: &UnlabeledBatch<T>, tau: T) -> Result<(T, T)> {
    if !(tau > T::zero()) {
        return Err(Error::InvalidConfig(format!("tau must be positive, got {tau}")));
    }
    let targets = pseudo_labels(&batch.weak_logits, tau);
    Ok(pseudo_ce_with_targets(&batch.strong_logits, &targets))
}

fn pseudo_ce_with_targets<T: Scalar>(strong: &[LogitVector<T>], targets: &[Option<usize>]) -> (T, T) {
    if strong.is_empty() {
        return (T::zero(), T::zero());
    }
    let n = T::from_usize_lossy(strong.len());
    let mut loss = T::zero();
    let mut accepted = 0usize;
    for (z, target) in strong.iter().zip(targets) {
        if let Some(y) = *target {
            loss += nll(z.values(), y);
            accepted += 1;
        }
    }
    (loss / n, T::from_usize_lossy(accepted) / n)
}

/// Forward-pass quantities held fixed when differentiating: pseudo-labels and,
/// for the running marginal estimate, the previous `π`.
#[derive(Debug, Clone, Copy)]
pub struct FrozenTerms<'a, T> {
    pub pseudo_labels: &'a [Option<usize>],
    pub previous_marginal: Option<&'a ProbVector<T>>,
}

/// Loss terms together with `∂ total / ∂ logits` for every branch.
#[derive(Debug, Clone, PartialEq)]
pub struct ImaxGradients<T> {
    pub breakdown: LossBreakdown<T>,
    /// `π` as it entered the entropy term.
    pub marginal: ProbVector<T>,
    /// Mean prediction of this batch alone.
    pub batch_marginal: ProbVector<T>,
    pub labeled: Vec<Vec<T>>,
    pub weak: Vec<Vec<T>>,
    pub strong: Vec<Vec<T>>,
}

/// Composite objective on one mini-batch.
pub fn imax_loss<T: Scalar>(
    labeled: &LabeledBatch<T>,
    unlabeled: &UnlabeledBatch<T>,
    cfg: &LossConfig<T>,
) -> Result<LossBreakdown<T>> {
    let targets = pseudo_labels(&unlabeled.weak_logits, cfg.tau);
    let frozen = FrozenTerms {
        pseudo_labels: &targets,
        previous_marginal: None,
    };
    Ok(evaluate(labeled, unlabeled, cfg, frozen, false)?.breakdown)
}

/// Gradient of [`imax_loss`]'s total with respect to every input logit.
pub fn imax_loss_grad<T: Scalar>(
    labeled: &LabeledBatch<T>,
    unlabeled: &UnlabeledBatch<T>,
    cfg: &LossConfig<T>,
) -> Result<ImaxGradients<T>> {
    let targets = pseudo_labels(&unlabeled.weak_logits, cfg.tau);
    let frozen = FrozenTerms {
        pseudo_labels: &targets,
        previous_marginal: None,
    };
    evaluate(labeled, unlabeled, cfg, frozen, true)
}

/// [`imax_loss`] with pseudo-labels and previous marginal supplied by the caller.
pub fn imax_loss_frozen<T: Scalar>(
    labeled: &LabeledBatch<T>,
    unlabeled: &UnlabeledBatch<T>,
    cfg: &LossConfig<T>,
    frozen: FrozenTerms<'_, T>,
) -> Result<LossBreakdown<T>> {
    Ok(evaluate(labeled, unlabeled, cfg, frozen, false)?.breakdown)
}

/// [`imax_loss_grad`] with pseudo-labels and previous marginal supplied by the caller.
pub fn imax_loss_grad_frozen<T: Scalar>(
    labeled: &LabeledBatch<T>,
    unlabeled: &UnlabeledBatch<T>,
    cfg: &LossConfig<T>,
    frozen: FrozenTerms<'_, T>,
) -> Result<ImaxGradients<T>> {
    evaluate(labeled, unlabeled, cfg, frozen, true)
}

fn evaluate<T: Scalar>(
    labeled: &LabeledBatch<T>,
    unlabeled: &UnlabeledBatch<T>,
    cfg: &LossConfig<T>,
    frozen: FrozenTerms<'_, T>,
    with_grad: bool,
) -> Result<ImaxGradients<T>> {
    cfg.validate()?;
    if labeled.is_empty() && unlabeled.is_empty() {
        return Err(Error::EmptyBatch("both labeled and unlabeled batches are empty"));
    }
    let k = match (labeled.num_classes(), unlabeled.num_classes()) {
        (Some(a), Some(b)) if a != b => return Err(Error::Shape { expected: a, got: b }),
        (Some(a), _) | (None, Some(a)) => a,
        (None, None) => unreachable!(),
    };
    if frozen.pseudo_labels.len() != unlabeled.len() {
        return Err(Error::Shape {
            expected: unlabeled.len(),
            got: frozen.pseudo_labels.len(),
        });
    }
    if let Some(&bad) = frozen.pseudo_labels.iter().flatten().find(|&&y| y >= k) {
        return Err(Error::InvalidInput(format!("pseudo-label {bad} out of range for K = {k}")));
    }

    let labeled_probs: Vec<Vec<T>> = labeled.logits.iter().map(|z| softmax_slice(z.values())).collect();
    let weak_probs: Vec<Vec<T>> = unlabeled.weak_logits.iter().map(|z| softmax_slice(z.values())).collect();
    let strong_probs: Vec<Vec<T>> = unlabeled.strong_logits.iter().map(|z| softmax_slice(z.values())).collect();

    // Marginal over labeled + weak (+ strong) predictions.
    let mut members = labeled_probs.len() + weak_probs.len();
    if cfg.marginal_includes_strong {
        members += strong_probs.len();
    }
    let mut batch_pi = vec![T::zero(); k];
    let pooled = labeled_probs
        .iter()
        .chain(&weak_probs)
        .chain(strong_probs.iter().filter(|_| cfg.marginal_includes_strong));
    for p in pooled {
        for (a, &v) in batch_pi.iter_mut().zip(p) {
            *a += v;
        }
    }
    let inv_members = T::one() / T::from_usize_lossy(members);
    for a in &mut batch_pi {
        *a *= inv_members;
    }
    let (pi, batch_share) = match (cfg.marginal_estimate, frozen.previous_marginal) {
        (MarginalEstimate::Running { momentum }, Some(prev)) => {
            if prev.len() != k {
                return Err(Error::Shape { expected: k, got: prev.len() });
            }
            let mixed = prev
                .values()
                .iter()
                .zip(&batch_pi)
                .map(|(&old, &new)| momentum * old + (T::one() - momentum) * new)
                .collect();
            (mixed, T::one() - momentum)
        }
        _ => (batch_pi.clone(), T::one()),
    };
    let pi = ProbVector::from_raw(pi);
    let neg_marginal_entropy = -tsallis_entropy(&pi, cfg.alpha)?;

    let labeled_ce = if labeled.is_empty() {
        T::zero()
    } else {
        cross_entropy(labeled)?
    };
    let (pseudo_ce, accepted_fraction) = pseudo_ce_with_targets(&unlabeled.strong_logits, frozen.pseudo_labels);
    let total = cfg.marginal_weight * neg_marginal_entropy + labeled_ce + pseudo_ce;
    let breakdown = LossBreakdown {
        neg_marginal_entropy,
        labeled_ce,
        pseudo_ce,
        total,
        accepted_fraction,
    };

    let mut out = ImaxGradients {
        breakdown,
        marginal: pi,
        batch_marginal: ProbVector::from_raw(batch_pi),
        labeled: Vec::new(),
        weak: Vec::new(),
        strong: Vec::new(),
    };
    if !with_grad {
        return Ok(out);
    }

    // ∂L/∂p_j for every member of the marginal: w · (−∂H_α/∂π) · share / |S|.
    let dh = tsallis_grad_slice(out.marginal.values(), cfg.alpha);
    let coef = cfg.marginal_weight * batch_share * inv_members;
    let marginal_dp: Vec<T> = dh.iter().map(|&g| -g * coef).collect();
    let marginal_active = cfg.marginal_weight != T::zero();

    let n_l = T::from_usize_lossy(labeled.len().max(1));
    out.labeled = labeled_probs
        .iter()
        .zip(&labeled.labels)
        .map(|(p, &y)| {
            let mut g: Vec<T> = p.iter().map(|&v| v / n_l).collect();
            g[y] -= T::one() / n_l;
            if marginal_active {
                add_softmax_backward(&mut g, p, &marginal_dp);
            }
            g
        })
        .collect();

    out.weak = weak_probs
        .iter()
        .map(|p| {
            let mut g = vec![T::zero(); k];
            if marginal_active {
                add_softmax_backward(&mut g, p, &marginal_dp);
            }
            g
        })
        .collect();

    let n_u = T::from_usize_lossy(unlabeled.len().max(1));
    out.strong = strong_probs
        .iter()
        .zip(frozen.pseudo_labels)
        .map(|(p, target)| {
            let mut g = vec![T::zero(); k];
            if let Some(y) = *target {
                for (gi, &v) in g.iter_mut().zip(p) {
                    *gi = v / n_u;
                }
                g[y] -= T::one() / n_u;
            }
            if marginal_active && cfg.marginal_includes_strong {
                add_softmax_backward(&mut g, p, &marginal_dp);
            }
            g
        })
        .collect();
    Ok(out)
}

/// `g += J_softmax(p)ᵀ v = p ⊙ (v − ⟨p, v⟩)`.
fn add_softmax_backward<T: Scalar>(g: &mut [T], p: &[T], v: &[T]) {
    let dot: T = p.iter().zip(v).map(|(&a, &b)| a * b).sum();
    for ((gi, &pi), &vi) in g.iter_mut().zip(p).zip(v) {
        *gi += pi * (vi - dot);
    }
}
