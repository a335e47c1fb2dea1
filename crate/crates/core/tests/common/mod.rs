#![allow(dead_code)]

use imax::numerics::{finite_diff_gradient, gradient_relative_error, LogitVector, ProbVector, FD_STEP};
use imax::objectives::{
    imax_loss_frozen, imax_loss_grad_frozen, pseudo_labels, tsallis_entropy, tsallis_entropy_grad, FrozenTerms,
    LabeledBatch, LossConfig, MarginalEstimate, UnlabeledBatch,
};
use imax::trainer::{batch_gradient, batch_objective, MlpModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_simplex(rng: &mut ChaCha8Rng, k: usize) -> ProbVector<f64> {
    let raw: Vec<f64> = (0..k).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
    let s: f64 = raw.iter().sum();
    ProbVector::new(raw.iter().map(|v| v / s).collect()).unwrap()
}

fn rows(rng: &mut ChaCha8Rng, n: usize, k: usize, scale: f64) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..k).map(|_| rng.random_range(-scale..scale)).collect()).collect()
}

fn logits(rows: &[Vec<f64>]) -> Vec<LogitVector<f64>> {
    rows.iter().map(|r| LogitVector::new(r.clone()).unwrap()).collect()
}

/// Relative error of the Tsallis gradient at a random interior simplex point.
///
/// The partial derivatives treat coordinates as independent, so the finite
/// differences step off the simplex through the closed form, which is first
/// checked against the library value at the point itself.
pub fn tsallis_fd_error(seed: u64, alpha: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = rng.random_range(2..8);
    let raw = random_simplex(&mut rng, k);
    // keep every coordinate away from 0 so ±h stays in the domain
    let p = ProbVector::new(raw.values().iter().map(|v| (0.05 + v) / (1.0 + 0.05 * k as f64)).collect()).unwrap();
    let closed = |v: &[f64]| -> f64 {
        if alpha == 1.0 {
            -v.iter().map(|x| x * x.ln()).sum::<f64>()
        } else {
            (1.0 - v.iter().map(|x| x.powf(alpha)).sum::<f64>()) / (alpha - 1.0)
        }
    };
    assert!((tsallis_entropy(&p, alpha).unwrap() - closed(p.values())).abs() < 1e-12);
    let numeric = finite_diff_gradient(closed, p.values(), FD_STEP).unwrap();
    gradient_relative_error(&tsallis_entropy_grad(&p, alpha).unwrap(), &numeric)
}

struct LogitCase {
    labeled: Vec<Vec<f64>>,
    labels: Vec<usize>,
    weak: Vec<Vec<f64>>,
    strong: Vec<Vec<f64>>,
}

impl LogitCase {
    fn random(rng: &mut ChaCha8Rng, with_labeled: bool) -> Self {
        let k = rng.random_range(2..6);
        let nl = if with_labeled { rng.random_range(1..5) } else { 0 };
        let nu = rng.random_range(1..7);
        let mut weak = rows(rng, nu, k, 3.0);
        // make roughly half the weak rows confident
        for r in weak.iter_mut().step_by(2) {
            let c = rng.random_range(0..k);
            r[c] += 6.0;
        }
        Self {
            labeled: rows(rng, nl, k, 3.0),
            labels: (0..nl).map(|_| rng.random_range(0..k)).collect(),
            strong: rows(rng, nu, k, 3.0),
            weak,
        }
    }

    fn flat(&self) -> Vec<f64> {
        self.labeled.iter().chain(&self.weak).chain(&self.strong).flatten().copied().collect()
    }

    fn batches_from(&self, x: &[f64]) -> (LabeledBatch<f64>, UnlabeledBatch<f64>) {
        let k = self.weak[0].len();
        let mut chunks = x.chunks(k).map(<[f64]>::to_vec);
        let mut take = |n: usize| -> Vec<Vec<f64>> { (&mut chunks).take(n).collect() };
        let l = take(self.labeled.len());
        let w = take(self.weak.len());
        let s = take(self.strong.len());
        let labeled = if l.is_empty() {
            LabeledBatch::empty()
        } else {
            LabeledBatch::new(logits(&l), self.labels.clone()).unwrap()
        };
        (labeled, UnlabeledBatch::new(logits(&w), logits(&s)).unwrap())
    }
}

/// Pseudo-label term alone: gradient with respect to the strong logits.
pub fn pseudo_ce_fd_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let case = LogitCase::random(&mut rng, false);
    let cfg = LossConfig { marginal_weight: 0.0, tau: 0.9, ..LossConfig::default() };
    let targets = pseudo_labels(&logits(&case.weak), cfg.tau);
    let frozen = FrozenTerms { pseudo_labels: &targets, previous_marginal: None };
    let x = case.flat();
    let (l, u) = case.batches_from(&x);
    let g = imax_loss_grad_frozen(&l, &u, &cfg, frozen).unwrap();
    let analytic: Vec<f64> = g.weak.iter().chain(&g.strong).flatten().copied().collect();
    let numeric = finite_diff_gradient(
        |v| {
            let (l, u) = case.batches_from(v);
            imax_loss_frozen(&l, &u, &cfg, frozen).unwrap().pseudo_ce
        },
        &x,
        FD_STEP,
    )
    .unwrap();
    gradient_relative_error(&analytic, &numeric)
}

/// Full objective: gradient with respect to labeled, weak and strong logits,
/// pseudo-labels frozen at the unperturbed point.
pub fn imax_fd_error(seed: u64, alpha: f64, running: bool) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let case = LogitCase::random(&mut rng, true);
    let k = case.weak[0].len();
    let prev = random_simplex(&mut rng, k);
    let cfg = LossConfig {
        alpha,
        tau: 0.9,
        marginal_weight: rng.random_range(0.2..2.0),
        marginal_estimate: if running { MarginalEstimate::Running { momentum: 0.7 } } else { MarginalEstimate::Batch },
        marginal_includes_strong: rng.random_bool(0.5),
    };
    let targets = pseudo_labels(&logits(&case.weak), cfg.tau);
    let frozen = FrozenTerms { pseudo_labels: &targets, previous_marginal: running.then_some(&prev) };
    let x = case.flat();
    let (l, u) = case.batches_from(&x);
    let g = imax_loss_grad_frozen(&l, &u, &cfg, frozen).unwrap();
    let analytic: Vec<f64> = g.labeled.iter().chain(&g.weak).chain(&g.strong).flatten().copied().collect();
    let numeric = finite_diff_gradient(
        |v| {
            let (l, u) = case.batches_from(v);
            imax_loss_frozen(&l, &u, &cfg, frozen).unwrap().total
        },
        &x,
        FD_STEP,
    )
    .unwrap();
    gradient_relative_error(&analytic, &numeric)
}

/// Hidden pre-activations of every sample, recomputed from the flat
/// parameter layout (per layer: row-major weights, then bias).
pub fn hidden_preactivations(dims: &[usize], params: &[f64], x: &[f64]) -> Vec<f64> {
    let mut out = Vec::new();
    let mut a = x.to_vec();
    let mut off = 0;
    for l in 0..dims.len() - 1 {
        let (n_in, n_out) = (dims[l], dims[l + 1]);
        let w = &params[off..off + n_in * n_out];
        let b = &params[off + n_in * n_out..off + n_in * n_out + n_out];
        off += n_in * n_out + n_out;
        let z: Vec<f64> = (0..n_out)
            .map(|o| b[o] + (0..n_in).map(|i| w[o * n_in + i] * a[i]).sum::<f64>())
            .collect();
        if l + 2 < dims.len() {
            out.extend_from_slice(&z);
            a = z.iter().map(|v| v.max(0.0)).collect();
        }
    }
    out
}

/// Parameter-gradient check through a `4-6-3` rectifier network on a random
/// mixed batch. `None` when some hidden unit sits within `margin` of its kink,
/// where central differences are not meaningful.
pub fn network_fd_error(seed: u64, alpha: f64, running: bool, margin: f64) -> Option<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = [4usize, 6, 3];
    let mut model = MlpModel::<f64>::new(&dims, rng.random()).unwrap();
    model.scale_output(3.0);
    let nl = rng.random_range(1..5);
    let labeled_x = rows(&mut rng, nl, 4, 2.0);
    let labels: Vec<usize> = labeled_x.iter().map(|_| rng.random_range(0..3)).collect();
    let nu = rng.random_range(1..6);
    let weak_x = rows(&mut rng, nu, 4, 2.0);
    let strong_x = rows(&mut rng, nu, 4, 2.0);
    let all = labeled_x.iter().chain(&weak_x).chain(&strong_x);
    for x in all {
        if hidden_preactivations(&dims, model.params(), x).iter().any(|z| z.abs() < margin) {
            return None;
        }
    }
    let prev = random_simplex(&mut rng, 3);
    let cfg = LossConfig {
        alpha,
        tau: 0.5,
        marginal_weight: 1.0,
        marginal_estimate: if running { MarginalEstimate::Running { momentum: 0.7 } } else { MarginalEstimate::Batch },
        marginal_includes_strong: rng.random_bool(0.5),
    };
    let weak_logits: Vec<LogitVector<f64>> = weak_x.iter().map(|x| model.forward(x).unwrap()).collect();
    let targets = pseudo_labels(&weak_logits, cfg.tau);
    let frozen = FrozenTerms { pseudo_labels: &targets, previous_marginal: running.then_some(&prev) };
    let (_, analytic, _) = batch_gradient(&model, &labeled_x, &labels, &weak_x, &strong_x, &cfg, frozen).unwrap();
    let numeric = finite_diff_gradient(
        |theta| {
            let m = MlpModel::from_params(&dims, theta.to_vec()).unwrap();
            batch_objective(&m, &labeled_x, &labels, &weak_x, &strong_x, &cfg, frozen).unwrap().total
        },
        model.params(),
        FD_STEP,
    )
    .unwrap();
    Some(gradient_relative_error(&analytic, &numeric))
}

/// Runs `network_fd_error` over consecutive seeds until `count` instances pass the kink filter.
pub fn network_fd_errors(alpha: f64, running: bool, count: usize, first_seed: u64) -> Vec<f64> {
    let mut out = Vec::with_capacity(count);
    let mut seed = first_seed;
    while out.len() < count {
        if let Some(e) = network_fd_error(seed, alpha, running, 1e-3) {
            out.push(e);
        }
        seed += 1;
    }
    out
}
