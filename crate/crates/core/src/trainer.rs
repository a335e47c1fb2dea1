//! Fully-connected rectifier network, its backward pass, SGD with momentum and
//! the mixed labeled/unlabeled training loop.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{augment_with, AugmentParams, DomainDataset, Strength};
use crate::error::{Error, Result};
use crate::numerics::{argmax, softmax_slice, LogitVector, ProbVector};
use crate::objectives::{
    imax_loss_frozen, imax_loss_grad_frozen, FrozenTerms, LabeledBatch, LossBreakdown,
    LossConfig, MarginalEstimate, UnlabeledBatch,
};
use crate::scalar::Scalar;

/// Dense network `d → h₁ → … → K` with rectifiers between layers and linear logits.
///
/// Parameters live in one flat buffer: for each layer the `out × in`
/// row-major weight matrix followed by the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel<T> {
    dims: Vec<usize>,
    params: Vec<T>,
}

/// Activations kept from a batched forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass<T> {
    /// `inputs[l][n]` is the input of layer `l` for sample `n` (post-rectifier).
    inputs: Vec<Vec<Vec<T>>>,
    logits: Vec<Vec<T>>,
}

impl<T> ForwardPass<T> {
    pub fn logits(&self) -> &[Vec<T>] {
        &self.logits
    }
}

impl<T: Scalar> MlpModel<T> {
    /// He-scaled Gaussian weights, zero biases.
    pub fn new(dims: &[usize], seed: u64) -> Result<Self> {
        let mut model = Self::zeros(dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in 0..model.num_layers() {
            let fan_in = model.dims[layer];
            let std = (2.0 / fan_in as f64).sqrt();
            let (w, _) = model.layer_range(layer);
            for p in &mut model.params[w] {
                *p = T::lit(std * rng.sample::<f64, _>(StandardNormal));
            }
        }
        Ok(model)
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::InvalidConfig(format!("invalid layer dimensions {dims:?}")));
        }
        if *dims.last().expect("len >= 2") < 2 {
            return Err(Error::InvalidConfig("output layer needs at least 2 classes".into()));
        }
        let n = dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        Ok(Self {
            dims: dims.to_vec(),
            params: vec![T::zero(); n],
        })
    }

    pub fn from_params(dims: &[usize], params: Vec<T>) -> Result<Self> {
        let mut m = Self::zeros(dims)?;
        m.set_params(params)?;
        Ok(m)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn num_classes(&self) -> usize {
        *self.dims.last().expect("validated")
    }

    pub fn num_layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn set_params(&mut self, params: Vec<T>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::Shape {
                expected: self.params.len(),
                got: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidInput("parameters must be finite".into()));
        }
        self.params = params;
        Ok(())
    }

    /// Weight and bias index ranges of `layer` in the flat buffer.
    fn layer_range(&self, layer: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let start: usize = self.dims.windows(2).take(layer).map(|w| w[0] * w[1] + w[1]).sum();
        let (fan_in, fan_out) = (self.dims[layer], self.dims[layer + 1]);
        let w_end = start + fan_in * fan_out;
        (start..w_end, w_end..w_end + fan_out)
    }

    /// Multiplies the output layer (weights and bias) by `c`.
    pub fn scale_output(&mut self, c: T) {
        let (w, b) = self.layer_range(self.num_layers() - 1);
        for p in &mut self.params[w.start..b.end] {
            *p *= c;
        }
    }

    pub fn forward(&self, x: &[T]) -> Result<LogitVector<T>> {
        let pass = self.forward_batch(std::slice::from_ref(&x.to_vec()))?;
        LogitVector::new(pass.logits.into_iter().next().expect("one sample"))
    }

    pub fn forward_batch(&self, xs: &[Vec<T>]) -> Result<ForwardPass<T>> {
        if let Some(bad) = xs.iter().find(|x| x.len() != self.input_dim()) {
            return Err(Error::Shape {
                expected: self.input_dim(),
                got: bad.len(),
            });
        }
        let last = self.num_layers() - 1;
        let mut inputs = Vec::with_capacity(self.num_layers());
        let mut current: Vec<Vec<T>> = xs.to_vec();
        for layer in 0..self.num_layers() {
            let (w, b) = self.layer_range(layer);
            let weights = &self.params[w];
            let bias = &self.params[b];
            let fan_in = self.dims[layer];
            let next: Vec<Vec<T>> = current
                .iter()
                .map(|a| {
                    weights
                        .chunks_exact(fan_in)
                        .zip(bias)
                        .map(|(row, &bo)| {
                            let z = row.iter().zip(a).fold(bo, |acc, (&wi, &ai)| acc + wi * ai);
                            if layer == last {
                                z
                            } else {
                                z.max(T::zero())
                            }
                        })
                        .collect()
                })
                .collect();
            inputs.push(current);
            current = next;
        }
        Ok(ForwardPass {
            inputs,
            logits: current,
        })
    }

    /// Accumulates `∂L/∂θ` into `grad` given `∂L/∂logits` for every sample of `pass`.
    pub fn backward(&self, pass: &ForwardPass<T>, grad_logits: &[Vec<T>], grad: &mut [T]) {
        assert_eq!(grad.len(), self.params.len(), "gradient buffer size");
        assert_eq!(grad_logits.len(), pass.logits.len(), "one logit gradient per sample");
        for (n, g_out) in grad_logits.iter().enumerate() {
            let mut delta = g_out.clone();
            for layer in (0..self.num_layers()).rev() {
                let (w, b) = self.layer_range(layer);
                let fan_in = self.dims[layer];
                let a_in = &pass.inputs[layer][n];
                {
                    let gw = &mut grad[w.clone()];
                    for (row, &d) in gw.chunks_exact_mut(fan_in).zip(&delta) {
                        if d != T::zero() {
                            for (g, &a) in row.iter_mut().zip(a_in) {
                                *g += d * a;
                            }
                        }
                    }
                }
                for (g, &d) in grad[b].iter_mut().zip(&delta) {
                    *g += d;
                }
                if layer == 0 {
                    break;
                }
                let weights = &self.params[w];
                let mut prev = vec![T::zero(); fan_in];
                for (row, &d) in weights.chunks_exact(fan_in).zip(&delta) {
                    if d != T::zero() {
                        for (p, &wi) in prev.iter_mut().zip(row) {
                            *p += wi * d;
                        }
                    }
                }
                // rectifier: inputs of this layer are outputs of the previous one
                for (p, &a) in prev.iter_mut().zip(a_in) {
                    if a <= T::zero() {
                        *p = T::zero();
                    }
                }
                delta = prev;
            }
        }
    }

    /// Plain-text dump:
    ///
    /// ```text
    /// # imax-mlp v1
    /// dims 16 64 64 5
    /// <one parameter per line, flat order>
    /// ```
    pub fn write_text<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# imax-mlp v1")?;
        let mut line = String::from("dims");
        for d in &self.dims {
            let _ = write!(line, " {d}");
        }
        writeln!(out, "{line}")?;
        for p in &self.params {
            writeln!(out, "{}", p.as_f64())?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let mut line_no = 0;
        let mut next = || -> Result<String> {
            line_no += 1;
            match lines.next() {
                Some(Ok(l)) => Ok(l),
                Some(Err(e)) => Err(Error::Parse { line: line_no, msg: e.to_string() }),
                None => Err(Error::Parse { line: line_no, msg: "unexpected end of file".into() }),
            }
        };
        if next()?.trim() != "# imax-mlp v1" {
            return Err(Error::Parse { line: 1, msg: "not an imax model file".into() });
        }
        let header = next()?;
        let dims = header
            .strip_prefix("dims")
            .ok_or(Error::Parse { line: 2, msg: "missing dims".into() })?
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<Vec<usize>, _>>()
            .map_err(|e| Error::Parse { line: 2, msg: e.to_string() })?;
        let mut model = Self::zeros(&dims)?;
        for (i, p) in model.params.iter_mut().enumerate() {
            let text = next()?;
            *p = T::lit(text.trim().parse::<f64>().map_err(|e| Error::Parse { line: i + 3, msg: e.to_string() })?);
        }
        Ok(model)
    }
}

/// SGD with heavy-ball momentum: `v ← μ v + g`, `θ ← θ − η v`.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdMomentum<T> {
    pub learning_rate: T,
    pub momentum: T,
    velocity: Vec<T>,
}

impl<T: Scalar> SgdMomentum<T> {
    pub fn new(learning_rate: T, momentum: T, num_params: usize) -> Result<Self> {
        if !(learning_rate >= T::zero()) || !learning_rate.is_finite() {
            return Err(Error::InvalidConfig(format!("learning rate must be >= 0, got {learning_rate}")));
        }
        if !(momentum >= T::zero() && momentum < T::one()) {
            return Err(Error::InvalidConfig(format!("momentum must lie in [0, 1), got {momentum}")));
        }
        Ok(Self {
            learning_rate,
            momentum,
            velocity: vec![T::zero(); num_params],
        })
    }

    pub fn step(&mut self, params: &mut [T], grad: &[T]) {
        for ((p, v), &g) in params.iter_mut().zip(&mut self.velocity).zip(grad) {
            *v = self.momentum * *v + g;
            *p -= self.learning_rate * *v;
        }
    }
}

/// Mean loss terms over one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord<T> {
    pub epoch: usize,
    #[serde(flatten)]
    pub loss: LossBreakdown<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig<T> {
    pub loss: LossConfig<T>,
    pub hidden: Vec<usize>,
    pub learning_rate: T,
    pub momentum: T,
    pub epochs: usize,
    pub labeled_batch: usize,
    pub unlabeled_batch: usize,
    /// Defaults to one pass over the pooled unlabeled data.
    pub steps_per_epoch: Option<usize>,
    pub augment: AugmentParams<T>,
    /// `false` trains on labeled batches only.
    pub use_unlabeled: bool,
    pub seed: u64,
}

impl<T: Scalar> Default for TrainConfig<T> {
    fn default() -> Self {
        Self {
            loss: LossConfig::default(),
            hidden: vec![64, 64],
            learning_rate: T::lit(0.03),
            momentum: T::lit(0.9),
            epochs: 20,
            labeled_batch: 16,
            unlabeled_batch: 64,
            steps_per_epoch: None,
            augment: AugmentParams::default(),
            use_unlabeled: true,
            seed: 0,
        }
    }
}

impl<T: Scalar> TrainConfig<T> {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        self.augment.validate()?;
        if self.labeled_batch == 0 {
            return Err(Error::InvalidConfig("labeled_batch must be positive".into()));
        }
        if self.use_unlabeled && self.unlabeled_batch == 0 {
            return Err(Error::InvalidConfig("unlabeled_batch must be positive".into()));
        }
        if self.steps_per_epoch == Some(0) {
            return Err(Error::InvalidConfig("steps_per_epoch must be positive".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::InvalidConfig("hidden layers must be non-empty".into()));
        }
        SgdMomentum::new(self.learning_rate, self.momentum, 0).map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState<T> {
    pub model: MlpModel<T>,
    /// Completed epochs.
    pub epoch: usize,
    pub step: usize,
    pub seed: u64,
    pub optimizer: SgdMomentum<T>,
    pub history: Vec<EpochRecord<T>>,
    /// Carried `π` when the loss uses a running marginal estimate.
    pub running_marginal: Option<ProbVector<T>>,
}

impl<T: Scalar> TrainState<T> {
    pub fn new(model: MlpModel<T>, learning_rate: T, momentum: T, seed: u64) -> Result<Self> {
        let optimizer = SgdMomentum::new(learning_rate, momentum, model.params().len())?;
        Ok(Self {
            model,
            epoch: 0,
            step: 0,
            seed,
            optimizer,
            history: Vec::new(),
            running_marginal: None,
        })
    }

    /// One optimizer update on a mixed batch.
    ///
    /// The labeled inputs go through the network unchanged; every unlabeled
    /// input is perturbed into a weak and a strong view drawn from `rng`.
    pub fn train_step<R: Rng + ?Sized>(
        &mut self,
        labeled_x: &[Vec<T>],
        labels: &[usize],
        unlabeled_x: &[Vec<T>],
        cfg: &LossConfig<T>,
        augment: &AugmentParams<T>,
        rng: &mut R,
    ) -> Result<LossBreakdown<T>> {
        let mut weak = Vec::with_capacity(unlabeled_x.len());
        let mut strong = Vec::with_capacity(unlabeled_x.len());
        for x in unlabeled_x {
            weak.push(augment_with(x, Strength::Weak, augment, rng));
            strong.push(augment_with(x, Strength::Strong, augment, rng));
        }
        let passes = forward_branches(&self.model, labeled_x, &weak, &strong)?;
        if passes.iter().flat_map(|p| p.logits.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                epoch: self.epoch,
                step: self.step,
                detail: "non-finite logits".into(),
            });
        }
        let targets = pseudo_labels_from_rows(passes[1].logits(), cfg.tau);
        let frozen = FrozenTerms {
            pseudo_labels: &targets,
            previous_marginal: self.running_marginal.as_ref(),
        };
        let (breakdown, grad, batch_marginal) = gradient_from_passes(&self.model, &passes, labels, cfg, frozen)?;
        if !breakdown.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Divergence {
                epoch: self.epoch,
                step: self.step,
                detail: format!("{breakdown:?}"),
            });
        }
        self.optimizer.step(&mut self.model.params, &grad);
        if self.model.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Divergence {
                epoch: self.epoch,
                step: self.step,
                detail: format!("non-finite parameters after update; last loss {breakdown:?}"),
            });
        }
        if let MarginalEstimate::Running { momentum } = cfg.marginal_estimate {
            let next = match &self.running_marginal {
                Some(prev) => prev
                    .values()
                    .iter()
                    .zip(batch_marginal.values())
                    .map(|(&old, &new)| momentum * old + (T::one() - momentum) * new)
                    .collect(),
                None => batch_marginal.into_inner(),
            };
            self.running_marginal = Some(ProbVector::from_raw(next));
        }
        self.step += 1;
        Ok(breakdown)
    }
}

fn pseudo_labels_from_rows<T: Scalar>(rows: &[Vec<T>], tau: T) -> Vec<Option<usize>> {
    rows.iter()
        .map(|z| {
            let p = softmax_slice(z);
            let top = argmax(&p);
            (p[top] >= tau).then_some(top)
        })
        .collect()
}

fn to_logits<T: Scalar>(rows: &[Vec<T>]) -> Result<Vec<LogitVector<T>>> {
    rows.iter().cloned().map(LogitVector::new).collect()
}

/// Forward passes of the labeled, weak and strong inputs.
fn forward_branches<T: Scalar>(
    model: &MlpModel<T>,
    labeled_x: &[Vec<T>],
    weak_x: &[Vec<T>],
    strong_x: &[Vec<T>],
) -> Result<[ForwardPass<T>; 3]> {
    Ok([
        model.forward_batch(labeled_x)?,
        model.forward_batch(weak_x)?,
        model.forward_batch(strong_x)?,
    ])
}

fn branch_batches<T: Scalar>(
    passes: &[ForwardPass<T>; 3],
    labels: &[usize],
) -> Result<(LabeledBatch<T>, UnlabeledBatch<T>)> {
    let [lp, wp, sp] = passes;
    let lb = LabeledBatch::new(to_logits(&lp.logits)?, labels.to_vec())?;
    let ub = UnlabeledBatch::new(to_logits(&wp.logits)?, to_logits(&sp.logits)?)?;
    Ok((lb, ub))
}

fn gradient_from_passes<T: Scalar>(
    model: &MlpModel<T>,
    passes: &[ForwardPass<T>; 3],
    labels: &[usize],
    cfg: &LossConfig<T>,
    frozen: FrozenTerms<'_, T>,
) -> Result<(LossBreakdown<T>, Vec<T>, ProbVector<T>)> {
    let (lb, ub) = branch_batches(passes, labels)?;
    let g = imax_loss_grad_frozen(&lb, &ub, cfg, frozen)?;
    let mut grad = vec![T::zero(); model.params().len()];
    for (pass, dz) in passes.iter().zip([&g.labeled, &g.weak, &g.strong]) {
        // branches with no gradient path are skipped entirely
        if dz.iter().flatten().any(|v| *v != T::zero()) {
            model.backward(pass, dz, &mut grad);
        }
    }
    Ok((g.breakdown, grad, g.batch_marginal))
}

/// Objective of the network on fixed inputs, with frozen pseudo-labels.
pub fn batch_objective<T: Scalar>(
    model: &MlpModel<T>,
    labeled_x: &[Vec<T>],
    labels: &[usize],
    weak_x: &[Vec<T>],
    strong_x: &[Vec<T>],
    cfg: &LossConfig<T>,
    frozen: FrozenTerms<'_, T>,
) -> Result<LossBreakdown<T>> {
    let passes = forward_branches(model, labeled_x, weak_x, strong_x)?;
    let (lb, ub) = branch_batches(&passes, labels)?;
    imax_loss_frozen(&lb, &ub, cfg, frozen)
}

/// Objective, flat parameter gradient and the batch marginal.
pub fn batch_gradient<T: Scalar>(
    model: &MlpModel<T>,
    labeled_x: &[Vec<T>],
    labels: &[usize],
    weak_x: &[Vec<T>],
    strong_x: &[Vec<T>],
    cfg: &LossConfig<T>,
    frozen: FrozenTerms<'_, T>,
) -> Result<(LossBreakdown<T>, Vec<T>, ProbVector<T>)> {
    let passes = forward_branches(model, labeled_x, weak_x, strong_x)?;
    gradient_from_passes(model, &passes, labels, cfg, frozen)
}

/// Endless reshuffled pass over `0..n`.
struct Cycler {
    order: Vec<usize>,
    pos: usize,
    rng: ChaCha8Rng,
}

impl Cycler {
    fn new(n: usize, rng: ChaCha8Rng) -> Self {
        Self {
            order: (0..n).collect(),
            pos: n,
            rng,
        }
    }

    fn take(&mut self, count: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(count);
        if self.order.is_empty() {
            return out;
        }
        while out.len() < count {
            if self.pos == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.pos = 0;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Trains a fresh network on the pooled source domains.
///
/// Initialization, labeled sampling, unlabeled sampling and augmentation
/// draw from separate streams of `config.seed`, so disabling the unlabeled
/// branch leaves the labeled trajectory's randomness untouched.
pub fn train<T: Scalar>(config: &TrainConfig<T>, sources: &[DomainDataset<T>]) -> Result<TrainState<T>> {
    config.validate()?;
    if sources.len() < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 source domains, got {}", sources.len())));
    }
    let dim = sources[0].dim();
    let k = sources[0].num_classes();
    for s in sources {
        if s.dim() != dim {
            return Err(Error::Shape { expected: dim, got: s.dim() });
        }
        if s.num_classes() != k {
            return Err(Error::Shape { expected: k, got: s.num_classes() });
        }
    }

    let mut labeled: Vec<(&[T], usize)> = Vec::new();
    let mut unlabeled: Vec<&[T]> = Vec::new();
    for s in sources {
        labeled.extend(s.labeled_indices().iter().map(|&i| (s.features()[i].as_slice(), s.labels()[i])));
        unlabeled.extend(s.unlabeled_indices().iter().map(|&i| s.features()[i].as_slice()));
    }
    if labeled.is_empty() {
        return Err(Error::EmptyBatch("source domains have no labeled samples"));
    }

    let mut dims = vec![dim];
    dims.extend(&config.hidden);
    dims.push(k);
    let init_seed = stream(config.seed, 0).random();
    let model = MlpModel::new(&dims, init_seed)?;
    let mut state = TrainState::new(model, config.learning_rate, config.momentum, config.seed)?;

    let steps = config
        .steps_per_epoch
        .unwrap_or_else(|| unlabeled.len().div_ceil(config.unlabeled_batch.max(1)).max(1));
    let mut labeled_cycle = Cycler::new(labeled.len(), stream(config.seed, 1));
    let mut unlabeled_cycle = Cycler::new(unlabeled.len(), stream(config.seed, 2));
    let mut aug_rng = stream(config.seed, 3);

    for _ in 0..config.epochs {
        let mut sum = LossBreakdown::<T>::default();
        for _ in 0..steps {
            let picks = labeled_cycle.take(config.labeled_batch);
            let lx: Vec<Vec<T>> = picks.iter().map(|&i| labeled[i].0.to_vec()).collect();
            let ly: Vec<usize> = picks.iter().map(|&i| labeled[i].1).collect();
            let ux: Vec<Vec<T>> = if config.use_unlabeled {
                unlabeled_cycle
                    .take(config.unlabeled_batch)
                    .into_iter()
                    .map(|i| unlabeled[i].to_vec())
                    .collect()
            } else {
                Vec::new()
            };
            let b = state.train_step(&lx, &ly, &ux, &config.loss, &config.augment, &mut aug_rng)?;
            sum.neg_marginal_entropy += b.neg_marginal_entropy;
            sum.labeled_ce += b.labeled_ce;
            sum.pseudo_ce += b.pseudo_ce;
            sum.total += b.total;
            sum.accepted_fraction += b.accepted_fraction;
        }
        let n = T::from_usize_lossy(steps);
        state.history.push(EpochRecord {
            epoch: state.epoch,
            loss: LossBreakdown {
                neg_marginal_entropy: sum.neg_marginal_entropy / n,
                labeled_ce: sum.labeled_ce / n,
                pseudo_ce: sum.pseudo_ce / n,
                total: sum.total / n,
                accepted_fraction: sum.accepted_fraction / n,
            },
        });
        state.epoch += 1;
    }
    Ok(state)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    /// Recall per true class; 0 for classes absent from the target.
    pub per_class_accuracy: Vec<f64>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    /// Mean softmax prediction over the target.
    pub predicted_marginal: ProbVector<f64>,
}

/// Accuracy of argmax predictions over every row of `target`.
pub fn evaluate<T: Scalar>(model: &MlpModel<T>, target: &DomainDataset<T>) -> Result<EvalReport> {
    if target.is_empty() {
        return Err(Error::EmptyBatch("evaluation target has no samples"));
    }
    let k = model.num_classes();
    if target.num_classes() != k {
        return Err(Error::Shape { expected: k, got: target.num_classes() });
    }
    let pass = model.forward_batch(target.features())?;
    let mut confusion = vec![vec![0usize; k]; k];
    let mut marginal = vec![0.0f64; k];
    for (z, &y) in pass.logits().iter().zip(target.labels()) {
        confusion[y][argmax(z)] += 1;
        for (m, p) in marginal.iter_mut().zip(softmax_slice(z)) {
            *m += p.as_f64();
        }
    }
    let total: f64 = marginal.iter().sum();
    for m in &mut marginal {
        *m /= total;
    }
    let correct: usize = (0..k).map(|c| confusion[c][c]).sum();
    let per_class_accuracy = confusion
        .iter()
        .enumerate()
        .map(|(c, row)| {
            let n: usize = row.iter().sum();
            if n == 0 {
                0.0
            } else {
                row[c] as f64 / n as f64
            }
        })
        .collect();
    Ok(EvalReport {
        accuracy: correct as f64 / target.len() as f64,
        per_class_accuracy,
        confusion,
        predicted_marginal: ProbVector::new(marginal)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_diff_gradient, gradient_relative_error, NETWORK_GRAD_REL_TOL};

    fn hand_model() -> MlpModel<f64> {
        // layer 1: W = [[1, -1], [0.5, 2]], b = [0, -1]
        // layer 2: W = [[2, 0], [-1, 1]],  b = [0.5, 0]
        MlpModel::from_params(&[2, 2, 2], vec![1.0, -1.0, 0.5, 2.0, 0.0, -1.0, 2.0, 0.0, -1.0, 1.0, 0.5, 0.0]).unwrap()
    }

    #[test]
    fn zero_network_is_uniform() {
        let m = MlpModel::<f64>::zeros(&[3, 4, 5]).unwrap();
        let z = m.forward(&[1.0, -2.0, 3.0]).unwrap();
        assert!(z.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn hand_forward() {
        // x = (1, 2): h = relu(1 - 2, 0.5 + 4 - 1) = (0, 3.5); z = (0.5, 3.5)
        let z = hand_model().forward(&[1.0, 2.0]).unwrap();
        assert_eq!(z.values(), &[0.5, 3.5]);
        // x = (3, 0): h = relu(3, 0.5) ; z = (6.5, -2.5)
        let z = hand_model().forward(&[3.0, 0.0]).unwrap();
        assert_eq!(z.values(), &[6.5, -2.5]);
    }

    #[test]
    fn output_scaling_scales_logits() {
        let m = MlpModel::<f64>::new(&[4, 6, 3], 1).unwrap();
        let mut scaled = m.clone();
        scaled.scale_output(2.5);
        let x = [0.3, -0.2, 1.0, 0.7];
        let a = m.forward(&x).unwrap();
        let b = scaled.forward(&x).unwrap();
        for (u, v) in a.values().iter().zip(b.values()) {
            assert!((2.5 * u - v).abs() < 1e-12);
        }
        assert_eq!(argmax(a.values()), argmax(b.values()));
    }

    #[test]
    fn dimension_mismatch() {
        let m = MlpModel::<f64>::new(&[4, 6, 3], 1).unwrap();
        assert!(matches!(m.forward(&[1.0, 2.0]), Err(Error::Shape { expected: 4, got: 2 })));
        assert!(MlpModel::<f64>::zeros(&[4]).is_err());
        assert!(MlpModel::<f64>::zeros(&[4, 0, 3]).is_err());
    }

    #[test]
    fn model_text_round_trip() {
        let m = MlpModel::<f64>::new(&[3, 5, 2], 9).unwrap();
        let mut buf = Vec::new();
        m.write_text(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).lines().nth(1) == Some("dims 3 5 2"));
        assert_eq!(MlpModel::<f64>::read_text(buf.as_slice()).unwrap(), m);
    }

    #[test]
    fn zero_learning_rate_freezes_parameters() {
        let m = MlpModel::<f64>::new(&[2, 4, 2], 3).unwrap();
        let mut st = TrainState::new(m.clone(), 0.0, 0.9, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        st.train_step(&[vec![1.0, 2.0]], &[1], &[vec![0.5, 0.5]], &LossConfig::default(), &AugmentParams::default(), &mut rng)
            .unwrap();
        assert_eq!(st.model, m);
    }

    #[test]
    fn cross_entropy_backprop_matches_fd() {
        let m = MlpModel::<f64>::new(&[3, 5, 4], 17).unwrap();
        let x = vec![vec![0.4, -1.3, 0.8]];
        let cfg = LossConfig { marginal_weight: 0.0, ..LossConfig::default() };
        let frozen = FrozenTerms { pseudo_labels: &[], previous_marginal: None };
        let (_, grad, _) = batch_gradient(&m, &x, &[2], &[], &[], &cfg, frozen).unwrap();
        let numeric = finite_diff_gradient(
            |p: &[f64]| {
                let mm = MlpModel::from_params(m.dims(), p.to_vec()).unwrap();
                batch_objective(&mm, &x, &[2], &[], &[], &cfg, frozen).unwrap().total
            },
            m.params(),
            1e-5,
        )
        .unwrap();
        assert!(gradient_relative_error(&grad, &numeric) < NETWORK_GRAD_REL_TOL);
    }

    #[test]
    fn separable_toy_loss_decreases() {
        // two Gaussian-free clusters along the first axis
        let xs: Vec<Vec<f64>> = (0..16).map(|i| vec![if i % 2 == 0 { 1.0 } else { -1.0 }, (i as f64) * 0.05 - 0.4]).collect();
        let ys: Vec<usize> = (0..16).map(|i| i % 2).collect();
        let m = MlpModel::new(&[2, 8, 2], 5).unwrap();
        let mut st = TrainState::new(m, 0.05, 0.9, 0).unwrap();
        let cfg = LossConfig { marginal_weight: 0.0, ..LossConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let losses: Vec<f64> = (0..60)
            .map(|_| st.train_step(&xs, &ys, &[], &cfg, &AugmentParams::default(), &mut rng).unwrap().labeled_ce)
            .collect();
        let windows: Vec<f64> = losses.chunks(5).map(|c| c.iter().sum::<f64>() / 5.0).collect();
        for w in windows.windows(2).skip(1) {
            assert!(w[1] <= w[0] + 1e-12, "{windows:?}");
        }
        assert!(losses.last().unwrap() < &0.05);
    }

    #[test]
    fn divergence_is_reported() {
        let m = MlpModel::<f64>::new(&[2, 4, 2], 3).unwrap();
        let mut st = TrainState::new(m, 1e300, 0.0, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = LossConfig { marginal_weight: 0.0, ..LossConfig::default() };
        let x = [vec![1.0, 2.0], vec![-1.0, 0.5]];
        let mut result = Ok(LossBreakdown::default());
        for _ in 0..5 {
            result = st.train_step(&x, &[1, 0], &[], &cfg, &AugmentParams::default(), &mut rng);
            if result.is_err() {
                break;
            }
        }
        assert!(matches!(result, Err(Error::Divergence { .. })));
    }

    #[test]
    fn eval_constant_predictor() {
        // bias-only output layer always picks class 1
        let mut p = vec![0.0; MlpModel::<f64>::zeros(&[2, 2]).unwrap().params().len()];
        p[5] = 1.0;
        let m = MlpModel::from_params(&[2, 2], p).unwrap();
        let ds = DomainDataset::from_parts(0, 2, vec![vec![0.0, 0.0]; 5], vec![0, 1, 1, 0, 1], vec![], (0..5).collect(), 0, None).unwrap();
        let r = evaluate(&m, &ds).unwrap();
        assert_eq!(r.accuracy, 0.6);
        assert_eq!(r.confusion, vec![vec![0, 2], vec![0, 3]]);
        assert_eq!(r.per_class_accuracy, vec![0.0, 1.0]);
    }

    #[test]
    fn eval_rejects_empty_target() {
        let m = MlpModel::<f64>::zeros(&[2, 2]).unwrap();
        let ds = DomainDataset::<f64>::from_parts(0, 2, vec![], vec![], vec![], vec![], 0, None).unwrap();
        assert!(matches!(evaluate(&m, &ds), Err(Error::EmptyBatch(_))));
    }

    #[test]
    fn f32_forward() {
        let m = MlpModel::<f32>::new(&[3, 4, 2], 1).unwrap();
        let z = m.forward(&[0.1, 0.2, 0.3]).unwrap();
        assert_eq!(z.len(), 2);
    }
}
