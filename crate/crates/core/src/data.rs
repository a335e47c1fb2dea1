//! Synthetic multi-domain data, long-tailed labeled subsets and feature-space
//! augmentations.
//!
//! Every domain shares the same class centroids (a common label space); a
//! domain moves them by a translation and mixes the feature axes with a
//! seeded near-identity orthogonal transform, so only `P(X)` changes between
//! domains.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Class-count layout of the labeled subset of one domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongTailSpec {
    pub num_classes: usize,
    /// Labeled samples per class before imbalance is applied (`m_L`).
    pub per_class: usize,
    /// Head-to-tail ratio of the decaying class weights.
    pub gamma: f64,
    /// `class_order[rank]` is the class receiving the `rank`-th largest count.
    pub class_order: Vec<usize>,
}

impl LongTailSpec {
    pub fn new(num_classes: usize, per_class: usize, gamma: f64, class_order: Vec<usize>) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::InvalidConfig(format!("need at least 2 classes, got {num_classes}")));
        }
        if !(gamma >= 1.0) || !gamma.is_finite() {
            return Err(Error::InvalidConfig(format!("gamma must be a finite value >= 1, got {gamma}")));
        }
        let mut seen = vec![false; num_classes];
        if class_order.len() != num_classes {
            return Err(Error::InvalidConfig("class_order is not a permutation of the classes".into()));
        }
        for &c in &class_order {
            if c >= num_classes || std::mem::replace(&mut seen[c], true) {
                return Err(Error::InvalidConfig("class_order is not a permutation of the classes".into()));
            }
        }
        Ok(Self {
            num_classes,
            per_class,
            gamma,
            class_order,
        })
    }

    /// Class `k` at rank `k`.
    pub fn ordered(num_classes: usize, per_class: usize, gamma: f64) -> Result<Self> {
        Self::new(num_classes, per_class, gamma, (0..num_classes).collect())
    }

    /// Class order shuffled by `seed`.
    pub fn shuffled(num_classes: usize, per_class: usize, gamma: f64, seed: u64) -> Result<Self> {
        let mut order: Vec<usize> = (0..num_classes).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        Self::new(num_classes, per_class, gamma, order)
    }

    pub fn budget(&self) -> usize {
        self.per_class * self.num_classes
    }

    /// Unnormalized weight `γ^{−rank/(K−1)}`.
    pub fn rank_weight(&self, rank: usize) -> f64 {
        self.gamma.powf(-(rank as f64) / (self.num_classes - 1) as f64)
    }

    /// Rank of `class` in the decay order.
    pub fn rank_of(&self, class: usize) -> usize {
        self.class_order
            .iter()
            .position(|&c| c == class)
            .expect("class_order is a permutation")
    }
}

/// Labeled counts per rank (rank 0 is the head class).
///
/// Counts are the rounded shares of the `m_L · K` budget under exponentially
/// decaying weights, floored at one sample. The rounding remainder is added
/// to, or taken from, the head classes so the budget is met exactly and the
/// counts stay non-increasing.
pub fn long_tail_rank_counts(spec: &LongTailSpec) -> Result<Vec<usize>> {
    let k = spec.num_classes;
    let budget = spec.budget();
    if budget < k {
        return Err(Error::InfeasibleBudget { budget, classes: k });
    }
    let weights: Vec<f64> = (0..k).map(|r| spec.rank_weight(r)).collect();
    let total: f64 = weights.iter().sum();
    let mut counts: Vec<usize> = weights
        .iter()
        .map(|w| ((budget as f64 * w / total).round() as usize).max(1))
        .collect();
    let mut assigned: usize = counts.iter().sum();
    let mut next = 0;
    while assigned < budget {
        counts[next % k] += 1;
        next += 1;
        assigned += 1;
    }
    while assigned > budget {
        // last rank holding the maximum, so the sequence stays non-increasing
        let max = *counts.iter().max().expect("k >= 2");
        let at = counts.iter().rposition(|&c| c == max).expect("max exists");
        counts[at] -= 1;
        assigned -= 1;
    }
    Ok(counts)
}

/// Labeled counts per class, following `spec.class_order`.
pub fn long_tail_counts(spec: &LongTailSpec) -> Result<Vec<usize>> {
    let by_rank = long_tail_rank_counts(spec)?;
    let mut by_class = vec![0; spec.num_classes];
    for (rank, &class) in spec.class_order.iter().enumerate() {
        by_class[class] = by_rank[rank];
    }
    Ok(by_class)
}

/// Covariate shift applied to the shared class centroids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec<T> {
    pub domain_id: usize,
    pub mean_shift: Vec<T>,
    pub rotation_seed: u64,
    /// Size of the random perturbation orthogonalized into the mixing matrix; 0 keeps the identity.
    pub rotation_strength: T,
    pub noise_scale: T,
}

impl<T: Scalar> DomainSpec<T> {
    fn validate(&self, dim: usize) -> Result<()> {
        if self.mean_shift.len() != dim {
            return Err(Error::Shape {
                expected: dim,
                got: self.mean_shift.len(),
            });
        }
        if !(self.noise_scale > T::zero()) || !self.noise_scale.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "noise_scale must be positive, got {}",
                self.noise_scale
            )));
        }
        if !(self.rotation_strength >= T::zero()) || !self.rotation_strength.is_finite() {
            return Err(Error::InvalidConfig("rotation_strength must be non-negative".into()));
        }
        if self.mean_shift.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("mean_shift is not finite".into()));
        }
        Ok(())
    }

    /// Orthogonal mixing matrix (rows), Gram-Schmidt of `I + strength · G`.
    pub fn mixing_matrix(&self, dim: usize) -> Vec<Vec<T>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.rotation_seed);
        let s = self.rotation_strength.as_f64();
        let mut rows: Vec<Vec<f64>> = (0..dim)
            .map(|i| {
                (0..dim)
                    .map(|j| {
                        let g: f64 = rng.sample(StandardNormal);
                        f64::from(u8::from(i == j)) + s * g
                    })
                    .collect()
            })
            .collect();
        for i in 0..dim {
            for j in 0..i {
                let proj: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| a * b).sum();
                let (head, tail) = rows.split_at_mut(i);
                for (a, b) in tail[0].iter_mut().zip(&head[j]) {
                    *a -= proj * b;
                }
            }
            let norm = rows[i].iter().map(|v| v * v).sum::<f64>().sqrt();
            for v in &mut rows[i] {
                *v /= norm;
            }
        }
        rows.into_iter()
            .map(|r| r.into_iter().map(T::lit).collect())
            .collect()
    }

    /// Centroid of `class` in this domain: `Q (c + shift)`.
    pub fn transform_centroid(&self, centroid: &[T], mixing: &[Vec<T>]) -> Vec<T> {
        let shifted: Vec<T> = centroid.iter().zip(&self.mean_shift).map(|(&c, &s)| c + s).collect();
        mixing
            .iter()
            .map(|row| row.iter().zip(&shifted).map(|(&q, &x)| q * x).sum())
            .collect()
    }
}

/// Centroids drawn as `separation · N(0, I_d)` from `seed`.
pub fn class_centroids<T: Scalar>(num_classes: usize, dim: usize, separation: T, seed: u64) -> Vec<Vec<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..num_classes)
        .map(|_| {
            (0..dim)
                .map(|_| separation * T::lit(rng.sample::<f64, _>(StandardNormal)))
                .collect()
        })
        .collect()
}

/// One source or target domain.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainDataset<T> {
    domain_id: usize,
    num_classes: usize,
    features: Vec<Vec<T>>,
    labels: Vec<usize>,
    labeled_indices: Vec<usize>,
    unlabeled_indices: Vec<usize>,
    generation_seed: u64,
    split_seed: Option<u64>,
}

impl<T: Scalar> DomainDataset<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        domain_id: usize,
        num_classes: usize,
        features: Vec<Vec<T>>,
        labels: Vec<usize>,
        labeled_indices: Vec<usize>,
        unlabeled_indices: Vec<usize>,
        generation_seed: u64,
        split_seed: Option<u64>,
    ) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::Shape {
                expected: features.len(),
                got: labels.len(),
            });
        }
        if let Some(first) = features.first() {
            let d = first.len();
            if let Some(bad) = features.iter().find(|f| f.len() != d) {
                return Err(Error::Shape { expected: d, got: bad.len() });
            }
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::InvalidInput(format!("label {bad} out of range for K = {num_classes}")));
        }
        let mut owner = vec![0u8; labels.len()];
        for &i in labeled_indices.iter().chain(&unlabeled_indices) {
            let slot = owner
                .get_mut(i)
                .ok_or_else(|| Error::InvalidInput(format!("index {i} out of range")))?;
            *slot += 1;
        }
        if owner.iter().any(|&c| c != 1) {
            return Err(Error::InvalidInput(
                "labeled and unlabeled indices must partition the rows".into(),
            ));
        }
        Ok(Self {
            domain_id,
            num_classes,
            features,
            labels,
            labeled_indices,
            unlabeled_indices,
            generation_seed,
            split_seed,
        })
    }

    pub fn domain_id(&self) -> usize {
        self.domain_id
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> &[Vec<T>] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn labeled_indices(&self) -> &[usize] {
        &self.labeled_indices
    }

    pub fn unlabeled_indices(&self) -> &[usize] {
        &self.unlabeled_indices
    }

    pub fn generation_seed(&self) -> u64 {
        self.generation_seed
    }

    pub fn split_seed(&self) -> Option<u64> {
        self.split_seed
    }

    pub fn class_counts(&self) -> Vec<usize> {
        histogram(self.labels.iter().copied(), self.num_classes)
    }

    pub fn labeled_counts(&self) -> Vec<usize> {
        histogram(self.labeled_indices.iter().map(|&i| self.labels[i]), self.num_classes)
    }

    pub fn unlabeled_counts(&self) -> Vec<usize> {
        histogram(self.unlabeled_indices.iter().map(|&i| self.labels[i]), self.num_classes)
    }

    /// SHA-256 over features, labels and the split, as hex.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.num_classes as u64).to_le_bytes());
        for (x, &y) in self.features.iter().zip(&self.labels) {
            for v in x {
                h.update(v.as_f64().to_bits().to_le_bytes());
            }
            h.update((y as u64).to_le_bytes());
        }
        for set in [&self.labeled_indices, &self.unlabeled_indices] {
            h.update((set.len() as u64).to_le_bytes());
            for &i in set {
                h.update((i as u64).to_le_bytes());
            }
        }
        h.finalize().iter().fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    /// Columnar text dump.
    ///
    /// ```text
    /// # imax-dataset v1
    /// # d=2 K=3 N=4 domain=0 seed=7 split_seed=11
    /// 0.5 -1.25 2 L
    /// ...
    /// ```
    ///
    /// Each row holds the `d` features, the class label and `L`/`U`.
    /// `split_seed=none` marks a dataset that was never split.
    pub fn write_text<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# imax-dataset v1")?;
        let split = self.split_seed.map_or_else(|| "none".to_string(), |s| s.to_string());
        writeln!(
            out,
            "# d={} K={} N={} domain={} seed={} split_seed={}",
            self.dim(),
            self.num_classes,
            self.len(),
            self.domain_id,
            self.generation_seed,
            split
        )?;
        let mut is_labeled = vec![false; self.len()];
        for &i in &self.labeled_indices {
            is_labeled[i] = true;
        }
        let mut line = String::new();
        for (i, (x, y)) in self.features.iter().zip(&self.labels).enumerate() {
            line.clear();
            for v in x {
                let _ = write!(line, "{} ", v.as_f64());
            }
            let _ = write!(line, "{} {}", y, if is_labeled[i] { 'L' } else { 'U' });
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_text(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn read_text<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines().enumerate();
        let mut next = |what: &str| -> Result<(usize, String)> {
            match lines.next() {
                Some((i, Ok(l))) => Ok((i + 1, l)),
                Some((i, Err(e))) => Err(Error::Parse { line: i + 1, msg: e.to_string() }),
                None => Err(Error::Parse { line: 0, msg: format!("missing {what}") }),
            }
        };
        let (n, magic) = next("magic line")?;
        if magic.trim() != "# imax-dataset v1" {
            return Err(Error::Parse { line: n, msg: "not an imax dataset file".into() });
        }
        let (n, header) = next("header line")?;
        let field = |key: &str| -> Result<String> {
            header
                .trim_start_matches('#')
                .split_whitespace()
                .find_map(|kv| kv.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
                .map(str::to_string)
                .ok_or_else(|| Error::Parse { line: n, msg: format!("missing {key} in header") })
        };
        let num = |key: &str| -> Result<u64> {
            field(key)?
                .parse()
                .map_err(|_| Error::Parse { line: n, msg: format!("bad {key} in header") })
        };
        let d = num("d")? as usize;
        let k = num("K")? as usize;
        let rows = num("N")? as usize;
        let domain = num("domain")? as usize;
        let seed = num("seed")?;
        let split_seed = match field("split_seed")?.as_str() {
            "none" => None,
            s => Some(s.parse().map_err(|_| Error::Parse { line: n, msg: "bad split_seed".into() })?),
        };

        let mut features = Vec::with_capacity(rows);
        let mut labels = Vec::with_capacity(rows);
        let mut labeled = Vec::new();
        let mut unlabeled = Vec::new();
        for row in 0..rows {
            let (n, line) = next("data row")?;
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != d + 2 {
                return Err(Error::Parse { line: n, msg: format!("expected {} columns, got {}", d + 2, parts.len()) });
            }
            let x = parts[..d]
                .iter()
                .map(|s| s.parse::<f64>().map(T::lit))
                .collect::<std::result::Result<Vec<T>, _>>()
                .map_err(|e| Error::Parse { line: n, msg: e.to_string() })?;
            let y: usize = parts[d]
                .parse()
                .map_err(|_| Error::Parse { line: n, msg: "bad label".into() })?;
            match parts[d + 1] {
                "L" => labeled.push(row),
                "U" => unlabeled.push(row),
                other => return Err(Error::Parse { line: n, msg: format!("bad split flag {other:?}") }),
            }
            features.push(x);
            labels.push(y);
        }
        Self::from_parts(domain, k, features, labels, labeled, unlabeled, seed, split_seed)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_text(std::io::BufReader::new(file))
    }
}

fn histogram(it: impl Iterator<Item = usize>, k: usize) -> Vec<usize> {
    let mut h = vec![0; k];
    for y in it {
        h[y] += 1;
    }
    h
}

/// Samples `n_per_class[k]` Gaussian points around each transformed centroid.
///
/// Rows are grouped by class and the whole set starts out unlabeled; see
/// [`split_labeled_unlabeled`].
pub fn generate_domain<T: Scalar>(
    domain: &DomainSpec<T>,
    class_centroids: &[Vec<T>],
    n_per_class: &[usize],
    seed: u64,
) -> Result<DomainDataset<T>> {
    let k = class_centroids.len();
    if k < 2 {
        return Err(Error::InvalidConfig(format!("need at least 2 classes, got {k}")));
    }
    if n_per_class.len() != k {
        return Err(Error::Shape { expected: k, got: n_per_class.len() });
    }
    let dim = class_centroids[0].len();
    if let Some(bad) = class_centroids.iter().find(|c| c.len() != dim) {
        return Err(Error::Shape { expected: dim, got: bad.len() });
    }
    domain.validate(dim)?;
    for i in 0..k {
        for j in 0..i {
            if class_centroids[i] == class_centroids[j] {
                log::warn!("classes {j} and {i} share a centroid; they are indistinguishable");
            }
        }
    }

    let mixing = domain.mixing_matrix(dim);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total: usize = n_per_class.iter().sum();
    let mut features = Vec::with_capacity(total);
    let mut labels = Vec::with_capacity(total);
    for (class, (centroid, &n)) in class_centroids.iter().zip(n_per_class).enumerate() {
        let mean = domain.transform_centroid(centroid, &mixing);
        for _ in 0..n {
            let x: Vec<T> = mean
                .iter()
                .map(|&m| m + domain.noise_scale * T::lit(rng.sample::<f64, _>(StandardNormal)))
                .collect();
            features.push(x);
            labels.push(class);
        }
    }
    let unlabeled = (0..total).collect();
    DomainDataset::from_parts(domain.domain_id, k, features, labels, Vec::new(), unlabeled, seed, None)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitOptions {
    /// Minimum `|unlabeled| / |labeled|` after the split.
    pub min_unlabeled_ratio: f64,
    /// Thin the unlabeled pool with the same decay as the labeled subset.
    pub longtail_unlabeled: bool,
}

impl Default for SplitOptions {
    fn default() -> Self {
        Self {
            min_unlabeled_ratio: 5.0,
            longtail_unlabeled: false,
        }
    }
}

/// Draws the long-tailed labeled subset; the rest becomes the unlabeled pool.
///
/// With `longtail_unlabeled` the pool of the class at rank `r` is cut to
/// `γ^{−r/(K−1)}` of its size and the dropped rows leave the dataset.
pub fn split_labeled_unlabeled<T: Scalar>(
    data: DomainDataset<T>,
    spec: &LongTailSpec,
    seed: u64,
    opts: &SplitOptions,
) -> Result<DomainDataset<T>> {
    if spec.num_classes != data.num_classes {
        return Err(Error::Shape { expected: data.num_classes, got: spec.num_classes });
    }
    let counts = long_tail_counts(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); data.num_classes];
    for (i, &y) in data.labels.iter().enumerate() {
        by_class[y].push(i);
    }

    let mut keep_labeled = Vec::new();
    let mut keep_unlabeled = Vec::new();
    for (class, rows) in by_class.iter_mut().enumerate() {
        let need = counts[class];
        if rows.len() < need + 1 {
            return Err(Error::InfeasibleSplit { class, available: rows.len(), required: need + 1 });
        }
        rows.shuffle(&mut rng);
        keep_labeled.extend_from_slice(&rows[..need]);
        let pool = &rows[need..];
        let pool_len = if opts.longtail_unlabeled {
            let w = spec.rank_weight(spec.rank_of(class));
            ((pool.len() as f64 * w).round() as usize).clamp(1, pool.len())
        } else {
            pool.len()
        };
        keep_unlabeled.extend_from_slice(&pool[..pool_len]);
    }
    if (keep_unlabeled.len() as f64) < opts.min_unlabeled_ratio * keep_labeled.len() as f64 {
        return Err(Error::InvalidConfig(format!(
            "unlabeled pool of {} is below {}x the {} labeled samples",
            keep_unlabeled.len(),
            opts.min_unlabeled_ratio,
            keep_labeled.len()
        )));
    }

    // Rebuild with kept rows in their original order.
    let mut role = vec![None; data.len()];
    for &i in &keep_labeled {
        role[i] = Some(true);
    }
    for &i in &keep_unlabeled {
        role[i] = Some(false);
    }
    let mut features = Vec::with_capacity(keep_labeled.len() + keep_unlabeled.len());
    let mut labels = Vec::with_capacity(features.capacity());
    let mut labeled = Vec::new();
    let mut unlabeled = Vec::new();
    for (i, (x, y)) in data.features.into_iter().zip(data.labels).enumerate() {
        let Some(is_labeled) = role[i] else { continue };
        let row = labels.len();
        if is_labeled {
            labeled.push(row);
        } else {
            unlabeled.push(row);
        }
        features.push(x);
        labels.push(y);
    }
    DomainDataset::from_parts(
        data.domain_id,
        data.num_classes,
        features,
        labels,
        labeled,
        unlabeled,
        data.generation_seed,
        Some(seed),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strength {
    Weak,
    Strong,
}

/// Feature-space stand-ins for image augmentations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentParams<T> {
    pub weak_sigma: T,
    pub strong_sigma: T,
    /// Probability of zeroing each coordinate in the strong view.
    pub strong_dropout: T,
}

impl<T: Scalar> Default for AugmentParams<T> {
    fn default() -> Self {
        Self {
            weak_sigma: T::lit(0.1),
            strong_sigma: T::lit(0.5),
            strong_dropout: T::lit(0.2),
        }
    }
}

impl<T: Scalar> AugmentParams<T> {
    pub fn validate(&self) -> Result<()> {
        let ok = self.weak_sigma >= T::zero()
            && self.strong_sigma >= self.weak_sigma
            && self.strong_dropout >= T::zero()
            && self.strong_dropout < T::one();
        if ok && self.strong_sigma.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "augmentation needs 0 <= weak_sigma <= strong_sigma and dropout in [0, 1), got {self:?}"
            )))
        }
    }
}

/// Weak view: `x + N(0, σ_w²)`. Strong view: `x + N(0, σ_s²)`, then each
/// coordinate zeroed with probability `ρ`.
pub fn augment<T: Scalar>(x: &[T], strength: Strength, params: &AugmentParams<T>, seed: u64) -> Vec<T> {
    augment_with(x, strength, params, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn augment_with<T: Scalar, R: Rng + ?Sized>(
    x: &[T],
    strength: Strength,
    params: &AugmentParams<T>,
    rng: &mut R,
) -> Vec<T> {
    let sigma = match strength {
        Strength::Weak => params.weak_sigma,
        Strength::Strong => params.strong_sigma,
    };
    let dropout = params.strong_dropout.as_f64();
    x.iter()
        .map(|&v| {
            let noisy = v + sigma * T::lit(rng.sample::<f64, _>(StandardNormal));
            if strength == Strength::Strong && rng.random::<f64>() < dropout {
                T::zero()
            } else {
                noisy
            }
        })
        .collect()
}
