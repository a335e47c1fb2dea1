//! Experiment orchestration: leave-one-domain-out suites over several seeds,
//! parameter sweeps, the three-variant objective ablation and plot-ready output.
//!
//! A configuration is a flat `key = value` text file (see
//! [`ExperimentConfig::keys`] for the accepted keys). Every run derives its
//! world (centroids, domain shifts, labeled split) from its seed alone, so
//! all hold-outs and all variants of one seed see byte-identical data.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::data::{
    class_centroids, generate_domain, split_labeled_unlabeled, AugmentParams, DomainDataset, DomainSpec,
    LongTailSpec, SplitOptions,
};
use crate::error::{Error, Result};
use crate::objectives::{LossConfig, MarginalEstimate};
use crate::trainer::{evaluate, train, EpochRecord, EvalReport, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum HeldOut {
    Domain(usize),
    /// Rotate the hold-out over every domain.
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub loss: LossConfig<f64>,
    pub num_classes: usize,
    pub dim: usize,
    pub num_domains: usize,
    pub held_out: HeldOut,
    pub seeds: Vec<u64>,
    pub m_l: usize,
    pub gamma: f64,
    /// Generated samples per class and domain, before the labeled split.
    pub samples_per_class: usize,
    /// Scale of the shared class centroids.
    pub separation: f64,
    pub noise_scale: f64,
    /// Scale of each domain's random centroid translation.
    pub shift_scale: f64,
    pub rotation_strength: f64,
    pub longtail_unlabeled: bool,
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub labeled_batch: usize,
    pub unlabeled_batch: usize,
    pub steps_per_epoch: Option<usize>,
    pub augment: AugmentParams<f64>,
    pub supervised_only: bool,
    /// Not part of the configuration hash.
    pub out_dir: Option<PathBuf>,
    /// Not part of the configuration hash.
    pub jobs: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            loss: LossConfig::default(),
            num_classes: 5,
            dim: 16,
            num_domains: 4,
            held_out: HeldOut::All,
            seeds: (0..5).collect(),
            m_l: 5,
            gamma: 10.0,
            samples_per_class: 100,
            separation: 1.0,
            noise_scale: 1.0,
            shift_scale: 0.3,
            rotation_strength: 0.1,
            longtail_unlabeled: false,
            hidden: vec![64, 64],
            learning_rate: 0.03,
            momentum: 0.9,
            epochs: 20,
            labeled_batch: 16,
            unlabeled_batch: 64,
            steps_per_epoch: None,
            augment: AugmentParams::default(),
            supervised_only: false,
            out_dir: None,
            jobs: 1,
        }
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| Error::InvalidConfig(format!("bad entry {s:?} for {key}"))))
        .collect()
}

fn parse_one<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("bad value {value:?} for {key}")))
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    /// Accepted configuration keys.
    pub fn keys() -> &'static [&'static str] {
        &[
            "alpha",
            "tau",
            "marginal_weight",
            "marginal_estimate",
            "marginal_includes_strong",
            "num_classes",
            "dim",
            "num_domains",
            "held_out",
            "seeds",
            "m_l",
            "gamma",
            "samples_per_class",
            "separation",
            "noise_scale",
            "shift_scale",
            "rotation_strength",
            "longtail_unlabeled",
            "hidden",
            "learning_rate",
            "momentum",
            "epochs",
            "labeled_batch",
            "unlabeled_batch",
            "steps_per_epoch",
            "weak_sigma",
            "strong_sigma",
            "strong_dropout",
            "supervised_only",
            "out_dir",
            "jobs",
        ]
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "alpha" => self.loss.alpha = parse_one(key, v)?,
            "tau" => self.loss.tau = parse_one(key, v)?,
            "marginal_weight" => self.loss.marginal_weight = parse_one(key, v)?,
            "marginal_estimate" => {
                self.loss.marginal_estimate = match v.split_once(':') {
                    None if v == "batch" => MarginalEstimate::Batch,
                    Some(("running", m)) => MarginalEstimate::Running { momentum: parse_one(key, m)? },
                    _ => return Err(Error::InvalidConfig(format!("marginal_estimate must be batch or running:<m>, got {v:?}"))),
                }
            }
            "marginal_includes_strong" => self.loss.marginal_includes_strong = parse_one(key, v)?,
            "num_classes" => self.num_classes = parse_one(key, v)?,
            "dim" => self.dim = parse_one(key, v)?,
            "num_domains" => self.num_domains = parse_one(key, v)?,
            "held_out" => {
                self.held_out = if v.eq_ignore_ascii_case("all") {
                    HeldOut::All
                } else {
                    HeldOut::Domain(parse_one(key, v)?)
                }
            }
            "seeds" => self.seeds = parse_list(key, v)?,
            "m_l" => self.m_l = parse_one(key, v)?,
            "gamma" => self.gamma = parse_one(key, v)?,
            "samples_per_class" => self.samples_per_class = parse_one(key, v)?,
            "separation" => self.separation = parse_one(key, v)?,
            "noise_scale" => self.noise_scale = parse_one(key, v)?,
            "shift_scale" => self.shift_scale = parse_one(key, v)?,
            "rotation_strength" => self.rotation_strength = parse_one(key, v)?,
            "longtail_unlabeled" => self.longtail_unlabeled = parse_one(key, v)?,
            "hidden" => self.hidden = parse_list(key, v)?,
            "learning_rate" => self.learning_rate = parse_one(key, v)?,
            "momentum" => self.momentum = parse_one(key, v)?,
            "epochs" => self.epochs = parse_one(key, v)?,
            "labeled_batch" => self.labeled_batch = parse_one(key, v)?,
            "unlabeled_batch" => self.unlabeled_batch = parse_one(key, v)?,
            "steps_per_epoch" => {
                self.steps_per_epoch = if v == "auto" { None } else { Some(parse_one(key, v)?) }
            }
            "weak_sigma" => self.augment.weak_sigma = parse_one(key, v)?,
            "strong_sigma" => self.augment.strong_sigma = parse_one(key, v)?,
            "strong_dropout" => self.augment.strong_dropout = parse_one(key, v)?,
            "supervised_only" => self.supervised_only = parse_one(key, v)?,
            "out_dir" => self.out_dir = if v.is_empty() { None } else { Some(PathBuf::from(v)) },
            "jobs" => self.jobs = parse_one(key, v)?,
            other => return Err(Error::InvalidConfig(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "alpha" => self.loss.alpha.to_string(),
            "tau" => self.loss.tau.to_string(),
            "marginal_weight" => self.loss.marginal_weight.to_string(),
            "marginal_estimate" => match self.loss.marginal_estimate {
                MarginalEstimate::Batch => "batch".into(),
                MarginalEstimate::Running { momentum } => format!("running:{momentum}"),
            },
            "marginal_includes_strong" => self.loss.marginal_includes_strong.to_string(),
            "num_classes" => self.num_classes.to_string(),
            "dim" => self.dim.to_string(),
            "num_domains" => self.num_domains.to_string(),
            "held_out" => match self.held_out {
                HeldOut::All => "all".into(),
                HeldOut::Domain(d) => d.to_string(),
            },
            "seeds" => join(&self.seeds),
            "m_l" => self.m_l.to_string(),
            "gamma" => self.gamma.to_string(),
            "samples_per_class" => self.samples_per_class.to_string(),
            "separation" => self.separation.to_string(),
            "noise_scale" => self.noise_scale.to_string(),
            "shift_scale" => self.shift_scale.to_string(),
            "rotation_strength" => self.rotation_strength.to_string(),
            "longtail_unlabeled" => self.longtail_unlabeled.to_string(),
            "hidden" => join(&self.hidden),
            "learning_rate" => self.learning_rate.to_string(),
            "momentum" => self.momentum.to_string(),
            "epochs" => self.epochs.to_string(),
            "labeled_batch" => self.labeled_batch.to_string(),
            "unlabeled_batch" => self.unlabeled_batch.to_string(),
            "steps_per_epoch" => self.steps_per_epoch.map_or_else(|| "auto".into(), |s| s.to_string()),
            "weak_sigma" => self.augment.weak_sigma.to_string(),
            "strong_sigma" => self.augment.strong_sigma.to_string(),
            "strong_dropout" => self.augment.strong_dropout.to_string(),
            "supervised_only" => self.supervised_only.to_string(),
            "out_dir" => self.out_dir.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
            "jobs" => self.jobs.to_string(),
            _ => return None,
        })
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                msg: format!("expected key = value, got {line:?}"),
            })?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    /// Every key with its effective value, sorted by key.
    pub fn effective(&self) -> BTreeMap<String, String> {
        Self::keys()
            .iter()
            .map(|k| (k.to_string(), self.get(k).expect("known key")))
            .collect()
    }

    pub fn to_text(&self) -> String {
        self.effective().iter().fold(String::new(), |mut s, (k, v)| {
            let _ = writeln!(s, "{k} = {v}");
            s
        })
    }

    /// Hash of the sorted effective values, excluding `out_dir` and `jobs`.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in self.effective() {
            if k == "out_dir" || k == "jobs" {
                continue;
            }
            h.update(k.as_bytes());
            h.update(b"=");
            h.update(v.as_bytes());
            h.update(b"\n");
        }
        h.finalize().iter().take(8).fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_domains < 3 {
            // two or more sources for every hold-out
            return Err(Error::InvalidConfig(format!("need at least 3 domains, got {}", self.num_domains)));
        }
        if let HeldOut::Domain(d) = self.held_out {
            if d >= self.num_domains {
                return Err(Error::InvalidConfig(format!("held_out {d} >= num_domains {}", self.num_domains)));
            }
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("seeds must not be empty".into()));
        }
        if self.dim == 0 || self.num_classes < 2 {
            return Err(Error::InvalidConfig("need dim >= 1 and num_classes >= 2".into()));
        }
        if self.m_l == 0 {
            return Err(Error::InvalidConfig("m_l must be at least 1".into()));
        }
        if self.jobs == 0 {
            return Err(Error::InvalidConfig("jobs must be at least 1".into()));
        }
        for (name, v) in [
            ("separation", self.separation),
            ("shift_scale", self.shift_scale),
            ("rotation_strength", self.rotation_strength),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !(self.noise_scale > 0.0) || !self.noise_scale.is_finite() {
            return Err(Error::InvalidConfig(format!("noise_scale must be positive, got {}", self.noise_scale)));
        }
        LongTailSpec::ordered(self.num_classes, self.m_l, self.gamma)?;
        self.train_config(0).validate()
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig<f64> {
        TrainConfig {
            loss: self.loss.clone(),
            hidden: self.hidden.clone(),
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            epochs: self.epochs,
            labeled_batch: self.labeled_batch,
            unlabeled_batch: self.unlabeled_batch,
            steps_per_epoch: self.steps_per_epoch,
            augment: self.augment.clone(),
            use_unlabeled: !self.supervised_only,
            seed,
        }
    }

    pub fn held_out_domains(&self) -> Vec<usize> {
        match self.held_out {
            HeldOut::All => (0..self.num_domains).collect(),
            HeldOut::Domain(d) => vec![d],
        }
    }
}

/// SplitMix64 finalizer over `(base, tag, index)`.
pub fn derive_seed(base: u64, tag: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(tag.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const TAG_CENTROIDS: u64 = 1;
const TAG_SHIFT: u64 = 2;
const TAG_ROTATION: u64 = 3;
const TAG_SAMPLES: u64 = 4;
const TAG_SPLIT: u64 = 5;
const TAG_TRAIN: u64 = 6;

/// All domains of one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub longtail: LongTailSpec,
    /// Split domains (sources when not held out).
    pub domains: Vec<DomainDataset<f64>>,
}

impl World {
    /// Combined hash of every domain's contents and split.
    pub fn split_hash(&self) -> String {
        let mut h = Sha256::new();
        for d in &self.domains {
            h.update(d.content_hash().as_bytes());
        }
        h.finalize().iter().take(8).fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}

/// Builds the synthetic domains for `seed`. Depends only on data-side keys.
pub fn build_world(cfg: &ExperimentConfig, seed: u64) -> Result<World> {
    let (k, d) = (cfg.num_classes, cfg.dim);
    let centroids = class_centroids::<f64>(k, d, cfg.separation, derive_seed(seed, TAG_CENTROIDS, 0));
    // one class order per seed, shared by every domain
    let longtail = LongTailSpec::shuffled(k, cfg.m_l, cfg.gamma, derive_seed(seed, TAG_SPLIT, u64::MAX))?;
    let opts = SplitOptions {
        longtail_unlabeled: cfg.longtail_unlabeled,
        ..SplitOptions::default()
    };
    let mut domains = Vec::with_capacity(cfg.num_domains);
    for j in 0..cfg.num_domains {
        let j64 = j as u64;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, TAG_SHIFT, j64));
        let spec = DomainSpec {
            domain_id: j,
            mean_shift: (0..d).map(|_| cfg.shift_scale * rng.sample::<f64, _>(StandardNormal)).collect(),
            rotation_seed: derive_seed(seed, TAG_ROTATION, j64),
            rotation_strength: cfg.rotation_strength,
            noise_scale: cfg.noise_scale,
        };
        let raw = generate_domain(&spec, &centroids, &vec![cfg.samples_per_class; k], derive_seed(seed, TAG_SAMPLES, j64))?;
        domains.push(split_labeled_unlabeled(raw, &longtail, derive_seed(seed, TAG_SPLIT, j64), &opts)?);
    }
    Ok(World { longtail, domains })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub seed: u64,
    pub heldout: usize,
    pub alpha: f64,
    pub tau: f64,
    pub gamma: f64,
    pub m_l: usize,
    pub marginal_weight: f64,
    /// NaN when the run diverged.
    pub accuracy: f64,
    pub eval: Option<EvalReport>,
    pub epochs: Vec<EpochRecord<f64>>,
    pub diverged: Option<String>,
    pub split_hash: String,
    pub wall_s: f64,
    pub config: BTreeMap<String, String>,
}

impl RunRecord {
    pub fn csv_header() -> &'static str {
        "seed,heldout,alpha,tau,gamma,m_l,accuracy,wall_s"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{:.6},{:.3}",
            self.seed, self.heldout, self.alpha, self.tau, self.gamma, self.m_l, self.accuracy, self.wall_s
        )
    }
}

/// Trains on every domain but `heldout` and evaluates on all rows of `heldout`.
pub fn run_single(cfg: &ExperimentConfig, world: &World, seed: u64, heldout: usize) -> RunRecord {
    let started = Instant::now();
    let sources: Vec<DomainDataset<f64>> = world
        .domains
        .iter()
        .filter(|d| d.domain_id() != heldout)
        .cloned()
        .collect();
    let target = &world.domains[heldout];
    let tc = cfg.train_config(derive_seed(seed, TAG_TRAIN, heldout as u64));
    let (accuracy, eval, epochs, diverged) = match train(&tc, &sources).and_then(|st| {
        let report = evaluate(&st.model, target)?;
        Ok((report, st.history))
    }) {
        Ok((report, history)) => (report.accuracy, Some(report), history, None),
        Err(e) => {
            log::error!("seed {seed} heldout {heldout}: {e}");
            (f64::NAN, None, Vec::new(), Some(e.to_string()))
        }
    };
    RunRecord {
        config_hash: cfg.hash(),
        seed,
        heldout,
        alpha: cfg.loss.alpha,
        tau: cfg.loss.tau,
        gamma: cfg.gamma,
        m_l: cfg.m_l,
        marginal_weight: cfg.loss.marginal_weight,
        accuracy,
        eval,
        epochs,
        diverged,
        split_hash: world.split_hash(),
        wall_s: started.elapsed().as_secs_f64(),
        config: cfg.effective(),
    }
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub config_hash: String,
    pub runs: usize,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
}

impl Aggregate {
    pub fn from_records(records: &[RunRecord]) -> Self {
        let acc: Vec<f64> = records.iter().map(|r| r.accuracy).collect();
        let (mean, std) = mean_std(&acc);
        Self {
            config_hash: records.first().map(|r| r.config_hash.clone()).unwrap_or_default(),
            runs: records.len(),
            mean_accuracy: mean,
            std_accuracy: std,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub records: Vec<RunRecord>,
    pub aggregate: Aggregate,
}

impl SuiteResult {
    pub fn diverged(&self) -> bool {
        self.records.iter().any(|r| r.diverged.is_some())
    }

    /// Mean accuracy per seed over its hold-outs.
    pub fn seed_means(&self) -> BTreeMap<u64, f64> {
        let mut by_seed: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
        for r in &self.records {
            by_seed.entry(r.seed).or_default().push(r.accuracy);
        }
        by_seed.into_iter().map(|(s, v)| (s, mean_std(&v).0)).collect()
    }
}

fn ensure_writable(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let probe = dir.join(".write-probe");
    std::fs::write(&probe, b"").map_err(|e| Error::io(&probe, e))?;
    std::fs::remove_file(&probe).map_err(|e| Error::io(&probe, e))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(contents.as_bytes()).map_err(|e| Error::io(path, e))
}

fn with_pool<R: Send>(jobs: usize, work: impl FnOnce() -> R + Send) -> Result<R> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot start {jobs} workers: {e}")))?;
    Ok(pool.install(work))
}

pub fn runs_csv(records: &[RunRecord]) -> String {
    let mut s = String::from(RunRecord::csv_header());
    s.push('\n');
    for r in records {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

pub fn aggregate_csv(cfg: &ExperimentConfig, agg: &Aggregate) -> String {
    format!(
        "config_hash,alpha,tau,gamma,m_l,marginal_weight,runs,mean_accuracy,std_accuracy\n{},{},{},{},{},{},{},{:.6},{:.6}\n",
        agg.config_hash,
        cfg.loss.alpha,
        cfg.loss.tau,
        cfg.gamma,
        cfg.m_l,
        cfg.loss.marginal_weight,
        agg.runs,
        agg.mean_accuracy,
        agg.std_accuracy
    )
}

/// `|seeds| × |hold-outs|` runs, written to `out_dir` when one is set.
///
/// Output: `runs.csv`, `aggregate.csv`, `config.txt` and
/// `runs/seed<S>_heldout<H>.json` with per-epoch loss terms.
pub fn run_suite(cfg: &ExperimentConfig) -> Result<SuiteResult> {
    cfg.validate()?;
    if let Some(dir) = &cfg.out_dir {
        ensure_writable(dir)?;
        ensure_writable(&dir.join("runs"))?;
    }
    let heldouts = cfg.held_out_domains();
    let records = with_pool(cfg.jobs, || {
        cfg.seeds
            .par_iter()
            .map(|&seed| {
                let world = build_world(cfg, seed)?;
                Ok(heldouts
                    .par_iter()
                    .map(|&h| run_single(cfg, &world, seed, h))
                    .collect::<Vec<_>>())
            })
            .collect::<Result<Vec<Vec<RunRecord>>>>()
    })??;
    let records: Vec<RunRecord> = records.into_iter().flatten().collect();
    let aggregate = Aggregate::from_records(&records);

    if let Some(dir) = &cfg.out_dir {
        write_file(&dir.join("runs.csv"), &runs_csv(&records))?;
        write_file(&dir.join("aggregate.csv"), &aggregate_csv(cfg, &aggregate))?;
        write_file(&dir.join("config.txt"), &cfg.to_text())?;
        for r in &records {
            let path = dir.join("runs").join(format!("seed{}_heldout{}.json", r.seed, r.heldout));
            let json = serde_json::to_string_pretty(r).expect("run record serializes");
            write_file(&path, &json)?;
        }
    }
    Ok(SuiteResult { records, aggregate })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Alpha,
    Gamma,
    Ml,
}

impl SweepAxis {
    pub fn key(self) -> &'static str {
        match self {
            SweepAxis::Alpha => "alpha",
            SweepAxis::Gamma => "gamma",
            SweepAxis::Ml => "m_l",
        }
    }

    fn check(self, v: f64) -> Result<()> {
        let ok = match self {
            SweepAxis::Alpha => v > 0.0 && v.is_finite(),
            SweepAxis::Gamma => v >= 1.0 && v.is_finite(),
            SweepAxis::Ml => v >= 1.0 && v.fract() == 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("{v} is not a legal {}", self.key())))
        }
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "alpha" => Ok(SweepAxis::Alpha),
            "gamma" => Ok(SweepAxis::Gamma),
            "ml" | "m_l" => Ok(SweepAxis::Ml),
            other => Err(Error::InvalidConfig(format!("unknown sweep axis {other:?}"))),
        }
    }
}

/// One plotted point: swept value, mean accuracy, standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TableRow {
    pub value: f64,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub rows: Vec<TableRow>,
    pub suites: Vec<SuiteResult>,
}

fn sub_config(cfg: &ExperimentConfig, name: &str) -> ExperimentConfig {
    let mut c = cfg.clone();
    c.out_dir = cfg.out_dir.as_ref().map(|d| d.join(name));
    c
}

/// Runs a suite per value; all values are validated before any training.
pub fn sweep(cfg: &ExperimentConfig, axis: SweepAxis, values: &[f64]) -> Result<SweepResult> {
    if values.is_empty() {
        return Err(Error::InvalidConfig("sweep needs at least one value".into()));
    }
    let mut configs = Vec::with_capacity(values.len());
    for &v in values {
        axis.check(v)?;
        let mut c = sub_config(cfg, &format!("{}_{v}", axis.key()));
        c.set(axis.key(), &v.to_string())?;
        c.validate()?;
        configs.push(c);
    }
    if let Some(dir) = &cfg.out_dir {
        ensure_writable(dir)?;
    }
    let mut rows = Vec::with_capacity(values.len());
    let mut suites = Vec::with_capacity(values.len());
    for (c, &v) in configs.iter().zip(values) {
        let suite = run_suite(c)?;
        rows.push(TableRow {
            value: v,
            mean: suite.aggregate.mean_accuracy,
            std: suite.aggregate.std_accuracy,
        });
        suites.push(suite);
    }
    if let Some(dir) = &cfg.out_dir {
        write_file(&dir.join(format!("sweep_{}.dat", axis.key())), &emit_plot_data(axis.key(), &rows)?)?;
    }
    Ok(SweepResult { axis, rows, suites })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub variant: String,
    pub mean: f64,
    pub std: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationResult {
    pub rows: Vec<AblationRow>,
    /// Baseline, Shannon marginal, Tsallis marginal.
    pub suites: [SuiteResult; 3],
}

impl AblationResult {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("variant,mean_accuracy,std_accuracy,delta_vs_baseline\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{:.6},{:.6},{:+.6}", r.variant, r.mean, r.std, r.delta);
        }
        s
    }
}

pub const ABLATION_VARIANTS: [&str; 3] = ["ssl_baseline", "plus_shannon_marginal", "plus_tsallis_marginal"];

/// The three objective variants on identical seeds and splits:
/// no marginal term, Shannon marginal (`α = 1`), Tsallis marginal (configured `α`).
pub fn ablation(cfg: &ExperimentConfig) -> Result<AblationResult> {
    cfg.validate()?;
    let weight = if cfg.loss.marginal_weight > 0.0 { cfg.loss.marginal_weight } else { 1.0 };
    let mut baseline = sub_config(cfg, ABLATION_VARIANTS[0]);
    baseline.loss.marginal_weight = 0.0;
    let mut shannon = sub_config(cfg, ABLATION_VARIANTS[1]);
    shannon.loss.alpha = 1.0;
    shannon.loss.marginal_weight = weight;
    let mut tsallis = sub_config(cfg, ABLATION_VARIANTS[2]);
    tsallis.loss.marginal_weight = weight;

    if let Some(dir) = &cfg.out_dir {
        ensure_writable(dir)?;
    }
    let suites = [run_suite(&baseline)?, run_suite(&shannon)?, run_suite(&tsallis)?];
    let base = suites[0].aggregate.mean_accuracy;
    let rows = ABLATION_VARIANTS
        .iter()
        .zip(&suites)
        .map(|(name, s)| AblationRow {
            variant: name.to_string(),
            mean: s.aggregate.mean_accuracy,
            std: s.aggregate.std_accuracy,
            delta: s.aggregate.mean_accuracy - base,
        })
        .collect();
    let result = AblationResult { rows, suites };
    if let Some(dir) = &cfg.out_dir {
        write_file(&dir.join("ablation.csv"), &result.to_csv())?;
    }
    Ok(result)
}

/// Whitespace-separated `value mean std` columns under a `#` header line.
pub fn emit_plot_data(value_name: &str, rows: &[TableRow]) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::InvalidInput("nothing to plot".into()));
    }
    let mut s = format!("# {value_name} mean_accuracy std_accuracy\n");
    for r in rows {
        let _ = writeln!(s, "{} {} {}", r.value, r.mean, r.std);
    }
    Ok(s)
}

/// Reads back the output of [`emit_plot_data`]; returns the value column name and rows.
pub fn parse_plot_data(text: &str) -> Result<(String, Vec<TableRow>)> {
    let mut name = None;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(header) = line.strip_prefix('#') {
            if name.is_none() {
                name = header.split_whitespace().next().map(str::to_string);
            }
            continue;
        }
        let cols: Vec<f64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse { line: i + 1, msg: format!("{e}") })?;
        if cols.len() != 3 {
            return Err(Error::Parse { line: i + 1, msg: format!("expected 3 columns, got {}", cols.len()) });
        }
        rows.push(TableRow { value: cols[0], mean: cols[1], std: cols[2] });
    }
    let name = name.ok_or(Error::Parse { line: 1, msg: "missing header".into() })?;
    Ok((name, rows))
}

/// Turns a CSV with a header into plot data using the named columns.
pub fn csv_to_plot_rows(csv: &str, value_col: &str, mean_col: &str, std_col: &str) -> Result<Vec<TableRow>> {
    let mut lines = csv.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines
        .next()
        .ok_or(Error::Parse { line: 1, msg: "empty csv".into() })?
        .split(',')
        .map(str::trim)
        .collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| Error::Parse { line: 1, msg: format!("no column {name:?}") })
    };
    let (vi, mi, si) = (col(value_col)?, col(mean_col)?, col(std_col)?);
    lines
        .enumerate()
        .map(|(i, line)| {
            let cells: Vec<&str> = line.split(',').map(str::trim).collect();
            let get = |j: usize| -> Result<f64> {
                cells
                    .get(j)
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| Error::Parse { line: i + 2, msg: format!("bad number in column {j}") })
            };
            Ok(TableRow { value: get(vi)?, mean: get(mi)?, std: get(si)? })
        })
        .collect()
}
