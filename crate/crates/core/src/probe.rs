//! Probing classifiers on frozen embeddings.
//!
//! A probe is an `input -> hidden -> output` perceptron with a rectifier hidden
//! layer, trained by seeded minibatch SGD on z-scored embeddings. Class tasks
//! use a softmax head; word presence uses one sigmoid output per lexicon word
//! on a shared hidden layer.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoder::Embedding;
use crate::error::{Error, Result};
use crate::nn::{relu_backward_inplace, relu_inplace, Dense};
use crate::synthdata::{split, Corpus, LabeledUtterance, WordSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeTask {
    SpeakerId,
    Gender,
    Cluster,
    Rate,
    Nuisance,
    WordPresence,
}

impl ProbeTask {
    pub const ALL: [ProbeTask; 6] = [
        ProbeTask::SpeakerId,
        ProbeTask::Gender,
        ProbeTask::Cluster,
        ProbeTask::Rate,
        ProbeTask::Nuisance,
        ProbeTask::WordPresence,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProbeTask::SpeakerId => "speaker_id",
            ProbeTask::Gender => "gender",
            ProbeTask::Cluster => "cluster",
            ProbeTask::Rate => "rate",
            ProbeTask::Nuisance => "nuisance",
            ProbeTask::WordPresence => "word_presence",
        }
    }

    /// Class label of an utterance, or `None` for the multi-label word task.
    pub fn label(self, corpus: &Corpus, utt: &LabeledUtterance) -> Option<usize> {
        match self {
            ProbeTask::SpeakerId => Some(utt.speaker),
            ProbeTask::Gender => Some(utt.gender as usize),
            ProbeTask::Cluster => Some(corpus.cluster_of(utt)),
            ProbeTask::Rate => Some(utt.rate),
            ProbeTask::Nuisance => Some(utt.nuisance),
            ProbeTask::WordPresence => None,
        }
    }
}

impl fmt::Display for ProbeTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProbeTask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ProbeTask::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown probe task `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeConfig {
    pub hidden_width: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub train_frac: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            hidden_width: 500,
            epochs: 50,
            lr: 0.05,
            batch_size: 32,
            train_frac: 0.8,
            seed: 0,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_width == 0 || self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig(
                "probe hidden_width, epochs and batch_size must be >= 1".into(),
            ));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidConfig(format!("probe lr must be positive, got {}", self.lr)));
        }
        if !(self.train_frac > 0.0 && self.train_frac < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "probe train_frac must lie in (0, 1), got {}",
                self.train_frac
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Objective {
    Softmax,
    Sigmoid,
}

/// Trained probe: input standardization followed by the two-layer network.
#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub mean: Array1<f64>,
    pub scale: Array1<f64>,
    pub hidden: Dense,
    pub output: Dense,
}

impl Probe {
    /// Freshly initialized network for the given shape (standardization unset).
    pub fn init(input_dim: usize, outputs: usize, cfg: &ProbeConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let hidden = Dense::glorot(input_dim, cfg.hidden_width, &mut rng);
        let output = Dense::glorot(cfg.hidden_width, outputs, &mut rng);
        Probe {
            mean: Array1::zeros(input_dim),
            scale: Array1::ones(input_dim),
            hidden,
            output,
        }
    }

    fn standardize(&self, x: &mut Array2<f64>) {
        *x -= &self.mean;
        *x /= &self.scale;
    }

    /// Output logits for a batch of raw embeddings.
    pub fn logits(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut x = x.to_owned();
        self.standardize(&mut x);
        let mut h = self.hidden.forward(x.view());
        relu_inplace(&mut h);
        self.output.forward(h.view())
    }

    pub fn predict(&self, emb: &[f64]) -> usize {
        let x = Array2::from_shape_vec((1, emb.len()), emb.to_vec()).expect("row shape");
        argmax(self.logits(x.view()).row(0).iter().copied())
    }

    pub fn accuracy(&self, data: &[(Embedding, usize)]) -> f64 {
        if data.is_empty() {
            return 0.0;
        }
        let x = stack(data.iter().map(|(e, _)| e.as_slice()));
        let logits = self.logits(x.view());
        let hits = logits
            .rows()
            .into_iter()
            .zip(data)
            .filter(|(row, (_, y))| argmax(row.iter().copied()) == *y)
            .count();
        hits as f64 / data.len() as f64
    }
}

fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

fn stack<'a>(rows: impl Iterator<Item = &'a [f64]>) -> Array2<f64> {
    let rows: Vec<&[f64]> = rows.collect();
    let d = rows.first().map_or(0, |r| r.len());
    let mut out = Array2::zeros((rows.len(), d));
    for (mut dst, src) in out.rows_mut().into_iter().zip(rows) {
        dst.assign(&ndarray::ArrayView1::from(src));
    }
    out
}

fn check_dims<'a>(rows: impl Iterator<Item = &'a [f64]>) -> Result<usize> {
    let mut dim = None;
    for r in rows {
        match dim {
            None => dim = Some(r.len()),
            Some(d) if d != r.len() => {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: r.len(),
                })
            }
            _ => {}
        }
    }
    match dim {
        Some(0) | None => Err(Error::InvalidConfig("probe needs non-empty embeddings".into())),
        Some(d) => Ok(d),
    }
}

/// SGD on `(x, targets)`; `mask` selects which output columns contribute to the loss.
fn fit(
    mut probe: Probe,
    x: &Array2<f64>,
    targets: &Array2<f64>,
    mask: &Array1<f64>,
    objective: Objective,
    cfg: &ProbeConfig,
) -> Result<Probe> {
    let n = x.nrows();
    probe.mean = x.mean_axis(Axis(0)).expect("non-empty");
    probe.scale = x.std_axis(Axis(0), 0.0).mapv(|s| if s > 1e-12 { s } else { 1.0 });
    let mut xs = x.clone();
    probe.standardize(&mut xs);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let xb = xs.select(Axis(0), chunk);
            let yb = targets.select(Axis(0), chunk);
            let pre = probe.hidden.forward(xb.view());
            let mut h = pre.clone();
            relu_inplace(&mut h);
            let logits = probe.output.forward(h.view());
            let mut d_logits = match objective {
                Objective::Softmax => {
                    let mut p = logits;
                    for mut row in p.rows_mut() {
                        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                        row.mapv_inplace(|z| (z - max).exp());
                        let s = row.sum();
                        row /= s;
                    }
                    p - &yb
                }
                Objective::Sigmoid => logits.mapv(|z| 1.0 / (1.0 + (-z).exp())) - &yb,
            };
            d_logits *= mask;
            d_logits /= chunk.len() as f64;
            if !d_logits.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFiniteLoss { step: 0 });
            }
            let mut g_out = Dense::zeros(probe.output.fan_in(), probe.output.fan_out());
            let mut g_hid = Dense::zeros(probe.hidden.fan_in(), probe.hidden.fan_out());
            let mut d_h = probe.output.backward(h.view(), d_logits.view(), &mut g_out);
            relu_backward_inplace(&mut d_h, &pre);
            probe.hidden.backward(xb.view(), d_h.view(), &mut g_hid);
            probe.output.step(&g_out, cfg.lr);
            probe.hidden.step(&g_hid, cfg.lr);
        }
    }
    Ok(probe)
}

/// Train a softmax probe on `(embedding, label)` pairs.
pub fn train_probe(data: &[(Embedding, usize)], cfg: &ProbeConfig) -> Result<Probe> {
    let dim = check_dims(data.iter().map(|(e, _)| e.as_slice()))?;
    train_probe_from(Probe::init(dim, num_classes(data), cfg), data, cfg)
}

/// As [`train_probe`], starting from the given initial weights.
pub fn train_probe_from(init: Probe, data: &[(Embedding, usize)], cfg: &ProbeConfig) -> Result<Probe> {
    cfg.validate()?;
    let dim = check_dims(data.iter().map(|(e, _)| e.as_slice()))?;
    let classes = num_classes(data);
    let distinct: std::collections::BTreeSet<usize> = data.iter().map(|(_, y)| *y).collect();
    if distinct.len() < 2 {
        return Err(Error::SingleClass);
    }
    if init.hidden.fan_in() != dim || init.output.fan_out() < classes || init.hidden.fan_out() != init.output.fan_in() {
        return Err(Error::ShapeMismatch(format!(
            "probe is {}->{}->{}, data has dim {dim} and {classes} classes",
            init.hidden.fan_in(),
            init.hidden.fan_out(),
            init.output.fan_out()
        )));
    }
    let x = stack(data.iter().map(|(e, _)| e.as_slice()));
    let mut y = Array2::zeros((data.len(), init.output.fan_out()));
    for (i, (_, label)) in data.iter().enumerate() {
        y[[i, *label]] = 1.0;
    }
    let mask = Array1::ones(init.output.fan_out());
    fit(init, &x, &y, &mask, Objective::Softmax, cfg)
}

fn num_classes(data: &[(Embedding, usize)]) -> usize {
    data.iter().map(|(_, y)| y + 1).max().unwrap_or(0)
}

/// Held-out result of one probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeOutcome {
    pub accuracy: f64,
    /// Accuracy of always predicting the most frequent training label.
    pub chance: f64,
    pub n_train: usize,
    pub n_test: usize,
}

fn majority(labels: impl Iterator<Item = usize>) -> usize {
    let mut counts = std::collections::BTreeMap::new();
    for y in labels {
        *counts.entry(y).or_insert(0usize) += 1;
    }
    // ties go to the smallest label
    counts
        .into_iter()
        .fold((0, 0), |best, (y, c)| if c > best.1 { (y, c) } else { best })
        .0
}

/// Stratified split, train, and evaluate a class probe.
pub fn class_probe(data: &[(Embedding, usize)], cfg: &ProbeConfig) -> Result<ProbeOutcome> {
    cfg.validate()?;
    let labels: Vec<usize> = data.iter().map(|(_, y)| *y).collect();
    let sp = split(&labels, cfg.train_frac, cfg.seed)?;
    let train: Vec<(Embedding, usize)> = sp.train.iter().map(|&i| data[i].clone()).collect();
    let test: Vec<(Embedding, usize)> = sp.test.iter().map(|&i| data[i].clone()).collect();
    let probe = train_probe(&train, cfg)?;
    let top = majority(train.iter().map(|(_, y)| *y));
    let chance = test.iter().filter(|(_, y)| *y == top).count() as f64 / test.len() as f64;
    Ok(ProbeOutcome {
        accuracy: probe.accuracy(&test),
        chance,
        n_train: train.len(),
        n_test: test.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordPresenceOutcome {
    /// Mean of the per-word held-out accuracies over the words that were probed.
    pub accuracy: f64,
    pub chance: f64,
    /// Held-out accuracy per lexicon word; `None` when the word was skipped.
    pub per_word: Vec<Option<f64>>,
    /// Words that were absent from (or present in) every training utterance.
    pub skipped: Vec<usize>,
    pub n_train: usize,
    pub n_test: usize,
}

/// One binary presence classifier per lexicon word, sharing the hidden layer.
pub fn word_presence_probe(
    data: &[(Embedding, WordSet)],
    lexicon_size: usize,
    cfg: &ProbeConfig,
) -> Result<WordPresenceOutcome> {
    cfg.validate()?;
    if lexicon_size == 0 || lexicon_size > WordSet::CAPACITY {
        return Err(Error::InvalidConfig(format!("lexicon size {lexicon_size} out of range")));
    }
    let dim = check_dims(data.iter().map(|(e, _)| e.as_slice()))?;
    let sp = split(&vec![0; data.len()], cfg.train_frac, cfg.seed)?;
    let targets = |idx: &[usize]| {
        let mut y = Array2::zeros((idx.len(), lexicon_size));
        for (r, &i) in idx.iter().enumerate() {
            for w in 0..lexicon_size {
                if data[i].1.contains(w) {
                    y[[r, w]] = 1.0;
                }
            }
        }
        y
    };
    let y_train = targets(&sp.train);
    let y_test = targets(&sp.test);
    let positives = y_train.sum_axis(Axis(0));
    let skipped: Vec<usize> = (0..lexicon_size)
        .filter(|&w| positives[w] == 0.0 || positives[w] == sp.train.len() as f64)
        .collect();
    if skipped.len() == lexicon_size {
        return Err(Error::SingleClass);
    }
    let mask = Array1::from_shape_fn(lexicon_size, |w| if skipped.contains(&w) { 0.0 } else { 1.0 });

    let x_train = stack(sp.train.iter().map(|&i| data[i].0.as_slice()));
    let x_test = stack(sp.test.iter().map(|&i| data[i].0.as_slice()));
    let probe = fit(
        Probe::init(dim, lexicon_size, cfg),
        &x_train,
        &y_train,
        &mask,
        Objective::Sigmoid,
        cfg,
    )?;
    let logits = probe.logits(x_test.view());
    let n_test = sp.test.len() as f64;
    let mut per_word = vec![None; lexicon_size];
    let mut chance_sum = 0.0;
    for w in (0..lexicon_size).filter(|w| !skipped.contains(w)) {
        let hits = (0..sp.test.len())
            .filter(|&r| (logits[[r, w]] >= 0.0) == (y_test[[r, w]] == 1.0))
            .count();
        per_word[w] = Some(hits as f64 / n_test);
        let majority_present = 2.0 * positives[w] > sp.train.len() as f64;
        let agree = (0..sp.test.len())
            .filter(|&r| (y_test[[r, w]] == 1.0) == majority_present)
            .count();
        chance_sum += agree as f64 / n_test;
    }
    let probed = (lexicon_size - skipped.len()) as f64;
    Ok(WordPresenceOutcome {
        accuracy: per_word.iter().flatten().sum::<f64>() / probed,
        chance: chance_sum / probed,
        per_word,
        skipped,
        n_train: sp.train.len(),
        n_test: sp.test.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub pooling: String,
    pub task: ProbeTask,
    pub accuracy: f64,
    pub chance: f64,
    pub n_train: usize,
    pub n_test: usize,
}

impl fmt::Display for ProbeReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {} {} {} {}",
            self.pooling, self.task, self.accuracy, self.chance, self.n_train, self.n_test
        )
    }
}

/// Run one task on embeddings aligned with `corpus.utterances`.
pub fn probe_task(
    corpus: &Corpus,
    embeddings: &[Embedding],
    task: ProbeTask,
    lexicon_size: usize,
    cfg: &ProbeConfig,
) -> Result<ProbeOutcome> {
    if embeddings.len() != corpus.utterances.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} embeddings for {} utterances",
            embeddings.len(),
            corpus.utterances.len()
        )));
    }
    if task == ProbeTask::WordPresence {
        let data: Vec<(Embedding, WordSet)> = embeddings
            .iter()
            .cloned()
            .zip(corpus.utterances.iter().map(|u| u.words))
            .collect();
        let w = word_presence_probe(&data, lexicon_size, cfg)?;
        return Ok(ProbeOutcome {
            accuracy: w.accuracy,
            chance: w.chance,
            n_train: w.n_train,
            n_test: w.n_test,
        });
    }
    let data: Vec<(Embedding, usize)> = embeddings
        .iter()
        .cloned()
        .zip(corpus.utterances.iter().map(|u| task.label(corpus, u).expect("class task")))
        .collect();
    class_probe(&data, cfg)
}

/// Every (system, task) pair, system-major. `systems` holds a pooling name and
/// embeddings aligned with `corpus.utterances`.
pub fn run_matrix(
    corpus: &Corpus,
    systems: &[(String, Vec<Embedding>)],
    tasks: &[ProbeTask],
    lexicon_size: usize,
    cfg: &ProbeConfig,
) -> Result<Vec<ProbeReport>> {
    let jobs: Vec<(usize, ProbeTask)> = (0..systems.len())
        .flat_map(|s| tasks.iter().map(move |&t| (s, t)))
        .collect();
    jobs.par_iter()
        .map(|&(s, task)| {
            let (name, emb) = &systems[s];
            let o = probe_task(corpus, emb, task, lexicon_size, cfg)?;
            Ok(ProbeReport {
                pooling: name.clone(),
                task,
                accuracy: o.accuracy,
                chance: o.chance,
                n_train: o.n_train,
                n_test: o.n_test,
            })
        })
        .collect()
}

pub fn format_reports(reports: &[ProbeReport]) -> String {
    reports.iter().map(|r| format!("{r}\n")).collect()
}

pub fn parse_reports(text: &str, origin: &str) -> Result<Vec<ProbeReport>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let tok: Vec<&str> = line.split_whitespace().collect();
        let bad = |what: &str| Error::parse(origin, i + 1, format!("bad {what}"));
        if tok.len() != 6 {
            return Err(Error::parse(origin, i + 1, format!("expected 6 fields, found {}", tok.len())));
        }
        out.push(ProbeReport {
            pooling: tok[0].to_string(),
            task: tok[1].parse().map_err(|_| bad("task"))?,
            accuracy: tok[2].parse().map_err(|_| bad("accuracy"))?,
            chance: tok[3].parse().map_err(|_| bad("chance"))?,
            n_train: tok[4].parse().map_err(|_| bad("n_train"))?,
            n_test: tok[5].parse().map_err(|_| bad("n_test"))?,
        });
    }
    Ok(out)
}
