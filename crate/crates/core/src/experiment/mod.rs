//! Seeded end-to-end experiment: synthesize a corpus, train one encoder per
//! pooling system, score verification trials, fuse systems and probe the
//! embeddings.
//!
//! Every random stream is derived from the master seed through a named
//! sub-seed, so a run is a pure function of its [`ExperimentConfig`].

mod report;
mod runner;

pub use report::{render_report, report, FusionRow, ResultsTable, SystemResult};
pub use runner::{load_table, run_stage, Stage};

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoder::{self, EncoderConfig, Embedding, ModelState, TrainOptions};
use crate::error::{Error, Result};
use crate::moments::FrameSequence;
use crate::pooling::PoolingConfig;
use crate::probe::{self, ProbeConfig, ProbeReport, ProbeTask};
use crate::scoring::{self, cosine_score, DcfParams, ScoreSet, Trial};
use crate::synthdata::{self, Corpus, SynthSpec};

/// Encoder hyper-parameters shared by all systems; pooling, input width,
/// class count and seed are filled in per run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderTemplate {
    pub frame_hidden: Vec<usize>,
    pub embed_dim: usize,
    pub arcface_scale: f64,
    pub arcface_margin: f64,
    pub pooling_eps: f64,
}

impl Default for EncoderTemplate {
    fn default() -> Self {
        EncoderTemplate {
            frame_hidden: vec![64],
            embed_dim: 128,
            arcface_scale: 30.0,
            arcface_margin: 0.2,
            pooling_eps: crate::moments::DEFAULT_EPS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrialCounts {
    pub target: usize,
    pub nontarget: usize,
}

impl Default for TrialCounts {
    fn default() -> Self {
        TrialCounts {
            target: 2000,
            nontarget: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Nested seeds (`synth.seed`, `probe.seed`) are replaced by sub-seeds of this one.
    pub seed: u64,
    pub synth: SynthSpec,
    /// Fraction of speakers used to train the encoders; the rest are held
    /// out for verification trials and probes.
    pub encoder_speaker_frac: f64,
    pub encoder: EncoderTemplate,
    pub training: TrainOptions,
    /// System names, e.g. `mean-std-skew`.
    pub systems: Vec<String>,
    pub trials: TrialCounts,
    pub dcf: DcfParams,
    pub probe: ProbeConfig,
    pub probe_tasks: Vec<ProbeTask>,
    pub probe_systems: Option<Vec<String>>,
    /// Each recipe lists the systems to average, e.g. `["mean-std", "mean-std-skew"]`.
    pub fusions: Vec<Vec<String>>,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            synth: SynthSpec::default(),
            encoder_speaker_frac: 0.6,
            encoder: EncoderTemplate::default(),
            training: TrainOptions::default(),
            systems: ["max", "mean", "std", "skew", "kurto", "mean-std", "mean-std-skew"]
                .map(String::from)
                .to_vec(),
            trials: TrialCounts::default(),
            dcf: DcfParams::default(),
            probe: ProbeConfig::default(),
            probe_tasks: ProbeTask::ALL.to_vec(),
            probe_systems: None,
            fusions: vec![vec!["mean-std".into(), "mean-std-skew".into()]],
            out_dir: PathBuf::from("results"),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(&fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.dcf.validate()?;
        self.probe.validate()?;
        if !(self.encoder_speaker_frac > 0.0 && self.encoder_speaker_frac < 1.0) {
            return Err(Error::InvalidConfig("encoder_speaker_frac must lie in (0, 1)".into()));
        }
        if self.systems.is_empty() {
            return Err(Error::InvalidConfig("no systems configured".into()));
        }
        let mut seen = HashSet::new();
        for name in &self.systems {
            let canonical = PoolingConfig::parse(name)?.name();
            if &canonical != name {
                return Err(Error::InvalidConfig(format!(
                    "system `{name}` should be written `{canonical}`"
                )));
            }
            if !seen.insert(name) {
                return Err(Error::InvalidConfig(format!("duplicate system `{name}`")));
            }
        }
        let known = |n: &String| self.systems.contains(n);
        for recipe in &self.fusions {
            if recipe.len() < 2 {
                return Err(Error::InvalidConfig("a fusion needs at least two systems".into()));
            }
            if let Some(n) = recipe.iter().find(|n| !known(n)) {
                return Err(Error::InvalidConfig(format!("fusion references unknown system `{n}`")));
            }
        }
        if let Some(n) = self.probe_systems.iter().flatten().find(|n| !known(n)) {
            return Err(Error::InvalidConfig(format!("probe references unknown system `{n}`")));
        }
        let held_out = self.synth.num_speakers - self.encoder_speakers();
        if self.encoder_speakers() < 2 || held_out < 2 {
            return Err(Error::InvalidConfig(
                "need at least two encoder and two held-out speakers".into(),
            ));
        }
        self.encoder_config(&self.systems[0], 2)?;
        Ok(())
    }

    pub fn encoder_speakers(&self) -> usize {
        ((self.encoder_speaker_frac * self.synth.num_speakers as f64).round() as usize)
            .clamp(1, self.synth.num_speakers.saturating_sub(1).max(1))
    }

    pub fn synth_spec(&self) -> SynthSpec {
        SynthSpec {
            seed: subseed(self.seed, "synth"),
            ..self.synth.clone()
        }
    }

    pub fn probe_config(&self) -> ProbeConfig {
        ProbeConfig {
            seed: subseed(self.seed, "probe"),
            ..self.probe.clone()
        }
    }

    /// Every system shares the training sub-seed, so initial draws and minibatch
    /// order match across systems.
    pub fn encoder_config(&self, system: &str, num_classes: usize) -> Result<EncoderConfig> {
        let pooling = PoolingConfig::parse(system)?.with_eps(self.encoder.pooling_eps)?;
        let cfg = EncoderConfig {
            frame_hidden: self.encoder.frame_hidden.clone(),
            embed_dim: self.encoder.embed_dim,
            arcface_scale: self.encoder.arcface_scale,
            arcface_margin: self.encoder.arcface_margin,
            seed: subseed(self.seed, "train"),
            ..EncoderConfig::new(self.synth.input_dim, pooling, num_classes)
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn probe_system_names(&self) -> Vec<String> {
        self.probe_systems.clone().unwrap_or_else(|| self.systems.clone())
    }

    /// Keep only the named systems (and the fusions and probes they fully cover).
    pub fn restrict(&mut self, names: &[String]) -> Result<()> {
        if let Some(n) = names.iter().find(|n| !self.systems.contains(n)) {
            return Err(Error::InvalidConfig(format!("unknown system `{n}`")));
        }
        self.systems.retain(|s| names.contains(s));
        self.fusions.retain(|r| r.iter().all(|s| names.contains(s)));
        if let Some(p) = &mut self.probe_systems {
            p.retain(|s| names.contains(s));
        }
        Ok(())
    }
}

/// Named sub-seed: FNV-1a of the name mixed into the master seed with splitmix64.
pub fn subseed(master: u64, name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut z = master ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Speakers used for encoder training and the held-out speakers, both ascending.
pub fn partition_speakers(cfg: &ExperimentConfig) -> (Vec<usize>, Vec<usize>) {
    let mut ids: Vec<usize> = (0..cfg.synth.num_speakers).collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(subseed(cfg.seed, "partition")));
    let (a, b) = ids.split_at(cfg.encoder_speakers());
    let (mut a, mut b) = (a.to_vec(), b.to_vec());
    a.sort_unstable();
    b.sort_unstable();
    (a, b)
}

/// Corpus split into encoder-training data and the held-out evaluation corpus.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub corpus: Corpus,
    pub encoder_speakers: Vec<usize>,
    /// Frames with speaker labels renumbered to `0..encoder_speakers.len()`.
    pub train_data: Vec<(FrameSequence, usize)>,
    pub eval: Corpus,
    pub trials: Vec<Trial>,
}

pub fn prepare_from(cfg: &ExperimentConfig, corpus: Corpus) -> Result<Prepared> {
    let (enc, held) = partition_speakers(cfg);
    let relabel: HashMap<usize, usize> = enc.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    let train_data = corpus
        .utterances
        .iter()
        .filter_map(|u| relabel.get(&u.speaker).map(|&y| (u.frames.clone(), y)))
        .collect();
    let eval = corpus.subset_by_speakers(&held);
    let trials = synthdata::build_trials(
        &eval.utterances,
        cfg.trials.target,
        cfg.trials.nontarget,
        subseed(cfg.seed, "trials"),
    )?;
    Ok(Prepared {
        corpus,
        encoder_speakers: enc,
        train_data,
        eval,
        trials,
    })
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    cfg.validate()?;
    prepare_from(cfg, synthdata::generate(&cfg.synth_spec())?)
}

pub fn train_system(cfg: &ExperimentConfig, prep: &Prepared, system: &str) -> Result<ModelState> {
    let ecfg = cfg.encoder_config(system, prep.encoder_speakers.len())?;
    Ok(encoder::train(&ecfg, &prep.train_data, &cfg.training)?.model)
}

/// Embeddings of the held-out corpus, aligned with `prep.eval.utterances`.
pub fn embed_eval(model: &ModelState, eval: &Corpus) -> Result<Vec<Embedding>> {
    let frames: Vec<FrameSequence> = eval.utterances.iter().map(|u| u.frames.clone()).collect();
    encoder::extract_all(model, &frames)
}

/// Cosine score of every trial; ids are looked up in `embeddings`.
pub fn score_trials(
    name: &str,
    trials: &[Trial],
    embeddings: &HashMap<String, Embedding>,
) -> Result<ScoreSet> {
    let lookup = |id: &str| {
        embeddings
            .get(id)
            .ok_or_else(|| Error::InvalidConfig(format!("no embedding for utterance `{id}`")))
    };
    let scores = trials
        .par_iter()
        .map(|t| cosine_score(lookup(&t.enroll_id)?, lookup(&t.test_id)?))
        .collect::<Result<Vec<f64>>>()?;
    ScoreSet::new(name, trials.to_vec(), scores)
}

pub fn evaluate(scores: &ScoreSet, dcf: &DcfParams) -> Result<SystemResult> {
    Ok(SystemResult {
        system: scores.name.clone(),
        eer: scoring::eer(scores)?,
        min_dcf: scoring::min_dcf(scores, dcf)?,
    })
}

/// Everything a full run produces, kept in memory.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub table: ResultsTable,
    pub scores: Vec<ScoreSet>,
    pub fused: Vec<ScoreSet>,
    pub probes: Vec<ProbeReport>,
}

impl Outcome {
    pub fn eer(&self, system: &str) -> Option<f64> {
        self.table
            .systems
            .iter()
            .chain(self.table.fusions.iter().map(|f| &f.result))
            .find(|r| r.system == system)
            .map(|r| r.eer)
    }

    pub fn probe_accuracy(&self, system: &str, task: ProbeTask) -> Option<f64> {
        self.probes
            .iter()
            .find(|r| r.pooling == system && r.task == task)
            .map(|r| r.accuracy)
    }
}

/// Full pipeline without touching the disk.
pub fn run_in_memory(cfg: &ExperimentConfig) -> Result<Outcome> {
    let prep = prepare(cfg)?;
    let mut scores = Vec::new();
    let mut embeddings = Vec::new();
    for system in &cfg.systems {
        let model = train_system(cfg, &prep, system)?;
        let emb = embed_eval(&model, &prep.eval)?;
        let by_id = prep
            .eval
            .utterances
            .iter()
            .map(|u| u.id.clone())
            .zip(emb.iter().cloned())
            .collect();
        scores.push(score_trials(system, &prep.trials, &by_id)?);
        embeddings.push((system.clone(), emb));
    }
    let fused = fuse_recipes(cfg, &scores)?;
    let probe_inputs: Vec<(String, Vec<Embedding>)> = cfg
        .probe_system_names()
        .into_iter()
        .map(|n| embeddings.iter().find(|(s, _)| *s == n).cloned().expect("validated"))
        .collect();
    let probes = if cfg.probe_tasks.is_empty() {
        Vec::new()
    } else {
        probe::run_matrix(
            &prep.eval,
            &probe_inputs,
            &cfg.probe_tasks,
            cfg.synth.lexicon_size,
            &cfg.probe_config(),
        )?
    };
    let table = ResultsTable::build(cfg, &scores, &fused)?;
    Ok(Outcome {
        table,
        scores,
        fused,
        probes,
    })
}

pub fn fuse_recipes(cfg: &ExperimentConfig, scores: &[ScoreSet]) -> Result<Vec<ScoreSet>> {
    cfg.fusions
        .iter()
        .map(|recipe| {
            let parts: Vec<ScoreSet> = recipe
                .iter()
                .map(|n| {
                    scores
                        .iter()
                        .find(|s| &s.name == n)
                        .cloned()
                        .ok_or_else(|| Error::InvalidConfig(format!("no scores for system `{n}`")))
                })
                .collect::<Result<_>>()?;
            scoring::fuse(&parts)
        })
        .collect()
}
