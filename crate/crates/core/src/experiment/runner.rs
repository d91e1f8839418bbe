use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::report::{FUSION_RESULTS, PROBES_JSON, SYSTEM_RESULTS};
use super::{
    embed_eval, evaluate, fuse_recipes, prepare_from, report, score_trials,
    train_system, ExperimentConfig, FusionRow, ResultsTable,
};
use crate::encoder::{checkpoint, Embedding};
use crate::error::{Error, Result};
use crate::io_util::write_atomic;
use crate::probe::{self, format_reports};
use crate::scoring::{self, ScoreSet};
use crate::synthdata::{self, Corpus};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Synth,
    Train,
    Extract,
    Score,
    Eval,
    Fuse,
    Probe,
    Report,
    Run,
}

impl Stage {
    pub const PIPELINE: [Stage; 7] = [
        Stage::Synth,
        Stage::Train,
        Stage::Extract,
        Stage::Score,
        Stage::Eval,
        Stage::Fuse,
        Stage::Probe,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Train => "train",
            Stage::Extract => "extract",
            Stage::Score => "score",
            Stage::Eval => "eval",
            Stage::Fuse => "fuse",
            Stage::Probe => "probe",
            Stage::Report => "report",
            Stage::Run => "run",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::PIPELINE
            .into_iter()
            .chain([Stage::Report, Stage::Run])
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown stage `{s}`")))
    }
}

struct Layout<'a>(&'a Path);

impl Layout<'_> {
    fn corpus(&self) -> PathBuf {
        self.0.join("corpus.txt")
    }
    fn speakers(&self) -> PathBuf {
        self.0.join("speakers.txt")
    }
    fn trials(&self) -> PathBuf {
        self.0.join("trials.txt")
    }
    fn model(&self, system: &str) -> PathBuf {
        self.0.join("models").join(format!("{system}.ckpt"))
    }
    fn embeddings(&self, system: &str) -> PathBuf {
        self.0.join("embeddings").join(format!("{system}.txt"))
    }
    fn scores(&self, system: &str) -> PathBuf {
        self.0.join("scores").join(format!("{system}.txt"))
    }
    fn fused(&self, recipe: &[String]) -> PathBuf {
        self.0.join("scores").join("fused").join(format!("{}.txt", recipe.join("+")))
    }
}

fn require(paths: &[PathBuf]) -> Result<()> {
    let missing: Vec<PathBuf> = paths.iter().filter(|p| !p.is_file()).cloned().collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Error::MissingArtifacts(missing))
    }
}

fn load_corpus(l: &Layout) -> Result<Corpus> {
    require(&[l.corpus(), l.speakers()])?;
    Ok(Corpus {
        speakers: synthdata::read_speakers(&l.speakers())?,
        utterances: synthdata::read_corpus(&l.corpus())?,
    })
}

fn load_scores(l: &Layout, systems: &[String]) -> Result<Vec<ScoreSet>> {
    let paths: Vec<PathBuf> = systems.iter().map(|s| l.scores(s)).collect();
    require(&paths)?;
    systems
        .iter()
        .zip(&paths)
        .map(|(s, p)| scoring::read_scores(p, s))
        .collect()
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn synth(cfg: &ExperimentConfig, l: &Layout) -> Result<()> {
    let corpus = synthdata::generate(&cfg.synth_spec())?;
    synthdata::write_corpus(&l.corpus(), &corpus.utterances)?;
    synthdata::write_speakers(&l.speakers(), &corpus.speakers)?;
    let prep = prepare_from(cfg, corpus)?;
    scoring::write_trials(&l.trials(), &prep.trials)
}

fn train(cfg: &ExperimentConfig, l: &Layout) -> Result<()> {
    let prep = prepare_from(cfg, load_corpus(l)?)?;
    for system in &cfg.systems {
        let model = train_system(cfg, &prep, system)?;
        checkpoint::save(&model, &l.model(system))?;
    }
    Ok(())
}

fn extract(cfg: &ExperimentConfig, l: &Layout) -> Result<()> {
    let prep = prepare_from(cfg, load_corpus(l)?)?;
    require(&cfg.systems.iter().map(|s| l.model(s)).collect::<Vec<_>>())?;
    for system in &cfg.systems {
        let model = checkpoint::load(&l.model(system))?;
        let emb = embed_eval(&model, &prep.eval)?;
        let items: Vec<(String, Embedding)> = prep
            .eval
            .utterances
            .iter()
            .map(|u| u.id.clone())
            .zip(emb)
            .collect();
        scoring::write_embeddings(&l.embeddings(system), &items)?;
    }
    Ok(())
}

fn score(cfg: &ExperimentConfig, l: &Layout) -> Result<()> {
    require(&[l.trials()])?;
    require(&cfg.systems.iter().map(|s| l.embeddings(s)).collect::<Vec<_>>())?;
    let trials = scoring::read_trials(&l.trials())?;
    for system in &cfg.systems {
        let emb: HashMap<String, Embedding> =
            scoring::read_embeddings(&l.embeddings(system))?.into_iter().collect();
        let scores = score_trials(system, &trials, &emb)?;
        scoring::write_scores(&l.scores(system), &scores)?;
    }
    Ok(())
}

fn eval(cfg: &ExperimentConfig, l: &Layout) -> Result<()> {
    let rows = load_scores(l, &cfg.systems)?
        .iter()
        .map(|s| evaluate(s, &cfg.dcf))
        .collect::<Result<Vec<_>>>()?;
    write_json(&l.0.join(SYSTEM_RESULTS), &rows)
}

fn fuse(cfg: &ExperimentConfig, l: &Layout) -> Result<()> {
    let mut needed: Vec<String> = cfg.fusions.iter().flatten().cloned().collect();
    needed.sort();
    needed.dedup();
    let scores = load_scores(l, &needed)?;
    let fused = fuse_recipes(cfg, &scores)?;
    let mut rows = Vec::new();
    for (recipe, s) in cfg.fusions.iter().zip(&fused) {
        scoring::write_scores(&l.fused(recipe), s)?;
        rows.push(FusionRow {
            recipe: recipe.clone(),
            result: evaluate(s, &cfg.dcf)?,
        });
    }
    write_json(&l.0.join(FUSION_RESULTS), &rows)
}

fn probe_stage(cfg: &ExperimentConfig, l: &Layout) -> Result<()> {
    let prep = prepare_from(cfg, load_corpus(l)?)?;
    let names = cfg.probe_system_names();
    require(&names.iter().map(|s| l.embeddings(s)).collect::<Vec<_>>())?;
    let mut systems = Vec::new();
    for name in names {
        let by_id: HashMap<String, Embedding> =
            scoring::read_embeddings(&l.embeddings(&name))?.into_iter().collect();
        let emb = prep
            .eval
            .utterances
            .iter()
            .map(|u| {
                by_id.get(&u.id).cloned().ok_or_else(|| {
                    Error::InvalidConfig(format!("`{name}` embeddings lack utterance `{}`", u.id))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        systems.push((name, emb));
    }
    let reports = if cfg.probe_tasks.is_empty() {
        Vec::new()
    } else {
        probe::run_matrix(
            &prep.eval,
            &systems,
            &cfg.probe_tasks,
            cfg.synth.lexicon_size,
            &cfg.probe_config(),
        )?
    };
    write_atomic(&l.0.join("probes.txt"), format_reports(&reports).as_bytes())?;
    write_json(&l.0.join(PROBES_JSON), &reports)
}

fn run_one(stage: Stage, cfg: &ExperimentConfig, l: &Layout) -> Result<()> {
    match stage {
        Stage::Synth => synth(cfg, l),
        Stage::Train => train(cfg, l),
        Stage::Extract => extract(cfg, l),
        Stage::Score => score(cfg, l),
        Stage::Eval => eval(cfg, l),
        Stage::Fuse => fuse(cfg, l),
        Stage::Probe => probe_stage(cfg, l),
        Stage::Report | Stage::Run => unreachable!("composite stage"),
    }
    .map_err(|e| e.in_stage(stage.name()))
}

/// Execute one stage against `out_dir`. `report` and `run` return the rendered tables.
pub fn run_stage(stage: Stage, cfg: &ExperimentConfig, out_dir: &Path) -> Result<Option<String>> {
    cfg.validate()?;
    let l = Layout(out_dir);
    match stage {
        Stage::Report => report(out_dir).map(Some).map_err(|e| e.in_stage("report")),
        Stage::Run => {
            write_atomic(&out_dir.join("config.json"), (cfg.to_json() + "\n").as_bytes())?;
            for st in Stage::PIPELINE {
                run_one(st, cfg, &l)?;
            }
            let text = report(out_dir).map_err(|e| e.in_stage("report"))?;
            write_atomic(&out_dir.join("results.txt"), text.as_bytes())?;
            Ok(Some(text))
        }
        st => run_one(st, cfg, &l).map(|()| None),
    }
}

/// Results of a finished run directory, for callers that want the numbers.
pub fn load_table(dir: &Path) -> Result<ResultsTable> {
    let read = |f: &str| std::fs::read_to_string(dir.join(f));
    Ok(ResultsTable {
        systems: serde_json::from_str(&read(SYSTEM_RESULTS)?)?,
        fusions: serde_json::from_str(&read(FUSION_RESULTS)?)?,
    })
}
