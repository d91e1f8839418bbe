//! Score files (`enroll_id test_id score label`) and embedding files
//! (`id dim v1 … vD`), one record per line. Numbers use the shortest
//! representation that parses back to the same `f64` (at most 17 significant
//! digits), so both formats round-trip exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{ScoreSet, Trial};
use crate::encoder::Embedding;
use crate::error::{Error, Result};
use crate::io_util::write_atomic;

pub fn format_scores(scores: &ScoreSet) -> String {
    let mut out = String::new();
    for (t, s) in scores.trials.iter().zip(&scores.scores) {
        writeln!(out, "{} {} {} {}", t.enroll_id, t.test_id, s, t.label).unwrap();
    }
    out
}

pub fn parse_scores(text: &str, name: &str, origin: &str) -> Result<ScoreSet> {
    let mut trials = Vec::new();
    let mut scores = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let tok: Vec<&str> = line.split_whitespace().collect();
        if tok.len() != 4 {
            return Err(Error::parse(origin, i + 1, format!("expected 4 fields, found {}", tok.len())));
        }
        let score: f64 = tok[2]
            .parse()
            .map_err(|_| Error::parse(origin, i + 1, format!("bad score `{}`", tok[2])))?;
        let label = tok[3]
            .parse()
            .map_err(|e: Error| Error::parse(origin, i + 1, e.to_string()))?;
        trials.push(Trial {
            enroll_id: tok[0].to_string(),
            test_id: tok[1].to_string(),
            label,
        });
        scores.push(score);
    }
    ScoreSet::new(name, trials, scores)
}

pub fn write_scores(path: &Path, scores: &ScoreSet) -> Result<()> {
    write_atomic(path, format_scores(scores).as_bytes())
}

pub fn read_scores(path: &Path, name: &str) -> Result<ScoreSet> {
    parse_scores(&fs::read_to_string(path)?, name, &path.display().to_string())
}

/// Trial list lines: `enroll_id test_id label`.
pub fn format_trials(trials: &[Trial]) -> String {
    let mut out = String::new();
    for t in trials {
        writeln!(out, "{} {} {}", t.enroll_id, t.test_id, t.label).unwrap();
    }
    out
}

pub fn parse_trials(text: &str, origin: &str) -> Result<Vec<Trial>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let tok: Vec<&str> = line.split_whitespace().collect();
        if tok.len() != 3 {
            return Err(Error::parse(origin, i + 1, format!("expected 3 fields, found {}", tok.len())));
        }
        out.push(Trial {
            enroll_id: tok[0].to_string(),
            test_id: tok[1].to_string(),
            label: tok[2]
                .parse()
                .map_err(|e: Error| Error::parse(origin, i + 1, e.to_string()))?,
        });
    }
    Ok(out)
}

pub fn write_trials(path: &Path, trials: &[Trial]) -> Result<()> {
    write_atomic(path, format_trials(trials).as_bytes())
}

pub fn read_trials(path: &Path) -> Result<Vec<Trial>> {
    parse_trials(&fs::read_to_string(path)?, &path.display().to_string())
}

pub fn format_embeddings(items: &[(String, Embedding)]) -> String {
    let mut out = String::new();
    for (id, e) in items {
        write!(out, "{id} {}", e.len()).unwrap();
        for v in e {
            write!(out, " {v}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn parse_embeddings(text: &str, origin: &str) -> Result<Vec<(String, Embedding)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut tok = line.split_whitespace();
        let id = tok.next().unwrap().to_string();
        let dim: usize = tok
            .next()
            .and_then(|d| d.parse().ok())
            .ok_or_else(|| Error::parse(origin, i + 1, "missing or bad dimension"))?;
        let values = tok
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| Error::parse(origin, i + 1, format!("bad value `{v}`")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.len() != dim {
            return Err(Error::parse(
                origin,
                i + 1,
                format!("declared dimension {dim} but found {} values", values.len()),
            ));
        }
        out.push((id, values));
    }
    Ok(out)
}

pub fn write_embeddings(path: &Path, items: &[(String, Embedding)]) -> Result<()> {
    write_atomic(path, format_embeddings(items).as_bytes())
}

pub fn read_embeddings(path: &Path) -> Result<Vec<(String, Embedding)>> {
    parse_embeddings(&fs::read_to_string(path)?, &path.display().to_string())
}
