//! Verification back-end: cosine scoring, EER and minDCF by exhaustive
//! threshold sweep, and equal-weight score fusion.
//!
//! Sweep convention: a trial is accepted iff `score >= t`. Candidate
//! thresholds are every distinct score plus `+inf`, so the sweep runs from
//! "accept everything" (FAR = 1, FRR = 0) to "reject everything"
//! (FAR = 0, FRR = 1).

mod io;

pub use io::{
    format_embeddings, format_scores, format_trials, parse_embeddings, parse_scores, parse_trials,
    read_embeddings, read_scores, read_trials, write_embeddings, write_scores, write_trials,
};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrialLabel {
    Target,
    Nontarget,
}

impl fmt::Display for TrialLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrialLabel::Target => "target",
            TrialLabel::Nontarget => "nontarget",
        })
    }
}

impl FromStr for TrialLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "target" => Ok(TrialLabel::Target),
            "nontarget" => Ok(TrialLabel::Nontarget),
            other => Err(Error::InvalidConfig(format!("unknown trial label `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Trial {
    pub enroll_id: String,
    pub test_id: String,
    pub label: TrialLabel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet {
    pub name: String,
    pub trials: Vec<Trial>,
    pub scores: Vec<f64>,
}

impl ScoreSet {
    pub fn new(name: impl Into<String>, trials: Vec<Trial>, scores: Vec<f64>) -> Result<Self> {
        if trials.len() != scores.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} trials but {} scores",
                trials.len(),
                scores.len()
            )));
        }
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidConfig(format!("score of trial {i} is not finite")));
        }
        Ok(ScoreSet {
            name: name.into(),
            trials,
            scores,
        })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Target and nontarget scores, in trial order.
    pub fn by_label(&self) -> (Vec<f64>, Vec<f64>) {
        let mut tar = Vec::new();
        let mut non = Vec::new();
        for (t, &s) in self.trials.iter().zip(&self.scores) {
            match t.label {
                TrialLabel::Target => tar.push(s),
                TrialLabel::Nontarget => non.push(s),
            }
        }
        (tar, non)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DcfParams {
    pub c_miss: f64,
    pub c_fa: f64,
    pub p_target: f64,
}

impl Default for DcfParams {
    fn default() -> Self {
        DcfParams {
            c_miss: 1.0,
            c_fa: 1.0,
            p_target: 0.01,
        }
    }
}

impl DcfParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c_miss > 0.0 && self.c_fa > 0.0 && self.p_target > 0.0 && self.p_target < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "DCF needs c_miss > 0, c_fa > 0 and 0 < p_target < 1, got {self:?}"
            )));
        }
        Ok(())
    }

    /// Cost of the best trivial system (accept all or reject all).
    pub fn normalizer(&self) -> f64 {
        (self.c_miss * self.p_target).min(self.c_fa * (1.0 - self.p_target))
    }
}

pub fn cosine_score(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// One operating point of the sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub threshold: f64,
    pub far: f64,
    pub frr: f64,
}

/// FAR/FRR at every distinct score (ascending) followed by `+inf`.
pub fn sweep(scores: &ScoreSet) -> Result<Vec<OperatingPoint>> {
    let mut items: Vec<(f64, bool)> = scores
        .trials
        .iter()
        .zip(&scores.scores)
        .map(|(t, &s)| (s, t.label == TrialLabel::Target))
        .collect();
    let n_tar = items.iter().filter(|(_, t)| *t).count();
    let n_non = items.len() - n_tar;
    if n_tar == 0 || n_non == 0 {
        return Err(Error::MissingClass);
    }
    items.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (nt, nn) = (n_tar as f64, n_non as f64);

    let mut points = Vec::with_capacity(items.len() + 1);
    // counts of trials strictly below the current threshold
    let (mut tar_below, mut non_below) = (0usize, 0usize);
    let mut i = 0;
    while i < items.len() {
        let t = items[i].0;
        points.push(OperatingPoint {
            threshold: t,
            far: (n_non - non_below) as f64 / nn,
            frr: tar_below as f64 / nt,
        });
        while i < items.len() && items[i].0 == t {
            if items[i].1 {
                tar_below += 1;
            } else {
                non_below += 1;
            }
            i += 1;
        }
    }
    points.push(OperatingPoint {
        threshold: f64::INFINITY,
        far: 0.0,
        frr: 1.0,
    });
    Ok(points)
}

/// Crossing of FAR and FRR along a sweep ordered by increasing threshold,
/// linearly interpolated between the two points where `FAR − FRR` changes sign.
pub fn eer_from_sweep(points: &[OperatingPoint]) -> f64 {
    for w in points.windows(2) {
        let d0 = w[0].far - w[0].frr;
        let d1 = w[1].far - w[1].frr;
        if d0 == 0.0 {
            return w[0].far;
        }
        if d0 > 0.0 && d1 <= 0.0 {
            if d1 == 0.0 {
                return w[1].far;
            }
            let alpha = d0 / (d0 - d1);
            return w[0].far + alpha * (w[1].far - w[0].far);
        }
    }
    // the +inf endpoint always has FAR − FRR = −1, so a crossing exists
    points.last().map_or(0.5, |p| p.far)
}

/// Equal error rate in `[0, 1]`.
pub fn eer(scores: &ScoreSet) -> Result<f64> {
    Ok(eer_from_sweep(&sweep(scores)?))
}

/// Minimum normalized detection cost over all sweep thresholds and `±inf`.
pub fn min_dcf(scores: &ScoreSet, params: &DcfParams) -> Result<f64> {
    params.validate()?;
    let points = sweep(scores)?;
    let cost = |far: f64, frr: f64| {
        params.c_miss * params.p_target * frr + params.c_fa * (1.0 - params.p_target) * far
    };
    // -inf: accept everything
    let mut best = cost(1.0, 0.0);
    for p in &points {
        best = best.min(cost(p.far, p.frr));
    }
    Ok(best / params.normalizer())
}

/// Name of an equal-weight fusion, e.g. `(mean-std)⊕(mean-std-skew)`.
pub fn fusion_name<S: AsRef<str>>(names: &[S]) -> String {
    names
        .iter()
        .map(|n| format!("({})", n.as_ref()))
        .collect::<Vec<_>>()
        .join("⊕")
}

/// Per-trial arithmetic mean of the systems' scores. All systems must cover
/// the same trials in the same order.
pub fn fuse(systems: &[ScoreSet]) -> Result<ScoreSet> {
    let first = systems
        .first()
        .ok_or_else(|| Error::InvalidConfig("nothing to fuse".into()))?;
    if systems.len() == 1 {
        return Ok(first.clone());
    }
    for s in &systems[1..] {
        if s.trials.len() != first.trials.len() {
            return Err(Error::TrialMismatch(format!(
                "`{}` has {} trials, `{}` has {}",
                first.name,
                first.len(),
                s.name,
                s.len()
            )));
        }
        if let Some(i) = (0..first.len()).find(|&i| s.trials[i] != first.trials[i]) {
            return Err(Error::TrialMismatch(format!(
                "`{}` and `{}` differ at trial {i}",
                first.name, s.name
            )));
        }
    }
    let k = systems.len() as f64;
    let scores = (0..first.len())
        .map(|i| systems.iter().map(|s| s.scores[i]).sum::<f64>() / k)
        .collect();
    let names: Vec<&str> = systems.iter().map(|s| s.name.as_str()).collect();
    ScoreSet::new(fusion_name(&names), first.trials.clone(), scores)
}
