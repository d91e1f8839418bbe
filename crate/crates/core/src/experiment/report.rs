use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{evaluate, ExperimentConfig};
use crate::error::{Error, Result};
use crate::probe::ProbeReport;
use crate::scoring::ScoreSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemResult {
    pub system: String,
    /// Fraction in `[0, 1]`.
    pub eer: f64,
    pub min_dcf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionRow {
    pub recipe: Vec<String>,
    pub result: SystemResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsTable {
    pub systems: Vec<SystemResult>,
    pub fusions: Vec<FusionRow>,
}

impl ResultsTable {
    pub fn build(cfg: &ExperimentConfig, scores: &[ScoreSet], fused: &[ScoreSet]) -> Result<Self> {
        let systems = scores
            .iter()
            .map(|s| evaluate(s, &cfg.dcf))
            .collect::<Result<Vec<_>>>()?;
        let fusions = cfg
            .fusions
            .iter()
            .zip(fused)
            .map(|(recipe, s)| {
                Ok(FusionRow {
                    recipe: recipe.clone(),
                    result: evaluate(s, &cfg.dcf)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ResultsTable { systems, fusions })
    }
}

/// `x` with three significant digits (`1.29`, `12.3`, `123`).
pub(crate) fn three_significant(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x:.2}");
    }
    let mut decimals = (2 - x.abs().log10().floor() as i32).max(0);
    let s = format!("{:.*}", decimals as usize, x);
    // rounding can carry into a new leading digit, e.g. 9.996 -> 10.00
    let digits = s.chars().filter(|c| c.is_ascii_digit()).skip_while(|&c| c == '0').count();
    if digits > 3 && decimals > 0 {
        decimals -= 1;
        return format!("{:.*}", decimals as usize, x);
    }
    s
}

fn table_text(table: &ResultsTable) -> String {
    let rows: Vec<(String, &SystemResult)> = table
        .systems
        .iter()
        .map(|r| (r.system.clone(), r))
        .chain(table.fusions.iter().map(|f| (f.result.system.clone(), &f.result)))
        .collect();
    let width = rows.iter().map(|(n, _)| n.chars().count()).max().unwrap_or(0).max(6);
    let mut out = String::new();
    writeln!(out, "{:<width$}  {:>8}  {:>8}", "system", "EER(%)", "minDCF").unwrap();
    for (i, (name, r)) in rows.iter().enumerate() {
        if i == table.systems.len() && !table.fusions.is_empty() {
            writeln!(out, "{}", "-".repeat(width + 20)).unwrap();
        }
        let pad = width - name.chars().count() + name.len();
        writeln!(
            out,
            "{:<pad$}  {:>8}  {:>8.4}",
            name,
            three_significant(100.0 * r.eer),
            r.min_dcf
        )
        .unwrap();
    }
    out
}

/// Task x pooling accuracy grid (percent).
fn probe_grid(probes: &[ProbeReport]) -> String {
    let mut tasks = Vec::new();
    let mut poolings: Vec<&str> = Vec::new();
    for p in probes {
        if !tasks.contains(&p.task) {
            tasks.push(p.task);
        }
        if !poolings.contains(&p.pooling.as_str()) {
            poolings.push(&p.pooling);
        }
    }
    let col = poolings.iter().map(|p| p.len()).max().unwrap_or(0).max(6);
    let mut out = String::new();
    write!(out, "{:<14}", "task").unwrap();
    for p in &poolings {
        write!(out, "  {p:>col$}").unwrap();
    }
    out.push('\n');
    for t in &tasks {
        write!(out, "{:<14}", t.name()).unwrap();
        for p in &poolings {
            match probes.iter().find(|r| r.task == *t && r.pooling == *p) {
                Some(r) => write!(out, "  {:>col$.1}", 100.0 * r.accuracy).unwrap(),
                None => write!(out, "  {:>col$}", "-").unwrap(),
            }
        }
        out.push('\n');
    }
    out
}

pub fn render_report(table: &ResultsTable, probes: &[ProbeReport]) -> String {
    let mut out = table_text(table);
    if !probes.is_empty() {
        out.push('\n');
        out.push_str("probe accuracy (%)\n");
        out.push_str(&probe_grid(probes));
    }
    out
}

pub(crate) const SYSTEM_RESULTS: &str = "system_results.json";
pub(crate) const FUSION_RESULTS: &str = "fusion_results.json";
pub(crate) const PROBES_JSON: &str = "probes.json";

/// Render the tables stored in a results directory. Read-only.
pub fn report(dir: &Path) -> Result<String> {
    let needed = [SYSTEM_RESULTS, FUSION_RESULTS, PROBES_JSON];
    let missing: Vec<PathBuf> = needed
        .iter()
        .map(|f| dir.join(f))
        .filter(|p| !p.is_file())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingArtifacts(missing));
    }
    let read = |f: &str| fs::read_to_string(dir.join(f));
    let table = ResultsTable {
        systems: serde_json::from_str(&read(SYSTEM_RESULTS)?)?,
        fusions: serde_json::from_str(&read(FUSION_RESULTS)?)?,
    };
    let probes: Vec<ProbeReport> = serde_json::from_str(&read(PROBES_JSON)?)?;
    Ok(render_report(&table, &probes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probe::ProbeTask;

    #[test]
    fn significant_digits() {
        assert_eq!(three_significant(1.2901), "1.29");
        assert_eq!(three_significant(12.34), "12.3");
        assert_eq!(three_significant(123.4), "123");
        assert_eq!(three_significant(0.04567), "0.0457");
        assert_eq!(three_significant(9.996), "10.0");
        assert_eq!(three_significant(0.0), "0.00");
    }

    #[test]
    fn one_system_one_row() {
        let table = ResultsTable {
            systems: vec![SystemResult {
                system: "std".into(),
                eer: 0.0129,
                min_dcf: 0.123456,
            }],
            fusions: vec![],
        };
        let text = render_report(&table, &[]);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[1].starts_with("std"));
        assert!(lines[1].contains("1.29"));
        assert!(lines[1].ends_with("0.1235"));
    }

    #[test]
    fn grid_shape() {
        let mut probes = Vec::new();
        for p in ["max", "mean", "std"] {
            for t in [ProbeTask::Gender, ProbeTask::Rate] {
                probes.push(ProbeReport {
                    pooling: p.into(),
                    task: t,
                    accuracy: 0.5,
                    chance: 0.5,
                    n_train: 8,
                    n_test: 2,
                });
            }
        }
        let grid = probe_grid(&probes);
        let lines: Vec<&str> = grid.lines().collect();
        assert_eq!(lines.len(), 1 + 2);
        assert!(lines.iter().skip(1).all(|l| l.split_whitespace().count() == 1 + 3));
    }

    #[test]
    fn empty_dir_lists_missing_files() {
        let dir = tempfile::tempdir().unwrap();
        match report(dir.path()) {
            Err(Error::MissingArtifacts(files)) => {
                assert_eq!(files.len(), 3);
                assert!(files[0].ends_with(SYSTEM_RESULTS));
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
