//! Differentiable statistics pooling layer.
//!
//! A [`PoolingConfig`] is an ordered list of statistics; [`forward`] maps a
//! `T x D` frame matrix to the concatenation of the chosen statistics (width
//! `k * D`) and [`backward`] returns the vector-Jacobian product with respect
//! to every input frame.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moments::{central_moments, FrameSequence, PooledStats, DEFAULT_EPS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Statistic {
    Max,
    Mean,
    Std,
    Skew,
    Kurt,
}

impl Statistic {
    pub const ALL: [Statistic; 5] = [
        Statistic::Max,
        Statistic::Mean,
        Statistic::Std,
        Statistic::Skew,
        Statistic::Kurt,
    ];

    /// Short system-name token (`kurto` for kurtosis, as in result tables).
    pub fn token(self) -> &'static str {
        match self {
            Statistic::Max => "max",
            Statistic::Mean => "mean",
            Statistic::Std => "std",
            Statistic::Skew => "skew",
            Statistic::Kurt => "kurto",
        }
    }
}

impl fmt::Display for Statistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for Statistic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "max" => Ok(Statistic::Max),
            "mean" => Ok(Statistic::Mean),
            "std" => Ok(Statistic::Std),
            "skew" => Ok(Statistic::Skew),
            "kurt" | "kurto" => Ok(Statistic::Kurt),
            other => Err(Error::InvalidConfig(format!("unknown statistic `{other}`"))),
        }
    }
}

impl PooledStats {
    pub fn get(&self, stat: Statistic) -> &[f64] {
        match stat {
            Statistic::Max => &self.max,
            Statistic::Mean => &self.mean,
            Statistic::Std => &self.std,
            Statistic::Skew => &self.skew,
            Statistic::Kurt => &self.kurt,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolingConfig {
    stats: Vec<Statistic>,
    eps: f64,
}

impl PoolingConfig {
    pub fn new(stats: Vec<Statistic>, eps: f64) -> Result<Self> {
        if stats.is_empty() {
            return Err(Error::InvalidConfig("pooling needs at least one statistic".into()));
        }
        for (i, s) in stats.iter().enumerate() {
            if stats[..i].contains(s) {
                return Err(Error::InvalidConfig(format!("duplicate statistic `{s}`")));
            }
        }
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidConfig(format!("eps must be positive, got {eps}")));
        }
        Ok(PoolingConfig { stats, eps })
    }

    /// Parse a dash-joined system name such as `mean-std-skew`.
    pub fn parse(name: &str) -> Result<Self> {
        let stats = name
            .split('-')
            .map(str::parse)
            .collect::<Result<Vec<Statistic>>>()?;
        Self::new(stats, DEFAULT_EPS)
    }

    pub fn with_eps(mut self, eps: f64) -> Result<Self> {
        self = Self::new(self.stats, eps)?;
        Ok(self)
    }

    pub fn stats(&self) -> &[Statistic] {
        &self.stats
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn name(&self) -> String {
        self.stats
            .iter()
            .map(|s| s.token())
            .collect::<Vec<_>>()
            .join("-")
    }

    pub fn output_width(&self, dim: usize) -> usize {
        self.stats.len() * dim
    }
}

impl fmt::Display for PoolingConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

pub fn output_width(cfg: &PoolingConfig, dim: usize) -> usize {
    cfg.output_width(dim)
}

/// Concatenated pooled statistics, in config order.
pub fn forward(cfg: &PoolingConfig, x: &FrameSequence) -> Vec<f64> {
    let central = central_moments(x);
    let d = x.dim();
    let mut out = Vec::with_capacity(cfg.output_width(d));
    for &stat in &cfg.stats {
        match stat {
            Statistic::Max => out.extend(crate::moments::max_pool(x)),
            Statistic::Mean => out.extend(central.iter().map(|c| c.mean)),
            Statistic::Std => out.extend(central.iter().map(|c| c.std())),
            Statistic::Skew => out.extend(central.iter().map(|c| c.skew(cfg.eps))),
            Statistic::Kurt => out.extend(central.iter().map(|c| c.kurt(cfg.eps))),
        }
    }
    out
}

/// Gradient of `upstream · forward(cfg, x)` with respect to `x`.
///
/// Max routes its gradient to the lowest-index argmax frame. Skewness and
/// kurtosis slices of dimensions with `σ <= eps` contribute nothing.
pub fn backward(cfg: &PoolingConfig, x: &FrameSequence, upstream: &[f64]) -> Result<Array2<f64>> {
    let (t, d) = (x.len(), x.dim());
    if upstream.len() != cfg.output_width(d) {
        return Err(Error::ShapeMismatch(format!(
            "upstream gradient has length {}, pooling output has width {}",
            upstream.len(),
            cfg.output_width(d)
        )));
    }
    let xs = x.view();
    let central = central_moments(x);
    let tf = t as f64;
    let mut grad = Array2::<f64>::zeros((t, d));

    for (j, &stat) in cfg.stats.iter().enumerate() {
        let up = &upstream[j * d..(j + 1) * d];
        for k in 0..d {
            let g = up[k];
            if g == 0.0 {
                continue;
            }
            let c = &central[k];
            match stat {
                Statistic::Max => {
                    let mut arg = 0;
                    for i in 1..t {
                        if xs[[i, k]] > xs[[arg, k]] {
                            arg = i;
                        }
                    }
                    grad[[arg, k]] += g;
                }
                Statistic::Mean => {
                    let v = g / tf;
                    for i in 0..t {
                        grad[[i, k]] += v;
                    }
                }
                Statistic::Std => {
                    let scale = g / (tf * c.std().max(cfg.eps));
                    for i in 0..t {
                        grad[[i, k]] += scale * (xs[[i, k]] - c.mean);
                    }
                }
                Statistic::Skew => {
                    let sigma = c.std();
                    if sigma <= cfg.eps {
                        continue;
                    }
                    // d(m3/σ³) = 3/(Tσ³)·(dev² − m2) − 3·m3·dev/(Tσ⁵)
                    let s3 = sigma * sigma * sigma;
                    let a = 3.0 / (tf * s3);
                    let b = 3.0 * c.m3 / (tf * s3 * sigma * sigma);
                    for i in 0..t {
                        let dev = xs[[i, k]] - c.mean;
                        grad[[i, k]] += g * (a * (dev * dev - c.m2) - b * dev);
                    }
                }
                Statistic::Kurt => {
                    if c.std() <= cfg.eps {
                        continue;
                    }
                    // d(m4/m2²) = 4/(T·m2²)·(dev³ − m3) − 4·m4·dev/(T·m2³)
                    let m2sq = c.m2 * c.m2;
                    let a = 4.0 / (tf * m2sq);
                    let b = 4.0 * c.m4 / (tf * m2sq * c.m2);
                    for i in 0..t {
                        let dev = xs[[i, k]] - c.mean;
                        grad[[i, k]] += g * (a * (dev * dev * dev - c.m3) - b * dev);
                    }
                }
            }
        }
    }
    Ok(grad)
}
