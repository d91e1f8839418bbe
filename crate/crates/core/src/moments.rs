//! Per-dimension max and standardized moments of a sequence of frame vectors.
//!
//! All moments use the population (divide-by-`T`) convention. Skewness and
//! kurtosis are reported as `m3 / σ³` and `m4 / σ⁴`; a dimension whose standard
//! deviation does not exceed `eps` is treated as degenerate and both
//! standardized moments are reported as `0`.
//!
//! Two computation paths are provided: a two-pass batch path over a
//! [`FrameSequence`], and a one-pass [`MomentAccumulator`] that can be fed frame
//! by frame and merged across shards.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Default guard below which a standard deviation is considered zero.
pub const DEFAULT_EPS: f64 = 1e-6;

/// A `T x D` matrix of frame-level feature vectors, one frame per row.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    data: Array2<f64>,
}

impl FrameSequence {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        let (rows, cols) = data.dim();
        if rows == 0 || cols == 0 {
            return Err(Error::EmptySequence { rows, cols });
        }
        for ((frame, dim), v) in data.indexed_iter() {
            if !v.is_finite() {
                return Err(Error::NonFinite { frame, dim });
            }
        }
        Ok(FrameSequence { data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let t = rows.len();
        let d = rows.first().map_or(0, |r| r.as_ref().len());
        let mut flat = Vec::with_capacity(t * d);
        for r in rows {
            let r = r.as_ref();
            if r.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: r.len(),
                });
            }
            flat.extend_from_slice(r);
        }
        let data = Array2::from_shape_vec((t, d), flat)
            .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        Self::new(data)
    }

    /// Number of frames `T`.
    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Feature dimension `D`.
    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn frame(&self, i: usize) -> ArrayView1<'_, f64> {
        self.data.row(i)
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.data
    }
}

/// The five pooled statistics of a sequence, each of length `D`.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledStats {
    pub max: Vec<f64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub skew: Vec<f64>,
    pub kurt: Vec<f64>,
}

/// Population central moments of one dimension.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct Central {
    pub mean: f64,
    pub m2: f64,
    pub m3: f64,
    pub m4: f64,
}

impl Central {
    pub fn std(&self) -> f64 {
        self.m2.max(0.0).sqrt()
    }

    pub fn skew(&self, eps: f64) -> f64 {
        let sigma = self.std();
        if sigma > eps {
            self.m3 / (sigma * sigma * sigma)
        } else {
            0.0
        }
    }

    pub fn kurt(&self, eps: f64) -> f64 {
        let sigma = self.std();
        if sigma > eps {
            self.m4 / (self.m2 * self.m2)
        } else {
            0.0
        }
    }
}

/// Two-pass central moments of every column.
pub(crate) fn central_moments(x: &FrameSequence) -> Vec<Central> {
    let t = x.len() as f64;
    let mean = x.data.mean_axis(Axis(0)).expect("T >= 1");
    x.data
        .axis_iter(Axis(1))
        .zip(mean.iter())
        .map(|(col, &mu)| {
            let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
            for &v in col {
                let d = v - mu;
                let d2 = d * d;
                m2 += d2;
                m3 += d2 * d;
                m4 += d2 * d2;
            }
            Central {
                mean: mu,
                m2: m2 / t,
                m3: m3 / t,
                m4: m4 / t,
            }
        })
        .collect()
}

pub fn max_pool(x: &FrameSequence) -> Vec<f64> {
    x.data
        .axis_iter(Axis(1))
        .map(|col| col.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect()
}

pub fn mean_pool(x: &FrameSequence) -> Vec<f64> {
    x.data.mean_axis(Axis(0)).expect("T >= 1").to_vec()
}

pub fn std_pool(x: &FrameSequence) -> Vec<f64> {
    central_moments(x).iter().map(Central::std).collect()
}

pub fn skew_pool(x: &FrameSequence, eps: f64) -> Vec<f64> {
    central_moments(x).iter().map(|c| c.skew(eps)).collect()
}

pub fn kurt_pool(x: &FrameSequence, eps: f64) -> Vec<f64> {
    central_moments(x).iter().map(|c| c.kurt(eps)).collect()
}

/// All five statistics in one pass over the central moments.
pub fn pooled_stats(x: &FrameSequence, eps: f64) -> PooledStats {
    let central = central_moments(x);
    PooledStats {
        max: max_pool(x),
        mean: central.iter().map(|c| c.mean).collect(),
        std: central.iter().map(Central::std).collect(),
        skew: central.iter().map(|c| c.skew(eps)).collect(),
        kurt: central.iter().map(|c| c.kurt(eps)).collect(),
    }
}

/// One-pass accumulator of per-dimension max and central moments.
///
/// Moment sums are kept around the running mean and updated with the
/// shifted higher-order recurrences, so offset data does not lose precision
/// the way raw power sums would. Two accumulators over disjoint frame sets
/// can be merged.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentAccumulator {
    count: u64,
    mean: Vec<f64>,
    // sums of (x - mean)^k for k = 2, 3, 4
    s2: Vec<f64>,
    s3: Vec<f64>,
    s4: Vec<f64>,
    max: Vec<f64>,
}

impl MomentAccumulator {
    pub fn new(dim: usize) -> Self {
        MomentAccumulator {
            count: 0,
            mean: vec![0.0; dim],
            s2: vec![0.0; dim],
            s3: vec![0.0; dim],
            s4: vec![0.0; dim],
            max: vec![f64::NEG_INFINITY; dim],
        }
    }

    pub fn from_sequence(x: &FrameSequence) -> Self {
        let mut acc = Self::new(x.dim());
        for row in x.data.rows() {
            acc.push_unchecked(row.iter().copied());
        }
        acc
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn accumulate(&mut self, frame: &[f64]) -> Result<()> {
        if frame.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: frame.len(),
            });
        }
        self.push_unchecked(frame.iter().copied());
        Ok(())
    }

    fn push_unchecked(&mut self, frame: impl Iterator<Item = f64>) {
        let n1 = self.count as f64;
        self.count += 1;
        let n = self.count as f64;
        for (d, x) in frame.enumerate() {
            let delta = x - self.mean[d];
            let delta_n = delta / n;
            let delta_n2 = delta_n * delta_n;
            let term1 = delta * delta_n * n1;
            self.s4[d] += term1 * delta_n2 * (n * n - 3.0 * n + 3.0) + 6.0 * delta_n2 * self.s2[d]
                - 4.0 * delta_n * self.s3[d];
            self.s3[d] += term1 * delta_n * (n - 2.0) - 3.0 * delta_n * self.s2[d];
            self.s2[d] += term1;
            self.mean[d] += delta_n;
            if x > self.max[d] {
                self.max[d] = x;
            }
        }
    }

    /// Combine two accumulators as if their frames had been fed to one.
    pub fn merge(&self, other: &Self) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        if other.count == 0 {
            return Ok(self.clone());
        }
        if self.count == 0 {
            return Ok(other.clone());
        }
        let na = self.count as f64;
        let nb = other.count as f64;
        let n = na + nb;
        let mut out = Self::new(self.dim());
        out.count = self.count + other.count;
        for d in 0..self.dim() {
            let delta = other.mean[d] - self.mean[d];
            let delta2 = delta * delta;
            let delta3 = delta2 * delta;
            let delta4 = delta2 * delta2;
            let (a2, a3, a4) = (self.s2[d], self.s3[d], self.s4[d]);
            let (b2, b3, b4) = (other.s2[d], other.s3[d], other.s4[d]);
            out.mean[d] = (na * self.mean[d] + nb * other.mean[d]) / n;
            out.s2[d] = a2 + b2 + delta2 * na * nb / n;
            out.s3[d] = a3
                + b3
                + delta3 * na * nb * (na - nb) / (n * n)
                + 3.0 * delta * (na * b2 - nb * a2) / n;
            out.s4[d] = a4
                + b4
                + delta4 * na * nb * (na * na - na * nb + nb * nb) / (n * n * n)
                + 6.0 * delta2 * (na * na * b2 + nb * nb * a2) / (n * n)
                + 4.0 * delta * (na * b3 - nb * a3) / n;
            out.max[d] = self.max[d].max(other.max[d]);
        }
        Ok(out)
    }

    pub(crate) fn central(&self) -> Result<Vec<Central>> {
        if self.count == 0 {
            return Err(Error::EmptyAccumulator);
        }
        let n = self.count as f64;
        Ok((0..self.dim())
            .map(|d| Central {
                mean: self.mean[d],
                m2: (self.s2[d] / n).max(0.0),
                m3: self.s3[d] / n,
                m4: (self.s4[d] / n).max(0.0),
            })
            .collect())
    }

    pub fn finalize(&self, eps: f64) -> Result<PooledStats> {
        let central = self.central()?;
        Ok(PooledStats {
            max: self.max.clone(),
            mean: central.iter().map(|c| c.mean).collect(),
            std: central.iter().map(Central::std).collect(),
            skew: central.iter().map(|c| c.skew(eps)).collect(),
            kurt: central.iter().map(|c| c.kurt(eps)).collect(),
        })
    }
}
