//! Desk-scale embedding network.
//!
//! Three stages, mirroring an x-vector extractor: a per-frame affine+ReLU
//! stack, a statistics pooling layer, and a segment-level affine layer whose
//! pre-activation output is the embedding. Training uses an additive angular
//! margin (ArcFace) softmax over cosine logits between the embedding and a
//! class-weight matrix.

mod arcface;
pub mod checkpoint;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moments::FrameSequence;
use crate::nn::{relu_backward_inplace, relu_inplace, Dense};
use crate::pooling::{self, PoolingConfig};

pub type Embedding = Vec<f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub input_dim: usize,
    pub frame_hidden: Vec<usize>,
    pub pooling: PoolingConfig,
    pub embed_dim: usize,
    pub num_classes: usize,
    pub arcface_scale: f64,
    pub arcface_margin: f64,
    pub seed: u64,
}

impl EncoderConfig {
    pub fn new(input_dim: usize, pooling: PoolingConfig, num_classes: usize) -> Self {
        EncoderConfig {
            input_dim,
            frame_hidden: vec![64],
            pooling,
            embed_dim: 256,
            num_classes,
            arcface_scale: 30.0,
            arcface_margin: 0.2,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.input_dim == 0 || self.embed_dim == 0 || self.frame_hidden.contains(&0) {
            return bad("encoder layer widths must be >= 1".into());
        }
        if self.num_classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.num_classes));
        }
        if !(self.arcface_scale > 0.0 && self.arcface_scale.is_finite()) {
            return bad(format!("arcface scale must be > 0, got {}", self.arcface_scale));
        }
        if !(0.0..=0.5).contains(&self.arcface_margin) {
            return bad(format!(
                "arcface margin must lie in [0, 0.5], got {}",
                self.arcface_margin
            ));
        }
        Ok(())
    }

    /// Width of the last frame-level layer, i.e. the pooled feature dimension.
    pub fn frame_output_dim(&self) -> usize {
        self.frame_hidden.last().copied().unwrap_or(self.input_dim)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub config: EncoderConfig,
    pub frame_layers: Vec<Dense>,
    /// Frozen affine map applied to pooled statistics before the segment layer.
    pub pooled_shift: Array1<f64>,
    pub pooled_scale: Array1<f64>,
    pub segment: Dense,
    /// `num_classes x embed_dim`; rows are normalized inside the loss.
    pub classes: Array2<f64>,
}

/// Intermediate values of one forward pass, kept for backprop.
struct Trace {
    /// inputs to each frame layer (the last entry is the pooled-over matrix)
    activations: Vec<Array2<f64>>,
    pre_activations: Vec<Array2<f64>>,
    pooled: Array1<f64>,
    embedding: Array1<f64>,
}

#[derive(Debug, Clone)]
struct Grads {
    frame_layers: Vec<Dense>,
    segment: Dense,
    classes: Array2<f64>,
}

impl Grads {
    fn zeros_like(model: &ModelState) -> Self {
        Grads {
            frame_layers: model
                .frame_layers
                .iter()
                .map(|l| Dense::zeros(l.fan_in(), l.fan_out()))
                .collect(),
            segment: Dense::zeros(model.segment.fan_in(), model.segment.fan_out()),
            classes: Array2::zeros(model.classes.dim()),
        }
    }

    fn add_assign(&mut self, other: &Grads) {
        for (a, b) in self.frame_layers.iter_mut().zip(&other.frame_layers) {
            a.add_assign(b);
        }
        self.segment.add_assign(&other.segment);
        self.classes += &other.classes;
    }

    fn scale(&mut self, factor: f64) {
        for l in &mut self.frame_layers {
            l.scale(factor);
        }
        self.segment.scale(factor);
        self.classes *= factor;
    }
}

impl ModelState {
    /// Seeded initialization. Frame layers are drawn first, so models that
    /// share a seed and frame-level widths start from the same frame-level
    /// weights regardless of their pooling configuration.
    pub fn init(config: EncoderConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut fan_in = config.input_dim;
        let mut frame_layers = Vec::with_capacity(config.frame_hidden.len());
        for &width in &config.frame_hidden {
            frame_layers.push(Dense::glorot(fan_in, width, &mut rng));
            fan_in = width;
        }
        let pooled = config.pooling.output_width(fan_in);
        let segment = Dense::glorot(pooled, config.embed_dim, &mut rng);
        let classes = Dense::glorot(config.embed_dim, config.num_classes, &mut rng).weight;
        Ok(ModelState {
            config,
            frame_layers,
            pooled_shift: Array1::zeros(pooled),
            pooled_scale: Array1::ones(pooled),
            segment,
            classes,
        })
    }

    fn pool(&self, x: &FrameSequence) -> Result<(FrameSequence, Array1<f64>)> {
        self.check_input(x)?;
        let mut h = x.view().to_owned();
        for layer in &self.frame_layers {
            h = layer.forward(h.view());
            relu_inplace(&mut h);
        }
        let frames = FrameSequence::new(h)?;
        let pooled = Array1::from(pooling::forward(&self.config.pooling, &frames));
        Ok((frames, pooled))
    }

    /// Set the pooled-feature standardization to zero mean and unit variance
    /// over `utts` under the current frame layers.
    pub fn fit_pooled_norm(&mut self, utts: &[&FrameSequence]) -> Result<()> {
        if utts.is_empty() {
            return Ok(());
        }
        let pooled = utts
            .par_iter()
            .map(|x| self.pool(x).map(|(_, p)| p))
            .collect::<Result<Vec<_>>>()?;
        let n = pooled.len() as f64;
        let width = self.pooled_shift.len();
        let mut mean = Array1::<f64>::zeros(width);
        for p in &pooled {
            mean += p;
        }
        mean /= n;
        let mut var = Array1::<f64>::zeros(width);
        for p in &pooled {
            var += &(p - &mean).mapv(|d| d * d);
        }
        var /= n;
        self.pooled_scale = var.mapv(|v| if v > 1e-12 { 1.0 / v.sqrt() } else { 1.0 });
        self.pooled_shift = mean;
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.frame_layers.iter().all(Dense::is_finite)
            && self.segment.is_finite()
        && self.pooled_shift.iter().chain(&self.pooled_scale).all(|v| v.is_finite())
            && self.classes.iter().all(|v| v.is_finite())
    }

    fn check_input(&self, x: &FrameSequence) -> Result<()> {
        if x.dim() != self.config.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.config.input_dim,
                found: x.dim(),
            });
        }
        Ok(())
    }

    fn trace(&self, x: &FrameSequence) -> Result<Trace> {
        self.check_input(x)?;
        let mut activations = Vec::with_capacity(self.frame_layers.len() + 1);
        let mut pre_activations = Vec::with_capacity(self.frame_layers.len());
        let mut h = x.view().to_owned();
        for layer in &self.frame_layers {
            let z = layer.forward(h.view());
            let mut a = z.clone();
            relu_inplace(&mut a);
            activations.push(h);
            pre_activations.push(z);
            h = a;
        }
        let frames = FrameSequence::new(h)?;
        let raw = pooling::forward(&self.config.pooling, &frames);
        let pooled = (Array1::from(raw) - &self.pooled_shift) * &self.pooled_scale;
        let embedding = self.segment.forward_vec(pooled.view());
        activations.push(frames.into_inner());
        Ok(Trace {
            activations,
            pre_activations,
            pooled,
            embedding,
        })
    }

    /// Embedding of one utterance: the pre-activation output of the first
    /// segment-level layer.
    pub fn forward_embed(&self, x: &FrameSequence) -> Result<Embedding> {
        Ok(self.trace(x)?.embedding.to_vec())
    }

    /// ArcFace loss of an embedding using this model's scale and margin.
    pub fn arcface_loss(&self, emb: &[f64], label: usize) -> f64 {
        arcface_loss(self, emb, label, self.config.arcface_scale, self.config.arcface_margin)
    }

    /// Full-network loss for one labeled utterance.
    pub fn loss(&self, x: &FrameSequence, label: usize) -> Result<f64> {
        let emb = self.forward_embed(x)?;
        Ok(self.arcface_loss(&emb, label))
    }

    /// Index of the class row with the largest cosine to the embedding.
    pub fn classify(&self, x: &FrameSequence) -> Result<usize> {
        let emb = Array1::from(self.forward_embed(x)?);
        let cos = arcface::cosines(&self.classes, emb.view());
        Ok(argmax(&cos))
    }

    fn loss_and_grads(&self, x: &FrameSequence, label: usize) -> Result<(f64, Grads)> {
        let trace = self.trace(x)?;
        let cfg = &self.config;
        let head = arcface::loss_and_grad(
            &self.classes,
            trace.embedding.view(),
            label,
            cfg.arcface_scale,
            cfg.arcface_margin,
        );
        let mut grads = Grads::zeros_like(self);
        grads.classes = head.d_classes;

        // segment layer
        let d_emb = head.d_emb.insert_axis(Axis(0));
        let pooled = trace.pooled.view().insert_axis(Axis(0));
        let d_pooled = self.segment.backward(pooled, d_emb.view(), &mut grads.segment);

        // pooling layer
        let frames = FrameSequence::new(trace.activations.last().expect("pooled input").clone())?;
        let d_raw = &d_pooled.row(0) * &self.pooled_scale;
        let mut d_h = pooling::backward(&cfg.pooling, &frames, d_raw.as_slice().expect("row"))?;

        // frame layers, last to first
        for l in (0..self.frame_layers.len()).rev() {
            relu_backward_inplace(&mut d_h, &trace.pre_activations[l]);
            d_h = self.frame_layers[l].backward(
                trace.activations[l].view(),
                d_h.view(),
                &mut grads.frame_layers[l],
            );
        }
        Ok((head.loss, grads))
    }

    fn apply(&mut self, grads: &Grads, lr: f64, weight_decay: f64) {
        let shrink = 1.0 - lr * weight_decay;
        for (layer, g) in self.frame_layers.iter_mut().zip(&grads.frame_layers) {
            layer.weight *= shrink;
            layer.step(g, lr);
        }
        self.segment.weight *= shrink;
        self.segment.step(&grads.segment, lr);
        self.classes.scaled_add(-lr, &grads.classes);
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Cross-entropy over `s · cos(θ_j + m·[j = label])`, where `θ_j` is the angle
/// between the embedding and class row `j`.
pub fn arcface_loss(model: &ModelState, emb: &[f64], label: usize, scale: f64, margin: f64) -> f64 {
    arcface::loss(
        &model.classes,
        ndarray::ArrayView1::from(emb),
        label,
        scale,
        margin,
    )
}

/// One minibatch of labeled frame sequences.
#[derive(Debug, Clone)]
pub struct TrainBatch {
    pub sequences: Vec<FrameSequence>,
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainOptions {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// When set, every epoch trains on a random contiguous window of at most
    /// this many frames from each utterance.
    pub segment_len: Option<usize>,
    /// Fit the pooled-feature standardization on the training utterances
    /// before the first update.
    pub standardize_pooled: bool,
    /// L2 penalty coefficient on frame and segment weight matrices.
    pub weight_decay: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            epochs: 30,
            lr: 0.05,
            batch_size: 32,
            segment_len: Some(150),
            standardize_pooled: true,
            weight_decay: 0.03,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub model: ModelState,
    /// Mean minibatch loss of each epoch, measured before each update.
    pub epoch_losses: Vec<f64>,
}

/// Seeded minibatch order for one epoch, with optional fixed-length cropping.
fn epoch_batches(
    data: &[(FrameSequence, usize)],
    opts: &TrainOptions,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<TrainBatch>> {
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(rng);
    order
        .chunks(opts.batch_size.max(1))
        .map(|chunk| {
            let mut sequences = Vec::with_capacity(chunk.len());
            let mut labels = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let (x, y) = &data[i];
                let seq = match opts.segment_len {
                    Some(len) if x.len() > len => {
                        let start = rng.random_range(0..=x.len() - len);
                        FrameSequence::new(
                            x.view().slice(ndarray::s![start..start + len, ..]).to_owned(),
                        )?
                    }
                    _ => x.clone(),
                };
                sequences.push(seq);
                labels.push(*y);
            }
            Ok(TrainBatch { sequences, labels })
        })
        .collect()
}

/// Train a freshly initialized model on labeled sequences.
pub fn train(config: &EncoderConfig, data: &[(FrameSequence, usize)], opts: &TrainOptions) -> Result<Trained> {
    let mut model = ModelState::init(config.clone())?;
    if opts.standardize_pooled {
        let utts: Vec<&FrameSequence> = data.iter().map(|(x, _)| x).collect();
        model.fit_pooled_norm(&utts)?;
    }
    train_from(model, data, opts)
}

/// Plain minibatch gradient descent with seeded shuffling.
///
/// Per-utterance gradients are computed in parallel and summed in batch
/// order, so results do not depend on the thread schedule.
pub fn train_from(
    mut model: ModelState,
    data: &[(FrameSequence, usize)],
    opts: &TrainOptions,
) -> Result<Trained> {
    if data.is_empty() {
        return Err(Error::InvalidConfig("training data is empty".into()));
    }
    if let Some(&(_, y)) = data.iter().find(|(_, y)| *y >= model.config.num_classes) {
        return Err(Error::InvalidConfig(format!(
            "label {y} out of range for {} classes",
            model.config.num_classes
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(model.config.seed);
    rng.set_stream(1);
    let mut epoch_losses = Vec::with_capacity(opts.epochs);
    let mut step = 0;
    for _ in 0..opts.epochs {
        let batches = epoch_batches(data, opts, &mut rng)?;
        let mut total = 0.0;
        for batch in &batches {
            let per_item: Vec<(f64, Grads)> = batch
                .sequences
                .par_iter()
                .zip(batch.labels.par_iter())
                .map(|(x, &y)| model.loss_and_grads(x, y))
                .collect::<Result<_>>()?;
            let mut sum = Grads::zeros_like(&model);
            let mut loss = 0.0;
            for (l, g) in &per_item {
                loss += l;
                sum.add_assign(g);
            }
            let n = per_item.len() as f64;
            loss /= n;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { step });
            }
            sum.scale(1.0 / n);
            model.apply(&sum, opts.lr, opts.weight_decay);
            if !model.is_finite() {
                return Err(Error::NonFiniteLoss { step });
            }
            total += loss * n;
            step += 1;
        }
        epoch_losses.push(total / data.len() as f64);
    }
    Ok(Trained {
        model,
        epoch_losses,
    })
}

/// Embeddings for many utterances; order preserved.
pub fn extract_all(model: &ModelState, utts: &[FrameSequence]) -> Result<Vec<Embedding>> {
    utts.par_iter().map(|x| model.forward_embed(x)).collect()
}

/// Fraction of utterances whose nearest class row is their label.
pub fn accuracy(model: &ModelState, data: &[(FrameSequence, usize)]) -> Result<f64> {
    let hits = data
        .par_iter()
        .map(|(x, y)| model.classify(x).map(|p| usize::from(p == *y)))
        .collect::<Result<Vec<_>>>()?;
    Ok(hits.iter().sum::<usize>() as f64 / data.len().max(1) as f64)
}

#[cfg(test)]
mod tests;
