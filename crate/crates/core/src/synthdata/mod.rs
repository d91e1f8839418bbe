//! Deterministic synthetic speaker world.
//!
//! Every utterance is a sequence of frames
//!
//! ```text
//! frame_t = centroid[speaker] + offset[nuisance]
//!         + noise_scale * shape[speaker] ⊙ z_t + extra_noise[nuisance] * z'_t
//!         + (word template rows, added over a few contiguous spans)
//! ```
//!
//! Speaker centroids are drawn around a small set of cluster means (a
//! group-of-speakers attribute), and the per-dimension noise `shape` depends on
//! the speaker's gender with a speaker-specific jitter. Nuisance classes model
//! a channel effect: class 0 is clean, other classes add a fixed offset and
//! extra frame noise. Speaking rate only changes the number of frames.

mod corpus;

pub use corpus::{read_corpus, read_speakers, write_corpus, write_speakers};

use std::collections::HashSet;
use std::fmt;

use ndarray::{s, Array1, Array2, Array3};
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moments::FrameSequence;
use crate::scoring::{Trial, TrialLabel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub num_speakers: usize,
    pub input_dim: usize,
    /// Base frame count `T₀`; an utterance has `round(rate * T₀)` frames.
    pub frames_per_utt: usize,
    pub utts_per_speaker: usize,
    /// Standard deviation of speaker centroids around their cluster mean.
    pub speaker_scale: f64,
    /// Within-utterance frame noise standard deviation.
    pub noise_scale: f64,
    /// Number of speaker clusters (nationality analogue).
    pub num_clusters: usize,
    pub cluster_scale: f64,
    /// Log-scale spread of the two gender noise-shape profiles.
    pub gender_shape: f64,
    /// Log-scale spread of the speaker-specific jitter on the noise shape.
    pub speaker_shape: f64,
    /// Spread of the speaker-specific per-dimension asymmetry of the frame
    /// noise (0 keeps it Gaussian).
    pub speaker_skew: f64,
    /// Nuisance (augmentation-type analogue) classes; class 0 is clean.
    pub nuisance_types: usize,
    pub nuisance_scale: f64,
    /// Extra frame noise of the strongest nuisance class, relative to `noise_scale`.
    pub nuisance_noise: f64,
    pub rate_multipliers: Vec<f64>,
    pub lexicon_size: usize,
    pub bursts_per_utt: usize,
    pub burst_len: usize,
    pub burst_amplitude: f64,
    /// Non-zero feature dimensions per word template (0 means all).
    pub word_dims: usize,
    /// Subtract each template's mean frame, so a burst leaves the utterance mean unchanged.
    pub centered_bursts: bool,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            num_speakers: 50,
            input_dim: 16,
            frames_per_utt: 1000,
            utts_per_speaker: 20,
            speaker_scale: 0.15,
            noise_scale: 1.0,
            num_clusters: 8,
            cluster_scale: 1.0,
            gender_shape: 0.4,
            speaker_shape: 0.1,
            speaker_skew: 0.2,
            nuisance_types: 4,
            nuisance_scale: 0.5,
            nuisance_noise: 0.5,
            rate_multipliers: vec![0.9, 1.0, 1.1],
            lexicon_size: 25,
            bursts_per_utt: 8,
            burst_len: 2,
            burst_amplitude: 6.0,
            word_dims: 0,
            centered_bursts: true,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.num_speakers < 2 {
            return bad("need at least 2 speakers");
        }
        if self.input_dim == 0 || self.frames_per_utt == 0 || self.utts_per_speaker == 0 {
            return bad("input_dim, frames_per_utt and utts_per_speaker must be >= 1");
        }
        if !(self.speaker_scale > 0.0 && self.noise_scale >= 0.0 && self.cluster_scale >= 0.0) {
            return bad("speaker_scale must be > 0 and noise/cluster scales >= 0");
        }
        if self.num_clusters == 0 || self.nuisance_types == 0 {
            return bad("num_clusters and nuisance_types must be >= 1");
        }
        if self.rate_multipliers.is_empty() || self.rate_multipliers.iter().any(|&r| !(r > 0.0)) {
            return bad("rate multipliers must be positive");
        }
        if self.lexicon_size > WordSet::CAPACITY {
            return bad("lexicon_size is limited to 128 words");
        }
        if self.bursts_per_utt > 0 && (self.lexicon_size == 0 || self.burst_len == 0) {
            return bad("bursts need a non-empty lexicon and burst_len >= 1");
        }
        Ok(())
    }

    pub fn frames_for_rate(&self, rate: usize) -> usize {
        ((self.rate_multipliers[rate] * self.frames_per_utt as f64).round() as usize).max(1)
    }
}

/// Set of lexicon words present in an utterance (bit `i` = word `i`).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct WordSet(u128);

impl WordSet {
    pub const CAPACITY: usize = 128;

    pub fn from_bits(bits: u128) -> Self {
        WordSet(bits)
    }

    pub fn bits(self) -> u128 {
        self.0
    }

    pub fn insert(&mut self, word: usize) {
        self.0 |= 1u128 << word;
    }

    pub fn contains(self, word: usize) -> bool {
        word < Self::CAPACITY && self.0 & (1u128 << word) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        (0..Self::CAPACITY).filter(move |&w| self.contains(w))
    }
}

impl fmt::LowerHex for WordSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::LowerHex::fmt(&self.0, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpeakerInfo {
    pub gender: u8,
    pub cluster: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerProfile {
    pub centroid: Array1<f64>,
    /// Per-dimension noise scale factors (gender profile times speaker jitter).
    pub shape: Array1<f64>,
    /// Per-dimension quadratic noise coefficient; see [`skewed_noise`].
    pub asymmetry: Array1<f64>,
    pub gender: u8,
    pub cluster: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledUtterance {
    pub id: String,
    pub frames: FrameSequence,
    pub speaker: usize,
    pub gender: u8,
    pub nuisance: usize,
    pub rate: usize,
    pub words: WordSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub speakers: Vec<SpeakerInfo>,
    pub utterances: Vec<LabeledUtterance>,
}

impl Corpus {
    pub fn cluster_of(&self, utt: &LabeledUtterance) -> usize {
        self.speakers[utt.speaker].cluster
    }

    /// The utterances of the given speakers, in corpus order.
    pub fn subset_by_speakers(&self, keep: &[usize]) -> Corpus {
        let keep: HashSet<usize> = keep.iter().copied().collect();
        Corpus {
            speakers: self.speakers.clone(),
            utterances: self
                .utterances
                .iter()
                .filter(|u| keep.contains(&u.speaker))
                .cloned()
                .collect(),
        }
    }
}

/// `(z + a(z² - 1)) / sqrt(1 + 2a²)` for standard normal `z`: zero mean,
/// unit variance, third moment `(6a + 8a³) / (1 + 2a²)^{3/2}`.
pub fn skewed_noise(z: f64, a: f64) -> f64 {
    if a == 0.0 {
        return z;
    }
    (z + a * (z * z - 1.0)) / (1.0 + 2.0 * a * a).sqrt()
}

fn normal_array1(n: usize, scale: f64, rng: &mut ChaCha8Rng) -> Array1<f64> {
    Array1::from_shape_simple_fn(n, || scale * rng.sample::<f64, _>(StandardNormal))
}

/// Classes `0..k` repeated to length `n`, then shuffled: as balanced as `n` allows.
fn balanced_labels(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut labels: Vec<usize> = (0..n).map(|i| i % k).collect();
    labels.shuffle(rng);
    labels
}

pub fn generate(spec: &SynthSpec) -> Result<Corpus> {
    spec.validate()?;
    let d = spec.input_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let cluster_means: Vec<Array1<f64>> = (0..spec.num_clusters)
        .map(|_| normal_array1(d, spec.cluster_scale, &mut rng))
        .collect();
    let gender_profiles: Vec<Array1<f64>> = (0..2)
        .map(|_| normal_array1(d, spec.gender_shape, &mut rng).mapv(f64::exp))
        .collect();
    let offsets: Vec<Array1<f64>> = (0..spec.nuisance_types)
        .map(|k| {
            let o = normal_array1(d, spec.nuisance_scale, &mut rng);
            if k == 0 { Array1::zeros(d) } else { o }
        })
        .collect();
    let extra_noise: Vec<f64> = (0..spec.nuisance_types)
        .map(|k| {
            if spec.nuisance_types > 1 {
                spec.noise_scale * spec.nuisance_noise * k as f64 / (spec.nuisance_types - 1) as f64
            } else {
                0.0
            }
        })
        .collect();
    let mut templates = Array3::from_shape_simple_fn((spec.lexicon_size, spec.burst_len, d), || {
        spec.burst_amplitude * rng.sample::<f64, _>(StandardNormal)
    });
    if spec.centered_bursts {
        for mut t in templates.outer_iter_mut() {
            let mean = t.mean_axis(ndarray::Axis(0)).expect("burst_len >= 1");
            t -= &mean;
        }
    }
    if spec.word_dims > 0 && spec.word_dims < d {
        for w in 0..spec.lexicon_size {
            let keep = index::sample(&mut rng, d, spec.word_dims).into_vec();
            for k in (0..d).filter(|k| !keep.contains(k)) {
                templates.slice_mut(s![w, .., k]).fill(0.0);
            }
        }
    }

    let genders = balanced_labels(spec.num_speakers, 2, &mut rng);
    let profiles: Vec<SpeakerProfile> = genders
        .iter()
        .map(|&g| {
            let cluster = rng.random_range(0..spec.num_clusters);
            let centroid = &cluster_means[cluster] + &normal_array1(d, spec.speaker_scale, &mut rng);
            let jitter = normal_array1(d, spec.speaker_shape, &mut rng).mapv(f64::exp);
            let asymmetry = if spec.speaker_skew > 0.0 {
                normal_array1(d, spec.speaker_skew, &mut rng)
            } else {
                Array1::zeros(d)
            };
            SpeakerProfile {
                centroid,
                shape: &gender_profiles[g] * &jitter,
                asymmetry,
                gender: g as u8,
                cluster,
            }
        })
        .collect();

    let bursts = spec.bursts_per_utt.min(spec.lexicon_size);
    let mut utterances = Vec::with_capacity(spec.num_speakers * spec.utts_per_speaker);
    for (speaker, p) in profiles.iter().enumerate() {
        let nuisances = balanced_labels(spec.utts_per_speaker, spec.nuisance_types, &mut rng);
        let rates = balanced_labels(spec.utts_per_speaker, spec.rate_multipliers.len(), &mut rng);
        for (&nuisance, &rate) in nuisances.iter().zip(&rates) {
            let t = spec.frames_for_rate(rate);
            let base = &p.centroid + &offsets[nuisance];
            let noise_sd = &p.shape * spec.noise_scale;
            let extra = extra_noise[nuisance];
            let mut frames = Array2::<f64>::zeros((t, d));
            for mut row in frames.rows_mut() {
                for k in 0..d {
                    let z: f64 = rng.sample(StandardNormal);
                    let z2: f64 = rng.sample(StandardNormal);
                    row[k] = base[k] + noise_sd[k] * skewed_noise(z, p.asymmetry[k]) + extra * z2;
                }
            }
            let mut words = WordSet::default();
            for w in index::sample(&mut rng, spec.lexicon_size, bursts).into_iter() {
                words.insert(w);
                let len = spec.burst_len.min(t);
                let start = rng.random_range(0..=t - len);
                let mut span = frames.slice_mut(s![start..start + len, ..]);
                span += &templates.slice(s![w, ..len, ..]);
            }
            utterances.push(LabeledUtterance {
                id: format!("u{:05}", utterances.len()),
                frames: FrameSequence::new(frames)?,
                speaker,
                gender: p.gender,
                nuisance,
                rate,
                words,
            });
        }
    }
    Ok(Corpus {
        speakers: profiles
            .iter()
            .map(|p| SpeakerInfo {
                gender: p.gender,
                cluster: p.cluster,
            })
            .collect(),
        utterances,
    })
}

/// Utterance-level train/test partition (indices into the input, ascending).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded split stratified by `labels`: each class contributes
/// `round(train_frac * n)` items to train, clamped so both sides get at least one.
pub fn split(labels: &[usize], train_frac: f64, seed: u64) -> Result<Split> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "train_frac must lie in (0, 1), got {train_frac}"
        )));
    }
    let num_classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, &y) in labels.iter().enumerate() {
        by_class[y].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Split {
        train: Vec::new(),
        test: Vec::new(),
    };
    for (label, mut members) in by_class.into_iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        if members.len() < 2 {
            return Err(Error::ClassTooSmall {
                label,
                count: members.len(),
            });
        }
        members.shuffle(&mut rng);
        let n = members.len();
        let n_train = ((train_frac * n as f64).round() as usize).clamp(1, n - 1);
        out.train.extend_from_slice(&members[..n_train]);
        out.test.extend_from_slice(&members[n_train..]);
    }
    out.train.sort_unstable();
    out.test.sort_unstable();
    Ok(out)
}

/// Sample distinct same-speaker (target) and cross-speaker (nontarget)
/// utterance pairs without replacement.
pub fn build_trials(
    data: &[LabeledUtterance],
    num_target: usize,
    num_nontarget: usize,
    seed: u64,
) -> Result<Vec<Trial>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = data.len();
    let mut per_speaker: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for (i, u) in data.iter().enumerate() {
        per_speaker.entry(u.speaker).or_default().push(i);
    }

    let target_pairs: Vec<(usize, usize)> = per_speaker
        .values()
        .flat_map(|idx| {
            idx.iter()
                .enumerate()
                .flat_map(move |(a, &i)| idx[a + 1..].iter().map(move |&j| (i, j)))
        })
        .collect();
    if num_target > target_pairs.len() {
        return Err(Error::InsufficientPairs {
            kind: "target",
            requested: num_target,
            available: target_pairs.len(),
        });
    }
    let mut targets: Vec<(usize, usize)> = index::sample(&mut rng, target_pairs.len(), num_target)
        .into_iter()
        .map(|k| target_pairs[k])
        .collect();
    targets.sort_unstable();

    let all_pairs = n * n.saturating_sub(1) / 2;
    let available = all_pairs - target_pairs.len();
    if num_nontarget > available {
        return Err(Error::InsufficientPairs {
            kind: "nontarget",
            requested: num_nontarget,
            available,
        });
    }
    let mut nontargets: Vec<(usize, usize)> = if 2 * num_nontarget >= available {
        let pool: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|&(i, j)| data[i].speaker != data[j].speaker)
            .collect();
        index::sample(&mut rng, pool.len(), num_nontarget)
            .into_iter()
            .map(|k| pool[k])
            .collect()
    } else {
        let mut seen = HashSet::with_capacity(num_nontarget);
        let mut picked = Vec::with_capacity(num_nontarget);
        while picked.len() < num_nontarget {
            let i = rng.random_range(0..n);
            let j = rng.random_range(0..n);
            if data[i].speaker == data[j].speaker {
                continue;
            }
            let pair = (i.min(j), i.max(j));
            if seen.insert(pair) {
                picked.push(pair);
            }
        }
        picked
    };
    nontargets.sort_unstable();

    let make = |(i, j): (usize, usize), label| Trial {
        enroll_id: data[i].id.clone(),
        test_id: data[j].id.clone(),
        label,
    };
    Ok(targets
        .into_iter()
        .map(|p| make(p, TrialLabel::Target))
        .chain(nontargets.into_iter().map(|p| make(p, TrialLabel::Nontarget)))
        .collect())
}
