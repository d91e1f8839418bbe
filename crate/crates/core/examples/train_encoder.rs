//! Train a mean-std embedding network on a synthetic corpus, report the loss
//! curve and accuracy, and round-trip the checkpoint.
//!
//! cargo run --release --example train_encoder -- [pooling]

use statpool::encoder::{self, checkpoint, EncoderConfig, TrainOptions};
use statpool::pooling::PoolingConfig;
use statpool::synthdata::{self, SynthSpec};

fn main() -> statpool::Result<()> {
    let pooling = std::env::args().nth(1).unwrap_or_else(|| "mean-std".into());
    let spec = SynthSpec {
        num_speakers: 20,
        utts_per_speaker: 12,
        frames_per_utt: 200,
        ..SynthSpec::default()
    };
    let corpus = synthdata::generate(&spec)?;
    let mut train = Vec::new();
    let mut held = Vec::new();
    for u in &corpus.utterances {
        let item = (u.frames.clone(), u.speaker);
        if u.id.ends_with('0') { held.push(item) } else { train.push(item) }
    }
    let config = EncoderConfig {
        embed_dim: 64,
        seed: 3,
        ..EncoderConfig::new(spec.input_dim, PoolingConfig::parse(&pooling)?, spec.num_speakers)
    };
    let opts = TrainOptions {
        epochs: 15,
        segment_len: Some(100),
        ..TrainOptions::default()
    };
    let trained = encoder::train(&config, &train, &opts)?;
    for (e, loss) in trained.epoch_losses.iter().enumerate() {
        println!("epoch {:>2}  loss {loss:.4}", e + 1);
    }
    println!("{pooling}: train accuracy {:.3}", encoder::accuracy(&trained.model, &train)?);
    println!("{pooling}: held-out utterance accuracy {:.3}", encoder::accuracy(&trained.model, &held)?);

    let text = checkpoint::to_string(&trained.model)?;
    let back = checkpoint::from_str(&text)?;
    let same = held
        .iter()
        .all(|(x, _)| back.forward_embed(x).ok() == trained.model.forward_embed(x).ok());
    println!("checkpoint {} bytes, reload reproduces embeddings: {same}", text.len());
    Ok(())
}
