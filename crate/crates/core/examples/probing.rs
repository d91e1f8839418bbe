//! What do embeddings reveal beyond speaker identity? Trains max and mean-std
//! encoders on part of a synthetic corpus and probes the held-out embeddings
//! for every meta-information task.
//!
//! cargo run --release --example probing

use statpool::experiment::{embed_eval, prepare, train_system, ExperimentConfig};
use statpool::probe::{self, ProbeTask};
use statpool::synthdata::SynthSpec;

fn main() -> statpool::Result<()> {
    let cfg = ExperimentConfig {
        synth: SynthSpec {
            num_speakers: 30,
            frames_per_utt: 400,
            ..ExperimentConfig::default().synth
        },
        systems: vec!["max".into(), "mean-std".into()],
        fusions: vec![],
        ..ExperimentConfig::default()
    };
    let prep = prepare(&cfg)?;
    let mut systems = Vec::new();
    for name in &cfg.systems {
        let model = train_system(&cfg, &prep, name)?;
        systems.push((name.clone(), embed_eval(&model, &prep.eval)?));
    }
    let reports = probe::run_matrix(
        &prep.eval,
        &systems,
        &ProbeTask::ALL,
        cfg.synth.lexicon_size,
        &cfg.probe_config(),
    )?;
    println!("{:<9} {:<14} {:>8} {:>8}", "pooling", "task", "acc", "chance");
    for r in &reports {
        println!("{:<9} {:<14} {:>7.1}% {:>7.1}%", r.pooling, r.task.name(), 100.0 * r.accuracy, 100.0 * r.chance);
    }
    Ok(())
}
