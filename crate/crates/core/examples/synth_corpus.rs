//! Generate a small synthetic corpus, summarize its labels and write the
//! text files.
//!
//! cargo run --release --example synth_corpus -- [out_dir]

use std::path::PathBuf;

use statpool::synthdata::{self, SynthSpec};

fn main() -> statpool::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "synth_corpus_out".into()));
    let spec = SynthSpec {
        num_speakers: 12,
        utts_per_speaker: 6,
        frames_per_utt: 200,
        ..SynthSpec::default()
    };
    let corpus = synthdata::generate(&spec)?;
    let n = corpus.utterances.len();
    let females = corpus.speakers.iter().filter(|s| s.gender == 1).count();
    println!("{} speakers ({females} with gender 1), {n} utterances", corpus.speakers.len());
    for u in corpus.utterances.iter().take(6) {
        let words: Vec<String> = u.words.iter().map(|w| w.to_string()).collect();
        println!(
            "  {} speaker {:>2} nuisance {} rate {} frames {:>3} words [{}]",
            u.id,
            u.speaker,
            u.nuisance,
            u.rate,
            u.frames.len(),
            words.join(" ")
        );
    }
    let trials = synthdata::build_trials(&corpus.utterances, 50, 100, 1)?;
    println!("{} trials, first: {:?}", trials.len(), trials[0]);
    synthdata::write_corpus(&out.join("corpus.txt"), &corpus.utterances)?;
    synthdata::write_speakers(&out.join("speakers.txt"), &corpus.speakers)?;
    statpool::scoring::write_trials(&out.join("trials.txt"), &trials)?;
    println!("wrote {}", out.display());
    Ok(())
}
