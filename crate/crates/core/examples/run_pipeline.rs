//! Run every pipeline stage into a results directory and print the report,
//! the same artifacts the `statpool run` command produces.
//!
//! cargo run --release --example run_pipeline -- [out_dir]

use std::path::PathBuf;

use statpool::experiment::{run_stage, ExperimentConfig, Stage};
use statpool::synthdata::SynthSpec;

fn main() -> statpool::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "run_pipeline_out".into()));
    let cfg = ExperimentConfig {
        synth: SynthSpec {
            num_speakers: 20,
            frames_per_utt: 300,
            ..ExperimentConfig::default().synth
        },
        systems: vec!["std".into(), "std-skew".into(), "mean-std".into()],
        fusions: vec![vec!["std".into(), "std-skew".into()]],
        out_dir: out.clone(),
        ..ExperimentConfig::default()
    };
    for stage in Stage::PIPELINE {
        run_stage(stage, &cfg, &out)?;
        println!("finished {stage}");
    }
    print!("{}", run_stage(Stage::Report, &cfg, &out)?.unwrap_or_default());
    Ok(())
}
