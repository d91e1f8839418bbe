//! Synthetic benchmark over several seeds: EER per pooling system, the
//! fusion rows, and the max vs mean-std probe contrast.
//!
//! cargo run --release --example pooling_benchmark -- [config.json] [num_seeds]

use std::path::Path;
use std::time::Instant;

use statpool::experiment::ExperimentConfig;
use statpool::probe::ProbeTask;

fn main() -> statpool::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let base = match args.first().filter(|a| a.ends_with(".json")) {
        Some(path) => ExperimentConfig::load(Path::new(path))?,
        None => ExperimentConfig {
            probe_tasks: vec![ProbeTask::SpeakerId, ProbeTask::WordPresence],
            probe_systems: Some(vec!["max".into(), "mean-std".into()]),
            ..ExperimentConfig::default()
        },
    };
    let seeds: u64 = args.iter().find_map(|a| a.parse().ok()).unwrap_or(5);
    for seed in 0..seeds {
        let cfg = ExperimentConfig { seed, ..base.clone() };
        let start = Instant::now();
        let out = statpool::experiment::run_in_memory(&cfg)?;
        println!("seed {seed} ({:.1}s)", start.elapsed().as_secs_f64());
        for r in out.table.systems.iter().chain(out.table.fusions.iter().map(|f| &f.result)) {
            println!("  {:<28} EER {:6.2}%  minDCF {:.4}", r.system, 100.0 * r.eer, r.min_dcf);
        }
        for p in &out.probes {
            println!(
                "  probe {:<9} {:<14} {:5.1}% (chance {:4.1}%)",
                p.pooling,
                p.task.name(),
                100.0 * p.accuracy,
                100.0 * p.chance
            );
        }
    }
    Ok(())
}
