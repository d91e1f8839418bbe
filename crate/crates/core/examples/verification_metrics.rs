//! EER and minDCF of a Gaussian score model, plus a few points of the
//! threshold sweep.
//!
//! cargo run --release --example verification_metrics -- [separation]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use statpool::scoring::{self, DcfParams, ScoreSet, Trial, TrialLabel};

fn main() -> statpool::Result<()> {
    let separation: f64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(3.0);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let target = Normal::new(separation, 1.0).unwrap();
    let nontarget = Normal::new(0.0, 1.0).unwrap();
    let mut trials = Vec::new();
    let mut scores = Vec::new();
    for i in 0..4000 {
        let (label, s) = if i % 4 == 0 {
            (TrialLabel::Target, target.sample(&mut rng))
        } else {
            (TrialLabel::Nontarget, nontarget.sample(&mut rng))
        };
        trials.push(Trial {
            enroll_id: format!("e{i}"),
            test_id: format!("t{i}"),
            label,
        });
        scores.push(s);
    }
    let set = ScoreSet::new("gaussian", trials, scores)?;
    let points = scoring::sweep(&set)?;
    for p in points.iter().step_by(points.len() / 6) {
        println!("threshold {:>7.3}  FAR {:.4}  FRR {:.4}", p.threshold, p.far, p.frr);
    }
    println!("EER {:.3}%", 100.0 * scoring::eer(&set)?);
    for p_target in [0.01, 0.05] {
        let params = DcfParams { p_target, ..DcfParams::default() };
        println!("minDCF (p_target {p_target}) {:.4}", scoring::min_dcf(&set, &params)?);
    }
    Ok(())
}
