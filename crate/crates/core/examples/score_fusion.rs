//! Equal-weight score fusion of two systems whose errors are partly
//! independent.
//!
//! cargo run --release --example score_fusion

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use statpool::scoring::{self, DcfParams, ScoreSet, Trial, TrialLabel};

fn main() -> statpool::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut trials = Vec::new();
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for i in 0..3000 {
        let target = i % 3 == 0;
        trials.push(Trial {
            enroll_id: format!("e{i}"),
            test_id: format!("t{i}"),
            label: if target { TrialLabel::Target } else { TrialLabel::Nontarget },
        });
        let truth = if target { 2.5 } else { 0.0 };
        let shared: f64 = StandardNormal.sample(&mut rng);
        let na: f64 = StandardNormal.sample(&mut rng);
        let nb: f64 = StandardNormal.sample(&mut rng);
        a.push(truth + 0.6 * shared + 0.8 * na);
        b.push(truth + 0.6 * shared + 0.9 * nb);
    }
    let sa = ScoreSet::new("mean-std", trials.clone(), a)?;
    let sb = ScoreSet::new("mean-std-skew", trials, b)?;
    let fused = scoring::fuse(&[sa.clone(), sb.clone()])?;
    let dcf = DcfParams::default();
    for s in [&sa, &sb, &fused] {
        println!(
            "{:<28} EER {:5.2}%  minDCF {:.4}",
            s.name,
            100.0 * scoring::eer(s)?,
            scoring::min_dcf(s, &dcf)?
        );
    }
    Ok(())
}
