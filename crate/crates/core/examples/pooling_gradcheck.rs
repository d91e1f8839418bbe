//! Analytic pooling gradients against central finite differences for every
//! single, pair and triple of statistics.
//!
//! cargo run --release --example pooling_gradcheck

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statpool::moments::FrameSequence;
use statpool::pooling::{self, PoolingConfig, Statistic};

fn main() -> statpool::Result<()> {
    let all = [Statistic::Max, Statistic::Mean, Statistic::Std, Statistic::Skew, Statistic::Kurt];
    let mut configs = Vec::new();
    for mask in 1u32..32 {
        if (1..=3).contains(&mask.count_ones()) {
            let stats = (0..5).filter(|i| mask & (1 << i) != 0).map(|i| all[i]).collect();
            configs.push(PoolingConfig::new(stats, 1e-6)?);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let h = 1e-5;
    for cfg in &configs {
        let x = FrameSequence::new(Array2::from_shape_fn((12, 3), |_| rng.random_range(-2.0..2.0)))?;
        let width = cfg.output_width(3);
        let upstream: Vec<f64> = (0..width).map(|_| rng.random_range(-1.0..1.0)).collect();
        let objective = |x: &FrameSequence| -> f64 {
            pooling::forward(cfg, x).iter().zip(&upstream).map(|(a, b)| a * b).sum()
        };
        let analytic = pooling::backward(cfg, &x, &upstream)?;
        let mut worst = 0.0f64;
        for t in 0..x.len() {
            for d in 0..x.dim() {
                let mut up = x.view().to_owned();
                up[[t, d]] += h;
                let mut down = x.view().to_owned();
                down[[t, d]] -= h;
                let numeric =
                    (objective(&FrameSequence::new(up)?) - objective(&FrameSequence::new(down)?)) / (2.0 * h);
                let a = analytic[[t, d]];
                worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6));
            }
        }
        println!("{:<16} max relative error {worst:.2e}", cfg.name());
    }
    Ok(())
}
