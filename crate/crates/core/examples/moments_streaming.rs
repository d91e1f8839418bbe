//! Batch pooled statistics versus a streaming accumulator fed in two chunks
//! and merged.
//!
//! cargo run --release --example moments_streaming

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statpool::moments::{pooled_stats, FrameSequence, MomentAccumulator, DEFAULT_EPS};

fn main() -> statpool::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    // a skewed (exponential-like) sequence in dimension 0, uniform in dimension 1
    let rows: Vec<Vec<f64>> = (0..20_000)
        .map(|_| {
            let u: f64 = rng.random();
            vec![-u.ln(), rng.random_range(-1.0..1.0)]
        })
        .collect();
    let x = FrameSequence::from_rows(&rows)?;
    let batch = pooled_stats(&x, DEFAULT_EPS);

    let mut head = MomentAccumulator::new(2);
    let mut tail = MomentAccumulator::new(2);
    for (i, r) in rows.iter().enumerate() {
        if i < 8_000 { head.accumulate(r)? } else { tail.accumulate(r)? }
    }
    let merged = head.merge(&tail)?.finalize(DEFAULT_EPS)?;

    println!("{:<6} {:>12} {:>12} {:>12} {:>12}", "stat", "batch d0", "merged d0", "batch d1", "merged d1");
    let rows = [
        ("max", &batch.max, &merged.max),
        ("mean", &batch.mean, &merged.mean),
        ("std", &batch.std, &merged.std),
        ("skew", &batch.skew, &merged.skew),
        ("kurt", &batch.kurt, &merged.kurt),
    ];
    for (name, b, m) in rows {
        println!("{name:<6} {:>12.6} {:>12.6} {:>12.6} {:>12.6}", b[0], m[0], b[1], m[1]);
    }
    println!("(exponential: skew 2, kurt 9; uniform: skew 0, kurt 1.8)");
    Ok(())
}
