//! Rotary scores depend only on the offset between query and key positions.
//!
//! cargo run --example rope_relative_position

use ses_adapter::matrix::dot;
use ses_adapter::rope::{rope_inner_oracle, rope_rotate, RopeConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = RopeConfig::with_dim(8)?;
    let q = [0.3, -1.0, 0.8, 0.2, -0.5, 0.9, 0.1, 0.4];
    let k = [1.1, 0.2, -0.3, 0.7, 0.6, -0.8, 0.5, 0.05];
    println!("{:>5} {:>5} {:>12} {:>12}", "m", "n", "rotated", "closed-form");
    for (m, n) in [(0, 0), (3, 1), (103, 101), (1003, 1001), (5, 9)] {
        let score = dot(&rope_rotate(&q, m, &cfg)?, &rope_rotate(&k, n, &cfg)?);
        let oracle = rope_inner_oracle(&q, &k, m as i64, n as i64, &cfg);
        println!("{m:>5} {n:>5} {score:>12.8} {oracle:>12.8}");
    }
    Ok(())
}
