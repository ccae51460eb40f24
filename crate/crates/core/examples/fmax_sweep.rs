//! Protein-centric precision, recall and F across the threshold grid.
//!
//! cargo run --example fmax_sweep

use ses_adapter::metrics::{f_at_threshold, fmax};
use ses_adapter::Matrix;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scores = Matrix::from_rows(&[[0.92, 0.15, 0.40], [0.55, 0.71, 0.08], [0.30, 0.35, 0.88], [0.05, 0.10, 0.20]]);
    let truth = Matrix::from_rows(&[[1.0, 0.0, 1.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 1.0, 0.0]]);
    println!("{:>5} {:>9} {:>7} {:>7}", "t", "precision", "recall", "F");
    for k in (0..=100).step_by(10) {
        let t = k as f64 / 100.0;
        let (p, r, f) = f_at_threshold(&scores, &truth, t);
        println!("{t:>5.2} {p:>9.4} {r:>7.4} {f:>7.4}");
    }
    println!("Fmax = {:.4}", fmax(&scores, &truth)?);
    Ok(())
}
