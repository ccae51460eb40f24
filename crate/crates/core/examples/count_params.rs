//! Trainable parameter counts for the reference embedding widths.
//!
//! cargo run --example count_params -- [num_labels]

use ses_adapter::{count_parameters, AdapterConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let labels: usize = std::env::args().nth(1).map_or(Ok(2), |s| s.parse())?;
    println!("{:>6} {:>8} {:>6} {:>12}", "dim", "foldseek", "dssp", "params");
    for dim in [320, 480, 640, 1024, 1280] {
        for (fs, ss) in [(true, true), (true, false), (false, true), (false, false)] {
            let cfg = AdapterConfig { use_foldseek: fs, use_dssp: ss, ..AdapterConfig::new(dim, labels) };
            println!("{dim:>6} {fs:>8} {ss:>6} {:>12}", count_parameters(&cfg));
        }
    }
    Ok(())
}
