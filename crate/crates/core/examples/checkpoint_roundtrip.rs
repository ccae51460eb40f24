//! Saves initialized adapter weights and loads them back under a config.
//!
//! cargo run --example checkpoint_roundtrip

use ses_adapter::checkpoint;
use ses_adapter::{AdapterConfig, AdapterParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = AdapterConfig { heads: 4, ..AdapterConfig::new(32, 3) };
    let params = AdapterParams::init(&cfg, 7)?.quantized();
    let path = std::env::temp_dir().join("ses-checkpoint-example.bin");
    checkpoint::save(&path, &params)?;

    for (name, t) in params.named_tensors() {
        println!("{name:<16} {:?}", t.shape());
    }
    let loaded = checkpoint::load(&path, &cfg)?;
    println!("{} scalars, reload identical: {}", loaded.num_scalars(), loaded == params);

    let other = AdapterConfig { use_dssp: false, ..cfg };
    match checkpoint::load(&path, &other) {
        Ok(_) => println!("unexpectedly loaded under a different config"),
        Err(e) => println!("config without dssp stage: {e}"),
    }
    Ok(())
}
