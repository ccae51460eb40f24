//! Trains every stage/rope combination on the synthetic helix task and
//! reports best train-split accuracy and loss.
//!
//! cargo run --release --example ablation_table -- [seed] [epochs]

use ses_adapter::config::RunConfig;
use ses_adapter::data::align_dataset;
use ses_adapter::synthetic::StructureTask;
use ses_adapter::trainer::train;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let seed: u64 = args.first().map_or(Ok(0), |s| s.parse())?;
    let epochs: usize = args.get(1).map_or(Ok(60), |s| s.parse())?;
    let task = StructureTask { seed, ..StructureTask::default() };
    let records = task.generate()?;

    println!("{:>8} {:>5} {:>5} {:>6} {:>8} {:>10}", "foldseek", "dssp", "rope", "acc", "loss", "best_epoch");
    for (fs, ss, rope) in [
        (false, false, false),
        (false, false, true),
        (true, false, true),
        (false, true, true),
        (true, true, false),
        (true, true, true),
    ] {
        let run = RunConfig {
            seed,
            heads: 2,
            learning_rate: 0.005,
            token_budget: 160,
            max_epochs: Some(epochs),
            use_foldseek: fs,
            use_dssp: ss,
            use_rope: rope,
            ..RunConfig::default()
        };
        let data = align_dataset(records.clone(), &run.adapter(task.dim))?;
        let out = train(&run, &data, &data)?;
        let best = &out.log.epochs[out.log.best_epoch - 1].valid;
        println!(
            "{fs:>8} {ss:>5} {rope:>5} {:>6.3} {:>8.4} {:>10}",
            best.get("acc").unwrap_or(f64::NAN),
            best.get("loss").unwrap_or(f64::NAN),
            out.log.best_epoch
        );
    }
    Ok(())
}
