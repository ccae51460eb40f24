//! Trains the adapter with both structural stages and the vanilla mean-pool
//! head on the synthetic helix task, then compares training loss at half of
//! the vanilla run's convergence step.
//!
//! cargo run --release --example structure_vs_vanilla -- [seed] [epochs] [lr]

use ses_adapter::config::RunConfig;
use ses_adapter::data::align_dataset;
use ses_adapter::synthetic::StructureTask;
use ses_adapter::trainer::train;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let seed: u64 = args.first().map_or(Ok(0), |s| s.parse())?;
    let epochs: usize = args.get(1).map_or(Ok(200), |s| s.parse())?;
    let lr: f64 = args.get(2).map_or(Ok(0.005), |s| s.parse())?;

    let task = StructureTask { seed, ..StructureTask::default() };
    let records = task.generate()?;

    let mut run = RunConfig {
        seed,
        heads: 2,
        learning_rate: lr,
        token_budget: 160,
        max_epochs: Some(epochs),
        patience: Some(epochs),
        monitor: Some("loss".into()),
        ..RunConfig::default()
    };

    let mut results = Vec::new();
    for (name, structural) in [("vanilla", false), ("fs+ss", true)] {
        run.use_foldseek = structural;
        run.use_dssp = structural;
        let data = align_dataset(records.clone(), &run.adapter(task.dim))?;
        let out = train(&run, &data, &data)?;
        let best = &out.log.epochs[out.log.best_epoch - 1];
        let first_perfect = out.log.epochs.iter().find(|e| e.valid.get("acc") == Some(1.0)).map(|e| e.epoch);
        println!(
            "{name:8} steps={} best_epoch={} convergence_step={} acc={:.3} loss={:.4} first_100%_epoch={:?}",
            out.log.steps.len(),
            out.log.best_epoch,
            out.log.convergence_step(),
            best.valid.get("acc").unwrap_or(f64::NAN),
            best.valid.get("loss").unwrap_or(f64::NAN),
            first_perfect,
        );
        results.push(out.log);
    }

    let half = results[0].convergence_step() / 2;
    let at = |log: &ses_adapter::trainer::TrainLog| log.steps[half.max(1) - 1].loss;
    println!("train loss at step {half}: vanilla={:.4} fs+ss={:.4}", at(&results[0]), at(&results[1]));
    Ok(())
}
