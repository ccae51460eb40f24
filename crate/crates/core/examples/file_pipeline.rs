//! Writes synthetic train/valid/test split directories, then drives the
//! command line through inspect-data, train and eval.
//!
//! cargo run --release --example file_pipeline -- [out_dir]

use std::path::PathBuf;

use ses_adapter::cli;
use ses_adapter::synthetic::{write_split, StructureTask};

fn ses(args: &[&str]) -> Result<String, Box<dyn std::error::Error>> {
    let mut out = Vec::new();
    cli::run(std::iter::once("ses").chain(args.iter().copied()), &mut out)?;
    Ok(String::from_utf8(out)?)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root: PathBuf = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("ses-file-pipeline"), PathBuf::from);
    let records = StructureTask { records: 48, ..StructureTask::default() }.generate()?;
    write_split(&root.join("train"), &records[..32])?;
    write_split(&root.join("valid"), &records[32..40])?;
    write_split(&root.join("test"), &records[40..])?;
    let cfg = root.join("run.cfg");
    std::fs::write(
        &cfg,
        format!(
            "train_data = {0}/train\nvalid_data = {0}/valid\ntest_data = {0}/test\noutput_dir = {0}/runs\n\
             heads = 2\ntoken_budget = 160\nlearning_rate = 0.005\nmax_epochs = 40\npatience = 10\n",
            root.display()
        ),
    )?;
    let cfg = cfg.to_str().ok_or("non-UTF-8 path")?;

    print!("{}", ses(&["inspect-data", "--config", cfg])?);
    let trained = ses(&["train", "--config", cfg])?;
    print!("{trained}");
    let run_dir = trained.lines().next().and_then(|l| l.strip_prefix("run_dir=")).ok_or("no run_dir")?;
    let ckpt = format!("{run_dir}/checkpoint.bin");
    print!("{}", ses(&["eval", "--config", &format!("{run_dir}/run.cfg"), "--checkpoint", &ckpt, "--split", "test"])?);
    Ok(())
}
