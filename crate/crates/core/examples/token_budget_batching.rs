//! Packs variable-length records so that count × longest ≤ budget.
//!
//! cargo run --example token_budget_batching -- [budget] [seed]

use ses_adapter::data::plan_batches;
use ses_adapter::rng::Stream;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let budget: usize = args.first().map_or(Ok(1000), |s| s.parse())?;
    let seed: u64 = args.get(1).map_or(Ok(0), |s| s.parse())?;
    let lengths_stream = Stream::new(seed, "example-lengths");
    let lengths: Vec<usize> = (0..40).map(|i| 30 + (lengths_stream.word(i) % 470) as usize).collect();

    let batches = plan_batches(&lengths, budget, Stream::new(seed, "batches").split(1))?;
    let (mut real, mut padded) = (0, 0);
    for (i, b) in batches.iter().enumerate() {
        let max = b.iter().map(|&r| lengths[r]).max().unwrap_or(0);
        real += b.iter().map(|&r| lengths[r]).sum::<usize>();
        padded += b.len() * max;
        println!("batch {i:>2}: {:>2} records x {max:>3} = {:>4} tokens", b.len(), b.len() * max);
    }
    println!("{} records in {} batches, padding {:.1}%", lengths.len(), batches.len(), 100.0 * (1.0 - real as f64 / padded as f64));
    Ok(())
}
