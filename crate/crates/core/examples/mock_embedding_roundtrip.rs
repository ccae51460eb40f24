//! Deterministic mock PLM embeddings written to and read back from disk.
//!
//! cargo run --example mock_embedding_roundtrip -- [dim] [seed]

use ses_adapter::data::{mock_embed, read_embedding_file, write_embedding, write_embedding_file};
use ses_adapter::vocab::{encode, StreamKind};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let dim: usize = args.first().map_or(Ok(8), |s| s.parse())?;
    let seed: u64 = args.get(1).map_or(Ok(0), |s| s.parse())?;

    let seq = encode("MKTAYIAKQR", StreamKind::AminoAcid)?;
    let emb = mock_embed(&seq, dim, seed);
    let dir = std::env::temp_dir().join("ses-mock-embed-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("P12345.emb");
    write_embedding_file(&path, &emb)?;
    let back = read_embedding_file(&path)?;

    println!("{} residues x {dim} dims, {} bytes at {}", back.rows(), std::fs::metadata(&path)?.len(), path.display());
    println!("row 0: {:?}", &back.row(0)[..dim.min(4)]);
    println!("identical after round trip: {}", write_embedding(&back) == std::fs::read(&path)?);
    // same residue, different position: different rows
    println!("K at 1 vs K at 7 equal: {}", back.row(1) == back.row(7));
    Ok(())
}
