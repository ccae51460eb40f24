//! A small structure-separable classification task for desk-scale checks.
//!
//! Each protein's binary label is `1` exactly when more than half of its SS8
//! positions are helix (`H`). Amino acids are drawn independently of
//! structure, so the mock PLM embedding carries no label signal and only the
//! structural stages can recover it. The 3Di stream loosely tracks SS8.

use std::fmt::Write as _;
use std::path::Path;

use crate::data::{self, mock_embed, Label, ProteinRecord};
use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::vocab::{encode, StreamKind};

const AMINO_ACIDS: &[u8] = b"ACDEFGHIKLMNPQRSTVWY";
const THREE_DI: &[u8] = b"ACDEFGHIKLMNPQRSTVWY";
const SS8_NON_HELIX: &[u8] = b"BEGITSC";

#[derive(Debug, Clone, Copy)]
pub struct StructureTask {
    pub records: usize,
    pub dim: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for StructureTask {
    fn default() -> Self {
        StructureTask {
            records: 32,
            dim: 16,
            min_len: 12,
            max_len: 20,
            seed: 0,
        }
    }
}

/// Number of `H` symbols in an SS8 string.
pub fn helix_count(ss: &str) -> usize {
    ss.bytes().filter(|&b| b == b'H').count()
}

pub fn helix_label(ss: &str) -> usize {
    usize::from(2 * helix_count(ss) > ss.len())
}

impl StructureTask {
    pub fn generate(&self) -> Result<Vec<ProteinRecord>> {
        let root = Stream::new(self.seed, "synthetic");
        let mut out = Vec::with_capacity(self.records);
        for i in 0..self.records {
            let s = root.split(i as u64);
            let span = (self.max_len - self.min_len + 1) as u64;
            let l = self.min_len + (s.word(0) % span) as usize;
            let positive = i % 2 == 0;
            // helix fraction in [0.65, 0.9] or [0.1, 0.35]
            let frac = 0.1 + 0.25 * s.uniform(1) + if positive { 0.55 } else { 0.0 };
            let mut helices = ((frac * l as f64).round() as usize).clamp(0, l);
            if positive && 2 * helices <= l {
                helices = l / 2 + 1;
            }
            if !positive && 2 * helices > l {
                helices = l / 2;
            }
            let mut is_helix: Vec<bool> = (0..l).map(|p| p < helices).collect();
            s.split(2).shuffle(&mut is_helix);

            let pick = |alphabet: &[u8], stream: Stream, idx: u64| {
                alphabet[(stream.word(idx) % alphabet.len() as u64) as usize] as char
            };
            let (ss_s, fs_s, aa_s) = (s.split(3), s.split(4), s.split(5));
            let mut ss = String::with_capacity(l);
            let mut fs = String::with_capacity(l);
            let mut aa = String::with_capacity(l);
            for (p, &h) in is_helix.iter().enumerate() {
                let p = p as u64;
                ss.push(if h { 'H' } else { pick(SS8_NON_HELIX, ss_s, p) });
                let (helix_half, other_half) = THREE_DI.split_at(THREE_DI.len() / 2);
                let tracks = fs_s.uniform(2 * p) < 0.8;
                let half = if h == tracks { helix_half } else { other_half };
                fs.push(pick(half, fs_s, 2 * p + 1));
                aa.push(pick(AMINO_ACIDS, aa_s, p));
            }
            debug_assert_eq!(helix_label(&ss), usize::from(positive));

            let aa_seq = encode(&aa, StreamKind::AminoAcid)?;
            out.push(ProteinRecord {
                id: format!("syn{i:03}"),
                embedding: mock_embed(&aa_seq, self.dim, self.seed),
                aa: aa_seq,
                foldseek: Some(encode(&fs.to_lowercase(), StreamKind::Foldseek3Di)?),
                dssp: Some(encode(&ss, StreamKind::DsspSs8)?),
                label: Label::Class(helix_label(&ss)),
            });
        }
        Ok(out)
    }
}

fn fasta<'a>(records: impl Iterator<Item = (&'a str, String)>) -> String {
    let mut s = String::new();
    for (id, seq) in records {
        let _ = writeln!(s, ">{id}\n{seq}");
    }
    s
}

/// Writes a split directory in the layout [`data::load_split`] reads, with
/// embeddings under `<dir>/embeddings`.
pub fn write_split(dir: &Path, records: &[ProteinRecord]) -> Result<()> {
    let emb_dir = dir.join("embeddings");
    std::fs::create_dir_all(&emb_dir).map_err(|e| Error::io(&emb_dir, e))?;
    let write = |name: &str, body: String| {
        let p = dir.join(name);
        std::fs::write(&p, body).map_err(|e| Error::io(&p, e))
    };
    write(data::SEQUENCES_FILE, fasta(records.iter().map(|r| (r.id.as_str(), r.aa.to_text()))))?;
    write(
        data::FOLDSEEK_FILE,
        fasta(records.iter().filter_map(|r| r.foldseek.as_ref().map(|s| (r.id.as_str(), s.to_text().to_lowercase())))),
    )?;
    write(
        data::DSSP_FILE,
        fasta(records.iter().filter_map(|r| r.dssp.as_ref().map(|s| (r.id.as_str(), s.to_text())))),
    )?;
    let mut labels = String::from("id,label\n");
    for r in records {
        let value = match &r.label {
            Label::Class(c) => c.to_string(),
            Label::Real(v) => v.to_string(),
            Label::Multi(ixs) => ixs.iter().map(usize::to_string).collect::<Vec<_>>().join(";"),
        };
        let _ = writeln!(labels, "{},{value}", r.id);
    }
    write(data::LABELS_FILE, labels)?;
    for r in records {
        data::write_embedding_file(emb_dir.join(format!("{}.emb", r.id)), &r.embedding)?;
    }
    Ok(())
}
