//! Shared 28-symbol vocabulary for amino-acid, 3Di and SS8 streams.

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const VOCAB_SIZE: usize = 28;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamKind {
    AminoAcid,
    Foldseek3Di,
    DsspSs8,
}

impl StreamKind {
    pub fn name(self) -> &'static str {
        match self {
            StreamKind::AminoAcid => "aa",
            StreamKind::Foldseek3Di => "foldseek",
            StreamKind::DsspSs8 => "dssp",
        }
    }
}

/// The fixed table: 0 = PAD, 1 = UNK, 2..=27 = `A`..=`Z`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Vocabulary;

impl Vocabulary {
    pub fn index_of(self, ch: char) -> u32 {
        let up = ch.to_ascii_uppercase();
        if up.is_ascii_uppercase() {
            2 + (up as u32 - 'A' as u32)
        } else {
            UNK
        }
    }

    pub fn symbol(self, index: u32) -> Option<char> {
        match index {
            2..=27 => char::from_u32('A' as u32 + index - 2),
            _ => None,
        }
    }

    pub fn size(self) -> usize {
        VOCAB_SIZE
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    kind: StreamKind,
    indices: Vec<u32>,
}

impl TokenSequence {
    pub fn kind(&self) -> StreamKind {
        self.kind
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Text form; UNK renders as `X`.
    pub fn to_text(&self) -> String {
        self.indices
            .iter()
            .map(|&i| Vocabulary.symbol(i).unwrap_or('X'))
            .collect()
    }

    /// `len × 28` one-hot encoding.
    pub fn one_hot(&self) -> Matrix {
        let mut m = Matrix::zeros(self.len(), VOCAB_SIZE);
        for (r, &ix) in self.indices.iter().enumerate() {
            m.set(r, ix as usize, 1.0);
        }
        m
    }

    /// Copy padded with PAD up to `len`.
    pub fn padded(&self, len: usize) -> Vec<u32> {
        let mut v = self.indices.clone();
        v.resize(len.max(v.len()), PAD);
        v
    }
}

pub fn encode(text: &str, kind: StreamKind) -> Result<TokenSequence> {
    if text.is_empty() {
        return Err(Error::EmptySequence(format!("empty {} string", kind.name())));
    }
    Ok(TokenSequence {
        kind,
        indices: text.chars().map(|c| Vocabulary.index_of(c)).collect(),
    })
}

/// Row gather from a `28 × d` table.
pub fn embed_lookup(seq: &TokenSequence, table: &Matrix) -> Result<Matrix> {
    let mut out = Matrix::zeros(seq.len(), table.cols());
    for (r, &ix) in seq.indices().iter().enumerate() {
        if ix as usize >= table.rows() {
            return Err(Error::Corrupt(format!(
                "token index {ix} outside embedding table of {} rows",
                table.rows()
            )));
        }
        out.row_mut(r).copy_from_slice(table.row(ix as usize));
    }
    Ok(out)
}
