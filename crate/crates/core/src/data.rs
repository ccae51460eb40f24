//! Sequence, structure-token, label and embedding ingestion, plus token-budget
//! batching.

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use crate::adapter::{AdapterConfig, TaskType};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::Stream;
use crate::vocab::{encode, StreamKind, TokenSequence, PAD};

pub const EMBEDDING_MAGIC: &[u8; 7] = b"SESEMB1";

pub const SEQUENCES_FILE: &str = "sequences.fasta";
pub const FOLDSEEK_FILE: &str = "foldseek.fasta";
pub const DSSP_FILE: &str = "dssp.fasta";
pub const LABELS_FILE: &str = "labels.csv";

/// `(id, sequence)` pairs in file order. The id is the header up to the first
/// whitespace; wrapped sequence lines are joined.
pub fn parse_fasta(text: &str) -> Result<Vec<(String, String)>> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(header) = line.strip_prefix('>') {
            if let Some((id, seq)) = out.last() {
                if seq.is_empty() {
                    return Err(Error::Parse {
                        line: lineno + 1,
                        msg: format!("record {id} has an empty sequence"),
                    });
                }
            }
            let id = header.split_whitespace().next().unwrap_or("");
            if id.is_empty() {
                return Err(Error::Parse {
                    line: lineno + 1,
                    msg: "header without an id".into(),
                });
            }
            out.push((id.to_string(), String::new()));
        } else {
            match out.last_mut() {
                Some((_, seq)) => seq.push_str(line),
                None => {
                    return Err(Error::Parse {
                        line: lineno + 1,
                        msg: "sequence data before any '>' header".into(),
                    })
                }
            }
        }
    }
    if let Some((id, seq)) = out.last() {
        if seq.is_empty() {
            return Err(Error::Parse {
                line: text.lines().count(),
                msg: format!("record {id} has an empty sequence"),
            });
        }
    }
    Ok(out)
}

/// `SESEMB1 | u32 l | u32 d | l·d f32`, little-endian, row-major.
pub fn write_embedding(m: &Matrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(15 + 4 * m.len());
    out.extend(EMBEDDING_MAGIC);
    out.extend((m.rows() as u32).to_le_bytes());
    out.extend((m.cols() as u32).to_le_bytes());
    for &v in m.data() {
        out.extend((v as f32).to_le_bytes());
    }
    out
}

pub fn read_embedding(bytes: &[u8]) -> Result<Matrix> {
    if bytes.len() < 15 {
        return Err(Error::Format(format!("embedding header truncated ({} bytes)", bytes.len())));
    }
    if &bytes[..7] != EMBEDDING_MAGIC {
        return Err(Error::Format("bad embedding magic, expected SESEMB1".into()));
    }
    let l = u32::from_le_bytes(bytes[7..11].try_into().expect("4 bytes")) as usize;
    let d = u32::from_le_bytes(bytes[11..15].try_into().expect("4 bytes")) as usize;
    if l == 0 || d == 0 {
        return Err(Error::Format(format!("embedding has degenerate shape {l}x{d}")));
    }
    let payload = &bytes[15..];
    let expected = l.checked_mul(d).and_then(|n| n.checked_mul(4));
    if expected != Some(payload.len()) {
        return Err(Error::Format(format!(
            "embedding payload is {} bytes, header {l}x{d} needs {}",
            payload.len(),
            l * d * 4
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    Matrix::from_vec(l, d, data)
}

pub fn read_embedding_file(path: impl AsRef<Path>) -> Result<Matrix> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_embedding(&bytes).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

pub fn write_embedding_file(path: impl AsRef<Path>, m: &Matrix) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, write_embedding(m)).map_err(|e| Error::io(path, e))
}

/// Deterministic stand-in for a frozen PLM. Row `i` is
/// `(t[aa_i] + c[aa_i, i]) / √2` with `t` a per-token and `c` a per-(token,
/// position) standard-normal vector, so entries have unit variance and share a
/// token-identity component across positions.
pub fn mock_embed(aa: &TokenSequence, d: usize, seed: u64) -> Matrix {
    let token_stream = Stream::new(seed, "mock_embed.token");
    let context_stream = Stream::new(seed, "mock_embed.context");
    let mut m = Matrix::zeros(aa.len(), d);
    for (i, &tok) in aa.indices().iter().enumerate() {
        let t = token_stream.split(u64::from(tok));
        let c = context_stream.split(u64::from(tok)).split(i as u64);
        for (j, v) in m.row_mut(i).iter_mut().enumerate() {
            let j = j as u64;
            *v = ((t.normal(j) + c.normal(j)) * std::f64::consts::FRAC_1_SQRT_2) as f32 as f64;
        }
    }
    m
}

#[derive(Debug, Clone, PartialEq)]
pub enum Label {
    Class(usize),
    /// Indices of the positive labels.
    Multi(Vec<usize>),
    Real(f64),
}

impl Label {
    pub fn multi_hot(&self, num_labels: usize) -> Vec<f64> {
        let mut v = vec![0.0; num_labels];
        if let Label::Multi(ixs) = self {
            for &i in ixs {
                v[i] = 1.0;
            }
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProteinRecord {
    pub id: String,
    pub aa: TokenSequence,
    pub foldseek: Option<TokenSequence>,
    pub dssp: Option<TokenSequence>,
    pub embedding: Matrix,
    pub label: Label,
}

impl ProteinRecord {
    pub fn len(&self) -> usize {
        self.aa.len()
    }

    pub fn is_empty(&self) -> bool {
        self.aa.is_empty()
    }
}

/// Records whose streams and labels have been checked against a configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<ProteinRecord>,
}

impl Dataset {
    pub fn records(&self) -> &[ProteinRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn into_records(self) -> Vec<ProteinRecord> {
        self.records
    }
}

/// Checks lengths, stream presence, label ranges and id uniqueness, reporting
/// every offending record.
pub fn align_dataset(records: Vec<ProteinRecord>, cfg: &AdapterConfig) -> Result<Dataset> {
    let mut config_errors = Vec::new();
    let mut problems = Vec::new();
    let mut seen = HashSet::new();
    for r in &records {
        if !seen.insert(r.id.as_str()) {
            problems.push(format!("{}: duplicate id", r.id));
        }
        let l = r.aa.len();
        if r.embedding.rows() != l {
            problems.push(format!(
                "{}: embedding has {} rows, expected {l} (aa length)",
                r.id,
                r.embedding.rows()
            ));
        }
        if r.embedding.cols() != cfg.dim {
            problems.push(format!(
                "{}: embedding dim {}, expected {}",
                r.id,
                r.embedding.cols(),
                cfg.dim
            ));
        }
        for (stream, required, name) in [
            (&r.foldseek, cfg.use_foldseek, "foldseek"),
            (&r.dssp, cfg.use_dssp, "dssp"),
        ] {
            match stream {
                Some(s) if s.len() != l => problems.push(format!(
                    "{}: {name} length {}, expected {l} (aa length)",
                    r.id,
                    s.len()
                )),
                None if required => {
                    config_errors.push(format!("{}: {name} stream required but missing", r.id))
                }
                _ => {}
            }
        }
        let label_ok = match (&r.label, cfg.task_type) {
            (Label::Class(c), TaskType::SingleLabel) => *c < cfg.num_labels,
            (Label::Multi(ixs), TaskType::MultiLabel) => ixs.iter().all(|&i| i < cfg.num_labels),
            (Label::Real(v), TaskType::Regression) => v.is_finite(),
            _ => false,
        };
        if !label_ok {
            problems.push(format!(
                "{}: label {:?} invalid for {} task with {} labels",
                r.id, r.label, cfg.task_type, cfg.num_labels
            ));
        }
    }
    if !config_errors.is_empty() {
        return Err(Error::Config(config_errors.join("; ")));
    }
    if !problems.is_empty() {
        return Err(Error::Alignment(problems));
    }
    Ok(Dataset { records })
}

/// Labels file: a header row, then `id,label`. Multi-label values are
/// `;`-separated positive indices (possibly empty); regression values are reals.
pub fn parse_labels(text: &str, task: TaskType) -> Result<Vec<(String, Label)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::Parse { line, msg: e.to_string() })?;
        if row.len() != 2 {
            return Err(Error::Parse {
                line,
                msg: format!("expected 2 columns (id, label), found {}", row.len()),
            });
        }
        let (id, value) = (&row[0], &row[1]);
        let bad = |what: &str| Error::Parse {
            line,
            msg: format!("{id}: cannot parse {value:?} as {what}"),
        };
        let label = match task {
            TaskType::SingleLabel => Label::Class(value.parse().map_err(|_| bad("class index"))?),
            TaskType::Regression => Label::Real(value.parse().map_err(|_| bad("real value"))?),
            TaskType::MultiLabel => Label::Multi(
                value
                    .split(';')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse().map_err(|_| bad("label index list")))
                    .collect::<Result<_>>()?,
            ),
        };
        out.push((id.to_string(), label));
    }
    Ok(out)
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn read_stream_file(path: &Path, kind: StreamKind) -> Result<HashMap<String, TokenSequence>> {
    parse_fasta(&read_text(path)?)?
        .into_iter()
        .map(|(id, s)| Ok((id, encode(&s, kind)?)))
        .collect()
}

/// Where one split's files live.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitPaths {
    pub dir: PathBuf,
    pub embeddings_dir: PathBuf,
}

impl SplitPaths {
    pub fn embedding_path(&self, id: &str) -> PathBuf {
        self.embeddings_dir.join(format!("{id}.emb"))
    }
}

/// Reads `sequences.fasta`, `labels.csv`, the optional `foldseek.fasta` and
/// `dssp.fasta`, and one `<id>.emb` per sequence, then aligns them.
pub fn load_split(paths: &SplitPaths, cfg: &AdapterConfig) -> Result<Dataset> {
    let seqs = parse_fasta(&read_text(&paths.dir.join(SEQUENCES_FILE))?)?;
    let mut labels: HashMap<String, Label> =
        parse_labels(&read_text(&paths.dir.join(LABELS_FILE))?, cfg.task_type)?
            .into_iter()
            .collect();

    let optional = |name: &str, kind| {
        let p = paths.dir.join(name);
        if p.exists() {
            read_stream_file(&p, kind).map(Some)
        } else {
            Ok(None)
        }
    };
    let mut fs = optional(FOLDSEEK_FILE, StreamKind::Foldseek3Di)?;
    let mut ss = optional(DSSP_FILE, StreamKind::DsspSs8)?;

    let mut records = Vec::with_capacity(seqs.len());
    let mut missing = Vec::new();
    for (id, seq) in seqs {
        let Some(label) = labels.remove(&id) else {
            missing.push(format!("{id}: no label"));
            continue;
        };
        let embedding = read_embedding_file(paths.embedding_path(&id))?;
        records.push(ProteinRecord {
            aa: encode(&seq, StreamKind::AminoAcid)?,
            foldseek: fs.as_mut().and_then(|m| m.remove(&id)),
            dssp: ss.as_mut().and_then(|m| m.remove(&id)),
            embedding,
            label,
            id,
        });
    }
    if !missing.is_empty() {
        return Err(Error::Alignment(missing));
    }
    align_dataset(records, cfg)
}

/// Groups record indices so that `count × max_len <= budget` in each group.
/// Records are taken longest first and packed greedily; group order is then
/// shuffled by `stream`.
pub fn plan_batches(lengths: &[usize], budget: usize, stream: Stream) -> Result<Vec<Vec<usize>>> {
    let mut order: Vec<usize> = (0..lengths.len()).collect();
    order.sort_by(|&a, &b| lengths[b].cmp(&lengths[a]).then(a.cmp(&b)));
    let mut batches: Vec<Vec<usize>> = Vec::new();
    let mut current: Vec<usize> = Vec::new();
    let mut current_max = 0;
    for ix in order {
        let len = lengths[ix];
        if len > budget {
            return Err(Error::OverLength {
                id: format!("#{ix}"),
                len,
                budget,
            });
        }
        let max = current_max.max(len);
        if !current.is_empty() && (current.len() + 1) * max > budget {
            batches.push(std::mem::take(&mut current));
            current_max = 0;
        }
        current_max = current_max.max(len);
        current.push(ix);
    }
    if !current.is_empty() {
        batches.push(current);
    }
    stream.shuffle(&mut batches);
    Ok(batches)
}

/// A padded group of records.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    /// Indices into the dataset.
    pub records: Vec<usize>,
    pub max_len: usize,
    pub valid: Vec<usize>,
    /// `max_len × d` embeddings, zero rows past `valid`.
    pub embeddings: Vec<Matrix>,
    pub aa: Vec<Vec<u32>>,
    pub foldseek: Option<Vec<Vec<u32>>>,
    pub dssp: Option<Vec<Vec<u32>>>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn tokens(&self) -> usize {
        self.records.len() * self.max_len
    }
}

fn pad_embedding(m: &Matrix, len: usize) -> Matrix {
    let mut out = Matrix::zeros(len, m.cols());
    out.data_mut()[..m.len()].copy_from_slice(m.data());
    out
}

fn pad_stream(records: &[&ProteinRecord], len: usize, pick: impl Fn(&ProteinRecord) -> Option<&TokenSequence>) -> Option<Vec<Vec<u32>>> {
    records
        .iter()
        .map(|r| pick(r).map(|s| s.padded(len)))
        .collect()
}

pub fn make_batches(records: &[ProteinRecord], token_budget: usize, stream: Stream) -> Result<Vec<Batch>> {
    if let Some(r) = records.iter().find(|r| r.len() > token_budget) {
        return Err(Error::OverLength {
            id: r.id.clone(),
            len: r.len(),
            budget: token_budget,
        });
    }
    let lengths: Vec<usize> = records.iter().map(ProteinRecord::len).collect();
    let plan = plan_batches(&lengths, token_budget, stream)?;
    Ok(plan
        .into_iter()
        .map(|ixs| {
            let rs: Vec<&ProteinRecord> = ixs.iter().map(|&i| &records[i]).collect();
            let max_len = rs.iter().map(|r| r.len()).max().unwrap_or(0);
            Batch {
                valid: rs.iter().map(|r| r.len()).collect(),
                embeddings: rs.iter().map(|r| pad_embedding(&r.embedding, max_len)).collect(),
                aa: rs.iter().map(|r| r.aa.padded(max_len)).collect(),
                foldseek: pad_stream(&rs, max_len, |r| r.foldseek.as_ref()),
                dssp: pad_stream(&rs, max_len, |r| r.dssp.as_ref()),
                records: ixs,
                max_len,
            }
        })
        .collect())
}

/// Padding token check used by tests and `inspect-data`.
pub fn is_tail_padded(tokens: &[u32], valid: usize) -> bool {
    tokens[..valid].iter().all(|&t| t != PAD) && tokens[valid..].iter().all(|&t| t == PAD)
}
