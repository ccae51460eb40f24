//! The structure-aware fusion adapter.
//!
//! A frozen per-residue PLM embedding `R0` (l×d) is refined by up to two
//! cross-modal attention stages. Each stage embeds a structural token stream
//! as the query and attends over the current representation as key and value:
//!
//! ```text
//! R1 = stage_fs(query = emb_fs(3Di), kv = R0)      if use_foldseek, else R0
//! R2 = stage_ss(query = emb_ss(SS8), kv = R1)      if use_dssp,     else R1
//! logits = W2 · gelu(dropout(W1 · mean(R2) + b1)) + b2
//! ```
//!
//! With both stages off the model is the plain mean-pooling head over the PLM.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::Stream;
use crate::rope::{RopeConfig, DEFAULT_BASE};
use crate::tape::{Gradients, Mode, NodeId, Tape};
use crate::vocab::VOCAB_SIZE;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TaskType {
    SingleLabel,
    MultiLabel,
    Regression,
}

impl TaskType {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskType::SingleLabel => "single_label",
            TaskType::MultiLabel => "multi_label",
            TaskType::Regression => "regression",
        }
    }
}

impl fmt::Display for TaskType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single_label" => Ok(TaskType::SingleLabel),
            "multi_label" => Ok(TaskType::MultiLabel),
            "regression" => Ok(TaskType::Regression),
            other => Err(Error::Config(format!("unknown task type {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdapterConfig {
    pub dim: usize,
    pub heads: usize,
    pub use_foldseek: bool,
    pub use_dssp: bool,
    pub use_rope: bool,
    pub dropout: f64,
    pub num_labels: usize,
    pub task_type: TaskType,
    pub rope_base: f64,
}

impl AdapterConfig {
    pub fn new(dim: usize, num_labels: usize) -> Self {
        AdapterConfig {
            dim,
            heads: 8,
            use_foldseek: true,
            use_dssp: true,
            use_rope: true,
            dropout: 0.1,
            num_labels,
            task_type: TaskType::SingleLabel,
            rope_base: DEFAULT_BASE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || !self.dim.is_multiple_of(2) {
            return Err(Error::Config(format!("embedding dim {} must be even", self.dim)));
        }
        if self.heads == 0 || !self.dim.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "{} heads do not divide embedding dim {}",
                self.heads, self.dim
            )));
        }
        if self.use_rope && !(self.dim / self.heads).is_multiple_of(2) && self.any_stage() {
            return Err(Error::Config(format!(
                "per-head width {} must be even for rotary embedding",
                self.dim / self.heads
            )));
        }
        if self.num_labels == 0 {
            return Err(Error::Config("num_labels must be at least 1".into()));
        }
        if self.task_type == TaskType::Regression && self.num_labels != 1 {
            return Err(Error::Config("regression tasks use exactly one output".into()));
        }
        if self.task_type == TaskType::SingleLabel && self.num_labels < 2 {
            return Err(Error::Config("single-label tasks need at least two classes".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    pub fn any_stage(&self) -> bool {
        self.use_foldseek || self.use_dssp
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }
}

/// Trainable scalars for a configuration: per enabled stage `4(d²+d) + 28d`,
/// plus the head's `d²+d + dC + C`. The PLM contributes nothing.
pub fn count_parameters(cfg: &AdapterConfig) -> usize {
    let d = cfg.dim;
    let stage = 4 * (d * d + d) + VOCAB_SIZE * d;
    let stages = usize::from(cfg.use_foldseek) + usize::from(cfg.use_dssp);
    let head = d * d + d + d * cfg.num_labels + cfg.num_labels;
    stages * stage + head
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageParams {
    pub wq: Matrix,
    pub wk: Matrix,
    pub wv: Matrix,
    pub wo: Matrix,
    pub bq: Matrix,
    pub bk: Matrix,
    pub bv: Matrix,
    pub bo: Matrix,
    pub emb: Matrix,
}

pub const STAGE_TENSORS: [&str; 9] = ["wq", "wk", "wv", "wo", "bq", "bk", "bv", "bo", "emb"];
pub const HEAD_TENSORS: [&str; 4] = ["w1", "b1", "w2", "b2"];

fn uniform_init(rows: usize, cols: usize, bound: f64, stream: Stream) -> Matrix {
    let mut m = Matrix::zeros(rows, cols);
    for (i, v) in m.data_mut().iter_mut().enumerate() {
        *v = (2.0 * stream.uniform(i as u64) - 1.0) * bound;
    }
    m
}

impl StageParams {
    pub fn init(d: usize, seed: u64, prefix: &str) -> Self {
        let bound = 1.0 / (d as f64).sqrt();
        let w = |name: &str| uniform_init(d, d, bound, Stream::new(seed, &format!("init.{prefix}.{name}")));
        StageParams {
            wq: w("wq"),
            wk: w("wk"),
            wv: w("wv"),
            wo: w("wo"),
            bq: Matrix::zeros(1, d),
            bk: Matrix::zeros(1, d),
            bv: Matrix::zeros(1, d),
            bo: Matrix::zeros(1, d),
            emb: uniform_init(VOCAB_SIZE, d, bound, Stream::new(seed, &format!("init.{prefix}.emb"))),
        }
    }

    fn tensors(&self) -> [&Matrix; 9] {
        [&self.wq, &self.wk, &self.wv, &self.wo, &self.bq, &self.bk, &self.bv, &self.bo, &self.emb]
    }

    fn tensors_mut(&mut self) -> [&mut Matrix; 9] {
        [
            &mut self.wq,
            &mut self.wk,
            &mut self.wv,
            &mut self.wo,
            &mut self.bq,
            &mut self.bk,
            &mut self.bv,
            &mut self.bo,
            &mut self.emb,
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub w1: Matrix,
    pub b1: Matrix,
    pub w2: Matrix,
    pub b2: Matrix,
}

impl HeadParams {
    pub fn init(d: usize, num_labels: usize, seed: u64) -> Self {
        let bound = 1.0 / (d as f64).sqrt();
        HeadParams {
            w1: uniform_init(d, d, bound, Stream::new(seed, "init.head.w1")),
            b1: Matrix::zeros(1, d),
            w2: uniform_init(d, num_labels, bound, Stream::new(seed, "init.head.w2")),
            b2: Matrix::zeros(1, num_labels),
        }
    }
}

/// Every trainable tensor of the adapter. Stages are present only when enabled
/// at initialization.
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterParams {
    pub stage_fs: Option<StageParams>,
    pub stage_ss: Option<StageParams>,
    pub head: HeadParams,
}

impl AdapterParams {
    pub fn init(cfg: &AdapterConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        Ok(AdapterParams {
            stage_fs: cfg.use_foldseek.then(|| StageParams::init(cfg.dim, seed, "stage_fs")),
            stage_ss: cfg.use_dssp.then(|| StageParams::init(cfg.dim, seed, "stage_ss")),
            head: HeadParams::init(cfg.dim, cfg.num_labels, seed),
        })
    }

    /// Tensors in canonical checkpoint order.
    pub fn named_tensors(&self) -> Vec<(String, &Matrix)> {
        let mut out = Vec::new();
        for (prefix, stage) in [("stage_fs", &self.stage_fs), ("stage_ss", &self.stage_ss)] {
            if let Some(s) = stage {
                for (name, t) in STAGE_TENSORS.iter().zip(s.tensors()) {
                    out.push((format!("{prefix}.{name}"), t));
                }
            }
        }
        let h = &self.head;
        for (name, t) in HEAD_TENSORS.iter().zip([&h.w1, &h.b1, &h.w2, &h.b2]) {
            out.push((format!("head.{name}"), t));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = Vec::new();
        if let Some(s) = &mut self.stage_fs {
            out.extend(s.tensors_mut());
        }
        if let Some(s) = &mut self.stage_ss {
            out.extend(s.tensors_mut());
        }
        let h = &mut self.head;
        out.extend([&mut h.w1, &mut h.b1, &mut h.w2, &mut h.b2]);
        out
    }

    pub fn num_scalars(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.named_tensors().iter().all(|(_, t)| t.is_finite())
    }

    /// Copy with every value rounded through `f32`.
    pub fn quantized(&self) -> Self {
        let mut q = self.clone();
        for t in q.tensors_mut() {
            *t = t.quantize_f32();
        }
        q
    }

    /// Rebuild from named tensors, as read from a checkpoint.
    pub fn from_named(cfg: &AdapterConfig, named: Vec<(String, Matrix)>) -> Result<Self> {
        let mut template = AdapterParams {
            stage_fs: cfg.use_foldseek.then(|| StageParams::init(cfg.dim, 0, "stage_fs")),
            stage_ss: cfg.use_dssp.then(|| StageParams::init(cfg.dim, 0, "stage_ss")),
            head: HeadParams::init(cfg.dim, cfg.num_labels, 0),
        };
        let expected: Vec<(String, (usize, usize))> = template
            .named_tensors()
            .into_iter()
            .map(|(n, t)| (n, t.shape()))
            .collect();
        if named.len() != expected.len() {
            return Err(Error::Format(format!(
                "checkpoint holds {} tensors, configuration expects {}",
                named.len(),
                expected.len()
            )));
        }
        for (((name, t), (want, shape)), slot) in
            named.into_iter().zip(&expected).zip(template.tensors_mut())
        {
            if &name != want || t.shape() != *shape {
                return Err(Error::Format(format!(
                    "checkpoint tensor {name} {:?} does not match expected {want} {shape:?}",
                    t.shape(),
                )));
            }
            *slot = t;
        }
        Ok(template)
    }
}

/// Tape handles for one stage.
#[derive(Debug, Clone, Copy)]
pub struct StageNodes {
    pub wq: NodeId,
    pub wk: NodeId,
    pub wv: NodeId,
    pub wo: NodeId,
    pub bq: NodeId,
    pub bk: NodeId,
    pub bv: NodeId,
    pub bo: NodeId,
    pub emb: NodeId,
}

#[derive(Debug, Clone, Copy)]
pub struct HeadNodes {
    pub w1: NodeId,
    pub b1: NodeId,
    pub w2: NodeId,
    pub b2: NodeId,
}

/// All parameters registered on one tape.
#[derive(Debug, Clone)]
pub struct ParamNodes {
    pub stage_fs: Option<StageNodes>,
    pub stage_ss: Option<StageNodes>,
    pub head: HeadNodes,
    order: Vec<NodeId>,
}

impl ParamNodes {
    pub fn register(tape: &mut Tape, params: &AdapterParams) -> Self {
        let mut order = Vec::new();
        let mut stage = |tape: &mut Tape, s: &StageParams| {
            let ids: Vec<NodeId> = s.tensors().iter().map(|t| tape.param((*t).clone())).collect();
            order.extend(&ids);
            StageNodes {
                wq: ids[0],
                wk: ids[1],
                wv: ids[2],
                wo: ids[3],
                bq: ids[4],
                bk: ids[5],
                bv: ids[6],
                bo: ids[7],
                emb: ids[8],
            }
        };
        let stage_fs = params.stage_fs.as_ref().map(|s| stage(tape, s));
        let stage_ss = params.stage_ss.as_ref().map(|s| stage(tape, s));
        let h = &params.head;
        let head = HeadNodes {
            w1: tape.param(h.w1.clone()),
            b1: tape.param(h.b1.clone()),
            w2: tape.param(h.w2.clone()),
            b2: tape.param(h.b2.clone()),
        };
        order.extend([head.w1, head.b1, head.w2, head.b2]);
        ParamNodes {
            stage_fs,
            stage_ss,
            head,
            order,
        }
    }

    /// Gradients in the same order as [`AdapterParams::tensors_mut`].
    pub fn collect(&self, grads: &mut Gradients) -> Vec<Matrix> {
        self.order.iter().map(|&id| grads.take(id)).collect()
    }

    pub fn ids(&self) -> &[NodeId] {
        &self.order
    }
}

/// One cross-modal multi-head attention stage. `query_emb` provides queries,
/// `kv` provides keys and values; key positions `>= valid` are masked.
pub fn cross_attention_stage(
    tape: &mut Tape,
    query_emb: NodeId,
    kv: NodeId,
    stage: &StageNodes,
    cfg: &AdapterConfig,
    valid: usize,
) -> Result<NodeId> {
    let (qv, kvv) = (tape.value(query_emb), tape.value(kv));
    if qv.shape() != kvv.shape() || qv.cols() != cfg.dim {
        return Err(Error::Shape {
            op: "cross_attention_stage",
            left: qv.shape(),
            right: kvv.shape(),
        });
    }
    if valid == 0 {
        return Err(Error::EmptySequence("attention over zero valid positions".into()));
    }
    if valid > qv.rows() {
        return Err(Error::Contract(format!("valid {valid} exceeds length {}", qv.rows())));
    }

    let q = tape.matmul(query_emb, stage.wq)?;
    let q = tape.add_row_bias(q, stage.bq)?;
    let k = tape.matmul(kv, stage.wk)?;
    let k = tape.add_row_bias(k, stage.bk)?;
    let v = tape.matmul(kv, stage.wv)?;
    let v = tape.add_row_bias(v, stage.bv)?;

    let dh = cfg.head_dim();
    let rope = if cfg.use_rope {
        Some(RopeConfig::new(dh, cfg.rope_base)?)
    } else {
        None
    };
    let scale = 1.0 / (dh as f64).sqrt();
    let mut heads = Vec::with_capacity(cfg.heads);
    for h in 0..cfg.heads {
        let mut qh = tape.slice_cols(q, h * dh, dh)?;
        let mut kh = tape.slice_cols(k, h * dh, dh)?;
        let vh = tape.slice_cols(v, h * dh, dh)?;
        if let Some(rc) = rope {
            qh = tape.rope(qh, rc)?;
            kh = tape.rope(kh, rc)?;
        }
        let scores = tape.matmul_nt(qh, kh)?;
        let scores = tape.scale(scores, scale);
        let attn = tape.softmax_rows(scores, valid);
        heads.push(tape.matmul(attn, vh)?);
    }
    let concat = tape.concat_cols(&heads)?;
    let out = tape.matmul(concat, stage.wo)?;
    tape.add_row_bias(out, stage.bo)
}

/// Two linear layers with dropout and GeLU between them.
pub fn head_forward(
    tape: &mut Tape,
    pooled: NodeId,
    head: &HeadNodes,
    dropout: f64,
    mode: Mode,
    stream: Stream,
) -> Result<NodeId> {
    let h = tape.matmul(pooled, head.w1)?;
    let h = tape.add_row_bias(h, head.b1)?;
    let h = tape.dropout(h, dropout, mode, stream)?;
    let h = tape.gelu(h);
    let out = tape.matmul(h, head.w2)?;
    tape.add_row_bias(out, head.b2)
}

/// Inputs for one protein, possibly padded past `valid`.
#[derive(Debug, Clone, Copy)]
pub struct ForwardInput<'a> {
    pub plm: &'a Matrix,
    pub foldseek: Option<&'a [u32]>,
    pub dssp: Option<&'a [u32]>,
    pub valid: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct ForwardOutput {
    pub pooled: NodeId,
    pub logits: NodeId,
}

/// Full adapter forward pass for one protein, recorded on `tape`. The PLM
/// embedding enters as a constant.
pub fn ses_forward(
    tape: &mut Tape,
    nodes: &ParamNodes,
    input: ForwardInput<'_>,
    cfg: &AdapterConfig,
    mode: Mode,
    dropout_stream: Stream,
) -> Result<ForwardOutput> {
    let l = input.plm.rows();
    if input.plm.cols() != cfg.dim {
        return Err(Error::Shape {
            op: "ses_forward",
            left: input.plm.shape(),
            right: (l, cfg.dim),
        });
    }
    let mut repr = tape.constant(input.plm.clone());

    let stages = [
        (cfg.use_foldseek, input.foldseek, nodes.stage_fs.as_ref(), "foldseek"),
        (cfg.use_dssp, input.dssp, nodes.stage_ss.as_ref(), "dssp"),
    ];
    for (enabled, tokens, stage, name) in stages {
        if !enabled {
            continue;
        }
        let tokens = tokens.ok_or_else(|| {
            Error::Config(format!("{name} stage enabled but no {name} stream supplied"))
        })?;
        let stage = stage.ok_or_else(|| {
            Error::Config(format!("{name} stage enabled but its parameters are absent"))
        })?;
        if tokens.len() != l {
            return Err(Error::Alignment(vec![format!(
                "{name} stream length {} vs embedding rows {l}",
                tokens.len()
            )]));
        }
        let query = tape.gather(stage.emb, tokens)?;
        repr = cross_attention_stage(tape, query, repr, stage, cfg, input.valid)?;
    }

    let pooled = tape.mean_rows(repr, input.valid)?;
    let logits = head_forward(tape, pooled, &nodes.head, cfg.dropout, mode, dropout_stream)?;
    Ok(ForwardOutput { pooled, logits })
}

/// Eval-mode logits for one protein.
pub fn predict(params: &AdapterParams, cfg: &AdapterConfig, input: ForwardInput<'_>) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let nodes = ParamNodes::register(&mut tape, params);
    let out = ses_forward(&mut tape, &nodes, input, cfg, Mode::Eval, Stream::new(0, "unused"))?;
    Ok(tape.value(out.logits).data().to_vec())
}
