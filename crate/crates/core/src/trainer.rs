//! Training loop, early stopping and evaluation.

use std::fmt::Write as _;
use std::time::Instant;

use crate::adapter::{predict, ses_forward, AdapterConfig, AdapterParams, ForwardInput, ParamNodes, TaskType};
use crate::config::{is_minimized, RunConfig};
use crate::data::{make_batches, Batch, Dataset, Label, ProteinRecord};
use crate::error::{Error, Result};
use crate::loss;
use crate::matrix::Matrix;
use crate::metrics::{self, ConfusionCounts, MetricsReport};
use crate::optim::AdamW;
use crate::rng::Stream;
use crate::tape::{Mode, NodeId, Tape};

/// Min-max statistics of the training targets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelStats {
    pub min: f64,
    pub max: f64,
}

impl LabelStats {
    pub fn apply(&self, x: f64) -> f64 {
        (x - self.min) / (self.max - self.min)
    }

    pub fn to_text(&self) -> String {
        format!("min={}\nmax={}\n", self.min, self.max)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut min = None;
        let mut max = None;
        for (i, line) in text.lines().enumerate() {
            let Some((k, v)) = line.split_once('=') else { continue };
            let v: f64 = v.trim().parse().map_err(|_| Error::Parse {
                line: i + 1,
                msg: format!("bad number {v:?}"),
            })?;
            match k.trim() {
                "min" => min = Some(v),
                "max" => max = Some(v),
                _ => {}
            }
        }
        match (min, max) {
            (Some(min), Some(max)) if max > min => Ok(LabelStats { min, max }),
            _ => Err(Error::Format("label stats need min < max".into())),
        }
    }
}

/// `(x − min_train) / (max_train − min_train)` for both sets, using training
/// statistics only.
pub fn normalize_labels(train: &[f64], other: &[f64]) -> Result<(Vec<f64>, Vec<f64>, LabelStats)> {
    if train.is_empty() {
        return Err(Error::EmptySequence("no training targets".into()));
    }
    let min = train.iter().copied().fold(f64::INFINITY, f64::min);
    let max = train.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max > min) {
        return Err(Error::DegenerateLabels(format!("training targets are constant at {min}")));
    }
    let stats = LabelStats { min, max };
    Ok((
        train.iter().map(|&x| stats.apply(x)).collect(),
        other.iter().map(|&x| stats.apply(x)).collect(),
        stats,
    ))
}

pub fn regression_stats(data: &Dataset) -> Result<LabelStats> {
    let targets: Vec<f64> = data
        .records()
        .iter()
        .filter_map(|r| match r.label {
            Label::Real(v) => Some(v),
            _ => None,
        })
        .collect();
    Ok(normalize_labels(&targets, &[])?.2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Waiting,
    Stop,
}

/// Stops once the monitor has not strictly improved for `patience`
/// consecutive epochs. Ties keep the earlier epoch.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    minimize: bool,
    best: Option<(usize, f64)>,
    epochs_seen: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize, minimize: bool) -> Self {
        EarlyStopping {
            patience,
            minimize,
            best: None,
            epochs_seen: 0,
        }
    }

    pub fn observe(&mut self, value: f64) -> StopDecision {
        self.epochs_seen += 1;
        let better = match self.best {
            None => true,
            Some((_, b)) => {
                if self.minimize {
                    value < b
                } else {
                    value > b
                }
            }
        };
        if better {
            self.best = Some((self.epochs_seen, value));
            return StopDecision::Improved;
        }
        let since = self.epochs_seen - self.best.map_or(0, |(e, _)| e);
        if since >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Waiting
        }
    }

    /// 1-based epoch and value of the best observation.
    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub loss: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub step: usize,
    pub train_loss: f64,
    pub valid: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub monitor: String,
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
    /// 1-based.
    pub best_epoch: usize,
}

impl TrainLog {
    pub fn losses(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.loss).collect()
    }

    /// Optimizer steps completed at the end of the best epoch.
    pub fn convergence_step(&self) -> usize {
        self.epochs
            .iter()
            .find(|e| e.epoch == self.best_epoch)
            .map_or(0, |e| e.step)
    }

    pub fn best_metric(&self) -> Option<f64> {
        self.epochs
            .iter()
            .find(|e| e.epoch == self.best_epoch)
            .and_then(|e| e.valid.get(&self.monitor))
    }

    /// Tab-separated `step epoch split metric value` records.
    pub fn to_lines(&self) -> String {
        let mut s = String::from("step\tepoch\tsplit\tmetric\tvalue\n");
        let mut epochs = self.epochs.iter().peekable();
        for st in &self.steps {
            let _ = writeln!(s, "{}\t{}\ttrain\tloss\t{}", st.step, st.epoch, st.loss);
            let _ = writeln!(s, "{}\t{}\ttrain\tstep_seconds\t{}", st.step, st.epoch, st.seconds);
            while let Some(e) = epochs.next_if(|e| e.step == st.step) {
                write_epoch(&mut s, e);
            }
        }
        for e in epochs {
            write_epoch(&mut s, e);
        }
        let _ = writeln!(s, "{}\t{}\tvalid\tbest_epoch\t{}", self.convergence_step(), self.best_epoch, self.best_epoch);
        s
    }
}

fn write_epoch(s: &mut String, e: &EpochRecord) {
    let _ = writeln!(s, "{}\t{}\ttrain\tepoch_loss\t{}", e.step, e.epoch, e.train_loss);
    for (name, value) in e.valid.entries() {
        let _ = writeln!(s, "{}\t{}\tvalid\t{name}\t{value}", e.step, e.epoch);
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Best-epoch parameters, already rounded to checkpoint precision.
    pub params: AdapterParams,
    pub log: TrainLog,
    pub label_stats: Option<LabelStats>,
}

fn target_for(label: &Label, cfg: &AdapterConfig, stats: Option<&LabelStats>) -> Vec<f64> {
    match label {
        Label::Real(v) => vec![stats.map_or(*v, |s| s.apply(*v))],
        other => other.multi_hot(cfg.num_labels),
    }
}

fn record_loss(
    tape: &mut Tape,
    logits: NodeId,
    label: &Label,
    cfg: &AdapterConfig,
    stats: Option<&LabelStats>,
) -> Result<NodeId> {
    match (cfg.task_type, label) {
        (TaskType::SingleLabel, Label::Class(c)) => tape.softmax_cross_entropy(logits, *c),
        (TaskType::MultiLabel, l @ Label::Multi(_)) => {
            tape.binary_cross_entropy(logits, &l.multi_hot(cfg.num_labels))
        }
        (TaskType::Regression, l @ Label::Real(_)) => tape.mse(logits, &target_for(l, cfg, stats)),
        (task, l) => Err(Error::Config(format!("label {l:?} does not fit a {task} task"))),
    }
}

fn batch_input(batch: &Batch, k: usize) -> ForwardInput<'_> {
    ForwardInput {
        plm: &batch.embeddings[k],
        foldseek: batch.foldseek.as_ref().map(|v| v[k].as_slice()),
        dssp: batch.dssp.as_ref().map(|v| v[k].as_slice()),
        valid: batch.valid[k],
    }
}

/// Forward, loss and backward over one batch; returns the mean loss and the
/// gradients in [`AdapterParams::tensors_mut`] order.
pub fn batch_gradients(
    params: &AdapterParams,
    cfg: &AdapterConfig,
    batch: &Batch,
    records: &[ProteinRecord],
    stats: Option<&LabelStats>,
    dropout: Stream,
) -> Result<(f64, Vec<Matrix>)> {
    let mut tape = Tape::new();
    let nodes = ParamNodes::register(&mut tape, params);
    let mut losses = Vec::with_capacity(batch.len());
    for (k, &ix) in batch.records.iter().enumerate() {
        let out = ses_forward(&mut tape, &nodes, batch_input(batch, k), cfg, Mode::Train, dropout.split(k as u64))?;
        losses.push(record_loss(&mut tape, out.logits, &records[ix].label, cfg, stats)?);
    }
    let loss = tape.mean_scalars(&losses)?;
    let value = tape.scalar(loss);
    if !value.is_finite() {
        return Err(Error::NonFiniteLoss(
            batch.records.iter().map(|&i| records[i].id.clone()).collect(),
        ));
    }
    let mut grads = tape.backward(loss)?;
    Ok((value, nodes.collect(&mut grads)))
}

pub fn train(run: &RunConfig, train_set: &Dataset, valid_set: &Dataset) -> Result<TrainOutcome> {
    train_with(run, train_set, valid_set, |_| {})
}

/// As [`train`], calling `on_epoch` after each validation pass.
pub fn train_with(
    run: &RunConfig,
    train_set: &Dataset,
    valid_set: &Dataset,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    if train_set.is_empty() || valid_set.is_empty() {
        return Err(Error::EmptySequence("training and validation splits must be nonempty".into()));
    }
    let dim = train_set.records()[0].embedding.cols();
    if run.dim.is_some_and(|d| d != dim) {
        return Err(Error::Config(format!("configured dim {:?} but embeddings have {dim}", run.dim)));
    }
    run.validate()?;
    let cfg = run.adapter(dim);
    cfg.validate()?;

    let stats = match cfg.task_type {
        TaskType::Regression => Some(regression_stats(train_set)?),
        _ => None,
    };

    let mut params = AdapterParams::init(&cfg, run.seed)?;
    let names: Vec<String> = params.named_tensors().into_iter().map(|(n, _)| n).collect();
    let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let mut opt = AdamW::new(
        run.optimizer(),
        params.named_tensors().iter().map(|(_, t)| t.shape()),
    );

    let monitor = run.monitor().to_string();
    let mut stopper = EarlyStopping::new(run.patience(), is_minimized(&monitor));
    let mut log = TrainLog {
        monitor: monitor.clone(),
        ..TrainLog::default()
    };
    let mut best_params = params.quantized();
    let batch_stream = Stream::new(run.seed, "batches");
    let dropout_stream = Stream::new(run.seed, "dropout");
    let mut step = 0usize;

    for epoch in 1..=run.max_epochs() {
        let batches = make_batches(train_set.records(), run.token_budget, batch_stream.split(epoch as u64))?;
        let mut epoch_loss = 0.0;
        for batch in &batches {
            let started = Instant::now();
            let (loss, grads) = batch_gradients(
                &params,
                &cfg,
                batch,
                train_set.records(),
                stats.as_ref(),
                dropout_stream.split(step as u64),
            )?;
            opt.step(&mut params.tensors_mut(), &grads, &name_refs)?;
            if !params.is_finite() {
                return Err(Error::NonFiniteLoss(
                    batch.records.iter().map(|&i| train_set.records()[i].id.clone()).collect(),
                ));
            }
            step += 1;
            epoch_loss += loss;
            log.steps.push(StepRecord {
                step,
                epoch,
                loss,
                seconds: started.elapsed().as_secs_f64(),
            });
        }

        let snapshot = params.quantized();
        let valid = evaluate(&snapshot, &cfg, valid_set, stats.as_ref())?;
        let value = valid
            .get(&monitor)
            .ok_or_else(|| Error::Config(format!("monitor {monitor} missing from report")))?;
        let record = EpochRecord {
            epoch,
            step,
            train_loss: epoch_loss / batches.len() as f64,
            valid,
        };
        on_epoch(&record);
        log.epochs.push(record);
        let decision = stopper.observe(value);
        if decision == StopDecision::Improved {
            best_params = snapshot;
        }
        if decision == StopDecision::Stop {
            break;
        }
    }
    log.best_epoch = stopper.best().map_or(0, |(e, _)| e);
    Ok(TrainOutcome {
        params: best_params,
        log,
        label_stats: stats,
    })
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| if x > bv { (i, x) } else { (bi, bv) })
        .0
}

/// Eval-mode metrics over a split. Regression losses are reported on the
/// normalized scale when `stats` is given; Spearman's ρ uses raw targets.
pub fn evaluate(
    params: &AdapterParams,
    cfg: &AdapterConfig,
    data: &Dataset,
    stats: Option<&LabelStats>,
) -> Result<MetricsReport> {
    if data.is_empty() {
        return Err(Error::EmptySequence("evaluation split is empty".into()));
    }
    let mut logits = Vec::with_capacity(data.len());
    for r in data.records() {
        let input = ForwardInput {
            plm: &r.embedding,
            foldseek: r.foldseek.as_ref().map(|s| s.indices()),
            dssp: r.dssp.as_ref().map(|s| s.indices()),
            valid: r.len(),
        };
        logits.push(predict(params, cfg, input)?);
    }
    let n = data.len() as f64;
    let mut report = MetricsReport::new();
    match cfg.task_type {
        TaskType::SingleLabel => {
            let mut total = 0.0;
            let mut predicted = Vec::new();
            let mut actual = Vec::new();
            for (z, r) in logits.iter().zip(data.records()) {
                let Label::Class(c) = r.label else {
                    return Err(Error::Config(format!("{}: expected a class label", r.id)));
                };
                total += loss::softmax_cross_entropy(z, c)?;
                predicted.push(argmax(z));
                actual.push(c);
            }
            report.push("acc", metrics::multiclass_accuracy(&predicted, &actual)?);
            if cfg.num_labels == 2 {
                let cc = ConfusionCounts::one_vs_rest(&predicted, &actual, 1);
                report.push("f1", metrics::f1(&cc));
                report.push("mcc", metrics::mcc(&cc));
            }
            report.push("loss", total / n);
        }
        TaskType::MultiLabel => {
            let c = cfg.num_labels;
            let mut scores = Matrix::zeros(data.len(), c);
            let mut targets = Matrix::zeros(data.len(), c);
            let mut total = 0.0;
            for (p, (z, r)) in logits.iter().zip(data.records()).enumerate() {
                let t = r.label.multi_hot(c);
                total += loss::multilabel_bce(z, &t)?;
                for j in 0..c {
                    scores.set(p, j, loss::sigmoid(z[j]));
                    targets.set(p, j, t[j]);
                }
            }
            report.push("fmax", metrics::fmax(&scores, &targets)?);
            report.push("loss", total / n);
        }
        TaskType::Regression => {
            let mut preds = Vec::new();
            let mut raw = Vec::new();
            let mut total = 0.0;
            for (z, r) in logits.iter().zip(data.records()) {
                let Label::Real(v) = r.label else {
                    return Err(Error::Config(format!("{}: expected a real label", r.id)));
                };
                let target = stats.map_or(v, |s| s.apply(v));
                total += (z[0] - target) * (z[0] - target);
                preds.push(z[0]);
                raw.push(v);
            }
            report.push("spearman", metrics::spearman(&preds, &raw)?);
            report.push("loss", total / n);
        }
    }
    Ok(report)
}
