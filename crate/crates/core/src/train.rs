//! Supervised training and evaluation: stratified splits, cross-entropy on
//! logits, Adam, early stopping on validation F1-macro, and the
//! classification metrics reported by `evaluate`.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{NodeId, Tape, Tensor};
use crate::dataio::ExpressionDataset;
use crate::error::{Error, Result};
use crate::gnn::{GnnModel, Head};
use crate::seeds::{hash64, purpose_seed, Purpose};

/// Training hyperparameters. Conventional defaults, fully configurable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a validation F1-macro improvement before stopping.
    pub patience: usize,
    pub class_weighting: ClassWeighting,
    /// Train/validation/test fractions; must sum to 1.
    pub fractions: [f64; 3],
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 32,
            max_epochs: 100,
            patience: 10,
            class_weighting: ClassWeighting::None,
            fractions: [0.70, 0.15, 0.15],
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate < 0.0 {
            return Err(Error::Schema("learning_rate must be nonnegative".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Schema("adam betas must lie in [0, 1)".into()));
        }
        if self.epsilon <= 0.0 {
            return Err(Error::Schema("adam epsilon must be positive".into()));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Schema(
                "batch_size and max_epochs must be positive".into(),
            ));
        }
        let sum: f64 = self.fractions.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Schema(format!(
                "split fractions sum to {sum}, expected 1"
            )));
        }
        if self.fractions.iter().any(|&f| f < 0.0) {
            return Err(Error::Schema("split fractions must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassWeighting {
    None,
    InverseFrequency,
}

/// Disjoint, exhaustive sample partitions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Per-class proportional allocation with largest-remainder rounding.
///
/// Within each class, membership is shuffled by a seed derived from
/// `(seed, class)`. Remainder seats go to the partitions with the largest
/// fractional remainder; ties favor the later partition (test over val over
/// train). Every class needs at least 3 samples.
pub fn stratified_split(
    labels: &[usize],
    label_names: &[String],
    fractions: [f64; 3],
    seed: u64,
) -> Result<Split> {
    let n_classes = label_names.len();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &y) in labels.iter().enumerate() {
        if y >= n_classes {
            return Err(Error::InvalidLabel(format!(
                "label index {y} out of range for {n_classes} classes"
            )));
        }
        members[y].push(i);
    }
    for (c, m) in members.iter().enumerate() {
        if m.len() < 3 {
            return Err(Error::Stratification {
                class: label_names[c].clone(),
                count: m.len(),
            });
        }
    }

    let mut split = Split {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for (c, m) in members.iter().enumerate() {
        let mut idx = m.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(hash64(seed, c as u64));
        idx.shuffle(&mut rng);

        let n = idx.len();
        let mut counts = [0usize; 3];
        let mut remainders = [(0.0f64, 0usize); 3];
        let mut assigned = 0;
        for p in 0..3 {
            let target = fractions[p] * n as f64;
            counts[p] = target.floor() as usize;
            remainders[p] = (target - target.floor(), p);
            assigned += counts[p];
        }
        let mut order = remainders;
        order.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap()
                .then_with(|| b.1.cmp(&a.1))
        });
        for &(_, p) in order.iter().take(n - assigned) {
            counts[p] += 1;
        }

        let (a, b) = (counts[0], counts[0] + counts[1]);
        split.train.extend_from_slice(&idx[..a]);
        split.val.extend_from_slice(&idx[a..b]);
        split.test.extend_from_slice(&idx[b..]);
    }
    split.train.sort_unstable();
    split.val.sort_unstable();
    split.test.sort_unstable();
    Ok(split)
}

/// Batch-mean (optionally class-weighted) negative log-likelihood on logits,
/// recorded on the tape: binary cross-entropy for the sigmoid head,
/// categorical for softmax. Both are stabilized against large logits.
pub fn cross_entropy(
    tape: &mut Tape,
    logits: NodeId,
    labels: &[usize],
    head: Head,
    class_weights: &[f64],
) -> Result<NodeId> {
    match head {
        Head::SigmoidBinary => tape.sigmoid_cross_entropy(logits, labels, class_weights),
        Head::SoftmaxMulticlass { .. } => tape.softmax_cross_entropy(logits, labels, class_weights),
    }
}

/// Convenience: loss value of fixed logits without keeping the tape.
pub fn cross_entropy_value(
    logits: &Tensor,
    labels: &[usize],
    head: Head,
    class_weights: &[f64],
) -> Result<f64> {
    let mut tape = Tape::new();
    let z = tape.constant(logits.clone());
    let loss = cross_entropy(&mut tape, z, labels, head, class_weights)?;
    Ok(tape.values(loss)[0])
}

/// Inverse-frequency class weights over the given samples:
/// `w_c = n / (C · n_c)`.
pub fn inverse_frequency_weights(
    labels: &[usize],
    samples: &[usize],
    n_classes: usize,
) -> Result<Vec<f64>> {
    let mut counts = vec![0usize; n_classes];
    for &s in samples {
        counts[labels[s]] += 1;
    }
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(Error::Contract(format!(
            "class {c} has no training samples; cannot weight by inverse frequency"
        )));
    }
    let n = samples.len() as f64;
    Ok(counts
        .iter()
        .map(|&nc| n / (n_classes as f64 * nc as f64))
        .collect())
}

struct AdamSlot {
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Adam with bias correction; state keyed by parameter name.
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
    slots: BTreeMap<String, AdamSlot>,
}

impl Adam {
    pub fn new(config: &TrainConfig) -> Self {
        Adam {
            lr: config.learning_rate,
            beta1: config.beta1,
            beta2: config.beta2,
            eps: config.epsilon,
            t: 0,
            slots: BTreeMap::new(),
        }
    }

    /// Apply one update from named gradients.
    pub fn step(&mut self, model: &mut GnnModel, grads: &[(String, Vec<f64>)]) -> Result<()> {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (name, grad) in grads {
            let param = model.param_mut(name).ok_or_else(|| {
                Error::Contract(format!("unknown parameter `{name}` in gradient update"))
            })?;
            if param.numel() != grad.len() {
                return Err(Error::Shape(format!(
                    "gradient for `{name}` has {} entries, parameter has {}",
                    grad.len(),
                    param.numel()
                )));
            }
            let slot = self.slots.entry(name.clone()).or_insert_with(|| AdamSlot {
                m: vec![0.0; grad.len()],
                v: vec![0.0; grad.len()],
            });
            let values = param.values_mut();
            for i in 0..grad.len() {
                slot.m[i] = self.beta1 * slot.m[i] + (1.0 - self.beta1) * grad[i];
                slot.v[i] = self.beta2 * slot.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
                let m_hat = slot.m[i] / bc1;
                let v_hat = slot.v[i] / bc2;
                values[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// One row of the training history.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_f1_macro: f64,
}

/// Everything `fit` produces besides the mutated model.
#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub history: Vec<EpochRecord>,
    pub split: Split,
    pub best_epoch: usize,
}

/// Train with Adam and early stopping; restores the best-validation
/// parameters (including batch-norm state) before returning.
pub fn fit(
    model: &mut GnnModel,
    dataset: &ExpressionDataset,
    config: &TrainConfig,
) -> Result<FitOutcome> {
    config.validate()?;
    if dataset.n_genes() != model.n_inputs() {
        return Err(Error::Shape(format!(
            "dataset has {} genes, model expects {}",
            dataset.n_genes(),
            model.n_inputs()
        )));
    }
    let head = model.config().head;
    if dataset.label_names.len() != head.n_classes() {
        return Err(Error::Contract(format!(
            "dataset has {} classes, model head expects {}",
            dataset.label_names.len(),
            head.n_classes()
        )));
    }

    let split = stratified_split(
        &dataset.labels,
        &dataset.label_names,
        config.fractions,
        purpose_seed(config.seed, Purpose::Split),
    )?;
    if split.val.is_empty() {
        return Err(Error::Contract(
            "validation partition is empty; adjust fractions or add samples".into(),
        ));
    }
    let class_weights = match config.class_weighting {
        ClassWeighting::None => Vec::new(),
        ClassWeighting::InverseFrequency => {
            inverse_frequency_weights(&dataset.labels, &split.train, head.n_classes())?
        }
    };

    let mut adam = Adam::new(config);
    let shuffle_seed = purpose_seed(config.seed, Purpose::Shuffle);
    let dropout_seed = purpose_seed(config.seed, Purpose::Dropout);

    let mut history = Vec::new();
    let mut best = model.clone();
    let mut best_f1 = f64::NEG_INFINITY;
    let mut best_epoch = 0;
    let mut stall = 0usize;

    for epoch in 0..config.max_epochs {
        let mut order = split.train.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(hash64(shuffle_seed, epoch as u64));
        order.shuffle(&mut rng);

        let mut loss_sum = 0.0;
        for (bi, batch) in order.chunks(config.batch_size).enumerate() {
            let (x, labels) = dataset.gather(batch)?;
            let mut tape = Tape::new();
            let handles =
                model.forward_train(&mut tape, &x, hash64(hash64(dropout_seed, epoch as u64), bi as u64))?;
            let loss = cross_entropy(&mut tape, handles.logits, &labels, head, &class_weights)?;
            let loss_value = tape.values(loss)[0];
            if !loss_value.is_finite() {
                return Err(Error::Numeric {
                    op: "fit".into(),
                    message: format!("non-finite loss at epoch {epoch}, batch {bi}"),
                });
            }
            loss_sum += loss_value * batch.len() as f64;
            tape.backward(loss)?;
            let grads: Vec<(String, Vec<f64>)> = handles
                .params
                .iter()
                .map(|(name, id)| {
                    (
                        name.clone(),
                        tape.grad(*id).expect("parameter gradient").to_vec(),
                    )
                })
                .collect();
            adam.step(model, &grads)?;
        }
        let train_loss = loss_sum / split.train.len() as f64;
        let val_f1 = evaluate(model, dataset, &split.val)?.f1_macro;
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_f1_macro: val_f1,
        });

        if val_f1 > best_f1 {
            best_f1 = val_f1;
            best_epoch = epoch;
            best = model.clone();
            stall = 0;
        } else {
            stall += 1;
            if stall >= config.patience {
                break;
            }
        }
    }
    *model = best;
    Ok(FitOutcome {
        history,
        split,
        best_epoch,
    })
}

/// Per-class metrics. Zero-denominator precision/recall/F1 report 0 and set
/// the `degenerate` flag.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub degenerate: bool,
}

/// Classification report over one partition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub label_names: Vec<String>,
    /// `confusion[true][predicted]` counts.
    pub confusion: Vec<Vec<usize>>,
    pub per_class: Vec<ClassMetrics>,
    pub f1_macro: f64,
    pub accuracy: f64,
    pub n_samples: usize,
}

/// Metrics from raw decisions; the core of [`evaluate`], usable directly on
/// any prediction vector.
pub fn report_from_predictions(
    y_true: &[usize],
    y_pred: &[usize],
    label_names: &[String],
) -> Result<EvalReport> {
    if y_true.len() != y_pred.len() {
        return Err(Error::Contract(format!(
            "{} truths vs {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.is_empty() {
        return Err(Error::Contract("empty evaluation partition".into()));
    }
    let c = label_names.len();
    let mut confusion = vec![vec![0usize; c]; c];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t >= c || p >= c {
            return Err(Error::InvalidLabel(format!(
                "class index out of range for {c} classes (true {t}, predicted {p})"
            )));
        }
        confusion[t][p] += 1;
    }
    let mut per_class = Vec::with_capacity(c);
    let mut f1_sum = 0.0;
    for k in 0..c {
        let tp = confusion[k][k];
        let col: usize = (0..c).map(|t| confusion[t][k]).sum();
        let row: usize = confusion[k].iter().sum();
        let mut degenerate = false;
        let precision = if col > 0 {
            tp as f64 / col as f64
        } else {
            degenerate = true;
            0.0
        };
        let recall = if row > 0 {
            tp as f64 / row as f64
        } else {
            degenerate = true;
            0.0
        };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            degenerate = true;
            0.0
        };
        f1_sum += f1;
        per_class.push(ClassMetrics {
            label: label_names[k].clone(),
            precision,
            recall,
            f1,
            degenerate,
        });
    }
    let correct: usize = (0..c).map(|k| confusion[k][k]).sum();
    Ok(EvalReport {
        label_names: label_names.to_vec(),
        confusion,
        per_class,
        f1_macro: f1_sum / c as f64,
        accuracy: correct as f64 / y_true.len() as f64,
        n_samples: y_true.len(),
    })
}

/// Class decisions from logits: 0.5-threshold on the sigmoid head (logit
/// > 0), argmax on softmax (ties to the lowest index).
pub fn decide(logits: &Tensor, head: Head) -> Vec<usize> {
    let b = logits.shape()[0];
    let c = logits.shape()[1];
    (0..b)
        .map(|i| match head {
            Head::SigmoidBinary => usize::from(logits.values()[i] > 0.0),
            Head::SoftmaxMulticlass { .. } => {
                let row = &logits.values()[i * c..(i + 1) * c];
                let mut best = 0;
                for (j, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = j;
                    }
                }
                best
            }
        })
        .collect()
}

/// Eval-mode metrics over one sample partition. Batches of at most 256 are
/// merged in index order; batch composition cannot affect eval-mode outputs.
pub fn evaluate(
    model: &GnnModel,
    dataset: &ExpressionDataset,
    samples: &[usize],
) -> Result<EvalReport> {
    if samples.is_empty() {
        return Err(Error::Contract("empty evaluation partition".into()));
    }
    let head = model.config().head;
    let mut y_pred = Vec::with_capacity(samples.len());
    let mut y_true = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(256) {
        let (x, labels) = dataset.gather(chunk)?;
        let (logits, _) = model.model_forward(&x)?;
        y_pred.extend(decide(&logits, head));
        y_true.extend(labels);
    }
    report_from_predictions(&y_true, &y_pred, &dataset.label_names)
}

/// Write the `epoch,train_loss,val_f1_macro` history CSV.
pub fn write_history_csv<P: AsRef<std::path::Path>>(
    history: &[EpochRecord],
    path: P,
) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path.as_ref())?);
    writeln!(out, "epoch,train_loss,val_f1_macro")?;
    for rec in history {
        writeln!(out, "{},{},{}", rec.epoch, rec.train_loss, rec.val_f1_macro)?;
    }
    Ok(())
}

/// Write the confusion matrix as CSV with labeled axes.
pub fn write_confusion_csv<P: AsRef<std::path::Path>>(
    report: &EvalReport,
    path: P,
) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path.as_ref())?);
    write!(out, "true\\predicted")?;
    for name in &report.label_names {
        write!(out, ",{name}")?;
    }
    writeln!(out)?;
    for (k, row) in report.confusion.iter().enumerate() {
        write!(out, "{}", report.label_names[k])?;
        for v in row {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}
