//! Losses, optimization, metrics and the training loop.

mod checkpoint;
mod metrics;
mod model;
mod optim;
mod schedule;

pub use checkpoint::{Checkpoint, NamedTensor};
pub use metrics::{balanced_accuracy, macro_f1, pearson_r, rmse, Confusion, MetricsReport};
pub use model::{Architecture, Head, Model, ModelSpec, Sample, Target, Task};
pub use optim::{Adam, OptimizerKind, BETA1, BETA2, EPSILON};
pub use schedule::{Direction, EarlyStopping, PlateauScheduler, StopDecision, IMPROVEMENT_EPSILON};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::tensor::{ParamStore, Real, Tape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Scheduler {
    None,
    Plateau { factor: Real, patience: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Nll,
    Mse,
}

impl LossKind {
    /// The loss a task is trained with.
    pub fn for_task(task: Task) -> Self {
        match task {
            Task::Classification { .. } => LossKind::Nll,
            Task::Regression => LossKind::Mse,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: Real,
    pub optimizer: OptimizerKind,
    pub weight_decay: Real,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub scheduler: Scheduler,
    pub loss: LossKind,
    pub seed: u64,
    pub dropout: Real,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            optimizer: OptimizerKind::Adam,
            weight_decay: 0.0,
            batch_size: 16,
            max_epochs: 500,
            early_stop_patience: 20,
            scheduler: Scheduler::Plateau {
                factor: 5.0,
                patience: 10,
            },
            loss: LossKind::Nll,
            seed: 0,
            dropout: 0.1,
        }
    }
}

impl TrainConfig {
    /// Every violated constraint. A zero learning rate is accepted as a
    /// sanity mode that leaves parameters unchanged.
    pub fn problems(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            problems.push(format!("lr must be a finite non-negative number, got {}", self.lr));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            problems.push(format!("weight_decay must be non-negative, got {}", self.weight_decay));
        }
        if self.batch_size == 0 {
            problems.push("batch_size must be at least 1".into());
        }
        if self.early_stop_patience == 0 {
            problems.push("early_stop_patience must be at least 1".into());
        }
        if let Scheduler::Plateau { factor, patience } = self.scheduler {
            if !(factor > 1.0) {
                problems.push(format!("scheduler factor must exceed 1, got {factor}"));
            }
            if patience == 0 {
                problems.push("scheduler patience must be at least 1".into());
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            problems.push(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        problems
    }

    pub fn validate(&self) -> Result<()> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(problems.join("; ")))
        }
    }
}

/// One line of training history. Epoch 0 describes the initial parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training loss; at epoch 0, evaluated without dropout.
    pub train_loss: Real,
    pub val_loss: Real,
    /// Balanced accuracy for classification, validation loss for regression.
    pub val_metric: Real,
    pub lr: Real,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters of the best validation epoch.
    pub store: ParamStore,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    /// Validation metrics of the returned parameters.
    pub report: MetricsReport,
}

/// Validation metric direction for a task.
pub fn direction(task: Task) -> Direction {
    match task {
        Task::Classification { .. } => Direction::Maximize,
        Task::Regression => Direction::Minimize,
    }
}

fn validation_metric(task: Task, report: &MetricsReport) -> Real {
    match task {
        Task::Classification { .. } => report.balanced_accuracy.unwrap_or(0.0),
        Task::Regression => report.loss,
    }
}

/// Seed for the dropout stream of one sample in one epoch.
fn sample_seed(seed: u64, epoch: usize, index: usize) -> u64 {
    let mut x = seed ^ 0x9e37_79b9_7f4a_7c15;
    for v in [epoch as u64, index as u64] {
        x = (x ^ v).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        x ^= x >> 31;
    }
    x
}

/// Outputs and loss of every sample, evaluated without dropout.
pub fn predict(model: &Model, store: &ParamStore, samples: &[Sample]) -> Result<Vec<(Vec<Real>, Real)>> {
    samples
        .par_iter()
        .map(|s| {
            let mut tape = Tape::new();
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let (out, loss) = model.loss(&mut tape, store, s, 0.0, false, &mut rng)?;
            Ok((tape.value(out).data().to_vec(), tape.value(loss).data()[0]))
        })
        .collect()
}

fn argmax(v: &[Real]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Mean loss and task metrics on `samples`.
pub fn evaluate(model: &Model, store: &ParamStore, samples: &[Sample]) -> Result<MetricsReport> {
    if samples.is_empty() {
        return Err(invalid("cannot evaluate on an empty set"));
    }
    let outputs = predict(model, store, samples)?;
    let loss = outputs.iter().map(|(_, l)| l).sum::<Real>() / samples.len() as Real;
    if !loss.is_finite() {
        return Err(Error::NonFinite("evaluation loss".into()));
    }
    match model.spec.task {
        Task::Classification { num_classes } => {
            let mut c = Confusion::new(num_classes);
            for ((out, _), s) in outputs.iter().zip(samples) {
                let Target::Class(t) = s.target else {
                    return Err(invalid("target type does not match the task"));
                };
                c.add(t, argmax(out))?;
            }
            MetricsReport::classification(loss, c)
        }
        Task::Regression => {
            let preds: Vec<Real> = outputs.iter().map(|(o, _)| o[0]).collect();
            let targets = samples
                .iter()
                .map(|s| match s.target {
                    Target::Value(y) => Ok(y),
                    Target::Class(_) => Err(invalid("target type does not match the task")),
                })
                .collect::<Result<Vec<_>>>()?;
            MetricsReport::regression(loss, &preds, &targets)
        }
    }
}

/// Mean loss and mean gradient of one batch. Samples run in parallel, and
/// gradients are summed in sample order.
fn batch_gradients(
    model: &Model,
    store: &ParamStore,
    samples: &[Sample],
    batch: &[usize],
    config: &TrainConfig,
    epoch: usize,
) -> Result<(Real, Vec<Tensor>)> {
    let per_sample: Vec<(Real, Vec<Tensor>)> = batch
        .par_iter()
        .map(|&i| {
            let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(config.seed, epoch, i));
            let mut tape = Tape::new();
            let (_, loss) = model.loss(&mut tape, store, &samples[i], config.dropout, true, &mut rng)?;
            let value = tape.value(loss).data()[0];
            if !value.is_finite() {
                return Err(Error::NonFinite(format!(
                    "training loss of sample {i} in epoch {epoch}"
                )));
            }
            let grads = tape.backward(loss)?;
            Ok((value, grads.for_params(store)))
        })
        .collect::<Result<_>>()?;
    let scale = 1.0 / batch.len() as Real;
    let mut total = 0.0;
    let mut sum: Vec<Tensor> = store
        .iter()
        .map(|p| Tensor::zeros(p.value.rows(), p.value.cols()))
        .collect();
    for (loss, grads) in &per_sample {
        total += loss;
        for (acc, g) in sum.iter_mut().zip(grads) {
            for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                *a += b;
            }
        }
    }
    for t in &mut sum {
        for a in t.data_mut() {
            *a *= scale;
        }
    }
    Ok((total * scale, sum))
}

/// Mini-batch training with seeded shuffling, per-epoch validation, the
/// plateau scheduler and early stopping. Returns the best-validation
/// parameters.
pub fn train(
    model: &Model,
    mut store: ParamStore,
    train_set: &[Sample],
    val_set: &[Sample],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if config.loss != LossKind::for_task(model.spec.task) {
        return Err(invalid(format!(
            "loss {:?} does not fit a {:?} task",
            config.loss, model.spec.task
        )));
    }
    if train_set.is_empty() || val_set.is_empty() {
        return Err(invalid("training needs nonempty train and validation sets"));
    }
    let task = model.spec.task;
    let dir = direction(task);
    let mut optimizer = Adam::new(config.optimizer, config.weight_decay, &store);
    let mut scheduler = match config.scheduler {
        Scheduler::None => None,
        Scheduler::Plateau { factor, patience } => Some(PlateauScheduler::new(config.lr, factor, patience, dir)?),
    };
    let mut stopper = EarlyStopping::new(config.early_stop_patience, dir)?;
    let mut order_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut lr = config.lr;

    let initial_train = evaluate(model, &store, train_set)?;
    let initial_val = evaluate(model, &store, val_set)?;
    let mut history = vec![EpochRecord {
        epoch: 0,
        train_loss: initial_train.loss,
        val_loss: initial_val.loss,
        val_metric: validation_metric(task, &initial_val),
        lr,
    }];
    stopper.update(0, validation_metric(task, &initial_val));
    let mut best = (store.clone(), 0, initial_val);

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut order_rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let (loss, grads) = batch_gradients(model, &store, train_set, batch, config, epoch)?;
            optimizer.step(&mut store, &grads, lr)?;
            loss_sum += loss * batch.len() as Real;
        }
        let val = evaluate(model, &store, val_set)?;
        let metric = validation_metric(task, &val);
        history.push(EpochRecord {
            epoch,
            train_loss: loss_sum / train_set.len() as Real,
            val_loss: val.loss,
            val_metric: metric,
            lr,
        });
        let decision = stopper.update(epoch, metric);
        if decision == StopDecision::Improved {
            best = (store.clone(), epoch, val);
        }
        if let Some(s) = scheduler.as_mut() {
            lr = s.step(metric);
        }
        if decision == StopDecision::Stop {
            break;
        }
    }
    let (store, best_epoch, report) = best;
    Ok(TrainOutcome {
        store,
        history,
        best_epoch,
        report,
    })
}
