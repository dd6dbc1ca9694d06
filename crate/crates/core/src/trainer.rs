//! Mini-batch training with early stopping on dev accuracy, and evaluation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{KesError, Result};
use crate::model::{argmax, backward_into, forward, ModelParams, PreparedExample};
use crate::optim::{adam_step, AdamState};
use crate::subgraph::THETA_GRID;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Non-improving epochs tolerated before stopping.
    pub patience: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub theta: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 140,
            patience: 20,
            batch_size: 64,
            learning_rate: 1e-4,
            theta: THETA_GRID[0],
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(KesError::Config("epochs and batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(KesError::Config("learning_rate must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(KesError::Config(format!(
                "theta must lie in [0,1], got {}",
                self.theta
            )));
        }
        if !THETA_GRID.contains(&self.theta) {
            log::warn!(
                "theta {} is outside the standard grid {:?}",
                self.theta,
                THETA_GRID
            );
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub dev_acc: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters after the best dev epoch.
    pub params: ModelParams,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_dev_acc: f64,
    pub stopped_early: bool,
    /// Adam updates taken over the whole run.
    pub optimizer_steps: u64,
}

/// Trains from `initial`. Each epoch shuffles the training set with a
/// generator seeded from `cfg.seed`, takes one Adam step per mini-batch on the
/// mean loss, then measures dev accuracy. Training stops once dev accuracy has
/// not improved for more than `patience` consecutive epochs. Gradients are
/// accumulated sequentially in batch order, so runs are bit-reproducible.
pub fn train(
    initial: ModelParams,
    train_set: &[PreparedExample],
    dev_set: &[PreparedExample],
    cfg: &TrainConfig,
    jobs: usize,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    initial.check()?;
    if train_set.is_empty() || dev_set.is_empty() {
        return Err(KesError::Data("training and dev sets must be nonempty".into()));
    }
    let num_classes = initial.dims.num_classes;
    if let Some(ex) = train_set.iter().chain(dev_set).find(|ex| ex.label >= num_classes) {
        return Err(KesError::Data(format!(
            "label index {} is not valid for a {num_classes}-class model",
            ex.label
        )));
    }

    let mut params = initial;
    let mut adam = AdamState::new(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut grads = params.zeros_like();

    let mut history = Vec::new();
    let mut best = (params.clone(), 0usize, f64::NEG_INFINITY);
    let mut since_best = 0usize;
    let mut stopped_early = false;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            grads.scale(0.0);
            let weight = 1.0 / batch.len() as f64;
            for &i in batch {
                let ex = &train_set[i];
                let (loss, scores) = backward_into(&params, ex, weight, &mut grads);
                loss_sum += loss;
                correct += usize::from(argmax(&scores) == ex.label);
            }
            adam_step(&mut params, &grads, &mut adam, cfg.learning_rate)?;
        }
        let dev_acc = evaluate(&params, dev_set, jobs)?.accuracy;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            train_acc: correct as f64 / train_set.len() as f64,
            dev_acc,
        };
        log::info!(
            "epoch {epoch}: loss {:.5} train acc {:.4} dev acc {:.4}",
            record.train_loss,
            record.train_acc,
            record.dev_acc
        );
        history.push(record);

        if dev_acc > best.2 {
            best = (params.clone(), epoch, dev_acc);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best > cfg.patience {
                stopped_early = epoch < cfg.epochs;
                break;
            }
        }
    }

    Ok(TrainOutcome {
        params: best.0,
        history,
        best_epoch: best.1,
        best_dev_acc: best.2,
        stopped_early,
        optimizer_steps: adam.step,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    /// `confusion[gold][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

pub fn predict_all(params: &ModelParams, data: &[PreparedExample], jobs: usize) -> Result<Vec<usize>> {
    if jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| KesError::Internal(e.to_string()))?;
        Ok(pool.install(|| data.par_iter().map(|ex| argmax(&forward(params, ex))).collect()))
    } else {
        Ok(data.iter().map(|ex| argmax(&forward(params, ex))).collect())
    }
}

/// Argmax accuracy and confusion counts.
pub fn evaluate(params: &ModelParams, data: &[PreparedExample], jobs: usize) -> Result<Evaluation> {
    if data.is_empty() {
        return Err(KesError::Data("cannot evaluate on an empty dataset".into()));
    }
    let c = params.dims.num_classes;
    let predictions = predict_all(params, data, jobs)?;
    let mut confusion = vec![vec![0usize; c]; c];
    for (ex, &pred) in data.iter().zip(&predictions) {
        if ex.label >= c {
            return Err(KesError::Data(format!("label index {} out of range", ex.label)));
        }
        confusion[ex.label][pred] += 1;
    }
    let correct = (0..c).map(|i| confusion[i][i]).sum();
    Ok(Evaluation {
        accuracy: correct as f64 / data.len() as f64,
        correct,
        total: data.len(),
        confusion,
    })
}
