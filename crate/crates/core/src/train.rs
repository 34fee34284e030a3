//! Training loop and its report.

use std::fmt::Write as _;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{batches, TaskData};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::optimizer::OptimizerState;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    /// Stop after this many iterations, possibly mid-epoch.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs: Option<u64>,
    /// Stop as soon as full-train-set accuracy reaches this value. Checked
    /// after every iteration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_train_accuracy: Option<f64>,
    /// Evaluate on the training set at the end of each epoch.
    #[serde(default = "yes")]
    pub eval_train: bool,
}

fn yes() -> bool {
    true
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.iterations.is_none() && self.epochs.is_none() {
            return Err(Error::Config("set iterations, epochs, or both".into()));
        }
        if let Some(t) = self.target_train_accuracy {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::Config(format!("target_train_accuracy {t} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub epoch: u64,
    /// Iterations completed so far.
    pub iteration: u64,
    /// Mean batch loss over the epoch; the evaluation loss for the initial row.
    pub loss: f64,
    pub train_accuracy: Option<f64>,
    pub test_accuracy: f64,
    pub test_loss: f64,
    /// Gross flips per layer during the epoch.
    pub flips: Vec<u64>,
    /// Parameters per layer that differ from the start of the epoch.
    pub net_changed: Vec<u64>,
    pub beta: Vec<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub seed: u64,
    pub epochs: Vec<EpochRow>,
    pub iteration_loss: Vec<f64>,
    /// `beta[t][l]` after iteration `t + 1`.
    pub beta: Vec<Vec<f64>>,
    pub total_flips: Vec<u64>,
    pub reached_target_at: Option<u64>,
    pub seconds: f64,
}

impl TrainReport {
    pub fn final_row(&self) -> &EpochRow {
        self.epochs.last().expect("report has an initial row")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,iteration,loss,train_accuracy,test_accuracy,test_loss,flips,net_changed,beta,seconds\n");
        let join = |v: Vec<String>| v.join(";");
        for r in &self.epochs {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{:.3}",
                r.epoch,
                r.iteration,
                r.loss,
                r.train_accuracy.map_or(String::new(), |a| a.to_string()),
                r.test_accuracy,
                r.test_loss,
                join(r.flips.iter().map(u64::to_string).collect()),
                join(r.net_changed.iter().map(u64::to_string).collect()),
                join(r.beta.iter().map(f64::to_string).collect()),
                r.seconds
            );
        }
        out
    }
}

/// Seeds the batch order; a separate stream of the model seed.
fn shuffle_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

/// Trains `model` on `data.train` with per-batch updates, evaluating at the
/// start and after every epoch.
pub fn train(model: &mut Model, opt: &mut OptimizerState, data: &TaskData, cfg: &TrainConfig, head_lr: f64) -> Result<TrainReport> {
    cfg.validate()?;
    if !head_lr.is_finite() || head_lr < 0.0 {
        return Err(Error::Config(format!("head_lr must be finite and non-negative, got {head_lr}")));
    }
    if data.train.is_empty() || data.test.is_empty() {
        return Err(Error::EmptyDataset);
    }
    model.check_dataset(&data.train)?;
    model.check_dataset(&data.test)?;

    let start = Instant::now();
    let depth = model.blocks.len();
    let mut rng = shuffle_rng(model.seed);
    let mut report = TrainReport {
        seed: model.seed,
        epochs: Vec::new(),
        iteration_loss: Vec::new(),
        beta: Vec::new(),
        total_flips: vec![0; depth],
        reached_target_at: None,
        seconds: 0.0,
    };

    let test = model.evaluate(&data.test)?;
    let train_acc = if cfg.eval_train || cfg.target_train_accuracy.is_some() {
        Some(model.evaluate(&data.train)?)
    } else {
        None
    };
    report.epochs.push(EpochRow {
        epoch: 0,
        iteration: opt.iteration,
        loss: train_acc.map_or(test.loss, |m| m.loss),
        train_accuracy: train_acc.map(|m| m.accuracy),
        test_accuracy: test.accuracy,
        test_loss: test.loss,
        flips: vec![0; depth],
        net_changed: vec![0; depth],
        beta: model.blocks.iter().map(|b| b.linear.beta()).collect(),
        seconds: 0.0,
    });
    let target = cfg.target_train_accuracy;
    if let (Some(t), Some(m)) = (target, train_acc) {
        if m.accuracy >= t {
            report.reached_target_at = Some(opt.iteration);
        }
    }

    let max_iter = cfg.iterations.map(|n| opt.iteration + n);
    let max_epochs = cfg.epochs.unwrap_or(u64::MAX);
    let mut epoch = 0u64;
    while report.reached_target_at.is_none() && epoch < max_epochs && max_iter.is_none_or(|m| opt.iteration < m) {
        epoch += 1;
        opt.start_epoch(epoch - 1);
        let epoch_start = Instant::now();
        let snapshot = model.clone();
        let mut flips = vec![0u64; depth];
        let (mut loss_sum, mut steps) = (0.0, 0usize);
        let mut last_train_acc = None;

        for batch in batches(data.train.len(), cfg.batch_size, &mut rng) {
            if max_iter.is_some_and(|m| opt.iteration >= m) {
                break;
            }
            let part = data.train.subset(&batch);
            let stats = model.train_step(&part.inputs, &part.labels, opt, head_lr)?;
            opt.iteration += 1;
            loss_sum += stats.loss;
            steps += 1;
            report.iteration_loss.push(stats.loss);
            report.beta.push(stats.beta);
            for (f, s) in flips.iter_mut().zip(&stats.flips) {
                *f += *s as u64;
            }
            if let Some(t) = target {
                let acc = model.evaluate(&data.train)?.accuracy;
                last_train_acc = Some(acc);
                if acc >= t {
                    report.reached_target_at = Some(opt.iteration);
                    break;
                }
            }
        }

        let test = model.evaluate(&data.test)?;
        let train_acc = if cfg.eval_train && last_train_acc.is_none() {
            Some(model.evaluate(&data.train)?.accuracy)
        } else {
            last_train_acc
        };
        for (t, f) in report.total_flips.iter_mut().zip(&flips) {
            *t += f;
        }
        report.epochs.push(EpochRow {
            epoch,
            iteration: opt.iteration,
            loss: if steps > 0 { loss_sum / steps as f64 } else { f64::NAN },
            train_accuracy: train_acc,
            test_accuracy: test.accuracy,
            test_loss: test.loss,
            flips,
            net_changed: model.boolean_distance(&snapshot)?.into_iter().map(|v| v as u64).collect(),
            beta: model.blocks.iter().map(|b| b.linear.beta()).collect(),
            seconds: epoch_start.elapsed().as_secs_f64(),
        });
    }
    report.seconds = start.elapsed().as_secs_f64();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_synthetic, SyntheticTask};
    use crate::logic::Connective;
    use crate::model::LayerSpec;
    use crate::optimizer::EtaSchedule;

    fn cfg(iterations: u64) -> TrainConfig {
        TrainConfig {
            batch_size: 4,
            iterations: Some(iterations),
            epochs: None,
            target_train_accuracy: None,
            eval_train: true,
        }
    }

    fn xor_model(seed: u64) -> Model {
        Model::new(2, 2, &[LayerSpec::new(8, Connective::Xnor)], seed).unwrap()
    }

    #[test]
    fn zero_iterations_reports_initial_metrics() {
        let data = gen_synthetic(SyntheticTask::Xor2, 0, 0).unwrap();
        let mut model = xor_model(1);
        let before = model.clone();
        let mut opt = OptimizerState::new(0.5, EtaSchedule::Constant).unwrap();
        let report = train(&mut model, &mut opt, &data, &cfg(0), 0.1).unwrap();
        assert_eq!(report.epochs.len(), 1);
        assert_eq!(report.final_row().epoch, 0);
        assert_eq!(model, before);
    }

    #[test]
    fn report_is_consistent() {
        let data = gen_synthetic(SyntheticTask::Xor2, 0, 0).unwrap();
        let mut model = xor_model(3);
        let mut opt = OptimizerState::new(0.5, EtaSchedule::Constant).unwrap();
        let report = train(&mut model, &mut opt, &data, &cfg(20), 0.1).unwrap();
        assert_eq!(report.epochs.len(), 21);
        assert_eq!(report.iteration_loss.len(), 20);
        assert!(report.epochs.windows(2).all(|w| w[0].iteration < w[1].iteration));
        let final_test = model.evaluate(&data.test).unwrap().accuracy;
        assert_eq!(report.final_row().test_accuracy, final_test);
        let csv = report.to_csv();
        assert_eq!(csv.lines().count(), 22);
        let json = serde_json::to_string(&report).unwrap();
        let back: TrainReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.epochs.len(), report.epochs.len());
    }

    #[test]
    fn zero_eta_trains_only_the_head() {
        let data = gen_synthetic(SyntheticTask::Parity { n: 3 }, 0, 0).unwrap();
        let mut model = Model::new(3, 2, &[LayerSpec::new(6, Connective::Xor)], 5).unwrap();
        let before = model.clone();
        let mut opt = OptimizerState::new(0.0, EtaSchedule::Constant).unwrap();
        let report = train(&mut model, &mut opt, &data, &cfg(30), 0.1).unwrap();
        assert_eq!(report.total_flips, vec![0]);
        assert_eq!(model.boolean_distance(&before).unwrap(), vec![0]);
        assert_ne!(model.head, before.head);
    }

    #[test]
    fn invalid_configs() {
        let mut c = cfg(1);
        c.batch_size = 0;
        assert!(c.validate().is_err());
        let mut c = cfg(1);
        c.iterations = None;
        assert!(c.validate().is_err());
        let mut c = cfg(1);
        c.target_train_accuracy = Some(1.5);
        assert!(c.validate().is_err());
    }
}
