//! Training and evaluation of a single cell as a language model.

use serde::{Deserialize, Serialize};

use crate::autodiff::{all_finite, clip_global_norm, Optimizer, OptimizerConfig, OptimizerKind, Real, Tensor};
use crate::cellspace::Genome;
use crate::error::{Error, Result};
use crate::lmdata::{batchify, bptt_windows, perplexity, BpttWindow, Corpus};
use crate::model::{init_params, lm_forward, LmParams, Mode, ModelConfig};
use crate::rngs::{self, Rng};

/// How a token stream is cut into mini-batches.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataConfig {
    pub batch: usize,
    pub bptt: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig { batch: 20, bptt: 35 }
    }
}

impl DataConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 || self.bptt == 0 {
            return Err(Error::config("data batch and bptt length must be positive"));
        }
        Ok(())
    }

    /// Training windows; errors when the stream is too short.
    pub fn windows(&self, stream: &[usize]) -> Result<Vec<BpttWindow>> {
        self.validate()?;
        bptt_windows(&batchify(stream, self.batch)?, self.bptt)
    }

    /// Evaluation windows, shrinking batch and bptt to fit short streams.
    pub fn eval_windows(&self, stream: &[usize]) -> Result<Vec<BpttWindow>> {
        self.validate()?;
        if stream.len() < 2 {
            return Err(Error::config(format!(
                "evaluation stream of {} tokens is too short",
                stream.len()
            )));
        }
        let batch = self.batch.min(stream.len() / 2).max(1);
        let bc = batchify(stream, batch)?;
        bptt_windows(&bc, self.bptt.min(bc.steps - 1))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub data: DataConfig,
    pub optimizer: OptimizerConfig,
    /// Global gradient-norm bound.
    pub clip: Option<f64>,
    pub seed: u64,
}

impl TrainConfig {
    /// Desk-scale evaluation defaults: averaged SGD, light decay, clipping on.
    pub fn eval_defaults(epochs: usize, seed: u64) -> Self {
        TrainConfig {
            epochs,
            data: DataConfig { batch: 20, bptt: 35 },
            optimizer: OptimizerConfig::asgd(20.0, 1).with_weight_decay(8e-7),
            clip: Some(0.25),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        self.optimizer.validate()?;
        if let Some(c) = self.clip {
            if !(c > 0.0) {
                return Err(Error::config(format!("gradient clip must be positive, got {c}")));
            }
        }
        Ok(())
    }
}

/// Perplexities after one epoch; epoch 0 is the untrained model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Dropout-on running perplexity over the epoch; absent for epoch 0.
    pub train_ppl: Option<f64>,
    pub valid_ppl: f64,
    pub test_ppl: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub genome: Genome,
    pub parameter_count: usize,
    pub epochs: Vec<EpochStats>,
}

impl EvalReport {
    pub fn final_valid_ppl(&self) -> f64 {
        self.epochs.last().map_or(f64::NAN, |e| e.valid_ppl)
    }

    pub fn best_valid_ppl(&self) -> f64 {
        self.epochs
            .iter()
            .map(|e| e.valid_ppl)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Total cross-entropy (nats) and token count over `windows`, no dropout.
pub fn evaluate_nll<T: Real>(
    genome: &Genome,
    params: &LmParams<T>,
    windows: &[BpttWindow],
    cfg: &ModelConfig,
) -> Result<(f64, usize)> {
    let mut rng = rngs::rng_for(0, "eval", 0);
    let mut total = 0.0;
    let mut tokens = 0;
    let mut h = Tensor::zeros(&[windows.first().map_or(1, |w| w.batch()), cfg.hidden_dim]);
    for w in windows {
        let pass = lm_forward(genome, params, w, &h, cfg, &mut rng, false)?;
        total += pass.loss_value().expect("logits head has a loss") * w.token_count() as f64;
        tokens += w.token_count();
        h = pass.h_final;
    }
    Ok((total, tokens))
}

pub fn evaluate_ppl<T: Real>(
    genome: &Genome,
    params: &LmParams<T>,
    windows: &[BpttWindow],
    cfg: &ModelConfig,
) -> Result<f64> {
    let (nll, n) = evaluate_nll(genome, params, windows, cfg)?;
    perplexity(nll, n)
}

/// A cell being trained on its own.
pub struct SoloTrainer<T: Real> {
    pub genome: Genome,
    pub params: LmParams<T>,
    pub model: ModelConfig,
    optimizer: Optimizer<T>,
    clip: Option<f64>,
    dropout_rng: Rng,
    batches_seen: usize,
}

impl<T: Real> SoloTrainer<T> {
    pub fn new(
        genome: &Genome,
        model: &ModelConfig,
        vocab_size: usize,
        cfg: &TrainConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        model.validate()?;
        genome.check()?;
        let mut init = rngs::rng_for(cfg.seed, "init", 0);
        let params = init_params(genome, model, vocab_size, &mut init)?;
        Ok(SoloTrainer {
            genome: genome.clone(),
            params,
            model: model.clone(),
            optimizer: Optimizer::new(cfg.optimizer.clone())?,
            clip: cfg.clip,
            dropout_rng: rngs::rng_for(cfg.seed, "dropout", 0),
            batches_seen: 0,
        })
    }

    /// One pass over `windows`; returns the mean training loss.
    pub fn epoch(&mut self, windows: &[BpttWindow]) -> Result<f64> {
        let mut h = Tensor::zeros(&[windows.first().map_or(1, |w| w.batch()), self.model.hidden_dim]);
        let (mut total, mut tokens) = (0.0, 0usize);
        for w in windows {
            let batch = self.batches_seen;
            self.batches_seen += 1;
            let pass = lm_forward(&self.genome, &self.params, w, &h, &self.model, &mut self.dropout_rng, true)?;
            let loss = pass.loss_value().expect("logits head has a loss");
            if !loss.is_finite() {
                return Err(Error::NonFinite { batch, loss });
            }
            let mut grads = pass.gradients()?;
            if all_finite(&grads) {
                if let Some(c) = self.clip {
                    clip_global_norm(&mut grads, c);
                }
                let gref: Vec<&Tensor<T>> = grads.iter().collect();
                self.optimizer.step(&mut self.params.tensors_mut(), &gref)?;
            } else {
                log::warn!("batch {batch}: non-finite gradient; update skipped");
            }
            h = pass.h_final;
            total += loss * w.token_count() as f64;
            tokens += w.token_count();
        }
        Ok(total / tokens.max(1) as f64)
    }

    /// Parameters to evaluate: the ASGD average once it exists.
    pub fn eval_params(&self) -> LmParams<T> {
        match (self.optimizer.config().kind, self.optimizer.averaged()) {
            (OptimizerKind::Asgd, Some(avg)) => {
                let mut p = self.params.clone();
                p.assign(avg).expect("average mirrors parameter shapes");
                p
            }
            _ => self.params.clone(),
        }
    }
}

/// Trains `genome` from scratch with batch norm off and reports perplexity
/// after every epoch. `on_epoch` sees each row as it is produced.
pub fn train_and_evaluate<T: Real>(
    genome: &Genome,
    model: &ModelConfig,
    corpus: &Corpus,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<(LmParams<T>, EvalReport)> {
    let model = model.clone().with_mode(Mode::Eval);
    let mut trainer = SoloTrainer::<T>::new(genome, &model, corpus.vocab.len(), cfg)?;
    let train = cfg.data.windows(&corpus.train)?;
    let valid = cfg.data.eval_windows(&corpus.valid)?;
    let test = if corpus.test.len() >= 2 {
        Some(cfg.data.eval_windows(&corpus.test)?)
    } else {
        None
    };
    let mut report = EvalReport {
        genome: genome.clone(),
        parameter_count: trainer.params.parameter_count(),
        epochs: Vec::with_capacity(cfg.epochs + 1),
    };
    let stats = |epoch, train_ppl, params: &LmParams<T>| -> Result<EpochStats> {
        Ok(EpochStats {
            epoch,
            train_ppl,
            valid_ppl: evaluate_ppl(genome, params, &valid, &model)?,
            test_ppl: test
                .as_ref()
                .map(|t| evaluate_ppl(genome, params, t, &model))
                .transpose()?,
        })
    };
    let initial = stats(0, None, &trainer.params)?;
    on_epoch(&initial);
    report.epochs.push(initial);
    for epoch in 1..=cfg.epochs {
        let loss = trainer.epoch(&train)?;
        let row = stats(epoch, Some(loss.exp()), &trainer.eval_params())?;
        on_epoch(&row);
        report.epochs.push(row);
    }
    Ok((trainer.eval_params(), report))
}
