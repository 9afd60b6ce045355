//! Batched pool search: a random pool is consumed `B` networks at a time;
//! every round trains the batch together with the current seeds as one
//! weighted network and keeps the `K` heaviest as the next seeds.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::autodiff::{OptimizerConfig, Real};
use crate::cellspace::{random_pool, search_space_size, Genome};
use crate::error::{Error, Result};
use crate::lmdata::{BpttWindow, Corpus};
use crate::model::{DropoutRates, Mode, ModelConfig};
use crate::rngs;
use crate::train::{train_and_evaluate, DataConfig, TrainConfig};
use crate::wenet::{self, MixPoint, WeNetState, WeightRow};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Pool size `T`.
    pub total_networks: usize,
    /// Networks drawn from the pool per round, `B`.
    pub net_batch: usize,
    /// Seeds kept between rounds, `K`.
    pub seed_size: usize,
    pub levels: usize,
    pub epochs_per_round: usize,
    pub emb_dim: usize,
    pub hidden_dim: usize,
    pub dropout: DropoutRates,
    pub batch_norm: bool,
    pub data: DataConfig,
    pub optimizer: OptimizerConfig,
    pub clip: Option<f64>,
    pub mix: MixPoint,
    /// Draw the pool without repeats.
    pub dedupe: bool,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            total_networks: 64,
            net_batch: 16,
            seed_size: 4,
            levels: 8,
            epochs_per_round: 2,
            emb_dim: 64,
            hidden_dim: 64,
            dropout: DropoutRates::REFERENCE,
            batch_norm: true,
            data: DataConfig::default(),
            optimizer: OptimizerConfig::adam(1e-3).with_weight_decay(5e-7),
            clip: Some(0.25),
            mix: MixPoint::Logits,
            dedupe: true,
            seed: 0,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        let (t, b, k) = (self.total_networks, self.net_batch, self.seed_size);
        if t == 0 {
            return Err(Error::config("total networks must be at least 1 (T = 0)"));
        }
        if b == 0 || b > t {
            return Err(Error::config(format!(
                "net batch must satisfy 1 <= B <= T, got B = {b}, T = {t}"
            )));
        }
        if k == 0 || k > b {
            return Err(Error::config(format!(
                "seed size must satisfy 1 <= K <= B, got K = {k}, B = {b}"
            )));
        }
        if self.epochs_per_round == 0 {
            return Err(Error::config("epochs per round must be at least 1"));
        }
        if self.dedupe {
            let space = search_space_size(self.levels)?;
            if t as u128 > space {
                return Err(Error::config(format!(
                    "cannot draw {t} distinct genomes from a space of {space} at L = {}",
                    self.levels
                )));
            }
        }
        self.model().validate()?;
        self.data.validate()?;
        self.optimizer.validate()
    }

    pub fn model(&self) -> ModelConfig {
        ModelConfig {
            emb_dim: self.emb_dim,
            hidden_dim: self.hidden_dim,
            levels: self.levels,
            dropout: self.dropout,
            batch_norm: self.batch_norm,
            mode: Mode::Search,
        }
    }

    pub fn total_rounds(&self) -> usize {
        self.total_networks.div_ceil(self.net_batch)
    }

    pub fn total_epochs(&self) -> usize {
        self.total_rounds() * self.epochs_per_round
    }
}

/// One row of a round's weight table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightEntry {
    /// 1-based position after sorting by weight.
    pub rank: usize,
    /// Pool position of the genome.
    pub net_index: usize,
    pub genome: Genome,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    /// 1-based.
    pub round: usize,
    /// Pool positions drawn this round, duplicates included.
    pub batch: Vec<usize>,
    /// Pool positions of the seeds carried into this round.
    pub incoming_seeds: Vec<usize>,
    /// Candidates in training order; weights align with this list.
    pub candidates: Vec<usize>,
    pub weights: Vec<f64>,
    /// Weights sorted descending, ties by candidate order.
    pub table: Vec<WeightEntry>,
    /// Pool positions of the `K` seeds leaving this round.
    pub seeds: Vec<usize>,
    pub trajectory: Vec<WeightRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    pub config: SearchConfig,
    pub pool: Vec<Genome>,
    pub rounds: Vec<RoundRecord>,
    pub best: Genome,
    pub best_net_index: usize,
    pub best_weight: f64,
    pub total_rounds: usize,
    pub total_epochs: usize,
    /// True when no training ran and weights are placeholders.
    pub dry_run: bool,
    #[serde(skip)]
    pub wall_time: Duration,
}

/// Trains one round's candidates and returns their final weights.
pub trait RoundTrainer {
    fn train_round(&mut self, round: usize, genomes: &[Genome]) -> Result<(Vec<f64>, Vec<WeightRow>)>;
}

/// Joint weighted-network training on a fixed set of windows.
pub struct WeNetRoundTrainer<'a, T: Real> {
    cfg: &'a SearchConfig,
    windows: Vec<BpttWindow>,
    vocab_size: usize,
    _precision: std::marker::PhantomData<T>,
}

impl<'a, T: Real> WeNetRoundTrainer<'a, T> {
    pub fn new(cfg: &'a SearchConfig, corpus: &Corpus) -> Result<Self> {
        Ok(WeNetRoundTrainer {
            cfg,
            windows: cfg.data.windows(&corpus.train)?,
            vocab_size: corpus.vocab.len(),
            _precision: std::marker::PhantomData,
        })
    }
}

impl<T: Real> RoundTrainer for WeNetRoundTrainer<'_, T> {
    fn train_round(&mut self, round: usize, genomes: &[Genome]) -> Result<(Vec<f64>, Vec<WeightRow>)> {
        let init_seed = rngs::derive_seed(self.cfg.seed, "round-init", round as u64);
        let round_seed = rngs::derive_seed(self.cfg.seed, "round-dropout", round as u64);
        let mut state = WeNetState::<T>::new(
            genomes,
            &self.cfg.model(),
            self.vocab_size,
            self.cfg.mix,
            init_seed,
        )?;
        let log = wenet::wenet_train(
            &mut state,
            &self.windows,
            self.cfg.epochs_per_round,
            &self.cfg.optimizer,
            round_seed,
            self.cfg.clip,
        )?;
        Ok((state.weights(), log.rows))
    }
}

/// Skips training: every candidate keeps the uniform weight.
pub struct DryRunTrainer;

impl RoundTrainer for DryRunTrainer {
    fn train_round(&mut self, _round: usize, genomes: &[Genome]) -> Result<(Vec<f64>, Vec<WeightRow>)> {
        Ok((vec![1.0 / genomes.len() as f64; genomes.len()], Vec::new()))
    }
}

/// Argmax weight; ties go to the earlier entry.
pub fn select_best(seeds: &[(Genome, f64)]) -> Result<Genome> {
    let weights: Vec<f64> = seeds.iter().map(|s| s.1).collect();
    if weights.is_empty() {
        return Err(Error::Contract("no seeds to select from".into()));
    }
    let i = wenet::top_k(&weights, 1)?[0];
    Ok(seeds[i].0.clone())
}

/// Sorted weight table and the top-`k` candidate positions for one round.
pub fn rank_round(candidates: &[usize], pool: &[Genome], weights: &[f64], k: usize) -> Result<(Vec<WeightEntry>, Vec<usize>)> {
    let order = wenet::top_k(weights, weights.len())?;
    let table = order
        .iter()
        .enumerate()
        .map(|(rank, &i)| WeightEntry {
            rank: rank + 1,
            net_index: candidates[i],
            genome: pool[candidates[i]].clone(),
            weight: weights[i],
        })
        .collect();
    let seeds = order.iter().take(k).map(|&i| candidates[i]).collect();
    Ok((table, seeds))
}

/// Merges the drawn batch with the seeds, keeping the first copy of any genome.
fn round_candidates(batch: &[usize], seeds: &[usize], pool: &[Genome], round: usize) -> Vec<usize> {
    let mut seen: BTreeMap<&Genome, usize> = BTreeMap::new();
    let mut out = Vec::with_capacity(batch.len() + seeds.len());
    for &i in batch.iter().chain(seeds) {
        match seen.get(&pool[i]) {
            Some(&first) => log::info!(
                "round {round}: network {i} duplicates network {first}; training one copy"
            ),
            None => {
                seen.insert(&pool[i], i);
                out.push(i);
            }
        }
    }
    out
}

/// Runs the search with an arbitrary per-round trainer.
pub fn run_search_with(cfg: &SearchConfig, trainer: &mut dyn RoundTrainer) -> Result<SearchReport> {
    cfg.validate()?;
    let start = Instant::now();
    let mut rng = rngs::rng_for(cfg.seed, "pool", 0);
    let pool = random_pool(cfg.total_networks, cfg.levels, &mut rng, cfg.dedupe)?;
    let mut seeds: Vec<usize> = Vec::new();
    let mut rounds = Vec::with_capacity(cfg.total_rounds());
    let mut last_weights = Vec::new();
    for (r, chunk) in (0..pool.len()).collect::<Vec<_>>().chunks(cfg.net_batch).enumerate() {
        let round = r + 1;
        let candidates = round_candidates(chunk, &seeds, &pool, round);
        let genomes: Vec<Genome> = candidates.iter().map(|&i| pool[i].clone()).collect();
        log::info!(
            "round {round}/{}: training {} candidates ({} new, {} seeds)",
            cfg.total_rounds(),
            genomes.len(),
            chunk.len(),
            seeds.len()
        );
        let (weights, trajectory) = trainer.train_round(round, &genomes)?;
        let k = cfg.seed_size.min(candidates.len());
        let (table, next) = rank_round(&candidates, &pool, &weights, k)?;
        log::info!(
            "round {round}: top weight {:.4} for network {}",
            table[0].weight,
            table[0].net_index
        );
        rounds.push(RoundRecord {
            round,
            batch: chunk.to_vec(),
            incoming_seeds: seeds.clone(),
            candidates: candidates.clone(),
            weights: weights.clone(),
            table,
            seeds: next.clone(),
            trajectory,
        });
        last_weights = candidates.iter().copied().zip(weights).collect::<Vec<_>>();
        seeds = next;
    }
    let finals: Vec<(Genome, f64)> = seeds
        .iter()
        .map(|&i| {
            let w = last_weights.iter().find(|(j, _)| *j == i).map_or(0.0, |p| p.1);
            (pool[i].clone(), w)
        })
        .collect();
    let best = select_best(&finals)?;
    let best_pos = finals.iter().position(|f| f.0 == best).expect("best is a seed");
    Ok(SearchReport {
        config: cfg.clone(),
        best_net_index: seeds[best_pos],
        best_weight: finals[best_pos].1,
        best,
        pool,
        total_rounds: rounds.len(),
        total_epochs: rounds.len() * cfg.epochs_per_round,
        rounds,
        dry_run: false,
        wall_time: start.elapsed(),
    })
}

/// Trains every round as a weighted network on the training split.
pub fn run_search<T: Real>(cfg: &SearchConfig, corpus: &Corpus) -> Result<SearchReport> {
    cfg.validate()?;
    let mut trainer = WeNetRoundTrainer::<T>::new(cfg, corpus)?;
    run_search_with(cfg, &mut trainer)
}

/// Round and epoch accounting without any training.
pub fn dry_run(cfg: &SearchConfig) -> Result<SearchReport> {
    let mut report = run_search_with(cfg, &mut DryRunTrainer)?;
    report.dry_run = true;
    Ok(report)
}

/// Result of several independent searches.
#[derive(Clone, Debug)]
pub struct RestartOutcome {
    pub reports: Vec<SearchReport>,
    /// Validation perplexity of each restart's best cell after a short fine-train.
    pub finetune_ppl: Vec<f64>,
    pub chosen: usize,
}

impl RestartOutcome {
    pub fn best(&self) -> &SearchReport {
        &self.reports[self.chosen]
    }
}

/// Master seed of restart `r`; restart 0 keeps the configured seed.
pub fn restart_seed(seed: u64, r: usize) -> u64 {
    if r == 0 {
        seed
    } else {
        rngs::derive_seed(seed, "restart", r as u64)
    }
}

/// Runs `restarts` searches and keeps the one whose best cell fine-trains to
/// the lowest validation perplexity. A single restart skips the fine-train.
pub fn run_restarts<T: Real>(
    cfg: &SearchConfig,
    corpus: &Corpus,
    restarts: usize,
    finetune: &TrainConfig,
) -> Result<RestartOutcome> {
    if restarts == 0 {
        return Err(Error::config("restarts must be at least 1"));
    }
    let mut reports = Vec::with_capacity(restarts);
    let mut finetune_ppl = Vec::with_capacity(restarts);
    for r in 0..restarts {
        let mut c = cfg.clone();
        c.seed = restart_seed(cfg.seed, r);
        let report = run_search::<T>(&c, corpus)?;
        if restarts > 1 {
            let model = c.model();
            let (_, eval) = train_and_evaluate::<T>(&report.best, &model, corpus, finetune, |_| {})?;
            log::info!(
                "restart {}: best network {} fine-tunes to valid ppl {:.3}",
                r + 1,
                report.best_net_index,
                eval.final_valid_ppl()
            );
            finetune_ppl.push(eval.final_valid_ppl());
        }
        reports.push(report);
    }
    let chosen = if restarts > 1 {
        let neg: Vec<f64> = finetune_ppl
            .iter()
            .map(|p| if p.is_finite() { -p } else { f64::NEG_INFINITY })
            .collect();
        wenet::top_k(&neg, 1)?[0]
    } else {
        0
    };
    Ok(RestartOutcome {
        reports,
        finetune_ppl,
        chosen,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lmdata::Tokenization;

    fn small(t: usize, b: usize, k: usize) -> SearchConfig {
        SearchConfig {
            total_networks: t,
            net_batch: b,
            seed_size: k,
            levels: 4,
            epochs_per_round: 1,
            emb_dim: 6,
            hidden_dim: 6,
            data: DataConfig { batch: 4, bptt: 6 },
            optimizer: OptimizerConfig::adam(1e-2),
            ..SearchConfig::default()
        }
    }

    fn corpus() -> Corpus {
        let text = "a b c d a b c a b d c b a\n".repeat(30);
        Corpus::from_texts(&text, "a b c d\n", "", Tokenization::Word).unwrap()
    }

    #[test]
    fn config_invariants() {
        assert!(small(4, 2, 1).validate().is_ok());
        assert!(small(0, 1, 1).validate().is_err());
        assert!(small(4, 5, 1).validate().is_err());
        assert!(small(4, 2, 3).validate().is_err());
        assert!(small(4, 2, 0).validate().is_err());
        let mut c = small(4, 2, 1);
        c.epochs_per_round = 0;
        assert!(c.validate().is_err());
        let mut c = small(400, 2, 1);
        assert!(c.validate().is_err());
        c.dedupe = false;
        assert!(c.validate().is_ok());
    }

    #[test]
    fn four_two_one_runs_two_rounds_of_two_then_three() {
        let r = dry_run(&small(4, 2, 1)).unwrap();
        assert_eq!(r.total_rounds, 2);
        assert_eq!(r.rounds[0].candidates.len(), 2);
        assert_eq!(r.rounds[1].candidates.len(), 3);
    }

    #[test]
    fn remainder_round_is_smaller() {
        let r = dry_run(&small(10, 4, 2)).unwrap();
        let sizes: Vec<usize> = r.rounds.iter().map(|r| r.batch.len()).collect();
        assert_eq!(sizes, vec![4, 4, 2]);
    }

    #[test]
    fn every_pool_network_is_drawn_exactly_once() {
        let r = dry_run(&small(13, 5, 2)).unwrap();
        let mut drawn: Vec<usize> = r.rounds.iter().flat_map(|r| r.batch.clone()).collect();
        drawn.sort();
        assert_eq!(drawn, (0..13).collect::<Vec<_>>());
    }

    #[test]
    fn full_scale_accounting() {
        let cfg = SearchConfig {
            total_networks: 10_000,
            net_batch: 100,
            seed_size: 20,
            ..SearchConfig::default()
        };
        let r = dry_run(&cfg).unwrap();
        assert_eq!((r.total_rounds, r.total_epochs), (100, 200));
    }

    #[test]
    fn select_best_breaks_ties_low() {
        let g = |op: &str| Genome::from_pairs(&[(op, 0)]).unwrap();
        assert_eq!(select_best(&[(g("relu"), 0.3), (g("tanh"), 0.3)]).unwrap(), g("relu"));
        assert_eq!(select_best(&[(g("tanh"), 1.0)]).unwrap(), g("tanh"));
        assert!(select_best(&[]).is_err());
    }

    #[test]
    fn duplicates_collapse_when_dedupe_is_off() {
        let pool: Vec<Genome> = ["relu", "tanh", "relu"]
            .iter()
            .map(|op| Genome::from_pairs(&[(*op, 0)]).unwrap())
            .collect();
        assert_eq!(round_candidates(&[1, 2], &[0], &pool, 2), vec![1, 2]);
        assert_eq!(round_candidates(&[0, 1, 2], &[], &pool, 1), vec![0, 1]);
    }

    #[test]
    fn trained_search_is_deterministic_and_consistent() {
        let c = corpus();
        let cfg = small(6, 3, 2);
        let a = run_search::<f64>(&cfg, &c).unwrap();
        let b = run_search::<f64>(&cfg, &c).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        for round in &a.rounds {
            let total: f64 = round.weights.iter().sum();
            assert!((total - 1.0).abs() < 1e-9);
            assert!(round.table.windows(2).all(|w| w[0].weight >= w[1].weight));
            let top: Vec<usize> = round.table.iter().take(2).map(|e| e.net_index).collect();
            assert_eq!(top, round.seeds);
        }
        let last = a.rounds.last().unwrap();
        assert_eq!(a.best_net_index, last.table[0].net_index);
        assert_eq!(a.best_weight, last.table[0].weight);
    }
}
