//! Weighted networks: candidate cells trained jointly as a softmax-weighted
//! mixture `y = sum_i w_i N_i(x)` with `w = softmax(theta)`.
//!
//! Candidates never share parameters. Each one runs its own forward pass
//! (in parallel when enabled); the mixture and its loss are then built on
//! a small separate graph whose backward pass hands every candidate the
//! gradient of its output, and every candidate finishes its own backward
//! pass from there. All parameters and the mixture logits `theta` are
//! updated in the same optimizer step.

use serde::{Deserialize, Serialize};

use crate::autodiff::{all_finite, clip_global_norm, softmax, Graph, NodeId, Optimizer, OptimizerConfig, Real, Tensor};
use crate::cellspace::Genome;
use crate::error::{Error, Result};
use crate::lmdata::BpttWindow;
use crate::model::{forward, init_params, ForwardPass, Head, LmParams, ModelConfig, INIT_RANGE};
use crate::rngs::{self, Rng};

/// Where candidate outputs are combined.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MixPoint {
    /// Weighted sum of per-candidate decoder logits.
    #[default]
    Logits,
    /// Weighted sum of cell outputs fed to one shared decoder.
    Hidden,
}

impl std::str::FromStr for MixPoint {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logits" => Ok(Self::Logits),
            "hidden" => Ok(Self::Hidden),
            other => Err(Error::config(format!(
                "unknown mix point `{other}` (expected logits or hidden)"
            ))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Candidate<T: Real> {
    pub genome: Genome,
    pub params: LmParams<T>,
    /// Emits all-zero (uniform) logits and never learns; a reference expert.
    pub uniform: bool,
}

#[derive(Clone, Debug)]
pub struct WeNetState<T: Real> {
    pub candidates: Vec<Candidate<T>>,
    /// Mixture logits `theta`, one per candidate.
    pub logits: Tensor<T>,
    pub model: ModelConfig,
    pub mix: MixPoint,
    /// Decoder `(w, b)` used only with [`MixPoint::Hidden`].
    pub shared_decoder: Option<(Tensor<T>, Tensor<T>)>,
}

impl<T: Real> WeNetState<T> {
    /// Freshly initialized candidates with zero mixture logits.
    ///
    /// Candidate `i` draws its parameters from a stream derived from
    /// `init_seed` and `i`, so a candidate can be rebuilt in isolation.
    pub fn new(
        genomes: &[Genome],
        model: &ModelConfig,
        vocab_size: usize,
        mix: MixPoint,
        init_seed: u64,
    ) -> Result<Self> {
        if genomes.is_empty() {
            return Err(Error::config("a weighted network needs at least one candidate"));
        }
        let candidates = genomes
            .iter()
            .enumerate()
            .map(|(i, g)| {
                let mut rng = candidate_init_rng(init_seed, i);
                Ok(Candidate {
                    genome: g.clone(),
                    params: init_params(g, model, vocab_size, &mut rng)?,
                    uniform: false,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let shared_decoder = match mix {
            MixPoint::Logits => None,
            MixPoint::Hidden => {
                let mut rng = rngs::rng_for(init_seed, "shared-decoder", 0);
                Some((
                    Tensor::uniform(&[vocab_size, model.hidden_dim], INIT_RANGE, &mut rng),
                    Tensor::zeros(&[vocab_size]),
                ))
            }
        };
        Ok(WeNetState {
            logits: Tensor::zeros(&[candidates.len()]),
            candidates,
            model: model.clone(),
            mix,
            shared_decoder,
        })
    }

    /// Appends a non-learning candidate whose logits are clamped to uniform.
    pub fn push_uniform_reference(&mut self, genome: Genome) -> Result<()> {
        let vocab = self.vocab_size();
        let mut rng = rngs::rng_for(0, "uniform-reference", 0);
        let params = init_params(&genome, &self.model, vocab, &mut rng)?;
        self.candidates.push(Candidate {
            genome,
            params,
            uniform: true,
        });
        let mut theta = self.logits.to_f64_vec();
        theta.push(0.0);
        self.logits = Tensor::from_vec(theta.into_iter().map(T::from_f64).collect());
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn vocab_size(&self) -> usize {
        self.candidates[0].params.vocab_size()
    }

    /// Importance weights `softmax(theta)`.
    pub fn weights(&self) -> Vec<f64> {
        softmax(&self.logits.to_f64_vec()).expect("at least one candidate")
    }

    /// The `k` heaviest candidates as `(index, genome, weight)`, descending.
    pub fn top_k(&self, k: usize) -> Result<Vec<(usize, &Genome, f64)>> {
        let w = self.weights();
        Ok(top_k(&w, k)?
            .into_iter()
            .map(|i| (i, &self.candidates[i].genome, w[i]))
            .collect())
    }
}

pub(crate) fn candidate_init_rng(init_seed: u64, index: usize) -> Rng {
    rngs::rng_for(init_seed, "candidate-init", index as u64)
}

/// Indices of the `k` largest weights, descending; ties keep the lower index first.
pub fn top_k(weights: &[f64], k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > weights.len() {
        return Err(Error::config(format!(
            "top-k needs 1 <= k <= {}, got k = {k}",
            weights.len()
        )));
    }
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]));
    order.truncate(k);
    Ok(order)
}

/// One recorded mixture step over a window.
pub struct MixtureForward<T: Real> {
    pub loss: f64,
    /// Combined output `sum_i w_i head_i` before the shared decoder (if any).
    pub mixture_head: Tensor<T>,
    /// Per-candidate passes; `None` for uniform references.
    pub passes: Vec<Option<ForwardPass<T>>>,
    graph: Graph<T>,
    theta: NodeId,
    heads: Vec<NodeId>,
    decoder: Option<(NodeId, NodeId)>,
    loss_node: NodeId,
}

/// Gradients of one mixture step.
pub struct MixtureGradients<T: Real> {
    /// Per candidate, aligned with [`LmParams::tensors`]; `None` for uniform references.
    pub candidates: Vec<Option<Vec<Tensor<T>>>>,
    pub logits: Tensor<T>,
    pub shared_decoder: Option<(Tensor<T>, Tensor<T>)>,
}

impl<T: Real> MixtureForward<T> {
    /// Final hidden state of each candidate for carry-over.
    pub fn final_states(&self, previous: &[Tensor<T>]) -> Vec<Tensor<T>> {
        self.passes
            .iter()
            .zip(previous)
            .map(|(p, prev)| p.as_ref().map_or_else(|| prev.clone(), |p| p.h_final.clone()))
            .collect()
    }

    pub fn backward(&self) -> Result<MixtureGradients<T>> {
        let mut grads = self.graph.backward(self.loss_node)?;
        let logits = grads.take(self.theta).expect("theta is a parameter");
        let shared_decoder = self
            .decoder
            .map(|(w, b)| (grads.take(w).expect("param"), grads.take(b).expect("param")));
        let head_grads: Vec<Option<Tensor<T>>> = self.heads.iter().map(|&h| grads.take(h)).collect();
        let jobs: Vec<_> = self.passes.iter().zip(head_grads).collect();
        let candidates = crate::par::map(jobs, |(pass, hg)| match (pass, hg) {
            (Some(pass), Some(hg)) => pass.gradients_from_head(hg).map(Some),
            _ => Ok(None),
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        Ok(MixtureGradients {
            candidates,
            logits,
            shared_decoder,
        })
    }
}

/// Runs every candidate on `window` and combines them.
///
/// `states[i]` is candidate `i`'s incoming hidden state and `streams[i]`
/// its dropout generator.
pub fn wenet_forward<T: Real>(
    state: &WeNetState<T>,
    window: &BpttWindow,
    states: &[Tensor<T>],
    streams: &mut [Rng],
    training: bool,
) -> Result<MixtureForward<T>> {
    let n = state.len();
    if states.len() != n || streams.len() != n {
        return Err(Error::config(format!(
            "{n} candidates but {} hidden states and {} dropout streams",
            states.len(),
            streams.len()
        )));
    }
    for c in &state.candidates {
        if c.params.vocab_size() != state.vocab_size()
            || c.params.cell.w_h.shape() != [state.model.hidden_dim, state.model.hidden_dim]
        {
            return Err(Error::config(format!(
                "candidate {} does not match the shared model dimensions",
                c.genome
            )));
        }
    }
    let head_kind = match state.mix {
        MixPoint::Logits => Head::Logits,
        MixPoint::Hidden => Head::Hidden,
    };
    let model = &state.model;
    let jobs: Vec<_> = state
        .candidates
        .iter()
        .zip(states)
        .zip(streams.iter_mut())
        .collect();
    let passes = crate::par::map(jobs, |((c, h), rng)| {
        if c.uniform {
            return Ok(None);
        }
        forward(&c.genome, &c.params, window, h, model, rng, training, head_kind).map(Some)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let rows = window.token_count();
    let head_cols = match state.mix {
        MixPoint::Logits => state.vocab_size(),
        MixPoint::Hidden => model.hidden_dim,
    };
    let mut g = Graph::new();
    let theta = g.param(state.logits.clone());
    let w = g.softmax(theta)?;
    let mut heads = Vec::with_capacity(n);
    let mut scaled = Vec::with_capacity(n);
    for (i, pass) in passes.iter().enumerate() {
        let head = match pass {
            Some(p) => g.param(p.head_value().clone()),
            None => g.constant(Tensor::zeros(&[rows, head_cols])),
        };
        heads.push(head);
        scaled.push(g.scale_by_element(head, w, i)?);
    }
    let mixed = g.sum_n(&scaled)?;
    let mixture_head = g.value(mixed).clone();
    let (logits, decoder) = match &state.shared_decoder {
        Some((dw, db)) if state.mix == MixPoint::Hidden => {
            let dw = g.param(dw.clone());
            let db = g.param(db.clone());
            let proj = g.affine(dw, mixed)?;
            (g.add_bias(proj, db)?, Some((dw, db)))
        }
        _ => (mixed, None),
    };
    let loss_node = g.cross_entropy(logits, &window.flat_targets())?;
    let loss = g.value(loss_node).data()[0].as_f64();
    Ok(MixtureForward {
        loss,
        mixture_head,
        passes,
        graph: g,
        theta,
        heads,
        decoder,
        loss_node,
    })
}

/// Mixture weights after each epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightRow {
    pub epoch: usize,
    pub weights: Vec<f64>,
    pub mean_loss: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub rows: Vec<WeightRow>,
}

/// Optimizer state for one round of joint training.
pub struct WeNetTrainer<T: Real> {
    candidate_opts: Vec<Optimizer<T>>,
    logit_opt: Optimizer<T>,
    decoder_opt: Optimizer<T>,
    streams: Vec<Rng>,
    clip: Option<f64>,
    batches_seen: usize,
    /// Groups that already reported an overflowed gradient.
    overflowed: std::collections::BTreeSet<Group>,
}

impl<T: Real> WeNetTrainer<T> {
    /// `round_seed` seeds one dropout stream per candidate. Weight decay
    /// never applies to the mixture logits.
    pub fn new(
        state: &WeNetState<T>,
        opt: &OptimizerConfig,
        round_seed: u64,
        clip: Option<f64>,
    ) -> Result<Self> {
        if let Some(c) = clip {
            if !(c > 0.0) {
                return Err(Error::config(format!("gradient clip must be positive, got {c}")));
            }
        }
        let logit_cfg = opt.clone().with_weight_decay(0.0);
        Ok(WeNetTrainer {
            candidate_opts: (0..state.len())
                .map(|_| Optimizer::new(opt.clone()))
                .collect::<Result<_>>()?,
            logit_opt: Optimizer::new(logit_cfg)?,
            decoder_opt: Optimizer::new(opt.clone())?,
            streams: (0..state.len())
                .map(|i| rngs::candidate_stream(round_seed, i))
                .collect(),
            clip,
            batches_seen: 0,
            overflowed: Default::default(),
        })
    }

    /// One forward, one backward and one simultaneous update of every
    /// candidate and the mixture logits. Returns the mixture loss.
    pub fn step(
        &mut self,
        state: &mut WeNetState<T>,
        window: &BpttWindow,
        hidden: &mut Vec<Tensor<T>>,
    ) -> Result<f64> {
        let batch = self.batches_seen;
        self.batches_seen += 1;
        let fwd = wenet_forward(state, window, hidden, &mut self.streams, true)?;
        let loss = fwd.loss;
        if !loss.is_finite() {
            return Err(Error::NonFinite { batch, loss });
        }
        let grads = fwd.backward()?;
        *hidden = fwd.final_states(hidden);
        drop(fwd);

        for (i, ((c, g), opt)) in state
            .candidates
            .iter_mut()
            .zip(grads.candidates)
            .zip(&mut self.candidate_opts)
            .enumerate()
        {
            let Some(mut g) = g else { continue };
            if !prepare(&mut g, self.clip, batch, Group::Candidate(i), &mut self.overflowed) {
                continue;
            }
            let gref: Vec<&Tensor<T>> = g.iter().collect();
            opt.step(&mut c.params.tensors_mut(), &gref)?;
        }
        let mut logit_grad = vec![grads.logits];
        if prepare(&mut logit_grad, self.clip, batch, Group::Logits, &mut self.overflowed) {
            self.logit_opt.step(&mut [&mut state.logits], &[&logit_grad[0]])?;
        }
        if let (Some((dw, db)), Some((gw, gb))) = (state.shared_decoder.as_mut(), grads.shared_decoder) {
            let mut g = vec![gw, gb];
            if prepare(&mut g, self.clip, batch, Group::Decoder, &mut self.overflowed) {
                self.decoder_opt.step(&mut [dw, db], &[&g[0], &g[1]])?;
            }
        }
        Ok(loss)
    }
}

/// Clips one parameter group by its own norm. Returns false when the
/// gradient overflowed; the group then skips the update. Each group warns
/// once, later skips are logged at debug level.
fn prepare<T: Real>(
    grads: &mut [Tensor<T>],
    clip: Option<f64>,
    batch: usize,
    group: Group,
    overflowed: &mut std::collections::BTreeSet<Group>,
) -> bool {
    if !all_finite(grads) {
        if overflowed.insert(group) {
            log::warn!("batch {batch}: non-finite gradient for {group}; skipping its updates while this persists");
        } else {
            log::debug!("batch {batch}: non-finite gradient for {group}; update skipped");
        }
        return false;
    }
    if let Some(c) = clip {
        clip_global_norm(grads, c);
    }
    true
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Group {
    Candidate(usize),
    Logits,
    Decoder,
}

impl std::fmt::Display for Group {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Group::Candidate(i) => write!(f, "candidate {i}"),
            Group::Logits => f.write_str("mixture logits"),
            Group::Decoder => f.write_str("shared decoder"),
        }
    }
}

/// Trains the mixture for `epochs` passes over `windows` and records the
/// weights after each epoch. Hidden states start at zero every epoch and
/// carry across windows within it.
pub fn wenet_train<T: Real>(
    state: &mut WeNetState<T>,
    windows: &[BpttWindow],
    epochs: usize,
    opt: &OptimizerConfig,
    round_seed: u64,
    clip: Option<f64>,
) -> Result<TrainLog> {
    if windows.is_empty() {
        return Err(Error::config("no training windows"));
    }
    let mut trainer = WeNetTrainer::new(state, opt, round_seed, clip)?;
    let mut log = TrainLog::default();
    for epoch in 1..=epochs {
        let mut hidden = zero_states(state, windows[0].batch());
        let mut total = 0.0;
        let mut tokens = 0usize;
        for w in windows {
            let loss = trainer.step(state, w, &mut hidden)?;
            total += loss * w.token_count() as f64;
            tokens += w.token_count();
        }
        let row = WeightRow {
            epoch,
            weights: state.weights(),
            mean_loss: total / tokens as f64,
        };
        log::debug!("epoch {epoch}: loss {:.4} weights {:?}", row.mean_loss, row.weights);
        log.rows.push(row);
    }
    Ok(log)
}

/// Mean per-token loss of the mixture without dropout.
pub fn wenet_evaluate<T: Real>(state: &WeNetState<T>, windows: &[BpttWindow]) -> Result<f64> {
    if windows.is_empty() {
        return Err(Error::config("no evaluation windows"));
    }
    let mut hidden = zero_states(state, windows[0].batch());
    let mut streams: Vec<Rng> = (0..state.len()).map(|i| rngs::candidate_stream(0, i)).collect();
    let (mut total, mut tokens) = (0.0, 0usize);
    for w in windows {
        let fwd = wenet_forward(state, w, &hidden, &mut streams, false)?;
        total += fwd.loss * w.token_count() as f64;
        tokens += w.token_count();
        hidden = fwd.final_states(&hidden);
    }
    Ok(total / tokens as f64)
}

fn zero_states<T: Real>(state: &WeNetState<T>, batch: usize) -> Vec<Tensor<T>> {
    vec![Tensor::zeros(&[batch, state.model.hidden_dim]); state.len()]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cellspace::random_genome;
    use crate::lmdata::{batchify, bptt_windows, Corpus, Tokenization};
    use crate::model::{lm_forward, DropoutRates};
    use rand::SeedableRng;

    fn toy() -> (Vec<BpttWindow>, usize) {
        let text = "a b c a b c a b d a b c\nc b a c b a d d a\n".repeat(6);
        let corpus = Corpus::from_texts(&text, "a b c\n", "a b\n", Tokenization::Word).unwrap();
        let bc = batchify(&corpus.train, 4).unwrap();
        (bptt_windows(&bc, 5).unwrap(), corpus.vocab.len())
    }

    fn cfg(levels: usize) -> ModelConfig {
        ModelConfig::new(4, 4, levels).with_dropout(DropoutRates::NONE)
    }

    fn genomes(n: usize, levels: usize, seed: u64) -> Vec<Genome> {
        let mut rng = Rng::seed_from_u64(seed);
        (0..n).map(|_| random_genome(levels, &mut rng).unwrap()).collect()
    }

    fn cross_entropy(logits: &[f64], cols: usize, targets: &[usize]) -> f64 {
        let mut total = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            let row = &logits[r * cols..(r + 1) * cols];
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            total += lse - row[t];
        }
        total / targets.len() as f64
    }

    fn mixture_loss(state: &WeNetState<f64>, w: &BpttWindow) -> f64 {
        let h = zero_states(state, w.batch());
        let mut streams: Vec<Rng> = (0..state.len()).map(|i| rngs::candidate_stream(1, i)).collect();
        wenet_forward(state, w, &h, &mut streams, false).unwrap().loss
    }

    #[test]
    fn mixture_matches_hand_computed_weighted_logits() {
        let (windows, vocab) = toy();
        let w = &windows[0];
        let c = cfg(4);
        let mut state = WeNetState::<f64>::new(&genomes(3, 4, 1), &c, vocab, MixPoint::Logits, 9).unwrap();
        state.logits = Tensor::from_vec(vec![0.3, -1.1, 0.6]);

        let theta = [0.3f64, -1.1, 0.6];
        let z: f64 = theta.iter().map(|t| t.exp()).sum();
        let weights: Vec<f64> = theta.iter().map(|t| t.exp() / z).collect();
        let mut rng = Rng::seed_from_u64(0);
        let h0 = Tensor::zeros(&[w.batch(), 4]);
        let mut mixed = vec![0.0; w.token_count() * vocab];
        for (cand, wi) in state.candidates.iter().zip(&weights) {
            let pass = lm_forward(&cand.genome, &cand.params, w, &h0, &c, &mut rng, false).unwrap();
            for (m, v) in mixed.iter_mut().zip(pass.head_value().data()) {
                *m += wi * v;
            }
        }
        let expected = cross_entropy(&mixed, vocab, &w.flat_targets());
        let got = mixture_loss(&state, w);
        assert!((got - expected).abs() < 1e-6, "{got} vs {expected}");
        for (a, b) in state.weights().iter().zip(&weights) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn logit_gradient_matches_finite_differences() {
        let (windows, vocab) = toy();
        let w = &windows[1];
        let mut state = WeNetState::<f64>::new(&genomes(3, 3, 2), &cfg(3), vocab, MixPoint::Logits, 4).unwrap();
        state.logits = Tensor::from_vec(vec![0.5, 0.0, -0.4]);
        let h = zero_states(&state, w.batch());
        let mut streams: Vec<Rng> = (0..3).map(|i| rngs::candidate_stream(1, i)).collect();
        let grads = wenet_forward(&state, w, &h, &mut streams, false).unwrap().backward().unwrap();
        for j in 0..3 {
            let eps = 1e-6;
            let mut plus = state.clone();
            plus.logits.data_mut()[j] += eps;
            let mut minus = state.clone();
            minus.logits.data_mut()[j] -= eps;
            let fd = (mixture_loss(&plus, w) - mixture_loss(&minus, w)) / (2.0 * eps);
            assert!((fd - grads.logits.data()[j]).abs() < 1e-6);
        }
    }

    #[test]
    fn single_candidate_has_unit_weight_and_zero_logit_gradient() {
        let (windows, vocab) = toy();
        let mut state = WeNetState::<f64>::new(&genomes(1, 3, 3), &cfg(3), vocab, MixPoint::Logits, 1).unwrap();
        state.logits = Tensor::from_vec(vec![2.7]);
        assert_eq!(state.weights(), vec![1.0]);
        let h = zero_states(&state, windows[0].batch());
        let mut streams = vec![rngs::candidate_stream(0, 0)];
        let g = wenet_forward(&state, &windows[0], &h, &mut streams, false).unwrap().backward().unwrap();
        assert_eq!(g.logits.data(), &[0.0]);
    }

    #[test]
    fn equal_logits_give_the_mean_of_candidates() {
        let (windows, vocab) = toy();
        let w = &windows[0];
        let state = WeNetState::<f64>::new(&genomes(2, 3, 5), &cfg(3), vocab, MixPoint::Logits, 2).unwrap();
        let h = zero_states(&state, w.batch());
        let mut streams: Vec<Rng> = (0..2).map(|i| rngs::candidate_stream(0, i)).collect();
        let fwd = wenet_forward(&state, w, &h, &mut streams, false).unwrap();
        let a = fwd.passes[0].as_ref().unwrap().head_value().data();
        let b = fwd.passes[1].as_ref().unwrap().head_value().data();
        for ((m, x), y) in fwd.mixture_head.data().iter().zip(a).zip(b) {
            assert!((m - (x + y) / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_learning_rate_leaves_everything_unchanged() {
        let (windows, vocab) = toy();
        let mut state = WeNetState::<f64>::new(&genomes(3, 3, 6), &cfg(3), vocab, MixPoint::Logits, 3).unwrap();
        let before = state.clone();
        let log = wenet_train(&mut state, &windows, 1, &OptimizerConfig::sgd(0.0), 5, None).unwrap();
        assert_eq!(state.logits, before.logits);
        assert_eq!(state.candidates[1].params, before.candidates[1].params);
        assert_eq!(log.rows[0].weights, vec![1.0 / 3.0; 3]);
    }

    #[test]
    fn single_candidate_training_matches_solo_training_bit_for_bit() {
        let (windows, vocab) = toy();
        let c = ModelConfig::new(4, 4, 3).with_dropout(DropoutRates::REFERENCE);
        let g = genomes(1, 3, 7);
        let mut state = WeNetState::<f64>::new(&g, &c, vocab, MixPoint::Logits, 11).unwrap();
        let mut solo = state.candidates[0].params.clone();
        let opt = OptimizerConfig::adam(1e-2);
        wenet_train(&mut state, &windows, 2, &opt, 21, Some(0.25)).unwrap();

        let mut o = Optimizer::<f64>::new(opt).unwrap();
        let mut rng = rngs::candidate_stream(21, 0);
        for _ in 0..2 {
            let mut h = Tensor::zeros(&[4, 4]);
            for w in &windows {
                let pass = lm_forward(&g[0], &solo, w, &h, &c, &mut rng, true).unwrap();
                let mut grads = pass.gradients().unwrap();
                clip_global_norm(&mut grads, 0.25);
                let gref: Vec<&Tensor<f64>> = grads.iter().collect();
                o.step(&mut solo.tensors_mut(), &gref).unwrap();
                h = pass.h_final;
            }
        }
        assert_eq!(state.candidates[0].params, solo);
    }

    #[test]
    fn uniform_reference_loses_weight() {
        let (windows, vocab) = toy();
        let c = cfg(3);
        let mut state = WeNetState::<f64>::new(&genomes(1, 3, 8), &c, vocab, MixPoint::Logits, 5).unwrap();
        state.push_uniform_reference(genomes(1, 3, 9).remove(0)).unwrap();
        let opt = OptimizerConfig::adam(2e-2);
        let log = wenet_train(&mut state, &windows, 8, &opt, 3, None).unwrap();
        let w = &log.rows.last().unwrap().weights;
        assert!(w[0] > w[1], "{w:?}");
    }

    #[test]
    fn hidden_mix_trains_and_updates_shared_decoder() {
        let (windows, vocab) = toy();
        let mut state = WeNetState::<f64>::new(&genomes(2, 3, 10), &cfg(3), vocab, MixPoint::Hidden, 5).unwrap();
        let before = state.shared_decoder.clone().unwrap();
        let opt = OptimizerConfig::sgd(0.5);
        let log = wenet_train(&mut state, &windows, 3, &opt, 1, Some(0.25)).unwrap();
        assert_ne!(state.shared_decoder.unwrap().0, before.0);
        assert!(log.rows[2].mean_loss < log.rows[0].mean_loss);
    }

    #[test]
    fn top_k_is_stable_on_ties() {
        assert_eq!(top_k(&[0.2, 0.4, 0.2, 0.2], 3).unwrap(), vec![1, 0, 2]);
        assert!(top_k(&[0.5, 0.5], 3).is_err());
        assert!(top_k(&[0.5, 0.5], 0).is_err());
    }

    #[test]
    fn mismatched_state_counts_are_rejected() {
        let (windows, vocab) = toy();
        let state = WeNetState::<f64>::new(&genomes(2, 3, 1), &cfg(3), vocab, MixPoint::Logits, 1).unwrap();
        let h = zero_states(&state, 4);
        let mut streams = vec![rngs::candidate_stream(0, 0)];
        assert!(wenet_forward(&state, &windows[0], &h, &mut streams, false).is_err());
    }
}
