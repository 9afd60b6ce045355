//! A genome-defined recurrent cell wrapped into a word-level language model.
//!
//! Node 0 blends the input into the previous state through a highway gate:
//!
//! ```text
//! c   = sigmoid(W_x x_t)
//! h   = tanh(W_h h_{t-1})
//! s_0 = h_{t-1} + c * (h - h_{t-1})
//! ```
//!
//! Intermediate node `i` computes `s_i = op_i(W_i s_{ancestor(i)})`, and the
//! cell output is the mean of `s_1 .. s_{L-1}` (node 0 is not averaged).
//! Weight matrices are stored `[out, in]`, so `W x` is a row-wise `X W^T`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{
    check_rate, variational_dropout_mask, Graph, NodeId, Real, Tensor, BATCH_NORM_EPS,
};
use crate::cellspace::Genome;
use crate::error::{Error, Result};
use crate::lmdata::BpttWindow;

/// Initialization half-width for every weight matrix.
pub const INIT_RANGE: f64 = 0.1;

/// Norm above which a hidden state is reported as diverging.
pub const DIVERGENCE_NORM: f64 = 1e6;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Architecture search: per-node batch normalization is active.
    #[default]
    Search,
    /// Training a chosen cell from scratch: no batch normalization.
    Eval,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DropoutRates {
    /// Locked mask on the embedded input sequence.
    pub embedding: f64,
    /// Mask on `x_t` before it enters node 0.
    pub cell_input: f64,
    /// Mask on every cell output `h_t`, including the recurrent path.
    pub hidden: f64,
    /// Mask on the decoder input.
    pub output: f64,
}

impl DropoutRates {
    pub const NONE: DropoutRates = DropoutRates {
        embedding: 0.0,
        cell_input: 0.0,
        hidden: 0.0,
        output: 0.0,
    };

    /// Search-time rates of the reference setup.
    pub const REFERENCE: DropoutRates = DropoutRates {
        embedding: 0.2,
        cell_input: 0.75,
        hidden: 0.25,
        output: 0.75,
    };

    pub fn validate(&self) -> Result<()> {
        for r in [self.embedding, self.cell_input, self.hidden, self.output] {
            check_rate(r)?;
        }
        Ok(())
    }
}

impl Default for DropoutRates {
    fn default() -> Self {
        Self::REFERENCE
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub emb_dim: usize,
    pub hidden_dim: usize,
    pub levels: usize,
    pub dropout: DropoutRates,
    pub batch_norm: bool,
    pub mode: Mode,
}

impl ModelConfig {
    pub fn new(emb_dim: usize, hidden_dim: usize, levels: usize) -> Self {
        ModelConfig {
            emb_dim,
            hidden_dim,
            levels,
            dropout: DropoutRates::REFERENCE,
            batch_norm: true,
            mode: Mode::Search,
        }
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_dropout(mut self, dropout: DropoutRates) -> Self {
        self.dropout = dropout;
        self
    }

    pub fn batch_norm_active(&self) -> bool {
        self.batch_norm && self.mode == Mode::Search
    }

    pub fn validate(&self) -> Result<()> {
        if self.emb_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::config("embedding and hidden sizes must be positive"));
        }
        if self.levels < 2 {
            return Err(Error::config(format!(
                "a cell needs at least 2 levels, got {}",
                self.levels
            )));
        }
        self.dropout.validate()
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::new(64, 64, 8)
    }
}

/// Cell weights: `w_x` is `[hidden, emb]`, `w_h` and each edge `[hidden, hidden]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CellParams<T: Real = f64> {
    pub w_x: Tensor<T>,
    pub w_h: Tensor<T>,
    /// `edges[i - 1]` belongs to intermediate node `i`.
    pub edges: Vec<Tensor<T>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LmParams<T: Real = f64> {
    /// `[vocab, emb]`.
    pub embedding: Tensor<T>,
    /// `[vocab, hidden]`.
    pub decoder_w: Tensor<T>,
    /// `[vocab]`.
    pub decoder_b: Tensor<T>,
    pub cell: CellParams<T>,
}

impl<T: Real> LmParams<T> {
    pub fn vocab_size(&self) -> usize {
        self.embedding.shape()[0]
    }

    /// Tensors in canonical order: embedding, w_x, w_h, edges, decoder.
    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        let mut out = vec![&self.embedding, &self.cell.w_x, &self.cell.w_h];
        out.extend(self.cell.edges.iter());
        out.push(&self.decoder_w);
        out.push(&self.decoder_b);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = vec![&mut self.embedding, &mut self.cell.w_x, &mut self.cell.w_h];
        out.extend(self.cell.edges.iter_mut());
        out.push(&mut self.decoder_w);
        out.push(&mut self.decoder_b);
        out
    }

    /// Checkpoint key of each tensor, aligned with [`tensors`](Self::tensors).
    pub fn names(&self) -> Vec<String> {
        let mut out = vec!["embedding".to_string(), "w_x".into(), "w_h".into()];
        out.extend((1..=self.cell.edges.len()).map(|i| format!("edge_{i}")));
        out.push("decoder_w".into());
        out.push("decoder_b".into());
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn cast<U: Real>(&self) -> LmParams<U> {
        LmParams {
            embedding: self.embedding.cast(),
            decoder_w: self.decoder_w.cast(),
            decoder_b: self.decoder_b.cast(),
            cell: CellParams {
                w_x: self.cell.w_x.cast(),
                w_h: self.cell.w_h.cast(),
                edges: self.cell.edges.iter().map(Tensor::cast).collect(),
            },
        }
    }

    /// Replaces every tensor, in canonical order.
    pub fn assign(&mut self, values: &[Tensor<T>]) -> Result<()> {
        let mut targets = self.tensors_mut();
        if targets.len() != values.len() {
            return Err(Error::Dimension {
                op: "assign params",
                left: vec![targets.len()],
                right: vec![values.len()],
            });
        }
        for (t, v) in targets.iter_mut().zip(values) {
            if t.shape() != v.shape() {
                return Err(Error::Dimension {
                    op: "assign params",
                    left: t.shape().to_vec(),
                    right: v.shape().to_vec(),
                });
            }
            **t = v.clone();
        }
        Ok(())
    }
}

/// Allocates all matrices from `uniform(-0.1, 0.1)`; the decoder bias starts at zero.
pub fn init_params<T: Real, R: Rng + ?Sized>(
    genome: &Genome,
    cfg: &ModelConfig,
    vocab_size: usize,
    rng: &mut R,
) -> Result<LmParams<T>> {
    genome.check()?;
    cfg.validate()?;
    if genome.levels != cfg.levels {
        return Err(Error::config(format!(
            "genome has {} levels but the model is configured for {}",
            genome.levels, cfg.levels
        )));
    }
    if vocab_size == 0 {
        return Err(Error::config("vocabulary is empty"));
    }
    let (e, h) = (cfg.emb_dim, cfg.hidden_dim);
    let embedding = Tensor::uniform(&[vocab_size, e], INIT_RANGE, rng);
    let w_x = Tensor::uniform(&[h, e], INIT_RANGE, rng);
    let w_h = Tensor::uniform(&[h, h], INIT_RANGE, rng);
    let edges = (1..genome.levels)
        .map(|_| Tensor::uniform(&[h, h], INIT_RANGE, rng))
        .collect();
    let decoder_w = Tensor::uniform(&[vocab_size, h], INIT_RANGE, rng);
    Ok(LmParams {
        embedding,
        decoder_w,
        decoder_b: Tensor::zeros(&[vocab_size]),
        cell: CellParams { w_x, w_h, edges },
    })
}

/// Graph handles of a cell's weights.
#[derive(Clone, Debug)]
pub struct CellNodes {
    pub w_x: NodeId,
    pub w_h: NodeId,
    pub edges: Vec<NodeId>,
}

/// `s_0 = h_prev + sigmoid(W_x x) * (tanh(W_h h_prev) - h_prev)`.
pub fn node0<T: Real>(
    g: &mut Graph<T>,
    x: NodeId,
    h_prev: NodeId,
    w_x: NodeId,
    w_h: NodeId,
) -> Result<NodeId> {
    let gate_in = g.affine(w_x, x)?;
    let c = g.activation(crate::cellspace::OpKind::Sigmoid, gate_in);
    let cand_in = g.affine(w_h, h_prev)?;
    let h = g.activation(crate::cellspace::OpKind::Tanh, cand_in);
    let delta = g.sub(h, h_prev)?;
    let gated = g.mul(c, delta)?;
    g.add(h_prev, gated)
}

/// One recurrent step; returns the mean of the intermediate node states.
pub fn cell_step<T: Real>(
    g: &mut Graph<T>,
    genome: &Genome,
    cell: &CellNodes,
    x: NodeId,
    h_prev: NodeId,
    batch_norm: bool,
) -> Result<NodeId> {
    if cell.edges.len() != genome.genes.len() {
        return Err(Error::config(format!(
            "genome has {} intermediate nodes but {} edge matrices were given",
            genome.genes.len(),
            cell.edges.len()
        )));
    }
    let mut states = Vec::with_capacity(genome.levels);
    states.push(node0(g, x, h_prev, cell.w_x, cell.w_h)?);
    for (gene, &w) in genome.genes.iter().zip(&cell.edges) {
        let pre = g.affine(w, states[gene.ancestor])?;
        let pre = g.batch_norm(pre, batch_norm, BATCH_NORM_EPS)?;
        states.push(g.activation(gene.op, pre));
    }
    let total = g.sum_n(&states[1..])?;
    Ok(g.scale(total, T::from_f64(1.0 / genome.genes.len() as f64)))
}

/// What the forward pass exposes as its output.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Head {
    /// Decoder logits `[steps * batch, vocab]` plus the cross-entropy loss.
    Logits,
    /// Dropped-out cell outputs `[steps * batch, hidden]`; no decoder.
    Hidden,
}

/// A recorded forward pass over one BPTT window.
#[derive(Clone, Debug)]
pub struct ForwardPass<T: Real> {
    pub graph: Graph<T>,
    /// Parameter leaves in [`LmParams::tensors`] order.
    pub param_nodes: Vec<NodeId>,
    pub head: NodeId,
    pub loss: Option<NodeId>,
    /// Last undropped cell output, detached, for carry-over.
    pub h_final: Tensor<T>,
}

impl<T: Real> ForwardPass<T> {
    pub fn loss_value(&self) -> Option<f64> {
        self.loss.map(|l| self.graph.value(l).data()[0].as_f64())
    }

    pub fn head_value(&self) -> &Tensor<T> {
        self.graph.value(self.head)
    }

    /// Parameter gradients of the cross-entropy loss.
    pub fn gradients(&self) -> Result<Vec<Tensor<T>>> {
        let loss = self
            .loss
            .ok_or_else(|| Error::Contract("forward pass has no loss node".into()))?;
        let mut grads = self.graph.backward(loss)?;
        Ok(self.collect(&mut grads))
    }

    /// Parameter gradients given an upstream gradient for the head.
    pub fn gradients_from_head(&self, head_grad: Tensor<T>) -> Result<Vec<Tensor<T>>> {
        let mut grads = self.graph.backward_from(&[(self.head, head_grad)])?;
        Ok(self.collect(&mut grads))
    }

    fn collect(&self, grads: &mut crate::autodiff::Gradients<T>) -> Vec<Tensor<T>> {
        self.param_nodes
            .iter()
            .map(|&id| grads.take(id).expect("parameters always receive gradients"))
            .collect()
    }
}

struct Masks<T: Real> {
    input: Option<Tensor<T>>,
    hidden: Option<Tensor<T>>,
    output: Option<Tensor<T>>,
}

fn draw_masks<T: Real, R: Rng + ?Sized>(
    cfg: &ModelConfig,
    batch: usize,
    training: bool,
    rng: &mut R,
) -> Result<Masks<T>> {
    let d = cfg.dropout;
    let mask = |shape: &[usize], rate: f64, rng: &mut R| -> Result<Option<Tensor<T>>> {
        if training && rate > 0.0 {
            variational_dropout_mask(shape, rate, rng).map(Some)
        } else {
            Ok(None)
        }
    };
    let emb = mask(&[batch, cfg.emb_dim], d.embedding, rng)?;
    let cell_in = mask(&[batch, cfg.emb_dim], d.cell_input, rng)?;
    let hidden = mask(&[batch, cfg.hidden_dim], d.hidden, rng)?;
    let output = mask(&[batch, cfg.hidden_dim], d.output, rng)?;
    let combine = |a: Option<Tensor<T>>, b: Option<Tensor<T>>| match (a, b) {
        (Some(mut a), Some(b)) => {
            a.data_mut().iter_mut().zip(b.data()).for_each(|(x, &y)| *x *= y);
            Some(a)
        }
        (a, None) => a,
        (None, b) => b,
    };
    let output = combine(output, hidden.clone());
    Ok(Masks {
        input: combine(emb, cell_in),
        hidden,
        output,
    })
}

fn check_inputs<T: Real>(
    genome: &Genome,
    params: &LmParams<T>,
    window: &BpttWindow,
    h_init: &Tensor<T>,
    cfg: &ModelConfig,
) -> Result<()> {
    genome.check()?;
    cfg.validate()?;
    if params.cell.edges.len() != genome.genes.len() || genome.levels != cfg.levels {
        return Err(Error::config(format!(
            "parameters hold {} edge matrices; genome needs {} and config says {} levels",
            params.cell.edges.len(),
            genome.genes.len(),
            cfg.levels
        )));
    }
    if window.is_empty() {
        return Err(Error::config("bptt window has zero steps"));
    }
    let batch = window.batch();
    if h_init.shape() != [batch, cfg.hidden_dim] {
        return Err(Error::Dimension {
            op: "initial hidden state",
            left: h_init.shape().to_vec(),
            right: vec![batch, cfg.hidden_dim],
        });
    }
    Ok(())
}

/// Runs the language model over one window and records it for backward.
///
/// Dropout masks are drawn once per window from `rng` (embedding, cell
/// input, hidden, output, in that order) and only when `training`.
#[allow(clippy::too_many_arguments)]
pub fn forward<T: Real, R: Rng + ?Sized>(
    genome: &Genome,
    params: &LmParams<T>,
    window: &BpttWindow,
    h_init: &Tensor<T>,
    cfg: &ModelConfig,
    rng: &mut R,
    training: bool,
    head: Head,
) -> Result<ForwardPass<T>> {
    check_inputs(genome, params, window, h_init, cfg)?;
    let batch = window.batch();
    let masks = draw_masks::<T, R>(cfg, batch, training, rng)?;

    let mut g = Graph::new();
    let param_nodes: Vec<NodeId> = params.tensors().into_iter().map(|t| g.param(t.clone())).collect();
    let n_edges = genome.genes.len();
    let emb = param_nodes[0];
    let cell = CellNodes {
        w_x: param_nodes[1],
        w_h: param_nodes[2],
        edges: param_nodes[3..3 + n_edges].to_vec(),
    };
    let dec_w = param_nodes[3 + n_edges];
    let dec_b = param_nodes[4 + n_edges];

    let input_mask = masks.input.map(|m| g.constant(m));
    let hidden_mask = masks.hidden.map(|m| g.constant(m));
    let output_mask = masks.output.map(|m| g.constant(m));
    let bn = cfg.batch_norm_active();

    let mut h = g.constant(h_init.clone());
    let mut outputs = Vec::with_capacity(window.len());
    let mut last_raw = h;
    for tokens in &window.inputs {
        let mut x = g.gather(emb, tokens)?;
        if let Some(m) = input_mask {
            x = g.mul(x, m)?;
        }
        let h_t = cell_step(&mut g, genome, &cell, x, h, bn)?;
        last_raw = h_t;
        h = match hidden_mask {
            Some(m) => g.mul(h_t, m)?,
            None => h_t,
        };
        outputs.push(match output_mask {
            Some(m) => g.mul(h_t, m)?,
            None => h_t,
        });
    }
    let h_final = g.value(last_raw).clone();
    if !h_final.is_finite() || h_final.sq_norm().as_f64().sqrt() > DIVERGENCE_NORM {
        log::warn!(
            "hidden state diverging for cell {genome}: norm {}",
            h_final.sq_norm().as_f64().sqrt()
        );
    }

    let stacked = g.concat_rows(&outputs)?;
    let (head_id, loss) = match head {
        Head::Hidden => (stacked, None),
        Head::Logits => {
            let proj = g.affine(dec_w, stacked)?;
            let logits = g.add_bias(proj, dec_b)?;
            let loss = g.cross_entropy(logits, &window.flat_targets())?;
            (logits, Some(loss))
        }
    };
    Ok(ForwardPass {
        graph: g,
        param_nodes,
        head: head_id,
        loss,
        h_final,
    })
}

/// Mean cross-entropy over a window plus the detached final hidden state.
pub fn lm_forward<T: Real, R: Rng + ?Sized>(
    genome: &Genome,
    params: &LmParams<T>,
    window: &BpttWindow,
    h_init: &Tensor<T>,
    cfg: &ModelConfig,
    rng: &mut R,
    training: bool,
) -> Result<ForwardPass<T>> {
    forward(genome, params, window, h_init, cfg, rng, training, Head::Logits)
}

/// Hidden-state norms of a cell driven by `inputs` (`[batch, emb]` each).
#[derive(Clone, Debug)]
pub struct HiddenTrace {
    pub norms: Vec<f64>,
    /// First step whose state was non-finite or above [`DIVERGENCE_NORM`].
    pub diverged_at: Option<usize>,
}

/// Runs the cell without recording gradients. Divergence is reported in
/// the trace and logged; the rollout stops at the first non-finite state.
pub fn rollout<T: Real>(
    genome: &Genome,
    cell: &CellParams<T>,
    inputs: &[Tensor<T>],
    h0: &Tensor<T>,
    batch_norm: bool,
) -> Result<HiddenTrace> {
    genome.check()?;
    let mut h = h0.clone();
    let mut trace = HiddenTrace {
        norms: Vec::with_capacity(inputs.len()),
        diverged_at: None,
    };
    for (t, x) in inputs.iter().enumerate() {
        let mut g = Graph::new();
        let nodes = CellNodes {
            w_x: g.constant(cell.w_x.clone()),
            w_h: g.constant(cell.w_h.clone()),
            edges: cell.edges.iter().map(|e| g.constant(e.clone())).collect(),
        };
        let xi = g.constant(x.clone());
        let hi = g.constant(h);
        let out = cell_step(&mut g, genome, &nodes, xi, hi, batch_norm)?;
        h = g.value(out).clone();
        let norm = h.sq_norm().as_f64().sqrt();
        trace.norms.push(norm);
        if !norm.is_finite() || norm > DIVERGENCE_NORM {
            if trace.diverged_at.is_none() {
                log::warn!("cell {genome} diverged at step {t}: hidden norm {norm}");
                trace.diverged_at = Some(t);
            }
            if !norm.is_finite() {
                break;
            }
        }
    }
    Ok(trace)
}

/// On-disk model: configuration, genome, vocabulary and named tensors.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub config: ModelConfig,
    pub genome: Genome,
    pub vocab: Vec<String>,
    pub tensors: BTreeMap<String, Tensor<f64>>,
    #[serde(default)]
    pub run_config: serde_json::Value,
}

pub const CHECKPOINT_FORMAT: &str = "wenas-checkpoint-v1";

impl Checkpoint {
    pub fn new<T: Real>(
        config: &ModelConfig,
        genome: &Genome,
        vocab: &[String],
        params: &LmParams<T>,
        run_config: serde_json::Value,
    ) -> Self {
        let tensors = params
            .names()
            .into_iter()
            .zip(params.tensors())
            .map(|(n, t)| (n, t.cast()))
            .collect();
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            config: config.clone(),
            genome: genome.clone(),
            vocab: vocab.to_vec(),
            tensors,
            run_config,
        }
    }

    pub fn params<T: Real>(&self) -> Result<LmParams<T>> {
        let get = |name: &str| -> Result<Tensor<T>> {
            self.tensors
                .get(name)
                .map(Tensor::cast)
                .ok_or_else(|| Error::config(format!("checkpoint is missing tensor `{name}`")))
        };
        Ok(LmParams {
            embedding: get("embedding")?,
            decoder_w: get("decoder_w")?,
            decoder_b: get("decoder_b")?,
            cell: CellParams {
                w_x: get("w_x")?,
                w_h: get("w_h")?,
                edges: (1..self.genome.levels)
                    .map(|i| get(&format!("edge_{i}")))
                    .collect::<Result<_>>()?,
            },
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string(self)?;
        fs::write(path.as_ref(), text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        let ck: Checkpoint = serde_json::from_str(&text)?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::config(format!("unsupported checkpoint format `{}`", ck.format)));
        }
        Ok(ck)
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::cellspace::{NodeGene, OpKind};

    fn sigmoid(v: f64) -> f64 {
        1.0 / (1.0 + (-v).exp())
    }

    #[test]
    fn parameter_count_matches_shape_arithmetic() {
        let g = crate::cellspace::random_genome(8, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let cfg = ModelConfig::new(200, 200, 8);
        let p: LmParams<f32> = init_params(&g, &cfg, 100, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(p.cell.edges.len(), 7);
        let (v, e, h) = (100, 200, 200);
        let expected = v * e + h * e + h * h + 7 * h * h + v * h + v;
        assert_eq!(expected, 400_100);
        assert_eq!(p.parameter_count(), expected);
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let g = crate::cellspace::random_genome(4, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let cfg = ModelConfig::new(6, 5, 4);
        let a: LmParams<f64> = init_params(&g, &cfg, 9, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b: LmParams<f64> = init_params(&g, &cfg, 9, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
        assert!(a
            .tensors()
            .iter()
            .all(|t| t.data().iter().all(|v| v.abs() < INIT_RANGE)));
    }

    #[test]
    fn node0_zero_state_is_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut g = Graph::<f64>::new();
        let wx = g.constant(Tensor::uniform(&[3, 2], 1.0, &mut rng));
        let wh = g.constant(Tensor::uniform(&[3, 3], 1.0, &mut rng));
        let x = g.constant(Tensor::uniform(&[2, 2], 1.0, &mut rng));
        let h = g.constant(Tensor::zeros(&[2, 3]));
        let s0 = node0(&mut g, x, h, wx, wh).unwrap();
        assert!(g.value(s0).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn node0_half_gate_is_midpoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut g = Graph::<f64>::new();
        let wx = g.constant(Tensor::zeros(&[3, 2]));
        let wh_t = Tensor::uniform(&[3, 3], 1.0, &mut rng);
        let h_t = Tensor::uniform(&[1, 3], 1.0, &mut rng);
        let wh = g.constant(wh_t.clone());
        let x = g.constant(Tensor::uniform(&[1, 2], 1.0, &mut rng));
        let h = g.constant(h_t.clone());
        let s0 = node0(&mut g, x, h, wx, wh).unwrap();
        for i in 0..3 {
            let pre: f64 = (0..3).map(|k| wh_t.get(&[i, k]) * h_t.get(&[0, k])).sum();
            let expected = (h_t.get(&[0, i]) + pre.tanh()) / 2.0;
            assert!((g.value(s0).data()[i] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn node0_matches_scalar_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (b, e, h) = (2, 3, 4);
        let wx_t = Tensor::<f64>::uniform(&[h, e], 1.0, &mut rng);
        let wh_t = Tensor::<f64>::uniform(&[h, h], 1.0, &mut rng);
        let x_t = Tensor::<f64>::uniform(&[b, e], 1.0, &mut rng);
        let hp_t = Tensor::<f64>::uniform(&[b, h], 1.0, &mut rng);
        let mut g = Graph::new();
        let (wx, wh) = (g.constant(wx_t.clone()), g.constant(wh_t.clone()));
        let (x, hp) = (g.constant(x_t.clone()), g.constant(hp_t.clone()));
        let s0 = node0(&mut g, x, hp, wx, wh).unwrap();
        for r in 0..b {
            for i in 0..h {
                let gx: f64 = (0..e).map(|k| wx_t.get(&[i, k]) * x_t.get(&[r, k])).sum();
                let gh: f64 = (0..h).map(|k| wh_t.get(&[i, k]) * hp_t.get(&[r, k])).sum();
                let c = sigmoid(gx);
                let prev = hp_t.get(&[r, i]);
                let expected = prev + c * (gh.tanh() - prev);
                assert!((g.value(s0).get(&[r, i]) - expected).abs() < 1e-14);
            }
        }
    }

    fn cell_graph(edges: Vec<Tensor<f64>>) -> (Graph<f64>, NodeId, CellNodes, NodeId, NodeId) {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut g = Graph::new();
        let cell = CellNodes {
            w_x: g.constant(Tensor::uniform(&[3, 3], 1.0, &mut rng)),
            w_h: g.constant(Tensor::uniform(&[3, 3], 1.0, &mut rng)),
            edges: edges.into_iter().map(|e| g.constant(e)).collect(),
        };
        let x = g.constant(Tensor::uniform(&[2, 3], 1.0, &mut rng));
        let h = g.constant(Tensor::uniform(&[2, 3], 1.0, &mut rng));
        let s0 = node0(&mut g, x, h, cell.w_x, cell.w_h).unwrap();
        (g, s0, cell, x, h)
    }

    #[test]
    fn identity_chain_returns_node0() {
        let genome = Genome::new(2, vec![NodeGene::new(0, OpKind::Identity)]).unwrap();
        let (mut g, s0, cell, x, h) = cell_graph(vec![Tensor::identity(3)]);
        let out = cell_step(&mut g, &genome, &cell, x, h, false).unwrap();
        assert_eq!(g.value(out), g.value(s0));
    }

    #[test]
    fn zero_edges_propagate_zero() {
        let genome =
            Genome::from_pairs(&[("tanh", 0), ("relu", 1), ("identity", 0), ("relu", 2)]).unwrap();
        let (mut g, _, cell, x, h) = cell_graph(vec![Tensor::zeros(&[3, 3]); 4]);
        let out = cell_step(&mut g, &genome, &cell, x, h, false).unwrap();
        assert!(g.value(out).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn node_four_is_relu_of_node_one() {
        let genome = Genome::from_pairs(&[("relu", 0), ("relu", 1), ("tanh", 2), ("relu", 1)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let edges: Vec<Tensor<f64>> = (0..4).map(|_| Tensor::uniform(&[3, 3], 1.0, &mut rng)).collect();
        let (mut g, s0, cell, x, h) = cell_graph(edges.clone());
        let out = cell_step(&mut g, &genome, &cell, x, h, false).unwrap();

        let apply = |w: &Tensor<f64>, s: &[f64], op: fn(f64) -> f64| -> Vec<f64> {
            s.chunks(3)
                .flat_map(|row| (0..3).map(move |i| op((0..3).map(|k| w.get(&[i, k]) * row[k]).sum())))
                .collect()
        };
        let relu = |v: f64| v.max(0.0);
        let s0v = g.value(s0).data().to_vec();
        let s1 = apply(&edges[0], &s0v, relu);
        let s2 = apply(&edges[1], &s1, relu);
        let s3 = apply(&edges[2], &s2, f64::tanh);
        let s4 = apply(&edges[3], &s1, relu);
        for j in 0..6 {
            let mean = (s1[j] + s2[j] + s3[j] + s4[j]) / 4.0;
            assert!((g.value(out).data()[j] - mean).abs() < 1e-14);
        }
    }

    #[test]
    fn rollout_flags_exploding_identity_cell() {
        let genome = Genome::from_pairs(&[("identity", 0), ("identity", 1)]).unwrap();
        let cell = CellParams::<f64> {
            w_x: Tensor::zeros(&[2, 2]),
            w_h: Tensor::zeros(&[2, 2]),
            edges: vec![Tensor::identity(2).map(|v| v * 10.0); 2],
        };
        let inputs = vec![Tensor::zeros(&[1, 2]); 50];
        let h0 = Tensor::new(vec![1, 2], vec![1.0, 1.0]).unwrap();
        let trace = rollout(&genome, &cell, &inputs, &h0, false).unwrap();
        assert!(trace.diverged_at.is_some());
    }
}
