//! Browser demo: draw sampled cells, count the search space, and watch a
//! small weighted-network mixture sort its candidates while it trains.

use std::fmt::Write as _;

use rand::SeedableRng;
use wasm_bindgen::prelude::*;

use wenas::autodiff::{OptimizerConfig, Tensor};
use wenas::cellspace::{random_genome, random_pool, search_space_size, Genome};
use wenas::lmdata::{batchify, bptt_windows, BpttWindow, MarkovSource};
use wenas::model::{DropoutRates, Mode, ModelConfig};
use wenas::rngs::{derive_seed, Rng};
use wenas::wenet::{wenet_evaluate, MixPoint, WeNetState, WeNetTrainer};

const SYMBOLS: usize = 8;
const DIM: usize = 16;
const BATCH: usize = 8;
const BPTT: usize = 12;

/// Samples a cell with `levels` nodes.
pub fn sample_cell(levels: usize, seed: u64) -> wenas::Result<Genome> {
    random_genome(levels, &mut Rng::seed_from_u64(seed))
}

/// Reads the JSON genome format or `[('op', ancestor), ...]` pairs.
pub fn parse_cell(text: &str) -> wenas::Result<Genome> {
    let t = text.trim();
    if t.starts_with('{') {
        Genome::from_json(t)
    } else {
        Genome::parse_pairs(t)
    }
}

/// The cell as an SVG DAG: nodes left to right, ancestor edges arched above,
/// dashed edges into the averaged output below.
pub fn cell_svg(g: &Genome) -> String {
    let step = 86.0;
    let (x0, y) = (46.0, 150.0);
    let width = x0 * 2.0 + step * (g.levels as f64 - 1.0).max(1.0);
    let out_x = x0 + step * (g.levels as f64) / 2.0;
    let x = |i: usize| x0 + step * i as f64;
    let mut s = String::new();
    let _ = write!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {width:.0} 260" font-family="monospace" font-size="12">"#
    );
    s.push_str(r##"<defs><marker id="arr" viewBox="0 0 10 10" refX="9" refY="5" markerWidth="7" markerHeight="7" orient="auto"><path d="M0,0L10,5L0,10z" fill="#555"/></marker></defs>"##);
    for (k, gene) in g.genes.iter().enumerate() {
        let (a, b) = (x(gene.ancestor) + 14.0, x(k + 1) - 14.0);
        let lift = 22.0 + 18.0 * (k + 1 - gene.ancestor) as f64;
        let _ = write!(
            s,
            r##"<path d="M{a:.1},{y0:.1} Q{mx:.1},{cy:.1} {b:.1},{y0:.1}" fill="none" stroke="#555" marker-end="url(#arr)"/>"##,
            y0 = y - 10.0,
            mx = (a + b) / 2.0,
            cy = y - 10.0 - lift,
        );
    }
    for i in 1..g.levels {
        let _ = write!(
            s,
            r##"<line x1="{:.1}" y1="{:.1}" x2="{out_x:.1}" y2="222" stroke="#999" stroke-dasharray="4 3"/>"##,
            x(i),
            y + 18.0
        );
    }
    for i in 0..g.levels {
        let (label, fill) = if i == 0 {
            ("gate".to_string(), "#e8e0ff")
        } else {
            let op = g.genes[i - 1].op;
            (op.name().to_string(), op_color(op.name()))
        };
        let _ = write!(
            s,
            r##"<circle cx="{cx:.1}" cy="{y:.1}" r="18" fill="{fill}" stroke="#333"/><text x="{cx:.1}" y="{ty:.1}" text-anchor="middle">{i}</text><text x="{cx:.1}" y="{ly:.1}" text-anchor="middle" fill="#333">{label}</text>"##,
            cx = x(i),
            ty = y + 4.0,
            ly = y + 34.0,
        );
    }
    let _ = write!(
        s,
        r##"<rect x="{:.1}" y="222" width="60" height="24" rx="5" fill="#fff4d6" stroke="#333"/><text x="{out_x:.1}" y="238" text-anchor="middle">mean</text></svg>"##,
        out_x - 30.0
    );
    s
}

fn op_color(op: &str) -> &'static str {
    match op {
        "tanh" => "#d6ecff",
        "relu" => "#ffe0d6",
        "sigmoid" => "#dcf5dc",
        _ => "#eeeeee",
    }
}

/// A small mixture of random cells plus one uniform-output reference,
/// trained jointly on a synthetic Markov corpus.
pub struct Demo {
    state: WeNetState<f32>,
    trainer: WeNetTrainer<f32>,
    train: Vec<BpttWindow>,
    valid: Vec<BpttWindow>,
    hidden: Vec<Tensor<f32>>,
    cursor: usize,
    epoch: usize,
}

impl Demo {
    pub fn new(candidates: usize, levels: usize, seed: u64) -> wenas::Result<Self> {
        if candidates == 0 || candidates > 12 {
            return Err(wenas::Error::config("the demo runs 1 to 12 candidates"));
        }
        let mut rng = Rng::seed_from_u64(derive_seed(seed, "demo-corpus", 0));
        let source = MarkovSource::new(SYMBOLS, &[1.0, 2.0], &mut rng)?;
        let train = bptt_windows(&batchify(&source.sample(6000, &mut rng), BATCH)?, BPTT)?;
        let valid = bptt_windows(&batchify(&source.sample(1200, &mut rng), BATCH)?, BPTT)?;

        let mut rng = Rng::seed_from_u64(derive_seed(seed, "demo-pool", 0));
        let genomes = random_pool(candidates, levels, &mut rng, false)?;
        let model = ModelConfig::new(DIM, DIM, levels)
            .with_dropout(DropoutRates::NONE)
            .with_mode(Mode::Search);
        let mut state = WeNetState::new(&genomes, &model, SYMBOLS, MixPoint::Logits, derive_seed(seed, "demo-init", 0))?;
        state.push_uniform_reference(genomes[0].clone())?;
        let opt = OptimizerConfig::adam(1e-2);
        let trainer = WeNetTrainer::new(&state, &opt, derive_seed(seed, "demo-dropout", 0), Some(0.25))?;
        let hidden = vec![Tensor::zeros(&[BATCH, DIM]); state.len()];
        Ok(Demo {
            state,
            trainer,
            train,
            valid,
            hidden,
            cursor: 0,
            epoch: 0,
        })
    }

    /// Runs up to `n` mini-batches and returns their mean loss. The hidden
    /// state resets at each epoch boundary.
    pub fn train_batches(&mut self, n: usize) -> wenas::Result<f64> {
        let mut total = 0.0;
        for _ in 0..n.max(1) {
            if self.cursor == self.train.len() {
                self.cursor = 0;
                self.epoch += 1;
                for h in &mut self.hidden {
                    *h = Tensor::zeros(&[BATCH, DIM]);
                }
            }
            total += self.trainer.step(&mut self.state, &self.train[self.cursor], &mut self.hidden)?;
            self.cursor += 1;
        }
        Ok(total / n.max(1) as f64)
    }

    pub fn weights(&self) -> Vec<f64> {
        self.state.weights()
    }

    /// Cell descriptions in candidate order; the reference is marked.
    pub fn labels(&self) -> Vec<String> {
        self.state
            .candidates
            .iter()
            .map(|c| if c.uniform { "uniform reference".to_string() } else { c.genome.to_pairs_string() })
            .collect()
    }

    pub fn genome(&self, i: usize) -> Option<&Genome> {
        self.state.candidates.get(i).map(|c| &c.genome)
    }

    /// Completed epochs plus the fraction of the current one.
    pub fn progress(&self) -> f64 {
        self.epoch as f64 + self.cursor as f64 / self.train.len() as f64
    }

    pub fn valid_perplexity(&self) -> wenas::Result<f64> {
        Ok(wenet_evaluate(&self.state, &self.valid)?.exp())
    }
}

fn js(e: wenas::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Number of distinct cells with `levels` nodes, as a decimal string.
#[wasm_bindgen(js_name = spaceSize)]
pub fn space_size(levels: usize) -> Result<String, JsError> {
    search_space_size(levels).map(|n| n.to_string()).map_err(js)
}

/// Samples a cell and returns `{ json, pairs, svg }` as a JSON string.
#[wasm_bindgen(js_name = sampleCell)]
pub fn sample_cell_js(levels: usize, seed: u32) -> Result<String, JsError> {
    let g = sample_cell(levels, seed as u64).map_err(js)?;
    Ok(serde_json::json!({ "json": g.to_json(), "pairs": g.to_pairs_string(), "svg": cell_svg(&g) }).to_string())
}

/// Draws a cell given as JSON or pairs text.
#[wasm_bindgen(js_name = drawCell)]
pub fn draw_cell(text: &str) -> Result<String, JsError> {
    parse_cell(text).map(|g| cell_svg(&g)).map_err(js)
}

#[wasm_bindgen]
pub struct WeNetDemo {
    inner: Demo,
}

#[wasm_bindgen]
impl WeNetDemo {
    #[wasm_bindgen(constructor)]
    pub fn new(candidates: usize, levels: usize, seed: u32) -> Result<WeNetDemo, JsError> {
        Demo::new(candidates, levels, seed as u64).map(|inner| WeNetDemo { inner }).map_err(js)
    }

    #[wasm_bindgen(js_name = trainBatches)]
    pub fn train_batches(&mut self, n: usize) -> Result<f64, JsError> {
        self.inner.train_batches(n).map_err(js)
    }

    pub fn weights(&self) -> Vec<f64> {
        self.inner.weights()
    }

    /// JSON array of cell descriptions.
    pub fn labels(&self) -> String {
        serde_json::to_string(&self.inner.labels()).expect("strings serialize")
    }

    #[wasm_bindgen(js_name = cellSvg)]
    pub fn cell_svg(&self, i: usize) -> Option<String> {
        self.inner.genome(i).map(cell_svg)
    }

    pub fn progress(&self) -> f64 {
        self.inner.progress()
    }

    #[wasm_bindgen(js_name = validPerplexity)]
    pub fn valid_perplexity(&self) -> Result<f64, JsError> {
        self.inner.valid_perplexity().map_err(js)
    }
}
