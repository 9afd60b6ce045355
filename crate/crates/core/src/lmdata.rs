//! Corpus loading, vocabulary, contiguous batching and BPTT windows.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const UNK: &str = "<unk>";
pub const EOS: &str = "<eos>";

/// How raw text is split into tokens.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tokenization {
    /// Whitespace-separated words.
    #[default]
    Word,
    /// Every non-newline character is a token.
    Char,
}

impl std::str::FromStr for Tokenization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "word" => Ok(Self::Word),
            "char" => Ok(Self::Char),
            other => Err(Error::config(format!(
                "unknown tokenization `{other}` (expected word or char)"
            ))),
        }
    }
}

/// Bijection between tokens and ids `0..len`. Id 0 is `<unk>`, id 1 is
/// `<eos>`, the rest follow first occurrence in the training text.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    itos: Vec<String>,
    stoi: HashMap<String, usize>,
}

impl Default for Vocab {
    fn default() -> Self {
        Self::new()
    }
}

impl Vocab {
    pub fn new() -> Self {
        let mut v = Vocab {
            itos: Vec::new(),
            stoi: HashMap::new(),
        };
        v.insert(UNK);
        v.insert(EOS);
        v
    }

    fn insert(&mut self, tok: &str) -> usize {
        if let Some(&id) = self.stoi.get(tok) {
            return id;
        }
        let id = self.itos.len();
        self.itos.push(tok.to_string());
        self.stoi.insert(tok.to_string(), id);
        id
    }

    pub fn len(&self) -> usize {
        self.itos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.itos.is_empty()
    }

    pub fn unk(&self) -> usize {
        self.stoi[UNK]
    }

    pub fn eos(&self) -> usize {
        self.stoi[EOS]
    }

    pub fn id(&self, tok: &str) -> Option<usize> {
        self.stoi.get(tok).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.itos.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.itos
    }
}

fn split_line(line: &str, mode: Tokenization) -> Vec<String> {
    match mode {
        Tokenization::Word => line.split_whitespace().map(str::to_string).collect(),
        Tokenization::Char => line.chars().filter(|c| *c != '\r').map(String::from).collect(),
    }
}

/// Tokenizes text, appending `<eos>` after every line.
///
/// Without a vocabulary, one is built from this text; with one, unseen
/// tokens map to `<unk>`.
pub fn tokenize(text: &str, vocab: Option<&Vocab>, mode: Tokenization) -> Result<(Vec<usize>, Vocab)> {
    let mut built = vocab.cloned().unwrap_or_default();
    let growing = vocab.is_none();
    let mut ids = Vec::new();
    for line in text.lines() {
        for tok in split_line(line, mode) {
            let id = if growing {
                built.insert(&tok)
            } else {
                built.id(&tok).unwrap_or_else(|| built.unk())
            };
            ids.push(id);
        }
        ids.push(built.eos());
    }
    if ids.iter().all(|&id| id == built.eos()) {
        return Err(Error::config("corpus contains no tokens"));
    }
    Ok((ids, built))
}

pub fn load_corpus(
    path: impl AsRef<Path>,
    vocab: Option<&Vocab>,
    mode: Tokenization,
) -> Result<(Vec<usize>, Vocab)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    tokenize(&text, vocab, mode).map_err(|e| match e {
        Error::Config(m) => Error::config(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Inverse of [`tokenize`]: words joined by spaces, `<eos>` as newline.
pub fn detokenize(ids: &[usize], vocab: &Vocab, mode: Tokenization) -> String {
    let mut out = String::new();
    let mut line_start = true;
    for &id in ids {
        if id == vocab.eos() {
            out.push('\n');
            line_start = true;
            continue;
        }
        if mode == Tokenization::Word && !line_start {
            out.push(' ');
        }
        out.push_str(vocab.token(id).unwrap_or(UNK));
        line_start = false;
    }
    out
}

/// Train/valid/test token streams sharing one vocabulary.
#[derive(Clone, Debug)]
pub struct Corpus {
    pub vocab: Vocab,
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

impl Corpus {
    /// Reads `train.txt`, `valid.txt` and (optionally) `test.txt`.
    pub fn load_dir(dir: impl AsRef<Path>, mode: Tokenization) -> Result<Self> {
        let dir = dir.as_ref();
        let (train, vocab) = load_corpus(dir.join("train.txt"), None, mode)?;
        let (valid, _) = load_corpus(dir.join("valid.txt"), Some(&vocab), mode)?;
        let test_path = dir.join("test.txt");
        let test = if test_path.exists() {
            load_corpus(test_path, Some(&vocab), mode)?.0
        } else {
            Vec::new()
        };
        Ok(Corpus {
            vocab,
            train,
            valid,
            test,
        })
    }

    pub fn from_texts(train: &str, valid: &str, test: &str, mode: Tokenization) -> Result<Self> {
        let (train, vocab) = tokenize(train, None, mode)?;
        let (valid, _) = tokenize(valid, Some(&vocab), mode)?;
        let test = if test.trim().is_empty() {
            Vec::new()
        } else {
            tokenize(test, Some(&vocab), mode)?.0
        };
        Ok(Corpus {
            vocab,
            train,
            valid,
            test,
        })
    }
}

/// Token stream split into `batch` contiguous segments.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BatchedCorpus {
    pub batch: usize,
    pub steps: usize,
    /// Row-major `[batch, steps]`.
    pub data: Vec<usize>,
}

impl BatchedCorpus {
    pub fn at(&self, row: usize, step: usize) -> usize {
        self.data[row * self.steps + step]
    }
}

/// Splits `stream` into `batch` equal segments, dropping the remainder.
pub fn batchify(stream: &[usize], batch: usize) -> Result<BatchedCorpus> {
    if batch == 0 {
        return Err(Error::config("data batch size must be positive"));
    }
    let steps = stream.len() / batch;
    if steps < 2 {
        return Err(Error::config(format!(
            "stream of {} tokens is too short for batch size {batch}",
            stream.len()
        )));
    }
    Ok(BatchedCorpus {
        batch,
        steps,
        data: stream[..batch * steps].to_vec(),
    })
}

/// One truncated-BPTT slice, stored time-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BpttWindow {
    /// `inputs[t][b]`.
    pub inputs: Vec<Vec<usize>>,
    /// `targets[t][b] == inputs[t + 1][b]` within a segment.
    pub targets: Vec<Vec<usize>>,
}

impl BpttWindow {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn batch(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }

    /// Targets flattened time-major, matching stacked per-step outputs.
    pub fn flat_targets(&self) -> Vec<usize> {
        self.targets.iter().flatten().copied().collect()
    }

    pub fn token_count(&self) -> usize {
        self.len() * self.batch()
    }
}

/// Tiles the batched corpus with windows of `bptt` steps; a final shorter
/// window is emitted when at least one step remains.
pub fn bptt_windows(bc: &BatchedCorpus, bptt: usize) -> Result<Vec<BpttWindow>> {
    if bptt == 0 {
        return Err(Error::config("bptt length must be positive"));
    }
    if bc.steps < bptt + 1 {
        return Err(Error::config(format!(
            "segments of {} steps are too short for bptt {bptt} (need stream length >= batch * (bptt + 1) = {})",
            bc.steps,
            bc.batch * (bptt + 1)
        )));
    }
    let mut out = Vec::new();
    let mut start = 0;
    while start + 1 < bc.steps {
        let len = bptt.min(bc.steps - 1 - start);
        let column = |t: usize| (0..bc.batch).map(|b| bc.at(b, t)).collect::<Vec<_>>();
        out.push(BpttWindow {
            inputs: (start..start + len).map(column).collect(),
            targets: (start + 1..start + len + 1).map(column).collect(),
        });
        start += len;
    }
    Ok(out)
}

pub fn perplexity(total_nll_nats: f64, token_count: usize) -> Result<f64> {
    if token_count == 0 {
        return Err(Error::config("perplexity over zero tokens"));
    }
    Ok((total_nll_nats / token_count as f64).exp())
}

/// Add-one smoothed unigram model, the baseline every LM must beat.
#[derive(Clone, Debug)]
pub struct UnigramModel {
    log_probs: Vec<f64>,
}

impl UnigramModel {
    pub fn fit(stream: &[usize], vocab_size: usize) -> Self {
        let mut counts = vec![1.0f64; vocab_size];
        for &t in stream {
            counts[t] += 1.0;
        }
        let total: f64 = counts.iter().sum();
        UnigramModel {
            log_probs: counts.iter().map(|c| (c / total).ln()).collect(),
        }
    }

    pub fn perplexity(&self, stream: &[usize]) -> Result<f64> {
        let nll: f64 = stream.iter().map(|&t| -self.log_probs[t]).sum();
        perplexity(nll, stream.len())
    }
}

/// Synthetic Markov source over single-letter symbols.
///
/// The next-symbol log-probability is a sum of one random potential per
/// lag, each scaled by its entry in `lag_scales` (index 0 is the previous
/// symbol). The order is the number of lags.
#[derive(Clone, Debug)]
pub struct MarkovSource {
    symbols: usize,
    order: usize,
    /// Next-symbol distribution per context, context packed base `symbols`.
    table: Vec<Vec<f64>>,
}

impl MarkovSource {
    pub fn new<R: Rng + ?Sized>(symbols: usize, lag_scales: &[f64], rng: &mut R) -> Result<Self> {
        let order = lag_scales.len();
        if !(2..=26).contains(&symbols) || order == 0 || order > 4 {
            return Err(Error::config(format!(
                "markov source needs 2..=26 symbols and 1..=4 lags, got {symbols} and {order}"
            )));
        }
        let potentials: Vec<Vec<f64>> = lag_scales
            .iter()
            .map(|&scale| {
                (0..symbols * symbols)
                    .map(|_| scale * rng.gen_range(-1.0..1.0))
                    .collect()
            })
            .collect();
        let contexts = symbols.pow(order as u32);
        let table = (0..contexts)
            .map(|ctx| {
                let mut logits = vec![0.0; symbols];
                let mut rest = ctx;
                for pot in &potentials {
                    let prev = rest % symbols;
                    rest /= symbols;
                    for (next, l) in logits.iter_mut().enumerate() {
                        *l += pot[prev * symbols + next];
                    }
                }
                let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
                let z: f64 = e.iter().sum();
                e.into_iter().map(|v| v / z).collect()
            })
            .collect();
        Ok(MarkovSource {
            symbols,
            order,
            table,
        })
    }

    fn lag_packed(&self, history: &[usize]) -> usize {
        let mut ctx = 0;
        let mut mul = 1;
        for &s in history.iter().rev().take(self.order) {
            ctx += s * mul;
            mul *= self.symbols;
        }
        ctx
    }

    /// Symbol ids `0..symbols`.
    pub fn sample<R: Rng + ?Sized>(&self, len: usize, rng: &mut R) -> Vec<usize> {
        let mut seq: Vec<usize> = (0..self.order).map(|_| rng.gen_range(0..self.symbols)).collect();
        while seq.len() < len + self.order {
            let probs = &self.table[self.lag_packed(&seq)];
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut next = self.symbols - 1;
            for (i, p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    next = i;
                    break;
                }
            }
            seq.push(next);
        }
        seq.split_off(self.order)
    }

    /// Perplexity of the true source on `seq`, skipping the first `order`
    /// symbols; no model can do better in expectation.
    pub fn perplexity(&self, seq: &[usize]) -> Result<f64> {
        let mut nll = 0.0;
        for t in self.order..seq.len() {
            nll -= self.table[self.lag_packed(&seq[..t])][seq[t]].ln();
        }
        perplexity(nll, seq.len().saturating_sub(self.order))
    }

    /// Letters separated by spaces, `per_line` symbols per line.
    pub fn render(seq: &[usize], per_line: usize) -> String {
        let mut out = String::with_capacity(seq.len() * 2);
        for (i, chunk) in seq.chunks(per_line.max(1)).enumerate() {
            if i > 0 {
                out.push('\n');
            }
            for (j, &s) in chunk.iter().enumerate() {
                if j > 0 {
                    out.push(' ');
                }
                out.push((b'a' + s as u8) as char);
            }
        }
        out.push('\n');
        out
    }
}

/// Lag strengths of the long-range benchmark source; the oldest lag is
/// the strongest, so a model has to carry three symbols of state.
pub const LONG_RANGE_LAGS: [f64; 3] = [1.0, 1.5, 2.5];

/// Symbols per rendered line.
const LINE_SYMBOLS: usize = 100;

/// Train/valid/test symbol streams drawn from one source.
#[derive(Clone, Debug)]
pub struct SyntheticSplits {
    pub source: MarkovSource,
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

impl SyntheticSplits {
    /// A 16-symbol order-3 source with [`LONG_RANGE_LAGS`]; everything is
    /// derived from `seed`.
    pub fn long_range(seed: u64, train_symbols: usize, eval_symbols: usize) -> Result<Self> {
        let mut rng = crate::rngs::rng_for(seed, "markov-source", 0);
        let source = MarkovSource::new(16, &LONG_RANGE_LAGS, &mut rng)?;
        let train = source.sample(train_symbols, &mut rng);
        let valid = source.sample(eval_symbols, &mut rng);
        let test = source.sample(eval_symbols, &mut rng);
        Ok(SyntheticSplits { source, train, valid, test })
    }

    /// Writes `train.txt`, `valid.txt` and `test.txt` into `dir`.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, seq) in [("train.txt", &self.train), ("valid.txt", &self.valid), ("test.txt", &self.test)] {
            let path = dir.join(name);
            std::fs::write(&path, MarkovSource::render(seq, LINE_SYMBOLS)).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiny_text_vocab() {
        let (ids, v) = tokenize("a b a\n", None, Tokenization::Word).unwrap();
        assert_eq!(v.len(), 4);
        let toks: Vec<&str> = ids.iter().map(|&i| v.token(i).unwrap()).collect();
        assert_eq!(toks, ["a", "b", "a", EOS]);
    }

    #[test]
    fn unseen_token_maps_to_unk() {
        let (_, v) = tokenize("a b\n", None, Tokenization::Word).unwrap();
        let (ids, _) = tokenize("a c\n", Some(&v), Tokenization::Word).unwrap();
        assert_eq!(ids, vec![v.id("a").unwrap(), v.unk(), v.eos()]);
    }

    #[test]
    fn tokenization_is_deterministic() {
        let text = " the cat sat\n on the mat \n";
        let a = tokenize(text, None, Tokenization::Word).unwrap();
        let b = tokenize(text, None, Tokenization::Word).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_corpus_is_rejected() {
        assert!(tokenize("\n  \n", None, Tokenization::Word).is_err());
    }

    #[test]
    fn detokenize_restores_normalized_text() {
        let text = "the  cat\nsat on\n";
        let (ids, v) = tokenize(text, None, Tokenization::Word).unwrap();
        assert_eq!(detokenize(&ids, &v, Tokenization::Word), "the cat\nsat on\n");
        let (ids, v) = tokenize("ab c\n", None, Tokenization::Char).unwrap();
        assert_eq!(detokenize(&ids, &v, Tokenization::Char), "ab c\n");
    }

    #[test]
    fn batchify_examples() {
        let stream: Vec<usize> = (0..10).collect();
        let bc = batchify(&stream, 2).unwrap();
        assert_eq!((bc.steps, bc.data.len()), (5, 10));
        assert_eq!(bc.at(1, 0), 5);
        let stream: Vec<usize> = (0..11).collect();
        assert_eq!(batchify(&stream, 2).unwrap().data.len(), 10);
        assert!(batchify(&stream, 6).is_err());
    }

    #[test]
    fn windows_tile_ten_tokens() {
        let stream: Vec<usize> = (0..10).collect();
        let bc = batchify(&stream, 2).unwrap();
        let ws = bptt_windows(&bc, 2).unwrap();
        assert_eq!(ws.len(), 2);
        assert_eq!(ws[0].inputs, vec![vec![0, 5], vec![1, 6]]);
        assert_eq!(ws[0].targets, vec![vec![1, 6], vec![2, 7]]);
        assert_eq!(ws[1].targets, vec![vec![3, 8], vec![4, 9]]);
        assert!(bptt_windows(&bc, 5).is_err());
        assert!(bptt_windows(&bc, 0).is_err());
    }

    #[test]
    fn short_final_window() {
        let stream: Vec<usize> = (0..12).collect();
        let bc = batchify(&stream, 2).unwrap();
        let ws = bptt_windows(&bc, 2).unwrap();
        assert_eq!(ws.iter().map(BpttWindow::len).collect::<Vec<_>>(), vec![2, 2, 1]);
    }

    #[test]
    fn perplexity_examples() {
        assert!((perplexity(10f64.ln() * 7.0, 7).unwrap() - 10.0).abs() < 1e-12);
        assert_eq!(perplexity(0.0, 3).unwrap(), 1.0);
        assert!(perplexity(1.0, 0).is_err());
    }

    #[test]
    fn unigram_on_train_is_at_most_vocab() {
        let (ids, v) = tokenize("a a a b\nc a\n", None, Tokenization::Word).unwrap();
        let ppl = UnigramModel::fit(&ids, v.len()).perplexity(&ids).unwrap();
        assert!(ppl <= v.len() as f64, "{ppl}");
    }
}
