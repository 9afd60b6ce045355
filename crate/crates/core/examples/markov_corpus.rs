//! Writes a synthetic order-3 Markov corpus directory.
//!
//! cargo run --release --example markov_corpus -- DIR [SEED] [TRAIN_KB]

use std::path::PathBuf;

use wenas::lmdata::{Corpus, SyntheticSplits, Tokenization, UnigramModel};

fn main() -> wenas::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "markov".into()));
    let seed: u64 = args.next().map_or(0, |s| s.parse().expect("seed"));
    let kb: usize = args.next().map_or(200, |s| s.parse().expect("train size in kB"));

    // Two bytes per symbol (letter plus separator).
    let splits = SyntheticSplits::long_range(seed, kb * 1000 / 2, 10_000)?;
    splits.write_dir(&dir)?;
    let corpus = Corpus::load_dir(&dir, Tokenization::Word)?;
    println!(
        "vocab {}  train tokens {}  valid tokens {}",
        corpus.vocab.len(),
        corpus.train.len(),
        corpus.valid.len()
    );
    let unigram = UnigramModel::fit(&corpus.train, corpus.vocab.len());
    println!("unigram valid ppl {:.3}", unigram.perplexity(&corpus.valid)?);
    println!("source valid ppl  {:.3} (symbols only)", splits.source.perplexity(&splits.valid)?);
    Ok(())
}
