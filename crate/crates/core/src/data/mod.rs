//! Synthetic grid-of-shapes question answering data.

pub mod generate;
pub mod io;
pub mod question;
pub mod scene;

pub use generate::{generate, FamilyMix, Sample, Split, EVAL_OFFSET};
pub use question::{answer_space, evaluate, Family, Question, ANSWERS};
pub use scene::Scene;

use std::path::Path;

use crate::encoder::Vocabulary;
use crate::error::Result;

pub const TRAIN_FILE: &str = "train.tsv";
pub const EVAL_FILE: &str = "eval.tsv";
pub const VOCAB_FILE: &str = "vocab.txt";

/// Train and eval splits with the vocabulary built from the train questions.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub train: Vec<Sample>,
    pub eval: Vec<Sample>,
    pub vocab: Vocabulary,
    pub max_len: usize,
}

impl Dataset {
    pub fn generate(seed: u64, train_count: usize, eval_count: usize, mix: &FamilyMix, max_len: usize) -> Result<Self> {
        let train = generate(seed, train_count, mix, Split::Train)?;
        let eval = generate(seed, eval_count, mix, Split::Eval)?;
        Ok(Self::from_splits(train, eval, max_len))
    }

    pub fn from_splits(train: Vec<Sample>, eval: Vec<Sample>, max_len: usize) -> Self {
        let texts: Vec<String> = train.iter().map(|s| s.question.text()).collect();
        let vocab = Vocabulary::from_corpus(texts.iter().map(String::as_str));
        Dataset { train, eval, vocab, max_len }
    }

    pub fn save(&self, dir: &Path, header: &[String]) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| crate::Error::io(dir, e))?;
        io::write_dataset(&dir.join(TRAIN_FILE), &self.train, header)?;
        io::write_dataset(&dir.join(EVAL_FILE), &self.eval, header)?;
        self.vocab.save(&dir.join(VOCAB_FILE))
    }

    /// Reads a directory written by [`save`](Self::save). A missing
    /// vocabulary file is rebuilt from the train questions.
    pub fn load(dir: &Path, max_len: usize) -> Result<Self> {
        let train = io::read_dataset(&dir.join(TRAIN_FILE))?;
        let eval = io::read_dataset(&dir.join(EVAL_FILE))?;
        let vocab_path = dir.join(VOCAB_FILE);
        let mut ds = Self::from_splits(train, eval, max_len);
        if vocab_path.exists() {
            ds.vocab = Vocabulary::load(&vocab_path)?;
        }
        Ok(ds)
    }

    pub fn tokens(&self, samples: &[&Sample]) -> Vec<Vec<usize>> {
        samples.iter().map(|s| self.vocab.tokenize(&s.question.text(), self.max_len)).collect()
    }
}

/// Share of the most frequent answer among `samples`.
pub fn majority_rate(samples: &[Sample]) -> f64 {
    let mut counts = [0usize; ANSWERS.len()];
    for s in samples {
        counts[s.label()] += 1;
    }
    counts.iter().copied().max().unwrap_or(0) as f64 / samples.len().max(1) as f64
}
