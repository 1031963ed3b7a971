//! Vocabulary, tokenization and the recurrent question encoder.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use lsa_tensor::{Graph, ParamId, Tensor, Var};

use crate::error::{config_err, Error, Result};
use crate::init::{Builder, Init};

pub const PAD: usize = 0;
pub const UNK: usize = 1;

/// Lowercased words; punctuation separates tokens and is dropped.
pub fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Tokens ordered by descending frequency, ties broken lexicographically.
    pub fn from_corpus<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut freq: HashMap<String, usize> = HashMap::new();
        for t in texts {
            for w in words(t) {
                *freq.entry(w).or_default() += 1;
            }
        }
        let mut ranked: Vec<(String, usize)> = freq.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Self::from_tokens(ranked.into_iter().map(|(w, _)| w).collect()).expect("corpus words are distinct")
    }

    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(Error::Data(format!("invalid vocabulary token {t:?}")));
            }
            if index.insert(t.clone(), i + 2).is_some() {
                return Err(Error::Data(format!("duplicate vocabulary token `{t}`")));
            }
        }
        Ok(Vocabulary { tokens, index })
    }

    /// Total ids including the two reserved ones.
    pub fn size(&self) -> usize {
        self.tokens.len() + 2
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        match id {
            PAD => Some("<pad>"),
            UNK => Some("<unk>"),
            _ => self.tokens.get(id - 2).map(String::as_str),
        }
    }

    /// Ids padded or truncated to `max_len`.
    pub fn tokenize(&self, text: &str, max_len: usize) -> Vec<usize> {
        let mut ids: Vec<usize> = words(text).iter().map(|w| self.id(w)).take(max_len).collect();
        ids.resize(max_len, PAD);
        ids
    }

    /// One token per line; line `k` holds id `k + 2`.
    pub fn to_text(&self) -> String {
        self.tokens.iter().map(|t| format!("{t}\n")).collect()
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_tokens(text.lines().map(str::to_string).collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum CellKind {
    Vanilla,
    #[default]
    Gated,
}

impl FromStr for CellKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vanilla" => Ok(CellKind::Vanilla),
            "gated" => Ok(CellKind::Gated),
            other => Err(config_err(format!("unknown cell `{other}` (vanilla|gated)"))),
        }
    }
}

impl fmt::Display for CellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CellKind::Vanilla => "vanilla",
            CellKind::Gated => "gated",
        })
    }
}

/// Input, recurrent and bias weights of one gate.
#[derive(Clone, Debug)]
struct GateWeights {
    w: ParamId,
    u: ParamId,
    b: ParamId,
}

impl GateWeights {
    fn new(b: &mut Builder<'_>, name: &str, embed: usize, hidden: usize, bias: Init) -> Result<Self> {
        let bound = 1.0 / (hidden as f64).sqrt();
        Ok(GateWeights {
            w: b.weight(&format!("w_{name}"), &[embed, hidden], Init::Uniform(bound))?,
            u: b.weight(&format!("u_{name}"), &[hidden, hidden], Init::Uniform(bound))?,
            b: b.weight(&format!("b_{name}"), &[hidden], bias)?,
        })
    }

    /// `x·W + h·U + b`
    fn pre(&self, g: &mut Graph<'_>, x: Var, h: Var) -> Result<Var> {
        let (w, u, b) = (g.param(self.w), g.param(self.u), g.param(self.b));
        let xw = g.matmul(x, w)?;
        let hu = g.matmul(h, u)?;
        let s = g.add(xw, hu)?;
        Ok(g.add_row(s, b)?)
    }
}

#[derive(Clone, Debug)]
pub struct QuestionEncoder {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub cell: CellKind,
    pub embedding: ParamId,
    update: Option<GateWeights>,
    reset: Option<GateWeights>,
    candidate: GateWeights,
}

impl QuestionEncoder {
    pub fn new(b: &mut Builder<'_>, vocab_size: usize, embed_dim: usize, hidden_dim: usize, cell: CellKind) -> Result<Self> {
        if vocab_size < 2 || embed_dim == 0 || hidden_dim == 0 {
            return Err(config_err("encoder needs vocab_size >= 2 and positive dimensions"));
        }
        let embedding = b.weight("embedding", &[vocab_size, embed_dim], Init::Uniform(0.1))?;
        let (update, reset) = match cell {
            CellKind::Gated => (
                Some(GateWeights::new(b, "z", embed_dim, hidden_dim, Init::Zeros)?),
                Some(GateWeights::new(b, "r", embed_dim, hidden_dim, Init::Zeros)?),
            ),
            CellKind::Vanilla => (None, None),
        };
        let candidate = GateWeights::new(b, "n", embed_dim, hidden_dim, Init::Zeros)?;
        Ok(QuestionEncoder { vocab_size, embed_dim, hidden_dim, cell, embedding, update, reset, candidate })
    }

    /// Final hidden states `[B, hidden]` for equally long id sequences.
    ///
    /// Pad positions leave the state untouched, so the result is the state
    /// after the last real token and an all-pad question encodes to zero.
    pub fn forward(&self, g: &mut Graph<'_>, batch: &[Vec<usize>]) -> Result<Var> {
        let b = batch.len();
        let len = batch.first().map_or(0, Vec::len);
        if b == 0 || batch.iter().any(|s| s.len() != len) {
            return Err(config_err("question batch must be non-empty with equal lengths"));
        }
        if let Some(&bad) = batch.iter().flatten().find(|&&id| id >= self.vocab_size) {
            return Err(Error::Tensor(lsa_tensor::TensorError::IndexOutOfRange {
                op: "token id",
                index: bad,
                extent: self.vocab_size,
            }));
        }
        let table = g.param(self.embedding);
        let mut h = g.constant(Tensor::zeros(&[b, self.hidden_dim]));
        for t in 0..len {
            let ids: Vec<usize> = batch.iter().map(|s| s[t]).collect();
            if ids.iter().all(|&id| id == PAD) {
                continue;
            }
            let x = g.embedding(table, &ids)?;
            let next = self.step(g, x, h)?;
            if ids.iter().all(|&id| id != PAD) {
                h = next;
            } else {
                let keep: Vec<f64> = ids.iter().map(|&id| if id == PAD { 0.0 } else { 1.0 }).collect();
                let hold: Vec<f64> = keep.iter().map(|k| 1.0 - k).collect();
                let keep = g.constant(Tensor::vector(keep));
                let hold = g.constant(Tensor::vector(hold));
                let a = g.scale_rows(next, keep)?;
                let c = g.scale_rows(h, hold)?;
                h = g.add(a, c)?;
            }
        }
        Ok(h)
    }

    fn step(&self, g: &mut Graph<'_>, x: Var, h: Var) -> Result<Var> {
        match (&self.update, &self.reset) {
            (Some(zw), Some(rw)) => {
                let z = zw.pre(g, x, h)?;
                let z = g.sigmoid(z);
                let r = rw.pre(g, x, h)?;
                let r = g.sigmoid(r);
                let rh = g.mul(r, h)?;
                let n = self.candidate.pre(g, x, rh)?;
                let n = g.tanh(n);
                // h' = n + z ⊙ (h - n)
                let d = g.sub(h, n)?;
                let zd = g.mul(z, d)?;
                Ok(g.add(n, zd)?)
            }
            _ => {
                let n = self.candidate.pre(g, x, h)?;
                Ok(g.tanh(n))
            }
        }
    }
}
