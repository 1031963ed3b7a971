//! Tab-separated dataset files and batch rendering.
//!
//! One record per line: `sample_id<TAB>question<TAB>answer<TAB>scene-spec`.
//! Lines starting with `#` carry provenance and are skipped on load.

use std::path::Path;

use lsa_tensor::Tensor;

use crate::data::generate::Sample;
use crate::data::question::{Question, ANSWERS};
use crate::data::scene::{Scene, IMAGE_SIZE};
use crate::error::{Error, Result};

pub fn to_tsv(samples: &[Sample], header: &[String]) -> String {
    let mut out = String::new();
    for h in header {
        out.push_str(&format!("# {h}\n"));
    }
    for s in samples {
        out.push_str(&format!("{}\t{}\t{}\t{}\n", s.id, s.question.text(), s.answer, s.scene.spec()));
    }
    out
}

pub fn parse_tsv(text: &str) -> Result<Vec<Sample>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let at = |e: Error| Error::Data(format!("line {}: {e}", n + 1));
        let fields: Vec<&str> = line.split('\t').collect();
        let [id, question, answer, scene] = fields.as_slice() else {
            return Err(Error::Data(format!("line {}: expected 4 tab-separated fields, got {}", n + 1, fields.len())));
        };
        let answer = ANSWERS
            .iter()
            .find(|a| *a == answer)
            .ok_or_else(|| Error::Data(format!("line {}: unknown answer `{answer}`", n + 1)))?;
        out.push(Sample {
            id: id.to_string(),
            question: Question::parse(question).map_err(at)?,
            answer,
            scene: Scene::parse_spec(scene).map_err(at)?,
        });
    }
    Ok(out)
}

pub fn write_dataset(path: &Path, samples: &[Sample], header: &[String]) -> Result<()> {
    std::fs::write(path, to_tsv(samples, header)).map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: &Path) -> Result<Vec<Sample>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_tsv(&text).map_err(|e| match e {
        Error::Data(m) => Error::Data(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// `[B, 3, 32, 32]` images of the given samples.
pub fn render_batch(samples: &[&Sample]) -> Tensor {
    let per = 3 * IMAGE_SIZE * IMAGE_SIZE;
    let mut data = vec![0.0; samples.len() * per];
    for (chunk, s) in data.chunks_mut(per).zip(samples) {
        s.scene.render_into(chunk);
    }
    Tensor::new(vec![samples.len(), 3, IMAGE_SIZE, IMAGE_SIZE], data).expect("batch shape")
}
