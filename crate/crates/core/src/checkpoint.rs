//! Checkpoints: `manifest.txt` naming every tensor in construction order,
//! and `params.matn` holding the tensors as concatenated MATN records.

use std::fmt::Write as _;
use std::path::Path;

use lsa_tensor::matn::{load_all, save_all};
use lsa_tensor::{ParamKind, ParamStore, Tensor};

use crate::error::{Error, Result};

pub const MANIFEST: &str = "manifest.txt";
pub const TENSORS: &str = "params.matn";

/// Writes all weights and buffers of `store`; `header` lines become
/// `#` comments at the top of the manifest.
pub fn save(dir: &Path, store: &ParamStore, header: &[String]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = String::new();
    for h in header {
        writeln!(manifest, "# {h}").expect("string write");
    }
    let mut tensors = Vec::with_capacity(store.len());
    for (_, e) in store.entries() {
        let kind = match e.kind {
            ParamKind::Weight => "weight",
            ParamKind::Buffer => "buffer",
        };
        let shape: Vec<String> = e.value.shape().iter().map(ToString::to_string).collect();
        writeln!(manifest, "{}\t{kind}\t{}", e.name, shape.join("x")).expect("string write");
        tensors.push(&e.value);
    }
    let path = dir.join(MANIFEST);
    std::fs::write(&path, manifest).map_err(|e| Error::io(&path, e))?;
    save_all(dir.join(TENSORS), &tensors)?;
    Ok(())
}

/// Named tensors of a checkpoint, in manifest order.
pub fn load(dir: &Path) -> Result<Vec<(String, Tensor)>> {
    let path = dir.join(MANIFEST);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let names: Vec<String> = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| l.split('\t').next().unwrap_or_default().to_string())
        .collect();
    let tensors = load_all(dir.join(TENSORS))?;
    if names.len() != tensors.len() {
        return Err(Error::Data(format!(
            "{}: manifest lists {} tensors but the payload holds {}",
            dir.display(),
            names.len(),
            tensors.len()
        )));
    }
    Ok(names.into_iter().zip(tensors).collect())
}

/// Copies checkpoint tensors into `store` by name. With `strict`, every
/// store entry must be present; otherwise absent names keep their values.
/// Returns how many entries were overwritten.
pub fn restore(store: &mut ParamStore, saved: &[(String, Tensor)], strict: bool) -> Result<usize> {
    let mut hits = 0;
    for (name, t) in saved {
        let Some(id) = store.id(name) else {
            if strict {
                return Err(Error::Data(format!("checkpoint tensor `{name}` has no counterpart in the model")));
            }
            continue;
        };
        if store.get(id).shape() != t.shape() {
            return Err(Error::Data(format!(
                "checkpoint tensor `{name}` has shape {:?}, model expects {:?}",
                t.shape(),
                store.get(id).shape()
            )));
        }
        *store.get_mut(id) = t.clone();
        hits += 1;
    }
    if strict && hits != store.len() {
        return Err(Error::Data(format!("checkpoint covers {hits} of {} model tensors", store.len())));
    }
    Ok(hits)
}
