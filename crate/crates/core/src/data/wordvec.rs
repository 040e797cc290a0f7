//! Plain-text word vectors (`token v1 v2 ...` per line).

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use zsgan_numeric::Matrix;

use crate::data::EmbeddingTable;
use crate::error::{Error, Result};

fn canonical(s: &str) -> String {
    s.trim().to_lowercase().replace(['_', '-'], " ")
}

/// Builds an embedding table for `categories` from word-vector text.
///
/// Names are matched case-insensitively with spaces, underscores and hyphens
/// unified. A name found as a single token uses that vector; otherwise its
/// words are looked up individually and averaged.
pub fn parse_word_vectors(text: &str, categories: &[String], source: &Path) -> Result<EmbeddingTable> {
    let mut vocab: HashMap<String, Vec<f32>> = HashMap::new();
    let mut dim = None;
    let mut offset = 0u64;
    for line in text.split_inclusive('\n') {
        let body = line.trim();
        if !body.is_empty() {
            let mut parts = body.split_whitespace();
            let token = parts.next().expect("non-empty line has a token");
            let values: std::result::Result<Vec<f32>, _> = parts.map(str::parse::<f32>).collect();
            let values = values.map_err(|e| Error::format(source, offset, format!("bad number for `{token}`: {e}")))?;
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::format(source, offset, format!("non-finite value for `{token}`")));
            }
            match dim {
                None => dim = Some(values.len()),
                Some(d) if d != values.len() => {
                    return Err(Error::format(
                        source,
                        offset,
                        format!("`{token}` has {} values, expected {d}", values.len()),
                    ))
                }
                _ => {}
            }
            vocab.entry(canonical(token)).or_insert(values);
        }
        offset += line.len() as u64;
    }
    let d = dim.filter(|&d| d > 0).ok_or_else(|| Error::format(source, 0, "no word vectors found"))?;

    let mut rows = Vec::with_capacity(categories.len());
    for name in categories {
        let key = canonical(name);
        if let Some(v) = vocab.get(&key) {
            rows.push(v.clone());
            continue;
        }
        let words: Vec<&str> = key.split_whitespace().collect();
        let mut acc = vec![0.0f64; d];
        for w in &words {
            let v = vocab
                .get(*w)
                .ok_or_else(|| Error::Data(format!("no word vector for `{w}` (category `{name}`)")))?;
            for (a, &x) in acc.iter_mut().zip(v) {
                *a += x as f64;
            }
        }
        if words.is_empty() {
            return Err(Error::Data(format!("empty category name `{name}`")));
        }
        rows.push(acc.iter().map(|a| (a / words.len() as f64) as f32).collect());
    }
    EmbeddingTable::new(Matrix::from_rows(&rows)?, categories.to_vec(), false)
}

pub fn load_word_vectors(path: &Path, categories: &[String]) -> Result<EmbeddingTable> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_word_vectors(&text, categories, path)
}
