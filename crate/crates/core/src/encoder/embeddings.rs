use std::path::Path;

use super::{SentenceModel, I_WORD};
use crate::data::Vocab;
use crate::error::{DsganError, Result};

/// Overwrites word-embedding rows from a text file of `token v1 ... v_d`
/// lines. Tokens absent from `vocab` are skipped; vocabulary entries absent
/// from the file keep their initialization. Returns the number of rows set.
pub fn load_pretrained_embeddings(model: &mut SentenceModel, path: &Path, vocab: &Vocab) -> Result<usize> {
    let text = std::fs::read_to_string(path).map_err(|e| DsganError::io(path, e))?;
    let index = vocab.index();
    let d = model.config.word_dim;
    let table = &mut model.params.at_mut(I_WORD).value;
    let mut set = 0;
    for (i, line) in text.lines().enumerate() {
        let mut parts = line.split_whitespace();
        let Some(token) = parts.next() else { continue };
        let err = |msg: String| DsganError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        };
        let values: Vec<f64> = parts
            .map(|s| s.parse::<f64>().map_err(|e| err(format!("{s}: {e}"))))
            .collect::<Result<_>>()?;
        if values.len() != d {
            return Err(err(format!("expected {d} values, found {}", values.len())));
        }
        if let Some(&row) = index.get(token) {
            if row >= table.rows() {
                return Err(err(format!("token index {row} outside vocabulary of {}", table.rows())));
            }
            table.row_mut(row).copy_from_slice(&values);
            set += 1;
        }
    }
    Ok(set)
}
