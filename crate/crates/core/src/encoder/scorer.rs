use super::{position_index, SentenceModel, I_CONV_B, I_HEAD, I_TAIL, I_WORD};
use crate::data::Instance;
use crate::error::{DsganError, Result};
use crate::nn::layers::maxpool_windows;
use crate::nn::ConvWeights;

/// Read-only scorer that caches each token's word-embedding projection
/// through every kernel offset. Results are bit-identical to
/// [`SentenceModel::predict_prob`]; the cache only skips repeated work when
/// the same tokens recur across many sentences.
pub struct Scorer<'m> {
    model: &'m SentenceModel,
    weights: ConvWeights,
    /// `[window * kernels]` per token, empty until first use.
    word_proj: Vec<Vec<f64>>,
}

impl<'m> Scorer<'m> {
    pub fn new(model: &'m SentenceModel) -> Self {
        Scorer {
            weights: model.conv_weights(),
            word_proj: vec![Vec::new(); model.config.vocab_size],
            model,
        }
    }

    fn projection(&mut self, token: usize) -> &[f64] {
        if self.word_proj[token].is_empty() {
            let c_k = self.weights.kernels;
            let emb = self.model.params.at(I_WORD).value.row(token);
            let mut proj = vec![0.0; self.weights.window * c_k];
            for (o, chunk) in proj.chunks_mut(c_k).enumerate() {
                self.weights.accumulate(o, 0, emb, chunk);
            }
            self.word_proj[token] = proj;
        }
        &self.word_proj[token]
    }

    pub fn prob(&mut self, inst: &Instance) -> Result<f64> {
        let cfg = self.model.config;
        let n = inst.tokens.len();
        if n == 0 || inst.head_pos >= n || inst.tail_pos >= n {
            return Err(DsganError::Input(format!("{}: invalid entity positions", inst.id)));
        }
        if let Some(&bad) = inst.tokens.iter().find(|&&t| t >= cfg.vocab_size) {
            return Err(DsganError::IndexOutOfRange {
                index: bad,
                len: cfg.vocab_size,
            });
        }
        for &t in &inst.tokens {
            self.projection(t);
        }
        let c_k = cfg.kernels;
        let (de, dp) = (cfg.word_dim, cfg.position_dim);
        let head_tab = &self.model.params.at(I_HEAD).value;
        let tail_tab = &self.model.params.at(I_TAIL).value;
        let pad = self.weights.pad();
        let w = &self.weights;
        let proj = &self.word_proj;
        let mut partial = vec![0.0; c_k];
        let trace = maxpool_windows(
            w.positions(n),
            c_k,
            self.model.params.at(I_CONV_B).value.data(),
            |t, s| {
                for o in 0..w.window {
                    let Some(row) = (t + o).checked_sub(pad).filter(|&r| r < n) else {
                        continue;
                    };
                    partial.copy_from_slice(&proj[inst.tokens[row]][o * c_k..(o + 1) * c_k]);
                    let h = position_index(row, inst.head_pos, cfg.max_distance);
                    let tl = position_index(row, inst.tail_pos, cfg.max_distance);
                    w.accumulate(o, de, head_tab.row(h), &mut partial);
                    w.accumulate(o, de + dp, tail_tab.row(tl), &mut partial);
                    for (a, p) in s.iter_mut().zip(partial.iter()) {
                        *a += *p;
                    }
                }
            },
        );
        Ok(self.model.head_output(&trace.out).0)
    }
}
