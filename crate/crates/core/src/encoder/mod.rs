//! Sentence scorer shared by the generator, the discriminator and the
//! downstream classifier: word and position embeddings, windowed convolution
//! with max-over-time pooling, then a sigmoid output unit.

mod embeddings;
mod scorer;

use rand::Rng;

use crate::data::Instance;
use crate::error::{DsganError, Result};
use crate::nn::{
    affine_backward, affine_sigmoid, bce_loss, conv1d_maxpool_backward, conv1d_maxpool_with,
    embedding_backward, glorot_uniform, uniform, ConvTrace, ConvWeights, Direction, ParamSet,
    SgdConfig, Tensor,
};

pub use embeddings::load_pretrained_embeddings;
pub use scorer::Scorer;

pub const WORD_EMB: &str = "word_emb";
pub const POS_HEAD: &str = "pos_head";
pub const POS_TAIL: &str = "pos_tail";
pub const CONV_W: &str = "conv_w";
pub const CONV_B: &str = "conv_b";
pub const OUT_W: &str = "out_w";
pub const OUT_B: &str = "out_b";

const EMBEDDING_INIT: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderConfig {
    pub word_dim: usize,
    pub position_dim: usize,
    pub window: usize,
    pub kernels: usize,
    pub max_distance: usize,
    pub vocab_size: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            word_dim: 50,
            position_dim: 5,
            window: 3,
            kernels: 100,
            max_distance: 30,
            vocab_size: 1,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("word_dim", self.word_dim),
            ("position_dim", self.position_dim),
            ("window", self.window),
            ("kernels", self.kernels),
            ("max_distance", self.max_distance),
            ("vocab_size", self.vocab_size),
        ];
        for (name, v) in fields {
            if v == 0 {
                return Err(DsganError::Config(format!("encoder.{name} must be positive")));
            }
        }
        Ok(())
    }

    /// Width of one convolution input row.
    pub fn input_width(&self) -> usize {
        self.word_dim + 2 * self.position_dim
    }

    pub fn position_rows(&self) -> usize {
        2 * self.max_distance + 1
    }
}

/// Maps a relative offset to a row of a position table.
pub fn position_index(token_pos: usize, entity_pos: usize, max_distance: usize) -> usize {
    let m = max_distance as i64;
    let d = (token_pos as i64 - entity_pos as i64).clamp(-m, m);
    (d + m) as usize
}

#[derive(Debug, Clone, PartialEq)]
pub struct SentenceModel {
    pub params: ParamSet,
    pub config: EncoderConfig,
}

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    input: Tensor,
    words: Vec<usize>,
    head: Vec<usize>,
    tail: Vec<usize>,
    conv: ConvTrace,
    pub prob: f64,
    pub logit: f64,
}

/// Parameter slots in insertion order.
const I_WORD: usize = 0;
const I_HEAD: usize = 1;
const I_TAIL: usize = 2;
const I_CONV_W: usize = 3;
const I_CONV_B: usize = 4;
const I_OUT_W: usize = 5;
const I_OUT_B: usize = 6;

impl SentenceModel {
    pub fn new(config: EncoderConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let d_in = config.input_width();
        let width = config.window * d_in;
        let mut params = ParamSet::new();
        params.insert(WORD_EMB, uniform(&[config.vocab_size, config.word_dim], EMBEDDING_INIT, rng))?;
        params.insert(POS_HEAD, uniform(&[config.position_rows(), config.position_dim], EMBEDDING_INIT, rng))?;
        params.insert(POS_TAIL, uniform(&[config.position_rows(), config.position_dim], EMBEDDING_INIT, rng))?;
        params.insert(CONV_W, glorot_uniform(&[config.kernels, width], width, config.kernels, rng))?;
        params.insert(CONV_B, Tensor::zeros(&[config.kernels]))?;
        params.insert(OUT_W, glorot_uniform(&[config.kernels], config.kernels, 1, rng))?;
        params.insert(OUT_B, Tensor::zeros(&[1]))?;
        Ok(SentenceModel { params, config })
    }

    /// Sets the output layer to zero so every sentence scores exactly 0.5.
    pub fn zero_output(&mut self) {
        self.params.at_mut(I_OUT_W).value.fill(0.0);
        self.params.at_mut(I_OUT_B).value.fill(0.0);
    }

    fn indices(&self, inst: &Instance) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>)> {
        let n = inst.tokens.len();
        if n == 0 {
            return Err(DsganError::Input(format!("{}: empty sentence", inst.id)));
        }
        if inst.head_pos >= n || inst.tail_pos >= n {
            return Err(DsganError::Input(format!(
                "{}: entity position out of range for {n} tokens",
                inst.id
            )));
        }
        let v = self.config.vocab_size;
        if let Some(&bad) = inst.tokens.iter().find(|&&t| t >= v) {
            return Err(DsganError::IndexOutOfRange { index: bad, len: v });
        }
        let m = self.config.max_distance;
        let head = (0..n).map(|t| position_index(t, inst.head_pos, m)).collect();
        let tail = (0..n).map(|t| position_index(t, inst.tail_pos, m)).collect();
        Ok((inst.tokens.clone(), head, tail))
    }

    fn assemble(&self, words: &[usize], head: &[usize], tail: &[usize]) -> Tensor {
        let (de, dp) = (self.config.word_dim, self.config.position_dim);
        let mut x = Tensor::zeros(&[words.len(), self.config.input_width()]);
        let (we, he, te) = (
            &self.params.at(I_WORD).value,
            &self.params.at(I_HEAD).value,
            &self.params.at(I_TAIL).value,
        );
        for t in 0..words.len() {
            let row = x.row_mut(t);
            row[..de].copy_from_slice(we.row(words[t]));
            row[de..de + dp].copy_from_slice(he.row(head[t]));
            row[de + dp..].copy_from_slice(te.row(tail[t]));
        }
        x
    }

    /// Convolution input rows: word embedding, head-relative position
    /// embedding, tail-relative position embedding.
    pub fn featurize(&self, inst: &Instance) -> Result<Tensor> {
        let (w, h, t) = self.indices(inst)?;
        Ok(self.assemble(&w, &h, &t))
    }

    pub(crate) fn conv_weights(&self) -> ConvWeights {
        ConvWeights::new(
            &self.params.at(I_CONV_W).value,
            self.config.window,
            self.config.input_width(),
        )
        .expect("kernel shape fixed at construction")
    }

    pub(crate) fn head_output(&self, pooled: &[f64]) -> (f64, f64) {
        affine_sigmoid(
            pooled,
            self.params.at(I_OUT_W).value.data(),
            self.params.at(I_OUT_B).value.data()[0],
        )
        .expect("pooled width equals kernel count")
    }

    pub fn forward_with(&self, weights: &ConvWeights, inst: &Instance) -> Result<ForwardTrace> {
        let (words, head, tail) = self.indices(inst)?;
        let input = self.assemble(&words, &head, &tail);
        let (_, conv) = conv1d_maxpool_with(weights, &input, &self.params.at(I_CONV_B).value)?;
        let (prob, logit) = self.head_output(&conv.out);
        Ok(ForwardTrace {
            input,
            words,
            head,
            tail,
            conv,
            prob,
            logit,
        })
    }

    pub fn forward(&self, inst: &Instance) -> Result<ForwardTrace> {
        self.forward_with(&self.conv_weights(), inst)
    }

    /// Probability that `inst` is a true positive.
    pub fn predict_prob(&self, inst: &Instance) -> Result<f64> {
        Ok(self.forward(inst)?.prob)
    }

    /// Adds `dL/dparams` for a given `dL/dlogit` into the gradient buffers.
    pub fn backward(&mut self, trace: &ForwardTrace, dlogit: f64) {
        let cfg = self.config;
        let (de, dp) = (cfg.word_dim, cfg.position_dim);
        let mut grads = self.params.split_grads();
        let c_k = cfg.kernels;

        let mut dpooled = vec![0.0; c_k];
        {
            let (w_out, g_out) = &mut grads[I_OUT_W];
            let mut dw = vec![0.0; c_k];
            affine_backward(&trace.conv.out, w_out.data(), dlogit, &mut dpooled, &mut dw);
            for (g, d) in g_out.data_mut().iter_mut().zip(&dw) {
                *g += d;
            }
        }
        grads[I_OUT_B].1.data_mut()[0] += dlogit;

        let mut dinput = Tensor::zeros(trace.input.shape());
        {
            let (rest, tail) = grads.split_at_mut(I_CONV_B);
            let (kernels, dkernels) = &mut rest[I_CONV_W];
            let dbias = &mut tail[0].1;
            conv1d_maxpool_backward(
                &trace.input,
                kernels,
                cfg.window,
                &trace.conv,
                &dpooled,
                &mut dinput,
                dkernels,
                dbias,
            );
        }

        let n = trace.words.len();
        let mut dword = Tensor::zeros(&[n, de]);
        let mut dhead = Tensor::zeros(&[n, dp]);
        let mut dtail = Tensor::zeros(&[n, dp]);
        for t in 0..n {
            let row = dinput.row(t);
            dword.row_mut(t).copy_from_slice(&row[..de]);
            dhead.row_mut(t).copy_from_slice(&row[de..de + dp]);
            dtail.row_mut(t).copy_from_slice(&row[de + dp..]);
        }
        embedding_backward(grads[I_WORD].1, &trace.words, &dword);
        embedding_backward(grads[I_HEAD].1, &trace.head, &dhead);
        embedding_backward(grads[I_TAIL].1, &trace.tail, &dtail);
    }

    /// One descent step on `loss_scale * sum(bce)` over the batch. Returns the
    /// mean loss before the step. `lr == 0` leaves parameters untouched.
    pub fn supervised_step(
        &mut self,
        batch: &[&Instance],
        labels: &[f64],
        lr: f64,
        loss_scale: f64,
    ) -> Result<f64> {
        if batch.is_empty() {
            return Err(DsganError::Input("supervised step on an empty batch".into()));
        }
        if batch.len() != labels.len() {
            return Err(DsganError::Shape(format!(
                "{} instances vs {} labels",
                batch.len(),
                labels.len()
            )));
        }
        let weights = self.conv_weights();
        let mut total = 0.0;
        for (inst, &y) in batch.iter().zip(labels) {
            let tr = self.forward_with(&weights, inst)?;
            let (loss, dlogit) = bce_loss(tr.prob, y);
            total += loss;
            self.backward(&tr, loss_scale * dlogit);
        }
        let mean = total / batch.len() as f64;
        if !mean.is_finite() {
            self.params.zero_grad();
            return Err(DsganError::NonFinite("supervised loss".into()));
        }
        if lr == 0.0 {
            self.params.zero_grad();
        } else {
            self.params.sgd_apply(SgdConfig::new(lr)?, Direction::Descent)?;
        }
        Ok(mean)
    }

    /// Cached scorer for many read-only predictions.
    pub fn scorer(&self) -> Scorer<'_> {
        Scorer::new(self)
    }

    pub fn score_all<'a>(&self, instances: impl IntoIterator<Item = &'a Instance>) -> Result<Vec<f64>> {
        let mut s = self.scorer();
        instances.into_iter().map(|i| s.prob(i)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn inst(tokens: Vec<usize>, h: usize, t: usize) -> Instance {
        Instance::new("s", ("a".into(), "b".into()), "r", tokens, h, t).unwrap()
    }

    fn small_cfg() -> EncoderConfig {
        EncoderConfig {
            word_dim: 4,
            position_dim: 2,
            window: 3,
            kernels: 6,
            max_distance: 5,
            vocab_size: 10,
        }
    }

    #[test]
    fn position_index_cases() {
        assert_eq!(position_index(7, 7, 30), 30);
        assert_eq!(position_index(50, 5, 30), 60);
        assert_eq!(position_index(0, 45, 30), 0);
    }

    #[test]
    fn default_input_width_is_sixty() {
        assert_eq!(EncoderConfig::default().input_width(), 60);
    }

    #[test]
    fn featurize_zero_tables() {
        let cfg = EncoderConfig { vocab_size: 3, ..Default::default() };
        let mut m = SentenceModel::new(cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        for name in [WORD_EMB, POS_HEAD, POS_TAIL] {
            m.params.get_mut(name).unwrap().value.fill(0.0);
        }
        // a one-token sentence cannot host two distinct entities, so build it directly
        let one = Instance {
            id: "one".into(),
            pair_id: ("a".into(), "b".into()),
            relation: "r".into(),
            tokens: vec![2],
            head_pos: 0,
            tail_pos: 0,
            truth: None,
        };
        let x = m.featurize(&one).unwrap();
        assert_eq!(x.shape(), &[1, 60]);
        assert!(x.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn featurize_segment_layout() {
        let cfg = small_cfg();
        let mut m = SentenceModel::new(cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        // marker values: word row r -> 100 + r, head row r -> 200 + r, tail row r -> 300 + r
        for (name, base) in [(WORD_EMB, 100.0), (POS_HEAD, 200.0), (POS_TAIL, 300.0)] {
            let t = &mut m.params.get_mut(name).unwrap().value;
            for r in 0..t.rows() {
                t.row_mut(r).fill(base + r as f64);
            }
        }
        let s = inst(vec![3, 7, 9], 0, 2);
        let x = m.featurize(&s).unwrap();
        for t in 0..3 {
            let row = x.row(t);
            assert!(row[..4].iter().all(|&v| v == 100.0 + s.tokens[t] as f64));
            assert!(row[4..6].iter().all(|&v| v == 200.0 + position_index(t, 0, 5) as f64));
            assert!(row[6..8].iter().all(|&v| v == 300.0 + position_index(t, 2, 5) as f64));
        }
    }

    #[test]
    fn featurize_errors() {
        let m = SentenceModel::new(small_cfg(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(m.featurize(&inst(vec![1, 10], 0, 1)).is_err());
        let mut bad = inst(vec![1, 2], 0, 1);
        bad.tail_pos = 4;
        assert!(m.featurize(&bad).is_err());
    }

    #[test]
    fn zero_output_gives_half() {
        let mut m = SentenceModel::new(small_cfg(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        m.zero_output();
        assert_eq!(m.predict_prob(&inst(vec![1, 2, 3, 4], 1, 3)).unwrap(), 0.5);
    }

    #[test]
    fn predictions_are_deterministic_and_match_scorer() {
        let m = SentenceModel::new(small_cfg(), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let s = inst(vec![1, 2, 3, 4, 5, 6, 7], 1, 5);
        let a = m.predict_prob(&s).unwrap();
        assert_eq!(a.to_bits(), m.predict_prob(&s).unwrap().to_bits());
        assert_eq!(a.to_bits(), m.scorer().prob(&s).unwrap().to_bits());
        assert!(a > 0.0 && a < 1.0);
    }

    fn toy_set() -> (Vec<Instance>, Vec<f64>) {
        let mut v = Vec::new();
        let mut y = Vec::new();
        for i in 0..10 {
            let marker = if i % 2 == 0 { 1 } else { 2 };
            v.push(inst(vec![3, marker, 4 + i % 3, 5], 0, 3));
            y.push(if marker == 1 { 1.0 } else { 0.0 });
        }
        (v, y)
    }

    #[test]
    fn supervised_steps_converge_on_separable_toy() {
        let (v, y) = toy_set();
        let refs: Vec<&Instance> = v.iter().collect();
        let mut m = SentenceModel::new(small_cfg(), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let mut last = f64::INFINITY;
        for _ in 0..400 {
            last = m.supervised_step(&refs, &y, 0.5, 1.0 / 10.0).unwrap();
        }
        assert!(last < 0.05, "{last}");
    }

    #[test]
    fn zero_lr_keeps_params() {
        let (v, y) = toy_set();
        let refs: Vec<&Instance> = v.iter().collect();
        let mut m = SentenceModel::new(small_cfg(), &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let before = m.params.snapshot();
        m.supervised_step(&refs, &y, 0.0, 1.0).unwrap();
        assert_eq!(m.params.snapshot(), before);
    }

    fn delta(m: &SentenceModel, refs: &[&Instance], y: &[f64], scale: f64) -> Vec<f64> {
        let mut c = m.clone();
        c.supervised_step(refs, y, 0.1, scale).unwrap();
        let old = m.params.snapshot();
        c.params
            .iter()
            .flat_map(|(n, p)| {
                let o = old.get(n).unwrap().data().to_vec();
                p.value.data().iter().zip(o).map(|(a, b)| a - b).collect::<Vec<_>>()
            })
            .collect()
    }

    #[test]
    fn loss_scale_is_linear() {
        let (v, y) = toy_set();
        let refs: Vec<&Instance> = v.iter().collect();
        let m = SentenceModel::new(small_cfg(), &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let d1 = delta(&m, &refs, &y, 1.0);
        let d2 = delta(&m, &refs, &y, 2.0);
        for (a, b) in d1.iter().zip(&d2) {
            assert!((2.0 * a - b).abs() <= 1e-12 + 1e-9 * b.abs(), "{a} {b}");
        }
    }

    #[test]
    fn batch_order_does_not_change_update() {
        let (v, y) = toy_set();
        let refs: Vec<&Instance> = v.iter().collect();
        let m = SentenceModel::new(small_cfg(), &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        let d1 = delta(&m, &refs, &y, 1.0);
        let mut rrefs = refs.clone();
        rrefs.swap(0, 7);
        let mut ry = y.clone();
        ry.swap(0, 7);
        let d2 = delta(&m, &rrefs, &ry, 1.0);
        for (a, b) in d1.iter().zip(&d2) {
            assert!((a - b).abs() <= 1e-15, "{a} {b}");
        }
    }
}
