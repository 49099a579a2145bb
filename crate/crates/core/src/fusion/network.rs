//! Forward and backward passes.
//!
//! Tokens are stacked as a `2B × d` matrix with row `2b` holding sample
//! `b`'s text token and row `2b + 1` its image token, so flattening the final
//! tokens in `[text; image]` order is a reshape to `B × 2d`.

use super::layers::{apply_mask, dropout_mask, BatchNormCache};
use super::model::{EncoderLayer, FusionModel, GradientSet, Mode};
use crate::dataio::Corpus;
use crate::numcore::{
    gelu, gelu_grad_scalar, layer_norm_backward, layer_norm_cached, softmax_in_place, softmax_rows, LayerNormCache,
    Matrix, SeededRng, LN_EPS,
};
use crate::{Error, Result, N_CLASSES};

const PREDICT_CHUNK: usize = 256;

/// Tokens per sample: text then image.
pub const TOKENS: usize = 2;

/// How batch norm and dropout behave during a pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PassConfig {
    /// Normalise with batch statistics (training) rather than running ones.
    pub batch_stats: bool,
    pub dropout: bool,
}

impl PassConfig {
    pub const TRAIN: PassConfig = PassConfig { batch_stats: true, dropout: true };
    pub const EVAL: PassConfig = PassConfig { batch_stats: false, dropout: false };

    pub fn for_mode(mode: Mode) -> Self {
        match mode {
            Mode::Train => Self::TRAIN,
            Mode::Eval => Self::EVAL,
        }
    }
}

#[derive(Debug, Clone)]
struct ProjectionCache {
    input: Matrix,
    bn_out: Matrix,
    bn: BatchNormCache,
    mask: Option<Matrix>,
}

#[derive(Debug, Clone)]
struct LayerCache {
    input: Matrix,
    q: Matrix,
    k: Matrix,
    v: Matrix,
    /// Attention weights laid out `[sample][head][query][key]`.
    attn: Vec<f64>,
    context: Matrix,
    attn_mask: Option<Matrix>,
    ln1: LayerNormCache,
    h1: Matrix,
    ff_pre: Matrix,
    ff_act: Matrix,
    ff_mask: Option<Matrix>,
    ln2: LayerNormCache,
}

#[derive(Debug, Clone)]
struct HeadCache {
    fused: Matrix,
    z1: Matrix,
    bn1: BatchNormCache,
    mask1: Option<Matrix>,
    a1: Matrix,
    z2: Matrix,
    bn2: BatchNormCache,
    mask2: Option<Matrix>,
    a2: Matrix,
}

/// Activations of one forward pass, consumed by [`FusionModel::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    batch: usize,
    pass: PassConfig,
    text: ProjectionCache,
    image: ProjectionCache,
    layers: Vec<LayerCache>,
    head: HeadCache,
    probs: Matrix,
}

impl ForwardCache {
    pub fn batch_size(&self) -> usize {
        self.batch
    }

    pub fn pass(&self) -> PassConfig {
        self.pass
    }

    /// Attention weights of one layer, `[sample][head][query][key]`.
    pub fn attention(&self, layer: usize) -> &[f64] {
        &self.layers[layer].attn
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub probs: Matrix,
    pub logits: Matrix,
    pub cache: ForwardCache,
}

fn gelu_backward(dy: &Matrix, pre: &Matrix) -> Matrix {
    let mut out = dy.clone();
    for (o, &x) in out.data_mut().iter_mut().zip(pre.data()) {
        *o *= gelu_grad_scalar(x);
    }
    out
}

impl FusionModel {
    /// Forward pass in the behaviour implied by the model's mode.
    pub fn forward(&self, text: &Matrix, image: &Matrix, rng: &mut SeededRng) -> Result<ForwardOutput> {
        self.forward_with(text, image, PassConfig::for_mode(self.mode), rng)
    }

    pub fn forward_with(
        &self,
        text: &Matrix,
        image: &Matrix,
        pass: PassConfig,
        rng: &mut SeededRng,
    ) -> Result<ForwardOutput> {
        let cfg = &self.cfg;
        let b = text.rows();
        if b == 0 {
            return Err(Error::Shape("empty batch".into()));
        }
        if image.rows() != b {
            return Err(Error::Shape(format!("text batch has {b} rows, image batch has {}", image.rows())));
        }
        if text.cols() != cfg.d_text || image.cols() != cfg.d_image {
            return Err(Error::Shape(format!(
                "inputs {}x{} / {}x{} do not match d_T={} d_I={}",
                text.rows(),
                text.cols(),
                image.rows(),
                image.cols(),
                cfg.d_text,
                cfg.d_image
            )));
        }
        if pass.batch_stats && b < 2 {
            return Err(Error::BatchSize("batch norm with batch statistics needs at least 2 samples".into()));
        }
        let p = if pass.dropout { cfg.dropout } else { 0.0 };
        let d = cfg.d_model;

        let (t_tok, text_cache) = self.project(&self.params.text_proj, text, pass, p, rng)?;
        let (i_tok, image_cache) = self.project(&self.params.image_proj, image, pass, p, rng)?;

        let mut tokens = Matrix::zeros(TOKENS * b, d);
        for s in 0..b {
            tokens.row_mut(TOKENS * s).copy_from_slice(t_tok.row(s));
            tokens.row_mut(TOKENS * s + 1).copy_from_slice(i_tok.row(s));
        }

        let mut layers = Vec::with_capacity(cfg.layers);
        for layer in &self.params.layers {
            let (out, cache) = self.encode(layer, tokens, b, p, rng)?;
            layers.push(cache);
            tokens = out;
        }

        let fused = tokens.reshape(b, TOKENS * d)?;
        let head = &self.params.head;
        let z1 = head.fc1.forward(&fused)?;
        let (bn1_out, bn1) = head.bn1.forward(&gelu(&z1), pass.batch_stats);
        let mask1 = dropout_mask(b, d, p, rng);
        let a1 = apply_mask(&bn1_out, mask1.as_ref());
        let z2 = head.fc2.forward(&a1)?;
        let (bn2_out, bn2) = head.bn2.forward(&gelu(&z2), pass.batch_stats);
        let mask2 = dropout_mask(b, cfg.head_hidden(), p, rng);
        let a2 = apply_mask(&bn2_out, mask2.as_ref());
        let logits = head.fc3.forward(&a2)?;
        let probs = softmax_rows(&logits);

        Ok(ForwardOutput {
            probs: probs.clone(),
            logits,
            cache: ForwardCache {
                batch: b,
                pass,
                text: text_cache,
                image: image_cache,
                layers,
                head: HeadCache { fused, z1, bn1, mask1, a1, z2, bn2, mask2, a2 },
                probs,
            },
        })
    }

    fn project(
        &self,
        proj: &super::model::ProjectionLayer,
        x: &Matrix,
        pass: PassConfig,
        p: f64,
        rng: &mut SeededRng,
    ) -> Result<(Matrix, ProjectionCache)> {
        let z = proj.linear.forward(x)?;
        let (bn_out, bn) = proj.bn.forward(&z, pass.batch_stats);
        let mask = dropout_mask(x.rows(), self.cfg.d_model, p, rng);
        let out = apply_mask(&gelu(&bn_out), mask.as_ref());
        Ok((out, ProjectionCache { input: x.clone(), bn_out, bn, mask }))
    }

    fn encode(
        &self,
        layer: &EncoderLayer,
        h: Matrix,
        b: usize,
        p: f64,
        rng: &mut SeededRng,
    ) -> Result<(Matrix, LayerCache)> {
        let d = self.cfg.d_model;
        let heads = self.cfg.heads;
        let dk = self.cfg.head_dim();
        let scale = 1.0 / (dk as f64).sqrt();

        let q = h.matmul(&layer.wq)?;
        let k = h.matmul(&layer.wk)?;
        let v = h.matmul(&layer.wv)?;
        let mut attn = vec![0.0; b * heads * TOKENS * TOKENS];
        let mut context = Matrix::zeros(TOKENS * b, d);
        for s in 0..b {
            for hd in 0..heads {
                let cols = hd * dk..(hd + 1) * dk;
                let base = (s * heads + hd) * TOKENS * TOKENS;
                for i in 0..TOKENS {
                    let qi = &q.row(TOKENS * s + i)[cols.clone()];
                    let w = &mut attn[base + i * TOKENS..base + (i + 1) * TOKENS];
                    for (j, wj) in w.iter_mut().enumerate() {
                        let kj = &k.row(TOKENS * s + j)[cols.clone()];
                        *wj = scale * qi.iter().zip(kj).map(|(a, c)| a * c).sum::<f64>();
                    }
                    softmax_in_place(w);
                }
                for i in 0..TOKENS {
                    for j in 0..TOKENS {
                        let w = attn[base + i * TOKENS + j];
                        for c in cols.clone() {
                            context[(TOKENS * s + i, c)] += w * v[(TOKENS * s + j, c)];
                        }
                    }
                }
            }
        }
        let attn_out = context.matmul(&layer.wo)?;
        let attn_mask = dropout_mask(TOKENS * b, d, p, rng);
        let r1 = h.add(&apply_mask(&attn_out, attn_mask.as_ref()))?;
        let (h1, ln1) = layer_norm_cached(&r1, &layer.ln1_gamma, &layer.ln1_beta, LN_EPS)?;

        let ff_pre = layer.ff1.forward(&h1)?;
        let ff_act = gelu(&ff_pre);
        let ff_out = layer.ff2.forward(&ff_act)?;
        let ff_mask = dropout_mask(TOKENS * b, d, p, rng);
        let r2 = h1.add(&apply_mask(&ff_out, ff_mask.as_ref()))?;
        let (out, ln2) = layer_norm_cached(&r2, &layer.ln2_gamma, &layer.ln2_beta, LN_EPS)?;

        Ok((out, LayerCache { input: h, q, k, v, attn, context, attn_mask, ln1, h1, ff_pre, ff_act, ff_mask, ln2 }))
    }

    /// Gradients of the mean cross-entropy over the batch.
    pub fn backward(&self, cache: &ForwardCache, labels: &[usize]) -> Result<GradientSet> {
        let w = vec![1.0 / cache.batch as f64; cache.batch];
        self.backward_weighted(cache, labels, &w)
    }

    /// Gradients of `Σᵢ wᵢ · CE(sample i)`.
    pub fn backward_weighted(&self, cache: &ForwardCache, labels: &[usize], weights: &[f64]) -> Result<GradientSet> {
        let b = cache.batch;
        if labels.len() != b || weights.len() != b {
            return Err(Error::Contract(format!(
                "cache holds a batch of {b} but got {} labels and {} weights",
                labels.len(),
                weights.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= N_CLASSES) {
            return Err(Error::Param(format!("class index {bad} outside 0..3")));
        }
        let mut dlogits = cache.probs.clone();
        for (s, (&l, &wt)) in labels.iter().zip(weights).enumerate() {
            dlogits[(s, l)] -= 1.0;
            dlogits.row_mut(s).iter_mut().for_each(|x| *x *= wt);
        }
        self.backward_from_logits(cache, &dlogits)
    }

    /// Backpropagates an arbitrary upstream gradient on the logits.
    pub fn backward_from_logits(&self, cache: &ForwardCache, dlogits: &Matrix) -> Result<GradientSet> {
        let cfg = &self.cfg;
        let b = cache.batch;
        if dlogits.shape() != (b, N_CLASSES) {
            return Err(Error::Contract(format!(
                "logit gradient {}x{} does not match cached batch {b}",
                dlogits.rows(),
                dlogits.cols()
            )));
        }
        let mut grads = GradientSet::zeros(cfg);
        let g = &mut grads.params;
        let prm = &self.params;
        let hc = &cache.head;

        // Head.
        let da2 = prm.head.fc3.backward(&hc.a2, dlogits, &mut g.head.fc3)?;
        let dbn2 = apply_mask(&da2, hc.mask2.as_ref());
        let dgelu2 = prm.head.bn2.backward(&dbn2, &hc.bn2, &mut g.head.bn2);
        let dz2 = gelu_backward(&dgelu2, &hc.z2);
        let da1 = prm.head.fc2.backward(&hc.a1, &dz2, &mut g.head.fc2)?;
        let dbn1 = apply_mask(&da1, hc.mask1.as_ref());
        let dgelu1 = prm.head.bn1.backward(&dbn1, &hc.bn1, &mut g.head.bn1);
        let dz1 = gelu_backward(&dgelu1, &hc.z1);
        let dfused = prm.head.fc1.backward(&hc.fused, &dz1, &mut g.head.fc1)?;

        // Encoder, last layer first.
        let mut dtokens = dfused.reshape(TOKENS * b, cfg.d_model)?;
        for (idx, lc) in cache.layers.iter().enumerate().rev() {
            dtokens = self.encode_backward(&prm.layers[idx], lc, &dtokens, b, &mut g.layers[idx])?;
        }

        // Projections.
        let d = cfg.d_model;
        let mut dt = Matrix::zeros(b, d);
        let mut di = Matrix::zeros(b, d);
        for s in 0..b {
            dt.row_mut(s).copy_from_slice(dtokens.row(TOKENS * s));
            di.row_mut(s).copy_from_slice(dtokens.row(TOKENS * s + 1));
        }
        for (proj, pc, grad, dtok) in [
            (&prm.text_proj, &cache.text, &mut g.text_proj, dt),
            (&prm.image_proj, &cache.image, &mut g.image_proj, di),
        ] {
            let dact = apply_mask(&dtok, pc.mask.as_ref());
            let dbn = gelu_backward(&dact, &pc.bn_out);
            let dz = proj.bn.backward(&dbn, &pc.bn, &mut grad.bn);
            proj.linear.backward(&pc.input, &dz, &mut grad.linear)?;
        }
        Ok(grads)
    }

    fn encode_backward(
        &self,
        layer: &EncoderLayer,
        lc: &LayerCache,
        dout: &Matrix,
        b: usize,
        g: &mut EncoderLayer,
    ) -> Result<Matrix> {
        let heads = self.cfg.heads;
        let dk = self.cfg.head_dim();
        let scale = 1.0 / (dk as f64).sqrt();

        // Feed-forward sublayer.
        let dr2 = layer_norm_backward(dout, &lc.ln2, &layer.ln2_gamma, &mut g.ln2_gamma, &mut g.ln2_beta);
        let dff_out = apply_mask(&dr2, lc.ff_mask.as_ref());
        let dff_act = layer.ff2.backward(&lc.ff_act, &dff_out, &mut g.ff2)?;
        let dff_pre = gelu_backward(&dff_act, &lc.ff_pre);
        let mut dh1 = layer.ff1.backward(&lc.h1, &dff_pre, &mut g.ff1)?;
        dh1.add_assign(&dr2)?;

        // Attention sublayer.
        let dr1 = layer_norm_backward(&dh1, &lc.ln1, &layer.ln1_gamma, &mut g.ln1_gamma, &mut g.ln1_beta);
        let dattn_out = apply_mask(&dr1, lc.attn_mask.as_ref());
        g.wo.add_assign(&lc.context.t_matmul(&dattn_out)?)?;
        let dcontext = dattn_out.matmul_t(&layer.wo)?;

        let mut dq = Matrix::zeros(lc.q.rows(), lc.q.cols());
        let mut dk_m = Matrix::zeros(lc.k.rows(), lc.k.cols());
        let mut dv = Matrix::zeros(lc.v.rows(), lc.v.cols());
        for s in 0..b {
            for hd in 0..heads {
                let cols = hd * dk..(hd + 1) * dk;
                let base = (s * heads + hd) * TOKENS * TOKENS;
                let a = &lc.attn[base..base + TOKENS * TOKENS];
                // dA[i][j] = dctx_i · v_j ; dV_j += Σ_i A[i][j] dctx_i
                let mut da = [0.0; TOKENS * TOKENS];
                for i in 0..TOKENS {
                    let ri = TOKENS * s + i;
                    for j in 0..TOKENS {
                        let rj = TOKENS * s + j;
                        let mut acc = 0.0;
                        for c in cols.clone() {
                            acc += dcontext[(ri, c)] * lc.v[(rj, c)];
                            dv[(rj, c)] += a[i * TOKENS + j] * dcontext[(ri, c)];
                        }
                        da[i * TOKENS + j] = acc;
                    }
                }
                // Softmax backward per query row, then the scaled dot product.
                for i in 0..TOKENS {
                    let row_dot: f64 = (0..TOKENS).map(|j| da[i * TOKENS + j] * a[i * TOKENS + j]).sum();
                    for j in 0..TOKENS {
                        let ds = a[i * TOKENS + j] * (da[i * TOKENS + j] - row_dot) * scale;
                        let ri = TOKENS * s + i;
                        let rj = TOKENS * s + j;
                        for c in cols.clone() {
                            dq[(ri, c)] += ds * lc.k[(rj, c)];
                            dk_m[(rj, c)] += ds * lc.q[(ri, c)];
                        }
                    }
                }
            }
        }
        g.wq.add_assign(&lc.input.t_matmul(&dq)?)?;
        g.wk.add_assign(&lc.input.t_matmul(&dk_m)?)?;
        g.wv.add_assign(&lc.input.t_matmul(&dv)?)?;
        let mut dinput = dr1;
        dinput.add_assign(&dq.matmul_t(&layer.wq)?)?;
        dinput.add_assign(&dk_m.matmul_t(&layer.wk)?)?;
        dinput.add_assign(&dv.matmul_t(&layer.wv)?)?;
        Ok(dinput)
    }

    /// Class indices (0-based, ties to the lowest) and probabilities for every
    /// record, using running batch-norm statistics and no dropout.
    pub fn predict(&self, corpus: &Corpus) -> Result<(Vec<usize>, Matrix)> {
        let image = corpus.image_matrix()?;
        let text = corpus.text_matrix();
        self.predict_matrices(&text, &image)
    }

    pub fn predict_matrices(&self, text: &Matrix, image: &Matrix) -> Result<(Vec<usize>, Matrix)> {
        let n = text.rows();
        let mut probs = Matrix::zeros(n, N_CLASSES);
        // Inference never draws from the stream; the generator is a placeholder.
        let mut rng = SeededRng::new(0);
        let mut start = 0;
        while start < n {
            let end = (start + PREDICT_CHUNK).min(n);
            let rows: Vec<usize> = (start..end).collect();
            let out =
                self.forward_with(&text.select_rows(&rows), &image.select_rows(&rows), PassConfig::EVAL, &mut rng)?;
            for (k, r) in rows.iter().enumerate() {
                probs.row_mut(*r).copy_from_slice(out.probs.row(k));
            }
            start = end;
        }
        Ok((probs.argmax_rows(), probs))
    }

    /// Folds the batch statistics of a training pass into the running estimates.
    pub fn update_running_stats(&mut self, cache: &ForwardCache) {
        let b = cache.batch;
        self.params.text_proj.bn.update_running(&cache.text.bn, b);
        self.params.image_proj.bn.update_running(&cache.image.bn, b);
        self.params.head.bn1.update_running(&cache.head.bn1, b);
        self.params.head.bn2.update_running(&cache.head.bn2, b);
    }
}
