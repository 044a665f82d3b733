//! Recurrent next-token model over activity-location chains: embedding, two
//! gated recurrent layers, an additive attention layer skip-connected to the
//! embedding and both recurrent outputs, and a dense softmax head. Trained
//! with masked next-token cross-entropy through time; sampled with a
//! temperature (0 = deterministic argmax).

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{softmax_rows, Adam, Dense, Embedding, LstmCell, LstmStep, PTensor};
use crate::schema::{TokenVocabulary, TrajectorySeq, BOS_IDX, EOS_IDX, PAD_IDX};

/// Training hyperparameters for the sequence model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeqConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Per-epoch multiplicative learning-rate decay (1.0 = constant).
    #[serde(default = "default_lr_decay")]
    pub lr_decay: f64,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub attn_dim: usize,
    pub seed: u64,
}

fn default_lr_decay() -> f64 {
    1.0
}

impl Default for SeqConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            batch_size: 10,
            lr: 2e-3,
            lr_decay: 1.0,
            embed_dim: 100,
            hidden_dim: 128,
            attn_dim: 64,
            seed: 0,
        }
    }
}

/// Sampling controls. Temperature 0 makes decoding deterministic argmax.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub temperature: f64,
    pub max_len: usize,
    pub seed: u64,
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.temperature < 0.0 {
            return Err(Error::Config("temperature must be >= 0".into()));
        }
        if self.max_len == 0 {
            return Err(Error::Config("max_len must be positive".into()));
        }
        Ok(())
    }
}

/// Equal-width token index rows (BOS + tokens + EOS + PAD…) with the
/// valid-prediction-target mask.
#[derive(Debug, Clone)]
pub struct PaddedBatch {
    pub rows: Vec<Vec<usize>>,
    pub width: usize,
}

impl PaddedBatch {
    /// True when position `s + 1` of row `b` is a real prediction target.
    pub fn target_valid(&self, b: usize, s: usize) -> bool {
        self.rows[b][s + 1] != PAD_IDX
    }
}

/// Lays out each trajectory as BOS + tokens + EOS followed by PAD up to the
/// shared width `n_max + 2`.
pub fn pad_and_mask(
    trajs: &[TrajectorySeq],
    vocab: &TokenVocabulary,
    n_max: usize,
) -> Result<PaddedBatch> {
    let width = n_max + 2;
    let mut rows = Vec::with_capacity(trajs.len());
    for traj in trajs {
        if traj.tokens.len() > n_max {
            return Err(Error::Schema(format!(
                "trajectory for `{}` has {} locations, cap is {n_max}",
                traj.person_id,
                traj.tokens.len()
            )));
        }
        let mut row = Vec::with_capacity(width);
        row.push(BOS_IDX);
        for token in &traj.tokens {
            let idx = vocab.idx(token).ok_or_else(|| {
                Error::Schema(format!("token `{token}` missing from vocabulary"))
            })?;
            row.push(idx);
        }
        row.push(EOS_IDX);
        row.resize(width, PAD_IDX);
        rows.push(row);
    }
    Ok(PaddedBatch { rows, width })
}

/// The sequence model. Per-step features are the concatenation of the
/// embedding output and both recurrent outputs; attention scores those
/// features causally and the output layer reads concat(context, h2).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeqModel {
    pub vocab: TokenVocabulary,
    pub n_max: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub attn_dim: usize,
    embedding: Embedding,
    lstm1: LstmCell,
    lstm2: LstmCell,
    attn_proj: Dense,
    attn_score: PTensor, // 1 × attn_dim
    out: Dense,
}

impl SeqModel {
    pub fn new<R: Rng>(vocab: TokenVocabulary, n_max: usize, cfg: &SeqConfig, rng: &mut R) -> Self {
        let v = vocab.size();
        let d_e = cfg.embed_dim;
        let d_h = cfg.hidden_dim;
        let d_f = d_e + 2 * d_h;
        Self {
            vocab,
            n_max,
            embed_dim: d_e,
            hidden_dim: d_h,
            attn_dim: cfg.attn_dim,
            embedding: Embedding::new(v, d_e, rng),
            lstm1: LstmCell::new(d_e, d_h, rng),
            lstm2: LstmCell::new(d_h, d_h, rng),
            attn_proj: Dense::new(d_f, cfg.attn_dim, rng),
            attn_score: PTensor::uniform_fan_in(1, cfg.attn_dim, cfg.attn_dim, rng),
            out: Dense::new(d_f + d_h, v, rng),
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.embed_dim + 2 * self.hidden_dim
    }

    pub fn params_mut(&mut self) -> Vec<&mut PTensor> {
        let mut p = vec![&mut self.embedding.table];
        p.extend(self.lstm1.params_mut());
        p.extend(self.lstm2.params_mut());
        p.extend(self.attn_proj.params_mut());
        p.push(&mut self.attn_score);
        p.extend(self.out.params_mut());
        p
    }

    pub fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    pub fn sync_aux(&mut self) {
        self.embedding.sync_aux();
        self.lstm1.sync_aux();
        self.lstm2.sync_aux();
        self.attn_proj.sync_aux();
        self.attn_score.sync_aux();
        self.out.sync_aux();
        self.vocab.rebuild_index();
    }

    /// Masked mean next-token cross-entropy of `batch`; accumulates exact
    /// parameter gradients when `backward` is set.
    pub fn batch_loss(&mut self, batch: &PaddedBatch, backward: bool) -> f64 {
        let b_rows = batch.rows.len();
        let t_steps = batch.width - 1;
        let d_e = self.embed_dim;
        let d_h = self.hidden_dim;
        let d_f = self.feature_dim();
        let vsize = self.vocab.size();

        // ── forward ──────────────────────────────────────────────────────
        let ids: Vec<Vec<usize>> = (0..t_steps)
            .map(|s| (0..b_rows).map(|b| batch.rows[b][s]).collect())
            .collect();
        let emb: Vec<Array2<f64>> = ids.iter().map(|step| self.embedding.lookup(step)).collect();

        // Input-side projections for both recurrent layers in one product each.
        let mut emb_stack = Array2::zeros((t_steps * b_rows, d_e));
        for s in 0..t_steps {
            emb_stack
                .slice_mut(ndarray::s![s * b_rows..(s + 1) * b_rows, ..])
                .assign(&emb[s]);
        }
        let zx1_stack = self.lstm1.project_inputs(&emb_stack);

        let mut steps1: Vec<LstmStep> = Vec::with_capacity(t_steps);
        let mut h = Array2::zeros((b_rows, d_h));
        let mut c = Array2::zeros((b_rows, d_h));
        for s in 0..t_steps {
            let zx = zx1_stack
                .slice(ndarray::s![s * b_rows..(s + 1) * b_rows, ..])
                .to_owned();
            let step = self.lstm1.step(&zx, &h, &c);
            h = step.h.clone();
            c = step.c.clone();
            steps1.push(step);
        }

        let mut h1_stack = Array2::zeros((t_steps * b_rows, d_h));
        for s in 0..t_steps {
            h1_stack
                .slice_mut(ndarray::s![s * b_rows..(s + 1) * b_rows, ..])
                .assign(&steps1[s].h);
        }
        let zx2_stack = self.lstm2.project_inputs(&h1_stack);

        let mut steps2: Vec<LstmStep> = Vec::with_capacity(t_steps);
        let mut h = Array2::zeros((b_rows, d_h));
        let mut c = Array2::zeros((b_rows, d_h));
        for s in 0..t_steps {
            let zx = zx2_stack
                .slice(ndarray::s![s * b_rows..(s + 1) * b_rows, ..])
                .to_owned();
            let step = self.lstm2.step(&zx, &h, &c);
            h = step.h.clone();
            c = step.c.clone();
            steps2.push(step);
        }

        // Skip-connected per-step features: concat(embedding, h1, h2).
        let mut feat_stack = Array2::zeros((t_steps * b_rows, d_f));
        for s in 0..t_steps {
            let rows = ndarray::s![s * b_rows..(s + 1) * b_rows, ..];
            feat_stack
                .slice_mut(rows)
                .slice_mut(ndarray::s![.., 0..d_e])
                .assign(&emb[s]);
            feat_stack
                .slice_mut(rows)
                .slice_mut(ndarray::s![.., d_e..d_e + d_h])
                .assign(&steps1[s].h);
            feat_stack
                .slice_mut(rows)
                .slice_mut(ndarray::s![.., d_e + d_h..d_f])
                .assign(&steps2[s].h);
        }

        let proj = self.attn_proj.forward(&feat_stack).mapv(f64::tanh);
        let scores = proj.dot(&self.attn_score.value.row(0)); // (T*B)

        // Causal softmax over steps and attention-weighted contexts.
        let mut alphas: Vec<Array2<f64>> = Vec::with_capacity(t_steps);
        let mut out_stack = Array2::zeros((t_steps * b_rows, d_f + d_h));
        for t in 0..t_steps {
            let mut alpha = Array2::zeros((b_rows, t + 1));
            for b in 0..b_rows {
                let mut max = f64::NEG_INFINITY;
                for s in 0..=t {
                    max = max.max(scores[s * b_rows + b]);
                }
                let mut sum = 0.0;
                for s in 0..=t {
                    let e = (scores[s * b_rows + b] - max).exp();
                    alpha[[b, s]] = e;
                    sum += e;
                }
                for s in 0..=t {
                    alpha[[b, s]] /= sum;
                }
            }
            let mut context = Array2::zeros((b_rows, d_f));
            for s in 0..=t {
                let f_s = feat_stack.slice(ndarray::s![s * b_rows..(s + 1) * b_rows, ..]);
                let a_col = alpha.column(s);
                ndarray::Zip::from(context.rows_mut())
                    .and(f_s.rows())
                    .and(&a_col)
                    .for_each(|mut crow, frow, &a| {
                        crow.scaled_add(a, &frow);
                    });
            }
            let rows = ndarray::s![t * b_rows..(t + 1) * b_rows, ..];
            out_stack
                .slice_mut(rows)
                .slice_mut(ndarray::s![.., 0..d_f])
                .assign(&context);
            out_stack
                .slice_mut(rows)
                .slice_mut(ndarray::s![.., d_f..d_f + d_h])
                .assign(&steps2[t].h);
            alphas.push(alpha);
        }

        let logits = self.out.forward(&out_stack); // (T*B) × V
        let probs = softmax_rows(&logits);

        let mut n_valid = 0usize;
        let mut loss = 0.0;
        for t in 0..t_steps {
            for b in 0..b_rows {
                if batch.target_valid(b, t) {
                    let target = batch.rows[b][t + 1];
                    loss -= probs[[t * b_rows + b, target]].max(1e-300).ln();
                    n_valid += 1;
                }
            }
        }
        if n_valid == 0 {
            return 0.0;
        }
        loss /= n_valid as f64;

        if !backward {
            return loss;
        }

        // ── backward ─────────────────────────────────────────────────────
        let mut d_logits = probs;
        for t in 0..t_steps {
            for b in 0..b_rows {
                let r = t * b_rows + b;
                if batch.target_valid(b, t) {
                    let target = batch.rows[b][t + 1];
                    d_logits[[r, target]] -= 1.0;
                    for v in 0..vsize {
                        d_logits[[r, v]] /= n_valid as f64;
                    }
                } else {
                    for v in 0..vsize {
                        d_logits[[r, v]] = 0.0;
                    }
                }
            }
        }
        let d_out_stack = self.out.backward(&d_logits);

        // Split into context gradients and direct h2 gradients.
        let mut d_feat: Vec<Array2<f64>> = (0..t_steps)
            .map(|_| Array2::zeros((b_rows, d_f)))
            .collect();
        let d_h2_direct: Vec<Array2<f64>> = (0..t_steps)
            .map(|t| {
                d_out_stack
                    .slice(ndarray::s![t * b_rows..(t + 1) * b_rows, d_f..d_f + d_h])
                    .to_owned()
            })
            .collect();
        let mut d_scores = Array1::zeros(t_steps * b_rows);
        for t in 0..t_steps {
            let d_context = d_out_stack
                .slice(ndarray::s![t * b_rows..(t + 1) * b_rows, 0..d_f])
                .to_owned();
            let alpha = &alphas[t];
            // dα then softmax jacobian per batch row.
            let mut d_alpha = Array2::zeros((b_rows, t + 1));
            for s in 0..=t {
                let f_s = feat_stack.slice(ndarray::s![s * b_rows..(s + 1) * b_rows, ..]);
                for b in 0..b_rows {
                    d_alpha[[b, s]] = d_context.row(b).dot(&f_s.row(b));
                }
            }
            for b in 0..b_rows {
                let dot: f64 = (0..=t).map(|s| alpha[[b, s]] * d_alpha[[b, s]]).sum();
                for s in 0..=t {
                    d_scores[s * b_rows + b] += alpha[[b, s]] * (d_alpha[[b, s]] - dot);
                }
            }
            for s in 0..=t {
                let a_col = alpha.column(s);
                ndarray::Zip::from(d_feat[s].rows_mut())
                    .and(d_context.rows())
                    .and(&a_col)
                    .for_each(|mut drow, crow, &a| {
                        drow.scaled_add(a, &crow);
                    });
            }
        }

        // Attention projection backward (stacked).
        let mut d_proj = Array2::zeros((t_steps * b_rows, self.attn_dim));
        for r in 0..t_steps * b_rows {
            let ds = d_scores[r];
            self.attn_score.grad.row_mut(0).scaled_add(ds, &proj.row(r));
            d_proj.row_mut(r).scaled_add(ds, &self.attn_score.value.row(0));
        }
        let d_pre = &d_proj * &proj.mapv(|p| 1.0 - p * p);
        let d_feat_from_attn = self.attn_proj.backward(&d_pre);
        for s in 0..t_steps {
            d_feat[s] += &d_feat_from_attn.slice(ndarray::s![s * b_rows..(s + 1) * b_rows, ..]);
        }

        // BPTT through both recurrent layers.
        let mut dz2_stack = Array2::zeros((t_steps * b_rows, 4 * d_h));
        let mut dz1_stack = Array2::zeros((t_steps * b_rows, 4 * d_h));
        let mut dh2_next = Array2::zeros((b_rows, d_h));
        let mut dc2_next = Array2::zeros((b_rows, d_h));
        let mut dh1_next = Array2::zeros((b_rows, d_h));
        let mut dc1_next = Array2::zeros((b_rows, d_h));
        for s in (0..t_steps).rev() {
            let mut dh2 = dh2_next.clone();
            dh2 += &d_h2_direct[s];
            dh2 += &d_feat[s].slice(ndarray::s![.., d_e + d_h..d_f]);
            let (dz2, dh2_prev, dc2_prev) = self.lstm2.backward_step(&steps2[s], &dh2, &dc2_next);
            let dx2 = dz2.dot(&self.lstm2.w_x.value.t());
            dz2_stack
                .slice_mut(ndarray::s![s * b_rows..(s + 1) * b_rows, ..])
                .assign(&dz2);
            dh2_next = dh2_prev;
            dc2_next = dc2_prev;

            let mut dh1 = dh1_next.clone();
            dh1 += &dx2;
            dh1 += &d_feat[s].slice(ndarray::s![.., d_e..d_e + d_h]);
            let (dz1, dh1_prev, dc1_prev) = self.lstm1.backward_step(&steps1[s], &dh1, &dc1_next);
            let dx1 = dz1.dot(&self.lstm1.w_x.value.t());
            dz1_stack
                .slice_mut(ndarray::s![s * b_rows..(s + 1) * b_rows, ..])
                .assign(&dz1);
            dh1_next = dh1_prev;
            dc1_next = dc1_prev;

            let mut d_emb = d_feat[s].slice(ndarray::s![.., 0..d_e]).to_owned();
            d_emb += &dx1;
            self.embedding.backward(&ids[s], &d_emb);
        }

        // Recurrent weight gradients from the stacked dz.
        let mut h1_prev_stack = Array2::zeros((t_steps * b_rows, d_h));
        let mut h2_prev_stack = Array2::zeros((t_steps * b_rows, d_h));
        for s in 1..t_steps {
            h1_prev_stack
                .slice_mut(ndarray::s![s * b_rows..(s + 1) * b_rows, ..])
                .assign(&steps1[s - 1].h);
            h2_prev_stack
                .slice_mut(ndarray::s![s * b_rows..(s + 1) * b_rows, ..])
                .assign(&steps2[s - 1].h);
        }
        self.lstm1.w_x.grad += &emb_stack.t().dot(&dz1_stack);
        self.lstm1.w_h.grad += &h1_prev_stack.t().dot(&dz1_stack);
        self.lstm1.b.grad += &dz1_stack.sum_axis(Axis(0)).insert_axis(Axis(0));
        self.lstm2.w_x.grad += &h1_stack.t().dot(&dz2_stack);
        self.lstm2.w_h.grad += &h2_prev_stack.t().dot(&dz2_stack);
        self.lstm2.b.grad += &dz2_stack.sum_axis(Axis(0)).insert_axis(Axis(0));

        loss
    }

    /// Incremental decoding state for one sequence.
    fn fresh_state(&self) -> DecodeState {
        DecodeState {
            h1: Array2::zeros((1, self.hidden_dim)),
            c1: Array2::zeros((1, self.hidden_dim)),
            h2: Array2::zeros((1, self.hidden_dim)),
            c2: Array2::zeros((1, self.hidden_dim)),
            feats: Vec::new(),
            scores: Vec::new(),
        }
    }

    /// Feeds one token and returns the next-token logits.
    fn decode_step(&self, state: &mut DecodeState, token: usize) -> Array1<f64> {
        let d_e = self.embed_dim;
        let d_h = self.hidden_dim;
        let d_f = self.feature_dim();

        let e = self.embedding.lookup(&[token]);
        let zx1 = self.lstm1.project_inputs(&e);
        let s1 = self.lstm1.step(&zx1, &state.h1, &state.c1);
        let zx2 = self.lstm2.project_inputs(&s1.h);
        let s2 = self.lstm2.step(&zx2, &state.h2, &state.c2);

        let mut feat = Array1::zeros(d_f);
        feat.slice_mut(ndarray::s![0..d_e]).assign(&e.row(0));
        feat.slice_mut(ndarray::s![d_e..d_e + d_h]).assign(&s1.h.row(0));
        feat.slice_mut(ndarray::s![d_e + d_h..d_f]).assign(&s2.h.row(0));

        let proj = self
            .attn_proj
            .forward_infer(&feat.clone().insert_axis(Axis(0)))
            .mapv(f64::tanh);
        let score = proj.row(0).dot(&self.attn_score.value.row(0));
        state.feats.push(feat);
        state.scores.push(score);

        let max = state.scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = state.scores.iter().map(|&s| (s - max).exp()).collect();
        let wsum: f64 = weights.iter().sum();
        let mut context = Array1::zeros(d_f);
        for (w, f) in weights.iter().zip(&state.feats) {
            context.scaled_add(w / wsum, f);
        }

        let mut out_in = Array1::zeros(d_f + d_h);
        out_in.slice_mut(ndarray::s![0..d_f]).assign(&context);
        out_in.slice_mut(ndarray::s![d_f..d_f + d_h]).assign(&s2.h.row(0));

        state.h1 = s1.h;
        state.c1 = s1.c;
        state.h2 = s2.h;
        state.c2 = s2.c;

        self.out
            .forward_infer(&out_in.insert_axis(Axis(0)))
            .row(0)
            .to_owned()
    }
}

struct DecodeState {
    h1: Array2<f64>,
    c1: Array2<f64>,
    h2: Array2<f64>,
    c2: Array2<f64>,
    feats: Vec<Array1<f64>>,
    scores: Vec<f64>,
}

/// Next-token distribution after consuming `prefix` (which must start at
/// BOS). Sums to 1 over the full vocabulary.
pub fn seq_forward(model: &SeqModel, prefix: &[usize]) -> Result<Vec<f64>> {
    if prefix.is_empty() {
        return Err(Error::Schema("prefix must be nonempty".into()));
    }
    if prefix[0] != BOS_IDX {
        return Err(Error::Schema("prefix must start at BOS".into()));
    }
    for &t in prefix {
        if t >= model.vocab.size() {
            return Err(Error::Schema(format!("token index {t} out of vocabulary")));
        }
    }
    let mut state = model.fresh_state();
    let mut logits = Array1::zeros(model.vocab.size());
    for &t in prefix {
        logits = model.decode_step(&mut state, t);
    }
    Ok(crate::transforms::softmax(logits.as_slice().unwrap()))
}

/// Per-epoch training and held-out losses.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeqEpochLoss {
    pub epoch: usize,
    pub loss: f64,
    pub val_loss: Option<f64>,
}

pub fn seq_trace_csv(trace: &[SeqEpochLoss]) -> String {
    let mut out = String::from("epoch,loss,val_loss\n");
    for e in trace {
        match e.val_loss {
            Some(v) => out.push_str(&format!("{},{},{}\n", e.epoch, e.loss, v)),
            None => out.push_str(&format!("{},{},\n", e.epoch, e.loss)),
        }
    }
    out
}

/// Trains the next-token model with masked cross-entropy through time.
/// 10% of the corpus (when large enough) is held out for the reported
/// validation loss.
pub fn train_seq(
    trajs: &[TrajectorySeq],
    vocab: &TokenVocabulary,
    n_max: usize,
    cfg: &SeqConfig,
) -> Result<(SeqModel, Vec<SeqEpochLoss>)> {
    if trajs.is_empty() {
        return Err(Error::Train("cannot train on an empty corpus".into()));
    }
    let padded = pad_and_mask(trajs, vocab, n_max)?;
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let mut model = SeqModel::new(vocab.clone(), n_max, cfg, &mut rng);
    let mut opt = Adam::new(cfg.lr, 0.9, 0.999);

    let mut indices: Vec<usize> = (0..padded.rows.len()).collect();
    shuffle(&mut indices, &mut rng);
    let n_val = padded.rows.len() / 10;
    let (val_idx, train_idx) = indices.split_at(n_val);
    let mut train_idx = train_idx.to_vec();
    let val_batch = PaddedBatch {
        rows: val_idx.iter().map(|&i| padded.rows[i].clone()).collect(),
        width: padded.width,
    };

    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        opt.lr = cfg.lr * cfg.lr_decay.powi(epoch as i32);
        shuffle(&mut train_idx, &mut rng);
        let mut loss_sum = 0.0;
        let mut n_batches = 0usize;
        for chunk in train_idx.chunks(cfg.batch_size.max(1)) {
            let batch = PaddedBatch {
                rows: chunk.iter().map(|&i| padded.rows[i].clone()).collect(),
                width: padded.width,
            };
            let loss = model.batch_loss(&batch, true);
            if !loss.is_finite() {
                return Err(Error::TrainDiverged {
                    epoch,
                    detail: format!("loss={loss}"),
                });
            }
            opt.step(model.params_mut());
            loss_sum += loss;
            n_batches += 1;
        }
        let val_loss = if val_batch.rows.is_empty() {
            None
        } else {
            Some(model.batch_loss(&val_batch, false))
        };
        trace.push(SeqEpochLoss {
            epoch,
            loss: loss_sum / n_batches.max(1) as f64,
            val_loss,
        });
    }
    Ok((model, trace))
}

fn shuffle<R: Rng>(indices: &mut [usize], rng: &mut R) {
    for i in (1..indices.len()).rev() {
        let j = rng.random_range(0..=i);
        indices.swap(i, j);
    }
}

/// Autoregressive sampling: draws from softmax(logits/temperature), argmax
/// at temperature 0, stopping at EOS or `max_len` locations. PAD/BOS are
/// never emitted; a sequence whose first draw is EOS is resampled (up to 100
/// attempts, then the most probable zone is emitted).
pub fn sample_trajectories<R: Rng>(
    model: &SeqModel,
    n: usize,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<Vec<TrajectorySeq>> {
    cfg.validate()?;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut tokens = Vec::new();
        'attempt: for _ in 0..100 {
            tokens.clear();
            let mut state = model.fresh_state();
            let mut logits = model.decode_step(&mut state, BOS_IDX);
            loop {
                let next = draw_token(&logits, cfg.temperature, rng);
                if next == EOS_IDX {
                    if tokens.is_empty() {
                        continue 'attempt; // degenerate: resample the sequence
                    }
                    break 'attempt;
                }
                tokens.push(next);
                if tokens.len() >= cfg.max_len {
                    break 'attempt;
                }
                logits = model.decode_step(&mut state, next);
            }
        }
        if tokens.is_empty() {
            // 100 immediate-EOS draws: fall back to the most probable zone.
            let mut state = model.fresh_state();
            let logits = model.decode_step(&mut state, BOS_IDX);
            let mut best = EOS_IDX + 1;
            for v in EOS_IDX + 1..model.vocab.size() {
                if logits[v] > logits[best] {
                    best = v;
                }
            }
            tokens.push(best);
        }
        out.push(TrajectorySeq {
            person_id: format!("t{i:06}"),
            tokens: tokens
                .into_iter()
                .map(|t| model.vocab.token(t).to_string())
                .collect(),
        });
    }
    Ok(out)
}

/// One temperature-scaled draw from masked logits (PAD and BOS excluded).
fn draw_token<R: Rng>(logits: &Array1<f64>, temperature: f64, rng: &mut R) -> usize {
    let mut masked = logits.clone();
    masked[PAD_IDX] = f64::NEG_INFINITY;
    masked[BOS_IDX] = f64::NEG_INFINITY;
    if temperature == 0.0 {
        let mut best = EOS_IDX;
        for v in 0..masked.len() {
            if masked[v] > masked[best] {
                best = v;
            }
        }
        return best;
    }
    let scaled: Vec<f64> = masked.iter().map(|&l| l / temperature).collect();
    let probs = crate::transforms::softmax(&scaled);
    crate::transforms::sample_index(&probs, rng)
}

/// Versioned checkpoint for the sequence model.
#[derive(Debug, Serialize, Deserialize)]
pub struct SeqCheckpoint {
    pub version: u32,
    pub config: SeqConfig,
    pub model: SeqModel,
}

impl SeqCheckpoint {
    pub const VERSION: u32 = 1;

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let mut ckpt: SeqCheckpoint = serde_json::from_str(json)?;
        if ckpt.version != Self::VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint version {}",
                ckpt.version
            )));
        }
        ckpt.model.sync_aux();
        Ok(ckpt)
    }
}
