//! Conditional GAN over encoded population rows: a generator with
//! dense/batch-norm/ReLU blocks and per-block output heads (tanh scalar
//! slots, Gumbel-softmax one-hot blocks), and a packed discriminator with
//! leaky-ReLU dense layers. Trained with alternating non-saturating updates
//! plus a condition-enforcement cross-entropy penalty.

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{softplus, Adam, BatchNorm, Dense, LeakyRelu, PTensor, Relu};
use crate::schema::RecordBatch;
use crate::transforms::{sample_gumbel, BlockKind, ColumnEncoding, EncodedBlock, ModeSelect};

/// Training hyperparameters for the tabular GAN.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Rows the discriminator judges jointly; must divide `batch_size`.
    pub pac: usize,
    pub latent_dim: usize,
    pub hidden: Vec<usize>,
    /// Gumbel-softmax temperature on the generator's one-hot heads.
    pub tau: f64,
    /// Weight of the condition-enforcement cross-entropy penalty.
    pub cond_weight: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            batch_size: 10,
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.9,
            pac: 10,
            latent_dim: 128,
            hidden: vec![512, 512, 512],
            tau: 0.2,
            cond_weight: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        if self.pac == 0 || self.batch_size % self.pac != 0 {
            return Err(Error::Config(format!(
                "batch_size {} must be divisible by pac {}",
                self.batch_size, self.pac
            )));
        }
        if self.tau <= 0.0 {
            return Err(Error::Config("tau must be positive".into()));
        }
        Ok(())
    }
}

/// A drawn condition: one categorical column fixed to one category,
/// expressed as a one-hot inside the flattened condition space.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionVector {
    pub schema_col: usize,
    pub category: usize,
    /// Offset of the chosen column's block in condition space.
    pub block_offset: usize,
    pub block_width: usize,
}

impl ConditionVector {
    pub fn to_vec(&self, cond_width: usize) -> Vec<f64> {
        let mut v = vec![0.0; cond_width];
        v[self.block_offset + self.category] = 1.0;
        v
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CondColumn {
    schema_col: usize,
    offset: usize,
    n_cats: usize,
    /// log(1 + count) per category, for training-time sampling.
    log_freq: Vec<f64>,
    /// Raw counts per category, for synthesis-time sampling.
    raw_freq: Vec<f64>,
    /// Row indices per category, for condition-matched real sampling.
    rows_by_cat: Vec<Vec<usize>>,
}

/// Draws conditions over the categorical columns of a training batch.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionSampler {
    cols: Vec<CondColumn>,
    cond_width: usize,
}

impl ConditionSampler {
    pub fn from_batch(batch: &RecordBatch) -> Result<Self> {
        let mut cols = Vec::new();
        let mut offset = 0;
        for (ci, _) in batch.schema.categorical_columns() {
            let counts = batch.category_counts(ci);
            let mut rows_by_cat = vec![Vec::new(); counts.len()];
            for r in 0..batch.n_rows() {
                rows_by_cat[batch.cell(r, ci).as_cat().unwrap()].push(r);
            }
            cols.push(CondColumn {
                schema_col: ci,
                offset,
                n_cats: counts.len(),
                log_freq: counts.iter().map(|&c| (1.0 + c as f64).ln()).collect(),
                raw_freq: counts.iter().map(|&c| c as f64).collect(),
                rows_by_cat,
            });
            offset += counts.len();
        }
        if cols.is_empty() {
            return Err(Error::Schema(
                "conditional sampling requires at least one categorical column".into(),
            ));
        }
        Ok(Self {
            cols,
            cond_width: offset,
        })
    }

    pub fn cond_width(&self) -> usize {
        self.cond_width
    }

    /// Training-time draw: column uniform, category ∝ log(1 + frequency).
    pub fn sample_training<R: Rng>(&self, rng: &mut R) -> ConditionVector {
        let col = &self.cols[rng.random_range(0..self.cols.len())];
        let category = crate::transforms::sample_index(&col.log_freq, rng);
        ConditionVector {
            schema_col: col.schema_col,
            category,
            block_offset: col.offset,
            block_width: col.n_cats,
        }
    }

    /// Synthesis-time draw: column uniform, category ∝ raw frequency, so
    /// generated marginals track the training data.
    pub fn sample_synthesis<R: Rng>(&self, rng: &mut R) -> ConditionVector {
        let col = &self.cols[rng.random_range(0..self.cols.len())];
        let category = crate::transforms::sample_index(&col.raw_freq, rng);
        ConditionVector {
            schema_col: col.schema_col,
            category,
            block_offset: col.offset,
            block_width: col.n_cats,
        }
    }

    /// A real row matching the condition, drawn uniformly.
    pub fn matching_row<R: Rng>(&self, cond: &ConditionVector, rng: &mut R) -> usize {
        let col = self
            .cols
            .iter()
            .find(|c| c.schema_col == cond.schema_col)
            .expect("condition references a known column");
        let rows = &col.rows_by_cat[cond.category];
        rows[rng.random_range(0..rows.len())]
    }
}

/// Spec-level convenience: draw one training condition from a batch.
pub fn sample_condition<R: Rng>(batch: &RecordBatch, rng: &mut R) -> Result<ConditionVector> {
    Ok(ConditionSampler::from_batch(batch)?.sample_training(rng))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GenBlock {
    dense: Dense,
    bn: BatchNorm,
    relu: Relu,
}

/// Generator network: hidden dense+batchnorm+ReLU blocks over concat(z,
/// cond), then one dense head whose output is split into tanh scalar slots
/// and Gumbel-softmax one-hot blocks per the column encoding layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratorNet {
    pub latent_dim: usize,
    pub cond_width: usize,
    pub tau: f64,
    blocks: Vec<GenBlock>,
    out: Dense,
    layout: Vec<EncodedBlock>,
    #[serde(skip)]
    cache_out: Option<Array2<f64>>,
}

impl GeneratorNet {
    pub fn new<R: Rng>(
        latent_dim: usize,
        cond_width: usize,
        hidden: &[usize],
        encoding: &ColumnEncoding,
        tau: f64,
        rng: &mut R,
    ) -> Self {
        let mut blocks = Vec::new();
        let mut in_dim = latent_dim + cond_width;
        for &width in hidden {
            blocks.push(GenBlock {
                dense: Dense::new(in_dim, width, rng),
                bn: BatchNorm::new(width),
                relu: Relu::default(),
            });
            in_dim = width;
        }
        let out = Dense::new(in_dim, encoding.encoded_width(), rng);
        Self {
            latent_dim,
            cond_width,
            tau,
            blocks,
            out,
            layout: encoding.blocks(),
            cache_out: None,
        }
    }

    pub fn output_width(&self) -> usize {
        self.layout.iter().map(|b| b.width).sum()
    }

    pub fn layout(&self) -> &[EncodedBlock] {
        &self.layout
    }

    /// The encoded block holding a categorical column's one-hot output.
    pub fn cat_block(&self, schema_col: usize) -> Option<EncodedBlock> {
        self.layout
            .iter()
            .find(|b| b.col == schema_col && b.kind == BlockKind::CategoricalOneHot)
            .copied()
    }

    fn apply_heads<R: Rng>(&self, logits: Array2<f64>, rng: &mut R) -> Array2<f64> {
        let mut y = logits;
        for block in &self.layout {
            match block.kind {
                BlockKind::Scalar => {
                    let col = block.offset;
                    y.column_mut(col).mapv_inplace(f64::tanh);
                }
                BlockKind::CategoricalOneHot | BlockKind::ModeIndicator => {
                    for mut row in y
                        .slice_mut(ndarray::s![.., block.offset..block.offset + block.width])
                        .rows_mut()
                    {
                        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let tau = self.tau;
                        row.mapv_inplace(|v| ((v - max) + sample_gumbel(rng)) / tau);
                        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        row.mapv_inplace(|v| (v - m).exp());
                        let sum = row.sum();
                        row.mapv_inplace(|v| v / sum);
                    }
                }
            }
        }
        y
    }

    /// Training-mode forward (batch statistics in the BN layers).
    pub fn forward_train<R: Rng>(&mut self, z_cond: &Array2<f64>, rng: &mut R) -> Array2<f64> {
        let mut x = z_cond.clone();
        for block in &mut self.blocks {
            x = block.dense.forward(&x);
            x = block.bn.forward_train(&x);
            x = block.relu.forward(&x);
        }
        let logits = self.out.forward(&x);
        let y = self.apply_heads(logits, rng);
        self.cache_out = Some(y.clone());
        y
    }

    /// Inference-mode forward (running statistics in the BN layers).
    pub fn forward_infer<R: Rng>(&self, z_cond: &Array2<f64>, rng: &mut R) -> Array2<f64> {
        let mut x = z_cond.clone();
        for block in &self.blocks {
            x = block.dense.forward_infer(&x);
            x = block.bn.forward_infer(&x);
            x = Relu::forward_infer(&x);
        }
        let logits = self.out.forward_infer(&x);
        self.apply_heads(logits, rng)
    }

    /// Backward from the gradient of the generated (post-head) output.
    /// Returns the gradient w.r.t. the concat(z, cond) input.
    pub fn backward(&mut self, d_out: &Array2<f64>) -> Array2<f64> {
        let y = self.cache_out.as_ref().expect("forward before backward");
        let mut d_logits = d_out.clone();
        for block in &self.layout {
            match block.kind {
                BlockKind::Scalar => {
                    let col = block.offset;
                    let yc = y.column(col);
                    let mut dc = d_logits.column_mut(col);
                    ndarray::Zip::from(&mut dc).and(&yc).for_each(|d, &v| {
                        *d *= 1.0 - v * v;
                    });
                }
                BlockKind::CategoricalOneHot | BlockKind::ModeIndicator => {
                    let range = ndarray::s![.., block.offset..block.offset + block.width];
                    let p = y.slice(range);
                    let mut dp = d_logits.slice_mut(range);
                    // softmax backward, scaled by 1/tau
                    for (mut drow, prow) in dp.rows_mut().into_iter().zip(p.rows()) {
                        let dot: f64 = drow
                            .iter()
                            .zip(prow.iter())
                            .map(|(&d, &pv)| d * pv)
                            .sum();
                        for (d, &pv) in drow.iter_mut().zip(prow.iter()) {
                            *d = pv * (*d - dot) / self.tau;
                        }
                    }
                }
            }
        }
        let mut dx = self.out.backward(&d_logits);
        for block in self.blocks.iter_mut().rev() {
            dx = block.relu.backward(&dx);
            dx = block.bn.backward(&dx);
            dx = block.dense.backward(&dx);
        }
        dx
    }

    pub fn params_mut(&mut self) -> Vec<&mut PTensor> {
        let mut params = Vec::new();
        for block in &mut self.blocks {
            params.extend(block.dense.params_mut());
            params.extend(block.bn.params_mut());
        }
        params.extend(self.out.params_mut());
        params
    }

    pub fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    pub fn sync_aux(&mut self) {
        for block in &mut self.blocks {
            block.dense.sync_aux();
            block.bn.sync_aux();
        }
        self.out.sync_aux();
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DiscBlock {
    dense: Dense,
    act: LeakyRelu,
}

/// Packed discriminator: judges `pac` (row, condition) pairs jointly and
/// emits one pre-sigmoid score per pack.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiscriminatorNet {
    pub pac: usize,
    pub item_width: usize,
    layers: Vec<DiscBlock>,
    out: Dense,
}

impl DiscriminatorNet {
    pub fn new<R: Rng>(
        row_width: usize,
        cond_width: usize,
        pac: usize,
        hidden: &[usize],
        rng: &mut R,
    ) -> Self {
        let item_width = row_width + cond_width;
        let mut layers = Vec::new();
        let mut in_dim = pac * item_width;
        for &width in hidden {
            layers.push(DiscBlock {
                dense: Dense::new(in_dim, width, rng),
                act: LeakyRelu::new(0.2),
            });
            in_dim = width;
        }
        let out = Dense::new(in_dim, 1, rng);
        Self {
            pac,
            item_width,
            layers,
            out,
        }
    }

    /// Pre-sigmoid scores, one per pack row of `packed`.
    pub fn forward_logits(&mut self, packed: &Array2<f64>) -> Array1<f64> {
        let mut x = packed.clone();
        for layer in &mut self.layers {
            x = layer.dense.forward(&x);
            x = layer.act.forward(&x);
        }
        self.out.forward(&x).column(0).to_owned()
    }

    pub fn forward_logits_infer(&self, packed: &Array2<f64>) -> Array1<f64> {
        let mut x = packed.clone();
        for layer in &self.layers {
            x = layer.dense.forward_infer(&x);
            x = layer.act.forward_infer(&x);
        }
        self.out.forward_infer(&x).column(0).to_owned()
    }

    /// Backward from per-pack score gradients to the packed input gradient.
    pub fn backward(&mut self, d_scores: &Array1<f64>) -> Array2<f64> {
        let dy = d_scores.clone().insert_axis(Axis(1));
        let mut dx = self.out.backward(&dy);
        for layer in self.layers.iter_mut().rev() {
            dx = layer.act.backward(&dx);
            dx = layer.dense.backward(&dx);
        }
        dx
    }

    pub fn params_mut(&mut self) -> Vec<&mut PTensor> {
        let mut params = Vec::new();
        for layer in &mut self.layers {
            params.extend(layer.dense.params_mut());
        }
        params.extend(self.out.params_mut());
        params
    }

    pub fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    pub fn sync_aux(&mut self) {
        for layer in &mut self.layers {
            layer.dense.sync_aux();
        }
        self.out.sync_aux();
    }
}

/// Packs `pac` consecutive (row ⊕ cond) items per discriminator input row.
pub fn pack_rows(rows: &Array2<f64>, conds: &Array2<f64>, pac: usize) -> Result<Array2<f64>> {
    let n = rows.nrows();
    if n % pac != 0 {
        return Err(Error::Train(format!("{n} rows cannot be packed by pac={pac}")));
    }
    let item = rows.ncols() + conds.ncols();
    let mut out = Array2::zeros((n / pac, pac * item));
    for r in 0..n {
        let pack = r / pac;
        let base = (r % pac) * item;
        out.slice_mut(ndarray::s![pack, base..base + rows.ncols()])
            .assign(&rows.row(r));
        out.slice_mut(ndarray::s![pack, base + rows.ncols()..base + item])
            .assign(&conds.row(r));
    }
    Ok(out)
}

/// Splits a packed-input gradient back into per-row gradients, dropping the
/// condition slots.
fn unpack_row_grads(d_packed: &Array2<f64>, pac: usize, row_width: usize, item: usize) -> Array2<f64> {
    let n = d_packed.nrows() * pac;
    let mut out = Array2::zeros((n, row_width));
    for r in 0..n {
        let pack = r / pac;
        let base = (r % pac) * item;
        out.row_mut(r)
            .assign(&d_packed.slice(ndarray::s![pack, base..base + row_width]));
    }
    out
}

/// Score in (0, 1) for one pack of `pac` (row, condition) pairs.
pub fn discriminator_forward(
    disc: &DiscriminatorNet,
    rows: &Array2<f64>,
    conds: &Array2<f64>,
) -> Result<f64> {
    if rows.nrows() != disc.pac || conds.nrows() != disc.pac {
        return Err(Error::Train(format!(
            "pack of {} rows does not match pac={}",
            rows.nrows(),
            disc.pac
        )));
    }
    if rows.ncols() + conds.ncols() != disc.item_width {
        return Err(Error::Train("pack item width mismatch".into()));
    }
    let packed = pack_rows(rows, conds, disc.pac)?;
    Ok(crate::nn::sigmoid(disc.forward_logits_infer(&packed)[0]))
}

/// Fixed inputs for one training step; keeping them explicit makes the step
/// losses deterministic functions of the network parameters, which the
/// finite-difference gradient checks rely on.
pub struct StepInputs {
    pub z: Array2<f64>,
    pub conds: Vec<ConditionVector>,
    pub real: Array2<f64>,
    pub gumbel_seed: u64,
}

fn conds_matrix(conds: &[ConditionVector], cond_width: usize) -> Array2<f64> {
    let mut m = Array2::zeros((conds.len(), cond_width));
    for (i, c) in conds.iter().enumerate() {
        if cond_width > 0 {
            m[[i, c.block_offset + c.category]] = 1.0;
        }
    }
    m
}

fn concat_cols(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    ndarray::concatenate(Axis(1), &[a.view(), b.view()]).expect("row counts match")
}

/// Discriminator objective for one step:
/// `-(mean log D(real) + mean log(1 - D(fake)))`, means over packs.
/// With `backward`, accumulates gradients into the discriminator only.
pub fn discriminator_loss(
    gen: &mut GeneratorNet,
    disc: &mut DiscriminatorNet,
    inp: &StepInputs,
    backward: bool,
) -> f64 {
    let mut grng = ChaCha12Rng::seed_from_u64(inp.gumbel_seed);
    let cond_m = conds_matrix(&inp.conds, gen.cond_width);
    let z_cond = concat_cols(&inp.z, &cond_m);
    let fake = gen.forward_train(&z_cond, &mut grng);

    let real_packed = pack_rows(&inp.real, &cond_m, disc.pac).expect("pac divides batch");
    let fake_packed = pack_rows(&fake, &cond_m, disc.pac).expect("pac divides batch");
    let both = ndarray::concatenate(Axis(0), &[real_packed.view(), fake_packed.view()]).unwrap();
    let scores = disc.forward_logits(&both);
    let n_packs = real_packed.nrows();

    let mut loss = 0.0;
    for p in 0..n_packs {
        loss += softplus(-scores[p]); // -log D(real)
        loss += softplus(scores[n_packs + p]); // -log(1 - D(fake))
    }
    loss /= n_packs as f64;

    if backward {
        let mut d_scores = Array1::zeros(2 * n_packs);
        for p in 0..n_packs {
            d_scores[p] = (crate::nn::sigmoid(scores[p]) - 1.0) / n_packs as f64;
            d_scores[n_packs + p] = crate::nn::sigmoid(scores[n_packs + p]) / n_packs as f64;
        }
        disc.backward(&d_scores);
    }
    loss
}

/// Generator objective for one step: `-mean log D(fake)` plus the
/// condition-enforcement cross-entropy. With `backward`, accumulates
/// gradients into both networks (the discriminator's are discarded by the
/// caller).
pub fn generator_loss(
    gen: &mut GeneratorNet,
    disc: &mut DiscriminatorNet,
    inp: &StepInputs,
    cond_weight: f64,
    backward: bool,
) -> f64 {
    let mut grng = ChaCha12Rng::seed_from_u64(inp.gumbel_seed);
    let cond_m = conds_matrix(&inp.conds, gen.cond_width);
    let z_cond = concat_cols(&inp.z, &cond_m);
    let fake = gen.forward_train(&z_cond, &mut grng);
    let batch = fake.nrows();

    let fake_packed = pack_rows(&fake, &cond_m, disc.pac).expect("pac divides batch");
    let scores = disc.forward_logits(&fake_packed);
    let n_packs = fake_packed.nrows();

    let mut loss = scores.iter().map(|&s| softplus(-s)).sum::<f64>() / n_packs as f64;

    // Cross-entropy between the conditioned one-hot and the generated block.
    let mut d_fake_ce = Array2::zeros(fake.raw_dim());
    if cond_weight > 0.0 && gen.cond_width > 0 {
        let mut ce = 0.0;
        for (i, cond) in inp.conds.iter().enumerate() {
            let block = gen
                .cat_block(cond.schema_col)
                .expect("condition column has an encoded block");
            let p = fake[[i, block.offset + cond.category]].max(1e-12);
            ce += -p.ln();
            d_fake_ce[[i, block.offset + cond.category]] =
                cond_weight * (-1.0 / p) / batch as f64;
        }
        loss += cond_weight * ce / batch as f64;
    }

    if backward {
        let d_scores = scores.mapv(|s| (crate::nn::sigmoid(s) - 1.0) / n_packs as f64);
        let d_packed = disc.backward(&d_scores);
        let mut d_fake = unpack_row_grads(&d_packed, disc.pac, fake.ncols(), disc.item_width);
        d_fake += &d_fake_ce;
        gen.backward(&d_fake);
    }
    loss
}

/// Per-epoch averaged losses and the generator step count behind them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub d_loss: f64,
    pub g_loss: f64,
    pub steps: usize,
}

pub fn loss_trace_csv(trace: &[EpochLoss]) -> String {
    let mut out = String::from("epoch,d_loss,g_loss\n");
    for e in trace {
        out.push_str(&format!("{},{},{}\n", e.epoch, e.d_loss, e.g_loss));
    }
    out
}

/// Trains the conditional GAN on an encoded batch. Alternates one
/// discriminator and one generator update per step, `ceil(n / batch_size)`
/// steps per epoch.
pub fn train(
    batch: &RecordBatch,
    encoding: &ColumnEncoding,
    cfg: &TrainConfig,
) -> Result<(GeneratorNet, DiscriminatorNet, Vec<EpochLoss>)> {
    cfg.validate()?;
    if batch.n_rows() == 0 {
        return Err(Error::Train("cannot train on an empty batch".into()));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);

    let sampler = ConditionSampler::from_batch(batch).ok();
    let cond_width = sampler.as_ref().map_or(0, |s| s.cond_width());

    let mut gen = GeneratorNet::new(
        cfg.latent_dim,
        cond_width,
        &cfg.hidden,
        encoding,
        cfg.tau,
        &mut rng,
    );
    let mut disc = DiscriminatorNet::new(
        encoding.encoded_width(),
        cond_width,
        cfg.pac,
        &cfg.hidden,
        &mut rng,
    );
    let mut opt_d = Adam::new(cfg.lr, cfg.beta1, cfg.beta2);
    let mut opt_g = Adam::new(cfg.lr, cfg.beta1, cfg.beta2);

    let encoded = encoding.encode_batch(batch, ModeSelect::Sample, &mut rng);
    let steps_per_epoch = batch.n_rows().div_ceil(cfg.batch_size);

    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut d_sum = 0.0;
        let mut g_sum = 0.0;
        for _ in 0..steps_per_epoch {
            let d_inp = draw_step_inputs(&encoded, batch, &sampler, cfg, &mut rng);
            let d_loss = discriminator_loss(&mut gen, &mut disc, &d_inp, true);
            opt_d.step(disc.params_mut());
            gen.zero_grads();

            let g_inp = draw_step_inputs(&encoded, batch, &sampler, cfg, &mut rng);
            let g_loss = generator_loss(&mut gen, &mut disc, &g_inp, cfg.cond_weight, true);
            opt_g.step(gen.params_mut());
            disc.zero_grads();

            if !d_loss.is_finite() || !g_loss.is_finite() {
                return Err(Error::TrainDiverged {
                    epoch,
                    detail: format!("d_loss={d_loss}, g_loss={g_loss}"),
                });
            }
            d_sum += d_loss;
            g_sum += g_loss;
        }
        trace.push(EpochLoss {
            epoch,
            d_loss: d_sum / steps_per_epoch as f64,
            g_loss: g_sum / steps_per_epoch as f64,
            steps: steps_per_epoch,
        });
    }
    Ok((gen, disc, trace))
}

fn draw_step_inputs(
    encoded: &Array2<f64>,
    batch: &RecordBatch,
    sampler: &Option<ConditionSampler>,
    cfg: &TrainConfig,
    rng: &mut ChaCha12Rng,
) -> StepInputs {
    let b = cfg.batch_size;
    let mut conds = Vec::with_capacity(b);
    let mut real = Array2::zeros((b, encoded.ncols()));
    for i in 0..b {
        let row = match sampler {
            Some(s) => {
                let cond = s.sample_training(rng);
                let row = s.matching_row(&cond, rng);
                conds.push(cond);
                row
            }
            None => rng.random_range(0..batch.n_rows()),
        };
        real.row_mut(i).assign(&encoded.row(row));
    }
    let z = Array2::from_shape_fn((b, cfg.latent_dim), |_| rng.sample(StandardNormal));
    StepInputs {
        z,
        conds,
        real,
        gumbel_seed: rng.random::<u64>(),
    }
}

/// Samples `n` decoded rows from a trained generator. Conditions are drawn
/// per sample from the synthesis distribution; row ids are `s000000`-style.
pub fn sample_population<R: Rng>(
    gen: &GeneratorNet,
    n: usize,
    encoding: &ColumnEncoding,
    sampler: Option<&ConditionSampler>,
    rng: &mut R,
) -> Result<RecordBatch> {
    let mut ids = Vec::with_capacity(n);
    let mut rows = Vec::with_capacity(n);
    let chunk = 512usize;
    let mut produced = 0;
    while produced < n {
        let m = chunk.min(n - produced);
        let conds: Vec<ConditionVector> = match sampler {
            Some(s) => (0..m).map(|_| s.sample_synthesis(rng)).collect(),
            None => Vec::new(),
        };
        let cond_m = if gen.cond_width > 0 {
            conds_matrix(&conds, gen.cond_width)
        } else {
            Array2::zeros((m, 0))
        };
        let z = Array2::from_shape_fn((m, gen.latent_dim), |_| rng.sample(StandardNormal));
        let z_cond = concat_cols(&z, &cond_m);
        let out = gen.forward_infer(&z_cond, rng);
        for i in 0..m {
            let cells = encoding.decode_row(out.row(i).as_slice().unwrap())?;
            ids.push(format!("s{:06}", produced + i));
            rows.push(cells);
        }
        produced += m;
    }
    RecordBatch::new(encoding.schema.clone(), ids, rows)
}

/// Versioned checkpoint holding both networks and the sampling state.
#[derive(Debug, Serialize, Deserialize)]
pub struct GanCheckpoint {
    pub version: u32,
    pub config: TrainConfig,
    pub encoding_sha256: String,
    pub generator: GeneratorNet,
    pub discriminator: DiscriminatorNet,
    pub sampler: Option<ConditionSampler>,
}

impl GanCheckpoint {
    pub const VERSION: u32 = 1;

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let mut ckpt: GanCheckpoint = serde_json::from_str(json)?;
        if ckpt.version != Self::VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint version {}",
                ckpt.version
            )));
        }
        ckpt.generator.sync_aux();
        ckpt.discriminator.sync_aux();
        Ok(ckpt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{Cell, Column, ColumnKind, TabularSchema};

    const CHI2_CRIT_DF1: f64 = 6.6348966010212145; // alpha = 0.01

    fn cat_batch(counts: &[usize]) -> RecordBatch {
        let categories: Vec<String> = (0..counts.len()).map(|i| format!("C{i}")).collect();
        let schema = TabularSchema::new(vec![Column {
            name: "kind".into(),
            kind: ColumnKind::Categorical { categories },
        }])
        .unwrap();
        let mut ids = Vec::new();
        let mut rows = Vec::new();
        let mut p = 0;
        for (cat, &n) in counts.iter().enumerate() {
            for _ in 0..n {
                ids.push(format!("p{p}"));
                rows.push(vec![Cell::Cat(cat)]);
                p += 1;
            }
        }
        RecordBatch::new(schema, ids, rows).unwrap()
    }

    fn mixed_batch(n: usize) -> RecordBatch {
        let schema = TabularSchema::new(vec![
            Column {
                name: "x".into(),
                kind: ColumnKind::Continuous { unit: "u".into() },
            },
            Column {
                name: "kind".into(),
                kind: ColumnKind::Categorical {
                    categories: vec!["A".into(), "B".into(), "C".into()],
                },
            },
        ])
        .unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        let rows: Vec<Vec<Cell>> = (0..n)
            .map(|i| {
                let v: f64 = rng.sample(StandardNormal);
                vec![Cell::Num(v + (i % 2) as f64 * 6.0), Cell::Cat(i % 3)]
            })
            .collect();
        let ids = (0..n).map(|i| format!("p{i}")).collect();
        RecordBatch::new(schema, ids, rows).unwrap()
    }

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            epochs: 1,
            batch_size: 4,
            pac: 2,
            latent_dim: 4,
            hidden: vec![8],
            tau: 1.0,
            seed: 7,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn single_category_condition_is_constant() {
        // Two categories but one never occurs: log(1+0)=0 weight.
        let batch = cat_batch(&[10, 0]);
        let sampler = ConditionSampler::from_batch(&batch).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        for _ in 0..100 {
            let c = sampler.sample_training(&mut rng);
            assert_eq!(c.category, 0);
        }
    }

    #[test]
    fn condition_columns_drawn_uniformly() {
        let schema = TabularSchema::new(vec![
            Column {
                name: "a".into(),
                kind: ColumnKind::Categorical {
                    categories: vec!["x".into(), "y".into()],
                },
            },
            Column {
                name: "b".into(),
                kind: ColumnKind::Categorical {
                    categories: vec!["u".into(), "v".into()],
                },
            },
        ])
        .unwrap();
        let rows: Vec<Vec<Cell>> = (0..40).map(|i| vec![Cell::Cat(i % 2), Cell::Cat((i / 2) % 2)]).collect();
        let ids = (0..40).map(|i| format!("p{i}")).collect();
        let batch = RecordBatch::new(schema, ids, rows).unwrap();
        let sampler = ConditionSampler::from_batch(&batch).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let mut count_a = 0usize;
        let n = 10_000;
        for _ in 0..n {
            if sampler.sample_training(&mut rng).schema_col == 0 {
                count_a += 1;
            }
        }
        let expected = n as f64 / 2.0;
        let stat = (count_a as f64 - expected).powi(2) / expected
            + ((n - count_a) as f64 - expected).powi(2) / expected;
        assert!(stat < CHI2_CRIT_DF1, "chi-square {stat}");
    }

    #[test]
    fn log_frequency_boosts_minority() {
        let batch = cat_batch(&[9, 1]);
        let sampler = ConditionSampler::from_batch(&batch).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let n = 10_000;
        let mut minority_log = 0usize;
        let mut minority_raw = 0usize;
        for _ in 0..n {
            if sampler.sample_training(&mut rng).category == 1 {
                minority_log += 1;
            }
            if sampler.sample_synthesis(&mut rng).category == 1 {
                minority_raw += 1;
            }
        }
        // log-frequency rate ~0.231 vs raw rate ~0.1
        assert!(minority_log > minority_raw, "{minority_log} vs {minority_raw}");
        let rate = minority_log as f64 / n as f64;
        assert!((rate - 0.2314).abs() < 0.02, "log-freq rate {rate}");
    }

    #[test]
    fn no_categorical_columns_is_an_error() {
        let schema = TabularSchema::new(vec![Column {
            name: "x".into(),
            kind: ColumnKind::Continuous { unit: "u".into() },
        }])
        .unwrap();
        let batch = RecordBatch::new(schema, vec!["p".into()], vec![vec![Cell::Num(1.0)]]).unwrap();
        assert!(ConditionSampler::from_batch(&batch).is_err());
    }

    #[test]
    fn generator_output_width_and_simplex_blocks() {
        let batch = mixed_batch(40);
        let encoding = ColumnEncoding::fit(&batch, 2, 50, 1e-6).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let sampler = ConditionSampler::from_batch(&batch).unwrap();
        let mut gen = GeneratorNet::new(4, sampler.cond_width(), &[8, 8], &encoding, 0.5, &mut rng);
        let z = Array2::from_shape_fn((6, 4), |_| rng.sample(StandardNormal));
        let conds: Vec<_> = (0..6).map(|_| sampler.sample_training(&mut rng)).collect();
        let cond_m = conds_matrix(&conds, sampler.cond_width());
        let out = gen.forward_train(&concat_cols(&z, &cond_m), &mut rng);
        assert_eq!(out.ncols(), encoding.encoded_width());
        for block in gen.layout() {
            if block.kind != BlockKind::Scalar {
                for row in out
                    .slice(ndarray::s![.., block.offset..block.offset + block.width])
                    .rows()
                {
                    assert!((row.sum() - 1.0).abs() < 1e-9);
                }
            } else {
                for v in out.column(block.offset) {
                    assert!((-1.0..=1.0).contains(v));
                }
            }
        }
    }

    #[test]
    fn generator_forward_is_deterministic_given_rng_state() {
        let batch = mixed_batch(40);
        let encoding = ColumnEncoding::fit(&batch, 2, 50, 1e-6).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let gen_seed: u64 = rng.random();
        let mut gen = GeneratorNet::new(4, 3, &[8], &encoding, 0.5, &mut ChaCha12Rng::seed_from_u64(gen_seed));
        let z = Array2::from_shape_fn((4, 4 + 3), |_| rng.sample(StandardNormal));
        let a = gen.forward_train(&z, &mut ChaCha12Rng::seed_from_u64(42));
        let b = gen.forward_train(&z, &mut ChaCha12Rng::seed_from_u64(42));
        assert_eq!(a, b);
    }

    #[test]
    fn discriminator_score_in_unit_interval_and_pack_checked() {
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let disc = DiscriminatorNet::new(5, 2, 3, &[8], &mut rng);
        let rows = Array2::from_shape_fn((3, 5), |_| rng.random_range(-2.0..2.0));
        let conds = Array2::from_shape_fn((3, 2), |_| rng.random_range(0.0..1.0));
        let s = discriminator_forward(&disc, &rows, &conds).unwrap();
        assert!(s > 0.0 && s < 1.0);
        let s2 = discriminator_forward(&disc, &rows, &conds).unwrap();
        assert_eq!(s, s2);
        let bad = Array2::zeros((2, 5));
        assert!(discriminator_forward(&disc, &bad, &conds.slice(ndarray::s![0..2, ..]).to_owned()).is_err());
    }

    #[test]
    fn discriminator_reacts_to_perturbation() {
        let batch = mixed_batch(40);
        let encoding = ColumnEncoding::fit(&batch, 2, 50, 1e-6).unwrap();
        let cfg = TrainConfig {
            epochs: 3,
            ..small_cfg()
        };
        let (_, disc, _) = train(&batch, &encoding, &cfg).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let rows = Array2::from_shape_fn((cfg.pac, encoding.encoded_width()), |_| {
            rng.random_range(-1.0..1.0)
        });
        let conds = Array2::zeros((cfg.pac, 3));
        let s1 = discriminator_forward(&disc, &rows, &conds).unwrap();
        let mut rows2 = rows.clone();
        rows2[[0, 0]] += 0.5;
        let s2 = discriminator_forward(&disc, &rows2, &conds).unwrap();
        assert!((s1 - s2).abs() > 1e-12, "score did not react");
    }

    #[test]
    fn one_epoch_records_expected_step_count() {
        let batch = mixed_batch(10);
        let encoding = ColumnEncoding::fit(&batch, 2, 50, 1e-6).unwrap();
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 3,
            pac: 3,
            ..small_cfg()
        };
        let (_, _, trace) = train(&batch, &encoding, &cfg).unwrap();
        assert_eq!(trace.len(), 1);
        // ceil(10/3) = 4 generator steps recorded for the epoch.
        assert_eq!(trace[0].steps, 4);
        let csv = loss_trace_csv(&trace);
        assert!(csv.starts_with("epoch,d_loss,g_loss\n"));
        assert_eq!(csv.lines().count(), 2);
    }

    #[test]
    fn sampling_n_zero_and_determinism() {
        let batch = mixed_batch(60);
        let encoding = ColumnEncoding::fit(&batch, 2, 50, 1e-6).unwrap();
        let cfg = TrainConfig {
            epochs: 2,
            ..small_cfg()
        };
        let (gen, _, _) = train(&batch, &encoding, &cfg).unwrap();
        let sampler = ConditionSampler::from_batch(&batch).unwrap();

        let empty = sample_population(
            &gen,
            0,
            &encoding,
            Some(&sampler),
            &mut ChaCha12Rng::seed_from_u64(1),
        )
        .unwrap();
        assert_eq!(empty.n_rows(), 0);

        let a = sample_population(
            &gen,
            50,
            &encoding,
            Some(&sampler),
            &mut ChaCha12Rng::seed_from_u64(2),
        )
        .unwrap();
        let b = sample_population(
            &gen,
            50,
            &encoding,
            Some(&sampler),
            &mut ChaCha12Rng::seed_from_u64(2),
        )
        .unwrap();
        assert_eq!(a.n_rows(), 50);
        assert_eq!(a.rows(), b.rows());
        // Every categorical cell decodes to a valid index.
        for row in a.rows() {
            assert!(row[1].as_cat().unwrap() < 3);
        }
    }

    #[test]
    fn checkpoint_round_trip_preserves_sampling() {
        let batch = mixed_batch(40);
        let encoding = ColumnEncoding::fit(&batch, 2, 50, 1e-6).unwrap();
        let cfg = TrainConfig {
            epochs: 2,
            ..small_cfg()
        };
        let (gen, disc, _) = train(&batch, &encoding, &cfg).unwrap();
        let sampler = ConditionSampler::from_batch(&batch).unwrap();
        let ckpt = GanCheckpoint {
            version: GanCheckpoint::VERSION,
            config: cfg,
            encoding_sha256: "test".into(),
            generator: gen,
            discriminator: disc,
            sampler: Some(sampler),
        };
        let json = ckpt.to_json().unwrap();
        let back = GanCheckpoint::from_json(&json).unwrap();
        let a = sample_population(
            &ckpt.generator,
            20,
            &encoding,
            ckpt.sampler.as_ref(),
            &mut ChaCha12Rng::seed_from_u64(3),
        )
        .unwrap();
        let b = sample_population(
            &back.generator,
            20,
            &encoding,
            back.sampler.as_ref(),
            &mut ChaCha12Rng::seed_from_u64(3),
        )
        .unwrap();
        assert_eq!(a.rows(), b.rows());
    }

    struct CheckCtx {
        gen: GeneratorNet,
        disc: DiscriminatorNet,
        inp: StepInputs,
    }

    fn check_ctx() -> CheckCtx {
        let batch = mixed_batch(24);
        let encoding = ColumnEncoding::fit(&batch, 2, 50, 1e-6).unwrap();
        let sampler = ConditionSampler::from_batch(&batch).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        let gen = GeneratorNet::new(4, sampler.cond_width(), &[8], &encoding, 1.0, &mut rng);
        let disc = DiscriminatorNet::new(
            encoding.encoded_width(),
            sampler.cond_width(),
            2,
            &[8],
            &mut rng,
        );
        let batch_size = 4;
        let conds: Vec<_> = (0..batch_size).map(|_| sampler.sample_training(&mut rng)).collect();
        let mut real = Array2::zeros((batch_size, encoding.encoded_width()));
        let encoded = encoding.encode_batch(&batch, ModeSelect::Sample, &mut rng);
        for (i, cond) in conds.iter().enumerate() {
            let row = sampler.matching_row(cond, &mut rng);
            real.row_mut(i).assign(&encoded.row(row));
        }
        let z = Array2::from_shape_fn((batch_size, 4), |_| rng.sample(StandardNormal));
        CheckCtx {
            gen,
            disc,
            inp: StepInputs {
                z,
                conds,
                real,
                gumbel_seed: 99,
            },
        }
    }

    #[test]
    fn discriminator_gradients_match_finite_differences() {
        let mut ctx = check_ctx();
        let report = crate::gradcheck::finite_diff_check(
            &mut ctx,
            |c, backward| discriminator_loss(&mut c.gen, &mut c.disc, &c.inp, backward),
            |c| c.disc.params_mut(),
            0,
            1e-4,
            1,
        );
        assert!(report.passes(1e-4), "max rel err {:e} at {:?}", report.max_rel_err, report.worst);
    }

    #[test]
    fn generator_gradients_match_finite_differences() {
        let mut ctx = check_ctx();
        let report = crate::gradcheck::finite_diff_check(
            &mut ctx,
            |c, backward| generator_loss(&mut c.gen, &mut c.disc, &c.inp, 1.0, backward),
            |c| c.gen.params_mut(),
            0,
            1e-4,
            2,
        );
        assert!(report.passes(1e-4), "max rel err {:e} at {:?}", report.max_rel_err, report.worst);
    }

    #[test]
    fn generator_loss_discriminator_path_gradients_match() {
        let mut ctx = check_ctx();
        let report = crate::gradcheck::finite_diff_check(
            &mut ctx,
            |c, backward| generator_loss(&mut c.gen, &mut c.disc, &c.inp, 1.0, backward),
            |c| c.disc.params_mut(),
            0,
            1e-4,
            3,
        );
        assert!(report.passes(1e-4), "max rel err {:e} at {:?}", report.max_rel_err, report.worst);
    }

    #[test]
    fn learns_eighty_twenty_marginal() {
        let batch = cat_batch(&[160, 40]);
        let encoding = ColumnEncoding::fit(&batch, 2, 50, 1e-6).unwrap();
        let cfg = TrainConfig {
            epochs: 30,
            batch_size: 20,
            pac: 2,
            latent_dim: 8,
            hidden: vec![32],
            lr: 1e-3,
            tau: 0.2,
            seed: 11,
            ..TrainConfig::default()
        };
        let (gen, _, trace) = train(&batch, &encoding, &cfg).unwrap();
        assert_eq!(trace.len(), 30);
        let sampler = ConditionSampler::from_batch(&batch).unwrap();
        let synth = sample_population(
            &gen,
            2000,
            &encoding,
            Some(&sampler),
            &mut ChaCha12Rng::seed_from_u64(4),
        )
        .unwrap();
        let counts = synth.category_counts(0);
        let p0 = counts[0] as f64 / 2000.0;
        assert!((p0 - 0.8).abs() <= 0.05, "generated marginal {p0}");
    }

    #[test]
    fn invalid_pac_config_rejected() {
        let cfg = TrainConfig {
            batch_size: 10,
            pac: 3,
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
