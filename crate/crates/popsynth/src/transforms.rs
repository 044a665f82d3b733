//! Reversible encodings between raw cells and the GAN's numeric
//! representation: mode-specific normalization backed by a Gaussian mixture
//! for continuous columns, one-hot for categorical columns, and
//! Gumbel-softmax sampling for discrete outputs.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::{Cell, ColumnKind, RecordBatch, TabularSchema};

const LN_2PI: f64 = 1.837877066409345483560659472811;

/// One-dimensional Gaussian mixture fitted by EM.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaussianMixture {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl GaussianMixture {
    pub fn k(&self) -> usize {
        self.weights.len()
    }

    fn log_component_density(&self, c: usize, v: f64) -> f64 {
        let z = (v - self.means[c]) / self.stds[c];
        self.weights[c].max(1e-300).ln() - self.stds[c].ln() - 0.5 * (LN_2PI + z * z)
    }

    /// Posterior probability of each component given `v`; sums to 1.
    pub fn responsibilities(&self, v: f64) -> Vec<f64> {
        let logs: Vec<f64> = (0..self.k())
            .map(|c| self.log_component_density(c, v))
            .collect();
        let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut resp: Vec<f64> = logs.iter().map(|&l| (l - max).exp()).collect();
        let sum: f64 = resp.iter().sum();
        for r in &mut resp {
            *r /= sum;
        }
        resp
    }

    fn log_likelihood(&self, values: &[f64]) -> f64 {
        values
            .iter()
            .map(|&v| {
                let logs: Vec<f64> = (0..self.k())
                    .map(|c| self.log_component_density(c, v))
                    .collect();
                let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                max + logs.iter().map(|&l| (l - max).exp()).sum::<f64>().ln()
            })
            .sum()
    }
}

/// Fits a k-component mixture by EM. The returned log-likelihood trace is
/// non-decreasing (the M step is constrained to stds ≥ floor, and the floor
/// is also applied at initialization, so constrained EM monotonicity holds).
pub fn fit_gmm_traced(
    values: &[f64],
    k: usize,
    max_iter: usize,
    tol: f64,
) -> Result<(GaussianMixture, Vec<f64>)> {
    if k == 0 {
        return Err(Error::Transform("k must be at least 1".into()));
    }
    if values.is_empty() {
        return Err(Error::Transform("cannot fit mixture on empty data".into()));
    }
    let mut distinct: Vec<f64> = values.to_vec();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    distinct.dedup();
    if distinct.len() < k {
        return Err(Error::Transform(format!(
            "k={k} exceeds the {} distinct values",
            distinct.len()
        )));
    }

    let n = values.len() as f64;
    let lo = distinct[0];
    let hi = distinct[distinct.len() - 1];
    let range = hi - lo;
    let floor = if range > 0.0 { 1e-4 * range } else { 1e-4 };

    // Quantile initialization keeps the fit deterministic.
    let mean_all = values.iter().sum::<f64>() / n;
    let var_all = values.iter().map(|v| (v - mean_all).powi(2)).sum::<f64>() / n;
    let std_all = var_all.sqrt().max(floor);
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut gmm = GaussianMixture {
        weights: vec![1.0 / k as f64; k],
        means: (0..k)
            .map(|c| {
                let q = (c as f64 + 0.5) / k as f64;
                sorted[((q * n) as usize).min(sorted.len() - 1)]
            })
            .collect(),
        stds: vec![std_all; k],
    };

    let mut trace = Vec::with_capacity(max_iter + 1);
    trace.push(gmm.log_likelihood(values));
    let mut resp = vec![0.0f64; values.len() * k];
    for _ in 0..max_iter {
        // E step
        for (i, &v) in values.iter().enumerate() {
            let r = gmm.responsibilities(v);
            resp[i * k..(i + 1) * k].copy_from_slice(&r);
        }
        // M step with the std floor as a hard constraint
        for c in 0..k {
            let nc: f64 = (0..values.len()).map(|i| resp[i * k + c]).sum();
            if nc < 1e-12 {
                // Dead component: keep its parameters, shrink its weight.
                gmm.weights[c] = nc / n;
                continue;
            }
            let mean = (0..values.len())
                .map(|i| resp[i * k + c] * values[i])
                .sum::<f64>()
                / nc;
            let var = (0..values.len())
                .map(|i| resp[i * k + c] * (values[i] - mean).powi(2))
                .sum::<f64>()
                / nc;
            gmm.weights[c] = nc / n;
            gmm.means[c] = mean;
            gmm.stds[c] = var.sqrt().max(floor);
        }
        let ll = gmm.log_likelihood(values);
        let gain = ll - trace.last().unwrap();
        trace.push(ll);
        if gain.abs() < tol {
            break;
        }
    }
    Ok((gmm, trace))
}

pub fn fit_gmm(values: &[f64], k: usize, max_iter: usize, tol: f64) -> Result<GaussianMixture> {
    fit_gmm_traced(values, k, max_iter, tol).map(|(g, _)| g)
}

/// How the mixture mode is chosen while encoding a continuous value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeSelect {
    /// Sample the mode from the responsibilities (training encoding).
    Sample,
    /// Deterministic argmax, ties to the lowest index (round-trip testing).
    Argmax,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ColumnEncoder {
    Categorical { width: usize },
    Continuous { mixture: GaussianMixture },
}

/// Where a block of encoded values sits in the flat row vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedBlock {
    pub col: usize,
    pub kind: BlockKind,
    pub offset: usize,
    pub width: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockKind {
    /// Normalized scalar slot of a continuous column (tanh range).
    Scalar,
    /// One-hot over a categorical column's categories.
    CategoricalOneHot,
    /// One-hot over a continuous column's mixture modes.
    ModeIndicator,
}

/// Fitted per-column encodings for one schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnEncoding {
    pub schema: TabularSchema,
    pub encoders: Vec<ColumnEncoder>,
}

impl ColumnEncoding {
    /// Fits mixtures on every continuous column of `batch`.
    pub fn fit(batch: &RecordBatch, k: usize, max_iter: usize, tol: f64) -> Result<Self> {
        let mut encoders = Vec::with_capacity(batch.schema.columns.len());
        for (ci, col) in batch.schema.columns.iter().enumerate() {
            match &col.kind {
                ColumnKind::Categorical { categories } => {
                    encoders.push(ColumnEncoder::Categorical {
                        width: categories.len(),
                    });
                }
                ColumnKind::Continuous { .. } => {
                    let values = batch.continuous_values(ci);
                    let mut distinct = values.clone();
                    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
                    distinct.dedup();
                    // Columns with few distinct values get a smaller mixture.
                    let k_col = k.min(distinct.len()).max(1);
                    let mixture = fit_gmm(&values, k_col, max_iter, tol)?;
                    encoders.push(ColumnEncoder::Continuous { mixture });
                }
            }
        }
        Ok(Self {
            schema: batch.schema.clone(),
            encoders,
        })
    }

    pub fn encoded_width(&self) -> usize {
        self.encoders
            .iter()
            .map(|e| match e {
                ColumnEncoder::Categorical { width } => *width,
                ColumnEncoder::Continuous { mixture } => 1 + mixture.k(),
            })
            .sum()
    }

    /// Flat layout of the encoded row: scalar slots and one-hot blocks in
    /// schema column order.
    pub fn blocks(&self) -> Vec<EncodedBlock> {
        let mut blocks = Vec::new();
        let mut offset = 0;
        for (col, enc) in self.encoders.iter().enumerate() {
            match enc {
                ColumnEncoder::Categorical { width } => {
                    blocks.push(EncodedBlock {
                        col,
                        kind: BlockKind::CategoricalOneHot,
                        offset,
                        width: *width,
                    });
                    offset += width;
                }
                ColumnEncoder::Continuous { mixture } => {
                    blocks.push(EncodedBlock {
                        col,
                        kind: BlockKind::Scalar,
                        offset,
                        width: 1,
                    });
                    offset += 1;
                    blocks.push(EncodedBlock {
                        col,
                        kind: BlockKind::ModeIndicator,
                        offset,
                        width: mixture.k(),
                    });
                    offset += mixture.k();
                }
            }
        }
        blocks
    }

    pub fn encode_row<R: Rng>(&self, row: &[Cell], mode: ModeSelect, rng: &mut R) -> Vec<f64> {
        let mut out = vec![0.0; self.encoded_width()];
        let mut offset = 0;
        for (cell, enc) in row.iter().zip(&self.encoders) {
            match enc {
                ColumnEncoder::Categorical { width } => {
                    let idx = cell.as_cat().expect("categorical cell");
                    out[offset + idx] = 1.0;
                    offset += width;
                }
                ColumnEncoder::Continuous { mixture } => {
                    let v = cell.as_num().expect("continuous cell");
                    let resp = mixture.responsibilities(v);
                    let m = match mode {
                        ModeSelect::Argmax => argmax(&resp),
                        ModeSelect::Sample => sample_index(&resp, rng),
                    };
                    let scalar = ((v - mixture.means[m]) / (4.0 * mixture.stds[m]))
                        .clamp(-1.0, 1.0);
                    out[offset] = scalar;
                    out[offset + 1 + m] = 1.0;
                    offset += 1 + mixture.k();
                }
            }
        }
        out
    }

    /// Encodes the whole batch into an (n × width) matrix.
    pub fn encode_batch<R: Rng>(
        &self,
        batch: &RecordBatch,
        mode: ModeSelect,
        rng: &mut R,
    ) -> Array2<f64> {
        let width = self.encoded_width();
        let mut out = Array2::zeros((batch.n_rows(), width));
        for i in 0..batch.n_rows() {
            let row = self.encode_row(batch.row(i), mode, rng);
            out.row_mut(i).assign(&ndarray::ArrayView1::from(&row));
        }
        out
    }

    /// Inverse of [`encode_row`]: argmax over indicator blocks, ties to the
    /// lowest index.
    pub fn decode_row(&self, vec: &[f64]) -> Result<Vec<Cell>> {
        if vec.len() != self.encoded_width() {
            return Err(Error::Transform(format!(
                "encoded width {} does not match expected {}",
                vec.len(),
                self.encoded_width()
            )));
        }
        let mut cells = Vec::with_capacity(self.encoders.len());
        let mut offset = 0;
        for enc in &self.encoders {
            match enc {
                ColumnEncoder::Categorical { width } => {
                    cells.push(Cell::Cat(argmax(&vec[offset..offset + width])));
                    offset += width;
                }
                ColumnEncoder::Continuous { mixture } => {
                    let scalar = vec[offset];
                    let m = argmax(&vec[offset + 1..offset + 1 + mixture.k()]);
                    cells.push(Cell::Num(scalar * 4.0 * mixture.stds[m] + mixture.means[m]));
                    offset += 1 + mixture.k();
                }
            }
        }
        Ok(cells)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }
}

/// Softmax of `(logits + g) / tau` with `g` i.i.d. standard Gumbel noise.
pub fn gumbel_softmax<R: Rng>(logits: &[f64], tau: f64, rng: &mut R) -> Result<Vec<f64>> {
    if tau <= 0.0 || !tau.is_finite() {
        return Err(Error::Transform(format!("temperature must be positive, got {tau}")));
    }
    if logits.iter().any(|l| !l.is_finite()) {
        return Err(Error::Transform("logits must be finite".into()));
    }
    let perturbed: Vec<f64> = logits
        .iter()
        .map(|&l| (l + sample_gumbel(rng)) / tau)
        .collect();
    Ok(softmax(&perturbed))
}

pub fn sample_gumbel<R: Rng>(rng: &mut R) -> f64 {
    let u: f64 = rng.sample(rand::distr::Open01);
    -(-u.ln()).ln()
}

pub fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}

/// Index of the maximum entry; ties resolve to the lowest index.
pub fn argmax(x: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in x.iter().enumerate().skip(1) {
        if v > x[best] {
            best = i;
        }
    }
    best
}

/// Samples an index proportionally to nonnegative weights.
pub fn sample_index<R: Rng>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u: f64 = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        u -= w;
        if u <= 0.0 {
            return i;
        }
    }
    weights.len() - 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::Column;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;
    use rand_distr::StandardNormal;

    const CHI2_CRIT_DF1: f64 = 6.6348966010212145; // alpha = 0.01
    const CHI2_CRIT_DF9: f64 = 21.665994333461924; // alpha = 0.01

    fn chi_square(observed: &[usize], expected: &[f64]) -> f64 {
        observed
            .iter()
            .zip(expected)
            .map(|(&o, &e)| (o as f64 - e).powi(2) / e)
            .sum()
    }

    #[test]
    fn single_component_matches_moments() {
        let values = vec![1.0, 2.0, 3.0, 4.0, 10.0];
        let gmm = fit_gmm(&values, 1, 50, 1e-9).unwrap();
        let mean = values.iter().sum::<f64>() / 5.0;
        let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 5.0).sqrt();
        assert!((gmm.weights[0] - 1.0).abs() < 1e-12);
        assert!((gmm.means[0] - mean).abs() < 1e-9);
        assert!((gmm.stds[0] - std).abs() < 1e-9);
    }

    #[test]
    fn two_component_recovery() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let mut values = Vec::with_capacity(10_000);
        for i in 0..10_000 {
            let center = if i % 2 == 0 { 0.0 } else { 10.0 };
            let draw: f64 = rng.sample(StandardNormal);
            values.push(center + draw);
        }
        let gmm = fit_gmm(&values, 2, 200, 1e-8).unwrap();
        let mut means = gmm.means.clone();
        means.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((means[0] - 0.0).abs() < 0.3, "low mean {}", means[0]);
        assert!((means[1] - 10.0).abs() < 0.3, "high mean {}", means[1]);
    }

    #[test]
    fn constant_data_hits_std_floor() {
        let values = vec![5.0; 20];
        let gmm = fit_gmm(&values, 1, 50, 1e-9).unwrap();
        assert_eq!(gmm.stds[0], 1e-4);
        assert!((gmm.means[0] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn k_larger_than_distinct_count_errors() {
        assert!(fit_gmm(&[1.0, 1.0, 2.0], 3, 10, 1e-6).is_err());
    }

    #[test]
    fn em_loglik_non_decreasing() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for trial in 0..20 {
            let n = 100 + trial * 10;
            let values: Vec<f64> = (0..n)
                .map(|_| {
                    let c = rng.random_range(0..3) as f64 * 4.0;
                    let draw: f64 = rng.sample(StandardNormal);
                    c + draw
                })
                .collect();
            for &k in &[1usize, 2, 5] {
                let (_, trace) = fit_gmm_traced(&values, k, 60, 1e-9).unwrap();
                for w in trace.windows(2) {
                    assert!(
                        w[1] >= w[0] - 1e-9,
                        "log-likelihood decreased: {} -> {}",
                        w[0],
                        w[1]
                    );
                }
            }
        }
    }

    #[test]
    fn responsibilities_sum_to_one() {
        let gmm = GaussianMixture {
            weights: vec![0.3, 0.7],
            means: vec![0.0, 5.0],
            stds: vec![1.0, 2.0],
        };
        for v in [-3.0, 0.0, 2.5, 5.0, 100.0] {
            let r = gmm.responsibilities(v);
            assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    fn demo_encoding() -> (ColumnEncoding, RecordBatch) {
        let schema = TabularSchema::new(vec![
            Column {
                name: "age".into(),
                kind: ColumnKind::Continuous { unit: "years".into() },
            },
            Column {
                name: "industry".into(),
                kind: ColumnKind::Categorical {
                    categories: (0..5).map(|i| format!("I{i}")).collect(),
                },
            },
        ])
        .unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let rows: Vec<Vec<Cell>> = (0..200)
            .map(|i| {
                let base = if i % 2 == 0 { 30.0 } else { 60.0 };
                let draw: f64 = rng.sample(StandardNormal);
                vec![Cell::Num(base + draw), Cell::Cat(i % 5)]
            })
            .collect();
        let ids = (0..200).map(|i| format!("p{i}")).collect();
        let batch = RecordBatch::new(schema, ids, rows).unwrap();
        let enc = ColumnEncoding::fit(&batch, 2, 100, 1e-8).unwrap();
        (enc, batch)
    }

    #[test]
    fn encoded_width_matches_layout() {
        let (enc, _) = demo_encoding();
        assert_eq!(enc.encoded_width(), (1 + 2) + 5);
        let blocks = enc.blocks();
        assert_eq!(blocks.len(), 3);
        assert_eq!(blocks[0].kind, BlockKind::Scalar);
        assert_eq!(blocks[1].kind, BlockKind::ModeIndicator);
        assert_eq!(blocks[2].kind, BlockKind::CategoricalOneHot);
        let total: usize = blocks.iter().map(|b| b.width).sum();
        assert_eq!(total, enc.encoded_width());
    }

    #[test]
    fn value_at_mode_mean_encodes_to_zero_slot() {
        let (enc, _) = demo_encoding();
        let ColumnEncoder::Continuous { mixture } = &enc.encoders[0] else {
            panic!("expected continuous encoder");
        };
        let v = mixture.means[0];
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let encoded = enc.encode_row(&[Cell::Num(v), Cell::Cat(0)], ModeSelect::Argmax, &mut rng);
        // At the mean of its own mode the argmax responsibility picks that
        // mode and the scalar slot is 0.
        let m = argmax(&encoded[1..1 + mixture.k()]);
        assert!((encoded[0] - (v - mixture.means[m]) / (4.0 * mixture.stds[m])).abs() < 1e-12);
        assert!(encoded[0].abs() < 1e-9);
    }

    #[test]
    fn categorical_one_hot_layout() {
        let (enc, _) = demo_encoding();
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let encoded = enc.encode_row(&[Cell::Num(30.0), Cell::Cat(2)], ModeSelect::Argmax, &mut rng);
        assert_eq!(&encoded[3..8], &[0.0, 0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn far_value_clamps_to_one() {
        let (enc, _) = demo_encoding();
        let ColumnEncoder::Continuous { mixture } = &enc.encoders[0] else {
            panic!("expected continuous encoder");
        };
        let hi_mode = argmax(
            &mixture
                .means
                .iter()
                .map(|&m| m)
                .collect::<Vec<_>>(),
        );
        let v = mixture.means[hi_mode] + 8.0 * mixture.stds[hi_mode];
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let encoded = enc.encode_row(&[Cell::Num(v), Cell::Cat(0)], ModeSelect::Argmax, &mut rng);
        assert_eq!(encoded[0], 1.0);
    }

    #[test]
    fn decode_round_trips_with_argmax_mode() {
        let (enc, batch) = demo_encoding();
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        for i in 0..batch.n_rows() {
            let encoded = enc.encode_row(batch.row(i), ModeSelect::Argmax, &mut rng);
            let decoded = enc.decode_row(&encoded).unwrap();
            match (batch.row(i)[0], decoded[0]) {
                (Cell::Num(orig), Cell::Num(back)) => {
                    assert!((orig - back).abs() < 1e-6, "row {i}: {orig} vs {back}");
                }
                _ => panic!("expected continuous cell"),
            }
            assert_eq!(batch.row(i)[1], decoded[1]);
        }
    }

    #[test]
    fn all_zero_indicator_decodes_to_mode_zero() {
        let (enc, _) = demo_encoding();
        let vec = vec![0.0; enc.encoded_width()];
        let decoded = enc.decode_row(&vec).unwrap();
        let ColumnEncoder::Continuous { mixture } = &enc.encoders[0] else {
            panic!("expected continuous encoder");
        };
        assert_eq!(decoded[0], Cell::Num(mixture.means[0]));
        assert_eq!(decoded[1], Cell::Cat(0));
    }

    #[test]
    fn decode_rejects_wrong_width() {
        let (enc, _) = demo_encoding();
        assert!(enc.decode_row(&[0.0; 3]).is_err());
    }

    #[test]
    fn encoding_json_round_trip() {
        let (enc, batch) = demo_encoding();
        let json = enc.to_json().unwrap();
        let back = ColumnEncoding::from_json(&json).unwrap();
        assert_eq!(back.encoded_width(), enc.encoded_width());
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let a = enc.encode_row(batch.row(0), ModeSelect::Argmax, &mut rng);
        let b = back.encode_row(batch.row(0), ModeSelect::Argmax, &mut rng);
        assert_eq!(a, b);
    }

    #[test]
    fn gumbel_softmax_is_simplex() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        for _ in 0..100 {
            let logits = vec![0.3, -1.0, 2.0, 0.0];
            let p = gumbel_softmax(&logits, 0.7, &mut rng).unwrap();
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
        }
    }

    #[test]
    fn gumbel_softmax_rejects_bad_tau() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        assert!(gumbel_softmax(&[0.0, 1.0], 0.0, &mut rng).is_err());
        assert!(gumbel_softmax(&[0.0, 1.0], -1.0, &mut rng).is_err());
    }

    #[test]
    fn small_tau_concentrates_on_argmax() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        for _ in 0..50 {
            let p = gumbel_softmax(&[0.5, 0.1, -0.3], 1e-4, &mut rng).unwrap();
            let max = p.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!(max > 0.999, "max entry {max}");
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn gumbel_softmax_is_a_distribution(
                logits in proptest::collection::vec(-8.0f64..8.0, 2..12),
                tau in 0.05f64..2.0,
                seed in any::<u64>(),
            ) {
                let mut rng = ChaCha12Rng::seed_from_u64(seed);
                let p = gumbel_softmax(&logits, tau, &mut rng).unwrap();
                prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                prop_assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
            }

            #[test]
            fn responsibilities_always_normalize(
                v in -100.0f64..100.0,
                means in proptest::collection::vec(-20.0f64..20.0, 1..6),
            ) {
                let k = means.len();
                let gmm = GaussianMixture {
                    weights: vec![1.0 / k as f64; k],
                    means,
                    stds: vec![1.5; k],
                };
                let r = gmm.responsibilities(v);
                prop_assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn uniform_logits_give_uniform_argmax_frequencies() {
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let logits = vec![0.0; 10];
        let mut counts = vec![0usize; 10];
        for _ in 0..10_000 {
            let p = gumbel_softmax(&logits, 0.5, &mut rng).unwrap();
            counts[argmax(&p)] += 1;
        }
        let expected = vec![1000.0; 10];
        let stat = chi_square(&counts, &expected);
        assert!(stat < CHI2_CRIT_DF9, "chi-square {stat}");
    }

    #[test]
    fn skewed_logits_give_matching_argmax_frequencies() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let logits = vec![0.7f64.ln(), 0.3f64.ln()];
        let mut counts = vec![0usize; 2];
        for _ in 0..10_000 {
            let p = gumbel_softmax(&logits, 0.1, &mut rng).unwrap();
            counts[argmax(&p)] += 1;
        }
        let stat = chi_square(&counts, &[7000.0, 3000.0]);
        assert!(stat < CHI2_CRIT_DF1, "chi-square {stat}");
    }
}
