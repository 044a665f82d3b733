//! Central finite-difference verification of analytic gradients.
//!
//! The loss closures used here must be deterministic functions of the
//! parameters (noise fixed by an explicit seed), which all training losses
//! in this crate are.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::nn::PTensor;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub probes: usize,
    pub max_rel_err: f64,
    /// (tensor index, flat index, analytic, finite-difference) of the worst probe.
    pub worst: (usize, usize, f64, f64),
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err < tol
    }
}

fn rel_err(a: f64, fd: f64) -> f64 {
    let denom = a.abs().max(fd.abs());
    if denom < 1e-6 {
        // Both effectively zero: compare absolutely at fd-noise scale.
        if (a - fd).abs() < 1e-8 {
            0.0
        } else {
            (a - fd).abs() / denom.max(1e-12)
        }
    } else {
        (a - fd).abs() / denom
    }
}

/// Checks `n_probes` randomly chosen parameter scalars of `ctx` (0 = all of
/// them) against central finite differences with step `h_scale * max(1, |θ|)`.
///
/// `loss(ctx, true)` must compute the loss and accumulate exact gradients
/// into the tensors returned by `params(ctx)`; `loss(ctx, false)` must
/// compute the identical loss without touching gradients.
pub fn finite_diff_check<C>(
    ctx: &mut C,
    mut loss: impl FnMut(&mut C, bool) -> f64,
    mut params: impl FnMut(&mut C) -> Vec<&mut PTensor>,
    n_probes: usize,
    h_scale: f64,
    seed: u64,
) -> GradCheckReport {
    for p in params(ctx) {
        p.zero_grad();
    }
    loss(ctx, true);
    let analytic: Vec<Vec<f64>> = params(ctx)
        .iter()
        .map(|p| p.grad.iter().cloned().collect())
        .collect();
    let lens: Vec<usize> = analytic.iter().map(|g| g.len()).collect();
    let total: usize = lens.iter().sum();

    let probes: Vec<(usize, usize)> = if n_probes == 0 {
        let mut all = Vec::with_capacity(total);
        for (t, &len) in lens.iter().enumerate() {
            for i in 0..len {
                all.push((t, i));
            }
        }
        all
    } else {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        (0..n_probes)
            .map(|_| {
                let mut g = rng.random_range(0..total);
                let mut t = 0;
                while g >= lens[t] {
                    g -= lens[t];
                    t += 1;
                }
                (t, g)
            })
            .collect()
    };

    let mut report = GradCheckReport {
        probes: probes.len(),
        max_rel_err: 0.0,
        worst: (0, 0, 0.0, 0.0),
    };
    for (t, i) in probes {
        let theta = {
            let mut ps = params(ctx);
            ps[t].value.as_slice_mut().unwrap()[i]
        };
        let h = h_scale * theta.abs().max(1.0);

        set_param(ctx, &mut params, t, i, theta + h);
        let l_plus = loss(ctx, false);
        set_param(ctx, &mut params, t, i, theta - h);
        let l_minus = loss(ctx, false);
        set_param(ctx, &mut params, t, i, theta);

        let fd = (l_plus - l_minus) / (2.0 * h);
        let a = analytic[t][i];
        let err = rel_err(a, fd);
        if err > report.max_rel_err {
            report.max_rel_err = err;
            report.worst = (t, i, a, fd);
        }
    }
    report
}

fn set_param<C>(
    ctx: &mut C,
    params: &mut impl FnMut(&mut C) -> Vec<&mut PTensor>,
    t: usize,
    i: usize,
    value: f64,
) {
    let mut ps = params(ctx);
    ps[t].value.as_slice_mut().unwrap()[i] = value;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Dense;
    use ndarray::Array2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    struct Ctx {
        layer: Dense,
        x: Array2<f64>,
        target: Array2<f64>,
    }

    #[test]
    fn dense_mse_gradient_matches() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let x = Array2::from_shape_fn((5, 3), |_| rng.random_range(-1.0..1.0));
        let target = Array2::from_shape_fn((5, 2), |_| rng.random_range(-1.0..1.0));
        let mut ctx = Ctx {
            layer: Dense::new(3, 2, &mut rng),
            x,
            target,
        };
        let report = finite_diff_check(
            &mut ctx,
            |c, backward| {
                let y = c.layer.forward(&c.x);
                let diff = &y - &c.target;
                let loss = diff.iter().map(|d| d * d).sum::<f64>() / y.len() as f64;
                if backward {
                    let dy = diff.mapv(|d| 2.0 * d / (c.target.len() as f64));
                    c.layer.backward(&dy);
                }
                loss
            },
            |c| c.layer.params_mut(),
            0,
            1e-5,
            7,
        );
        assert!(report.passes(1e-6), "max rel err {}", report.max_rel_err);
    }
}
