use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::adapters::{Adapter, Gradients};
use crate::error::{param_err, shape_err, Result};
use crate::linalg::dot;
use crate::scalar::Real;

pub const DEFAULT_FD_STEP: f64 = 1e-6;
pub const GRADCHECK_THRESHOLD: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockCheck {
    pub name: String,
    pub coordinates: usize,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub blocks: Vec<BlockCheck>,
    pub step: f64,
    pub threshold: f64,
    pub max_rel_error: f64,
    pub pass: bool,
}

/// Largest coordinate gap between two gradient blocks, relative to the larger
/// block's largest magnitude.
pub fn block_relative_error(analytic: &[f64], fd: &[f64]) -> f64 {
    let scale = analytic.iter().chain(fd).fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    analytic.iter().zip(fd).fold(0.0f64, |m, (a, f)| m.max((a - f).abs())) / scale
}

/// Compares `analytic` against central differences of `<upstream, forward(h)>`
/// over every trainable coordinate.
pub fn check_gradients<T: Real, A: Adapter<T> + Clone>(
    layer: &A,
    h: &[T],
    upstream: &[T],
    step: f64,
    analytic: &Gradients<T>,
) -> Result<GradCheckReport> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(param_err!("finite-difference step must be positive, got {step}"));
    }
    let names = layer.param_names();
    let sizes: Vec<usize> = layer.params().iter().map(|p| p.len()).collect();
    if analytic.blocks.len() != sizes.len()
        || analytic.blocks.iter().zip(&sizes).any(|(b, &n)| b.len() != n)
    {
        return Err(shape_err!("analytic gradient blocks do not match the trainable parameters"));
    }
    // The frozen `W h` term has no parameter dependence, so differencing the
    // adapter contribution alone keeps roundoff small.
    let objective = |l: &A| -> Result<f64> { Ok(dot(upstream, &l.delta(h)?).as_f64()) };
    let mut probe = layer.clone();
    let step_t = T::lit(step);
    let mut blocks = Vec::with_capacity(sizes.len());
    for (b, (name, &n)) in names.into_iter().zip(&sizes).enumerate() {
        let mut fds = Vec::with_capacity(n);
        for c in 0..n {
            let orig = probe.params()[b][c];
            probe.params_mut()[b][c] = orig + step_t;
            let plus = objective(&probe)?;
            probe.params_mut()[b][c] = orig - step_t;
            let minus = objective(&probe)?;
            probe.params_mut()[b][c] = orig;
            fds.push((plus - minus) / (2.0 * step));
        }
        let analytic_block: Vec<f64> = analytic.blocks[b].iter().map(|v| v.as_f64()).collect();
        blocks.push(BlockCheck { name, coordinates: n, max_rel_error: block_relative_error(&analytic_block, &fds) });
    }
    let max_rel_error = blocks.iter().map(|b| b.max_rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        blocks,
        step,
        threshold: GRADCHECK_THRESHOLD,
        max_rel_error,
        pass: max_rel_error < GRADCHECK_THRESHOLD,
    })
}

/// Analytic backward pass checked against central differences.
pub fn finite_diff_check<T: Real, A: Adapter<T> + Clone>(
    layer: &A,
    h: &[T],
    upstream: &[T],
    step: f64,
) -> Result<GradCheckReport> {
    let analytic = layer.backward(h, upstream)?;
    check_gradients(layer, h, upstream, step, &analytic)
}

/// Overwrites every trainable coordinate with `N(0, std²)` draws.
pub fn randomize_trainable<T: Real, A: Adapter<T>, R: Rng + ?Sized>(layer: &mut A, std: f64, rng: &mut R) {
    for block in layer.params_mut() {
        for v in block.iter_mut() {
            *v = T::lit(std * rng.sample::<f64, _>(StandardNormal));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapters::{build_idlora, build_lora, build_moelora, AnyAdapter, IdLoraLayer};
    use crate::cluster::BasisSet;
    use crate::adapters::AdapterConfig;
    use crate::linalg::Matrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut layer = build_idlora(Matrix::<f64>::random_normal(8, 8, &mut rng), 2, 2, 2, 0).unwrap();
        randomize_trainable(&mut layer, 1.0, &mut rng);
        let g = layer.backward(&random_vec(8, &mut rng), &[0.0; 8]).unwrap();
        assert!(g.blocks.iter().flatten().chain(&g.grad_h).all(|&v| v == 0.0));
    }

    #[test]
    fn random_idlora_layers_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for seed in 0..10 {
            let mut layer = build_idlora(Matrix::<f64>::random_normal(16, 16, &mut rng), 2, 4, 2, seed).unwrap();
            randomize_trainable(&mut layer, 1.0, &mut rng);
            let (h, g) = (random_vec(16, &mut rng), random_vec(16, &mut rng));
            let rep = finite_diff_check(&layer, &h, &g, DEFAULT_FD_STEP).unwrap();
            assert!(rep.pass && rep.max_rel_error < 1e-6, "{rep:?}");
        }
    }

    #[test]
    fn lora_and_moelora_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = Matrix::<f64>::random_normal(6, 5, &mut rng);
        let mut layers: Vec<AnyAdapter<f64>> = vec![
            build_lora(w.clone(), 3, 6.0, 0).unwrap().into(),
            build_moelora(w, 2, 3, 4.0, 0).unwrap().into(),
        ];
        for layer in &mut layers {
            randomize_trainable(layer, 1.0, &mut rng);
            let (h, g) = (random_vec(5, &mut rng), random_vec(6, &mut rng));
            let rep = finite_diff_check(layer, &h, &g, DEFAULT_FD_STEP).unwrap();
            assert!(rep.pass, "{rep:?}");
        }
    }

    #[test]
    fn linear_probe_matches_closely() {
        let w = Matrix::<f64>::from_fn(3, 3, |i, j| (i as f64) - (j as f64) * 0.5 + 1.0);
        let basis = BasisSet::extract(&w, vec![vec![1]]).unwrap();
        let b = Matrix::from_rows(&[[0.5], [-1.0], [2.0]]).unwrap();
        let mut layer = IdLoraLayer::from_parts(w, basis, b, vec![0.7], AdapterConfig::idlora(3, 3, 1, 1, 1, 1.0)).unwrap();
        layer.detach_router = true;
        let rep = finite_diff_check(&layer, &[1.0, -2.0, 0.5], &[0.3, 1.0, -0.4], DEFAULT_FD_STEP).unwrap();
        assert_eq!(rep.blocks.len(), 1);
        assert!(rep.max_rel_error < 1e-8, "{rep:?}");
    }

    #[test]
    fn corrupted_router_gradient_fails() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut layer = build_idlora(Matrix::<f64>::random_normal(16, 16, &mut rng), 2, 4, 2, 0).unwrap();
        randomize_trainable(&mut layer, 1.0, &mut rng);
        let (h, g) = (random_vec(16, &mut rng), random_vec(16, &mut rng));
        let mut analytic = layer.backward(&h, &g).unwrap();
        analytic.blocks[1].iter_mut().for_each(|v| *v *= 2.0);
        let rep = check_gradients(&layer, &h, &g, DEFAULT_FD_STEP, &analytic).unwrap();
        assert!(!rep.pass);
        assert!(rep.blocks[0].max_rel_error < 1e-6);
    }

    #[test]
    fn rejects_bad_step() {
        let layer = build_lora(Matrix::<f64>::identity(2), 1, 1.0, 0).unwrap();
        assert!(finite_diff_check(&layer, &[1.0, 1.0], &[1.0, 1.0], 0.0).is_err());
    }

    #[test]
    fn block_error_is_scaled_by_block_magnitude() {
        // Gap 1e-10 on a 1e-6 coordinate inside a block whose largest entry is 2.
        let e = block_relative_error(&[2.0, 1e-6], &[2.0, 1e-6 + 1e-10]);
        assert!((e - 5e-11).abs() < 1e-20);
        assert_eq!(block_relative_error(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert_eq!(block_relative_error(&[1.0], &[-1.0]), 2.0);
    }
}
