//! Analytic Jacobian-vector products for every kernel, validated against
//! central finite differences on random unit directions.
//!
//! The deviation reported per element is |analytic - numeric| normalized by
//! max(1, |analytic|, |numeric|), so it reads as an absolute error for small
//! values and a relative one for large values.

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::enhance::{attention_weights, EnhanceParams};
use crate::memory::{retrieval_weights, MemoryBank};
use crate::{EmbeddingMatrix, KernelError};

/// Which kernel to differentiate, with its fixed (non-differentiated)
/// parameters. Differentiation is always with respect to the L×d input.
#[derive(Debug, Clone)]
pub enum KernelKind<'a> {
    CoordFusion { params: &'a EnhanceParams, coords: &'a [f64] },
    SingleQuery { query: &'a Array1<f64> },
    MultiQuery { params: &'a EnhanceParams },
    MemoryFuse { bank: &'a MemoryBank },
}

impl KernelKind<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            KernelKind::CoordFusion { .. } => "coord_fusion",
            KernelKind::SingleQuery { .. } => "single_query_attention",
            KernelKind::MultiQuery { .. } => "multi_query_enhance",
            KernelKind::MemoryFuse { .. } => "memory_fuse",
        }
    }

    pub fn eval(&self, x: &Array2<f64>) -> Result<Array2<f64>, KernelError> {
        let tokens = EmbeddingMatrix::new(x.clone())?;
        let out = match self {
            KernelKind::CoordFusion { params, coords } => {
                crate::enhance::fuse_coordinates(&tokens, coords, params)?
            }
            KernelKind::SingleQuery { query } => {
                crate::enhance::single_query_attention(&tokens, query)?
            }
            KernelKind::MultiQuery { params } => {
                // gradient checking requires dropout off
                crate::enhance::multi_query_enhance(&tokens, params, false, None)?
            }
            KernelKind::MemoryFuse { bank } => crate::memory::memory_fuse(&tokens, bank)?,
        };
        Ok(out.into_array())
    }

    /// Analytic Jacobian-vector product J(x)·v.
    pub fn jvp(&self, x: &Array2<f64>, v: &Array2<f64>) -> Result<Array2<f64>, KernelError> {
        let tokens = EmbeddingMatrix::new(x.clone())?;
        let d = x.ncols();
        match self {
            KernelKind::CoordFusion { params, .. } => {
                // affine in the tokens: only the token block of the fusion
                // weights acts on the direction
                let w_tok = params.fusion.weight.slice(ndarray::s![.., ..d]).to_owned();
                Ok(v.dot(&w_tok.t()))
            }
            KernelKind::SingleQuery { query } => {
                let w = attention_weights(&tokens, query)?;
                let scale = 1.0 / (d as f64).sqrt();
                let dl: Array1<f64> = v.dot(*query) * scale;
                let dw = softmax_jvp(&w, &dl);
                let dout = dw.dot(x) + w.dot(v);
                Ok(dout.insert_axis(Axis(0)))
            }
            KernelKind::MultiQuery { params } => {
                let h = params.queries_res.nrows();
                let scale = 1.0 / (d as f64).sqrt();
                let mut dpool = Array1::<f64>::zeros(d);
                for q in params.queries_res.axis_iter(Axis(0)) {
                    let q = q.to_owned();
                    let w = attention_weights(&tokens, &q)?;
                    let dl: Array1<f64> = v.dot(&q) * scale;
                    let dw = softmax_jvp(&w, &dl);
                    dpool += &(dw.dot(x) + w.dot(v));
                }
                dpool /= h as f64;
                let mut dpre = v.dot(&params.global_weight);
                for mut row in dpre.axis_iter_mut(Axis(0)) {
                    row += &dpool;
                }
                match &params.layernorm {
                    None => Ok(dpre),
                    Some(ln) => {
                        // pre-normalization activations are needed for the
                        // layernorm linearization
                        let mut pre = x.dot(&params.global_weight);
                        let mut pool = Array1::<f64>::zeros(d);
                        for q in params.queries_res.axis_iter(Axis(0)) {
                            let q = q.to_owned();
                            let w = attention_weights(&tokens, &q)?;
                            pool += &w.dot(x);
                        }
                        pool /= h as f64;
                        for mut row in pre.axis_iter_mut(Axis(0)) {
                            row += &pool;
                        }
                        Ok(layernorm_jvp(&pre, &dpre, &ln.scale, ln.eps))
                    }
                }
            }
            KernelKind::MemoryFuse { bank } => {
                let w = retrieval_weights(&tokens, bank)?;
                let scale = if bank.scale_scores { 1.0 / (d as f64).sqrt() } else { 1.0 };
                let mut out = v * (1.0 - bank.lambda);
                for (r, vrow) in v.axis_iter(Axis(0)).enumerate() {
                    let ds: Array1<f64> = bank.slots.dot(&vrow.to_owned()) * scale;
                    let wrow = w.row(r).to_owned();
                    let dw = softmax_jvp(&wrow, &ds);
                    let dz = dw.dot(&bank.slots);
                    let mut orow = out.row_mut(r);
                    orow += &(dz * bank.lambda);
                }
                Ok(out)
            }
        }
    }
}

/// d softmax: (diag(w) - w wᵀ) · dl.
fn softmax_jvp(w: &Array1<f64>, dl: &Array1<f64>) -> Array1<f64> {
    let dot = w.dot(dl);
    w * &(dl - dot)
}

/// Row-wise layernorm linearization at `pre` in direction `dx`:
/// dy = (γ/σ)·(dx - mean(dx) - x̂·mean(x̂ ⊙ dx)).
fn layernorm_jvp(pre: &Array2<f64>, dx: &Array2<f64>, scale: &Array1<f64>, eps: f64) -> Array2<f64> {
    let mut out = Array2::zeros(pre.raw_dim());
    for (r, (xrow, drow)) in pre.axis_iter(Axis(0)).zip(dx.axis_iter(Axis(0))).enumerate() {
        let d = xrow.len() as f64;
        let mean = xrow.sum() / d;
        let var = xrow.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
        let sigma = (var + eps).sqrt();
        let xhat: Vec<f64> = xrow.iter().map(|v| (v - mean) / sigma).collect();
        let dmean = drow.sum() / d;
        let proj = xhat.iter().zip(drow.iter()).map(|(a, b)| a * b).sum::<f64>() / d;
        for (c, dv) in drow.iter().enumerate() {
            out[(r, c)] = scale[c] / sigma * (dv - dmean - xhat[c] * proj);
        }
    }
    out
}

/// Result of one finite-difference sweep.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub kernel: &'static str,
    pub directions: usize,
    pub epsilon: f64,
    pub max_deviation: f64,
}

/// Compare the analytic JVP against central differences
/// (f(x+εv) - f(x-εv)) / 2ε over seeded random unit directions and return
/// the worst normalized deviation.
pub fn finite_diff_check(
    kernel: &KernelKind<'_>,
    x: &Array2<f64>,
    epsilon: f64,
    directions: usize,
    seed: u64,
) -> Result<GradCheckReport, KernelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_deviation = 0.0f64;
    for _ in 0..directions {
        let mut v = Array2::from_shape_fn(x.raw_dim(), |_| rng.gen_range(-1.0..1.0));
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        v /= norm.max(1e-12);

        let analytic = kernel.jvp(x, &v)?;
        let plus = kernel.eval(&(x + &(&v * epsilon)))?;
        let minus = kernel.eval(&(x - &(&v * epsilon)))?;
        let numeric = (plus - minus) / (2.0 * epsilon);

        for (a, n) in analytic.iter().zip(numeric.iter()) {
            let dev = (a - n).abs() / 1.0f64.max(a.abs()).max(n.abs());
            max_deviation = max_deviation.max(dev);
        }
    }
    Ok(GradCheckReport { kernel: kernel.name(), directions, epsilon, max_deviation })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enhance::{Affine, LayerNormParams};
    use ndarray::array;

    fn seeded_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-1.5..1.5))
    }

    fn dense_params(d: usize, k_max: usize, h: usize, seed: u64) -> EnhanceParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut gen = |rows: usize, cols: usize| {
            Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-0.8..0.8))
        };
        let coord_w = gen(d, 2 * k_max);
        let fusion_w = gen(d, 2 * d);
        let queries = gen(h, d);
        let global = gen(d, d);
        EnhanceParams {
            coord_proj: Affine { weight: coord_w, bias: Array1::from_elem(d, 0.05) },
            fusion: Affine { weight: fusion_w, bias: Array1::from_elem(d, -0.02) },
            query_ref: Array1::from_elem(d, 0.3),
            queries_res: queries,
            global_weight: global,
            dropout_rate: 0.0,
            layernorm: Some(LayerNormParams::unit(d)),
        }
    }

    #[test]
    fn coord_fusion_is_exact_for_affine_maps() {
        let params = dense_params(3, 2, 1, 1);
        let coords = [0.25, 0.75, 0.1, 0.9];
        let kernel = KernelKind::CoordFusion { params: &params, coords: &coords };
        let x = seeded_matrix(4, 3, 2);
        let report = finite_diff_check(&kernel, &x, 1e-5, 8, 3).unwrap();
        assert!(report.max_deviation < 1e-9, "deviation {}", report.max_deviation);
    }

    #[test]
    fn single_query_gradient_matches_central_differences() {
        let q = array![0.4, -0.9, 0.2, 0.7];
        let kernel = KernelKind::SingleQuery { query: &q };
        let x = seeded_matrix(3, 4, 5);
        let report = finite_diff_check(&kernel, &x, 1e-5, 16, 7).unwrap();
        assert!(report.max_deviation < 1e-6, "deviation {}", report.max_deviation);
    }

    #[test]
    fn multi_query_gradient_matches_central_differences() {
        let params = dense_params(4, 2, 3, 11);
        let kernel = KernelKind::MultiQuery { params: &params };
        let x = seeded_matrix(5, 4, 13);
        let report = finite_diff_check(&kernel, &x, 1e-5, 16, 17).unwrap();
        assert!(report.max_deviation < 1e-6, "deviation {}", report.max_deviation);
    }

    #[test]
    fn multi_query_gradient_without_layernorm() {
        let mut params = dense_params(4, 2, 2, 19);
        params.layernorm = None;
        let kernel = KernelKind::MultiQuery { params: &params };
        let x = seeded_matrix(3, 4, 23);
        let report = finite_diff_check(&kernel, &x, 1e-5, 8, 29).unwrap();
        assert!(report.max_deviation < 1e-6, "deviation {}", report.max_deviation);
    }

    #[test]
    fn memory_fuse_gradient_matches_central_differences() {
        let bank = MemoryBank::new(seeded_matrix(4, 5, 31), 0.2).unwrap();
        let kernel = KernelKind::MemoryFuse { bank: &bank };
        let x = seeded_matrix(6, 5, 37);
        let report = finite_diff_check(&kernel, &x, 1e-5, 16, 41).unwrap();
        assert!(report.max_deviation < 1e-6, "deviation {}", report.max_deviation);
    }

    #[test]
    fn memory_fuse_gradient_with_scaled_scores() {
        let mut bank = MemoryBank::new(seeded_matrix(3, 4, 43), 0.35).unwrap();
        bank.scale_scores = true;
        let kernel = KernelKind::MemoryFuse { bank: &bank };
        let x = seeded_matrix(4, 4, 47);
        let report = finite_diff_check(&kernel, &x, 1e-5, 8, 53).unwrap();
        assert!(report.max_deviation < 1e-6, "deviation {}", report.max_deviation);
    }
}
