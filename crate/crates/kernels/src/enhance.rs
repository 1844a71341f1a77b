//! Task-conditioned enhancement of token embeddings.
//!
//! Interactive prompts fuse the user's normalized coordinates into every
//! token embedding; referring prompts pool tokens through a single learnable
//! query; reasoning prompts combine multi-query attention with a global
//! linear stream, then dropout and row-wise layer normalization.

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use segforge_core::Task;

use crate::{ensure_finite, softmax_inplace, EmbeddingMatrix, KernelError};

/// Dense affine map: `y = W x + b` with `W` of shape (out, in).
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Affine {
    pub fn apply(&self, x: &Array1<f64>) -> Array1<f64> {
        self.weight.dot(x) + &self.bias
    }

    /// Identity block `[I | 0]` with zero bias: passes the first `dim`
    /// inputs through and ignores the rest.
    pub fn identity_block(dim: usize, total_in: usize) -> Self {
        let mut weight = Array2::zeros((dim, total_in));
        for i in 0..dim {
            weight[(i, i)] = 1.0;
        }
        Self { weight, bias: Array1::zeros(dim) }
    }

    pub fn zeros(out: usize, input: usize) -> Self {
        Self { weight: Array2::zeros((out, input)), bias: Array1::zeros(out) }
    }
}

/// Row-wise layer normalization parameters (scale/shift over the feature
/// axis). `eps` keeps zero-variance rows finite.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerNormParams {
    pub scale: Array1<f64>,
    pub shift: Array1<f64>,
    pub eps: f64,
}

impl LayerNormParams {
    pub fn unit(dim: usize) -> Self {
        Self { scale: Array1::ones(dim), shift: Array1::zeros(dim), eps: 1e-12 }
    }

    pub fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut out = x.clone();
        for mut row in out.axis_iter_mut(Axis(0)) {
            let d = row.len() as f64;
            let mean = row.sum() / d;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
            let sigma = (var + self.eps).sqrt();
            for (i, v) in row.iter_mut().enumerate() {
                *v = (*v - mean) / sigma * self.scale[i] + self.shift[i];
            }
        }
        out
    }
}

/// Parameters for the three enhancement pathways.
#[derive(Debug, Clone, PartialEq)]
pub struct EnhanceParams {
    /// Projects the zero-padded coordinate vector (length 2·k_max) into the
    /// embedding space.
    pub coord_proj: Affine,
    /// Fuses `[token ‖ projected coords]` (length 2d) back to d.
    pub fusion: Affine,
    /// Single learnable query for referring prompts.
    pub query_ref: Array1<f64>,
    /// h×d query bank for reasoning prompts.
    pub queries_res: Array2<f64>,
    /// d×d global aggregation weights.
    pub global_weight: Array2<f64>,
    pub dropout_rate: f64,
    /// `None` disables normalization (identity).
    pub layernorm: Option<LayerNormParams>,
}

impl EnhanceParams {
    /// Passthrough configuration: coordinate fusion reduces to the identity
    /// on the token embeddings. Handy as a test baseline.
    pub fn passthrough(dim: usize, k_max: usize, queries: usize) -> Self {
        Self {
            coord_proj: Affine::zeros(dim, 2 * k_max),
            fusion: Affine::identity_block(dim, 2 * dim),
            query_ref: Array1::zeros(dim),
            queries_res: Array2::zeros((queries, dim)),
            global_weight: Array2::zeros((dim, dim)),
            dropout_rate: 0.0,
            layernorm: None,
        }
    }
}

/// Attention weights of a single query over the token rows:
/// `softmax(q · Eᵀ / √d)`.
pub fn attention_weights(tokens: &EmbeddingMatrix, query: &Array1<f64>) -> Result<Array1<f64>, KernelError> {
    if query.len() != tokens.dim() {
        return Err(KernelError::ShapeMismatch(format!(
            "query length {} vs embedding dim {}",
            query.len(),
            tokens.dim()
        )));
    }
    if query.iter().any(|v| !v.is_finite()) {
        return Err(KernelError::NonFinite("query"));
    }
    let scale = 1.0 / (tokens.dim() as f64).sqrt();
    let mut logits: Array1<f64> = tokens.array().dot(query) * scale;
    softmax_inplace(logits.as_slice_mut().expect("contiguous"));
    Ok(logits)
}

/// Interactive pathway: project the (zero-padded) coordinate vector, then
/// fuse it with every token embedding. Output keeps the L×d shape.
pub fn fuse_coordinates(
    tokens: &EmbeddingMatrix,
    coords: &[f64],
    params: &EnhanceParams,
) -> Result<EmbeddingMatrix, KernelError> {
    let d = tokens.dim();
    let cap = params.coord_proj.weight.ncols();
    if coords.len() > cap {
        return Err(KernelError::TooManyCoords { got: coords.len(), max: cap });
    }
    if coords.iter().any(|v| !v.is_finite()) {
        return Err(KernelError::NonFinite("coordinates"));
    }
    if params.fusion.weight.dim() != (d, 2 * d) {
        return Err(KernelError::ShapeMismatch(format!(
            "fusion weight {:?}, expected ({d}, {})",
            params.fusion.weight.dim(),
            2 * d
        )));
    }
    let mut padded = Array1::zeros(cap);
    for (i, &c) in coords.iter().enumerate() {
        padded[i] = c;
    }
    let projected = params.coord_proj.apply(&padded);
    if projected.len() != d {
        return Err(KernelError::ShapeMismatch(format!(
            "projection output {} vs embedding dim {d}",
            projected.len()
        )));
    }
    let mut out = Array2::zeros((tokens.tokens(), d));
    let mut concat = Array1::zeros(2 * d);
    for (i, row) in tokens.array().axis_iter(Axis(0)).enumerate() {
        for j in 0..d {
            concat[j] = row[j];
            concat[d + j] = projected[j];
        }
        out.row_mut(i).assign(&params.fusion.apply(&concat));
    }
    ensure_finite(&out, "fused embeddings")?;
    EmbeddingMatrix::new(out)
}

/// Referring pathway: attention-pool the tokens with one query. The result
/// is the attended d-vector, emitted as a 1×d matrix.
pub fn single_query_attention(
    tokens: &EmbeddingMatrix,
    query: &Array1<f64>,
) -> Result<EmbeddingMatrix, KernelError> {
    let weights = attention_weights(tokens, query)?;
    let pooled = weights.dot(tokens.array());
    let out = pooled.insert_axis(Axis(0));
    ensure_finite(&out, "attended embedding")?;
    EmbeddingMatrix::new(out)
}

/// Seeded inverted-dropout mask: entries are 0 with probability `rate`,
/// otherwise 1/(1-rate).
pub fn dropout_mask(
    rows: usize,
    cols: usize,
    rate: f64,
    seed: u64,
) -> Result<Array2<f64>, KernelError> {
    if !(0.0..1.0).contains(&rate) {
        return Err(KernelError::BadDropoutRate(rate));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keep = 1.0 / (1.0 - rate);
    Ok(Array2::from_shape_fn((rows, cols), |_| {
        if rng.gen_range(0.0..1.0) < rate {
            0.0
        } else {
            keep
        }
    }))
}

/// Reasoning pathway: average of per-query attention pools (each broadcast
/// back over the L rows) plus a global linear stream, then dropout and
/// layer normalization. With `training = false` (or no mask) dropout is the
/// identity.
pub fn multi_query_enhance(
    tokens: &EmbeddingMatrix,
    params: &EnhanceParams,
    training: bool,
    dropout: Option<&Array2<f64>>,
) -> Result<EmbeddingMatrix, KernelError> {
    let (l, d) = (tokens.tokens(), tokens.dim());
    let h = params.queries_res.nrows();
    if h == 0 {
        return Err(KernelError::NoQueries);
    }
    if params.queries_res.ncols() != d {
        return Err(KernelError::ShapeMismatch(format!(
            "reasoning queries have dim {}, embeddings {d}",
            params.queries_res.ncols()
        )));
    }
    if params.global_weight.dim() != (d, d) {
        return Err(KernelError::ShapeMismatch(format!(
            "global weight {:?}, expected ({d}, {d})",
            params.global_weight.dim()
        )));
    }

    let mut pooled_sum = Array1::<f64>::zeros(d);
    for q in params.queries_res.axis_iter(Axis(0)) {
        let w = attention_weights(tokens, &q.to_owned())?;
        pooled_sum += &w.dot(tokens.array());
    }
    pooled_sum /= h as f64;

    let mut out = tokens.array().dot(&params.global_weight);
    for mut row in out.axis_iter_mut(Axis(0)) {
        row += &pooled_sum;
    }

    if training {
        if let Some(mask) = dropout {
            if mask.dim() != (l, d) {
                return Err(KernelError::ShapeMismatch(format!(
                    "dropout mask {:?}, expected ({l}, {d})",
                    mask.dim()
                )));
            }
            out *= mask;
        }
    }
    if let Some(ln) = &params.layernorm {
        out = ln.apply(&out);
    }
    ensure_finite(&out, "reasoning embeddings")?;
    EmbeddingMatrix::new(out)
}

/// The per-task enhanced variants produced for one instruction batch.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TaskVariants {
    pub interactive: Option<EmbeddingMatrix>,
    pub referring: Option<EmbeddingMatrix>,
    pub reasoning: Option<EmbeddingMatrix>,
}

/// Dispatch: hand the language model exactly the variant matching the task.
pub fn select_task_embedding<'a>(
    task: Task,
    variants: &'a TaskVariants,
) -> Result<&'a EmbeddingMatrix, KernelError> {
    match task {
        Task::Interactive => variants.interactive.as_ref().ok_or(KernelError::MissingVariant("interactive")),
        Task::Referring => variants.referring.as_ref().ok_or(KernelError::MissingVariant("referring")),
        Task::Reasoning => variants.reasoning.as_ref().ok_or(KernelError::MissingVariant("reasoning")),
    }
}
