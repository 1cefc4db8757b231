//! Shared neural building blocks: linear layers, multi-head attention, and
//! the encoder layer used by every encoder in the model.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::NumericError;
use crate::numeric::tensor::{Scalar, Tensor};

type Result<T> = std::result::Result<T, NumericError>;

/// Forward-pass context: evaluation mode disables dropout; the RNG drives
/// dropout masks in training mode and is the only source of forward-pass
/// randomness.
pub struct Ctx {
    pub train: bool,
    pub rng: ChaCha8Rng,
}

impl Ctx {
    pub fn eval() -> Self {
        use rand::SeedableRng;
        Ctx { train: false, rng: ChaCha8Rng::seed_from_u64(0) }
    }

    pub fn train(seed: u64) -> Self {
        use rand::SeedableRng;
        Ctx { train: true, rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

/// Applies dropout only in training mode.
pub fn maybe_dropout<F: Scalar>(x: Tensor<F>, rate: f64, ctx: &mut Ctx) -> Result<Tensor<F>> {
    if ctx.train && rate > 0.0 {
        x.dropout(rate, &mut ctx.rng)
    } else {
        Ok(x)
    }
}

/// Glorot-style uniform initialization: U(-a, a) with a = sqrt(6/(fan_in+fan_out)).
pub fn glorot_uniform<F: Scalar>(fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Vec<F> {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..fan_in * fan_out).map(|_| F::from_f64(rng.gen_range(-a..a))).collect()
}

/// Fully connected layer `y = x W + b` with `W: [in, out]`.
pub struct LinearLayer<F: Scalar> {
    pub weight: Tensor<F>,
    pub bias: Tensor<F>,
    in_dim: usize,
    out_dim: usize,
}

impl<F: Scalar> LinearLayer<F> {
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let weight = Tensor::parameter(glorot_uniform(in_dim, out_dim, rng), &[in_dim, out_dim])
            .expect("init shape");
        let bias = Tensor::parameter(vec![F::zero(); out_dim], &[out_dim]).expect("init shape");
        LinearLayer { weight, bias, in_dim, out_dim }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    /// Accepts any shape ending in `in_dim`; the trailing axis maps to `out_dim`.
    pub fn forward(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        let shape = x.shape();
        let last = *shape.last().ok_or(NumericError::ShapeMismatch {
            op: "linear",
            details: "scalar input".into(),
        })?;
        if last != self.in_dim {
            return Err(NumericError::ShapeMismatch {
                op: "linear",
                details: format!("input last axis {} vs layer in_dim {}", last, self.in_dim),
            });
        }
        let rows = x.numel() / last;
        let flat = x.reshape(&[rows, last])?;
        let out = flat.matmul(&self.weight)?.add_broadcast(&self.bias)?;
        let mut out_shape = shape;
        *out_shape.last_mut().unwrap() = self.out_dim;
        out.reshape(&out_shape)
    }

    pub fn collect_params(&self, prefix: &str, out: &mut Vec<(String, Tensor<F>)>) {
        out.push((format!("{prefix}.weight"), self.weight.clone()));
        out.push((format!("{prefix}.bias"), self.bias.clone()));
    }

    pub fn param_count(&self) -> usize {
        self.in_dim * self.out_dim + self.out_dim
    }
}

/// Two-layer perceptron `w2(relu(w1 x + b1)) + b2`, the unification map and
/// the inter-level projection shape used throughout.
pub struct Mlp<F: Scalar> {
    pub hidden: LinearLayer<F>,
    pub output: LinearLayer<F>,
}

impl<F: Scalar> Mlp<F> {
    pub fn new(in_dim: usize, hidden_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        Mlp {
            hidden: LinearLayer::new(in_dim, hidden_dim, rng),
            output: LinearLayer::new(hidden_dim, out_dim, rng),
        }
    }

    pub fn forward(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        self.output.forward(&self.hidden.forward(x)?.relu())
    }

    pub fn collect_params(&self, prefix: &str, out: &mut Vec<(String, Tensor<F>)>) {
        self.hidden.collect_params(&format!("{prefix}.hidden"), out);
        self.output.collect_params(&format!("{prefix}.output"), out);
    }

    pub fn param_count(&self) -> usize {
        self.hidden.param_count() + self.output.param_count()
    }
}

/// Where the attention residual lands.
///
/// `ValueLiteral` adds the projected value back onto the attention mix per
/// head, which is the written form of the update rule this model follows.
/// `InputConvention` is the usual transformer residual on the layer input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualMode {
    ValueLiteral,
    InputConvention,
}

/// Layer-normalization placement inside encoder layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormMode {
    /// Normalize after each sublayer (default).
    Post,
    /// No normalization, matching the bare update equations.
    None,
}

/// Learnable affine layer normalization over the feature axis.
pub struct LayerNorm<F: Scalar> {
    pub gain: Tensor<F>,
    pub bias: Tensor<F>,
    pub eps: F,
}

impl<F: Scalar> LayerNorm<F> {
    pub fn new(dim: usize) -> Self {
        LayerNorm {
            gain: Tensor::parameter(vec![F::one(); dim], &[dim]).expect("init shape"),
            bias: Tensor::parameter(vec![F::zero(); dim], &[dim]).expect("init shape"),
            eps: F::from_f64(1e-5),
        }
    }

    pub fn forward(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        x.layer_norm_last(self.eps)?.mul_broadcast(&self.gain)?.add_broadcast(&self.bias)
    }

    pub fn collect_params(&self, prefix: &str, out: &mut Vec<(String, Tensor<F>)>) {
        out.push((format!("{prefix}.gain"), self.gain.clone()));
        out.push((format!("{prefix}.bias"), self.bias.clone()));
    }

    pub fn param_count(&self) -> usize {
        2 * self.gain.numel()
    }
}

/// Multi-head self/cross attention with per-head q/k/v projections realized
/// as slices of shared `[D, D]` maps plus an output projection. Scores are
/// scaled by `1/sqrt(D)` (the model dimension).
pub struct MultiHeadAttention<F: Scalar> {
    pub heads: usize,
    pub query: LinearLayer<F>,
    pub key: LinearLayer<F>,
    pub value: LinearLayer<F>,
    pub output: LinearLayer<F>,
    pub residual: ResidualMode,
    dim: usize,
}

impl<F: Scalar> MultiHeadAttention<F> {
    pub fn new(dim: usize, heads: usize, residual: ResidualMode, rng: &mut ChaCha8Rng) -> Self {
        assert!(heads > 0 && dim % heads == 0, "dim {dim} not divisible by heads {heads}");
        MultiHeadAttention {
            heads,
            query: LinearLayer::new(dim, dim, rng),
            key: LinearLayer::new(dim, dim, rng),
            value: LinearLayer::new(dim, dim, rng),
            output: LinearLayer::new(dim, dim, rng),
            residual,
            dim,
        }
    }

    /// `x_q: [S_q, D]`, `x_kv: [S_k, D]`; `key_mask` marks which key/value
    /// positions may receive attention weight. With `ValueLiteral` residual
    /// the sequence lengths must agree (self-attention form).
    pub fn forward(
        &self,
        x_q: &Tensor<F>,
        x_kv: &Tensor<F>,
        key_mask: Option<&[bool]>,
    ) -> Result<Tensor<F>> {
        let (sq_shape, sk_shape) = (x_q.shape(), x_kv.shape());
        if sq_shape.len() != 2 || sk_shape.len() != 2 {
            return Err(NumericError::ShapeMismatch {
                op: "attention",
                details: format!("expected 2-D sequences, got {sq_shape:?} and {sk_shape:?}"),
            });
        }
        if sq_shape[1] != self.dim || sk_shape[1] != self.dim {
            return Err(NumericError::ShapeMismatch {
                op: "attention",
                details: format!("feature dim {} expected, got {:?}/{:?}", self.dim, sq_shape, sk_shape),
            });
        }
        if sq_shape[0] == 0 || sk_shape[0] == 0 {
            return Err(NumericError::ShapeMismatch {
                op: "attention",
                details: "empty sequence".into(),
            });
        }
        if self.residual == ResidualMode::ValueLiteral && sq_shape[0] != sk_shape[0] {
            return Err(NumericError::ShapeMismatch {
                op: "attention",
                details: format!(
                    "value residual needs matching lengths, got {} and {}",
                    sq_shape[0], sk_shape[0]
                ),
            });
        }

        let q = self.query.forward(x_q)?;
        let k = self.key.forward(x_kv)?;
        let v = self.value.forward(x_kv)?;
        let head_dim = self.dim / self.heads;
        let scale = F::from_f64(1.0 / (self.dim as f64).sqrt());

        let mut head_outputs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = q.narrow(1, h * head_dim, head_dim)?;
            let kh = k.narrow(1, h * head_dim, head_dim)?;
            let vh = v.narrow(1, h * head_dim, head_dim)?;
            let scores = qh.matmul(&kh.permute(&[1, 0])?)?.scale(scale);
            let probs = scores.softmax_last(key_mask)?;
            let mixed = probs.matmul(&vh)?;
            let out_h = match self.residual {
                ResidualMode::ValueLiteral => mixed.add(&vh)?,
                ResidualMode::InputConvention => mixed,
            };
            head_outputs.push(out_h);
        }
        let merged = Tensor::concat(&head_outputs, 1)?;
        let projected = self.output.forward(&merged)?;
        match self.residual {
            ResidualMode::ValueLiteral => Ok(projected),
            ResidualMode::InputConvention => projected.add(x_q),
        }
    }

    pub fn collect_params(&self, prefix: &str, out: &mut Vec<(String, Tensor<F>)>) {
        self.query.collect_params(&format!("{prefix}.query"), out);
        self.key.collect_params(&format!("{prefix}.key"), out);
        self.value.collect_params(&format!("{prefix}.value"), out);
        self.output.collect_params(&format!("{prefix}.output"), out);
    }

    pub fn param_count(&self) -> usize {
        self.query.param_count()
            + self.key.param_count()
            + self.value.param_count()
            + self.output.param_count()
    }
}

/// One encoder layer: attention, dropout, optional post-norm, then a
/// two-layer feed-forward block with its own residual and optional norm.
pub struct EncoderLayer<F: Scalar> {
    pub attention: MultiHeadAttention<F>,
    pub ffn_in: LinearLayer<F>,
    pub ffn_out: LinearLayer<F>,
    pub norm_attn: Option<LayerNorm<F>>,
    pub norm_ffn: Option<LayerNorm<F>>,
    pub dropout: f64,
}

impl<F: Scalar> EncoderLayer<F> {
    pub fn new(
        dim: usize,
        heads: usize,
        ffn_hidden: usize,
        dropout: f64,
        residual: ResidualMode,
        norm: NormMode,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let (norm_attn, norm_ffn) = match norm {
            NormMode::Post => (Some(LayerNorm::new(dim)), Some(LayerNorm::new(dim))),
            NormMode::None => (None, None),
        };
        EncoderLayer {
            attention: MultiHeadAttention::new(dim, heads, residual, rng),
            ffn_in: LinearLayer::new(dim, ffn_hidden, rng),
            ffn_out: LinearLayer::new(ffn_hidden, dim, rng),
            norm_attn,
            norm_ffn,
            dropout,
        }
    }

    /// Self-attention over `x: [S, D]`. Preserves sequence length and
    /// feature dimension.
    pub fn forward(
        &self,
        x: &Tensor<F>,
        key_mask: Option<&[bool]>,
        ctx: &mut Ctx,
    ) -> Result<Tensor<F>> {
        let attended = self.attention.forward(x, x, key_mask)?;
        let attended = maybe_dropout(attended, self.dropout, ctx)?;
        let h = match &self.norm_attn {
            Some(norm) => norm.forward(&attended)?,
            None => attended,
        };
        let f = self.ffn_out.forward(&self.ffn_in.forward(&h)?.relu())?;
        let f = maybe_dropout(f, self.dropout, ctx)?;
        let summed = h.add(&f)?;
        match &self.norm_ffn {
            Some(norm) => norm.forward(&summed),
            None => Ok(summed),
        }
    }

    pub fn collect_params(&self, prefix: &str, out: &mut Vec<(String, Tensor<F>)>) {
        self.attention.collect_params(&format!("{prefix}.attention"), out);
        self.ffn_in.collect_params(&format!("{prefix}.ffn_in"), out);
        self.ffn_out.collect_params(&format!("{prefix}.ffn_out"), out);
        if let Some(norm) = &self.norm_attn {
            norm.collect_params(&format!("{prefix}.norm_attn"), out);
        }
        if let Some(norm) = &self.norm_ffn {
            norm.collect_params(&format!("{prefix}.norm_ffn"), out);
        }
    }

    pub fn param_count(&self) -> usize {
        self.attention.param_count()
            + self.ffn_in.param_count()
            + self.ffn_out.param_count()
            + self.norm_attn.as_ref().map_or(0, LayerNorm::param_count)
            + self.norm_ffn.as_ref().map_or(0, LayerNorm::param_count)
    }
}

/// Zeroes the rows of `x: [S, D]` whose mask entry is false. Used after
/// every masked encoder pass so padded slots stay exactly zero.
pub fn zero_masked_rows<F: Scalar>(x: &Tensor<F>, mask: &[bool]) -> Result<Tensor<F>> {
    let shape = x.shape();
    if shape.first() != Some(&mask.len()) {
        return Err(NumericError::ShapeMismatch {
            op: "zero_masked_rows",
            details: format!("mask length {} vs shape {:?}", mask.len(), shape),
        });
    }
    if mask.iter().all(|&m| m) {
        return Ok(x.clone());
    }
    let inner: usize = shape[1..].iter().product();
    let mut keep = vec![F::zero(); mask.len() * inner];
    for (r, &m) in mask.iter().enumerate() {
        if m {
            keep[r * inner..(r + 1) * inner].fill(F::one());
        }
    }
    x.mul(&Tensor::from_vec(keep, &shape)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(42)
    }

    fn identity_attention(dim: usize) -> MultiHeadAttention<f64> {
        let mut mha = MultiHeadAttention::new(dim, 1, ResidualMode::ValueLiteral, &mut rng());
        let eye: Vec<f64> =
            (0..dim * dim).map(|i| if i / dim == i % dim { 1.0 } else { 0.0 }).collect();
        for layer in [&mha.query, &mha.key, &mha.value, &mha.output] {
            layer.weight.set_data(&eye);
            layer.bias.set_data(&vec![0.0; dim]);
        }
        mha.residual = ResidualMode::ValueLiteral;
        mha
    }

    #[test]
    fn single_token_doubles_value() {
        // Softmax over one key is 1, so the output is v + v = 2v with
        // identity projections.
        let mha = identity_attention(2);
        let x = Tensor::from_vec(vec![0.3, -1.7], &[1, 2]).unwrap();
        let y = mha.forward(&x, &x, None).unwrap();
        assert_eq!(y.to_vec(), vec![0.6, -3.4]);
    }

    #[test]
    fn orthonormal_pair_closed_form() {
        // Hand derivation for identity weights, tokens e1, e2, scale 1/sqrt(2):
        //   scores = I / sqrt(2); per row softmax gives p = w/(w+1), w = exp(1/sqrt(2))
        //   row0 = p*e1 + (1-p)*e2 + e1, row1 mirrored.
        let mha = identity_attention(2);
        let x = Tensor::from_vec(vec![1.0, 0.0, 0.0, 1.0], &[2, 2]).unwrap();
        let y = mha.forward(&x, &x, None).unwrap().to_vec();
        let w = (1.0f64 / 2.0f64.sqrt()).exp();
        let p = w / (w + 1.0);
        let expected = [1.0 + p, 1.0 - p, 1.0 - p, 1.0 + p];
        for (got, want) in y.iter().zip(expected) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn permutation_equivariance_without_positions() {
        let mut r = rng();
        let mha = MultiHeadAttention::<f64>::new(4, 2, ResidualMode::ValueLiteral, &mut r);
        let data: Vec<f64> = (0..12).map(|i| (i as f64 * 0.37).sin()).collect();
        let x = Tensor::from_vec(data.clone(), &[3, 4]).unwrap();
        let y = mha.forward(&x, &x, None).unwrap().to_vec();
        // Permute rows 0<->2.
        let perm = [2usize, 1, 0];
        let permuted: Vec<f64> =
            perm.iter().flat_map(|&p| data[p * 4..(p + 1) * 4].to_vec()).collect();
        let xp = Tensor::from_vec(permuted, &[3, 4]).unwrap();
        let yp = mha.forward(&xp, &xp, None).unwrap().to_vec();
        for (r_out, &r_in) in perm.iter().enumerate() {
            for c in 0..4 {
                let diff = (yp[r_out * 4 + c] - y[r_in * 4 + c]).abs();
                assert!(diff < 1e-6, "row {r_out} col {c} differs by {diff}");
            }
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let mha = MultiHeadAttention::<f64>::new(4, 2, ResidualMode::ValueLiteral, &mut rng());
        let x = Tensor::from_vec(vec![0.0; 6], &[2, 3]).unwrap();
        assert!(mha.forward(&x, &x, None).is_err());
    }

    #[test]
    fn encoder_preserves_shape() {
        let mut r = rng();
        let layer =
            EncoderLayer::<f64>::new(8, 2, 16, 0.0, ResidualMode::ValueLiteral, NormMode::Post, &mut r);
        let x = Tensor::from_vec((0..40).map(|i| i as f64 * 0.01).collect(), &[5, 8]).unwrap();
        let y = layer.forward(&x, None, &mut Ctx::eval()).unwrap();
        assert_eq!(y.shape(), vec![5, 8]);
    }

    #[test]
    fn ffn_hidden_dimension_honored() {
        let layer =
            EncoderLayer::<f64>::new(8, 2, 1024, 0.3, ResidualMode::ValueLiteral, NormMode::Post, &mut rng());
        assert_eq!(layer.ffn_in.out_dim(), 1024);
        assert_eq!(layer.ffn_out.in_dim(), 1024);
    }

    #[test]
    fn encoder_layer_gradients_match_finite_differences() {
        use crate::numeric::gradcheck::{check_parameters, EPSILON};
        let mut r = rng();
        let layer =
            EncoderLayer::<f64>::new(4, 2, 8, 0.3, ResidualMode::ValueLiteral, NormMode::Post, &mut r);
        let input: Vec<f64> = (0..12).map(|i| ((i * 7 + 3) as f64 * 0.13).sin()).collect();
        let mut params = Vec::new();
        layer.collect_params("encoder", &mut params);
        let reports = check_parameters(&params, EPSILON, || {
            let x = Tensor::from_vec(input.clone(), &[3, 4]).unwrap();
            layer.forward(&x, None, &mut Ctx::eval()).unwrap().sum_all()
        });
        for report in reports {
            assert!(report.passed(), "{}: max rel error {}", report.name, report.max_rel_error);
        }
    }

    #[test]
    fn dropout_identity_in_eval() {
        let x = Tensor::<f64>::from_vec(vec![1.0, 2.0, 3.0], &[3]).unwrap();
        let y = maybe_dropout(x.clone(), 0.5, &mut Ctx::eval()).unwrap();
        assert_eq!(y.to_vec(), x.to_vec());
    }

    #[test]
    fn zero_masked_rows_zeroes() {
        let x = Tensor::<f64>::from_vec(vec![1.0; 6], &[3, 2]).unwrap();
        let y = zero_masked_rows(&x, &[true, false, true]).unwrap();
        assert_eq!(y.to_vec(), vec![1.0, 1.0, 0.0, 0.0, 1.0, 1.0]);
    }
}
