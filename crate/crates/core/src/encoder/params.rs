use ndarray::{Array1, Array2, ArrayViewD, ArrayViewMutD};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::config::EncoderConfig;

const INIT_STD: f64 = 0.02;

#[derive(Clone, Debug, PartialEq)]
pub struct LayerNormParams {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
}

impl LayerNormParams {
    fn new(dim: usize) -> Self {
        LayerNormParams {
            gamma: Array1::ones(dim),
            beta: Array1::zeros(dim),
        }
    }
}

/// One post-norm transformer block. Weight matrices are stored `in × out`.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockParams {
    pub w_query: Array2<f64>,
    pub b_query: Array1<f64>,
    pub w_key: Array2<f64>,
    pub b_key: Array1<f64>,
    pub w_value: Array2<f64>,
    pub b_value: Array1<f64>,
    pub w_out: Array2<f64>,
    pub b_out: Array1<f64>,
    pub attn_norm: LayerNormParams,
    pub w_ff_in: Array2<f64>,
    pub b_ff_in: Array1<f64>,
    pub w_ff_out: Array2<f64>,
    pub b_ff_out: Array1<f64>,
    pub ff_norm: LayerNormParams,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParameters {
    pub token_embedding: Array2<f64>,
    pub position_embedding: Array2<f64>,
    pub segment_embedding: Array2<f64>,
    pub embedding_norm: LayerNormParams,
    pub layers: Vec<BlockParams>,
    /// `model_dim × 2` classification head.
    pub head_weight: Array2<f64>,
    pub head_bias: Array1<f64>,
}

// Calls `$f(name, view)` for every tensor in declaration order. The checkpoint
// format and the optimizer both depend on this order.
macro_rules! for_each_tensor {
    ($params:expr, $layers:ident, $view:ident, $f:expr) => {{
        let p = $params;
        let mut f = $f;
        f("token_embedding".to_string(), p.token_embedding.$view().into_dyn());
        f("position_embedding".to_string(), p.position_embedding.$view().into_dyn());
        f("segment_embedding".to_string(), p.segment_embedding.$view().into_dyn());
        f("embedding_norm.gamma".to_string(), p.embedding_norm.gamma.$view().into_dyn());
        f("embedding_norm.beta".to_string(), p.embedding_norm.beta.$view().into_dyn());
        for (i, l) in p.layers.$layers().enumerate() {
            f(format!("layer{i}.w_query"), l.w_query.$view().into_dyn());
            f(format!("layer{i}.b_query"), l.b_query.$view().into_dyn());
            f(format!("layer{i}.w_key"), l.w_key.$view().into_dyn());
            f(format!("layer{i}.b_key"), l.b_key.$view().into_dyn());
            f(format!("layer{i}.w_value"), l.w_value.$view().into_dyn());
            f(format!("layer{i}.b_value"), l.b_value.$view().into_dyn());
            f(format!("layer{i}.w_out"), l.w_out.$view().into_dyn());
            f(format!("layer{i}.b_out"), l.b_out.$view().into_dyn());
            f(format!("layer{i}.attn_norm.gamma"), l.attn_norm.gamma.$view().into_dyn());
            f(format!("layer{i}.attn_norm.beta"), l.attn_norm.beta.$view().into_dyn());
            f(format!("layer{i}.w_ff_in"), l.w_ff_in.$view().into_dyn());
            f(format!("layer{i}.b_ff_in"), l.b_ff_in.$view().into_dyn());
            f(format!("layer{i}.w_ff_out"), l.w_ff_out.$view().into_dyn());
            f(format!("layer{i}.b_ff_out"), l.b_ff_out.$view().into_dyn());
            f(format!("layer{i}.ff_norm.gamma"), l.ff_norm.gamma.$view().into_dyn());
            f(format!("layer{i}.ff_norm.beta"), l.ff_norm.beta.$view().into_dyn());
        }
        f("head_weight".to_string(), p.head_weight.$view().into_dyn());
        f("head_bias".to_string(), p.head_bias.$view().into_dyn());
    }};
}

impl ModelParameters {
    /// All-zero parameters shaped for `config`: gradient and moment buffers.
    pub fn zeros(config: &EncoderConfig) -> Self {
        let d = config.model_dim;
        let f = config.feedforward_dim;
        let block = || BlockParams {
            w_query: Array2::zeros((d, d)),
            b_query: Array1::zeros(d),
            w_key: Array2::zeros((d, d)),
            b_key: Array1::zeros(d),
            w_value: Array2::zeros((d, d)),
            b_value: Array1::zeros(d),
            w_out: Array2::zeros((d, d)),
            b_out: Array1::zeros(d),
            attn_norm: LayerNormParams {
                gamma: Array1::zeros(d),
                beta: Array1::zeros(d),
            },
            w_ff_in: Array2::zeros((d, f)),
            b_ff_in: Array1::zeros(f),
            w_ff_out: Array2::zeros((f, d)),
            b_ff_out: Array1::zeros(d),
            ff_norm: LayerNormParams {
                gamma: Array1::zeros(d),
                beta: Array1::zeros(d),
            },
        };
        ModelParameters {
            token_embedding: Array2::zeros((config.vocab_size, d)),
            position_embedding: Array2::zeros((config.max_seq_length, d)),
            segment_embedding: Array2::zeros((2, d)),
            embedding_norm: LayerNormParams {
                gamma: Array1::zeros(d),
                beta: Array1::zeros(d),
            },
            layers: (0..config.num_layers).map(|_| block()).collect(),
            head_weight: Array2::zeros((d, 2)),
            head_bias: Array1::zeros(2),
        }
    }

    /// Truncated-normal weights (σ = 0.02, cut at 2σ), zero biases, unit
    /// norm gains and an all-zero head, so the initial logits are `(0, 0)`.
    pub fn init<R: Rng + ?Sized>(config: &EncoderConfig, rng: &mut R) -> Self {
        Self::init_with_std(config, INIT_STD, rng)
    }

    pub(crate) fn init_with_std<R: Rng + ?Sized>(config: &EncoderConfig, std: f64, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, std).expect("positive std");
        let mut draw = |a: &mut Array2<f64>| {
            a.mapv_inplace(|_| loop {
                let x: f64 = normal.sample(rng);
                if x.abs() <= 2.0 * std {
                    break x;
                }
            })
        };
        let mut p = Self::zeros(config);
        draw(&mut p.token_embedding);
        draw(&mut p.position_embedding);
        draw(&mut p.segment_embedding);
        p.embedding_norm = LayerNormParams::new(config.model_dim);
        for l in &mut p.layers {
            draw(&mut l.w_query);
            draw(&mut l.w_key);
            draw(&mut l.w_value);
            draw(&mut l.w_out);
            draw(&mut l.w_ff_in);
            draw(&mut l.w_ff_out);
            l.attn_norm = LayerNormParams::new(config.model_dim);
            l.ff_norm = LayerNormParams::new(config.model_dim);
        }
        p
    }

    /// Every value drawn from a normal truncated at 2σ, including biases,
    /// norm parameters and the head. Gives non-degenerate gradients everywhere.
    pub fn random<R: Rng + ?Sized>(config: &EncoderConfig, std: f64, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, std).expect("positive std");
        let mut p = Self::zeros(config);
        for mut t in p.tensors_mut() {
            t.mapv_inplace(|_| loop {
                let x: f64 = normal.sample(rng);
                if x.abs() <= 2.0 * std {
                    break x;
                }
            });
        }
        p.embedding_norm.gamma += 1.0;
        for l in &mut p.layers {
            l.attn_norm.gamma += 1.0;
            l.ff_norm.gamma += 1.0;
        }
        p
    }

    pub fn tensors(&self) -> Vec<(String, ArrayViewD<'_, f64>)> {
        let mut out = Vec::new();
        for_each_tensor!(self, iter, view, |name, t| out.push((name, t)));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<ArrayViewMutD<'_, f64>> {
        let mut out = Vec::new();
        for_each_tensor!(self, iter_mut, view_mut, |_name: String, t| out.push(t));
        out
    }

    pub fn num_values(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|x| x.is_finite()))
    }

    pub fn fill(&mut self, value: f64) {
        for mut t in self.tensors_mut() {
            t.fill(value);
        }
    }

    /// `self += scale * other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &ModelParameters, scale: f64) {
        let src = other.tensors();
        for (mut dst, (_, s)) in self.tensors_mut().into_iter().zip(src) {
            dst.scaled_add(scale, &s);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for mut t in self.tensors_mut() {
            t.mapv_inplace(|x| x * factor);
        }
    }

    /// Largest absolute elementwise difference to `other`.
    pub fn max_abs_diff(&self, other: &ModelParameters) -> f64 {
        self.tensors()
            .iter()
            .zip(other.tensors().iter())
            .flat_map(|((_, a), (_, b))| a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }

    /// Value at a flat index over all tensors in declaration order.
    pub fn value_at(&self, flat: usize) -> f64 {
        let mut rest = flat;
        for (_, t) in self.tensors() {
            if rest < t.len() {
                return *t.iter().nth(rest).expect("in range");
            }
            rest -= t.len();
        }
        panic!("flat index {flat} out of range")
    }

    pub fn set_value_at(&mut self, flat: usize, value: f64) {
        let mut rest = flat;
        for mut t in self.tensors_mut() {
            if rest < t.len() {
                *t.iter_mut().nth(rest).expect("in range") = value;
                return;
            }
            rest -= t.len();
        }
        panic!("flat index {flat} out of range")
    }
}
