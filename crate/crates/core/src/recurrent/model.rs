use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::numkit::{softmax_rows, Tape, Tensor, Var};
use crate::rng::{stream_rng, Stream};

use super::cells::{bilstm_layer, gru_layer};
use super::params::{gru_shapes, lstm_shapes, BiLstmParams, DenseParams, ModelParams};
use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Bilstm,
    Gru,
    Hybrid,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Bilstm, Variant::Gru, Variant::Hybrid];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Bilstm => "bilstm",
            Variant::Gru => "gru",
            Variant::Hybrid => "hybrid",
        }
    }

    /// Number of recurrent layers, i.e. expected `hidden_sizes` length.
    pub fn depth(self) -> usize {
        match self {
            Variant::Hybrid => 2,
            _ => 1,
        }
    }

    pub fn default_hidden(self) -> Vec<usize> {
        vec![DEFAULT_HIDDEN; self.depth()]
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Variant {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "bilstm" | "bi-lstm" => Ok(Variant::Bilstm),
            "gru" => Ok(Variant::Gru),
            "hybrid" => Ok(Variant::Hybrid),
            other => Err(ModelError::Config(format!("unknown variant {other:?}"))),
        }
    }
}

pub const DEFAULT_HIDDEN: usize = 16;
pub const DEFAULT_DROPOUT: f64 = 0.2;

/// Architecture description.
///
/// `hidden_sizes` has one entry per recurrent layer: `[bilstm]`, `[gru]` or
/// `[bilstm, gru]` for the hybrid stack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub variant: Variant,
    pub input_size: usize,
    pub hidden_sizes: Vec<usize>,
    pub num_classes: usize,
    pub dropout_rate: f64,
}

impl ModelSpec {
    pub fn new(variant: Variant, input_size: usize) -> Self {
        Self {
            variant,
            input_size,
            hidden_sizes: variant.default_hidden(),
            num_classes: 2,
            dropout_rate: DEFAULT_DROPOUT,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |m: String| Err(ModelError::Config(m));
        if self.input_size == 0 {
            return fail("input_size must be at least 1".into());
        }
        if self.hidden_sizes.len() != self.variant.depth() {
            return fail(format!(
                "{} expects {} hidden size(s), got {:?}",
                self.variant,
                self.variant.depth(),
                self.hidden_sizes
            ));
        }
        if self.hidden_sizes.contains(&0) {
            return fail("hidden sizes must be at least 1".into());
        }
        if self.num_classes < 2 {
            return fail(format!("num_classes must be at least 2, got {}", self.num_classes));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return fail(format!("dropout_rate must lie in [0, 1), got {}", self.dropout_rate));
        }
        Ok(())
    }

    /// Width of the representation fed to the dense head.
    pub fn head_input(&self) -> usize {
        match self.variant {
            Variant::Bilstm => 2 * self.hidden_sizes[0],
            Variant::Gru => self.hidden_sizes[0],
            Variant::Hybrid => self.hidden_sizes[1],
        }
    }

    /// Expected shape of every parameter tensor.
    pub fn shapes(&self) -> ModelParams<Vec<usize>> {
        let h0 = self.hidden_sizes[0];
        let bilstm = matches!(self.variant, Variant::Bilstm | Variant::Hybrid).then(|| BiLstmParams {
            fwd: lstm_shapes(self.input_size, h0),
            bwd: lstm_shapes(self.input_size, h0),
        });
        let gru = match self.variant {
            Variant::Gru => Some(gru_shapes(self.input_size, h0)),
            Variant::Hybrid => Some(gru_shapes(2 * h0, self.hidden_sizes[1])),
            Variant::Bilstm => None,
        };
        ModelParams {
            bilstm,
            gru,
            head: DenseParams {
                w: vec![self.num_classes, self.head_input()],
                b: vec![self.num_classes],
            },
        }
    }
}

/// How a forward pass treats dropout.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut ChaCha8Rng),
}

/// A model specification together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    spec: ModelSpec,
    params: ModelParams,
}

impl Model {
    /// Seeded initialization: weights uniform in `±1/√fan_in`, biases zero,
    /// LSTM forget-gate biases `+1`.
    pub fn init(spec: ModelSpec, seed: u64) -> Result<Self, ModelError> {
        spec.validate()?;
        let mut rng = stream_rng(seed, Stream::Init);
        let params = spec.shapes().map_named(&mut |name, shape| {
            let field = name.rsplit('.').next().unwrap_or(name);
            if field.starts_with("b_") || field == "b" {
                let fill = if field == "b_f" { 1.0 } else { 0.0 };
                Tensor::filled(shape, fill)
            } else {
                let bound = 1.0 / (shape[1] as f64).sqrt();
                let len = shape.iter().product();
                let values = (0..len).map(|_| rng.random_range(-bound..bound)).collect();
                Tensor::new(shape.clone(), values).expect("finite init")
            }
        });
        Ok(Self { spec, params })
    }

    /// Pairs a spec with existing parameters, checking every shape.
    pub fn from_parts(spec: ModelSpec, params: ModelParams) -> Result<Self, ModelError> {
        spec.validate()?;
        let expected = spec.shapes();
        let want = expected.named();
        let got = params.named();
        if want.len() != got.len() {
            return Err(ModelError::Config(format!(
                "{} variant expects {} parameter tensors, got {}",
                spec.variant,
                want.len(),
                got.len()
            )));
        }
        for ((wn, ws), (gn, gt)) in want.iter().zip(&got) {
            if wn != gn || ws.as_slice() != gt.shape() {
                return Err(ModelError::Config(format!(
                    "parameter {gn} has shape {:?}, expected {wn} with shape {ws:?}",
                    gt.shape()
                )));
            }
        }
        Ok(Self { spec, params })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ModelParams {
        &mut self.params
    }

    pub fn into_params(self) -> ModelParams {
        self.params
    }

    /// Records every parameter as a tape leaf.
    pub fn bind(&self, tape: &mut Tape) -> ModelParams<Var> {
        self.params.map_named(&mut |_, t| tape.leaf(t))
    }

    /// Logits (`batch × classes`) for a `batch × T × input` sequence.
    pub fn forward(
        &self,
        tape: &mut Tape,
        vars: &ModelParams<Var>,
        seq: Var,
        mut mode: Mode<'_>,
    ) -> Result<Var, ModelError> {
        let shape = tape.shape(seq).to_vec();
        if shape.len() != 3 || shape[2] != self.spec.input_size {
            return Err(ModelError::Config(format!(
                "model expects batch × T × {} input, got {shape:?}",
                self.spec.input_size
            )));
        }
        let features = match self.spec.variant {
            Variant::Bilstm => {
                let b = vars.bilstm.as_ref().ok_or_else(missing_block)?;
                let out = bilstm_layer(tape, &b.fwd, &b.bwd, seq)?;
                tape.time_step(out, shape[1] - 1)?
            }
            Variant::Gru => {
                let g = vars.gru.as_ref().ok_or_else(missing_block)?;
                *gru_layer(tape, g, seq)?.last().expect("non-empty sequence")
            }
            Variant::Hybrid => {
                let b = vars.bilstm.as_ref().ok_or_else(missing_block)?;
                let g = vars.gru.as_ref().ok_or_else(missing_block)?;
                let out = bilstm_layer(tape, &b.fwd, &b.bwd, seq)?;
                let out = self.dropout(tape, out, &mut mode)?;
                *gru_layer(tape, g, out)?.last().expect("non-empty sequence")
            }
        };
        let features = self.dropout(tape, features, &mut mode)?;
        let logits = tape.matmul_t(features, vars.head.w)?;
        Ok(tape.add_row(logits, vars.head.b)?)
    }

    fn dropout(&self, tape: &mut Tape, x: Var, mode: &mut Mode<'_>) -> Result<Var, ModelError> {
        let rate = self.spec.dropout_rate;
        let Mode::Train(rng) = mode else {
            return Ok(x);
        };
        if rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - rate);
        let shape = tape.shape(x).to_vec();
        let len = shape.iter().product();
        let mask: Vec<f64> = (0..len)
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let mask = tape.leaf(&Tensor::new(shape, mask).expect("finite mask"));
        Ok(tape.mul(x, mask)?)
    }

    /// Inference logits over frozen parameters.
    pub fn logits(&self, batch: &Tensor) -> Result<Tensor, ModelError> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let seq = tape.leaf(batch);
        let out = self.forward(&mut tape, &vars, seq, Mode::Eval)?;
        Ok(tape.value(out).clone())
    }

    pub fn predict_proba(&self, batch: &Tensor) -> Result<Tensor, ModelError> {
        Ok(softmax_rows(&self.logits(batch)?))
    }

    /// Mean cross-entropy on a batch, with gradients added into each
    /// parameter's gradient buffer. Returns `(loss, logits)`.
    pub fn loss_and_backward(
        &mut self,
        batch: &Tensor,
        labels: &[usize],
        mode: Mode<'_>,
    ) -> Result<(f64, Tensor), ModelError> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let seq = tape.leaf(batch);
        let logits = self.forward(&mut tape, &vars, seq, mode)?;
        let loss = tape.softmax_cross_entropy(logits, labels)?;
        let value = tape.value(loss).values()[0];
        tape.backward(loss)?;
        for ((_, var), (_, tensor)) in vars.named().into_iter().zip(self.params.named_mut()) {
            if let Some(g) = tape.grad(*var) {
                tensor.accumulate_grad(g);
            }
        }
        Ok((value, tape.value(logits).clone()))
    }

    /// Mean cross-entropy without touching gradients.
    pub fn loss(&self, batch: &Tensor, labels: &[usize]) -> Result<f64, ModelError> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let seq = tape.leaf(batch);
        let logits = self.forward(&mut tape, &vars, seq, Mode::Eval)?;
        let loss = tape.softmax_cross_entropy(logits, labels)?;
        Ok(tape.value(loss).values()[0])
    }
}

fn missing_block() -> ModelError {
    ModelError::Config("parameters do not match the model variant".into())
}
