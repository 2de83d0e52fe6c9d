//! Central-difference verification of backpropagated model gradients.

use rand::Rng;
use serde::Serialize;

use crate::numkit::Tensor;
use crate::rng::{stream_rng, Stream};

use super::{Mode, Model, ModelError, ModelSpec, Variant};

#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    pub variant: Variant,
    pub input_size: usize,
    /// One entry per recurrent layer.
    pub hidden_sizes: Vec<usize>,
    pub seq_len: usize,
    pub batch: usize,
    pub epsilon: f64,
    pub tolerance: f64,
    pub seed: u64,
}

impl GradCheckConfig {
    /// Input 3, hidden 4 (3 for the hybrid's GRU), T = 5, batch 2.
    pub fn standard(variant: Variant) -> Self {
        Self {
            variant,
            input_size: 3,
            hidden_sizes: match variant {
                Variant::Hybrid => vec![4, 3],
                _ => vec![4],
            },
            seq_len: 5,
            batch: 2,
            epsilon: 1e-5,
            tolerance: 1e-4,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TensorCheck {
    pub name: String,
    pub elements: usize,
    pub max_rel_error: f64,
    pub passed: bool,
}

/// `|a − n| / max(|a|, |n|, 1e-3)`; the floor keeps near-zero gradients from
/// turning rounding noise into large ratios.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3)
}

/// Compares backprop gradients to central differences for every element of
/// every parameter tensor. `corrupt` perturbs the analytic gradient of the
/// named tensor, which must then fail.
pub fn gradient_check(
    config: &GradCheckConfig,
    corrupt: Option<&str>,
) -> Result<Vec<TensorCheck>, ModelError> {
    let spec = ModelSpec {
        variant: config.variant,
        input_size: config.input_size,
        hidden_sizes: config.hidden_sizes.clone(),
        num_classes: 2,
        dropout_rate: 0.0,
    };
    let mut rng = stream_rng(config.seed, Stream::GradCheck);
    let mut model = Model::init(spec, config.seed)?;
    // move every parameter off its structured initial value (zero biases)
    for (_, t) in model.params_mut().named_mut() {
        for v in t.values_mut() {
            *v = rng.random_range(-0.6..0.6);
        }
    }
    let len = config.batch * config.seq_len * config.input_size;
    let batch = Tensor::new(
        vec![config.batch, config.seq_len, config.input_size],
        (0..len).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )?;
    let labels: Vec<usize> = (0..config.batch).map(|i| i % 2).collect();

    model.params_mut().zero_grad();
    model.loss_and_backward(&batch, &labels, Mode::Eval)?;
    let analytic: Vec<(String, Vec<f64>)> = model
        .params()
        .named()
        .into_iter()
        .map(|(name, t)| {
            let mut g = t.grad().map_or(vec![0.0; t.len()], <[f64]>::to_vec);
            if corrupt == Some(name.as_str()) {
                g[0] += 1.0;
            }
            (name, g)
        })
        .collect();
    if let Some(name) = corrupt {
        if !analytic.iter().any(|(n, _)| n == name) {
            return Err(ModelError::Config(format!("no parameter tensor named {name}")));
        }
    }

    let mut report = Vec::with_capacity(analytic.len());
    for (k, (name, grad)) in analytic.iter().enumerate() {
        let mut worst: f64 = 0.0;
        for idx in 0..grad.len() {
            let probe = |delta: f64| -> Result<f64, ModelError> {
                let mut shifted = model.clone();
                let (_, t) = shifted.params_mut().named_mut().swap_remove(k);
                t.values_mut()[idx] += delta;
                shifted.loss(&batch, &labels)
            };
            let numeric = (probe(config.epsilon)? - probe(-config.epsilon)?) / (2.0 * config.epsilon);
            worst = worst.max(relative_error(grad[idx], numeric));
        }
        report.push(TensorCheck {
            name: name.clone(),
            elements: grad.len(),
            max_rel_error: worst,
            passed: worst < config.tolerance,
        });
    }
    Ok(report)
}
