use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Gradients, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Sgd,
    #[default]
    Adam,
}

/// Optimizer hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub algorithm: Algorithm,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Global L2 norm limit applied before each update.
    pub clip_norm: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            algorithm: Algorithm::Adam,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            clip_norm: 5.0,
        }
    }
}

impl OptimizerConfig {
    pub fn sgd(learning_rate: f64) -> Self {
        OptimizerConfig {
            algorithm: Algorithm::Sgd,
            learning_rate,
            ..Default::default()
        }
    }

    pub fn adam(learning_rate: f64) -> Self {
        OptimizerConfig {
            learning_rate,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            problems.push(format!("learning_rate must be finite and >= 0, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.beta1) {
            problems.push(format!("beta1 must be in [0, 1), got {}", self.beta1));
        }
        if !(0.0..1.0).contains(&self.beta2) {
            problems.push(format!("beta2 must be in [0, 1), got {}", self.beta2));
        }
        if !(self.epsilon > 0.0) {
            problems.push(format!("epsilon must be > 0, got {}", self.epsilon));
        }
        if !(self.clip_norm > 0.0) {
            problems.push(format!("clip_norm must be > 0, got {}", self.clip_norm));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}

/// Optimizer hyperparameters plus running state.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: OptimizerConfig,
    pub step: u64,
    /// First and second moments, present for adam only.
    pub moments: Option<(ModelParams, ModelParams)>,
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig, params: &ModelParams) -> Self {
        let moments = match config.algorithm {
            Algorithm::Adam => Some((params.zeros_like(), params.zeros_like())),
            Algorithm::Sgd => None,
        };
        OptimizerState {
            config,
            step: 0,
            moments,
        }
    }
}

fn check_mirror(a: &ModelParams, b: &ModelParams, what: &str) -> Result<()> {
    let (ta, tb) = (a.tensors(), b.tensors());
    if ta.len() != tb.len() {
        return Err(Error::Shape {
            op: "apply_update",
            left: format!("{} parameter matrices", ta.len()),
            right: format!("{} {what} matrices", tb.len()),
        });
    }
    for ((na, ma), (_, mb)) in ta.iter().zip(&tb) {
        if ma.shape() != mb.shape() {
            return Err(Error::Shape {
                op: "apply_update",
                left: format!("{na} {}x{}", ma.rows(), ma.cols()),
                right: format!("{what} {}x{}", mb.rows(), mb.cols()),
            });
        }
    }
    Ok(())
}

/// Global L2 norm of all gradients.
pub fn global_norm(grads: &Gradients) -> Result<f64> {
    let mut total = 0.0;
    for (name, m) in grads.tensors() {
        if !m.is_finite() {
            return Err(Error::Numeric(format!("non-finite gradient in {name}")));
        }
        total += m.squared_norm();
    }
    Ok(total.sqrt())
}

/// Rescales `grads` to norm `max_norm` when their global norm exceeds it.
/// Returns the norm before clipping.
pub fn clip_gradients(grads: &mut Gradients, max_norm: f64) -> Result<f64> {
    if !(max_norm > 0.0) {
        return Err(Error::Input(format!("max_norm must be > 0, got {max_norm}")));
    }
    let norm = global_norm(grads)?;
    if norm > max_norm {
        let s = max_norm / norm;
        for (_, m) in grads.tensors_mut() {
            m.scale_in_place(s);
        }
    }
    Ok(norm)
}

/// One optimizer step. Adam uses bias-corrected moments:
/// `m ← β1 m + (1−β1) g`, `v ← β2 v + (1−β2) g²`,
/// `P ← P − lr · m̂ / (√v̂ + ε)` with `m̂ = m/(1−β1^t)`, `v̂ = v/(1−β2^t)`.
pub fn apply_update(params: &mut ModelParams, grads: &Gradients, opt: &mut OptimizerState) -> Result<()> {
    check_mirror(params, grads, "gradient")?;
    if let Some((m, v)) = &opt.moments {
        check_mirror(params, m, "first moment")?;
        check_mirror(params, v, "second moment")?;
    }
    opt.step += 1;
    let c = &opt.config;
    let lr = c.learning_rate;
    let g_all = grads.tensors();
    match &mut opt.moments {
        None => {
            for ((_, p), (_, g)) in params.tensors_mut().into_iter().zip(&g_all) {
                for (pv, gv) in p.as_mut_slice().iter_mut().zip(g.as_slice()) {
                    *pv -= lr * gv;
                }
            }
        }
        Some((m_all, v_all)) => {
            let t = opt.step as i32;
            let bc1 = 1.0 - c.beta1.powi(t);
            let bc2 = 1.0 - c.beta2.powi(t);
            let params = params.tensors_mut();
            let (ms, vs) = (m_all.tensors_mut(), v_all.tensors_mut());
            for (((p, g), m), v) in params.into_iter().zip(&g_all).zip(ms).zip(vs) {
                let p = p.1.as_mut_slice();
                let (m, v) = (m.1.as_mut_slice(), v.1.as_mut_slice());
                for (k, &gv) in g.1.as_slice().iter().enumerate() {
                    m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * gv;
                    v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * gv * gv;
                    let m_hat = m[k] / bc1;
                    let v_hat = v[k] / bc2;
                    p[k] -= lr * m_hat / (v_hat.sqrt() + c.epsilon);
                }
            }
        }
    }
    Ok(())
}
