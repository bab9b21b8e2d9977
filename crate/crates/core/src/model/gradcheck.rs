use crate::error::{Error, Result};
use crate::model::{backward, forward_loss, ModelConfig, ModelParams};
use crate::numerics::{finite_diff_grad, max_relative_error, DEFAULT_FD_EPS};
use crate::tokenizer::TokenId;

/// Result of comparing one parameter matrix against finite differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupCheck {
    pub name: String,
    pub entries: usize,
    pub max_relative_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckOptions {
    pub eps: f64,
    /// Adds a constant to the analytic gradient of the named tensor so that a
    /// broken backward pass can be simulated end to end.
    pub inject_fault: Option<String>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            eps: DEFAULT_FD_EPS,
            inject_fault: None,
        }
    }
}

/// Compares the analytic gradient of `forward_loss(src, tgt)` with central
/// differences, one entry per parameter matrix in canonical order.
pub fn check_gradients(
    params: &ModelParams,
    config: &ModelConfig,
    src: &[TokenId],
    tgt: &[TokenId],
    eps: f64,
) -> Result<Vec<GroupCheck>> {
    let options = GradCheckOptions {
        eps,
        inject_fault: None,
    };
    check_gradients_with(params, config, src, tgt, &options)
}

pub fn check_gradients_with(
    params: &ModelParams,
    config: &ModelConfig,
    src: &[TokenId],
    tgt: &[TokenId],
    options: &GradCheckOptions,
) -> Result<Vec<GroupCheck>> {
    let (_, cache) = forward_loss(src, tgt, params, config)?;
    let mut grads = backward(&cache, params)?;
    if let Some(name) = &options.inject_fault {
        let (_, m) = grads
            .tensors_mut()
            .into_iter()
            .find(|(n, _)| n == name)
            .ok_or_else(|| Error::Config(format!("inject_fault: no parameter named {name:?}")))?;
        for v in m.as_mut_slice() {
            *v += 1.0;
        }
    }

    let analytic = grads.tensors();
    let mut work = params.clone();
    let mut out = Vec::with_capacity(analytic.len());
    for (idx, (name, tensor)) in params.tensors().into_iter().enumerate() {
        let numeric = finite_diff_grad(
            |x| {
                work.tensors_mut()[idx].1.clone_from(x);
                forward_loss(src, tgt, &work, config).map_or(f64::NAN, |(loss, _)| loss)
            },
            tensor,
            options.eps,
        )
        .map_err(|e| Error::Numeric(format!("{name}: {e}")))?;
        work.tensors_mut()[idx].1.clone_from(tensor);
        out.push(GroupCheck {
            entries: tensor.len(),
            max_relative_error: max_relative_error(analytic[idx].1, &numeric)?,
            name,
        });
    }
    Ok(out)
}
