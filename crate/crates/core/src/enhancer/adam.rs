use super::config::AdamConfig;
use super::params::EnhancerParams;
use crate::error::{Error, Result};

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: EnhancerParams,
    pub v: EnhancerParams,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &EnhancerParams) -> Self {
        AdamState {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update. A non-finite gradient aborts before
/// anything is modified.
pub fn adam_step(
    params: &mut EnhancerParams,
    grads: &EnhancerParams,
    state: &mut AdamState,
    hyper: &AdamConfig,
) -> Result<()> {
    let same = |a: &EnhancerParams| {
        a.tensors.len() == params.tensors.len()
            && a.tensors
                .iter()
                .zip(&params.tensors)
                .all(|(x, y)| x.shape == y.shape)
    };
    if !same(grads) || !same(&state.m) || !same(&state.v) {
        return Err(Error::shape(
            "gradient and state shapes equal to params",
            "different shapes",
        ));
    }
    if let Some(t) = grads
        .tensors
        .iter()
        .find(|t| t.data.iter().any(|v| !v.is_finite()))
    {
        return Err(Error::NonFiniteGradient(t.name.clone()));
    }
    state.step += 1;
    let c1 = 1.0 - hyper.beta1.powi(state.step as i32);
    let c2 = 1.0 - hyper.beta2.powi(state.step as i32);
    for (((p, g), m), v) in params
        .tensors
        .iter_mut()
        .zip(&grads.tensors)
        .zip(&mut state.m.tensors)
        .zip(&mut state.v.tensors)
    {
        for (((p, g), m), v) in p
            .data
            .iter_mut()
            .zip(&g.data)
            .zip(&mut m.data)
            .zip(&mut v.data)
        {
            *m = hyper.beta1 * *m + (1.0 - hyper.beta1) * g;
            *v = hyper.beta2 * *v + (1.0 - hyper.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= hyper.step_size * m_hat / (v_hat.sqrt() + hyper.epsilon);
        }
    }
    Ok(())
}
