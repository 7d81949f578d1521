//! Reverse-mode differentiation over dense `f64` matrices.
//!
//! A [`Tape`] records every operation of a forward pass; a single reverse
//! sweep then produces gradients for all leaves that asked for them.
//! [`value_and_grad`] wraps this for computations over a named
//! [`ParamSet`], and [`grad_check`] compares the result against central
//! finite differences.

mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, grad_check_report, GradCheckReport};
pub use params::{Bindings, ParamSet};
pub use tape::{segment_softmax, Tape, Var};
pub use tensor::Tensor;

use crate::error::{Error, Result};

/// Evaluates a scalar computation and its gradient with respect to every
/// tensor in `params`.
///
/// The closure receives a fresh tape with each parameter already bound as
/// a differentiable leaf.
pub fn value_and_grad<F>(params: &ParamSet, computation: F) -> Result<(f64, ParamSet)>
where
    F: FnOnce(&mut Tape, &Bindings) -> Result<Var>,
{
    let mut tape = Tape::new();
    let bindings = params.bind(&mut tape, true);
    let out = computation(&mut tape, &bindings)?;
    let value = scalar_output(&tape, out)?;
    let grads = tape.backward(out)?;
    let mut result = ParamSet::new();
    for (name, var) in bindings.iter() {
        let g = match &grads[var.index()] {
            Some(g) => g.clone(),
            None => {
                let t = tape.value(var);
                Tensor::zeros(t.rows(), t.cols())
            }
        };
        result.insert(name.to_string(), g);
    }
    Ok((value, result))
}

/// Forward-only evaluation of a scalar computation.
pub fn value<F>(params: &ParamSet, computation: F) -> Result<f64>
where
    F: FnOnce(&mut Tape, &Bindings) -> Result<Var>,
{
    let mut tape = Tape::new();
    let bindings = params.bind(&mut tape, false);
    let out = computation(&mut tape, &bindings)?;
    scalar_output(&tape, out)
}

fn scalar_output(tape: &Tape, out: Var) -> Result<f64> {
    let t = tape.value(out);
    if t.shape() != [1, 1] {
        return Err(Error::NonScalar {
            rows: t.rows(),
            cols: t.cols(),
        });
    }
    if let Some(op) = tape.first_non_finite() {
        return Err(Error::NonFinite {
            op,
            phase: "forward",
        });
    }
    Ok(t.item())
}
