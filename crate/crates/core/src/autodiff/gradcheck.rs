use super::params::{Bindings, ParamSet};
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

/// Outcome of comparing analytic gradients with central differences.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// max over entries of |analytic - numeric| / max(1, |analytic|, |numeric|)
    pub max_relative_error: f64,
    /// parameter entry (name, flat index) where the maximum occurred
    pub worst: Option<(String, usize)>,
    /// smallest |input| reaching a LeakyReLU at the unperturbed point
    pub min_kink_distance: f64,
    pub entries_checked: usize,
}

/// Maximum relative error between the analytic gradient and the central
/// difference `(f(p + eps) - f(p - eps)) / 2 eps`, over every parameter entry.
pub fn grad_check<F>(computation: F, params: &ParamSet, epsilon: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &Bindings) -> Result<Var>,
{
    grad_check_report(computation, params, epsilon).map(|r| r.max_relative_error)
}

pub fn grad_check_report<F>(computation: F, params: &ParamSet, epsilon: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &Bindings) -> Result<Var>,
{
    let mut tape = Tape::new();
    let bindings = params.bind(&mut tape, true);
    let out = computation(&mut tape, &bindings)?;
    check_finite(&tape, out)?;
    let min_kink_distance = tape.min_kink_distance();
    let grads = tape.backward(out)?;

    let eval = |p: &ParamSet| -> Result<f64> {
        let mut t = Tape::new();
        let b = p.bind(&mut t, false);
        let o = computation(&mut t, &b)?;
        check_finite(&t, o)?;
        Ok(t.value(o).item())
    };

    let mut worst = None;
    let mut max_err = 0.0f64;
    let mut checked = 0;
    let mut probe = params.clone();
    for (name, var) in bindings.iter() {
        let analytic = grads[var.index()].clone();
        let n = params.get(name).map_or(0, |t| t.len());
        for i in 0..n {
            let original = params.get(name).unwrap().data()[i];
            probe.get_mut(name).unwrap().data_mut()[i] = original + epsilon;
            let plus = eval(&probe)?;
            probe.get_mut(name).unwrap().data_mut()[i] = original - epsilon;
            let minus = eval(&probe)?;
            probe.get_mut(name).unwrap().data_mut()[i] = original;

            let numeric = (plus - minus) / (2.0 * epsilon);
            let a = analytic.as_ref().map_or(0.0, |g| g.data()[i]);
            let err = (a - numeric).abs() / 1.0f64.max(a.abs()).max(numeric.abs());
            checked += 1;
            if err > max_err || worst.is_none() {
                if err > max_err {
                    max_err = err;
                }
                worst = Some((name.to_string(), i));
            }
        }
    }
    Ok(GradCheckReport {
        max_relative_error: max_err,
        worst,
        min_kink_distance,
        entries_checked: checked,
    })
}

fn check_finite(tape: &Tape, out: Var) -> Result<()> {
    let t = tape.value(out);
    if t.shape() != [1, 1] {
        return Err(Error::NonScalar {
            rows: t.rows(),
            cols: t.cols(),
        });
    }
    match tape.first_non_finite() {
        Some(op) => Err(Error::NonFinite {
            op,
            phase: "forward",
        }),
        None => Ok(()),
    }
}
