//! Affine maps and small perceptrons whose weights live in a [`ParamSet`].

use rand::Rng;

use crate::autodiff::{Bindings, ParamSet, Tape, Var};
use crate::error::Result;

/// Default LeakyReLU negative slope.
pub const LEAKY_SLOPE: f64 = 0.2;

/// `x W (+ b)` with `W: d_in x d_out`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: String,
    pub bias: Option<String>,
    pub d_in: usize,
    pub d_out: usize,
}

impl Linear {
    pub fn new(prefix: &str, d_in: usize, d_out: usize, bias: bool) -> Self {
        Self {
            weight: format!("{prefix}.weight"),
            bias: bias.then(|| format!("{prefix}.bias")),
            d_in,
            d_out,
        }
    }

    pub fn init<R: Rng + ?Sized>(&self, params: &mut ParamSet, rng: &mut R) {
        params.init_glorot(self.weight.clone(), self.d_in, self.d_out, rng);
        if let Some(b) = &self.bias {
            params.init_zeros(b.clone(), 1, self.d_out);
        }
    }

    pub fn forward(&self, tape: &mut Tape, b: &Bindings, x: Var) -> Result<Var> {
        let w = b.get(&self.weight)?;
        let y = tape.matmul(x, w);
        match &self.bias {
            Some(name) => {
                let bias = b.get(name)?;
                Ok(tape.add_row(y, bias))
            }
            None => Ok(y),
        }
    }
}

/// Two affine layers with a LeakyReLU between them.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub hidden: Linear,
    pub output: Linear,
    pub slope: f64,
}

impl Mlp {
    pub fn new(prefix: &str, d_in: usize, d_hidden: usize, d_out: usize, slope: f64) -> Self {
        Self {
            hidden: Linear::new(&format!("{prefix}.0"), d_in, d_hidden, true),
            output: Linear::new(&format!("{prefix}.1"), d_hidden, d_out, true),
            slope,
        }
    }

    pub fn init<R: Rng + ?Sized>(&self, params: &mut ParamSet, rng: &mut R) {
        self.hidden.init(params, rng);
        self.output.init(params, rng);
    }

    pub fn forward(&self, tape: &mut Tape, b: &Bindings, x: Var) -> Result<Var> {
        let h = self.hidden.forward(tape, b, x)?;
        let h = tape.leaky_relu(h, self.slope);
        self.output.forward(tape, b, h)
    }
}
