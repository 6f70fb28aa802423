use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::params::{uniform_fan_in, Bound, ParamId, ParamStore};
use crate::var::Var;

pub const LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    LeakyRelu,
    Sigmoid,
    Tanh,
}

impl Activation {
    pub fn apply(self, x: &Var) -> Var {
        match self {
            Activation::Identity => x.clone(),
            Activation::LeakyRelu => x.leaky_relu(LEAKY_SLOPE),
            Activation::Sigmoid => x.sigmoid(),
            Activation::Tanh => x.tanh(),
        }
    }
}

/// Fully connected layer `act(x W + b)` with `W: in x out`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
    pub input: usize,
    pub output: usize,
    pub act: Activation,
}

impl Dense {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut impl Rng,
        name: &str,
        input: usize,
        output: usize,
        act: Activation,
    ) -> Self {
        let weight = store.insert(
            format!("{name}.weight"),
            uniform_fan_in(rng, input, (input, output)),
        );
        let bias = store.insert(
            format!("{name}.bias"),
            uniform_fan_in(rng, input, (1, output)),
        );
        Dense {
            weight,
            bias,
            input,
            output,
            act,
        }
    }

    pub fn forward(&self, p: &Bound, x: &Var) -> Var {
        assert_eq!(x.cols(), self.input, "dense input width");
        let y = x.matmul(p.var(self.weight)).add_row(p.var(self.bias));
        self.act.apply(&y)
    }

    /// Pre-activation `x W` without bias, restricted to weight rows `rows`.
    ///
    /// Lets a layer over a concatenated input be evaluated part by part:
    /// `[a, b] W = a W[..na] + b W[na..]`.
    pub fn project_rows(&self, p: &Bound, x: &Var, start: usize) -> Var {
        let w = p.var(self.weight).slice_rows(start, start + x.cols());
        x.matmul(&w)
    }

    /// Adds the bias and applies the activation to a summed pre-activation.
    pub fn finish(&self, p: &Bound, pre: &Var) -> Var {
        self.act.apply(&pre.add_row(p.var(self.bias)))
    }

    /// `act([parts...] W + b)` without materialising the concatenation.
    pub fn forward_parts(&self, p: &Bound, parts: &[&Var]) -> Var {
        let mut off = 0;
        let mut acc: Option<Var> = None;
        for part in parts {
            let y = self.project_rows(p, part, off);
            off += part.cols();
            acc = Some(match acc {
                Some(a) => a.add(&y),
                None => y,
            });
        }
        assert_eq!(off, self.input, "dense input width");
        self.finish(p, &acc.expect("at least one part"))
    }
}

/// Two dense layers with a hidden activation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mlp2 {
    pub hidden: Dense,
    pub out: Dense,
}

impl Mlp2 {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut impl Rng,
        name: &str,
        dims: (usize, usize, usize),
        hidden_act: Activation,
        out_act: Activation,
    ) -> Self {
        let hidden = Dense::new(store, rng, &format!("{name}.0"), dims.0, dims.1, hidden_act);
        let out = Dense::new(store, rng, &format!("{name}.1"), dims.1, dims.2, out_act);
        Mlp2 { hidden, out }
    }

    pub fn forward(&self, p: &Bound, x: &Var) -> Var {
        self.out.forward(p, &self.hidden.forward(p, x))
    }
}
