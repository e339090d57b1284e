use rand::Rng;

use crate::error::Result;
use crate::ops::ConvSpec;
use crate::params::{ParamId, ParamStore};
use crate::tape::{Tape, Var};
use crate::tensor::Scalar;

/// A learnable convolution: weight `[out, in, kh, kw]` plus optional bias `[1, out, 1, 1]`.
#[derive(Clone, Debug)]
pub struct Conv2d {
    pub spec: ConvSpec,
    pub weight: ParamId,
    pub bias: Option<ParamId>,
}

impl Conv2d {
    /// Registers `{name}.weight` and (if the spec has one) `{name}.bias`.
    pub fn new<T: Scalar, R: Rng>(store: &mut ParamStore<T>, name: &str, spec: ConvSpec, rng: &mut R) -> Result<Self> {
        Self::with_names(store, &format!("{name}.weight"), &format!("{name}.bias"), spec, rng)
    }

    pub fn with_names<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        weight_name: &str,
        bias_name: &str,
        spec: ConvSpec,
        rng: &mut R,
    ) -> Result<Self> {
        let fan_in = spec.in_ch * spec.kernel.0 * spec.kernel.1;
        let weight = store.add_uniform(weight_name, spec.weight_shape(), fan_in, rng)?;
        let bias = if spec.has_bias {
            Some(store.add_zeros(bias_name, spec.bias_shape())?)
        } else {
            None
        };
        Ok(Conv2d { spec, weight, bias })
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let w = tape.param(store, self.weight);
        let b = self.bias.map(|b| tape.param(store, b));
        tape.conv2d(x, w, b, self.spec)
    }
}
