//! Reverse-mode differentiation over a linear record of primitive applications.
//!
//! Every op appends one node holding its output value and whatever it needs for the
//! backward rule. [`Tape::backward`] walks the nodes in reverse record order once,
//! accumulating gradients additively, and deposits parameter gradients into the
//! [`ParamStore`] the parameters were loaded from.

use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::loss;
use crate::nn::scnn::{self, Direction};
use crate::ops::{self, Activation, ConvSpec, PoolIndices};
use crate::params::{ParamId, ParamStore};
use crate::tensor::{Scalar, Shape, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op<T> {
    Leaf,
    Conv {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        spec: ConvSpec,
    },
    MaxPool {
        input: Var,
        indices: Arc<PoolIndices>,
    },
    MaxUnpool {
        input: Var,
        indices: Arc<PoolIndices>,
    },
    Upsample {
        input: Var,
    },
    Act {
        input: Var,
        act: Activation,
    },
    LogSoftmax {
        input: Var,
    },
    Concat {
        a: Var,
        b: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    Mul {
        a: Var,
        b: Var,
    },
    OneMinus {
        input: Var,
    },
    ScaleChannels {
        input: Var,
        scale: Var,
    },
    MulConst {
        input: Var,
        factor: Tensor<T>,
    },
    Scnn {
        input: Var,
        weight: Var,
        bias: Var,
        direction: Direction,
        pre: Tensor<T>,
    },
    Sum {
        input: Var,
    },
    WeightedBce {
        logp: Var,
        target: Arc<Vec<u8>>,
        weight: f64,
    },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
    param: Option<ParamId>,
}

/// Gradients produced by one backward pass, indexed by [`Var`].
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}

#[derive(Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    loaded: HashMap<ParamId, Var>,
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            loaded: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        debug_assert!(value.all_finite(), "non-finite value recorded");
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            param: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Records a constant (no gradient).
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Records an input whose gradient is wanted (gradient checks).
    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Loads a parameter once per tape; later calls return the same [`Var`].
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        if let Some(&v) = self.loaded.get(&id) {
            return v;
        }
        let v = self.push(store.value(id).clone(), Op::Leaf, true);
        self.nodes[v.0].param = Some(id);
        self.loaded.insert(id, v);
        v
    }

    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Option<Var>, spec: ConvSpec) -> Result<Var> {
        let out = ops::conv2d(
            self.value(input),
            self.value(weight),
            bias.map(|b| self.value(b).data()),
            &spec,
        )?;
        let rg = self.needs(input) || self.needs(weight) || bias.is_some_and(|b| self.needs(b));
        Ok(self.push(out, Op::Conv { input, weight, bias, spec }, rg))
    }

    pub fn maxpool2x2(&mut self, input: Var) -> Result<(Var, Arc<PoolIndices>)> {
        let (out, idx) = ops::maxpool2x2(self.value(input))?;
        let idx = Arc::new(idx);
        let rg = self.needs(input);
        let v = self.push(out, Op::MaxPool { input, indices: idx.clone() }, rg);
        Ok((v, idx))
    }

    pub fn maxunpool2x2(&mut self, input: Var, indices: &Arc<PoolIndices>) -> Result<Var> {
        let out = ops::maxunpool2x2(self.value(input), indices)?;
        let rg = self.needs(input);
        Ok(self.push(
            out,
            Op::MaxUnpool {
                input,
                indices: indices.clone(),
            },
            rg,
        ))
    }

    pub fn upsample_bilinear2x(&mut self, input: Var) -> Var {
        let out = ops::upsample_bilinear2x(self.value(input));
        let rg = self.needs(input);
        self.push(out, Op::Upsample { input }, rg)
    }

    pub fn activate(&mut self, input: Var, act: Activation) -> Var {
        let out = ops::activate(self.value(input), act);
        let rg = self.needs(input);
        self.push(out, Op::Act { input, act }, rg)
    }

    pub fn relu(&mut self, input: Var) -> Var {
        self.activate(input, Activation::Relu)
    }

    pub fn sigmoid(&mut self, input: Var) -> Var {
        self.activate(input, Activation::Sigmoid)
    }

    pub fn tanh(&mut self, input: Var) -> Var {
        self.activate(input, Activation::Tanh)
    }

    pub fn log_softmax(&mut self, input: Var) -> Result<Var> {
        let out = ops::log_softmax_channels(self.value(input))?;
        let rg = self.needs(input);
        Ok(self.push(out, Op::LogSoftmax { input }, rg))
    }

    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = ops::concat_channels(self.value(a), self.value(b))?;
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Concat { a, b }, rg))
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::config(format!(
                "{what}: shape {} vs {}",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Add { a, b }, rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x * y)
            .collect();
        let out = Tensor::from_vec(self.shape(a), data)?;
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Mul { a, b }, rg))
    }

    /// `1 - x`, elementwise.
    pub fn one_minus(&mut self, input: Var) -> Var {
        let out = self.value(input).map(|v| T::one() - v);
        let rg = self.needs(input);
        self.push(out, Op::OneMinus { input }, rg)
    }

    /// Per-channel scaling by a `1×C×1×1` tensor, broadcast over batch and space.
    pub fn scale_channels(&mut self, input: Var, scale: Var) -> Result<Var> {
        let out = ops::scale_channels(self.value(input), self.value(scale))?;
        let rg = self.needs(input) || self.needs(scale);
        Ok(self.push(out, Op::ScaleChannels { input, scale }, rg))
    }

    /// Elementwise product with a fixed (non-learnable) tensor, e.g. a dropout mask.
    pub fn mul_const(&mut self, input: Var, factor: Tensor<T>) -> Result<Var> {
        if factor.shape() != self.shape(input) {
            return Err(Error::config("mul_const: factor shape mismatch"));
        }
        let data = self
            .value(input)
            .data()
            .iter()
            .zip(factor.data())
            .map(|(&x, &f)| x * f)
            .collect();
        let out = Tensor::from_vec(self.shape(input), data)?;
        let rg = self.needs(input);
        Ok(self.push(out, Op::MulConst { input, factor }, rg))
    }

    pub fn scnn_pass(&mut self, input: Var, weight: Var, bias: Var, direction: Direction) -> Result<Var> {
        let (out, pre) = scnn::pass_forward(self.value(input), self.value(weight), self.value(bias), direction)?;
        let rg = self.needs(input) || self.needs(weight) || self.needs(bias);
        Ok(self.push(
            out,
            Op::Scnn {
                input,
                weight,
                bias,
                direction,
                pre,
            },
            rg,
        ))
    }

    /// Sum of all elements as a `1×1×1×1` scalar.
    pub fn sum(&mut self, input: Var) -> Var {
        let out = Tensor::scalar(self.value(input).sum());
        let rg = self.needs(input);
        self.push(out, Op::Sum { input }, rg)
    }

    /// Weighted binary cross-entropy over normalised 2-channel log-probabilities.
    pub fn weighted_bce(&mut self, logp: Var, target: Arc<Vec<u8>>, weight: f64) -> Result<Var> {
        let value = loss::weighted_bce_forward(self.value(logp), &target, weight)?;
        let rg = self.needs(logp);
        Ok(self.push(
            Tensor::scalar(value),
            Op::WeightedBce { logp, target, weight },
            rg,
        ))
    }

    /// Backpropagates from the scalar `loss` with seed gradient 1.
    pub fn backward(&self, loss: Var, store: &mut ParamStore<T>) -> Result<Gradients<T>> {
        self.backward_with(loss, T::one(), store)
    }

    pub fn backward_with(&self, loss: Var, seed: T, store: &mut ParamStore<T>) -> Result<Gradients<T>> {
        if self.nodes.is_empty() {
            return Err(Error::usage("backward on an empty tape"));
        }
        if self.value(loss).numel() != 1 {
            return Err(Error::usage(format!(
                "backward needs a scalar loss, got {}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(seed));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if node.requires_grad {
                self.propagate(node, &g, &mut grads);
            }
            grads[idx] = Some(g);
        }

        for node_idx in 0..self.nodes.len() {
            if let Some(id) = self.nodes[node_idx].param {
                store.accumulate_grad(id, grads[node_idx].as_ref());
            }
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node<T>, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let mut give = |v: Var, t: Tensor<T>| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(acc) => acc.add_assign(&t),
                slot @ None => *slot = Some(t),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::Conv {
                input,
                weight,
                bias,
                spec,
            } => {
                let cg = ops::conv2d_backward(
                    self.value(*input),
                    self.value(*weight),
                    spec,
                    g,
                    self.needs(*input),
                );
                if let Some(gi) = cg.input {
                    give(*input, gi);
                }
                give(*weight, cg.weight);
                if let (Some(b), Some(gb)) = (bias, cg.bias) {
                    let shape = self.shape(*b);
                    give(*b, Tensor::from_vec(shape, gb).expect("bias grad"));
                }
            }
            Op::MaxPool { input, indices } => give(*input, ops::maxpool2x2_backward(indices, g)),
            Op::MaxUnpool { input, indices } => give(*input, ops::maxunpool2x2_backward(indices, g)),
            Op::Upsample { input } => {
                give(*input, ops::upsample_bilinear2x_backward(self.shape(*input), g))
            }
            Op::Act { input, act } => give(
                *input,
                ops::activate_backward(self.value(*input), &node.value, *act, g),
            ),
            Op::LogSoftmax { input } => give(*input, ops::log_softmax_backward(&node.value, g)),
            Op::Concat { a, b } => {
                let (ga, gb) = ops::concat_backward(self.shape(*a), self.shape(*b), g);
                give(*a, ga);
                give(*b, gb);
            }
            Op::Add { a, b } => {
                give(*a, g.clone());
                give(*b, g.clone());
            }
            Op::Mul { a, b } => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let ga = Tensor::from_vec(
                    g.shape(),
                    g.data().iter().zip(vb.data()).map(|(&d, &y)| d * y).collect(),
                )
                .expect("mul grad");
                let gb = Tensor::from_vec(
                    g.shape(),
                    g.data().iter().zip(va.data()).map(|(&d, &x)| d * x).collect(),
                )
                .expect("mul grad");
                give(*a, ga);
                give(*b, gb);
            }
            Op::OneMinus { input } => give(*input, g.map(|d| -d)),
            Op::ScaleChannels { input, scale } => {
                let (gi, gs) = ops::scale_channels_backward(self.value(*input), self.value(*scale), g);
                give(*input, gi);
                give(*scale, gs);
            }
            Op::MulConst { input, factor } => {
                let gi = Tensor::from_vec(
                    g.shape(),
                    g.data().iter().zip(factor.data()).map(|(&d, &f)| d * f).collect(),
                )
                .expect("mul_const grad");
                give(*input, gi);
            }
            Op::Scnn {
                input,
                weight,
                bias,
                direction,
                pre,
            } => {
                let sg = scnn::pass_backward(
                    &node.value,
                    pre,
                    self.value(*weight),
                    *direction,
                    g,
                );
                give(*input, sg.input);
                give(*weight, sg.weight);
                give(*bias, sg.bias);
            }
            Op::Sum { input } => give(*input, Tensor::full(self.shape(*input), g.item())),
            Op::WeightedBce { logp, target, weight } => {
                let gl = loss::weighted_bce_backward(self.value(*logp), target, *weight, g.item());
                give(*logp, gl);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gradient_is_ones() {
        let mut tape = Tape::<f64>::new();
        let x = tape.input(Tensor::from_fn(Shape::new(2, 3, 2, 2), |n, c, y, x| (n + c + y + x) as f64));
        let s = tape.sum(x);
        let g = tape.backward(s, &mut ParamStore::new()).unwrap();
        assert!(g.get(x).unwrap().data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn dead_relu_has_zero_gradient() {
        let mut tape = Tape::<f64>::new();
        let x = tape.input(Tensor::full(Shape::new(1, 2, 3, 3), -0.7));
        let r = tape.relu(x);
        let s = tape.sum(r);
        let g = tape.backward(s, &mut ParamStore::new()).unwrap();
        assert!(g.get(x).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn empty_tape_and_non_scalar_rejected() {
        let tape = Tape::<f64>::new();
        let mut store = ParamStore::new();
        assert!(matches!(tape.backward(Var(0), &mut store), Err(Error::Usage(_))));
        let mut tape = Tape::<f64>::new();
        let x = tape.input(Tensor::zeros(Shape::new(1, 1, 2, 2)));
        assert!(matches!(tape.backward(x, &mut store), Err(Error::Usage(_))));
    }

    #[test]
    fn params_accumulate_and_untouched_stay_clean() {
        let mut store = ParamStore::<f64>::new();
        let used = store.add("used", Tensor::full(Shape::new(1, 1, 2, 2), 2.0)).unwrap();
        let unused = store.add("unused", Tensor::full(Shape::new(1, 1, 2, 2), 2.0)).unwrap();
        let mut tape = Tape::new();
        let p = tape.param(&store, used);
        let again = tape.param(&store, used);
        assert_eq!(p, again);
        let m = tape.mul(p, again).unwrap();
        let s = tape.sum(m);
        tape.backward(s, &mut store).unwrap();
        // d/dp Σ p² = 2p = 4
        assert!(store.value(used).data().iter().zip(store.get(used).grad.data()).all(|(_, &g)| g == 4.0));
        assert!(store.get(used).has_grad);
        assert!(!store.get(unused).has_grad);
        assert!(store.get(unused).grad.data().iter().all(|&g| g == 0.0));
    }
}
