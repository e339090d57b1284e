//! Gradient-check suites over every differentiable primitive and the recurrent
//! cells, on small random 64-bit instances.
//!
//! The finite-difference oracle is itself only accurate to `O(eps²)`, and not at
//! all across a ReLU kink or a pooling tie. Each instance is therefore screened
//! using the oracle alone: the central difference is also taken at `eps/2`, and
//! when the two disagree by more than a quarter of the tolerance (Richardson
//! estimate of the truncation error) the instance is redrawn. The screen never
//! looks at the reverse-mode gradient.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

use crate::error::Result;
use crate::gradcheck::{coordinates, project, random_tensor, relative_error, summarize, DEFAULT_EPS, TOLERANCE};
use crate::nn::scnn::{Direction, ScnnBlock};
use crate::nn::{CellKind, ConvGruCell, ConvLstmCell, RnnState, StRnn};
use crate::ops::{Activation, ConvSpec};
use crate::params::ParamStore;
use crate::tape::{Tape, Var};
use crate::tensor::{Shape, Tensor};
use crate::SeededRng;

/// Share of the tolerance the oracle's own truncation error may take.
const ORACLE_SHARE: f64 = 0.25;

/// Draw budget per requested instance before a suite gives up.
const MAX_DRAWS_PER_INSTANCE: usize = 50;

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteResult {
    pub name: String,
    pub requested: usize,
    pub instances: usize,
    /// Draws rejected because the oracle was not accurate enough there.
    pub redrawn: usize,
    pub coords: usize,
    pub max_rel_error: f64,
    pub worst: String,
}

impl SuiteResult {
    pub fn passed(&self, tol: f64) -> bool {
        self.instances == self.requested && self.max_rel_error < tol
    }
}

fn rng_for(seed: u64, suite: &str, instance: usize) -> SeededRng {
    let mut h = seed ^ 0x9e37_79b9_7f4a_7c15;
    for b in suite.bytes() {
        h = (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3);
    }
    SeededRng::seed_from_u64(h ^ (instance as u64).wrapping_mul(0xff51_afd7_ed55_8ccd))
}

fn dims<R: Rng>(rng: &mut R) -> Shape {
    Shape::new(
        rng.random_range(1..=2),
        rng.random_range(1..=3),
        rng.random_range(1..=4),
        rng.random_range(1..=4),
    )
}

fn even_dims<R: Rng>(rng: &mut R) -> Shape {
    Shape::new(
        rng.random_range(1..=2),
        rng.random_range(1..=3),
        2 * rng.random_range(1..=2),
        2 * rng.random_range(1..=2),
    )
}

fn uniform<R: Rng>(shape: Shape, rng: &mut R) -> Tensor<f64> {
    random_tensor(shape, -1.0, 1.0, rng)
}

/// Values bounded away from zero, random sign.
fn off_zero<R: Rng>(shape: Shape, rng: &mut R) -> Tensor<f64> {
    Tensor::from_vec(
        shape,
        (0..shape.numel())
            .map(|_| {
                let m = rng.random_range(0.1..1.0);
                if rng.random_bool(0.5) { m } else { -m }
            })
            .collect(),
    )
    .expect("shape-sized buffer")
}

/// Distinct values on a 0.1 grid with a little jitter, so every pooling window
/// has a clear winner.
fn spread<R: Rng>(shape: Shape, rng: &mut R) -> Tensor<f64> {
    let mut v: Vec<f64> = (0..shape.numel())
        .map(|i| i as f64 * 0.1 + rng.random_range(0.0..0.03))
        .collect();
    v.shuffle(rng);
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    Tensor::from_vec(shape, v.into_iter().map(|x| x - mean).collect()).expect("shape-sized buffer")
}

/// Runs `instances` grad checks. `make` draws one instance: stored parameters,
/// inputs, and the scalar graph.
fn run_suite<M, G>(name: &str, instances: usize, seed: u64, make: M) -> Result<SuiteResult>
where
    M: Fn(&mut SeededRng) -> Result<(ParamStore<f64>, Vec<Tensor<f64>>, G)>,
    G: Fn(&mut Tape<f64>, &ParamStore<f64>, &[Var]) -> Result<Var>,
{
    let mut res = SuiteResult {
        name: name.to_string(),
        requested: instances,
        instances: 0,
        redrawn: 0,
        coords: 0,
        max_rel_error: 0.0,
        worst: String::new(),
    };
    let mut draw = 0usize;
    while res.instances < instances && draw < instances * MAX_DRAWS_PER_INSTANCE {
        let mut rng = rng_for(seed, name, draw);
        draw += 1;
        let (store, inputs, graph) = make(&mut rng)?;
        let coords = coordinates(&store, &inputs, &[DEFAULT_EPS, DEFAULT_EPS / 2.0], graph)?;
        let oracle_ok = coords.iter().all(|c| {
            let truncation = (c.numeric[0] - c.numeric[1]).abs() * 4.0 / 3.0;
            relative_error(c.numeric[0], c.numeric[0] + truncation) <= ORACLE_SHARE * TOLERANCE
        });
        if !oracle_ok {
            res.redrawn += 1;
            continue;
        }
        let r = summarize(&coords);
        res.coords += r.coords;
        if r.max_rel_error >= res.max_rel_error {
            res.max_rel_error = r.max_rel_error;
            res.worst = format!("instance {}: {}", res.instances, r.worst);
        }
        res.instances += 1;
    }
    Ok(res)
}

/// Projection weights are re-seeded on every evaluation so the scalar functional
/// is identical across the perturbed runs.
fn projected(tape: &mut Tape<f64>, v: Var, key: u64) -> Result<Var> {
    let mut r = SeededRng::seed_from_u64(key);
    project(tape, v, &mut r)
}

fn empty() -> ParamStore<f64> {
    ParamStore::new()
}

fn conv_geometry<R: Rng>(rng: &mut R) -> (Shape, ConvSpec) {
    loop {
        let k = [1, 3][rng.random_range(0..2)];
        let kw = if rng.random_bool(0.25) { 1 } else { k };
        let pad = (rng.random_range(0..=k / 2), rng.random_range(0..=kw / 2));
        let stride = rng.random_range(1..=2);
        let spec = ConvSpec {
            in_ch: rng.random_range(1..=3),
            out_ch: rng.random_range(1..=3),
            kernel: (k, kw),
            padding: pad,
            stride,
            has_bias: rng.random_bool(0.7),
        };
        let x = Shape::new(rng.random_range(1..=2), spec.in_ch, rng.random_range(1..=4), rng.random_range(1..=4));
        if spec.output_shape(x).is_ok() {
            return (x, spec);
        }
    }
}

/// One suite per tensor primitive.
pub fn primitive_suites(instances: usize, seed: u64) -> Result<Vec<SuiteResult>> {
    let mut out = Vec::new();

    out.push(run_suite("conv2d", instances, seed, |rng| {
        let (xs, spec) = conv_geometry(rng);
        let mut inputs = vec![uniform(xs, rng), uniform(spec.weight_shape(), rng)];
        if spec.has_bias {
            inputs.push(uniform(spec.bias_shape(), rng));
        }
        let key = rng.random();
        Ok((empty(), inputs, move |t: &mut Tape<f64>, _: &ParamStore<f64>, v: &[Var]| {
            let y = t.conv2d(v[0], v[1], v.get(2).copied(), spec)?;
            projected(t, y, key)
        }))
    })?);

    out.push(run_suite("maxpool2x2", instances, seed, |rng| {
        let x = spread(even_dims(rng), rng);
        let key = rng.random();
        Ok((empty(), vec![x], move |t: &mut Tape<f64>, _: &ParamStore<f64>, v: &[Var]| {
            let (y, _) = t.maxpool2x2(v[0])?;
            projected(t, y, key)
        }))
    })?);

    out.push(run_suite("maxunpool2x2", instances, seed, |rng| {
        let source = spread(even_dims(rng), rng);
        let pooled = Shape::new(source.shape().n, source.shape().c, source.shape().h / 2, source.shape().w / 2);
        let x = uniform(pooled, rng);
        let key = rng.random();
        Ok((empty(), vec![x], move |t: &mut Tape<f64>, _: &ParamStore<f64>, v: &[Var]| {
            let s = t.constant(source.clone());
            let (_, idx) = t.maxpool2x2(s)?;
            let y = t.maxunpool2x2(v[0], &idx)?;
            projected(t, y, key)
        }))
    })?);

    out.push(run_suite("upsample_bilinear2x", instances, seed, |rng| {
        let x = uniform(dims(rng), rng);
        let key = rng.random();
        Ok((empty(), vec![x], move |t: &mut Tape<f64>, _: &ParamStore<f64>, v: &[Var]| {
            let y = t.upsample_bilinear2x(v[0]);
            projected(t, y, key)
        }))
    })?);

    for act in [Activation::Relu, Activation::Sigmoid, Activation::Tanh] {
        let name = format!("{act:?}").to_lowercase();
        out.push(run_suite(&name, instances, seed, |rng| {
            let s = dims(rng);
            let x = if act == Activation::Relu { off_zero(s, rng) } else { random_tensor(s, -2.0, 2.0, rng) };
            let key = rng.random();
            Ok((empty(), vec![x], move |t: &mut Tape<f64>, _: &ParamStore<f64>, v: &[Var]| {
                let y = t.activate(v[0], act);
                projected(t, y, key)
            }))
        })?);
    }

    out.push(run_suite("log_softmax_channels", instances, seed, |rng| {
        let mut s = dims(rng);
        s.c = rng.random_range(2..=4);
        let x = random_tensor(s, -2.0, 2.0, rng);
        let key = rng.random();
        Ok((empty(), vec![x], move |t: &mut Tape<f64>, _: &ParamStore<f64>, v: &[Var]| {
            let y = t.log_softmax(v[0])?;
            projected(t, y, key)
        }))
    })?);

    out.push(run_suite("concat_channels", instances, seed, |rng| {
        let s = dims(rng);
        let a = uniform(s, rng);
        let b = uniform(s.with_c(rng.random_range(1..=3)), rng);
        let key = rng.random();
        Ok((empty(), vec![a, b], move |t: &mut Tape<f64>, _: &ParamStore<f64>, v: &[Var]| {
            let y = t.concat(v[0], v[1])?;
            projected(t, y, key)
        }))
    })?);

    out.push(run_suite("add", instances, seed, |rng| {
        let s = dims(rng);
        let inputs = vec![uniform(s, rng), uniform(s, rng)];
        let key = rng.random();
        Ok((empty(), inputs, move |t: &mut Tape<f64>, _: &ParamStore<f64>, v: &[Var]| {
            let y = t.add(v[0], v[1])?;
            projected(t, y, key)
        }))
    })?);

    out.push(run_suite("mul", instances, seed, |rng| {
        let s = dims(rng);
        let inputs = vec![uniform(s, rng), uniform(s, rng)];
        let key = rng.random();
        Ok((empty(), inputs, move |t: &mut Tape<f64>, _: &ParamStore<f64>, v: &[Var]| {
            let y = t.mul(v[0], v[1])?;
            // Reusing an operand exercises gradient accumulation.
            let y = t.mul(y, v[0])?;
            projected(t, y, key)
        }))
    })?);

    out.push(run_suite("one_minus", instances, seed, |rng| {
        let x = uniform(dims(rng), rng);
        let key = rng.random();
        Ok((empty(), vec![x], move |t: &mut Tape<f64>, _: &ParamStore<f64>, v: &[Var]| {
            let y = t.one_minus(v[0]);
            projected(t, y, key)
        }))
    })?);

    out.push(run_suite("scale_channels", instances, seed, |rng| {
        let s = dims(rng);
        let inputs = vec![uniform(s, rng), uniform(Shape::new(1, s.c, 1, 1), rng)];
        let key = rng.random();
        Ok((empty(), inputs, move |t: &mut Tape<f64>, _: &ParamStore<f64>, v: &[Var]| {
            let y = t.scale_channels(v[0], v[1])?;
            projected(t, y, key)
        }))
    })?);

    out.push(run_suite("mul_const", instances, seed, |rng| {
        let s = dims(rng);
        let x = uniform(s, rng);
        let f = uniform(s, rng);
        let key = rng.random();
        Ok((empty(), vec![x], move |t: &mut Tape<f64>, _: &ParamStore<f64>, v: &[Var]| {
            let y = t.mul_const(v[0], f.clone())?;
            projected(t, y, key)
        }))
    })?);

    out.push(run_suite("sum", instances, seed, |rng| {
        let x = uniform(dims(rng), rng);
        Ok((empty(), vec![x], |t: &mut Tape<f64>, _: &ParamStore<f64>, v: &[Var]| Ok(t.sum(v[0]))))
    })?);

    for dir in Direction::ORDER {
        out.push(run_suite(&format!("scnn_pass_{}", dir.name()), instances, seed, |rng| {
            let c = rng.random_range(1..=2);
            let k = [1, 3][rng.random_range(0..2)];
            let s = Shape::new(rng.random_range(1..=2), c, rng.random_range(2..=4), rng.random_range(2..=4));
            let x = uniform(s, rng);
            let w = uniform(dir.weight_shape(c, k), rng);
            let b = random_tensor(Shape::new(1, c, 1, 1), -0.5, 0.5, rng);
            let key = rng.random();
            Ok((empty(), vec![x, w, b], move |t: &mut Tape<f64>, _: &ParamStore<f64>, v: &[Var]| {
                let y = t.scnn_pass(v[0], v[1], v[2], dir)?;
                projected(t, y, key)
            }))
        })?);
    }

    out.push(run_suite("weighted_bce", instances, seed, |rng| {
        let mut s = dims(rng);
        s.c = 2;
        let logits = random_tensor(s, -2.0, 2.0, rng);
        let target: Vec<u8> = (0..s.n * s.plane()).map(|_| rng.random_bool(0.3) as u8).collect();
        let target = std::sync::Arc::new(target);
        let w = rng.random_range(0.5..5.0);
        Ok((empty(), vec![logits], move |t: &mut Tape<f64>, _: &ParamStore<f64>, v: &[Var]| {
            let lp = t.log_softmax(v[0])?;
            t.weighted_bce(lp, target.clone(), w)
        }))
    })?);

    Ok(out)
}

fn sequence<R: Rng>(steps: usize, shape: Shape, rng: &mut R) -> Vec<Tensor<f64>> {
    (0..steps).map(|_| uniform(shape, rng)).collect()
}

/// Layer-level suites: the SCNN block, single cell steps, and K=3 unrolled
/// sequence-to-one graphs through the ST-RNN.
pub fn layer_suites(instances: usize, seed: u64) -> Result<Vec<SuiteResult>> {
    let mut out = Vec::new();

    out.push(run_suite("scnn_block", instances, seed, |rng| {
        let c = rng.random_range(1..=2);
        let k = 3;
        let s = Shape::new(1, c, rng.random_range(2..=4), rng.random_range(2..=4));
        let mut store = ParamStore::new();
        let block = ScnnBlock::new(&mut store, "scnn", c, k, rng)?;
        for p in store.iter_mut() {
            if p.name.ends_with(".bias") {
                p.value = random_tensor(p.value.shape(), -0.5, 0.5, rng);
            }
        }
        let x = uniform(s, rng);
        let key = rng.random();
        Ok((store, vec![x], move |t: &mut Tape<f64>, st: &ParamStore<f64>, v: &[Var]| {
            let y = block.forward(t, st, v[0])?;
            projected(t, y, key)
        }))
    })?);

    out.push(run_suite("convlstm_step", instances, seed, |rng| {
        let (cin, hid) = (rng.random_range(1..=2), rng.random_range(1..=2));
        let s = Shape::new(1, cin, rng.random_range(1..=3), rng.random_range(1..=3));
        let mut store = ParamStore::new();
        let cell = ConvLstmCell::new(&mut store, "lstm", cin, hid, rng)?;
        let inputs = vec![uniform(s, rng), uniform(s.with_c(hid), rng), uniform(s.with_c(hid), rng)];
        let key = rng.random();
        Ok((store, inputs, move |t: &mut Tape<f64>, st: &ParamStore<f64>, v: &[Var]| {
            let next = cell.step(t, st, v[0], &RnnState { h: v[1], c: Some(v[2]) })?;
            let c = next.c.expect("lstm cell state");
            let both = t.concat(next.h, c)?;
            projected(t, both, key)
        }))
    })?);

    out.push(run_suite("convgru_step", instances, seed, |rng| {
        let (cin, hid) = (rng.random_range(1..=2), rng.random_range(1..=2));
        let s = Shape::new(1, cin, rng.random_range(1..=3), rng.random_range(1..=3));
        let mut store = ParamStore::new();
        let cell = ConvGruCell::new(&mut store, "gru", cin, hid, ConvGruCell::DEFAULT_DROPOUT, rng)?;
        let inputs = vec![uniform(s, rng), uniform(s.with_c(hid), rng)];
        let (key, mask_seed): (u64, u64) = (rng.random(), rng.random());
        let train = rng.random_bool(0.5);
        Ok((store, inputs, move |t: &mut Tape<f64>, st: &ParamStore<f64>, v: &[Var]| {
            let mut mask_rng = SeededRng::seed_from_u64(mask_seed);
            let state = RnnState { h: v[1], c: None };
            let next = cell.step(t, st, v[0], &state, train.then_some(&mut mask_rng))?;
            projected(t, next.h, key)
        }))
    })?);

    for kind in [CellKind::ConvLstm, CellKind::ConvGru] {
        let name = match kind {
            CellKind::ConvLstm => "convlstm_seq_k3",
            CellKind::ConvGru => "convgru_seq_k3",
        };
        out.push(run_suite(name, instances, seed, |rng| {
            let layers = rng.random_range(1..=2);
            let (cin, hid) = (rng.random_range(1..=2), rng.random_range(1..=2));
            let s = Shape::new(1, cin, rng.random_range(1..=3), rng.random_range(1..=3));
            let mut store = ParamStore::new();
            let rnn = StRnn::new(&mut store, "st", kind, layers, cin, hid, rng)?;
            let inputs = sequence(3, s, rng);
            let (key, mask_seed): (u64, u64) = (rng.random(), rng.random());
            Ok((store, inputs, move |t: &mut Tape<f64>, st: &ParamStore<f64>, v: &[Var]| {
                let mut mask_rng = SeededRng::seed_from_u64(mask_seed);
                let h = rnn.run(t, st, v, Some(&mut mask_rng))?;
                projected(t, h, key)
            }))
        })?);
    }

    Ok(out)
}
