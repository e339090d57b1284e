//! Central-difference gradient checking in 64-bit mode.

use rand::Rng;

use crate::error::{Error, Result};
use crate::params::{ParamId, ParamStore};
use crate::tape::{Tape, Var};
use crate::tensor::{Shape, Tensor};

pub const DEFAULT_EPS: f64 = 1e-3;
pub const TOLERANCE: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Location of the worst coordinate, e.g. `input0[17]` or `cell.w_xi[3]`.
    pub worst: String,
    pub coords: usize,
}

impl GradCheckReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    let d = (a - b).abs();
    if d == 0.0 {
        0.0
    } else {
        d / a.abs().max(b.abs()).max(1e-8)
    }
}

fn evaluate<F>(f: &F, store: &ParamStore<f64>, inputs: &[Tensor<f64>]) -> Result<f64>
where
    F: Fn(&mut Tape<f64>, &ParamStore<f64>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.input(t.clone())).collect();
    let out = f(&mut tape, store, &vars)?;
    let v = tape.value(out);
    if v.numel() != 1 {
        return Err(Error::usage(format!("gradient check needs a scalar output, got {}", v.shape())));
    }
    Ok(v.item())
}

/// One checked coordinate: the reverse-mode value and central differences at
/// each requested step.
#[derive(Clone, Debug, PartialEq)]
pub struct Coordinate {
    pub at: String,
    pub analytic: f64,
    pub numeric: Vec<f64>,
}

/// Reverse-mode gradients of the scalar graph `f` next to central differences
/// at every step in `steps`, over every input coordinate and every parameter in
/// `store`.
pub fn coordinates<F>(store: &ParamStore<f64>, inputs: &[Tensor<f64>], steps: &[f64], f: F) -> Result<Vec<Coordinate>>
where
    F: Fn(&mut Tape<f64>, &ParamStore<f64>, &[Var]) -> Result<Var>,
{
    let mut analytic_store = store.clone();
    analytic_store.zero_grads();
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.input(t.clone())).collect();
    let out = f(&mut tape, &analytic_store, &vars)?;
    let grads = tape.backward(out, &mut analytic_store)?;

    let mut coords = Vec::new();
    let mut probe = inputs.to_vec();
    for (k, var) in vars.iter().enumerate() {
        let analytic = grads.get(*var).cloned().unwrap_or_else(|| Tensor::zeros(inputs[k].shape()));
        for i in 0..inputs[k].numel() {
            let orig = inputs[k].data()[i];
            let mut numeric = Vec::with_capacity(steps.len());
            for &eps in steps {
                probe[k].data_mut()[i] = orig + eps;
                let up = evaluate(&f, store, &probe)?;
                probe[k].data_mut()[i] = orig - eps;
                let down = evaluate(&f, store, &probe)?;
                numeric.push((up - down) / (2.0 * eps));
            }
            probe[k].data_mut()[i] = orig;
            coords.push(Coordinate {
                at: format!("input{k}[{i}]"),
                analytic: analytic.data()[i],
                numeric,
            });
        }
    }

    let mut work = store.clone();
    for p in 0..store.len() {
        let id = ParamId(p);
        let name = &store.get(id).name;
        let analytic = &analytic_store.get(id).grad;
        for i in 0..store.value(id).numel() {
            let orig = store.value(id).data()[i];
            let mut numeric = Vec::with_capacity(steps.len());
            for &eps in steps {
                work.value_mut(id).data_mut()[i] = orig + eps;
                let up = evaluate(&f, &work, inputs)?;
                work.value_mut(id).data_mut()[i] = orig - eps;
                let down = evaluate(&f, &work, inputs)?;
                numeric.push((up - down) / (2.0 * eps));
            }
            work.value_mut(id).data_mut()[i] = orig;
            coords.push(Coordinate {
                at: format!("{name}[{i}]"),
                analytic: analytic.data()[i],
                numeric,
            });
        }
    }
    Ok(coords)
}

/// Max relative error between the first numeric column and the analytic value.
pub fn summarize(coords: &[Coordinate]) -> GradCheckReport {
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: String::new(),
        coords: coords.len(),
    };
    for c in coords {
        let (a, b) = (c.analytic, c.numeric[0]);
        let e = relative_error(a, b);
        if e > report.max_rel_error || report.worst.is_empty() {
            report.max_rel_error = e;
            report.worst = format!("{} (analytic {a:.6e}, numeric {b:.6e})", c.at);
        }
    }
    report
}

/// Compares reverse-mode gradients of the scalar graph `f` against central
/// differences with step `eps`.
pub fn grad_check<F>(store: &ParamStore<f64>, inputs: &[Tensor<f64>], eps: f64, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &ParamStore<f64>, &[Var]) -> Result<Var>,
{
    Ok(summarize(&coordinates(store, inputs, &[eps], f)?))
}

/// Reduces `v` to a scalar through fixed random weights so every output
/// coordinate contributes a distinct gradient.
pub fn project<R: Rng>(tape: &mut Tape<f64>, v: Var, rng: &mut R) -> Result<Var> {
    let shape = tape.shape(v);
    let w = random_tensor(shape, 0.5, 1.5, rng);
    let m = tape.mul_const(v, w)?;
    Ok(tape.sum(m))
}

pub fn random_tensor<R: Rng>(shape: Shape, lo: f64, hi: f64, rng: &mut R) -> Tensor<f64> {
    Tensor::from_vec(shape, (0..shape.numel()).map(|_| rng.random_range(lo..hi)).collect())
        .expect("shape-sized buffer")
}
