//! Independent reference implementations used by the integration tests.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use stlane::metrics::ConfusionCounts;
use stlane::nn::{ConvGruCell, ConvLstmCell, RnnState, ScnnBlock};
use stlane::{Mask, ParamStore, SeededRng, Shape, Tape, Tensor, Var};

pub const LSTM_NAMES: [&str; 15] = [
    "w_xi", "w_hi", "w_ci", "b_i", "w_xf", "w_hf", "w_cf", "b_f", "w_xc", "w_hc", "b_c", "w_xo", "w_ho", "w_co", "b_o",
];
pub const GRU_NAMES: [&str; 9] = ["w_zx", "w_zh", "b_z", "w_rx", "w_rh", "b_r", "w_ox", "w_oh", "b_o"];

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Scalar LSTM with peepholes, written straight from the gate equations.
pub fn lstm_scalar(p: &HashMap<&str, f64>, x: f64, h: f64, c: f64) -> (f64, f64) {
    let i = sigmoid(p["w_xi"] * x + p["w_hi"] * h + p["w_ci"] * c + p["b_i"]);
    let f = sigmoid(p["w_xf"] * x + p["w_hf"] * h + p["w_cf"] * c + p["b_f"]);
    let c_next = f * c + i * (p["w_xc"] * x + p["w_hc"] * h + p["b_c"]).tanh();
    let o = sigmoid(p["w_xo"] * x + p["w_ho"] * h + p["w_co"] * c_next + p["b_o"]);
    (o * c_next.tanh(), c_next)
}

/// Scalar GRU with the update gate on the candidate.
pub fn gru_scalar(p: &HashMap<&str, f64>, x: f64, h: f64) -> f64 {
    let z = sigmoid(p["w_zx"] * x + p["w_zh"] * h + p["b_z"]);
    let r = sigmoid(p["w_rx"] * x + p["w_rh"] * h + p["b_r"]);
    let cand = (p["w_ox"] * x + p["w_oh"] * (r * h) + p["b_o"]).tanh();
    z * cand + (1.0 - z) * h
}

/// Writes `v` into the centre tap of a 1-channel parameter (the only tap a
/// zero-padded 3×3 kernel uses on a 1×1 map); everything else is zeroed.
pub fn set_scalar(store: &mut ParamStore<f64>, name: &str, v: f64) {
    let p = store.by_name_mut(name).unwrap_or_else(|| panic!("no parameter {name}"));
    p.value.fill(0.0);
    let n = p.value.numel();
    p.value.data_mut()[n / 2] = v;
}

pub fn scalar(tape: &mut Tape<f64>, v: f64) -> Var {
    tape.constant(Tensor::full(Shape::new(1, 1, 1, 1), v))
}

pub fn lstm_cell(params: &HashMap<&str, f64>) -> (ConvLstmCell, ParamStore<f64>) {
    let mut store = ParamStore::new();
    let cell = ConvLstmCell::new(&mut store, "l", 1, 1, &mut SeededRng::seed_from_u64(0)).unwrap();
    for name in LSTM_NAMES {
        set_scalar(&mut store, &format!("l.{name}"), params.get(name).copied().unwrap_or(0.0));
    }
    (cell, store)
}

pub fn gru_cell(params: &HashMap<&str, f64>) -> (ConvGruCell, ParamStore<f64>) {
    let mut store = ParamStore::new();
    let cell = ConvGruCell::new(&mut store, "g", 1, 1, 0.5, &mut SeededRng::seed_from_u64(0)).unwrap();
    for name in GRU_NAMES {
        set_scalar(&mut store, &format!("g.{name}"), params.get(name).copied().unwrap_or(0.0));
    }
    (cell, store)
}

pub fn lstm_step(params: &HashMap<&str, f64>, x: f64, h: f64, c: f64) -> (f64, f64) {
    let (cell, store) = lstm_cell(params);
    let mut t = Tape::new();
    let xv = scalar(&mut t, x);
    let state = RnnState {
        h: scalar(&mut t, h),
        c: Some(scalar(&mut t, c)),
    };
    let next = cell.step(&mut t, &store, xv, &state).unwrap();
    (t.value(next.h).item(), t.value(next.c.unwrap()).item())
}

pub fn gru_step(params: &HashMap<&str, f64>, x: f64, h: f64) -> f64 {
    let (cell, store) = gru_cell(params);
    let mut t = Tape::new();
    let xv = scalar(&mut t, x);
    let state = RnnState {
        h: scalar(&mut t, h),
        c: None,
    };
    let next = cell.step(&mut t, &store, xv, &state, None::<&mut SeededRng>).unwrap();
    t.value(next.h).item()
}

fn draw_params<'a>(names: &[&'a str], rng: &mut SeededRng) -> HashMap<&'a str, f64> {
    names.iter().map(|&n| (n, rng.random_range(-1.5..1.5))).collect()
}

/// Largest |engine − scalar oracle| over `draws` random parameter sets and
/// inputs, for h' and c' of the LSTM and h' of the GRU.
pub fn cell_oracle_deviation(draws: usize, seed: u64) -> (f64, f64) {
    let mut rng = SeededRng::seed_from_u64(seed);
    let (mut lstm, mut gru) = (0.0f64, 0.0f64);
    for _ in 0..draws {
        let p = draw_params(&LSTM_NAMES, &mut rng);
        let (x, h, c) = (rng.random_range(-2.0..2.0), rng.random_range(-1.0..1.0), rng.random_range(-2.0..2.0));
        let (h_ref, c_ref) = lstm_scalar(&p, x, h, c);
        let (h_got, c_got) = lstm_step(&p, x, h, c);
        lstm = lstm.max((h_ref - h_got).abs()).max((c_ref - c_got).abs());

        let p = draw_params(&GRU_NAMES, &mut rng);
        let (x, h) = (rng.random_range(-2.0..2.0), rng.random_range(-1.0..1.0));
        gru = gru.max((gru_scalar(&p, x, h) - gru_step(&p, x, h)).abs());
    }
    (lstm, gru)
}

/// Pixel loop over two masks, lane = positive.
pub fn brute_confusion(pred: &Mask, gt: &Mask) -> ConfusionCounts {
    let mut c = ConfusionCounts::default();
    for y in 0..gt.h {
        for x in 0..gt.w {
            match (pred.get(y, x), gt.get(y, x)) {
                (1, 1) => c.tp += 1,
                (1, 0) => c.fp += 1,
                (0, 1) => c.fn_ += 1,
                _ => c.tn += 1,
            }
        }
    }
    c
}

/// (accuracy, precision, recall, F_beta) with zero denominators giving 0.
pub fn brute_metrics(c: &ConfusionCounts, beta: f64) -> (f64, f64, f64, f64) {
    let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let total = c.tp + c.fp + c.fn_ + c.tn;
    let acc = ratio(c.tp + c.tn, total);
    let p = ratio(c.tp, c.tp + c.fp);
    let r = ratio(c.tp, c.tp + c.fn_);
    let den = beta * beta * p + r;
    let f = if den == 0.0 { 0.0 } else { (1.0 + beta * beta) * p * r / den };
    (acc, p, r, f)
}

pub fn random_mask(rng: &mut SeededRng, h: usize, w: usize) -> Mask {
    let density = rng.random_range(0.0..1.0);
    Mask::new(h, w, (0..h * w).map(|_| rng.random_bool(density) as u8).collect()).unwrap()
}

/// SCNN block whose four passes copy each channel straight through
/// (centre tap 1, bias 0).
pub fn pass_through_scnn(channels: usize, kernel: usize) -> (ScnnBlock, ParamStore<f64>) {
    let mut store = ParamStore::new();
    let block = ScnnBlock::new(&mut store, "s", channels, kernel, &mut SeededRng::seed_from_u64(1)).unwrap();
    for p in store.iter_mut() {
        let s = p.value.shape();
        p.value = if p.name.ends_with(".weight") {
            Tensor::from_fn(s, |o, i, ky, kx| if o == i && ky == s.h / 2 && kx == s.w / 2 { 1.0 } else { 0.0 })
        } else {
            Tensor::zeros(s)
        };
    }
    (block, store)
}

pub fn scnn_forward(block: &ScnnBlock, store: &ParamStore<f64>, x: &Tensor<f64>) -> Tensor<f64> {
    let mut t = Tape::new();
    let v = t.constant(x.clone());
    let y = block.forward(&mut t, store, v).unwrap();
    t.value(y).clone()
}
