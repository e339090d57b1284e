//! Quick in-process property checks shipped with the binary.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use stlane::data::{generate_split, sample_windows, CorpusSpec, TRAIN_SPLIT};
use stlane::gradcheck::TOLERANCE;
use stlane::gradsuite::{layer_suites, primitive_suites};
use stlane::loss::class_weight;
use stlane::metrics::{confusion, metrics, ConfusionCounts};
use stlane::model::{Model, ModelConfig};
use stlane::nn::scnn::ScnnBlock;
use stlane::nn::{ConvGruCell, ConvLstmCell, RnnState};
use stlane::train::{Checkpoint, Sgd};
use stlane::{Mask, ParamStore, SeededRng, Shape, Tape, Tensor};

type Check = fn(u64) -> Result<String, String>;

const CHECKS: &[(&str, Check)] = &[
    ("gradients", gradients),
    ("scnn identity and reach", scnn),
    ("convlstm scalar oracle", lstm_oracle),
    ("convgru scalar oracle", gru_oracle),
    ("metrics brute force", metric_oracle),
    ("loss and class weight", loss_examples),
    ("sgd closed form", sgd),
    ("sampling windows", windows),
    ("checkpoint round trip", checkpoint),
    ("corpus determinism", corpus),
];

pub fn run(seed: u64) -> Result<(), String> {
    let mut failed = Vec::new();
    for (name, check) in CHECKS {
        match check(seed) {
            Ok(detail) => println!("ok   {name:<26} {detail}"),
            Err(why) => {
                println!("FAIL {name:<26} {why}");
                failed.push(*name);
            }
        }
    }
    if failed.is_empty() {
        println!("{} checks passed", CHECKS.len());
        Ok(())
    } else {
        Err(failed.join(", "))
    }
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn gradients(seed: u64) -> Result<String, String> {
    let mut suites = primitive_suites(5, seed).map_err(|e| e.to_string())?;
    suites.extend(layer_suites(5, seed).map_err(|e| e.to_string())?);
    let worst = suites.iter().map(|s| s.max_rel_error).fold(0.0, f64::max);
    match suites.iter().find(|s| !s.passed(TOLERANCE)) {
        Some(s) => Err(format!("{}: {:.3e}", s.name, s.max_rel_error)),
        None => Ok(format!("{} suites, max rel err {worst:.2e}", suites.len())),
    }
}

fn scnn(seed: u64) -> Result<String, String> {
    let mut store = ParamStore::<f64>::new();
    let block = ScnnBlock::new(&mut store, "s", 2, 3, &mut SeededRng::seed_from_u64(seed)).map_err(|e| e.to_string())?;
    let x = Tensor::from_fn(Shape::new(1, 2, 7, 9), |_, c, y, x| ((c + 3 * y + 5 * x) % 11) as f64 - 5.0);
    let forward = |store: &ParamStore<f64>, x: &Tensor<f64>| {
        let mut tape = Tape::new();
        let v = tape.constant(x.clone());
        let y = block.forward(&mut tape, store, v).map_err(|e| e.to_string())?;
        Ok::<_, String>(tape.value(y).clone())
    };
    for p in store.iter_mut() {
        p.value.fill(0.0);
    }
    ensure(forward(&store, &x)? == x, || "zero parameters are not the identity".into())?;
    for p in store.iter_mut() {
        if p.name.ends_with("weight") {
            let s = p.value.shape();
            p.value = Tensor::from_fn(s, |o, i, ky, kx| {
                if o == i && ky == s.h / 2 && kx == s.w / 2 {
                    1.0
                } else {
                    0.0
                }
            });
        }
    }
    let mut impulse = Tensor::zeros(x.shape());
    impulse.set(0, 0, 3, 4, 1.0);
    let y = forward(&store, &impulse)?;
    let row = (0..9).all(|c| y.at(0, 0, 3, c) != 0.0);
    let col = (0..7).all(|r| y.at(0, 0, r, 4) != 0.0);
    ensure(row && col, || "impulse did not reach its whole row and column".into())?;
    Ok("identity exact, impulse reaches row and column".into())
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Sets a 1-channel cell's parameter: centre tap for 3×3 kernels.
fn set_scalar(store: &mut ParamStore<f64>, name: &str, v: f64) -> Result<(), String> {
    let p = store.by_name_mut(name).ok_or_else(|| format!("missing parameter {name}"))?;
    p.value.fill(0.0);
    let n = p.value.numel();
    p.value.data_mut()[n / 2] = v;
    Ok(())
}

fn scalar_tape(v: f64, tape: &mut Tape<f64>) -> stlane::Var {
    tape.constant(Tensor::full(Shape::new(1, 1, 1, 1), v))
}

fn lstm_oracle(seed: u64) -> Result<String, String> {
    let mut rng = SeededRng::seed_from_u64(seed ^ 0x15);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let mut store = ParamStore::<f64>::new();
        let cell = ConvLstmCell::new(&mut store, "l", 1, 1, &mut rng).map_err(|e| e.to_string())?;
        let mut p = std::collections::HashMap::new();
        for name in [
            "w_xi", "w_hi", "w_ci", "b_i", "w_xf", "w_hf", "w_cf", "b_f", "w_xc", "w_hc", "b_c", "w_xo", "w_ho", "w_co", "b_o",
        ] {
            let v = rng.random_range(-1.5..1.5);
            set_scalar(&mut store, &format!("l.{name}"), v)?;
            p.insert(name, v);
        }
        let (x, h, c) = (rng.random_range(-2.0..2.0), rng.random_range(-1.0..1.0), rng.random_range(-2.0..2.0));
        let i = sigmoid(p["w_xi"] * x + p["w_hi"] * h + p["w_ci"] * c + p["b_i"]);
        let f = sigmoid(p["w_xf"] * x + p["w_hf"] * h + p["w_cf"] * c + p["b_f"]);
        let c2 = f * c + i * (p["w_xc"] * x + p["w_hc"] * h + p["b_c"]).tanh();
        let o = sigmoid(p["w_xo"] * x + p["w_ho"] * h + p["w_co"] * c2 + p["b_o"]);
        let h2 = o * c2.tanh();

        let mut tape = Tape::new();
        let xv = scalar_tape(x, &mut tape);
        let state = RnnState {
            h: scalar_tape(h, &mut tape),
            c: Some(scalar_tape(c, &mut tape)),
        };
        let next = cell.step(&mut tape, &store, xv, &state).map_err(|e| e.to_string())?;
        let got_c = tape.value(next.c.expect("lstm state")).item();
        worst = worst.max((tape.value(next.h).item() - h2).abs()).max((got_c - c2).abs());
    }
    ensure(worst <= 1e-6, || format!("max abs deviation {worst:.3e}"))?;
    Ok(format!("100 draws, max abs deviation {worst:.2e}"))
}

fn gru_oracle(seed: u64) -> Result<String, String> {
    let mut rng = SeededRng::seed_from_u64(seed ^ 0x16);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let mut store = ParamStore::<f64>::new();
        let cell = ConvGruCell::new(&mut store, "g", 1, 1, 0.5, &mut rng).map_err(|e| e.to_string())?;
        let mut p = std::collections::HashMap::new();
        for name in ["w_zx", "w_zh", "b_z", "w_rx", "w_rh", "b_r", "w_ox", "w_oh", "b_o"] {
            let v = rng.random_range(-1.5..1.5);
            set_scalar(&mut store, &format!("g.{name}"), v)?;
            p.insert(name, v);
        }
        let (x, h) = (rng.random_range(-2.0..2.0), rng.random_range(-1.0..1.0));
        let z = sigmoid(p["w_zx"] * x + p["w_zh"] * h + p["b_z"]);
        let r = sigmoid(p["w_rx"] * x + p["w_rh"] * h + p["b_r"]);
        let cand = (p["w_ox"] * x + p["w_oh"] * (r * h) + p["b_o"]).tanh();
        let h2 = z * cand + (1.0 - z) * h;

        let mut tape = Tape::new();
        let xv = scalar_tape(x, &mut tape);
        let state = RnnState {
            h: scalar_tape(h, &mut tape),
            c: None,
        };
        let next = cell
            .step(&mut tape, &store, xv, &state, None::<&mut SeededRng>)
            .map_err(|e| e.to_string())?;
        worst = worst.max((tape.value(next.h).item() - h2).abs());
    }
    ensure(worst <= 1e-6, || format!("max abs deviation {worst:.3e}"))?;
    Ok(format!("100 draws, max abs deviation {worst:.2e}"))
}

fn metric_oracle(seed: u64) -> Result<String, String> {
    let mut rng = SeededRng::seed_from_u64(seed ^ 0x17);
    for _ in 0..1000 {
        let (h, w) = (rng.random_range(1..9), rng.random_range(1..9));
        let density = rng.random_range(0.0..1.0);
        let mut draw = || Mask::new(h, w, (0..h * w).map(|_| rng.random_bool(density) as u8).collect());
        let (pred, gt) = (draw().map_err(|e| e.to_string())?, draw().map_err(|e| e.to_string())?);
        let mut brute = ConfusionCounts::default();
        for (&p, &g) in pred.data.iter().zip(&gt.data) {
            match (p, g) {
                (1, 1) => brute.tp += 1,
                (1, 0) => brute.fp += 1,
                (0, 1) => brute.fn_ += 1,
                _ => brute.tn += 1,
            }
        }
        let got = confusion(&pred, &gt).map_err(|e| e.to_string())?;
        ensure(got == brute, || format!("{got:?} != {brute:?}"))?;
    }
    let m = metrics(
        &ConfusionCounts {
            tp: 8,
            fp: 2,
            fn_: 2,
            tn: 88,
        },
        1.0,
    );
    let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
    ensure(
        close(m.precision, 0.8) && close(m.recall, 0.8) && close(m.f_measure, 0.8) && close(m.accuracy, 0.96),
        || format!("worked example gave {m:?}"),
    )?;
    Ok("1000 random pairs exact, worked example exact".into())
}

fn loss_examples(_: u64) -> Result<String, String> {
    let mut tape = Tape::<f64>::new();
    let half = 0.5f64.ln();
    let logp = tape.constant(Tensor::full(Shape::new(1, 2, 1, 1), half));
    let loss = tape
        .weighted_bce(logp, Arc::new(vec![1]), 2.0)
        .map_err(|e| e.to_string())?;
    let v = tape.value(loss).item();
    ensure((v - 2.0 * 2f64.ln()).abs() < 1e-12, || format!("single-pixel loss {v}"))?;
    let mask = |lane: usize| Mask::new(1, 10, (0..10).map(|i| (i < lane) as u8).collect()).expect("10 pixels");
    let w = class_weight([&mask(1), &mask(3)]).map_err(|e| e.to_string())?;
    ensure((w - 4.0).abs() < 1e-12, || format!("pooled class weight {w}"))?;
    Ok("2 ln 2 and pooled weight 4".into())
}

fn sgd(_: u64) -> Result<String, String> {
    let (lr, g, m) = (0.1, 0.5, 0.9);
    let mut store = ParamStore::<f64>::new();
    store
        .add("p", Tensor::zeros(Shape::new(1, 1, 1, 1)))
        .map_err(|e| e.to_string())?;
    let mut opt = Sgd::new(&store);
    for _ in 0..2 {
        for p in store.iter_mut() {
            p.grad.fill(g);
            p.has_grad = true;
        }
        opt.step(&mut store, lr, m, 0.0).map_err(|e| e.to_string())?;
    }
    let moved = -store.by_name("p").expect("added").value.item();
    ensure((moved - lr * g * (2.0 + m)).abs() < 1e-15, || format!("displacement {moved}"))?;
    Ok("two-step displacement lr·g·(2+m)".into())
}

fn windows(_: u64) -> Result<String, String> {
    for (l, s, want) in [(13, 3, [1, 4, 7, 10, 13]), (20, 2, [12, 14, 16, 18, 20]), (5, 1, [1, 2, 3, 4, 5])] {
        let got = sample_windows(l, s, 5).map_err(|e| e.to_string())?;
        ensure(got == want, || format!("({l}, {s}) gave {got:?}"))?;
    }
    ensure(sample_windows(12, 3, 5).is_err(), || "underflow accepted".into())?;
    Ok("three windows and underflow".into())
}

fn checkpoint(seed: u64) -> Result<String, String> {
    let mut cfg = ModelConfig::desk();
    cfg.k_frames = 2;
    cfg.seed = seed;
    let model = Model::<f32>::build(&cfg).map_err(|e| e.to_string())?;
    let rng = SeededRng::seed_from_u64(seed);
    let bytes = Checkpoint::new(&model, 1, &rng, None).to_bytes();
    let back = Checkpoint::from_bytes(&bytes).map_err(|e| e.to_string())?;
    ensure(back.to_bytes() == bytes, || "re-saved bytes differ".into())?;
    let frames = vec![Tensor::full(Shape::new(1, 3, 32, 64), 0.25f32); 2];
    let a = model.predict(&frames).map_err(|e| e.to_string())?;
    let b = back
        .to_model()
        .and_then(|m| m.predict(&frames))
        .map_err(|e| e.to_string())?;
    ensure(a == b, || "forward differs after reload".into())?;
    Ok(format!("{} bytes, byte- and forward-identical", bytes.len()))
}

fn corpus(seed: u64) -> Result<String, String> {
    let spec = CorpusSpec::new(4, 0, 0, seed);
    let a = generate_split(&spec, TRAIN_SPLIT).map_err(|e| e.to_string())?;
    let b = generate_split(&spec, TRAIN_SPLIT).map_err(|e| e.to_string())?;
    let same = a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| x.frames == y.frames && x.mask == y.mask);
    ensure(same, || "two generations differ".into())?;
    Ok(format!("{} sequences regenerate identically", a.len()))
}
