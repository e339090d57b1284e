use std::sync::Arc;
use std::thread;

use rand::seq::SliceRandom;
use rand::SeedableRng;

use super::checkpoint::Checkpoint;
use super::config::TrainConfig;
use super::sgd::{clip_grad_norm, Sgd};
use crate::data::{make_batch, SequenceSample};
use crate::error::{Error, Result};
use crate::loss::{class_weight, predict_mask};
use crate::mask::Mask;
use crate::metrics::{EvalReport, MetricsReport};
use crate::model::{Model, ModelConfig};
use crate::tape::Tape;
use crate::SeededRng;

/// Samples per forward pass during evaluation.
const EVAL_BATCH: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub loss: f64,
    pub eval: Option<MetricsReport>,
}

impl TraceRow {
    /// `step,loss[,accuracy,precision,recall,f1]`
    pub fn to_line(&self) -> String {
        let mut s = format!("{},{:.6}", self.step, self.loss);
        if let Some(m) = &self.eval {
            s.push_str(&format!(",{:.6},{:.6},{:.6},{:.6}", m.accuracy, m.precision, m.recall, m.f_measure));
        }
        s
    }
}

/// Receives trace rows and periodic checkpoints as training proceeds.
pub trait Observer {
    fn on_step(&mut self, _row: &TraceRow) -> Result<()> {
        Ok(())
    }

    fn on_checkpoint(&mut self, _checkpoint: &Checkpoint) -> Result<()> {
        Ok(())
    }
}

impl Observer for () {}

pub struct TrainOutcome {
    pub model: Model<f32>,
    pub optimizer: Sgd<f32>,
    pub rng: SeededRng,
    pub steps: usize,
    pub class_weight: f64,
    pub trace: Vec<TraceRow>,
    /// Whether a periodic evaluation reached `target_f1`.
    pub reached_target: bool,
}

impl TrainOutcome {
    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::new(&self.model, self.steps, &self.rng, Some(&self.optimizer.velocity))
    }
}

/// Trims every sample to the frames the model consumes and checks geometry.
pub fn fit_samples(config: &ModelConfig, samples: &[SequenceSample]) -> Result<Vec<SequenceSample>> {
    let k = config.frames();
    samples
        .iter()
        .map(|s| {
            if s.hw() != config.input_hw {
                return Err(Error::usage(format!(
                    "sample {} is {}x{}, model expects {}x{}",
                    s.meta.clip,
                    s.hw().0,
                    s.hw().1,
                    config.input_hw.0,
                    config.input_hw.1
                )));
            }
            if s.k() < k {
                return Err(Error::usage(format!("sample {} has {} frames, model needs {k}", s.meta.clip, s.k())));
            }
            s.last_frames(k)
        })
        .collect()
}

/// Mini-batch SGD over `samples` with a seeded per-epoch shuffle.
pub fn train(
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    samples: &[SequenceSample],
    observer: &mut dyn Observer,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::usage("training set is empty"));
    }
    let mut model = Model::<f32>::build(model_cfg)?;
    let data = fit_samples(model_cfg, samples)?;
    let weight = class_weight(data.iter().map(|s| &s.mask))?;
    let mut rng = SeededRng::seed_from_u64(cfg.seed);
    let mut opt = Sgd::new(&model.store);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let (mut epoch, mut pos) = (0usize, 0usize);
    let mut trace = Vec::new();
    let mut steps = 0;
    let mut reached_target = false;

    for step in 1..=cfg.max_steps {
        if pos == 0 {
            order.shuffle(&mut rng);
        }
        let end = (pos + cfg.batch_size).min(data.len());
        let batch: Vec<&SequenceSample> = order[pos..end].iter().map(|&i| &data[i]).collect();
        let lr = cfg.lr_at(epoch);
        let loss = train_step(&mut model, &mut opt, &batch, weight, lr, cfg, &mut rng)?;
        if !loss.is_finite() {
            return Err(Error::Divergence { step, loss });
        }
        pos = end;
        if pos == data.len() {
            pos = 0;
            epoch += 1;
        }
        steps = step;

        let eval = if cfg.eval_every > 0 && step % cfg.eval_every == 0 {
            Some(evaluate(&model, &data, "train", 1)?.pooled)
        } else {
            None
        };
        let hit = matches!((&eval, cfg.target_f1), (Some(m), Some(t)) if m.f_measure >= t);
        let row = TraceRow { step, loss, eval };
        observer.on_step(&row)?;
        trace.push(row);
        if cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 {
            observer.on_checkpoint(&Checkpoint::new(&model, step, &rng, Some(&opt.velocity)))?;
        }
        if hit {
            reached_target = true;
            break;
        }
    }

    Ok(TrainOutcome {
        model,
        optimizer: opt,
        rng,
        steps,
        class_weight: weight,
        trace,
        reached_target,
    })
}

fn train_step(
    model: &mut Model<f32>,
    opt: &mut Sgd<f32>,
    batch: &[&SequenceSample],
    weight: f64,
    lr: f64,
    cfg: &TrainConfig,
    rng: &mut SeededRng,
) -> Result<f64> {
    let b = make_batch(batch)?;
    let mut tape = Tape::new();
    let frames: Vec<_> = b.frames.into_iter().map(|f| tape.constant(f)).collect();
    let logp = model.forward(&mut tape, &frames, Some(rng))?;
    let loss = tape.weighted_bce(logp, Arc::new(b.target), weight)?;
    let value = tape.value(loss).item() as f64;
    if !value.is_finite() {
        return Ok(value);
    }
    tape.backward(loss, &mut model.store)?;
    clip_grad_norm(&mut model.store, cfg.clip_norm);
    opt.step(&mut model.store, lr, cfg.momentum, cfg.weight_decay)?;
    Ok(value)
}

/// Predicted masks for `samples` in order, in evaluation mode.
pub fn predict_masks(model: &Model<f32>, samples: &[SequenceSample]) -> Result<Vec<Mask>> {
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(EVAL_BATCH) {
        let refs: Vec<&SequenceSample> = chunk.iter().collect();
        let b = make_batch(&refs)?;
        out.extend(predict_mask(&model.predict(&b.frames)?)?);
    }
    Ok(out)
}

/// Pooled and per-image metrics of `model` on `samples`. With `threads > 1`
/// contiguous slices are scored concurrently; the report does not depend on
/// the thread count.
pub fn evaluate(model: &Model<f32>, samples: &[SequenceSample], name: &str, threads: usize) -> Result<EvalReport> {
    let data = fit_samples(&model.config, samples)?;
    let threads = threads.clamp(1, data.len().max(1));
    let preds = if threads == 1 {
        predict_masks(model, &data)?
    } else {
        let per = data.len().div_ceil(threads);
        let parts: Vec<Result<Vec<Mask>>> = thread::scope(|s| {
            let handles: Vec<_> = data
                .chunks(per)
                .map(|chunk| s.spawn(move || predict_masks(model, chunk)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|_| Err(Error::Internal("evaluation worker panicked".into()))))
                .collect()
        });
        let mut all = Vec::with_capacity(data.len());
        for p in parts {
            all.extend(p?);
        }
        all
    };
    EvalReport::from_pairs(name, preds.iter().zip(data.iter().map(|s| &s.mask)), 1.0)
}
