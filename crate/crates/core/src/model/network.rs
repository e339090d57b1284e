use std::collections::HashMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};

use super::config::ModelConfig;
use super::exec::{run, Exec};
use super::plan::{Plan, RnnPlan, Step};
use crate::error::{Error, Result};
use crate::nn::{Conv2d, ScnnBlock, StRnn};
use crate::ops::{ConvSpec, PoolIndices};
use crate::params::ParamStore;
use crate::tape::{Tape, Var};
use crate::tensor::{Scalar, Tensor};
use crate::SeededRng;

/// Prefix of the SCNN block's parameters.
pub const SCNN_PREFIX: &str = "SCNN";
/// Prefix of the ST-RNN layers' parameters.
pub const RNN_PREFIX: &str = "ST-RNN";

/// A built sequence-to-one network: the plan plus its learnable parameters.
#[derive(Clone, Debug)]
pub struct Model<T> {
    pub config: ModelConfig,
    pub plan: Plan,
    pub store: ParamStore<T>,
    convs: HashMap<String, Conv2d>,
    scnn: Option<ScnnBlock>,
    rnn: Option<StRnn>,
}

impl<T: Scalar> Model<T> {
    /// Builds the network and initialises every parameter from `config.seed`,
    /// registering them in plan order (encoder, ST-RNN, decoder).
    pub fn build(config: &ModelConfig) -> Result<Self> {
        let plan = Plan::new(config)?;
        let mut rng = SeededRng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let mut convs = HashMap::new();
        let mut scnn = None;

        let mut add_steps = |steps: &[Step], store: &mut ParamStore<T>, rng: &mut SeededRng| -> Result<()> {
            for step in steps {
                match step {
                    Step::Conv { name, spec, .. } => {
                        convs.insert(name.clone(), Conv2d::new(store, name, *spec, rng)?);
                    }
                    Step::Scnn { channels, kernel } => {
                        if scnn.is_some() {
                            return Err(Error::Internal("plan holds two SCNN blocks".into()));
                        }
                        scnn = Some(ScnnBlock::new(store, SCNN_PREFIX, *channels, *kernel, rng)?);
                    }
                    _ => {}
                }
            }
            Ok(())
        };
        add_steps(&plan.encoder, &mut store, &mut rng)?;
        let rnn = match &plan.rnn {
            Some(r) => Some(StRnn::new(&mut store, RNN_PREFIX, r.kind, r.layers, r.input_ch, r.hidden, &mut rng)?),
            None => None,
        };
        add_steps(&plan.decoder, &mut store, &mut rng)?;

        Ok(Model {
            config: config.clone(),
            plan,
            store,
            convs,
            scnn,
            rnn,
        })
    }

    pub fn param_count(&self) -> usize {
        self.store.total_elems()
    }

    /// Records the forward pass on `tape` and returns per-pixel 2-class
    /// log-probabilities `[n, 2, H, W]`. Passing `dropout_rng` selects training
    /// mode (ConvGRU input dropout).
    pub fn forward<R: Rng>(&self, tape: &mut Tape<T>, frames: &[Var], dropout_rng: Option<&mut R>) -> Result<Var> {
        let (h, w) = self.config.input_hw;
        let first = *frames
            .first()
            .ok_or_else(|| Error::usage("forward needs at least one frame"))?;
        let n = tape.shape(first).n;
        for &f in frames {
            let s = tape.shape(f);
            if s.n != n || s.c != 3 || s.h != h || s.w != w {
                return Err(Error::usage(format!("frame {s} does not match {n}x3x{h}x{w}")));
            }
        }
        let mut exec = TapeExec {
            model: self,
            tape,
            dropout_rng,
        };
        run(&self.plan, &mut exec, frames)
    }

    /// Evaluation-mode inference without gradients.
    pub fn predict(&self, frames: &[Tensor<T>]) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = frames.iter().map(|f| tape.constant(f.clone())).collect();
        let out = self.forward(&mut tape, &vars, None::<&mut SeededRng>)?;
        Ok(tape.value(out).clone())
    }

    /// Copies every parameter of `source` into this model by name. Names and
    /// shapes must match exactly.
    pub fn load_store(&mut self, source: &ParamStore<T>) -> Result<()> {
        if source.len() != self.store.len() {
            return Err(Error::config(format!(
                "parameter set has {} tensors, model expects {}",
                source.len(),
                self.store.len()
            )));
        }
        for p in source.iter() {
            let dst = self
                .store
                .by_name_mut(&p.name)
                .ok_or_else(|| Error::config(format!("unknown parameter {}", p.name)))?;
            if dst.value.shape() != p.value.shape() {
                return Err(Error::config(format!(
                    "parameter {} has shape {}, model expects {}",
                    p.name,
                    p.value.shape(),
                    dst.value.shape()
                )));
            }
            dst.value = p.value.clone();
        }
        Ok(())
    }
}

struct TapeExec<'a, T, R> {
    model: &'a Model<T>,
    tape: &'a mut Tape<T>,
    dropout_rng: Option<&'a mut R>,
}

impl<T: Scalar, R: Rng> Exec for TapeExec<'_, T, R> {
    type V = Var;
    type Idx = Arc<PoolIndices>;

    fn conv(&mut self, name: &str, _spec: &ConvSpec, relu: bool, x: Var) -> Result<Var> {
        let conv = self
            .model
            .convs
            .get(name)
            .ok_or_else(|| Error::Internal(format!("no layer named {name}")))?;
        let y = conv.forward(self.tape, &self.model.store, x)?;
        Ok(if relu { self.tape.relu(y) } else { y })
    }

    fn pool(&mut self, _name: &str, x: Var) -> Result<(Var, Arc<PoolIndices>)> {
        self.tape.maxpool2x2(x)
    }

    fn unpool(&mut self, _name: &str, x: Var, idx: &Arc<PoolIndices>) -> Result<Var> {
        self.tape.maxunpool2x2(x, idx)
    }

    fn upsample(&mut self, _name: &str, x: Var) -> Result<Var> {
        Ok(self.tape.upsample_bilinear2x(x))
    }

    fn scnn(&mut self, _channels: usize, _kernel: usize, x: Var) -> Result<Var> {
        let block = self
            .model
            .scnn
            .as_ref()
            .ok_or_else(|| Error::Internal("SCNN step without a block".into()))?;
        block.forward(self.tape, &self.model.store, x)
    }

    fn concat(&mut self, skip: Var, x: Var) -> Result<Var> {
        self.tape.concat(skip, x)
    }

    fn rnn(&mut self, _plan: &RnnPlan, seq: &[Var]) -> Result<Var> {
        let rnn = self
            .model
            .rnn
            .as_ref()
            .ok_or_else(|| Error::Internal("ST-RNN step without layers".into()))?;
        rnn.run(self.tape, &self.model.store, seq, self.dropout_rng.as_deref_mut())
    }

    fn head(&mut self, x: Var) -> Result<Var> {
        self.tape.log_softmax(x)
    }
}
