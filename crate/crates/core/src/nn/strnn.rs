use rand::Rng;

use super::convgru::ConvGruCell;
use super::convlstm::ConvLstmCell;
use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tape::{Tape, Var};
use crate::tensor::{Scalar, Shape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CellKind {
    ConvLstm,
    ConvGru,
}

/// Recurrent state on a tape. `c` is present only for ConvLSTM.
#[derive(Clone, Copy, Debug)]
pub struct RnnState {
    pub h: Var,
    pub c: Option<Var>,
}

impl RnnState {
    pub fn zeros<T: Scalar>(tape: &mut Tape<T>, kind: CellKind, shape: Shape) -> Self {
        let h = tape.constant(Tensor::zeros(shape));
        let c = match kind {
            CellKind::ConvLstm => Some(tape.constant(Tensor::zeros(shape))),
            CellKind::ConvGru => None,
        };
        RnnState { h, c }
    }
}

#[derive(Clone, Debug)]
pub enum Cell {
    Lstm(ConvLstmCell),
    Gru(ConvGruCell),
}

impl Cell {
    pub fn hidden(&self) -> usize {
        match self {
            Cell::Lstm(c) => c.hidden,
            Cell::Gru(c) => c.hidden,
        }
    }

    fn kind(&self) -> CellKind {
        match self {
            Cell::Lstm(_) => CellKind::ConvLstm,
            Cell::Gru(_) => CellKind::ConvGru,
        }
    }
}

/// Stacked ConvLSTM/ConvGRU layers run sequence-to-one.
#[derive(Clone, Debug)]
pub struct StRnn {
    pub kind: CellKind,
    pub layers: Vec<Cell>,
}

impl StRnn {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        prefix: &str,
        kind: CellKind,
        num_layers: usize,
        input_ch: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if !(1..=2).contains(&num_layers) {
            return Err(Error::config(format!("ST-RNN supports 1 or 2 layers, got {num_layers}")));
        }
        let mut layers = Vec::with_capacity(num_layers);
        for l in 0..num_layers {
            let name = format!("{prefix}.layer{}", l + 1);
            let in_ch = if l == 0 { input_ch } else { hidden };
            layers.push(match kind {
                CellKind::ConvLstm => Cell::Lstm(ConvLstmCell::new(store, &name, in_ch, hidden, rng)?),
                CellKind::ConvGru => Cell::Gru(ConvGruCell::new(
                    store,
                    &name,
                    in_ch,
                    hidden,
                    ConvGruCell::DEFAULT_DROPOUT,
                    rng,
                )?),
            });
        }
        Ok(StRnn { kind, layers })
    }

    pub fn hidden(&self) -> usize {
        self.layers[0].hidden()
    }

    pub fn param_count(kind: CellKind, num_layers: usize, input_ch: usize, hidden: usize) -> usize {
        (0..num_layers)
            .map(|l| {
                let in_ch = if l == 0 { input_ch } else { hidden };
                match kind {
                    CellKind::ConvLstm => ConvLstmCell::param_count(in_ch, hidden),
                    CellKind::ConvGru => ConvGruCell::param_count(in_ch, hidden),
                }
            })
            .sum()
    }

    /// MACs for a `steps`-long sequence on an `h × w` grid.
    pub fn macs(kind: CellKind, num_layers: usize, input_ch: usize, hidden: usize, h: usize, w: usize, steps: usize) -> u64 {
        (0..num_layers)
            .map(|l| {
                let in_ch = if l == 0 { input_ch } else { hidden };
                let per = match kind {
                    CellKind::ConvLstm => ConvLstmCell::macs_per_step(in_ch, hidden, h, w),
                    CellKind::ConvGru => ConvGruCell::macs_per_step(in_ch, hidden, h, w),
                };
                per * steps as u64
            })
            .sum()
    }

    /// Runs every layer over the whole sequence from a zero state and returns the
    /// last layer's final hidden state. `dropout_rng` enables training mode.
    pub fn run<T: Scalar, R: Rng>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        seq: &[Var],
        mut dropout_rng: Option<&mut R>,
    ) -> Result<Var> {
        let first = *seq
            .first()
            .ok_or_else(|| Error::usage("ST-RNN needs at least one time step"))?;
        let fs = tape.shape(first);
        if seq.iter().any(|&v| tape.shape(v) != fs) {
            return Err(Error::config("ST-RNN inputs must share one shape"));
        }
        let mut inputs = seq.to_vec();
        for cell in &self.layers {
            let state_shape = fs.with_c(cell.hidden());
            let mut state = RnnState::zeros(tape, cell.kind(), state_shape);
            let mut outputs = Vec::with_capacity(inputs.len());
            for &x in &inputs {
                state = match cell {
                    Cell::Lstm(c) => c.step(tape, store, x, &state)?,
                    Cell::Gru(c) => c.step(tape, store, x, &state, dropout_rng.as_deref_mut())?,
                };
                outputs.push(state.h);
            }
            inputs = outputs;
        }
        Ok(*inputs.last().expect("non-empty sequence"))
    }
}
