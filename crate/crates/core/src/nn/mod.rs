//! Learnable layers: plain convolutions, SCNN message passing, and the ConvLSTM /
//! ConvGRU cells stacked into the ST-RNN block.

pub mod conv;
pub mod convgru;
pub mod convlstm;
pub mod scnn;
pub mod strnn;

pub use conv::Conv2d;
pub use convgru::ConvGruCell;
pub use convlstm::ConvLstmCell;
pub use scnn::{Direction, ScnnBlock};
pub use strnn::{Cell, CellKind, RnnState, StRnn};
