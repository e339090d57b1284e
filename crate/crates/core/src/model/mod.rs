//! Architecture variants: configuration, layer plan, analytic complexity, and
//! the differentiable network.

pub mod config;
pub mod exec;
pub mod network;
pub mod plan;

pub use config::{named_variants, Backbone, ModelConfig, Ratio, ScnnLocation, DEFAULT_K, FULL_HW};
pub use exec::{analyse, run, Exec, ShapeExec, TraceRow};
pub use network::Model;
pub use plan::{Plan, RnnPlan, Step};

use crate::error::Result;

/// Learnable-parameter count and multiply-accumulates of one forward pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ComplexityReport {
    pub params: usize,
    pub macs: u64,
}

/// Exact parameter count without allocating the weights.
pub fn count_params(config: &ModelConfig) -> Result<usize> {
    Ok(Plan::new(config)?.param_count())
}

/// MACs of one sample at `input_hw`: K encoder passes, the ST-RNN over K
/// steps, one decoder pass. Only convolution-like work is counted.
pub fn count_macs(config: &ModelConfig, input_hw: (usize, usize)) -> Result<u64> {
    let mut cfg = config.clone();
    cfg.input_hw = input_hw;
    Ok(analyse(&Plan::new(&cfg)?)?.macs)
}

pub fn complexity(config: &ModelConfig) -> Result<ComplexityReport> {
    Ok(ComplexityReport {
        params: count_params(config)?,
        macs: count_macs(config, config.input_hw)?,
    })
}

/// Per-layer input/output dims of one sample at the configured geometry.
pub fn shape_trace(config: &ModelConfig) -> Result<Vec<TraceRow>> {
    Ok(analyse(&Plan::new(config)?)?.trace)
}
