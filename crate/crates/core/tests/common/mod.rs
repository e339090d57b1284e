#![allow(dead_code)]

pub mod oracles;
pub mod tables;

use stlane::model::{shape_trace, ModelConfig, TraceRow};

/// Compares the last frame's encoder rows followed by the ST-RNN and decoder
/// rows against a transcribed table. Earlier frames must repeat the last
/// frame's encoder rows exactly.
pub fn audit(cfg: &ModelConfig, expected: &[(&str, tables::Dims, tables::Dims)]) -> Result<usize, String> {
    let trace = shape_trace(cfg).map_err(|e| e.to_string())?;
    let k = cfg.frames();
    let frame_rows = |f: usize| -> Vec<&TraceRow> { trace.iter().filter(|r| r.frame == Some(f)).collect() };
    let last = frame_rows(k - 1);
    for f in 0..k - 1 {
        let rows = frame_rows(f);
        let same = rows.len() == last.len()
            && rows.iter().zip(&last).all(|(a, b)| (&a.layer, a.input, a.output) == (&b.layer, b.input, b.output));
        if !same {
            return Err(format!("frame {f} encoder trace differs from the last frame"));
        }
    }
    let got: Vec<&TraceRow> = last.into_iter().chain(trace.iter().filter(|r| r.frame.is_none())).collect();
    if got.len() != expected.len() {
        let names: Vec<&str> = got.iter().map(|r| r.layer.as_str()).collect();
        return Err(format!("{} rows traced, {} expected: {names:?}", got.len(), expected.len()));
    }
    for (row, &(name, input, output)) in got.iter().zip(expected) {
        if (row.layer.as_str(), row.input, row.output) != (name, input, output) {
            return Err(format!(
                "row {} {:?}->{:?}, expected {name} {input:?}->{output:?}",
                row.layer, row.input, row.output
            ));
        }
    }
    Ok(expected.len())
}
