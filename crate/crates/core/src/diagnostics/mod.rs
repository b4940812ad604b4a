//! Desk-scale diagnostics: the multimodal-vs-uni-modal pilot study and the
//! shared-gradient ("bridge") experiment.

mod bridge;
mod pilot;

pub use bridge::{run_bridge_experiment, BridgeConfig, BridgeStep, BridgeTrace};
pub use pilot::{run_pilot, PilotResult, PilotRun, PilotTrace};

use std::fmt::Write;

/// Long-format CSV: `<index_name>,label,value`.
pub(crate) fn long_csv<'a>(index_name: &str, rows: impl Iterator<Item = (usize, String, f64)> + 'a) -> String {
    let mut out = format!("{index_name},label,value\n");
    for (i, label, v) in rows {
        writeln!(out, "{i},{label},{v}").unwrap();
    }
    out
}
