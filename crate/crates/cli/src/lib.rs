//! Netlist language, CSV/JSON formats and the `cfamp` command line on top
//! of `cfamp-core`.

pub mod cli;
pub mod data;
pub mod netlist;
pub mod report;

pub use cli::run;
pub use netlist::{parse_netlist, parse_netlist_bytes, serialize_netlist, Diagnostic, Diagnostics, NetlistDocument};
