//! Garbled-circuit compilation and accelerator co-simulation toolkit.

pub mod accelsim;
pub mod circuitgen;
pub mod fixed;
pub mod garble;
pub mod netlist;
pub mod protocol;
pub mod scheduler;
pub mod speculator;
