//! Command-line harness for the cascading KV cache: retention simulations,
//! oracle verification, latency microbenchmarks, and mask visualization.

pub mod bench;
pub mod concat;
pub mod config;
pub mod simulate;
pub mod span;
pub mod timing;
pub mod verify;
pub mod viz;
