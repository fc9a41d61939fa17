//! Cascading KV cache for sliding-window attention.
//!
//! A fixed-size cache is split into N circular sub-caches with exponentially
//! thinning acceptance rates; tokens carry an EMA of the attention mass they
//! receive, and at sub-cache boundaries the lower-scoring token is the one
//! discarded. The crate also ships the chunked (strided) prefill path that
//! feeds the cache, positional re-indexing, synthetic retention workloads,
//! mask reconstruction, and the reference oracles everything is verified
//! against.
//!
//! All numeric code is generic over [`scalar::Scalar`] (`f32` or `f64`);
//! the aliases below pin the two concrete instantiations.

pub mod attention;
pub mod cascade;
pub mod mask;
pub mod mat;
pub mod oracles;
pub mod prefill;
pub mod ring;
pub mod rope;
pub mod scalar;
pub mod trace;
pub mod workloads;

pub use attention::{AttentionParams, HeadCaches};
pub use cascade::{CascadeCache, CascadeConfig, HeadPolicy, HeadReduction};
pub use mat::Mat;
pub use ring::{CacheEntry, RingStore};
pub use scalar::Scalar;
pub use trace::{EvictionTrace, TraceEvent, TraceEventKind};

/// Single-precision production instantiations.
pub type Mat32 = mat::Mat<f32>;
pub type RingStore32 = ring::RingStore<f32>;
pub type CascadeCache32 = cascade::CascadeCache<f32>;
pub type HeadCaches32 = attention::HeadCaches<f32>;

/// Double-precision oracle instantiations.
pub type Mat64 = mat::Mat<f64>;
pub type RingStore64 = ring::RingStore<f64>;
pub type CascadeCache64 = cascade::CascadeCache<f64>;
pub type HeadCaches64 = attention::HeadCaches<f64>;
