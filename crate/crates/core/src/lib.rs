//! Configuration-driven AutoML orchestration.
//!
//! The crate is organized bottom-up:
//!
//! - [`space`]: the search-space description language (typed parameters and
//!   an activation-condition DAG).
//! - [`sampler`]: the cast/encode/decode pipeline between typed values and
//!   the unit cube.
//! - [`netdesc`]: framework-independent model descriptions, name binding,
//!   supernet selection, the DNet block grammar and cost estimates.
//! - [`search`]: random search, ASHA, BOHB-lite and Pareto evolutionary search.
//! - [`dispatch`]: the master/worker trial queue, wire protocol and evaluators.
//! - [`pipeline`]: config loading, pipe steps, reports.

pub mod dispatch;
pub mod netdesc;
pub mod pipeline;
pub mod sampler;
pub mod search;
pub mod space;
pub mod value;
pub mod yaml;
