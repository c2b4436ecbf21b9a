//! SmellHunter core: the SmellDSL toolchain, input parsing, the event bus and
//! the three pipeline services (validation, interpretation, persistence).

pub mod bus;
pub mod dsl;
pub mod inputs;
pub mod interpretation;
pub mod persistence;
pub mod pipeline;
pub mod samples;
pub mod validation;
