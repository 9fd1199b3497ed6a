//! Generative Datalog with probabilistic chase, outcome enumeration and
//! constraint-based inference.

pub mod analysis;
pub mod chase;
pub mod dist;
pub mod enumerate;
pub mod error;
pub mod json;
pub mod model;
pub mod parser;
pub mod ppdl;
pub mod translate;
pub mod validate;

pub use dist::{Distribution, Registry, RngStream};
pub use error::{Error, Result};
pub use model::{Constant, Fact, Instance, Program};
pub use parser::{parse_fact, parse_facts, parse_program};
