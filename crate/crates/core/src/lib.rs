//! Clio: a floating-label information-flow runtime whose persistent store is
//! protected by label-directed encryption and signatures.

pub mod backend;
pub mod calculus;
pub mod crypto;
pub mod harness;
pub mod ideal;
pub mod label;
pub mod runtime;
pub mod store;
