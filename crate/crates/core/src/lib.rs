#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Separating menus of statistical contracts: construction, verification
//! and evaluation for principals screening agents with private prior-null
//! probabilities.

pub mod builders;
pub mod contracts;
pub mod error;
pub mod evaluation;
pub mod normal;
pub mod objectives;
pub mod quadrature;
pub mod sensitivity;
pub mod test_model;

pub use contracts::{Contract, Menu, SelectionOutcome};
pub use error::{Error, Result};
pub use objectives::{PrincipalObjective, TypePopulation};
pub use test_model::TestModel;
