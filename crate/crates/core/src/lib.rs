//! Scalar majorant equations for vector delay systems.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod auxiliary;
pub mod commands;
pub mod comparison;
pub mod dde;
pub mod func;
pub mod fundamental;
pub mod nonlinearity;
pub mod region;
pub mod scenarios;
pub mod system;
