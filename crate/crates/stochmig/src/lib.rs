//! Stochastic-factor ordered-probit model of credit rating migrations:
//! simulation, expected migration matrices, composite likelihood
//! estimation, HAC inference and Monte-Carlo batteries.

// negated float comparisons are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod battery;
pub mod cli;
pub mod config;
pub mod design;
pub mod error;
pub mod estimator;
pub mod hac;
pub mod io;
pub mod kernel;
pub mod likelihood;
pub mod normal;
pub mod optim;
pub mod params;
pub mod quadrature;
pub mod risk;
pub mod rng;
pub mod simulate;
