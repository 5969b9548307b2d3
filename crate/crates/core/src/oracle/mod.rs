//! Independent reference computations used by the oracle suites and tests.

pub mod quadrature;
