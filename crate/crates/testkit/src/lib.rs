//! Random instances and independent brute-force oracles for the learning,
//! planning, selection and sampler test suites.

pub mod gaussian;
pub mod learning;
pub mod planning;
pub mod selection;
