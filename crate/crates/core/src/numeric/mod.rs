//! Numerical building blocks shared by the moment, characteristic-function
//! and quantile code.

pub mod format;
pub mod normal;
pub mod quadrature;
pub mod summation;
