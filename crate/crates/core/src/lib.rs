pub mod divergence;
pub mod error;
pub mod families;
pub mod estimators;
pub mod reduction;
pub mod bounds;
pub mod harness;
