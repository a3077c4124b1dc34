pub mod bandwidth;
pub mod cli;
pub mod config;
pub mod data;
pub mod density;
pub mod error;
pub mod inference;
pub mod kernels;
pub mod linalg;
pub mod polyfit;
pub mod llk;
pub mod quadrature;
pub mod simulation;
