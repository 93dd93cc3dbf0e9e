//! Synthetic data with known ground truth: the bullseye distributions, their
//! exact mutual information, DAG-driven generation and d-separation.

mod bullseye;
mod dag;
mod gaussian;
mod oracle;

pub use bullseye::{gen_bullseye_2d, Bullseye2d, BullseyeConfig, Rings};
pub use dag::{d_separated, gen_bullseye_dag, DagSpec, Node};
pub use gaussian::{gaussian_chain, gaussian_pair};
pub use oracle::{mi_oracle_bullseye, output_density, output_entropy};

#[cfg(test)]
mod tests;
