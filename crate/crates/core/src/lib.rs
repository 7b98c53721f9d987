//! Fuzzy-stochastic modelling of fiber-reinforced composites from
//! microstructure images.

pub mod fuzzy;
pub mod homog;
pub mod microdata;
pub mod quad;
pub mod randfield;
pub mod rng;
pub mod solver;
pub mod special;
pub mod stats;
pub mod validate;
