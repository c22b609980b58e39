//! Near-miss crash risk estimation from vehicle trajectories.
//!
//! Trajectories are turned into pairwise time-to-collision series, each
//! pair's minimum becomes a block maximum of `X = −TTC`, and Bayesian GEV
//! models of those maxima yield crash risk and near-miss frequencies.

pub mod bayes;
pub mod conflict;
pub mod gev;
pub mod model;
pub mod risk;
pub mod roots;
pub mod synth;
pub mod trajectory;
pub mod ttc;
