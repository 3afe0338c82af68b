//! Coupled channel-flow and micro-swarm simulator with a multi-objective
//! multi-agent PPO trainer.

pub mod baseline;
pub mod config;
pub mod env;
pub mod flow;
pub mod io;
pub mod nn;
pub mod pcgrad;
pub mod policy;
pub mod rollout;
pub mod swarm;
pub mod trainer;
pub mod vec2;
