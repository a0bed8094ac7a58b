pub mod imgcore;
pub mod transfer;
pub mod config;
pub mod seed;
pub mod synth;
pub mod metrics;
pub mod dove;
pub mod btrank;
pub mod review;
pub mod cli;
