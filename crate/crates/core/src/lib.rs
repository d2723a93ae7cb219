pub mod graph;
pub mod estimators;
pub mod linalg;
pub mod simulator;
pub mod montecarlo;
pub mod pattern;
pub mod multimode;
pub mod prediction;
pub mod pipeline;
pub mod config;
pub mod io;
pub mod plot;
pub mod scenario;
pub mod cli;
