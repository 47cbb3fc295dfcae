pub mod error;
pub mod experiment;
pub mod game;
pub mod games;
pub mod linalg;
pub mod output;
pub mod planner;
pub mod properties;
pub mod solver;
pub mod ttsa;
