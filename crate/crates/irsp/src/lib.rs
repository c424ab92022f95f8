pub use nalgebra;

pub mod asymptotics;
pub mod inference;
pub mod network;
pub mod numerics;
pub mod schedules;
pub mod simulator;
pub mod verify;
