//! Simulation engine for finite-time bit reset in driven Markovian systems
//! with detailed balance: exact work/heat/entropy accounting, bit-level
//! coarse-graining, and numerical verification of the finite-time reset
//! bounds at desk scale.

pub mod accounting;
pub mod bounds;
pub mod coarse;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod fokker_planck;
pub mod landscape;
pub mod selftest;
pub mod simplex;

pub use accounting::{ledger, penalty_equality_residual, ThermoLedger};
pub use bounds::{BoundRecord, BoundsReport};
pub use coarse::{BitPartition, CoarseTrace};
pub use dynamics::{integrate_master_equation, PartialSwap, RateMatrix, RateModel, Trajectory};
pub use error::{CoreError, Result};
pub use landscape::{
    constant_shifting_schedule, quasistatic_work, thermal_state, EnergyLandscape,
    ProtocolSchedule, ThermalState,
};
pub use simplex::{BinaryDistribution, Distribution};
