//! Discrete-time simulator of reader-driven inventory of batteryless
//! ambient-IoT devices.
//!
//! Devices harvest RF energy into a small capacitor and either stay on while
//! their stored energy allows ([`Mechanism::Em`]) or synchronize to the paging
//! grid and duty-cycle their receiver ([`Mechanism::Dcm`]). A single reader
//! runs contention-based random access with a backlog-driven access
//! probability. [`run`] simulates one [`Scenario`] and returns a [`SimResult`].

pub mod channel;
pub mod device;
pub mod energy;
pub mod engine;
pub mod error;
pub mod metrics;
pub mod reader;
pub mod scenario;

pub use channel::{LayoutConfig, MessageErrorConfig, PathLossModel};
pub use device::{DeviceId, DeviceState, Mechanism, StateKind};
pub use energy::{EfficiencyMode, EnergyStorage, PowerProfile};
pub use engine::{run, run_with, RunOptions, SlotClock, World};
pub use error::{Error, Result, Violation};
pub use metrics::{
    completion_quantile, sweep_csv, EventKind, EventRecord, LogLevel, Payload, ProgressPoint,
    SimResult, Summary,
};
pub use reader::{AoIndex, RoundTiming};
pub use scenario::{validate_scenario, DeviceProfile, Scenario, ScenarioFile, PRESETS};
