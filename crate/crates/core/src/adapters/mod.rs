//! Test-time adaptation methods, the replay buffer and single-sample mode.

mod adapter;
mod config;
mod objective;
mod replay;
mod window;

pub use adapter::{Adapter, StepLog, StepOutput};
pub use config::{AdapterConfig, Method};
pub use objective::{rmt_objective, RmtInputs, RmtObjective};
pub use replay::ReplayBuffer;
pub use window::{WindowAdapter, WindowOutput};
