//! CartPole control with a population of DQN learners whose learning rate,
//! exploration decay and batch size are tuned by truncation selection.

pub mod dqn;
pub mod env;
pub mod net;
pub mod pbt;
pub mod replay;

pub use dqn::{dqn_update, epsilon};
pub use env::{env_step, CartPole, CartPoleState, Physics};
pub use net::{Adam, Mlp};
pub use pbt::{run_cartpole_pbt, CartpoleConfig, CartpoleRecord, CartpoleRun, DqnAgent};
pub use replay::{ReplayBuffer, Transition};
