//! Power-of-d load balancing in many-server heavy traffic.
//!
//! * [`config`], [`state`], [`regime`]: instances, occupancy vectors and
//!   the `d`/`m` coupling.
//! * [`ctmc`]: exact simulation and stationary solves of the occupancy chain.
//! * [`fluid`]: the mean-field ODE and its fixed points.
//! * [`bounds`]: concentration bands and their violation exponents.
//! * [`lyapunov`]: drift of state functions, the Lyapunov catalog, drift
//!   scans, tail bounds and Taylor-inequality checks.
//! * [`stats`]: steady-state estimation from simulated paths.

pub mod bounds;
pub mod config;
pub mod ctmc;
pub mod error;
pub mod fluid;
pub mod lyapunov;
pub mod regime;
pub mod rng;
pub mod state;
pub mod stats;

pub use config::{ConfigFile, Rounding, SystemConfig};
pub use error::{Error, Result};
pub use regime::{RegimeClass, RegimeSolution};
pub use state::StateVector;
