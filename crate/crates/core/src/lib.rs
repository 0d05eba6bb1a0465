//! Safe backstepping control by constraint lifting.
//!
//! Each state component constrained to `|xᵢ| < bᵢ` is mapped through an
//! inverse sigmoid onto the whole real line. The control law is designed in
//! the lifted coordinates, where the constraint disappears, and uses the
//! integral of the sigmoid as the second-stage Lyapunov term.
//!
//! ```
//! use nalgebra::vector;
//! use sigmalift::{Bounds, ControllerConfig, DoubleIntegrator, LiftConfig, LiftedDynamics, SigmoidFamily};
//!
//! let unit = Bounds::new(vector![1.0]).unwrap();
//! let lifted = LiftedDynamics::new(
//!     DoubleIntegrator,
//!     LiftConfig::uniform(unit, SigmoidFamily::Identity),
//!     LiftConfig::uniform(unit, SigmoidFamily::Atanh),
//! );
//! let cc = ControllerConfig::new(&lifted, 1.0, vector![0.5]).unwrap();
//! let u = cc.control(&lifted, &cc.z1d, &vector![0.0]).unwrap();
//! assert_eq!(u, vector![0.0]);
//! ```

// Range checks are written `!(x < b)` so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod controller;
pub mod error;
pub mod exec;
pub mod lifting;
pub mod linalg;
pub mod plant;
pub mod quad;
pub mod sigmoid;
pub mod sim;
pub mod studies;

pub use controller::{ControlRecord, ControllerConfig, GainReport};
pub use error::{Error, Result, StateBlock};
pub use exec::Execution;
pub use lifting::{Bounds, LiftConfig, Matrix, Vector};
pub use plant::{
    builtin_attitude, builtin_double_integrator, check_assumptions, Attitude, AuditReport,
    DoubleIntegrator, LiftedDynamics, LiftedState, Plant,
};
pub use sigmoid::{list_families, FamilyInfo, SigmoidFamily};
pub use sim::{
    monitor, monte_carlo, monte_carlo_with, simulate, simulate_lifted, Gains, IntegratorConfig,
    Method, MonitorReport, MonteCarloConfig, MonteCarloSummary, Trajectory,
};
