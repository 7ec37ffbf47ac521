//! Energy-balanced client selection for federated learning over heterogeneous
//! mobile-edge fleets.
//!
//! The crate is organised bottom-up:
//!
//! - [`device`]: hardware profiles, per-device latency/energy models, fleet sampling.
//! - [`alloc`]: per-round bandwidth allocation (closed form and an SQP solver).
//! - [`selection`]: ideal-energy clustering and the discounted efficiency heuristic.
//! - [`fl`]: desk-scale federated averaging (synthetic data, logistic regression).
//! - [`agent`]: Q-network scheduler with replay, target network and imitation warm start.
//! - [`harness`]: experiment orchestration, policies, metrics and output files.

pub mod agent;
pub mod alloc;
pub mod device;
pub mod error;
pub mod fl;
pub mod harness;
pub mod rng;
pub mod selection;

pub use error::{Error, Result};
