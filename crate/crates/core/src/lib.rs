//! Simulation and verification toolkit for the regularized Hastings-Levitov
//! growth model HL(alpha), `0 <= alpha < 2`.
//!
//! Clusters are built by composing explicit particle maps of the exterior
//! disk; the crate measures how the capacity-rescaled cluster approaches a
//! disk and the statistics of its Gaussian fluctuation field.

pub mod angles;
pub mod cluster;
pub mod conformal;
pub mod error;
pub mod schedule;
pub mod spectral;
pub mod stats;

pub use cluster::{ClusterRealization, FieldSample};
pub use conformal::{ComplexPoint, ParticleFamily, SingleParticleMap};
pub use error::{Error, Result};
pub use schedule::{CapacitySchedule, ScheduleParams};
