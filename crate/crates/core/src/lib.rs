//! Modal simulation and active vibration control of a flexible clamped-free
//! appendage instrumented with piezoelectric patches.

mod error;
pub mod metrics;
pub mod modal;
pub mod narx;
pub mod nmpc;
pub mod pd;
pub mod plant;
pub mod pzt;
pub mod qp;
pub mod quadrature;
mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

pub type BeamProperties64 = modal::BeamProperties<f64>;
pub type ModeBasis64 = modal::ModeBasis<f64>;
pub type ModalSystem64 = modal::ModalSystem<f64>;
pub type PztPatch64 = pzt::PztPatch<f64>;
pub type PztArray64 = pzt::PztArray<f64>;
pub type Plant64 = plant::Plant<f64>;
pub type PlantState64 = plant::PlantState<f64>;
pub type Trajectory64 = plant::Trajectory<f64>;
pub type QpProblem64 = qp::QpProblem<f64>;
pub type DiscreteModel64 = nmpc::DiscreteModel<f64>;
pub type NmpcController64 = nmpc::NmpcController<f64>;
pub type PdController64 = pd::PdController<f64>;
pub type NarxNet64 = narx::NarxNet<f64>;
pub type NarxController64 = narx::NarxController<f64>;

pub type ModalSystem32 = modal::ModalSystem<f32>;
pub type Plant32 = plant::Plant<f32>;
pub type NarxNet32 = narx::NarxNet<f32>;
