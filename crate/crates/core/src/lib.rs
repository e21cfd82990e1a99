pub mod continuation;
pub mod control;
pub mod numkit;
pub mod ode;
pub mod plant;
pub mod signal;

pub use continuation::{
    continue_branch, open_loop_sweep, Branch, BranchPoint, CbcContext, ChartSettings,
    ExperimentProtocol, PlantFactory, UnknownVector,
};
pub use control::{
    assemble_closed_loop, run_closed_loop, ClosedLoop, ClosedLoopRun, Controller, MracParams,
    ProjectionSettings, Reference, RunSettings,
};
pub use numkit::RealMatrix;
pub use ode::{IntegratorConfig, Trajectory};
pub use plant::{PlantView, ScalarPlant, StructuredPlant};
pub use signal::{FourierSeries, VectorFourierSeries};
