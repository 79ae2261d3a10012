//! Range-based sensor network localization posed as a potential game and
//! solved through its canonical dual.

pub mod certify;
pub mod dual;
pub mod error;
pub mod game;
pub mod gradcheck;
pub mod instance;
pub mod io;
pub mod network;
pub mod projection;
pub mod solver;

pub use certify::{Certificate, ErrorReport, Verdict};
pub use dual::{DualVariable, GroundedLaplacian, XiVector};
pub use error::{Error, Result};
pub use game::StrategyProfile;
pub use instance::{AxisBox, Instance};
pub use network::{Edge, EdgeKind, EdgeSet, NodeId, NodeKind, SensorNetwork};
pub use io::{ResultDocument, ScenarioDocument};
pub use solver::{SaddleSolution, SaddleTrace, SolveStatus, SolverConfig, StopRule};
