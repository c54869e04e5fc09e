//! Segmentation-guided fitting of an articulated body model to labeled,
//! partial point clouds.
//!
//! The pipeline is: per-part centroids of the labeled scan give a rigid and
//! coarse articulated initialization ([`initreg`]), a robust part-restricted
//! one-sided Chamfer objective is minimized with Adam ([`fit`]), and the fitted
//! mesh is used to re-vote per-point part labels ([`seglab`]). [`synth`]
//! produces ground-truth scans for verification and [`eval`] computes the
//! metrics and experiment tables.

pub mod cloud;
pub mod error;
pub mod eval;
pub mod fit;
pub mod geom;
pub mod initreg;
pub mod io;
pub mod model;
pub mod par;
pub mod seglab;
pub mod synth;

pub use cloud::{LabeledPointCloud, PartId, BACKGROUND};
pub use error::{Error, Result};
pub use fit::{FitConfig, FitResult, Variant};
pub use geom::{Point3, RigidTransform};
pub use model::{BodyParams, RiggedTemplate};
pub use par::Execution;
