//! Construction of reduced-order models, quadratic simulation functions
//! and interface functions for unknown disturbed discrete-time linear
//! systems, directly from a single noisy input--state trajectory.
//!
//! The pipeline: collect data ([`data`]), assemble and solve the
//! synthesis program ([`sdp`]), extract the certified quantities
//! ([`certificate`]), then refine reduced-model controllers back to the
//! plant and check the trajectory-wise closeness bound ([`refinement`]).

pub mod data;
pub mod error;
pub mod jsonmat;
pub mod linalg;
pub mod sdp;
pub mod system;

pub use error::{Error, Result};

// Links the system BLAS/LAPACK used by the SDP solver backend.
use openblas_src as _;
