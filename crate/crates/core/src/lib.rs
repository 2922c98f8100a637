//! Learning, conditioning and refining striking movement primitives.
//!
//! The crate covers the full loop of a simulated striking robot: probabilistic
//! movement primitives fitted from demonstrations ([`promp`]), clipped
//! iterative IK that turns a predicted ball interception point into a
//! joint-space conditioning target ([`kinematics`]), an EKF ball tracker
//! ([`tracker`]), stroke segmentation ([`segment`]), feedback-weighted EM
//! refinement ([`refine`]), and a deterministic simulator that ties them
//! together ([`sim`]). [`io`] holds the text file formats and [`session`] the
//! state of an interactive rating session.

pub mod io;
pub mod kinematics;
pub(crate) mod linalg;
pub mod pipeline;
pub mod promp;
pub mod refine;
pub mod segment;
pub mod session;
pub mod sim;
pub mod tracker;

pub use kinematics::{IkOptions, IkResult, KinematicChain, Limits};
pub use promp::{BasisConfig, PrimitiveParams, Trajectory};
pub use refine::{EmOptions, FeedbackRecord, WeightedDataset};
pub use tracker::{BallEstimate, HitPlane, Observation};
