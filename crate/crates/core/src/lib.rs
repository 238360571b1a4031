//! Geometric substrate for wide field-of-view multi-view reconstruction.
//!
//! The crate covers camera models (pinhole, Kannala-Brandt fisheye,
//! equirectangular), spherical-harmonics ray fields, scale-invariant point
//! map alignment, training losses with analytic gradients, evaluation
//! metrics, wide-FoV augmentations, distance-softmax view sampling and an
//! analytic box-scene generator used as ground truth throughout.
//!
//! Data-parallel loops go through [`par`]; with the default `parallel`
//! feature they run on rayon, otherwise sequentially. Reductions are
//! order-fixed so results do not depend on the thread count.

pub mod align;
pub mod augment;
pub mod camera;
pub mod error;
pub mod geometry;
pub mod io;
pub mod loss;
pub mod metrics;
pub mod oracle;
pub mod par;
pub mod sampler;
pub mod shray;
pub mod spatial;

pub use error::{Error, Result};
pub use geometry::{Image, NormalMap, PointMap, Pose, RadialMap, RayField, ScalarMap, UncertaintyMap, Vec3};
