//! File formats: PFM float maps, binary PLY point clouds, 8-bit PNG images
//! and TUM-style trajectory text.

pub mod pfm;
pub mod ply;
pub mod png;
pub mod tum;

pub use self::pfm::{read_pfm, write_pfm, Pfm};
pub use self::ply::{read_ply, write_ply, PointCloud};
pub use self::png::{read_png, write_png};
pub use self::tum::Trajectory;
