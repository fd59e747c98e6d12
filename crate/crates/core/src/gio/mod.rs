//! Dataset I/O: g2o graphs, outlier injection, trajectories and synthetic data.

pub mod corrupt;
pub mod g2o;
pub mod synthetic;
pub mod trajectory;

pub use corrupt::{inject_outliers, inject_outliers_any, CorruptionSpec, RandomPose};
pub use g2o::{format_number, parse_g2o, parse_g2o_with, write_any, write_g2o, Classification, G2oPose, ParseOptions};
pub use synthetic::{manhattan, ManhattanConfig, SyntheticDataset};
pub use trajectory::{export_trajectory, parse_tum, TrajectoryFormat};
