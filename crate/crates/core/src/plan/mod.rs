//! Voxel traversability map, distance transform, A* path extraction and
//! rectangular-tunnel corridors.

mod astar;
mod corridor;
mod distance;
mod grid;
mod path;

pub use astar::{astar, counts_cost, step_counts, traversable, GridPath};
pub use corridor::{box_samples, corridor_contains, frame_for, grow_corridor, CorridorBox, CorridorOptions, CONTAINS_TOL};
pub use distance::{distance_transform, DistanceField};
pub use grid::{Voxel, VoxelGrid};
pub use path::{extract_path, segment_clear, PathOptions, Polyline};
