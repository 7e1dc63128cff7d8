//! Problem factories: random strongly monotone AVIs and the crossroad game.

mod crossroad;
mod random;

pub use random::{random_avi, random_avi_with_witness, RandomAvi, RANDOM_AVI_SHIFT};
pub use crossroad::{
    build_crossroad, default_15_vehicle_spec, read_distance_velocity_csv,
    write_distance_velocity_csv, ConflictTable, Crossroad, CrossroadParams, CrossroadSpec,
    DistanceVelocityRow, DEFAULT_DIRECTIONS,
};
