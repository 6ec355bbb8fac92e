//! Attributed scene graphs: data model, feature engineering, corpus I/O,
//! augmentation and a synthetic corpus generator.

mod augment;
mod features;
mod geometry;
mod io;
mod synthetic;
mod types;

pub use augment::{rotate_layout, rotate_scene};
pub use features::{
    bbox_corner_distance, build_scene_graph, furniture_dim, room_features, room_room_features,
    EdgeFeatures, SceneGraph, D_FF, D_RF, D_ROOM, D_RR,
};
pub use geometry::{
    discretize_orientation, room_point_distance, signed_wall_distance, wall_inward_axis,
    OrientationClass, Segment2,
};
pub use io::{
    load_corpus, load_room, load_shape_db, parse_corpus, parse_room, parse_shape_db,
    room_to_json, scene_to_json, shape_db_to_json, write_corpus, write_scene, write_shape_db,
    SceneRecord, SCHEMA_VERSION,
};
pub use synthetic::{generate_synthetic_corpus, DEFAULT_D_SHAPE};
pub use types::{
    dist, dot, norm, FurnitureNode, RoomLayout, RoomNode, RoomNodeKind, RoomType, ShapeDatabase,
    ShapeEntry, SuperCategory, Vec3,
};
