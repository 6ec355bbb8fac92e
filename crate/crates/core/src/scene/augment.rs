use super::features::{build_scene_graph, SceneGraph};
use super::geometry::{rotate_box, rotate_direction, rotate_point, rotate_size};
use super::types::{FurnitureNode, RoomLayout, RoomNode};
use crate::error::{Error, Result};

fn rotate_room_nodes(nodes: &[RoomNode], pivot: &[f64; 3], k: u32) -> Vec<RoomNode> {
    nodes
        .iter()
        .map(|n| {
            let (lo, hi) = rotate_box(&n.bbox_min, &n.bbox_max, pivot, k);
            RoomNode {
                kind: n.kind,
                bbox_min: lo,
                bbox_max: hi,
                normal: rotate_direction(&n.normal, k),
            }
        })
        .collect()
}

/// Rotates the whole scene by `quarter_turns × 90°` about the vertical axis
/// through the floor centroid and recomputes all edge features.
pub fn rotate_scene(scene: &SceneGraph, quarter_turns: u32) -> Result<SceneGraph> {
    if quarter_turns > 3 {
        return Err(Error::Validation(format!(
            "quarter_turns must be in 0..=3, got {quarter_turns}"
        )));
    }
    if quarter_turns == 0 {
        return Ok(scene.clone());
    }
    let pivot = scene.layout().pivot();
    let k = quarter_turns;
    let furniture = scene
        .furniture
        .iter()
        .map(|f| FurnitureNode {
            location: rotate_point(&f.location, &pivot, k),
            orientation: rotate_direction(&f.orientation, k),
            size: rotate_size(&f.size, k),
            ..f.clone()
        })
        .collect();
    build_scene_graph(
        scene.room_type,
        rotate_room_nodes(&scene.room_nodes, &pivot, k),
        furniture,
    )
}

pub fn rotate_layout(layout: &RoomLayout, quarter_turns: u32) -> RoomLayout {
    let pivot = layout.pivot();
    RoomLayout {
        room_type: layout.room_type,
        room_nodes: rotate_room_nodes(&layout.room_nodes, &pivot, quarter_turns % 4),
    }
}
