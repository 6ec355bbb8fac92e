//! Node and edge attributes of the complete scene graph.

use super::geometry::room_point_distance;
use super::types::{
    dist, dot, norm, sub, FurnitureNode, RoomLayout, RoomNode, RoomType,
    SuperCategory,
};
use crate::error::{Error, Result};

pub const D_ROOM: usize = 17;
pub const D_FF: usize = 9;
pub const D_RF: usize = 5;
pub const D_RR: usize = 4;

/// Dense `rows × cols × dim` edge tensor, row-major over `(row, col)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeFeatures {
    pub rows: usize,
    pub cols: usize,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl EdgeFeatures {
    pub fn zeros(rows: usize, cols: usize, dim: usize) -> Self {
        EdgeFeatures {
            rows,
            cols,
            dim,
            data: vec![0.0; rows * cols * dim],
        }
    }

    pub fn get(&self, r: usize, c: usize) -> &[f64] {
        let o = (r * self.cols + c) * self.dim;
        &self.data[o..o + self.dim]
    }

    fn get_mut(&mut self, r: usize, c: usize) -> &mut [f64] {
        let o = (r * self.cols + c) * self.dim;
        &mut self.data[o..o + self.dim]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Attributed complete scene graph.
///
/// Edge tensors are indexed `[receiver][sender]`: `x_ff[i][j]` describes the
/// edge from furniture `j` into furniture `i`, `x_rf[s][r]` the edge from room
/// node `s` into furniture `r`, and `x_rr[i][j]` the edge from room node `j`
/// into room node `i`. Self edges are zero and unused.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneGraph {
    pub room_type: RoomType,
    pub room_nodes: Vec<RoomNode>,
    pub furniture: Vec<FurnitureNode>,
    pub x_ff: EdgeFeatures,
    pub x_rf: EdgeFeatures,
    pub x_rr: EdgeFeatures,
}

impl SceneGraph {
    pub fn n_room(&self) -> usize {
        self.room_nodes.len()
    }

    pub fn n_furniture(&self) -> usize {
        self.furniture.len()
    }

    pub fn d_shape(&self) -> usize {
        self.furniture
            .first()
            .map(|f| f.shape_descriptor.len())
            .unwrap_or(0)
    }

    pub fn layout(&self) -> RoomLayout {
        RoomLayout {
            room_type: self.room_type,
            room_nodes: self.room_nodes.clone(),
        }
    }

    /// Row-major `n_R × 17` room node features.
    pub fn room_features(&self) -> Vec<f64> {
        room_features(self.room_type, &self.room_nodes)
    }

    /// Row-major `n_F × (7 + d_shape + 9)` furniture node features.
    pub fn furniture_features(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.furniture.len() * furniture_dim(self.d_shape()));
        for f in &self.furniture {
            let mut onehot = [0.0; SuperCategory::COUNT];
            onehot[f.super_category.index()] = 1.0;
            out.extend_from_slice(&onehot);
            out.extend_from_slice(&f.shape_descriptor);
            out.extend_from_slice(&f.location);
            out.extend_from_slice(&f.orientation);
            out.extend_from_slice(&f.size);
        }
        out
    }
}

pub fn furniture_dim(d_shape: usize) -> usize {
    SuperCategory::COUNT + d_shape + 9
}

/// `[kind one-hot | room-type one-hot | bbox_min | bbox_max | normal]` per node.
pub fn room_features(room_type: RoomType, nodes: &[RoomNode]) -> Vec<f64> {
    let mut out = Vec::with_capacity(nodes.len() * D_ROOM);
    for n in nodes {
        let mut kind = [0.0; 4];
        kind[n.kind.index()] = 1.0;
        let mut rt = [0.0; 4];
        rt[room_type.index()] = 1.0;
        out.extend_from_slice(&kind);
        out.extend_from_slice(&rt);
        out.extend_from_slice(&n.bbox_min);
        out.extend_from_slice(&n.bbox_max);
        out.extend_from_slice(&n.normal);
    }
    out
}

pub fn build_scene_graph(
    room_type: RoomType,
    room_nodes: Vec<RoomNode>,
    furniture: Vec<FurnitureNode>,
) -> Result<SceneGraph> {
    if room_nodes.is_empty() {
        return Err(Error::Validation("scene needs at least one room node".into()));
    }
    if furniture.is_empty() {
        return Err(Error::Validation(
            "scene needs at least one furniture node".into(),
        ));
    }
    for (i, n) in room_nodes.iter().enumerate() {
        n.validate()
            .map_err(|e| Error::Validation(format!("room node {i} ({:?}): {e}", n.kind)))?;
    }
    let d_shape = furniture[0].shape_descriptor.len();
    for (i, f) in furniture.iter().enumerate() {
        f.validate(Some(d_shape)).map_err(|e| {
            Error::Validation(format!("furniture node {i} ({}): {e}", f.super_category.name()))
        })?;
    }

    let x_rr = room_room_features(&room_nodes)?;
    let x_ff = furniture_furniture_features(&furniture);
    let x_rf = room_furniture_features(&room_nodes, &furniture)?;
    let g = SceneGraph {
        room_type,
        room_nodes,
        furniture,
        x_ff,
        x_rf,
        x_rr,
    };
    if !(g.x_ff.is_finite() && g.x_rf.is_finite() && g.x_rr.is_finite()) {
        return Err(Error::Validation("edge features are not finite".into()));
    }
    Ok(g)
}

fn corner_distance_range(a: &[[f64; 3]; 8], b: &[[f64; 3]; 8]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for p in a {
        for q in b {
            let d = dist(p, q);
            lo = lo.min(d);
            hi = hi.max(d);
        }
    }
    (lo, hi)
}

/// Shortest distance between the corner sets of two boxes.
pub fn bbox_corner_distance(a: &[[f64; 3]; 8], b: &[[f64; 3]; 8]) -> f64 {
    corner_distance_range(a, b).0
}

pub fn furniture_furniture_features(furniture: &[FurnitureNode]) -> EdgeFeatures {
    let n = furniture.len();
    let corners: Vec<_> = furniture.iter().map(|f| f.corners()).collect();
    let mut x = EdgeFeatures::zeros(n, n, D_FF);
    for r in 0..n {
        for s in 0..n {
            if r == s {
                continue;
            }
            let (fr, fs) = (&furniture[r], &furniture[s]);
            let delta = sub(&fs.location, &fr.location);
            let d = norm(&delta);
            let unit = if d > 0.0 {
                [delta[0] / d, delta[1] / d, delta[2] / d]
            } else {
                [0.0; 3]
            };
            let e = x.get_mut(r, s);
            e[0] = d;
            e[1] = dot(&fs.orientation, &fr.orientation);
            e[2..5].copy_from_slice(&unit);
            e[5..8].copy_from_slice(&fs.orientation);
            e[8] = bbox_corner_distance(&corners[r], &corners[s]);
        }
    }
    x
}

pub fn room_furniture_features(
    rooms: &[RoomNode],
    furniture: &[FurnitureNode],
) -> Result<EdgeFeatures> {
    let mut x = EdgeFeatures::zeros(rooms.len(), furniture.len(), D_RF);
    for (s, room) in rooms.iter().enumerate() {
        let rc = room.centroid();
        for (r, f) in furniture.iter().enumerate() {
            let corners = f.corners();
            let mut bbox_room = f64::INFINITY;
            let mut bbox_center = f64::INFINITY;
            for c in &corners {
                bbox_room = bbox_room.min(room_point_distance(room, c)?);
                bbox_center = bbox_center.min(dist(c, &rc));
            }
            let e = x.get_mut(s, r);
            e[0] = room_point_distance(room, &f.location)?;
            e[1] = dist(&f.location, &rc);
            e[2] = bbox_room;
            e[3] = bbox_center;
            e[4] = dot(&room.normal, &f.orientation);
        }
    }
    Ok(x)
}

pub fn room_room_features(rooms: &[RoomNode]) -> Result<EdgeFeatures> {
    let n = rooms.len();
    let corners: Vec<_> = rooms.iter().map(|r| r.corners()).collect();
    for r in rooms.iter().filter(|r| r.kind.is_linear()) {
        // surfaces the degenerate-segment error early
        super::geometry::Segment2::from_node(r)?;
    }
    let mut x = EdgeFeatures::zeros(n, n, D_RR);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let (lo, hi) = corner_distance_range(&corners[i], &corners[j]);
            let e = x.get_mut(i, j);
            e[0] = dist(&rooms[i].centroid(), &rooms[j].centroid());
            e[1] = dot(&rooms[i].normal, &rooms[j].normal);
            e[2] = hi;
            e[3] = lo;
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::types::{box_corners, RoomNodeKind};

    fn furn(loc: [f64; 3], orient: [f64; 3], size: [f64; 3]) -> FurnitureNode {
        FurnitureNode {
            super_category: SuperCategory::Table,
            fine_label: None,
            shape_descriptor: vec![0.0, 1.0],
            location: loc,
            orientation: orient,
            size,
        }
    }

    fn floor() -> RoomNode {
        RoomNode {
            kind: RoomNodeKind::Floor,
            bbox_min: [-5.0, 0.0, -5.0],
            bbox_max: [5.0, 0.0, 5.0],
            normal: [0.0, 1.0, 0.0],
        }
    }

    #[test]
    fn center_distance_and_relative_orientation() {
        let g = build_scene_graph(
            RoomType::Bedroom,
            vec![floor()],
            vec![
                furn([0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0; 3]),
                furn([3.0, 4.0, 0.0], [0.0, 0.0, 1.0], [1.0; 3]),
            ],
        )
        .unwrap();
        assert_eq!(g.x_ff.get(0, 1)[0], 5.0);
        assert_eq!(g.x_ff.get(1, 0)[0], 5.0);
        assert_eq!(g.x_ff.get(0, 1)[1], 0.0);
        assert_eq!(&g.x_ff.get(0, 1)[2..5], &[0.6, 0.8, 0.0]);
        assert_eq!(&g.x_ff.get(1, 0)[2..5], &[-0.6, -0.8, 0.0]);
        assert!(g.x_ff.get(0, 0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bbox_distance_of_unit_cubes() {
        let a = box_corners(&[0.0; 3], &[1.0; 3]);
        let b = box_corners(&[3.0, 0.0, 0.0], &[4.0, 1.0, 1.0]);
        // brute-force oracle over all 64 corner pairs
        let mut best = f64::INFINITY;
        for p in &a {
            for q in &b {
                best = best.min(dist(p, q));
            }
        }
        assert_eq!(best, 2.0);
        assert_eq!(bbox_corner_distance(&a, &b), 2.0);
        let g = build_scene_graph(
            RoomType::Bedroom,
            vec![floor()],
            vec![
                furn([0.5; 3], [1.0, 0.0, 0.0], [1.0; 3]),
                furn([3.5, 0.5, 0.5], [1.0, 0.0, 0.0], [1.0; 3]),
            ],
        )
        .unwrap();
        assert_eq!(g.x_ff.get(0, 1)[8], 2.0);
    }

    #[test]
    fn validation_names_the_node() {
        let bad = furn([0.0; 3], [1.0, 1.0, 0.0], [1.0; 3]);
        let err = build_scene_graph(RoomType::Bedroom, vec![floor()], vec![bad]).unwrap_err();
        assert!(err.to_string().contains("furniture node 0"), "{err}");
        let mut nan = furn([0.0; 3], [1.0, 0.0, 0.0], [1.0; 3]);
        nan.location[1] = f64::NAN;
        assert!(build_scene_graph(RoomType::Bedroom, vec![floor()], vec![nan]).is_err());
        assert!(build_scene_graph(RoomType::Bedroom, vec![floor()], vec![]).is_err());
    }

    #[test]
    fn room_features_layout() {
        let f = room_features(RoomType::Livingroom, &[floor()]);
        assert_eq!(f.len(), D_ROOM);
        assert_eq!(&f[0..4], &[0.0, 0.0, 1.0, 0.0]);
        assert_eq!(&f[4..8], &[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(&f[14..17], &[0.0, 1.0, 0.0]);
    }
}
