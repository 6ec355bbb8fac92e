//! Procedural desk-scale corpus: rectangular rooms furnished from per-type
//! templates, with a matching shape database.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::StandardNormal;

use super::features::{build_scene_graph, SceneGraph};
use super::types::{
    FurnitureNode, RoomNode, RoomNodeKind, RoomType, ShapeDatabase, ShapeEntry, SuperCategory,
    Vec3,
};
use crate::error::{Error, Result};

pub const DEFAULT_D_SHAPE: usize = 16;
const ROOM_HEIGHT: f64 = 2.8;
const ASSETS_PER_LABEL: usize = 6;
const CENTROID_SCALE: f64 = 1.0;
const LABEL_SPREAD: f64 = 0.3;
const ASSET_NOISE: f64 = 0.15;

/// Fine-grained furniture kinds with their super-category and nominal
/// `(width, height, depth)` in meters, width measured along the wall.
const LABELS: &[(&str, SuperCategory, [f64; 3])] = &[
    ("wardrobe", SuperCategory::CabinetShelf, [1.2, 2.0, 0.6]),
    ("nightstand", SuperCategory::CabinetShelf, [0.45, 0.5, 0.4]),
    ("tv_stand", SuperCategory::CabinetShelf, [1.6, 0.5, 0.45]),
    ("bookshelf", SuperCategory::CabinetShelf, [1.0, 1.9, 0.35]),
    ("sideboard", SuperCategory::CabinetShelf, [1.4, 0.8, 0.45]),
    ("double_bed", SuperCategory::Bed, [1.6, 0.5, 2.0]),
    ("single_bed", SuperCategory::Bed, [0.9, 0.5, 2.0]),
    ("dining_chair", SuperCategory::Chair, [0.45, 0.9, 0.5]),
    ("armchair", SuperCategory::Chair, [0.8, 0.8, 0.8]),
    ("office_chair", SuperCategory::Chair, [0.6, 1.0, 0.6]),
    ("coffee_table", SuperCategory::Table, [1.1, 0.45, 0.6]),
    ("dining_table", SuperCategory::Table, [1.6, 0.75, 0.9]),
    ("desk", SuperCategory::Table, [1.2, 0.75, 0.6]),
    ("three_seat_sofa", SuperCategory::Sofa, [2.1, 0.85, 0.9]),
    ("loveseat", SuperCategory::Sofa, [1.5, 0.85, 0.85]),
    ("stool", SuperCategory::PierStool, [0.4, 0.45, 0.4]),
    ("ceiling_lamp", SuperCategory::Lighting, [0.5, 0.2, 0.5]),
    ("pendant_lamp", SuperCategory::Lighting, [0.4, 0.6, 0.4]),
    ("floor_lamp", SuperCategory::Lighting, [0.35, 1.6, 0.35]),
];

fn label_index(name: &str) -> usize {
    LABELS
        .iter()
        .position(|(l, _, _)| *l == name)
        .expect("label table entry")
}

#[derive(Clone, Copy)]
struct Wall {
    /// Point where the wall starts, in the floor plane.
    origin: [f64; 2],
    /// Unit direction along the wall.
    along: [f64; 2],
    /// Inward unit normal.
    inward: [f64; 2],
    length: f64,
}

impl Wall {
    fn point(&self, t: f64, offset: f64) -> [f64; 2] {
        [
            self.origin[0] + t * self.along[0] + offset * self.inward[0],
            self.origin[1] + t * self.along[1] + offset * self.inward[1],
        ]
    }

    fn runs_along_x(&self) -> bool {
        self.along[0].abs() > 0.5
    }

    fn normal3(&self) -> Vec3 {
        [self.inward[0], 0.0, self.inward[1]]
    }

    fn node(&self, kind: RoomNodeKind, t0: f64, t1: f64, y0: f64, y1: f64) -> RoomNode {
        let a = self.point(t0, 0.0);
        let b = self.point(t1, 0.0);
        RoomNode {
            kind,
            bbox_min: [a[0].min(b[0]), y0, a[1].min(b[1])],
            bbox_max: [a[0].max(b[0]), y1, a[1].max(b[1])],
            normal: self.normal3(),
        }
    }
}

struct Room {
    width: f64,
    depth: f64,
    walls: [Wall; 4],
}

impl Room {
    fn new(width: f64, depth: f64) -> Self {
        let walls = [
            Wall {
                origin: [0.0, 0.0],
                along: [1.0, 0.0],
                inward: [0.0, 1.0],
                length: width,
            },
            Wall {
                origin: [0.0, depth],
                along: [1.0, 0.0],
                inward: [0.0, -1.0],
                length: width,
            },
            Wall {
                origin: [0.0, 0.0],
                along: [0.0, 1.0],
                inward: [1.0, 0.0],
                length: depth,
            },
            Wall {
                origin: [width, 0.0],
                along: [0.0, 1.0],
                inward: [-1.0, 0.0],
                length: depth,
            },
        ];
        Room {
            width,
            depth,
            walls,
        }
    }

    fn opposite(i: usize) -> usize {
        [1, 0, 3, 2][i]
    }

    fn longest_wall(&self) -> usize {
        if self.width >= self.depth {
            0
        } else {
            2
        }
    }

    fn center(&self) -> [f64; 2] {
        [0.5 * self.width, 0.5 * self.depth]
    }
}

/// Asset pool shared by every scene of a corpus.
struct AssetPool {
    db: ShapeDatabase,
    /// Entry indices per label.
    by_label: Vec<Vec<usize>>,
}

impl AssetPool {
    fn generate(rng: &mut ChaCha8Rng, d_shape: usize) -> Self {
        let centroids: Vec<Vec<f64>> = (0..SuperCategory::COUNT)
            .map(|_| gaussian_vec(rng, d_shape, CENTROID_SCALE))
            .collect();
        let mut entries = Vec::new();
        let mut by_label = Vec::new();
        for (label, cat, dims) in LABELS {
            let offset = gaussian_vec(rng, d_shape, LABEL_SPREAD);
            let mut ids = Vec::new();
            for k in 0..ASSETS_PER_LABEL {
                let noise = gaussian_vec(rng, d_shape, ASSET_NOISE);
                let descriptor = (0..d_shape)
                    .map(|j| centroids[cat.index()][j] + offset[j] + noise[j])
                    .collect();
                let scale = rng.gen_range(0.9..1.1);
                ids.push(entries.len());
                entries.push(ShapeEntry {
                    asset_id: format!("{label}_{k:02}"),
                    category: *cat,
                    fine_label: Some(label.to_string()),
                    descriptor,
                    size: [dims[0] * scale, dims[1] * scale, dims[2] * scale],
                });
            }
            by_label.push(ids);
        }
        AssetPool {
            db: ShapeDatabase { d_shape, entries },
            by_label,
        }
    }

    fn pick(&self, rng: &mut ChaCha8Rng, label: &str) -> &ShapeEntry {
        let ids = &self.by_label[label_index(label)];
        &self.db.entries[ids[rng.gen_range(0..ids.len())]]
    }
}

fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

struct Placer<'a> {
    rng: ChaCha8Rng,
    pool: &'a AssetPool,
    room: Room,
    items: Vec<FurnitureNode>,
}

impl Placer<'_> {
    fn jitter(&mut self, amount: f64) -> f64 {
        self.rng.gen_range(-amount..amount)
    }

    /// Places an item with its back against `wall`, centered at `t` along it.
    fn against_wall(&mut self, label: &str, wall: usize, t: f64) -> [f64; 2] {
        let asset = self.pool.pick(&mut self.rng, label).clone();
        let w = self.room.walls[wall];
        let [width, height, depth] = asset.size;
        let half = 0.5 * width.min(w.length);
        let t = (t + self.jitter(0.1)).clamp(half, w.length - half);
        let gap = 0.02 + self.rng.gen_range(0.0..0.06);
        let p = w.point(t, 0.5 * depth + gap);
        let size = if w.runs_along_x() {
            [width, height, depth]
        } else {
            [depth, height, width]
        };
        self.push(asset, [p[0], 0.5 * height, p[1]], w.normal3(), size);
        p
    }

    /// Places a free-standing item at a floor point, facing `facing`.
    fn free(&mut self, label: &str, at: [f64; 2], facing: [f64; 2], y: Option<f64>) {
        let asset = self.pool.pick(&mut self.rng, label).clone();
        let [width, height, depth] = asset.size;
        let size = if facing[1].abs() > 0.5 {
            [width, height, depth]
        } else {
            [depth, height, width]
        };
        let x = (at[0] + self.jitter(0.08)).clamp(0.5 * size[0], self.room.width - 0.5 * size[0]);
        let z = (at[1] + self.jitter(0.08)).clamp(0.5 * size[2], self.room.depth - 0.5 * size[2]);
        let y = y.unwrap_or(0.5 * height);
        self.push(asset, [x, y, z], [facing[0], 0.0, facing[1]], size);
    }

    fn ceiling_light(&mut self, label: &str, facing: [f64; 2]) {
        let c = self.room.center();
        self.free(label, c, facing, Some(ROOM_HEIGHT - 0.2));
    }

    fn push(&mut self, asset: ShapeEntry, location: Vec3, orientation: Vec3, size: Vec3) {
        self.items.push(FurnitureNode {
            super_category: asset.category,
            fine_label: asset.fine_label.clone(),
            shape_descriptor: asset.descriptor.clone(),
            location,
            orientation,
            size,
        });
    }

    fn chance(&mut self, p: f64) -> bool {
        self.rng.gen_bool(p)
    }

    fn bedroom(&mut self) {
        let wall = self.room.longest_wall();
        let len = self.room.walls[wall].length;
        let mid = 0.5 * len;
        let bed = if self.chance(0.7) { "double_bed" } else { "single_bed" };
        self.against_wall(bed, wall, mid);
        let bed_half = if bed == "double_bed" { 0.8 } else { 0.45 };
        let off = bed_half + 0.3;
        if self.chance(0.8) {
            self.against_wall("nightstand", wall, mid - off);
            self.against_wall("nightstand", wall, mid + off);
        } else {
            self.against_wall("nightstand", wall, mid + off);
        }
        self.ceiling_light("ceiling_lamp", self.room.walls[wall].inward);
        if self.chance(0.6) {
            let opp = Room::opposite(wall);
            let t = self.room.walls[opp].length * self.rng.gen_range(0.3..0.7);
            self.against_wall("wardrobe", opp, t);
        }
    }

    fn livingroom(&mut self) {
        let wall = self.room.longest_wall();
        let w = self.room.walls[wall];
        let mid = 0.5 * w.length;
        let sofa = if self.chance(0.6) { "three_seat_sofa" } else { "loveseat" };
        self.against_wall(sofa, wall, mid);
        let table_at = w.point(mid, 1.6);
        self.free("coffee_table", table_at, w.inward, None);
        let opp = Room::opposite(wall);
        self.against_wall("tv_stand", opp, 0.5 * self.room.walls[opp].length);
        if self.chance(0.6) {
            let side = w.point(mid + 1.4, 1.6);
            self.free("armchair", side, [-w.along[0], -w.along[1]], None);
        }
        self.ceiling_light("pendant_lamp", w.inward);
        if self.chance(0.3) {
            let corner = w.point(0.4, 0.4);
            self.free("stool", corner, w.inward, None);
        }
    }

    fn diningroom(&mut self) {
        let c = self.room.center();
        let along_x = self.room.width >= self.room.depth;
        let facing = if along_x { [0.0, 1.0] } else { [1.0, 0.0] };
        self.free("dining_table", c, facing, None);
        let n_chairs = self.rng.gen_range(2..=4);
        let offsets: [([f64; 2], [f64; 2]); 4] = if along_x {
            [
                ([-0.4, -0.8], [0.0, 1.0]),
                ([0.4, 0.8], [0.0, -1.0]),
                ([0.4, -0.8], [0.0, 1.0]),
                ([-0.4, 0.8], [0.0, -1.0]),
            ]
        } else {
            [
                ([-0.8, -0.4], [1.0, 0.0]),
                ([0.8, 0.4], [-1.0, 0.0]),
                ([-0.8, 0.4], [1.0, 0.0]),
                ([0.8, -0.4], [-1.0, 0.0]),
            ]
        };
        for (d, f) in offsets.iter().take(n_chairs) {
            self.free("dining_chair", [c[0] + d[0], c[1] + d[1]], *f, None);
        }
        self.ceiling_light("pendant_lamp", facing);
        if self.chance(0.5) {
            let wall = if along_x { 0 } else { 2 };
            let t = 0.5 * self.room.walls[wall].length;
            self.against_wall("sideboard", wall, t);
        }
    }

    fn library(&mut self) {
        let wall = self.room.longest_wall();
        let len = self.room.walls[wall].length;
        self.against_wall("bookshelf", wall, 0.3 * len);
        if self.chance(0.6) {
            self.against_wall("bookshelf", wall, 0.7 * len);
        }
        let opp = Room::opposite(wall);
        let w = self.room.walls[opp];
        let desk_t = 0.5 * w.length;
        self.against_wall("desk", opp, desk_t);
        let chair_at = w.point(desk_t, 1.0);
        self.free("office_chair", chair_at, [-w.inward[0], -w.inward[1]], None);
        let side = if wall == 0 || wall == 1 { 2 } else { 0 };
        let lamp_at = self.room.walls[side].point(0.3, 0.3);
        self.free("floor_lamp", lamp_at, self.room.walls[side].inward, None);
        if self.chance(0.4) {
            let t = 0.5 * self.room.walls[side].length;
            self.against_wall("loveseat", side, t);
        }
    }
}

fn room_nodes(rng: &mut ChaCha8Rng, room: &Room) -> Vec<RoomNode> {
    let mut nodes = vec![RoomNode {
        kind: RoomNodeKind::Floor,
        bbox_min: [0.0, 0.0, 0.0],
        bbox_max: [room.width, 0.0, room.depth],
        normal: [0.0, 1.0, 0.0],
    }];
    for w in &room.walls {
        nodes.push(w.node(RoomNodeKind::Wall, 0.0, w.length, 0.0, ROOM_HEIGHT));
    }
    let door_wall = rng.gen_range(0..4);
    let w = room.walls[door_wall];
    let t = rng.gen_range(0.6..w.length - 0.6);
    nodes.push(w.node(RoomNodeKind::Door, t - 0.45, t + 0.45, 0.0, 2.1));
    if rng.gen_bool(0.7) {
        let win_wall = (door_wall + rng.gen_range(1..4)) % 4;
        let w = room.walls[win_wall];
        let t = rng.gen_range(0.8..w.length - 0.8);
        nodes.push(w.node(RoomNodeKind::Window, t - 0.6, t + 0.6, 0.9, 2.1));
    }
    nodes
}

/// Generates `n_scenes` furnished rooms, cycling through `room_type_mix`,
/// plus the asset database their shape descriptors come from.
pub fn generate_synthetic_corpus(
    seed: u64,
    n_scenes: usize,
    room_type_mix: &[RoomType],
    d_shape: usize,
) -> Result<(Vec<SceneGraph>, ShapeDatabase)> {
    if n_scenes == 0 {
        return Err(Error::Validation("n_scenes must be at least 1".into()));
    }
    if d_shape < 2 {
        return Err(Error::Validation("d_shape must be at least 2".into()));
    }
    if room_type_mix.is_empty() {
        return Err(Error::Validation("room_type_mix is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pool = AssetPool::generate(&mut rng, d_shape);
    let mut scenes = Vec::with_capacity(n_scenes);
    for i in 0..n_scenes {
        let room_type = room_type_mix[i % room_type_mix.len()];
        let scene_seed: u64 = rng.gen();
        scenes.push(generate_scene(scene_seed, room_type, &pool)?);
    }
    Ok((scenes, pool.db))
}

fn generate_scene(seed: u64, room_type: RoomType, pool: &AssetPool) -> Result<SceneGraph> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = rng.gen_range(3.4..5.6);
    let depth = rng.gen_range(3.2..5.0);
    let room = Room::new(width, depth);
    let nodes = room_nodes(&mut rng, &room);
    let mut placer = Placer {
        rng,
        pool,
        room,
        items: Vec::new(),
    };
    match room_type {
        RoomType::Bedroom => placer.bedroom(),
        RoomType::Livingroom => placer.livingroom(),
        RoomType::Diningroom => placer.diningroom(),
        RoomType::Library => placer.library(),
    }
    let mut items = placer.items;
    items.shuffle(&mut placer.rng);
    build_scene_graph(room_type, nodes, items)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_given_seed() {
        let a = generate_synthetic_corpus(7, 6, &RoomType::ALL, 8).unwrap();
        let b = generate_synthetic_corpus(7, 6, &RoomType::ALL, 8).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        let c = generate_synthetic_corpus(8, 6, &RoomType::ALL, 8).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn furniture_stays_inside_the_floor() {
        let (scenes, _) = generate_synthetic_corpus(3, 40, &RoomType::ALL, 4).unwrap();
        for s in &scenes {
            let floor = &s.room_nodes[0];
            assert!(s.n_furniture() >= 3 && s.n_furniture() <= 7);
            for f in &s.furniture {
                for k in [0, 2] {
                    assert!(f.location[k] > floor.bbox_min[k] && f.location[k] < floor.bbox_max[k]);
                }
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(generate_synthetic_corpus(0, 0, &RoomType::ALL, 8).is_err());
        assert!(generate_synthetic_corpus(0, 1, &RoomType::ALL, 1).is_err());
    }
}
