use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];

pub const UNIT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoomNodeKind {
    Wall,
    Door,
    Floor,
    Window,
}

impl RoomNodeKind {
    pub const ALL: [RoomNodeKind; 4] = [
        RoomNodeKind::Wall,
        RoomNodeKind::Door,
        RoomNodeKind::Floor,
        RoomNodeKind::Window,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Doors, windows and walls are thin elements projected to a 2D segment.
    pub fn is_linear(self) -> bool {
        !matches!(self, RoomNodeKind::Floor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoomType {
    Bedroom,
    Livingroom,
    Diningroom,
    Library,
}

impl RoomType {
    pub const ALL: [RoomType; 4] = [
        RoomType::Bedroom,
        RoomType::Livingroom,
        RoomType::Diningroom,
        RoomType::Library,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            RoomType::Bedroom => "bedroom",
            RoomType::Livingroom => "livingroom",
            RoomType::Diningroom => "diningroom",
            RoomType::Library => "library",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        RoomType::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::Validation(format!("unknown room type '{s}'")))
    }
}

/// The seven furniture super-categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SuperCategory {
    #[serde(rename = "Cabinet/Shelf")]
    CabinetShelf,
    #[serde(rename = "Bed")]
    Bed,
    #[serde(rename = "Chair")]
    Chair,
    #[serde(rename = "Table")]
    Table,
    #[serde(rename = "Sofa")]
    Sofa,
    #[serde(rename = "Pier/Stool")]
    PierStool,
    #[serde(rename = "Lighting")]
    Lighting,
}

impl SuperCategory {
    pub const COUNT: usize = 7;
    pub const ALL: [SuperCategory; 7] = [
        SuperCategory::CabinetShelf,
        SuperCategory::Bed,
        SuperCategory::Chair,
        SuperCategory::Table,
        SuperCategory::Sofa,
        SuperCategory::PierStool,
        SuperCategory::Lighting,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            SuperCategory::CabinetShelf => "Cabinet/Shelf",
            SuperCategory::Bed => "Bed",
            SuperCategory::Chair => "Chair",
            SuperCategory::Table => "Table",
            SuperCategory::Sofa => "Sofa",
            SuperCategory::PierStool => "Pier/Stool",
            SuperCategory::Lighting => "Lighting",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let wanted = s.to_ascii_lowercase();
        SuperCategory::ALL
            .into_iter()
            .find(|c| {
                let name = c.name().to_ascii_lowercase();
                name == wanted || name.split('/').next() == Some(wanted.as_str())
            })
            .ok_or_else(|| Error::Validation(format!("unknown furniture category '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomNode {
    pub kind: RoomNodeKind,
    pub bbox_min: Vec3,
    pub bbox_max: Vec3,
    pub normal: Vec3,
}

impl RoomNode {
    pub fn centroid(&self) -> Vec3 {
        mid(&self.bbox_min, &self.bbox_max)
    }

    pub fn corners(&self) -> [Vec3; 8] {
        box_corners(&self.bbox_min, &self.bbox_max)
    }

    pub fn validate(&self) -> Result<()> {
        check_finite(&self.bbox_min, "bbox_min")?;
        check_finite(&self.bbox_max, "bbox_max")?;
        check_finite(&self.normal, "normal")?;
        if (0..3).any(|k| self.bbox_min[k] > self.bbox_max[k]) {
            return Err(Error::Validation("bbox_min exceeds bbox_max".into()));
        }
        check_unit(&self.normal, "normal")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FurnitureNode {
    #[serde(rename = "category")]
    pub super_category: SuperCategory,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fine_label: Option<String>,
    pub shape_descriptor: Vec<f64>,
    pub location: Vec3,
    pub orientation: Vec3,
    pub size: Vec3,
}

impl FurnitureNode {
    /// Axis-aligned box: `size` holds the extents along the world axes.
    pub fn bbox(&self) -> (Vec3, Vec3) {
        let mut lo = [0.0; 3];
        let mut hi = [0.0; 3];
        for k in 0..3 {
            lo[k] = self.location[k] - 0.5 * self.size[k];
            hi[k] = self.location[k] + 0.5 * self.size[k];
        }
        (lo, hi)
    }

    pub fn corners(&self) -> [Vec3; 8] {
        let (lo, hi) = self.bbox();
        box_corners(&lo, &hi)
    }

    /// Label used by frequency statistics: the fine label when present.
    pub fn label(&self) -> String {
        self.fine_label
            .clone()
            .unwrap_or_else(|| self.super_category.name().to_string())
    }

    pub fn validate(&self, d_shape: Option<usize>) -> Result<()> {
        check_finite(&self.location, "location")?;
        check_finite(&self.orientation, "orientation")?;
        check_finite(&self.size, "size")?;
        if self.shape_descriptor.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("shape_descriptor is not finite".into()));
        }
        if self.size.iter().any(|&s| s <= 0.0) {
            return Err(Error::Validation(format!(
                "size must be positive, got {:?}",
                self.size
            )));
        }
        if let Some(d) = d_shape {
            if self.shape_descriptor.len() != d {
                return Err(Error::Validation(format!(
                    "shape_descriptor has length {}, expected {d}",
                    self.shape_descriptor.len()
                )));
            }
        }
        check_unit(&self.orientation, "orientation")
    }
}

/// Room elements of a scene without furniture: the conditioning input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomLayout {
    pub room_type: RoomType,
    pub room_nodes: Vec<RoomNode>,
}

impl RoomLayout {
    pub fn validate(&self) -> Result<()> {
        if self.room_nodes.is_empty() {
            return Err(Error::Validation("room has no room nodes".into()));
        }
        for (i, n) in self.room_nodes.iter().enumerate() {
            n.validate()
                .map_err(|e| Error::Validation(format!("room node {i}: {e}")))?;
        }
        Ok(())
    }

    /// Centroid of the floor node, or of all room-node boxes if there is none.
    pub fn pivot(&self) -> Vec3 {
        if let Some(floor) = self
            .room_nodes
            .iter()
            .find(|n| n.kind == RoomNodeKind::Floor)
        {
            return floor.centroid();
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for n in &self.room_nodes {
            for k in 0..3 {
                lo[k] = lo[k].min(n.bbox_min[k]);
                hi[k] = hi[k].max(n.bbox_max[k]);
            }
        }
        mid(&lo, &hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeEntry {
    pub asset_id: String,
    pub category: SuperCategory,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fine_label: Option<String>,
    pub descriptor: Vec<f64>,
    pub size: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapeDatabase {
    pub d_shape: usize,
    pub entries: Vec<ShapeEntry>,
}

impl ShapeDatabase {
    pub fn new(d_shape: usize, entries: Vec<ShapeEntry>) -> Result<Self> {
        let db = ShapeDatabase { d_shape, entries };
        db.validate()?;
        Ok(db)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for e in &self.entries {
            if !seen.insert(e.asset_id.as_str()) {
                return Err(Error::Validation(format!(
                    "duplicate asset_id '{}'",
                    e.asset_id
                )));
            }
            if e.descriptor.len() != self.d_shape {
                return Err(Error::Validation(format!(
                    "asset '{}' descriptor has length {}, expected {}",
                    e.asset_id,
                    e.descriptor.len(),
                    self.d_shape
                )));
            }
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, asset_id: &str) -> Option<&ShapeEntry> {
        self.entries.iter().find(|e| e.asset_id == asset_id)
    }
}

pub(crate) fn mid(a: &Vec3, b: &Vec3) -> Vec3 {
    [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1]), 0.5 * (a[2] + b[2])]
}

pub(crate) fn box_corners(lo: &Vec3, hi: &Vec3) -> [Vec3; 8] {
    let mut out = [[0.0; 3]; 8];
    for (c, corner) in out.iter_mut().enumerate() {
        for k in 0..3 {
            corner[k] = if c >> k & 1 == 0 { lo[k] } else { hi[k] };
        }
    }
    out
}

pub fn norm(v: &Vec3) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

pub fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn sub(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn dist(a: &Vec3, b: &Vec3) -> f64 {
    norm(&sub(a, b))
}

fn check_finite(v: &Vec3, what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Validation(format!("{what} is not finite: {v:?}")))
    }
}

fn check_unit(v: &Vec3, what: &str) -> Result<()> {
    let n = norm(v);
    if (n - 1.0).abs() > UNIT_TOL {
        return Err(Error::Validation(format!(
            "{what} must be a unit vector, has norm {n}"
        )));
    }
    Ok(())
}
