//! JSON corpus and shape-database files.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::features::{build_scene_graph, SceneGraph};
use super::types::{FurnitureNode, RoomLayout, RoomNode, RoomType, ShapeDatabase, ShapeEntry};
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u64 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneRecord {
    pub schema_version: u64,
    pub room_type: RoomType,
    pub room_nodes: Vec<RoomNode>,
    pub furniture: Vec<FurnitureNode>,
}

impl SceneRecord {
    pub fn from_scene(scene: &SceneGraph) -> Self {
        SceneRecord {
            schema_version: SCHEMA_VERSION,
            room_type: scene.room_type,
            room_nodes: scene.room_nodes.clone(),
            furniture: scene.furniture.clone(),
        }
    }

    pub fn into_scene(self) -> Result<SceneGraph> {
        check_version(self.schema_version)?;
        build_scene_graph(self.room_type, self.room_nodes, self.furniture)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RoomRecord {
    schema_version: u64,
    room_type: RoomType,
    room_nodes: Vec<RoomNode>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ShapeDbRecord {
    schema_version: u64,
    d_shape: usize,
    entries: Vec<ShapeEntry>,
}

fn check_version(found: u64) -> Result<()> {
    if found != SCHEMA_VERSION {
        return Err(Error::SchemaVersion {
            found,
            supported: SCHEMA_VERSION,
        });
    }
    Ok(())
}

/// Reads the version field before the full decode so that a newer schema
/// reports a version error rather than a shape mismatch.
fn peek_version(v: &Value) -> Result<()> {
    match v.get("schema_version").and_then(Value::as_u64) {
        Some(found) => check_version(found),
        None => Err(Error::Validation("missing schema_version".into())),
    }
}

fn decode_scene(v: Value, index: usize) -> Result<SceneGraph> {
    peek_version(&v)?;
    let rec: SceneRecord = serde_json::from_value(v)
        .map_err(|e| Error::Validation(format!("scene {index}: {e}")))?;
    rec.into_scene()
        .map_err(|e| Error::Validation(format!("scene {index}: {e}")))
}

/// Parses a corpus from text: either one scene object or an array of them.
pub fn parse_corpus(text: &str) -> Result<Vec<SceneGraph>> {
    let v: Value = serde_json::from_str(text)?;
    match v {
        Value::Array(items) => items
            .into_iter()
            .enumerate()
            .map(|(i, v)| decode_scene(v, i))
            .collect(),
        obj @ Value::Object(_) => Ok(vec![decode_scene(obj, 0)?]),
        _ => Err(Error::Validation(
            "corpus must be a scene object or an array of scenes".into(),
        )),
    }
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<SceneGraph>> {
    parse_corpus(&fs::read_to_string(path)?)
}

pub fn scene_to_json(scene: &SceneGraph) -> String {
    serde_json::to_string_pretty(&SceneRecord::from_scene(scene)).expect("scene serializes")
}

pub fn write_scene(scene: &SceneGraph, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, scene_to_json(scene))?;
    Ok(())
}

pub fn write_corpus(scenes: &[SceneGraph], path: impl AsRef<Path>) -> Result<()> {
    let recs: Vec<_> = scenes.iter().map(SceneRecord::from_scene).collect();
    fs::write(path, serde_json::to_string_pretty(&recs).expect("corpus serializes"))?;
    Ok(())
}

pub fn parse_room(text: &str) -> Result<RoomLayout> {
    let v: Value = serde_json::from_str(text)?;
    peek_version(&v)?;
    let rec: RoomRecord =
        serde_json::from_value(v).map_err(|e| Error::Validation(e.to_string()))?;
    let layout = RoomLayout {
        room_type: rec.room_type,
        room_nodes: rec.room_nodes,
    };
    layout.validate()?;
    Ok(layout)
}

/// Reads a room layout. A full scene file is accepted too; its furniture is
/// ignored.
pub fn load_room(path: impl AsRef<Path>) -> Result<RoomLayout> {
    parse_room(&fs::read_to_string(path)?)
}

pub fn room_to_json(layout: &RoomLayout) -> String {
    let rec = RoomRecord {
        schema_version: SCHEMA_VERSION,
        room_type: layout.room_type,
        room_nodes: layout.room_nodes.clone(),
    };
    serde_json::to_string_pretty(&rec).expect("room serializes")
}

pub fn parse_shape_db(text: &str) -> Result<ShapeDatabase> {
    let v: Value = serde_json::from_str(text)?;
    peek_version(&v)?;
    let rec: ShapeDbRecord =
        serde_json::from_value(v).map_err(|e| Error::Validation(e.to_string()))?;
    ShapeDatabase::new(rec.d_shape, rec.entries)
}

pub fn load_shape_db(path: impl AsRef<Path>) -> Result<ShapeDatabase> {
    parse_shape_db(&fs::read_to_string(path)?)
}

pub fn shape_db_to_json(db: &ShapeDatabase) -> String {
    let rec = ShapeDbRecord {
        schema_version: SCHEMA_VERSION,
        d_shape: db.d_shape,
        entries: db.entries.clone(),
    };
    serde_json::to_string_pretty(&rec).expect("shape db serializes")
}

pub fn write_shape_db(db: &ShapeDatabase, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, shape_db_to_json(db))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = r#"{"schema_version":1,"room_type":"bedroom",
      "room_nodes":[{"kind":"floor","bbox_min":[0,0,0],"bbox_max":[4,0,3],"normal":[0,1,0]}],
      "furniture":[{"category":"Bed","shape_descriptor":[0.1,0.2],"location":[2,0.3,1.5],
                    "orientation":[0,0,1],"size":[1.6,0.6,2.0]}]}"#;

    #[test]
    fn parses_single_scene() {
        let c = parse_corpus(GOOD).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].furniture[0].super_category, super::super::SuperCategory::Bed);
    }

    #[test]
    fn malformed_json_reports_line() {
        let err = parse_corpus("[\n{\"schema_version\": 1,,}]").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn version_mismatch() {
        let text = GOOD.replace("\"schema_version\":1", "\"schema_version\":2");
        assert!(matches!(
            parse_corpus(&text),
            Err(Error::SchemaVersion { found: 2, .. })
        ));
    }

    #[test]
    fn zero_size_names_scene_index() {
        let bad = GOOD.replace("[1.6,0.6,2.0]", "[0,1,1]");
        let text = format!("[{GOOD},{bad}]");
        let err = parse_corpus(&text).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
        assert!(err.to_string().contains("scene 1"), "{err}");
    }

    #[test]
    fn empty_furniture_rejected() {
        let text = r#"{"schema_version":1,"room_type":"bedroom",
          "room_nodes":[{"kind":"floor","bbox_min":[0,0,0],"bbox_max":[4,0,3],"normal":[0,1,0]}],
          "furniture":[]}"#;
        assert!(matches!(parse_corpus(text), Err(Error::Validation(_))));
    }

    #[test]
    fn room_file_accepts_scene() {
        let layout = parse_room(GOOD).unwrap();
        assert_eq!(layout.room_nodes.len(), 1);
    }
}
