//! Per-sample append-only store of immutable image resources.
//!
//! The input image lives under the fixed id `original`; every later
//! resource gets the next `img_NNN` id. Entries are never replaced or
//! removed, so any earlier view can be cited again by id.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;
use thiserror::Error;

use crate::raster::{Raster, RasterError, Rgb};

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error(transparent)]
    InvalidRaster(#[from] RasterError),
    #[error("unknown resource {0:?}")]
    UnknownResource(String),
    #[error("malformed resource id {0:?}")]
    BadId(String),
    #[error("archive i/o on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// `original`, or `img_NNN` with a 1-based counter zero-padded to three
/// digits. Counters above 999 are written unpadded (`img_1000`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ResourceId {
    Original,
    Derived(u32),
}

impl ResourceId {
    /// Position in creation order; `original` is 0.
    pub fn ordinal(self) -> u32 {
        match self {
            ResourceId::Original => 0,
            ResourceId::Derived(n) => n,
        }
    }
}

impl fmt::Display for ResourceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ResourceId::Original => f.write_str("original"),
            ResourceId::Derived(n) => write!(f, "img_{n:03}"),
        }
    }
}

impl FromStr for ResourceId {
    type Err = RegistryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "original" {
            return Ok(ResourceId::Original);
        }
        let bad = || RegistryError::BadId(s.to_string());
        let digits = s.strip_prefix("img_").ok_or_else(bad)?;
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let n: u32 = digits.parse().map_err(|_| bad())?;
        // Exactly one spelling per number.
        if n == 0 || ResourceId::Derived(n).to_string() != s {
            return Err(bad());
        }
        Ok(ResourceId::Derived(n))
    }
}

impl Serialize for ResourceId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ResourceId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// How a resource came to exist.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    /// Empty for `original`.
    pub tool_name: String,
    /// Key-sorted JSON text of the tool arguments.
    pub arguments: String,
    pub source_ids: Vec<ResourceId>,
    pub creation_index: u32,
}

/// Serializes `value` with object keys in sorted order at every depth.
pub fn canonical_json(value: &Value) -> String {
    fn sorted(value: &Value) -> Value {
        match value {
            Value::Object(map) => {
                let mut entries: Vec<_> = map.iter().collect();
                entries.sort_by(|a, b| a.0.cmp(b.0));
                Value::Object(entries.into_iter().map(|(k, v)| (k.clone(), sorted(v))).collect())
            }
            Value::Array(items) => Value::Array(items.iter().map(sorted).collect()),
            other => other.clone(),
        }
    }
    sorted(value).to_string()
}

#[derive(Debug, Clone)]
pub struct ImageResource {
    pub id: ResourceId,
    pub raster: Arc<Raster>,
    pub provenance: Provenance,
    content_hash: String,
}

impl ImageResource {
    /// Hash captured at registration time.
    pub fn content_hash(&self) -> &str {
        &self.content_hash
    }
}

#[derive(Debug, Clone)]
pub struct Registry {
    // Index in this vector equals the id ordinal.
    entries: Vec<ImageResource>,
}

impl Registry {
    pub fn new(original: Raster) -> Self {
        let content_hash = original.content_hash();
        Registry {
            entries: vec![ImageResource {
                id: ResourceId::Original,
                raster: Arc::new(original),
                provenance: Provenance {
                    tool_name: String::new(),
                    arguments: String::new(),
                    source_ids: Vec::new(),
                    creation_index: 0,
                },
                content_hash,
            }],
        }
    }

    /// Builds a registry straight from raw pixel data.
    pub fn from_pixels(width: u32, height: u32, pixels: Vec<Rgb>) -> Result<Self, RegistryError> {
        Ok(Registry::new(Raster::new(width, height, pixels)?))
    }

    /// Registers `raster` as a new resource and returns its id.
    ///
    /// Fails without side effects if any source id is unknown.
    pub fn allocate(
        &mut self,
        raster: Raster,
        tool_name: &str,
        arguments: &Value,
        source_ids: &[ResourceId],
    ) -> Result<ResourceId, RegistryError> {
        for id in source_ids {
            self.get(*id)?;
        }
        let index = self.next_index();
        let id = ResourceId::Derived(index);
        let content_hash = raster.content_hash();
        self.entries.push(ImageResource {
            id,
            raster: Arc::new(raster),
            provenance: Provenance {
                tool_name: tool_name.to_string(),
                arguments: canonical_json(arguments),
                source_ids: source_ids.to_vec(),
                creation_index: index,
            },
            content_hash,
        });
        Ok(id)
    }

    pub fn get(&self, id: ResourceId) -> Result<&ImageResource, RegistryError> {
        self.entries
            .get(id.ordinal() as usize)
            .ok_or_else(|| RegistryError::UnknownResource(id.to_string()))
    }

    /// Looks up a resource by its textual id.
    pub fn get_by_name(&self, name: &str) -> Result<&ImageResource, RegistryError> {
        let id: ResourceId = name
            .parse()
            .map_err(|_| RegistryError::UnknownResource(name.to_string()))?;
        self.get(id)
    }

    pub fn list_ids(&self) -> Vec<ResourceId> {
        self.entries.iter().map(|e| e.id).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn iter(&self) -> impl Iterator<Item = &ImageResource> {
        self.entries.iter()
    }

    pub fn latest(&self) -> &ImageResource {
        self.entries.last().expect("registry always holds original")
    }

    fn next_index(&self) -> u32 {
        self.entries.len() as u32
    }

    /// Summary rows for `registry.json`.
    pub fn manifest(&self) -> Vec<RegistryRecord> {
        self.entries
            .iter()
            .map(|e| RegistryRecord {
                id: e.id,
                provenance: e.provenance.clone(),
                width: e.raster.width(),
                height: e.raster.height(),
                content_hash: e.content_hash.clone(),
            })
            .collect()
    }

    /// Writes every resource as `<dir>/<id>.png` plus `<dir>/registry.json`.
    pub fn archive(&self, dir: &Path) -> Result<(), RegistryError> {
        let io = |path: &Path| {
            let path = path.display().to_string();
            move |source| RegistryError::Io { path, source }
        };
        std::fs::create_dir_all(dir).map_err(io(dir))?;
        for entry in &self.entries {
            let path = dir.join(format!("{}.png", entry.id));
            std::fs::write(&path, entry.raster.to_png()?).map_err(io(&path))?;
        }
        let path = dir.join("registry.json");
        let body = serde_json::to_string_pretty(&self.manifest()).expect("registry records serialize");
        std::fs::write(&path, body + "\n").map_err(io(&path))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistryRecord {
    pub id: ResourceId,
    pub provenance: Provenance,
    pub width: u32,
    pub height: u32,
    pub content_hash: String,
}
