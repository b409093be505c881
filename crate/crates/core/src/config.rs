//! SoC description files.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernels::AccelSpec;
use crate::noc::{Coord, NocParams};
use crate::tiles::{DramParams, TileDescriptor, TileKind};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{origin}: {source}")]
    Io {
        origin: String,
        source: std::io::Error,
    },
    #[error("{origin}: {source}")]
    Parse {
        origin: String,
        source: Box<toml::de::Error>,
    },
    #[error("{origin}: tile {index} ({name}): {msg}")]
    Tile {
        origin: String,
        index: usize,
        name: String,
        msg: String,
    },
    #[error("{origin}: {msg}")]
    Invalid { origin: String, msg: String },
}

fn default_clock() -> f64 {
    78.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TileConfig {
    pub x: usize,
    pub y: usize,
    pub kind: TileKind,
    /// Device name; required for accelerators and unique across the SoC.
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub accel: Option<AccelSpec>,
}

/// Floorplan and platform parameters of a SoC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SocConfig {
    pub mesh_rows: usize,
    pub mesh_cols: usize,
    #[serde(default = "default_clock")]
    pub clock_mhz: f64,
    #[serde(default)]
    pub noc: NocParams,
    #[serde(default)]
    pub dram: DramParams,
    pub tiles: Vec<TileConfig>,
    /// Directory that relative model paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
    /// Where the description came from, for error messages.
    #[serde(skip)]
    pub origin: String,
}

impl SocConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let origin = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            origin: origin.clone(),
            source,
        })?;
        let mut cfg = Self::parse(&text, &origin)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let mut cfg: SocConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            origin: origin.to_string(),
            source: Box::new(e),
        })?;
        cfg.origin = origin.to_string();
        cfg.base_dir = PathBuf::from(".");
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical text form, used for fingerprints.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("SocConfig is always serializable")
    }

    pub fn clock_hz(&self) -> f64 {
        self.clock_mhz * 1e6
    }

    /// Floorplan rules: coordinates unique and inside the mesh, at most one
    /// memory tile, at least one processor, every accelerator named and
    /// parameterized, names unique.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |msg: String| ConfigError::Invalid {
            origin: self.origin.clone(),
            msg,
        };
        if self.mesh_rows == 0 || self.mesh_cols == 0 {
            return Err(invalid("mesh_rows and mesh_cols must be positive".into()));
        }
        if !(self.clock_mhz.is_finite() && self.clock_mhz > 0.0) {
            return Err(invalid("clock_mhz must be positive".into()));
        }
        if self.dram.bandwidth == 0 || self.dram.size_words == 0 {
            return Err(invalid(
                "dram bandwidth and size_words must be positive".into(),
            ));
        }
        let mut seen: BTreeMap<Coord, usize> = BTreeMap::new();
        let mut names = BTreeSet::new();
        for (index, t) in self.tiles.iter().enumerate() {
            let name = t
                .name
                .clone()
                .unwrap_or_else(|| format!("{:?}", t.kind).to_lowercase());
            let err = |msg: String| ConfigError::Tile {
                origin: self.origin.clone(),
                index,
                name: name.clone(),
                msg,
            };
            let c = Coord::new(t.x, t.y);
            if t.x >= self.mesh_cols || t.y >= self.mesh_rows {
                return Err(err(format!(
                    "coordinate {c} outside the {}x{} mesh",
                    self.mesh_cols, self.mesh_rows
                )));
            }
            if let Some(prev) = seen.insert(c, index) {
                return Err(err(format!("coordinate {c} already used by tile {prev}")));
            }
            if let Some(n) = &t.name {
                if !names.insert(n.clone()) {
                    return Err(err(format!("duplicate tile name `{n}`")));
                }
            }
            match (t.kind, &t.accel) {
                (TileKind::Accelerator, None) => {
                    return Err(err("accelerator tile without `accel` parameters".into()))
                }
                (TileKind::Accelerator, Some(a)) if a.kernel.is_none() => {
                    return Err(err("accelerator tile without a kernel".into()))
                }
                (TileKind::Accelerator, _) if t.name.is_none() => {
                    return Err(err("accelerator tile without a name".into()))
                }
                (k, Some(_)) if k != TileKind::Accelerator => {
                    return Err(err("only accelerator tiles take `accel` parameters".into()))
                }
                _ => {}
            }
        }
        let count = |k| self.tiles.iter().filter(|t| t.kind == k).count();
        if count(TileKind::Processor) == 0 {
            return Err(invalid("a SoC needs at least one processor tile".into()));
        }
        if count(TileKind::Memory) > 1 {
            return Err(invalid("at most one memory tile is supported".into()));
        }
        Ok(())
    }

    pub fn descriptors(&self) -> Vec<TileDescriptor> {
        self.tiles
            .iter()
            .map(|t| TileDescriptor {
                coord: Coord::new(t.x, t.y),
                kind: t.kind,
                name: t.name.clone().unwrap_or_default(),
                accel: t.accel.clone(),
            })
            .collect()
    }
}
