use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::kernels::AccelKind;

use super::RuntimeError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeMode {
    Dma,
    P2p,
}

fn one() -> usize {
    1
}

/// One accelerator stage. Its devices are `<name>.0 .. <name>.<instances-1>`
/// unless `devices` lists them explicitly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub name: String,
    pub kernel: AccelKind,
    #[serde(default = "one")]
    pub instances: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub devices: Option<Vec<String>>,
    /// Free-form kernel parameters. Unknown keys are accepted and ignored.
    #[serde(default, skip_serializing_if = "toml::Table::is_empty")]
    pub params: toml::Table,
}

impl NodeSpec {
    pub fn device_names(&self) -> Vec<String> {
        match &self.devices {
            Some(d) => d.clone(),
            None => (0..self.instances)
                .map(|i| format!("{}.{i}", self.name))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeSpec {
    pub src: String,
    pub dst: String,
    pub mode: EdgeMode,
    /// Input part of `dst` fed by this edge. Defaults to the order in which
    /// edges into `dst` appear.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub port: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IoSpec {
    /// Nodes whose results are kept in DRAM. Defaults to the sinks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outputs: Option<Vec<String>>,
}

/// Dataflow description as written by the user. Placement is not part of
/// it: nodes name devices, the registry maps devices to tiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataflowGraph {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub nodes: Vec<NodeSpec>,
    #[serde(default)]
    pub edges: Vec<EdgeSpec>,
    #[serde(default)]
    pub io: IoSpec,
}

impl DataflowGraph {
    pub fn load(path: &Path) -> Result<Self, RuntimeError> {
        let origin = path.display().to_string();
        let text = std::fs::read_to_string(path)
            .map_err(|e| RuntimeError::Graph(format!("{origin}: {e}")))?;
        Self::parse(&text, &origin)
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self, RuntimeError> {
        toml::from_str(text).map_err(|e| RuntimeError::Graph(format!("{origin}: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("DataflowGraph is always serializable")
    }

    /// Every edge switched to `mode`.
    pub fn with_all_edges(&self, mode: EdgeMode) -> Self {
        let mut g = self.clone();
        for e in &mut g.edges {
            e.mode = mode;
        }
        g
    }
}

/// How a validated plan is executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// One node at a time, each over all frames, every edge through DRAM.
    Serial,
    /// All nodes concurrently at frame granularity, every edge through DRAM.
    Pipe,
    /// As pipe, but edges marked p2p bypass DRAM and synchronize in hardware.
    P2p,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Serial, Mode::Pipe, Mode::P2p];

    pub fn label(self) -> &'static str {
        match self {
            Mode::Serial => "serial",
            Mode::Pipe => "pipe",
            Mode::P2p => "p2p",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mode::ALL
            .into_iter()
            .find(|m| m.label() == s)
            .ok_or_else(|| format!("unknown mode `{s}` (expected serial, pipe or p2p)"))
    }
}
