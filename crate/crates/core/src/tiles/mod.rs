//! Tile sockets attached to the mesh.

mod accelerator;
mod memory;
mod processor;
mod registers;

use serde::{Deserialize, Serialize};

use crate::kernels::AccelSpec;
use crate::noc::{Coord, Packet, Plane};

pub use accelerator::{AccelStats, AccelTile, TickCtx};
pub use memory::{DramParams, MemoryTile};
pub use processor::ProcessorTile;
pub use registers::{Reg, RegisterFile, Status, WriteOutcome, STATUS_WRITE_REJECTED};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TileKind {
    Processor,
    Memory,
    Accelerator,
    Auxiliary,
}

/// Placement and parameters of one tile.
#[derive(Debug, Clone, PartialEq)]
pub struct TileDescriptor {
    pub coord: Coord,
    pub kind: TileKind,
    pub name: String,
    pub accel: Option<AccelSpec>,
}

#[derive(Debug)]
pub enum Tile {
    Processor(ProcessorTile),
    Memory(Box<MemoryTile>),
    Accelerator(Box<AccelTile>),
    /// Placeholder socket; packets sent to it are counted and dropped.
    Auxiliary {
        coord: Coord,
        dropped: u64,
    },
}

impl Tile {
    pub fn kind(&self) -> TileKind {
        match self {
            Tile::Processor(_) => TileKind::Processor,
            Tile::Memory(_) => TileKind::Memory,
            Tile::Accelerator(_) => TileKind::Accelerator,
            Tile::Auxiliary { .. } => TileKind::Auxiliary,
        }
    }

    pub fn coord(&self) -> Coord {
        match self {
            Tile::Processor(t) => t.coord(),
            Tile::Memory(t) => t.coord(),
            Tile::Accelerator(t) => t.coord(),
            Tile::Auxiliary { coord, .. } => *coord,
        }
    }

    pub fn receive(&mut self, p: Packet, cycle: u64) {
        match self {
            Tile::Processor(t) => t.receive(p, cycle),
            Tile::Memory(t) => t.serve(p, cycle),
            Tile::Accelerator(t) => t.receive(p, cycle),
            Tile::Auxiliary { dropped, .. } => *dropped += 1,
        }
    }

    pub fn tick(&mut self, ctx: &TickCtx) {
        if let Tile::Accelerator(t) = self {
            t.tick(ctx);
        }
    }

    /// Head of the outgoing queue for `plane` if it may be injected at `cycle`.
    pub fn peek_out(&self, plane: Plane, cycle: u64) -> Option<&Packet> {
        match self {
            Tile::Processor(t) => t.peek_out(plane),
            Tile::Memory(t) => t.peek_out(plane, cycle),
            Tile::Accelerator(t) => t.peek_out(plane),
            Tile::Auxiliary { .. } => None,
        }
    }

    pub fn pop_out(&mut self, plane: Plane) -> Option<Packet> {
        match self {
            Tile::Processor(t) => t.pop_out(),
            Tile::Memory(t) => t.pop_out(),
            Tile::Accelerator(t) => t.pop_out(plane),
            Tile::Auxiliary { .. } => None,
        }
    }

    /// Packets queued for injection, ready or not.
    pub fn has_output(&self) -> bool {
        match self {
            Tile::Processor(t) => t.has_output(),
            Tile::Memory(t) => t.has_output(),
            Tile::Accelerator(t) => t.has_output(),
            Tile::Auxiliary { .. } => false,
        }
    }

    pub fn next_wake(&self, cycle: u64) -> Option<u64> {
        match self {
            Tile::Memory(t) => t.next_wake(),
            Tile::Accelerator(t) => t.next_wake(cycle),
            _ => None,
        }
    }

    pub fn as_accelerator(&self) -> Option<&AccelTile> {
        match self {
            Tile::Accelerator(t) => Some(t),
            _ => None,
        }
    }

    pub fn as_accelerator_mut(&mut self) -> Option<&mut AccelTile> {
        match self {
            Tile::Accelerator(t) => Some(t),
            _ => None,
        }
    }
}
