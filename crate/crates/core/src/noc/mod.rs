//! Packet-switched 2D mesh with independent planes.
//!
//! Each plane has its own routers, input queues and links. Packets are cut
//! into 64-bit flits (one header flit plus payload) and move with wormhole
//! switching under dimension-order (X then Y) routing. Output ports are
//! arbitrated round-robin; the tie-break order is Local, North, South, East,
//! West. A flit advances only if the downstream queue had room at the start
//! of the cycle, so queue occupancy never exceeds `queue_depth`.

mod mesh;
mod packet;

pub use mesh::{
    route_xy, Delivery, Link, Mesh, NocParams, Port, QueueInventory, TraceEvent, TraceKind,
};
pub use packet::{Coord, MsgType, Packet, PacketMeta, Plane};

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NocError {
    #[error("coordinate {coord} outside {cols}x{rows} mesh")]
    OutOfBounds {
        coord: Coord,
        cols: usize,
        rows: usize,
    },
    #[error("mesh must have at least one row and one column")]
    EmptyMesh,
    #[error("invalid NoC parameters: {0}")]
    BadParams(String),
}
