use std::fmt;

use serde::{Deserialize, Serialize};

/// Mesh position of a tile. `x` is the column, `y` the row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Coord {
    pub x: usize,
    pub y: usize,
}

impl Coord {
    pub const fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }

    /// Packed form used by the location register: `y` in bits 16..32, `x` in bits 0..16.
    pub fn pack(self) -> u64 {
        ((self.y as u64 & 0xffff) << 16) | (self.x as u64 & 0xffff)
    }

    pub fn unpack(word: u64) -> Self {
        Self::new((word & 0xffff) as usize, ((word >> 16) & 0xffff) as usize)
    }

    pub fn manhattan(self, other: Coord) -> usize {
        self.x.abs_diff(other.x) + self.y.abs_diff(other.y)
    }
}

impl fmt::Display for Coord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

/// Independent physical network. Every packet stays on one plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Plane {
    DmaReq,
    DmaRsp,
    Control,
}

impl Plane {
    pub const ALL: [Plane; 3] = [Plane::DmaReq, Plane::DmaRsp, Plane::Control];

    pub fn index(self) -> usize {
        match self {
            Plane::DmaReq => 0,
            Plane::DmaRsp => 1,
            Plane::Control => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Plane::DmaReq => "DmaReq",
            Plane::DmaRsp => "DmaRsp",
            Plane::Control => "Control",
        }
    }
}

impl fmt::Display for Plane {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MsgType {
    DmaLoadReq,
    DmaLoadRsp,
    DmaStore,
    DmaStoreAck,
    P2pLoadReq,
    P2pLoadRsp,
    ConfigWrite,
    ConfigRead,
    ConfigReadRsp,
    Interrupt,
}

impl MsgType {
    /// Fixed message-to-plane mapping. Requests (including p2p requests and
    /// store data) ride DmaReq, all data returns ride DmaRsp, register and
    /// interrupt traffic rides Control.
    pub fn plane(self) -> Plane {
        match self {
            MsgType::DmaLoadReq | MsgType::DmaStore | MsgType::P2pLoadReq => Plane::DmaReq,
            MsgType::DmaLoadRsp | MsgType::DmaStoreAck | MsgType::P2pLoadRsp => Plane::DmaRsp,
            MsgType::ConfigWrite
            | MsgType::ConfigRead
            | MsgType::ConfigReadRsp
            | MsgType::Interrupt => Plane::Control,
        }
    }
}

/// Message-specific header fields.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PacketMeta {
    /// Word address (DMA), word offset inside a chunk (p2p) or register id (config).
    pub address: u64,
    /// Requested word count for load requests.
    pub size: u64,
    pub chunk_id: u64,
    pub error: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Packet {
    pub src: Coord,
    pub dst: Coord,
    pub msg_type: MsgType,
    pub payload: Vec<u64>,
    pub meta: PacketMeta,
}

impl Packet {
    pub fn new(
        src: Coord,
        dst: Coord,
        msg_type: MsgType,
        payload: Vec<u64>,
        meta: PacketMeta,
    ) -> Self {
        Self {
            src,
            dst,
            msg_type,
            payload,
            meta,
        }
    }

    /// Header-only packet.
    pub fn control(src: Coord, dst: Coord, msg_type: MsgType, meta: PacketMeta) -> Self {
        Self::new(src, dst, msg_type, Vec::new(), meta)
    }

    pub fn plane(&self) -> Plane {
        self.msg_type.plane()
    }

    /// Payload length in words.
    pub fn length(&self) -> usize {
        self.payload.len()
    }

    /// Header flit plus payload flits for the given link width.
    pub fn flits(&self, flit_bits: u32) -> usize {
        let words_per_flit_bits = 64usize;
        1 + (self.length() * words_per_flit_bits).div_ceil(flit_bits as usize)
    }
}
