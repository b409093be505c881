use std::fmt;

use crate::noc::Coord;

/// Memory-mapped registers of an accelerator socket. The discriminant is the
/// register id carried in the `address` field of config packets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Reg {
    /// Writing 1 starts the accelerator.
    Cmd = 0,
    Status,
    /// Input dataset length in words.
    ConfSize,
    /// Word offset of input part 0 inside the translated buffer.
    SrcOffset,
    DstOffset,
    /// Read-only packed tile coordinates.
    Location,
    /// Packed [`crate::p2p::P2pConfig`].
    P2p,
    /// Read-only [`crate::kernels::AccelKind`] id.
    KernelId,
    /// Global frame index of chunk 0.
    FrameBase,
    /// Global frame distance between consecutive chunks. Resets to 1.
    FrameStride,
    SrcOffset1,
    SrcOffset2,
    SrcOffset3,
    /// Input part fed by each p2p source, 2 bits per source.
    P2pGroups,
    /// How many consumers request every staged chunk.
    P2pFanout,
    /// Nonzero: also store to memory while p2p store is enabled.
    StoreMirror,
    TlbBase,
    TlbBound,
}

impl Reg {
    pub const ALL: [Reg; 18] = [
        Reg::Cmd,
        Reg::Status,
        Reg::ConfSize,
        Reg::SrcOffset,
        Reg::DstOffset,
        Reg::Location,
        Reg::P2p,
        Reg::KernelId,
        Reg::FrameBase,
        Reg::FrameStride,
        Reg::SrcOffset1,
        Reg::SrcOffset2,
        Reg::SrcOffset3,
        Reg::P2pGroups,
        Reg::P2pFanout,
        Reg::StoreMirror,
        Reg::TlbBase,
        Reg::TlbBound,
    ];

    pub fn id(self) -> u64 {
        self as u64
    }

    pub fn from_id(id: u64) -> Option<Reg> {
        Self::ALL.get(usize::try_from(id).ok()?).copied()
    }

    /// Source offset register of input part `p` (0..4).
    pub fn src_offset(p: usize) -> Reg {
        [
            Reg::SrcOffset,
            Reg::SrcOffset1,
            Reg::SrcOffset2,
            Reg::SrcOffset3,
        ][p]
    }

    pub fn read_only(self) -> bool {
        matches!(self, Reg::Status | Reg::Location | Reg::KernelId)
    }
}

impl fmt::Display for Reg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Idle = 0,
    Running = 1,
    Done = 2,
    Error = 3,
}

impl Status {
    pub fn from_value(v: u64) -> Option<Status> {
        match v & 0xff {
            0 => Some(Status::Idle),
            1 => Some(Status::Running),
            2 => Some(Status::Done),
            3 => Some(Status::Error),
            _ => None,
        }
    }
}

/// Sticky STATUS bit recording a write that was refused while running.
pub const STATUS_WRITE_REJECTED: u64 = 1 << 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WriteOutcome {
    Stored,
    Start,
    Rejected,
}

#[derive(Debug, Clone)]
pub struct RegisterFile {
    values: [u64; Reg::ALL.len()],
    status: Status,
    write_rejected: bool,
}

impl RegisterFile {
    pub fn new(location: Coord, kernel_id: u64) -> Self {
        let mut values = [0; Reg::ALL.len()];
        values[Reg::Location as usize] = location.pack();
        values[Reg::KernelId as usize] = kernel_id;
        values[Reg::FrameStride as usize] = 1;
        values[Reg::P2pFanout as usize] = 1;
        Self {
            values,
            status: Status::Idle,
            write_rejected: false,
        }
    }

    pub fn read(&self, reg: Reg) -> u64 {
        match reg {
            Reg::Status => {
                self.status as u64
                    | if self.write_rejected {
                        STATUS_WRITE_REJECTED
                    } else {
                        0
                    }
            }
            _ => self.values[reg as usize],
        }
    }

    /// Applies a bus write. Every write is refused while the accelerator is
    /// running, as are writes to read-only registers; a refused write sets the
    /// sticky rejection bit.
    pub fn write(&mut self, reg: Reg, value: u64) -> WriteOutcome {
        if self.status == Status::Running || reg.read_only() {
            self.write_rejected = true;
            return WriteOutcome::Rejected;
        }
        if reg == Reg::Cmd {
            return if value == 1 {
                self.write_rejected = false;
                self.status = Status::Running;
                WriteOutcome::Start
            } else {
                WriteOutcome::Stored
            };
        }
        self.values[reg as usize] = value;
        WriteOutcome::Stored
    }

    pub fn status(&self) -> Status {
        self.status
    }

    pub fn set_status(&mut self, s: Status) {
        self.status = s;
    }

    pub fn write_rejected(&self) -> bool {
        self.write_rejected
    }
}
