//! Receiver-initiated accelerator-to-accelerator transfers.
//!
//! A consumer sends one `P2pLoadReq` per source and chunk on the DmaReq
//! plane; the producer answers with `P2pLoadRsp` packets on the DmaRsp plane
//! only once the requested chunk is staged. A producer never pushes data
//! into the fabric on its own, so a staged chunk that nobody asked for
//! occupies no link or queue.

use std::sync::Arc;

use thiserror::Error;

use crate::noc::Coord;

pub const MAX_SOURCES: usize = 4;
const COORD_BITS: u32 = 6;
const SOURCES_SHIFT: u32 = 5;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum P2pError {
    #[error("p2p load needs 1 to {MAX_SOURCES} sources, got {0}")]
    SourceCount(usize),
    #[error("sources given while p2p load is disabled")]
    SourcesWithoutLoad,
    #[error("source coordinate {0} does not fit the P2P_REG encoding")]
    Unencodable(Coord),
    #[error("source {0} is not an accelerator tile")]
    NotAccelerator(Coord),
    #[error(
        "chunk {chunk_id} requested by {requester} was already served (staged chunk is {staged})"
    )]
    StaleRequest {
        requester: Coord,
        chunk_id: u64,
        staged: u64,
    },
    #[error(
        "{requester} asked for {requested} words of chunk {chunk_id}, staged chunk has {staged}"
    )]
    SizeMismatch {
        requester: Coord,
        chunk_id: u64,
        requested: usize,
        staged: usize,
    },
    #[error("chunk {0} staged while chunk {1} is still being served")]
    Overlap(u64, u64),
}

/// Contents of the P2P_REG register.
///
/// Bit 0 enables p2p store, bit 1 p2p load, bits 2..5 hold the number of
/// sources and each source then takes 12 bits (6 for x, 6 for y).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct P2pConfig {
    pub store_enabled: bool,
    pub load_enabled: bool,
    pub sources: Vec<Coord>,
}

impl P2pConfig {
    pub fn disabled() -> Self {
        Self::default()
    }

    pub fn n_sources(&self) -> usize {
        self.sources.len()
    }

    pub fn validate(&self) -> Result<(), P2pError> {
        if self.load_enabled {
            if self.sources.is_empty() || self.sources.len() > MAX_SOURCES {
                return Err(P2pError::SourceCount(self.sources.len()));
            }
        } else if !self.sources.is_empty() {
            return Err(P2pError::SourcesWithoutLoad);
        }
        let lim = 1usize << COORD_BITS;
        if let Some(&c) = self.sources.iter().find(|c| c.x >= lim || c.y >= lim) {
            return Err(P2pError::Unencodable(c));
        }
        Ok(())
    }

    pub fn pack(&self) -> Result<u64, P2pError> {
        self.validate()?;
        let mut w = self.store_enabled as u64
            | (self.load_enabled as u64) << 1
            | (self.sources.len() as u64) << 2;
        for (k, c) in self.sources.iter().enumerate() {
            let shift = SOURCES_SHIFT + 2 * COORD_BITS * k as u32;
            w |= ((c.x as u64) | (c.y as u64) << COORD_BITS) << shift;
        }
        Ok(w)
    }

    pub fn unpack(word: u64) -> Result<Self, P2pError> {
        let n = ((word >> 2) & 0b111) as usize;
        if n > MAX_SOURCES {
            return Err(P2pError::SourceCount(n));
        }
        let mask = (1u64 << COORD_BITS) - 1;
        let sources = (0..n)
            .map(|k| {
                let v = word >> (SOURCES_SHIFT + 2 * COORD_BITS * k as u32);
                Coord::new((v & mask) as usize, ((v >> COORD_BITS) & mask) as usize)
            })
            .collect();
        let cfg = Self {
            store_enabled: word & 1 == 1,
            load_enabled: word & 2 == 2,
            sources,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct P2pRequest {
    pub requester: Coord,
    pub size: usize,
    pub chunk_id: u64,
    pub arrived_at: u64,
}

#[derive(Debug, Clone)]
struct Staged {
    chunk_id: u64,
    data: Arc<[u64]>,
    remaining: usize,
}

/// A request paired with the data that answers it.
pub type ReadyChunk = (P2pRequest, Arc<[u64]>);

/// Sender side: pending requests and at most one staged output chunk.
#[derive(Debug, Clone, Default)]
pub struct P2pSendState {
    pending: Vec<P2pRequest>,
    staged: Option<Staged>,
    served: u64,
}

impl P2pSendState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records an incoming request. Requests may arrive before the chunk exists.
    pub fn request(&mut self, req: P2pRequest) {
        self.pending.push(req);
    }

    /// Stages a chunk that must be served `fanout` times.
    pub fn stage(&mut self, chunk_id: u64, data: Vec<u64>, fanout: usize) -> Result<(), P2pError> {
        if let Some(s) = &self.staged {
            if s.remaining > 0 {
                return Err(P2pError::Overlap(chunk_id, s.chunk_id));
            }
        }
        self.staged = Some(Staged {
            chunk_id,
            data: data.into(),
            remaining: fanout,
        });
        Ok(())
    }

    /// Removes and returns every pending request the staged chunk can answer,
    /// in arrival order. Requests for later chunks stay queued.
    pub fn take_ready(&mut self) -> Result<Vec<ReadyChunk>, P2pError> {
        let Some(st) = self.staged.as_mut() else {
            return Ok(Vec::new());
        };
        let mut out = Vec::new();
        let mut k = 0;
        while k < self.pending.len() && st.remaining > 0 {
            let req = &self.pending[k];
            if req.chunk_id < st.chunk_id {
                return Err(P2pError::StaleRequest {
                    requester: req.requester,
                    chunk_id: req.chunk_id,
                    staged: st.chunk_id,
                });
            }
            if req.chunk_id == st.chunk_id {
                if req.size != st.data.len() {
                    return Err(P2pError::SizeMismatch {
                        requester: req.requester,
                        chunk_id: req.chunk_id,
                        requested: req.size,
                        staged: st.data.len(),
                    });
                }
                let req = self.pending.remove(k);
                st.remaining -= 1;
                self.served += 1;
                out.push((req, st.data.clone()));
            } else {
                k += 1;
            }
        }
        Ok(out)
    }

    /// True when no staged chunk is waiting for requests.
    pub fn drained(&self) -> bool {
        self.staged.as_ref().is_none_or(|s| s.remaining == 0)
    }

    pub fn staged_chunk(&self) -> Option<u64> {
        self.staged
            .as_ref()
            .filter(|s| s.remaining > 0)
            .map(|s| s.chunk_id)
    }

    pub fn pending(&self) -> &[P2pRequest] {
        &self.pending
    }

    /// Number of responses handed out so far.
    pub fn served(&self) -> u64 {
        self.served
    }
}
