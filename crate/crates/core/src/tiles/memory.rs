use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::noc::{Coord, MsgType, Packet, PacketMeta, Plane};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DramParams {
    /// Cycles from the start of service to the first word.
    pub latency: u64,
    /// Words per cycle.
    pub bandwidth: u64,
    pub size_words: usize,
}

impl Default for DramParams {
    fn default() -> Self {
        Self {
            latency: 100,
            bandwidth: 1,
            size_words: 1 << 22,
        }
    }
}

/// Memory tile: DRAM contents, a single service pipeline with fixed latency
/// and bandwidth, and exact read/write word counters.
///
/// A request that arrives at cycle `t` starts at `s = max(t, busy_until)` and
/// occupies the channel for `ceil(n / bandwidth)` cycles. Load response
/// packet `k`, covering words `[k*M, end_k)`, is ready at
/// `s + latency + ceil(end_k / bandwidth)`; a store is acknowledged at
/// `s + latency + ceil(n / bandwidth)`.
#[derive(Debug)]
pub struct MemoryTile {
    coord: Coord,
    params: DramParams,
    max_packet_words: usize,
    dram: Vec<u64>,
    busy_until: u64,
    outbox: BTreeMap<(u64, u64), Packet>,
    seq: u64,
    read_words: u64,
    write_words: u64,
    errors: u64,
}

impl MemoryTile {
    pub fn new(coord: Coord, params: DramParams, max_packet_words: usize) -> Self {
        Self {
            coord,
            params,
            max_packet_words,
            dram: vec![0; params.size_words],
            busy_until: 0,
            outbox: BTreeMap::new(),
            seq: 0,
            read_words: 0,
            write_words: 0,
            errors: 0,
        }
    }

    pub fn coord(&self) -> Coord {
        self.coord
    }

    fn transfer(&self, words: usize) -> u64 {
        (words as u64).div_ceil(self.params.bandwidth.max(1))
    }

    fn push(&mut self, ready: u64, p: Packet) {
        self.outbox.insert((ready, self.seq), p);
        self.seq += 1;
    }

    fn in_bounds(&self, address: u64, words: usize) -> bool {
        words > 0
            && address
                .checked_add(words as u64)
                .is_some_and(|end| end <= self.dram.len() as u64)
    }

    /// Handles a DMA request delivered at `cycle`. Anything else is ignored.
    pub fn serve(&mut self, req: Packet, cycle: u64) {
        match req.msg_type {
            MsgType::DmaLoadReq => {
                let size = req.meta.size as usize;
                if !self.in_bounds(req.meta.address, size) {
                    self.errors += 1;
                    let meta = PacketMeta {
                        error: true,
                        ..req.meta
                    };
                    let rsp = Packet::control(self.coord, req.src, MsgType::DmaLoadRsp, meta);
                    self.push(cycle + self.params.latency, rsp);
                    return;
                }
                let start = cycle.max(self.busy_until);
                self.busy_until = start + self.transfer(size);
                self.read_words += size as u64;
                let base = req.meta.address as usize;
                let mut k = 0;
                while k < size {
                    let end = (k + self.max_packet_words).min(size);
                    let payload = self.dram[base + k..base + end].to_vec();
                    let meta = PacketMeta {
                        address: (base + k) as u64,
                        ..req.meta
                    };
                    let ready = start + self.params.latency + self.transfer(end);
                    self.push(
                        ready,
                        Packet::new(self.coord, req.src, MsgType::DmaLoadRsp, payload, meta),
                    );
                    k = end;
                }
            }
            MsgType::DmaStore => {
                let n = req.payload.len();
                if !self.in_bounds(req.meta.address, n) {
                    self.errors += 1;
                    let meta = PacketMeta {
                        error: true,
                        ..req.meta
                    };
                    self.push(
                        cycle + self.params.latency,
                        Packet::control(self.coord, req.src, MsgType::DmaStoreAck, meta),
                    );
                    return;
                }
                let start = cycle.max(self.busy_until);
                let t = self.transfer(n);
                self.busy_until = start + t;
                let a = req.meta.address as usize;
                self.dram[a..a + n].copy_from_slice(&req.payload);
                self.write_words += n as u64;
                let meta = PacketMeta {
                    size: n as u64,
                    ..req.meta
                };
                self.push(
                    start + self.params.latency + t,
                    Packet::control(self.coord, req.src, MsgType::DmaStoreAck, meta),
                );
            }
            _ => {}
        }
    }

    pub fn peek_out(&self, plane: Plane, cycle: u64) -> Option<&Packet> {
        if plane != Plane::DmaRsp {
            return None;
        }
        self.outbox
            .first_key_value()
            .filter(|((ready, _), _)| *ready <= cycle)
            .map(|(_, p)| p)
    }

    pub fn pop_out(&mut self) -> Option<Packet> {
        self.outbox.pop_first().map(|(_, p)| p)
    }

    pub fn has_output(&self) -> bool {
        !self.outbox.is_empty()
    }

    pub fn next_wake(&self) -> Option<u64> {
        self.outbox.first_key_value().map(|((ready, _), _)| *ready)
    }

    pub fn dram(&self) -> &[u64] {
        &self.dram
    }

    /// Host-side access that bypasses the NoC and the counters.
    pub fn dram_mut(&mut self) -> &mut [u64] {
        &mut self.dram
    }

    pub fn read_words(&self) -> u64 {
        self.read_words
    }

    pub fn write_words(&self) -> u64 {
        self.write_words
    }

    pub fn error_count(&self) -> u64 {
        self.errors
    }

    pub fn reset_counters(&mut self) {
        self.read_words = 0;
        self.write_words = 0;
        self.errors = 0;
    }
}
