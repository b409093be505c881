use std::collections::VecDeque;

use crate::kernels::Kernel;
use crate::noc::{Coord, MsgType, Packet, PacketMeta, Plane};
use crate::p2p::{P2pConfig, P2pRequest, P2pSendState};

use super::registers::{Reg, RegisterFile, Status, WriteOutcome};

/// Per-cycle context handed to a tile by the simulator.
#[derive(Debug, Clone, Copy)]
pub struct TickCtx {
    pub cycle: u64,
    /// The tile's network interface is still serializing on the DmaRsp plane.
    pub rsp_ni_busy: bool,
}

#[derive(Debug, Clone, Default)]
pub struct AccelStats {
    /// Cycles spent in the compute phase.
    pub busy_cycles: u64,
    pub runs: u64,
    pub interrupts: u64,
    /// (physical address, size) of every DMA load request, in issue order.
    pub dma_loads: Vec<(u64, u64)>,
    pub dma_stores: u64,
    pub p2p_requests: u64,
    pub p2p_responses: u64,
    pub rejected_writes: u64,
}

#[derive(Debug, Clone)]
enum PartSource {
    Dma {
        offset: u64,
    },
    /// Producer instances; frame `f` comes from `sources[f % len]`.
    P2p {
        sources: Vec<Coord>,
    },
}

#[derive(Debug, Clone)]
struct Part {
    /// Full-chunk size.
    size: usize,
    source: PartSource,
}

#[derive(Debug, Clone)]
enum Phase {
    LoadStart,
    Loading {
        starts: Vec<usize>,
        sizes: Vec<usize>,
        got: Vec<usize>,
        dma_todo: VecDeque<usize>,
        dma_inflight: Option<(usize, u64)>,
    },
    Computing {
        until: u64,
    },
    StoreStart,
    Storing {
        acks: usize,
    },
}

#[derive(Debug, Clone)]
struct Run {
    owner: Coord,
    conf_size: usize,
    n_chunks: usize,
    chunk: usize,
    parts: Vec<Part>,
    frame_base: u64,
    frame_stride: u64,
    dst_offset: u64,
    tlb_base: u64,
    tlb_bound: u64,
    p2p_store: bool,
    dma_store: bool,
    fanout: usize,
    phase: Phase,
}

impl Run {
    fn frame(&self) -> u64 {
        self.frame_base + self.chunk as u64 * self.frame_stride
    }
}

/// Accelerator socket: register file, DMA engine with base+bound
/// translation, private input/output buffers and the chunked
/// load/compute/store loop around a kernel.
#[derive(Debug)]
pub struct AccelTile {
    name: String,
    coord: Coord,
    kernel: Kernel,
    regs: RegisterFile,
    memory: Option<Coord>,
    max_packet_words: usize,
    in_buf: Vec<u64>,
    out_buf: Vec<u64>,
    send: P2pSendState,
    run: Option<Run>,
    outbox: [VecDeque<Packet>; 3],
    stall_until: u64,
    stats: AccelStats,
    last_error: Option<String>,
}

impl AccelTile {
    pub fn new(
        name: String,
        coord: Coord,
        kernel: Kernel,
        memory: Option<Coord>,
        max_packet_words: usize,
    ) -> Self {
        let regs = RegisterFile::new(coord, kernel.kind().id());
        Self {
            name,
            coord,
            in_buf: Vec::with_capacity(kernel.in_words()),
            out_buf: Vec::with_capacity(kernel.out_words()),
            kernel,
            regs,
            memory,
            max_packet_words,
            send: P2pSendState::new(),
            run: None,
            outbox: Default::default(),
            stall_until: 0,
            stats: AccelStats::default(),
            last_error: None,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn coord(&self) -> Coord {
        self.coord
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn status(&self) -> Status {
        self.regs.status()
    }

    pub fn registers(&self) -> &RegisterFile {
        &self.regs
    }

    pub fn stats(&self) -> &AccelStats {
        &self.stats
    }

    pub fn reset_stats(&mut self) {
        self.stats = AccelStats::default();
    }

    pub fn last_error(&self) -> Option<&str> {
        self.last_error.as_deref()
    }

    pub fn in_buf(&self) -> &[u64] {
        &self.in_buf
    }

    pub fn out_buf(&self) -> &[u64] {
        &self.out_buf
    }

    /// Freezes the run loop until `until`: no new requests, no phase changes
    /// and no p2p responses. Incoming packets are still accepted.
    pub fn stall(&mut self, until: u64) {
        self.stall_until = until;
    }

    pub fn is_stalled(&self, cycle: u64) -> bool {
        cycle < self.stall_until
    }

    /// Free space in the input buffer; a load is only issued when the whole
    /// chunk fits.
    pub fn in_buf_free(&self) -> usize {
        match self.run.as_ref().map(|r| &r.phase) {
            Some(Phase::Loading { .. } | Phase::Computing { .. }) => 0,
            _ => self.kernel.in_words(),
        }
    }

    pub fn peek_out(&self, plane: Plane) -> Option<&Packet> {
        self.outbox[plane.index()].front()
    }

    pub fn pop_out(&mut self, plane: Plane) -> Option<Packet> {
        self.outbox[plane.index()].pop_front()
    }

    pub fn has_output(&self) -> bool {
        self.outbox.iter().any(|q| !q.is_empty())
    }

    /// Earliest cycle at which the tile can make progress without receiving
    /// a packet.
    pub fn next_wake(&self, cycle: u64) -> Option<u64> {
        let Some(run) = &self.run else { return None };
        if cycle < self.stall_until {
            return Some(self.stall_until);
        }
        match run.phase {
            Phase::Computing { until } => Some(until),
            Phase::LoadStart | Phase::StoreStart => Some(cycle),
            _ => None,
        }
    }

    /// Human-readable wait reason plus the tiles being waited on.
    pub fn wait_state(&self) -> Option<(String, Vec<Coord>)> {
        let run = self.run.as_ref()?;
        let f = run.frame();
        Some(match &run.phase {
            Phase::Loading {
                sizes,
                got,
                dma_inflight,
                ..
            } => {
                let mut peers = Vec::new();
                let mut why = Vec::new();
                for (p, part) in run.parts.iter().enumerate() {
                    if got[p] >= sizes[p] {
                        continue;
                    }
                    match &part.source {
                        PartSource::P2p { sources } => {
                            let src = sources[(f % sources.len() as u64) as usize];
                            peers.push(src);
                            why.push(format!("p2p chunk {f} from {src}"));
                        }
                        PartSource::Dma { .. } if dma_inflight.is_some_and(|(q, _)| q == p) => {
                            if let Some(m) = self.memory {
                                peers.push(m);
                            }
                            why.push("DMA load response".to_string());
                        }
                        PartSource::Dma { .. } => {}
                    }
                }
                (
                    format!(
                        "loading chunk {} (frame {f}), waiting for {}",
                        run.chunk,
                        why.join(", ")
                    ),
                    peers,
                )
            }
            Phase::Storing { acks } => {
                let mut why = Vec::new();
                let mut peers = Vec::new();
                if *acks > 0 {
                    why.push(format!("{acks} store ack(s)"));
                    peers.extend(self.memory);
                }
                if let Some(c) = self.send.staged_chunk() {
                    why.push(format!("a p2p request for staged chunk {c}"));
                }
                (
                    format!(
                        "storing chunk {} (frame {f}), waiting for {}",
                        run.chunk,
                        why.join(", ")
                    ),
                    peers,
                )
            }
            Phase::Computing { until } => (format!("computing until cycle {until}"), Vec::new()),
            Phase::LoadStart | Phase::StoreStart => ("runnable".to_string(), Vec::new()),
        })
    }

    pub fn receive(&mut self, pkt: Packet, cycle: u64) {
        match pkt.msg_type {
            MsgType::ConfigWrite => {
                let value = pkt.payload.first().copied().unwrap_or(0);
                let outcome = match Reg::from_id(pkt.meta.address) {
                    Some(reg) => self.regs.write(reg, value),
                    None => WriteOutcome::Rejected,
                };
                match outcome {
                    WriteOutcome::Start => self.start(pkt.src),
                    WriteOutcome::Rejected => self.stats.rejected_writes += 1,
                    WriteOutcome::Stored => {}
                }
            }
            MsgType::ConfigRead => {
                let value = Reg::from_id(pkt.meta.address)
                    .map(|r| self.regs.read(r))
                    .unwrap_or(0);
                let meta = PacketMeta {
                    address: pkt.meta.address,
                    ..Default::default()
                };
                self.emit(Packet::new(
                    self.coord,
                    pkt.src,
                    MsgType::ConfigReadRsp,
                    vec![value],
                    meta,
                ));
            }
            MsgType::P2pLoadReq => self.send.request(P2pRequest {
                requester: pkt.src,
                size: pkt.meta.size as usize,
                chunk_id: pkt.meta.chunk_id,
                arrived_at: cycle,
            }),
            MsgType::DmaLoadRsp => {
                if let Err(e) = self.on_dma_data(pkt) {
                    self.fail(e);
                }
            }
            MsgType::P2pLoadRsp => {
                if let Err(e) = self.on_p2p_data(pkt) {
                    self.fail(e);
                }
            }
            MsgType::DmaStoreAck => {
                if pkt.meta.error {
                    self.fail(format!(
                        "store to address {} rejected by memory",
                        pkt.meta.address
                    ));
                    return;
                }
                if let Some(Run {
                    phase: Phase::Storing { acks },
                    ..
                }) = self.run.as_mut()
                {
                    *acks = acks.saturating_sub(1);
                }
            }
            _ => {}
        }
    }

    fn emit(&mut self, p: Packet) {
        self.outbox[p.plane().index()].push_back(p);
    }

    fn fail(&mut self, why: String) {
        self.last_error = Some(why);
        self.regs.set_status(Status::Error);
        if let Some(run) = self.run.take() {
            self.interrupt(run.owner, true);
        }
    }

    fn interrupt(&mut self, owner: Coord, error: bool) {
        self.stats.interrupts += 1;
        let meta = PacketMeta {
            address: self.regs.read(Reg::Status),
            error,
            ..Default::default()
        };
        self.emit(Packet::control(self.coord, owner, MsgType::Interrupt, meta));
    }

    fn start(&mut self, owner: Coord) {
        self.stats.runs += 1;
        self.last_error = None;
        match self.plan_run(owner) {
            Ok(run) => self.run = Some(run),
            Err(e) => {
                self.last_error = Some(e);
                self.regs.set_status(Status::Error);
                self.interrupt(owner, true);
            }
        }
    }

    fn plan_run(&self, owner: Coord) -> Result<Run, String> {
        let r = |reg| self.regs.read(reg);
        let conf_size = r(Reg::ConfSize) as usize;
        let in_words = self.kernel.in_words();
        if conf_size == 0 {
            return Err("CONF_SIZE is zero".into());
        }
        if !self.kernel.accepts_partial() && !conf_size.is_multiple_of(in_words) {
            return Err(format!(
                "CONF_SIZE {conf_size} is not a multiple of the {in_words}-word chunk"
            ));
        }
        let p2p = P2pConfig::unpack(r(Reg::P2p)).map_err(|e| e.to_string())?;
        let sizes = self.kernel.in_parts();
        let mut parts: Vec<Part> = sizes
            .iter()
            .enumerate()
            .map(|(p, &size)| Part {
                size,
                source: PartSource::Dma {
                    offset: r(Reg::src_offset(p)),
                },
            })
            .collect();
        if p2p.load_enabled {
            let groups = r(Reg::P2pGroups);
            for (k, &src) in p2p.sources.iter().enumerate() {
                let p = ((groups >> (2 * k)) & 0b11) as usize;
                let part = parts
                    .get_mut(p)
                    .ok_or_else(|| format!("p2p source {src} mapped to missing part {p}"))?;
                match &mut part.source {
                    PartSource::P2p { sources } => sources.push(src),
                    s @ PartSource::Dma { .. } => *s = PartSource::P2p { sources: vec![src] },
                }
            }
        }
        let dma_needed = parts
            .iter()
            .any(|p| matches!(p.source, PartSource::Dma { .. }))
            || !p2p.store_enabled
            || r(Reg::StoreMirror) != 0;
        if dma_needed && self.memory.is_none() {
            return Err("DMA requested but the SoC has no memory tile".into());
        }
        let stride = r(Reg::FrameStride);
        if stride == 0 {
            return Err("FRAME_STRIDE is zero".into());
        }
        Ok(Run {
            owner,
            conf_size,
            n_chunks: conf_size.div_ceil(in_words),
            chunk: 0,
            parts,
            frame_base: r(Reg::FrameBase),
            frame_stride: stride,
            dst_offset: r(Reg::DstOffset),
            tlb_base: r(Reg::TlbBase),
            tlb_bound: r(Reg::TlbBound),
            p2p_store: p2p.store_enabled,
            dma_store: !p2p.store_enabled || r(Reg::StoreMirror) != 0,
            fanout: r(Reg::P2pFanout).max(1) as usize,
            phase: Phase::LoadStart,
        })
    }

    fn translate(tlb: (u64, u64), offset: u64, words: usize) -> Result<u64, String> {
        let (base, bound) = tlb;
        if offset
            .checked_add(words as u64)
            .is_none_or(|end| end > bound)
        {
            return Err(format!(
                "access [{offset}, {offset}+{words}) outside the {bound}-word translated buffer"
            ));
        }
        Ok(base + offset)
    }

    fn issue_next_dma(&mut self) -> Result<(), String> {
        let run = self.run.as_mut().expect("active run");
        let tlb = (run.tlb_base, run.tlb_bound);
        let Phase::Loading {
            sizes,
            dma_todo,
            dma_inflight,
            ..
        } = &mut run.phase
        else {
            return Ok(());
        };
        if dma_inflight.is_some() {
            return Ok(());
        }
        let Some(p) = dma_todo.pop_front() else {
            return Ok(());
        };
        let PartSource::Dma { offset } = run.parts[p].source else {
            unreachable!("only DMA parts are queued")
        };
        let size = sizes[p];
        let off = offset + run.chunk as u64 * run.frame_stride * run.parts[p].size as u64;
        let phys = Self::translate(tlb, off, size)?;
        *dma_inflight = Some((p, phys));
        let meta = PacketMeta {
            address: phys,
            size: size as u64,
            ..Default::default()
        };
        let mem = self.memory.expect("checked at start");
        self.stats.dma_loads.push((phys, size as u64));
        self.emit(Packet::control(self.coord, mem, MsgType::DmaLoadReq, meta));
        Ok(())
    }

    fn on_dma_data(&mut self, pkt: Packet) -> Result<(), String> {
        let Some(Run {
            phase:
                Phase::Loading {
                    starts,
                    sizes,
                    got,
                    dma_inflight,
                    ..
                },
            ..
        }) = self.run.as_mut()
        else {
            return Err("DMA response outside a load phase".into());
        };
        if pkt.meta.error {
            return Err(format!(
                "load of address {} rejected by memory",
                pkt.meta.address
            ));
        }
        let Some((p, phys)) = *dma_inflight else {
            return Err("unexpected DMA response".into());
        };
        let at = starts[p] + (pkt.meta.address - phys) as usize;
        self.in_buf[at..at + pkt.payload.len()].copy_from_slice(&pkt.payload);
        got[p] += pkt.payload.len();
        if got[p] >= sizes[p] {
            *dma_inflight = None;
            self.issue_next_dma()?;
        }
        Ok(())
    }

    fn on_p2p_data(&mut self, pkt: Packet) -> Result<(), String> {
        let Some(run) = self.run.as_mut() else {
            return Err(format!("p2p response from {} while idle", pkt.src));
        };
        let f = run.frame();
        let Phase::Loading { starts, got, .. } = &mut run.phase else {
            return Err(format!(
                "p2p response from {} outside a load phase",
                pkt.src
            ));
        };
        if pkt.meta.chunk_id != f {
            return Err(format!(
                "p2p chunk {} from {} while loading chunk {f}",
                pkt.meta.chunk_id, pkt.src
            ));
        }
        let part = run.parts.iter().position(|part| match &part.source {
            PartSource::P2p { sources } => sources[(f % sources.len() as u64) as usize] == pkt.src,
            PartSource::Dma { .. } => false,
        });
        let Some(p) = part else {
            return Err(format!("p2p response from unexpected source {}", pkt.src));
        };
        let at = starts[p] + pkt.meta.address as usize;
        self.in_buf[at..at + pkt.payload.len()].copy_from_slice(&pkt.payload);
        got[p] += pkt.payload.len();
        Ok(())
    }

    pub fn tick(&mut self, ctx: &TickCtx) {
        if ctx.cycle < self.stall_until {
            return;
        }
        if let Err(e) = self.serve_p2p() {
            self.fail(e);
            return;
        }
        loop {
            match self.advance(ctx) {
                Ok(true) => continue,
                Ok(false) => break,
                Err(e) => {
                    self.fail(e);
                    break;
                }
            }
        }
    }

    fn serve_p2p(&mut self) -> Result<(), String> {
        for (req, data) in self.send.take_ready().map_err(|e| e.to_string())? {
            self.stats.p2p_responses += 1;
            let mut k = 0;
            while k < data.len() {
                let end = (k + self.max_packet_words).min(data.len());
                let meta = PacketMeta {
                    address: k as u64,
                    size: data.len() as u64,
                    chunk_id: req.chunk_id,
                    error: false,
                };
                self.emit(Packet::new(
                    self.coord,
                    req.requester,
                    MsgType::P2pLoadRsp,
                    data[k..end].to_vec(),
                    meta,
                ));
                k = end;
            }
        }
        Ok(())
    }

    /// Performs at most one phase transition.
    fn advance(&mut self, ctx: &TickCtx) -> Result<bool, String> {
        let Some(run) = self.run.as_mut() else {
            return Ok(false);
        };
        let in_words = self.kernel.in_words();
        match &mut run.phase {
            Phase::LoadStart => {
                let w = in_words.min(run.conf_size - run.chunk * in_words);
                let sizes: Vec<usize> = if run.parts.len() == 1 {
                    vec![w]
                } else {
                    run.parts.iter().map(|p| p.size).collect()
                };
                let starts: Vec<usize> = sizes
                    .iter()
                    .scan(0, |acc, &s| {
                        let at = *acc;
                        *acc += s;
                        Some(at)
                    })
                    .collect();
                self.in_buf.clear();
                self.in_buf.resize(w, 0);
                let f = run.frame();
                let mut dma_todo = VecDeque::new();
                let mut requests = Vec::new();
                for (p, part) in run.parts.iter().enumerate() {
                    match &part.source {
                        PartSource::Dma { .. } => dma_todo.push_back(p),
                        PartSource::P2p { sources } => {
                            let src = sources[(f % sources.len() as u64) as usize];
                            let meta = PacketMeta {
                                size: sizes[p] as u64,
                                chunk_id: f,
                                ..Default::default()
                            };
                            requests.push(Packet::control(
                                self.coord,
                                src,
                                MsgType::P2pLoadReq,
                                meta,
                            ));
                        }
                    }
                }
                run.phase = Phase::Loading {
                    got: vec![0; sizes.len()],
                    starts,
                    sizes,
                    dma_todo,
                    dma_inflight: None,
                };
                for r in requests {
                    self.stats.p2p_requests += 1;
                    self.emit(r);
                }
                self.issue_next_dma()?;
                Ok(true)
            }
            Phase::Loading { sizes, got, .. } => {
                if got.iter().zip(sizes.iter()).any(|(g, s)| g < s) {
                    return Ok(false);
                }
                let cycles = self.kernel.cycles(self.in_buf.len());
                self.out_buf = self
                    .kernel
                    .compute(&self.in_buf)
                    .map_err(|e| format!("kernel error: {e}"))?;
                self.stats.busy_cycles += cycles;
                run.phase = Phase::Computing {
                    until: ctx.cycle + cycles,
                };
                Ok(true)
            }
            Phase::Computing { until } => {
                if ctx.cycle < *until {
                    return Ok(false);
                }
                run.phase = Phase::StoreStart;
                Ok(true)
            }
            Phase::StoreStart => {
                let m = self.out_buf.len();
                let mut acks = 0;
                if run.dma_store {
                    let off = run.dst_offset
                        + run.chunk as u64 * run.frame_stride * self.kernel.out_words() as u64;
                    let phys = Self::translate((run.tlb_base, run.tlb_bound), off, m)?;
                    let mem = self.memory.expect("checked at start");
                    let mut k = 0;
                    while k < m {
                        let end = (k + self.max_packet_words).min(m);
                        let meta = PacketMeta {
                            address: phys + k as u64,
                            ..Default::default()
                        };
                        self.outbox[Plane::DmaReq.index()].push_back(Packet::new(
                            self.coord,
                            mem,
                            MsgType::DmaStore,
                            self.out_buf[k..end].to_vec(),
                            meta,
                        ));
                        self.stats.dma_stores += 1;
                        acks += 1;
                        k = end;
                    }
                }
                if run.p2p_store {
                    self.send
                        .stage(run.frame(), self.out_buf.clone(), run.fanout)
                        .map_err(|e| e.to_string())?;
                }
                run.phase = Phase::Storing { acks };
                self.serve_p2p()?;
                Ok(true)
            }
            Phase::Storing { acks } => {
                let done = *acks == 0
                    && self.send.drained()
                    && self.outbox[Plane::DmaRsp.index()].is_empty()
                    && !ctx.rsp_ni_busy;
                if !done {
                    return Ok(false);
                }
                run.chunk += 1;
                if run.chunk < run.n_chunks {
                    run.phase = Phase::LoadStart;
                } else {
                    let owner = run.owner;
                    self.run = None;
                    self.regs.set_status(Status::Done);
                    self.interrupt(owner, false);
                }
                Ok(true)
            }
        }
    }
}
