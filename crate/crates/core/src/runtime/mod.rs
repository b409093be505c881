//! Host-side runtime: device discovery, DRAM allocation, dataflow
//! validation and execution in serial, pipelined or p2p mode.

mod alloc;
mod graph;
mod plan;
mod registry;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::noc::{Coord, Link, MsgType, Packet, PacketMeta};
use crate::soc::{Advance, Soc};
use crate::tiles::Reg;

pub use alloc::{Allocator, BufferHandle};
pub use graph::{DataflowGraph, EdgeMode, EdgeSpec, IoSpec, Mode, NodeSpec};
pub use plan::{validate, PartInput, Plan, PlanDevice, PlanEdge, PlanNode, ValidationError};
pub use registry::{DeviceInfo, DeviceRegistry};

/// Default number of cycles without any packet delivery before a run is
/// declared stuck.
pub const WATCHDOG_CYCLES: u64 = 10_000_000;

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error("dataflow graph: {0}")]
    Graph(String),
    #[error("device probe failed: {0}")]
    Boot(String),
    #[error("allocation failed: {0}")]
    Alloc(String),
    #[error("invalid dataflow: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Validation(Vec<ValidationError>),
    #[error("{0}")]
    Invalid(String),
    #[error("device {device} (node `{node}`) reported an error: {message}")]
    Device {
        node: String,
        device: String,
        message: String,
    },
    #[error("no progress at cycle {cycle}: {}", .detail.join("; "))]
    Deadlock { cycle: u64, detail: Vec<String> },
}

/// Per-frame input data keyed by (node name, part). Each vector holds
/// `frames * part_size` words, frame-major.
pub type GraphInputs = BTreeMap<(String, usize), Vec<u64>>;

/// What one run produced and measured.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOutcome {
    pub mode: Mode,
    pub frames: usize,
    pub start_cycle: u64,
    pub end_cycle: u64,
    pub total_cycles: u64,
    /// Result of every output node, `frames * out_words` words.
    pub outputs: BTreeMap<String, Vec<u64>>,
    pub busy_cycles: BTreeMap<String, u64>,
    pub dram_read_words: u64,
    pub dram_write_words: u64,
    pub link_flits: BTreeMap<Link, u64>,
    pub invocations: usize,
    pub max_queue_occupancy: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Exec {
    /// Instance 0, all frames in one invocation.
    Serial,
    /// One invocation per frame on instance `f % n`.
    PerFrame,
    /// One invocation per instance covering frames `j, j+n, ...`.
    Streaming,
}

#[derive(Debug, Clone, Copy)]
struct OutBuf {
    offset: u64,
    slots: usize,
    words: usize,
}

impl OutBuf {
    fn addr(&self, frame: usize) -> u64 {
        self.offset + ((frame % self.slots) * self.words) as u64
    }

    fn is_ring(&self, frames: usize) -> bool {
        self.slots < frames
    }
}

#[derive(Debug, Clone)]
struct Job {
    frames: Vec<usize>,
}

/// Static decisions for one run of a plan.
struct Schedule<'a> {
    plan: &'a Plan,
    mode: Mode,
    frames: usize,
    exec: Vec<Exec>,
    inputs: BTreeMap<(usize, usize), u64>,
    out: Vec<Option<OutBuf>>,
    dataset_len: u64,
}

impl<'a> Schedule<'a> {
    fn new(plan: &'a Plan, mode: Mode, frames: usize) -> Self {
        let exec: Vec<Exec> = (0..plan.nodes.len())
            .map(|n| match mode {
                Mode::Serial => Exec::Serial,
                Mode::Pipe => Exec::PerFrame,
                Mode::P2p if plan.is_streaming(n) => Exec::Streaming,
                Mode::P2p => Exec::PerFrame,
            })
            .collect();
        let mut s = Schedule {
            plan,
            mode,
            frames,
            exec,
            inputs: BTreeMap::new(),
            out: Vec::new(),
            dataset_len: 0,
        };
        let mut next = 0u64;
        for (i, n) in plan.nodes.iter().enumerate() {
            for (p, inp) in n.inputs.iter().enumerate() {
                if *inp == PartInput::External {
                    s.inputs.insert((i, p), next);
                    next += (frames * n.parts[p]) as u64;
                }
            }
        }
        for (i, n) in plan.nodes.iter().enumerate() {
            let buf = if !s.stores(i) {
                None
            } else {
                let slots = if mode == Mode::Serial || n.is_output || s.exec[i] == Exec::Streaming {
                    frames
                } else {
                    let widest = s
                        .dma_consumers(i)
                        .map(|c| plan.nodes[c].instances())
                        .chain([n.instances()])
                        .max()
                        .unwrap_or(1);
                    frames.min(2 * widest)
                };
                let b = OutBuf {
                    offset: next,
                    slots,
                    words: n.out_words,
                };
                next += (slots * n.out_words) as u64;
                Some(b)
            };
            s.out.push(buf);
        }
        s.dataset_len = next;
        s
    }

    fn dma_edge(&self, e: usize) -> bool {
        self.mode != Mode::P2p || self.plan.edges[e].mode == EdgeMode::Dma
    }

    fn dma_consumers(&self, n: usize) -> impl Iterator<Item = usize> + '_ {
        self.plan.nodes[n]
            .out_edges
            .iter()
            .filter(|&&e| self.dma_edge(e))
            .map(|&e| self.plan.edges[e].dst)
    }

    /// A node writes DRAM unless its result only travels over p2p.
    fn stores(&self, n: usize) -> bool {
        let node = &self.plan.nodes[n];
        node.is_output
            || node.out_edges.is_empty()
            || node.out_edges.iter().any(|&e| self.dma_edge(e))
    }

    fn src_offset(&self, n: usize, part: usize, frame: usize) -> u64 {
        let node = &self.plan.nodes[n];
        match node.inputs[part] {
            PartInput::External => self.inputs[&(n, part)] + (frame * node.parts[part]) as u64,
            PartInput::Edge(e) if self.dma_edge(e) => self.out[self.plan.edges[e].src]
                .expect("DMA producers store")
                .addr(frame),
            PartInput::Edge(_) => 0,
        }
    }

    /// Register writes for one invocation, CMD last.
    fn registers(
        &self,
        n: usize,
        job: &Job,
        tlb: BufferHandle,
    ) -> Result<Vec<(Reg, u64)>, RuntimeError> {
        let node = &self.plan.nodes[n];
        let first = job.frames[0];
        let stride = match self.exec[n] {
            Exec::Serial => 1,
            Exec::PerFrame | Exec::Streaming => node.instances(),
        };
        let mut w = vec![
            (Reg::TlbBase, tlb.base),
            (Reg::TlbBound, tlb.len),
            (Reg::ConfSize, (job.frames.len() * node.in_words()) as u64),
        ];
        for p in 0..node.parts.len() {
            w.push((Reg::src_offset(p), self.src_offset(n, p, first)));
        }
        w.push((Reg::DstOffset, self.out[n].map_or(0, |b| b.addr(first))));
        w.push((Reg::FrameBase, first as u64));
        w.push((Reg::FrameStride, stride as u64));
        if self.mode == Mode::P2p {
            let (cfg, groups) = self.plan.p2p_config(n);
            let packed = cfg
                .pack()
                .map_err(|e| RuntimeError::Invalid(format!("node `{}`: {e}", node.name)))?;
            w.push((Reg::P2p, packed));
            w.push((Reg::P2pGroups, groups));
            w.push((Reg::P2pFanout, self.plan.p2p_fanout(n).max(1) as u64));
            w.push((
                Reg::StoreMirror,
                u64::from(cfg.store_enabled && self.stores(n)),
            ));
        } else {
            w.extend([
                (Reg::P2p, 0),
                (Reg::P2pGroups, 0),
                (Reg::P2pFanout, 1),
                (Reg::StoreMirror, 0),
            ]);
        }
        w.push((Reg::Cmd, 1));
        Ok(w)
    }
}

/// Mutable progress of one run.
struct Progress {
    done: Vec<Vec<bool>>,
    next_frame: Vec<usize>,
    active: Vec<Vec<Option<Job>>>,
    serial_cursor: usize,
    streaming_launched: bool,
    invocations: usize,
}

impl Progress {
    fn complete(&self) -> bool {
        self.done.iter().all(|d| d.iter().all(|&x| x))
    }
}

/// The host program: owns the device registry and the DRAM allocator.
#[derive(Debug, Clone)]
pub struct Runtime {
    host: Coord,
    registry: DeviceRegistry,
    alloc: Allocator,
    watchdog: u64,
}

impl Runtime {
    /// Probes the SoC's devices from its first processor tile.
    pub fn boot(soc: &mut Soc) -> Result<Self, RuntimeError> {
        let host = *soc
            .processors()
            .first()
            .ok_or_else(|| RuntimeError::Boot("the SoC has no processor tile".into()))?;
        let registry = DeviceRegistry::probe(soc, host)?;
        let capacity = soc.memory().map_or(0, |m| m.dram().len() as u64);
        Ok(Self {
            host,
            registry,
            alloc: Allocator::new(capacity),
            watchdog: WATCHDOG_CYCLES,
        })
    }

    pub fn host(&self) -> Coord {
        self.host
    }

    pub fn registry(&self) -> &DeviceRegistry {
        &self.registry
    }

    pub fn set_watchdog(&mut self, cycles: u64) {
        self.watchdog = cycles;
    }

    /// Reserves a zero-filled DRAM buffer.
    pub fn alloc(&mut self, soc: &mut Soc, size: u64) -> Result<BufferHandle, RuntimeError> {
        let h = self.alloc.alloc(size)?;
        let mem = soc
            .memory_mut()
            .ok_or_else(|| RuntimeError::Alloc("the SoC has no memory tile".into()))?;
        mem.dram_mut()[h.base as usize..h.end() as usize].fill(0);
        Ok(h)
    }

    pub fn validate(&self, graph: &DataflowGraph) -> Result<Plan, RuntimeError> {
        validate(graph, &self.registry).map_err(RuntimeError::Validation)
    }

    /// Executes `frames` frames of `plan` and returns the outputs and counters.
    /// DRAM used by the run is released before returning.
    pub fn run(
        &mut self,
        soc: &mut Soc,
        plan: &Plan,
        mode: Mode,
        frames: usize,
        inputs: &GraphInputs,
    ) -> Result<RunOutcome, RuntimeError> {
        self.run_observed(soc, plan, mode, frames, inputs, &mut |_| {})
    }

    /// As [`Runtime::run`], calling `observer` after every simulated cycle.
    pub fn run_observed(
        &mut self,
        soc: &mut Soc,
        plan: &Plan,
        mode: Mode,
        frames: usize,
        inputs: &GraphInputs,
        observer: &mut dyn FnMut(&Soc),
    ) -> Result<RunOutcome, RuntimeError> {
        if frames == 0 {
            return Err(RuntimeError::Invalid(
                "frame count must be at least 1".into(),
            ));
        }
        for n in &plan.nodes {
            for (p, inp) in n.inputs.iter().enumerate() {
                if *inp != PartInput::External {
                    continue;
                }
                let want = frames * n.parts[p];
                match inputs.get(&(n.name.clone(), p)) {
                    None => {
                        return Err(RuntimeError::Invalid(format!(
                            "missing input for node `{}` part {p}",
                            n.name
                        )))
                    }
                    Some(v) if v.len() != want => {
                        return Err(RuntimeError::Invalid(format!(
                            "input for node `{}` part {p} has {} words, expected {want}",
                            n.name,
                            v.len()
                        )))
                    }
                    Some(_) => {}
                }
            }
        }
        let sched = Schedule::new(plan, mode, frames);
        let mark = self.alloc.clone();
        let result = self.run_inner(soc, &sched, inputs, observer);
        self.alloc = mark;
        result
    }

    fn run_inner(
        &mut self,
        soc: &mut Soc,
        sched: &Schedule,
        inputs: &GraphInputs,
        observer: &mut dyn FnMut(&Soc),
    ) -> Result<RunOutcome, RuntimeError> {
        let plan = sched.plan;
        let frames = sched.frames;
        let dataset = if sched.dataset_len > 0 {
            self.alloc(soc, sched.dataset_len)?
        } else {
            BufferHandle { base: 0, len: 0 }
        };
        if let Some(mem) = soc.memory_mut() {
            let dram = mem.dram_mut();
            for (&(n, p), &off) in &sched.inputs {
                let data = &inputs[&(plan.nodes[n].name.clone(), p)];
                let at = (dataset.base + off) as usize;
                dram[at..at + data.len()].copy_from_slice(data);
            }
        }

        let mut owner: BTreeMap<Coord, (usize, usize)> = BTreeMap::new();
        for (i, n) in plan.nodes.iter().enumerate() {
            for (j, d) in n.devices.iter().enumerate() {
                owner.insert(d.coord, (i, j));
            }
        }

        soc.reset_stats();
        let _ = soc.host_drain(self.host);
        let start = soc.cycle();
        let mut prog = Progress {
            done: plan.nodes.iter().map(|_| vec![false; frames]).collect(),
            next_frame: vec![0; plan.nodes.len()],
            active: plan
                .nodes
                .iter()
                .map(|n| vec![None; n.instances()])
                .collect(),
            serial_cursor: 0,
            streaming_launched: false,
            invocations: 0,
        };
        let mut end = start;
        self.launch_ready(soc, sched, &mut prog, dataset)?;
        while !prog.complete() {
            if soc.advance() == Advance::Quiescent {
                return Err(self.deadlock(soc, sched, &prog));
            }
            observer(soc);
            let mut progressed = false;
            for (cycle, p) in soc.host_drain(self.host) {
                if p.msg_type != MsgType::Interrupt {
                    continue;
                }
                let Some(&(n, j)) = owner.get(&p.src) else {
                    continue;
                };
                if p.meta.error {
                    let message = soc
                        .accelerator(p.src)
                        .and_then(|a| a.last_error().map(str::to_string))
                        .unwrap_or_else(|| "unspecified failure".into());
                    return Err(RuntimeError::Device {
                        node: plan.nodes[n].name.clone(),
                        device: plan.nodes[n].devices[j].name.clone(),
                        message,
                    });
                }
                if let Some(job) = prog.active[n][j].take() {
                    for f in job.frames {
                        prog.done[n][f] = true;
                    }
                    end = cycle;
                    progressed = true;
                }
            }
            if progressed {
                self.launch_ready(soc, sched, &mut prog, dataset)?;
            }
            if soc.cycle().saturating_sub(soc.last_delivery().max(start)) > self.watchdog {
                return Err(self.deadlock(soc, sched, &prog));
            }
        }

        let mut outputs = BTreeMap::new();
        if let Some(mem) = soc.memory() {
            for (i, n) in plan.nodes.iter().enumerate() {
                if n.is_output {
                    let b = sched.out[i].expect("outputs store");
                    let at = (dataset.base + b.offset) as usize;
                    outputs.insert(
                        n.name.clone(),
                        mem.dram()[at..at + frames * n.out_words].to_vec(),
                    );
                }
            }
        }
        let busy_cycles = plan
            .nodes
            .iter()
            .map(|n| {
                let busy = n
                    .devices
                    .iter()
                    .map(|d| {
                        soc.accelerator(d.coord)
                            .map_or(0, |a| a.stats().busy_cycles)
                    })
                    .sum();
                (n.name.clone(), busy)
            })
            .collect();
        Ok(RunOutcome {
            mode: sched.mode,
            frames,
            start_cycle: start,
            end_cycle: end,
            total_cycles: end + 1 - start,
            outputs,
            busy_cycles,
            dram_read_words: soc.memory().map_or(0, |m| m.read_words()),
            dram_write_words: soc.memory().map_or(0, |m| m.write_words()),
            link_flits: soc.mesh().link_flits(),
            invocations: prog.invocations,
            max_queue_occupancy: soc.mesh().max_queue_occupancy(),
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn launch(
        &self,
        soc: &mut Soc,
        sched: &Schedule,
        prog: &mut Progress,
        n: usize,
        j: usize,
        job: Job,
        tlb: BufferHandle,
    ) -> Result<(), RuntimeError> {
        let dev = sched.plan.nodes[n].devices[j].coord;
        for (reg, value) in sched.registers(n, &job, tlb)? {
            let meta = PacketMeta {
                address: reg.id(),
                ..Default::default()
            };
            soc.host_send(Packet::new(
                self.host,
                dev,
                MsgType::ConfigWrite,
                vec![value],
                meta,
            ));
        }
        prog.active[n][j] = Some(job);
        prog.invocations += 1;
        Ok(())
    }

    fn frame_ready(sched: &Schedule, prog: &Progress, n: usize, f: usize) -> bool {
        let plan = sched.plan;
        let inst = plan.nodes[n].instances();
        if prog.active[n][f % inst].is_some() || (f >= inst && !prog.done[n][f - inst]) {
            return false;
        }
        let producers_done = plan.nodes[n]
            .in_edges
            .iter()
            .filter(|&&e| sched.dma_edge(e))
            .all(|&e| prog.done[plan.edges[e].src][f]);
        if !producers_done {
            return false;
        }
        match sched.out[n] {
            Some(b) if b.is_ring(sched.frames) && f >= b.slots => {
                sched.dma_consumers(n).all(|c| prog.done[c][f - b.slots])
            }
            _ => true,
        }
    }

    fn launch_ready(
        &self,
        soc: &mut Soc,
        sched: &Schedule,
        prog: &mut Progress,
        tlb: BufferHandle,
    ) -> Result<(), RuntimeError> {
        let plan = sched.plan;
        let frames = sched.frames;
        if !prog.streaming_launched {
            prog.streaming_launched = true;
            for n in 0..plan.nodes.len() {
                if sched.exec[n] != Exec::Streaming {
                    continue;
                }
                let inst = plan.nodes[n].instances();
                for j in 0..inst.min(frames) {
                    let job = Job {
                        frames: (j..frames).step_by(inst).collect(),
                    };
                    self.launch(soc, sched, prog, n, j, job, tlb)?;
                }
            }
        }
        for n in 0..plan.nodes.len() {
            match sched.exec[n] {
                Exec::Serial => {
                    if n == prog.serial_cursor && prog.active[n][0].is_none() && !prog.done[n][0] {
                        let job = Job {
                            frames: (0..frames).collect(),
                        };
                        self.launch(soc, sched, prog, n, 0, job, tlb)?;
                    }
                    // The next node is picked up on the following iteration.
                    if n == prog.serial_cursor && prog.done[n].iter().all(|&d| d) {
                        prog.serial_cursor += 1;
                    }
                }
                Exec::PerFrame => {
                    while prog.next_frame[n] < frames
                        && Self::frame_ready(sched, prog, n, prog.next_frame[n])
                    {
                        let f = prog.next_frame[n];
                        let j = f % plan.nodes[n].instances();
                        self.launch(soc, sched, prog, n, j, Job { frames: vec![f] }, tlb)?;
                        prog.next_frame[n] += 1;
                    }
                }
                Exec::Streaming => {}
            }
        }
        Ok(())
    }

    fn deadlock(&self, soc: &Soc, sched: &Schedule, prog: &Progress) -> RuntimeError {
        let plan = sched.plan;
        let mut detail = soc.wait_report();
        for (n, node) in plan.nodes.iter().enumerate() {
            let pending = prog.done[n].iter().filter(|&&d| !d).count();
            if pending > 0 {
                let running: Vec<String> = prog.active[n]
                    .iter()
                    .enumerate()
                    .filter_map(|(j, a)| {
                        a.as_ref().map(|job| {
                            format!("{} on frames {:?}", node.devices[j].name, job.frames)
                        })
                    })
                    .collect();
                detail.push(format!(
                    "node `{}`: {pending} frames outstanding, running: {}",
                    node.name,
                    if running.is_empty() {
                        "none".into()
                    } else {
                        running.join(", ")
                    }
                ));
            }
        }
        RuntimeError::Deadlock {
            cycle: soc.cycle(),
            detail,
        }
    }
}
