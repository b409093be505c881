use std::collections::{BTreeMap, HashMap, VecDeque};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::packet::{Coord, MsgType, Packet, Plane};
use super::NocError;

/// Fabric parameters shared by every plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct NocParams {
    /// Input queue capacity in flits.
    pub queue_depth: usize,
    /// Cycles a flit spends per router-to-router hop.
    pub router_latency: u64,
    pub flit_bits: u32,
    pub max_packet_words: usize,
}

impl Default for NocParams {
    fn default() -> Self {
        Self {
            queue_depth: 4,
            router_latency: 1,
            flit_bits: 64,
            max_packet_words: 256,
        }
    }
}

/// Router port. The declaration order is the arbitration tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Port {
    Local,
    North,
    South,
    East,
    West,
}

impl Port {
    pub const ALL: [Port; 5] = [
        Port::Local,
        Port::North,
        Port::South,
        Port::East,
        Port::West,
    ];

    fn index(self) -> usize {
        self as usize
    }

    fn opposite(self) -> Port {
        match self {
            Port::Local => Port::Local,
            Port::North => Port::South,
            Port::South => Port::North,
            Port::East => Port::West,
            Port::West => Port::East,
        }
    }
}

/// Dimension-order route: hops after `src`, ending at `dst`.
pub fn route_xy(src: Coord, dst: Coord, cols: usize, rows: usize) -> Result<Vec<Coord>, NocError> {
    for c in [src, dst] {
        if c.x >= cols || c.y >= rows {
            return Err(NocError::OutOfBounds {
                coord: c,
                cols,
                rows,
            });
        }
    }
    let mut path = Vec::with_capacity(src.manhattan(dst));
    let mut cur = src;
    while cur.x != dst.x {
        cur.x = if dst.x > cur.x { cur.x + 1 } else { cur.x - 1 };
        path.push(cur);
    }
    while cur.y != dst.y {
        cur.y = if dst.y > cur.y { cur.y + 1 } else { cur.y - 1 };
        path.push(cur);
    }
    Ok(path)
}

fn xy_output(at: Coord, dst: Coord) -> Port {
    use std::cmp::Ordering::*;
    match dst.x.cmp(&at.x) {
        Greater => Port::East,
        Less => Port::West,
        Equal => match dst.y.cmp(&at.y) {
            Greater => Port::South,
            Less => Port::North,
            Equal => Port::Local,
        },
    }
}

#[derive(Debug, Clone, Copy)]
struct Flit {
    pid: u64,
    seq: u32,
    tail: bool,
    dst: Coord,
    ready_at: u64,
}

#[derive(Debug, Default)]
struct Router {
    inputs: [VecDeque<Flit>; 5],
    /// Input port holding each output for the duration of a packet.
    owner: [Option<usize>; 5],
    /// Round-robin pointer per output.
    rr: [usize; 5],
}

#[derive(Debug, Clone, Copy)]
struct Injection {
    pid: u64,
    next_seq: u32,
    total: u32,
    dst: Coord,
}

#[derive(Debug)]
struct PlaneFabric {
    routers: Vec<Router>,
    injecting: Vec<Option<Injection>>,
    queued_flits: usize,
    active_injections: usize,
}

#[derive(Debug)]
struct Tracked {
    packet: Packet,
    injected_at: u64,
    path: Vec<Coord>,
}

/// A packet whose tail flit left the network at its destination.
#[derive(Debug, Clone)]
pub struct Delivery {
    pub packet: Packet,
    pub injected_at: u64,
    pub delivered_at: u64,
    /// Routers visited after the source; only filled when path recording is on.
    pub path: Vec<Coord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TraceKind {
    Inject,
    Deliver,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub cycle: u64,
    pub kind: TraceKind,
    pub id: u64,
    pub src: Coord,
    pub dst: Coord,
    pub msg_type: MsgType,
    pub length: usize,
    pub chunk_id: u64,
}

/// Directed inter-router link on one plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Link {
    pub from: Coord,
    pub to: Coord,
    pub plane: Plane,
}

impl std::fmt::Display for Link {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}->{}/{}", self.from, self.to, self.plane)
    }
}

#[derive(Debug, Clone, Default)]
struct NocStats {
    injected_flits: u64,
    ejected_flits: u64,
    delivered_packets: u64,
    /// Indexed by plane, router and direction (N, S, E, W).
    link_flits: Vec<u64>,
    flow_flits: HashMap<(Coord, Coord, Plane), u64>,
    max_occupancy: usize,
}

/// Queue inventory of the fabric, used to show that no resources are added.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueueInventory {
    pub planes: usize,
    pub queues: usize,
    pub total_capacity_flits: usize,
}

/// Multi-plane 2D mesh with wormhole switching and XY routing.
///
/// Timing on an idle fabric: a packet of `F` flits injected at cycle `t`
/// over `H` hops is delivered at `t + F + H * router_latency`.
#[derive(Debug)]
pub struct Mesh {
    cols: usize,
    rows: usize,
    params: NocParams,
    planes: Vec<PlaneFabric>,
    packets: HashMap<u64, Tracked>,
    next_id: u64,
    record_paths: bool,
    trace: Option<Vec<TraceEvent>>,
    digest: Sha256,
    stats: NocStats,
}

impl Mesh {
    pub fn new(cols: usize, rows: usize, params: NocParams) -> Result<Self, NocError> {
        if cols == 0 || rows == 0 {
            return Err(NocError::EmptyMesh);
        }
        if params.queue_depth == 0 || params.router_latency == 0 || params.flit_bits == 0 {
            return Err(NocError::BadParams(
                "queue_depth, router_latency and flit_bits must be positive".into(),
            ));
        }
        if params.max_packet_words == 0 {
            return Err(NocError::BadParams(
                "max_packet_words must be positive".into(),
            ));
        }
        let n = cols * rows;
        let planes = Plane::ALL
            .iter()
            .map(|_| PlaneFabric {
                routers: (0..n).map(|_| Router::default()).collect(),
                injecting: vec![None; n],
                queued_flits: 0,
                active_injections: 0,
            })
            .collect();
        let stats = NocStats {
            link_flits: vec![0; Plane::ALL.len() * n * 4],
            ..Default::default()
        };
        Ok(Self {
            cols,
            rows,
            params,
            planes,
            packets: HashMap::new(),
            next_id: 0,
            record_paths: false,
            trace: None,
            digest: Sha256::new(),
            stats,
        })
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn params(&self) -> &NocParams {
        &self.params
    }

    pub fn contains(&self, c: Coord) -> bool {
        c.x < self.cols && c.y < self.rows
    }

    pub fn route(&self, src: Coord, dst: Coord) -> Result<Vec<Coord>, NocError> {
        route_xy(src, dst, self.cols, self.rows)
    }

    pub fn set_record_paths(&mut self, on: bool) {
        self.record_paths = on;
    }

    pub fn set_record_trace(&mut self, on: bool) {
        self.trace = if on { Some(Vec::new()) } else { None };
    }

    pub fn trace(&self) -> Option<&[TraceEvent]> {
        self.trace.as_deref()
    }

    /// Hash of every inject/deliver event so far.
    pub fn trace_digest(&self) -> String {
        hex::encode(self.digest.clone().finalize())
    }

    fn idx(&self, c: Coord) -> usize {
        c.y * self.cols + c.x
    }

    fn coord(&self, idx: usize) -> Coord {
        Coord::new(idx % self.cols, idx / self.cols)
    }

    fn neighbor(&self, idx: usize, port: Port) -> usize {
        match port {
            Port::Local => idx,
            Port::North => idx - self.cols,
            Port::South => idx + self.cols,
            Port::East => idx + 1,
            Port::West => idx - 1,
        }
    }

    /// Offers a packet to the network interface at `at`. Returns `false` when the
    /// interface is still serializing an earlier packet on the same plane or the
    /// local input queue is full; the caller retries later.
    pub fn inject(&mut self, packet: Packet, at: Coord, cycle: u64) -> bool {
        assert_eq!(at, packet.src, "packets are injected at their source tile");
        assert!(
            self.contains(packet.src) && self.contains(packet.dst),
            "packet endpoints outside the mesh"
        );
        assert!(
            packet.length() <= self.params.max_packet_words,
            "packet of {} words exceeds max_packet_words {}",
            packet.length(),
            self.params.max_packet_words
        );
        if !self.can_inject(at, packet.plane()) {
            return false;
        }
        let r = self.idx(at);
        let fabric = &mut self.planes[packet.plane().index()];
        let id = self.next_id;
        self.next_id += 1;
        let total = packet.flits(self.params.flit_bits) as u32;
        fabric.injecting[r] = Some(Injection {
            pid: id,
            next_seq: 0,
            total,
            dst: packet.dst,
        });
        fabric.active_injections += 1;
        self.record(TraceEvent {
            cycle,
            kind: TraceKind::Inject,
            id,
            src: packet.src,
            dst: packet.dst,
            msg_type: packet.msg_type,
            length: packet.length(),
            chunk_id: packet.meta.chunk_id,
        });
        self.packets.insert(
            id,
            Tracked {
                packet,
                injected_at: cycle,
                path: Vec::new(),
            },
        );
        true
    }

    /// Whether [`Mesh::inject`] would accept a packet on `plane` at `at` now.
    pub fn can_inject(&self, at: Coord, plane: Plane) -> bool {
        let fabric = &self.planes[plane.index()];
        let r = self.idx(at);
        fabric.injecting[r].is_none()
            && fabric.routers[r].inputs[Port::Local.index()].len() < self.params.queue_depth
    }

    /// True while the interface at `at` is still serializing a packet on `plane`.
    pub fn injection_busy(&self, at: Coord, plane: Plane) -> bool {
        self.planes[plane.index()].injecting[self.idx(at)].is_some()
    }

    pub fn is_idle(&self) -> bool {
        self.planes
            .iter()
            .all(|p| p.queued_flits == 0 && p.active_injections == 0)
    }

    /// Advances every plane by one cycle and returns the packets whose tail
    /// flit was ejected this cycle.
    pub fn step(&mut self, cycle: u64) -> Vec<Delivery> {
        let mut out = Vec::new();
        for plane in Plane::ALL {
            let p = plane.index();
            if self.planes[p].queued_flits == 0 && self.planes[p].active_injections == 0 {
                continue;
            }
            self.step_plane(plane, cycle, &mut out);
        }
        out
    }

    fn step_plane(&mut self, plane: Plane, cycle: u64, out: &mut Vec<Delivery>) {
        let p = plane.index();
        let depth = self.params.queue_depth;
        let n = self.cols * self.rows;

        // Switch allocation against start-of-cycle occupancy.
        let mut moves: Vec<(usize, usize, Port)> = Vec::new();
        {
            let fabric = &self.planes[p];
            for r in 0..n {
                let router = &fabric.routers[r];
                let here = self.coord(r);
                for out_port in Port::ALL {
                    let o = out_port.index();
                    if !self.port_exists(here, out_port) {
                        continue;
                    }
                    let candidate = match router.owner[o] {
                        Some(inp) => router.inputs[inp]
                            .front()
                            .filter(|f| f.ready_at <= cycle)
                            .map(|_| inp),
                        None => (0..5).map(|k| (router.rr[o] + k) % 5).find(|&inp| {
                            router.inputs[inp].front().is_some_and(|f| {
                                f.seq == 0
                                    && f.ready_at <= cycle
                                    && xy_output(here, f.dst) == out_port
                            })
                        }),
                    };
                    let Some(inp) = candidate else { continue };
                    let has_space = out_port == Port::Local || {
                        let nb = self.neighbor(r, out_port);
                        fabric.routers[nb].inputs[out_port.opposite().index()].len() < depth
                    };
                    if has_space {
                        moves.push((r, inp, out_port));
                    }
                }
            }
        }

        // Switch traversal.
        let latency = self.params.router_latency;
        for (r, inp, out_port) in moves {
            let o = out_port.index();
            let flit = self.planes[p].routers[r].inputs[inp]
                .pop_front()
                .expect("allocated flit");
            self.planes[p].queued_flits -= 1;
            {
                let router = &mut self.planes[p].routers[r];
                if flit.seq == 0 {
                    router.rr[o] = (inp + 1) % 5;
                }
                router.owner[o] = if flit.tail { None } else { Some(inp) };
            }
            if out_port == Port::Local {
                self.stats.ejected_flits += 1;
                if flit.tail {
                    let tracked = self.packets.remove(&flit.pid).expect("tracked packet");
                    self.stats.delivered_packets += 1;
                    self.record(TraceEvent {
                        cycle,
                        kind: TraceKind::Deliver,
                        id: flit.pid,
                        src: tracked.packet.src,
                        dst: tracked.packet.dst,
                        msg_type: tracked.packet.msg_type,
                        length: tracked.packet.length(),
                        chunk_id: tracked.packet.meta.chunk_id,
                    });
                    out.push(Delivery {
                        packet: tracked.packet,
                        injected_at: tracked.injected_at,
                        delivered_at: cycle,
                        path: tracked.path,
                    });
                }
                continue;
            }
            let nb = self.neighbor(r, out_port);
            let moved = Flit {
                ready_at: cycle + latency,
                ..flit
            };
            let queue = &mut self.planes[p].routers[nb].inputs[out_port.opposite().index()];
            queue.push_back(moved);
            let occ = queue.len();
            self.planes[p].queued_flits += 1;
            self.stats.max_occupancy = self.stats.max_occupancy.max(occ);
            let link_idx = (p * n + r) * 4 + (o - 1);
            self.stats.link_flits[link_idx] += 1;
            let tracked = self.packets.get_mut(&flit.pid).expect("tracked packet");
            *self
                .stats
                .flow_flits
                .entry((tracked.packet.src, tracked.packet.dst, plane))
                .or_insert(0) += 1;
            if self.record_paths && flit.seq == 0 {
                let c = Coord::new(nb % self.cols, nb / self.cols);
                tracked.path.push(c);
            }
        }

        // Network-interface serialization, one flit per cycle.
        for r in 0..n {
            let fabric = &mut self.planes[p];
            let Some(mut inj) = fabric.injecting[r] else {
                continue;
            };
            let queue = &mut fabric.routers[r].inputs[Port::Local.index()];
            if queue.len() >= depth {
                continue;
            }
            let tail = inj.next_seq + 1 == inj.total;
            queue.push_back(Flit {
                pid: inj.pid,
                seq: inj.next_seq,
                tail,
                dst: inj.dst,
                ready_at: cycle + 1,
            });
            let occ = queue.len();
            fabric.queued_flits += 1;
            inj.next_seq += 1;
            fabric.injecting[r] = if tail {
                fabric.active_injections -= 1;
                None
            } else {
                Some(inj)
            };
            self.stats.injected_flits += 1;
            self.stats.max_occupancy = self.stats.max_occupancy.max(occ);
        }
    }

    fn port_exists(&self, at: Coord, port: Port) -> bool {
        match port {
            Port::Local => true,
            Port::North => at.y > 0,
            Port::South => at.y + 1 < self.rows,
            Port::East => at.x + 1 < self.cols,
            Port::West => at.x > 0,
        }
    }

    fn record(&mut self, ev: TraceEvent) {
        self.digest.update(ev.cycle.to_le_bytes());
        self.digest.update([ev.kind as u8, ev.msg_type as u8]);
        self.digest.update(ev.id.to_le_bytes());
        for c in [ev.src, ev.dst] {
            self.digest.update((c.x as u64).to_le_bytes());
            self.digest.update((c.y as u64).to_le_bytes());
        }
        self.digest.update((ev.length as u64).to_le_bytes());
        self.digest.update(ev.chunk_id.to_le_bytes());
        if let Some(t) = self.trace.as_mut() {
            t.push(ev);
        }
    }

    pub fn injected_flits(&self) -> u64 {
        self.stats.injected_flits
    }

    pub fn ejected_flits(&self) -> u64 {
        self.stats.ejected_flits
    }

    pub fn delivered_packets(&self) -> u64 {
        self.stats.delivered_packets
    }

    /// Flits currently held in router queues.
    pub fn flits_in_flight(&self) -> u64 {
        self.planes.iter().map(|p| p.queued_flits as u64).sum()
    }

    pub fn packets_in_flight(&self) -> usize {
        self.packets.len()
    }

    /// Largest queue occupancy observed since the last stats reset.
    pub fn max_queue_occupancy(&self) -> usize {
        self.stats.max_occupancy
    }

    pub fn current_max_occupancy(&self) -> usize {
        self.planes
            .iter()
            .flat_map(|p| p.routers.iter())
            .flat_map(|r| r.inputs.iter().map(VecDeque::len))
            .max()
            .unwrap_or(0)
    }

    /// Flit count of one inter-router link.
    pub fn link_flit_count(&self, link: Link) -> u64 {
        let n = self.cols * self.rows;
        let r = self.idx(link.from);
        let port = xy_output(link.from, link.to);
        assert!(
            port != Port::Local
                && self.neighbor(r, port) == self.idx(link.to)
                && link.from.manhattan(link.to) == 1,
            "{link} is not a mesh link"
        );
        self.stats.link_flits[(link.plane.index() * n + r) * 4 + (port.index() - 1)]
    }

    /// Nonzero per-link flit counters.
    pub fn link_flits(&self) -> BTreeMap<Link, u64> {
        let n = self.cols * self.rows;
        let mut out = BTreeMap::new();
        for plane in Plane::ALL {
            for r in 0..n {
                for port in [Port::North, Port::South, Port::East, Port::West] {
                    let v = self.stats.link_flits[(plane.index() * n + r) * 4 + (port.index() - 1)];
                    if v > 0 {
                        let from = self.coord(r);
                        let to = self.coord(self.neighbor(r, port));
                        out.insert(Link { from, to, plane }, v);
                    }
                }
            }
        }
        out
    }

    /// Total link traversals by packets of one (src, dst, plane) flow.
    pub fn flow_flits(&self, src: Coord, dst: Coord, plane: Plane) -> u64 {
        self.stats
            .flow_flits
            .get(&(src, dst, plane))
            .copied()
            .unwrap_or(0)
    }

    pub fn reset_stats(&mut self) {
        let len = self.stats.link_flits.len();
        self.stats = NocStats {
            link_flits: vec![0; len],
            injected_flits: 0,
            ejected_flits: 0,
            ..Default::default()
        };
        // keep conservation meaningful across a reset
        self.stats.injected_flits = self.flits_in_flight();
        self.stats.max_occupancy = self.current_max_occupancy();
    }

    pub fn queue_inventory(&self) -> QueueInventory {
        let per_router = 5;
        let queues = self.planes.len() * self.cols * self.rows * per_router;
        QueueInventory {
            planes: self.planes.len(),
            queues,
            total_capacity_flits: queues * self.params.queue_depth,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noc::PacketMeta;

    fn pkt(src: Coord, dst: Coord, msg: MsgType, words: usize) -> Packet {
        Packet::new(src, dst, msg, vec![7; words], PacketMeta::default())
    }

    fn run_until_delivered(mesh: &mut Mesh, start: u64, limit: u64) -> Vec<Delivery> {
        let mut all = Vec::new();
        let mut c = start;
        while c < start + limit {
            all.extend(mesh.step(c));
            if mesh.is_idle() {
                break;
            }
            c += 1;
        }
        all
    }

    #[test]
    fn route_examples() {
        let c = Coord::new;
        assert_eq!(route_xy(c(0, 0), c(0, 0), 3, 3).unwrap(), vec![]);
        assert_eq!(
            route_xy(c(0, 0), c(2, 1), 3, 3).unwrap(),
            vec![c(1, 0), c(2, 0), c(2, 1)]
        );
        assert_eq!(
            route_xy(c(2, 2), c(0, 2), 3, 3).unwrap(),
            vec![c(1, 2), c(0, 2)]
        );
        assert!(matches!(
            route_xy(c(0, 0), c(3, 0), 3, 3),
            Err(NocError::OutOfBounds { .. })
        ));
    }

    #[test]
    fn empty_network_accepts_and_full_queue_rejects() {
        let mut mesh = Mesh::new(2, 1, NocParams::default()).unwrap();
        let a = Coord::new(0, 0);
        let b = Coord::new(1, 0);
        assert!(mesh.inject(pkt(a, b, MsgType::DmaStore, 4), a, 0));
        // interface busy serializing the first packet
        assert!(!mesh.inject(pkt(a, b, MsgType::DmaStore, 4), a, 0));
        assert!(mesh.step(0).is_empty());
    }

    #[test]
    fn full_local_queue_rejects() {
        // a depth-1 queue whose flit cannot leave because the output is held
        let params = NocParams {
            queue_depth: 1,
            ..Default::default()
        };
        let mut mesh = Mesh::new(1, 1, params).unwrap();
        let a = Coord::new(0, 0);
        assert!(mesh.inject(pkt(a, a, MsgType::DmaStore, 0), a, 0));
        mesh.step(0);
        // header sits in the local queue with ready_at = 1; the NI is free again
        assert!(!mesh.injection_busy(a, Plane::DmaReq));
        assert!(!mesh.inject(pkt(a, a, MsgType::DmaStore, 0), a, 0));
    }

    #[test]
    fn planes_accept_independently() {
        let mut mesh = Mesh::new(2, 2, NocParams::default()).unwrap();
        let a = Coord::new(0, 0);
        let b = Coord::new(1, 1);
        assert!(mesh.inject(pkt(a, b, MsgType::DmaLoadReq, 0), a, 5));
        assert!(mesh.inject(pkt(a, b, MsgType::DmaLoadRsp, 3), a, 5));
        mesh.step(5);
        assert_eq!(mesh.flits_in_flight(), 2);
        assert_eq!(mesh.packets_in_flight(), 2);
    }

    #[test]
    fn one_hop_latency_matches_serialization_formula() {
        for latency in 1..=3u64 {
            let params = NocParams {
                router_latency: latency,
                ..Default::default()
            };
            let mut mesh = Mesh::new(2, 1, params).unwrap();
            let a = Coord::new(0, 0);
            let b = Coord::new(1, 0);
            let t0 = 10;
            assert!(mesh.inject(pkt(a, b, MsgType::DmaLoadRsp, 2), a, t0));
            let d = run_until_delivered(&mut mesh, t0, 100);
            assert_eq!(d.len(), 1);
            // 1 header + 2 payload flits, one hop
            assert_eq!(d[0].delivered_at - t0, 3 + latency);
        }
    }

    #[test]
    fn zero_hop_and_empty_step() {
        let mut mesh = Mesh::new(1, 1, NocParams::default()).unwrap();
        assert!(mesh.step(0).is_empty());
        let a = Coord::new(0, 0);
        assert!(mesh.inject(pkt(a, a, MsgType::ConfigWrite, 1), a, 3));
        let d = run_until_delivered(&mut mesh, 3, 10);
        assert_eq!(d[0].delivered_at, 3 + 2);
    }

    #[test]
    fn contention_on_shared_ejection() {
        // (0,0)->(1,0) and (1,0)->(1,0) on the same plane fight for (1,0)'s
        // local output. Hand trace with latency 1, F = 5 flits each:
        //  B (local, 0 hops): head ready at 1, grabs the ejection at cycle 1,
        //  holds it through its tail at cycle 5.
        //  A: head reaches (1,0) ready at 2, blocked until B's tail leaves;
        //  the depth-4 west queue fills, A then streams out at cycles 6..=10.
        let mut mesh = Mesh::new(2, 1, NocParams::default()).unwrap();
        let a = Coord::new(0, 0);
        let b = Coord::new(1, 0);
        assert!(mesh.inject(pkt(a, b, MsgType::DmaStore, 4), a, 0));
        assert!(mesh.inject(pkt(b, b, MsgType::DmaStore, 4), b, 0));
        let d = run_until_delivered(&mut mesh, 0, 100);
        let when: Vec<(Coord, u64)> = d.iter().map(|d| (d.packet.src, d.delivered_at)).collect();
        assert_eq!(when, vec![(b, 5), (a, 10)]);
        // sum of both serialization times (5 + 5) plus one cycle of pipeline fill
        assert_eq!(d[1].delivered_at, 5 + 5);
    }

    #[test]
    fn wormhole_keeps_packets_contiguous() {
        let mut mesh = Mesh::new(3, 1, NocParams::default()).unwrap();
        let a = Coord::new(0, 0);
        let m = Coord::new(1, 0);
        let z = Coord::new(2, 0);
        assert!(mesh.inject(pkt(a, z, MsgType::DmaStore, 20), a, 0));
        assert!(mesh.inject(pkt(m, z, MsgType::DmaStore, 20), m, 0));
        let d = run_until_delivered(&mut mesh, 0, 500);
        assert_eq!(d.len(), 2);
        assert!(mesh.max_queue_occupancy() <= 4);
        assert_eq!(mesh.injected_flits(), mesh.ejected_flits());
        // each queue only ever holds one packet at a time so deliveries are
        // spaced by at least one whole packet
        assert!(d[1].delivered_at - d[0].delivered_at >= 21);
    }

    #[test]
    fn link_counters_follow_route() {
        let mut mesh = Mesh::new(3, 3, NocParams::default()).unwrap();
        mesh.set_record_paths(true);
        let a = Coord::new(0, 0);
        let b = Coord::new(2, 1);
        assert!(mesh.inject(pkt(a, b, MsgType::P2pLoadRsp, 3), a, 0));
        let d = run_until_delivered(&mut mesh, 0, 100);
        assert_eq!(d[0].path, route_xy(a, b, 3, 3).unwrap());
        let links = mesh.link_flits();
        assert_eq!(links.len(), 3);
        assert!(links.values().all(|&v| v == 4));
        assert_eq!(mesh.flow_flits(a, b, Plane::DmaRsp), 12);
        assert_eq!(
            mesh.link_flit_count(Link {
                from: Coord::new(1, 0),
                to: Coord::new(2, 0),
                plane: Plane::DmaRsp
            }),
            4
        );
    }
}
