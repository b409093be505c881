//! Cycle loop tying tiles and the mesh together.

use thiserror::Error;

use crate::config::SocConfig;
use crate::kernels::{Kernel, KernelError};
use crate::noc::{Coord, Mesh, NocError, Packet, Plane};
use crate::tiles::{AccelTile, MemoryTile, ProcessorTile, TickCtx, Tile, TileKind};

#[derive(Debug, Error)]
pub enum SocError {
    #[error(transparent)]
    Noc(#[from] NocError),
    #[error("{origin}: tile {index} ({name}): {source}")]
    Kernel {
        origin: String,
        index: usize,
        name: String,
        source: KernelError,
    },
}

/// What [`Soc::advance`] did.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Advance {
    Stepped,
    /// Nothing in flight and nothing scheduled.
    Quiescent,
}

/// A built SoC: tiles on a mesh plus a global cycle counter.
///
/// One cycle is: tiles offer queued packets to their network interfaces,
/// the mesh moves flits, delivered packets are handed to their destination
/// tiles, then every tile ticks.
#[derive(Debug)]
pub struct Soc {
    config: SocConfig,
    mesh: Mesh,
    tiles: Vec<Option<Tile>>,
    occupied: Vec<usize>,
    memory: Option<usize>,
    processors: Vec<Coord>,
    accelerators: Vec<(String, Coord)>,
    cycle: u64,
    last_delivery: u64,
}

impl Soc {
    pub fn build(config: &SocConfig) -> Result<Soc, SocError> {
        let mut mesh = Mesh::new(config.mesh_cols, config.mesh_rows, config.noc)?;
        mesh.set_record_trace(false);
        let n = config.mesh_cols * config.mesh_rows;
        let mut tiles: Vec<Option<Tile>> = (0..n).map(|_| None).collect();
        let memory_coord = config
            .descriptors()
            .iter()
            .find(|d| d.kind == TileKind::Memory)
            .map(|d| d.coord);
        let mut processors = Vec::new();
        let mut accelerators = Vec::new();
        for (index, d) in config.descriptors().into_iter().enumerate() {
            let tile = match d.kind {
                TileKind::Processor => {
                    processors.push(d.coord);
                    Tile::Processor(ProcessorTile::new(d.coord))
                }
                TileKind::Memory => Tile::Memory(Box::new(MemoryTile::new(
                    d.coord,
                    config.dram,
                    config.noc.max_packet_words,
                ))),
                TileKind::Auxiliary => Tile::Auxiliary {
                    coord: d.coord,
                    dropped: 0,
                },
                TileKind::Accelerator => {
                    let spec = d.accel.as_ref().expect("validated config");
                    let kernel = Kernel::from_spec(spec, &config.base_dir).map_err(|source| {
                        SocError::Kernel {
                            origin: config.origin.clone(),
                            index,
                            name: d.name.clone(),
                            source,
                        }
                    })?;
                    accelerators.push((d.name.clone(), d.coord));
                    Tile::Accelerator(Box::new(AccelTile::new(
                        d.name,
                        d.coord,
                        kernel,
                        memory_coord,
                        config.noc.max_packet_words,
                    )))
                }
            };
            tiles[d.coord.y * config.mesh_cols + d.coord.x] = Some(tile);
        }
        let occupied: Vec<usize> = (0..n).filter(|&i| tiles[i].is_some()).collect();
        let memory = memory_coord.map(|c| c.y * config.mesh_cols + c.x);
        Ok(Soc {
            config: config.clone(),
            mesh,
            tiles,
            occupied,
            memory,
            processors,
            accelerators,
            cycle: 0,
            last_delivery: 0,
        })
    }

    pub fn config(&self) -> &SocConfig {
        &self.config
    }

    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn mesh_mut(&mut self) -> &mut Mesh {
        &mut self.mesh
    }

    fn idx(&self, c: Coord) -> usize {
        c.y * self.config.mesh_cols + c.x
    }

    pub fn tile(&self, c: Coord) -> Option<&Tile> {
        if !self.mesh.contains(c) {
            return None;
        }
        self.tiles[self.idx(c)].as_ref()
    }

    pub fn tile_mut(&mut self, c: Coord) -> Option<&mut Tile> {
        if !self.mesh.contains(c) {
            return None;
        }
        let i = self.idx(c);
        self.tiles[i].as_mut()
    }

    pub fn accelerator(&self, c: Coord) -> Option<&AccelTile> {
        self.tile(c).and_then(Tile::as_accelerator)
    }

    pub fn accelerator_mut(&mut self, c: Coord) -> Option<&mut AccelTile> {
        self.tile_mut(c).and_then(Tile::as_accelerator_mut)
    }

    /// Accelerator sockets as (device name, coordinate), in floorplan order.
    pub fn accelerator_sockets(&self) -> &[(String, Coord)] {
        &self.accelerators
    }

    pub fn processors(&self) -> &[Coord] {
        &self.processors
    }

    pub fn memory(&self) -> Option<&MemoryTile> {
        match self.memory.and_then(|i| self.tiles[i].as_ref()) {
            Some(Tile::Memory(m)) => Some(m),
            _ => None,
        }
    }

    pub fn memory_mut(&mut self) -> Option<&mut MemoryTile> {
        match self.memory.and_then(|i| self.tiles[i].as_mut()) {
            Some(Tile::Memory(m)) => Some(m),
            _ => None,
        }
    }

    /// Queues a packet at a processor tile's network interface.
    pub fn host_send(&mut self, p: Packet) {
        match self.tile_mut(p.src) {
            Some(Tile::Processor(t)) => t.send(p),
            _ => panic!("host packets must originate at a processor tile"),
        }
    }

    pub fn host_drain(&mut self, host: Coord) -> Vec<(u64, Packet)> {
        match self.tile_mut(host) {
            Some(Tile::Processor(t)) => t.drain_inbox(),
            _ => Vec::new(),
        }
    }

    /// Holds an accelerator's run loop until cycle `until`.
    pub fn stall_accelerator(&mut self, c: Coord, until: u64) {
        self.accelerator_mut(c)
            .expect("stall target must be an accelerator")
            .stall(until);
    }

    pub fn last_delivery(&self) -> u64 {
        self.last_delivery
    }

    /// Clears DRAM, NoC and accelerator counters.
    pub fn reset_stats(&mut self) {
        self.mesh.reset_stats();
        if let Some(m) = self.memory_mut() {
            m.reset_counters();
        }
        for t in self.tiles.iter_mut().flatten() {
            if let Tile::Accelerator(a) = t {
                a.reset_stats();
            }
        }
    }

    /// Runs one cycle.
    pub fn step(&mut self) {
        let c = self.cycle;
        for &i in &self.occupied {
            let tile = self.tiles[i].as_mut().expect("occupied");
            let at = tile.coord();
            for plane in Plane::ALL {
                if tile.peek_out(plane, c).is_some() && self.mesh.can_inject(at, plane) {
                    let p = tile.pop_out(plane).expect("peeked");
                    let accepted = self.mesh.inject(p, at, c);
                    debug_assert!(accepted);
                }
            }
        }
        for d in self.mesh.step(c) {
            self.last_delivery = c;
            let dst = self.idx(d.packet.dst);
            if let Some(t) = self.tiles[dst].as_mut() {
                t.receive(d.packet, c);
            }
        }
        for &i in &self.occupied {
            let tile = self.tiles[i].as_mut().expect("occupied");
            if tile.kind() == TileKind::Accelerator {
                let ctx = TickCtx {
                    cycle: c,
                    rsp_ni_busy: self.mesh.injection_busy(tile.coord(), Plane::DmaRsp),
                };
                tile.tick(&ctx);
            }
        }
        self.cycle += 1;
    }

    fn work_now(&self) -> bool {
        if !self.mesh.is_idle() {
            return true;
        }
        self.occupied.iter().any(|&i| {
            let t = self.tiles[i].as_ref().expect("occupied");
            Plane::ALL
                .iter()
                .any(|&p| t.peek_out(p, self.cycle).is_some())
        })
    }

    /// Earliest cycle at which some tile acts on its own.
    pub fn next_wake(&self) -> Option<u64> {
        self.occupied
            .iter()
            .filter_map(|&i| {
                self.tiles[i]
                    .as_ref()
                    .expect("occupied")
                    .next_wake(self.cycle)
            })
            .min()
    }

    /// Steps one cycle, first skipping ahead over idle stretches.
    pub fn advance(&mut self) -> Advance {
        if !self.work_now() {
            match self.next_wake() {
                Some(t) => self.cycle = self.cycle.max(t),
                None => return Advance::Quiescent,
            }
        }
        self.step();
        Advance::Stepped
    }

    /// Describes every accelerator that is mid-run and what it waits for.
    pub fn wait_report(&self) -> Vec<String> {
        let mut out = Vec::new();
        for &i in &self.occupied {
            if let Some(a) = self.tiles[i].as_ref().and_then(Tile::as_accelerator) {
                if let Some((why, peers)) = a.wait_state() {
                    let peers: Vec<String> = peers
                        .iter()
                        .map(|p| match self.tile(*p) {
                            Some(Tile::Accelerator(t)) => format!("{} at {p}", t.name()),
                            Some(t) => format!("{:?} tile at {p}", t.kind()).to_lowercase(),
                            None => format!("empty tile at {p}"),
                        })
                        .collect();
                    let on = if peers.is_empty() {
                        String::new()
                    } else {
                        format!(" [on {}]", peers.join(", "))
                    };
                    out.push(format!("{} at {}: {why}{on}", a.name(), a.coord()));
                }
            }
        }
        out
    }
}
