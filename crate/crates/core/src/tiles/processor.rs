use std::collections::VecDeque;

use crate::noc::{Coord, Packet, Plane};

/// Processor socket. The runtime drives it directly: it queues config
/// packets for injection and collects interrupts and read responses.
#[derive(Debug)]
pub struct ProcessorTile {
    coord: Coord,
    outbox: VecDeque<Packet>,
    inbox: VecDeque<(u64, Packet)>,
}

impl ProcessorTile {
    pub fn new(coord: Coord) -> Self {
        Self {
            coord,
            outbox: VecDeque::new(),
            inbox: VecDeque::new(),
        }
    }

    pub fn coord(&self) -> Coord {
        self.coord
    }

    pub fn send(&mut self, p: Packet) {
        debug_assert_eq!(p.src, self.coord);
        self.outbox.push_back(p);
    }

    pub fn receive(&mut self, p: Packet, cycle: u64) {
        self.inbox.push_back((cycle, p));
    }

    /// Received packets with their delivery cycle, oldest first.
    pub fn drain_inbox(&mut self) -> Vec<(u64, Packet)> {
        self.inbox.drain(..).collect()
    }

    pub fn peek_out(&self, plane: Plane) -> Option<&Packet> {
        self.outbox.front().filter(|p| p.plane() == plane)
    }

    pub fn pop_out(&mut self) -> Option<Packet> {
        self.outbox.pop_front()
    }

    pub fn has_output(&self) -> bool {
        !self.outbox.is_empty()
    }
}
