use std::collections::BTreeMap;

use crate::kernels::AccelKind;
use crate::noc::{Coord, MsgType, Packet, PacketMeta};
use crate::soc::{Advance, Soc};
use crate::tiles::Reg;

use super::RuntimeError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeviceInfo {
    pub coord: Coord,
    pub kind: AccelKind,
    /// Input part sizes of one chunk.
    pub in_parts: Vec<usize>,
    pub out_words: usize,
}

/// Device name to socket mapping, discovered at boot.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DeviceRegistry {
    devices: BTreeMap<String, DeviceInfo>,
}

impl DeviceRegistry {
    /// Reads LOCATION and KERNEL_ID of every accelerator socket over the
    /// control plane from processor `host`.
    pub fn probe(soc: &mut Soc, host: Coord) -> Result<Self, RuntimeError> {
        let sockets = soc.accelerator_sockets().to_vec();
        for (_, c) in &sockets {
            for reg in [Reg::Location, Reg::KernelId] {
                let meta = PacketMeta {
                    address: reg.id(),
                    ..Default::default()
                };
                soc.host_send(Packet::control(host, *c, MsgType::ConfigRead, meta));
            }
        }
        let mut answers: BTreeMap<(Coord, u64), u64> = BTreeMap::new();
        while answers.len() < 2 * sockets.len() {
            if soc.advance() == Advance::Quiescent {
                return Err(RuntimeError::Boot(format!(
                    "{} of {} register reads unanswered",
                    2 * sockets.len() - answers.len(),
                    2 * sockets.len()
                )));
            }
            for (_, p) in soc.host_drain(host) {
                if p.msg_type == MsgType::ConfigReadRsp {
                    answers.insert(
                        (p.src, p.meta.address),
                        p.payload.first().copied().unwrap_or(0),
                    );
                }
            }
        }
        let mut devices = BTreeMap::new();
        for (name, socket) in sockets {
            let coord = Coord::unpack(answers[&(socket, Reg::Location.id())]);
            let id = answers[&(socket, Reg::KernelId.id())];
            let kind = AccelKind::from_id(id)
                .ok_or_else(|| RuntimeError::Boot(format!("{name}: unknown kernel id {id}")))?;
            let kernel = soc.accelerator(coord).expect("probed socket").kernel();
            let info = DeviceInfo {
                coord,
                kind,
                in_parts: kernel.in_parts(),
                out_words: kernel.out_words(),
            };
            if devices.insert(name.clone(), info).is_some() {
                return Err(RuntimeError::Boot(format!(
                    "duplicate device name `{name}`"
                )));
            }
        }
        Ok(Self { devices })
    }

    pub fn get(&self, name: &str) -> Option<&DeviceInfo> {
        self.devices.get(name)
    }

    pub fn len(&self) -> usize {
        self.devices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.devices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &DeviceInfo)> {
        self.devices.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn name_of(&self, c: Coord) -> Option<&str> {
        self.devices
            .iter()
            .find(|(_, d)| d.coord == c)
            .map(|(k, _)| k.as_str())
    }

    #[cfg(test)]
    pub(crate) fn insert(&mut self, name: &str, info: DeviceInfo) {
        self.devices.insert(name.to_string(), info);
    }
}
