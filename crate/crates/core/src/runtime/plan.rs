use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::kernels::AccelKind;
use crate::noc::Coord;
use crate::p2p::{P2pConfig, MAX_SOURCES};

use super::graph::{DataflowGraph, EdgeMode};
use super::registry::DeviceRegistry;

/// One problem found while validating a dataflow graph. Every variant names
/// the node or edge at fault.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ValidationError {
    EmptyGraph,
    DuplicateNode(String),
    ZeroInstances(String),
    UnknownNode {
        edge: String,
        name: String,
    },
    SelfLoop {
        edge: String,
    },
    DuplicateEdge {
        edge: String,
    },
    Cycle(Vec<String>),
    UnknownDevice {
        node: String,
        device: String,
    },
    DeviceCount {
        node: String,
        instances: usize,
        devices: usize,
    },
    KindMismatch {
        node: String,
        device: String,
        expected: AccelKind,
        found: AccelKind,
    },
    ShapeMismatch {
        node: String,
        device: String,
    },
    DeviceReused {
        device: String,
        nodes: Vec<String>,
    },
    PortCount {
        node: String,
        parts: usize,
        edges: usize,
    },
    BadPort {
        edge: String,
        port: usize,
        parts: usize,
    },
    PortTaken {
        edge: String,
        port: usize,
    },
    SizeMismatch {
        edge: String,
        produced: usize,
        expected: usize,
    },
    FanIn {
        node: String,
        sources: usize,
    },
    UnknownOutput(String),
    /// The consumer of p2p edge `index` can only start after its producer
    /// finishes, but the producer cannot finish until the consumer requests.
    P2pDeadlock {
        index: usize,
        edge: String,
        via: Vec<String>,
    },
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use ValidationError::*;
        match self {
            EmptyGraph => write!(f, "graph has no nodes"),
            DuplicateNode(n) => write!(f, "node `{n}` defined more than once"),
            ZeroInstances(n) => write!(f, "node `{n}` has zero instances"),
            UnknownNode { edge, name } => write!(f, "edge {edge}: no node named `{name}`"),
            SelfLoop { edge } => write!(f, "edge {edge}: self loop"),
            DuplicateEdge { edge } => write!(f, "edge {edge}: duplicate edge"),
            Cycle(nodes) => write!(f, "graph is cyclic through {}", nodes.join(", ")),
            UnknownDevice { node, device } => {
                write!(f, "node `{node}`: device `{device}` not found in the SoC")
            }
            DeviceCount {
                node,
                instances,
                devices,
            } => {
                write!(
                    f,
                    "node `{node}`: {instances} instances but {devices} devices listed"
                )
            }
            KindMismatch {
                node,
                device,
                expected,
                found,
            } => write!(
                f,
                "node `{node}`: device `{device}` runs {} but the node needs {}",
                found.name(),
                expected.name()
            ),
            ShapeMismatch { node, device } => {
                write!(
                    f,
                    "node `{node}`: device `{device}` has different buffer sizes from instance 0"
                )
            }
            DeviceReused { device, nodes } => {
                write!(
                    f,
                    "device `{device}` used by more than one node: {}",
                    nodes.join(", ")
                )
            }
            PortCount { node, parts, edges } => {
                write!(
                    f,
                    "node `{node}`: {edges} incoming edges for {parts} input parts"
                )
            }
            BadPort { edge, port, parts } => {
                write!(f, "edge {edge}: port {port} out of range ({parts} parts)")
            }
            PortTaken { edge, port } => {
                write!(f, "edge {edge}: port {port} already fed by another edge")
            }
            SizeMismatch {
                edge,
                produced,
                expected,
            } => {
                write!(f, "edge {edge}: producer emits {produced} words, consumer part expects {expected}")
            }
            FanIn { node, sources } => {
                write!(f, "node `{node}`: {sources} p2p source instances exceed the limit of {MAX_SOURCES}")
            }
            UnknownOutput(n) => write!(f, "io.outputs names unknown node `{n}`"),
            P2pDeadlock { edge, via, .. } => write!(
                f,
                "edge {edge}: p2p consumer waits on its own producer through {}; use a dma edge",
                via.join(" -> ")
            ),
        }
    }
}

/// Where one input part of a node comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartInput {
    /// Supplied by the caller per frame.
    External,
    /// Produced by edge `edges[i]`.
    Edge(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanDevice {
    pub name: String,
    pub coord: Coord,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanNode {
    pub name: String,
    pub kind: AccelKind,
    pub devices: Vec<PlanDevice>,
    pub parts: Vec<usize>,
    pub inputs: Vec<PartInput>,
    pub out_words: usize,
    pub in_edges: Vec<usize>,
    pub out_edges: Vec<usize>,
    pub is_output: bool,
}

impl PlanNode {
    pub fn instances(&self) -> usize {
        self.devices.len()
    }

    pub fn in_words(&self) -> usize {
        self.parts.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlanEdge {
    pub src: usize,
    pub dst: usize,
    pub port: usize,
    pub mode: EdgeMode,
    pub words: usize,
}

/// A graph bound to concrete devices, nodes in topological order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Plan {
    pub nodes: Vec<PlanNode>,
    pub edges: Vec<PlanEdge>,
}

impl Plan {
    pub fn node(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.name == name)
    }

    pub fn edge_label(&self, e: usize) -> String {
        let ed = &self.edges[e];
        format!("{} -> {}", self.nodes[ed.src].name, self.nodes[ed.dst].name)
    }

    /// P2p register settings of a node when edges marked p2p are honored.
    /// Sources list every producer instance, grouped by input part.
    pub fn p2p_config(&self, node: usize) -> (P2pConfig, u64) {
        let n = &self.nodes[node];
        let store_enabled = n
            .out_edges
            .iter()
            .any(|&e| self.edges[e].mode == EdgeMode::P2p);
        let mut sources = Vec::new();
        let mut groups = 0u64;
        for (port, input) in n.inputs.iter().enumerate() {
            if let PartInput::Edge(e) = *input {
                if self.edges[e].mode == EdgeMode::P2p {
                    for d in &self.nodes[self.edges[e].src].devices {
                        groups |= (port as u64) << (2 * sources.len());
                        sources.push(d.coord);
                    }
                }
            }
        }
        let cfg = P2pConfig {
            store_enabled,
            load_enabled: !sources.is_empty(),
            sources,
        };
        (cfg, groups)
    }

    /// Number of consumers that load this node's result over p2p.
    pub fn p2p_fanout(&self, node: usize) -> usize {
        self.nodes[node]
            .out_edges
            .iter()
            .filter(|&&e| self.edges[e].mode == EdgeMode::P2p)
            .count()
    }

    /// True if the node touches no DMA edge, so its instances can stream
    /// many frames per invocation.
    pub fn is_streaming(&self, node: usize) -> bool {
        let n = &self.nodes[node];
        n.in_edges
            .iter()
            .chain(&n.out_edges)
            .all(|&e| self.edges[e].mode == EdgeMode::P2p)
    }
}

fn edge_name(g: &DataflowGraph, i: usize) -> String {
    let e = &g.edges[i];
    format!("#{i} ({} -> {})", e.src, e.dst)
}

/// Finds a same-frame wait cycle among launch, compute and completion
/// events. A node launches once its DMA producers are done, computes once
/// its p2p producers have computed, and is done only after each p2p
/// consumer has launched and pulled the result.
fn p2p_wait_cycle(graph: &DataflowGraph, edges: &[Option<PlanEdge>]) -> Option<ValidationError> {
    const LAUNCH: usize = 0;
    const COMPUTED: usize = 1;
    const DONE: usize = 2;
    let n = graph.nodes.len();
    let ev = |node: usize, k: usize| node * 3 + k;
    // waits[a] = events a waits for, tagged with the edge that causes it.
    let mut waits: Vec<Vec<(usize, Option<usize>)>> = vec![Vec::new(); 3 * n];
    for i in 0..n {
        waits[ev(i, COMPUTED)].push((ev(i, LAUNCH), None));
        waits[ev(i, DONE)].push((ev(i, COMPUTED), None));
    }
    for (k, e) in edges.iter().enumerate() {
        let Some(e) = e else { continue };
        match e.mode {
            EdgeMode::Dma => waits[ev(e.dst, LAUNCH)].push((ev(e.src, DONE), Some(k))),
            EdgeMode::P2p => {
                waits[ev(e.dst, COMPUTED)].push((ev(e.src, COMPUTED), Some(k)));
                waits[ev(e.src, DONE)].push((ev(e.dst, LAUNCH), Some(k)));
            }
        }
    }
    // Iterative DFS; on a back edge, walk the stack to recover the cycle.
    let mut color = vec![0u8; 3 * n];
    for root in 0..3 * n {
        if color[root] != 0 {
            continue;
        }
        let mut stack: Vec<(usize, usize, Option<usize>)> = vec![(root, 0, None)];
        color[root] = 1;
        while let Some(&mut (v, ref mut next, _)) = stack.last_mut() {
            if *next == waits[v].len() {
                color[v] = 2;
                stack.pop();
                continue;
            }
            let (w, via) = waits[v][*next];
            *next += 1;
            match color[w] {
                0 => {
                    color[w] = 1;
                    stack.push((w, 0, via));
                }
                1 => {
                    let start = stack.iter().position(|f| f.0 == w).expect("on stack");
                    let mut cycle: Vec<usize> =
                        stack[start + 1..].iter().filter_map(|f| f.2).collect();
                    cycle.extend(via);
                    let p2p = *cycle
                        .iter()
                        .find(|&&k| graph.edges[k].mode == EdgeMode::P2p)?;
                    return Some(ValidationError::P2pDeadlock {
                        index: p2p,
                        edge: edge_name(graph, p2p),
                        via: cycle.iter().map(|&k| edge_name(graph, k)).collect(),
                    });
                }
                _ => {}
            }
        }
    }
    None
}

/// Checks `graph` against the devices in `registry` and binds it.
pub fn validate(
    graph: &DataflowGraph,
    registry: &DeviceRegistry,
) -> Result<Plan, Vec<ValidationError>> {
    use ValidationError as V;
    let mut errs = Vec::new();
    if graph.nodes.is_empty() {
        return Err(vec![V::EmptyGraph]);
    }

    let mut index: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, n) in graph.nodes.iter().enumerate() {
        if index.insert(n.name.as_str(), i).is_some() {
            errs.push(V::DuplicateNode(n.name.clone()));
        }
        if n.instances == 0 {
            errs.push(V::ZeroInstances(n.name.clone()));
        }
    }

    // Resolve devices and part shapes.
    let mut shapes: Vec<Option<(Vec<usize>, usize)>> = vec![None; graph.nodes.len()];
    let mut devices: Vec<Vec<PlanDevice>> = vec![Vec::new(); graph.nodes.len()];
    let mut users: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (i, n) in graph.nodes.iter().enumerate() {
        let names = n.device_names();
        if names.len() != n.instances {
            errs.push(V::DeviceCount {
                node: n.name.clone(),
                instances: n.instances,
                devices: names.len(),
            });
        }
        for dev in names {
            users.entry(dev.clone()).or_default().push(n.name.clone());
            let Some(info) = registry.get(&dev) else {
                errs.push(V::UnknownDevice {
                    node: n.name.clone(),
                    device: dev,
                });
                continue;
            };
            if info.kind != n.kernel {
                errs.push(V::KindMismatch {
                    node: n.name.clone(),
                    device: dev.clone(),
                    expected: n.kernel,
                    found: info.kind,
                });
                continue;
            }
            match &shapes[i] {
                None => shapes[i] = Some((info.in_parts.clone(), info.out_words)),
                Some((p, o)) if *p != info.in_parts || *o != info.out_words => {
                    errs.push(V::ShapeMismatch {
                        node: n.name.clone(),
                        device: dev.clone(),
                    });
                }
                Some(_) => {}
            }
            devices[i].push(PlanDevice {
                name: dev,
                coord: info.coord,
            });
        }
    }
    for (device, nodes) in users {
        if nodes.len() > 1 {
            errs.push(V::DeviceReused { device, nodes });
        }
    }

    // Edges.
    let mut edges: Vec<Option<PlanEdge>> = Vec::new();
    let mut seen: BTreeSet<(usize, usize)> = BTreeSet::new();
    for (k, e) in graph.edges.iter().enumerate() {
        let label = edge_name(graph, k);
        let s = index.get(e.src.as_str()).copied();
        let d = index.get(e.dst.as_str()).copied();
        for (name, found) in [(&e.src, s), (&e.dst, d)] {
            if found.is_none() {
                errs.push(V::UnknownNode {
                    edge: label.clone(),
                    name: name.clone(),
                });
            }
        }
        let (Some(s), Some(d)) = (s, d) else {
            edges.push(None);
            continue;
        };
        if s == d {
            errs.push(V::SelfLoop { edge: label });
            edges.push(None);
            continue;
        }
        if !seen.insert((s, d)) {
            errs.push(V::DuplicateEdge { edge: label });
            edges.push(None);
            continue;
        }
        edges.push(Some(PlanEdge {
            src: s,
            dst: d,
            port: usize::MAX,
            mode: e.mode,
            words: 0,
        }));
    }

    // Ports, part counts and sizes.
    let mut inputs: Vec<Vec<PartInput>> = vec![Vec::new(); graph.nodes.len()];
    for (i, n) in graph.nodes.iter().enumerate() {
        let Some((parts, _)) = &shapes[i] else {
            continue;
        };
        let incoming: Vec<usize> = (0..edges.len())
            .filter(|&k| edges[k].is_some_and(|e| e.dst == i))
            .collect();
        inputs[i] = vec![PartInput::External; parts.len()];
        if incoming.is_empty() {
            continue;
        }
        if incoming.len() != parts.len() {
            errs.push(V::PortCount {
                node: n.name.clone(),
                parts: parts.len(),
                edges: incoming.len(),
            });
            continue;
        }
        // Explicit ports first, then unnumbered edges fill the free ports in order.
        let mut taken = vec![false; parts.len()];
        let mut assigned: Vec<(usize, usize)> = Vec::new();
        for &k in &incoming {
            if let Some(port) = graph.edges[k].port {
                assigned.push((k, port));
            }
        }
        let explicit: BTreeSet<usize> = assigned.iter().map(|&(_, q)| q).collect();
        let mut free = (0..parts.len()).filter(|p| !explicit.contains(p));
        for &k in &incoming {
            if graph.edges[k].port.is_none() {
                assigned.push((k, free.next().unwrap_or(usize::MAX)));
            }
        }
        for (k, port) in assigned {
            if port >= parts.len() {
                errs.push(V::BadPort {
                    edge: edge_name(graph, k),
                    port,
                    parts: parts.len(),
                });
                continue;
            }
            if std::mem::replace(&mut taken[port], true) {
                errs.push(V::PortTaken {
                    edge: edge_name(graph, k),
                    port,
                });
                continue;
            }
            let e = edges[k].as_mut().expect("filtered");
            e.port = port;
            e.words = parts[port];
            inputs[i][port] = PartInput::Edge(k);
            if let Some((_, produced)) = &shapes[e.src] {
                if *produced != parts[port] {
                    errs.push(V::SizeMismatch {
                        edge: edge_name(graph, k),
                        produced: *produced,
                        expected: parts[port],
                    });
                }
            }
        }
        let p2p_sources: usize = incoming
            .iter()
            .filter(|&&k| graph.edges[k].mode == EdgeMode::P2p)
            .map(|&k| graph.nodes[edges[k].expect("filtered").src].instances)
            .sum();
        if p2p_sources > MAX_SOURCES {
            errs.push(V::FanIn {
                node: n.name.clone(),
                sources: p2p_sources,
            });
        }
    }

    // Topological order, ties broken by declaration order.
    let valid: Vec<PlanEdge> = edges.iter().flatten().copied().collect();
    let mut indeg = vec![0usize; graph.nodes.len()];
    for e in &valid {
        indeg[e.dst] += 1;
    }
    let mut ready: BTreeSet<usize> = (0..graph.nodes.len()).filter(|&i| indeg[i] == 0).collect();
    let mut order = Vec::new();
    while let Some(i) = ready.pop_first() {
        order.push(i);
        for e in valid.iter().filter(|e| e.src == i) {
            indeg[e.dst] -= 1;
            if indeg[e.dst] == 0 {
                ready.insert(e.dst);
            }
        }
    }
    if order.len() < graph.nodes.len() {
        let stuck = (0..graph.nodes.len())
            .filter(|&i| indeg[i] > 0)
            .map(|i| graph.nodes[i].name.clone())
            .collect();
        errs.push(V::Cycle(stuck));
    }

    let outputs: BTreeSet<usize> = match &graph.io.outputs {
        Some(list) => list
            .iter()
            .filter_map(|o| {
                let i = index.get(o.as_str()).copied();
                if i.is_none() {
                    errs.push(V::UnknownOutput(o.clone()));
                }
                i
            })
            .collect(),
        None => (0..graph.nodes.len())
            .filter(|&i| !valid.iter().any(|e| e.src == i))
            .collect(),
    };

    if errs.is_empty() {
        errs.extend(p2p_wait_cycle(graph, &edges));
    }
    if !errs.is_empty() {
        return Err(errs);
    }

    // Renumber nodes into topological order; edges keep graph order.
    let mut rank = vec![0usize; graph.nodes.len()];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r;
    }
    let plan_edges: Vec<PlanEdge> = edges
        .iter()
        .flatten()
        .map(|e| PlanEdge {
            src: rank[e.src],
            dst: rank[e.dst],
            ..*e
        })
        .collect();
    let remap_edge = |k: usize| edges[..k].iter().filter(|e| e.is_some()).count();
    let nodes = order
        .iter()
        .map(|&i| {
            let (parts, out_words) = shapes[i].clone().expect("no errors");
            let r = rank[i];
            PlanNode {
                name: graph.nodes[i].name.clone(),
                kind: graph.nodes[i].kernel,
                devices: devices[i].clone(),
                parts,
                inputs: inputs[i]
                    .iter()
                    .map(|p| match *p {
                        PartInput::Edge(k) => PartInput::Edge(remap_edge(k)),
                        PartInput::External => PartInput::External,
                    })
                    .collect(),
                out_words,
                in_edges: (0..plan_edges.len())
                    .filter(|&k| plan_edges[k].dst == r)
                    .collect(),
                out_edges: (0..plan_edges.len())
                    .filter(|&k| plan_edges[k].src == r)
                    .collect(),
                is_output: outputs.contains(&i),
            }
        })
        .collect();
    Ok(Plan {
        nodes,
        edges: plan_edges,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runtime::registry::DeviceInfo;

    fn registry() -> DeviceRegistry {
        let mut r = DeviceRegistry::default();
        for (i, (name, kind, parts, out)) in [
            ("a.0", AccelKind::Identity, vec![8], 8),
            ("a.1", AccelKind::Identity, vec![8], 8),
            ("b.0", AccelKind::Affine, vec![8], 8),
            ("m.0", AccelKind::Mix, vec![8, 8], 8),
        ]
        .into_iter()
        .enumerate()
        {
            r.insert(
                name,
                DeviceInfo {
                    coord: Coord::new(i + 1, 0),
                    kind,
                    in_parts: parts,
                    out_words: out,
                },
            );
        }
        r
    }

    fn graph(text: &str) -> DataflowGraph {
        DataflowGraph::parse(text, "t").unwrap()
    }

    #[test]
    fn binds_and_orders() {
        let g = graph(
            r#"
[[nodes]]
name = "m"
kernel = "mix"
[[nodes]]
name = "a"
kernel = "identity"
instances = 2
[[nodes]]
name = "b"
kernel = "affine"
[[edges]]
src = "a"
dst = "m"
mode = "p2p"
[[edges]]
src = "b"
dst = "m"
mode = "dma"
port = 0
[[edges]]
src = "a"
dst = "b"
mode = "p2p"
"#,
        );
        let plan = validate(&g, &registry()).unwrap();
        let names: Vec<&str> = plan.nodes.iter().map(|n| n.name.as_str()).collect();
        assert_eq!(names, ["a", "b", "m"]);
        let m = &plan.nodes[2];
        assert!(m.is_output && !plan.nodes[0].is_output);
        // b feeds port 0 explicitly, so a takes port 1.
        assert_eq!(m.inputs, vec![PartInput::Edge(1), PartInput::Edge(0)]);
        let (cfg, groups) = plan.p2p_config(2);
        assert_eq!(cfg.sources, vec![Coord::new(1, 0), Coord::new(2, 0)]);
        assert_eq!(groups, 0b0101);
        assert!(plan.p2p_config(0).0.store_enabled);
        assert_eq!(plan.p2p_fanout(0), 2);
        assert!(plan.is_streaming(0));
        assert!(!plan.is_streaming(1));
    }

    #[test]
    fn p2p_consumer_behind_a_dma_path_deadlocks() {
        let g = graph(
            r#"
[[nodes]]
name = "a"
kernel = "identity"
[[nodes]]
name = "b"
kernel = "affine"
[[nodes]]
name = "m"
kernel = "mix"
[[edges]]
src = "a"
dst = "b"
mode = "dma"
[[edges]]
src = "a"
dst = "m"
mode = "p2p"
[[edges]]
src = "b"
dst = "m"
mode = "dma"
"#,
        );
        let errs = validate(&g, &registry()).unwrap_err();
        assert!(
            matches!(&errs[..], [ValidationError::P2pDeadlock { index: 1, .. }]),
            "{errs:?}"
        );
        let ok = graph(&g.to_toml().replacen("mode = \"p2p\"", "mode = \"dma\"", 1));
        assert!(validate(&ok, &registry()).is_ok());
    }

    #[test]
    fn reports_every_problem() {
        let g = graph(
            r#"
[[nodes]]
name = "a"
kernel = "affine"
[[nodes]]
name = "b"
kernel = "identity"
instances = 3
[[edges]]
src = "a"
dst = "b"
mode = "dma"
[[edges]]
src = "b"
dst = "a"
mode = "dma"
[[edges]]
src = "a"
dst = "ghost"
mode = "dma"
"#,
        );
        let errs = validate(&g, &registry()).unwrap_err();
        assert!(errs
            .iter()
            .any(|e| matches!(e, ValidationError::KindMismatch { node, .. } if node == "a")));
        assert!(errs.iter().any(
            |e| matches!(e, ValidationError::UnknownDevice { device, .. } if device == "b.2")
        ));
        assert!(errs
            .iter()
            .any(|e| matches!(e, ValidationError::UnknownNode { name, .. } if name == "ghost")));
        assert!(errs.iter().any(|e| matches!(e, ValidationError::Cycle(_))));
        for e in &errs {
            assert!(!e.to_string().is_empty());
        }
    }
}
