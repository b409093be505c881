//! Helpers shared by the integration tests and the acceptance suite.
#![allow(dead_code)]

use std::path::PathBuf;

use meshsoc::config::{SocConfig, TileConfig};
use meshsoc::kernels::{AccelKind, AccelSpec};
use meshsoc::runtime::{DataflowGraph, EdgeMode, EdgeSpec, IoSpec, NodeSpec};
use meshsoc::tiles::TileKind;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn repo_path(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .join(rel)
}

pub fn load_soc(rel: &str) -> SocConfig {
    SocConfig::load(&repo_path(rel)).expect("shipped SoC description")
}

pub fn load_graph(rel: &str) -> DataflowGraph {
    DataflowGraph::load(&repo_path(rel)).expect("shipped dataflow")
}

/// Programmatic floorplan.
#[derive(Debug, Clone)]
pub struct Floorplan {
    cols: usize,
    rows: usize,
    tiles: Vec<TileConfig>,
}

impl Floorplan {
    pub fn new(cols: usize, rows: usize) -> Self {
        Self {
            cols,
            rows,
            tiles: Vec::new(),
        }
    }

    fn tile(
        mut self,
        x: usize,
        y: usize,
        kind: TileKind,
        name: Option<&str>,
        accel: Option<AccelSpec>,
    ) -> Self {
        self.tiles.push(TileConfig {
            x,
            y,
            kind,
            name: name.map(str::to_string),
            accel,
        });
        self
    }

    pub fn processor(self, x: usize, y: usize) -> Self {
        self.tile(x, y, TileKind::Processor, None, None)
    }

    pub fn memory(self, x: usize, y: usize) -> Self {
        self.tile(x, y, TileKind::Memory, None, None)
    }

    pub fn accel(self, x: usize, y: usize, name: &str, spec: AccelSpec) -> Self {
        self.tile(x, y, TileKind::Accelerator, Some(name), Some(spec))
    }

    pub fn build(self) -> SocConfig {
        let cfg = SocConfig {
            mesh_rows: self.rows,
            mesh_cols: self.cols,
            clock_mhz: 78.0,
            noc: Default::default(),
            dram: Default::default(),
            tiles: self.tiles,
            base_dir: PathBuf::from("."),
            origin: "test".into(),
        };
        cfg.validate().expect("test floorplan is valid");
        cfg
    }
}

pub fn identity(words: usize, alpha: u64) -> AccelSpec {
    AccelSpec {
        words: Some(words),
        alpha: Some(alpha),
        ..AccelSpec::of(AccelKind::Identity)
    }
}

pub fn affine(words: usize, out_words: usize, alpha: u64, mul: u64) -> AccelSpec {
    AccelSpec {
        words: Some(words),
        out_words: Some(out_words),
        alpha: Some(alpha),
        mul: Some(mul),
        add: Some(mul + 1),
        ..AccelSpec::of(AccelKind::Affine)
    }
}

pub fn mix(parts: Vec<usize>, out_words: usize, alpha: u64) -> AccelSpec {
    AccelSpec {
        parts: Some(parts),
        out_words: Some(out_words),
        alpha: Some(alpha),
        ..AccelSpec::of(AccelKind::Mix)
    }
}

pub fn node(name: &str, kernel: AccelKind, instances: usize) -> NodeSpec {
    NodeSpec {
        name: name.into(),
        kernel,
        instances,
        devices: None,
        params: Default::default(),
    }
}

pub fn edge(src: &str, dst: &str, mode: EdgeMode) -> EdgeSpec {
    EdgeSpec {
        src: src.into(),
        dst: dst.into(),
        mode,
        port: None,
    }
}

pub fn graph(nodes: Vec<NodeSpec>, edges: Vec<EdgeSpec>) -> DataflowGraph {
    DataflowGraph {
        name: None,
        nodes,
        edges,
        io: IoSpec::default(),
    }
}

/// Linear chain `s0 -> s1 -> ...` of affine stages with one memory tile at
/// (0,0), the processor at (0,1) and stages along row 0 then row 1.
pub fn affine_chain(
    stages: &[(u64, usize)],
    words: usize,
    mode: EdgeMode,
) -> (SocConfig, DataflowGraph) {
    let total: usize = stages.iter().map(|s| s.1).sum();
    let cols = (total + 2).div_ceil(2).max(2);
    let mut fp = Floorplan::new(cols, 2).memory(0, 0).processor(0, 1);
    let mut slots = (1..cols).map(|x| (x, 0)).chain((1..cols).map(|x| (x, 1)));
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    for (i, &(alpha, inst)) in stages.iter().enumerate() {
        let name = format!("s{i}");
        for j in 0..inst {
            let (x, y) = slots.next().expect("enough tiles");
            fp = fp.accel(
                x,
                y,
                &format!("{name}.{j}"),
                affine(words, words, alpha, i as u64 + 2),
            );
        }
        nodes.push(node(&name, AccelKind::Affine, inst));
        if i > 0 {
            edges.push(edge(&format!("s{}", i - 1), &name, mode));
        }
    }
    (fp.build(), graph(nodes, edges))
}

/// A random valid dataflow on a random floorplan.
#[derive(Debug, Clone)]
pub struct RandomCase {
    pub seed: u64,
    pub soc: SocConfig,
    pub graph: DataflowGraph,
    pub frames: usize,
}

pub fn random_case(seed: u64) -> RandomCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cols = rng.gen_range(2..=4);
    let rows = rng.gen_range(2..=4);
    let slots = cols * rows - 2;
    let n_nodes = rng.gen_range(1..=slots.min(8));
    let sizes = [4usize, 8, 16, 32, 48];

    let mut specs: Vec<(AccelSpec, usize)> = Vec::new();
    let mut out_words: Vec<usize> = Vec::new();
    let mut preds: Vec<Vec<usize>> = Vec::new();
    let mut used = 0;
    for i in 0..n_nodes {
        let d = if i == 0 {
            0
        } else {
            *[0, 1, 1, 1, 2, 2, 3, 4].choose(&mut rng).unwrap()
        };
        let mut p: Vec<usize> = (0..i).collect();
        p.shuffle(&mut rng);
        p.truncate(d.min(i));
        let alpha = rng.gen_range(1..=4);
        let out = *sizes.choose(&mut rng).unwrap();
        let spec = match p.len() {
            0 => {
                let w = *sizes.choose(&mut rng).unwrap();
                if rng.gen_bool(0.5) {
                    identity(w, alpha)
                } else {
                    affine(w, out, alpha, rng.gen_range(1..9))
                }
            }
            1 => {
                let w = out_words[p[0]];
                if rng.gen_bool(0.4) {
                    identity(w, alpha)
                } else {
                    affine(w, out, alpha, rng.gen_range(1..9))
                }
            }
            _ => mix(p.iter().map(|&q| out_words[q]).collect(), out, alpha),
        };
        let spec = AccelSpec {
            fixed_cycles: Some(rng.gen_range(0..40)),
            ..spec
        };
        out_words.push(match spec.kernel {
            Some(AccelKind::Identity) => spec.words.unwrap(),
            _ => spec.out_words.unwrap(),
        });
        let remaining = n_nodes - i - 1;
        let room = slots - used - remaining;
        let inst = if rng.gen_bool(0.3) {
            rng.gen_range(1..=3).min(room)
        } else {
            1
        };
        used += inst;
        specs.push((spec, inst));
        preds.push(p);
    }

    let mut coords: Vec<(usize, usize)> = (0..rows)
        .flat_map(|y| (0..cols).map(move |x| (x, y)))
        .collect();
    coords.shuffle(&mut rng);
    let mut fp = Floorplan::new(cols, rows)
        .processor(coords[0].0, coords[0].1)
        .memory(coords[1].0, coords[1].1);
    let mut k = 2;
    let mut nodes = Vec::new();
    for (i, (spec, inst)) in specs.iter().enumerate() {
        let name = format!("n{i}");
        for j in 0..*inst {
            fp = fp.accel(
                coords[k].0,
                coords[k].1,
                &format!("{name}.{j}"),
                spec.clone(),
            );
            k += 1;
        }
        nodes.push(node(&name, spec.kernel.unwrap(), *inst));
    }

    let mut edges = Vec::new();
    for (i, p) in preds.iter().enumerate() {
        let mut p2p_sources = 0;
        for &q in p {
            let want = if rng.gen_bool(0.6) {
                EdgeMode::P2p
            } else {
                EdgeMode::Dma
            };
            let mode = if want == EdgeMode::P2p && p2p_sources + specs[q].1 <= 4 {
                p2p_sources += specs[q].1;
                EdgeMode::P2p
            } else {
                EdgeMode::Dma
            };
            edges.push(edge(&format!("n{q}"), &format!("n{i}"), mode));
        }
    }
    let soc = fp.build();
    let mut g = graph(nodes, edges);
    // Downgrade p2p edges whose consumer would wait on its own producer.
    let (_, rt) = meshsoc::experiment::boot(&soc).expect("random floorplan boots");
    while let Err(meshsoc::RuntimeError::Validation(errs)) = rt.validate(&g) {
        match errs.as_slice() {
            [meshsoc::runtime::ValidationError::P2pDeadlock { index, .. }] => {
                g.edges[*index].mode = EdgeMode::Dma
            }
            other => panic!("seed {seed}: generator produced an invalid graph: {other:?}"),
        }
    }
    RandomCase {
        seed,
        soc,
        graph: g,
        frames: rng.gen_range(1..=6),
    }
}
