//! End-to-end experiment driver: build the SoC, validate the dataflow,
//! generate seeded inputs, run, and summarize.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::SocConfig;
use crate::kernels::image::{self, Image};
use crate::kernels::{Fx16, InputDomain};
use crate::report::RunReport;
use crate::runtime::{
    DataflowGraph, GraphInputs, Mode, PartInput, Plan, RunOutcome, Runtime, RuntimeError,
};
use crate::soc::{Soc, SocError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Soc(#[from] SocError),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
}

/// A finished run: the report plus the raw data behind it.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub report: RunReport,
    pub outcome: RunOutcome,
    pub inputs: GraphInputs,
}

/// Words for one input part of `frames` frames drawn from `domain`.
pub fn generate_part(
    domain: InputDomain,
    words: usize,
    frames: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<u64> {
    let mut out = Vec::with_capacity(words * frames);
    for _ in 0..frames {
        match domain {
            InputDomain::Pixels { max } => {
                out.extend((0..words).map(|_| rng.gen_range(0..=u64::from(max))))
            }
            InputDomain::Histogram => {
                let px: Vec<u64> = (0..image::PIXELS).map(|_| rng.gen_range(0..=255)).collect();
                let img = Image::from_words(&px).expect("pixels in range");
                let mut h = image::hist_to_words(&image::histogram(&img));
                h.resize(words, 0);
                out.extend(h);
            }
            InputDomain::Activations => {
                out.extend((0..words).map(|_| Fx16::from_raw(rng.gen_range(-1024..1024)).to_word()))
            }
            InputDomain::Raw => out.extend((0..words).map(|_| u64::from(rng.gen::<u32>()))),
        }
    }
    out
}

/// Seeded inputs for every external part of `plan`, in plan order.
pub fn generate_inputs(soc: &Soc, plan: &Plan, frames: usize, seed: u64) -> GraphInputs {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inputs = GraphInputs::new();
    for n in &plan.nodes {
        let kernel = soc
            .accelerator(n.devices[0].coord)
            .expect("planned device")
            .kernel();
        for (p, inp) in n.inputs.iter().enumerate() {
            if *inp == PartInput::External {
                let data = generate_part(kernel.input_domain(p), n.parts[p], frames, &mut rng);
                inputs.insert((n.name.clone(), p), data);
            }
        }
    }
    inputs
}

/// SHA-256 of the canonical SoC and dataflow descriptions.
pub fn fingerprint(soc: &SocConfig, graph: &DataflowGraph) -> String {
    let mut h = Sha256::new();
    h.update(soc.to_toml().as_bytes());
    h.update(b"\0");
    h.update(graph.to_toml().as_bytes());
    hex::encode(h.finalize())
}

pub fn output_digest(outputs: &BTreeMap<String, Vec<u64>>) -> String {
    let mut h = Sha256::new();
    for (name, words) in outputs {
        h.update(name.as_bytes());
        h.update((words.len() as u64).to_le_bytes());
        for w in words {
            h.update(w.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

/// Builds a fresh SoC and boots the runtime on it.
pub fn boot(cfg: &SocConfig) -> Result<(Soc, Runtime), ExperimentError> {
    let mut soc = Soc::build(cfg)?;
    let rt = Runtime::boot(&mut soc)?;
    Ok((soc, rt))
}

/// Runs `graph` on a freshly built SoC.
pub fn run_experiment(
    cfg: &SocConfig,
    graph: &DataflowGraph,
    mode: Mode,
    frames: usize,
    seed: u64,
) -> Result<Experiment, ExperimentError> {
    if frames == 0 {
        return Err(RuntimeError::Invalid("frame count must be at least 1".into()).into());
    }
    let (mut soc, mut rt) = boot(cfg)?;
    let plan = rt.validate(graph)?;
    let inputs = generate_inputs(&soc, &plan, frames, seed);
    let outcome = rt.run(&mut soc, &plan, mode, frames, &inputs)?;
    let report = RunReport {
        mode,
        frames,
        seed,
        clock_hz: cfg.clock_hz(),
        total_cycles: outcome.total_cycles,
        frames_per_second: RunReport::fps(frames, cfg.clock_hz(), outcome.total_cycles),
        dram_read_words: outcome.dram_read_words,
        dram_write_words: outcome.dram_write_words,
        per_link_flits: outcome
            .link_flits
            .iter()
            .map(|(l, v)| (l.to_string(), *v))
            .collect(),
        per_node_busy_cycles: outcome.busy_cycles.clone(),
        fingerprint: fingerprint(cfg, graph),
        trace_digest: soc.mesh().trace_digest(),
        output_digest: output_digest(&outcome.outputs),
    };
    Ok(Experiment {
        report,
        outcome,
        inputs,
    })
}

/// Runs every mode on its own fresh SoC.
pub fn compare(
    cfg: &SocConfig,
    graph: &DataflowGraph,
    frames: usize,
    seed: u64,
) -> Result<Vec<Experiment>, ExperimentError> {
    Mode::ALL
        .iter()
        .map(|&m| run_experiment(cfg, graph, m, frames, seed))
        .collect()
}
