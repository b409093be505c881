//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

mod common;

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use common::*;
use meshsoc::experiment::{self, compare, run_experiment};
use meshsoc::kernels::image::{self, Image, HEIGHT, PIXELS, WIDTH};
use meshsoc::kernels::{self, AccelKind, AccelSpec, Fx16, MlpModel};
use meshsoc::noc::{Coord, Link, Plane};
use meshsoc::report;
use meshsoc::runtime::{EdgeMode, Mode, ValidationError};
use meshsoc::{RuntimeError, SocConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(actual: f64, target: f64, rel: f64) -> bool {
    ((actual - target) / target).abs() <= rel
}

fn by_mode(runs: &[experiment::Experiment], mode: Mode) -> &experiment::Experiment {
    runs.iter()
        .find(|e| e.report.mode == mode)
        .expect("every mode ran")
}

struct Pipeline {
    soc: &'static str,
    dataflow: &'static str,
    /// Words carried per frame by each producer-to-consumer edge.
    intermediates: &'static [u64],
    /// Whether the 2x to 3x band applies.
    banded: bool,
}

const PIPELINES: [Pipeline; 3] = [
    Pipeline {
        soc: "configs/soc_a.toml",
        dataflow: "dataflows/nightvision_classifier.toml",
        intermediates: &[1024],
        banded: true,
    },
    Pipeline {
        soc: "configs/soc_a.toml",
        dataflow: "dataflows/denoiser_classifier.toml",
        intermediates: &[1024],
        banded: true,
    },
    Pipeline {
        soc: "configs/soc_b.toml",
        dataflow: "dataflows/multitile_classifier.toml",
        intermediates: &[256, 128, 64, 32],
        banded: false,
    },
];

// C1: pipe/p2p DRAM ratio against the per-edge traffic oracle.
fn dram_reduction() -> Outcome {
    const FRAMES: u64 = 64;
    // every pipeline reads a 1024-pixel frame and writes 10 logits
    let (inw, outw) = (1024, 10);
    let mut detail = Vec::new();
    for Pipeline {
        soc,
        dataflow: df,
        intermediates: edges,
        banded: band,
    } in PIPELINES
    {
        let t0 = Instant::now();
        let runs = compare(&load_soc(soc), &load_graph(df), FRAMES as usize, 1)
            .map_err(|e| format!("{df}: {e}"))?;
        let secs = t0.elapsed().as_secs_f64();
        let pipe = by_mode(&runs, Mode::Pipe).report.dram_words();
        let p2p = by_mode(&runs, Mode::P2p).report.dram_words();
        let base = FRAMES * (inw + outw);
        let eliminated = FRAMES * 2 * edges.iter().sum::<u64>();
        ensure(p2p == base, || {
            format!("{df}: p2p moved {p2p} words, oracle {base}")
        })?;
        ensure(pipe == base + eliminated, || {
            format!(
                "{df}: pipe moved {pipe} words, oracle {}",
                base + eliminated
            )
        })?;
        let ratio = pipe as f64 / p2p as f64;
        let oracle = (base + eliminated) as f64 / base as f64;
        ensure(ratio == oracle, || {
            format!("{df}: ratio {ratio} != oracle {oracle}")
        })?;
        ensure(!band || (2.0..=3.0).contains(&ratio), || {
            format!("{df}: ratio {ratio:.3} outside [2, 3]")
        })?;
        ensure(secs <= 60.0, || format!("{df}: took {secs:.1} s"))?;
        let name = df
            .trim_start_matches("dataflows/")
            .trim_end_matches(".toml");
        detail.push(format!("{name} {ratio:.4} ({secs:.1}s)"));
    }
    Ok(detail.join(", "))
}

// C2: three equal stages; pipe fills in 2 stage times and then retires one
// frame per stage time.
fn pipelining_speedup() -> Outcome {
    const FRAMES: usize = 64;
    let (soc, g) = affine_chain(&[(32, 1); 3], 256, EdgeMode::Dma);
    let runs = compare(&soc, &g, FRAMES, 2).map_err(|e| e.to_string())?;
    let fps = |m| by_mode(&runs, m).report.frames_per_second;
    let speedup = fps(Mode::Pipe) / fps(Mode::Serial);
    let ideal = (3 * FRAMES) as f64 / (FRAMES + 2) as f64;
    ensure(speedup >= 2.5, || {
        format!("pipe speedup {speedup:.3} < 2.5")
    })?;
    ensure(within(speedup, ideal, 0.10), || {
        format!("pipe speedup {speedup:.3} not within 10% of {ideal:.3}")
    })?;
    let p2p = fps(Mode::P2p) / fps(Mode::Serial);
    ensure(p2p >= speedup * 0.95, || {
        format!("p2p speedup {p2p:.3} well below pipe {speedup:.3}")
    })?;
    Ok(format!(
        "pipe/serial {speedup:.3} (ideal {ideal:.3}), p2p/serial {p2p:.3}"
    ))
}

// C3: random graphs give identical outputs in every mode.
fn mode_equivalence() -> Outcome {
    let mut frames = 0;
    for seed in 0..200 {
        let case = random_case(seed);
        let mut outs = Vec::new();
        for mode in Mode::ALL {
            let e = run_experiment(&case.soc, &case.graph, mode, case.frames, seed)
                .map_err(|e| format!("seed {seed} {mode}: {e}"))?;
            outs.push(e.outcome.outputs);
        }
        ensure(outs[0] == outs[1] && outs[1] == outs[2], || {
            format!("seed {seed}: outputs differ across modes")
        })?;
        frames += case.frames;
    }
    Ok(format!("200 graphs, {frames} frames each in 3 modes"))
}

// C4: a consumer held in reset-like stall never receives p2p data and the
// fabric never queues beyond its depth.
fn consumption_assumption() -> Outcome {
    const STALL_UNTIL: u64 = 30_000;
    let cfg = Floorplan::new(3, 2)
        .memory(0, 0)
        .accel(1, 0, "a.0", affine(64, 64, 2, 3))
        .accel(2, 0, "b.0", affine(64, 64, 2, 5))
        .processor(0, 1)
        .build();
    let g = graph(
        vec![
            node("a", AccelKind::Affine, 1),
            node("b", AccelKind::Affine, 1),
        ],
        vec![edge("a", "b", EdgeMode::P2p)],
    );
    let (a, b) = (Coord::new(1, 0), Coord::new(2, 0));
    let depth = cfg.noc.queue_depth;
    let (mut soc, mut rt) = experiment::boot(&cfg).map_err(|e| e.to_string())?;
    let inventory = soc.mesh().queue_inventory();
    let plan = rt.validate(&g).map_err(|e| e.to_string())?;
    let frames = 4;
    let inputs = experiment::generate_inputs(&soc, &plan, frames, 4);
    soc.stall_accelerator(b, STALL_UNTIL);

    let link = Link {
        from: a,
        to: b,
        plane: Plane::DmaRsp,
    };
    let mut violation: Option<String> = None;
    let mut saw_staged = false;
    let mut stalled_cycles = 0u64;
    let mut observer = |s: &meshsoc::Soc| {
        if violation.is_some() {
            return;
        }
        let occ = s.mesh().current_max_occupancy();
        if occ > depth {
            violation = Some(format!(
                "queue occupancy {occ} > depth {depth} at cycle {}",
                s.cycle()
            ));
        }
        if s.cycle() < STALL_UNTIL {
            stalled_cycles += 1;
            let on_link = s.mesh().link_flit_count(link);
            let on_flow = s.mesh().flow_flits(a, b, Plane::DmaRsp);
            if on_link + on_flow > 0 {
                violation = Some(format!(
                    "{on_link} flits crossed {link} while b was stalled (cycle {})",
                    s.cycle()
                ));
            }
            if let Some((why, _)) = s.accelerator(a).and_then(|t| t.wait_state()) {
                saw_staged |= why.contains("staged chunk");
            }
        }
    };
    let out = rt
        .run_observed(&mut soc, &plan, Mode::P2p, frames, &inputs, &mut observer)
        .map_err(|e| e.to_string())?;
    if let Some(v) = violation {
        return Err(v);
    }
    ensure(saw_staged, || {
        "producer never held a staged chunk during the stall".into()
    })?;
    ensure(out.end_cycle > STALL_UNTIL, || {
        "run finished before the stall ended".into()
    })?;
    ensure(soc.mesh().max_queue_occupancy() <= depth, || {
        "high-water mark exceeded queue depth".into()
    })?;
    ensure(soc.mesh().queue_inventory() == inventory, || {
        "queue inventory changed".into()
    })?;
    ensure(soc.mesh().link_flit_count(link) > 0, || {
        "p2p data never flowed after the stall".into()
    })?;

    let x = &inputs[&("a".to_string(), 0)];
    let expect: Vec<u64> = x
        .iter()
        .enumerate()
        .map(|(k, &w)| {
            let i = (k % 64) as u64;
            (w * 3 + 4 + i) * 5 + 6 + i
        })
        .collect();
    ensure(out.outputs["b"] == expect, || {
        "outputs wrong after the stall".into()
    })?;
    Ok(format!(
        "{stalled_cycles} observations during the stall, max occupancy {} <= {depth}",
        soc.mesh().max_queue_occupancy()
    ))
}

// C5: filter -> {hist, eq}, hist -> eq, checked against the composed kernels.
fn multi_source() -> Outcome {
    const FRAMES: usize = 16;
    let e = run_experiment(
        &load_soc("configs/soc_a.toml"),
        &load_graph("dataflows/nightvision_split.toml"),
        Mode::P2p,
        FRAMES,
        5,
    )
    .map_err(|e| e.to_string())?;
    ensure(
        e.report.dram_words() == (FRAMES * 2 * PIXELS) as u64,
        || "intermediates touched DRAM".into(),
    )?;
    let input = &e.inputs[&("filter".to_string(), 0)];
    let output = &e.outcome.outputs["eq"];
    for f in 0..FRAMES {
        let img =
            Image::from_words(&input[f * PIXELS..(f + 1) * PIXELS]).map_err(|e| e.to_string())?;
        let filtered = image::noise_filter(&img);
        let expect = image::hist_equalize(&filtered, &image::histogram(&filtered)).to_words();
        ensure(output[f * PIXELS..(f + 1) * PIXELS] == expect[..], || {
            format!("frame {f} differs")
        })?;
    }

    // Four filter instances plus the histogram feeding one equalizer.
    let mut fp = Floorplan::new(4, 2).memory(0, 0).processor(0, 1);
    for (i, x) in (1..4).chain(1..2).enumerate() {
        fp = fp.accel(
            x,
            i / 3,
            &format!("filter.{i}"),
            AccelSpec::of(AccelKind::MedianFilter),
        );
    }
    let cfg = fp
        .accel(2, 1, "hist.0", AccelSpec::of(AccelKind::Histogram))
        .accel(3, 1, "eq.0", AccelSpec::of(AccelKind::Equalize))
        .build();
    let mut g = load_graph("dataflows/nightvision_split.toml");
    g.nodes[0].instances = 4;
    let (_, rt) = experiment::boot(&cfg).map_err(|e| e.to_string())?;
    match rt.validate(&g) {
        Err(RuntimeError::Validation(errs))
            if errs.iter().any(|v| matches!(v, ValidationError::FanIn { node, sources } if node == "eq" && *sources == 5)) =>
        {
            Ok(format!("{FRAMES} frames bit-identical; fan-in 5 rejected"))
        }
        other => Err(format!("fan-in 5 was not rejected: {other:?}")),
    }
}

// C6: five single-layer tiles against one monolithic inference.
fn multitile_equivalence() -> Outcome {
    const FRAMES: usize = 100;
    let e = run_experiment(
        &load_soc("configs/soc_b.toml"),
        &load_graph("dataflows/multitile_classifier.toml"),
        Mode::P2p,
        FRAMES,
        6,
    )
    .map_err(|e| e.to_string())?;
    let model = MlpModel::random(&[1024, 256, 128, 64, 32, 10], 7, 64);
    let input = &e.inputs[&("fc1".to_string(), 0)];
    let logits = &e.outcome.outputs["fc5"];
    ensure(logits.len() == FRAMES * 10, || {
        format!("{} logit words", logits.len())
    })?;
    for f in 0..FRAMES {
        let x: Vec<Fx16> = input[f * 1024..(f + 1) * 1024]
            .iter()
            .map(|&w| Fx16::from_pixel(w as u8))
            .collect();
        let y: Vec<u64> = kernels::mlp_infer(&model, &x)
            .map_err(|e| e.to_string())?
            .iter()
            .map(|v| v.to_word())
            .collect();
        ensure(logits[f * 10..(f + 1) * 10] == y[..], || {
            format!("frame {f}: logits differ")
        })?;
    }
    Ok(format!("{FRAMES} inputs bit-identical"))
}

// C7: A costs twice B per frame; two A instances should keep up with B.
fn pipeline_balancing() -> Outcome {
    const FRAMES: usize = 64;
    const WORDS: u64 = 256;
    const B_ALPHA: u64 = 64;
    let (soc, g) = affine_chain(
        &[(2 * B_ALPHA, 2), (B_ALPHA, 1)],
        WORDS as usize,
        EdgeMode::P2p,
    );
    let pair = run_experiment(&soc, &g, Mode::P2p, FRAMES, 7)
        .map_err(|e| e.to_string())?
        .report;
    let (soc, g) = affine_chain(&[(B_ALPHA, 1)], WORDS as usize, EdgeMode::P2p);
    let alone = run_experiment(&soc, &g, Mode::P2p, FRAMES, 7)
        .map_err(|e| e.to_string())?
        .report;
    // B's compute-bound rate: one frame per alpha * words cycles.
    let analytic = soc.clock_hz() / (B_ALPHA * WORDS) as f64;
    let ratio = pair.frames_per_second / alone.frames_per_second;
    ensure(within(alone.frames_per_second, analytic, 0.10), || {
        format!(
            "B alone at {:.0} fps, analytic {analytic:.0}",
            alone.frames_per_second
        )
    })?;
    ensure(
        within(pair.frames_per_second, alone.frames_per_second, 0.10),
        || format!("balanced pipeline at {ratio:.3} of B's rate"),
    )?;
    Ok(format!(
        "pipeline {:.0} fps, B alone {:.0} fps (ratio {ratio:.3}), analytic {analytic:.0}",
        pair.frames_per_second, alone.frames_per_second
    ))
}

fn reference_mlp(model: &MlpModel, x: &[Fx16], clamp: bool) -> Vec<f64> {
    let mut act: Vec<f64> = x.iter().map(|v| v.to_f64()).collect();
    let last = model.n_layers() - 1;
    for l in 0..model.n_layers() {
        let (n_in, n_out) = (model.layer_sizes[l], model.layer_sizes[l + 1]);
        act = (0..n_out)
            .map(|j| {
                let s: f64 = (0..n_in)
                    .map(|i| model.weights[l][j * n_in + i].to_f64() * act[i])
                    .sum::<f64>()
                    + model.biases[l][j].to_f64();
                if l != last {
                    s.max(0.0)
                } else {
                    s
                }
            })
            .collect();
    }
    if clamp {
        act.iter_mut()
            .for_each(|v| *v = v.clamp(0.0, 255.0 / 256.0));
    }
    act
}

fn brute_median(img: &Image, x: usize, y: usize) -> u8 {
    let mut nb = Vec::new();
    for yy in y as i64 - 1..=y as i64 + 1 {
        for xx in x as i64 - 1..=x as i64 + 1 {
            nb.push(img.get(
                xx.clamp(0, WIDTH as i64 - 1) as usize,
                yy.clamp(0, HEIGHT as i64 - 1) as usize,
            ));
        }
    }
    // The median is the smallest value with at least five neighbours at or below it.
    (0..=255u8)
        .find(|&v| nb.iter().filter(|&&p| p <= v).count() >= 5)
        .unwrap()
}

fn brute_equalize(img: &Image) -> Vec<u8> {
    let px = img.pixels();
    let n = px.len() as f64;
    let min = *px.iter().min().unwrap();
    let cdf_min = px.iter().filter(|&&p| p == min).count() as f64;
    px.iter()
        .map(|&p| {
            if cdf_min == n {
                return 255;
            }
            let cdf = px.iter().filter(|&&q| q <= p).count() as f64;
            (255.0 * (cdf - cdf_min) / (n - cdf_min)).round() as u8
        })
        .collect()
}

// C8: kernels against independent references.
fn kernel_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let tol = 1.0 / 128.0;
    let mut worst = 0.0f64;
    for (k, shape) in [
        vec![8, 6, 4],
        vec![16, 12, 8, 3],
        vec![32, 16, 32],
        vec![5, 5, 5, 5, 5],
    ]
    .iter()
    .enumerate()
    {
        let model = MlpModel::random(shape, 100 + k as u64, 1);
        for _ in 0..50 {
            let x: Vec<Fx16> = (0..shape[0])
                .map(|_| Fx16::from_raw(rng.gen_range(-1024..1024)))
                .collect();
            for clamp in [false, true] {
                let got = if clamp {
                    kernels::autoencoder_infer(&model, &x)
                } else {
                    kernels::mlp_infer(&model, &x)
                }
                .map_err(|e| e.to_string())?;
                for (g, r) in got.iter().zip(reference_mlp(&model, &x, clamp)) {
                    let err = (g.to_f64() - r).abs();
                    worst = worst.max(err);
                    ensure(err <= tol, || {
                        format!("shape {shape:?}: error {err} > 2^-7")
                    })?;
                }
            }
        }
    }

    let mut images: Vec<Image> = vec![Image::filled(0), Image::filled(200)];
    for levels in [2u8, 16, 255] {
        for _ in 0..6 {
            let px = (0..PIXELS).map(|_| rng.gen_range(0..=levels)).collect();
            images.push(Image::new(px).map_err(|e| e.to_string())?);
        }
    }
    for (i, img) in images.iter().enumerate() {
        let filtered = image::noise_filter(img);
        for y in 0..HEIGHT {
            for x in 0..WIDTH {
                ensure(filtered.get(x, y) == brute_median(img, x, y), || {
                    format!("image {i}: median at ({x},{y})")
                })?;
            }
        }
        let eq = image::hist_equalize(img, &image::histogram(img));
        ensure(eq.pixels() == brute_equalize(img), || {
            format!("image {i}: equalization differs")
        })?;
    }
    Ok(format!(
        "worst MLP error {worst:.2e}, {} images exact",
        images.len()
    ))
}

fn traced_run(
    cfg: &SocConfig,
    df: &str,
    seed: u64,
) -> Result<(Vec<meshsoc::noc::TraceEvent>, String), String> {
    let (mut soc, mut rt) = experiment::boot(cfg).map_err(|e| e.to_string())?;
    soc.mesh_mut().set_record_trace(true);
    let plan = rt.validate(&load_graph(df)).map_err(|e| e.to_string())?;
    let inputs = experiment::generate_inputs(&soc, &plan, 8, seed);
    rt.run(&mut soc, &plan, Mode::P2p, 8, &inputs)
        .map_err(|e| e.to_string())?;
    Ok((
        soc.mesh().trace().unwrap_or_default().to_vec(),
        soc.mesh().trace_digest(),
    ))
}

// C9: identical inputs give byte-identical reports and traces.
fn determinism() -> Outcome {
    let soc = load_soc("configs/soc_a.toml");
    let df = "dataflows/nightvision_split.toml";
    let g = load_graph(df);
    let csv = || -> Result<String, String> {
        let runs = compare(&soc, &g, 8, 9).map_err(|e| e.to_string())?;
        report::to_csv(&runs.into_iter().map(|e| e.report).collect::<Vec<_>>())
            .map_err(|e| e.to_string())
    };
    ensure(csv()? == csv()?, || "reports differ".into())?;
    let case = random_case(9);
    let rand_csv = || -> Result<String, String> {
        let r = run_experiment(&case.soc, &case.graph, Mode::P2p, case.frames, 9)
            .map_err(|e| e.to_string())?;
        report::to_csv(&[r.report]).map_err(|e| e.to_string())
    };
    ensure(rand_csv()? == rand_csv()?, || {
        "random-graph reports differ".into()
    })?;
    let (t1, d1) = traced_run(&soc, df, 9)?;
    let (t2, d2) = traced_run(&soc, df, 9)?;
    ensure(!t1.is_empty(), || "no trace recorded".into())?;
    ensure(t1 == t2 && d1 == d2, || "traces differ".into())?;
    Ok(format!("{} trace events identical", t1.len()))
}

type Check = fn() -> Outcome;

fn main() -> ExitCode {
    let criteria: [(&str, Check); 9] = [
        ("C1 DRAM traffic reduction", dram_reduction),
        ("C2 pipelining speedup", pipelining_speedup),
        ("C3 mode equivalence", mode_equivalence),
        ("C4 consumption assumption", consumption_assumption),
        ("C5 multi-source p2p", multi_source),
        ("C6 multi-tile classifier", multitile_equivalence),
        ("C7 pipeline balancing", pipeline_balancing),
        ("C8 kernel oracles", kernel_oracles),
        ("C9 determinism", determinism),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, check) in criteria {
        let t0 = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = t0.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {name}: {detail} [{secs:.1}s]"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why} [{secs:.1}s]");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
