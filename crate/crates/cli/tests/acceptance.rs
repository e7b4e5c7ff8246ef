//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any fails.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::OnceLock;
use std::time::Instant;

use cogbench_core::analysis::{binomial_se, compare_runs, pearson, ScoreCell, ScoreTable};
use cogbench_core::dataset::{
    build_trial, generate_dataset, list_trials, read_trial, sft_record, write_trial, DatasetSpec, Split, TaskSource,
    Trial, TrialDetails, IMAGE_PLACEHOLDER,
};
use cogbench_core::fixtures::{figure_graph, figure_scene};
use cogbench_core::language::{synth_ground_truth_captions, synth_instruction};
use cogbench_core::prompt::EvalMode;
use cogbench_core::stimuli::{synth_asset_pack, AssetPack, CanvasConfig};
use cogbench_core::task::{
    brute_force_answer, chance_level, display_percent, eval_graph, possible_answers, AnswerSpacePolicy,
};
use cogbench_core::taskgen::{autotask, instantiate, sample_scene, AutoTaskParams, FeatureSelection, TaskKind};
use cogbench_harness::client::wire_body;
use cogbench_harness::mock::{GroundTruthCaptioner, PerfectReasoner, UniformRandom};
use cogbench_harness::{build_prompt, caption_frames, load_results, run_eval, ChatRequest, EvalConfig, Models, Part};
use num_rational::Ratio;
use num_traits::{Signed, ToPrimitive, Zero};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn pack() -> &'static AssetPack {
    static PACK: OnceLock<(tempfile::TempDir, AssetPack)> = OnceLock::new();
    &PACK
        .get_or_init(|| {
            let d = tempfile::tempdir().unwrap();
            let p = synth_asset_pack(11, d.path(), 2).unwrap();
            (d, p)
        })
        .1
}

fn tiny() -> CanvasConfig {
    CanvasConfig { width: 16, height: 16, margin: 1, ..CanvasConfig::default() }
}

const PER_KIND: usize = 500;

/// 22 kinds x 500 trials, shared by the harness criteria.
fn big_dataset() -> &'static Path {
    static ROOT: OnceLock<tempfile::TempDir> = OnceLock::new();
    ROOT.get_or_init(|| {
        let d = tempfile::tempdir().unwrap();
        let mut spec = DatasetSpec::all_kinds("acceptance", Split::Eval, 50, PER_KIND / 50, 10_000);
        spec.canvas = tiny();
        generate_dataset(&spec, pack(), d.path()).unwrap();
        d
    })
    .path()
}

fn oracle_equivalence() -> Outcome {
    let features = [FeatureSelection::Category, FeatureSelection::Location, FeatureSelection::Both];
    let presets: Vec<AutoTaskParams> = features
        .iter()
        .flat_map(|&f| [AutoTaskParams::low(f), AutoTaskParams::medium(f), AutoTaskParams::high(f), AutoTaskParams::high_distractor(f)])
        .chain([AutoTaskParams::finetune()])
        .collect();
    let start = Instant::now();
    let mut agree = 0;
    for i in 0..2000u64 {
        let params = &presets[i as usize % presets.len()];
        let graph = autotask(params, i).map_err(|e| format!("autotask seed {i}: {e}"))?;
        let scene = sample_scene(&graph, params, i + 1_000_000, pack()).map_err(|e| format!("scene seed {i}: {e}"))?;
        let fast = eval_graph(&graph, &scene).map_err(|e| e.to_string())?;
        let slow = brute_force_answer(&graph, &scene).map_err(|e| e.to_string())?;
        check(fast == slow, || format!("seed {i}: evaluator {fast} vs oracle {slow}"))?;
        agree += 1;
    }
    let secs = start.elapsed().as_secs_f64();
    check(secs < 60.0, || format!("took {secs:.1} s"))?;
    Ok(format!("{agree}/2000 graphs agree with brute force over {} presets in {secs:.1} s", presets.len()))
}

/// Chance levels, in percent, as printed in the task list.
const PRINTED_CHANCE: [(&str, u32); 22] = [
    ("Perc-Cat-R", 13),
    ("Perc-Cat-C", 50),
    ("Perc-Loc-R", 25),
    ("Perc-Loc-C", 50),
    ("Att-Feat-R", 25),
    ("Att-Feat-C", 50),
    ("Att-Spa-R", 13),
    ("Att-Spa-C", 50),
    ("Mem-Cat-R", 13),
    ("Mem-Cat-C", 50),
    ("Mem-Loc-R", 25),
    ("Mem-Loc-C", 50),
    ("Mem-Dis-Cat-R", 13),
    ("Mem-Dis-Cat-C", 50),
    ("Mem-Dis-Loc-R", 25),
    ("Mem-Dis-Loc-C", 50),
    ("CVR-Cat-H", 7),
    ("CVR-Loc-H", 7),
    ("CVR-Cat-M", 50),
    ("CVR-Loc-M", 50),
    ("CVR-Cat-L", 50),
    ("CVR-Loc-L", 50),
];

fn chance_levels() -> Outcome {
    let mut checked = 0;
    for (label, printed) in PRINTED_CHANCE {
        let kind: TaskKind = label.parse().map_err(|e| format!("{e}"))?;
        for seed in 0..1000u64 {
            let (graph, _) = instantiate(kind, seed, pack()).map_err(|e| format!("{label} seed {seed}: {e}"))?;
            let p = chance_level(&graph, kind.policy()).map_err(|e| e.to_string())?;
            let shown = display_percent(p);
            check(shown == printed, || format!("{label} seed {seed}: {shown}% (exact {p}), expected {printed}%"))?;
            checked += 1;
        }
    }
    Ok(format!("{checked} trials over 22 kinds round to the printed chance level"))
}

const GOLDEN: &str = "observe object 1 in frame 1, observe object 2 in frame 2, observe object 3 in frame 3, \
observe object 4 in frame 4, observe object 5 in frame 5, delay, observe object 6 in frame 7, delay, \
observe object 7 in frame 9, if identity of object 3 equals identity of object 2, then location of object 7 \
not equals location of object 6 and identity of object 5 equals identity of object 4? else location of object 1?";

fn golden_instruction() -> Outcome {
    let (graph, scene) = (figure_graph(), figure_scene());
    let instruction = synth_instruction(&graph, &scene).map_err(|e| e.to_string())?;
    check(instruction == GOLDEN, || format!("instruction differs:\n  got  {instruction}\n  want {GOLDEN}"))?;
    let trial = Trial {
        task: "figure".into(),
        id: 0,
        instruction,
        answer: eval_graph(&graph, &scene).map_err(|e| e.to_string())?,
        possible: possible_answers(&graph, AnswerSpacePolicy::Exact).map_err(|e| e.to_string())?,
        frame_count: scene.len(),
        details: Some(TrialDetails {
            source: TaskSource::AutoTask { name: "figure".into(), params: AutoTaskParams::high(FeatureSelection::Both) },
            seed: 0,
            pack_digest: pack().digest().to_string(),
            captions: synth_ground_truth_captions(&scene),
            scene,
            graph,
        }),
    };
    let d = tempfile::tempdir().unwrap();
    let dir = write_trial(&d.path().join("figure"), &trial, pack(), &tiny()).map_err(|e| e.to_string())?;
    let rec = sft_record(&read_trial(&dir).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let placeholders = rec.messages[0].content.matches(IMAGE_PLACEHOLDER).count();
    check(placeholders == 9 && rec.images.len() == 9, || format!("{placeholders} placeholders, {} images", rec.images.len()))?;
    check(rec.messages[1].content == "top right", || format!("assistant says {:?}", rec.messages[1].content))?;
    Ok("instruction is byte-identical; SFT record has 9 <image>, 9 paths, answer \"top right\"".into())
}

fn statistical_sanity() -> Outcome {
    let root = big_dataset();
    let mut chance: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for dir in list_trials(root).map_err(|e| e.to_string())? {
        let t = read_trial(&dir).map_err(|e| e.to_string())?.trial;
        let e = chance.entry(t.task).or_default();
        e.0 += 1.0 / t.possible.len() as f64;
        e.1 += 1;
    }
    let per_kind = |out: &Path| -> Result<BTreeMap<String, (usize, usize)>, String> {
        let mut m: BTreeMap<String, (usize, usize)> = BTreeMap::new();
        for r in load_results(out).map_err(|e| e.to_string())? {
            let e = m.entry(r.task).or_default();
            e.0 += usize::from(r.correct);
            e.1 += 1;
        }
        Ok(m)
    };

    let out = tempfile::tempdir().unwrap();
    let uniform = UniformRandom::new(2024);
    let s = run_eval(root, out.path(), Models::single(&uniform), &EvalConfig::new(EvalMode::Base)).map_err(|e| e.to_string())?;
    check(s.errored == 0, || format!("{} errored trials", s.errored))?;
    let mut worst = 0.0f64;
    for (task, (correct, n)) in per_kind(out.path())? {
        let (sum, count) = chance[&task];
        check(n >= PER_KIND && count == n, || format!("{task}: {n} results for {count} trials"))?;
        let p0 = sum / n as f64;
        let se = (p0 * (1.0 - p0) / n as f64).sqrt();
        let acc = correct as f64 / n as f64;
        let z = (acc - p0).abs() / se;
        worst = worst.max(z);
        check(z <= 3.0, || format!("{task}: accuracy {acc:.4} vs chance {p0:.4} is {z:.2} SE away"))?;
    }

    let out = tempfile::tempdir().unwrap();
    let s = run_eval(root, out.path(), Models::single(&PerfectReasoner), &EvalConfig::new(EvalMode::Pc)).map_err(|e| e.to_string())?;
    for (task, (correct, n)) in per_kind(out.path())? {
        check(correct == n, || format!("perfect reasoner: {task} {correct}/{n}"))?;
    }
    Ok(format!("uniform mock within {worst:.2} SE of chance on every kind ({} trials); perfect reasoner {}/{}", s.total, s.correct, s.total))
}

fn payload(stored_mode: EvalMode, stored: &cogbench_core::dataset::StoredTrial, caps: Option<&[String]>) -> Result<Vec<u8>, String> {
    let messages = build_prompt(stored, stored_mode, caps).map_err(|e| e.to_string())?;
    let req = ChatRequest { messages, max_tokens: 1024, temperature: 0.0 };
    Ok(serde_json::to_vec(&wire_body("model", &req)).unwrap())
}

fn mode_payloads() -> Outcome {
    let root = big_dataset();
    let mut dirs = list_trials(root).map_err(|e| e.to_string())?;
    dirs.shuffle(&mut ChaCha8Rng::seed_from_u64(77));
    let captioner = GroundTruthCaptioner::from_dataset(root, PerfectReasoner).map_err(|e| e.to_string())?;
    for dir in &dirs[..100] {
        let stored = read_trial(dir).map_err(|e| e.to_string())?;
        let (caps, _, _) = caption_frames(&stored, &captioner, 1024).map_err(|e| e.to_string())?;
        let name = dir.display();
        check(payload(EvalMode::Sc, &stored, Some(&caps))? == payload(EvalMode::Pc, &stored, None)?, || {
            format!("{name}: SC payload differs from PC")
        })?;

        let m = build_prompt(&stored, EvalMode::ScI, Some(&caps)).map_err(|e| e.to_string())?;
        check(m.turns.len() == 1, || format!("{name}: {} turns", m.turns.len()))?;
        let parts = &m.turns[0].parts;
        let n = stored.frames.len();
        check(parts.len() == 2 * n + 2 && m.image_count() == n, || format!("{name}: {} parts for {n} frames", parts.len()))?;
        for i in 0..n {
            check(parts[1 + 2 * i].is_image(), || format!("{name}: part {} is not frame {}", 1 + 2 * i, i + 1))?;
            let want = format!("Frame {}: {}", i + 1, caps[i]);
            match &parts[2 + 2 * i] {
                Part::Text { text } if text.trim_end() == want => {}
                other => return Err(format!("{name}: expected caption `{want}`, got {other:?}")),
            }
        }
        check(!parts[0].is_image() && !parts[2 * n + 1].is_image(), || format!("{name}: prompt not framed by text"))?;
    }
    Ok("100 random trials: SC payloads byte-identical to PC; SC-I alternates image, caption".into())
}

fn format_fidelity() -> Outcome {
    let cell = ScoreCell::<f64>::from_counts("x", 23, 50).map_err(|e| e.to_string())?;
    check(cell.display() == "46.00±7.05", || format!("23/50 renders {}", cell.display()))?;
    let se = format!("{:.2}", binomial_se(0.46f64, 40) * 100.0);
    check(se == "7.88", || format!("se(0.46, 40) renders {se}"))?;
    let table = |p: f64, se: f64| ScoreTable { groups: vec![ScoreCell::from_values("Percep. (Loc)", p, se)], tasks: vec![] };
    let d = compare_runs(&table(0.4433, 0.0559), &table(0.7300, 0.0500)).map_err(|e| e.to_string())?;
    let shown = d.rows[0].display_delta();
    check(shown == "+28.67", || format!("delta renders {shown}"))?;
    Ok("\"46.00±7.05\", se 7.88, delta \"+28.67\"".into())
}

fn determinism_round_trip() -> Outcome {
    let spec = {
        let mut s = DatasetSpec::all_kinds("det", Split::Eval, 2, 2, 500);
        s.canvas = tiny();
        s
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let pack_dir = tempfile::tempdir().unwrap();
    let twin = synth_asset_pack(11, pack_dir.path(), 2).map_err(|e| e.to_string())?;
    check(twin.digest() == pack().digest(), || "same-seed packs differ".into())?;
    let ma = generate_dataset(&spec, pack(), a.path()).map_err(|e| e.to_string())?;
    let mb = generate_dataset(&spec, &twin, b.path()).map_err(|e| e.to_string())?;
    check(ma.digest() == mb.digest(), || format!("manifest digests {} vs {}", ma.digest(), mb.digest()))?;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let d = tempfile::tempdir().unwrap();
    for i in 0..200u64 {
        let source = if rng.gen_bool(0.1) { TaskSource::finetune() } else { TaskSource::kind(*TaskKind::ALL.choose(&mut rng).unwrap()) };
        let trial = build_trial(&source, i, rng.gen(), rng.gen(), pack()).map_err(|e| format!("trial {i}: {e}"))?;
        let dir = write_trial(&d.path().join(source.label()), &trial, pack(), &tiny()).map_err(|e| e.to_string())?;
        let back = read_trial(&dir).map_err(|e| e.to_string())?;
        check(back.trial == trial, || format!("trial {i} ({}) changed on disk", source.label()))?;
        check(back.frames.len() == trial.frame_count, || format!("trial {i}: {} frame files", back.frames.len()))?;
    }
    Ok(format!("manifest digest {} reproduced; 200 trials round-trip", &ma.digest()[..12]))
}

/// Memory (Cat), Memory (Loc), then the six composite rows; columns are the
/// six models and the human baseline, in hundredths of a percent.
const SCORES: [[i128; 7]; 8] = [
    [6683, 7368, 6120, 7859, 8896, 9147, 9688],
    [5083, 3911, 4875, 4222, 5728, 8347, 9625],
    [4600, 6200, 5200, 6000, 8133, 9133, 8250],
    [6600, 5000, 4600, 5600, 5133, 6600, 9250],
    [4400, 4933, 3800, 5400, 7200, 9667, 9500],
    [5800, 5933, 5000, 4933, 5133, 8267, 7000],
    [2400, 3700, 3733, 3933, 6300, 8367, 7250],
    [2000, 3100, 3633, 2933, 3967, 6467, 7500],
];

fn pearson_oracle() -> Outcome {
    let col_mean = |rows: &[[i128; 7]], j: usize| Ratio::new(rows.iter().map(|r| r[j]).sum::<i128>(), rows.len() as i128);
    let xs: Vec<Ratio<i128>> = (0..7).map(|j| col_mean(&SCORES[..2], j)).collect();
    let ys: Vec<Ratio<i128>> = (0..7).map(|j| col_mean(&SCORES[2..], j)).collect();
    let n = Ratio::from_integer(7);
    let (mx, my) = (xs.iter().sum::<Ratio<i128>>() / n, ys.iter().sum::<Ratio<i128>>() / n);
    let (mut sxy, mut sxx, mut syy) = (Ratio::zero(), Ratio::zero(), Ratio::zero());
    for (x, y) in xs.iter().zip(&ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    // r = sxy / sqrt(sxx syy); only the final square root is inexact
    let r2 = (sxy * sxy / (sxx * syy)).to_f64().unwrap();
    let oracle = r2.sqrt() * if sxy.is_negative() { -1.0 } else { 1.0 };

    let fx: Vec<f64> = xs.iter().map(|v| v.to_f64().unwrap() / 100.0).collect();
    let fy: Vec<f64> = ys.iter().map(|v| v.to_f64().unwrap() / 100.0).collect();
    let r = pearson(&fx, &fy).map_err(|e| e.to_string())?.r;
    check((r - oracle).abs() < 1e-9, || format!("pearson {r} vs oracle {oracle}"))?;
    check(r > 0.8, || format!("r = {r}"))?;
    let neg: Vec<f64> = fx.iter().map(|v| -v).collect();
    let self_r = pearson(&fx, &fx).map_err(|e| e.to_string())?.r;
    let anti_r = pearson(&fx, &neg).map_err(|e| e.to_string())?.r;
    check(self_r == 1.0 && anti_r == -1.0, || format!("r(x,x) = {self_r}, r(x,-x) = {anti_r}"))?;
    Ok(format!("r = {r:.6} matches the exact oracle; r(x,x) = 1, r(x,-x) = -1"))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("oracle-equivalence", oracle_equivalence),
        ("chance-levels", chance_levels),
        ("golden-instruction", golden_instruction),
        ("statistical-sanity", statistical_sanity),
        ("mode-payloads", mode_payloads),
        ("format-fidelity", format_fidelity),
        ("determinism-round-trip", determinism_round_trip),
        ("pearson-oracle", pearson_oracle),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(msg) => println!("PASS {name}: {msg} [{secs:.1}s]"),
            Err(msg) => {
                failed += 1;
                println!("FAIL {name}: {msg} [{secs:.1}s]");
            }
        }
    }
    println!("{} of {} acceptance criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
