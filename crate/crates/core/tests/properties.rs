use std::path::Path;
use std::sync::OnceLock;

use cogbench_core::analysis::{binomial_se, compare_runs, pearson, score};
use cogbench_core::dataset::{build_trial, read_trial, write_trial, TaskSource};
use cogbench_core::language::{parse_instruction, Instruction};
use cogbench_core::stimuli::{synth_asset_pack, AssetPack, CanvasConfig};
use cogbench_core::task::{
    brute_force_answer, chance_level, display_percent, eval_graph, possible_answers, Answer, AnswerSpacePolicy,
    AttributeKind, Category, Frame, GraphBuilder, Location, Node, Scene, SceneObject, StimulusId, TaskGraph,
};
use cogbench_core::taskgen::{autotask, instantiate, AutoTaskParams, FeatureSelection, TaskKind};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn pack() -> &'static AssetPack {
    static PACK: OnceLock<(tempfile::TempDir, AssetPack)> = OnceLock::new();
    &PACK
        .get_or_init(|| {
            let dir = tempfile::tempdir().unwrap();
            let p = synth_asset_pack(4, dir.path(), 2).unwrap();
            (dir, p)
        })
        .1
}

fn params(choice: usize) -> AutoTaskParams {
    let f = [FeatureSelection::Category, FeatureSelection::Location, FeatureSelection::Both][choice % 3];
    match choice / 3 % 5 {
        0 => AutoTaskParams::low(f),
        1 => AutoTaskParams::medium(f),
        2 => AutoTaskParams::high(f),
        3 => AutoTaskParams::high_distractor(f),
        _ => AutoTaskParams::finetune(),
    }
}

fn object(rng: &mut impl Rng, location: Location, ordinal: Option<u32>) -> SceneObject {
    SceneObject {
        stimulus: StimulusId {
            category: *Category::ALL.choose(rng).unwrap(),
            object_index: rng.gen_range(0..3),
            view_index: 0,
        },
        location,
        ordinal,
    }
}

/// Unconstrained objects around whatever the graph's selects need: every
/// uncued select finds its ordinal on a random object of its frame.
fn random_scene(graph: &TaskGraph, seed: u64) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut wanted: Vec<Vec<u32>> = Vec::new();
    for id in graph.reachable_selects() {
        if let Some(Node::Select { frame, ordinal, .. }) = graph.node(id) {
            if wanted.len() <= *frame {
                wanted.resize(frame + 1, Vec::new());
            }
            if !wanted[*frame].contains(ordinal) {
                wanted[*frame].push(*ordinal);
            }
        }
    }
    let frames = wanted
        .iter()
        .enumerate()
        .map(|(index, ords)| {
            let k = rng.gen_range(ords.len().max(usize::from(!ords.is_empty()))..=4);
            let mut locs = Location::ALL.to_vec();
            locs.shuffle(&mut rng);
            let mut objects: Vec<SceneObject> = locs[..k].iter().map(|&l| object(&mut rng, l, None)).collect();
            objects.shuffle(&mut rng);
            for (o, &ord) in objects.iter_mut().zip(ords) {
                o.ordinal = Some(ord);
            }
            Frame { index, objects }
        })
        .collect();
    Scene::new(frames).expect("random scene is valid")
}

fn kind_of(i: usize) -> AttributeKind {
    [AttributeKind::Location, AttributeKind::Category, AttributeKind::Identity][i % 3]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn evaluator_agrees_with_oracle(choice in 0usize..15, gseed in any::<u64>(), sseed in any::<u64>()) {
        let graph = autotask(&params(choice), gseed).unwrap();
        let scene = random_scene(&graph, sseed);
        prop_assert_eq!(eval_graph(&graph, &scene), brute_force_answer(&graph, &scene).map_err(|_| unreachable!()));
    }

    #[test]
    fn evaluator_agrees_with_oracle_on_perturbed_pam(k in 0usize..16, seed in any::<u64>(), flips in any::<u64>()) {
        let kind = TaskKind::ALL[k];
        let (graph, mut scene) = instantiate(kind, seed, pack()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(flips);
        for f in &mut scene.frames {
            for o in &mut f.objects {
                if rng.gen_bool(0.3) {
                    o.stimulus.category = *Category::ALL.choose(&mut rng).unwrap();
                }
            }
        }
        // cue ambiguity may now make both fail; they must fail together
        prop_assert_eq!(eval_graph(&graph, &scene).ok(), brute_force_answer(&graph, &scene).ok());
    }

    #[test]
    fn not_same_is_negated_is_same(kind in 0usize..3, seed in any::<u64>()) {
        let mut b = GraphBuilder::new();
        let s1 = b.select(0, 1);
        let s2 = b.select(1, 2);
        let same = b.is_same(kind_of(kind), s1, s2);
        let g_same = b.clone().build(same);
        let diff = b.not_same(kind_of(kind), s1, s2);
        let g_diff = b.build(diff);
        let scene = random_scene(&g_same, seed);
        let (Answer::Bool(x), Answer::Bool(y)) = (eval_graph(&g_same, &scene).unwrap(), eval_graph(&g_diff, &scene).unwrap()) else {
            panic!("compare must yield a boolean");
        };
        prop_assert_eq!(x, !y);
    }

    #[test]
    fn switch_ignores_untaken_branch(seed in any::<u64>(), relocate in 0usize..4) {
        let mut b = GraphBuilder::new();
        let s1 = b.select(0, 1);
        let s2 = b.select(1, 2);
        let s3 = b.select(2, 3);
        let s4 = b.select(3, 4);
        let cond = b.is_same(AttributeKind::Category, s1, s2);
        let then = b.get_attr(AttributeKind::Location, s3);
        let otherwise = b.get_attr(AttributeKind::Location, s4);
        let root = b.switch(cond, then, otherwise);
        let graph = b.build(root);
        let scene = random_scene(&graph, seed);
        let answer = eval_graph(&graph, &scene).unwrap();
        let taken = scene.frames[0].objects.iter().find(|o| o.ordinal == Some(1)).unwrap().stimulus.category
            == scene.frames[1].objects.iter().find(|o| o.ordinal == Some(2)).unwrap().stimulus.category;
        let (live, dead) = if taken { (2, 3) } else { (3, 2) };
        let live_obj = scene.frames[live].objects.iter().find(|o| o.ordinal.is_some()).unwrap();
        prop_assert_eq!(answer, Answer::Loc(live_obj.location));

        // rebuild the untaken frame as a lone object at any location
        let mut other = scene.clone();
        let ord = other.frames[dead].objects.iter().find_map(|o| o.ordinal).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        other.frames[dead].objects = vec![object(&mut rng, Location::ALL[relocate], Some(ord))];
        prop_assert_eq!(eval_graph(&graph, &other).unwrap(), answer);
    }

    #[test]
    fn answers_lie_in_the_offered_space(k in 0usize..22, task_seed in any::<u64>(), trial_seed in any::<u64>()) {
        let kind = TaskKind::ALL[k];
        let t = build_trial(&TaskSource::kind(kind), 0, task_seed, trial_seed, pack()).unwrap();
        prop_assert!(t.possible.contains(t.answer));
        let graph = &t.details.as_ref().unwrap().graph;
        let exact = possible_answers(graph, AnswerSpacePolicy::Exact).unwrap();
        let full = possible_answers(graph, AnswerSpacePolicy::FullVocabulary).unwrap();
        prop_assert!(exact.contains(t.answer));
        prop_assert!(exact.is_subset(&full));
        let (ce, cf) = (chance_level(graph, AnswerSpacePolicy::Exact).unwrap(), chance_level(graph, AnswerSpacePolicy::FullVocabulary).unwrap());
        prop_assert!(cf <= ce);
        prop_assert_eq!(display_percent(chance_level(graph, kind.policy()).unwrap()), kind.nominal_chance_percent());
    }

    #[test]
    fn instruction_round_trips(choice in 0usize..37, task_seed in any::<u64>(), trial_seed in any::<u64>()) {
        let source = if choice < 22 {
            TaskSource::kind(TaskKind::ALL[choice])
        } else {
            TaskSource::AutoTask { name: "p".into(), params: params(choice - 22) }
        };
        let t = build_trial(&source, 0, task_seed, trial_seed, pack()).unwrap();
        let d = t.details.as_ref().unwrap();
        let parsed = parse_instruction(&t.instruction).unwrap();
        prop_assert_eq!(&parsed, &Instruction::from_graph(&d.graph, &d.scene).unwrap());
        prop_assert_eq!(parsed.render(), t.instruction.clone());
        prop_assert!(t.instruction.ends_with('?'));

        let mut read = vec![false; d.scene.len()];
        for id in d.graph.reachable_selects() {
            if let Some(Node::Select { frame, .. }) = d.graph.node(id) {
                read[*frame] = true;
                let needle = format!(" in frame {}", frame + 1);
                prop_assert!(t.instruction.contains(&needle), "{} lacks {}", t.instruction, needle);
            }
        }
        let delays = t.instruction.split(", ").filter(|s| *s == "delay").count();
        prop_assert_eq!(delays, read.iter().filter(|r| !**r).count());
    }

    #[test]
    fn binomial_se_peaks_at_half(p in 0.0f64..=1.0, n in 1usize..500) {
        prop_assert!(binomial_se(p, n) <= binomial_se(0.5, n) + 1e-15);
    }

    #[test]
    fn pooled_groups_use_total_counts(a in 1usize..60, b in 1usize..60, ca in 0usize..60, cb in 0usize..60) {
        let (ca, cb) = (ca.min(a), cb.min(b));
        let mut rows = Vec::new();
        rows.extend((0..a).map(|i| ("Att-Feat-R", i < ca)));
        rows.extend((0..b).map(|i| ("Att-Feat-C", i < cb)));
        let t = score::<f64, _>(rows).unwrap();
        let g = t.get("Feature Attn.").unwrap();
        prop_assert_eq!((g.correct, g.n), (ca + cb, a + b));
        prop_assert_eq!(g.p_hat, (ca + cb) as f64 / (a + b) as f64);
        let d = compare_runs(&t, &t).unwrap();
        prop_assert!(d.rows.iter().all(|r| r.delta == 0.0));
    }

    #[test]
    fn pearson_is_affine_invariant(
        xs in prop::collection::vec(0.0f64..1.0, 3..10),
        seed in any::<u64>(),
        scale in 0.01f64..100.0,
        shift in -10.0f64..10.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ys: Vec<f64> = xs.iter().map(|_| rng.gen_range(0.0..1.0)).collect();
        if let Ok(r) = pearson(&xs, &ys) {
            prop_assert!(r.r.abs() <= 1.0);
            let moved: Vec<f64> = xs.iter().map(|x| scale * x + shift).collect();
            prop_assert!((pearson(&moved, &ys).unwrap().r - r.r).abs() < 1e-9);
        }
    }
}

fn round_trip(dir: &Path, source: &TaskSource, task_seed: u64, trial_seed: u64) -> Result<(), TestCaseError> {
    let cfg = CanvasConfig { width: 32, height: 32, margin: 1, ..CanvasConfig::default() };
    let t = build_trial(source, trial_seed % 7, task_seed, trial_seed, pack()).unwrap();
    let written = write_trial(&dir.join(source.label()), &t, pack(), &cfg).unwrap();
    let stored = read_trial(&written).unwrap();
    prop_assert_eq!(stored.frames.len(), t.frame_count);
    prop_assert_eq!(stored.trial, t);
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn trials_survive_disk(k in 0usize..22, task_seed in any::<u64>(), trial_seed in any::<u64>()) {
        let dir = tempfile::tempdir().unwrap();
        round_trip(dir.path(), &TaskSource::kind(TaskKind::ALL[k]), task_seed, trial_seed)?;
    }
}
