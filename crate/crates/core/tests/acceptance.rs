//! Acceptance suite. Each test covers one criterion and prints a single
//! `criterion N ... PASS|FAIL` line (run with `--nocapture` to see them).

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use alamp::acquisition::{
    alamp_score, coreset_select, diversify, margin, PseudoClassMap, ScoredPool,
};
use alamp::classifier::{self, loss};
use alamp::dataset::{imbalance_ratio_from_moments, IMBALANCE_TOLERANCE};
use alamp::engine::derive_seed;
use alamp::metrics::{aggregate, gain_table, gain_table_to_csv, report_to_json};
use alamp::{
    alamp_scores, imbalance_ratio, induce_imbalance, init_pool, make_synthetic, run_experiment,
    step, BudgetPlan, Dataset, Direction, Report, RunOptions, Strategy,
};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

fn verdict(id: &str, name: &str, ok: bool, detail: &str) {
    println!(
        "criterion {id:<3} {name:<34} {}  {detail}",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "criterion {id} ({name}) failed: {detail}");
}

#[test]
fn criterion_1_formula_fidelity() {
    let start = Instant::now();
    let tol = 1e-12;
    let m = margin(&[0.6, 0.3, 0.1]);
    let a = alamp_score(0.8, 0.2);
    let eq = alamp_score(0.37, 0.37);
    let prev = ScoredPool::new(vec![0, 1], vec![0.4, 0.8], Direction::Ascending).unwrap();
    let curr = ScoredPool::new(vec![0, 1], vec![0.2, 0.6], Direction::Ascending).unwrap();
    let ranked = alamp_scores(&prev, &curr).unwrap();
    let ok = (m - 0.3).abs() <= tol
        && (a - 0.6).abs() <= tol
        && eq.abs() <= tol
        && (ranked.scores()[0] - 1.0 / 3.0).abs() <= tol
        && (ranked.scores()[1] - 1.0 / 7.0).abs() <= tol
        && ranked.order() == [0, 1]
        && start.elapsed() < Duration::from_secs(1);
    verdict(
        "1",
        "formula fidelity",
        ok,
        &format!(
            "margin={m} alamp={a} equal={eq} order={:?} ({:.2?})",
            ranked.order(),
            start.elapsed()
        ),
    );
}

/// Exhaustive argmax over unlabeled of the min Euclidean distance to labeled.
fn coreset_oracle(x: &Array2<f64>, labeled: &[usize], unlabeled: &[usize]) -> usize {
    let mut best: Option<(usize, f64)> = None;
    let mut sorted = unlabeled.to_vec();
    sorted.sort_unstable();
    for &u in &sorted {
        let nearest = labeled
            .iter()
            .map(|&l| {
                (0..x.ncols())
                    .map(|j| (x[[u, j]] - x[[l, j]]).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(f64::INFINITY, f64::min);
        if best.is_none_or(|(_, d)| nearest > d) {
            best = Some((u, nearest));
        }
    }
    best.unwrap().0
}

/// Straight transcription of the pass-based diversification loop.
fn diversify_trace(ordered: &[usize], top: &[(usize, usize)], batch: usize) -> Vec<usize> {
    let class_of = |id: usize| top.iter().find(|(i, _)| *i == id).unwrap().1;
    let mut picked: Vec<usize> = Vec::new();
    while picked.len() < batch {
        let mut seen: Vec<usize> = Vec::new();
        for &i in ordered {
            let c = class_of(i);
            if !seen.contains(&c) && !picked.contains(&i) {
                picked.push(i);
                seen.push(c);
            }
        }
    }
    picked.truncate(batch);
    picked
}

#[test]
fn criterion_2_oracle_equivalences() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut agree = 0;
    for _ in 0..100 {
        let n_l = rng.random_range(1..=50);
        let n_u = rng.random_range(1..=200);
        let dim = rng.random_range(1..=16);
        let n = n_l + n_u;
        let x = Array2::from_shape_simple_fn((n, dim), || rng.random_range(-3.0..3.0));
        let mut ids: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            ids.swap(i, rng.random_range(0..=i));
        }
        let (labeled, unlabeled) = ids.split_at(n_l);
        let row_ids: Vec<usize> = (0..n).collect();
        let got = coreset_select(x.view(), &row_ids, labeled, unlabeled, 1).unwrap();
        if got == [coreset_oracle(&x, labeled, unlabeled)] {
            agree += 1;
        }
    }
    let coreset_time = start.elapsed();

    // Hand-simulated traces; classes are listed per id.
    // (ranked ids, class of id i, batch, expected)
    type Fixture = (Vec<usize>, Vec<usize>, usize, Vec<usize>);
    let fixtures: Vec<Fixture> = vec![
        (vec![0, 1, 2, 3], vec![0, 0, 1, 1], 2, vec![0, 2]),
        (vec![0, 1, 2, 3, 4], vec![7; 5], 3, vec![0, 1, 2]),
        (vec![0, 1, 2, 3], vec![0, 0, 1, 1], 4, vec![0, 2, 1, 3]),
        (vec![3, 0, 2, 1], vec![0, 1, 0, 2], 3, vec![3, 0, 1]),
        (
            vec![0, 1, 2, 3, 4, 5],
            vec![0, 0, 0, 1, 2, 2],
            4,
            vec![0, 3, 4, 1],
        ),
        (
            vec![0, 1, 2, 3, 4, 5],
            vec![0, 0, 0, 1, 2, 2],
            6,
            vec![0, 3, 4, 1, 5, 2],
        ),
        (
            vec![5, 4, 3, 2, 1, 0],
            vec![1, 1, 0, 0, 1, 0],
            5,
            vec![5, 4, 3, 1, 2],
        ),
        (vec![0, 1, 2], vec![0, 1, 2], 1, vec![0]),
        (
            vec![0, 1, 2, 3, 4, 5, 6],
            vec![0, 0, 0, 0, 0, 1, 1],
            5,
            vec![0, 5, 1, 6, 2],
        ),
        (vec![2, 0, 1], vec![0, 0, 0], 0, vec![]),
    ];
    let mut traces_ok = 0;
    for (ordered, classes, batch, expected) in &fixtures {
        let top: Vec<(usize, usize)> = classes.iter().copied().enumerate().collect();
        let pseudo: PseudoClassMap = top.iter().copied().collect();
        let got = diversify(ordered, &pseudo, *batch).unwrap();
        let traced = diversify_trace(ordered, &top, *batch);
        if &got == expected && &traced == expected {
            traces_ok += 1;
        }
    }
    verdict(
        "2",
        "oracle equivalences",
        agree == 100 && traces_ok == fixtures.len() && coreset_time < Duration::from_secs(10),
        &format!(
            "coreset {agree}/100 ({coreset_time:.2?}), diversify traces {traces_ok}/{}",
            fixtures.len()
        ),
    );
}

#[test]
fn criterion_3_numerical_soundness() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let x = Array2::from_shape_simple_fn((5, 3), || rng.random_range(-2.0..2.0));
        let signs: Vec<f64> = (0..5)
            .map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 })
            .collect();
        let weights: Vec<f64> = (0..5).map(|_| rng.random_range(0.2..3.0)).collect();
        let w = Array1::from_shape_simple_fn(3, || rng.random_range(-1.0..1.0));
        let b = rng.random_range(-0.5..0.5);
        let reg = rng.random_range(1e-3..2.0);
        let f =
            |w: &Array1<f64>, b: f64| loss::objective(x.view(), &signs, &weights, w.view(), b, reg);

        let (gw, gb) = loss::gradient(x.view(), &signs, &weights, w.view(), b, reg);
        let mut analytic: Vec<f64> = gw.to_vec();
        analytic.push(gb);
        let mut numeric = Vec::new();
        for j in 0..3 {
            let (mut up, mut down) = (w.clone(), w.clone());
            up[j] += h;
            down[j] -= h;
            numeric.push((f(&up, b) - f(&down, b)) / (2.0 * h));
        }
        numeric.push((f(&w, b + h) - f(&w, b - h)) / (2.0 * h));
        let diff: f64 = analytic
            .iter()
            .zip(&numeric)
            .map(|(a, n)| (a - n).powi(2))
            .sum::<f64>()
            .sqrt();
        let scale = analytic
            .iter()
            .map(|a| a * a)
            .sum::<f64>()
            .sqrt()
            .max(numeric.iter().map(|a| a * a).sum::<f64>().sqrt())
            .max(1e-12);
        worst = worst.max(diff / scale);
    }

    let data = make_synthetic(6, 30, 5, 0.8, 3).unwrap();
    let model = classifier::train(data.features(), data.labels(), 6, &[1.0; 6], 0.1).unwrap();
    let points = Array2::from_shape_simple_fn((10_000, 5), || rng.random_range(-4.0..4.0));
    let probs = model
        .predict_proba(points.view(), (0..10_000).collect())
        .unwrap();
    let predicted = model.predict(points.view()).unwrap();
    let mut max_dev: f64 = 0.0;
    let mut agree = 0;
    for ((_, row), &p) in probs.rows().zip(&predicted) {
        max_dev = max_dev.max((row.sum() - 1.0).abs());
        let mut best = 0;
        for c in 1..row.len() {
            if row[c] > row[best] {
                best = c;
            }
        }
        if best == p {
            agree += 1;
        }
    }
    verdict(
        "3",
        "numerical soundness",
        worst <= 1e-5 && max_dev <= 1e-6 && agree == 10_000,
        &format!("grad rel err {worst:.2e}, row-sum dev {max_dev:.2e}, argmax agree {agree}/10000"),
    );
}

#[test]
fn criterion_4_protocol_invariants() {
    let full = make_synthetic(4, 1100, 8, 1.0, 4).unwrap();
    let (train, test) = full.split_stratified(0.1, 4).unwrap();
    let plan = BudgetPlan::new(3200, 16).unwrap();
    let opts = RunOptions::default();
    let seed = 11;

    let (mut state, mut model) = init_pool(&train, plan, seed, &opts).unwrap();
    let universe: BTreeSet<usize> = train.sample_ids().iter().copied().collect();
    let mut ever_labeled: BTreeSet<usize> = state.labeled().clone();
    let mut sizes = vec![state.labeled().len()];
    let mut conserved = true;
    let mut no_relabel = true;
    let mut prev_superset = true;
    for k in 1..plan.iterations() {
        let out = step(
            state,
            &model,
            Strategy::Alamp,
            &train,
            derive_seed(seed, k as u64),
            &opts,
        )
        .unwrap();
        state = out.state;
        model = out.model;
        let union: BTreeSet<usize> = state.labeled().union(state.unlabeled()).copied().collect();
        conserved &= union == universe && state.labeled().is_disjoint(state.unlabeled());
        for id in &out.selected {
            no_relabel &= ever_labeled.insert(*id);
        }
        let prev: BTreeSet<usize> = state
            .prev_probs()
            .unwrap()
            .sample_ids()
            .iter()
            .copied()
            .collect();
        prev_superset &= state.unlabeled().is_subset(&prev);
        sizes.push(state.labeled().len());
    }
    let expected: Vec<usize> = (1..=16).map(|k| 200 * k).collect();

    let alamp = run_experiment(&train, &test, Strategy::Alamp, plan, seed, &opts).unwrap();
    let margin = run_experiment(&train, &test, Strategy::Margin, plan, seed, &opts).unwrap();
    let labeled: Vec<usize> = alamp.records.iter().map(|r| r.labeled).collect();
    let first_equal = alamp.records[1].selected == margin.records[1].selected;
    let shared_init = alamp.records[0] == margin.records[0];

    verdict(
        "4",
        "protocol invariants",
        sizes == expected
            && alamp.records.len() == 16
            && labeled == expected
            && conserved
            && no_relabel
            && prev_superset
            && first_equal
            && shared_init,
        &format!(
            "records={} conserved={conserved} no_relabel={no_relabel} prev_superset={prev_superset} first_selection_equal={first_equal}",
            alamp.records.len()
        ),
    );
}

fn run_in_pool(
    threads: usize,
    train: &Dataset,
    test: &Dataset,
    af: Strategy,
    plan: BudgetPlan,
) -> String {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap();
    pool.install(|| {
        let r = run_experiment(train, test, af, plan, 5, &RunOptions::default()).unwrap();
        report_to_json(&r).unwrap()
    })
}

#[test]
fn criterion_5_determinism() {
    let full = make_synthetic(5, 80, 8, 1.2, 5).unwrap();
    let (train, test) = full.split_stratified(0.25, 5).unwrap();
    let plan = BudgetPlan::new(120, 4).unwrap();
    let mut identical = 0;
    for af in Strategy::ALL {
        let a = run_in_pool(1, &train, &test, af, plan);
        let b = run_in_pool(1, &train, &test, af, plan);
        let c = run_in_pool(4, &train, &test, af, plan);
        if a == b && a == c {
            identical += 1;
        }
    }
    verdict(
        "5",
        "determinism",
        identical == Strategy::ALL.len(),
        &format!(
            "{identical}/{} strategies byte-identical across repeats and 1/4 threads",
            Strategy::ALL.len()
        ),
    );
}

#[test]
fn criterion_6_imbalance_tooling() {
    let mut details = Vec::new();
    let mut ok = true;
    for (classes, per_class, target) in [(100, 500, 0.740), (101, 750, 0.793)] {
        let balanced = make_synthetic(classes, per_class, 1, 1.0, 6).unwrap();
        let out = induce_imbalance(&balanced, target, 1, 6).unwrap();
        let ir = imbalance_ratio(&out.class_counts()).unwrap();
        ok &= (ir - target).abs() <= IMBALANCE_TOLERANCE;
        details.push(format!("{classes}x{per_class}: target {target} -> {ir:.4}"));
    }
    let food = imbalance_ratio_from_moments(227.28, 180.31).unwrap();
    ok &= (food - 0.793).abs() <= 1e-3;
    details.push(format!("moments ir {food:.4}"));
    verdict("6", "imbalance tooling", ok, &details.join(", "));
}

/// Synthetic stand-in for pretrained embeddings: 20 classes, 64 dims,
/// 200 training samples per class plus 50 held out per class.
const DESK_CLASSES: usize = 20;
const DESK_DIM: usize = 64;
const DESK_STD: f64 = 1.5;
const DESK_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

fn runs(
    train: &Dataset,
    test: &Dataset,
    afs: &[Strategy],
    plan: BudgetPlan,
) -> Vec<(Strategy, Vec<Report>)> {
    let jobs: Vec<(Strategy, u64)> = afs
        .iter()
        .flat_map(|&af| DESK_SEEDS.iter().map(move |&s| (af, s)))
        .collect();
    let opts = RunOptions {
        dataset_name: "desk".into(),
        ..RunOptions::default()
    };
    let reports: Vec<Report> = jobs
        .par_iter()
        .map(|&(af, s)| run_experiment(train, test, af, plan, s, &opts).unwrap())
        .collect();
    afs.iter()
        .copied()
        .zip(reports.chunks(DESK_SEEDS.len()).map(<[Report]>::to_vec))
        .collect()
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = v.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
fn criterion_7_desk_scale_behavior() {
    let start = Instant::now();
    let full = make_synthetic(DESK_CLASSES, 250, DESK_DIM, DESK_STD, 42).unwrap();
    let (train, test) = full.split_stratified(0.2, 42).unwrap();
    let plan = BudgetPlan::new(600, 6).unwrap();

    let balanced = runs(&train, &test, &Strategy::ALL, plan);
    let aggregates: Vec<_> = balanced
        .iter()
        .map(|(_, r)| aggregate(r).unwrap())
        .collect();
    println!(
        "desk-scale comparison (balanced):\n{}",
        gain_table_to_csv(&gain_table(&aggregates))
    );

    let acc0 = aggregates[0].records[0].acc.mean;
    let window = (0.3..=0.6).contains(&acc0);
    let mut improved = Vec::new();
    for (af, reports) in &balanced {
        let first = mean(reports.iter().map(|r| r.records[0].acc));
        let last = mean(reports.iter().map(|r| r.final_record().unwrap().acc));
        improved.push((*af, first, last));
    }
    let all_improve = improved.iter().all(|&(_, f, l)| l > f);
    let avg_of = |af: Strategy| {
        aggregates
            .iter()
            .find(|a| a.af == af)
            .unwrap()
            .average_accuracy
            .mean
    };
    let random = avg_of(Strategy::Random);
    let margin_gap = 100.0 * (avg_of(Strategy::Margin) - random);
    let alamp_gap = 100.0 * (avg_of(Strategy::Alamp) - random);
    let ranked_ok = margin_gap >= -0.5 && alamp_gap >= -0.5;

    let imbalanced_train = induce_imbalance(&train, 0.74, 5, 42).unwrap();
    let ir_train = imbalance_ratio(&imbalanced_train.class_counts()).unwrap();
    let imbalanced = runs(
        &imbalanced_train,
        &test,
        &[Strategy::Random, Strategy::AlampDiv],
        plan,
    );
    let final_ir = |i: usize| mean(imbalanced[i].1.iter().map(|r| r.final_record().unwrap().ir));
    let (random_ir, div_ir) = (final_ir(0), final_ir(1));
    let imbalance_ok = div_ir <= random_ir;

    let elapsed = start.elapsed();
    println!("per-strategy iteration-0 -> final accuracy: {improved:.3?}");
    verdict(
        "7a",
        "accuracy grows for every strategy",
        window && all_improve,
        &format!("iteration-0 accuracy {acc0:.3} (window [0.3, 0.6])"),
    );
    verdict(
        "7b",
        "margin/alamp vs random",
        ranked_ok,
        &format!("gaps in points: margin {margin_gap:+.2}, alamp {alamp_gap:+.2} (floor -0.50)"),
    );
    verdict(
        "7c",
        "labeled-pool imbalance",
        imbalance_ok,
        &format!("train ir {ir_train:.3}; final labeled ir alamp-div {div_ir:.3} vs random {random_ir:.3}"),
    );
    verdict(
        "7t",
        "runtime budget",
        elapsed < Duration::from_secs(300),
        &format!("{elapsed:.1?} (< 300s)"),
    );
}

#[test]
#[ignore = "needs user-supplied pretrained embeddings; set ALAMP_CIFAR100_TRAIN/TEST"]
fn criterion_8_real_embeddings_ordering() {
    let train = alamp::load_dataset(std::env::var("ALAMP_CIFAR100_TRAIN").unwrap()).unwrap();
    let test = alamp::load_dataset(std::env::var("ALAMP_CIFAR100_TEST").unwrap()).unwrap();
    let plan = BudgetPlan::new(3200, 16).unwrap();
    let afs = [
        Strategy::AlampDiv,
        Strategy::Alamp,
        Strategy::Margin,
        Strategy::Random,
    ];
    let avg: Vec<f64> = runs(&train, &test, &afs, plan)
        .iter()
        .map(|(_, r)| aggregate(r).unwrap().average_accuracy.mean)
        .collect();
    verdict(
        "8",
        "ordering on real embeddings",
        avg.windows(2).all(|w| w[0] >= w[1]),
        &format!("alamp-div, alamp, margin, random: {avg:.4?}"),
    );
}
