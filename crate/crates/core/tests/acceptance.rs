//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line
//! with its measured value and runtime. Oracles here are written
//! independently of the library code paths they check.

use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use alacpd_core::cli::gradcheck_case;
use alacpd_core::data::{
    generate_synthetic, standardize, FitRange, SegmentSpec, SpikeSpec, SyntheticSpec, TimeSeries,
};
use alacpd_core::detector::{run, DetectorState, EnsembleConfig, FlagMachine};
use alacpd_core::metrics::{covering, f1_score, AnnotationSet, MatchConfig};
use alacpd_core::ndcore::{sigmoid, Matrix, ParamModel};
use alacpd_core::taenet::AscLstmCell;

fn report(criterion: &str, pass: bool, detail: String, start: Instant) {
    let status = if pass { "PASS" } else { "FAIL" };
    println!(
        "acceptance {criterion}: {status} ({detail}) [{:.2?}]",
        start.elapsed()
    );
    assert!(pass, "{criterion} failed: {detail}");
}

// ---------------------------------------------------------------------------
// 1. Gradient correctness
// ---------------------------------------------------------------------------

#[test]
fn criterion_1_gradient_correctness() {
    let start = Instant::now();
    let grid = [
        (2, 3, 1, 1),
        (2, 3, 2, 2),
        (2, 4, 1, 2),
        (4, 3, 2, 1),
        (4, 4, 1, 1),
        (4, 4, 2, 2),
    ];
    let mut worst: f64 = 0.0;
    for (i, &(hidden, window, dims, skip)) in grid.iter().enumerate() {
        let err = gradcheck_case(hidden, window, dims, skip, 9000 + i as u64).unwrap();
        worst = worst.max(err);
    }
    let within_budget = start.elapsed().as_secs() < 30;
    report(
        "1 (gradient correctness)",
        worst < 1e-4 && within_budget,
        format!("{} configs, worst relative error {worst:.3e} < 1e-4", grid.len()),
        start,
    );
}

// ---------------------------------------------------------------------------
// 2. Skip degeneracy vs a plain LSTM reference
// ---------------------------------------------------------------------------

/// Independent plain-LSTM forward pass used as the no-skip oracle.
fn plain_lstm_forward(
    weights: &[Matrix; 4],
    biases: &[Vec<f64>; 4],
    input_dim: usize,
    hidden: usize,
    inputs: &Matrix,
) -> Vec<Vec<f64>> {
    let mut h = vec![0.0; hidden];
    let mut c = vec![0.0; hidden];
    let mut out = Vec::new();
    for t in 0..inputs.rows() {
        let mut z = Vec::with_capacity(input_dim + hidden);
        z.extend_from_slice(inputs.row(t));
        z.extend_from_slice(&h);
        let act = |m: &Matrix, b: &[f64], k: usize| -> f64 {
            let mut acc = 0.0;
            for (a, zv) in m.row(k).iter().zip(&z) {
                acc += a * zv;
            }
            acc + b[k]
        };
        let mut nc = vec![0.0; hidden];
        let mut nh = vec![0.0; hidden];
        for k in 0..hidden {
            let i = sigmoid(act(&weights[0], &biases[0], k));
            let f = sigmoid(act(&weights[1], &biases[1], k));
            let g = act(&weights[2], &biases[2], k).tanh();
            let o = sigmoid(act(&weights[3], &biases[3], k));
            nc[k] = f * c[k] + i * g;
            nh[k] = nc[k].tanh() * o;
        }
        c = nc;
        h = nh.clone();
        out.push(nh);
    }
    out
}

#[test]
#[allow(clippy::needless_range_loop)]
fn criterion_2_skip_degeneracy() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut max_diff: f64 = 0.0;
    for _ in 0..20 {
        let input_dim = rng.random_range(1..4);
        let hidden = rng.random_range(2..6);
        let w = rng.random_range(3..7);
        // Skip at least the sequence length: the connection can never fire.
        let skip = w + rng.random_range(0..3);
        let cell = AscLstmCell::new(input_dim, hidden, skip, &mut rng);
        let inputs = Matrix::from_vec(
            w,
            input_dim,
            (0..w * input_dim).map(|_| rng.random_range(-2.0..2.0)).collect(),
        )
        .unwrap();
        let got = cell.forward(&inputs).unwrap();

        let mut mats: Vec<Matrix> = Vec::new();
        let mut biases: Vec<Vec<f64>> = Vec::new();
        cell.for_each_param(&mut |name, p| match name {
            "w_input" | "w_forget" | "w_cell" | "w_output" => mats.push(p.value.clone()),
            "b_input" | "b_forget" | "b_cell" | "b_output" => {
                biases.push(p.value.data().to_vec())
            }
            _ => {}
        });
        let weights = [mats[0].clone(), mats[1].clone(), mats[2].clone(), mats[3].clone()];
        let bias_arr = [biases[0].clone(), biases[1].clone(), biases[2].clone(), biases[3].clone()];
        let oracle = plain_lstm_forward(&weights, &bias_arr, input_dim, hidden, &inputs);
        for t in 0..w {
            for k in 0..hidden {
                max_diff = max_diff.max((got.hidden(t)[k] - oracle[t][k]).abs());
            }
        }
    }
    let within_budget = start.elapsed().as_secs() < 1;
    report(
        "2 (skip degeneracy)",
        max_diff < 1e-10 && within_budget,
        format!("max |difference| vs plain LSTM = {max_diff:.3e} < 1e-10"),
        start,
    );
}

// ---------------------------------------------------------------------------
// 3. Metric oracle equivalence
// ---------------------------------------------------------------------------

fn covering_oracle(predicted: &[usize], annotators: &[Vec<usize>], n: usize) -> f64 {
    use std::collections::{BTreeSet, HashSet};
    let to_sets = |indices: &[usize]| -> Vec<HashSet<usize>> {
        let mut bounds: Vec<usize> = indices
            .iter()
            .copied()
            .filter(|&i| i > 0 && i < n)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        bounds.push(n);
        let mut sets = Vec::new();
        let mut s = 0;
        for &b in &bounds {
            sets.push((s..b).collect());
            s = b;
        }
        sets
    };
    let pred = to_sets(predicted);
    let mut total = 0.0;
    for gt in annotators {
        let mut score = 0.0;
        for a in to_sets(gt) {
            let mut best: f64 = 0.0;
            for p in &pred {
                let inter = a.intersection(p).count() as f64;
                let union = a.union(p).count() as f64;
                best = best.max(inter / union);
            }
            score += a.len() as f64 * best;
        }
        total += score / n as f64;
    }
    total / annotators.len() as f64
}

fn max_matching(truth: &[usize], predicted: &[usize], margin: usize) -> usize {
    fn go(truth: &[usize], used: &mut Vec<bool>, margin: usize, gi: usize, pred: &[usize]) -> usize {
        if gi == truth.len() {
            return 0;
        }
        let mut best = go(truth, used, margin, gi + 1, pred);
        for (pi, &p) in pred.iter().enumerate() {
            if !used[pi] && truth[gi].abs_diff(p) <= margin {
                used[pi] = true;
                best = best.max(1 + go(truth, used, margin, gi + 1, pred));
                used[pi] = false;
            }
        }
        best
    }
    let mut used = vec![false; predicted.len()];
    go(truth, &mut used, margin, 0, predicted)
}

fn spread_points(rng: &mut ChaCha8Rng, count: usize, gap: usize, n: usize) -> Vec<usize> {
    use std::collections::BTreeSet;
    let mut points = BTreeSet::new();
    let mut guard = 0;
    while points.len() < count && guard < 300 {
        let p = rng.random_range(1..n);
        if points.iter().all(|&q: &usize| q.abs_diff(p) > gap) {
            points.insert(p);
        }
        guard += 1;
    }
    points.into_iter().collect()
}

#[test]
fn criterion_3_metric_oracle_equivalence() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut max_cov_err: f64 = 0.0;
    let mut f1_exact = true;

    // Exhaustive-matching F1 oracle on one instance; greedy equals maximum
    // matching because the generated point sets are margin-separated.
    let check_f1 = |rng: &mut ChaCha8Rng, n: usize, margin: usize| -> bool {
        let gap = 2 * margin + 1;
        let pred_count = rng.random_range(0..4);
        let fpred = spread_points(rng, pred_count, gap, n);
        let fann: Vec<Vec<usize>> = (0..rng.random_range(1..=3))
            .map(|_| {
                let count = rng.random_range(0..4);
                spread_points(rng, count, gap, n)
            })
            .collect();
        let truth = AnnotationSet::new(fann.clone()).unwrap();
        let cfg = MatchConfig { margin, include_trivial_start: false };
        let got = f1_score(&fpred, &truth, &cfg).unwrap();

        let union: Vec<usize> = truth.union();
        let (precision, degenerate) = if fpred.is_empty() {
            (0.0, true)
        } else {
            (max_matching(&union, &fpred, margin) as f64 / fpred.len() as f64, false)
        };
        let mut recall = 0.0;
        for g in &fann {
            recall += if g.is_empty() {
                1.0
            } else {
                max_matching(g, &fpred, margin) as f64 / g.len() as f64
            };
        }
        recall /= fann.len() as f64;
        let f1 = if degenerate || precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        got.precision == precision
            && got.recall == recall
            && (degenerate || got.f1 == f1)
            && got.degenerate == degenerate
    };

    for _ in 0..200 {
        // Covering on unconstrained random instances with n <= 20.
        let n = rng.random_range(2..=20);
        let pred: Vec<usize> =
            (0..rng.random_range(0..4)).map(|_| rng.random_range(0..n)).collect();
        let annotators: Vec<Vec<usize>> = (0..rng.random_range(1..=3))
            .map(|_| (0..rng.random_range(0..4)).map(|_| rng.random_range(0..n)).collect())
            .collect();
        let truth = AnnotationSet::new(annotators.clone()).unwrap();
        let got = covering(&pred, &truth, n).unwrap();
        let want = covering_oracle(&pred, &annotators, n);
        max_cov_err = max_cov_err.max((got - want).abs());

        // F1 at the same scale; the margin separation caps how many points
        // fit in 20 indices, so larger instances are checked below as well.
        let margin = rng.random_range(0..=5usize);
        f1_exact &= check_f1(&mut rng, 20, margin);
    }
    // Denser instances beyond the required 200: more points per set.
    for _ in 0..100 {
        let margin = rng.random_range(0..=5usize);
        f1_exact &= check_f1(&mut rng, 200, margin);
    }
    let within_budget = start.elapsed().as_secs() < 10;
    report(
        "3 (metric oracle equivalence)",
        max_cov_err < 1e-12 && f1_exact && within_budget,
        format!("200 + 100 instances: covering max err {max_cov_err:.2e}, F1 exact = {f1_exact}"),
        start,
    );
}

// ---------------------------------------------------------------------------
// 4. Hand-checkable metric values
// ---------------------------------------------------------------------------

#[test]
fn criterion_4_hand_metric_values() {
    let start = Instant::now();
    let truth = AnnotationSet::single(vec![5]).unwrap();
    let cov = covering(&[], &truth, 10).unwrap();

    let truth = AnnotationSet::single(vec![10, 20]).unwrap();
    let cfg = MatchConfig { margin: 5, include_trivial_start: false };
    let f = f1_score(&[11], &truth, &cfg).unwrap();

    let pass = cov == 0.5 && (f.f1 - 2.0 / 3.0).abs() < 1e-15;
    report(
        "4 (hand-checkable metric values)",
        pass,
        format!("covering {cov} (want 0.5), F1 {:.6} (want 2/3)", f.f1),
        start,
    );
}

// ---------------------------------------------------------------------------
// 5. Synthetic end-to-end detection
// ---------------------------------------------------------------------------

/// The end-to-end fixture: three 300-sample segments with 5-sigma mean
/// shifts, AR(1) noise coefficient 0.5, three dimensions (the benchmark
/// datasets are all multivariate), standardized over the full series as the
/// benchmark protocol does.
fn shift_fixture() -> (TimeSeries, Vec<usize>) {
    let dims = 3;
    let spec = SyntheticSpec {
        name: "shift3".into(),
        dims,
        segments: vec![
            SegmentSpec { len: 300, means: vec![0.0; dims], std: 1.0, ar1: 0.5 },
            SegmentSpec { len: 300, means: vec![5.0; dims], std: 1.0, ar1: 0.5 },
            SegmentSpec { len: 300, means: vec![10.0; dims], std: 1.0, ar1: 0.5 },
        ],
        spikes: vec![],
        seed: 42,
    };
    let (series, truth) = generate_synthetic(&spec).unwrap();
    let (standardized, _) = standardize(&series, FitRange::Full).unwrap();
    (standardized, truth)
}

#[test]
fn criterion_5_synthetic_end_to_end() {
    let start = Instant::now();
    let (series, truth) = shift_fixture();
    let n_init = series.len() / 10;
    let cfg = EnsembleConfig::published_defaults(n_init);
    let margin = 10usize;

    let outcomes: Vec<(bool, usize)> = (0..10u64)
        .into_par_iter()
        .map(|seed| {
            let reportv = run(&series, &cfg, seed, false).unwrap();
            let all_hit = truth
                .iter()
                .all(|&cp| reportv.change_points.iter().any(|&p| p.abs_diff(cp) <= margin));
            let fps = reportv
                .change_points
                .iter()
                .filter(|&&p| truth.iter().all(|&cp| p.abs_diff(cp) > margin))
                .count();
            (all_hit, fps)
        })
        .collect();

    let good = outcomes.iter().filter(|(hit, fp)| *hit && *fp <= 1).count();
    let within_budget = start.elapsed().as_secs() < 300;
    report(
        "5 (synthetic end-to-end detection)",
        good >= 8 && within_budget,
        format!("{good}/10 seeds detected both change-points within 10 with <=1 false positive"),
        start,
    );
}

// ---------------------------------------------------------------------------
// 6. Anomaly robustness
// ---------------------------------------------------------------------------

#[test]
fn criterion_6_anomaly_robustness() {
    let start = Instant::now();
    // Stationary stream at a non-zero level with small noise: the local
    // regime of a standardized real series. Spikes land on all dimensions in
    // runs of one and two samples, all shorter than n_cpd = 3.
    let dims = 3;
    let noise = 0.25;
    let spec = SyntheticSpec {
        name: "spiky".into(),
        dims,
        segments: vec![SegmentSpec {
            len: 900,
            means: vec![2.0; dims],
            std: noise,
            ar1: 0.5,
        }],
        spikes: vec![
            SpikeSpec { index: 200, magnitude: 3.0 * noise },
            SpikeSpec { index: 450, magnitude: -3.0 * noise },
            SpikeSpec { index: 650, magnitude: 2.2 * noise },
            SpikeSpec { index: 651, magnitude: 2.2 * noise },
        ],
        seed: 42,
    };
    let (series, truth) = generate_synthetic(&spec).unwrap();
    assert!(truth.is_empty());
    let n_init = series.len() / 10;
    let cfg = EnsembleConfig::published_defaults(n_init);

    let cp_counts: Vec<usize> = (0..10u64)
        .into_par_iter()
        .map(|seed| run(&series, &cfg, seed, false).unwrap().change_points.len())
        .collect();
    let clean = cp_counts.iter().filter(|&&c| c == 0).count();
    let within_budget = start.elapsed().as_secs() < 120;
    report(
        "6 (anomaly robustness)",
        clean == 10 && within_budget,
        format!("{clean}/10 seeds reported zero change-points under spikes (counts {cp_counts:?})"),
        start,
    );
}

// ---------------------------------------------------------------------------
// 7. Delay bound
// ---------------------------------------------------------------------------

#[test]
fn criterion_7_delay_bound() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut checked = 0usize;
    let mut exact = true;
    for _ in 0..50 {
        let n_cpd = rng.random_range(1..6);
        let mut machine = FlagMachine::new(n_cpd);
        let density = rng.random_range(0.05..0.9);
        for t in n_cpd..500 {
            let out = rng.random_range(0.0..1.0) < density;
            if let Some(cp) = machine.advance(t, out) {
                checked += 1;
                if cp + n_cpd != t {
                    exact = false;
                }
            }
        }
    }
    let within_budget = start.elapsed().as_secs() < 1;
    report(
        "7 (delay bound)",
        exact && checked > 0 && within_budget,
        format!("{checked} emissions over 50 random flag sequences, all exactly n_cpd after the reported index"),
        start,
    );
}

// ---------------------------------------------------------------------------
// 8. Memory-free contract
// ---------------------------------------------------------------------------

#[test]
fn criterion_8_memory_free_contract() {
    let start = Instant::now();
    // 10,000 samples with several genuine changes to exercise the buffer and
    // retraining paths.
    let spec = SyntheticSpec {
        name: "long".into(),
        dims: 1,
        segments: (0..10)
            .map(|k| SegmentSpec {
                len: 1000,
                means: vec![4.0 * k as f64],
                std: 1.0,
                ar1: 0.5,
            })
            .collect(),
        spikes: vec![],
        seed: 11,
    };
    let (series, _) = generate_synthetic(&spec).unwrap();
    let (series, _) = standardize(&series, FitRange::Full).unwrap();
    let n = series.len();
    assert_eq!(n, 10_000);
    let n_init = n / 10;
    let cfg = EnsembleConfig::published_defaults(n_init);
    let d = series.dims();
    let prefix = Matrix::from_vec(n_init, d, series.values().data()[..n_init * d].to_vec()).unwrap();
    let mut state = DetectorState::initialize(&prefix, &cfg, 0).unwrap();
    let mut peak = 0usize;
    for t in n_init..n {
        state.step(series.row(t)).unwrap();
        peak = peak.max(state.max_retained_windows());
    }
    let bound = cfg.n_cpd.max(n_init);
    let ring_ok = state.ring_capacity() == cfg.n_cpd + 2 * cfg.window + cfg.horizon;
    let within_budget = start.elapsed().as_secs() < 300;
    report(
        "8 (memory-free contract)",
        peak <= bound && ring_ok && within_budget,
        format!(
            "peak retained windows {peak} <= max(n_cpd, n_init) = {bound}; ring fixed at {} samples; {} change-points over 10k steps",
            state.ring_capacity(),
            state.change_points().len()
        ),
        start,
    );
}

// ---------------------------------------------------------------------------
// 9. Published-benchmark reproduction (soft, informational)
// ---------------------------------------------------------------------------

#[test]
fn criterion_9_benchmark_reproduction() {
    let start = Instant::now();
    // Requires the public benchmark files; point ALACPD_DATA_DIR at a
    // directory containing run_log.json / apple.json and matching
    // annotations run_log.annotations.json / apple.annotations.json.
    let dir = match std::env::var("ALACPD_DATA_DIR") {
        Ok(dir) => std::path::PathBuf::from(dir),
        Err(_) => {
            println!(
                "acceptance 9 (benchmark reproduction): SKIP (benchmark files not present; set ALACPD_DATA_DIR) [{:.2?}]",
                start.elapsed()
            );
            return;
        }
    };
    let mut lines = Vec::new();
    let mut soft_pass = true;
    for (name, check) in [("run_log", "covering>=0.60"), ("apple", "f1 in 0.761+-0.15")] {
        let data = dir.join(format!("{name}.json"));
        let ann = dir.join(format!("{name}.annotations.json"));
        if !data.exists() || !ann.exists() {
            lines.push(format!("{name}: files missing, skipped"));
            continue;
        }
        let series = alacpd_core::data::load_benchmark_json(&data, true).unwrap();
        let (input, _) = standardize(&series, FitRange::Full).unwrap();
        let n_init = input.len() / 10;
        let cfg = EnsembleConfig::published_defaults(n_init);
        let file = alacpd_core::metrics::AnnotationFile::load(&ann).unwrap();
        let truth = file.annotation_set().unwrap();
        let scores: Vec<(f64, f64)> = (0..10u64)
            .into_par_iter()
            .map(|seed| {
                let r = run(&input, &cfg, seed, false).unwrap();
                let c = covering(&r.change_points, &truth, file.n).unwrap();
                let f = f1_score(&r.change_points, &truth, &MatchConfig::default()).unwrap();
                (c, f.f1)
            })
            .collect();
        let mean_cov = scores.iter().map(|s| s.0).sum::<f64>() / scores.len() as f64;
        let mean_f1 = scores.iter().map(|s| s.1).sum::<f64>() / scores.len() as f64;
        let ok = match name {
            "run_log" => mean_cov >= 0.60,
            _ => (mean_f1 - 0.761).abs() <= 0.15,
        };
        soft_pass &= ok;
        lines.push(format!(
            "{name}: mean covering {mean_cov:.3}, mean F1 {mean_f1:.3} ({check}: {})",
            if ok { "ok" } else { "below" }
        ));
    }
    // Informational: a miss here alone does not fail the build.
    println!(
        "acceptance 9 (benchmark reproduction): {} ({}) [{:.2?}]",
        if soft_pass { "PASS" } else { "SOFT-FAIL (informational)" },
        lines.join("; "),
        start.elapsed()
    );
}

// ---------------------------------------------------------------------------
// 10. Ablation direction
// ---------------------------------------------------------------------------

#[test]
fn criterion_10_ablation_direction() {
    let start = Instant::now();
    let (series, truth) = shift_fixture();
    let n_init = series.len() / 10;
    let annotations = AnnotationSet::single(truth).unwrap();

    let mean_covering = |use_ae: bool, use_ar: bool| -> f64 {
        let mut cfg = EnsembleConfig::published_defaults(n_init);
        cfg.use_ae = use_ae;
        cfg.use_ar = use_ar;
        let scores: Vec<f64> = (0..10u64)
            .into_par_iter()
            .map(|seed| {
                let r = run(&series, &cfg, seed, false).unwrap();
                covering(&r.change_points, &annotations, series.len()).unwrap()
            })
            .collect();
        scores.iter().sum::<f64>() / scores.len() as f64
    };

    let full = mean_covering(true, true);
    let no_ar = mean_covering(true, false);
    let no_ae = mean_covering(false, true);
    let pass = full >= no_ar - 0.05 && full >= no_ae - 0.05;
    let within_budget = start.elapsed().as_secs() < 600;
    report(
        "10 (ablation direction)",
        pass && within_budget,
        format!("mean covering: full {full:.3}, no_ar {no_ar:.3}, no_ae {no_ae:.3}"),
        start,
    );
}
