//! Acceptance suite: one test per criterion, each printing a pass/fail line.
//! Run with `cargo test -p qd-core --test acceptance -- --nocapture` to see
//! the per-criterion lines and measured values.

use std::collections::HashMap;
use std::path::PathBuf;

use qd_core::archive::{Archive, GridSpec};
use qd_core::envs::{Evaluator, GaitPoint, LinearProjectionSphere};
use qd_core::es_grad::{es_gradients, rank_normalize, EsConfig};
use qd_core::harness::{
    emit_heatmap_csv, emit_heatmap_svg, emit_histogram, mean_elite_robustness, parse_config,
    plan, qd_score_auc, run_experiment, MetricsRow,
};
use qd_core::nn::{Activation, MlpSpec};
use qd_core::rng::{streams, RngStream};
use qd_core::td3::{polyak, Td3Config, Td3State};
use qd_core::vecmath::cosine_similarity;
use qd_core::SolutionVector;

/// Final QD score of the exact-gradient run (lp_sphere n=20, 32x32 grid,
/// budget 100,000, seed 1, min objective -100,000), frozen from the first
/// correct build's deterministic run.
const EXACT_DQD_REFERENCE_QD_SCORE: f64 = 102231957.99024947;

fn out_dir(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn sphere_config(algorithm: &str, budget: u64, seed: u64, extra: &str) -> String {
    format!(
        "env.id = lp_sphere\nenv.solution_dim = 20\nalgorithm.id = {algorithm}\nrun.budget = {budget}\nrun.seed = {seed}\nrun.min_objective = -100000\narchive.dims = 32,32\n{extra}"
    )
}

#[test]
fn criterion_01_budget_accounting() {
    for algorithm in ["cma_mega_es", "cma_mega_td3_es"] {
        let cfg = parse_config(&sphere_config(algorithm, 1_000_000, 0, "")).unwrap();
        let p = plan(&cfg).unwrap();
        assert_eq!(p.iterations, 5_000, "{algorithm} at budget 1M");
        assert_eq!(p.steady_cost, 200);
        assert_eq!(p.total_evaluations, 1_000_000);

        let cfg = parse_config(&sphere_config(algorithm, 20_000, 0, "")).unwrap();
        let p = plan(&cfg).unwrap();
        assert_eq!(p.iterations, 100, "{algorithm} at budget 20k");
    }
    // budgets that do not divide evenly are configuration errors
    let cfg = parse_config(&sphere_config("cma_mega_es", 1_000_100, 0, "")).unwrap();
    assert!(plan(&cfg).is_err());
    println!("[acceptance] criterion 1 (budget accounting): PASS");
}

/// KNOWN RED. The estimator is the standard mirrored-sampling form:
/// centered ranks over the combined primary and mirror lists, lambda_es
/// evaluations total, gradient assembled from rank differences. Its
/// per-seed cosine against the analytic gradients has mean about 0.845 on
/// this benchmark; the attainable ceiling for 50 isotropic probe pairs in
/// 20 dimensions is sqrt((p/pi)/(p/pi + (n-1)/3)) ~ 0.846, independent of
/// the evaluation point. A 0.8 bar therefore holds per seed with
/// probability ~0.85 per gradient, and all 60 comparisons (20 seeds x 3
/// gradients) pass with probability ~2e-4 for any pre-registered seed set.
/// The gate is asserted literally and fails honestly rather than being
/// weakened or seed-hunted; this comment is the analysis of record.
#[test]
fn criterion_02_es_estimator_fidelity() {
    let env = LinearProjectionSphere::new(20).unwrap();
    let cfg = EsConfig::new(100, 0.02).unwrap();
    let phi = SolutionVector::zeros(20);
    let exact = env.analytic_gradients(&phi).unwrap();
    let mut failures = Vec::new();
    let mut worst = (f64::INFINITY, 0u64);
    for seed in 0..20u64 {
        let mut es_rng = RngStream::new(seed, streams::ES);
        let (bundle, evals) = es_gradients(&phi, 2, &cfg, &mut es_rng, &mut |batch| {
            batch
                .iter()
                .map(|s| env.evaluate(s, &mut RngStream::new(0, 0)))
                .collect()
        })
        .unwrap();
        assert_eq!(evals.len(), 100, "estimator must use exactly lambda_es evaluations");
        let mut cosines = vec![(
            "objective",
            cosine_similarity(&bundle.objective, &exact.objective),
        )];
        for j in 0..2 {
            cosines.push((
                if j == 0 { "measure 0" } else { "measure 1" },
                cosine_similarity(&bundle.measures[j], &exact.measures[j]),
            ));
        }
        for (name, c) in cosines {
            if c < worst.0 {
                worst = (c, seed);
            }
            if c < 0.8 {
                failures.push(format!("seed {seed}: {name} cosine {c:.4}"));
            }
        }
    }
    println!(
        "[acceptance] criterion 2 (ES estimator fidelity): {} of 60 cosine checks at or above 0.8; worst {:.4} at seed {}",
        60 - failures.len(),
        worst.0,
        worst.1
    );
    assert!(
        failures.is_empty(),
        "this gate requires cosine >= 0.8 for 20 of 20 seeds on all gradients; \
         the estimator's attainable mean cosine here is ~0.845 (see this test's doc \
         comment), so the joint bar is out of reach:\n{}",
        failures.join("\n")
    );
    println!("[acceptance] criterion 2 (ES estimator fidelity): PASS");
}

#[test]
fn criterion_03_autodiff_correctness() {
    let policy = MlpSpec::new(vec![4, 16, 16, 2], Activation::Tanh).unwrap();
    let critic = MlpSpec::new(vec![6, 32, 32, 1], Activation::Identity).unwrap();
    let h = 1e-5;
    let mut rng = RngStream::new(42, 1);
    let mut worst: f64 = 0.0;
    for (spec, probes) in [(policy, 100), (critic, 100)] {
        for _ in 0..probes {
            let params = spec.xavier_init(&mut rng);
            let input: Vec<f64> = (0..spec.input_dim()).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let upstream: Vec<f64> = (0..spec.output_dim())
                .map(|_| rng.uniform(-1.0, 1.0))
                .collect();
            let ad = spec.grad_params(&params, &input, &upstream).unwrap();

            let scalar = |p: &[f64]| -> f64 {
                spec.forward(p, &input)
                    .unwrap()
                    .iter()
                    .zip(&upstream)
                    .map(|(o, u)| o * u)
                    .sum()
            };
            let mut work = params.clone();
            let mut fd = vec![0.0; params.len()];
            for i in 0..params.len() {
                work[i] = params[i] + h;
                let up = scalar(&work);
                work[i] = params[i] - h;
                let down = scalar(&work);
                work[i] = params[i];
                fd[i] = (up - down) / (2.0 * h);
            }
            let scale = fd.iter().fold(1e-3f64, |m, x| m.max(x.abs()));
            for i in 0..params.len() {
                let rel = (ad[i] - fd[i]).abs() / scale;
                worst = worst.max(rel);
                assert!(rel <= 1e-4, "relative error {rel:.2e} at parameter {i}");
            }
        }
    }
    println!("[acceptance] criterion 3 (autodiff correctness): PASS (max relative error {worst:.2e})");
}

#[test]
fn criterion_04_archive_invariant_suite() {
    let spec = GridSpec::new(vec![32, 32], vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
    let mut archive = Archive::new(spec.clone());
    let mut reference: HashMap<(usize, usize), (f64, Vec<f64>, Vec<f64>)> = HashMap::new();
    let mut rng = RngStream::new(123, 1);
    let min_objective = -101.0;
    let (mut last_qd, mut last_cov, mut last_best) = (0.0, 0.0, f64::NEG_INFINITY);
    for _ in 0..100_000 {
        let measures = vec![rng.uniform(-0.1, 1.1), rng.uniform(-0.1, 1.1)];
        let objective = rng.uniform(-100.0, 100.0);
        let solution = rng.normal_vector(3);
        archive
            .insert(
                SolutionVector::new(solution.clone()).unwrap(),
                objective,
                measures.clone(),
            )
            .unwrap();

        let idx = spec.cell_index(&measures);
        let key = (idx[0], idx[1]);
        match reference.get(&key) {
            Some((best, _, _)) if objective <= *best => {}
            _ => {
                reference.insert(key, (objective, solution, measures));
            }
        }

        let qd = archive.qd_score(min_objective).unwrap();
        let cov = archive.coverage();
        let best = archive.best_performance().unwrap();
        assert!(qd >= last_qd && cov >= last_cov && best >= last_best);
        (last_qd, last_cov, last_best) = (qd, cov, best);
    }

    assert_eq!(archive.len(), reference.len());
    for (flat, cell) in archive.cells() {
        let idx = spec.unflatten(flat);
        let (objective, solution, measures) = &reference[&(idx[0], idx[1])];
        assert_eq!(cell.objective.to_bits(), objective.to_bits());
        assert_eq!(cell.solution.as_slice(), solution.as_slice());
        assert_eq!(&cell.measures, measures);
    }

    let mut csv = Vec::new();
    archive.save_csv(&mut csv).unwrap();
    let loaded = Archive::load_csv(spec, csv.as_slice()).unwrap();
    let mut csv2 = Vec::new();
    loaded.save_csv(&mut csv2).unwrap();
    assert_eq!(csv, csv2, "CSV round trip must be bit-exact");
    println!(
        "[acceptance] criterion 4 (archive invariant suite): PASS ({} occupied cells)",
        archive.len()
    );
}

#[test]
fn criterion_05_exact_gradient_dqd_oracle() {
    let cfg = parse_config(&sphere_config(
        "cma_mega_es",
        100_000,
        1,
        "cma_mega.exact_gradients = true",
    ))
    .unwrap();
    let result = run_experiment(&cfg, None).unwrap();
    assert!(
        result.summary.coverage >= 0.90,
        "coverage {} below 0.90",
        result.summary.coverage
    );
    let rel = (result.summary.qd_score - EXACT_DQD_REFERENCE_QD_SCORE).abs()
        / EXACT_DQD_REFERENCE_QD_SCORE;
    assert!(
        rel <= 0.01,
        "qd score {} deviates {rel:.2e} from pinned reference {}",
        result.summary.qd_score,
        EXACT_DQD_REFERENCE_QD_SCORE
    );
    println!(
        "[acceptance] criterion 5 (exact-gradient DQD oracle): PASS (coverage {:.4}, qd {:.2}, deviation {rel:.2e})",
        result.summary.coverage, result.summary.qd_score
    );
}

#[test]
fn criterion_06_estimated_gradient_parity() {
    for seed in [11u64, 12, 13] {
        let cfg = parse_config(&sphere_config("cma_mega_es", 100_000, seed, "")).unwrap();
        let result = run_experiment(&cfg, None).unwrap();
        let ratio = result.summary.qd_score / EXACT_DQD_REFERENCE_QD_SCORE;
        assert!(
            ratio >= 0.70,
            "seed {seed}: estimated run reached only {ratio:.3} of the exact run"
        );
        println!(
            "[acceptance] criterion 6 seed {seed}: {:.1}% of the exact-gradient QD score",
            ratio * 100.0
        );
    }
    println!("[acceptance] criterion 6 (estimated-gradient parity): PASS (3 of 3 seeds)");
}

#[test]
fn criterion_07_td3_sanity() {
    let env = GaitPoint::new(&[32, 32], 0.0).unwrap();

    // random-search oracle: best of 10,000 randomly initialized policies
    let mut init_rng = RngStream::new(0, streams::INIT);
    let mut oracle_best = f64::NEG_INFINITY;
    for _ in 0..10_000 {
        let sol = env.random_initial(&mut init_rng);
        let f = env
            .evaluate(&sol, &mut RngStream::new(0, 0))
            .unwrap()
            .objective;
        oracle_best = oracle_best.max(f);
    }

    // 100,000 critic training steps, experience from parameter-space
    // exploration around the greedy actor
    let cfg = Td3Config {
        critic_steps: 500,
        ..Td3Config::default()
    };
    let mut state = Td3State::new(
        4,
        2,
        env.policy_spec().unwrap().clone(),
        &[32, 32],
        &cfg,
        &mut RngStream::new(1, streams::TD3_INIT),
    )
    .unwrap();
    let mut td3_rng = RngStream::new(1, streams::TD3);
    let mut explore_rng = RngStream::new(1, streams::VARIATION);
    let mut explore_episode = |state: &mut Td3State| {
        let mut params = state.actor_params().to_vec();
        for p in params.iter_mut() {
            *p += 0.05 * explore_rng.standard_normal();
        }
        let sol = SolutionVector::new(params).unwrap();
        let ev = env.evaluate(&sol, &mut RngStream::new(0, 0)).unwrap();
        state.buffer.add_all(&ev.transitions).unwrap();
    };
    // two warmup episodes so the very first training call can fill a batch
    explore_episode(&mut state);
    explore_episode(&mut state);
    let mut trained_steps = 0usize;
    for _ in 0..200 {
        explore_episode(&mut state);
        trained_steps += state.train(&cfg, &mut td3_rng).unwrap().critic_steps;
    }
    assert_eq!(trained_steps, 100_000);

    let actor = SolutionVector::new(state.actor_params().to_vec()).unwrap();
    let final_return = env
        .evaluate(&actor, &mut RngStream::new(0, 0))
        .unwrap()
        .objective;
    assert!(
        final_return >= 0.9 * oracle_best,
        "actor return {final_return:.2} below 0.9 x oracle best {oracle_best:.2}"
    );
    println!(
        "[acceptance] criterion 7 (TD3 sanity): PASS (actor {final_return:.2} vs oracle {oracle_best:.2})"
    );
}

#[test]
fn criterion_08_td3_mechanics() {
    // Polyak with tau = 0.005 moves targets exactly 0.5% of the gap
    let live = vec![1.0; 16];
    let mut target = vec![0.0; 16];
    polyak(&mut target, &live, 0.005);
    assert!(target.iter().all(|&t| t == 0.005));
    // u delayed updates with live frozen land exactly on the scalar recursion
    let mut expected = 0.005f64;
    for _ in 1..20 {
        polyak(&mut target, &live, 0.005);
        expected = 0.005 * 1.0 + (1.0 - 0.005) * expected;
    }
    assert!(target.iter().all(|&t| t.to_bits() == expected.to_bits()));

    // actor/target updates fire exactly every d = 2 critic steps
    let cfg = Td3Config {
        critic_batch: 8,
        critic_steps: 4,
        buffer_capacity: 100,
        ..Td3Config::default()
    };
    assert_eq!(cfg.tau, 0.005);
    assert_eq!(cfg.policy_delay, 2);
    let policy = MlpSpec::policy(2, &[8], 1).unwrap();
    let mut state =
        Td3State::new(2, 1, policy, &[8], &cfg, &mut RngStream::new(3, streams::TD3_INIT)).unwrap();
    for i in 0..32 {
        state
            .buffer
            .push(&qd_core::Transition {
                state: vec![i as f64 * 0.1, 0.0],
                action: vec![0.1],
                reward: i as f64 * 0.01,
                next_state: vec![i as f64 * 0.1 + 0.1, 0.0],
                done: false,
            })
            .unwrap();
    }
    let report = state.train(&cfg, &mut RngStream::new(3, streams::TD3)).unwrap();
    assert_eq!(report.critic_steps, 4);
    assert_eq!(report.actor_updates, 2);

    // critic MSE strictly decreases over 10 repeats on a frozen batch
    let frozen_cfg = Td3Config {
        critic_batch: 16,
        critic_steps: 1,
        smoothing_sigma: 0.0,
        policy_delay: 1000,
        critic_lr: 1e-2,
        buffer_capacity: 100,
        ..Td3Config::default()
    };
    let policy = MlpSpec::policy(2, &[8], 1).unwrap();
    let mut state = Td3State::new(
        2,
        1,
        policy,
        &[8],
        &frozen_cfg,
        &mut RngStream::new(5, streams::TD3_INIT),
    )
    .unwrap();
    for i in 0..16 {
        state
            .buffer
            .push(&qd_core::Transition {
                state: vec![(i as f64 - 8.0) * 0.1, 0.5],
                action: vec![0.2],
                reward: (i as f64 - 8.0) * 0.1,
                next_state: vec![(i as f64 - 8.0) * 0.1 + 0.1, 0.5],
                done: false,
            })
            .unwrap();
    }
    let mut losses = Vec::new();
    for _ in 0..10 {
        let mut batch_rng = RngStream::new(99, 7);
        losses.push(state.train(&frozen_cfg, &mut batch_rng).unwrap().critic_mse[0]);
    }
    for w in losses.windows(2) {
        assert!(w[1] < w[0], "critic MSE must strictly decrease: {losses:?}");
    }
    println!("[acceptance] criterion 8 (TD3 mechanics): PASS");
}

#[test]
fn criterion_09_metric_definitions() {
    // qd_score_auc equals an independent recomputation on random histories
    let mut rng = RngStream::new(31, 1);
    for _ in 0..20 {
        let mut rows = Vec::new();
        let mut evals = 0u64;
        let mut brute = 0.0;
        let mut prev = 0u64;
        for i in 1..=100 {
            evals += rng.index(400) as u64 + 1;
            let score = rng.uniform(0.0, 1e6);
            rows.push(MetricsRow {
                iteration: i,
                evaluations: evals,
                qd_score: score,
                coverage: 0.0,
                best_performance: 0.0,
                wall_time_s: 0.0,
            });
            brute += (evals - prev) as f64 * score;
            prev = evals;
        }
        assert!((qd_score_auc(&rows) - brute).abs() < 1e-9);
    }

    // mean elite robustness is exactly zero on the noise-free environment
    let cfg = parse_config(
        "env.id = gait_point\nenv.policy_hidden = 8\nalgorithm.id = map_elites\nmap_elites.lambda = 20\nrun.budget = 400\nrun.seed = 5\narchive.dims = 8,8",
    )
    .unwrap();
    let result = run_experiment(&cfg, None).unwrap();
    let env = GaitPoint::new(&[8], 0.0).unwrap();
    let robustness = mean_elite_robustness(
        &result.archive,
        &env,
        10,
        &mut RngStream::new(5, streams::ROBUSTNESS),
    )
    .unwrap();
    assert_eq!(robustness, 0.0, "noise-free re-evaluation must match exactly");

    // rank normalization sums to zero exactly for every even size 2..200:
    // the outputs are exactly antisymmetric, verified with an exact
    // fixed-point summation (every output times 2^70 is an integer)
    let mut rng = RngStream::new(77, 2);
    for p in 1..=100usize {
        let primary: Vec<f64> = (0..p).map(|_| rng.standard_normal()).collect();
        let mirror: Vec<f64> = (0..p).map(|_| rng.standard_normal()).collect();
        let (rp, rm) = rank_normalize(&primary, &mirror);
        let mut exact_sum: i128 = 0;
        for &v in rp.iter().chain(rm.iter()) {
            let scaled = v * (1u128 << 70) as f64;
            assert_eq!(scaled.fract(), 0.0, "rank value={v} is not fixed-point exact");
            exact_sum += scaled as i128;
        }
        assert_eq!(exact_sum, 0, "size {} ranks must sum to exactly zero", 2 * p);
    }
    println!("[acceptance] criterion 9 (metric definitions): PASS");
}

#[test]
fn criterion_10_determinism() {
    for algorithm in [
        "cma_mega_es",
        "cma_mega_td3_es",
        "map_elites",
        "pga_map_elites",
        "me_es",
    ] {
        let cfg = parse_config(&sphere_config(algorithm, 10_000, 7, "run.mode = deterministic"))
            .unwrap();
        let dir_a = out_dir(&format!("det_{algorithm}_a"));
        let dir_b = out_dir(&format!("det_{algorithm}_b"));
        run_experiment(&cfg, Some(&dir_a)).unwrap();
        run_experiment(&cfg, Some(&dir_b)).unwrap();
        for file in ["metrics.csv", "archive.csv"] {
            let a = std::fs::read(dir_a.join(file)).unwrap();
            let b = std::fs::read(dir_b.join(file)).unwrap();
            assert_eq!(a, b, "{algorithm}: {file} differs between identical runs");
        }
    }
    println!("[acceptance] criterion 10 (determinism): PASS (5 schedulers byte-identical)");
}

fn end_to_end_gait(algorithm: &str, td3_keys: bool) {
    let extra = if td3_keys { "td3.critic_hidden = 32,32\n" } else { "" };
    let cfg = parse_config(&format!(
        "env.id = gait_point\nenv.policy_hidden = 16,16\nalgorithm.id = {algorithm}\nrun.budget = 50000\nrun.seed = 9\narchive.dims = 32,32\n{extra}"
    ))
    .unwrap();
    let dir = out_dir(&format!("e2e_{algorithm}"));
    let result = run_experiment(&cfg, Some(&dir)).unwrap();
    let first = result.history.first().unwrap();
    let last = result.history.last().unwrap();
    assert!(
        last.qd_score > first.qd_score,
        "{algorithm}: final qd {} must exceed iteration-1 qd {}",
        last.qd_score,
        first.qd_score
    );

    let mut heatmap_csv = Vec::new();
    emit_heatmap_csv(&result.archive, &mut heatmap_csv).unwrap();
    assert_eq!(heatmap_csv.iter().filter(|&&b| b == b'\n').count(), 32);
    let mut heatmap_svg = Vec::new();
    emit_heatmap_svg(&result.archive, -21.0, 200.0, &mut heatmap_svg).unwrap();
    assert_eq!(
        String::from_utf8(heatmap_svg).unwrap().matches("<rect").count(),
        1024
    );
    let mut histogram = Vec::new();
    emit_histogram(&result.archive, 50, -21.0, 200.0, 400.0, &mut histogram).unwrap();
    let total: u64 = String::from_utf8(histogram)
        .unwrap()
        .lines()
        .map(|l| l.split(',').nth(1).unwrap().parse::<u64>().unwrap())
        .sum();
    assert_eq!(total as usize, result.archive.len());

    println!(
        "[acceptance] criterion 11 ({algorithm}): PASS (qd {:.1} -> {:.1}, coverage {:.3})",
        first.qd_score, last.qd_score, result.summary.coverage
    );
}

#[test]
fn criterion_11a_end_to_end_cma_mega_es() {
    end_to_end_gait("cma_mega_es", false);
}

#[test]
fn criterion_11b_end_to_end_cma_mega_td3_es() {
    end_to_end_gait("cma_mega_td3_es", true);
}

#[test]
fn criterion_11c_end_to_end_map_elites() {
    end_to_end_gait("map_elites", false);
}

#[test]
fn criterion_11d_end_to_end_pga_map_elites() {
    end_to_end_gait("pga_map_elites", true);
}

#[test]
fn criterion_11e_end_to_end_me_es() {
    end_to_end_gait("me_es", false);
}
