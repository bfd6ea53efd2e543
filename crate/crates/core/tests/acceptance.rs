//! Acceptance suite: one test per criterion, each printing a pass/fail line
//! with its runtime. Tolerances and time limits are pinned in the
//! assertions.

use dtx_core::bayes::{
    log_marginal_likelihood, mh_search_traced, sample_tree_from_prior, BayesPrior,
    PriorRandomness,
};
use dtx_core::criteria::{
    eval_preset, eval_tsallis, eval_tweedie, ClassDistribution, CriterionParams, Preset,
    TargetSet,
};
use dtx_core::data::{load_csv, synth_instances, Dataset, InstanceCollection, SynthScheme, Task};
use dtx_core::prune::{is_pruned_subtree, mccp_path, prune_at, reduced_error_prune};
use dtx_core::tree::{
    build_node_functions, top_down_learn, zero_one_loss, Child, DecisionTree, StopRule,
};
use dtx_core::tune::{
    default_split_grid, erm_grid_split, erm_mccp_exact, frontier_sweep, holdout_split, Protocol,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn report(name: &str, started: Instant, limit_s: f64) {
    let elapsed = started.elapsed().as_secs_f64();
    println!("acceptance {name}: PASS ({elapsed:.2}s, limit {limit_s}s)");
    assert!(elapsed < limit_s, "{name} exceeded its {limit_s}s budget: {elapsed:.2}s");
}

fn random_distribution(rng: &mut ChaCha8Rng, c: usize) -> ClassDistribution {
    let raw: Vec<f64> = (0..c).map(|_| rng.random::<f64>().max(1e-9)).collect();
    let sum: f64 = raw.iter().sum();
    let mut probs: Vec<f64> = raw.iter().map(|r| r / sum).collect();
    let adjust = 1.0 - probs.iter().sum::<f64>();
    probs[0] += adjust;
    ClassDistribution::new(probs, 1.0).unwrap()
}

fn data_file(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn artifact(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join(name)
}

// -------------------------------------------------------------------------
// 1. Preset equivalences of the Tsallis family.
// -------------------------------------------------------------------------
#[test]
fn criterion_01_preset_equivalences() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for i in 0..100_000 {
        let c = 2 + (i % 4);
        let d = random_distribution(&mut rng, c);
        let gini = eval_preset(Preset::Gini, &d).unwrap();
        let ts_gini = eval_tsallis(2.0, 1, 1.0, &d).unwrap();
        assert!((gini - ts_gini).abs() <= 1e-12, "gini mismatch {gini} vs {ts_gini}");

        let entropy = eval_preset(Preset::Entropy, &d).unwrap();
        for alpha in [1.0 + 1e-9, 1.0 - 1e-9] {
            let ts_ent = eval_tsallis(alpha, 1, 1.0, &d).unwrap();
            assert!((entropy - ts_ent).abs() <= 1e-6, "entropy mismatch at alpha {alpha}");
        }

        if c == 2 {
            let km = eval_preset(Preset::Km96, &d).unwrap();
            if km > 0.0 {
                let ts_km = eval_tsallis(0.5, 2, 1.0, &d).unwrap();
                // With C = 1 the ratio is the constant 2.
                assert!((ts_km / km - 2.0).abs() <= 1e-10, "ratio {} off", ts_km / km);
            }
        }
    }
    report("1 (preset equivalences)", start, 5.0);
}

// -------------------------------------------------------------------------
// 2. Permissibility properties: symmetry, vertex zero, concavity.
// -------------------------------------------------------------------------
#[test]
fn criterion_02_permissibility_properties() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut params: Vec<CriterionParams> = Vec::new();
    while params.len() < 20 {
        let alpha = rng.random::<f64>() * 4.0 + 1e-3;
        let beta = rng.random_range(1..=8u32);
        let p = CriterionParams::tsallis(alpha, beta);
        if p.is_permissible().unwrap() {
            params.push(p);
        }
    }
    for _ in 0..10 {
        params.push(CriterionParams::gamma(rng.random::<f64>().max(1e-6)));
    }

    for params in &params {
        // Tsallis is permissible on any arity; the gamma-product family's
        // concavity is a binary-classification property (its formula is
        // kept literal for more classes, but the guarantee is not).
        let c = match params {
            CriterionParams::GammaProduct { .. } => 2,
            _ => 3,
        };
        let eval = |d: &ClassDistribution| -> f64 {
            match *params {
                CriterionParams::Tsallis { alpha, beta, scale } => {
                    eval_tsallis(alpha, beta, scale, d).unwrap()
                }
                CriterionParams::GammaProduct { gamma, scale } => {
                    dtx_core::criteria::eval_gamma(gamma, scale, d).unwrap()
                }
                _ => unreachable!(),
            }
        };
        // Vertex zero at every simplex corner.
        for i in 0..c {
            let mut probs = vec![0.0; c];
            probs[i] = 1.0;
            let d = ClassDistribution::new(probs, 1.0).unwrap();
            assert!(eval(&d).abs() <= 1e-10, "{params:?} nonzero at vertex {i}");
        }
        for _ in 0..1000 {
            let p = random_distribution(&mut rng, c);
            let q = random_distribution(&mut rng, c);
            let a: f64 = rng.random();

            // Symmetry under a random permutation.
            let mut perm: Vec<usize> = (0..c).collect();
            for i in (1..c).rev() {
                perm.swap(i, rng.random_range(0..=i));
            }
            let permuted: Vec<f64> = perm.iter().map(|&j| p.probs()[j]).collect();
            let pd = ClassDistribution::new(permuted, 1.0).unwrap();
            assert!((eval(&p) - eval(&pd)).abs() <= 1e-10, "{params:?} asymmetric");

            // Concavity of the mixture.
            let mix: Vec<f64> = p
                .probs()
                .iter()
                .zip(q.probs())
                .map(|(x, y)| a * x + (1.0 - a) * y)
                .collect();
            let sum: f64 = mix.iter().sum();
            let mix: Vec<f64> = mix.iter().map(|v| v / sum).collect();
            let md = ClassDistribution::new(mix, 1.0).unwrap();
            let lhs = eval(&md);
            let rhs = a * eval(&p) + (1.0 - a) * eval(&q);
            assert!(lhs >= rhs - 1e-10, "{params:?} convexity violation: {lhs} < {rhs}");
        }
    }
    report("2 (permissibility properties)", start, 5.0);
}

// -------------------------------------------------------------------------
// 3. Learner fidelity: preset agreement and scale invariance, byte-exact.
// -------------------------------------------------------------------------
#[test]
fn criterion_03_learner_fidelity() {
    let start = Instant::now();
    let schemes =
        [SynthScheme::Blobs, SynthScheme::XorGrid, SynthScheme::LabelNoiseBlobs];
    for seed in 0..50u64 {
        let scheme = schemes[(seed % 3) as usize];
        let d = synth_instances(scheme, 1, 80 + (seed as usize % 40), seed)
            .unwrap()
            .instances
            .remove(0);
        let f = build_node_functions(&d).unwrap();
        let budget = StopRule::Size(8);

        // The monotone-objective assertion inside the learner would panic
        // here if the split objective ever increased under a permissible
        // criterion.
        let gini_tree =
            top_down_learn(&d, &f, &CriterionParams::preset(Preset::Gini), budget).unwrap();
        let ts_tree =
            top_down_learn(&d, &f, &CriterionParams::tsallis(2.0, 1), budget).unwrap();
        assert_eq!(ts_tree.to_json(), gini_tree.to_json(), "seed {seed}: preset divergence");

        for (alpha, beta) in [(0.5, 2u32), (1.3, 1), (3.0, 4)] {
            let a = top_down_learn(
                &d,
                &f,
                &CriterionParams::Tsallis { alpha, beta, scale: 1.0 },
                budget,
            )
            .unwrap();
            let b = top_down_learn(
                &d,
                &f,
                &CriterionParams::Tsallis { alpha, beta, scale: 2.5 },
                budget,
            )
            .unwrap();
            assert_eq!(a.to_json(), b.to_json(), "seed {seed}: scale variance at {alpha},{beta}");
        }
    }
    report("3 (learner fidelity)", start, 30.0);
}

// -------------------------------------------------------------------------
// 4. Cost-complexity path structure against the dynamic-programming oracle.
// -------------------------------------------------------------------------

/// Independent oracle: exact bottom-up minimization of
/// `train_loss + alpha * leaves` over all pruned subtrees.
fn dp_optimal_cost(t: &DecisionTree, alpha: f64) -> f64 {
    let n: u64 = t.leaves().iter().map(|l| l.weight() as u64).sum();
    fn counts_below(t: &DecisionTree, c: Child, acc: &mut Vec<u64>) {
        match c {
            Child::Leaf(i) => {
                for (a, &k) in acc.iter_mut().zip(t.leaves()[i].counts().unwrap()) {
                    *a += k;
                }
            }
            Child::Node(i) => {
                counts_below(t, t.nodes()[i].left, acc);
                counts_below(t, t.nodes()[i].right, acc);
            }
        }
    }
    fn rec(t: &DecisionTree, n: u64, alpha: f64, c: Child) -> f64 {
        let mut counts = vec![0u64; t.n_classes()];
        counts_below(t, c, &mut counts);
        let total: u64 = counts.iter().sum();
        let miss = total - counts.iter().copied().max().unwrap();
        let as_leaf = miss as f64 / n as f64 + alpha;
        match c {
            Child::Leaf(_) => as_leaf,
            Child::Node(i) => {
                let split =
                    rec(t, n, alpha, t.nodes()[i].left) + rec(t, n, alpha, t.nodes()[i].right);
                split.min(as_leaf)
            }
        }
    }
    rec(t, n, alpha, t.root())
}

#[test]
fn criterion_04_mccp_path_structure() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    for case in 0..100u64 {
        let col = synth_instances(SynthScheme::LabelNoiseBlobs, 1, 160, 10_000 + case).unwrap();
        let (train, eval) = holdout_split(&col, 0.3, case).unwrap();
        let d = &train[0];
        let f = build_node_functions(d).unwrap();
        let size = 5 + (rng.random::<u64>() % 16) as usize;
        let t = top_down_learn(d, &f, &CriterionParams::preset(Preset::Entropy), StopRule::Size(size))
            .unwrap();
        let path = mccp_path(&t).unwrap();

        // Nested, strictly increasing, at most t + 1 pieces.
        assert!(path.len() <= t.n_internal() + 1);
        for w in path.entries().windows(2) {
            assert!(w[0].alpha < w[1].alpha);
            assert!(is_pruned_subtree(&w[1].tree, &w[0].tree));
        }

        // DP-oracle agreement at 10 random parameters per tree.
        let hi = path.entries().last().unwrap().alpha * 1.3 + 0.02;
        for _ in 0..10 {
            let alpha: f64 = rng.random::<f64>() * hi;
            let sub = prune_at(&path, alpha).unwrap();
            let train_loss = sub.leaves().iter().map(|l| {
                let counts = l.counts().unwrap();
                counts.iter().sum::<u64>() - counts.iter().copied().max().unwrap()
            }).sum::<u64>() as f64
                / path.n_examples() as f64;
            let cost = train_loss + alpha * sub.n_leaves() as f64;
            let oracle = dp_optimal_cost(&t, alpha);
            assert!((cost - oracle).abs() <= 1e-12, "case {case}: {cost} vs oracle {oracle}");
        }

        // Dense scan: held-out loss is constant within each reported piece.
        let holdout = &eval[0];
        let piece_loss: Vec<f64> = path
            .entries()
            .iter()
            .map(|e| zero_one_loss(&e.tree, holdout).unwrap())
            .collect();
        let scan_points = 10_000;
        for i in 0..scan_points {
            let alpha = hi * i as f64 / scan_points as f64;
            let k = path.piece_index(alpha).unwrap();
            let loss = zero_one_loss(prune_at(&path, alpha).unwrap(), holdout).unwrap();
            assert_eq!(loss, piece_loss[k], "case {case}: loss jumped inside piece {k}");
        }
    }
    report("4 (cost-complexity path structure)", start, 120.0);
}

// -------------------------------------------------------------------------
// 5. Exact tuner dominates dense grid search.
// -------------------------------------------------------------------------
#[test]
fn criterion_05_exact_erm_dominance() {
    let start = Instant::now();
    for case in 0..20u64 {
        let col = synth_instances(SynthScheme::LabelNoiseBlobs, 5, 130, 20_000 + case).unwrap();
        let (train, eval) = holdout_split(&col, 0.25, case).unwrap();
        let trees: Vec<DecisionTree> = train
            .iter()
            .map(|d| {
                let f = build_node_functions(d).unwrap();
                top_down_learn(d, &f, &CriterionParams::preset(Preset::Entropy), StopRule::Size(12))
                    .unwrap()
            })
            .collect();
        let exact = erm_mccp_exact(&trees, &eval).unwrap();

        let hi = exact.pieces.last().unwrap().lo * 1.2 + 0.02;
        let mut grid_best = f64::INFINITY;
        for i in 0..10_000 {
            let alpha = hi * i as f64 / 10_000.0;
            let mut total = 0.0;
            for (path, d) in exact.paths.iter().zip(&eval) {
                total += zero_one_loss(prune_at(path, alpha).unwrap(), d).unwrap();
            }
            grid_best = grid_best.min(total / eval.len() as f64);
        }
        assert!(
            exact.best_mean_loss <= grid_best,
            "case {case}: exact {} worse than grid {grid_best}",
            exact.best_mean_loss
        );
    }
    report("5 (exact tuner dominance)", start, 120.0);
}

// -------------------------------------------------------------------------
// 6. Tweedie endpoints.
// -------------------------------------------------------------------------
#[test]
fn criterion_06_tweedie_endpoints() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    for _ in 0..10_000 {
        let n = rng.random_range(1..40usize);
        let values: Vec<f64> = (0..n)
            .map(|_| if rng.random::<f64>() < 0.15 { 0.0 } else { rng.random::<f64>() * 10.0 })
            .collect();
        if values.iter().sum::<f64>() <= 0.0 {
            continue;
        }
        let t = TargetSet::new(values.clone()).unwrap();

        let mse_oracle = {
            let mean = values.iter().sum::<f64>() / n as f64;
            values.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n as f64
        };
        let g0 = eval_tweedie(0.0, &t).unwrap();
        assert!((g0 - mse_oracle).abs() <= 1e-12, "MSE endpoint off: {g0} vs {mse_oracle}");

        let hpd = eval_tweedie(1.0, &t).unwrap();
        let near = eval_tweedie(1.0 - 1e-6, &t).unwrap();
        assert!(
            (near - hpd).abs() <= 1e-4 * (1.0 + hpd),
            "Poisson endpoint off: {near} vs {hpd}"
        );
    }
    report("6 (Tweedie endpoints)", start, 5.0);
}

// -------------------------------------------------------------------------
// 7. Piecewise structure of the prior-sampling map.
// -------------------------------------------------------------------------
#[test]
fn criterion_07_prior_piecewise_structure() {
    let start = Instant::now();
    let t_cap = 8usize;
    let rand = PriorRandomness::draw(777, t_cap);

    // Distinct shapes over a 200 x 200 grid never exceed the planar
    // arrangement bound 1 + (t-1) + C(t-1, 2) = 29 for t = 8.
    let mut shapes = std::collections::HashSet::new();
    for i in 0..200 {
        for j in 0..200 {
            let sigma = 1e-3 + 1.2 * i as f64 / 199.0;
            let phi = 1e-3 + 3.0 * j as f64 / 199.0;
            let prior = BayesPrior::uniform(sigma, phi, t_cap, 2).unwrap();
            let shape = sample_tree_from_prior(&prior, &rand).unwrap();
            shapes.insert(shape.internal_slots().to_vec());
        }
    }
    assert!(shapes.len() <= 29, "{} distinct shapes exceed the bound 29", shapes.len());

    // Sigma scan at fixed phi: shape changes only at sigma = z_i (1+d)^phi
    // where d is the depth of slot i.
    let phi = 1.3f64;
    let thresholds: Vec<f64> = rand
        .z
        .iter()
        .enumerate()
        .map(|(idx, &z)| {
            let slot = idx + 1;
            let depth = (usize::BITS - 1 - slot.leading_zeros()) as f64;
            z * (1.0 + depth).powf(phi)
        })
        .collect();
    let steps = 4000;
    let max_sigma = 3.0;
    let step = max_sigma / steps as f64;
    let mut prev: Option<Vec<usize>> = None;
    for i in 1..=steps {
        let sigma = step * i as f64;
        let prior = BayesPrior::uniform(sigma, phi, t_cap, 2).unwrap();
        let shape = sample_tree_from_prior(&prior, &rand).unwrap().internal_slots().to_vec();
        if let Some(p) = &prev {
            if *p != shape {
                let jump_near_threshold =
                    thresholds.iter().any(|&th| (sigma - th).abs() <= step);
                assert!(
                    jump_near_threshold,
                    "shape changed at sigma {sigma} away from all thresholds {thresholds:?}"
                );
            }
        }
        prev = Some(shape);
    }
    report("7 (prior piecewise structure)", start, 60.0);
}

// -------------------------------------------------------------------------
// 8. Marginal likelihood against exhaustive enumeration.
// -------------------------------------------------------------------------
#[test]
fn criterion_08_likelihood_oracle() {
    let start = Instant::now();
    // Polya-urn enumeration: the marginal likelihood of a count vector is
    // the product of sequential predictive probabilities.
    fn urn(counts: &[u64], a: &[f64]) -> f64 {
        let a_sum: f64 = a.iter().sum();
        let mut log = 0.0;
        let mut seen = vec![0.0; a.len()];
        let mut total = 0.0;
        for (cls, &k) in counts.iter().enumerate() {
            for _ in 0..k {
                log += ((a[cls] + seen[cls]) / (a_sum + total)).ln();
                seen[cls] += 1.0;
                total += 1.0;
            }
        }
        log
    }
    for a in [vec![1.0, 1.0], vec![0.5, 2.0]] {
        for n0 in 0..=4u64 {
            for n1 in 0..=4u64 {
                let counts = vec![n0, n1];
                let lml = log_marginal_likelihood(&[counts.clone()], &a).unwrap();
                assert!((lml - urn(&counts, &a)).abs() <= 1e-9, "{counts:?} under {a:?}");
            }
        }
    }
    for a in [vec![1.0, 1.0, 1.0], vec![0.7, 1.3, 2.0]] {
        for n0 in 0..=4u64 {
            for n1 in 0..=4u64 {
                for n2 in 0..=4u64 {
                    let counts = vec![n0, n1, n2];
                    let lml = log_marginal_likelihood(&[counts.clone()], &a).unwrap();
                    assert!((lml - urn(&counts, &a)).abs() <= 1e-9, "{counts:?} under {a:?}");
                }
            }
        }
    }
    // Multi-leaf additivity on a few random partitions.
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    for _ in 0..100 {
        let l1 = vec![rng.random_range(0..5u64), rng.random_range(0..5u64)];
        let l2 = vec![rng.random_range(0..5u64), rng.random_range(0..5u64)];
        let a = [1.0, 1.0];
        let joint = log_marginal_likelihood(&[l1.clone(), l2.clone()], &a).unwrap();
        let split = log_marginal_likelihood(&[l1], &a).unwrap()
            + log_marginal_likelihood(&[l2], &a).unwrap();
        assert!((joint - split).abs() <= 1e-9);
    }
    report("8 (likelihood oracle)", start, 10.0);
}

// -------------------------------------------------------------------------
// 9. Chain stationarity on an enumerable posterior.
// -------------------------------------------------------------------------
#[test]
fn criterion_09_mh_stationarity() {
    let start = Instant::now();
    // Two points, one feature, two classes; |F| = 1. With a cap of two
    // internal nodes the reachable trees are: the bare leaf, the root
    // split, and the root split with one split child (left or right).
    let d = Dataset::new_classification(
        vec![vec![0.0], vec![1.0]],
        vec![0, 1],
        2,
        vec!["a".into(), "b".into()],
    )
    .unwrap();
    let f = build_node_functions(&d).unwrap();
    assert_eq!(f.len(), 1);
    let (sigma, phi, t_cap) = (0.6, 1.0, 2usize);
    let prior = BayesPrior::uniform(sigma, phi, t_cap, 2).unwrap();

    // Exact posterior, enumerated independently. Likelihoods: leaf counts
    // (1,1) integrate to 1/6; both-pure partitions to 1/4 (an empty leaf
    // contributes factor 1). Priors follow the split-probability product.
    let p0 = sigma; // depth 0
    let p1 = sigma / 2.0f64.powf(phi);
    let p2 = sigma / 3.0f64.powf(phi);
    let w_leaf = (1.0 / 6.0) * (1.0 - p0);
    let w_root = (1.0 / 4.0) * (p0 * (1.0 - p1) * (1.0 - p1));
    let w_deep = (1.0 / 4.0) * (p0 * p1 * (1.0 - p1) * (1.0 - p2) * (1.0 - p2));
    let z = w_leaf + w_root + 2.0 * w_deep;
    let exact = [w_leaf / z, w_root / z, 2.0 * w_deep / z];

    // Long chain; group states by leaf count (the two 3-leaf trees are
    // symmetric and share a posterior value).
    let steps = 100_000;
    let mut trace = Vec::with_capacity(steps);
    let rand = PriorRandomness::draw(909, t_cap);
    mh_search_traced(&d, &f, &prior, &rand, steps, &mut trace).unwrap();

    let n_batches = 100;
    let batch = steps / n_batches;
    for (group, leaves) in [(0usize, 1usize), (1, 2), (2, 3)] {
        let freqs: Vec<f64> = (0..n_batches)
            .map(|b| {
                trace[b * batch..(b + 1) * batch]
                    .iter()
                    .filter(|row| row.n_leaves == leaves)
                    .count() as f64
                    / batch as f64
            })
            .collect();
        let mean = freqs.iter().sum::<f64>() / n_batches as f64;
        let var = freqs.iter().map(|f| (f - mean) * (f - mean)).sum::<f64>()
            / (n_batches - 1) as f64;
        let se = (var / n_batches as f64).sqrt();
        let diff = (mean - exact[group]).abs();
        println!(
            "  state {leaves} leaves: chain {mean:.4} vs exact {:.4} (3se = {:.4})",
            exact[group],
            3.0 * se
        );
        assert!(
            diff <= 3.0 * se.max(1e-4),
            "state with {leaves} leaves: {mean} vs {} beyond 3 standard errors",
            exact[group]
        );
    }
    report("9 (chain stationarity)", start, 60.0);
}

// -------------------------------------------------------------------------
// 10. Benchmark reproduction on the bundled datasets.
// -------------------------------------------------------------------------

fn accuracy_of(result: &dtx_core::tune::TuningResult<CriterionParams>) -> f64 {
    100.0 * (1.0 - result.best_mean_loss)
}

#[test]
fn criterion_10a_split_tuning_iris() {
    let start = Instant::now();
    let iris = load_csv(data_file("iris.csv"), Task::Classification).unwrap();
    let col = InstanceCollection::new(vec![iris]).unwrap();
    let protocol = Protocol::KFold { k: 5, seed: 7 };
    let stop = StopRule::MaxDepth(5);

    let tuned = erm_grid_split(&col, &default_split_grid(8), stop, protocol).unwrap();
    let gini = erm_grid_split(
        &col,
        &[CriterionParams::preset(Preset::Gini)],
        stop,
        protocol,
    )
    .unwrap();
    let acc_tuned = accuracy_of(&tuned);
    let acc_gini = accuracy_of(&gini);
    // The benchmark's reported optimum sits at (0.5, 1); our folds differ,
    // so this is informational alongside the binding inequalities.
    let half = erm_grid_split(&col, &[CriterionParams::tsallis(0.5, 1)], stop, protocol).unwrap();
    println!(
        "  iris: tuned {:?} -> {acc_tuned:.2}%, gini {acc_gini:.2}%, (0.5,1) {:.2}%",
        tuned.best,
        accuracy_of(&half)
    );
    assert!(acc_tuned >= acc_gini, "tuned {acc_tuned} below gini {acc_gini}");
    assert!(acc_tuned >= 93.0, "tuned accuracy {acc_tuned} below 93");
    report("10a (split tuning, iris)", start, 120.0);
}

#[test]
fn criterion_10b_split_tuning_wine() {
    let start = Instant::now();
    let wine = load_csv(data_file("wine.csv"), Task::Classification).unwrap();
    let col = InstanceCollection::new(vec![wine]).unwrap();
    let protocol = Protocol::KFold { k: 5, seed: 7 };
    let stop = StopRule::MaxDepth(5);

    let tuned = erm_grid_split(&col, &default_split_grid(8), stop, protocol).unwrap();
    let entropy = erm_grid_split(
        &col,
        &[CriterionParams::preset(Preset::Entropy)],
        stop,
        protocol,
    )
    .unwrap();
    let acc_tuned = accuracy_of(&tuned);
    let acc_entropy = accuracy_of(&entropy);
    println!(
        "  wine: tuned {:?} -> {acc_tuned:.2}%, entropy {acc_entropy:.2}%",
        tuned.best
    );
    assert!(acc_tuned >= acc_entropy, "tuned {acc_tuned} below entropy {acc_entropy}");
    report("10b (split tuning, wine)", start, 120.0);
}

/// Shared protocol for the pruning comparison: repeated 80/20 splits of
/// iris, entropy trees grown to saturation.
fn pruning_protocol() -> (Vec<DecisionTree>, Vec<Dataset>, f64, f64) {
    let iris = load_csv(data_file("iris.csv"), Task::Classification).unwrap();
    let reps = 50;
    let col =
        InstanceCollection::new(vec![iris; reps]).unwrap();
    let (train, eval) = holdout_split(&col, 0.2, 1234).unwrap();

    let mut trees = Vec::with_capacity(reps);
    let mut unpruned_acc = 0.0;
    let mut rep_acc = 0.0;
    for (tr, ev) in train.iter().zip(&eval) {
        let f = build_node_functions(tr).unwrap();
        let t = top_down_learn(tr, &f, &CriterionParams::preset(Preset::Entropy), StopRule::Size(tr.n()))
            .unwrap();
        unpruned_acc += 1.0 - zero_one_loss(&t, ev).unwrap();

        // Reduced-error baseline: grow on 75% of the training data, prune
        // with the remaining 25%.
        let grow_n = (tr.n() * 3) / 4;
        let grow = tr.subset(&(0..grow_n).collect::<Vec<_>>());
        let hold = tr.subset(&(grow_n..tr.n()).collect::<Vec<_>>());
        let fg = build_node_functions(&grow).unwrap();
        let tg = top_down_learn(
            &grow,
            &fg,
            &CriterionParams::preset(Preset::Entropy),
            StopRule::Size(grow.n()),
        )
        .unwrap();
        let pruned = reduced_error_prune(&tg, &hold).unwrap();
        rep_acc += 1.0 - zero_one_loss(&pruned, ev).unwrap();

        trees.push(t);
    }
    let n = train.len() as f64;
    (trees, eval, 100.0 * unpruned_acc / n, 100.0 * rep_acc / n)
}

#[test]
fn criterion_10c_pruning_comparison_iris() {
    let start = Instant::now();
    let (trees, eval, unpruned, rep) = pruning_protocol();
    let tuned = erm_mccp_exact(&trees, &eval).unwrap();
    let mccp = 100.0 * (1.0 - tuned.best_mean_loss);
    println!("  iris pruning: unpruned {unpruned:.2}%, mccp-tuned {mccp:.2}%, rep {rep:.2}%");

    assert!(mccp >= rep - 2.0, "mccp {mccp} more than 2 points below rep {rep}");
    // The headline gap: tuned cost-complexity pruning must beat the
    // unpruned trees by five accuracy points. This learner excludes
    // empty-child splits, so its fully grown trees already sit near the
    // accuracy ceiling of this data and the five-point gain has no
    // headroom; the assertion states the required gap faithfully and
    // reports the measured margin when it fails.
    assert!(
        mccp >= unpruned + 5.0,
        "mccp-tuned {mccp:.2}% does not exceed unpruned {unpruned:.2}% by 5 points; \
         the maximum achievable gain at this unpruned accuracy is {:.2} points",
        100.0 - unpruned
    );
    report("10c (pruning comparison, iris)", start, 120.0);
}

#[test]
fn criterion_10d_per_dataset_alpha_intervals() {
    let start = Instant::now();
    let mut rows = String::from("dataset,alpha_lo,alpha_hi,test_accuracy\n");
    let mut intervals = Vec::new();
    for name in ["iris.csv", "wine.csv"] {
        let data = load_csv(data_file(name), Task::Classification).unwrap();
        let col = InstanceCollection::new(vec![data]).unwrap();
        let (train, eval) = holdout_split(&col, 0.2, 99).unwrap();
        let f = build_node_functions(&train[0]).unwrap();
        let t = top_down_learn(
            &train[0],
            &f,
            &CriterionParams::preset(Preset::Gini),
            StopRule::Size(train[0].n()),
        )
        .unwrap();
        let tuned = erm_mccp_exact(&[t], &eval).unwrap();
        let piece = &tuned.pieces[tuned.best_index];
        rows.push_str(&format!(
            "{name},{:.17e},{:.17e},{:.4}\n",
            piece.lo,
            piece.hi,
            1.0 - piece.mean_loss
        ));
        intervals.push((piece.lo, piece.hi));
    }
    std::fs::write(artifact("alpha_intervals.csv"), &rows).unwrap();
    assert_ne!(
        intervals[0], intervals[1],
        "optimal alpha intervals coincide across datasets"
    );
    println!("  optimal alpha intervals: {intervals:?}");
    report("10d (per-dataset alpha intervals)", start, 120.0);
}

#[test]
fn criterion_10e_frontier() {
    let start = Instant::now();
    let iris = load_csv(data_file("iris.csv"), Task::Classification).unwrap();
    let col = InstanceCollection::new(vec![iris; 10]).unwrap();
    let (train, eval) = holdout_split(&col, 0.2, 55).unwrap();
    let etas = [0.0, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1];
    let rows = frontier_sweep(
        &train,
        &eval,
        &CriterionParams::preset(Preset::Gini),
        40,
        &etas,
    )
    .unwrap();
    let mut csv = String::from("eta,alpha_tilde,accuracy,leaves,eta_times_leaves\n");
    for r in &rows {
        csv.push_str(&format!(
            "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}\n",
            r.eta,
            r.alpha,
            r.accuracy,
            r.mean_leaves,
            r.eta * r.mean_leaves
        ));
    }
    std::fs::write(artifact("frontier.csv"), &csv).unwrap();
    for w in rows.windows(2) {
        assert!(
            w[1].mean_leaves <= w[0].mean_leaves,
            "leaf counts increased along the eta frontier"
        );
    }
    println!(
        "  frontier leaves: {:?}",
        rows.iter().map(|r| r.mean_leaves).collect::<Vec<_>>()
    );
    report("10e (accuracy-size frontier)", start, 120.0);
}

// -------------------------------------------------------------------------
// 11. Sample-complexity bounds are out of scope by design.
// -------------------------------------------------------------------------
#[test]
fn criterion_11_bounds_not_reproduced() {
    println!(
        "acceptance 11: sample-complexity bounds are analytical statements, not \
         experiments; their piecewise structural content is covered by criteria 4, 5 and 7"
    );
}
