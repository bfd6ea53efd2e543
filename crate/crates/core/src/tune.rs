//! Hyperparameter selection by empirical risk minimization over instance
//! collections: grid ERM for splitting criteria, pessimistic pruning and
//! Bayesian priors; the exact breakpoint-merge tuner for the
//! cost-complexity parameter; joint split-and-prune tuning under the
//! accuracy/size objective; and the frontier sweep.
//!
//! Grid points are evaluated independently (in parallel when a rayon pool
//! is active) and reduced in grid order, so results do not depend on the
//! worker count. Argmin ties always go to the earliest grid point.

use crate::bayes::{BayesError, BayesPrior};
use crate::criteria::CriterionParams;
use crate::data::{make_folds, DataError, Dataset, InstanceCollection, Task};
use crate::prune::{mccp_path, pessimistic_prune, PessimisticParams, PruneError, PruningPath};
use crate::tree::{
    build_node_functions, mse_loss, top_down_learn, zero_one_loss, DecisionTree, StopRule,
    TreeError,
};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TuneError {
    #[error("empty parameter grid")]
    EmptyGrid,
    #[error("grid point {0} does not fit the instance task")]
    GridTaskMismatch(String),
    #[error("need one {what} per instance: {got} for {instances} instances")]
    LengthMismatch { what: &'static str, got: usize, instances: usize },
    #[error("protocol infeasible: {0}")]
    BadProtocol(String),
    #[error("complexity coefficient must be nonnegative, got {0}")]
    BadEta(f64),
    #[error("data error: {0}")]
    Data(#[from] DataError),
    #[error("tree error: {0}")]
    Tree(#[from] TreeError),
    #[error("prune error: {0}")]
    Prune(#[from] PruneError),
    #[error("bayes error: {0}")]
    Bayes(#[from] BayesError),
}

/// Evaluation protocol for split-criterion tuning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Protocol {
    /// Learn on the full instance and score the training loss.
    TrainOnly,
    /// k-fold cross validation (unstratified, seeded); the instance loss is
    /// the mean held-out fold loss.
    KFold { k: usize, seed: u64 },
    /// Seeded per-instance holdout: learn on the rest, score the held-out
    /// fraction.
    Holdout { fraction: f64, seed: u64 },
}

/// Loss surface over an explicit grid, with per-instance losses retained.
#[derive(Debug, Clone)]
pub struct SurfacePoint<P> {
    pub params: P,
    pub mean_loss: f64,
    pub per_instance: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TuningResult<P> {
    pub best: P,
    pub best_mean_loss: f64,
    pub surface: Vec<SurfacePoint<P>>,
}

fn argmin_surface<P: Clone>(surface: &[SurfacePoint<P>]) -> (P, f64) {
    let mut best = 0;
    for (i, pt) in surface.iter().enumerate() {
        if pt.mean_loss < surface[best].mean_loss {
            best = i;
        }
    }
    (surface[best].params.clone(), surface[best].mean_loss)
}

fn instance_loss(t: &DecisionTree, d: &Dataset) -> Result<f64, TuneError> {
    Ok(match d.task() {
        Task::Classification => zero_one_loss(t, d)?,
        Task::Regression => mse_loss(t, d)?,
    })
}

/// Grid ERM over splitting-criterion parameters.
///
/// For every grid point, a tree is learned per instance (or per
/// cross-validation fold) and the losses are averaged; the argmin with
/// ties to the earliest grid point wins. The node function class is built
/// from whatever data the tree is trained on.
pub fn erm_grid_split(
    collection: &InstanceCollection,
    grid: &[CriterionParams],
    stop: StopRule,
    protocol: Protocol,
) -> Result<TuningResult<CriterionParams>, TuneError> {
    if grid.is_empty() {
        return Err(TuneError::EmptyGrid);
    }
    let task = collection.instances[0].task();
    for p in grid {
        if (task == Task::Regression) != p.is_regression() {
            return Err(TuneError::GridTaskMismatch(format!("{p:?}")));
        }
    }
    match protocol {
        Protocol::KFold { k, .. } => {
            let min_n = collection.instances.iter().map(|d| d.n()).min().unwrap();
            if k < 2 || k > min_n {
                return Err(TuneError::BadProtocol(format!(
                    "k={k} folds for a collection with smallest instance n={min_n}"
                )));
            }
        }
        Protocol::Holdout { fraction, .. } => {
            if !(fraction > 0.0 && fraction < 1.0) {
                return Err(TuneError::BadProtocol(format!(
                    "holdout fraction {fraction} outside (0, 1)"
                )));
            }
        }
        Protocol::TrainOnly => {}
    }
    let split = match protocol {
        Protocol::Holdout { fraction, seed } => Some(holdout_split(collection, fraction, seed)?),
        _ => None,
    };

    let surface: Vec<SurfacePoint<CriterionParams>> = grid
        .par_iter()
        .map(|params| -> Result<SurfacePoint<CriterionParams>, TuneError> {
            let mut per_instance = Vec::with_capacity(collection.len());
            for (i, d) in collection.instances.iter().enumerate() {
                let loss = match protocol {
                    Protocol::TrainOnly => {
                        let f = build_node_functions(d)?;
                        let t = top_down_learn(d, &f, params, stop)?;
                        instance_loss(&t, d)?
                    }
                    Protocol::KFold { k, seed } => {
                        let plan = make_folds(d, k, seed)?;
                        let mut total = 0.0;
                        for fold in 0..k {
                            let train = d.subset(&plan.train_indices(fold));
                            let test = d.subset(&plan.test_indices(fold));
                            let f = build_node_functions(&train)?;
                            let t = top_down_learn(&train, &f, params, stop)?;
                            total += instance_loss(&t, &test)?;
                        }
                        total / k as f64
                    }
                    Protocol::Holdout { .. } => {
                        let (train, eval) = split.as_ref().unwrap();
                        let f = build_node_functions(&train[i])?;
                        let t = top_down_learn(&train[i], &f, params, stop)?;
                        instance_loss(&t, &eval[i])?
                    }
                };
                per_instance.push(loss);
            }
            let mean_loss = per_instance.iter().sum::<f64>() / per_instance.len() as f64;
            Ok(SurfacePoint { params: params.clone(), mean_loss, per_instance })
        })
        .collect::<Result<_, _>>()?;

    let (best, best_mean_loss) = argmin_surface(&surface);
    Ok(TuningResult { best, best_mean_loss, surface })
}

/// One piece of the merged cost-complexity partition of `[0, inf)`.
#[derive(Debug, Clone)]
pub struct AlphaPiece {
    pub lo: f64,
    /// Exclusive upper end; infinity for the last piece.
    pub hi: f64,
    pub mean_loss: f64,
    pub mean_leaves: f64,
    pub per_instance: Vec<f64>,
}

/// Exact tuning output for the cost-complexity parameter.
#[derive(Debug, Clone)]
pub struct McppTuning {
    pub pieces: Vec<AlphaPiece>,
    pub best_index: usize,
    /// Representative parameter inside the best piece (midpoint; for the
    /// unbounded piece, twice the lower end plus one).
    pub best_alpha: f64,
    pub best_mean_loss: f64,
    /// Per-instance pruning paths, in instance order.
    pub paths: Vec<PruningPath>,
}

/// Exact ERM for the cost-complexity parameter over an instance collection:
/// one unpruned tree and one evaluation set per instance.
///
/// All per-instance breakpoints are merged into one sorted partition; on
/// each merged piece every instance's held-out loss is constant, so the
/// minimizing piece is found exactly, with no grid error.
pub fn erm_mccp_exact(
    trees: &[DecisionTree],
    eval: &[Dataset],
) -> Result<McppTuning, TuneError> {
    erm_mccp_regularized(trees, eval, 0.0).map(|(t, _)| t)
}

/// As [`erm_mccp_exact`] but scoring each piece by
/// `mean loss + eta * mean leaf count`. Returns the tuning plus the best
/// piece's regularized objective value.
pub fn erm_mccp_regularized(
    trees: &[DecisionTree],
    eval: &[Dataset],
    eta: f64,
) -> Result<(McppTuning, f64), TuneError> {
    if !eta.is_finite() || eta < 0.0 {
        return Err(TuneError::BadEta(eta));
    }
    if trees.is_empty() || trees.len() != eval.len() {
        return Err(TuneError::LengthMismatch {
            what: "tree",
            got: trees.len(),
            instances: eval.len(),
        });
    }
    let paths: Vec<PruningPath> =
        trees.iter().map(mccp_path).collect::<Result<_, _>>()?;
    // Held-out loss and leaf count of every path entry, per instance.
    let mut entry_stats: Vec<Vec<(f64, f64)>> = Vec::with_capacity(paths.len());
    for (path, d) in paths.iter().zip(eval) {
        let stats = path
            .entries()
            .iter()
            .map(|e| Ok((zero_one_loss(&e.tree, d)?, e.n_leaves as f64)))
            .collect::<Result<Vec<_>, TuneError>>()?;
        entry_stats.push(stats);
    }

    let mut breakpoints: Vec<f64> =
        paths.iter().flat_map(|p| p.entries().iter().map(|e| e.alpha)).collect();
    breakpoints.sort_by(|a, b| a.partial_cmp(b).unwrap());
    breakpoints.dedup();

    let mut pieces = Vec::with_capacity(breakpoints.len());
    for (j, &lo) in breakpoints.iter().enumerate() {
        let hi = breakpoints.get(j + 1).copied().unwrap_or(f64::INFINITY);
        let mut per_instance = Vec::with_capacity(paths.len());
        let mut leaves = 0.0;
        for (path, stats) in paths.iter().zip(&entry_stats) {
            let k = path.piece_index(lo).expect("merged breakpoint is nonnegative");
            per_instance.push(stats[k].0);
            leaves += stats[k].1;
        }
        let mean_loss = per_instance.iter().sum::<f64>() / per_instance.len() as f64;
        pieces.push(AlphaPiece {
            lo,
            hi,
            mean_loss,
            mean_leaves: leaves / paths.len() as f64,
            per_instance,
        });
    }

    let mut best_index = 0;
    let objective =
        |p: &AlphaPiece| -> f64 { p.mean_loss + eta * p.mean_leaves };
    for (j, p) in pieces.iter().enumerate() {
        if objective(p) < objective(&pieces[best_index]) {
            best_index = j;
        }
    }
    let best_alpha = if best_index + 1 < pieces.len() {
        (pieces[best_index].lo + pieces[best_index].hi) / 2.0
    } else {
        2.0 * pieces[best_index].lo + 1.0
    };
    let best_obj = objective(&pieces[best_index]);
    let best_mean_loss = pieces[best_index].mean_loss;
    Ok((McppTuning { pieces, best_index, best_alpha, best_mean_loss, paths }, best_obj))
}

/// Grid ERM over the pessimistic pruning parameters (c1, c2): prune each
/// instance's tree, score on its evaluation set, average.
pub fn erm_pessimistic(
    trees: &[DecisionTree],
    eval: &[Dataset],
    grid: &[(f64, f64)],
    n_attributes: usize,
) -> Result<TuningResult<(f64, f64)>, TuneError> {
    if grid.is_empty() {
        return Err(TuneError::EmptyGrid);
    }
    if trees.is_empty() || trees.len() != eval.len() {
        return Err(TuneError::LengthMismatch {
            what: "tree",
            got: trees.len(),
            instances: eval.len(),
        });
    }
    let surface: Vec<SurfacePoint<(f64, f64)>> = grid
        .par_iter()
        .map(|&(c1, c2)| -> Result<SurfacePoint<(f64, f64)>, TuneError> {
            let params = PessimisticParams::new(c1, c2)?;
            let mut per_instance = Vec::with_capacity(trees.len());
            for (t, d) in trees.iter().zip(eval) {
                let pruned = pessimistic_prune(t, &params, n_attributes)?;
                per_instance.push(zero_one_loss(&pruned, d)?);
            }
            let mean_loss = per_instance.iter().sum::<f64>() / per_instance.len() as f64;
            Ok(SurfacePoint { params: (c1, c2), mean_loss, per_instance })
        })
        .collect::<Result<_, _>>()?;
    let (best, best_mean_loss) = argmin_surface(&surface);
    Ok(TuningResult { best, best_mean_loss, surface })
}

/// Grid ERM over the Bayesian prior parameters (sigma, phi) by Monte-Carlo
/// expected loss with common random numbers: every grid point re-uses the
/// same randomness streams, so surfaces are seed-stable.
#[allow(clippy::too_many_arguments)]
pub fn erm_bayes(
    collection: &InstanceCollection,
    grid: &[(f64, f64)],
    t_cap: usize,
    dirichlet_a: &[f64],
    omega: usize,
    replicates: usize,
    seed: u64,
) -> Result<TuningResult<(f64, f64)>, TuneError> {
    if grid.is_empty() {
        return Err(TuneError::EmptyGrid);
    }
    let surface: Vec<SurfacePoint<(f64, f64)>> = grid
        .par_iter()
        .map(|&(sigma, phi)| -> Result<SurfacePoint<(f64, f64)>, TuneError> {
            let prior = BayesPrior::new(sigma, phi, t_cap, dirichlet_a.to_vec())?;
            let mut per_instance = Vec::with_capacity(collection.len());
            for (i, d) in collection.instances.iter().enumerate() {
                per_instance.push(instance_bayes_loss(d, i, &prior, omega, replicates, seed)?);
            }
            let mean_loss = per_instance.iter().sum::<f64>() / per_instance.len() as f64;
            Ok(SurfacePoint { params: (sigma, phi), mean_loss, per_instance })
        })
        .collect::<Result<_, _>>()?;
    let (best, best_mean_loss) = argmin_surface(&surface);
    Ok(TuningResult { best, best_mean_loss, surface })
}

/// Expected loss of one instance under the same stream layout as
/// [`bayes_expected_loss`], so the per-instance decomposition shares its
/// common random numbers.
fn instance_bayes_loss(
    d: &Dataset,
    instance_index: usize,
    prior: &BayesPrior,
    omega: usize,
    replicates: usize,
    seed: u64,
) -> Result<f64, TuneError> {
    use rand::{Rng, SeedableRng};
    let f = build_node_functions(d)?;
    let mut total = 0.0;
    for r in 0..replicates {
        let mut stream = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        stream.set_stream((instance_index * replicates + r) as u64);
        let z: Vec<f64> =
            (0..prior.t_cap.saturating_sub(1)).map(|_| stream.random::<f64>()).collect();
        let rand = crate::bayes::PriorRandomness { z, z_prime_seed: stream.random() };
        let result = crate::bayes::mh_search(d, &f, prior, &rand, omega)?;
        total += zero_one_loss(&result.last, d)?;
    }
    Ok(total / replicates as f64)
}

/// Joint split-and-prune tuning under the regularized objective
/// `loss + eta * leaves`: for each split-criterion grid point, grow a
/// size-`t` tree per training instance, compute the exact merged
/// cost-complexity partition, and score every piece; the optimum ranges
/// over grid points times pieces. Exact in the pruning parameter, grid in
/// the splitting parameters.
pub struct JointTuning {
    pub best_params: CriterionParams,
    pub best_alpha: f64,
    pub best_piece: (f64, f64),
    pub best_objective: f64,
    pub best_mean_loss: f64,
    pub best_mean_leaves: f64,
    /// Per grid point: the best piece objective at that point.
    pub surface: Vec<SurfacePoint<CriterionParams>>,
}

pub fn erm_joint_split_prune(
    train: &[Dataset],
    eval: &[Dataset],
    split_grid: &[CriterionParams],
    eta: f64,
    grow_size: usize,
) -> Result<JointTuning, TuneError> {
    if split_grid.is_empty() {
        return Err(TuneError::EmptyGrid);
    }
    if train.is_empty() || train.len() != eval.len() {
        return Err(TuneError::LengthMismatch {
            what: "evaluation set",
            got: eval.len(),
            instances: train.len(),
        });
    }
    if !eta.is_finite() || eta < 0.0 {
        return Err(TuneError::BadEta(eta));
    }

    struct PointOutcome {
        surface: SurfacePoint<CriterionParams>,
        tuning: McppTuning,
        objective: f64,
    }

    let outcomes: Vec<PointOutcome> = split_grid
        .par_iter()
        .map(|params| -> Result<PointOutcome, TuneError> {
            let trees: Vec<DecisionTree> = train
                .iter()
                .map(|d| {
                    let f = build_node_functions(d)?;
                    Ok(top_down_learn(d, &f, params, StopRule::Size(grow_size))?)
                })
                .collect::<Result<_, TuneError>>()?;
            let (tuning, objective) = erm_mccp_regularized(&trees, eval, eta)?;
            let best = &tuning.pieces[tuning.best_index];
            Ok(PointOutcome {
                surface: SurfacePoint {
                    params: params.clone(),
                    mean_loss: best.mean_loss,
                    per_instance: best.per_instance.clone(),
                },
                tuning,
                objective,
            })
        })
        .collect::<Result<_, _>>()?;

    let mut best = 0;
    for (i, o) in outcomes.iter().enumerate() {
        if o.objective < outcomes[best].objective {
            best = i;
        }
    }
    let chosen = &outcomes[best];
    let piece = &chosen.tuning.pieces[chosen.tuning.best_index];
    Ok(JointTuning {
        best_params: chosen.surface.params.clone(),
        best_alpha: chosen.tuning.best_alpha,
        best_piece: (piece.lo, piece.hi),
        best_objective: chosen.objective,
        best_mean_loss: piece.mean_loss,
        best_mean_leaves: piece.mean_leaves,
        surface: outcomes.iter().map(|o| o.surface.clone()).collect(),
    })
}

/// One row of the accuracy-explainability frontier.
#[derive(Debug, Clone)]
pub struct FrontierRow {
    pub eta: f64,
    pub alpha: f64,
    pub alpha_lo: f64,
    pub alpha_hi: f64,
    pub accuracy: f64,
    pub mean_leaves: f64,
}

/// Sweep the complexity coefficient for a fixed splitting criterion: trees
/// and pruning paths are grown once, then each eta selects its optimal
/// piece of the shared partition.
pub fn frontier_sweep(
    train: &[Dataset],
    eval: &[Dataset],
    params: &CriterionParams,
    grow_size: usize,
    etas: &[f64],
) -> Result<Vec<FrontierRow>, TuneError> {
    if etas.is_empty() {
        return Err(TuneError::EmptyGrid);
    }
    if train.is_empty() || train.len() != eval.len() {
        return Err(TuneError::LengthMismatch {
            what: "evaluation set",
            got: eval.len(),
            instances: train.len(),
        });
    }
    let trees: Vec<DecisionTree> = train
        .iter()
        .map(|d| {
            let f = build_node_functions(d)?;
            Ok(top_down_learn(d, &f, params, StopRule::Size(grow_size))?)
        })
        .collect::<Result<_, TuneError>>()?;
    let base = erm_mccp_exact(&trees, eval)?;

    let mut rows = Vec::with_capacity(etas.len());
    for &eta in etas {
        if !eta.is_finite() || eta < 0.0 {
            return Err(TuneError::BadEta(eta));
        }
        let mut best = 0;
        let objective = |p: &AlphaPiece| p.mean_loss + eta * p.mean_leaves;
        for (j, p) in base.pieces.iter().enumerate() {
            if objective(p) < objective(&base.pieces[best]) {
                best = j;
            }
        }
        let p = &base.pieces[best];
        let alpha = if best + 1 < base.pieces.len() {
            (p.lo + p.hi) / 2.0
        } else {
            2.0 * p.lo + 1.0
        };
        rows.push(FrontierRow {
            eta,
            alpha,
            alpha_lo: p.lo,
            alpha_hi: p.hi,
            accuracy: 1.0 - p.mean_loss,
            mean_leaves: p.mean_leaves,
        });
    }
    Ok(rows)
}

/// The default splitting grid: alpha in {0.05, 0.15, ..., 3.95} crossed
/// with beta in 1..=beta_max, in lexicographic (alpha, beta) order so that
/// argmin ties resolve to the smallest tuple.
pub fn default_split_grid(beta_max: u32) -> Vec<CriterionParams> {
    let mut grid = Vec::with_capacity(40 * beta_max as usize);
    for i in 0..40 {
        let alpha = 0.05 + 0.1 * i as f64;
        for beta in 1..=beta_max {
            grid.push(CriterionParams::tsallis(alpha, beta));
        }
    }
    grid
}

/// Split every instance into train/eval parts with the given held-out
/// fraction (seeded, unstratified). Returns (train, eval) in instance
/// order.
pub fn holdout_split(
    collection: &InstanceCollection,
    holdout_fraction: f64,
    seed: u64,
) -> Result<(Vec<Dataset>, Vec<Dataset>), TuneError> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    if !(0.0..1.0).contains(&holdout_fraction) || holdout_fraction <= 0.0 {
        return Err(TuneError::BadProtocol(format!(
            "holdout fraction {holdout_fraction} outside (0, 1)"
        )));
    }
    let mut train = Vec::with_capacity(collection.len());
    let mut eval = Vec::with_capacity(collection.len());
    for (i, d) in collection.instances.iter().enumerate() {
        if d.n() < 2 {
            return Err(TuneError::BadProtocol(format!(
                "instance {i} has {} example(s), cannot hold any out",
                d.n()
            )));
        }
        let n_test = ((d.n() as f64 * holdout_fraction).round() as usize).clamp(1, d.n() - 1);
        let mut order: Vec<usize> = (0..d.n()).collect();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        order.shuffle(&mut rng);
        eval.push(d.subset(&order[..n_test]));
        train.push(d.subset(&order[n_test..]));
    }
    Ok((train, eval))
}
