//! Cross-checks the tree fitter against an independent brute-force learner.
//!
//! The oracle below shares no code with the library: it recomputes squared
//! error from scratch via sum of squared deviations from the mean, searches
//! every midpoint threshold by full partition enumeration, and grows leaves
//! greedily with the same documented tie-breaking rules (highest gain, then
//! lowest feature index, then lowest threshold, then earliest-created leaf).
//! Responses are drawn from a continuous distribution so that distinct
//! candidate splits never tie by accident; exact ties are exercised through
//! duplicated feature columns, where both implementations must prefer the
//! lower feature index.

use mcboost::{fit_tree, FeatureColumns, Matrix, TreeConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn mean(ys: &[f64]) -> f64 {
    ys.iter().sum::<f64>() / ys.len() as f64
}

fn sse(ys: &[f64]) -> f64 {
    let m = mean(ys);
    ys.iter().map(|y| (y - m) * (y - m)).sum()
}

struct OracleLeaf {
    id: usize,
    indices: Vec<usize>,
}

struct OracleCandidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

/// Exhaustive best split of one index set: every midpoint of consecutive
/// distinct values on every feature, scored by the drop in total SSE.
#[allow(clippy::needless_range_loop)] // features index a column of row-major data
fn oracle_best_split(
    rows: &[Vec<f64>],
    ys: &[f64],
    indices: &[usize],
    min_leaf: usize,
) -> Option<OracleCandidate> {
    if indices.len() < 2 * min_leaf {
        return None;
    }
    let parent_sse = sse(&indices.iter().map(|&i| ys[i]).collect::<Vec<_>>());
    let d = rows[0].len();
    let mut best: Option<OracleCandidate> = None;
    for f in 0..d {
        let mut values: Vec<f64> = indices.iter().map(|&i| rows[i][f]).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for w in values.windows(2) {
            let threshold = (w[0] + w[1]) / 2.0;
            let (mut left, mut right) = (Vec::new(), Vec::new());
            for &i in indices {
                if rows[i][f] <= threshold {
                    left.push(ys[i]);
                } else {
                    right.push(ys[i]);
                }
            }
            if left.len() < min_leaf || right.len() < min_leaf {
                continue;
            }
            let gain = parent_sse - sse(&left) - sse(&right);
            if gain > 0.0 && best.as_ref().is_none_or(|b| gain > b.gain) {
                best = Some(OracleCandidate {
                    gain,
                    feature: f,
                    threshold,
                });
            }
        }
    }
    best
}

/// Greedy best-first growth to `max_leaves` leaves, returning the final
/// index sets in leaf-creation order.
fn oracle_tree(
    rows: &[Vec<f64>],
    ys: &[f64],
    max_leaves: usize,
    min_leaf: usize,
) -> Vec<Vec<usize>> {
    let mut next_id = 1;
    let mut leaves = vec![OracleLeaf {
        id: 0,
        indices: (0..rows.len()).collect(),
    }];
    while leaves.len() < max_leaves {
        // best candidate over leaves, scanned in creation order so that the
        // earliest leaf wins exact gain ties
        let mut pick: Option<(usize, OracleCandidate)> = None;
        for (pos, leaf) in leaves.iter().enumerate() {
            if let Some(c) = oracle_best_split(rows, ys, &leaf.indices, min_leaf) {
                if pick.as_ref().is_none_or(|(_, b)| c.gain > b.gain) {
                    pick = Some((pos, c));
                }
            }
        }
        let Some((pos, c)) = pick else { break };
        let parent = leaves.remove(pos);
        let (mut left, mut right) = (Vec::new(), Vec::new());
        for &i in &parent.indices {
            if rows[i][c.feature] <= c.threshold {
                left.push(i);
            } else {
                right.push(i);
            }
        }
        leaves.push(OracleLeaf {
            id: next_id,
            indices: left,
        });
        leaves.push(OracleLeaf {
            id: next_id + 1,
            indices: right,
        });
        next_id += 2;
        leaves.sort_by_key(|l| l.id);
    }
    leaves.into_iter().map(|l| l.indices).collect()
}

fn to_matrix(rows: &[Vec<f64>]) -> Matrix {
    let n = rows.len();
    let d = rows[0].len();
    let mut flat = Vec::with_capacity(n * d);
    for row in rows {
        flat.extend_from_slice(row);
    }
    Matrix::from_vec(flat, n, d)
}

/// One random dataset: integer-grid features (tie-rich), continuous
/// responses (tie-free gains), optionally a duplicated column.
fn random_case(seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(6..=48);
    let d = rng.gen_range(1..=5);
    let duplicate_column = seed.is_multiple_of(4);
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let mut row: Vec<f64> = (0..d).map(|_| rng.gen_range(0..=6) as f64).collect();
        if duplicate_column {
            row.push(row[0]);
        }
        rows.push(row);
    }
    let ys: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    (rows, ys)
}

#[test]
fn fitter_matches_brute_force_oracle() {
    for seed in 0..40u64 {
        let (rows, ys) = random_case(seed);
        let max_leaves = [2, 3, 5, 8][(seed % 4) as usize];
        let min_leaf = [1, 1, 2, 3][(seed % 4) as usize];
        let config = TreeConfig {
            max_leaves,
            min_samples_leaf: min_leaf,
        };

        let matrix = to_matrix(&rows);
        let fc = FeatureColumns::from_matrix(&matrix);
        let fitted = fit_tree(&fc, &ys, &config);

        let oracle_leaves = oracle_tree(&rows, &ys, max_leaves, min_leaf);

        let fitted_members = fitted.members();
        assert_eq!(
            fitted_members.len(),
            oracle_leaves.len(),
            "leaf count differs on seed {seed}"
        );
        let mut oracle_sse = 0.0;
        for ((_, fitted_idx), oracle_idx) in fitted_members.iter().zip(&oracle_leaves) {
            assert_eq!(fitted_idx, oracle_idx, "partition differs on seed {seed}");
            let member_ys: Vec<f64> = oracle_idx.iter().map(|&i| ys[i]).collect();
            let leaf_mean = mean(&member_ys);
            for &i in oracle_idx {
                let predicted = fitted.tree.predict(&rows[i]);
                assert!(
                    (predicted - leaf_mean).abs() <= 1e-9 * leaf_mean.abs().max(1.0),
                    "leaf value differs on seed {seed}: {predicted} vs {leaf_mean}"
                );
            }
            oracle_sse += sse(&member_ys);
        }
        // total squared error of the fitted partition, recomputed from raw data
        let mut total = 0.0;
        for (_, idx) in &fitted_members {
            let member_ys: Vec<f64> = idx.iter().map(|&i| ys[i]).collect();
            total += sse(&member_ys);
        }
        assert!(
            (total - oracle_sse).abs() <= 1e-9 * oracle_sse.max(1.0),
            "total SSE differs on seed {seed}: {total} vs {oracle_sse}"
        );
    }
}

#[test]
fn duplicated_columns_split_on_lowest_feature() {
    // column 1 is an exact copy of column 0: every split gain ties exactly,
    // so the split must cite feature 0
    let rows: Vec<Vec<f64>> = vec![
        vec![0.0, 0.0],
        vec![1.0, 1.0],
        vec![2.0, 2.0],
        vec![3.0, 3.0],
    ];
    let ys = vec![-1.0, -0.75, 1.25, 1.5];
    let fc = FeatureColumns::from_matrix(&to_matrix(&rows));
    let fitted = fit_tree(
        &fc,
        &ys,
        &TreeConfig {
            max_leaves: 2,
            min_samples_leaf: 1,
        },
    );
    match &fitted.tree.nodes()[0] {
        mcboost::Node::Split {
            feature, threshold, ..
        } => {
            assert_eq!(*feature, 0);
            assert_eq!(*threshold, 1.5);
        }
        other => panic!("expected a split at the root, got {other:?}"),
    }
}

#[test]
fn step_function_recovers_exact_structure() {
    // x = [1,2,3,4], y = [1,1,3,3]: one split at 2.5, leaf means 1 and 3
    let rows: Vec<Vec<f64>> = vec![vec![1.0], vec![2.0], vec![3.0], vec![4.0]];
    let ys = vec![1.0, 1.0, 3.0, 3.0];
    let fc = FeatureColumns::from_matrix(&to_matrix(&rows));
    let fitted = fit_tree(
        &fc,
        &ys,
        &TreeConfig {
            max_leaves: 2,
            min_samples_leaf: 1,
        },
    );
    assert_eq!(fitted.tree.num_nodes(), 3);
    match &fitted.tree.nodes()[0] {
        mcboost::Node::Split {
            feature: 0,
            threshold,
            left: 1,
            right: 2,
        } => {
            assert_eq!(*threshold, 2.5);
        }
        other => panic!("unexpected root {other:?}"),
    }
    assert_eq!(fitted.tree.predict(&[1.5]), 1.0);
    assert_eq!(fitted.tree.predict(&[3.7]), 3.0);
}

#[test]
fn constant_response_stays_a_stump() {
    let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
    let ys = vec![0.5; 10];
    let fc = FeatureColumns::from_matrix(&to_matrix(&rows));
    let fitted = fit_tree(
        &fc,
        &ys,
        &TreeConfig {
            max_leaves: 5,
            min_samples_leaf: 1,
        },
    );
    assert_eq!(fitted.tree.num_nodes(), 1);
    assert_eq!(fitted.tree.predict(&[3.0]), 0.5);
}
