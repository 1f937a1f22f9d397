//! Least-squares regression trees grown best-first to a fixed leaf budget.
//!
//! The learner repeatedly splits the leaf whose best admissible split gives
//! the largest total squared-error reduction until the tree has `max_leaves`
//! terminal nodes or no admissible split remains. Split search is exact:
//! every boundary between consecutive distinct sorted values of every
//! feature is scored, and the threshold is placed at the midpoint of the
//! two values. An admissible split strictly reduces squared error and
//! leaves at least `min_samples_leaf` samples on each side.
//!
//! Tie-breaking is fully specified so fits are bit-reproducible: among
//! equal-gain splits the lowest feature index wins, then the lowest
//! threshold; among equal-gain leaves the lowest node id (creation order)
//! wins. Routing sends `feature <= threshold` to the left child.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::matrix::Matrix;

/// Leaf budget and minimum leaf occupancy for one tree fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeConfig {
    /// Number of terminal nodes to grow toward (J). Must be >= 2.
    pub max_leaves: usize,
    /// Minimum samples each side of a split must keep. Must be >= 1.
    pub min_samples_leaf: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            max_leaves: 2,
            min_samples_leaf: 1,
        }
    }
}

/// One node of a fitted tree, stored in an arena indexed by node id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Split {
        #[serde(rename = "feature_index")]
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        #[serde(rename = "leaf_value")]
        value: f64,
    },
}

/// Binary regression tree. The root is node 0; node ids are creation order,
/// so a lower leaf id means the leaf was produced earlier during growth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    /// Routes a sample to its unique terminal node and returns the node id.
    pub fn assign_region(&self, sample: &[f64]) -> usize {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    id = if sample[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    };
                }
                Node::Leaf { .. } => return id,
            }
        }
    }

    /// Value stored at a leaf node id. Panics if the id is not a leaf.
    pub fn leaf_value(&self, id: usize) -> f64 {
        match &self.nodes[id] {
            Node::Leaf { value } => *value,
            Node::Split { .. } => panic!("node {id} is not a leaf"),
        }
    }

    pub fn set_leaf_value(&mut self, id: usize, value: f64) {
        match &mut self.nodes[id] {
            Node::Leaf { value: v } => *v = value,
            Node::Split { .. } => panic!("node {id} is not a leaf"),
        }
    }

    /// Leaf value reached by routing the sample.
    pub fn predict(&self, sample: &[f64]) -> f64 {
        self.leaf_value(self.assign_region(sample))
    }

    /// Largest feature index referenced by any split, if the tree splits.
    pub fn max_feature_index(&self) -> Option<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf { .. } => None,
            })
            .max()
    }
}

/// Feature matrix pre-sorted once per column so that every tree fit walks
/// cached sort orders instead of re-sorting. Building this is `O(D N log N)`;
/// each subsequent split search is `O(D N)`.
pub struct FeatureColumns {
    n: usize,
    d: usize,
    /// column-major values: column f occupies `cols[f*n .. (f+1)*n]`
    cols: Vec<f64>,
    /// per feature, sample indices sorted ascending by value (ties by index)
    order: Vec<u32>,
}

impl FeatureColumns {
    pub fn from_dataset(dataset: &Dataset) -> Self {
        Self::from_matrix(dataset.features())
    }

    /// `rows` of the matrix are samples, columns are features.
    pub fn from_matrix(features: &Matrix) -> Self {
        let n = features.rows();
        let d = features.cols();
        assert!(n >= 1 && d >= 1 && n <= u32::MAX as usize);
        let mut cols = vec![0.0; n * d];
        for i in 0..n {
            let row = features.row(i);
            for f in 0..d {
                cols[f * n + i] = row[f];
            }
        }
        let mut order = Vec::with_capacity(n * d);
        for f in 0..d {
            let col = &cols[f * n..(f + 1) * n];
            let mut idx: Vec<u32> = (0..n as u32).collect();
            idx.sort_unstable_by(|&a, &b| {
                col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b))
            });
            order.extend_from_slice(&idx);
        }
        FeatureColumns { n, d, cols, order }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    fn col(&self, f: usize) -> &[f64] {
        &self.cols[f * self.n..(f + 1) * self.n]
    }

    #[inline]
    fn ord(&self, f: usize) -> &[u32] {
        &self.order[f * self.n..(f + 1) * self.n]
    }
}

/// A fitted tree together with the terminal region of every training sample.
pub struct FittedTree {
    pub tree: RegressionTree,
    /// node id of the leaf each training sample reached (length N)
    pub leaf_assignment: Vec<u32>,
    /// node ids that are leaves, ascending
    pub leaf_nodes: Vec<usize>,
}

impl FittedTree {
    /// Membership lists grouped per leaf, in `leaf_nodes` order.
    pub fn members(&self) -> Vec<(usize, Vec<usize>)> {
        let mut groups: Vec<(usize, Vec<usize>)> =
            self.leaf_nodes.iter().map(|&id| (id, Vec::new())).collect();
        for (i, &node) in self.leaf_assignment.iter().enumerate() {
            let slot = groups
                .iter_mut()
                .find(|(id, _)| *id == node as usize)
                .unwrap();
            slot.1.push(i);
        }
        groups
    }
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

/// Best admissible split of one leaf, or `None`. Scans features ascending
/// and thresholds ascending with strict improvement, which realizes the
/// documented tie-breaking.
fn best_split(
    fc: &FeatureColumns,
    responses: &[f64],
    node_of: &[u32],
    leaf: u32,
    min_leaf: usize,
) -> Option<Candidate> {
    // Node totals; a leaf whose responses are all equal cannot be improved.
    let mut n_node = 0usize;
    let mut s_node = 0.0;
    let mut r_min = f64::INFINITY;
    let mut r_max = f64::NEG_INFINITY;
    for i in 0..fc.n {
        if node_of[i] == leaf {
            let r = responses[i];
            n_node += 1;
            s_node += r;
            r_min = r_min.min(r);
            r_max = r_max.max(r);
        }
    }
    if n_node < 2 * min_leaf || r_min == r_max {
        return None;
    }
    let parent_term = s_node * s_node / n_node as f64;

    let mut best: Option<Candidate> = None;
    let mut best_gain = 0.0;
    for f in 0..fc.d {
        let col = fc.col(f);
        let mut n_left = 0usize;
        let mut s_left = 0.0;
        let mut prev = f64::NAN;
        let mut started = false;
        for &u in fc.ord(f) {
            let i = u as usize;
            if node_of[i] != leaf {
                continue;
            }
            let v = col[i];
            if started && v != prev && n_left >= min_leaf && n_node - n_left >= min_leaf {
                let n_l = n_left as f64;
                let n_r = (n_node - n_left) as f64;
                let s_r = s_node - s_left;
                let gain = s_left * s_left / n_l + s_r * s_r / n_r - parent_term;
                if gain > best_gain {
                    best_gain = gain;
                    best = Some(Candidate {
                        gain,
                        feature: f,
                        threshold: (prev + v) / 2.0,
                    });
                }
            }
            n_left += 1;
            s_left += responses[i];
            prev = v;
            started = true;
        }
    }
    best
}

/// Fits a least-squares regression tree with at most `max_leaves` terminal
/// nodes to the responses. Each leaf's provisional value is the mean
/// response of its members; boosting overwrites it with a Newton step.
/// Degenerate inputs (constant responses, nothing admissible) yield a
/// single-leaf tree.
pub fn fit_tree(fc: &FeatureColumns, responses: &[f64], config: &TreeConfig) -> FittedTree {
    assert_eq!(responses.len(), fc.n, "responses must align with samples");
    assert!(config.max_leaves >= 2, "max_leaves must be >= 2");
    assert!(
        config.min_samples_leaf >= 1,
        "min_samples_leaf must be >= 1"
    );
    debug_assert!(responses.iter().all(|r| r.is_finite()));

    let mut nodes = vec![Node::Leaf { value: 0.0 }];
    let mut node_of = vec![0u32; fc.n];
    let mut candidates: Vec<Option<Candidate>> = vec![best_split(
        fc,
        responses,
        &node_of,
        0,
        config.min_samples_leaf,
    )];
    let mut n_leaves = 1;

    while n_leaves < config.max_leaves {
        // leaf with the largest gain; strict comparison keeps the lowest id on ties
        let mut pick: Option<(usize, Candidate)> = None;
        for (id, cand) in candidates.iter().enumerate() {
            if let Some(c) = cand {
                if pick.is_none() || c.gain > pick.unwrap().1.gain {
                    pick = Some((id, *c));
                }
            }
        }
        let Some((id, cand)) = pick else { break };
        let left = nodes.len();
        let right = left + 1;
        nodes.push(Node::Leaf { value: 0.0 });
        nodes.push(Node::Leaf { value: 0.0 });
        nodes[id] = Node::Split {
            feature: cand.feature,
            threshold: cand.threshold,
            left,
            right,
        };
        let col = fc.col(cand.feature);
        for i in 0..fc.n {
            if node_of[i] == id as u32 {
                node_of[i] = if col[i] <= cand.threshold {
                    left as u32
                } else {
                    right as u32
                };
            }
        }
        candidates[id] = None;
        candidates.push(best_split(
            fc,
            responses,
            &node_of,
            left as u32,
            config.min_samples_leaf,
        ));
        candidates.push(best_split(
            fc,
            responses,
            &node_of,
            right as u32,
            config.min_samples_leaf,
        ));
        n_leaves += 1;
    }

    // provisional leaf values: mean response of the members
    let mut sums = vec![0.0; nodes.len()];
    let mut counts = vec![0usize; nodes.len()];
    for (i, &node) in node_of.iter().enumerate() {
        sums[node as usize] += responses[i];
        counts[node as usize] += 1;
    }
    let mut leaf_nodes = Vec::with_capacity(n_leaves);
    for (id, node) in nodes.iter_mut().enumerate() {
        if let Node::Leaf { value } = node {
            debug_assert!(counts[id] > 0, "every leaf keeps at least one sample");
            *value = sums[id] / counts[id] as f64;
            leaf_nodes.push(id);
        }
    }
    FittedTree {
        tree: RegressionTree { nodes },
        leaf_assignment: node_of,
        leaf_nodes,
    }
}
