//! Extremely randomized regression trees.
//!
//! Each node draws a random subset of features, one uniform threshold per
//! feature inside the node's value range, and keeps the candidate with the
//! lowest weighted child variance. Trees grow until leaves are pure or too
//! small to split.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{CircuitFeatures, FEATURE_NAMES, FEATURE_SET_VERSION};
use crate::error::{invalid, Result};

/// Identifies model files written by [`TreeEnsemble::to_json`].
pub const MODEL_FORMAT: &str = "qcluster-extra-trees";
pub const MODEL_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtraTreesParams {
    pub n_trees: usize,
    /// Candidate features per split; `None` means `max(1, D / 3)`.
    pub max_features: Option<usize>,
    pub min_samples_leaf: usize,
    pub seed: u64,
}

impl Default for ExtraTreesParams {
    fn default() -> Self {
        Self { n_trees: 100, max_features: None, min_samples_leaf: 1, seed: 0 }
    }
}

impl ExtraTreesParams {
    fn features_per_split(&self, dim: usize) -> usize {
        self.max_features.unwrap_or((dim / 3).max(1)).clamp(1, dim)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        /// Decrease in summed squared error achieved by this split.
        gain: f64,
    },
    Leaf {
        value: f64,
        samples: usize,
    },
}

/// Nodes in creation order; node 0 is the root. Rows with
/// `x[feature] <= threshold` go left.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value, .. } => return *value,
                Node::Split { feature, threshold, left, right, .. } => {
                    i = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }
}

/// A fitted ensemble together with everything needed to reuse it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble {
    pub format: String,
    pub version: u32,
    pub feature_set_version: u32,
    pub features: Vec<String>,
    pub params: ExtraTreesParams,
    pub trees: Vec<Tree>,
}

/// Sum, sum of squares and count of a label subset.
#[derive(Clone, Copy, Default)]
struct Moments {
    n: f64,
    s: f64,
    ss: f64,
}

impl Moments {
    fn push(&mut self, y: f64) {
        self.n += 1.0;
        self.s += y;
        self.ss += y * y;
    }

    /// Summed squared deviation from the mean.
    fn sse(&self) -> f64 {
        if self.n == 0.0 {
            0.0
        } else {
            (self.ss - self.s * self.s / self.n).max(0.0)
        }
    }
}

fn grow_tree(x: &[Vec<f64>], y: &[f64], params: &ExtraTreesParams, rng: &mut ChaCha8Rng) -> Tree {
    let dim = x[0].len();
    let k = params.features_per_split(dim);
    let min_leaf = params.min_samples_leaf.max(1);
    let mut nodes = Vec::new();
    let mut order: Vec<usize> = (0..dim).collect();
    // (node slot, sample indices)
    let mut stack: Vec<(usize, Vec<usize>)> = vec![(0, (0..x.len()).collect())];
    nodes.push(Node::Leaf { value: 0.0, samples: 0 });

    while let Some((slot, idx)) = stack.pop() {
        let mut all = Moments::default();
        for &i in &idx {
            all.push(y[i]);
        }
        let mean = all.s / all.n;
        let leaf = Node::Leaf { value: mean, samples: idx.len() };
        let parent_sse = all.sse();
        if idx.len() < 2 * min_leaf || parent_sse <= 1e-15 * all.n.max(1.0) * (1.0 + mean * mean) {
            nodes[slot] = leaf;
            continue;
        }

        // Features are visited in random order until `k` non-constant ones
        // have been tried.
        order.shuffle(rng);
        let mut tried = 0;
        let mut best: Option<(usize, f64, f64)> = None;
        for &f in &order {
            if tried == k {
                break;
            }
            let (lo, hi) = idx.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                (lo.min(x[i][f]), hi.max(x[i][f]))
            });
            if !(hi > lo) {
                continue;
            }
            tried += 1;
            let t = rng.random_range(lo..hi);
            let (mut l, mut r) = (Moments::default(), Moments::default());
            for &i in &idx {
                if x[i][f] <= t {
                    l.push(y[i]);
                } else {
                    r.push(y[i]);
                }
            }
            if (l.n as usize) < min_leaf || (r.n as usize) < min_leaf {
                continue;
            }
            let sse = l.sse() + r.sse();
            if best.is_none_or(|(_, _, b)| sse < b) {
                best = Some((f, t, sse));
            }
        }

        let Some((feature, threshold, sse)) = best else {
            nodes[slot] = leaf;
            continue;
        };
        let (li, ri): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| x[i][feature] <= threshold);
        let left = nodes.len();
        nodes.push(Node::Leaf { value: 0.0, samples: 0 });
        let right = nodes.len();
        nodes.push(Node::Leaf { value: 0.0, samples: 0 });
        nodes[slot] = Node::Split { feature, threshold, left, right, gain: (parent_sse - sse).max(0.0) };
        stack.push((right, ri));
        stack.push((left, li));
    }
    Tree { nodes }
}

impl TreeEnsemble {
    /// Fits on raw rows. `feature_names` fixes the column order that later
    /// predictions must follow.
    pub fn fit_rows(feature_names: &[&str], x: &[Vec<f64>], y: &[f64], params: &ExtraTreesParams) -> Result<Self> {
        if x.is_empty() {
            return Err(invalid("training set is empty"));
        }
        if x.len() != y.len() {
            return Err(invalid(format!("{} rows but {} labels", x.len(), y.len())));
        }
        if params.n_trees == 0 {
            return Err(invalid("n_trees must be at least 1"));
        }
        let dim = feature_names.len();
        if dim == 0 {
            return Err(invalid("at least one feature is required"));
        }
        if let Some(r) = x.iter().find(|r| r.len() != dim) {
            return Err(invalid(format!("row has {} values, expected {dim}", r.len())));
        }
        if x.iter().flatten().any(|v| !v.is_finite()) {
            return Err(invalid("feature values must be finite"));
        }
        if let Some(v) = y.iter().find(|v| !(0.0..=0.5).contains(*v)) {
            return Err(invalid(format!("labels must be in [0, 0.5], got {v}")));
        }
        let trees = (0..params.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
                rng.set_stream(t as u64);
                grow_tree(x, y, params, &mut rng)
            })
            .collect();
        Ok(Self {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            feature_set_version: FEATURE_SET_VERSION,
            features: feature_names.iter().map(|s| s.to_string()).collect(),
            params: *params,
            trees,
        })
    }

    pub fn fit(data: &[(CircuitFeatures, f64)], params: &ExtraTreesParams) -> Result<Self> {
        let x: Vec<Vec<f64>> = data.iter().map(|(f, _)| f.to_row().to_vec()).collect();
        let y: Vec<f64> = data.iter().map(|(_, l)| *l).collect();
        Self::fit_rows(&FEATURE_NAMES, &x, &y, params)
    }

    pub fn dim(&self) -> usize {
        self.features.len()
    }

    /// Mean of the tree outputs, clamped to `[0, 0.5]`.
    pub fn predict_row(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.dim() {
            return Err(invalid(format!("model expects {} features, got {}", self.dim(), row.len())));
        }
        let sum: f64 = self.trees.iter().map(|t| t.predict(row)).sum();
        Ok((sum / self.trees.len() as f64).clamp(0.0, 0.5))
    }

    pub fn predict(&self, features: &CircuitFeatures) -> Result<f64> {
        self.check_feature_names()?;
        self.predict_row(&features.to_row())
    }

    fn check_feature_names(&self) -> Result<()> {
        if self.features.iter().map(String::as_str).ne(FEATURE_NAMES.iter().copied()) {
            return Err(invalid(format!(
                "model feature order {:?} does not match {:?}",
                self.features, FEATURE_NAMES
            )));
        }
        Ok(())
    }

    /// Mean impurity decrease per feature. Each tree's gains are normalized to
    /// sum to 1 before averaging; trees without splits contribute nothing, and
    /// an ensemble without any split reports all zeros.
    pub fn feature_importance(&self) -> Vec<(String, f64)> {
        let mut acc = vec![0.0; self.dim()];
        for tree in &self.trees {
            let mut g = vec![0.0; self.dim()];
            for node in &tree.nodes {
                if let Node::Split { feature, gain, .. } = node {
                    g[*feature] += gain;
                }
            }
            let s: f64 = g.iter().sum();
            if s > 0.0 {
                for (a, v) in acc.iter_mut().zip(g) {
                    *a += v / s;
                }
            }
        }
        let s: f64 = acc.iter().sum();
        if s > 0.0 {
            acc.iter_mut().for_each(|a| *a /= s);
        }
        self.features.iter().cloned().zip(acc).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(text)?;
        if model.format != MODEL_FORMAT {
            return Err(invalid(format!("not a model file: format {:?}", model.format)));
        }
        if model.version != MODEL_VERSION {
            return Err(invalid(format!("unsupported model version {}", model.version)));
        }
        if model.trees.is_empty() {
            return Err(invalid("model has no trees"));
        }
        for tree in &model.trees {
            let n = tree.nodes.len();
            for node in &tree.nodes {
                if let Node::Split { feature, left, right, .. } = node {
                    if *feature >= model.dim() || *left >= n || *right >= n {
                        return Err(invalid("model tree references a missing node or feature"));
                    }
                }
            }
        }
        Ok(model)
    }
}

/// Mean test-fold scores.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvScore {
    pub mse: f64,
    pub r2: f64,
    pub folds: usize,
}

/// Shuffled k-fold cross-validation; the shuffle is seeded by `seed`, and
/// each fold's rows are never part of its own training set.
pub fn cross_validate(
    feature_names: &[&str],
    x: &[Vec<f64>],
    y: &[f64],
    folds: usize,
    params: &ExtraTreesParams,
    seed: u64,
) -> Result<CvScore> {
    if folds < 2 {
        return Err(invalid("at least 2 folds are required"));
    }
    if x.len() < folds {
        return Err(invalid(format!("{folds} folds need at least {folds} samples, got {}", x.len())));
    }
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let (mut mse_sum, mut r2_sum) = (0.0, 0.0);
    for f in 0..folds {
        let lo = f * x.len() / folds;
        let hi = (f + 1) * x.len() / folds;
        let test = &idx[lo..hi];
        let train: Vec<usize> = idx[..lo].iter().chain(&idx[hi..]).copied().collect();
        let tx: Vec<Vec<f64>> = train.iter().map(|&i| x[i].clone()).collect();
        let ty: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let model = TreeEnsemble::fit_rows(feature_names, &tx, &ty, params)?;

        let truth: Vec<f64> = test.iter().map(|&i| y[i]).collect();
        let pred = test.iter().map(|&i| model.predict_row(&x[i])).collect::<Result<Vec<_>>>()?;
        let n = truth.len() as f64;
        let sse: f64 = truth.iter().zip(&pred).map(|(t, p)| (t - p).powi(2)).sum();
        let mean = truth.iter().sum::<f64>() / n;
        let sst: f64 = truth.iter().map(|t| (t - mean).powi(2)).sum();
        mse_sum += sse / n;
        r2_sum += if sst > 0.0 {
            1.0 - sse / sst
        } else if sse == 0.0 {
            1.0
        } else {
            0.0
        };
    }
    Ok(CvScore { mse: mse_sum / folds as f64, r2: r2_sum / folds as f64, folds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn grid(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| rng.random::<f64>()).collect()).collect();
        let y = x.iter().map(|r| 0.4 * r[0]).collect();
        (x, y)
    }

    const NAMES: [&str; 3] = ["a", "b", "c"];

    #[test]
    fn single_sample_predicts_its_label() {
        let m = TreeEnsemble::fit_rows(&["a"], &[vec![3.0]], &[0.2], &ExtraTreesParams::default()).unwrap();
        assert!((m.predict_row(&[-100.0]).unwrap() - 0.2).abs() < 1e-12);
        assert!((m.predict_row(&[100.0]).unwrap() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn constant_label_and_constant_features() {
        let x = vec![vec![1.0, 2.0]; 10];
        let y = vec![0.3; 10];
        let m = TreeEnsemble::fit_rows(&["a", "b"], &x, &y, &ExtraTreesParams::default()).unwrap();
        assert!(m.trees.iter().all(|t| t.nodes.len() == 1));
        assert!((m.predict_row(&[0.0, 0.0]).unwrap() - 0.3).abs() < 1e-15);
        assert!(m.feature_importance().iter().all(|(_, v)| *v == 0.0));
    }

    #[test]
    fn training_fit_on_smooth_target() {
        let (x, y) = grid(300, 1);
        let m = TreeEnsemble::fit_rows(&NAMES, &x, &y, &ExtraTreesParams::default()).unwrap();
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
        let sse: f64 = x.iter().zip(&y).map(|(r, v)| (m.predict_row(r).unwrap() - v).powi(2)).sum();
        assert!(1.0 - sse / sst >= 0.9);
    }

    #[test]
    fn linear_target_cross_validates() {
        let (x, y) = grid(500, 2);
        let cv = cross_validate(&NAMES, &x, &y, 5, &ExtraTreesParams::default(), 3).unwrap();
        assert!(cv.r2 > 0.95, "{cv:?}");
        let again = cross_validate(&NAMES, &x, &y, 5, &ExtraTreesParams::default(), 3).unwrap();
        assert_eq!(cv, again);
    }

    #[test]
    fn unlearnable_labels_score_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x: Vec<Vec<f64>> = (0..400).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..400).map(|_| rng.random::<f64>() * 0.5).collect();
        let cv = cross_validate(&["id"], &x, &y, 5, &ExtraTreesParams::default(), 1).unwrap();
        assert!(cv.r2 < 0.1, "{cv:?}");
    }

    #[test]
    fn importance_single_feature_and_relevance() {
        let (x, y) = grid(200, 4);
        let one: Vec<Vec<f64>> = x.iter().map(|r| vec![r[0]]).collect();
        let m = TreeEnsemble::fit_rows(&["a"], &one, &y, &ExtraTreesParams::default()).unwrap();
        assert_eq!(m.feature_importance()[0].1, 1.0);

        let m = TreeEnsemble::fit_rows(&NAMES, &x, &y, &ExtraTreesParams::default()).unwrap();
        let imp = m.feature_importance();
        assert!((imp.iter().map(|(_, v)| v).sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(imp[0].1 > imp[1].1 && imp[0].1 > imp[2].1);
    }

    #[test]
    fn rejects_bad_input() {
        let p = ExtraTreesParams::default();
        assert!(TreeEnsemble::fit_rows(&["a"], &[], &[], &p).is_err());
        assert!(TreeEnsemble::fit_rows(&["a"], &[vec![1.0]], &[0.7], &p).is_err());
        assert!(TreeEnsemble::fit_rows(&["a"], &[vec![1.0, 2.0]], &[0.1], &p).is_err());
        let m = TreeEnsemble::fit_rows(&["a"], &[vec![1.0]], &[0.1], &p).unwrap();
        assert!(m.predict_row(&[1.0, 2.0]).is_err());
        assert!(m.predict(&CircuitFeatures {
            num_qubits: 1, num_measurements: 1, num_2q_gates: 0, num_sx_gates: 0,
            num_x_gates: 0, num_rz_gates: 0, entropy: 0.0, esp: 1.0,
        }).is_err());
        assert!(cross_validate(&["a"], &[vec![1.0]], &[0.1], 5, &p, 0).is_err());
    }

    #[test]
    fn json_round_trip_is_exact() {
        let (x, y) = grid(100, 5);
        let m = TreeEnsemble::fit_rows(&NAMES, &x, &y, &ExtraTreesParams { n_trees: 10, ..Default::default() }).unwrap();
        let back = TreeEnsemble::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(m, back);
        for r in &x {
            assert_eq!(m.predict_row(r).unwrap().to_bits(), back.predict_row(r).unwrap().to_bits());
        }
        assert!(TreeEnsemble::from_json(r#"{"format":"other"}"#).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn structure_invariants(seed in any::<u64>(), n in 1usize..60) {
            let (x, y) = grid(n, seed);
            let params = ExtraTreesParams { n_trees: 8, seed, ..Default::default() };
            let m = TreeEnsemble::fit_rows(&NAMES, &x, &y, &params).unwrap();
            let (lo, hi) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
            for tree in &m.trees {
                for node in &tree.nodes {
                    if let Node::Split { feature, threshold, .. } = node {
                        let col = x.iter().map(|r| r[*feature]);
                        let (fl, fh) = col.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
                        prop_assert!(fl <= *threshold && *threshold <= fh);
                    }
                }
            }
            let probe: Vec<f64> = vec![0.5, 0.5, 0.5];
            let p = m.predict_row(&probe).unwrap();
            prop_assert!(lo - 1e-12 <= p && p <= hi + 1e-12);

            // Tree order does not matter.
            let mut rev = m.clone();
            rev.trees.reverse();
            prop_assert!((rev.predict_row(&probe).unwrap() - p).abs() < 1e-12);

            let again = TreeEnsemble::fit_rows(&NAMES, &x, &y, &params).unwrap();
            prop_assert_eq!(&m, &again);
        }
    }
}
