//! Second-order gradient-boosted regression trees with exact greedy splits.
//!
//! Squared-error loss, so per round the gradient is `g = yhat - y` and the
//! hessian is 1 per row. Split gain follows the second-order formula
//! `0.5 * (GL^2/(HL+l) + GR^2/(HR+l) - G^2/(H+l))` with `l = 1`, no split
//! penalty, and leaf weights `-G/(H+l)`. Trees are grown level-wise over
//! presorted feature columns, which keeps exact search at `O(p * n)` per
//! level and makes every fit bit-reproducible for a fixed seed.

use std::cell::Cell;

use rand::Rng;

use crate::error::{Error, Result};
use crate::features::{Matrix, SupervisedDataset};
use crate::rng::seeded_rng;
use crate::space::HyperParams;

thread_local! {
    static FIT_CALLS: Cell<u64> = const { Cell::new(0) };
    static WORK_UNITS: Cell<u64> = const { Cell::new(0) };
}

/// Number of completed `fit` calls on this thread since it started.
///
/// Callers interested in a span take a before/after difference.
pub fn fit_calls() -> u64 {
    FIT_CALLS.with(|c| c.get())
}

/// Split-search effort on this thread: one unit per sorted-column element
/// visited. Doubles as a deterministic runtime proxy.
pub fn work_units() -> u64 {
    WORK_UNITS.with(|c| c.get())
}

const LAMBDA: f64 = 1.0;

/// One node of a fitted tree.
#[derive(Debug, Clone)]
pub enum TreeNode {
    Leaf { weight: f64 },
    Internal { feature: usize, threshold: f64, left: Box<TreeNode>, right: Box<TreeNode> },
}

impl TreeNode {
    fn score(&self, row: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { weight } => return *weight,
                TreeNode::Internal { feature, threshold, left, right } => {
                    node = if row[*feature] < *threshold { left } else { right };
                }
            }
        }
    }

    /// Longest root-to-leaf path, in edges.
    pub fn max_leaf_depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Internal { left, right, .. } => {
                1 + left.max_leaf_depth().max(right.max_leaf_depth())
            }
        }
    }
}

/// Fitted ensemble: prediction = `base_score + learning_rate * sum(trees)`.
#[derive(Debug, Clone)]
pub struct GbtModel {
    pub base_score: f64,
    pub trees: Vec<TreeNode>,
    pub learning_rate: f64,
    pub n_features: usize,
}

impl GbtModel {
    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        predict(self, x)
    }
}

/// Scores every row of `x` through the ensemble.
pub fn predict(model: &GbtModel, x: &Matrix) -> Result<Vec<f64>> {
    if x.cols != model.n_features {
        return Err(Error::Shape { expected: model.n_features, got: x.cols });
    }
    let mut out = Vec::with_capacity(x.rows);
    for r in 0..x.rows {
        let row = x.row(r);
        let sum: f64 = model.trees.iter().map(|t| t.score(row)).sum();
        out.push(model.base_score + model.learning_rate * sum);
    }
    Ok(out)
}

/// Feature columns presorted once so repeated fits on the same rows skip the
/// `O(p n log n)` sort. Holds its own copy of the training data.
pub struct PreparedData {
    x: Matrix,
    y: Vec<f64>,
    /// Per feature: row indices ordered by (value, row index).
    sorted_idx: Vec<Vec<u32>>,
    /// Values aligned with `sorted_idx`, stored contiguously for the scan.
    sorted_val: Vec<Vec<f64>>,
}

/// Per-column working state for one tree: the rows of every frontier node
/// held as one contiguous run, value-sorted, with gradients gathered
/// alongside so the split scan streams sequentially through memory.
struct ColumnRuns {
    pos: Vec<u32>,
    val: Vec<f64>,
    grad: Vec<f64>,
}

impl ColumnRuns {
    fn zeroed(n: usize) -> ColumnRuns {
        ColumnRuns { pos: vec![0; n], val: vec![0.0; n], grad: vec![0.0; n] }
    }
}

impl PreparedData {
    pub fn from_dataset(ds: &SupervisedDataset) -> Result<PreparedData> {
        if ds.is_empty() {
            return Err(Error::Fit("cannot fit on an empty dataset".into()));
        }
        if ds.y.iter().any(|v| !v.is_finite()) || ds.x.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Fit("non-finite value in training data".into()));
        }
        let n = ds.len();
        let p = ds.x.cols;
        let mut sorted_idx = Vec::with_capacity(p);
        let mut sorted_val = Vec::with_capacity(p);
        for f in 0..p {
            let mut idx: Vec<u32> = (0..n as u32).collect();
            idx.sort_unstable_by(|&a, &b| {
                ds.x.get(a as usize, f)
                    .total_cmp(&ds.x.get(b as usize, f))
                    .then(a.cmp(&b))
            });
            let vals: Vec<f64> = idx.iter().map(|&i| ds.x.get(i as usize, f)).collect();
            sorted_idx.push(idx);
            sorted_val.push(vals);
        }
        Ok(PreparedData { x: ds.x.clone(), y: ds.y.clone(), sorted_idx, sorted_val })
    }

    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    pub fn n_cols(&self) -> usize {
        self.x.cols
    }
}

fn validate_hp(hp: &HyperParams) -> Result<()> {
    if hp.max_depth == 0
        || hp.n_estimators == 0
        || !(hp.learning_rate.is_finite() && hp.learning_rate > 0.0)
        || !(0.0 < hp.subsample && hp.subsample <= 1.0)
        || !(0.0 < hp.colsample_bytree && hp.colsample_bytree <= 1.0)
        || !(hp.min_child_weight >= 0.0)
    {
        return Err(Error::Fit(format!("invalid hyperparameters {hp:?}")));
    }
    Ok(())
}

/// Node state while one tree grows, arena-indexed.
struct BuildNode {
    g_sum: f64,
    count: u32,
    /// Set once the node splits: (feature, threshold, left arena id, right arena id).
    split: Option<(usize, f64, usize, usize)>,
    weight: f64,
}

/// Winning split for a node, as found by the segment scan.
#[derive(Clone, Copy)]
struct Candidate {
    feature: usize,
    /// Position of `feature` within this tree's sampled column set.
    col_slot: usize,
    threshold: f64,
    /// Rows on the left side; with unit hessians this is also `H_left`.
    count_left: u32,
    /// Gradient total of the left side, as accumulated during the scan.
    g_left: f64,
}

/// A node whose winning split is known but whose children are not yet built.
struct Pending {
    arena_id: usize,
    /// Row segment `[start, end)`, shared by every column's runs.
    start: usize,
    end: usize,
    cand: Candidate,
}

/// Running split scan over one node's rows as they stream by in value order.
///
/// A split at local position `q` puts the first `q` rows on the left, so the
/// gain is maximal where `t = G_l^2/(H_l+l) + G_r^2/(H_r+l)` is, and
/// "gain > 0" is "t > G^2/(H+l)"; that constant seeds `best_t` so the
/// remaining terms stay out of the loop. Strictly-greater updates under an
/// ascending-column, ascending-value visit order keep the earliest feature
/// and threshold on ties. A child too small to split gets `lo > hi`, which
/// masks every position; its rows still stream through for the partition.
struct SplitScan {
    g_all: f64,
    cc: u32,
    lo: u32,
    hi: u32,
    /// Per-column running state, reset at each column start.
    gl: f64,
    prev: f64,
    best_t: f64,
    best_k: u32,
    best_q: u32,
    best_mid: f64,
    best_gl: f64,
}

impl SplitScan {
    fn new(g_all: f64, cc: u32, lo: u32, hi: u32, recip: &[f64]) -> SplitScan {
        SplitScan {
            g_all,
            cc,
            lo,
            hi,
            gl: 0.0,
            prev: 0.0,
            best_t: g_all * g_all * recip[cc as usize],
            best_k: u32::MAX,
            best_q: 0,
            best_mid: 0.0,
            best_gl: 0.0,
        }
    }

    fn masked(cc: u32) -> SplitScan {
        SplitScan {
            g_all: 0.0,
            cc,
            lo: 1,
            hi: 0,
            gl: 0.0,
            prev: 0.0,
            best_t: f64::INFINITY,
            best_k: u32::MAX,
            best_q: 0,
            best_mid: 0.0,
            best_gl: 0.0,
        }
    }

    fn start_column(&mut self) {
        self.gl = 0.0;
        self.prev = 0.0;
    }

    #[inline(always)]
    fn step(&mut self, k: u32, q: u32, v: f64, g: f64, recip: &[f64]) {
        let gr = self.g_all - self.gl;
        let mut t =
            self.gl * self.gl * recip[q as usize] + gr * gr * recip[(self.cc - q) as usize];
        if v <= self.prev || q < self.lo || q > self.hi {
            t = f64::NEG_INFINITY;
        }
        if t > self.best_t {
            let mid = 0.5 * (self.prev + v);
            // Degenerate midpoints (adjacent floats) are skipped so value
            // comparisons at predict time agree with the positional
            // partition used during the build.
            if self.prev < mid && mid < v {
                self.best_t = t;
                self.best_k = k;
                self.best_q = q;
                self.best_mid = mid;
                self.best_gl = self.gl;
            }
        }
        self.gl += g;
        self.prev = v;
    }

    fn found(&self, active_cols: &[usize]) -> Option<Candidate> {
        if self.best_k == u32::MAX {
            return None;
        }
        Some(Candidate {
            feature: active_cols[self.best_k as usize],
            col_slot: self.best_k as usize,
            threshold: self.best_mid,
            count_left: self.best_q,
            g_left: self.best_gl,
        })
    }
}

fn arena_to_tree(arena: &[BuildNode], id: usize) -> TreeNode {
    match arena[id].split {
        None => TreeNode::Leaf { weight: arena[id].weight },
        Some((feature, threshold, left, right)) => TreeNode::Internal {
            feature,
            threshold,
            left: Box::new(arena_to_tree(arena, left)),
            right: Box::new(arena_to_tree(arena, right)),
        },
    }
}

/// Fits a boosted ensemble on presorted data. Deterministic for a fixed
/// `(data, hp, seed)` triple.
///
/// Trees grow level by level. Every frontier node owns one contiguous,
/// value-sorted segment per sampled column, and each level runs as a single
/// pass per column: rows stream toward their child by a stable positional
/// partition (the first `count_left` entries of the split column's segment
/// are the left child, so split statistics and row assignment agree
/// exactly), and since the partition preserves value order, the children's
/// own split scans run on the same stream. Children that can no longer
/// split are finalized straight off the winning column's positions and
/// never routed. Gains use a reciprocal table for `1/(H+l)` since hessians
/// are unit; leaf weights keep the plain division so their values are the
/// textbook `-G/(H+l)` bit for bit.
pub fn fit_prepared(prep: &PreparedData, hp: &HyperParams, seed: u64) -> Result<GbtModel> {
    validate_hp(hp)?;
    let n = prep.n_rows();
    let p = prep.n_cols();
    let mut rng = seeded_rng(seed);

    let base_score = prep.y.iter().sum::<f64>() / n as f64;
    let mut yhat = vec![base_score; n];
    let mut grad = vec![0.0f64; n];
    let lr = hp.learning_rate;
    // Unit hessians make every H a row count; splits below the weight floor
    // are exactly those with a child count under ceil(mcw).
    let mcw_count = (hp.min_child_weight.ceil() as u32).max(1);
    let recip: Vec<f64> = (0..=n).map(|c| 1.0 / (c as f64 + LAMBDA)).collect();

    let mut in_bag = vec![true; n];
    let mut side_left = vec![false; n];
    let mut trees = Vec::with_capacity(hp.n_estimators as usize);

    let mut cols: Vec<usize> = (0..p).collect();
    let n_sampled_cols = ((p as f64 * hp.colsample_bytree).round() as usize).clamp(1, p);
    let mut runs: Vec<ColumnRuns> = (0..n_sampled_cols).map(|_| ColumnRuns::zeroed(n)).collect();
    let mut scratch: Vec<ColumnRuns> =
        (0..n_sampled_cols).map(|_| ColumnRuns::zeroed(n)).collect();

    for _round in 0..hp.n_estimators {
        for i in 0..n {
            grad[i] = yhat[i] - prep.y[i];
        }

        // Column subset for this tree, ascending so the lowest-feature-index
        // tie-break matches the scan order.
        if n_sampled_cols < p {
            for k in 0..n_sampled_cols {
                let j = rng.gen_range(k..p);
                cols.swap(k, j);
            }
            cols[..n_sampled_cols].sort_unstable();
        }
        let active_cols = &cols[..n_sampled_cols];

        // Row subset (Bernoulli per row); the draw order is fixed, and the
        // bag's gradient total accumulates in row order.
        let mut g_root = 0.0f64;
        let n_bag = if hp.subsample < 1.0 {
            let mut count = 0usize;
            for (flag, &g) in in_bag.iter_mut().zip(&grad) {
                *flag = rng.gen::<f64>() < hp.subsample;
                count += *flag as usize;
                g_root += g * (*flag as u8 as f64);
            }
            count
        } else {
            g_root = grad.iter().sum();
            n
        };
        if n_bag == 0 {
            trees.push(TreeNode::Leaf { weight: 0.0 });
            continue;
        }

        let root_weight = |g: f64| -g / (n_bag as f64 + LAMBDA);
        if (n_bag as u32) < 2 * mcw_count {
            // The root cannot split, so the tree is a single leaf and the
            // column runs are never needed.
            let w = root_weight(g_root);
            for (i, &flag) in in_bag.iter().enumerate() {
                if flag {
                    yhat[i] += lr * w;
                }
            }
            trees.push(TreeNode::Leaf { weight: w });
            continue;
        }

        // Root segments: the presorted columns compacted to in-bag rows with
        // gradients gathered alongside, then scanned for the root split.
        WORK_UNITS.with(|c| c.set(c.get() + n_bag as u64 * n_sampled_cols as u64));
        let mut root_scan = SplitScan::new(
            g_root,
            n_bag as u32,
            mcw_count,
            n_bag as u32 - mcw_count,
            &recip,
        );
        for (k, &f) in active_cols.iter().enumerate() {
            let run = &mut runs[k];
            let sidx = &prep.sorted_idx[f];
            let sval = &prep.sorted_val[f];
            if n_bag == n {
                run.pos.copy_from_slice(sidx);
                run.val.copy_from_slice(sval);
                for (g_out, &row) in run.grad.iter_mut().zip(sidx) {
                    *g_out = grad[row as usize];
                }
            } else {
                // Unconditional writes with a conditional cursor bump keep
                // the compaction branch-free; surplus writes land one past
                // the kept prefix and are overwritten or ignored.
                let mut w = 0usize;
                for j in 0..n {
                    let row = sidx[j] as usize;
                    run.pos[w] = sidx[j];
                    run.val[w] = sval[j];
                    run.grad[w] = grad[row];
                    w += in_bag[row] as usize;
                }
            }
            root_scan.start_column();
            for (q, (&v, &g)) in run.val[..n_bag].iter().zip(&run.grad[..n_bag]).enumerate() {
                root_scan.step(k as u32, q as u32, v, g, &recip);
            }
        }

        let mut arena =
            vec![BuildNode { g_sum: g_root, count: n_bag as u32, split: None, weight: 0.0 }];
        let mut pending: Vec<Pending> = match root_scan.found(active_cols) {
            Some(cand) => vec![Pending { arena_id: 0, start: 0, end: n_bag, cand }],
            None => {
                let w = root_weight(g_root);
                arena[0].weight = w;
                for &row in &runs[0].pos[..n_bag] {
                    yhat[row as usize] += lr * w;
                }
                Vec::new()
            }
        };

        // Depth of the children about to be built from `pending`.
        let mut child_depth = 1u32;
        while !pending.is_empty() {
            // Materialize the winning splits. Each split-node row is marked
            // left/right positionally off the winning column; children that
            // cannot split again are finalized here from those positions and
            // drop out before any routing happens.
            let at_cap = child_depth >= hp.max_depth;
            let mut kids: Vec<(usize, usize, usize, bool)> =
                Vec::with_capacity(2 * pending.len());
            let mut scans: Vec<SplitScan> = Vec::with_capacity(2 * pending.len());
            let mut routed: Vec<bool> = Vec::with_capacity(pending.len());
            for node in &pending {
                let cand = node.cand;
                let left_id = arena.len();
                arena.push(BuildNode { g_sum: 0.0, count: 0, split: None, weight: 0.0 });
                let right_id = arena.len();
                arena.push(BuildNode { g_sum: 0.0, count: 0, split: None, weight: 0.0 });
                arena[node.arena_id].split =
                    Some((cand.feature, cand.threshold, left_id, right_id));

                let boundary = node.start + cand.count_left as usize;
                let win = &runs[cand.col_slot];
                for &row in &win.pos[node.start..boundary] {
                    side_left[row as usize] = true;
                }
                for &row in &win.pos[boundary..node.end] {
                    side_left[row as usize] = false;
                }
                let g_all = arena[node.arena_id].g_sum;
                let count = (node.end - node.start) as u32;
                arena[left_id].g_sum = cand.g_left;
                arena[left_id].count = cand.count_left;
                arena[right_id].g_sum = g_all - cand.g_left;
                arena[right_id].count = count - cand.count_left;

                let mut node_routes = false;
                let sides = [(left_id, node.start, boundary), (right_id, boundary, node.end)];
                for (child_id, c_start, c_end) in sides {
                    let cc = (c_end - c_start) as u32;
                    let scannable = !at_cap && cc >= 2 * mcw_count;
                    if scannable {
                        WORK_UNITS
                            .with(|c| c.set(c.get() + u64::from(cc) * n_sampled_cols as u64));
                        let child = &arena[child_id];
                        scans.push(SplitScan::new(
                            child.g_sum,
                            cc,
                            mcw_count,
                            cc - mcw_count,
                            &recip,
                        ));
                        node_routes = true;
                    } else {
                        let slot = &mut arena[child_id];
                        slot.weight = -slot.g_sum / (f64::from(slot.count) + LAMBDA);
                        let w = lr * slot.weight;
                        for &row in &win.pos[c_start..c_end] {
                            yhat[row as usize] += w;
                        }
                        scans.push(SplitScan::masked(cc));
                    }
                    kids.push((child_id, c_start, c_end, scannable));
                }
                routed.push(node_routes);
            }

            if !routed.iter().any(|&r| r) {
                break;
            }

            // One pass per column: stable-partition each routed node's
            // segment into its children while the children's own split scans
            // consume the rows in the same stream. Cursor arithmetic instead
            // of a per-row branch, since the left/right pattern is close to
            // random and would mispredict half the time.
            for (k, run) in runs.iter().enumerate() {
                let out = &mut scratch[k];
                for (nid, node) in pending.iter().enumerate() {
                    if !routed[nid] {
                        continue;
                    }
                    let boundary = node.start + node.cand.count_left as usize;
                    let child_start = [node.start, boundary];
                    let mut left_at = node.start;
                    let mut right_at = boundary;
                    let pair = &mut scans[2 * nid..2 * nid + 2];
                    pair[0].start_column();
                    pair[1].start_column();
                    for j in node.start..node.end {
                        let row = run.pos[j];
                        let goes_left = side_left[row as usize] as usize;
                        let dst = if goes_left == 1 { left_at } else { right_at };
                        left_at += goes_left;
                        right_at += 1 - goes_left;
                        let v = run.val[j];
                        let g = run.grad[j];
                        out.pos[dst] = row;
                        out.val[dst] = v;
                        out.grad[dst] = g;
                        let ci = 1 - goes_left;
                        let q = (dst - child_start[ci]) as u32;
                        pair[ci].step(k as u32, q, v, g, &recip);
                    }
                }
            }
            std::mem::swap(&mut runs, &mut scratch);

            // Children with a winning split carry forward; scannable children
            // without one retire as leaves off their freshly routed segment.
            let mut next: Vec<Pending> = Vec::new();
            for ((child_id, c_start, c_end, scannable), scan) in kids.into_iter().zip(&scans) {
                if !scannable {
                    continue;
                }
                match scan.found(active_cols) {
                    Some(cand) => next.push(Pending {
                        arena_id: child_id,
                        start: c_start,
                        end: c_end,
                        cand,
                    }),
                    None => {
                        let slot = &mut arena[child_id];
                        slot.weight = -slot.g_sum / (f64::from(slot.count) + LAMBDA);
                        let w = lr * slot.weight;
                        for &row in &runs[0].pos[c_start..c_end] {
                            yhat[row as usize] += w;
                        }
                    }
                }
            }
            pending = next;
            child_depth += 1;
        }

        let tree = arena_to_tree(&arena, 0);
        // Out-of-bag rows still receive this tree's contribution; in-bag
        // rows already got theirs when their leaf finalized.
        if hp.subsample < 1.0 {
            for i in 0..n {
                if !in_bag[i] {
                    yhat[i] += lr * tree.score(prep.x.row(i));
                }
            }
        }
        trees.push(tree);
    }

    FIT_CALLS.with(|c| c.set(c.get() + 1));
    Ok(GbtModel { base_score, trees, learning_rate: lr, n_features: p })
}

/// Convenience entry point: presort and fit in one call.
pub fn fit(ds: &SupervisedDataset, hp: &HyperParams, seed: u64) -> Result<GbtModel> {
    let prep = PreparedData::from_dataset(ds)?;
    fit_prepared(&prep, hp, seed)
}

/// Indented text rendering of one tree, for debugging and logs.
pub fn tree_to_text(node: &TreeNode) -> String {
    fn rec(node: &TreeNode, depth: usize, out: &mut String) {
        let pad = "  ".repeat(depth);
        match node {
            TreeNode::Leaf { weight } => out.push_str(&format!("{pad}leaf weight={weight}\n")),
            TreeNode::Internal { feature, threshold, left, right } => {
                out.push_str(&format!("{pad}if x[{feature}] < {threshold}\n"));
                rec(left, depth + 1, out);
                rec(right, depth + 1, out);
            }
        }
    }
    let mut out = String::new();
    rec(node, 0, &mut out);
    out
}
