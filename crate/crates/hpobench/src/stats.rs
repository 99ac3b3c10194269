//! Rank-based between-group tests: the Kruskal-Wallis omnibus test and
//! Dunn's pairwise z comparisons with Bonferroni adjustment.
//!
//! Both tests are tie-corrected. Inputs that are entirely tied (every value
//! identical across every group) are degenerate — the tie correction would
//! be zero — and are resolved as "no evidence": H = 0, all p-values 1.

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Kruskal-Wallis omnibus result over `k` groups.
#[derive(Debug, Clone, PartialEq)]
pub struct KruskalWallisReport {
    pub h: f64,
    pub df: usize,
    pub p_value: f64,
    pub mean_ranks: Vec<f64>,
    pub tie_correction: f64,
}

/// One unordered pair in the post-hoc comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseCell {
    pub i: usize,
    pub j: usize,
    /// Signed mean-rank difference `MR_i − MR_j`.
    pub difference: f64,
    pub z: f64,
    pub p_raw: f64,
    pub p_adjusted: f64,
    pub significant: bool,
}

/// All `k(k−1)/2` pairwise comparisons at one significance level.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseMatrix {
    pub k: usize,
    pub alpha: f64,
    pub mean_ranks: Vec<f64>,
    pub cells: Vec<PairwiseCell>,
}

impl PairwiseMatrix {
    /// Looks up the cell for an unordered pair, with the difference signed
    /// as `MR_a − MR_b` regardless of storage order.
    pub fn get(&self, a: usize, b: usize) -> Option<PairwiseCell> {
        self.cells.iter().find(|c| (c.i, c.j) == (a, b) || (c.i, c.j) == (b, a)).map(|c| {
            if c.i == a {
                c.clone()
            } else {
                let mut flipped = c.clone();
                flipped.difference = -c.difference;
                flipped.z = -c.z;
                flipped.i = a;
                flipped.j = b;
                flipped
            }
        })
    }
}

/// Ascending ranks `1..=N`, with tied values sharing the mean of the rank
/// positions they span.
pub fn rank_with_ties(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; n];
    let mut lo = 0;
    while lo < n {
        let mut hi = lo + 1;
        while hi < n && values[order[hi]] == values[order[lo]] {
            hi += 1;
        }
        // Positions lo..hi (0-based) hold one tie run; ranks are 1-based.
        let shared = (lo + hi + 1) as f64 / 2.0;
        for &idx in &order[lo..hi] {
            ranks[idx] = shared;
        }
        lo = hi;
    }
    ranks
}

/// Pooled ranking bookkeeping shared by both tests.
struct Pooled {
    n_total: usize,
    sizes: Vec<usize>,
    mean_ranks: Vec<f64>,
    /// Σ (t³ − t) over tie runs in the pooled sample.
    tie_cubes: f64,
}

fn pool(groups: &[Vec<f64>]) -> Result<Pooled> {
    if groups.len() < 2 {
        return Err(Error::Stats(format!("need at least 2 groups, got {}", groups.len())));
    }
    for (g, values) in groups.iter().enumerate() {
        if values.is_empty() {
            return Err(Error::Stats(format!("group {g} is empty")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Stats(format!("group {g} contains a non-finite value")));
        }
    }
    let sizes: Vec<usize> = groups.iter().map(Vec::len).collect();
    let n_total: usize = sizes.iter().sum();
    let all: Vec<f64> = groups.iter().flatten().copied().collect();
    let ranks = rank_with_ties(&all);

    let mut mean_ranks = Vec::with_capacity(groups.len());
    let mut offset = 0;
    for &sz in &sizes {
        let sum: f64 = ranks[offset..offset + sz].iter().sum();
        mean_ranks.push(sum / sz as f64);
        offset += sz;
    }

    let mut sorted = all;
    sorted.sort_by(f64::total_cmp);
    let mut tie_cubes = 0.0;
    let mut lo = 0;
    while lo < sorted.len() {
        let mut hi = lo + 1;
        while hi < sorted.len() && sorted[hi] == sorted[lo] {
            hi += 1;
        }
        let t = (hi - lo) as f64;
        tie_cubes += t * t * t - t;
        lo = hi;
    }

    Ok(Pooled { n_total, sizes, mean_ranks, tie_cubes })
}

/// Tie-corrected Kruskal-Wallis test with a chi-square upper-tail p-value
/// at `k − 1` degrees of freedom.
pub fn kruskal_wallis(groups: &[Vec<f64>]) -> Result<KruskalWallisReport> {
    let pooled = pool(groups)?;
    let k = groups.len();
    let n = pooled.n_total as f64;
    let df = k - 1;

    let correction = 1.0 - pooled.tie_cubes / (n * n * n - n);
    if correction <= 0.0 {
        // Every pooled value identical: no rank information at all.
        return Ok(KruskalWallisReport {
            h: 0.0,
            df,
            p_value: 1.0,
            mean_ranks: pooled.mean_ranks,
            tie_correction: 0.0,
        });
    }

    let weighted: f64 = pooled
        .sizes
        .iter()
        .zip(&pooled.mean_ranks)
        .map(|(&sz, &mr)| sz as f64 * mr * mr)
        .sum();
    let h_raw = 12.0 / (n * (n + 1.0)) * weighted - 3.0 * (n + 1.0);
    let h = (h_raw / correction).max(0.0);

    let chi = ChiSquared::new(df as f64)
        .map_err(|e| Error::Stats(format!("chi-square with df {df}: {e}")))?;
    let p_value = chi.sf(h).clamp(0.0, 1.0);

    Ok(KruskalWallisReport { h, df, p_value, mean_ranks: pooled.mean_ranks, tie_correction: correction })
}

/// Dunn's pairwise z tests on pooled ranks, two-sided, with the
/// Bonferroni multiplier `k(k−1)/2`.
pub fn dunn_bonferroni(groups: &[Vec<f64>], alpha: f64) -> Result<PairwiseMatrix> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Stats(format!("alpha {alpha} outside [0,1]")));
    }
    let pooled = pool(groups)?;
    let k = groups.len();
    let n = pooled.n_total as f64;
    let m = (k * (k - 1) / 2) as f64;

    // Tie-adjusted variance of a pooled rank.
    let rank_var = n * (n + 1.0) / 12.0 - pooled.tie_cubes / (12.0 * (n - 1.0));
    let normal = Normal::new(0.0, 1.0).expect("unit normal");

    let mut cells = Vec::with_capacity(k * (k - 1) / 2);
    for i in 0..k {
        for j in i + 1..k {
            let difference = pooled.mean_ranks[i] - pooled.mean_ranks[j];
            let se2 = rank_var * (1.0 / pooled.sizes[i] as f64 + 1.0 / pooled.sizes[j] as f64);
            let (z, p_raw) = if se2 > 0.0 {
                let z = difference / se2.sqrt();
                (z, (2.0 * normal.sf(z.abs())).clamp(0.0, 1.0))
            } else {
                (0.0, 1.0)
            };
            let p_adjusted = (p_raw * m).min(1.0);
            cells.push(PairwiseCell {
                i,
                j,
                difference,
                z,
                p_raw,
                p_adjusted,
                significant: p_adjusted < alpha,
            });
        }
    }

    Ok(PairwiseMatrix { k, alpha, mean_ranks: pooled.mean_ranks, cells })
}

/// Text rendering of the pairwise matrix: one row per unordered pair with
/// the signed difference, z, both p-values, and a significance marker.
pub fn format_pairwise(matrix: &PairwiseMatrix, labels: &[String]) -> String {
    let name = |idx: usize| -> String {
        labels.get(idx).cloned().unwrap_or_else(|| format!("group{idx}"))
    };
    let mut out = String::new();
    out.push_str(&format!(
        "pairwise mean-rank comparisons (alpha = {}, bonferroni x{})\n",
        matrix.alpha,
        matrix.k * (matrix.k - 1) / 2
    ));
    out.push_str("pair,difference,z,p_raw,p_adjusted,significant\n");
    for c in &matrix.cells {
        out.push_str(&format!(
            "{} vs {},{:.6},{:.6},{:.6e},{:.6e},{}\n",
            name(c.i),
            name(c.j),
            c.difference,
            c.z,
            c.p_raw,
            c.p_adjusted,
            if c.significant { "*" } else { "-" }
        ));
    }
    out
}

/// Text rendering of the omnibus report.
pub fn format_kruskal_wallis(report: &KruskalWallisReport, labels: &[String]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "kruskal-wallis: H = {:.6}, df = {}, p = {:.6e}, tie correction = {:.6}\n",
        report.h, report.df, report.p_value, report.tie_correction
    ));
    for (idx, mr) in report.mean_ranks.iter().enumerate() {
        let name = labels.get(idx).cloned().unwrap_or_else(|| format!("group{idx}"));
        out.push_str(&format!("  mean rank {name} = {mr:.4}\n"));
    }
    out
}
