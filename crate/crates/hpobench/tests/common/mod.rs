//! Reference implementations used only to cross-check the crate: special
//! functions built from first principles (Lanczos log-gamma, regularized
//! incomplete gamma), rank statistics computed through the one-way
//! analysis-of-variance identity instead of the shortcut formulas, and an
//! exhaustive tree-split search. Deliberately slow and simple.

#![allow(dead_code)]

use hpobench::features::Matrix;

// --- special functions ---------------------------------------------------

/// Lanczos approximation, g = 7, nine coefficients.
pub fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 9] = [
        0.99999999999980993,
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        // Reflection for the left half-plane.
        return std::f64::consts::PI.ln()
            - (std::f64::consts::PI * x).sin().ln()
            - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEFFS[0];
    for (i, &c) in COEFFS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized lower incomplete gamma P(a, x) by power series.
fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut term = 1.0 / a;
    let mut sum = term;
    let mut n = a;
    for _ in 0..500 {
        n += 1.0;
        term *= x / n;
        sum += term;
        if term.abs() < sum.abs() * 1e-16 {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

/// Regularized upper incomplete gamma Q(a, x) by Lentz's continued fraction.
fn gamma_q_cf(a: f64, x: f64) -> f64 {
    let tiny = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..500 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h * (-x + a * x.ln() - ln_gamma(a)).exp()
}

pub fn gamma_p(a: f64, x: f64) -> f64 {
    assert!(a > 0.0 && x >= 0.0);
    if x == 0.0 {
        0.0
    } else if x < a + 1.0 {
        gamma_p_series(a, x)
    } else {
        1.0 - gamma_q_cf(a, x)
    }
}

pub fn gamma_q(a: f64, x: f64) -> f64 {
    assert!(a > 0.0 && x >= 0.0);
    if x == 0.0 {
        1.0
    } else if x < a + 1.0 {
        1.0 - gamma_p_series(a, x)
    } else {
        gamma_q_cf(a, x)
    }
}

/// Chi-square survival function with `k` degrees of freedom.
pub fn chi2_sf(x: f64, k: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else {
        gamma_q(k / 2.0, x / 2.0)
    }
}

pub fn erfc(u: f64) -> f64 {
    if u < 0.0 {
        2.0 - erfc(-u)
    } else if u == 0.0 {
        1.0
    } else {
        gamma_q(0.5, u * u)
    }
}

/// Standard normal survival function.
pub fn normal_sf(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

// --- rank statistics through the variance identity -----------------------

/// Midranks by pairwise counting: rank = (#smaller) + (#equal + 1)/2.
pub fn brute_ranks(values: &[f64]) -> Vec<f64> {
    values
        .iter()
        .map(|&v| {
            let smaller = values.iter().filter(|&&w| w < v).count() as f64;
            let equal = values.iter().filter(|&&w| w == v).count() as f64;
            smaller + (equal + 1.0) / 2.0
        })
        .collect()
}

fn pooled_ranks(groups: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let pooled: Vec<f64> = groups.iter().flatten().copied().collect();
    let ranks = brute_ranks(&pooled);
    let mut out = Vec::with_capacity(groups.len());
    let mut at = 0;
    for g in groups {
        out.push(ranks[at..at + g.len()].to_vec());
        at += g.len();
    }
    out
}

/// Kruskal-Wallis through the analysis-of-variance identity on ranks:
/// H = (N−1) · SSB / SST, which absorbs the tie correction without ever
/// tabulating tie runs. Returns (H, p, mean ranks).
pub fn oracle_kruskal(groups: &[Vec<f64>]) -> (f64, f64, Vec<f64>) {
    let by_group = pooled_ranks(groups);
    let n_total: usize = groups.iter().map(Vec::len).sum();
    let grand = (n_total as f64 + 1.0) / 2.0;
    let mean_ranks: Vec<f64> =
        by_group.iter().map(|r| r.iter().sum::<f64>() / r.len() as f64).collect();
    let ssb: f64 = by_group
        .iter()
        .zip(&mean_ranks)
        .map(|(r, &m)| r.len() as f64 * (m - grand).powi(2))
        .sum();
    let sst: f64 =
        by_group.iter().flatten().map(|&r| (r - grand).powi(2)).sum();
    if sst <= 0.0 {
        return (0.0, 1.0, mean_ranks);
    }
    let h = (n_total as f64 - 1.0) * ssb / sst;
    let p = chi2_sf(h, groups.len() as f64 - 1.0).clamp(0.0, 1.0);
    (h, p, mean_ranks)
}

pub struct OraclePair {
    pub i: usize,
    pub j: usize,
    pub z: f64,
    pub p_raw: f64,
    pub p_adjusted: f64,
    pub significant: bool,
}

/// Dunn pairwise z-tests with the rank variance taken as SST/(N−1), the
/// same quantity the tie-run formula computes.
pub fn oracle_dunn(groups: &[Vec<f64>], alpha: f64) -> Vec<OraclePair> {
    let by_group = pooled_ranks(groups);
    let n_total: usize = groups.iter().map(Vec::len).sum();
    let grand = (n_total as f64 + 1.0) / 2.0;
    let mean_ranks: Vec<f64> =
        by_group.iter().map(|r| r.iter().sum::<f64>() / r.len() as f64).collect();
    let sst: f64 =
        by_group.iter().flatten().map(|&r| (r - grand).powi(2)).sum();
    let rank_var = sst / (n_total as f64 - 1.0);
    let k = groups.len();
    let m = (k * (k - 1) / 2) as f64;
    let mut out = Vec::new();
    for i in 0..k {
        for j in (i + 1)..k {
            let se2 = rank_var * (1.0 / groups[i].len() as f64 + 1.0 / groups[j].len() as f64);
            let (z, p_raw) = if se2 <= 0.0 {
                (0.0, 1.0)
            } else {
                let z = (mean_ranks[i] - mean_ranks[j]) / se2.sqrt();
                (z, (2.0 * normal_sf(z.abs())).clamp(0.0, 1.0))
            };
            let p_adjusted = (p_raw * m).min(1.0);
            out.push(OraclePair { i, j, z, p_raw, p_adjusted, significant: p_adjusted < alpha });
        }
    }
    out
}

// --- exhaustive tree-split search -----------------------------------------

/// A depth-limited regression tree found by exhaustive gain maximization,
/// mirroring the production split rules: unit hessians, ridge weight 1,
/// candidate thresholds at midpoints of adjacent distinct sorted values,
/// children no smaller than ceil(min_child_weight) rows, positive gain
/// required, and first-feature-then-lowest-threshold tie-breaking.
#[derive(Debug, PartialEq)]
pub enum OracleNode {
    Leaf { weight: f64 },
    Split { feature: usize, threshold: f64, left: Box<OracleNode>, right: Box<OracleNode> },
}

fn exhaustive_split(
    rows: &[usize],
    x: &Matrix,
    grad: &[f64],
    g_all: f64,
    mcw: u32,
) -> Option<(usize, f64, Vec<usize>, Vec<usize>, f64)> {
    let n = rows.len();
    let mut best_t = g_all * g_all / (n as f64 + 1.0);
    let mut best: Option<(usize, f64, Vec<usize>, Vec<usize>, f64)> = None;
    for f in 0..x.cols {
        let mut ord = rows.to_vec();
        ord.sort_by(|&a, &b| x.get(a, f).total_cmp(&x.get(b, f)).then(a.cmp(&b)));
        let mut g_left = 0.0;
        let mut prev = 0.0;
        for (q, &r) in ord.iter().enumerate() {
            let v = x.get(r, f);
            if q as u32 >= mcw && q as u32 <= n as u32 - mcw && v > prev {
                let g_right = g_all - g_left;
                let t = g_left * g_left / (q as f64 + 1.0)
                    + g_right * g_right / ((n - q) as f64 + 1.0);
                if t > best_t {
                    let mid = 0.5 * (prev + v);
                    if prev < mid && mid < v {
                        best_t = t;
                        best = Some((f, mid, ord[..q].to_vec(), ord[q..].to_vec(), g_left));
                    }
                }
            }
            g_left += grad[r];
            prev = v;
        }
    }
    best
}

fn grow(rows: &[usize], x: &Matrix, grad: &[f64], g_all: f64, depth: u32, mcw: u32) -> OracleNode {
    if depth == 0 {
        return OracleNode::Leaf { weight: -g_all / (rows.len() as f64 + 1.0) };
    }
    match exhaustive_split(rows, x, grad, g_all, mcw) {
        None => OracleNode::Leaf { weight: -g_all / (rows.len() as f64 + 1.0) },
        Some((feature, threshold, left_rows, right_rows, g_left)) => OracleNode::Split {
            feature,
            threshold,
            left: Box::new(grow(&left_rows, x, grad, g_left, depth - 1, mcw)),
            right: Box::new(grow(&right_rows, x, grad, g_all - g_left, depth - 1, mcw)),
        },
    }
}

/// First boosting round by brute force: gradients are `mean(y) − y` and the
/// tree is grown to `max_depth` without row or column sampling.
pub fn oracle_first_tree(x: &Matrix, y: &[f64], max_depth: u32, min_child_weight: f64) -> OracleNode {
    let n = y.len();
    let base = y.iter().sum::<f64>() / n as f64;
    let grad: Vec<f64> = y.iter().map(|&v| base - v).collect();
    let g_all: f64 = grad.iter().sum();
    let rows: Vec<usize> = (0..n).collect();
    let mcw = (min_child_weight.ceil() as u32).max(1);
    grow(&rows, x, &grad, g_all, max_depth, mcw)
}

/// Structural comparison against the production tree: identical split
/// features and bit-identical thresholds; leaf weights within `tol` (their
/// gradient sums accumulate in different orders).
pub fn trees_match(ours: &hpobench::gbt::TreeNode, oracle: &OracleNode, tol: f64) -> bool {
    use hpobench::gbt::TreeNode;
    match (ours, oracle) {
        (TreeNode::Leaf { weight }, OracleNode::Leaf { weight: w }) => (weight - w).abs() <= tol,
        (
            TreeNode::Internal { feature, threshold, left, right },
            OracleNode::Split { feature: f, threshold: t, left: l, right: r },
        ) => {
            feature == f
                && threshold.to_bits() == t.to_bits()
                && trees_match(left, l, tol)
                && trees_match(right, r, tol)
        }
        _ => false,
    }
}
