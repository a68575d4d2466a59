//! Relative Pearson-divergence estimation.
//!
//! Three routes to the same quantity live here:
//!
//! * [`pe_closed_form`] — the exact divergence between two known
//!   distributions on a finite domain, mixed by `alpha_beta`.
//! * [`pe_plugin`] — the plug-in estimator from empirical frequencies of two
//!   sample windows. On a finite discrete domain this is exact in the
//!   population limit and is the default estimator.
//! * [`pe_kernel`] — a Gaussian-kernel least-squares estimator of the
//!   relative density ratio, kept for parity with continuous-data practice.
//!
//! [`pe_series`] slides a two-half window over one segment and scores each
//! position, producing the divergence series the detector maximizes.

use serde::{Deserialize, Serialize};

use crate::segments::Segment;
use crate::{Error, Result};

/// Which divergence estimator the sliding windows use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Plugin,
    Kernel,
}

/// Free parameters of the kernel estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    /// Gaussian kernel width; `None` selects the median pairwise distance of
    /// the pooled window, floored at 0.1.
    pub sigma: Option<f64>,
    /// Ridge regularization strength.
    pub lambda: f64,
    /// Cap on the number of kernel centers taken from the first half.
    pub max_centers: usize,
    /// Enable the 5-fold cross-validation grid over sigma and lambda.
    pub cross_validate: bool,
}

impl Default for KernelParams {
    fn default() -> Self {
        KernelParams { sigma: None, lambda: 0.01, max_centers: 100, cross_validate: false }
    }
}

/// Sliding-window divergence parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeParams {
    /// Relative mixing parameter in (0, 1).
    pub alpha: f64,
    /// Samples per half-window.
    pub n_w: usize,
    /// Window stride.
    pub n_st: usize,
    pub estimator: Estimator,
    pub kernel: KernelParams,
}

impl Default for PeParams {
    fn default() -> Self {
        PeParams {
            alpha: 0.1,
            n_w: 50,
            n_st: 1,
            estimator: Estimator::Plugin,
            kernel: KernelParams::default(),
        }
    }
}

impl PeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParam(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if self.n_w < 2 {
            return Err(Error::InvalidParam(format!("n_w must be >= 2, got {}", self.n_w)));
        }
        if self.n_st < 1 {
            return Err(Error::InvalidParam("n_st must be >= 1".into()));
        }
        if !self.kernel.lambda.is_finite() || self.kernel.lambda <= 0.0 {
            return Err(Error::InvalidParam(format!(
                "kernel lambda must be > 0, got {}",
                self.kernel.lambda
            )));
        }
        if self.kernel.max_centers < 1 {
            return Err(Error::InvalidParam("max_centers must be >= 1".into()));
        }
        Ok(())
    }
}

/// Original-time spans of one sliding window, inclusive on both ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpan {
    pub first_start: usize,
    pub first_end: usize,
    pub second_start: usize,
    pub second_end: usize,
}

/// Divergence score per sliding-window index for one segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeSeries {
    /// Component index the segment belongs to.
    pub component: usize,
    /// Configuration row index of the segment.
    pub lambda: u64,
    pub scores: Vec<f64>,
    pub window_spans: Vec<WindowSpan>,
}

impl PeSeries {
    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Largest score and its window index; ties keep the smaller index.
    pub fn peak(&self) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (i, &score) in self.scores.iter().enumerate() {
            match best {
                Some((_, b)) if score <= b => {}
                _ => best = Some((i, score)),
            }
        }
        best
    }
}

/// Exact relative Pearson divergence between two distributions on a shared
/// finite domain: `0.5 * sum_h p_h^2 / ((1-ab) p_h + ab p'_h) - 0.5`.
///
/// A zero denominator where `p_h > 0` means the ratio is unbounded; the
/// divergence is reported as `+inf`.
pub fn pe_closed_form(p: &[f64], p_prime: &[f64], alpha_beta: f64) -> f64 {
    debug_assert_eq!(p.len(), p_prime.len());
    let mut acc = 0.0;
    for (&ph, &pph) in p.iter().zip(p_prime) {
        if ph == 0.0 {
            continue;
        }
        let q = (1.0 - alpha_beta) * ph + alpha_beta * pph;
        if q <= 0.0 {
            return f64::INFINITY;
        }
        acc += ph * ph / q;
    }
    0.5 * acc - 0.5
}

/// Empirical symbol frequencies of a code sequence over a domain of size `s`.
pub fn empirical_frequencies(codes: &[u8], s: usize) -> Vec<f64> {
    let mut counts = vec![0usize; s];
    for &c in codes {
        counts[c as usize] += 1;
    }
    let total = codes.len().max(1) as f64;
    counts.into_iter().map(|c| c as f64 / total).collect()
}

/// Plug-in divergence estimate between two sample windows.
///
/// Computes empirical frequencies of both halves and evaluates
/// `0.5 * sum_h q_h (r_h - 1)^2` with `r_h = p_h / ((1-a) p_h + a p'_h)`.
/// For `alpha < 1` the mixture dominates the first-half frequencies, so the
/// score is always finite.
pub fn pe_plugin(first_half: &[u8], second_half: &[u8], s: usize, alpha: f64) -> f64 {
    debug_assert!(!first_half.is_empty() && !second_half.is_empty());
    let p = empirical_frequencies(first_half, s);
    let pp = empirical_frequencies(second_half, s);
    let mut acc = 0.0;
    for h in 0..s {
        let q = (1.0 - alpha) * p[h] + alpha * pp[h];
        if q <= 0.0 {
            if p[h] > 0.0 {
                return f64::INFINITY;
            }
            continue;
        }
        let r = p[h] / q;
        acc += q * (r - 1.0) * (r - 1.0);
    }
    0.5 * acc
}

/// Gaussian-kernel least-squares estimate of the relative divergence.
///
/// A linear model for the relative density ratio is fit on up to
/// `max_centers` centers taken from the first half; the coefficients solve
/// the ridge system `(H + lambda I) theta = h`, where `H` mixes the kernel
/// second moments of the two halves with weights `(1 - alpha)` and `alpha`
/// and `h` is the first-half kernel mean. The returned score combines the
/// fitted ratio on both halves:
/// `-(1-alpha)/2 mean_1[r^2] - alpha/2 mean_2[r^2] + mean_1[r] - 1/2`,
/// which matches the plug-in functional on the same mixture.
pub fn pe_kernel(
    first_half: &[u8],
    second_half: &[u8],
    params: &KernelParams,
    alpha: f64,
) -> Result<f64> {
    if first_half.is_empty() || second_half.is_empty() {
        return Err(Error::InvalidParam("kernel estimator needs nonempty halves".into()));
    }
    let x1: Vec<f64> = first_half.iter().map(|&c| c as f64).collect();
    let x2: Vec<f64> = second_half.iter().map(|&c| c as f64).collect();
    let n_centers = params.max_centers.min(x1.len());
    let centers = &x1[..n_centers];

    let sigma_base = match params.sigma {
        Some(s) => s,
        None => median_pairwise_distance(&x1, &x2).max(0.1),
    };

    let (sigma, lambda) = if params.cross_validate {
        select_by_cv(&x1, &x2, centers, sigma_base, alpha)
    } else {
        (sigma_base, params.lambda)
    };

    let score = kernel_score(&x1, &x2, centers, sigma, lambda, alpha);
    if !score.is_finite() {
        return Err(Error::NonFiniteScore(format!(
            "kernel divergence is {score} (sigma={sigma}, lambda={lambda})"
        )));
    }
    Ok(score)
}

fn kernel_score(
    x1: &[f64],
    x2: &[f64],
    centers: &[f64],
    sigma: f64,
    lambda: f64,
    alpha: f64,
) -> f64 {
    let theta = fit_ratio(x1, x2, centers, sigma, lambda, alpha);
    let r1: Vec<f64> = x1.iter().map(|&x| eval_ratio(x, centers, sigma, &theta)).collect();
    let r2: Vec<f64> = x2.iter().map(|&x| eval_ratio(x, centers, sigma, &theta)).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let mean_sq = |v: &[f64]| v.iter().map(|r| r * r).sum::<f64>() / v.len() as f64;
    -0.5 * (1.0 - alpha) * mean_sq(&r1) - 0.5 * alpha * mean_sq(&r2) + mean(&r1) - 0.5
}

fn gauss(x: f64, c: f64, sigma: f64) -> f64 {
    let d = x - c;
    (-d * d / (2.0 * sigma * sigma)).exp()
}

fn eval_ratio(x: f64, centers: &[f64], sigma: f64, theta: &[f64]) -> f64 {
    centers
        .iter()
        .zip(theta)
        .map(|(&c, &t)| t * gauss(x, c, sigma))
        .sum()
}

/// Solves `(H + lambda I) theta = h` for the ratio-model coefficients.
fn fit_ratio(
    x1: &[f64],
    x2: &[f64],
    centers: &[f64],
    sigma: f64,
    lambda: f64,
    alpha: f64,
) -> Vec<f64> {
    let m = centers.len();
    let mut h_mat = vec![0.0; m * m];
    let mut h_vec = vec![0.0; m];
    let mut feats = vec![0.0; m];

    let mut accumulate = |xs: &[f64], weight: f64, into_mean: bool| {
        let inv = weight / xs.len() as f64;
        for &x in xs {
            for (k, &c) in centers.iter().enumerate() {
                feats[k] = gauss(x, c, sigma);
            }
            for a in 0..m {
                let fa = feats[a];
                for b in a..m {
                    h_mat[a * m + b] += inv * fa * feats[b];
                }
            }
            if into_mean {
                for a in 0..m {
                    h_vec[a] += feats[a] / xs.len() as f64;
                }
            }
        }
    };
    accumulate(x1, 1.0 - alpha, true);
    accumulate(x2, alpha, false);
    // mirror the upper triangle
    for a in 0..m {
        for b in 0..a {
            h_mat[a * m + b] = h_mat[b * m + a];
        }
    }
    for a in 0..m {
        h_mat[a * m + a] += lambda;
    }
    solve_spd(&mut h_mat, &mut h_vec, m);
    h_vec
}

/// In-place Cholesky solve of an SPD system; `mat` is row-major `m x m`.
fn solve_spd(mat: &mut [f64], rhs: &mut [f64], m: usize) {
    for k in 0..m {
        let mut d = mat[k * m + k];
        for j in 0..k {
            d -= mat[k * m + j] * mat[k * m + j];
        }
        let d = d.max(1e-300).sqrt();
        mat[k * m + k] = d;
        for i in (k + 1)..m {
            let mut v = mat[i * m + k];
            for j in 0..k {
                v -= mat[i * m + j] * mat[k * m + j];
            }
            mat[i * m + k] = v / d;
        }
    }
    for i in 0..m {
        let mut v = rhs[i];
        for j in 0..i {
            v -= mat[i * m + j] * rhs[j];
        }
        rhs[i] = v / mat[i * m + i];
    }
    for i in (0..m).rev() {
        let mut v = rhs[i];
        for j in (i + 1)..m {
            v -= mat[j * m + i] * rhs[j];
        }
        rhs[i] = v / mat[i * m + i];
    }
}

/// Median of all pairwise absolute distances over the pooled window, computed
/// from value counts; ties resolve to the lower median.
fn median_pairwise_distance(x1: &[f64], x2: &[f64]) -> f64 {
    let mut values: Vec<f64> = x1.iter().chain(x2).copied().collect();
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    values.dedup();
    let counts: Vec<u64> = values
        .iter()
        .map(|v| x1.iter().chain(x2).filter(|&&x| x == *v).count() as u64)
        .collect();

    let mut dist_counts: Vec<(f64, u64)> = Vec::new();
    for a in 0..values.len() {
        for b in a..values.len() {
            let pairs = if a == b {
                counts[a] * counts[a].saturating_sub(1) / 2
            } else {
                counts[a] * counts[b]
            };
            if pairs > 0 {
                dist_counts.push(((values[b] - values[a]).abs(), pairs));
            }
        }
    }
    dist_counts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let total: u64 = dist_counts.iter().map(|&(_, c)| c).sum();
    if total == 0 {
        return 0.0;
    }
    let target = (total - 1) / 2;
    let mut seen = 0;
    for &(d, c) in &dist_counts {
        seen += c;
        if seen > target {
            return d;
        }
    }
    dist_counts.last().map(|&(d, _)| d).unwrap_or(0.0)
}

/// 5-fold cross-validation over the sigma/lambda grid; minimizes the
/// held-out least-squares objective of the ratio fit.
fn select_by_cv(
    x1: &[f64],
    x2: &[f64],
    centers: &[f64],
    sigma_base: f64,
    alpha: f64,
) -> (f64, f64) {
    const SIGMA_FACTORS: [f64; 5] = [0.6, 0.8, 1.0, 1.2, 1.4];
    const LAMBDAS: [f64; 3] = [1e-3, 1e-2, 1e-1];
    const FOLDS: usize = 5;

    let mut best = (sigma_base, LAMBDAS[1]);
    let mut best_obj = f64::INFINITY;
    for &sf in &SIGMA_FACTORS {
        let sigma = (sf * sigma_base).max(0.1);
        for &lambda in &LAMBDAS {
            let mut obj = 0.0;
            for fold in 0..FOLDS {
                let (tr1, te1) = split_fold(x1, fold, FOLDS);
                let (tr2, te2) = split_fold(x2, fold, FOLDS);
                if tr1.is_empty() || te1.is_empty() || tr2.is_empty() || te2.is_empty() {
                    continue;
                }
                let theta = fit_ratio(&tr1, &tr2, centers, sigma, lambda, alpha);
                let r1: Vec<f64> =
                    te1.iter().map(|&x| eval_ratio(x, centers, sigma, &theta)).collect();
                let r2: Vec<f64> =
                    te2.iter().map(|&x| eval_ratio(x, centers, sigma, &theta)).collect();
                let mean_sq1 = r1.iter().map(|r| r * r).sum::<f64>() / r1.len() as f64;
                let mean_sq2 = r2.iter().map(|r| r * r).sum::<f64>() / r2.len() as f64;
                let mean1 = r1.iter().sum::<f64>() / r1.len() as f64;
                obj += 0.5 * ((1.0 - alpha) * mean_sq1 + alpha * mean_sq2) - mean1;
            }
            if obj < best_obj {
                best_obj = obj;
                best = (sigma, lambda);
            }
        }
    }
    best
}

fn split_fold(xs: &[f64], fold: usize, folds: usize) -> (Vec<f64>, Vec<f64>) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, &x) in xs.iter().enumerate() {
        if i % folds == fold {
            test.push(x);
        } else {
            train.push(x);
        }
    }
    (train, test)
}

/// Number of sliding windows available on a segment of length `t_sub`.
pub fn window_count(t_sub: usize, n_w: usize, n_st: usize) -> usize {
    if t_sub < 2 * n_w {
        0
    } else {
        (t_sub - 2 * n_w) / n_st + 1
    }
}

/// Slides the two-half window over one segment and scores every position.
///
/// Window `i` covers segment positions `[i*n_st, i*n_st + 2*n_w)`, split into
/// equal halves. Segments shorter than `2*n_w` yield an empty series.
pub fn pe_series(seg: &Segment, s: usize, params: &PeParams) -> Result<PeSeries> {
    params.validate()?;
    let t_sub = seg.values.len();
    let count = window_count(t_sub, params.n_w, params.n_st);
    let mut scores = Vec::with_capacity(count);
    let mut spans = Vec::with_capacity(count);
    for i in 0..count {
        let start = i * params.n_st;
        let mid = start + params.n_w;
        let end = mid + params.n_w;
        let first = &seg.values[start..mid];
        let second = &seg.values[mid..end];
        let score = match params.estimator {
            Estimator::Plugin => pe_plugin(first, second, s, params.alpha),
            Estimator::Kernel => pe_kernel(first, second, &params.kernel, params.alpha)?,
        };
        scores.push(score);
        spans.push(WindowSpan {
            first_start: seg.time_indices[start],
            first_end: seg.time_indices[mid - 1],
            second_start: seg.time_indices[mid],
            second_end: seg.time_indices[end - 1],
        });
    }
    Ok(PeSeries {
        component: seg.component,
        lambda: seg.config_index,
        scores,
        window_spans: spans,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Independent oracle: direct summation of `0.5 E_q[(r - 1)^2]` over the
    /// domain, term by term.
    fn pe_direct_sum(p: &[f64], p_prime: &[f64], alpha_beta: f64) -> f64 {
        let mut acc = 0.0;
        for (&ph, &pph) in p.iter().zip(p_prime) {
            let q = (1.0 - alpha_beta) * ph + alpha_beta * pph;
            if q <= 0.0 {
                if ph > 0.0 {
                    return f64::INFINITY;
                }
                continue;
            }
            let r = ph / q;
            acc += q * (r - 1.0) * (r - 1.0);
        }
        0.5 * acc
    }

    fn random_simplex(rng: &mut impl Rng, s: usize) -> Vec<f64> {
        let draws: Vec<f64> = (0..s).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
        let total: f64 = draws.iter().sum();
        draws.into_iter().map(|d| d / total).collect()
    }

    fn draw_codes(rng: &mut impl Rng, p: &[f64], len: usize) -> Vec<u8> {
        (0..len)
            .map(|_| {
                let u: f64 = rng.gen();
                let mut cum = 0.0;
                for (h, &ph) in p.iter().enumerate() {
                    cum += ph;
                    if u < cum {
                        return h as u8;
                    }
                }
                (p.len() - 1) as u8
            })
            .collect()
    }

    #[test]
    fn closed_form_matches_direct_summation() {
        let v = pe_closed_form(&[0.5, 0.5], &[0.9, 0.1], 0.1);
        let oracle = pe_direct_sum(&[0.5, 0.5], &[0.9, 0.1], 0.1);
        assert!((v - oracle).abs() < 1e-15, "{v} vs {oracle}");
        assert!((v - 0.003220611916264105).abs() < 1e-12, "{v}");

        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..500 {
            let s = rng.gen_range(2..6);
            let p = random_simplex(&mut rng, s);
            let pp = random_simplex(&mut rng, s);
            let ab: f64 = rng.gen();
            let v = pe_closed_form(&p, &pp, ab);
            let o = pe_direct_sum(&p, &pp, ab);
            assert!((v - o).abs() < 1e-12, "{v} vs {o}");
        }
    }

    #[test]
    fn closed_form_zero_cases() {
        let p = [0.3, 0.7];
        assert!(pe_closed_form(&p, &p, 0.5).abs() < 1e-15);
        assert!(pe_closed_form(&p, &[0.9, 0.1], 0.0).abs() < 1e-15);
    }

    #[test]
    fn closed_form_nonnegative_and_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..200 {
            let s = rng.gen_range(2..5);
            let p = random_simplex(&mut rng, s);
            let pp = random_simplex(&mut rng, s);
            let mut prev = 0.0;
            for k in 0..=50 {
                let ab = k as f64 / 50.0;
                let v = pe_closed_form(&p, &pp, ab);
                assert!(v >= -1e-15, "negative divergence {v}");
                assert!(v >= prev - 1e-12, "not monotone at ab={ab}: {v} < {prev}");
                prev = v;
            }
        }
    }

    #[test]
    fn closed_form_infinite_on_empty_support() {
        let v = pe_closed_form(&[0.5, 0.5], &[1.0, 0.0], 1.0);
        assert!(v.is_infinite() && v > 0.0);
    }

    #[test]
    fn plugin_equals_closed_form_on_population_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..300 {
            let s = rng.gen_range(2..5);
            // integer counts give exact empirical frequencies
            let c1: Vec<usize> = (0..s).map(|_| rng.gen_range(1..40)).collect();
            let c2: Vec<usize> = (0..s).map(|_| rng.gen_range(1..40)).collect();
            let mk = |c: &[usize]| -> Vec<u8> {
                c.iter()
                    .enumerate()
                    .flat_map(|(h, &k)| std::iter::repeat_n(h as u8, k))
                    .collect()
            };
            let first = mk(&c1);
            let second = mk(&c2);
            let p = empirical_frequencies(&first, s);
            let pp = empirical_frequencies(&second, s);
            let alpha = rng.gen_range(0.01..0.99);
            let plug = pe_plugin(&first, &second, s, alpha);
            let closed = pe_closed_form(&p, &pp, alpha);
            assert!((plug - closed).abs() < 1e-12, "{plug} vs {closed}");
        }
    }

    #[test]
    fn plugin_zero_on_identical_multisets() {
        let first = [0u8, 1, 0, 1, 1];
        let mut second = first;
        second.reverse();
        assert!(pe_plugin(&first, &second, 2, 0.1).abs() < 1e-15);
    }

    #[test]
    fn plugin_near_zero_under_null() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let mut ok = 0;
        let trials = 1000;
        for _ in 0..trials {
            let p = random_simplex(&mut rng, 2);
            let first = draw_codes(&mut rng, &p, 50);
            let second = draw_codes(&mut rng, &p, 50);
            if pe_plugin(&first, &second, 2, 0.1).abs() < 0.1 {
                ok += 1;
            }
        }
        assert!(ok as f64 >= 0.95 * trials as f64, "only {ok}/{trials} below 0.1");
    }

    #[test]
    fn plugin_consistent_with_oracle_at_large_windows() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let p = [0.5, 0.5];
        let pp = [0.9, 0.1];
        let target = pe_closed_form(&p, &pp, 0.1);
        let mut ok = 0;
        let trials = 200;
        for _ in 0..trials {
            let first = draw_codes(&mut rng, &p, 500);
            let second = draw_codes(&mut rng, &pp, 500);
            let v = pe_plugin(&first, &second, 2, 0.1);
            if (v - target).abs() < 0.02 {
                ok += 1;
            }
        }
        assert!(ok as f64 >= 0.9 * trials as f64, "only {ok}/{trials} within 0.02");
    }

    #[test]
    fn kernel_near_zero_on_identical_halves() {
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        for &n_w in &[50usize, 200] {
            let p = [0.4, 0.6];
            let first = draw_codes(&mut rng, &p, n_w);
            let v = pe_kernel(&first, &first, &KernelParams::default(), 0.1).unwrap();
            assert!(v.abs() < 0.05, "n_w={n_w}: {v}");
        }
    }

    #[test]
    fn kernel_agrees_with_plugin_on_binary_windows() {
        let mut rng = ChaCha8Rng::seed_from_u64(27);
        let p = [0.5, 0.5];
        let pp = [0.9, 0.1];
        for _ in 0..20 {
            let first = draw_codes(&mut rng, &p, 500);
            let second = draw_codes(&mut rng, &pp, 500);
            let kernel = pe_kernel(&first, &second, &KernelParams::default(), 0.1).unwrap();
            let plugin = pe_plugin(&first, &second, 2, 0.1);
            assert!((kernel - plugin).abs() < 0.05, "{kernel} vs {plugin}");
        }
    }

    /// The gap between the two estimators shrinks as windows grow.
    #[test]
    fn kernel_plugin_gap_shrinks_with_window_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let p = [0.6, 0.4];
        let pp = [0.2, 0.8];
        let mut gaps = Vec::new();
        for &n_w in &[100usize, 500, 2000] {
            let mut total = 0.0;
            let reps = 10;
            for _ in 0..reps {
                let first = draw_codes(&mut rng, &p, n_w);
                let second = draw_codes(&mut rng, &pp, n_w);
                let kernel =
                    pe_kernel(&first, &second, &KernelParams::default(), 0.1).unwrap();
                let plugin = pe_plugin(&first, &second, 2, 0.1);
                total += (kernel - plugin).abs();
            }
            gaps.push(total / reps as f64);
        }
        assert!(gaps[2] < 0.01, "gap at n_w=2000 is {}", gaps[2]);
        assert!(
            gaps[2] <= gaps[0] + 0.01,
            "gap did not shrink: {gaps:?}"
        );
    }

    #[test]
    fn kernel_sigma_clamped_on_degenerate_distances() {
        // all-equal pooled window: median distance 0, clamped to 0.1
        let first = vec![1u8; 60];
        let second = vec![1u8; 60];
        let v = pe_kernel(&first, &second, &KernelParams::default(), 0.1).unwrap();
        assert!(v.is_finite());
        assert!(v.abs() < 0.05, "{v}");
    }

    #[test]
    fn kernel_cross_validation_runs_and_agrees() {
        let mut rng = ChaCha8Rng::seed_from_u64(28);
        let first = draw_codes(&mut rng, &[0.5, 0.5], 200);
        let second = draw_codes(&mut rng, &[0.9, 0.1], 200);
        let params = KernelParams { cross_validate: true, ..Default::default() };
        let cv = pe_kernel(&first, &second, &params, 0.1).unwrap();
        let plain = pe_kernel(&first, &second, &KernelParams::default(), 0.1).unwrap();
        assert!((cv - plain).abs() < 0.05, "{cv} vs {plain}");
    }

    #[test]
    fn median_distance_on_balanced_binary_is_one() {
        let x1 = vec![0.0; 500];
        let x2 = vec![1.0; 500];
        assert_eq!(median_pairwise_distance(&x1, &x2), 1.0);
    }

    fn toy_segment(values: Vec<u8>) -> Segment {
        let time_indices = (10..10 + values.len()).collect();
        Segment { component: 0, config_index: 0, values, time_indices }
    }

    #[test]
    fn series_length_formula() {
        let params = |n_w, n_st| PeParams { n_w, n_st, ..Default::default() };
        // exactly one window
        let seg = toy_segment([0u8, 1].repeat(10));
        let series = pe_series(&seg, 2, &params(10, 1)).unwrap();
        assert_eq!(series.scores.len(), 1);
        // below the threshold: empty
        let seg = toy_segment([0u8, 1].repeat(10)[..19].to_vec());
        let series = pe_series(&seg, 2, &params(10, 1)).unwrap();
        assert!(series.is_empty());
        // sweep
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..200 {
            let t_sub = rng.gen_range(1..200);
            let n_w = rng.gen_range(2..20usize);
            let n_st = rng.gen_range(1..5);
            let seg = toy_segment((0..t_sub).map(|i| (i % 2) as u8).collect());
            let series = pe_series(&seg, 2, &params(n_w, n_st)).unwrap();
            let expect = if t_sub >= 2 * n_w { (t_sub - 2 * n_w) / n_st + 1 } else { 0 };
            assert_eq!(series.scores.len(), expect, "t_sub={t_sub} n_w={n_w} n_st={n_st}");
            assert_eq!(series.window_spans.len(), expect);
        }
    }

    #[test]
    fn series_peaks_near_embedded_change() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let change = 600;
        let mut values = draw_codes(&mut rng, &[0.85, 0.15], change);
        values.extend(draw_codes(&mut rng, &[0.15, 0.85], 600));
        let seg = toy_segment(values);
        let params = PeParams { n_w: 50, n_st: 1, ..Default::default() };
        let series = pe_series(&seg, 2, &params).unwrap();
        let (peak_i, peak) = series.peak().unwrap();
        // the winning window boundary should sit near the embedded change
        let boundary = peak_i + 50;
        assert!(
            (boundary as i64 - change as i64).abs() < 100,
            "peak boundary {boundary} vs change {change}"
        );
        // windows fully inside one regime stay below the peak
        let early_max = series.scores[..400].iter().cloned().fold(0.0_f64, f64::max);
        assert!(early_max < peak, "early max {early_max} vs peak {peak}");
        let late_max = series.scores[800..].iter().cloned().fold(0.0_f64, f64::max);
        assert!(late_max < peak, "late max {late_max} vs peak {peak}");
    }
}
