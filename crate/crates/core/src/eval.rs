//! Trial harness: generate, detect, score against ground truth, and
//! aggregate estimation error and accuracy-vs-Q across many seeded trials.
//!
//! Trials run as a parallel map over seeds derived from the batch seed, and
//! aggregation is a sequential fold in trial order, so batch results are
//! reproducible bit-exactly regardless of thread count. Raw per-trial
//! records are kept alongside the aggregates so every reported number can be
//! recomputed from the log.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector::{detect, DetectorConfig};
use crate::scm_gen::{random_spec, simulate, GeneratorConfig};
use crate::{Error, Result};

/// Derives a child seed for one trial from the batch seed; a splittable
/// discipline so parallel trials never share RNG state.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A change-point method scored by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// The full detection pipeline.
    Causal,
    /// The change-in-mean baseline applied to each raw component series.
    MeanChange,
    /// Returns the true change point; a harness sanity check.
    Oracle,
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::Causal => "causal",
            Method::MeanChange => "mean_change",
            Method::Oracle => "oracle",
        }
    }
}

/// Result of the change-in-mean scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    /// Estimated first index of the right-hand block.
    pub index: usize,
    pub statistic: f64,
    /// The series was constant; the midpoint was returned.
    pub constant: bool,
}

/// CUSUM-style change-in-mean scan: argmax over split points `k` of
/// `|mean(left) - mean(right)| * sqrt(k (L - k) / L)`. Ties keep the smallest
/// split; constant input returns the midpoint, flagged.
pub fn mean_change_baseline(series: &[u8]) -> Result<BaselineResult> {
    let len = series.len();
    if len < 4 {
        return Err(Error::InvalidParam(format!(
            "baseline needs at least 4 samples, got {len}"
        )));
    }
    let total: f64 = series.iter().map(|&v| v as f64).sum();
    let mut best_k = 0usize;
    let mut best_stat = f64::NEG_INFINITY;
    let mut left_sum = 0.0;
    for k in 1..len {
        left_sum += series[k - 1] as f64;
        let right_sum = total - left_sum;
        let left_mean = left_sum / k as f64;
        let right_mean = right_sum / (len - k) as f64;
        let stat = (left_mean - right_mean).abs()
            * ((k as f64) * ((len - k) as f64) / len as f64).sqrt();
        if stat > best_stat {
            best_stat = stat;
            best_k = k;
        }
    }
    if best_stat <= 0.0 {
        return Ok(BaselineResult { index: len / 2, statistic: 0.0, constant: true });
    }
    Ok(BaselineResult { index: best_k, statistic: best_stat, constant: false })
}

/// Settings for one batch of trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialBatchConfig {
    /// Label carried into every report row.
    pub setting: String,
    /// Generator template; its seed field is replaced per trial.
    pub generator: GeneratorConfig,
    pub detector: DetectorConfig,
    pub n_trials: usize,
    pub seed: u64,
    /// Interval half-lengths for the accuracy curve, increasing.
    pub q_grid: Vec<usize>,
    pub methods: Vec<Method>,
}

impl TrialBatchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trials < 1 {
            return Err(Error::InvalidParam("n_trials must be >= 1".into()));
        }
        if self.q_grid.is_empty()
            || self.q_grid[0] == 0
            || !self.q_grid.windows(2).all(|w| w[0] < w[1])
        {
            return Err(Error::InvalidParam(
                "q_grid must be nonempty, positive, and increasing".into(),
            ));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidParam("at least one method required".into()));
        }
        self.detector.validate()
    }
}

/// One scored (trial, component, method) outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub component: usize,
    pub method: Method,
    pub t_true: usize,
    pub t_est: f64,
    /// `|t_est - t_true|` in original time units.
    pub abs_error: f64,
    /// `abs_error / T`.
    pub rel_error: f64,
}

/// A trial or component that produced no estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub trial: usize,
    pub component: Option<usize>,
    pub method: Method,
    pub reason: String,
}

/// Aggregates for one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodMetrics {
    pub method: Method,
    pub n_scored: usize,
    /// Mean of the relative estimation error.
    pub mean_error: f64,
    /// Sample standard deviation of the relative error over sqrt(n).
    pub stderr_error: f64,
    /// `(Q, fraction of records with abs_error <= Q)` per grid entry.
    pub accuracy: Vec<(usize, f64)>,
}

/// Everything a batch produced. Wall-clock numbers are excluded from
/// serialization so written artifacts stay byte-identical across reruns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub setting: String,
    pub t_len: usize,
    pub methods: Vec<MethodMetrics>,
    pub records: Vec<TrialRecord>,
    pub failures: Vec<TrialFailure>,
    #[serde(skip)]
    pub mean_trial_ms: f64,
}

/// Runs the batch: per trial, generate a fresh process with a derived seed,
/// simulate it, and score every requested method against the ground truth.
pub fn run_batch(cfg: &TrialBatchConfig) -> Result<MetricsReport> {
    cfg.validate()?;
    let outcomes: Vec<(Vec<TrialRecord>, Vec<TrialFailure>, f64)> = (0..cfg.n_trials)
        .into_par_iter()
        .map(|trial| run_trial(cfg, trial))
        .collect::<Result<_>>()?;

    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut total_ms = 0.0;
    for (recs, fails, ms) in outcomes {
        records.extend(recs);
        failures.extend(fails);
        total_ms += ms;
    }

    let methods = cfg
        .methods
        .iter()
        .map(|&method| summarize(method, &records, &cfg.q_grid))
        .collect();

    Ok(MetricsReport {
        setting: cfg.setting.clone(),
        t_len: cfg.generator.t_len,
        methods,
        records,
        failures,
        mean_trial_ms: total_ms / cfg.n_trials as f64,
    })
}

fn run_trial(
    cfg: &TrialBatchConfig,
    trial: usize,
) -> Result<(Vec<TrialRecord>, Vec<TrialFailure>, f64)> {
    let start = Instant::now();
    let generator = GeneratorConfig {
        seed: derive_seed(cfg.seed, trial as u64),
        ..cfg.generator.clone()
    };
    let spec = random_spec(&generator)?;
    let (ds, truth) = simulate(&spec)?;
    let t_len = ds.t_len() as f64;

    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut score = |method: Method, component: usize, t_est: f64| {
        let t_true = truth.change_points[component];
        let abs_error = (t_est - t_true as f64).abs();
        records.push(TrialRecord {
            trial,
            component,
            method,
            t_true,
            t_est,
            abs_error,
            rel_error: abs_error / t_len,
        });
    };

    for &method in &cfg.methods {
        match method {
            Method::Causal => match detect(&ds, &cfg.detector) {
                Ok(report) => {
                    for comp in &report.components {
                        match &comp.detection {
                            Some(d) => score(method, comp.component, d.projected_time),
                            None => failures.push(TrialFailure {
                                trial,
                                component: Some(comp.component),
                                method,
                                reason: comp
                                    .no_detection_reason
                                    .clone()
                                    .unwrap_or_else(|| "no detection".into()),
                            }),
                        }
                    }
                }
                Err(err) => failures.push(TrialFailure {
                    trial,
                    component: None,
                    method,
                    reason: err.to_string(),
                }),
            },
            Method::MeanChange => {
                for j in 0..ds.n() {
                    match mean_change_baseline(ds.series(j)) {
                        Ok(result) => score(method, j, result.index as f64),
                        Err(err) => failures.push(TrialFailure {
                            trial,
                            component: Some(j),
                            method,
                            reason: err.to_string(),
                        }),
                    }
                }
            }
            Method::Oracle => {
                for j in 0..ds.n() {
                    score(method, j, truth.change_points[j] as f64);
                }
            }
        }
    }
    Ok((records, failures, start.elapsed().as_secs_f64() * 1000.0))
}

fn summarize(method: Method, records: &[TrialRecord], q_grid: &[usize]) -> MethodMetrics {
    let errs: Vec<f64> = records
        .iter()
        .filter(|r| r.method == method)
        .map(|r| r.rel_error)
        .collect();
    let n = errs.len();
    let mean = if n > 0 { errs.iter().sum::<f64>() / n as f64 } else { f64::NAN };
    let stderr = if n > 1 {
        let var =
            errs.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (n as f64 - 1.0);
        (var / n as f64).sqrt()
    } else {
        0.0
    };
    let accuracy = q_grid
        .iter()
        .map(|&q| {
            let hits = records
                .iter()
                .filter(|r| r.method == method && r.abs_error <= q as f64)
                .count();
            (q, if n > 0 { hits as f64 / n as f64 } else { 0.0 })
        })
        .collect();
    MethodMetrics { method, n_scored: n, mean_error: mean, stderr_error: stderr, accuracy }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Domain;
    use crate::detector::detect_with_parents;
    use crate::pcmci::ParentGraph;
    use crate::scm_gen::{
        ChangeKind, ComponentRegimes, Cpt, LaggedLink, LaggedParentSet, RegimeMechanism,
        ScmSpec,
    };
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn derive_seed_is_stable_and_spread() {
        assert_eq!(derive_seed(7, 0), derive_seed(7, 0));
        assert_ne!(derive_seed(7, 0), derive_seed(7, 1));
        assert_ne!(derive_seed(7, 0), derive_seed(8, 0));
    }

    #[test]
    fn baseline_finds_an_ideal_step_exactly() {
        for k in [1usize, 7, 100, 399] {
            let mut series = vec![0u8; 400];
            for v in series.iter_mut().skip(k) {
                *v = 1;
            }
            let result = mean_change_baseline(&series).unwrap();
            assert_eq!(result.index, k, "step at {k}");
            assert!(!result.constant);
        }
    }

    #[test]
    fn baseline_flags_constant_series() {
        let result = mean_change_baseline(&[1u8; 64]).unwrap();
        assert_eq!(result.index, 32);
        assert!(result.constant);
    }

    #[test]
    fn baseline_rejects_tiny_input() {
        assert!(mean_change_baseline(&[0, 1, 0]).is_err());
    }

    #[test]
    fn baseline_null_accuracy_matches_the_chance_rate() {
        let t_len = 2000usize;
        let q = 100usize;
        let mut hits = 0;
        let trials = 200;
        for seed in 0..trials {
            let mut rng = ChaCha8Rng::seed_from_u64(7000 + seed);
            let series: Vec<u8> = (0..t_len).map(|_| rng.gen_range(0..2)).collect();
            let result = mean_change_baseline(&series).unwrap();
            // score against an arbitrary fixed reference point
            if (result.index as i64 - 1000).unsigned_abs() as usize <= q {
                hits += 1;
            }
        }
        let rate = hits as f64 / trials as f64;
        // chance rate is about 2Q/T = 0.1; null splits cluster mildly toward
        // the middle, so accept a generous band around it
        assert!((0.01..0.45).contains(&rate), "rate {rate}");
    }

    /// Mechanism flips while the marginal mean stays constant: the baseline
    /// is blind, the pipeline is not.
    fn flip_spec(seed: u64, t_len: usize, tc: usize) -> ScmSpec {
        let parents = LaggedParentSet::new(vec![LaggedLink::new(0, 1)]);
        let pre = RegimeMechanism::new(
            parents.clone(),
            Cpt::new(vec![vec![0.2, 0.8], vec![0.8, 0.2]], 2).unwrap(),
            2,
        )
        .unwrap();
        let post = RegimeMechanism::new(
            parents,
            Cpt::new(vec![vec![0.8, 0.2], vec![0.2, 0.8]], 2).unwrap(),
            2,
        )
        .unwrap();
        ScmSpec {
            n: 1,
            t_len,
            tau_max: 1,
            domain: Domain::binary(),
            change_points: vec![tc],
            regimes: vec![ComponentRegimes { pre, post }],
            change_kind: vec![ChangeKind::Soft],
            margin: 100,
            seed,
        }
    }

    #[test]
    fn mean_blind_changes_separate_the_methods() {
        let q = 150.0;
        let trials = 20;
        let mut causal_hits = 0;
        let mut baseline_hits = 0;
        for seed in 0..trials {
            let tc = 1500 + (seed as usize * 37) % 1000;
            let spec = flip_spec(800 + seed, 4000, tc);
            let (ds, truth) = simulate(&spec).unwrap();
            let graph =
                ParentGraph::new(vec![LaggedParentSet::new(vec![LaggedLink::new(0, 1)])]);
            let report =
                detect_with_parents(&ds, &graph, &DetectorConfig::default()).unwrap();
            if let Some(d) = &report.components[0].detection {
                if (d.projected_time - truth.change_points[0] as f64).abs() <= q {
                    causal_hits += 1;
                }
            }
            let base = mean_change_baseline(ds.series(0)).unwrap();
            if (base.index as f64 - truth.change_points[0] as f64).abs() <= q {
                baseline_hits += 1;
            }
        }
        assert!(
            causal_hits >= baseline_hits + 5,
            "causal {causal_hits}, baseline {baseline_hits} over {trials} trials"
        );
    }

    fn small_batch(seed: u64) -> TrialBatchConfig {
        TrialBatchConfig {
            setting: "smoke".into(),
            generator: GeneratorConfig {
                n: 2,
                t_len: 3000,
                tau_max: 2,
                domain: Domain::binary(),
                spa_size: 1,
                change_kind: ChangeKind::Soft,
                margin: 300,
                min_divergence: 0.05,
                min_influence: 0.2,
                seed: 0,
            },
            detector: DetectorConfig::default(),
            n_trials: 6,
            seed,
            q_grid: vec![50, 100, 200, 400],
            methods: vec![Method::Causal, Method::MeanChange, Method::Oracle],
        }
    }

    #[test]
    fn oracle_method_scores_perfectly() {
        let report = run_batch(&small_batch(71)).unwrap();
        let oracle = report.methods.iter().find(|m| m.method == Method::Oracle).unwrap();
        assert_eq!(oracle.mean_error, 0.0);
        for &(_, acc) in &oracle.accuracy {
            assert_eq!(acc, 1.0);
        }
    }

    #[test]
    fn aggregates_are_recomputable_from_records() {
        let report = run_batch(&small_batch(72)).unwrap();
        for m in &report.methods {
            let errs: Vec<f64> = report
                .records
                .iter()
                .filter(|r| r.method == m.method)
                .map(|r| r.rel_error)
                .collect();
            assert_eq!(m.n_scored, errs.len());
            let mean = errs.iter().sum::<f64>() / errs.len() as f64;
            assert!((m.mean_error - mean).abs() < 1e-12);
            let var = errs.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>()
                / (errs.len() as f64 - 1.0);
            let stderr = (var / errs.len() as f64).sqrt();
            assert!((m.stderr_error - stderr).abs() < 1e-12);
            for &(q, acc) in &m.accuracy {
                let hits = report
                    .records
                    .iter()
                    .filter(|r| r.method == m.method && r.abs_error <= q as f64)
                    .count();
                assert_eq!(acc, hits as f64 / errs.len() as f64);
            }
        }
    }

    #[test]
    fn accuracy_is_nondecreasing_in_q() {
        let report = run_batch(&small_batch(73)).unwrap();
        for m in &report.methods {
            for pair in m.accuracy.windows(2) {
                assert!(pair[0].1 <= pair[1].1);
            }
        }
    }

    #[test]
    fn batches_reproduce_bit_exactly() {
        let a = run_batch(&small_batch(74)).unwrap();
        let b = run_batch(&small_batch(74)).unwrap();
        // timing fields are skipped by serialization on purpose
        assert_eq!(
            serde_json::to_value(&a).unwrap(),
            serde_json::to_value(&b).unwrap()
        );
    }

    #[test]
    fn invalid_q_grid_is_rejected() {
        let mut cfg = small_batch(75);
        cfg.q_grid = vec![100, 50];
        assert!(run_batch(&cfg).is_err());
    }
}
