//! Superset-parent discovery over non-overlapping intervals, and refinement
//! of the parent sets on either side of an estimated change point.
//!
//! Discovery runs a two-phase procedure per interval and per target
//! component: condition selection iteratively prunes the lagged candidates,
//! testing each against the strongest currently retained parents with
//! growing conditioning sets; the momentary-conditional-independence phase
//! then retests every surviving link given the selected parents of both
//! endpoints (source parents time-shifted by the link lag). The union of the
//! per-interval graphs is returned, so a mechanism that is only active in
//! part of the series still contributes its edges — samples within at least
//! one interval are dominated by each regime when the change point respects
//! the boundary margins.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::citest::{g_test, CiQuery};
use crate::dataset::Dataset;
use crate::scm_gen::{LaggedLink, LaggedParentSet};
use crate::{Error, Result};

/// Knobs of the discovery pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryConfig {
    /// Largest lag scanned; should be at least the true maximum lag.
    pub tau_ub: usize,
    /// Significance level of the conditional-independence tests.
    pub alpha_level: f64,
    /// Number of non-overlapping intervals whose graphs are unioned.
    pub n_intervals: usize,
    /// Cap on the conditioning-set size during condition selection.
    pub pc_max_conds: usize,
    /// Per-sample statistic floor for the momentary-CI and refinement tests.
    /// A pure significance gate keeps every vanishing-effect dependency once
    /// the sample is large enough; this floor makes link retention
    /// scale-consistent. Zero disables it.
    #[serde(default = "default_min_effect")]
    pub min_effect: f64,
}

fn default_min_effect() -> f64 {
    0.03
}

impl Default for DiscoveryConfig {
    fn default() -> Self {
        DiscoveryConfig {
            tau_ub: 5,
            alpha_level: 1e-4,
            n_intervals: 2,
            pc_max_conds: 3,
            min_effect: default_min_effect(),
        }
    }
}

impl DiscoveryConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tau_ub < 1 {
            return Err(Error::InvalidParam("tau_ub must be >= 1".into()));
        }
        if self.n_intervals < 1 {
            return Err(Error::InvalidParam("n_intervals must be >= 1".into()));
        }
        if !(self.alpha_level > 0.0 && self.alpha_level < 1.0) {
            return Err(Error::InvalidParam("alpha_level must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Minimum samples an interval needs so the contingency tables of the
/// largest conditioning sets stay populated.
pub fn min_interval_samples(s: usize, pc_max_conds: usize) -> usize {
    20usize.saturating_mul(s.saturating_pow(pc_max_conds as u32 + 2))
}

/// One estimated parent set per component; the time-translation-invariant
/// summary graph over lags `1..=tau_ub`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParentGraph {
    parents: Vec<LaggedParentSet>,
}

impl ParentGraph {
    pub fn new(parents: Vec<LaggedParentSet>) -> Self {
        ParentGraph { parents }
    }

    pub fn n(&self) -> usize {
        self.parents.len()
    }

    pub fn get(&self, j: usize) -> &LaggedParentSet {
        &self.parents[j]
    }

    pub fn parents(&self) -> &[LaggedParentSet] {
        &self.parents
    }

    pub fn union(&self, other: &ParentGraph) -> ParentGraph {
        let parents = self
            .parents
            .iter()
            .zip(&other.parents)
            .map(|(a, b)| a.union(b))
            .collect();
        ParentGraph { parents }
    }

    /// Component-keyed JSON view: `{"X1": [["X1", 1], ["X2", 2]], ...}`.
    pub fn to_named_json(&self, names: &[String]) -> serde_json::Value {
        let mut map = serde_json::Map::new();
        for (j, set) in self.parents.iter().enumerate() {
            let entries: Vec<serde_json::Value> = set
                .links()
                .iter()
                .map(|l| serde_json::json!([names[l.component], l.lag]))
                .collect();
            map.insert(names[j].clone(), serde_json::Value::Array(entries));
        }
        serde_json::Value::Object(map)
    }

    /// Parses the component-keyed JSON view back into a graph. Components
    /// missing from the document get empty parent sets.
    pub fn from_named_json(value: &serde_json::Value, names: &[String]) -> Result<Self> {
        let obj = value
            .as_object()
            .ok_or_else(|| Error::InvalidParam("parent graph JSON must be an object".into()))?;
        let index_of = |name: &str| -> Result<usize> {
            names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::InvalidParam(format!("unknown component {name:?}")))
        };
        let mut parents = vec![LaggedParentSet::empty(); names.len()];
        for (name, entries) in obj {
            let j = index_of(name)?;
            let list = entries
                .as_array()
                .ok_or_else(|| Error::InvalidParam(format!("{name}: expected an array")))?;
            let mut links = Vec::with_capacity(list.len());
            for entry in list {
                let pair = entry.as_array().filter(|p| p.len() == 2).ok_or_else(|| {
                    Error::InvalidParam(format!("{name}: expected [component, lag] pairs"))
                })?;
                let comp = pair[0]
                    .as_str()
                    .ok_or_else(|| Error::InvalidParam(format!("{name}: bad component")))?;
                let lag = pair[1]
                    .as_u64()
                    .filter(|&l| l >= 1)
                    .ok_or_else(|| Error::InvalidParam(format!("{name}: bad lag")))?;
                links.push(LaggedLink::new(index_of(comp)?, lag as usize));
            }
            parents[j] = LaggedParentSet::new(links);
        }
        Ok(ParentGraph::new(parents))
    }
}

/// The consecutive, equal-as-possible intervals discovery runs on.
pub fn interval_ranges(t_len: usize, tau_ub: usize, n_intervals: usize) -> Vec<Range<usize>> {
    let total = t_len.saturating_sub(tau_ub);
    (0..n_intervals)
        .map(|k| {
            let start = tau_ub + total * k / n_intervals;
            let end = tau_ub + total * (k + 1) / n_intervals;
            start..end
        })
        .collect()
}

/// Estimates a superset of each component's union parent set by running the
/// two-phase discovery per interval and unioning the retained links.
pub fn discover_superset(ds: &Dataset, cfg: &DiscoveryConfig) -> Result<ParentGraph> {
    cfg.validate()?;
    let required = min_interval_samples(ds.domain().size(), cfg.pc_max_conds);
    let ranges = interval_ranges(ds.t_len(), cfg.tau_ub, cfg.n_intervals);
    for (k, range) in ranges.iter().enumerate() {
        if range.len() < required {
            return Err(Error::IntervalTooShort {
                index: k,
                count: cfg.n_intervals,
                length: range.len(),
                required,
            });
        }
    }
    let mut graph = ParentGraph::new(vec![LaggedParentSet::empty(); ds.n()]);
    for range in ranges {
        graph = graph.union(&discover_in_range(ds, cfg, range)?);
    }
    Ok(graph)
}

/// The two-phase discovery on a single sample range.
pub fn discover_in_range(
    ds: &Dataset,
    cfg: &DiscoveryConfig,
    range: Range<usize>,
) -> Result<ParentGraph> {
    cfg.validate()?;
    let required = min_interval_samples(ds.domain().size(), cfg.pc_max_conds);
    if range.len() < required {
        return Err(Error::IntervalTooShort {
            index: 0,
            count: 1,
            length: range.len(),
            required,
        });
    }

    let selected: Vec<Vec<(LaggedLink, f64)>> = (0..ds.n())
        .into_par_iter()
        .map(|j| select_parents(ds, cfg, range.clone(), j))
        .collect::<Result<_>>()?;

    let pruned: Vec<LaggedParentSet> = (0..ds.n())
        .into_par_iter()
        .map(|j| mci_prune(ds, cfg, range.clone(), j, &selected))
        .collect::<Result<_>>()?;

    Ok(ParentGraph::new(pruned))
}

fn rank_links(links: &mut [(LaggedLink, f64)]) {
    links.sort_by(|a, b| {
        b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal).then(a.0.cmp(&b.0))
    });
}

/// Condition-selection phase: prune the full candidate set with conditioning
/// sets of growing size, always conditioning on the strongest other
/// candidates still retained. Strength is the latest test statistic; ties
/// break by (component, lag) order. Returns the survivors ranked by
/// strength.
fn select_parents(
    ds: &Dataset,
    cfg: &DiscoveryConfig,
    range: Range<usize>,
    target: usize,
) -> Result<Vec<(LaggedLink, f64)>> {
    let mut retained: Vec<(LaggedLink, f64)> = Vec::new();
    for component in 0..ds.n() {
        for lag in 1..=cfg.tau_ub {
            let link = LaggedLink::new(component, lag);
            let verdict = g_test(
                ds,
                &CiQuery {
                    x: link,
                    y: target,
                    cond: LaggedParentSet::empty(),
                    alpha_level: cfg.alpha_level,
                },
                range.clone(),
            )?;
            if !verdict.independent {
                retained.push((link, verdict.statistic));
            }
        }
    }

    for level in 1..=cfg.pc_max_conds {
        if retained.len() <= level {
            break;
        }
        rank_links(&mut retained);
        let snapshot = retained.clone();
        let mut next = Vec::with_capacity(snapshot.len());
        for &(link, _) in &snapshot {
            let cond_links: Vec<LaggedLink> = snapshot
                .iter()
                .map(|&(l, _)| l)
                .filter(|l| *l != link)
                .take(level)
                .collect();
            let verdict = g_test(
                ds,
                &CiQuery {
                    x: link,
                    y: target,
                    cond: LaggedParentSet::new(cond_links),
                    alpha_level: cfg.alpha_level,
                },
                range.clone(),
            )?;
            if !verdict.independent {
                next.push((link, verdict.statistic));
            }
        }
        retained = next;
    }

    rank_links(&mut retained);
    Ok(retained)
}

/// Momentary-conditional-independence phase: keep a selected link only if it
/// stays dependent given the strongest other selected parents of the target
/// plus the strongest selected parents of the source, shifted by the link
/// lag. Each side contributes at most `pc_max_conds` conditions so the
/// contingency tables stay populated; an unbounded conditioning set starves
/// every stratum and the test degenerates into keeping everything.
fn mci_prune(
    ds: &Dataset,
    cfg: &DiscoveryConfig,
    range: Range<usize>,
    target: usize,
    selected: &[Vec<(LaggedLink, f64)>],
) -> Result<LaggedParentSet> {
    let own = &selected[target];
    let mut kept = Vec::new();
    for &(link, _) in own {
        let cond = mci_condition_set(own, &selected[link.component], &link, cfg.pc_max_conds);
        let verdict = g_test(
            ds,
            &CiQuery { x: link, y: target, cond, alpha_level: cfg.alpha_level },
            range.clone(),
        )?;
        if retain_link(&verdict, cfg) {
            kept.push(link);
        }
    }
    Ok(LaggedParentSet::new(kept))
}

/// A link survives when the test says dependent and, if the test actually
/// ran (rather than defaulting to dependent on starved tables), the
/// per-sample statistic clears the effect floor.
fn retain_link(verdict: &crate::citest::CiVerdict, cfg: &DiscoveryConfig) -> bool {
    if verdict.independent {
        return false;
    }
    let forced = verdict.p_value > cfg.alpha_level;
    forced
        || cfg.min_effect <= 0.0
        || verdict.statistic >= cfg.min_effect * verdict.effective_samples as f64
}

/// Strongest `cap` of `(parents(target) \ {link})`, plus the strongest `cap`
/// of `shift(parents(source), lag)`, minus the tested link. Both inputs are
/// ranked by strength.
fn mci_condition_set(
    target_parents: &[(LaggedLink, f64)],
    source_parents: &[(LaggedLink, f64)],
    link: &LaggedLink,
    cap: usize,
) -> LaggedParentSet {
    let mut cond: Vec<LaggedLink> = target_parents
        .iter()
        .map(|&(l, _)| l)
        .filter(|l| l != link)
        .take(cap)
        .collect();
    cond.extend(
        source_parents
            .iter()
            .map(|&(l, _)| LaggedLink::new(l.component, l.lag + link.lag))
            .filter(|l| l != link)
            .take(cap),
    );
    LaggedParentSet::new(cond).without(link)
}

/// Which side of a split a refinement flag refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Pre,
    Post,
}

/// A side that could not be pruned and was returned untouched.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefineFlag {
    pub component: usize,
    pub side: Side,
    pub reason: String,
}

/// Result of [`refine_after_split`]: pruned graphs for both sides, with
/// flags for the sides left unpruned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineOutcome {
    pub pre: ParentGraph,
    pub post: ParentGraph,
    pub flags: Vec<RefineFlag>,
}

/// Reruns the momentary-CI removal test on the samples before and after each
/// component's split time, pruning the superset graph into per-regime parent
/// sets. Pruning never adds links; a side with too few samples keeps the
/// full superset and is flagged.
pub fn refine_after_split(
    ds: &Dataset,
    spa_hat: &ParentGraph,
    split_times: &[Option<f64>],
    cfg: &DiscoveryConfig,
) -> Result<RefineOutcome> {
    cfg.validate()?;
    if split_times.len() != ds.n() || spa_hat.n() != ds.n() {
        return Err(Error::InvalidParam(
            "split_times and graph must cover every component".into(),
        ));
    }
    let required = min_interval_samples(ds.domain().size(), cfg.pc_max_conds);

    let results: Vec<(LaggedParentSet, LaggedParentSet, Vec<RefineFlag>)> = (0..ds.n())
        .into_par_iter()
        .map(|j| -> Result<_> {
            let own = spa_hat.get(j);
            let mut flags = Vec::new();
            let Some(split) = split_times[j] else {
                flags.push(RefineFlag {
                    component: j,
                    side: Side::Pre,
                    reason: "no split time".into(),
                });
                flags.push(RefineFlag {
                    component: j,
                    side: Side::Post,
                    reason: "no split time".into(),
                });
                return Ok((own.clone(), own.clone(), flags));
            };
            let boundary = (split.ceil().max(0.0) as usize).min(ds.t_len());
            let mut prune_side = |range: Range<usize>, side: Side| -> Result<LaggedParentSet> {
                if range.len() < required {
                    flags.push(RefineFlag {
                        component: j,
                        side,
                        reason: format!(
                            "{} samples on this side, {required} required",
                            range.len()
                        ),
                    });
                    return Ok(own.clone());
                }
                // rank every component's superset links by unconditional
                // strength on this side, for capped conditioning sets
                let mut ranked: Vec<Vec<(LaggedLink, f64)>> = Vec::with_capacity(ds.n());
                for i in 0..ds.n() {
                    let mut links = Vec::with_capacity(spa_hat.get(i).len());
                    for link in spa_hat.get(i).links() {
                        let verdict = g_test(
                            ds,
                            &CiQuery {
                                x: *link,
                                y: i,
                                cond: LaggedParentSet::empty(),
                                alpha_level: cfg.alpha_level,
                            },
                            range.clone(),
                        )?;
                        links.push((*link, verdict.statistic));
                    }
                    rank_links(&mut links);
                    ranked.push(links);
                }
                let mut kept = Vec::new();
                for link in own.links() {
                    let cond = mci_condition_set(
                        &ranked[j],
                        &ranked[link.component],
                        link,
                        cfg.pc_max_conds,
                    );
                    let verdict = g_test(
                        ds,
                        &CiQuery {
                            x: *link,
                            y: j,
                            cond,
                            alpha_level: cfg.alpha_level,
                        },
                        range.clone(),
                    )?;
                    if retain_link(&verdict, cfg) {
                        kept.push(*link);
                    }
                }
                Ok(LaggedParentSet::new(kept))
            };
            let pre = prune_side(cfg.tau_ub..boundary, Side::Pre)?;
            let post = prune_side(boundary..ds.t_len(), Side::Post)?;
            Ok((pre, post, flags))
        })
        .collect::<Result<_>>()?;

    let mut pre = Vec::with_capacity(ds.n());
    let mut post = Vec::with_capacity(ds.n());
    let mut flags = Vec::new();
    for (p, q, f) in results {
        pre.push(p);
        post.push(q);
        flags.extend(f);
    }
    Ok(RefineOutcome { pre: ParentGraph::new(pre), post: ParentGraph::new(post), flags })
}
