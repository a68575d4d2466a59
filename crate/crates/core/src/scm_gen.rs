//! Synthetic generator for discrete multivariate time series whose causal
//! mechanisms switch once per component.
//!
//! Generation has three steps: draw per-component change points and lagged
//! parent structure, draw per-regime conditional probability tables, then
//! roll the series forward sampling each variable from the active regime's
//! CPT row given its realized parent configuration. The first `tau_max`
//! steps are a uniform random prefix. Everything is deterministic given the
//! seed, and the returned ground truth carries both parent sets and the
//! change points for evaluation.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Domain};
use crate::rulsif::pe_closed_form;
use crate::{Error, Result};

/// One lagged causal link: parent component at `lag` steps in the past.
/// Lags are always at least 1; causal relations point from the past.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct LaggedLink {
    pub component: usize,
    pub lag: usize,
}

impl LaggedLink {
    pub fn new(component: usize, lag: usize) -> Self {
        LaggedLink { component, lag }
    }
}

/// An ordered, duplicate-free set of lagged links. Order is ascending by
/// (component, lag), variable index before time index, so configuration
/// indexing is reproducible.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LaggedParentSet {
    links: Vec<LaggedLink>,
}

impl LaggedParentSet {
    pub fn new(mut links: Vec<LaggedLink>) -> Self {
        links.sort();
        links.dedup();
        LaggedParentSet { links }
    }

    pub fn empty() -> Self {
        LaggedParentSet { links: Vec::new() }
    }

    pub fn links(&self) -> &[LaggedLink] {
        &self.links
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    pub fn contains(&self, link: &LaggedLink) -> bool {
        self.links.binary_search(link).is_ok()
    }

    pub fn max_lag(&self) -> Option<usize> {
        self.links.iter().map(|l| l.lag).max()
    }

    pub fn union(&self, other: &LaggedParentSet) -> LaggedParentSet {
        let mut links = self.links.clone();
        links.extend_from_slice(&other.links);
        LaggedParentSet::new(links)
    }

    pub fn is_subset_of(&self, other: &LaggedParentSet) -> bool {
        self.links.iter().all(|l| other.contains(l))
    }

    /// A copy without one link.
    pub fn without(&self, link: &LaggedLink) -> LaggedParentSet {
        LaggedParentSet {
            links: self.links.iter().copied().filter(|l| l != link).collect(),
        }
    }

    /// Number of parent configurations `s^len`, or an error when the
    /// configuration space exceeds `cap`.
    pub fn config_count(&self, s: usize, cap: u64) -> Result<u64> {
        let mut count: u128 = 1;
        for _ in 0..self.links.len() {
            count *= s as u128;
            if count > cap as u128 {
                return Err(Error::ConfigSpaceTooLarge { configs: count, cap });
            }
        }
        Ok(count as u64)
    }

    /// Configuration index realized at time `t`, reading parent values
    /// through `get(component, time)`. Odometer order: the first parent in
    /// (component, lag) order is the most significant digit, the last parent
    /// varies fastest. Caller guarantees `t >= max_lag`.
    pub fn config_index_at(&self, get: impl Fn(usize, usize) -> u8, t: usize, s: usize) -> u64 {
        let mut idx: u64 = 0;
        for link in &self.links {
            idx = idx * s as u64 + get(link.component, t - link.lag) as u64;
        }
        idx
    }
}

/// A conditional probability table: one probability row per parent
/// configuration, rows in odometer order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cpt {
    pub rows: Vec<Vec<f64>>,
}

impl Cpt {
    pub fn new(rows: Vec<Vec<f64>>, s: usize) -> Result<Self> {
        for (i, row) in rows.iter().enumerate() {
            if row.len() != s {
                return Err(Error::InvalidSpec(format!(
                    "CPT row {i} has {} entries for domain size {s}",
                    row.len()
                )));
            }
            if row.iter().any(|&p| p < 0.0) {
                return Err(Error::InvalidSpec(format!("CPT row {i} has a negative entry")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidSpec(format!("CPT row {i} sums to {sum}")));
            }
        }
        Ok(Cpt { rows })
    }
}

/// One causal mechanism: a parent set and its CPT.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeMechanism {
    pub parents: LaggedParentSet,
    pub cpt: Cpt,
}

impl RegimeMechanism {
    pub fn new(parents: LaggedParentSet, cpt: Cpt, s: usize) -> Result<Self> {
        let expected = parents.config_count(s, u64::MAX - 1)?;
        if cpt.rows.len() as u64 != expected {
            return Err(Error::InvalidSpec(format!(
                "CPT has {} rows, parent set of size {} over domain {s} needs {expected}",
                cpt.rows.len(),
                parents.len()
            )));
        }
        Ok(RegimeMechanism { parents, cpt })
    }
}

/// Whether a regime switch preserves the parent set (only the CPT moves) or
/// alters it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChangeKind {
    /// Same parent set before and after; the conditional distributions
    /// change.
    Soft,
    /// The parent set itself changes across the switch.
    Hard,
}

/// Pre- and post-change mechanisms of one component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentRegimes {
    pub pre: RegimeMechanism,
    pub post: RegimeMechanism,
}

/// Full ground-truth specification of a mechanism-shift process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScmSpec {
    pub n: usize,
    pub t_len: usize,
    pub tau_max: usize,
    pub domain: Domain,
    /// First post-change time index of each component (0-based).
    pub change_points: Vec<usize>,
    pub regimes: Vec<ComponentRegimes>,
    pub change_kind: Vec<ChangeKind>,
    /// Change points stay at least this far from both ends of the series.
    pub margin: usize,
    pub seed: u64,
}

impl ScmSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidSpec("n must be >= 1".into()));
        }
        if self.tau_max == 0 {
            return Err(Error::InvalidSpec("tau_max must be >= 1".into()));
        }
        if self.t_len <= self.tau_max + 1 {
            return Err(Error::InvalidSpec("T must exceed tau_max + 1".into()));
        }
        for (name, len) in [
            ("change_points", self.change_points.len()),
            ("regimes", self.regimes.len()),
            ("change_kind", self.change_kind.len()),
        ] {
            if len != self.n {
                return Err(Error::InvalidSpec(format!("{name} has {len} entries for n={}", self.n)));
            }
        }
        for j in 0..self.n {
            let tc = self.change_points[j];
            if tc <= self.tau_max || tc >= self.t_len {
                return Err(Error::InvalidSpec(format!(
                    "change point {tc} of component {j} outside (tau_max, T)"
                )));
            }
            if tc < self.margin || tc > self.t_len - self.margin {
                return Err(Error::InvalidSpec(format!(
                    "change point {tc} of component {j} violates margin {}",
                    self.margin
                )));
            }
            let regimes = &self.regimes[j];
            for mech in [&regimes.pre, &regimes.post] {
                if let Some(lag) = mech.parents.max_lag() {
                    if lag > self.tau_max {
                        return Err(Error::InvalidSpec(format!(
                            "component {j} has a parent lag {lag} beyond tau_max {}",
                            self.tau_max
                        )));
                    }
                }
                if mech.parents.is_empty() {
                    return Err(Error::InvalidSpec(format!(
                        "component {j} has an empty parent set"
                    )));
                }
            }
            let same = regimes.pre.parents == regimes.post.parents;
            match self.change_kind[j] {
                ChangeKind::Soft if !same => {
                    return Err(Error::InvalidSpec(format!(
                        "component {j} marked soft but parent sets differ"
                    )))
                }
                ChangeKind::Hard if same => {
                    return Err(Error::InvalidSpec(format!(
                        "component {j} marked hard but parent sets are equal"
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Union parent set of one component across both regimes.
    pub fn union_parents(&self, j: usize) -> LaggedParentSet {
        self.regimes[j].pre.parents.union(&self.regimes[j].post.parents)
    }

    /// Binary edge array in `[parent][regime][child][lag]` layout with lag
    /// dimension `0..=tau_max`; entry 1 marks a causal link.
    pub fn edge_array(&self) -> Vec<Vec<Vec<Vec<u8>>>> {
        let mut arr =
            vec![vec![vec![vec![0u8; self.tau_max + 1]; self.n]; 2]; self.n];
        for (child, regimes) in self.regimes.iter().enumerate() {
            for (r, mech) in [&regimes.pre, &regimes.post].into_iter().enumerate() {
                for link in mech.parents.links() {
                    arr[link.component][r][child][link.lag] = 1;
                }
            }
        }
        arr
    }
}

/// Ground truth shipped with each simulated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub change_points: Vec<usize>,
    pub parents_pre: Vec<LaggedParentSet>,
    pub parents_post: Vec<LaggedParentSet>,
    /// Per-component union of pre and post parent sets.
    pub union_parents: Vec<LaggedParentSet>,
    pub change_kind: Vec<ChangeKind>,
}

/// Arguments of [`random_spec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub n: usize,
    pub t_len: usize,
    pub tau_max: usize,
    pub domain: Domain,
    /// Size of the union parent set of every component.
    pub spa_size: usize,
    pub change_kind: ChangeKind,
    pub margin: usize,
    /// Lower bound on the relative Pearson divergence (at the reference
    /// mixing [`DIVERGENCE_REF_ALPHA`]) between the pre and post conditional
    /// distributions, required for at least one parent configuration. This
    /// is the scale the sliding-window detector sees, bounded above by
    /// `a/(2(1-a))`, about 0.0556 at the 0.1 reference. Zero disables the
    /// rejection loop.
    pub min_divergence: f64,
    /// Faithfulness floor: every parent must shift its child's conditional
    /// distribution by at least this plain Pearson divergence in some
    /// context, in each regime. Zero disables the check.
    pub min_influence: f64,
    pub seed: u64,
}

/// The mixing parameter at which the generator's divergence floor is
/// evaluated, matching the detector's default `alpha`.
pub const DIVERGENCE_REF_ALPHA: f64 = 0.1;

const CPT_REJECTION_BUDGET: usize = 20_000;

/// Draws a random mechanism-shift specification.
///
/// Every component's union parent set has exactly `spa_size` links and always
/// contains the self-link at lag 1; the remaining links are drawn uniformly
/// without replacement from the other (component, lag) pairs. CPT rows are
/// uniform on the simplex, redrawn until the divergence constraint holds.
pub fn random_spec(cfg: &GeneratorConfig) -> Result<ScmSpec> {
    let s = cfg.domain.size();
    if cfg.spa_size < 1 {
        return Err(Error::InvalidParam("spa_size must be >= 1".into()));
    }
    if cfg.tau_max < 1 {
        return Err(Error::InvalidParam("tau_max must be >= 1".into()));
    }
    if cfg.spa_size > cfg.n * cfg.tau_max {
        return Err(Error::InvalidParam(format!(
            "spa_size {} exceeds the {} available lagged links",
            cfg.spa_size,
            cfg.n * cfg.tau_max
        )));
    }
    if cfg.margin < 1 {
        return Err(Error::InvalidParam("margin must be >= 1".into()));
    }
    if matches!(cfg.change_kind, ChangeKind::Hard) && cfg.spa_size < 2 {
        return Err(Error::InvalidParam(
            "hard changes need spa_size >= 2 so the parent sets can differ".into(),
        ));
    }
    let lo = cfg.margin.max(cfg.tau_max + 1);
    let hi = cfg.t_len.saturating_sub(cfg.margin);
    if lo > hi {
        return Err(Error::InvalidParam(format!(
            "no room for a change point: margin {} and tau_max {} leave [{lo}, {hi}]",
            cfg.margin, cfg.tau_max
        )));
    }
    // union configuration count must leave room for populated segments
    LaggedParentSet::new(
        (0..cfg.spa_size).map(|k| LaggedLink::new(0, k + 1)).collect::<Vec<_>>(),
    );
    let configs = (s as u128).pow(cfg.spa_size as u32);
    if configs * 4 > cfg.t_len as u128 {
        return Err(Error::InvalidParam(format!(
            "spa_size {} gives {configs} configurations, too many for T={}",
            cfg.spa_size, cfg.t_len
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut change_points = Vec::with_capacity(cfg.n);
    let mut regimes = Vec::with_capacity(cfg.n);
    for j in 0..cfg.n {
        change_points.push(rng.gen_range(lo..=hi));

        let union = draw_union_parents(&mut rng, cfg, j);
        let (pre_parents, post_parents) = match cfg.change_kind {
            ChangeKind::Soft => (union.clone(), union.clone()),
            ChangeKind::Hard => split_hard_parents(&mut rng, &union, j),
        };

        let (pre_cpt, post_cpt) = draw_cpts(
            &mut rng,
            &union,
            &pre_parents,
            &post_parents,
            s,
            cfg.min_divergence,
            cfg.min_influence,
            j,
        )?;
        regimes.push(ComponentRegimes {
            pre: RegimeMechanism::new(pre_parents, pre_cpt, s)?,
            post: RegimeMechanism::new(post_parents, post_cpt, s)?,
        });
    }

    let spec = ScmSpec {
        n: cfg.n,
        t_len: cfg.t_len,
        tau_max: cfg.tau_max,
        domain: cfg.domain.clone(),
        change_points,
        regimes,
        change_kind: vec![cfg.change_kind; cfg.n],
        margin: cfg.margin,
        seed: cfg.seed,
    };
    spec.validate()?;
    Ok(spec)
}

fn draw_union_parents(rng: &mut ChaCha8Rng, cfg: &GeneratorConfig, j: usize) -> LaggedParentSet {
    let self_link = LaggedLink::new(j, 1);
    let mut pool: Vec<LaggedLink> = Vec::new();
    for i in 0..cfg.n {
        for lag in 1..=cfg.tau_max {
            let link = LaggedLink::new(i, lag);
            if link != self_link {
                pool.push(link);
            }
        }
    }
    let mut links: Vec<LaggedLink> =
        pool.choose_multiple(rng, cfg.spa_size - 1).copied().collect();
    links.push(self_link);
    LaggedParentSet::new(links)
}

/// Assigns each union link to the pre set, the post set, or both, keeping the
/// self-link in both, until the two sets differ.
fn split_hard_parents(
    rng: &mut ChaCha8Rng,
    union: &LaggedParentSet,
    j: usize,
) -> (LaggedParentSet, LaggedParentSet) {
    let self_link = LaggedLink::new(j, 1);
    loop {
        let mut pre = vec![self_link];
        let mut post = vec![self_link];
        for link in union.links().iter().filter(|&&l| l != self_link) {
            match rng.gen_range(0..3) {
                0 => pre.push(*link),
                1 => post.push(*link),
                _ => {
                    pre.push(*link);
                    post.push(*link);
                }
            }
        }
        let pre = LaggedParentSet::new(pre);
        let post = LaggedParentSet::new(post);
        if pre != post {
            return (pre, post);
        }
    }
}

fn random_simplex_row(rng: &mut ChaCha8Rng, s: usize) -> Vec<f64> {
    let draws: Vec<f64> = (0..s).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|d| d / total).collect()
}

/// Positions of `subset` links inside the sorted `union` link list.
fn positions_in(union: &LaggedParentSet, subset: &LaggedParentSet) -> Vec<usize> {
    subset
        .links()
        .iter()
        .map(|l| union.links().binary_search(l).expect("subset link missing from union"))
        .collect()
}

/// Maps a union configuration index to the regime-local row index selected by
/// `positions` (indices of the regime's parents within the union order).
fn restrict_config(union_idx: u64, union_len: usize, positions: &[usize], s: usize) -> usize {
    let mut digits = vec![0u64; union_len];
    let mut rem = union_idx;
    for slot in (0..union_len).rev() {
        digits[slot] = rem % s as u64;
        rem /= s as u64;
    }
    let mut idx = 0usize;
    for &p in positions {
        idx = idx * s + digits[p] as usize;
    }
    idx
}

#[allow(clippy::too_many_arguments)]
fn draw_cpts(
    rng: &mut ChaCha8Rng,
    union: &LaggedParentSet,
    pre_parents: &LaggedParentSet,
    post_parents: &LaggedParentSet,
    s: usize,
    min_divergence: f64,
    min_influence: f64,
    component: usize,
) -> Result<(Cpt, Cpt)> {
    let pre_rows = pre_parents.config_count(s, 1 << 32)? as usize;
    let post_rows = post_parents.config_count(s, 1 << 32)? as usize;
    let union_rows = union.config_count(s, 1 << 32)?;
    let pre_pos = positions_in(union, pre_parents);
    let post_pos = positions_in(union, post_parents);

    let mut best = f64::NEG_INFINITY;
    for _ in 0..CPT_REJECTION_BUDGET {
        let pre: Vec<Vec<f64>> = (0..pre_rows).map(|_| random_simplex_row(rng, s)).collect();
        let post: Vec<Vec<f64>> = (0..post_rows).map(|_| random_simplex_row(rng, s)).collect();
        if min_influence > 0.0
            && !(all_parents_influence(&pre, pre_parents.len(), s, min_influence)
                && all_parents_influence(&post, post_parents.len(), s, min_influence))
        {
            continue;
        }
        // strongest separation across union configurations, on the scale the
        // sliding-window detector will see
        let mut strongest = f64::NEG_INFINITY;
        for idx in 0..union_rows {
            let a = &pre[restrict_config(idx, union.len(), &pre_pos, s)];
            let b = &post[restrict_config(idx, union.len(), &post_pos, s)];
            strongest = strongest.max(pe_closed_form(a, b, DIVERGENCE_REF_ALPHA));
        }
        if strongest > min_divergence || min_divergence <= 0.0 {
            return Ok((Cpt::new(pre, s)?, Cpt::new(post, s)?));
        }
        best = best.max(strongest);
    }
    Err(Error::RejectionBudgetExhausted {
        component,
        best_divergence: best,
        threshold: min_divergence,
    })
}

/// Every parent must matter to its child in two senses: conditionally by at
/// least `floor` (plain Pearson divergence) on average across the contexts
/// of the other parents, and marginally by a quarter of `floor` after
/// averaging the other parents out uniformly. The first keeps edges from
/// hiding in rare contexts; the second rejects parity-like draws whose
/// marginal effect cancels, which no stepwise conditional-independence
/// search can recover. Context averaging shrinks marginal effects, hence
/// the smaller marginal floor.
fn all_parents_influence(rows: &[Vec<f64>], n_parents: usize, s: usize, floor: f64) -> bool {
    for k in 0..n_parents {
        // stride of digit k in odometer order (last parent varies fastest)
        let stride = s.pow((n_parents - 1 - k) as u32);
        let block = stride * s;
        let mut total = 0.0;
        let mut contexts = 0usize;
        let mut marginal = vec![vec![0.0; s]; s];
        for high in 0..rows.len() / block {
            for low in 0..stride {
                let ctx = high * block + low;
                let mut strongest = f64::NEG_INFINITY;
                for a in 0..s {
                    for h in 0..s {
                        marginal[a][h] += rows[ctx + a * stride][h];
                    }
                    for b in (a + 1)..s {
                        let ra = &rows[ctx + a * stride];
                        let rb = &rows[ctx + b * stride];
                        strongest = strongest.max(pe_closed_form(ra, rb, 1.0));
                    }
                }
                total += strongest.min(10.0);
                contexts += 1;
            }
        }
        let mean = total / contexts as f64;
        if !mean.is_finite() || mean < floor {
            return false;
        }
        for row in marginal.iter_mut() {
            for p in row.iter_mut() {
                *p /= contexts as f64;
            }
        }
        let mut strongest = f64::NEG_INFINITY;
        for a in 0..s {
            for b in (a + 1)..s {
                strongest = strongest.max(pe_closed_form(&marginal[a], &marginal[b], 1.0));
            }
        }
        if strongest < 0.25 * floor {
            return false;
        }
    }
    true
}

/// Rolls the process forward and returns the dataset plus ground truth.
/// Deterministic given `spec.seed`.
pub fn simulate(spec: &ScmSpec) -> Result<(Dataset, GroundTruth)> {
    spec.validate()?;
    let s = spec.domain.size();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(1); // separate stream from the structure draw

    let mut values = vec![vec![0u8; spec.t_len]; spec.n];
    for t in 0..spec.tau_max {
        for series in values.iter_mut() {
            series[t] = rng.gen_range(0..s) as u8;
        }
    }
    for t in spec.tau_max..spec.t_len {
        for j in 0..spec.n {
            let mech = if t < spec.change_points[j] {
                &spec.regimes[j].pre
            } else {
                &spec.regimes[j].post
            };
            let idx = mech
                .parents
                .config_index_at(|comp, time| values[comp][time], t, s)
                as usize;
            let row = &mech.cpt.rows[idx];
            let u: f64 = rng.gen();
            let mut cum = 0.0;
            let mut code = (s - 1) as u8;
            for (h, &p) in row.iter().enumerate() {
                cum += p;
                if u < cum {
                    code = h as u8;
                    break;
                }
            }
            values[j][t] = code;
        }
    }

    let names = (1..=spec.n).map(|j| format!("X{j}")).collect();
    let ds = Dataset::new(spec.domain.clone(), names, None, values)?;
    let truth = GroundTruth {
        change_points: spec.change_points.clone(),
        parents_pre: spec.regimes.iter().map(|r| r.pre.parents.clone()).collect(),
        parents_post: spec.regimes.iter().map(|r| r.post.parents.clone()).collect(),
        union_parents: (0..spec.n).map(|j| spec.union_parents(j)).collect(),
        change_kind: spec.change_kind.clone(),
    };
    Ok((ds, truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn base_config() -> GeneratorConfig {
        GeneratorConfig {
            n: 3,
            t_len: 6000,
            tau_max: 4,
            domain: Domain::binary(),
            spa_size: 3,
            change_kind: ChangeKind::Soft,
            margin: 600,
            min_divergence: 0.02,
            min_influence: 0.2,
            seed: 7,
        }
    }

    #[test]
    fn soft_spec_has_expected_shape() {
        let spec = random_spec(&base_config()).unwrap();
        assert_eq!(spec.n, 3);
        for j in 0..3 {
            let union = spec.union_parents(j);
            assert_eq!(union.len(), 3);
            assert!(union.contains(&LaggedLink::new(j, 1)), "self link missing");
            assert_eq!(spec.regimes[j].pre.cpt.rows.len(), 8);
            assert_eq!(spec.regimes[j].post.cpt.rows.len(), 8);
            let tc = spec.change_points[j];
            assert!((600..=5400).contains(&tc));
        }
        // deterministic
        assert_eq!(spec, random_spec(&base_config()).unwrap());
    }

    #[test]
    fn spa_one_is_a_single_self_link() {
        let cfg = GeneratorConfig { spa_size: 1, ..base_config() };
        let spec = random_spec(&cfg).unwrap();
        for j in 0..3 {
            assert_eq!(
                spec.union_parents(j).links(),
                &[LaggedLink::new(j, 1)],
                "component {j}"
            );
        }
    }

    #[test]
    fn zero_min_divergence_accepts_first_draw() {
        let cfg = GeneratorConfig { min_divergence: 0.0, ..base_config() };
        random_spec(&cfg).unwrap();
    }

    #[test]
    fn hard_spec_differs_across_regimes() {
        let cfg = GeneratorConfig { change_kind: ChangeKind::Hard, ..base_config() };
        let spec = random_spec(&cfg).unwrap();
        for j in 0..3 {
            let pre = &spec.regimes[j].pre.parents;
            let post = &spec.regimes[j].post.parents;
            assert_ne!(pre, post);
            assert_eq!(spec.union_parents(j).len(), 3);
            assert!(pre.contains(&LaggedLink::new(j, 1)));
            assert!(post.contains(&LaggedLink::new(j, 1)));
        }
    }

    #[test]
    fn hard_with_spa_one_is_rejected() {
        let cfg = GeneratorConfig {
            change_kind: ChangeKind::Hard,
            spa_size: 1,
            ..base_config()
        };
        assert!(random_spec(&cfg).is_err());
    }

    #[test]
    fn simulate_is_deterministic() {
        let spec = random_spec(&base_config()).unwrap();
        let (a, _) = simulate(&spec).unwrap();
        let (b, _) = simulate(&spec).unwrap();
        assert_eq!(a, b);
    }

    /// Hand-built one-component spec: self-parent, pre rows (0.5, 0.5), post
    /// rows (0.9, 0.1).
    fn step_spec(t_len: usize, tc: usize) -> ScmSpec {
        let parents = LaggedParentSet::new(vec![LaggedLink::new(0, 1)]);
        let pre = RegimeMechanism::new(
            parents.clone(),
            Cpt::new(vec![vec![0.5, 0.5], vec![0.5, 0.5]], 2).unwrap(),
            2,
        )
        .unwrap();
        let post = RegimeMechanism::new(
            parents,
            Cpt::new(vec![vec![0.9, 0.1], vec![0.9, 0.1]], 2).unwrap(),
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
            margin: 2,
            seed: 99,
        }
    }

    #[test]
    fn post_change_frequencies_follow_the_cpt() {
        let spec = step_spec(12000, 4000);
        let (ds, truth) = simulate(&spec).unwrap();
        assert_eq!(truth.change_points, vec![4000]);
        let post = &ds.series(0)[4000..];
        assert!(post.len() >= 3000);
        let freq0 = post.iter().filter(|&&c| c == 0).count() as f64 / post.len() as f64;
        assert!((freq0 - 0.9).abs() < 0.03, "freq {freq0}");
    }

    #[test]
    fn stationary_spec_keeps_frequencies_flat() {
        let mut spec = step_spec(8000, 4000);
        spec.regimes[0].post.cpt = spec.regimes[0].pre.cpt.clone();
        let (ds, _) = simulate(&spec).unwrap();
        let head = &ds.series(0)[1..4000];
        let tail = &ds.series(0)[4000..];
        let f = |xs: &[u8]| xs.iter().filter(|&&c| c == 0).count() as f64 / xs.len() as f64;
        assert!((f(head) - f(tail)).abs() < 0.05);
    }

    /// Conditional law per realized parent configuration matches the active
    /// regime row (chi-square goodness of fit at level 0.001).
    #[test]
    fn conditional_law_matches_cpt() {
        let cfg = GeneratorConfig { t_len: 10000, seed: 13, ..base_config() };
        let spec = random_spec(&cfg).unwrap();
        let (ds, _) = simulate(&spec).unwrap();
        let s = 2usize;
        for j in 0..spec.n {
            for (regime, range) in [
                (&spec.regimes[j].pre, spec.tau_max..spec.change_points[j]),
                (&spec.regimes[j].post, spec.change_points[j]..spec.t_len),
            ] {
                let rows = regime.cpt.rows.len();
                let mut counts = vec![vec![0usize; s]; rows];
                for t in range {
                    let idx = regime
                        .parents
                        .config_index_at(|c, time| ds.code(c, time), t, s)
                        as usize;
                    counts[idx][ds.code(j, t) as usize] += 1;
                }
                for (idx, obs) in counts.iter().enumerate() {
                    let total: usize = obs.iter().sum();
                    if total < 100 {
                        continue;
                    }
                    let mut stat = 0.0;
                    let mut dof = 0usize;
                    for (&o, &p) in obs.iter().zip(&regime.cpt.rows[idx]) {
                        let expected = p * total as f64;
                        if expected > 0.0 {
                            let d = o as f64 - expected;
                            stat += d * d / expected;
                            dof += 1;
                        }
                    }
                    if dof <= 1 {
                        continue;
                    }
                    let dist = ChiSquared::new((dof - 1) as f64).unwrap();
                    let p = 1.0 - dist.cdf(stat);
                    assert!(p > 0.001, "component {j} config {idx}: p={p}");
                }
            }
        }
    }

    /// Within one regime and one configuration, consecutive segment values
    /// carry no serial signal: a permutation test on lag-1 autocorrelation.
    #[test]
    fn segment_samples_are_exchangeable() {
        let spec = step_spec(12000, 6000);
        let (ds, _) = simulate(&spec).unwrap();
        // pre-regime samples whose parent value is 0
        let mut seq = Vec::new();
        for t in 1..6000 {
            if ds.code(0, t - 1) == 0 {
                seq.push(ds.code(0, t) as f64);
            }
        }
        let autocorr = |xs: &[f64]| {
            let n = xs.len();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let var: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
            if var == 0.0 {
                return 0.0;
            }
            let cov: f64 =
                xs.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
            cov / var
        };
        let observed = autocorr(&seq).abs();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut extreme = 0usize;
        let perms = 500;
        let mut shuffled = seq.clone();
        for _ in 0..perms {
            shuffled.shuffle(&mut rng);
            if autocorr(&shuffled).abs() >= observed {
                extreme += 1;
            }
        }
        let p = extreme as f64 / perms as f64;
        assert!(p > 0.01, "autocorrelation signal detected: p={p}");
    }

    #[test]
    fn edge_array_matches_parent_sets() {
        let spec = step_spec(100, 50);
        let arr = spec.edge_array();
        assert_eq!(arr.len(), 1);
        assert_eq!(arr[0].len(), 2);
        assert_eq!(arr[0][0].len(), 1);
        assert_eq!(arr[0][0][0].len(), 2);
        assert_eq!(arr[0][0][0][1], 1); // self lag-1, pre regime
        assert_eq!(arr[0][1][0][1], 1); // post regime
        assert_eq!(arr[0][0][0][0], 0); // no lag-0 edge
    }

    #[test]
    fn rejection_budget_reports_best() {
        // an impossible threshold exhausts the budget
        let cfg = GeneratorConfig { min_divergence: f64::INFINITY, ..base_config() };
        match random_spec(&cfg) {
            Err(Error::RejectionBudgetExhausted { best_divergence, .. }) => {
                assert!(best_divergence.is_finite());
            }
            other => panic!("expected budget exhaustion, got {other:?}"),
        }
    }
}
