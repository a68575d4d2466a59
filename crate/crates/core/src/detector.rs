//! The detection pipeline: discover superset parents, build segments per
//! component, score sliding windows on every usable segment, take the global
//! argmax, project the winning window boundary back to original time, and
//! optionally refine the parent sets on both sides of the split.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::pcmci::{
    discover_superset, refine_after_split, DiscoveryConfig, ParentGraph, RefineFlag,
};
use crate::rulsif::{pe_series, PeParams, PeSeries};
use crate::scm_gen::{LaggedLink, LaggedParentSet};
use crate::segments::build_segments;
use crate::{Error, Result};

/// Full pipeline configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub discovery: DiscoveryConfig,
    pub pe: PeParams,
    /// Segments shorter than this are skipped; must be at least `2*n_w + 1`.
    pub min_segment_length: usize,
    /// Prune the parent sets on both sides of the detected split.
    pub refine: bool,
    /// Peaks at or below this score are flagged as not significant. `None`
    /// flags only exact-zero peaks.
    pub peak_threshold: Option<f64>,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        let pe = PeParams::default();
        let min_segment_length = 2 * pe.n_w + 1;
        DetectorConfig {
            discovery: DiscoveryConfig::default(),
            pe,
            min_segment_length,
            refine: false,
            peak_threshold: None,
        }
    }
}

impl DetectorConfig {
    /// A config with `min_segment_length` derived from the window size.
    pub fn with_pe(pe: PeParams) -> Self {
        let min_segment_length = 2 * pe.n_w + 1;
        DetectorConfig { pe, min_segment_length, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        self.discovery.validate()?;
        self.pe.validate()?;
        if self.min_segment_length < 2 * self.pe.n_w + 1 {
            return Err(Error::InvalidParam(format!(
                "min_segment_length {} below 2*n_w + 1 = {}",
                self.min_segment_length,
                2 * self.pe.n_w + 1
            )));
        }
        Ok(())
    }
}

/// A segment left out of the argmax, with the reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedSegment {
    pub lambda: u64,
    pub length: usize,
    pub reason: String,
}

/// The located change of one component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    /// Winning configuration row.
    pub winning_lambda: u64,
    /// Winning window index within the winning segment's series.
    pub window_index: usize,
    /// Change point projected to original time: the midpoint between the
    /// last first-half sample and the first second-half sample.
    pub projected_time: f64,
    pub peak_score: f64,
    /// False when the peak is zero or does not clear `peak_threshold`.
    pub significant: bool,
    /// An infinite score signals an empty-support mismatch between window
    /// halves; it wins the argmax but usually indicates data problems.
    pub infinite_score: bool,
}

/// Everything the pipeline derived for one component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentReport {
    pub component: usize,
    pub name: String,
    /// The parent set segmentation used (discovered, or the self-link
    /// fallback when discovery returned nothing).
    pub spa: LaggedParentSet,
    pub fallback_spa: bool,
    pub detection: Option<Detection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub no_detection_reason: Option<String>,
    pub pe_series: Vec<PeSeries>,
    pub skipped_segments: Vec<SkippedSegment>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parents_pre: Option<LaggedParentSet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parents_post: Option<LaggedParentSet>,
}

/// Output of [`detect`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    /// The discovered superset graph (before any refinement).
    pub graph: ParentGraph,
    pub components: Vec<ComponentReport>,
    pub refine_flags: Vec<RefineFlag>,
}

/// Global argmax over `(lambda, window)` across the given series. Ties break
/// toward the smaller lambda, then the smaller window index. Empty series are
/// skipped; an error is returned when nothing is scoreable.
pub fn argmax_with_ties(series: &[PeSeries]) -> Result<(u64, usize, f64)> {
    let mut best: Option<(u64, usize, f64)> = None;
    for s in series {
        for (i, &score) in s.scores.iter().enumerate() {
            let better = match best {
                None => true,
                Some((bl, bi, bs)) => {
                    score > bs || (score == bs && (s.lambda, i) < (bl, bi))
                }
            };
            if better {
                best = Some((s.lambda, i, score));
            }
        }
    }
    best.ok_or_else(|| Error::NoUsableSeries("every divergence series is empty".into()))
}

/// Runs discovery and then the per-component detection pipeline.
pub fn detect(ds: &Dataset, cfg: &DetectorConfig) -> Result<DetectionReport> {
    cfg.validate()?;
    let graph = discover_superset(ds, &cfg.discovery)?;
    detect_with_parents(ds, &graph, cfg)
}

/// Detection with a known parent graph; discovery is skipped. Useful when
/// the structure comes from elsewhere or for controlled experiments.
pub fn detect_with_parents(
    ds: &Dataset,
    graph: &ParentGraph,
    cfg: &DetectorConfig,
) -> Result<DetectionReport> {
    cfg.validate()?;
    if graph.n() != ds.n() {
        return Err(Error::InvalidParam(format!(
            "parent graph covers {} components, dataset has {}",
            graph.n(),
            ds.n()
        )));
    }

    let mut components: Vec<ComponentReport> = (0..ds.n())
        .into_par_iter()
        .map(|j| detect_component(ds, graph.get(j), j, cfg))
        .collect::<Result<_>>()?;

    let mut refine_flags = Vec::new();
    if cfg.refine {
        let used_graph =
            ParentGraph::new(components.iter().map(|c| c.spa.clone()).collect());
        let splits: Vec<Option<f64>> = components
            .iter()
            .map(|c| c.detection.as_ref().map(|d| d.projected_time))
            .collect();
        let outcome = refine_after_split(ds, &used_graph, &splits, &cfg.discovery)?;
        for (j, comp) in components.iter_mut().enumerate() {
            comp.parents_pre = Some(outcome.pre.get(j).clone());
            comp.parents_post = Some(outcome.post.get(j).clone());
        }
        refine_flags = outcome.flags;
    }

    Ok(DetectionReport { graph: graph.clone(), components, refine_flags })
}

fn detect_component(
    ds: &Dataset,
    discovered: &LaggedParentSet,
    j: usize,
    cfg: &DetectorConfig,
) -> Result<ComponentReport> {
    let fallback_spa = discovered.is_empty();
    let spa = if fallback_spa {
        LaggedParentSet::new(vec![LaggedLink::new(j, 1)])
    } else {
        discovered.clone()
    };
    let name = ds.component_names()[j].clone();
    let tau_eff = spa.max_lag().expect("spa is nonempty");

    let segments = match build_segments(ds, &spa, j, tau_eff) {
        Ok(segs) => segs,
        Err(err @ Error::ConfigSpaceTooLarge { .. }) => {
            return Ok(ComponentReport {
                component: j,
                name,
                spa,
                fallback_spa,
                detection: None,
                no_detection_reason: Some(err.to_string()),
                pe_series: Vec::new(),
                skipped_segments: Vec::new(),
                parents_pre: None,
                parents_post: None,
            })
        }
        Err(err) => return Err(err),
    };

    let s = ds.domain().size();
    let mut series = Vec::new();
    let mut skipped = Vec::new();
    for seg in &segments {
        if seg.len() < cfg.min_segment_length {
            skipped.push(SkippedSegment {
                lambda: seg.config_index,
                length: seg.len(),
                reason: format!("below the minimum segment length {}", cfg.min_segment_length),
            });
            continue;
        }
        match pe_series(seg, s, &cfg.pe) {
            Ok(ps) if !ps.is_empty() => series.push(ps),
            Ok(_) => skipped.push(SkippedSegment {
                lambda: seg.config_index,
                length: seg.len(),
                reason: "no full window fits".into(),
            }),
            Err(err) => skipped.push(SkippedSegment {
                lambda: seg.config_index,
                length: seg.len(),
                reason: format!("estimator failure: {err}"),
            }),
        }
    }

    let (detection, no_detection_reason) = match argmax_with_ties(&series) {
        Ok((lambda, window_index, peak_score)) => {
            let winner = series.iter().find(|ps| ps.lambda == lambda).expect("winner exists");
            let span = winner.window_spans[window_index];
            let projected_time = (span.first_end as f64 + span.second_start as f64) / 2.0;
            let significant = peak_score > cfg.peak_threshold.unwrap_or(0.0);
            (
                Some(Detection {
                    winning_lambda: lambda,
                    window_index,
                    projected_time,
                    peak_score,
                    significant,
                    infinite_score: peak_score.is_infinite(),
                }),
                None,
            )
        }
        Err(_) => {
            let reason = if skipped.is_empty() {
                "no segments produced".to_string()
            } else {
                format!("all {} segments skipped", skipped.len())
            };
            (None, Some(reason))
        }
    };

    Ok(ComponentReport {
        component: j,
        name,
        spa,
        fallback_spa,
        detection,
        no_detection_reason,
        pe_series: series,
        skipped_segments: skipped,
        parents_pre: None,
        parents_post: None,
    })
}

/// Plain-text table of the per-component results: component, projected
/// change time, and the pre/post parent sets when refinement ran.
pub fn render_table(report: &DetectionReport, names: &[String]) -> String {
    let fmt_parents = |set: &Option<LaggedParentSet>| match set {
        None => "-".to_string(),
        Some(s) => format_parent_set(s, names),
    };
    let mut rows = vec![[
        "component".to_string(),
        "change_time".to_string(),
        "parents_pre".to_string(),
        "parents_post".to_string(),
    ]];
    for comp in &report.components {
        let t = match &comp.detection {
            Some(d) if d.significant => format!("{:.1}", d.projected_time),
            Some(d) => format!("{:.1} (not significant)", d.projected_time),
            None => "no detection".to_string(),
        };
        rows.push([
            comp.name.clone(),
            t,
            fmt_parents(&comp.parents_pre),
            fmt_parents(&comp.parents_post),
        ]);
    }
    let widths: Vec<usize> = (0..4)
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        for (c, cell) in row.iter().enumerate() {
            out.push_str(&format!("{:<width$}  ", cell, width = widths[c]));
        }
        out.pop();
        out.pop();
        out.push('\n');
        if i == 0 {
            out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 6));
            out.push('\n');
        }
    }
    out
}

/// `{X1[t-1], X2[t-2]}` rendering of a parent set.
pub fn format_parent_set(set: &LaggedParentSet, names: &[String]) -> String {
    let inner: Vec<String> = set
        .links()
        .iter()
        .map(|l| format!("{}[t-{}]", names[l.component], l.lag))
        .collect();
    format!("{{{}}}", inner.join(", "))
}
