//! Time-series segments: partition one component's samples by the realized
//! configuration of its (estimated) union parent set.
//!
//! Each time step `t >= tau_max_eff` belongs to exactly one configuration
//! row, so the segments partition `[tau_max_eff, T)` and, within one
//! generating regime, hold i.i.d. draws from the active CPT row. Empty
//! segments are kept so segment index and configuration row stay aligned.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::scm_gen::LaggedParentSet;
use crate::{Error, Result};

/// Hard cap on the configuration space a single component may span.
pub const MAX_CONFIGS: u64 = 1 << 20;

/// The configuration matrix of a parent set: all `s^m` value assignments in
/// odometer order, the last parent (in (component, lag) order) varying
/// fastest. Rows are materialized on demand.
#[derive(Debug, Clone)]
pub struct ConfigMatrix {
    parent_set: LaggedParentSet,
    s: usize,
    count: u64,
}

impl ConfigMatrix {
    pub fn new(parent_set: LaggedParentSet, s: usize) -> Result<Self> {
        let count = parent_set.config_count(s, MAX_CONFIGS)?;
        Ok(ConfigMatrix { parent_set, s, count })
    }

    pub fn parent_set(&self) -> &LaggedParentSet {
        &self.parent_set
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// Value assignment of row `lambda`, one code per parent in set order.
    pub fn row(&self, lambda: u64) -> Vec<u8> {
        let m = self.parent_set.len();
        let mut digits = vec![0u8; m];
        let mut rem = lambda;
        for slot in (0..m).rev() {
            digits[slot] = (rem % self.s as u64) as u8;
            rem /= self.s as u64;
        }
        digits
    }
}

/// One segment: the sub-series of a component whose parent configuration
/// equals row `config_index`, with the original time stamp of every sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub component: usize,
    pub config_index: u64,
    pub values: Vec<u8>,
    pub time_indices: Vec<usize>,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Splits component `component` of `ds` into one segment per configuration of
/// `spa`. `tau_max_eff` must cover the largest lag in `spa`; samples at
/// `t in [tau_max_eff, T)` are assigned by their realized parent values.
pub fn build_segments(
    ds: &Dataset,
    spa: &LaggedParentSet,
    component: usize,
    tau_max_eff: usize,
) -> Result<Vec<Segment>> {
    if spa.is_empty() {
        return Err(Error::InvalidParam("parent set must be nonempty for segmentation".into()));
    }
    let max_lag = spa.max_lag().unwrap_or(0);
    if tau_max_eff < max_lag {
        return Err(Error::InvalidParam(format!(
            "tau_max_eff {tau_max_eff} below the largest parent lag {max_lag}"
        )));
    }
    if component >= ds.n() {
        return Err(Error::InvalidParam(format!(
            "component {component} out of range for n={}",
            ds.n()
        )));
    }
    let s = ds.domain().size();
    let matrix = ConfigMatrix::new(spa.clone(), s)?;
    let mut segments: Vec<Segment> = (0..matrix.count())
        .map(|lambda| Segment {
            component,
            config_index: lambda,
            values: Vec::new(),
            time_indices: Vec::new(),
        })
        .collect();
    for t in tau_max_eff..ds.t_len() {
        let lambda = spa.config_index_at(|c, time| ds.code(c, time), t, s) as usize;
        segments[lambda].values.push(ds.code(component, t));
        segments[lambda].time_indices.push(t);
    }
    Ok(segments)
}
