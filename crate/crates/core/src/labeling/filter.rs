use serde::{Deserialize, Serialize};

use super::flow::FlowField;

/// Moments of a video's flow, pooled over every pixel with a usable local
/// structure tensor in every frame pair. Variances are population
/// variances.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FlowStats {
    pub mean_u: f64,
    pub var_u: f64,
    pub mean_v: f64,
    pub var_v: f64,
    pub mean_mag: f64,
    pub var_mag: f64,
    /// Fraction of pixel samples that entered the moments.
    pub valid_fraction: f64,
}

impl FlowStats {
    pub fn from_fields(fields: &[FlowField]) -> Self {
        let (mut n, mut total) = (0usize, 0usize);
        let (mut su, mut sv, mut sm) = (0.0, 0.0, 0.0);
        let (mut su2, mut sv2, mut sm2) = (0.0, 0.0, 0.0);
        for f in fields {
            total += f.u.len();
            for i in (0..f.u.len()).filter(|&i| f.valid[i]) {
                let (u, v) = (f.u[i], f.v[i]);
                let m = (u * u + v * v).sqrt();
                n += 1;
                su += u;
                sv += v;
                sm += m;
                su2 += u * u;
                sv2 += v * v;
                sm2 += m * m;
            }
        }
        if n == 0 {
            return Self::default();
        }
        let k = n as f64;
        let var = |s2: f64, s: f64| (s2 / k - (s / k).powi(2)).max(0.0);
        Self {
            mean_u: su / k,
            var_u: var(su2, su),
            mean_v: sv / k,
            var_v: var(sv2, sv),
            mean_mag: sm / k,
            var_mag: var(sm2, sm),
            valid_fraction: k / total.max(1) as f64,
        }
    }
}

/// Which clauses of the negative filter are active.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowRule {
    /// Negative when the mean magnitude is below its variance.
    pub magnitude_clause: bool,
    /// Negative when both |mean| components are below `axis_factor` times
    /// their variances.
    pub axis_clause: bool,
    pub axis_factor: f64,
}

impl Default for FlowRule {
    fn default() -> Self {
        Self {
            magnitude_clause: true,
            axis_clause: true,
            axis_factor: 5.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterDecision {
    Negative,
    Pass,
}

pub fn flow_filter(stats: &FlowStats, rule: &FlowRule) -> FilterDecision {
    let weak_magnitude = rule.magnitude_clause && stats.mean_mag < stats.var_mag;
    let weak_axes = rule.axis_clause
        && stats.mean_u.abs() < rule.axis_factor * stats.var_u
        && stats.mean_v.abs() < rule.axis_factor * stats.var_v;
    if weak_magnitude || weak_axes {
        FilterDecision::Negative
    } else {
        FilterDecision::Pass
    }
}
