//! Cross-view stability metrics: path and colour counts, path-count RMSE
//! against the input, neighbour colour-count change, and relative
//! reductions between two runs.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vectordoc::VectorDocument;
use crate::viewsphere::{ViewId, ViewPose};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no views to summarize")]
    NoViews,
    #[error("adjacency has no edges")]
    NoEdges,
    #[error("adjacency refers to unknown view {0}")]
    UnknownView(ViewId),
    #[error("reports cover different view sets")]
    GridMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewStats {
    #[serde(rename = "id")]
    pub view_id: ViewId,
    pub n_path: usize,
    pub n_color: usize,
}

/// Element count and number of distinct fill colours.
pub fn count_stats(view_id: ViewId, doc: &VectorDocument) -> ViewStats {
    ViewStats { view_id, n_path: doc.elements.len(), n_color: doc.fill_colors().len() }
}

pub fn rmse_path(views: &[ViewStats], input_n_path: usize) -> Result<f64, MetricsError> {
    if views.is_empty() {
        return Err(MetricsError::NoViews);
    }
    let sum: f64 = views.iter().map(|v| (v.n_path as f64 - input_n_path as f64).powi(2)).sum();
    Ok((sum / views.len() as f64).sqrt())
}

pub fn mean_nbr_color_delta(views: &[ViewStats], adjacency: &[(ViewId, ViewId)]) -> Result<f64, MetricsError> {
    if adjacency.is_empty() {
        return Err(MetricsError::NoEdges);
    }
    let colors: BTreeMap<ViewId, usize> = views.iter().map(|v| (v.view_id, v.n_color)).collect();
    let get = |id: &ViewId| colors.get(id).copied().ok_or(MetricsError::UnknownView(*id));
    let mut sum = 0.0;
    for (i, j) in adjacency {
        sum += (get(i)? as f64 - get(j)? as f64).abs();
    }
    Ok(sum / adjacency.len() as f64)
}

/// Consecutive yaws within each pitch row.
pub fn turntable_adjacency(views: &[ViewPose]) -> Vec<(ViewId, ViewId)> {
    let mut rows: BTreeMap<u64, Vec<&ViewPose>> = BTreeMap::new();
    for v in views {
        rows.entry((v.pitch_deg() + 0.0).to_bits()).or_default().push(v);
    }
    let mut rows: Vec<Vec<&ViewPose>> = rows.into_values().collect();
    rows.sort_by(|a, b| a[0].pitch_deg().total_cmp(&b[0].pitch_deg()));
    let mut edges = Vec::new();
    for mut row in rows {
        row.sort_by(|a, b| a.yaw_deg().total_cmp(&b.yaw_deg()).then(a.id().cmp(&b.id())));
        edges.extend(row.windows(2).map(|w| (w[0].id(), w[1].id())));
    }
    edges
}

/// Consecutive views of a traversal order.
pub fn chain_adjacency(order: &[ViewId]) -> Vec<(ViewId, ViewId)> {
    order.windows(2).map(|w| (w[0], w[1])).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean_path: f64,
    pub mean_color: f64,
    pub rmse_path: f64,
    /// `None` with fewer than two views.
    pub mean_nbr_color_delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub per_view: Vec<ViewStats>,
    pub summary: Summary,
    pub input_n_path: usize,
    pub adjacency: Vec<(ViewId, ViewId)>,
}

impl StabilityReport {
    pub fn build(
        per_view: Vec<ViewStats>,
        input_n_path: usize,
        adjacency: Vec<(ViewId, ViewId)>,
    ) -> Result<Self, MetricsError> {
        if per_view.is_empty() {
            return Err(MetricsError::NoViews);
        }
        let n = per_view.len() as f64;
        let delta = if adjacency.is_empty() {
            if per_view.len() >= 2 {
                return Err(MetricsError::NoEdges);
            }
            None
        } else {
            Some(mean_nbr_color_delta(&per_view, &adjacency)?)
        };
        let summary = Summary {
            mean_path: per_view.iter().map(|v| v.n_path as f64).sum::<f64>() / n,
            mean_color: per_view.iter().map(|v| v.n_color as f64).sum::<f64>() / n,
            rmse_path: rmse_path(&per_view, input_n_path)?,
            mean_nbr_color_delta: delta,
        };
        Ok(Self { per_view, summary, input_n_path, adjacency })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Percentage reduction from a baseline, or undefined for a zero baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Reduction {
    Percent(f64),
    Undefined(UndefinedMarker),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UndefinedMarker {
    Undefined,
}

impl Reduction {
    pub fn of(baseline: f64, ours: f64) -> Self {
        if baseline == 0.0 {
            Reduction::Undefined(UndefinedMarker::Undefined)
        } else {
            Reduction::Percent(100.0 * (baseline - ours) / baseline)
        }
    }

    pub fn percent(self) -> Option<f64> {
        match self {
            Reduction::Percent(p) => Some(p),
            Reduction::Undefined(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReductionReport {
    pub rmse_path: Reduction,
    pub mean_nbr_color_delta: Reduction,
    pub mean_path: Reduction,
}

pub fn reduction_report(baseline: &Summary, ours: &Summary) -> ReductionReport {
    let delta = match (baseline.mean_nbr_color_delta, ours.mean_nbr_color_delta) {
        (Some(b), Some(o)) => Reduction::of(b, o),
        _ => Reduction::Undefined(UndefinedMarker::Undefined),
    };
    ReductionReport {
        rmse_path: Reduction::of(baseline.rmse_path, ours.rmse_path),
        mean_nbr_color_delta: delta,
        mean_path: Reduction::of(baseline.mean_path, ours.mean_path),
    }
}

/// [`reduction_report`] for two full reports over the same views.
pub fn compare_reports(baseline: &StabilityReport, ours: &StabilityReport) -> Result<ReductionReport, MetricsError> {
    let ids = |r: &StabilityReport| r.per_view.iter().map(|v| v.view_id).collect::<BTreeSet<_>>();
    if ids(baseline) != ids(ours) {
        return Err(MetricsError::GridMismatch);
    }
    Ok(reduction_report(&baseline.summary, &ours.summary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::colorsci::Srgb;
    use crate::vectordoc::{Canvas, DrawableElement, Geometry, Paint};
    use crate::viewsphere::turntable_grid;
    use proptest::prelude::*;

    fn stats(colors: &[usize]) -> Vec<ViewStats> {
        colors.iter().enumerate().map(|(i, c)| ViewStats { view_id: ViewId(i as u32), n_path: 0, n_color: *c }).collect()
    }

    fn paths(n: &[usize]) -> Vec<ViewStats> {
        n.iter().enumerate().map(|(i, p)| ViewStats { view_id: ViewId(i as u32), n_path: *p, n_color: 0 }).collect()
    }

    fn rect(fill: Option<Srgb>, stroke: Option<Srgb>) -> DrawableElement {
        DrawableElement::new(
            Geometry::Rect { x: 0.0, y: 0.0, width: 1.0, height: 1.0, rx: 0.0, ry: 0.0 },
            Paint { fill, stroke, ..Paint::default() },
        )
    }

    #[test]
    fn count_examples() {
        let red = Some(Srgb::new(255, 0, 0));
        let blue = Some(Srgb::new(0, 0, 255));
        let mut doc = VectorDocument::new(Canvas::new(10.0, 10.0));
        assert_eq!(count_stats(ViewId(0), &doc), ViewStats { view_id: ViewId(0), n_path: 0, n_color: 0 });
        doc.elements = vec![rect(red, None), rect(red, None), rect(blue, None)];
        assert_eq!((count_stats(ViewId(0), &doc).n_path, count_stats(ViewId(0), &doc).n_color), (3, 2));
        doc.elements = vec![rect(None, blue), rect(red, None)];
        assert_eq!(count_stats(ViewId(0), &doc).n_color, 1);
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse_path(&paths(&[10, 14]), 12).unwrap(), 2.0);
        assert_eq!(rmse_path(&paths(&[7, 7, 7]), 7).unwrap(), 0.0);
        assert_eq!(rmse_path(&paths(&[12]), 7).unwrap(), 5.0);
        assert_eq!(rmse_path(&[], 7), Err(MetricsError::NoViews));
    }

    #[test]
    fn neighbour_delta_examples() {
        let chain = chain_adjacency(&[ViewId(0), ViewId(1), ViewId(2)]);
        assert_eq!(mean_nbr_color_delta(&stats(&[5, 5, 5]), &chain).unwrap(), 0.0);
        assert_eq!(mean_nbr_color_delta(&stats(&[3, 5, 4]), &chain).unwrap(), 1.5);
        assert_eq!(mean_nbr_color_delta(&stats(&[7, 3]), &[(ViewId(0), ViewId(1))]).unwrap(), 4.0);
        assert_eq!(mean_nbr_color_delta(&stats(&[7, 3]), &[]), Err(MetricsError::NoEdges));
        assert_eq!(
            mean_nbr_color_delta(&stats(&[7, 3]), &[(ViewId(0), ViewId(9))]),
            Err(MetricsError::UnknownView(ViewId(9)))
        );
    }

    #[test]
    fn turntable_rows() {
        let edges = turntable_adjacency(&turntable_grid());
        assert_eq!(edges.len(), 3 * 16);
        assert_eq!(edges[0], (ViewId(0), ViewId(1)));
        assert!(edges.iter().all(|(a, b)| b.0 == a.0 + 1 && a.0 / 17 == b.0 / 17));
    }

    #[test]
    fn zero_baseline_is_undefined() {
        let s = Summary { mean_path: 0.0, mean_color: 0.0, rmse_path: 0.0, mean_nbr_color_delta: Some(0.0) };
        let r = reduction_report(&s, &s);
        assert_eq!(r.rmse_path.percent(), None);
        assert_eq!(serde_json::to_string(&r.mean_path).unwrap(), r#""undefined""#);
    }

    #[test]
    fn report_json_layout() {
        let per_view = vec![
            ViewStats { view_id: ViewId(0), n_path: 3, n_color: 2 },
            ViewStats { view_id: ViewId(1), n_path: 5, n_color: 3 },
        ];
        let r = StabilityReport::build(per_view, 4, vec![(ViewId(0), ViewId(1))]).unwrap();
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v["per_view"][1]["id"], 1);
        assert_eq!(v["adjacency"][0], serde_json::json!([0, 1]));
        assert_eq!(v["summary"]["rmse_path"], 1.0);
        assert_eq!(StabilityReport::from_json(&r.to_json()).unwrap(), r);
        let other = StabilityReport::build(vec![r.per_view[0]], 4, vec![]).unwrap();
        assert_eq!(compare_reports(&r, &other), Err(MetricsError::GridMismatch));
    }

    proptest! {
        #[test]
        fn rms_bounds_mean_deviation(n in prop::collection::vec(0usize..200, 1..40), input in 0usize..200) {
            let v = paths(&n);
            let mean_dev = n.iter().map(|p| *p as f64 - input as f64).sum::<f64>() / n.len() as f64;
            prop_assert!(rmse_path(&v, input).unwrap() >= mean_dev.abs() - 1e-9);
        }

        #[test]
        fn delta_invariant_under_chain_reversal(c in prop::collection::vec(0usize..20, 2..30)) {
            let v = stats(&c);
            let order: Vec<ViewId> = v.iter().map(|s| s.view_id).collect();
            let rev: Vec<ViewId> = order.iter().rev().copied().collect();
            let a = mean_nbr_color_delta(&v, &chain_adjacency(&order)).unwrap();
            let b = mean_nbr_color_delta(&v, &chain_adjacency(&rev)).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
