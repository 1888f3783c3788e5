//! Full evaluation of a trained model against one target cloud.

use std::fmt::Write as _;

use rayon::prelude::*;

use super::{
    angular_error_indexed, collapse_count, curvature_stats, overlap_counts, MetricsError,
    COLLAPSE_FRACTION, DEFAULT_OLAP_THRESHOLDS,
};
use crate::data::PointCloud;
use crate::geometry::{surface_point, SurfacePoint};
use crate::losses::chamfer_indexed;
use crate::neighbors::KdIndex;
use crate::surface::{sample_uv, AtlasModel, JetOrder, SampleMode, SurfaceError};
use crate::vec3::Vec3;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    /// Grid points per patch (rounded up to a square).
    pub points_per_patch: usize,
    pub olap_thresholds: Vec<f64>,
    pub collapse_fraction: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            points_per_patch: 2500,
            olap_thresholds: DEFAULT_OLAP_THRESHOLDS.to_vec(),
            collapse_fraction: COLLAPSE_FRACTION,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub chd: f64,
    /// Degrees; `None` when the target has no normals.
    pub m_ae: Option<f64>,
    pub m_h: Option<f64>,
    pub m_k: Option<f64>,
    pub m_col: usize,
    /// Every patch has zero area.
    pub all_collapsed: bool,
    /// `(t, m_olap(t))` in ascending `t`.
    pub olap: Vec<(f64, f64)>,
    /// Degenerate points left out of the normal and curvature metrics.
    pub excluded: usize,
    pub areas: Vec<f64>,
}

/// Decodes every patch of `shape` on a fixed grid and scores it against `target`.
pub fn evaluate_model(
    model: &AtlasModel,
    shape: usize,
    target: &PointCloud,
    cfg: &EvalConfig,
) -> Result<MetricsReport, MetricsError> {
    if target.is_empty() {
        return Err(MetricsError::Empty("target cloud"));
    }
    if shape >= model.num_shapes() {
        return Err(SurfaceError::InvalidParameter(format!("shape {shape} out of range")).into());
    }
    let code = model.codeword(shape);
    let uvs = sample_uv(cfg.points_per_patch, SampleMode::Grid)?;
    let decoded: Vec<Vec<SurfacePoint>> = model
        .decoders()
        .par_iter()
        .map(|dec| {
            let trace = dec.forward_batch(code, &uvs, JetOrder::Second)?;
            Ok((0..trace.len())
                .map(|i| surface_point(&trace.jets(i)))
                .collect())
        })
        .collect::<Result<_, SurfaceError>>()?;

    let positions: Vec<Vec<Vec3>> = decoded
        .iter()
        .map(|p| p.iter().map(|s| s.position).collect())
        .collect();
    let index = KdIndex::build(target.points()).map_err(|_| MetricsError::Empty("target cloud"))?;
    let chd = chamfer_indexed(&positions, target.points(), &index)
        .map_err(|_| MetricsError::Empty("prediction"))?;

    let areas: Vec<f64> = decoded
        .iter()
        .map(|p| p.iter().map(|s| s.area_element).sum::<f64>() / p.len() as f64)
        .collect();
    let col = collapse_count(&areas, cfg.collapse_fraction);

    let all: Vec<SurfacePoint> = decoded.iter().flatten().copied().collect();
    let (pts, normals): (Vec<Vec3>, Vec<Vec3>) = all
        .iter()
        .filter_map(|s| s.normal.map(|n| (s.position, n)))
        .unzip();
    let excluded = all.len() - pts.len();
    let m_ae = match target.normals() {
        Some(gn) if !pts.is_empty() => Some(angular_error_indexed(&pts, &normals, gn, &index)),
        _ => None,
    };
    let curv = curvature_stats(&all).ok();

    let mut ts = cfg.olap_thresholds.clone();
    ts.sort_by(f64::total_cmp);
    let olap = ts
        .iter()
        .copied()
        .zip(overlap_counts(&positions, target.points(), &ts)?)
        .collect();

    Ok(MetricsReport {
        chd,
        m_ae,
        m_h: curv.map(|c| c.m_h),
        m_k: curv.map(|c| c.m_k),
        m_col: col.collapsed,
        all_collapsed: col.degenerate,
        olap,
        excluded,
        areas,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.6e}"))
}

impl MetricsReport {
    /// Aligned two-column table for terminals.
    pub fn table(&self) -> String {
        let mut rows: Vec<(String, String)> = vec![
            ("CHD".into(), format!("{:.6e}", self.chd)),
            (
                "m_ae (deg)".into(),
                self.m_ae
                    .map_or_else(|| "n/a".into(), |x| format!("{x:.4}")),
            ),
            ("m_H".into(), opt(self.m_h)),
            ("m_K".into(), opt(self.m_k)),
            (
                "m_col".into(),
                format!(
                    "{}{}",
                    self.m_col,
                    if self.all_collapsed {
                        " (all areas zero)"
                    } else {
                        ""
                    }
                ),
            ),
        ];
        for (t, v) in &self.olap {
            rows.push((format!("m_olap({t})"), format!("{v:.4}")));
        }
        rows.push(("excluded points".into(), self.excluded.to_string()));
        let areas: Vec<String> = self.areas.iter().map(|a| format!("{a:.4e}")).collect();
        rows.push(("patch areas".into(), areas.join(" ")));
        let w = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (k, v) in rows {
            writeln!(out, "{k:<w$}  {v}").expect("write to string");
        }
        out
    }

    /// Header of [`MetricsReport::csv_row`].
    pub fn csv_header(thresholds: &[f64]) -> String {
        let mut h = String::from("shape,chd,m_ae,m_h,m_k,m_col,excluded,sum_area");
        for t in thresholds {
            write!(h, ",m_olap_{t}").expect("write to string");
        }
        h
    }

    /// One comma-separated row; missing values are left empty.
    pub fn csv_row(&self, shape: &str) -> String {
        let o = |v: Option<f64>| v.map_or_else(String::new, |x| format!("{x:.16e}"));
        let mut r = format!(
            "{shape},{:.16e},{},{},{},{},{},{:.16e}",
            self.chd,
            o(self.m_ae),
            o(self.m_h),
            o(self.m_k),
            self.m_col,
            self.excluded,
            self.areas.iter().sum::<f64>()
        );
        for (_, v) in &self.olap {
            write!(r, ",{v:.16e}").expect("write to string");
        }
        r
    }
}
