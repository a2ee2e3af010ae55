//! Geometric selection in layout space.
//!
//! Every function here is read-only except [`annotate_selection`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AnnotationOutcome, AnnotationSource, Layout, ProjectData};
use crate::par;

/// A world-space ray with unit direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ray {
    pub origin: [f64; 3],
    pub direction: [f64; 3],
}

impl Ray {
    pub fn new(origin: [f64; 3], direction: [f64; 3]) -> Result<Self> {
        let r = Ray { origin, direction };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if self.origin.iter().chain(&self.direction).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("ray has non-finite components".into()));
        }
        let n = self.direction.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (n - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidArgument(format!(
                "ray direction must be unit length, got norm {n}"
            )));
        }
        Ok(())
    }
}

/// A closed ball (circle in 2D) in layout space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selector {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Selector {
    pub fn new(center: Vec<f64>, radius: f64) -> Result<Self> {
        let s = Selector { center, radius };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "selector radius must be positive, got {}",
                self.radius
            )));
        }
        if self.center.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("selector center is not finite".into()));
        }
        Ok(())
    }
}

type Key = (f64, f64, u32, usize);

fn cmp_key(a: &Key, b: &Key) -> std::cmp::Ordering {
    a.0.total_cmp(&b.0)
        .then(a.1.total_cmp(&b.1))
        .then(a.2.cmp(&b.2))
        .then(a.3.cmp(&b.3))
}

fn best(keys: Vec<Option<Key>>) -> Option<usize> {
    keys.into_iter().flatten().min_by(cmp_key).map(|k| k.3)
}

/// Cone pick in a 3D layout: among points whose perpendicular distance to
/// the ray is at most `tan(angular_radius)` × their distance along it,
/// returns the nearest in depth, then the closest to the axis, then the
/// lowest `rank`.
pub fn pick(layout: &Layout, rank: &[u32], ray: &Ray, angular_radius: f64) -> Result<Option<usize>> {
    if layout.out_dim != 3 {
        return Err(Error::Unsupported(format!(
            "ray picking needs a 3D layout, this one is {}D; use pick2d",
            layout.out_dim
        )));
    }
    ray.validate()?;
    if !(angular_radius > 0.0 && angular_radius <= std::f64::consts::FRAC_PI_4) {
        return Err(Error::InvalidArgument(format!(
            "angular radius must be in (0, π/4], got {angular_radius}"
        )));
    }
    let tan = angular_radius.tan();
    let (o, d) = (ray.origin, ray.direction);
    let keys = par::map_rows(&layout.coords, 3, |i, p| {
        let v = [
            f64::from(p[0]) - o[0],
            f64::from(p[1]) - o[1],
            f64::from(p[2]) - o[2],
        ];
        let t = v[0] * d[0] + v[1] * d[1] + v[2] * d[2];
        if t < 0.0 {
            return None;
        }
        let w = [v[0] - t * d[0], v[1] - t * d[1], v[2] - t * d[2]];
        let perp = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
        (perp <= tan * t).then_some((t, perp, rank[i], i))
    });
    Ok(best(keys))
}

/// Nearest point of a 2D layout within `pick_radius` (inclusive), ties by
/// rank.
pub fn pick2d(layout: &Layout, rank: &[u32], point: [f64; 2], pick_radius: f64) -> Result<Option<usize>> {
    if layout.out_dim != 2 {
        return Err(Error::Unsupported(format!(
            "pick2d needs a 2D layout, this one is {}D",
            layout.out_dim
        )));
    }
    if !(pick_radius >= 0.0) {
        return Err(Error::InvalidArgument("pick radius must be non-negative".into()));
    }
    let keys = par::map_rows(&layout.coords, 2, |i, p| {
        let dx = f64::from(p[0]) - point[0];
        let dy = f64::from(p[1]) - point[1];
        let d = (dx * dx + dy * dy).sqrt();
        (d <= pick_radius).then_some((d, 0.0, rank[i], i))
    });
    Ok(best(keys))
}

/// Every point within the closed ball, ordered by rank.
pub fn select_sphere(layout: &Layout, rank: &[u32], selector: &Selector) -> Result<Vec<usize>> {
    selector.validate()?;
    if selector.center.len() != layout.out_dim {
        return Err(Error::DimMismatch {
            row: 0,
            expected: layout.out_dim,
            actual: selector.center.len(),
        });
    }
    let c = &selector.center;
    let hit = par::map_rows(&layout.coords, layout.out_dim, |_, p| {
        let d2: f64 = p
            .iter()
            .zip(c)
            .map(|(x, y)| {
                let d = f64::from(*x) - y;
                d * d
            })
            .sum();
        d2.sqrt() <= selector.radius
    });
    let mut ids: Vec<usize> = hit
        .into_iter()
        .enumerate()
        .filter_map(|(i, h)| h.then_some(i))
        .collect();
    ids.sort_by_key(|&i| rank[i]);
    Ok(ids)
}

fn check_layout(data: &ProjectData, layout: &Layout) -> Result<()> {
    if layout.count() != data.len() {
        return Err(Error::CountMismatch {
            expected: data.len(),
            actual: layout.count(),
        });
    }
    Ok(())
}

/// [`pick`] returning the record id.
pub fn pick_record(data: &ProjectData, layout: &Layout, ray: &Ray, angular_radius: f64) -> Result<Option<String>> {
    check_layout(data, layout)?;
    Ok(pick(layout, data.id_ranks(), ray, angular_radius)?
        .map(|i| data.records()[i].record_id.clone()))
}

/// [`pick2d`] returning the record id.
pub fn pick2d_record(data: &ProjectData, layout: &Layout, point: [f64; 2], pick_radius: f64) -> Result<Option<String>> {
    check_layout(data, layout)?;
    Ok(pick2d(layout, data.id_ranks(), point, pick_radius)?
        .map(|i| data.records()[i].record_id.clone()))
}

/// [`select_sphere`] returning record ids in ascending order.
pub fn select_records(data: &ProjectData, layout: &Layout, selector: &Selector) -> Result<Vec<String>> {
    check_layout(data, layout)?;
    Ok(select_sphere(layout, data.id_ranks(), selector)?
        .into_iter()
        .map(|i| data.records()[i].record_id.clone())
        .collect())
}

/// Labels everything inside `selector` as one `sphere_select` revision.
///
/// An empty selection changes nothing and reports the current revision with
/// `changed = 0`.
pub fn annotate_selection(
    data: &mut ProjectData,
    layout: &Layout,
    selector: &Selector,
    label: usize,
) -> Result<AnnotationOutcome> {
    if data.project().label_name(label).is_none() {
        return Err(Error::InvalidLabel(label.to_string()));
    }
    let ids = select_records(data, layout, selector)?;
    if ids.is_empty() {
        return Ok(AnnotationOutcome {
            revision: data.project().revision,
            changed: 0,
        });
    }
    data.apply_annotation(&ids, label, AnnotationSource::SphereSelect)
}
