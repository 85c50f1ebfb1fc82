//! Facial regions of interest from 68-point landmark frames.
//!
//! Each region's polygon is the convex hull of its landmark subset, dilated
//! outward by a margin (Minkowski sum with a disc, approximated by a
//! 16-gon inscribed in the disc). Gaze points are labelled by the first
//! containing region in priority order; boundary counts as inside.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{LandmarkFrame, LANDMARK_POINTS};
use crate::scalar::Scalar;

pub type Point<T> = [T; 2];

/// Labels in output order: four facial regions then `Outside`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionLabel {
    Eyes,
    Eyebrows,
    Nose,
    Mouth,
    Outside,
}

impl RegionLabel {
    pub const ALL: [RegionLabel; 5] = [
        RegionLabel::Eyes,
        RegionLabel::Eyebrows,
        RegionLabel::Nose,
        RegionLabel::Mouth,
        RegionLabel::Outside,
    ];
    pub const FACIAL: [RegionLabel; 4] = [
        RegionLabel::Eyes,
        RegionLabel::Eyebrows,
        RegionLabel::Nose,
        RegionLabel::Mouth,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            RegionLabel::Eyes => "eyes",
            RegionLabel::Eyebrows => "eyebrows",
            RegionLabel::Nose => "nose",
            RegionLabel::Mouth => "mouth",
            RegionLabel::Outside => "outside",
        }
    }
}

impl fmt::Display for RegionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RegionLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RegionLabel::ALL
            .into_iter()
            .find(|r| r.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown region {s:?}")))
    }
}

/// Landmark indices per region, label priority and hull margin.
/// Serialized as the `[regions]` table of the pipeline TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegionMap {
    pub eyes: Vec<usize>,
    pub eyebrows: Vec<usize>,
    pub nose: Vec<usize>,
    pub mouth: Vec<usize>,
    pub priority: Vec<RegionLabel>,
    pub margin: f64,
}

impl Default for RegionMap {
    fn default() -> Self {
        Self {
            eyes: (36..=47).collect(),
            eyebrows: (17..=26).collect(),
            nose: (27..=35).collect(),
            mouth: (48..=67).collect(),
            priority: RegionLabel::FACIAL.to_vec(),
            margin: 0.02,
        }
    }
}

impl RegionMap {
    pub fn indices(&self, region: RegionLabel) -> &[usize] {
        match region {
            RegionLabel::Eyes => &self.eyes,
            RegionLabel::Eyebrows => &self.eyebrows,
            RegionLabel::Nose => &self.nose,
            RegionLabel::Mouth => &self.mouth,
            RegionLabel::Outside => &[],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for region in RegionLabel::FACIAL {
            let idx = self.indices(region);
            if idx.is_empty() {
                return Err(Error::Config(format!("region {region} has no landmarks")));
            }
            if let Some(bad) = idx.iter().find(|&&i| i >= LANDMARK_POINTS) {
                return Err(Error::Config(format!(
                    "region {region}: landmark index {bad} out of range"
                )));
            }
        }
        if self.priority.contains(&RegionLabel::Outside) {
            return Err(Error::Config("`outside` cannot be prioritised".into()));
        }
        if !(self.margin >= 0.0) {
            return Err(Error::Config("margin must be non-negative".into()));
        }
        Ok(())
    }
}

#[inline]
pub fn cross<T: Scalar>(o: Point<T>, a: Point<T>, b: Point<T>) -> T {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Convex hull by monotone chain, counter-clockwise, collinear points dropped.
pub fn convex_hull<T: Scalar>(points: &[Point<T>]) -> Vec<Point<T>> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| {
        a[0].partial_cmp(&b[0])
            .unwrap()
            .then(a[1].partial_cmp(&b[1]).unwrap())
    });
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Point<T>> = Vec::with_capacity(2 * pts.len());
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= T::zero() {
            hull.pop();
        }
        hull.push(p);
    }
    let lower = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= T::zero()
        {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

/// Convex polygon, counter-clockwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexPolygon<T = f64> {
    pub vertices: Vec<Point<T>>,
    /// The source points were collinear (or coincident); the polygon is the
    /// capsule/disc produced by dilating them.
    pub degenerate: bool,
}

impl<T: Scalar> ConvexPolygon<T> {
    /// Boundary-inclusive containment.
    pub fn contains(&self, p: Point<T>) -> bool {
        let v = &self.vertices;
        match v.len() {
            0 => false,
            1 => v[0] == p,
            2 => {
                let c = cross(v[0], v[1], p);
                let tol = T::epsilon() * T::lit(64.0);
                let within = |k: usize| {
                    (p[k] - v[0][k]) * (p[k] - v[1][k]) <= tol
                };
                c.abs() <= tol && within(0) && within(1)
            }
            n => {
                // relative tolerance so boundary points survive rounding
                let scale = v
                    .iter()
                    .map(|q| q[0].abs().max(q[1].abs()))
                    .fold(T::one(), T::max);
                let tol = T::epsilon() * T::lit(64.0) * scale * scale;
                (0..n).all(|i| cross(v[i], v[(i + 1) % n], p) >= -tol)
            }
        }
    }

    pub fn centroid(&self) -> Point<T> {
        let k = T::from_usize_lossy(self.vertices.len().max(1));
        let sx = self.vertices.iter().map(|p| p[0]).sum::<T>();
        let sy = self.vertices.iter().map(|p| p[1]).sum::<T>();
        [sx / k, sy / k]
    }

    /// Every consecutive edge pair turns the same way.
    pub fn is_convex(&self) -> bool {
        let v = &self.vertices;
        let n = v.len();
        if n < 3 {
            return true;
        }
        (0..n).all(|i| cross(v[i], v[(i + 1) % n], v[(i + 2) % n]) >= T::zero())
    }
}

const DISC_SIDES: usize = 16;

/// Hull of `points` grown outward by `margin`.
pub fn dilated_hull<T: Scalar>(points: &[Point<T>], margin: T) -> ConvexPolygon<T> {
    let hull = convex_hull(points);
    let degenerate = hull.len() < 3;
    if margin <= T::zero() {
        return ConvexPolygon {
            vertices: hull,
            degenerate,
        };
    }
    // orient the disc polygon along the segment so a degenerate region is a
    // capsule exactly 2 * margin wide
    let phase = if degenerate && hull.len() == 2 {
        (hull[1][1] - hull[0][1]).atan2(hull[1][0] - hull[0][0])
    } else {
        T::zero()
    };
    let tau = T::lit(std::f64::consts::TAU);
    let mut grown = Vec::with_capacity(hull.len() * DISC_SIDES);
    for p in &hull {
        for k in 0..DISC_SIDES {
            let a = phase + tau * T::from_usize_lossy(k) / T::from_usize_lossy(DISC_SIDES);
            grown.push([p[0] + margin * a.cos(), p[1] + margin * a.sin()]);
        }
    }
    ConvexPolygon {
        vertices: convex_hull(&grown),
        degenerate,
    }
}

/// Polygons for the four facial regions of one landmark frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionHulls<T = f64> {
    pub frame_time: T,
    /// Indexed by `RegionLabel::index` for the four facial regions.
    pub regions: [ConvexPolygon<T>; 4],
    pub priority: Vec<RegionLabel>,
}

impl<T: Scalar> RegionHulls<T> {
    pub fn polygon(&self, region: RegionLabel) -> Option<&ConvexPolygon<T>> {
        self.regions.get(region.index())
    }

    pub fn degenerate_regions(&self) -> Vec<RegionLabel> {
        RegionLabel::FACIAL
            .into_iter()
            .filter(|r| self.regions[r.index()].degenerate)
            .collect()
    }
}

pub fn build_hulls<T: Scalar>(frame: &LandmarkFrame, map: &RegionMap) -> RegionHulls<T> {
    let margin = T::lit(map.margin);
    let regions = RegionLabel::FACIAL.map(|region| {
        let pts: Vec<Point<T>> = map
            .indices(region)
            .iter()
            .map(|&i| [T::lit(frame.points[i][0]), T::lit(frame.points[i][1])])
            .collect();
        let poly = dilated_hull(&pts, margin);
        if poly.degenerate {
            log::debug!(
                "trial {}: region {region} degenerate at t={}",
                frame.trial_id,
                frame.frame_time
            );
        }
        poly
    });
    RegionHulls {
        frame_time: T::lit(frame.frame_time),
        regions,
        priority: map.priority.clone(),
    }
}

pub fn label_gaze<T: Scalar>(point: Point<T>, hulls: &RegionHulls<T>) -> RegionLabel {
    hulls
        .priority
        .iter()
        .copied()
        .find(|r| hulls.regions[r.index()].contains(point))
        .unwrap_or(RegionLabel::Outside)
}

/// Hulls for every frame of a trial, searchable by time.
#[derive(Debug, Clone)]
pub struct HullTrack<T = f64> {
    frames: Vec<RegionHulls<T>>,
}

impl<T: Scalar> HullTrack<T> {
    pub fn new(frames: &[LandmarkFrame], map: &RegionMap) -> Self {
        Self {
            frames: frames.iter().map(|f| build_hulls(f, map)).collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Frame whose time is closest to `t` (earlier frame on ties).
    pub fn nearest(&self, t: T) -> Option<&RegionHulls<T>> {
        if self.frames.is_empty() {
            return None;
        }
        let i = self.frames.partition_point(|f| f.frame_time < t);
        if i == 0 {
            return self.frames.first();
        }
        if i == self.frames.len() {
            return self.frames.last();
        }
        let before = &self.frames[i - 1];
        let after = &self.frames[i];
        if t - before.frame_time <= after.frame_time - t {
            Some(before)
        } else {
            Some(after)
        }
    }

    pub fn label(&self, t: T, point: Point<T>) -> RegionLabel {
        self.nearest(t)
            .map(|h| label_gaze(point, h))
            .unwrap_or(RegionLabel::Outside)
    }
}

/// Share of fixations per label, ordered as [`RegionLabel::ALL`].
/// With no fixations the uniform vector is returned and the flag is set.
pub fn region_proportions<T: Scalar>(labels: &[RegionLabel]) -> ([T; 5], bool) {
    if labels.is_empty() {
        return ([T::lit(0.2); 5], true);
    }
    let mut counts = [0usize; 5];
    for l in labels {
        counts[l.index()] += 1;
    }
    let total = T::from_usize_lossy(labels.len());
    (counts.map(|c| T::from_usize_lossy(c) / total), false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Gift wrapping (Jarvis march) as an independent hull oracle.
    fn gift_wrap(points: &[Point<f64>]) -> Vec<Point<f64>> {
        let start = *points
            .iter()
            .min_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])))
            .unwrap();
        let mut hull = vec![start];
        let mut current = start;
        loop {
            let mut candidate = points[0];
            for &p in points {
                if candidate == current {
                    candidate = p;
                    continue;
                }
                let c = cross(current, candidate, p);
                let farther = (p[0] - current[0]).hypot(p[1] - current[1])
                    > (candidate[0] - current[0]).hypot(candidate[1] - current[1]);
                if c < 0.0 || (c == 0.0 && farther) {
                    candidate = p;
                }
            }
            if candidate == start {
                break;
            }
            hull.push(candidate);
            current = candidate;
        }
        hull
    }

    #[test]
    fn triangle_hull() {
        let pts = [[0.1, 0.1], [0.5, 0.1], [0.3, 0.4]];
        let h = dilated_hull(&pts, 0.0);
        assert_eq!(h.vertices.len(), 3);
        assert!(!h.degenerate);
        assert!(pts.iter().all(|&p| h.contains(p)));
    }

    #[test]
    fn square_with_center_matches_gift_wrap() {
        let pts = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5]];
        let mut ours = convex_hull(&pts);
        let mut oracle = gift_wrap(&pts);
        assert_eq!(ours.len(), 4);
        assert!(!ours.contains(&[0.5, 0.5]));
        let key = |a: &Point<f64>, b: &Point<f64>| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1]));
        ours.sort_by(key);
        oracle.sort_by(key);
        assert_eq!(ours, oracle);
    }

    #[test]
    fn collinear_points_give_capsule() {
        let m = 0.02;
        let pts = [[0.2, 0.5], [0.3, 0.5], [0.4, 0.5]];
        let poly = dilated_hull(&pts, m);
        assert!(poly.degenerate);
        let ys: Vec<f64> = poly.vertices.iter().map(|p| p[1]).collect();
        let width = ys.iter().cloned().fold(f64::MIN, f64::max) - ys.iter().cloned().fold(f64::MAX, f64::min);
        assert!((width - 2.0 * m).abs() < 1e-12);
        assert!(pts.iter().all(|&p| poly.contains(p)));
        assert!(poly.contains([0.3, 0.5 + m * 0.99]));
        assert!(!poly.contains([0.3, 0.5 + m * 1.01]));
    }

    fn face() -> LandmarkFrame {
        crate::synth::canonical_face(0.0, [0.0, 0.0], "t".into())
    }

    #[test]
    fn labels_by_priority() {
        let map = RegionMap::default();
        let hulls: RegionHulls<f64> = build_hulls(&face(), &map);
        let eye = hulls.regions[RegionLabel::Eyes.index()].centroid();
        assert_eq!(label_gaze(eye, &hulls), RegionLabel::Eyes);
        assert_eq!(label_gaze([0.99, 0.99], &hulls), RegionLabel::Outside);

        // point in both the dilated eyes and eyebrows polygons
        let eyes = &hulls.regions[RegionLabel::Eyes.index()];
        let brows = &hulls.regions[RegionLabel::Eyebrows.index()];
        let mut overlap = None;
        for i in 0..400 {
            for j in 0..400 {
                let p = [0.3 + 0.4 * i as f64 / 400.0, 0.2 + 0.3 * j as f64 / 400.0];
                if eyes.contains(p) && brows.contains(p) {
                    overlap = Some(p);
                }
            }
        }
        let p = overlap.expect("dilated eyes and eyebrows overlap");
        assert_eq!(label_gaze(p, &hulls), RegionLabel::Eyes);
    }

    #[test]
    fn landmarks_inside_own_hull() {
        let map = RegionMap::default();
        let f = face();
        let hulls: RegionHulls<f64> = build_hulls(&f, &map);
        for r in RegionLabel::FACIAL {
            for &i in map.indices(r) {
                assert!(hulls.regions[r.index()].contains(f.points[i]));
            }
            assert!(hulls.regions[r.index()].is_convex());
        }
    }

    #[test]
    fn proportions_examples() {
        use RegionLabel::*;
        let (p, flag) = region_proportions::<f64>(&[Mouth; 4]);
        assert_eq!(p, [0.0, 0.0, 0.0, 1.0, 0.0]);
        assert!(!flag);
        let (p, _) = region_proportions::<f64>(&[Eyes, Mouth, Eyes, Mouth]);
        assert_eq!(p, [0.5, 0.0, 0.0, 0.5, 0.0]);
        let (p, flag) = region_proportions::<f64>(&[]);
        assert_eq!(p, [0.2; 5]);
        assert!(flag);
    }

    #[test]
    fn nearest_frame_lookup() {
        let map = RegionMap::default();
        let frames: Vec<LandmarkFrame> = [0.0, 0.5, 1.0]
            .iter()
            .map(|&t| crate::synth::canonical_face(t, [0.0, 0.0], "t".into()))
            .collect();
        let track: HullTrack<f64> = HullTrack::new(&frames, &map);
        assert_eq!(track.nearest(0.2).unwrap().frame_time, 0.0);
        assert_eq!(track.nearest(0.3).unwrap().frame_time, 0.5);
        assert_eq!(track.nearest(7.0).unwrap().frame_time, 1.0);
        assert_eq!(track.nearest(-1.0).unwrap().frame_time, 0.0);
    }

    #[test]
    fn generic_over_f32() {
        let poly = dilated_hull::<f32>(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], 0.0);
        assert!(poly.contains([0.25, 0.25]));
        assert!(!poly.contains([0.75, 0.75]));
    }

    proptest! {
        #[test]
        fn proportions_are_a_distribution(idx in proptest::collection::vec(0usize..5, 0..50)) {
            let labels: Vec<RegionLabel> = idx.iter().map(|&i| RegionLabel::ALL[i]).collect();
            let (p, _) = region_proportions::<f64>(&labels);
            prop_assert!(p.iter().all(|&v| v >= 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn label_is_similarity_equivariant(
            px in 0.2f64..0.8, py in 0.2f64..0.8,
            scale in 0.5f64..2.0, dx in -0.3f64..0.3, dy in -0.3f64..0.3,
        ) {
            let mut map = RegionMap::default();
            map.margin = 0.0;
            let f = face();
            let base: RegionHulls<f64> = build_hulls(&f, &map);
            let moved = LandmarkFrame {
                points: f.points.iter().map(|p| [p[0] * scale + dx, p[1] * scale + dy]).collect(),
                ..f.clone()
            };
            let tr: RegionHulls<f64> = build_hulls(&moved, &map);
            let a = label_gaze([px, py], &base);
            let b = label_gaze([px * scale + dx, py * scale + dy], &tr);
            // points within rounding distance of an edge may flip; skip them
            let near_edge = base.regions.iter().any(|poly| {
                let v = &poly.vertices;
                (0..v.len()).any(|i| {
                    let (p0, p1) = (v[i], v[(i + 1) % v.len()]);
                    let len = (p1[0] - p0[0]).hypot(p1[1] - p0[1]);
                    (cross(p0, p1, [px, py]) / len).abs() < 1e-9
                })
            });
            prop_assume!(!near_edge);
            prop_assert_eq!(a, b);
        }
    }
}
