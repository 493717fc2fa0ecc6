//! Search-task geometry, prior and eccentricity-dependent visibility.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack allowed when checking that coordinates sit inside the field.
const RADIUS_SLACK: f64 = 1e-9;

/// Points per ring beyond the center: 6r up to a cap of 24.
fn ring_size(ring: usize) -> usize {
    (6 * ring).min(24)
}

/// Location counts that the concentric-ring layout produces exactly.
pub fn ring_counts(limit: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut total = 1;
    let mut ring = 1;
    while total + ring_size(ring) <= limit {
        total += ring_size(ring);
        out.push(total);
        ring += 1;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// How a location set was produced; kept so configs save back to the same form.
#[derive(Debug, Clone, PartialEq)]
pub enum Layout {
    Grid,
    Explicit,
}

/// Candidate target locations in degrees of visual angle.
#[derive(Debug, Clone, PartialEq)]
pub struct LocationSet {
    coords: Vec<Point>,
    field_radius: f64,
    layout: Layout,
}

impl LocationSet {
    /// Validates an explicit coordinate list against the field radius.
    pub fn from_coords(coords: Vec<Point>, field_radius: f64) -> Result<Self> {
        Self::checked(coords, field_radius, Layout::Explicit)
    }

    fn checked(coords: Vec<Point>, field_radius: f64, layout: Layout) -> Result<Self> {
        if !(field_radius > 0.0 && field_radius.is_finite()) {
            return Err(Error::InvalidTask(format!(
                "field radius must be positive, got {field_radius}"
            )));
        }
        if coords.len() < 2 {
            return Err(Error::InvalidTask(format!(
                "n >= 2 locations required, got {}",
                coords.len()
            )));
        }
        for (i, p) in coords.iter().enumerate() {
            if !(p.x.is_finite() && p.y.is_finite()) {
                return Err(Error::InvalidTask(format!(
                    "location {i} has non-finite coordinates"
                )));
            }
            if p.norm() > field_radius + RADIUS_SLACK {
                return Err(Error::InvalidTask(format!(
                    "location {i} at eccentricity {:.6} lies outside the field radius {field_radius}",
                    p.norm()
                )));
            }
        }
        for i in 0..coords.len() {
            for j in i + 1..coords.len() {
                if coords[i].distance(&coords[j]) <= 0.0 {
                    return Err(Error::InvalidTask(format!(
                        "locations {i} and {j} coincide"
                    )));
                }
            }
        }
        Ok(Self {
            coords,
            field_radius,
            layout,
        })
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coords(&self) -> &[Point] {
        &self.coords
    }

    pub fn field_radius(&self) -> f64 {
        self.field_radius
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn get(&self, index: usize) -> Result<Point> {
        self.coords
            .get(index)
            .copied()
            .ok_or(Error::IndexOutOfRange {
                index,
                n: self.coords.len(),
            })
    }

    /// Euclidean distance between two locations.
    pub fn eccentricity(&self, a: usize, b: usize) -> Result<f64> {
        Ok(self.get(a)?.distance(&self.get(b)?))
    }

    /// Index of the location closest to the field center (lowest index on ties).
    pub fn center_index(&self) -> usize {
        let mut best = 0;
        for (i, p) in self.coords.iter().enumerate() {
            if p.norm() < self.coords[best].norm() {
                best = i;
            }
        }
        best
    }
}

/// Builds `n` locations inside a disk of the given radius.
///
/// Counts in [`ring_counts`] get a center point plus concentric rings (ring
/// `r` holds `min(6r, 24)` equally spaced points at radius `r·R/rings`, first
/// point on the +x axis). Any other `n` falls back to a Vogel sunflower
/// spiral with radii `R·sqrt((m + 0.5)/n)`.
pub fn build_location_grid(n: usize, field_radius: f64) -> Result<LocationSet> {
    if n < 2 {
        return Err(Error::InvalidTask(format!(
            "n >= 2 locations required, got {n}"
        )));
    }
    if !(field_radius > 0.0 && field_radius.is_finite()) {
        return Err(Error::InvalidTask(format!(
            "field radius must be positive, got {field_radius}"
        )));
    }
    let coords = if ring_counts(n).last() == Some(&n) {
        let rings = ring_counts(n).len();
        let mut coords = vec![Point::new(0.0, 0.0)];
        for ring in 1..=rings {
            let radius = field_radius * ring as f64 / rings as f64;
            let count = ring_size(ring);
            for m in 0..count {
                let angle = 2.0 * PI * m as f64 / count as f64;
                coords.push(Point::new(radius * angle.cos(), radius * angle.sin()));
            }
        }
        coords
    } else {
        let golden = PI * (3.0 - 5f64.sqrt());
        (0..n)
            .map(|m| {
                let r = field_radius * ((m as f64 + 0.5) / n as f64).sqrt();
                let a = golden * m as f64;
                Point::new(r * a.cos(), r * a.sin())
            })
            .collect()
    };
    LocationSet::checked(coords, field_radius, Layout::Grid)
}

/// Target detectability as a function of eccentricity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum VisibilityMap {
    /// d′(ε) = d0 / (1 + (ε / e_half)^β)
    Parametric { d0: f64, e_half: f64, beta: f64 },
    /// Piecewise-linear through `(eccentricity, d′)` knots, clamped at both ends.
    Table { knots: Vec<[f64; 2]> },
}

impl Default for VisibilityMap {
    fn default() -> Self {
        VisibilityMap::Parametric {
            d0: 4.0,
            e_half: 4.0,
            beta: 1.5,
        }
    }
}

impl VisibilityMap {
    pub fn constant(d: f64) -> Self {
        VisibilityMap::Table {
            knots: vec![[0.0, d]],
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            VisibilityMap::Parametric { d0, e_half, beta } => {
                let ok = |v: f64| v > 0.0 && v.is_finite();
                if !ok(*d0) || !ok(*e_half) || !ok(*beta) {
                    return Err(Error::InvalidTask(format!(
                        "parametric visibility needs positive d0, e_half, beta (got {d0}, {e_half}, {beta})"
                    )));
                }
            }
            VisibilityMap::Table { knots } => {
                if knots.is_empty() {
                    return Err(Error::InvalidTask("visibility table has no knots".into()));
                }
                for (i, [e, d]) in knots.iter().enumerate() {
                    if !(e.is_finite() && *e >= 0.0) {
                        return Err(Error::InvalidTask(format!(
                            "visibility knot {i}: bad eccentricity {e}"
                        )));
                    }
                    if !(d.is_finite() && *d > 0.0) {
                        return Err(Error::InvalidTask(format!(
                            "visibility knot {i}: d' must be positive, got {d}"
                        )));
                    }
                }
                for (i, w) in knots.windows(2).enumerate() {
                    if w[1][0] <= w[0][0] {
                        return Err(Error::InvalidTask(format!(
                            "visibility table eccentricities must strictly increase (knot {})",
                            i + 1
                        )));
                    }
                    if w[1][1] > w[0][1] {
                        return Err(Error::InvalidTask(format!(
                            "visibility table is not monotone: d' rises from {} to {} at knot {}",
                            w[0][1],
                            w[1][1],
                            i + 1
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// d′ at eccentricity `eps` (degrees).
    pub fn dprime(&self, eps: f64) -> f64 {
        match self {
            VisibilityMap::Parametric { d0, e_half, beta } => {
                d0 / (1.0 + (eps / e_half).powf(*beta))
            }
            VisibilityMap::Table { knots } => {
                if eps <= knots[0][0] {
                    return knots[0][1];
                }
                for w in knots.windows(2) {
                    let ([e0, d0], [e1, d1]) = (w[0], w[1]);
                    if eps <= e1 {
                        return d0 + (d1 - d0) * (eps - e0) / (e1 - e0);
                    }
                }
                knots[knots.len() - 1][1]
            }
        }
    }

    /// Foveal value d′(0).
    pub fn foveal(&self) -> f64 {
        self.dprime(0.0)
    }
}

/// d′ for a target at `target` while fixating `fixation`.
pub fn visibility(
    map: &VisibilityMap,
    fixation: usize,
    target: usize,
    locs: &LocationSet,
) -> Result<f64> {
    Ok(map.dprime(locs.eccentricity(fixation, target)?))
}

/// Prior over target locations.
#[derive(Debug, Clone, PartialEq)]
pub enum Prior {
    Uniform,
    Explicit(Vec<f64>),
}

/// Plain inputs for [`TaskConfig::new`].
#[derive(Debug, Clone)]
pub struct TaskParams {
    pub locations: LocationSet,
    pub visibility: VisibilityMap,
    pub prior: Prior,
    pub saccade_budget: usize,
    /// `None` selects the location nearest the field center.
    pub initial_fixation: Option<usize>,
    pub mean_present: f64,
    pub mean_absent: f64,
}

impl TaskParams {
    pub fn new(locations: LocationSet, visibility: VisibilityMap) -> Self {
        Self {
            locations,
            visibility,
            prior: Prior::Uniform,
            saccade_budget: 3,
            initial_fixation: None,
            mean_present: 0.5,
            mean_absent: -0.5,
        }
    }
}

/// A validated search task. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskConfig {
    locations: LocationSet,
    visibility: VisibilityMap,
    prior_kind: Prior,
    prior: Vec<f64>,
    ln_prior: Arc<[f64]>,
    saccade_budget: usize,
    initial_fixation: usize,
    center_start: bool,
    mean_present: f64,
    mean_absent: f64,
    /// d′ table, row = fixation, column = location.
    dprime: Vec<f64>,
}

impl TaskConfig {
    pub fn new(params: TaskParams) -> Result<Self> {
        let TaskParams {
            locations,
            visibility,
            prior: prior_kind,
            saccade_budget,
            initial_fixation,
            mean_present,
            mean_absent,
        } = params;
        let n = locations.len();
        visibility.validate()?;
        let prior = match &prior_kind {
            Prior::Uniform => vec![1.0 / n as f64; n],
            Prior::Explicit(values) => {
                if values.len() != n {
                    return Err(Error::InvalidTask(format!(
                        "prior has {} entries for {n} locations",
                        values.len()
                    )));
                }
                if let Some(i) = values.iter().position(|p| !(p.is_finite() && *p >= 0.0)) {
                    return Err(Error::InvalidTask(format!(
                        "prior entry {i} is negative or non-finite"
                    )));
                }
                let total: f64 = values.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidTask(format!(
                        "prior not normalized (sums to {total})"
                    )));
                }
                values.clone()
            }
        };
        if saccade_budget < 1 {
            return Err(Error::InvalidTask(
                "saccade budget must be at least 1".into(),
            ));
        }
        let center_start = initial_fixation.is_none();
        let initial_fixation = initial_fixation.unwrap_or_else(|| locations.center_index());
        if initial_fixation >= n {
            return Err(Error::IndexOutOfRange {
                index: initial_fixation,
                n,
            });
        }
        if !(mean_present.is_finite() && mean_absent.is_finite() && mean_present > mean_absent) {
            return Err(Error::InvalidTask(format!(
                "response means must satisfy present > absent (got {mean_present}, {mean_absent})"
            )));
        }
        let mut dprime = Vec::with_capacity(n * n);
        for k in 0..n {
            for i in 0..n {
                let d = visibility.dprime(locations.eccentricity(k, i)?);
                if !(d > 0.0 && d.is_finite()) {
                    return Err(Error::InvalidTask(format!(
                        "d' is not positive at fixation {k}, location {i}"
                    )));
                }
                dprime.push(d);
            }
        }
        let ln_prior: Arc<[f64]> = prior.iter().map(|p| p.ln()).collect();
        Ok(Self {
            locations,
            visibility,
            prior_kind,
            prior,
            ln_prior,
            saccade_budget,
            initial_fixation,
            center_start,
            mean_present,
            mean_absent,
            dprime,
        })
    }

    /// 85 ring locations over 8°, default visibility map, uniform prior,
    /// three saccades from the center.
    pub fn reference() -> Self {
        let locations = build_location_grid(85, 8.0).expect("85 is a ring count");
        Self::new(TaskParams::new(locations, VisibilityMap::default()))
            .expect("reference task is valid")
    }

    pub fn n(&self) -> usize {
        self.locations.len()
    }

    pub fn locations(&self) -> &LocationSet {
        &self.locations
    }

    pub fn visibility_map(&self) -> &VisibilityMap {
        &self.visibility
    }

    pub fn prior(&self) -> &[f64] {
        &self.prior
    }

    pub fn prior_kind(&self) -> &Prior {
        &self.prior_kind
    }

    pub fn ln_prior(&self) -> &Arc<[f64]> {
        &self.ln_prior
    }

    pub fn has_uniform_prior(&self) -> bool {
        matches!(self.prior_kind, Prior::Uniform)
    }

    pub fn saccade_budget(&self) -> usize {
        self.saccade_budget
    }

    pub fn initial_fixation(&self) -> usize {
        self.initial_fixation
    }

    pub fn starts_at_center(&self) -> bool {
        self.center_start
    }

    pub fn mean_present(&self) -> f64 {
        self.mean_present
    }

    pub fn mean_absent(&self) -> f64 {
        self.mean_absent
    }

    /// Cached d′ for `location` seen from `fixation`. Panics on bad indices.
    #[inline]
    pub fn dprime(&self, fixation: usize, location: usize) -> f64 {
        self.dprime[fixation * self.n() + location]
    }

    /// All d′ values seen from one fixation.
    #[inline]
    pub fn dprime_row(&self, fixation: usize) -> &[f64] {
        let n = self.n();
        &self.dprime[fixation * n..(fixation + 1) * n]
    }

    /// Mean separation μ₊ − μ₋ (1 for the ±0.5 model).
    pub fn separation(&self) -> f64 {
        self.mean_present - self.mean_absent
    }

    /// Log-likelihood-ratio weight of one response:
    /// `d′² · (Δ·w − (μ₊² − μ₋²)/2)`, which is `d′² · w` for means ±0.5.
    #[inline]
    pub fn evidence(&self, fixation: usize, location: usize, response: f64) -> f64 {
        let d = self.dprime(fixation, location);
        let offset =
            0.5 * (self.mean_present * self.mean_present - self.mean_absent * self.mean_absent);
        d * d * (self.separation() * response - offset)
    }

    /// Same task with a different saccade budget.
    pub fn with_saccade_budget(&self, budget: usize) -> Result<Self> {
        if budget < 1 {
            return Err(Error::InvalidTask(
                "saccade budget must be at least 1".into(),
            ));
        }
        Ok(Self {
            saccade_budget: budget,
            ..self.clone()
        })
    }

    pub fn to_params(&self) -> TaskParams {
        TaskParams {
            locations: self.locations.clone(),
            visibility: self.visibility.clone(),
            prior: self.prior_kind.clone(),
            saccade_budget: self.saccade_budget,
            initial_fixation: if self.center_start {
                None
            } else {
                Some(self.initial_fixation)
            },
            mean_present: self.mean_present,
            mean_absent: self.mean_absent,
        }
    }
}
