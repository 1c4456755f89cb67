//! Multi-interval geometry: validated (J, E) configurations with classified
//! endpoints, and real Möbius transformations acting on points,
//! configurations, and sampled functions.
//!
//! Conventions used throughout:
//!
//! - Intervals are closed and may be unbounded on at most one side; `±∞` is
//!   represented by `f64::INFINITY` / `f64::NEG_INFINITY`.
//! - The point at infinity is a *single* point (the real projective line):
//!   two rays of the same set are adjacent through ∞ and that set then owns ∞
//!   as an interior point; `∞` is a **double** endpoint exactly when both J
//!   and E are unbounded. Wherever a single value must stand for ∞, the
//!   canonical representative `f64::INFINITY` is used.
//! - Endpoint identity is exact floating-point equality; callers wanting a
//!   fuzzy merge must pre-process their inputs.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors produced by configuration validation and Möbius operations.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    /// `lo ≥ hi`, a NaN endpoint, or an interval unbounded on both sides.
    #[error("degenerate interval [{lo}, {hi}]: need lo < hi with at least one finite endpoint")]
    DegenerateInterval { lo: f64, hi: f64 },
    /// Two interval interiors intersect (within one set or across J and E).
    #[error("interval interiors overlap on ({lo}, {hi})")]
    OverlapError { lo: f64, hi: f64 },
    /// Two parts are unbounded in the same direction, which forces an overlap
    /// through that end of the line.
    #[error("two interval parts are unbounded in the same direction")]
    BothUnboundedSameSide,
    /// A function sample coincides with the pole −d/c of the map.
    #[error("sample point x = {x} coincides with the Möbius pole")]
    SamplesAtPole { x: f64 },
    /// Coefficients with `ad − bc ≤ 0` cannot be normalized to `ad − bc = 1`
    /// (orientation-reversing or singular input).
    #[error("Möbius coefficients need ad − bc > 0, got determinant {det}")]
    SingularMobius { det: f64 },
    /// The union J ∪ E covers all of ℝ, so no finite gap can host the pole of
    /// a compactifying map.
    #[error("configuration covers the whole line; no finite gap for a compactifying pole")]
    NoFiniteGap,
}

/// Which of the two multi-intervals a part belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SetLabel {
    J,
    E,
}

/// Endpoint classification: an endpoint is **double** when it is shared by a
/// J interval and an E interval, **simple** when it bounds exactly one
/// interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EndpointClass {
    Simple,
    Double,
}

/// A closed interval on the extended real line, unbounded on at most one side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    /// Builds an interval, rejecting `lo ≥ hi`, NaN endpoints, and
    /// `(−∞, +∞)`.
    pub fn new(lo: f64, hi: f64) -> Result<Self, GeometryError> {
        let degenerate = !(lo < hi)
            || lo.is_nan()
            || hi.is_nan()
            || (lo == f64::NEG_INFINITY && hi == f64::INFINITY);
        if degenerate {
            return Err(GeometryError::DegenerateInterval { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    pub fn is_bounded(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }

    /// Closed-interval membership for finite `x`.
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    /// Open-interval membership.
    pub fn contains_interior(&self, x: f64) -> bool {
        self.lo < x && x < self.hi
    }

    fn interiors_overlap(&self, other: &Interval) -> bool {
        self.lo.max(other.lo) < self.hi.min(other.hi)
    }
}

/// An ordered union of pairwise interior-disjoint intervals carrying the set
/// label J or E. Adjacent parts sharing an endpoint are merged on
/// construction (same-type adjacency is a single interval by convention).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiInterval {
    pub parts: Vec<Interval>,
    pub label: SetLabel,
}

impl MultiInterval {
    /// Sorts, merges shared-endpoint adjacency, and checks interior
    /// disjointness. Returns the set and whether any same-type merge
    /// happened (surfaced as a warning flag on the configuration).
    pub fn new(raw: &[Interval], label: SetLabel) -> Result<(Self, bool), GeometryError> {
        if raw.is_empty() {
            return Err(GeometryError::DegenerateInterval {
                lo: f64::NAN,
                hi: f64::NAN,
            });
        }
        let mut parts = raw.to_vec();
        parts.sort_by(|a, b| a.lo.partial_cmp(&b.lo).expect("endpoints are not NaN"));
        // Two parts unbounded the same way sort together and necessarily
        // overlap; report the clearer error first.
        if parts.iter().filter(|p| p.lo == f64::NEG_INFINITY).count() > 1
            || parts.iter().filter(|p| p.hi == f64::INFINITY).count() > 1
        {
            return Err(GeometryError::BothUnboundedSameSide);
        }
        let mut merged: Vec<Interval> = Vec::with_capacity(parts.len());
        let mut merged_any = false;
        for part in parts {
            match merged.last_mut() {
                Some(prev) if prev.hi == part.lo => {
                    prev.hi = part.hi;
                    merged_any = true;
                }
                Some(prev) if prev.interiors_overlap(&part) => {
                    return Err(GeometryError::OverlapError {
                        lo: part.lo.max(prev.lo),
                        hi: part.hi.min(prev.hi),
                    });
                }
                _ => merged.push(part),
            }
        }
        Ok((Self { parts: merged, label }, merged_any))
    }

    pub fn contains(&self, x: f64) -> bool {
        self.parts.iter().any(|p| p.contains(x))
    }

    pub fn contains_interior(&self, x: f64) -> bool {
        self.parts.iter().any(|p| p.contains_interior(x))
    }

    pub fn is_bounded(&self) -> bool {
        self.parts.iter().all(|p| p.is_bounded())
    }

    fn unbounded_left(&self) -> bool {
        self.parts.first().is_some_and(|p| p.lo == f64::NEG_INFINITY)
    }

    fn unbounded_right(&self) -> bool {
        self.parts.last().is_some_and(|p| p.hi == f64::INFINITY)
    }

    fn has_finite_endpoint(&self, x: f64) -> bool {
        self.parts.iter().any(|p| p.lo == x || p.hi == x)
    }
}

/// A classified endpoint of the union U = J ∪ E. The point at infinity, when
/// it is an endpoint, is stored as `f64::INFINITY`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Endpoint {
    pub point: f64,
    pub class: EndpointClass,
}

/// A validated pair (J, E): interiors disjoint, endpoints classified, double
/// points counted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    pub j: MultiInterval,
    pub e: MultiInterval,
    pub endpoints: Vec<Endpoint>,
    pub n_double: usize,
    /// True when same-type adjacent input intervals were merged during
    /// validation; surfaced so callers can see the normalization happened.
    pub merged_same_type: bool,
}

impl Configuration {
    pub fn is_bounded(&self) -> bool {
        self.j.is_bounded() && self.e.is_bounded()
    }

    /// All parts of U = J ∪ E in ascending order, tagged with their set.
    pub fn union_parts(&self) -> Vec<(Interval, SetLabel)> {
        let mut all: Vec<(Interval, SetLabel)> = self
            .j
            .parts
            .iter()
            .map(|p| (*p, SetLabel::J))
            .chain(self.e.parts.iter().map(|p| (*p, SetLabel::E)))
            .collect();
        all.sort_by(|a, b| a.0.lo.partial_cmp(&b.0.lo).expect("endpoints are not NaN"));
        all
    }
}

/// Validates raw interval lists into a [`Configuration`]: sorts and merges
/// each set, rejects interior overlaps, and classifies every endpoint as
/// simple or double (∞ is double exactly when both J and E are unbounded).
pub fn validate_configuration(
    j_raw: &[Interval],
    e_raw: &[Interval],
) -> Result<Configuration, GeometryError> {
    let (j, j_merged) = MultiInterval::new(j_raw, SetLabel::J)?;
    let (e, e_merged) = MultiInterval::new(e_raw, SetLabel::E)?;

    let j_unbounded = j.unbounded_left() || j.unbounded_right();
    let e_unbounded = e.unbounded_left() || e.unbounded_right();
    if (j.unbounded_left() && e.unbounded_left())
        || (j.unbounded_right() && e.unbounded_right())
    {
        return Err(GeometryError::BothUnboundedSameSide);
    }
    for jp in &j.parts {
        for ep in &e.parts {
            if jp.interiors_overlap(ep) {
                return Err(GeometryError::OverlapError {
                    lo: jp.lo.max(ep.lo),
                    hi: jp.hi.min(ep.hi),
                });
            }
        }
    }

    // Finite endpoints: double iff the same number bounds a part of each set.
    let mut points: Vec<f64> = j
        .parts
        .iter()
        .chain(e.parts.iter())
        .flat_map(|p| [p.lo, p.hi])
        .filter(|x| x.is_finite())
        .collect();
    points.sort_by(|a, b| a.partial_cmp(b).expect("finite endpoints"));
    points.dedup();
    let mut endpoints: Vec<Endpoint> = points
        .into_iter()
        .map(|x| Endpoint {
            point: x,
            class: if j.has_finite_endpoint(x) && e.has_finite_endpoint(x) {
                EndpointClass::Double
            } else {
                EndpointClass::Simple
            },
        })
        .collect();

    // The point at infinity: double when both sets are unbounded; simple when
    // exactly one set is unbounded on exactly one side; interior to a set that
    // wraps through ∞ (unbounded on both sides) — then not an endpoint.
    if j_unbounded && e_unbounded {
        endpoints.push(Endpoint {
            point: f64::INFINITY,
            class: EndpointClass::Double,
        });
    } else if j_unbounded || e_unbounded {
        let set = if j_unbounded { &j } else { &e };
        if !(set.unbounded_left() && set.unbounded_right()) {
            endpoints.push(Endpoint {
                point: f64::INFINITY,
                class: EndpointClass::Simple,
            });
        }
    }

    let n_double = endpoints
        .iter()
        .filter(|e| e.class == EndpointClass::Double)
        .count();
    Ok(Configuration {
        j,
        e,
        endpoints,
        n_double,
        merged_same_type: j_merged || e_merged,
    })
}

/// A real Möbius map x ↦ (ax+b)/(cx+d), stored normalized to ad − bc = 1.
/// These are exactly the orientation-preserving homeomorphisms of the real
/// projective line, under which the two-set Hilbert transform picture is
/// covariant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mobius {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Mobius {
    /// Normalizes the coefficients to ad − bc = 1. Rejects `ad − bc ≤ 0`:
    /// negative-determinant maps reverse orientation and conjugate the
    /// Hilbert transform to its negative, so they are outside this model.
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Result<Self, GeometryError> {
        let det = a * d - b * c;
        if !(det > 0.0) || !det.is_finite() {
            return Err(GeometryError::SingularMobius { det });
        }
        let s = det.sqrt();
        Ok(Self {
            a: a / s,
            b: b / s,
            c: c / s,
            d: d / s,
        })
    }

    pub fn identity() -> Self {
        Self {
            a: 1.0,
            b: 0.0,
            c: 0.0,
            d: 1.0,
        }
    }

    /// The finite pole −d/c, if the map has one.
    pub fn pole(&self) -> Option<f64> {
        (self.c != 0.0).then(|| -self.d / self.c)
    }

    /// Matrix-product composition: `self ∘ other` (apply `other` first).
    pub fn compose(&self, other: &Mobius) -> Mobius {
        // The coefficient product of two unit-determinant maps has unit
        // determinant; renormalization only cleans up rounding.
        Mobius::new(
            self.a * other.a + self.b * other.c,
            self.a * other.b + self.b * other.d,
            self.c * other.a + self.d * other.c,
            self.c * other.b + self.d * other.d,
        )
        .expect("composition of unit-determinant maps")
    }

    pub fn inverse(&self) -> Mobius {
        Mobius {
            a: self.d,
            b: -self.b,
            c: -self.c,
            d: self.a,
        }
    }
}

/// Total evaluation on the extended reals: the pole −d/c maps to ∞ and ∞ maps
/// to a/c (to ±∞ preserving direction for affine maps). The single projective
/// point at infinity is canonically returned as `f64::INFINITY`.
pub fn mobius_apply(m: &Mobius, x: f64) -> f64 {
    if x.is_infinite() {
        return if m.c != 0.0 {
            m.a / m.c
        } else {
            // Affine and increasing (a/d > 0 after normalization).
            x
        };
    }
    let den = m.c * x + m.d;
    if den == 0.0 {
        f64::INFINITY
    } else {
        (m.a * x + m.b) / den
    }
}

/// The unitary change of variables (𝒰f)(x) = f(m(x)) / (cx + d), evaluated at
/// the given sample points. Preserves the L² norm. Errors if a sample sits on
/// the pole of the map.
pub fn mobius_conjugate_function(
    m: &Mobius,
    f: &dyn Fn(f64) -> f64,
    samples: &[f64],
) -> Result<Vec<f64>, GeometryError> {
    samples
        .iter()
        .map(|&x| {
            let den = m.c * x + m.d;
            if den == 0.0 {
                Err(GeometryError::SamplesAtPole { x })
            } else {
                Ok(f(mobius_apply(m, x)) / den)
            }
        })
        .collect()
}

/// Image of a single interval, splitting into two rays when the pole lies in
/// the interior (the image then wraps through ∞). The map is increasing on
/// each component of its domain, so endpoint images bound the image parts.
fn image_parts(m: &Mobius, iv: Interval) -> Vec<Interval> {
    if m.c == 0.0 {
        return vec![Interval {
            lo: mobius_apply(m, iv.lo),
            hi: mobius_apply(m, iv.hi),
        }];
    }
    let q = -m.d / m.c;
    let at_infinity = m.a / m.c;
    let m_lo = if iv.lo.is_infinite() { at_infinity } else { mobius_apply(m, iv.lo) };
    let m_hi = if iv.hi.is_infinite() { at_infinity } else { mobius_apply(m, iv.hi) };
    if iv.contains_interior(q) {
        // (lo,q) ↦ [m(lo), +∞) and (q,hi) ↦ (−∞, m(hi)].
        vec![
            Interval { lo: f64::NEG_INFINITY, hi: m_hi },
            Interval { lo: m_lo, hi: f64::INFINITY },
        ]
    } else if q == iv.lo {
        vec![Interval { lo: f64::NEG_INFINITY, hi: m_hi }]
    } else if q == iv.hi {
        vec![Interval { lo: m_lo, hi: f64::INFINITY }]
    } else {
        vec![Interval { lo: m_lo, hi: m_hi }]
    }
}

/// Image configuration under a Möbius map. Endpoint classes transport along
/// the map, so the number of double points is preserved (∞ participates per
/// the classification rule).
pub fn mobius_image(m: &Mobius, cfg: &Configuration) -> Result<Configuration, GeometryError> {
    let j_parts: Vec<Interval> = cfg.j.parts.iter().flat_map(|p| image_parts(m, *p)).collect();
    let e_parts: Vec<Interval> = cfg.e.parts.iter().flat_map(|p| image_parts(m, *p)).collect();
    validate_configuration(&j_parts, &e_parts)
}

/// A Möbius map whose image of the configuration is bounded: the pole is
/// placed at the midpoint of a finite gap of U = J ∪ E. Returns the identity
/// when the configuration is already bounded, and [`GeometryError::NoFiniteGap`]
/// when U = ℝ (no gap exists; the explicit-diagonalization path applies
/// instead of compactification).
pub fn compactifying_map(cfg: &Configuration) -> Result<Mobius, GeometryError> {
    if cfg.is_bounded() {
        return Ok(Mobius::identity());
    }
    let parts = cfg.union_parts();
    let mut gap: Option<(f64, f64)> = None;
    for pair in parts.windows(2) {
        let (prev, next) = (pair[0].0, pair[1].0);
        if prev.hi < next.lo {
            gap = Some((prev.hi, next.lo));
            break;
        }
    }
    match gap {
        Some((lo, hi)) => {
            let p = 0.5 * (lo + hi);
            // x ↦ −1/(x − p): determinant 0·(−p) − (−1)·1 = 1.
            Mobius::new(0.0, -1.0, 1.0, -p)
        }
        None => Err(GeometryError::NoFiniteGap),
    }
}
