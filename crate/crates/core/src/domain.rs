//! Position domains `O`, phase-space points and the stratification of the
//! boundary of `D = O x R^d` into outgoing, incoming and tangential parts.

use serde::{Deserialize, Serialize};

use crate::error::{domain_err, Error, Result};

/// Largest supported space dimension.
pub const MAX_DIM: usize = 3;

/// Default tolerance on `|p . n|` below which a boundary point is tangential.
pub const DEFAULT_TOL0: f64 = 1e-12;

/// A position-momentum pair `(q, p)` in `R^d x R^d`, `d <= MAX_DIM`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhasePoint {
    dim: usize,
    q: [f64; MAX_DIM],
    p: [f64; MAX_DIM],
}

impl PhasePoint {
    pub fn new(q: &[f64], p: &[f64]) -> Result<Self> {
        if q.len() != p.len() || q.is_empty() || q.len() > MAX_DIM {
            return domain_err(format!(
                "phase point needs q and p of equal length 1..={MAX_DIM}, got {} and {}",
                q.len(),
                p.len()
            ));
        }
        if q.iter().chain(p).any(|v| !v.is_finite()) {
            return domain_err("phase point components must be finite");
        }
        let mut x = Self::zeros(q.len());
        x.q[..q.len()].copy_from_slice(q);
        x.p[..p.len()].copy_from_slice(p);
        Ok(x)
    }

    /// One-dimensional point.
    pub fn new_1d(q: f64, p: f64) -> Self {
        let mut x = Self::zeros(1);
        x.q[0] = q;
        x.p[0] = p;
        x
    }

    pub fn zeros(dim: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&dim), "dimension {dim} out of range");
        Self {
            dim,
            q: [0.0; MAX_DIM],
            p: [0.0; MAX_DIM],
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn q(&self) -> &[f64] {
        &self.q[..self.dim]
    }

    #[inline]
    pub fn p(&self) -> &[f64] {
        &self.p[..self.dim]
    }

    #[inline]
    pub fn q_mut(&mut self) -> &mut [f64] {
        &mut self.q[..self.dim]
    }

    #[inline]
    pub fn p_mut(&mut self) -> &mut [f64] {
        &mut self.p[..self.dim]
    }

    /// The point `(q, -p)`.
    pub fn flip_momentum(&self) -> Self {
        let mut x = *self;
        for v in x.p_mut() {
            *v = -*v;
        }
        x
    }

    /// Componentwise `self + theta (other - self)`.
    pub fn lerp(&self, other: &Self, theta: f64) -> Self {
        let mut x = *self;
        for i in 0..self.dim {
            x.q[i] += theta * (other.q[i] - self.q[i]);
            x.p[i] += theta * (other.p[i] - self.p[i]);
        }
        x
    }

    pub fn is_finite(&self) -> bool {
        self.q().iter().chain(self.p()).all(|v| v.is_finite())
    }
}

/// Stratum of a phase-space point relative to `dD`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoundaryClass {
    /// `p . n(q) > 0`: outgoing.
    GammaPlus,
    /// `p . n(q) < 0`: incoming.
    GammaMinus,
    /// `p . n(q) = 0`: tangential.
    GammaZero,
    Interior,
}

impl BoundaryClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            BoundaryClass::GammaPlus => "gamma_plus",
            BoundaryClass::GammaMinus => "gamma_minus",
            BoundaryClass::GammaZero => "gamma_zero",
            BoundaryClass::Interior => "interior",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum DomainSpec {
    Interval { a: f64, b: f64 },
    Ball { center: Vec<f64>, radius: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
enum Shape {
    Interval { a: f64, b: f64 },
    Ball { center: [f64; MAX_DIM], radius: f64 },
    Box { lo: [f64; MAX_DIM], hi: [f64; MAX_DIM] },
}

/// A bounded open connected position domain `O`.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionDomain {
    shape: Shape,
    dim: usize,
}

impl PositionDomain {
    pub fn interval(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return domain_err(format!("interval requires finite a < b, got ({a}, {b})"));
        }
        Ok(Self {
            shape: Shape::Interval { a, b },
            dim: 1,
        })
    }

    pub fn ball(center: &[f64], radius: f64) -> Result<Self> {
        let dim = check_dim(center.len())?;
        if !(radius.is_finite() && radius > 0.0) || center.iter().any(|c| !c.is_finite()) {
            return domain_err(format!("ball requires finite center and radius > 0, got {radius}"));
        }
        let mut c = [0.0; MAX_DIM];
        c[..dim].copy_from_slice(center);
        Ok(Self {
            shape: Shape::Ball { center: c, radius },
            dim,
        })
    }

    /// Axis-aligned box. Corners make it non-smooth, so exit-law checks reject it.
    pub fn cuboid(lo: &[f64], hi: &[f64]) -> Result<Self> {
        if lo.len() != hi.len() {
            return domain_err("box bounds must have equal length");
        }
        let dim = check_dim(lo.len())?;
        let (mut l, mut h) = ([0.0; MAX_DIM], [0.0; MAX_DIM]);
        for i in 0..dim {
            if !(lo[i].is_finite() && hi[i].is_finite() && lo[i] < hi[i]) {
                return domain_err(format!("box requires lo < hi in every coordinate (axis {i})"));
            }
            l[i] = lo[i];
            h[i] = hi[i];
        }
        Ok(Self {
            shape: Shape::Box { lo: l, hi: h },
            dim,
        })
    }

    pub fn from_spec(spec: &DomainSpec) -> Result<Self> {
        match spec {
            DomainSpec::Interval { a, b } => Self::interval(*a, *b),
            DomainSpec::Ball { center, radius } => Self::ball(center, *radius),
            DomainSpec::Box { lo, hi } => Self::cuboid(lo, hi),
        }
    }

    pub fn to_spec(&self) -> DomainSpec {
        match &self.shape {
            Shape::Interval { a, b } => DomainSpec::Interval { a: *a, b: *b },
            Shape::Ball { center, radius } => DomainSpec::Ball {
                center: center[..self.dim].to_vec(),
                radius: *radius,
            },
            Shape::Box { lo, hi } => DomainSpec::Box {
                lo: lo[..self.dim].to_vec(),
                hi: hi[..self.dim].to_vec(),
            },
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `(a, b)` for an interval domain.
    pub fn as_interval(&self) -> Option<(f64, f64)> {
        match self.shape {
            Shape::Interval { a, b } => Some((a, b)),
            _ => None,
        }
    }

    /// Whether the boundary is C^2 (false for boxes).
    pub fn is_smooth(&self) -> bool {
        !matches!(self.shape, Shape::Box { .. })
    }

    /// Lebesgue measure `|O|`.
    pub fn volume(&self) -> f64 {
        match &self.shape {
            Shape::Interval { a, b } => b - a,
            Shape::Ball { radius, .. } => {
                let r = *radius;
                match self.dim {
                    1 => 2.0 * r,
                    2 => std::f64::consts::PI * r * r,
                    _ => 4.0 / 3.0 * std::f64::consts::PI * r * r * r,
                }
            }
            Shape::Box { lo, hi } => (0..self.dim).map(|i| hi[i] - lo[i]).product(),
        }
    }

    pub fn diameter(&self) -> f64 {
        match &self.shape {
            Shape::Interval { a, b } => b - a,
            Shape::Ball { radius, .. } => 2.0 * radius,
            Shape::Box { lo, hi } => (0..self.dim)
                .map(|i| (hi[i] - lo[i]).powi(2))
                .sum::<f64>()
                .sqrt(),
        }
    }

    /// Default boundary tolerance `1e-10 diam(O)`.
    pub fn tol_b(&self) -> f64 {
        1e-10 * self.diameter()
    }

    /// Axis-aligned bounding box `(lo, hi)` over the first `dim` coordinates.
    pub fn bounding_box(&self) -> ([f64; MAX_DIM], [f64; MAX_DIM]) {
        match &self.shape {
            Shape::Interval { a, b } => {
                let (mut lo, mut hi) = ([0.0; MAX_DIM], [0.0; MAX_DIM]);
                lo[0] = *a;
                hi[0] = *b;
                (lo, hi)
            }
            Shape::Ball { center, radius } => {
                let (mut lo, mut hi) = (*center, *center);
                for i in 0..self.dim {
                    lo[i] -= radius;
                    hi[i] += radius;
                }
                (lo, hi)
            }
            Shape::Box { lo, hi } => (*lo, *hi),
        }
    }

    /// Signed distance: positive inside `O`, zero on `dO`, negative outside.
    ///
    /// Exact inside for all shapes; outside a box it is the largest face violation.
    #[inline]
    pub fn signed_distance(&self, q: &[f64]) -> f64 {
        match &self.shape {
            Shape::Interval { a, b } => (q[0] - a).min(b - q[0]),
            Shape::Ball { center, radius } => {
                let r2: f64 = (0..self.dim).map(|i| (q[i] - center[i]).powi(2)).sum();
                radius - r2.sqrt()
            }
            Shape::Box { lo, hi } => (0..self.dim)
                .map(|i| (q[i] - lo[i]).min(hi[i] - q[i]))
                .fold(f64::INFINITY, f64::min),
        }
    }

    #[inline]
    pub fn contains(&self, q: &[f64]) -> bool {
        self.signed_distance(q) > 0.0
    }

    /// `dist(q, dO)` for `q` in the closure of `O`.
    pub fn distance_to_boundary(&self, q: &[f64]) -> Result<f64> {
        self.check_len(q)?;
        let s = self.signed_distance(q);
        if s < -self.tol_b() {
            return domain_err(format!("point {q:?} lies outside the closure of the domain"));
        }
        Ok(s.max(0.0))
    }

    /// Unit outward normal at a boundary point (within `tol_b` of `dO`).
    pub fn outward_normal(&self, q: &[f64]) -> Result<[f64; MAX_DIM]> {
        self.outward_normal_tol(q, self.tol_b())
    }

    pub fn outward_normal_tol(&self, q: &[f64], tol: f64) -> Result<[f64; MAX_DIM]> {
        self.check_len(q)?;
        if self.signed_distance(q).abs() > tol {
            return domain_err(format!("point {q:?} is not on the boundary (tolerance {tol})"));
        }
        Ok(self.normal_unchecked(q))
    }

    /// Normal of the nearest boundary piece; meaningful near `dO`.
    pub(crate) fn normal_unchecked(&self, q: &[f64]) -> [f64; MAX_DIM] {
        let mut n = [0.0; MAX_DIM];
        match &self.shape {
            Shape::Interval { a, b } => {
                n[0] = if (q[0] - a).abs() <= (b - q[0]).abs() { -1.0 } else { 1.0 };
            }
            Shape::Ball { center, .. } => {
                let mut norm = 0.0;
                for i in 0..self.dim {
                    n[i] = q[i] - center[i];
                    norm += n[i] * n[i];
                }
                let norm = norm.sqrt();
                for v in n.iter_mut().take(self.dim) {
                    *v /= norm;
                }
            }
            Shape::Box { lo, hi } => {
                let mut best = f64::INFINITY;
                let mut axis = (0, 1.0);
                for i in 0..self.dim {
                    let (dl, dh) = ((q[i] - lo[i]).abs(), (hi[i] - q[i]).abs());
                    if dl < best {
                        best = dl;
                        axis = (i, -1.0);
                    }
                    if dh < best {
                        best = dh;
                        axis = (i, 1.0);
                    }
                }
                n[axis.0] = axis.1;
            }
        }
        n
    }

    /// Nearest point of `dO`.
    pub fn project_to_boundary(&self, q: &[f64]) -> [f64; MAX_DIM] {
        let mut out = [0.0; MAX_DIM];
        out[..self.dim].copy_from_slice(&q[..self.dim]);
        match &self.shape {
            Shape::Interval { a, b } => {
                out[0] = if (q[0] - a).abs() <= (b - q[0]).abs() { *a } else { *b };
            }
            Shape::Ball { center, radius } => {
                let n = self.normal_unchecked(q);
                for i in 0..self.dim {
                    out[i] = center[i] + radius * n[i];
                }
            }
            Shape::Box { lo, hi } => {
                for i in 0..self.dim {
                    out[i] = out[i].clamp(lo[i], hi[i]);
                }
                let n = self.normal_unchecked(&out);
                for i in 0..self.dim {
                    if n[i] < 0.0 {
                        out[i] = lo[i];
                    } else if n[i] > 0.0 {
                        out[i] = hi[i];
                    }
                }
            }
        }
        out
    }

    /// Stratum of `x`: interior when `q` is farther than `tol_b` from `dO`,
    /// otherwise decided by the sign of `p . n(q)` against `tol0`.
    pub fn classify_boundary(&self, x: &PhasePoint, tol0: f64) -> BoundaryClass {
        if self.signed_distance(x.q()).abs() > self.tol_b() {
            return BoundaryClass::Interior;
        }
        self.classify_momentum(x, tol0)
    }

    /// Stratum from the sign of `p . n` at the boundary piece nearest `q`.
    pub(crate) fn classify_momentum(&self, x: &PhasePoint, tol0: f64) -> BoundaryClass {
        let n = self.normal_unchecked(x.q());
        let pn: f64 = x.p().iter().zip(&n).map(|(p, n)| p * n).sum();
        if pn > tol0 {
            BoundaryClass::GammaPlus
        } else if pn < -tol0 {
            BoundaryClass::GammaMinus
        } else {
            BoundaryClass::GammaZero
        }
    }

    fn check_len(&self, q: &[f64]) -> Result<()> {
        if q.len() != self.dim {
            return Err(Error::Mismatch(format!(
                "position has {} components, domain has dimension {}",
                q.len(),
                self.dim
            )));
        }
        Ok(())
    }
}

fn check_dim(d: usize) -> Result<usize> {
    if d == 0 || d > MAX_DIM {
        return domain_err(format!("dimension must be in 1..={MAX_DIM}, got {d}"));
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn interval_normals() {
        let o = PositionDomain::interval(0.0, 1.0).unwrap();
        assert_eq!(o.outward_normal(&[1.0]).unwrap()[0], 1.0);
        assert_eq!(o.outward_normal(&[0.0]).unwrap()[0], -1.0);
        assert!(o.outward_normal(&[0.5]).is_err());
    }

    #[test]
    fn ball_normal_is_radial() {
        let o = PositionDomain::ball(&[0.0, 0.0], 2.0).unwrap();
        let n = o.outward_normal(&[2.0, 0.0]).unwrap();
        assert_eq!(&n[..2], &[1.0, 0.0]);
    }

    #[test]
    fn distances() {
        let o = PositionDomain::interval(0.0, 1.0).unwrap();
        assert_eq!(o.distance_to_boundary(&[0.25]).unwrap(), 0.25);
        assert_eq!(o.distance_to_boundary(&[1.0]).unwrap(), 0.0);
        assert!(o.distance_to_boundary(&[1.5]).is_err());
        let b = PositionDomain::ball(&[0.0, 0.0], 2.0).unwrap();
        assert_eq!(b.distance_to_boundary(&[1.0, 0.0]).unwrap(), 1.0);
    }

    #[test]
    fn classification_examples() {
        let o = PositionDomain::interval(0.0, 1.0).unwrap();
        let c = |q, p| o.classify_boundary(&PhasePoint::new_1d(q, p), DEFAULT_TOL0);
        assert_eq!(c(1.0, 0.5), BoundaryClass::GammaPlus);
        assert_eq!(c(0.0, 0.5), BoundaryClass::GammaMinus);
        assert_eq!(c(1.0, 0.0), BoundaryClass::GammaZero);
        assert_eq!(c(0.5, 3.0), BoundaryClass::Interior);
    }

    #[test]
    fn invalid_domains_rejected() {
        assert!(PositionDomain::interval(1.0, 1.0).is_err());
        assert!(PositionDomain::ball(&[0.0], 0.0).is_err());
        assert!(PositionDomain::cuboid(&[0.0, 0.0], &[1.0, 0.0]).is_err());
        assert!(PositionDomain::ball(&[0.0; 4], 1.0).is_err());
    }

    fn domains() -> Vec<PositionDomain> {
        vec![
            PositionDomain::interval(-1.0, 2.0).unwrap(),
            PositionDomain::ball(&[0.5, -0.5], 1.5).unwrap(),
            PositionDomain::ball(&[0.0, 0.0, 1.0], 0.7).unwrap(),
            PositionDomain::cuboid(&[0.0, 0.0], &[1.0, 2.0]).unwrap(),
        ]
    }

    proptest! {
        #[test]
        fn flipping_momentum_swaps_strata(theta in 0.0f64..std::f64::consts::TAU, phi in 0.0f64..3.1,
                                          p in prop::collection::vec(-5.0f64..5.0, 3)) {
            for o in domains() {
                let d = o.dim();
                // boundary point along a direction from an interior reference point
                let mut dir = [theta.cos() * phi.sin(), theta.sin() * phi.sin(), phi.cos()];
                if d == 1 { dir[0] = if theta < 3.0 { 1.0 } else { -1.0 }; }
                if d == 2 { dir = [theta.cos(), theta.sin(), 0.0]; }
                let (lo, hi) = o.bounding_box();
                let mut c = [0.0; MAX_DIM];
                for i in 0..d { c[i] = 0.5 * (lo[i] + hi[i]); }
                // march outwards to the boundary by bisection
                let (mut t0, mut t1) = (0.0, o.diameter());
                for _ in 0..200 {
                    let tm = 0.5 * (t0 + t1);
                    let q: Vec<f64> = (0..d).map(|i| c[i] + tm * dir[i]).collect();
                    if o.contains(&q) { t0 = tm } else { t1 = tm }
                }
                let q: Vec<f64> = (0..d).map(|i| c[i] + t0 * dir[i]).collect();
                let x = PhasePoint::new(&q, &p[..d]).unwrap();
                let cls = o.classify_boundary(&x, DEFAULT_TOL0);
                let flipped = o.classify_boundary(&x.flip_momentum(), DEFAULT_TOL0);
                let expected = match cls {
                    BoundaryClass::GammaPlus => BoundaryClass::GammaMinus,
                    BoundaryClass::GammaMinus => BoundaryClass::GammaPlus,
                    other => other,
                };
                prop_assert_ne!(cls, BoundaryClass::Interior);
                prop_assert_eq!(flipped, expected);

                let n = o.outward_normal(&q).unwrap();
                let norm: f64 = n[..d].iter().map(|v| v * v).sum::<f64>().sqrt();
                prop_assert!((norm - 1.0).abs() <= 1e-12);
                let eps = 1e-8 * o.diameter();
                let out: Vec<f64> = (0..d).map(|i| q[i] + eps * n[i]).collect();
                prop_assert!(!o.contains(&out));
            }
        }

        #[test]
        fn closed_form_distances(x in -1.0f64..2.0, r in 0.0f64..1.5, a in 0.0f64..std::f64::consts::TAU) {
            let o = PositionDomain::interval(-1.0, 2.0).unwrap();
            prop_assert!((o.distance_to_boundary(&[x]).unwrap() - (x + 1.0).min(2.0 - x)).abs() <= 1e-12);
            let b = PositionDomain::ball(&[0.5, -0.5], 1.5).unwrap();
            let q = [0.5 + r * a.cos(), -0.5 + r * a.sin()];
            let dist = b.distance_to_boundary(&q).unwrap();
            prop_assert!((dist - (1.5 - r)).abs() <= 1e-12);
            let pb = b.project_to_boundary(&q);
            let gap = ((pb[0] - q[0]).powi(2) + (pb[1] - q[1]).powi(2)).sqrt();
            if r > 1e-6 { prop_assert!((gap - dist).abs() <= 1e-12); }
        }
    }
}
