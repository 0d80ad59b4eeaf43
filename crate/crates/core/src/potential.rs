//! The attracting n-centre potential, its derivatives, the Jacobi-Maupertuis
//! conformal geometry, and escape/convexity diagnostics.
//!
//! ```text
//!   V(x) = Σ_i m_i |x − c_i|^{−α_i},      m_i > 0,  α_i ≥ 1,
//! ```
//!
//! with the sign convention fixed once for the whole crate: V > 0, the
//! Hamiltonian is H = ½|u|² − V, and the motion equation reads ẍ = +∇V.
//! Energies are restricted to h > 0.
//!
//! The Jacobi-Maupertuis (JM) metric at energy h is the conformal rescaling
//! 2(h+V)·(euclidean); its unparametrized geodesics are the energy-h orbits.
//! Its Gaussian curvature is computed from the conformal formula
//! κ = −Δφ·e^{−2φ} with φ = ½·log(2(h+V)), which expands to
//!
//! ```text
//!   κ = (|∇V|² − ΔV·(h+V)) / (2(h+V))² / (h+V) · ¼ ... = (|∇V|² − ΔV·(h+V)) / (4(h+V)³),
//! ```
//!
//! strictly negative away from the centres for this family of potentials.
//!
//! Positions in the Lagrange-Jacobi and escape diagnostics are measured from
//! the barycentre of the centres (their unweighted mean), so systems need not
//! be pre-centred.

use crate::geom::Vec2;
use crate::real::Real;

/// Collision threshold for pointwise evaluation.
pub const EPS_COLL_EVAL: f64 = 1e-12;
/// Geometric-degeneracy threshold (on-wall checks, cone foot, ray hits).
pub const EPS_GEOM: f64 = 1e-9;
/// Default search cap for the sampled convexity radius (α ≥ 2 systems).
pub const CONVEXITY_SEARCH_CAP: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PotentialError {
    #[error("evaluation point within {dist:e} of centre {index}")]
    CollisionPoint { index: usize, dist: f64 },
    #[error("centre/mass/exponent lists empty or of mismatched lengths")]
    MismatchedLists,
    #[error("mass m[{index}] = {value} must be positive")]
    InvalidMass { index: usize, value: f64 },
    #[error("exponent alpha[{index}] = {value} must be >= 1")]
    InvalidExponent { index: usize, value: f64 },
    #[error("wall direction vector has zero length")]
    ZeroWallDirection,
    #[error("wall distance d = {d} must be positive")]
    InvalidWallDistance { d: f64 },
    #[error("centre {index} not strictly inside the half-plane (signed height {height:e} above the wall)")]
    CentreOutsideHalfPlane { index: usize, height: f64 },
    #[error("point is not on the wall line (signed height {height:e})")]
    PointNotOnWall { height: f64 },
    #[error("escape cone degenerate at the barycentre foot (wall offset {offset:e})")]
    DegenerateFoot { offset: f64 },
    #[error("no radius below cap {cap} with positive Lagrange-Jacobi minimum")]
    RadiusNotFound { cap: f64 },
    #[error("energy h = {h} must be positive and finite")]
    InvalidEnergy { h: f64 },
}

fn lossy<F: Real>(v: F) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}

/// Positive energy level h of the Hamiltonian H = ½|u|² − V.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyLevel<F> {
    h: F,
}

impl<F: Real> EnergyLevel<F> {
    pub fn new(h: F) -> Result<Self, PotentialError> {
        if !(h > F::zero()) || !h.is_finite() {
            return Err(PotentialError::InvalidEnergy { h: lossy(h) });
        }
        Ok(Self { h })
    }

    #[inline]
    pub fn h(self) -> F {
        self.h
    }
}

/// The centres c_i with masses m_i and exponents α_i defining V.
///
/// Duplicate centre positions are allowed; masses must be positive and
/// exponents at least 1.
#[derive(Debug, Clone, PartialEq)]
pub struct CentreSystem<F> {
    centres: Vec<Vec2<F>>,
    masses: Vec<F>,
    alphas: Vec<F>,
    eps_coll: F,
}

impl<F: Real> CentreSystem<F> {
    pub fn new(
        centres: Vec<Vec2<F>>,
        masses: Vec<F>,
        alphas: Vec<F>,
    ) -> Result<Self, PotentialError> {
        if centres.is_empty() || centres.len() != masses.len() || centres.len() != alphas.len() {
            return Err(PotentialError::MismatchedLists);
        }
        for (i, &m) in masses.iter().enumerate() {
            if !(m > F::zero()) || !m.is_finite() {
                return Err(PotentialError::InvalidMass { index: i, value: lossy(m) });
            }
        }
        for (i, &a) in alphas.iter().enumerate() {
            if !(a >= F::one()) || !a.is_finite() {
                return Err(PotentialError::InvalidExponent { index: i, value: lossy(a) });
            }
        }
        Ok(Self { centres, masses, alphas, eps_coll: F::of(EPS_COLL_EVAL) })
    }

    /// Two Newtonian centres at (∓1, 0): `m1` at (−1, 0), `m2` at (+1, 0).
    pub fn pair(m1: F, m2: F) -> Result<Self, PotentialError> {
        Self::new(
            vec![Vec2::new(-F::one(), F::zero()), Vec2::new(F::one(), F::zero())],
            vec![m1, m2],
            vec![F::one(), F::one()],
        )
    }

    /// Override the pointwise collision threshold (default [`EPS_COLL_EVAL`]).
    pub fn with_eps_coll(mut self, eps: F) -> Self {
        self.eps_coll = eps;
        self
    }

    #[inline]
    pub fn n_centres(&self) -> usize {
        self.centres.len()
    }

    #[inline]
    pub fn centres(&self) -> &[Vec2<F>] {
        &self.centres
    }

    #[inline]
    pub fn masses(&self) -> &[F] {
        &self.masses
    }

    #[inline]
    pub fn alphas(&self) -> &[F] {
        &self.alphas
    }

    #[inline]
    pub fn eps_coll(&self) -> F {
        self.eps_coll
    }

    /// Unweighted mean of the centre positions.
    pub fn barycentre(&self) -> Vec2<F> {
        let mut b = Vec2::zero();
        for &c in &self.centres {
            b += c;
        }
        b / F::from_usize(self.centres.len()).unwrap()
    }

    /// Index and distance of the nearest centre.
    pub fn nearest_centre(&self, x: Vec2<F>) -> (usize, F) {
        let mut best = (0usize, F::infinity());
        for (i, &c) in self.centres.iter().enumerate() {
            let d = x.dist(c);
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    }

    fn guard_collision(&self, x: Vec2<F>) -> Result<(), PotentialError> {
        let (i, d) = self.nearest_centre(x);
        if d < self.eps_coll {
            return Err(PotentialError::CollisionPoint { index: i, dist: lossy(d) });
        }
        Ok(())
    }

    /// V(x) = Σ m_i |x − c_i|^{−α_i}; strictly positive.
    pub fn eval_potential(&self, x: Vec2<F>) -> Result<F, PotentialError> {
        self.guard_collision(x)?;
        let mut v = F::zero();
        for i in 0..self.centres.len() {
            let r = x.dist(self.centres[i]);
            v = v + self.masses[i] * r.powf(-self.alphas[i]);
        }
        Ok(v)
    }

    /// ∇V(x) = Σ −α_i m_i (x − c_i)·|x − c_i|^{−α_i−2}. The motion equation
    /// is ẍ = +∇V under this crate's sign convention.
    pub fn eval_gradient(&self, x: Vec2<F>) -> Result<Vec2<F>, PotentialError> {
        self.guard_collision(x)?;
        Ok(self.gradient_unchecked(x))
    }

    /// Gradient without the collision guard; integrator and optimizer
    /// internals handle proximity by event cuts, not per-call errors.
    pub(crate) fn gradient_unchecked(&self, x: Vec2<F>) -> Vec2<F> {
        let mut g = Vec2::zero();
        for i in 0..self.centres.len() {
            let dxc = x - self.centres[i];
            let r = dxc.norm();
            let coef = -self.alphas[i] * self.masses[i] * r.powf(-self.alphas[i] - F::of(2.0));
            g += dxc * coef;
        }
        g
    }

    /// Potential without the collision guard; see [`Self::gradient_unchecked`].
    pub(crate) fn potential_unchecked(&self, x: Vec2<F>) -> F {
        let mut v = F::zero();
        for i in 0..self.centres.len() {
            let r = x.dist(self.centres[i]);
            v = v + self.masses[i] * r.powf(-self.alphas[i]);
        }
        v
    }

    /// ΔV(x) = Σ m_i α_i² |x − c_i|^{−α_i−2} (planar Laplacian of each term).
    pub fn eval_laplacian(&self, x: Vec2<F>) -> Result<F, PotentialError> {
        self.guard_collision(x)?;
        let mut l = F::zero();
        for i in 0..self.centres.len() {
            let r = x.dist(self.centres[i]);
            let a = self.alphas[i];
            l = l + self.masses[i] * a * a * r.powf(-a - F::of(2.0));
        }
        Ok(l)
    }

    /// Conformal factor 2(h + V(x)) of the JM metric; > 2h.
    pub fn jm_factor(&self, h: EnergyLevel<F>, x: Vec2<F>) -> Result<F, PotentialError> {
        Ok(F::of(2.0) * (h.h() + self.eval_potential(x)?))
    }

    /// Gaussian curvature of the JM metric 2(h+V)·(euclidean):
    /// κ = (|∇V|² − ΔV·(h+V)) / (4(h+V)³); negative at every valid point.
    pub fn jm_curvature(&self, h: EnergyLevel<F>, x: Vec2<F>) -> Result<F, PotentialError> {
        self.guard_collision(x)?;
        let v = self.eval_potential(x)?;
        let g = self.eval_gradient(x)?;
        let lap = self.eval_laplacian(x)?;
        let hv = h.h() + v;
        Ok((g.norm_sq() - lap * hv) / (F::of(4.0) * hv * hv * hv))
    }

    /// Geodesic curvature of the wall line in the JM metric, at wall
    /// coordinate t, with respect to the inward normal w:
    /// κ_ℓ(t) = −⟨∇V(x), w⟩ / (2(h+V(x)))^{3/2}; negative whenever all
    /// centres lie strictly inside Π (the wall is concave seen from inside).
    pub fn wall_curvature(
        &self,
        h: EnergyLevel<F>,
        wall: &Wall<F>,
        t: F,
    ) -> Result<F, PotentialError> {
        let x = wall.point(t);
        let g = self.eval_gradient(x)?;
        let factor = self.jm_factor(h, x)?;
        Ok(-g.dot(wall.w()) / (factor * factor.sqrt()))
    }

    /// Lagrange-Jacobi value h + V(x) + ½⟨∇V(x), x − b⟩, b the barycentre.
    ///
    /// Equals half the second time derivative of ½|x − b|² along any energy-h
    /// orbit; positivity outside the convexity radius drives every escape
    /// certificate in the crate.
    pub fn lagrange_jacobi(&self, h: EnergyLevel<F>, x: Vec2<F>) -> Result<F, PotentialError> {
        let v = self.eval_potential(x)?;
        let g = self.eval_gradient(x)?;
        let rel = x - self.barycentre();
        Ok(h.h() + v + F::of(0.5) * g.dot(rel))
    }

    /// Radius R₀ outside which the Lagrange-Jacobi value is positive.
    ///
    /// For all-α<2 systems this is the closed form max_i 2|c_i − b|/(2 − α_i),
    /// independent of h. If any α_i ≥ 2 the radius is searched: the smallest
    /// sampled radius whose angular Lagrange-Jacobi minimum stays positive on
    /// probe radii up to 4× beyond it (heuristic, capped at
    /// [`CONVEXITY_SEARCH_CAP`]).
    pub fn convexity_radius(&self, h: EnergyLevel<F>) -> Result<F, PotentialError> {
        let b = self.barycentre();
        if self.alphas.iter().all(|&a| a < F::of(2.0)) {
            let mut r0 = F::zero();
            for i in 0..self.centres.len() {
                let ri = F::of(2.0) * self.centres[i].dist(b) / (F::of(2.0) - self.alphas[i]);
                r0 = r0.max(ri);
            }
            return Ok(r0);
        }
        self.sampled_convexity_radius(h)
    }

    fn lj_angular_min(&self, h: EnergyLevel<F>, r: F) -> F {
        let b = self.barycentre();
        let n = 256;
        let mut min = F::infinity();
        for j in 0..n {
            let th = F::of(2.0) * F::pi() * F::from_usize(j).unwrap() / F::from_usize(n).unwrap();
            if let Ok(v) = self.lagrange_jacobi(h, b + Vec2::from_angle(th) * r) {
                min = min.min(v);
            } else {
                min = F::neg_infinity();
            }
        }
        min
    }

    fn positive_beyond(&self, h: EnergyLevel<F>, r: F) -> bool {
        // r itself plus probe radii out to 4r; the far field is positive by decay.
        for mult in [1.0, 1.25, 1.5, 2.0, 3.0, 4.0] {
            if !(self.lj_angular_min(h, r * F::of(mult)) > F::zero()) {
                return false;
            }
        }
        true
    }

    fn sampled_convexity_radius(&self, h: EnergyLevel<F>) -> Result<F, PotentialError> {
        let b = self.barycentre();
        let mut scale = F::zero();
        for &c in &self.centres {
            scale = scale.max(c.dist(b));
        }
        let mut lo = scale.max(F::of(1e-3));
        // Grow until the positivity probe holds.
        let cap = F::of(CONVEXITY_SEARCH_CAP);
        let mut hi = lo;
        while !self.positive_beyond(h, hi) {
            hi = hi * F::of(2.0);
            if hi > cap {
                return Err(PotentialError::RadiusNotFound { cap: CONVEXITY_SEARCH_CAP });
            }
            lo = hi * F::of(0.5);
        }
        if hi == lo {
            return Ok(hi);
        }
        // Bisect to the smallest radius that still probes positive.
        for _ in 0..60 {
            let mid = (lo + hi) * F::of(0.5);
            if self.positive_beyond(h, mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(hi)
    }

    /// Escape certificate radius used by the integrator and section clipping:
    /// R_esc = max(2·R₀, 10·max_i|c_i − b|, 10d).
    pub fn escape_radius(&self, h: EnergyLevel<F>, wall: &Wall<F>) -> Result<F, PotentialError> {
        let b = self.barycentre();
        let r0 = self.convexity_radius(h)?;
        let mut cmax = F::zero();
        for &c in &self.centres {
            cmax = cmax.max(c.dist(b));
        }
        Ok((F::of(2.0) * r0).max(F::of(10.0) * cmax).max(F::of(10.0) * wall.d()))
    }

    /// The cone K_x of inward directions at a wall point x that Lagrange-Jacobi
    /// monotonicity does NOT certify as escaping; initial velocities of
    /// wall-to-wall minimizing arcs lie inside it.
    ///
    /// Angles are measured counter-clockwise from the wall direction v, so
    /// inward directions span (0, π). With δ = dist(b, ℓ), ρ = |x − b| and
    /// β = arcsin(δ/ρ), the cone as a set is (β, π−β); the returned α is β on
    /// the branch s ≤ s_foot and π−β on s ≥ s_foot, so the interval reads
    /// (α, π−α) in the branch's own orientation.
    pub fn escape_cone(
        &self,
        wall: &Wall<F>,
        x: Vec2<F>,
    ) -> Result<EscapeCone<F>, PotentialError> {
        let height = wall.height(x);
        if height.abs() > F::of(EPS_GEOM) {
            return Err(PotentialError::PointNotOnWall { height: lossy(height) });
        }
        let b = self.barycentre();
        let delta = wall.height(b); // distance from barycentre to ℓ; > 0 inside Π
        let s = wall.coord_of(x) - wall.coord_of(b);
        if s.abs() < F::of(EPS_GEOM) {
            return Err(PotentialError::DegenerateFoot { offset: lossy(s) });
        }
        let rho = (s * s + delta * delta).sqrt();
        let beta = (delta / rho).min(F::one()).asin();
        let alpha = if s < F::zero() { beta } else { F::pi() - beta };
        Ok(EscapeCone { alpha })
    }
}

/// The reflecting line ℓ = {s·v − d·w} bounding the half-plane
/// Π = {⟨w, x⟩ ≥ −d}; {v, w} is a positively oriented orthonormal pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wall<F> {
    v: Vec2<F>,
    w: Vec2<F>,
    d: F,
}

impl<F: Real> Wall<F> {
    /// Normalizes `v`; `w` is its counter-clockwise quarter turn. `d` must be
    /// positive (the wall does not pass through the origin's side of Π).
    pub fn new(v: Vec2<F>, d: F) -> Result<Self, PotentialError> {
        let v = v.normalized().ok_or(PotentialError::ZeroWallDirection)?;
        if !(d > F::zero()) || !d.is_finite() {
            return Err(PotentialError::InvalidWallDistance { d: lossy(d) });
        }
        Ok(Self { v, w: v.rot90(), d })
    }

    /// Wall with direction at polar angle `theta`.
    pub fn from_angle(theta: F, d: F) -> Result<Self, PotentialError> {
        Self::new(Vec2::from_angle(theta), d)
    }

    #[inline]
    pub fn v(&self) -> Vec2<F> {
        self.v
    }

    /// Inward unit normal (pointing into Π, toward the centres).
    #[inline]
    pub fn w(&self) -> Vec2<F> {
        self.w
    }

    #[inline]
    pub fn d(&self) -> F {
        self.d
    }

    /// The wall point at coordinate s: s·v − d·w.
    #[inline]
    pub fn point(&self, s: F) -> Vec2<F> {
        self.v * s - self.w * self.d
    }

    /// Wall coordinate of (the projection of) x.
    #[inline]
    pub fn coord_of(&self, x: Vec2<F>) -> F {
        x.dot(self.v)
    }

    /// Signed height above the wall: ⟨w, x⟩ + d; ≥ 0 inside Π.
    #[inline]
    pub fn height(&self, x: Vec2<F>) -> F {
        x.dot(self.w) + self.d
    }

    /// Angle of a velocity measured counter-clockwise from v; inward
    /// velocities (⟨u,w⟩ > 0) land in (0, π).
    #[inline]
    pub fn inward_angle(&self, u: Vec2<F>) -> F {
        u.dot(self.w).atan2(u.dot(self.v))
    }

    /// Checks that every centre lies strictly inside Π.
    pub fn validate_for(&self, sys: &CentreSystem<F>) -> Result<(), PotentialError> {
        for (i, &c) in sys.centres().iter().enumerate() {
            let height = self.height(c);
            if !(height > F::zero()) {
                return Err(PotentialError::CentreOutsideHalfPlane {
                    index: i,
                    height: lossy(height),
                });
            }
        }
        Ok(())
    }
}

/// Angular interval (α, π−α) at a wall point, measured from the wall
/// direction v; see [`CentreSystem::escape_cone`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EscapeCone<F> {
    pub alpha: F,
}

impl<F: Real> EscapeCone<F> {
    /// The literal (α, π−α) pair in the branch's orientation.
    #[inline]
    pub fn interval(self) -> (F, F) {
        (self.alpha, F::pi() - self.alpha)
    }

    /// Lower edge of the cone as a set of directions.
    #[inline]
    pub fn lo(self) -> F {
        self.alpha.min(F::pi() - self.alpha)
    }

    /// Upper edge of the cone as a set of directions.
    #[inline]
    pub fn hi(self) -> F {
        self.alpha.max(F::pi() - self.alpha)
    }

    /// Whether an inward direction angle (from v, in (0,π)) lies inside the cone.
    #[inline]
    pub fn contains_angle(self, theta: F) -> bool {
        theta > self.lo() && theta < self.hi()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    type V = Vec2<f64>;

    fn symmetric_pair() -> CentreSystem<f64> {
        CentreSystem::pair(1.0, 1.0).unwrap()
    }

    fn h(v: f64) -> EnergyLevel<f64> {
        EnergyLevel::new(v).unwrap()
    }

    #[test]
    fn construction_validation() {
        assert!(CentreSystem::<f64>::new(vec![], vec![], vec![]).is_err());
        assert!(CentreSystem::new(vec![V::zero()], vec![1.0, 2.0], vec![1.0]).is_err());
        assert!(CentreSystem::new(vec![V::zero()], vec![-1.0], vec![1.0]).is_err());
        assert!(CentreSystem::new(vec![V::zero()], vec![1.0], vec![0.5]).is_err());
        // Duplicate centres are allowed.
        assert!(CentreSystem::new(
            vec![V::zero(), V::zero()],
            vec![1.0, 1.0],
            vec![1.0, 1.0]
        )
        .is_ok());
        assert!(EnergyLevel::new(0.0).is_err());
        assert!(EnergyLevel::new(-1.0).is_err());
        assert!(Wall::new(V::zero(), 1.0).is_err());
        assert!(Wall::new(V::new(1.0, 0.0), -2.0).is_err());
    }

    #[test]
    fn potential_trivial_values() {
        let sys = symmetric_pair();
        assert_abs_diff_eq!(sys.eval_potential(V::zero()).unwrap(), 2.0, epsilon = 1e-15);

        // Mixed-exponent single-site stack: m=1,α=1 plus m=0.1,α=2 at |x|=1.
        let boltzmann = CentreSystem::new(
            vec![V::zero(), V::zero()],
            vec![1.0, 0.1],
            vec![1.0, 2.0],
        )
        .unwrap();
        assert_abs_diff_eq!(
            boltzmann.eval_potential(V::new(0.0, 1.0)).unwrap(),
            1.1,
            epsilon = 1e-15
        );
    }

    #[test]
    fn gradient_trivial_values() {
        let sys = symmetric_pair();
        let g = sys.eval_gradient(V::zero()).unwrap();
        assert_abs_diff_eq!(g.x, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g.y, 0.0, epsilon = 1e-15);

        let single =
            CentreSystem::new(vec![V::zero()], vec![1.0], vec![1.0]).unwrap();
        let g = single.eval_gradient(V::new(2.0, 0.0)).unwrap();
        assert_abs_diff_eq!(g.x, -0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(g.y, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn laplacian_trivial_values() {
        let single = CentreSystem::new(vec![V::zero()], vec![1.0], vec![1.0]).unwrap();
        assert_abs_diff_eq!(single.eval_laplacian(V::new(1.0, 0.0)).unwrap(), 1.0, epsilon = 1e-15);

        let quadratic = CentreSystem::new(vec![V::zero()], vec![1.0], vec![2.0]).unwrap();
        assert_abs_diff_eq!(
            quadratic.eval_laplacian(V::new(2.0, 0.0)).unwrap(),
            0.25,
            epsilon = 1e-15
        );
    }

    #[test]
    fn jm_factor_identity_and_value() {
        let sys = symmetric_pair();
        assert_abs_diff_eq!(sys.jm_factor(h(1.0), V::zero()).unwrap(), 6.0, epsilon = 1e-15);
        for (px, py) in [(0.3, 1.4), (-2.0, 0.5), (5.0, -3.0)] {
            let x = V::new(px, py);
            let lhs = sys.jm_factor(h(0.7), x).unwrap();
            let rhs = 2.0 * 0.7 + 2.0 * sys.eval_potential(x).unwrap();
            assert_eq!(lhs, rhs);
        }
    }

    #[test]
    fn jm_curvature_single_centre_closed_form() {
        // Newtonian single centre, h=1, r=1: |∇V|²=1, ΔV=1, h+V=2:
        // κ = (1 − 2)/(4·8) = −1/32.
        let single = CentreSystem::new(vec![V::zero()], vec![1.0], vec![1.0]).unwrap();
        let k = single.jm_curvature(h(1.0), V::new(0.0, 1.0)).unwrap();
        assert_abs_diff_eq!(k, -0.03125, epsilon = 1e-15);
    }

    #[test]
    fn jm_curvature_vanishes_at_infinity() {
        let sys = symmetric_pair();
        let k = sys.jm_curvature(h(1.0), V::new(1e5, 3e4)).unwrap();
        assert!(k < 0.0 && k.abs() < 1e-12);
    }

    #[test]
    fn lagrange_jacobi_values() {
        let sys = symmetric_pair();
        assert_abs_diff_eq!(sys.lagrange_jacobi(h(1.0), V::zero()).unwrap(), 3.0, epsilon = 1e-14);

        // Single centre: V + ½⟨∇V, x−c⟩ = ½V, so LJ = h + 1/(2r) everywhere.
        let single = CentreSystem::new(vec![V::new(0.5, -0.25)], vec![1.0], vec![1.0]).unwrap();
        for (px, py) in [(1.0, 2.0), (-3.0, 0.1), (0.5, 10.0)] {
            let x = V::new(px, py);
            let r = x.dist(V::new(0.5, -0.25));
            assert_abs_diff_eq!(
                single.lagrange_jacobi(h(0.3), x).unwrap(),
                0.3 + 0.5 / r,
                epsilon = 1e-13
            );
        }

        // Far field: LJ → h.
        assert_abs_diff_eq!(
            sys.lagrange_jacobi(h(2.0), V::new(1e7, 0.0)).unwrap(),
            2.0,
            epsilon = 1e-6
        );
    }

    #[test]
    fn convexity_radius_closed_form() {
        let sys = symmetric_pair();
        // Exact: 2·1/(2−1) = 2, independent of h.
        assert_eq!(sys.convexity_radius(h(0.1)).unwrap(), 2.0);
        assert_eq!(sys.convexity_radius(h(10.0)).unwrap(), 2.0);

        let single = CentreSystem::new(vec![V::zero()], vec![1.0], vec![1.0]).unwrap();
        assert_eq!(single.convexity_radius(h(1.0)).unwrap(), 0.0);
    }

    #[test]
    fn convexity_radius_sampled_for_large_alpha() {
        let sys = CentreSystem::new(
            vec![V::new(-0.5, 0.0), V::new(0.5, 0.0)],
            vec![1.0, 1.0],
            vec![2.5, 1.0],
        )
        .unwrap();
        let r = sys.convexity_radius(h(1.0)).unwrap();
        assert!(r.is_finite() && r > 0.0);
        // Positivity holds at the returned radius and beyond.
        for mult in [1.0, 1.5, 2.0, 8.0] {
            assert!(sys.lj_angular_min(h(1.0), r * mult) > 0.0);
        }
    }

    #[test]
    fn wall_geometry() {
        let wall = Wall::new(V::new(2.0, 0.0), 3.0).unwrap();
        assert_eq!(wall.v(), V::new(1.0, 0.0));
        assert_eq!(wall.w(), V::new(0.0, 1.0));
        assert_eq!(wall.point(1.5), V::new(1.5, -3.0));
        assert_eq!(wall.height(V::new(7.0, -3.0)), 0.0);
        assert_eq!(wall.height(V::new(0.0, 0.0)), 3.0);
        assert_eq!(wall.coord_of(V::new(4.0, 17.0)), 4.0);

        let sys = symmetric_pair();
        assert!(wall.validate_for(&sys).is_ok());
        let low = Wall::new(V::new(0.0, 1.0), 0.5).unwrap(); // w = (−1,0): Π = {x ≤ 0.5}
        assert!(matches!(
            low.validate_for(&sys),
            Err(PotentialError::CentreOutsideHalfPlane { index: 1, .. })
        ));
    }

    #[test]
    fn wall_curvature_negative_and_consistent() {
        let sys = symmetric_pair();
        let wall = Wall::new(V::new(1.0, 0.0), 3.0).unwrap();
        let k0 = sys.wall_curvature(h(1.0), &wall, 0.0).unwrap();
        assert!(k0 < 0.0);
        // Recompose from the gradient by hand.
        let x = wall.point(0.0);
        let g = sys.eval_gradient(x).unwrap();
        let f = sys.jm_factor(h(1.0), x).unwrap();
        assert_abs_diff_eq!(k0, -g.dot(wall.w()) / f.powf(1.5), epsilon = 1e-16);
        // Decay along the wall.
        let far = sys.wall_curvature(h(1.0), &wall, 1e5).unwrap();
        assert!(far < 0.0 && far.abs() < 1e-10);
    }

    #[test]
    fn escape_cone_branches() {
        let sys = symmetric_pair();
        let wall = Wall::new(V::new(1.0, 0.0), 3.0).unwrap();
        // δ = 3; |s| = √3·δ makes δ/ρ = 1/2.
        let s = -(3.0f64) * 3.0f64.sqrt();
        let cone = sys.escape_cone(&wall, wall.point(s)).unwrap();
        let (a, b) = cone.interval();
        assert_abs_diff_eq!(a, std::f64::consts::FRAC_PI_6, epsilon = 1e-14);
        assert_abs_diff_eq!(b, 5.0 * std::f64::consts::FRAC_PI_6, epsilon = 1e-14);

        // Mirror branch: same cone as a set, α on the other end.
        let cone_r = sys.escape_cone(&wall, wall.point(-s)).unwrap();
        assert_abs_diff_eq!(cone_r.alpha, b, epsilon = 1e-14);
        assert_abs_diff_eq!(cone_r.lo(), cone.lo(), epsilon = 1e-14);

        // Far out the cone opens to the full inward half-plane (0, π).
        let cone_far = sys.escape_cone(&wall, wall.point(-1e9)).unwrap();
        assert!(cone_far.lo() < 1e-8 && cone_far.hi() > std::f64::consts::PI - 1e-8);

        // Degenerate at the barycentre foot; off-wall points rejected.
        assert!(matches!(
            sys.escape_cone(&wall, wall.point(0.0)),
            Err(PotentialError::DegenerateFoot { .. })
        ));
        assert!(matches!(
            sys.escape_cone(&wall, V::new(1.0, 0.0)),
            Err(PotentialError::PointNotOnWall { .. })
        ));
    }

    #[test]
    fn collision_guard() {
        let sys = symmetric_pair();
        let err = sys.eval_potential(V::new(1.0, 1e-13)).unwrap_err();
        assert!(matches!(err, PotentialError::CollisionPoint { index: 1, .. }));
    }
}
