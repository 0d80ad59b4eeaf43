//! The integrable Newtonian two-centre structure: elliptic-hyperbolic
//! coordinates, the conserved separation quantity, separated Hamiltonians,
//! closed-form separatrix branches, and the separatrix spirals with the
//! wall-orthogonality and admissibility constructions built on them.
//!
//! Masses are normalized to centres at (∓1, 0), the heavier one (m₁) at
//! (−1, 0). With x = Φ(ξ,η) = (cosh ξ cos η, sinh ξ sin η),
//!
//! ```text
//!   |x − e₁| = cosh ξ − cos η,   |x + e₁| = cosh ξ + cos η,
//!   V = (μ₁ cosh ξ − μ₂ cos η)/ρ²,   ρ² = cosh²ξ − cos²η,
//!   μ₁ = m₁ + m₂,  μ₂ = m₁ − m₂.
//! ```
//!
//! On the energy level H = h > 0 the rescaled zero-energy Hamiltonian
//! K = ρ²(H − h) splits in the K-time dτ = dt/ρ² as K = K₁(ξ,p_ξ) + K₂(η,p_η):
//!
//! ```text
//!   K₁ = ½p_ξ² − (μ₁ + h cosh ξ) cosh ξ,
//!   K₂ = ½p_η² + (μ₂ + h cos η) cos η,
//! ```
//!
//! with K₁ + K₂ = 0 on physical states. The separatrix value K₁ = −(μ₁+h)
//! singles out the solutions asymptotic to the collision-reflection segment
//! [−e₁, e₁]; both separated branches integrate in closed form (a rational
//! function of cosh for ξ, Jacobi elliptic functions for η), and composing
//! them with the time change dt = ρ² dτ yields the separatrix spirals.
//!
//! The printed source formulas for both closed forms contain inconsistent
//! inversion branches; the forms implemented here were re-derived from the
//! quadratures and are verified against direct integration of the K₁/K₂
//! flows in the test suite.

use crate::geom::{wrap_angle, Vec2};
use crate::potential::{CentreSystem, EnergyLevel, PotentialError, Wall};
use crate::specfun::{self, EllipticModulus, SpecFunError};

type V = Vec2<f64>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TwoCentreError {
    #[error("mass {value} must be positive and finite")]
    InvalidMass { value: f64 },
    #[error("energy h = {h} must be positive and finite")]
    InvalidEnergy { h: f64 },
    #[error("point is within {f:e} of the collision segment [-e1, e1]")]
    DegenerateCoordinates { f: f64 },
    #[error("state violates K1 + K2 = 0 (residual {residual:e}); not a physical energy-h state")]
    EnergyMismatch { residual: f64 },
    #[error("{what} leaves the valid domain (value {value:e})")]
    DomainError { what: &'static str, value: f64 },
    #[error("{what} not found within the search range")]
    NotFound { what: &'static str },
    #[error("wall crosses the segment [-e1, e1] or excludes a centre")]
    InvalidWall,
    #[error(transparent)]
    SpecFun(#[from] SpecFunError),
    #[error(transparent)]
    Potential(#[from] PotentialError),
}

/// Distance below which a point counts as on the collision segment.
pub const EPS_SEGMENT: f64 = 1e-12;

const E1: V = V { x: 1.0, y: 0.0 };

/// Two Newtonian centres at (∓1, 0) with m₁ ≥ m₂ (m₁ at (−1,0)) and energy
/// h > 0, plus the derived constants of the separated system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoCentreParams {
    m1: f64,
    m2: f64,
    h: f64,
}

impl TwoCentreParams {
    /// Masses are swapped if given in increasing order, mirroring the
    /// configuration about the y-axis.
    pub fn new(m1: f64, m2: f64, h: f64) -> Result<Self, TwoCentreError> {
        for m in [m1, m2] {
            if !(m > 0.0) || !m.is_finite() {
                return Err(TwoCentreError::InvalidMass { value: m });
            }
        }
        if !(h > 0.0) || !h.is_finite() {
            return Err(TwoCentreError::InvalidEnergy { h });
        }
        let (m1, m2) = if m1 >= m2 { (m1, m2) } else { (m2, m1) };
        Ok(Self { m1, m2, h })
    }

    #[inline]
    pub fn m1(&self) -> f64 {
        self.m1
    }

    #[inline]
    pub fn m2(&self) -> f64 {
        self.m2
    }

    #[inline]
    pub fn h(&self) -> f64 {
        self.h
    }

    #[inline]
    pub fn mu1(&self) -> f64 {
        self.m1 + self.m2
    }

    #[inline]
    pub fn mu2(&self) -> f64 {
        self.m1 - self.m2
    }

    /// μ̄₁ = μ₁/h.
    #[inline]
    pub fn mu1_bar(&self) -> f64 {
        self.mu1() / self.h
    }

    /// μ̄₂ = μ₂/h.
    #[inline]
    pub fn mu2_bar(&self) -> f64 {
        self.mu2() / self.h
    }

    /// Δ = 4 + 4μ̄₁ + μ̄₂²; always > 4.
    #[inline]
    pub fn delta(&self) -> f64 {
        4.0 + 4.0 * self.mu1_bar() + self.mu2_bar() * self.mu2_bar()
    }

    /// Modulus k = √(2√Δ/(2 + μ̄₁ + √Δ)) of the η-separatrix elliptic
    /// functions; < 1 strictly for m₂ > 0.
    pub fn eta_modulus(&self) -> Result<EllipticModulus<f64>, TwoCentreError> {
        let sd = self.delta().sqrt();
        let k = (2.0 * sd / (2.0 + self.mu1_bar() + sd)).sqrt();
        Ok(EllipticModulus::new(k)?)
    }

    /// The equivalent n-centre system (m₁ at (−1,0), m₂ at (1,0)).
    pub fn centre_system(&self) -> CentreSystem<f64> {
        CentreSystem::pair(self.m1, self.m2).expect("validated masses")
    }

    pub fn energy(&self) -> EnergyLevel<f64> {
        EnergyLevel::new(self.h).expect("validated energy")
    }
}

/// Separating coordinates with K-time momenta.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipticState {
    pub xi: f64,
    /// Lifted to the real line, not reduced mod 2π.
    pub eta: f64,
    pub p_xi: f64,
    pub p_eta: f64,
}

/// x = (cosh ξ cos η, sinh ξ sin η).
pub fn from_elliptic(xi: f64, eta: f64) -> V {
    V::new(xi.cosh() * eta.cos(), xi.sinh() * eta.sin())
}

/// Inverts the coordinate map off the collision segment; η is returned in
/// (−π, π].
pub fn to_elliptic(x: V) -> Result<(f64, f64), TwoCentreError> {
    let r1 = x.dist(E1);
    let r2 = x.dist(-E1);
    let f = r1 + r2 - 2.0;
    if f < EPS_SEGMENT {
        return Err(TwoCentreError::DegenerateCoordinates { f });
    }
    let cosh_xi = 0.5 * (r1 + r2);
    let cos_eta = (0.5 * (r2 - r1)).clamp(-1.0, 1.0);
    let xi = cosh_xi.max(1.0).acosh();
    // sin η recovered from y = sinh ξ sin η; sinh ξ > 0 off the segment.
    let sin_eta = (x.y / xi.sinh()).clamp(-1.0, 1.0);
    Ok((xi, sin_eta.atan2(cos_eta)))
}

/// f(x) = |x − e₁| + |x + e₁| − 2 = 2(cosh ξ − 1); zero exactly on the
/// collision segment, strictly increasing with the confocal ellipse.
pub fn ellipse_f(x: V) -> f64 {
    x.dist(E1) + x.dist(-E1) - 2.0
}

/// Converts a cartesian state to elliptic coordinates with K-time momenta
/// p_ξ = ρ²·dξ/dt, p_η = ρ²·dη/dt.
pub fn elliptic_state_of(x: V, u: V) -> Result<EllipticState, TwoCentreError> {
    let (xi, eta) = to_elliptic(x)?;
    let (sh, ch) = (xi.sinh(), xi.cosh());
    let (se, ce) = eta.sin_cos();
    // The Jacobian of Φ has orthogonal columns of norm ρ, so the momenta
    // are plain projections.
    let p_xi = sh * ce * u.x + ch * se * u.y;
    let p_eta = -ch * se * u.x + sh * ce * u.y;
    Ok(EllipticState { xi, eta, p_xi, p_eta })
}

/// The separated pair (K₁, K₂); sums to zero on physical energy-h states.
pub fn separated_k(state: &EllipticState, params: &TwoCentreParams) -> (f64, f64) {
    let ch = state.xi.cosh();
    let ce = state.eta.cos();
    let k1 = 0.5 * state.p_xi * state.p_xi - (params.mu1() + params.h * ch) * ch;
    let k2 = 0.5 * state.p_eta * state.p_eta + (params.mu2() + params.h * ce) * ce;
    (k1, k2)
}

/// The conserved quantity I = K₁ = ½p_ξ² − μ₁ cosh ξ − h cosh²ξ.
///
/// The η-side expression −K₂ = −½p_η² − μ₂ cos η − h cos²η must agree on the
/// zero-level set of K = K₁ + K₂ (physical states); disagreement reports the
/// state as off-shell.
pub fn conserved_i(state: &EllipticState, params: &TwoCentreParams) -> Result<f64, TwoCentreError> {
    let (k1, k2) = separated_k(state, params);
    let residual = k1 + k2;
    let scale = k1.abs().max(k2.abs()).max(1.0);
    if residual.abs() > 1e-10 * scale {
        return Err(TwoCentreError::EnergyMismatch { residual });
    }
    Ok(k1)
}

// ---------- Closed-form separatrix branches ----------
//
// On the separatrix level K₁ = −(μ₁+h):
//   ½p_ξ² = h(cosh ξ − 1)(cosh ξ + 1 + μ̄₁),
// and the decreasing branch integrates, with A = 2 + μ̄₁ and
// σ(τ) = √(Ah)·τ + σ₀, to
//   cosh ξ(τ) = (μ̄₁ cosh²σ + A)/(μ̄₁ cosh²σ − A),
// valid for sinh²σ > 2/μ̄₁. The forced level K₂ = μ₁ + h gives
//   ½p_η² = h(1 + μ̄₁ − (μ̄₂ + cos η) cos η) ≥ 2m₂,
// whose increasing branch in s = tan(η/2) factors through
//   A_q + B_q s² + C_q s⁴ = C_q (s² + p²)(s² + q²),
//   p² = (μ̄₁+2+√Δ)/(μ̄₁+μ̄₂),  q² = (μ̄₁+2−√Δ)/(μ̄₁+μ̄₂),
// and integrates to F(arctan(s/q), k) = c_ω τ + const with the modulus
// k² = 2√Δ/(2+μ̄₁+√Δ) and rate c_ω = √((2+μ̄₁+√Δ)h/2).

/// σ-value where the ξ closed form blows up (backward end of the branch).
fn sigma_min(params: &TwoCentreParams) -> f64 {
    (2.0 / params.mu1_bar()).sqrt().asinh()
}

/// Rate of σ in K-time.
fn sigma_rate(params: &TwoCentreParams) -> f64 {
    ((2.0 + params.mu1_bar()) * params.h).sqrt()
}

fn cosh_xi_of_sigma(sigma: f64, params: &TwoCentreParams) -> Result<f64, TwoCentreError> {
    let m1b = params.mu1_bar();
    let a = 2.0 + m1b;
    let c2 = sigma.cosh().powi(2);
    if !c2.is_finite() {
        // cosh²σ overflows near σ ≈ 355; the ratio limit is exactly 1.
        return Ok(1.0);
    }
    let denom = m1b * c2 - a;
    if denom <= 0.0 {
        return Err(TwoCentreError::DomainError { what: "xi separatrix argument", value: denom });
    }
    Ok((m1b * c2 + a) / denom)
}

/// σ₀ with cosh ξ(σ₀) = cosh ξ₀ (decreasing branch).
fn sigma_of_cosh_xi(cosh_xi0: f64, params: &TwoCentreParams) -> Result<f64, TwoCentreError> {
    if cosh_xi0 <= 1.0 {
        return Err(TwoCentreError::DomainError { what: "xi0", value: cosh_xi0 });
    }
    let m1b = params.mu1_bar();
    let a = 2.0 + m1b;
    let c2 = a * (cosh_xi0 + 1.0) / (m1b * (cosh_xi0 - 1.0));
    Ok(c2.sqrt().acosh())
}

/// ξ(τ) on the decreasing separatrix branch with ξ(0) = ξ₀ > 0; the branch
/// ends backward in K-time where the closed form blows up.
pub fn separatrix_xi(
    tau: f64,
    xi0: f64,
    params: &TwoCentreParams,
) -> Result<f64, TwoCentreError> {
    if !(xi0 > 0.0) {
        return Err(TwoCentreError::DomainError { what: "xi0", value: xi0 });
    }
    let sigma0 = sigma_of_cosh_xi(xi0.cosh(), params)?;
    let sigma = sigma_rate(params) * tau + sigma0;
    // cosh²σ is even, so the domain test must exclude the mirror branch
    // behind the blow-up, not merely the sign of the denominator.
    if sigma <= sigma_min(params) {
        return Err(TwoCentreError::DomainError { what: "xi separatrix parameter", value: sigma });
    }
    let c = cosh_xi_of_sigma(sigma, params)?;
    Ok(c.acosh())
}

/// p_ξ on the decreasing branch (negative), from the separatrix energy.
fn p_xi_decreasing(cosh_xi: f64, params: &TwoCentreParams) -> f64 {
    let arg = 2.0 * params.h * (cosh_xi - 1.0) * (cosh_xi + 1.0 + params.mu1_bar());
    -arg.max(0.0).sqrt()
}

/// Constants of the η-separatrix closed form.
struct EtaForm {
    q: f64,
    k: EllipticModulus<f64>,
    /// dω/dτ where F(φ(τ), k) = ω(τ).
    rate: f64,
}

impl EtaForm {
    fn new(params: &TwoCentreParams) -> Result<Self, TwoCentreError> {
        let sd = params.delta().sqrt();
        let m1b = params.mu1_bar();
        let m2b = params.mu2_bar();
        let q = ((m1b + 2.0 - sd) / (m1b + m2b)).sqrt();
        let k = params.eta_modulus()?;
        let rate = ((2.0 + m1b + sd) * params.h / 2.0).sqrt();
        Ok(Self { q, k, rate })
    }

    /// φ from η/2: the π-periodic lift of arctan(tan(η/2)/q).
    fn phi_of_eta(&self, eta: f64) -> f64 {
        let half = 0.5 * eta;
        let n = (half / std::f64::consts::PI).round();
        let r = half - n * std::f64::consts::PI;
        n * std::f64::consts::PI + (r.sin() / self.q).atan2(r.cos())
    }

    /// η from φ: inverse lift, η/2 = nπ + arctan(q·tan(φ − nπ)).
    fn eta_of_phi(&self, phi: f64) -> f64 {
        let n = (phi / std::f64::consts::PI).round();
        let r = phi - n * std::f64::consts::PI;
        2.0 * (n * std::f64::consts::PI + (self.q * r.sin()).atan2(r.cos()))
    }
}

/// η(τ) on the increasing separatrix branch (η-energy forced to μ₁ + h) with
/// η(0) = η₀; defined for all τ. The decreasing branch is the image of the
/// increasing one under (τ, η₀) ↦ (τ, −η₀) with overall sign flip.
pub fn separatrix_eta(
    tau: f64,
    eta0: f64,
    params: &TwoCentreParams,
) -> Result<f64, TwoCentreError> {
    let form = EtaForm::new(params)?;
    let omega0 = specfun::elliptic_f(form.phi_of_eta(eta0), form.k)?;
    let phi = specfun::jacobi_am(form.rate * tau + omega0, form.k)?;
    Ok(form.eta_of_phi(phi))
}

/// p_η on the increasing branch (positive), from the forced η-energy.
fn p_eta_increasing(eta: f64, params: &TwoCentreParams) -> f64 {
    let ce = eta.cos();
    let arg =
        2.0 * params.h * (1.0 + params.mu1_bar() - (params.mu2_bar() + ce) * ce);
    arg.max(0.0).sqrt()
}

// ---------- Spirals ----------

/// Winding direction of a separatrix spiral: `Plus` winds counter-clockwise
/// (η increasing), `Minus` is its mirror under y ↦ −y.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpiralSign {
    Plus,
    Minus,
}

/// One separatrix spiral: asymptotic to the collision segment forward in
/// physical time, to the ray of direction θ₀ backward in time.
///
/// Internally the curve is parametrized by δτ ∈ (0, ∞), the K-time offset
/// from the backward blow-up of the ξ branch; θ₀ is exactly the η value at
/// blow-up. The physical clock is anchored (t = 0) where cosh ξ = 2, i.e.
/// on the confocal ellipse f = 2; t then covers all of ℝ.
///
/// The time change t(δτ) = ∫ρ² dδτ is split as T_cosh − S: the singular
/// cosh²ξ part has the closed-form antiderivative (u = coth σ, α² = A/2)
///
/// ```text
///   ∫cosh²ξ dσ = σ + 2α(α²−1)·artanh(u/α) − 2α²(α²−1)·u/(α²−u²),
/// ```
///
/// while S = ∫cos²η dδτ reduces to the antiderivative G of cos²η as a
/// function of the elliptic phase ω, which is periodic with period 2K(k);
/// G is tabulated over one period at construction and every later time
/// query is O(1).
#[derive(Debug, Clone)]
pub struct SpiralSolution {
    params: TwoCentreParams,
    sign: SpiralSign,
    theta0: f64,
    /// ω(δτ) = rate·δτ + ω_*, fixing η(δτ→0⁺) = θ₀ (in the Plus gauge).
    omega_star: f64,
    form_q: f64,
    form_k: EllipticModulus<f64>,
    form_rate: f64,
    sigma_min: f64,
    sigma_rate: f64,
    /// δτ of the t = 0 anchor (cosh ξ = 2).
    dtau_ref: f64,
    /// α = √(A/2) of the closed-form cosh²ξ antiderivative.
    alpha: f64,
    /// t(δτ_ref) in the unanchored split, subtracted from every query.
    t_offset: f64,
    /// Prefix Gauss-Legendre sums of ∫cos²η dω over one phase period.
    g_prefix: Vec<f64>,
    g_h: f64,
    g_period: f64,
}

impl SpiralSolution {
    pub fn new(
        params: &TwoCentreParams,
        theta0: f64,
        sign: SpiralSign,
    ) -> Result<Self, TwoCentreError> {
        let form = EtaForm::new(params)?;
        // In the Minus gauge the curve is mirrored, so build the Plus core
        // with the mirrored asymptotic angle.
        let theta0_plus = match sign {
            SpiralSign::Plus => theta0,
            SpiralSign::Minus => -theta0,
        };
        let omega_star = specfun::elliptic_f(form.phi_of_eta(theta0_plus), form.k)?;
        let s_min = sigma_min(params);
        let s_rate = sigma_rate(params);
        // cosh ξ = 2 ⟺ cosh²σ = 3A/μ̄₁.
        let a = 2.0 + params.mu1_bar();
        let sigma_ref = (3.0 * a / params.mu1_bar()).sqrt().acosh();
        let dtau_ref = (sigma_ref - s_min) / s_rate;
        let period = 2.0 * specfun::complete_k(form.k)?;
        let mut out = Self {
            params: *params,
            sign,
            theta0,
            omega_star,
            form_q: form.q,
            form_k: form.k,
            form_rate: form.rate,
            sigma_min: s_min,
            sigma_rate: s_rate,
            dtau_ref,
            alpha: (a / 2.0).sqrt(),
            t_offset: 0.0,
            g_prefix: Vec::new(),
            g_h: period / G_CELLS as f64,
            g_period: period,
        };
        out.g_prefix = out.build_g_prefix();
        out.t_offset = out.t_cosh(dtau_ref) - out.s_smooth(dtau_ref);
        Ok(out)
    }

    #[inline]
    pub fn sign(&self) -> SpiralSign {
        self.sign
    }

    #[inline]
    pub fn theta0(&self) -> f64 {
        self.theta0
    }

    #[inline]
    pub fn params(&self) -> &TwoCentreParams {
        &self.params
    }

    /// Elliptic data of the Plus-gauge core at parameter δτ > 0.
    fn core(&self, dtau: f64) -> Result<EllipticState, TwoCentreError> {
        if !(dtau > 0.0) {
            return Err(TwoCentreError::DomainError { what: "spiral parameter", value: dtau });
        }
        let sigma = self.sigma_rate * dtau + self.sigma_min;
        let cosh_xi = cosh_xi_of_sigma(sigma, &self.params)?;
        let xi = cosh_xi.acosh();
        let form =
            EtaForm { q: self.form_q, k: self.form_k, rate: self.form_rate };
        let phi = specfun::jacobi_am(self.form_rate * dtau + self.omega_star, self.form_k)?;
        let eta = form.eta_of_phi(phi);
        Ok(EllipticState {
            xi,
            eta,
            p_xi: p_xi_decreasing(cosh_xi, &self.params),
            p_eta: p_eta_increasing(eta, &self.params),
        })
    }

    /// ρ² = cosh²ξ − cos²η at parameter δτ.
    fn rho_sq(&self, dtau: f64) -> Result<f64, TwoCentreError> {
        let sigma = self.sigma_rate * dtau + self.sigma_min;
        let c = cosh_xi_of_sigma(sigma, &self.params)?;
        Ok(c * c - self.cos_sq_eta_of_omega(self.form_rate * dtau + self.omega_star))
    }

    /// cos²η as a function of the elliptic phase ω (even under the mirror,
    /// so gauge-free, and periodic with period 2K).
    fn cos_sq_eta_of_omega(&self, omega: f64) -> f64 {
        let Ok(jv) = specfun::jacobi(omega, self.form_k) else {
            return f64::NAN;
        };
        // cos η = cos(2·arctan(q tan r)) with r the principal part of
        // φ = am(ω); with c = cos φ = cn, s = q sin φ = q·sn this is
        // (c² − s²)/(c² + s²), independent of the branch shift nπ.
        let (c, s) = (jv.cn, self.form_q * jv.sn);
        let cos_eta = (c * c - s * s) / (c * c + s * s);
        cos_eta * cos_eta
    }

    /// Closed-form ∫cosh²ξ dδτ (unanchored antiderivative).
    fn t_cosh(&self, dtau: f64) -> f64 {
        let sigma = self.sigma_rate * dtau + self.sigma_min;
        let a = self.alpha;
        let u = 1.0 / sigma.tanh();
        let w = (u / a).atanh();
        let c1 = a * a - 1.0;
        (sigma + 2.0 * a * c1 * w - 2.0 * a * a * c1 * u / (a * a - u * u)) / self.sigma_rate
    }

    /// Five-point Gauss-Legendre panel of cos²η(ω) over [lo, hi].
    fn g_panel(&self, lo: f64, hi: f64) -> f64 {
        let mid = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        let mut acc = 0.0;
        for (x, w) in GL5_NODES.iter().zip(GL5_WEIGHTS) {
            acc += w * self.cos_sq_eta_of_omega(mid + half * x);
        }
        acc * half
    }

    /// Prefix sums of ∫cos²η dω over one period, cell by cell.
    fn build_g_prefix(&self) -> Vec<f64> {
        let mut prefix = Vec::with_capacity(G_CELLS + 1);
        prefix.push(0.0);
        let mut acc = 0.0;
        for i in 0..G_CELLS {
            acc += self.g_panel(i as f64 * self.g_h, (i + 1) as f64 * self.g_h);
            prefix.push(acc);
        }
        prefix
    }

    /// G(ω) = ∫₀^ω cos²η dω', assembled from whole periods plus the
    /// tabulated prefix and a partial panel.
    fn g_of_omega(&self, omega: f64) -> f64 {
        let per = self.g_period;
        let n_per = (omega / per).floor();
        let rem = omega - n_per * per;
        let idx = ((rem / self.g_h) as usize).min(G_CELLS - 1);
        let g_total = self.g_prefix[G_CELLS];
        n_per * g_total + self.g_prefix[idx] + self.g_panel(idx as f64 * self.g_h, rem)
    }

    /// S(δτ) = ∫₀^δτ cos²η dδτ' = (G(ω(δτ)) − G(ω(0)))/rate.
    fn s_smooth(&self, dtau: f64) -> f64 {
        (self.g_of_omega(self.form_rate * dtau + self.omega_star)
            - self.g_of_omega(self.omega_star))
            / self.form_rate
    }

    /// Physical time at parameter δτ: t(δτ) = ∫ ρ² dδτ from the anchor.
    pub fn time_of_parameter(&self, dtau: f64) -> Result<f64, TwoCentreError> {
        if !(dtau > 0.0) {
            return Err(TwoCentreError::DomainError { what: "spiral parameter", value: dtau });
        }
        Ok(self.t_cosh(dtau) - self.s_smooth(dtau) - self.t_offset)
    }

    /// Inverts the physical clock: the δτ with t(δτ) = t. Monotone since
    /// dt/dδτ = ρ² > 0 off the segment.
    pub fn parameter_of_time(&self, t: f64) -> Result<f64, TwoCentreError> {
        // Bracket around the anchor: expand forward linearly (t grows at
        // least like δτ·inf ρ² there), backward by halving toward the
        // blow-up where t ~ −C/δτ.
        let mut lo = self.dtau_ref;
        let mut hi = self.dtau_ref;
        if t >= 0.0 {
            let mut step = 1.0 / self.sigma_rate;
            while self.time_of_parameter(hi)? < t {
                hi += step;
                step *= 2.0;
                if hi > 1e9 {
                    return Err(TwoCentreError::NotFound { what: "spiral time bracket" });
                }
            }
        } else {
            while self.time_of_parameter(lo)? > t {
                lo *= 0.5;
                if lo < 1e-13 {
                    return Err(TwoCentreError::NotFound { what: "spiral time bracket" });
                }
            }
            hi = self.dtau_ref;
        }
        // Newton with bisection safeguard; dt/dδτ = ρ².
        let mut x = 0.5 * (lo + hi);
        for _ in 0..200 {
            let tx = self.time_of_parameter(x)?;
            if tx > t {
                hi = x;
            } else {
                lo = x;
            }
            if (tx - t).abs() < 1e-12 * t.abs().max(1.0) || hi - lo < 1e-15 * hi {
                return Ok(x);
            }
            let deriv = self.rho_sq(x)?;
            let newton = x - (tx - t) / deriv;
            x = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        }
        Ok(x)
    }

    /// Planar state (position and physical velocity) at physical time t.
    pub fn state(&self, t: f64) -> Result<crate::dynamics::PhaseState, TwoCentreError> {
        let dtau = self.parameter_of_time(t)?;
        self.state_at_parameter(dtau)
    }

    /// Planar state at internal parameter δτ.
    pub fn state_at_parameter(
        &self,
        dtau: f64,
    ) -> Result<crate::dynamics::PhaseState, TwoCentreError> {
        let st = self.core(dtau)?;
        let (sh, ch) = (st.xi.sinh(), st.xi.cosh());
        let (se, ce) = st.eta.sin_cos();
        let x = V::new(ch * ce, sh * se);
        // dx/dτ via the coordinate Jacobian, then dt = ρ² dτ.
        let rho2 = ch * ch - ce * ce;
        let dxdtau = V::new(
            sh * ce * st.p_xi - ch * se * st.p_eta,
            ch * se * st.p_xi + sh * ce * st.p_eta,
        );
        let u = dxdtau / rho2;
        let ps = crate::dynamics::PhaseState::new(x, u);
        Ok(match self.sign {
            SpiralSign::Plus => ps,
            SpiralSign::Minus => crate::dynamics::PhaseState::new(
                V::new(ps.x.x, -ps.x.y),
                V::new(ps.u.x, -ps.u.y),
            ),
        })
    }

    /// Position at physical time t.
    pub fn point(&self, t: f64) -> Result<V, TwoCentreError> {
        Ok(self.state(t)?.x)
    }
}

/// Position of the separatrix spiral of the given winding sign and backward
/// asymptotic direction θ₀, at physical time t.
pub fn spiral(
    t: f64,
    theta0: f64,
    sign: SpiralSign,
    params: &TwoCentreParams,
) -> Result<V, TwoCentreError> {
    SpiralSolution::new(params, theta0, sign)?.point(t)
}

// ---------- Wall-orthogonal spiral and admissibility ----------

/// The unique (t₀, θ₀) for which the spiral of the given sign meets ℓ with
/// velocity orthogonal to it, found by a multi-start damped Newton iteration
/// on (t, θ₀); uniqueness is asserted by root agreement across starts.
pub fn spiral_orthogonal_to_wall(
    wall: &Wall<f64>,
    sign: SpiralSign,
    params: &TwoCentreParams,
) -> Result<(f64, f64, SpiralSolution), TwoCentreError> {
    validate_wall(wall, params)?;
    let mut roots: Vec<(f64, f64)> = Vec::new();
    let n_starts = 16;
    for j in 0..n_starts {
        let theta_seed = -std::f64::consts::PI
            + std::f64::consts::TAU * (j as f64 + 0.5) / n_starts as f64;
        // Only tails that leave the half-plane can produce a wall crossing.
        if V::from_angle(theta_seed).dot(wall.w()) >= 0.0 {
            continue;
        }
        let Some(t_seed) = first_wall_crossing(wall, sign, params, theta_seed) else {
            continue;
        };
        if let Some((t0, th0)) = orthogonality_newton(wall, sign, params, t_seed, theta_seed) {
            let duplicate = roots.iter().any(|&(t, th)| {
                (t - t0).abs() < 1e-6 && wrap_angle(th - th0).abs() < 1e-6
            });
            if !duplicate {
                roots.push((t0, th0));
            }
        }
    }
    match roots.as_slice() {
        [] => Err(TwoCentreError::NotFound { what: "wall-orthogonal spiral" }),
        [(t0, th0), ..] => {
            // Multiple distinct roots would contradict uniqueness; surface
            // the first (they are sorted by seed order, deterministic).
            let s = SpiralSolution::new(params, *th0, sign)?;
            Ok((*t0, *th0, s))
        }
    }
}

fn validate_wall(wall: &Wall<f64>, params: &TwoCentreParams) -> Result<(), TwoCentreError> {
    wall.validate_for(&params.centre_system()).map_err(|_| TwoCentreError::InvalidWall)
}

/// First physical time at which the spiral with asymptote θ₀ crosses ℓ,
/// scanning forward from deep negative time; None if it never does within
/// the scan horizon.
fn first_wall_crossing(
    wall: &Wall<f64>,
    sign: SpiralSign,
    params: &TwoCentreParams,
    theta0: f64,
) -> Option<f64> {
    let spiral = SpiralSolution::new(params, theta0, sign).ok()?;
    // The far tail is outside Π for these seeds; walk forward until the
    // height changes sign.
    let t_far = -30.0 * (1.0 + wall.d());
    let mut prev_t = t_far;
    let mut prev_h = wall.height(spiral.point(prev_t).ok()?);
    let n = 600;
    for j in 1..=n {
        let t = t_far + (30.0 * (1.0 + wall.d()) + 10.0 - t_far) * j as f64 / n as f64;
        let h = wall.height(spiral.point(t).ok()?);
        if prev_h < 0.0 && h >= 0.0 {
            // Bisect the crossing.
            let (mut lo, mut hi) = (prev_t, t);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if wall.height(spiral.point(mid).ok()?) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return Some(0.5 * (lo + hi));
        }
        prev_t = t;
        prev_h = h;
    }
    None
}

/// Damped Newton with finite-difference Jacobian on
/// r(t, θ₀) = (⟨w, s(t)⟩ + d, ⟨v, ds/dt⟩).
fn orthogonality_newton(
    wall: &Wall<f64>,
    sign: SpiralSign,
    params: &TwoCentreParams,
    t_seed: f64,
    theta_seed: f64,
) -> Option<(f64, f64)> {
    let resid = |t: f64, th: f64| -> Option<[f64; 2]> {
        let s = SpiralSolution::new(params, th, sign).ok()?;
        let ps = s.state(t).ok()?;
        Some([wall.height(ps.x), ps.u.dot(wall.v())])
    };
    let mut t = t_seed;
    let mut th = theta_seed;
    let mut r = resid(t, th)?;
    for _ in 0..60 {
        let norm = r[0].abs() + r[1].abs();
        if r[0].abs() < 1e-11 && r[1].abs() < 1e-11 {
            return Some((t, th));
        }
        let dt = 1e-6 * (1.0 + t.abs());
        let dth = 1e-6;
        let rt = resid(t + dt, th)?;
        let rh = resid(t, th + dth)?;
        let j = [
            [(rt[0] - r[0]) / dt, (rh[0] - r[0]) / dth],
            [(rt[1] - r[1]) / dt, (rh[1] - r[1]) / dth],
        ];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det.abs() < 1e-14 {
            return None;
        }
        let step_t = (r[0] * j[1][1] - r[1] * j[0][1]) / det;
        let step_th = (r[1] * j[0][0] - r[0] * j[1][0]) / det;
        // Backtracking on the residual 1-norm.
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..20 {
            let (tn, thn) = (t - lambda * step_t, th - lambda * step_th);
            if let Some(rn) = resid(tn, thn) {
                if rn[0].abs() + rn[1].abs() < norm {
                    t = tn;
                    th = thn;
                    r = rn;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            return None;
        }
    }
    None
}

/// Admissibility verdict for a wall: both wall-orthogonal spirals must stay
/// strictly inside Π for all time past their orthogonal impact.
#[derive(Debug, Clone)]
pub struct AdmissibilityReport {
    pub admissible: bool,
    /// Worst signed clearance ⟨w, s(t)⟩ + d over both spirals' sampled span.
    pub margin: f64,
    /// (t₀, θ₀) of the Plus and Minus orthogonal spirals.
    pub plus_root: (f64, f64),
    pub minus_root: (f64, f64),
    /// Sampling horizon per sign: the time past which the tail argument
    /// (confinement in the ellipse f < f_min(ℓ)/2) takes over.
    pub t_max: [f64; 2],
    /// Minimum of ellipse_f along the wall.
    pub f_min_wall: f64,
}

/// Checks Definition-style admissibility of a wall: computes both orthogonal
/// spirals, samples their forward images densely up to the time their
/// confining ellipse f < f_min(ℓ)/2 separates them from ℓ, and reports the
/// worst clearance.
pub fn is_admissible(
    wall: &Wall<f64>,
    params: &TwoCentreParams,
) -> Result<AdmissibilityReport, TwoCentreError> {
    validate_wall(wall, params)?;
    let f_min_wall = min_f_on_wall(wall);

    let mut margin = f64::INFINITY;
    let mut roots = [(0.0, 0.0); 2];
    let mut t_maxes = [0.0; 2];
    for (idx, sign) in [SpiralSign::Plus, SpiralSign::Minus].into_iter().enumerate() {
        let (t0, th0, spiral) = spiral_orthogonal_to_wall(wall, sign, params)?;
        roots[idx] = (t0, th0);
        // March until f < f_min/2; f is strictly decreasing along the
        // spiral, so this is a simple forward walk.
        let target = 0.5 * f_min_wall;
        let mut t_hi = t0 + 1.0;
        while ellipse_f(spiral.point(t_hi)?) > target {
            t_hi = t0 + (t_hi - t0) * 1.5;
            if t_hi - t0 > 1e7 {
                return Err(TwoCentreError::NotFound { what: "ellipse confinement time" });
            }
        }
        t_maxes[idx] = t_hi;
        let n = 2000;
        for j in 1..=n {
            let t = t0 + (t_hi - t0) * j as f64 / n as f64;
            margin = margin.min(wall.height(spiral.point(t)?));
        }
    }
    Ok(AdmissibilityReport {
        admissible: margin > 0.0,
        margin,
        plus_root: roots[0],
        minus_root: roots[1],
        t_max: t_maxes,
        f_min_wall,
    })
}

/// Minimum of f along the wall line (f is convex along any line; golden
/// section on a bracket around the foot of the segment's centre).
fn min_f_on_wall(wall: &Wall<f64>) -> f64 {
    let g = |s: f64| ellipse_f(wall.point(s));
    // Bracket the minimizer: f grows linearly far out.
    let (mut a, mut b) = (-10.0 - 10.0 * wall.d(), 10.0 + 10.0 * wall.d());
    let phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    for _ in 0..200 {
        if g(c) < g(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - phi * (b - a);
        d = a + phi * (b - a);
        if (b - a).abs() < 1e-12 {
            break;
        }
    }
    g(0.5 * (a + b))
}

/// Cells of the one-period phase-integral table.
const G_CELLS: usize = 256;

const GL5_NODES: [f64; 5] = [
    -0.906_179_845_938_664_0,
    -0.538_469_310_105_683_1,
    0.0,
    0.538_469_310_105_683_1,
    0.906_179_845_938_664_0,
];
const GL5_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189_08,
    0.478_628_670_499_366_47,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_47,
    0.236_926_885_056_189_08,
];
