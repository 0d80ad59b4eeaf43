//! Incomplete elliptic integrals of the first kind and Jacobi elliptic
//! functions, by the arithmetic-geometric mean (AGM) and Landen
//! transformations.
//!
//! ```text
//!              φ
//!             ⌠        dθ
//!   F(φ,k) =  ⎮  ─────────────────        0 ≤ k ≤ 1
//!             ⌡  √(1 − k² sin²θ)
//!              0
//! ```
//!
//! extended to all real φ (quasi-periodicity F(φ + nπ, k) = F(φ, k) + 2nK(k)
//! falls out of the amplitude recursion, no explicit range reduction), and
//!
//! ```text
//!   sn(u,k) = sin(am(u,k)),  cn = cos(am),  dn = √(1 − k² sn²),  tn = sn/cn,
//! ```
//!
//! where am is the Jacobi amplitude, inverted from F by the descending Landen
//! recursion. AGM/Landen is used instead of series because the moduli this
//! crate produces approach 1, where series lose accuracy uniformly.
//!
//! # References
//!
//! - Abramowitz & Stegun, Handbook of Mathematical Functions, 17.6 (AGM for
//!   F), 16.4 (descending Landen for the amplitude).
//! - DLMF 19.8 (quadratic transformations), 22.20 (elliptic function
//!   computation by the AGM).

use crate::real::Real;

/// Modulus slack accepted by [`EllipticModulus::new`]: values in
/// (1, 1 + MODULUS_SLACK] are clamped to 1 to absorb round-off in moduli
/// computed from other quantities.
pub const MODULUS_SLACK: f64 = 1e-14;

/// tn = sn/cn is rejected when |cn| falls below this.
pub const TN_POLE_EPS: f64 = 1e-12;

const MAX_AGM_ITER: usize = 64;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpecFunError {
    #[error("elliptic modulus k={k} outside [0, 1]")]
    ModulusOutOfRange { k: f64 },
    #[error("tn(u,k) evaluated too close to a pole: |cn| = {cn_abs:e}")]
    PoleProximity { cn_abs: f64 },
    #[error("{routine} failed to converge after {iterations} iterations")]
    NonConvergent { routine: &'static str, iterations: usize },
}

/// Validated elliptic modulus, k ∈ [0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipticModulus<F> {
    k: F,
}

impl<F: Real> EllipticModulus<F> {
    /// Accepts k ∈ [0, 1]; values exceeding 1 by at most [`MODULUS_SLACK`]
    /// are clamped to 1.
    pub fn new(k: F) -> Result<Self, SpecFunError> {
        if !(k >= F::zero()) || !(k <= F::one() + F::of(MODULUS_SLACK)) {
            return Err(SpecFunError::ModulusOutOfRange { k: k.to_f64().unwrap_or(f64::NAN) });
        }
        Ok(Self { k: k.min(F::one()) })
    }

    #[inline]
    pub fn k(self) -> F {
        self.k
    }

    /// Complementary modulus k' = √(1 − k²), computed as √((1−k)(1+k)).
    #[inline]
    pub fn complement(self) -> F {
        ((F::one() - self.k) * (F::one() + self.k)).sqrt()
    }
}

/// The AGM ladder a_n, b_n, c_n with a_0 = 1, b_0 = k'.
///
/// Returns (a, c, n_used) where `a` holds the common limit agm(1, k') in
/// a[n_used] and c_n = (a_{n-1} − b_{n-1})/2 are the Landen coefficients.
fn agm_ladder<F: Real>(kprime: F) -> Result<(Vec<F>, Vec<F>, usize), SpecFunError> {
    let mut a = vec![F::one()];
    let mut c = vec![F::zero()]; // c_0 unused; index aligns with a
    let mut an = F::one();
    let mut bn = kprime;
    for n in 1..=MAX_AGM_ITER {
        let a_next = (an + bn) * F::of(0.5);
        let c_next = (an - bn) * F::of(0.5);
        let b_next = (an * bn).sqrt();
        a.push(a_next);
        c.push(c_next);
        an = a_next;
        bn = b_next;
        if c_next.abs() <= an.abs() * F::epsilon() {
            return Ok((a, c, n));
        }
    }
    Err(SpecFunError::NonConvergent { routine: "agm_ladder", iterations: MAX_AGM_ITER })
}

/// Incomplete elliptic integral of the first kind F(φ, k), any real φ.
///
/// For k = 1 the integral is finite only for |φ| < π/2 (F = artanh sin φ);
/// beyond that the true limit value ±∞ is returned.
pub fn elliptic_f<F: Real>(phi: F, modulus: EllipticModulus<F>) -> Result<F, SpecFunError> {
    let k = modulus.k();
    if phi == F::zero() {
        return Ok(F::zero());
    }
    if k == F::zero() {
        return Ok(phi);
    }
    if k == F::one() {
        let half_pi = F::pi() * F::of(0.5);
        if phi.abs() < half_pi {
            return Ok(phi.sin().atanh());
        }
        return Ok(if phi > F::zero() { F::infinity() } else { F::neg_infinity() });
    }

    // Ascending-amplitude AGM (A&S 17.6): a_{n+1} = (a_n+b_n)/2,
    // b_{n+1} = √(a_n b_n), and the amplitude doubles via
    //   φ_{n+1} = φ_n + mπ + atan2((b_n/a_n)·sin r, cos r),  φ_n = mπ + r,
    // the branch that keeps φ_{n+1} ≈ 2φ_n, continuous across r = ±π/2.
    // Then F = lim φ_n / (2ⁿ · agm(1, k')).
    let mut an = F::one();
    let mut bn = modulus.complement();
    let mut phi_n = phi;
    let mut scale = F::one();
    for _ in 0..MAX_AGM_ITER {
        let m = (phi_n / F::pi()).round();
        let r = phi_n - m * F::pi();
        let delta = m * F::pi() + ((bn / an) * r.sin()).atan2(r.cos());
        phi_n = phi_n + delta;
        scale = scale * F::of(2.0);

        let a_next = (an + bn) * F::of(0.5);
        let b_next = (an * bn).sqrt();
        let c_next = (an - bn) * F::of(0.5);
        an = a_next;
        bn = b_next;
        if c_next.abs() <= an.abs() * F::epsilon() {
            return Ok(phi_n / (scale * an));
        }
    }
    Err(SpecFunError::NonConvergent { routine: "elliptic_f", iterations: MAX_AGM_ITER })
}

/// Complete elliptic integral of the first kind K(k) = F(π/2, k).
pub fn complete_k<F: Real>(modulus: EllipticModulus<F>) -> Result<F, SpecFunError> {
    if modulus.k() == F::one() {
        return Ok(F::infinity());
    }
    let (a, _, n) = agm_ladder(modulus.complement())?;
    Ok(F::pi() * F::of(0.5) / a[n])
}

/// Jacobi elliptic function values at one argument.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JacobiValues<F> {
    pub sn: F,
    pub cn: F,
    pub dn: F,
}

impl<F: Real> JacobiValues<F> {
    /// tn = sn/cn, rejecting arguments within [`TN_POLE_EPS`] of the cn = 0 pole.
    pub fn tn(&self) -> Result<F, SpecFunError> {
        if self.cn.abs() < F::of(TN_POLE_EPS) {
            return Err(SpecFunError::PoleProximity {
                cn_abs: self.cn.abs().to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(self.sn / self.cn)
    }
}

/// Jacobi amplitude am(u, k), the inverse of φ ↦ F(φ, k).
///
/// Descending Landen recursion (A&S 16.4): φ_N = 2^N a_N u, then
/// φ_{n−1} = (φ_n + arcsin((c_n/a_n)·sin φ_n)) / 2 down to φ_0 = am.
pub fn jacobi_am<F: Real>(u: F, modulus: EllipticModulus<F>) -> Result<F, SpecFunError> {
    let k = modulus.k();
    if k == F::zero() {
        return Ok(u);
    }
    if k == F::one() {
        // am(u, 1) is the gudermannian: 2·arctan(e^u) − π/2.
        return Ok(F::of(2.0) * u.exp().atan() - F::pi() * F::of(0.5));
    }
    let (a, c, n) = agm_ladder(modulus.complement())?;
    let mut phi = a[n] * u * (F::one() + F::one()).powi(n as i32);
    for i in (1..=n).rev() {
        let s = (c[i] / a[i]) * phi.sin();
        phi = (phi + s.asin()) * F::of(0.5);
    }
    Ok(phi)
}

/// Jacobi elliptic functions sn, cn, dn at argument u, modulus k.
///
/// Inversion identity: `jacobi(elliptic_f(φ,k), k).sn == sin φ` to
/// round-off; dn is closed from dn² = 1 − k²sn².
pub fn jacobi<F: Real>(u: F, modulus: EllipticModulus<F>) -> Result<JacobiValues<F>, SpecFunError> {
    let k = modulus.k();
    if k == F::one() {
        let sn = u.tanh();
        let cn = u.cosh().recip();
        return Ok(JacobiValues { sn, cn, dn: cn });
    }
    let am = jacobi_am(u, modulus)?;
    let sn = am.sin();
    let cn = am.cos();
    let dn = (F::one() - (k * sn) * (k * sn)).max(F::zero()).sqrt();
    Ok(JacobiValues { sn, cn, dn })
}
