//! Plane geometry primitives: a minimal 2-vector and angle helpers.
//!
//! Only the handful of operations the billiard needs (dot products, norms,
//! quarter-turn rotation, polar angles); no general linear algebra.

use core::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use crate::real::Real;

/// A point or vector in the plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vec2<F> {
    pub x: F,
    pub y: F,
}

impl<F: Real> Vec2<F> {
    #[inline]
    pub fn new(x: F, y: F) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn zero() -> Self {
        Self { x: F::zero(), y: F::zero() }
    }

    /// Unit vector at polar angle `theta` (radians, counter-clockwise from +x).
    #[inline]
    pub fn from_angle(theta: F) -> Self {
        Self { x: theta.cos(), y: theta.sin() }
    }

    #[inline]
    pub fn dot(self, o: Self) -> F {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the cross product; positive when `o` is counter-clockwise of `self`.
    #[inline]
    pub fn cross(self, o: Self) -> F {
        self.x * o.y - self.y * o.x
    }

    #[inline]
    pub fn norm_sq(self) -> F {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> F {
        self.norm_sq().sqrt()
    }

    #[inline]
    pub fn dist(self, o: Self) -> F {
        (self - o).norm()
    }

    /// Counter-clockwise quarter turn: (x, y) -> (-y, x).
    #[inline]
    pub fn rot90(self) -> Self {
        Self { x: -self.y, y: self.x }
    }

    /// Polar angle in (-π, π].
    #[inline]
    pub fn angle(self) -> F {
        self.y.atan2(self.x)
    }

    /// Vector of unit length in the same direction; `None` for the zero vector.
    #[inline]
    pub fn normalized(self) -> Option<Self> {
        let n = self.norm();
        if n > F::zero() {
            Some(self / n)
        } else {
            None
        }
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl<F: Real> Add for Vec2<F> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self { x: self.x + o.x, y: self.y + o.y }
    }
}

impl<F: Real> Sub for Vec2<F> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self { x: self.x - o.x, y: self.y - o.y }
    }
}

impl<F: Real> AddAssign for Vec2<F> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        self.x = self.x + o.x;
        self.y = self.y + o.y;
    }
}

impl<F: Real> SubAssign for Vec2<F> {
    #[inline]
    fn sub_assign(&mut self, o: Self) {
        self.x = self.x - o.x;
        self.y = self.y - o.y;
    }
}

impl<F: Real> Neg for Vec2<F> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self { x: -self.x, y: -self.y }
    }
}

impl<F: Real> Mul<F> for Vec2<F> {
    type Output = Self;
    #[inline]
    fn mul(self, s: F) -> Self {
        Self { x: self.x * s, y: self.y * s }
    }
}

impl<F: Real> Div<F> for Vec2<F> {
    type Output = Self;
    #[inline]
    fn div(self, s: F) -> Self {
        Self { x: self.x / s, y: self.y / s }
    }
}

/// Wrap an angle into (-π, π].
pub fn wrap_angle<F: Real>(theta: F) -> F {
    let two_pi = F::pi() + F::pi();
    let mut t = theta % two_pi;
    if t <= -F::pi() {
        t = t + two_pi;
    } else if t > F::pi() {
        t = t - two_pi;
    }
    t
}
