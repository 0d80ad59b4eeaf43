//! Homotopy bookkeeping for trajectories and discrete paths: reduced words
//! of signed crossings of cut rays, and the integer winding class around a
//! designated centre pair.
//!
//! Each centre carries a cut ray in the inward wall-normal direction +w
//! (pointing away from the wall). A path that starts and ends on the wall
//! can be closed up along the wall without adding crossings, so the reduced
//! word of its ray crossings encodes its homotopy class in the plane minus
//! the centres. Crossing signs are counter-clockwise positive: one CCW turn
//! of a loop enclosing exactly the two designated centres crosses each of
//! their rays once, positively.

use crate::geom::Vec2;
use crate::potential::{CentreSystem, Wall, EPS_GEOM};

type V = Vec2<f64>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WindingError {
    #[error("path point {index} lies within eps of a cut ray; resample before classifying")]
    AmbiguousSample { index: usize },
}

/// A ray origin + t·dir for t ∈ [0, t_max]; t_max may be infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: V,
    pub dir: V,
    pub t_max: f64,
}

impl Ray {
    pub fn new(origin: V, dir: V, t_max: f64) -> Self {
        let dir = dir.normalized().expect("ray direction must be nonzero");
        Self { origin, dir, t_max }
    }

    /// Left-hand normal of the ray direction; crossings that move with this
    /// normal are counted positive (counter-clockwise about the origin).
    #[inline]
    pub fn normal(&self) -> V {
        self.dir.rot90()
    }

    /// Signed perpendicular offset of x from the ray's supporting line.
    #[inline]
    pub fn side(&self, x: V) -> f64 {
        (x - self.origin).dot(self.normal())
    }

    /// Distance of x to the ray as a set (for degeneracy checks).
    pub fn distance(&self, x: V) -> f64 {
        let t = (x - self.origin).dot(self.dir).clamp(0.0, self.t_max);
        x.dist(self.origin + self.dir * t)
    }
}

/// One cut ray per centre, in the inward normal direction +w.
pub fn wall_rays(sys: &CentreSystem<f64>, wall: &Wall<f64>) -> Vec<Ray> {
    sys.centres().iter().map(|&c| Ray::new(c, wall.w(), f64::INFINITY)).collect()
}

/// A reduced word over signed ray crossings, in traversal order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct WindingWord {
    /// (ray index, ±1), free of adjacent inverse pairs.
    pub letters: Vec<(usize, i8)>,
}

impl WindingWord {
    #[inline]
    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.letters.len()
    }

    /// Integer class k when the word is a pure power of the one-turn
    /// generator around rays `a` and `b`: alternating letters of a single
    /// sign s, giving k = s·(half the length). 0 for the empty word; None
    /// when the word is not such a power.
    pub fn pair_class(&self, a: usize, b: usize) -> Option<i64> {
        if self.letters.is_empty() {
            return Some(0);
        }
        if self.letters.len() % 2 != 0 {
            return None;
        }
        let sign = self.letters[0].1;
        let first = self.letters[0].0;
        let second = if first == a { b } else if first == b { a } else { return None };
        for (j, &(ray, s)) in self.letters.iter().enumerate() {
            let expect = if j % 2 == 0 { first } else { second };
            if ray != expect || s != sign {
                return None;
            }
        }
        Some(i64::from(sign) * (self.letters.len() / 2) as i64)
    }
}

impl std::fmt::Display for WindingWord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.letters.is_empty() {
            return write!(f, "e");
        }
        for (j, &(ray, sign)) in self.letters.iter().enumerate() {
            if j > 0 {
                write!(f, " ")?;
            }
            write!(f, "r{}{}", ray, if sign > 0 { "+" } else { "-" })?;
        }
        Ok(())
    }
}

/// A single transversal crossing of one ray by one chord of a polyline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayCrossing {
    pub ray: usize,
    pub sign: i8,
    /// Index of the chord's first point.
    pub chord: usize,
    /// Parameter of the crossing within the chord, in (0,1).
    pub lambda: f64,
    /// Parameter along the ray, in [0, t_max].
    pub t_ray: f64,
}

/// All ray crossings of the polyline, in traversal order. Side changes are
/// judged by strict sign comparison (deterministic tie-break at zero); use
/// [`word_of_polyline`] for the checked variant.
pub fn crossings_of_polyline(
    points: &[V],
    closed: bool,
    rays: &[Ray],
) -> Vec<RayCrossing> {
    let mut out = Vec::new();
    if points.len() < 2 {
        return out;
    }
    let n_chords = if closed { points.len() } else { points.len() - 1 };
    let mut per_chord: Vec<RayCrossing> = Vec::new();
    for j in 0..n_chords {
        let p = points[j];
        let q = points[(j + 1) % points.len()];
        per_chord.clear();
        for (ri, ray) in rays.iter().enumerate() {
            let sp = ray.side(p);
            let sq = ray.side(q);
            let crossed = (sp > 0.0 && sq <= 0.0) || (sp <= 0.0 && sq > 0.0);
            if !crossed || sp == sq {
                continue;
            }
            let lambda = sp / (sp - sq);
            let z = p + (q - p) * lambda;
            let t_ray = (z - ray.origin).dot(ray.dir);
            if t_ray < 0.0 || t_ray > ray.t_max {
                continue;
            }
            // Side increasing along motion means moving with the left normal: CCW.
            let sign = if sp <= 0.0 { 1 } else { -1 };
            per_chord.push(RayCrossing { ray: ri, sign, chord: j, lambda, t_ray });
        }
        per_chord.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
        out.extend(per_chord.iter().copied());
    }
    out
}

fn reduce(letters: impl IntoIterator<Item = (usize, i8)>, cyclic: bool) -> WindingWord {
    let mut stack: Vec<(usize, i8)> = Vec::new();
    for l in letters {
        if let Some(&top) = stack.last() {
            if top.0 == l.0 && top.1 == -l.1 {
                stack.pop();
                continue;
            }
        }
        stack.push(l);
    }
    if cyclic {
        while stack.len() >= 2 {
            let first = stack[0];
            let last = *stack.last().unwrap();
            if first.0 == last.0 && first.1 == -last.1 {
                stack.pop();
                stack.remove(0);
            } else {
                break;
            }
        }
    }
    WindingWord { letters: stack }
}

/// Reduced crossing word of a polyline, erroring when any point sits within
/// `eps` of a ray (the crossing count would be sampling-dependent there).
pub fn word_of_polyline(
    points: &[V],
    closed: bool,
    rays: &[Ray],
    eps: f64,
) -> Result<WindingWord, WindingError> {
    for (index, &p) in points.iter().enumerate() {
        for ray in rays {
            if ray.distance(p) < eps {
                return Err(WindingError::AmbiguousSample { index });
            }
        }
    }
    Ok(word_of_polyline_lenient(points, closed, rays))
}

/// Reduced crossing word with the deterministic zero tie-break and no
/// degeneracy checks; used inside optimizers where the word only gates
/// step acceptance.
pub fn word_of_polyline_lenient(points: &[V], closed: bool, rays: &[Ray]) -> WindingWord {
    let crossings = crossings_of_polyline(points, closed, rays);
    reduce(crossings.into_iter().map(|c| (c.ray, c.sign)), closed)
}

/// Default degeneracy threshold for public classification calls.
pub fn default_eps() -> f64 {
    EPS_GEOM
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{CentreSystem, Wall};

    fn pair_rays() -> Vec<Ray> {
        let sys = CentreSystem::pair(1.0, 1.0).unwrap();
        let wall = Wall::new(V::new(1.0, 0.0), 3.0).unwrap();
        wall_rays(&sys, &wall)
    }

    fn circle(centre: V, r: f64, n: usize, turns: i32) -> Vec<V> {
        let total = f64::from(turns) * std::f64::consts::TAU;
        (0..=n)
            .map(|j| {
                let t = total * j as f64 / n as f64 - std::f64::consts::FRAC_PI_2;
                centre + V::new(t.cos(), t.sin()) * r
            })
            .collect()
    }

    #[test]
    fn straight_wall_side_path_has_empty_word() {
        let rays = pair_rays();
        let pts = vec![V::new(-5.0, -3.0), V::new(5.0, -3.0)];
        let w = word_of_polyline(&pts, false, &rays, 1e-9).unwrap();
        assert!(w.is_empty());
        assert_eq!(w.pair_class(0, 1), Some(0));
    }

    #[test]
    fn ccw_circle_around_both_centres_is_class_one() {
        let rays = pair_rays();
        // Radius-3 circle around the pair, one CCW turn, started below.
        let pts = circle(V::zero(), 3.0, 256, 1);
        let w = word_of_polyline(&pts, true, &rays, 1e-9).unwrap();
        assert_eq!(w.len(), 2);
        assert_eq!(w.pair_class(0, 1), Some(1));
    }

    #[test]
    fn cw_double_circle_is_class_minus_two() {
        let rays = pair_rays();
        let mut pts = circle(V::zero(), 3.0, 512, 2);
        pts.reverse();
        let w = word_of_polyline(&pts, true, &rays, 1e-9).unwrap();
        assert_eq!(w.pair_class(0, 1), Some(-2));
    }

    #[test]
    fn immediate_recrossing_cancels() {
        let rays = pair_rays();
        // Crosses ray 1 rightward above its centre, then immediately back.
        let pts = vec![
            V::new(0.5, -3.0),
            V::new(0.5, 1.0),
            V::new(1.5, 1.0),
            V::new(0.5, 1.0),
            V::new(0.5, -3.0),
        ];
        let w = word_of_polyline(&pts, false, &rays, 1e-9).unwrap();
        assert!(w.is_empty(), "got {w}");
    }

    #[test]
    fn single_centre_loop_is_not_a_pair_power() {
        let rays = pair_rays();
        // Small CCW loop around centre 1 only; odd sample count so no vertex
        // lands exactly on the upward ray.
        let pts = circle(V::new(1.0, 0.0), 0.5, 127, 1);
        let w = word_of_polyline(&pts, true, &rays, 1e-9).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w.pair_class(0, 1), None);
    }

    #[test]
    fn sample_on_ray_is_ambiguous() {
        let rays = pair_rays();
        let pts = vec![V::new(0.0, -3.0), V::new(1.0, 2.0), V::new(2.0, -3.0)];
        let err = word_of_polyline(&pts, false, &rays, 1e-9).unwrap_err();
        assert_eq!(err, WindingError::AmbiguousSample { index: 1 });
        // The lenient variant still classifies (tie-broken).
        let _ = word_of_polyline_lenient(&pts, false, &rays);
    }

    #[test]
    fn clipped_ray_ignores_far_crossings() {
        let ray = Ray::new(V::zero(), V::new(0.0, 1.0), 2.0);
        let pts = vec![V::new(-1.0, 5.0), V::new(1.0, 5.0)];
        assert!(crossings_of_polyline(&pts, false, &[ray]).is_empty());
        let pts_low = vec![V::new(-1.0, 1.0), V::new(1.0, 1.0)];
        assert_eq!(crossings_of_polyline(&pts_low, false, &[ray]).len(), 1);
    }

    #[test]
    fn crossing_sign_matches_ccw_motion() {
        let ray = Ray::new(V::zero(), V::new(0.0, 1.0), f64::INFINITY);
        // Moving in −x above the origin: CCW about it.
        let pts = vec![V::new(1.0, 1.0), V::new(-1.0, 1.0)];
        let c = crossings_of_polyline(&pts, false, &[ray]);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].sign, 1);
    }
}
