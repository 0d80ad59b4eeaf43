//! Motion between wall impacts, impact detection, elastic reflection, and
//! the first-return billiard map on the wall section.
//!
//! Trajectories follow ẍ = +∇V at fixed energy h = ½|u|² − V > 0 inside the
//! half-plane Π. Integration stops at the first of three terminals:
//!
//! * the trajectory crosses the wall line from inside (impact located on the
//!   integrator's dense output to the event time tolerance),
//! * escape is certified by the Lagrange-Jacobi monotonicity argument
//!   (|x − b| beyond the escape radius with outward radial velocity),
//! * the trajectory comes within the collision threshold of a centre.
//!
//! The billiard map composes one wall-to-wall flight with the elastic
//! reflection u ↦ u − 2⟨u,w⟩w and acts on section points (s, u) with
//! ⟨u,w⟩ > 0. Reflection is time-reversible: with reverse flipping the
//! tangential velocity, Φ(p) = q implies Φ(reverse(q)) = reverse(p).

use crate::geom::Vec2;
use crate::ode::{first_crossing, Crossing, Dopri5, Dopri5Opts, OdeError};
use crate::potential::{CentreSystem, EnergyLevel, PotentialError, Wall, EPS_GEOM};
use crate::winding::{self, WindingError, WindingWord};

type V = Vec2<f64>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DynamicsError {
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error(transparent)]
    Integration(#[from] OdeError),
    #[error(transparent)]
    Winding(#[from] WindingError),
    #[error("impact is tangential (normal speed {normal_speed:e})")]
    TangentialImpact { normal_speed: f64 },
    #[error("start state lies outside the half-plane or points out of it (height {height:e})")]
    InvalidStart { height: f64 },
    #[error("section velocity must point strictly into the half-plane (normal speed {normal_speed:e})")]
    NotInward { normal_speed: f64 },
}

/// Position and velocity of the flow at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseState {
    pub x: V,
    pub u: V,
}

impl PhaseState {
    #[inline]
    pub fn new(x: V, u: V) -> Self {
        Self { x, u }
    }
}

/// H(x, u) = ½|u|² − V(x).
pub fn energy_of(sys: &CentreSystem<f64>, state: &PhaseState) -> Result<f64, PotentialError> {
    Ok(0.5 * state.u.norm_sq() - sys.eval_potential(state.x)?)
}

/// A point of the wall section: wall coordinate s and full outgoing velocity
/// u with ⟨u,w⟩ > 0, at conserved energy h.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SectionPoint {
    s: f64,
    u: V,
    h: f64,
}

impl SectionPoint {
    /// Builds a section point from a raw velocity; the energy is computed
    /// from the invariant ½|u|² − V(x(s)).
    pub fn new(
        sys: &CentreSystem<f64>,
        wall: &Wall<f64>,
        s: f64,
        u: V,
    ) -> Result<Self, DynamicsError> {
        let normal_speed = u.dot(wall.w());
        if normal_speed <= EPS_GEOM {
            return Err(DynamicsError::NotInward { normal_speed });
        }
        let h = 0.5 * u.norm_sq() - sys.eval_potential(wall.point(s))?;
        Ok(Self { s, u, h })
    }

    /// Builds a section point at energy h from the inward direction angle
    /// θ ∈ (0, π), measured counter-clockwise from the wall direction v; the
    /// speed is fixed by the energy, |u| = √(2(h+V)).
    pub fn from_angle(
        sys: &CentreSystem<f64>,
        wall: &Wall<f64>,
        h: EnergyLevel<f64>,
        s: f64,
        theta: f64,
    ) -> Result<Self, DynamicsError> {
        let x = wall.point(s);
        let speed = (2.0 * (h.h() + sys.eval_potential(x)?)).sqrt();
        let u = (wall.v() * theta.cos() + wall.w() * theta.sin()) * speed;
        Self::new(sys, wall, s, u)
    }

    #[inline]
    pub fn s(&self) -> f64 {
        self.s
    }

    #[inline]
    pub fn u(&self) -> V {
        self.u
    }

    #[inline]
    pub fn h(&self) -> f64 {
        self.h
    }

    /// Inward direction angle from v, in (0, π).
    #[inline]
    pub fn angle(&self, wall: &Wall<f64>) -> f64 {
        wall.inward_angle(self.u)
    }

    #[inline]
    pub fn state(&self, wall: &Wall<f64>) -> PhaseState {
        PhaseState::new(wall.point(self.s), self.u)
    }
}

/// Why an integrated segment ended.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Terminal {
    /// Wall impact at coordinate s with (incoming, pre-reflection) velocity.
    WallHit { s: f64, u_in: V },
    /// Lagrange-Jacobi escape certificate fired.
    Escaped,
    /// Came within the collision threshold of centre `index`.
    Collision { index: usize },
}

/// One integrated flight, sampled along the way.
#[derive(Debug, Clone)]
pub struct TrajectorySegment {
    /// (time, state), strictly increasing in time, first entry at t = 0.
    pub samples: Vec<(f64, PhaseState)>,
    pub terminal: Terminal,
    /// Max relative energy deviation over the samples.
    pub energy_drift: f64,
    /// Reduced crossing word of the sampled polyline; None when a sample
    /// fell too close to a cut ray to classify safely.
    pub winding_word: Option<WindingWord>,
}

impl TrajectorySegment {
    #[inline]
    pub fn end_time(&self) -> f64 {
        self.samples.last().map(|&(t, _)| t).unwrap_or(0.0)
    }

    #[inline]
    pub fn end_state(&self) -> PhaseState {
        self.samples.last().expect("segment has at least its initial sample").1
    }

    /// Positions of the samples, as a polyline.
    pub fn positions(&self) -> Vec<V> {
        self.samples.iter().map(|&(_, st)| st.x).collect()
    }
}

/// Integration controls. `h_max` bounds the step so the event scan cannot
/// jump a wall dip; `sample_dt`, when set, adds dense-output samples on a
/// uniform grid for plotting.
#[derive(Debug, Clone, Copy)]
pub struct IntegrateOpts {
    pub rtol: f64,
    pub atol: f64,
    pub h_max: f64,
    pub max_steps: usize,
    /// Collision cut distance (coarser than the evaluation threshold so the
    /// step size cannot collapse first).
    pub eps_coll: f64,
    /// Event time tolerance for impact location.
    pub t_event_tol: f64,
    /// Sub-step samples scanned for event sign changes.
    pub n_scan: usize,
    pub sample_dt: Option<f64>,
}

impl Default for IntegrateOpts {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            h_max: 1.0,
            max_steps: 2_000_000,
            eps_coll: 1e-6,
            t_event_tol: 1e-12,
            n_scan: 32,
            sample_dt: None,
        }
    }
}

/// Integrates ẍ = ∇V from `state` until wall impact, certified escape, or
/// collision; see the module docs for the exact terminal conditions.
pub fn integrate_to_wall(
    sys: &CentreSystem<f64>,
    wall: &Wall<f64>,
    state: PhaseState,
    opts: &IntegrateOpts,
) -> Result<TrajectorySegment, DynamicsError> {
    wall.validate_for(sys)?;
    let height0 = wall.height(state.x);
    if height0 < -EPS_GEOM || (height0 <= EPS_GEOM && state.u.dot(wall.w()) <= 0.0) {
        return Err(DynamicsError::InvalidStart { height: height0 });
    }
    let h0 = energy_of(sys, &state)?;
    let b = sys.barycentre();
    let r_cert = match EnergyLevel::new(h0) {
        Ok(level) => sys.escape_radius(level, wall)?.max(sys.convexity_radius(level)?),
        // Negative-energy states cannot escape; disable the certificate.
        Err(_) => f64::INFINITY,
    };

    let field = |_t: f64, y: &[f64; 4]| {
        let g = sys.gradient_unchecked(V::new(y[0], y[1]));
        [y[2], y[3], g.x, g.y]
    };
    let ode_opts = Dopri5Opts {
        rtol: opts.rtol,
        atol: opts.atol,
        h_max: opts.h_max,
        h_init: 0.0,
        max_steps: opts.max_steps,
    };
    let y0 = [state.x.x, state.x.y, state.u.x, state.u.y];
    let mut stepper = Dopri5::new(field, 0.0, y0, ode_opts)?;

    let unpack = |y: &[f64; 4]| PhaseState::new(V::new(y[0], y[1]), V::new(y[2], y[3]));
    let mut samples: Vec<(f64, PhaseState)> = vec![(0.0, state)];
    let grid_dt = opts.sample_dt.unwrap_or(f64::INFINITY);
    let mut next_grid_t = grid_dt;

    let terminal: Terminal = loop {
        let dense = stepper.step(f64::INFINITY)?;

        let wall_t = first_crossing(
            &dense,
            |_t, y| wall.height(V::new(y[0], y[1])),
            Crossing::Down,
            opts.n_scan,
            opts.t_event_tol,
        );
        let coll_t = first_crossing(
            &dense,
            |_t, y| sys.nearest_centre(V::new(y[0], y[1])).1 - opts.eps_coll,
            Crossing::Down,
            opts.n_scan,
            opts.t_event_tol,
        );

        // Escape needs no precise location; first scan sample certifying it wins.
        let mut esc_t = None;
        for j in 0..=opts.n_scan {
            let t = dense.t_start()
                + (dense.t_end() - dense.t_start()) * j as f64 / opts.n_scan as f64;
            let st = unpack(&dense.eval(t));
            let rel = st.x - b;
            if rel.norm() > r_cert && rel.dot(st.u) > 0.0 {
                esc_t = Some(t);
                break;
            }
        }

        let earliest = [
            wall_t.map(|t| (t, 0u8)),
            coll_t.map(|t| (t, 1u8)),
            esc_t.map(|t| (t, 2u8)),
        ]
        .into_iter()
        .flatten()
        .min_by(|a, b| a.0.total_cmp(&b.0));

        // Uniform plotting grid, only up to the terminal time if any.
        let t_stop = earliest.map_or(dense.t_end(), |(t, _)| t);
        while next_grid_t < t_stop {
            if next_grid_t > dense.t_start() {
                samples.push((next_grid_t, unpack(&dense.eval(next_grid_t))));
            }
            next_grid_t += grid_dt;
        }

        match earliest {
            Some((t, 0)) => {
                let st = unpack(&dense.eval(t));
                // Snap the impact exactly onto the wall line.
                let s = wall.coord_of(st.x);
                samples.push((t, PhaseState::new(wall.point(s), st.u)));
                break Terminal::WallHit { s, u_in: st.u };
            }
            Some((t, 1)) => {
                let st = unpack(&dense.eval(t));
                let (index, _) = sys.nearest_centre(st.x);
                samples.push((t, st));
                break Terminal::Collision { index };
            }
            Some((t, _)) => {
                samples.push((t, unpack(&dense.eval(t))));
                break Terminal::Escaped;
            }
            None => {
                samples.push((stepper.t(), unpack(stepper.y())));
            }
        }
    };

    // Keep sample times strictly increasing (grid points may coincide with
    // step ends or the terminal).
    samples.dedup_by(|later, kept| later.0 <= kept.0);
    let mut drift = 0.0f64;
    for &(_, st) in &samples {
        if let Ok(e) = energy_of(sys, &st) {
            drift = drift.max((e - h0).abs() / h0.abs().max(1.0));
        }
    }
    let rays = winding::wall_rays(sys, wall);
    let positions: Vec<V> = samples.iter().map(|&(_, st)| st.x).collect();
    let winding_word = winding::word_of_polyline(&positions, false, &rays, EPS_GEOM).ok();

    Ok(TrajectorySegment { samples, terminal, energy_drift: drift, winding_word })
}

/// Elastic reflection u ↦ u − 2⟨u,w⟩w; preserves ⟨u,v⟩ and |u|.
pub fn reflect(u: V, wall: &Wall<f64>) -> Result<V, DynamicsError> {
    let normal_speed = u.dot(wall.w());
    if normal_speed.abs() < EPS_GEOM {
        return Err(DynamicsError::TangentialImpact { normal_speed });
    }
    Ok(u - wall.w() * (2.0 * normal_speed))
}

/// Tangential-velocity flip fixing the section: (s, u) ↦ (s, u − 2⟨u,v⟩v).
/// Conjugates the billiard map to its inverse.
pub fn reverse(p: &SectionPoint, wall: &Wall<f64>) -> SectionPoint {
    SectionPoint { s: p.s, u: p.u - wall.v() * (2.0 * p.u.dot(wall.v())), h: p.h }
}

/// Result of one application of the billiard map.
#[derive(Debug, Clone)]
pub enum MapOutcome {
    /// First return reached: the reflected section point, with the flight.
    Returns { next: SectionPoint, segment: TrajectorySegment },
    Escaped { segment: TrajectorySegment },
    Collision { segment: TrajectorySegment, index: usize },
}

impl MapOutcome {
    #[inline]
    pub fn segment(&self) -> &TrajectorySegment {
        match self {
            MapOutcome::Returns { segment, .. }
            | MapOutcome::Escaped { segment }
            | MapOutcome::Collision { segment, .. } => segment,
        }
    }

    #[inline]
    pub fn returned(&self) -> Option<&SectionPoint> {
        match self {
            MapOutcome::Returns { next, .. } => Some(next),
            _ => None,
        }
    }
}

/// The first-return billiard map Φ on the wall section: flight to the next
/// impact, then elastic reflection.
pub fn billiard_map(
    sys: &CentreSystem<f64>,
    wall: &Wall<f64>,
    p: &SectionPoint,
    opts: &IntegrateOpts,
) -> Result<MapOutcome, DynamicsError> {
    let segment = integrate_to_wall(sys, wall, p.state(wall), opts)?;
    match segment.terminal {
        Terminal::WallHit { s, u_in } => {
            let u_out = reflect(u_in, wall)?;
            let next = SectionPoint::new(sys, wall, s, u_out)?;
            Ok(MapOutcome::Returns { next, segment })
        }
        Terminal::Escaped => Ok(MapOutcome::Escaped { segment }),
        Terminal::Collision { index } => Ok(MapOutcome::Collision { segment, index }),
    }
}

/// Reduced cut-ray crossing word of a segment's sampled polyline; errors if
/// any sample is too close to a ray for the count to be sampling-stable.
pub fn winding_word(
    segment: &TrajectorySegment,
    sys: &CentreSystem<f64>,
    wall: &Wall<f64>,
) -> Result<WindingWord, DynamicsError> {
    let rays = winding::wall_rays(sys, wall);
    Ok(winding::word_of_polyline(&segment.positions(), false, &rays, EPS_GEOM)?)
}
