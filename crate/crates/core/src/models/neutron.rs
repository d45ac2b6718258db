//! Neutron transport in a bounded convex planar domain.
//!
//! The particle moves at unit speed along straight lines; its direction is
//! redrawn uniformly on the unit circle at the epochs of a rate-`λ` Poisson
//! clock, and it is killed the first time it leaves the domain. One kernel
//! step simulates one unit of time exactly: waiting times are drawn, each
//! straight segment is intersected with the boundary in closed form, and no
//! time discretization is involved.

use std::f64::consts::{FRAC_PI_4, TAU};

use rand::Rng;
use rand_distr::{Distribution as _, Exp};

use crate::kernel::{AbsorbedKernel, Binning, StateSpace, StepOutcome};
use crate::models::ModelError;

pub type Point = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeutronState {
    pub x: Point,
    /// Unit velocity.
    pub v: Point,
}

impl NeutronState {
    pub fn new(x: Point, v: Point) -> Self {
        NeutronState { x, v }
    }

    pub fn with_angle(x: Point, angle: f64) -> Self {
        NeutronState { x, v: [angle.cos(), angle.sin()] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct HalfPlane {
    normal: Point,
    offset: f64,
}

/// Open convex domains; both variants satisfy the interior cone condition.
#[derive(Debug, Clone, PartialEq)]
pub enum NeutronDomain {
    /// Disk of the given radius centred at the origin.
    Disk { radius: f64 },
    ConvexPolygon(ConvexPolygon),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexPolygon {
    vertices: Vec<Point>,
    planes: Vec<HalfPlane>,
}

impl ConvexPolygon {
    /// Vertices in counterclockwise order; the polygon must be strictly convex.
    pub fn new(vertices: Vec<Point>) -> Result<Self, ModelError> {
        let n = vertices.len();
        if n < 3 {
            return Err(ModelError::InvalidSpec(format!("polygon needs at least 3 vertices, got {n}")));
        }
        if vertices.iter().flatten().any(|c| !c.is_finite()) {
            return Err(ModelError::InvalidSpec("polygon vertices must be finite".into()));
        }
        let mut planes = Vec::with_capacity(n);
        for k in 0..n {
            let a = vertices[k];
            let b = vertices[(k + 1) % n];
            let c = vertices[(k + 2) % n];
            let e = [b[0] - a[0], b[1] - a[1]];
            let f = [c[0] - b[0], c[1] - b[1]];
            let turn = e[0] * f[1] - e[1] * f[0];
            if turn <= 0.0 {
                return Err(ModelError::InvalidSpec(format!(
                    "polygon is not strictly convex and counterclockwise at vertex {}",
                    (k + 1) % n
                )));
            }
            let len = e[0].hypot(e[1]);
            let normal = [e[1] / len, -e[0] / len];
            planes.push(HalfPlane { normal, offset: dot(normal, a) });
        }
        // Winding number check: a star-shaped self-intersecting loop turns left
        // everywhere but wraps more than once.
        let total_angle: f64 = (0..n)
            .map(|k| {
                let p = planes[k].normal;
                let q = planes[(k + 1) % n].normal;
                (p[0] * q[1] - p[1] * q[0]).atan2(dot(p, q))
            })
            .sum();
        if (total_angle - TAU).abs() > 1e-6 {
            return Err(ModelError::InvalidSpec("polygon boundary winds more than once".into()));
        }
        Ok(ConvexPolygon { vertices, planes })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }
}

fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

impl NeutronDomain {
    pub fn disk(radius: f64) -> Result<Self, ModelError> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(ModelError::InvalidSpec(format!("disk radius must be positive, got {radius}")));
        }
        Ok(NeutronDomain::Disk { radius })
    }

    pub fn polygon(vertices: Vec<Point>) -> Result<Self, ModelError> {
        ConvexPolygon::new(vertices).map(NeutronDomain::ConvexPolygon)
    }

    /// Strict interior test.
    pub fn contains(&self, p: Point) -> bool {
        match self {
            NeutronDomain::Disk { radius } => dot(p, p) < radius * radius,
            NeutronDomain::ConvexPolygon(poly) => {
                poly.planes.iter().all(|h| dot(h.normal, p) < h.offset)
            }
        }
    }

    /// Time for the ray `x + t v` (x inside, `v` unit) to reach the boundary.
    pub fn exit_time(&self, x: Point, v: Point) -> f64 {
        match self {
            NeutronDomain::Disk { radius } => {
                // |x + t v|² = r²  with  c = |x|² - r² < 0.
                let b = dot(x, v);
                let c = dot(x, x) - radius * radius;
                let disc = (b * b - c).max(0.0).sqrt();
                if b > 0.0 {
                    -c / (b + disc)
                } else {
                    disc - b
                }
            }
            NeutronDomain::ConvexPolygon(poly) => poly
                .planes
                .iter()
                .filter_map(|h| {
                    let rate = dot(h.normal, v);
                    (rate > 0.0).then(|| ((h.offset - dot(h.normal, x)) / rate).max(0.0))
                })
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// Axis-aligned bounding box `(min, max)`.
    pub fn bounding_box(&self) -> (Point, Point) {
        match self {
            NeutronDomain::Disk { radius } => ([-radius, -radius], [*radius, *radius]),
            NeutronDomain::ConvexPolygon(poly) => {
                let mut lo = [f64::INFINITY; 2];
                let mut hi = [f64::NEG_INFINITY; 2];
                for v in &poly.vertices {
                    for k in 0..2 {
                        lo[k] = lo[k].min(v[k]);
                        hi[k] = hi[k].max(v[k]);
                    }
                }
                (lo, hi)
            }
        }
    }

    pub fn diameter(&self) -> f64 {
        match self {
            NeutronDomain::Disk { radius } => 2.0 * radius,
            NeutronDomain::ConvexPolygon(poly) => {
                let mut d: f64 = 0.0;
                for a in &poly.vertices {
                    for b in &poly.vertices {
                        d = d.max((a[0] - b[0]).hypot(a[1] - b[1]));
                    }
                }
                d
            }
        }
    }
}

/// Source of the two random ingredients of a transport path.
pub(crate) trait TransportDraws {
    fn waiting_time(&mut self) -> f64;
    fn direction(&mut self) -> Point;
}

struct RngDraws<'a, R: ?Sized> {
    rng: &'a mut R,
    clock: Exp<f64>,
}

impl<R: Rng + ?Sized> TransportDraws for RngDraws<'_, R> {
    fn waiting_time(&mut self) -> f64 {
        self.clock.sample(self.rng)
    }

    fn direction(&mut self) -> Point {
        let theta = TAU * self.rng.random::<f64>();
        [theta.cos(), theta.sin()]
    }
}

/// Outcome of one unit of time plus the length of the path actually travelled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracedStep {
    pub outcome: StepOutcome<NeutronState>,
    /// Sum of straight segment lengths, up to the exit point when absorbed.
    pub path_length: f64,
    pub direction_changes: usize,
}

pub(crate) fn evolve<D: TransportDraws + ?Sized>(
    state: &NeutronState,
    domain: &NeutronDomain,
    draws: &mut D,
) -> TracedStep {
    let mut x = state.x;
    let mut v = state.v;
    let mut remaining = 1.0f64;
    let mut path_length = 0.0;
    let mut direction_changes = 0;
    loop {
        let wait = draws.waiting_time();
        let last = wait >= remaining;
        let seg = if last { remaining } else { wait };
        let exit = domain.exit_time(x, v);
        // A boundary hit exactly at the end of the segment counts as an exit.
        if exit <= seg {
            return TracedStep {
                outcome: StepOutcome::Absorbed,
                path_length: path_length + exit,
                direction_changes,
            };
        }
        let next = [x[0] + seg * v[0], x[1] + seg * v[1]];
        path_length += (next[0] - x[0]).hypot(next[1] - x[1]);
        x = next;
        if !domain.contains(x) {
            // Round-off put the endpoint on the boundary.
            return TracedStep { outcome: StepOutcome::Absorbed, path_length, direction_changes };
        }
        if last {
            return TracedStep {
                outcome: StepOutcome::Alive(NeutronState { x, v }),
                path_length,
                direction_changes,
            };
        }
        remaining -= seg;
        v = draws.direction();
        direction_changes += 1;
    }
}

fn check_step_inputs(state: &NeutronState, domain: &NeutronDomain, lambda: f64) -> Result<Exp<f64>, ModelError> {
    if !domain.contains(state.x) {
        return Err(ModelError::Usage(format!("position {:?} is not inside the domain", state.x)));
    }
    let norm = state.v[0].hypot(state.v[1]);
    if (norm - 1.0).abs() > 1e-12 {
        return Err(ModelError::Usage(format!("velocity {:?} is not a unit vector", state.v)));
    }
    Exp::new(lambda)
        .ok()
        .filter(|_| lambda > 0.0 && lambda.is_finite())
        .ok_or_else(|| ModelError::Usage(format!("jump rate must be positive, got {lambda}")))
}

/// Simulates one unit of time of the transport process from `state`.
pub fn neutron_step<R: Rng + ?Sized>(
    state: &NeutronState,
    domain: &NeutronDomain,
    lambda: f64,
    rng: &mut R,
) -> Result<StepOutcome<NeutronState>, ModelError> {
    neutron_step_traced(state, domain, lambda, rng).map(|t| t.outcome)
}

pub fn neutron_step_traced<R: Rng + ?Sized>(
    state: &NeutronState,
    domain: &NeutronDomain,
    lambda: f64,
    rng: &mut R,
) -> Result<TracedStep, ModelError> {
    let clock = check_step_inputs(state, domain, lambda)?;
    Ok(evolve(state, domain, &mut RngDraws { rng, clock }))
}

/// Spatial histogram over the domain's bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeutronBinning {
    min: Point,
    max: Point,
    grid_n: usize,
    velocity_octants: bool,
}

/// `grid_n × grid_n` row-major cells over the bounding box (row = y, column = x),
/// optionally refined by the octant of the velocity angle.
pub fn neutron_binning(
    domain: &NeutronDomain,
    grid_n: usize,
    velocity_octants: bool,
) -> Result<NeutronBinning, ModelError> {
    if grid_n < 2 {
        return Err(ModelError::InvalidSpec(format!("grid must be at least 2x2, got {grid_n}")));
    }
    let (min, max) = domain.bounding_box();
    Ok(NeutronBinning { min, max, grid_n, velocity_octants })
}

impl NeutronBinning {
    pub fn grid_n(&self) -> usize {
        self.grid_n
    }

    pub fn velocity_octants(&self) -> bool {
        self.velocity_octants
    }

    fn axis_cell(&self, k: usize, coord: f64) -> Option<usize> {
        let (lo, hi) = (self.min[k], self.max[k]);
        if !(coord >= lo && coord <= hi) {
            return None;
        }
        let cell = ((coord - lo) / (hi - lo) * self.grid_n as f64).floor() as usize;
        Some(cell.min(self.grid_n - 1))
    }

    pub fn cell_of(&self, p: Point) -> Option<usize> {
        let col = self.axis_cell(0, p[0])?;
        let row = self.axis_cell(1, p[1])?;
        Some(row * self.grid_n + col)
    }

    /// `[x0, x1] × [y0, y1]` bounds of a spatial cell.
    pub fn cell_bounds(&self, cell: usize) -> (Point, Point) {
        let (row, col) = (cell / self.grid_n, cell % self.grid_n);
        let w = (self.max[0] - self.min[0]) / self.grid_n as f64;
        let h = (self.max[1] - self.min[1]) / self.grid_n as f64;
        let lo = [self.min[0] + col as f64 * w, self.min[1] + row as f64 * h];
        (lo, [lo[0] + w, lo[1] + h])
    }
}

fn octant(v: Point) -> usize {
    let angle = v[1].atan2(v[0]).rem_euclid(TAU);
    ((angle / FRAC_PI_4) as usize).min(7)
}

impl Binning<NeutronState> for NeutronBinning {
    fn num_bins(&self) -> usize {
        let cells = self.grid_n * self.grid_n;
        if self.velocity_octants {
            cells * 8
        } else {
            cells
        }
    }

    fn bin_of(&self, state: &NeutronState) -> Option<usize> {
        let cell = self.cell_of(state.x)?;
        Some(if self.velocity_octants { cell * 8 + octant(state.v) } else { cell })
    }
}

/// The transport process as an absorbed kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct NeutronKernel {
    domain: NeutronDomain,
    lambda: f64,
    clock: Exp<f64>,
    binning: NeutronBinning,
}

impl NeutronKernel {
    pub fn new(domain: NeutronDomain, lambda: f64, binning: NeutronBinning) -> Result<Self, ModelError> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(ModelError::InvalidSpec(format!("jump rate must be positive, got {lambda}")));
        }
        let clock = Exp::new(lambda).map_err(|e| ModelError::InvalidSpec(e.to_string()))?;
        Ok(NeutronKernel { domain, lambda, clock, binning })
    }

    pub fn domain(&self) -> &NeutronDomain {
        &self.domain
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn step_traced<R: Rng + ?Sized>(&self, state: &NeutronState, rng: &mut R) -> TracedStep {
        evolve(state, &self.domain, &mut RngDraws { rng, clock: self.clock })
    }
}

impl AbsorbedKernel for NeutronKernel {
    type State = NeutronState;
    type Bins = NeutronBinning;

    fn sample_step<R: Rng + ?Sized>(&self, state: &NeutronState, rng: &mut R) -> StepOutcome<NeutronState> {
        // Survival over one unit of time has positive probability from any
        // interior point: the clock can ring before each exit time, as often
        // as needed, with new directions that keep the path inside D.
        debug_assert!(self.domain.contains(state.x));
        self.step_traced(state, rng).outcome
    }

    fn state_space(&self) -> StateSpace {
        StateSpace::Binned { bins: self.binning.num_bins() }
    }

    fn binning(&self) -> NeutronBinning {
        self.binning
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Replays scripted waiting times and direction angles.
    struct Scripted {
        waits: Vec<f64>,
        angles: Vec<f64>,
    }

    impl TransportDraws for Scripted {
        fn waiting_time(&mut self) -> f64 {
            self.waits.remove(0)
        }

        fn direction(&mut self) -> Point {
            let a = self.angles.remove(0);
            [a.cos(), a.sin()]
        }
    }

    fn unit_disk() -> NeutronDomain {
        NeutronDomain::disk(1.0).unwrap()
    }

    #[test]
    fn straight_path_to_the_boundary_at_unit_time_is_absorbed() {
        let s = NeutronState::new([0.0, 0.0], [1.0, 0.0]);
        let t = evolve(&s, &unit_disk(), &mut Scripted { waits: vec![5.0], angles: vec![] });
        assert!(t.outcome.is_absorbed());
        assert!((t.path_length - 1.0).abs() < 1e-15);
    }

    #[test]
    fn straight_motion_for_half_a_unit() {
        let s = NeutronState::new([0.0, 0.0], [1.0, 0.0]);
        // Jump at 0.5 turns the particle straight up: (0.5, 0) then (0.5, 0.5).
        let t = evolve(
            &s,
            &unit_disk(),
            &mut Scripted { waits: vec![0.5, 3.0], angles: vec![std::f64::consts::FRAC_PI_2] },
        );
        let end = t.outcome.alive().unwrap();
        assert!((end.x[0] - 0.5).abs() < 1e-15 && (end.x[1] - 0.5).abs() < 1e-15);
        assert_eq!(t.direction_changes, 1);
        assert!(unit_disk().contains([0.5, 0.0]));
    }

    #[test]
    fn exit_time_from_half_radius() {
        assert!((unit_disk().exit_time([0.5, 0.0], [1.0, 0.0]) - 0.5).abs() < 1e-15);
        assert!((unit_disk().exit_time([0.5, 0.0], [-1.0, 0.0]) - 1.5).abs() < 1e-15);
        let t = evolve(
            &NeutronState::new([0.5, 0.0], [1.0, 0.0]),
            &unit_disk(),
            &mut Scripted { waits: vec![2.0], angles: vec![] },
        );
        assert!(t.outcome.is_absorbed());
        assert!((t.path_length - 0.5).abs() < 1e-15);
    }

    #[test]
    fn polygon_exit_times() {
        let square = NeutronDomain::polygon(vec![[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]]).unwrap();
        assert!((square.exit_time([0.0, 0.0], [1.0, 0.0]) - 1.0).abs() < 1e-15);
        let d = std::f64::consts::FRAC_1_SQRT_2;
        assert!((square.exit_time([0.0, 0.0], [d, d]) - 2f64.sqrt()).abs() < 1e-12);
        assert!(square.contains([0.999, -0.999]));
        assert!(!square.contains([1.0, 0.0]));
        assert_eq!(square.bounding_box(), ([-1.0, -1.0], [1.0, 1.0]));
    }

    #[test]
    fn polygon_validation() {
        assert!(NeutronDomain::polygon(vec![[0.0, 0.0], [1.0, 0.0]]).is_err());
        // Clockwise.
        assert!(NeutronDomain::polygon(vec![[0.0, 0.0], [0.0, 1.0], [1.0, 0.0]]).is_err());
        // Collinear vertex.
        assert!(NeutronDomain::polygon(vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [1.0, 1.0]]).is_err());
        // Pentagram: turns left everywhere but winds twice.
        let star: Vec<Point> = (0..5)
            .map(|k| {
                let a = TAU * (2 * k) as f64 / 5.0;
                [a.cos(), a.sin()]
            })
            .collect();
        assert!(NeutronDomain::polygon(star).is_err());
    }

    #[test]
    fn step_rejects_outside_starts() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = NeutronState::new([1.0, 0.0], [1.0, 0.0]);
        assert!(matches!(neutron_step(&s, &unit_disk(), 1.0, &mut rng), Err(ModelError::Usage(_))));
        let s = NeutronState::new([0.0, 0.0], [2.0, 0.0]);
        assert!(neutron_step(&s, &unit_disk(), 1.0, &mut rng).is_err());
        let s = NeutronState::new([0.0, 0.0], [1.0, 0.0]);
        assert!(neutron_step(&s, &unit_disk(), 0.0, &mut rng).is_err());
    }

    #[test]
    fn path_length_is_elapsed_time_and_outputs_stay_inside() {
        let domains = [
            unit_disk(),
            NeutronDomain::polygon(vec![[0.0, 0.0], [2.0, 0.0], [2.5, 1.0], [1.0, 2.0], [-0.5, 1.0]]).unwrap(),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for domain in &domains {
            let start = match domain {
                NeutronDomain::Disk { .. } => [0.1, -0.2],
                _ => [1.0, 1.0],
            };
            let mut alive = 0;
            for _ in 0..20_000 {
                let angle = TAU * rng.random::<f64>();
                let t = neutron_step_traced(&NeutronState::with_angle(start, angle), domain, 3.0, &mut rng).unwrap();
                match t.outcome {
                    StepOutcome::Alive(s) => {
                        alive += 1;
                        assert!((t.path_length - 1.0).abs() < 1e-9, "{}", t.path_length);
                        assert!(domain.contains(s.x));
                        assert!((s.v[0].hypot(s.v[1]) - 1.0).abs() < 1e-12);
                    }
                    StepOutcome::Absorbed => assert!(t.path_length <= 1.0 + 1e-12),
                }
            }
            assert!(alive > 100);
        }
    }

    /// Rotates every drawn direction by a fixed angle.
    struct Rotated<D> {
        inner: D,
        angle: f64,
    }

    impl<D: TransportDraws> TransportDraws for Rotated<D> {
        fn waiting_time(&mut self) -> f64 {
            self.inner.waiting_time()
        }

        fn direction(&mut self) -> Point {
            rotate(self.inner.direction(), self.angle)
        }
    }

    fn rotate(p: Point, a: f64) -> Point {
        let (s, c) = a.sin_cos();
        [c * p[0] - s * p[1], s * p[0] + c * p[1]]
    }

    #[test]
    fn rotation_commutes_with_the_disk_step() {
        let domain = unit_disk();
        let mut seeds = ChaCha8Rng::seed_from_u64(5);
        for case in 0..500 {
            let seed: u64 = seeds.random();
            let angle = TAU * seeds.random::<f64>();
            let x = [0.6 * seeds.random::<f64>() - 0.3, 0.6 * seeds.random::<f64>() - 0.3];
            let state = NeutronState::with_angle(x, TAU * seeds.random::<f64>());
            let clock = Exp::new(2.0).unwrap();

            let mut rng_a = ChaCha8Rng::seed_from_u64(seed);
            let plain = evolve(&state, &domain, &mut RngDraws { rng: &mut rng_a, clock });

            let mut rng_b = ChaCha8Rng::seed_from_u64(seed);
            let rotated_state = NeutronState::new(rotate(state.x, angle), rotate(state.v, angle));
            let rotated = evolve(
                &rotated_state,
                &domain,
                &mut Rotated { inner: RngDraws { rng: &mut rng_b, clock }, angle },
            );

            match (plain.outcome, rotated.outcome) {
                (StepOutcome::Alive(a), StepOutcome::Alive(b)) => {
                    let ra = rotate(a.x, angle);
                    assert!((ra[0] - b.x[0]).abs() < 1e-9 && (ra[1] - b.x[1]).abs() < 1e-9, "case {case}");
                    let rv = rotate(a.v, angle);
                    assert!((rv[0] - b.v[0]).abs() < 1e-9 && (rv[1] - b.v[1]).abs() < 1e-9);
                }
                (StepOutcome::Absorbed, StepOutcome::Absorbed) => {
                    assert!((plain.path_length - rotated.path_length).abs() < 1e-9)
                }
                _ => panic!("case {case}: outcomes differ"),
            }
        }
    }

    #[test]
    fn binning_cells() {
        let b = neutron_binning(&unit_disk(), 2, false).unwrap();
        assert_eq!(b.cell_of([0.5, 0.5]), Some(3));
        assert_eq!(b.cell_of([-0.5, 0.5]), Some(2));
        assert_eq!(b.cell_of([0.5, -0.5]), Some(1));
        assert_eq!(b.cell_of([2.0, 0.0]), None);
        let odd = neutron_binning(&unit_disk(), 3, false).unwrap();
        assert_eq!(odd.cell_of([0.0, 0.0]), Some(4));
        assert!(neutron_binning(&unit_disk(), 1, false).is_err());
    }

    #[test]
    fn octant_refinement() {
        let b = neutron_binning(&unit_disk(), 2, true).unwrap();
        assert_eq!(b.num_bins(), 32);
        let s = NeutronState::with_angle([0.5, 0.5], 3.0 * FRAC_PI_4 + 0.1);
        assert_eq!(b.bin_of(&s), Some(3 * 8 + 3));
        let s = NeutronState::with_angle([0.5, 0.5], -0.1);
        assert_eq!(b.bin_of(&s), Some(3 * 8 + 7));
    }
}
