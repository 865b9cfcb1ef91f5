//! Geometric primitives: convex bodies, projections, detour arcs around
//! obstacles, set distances and a voxel geodesic oracle.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, SQRT_2};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

pub type Point3 = Vector3<f64>;
pub type Vec3 = Vector3<f64>;

const ORTHO_TOL: f64 = 1e-12;
const PROJ_TOL: f64 = 1e-12;
const PROJ_MAX_ITER: usize = 200;

fn finite(p: &Point3) -> bool {
    p.iter().all(|c| c.is_finite())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BallSpec {
    pub center: Point3,
    pub radius: f64,
}

impl BallSpec {
    pub fn new(center: Point3, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) || !finite(&center) {
            return domain(format!("ball radius must be positive and finite, got {radius}"));
        }
        Ok(Self { center, radius })
    }

    pub fn signed_distance(&self, x: &Point3) -> f64 {
        (x - self.center).norm() - self.radius
    }

    pub fn contains(&self, x: &Point3) -> bool {
        (x - self.center).norm() <= self.radius
    }

    pub fn diameter(&self) -> f64 {
        2.0 * self.radius
    }

    pub fn as_body(&self) -> ConvexBodySpec {
        ConvexBodySpec::ball(self.center, self.radius).expect("validated ball")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BodyKind {
    Ball,
    Ellipsoid,
}

/// A ball or an ellipsoid. The columns of `orientation` are the body axes
/// expressed in world coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BodyRepr", into = "BodyRepr")]
pub struct ConvexBodySpec {
    kind: BodyKind,
    center: Point3,
    semi_axes: [f64; 3],
    orientation: Matrix3<f64>,
}

#[derive(Serialize, Deserialize)]
struct BodyRepr {
    kind: BodyKind,
    center: [f64; 3],
    #[serde(default)]
    radius: Option<f64>,
    #[serde(default)]
    semi_axes: Option<[f64; 3]>,
    /// Row-major rotation matrix.
    #[serde(default)]
    orientation: Option<[[f64; 3]; 3]>,
}

impl TryFrom<BodyRepr> for ConvexBodySpec {
    type Error = Error;

    fn try_from(r: BodyRepr) -> Result<Self> {
        let center = Point3::from(r.center);
        match r.kind {
            BodyKind::Ball => {
                let radius = match (r.radius, r.semi_axes) {
                    (Some(rad), _) => rad,
                    (None, Some(a)) if a[0] == a[1] && a[1] == a[2] => a[0],
                    _ => return domain("ball needs a radius"),
                };
                ConvexBodySpec::ball(center, radius)
            }
            BodyKind::Ellipsoid => {
                let axes = r.semi_axes.ok_or_else(|| Error::Domain("ellipsoid needs semi_axes".into()))?;
                let rot = match r.orientation {
                    Some(m) => Matrix3::from_fn(|i, j| m[i][j]),
                    None => Matrix3::identity(),
                };
                ConvexBodySpec::ellipsoid(center, axes, rot)
            }
        }
    }
}

impl From<ConvexBodySpec> for BodyRepr {
    fn from(b: ConvexBodySpec) -> Self {
        let c = [b.center.x, b.center.y, b.center.z];
        match b.kind {
            BodyKind::Ball => {
                BodyRepr { kind: BodyKind::Ball, center: c, radius: Some(b.semi_axes[0]), semi_axes: None, orientation: None }
            }
            BodyKind::Ellipsoid => {
                let m = b.orientation;
                BodyRepr {
                    kind: BodyKind::Ellipsoid,
                    center: c,
                    radius: None,
                    semi_axes: Some(b.semi_axes),
                    orientation: Some(std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)]))),
                }
            }
        }
    }
}

impl ConvexBodySpec {
    pub fn ball(center: Point3, radius: f64) -> Result<Self> {
        BallSpec::new(center, radius)?;
        Ok(Self { kind: BodyKind::Ball, center, semi_axes: [radius; 3], orientation: Matrix3::identity() })
    }

    pub fn ellipsoid(center: Point3, semi_axes: [f64; 3], orientation: Matrix3<f64>) -> Result<Self> {
        if !finite(&center) {
            return domain("ellipsoid center must be finite");
        }
        if semi_axes.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
            return domain(format!("semi-axes must be positive, got {semi_axes:?}"));
        }
        let gram = orientation.transpose() * orientation;
        if (gram - Matrix3::identity()).amax() > ORTHO_TOL {
            return domain("orientation is not orthonormal");
        }
        if orientation.determinant() <= 0.0 {
            return domain("orientation must be a proper rotation");
        }
        Ok(Self { kind: BodyKind::Ellipsoid, center, semi_axes, orientation })
    }

    pub fn kind(&self) -> BodyKind {
        self.kind
    }

    pub fn center(&self) -> Point3 {
        self.center
    }

    pub fn semi_axes(&self) -> [f64; 3] {
        self.semi_axes
    }

    pub fn orientation(&self) -> &Matrix3<f64> {
        &self.orientation
    }

    fn to_local(&self, x: &Point3) -> Vec3 {
        self.orientation.tr_mul(&(x - self.center))
    }

    fn to_world(&self, q: &Vec3) -> Point3 {
        self.center + self.orientation * q
    }

    /// Implicit function Σ(xᵢ/aᵢ)²; the body is its sublevel set at 1.
    pub fn level(&self, x: &Point3) -> f64 {
        let l = self.to_local(x);
        (0..3).map(|i| (l[i] / self.semi_axes[i]).powi(2)).sum()
    }

    pub fn contains(&self, x: &Point3) -> bool {
        match self.kind {
            BodyKind::Ball => (x - self.center).norm() <= self.semi_axes[0],
            BodyKind::Ellipsoid => self.level(x) <= 1.0,
        }
    }

    /// Half extents of the axis-aligned bounding box.
    pub fn half_extents(&self) -> Vec3 {
        Vec3::from_fn(|k, _| (0..3).map(|i| (self.orientation[(k, i)] * self.semi_axes[i]).powi(2)).sum::<f64>().sqrt())
    }

    pub fn aabb(&self) -> (Point3, Point3) {
        let e = self.half_extents();
        (self.center - e, self.center + e)
    }

    /// Closest surface point in local coordinates, valid on both sides of
    /// the surface.
    fn closest_local(&self, y: &Vec3) -> Result<Vec3> {
        let a = self.semi_axes;
        let f = |lam: f64| -> (f64, f64) {
            let mut v = -1.0;
            let mut dv = 0.0;
            for i in 0..3 {
                let d = a[i] * a[i] + lam;
                let t = a[i] * y[i] / d;
                v += t * t;
                dv -= 2.0 * t * t / d;
            }
            (v, dv)
        };
        let (f0, _) = f(0.0);
        if f0 == 0.0 {
            return Ok(*y);
        }
        let amin2 = a.iter().fold(f64::INFINITY, |m, v| m.min(v * v));
        let (mut lo, mut hi) = if f0 > 0.0 {
            let amax = a.iter().fold(0.0f64, |m, v| m.max(*v));
            (0.0, amax * y.norm())
        } else {
            let lo = -amin2 * (1.0 - 1e-12);
            if f(lo).0 <= 0.0 {
                return Ok(self.closest_local_degenerate(y));
            }
            (lo, 0.0)
        };
        let mut lam = if f0 > 0.0 { lo } else { hi };
        let mut converged = false;
        for _ in 0..PROJ_MAX_ITER {
            let (v, dv) = f(lam);
            if v.abs() <= PROJ_TOL {
                converged = true;
                break;
            }
            if v > 0.0 {
                lo = lam;
            } else {
                hi = lam;
            }
            let mut next = lam - v / dv;
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - lam).abs() <= 1e-15 * (1.0 + lam.abs()) {
                lam = next;
                converged = true;
                break;
            }
            lam = next;
        }
        if !converged {
            return Err(Error::Solver("ellipsoid projection did not converge".into()));
        }
        Ok(Vec3::from_fn(|i, _| a[i] * a[i] * y[i] / (a[i] * a[i] + lam)))
    }

    /// Interior point whose nearest surface point lies off the minor axis
    /// plane: the secular function has no pole at the smallest axis.
    fn closest_local_degenerate(&self, y: &Vec3) -> Vec3 {
        let a = self.semi_axes;
        let k = (0..3).min_by(|&i, &j| a[i].partial_cmp(&a[j]).unwrap()).unwrap();
        let ak2 = a[k] * a[k];
        let mut q = Vec3::zeros();
        let mut s = 0.0;
        for i in 0..3 {
            if i != k {
                let d = a[i] * a[i] - ak2;
                q[i] = if d > 0.0 { a[i] * a[i] * y[i] / d } else { y[i] };
                s += (q[i] / a[i]).powi(2);
            }
        }
        let mag = a[k] * (1.0 - s).max(0.0).sqrt();
        q[k] = if y[k] < 0.0 { -mag } else { mag };
        q
    }

    /// Signed distance to the surface: positive outside, negative inside.
    pub fn signed_distance(&self, x: &Point3) -> f64 {
        match self.kind {
            BodyKind::Ball => (x - self.center).norm() - self.semi_axes[0],
            BodyKind::Ellipsoid => {
                let y = self.to_local(x);
                let inside = self.level(x) <= 1.0;
                match self.closest_local(&y) {
                    Ok(q) => {
                        let d = (y - q).norm();
                        if inside {
                            -d
                        } else {
                            d
                        }
                    }
                    // Fallback bound by the minor axis scaling.
                    Err(_) => {
                        let amin = self.semi_axes.iter().cloned().fold(f64::INFINITY, f64::min);
                        (self.level(x).sqrt() - 1.0) * amin
                    }
                }
            }
        }
    }

    /// Outward unit normal at a surface point.
    pub fn normal_at(&self, q: &Point3) -> Vec3 {
        match self.kind {
            BodyKind::Ball => (q - self.center).normalize(),
            BodyKind::Ellipsoid => {
                let l = self.to_local(q);
                let g = Vec3::from_fn(|i, _| l[i] / (self.semi_axes[i] * self.semi_axes[i]));
                (self.orientation * g).normalize()
            }
        }
    }

    /// Nearest point on the surface and the outward normal there.
    pub fn project(&self, x: &Point3) -> Result<(Point3, Vec3)> {
        if !finite(x) {
            return domain("point must be finite");
        }
        match self.kind {
            BodyKind::Ball => {
                let d = x - self.center;
                let r = d.norm();
                if r <= self.semi_axes[0] {
                    return domain(format!("point {x:?} is not strictly outside the body"));
                }
                let nu = d / r;
                Ok((self.center + self.semi_axes[0] * nu, nu))
            }
            BodyKind::Ellipsoid => {
                if self.level(x) <= 1.0 {
                    return domain(format!("point {x:?} is not strictly outside the body"));
                }
                let q = self.to_world(&self.closest_local(&self.to_local(x))?);
                let nu = self.normal_at(&q);
                Ok((q, nu))
            }
        }
    }
}

/// Scene: the known obstacle, the optional unknown obstacle, and the source ball.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub d0_bodies: Vec<ConvexBodySpec>,
    #[serde(default)]
    pub d_bodies: Vec<ConvexBodySpec>,
    pub source: BallSpec,
    pub g_amplitude: f64,
}

impl SceneSpec {
    /// Checks the standing assumptions: closures pairwise disjoint with
    /// positive gaps.
    pub fn validate(&self) -> Result<()> {
        BallSpec::new(self.source.center, self.source.radius)?;
        if !(self.g_amplitude > 0.0 && self.g_amplitude.is_finite()) {
            return domain("g_amplitude must be positive");
        }
        let b = [self.source.as_body()];
        let named: Vec<(&str, &[ConvexBodySpec])> = vec![("B", &b[..]), ("D0", &self.d0_bodies), ("D", &self.d_bodies)];
        for (i, (na, a)) in named.iter().enumerate() {
            for (nb, b) in named.iter().skip(i + 1) {
                let g = dist_sets(a, b);
                if g <= 0.0 {
                    return domain(format!("closures of {na} and {nb} intersect (gap {g})"));
                }
            }
        }
        for (name, set) in [("D0", &self.d0_bodies), ("D", &self.d_bodies)] {
            for i in 0..set.len() {
                for j in i + 1..set.len() {
                    if body_distance(&set[i], &set[j]) <= 0.0 {
                        return domain(format!("components {i} and {j} of {name} intersect"));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn signed_distance_d0(&self, x: &Point3) -> f64 {
        self.d0_bodies.iter().map(|b| b.signed_distance(x)).fold(f64::INFINITY, f64::min)
    }

    pub fn has_d(&self) -> bool {
        !self.d_bodies.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DetourKind {
    Ball,
    Convex { alpha: f64 },
}

pub fn detour_constant(kind: DetourKind) -> Result<f64> {
    match kind {
        DetourKind::Ball => Ok(SQRT_2 * (FRAC_PI_4 * FRAC_PI_4 + 1.0).sqrt()),
        DetourKind::Convex { alpha } => {
            check_alpha(alpha)?;
            Ok(SQRT_2 / (1.0 + alpha))
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > -1.0 && alpha <= 0.0 {
        Ok(())
    } else {
        domain(format!("alpha must lie in ]-1, 0], got {alpha}"))
    }
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

/// Quasi-uniform points filling a ball (Halton sequence, center first).
pub fn ball_samples(b: &BallSpec, n: usize) -> Vec<Point3> {
    let mut pts = Vec::with_capacity(n);
    if n == 0 {
        return pts;
    }
    pts.push(b.center);
    let mut i = 1u64;
    while pts.len() < n {
        let u = radical_inverse(i, 2);
        let z = 1.0 - 2.0 * radical_inverse(i, 3);
        let phi = 2.0 * PI * radical_inverse(i, 5);
        let s = (1.0 - z * z).max(0.0).sqrt();
        let r = b.radius * u.cbrt();
        pts.push(b.center + r * Vec3::new(s * phi.cos(), s * phi.sin(), z));
        i += 1;
    }
    pts
}

/// Sampled membership of `x` in the cone region V_α(B; d0).
pub fn cone_contains(alpha: f64, d0: &ConvexBodySpec, b: &BallSpec, x: &Point3, n_samples: usize) -> Result<bool> {
    let (_, nx) = d0.project(x)?;
    for y in ball_samples(b, n_samples.max(1)) {
        let (_, ny) = d0.project(&y)?;
        if nx.dot(&ny) < alpha {
            return Ok(false);
        }
    }
    Ok(true)
}

#[derive(Clone, Debug, PartialEq)]
pub enum ArcPiece {
    Segment {
        from: Point3,
        to: Point3,
    },
    /// Arc of the circle `center + radius (cos θ start + sin θ dir)`,
    /// θ ∈ [0, angle]; `start` and `dir` are orthonormal.
    GreatCircle {
        center: Point3,
        radius: f64,
        start: Vec3,
        dir: Vec3,
        angle: f64,
    },
}

impl ArcPiece {
    pub fn length(&self) -> f64 {
        match self {
            ArcPiece::Segment { from, to } => (to - from).norm(),
            ArcPiece::GreatCircle { radius, angle, .. } => radius * angle,
        }
    }

    /// Point at fraction `s ∈ [0,1]` of the piece's length.
    pub fn point(&self, s: f64) -> Point3 {
        match self {
            ArcPiece::Segment { from, to } => from + s * (to - from),
            ArcPiece::GreatCircle { center, radius, start, dir, angle } => {
                let th = s * angle;
                center + *radius * (th.cos() * start + th.sin() * dir)
            }
        }
    }

    fn reversed(&self) -> ArcPiece {
        match self {
            ArcPiece::Segment { from, to } => ArcPiece::Segment { from: *to, to: *from },
            ArcPiece::GreatCircle { center, radius, start, dir, angle } => {
                let (s, c) = angle.sin_cos();
                ArcPiece::GreatCircle {
                    center: *center,
                    radius: *radius,
                    start: c * start + s * dir,
                    dir: s * start - c * dir,
                    angle: *angle,
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetourArc {
    pub pieces: Vec<ArcPiece>,
    pub exact_length: f64,
}

impl DetourArc {
    fn new(pieces: Vec<ArcPiece>) -> Self {
        let exact_length = pieces.iter().map(ArcPiece::length).sum();
        Self { pieces, exact_length }
    }

    fn reversed(self) -> Self {
        Self::new(self.pieces.iter().rev().map(ArcPiece::reversed).collect())
    }

    pub fn start(&self) -> Point3 {
        self.pieces[0].point(0.0)
    }

    pub fn end(&self) -> Point3 {
        self.pieces[self.pieces.len() - 1].point(1.0)
    }

    /// Piece endpoints in order.
    pub fn vertices(&self) -> Vec<Point3> {
        let mut v = vec![self.start()];
        v.extend(self.pieces.iter().map(|p| p.point(1.0)));
        v
    }

    /// `n` points spread uniformly in arc length, endpoints included.
    pub fn sample(&self, n: usize) -> Vec<Point3> {
        let n = n.max(2);
        let total = self.exact_length;
        if total == 0.0 {
            return vec![self.start(); n];
        }
        let mut out = Vec::with_capacity(n);
        let mut piece = 0;
        let mut acc = 0.0;
        for k in 0..n {
            let s = total * k as f64 / (n - 1) as f64;
            while piece + 1 < self.pieces.len() && acc + self.pieces[piece].length() < s {
                acc += self.pieces[piece].length();
                piece += 1;
            }
            let len = self.pieces[piece].length();
            let frac = if len > 0.0 { ((s - acc) / len).clamp(0.0, 1.0) } else { 0.0 };
            out.push(self.pieces[piece].point(frac));
        }
        out
    }
}

fn any_perpendicular(a: &Vec3) -> Vec3 {
    let trial = if a.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    (trial - trial.dot(a) * a).normalize()
}

fn segment_clears_ball(x: &Point3, y: &Point3, c: &Point3, r: f64) -> bool {
    let d = y - x;
    let len2 = d.norm_squared();
    let t = if len2 > 0.0 { ((c - x).dot(&d) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (x + t * d - c).norm() > r
}

/// Constructive arc joining `x` and `y` outside the closed ball `u`.
pub fn detour_arc_ball(u: &BallSpec, x: &Point3, y: &Point3) -> Result<DetourArc> {
    if u.signed_distance(x) <= 0.0 || u.signed_distance(y) <= 0.0 {
        return domain("arc endpoints must lie strictly outside the closed ball");
    }
    if x == y {
        return Ok(DetourArc::new(vec![ArcPiece::Segment { from: *x, to: *y }]));
    }
    let xi = u.center;
    let swap = (x - xi).norm() > (y - xi).norm();
    let (x, y) = if swap { (y, x) } else { (x, y) };
    let a = x - xi;
    let b = y - xi;
    let an = a.norm();
    let ah = a / an;
    let bpar = b.dot(&ah);
    let bperp = b - bpar * ah;
    let bpn = bperp.norm();

    let pieces = if a.dot(&b) >= 0.0 {
        if segment_clears_ball(x, y, &xi, u.radius) {
            vec![ArcPiece::Segment { from: *x, to: *y }]
        } else {
            let corner = x + bperp;
            vec![ArcPiece::Segment { from: *x, to: corner }, ArcPiece::Segment { from: corner, to: *y }]
        }
    } else {
        let e = if bpn > 1e-12 * b.norm() { bperp / bpn } else { any_perpendicular(&ah) };
        let x0 = xi + an * e;
        let ypp = x0 + bpar * ah;
        vec![
            ArcPiece::GreatCircle { center: xi, radius: an, start: ah, dir: e, angle: FRAC_PI_2 },
            ArcPiece::Segment { from: x0, to: ypp },
            ArcPiece::Segment { from: ypp, to: *y },
        ]
    };
    let arc = DetourArc::new(pieces);
    Ok(if swap { arc.reversed() } else { arc })
}

/// Supporting-plane frame of a pair in the ε-exterior of a convex body:
/// `None` when the segment [x, y] stays in H_x or H_y, else the feet
/// p = x + a·t(x) and q = y − b·t(y) on the line π_x ∩ π_y.
struct WedgeFrame {
    p: Point3,
    q: Point3,
}

fn wedge_frame(d0: &ConvexBodySpec, eps: f64, alpha: f64, x: &Point3, y: &Point3) -> Result<Option<WedgeFrame>> {
    check_alpha(alpha)?;
    if !(eps > 0.0) {
        return domain("eps must be positive");
    }
    for p in [x, y] {
        if d0.signed_distance(p) < eps * (1.0 - 1e-12) {
            return domain(format!("endpoint {p:?} is closer than eps to the body"));
        }
    }
    if x == y {
        return Ok(None);
    }
    let (_, nx) = d0.project(x)?;
    let (_, ny) = d0.project(y)?;
    let rho = nx.dot(&ny);
    if rho <= -1.0 + 1e-12 {
        return Err(Error::Degenerate("normals are anti-parallel".into()));
    }
    if rho < alpha {
        return domain(format!("cone condition violated: normal product {rho} < alpha {alpha}"));
    }
    let d = y - x;
    let s2 = 1.0 - rho * rho;
    if d.dot(&nx) >= 0.0 || (-d).dot(&ny) >= 0.0 || s2 <= 1e-24 {
        return Ok(None);
    }
    let s = s2.sqrt();
    let tx = (ny - rho * nx) / s;
    let ty = (nx - rho * ny) / s;
    let (px, py) = (d.dot(&tx), d.dot(&ty));
    let a = (px + rho * py) / s2;
    let b = (rho * px + py) / s2;
    Ok(Some(WedgeFrame { p: x + a * tx, q: y - b * ty }))
}

fn segment(x: &Point3, y: &Point3) -> DetourArc {
    DetourArc::new(vec![ArcPiece::Segment { from: *x, to: *y }])
}

/// Arc joining `x` and `y` in the exterior of the `eps`-dilation of the
/// convex body `d0`, under the cone condition ν(x)·ν(y) ≥ α.
///
/// When neither supporting half-space H_x, H_y contains the other point, the
/// arc is the shortest path over the edge π_x ∩ π_y: one segment in each
/// supporting plane, meeting on the edge where the unfolded path is straight.
/// With ρ = ν(x)·ν(y) its length is at most √(2/(1+ρ))·|x−y| ≤ C(α)·|x−y|.
pub fn detour_arc_convex(d0: &ConvexBodySpec, eps: f64, alpha: f64, x: &Point3, y: &Point3) -> Result<DetourArc> {
    let Some(w) = wedge_frame(d0, eps, alpha, x, y)? else {
        return Ok(segment(x, y));
    };
    let hx = (w.p - x).norm();
    let hy = (w.q - y).norm();
    let e = if hx + hy > 0.0 { w.p + (hx / (hx + hy)) * (w.q - w.p) } else { w.p };
    Ok(DetourArc::new(vec![ArcPiece::Segment { from: *x, to: e }, ArcPiece::Segment { from: e, to: *y }]))
}

/// The three-segment arc [x, x+a·t(x)] + [x+a·t(x), y−b·t(y)] + [y−b·t(y), y]
/// built from the decomposition y − x = a·t(x) + b·t(y) + c·t(x)×t(y).
///
/// It stays in the ε-exterior, but its length is only bounded by
/// √3/√(1+α)·|x−y|; pairs with an offset along the edge exceed C(α)·|x−y|.
pub fn detour_arc_convex_three_segment(d0: &ConvexBodySpec, eps: f64, alpha: f64, x: &Point3, y: &Point3) -> Result<DetourArc> {
    let Some(w) = wedge_frame(d0, eps, alpha, x, y)? else {
        return Ok(segment(x, y));
    };
    Ok(DetourArc::new(vec![
        ArcPiece::Segment { from: *x, to: w.p },
        ArcPiece::Segment { from: w.p, to: w.q },
        ArcPiece::Segment { from: w.q, to: *y },
    ]))
}

/// Euclidean gap between two convex bodies; 0 when they overlap.
pub fn body_distance(a: &ConvexBodySpec, b: &ConvexBodySpec) -> f64 {
    if a.kind == BodyKind::Ball && b.kind == BodyKind::Ball {
        return ((a.center - b.center).norm() - a.semi_axes[0] - b.semi_axes[0]).max(0.0);
    }
    // Alternating projections between the two solids.
    let mut q = b.center;
    if a.contains(&q) {
        return 0.0;
    }
    let mut p = match a.project(&q) {
        Ok((p, _)) => p,
        Err(_) => return 0.0,
    };
    let mut gap = f64::INFINITY;
    for _ in 0..10_000 {
        if b.contains(&p) {
            return 0.0;
        }
        q = match b.project(&p) {
            Ok((q, _)) => q,
            Err(_) => return 0.0,
        };
        if a.contains(&q) {
            return 0.0;
        }
        let np = match a.project(&q) {
            Ok((p, _)) => p,
            Err(_) => return 0.0,
        };
        let g = (np - q).norm();
        let moved = (np - p).norm();
        p = np;
        if moved <= 1e-14 * (1.0 + g) || (gap - g).abs() <= 1e-15 * g {
            gap = g;
            break;
        }
        gap = g;
    }
    gap
}

/// Gap between two unions of convex bodies.
pub fn dist_sets(a: &[ConvexBodySpec], b: &[ConvexBodySpec]) -> f64 {
    let mut best = f64::INFINITY;
    for p in a {
        for q in b {
            best = best.min(body_distance(p, q));
        }
    }
    best
}

#[derive(Clone, Copy, PartialEq)]
struct HeapItem(f64, u32);

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Shortest path length from `x` to `y` through voxels whose centers stay
/// at distance ≥ `eps` from D₀ (26-neighbour Dijkstra). Returns +∞ when the
/// endpoints are disconnected.
pub fn geodesic_deps(scene: &SceneSpec, eps: f64, grid_h: f64, x: &Point3, y: &Point3) -> Result<f64> {
    Ok(geodesic_deps_many(scene, eps, grid_h, x, std::slice::from_ref(y))?[0])
}

/// `geodesic_deps` from one `x` to every point of `ys`, sharing a single
/// search.
pub fn geodesic_deps_many(scene: &SceneSpec, eps: f64, grid_h: f64, x: &Point3, ys: &[Point3]) -> Result<Vec<f64>> {
    if !(grid_h > 0.0) || eps < 0.0 {
        return domain("grid_h must be positive and eps non-negative");
    }
    for p in std::iter::once(x).chain(ys) {
        if scene.signed_distance_d0(p) < eps {
            return domain(format!("endpoint {p:?} lies in the forbidden region"));
        }
    }
    let h = grid_h;
    let margin = eps + 3.0 * h;
    let mut lo = *x;
    let mut hi = *x;
    for y in ys {
        lo = lo.inf(y);
        hi = hi.sup(y);
    }
    for b in &scene.d0_bodies {
        let (l, u) = b.aabb();
        lo = lo.inf(&l);
        hi = hi.sup(&u);
    }
    lo -= Vec3::repeat(margin);
    hi += Vec3::repeat(margin);
    // Align so that x sits on a cell center.
    let shift = Vec3::from_fn(|k, _| ((x[k] - lo[k]) / h).ceil());
    let origin = x - shift * h;
    let dims: [usize; 3] = std::array::from_fn(|k| ((hi[k] - origin[k]) / h).ceil() as usize + 1);
    let n = dims[0] * dims[1] * dims[2];
    if n > 50_000_000 {
        return domain("geodesic grid too large; increase grid_h");
    }
    let center = |i: usize, j: usize, k: usize| origin + Vec3::new(i as f64, j as f64, k as f64) * h;
    let mut allowed = vec![false; n];
    for k in 0..dims[2] {
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                allowed[i + dims[0] * (j + dims[1] * k)] = scene.signed_distance_d0(&center(i, j, k)) >= eps;
            }
        }
    }
    let snap = |p: &Point3| -> Option<(usize, f64)> {
        let base: [i64; 3] = std::array::from_fn(|k| ((p[k] - origin[k]) / h).round() as i64);
        let mut best: Option<(usize, f64)> = None;
        for dk in -2i64..=2 {
            for dj in -2i64..=2 {
                for di in -2i64..=2 {
                    let c = [base[0] + di, base[1] + dj, base[2] + dk];
                    if (0..3).any(|a| c[a] < 0 || c[a] >= dims[a] as i64) {
                        continue;
                    }
                    let (i, j, k) = (c[0] as usize, c[1] as usize, c[2] as usize);
                    let idx = i + dims[0] * (j + dims[1] * k);
                    if !allowed[idx] {
                        continue;
                    }
                    let d = (center(i, j, k) - p).norm();
                    if best.map_or(true, |(_, bd)| d < bd) {
                        best = Some((idx, d));
                    }
                }
            }
        }
        best
    };
    let (src, ox) = snap(x).ok_or_else(|| Error::Domain("no admissible cell near x".into()))?;
    let targets =
        ys.iter().map(|y| snap(y).ok_or_else(|| Error::Domain(format!("no admissible cell near {y:?}")))).collect::<Result<Vec<_>>>()?;
    let mut pending = vec![false; n];
    let mut left = 0;
    for &(t, _) in &targets {
        if !pending[t] {
            pending[t] = true;
            left += 1;
        }
    }

    let mut offsets = Vec::with_capacity(26);
    for dk in -1i64..=1 {
        for dj in -1i64..=1 {
            for di in -1i64..=1 {
                if di != 0 || dj != 0 || dk != 0 {
                    let w = h * ((di * di + dj * dj + dk * dk) as f64).sqrt();
                    offsets.push((di, dj, dk, w));
                }
            }
        }
    }
    let mut dist = vec![f64::INFINITY; n];
    let mut heap = BinaryHeap::new();
    dist[src] = 0.0;
    heap.push(HeapItem(0.0, src as u32));
    while let Some(HeapItem(d, u)) = heap.pop() {
        let u = u as usize;
        if d > dist[u] {
            continue;
        }
        if pending[u] {
            pending[u] = false;
            left -= 1;
            if left == 0 {
                break;
            }
        }
        let i = (u % dims[0]) as i64;
        let j = ((u / dims[0]) % dims[1]) as i64;
        let k = (u / (dims[0] * dims[1])) as i64;
        for &(di, dj, dk, w) in &offsets {
            let (a, b, c) = (i + di, j + dj, k + dk);
            if a < 0 || b < 0 || c < 0 || a >= dims[0] as i64 || b >= dims[1] as i64 || c >= dims[2] as i64 {
                continue;
            }
            let v = a as usize + dims[0] * (b as usize + dims[1] * c as usize);
            if !allowed[v] {
                continue;
            }
            let nd = d + w;
            if nd < dist[v] {
                dist[v] = nd;
                heap.push(HeapItem(nd, v as u32));
            }
        }
    }
    Ok(targets.iter().map(|&(t, oy)| dist[t] + ox + oy).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: f64, y: f64, z: f64) -> Point3 {
        Point3::new(x, y, z)
    }

    fn unit_ball() -> BallSpec {
        BallSpec::new(Point3::zeros(), 1.0).unwrap()
    }

    #[test]
    fn constants() {
        let c = detour_constant(DetourKind::Ball).unwrap();
        assert!((c - 2f64.sqrt() * ((PI / 4.0).powi(2) + 1.0).sqrt()).abs() < 1e-15);
        assert!((c - 1.798_249_301_441_869).abs() < 1e-12);
        assert!((detour_constant(DetourKind::Convex { alpha: 0.0 }).unwrap() - SQRT_2).abs() < 1e-15);
        let c5 = detour_constant(DetourKind::Convex { alpha: -0.5 }).unwrap();
        assert!((c5 - 2.0 * SQRT_2).abs() < 1e-14);
        assert!(detour_constant(DetourKind::Convex { alpha: 0.1 }).is_err());
        assert!(detour_constant(DetourKind::Convex { alpha: -1.0 }).is_err());
    }

    #[test]
    fn projection_axis_cases() {
        let ball = ConvexBodySpec::ball(Point3::zeros(), 1.0).unwrap();
        let (q, nu) = ball.project(&p(3.0, 0.0, 0.0)).unwrap();
        assert!((q - p(1.0, 0.0, 0.0)).norm() < 1e-15);
        assert!((nu - p(1.0, 0.0, 0.0)).norm() < 1e-15);
        let ell = ConvexBodySpec::ellipsoid(Point3::zeros(), [2.0, 1.0, 1.0], Matrix3::identity()).unwrap();
        let (q, nu) = ell.project(&p(5.0, 0.0, 0.0)).unwrap();
        assert!((q - p(2.0, 0.0, 0.0)).norm() < 1e-12);
        assert!((nu - p(1.0, 0.0, 0.0)).norm() < 1e-12);
        assert!(ell.project(&p(1.0, 0.0, 0.0)).is_err());
        assert!(ell.project(&p(2.0, 0.0, 0.0)).is_err());
    }

    #[test]
    fn ellipsoid_interior_signed_distance() {
        let ell = ConvexBodySpec::ellipsoid(Point3::zeros(), [2.0, 1.0, 1.0], Matrix3::identity()).unwrap();
        assert!((ell.signed_distance(&Point3::zeros()) + 1.0).abs() < 1e-9);
        assert!((ell.signed_distance(&p(1.5, 0.0, 0.0)) + 0.5).abs() < 1e-9);
        assert!((ell.signed_distance(&p(0.0, 0.0, 3.0)) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_orientation() {
        let m = Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0);
        assert!(ConvexBodySpec::ellipsoid(Point3::zeros(), [1.0, 1.0, 1.0], m).is_err());
        let m = Matrix3::new(1.0, 1e-9, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(ConvexBodySpec::ellipsoid(Point3::zeros(), [1.0, 1.0, 1.0], m).is_err());
    }

    #[test]
    fn cone_examples() {
        let d0 = ConvexBodySpec::ball(Point3::zeros(), 1.0).unwrap();
        let b = BallSpec::new(p(-3.0, 0.0, 0.0), 0.1).unwrap();
        assert!(cone_contains(0.0, &d0, &b, &p(-3.0, 1.0, 0.0), 64).unwrap());
        assert!(!cone_contains(0.0, &d0, &b, &p(3.0, 0.0, 0.0), 64).unwrap());
        assert!(cone_contains(-1.0 + 1e-9, &d0, &b, &p(0.0, 0.0, -5.0), 64).unwrap());
    }

    #[test]
    fn ball_samples_inside() {
        let b = BallSpec::new(p(1.0, 2.0, 3.0), 0.5).unwrap();
        let s = ball_samples(&b, 64);
        assert_eq!(s.len(), 64);
        assert_eq!(s[0], b.center);
        assert!(s.iter().all(|x| b.contains(x)));
    }

    #[test]
    fn ball_arc_examples() {
        let u = unit_ball();
        let arc = detour_arc_ball(&u, &p(2.0, 0.0, 0.0), &p(3.0, 0.0, 0.0)).unwrap();
        assert_eq!(arc.pieces.len(), 1);
        assert!((arc.exact_length - 1.0).abs() < 1e-15);

        let x = p(0.0, 0.0, 2.0);
        let y = p(0.0, 0.5, -3.0);
        let arc = detour_arc_ball(&u, &x, &y).unwrap();
        assert!((arc.exact_length - (PI + 4.5)).abs() < 1e-12);
        assert!(arc.exact_length <= 1.81588 * (x - y).norm());
        assert!((arc.start() - x).norm() < 1e-12 && (arc.end() - y).norm() < 1e-12);
        assert!(arc.sample(1000).iter().all(|z| u.signed_distance(z) > 0.0));

        let rev = detour_arc_ball(&u, &y, &x).unwrap();
        assert!((rev.start() - y).norm() < 1e-12 && (rev.end() - x).norm() < 1e-12);
        assert!((rev.exact_length - arc.exact_length).abs() < 1e-12);

        let z = detour_arc_ball(&u, &x, &x).unwrap();
        assert_eq!(z.exact_length, 0.0);
        assert!(detour_arc_ball(&u, &p(0.5, 0.0, 0.0), &x).is_err());
    }

    #[test]
    fn blocked_same_side_pair_uses_l_path() {
        let u = unit_ball();
        let x = p(1.2, 0.0, 0.0);
        let y = p(1.0, 1.5, 0.0);
        let arc = detour_arc_ball(&u, &x, &y).unwrap();
        assert!(arc.exact_length <= SQRT_2 * (x - y).norm() + 1e-12);
        assert!(arc.sample(1000).iter().all(|z| u.signed_distance(z) > 0.0));
    }

    #[test]
    fn convex_arc_examples() {
        let d0 = ConvexBodySpec::ball(Point3::zeros(), 1.0).unwrap();
        let arc = detour_arc_convex(&d0, 0.1, 0.0, &p(0.0, 0.0, 3.0), &p(0.0, 0.0, 5.0)).unwrap();
        assert_eq!(arc.pieces.len(), 1);
        assert!((arc.exact_length - 2.0).abs() < 1e-15);

        let ell = ConvexBodySpec::ellipsoid(Point3::zeros(), [2.0, 1.0, 1.0], Matrix3::identity()).unwrap();
        let x = p(0.0, 0.0, 2.0);
        let y = p(0.0, 2.0, 0.0);
        let arc = detour_arc_convex(&ell, 0.5, 0.0, &x, &y).unwrap();
        assert_eq!(arc.pieces.len(), 2);
        assert!(arc.exact_length <= SQRT_2 * (x - y).norm() + 1e-12);
        assert!(arc.sample(1000).iter().all(|z| ell.signed_distance(z) >= 0.5 - 1e-9));

        let err = detour_arc_convex(&d0, 0.1, -0.5, &p(0.0, 0.0, 3.0), &p(0.0, 0.0, -3.0));
        assert!(matches!(err, Err(Error::Degenerate(_))));
        let err = detour_arc_convex(&d0, 0.1, 0.0, &p(0.0, 0.0, 3.0), &p(0.0, 3.0, -3.0));
        assert!(matches!(err, Err(Error::Domain(_))));
    }

    #[test]
    fn unfolded_arc_beats_three_segment_bound() {
        let axes = [2.0, 1.0, 0.5];
        let ell = ConvexBodySpec::ellipsoid(Point3::zeros(), axes, Matrix3::identity()).unwrap();
        let eps = 0.2;
        let above = |th: f64, ph: f64| {
            let u = Vec3::new(th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos());
            let q = Vec3::new(axes[0] * u.x, axes[1] * u.y, axes[2] * u.z);
            let n = Vec3::new(q.x / 4.0, q.y, q.z / 0.25).normalize();
            (q + 1.5 * eps * n, n)
        };
        let mut worst3: f64 = 0.0;
        for i in 1..12 {
            for j in 0..24 {
                for k in 1..12 {
                    for l in 0..24 {
                        let (x, nx) = above(0.26 * i as f64, 0.26 * j as f64);
                        let (y, ny) = above(0.26 * k as f64, 0.26 * l as f64);
                        if nx.dot(&ny) < 0.0 {
                            continue;
                        }
                        let d = (x - y).norm();
                        let arc = detour_arc_convex(&ell, eps, 0.0, &x, &y).unwrap();
                        assert!(arc.exact_length <= SQRT_2 * d + 1e-9, "{x:?} {y:?}");
                        let three = detour_arc_convex_three_segment(&ell, eps, 0.0, &x, &y).unwrap();
                        assert!(three.exact_length >= arc.exact_length - 1e-12);
                        worst3 = worst3.max(three.exact_length / d);
                    }
                }
            }
        }
        assert!(worst3 > SQRT_2 && worst3 <= 3f64.sqrt() + 1e-9, "{worst3}");
    }

    #[test]
    fn set_distances() {
        let b = ConvexBodySpec::ball(p(-2.2, 0.0, 0.0), 0.4).unwrap();
        let d = ConvexBodySpec::ball(p(2.2, 0.0, 0.0), 0.5).unwrap();
        assert!((dist_sets(&[b.clone()], &[d.clone()]) - 3.5).abs() < 1e-15);
        assert_eq!(dist_sets(&[b.clone()], &[b.clone()]), 0.0);
        let ell = ConvexBodySpec::ellipsoid(Point3::zeros(), [2.0, 1.0, 1.0], Matrix3::identity()).unwrap();
        let ball = ConvexBodySpec::ball(p(4.0, 0.0, 0.0), 1.0).unwrap();
        assert!((body_distance(&ell, &ball) - 1.0).abs() < 1e-9);
        assert!((body_distance(&ball, &ell) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn geodesic_free_space_and_cavity() {
        let free =
            SceneSpec { d0_bodies: vec![], d_bodies: vec![], source: BallSpec::new(p(10.0, 0.0, 0.0), 0.1).unwrap(), g_amplitude: 1.0 };
        let g = geodesic_deps(&free, 0.0, 0.05, &Point3::zeros(), &p(3.0, 0.0, 0.0)).unwrap();
        assert!((g - 3.0).abs() < 0.02 * 3.0);

        let mut balls = Vec::new();
        for i in -1..=1 {
            for j in -1..=1 {
                for k in -1..=1 {
                    if (i, j, k) != (0, 0, 0) {
                        balls.push(ConvexBodySpec::ball(p(i as f64, j as f64, k as f64), 0.49).unwrap());
                    }
                }
            }
        }
        let sealed = SceneSpec { d0_bodies: balls, ..free };
        let g = geodesic_deps(&sealed, 0.3, 0.05, &Point3::zeros(), &p(3.0, 0.0, 0.0)).unwrap();
        assert!(g.is_infinite());
        assert!(geodesic_deps(&sealed, 0.3, 0.05, &p(1.0, 0.0, 0.0), &Point3::zeros()).is_err());
    }

    #[test]
    fn geodesic_around_ball_is_sandwiched() {
        let scene = SceneSpec {
            d0_bodies: vec![ConvexBodySpec::ball(Point3::zeros(), 1.0).unwrap()],
            d_bodies: vec![],
            source: BallSpec::new(p(10.0, 0.0, 0.0), 0.1).unwrap(),
            g_amplitude: 1.0,
        };
        let x = p(0.0, 0.0, 2.0);
        let y = p(0.0, 0.5, -3.0);
        let g = geodesic_deps(&scene, 0.0, 0.05, &x, &y).unwrap();
        let arc = detour_arc_ball(&unit_ball(), &x, &y).unwrap();
        assert!(g >= (x - y).norm());
        assert!(g <= arc.exact_length * 1.08);
    }

    #[test]
    fn scene_validation() {
        let mut s = SceneSpec {
            d0_bodies: vec![ConvexBodySpec::ball(Point3::zeros(), 1.0).unwrap()],
            d_bodies: vec![ConvexBodySpec::ball(p(2.2, 0.0, 0.0), 0.5).unwrap()],
            source: BallSpec::new(p(-2.2, 0.0, 0.0), 0.4).unwrap(),
            g_amplitude: 1.0,
        };
        assert!(s.validate().is_ok());
        s.source.center = p(-1.2, 0.0, 0.0);
        assert!(s.validate().unwrap_err().to_string().contains("B and D0"));
    }

    #[test]
    fn body_serde_round_trip() {
        let rot = nalgebra::Rotation3::from_euler_angles(0.3, -0.2, 1.1).into_inner();
        let e = ConvexBodySpec::ellipsoid(p(1.0, 2.0, 3.0), [2.0, 1.0, 0.5], rot).unwrap();
        let s = serde_json::to_string(&e).unwrap();
        let back: ConvexBodySpec = serde_json::from_str(&s).unwrap();
        assert_eq!(back, e);
        let b: ConvexBodySpec = serde_json::from_str(r#"{"kind":"ball","center":[0,0,0],"radius":1}"#).unwrap();
        assert_eq!(b.kind(), BodyKind::Ball);
    }
}
