// quadric local models, trivializations, parallel transport

use crate::error::{domain, Error, Result};
use crate::ode::dopri5;
use crate::profiles::ProfileFunction;
use crate::report::Check;
use num_complex::Complex64 as C64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use std::f64::consts::PI;

pub const Q_TOL: f64 = 1e-9;
pub const K_MIN: f64 = 1e-12;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// z = x + iy in C^{n+1} on the quadric q(z) = Σ ε_j z_j².
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadricPoint {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub signature: Vec<i8>,
}

impl QuadricPoint {
    pub fn new(x: Vec<f64>, y: Vec<f64>, signature: Vec<i8>) -> QuadricPoint {
        assert!(x.len() == y.len() && x.len() == signature.len() && x.len() >= 2);
        QuadricPoint { x, y, signature }
    }

    pub fn plus(x: Vec<f64>, y: Vec<f64>) -> QuadricPoint {
        let sig = vec![1; x.len()];
        QuadricPoint::new(x, y, sig)
    }

    pub fn from_complex(z: &[C64], signature: Vec<i8>) -> QuadricPoint {
        QuadricPoint::new(z.iter().map(|c| c.re).collect(), z.iter().map(|c| c.im).collect(), signature)
    }

    pub fn coords(&self) -> Vec<C64> {
        self.x.iter().zip(&self.y).map(|(&a, &b)| C64::new(a, b)).collect()
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn norm_sq(&self) -> f64 {
        dot(&self.x, &self.x) + dot(&self.y, &self.y)
    }

    /// The diagonal unitary α taking this model to the all-plus quadric: z_j ↦ i z_j where ε_j = -1.
    pub fn to_standard(&self) -> QuadricPoint {
        let z: Vec<C64> = self
            .coords()
            .iter()
            .zip(&self.signature)
            .map(|(c, &e)| if e < 0 { c * C64::i() } else { *c })
            .collect();
        QuadricPoint::from_complex(&z, vec![1; self.dim()])
    }

    /// Inverse of `to_standard` into the given signature.
    pub fn from_standard(&self, signature: &[i8]) -> QuadricPoint {
        let z: Vec<C64> = self
            .coords()
            .iter()
            .zip(signature)
            .map(|(c, &e)| if e < 0 { -c * C64::i() } else { *c })
            .collect();
        QuadricPoint::from_complex(&z, signature.to_vec())
    }

    pub fn conj(&self) -> QuadricPoint {
        QuadricPoint::new(self.x.clone(), self.y.iter().map(|v| -v).collect(), self.signature.clone())
    }

    pub fn scale(&self, c: C64) -> QuadricPoint {
        let z: Vec<C64> = self.coords().iter().map(|w| w * c).collect();
        QuadricPoint::from_complex(&z, self.signature.clone())
    }

    pub fn distance(&self, other: &QuadricPoint) -> f64 {
        (dist(&self.x, &other.x).powi(2) + dist(&self.y, &other.y).powi(2)).sqrt()
    }
}

/// (u, v) on T*S^n with |u| = 1 and u·v = 0.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CotangentVector {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl CotangentVector {
    /// Normalizes u and projects v onto u^⊥.
    pub fn new(u: Vec<f64>, v: Vec<f64>) -> CotangentVector {
        let nu = norm(&u);
        let u: Vec<f64> = u.iter().map(|a| a / nu).collect();
        let p = dot(&u, &v);
        let v = v.iter().zip(&u).map(|(b, a)| b - p * a).collect();
        CotangentVector { u, v }
    }

    pub fn mu(&self) -> f64 {
        norm(&self.v)
    }

    pub fn distance(&self, other: &CotangentVector) -> f64 {
        (dist(&self.u, &other.u).powi(2) + dist(&self.v, &other.v).powi(2)).sqrt()
    }

    pub fn random<R: Rng>(rng: &mut R, dim: usize, max_mu: f64) -> CotangentVector {
        let u: Vec<f64> = gaussian_vec(rng, dim);
        let raw = gaussian_vec(rng, dim);
        let mut c = CotangentVector::new(u, raw);
        let len = c.mu();
        let target = max_mu * rng.gen::<f64>().max(1e-3);
        c.v.iter_mut().for_each(|b| *b *= target / len);
        c
    }
}

pub fn gaussian_vec<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Segment {
    Line { a: (f64, f64), b: (f64, f64) },
    /// Angles in radians; orientation is the sign of `end - start`.
    Arc { center: (f64, f64), radius: f64, start: f64, end: f64 },
}

fn c(p: (f64, f64)) -> C64 {
    C64::new(p.0, p.1)
}

impl Segment {
    pub fn line(a: C64, b: C64) -> Segment {
        Segment::Line { a: (a.re, a.im), b: (b.re, b.im) }
    }

    pub fn arc(center: C64, radius: f64, start: f64, end: f64) -> Segment {
        Segment::Arc { center: (center.re, center.im), radius, start, end }
    }

    pub fn length(&self) -> f64 {
        match *self {
            Segment::Line { a, b } => (c(b) - c(a)).norm(),
            Segment::Arc { radius, start, end, .. } => radius * (end - start).abs(),
        }
    }

    /// Point and unit tangent at arc length `l`.
    pub fn eval(&self, l: f64) -> (C64, C64) {
        match *self {
            Segment::Line { a, b } => {
                let d = c(b) - c(a);
                let len = d.norm();
                if len == 0.0 {
                    return (c(a), C64::new(0.0, 0.0));
                }
                (c(a) + d * (l / len), d / len)
            }
            Segment::Arc { center, radius, start, end } => {
                let sg = (end - start).signum();
                let phi = start + sg * l / radius;
                let e = C64::from_polar(1.0, phi);
                (c(center) + e * radius, e * C64::i() * sg)
            }
        }
    }

    pub fn start(&self) -> C64 {
        self.eval(0.0).0
    }

    pub fn end(&self) -> C64 {
        self.eval(self.length()).0
    }

    fn polyline(&self, pieces: usize) -> Vec<C64> {
        let n = match self {
            Segment::Line { .. } => 1,
            Segment::Arc { .. } => pieces,
        };
        (0..=n).map(|i| self.eval(self.length() * i as f64 / n as f64).0).collect()
    }
}

/// Piecewise base path parameterized by arc length.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BasePath {
    pub segments: Vec<Segment>,
}

fn cross(a: C64, b: C64) -> f64 {
    a.re * b.im - a.im * b.re
}

fn pieces_meet(p: C64, q: C64, r: C64, s: C64, tol: f64) -> bool {
    // distance between closed segments pq and rs below tol
    fn pt_seg(x: C64, a: C64, b: C64) -> f64 {
        let d = b - a;
        let l2 = d.norm_sqr();
        if l2 == 0.0 {
            return (x - a).norm();
        }
        let t = (((x - a) * d.conj()).re / l2).clamp(0.0, 1.0);
        (x - (a + d * t)).norm()
    }
    let d1 = cross(q - p, r - p);
    let d2 = cross(q - p, s - p);
    let d3 = cross(s - r, p - r);
    let d4 = cross(s - r, q - r);
    if d1 * d2 < 0.0 && d3 * d4 < 0.0 {
        return true;
    }
    pt_seg(p, r, s).min(pt_seg(q, r, s)).min(pt_seg(r, p, q)).min(pt_seg(s, p, q)) < tol
}

pub fn polyline_of(path: &BasePath) -> Vec<C64> {
    let mut pts = vec![path.start()];
    for s in &path.segments {
        pts.extend(s.polyline(256).into_iter().skip(1));
    }
    pts
}

/// True if the polylines of `a` and `b` meet anywhere other than within `excl` of `except`.
pub fn paths_meet_outside(a: &BasePath, b: &BasePath, except: C64, excl: f64) -> bool {
    let pa = polyline_of(a);
    let pb = polyline_of(b);
    for i in 0..pa.len() - 1 {
        for j in 0..pb.len() - 1 {
            let near = |x: C64, y: C64| (x - except).norm() < excl && (y - except).norm() < excl;
            if near(pa[i], pa[i + 1]) || near(pb[j], pb[j + 1]) {
                continue;
            }
            if pieces_meet(pa[i], pa[i + 1], pb[j], pb[j + 1], 1e-9) {
                return true;
            }
        }
    }
    false
}

impl BasePath {
    pub fn new(segments: Vec<Segment>) -> Result<BasePath> {
        if segments.is_empty() {
            return domain("empty base path");
        }
        for w in segments.windows(2) {
            if (w[0].end() - w[1].start()).norm() > 1e-9 {
                return domain("base path segments do not share endpoints");
            }
        }
        let p = BasePath { segments };
        if !p.is_embedded() {
            return domain("base path is not embedded");
        }
        Ok(p)
    }

    pub fn segment(a: C64, b: C64) -> BasePath {
        BasePath { segments: vec![Segment::line(a, b)] }
    }

    /// Arc of radius |w0| about the origin from angle arg(w0) sweeping `theta`.
    pub fn circle_arc(w0: C64, theta: f64) -> BasePath {
        let (r, a) = w0.to_polar();
        BasePath { segments: vec![Segment::arc(C64::new(0.0, 0.0), r, a, a + theta)] }
    }

    pub fn start(&self) -> C64 {
        self.segments[0].start()
    }

    pub fn end(&self) -> C64 {
        self.segments.last().unwrap().end()
    }

    pub fn length(&self) -> f64 {
        self.segments.iter().map(|s| s.length()).sum()
    }

    pub fn reversed(&self) -> BasePath {
        let segments = self
            .segments
            .iter()
            .rev()
            .map(|s| match *s {
                Segment::Line { a, b } => Segment::Line { a: b, b: a },
                Segment::Arc { center, radius, start, end } => {
                    Segment::Arc { center, radius, start: end, end: start }
                }
            })
            .collect();
        BasePath { segments }
    }

    pub fn conj(&self) -> BasePath {
        let segments = self
            .segments
            .iter()
            .map(|s| match *s {
                Segment::Line { a, b } => Segment::Line { a: (a.0, -a.1), b: (b.0, -b.1) },
                Segment::Arc { center, radius, start, end } => Segment::Arc {
                    center: (center.0, -center.1),
                    radius,
                    start: -start,
                    end: -end,
                },
            })
            .collect();
        BasePath { segments }
    }

    /// Polyline self-intersection test at tolerance 1e-9; consecutive pieces may share an endpoint.
    pub fn is_embedded(&self) -> bool {
        let pts = polyline_of(self);
        let m = pts.len() - 1;
        let closed = (pts[0] - pts[m]).norm() < 1e-9;
        for i in 0..m {
            for j in i + 2..m {
                if closed && i == 0 && j == m - 1 {
                    continue;
                }
                if pieces_meet(pts[i], pts[i + 1], pts[j], pts[j + 1], 1e-9) {
                    return false;
                }
            }
        }
        true
    }
}

pub fn eval_quadric(z: &QuadricPoint) -> C64 {
    z.coords().iter().zip(&z.signature).map(|(w, &e)| w * w * e as f64).sum()
}

pub fn eval_k(z: &QuadricPoint) -> f64 {
    let r2 = z.norm_sq();
    r2 * r2 - eval_quadric(z).norm_sqr()
}

// (x/|x|, -y|x|) with no fiber check; all-plus coordinates
fn rho_raw(z: &QuadricPoint) -> CotangentVector {
    let nx = norm(&z.x);
    CotangentVector {
        u: z.x.iter().map(|a| a / nx).collect(),
        v: z.y.iter().map(|b| -b * nx).collect(),
    }
}

/// The printed variant (x/|x|, -y|y|). Kept as a regression fixture; not exact off q = 0.
pub fn rho_printed(z: &QuadricPoint) -> CotangentVector {
    let z = z.to_standard();
    let nx = norm(&z.x);
    let ny = norm(&z.y);
    CotangentVector {
        u: z.x.iter().map(|a| a / nx).collect(),
        v: z.y.iter().map(|b| -b * ny).collect(),
    }
}

pub fn rho(z: &QuadricPoint, s: f64) -> Result<CotangentVector> {
    let w = z.to_standard();
    let q = eval_quadric(&w);
    if (q - s).norm() > Q_TOL {
        return domain(format!("q(z) = {q} is not {s}"));
    }
    if norm(&w.x) == 0.0 {
        return domain("rho undefined where x = 0");
    }
    Ok(rho_raw(&w))
}

/// Inverse of ρ_s into the given signature model.
pub fn rho_inverse(c: &CotangentVector, s: f64, signature: &[i8]) -> Result<QuadricPoint> {
    let mu = c.mu();
    if s == 0.0 && mu == 0.0 {
        return domain("rho_inverse at s = 0 needs v != 0");
    }
    let nx = ((s + (s * s + 4.0 * mu * mu).sqrt()) / 2.0).sqrt();
    let std = QuadricPoint::plus(
        c.u.iter().map(|a| a * nx).collect(),
        c.v.iter().map(|b| -b / nx).collect(),
    );
    Ok(std.from_standard(signature))
}

/// Normalized geodesic flow σ_t; |v| is preserved.
pub fn geodesic_flow(c: &CotangentVector, t: f64) -> Result<CotangentVector> {
    let mu = c.mu();
    if mu == 0.0 {
        return domain("geodesic flow needs v != 0");
    }
    let (s, co) = t.sin_cos();
    Ok(CotangentVector {
        u: c.u.iter().zip(&c.v).map(|(a, b)| co * a + s * b / mu).collect(),
        v: c.u.iter().zip(&c.v).map(|(a, b)| mu * (co * b / mu - s * a)).collect(),
    })
}

/// Φ(z) = (σ_{θ/2}(ρ_s(e^{-iθ/2} z)), q(z)) for q(z) = s e^{iθ}, θ ∈ (-π, π].
pub fn trivialize(z: &QuadricPoint) -> Result<(CotangentVector, C64)> {
    let k = eval_k(z);
    if k <= K_MIN {
        return domain(format!("trivialize needs k > 0, got {k:e}"));
    }
    let w = z.to_standard();
    let q = eval_quadric(&w);
    let (s, theta) = q.to_polar();
    if s == 0.0 {
        return Ok((rho_raw(&w), q));
    }
    let rotated = w.scale(C64::from_polar(1.0, -theta / 2.0));
    let c = geodesic_flow(&rho_raw(&rotated), theta / 2.0)?;
    Ok((c, q))
}

pub fn untrivialize(c: &CotangentVector, w: C64, signature: &[i8]) -> Result<QuadricPoint> {
    if c.mu() == 0.0 {
        return domain("untrivialize needs v != 0");
    }
    let (s, theta) = w.to_polar();
    if s == 0.0 {
        return rho_inverse(c, 0.0, signature);
    }
    let c0 = geodesic_flow(c, -theta / 2.0)?;
    let z = rho_inverse(&c0, s, &vec![1; c.u.len()])?;
    Ok(z.scale(C64::from_polar(1.0, theta / 2.0)).from_standard(signature))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TransportStats {
    pub k_drift: f64,
    pub fiber_residual: f64,
    pub length: f64,
    pub steps: usize,
}

fn pack(z: &QuadricPoint) -> Vec<f64> {
    z.x.iter().chain(&z.y).copied().collect()
}

fn unpack(y: &[f64], sig: &[i8]) -> QuadricPoint {
    let m = sig.len();
    QuadricPoint::new(y[..m].to_vec(), y[m..].to_vec(), sig.to_vec())
}

/// Horizontal lift dz/dl = γ'(l) ε z̄ / (2|z|²), integrated segment by segment.
pub fn transport_ode_stats(
    z0: &QuadricPoint,
    path: &BasePath,
    tol: f64,
) -> Result<(QuadricPoint, TransportStats)> {
    let start = path.start();
    if (eval_quadric(z0) - start).norm() > Q_TOL {
        return domain(format!("q(z0) = {} is not the path start {}", eval_quadric(z0), start));
    }
    let sig = z0.signature.clone();
    let m = sig.len();
    let k0 = eval_k(z0);
    let mut stats = TransportStats { k_drift: 0.0, fiber_residual: 0.0, length: path.length(), steps: 0 };
    let mut y = pack(z0);
    for seg in &path.segments {
        let len = seg.length();
        let rhs = |l: f64, s: &[f64], d: &mut [f64]| {
            let (_, g) = seg.eval(l);
            let r2: f64 = s.iter().map(|a| a * a).sum();
            for j in 0..m {
                // ε z̄_j γ' / (2|z|²)
                let e = sig[j] as f64;
                let zb = C64::new(s[j], -s[m + j]) * e;
                let w = zb * g / (2.0 * r2);
                d[j] = w.re;
                d[m + j] = w.im;
            }
        };
        let mut kd: f64 = 0.0;
        let mut fr: f64 = 0.0;
        let (out, st) = dopri5(rhs, 0.0, len, &y, tol, |l, s| {
            let z = unpack(s, &sig);
            kd = kd.max((eval_k(&z) - k0).abs());
            fr = fr.max((eval_quadric(&z) - seg.eval(l).0).norm());
        })?;
        stats.k_drift = stats.k_drift.max(kd);
        stats.fiber_residual = stats.fiber_residual.max(fr);
        stats.steps += st.accepted;
        y = out;
    }
    Ok((unpack(&y, &sig), stats))
}

pub fn transport_ode(z0: &QuadricPoint, path: &BasePath, tol: f64) -> Result<QuadricPoint> {
    transport_ode_stats(z0, path, tol).map(|r| r.0)
}

/// σ_{θ·profile'(|v|)}(u, v); the zero covector is returned unchanged.
pub fn transport_closed_form(
    c: &CotangentVector,
    theta: f64,
    profile: &ProfileFunction,
) -> CotangentVector {
    let mu = c.mu();
    if mu == 0.0 {
        return c.clone();
    }
    geodesic_flow(c, theta * profile.d1(mu)).expect("v != 0")
}

/// Transport in trivialized coordinates as the Hamiltonian flow of R(μ) along an arc of
/// angle `theta`: u' = R'(|v|) v/|v|, v' = -R'(|v|)|v| u. Numerical counterpart of
/// `transport_closed_form`, used where the cut-down model differs from C^{n+1}.
pub fn trivialized_transport_ode(
    c: &CotangentVector,
    theta: f64,
    profile: &ProfileFunction,
    tol: f64,
) -> Result<CotangentVector> {
    let m = c.u.len();
    if c.mu() == 0.0 || theta == 0.0 {
        return Ok(c.clone());
    }
    let y0: Vec<f64> = c.u.iter().chain(&c.v).copied().collect();
    let rhs = |_: f64, s: &[f64], d: &mut [f64]| {
        let mu = norm(&s[m..]);
        let w = profile.d1(mu);
        for j in 0..m {
            d[j] = w * s[m + j] / mu;
            d[m + j] = -w * mu * s[j];
        }
    };
    let (y, _) = dopri5(rhs, 0.0, theta, &y0, tol, |_, _| {})?;
    Ok(CotangentVector { u: y[..m].to_vec(), v: y[m..].to_vec() })
}

/// √w · u on the principal branch, placed in the given signature model.
pub fn thimble_point(w: C64, u: &[f64], signature: &[i8]) -> QuadricPoint {
    let r = w.sqrt();
    let std = QuadricPoint::plus(u.iter().map(|a| a * r.re).collect(), u.iter().map(|a| a * r.im).collect());
    std.from_standard(signature)
}

/// Φ(z) against ρ_0 of z transported radially to the zero fiber.
pub fn radial_factorization_check(z: &QuadricPoint, tol: f64) -> Result<Check> {
    let q = eval_quadric(z);
    if q.norm() == 0.0 {
        return domain("radial path is constant on q = 0");
    }
    let (phi, _) = trivialize(z)?;
    let path = BasePath::segment(q, C64::new(0.0, 0.0));
    let z0 = transport_ode(z, &path, 1e-11)?;
    let c0 = rho_raw(&z0.to_standard());
    Ok(Check::below("radial factorization", "radial lemma", phi.distance(&c0), tol))
}

#[derive(Debug, Clone, Serialize)]
pub struct RealTransportReport {
    pub max_imag: f64,
    pub gradient_deviation: f64,
    pub conjugation_residual: f64,
    pub checks: Vec<Check>,
}

/// Unit speed gradient flow of f = Σ ε x² from x0, with dense samples (arc, x, x').
fn gradient_flow_samples(x0: &[f64], sig: &[i8], arc: f64) -> Result<Vec<(f64, Vec<f64>, Vec<f64>)>> {
    let field = |x: &[f64], d: &mut [f64]| {
        let nx = norm(x);
        for j in 0..x.len() {
            d[j] = sig[j] as f64 * x[j] / nx;
        }
    };
    let mut out = Vec::new();
    dopri5(|_, x, d| field(x, d), 0.0, arc, x0, 1e-12, |t, x| {
        let mut d = vec![0.0; x.len()];
        field(x, &mut d);
        out.push((t, x.to_vec(), d));
    })?;
    Ok(out)
}

fn hermite(a: &(f64, Vec<f64>, Vec<f64>), b: &(f64, Vec<f64>, Vec<f64>), t: f64) -> Vec<f64> {
    let h = b.0 - a.0;
    let s = (t - a.0) / h;
    let (s2, s3) = (s * s, s * s * s);
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    (0..a.1.len())
        .map(|j| h00 * a.1[j] + h10 * h * a.2[j] + h01 * b.1[j] + h11 * h * b.2[j])
        .collect()
}

fn real_f(x: &[f64], sig: &[i8]) -> f64 {
    x.iter().zip(sig).map(|(a, &e)| e as f64 * a * a).sum()
}

/// Transport of a real point along a real segment stays real and follows the gradient
/// flow of q restricted to R^{n+1}; transport commutes with conjugation.
pub fn real_transport_check(z0: &QuadricPoint, path: &BasePath, tol: f64) -> Result<RealTransportReport> {
    if norm(&z0.y) != 0.0 {
        return domain("real_transport_check needs a real starting point");
    }
    let (a, b) = (path.start(), path.end());
    if a.im != 0.0 || b.im != 0.0 || path.segments.iter().any(|s| !matches!(s, Segment::Line { .. })) {
        return domain("real_transport_check needs a real segment path");
    }
    let sig = z0.signature.clone();
    let m = sig.len();

    // transported trajectory at 40 equally spaced base values
    let nodes = 40;
    let mut traj = Vec::new();
    let mut z = z0.clone();
    let mut max_imag: f64 = 0.0;
    for i in 1..=nodes {
        let w0 = a + (b - a) * ((i - 1) as f64 / nodes as f64);
        let w1 = a + (b - a) * (i as f64 / nodes as f64);
        z = transport_ode(&z, &BasePath::segment(w0, w1), 1e-11)?;
        max_imag = max_imag.max(norm(&z.y));
        traj.push((w1.re, z.x.clone()));
    }

    // independent oracle: unit speed gradient flow, located by f value; |∇f| = 2|x| bounds the arc
    let dir = (b.re - a.re).signum();
    let signed: Vec<i8> = sig.iter().map(|&e| if dir > 0.0 { e } else { -e }).collect();
    let lo = traj.iter().map(|(_, x)| norm(x)).fold(norm(&z0.x), f64::min);
    let arc = (b.re - a.re).abs() / (2.0 * lo) * 1.05;
    let samples = gradient_flow_samples(&z0.x, &signed, arc)?;
    let mut dev: f64 = 0.0;
    for (target, x) in &traj {
        let fval = |p: &Vec<f64>| real_f(p, &sig);
        let idx = samples
            .windows(2)
            .position(|w| (fval(&w[0].1) - target) * (fval(&w[1].1) - target) <= 0.0)
            .ok_or_else(|| Error::Integration("gradient flow did not reach target level".into()))?;
        let (p, q) = (&samples[idx], &samples[idx + 1]);
        let (mut l, mut r) = (p.0, q.0);
        for _ in 0..100 {
            let mid = 0.5 * (l + r);
            let fm = real_f(&hermite(p, q, mid), &sig);
            if (fm - target) * (fval(&p.1) - target) > 0.0 {
                l = mid;
            } else {
                r = mid;
            }
        }
        dev = dev.max(dist(&hermite(p, q, 0.5 * (l + r)), x));
    }

    // conjugation equivariance on a non-real point and a non-real path
    let mut ybump = vec![0.0; m];
    ybump[0] = 0.1;
    let zc = QuadricPoint::new(z0.x.clone(), ybump, sig.clone());
    let wc = eval_quadric(&zc);
    let cpath = BasePath::circle_arc(wc, -PI / 3.0);
    let lhs = transport_ode(&zc, &cpath, 1e-11)?.conj();
    let rhs = transport_ode(&zc.conj(), &cpath.conj(), 1e-11)?;
    let conj_res = lhs.distance(&rhs);

    let anchor = "real transport lemma";
    let checks = vec![
        Check::below("real locus preserved", anchor, max_imag, tol),
        Check::below("matches normalized gradient flow", anchor, dev, 1e-4),
        Check::below("conjugation equivariance", anchor, conj_res, 1e-8),
    ];
    Ok(RealTransportReport { max_imag, gradient_deviation: dev, conjugation_residual: conj_res, checks })
}

pub const Q2_SIGNATURE: [i8; 4] = [1, 1, -1, -1];

/// Real points of the q_2 model in the collar q ∈ [-1/2, 1/2], k ∈ [4(r/2)², 4r²] land in
/// the conormal of K_+ after trivialization.
pub fn real_collar_check<R: Rng>(rng: &mut R, samples: usize, r: f64, tol: f64) -> Result<Check> {
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let q: f64 = rng.gen_range(-0.5..=0.5);
        let p: f64 = rng.gen_range(r / 2.0..=r);
        let a2 = (q + (q * q + 4.0 * p * p).sqrt()) / 2.0;
        let (a, b) = (a2.sqrt(), (a2 - q).max(0.0).sqrt());
        let t1: f64 = rng.gen_range(0.0..2.0 * PI);
        let t2: f64 = rng.gen_range(0.0..2.0 * PI);
        let x = vec![a * t1.cos(), a * t1.sin(), b * t2.cos(), b * t2.sin()];
        let z = QuadricPoint::new(x, vec![0.0; 4], Q2_SIGNATURE.to_vec());
        let k = eval_k(&z);
        debug_assert!(k >= 4.0 * (r / 2.0).powi(2) - 1e-9 && k <= 4.0 * r * r + 1e-9);
        let (cv, _) = trivialize(&z)?;
        let off = cv.u[2].abs() + cv.u[3].abs() + cv.v[0].abs() + cv.v[1].abs();
        worst = worst.max(off);
    }
    Ok(Check::below("real collar lies in the conormal of K_+", "main theorem collar computation", worst, tol)
        .with_detail(format!("{samples} samples")))
}

/// ⟨ρ^*(-Σu dv) - Σx dy, h⟩ by central differences, maximized over tangent vectors h to
/// the fiber through z (all-plus model), relative to |h|.
pub fn exactness_residual<R: Rng>(
    rng: &mut R,
    z: &QuadricPoint,
    map: fn(&QuadricPoint) -> CotangentVector,
    trials: usize,
) -> f64 {
    let zs: Vec<C64> = z.coords();
    let r2 = z.norm_sq();
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let re = gaussian_vec(rng, zs.len());
        let im = gaussian_vec(rng, zs.len());
        let mut h: Vec<C64> = re.iter().zip(&im).map(|(a, b)| C64::new(*a, *b)).collect();
        let dq: C64 = zs.iter().zip(&h).map(|(a, b)| a * b).sum();
        for (hj, zj) in h.iter_mut().zip(&zs) {
            *hj -= dq * zj.conj() / r2;
        }
        let hn = h.iter().map(|w| w.norm_sqr()).sum::<f64>().sqrt();
        let eps = 1e-6;
        let shift = |sg: f64| {
            let w: Vec<C64> = zs.iter().zip(&h).map(|(a, b)| a + b * (sg * eps)).collect();
            map(&QuadricPoint::from_complex(&w, vec![1; w.len()]))
        };
        let (p, m) = (shift(1.0), shift(-1.0));
        let c0 = map(z);
        let du_dv: f64 = c0.u.iter().zip(p.v.iter().zip(&m.v)).map(|(u, (a, b))| u * (a - b) / (2.0 * eps)).sum();
        let x_dy: f64 = z.x.iter().zip(&h).map(|(x, w)| x * w.im).sum();
        worst = worst.max((-du_dv - x_dy).abs() / hn);
    }
    worst
}

pub fn rho_standard(z: &QuadricPoint) -> CotangentVector {
    rho_raw(&z.to_standard())
}
