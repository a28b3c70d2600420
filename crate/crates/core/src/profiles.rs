// profile functions R~_s, cut-down R_s, h = t/2 - R_{1/4}

use crate::error::{Error, Result};
use crate::report::Check;
use serde::Serialize;

pub const GRID: usize = 10_000;
pub const STRICT_MARGIN: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ProfileKind {
    Rtilde { s: f64 },
    Rcut { s: f64, r: f64 },
    H { r: f64 },
    /// h(t) + tilt*t, so h'(0) = tilt. Regression fixture for the smooth-extension check.
    Tilted { r: f64, tilt: f64 },
}

/// Cubic Hermite blend of R' on [r/4, r/2]: p(τ) = a·h00(τ) + m·h10(τ).
#[derive(Debug, Clone, Copy, PartialEq)]
struct Blend {
    a: f64,
    m: f64,
    // R at r/4 and r/2
    r_start: f64,
    r_end: f64,
}

impl Blend {
    fn p(&self, tau: f64) -> f64 {
        let t2 = tau * tau;
        let t3 = t2 * tau;
        self.a * (2.0 * t3 - 3.0 * t2 + 1.0) + self.m * (t3 - 2.0 * t2 + tau)
    }

    fn dp(&self, tau: f64) -> f64 {
        (1.0 - tau) * (-6.0 * self.a * tau + self.m * (1.0 - 3.0 * tau))
    }

    // ∫_0^τ p
    fn ip(&self, tau: f64) -> f64 {
        let t2 = tau * tau;
        let t3 = t2 * tau;
        let t4 = t3 * tau;
        self.a * (0.5 * t4 - t3 + tau) + self.m * (0.25 * t4 - 2.0 * t3 / 3.0 + 0.5 * t2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileFunction {
    pub kind: ProfileKind,
    s: f64,
    r: f64,
    blend: Option<Blend>,
}

pub fn eval_rtilde(s: f64, t: f64, order: u8) -> f64 {
    let q = (t * t + s * s / 4.0).sqrt();
    match order {
        0 => 0.5 * t - 0.5 * q,
        1 => 0.5 - t / (2.0 * q),
        _ => -(s * s / 4.0) / (2.0 * q * q * q),
    }
}

impl ProfileFunction {
    pub fn rtilde(s: f64) -> ProfileFunction {
        ProfileFunction { kind: ProfileKind::Rtilde { s }, s, r: f64::INFINITY, blend: None }
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn value(&self, t: f64) -> f64 {
        match self.kind {
            ProfileKind::Rtilde { s } => eval_rtilde(s, t, 0),
            ProfileKind::Rcut { .. } => self.cut(t, 0),
            ProfileKind::H { .. } => 0.5 * t - self.cut(t, 0),
            ProfileKind::Tilted { tilt, .. } => 0.5 * t - self.cut(t, 0) + tilt * t,
        }
    }

    pub fn d1(&self, t: f64) -> f64 {
        match self.kind {
            ProfileKind::Rtilde { s } => eval_rtilde(s, t, 1),
            ProfileKind::Rcut { .. } => self.cut(t, 1),
            ProfileKind::H { .. } => 0.5 - self.cut(t, 1),
            ProfileKind::Tilted { tilt, .. } => 0.5 - self.cut(t, 1) + tilt,
        }
    }

    pub fn d2(&self, t: f64) -> f64 {
        match self.kind {
            ProfileKind::Rtilde { s } => eval_rtilde(s, t, 2),
            _ => {
                let c = self.cut(t, 2);
                if matches!(self.kind, ProfileKind::Rcut { .. }) {
                    c
                } else {
                    -c
                }
            }
        }
    }

    // R_s for t >= 0, extended by R(-t) = R(t) - t
    fn cut(&self, t: f64, order: u8) -> f64 {
        if t < 0.0 {
            return match order {
                0 => self.cut(-t, 0) + t,
                1 => 1.0 - self.cut(-t, 1),
                _ => self.cut(-t, 2),
            };
        }
        let b = self.blend.expect("cut profile carries a blend");
        let (s, q) = (self.s, self.r / 4.0);
        if t <= q {
            eval_rtilde(s, t, order)
        } else if t < 2.0 * q {
            let tau = (t - q) / q;
            match order {
                0 => b.r_start + q * b.ip(tau),
                1 => b.p(tau),
                _ => b.dp(tau) / q,
            }
        } else {
            match order {
                0 => b.r_end,
                _ => 0.0,
            }
        }
    }
}

fn make_blend(s: f64, r: f64) -> Result<Blend> {
    let q = r / 4.0;
    let a = eval_rtilde(s, q, 1);
    let m = eval_rtilde(s, q, 2) * q;
    // p' < 0 on [0,1) iff m < 0 and m > -3a
    if !(a > 0.0 && m < 0.0 && m > -3.0 * a) {
        return Err(Error::Construction(format!(
            "no monotone Hermite blend for s={s}, r={r} (a={a}, m={m})"
        )));
    }
    let mut b = Blend { a, m, r_start: eval_rtilde(s, q, 0), r_end: 0.0 };
    b.r_end = b.r_start + q * b.ip(1.0);
    Ok(b)
}

pub fn build_cut_profile(s: f64, r: f64) -> Result<ProfileFunction> {
    if !(s > 0.0 && r > 0.0) {
        return Err(Error::Construction(format!("need s, r > 0 (s={s}, r={r})")));
    }
    let p = ProfileFunction {
        kind: ProfileKind::Rcut { s, r },
        s,
        r,
        blend: Some(make_blend(s, r)?),
    };
    let failed: Vec<_> = cut_conditions(&p).into_iter().filter(|c| !c.pass).collect();
    if !failed.is_empty() {
        return Err(Error::Construction(format!("cut profile fails {:?}", failed)));
    }
    Ok(p)
}

pub fn build_h_profile(r: f64) -> Result<ProfileFunction> {
    let cut = build_cut_profile(0.25, r)?;
    let h = ProfileFunction { kind: ProfileKind::H { r }, ..cut };
    let failed: Vec<_> = h_conditions(&h).into_iter().filter(|c| !c.pass).collect();
    if !failed.is_empty() {
        return Err(Error::Construction(format!("h profile fails {:?}", failed)));
    }
    Ok(h)
}

pub fn build_tilted_profile(r: f64, tilt: f64) -> Result<ProfileFunction> {
    let cut = build_cut_profile(0.25, r)?;
    Ok(ProfileFunction { kind: ProfileKind::Tilted { r, tilt }, ..cut })
}

fn grid(r: f64) -> impl Iterator<Item = f64> {
    (0..=GRID).map(move |i| r * i as f64 / GRID as f64)
}

/// The three inequality/equality conditions on R_s over [0, r]. Reflection is separate.
pub fn cut_conditions(p: &ProfileFunction) -> Vec<Check> {
    let (s, r) = (p.s, p.r);
    let anchor = "cut-down transport profile";
    let mut agree: f64 = 0.0;
    let mut flat: f64 = 0.0;
    let mut concave = f64::INFINITY;
    let mut monotone = true;
    let mut prev = f64::INFINITY;
    for t in grid(r) {
        if t <= r / 4.0 {
            agree = agree.max((p.value(t) - eval_rtilde(s, t, 0)).abs());
        }
        if t >= r / 2.0 {
            flat = flat.max(p.d1(t).abs());
        } else {
            concave = concave.min(-p.d2(t));
        }
        let d = p.d1(t);
        if d > prev {
            monotone = false;
        }
        prev = d;
    }
    vec![
        Check::below("R_s = R~_s on [0, r/4]", anchor, agree, 1e-15),
        Check::below("R_s' = 0 on [r/2, r]", anchor, flat, 1e-15),
        Check::flag(
            "R_s'' < 0 on [0, r/2)",
            anchor,
            concave > STRICT_MARGIN,
            format!("min -R'' = {concave:e}"),
        ),
        Check::flag("R_s' non-increasing on [0, r]", anchor, monotone, ""),
    ]
}

/// The first three conditions on h over [0, r]. The reflection condition is checked
/// by `verify_reflection`.
pub fn h_conditions(h: &ProfileFunction) -> Vec<Check> {
    let r = h.r;
    let anchor = "surgery profile conditions";
    let mut plateau: f64 = 0.0;
    let mut convex = f64::INFINITY;
    let mut range_ok = true;
    for t in grid(r) {
        let d = h.d1(t);
        if !(-1e-15..=0.5 + 1e-15).contains(&d) {
            range_ok = false;
        }
        if t >= r / 2.0 {
            plateau = plateau.max((d - 0.5).abs());
        } else {
            convex = convex.min(h.d2(t));
        }
    }
    vec![
        Check::below("h'(0) = 0", anchor, h.d1(0.0).abs(), 1e-15),
        Check::below("h' = 1/2 on [r/2, r]", anchor, plateau, 1e-15),
        Check::flag(
            "h'' > 0 on [0, r/2)",
            anchor,
            convex > STRICT_MARGIN,
            format!("min h'' = {convex:e}"),
        ),
        Check::flag("h' in [0, 1/2] on [0, r]", anchor, range_ok, ""),
    ]
}

#[derive(Debug, Clone, Serialize)]
pub struct ReflectionReport {
    pub residual: f64,
    /// max |p(-t) - p(t)| on the same grid: the parity defect.
    pub parity_residual: f64,
    pub check: Check,
}

/// Max over a grid of [0, delta] of |p(-t) - p(t) + t|; PASS iff < 1e-12.
pub fn verify_reflection(p: &ProfileFunction, delta: f64) -> ReflectionReport {
    let mut residual: f64 = 0.0;
    let mut parity: f64 = 0.0;
    if delta > 0.0 {
        for i in 0..=1000 {
            let t = delta * i as f64 / 1000.0;
            residual = residual.max((p.value(-t) - p.value(t) + t).abs());
            parity = parity.max((p.value(-t) - p.value(t)).abs());
        }
    }
    let check = Check::below(
        &format!("{:?}: p(-t) = p(t) - t on |t| <= {delta}", p.kind),
        "reflection condition",
        residual,
        1e-12,
    );
    ReflectionReport { residual, parity_residual: parity, check }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rtilde_closed_form_values() {
        for s in [0.25, 0.5, 1.0] {
            assert!((eval_rtilde(s, 0.0, 0) + s / 4.0).abs() < 1e-16);
            assert!((eval_rtilde(s, 1e-14, 1) - 0.5).abs() < 1e-12);
            assert!(eval_rtilde(s, 1e3, 1).abs() < 1e-6);
        }
    }

    #[test]
    fn rtilde_derivatives_match_differences() {
        let s = 0.5;
        for t in [-0.3, 0.01, 0.2, 0.7] {
            let e = 1e-5;
            let d1 = (eval_rtilde(s, t + e, 0) - eval_rtilde(s, t - e, 0)) / (2.0 * e);
            let d2 = (eval_rtilde(s, t + e, 1) - eval_rtilde(s, t - e, 1)) / (2.0 * e);
            assert!((d1 - eval_rtilde(s, t, 1)).abs() < 1e-9);
            assert!((d2 - eval_rtilde(s, t, 2)).abs() < 1e-8);
        }
    }

    #[test]
    fn cut_profile_integrates_its_derivative() {
        let p = build_cut_profile(0.5, 1.0).unwrap();
        // Simpson on R' against the analytic R
        let n = 2000;
        for end in [0.3, 0.4, 0.49, 0.8] {
            let h = end / n as f64;
            let mut acc = p.d1(0.0) + p.d1(end);
            for i in 1..n {
                acc += p.d1(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            let integral = acc * h / 3.0;
            assert!((p.value(end) - p.value(0.0) - integral).abs() < 1e-11, "end {end}");
        }
    }

    #[test]
    fn cut_profile_is_c2_at_seams() {
        let p = build_cut_profile(0.25, 1.0).unwrap();
        for seam in [0.25, 0.5] {
            let e = 1e-12;
            assert!((p.d1(seam - e) - p.d1(seam + e)).abs() < 1e-10);
            assert!((p.d2(seam - e) - p.d2(seam + e)).abs() < 1e-9);
        }
    }

    #[test]
    fn worked_examples_cut() {
        let p = build_cut_profile(1.0, 1.0).unwrap();
        assert_eq!(p.value(0.2), eval_rtilde(1.0, 0.2, 0));
        assert_eq!(p.d1(0.9), 0.0);
        assert!(p.d2(0.3) < 0.0);
    }

    #[test]
    fn worked_examples_h() {
        let h = build_h_profile(1.0).unwrap();
        assert_eq!(h.d1(0.0), 0.0);
        for t in [0.5, 0.7, 1.0] {
            assert_eq!(h.d1(t), 0.5);
        }
        assert!(h.d2(0.3) > 0.0);
    }

    #[test]
    fn blend_exists_across_scales_and_rejects_bad_input() {
        for k in -2..=2 {
            let s = 10f64.powi(k);
            assert!(build_cut_profile(s, 1.0).is_ok(), "s = {s}");
        }
        // R~'' ~ s² on [0, r/2) falls below the strictness margin
        assert!(matches!(build_cut_profile(1e-6, 1.0), Err(Error::Construction(_))));
        assert!(build_cut_profile(0.0, 1.0).is_err());
        assert!(build_cut_profile(0.5, -1.0).is_err());
    }

    #[test]
    fn reflection_exact_for_r_profiles() {
        let rt = verify_reflection(&ProfileFunction::rtilde(0.5), 0.05);
        assert!(rt.check.pass, "{}", rt.residual);
        let rc = verify_reflection(&build_cut_profile(0.25, 1.0).unwrap(), 1.0 / 16.0);
        assert!(rc.check.pass, "{}", rc.residual);
        assert!(verify_reflection(&ProfileFunction::rtilde(0.5), 0.0).check.pass);
    }

    #[test]
    fn h_is_even_so_its_reflection_residual_is_delta() {
        // h(-t) = -t/2 - R(t) + t = h(t); the odd-shift condition cannot hold with h'(0) = 0
        let h = build_h_profile(1.0).unwrap();
        let rep = verify_reflection(&h, 0.05);
        assert!(rep.parity_residual < 1e-15);
        assert!((rep.residual - 0.05).abs() < 1e-15);
        assert!(!rep.check.pass);
    }
}
