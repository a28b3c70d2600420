// Lagrangian surgery flow F~ = σ_{π h'(|v|)} on T*S^n

use crate::error::{domain, Result};
use crate::local_model::{geodesic_flow, CotangentVector};
use crate::profiles::ProfileFunction;
use crate::report::Check;
use rand::Rng;
use serde::Serialize;
use std::f64::consts::PI;

pub const PATTERN_TOL: f64 = 1e-13;
pub const SEAM_BAND: f64 = 1e-6;

/// K_+ = S^k in the first k+1 coordinates, K_- = S^{n-k-1} in the last n-k.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SubsphereFrame {
    pub n: usize,
    pub k: usize,
}

impl SubsphereFrame {
    pub fn new(n: usize, k: usize) -> Result<SubsphereFrame> {
        if n == 0 || k >= n {
            return domain(format!("need 0 <= k < n, got n={n}, k={k}"));
        }
        Ok(SubsphereFrame { n, k })
    }

    fn split(&self) -> usize {
        self.k + 1
    }

    fn block_mass(&self, w: &[f64], first: bool) -> f64 {
        let (a, b) = w.split_at(self.split());
        let part = if first { a } else { b };
        part.iter().map(|x| x.abs()).fold(0.0, f64::max)
    }

    /// Worst violation of the pattern u ∈ K_+, v ⊥ (first block).
    pub fn off_plus(&self, c: &CotangentVector) -> f64 {
        self.block_mass(&c.u, false).max(self.block_mass(&c.v, true))
    }

    pub fn off_minus(&self, c: &CotangentVector) -> f64 {
        self.block_mass(&c.u, true).max(self.block_mass(&c.v, false))
    }

    fn random_block<R: Rng>(&self, rng: &mut R, first: bool) -> Vec<f64> {
        let m = self.n + 1;
        let g = crate::local_model::gaussian_vec(rng, m);
        (0..m).map(|i| if (i < self.split()) == first { g[i] } else { 0.0 }).collect()
    }

    /// Random point of D(ν*K_±) with |v| = mu.
    pub fn sample<R: Rng>(&self, rng: &mut R, plus: bool, mu: f64) -> CotangentVector {
        let u = self.random_block(rng, plus);
        let v = self.random_block(rng, !plus);
        let mut c = CotangentVector::new(u, v);
        let len = c.mu();
        c.v.iter_mut().for_each(|x| *x *= mu / len);
        c
    }
}

/// F~(u, v) = σ_{π h'(|v|)}(u, v); identity on the zero section.
pub fn surgery_map(c: &CotangentVector, h: &ProfileFunction) -> CotangentVector {
    surgery_flow(c, h, PI)
}

/// σ_{time · h'(|v|)}; `time = -π` inverts `surgery_map`.
pub fn surgery_flow(c: &CotangentVector, h: &ProfileFunction, time: f64) -> CotangentVector {
    let mu = c.mu();
    if mu == 0.0 {
        return c.clone();
    }
    geodesic_flow(c, time * h.d1(mu)).expect("v != 0")
}

#[derive(Debug, Clone, Serialize)]
pub struct OverlapReport {
    pub frame: SubsphereFrame,
    /// images in the K_- pattern with |v| below r/2
    pub subset_violations: usize,
    pub min_mu_in_pattern: f64,
    /// worst residual of the preimage construction for D_{[r/2,r]}(ν*K_-)
    pub superset_residual: f64,
    pub quarter_point_off_pattern: f64,
    pub check: Check,
}

/// Two-sided test of F~(D_r(ν*K_+)) ∩ D_r(ν*K_-) = D_{[r/2,r]}(ν*K_-).
pub fn overlap_check<R: Rng>(
    rng: &mut R,
    frame: &SubsphereFrame,
    h: &ProfileFunction,
    samples: usize,
) -> OverlapReport {
    let r = h.r();
    let mut violations = 0;
    let mut min_mu = f64::INFINITY;
    for i in 0..samples {
        // uniform in |v| or clustered on either side of the seam r/2. The image meets the
        // pattern quadratically in r/2 - |v|, so the band below SEAM_BAND is not resolvable
        // at PATTERN_TOL in double precision and is skipped.
        let mu = match i % 3 {
            0 => r * rng.gen::<f64>(),
            1 => r / 2.0 - r * (SEAM_BAND + 1e-3 * rng.gen::<f64>()),
            _ => r / 2.0 + 1e-3 * r * rng.gen::<f64>(),
        };
        let img = surgery_map(&frame.sample(rng, true, mu), h);
        if frame.off_minus(&img) <= PATTERN_TOL {
            min_mu = min_mu.min(img.mu());
            if img.mu() < r / 2.0 - 1e-9 {
                violations += 1;
            }
        }
    }
    let mut sup: f64 = 0.0;
    for _ in 0..samples {
        let mu = r / 2.0 + (r / 2.0) * rng.gen::<f64>();
        let target = frame.sample(rng, false, mu);
        let pre = geodesic_flow(&target, -PI / 2.0).expect("mu > 0");
        let back = surgery_map(&pre, h);
        sup = sup.max(frame.off_plus(&pre)).max(back.distance(&target));
    }
    let quarter = frame.off_minus(&surgery_map(&frame.sample(rng, true, r / 4.0), h));
    let pass = violations == 0 && sup < 1e-12 && quarter > PATTERN_TOL;
    let check = Check::flag(
        &format!("overlap identity (n={}, k={})", frame.n, frame.k),
        "surgery overlap identity",
        pass,
        format!(
            "subset violations {violations}, min |v| in pattern {min_mu:.6}, superset residual {sup:e}, r/4 offset {quarter:.3e}"
        ),
    );
    OverlapReport {
        frame: *frame,
        subset_violations: violations,
        min_mu_in_pattern: min_mu,
        superset_residual: sup,
        quarter_point_off_pattern: quarter,
        check,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LineReport {
    pub label: String,
    pub d1_ratios: Vec<f64>,
    pub d2_ratios: Vec<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SmoothExtensionReport {
    pub lines: Vec<LineReport>,
    pub zero_section_residual: f64,
    pub check: Check,
}

fn flat(c: &CotangentVector) -> Vec<f64> {
    c.u.iter().chain(&c.v).copied().collect()
}

fn norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Richardson ratios of central first and second differences of F~ along lines
/// t ↦ (u, t e) crossing the zero section; order-2 differences should give ratio ≈ (ε_i/ε_{i+1})².
pub fn smooth_extension_check(h: &ProfileFunction, eps_grid: &[f64]) -> SmoothExtensionReport {
    let lines: Vec<(&str, Vec<f64>, Vec<f64>)> = vec![
        ("n=1 conormal of K_+", vec![1.0, 0.0], vec![0.0, 1.0]),
        ("n=3 conormal of K_+", vec![0.6, 0.8, 0.0, 0.0], vec![0.0, 0.0, 0.8, -0.6]),
        ("n=2 oblique", vec![0.0, 0.6, 0.8], vec![1.0, 0.0, 0.0]),
    ];
    let mut out = Vec::new();
    for (label, u, e) in &lines {
        let at = |t: f64| {
            let c = CotangentVector { u: u.clone(), v: e.iter().map(|x| x * t).collect() };
            flat(&surgery_map(&c, h))
        };
        let f0 = at(0.0);
        let d1: Vec<Vec<f64>> = eps_grid
            .iter()
            .map(|&s| at(s).iter().zip(at(-s)).map(|(a, b)| (a - b) / (2.0 * s)).collect())
            .collect();
        let d2: Vec<Vec<f64>> = eps_grid
            .iter()
            .map(|&s| {
                at(s).iter().zip(at(-s)).zip(&f0).map(|((a, b), c)| (a - 2.0 * c + b) / (s * s)).collect()
            })
            .collect();
        let ratios = |d: &Vec<Vec<f64>>| -> Vec<f64> {
            (0..d.len().saturating_sub(2))
                .map(|i| norm_diff(&d[i], &d[i + 1]) / norm_diff(&d[i + 1], &d[i + 2]))
                .collect()
        };
        let (r1, r2) = (ratios(&d1), ratios(&d2));
        let expect: Vec<f64> =
            (0..eps_grid.len().saturating_sub(2)).map(|i| (eps_grid[i] / eps_grid[i + 1]).powi(2)).collect();
        let ok = |r: &Vec<f64>| r.iter().zip(&expect).all(|(a, b)| ((a - b) / b).abs() <= 0.1);
        let pass = !r1.is_empty() && ok(&r1) && ok(&r2);
        out.push(LineReport { label: label.to_string(), d1_ratios: r1, d2_ratios: r2, pass });
    }
    // along the zero section F~ is the identity
    let mut zs: f64 = 0.0;
    for i in 0..64 {
        let a = i as f64 * PI / 32.0;
        let c = CotangentVector { u: vec![a.cos(), a.sin(), 0.0], v: vec![0.0; 3] };
        zs = zs.max(surgery_map(&c, h).distance(&c));
    }
    let pass = out.iter().all(|l| l.pass) && zs == 0.0;
    let detail = out
        .iter()
        .map(|l| format!("{}: d1 {:?} d2 {:?}", l.label, l.d1_ratios, l.d2_ratios))
        .collect::<Vec<_>>()
        .join("; ");
    SmoothExtensionReport {
        lines: out,
        zero_section_residual: zs,
        check: Check::flag("smooth extension across the zero section", "surgery flow extension", pass, detail),
    }
}

/// Trapezoidal ∮ v·du over a closed sampled loop.
pub fn exactness_integral(lp: &[CotangentVector]) -> Result<f64> {
    if lp.len() < 2 || lp[0].distance(lp.last().unwrap()) > 1e-9 {
        return domain("loop is not closed");
    }
    let mut acc = 0.0;
    for w in lp.windows(2) {
        for j in 0..w[0].u.len() {
            acc += 0.5 * (w[0].v[j] + w[1].v[j]) * (w[1].u[j] - w[0].u[j]);
        }
    }
    Ok(acc)
}

/// Uniform samples of a parameterized loop on [0, 2π], endpoints included.
pub fn sample_loop(f: impl Fn(f64) -> CotangentVector, nodes: usize) -> Vec<CotangentVector> {
    (0..=nodes).map(|i| f(2.0 * PI * (i % nodes) as f64 / nodes as f64)).collect()
}

/// Generating loop of D(ν*K_+) (needs k >= 1): K_+'s great circle with a fixed conormal
/// covector of length t.
pub fn generating_loop(frame: &SubsphereFrame, t: f64, nodes: usize) -> Result<Vec<CotangentVector>> {
    if frame.k == 0 {
        return domain("K_+ = S^0 has no loops");
    }
    let m = frame.n + 1;
    Ok(sample_loop(
        |phi| {
            let mut u = vec![0.0; m];
            u[0] = phi.cos();
            u[1] = phi.sin();
            let mut v = vec![0.0; m];
            v[frame.k + 1] = t;
            CotangentVector { u, v }
        },
        nodes,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::{build_h_profile, build_tilted_profile};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn worked_examples_map() {
        let h = build_h_profile(1.0).unwrap();
        let z = CotangentVector { u: vec![0.0, 1.0], v: vec![0.0, 0.0] };
        assert_eq!(surgery_map(&z, &h), z);
        let f = SubsphereFrame::new(1, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = f.sample(&mut rng, true, 0.8);
        let img = surgery_map(&c, &h);
        assert!(f.off_minus(&img) < 1e-15);
        assert_eq!(img, geodesic_flow(&c, PI / 2.0).unwrap());
        let a = PI * h.d1(1.0 / 8.0);
        assert!(a > 0.0 && a < PI / 2.0);
    }

    #[test]
    fn overlap_both_cases() {
        let h = build_h_profile(1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (n, k) in [(1, 0), (2, 0), (3, 1)] {
            let rep = overlap_check(&mut rng, &SubsphereFrame::new(n, k).unwrap(), &h, 2000);
            assert!(rep.check.pass, "{:?}", rep.check);
        }
    }

    #[test]
    fn smooth_extension_converges_and_detects_broken_profile() {
        let grid = [0.02, 0.01, 0.005, 0.0025];
        let h = build_h_profile(1.0).unwrap();
        let good = smooth_extension_check(&h, &grid);
        assert!(good.check.pass, "{}", good.check.detail);
        let bad = smooth_extension_check(&build_tilted_profile(1.0, 0.1).unwrap(), &grid);
        assert!(!bad.check.pass);
    }

    #[test]
    fn exactness_examples() {
        let zero = sample_loop(|p| CotangentVector { u: vec![p.cos(), p.sin()], v: vec![0.0; 2] }, 100);
        assert_eq!(exactness_integral(&zero).unwrap(), 0.0);
        let f = SubsphereFrame::new(3, 1).unwrap();
        let conormal = sample_loop(
            |p| CotangentVector { u: vec![0.0, 0.0, p.cos(), p.sin()], v: vec![0.3 * p.sin(), 0.2, 0.0, 0.0] },
            100,
        );
        assert_eq!(exactness_integral(&conormal).unwrap(), 0.0);
        let h = build_h_profile(1.0).unwrap();
        let lp = generating_loop(&f, 0.3, 10_000).unwrap();
        let img: Vec<_> = lp.iter().map(|c| surgery_map(c, &h)).collect();
        assert!(exactness_integral(&img).unwrap().abs() < 1e-6);
        assert!(exactness_integral(&img[..10]).is_err());
    }

    #[test]
    fn inverse_flow_round_trip() {
        let h = build_h_profile(1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let c = CotangentVector::random(&mut rng, 4, 1.0);
            let back = surgery_flow(&surgery_map(&c, &h), &h, -PI);
            assert!(back.distance(&c) < 1e-10);
        }
    }
}
