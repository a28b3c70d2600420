// global model: critical values, base paths, vanishing cycles, monodromy

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{data, Error, Result};
use crate::fiber_complex::{
    build_surface_fiber_with, half_twist_correspondence, intersection_form, Chirality, H1Basis, SurfaceFiber,
};
use crate::homology::{
    build_homological_fiber_model, is_unimodular, mat_mul_i64, morse_homology_of_n, preserves_form,
    total_space_homology, twist_matrix, FiberHomology, Group, HandleDataHighDim, HomologicalFiber, HomologyReport,
    MorseData2D, MorseInput,
};
use crate::local_model::{
    gaussian_vec, geodesic_flow, rho, rho_inverse, transport_ode, trivialize, trivialized_transport_ode, untrivialize,
    BasePath, CotangentVector, QuadricPoint, Segment,
};
use crate::profiles::{build_cut_profile, build_h_profile};
use crate::report::Check;
use crate::surgery::surgery_map;

pub const DETOUR_RADIUS: f64 = 0.25;
pub const BASEPOINT_OFFSET: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriticalValue {
    pub value: f64,
    pub index: usize,
    /// number of critical points over this value
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VanishingCycle {
    pub name: String,
    pub critical_value: f64,
    /// index into `FibrationModel::paths`
    pub path: usize,
    /// class in the free part of H_mid of the fiber at b
    pub class: Vec<i64>,
}

/// Simultaneous twists along the cycles over one critical value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwistSpec {
    pub critical_value: f64,
    pub cycles: Vec<String>,
    pub sign: i64,
}

#[derive(Debug, Clone)]
pub enum FiberHandle {
    Surface(Box<SurfaceFiber>),
    Homological(Box<HomologicalFiber>),
}

#[derive(Debug, Clone, Serialize)]
pub struct FibrationModel {
    pub dim: usize,
    /// global sign convention: chirality of the twisted arcs, surgery sign and twist sign
    pub sign: i64,
    pub critical_values: Vec<CriticalValue>,
    pub basepoint: f64,
    /// one path per critical value, aligned with `critical_values`
    pub paths: Vec<BasePath>,
    pub cycles: Vec<VanishingCycle>,
    pub word: Vec<TwistSpec>,
    pub fiber_homology: FiberHomology,
    /// intersection form on the fiber's middle homology, where determined
    pub form: Option<Vec<Vec<i64>>>,
    pub correspondence: Check,
    #[serde(skip)]
    pub fiber: FiberHandle,
    #[serde(skip)]
    pub input: MorseInput,
}

fn values(indices: &[(usize, usize)]) -> Vec<CriticalValue> {
    indices.iter().map(|&(index, points)| CriticalValue { value: index as f64, index, points }).collect()
}

fn chirality(sign: i64) -> Chirality {
    if sign > 0 {
        Chirality::Lower
    } else {
        Chirality::Upper
    }
}

pub fn assemble(input: &MorseInput) -> Result<FibrationModel> {
    assemble_with(input, 1)
}

pub fn assemble_with(input: &MorseInput, sign: i64) -> Result<FibrationModel> {
    if sign != 1 && sign != -1 {
        return data("sign flag must be +1 or -1");
    }
    let model = match input {
        MorseInput::Surface(d) => assemble_surface(d, sign)?,
        MorseInput::High(h) => assemble_high(h, sign)?,
    };
    let failed: Vec<String> = path_checks(&model).into_iter().filter(|c| !c.pass).map(|c| c.name).collect();
    if !failed.is_empty() {
        return Err(Error::Construction(format!("vanishing paths fail {failed:?}")));
    }
    Ok(model)
}

fn word_of(crit: &[CriticalValue], cycles: &[VanishingCycle], sign: i64) -> Vec<TwistSpec> {
    crit.iter()
        .map(|c| TwistSpec {
            critical_value: c.value,
            cycles: cycles.iter().filter(|v| v.critical_value == c.value).map(|v| v.name.clone()).collect(),
            sign,
        })
        .collect()
}

fn assemble_surface(d: &MorseData2D, sign: i64) -> Result<FibrationModel> {
    d.validate()?;
    let k = d.k();
    let crit = if k == 0 { values(&[(0, 1), (2, 1)]) } else { values(&[(0, 1), (1, k), (2, 1)]) };
    let basepoint = basepoint_for(2, &crit);
    let paths = build_paths(2, &crit, basepoint)?;
    let f = build_surface_fiber_with(d, chirality(sign))?;
    let tc = half_twist_correspondence(&f)?;
    let basis = H1Basis::new(&f.surface)?;
    let form = intersection_form(&f.surface, &basis)?;
    if !form.consistency.pass {
        return Err(Error::Construction(format!("intersection form inconsistent: {}", form.consistency.detail)));
    }
    let top = crit.len() - 1;
    let mut cycles = Vec::new();
    for c in f.vanishing_curves() {
        let slot = if c.name == "L0" {
            0
        } else if c.name == "L2" {
            top
        } else {
            1
        };
        cycles.push(VanishingCycle {
            name: c.name.clone(),
            critical_value: crit[slot].value,
            path: slot,
            class: basis.class_of(&f.surface, c)?,
        });
    }
    let fiber_homology = FiberHomology {
        degrees: vec![Group::free(1), Group { rank: basis.rank, torsion: basis.torsion.clone() }],
        mid: 1,
    };
    Ok(FibrationModel {
        dim: 2,
        sign,
        word: word_of(&crit, &cycles, sign),
        critical_values: crit,
        basepoint,
        paths,
        cycles,
        fiber_homology,
        form: Some(form.omega),
        correspondence: tc.check,
        fiber: FiberHandle::Surface(Box::new(f)),
        input: MorseInput::Surface(d.clone()),
    })
}

fn assemble_high(h: &HandleDataHighDim, sign: i64) -> Result<FibrationModel> {
    let fib = build_homological_fiber_model(h, sign)?;
    let dim = h.dim();
    let crit = match h {
        HandleDataHighDim::Heegaard { genus, .. } => values(&[(0, 1), (1, *genus), (2, *genus), (3, 1)]),
        HandleDataHighDim::Kirby { linking } if linking.is_empty() => values(&[(0, 1), (4, 1)]),
        HandleDataHighDim::Kirby { linking } => values(&[(0, 1), (2, linking.len()), (4, 1)]),
    };
    let basepoint = basepoint_for(dim, &crit);
    let paths = build_paths(dim, &crit, basepoint)?;
    let mut cycles = Vec::new();
    for name in &fib.vanishing {
        let slot = slot_of(dim, name, crit.len())?;
        let class = fib.class(name).ok_or_else(|| Error::Data(format!("no class named {name}")))?.clone();
        cycles.push(VanishingCycle { name: name.clone(), critical_value: crit[slot].value, path: slot, class });
    }
    let n = fib.basis.len();
    let determined = fib.pairing.iter().all(|r| r.iter().all(|x| x.is_some()));
    let form = determined.then(|| (0..n).map(|i| (0..n).map(|j| fib.pairing[i][j].unwrap()).collect()).collect());
    let correspondence = Check::flag(
        "vanishing_cycle_census",
        "vanishing spheres correspond to L_0, ..., L_top",
        cycles.len() == crit.iter().map(|c| c.points).sum::<usize>(),
        format!("{} cycles", cycles.len()),
    );
    Ok(FibrationModel {
        dim,
        sign,
        word: word_of(&crit, &cycles, sign),
        critical_values: crit,
        basepoint,
        paths,
        cycles,
        fiber_homology: fib.homology.clone(),
        form,
        correspondence,
        fiber: FiberHandle::Homological(Box::new(fib)),
        input: MorseInput::High(h.clone()),
    })
}

// which critical value a named cycle of the homological fiber lives over
fn slot_of(dim: usize, name: &str, nvals: usize) -> Result<usize> {
    let slot = match (dim, name) {
        (_, "L0") => 0,
        (3, "L3") | (4, "L4") => nvals - 1,
        (3, n) if n.starts_with("L1[") => 1,
        (3, n) if n.starts_with("L2[") => 2,
        (4, n) if n.starts_with("L2[") => 1,
        _ => return data(format!("cannot place vanishing cycle {name}")),
    };
    Ok(slot)
}

/// b = c_mid − 1/4 in the three-value pattern, c_1 + 1/4 in dim 3, and left of the top value
/// when there are only two.
fn basepoint_for(dim: usize, crit: &[CriticalValue]) -> f64 {
    if dim == 3 {
        crit[1].value + BASEPOINT_OFFSET
    } else {
        crit[1].value - BASEPOINT_OFFSET
    }
}

fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

// lower half-circle from the real point `from` to the real point `to`
fn lower_arc(from: f64, to: f64) -> Segment {
    let center = re((from + to) / 2.0);
    let radius = (to - from).abs() / 2.0;
    if from < to {
        Segment::arc(center, radius, -PI, 0.0)
    } else {
        Segment::arc(center, radius, 0.0, -PI)
    }
}

fn build_paths(dim: usize, crit: &[CriticalValue], b: f64) -> Result<Vec<BasePath>> {
    let c: Vec<f64> = crit.iter().map(|c| c.value).collect();
    let r = DETOUR_RADIUS;
    if dim == 3 {
        let (c0, c1, c2, c3) = (c[0], c[1], c[2], c[3]);
        return Ok(vec![
            BasePath::new(vec![lower_arc(b, c1 - r), Segment::line(re(c1 - r), re(c0))])?,
            BasePath::segment(re(b), re(c1)),
            BasePath::segment(re(b), re(c2)),
            // the straight run [b, c2 - r] is occupied by the path to c2, so this path leaves b
            // on a wider lower half-circle that clears c2 and rejoins ℝ at c2 + r
            BasePath::new(vec![lower_arc(b, c2 + r), Segment::line(re(c2 + r), re(c3))])?,
        ]);
    }
    if c.len() == 2 {
        return Ok(vec![BasePath::segment(re(b), re(c[0])), BasePath::segment(re(b), re(c[1]))]);
    }
    let (c0, cm, ct) = (c[0], c[1], c[2]);
    Ok(vec![
        BasePath::segment(re(b), re(c0)),
        BasePath::segment(re(b), re(cm)),
        BasePath::new(vec![Segment::arc(re(cm), r, -PI, 0.0), Segment::line(re(cm + r), re(ct))])?,
    ])
}

pub fn vanishing_paths(model: &FibrationModel) -> Vec<BasePath> {
    model.paths.clone()
}

fn sample_path(p: &BasePath, step: f64) -> Vec<(f64, C64)> {
    let mut out = Vec::new();
    let mut offset = 0.0;
    for s in &p.segments {
        let len = s.length();
        let n = (len / step).ceil().max(1.0) as usize;
        for i in 0..=n {
            let l = len * i as f64 / n as f64;
            out.push((offset + l, s.eval(l).0));
        }
        offset += len;
    }
    out
}

const PATH_STEP: f64 = 1e-3;
// arc length near b excluded from the pairwise disjointness test
const PATH_HUB: f64 = 0.05;

/// Embeddedness, endpoints, lower-half-plane detours and pairwise disjointness away from b.
pub fn path_checks(model: &FibrationModel) -> Vec<Check> {
    let b = re(model.basepoint);
    let crit: Vec<f64> = model.critical_values.iter().map(|c| c.value).collect();
    let mut checks = Vec::new();
    let ascending = crit.windows(2).all(|w| w[0] < w[1]);
    let between = crit.windows(2).any(|w| w[0] < model.basepoint && model.basepoint < w[1]);
    checks.push(Check::flag("critical_values_ascending", "c_i = index", ascending, format!("{crit:?}")));
    checks.push(Check::flag(
        "basepoint_between_values",
        "b = c_mid - 1/4",
        between,
        format!("b = {}", model.basepoint),
    ));
    let mut endpoint = 0.0f64;
    let mut embedded = true;
    let mut lower = true;
    let mut clearance = f64::INFINITY;
    for (i, p) in model.paths.iter().enumerate() {
        embedded &= p.is_embedded();
        endpoint = endpoint.max((p.start() - b).norm()).max((p.end() - re(crit[i])).norm());
        for s in &p.segments {
            match *s {
                Segment::Line { a, b } => lower &= a.1 == 0.0 && b.1 == 0.0,
                Segment::Arc { center, start, end, .. } => {
                    let (lo, hi) = (start.min(end), start.max(end));
                    lower &= center.1 == 0.0 && lo >= -PI - 1e-12 && hi <= 1e-12;
                }
            }
        }
        for (_, z) in sample_path(p, PATH_STEP) {
            for (j, &c) in crit.iter().enumerate() {
                if j != i {
                    clearance = clearance.min((z - re(c)).norm());
                }
            }
        }
    }
    checks.push(Check::below("paths_start_b_end_c", "gamma_i runs from b to c_i", endpoint, 1e-12));
    checks.push(Check::flag("paths_embedded", "vanishing paths are embedded", embedded, ""));
    checks.push(Check::flag("paths_lower_detours", "half arcs in the lower half plane", lower, ""));
    checks.push(
        Check::flag("paths_avoid_other_values", "paths meet one critical value", clearance > 0.2, "")
            .with_detail(format!("clearance {clearance:.4}")),
    );
    let samples: Vec<Vec<C64>> = model
        .paths
        .iter()
        .map(|p| sample_path(p, PATH_STEP).into_iter().filter(|(l, _)| *l > PATH_HUB).map(|(_, z)| z).collect())
        .collect();
    let mut gap = f64::INFINITY;
    for i in 0..samples.len() {
        for j in i + 1..samples.len() {
            for a in &samples[i] {
                for q in &samples[j] {
                    gap = gap.min((a - q).norm());
                }
            }
        }
    }
    checks.push(
        Check::flag("paths_disjoint", "paths meet only at b", gap > 2.0 * PATH_STEP, "")
            .with_detail(format!("min gap {gap:.4}")),
    );
    checks
}

// ---------------------------------------------------------------------------------------------
// flattening

// C^∞ step on [0, 1], flat at both ends
fn smooth_step(t: f64) -> f64 {
    let f = |x: f64| if x <= 0.0 { 0.0 } else { (-1.0 / x).exp() };
    let (a, b) = (f(t), f(1.0 - t));
    if a + b == 0.0 {
        0.0
    } else {
        a / (a + b)
    }
}

/// Radial profile of ψ: identity up to 1/2, t + step((t − 1/2)/(1/4))/4 on [1/2, 3/4], then 1.
pub fn flatten_radius(t: f64) -> f64 {
    if t <= 0.5 {
        t
    } else if t < 0.75 {
        t + 0.25 * smooth_step((t - 0.5) / 0.25)
    } else {
        1.0
    }
}

pub fn flatten_reparam(x: C64) -> C64 {
    let t = x.norm();
    if t == 0.0 {
        return x;
    }
    x * (flatten_radius(t) / t)
}

// ---------------------------------------------------------------------------------------------
// monodromy

#[derive(Debug, Clone, Serialize)]
pub struct TwistMatrix {
    pub critical_value: f64,
    pub cycles: Vec<String>,
    /// columns are images of basis vectors
    pub matrix: Vec<Vec<i64>>,
    pub unimodular: bool,
    pub preserves_form: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Monodromy {
    pub twists: Vec<TwistMatrix>,
    /// ordered product left to right by ascending critical value
    pub total: Vec<Vec<i64>>,
    pub checks: Vec<Check>,
}

fn identity(n: usize) -> Vec<Vec<i64>> {
    (0..n).map(|i| (0..n).map(|j| i64::from(i == j)).collect()).collect()
}

pub fn monodromy_word(model: &FibrationModel) -> Result<Monodromy> {
    if model.dim != 2 {
        return data("monodromy word needs the geometric dim-2 model");
    }
    let form = model.form.as_ref().ok_or_else(|| Error::Data("no intersection form".into()))?;
    let n = form.len();
    let mut twists = Vec::new();
    let mut total = identity(n);
    for twist in &model.word {
        let mut m = identity(n);
        for name in &twist.cycles {
            let cyc = model.cycles.iter().find(|c| &c.name == name).expect("cycle in word");
            m = mat_mul_i64(&m, &twist_matrix(&cyc.class, form, twist.sign));
        }
        total = mat_mul_i64(&total, &m);
        twists.push(TwistMatrix {
            critical_value: twist.critical_value,
            cycles: twist.cycles.clone(),
            unimodular: is_unimodular(&m),
            preserves_form: preserves_form(&m, form),
            matrix: m,
        });
    }
    let mut checks = vec![
        Check::flag(
            "monodromy_unimodular",
            "twists are automorphisms of H_1",
            twists.iter().all(|t| t.unimodular),
            "",
        ),
        Check::flag(
            "monodromy_preserves_form",
            "twists preserve the intersection form",
            twists.iter().all(|t| t.preserves_form),
            "",
        ),
        Check::flag(
            "monodromy_word_length",
            "one twist per critical value",
            twists.len() == model.critical_values.len(),
            format!("{} twists", twists.len()),
        ),
    ];
    if model.cycles.len() == 2 {
        checks.push(Check::flag("two_values_trivial", "<core, core> = 0", total == identity(n), ""));
    }
    Ok(Monodromy { twists, total, checks })
}

// ---------------------------------------------------------------------------------------------
// homology

/// H_*(E) from the fiber and the ordered vanishing classes, next to the Morse homology of N.
pub fn model_homology(model: &FibrationModel) -> Result<(HomologyReport, HomologyReport)> {
    let classes: Vec<Vec<i64>> = model.cycles.iter().map(|c| c.class.clone()).collect();
    let total = total_space_homology(&model.fiber_homology, &classes)?;
    let morse = morse_homology_of_n(&model.input)?.trimmed();
    Ok((total, morse))
}

// ---------------------------------------------------------------------------------------------
// numeric half-twist check

pub const HALFTWIST_SAMPLES: usize = 50;
pub const HALFTWIST_SEED: u64 = 0x4a1f;
const ODE_TOL: f64 = 1e-11;
const PLATEAU_TOL: f64 = 1e-9;
const ROUNDTRIP_TOL: f64 = 1e-6;
const R: f64 = 1.0;

#[derive(Debug, Clone, Serialize)]
pub struct HalftwistReport {
    pub n: usize,
    pub s: f64,
    pub signature: Vec<i8>,
    pub samples: usize,
    pub max_deviation: f64,
    pub plateau_samples: usize,
    pub plateau_deviation: f64,
    pub roundtrip: f64,
    pub checks: Vec<Check>,
    pub pass: bool,
}

/// q_2-type signature: the first ⌈(n+1)/2⌉ squares positive.
pub fn q2_signature(n: usize) -> Vec<i8> {
    let m = n + 1;
    (0..m).map(|j| if j < m.div_ceil(2) { 1 } else { -1 }).collect()
}

pub fn halftwist_numeric_check(n: usize, s: f64, tol: f64) -> Result<HalftwistReport> {
    if !(1..=3).contains(&n) {
        return data(format!("halftwist check supports n in 1..=3, got {n}"));
    }
    halftwist_check_signature(&q2_signature(n), s, tol, HALFTWIST_SEED)
}

/// The same dictionary with the signatures of q_1 = z1² + z2² − z3² and q_2 = z1² − z2² − z3².
pub fn halftwist_dim3_check(s: f64, tol: f64) -> Result<Vec<HalftwistReport>> {
    [vec![1, 1, -1], vec![1, -1, -1]].iter().map(|sig| halftwist_check_signature(sig, s, tol, HALFTWIST_SEED)).collect()
}

/// Deterministic grid with |v| = r(i + 1/2)/N.
pub fn halftwist_grid(dim: usize, seed: u64) -> Vec<CotangentVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..HALFTWIST_SAMPLES)
        .map(|i| {
            let mut c = CotangentVector::new(gaussian_vec(&mut rng, dim), gaussian_vec(&mut rng, dim));
            let mu = c.mu();
            let target = R * (i as f64 + 0.5) / HALFTWIST_SAMPLES as f64;
            c.v.iter_mut().for_each(|x| *x *= target / mu);
            c
        })
        .collect()
}

struct Sample {
    mu: f64,
    deviation: f64,
    plateau: f64,
    roundtrip: f64,
}

/// ν: fiber over −s → T*Sⁿ, ν = ρ_s ∘ m(i) ∘ α.
fn nu(z: &QuadricPoint, s: f64) -> Result<CotangentVector> {
    rho(&z.to_standard().scale(C64::i()), s)
}

fn one_sample(c: &CotangentVector, sig: &[i8], s: f64) -> Result<Sample> {
    let h = build_h_profile(R)?;
    let cut = build_cut_profile(s, R)?;
    let mu = c.mu();
    let arc = BasePath::circle_arc(re(s), -PI);
    let z0 = rho_inverse(c, s, sig)?;
    let (z_end, roundtrip) = if mu <= R / 4.0 {
        // the honest quadric, where the cut-down model agrees with it
        let z = transport_ode(&z0, &arc, ODE_TOL)?;
        let back = transport_ode(&z, &arc.reversed(), ODE_TOL)?;
        (z, back.distance(&z0))
    } else {
        let (c0, _) = trivialize(&z0)?;
        let c1 = trivialized_transport_ode(&c0, -PI, &cut, ODE_TOL)?;
        let back = trivialized_transport_ode(&c1, PI, &cut, ODE_TOL)?;
        (untrivialize(&c1, re(-s), sig)?, back.distance(&c0))
    };
    let lhs = nu(&z_end, s)?;
    let rhs = surgery_map(c, &h);
    let sigma = geodesic_flow(c, PI / 2.0)?;
    let plateau = if mu >= R / 2.0 { lhs.distance(&sigma).max(rhs.distance(&sigma)) } else { 0.0 };
    Ok(Sample { mu, deviation: lhs.distance(&rhs), plateau, roundtrip })
}

pub fn halftwist_check_signature(sig: &[i8], s: f64, tol: f64, seed: u64) -> Result<HalftwistReport> {
    let n = sig.len() - 1;
    let grid = halftwist_grid(n + 1, seed);
    let results: Vec<Result<Sample>> = grid.par_iter().map(|c| one_sample(c, sig, s)).collect();
    let samples: Vec<Sample> = results.into_iter().collect::<Result<_>>()?;
    let max_deviation = samples.iter().map(|x| x.deviation).fold(0.0, f64::max);
    let plateau: Vec<&Sample> = samples.iter().filter(|x| x.mu >= R / 2.0).collect();
    let plateau_deviation = plateau.iter().map(|x| x.plateau).fold(0.0, f64::max);
    let roundtrip = samples.iter().map(|x| x.roundtrip).fold(0.0, f64::max);
    let checks = vec![
        Check::below("halftwist_deviation", "nu o tau_{pi/2} o rho^{-1} = phi^h_pi", max_deviation, tol),
        Check::below("halftwist_plateau", "F~ = sigma_{pi/2} on D_[r/2,r]", plateau_deviation, PLATEAU_TOL),
        Check::below("halftwist_roundtrip", "transport is invertible", roundtrip, ROUNDTRIP_TOL),
    ];
    let pass = checks.iter().all(|c| c.pass);
    Ok(HalftwistReport {
        n,
        s,
        signature: sig.to_vec(),
        samples: samples.len(),
        max_deviation,
        plateau_samples: plateau.len(),
        plateau_deviation,
        roundtrip,
        checks,
        pass,
    })
}

// ---------------------------------------------------------------------------------------------
// base diagram

const PX: f64 = 160.0;

/// Critical values, basepoint and vanishing paths; one `<path class="arc">` per detour.
pub fn render_base_svg(model: &FibrationModel) -> String {
    let lo = model.critical_values.first().map_or(0.0, |c| c.value) - 0.5;
    let hi = model.critical_values.last().map_or(0.0, |c| c.value) + 0.5;
    let w = (hi - lo) * PX;
    let h = 1.6 * PX;
    let x = |v: f64| (v - lo) * PX;
    let y = |v: f64| 0.5 * PX - v * PX;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.1}" height="{h:.1}" viewBox="0 0 {w:.1} {h:.1}">"#
    );
    let _ = writeln!(
        out,
        r##"<line x1="0" y1="{:.2}" x2="{w:.2}" y2="{:.2}" stroke="#999" stroke-dasharray="4 4"/>"##,
        y(0.0),
        y(0.0)
    );
    for (i, p) in model.paths.iter().enumerate() {
        for seg in &p.segments {
            match *seg {
                Segment::Line { a, b } => {
                    let _ = writeln!(
                        out,
                        r#"<line class="segment" data-path="{i}" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black"/>"#,
                        x(a.0),
                        y(a.1),
                        x(b.0),
                        y(b.1)
                    );
                }
                Segment::Arc { radius, start, end, .. } => {
                    let (p0, p1) = (seg.start(), seg.end());
                    // y flips, so a clockwise sweep in the plane is clockwise on screen too
                    let sweep = u8::from(end < start);
                    let _ = writeln!(
                        out,
                        r#"<path class="arc" data-path="{i}" d="M {:.2} {:.2} A {r:.2} {r:.2} 0 0 {sweep} {:.2} {:.2}" fill="none" stroke="black"/>"#,
                        x(p0.re),
                        y(p0.im),
                        x(p1.re),
                        y(p1.im),
                        r = radius * PX,
                    );
                }
            }
        }
    }
    for c in &model.critical_values {
        let _ = writeln!(
            out,
            r#"<circle class="critical" cx="{:.2}" cy="{:.2}" r="4" fill="black"/><text x="{:.2}" y="{:.2}" font-size="12">c{}</text>"#,
            x(c.value),
            y(0.0),
            x(c.value) - 6.0,
            y(0.0) - 10.0,
            c.index
        );
    }
    let _ = writeln!(
        out,
        r#"<circle class="basepoint" cx="{:.2}" cy="{:.2}" r="4" fill="white" stroke="black"/><text x="{:.2}" y="{:.2}" font-size="12">b</text>"#,
        x(model.basepoint),
        y(0.0),
        x(model.basepoint) - 4.0,
        y(0.0) - 10.0
    );
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::homology::Framing;

    fn surface(attachments: Vec<(f64, f64)>, framings: Vec<Framing>) -> MorseInput {
        MorseInput::Surface(MorseData2D { attachments, framings })
    }

    fn rp2() -> MorseInput {
        surface(vec![(0.1, 0.6)], vec![Framing::Reversing])
    }

    fn torus() -> MorseInput {
        surface(vec![(0.1, 0.6), (0.35, 0.85)], vec![Framing::Preserving, Framing::Preserving])
    }

    fn heegaard_s3() -> MorseInput {
        MorseInput::High(HandleDataHighDim::Heegaard {
            genus: 1,
            alpha: vec![vec![1, 0]],
            beta: vec![vec![0, 1]],
            intersections: vec![vec![1]],
        })
    }

    fn names(m: &FibrationModel) -> Vec<&str> {
        m.cycles.iter().map(|c| c.name.as_str()).collect()
    }

    #[test]
    fn rp2_values_and_cycles() {
        let m = assemble(&rp2()).unwrap();
        let vals: Vec<f64> = m.critical_values.iter().map(|c| c.value).collect();
        assert_eq!(vals, vec![0.0, 1.0, 2.0]);
        assert_eq!(m.basepoint, 0.75);
        assert_eq!(names(&m), vec!["L0", "L1[1]", "L2"]);
        assert!(m.correspondence.pass);
    }

    #[test]
    fn two_values_cycles_are_the_core() {
        let m = assemble(&MorseInput::Surface(MorseData2D::two_values())).unwrap();
        assert_eq!(m.critical_values.len(), 2);
        assert_eq!(m.cycles.len(), 2);
        assert_eq!(m.cycles[0].class.iter().map(|x| x.abs()).collect::<Vec<_>>(), vec![1]);
        assert_eq!(m.cycles[0].class.iter().map(|x| x.abs()).collect::<Vec<_>>(), m.cycles[1].class.iter().map(|x| x.abs()).collect::<Vec<_>>());
        let mono = monodromy_word(&m).unwrap();
        assert_eq!(mono.total, vec![vec![1]]);
        assert!(mono.checks.iter().all(|c| c.pass));
    }

    #[test]
    fn heegaard_values_and_cycles() {
        let m = assemble(&heegaard_s3()).unwrap();
        assert_eq!(m.critical_values.len(), 4);
        assert_eq!(m.basepoint, 1.25);
        assert_eq!(names(&m), vec!["L0", "L1[1]", "L2[1]", "L3"]);
        assert!(monodromy_word(&m).is_err());
    }

    #[test]
    fn path_shapes() {
        let m = assemble(&rp2()).unwrap();
        let p = vanishing_paths(&m);
        assert_eq!(p[0].segments, vec![Segment::line(re(0.75), re(0.0))]);
        // c_mid + (1/4)e^{(−π+πt)i}
        let arc = p[2].segments[0];
        for t in [0.0, 0.3, 0.5, 0.9, 1.0] {
            let want = re(1.0) + C64::from_polar(0.25, -PI + PI * t);
            let got = arc.eval(arc.length() * t).0;
            assert!((got - want).norm() < 1e-12);
        }
        assert!(path_checks(&m).iter().all(|c| c.pass));
        let h = assemble(&heegaard_s3()).unwrap();
        assert!(path_checks(&h).iter().all(|c| c.pass), "{:?}", path_checks(&h));
    }

    #[test]
    fn overlapping_paths_are_detected() {
        let mut m = assemble(&rp2()).unwrap();
        m.paths[2] = BasePath::new(vec![Segment::line(re(0.75), re(1.5)), Segment::line(re(1.5), re(2.0))]).unwrap();
        let failed: Vec<String> = path_checks(&m).into_iter().filter(|c| !c.pass).map(|c| c.name).collect();
        assert!(failed.contains(&"paths_disjoint".to_string()));
        assert!(failed.contains(&"paths_avoid_other_values".to_string()));
    }

    #[test]
    fn flattening() {
        assert_eq!(flatten_reparam(C64::new(0.3, 0.0)), C64::new(0.3, 0.0));
        assert!((flatten_reparam(C64::from_polar(0.9, 1.1)).norm() - 1.0).abs() < 1e-15);
        let mut last = 0.0;
        for i in 0..=1000 {
            let t = i as f64 / 1000.0;
            let r = flatten_reparam(C64::from_polar(t, 0.4)).norm();
            assert!(r + 1e-15 >= last);
            last = r;
        }
        assert!((flatten_radius(0.75 - 1e-9) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn monodromy_matrices() {
        for input in [rp2(), torus()] {
            let m = assemble(&input).unwrap();
            let mono = monodromy_word(&m).unwrap();
            assert_eq!(mono.twists.len(), 3);
            assert!(mono.checks.iter().all(|c| c.pass), "{:?}", mono.checks);
        }
    }

    #[test]
    fn homology_matches_morse() {
        let kirby = |l: Vec<Vec<i64>>| MorseInput::High(HandleDataHighDim::Kirby { linking: l });
        let inputs = [rp2(), torus(), heegaard_s3(), kirby(vec![vec![1]]), kirby(vec![vec![0, 1], vec![1, 0]])];
        for input in inputs {
            for sign in [1, -1] {
                let m = assemble_with(&input, sign).unwrap();
                let (e, n) = model_homology(&m).unwrap();
                assert_eq!(e, n);
            }
        }
    }

    #[test]
    fn halftwist_small_grid_identity() {
        let s = 0.25;
        for mu in [0.1, 0.2, 0.4, 0.7] {
            let c = CotangentVector::new(vec![0.6, 0.8], vec![-0.8 * mu, 0.6 * mu]);
            let smp = one_sample(&c, &q2_signature(1), s).unwrap();
            assert!(smp.deviation < 1e-6, "mu {mu}: {}", smp.deviation);
        }
    }

    #[test]
    fn halftwist_full_grid() {
        for n in 1..=3 {
            let r = halftwist_numeric_check(n, 0.25, 1e-5).unwrap();
            assert!(r.pass, "{:?}", r.checks);
        }
        assert!(halftwist_dim3_check(0.25, 1e-5).unwrap().iter().all(|r| r.pass));
    }

    #[test]
    fn base_svg_has_one_arc_per_middle_value() {
        let m = assemble(&rp2()).unwrap();
        let svg = render_base_svg(&m);
        assert_eq!(svg.matches("class=\"arc\"").count(), 1);
        assert_eq!(svg, render_base_svg(&assemble(&rp2()).unwrap()));
        let h = assemble(&heegaard_s3()).unwrap();
        assert_eq!(render_base_svg(&h).matches("class=\"arc\"").count(), 2);
    }
}
