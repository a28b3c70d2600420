// verification sections shared by the CLI jobs and the acceptance target

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fiber_complex::{
    build_surface_fiber_with, euler_characteristic, fiber_checks, geometric_matrix, half_twist_correspondence,
    milnor_decomposition, Chirality, H1Basis,
};
use crate::fibration::{
    assemble_with, halftwist_check_signature, model_homology, monodromy_word, path_checks,
    q2_signature, FiberHandle, FibrationModel, HalftwistReport, HALFTWIST_SEED,
};
use crate::homology::{Framing, HandleDataHighDim, HomologyReport, MorseData2D, MorseInput};
use crate::local_model::{
    exactness_residual, radial_factorization_check, real_collar_check, real_transport_check, rho_inverse, rho_printed,
    rho_standard, transport_closed_form, transport_ode_stats, trivialize, untrivialize, BasePath, CotangentVector,
    QuadricPoint,
};
use crate::profiles::{
    build_cut_profile, build_h_profile, cut_conditions, h_conditions, verify_reflection, ProfileFunction,
};
use crate::report::{Check, Section};
use crate::surgery::{exactness_integral, generating_loop, overlap_check, smooth_extension_check, surgery_map, SubsphereFrame};

/// Residual tolerances of the numeric checks. Structural checks are exact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// ODE transport against the closed form
    pub transport: f64,
    /// integrator tolerance for the transport ODE
    pub ode: f64,
    /// k-drift per unit path length and fiber-tracking residual
    pub conservation: f64,
    pub exactness: f64,
    pub radial: f64,
    pub halftwist: f64,
    pub real_locus: f64,
    pub collar: f64,
    pub action: f64,
}

impl Default for Tolerances {
    fn default() -> Tolerances {
        Tolerances {
            transport: 1e-6,
            ode: 1e-10,
            conservation: 1e-8,
            exactness: 1e-6,
            radial: 1e-6,
            halftwist: 1e-5,
            real_locus: 1e-6,
            collar: 1e-8,
            action: 1e-6,
        }
    }
}

impl Tolerances {
    /// Every field must be positive and finite; returns the offending field name otherwise.
    pub fn validate(&self) -> std::result::Result<(), &'static str> {
        let fields = [
            ("transport", self.transport),
            ("ode", self.ode),
            ("conservation", self.conservation),
            ("exactness", self.exactness),
            ("radial", self.radial),
            ("halftwist", self.halftwist),
            ("real_locus", self.real_locus),
            ("collar", self.collar),
            ("action", self.action),
        ];
        match fields.iter().find(|(_, v)| !(v.is_finite() && *v > 0.0)) {
            Some((name, _)) => Err(name),
            None => Ok(()),
        }
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn max(xs: impl IntoIterator<Item = f64>) -> f64 {
    xs.into_iter().fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------------------------
// local model

pub const THETAS: [f64; 3] = [PI / 4.0, PI / 2.0, PI];
pub const S_VALUES: [f64; 3] = [0.25, 0.5, 1.0];
pub const TRANSPORT_SAMPLES: usize = 20;

struct TransportRun {
    deviation: f64,
    drift_rate: f64,
    fiber: f64,
}

/// ODE transport along arcs of angle θ against σ_{θ R~_s'} in trivialized coordinates, with
/// the conserved quantities tracked along the way.
pub fn transport_sections(seed: u64, tol: &Tolerances) -> Result<(Section, Section)> {
    let mut jobs = Vec::new();
    for n in 1..=3usize {
        let mut rng = rng_for(seed, n as u64);
        for &s in &S_VALUES {
            for &theta in &THETAS {
                for _ in 0..TRANSPORT_SAMPLES {
                    jobs.push((n, s, theta, CotangentVector::random(&mut rng, n + 1, 1.0)));
                }
            }
        }
    }
    let runs: Vec<Result<TransportRun>> = jobs
        .par_iter()
        .map(|(n, s, theta, c)| {
            let sig = q2_signature(*n);
            let z0 = untrivialize(c, C64::new(*s, 0.0), &sig)?;
            let (z1, st) = transport_ode_stats(&z0, &BasePath::circle_arc(C64::new(*s, 0.0), *theta), tol.ode)?;
            let (c1, _) = trivialize(&z1)?;
            let expect = transport_closed_form(c, *theta, &ProfileFunction::rtilde(*s));
            Ok(TransportRun { deviation: c1.distance(&expect), drift_rate: st.k_drift / st.length, fiber: st.fiber_residual })
        })
        .collect();
    let runs: Vec<TransportRun> = runs.into_iter().collect::<Result<_>>()?;
    let detail = format!("{} transports", runs.len());
    let equiv = Section::new(
        "transport_equivalence",
        "ODE transport = sigma_{theta R~'} in trivialized coordinates",
        vec![Check::below("transport_vs_closed_form", "transport formula", max(runs.iter().map(|r| r.deviation)), tol.transport)
            .with_detail(detail.clone())],
    );
    let cons = Section::new(
        "conservation",
        "k and q are conserved by the horizontal lift",
        vec![
            Check::below("k_drift_per_length", "k is invariant", max(runs.iter().map(|r| r.drift_rate)), tol.conservation)
                .with_detail(detail.clone()),
            Check::below("fiber_tracking", "q(z(t)) = gamma(t)", max(runs.iter().map(|r| r.fiber)), tol.conservation)
                .with_detail(detail),
        ],
    );
    Ok((equiv, cons))
}

pub const EXACTNESS_SAMPLES: usize = 100;

/// Finite-difference exactness of ρ_1 on random points, and the printed variant as a regression
/// fixture that must fail.
pub fn rho_section(seed: u64, tol: &Tolerances) -> Result<Section> {
    let mut rng = rng_for(seed, 10);
    let mut worst: f64 = 0.0;
    let mut printed: f64 = 0.0;
    for i in 0..EXACTNESS_SAMPLES {
        let n = 1 + i % 3;
        let c = CotangentVector::random(&mut rng, n + 1, 1.0);
        let z = rho_inverse(&c, 1.0, &vec![1; n + 1])?;
        worst = worst.max(exactness_residual(&mut rng, &z, rho_standard, 3));
        printed = printed.max(exactness_residual(&mut rng, &z, rho_printed, 3));
    }
    Ok(Section::new(
        "rho_exactness",
        "rho_s^*(-u dv) = -x dy on the fiber",
        vec![
            Check::below("corrected_rho_exact", "rho_s = (x/|x|, -y|x|)", worst, tol.exactness)
                .with_detail(format!("{EXACTNESS_SAMPLES} samples")),
            Check::flag(
                "printed_rho_fails",
                "printed variant -y|y| is not exact",
                printed > 0.1,
                format!("max residual {printed:.4}"),
            ),
        ],
    ))
}

pub const RADIAL_SAMPLES: usize = 50;

pub fn radial_section(seed: u64, tol: &Tolerances) -> Result<Section> {
    let mut checks = Vec::new();
    for n in 1..=3usize {
        let mut rng = rng_for(seed, 20 + n as u64);
        let sig = q2_signature(n);
        let pts: Vec<QuadricPoint> = (0..RADIAL_SAMPLES)
            .map(|_| {
                let c = CotangentVector::random(&mut rng, n + 1, 1.0);
                let w = C64::from_polar(rng.gen_range(0.1..1.0), rng.gen_range(-PI..PI));
                untrivialize(&c, w, &sig)
            })
            .collect::<Result<_>>()?;
        let res: Vec<Result<Check>> = pts.par_iter().map(|z| radial_factorization_check(z, tol.radial)).collect();
        let worst = max(res.into_iter().collect::<Result<Vec<_>>>()?.iter().map(|c| c.residual));
        checks.push(
            Check::below(&format!("radial_n{n}"), "Phi = rho_0 o radial transport", worst, tol.radial)
                .with_detail(format!("{RADIAL_SAMPLES} samples")),
        );
    }
    Ok(Section::new("radial_lemma", "Phi factors through radial transport", checks))
}

/// Half-twist for n = 1, 2, 3 in the q_2-type model, plus the dim-3 signatures.
pub fn halftwist_section(seed: u64, tol: &Tolerances) -> Result<(Section, Vec<HalftwistReport>)> {
    let grid_seed = HALFTWIST_SEED ^ seed;
    let mut reports = Vec::new();
    for n in 1..=3 {
        reports.push(halftwist_check_signature(&q2_signature(n), 0.25, tol.halftwist, grid_seed)?);
    }
    for sig in [vec![1, 1, -1], vec![1, -1, -1]] {
        reports.push(halftwist_check_signature(&sig, 0.25, tol.halftwist, grid_seed)?);
    }
    let mut checks = Vec::new();
    for r in &reports {
        for c in &r.checks {
            let mut c = c.clone();
            c.name = format!("{} {:?}", c.name, r.signature);
            checks.push(c);
        }
    }
    Ok((Section::new("halftwist", "nu o tau o rho^{-1} = phi^h_pi", checks), reports))
}

fn real_point(rng: &mut ChaCha8Rng, sig: &[i8], q: f64) -> QuadricPoint {
    let p: f64 = rng.gen_range(0.3..1.0);
    let a2 = (q + (q * q + 4.0 * p * p).sqrt()) / 2.0;
    let (a, b) = (a2.sqrt(), (a2 - q).max(0.0).sqrt());
    let plus = sig.iter().filter(|&&e| e > 0).count();
    let dir = |rng: &mut ChaCha8Rng, len: usize| {
        let g = crate::local_model::gaussian_vec(rng, len);
        let n = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        g.into_iter().map(move |x| x / n)
    };
    let mut x: Vec<f64> = dir(rng, plus).map(|t| a * t).collect();
    x.extend(dir(rng, sig.len() - plus).map(|t| b * t));
    QuadricPoint::new(x, vec![0.0; sig.len()], sig.to_vec())
}

pub const REAL_SAMPLES: usize = 4;

pub fn real_transport_section(seed: u64, tol: &Tolerances) -> Result<Section> {
    let mut rng = rng_for(seed, 30);
    let mut jobs = Vec::new();
    for n in 1..=3usize {
        let sig = q2_signature(n);
        for i in 0..REAL_SAMPLES {
            let q = if i % 2 == 0 { -0.5 } else { 0.5 };
            jobs.push((real_point(&mut rng, &sig, q), q));
        }
    }
    let reps: Vec<_> = jobs
        .par_iter()
        .map(|(z, q)| real_transport_check(z, &BasePath::segment(C64::new(*q, 0.0), C64::new(-*q, 0.0)), tol.real_locus))
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let detail = format!("{} real segments", reps.len());
    Ok(Section::new(
        "real_transport",
        "transport preserves the real locus and follows the gradient flow",
        vec![
            Check::below("stays_real", "real transport lemma", max(reps.iter().map(|r| r.max_imag)), tol.real_locus)
                .with_detail(detail.clone()),
            Check::below("gradient_flow", "real transport lemma", max(reps.iter().map(|r| r.gradient_deviation)), 1e-4)
                .with_detail(detail.clone()),
            Check::below(
                "conjugation_equivariance",
                "real transport lemma",
                max(reps.iter().map(|r| r.conjugation_residual)),
                1e-8,
            )
            .with_detail(detail),
        ],
    ))
}

pub const COLLAR_SAMPLES: usize = 1000;

pub fn collar_section(seed: u64, tol: &Tolerances) -> Result<Section> {
    let mut rng = rng_for(seed, 40);
    Ok(Section::new(
        "real_collar",
        "real collar lies in the conormal of K_+",
        vec![real_collar_check(&mut rng, COLLAR_SAMPLES, 1.0, tol.collar)?],
    ))
}

/// Sections for criteria on the local model.
pub fn local_sections(seed: u64, tol: &Tolerances) -> Result<Vec<Section>> {
    let (equiv, cons) = transport_sections(seed, tol)?;
    Ok(vec![
        equiv,
        cons,
        rho_section(seed, tol)?,
        radial_section(seed, tol)?,
        halftwist_section(seed, tol)?.0,
        real_transport_section(seed, tol)?,
        collar_section(seed, tol)?,
    ])
}

// ---------------------------------------------------------------------------------------------
// profiles and surgery

pub fn profiles_section() -> Result<Section> {
    let r = 1.0;
    let delta = r / 16.0;
    let mut checks = Vec::new();
    for s in S_VALUES {
        let p = build_cut_profile(s, r)?;
        for mut c in cut_conditions(&p) {
            c.name = format!("{} (s={s})", c.name);
            checks.push(c);
        }
        checks.push(verify_reflection(&ProfileFunction::rtilde(s), delta).check);
        checks.push(verify_reflection(&p, delta).check);
    }
    let h = build_h_profile(r)?;
    checks.extend(h_conditions(&h));
    let rep = verify_reflection(&h, delta);
    checks.push(rep.check.with_detail(format!(
        "h(-t) - h(t) = {:.1e}: h = t/2 - R_{{1/4}} is even, so h(-t) = h(t) - t cannot hold for t != 0",
        rep.parity_residual
    )));
    Ok(Section::new("profiles", "transport and surgery profile conditions", checks))
}

pub const OVERLAP_SAMPLES: usize = 2000;

pub fn surgery_section(seed: u64, tol: &Tolerances) -> Result<Section> {
    let h = build_h_profile(1.0)?;
    let mut rng = rng_for(seed, 50);
    let mut checks = Vec::new();
    for (n, k) in [(1, 0), (3, 1)] {
        checks.push(overlap_check(&mut rng, &SubsphereFrame::new(n, k)?, &h, OVERLAP_SAMPLES).check);
    }
    checks.push(smooth_extension_check(&h, &[0.02, 0.01, 0.005, 0.0025]).check);
    let frame = SubsphereFrame::new(3, 1)?;
    let mut action: f64 = 0.0;
    for t in [0.1, 0.3, 0.6, 0.9] {
        let lp = generating_loop(&frame, t, 10_000)?;
        let img: Vec<CotangentVector> = lp.iter().map(|c| surgery_map(c, &h)).collect();
        action = action.max(exactness_integral(&img)?.abs());
    }
    checks.push(
        Check::below("action_on_surgered_loops", "the surgered sphere is exact", action, tol.action)
            .with_detail("generating loops of D(nu*K_+), n=3, k=1"),
    );
    Ok(Section::new("surgery", "Lagrangian surgery flow", checks))
}

// ---------------------------------------------------------------------------------------------
// fiber and pipelines

/// Structural checks on the fiber of the given input.
pub fn fiber_section(input: &MorseInput) -> Result<Section> {
    match input {
        MorseInput::Surface(d) => {
            let f = build_surface_fiber_with(d, Chirality::Lower)?;
            let mut checks = fiber_checks(&f)?;
            checks.push(milnor_decomposition(d)?.check);
            Ok(Section::new("fiber", "regular fiber M with L0, L1, L2", checks))
        }
        MorseInput::High(h) => Ok(Section::new("fiber", "homological fiber model", identity_checks(h)?)),
    }
}

// the surgered classes of the homological fiber, recomputed from the basis
fn identity_checks(h: &HandleDataHighDim) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for eps in [1, -1] {
        let f = crate::homology::build_homological_fiber_model(h, eps)?;
        let n = f.basis.len();
        let unit = |i: usize| (0..n).map(|j| i64::from(i == j)).collect::<Vec<i64>>();
        let sum = |prefix: &str| -> Vec<i64> {
            let mut acc = unit(0);
            for (i, b) in f.basis.iter().enumerate() {
                if b.starts_with(prefix) {
                    acc[i] += eps;
                }
            }
            acc
        };
        let (name, want) = match h {
            HandleDataHighDim::Heegaard { .. } => ("L0", sum("L1[")),
            HandleDataHighDim::Kirby { .. } => ("L4", sum("L2[")),
        };
        let got = f.class(name).cloned().unwrap_or_default();
        checks.push(Check::flag(
            &format!("surgery_identity_eps{eps:+}"),
            "surgered class = core + eps * sum of handle classes",
            got == want,
            f.surgery_identities.join("; "),
        ));
        if let HandleDataHighDim::Heegaard { .. } = h {
            for nm in ["L0", "L3"] {
                let c = f.class(nm).expect("surgered class");
                checks.push(Check::flag(
                    &format!("self_pairing_{nm}_eps{eps:+}"),
                    "Lagrangian S^2 has self-intersection -2",
                    f.pair(c, c) == Some(-2),
                    format!("{:?}", f.pair(c, c)),
                ));
            }
        }
    }
    Ok(checks)
}

/// The dim-2 geometric oracle for the same identity: [L2] = ±([L0] + Σ ε_j [L1[j]]) in H₁(M).
pub fn surface_identity_check(d: &MorseData2D) -> Result<Check> {
    let f = build_surface_fiber_with(d, Chirality::Lower)?;
    let h = H1Basis::new(&f.surface)?;
    let class = |n: &str| -> Result<Vec<i64>> {
        let c = f.curve(n).ok_or_else(|| Error::Data(format!("no curve {n}")))?;
        h.class_of(&f.surface, c)
    };
    let (l0, l2) = (class("L0")?, class("L2")?);
    let handles: Vec<Vec<i64>> = (1..=d.k()).map(|j| class(&format!("L1[{j}]"))).collect::<Result<_>>()?;
    let k = handles.len();
    // a reversing band makes the surgered curve one-sided relative to L0, so only the mod 2 class is determined
    let mod2 = d.framings.contains(&Framing::Reversing);
    let found = (0..1u32 << k).any(|mask| {
        let mut sum = l0.clone();
        for (j, hc) in handles.iter().enumerate() {
            let e = if mask >> j & 1 == 1 { -1 } else { 1 };
            sum.iter_mut().zip(hc).for_each(|(a, b)| *a += e * b);
        }
        if mod2 {
            sum.iter().zip(&l2).all(|(a, b)| (a - b).rem_euclid(2) == 0)
        } else {
            sum == l2 || sum.iter().zip(&l2).all(|(a, b)| *a == -b)
        }
    });
    let (name, anchor) = if mod2 {
        ("surface_surgery_identity_mod2", "[L2] = [L0] + sum [L1[j]] mod 2 in the geometric fiber")
    } else {
        ("surface_surgery_identity", "[L2] = [L0] + sum eps_j [L1[j]] in the geometric fiber")
    };
    Ok(Check::flag(name, anchor, found, format!("L0 {l0:?}, L2 {l2:?}, L1 {handles:?}")))
}

/// Pads or trims a report to degrees 0..=dim for display.
pub fn padded(r: &HomologyReport, dim: usize) -> HomologyReport {
    let mut degrees = r.degrees.clone();
    degrees.resize(dim + 1, crate::homology::Group::free(0));
    HomologyReport { degrees }
}

/// Total-space homology against the Morse homology of N, under both sign flags.
pub fn homology_section(input: &MorseInput) -> Result<(Section, HomologyReport, HomologyReport)> {
    let plus = assemble_with(input, 1)?;
    let minus = assemble_with(input, -1)?;
    let (e, n) = model_homology(&plus)?;
    let (e2, n2) = model_homology(&minus)?;
    let dim = plus.dim;
    let (e, n) = (padded(&e, dim), padded(&n, dim));
    let mut checks = vec![
        Check::flag("total_space_equals_morse", "H_*(E) = H_*(N)", e == n, format!("E {e}, N {n}")),
        Check::flag(
            "sign_flag_invariance",
            "homology reports identical under the sign flag",
            padded(&e2, dim) == e && padded(&n2, dim) == n,
            format!("E {}, N {}", padded(&e2, dim), padded(&n2, dim)),
        ),
        Check::flag(
            "critical_point_census",
            "one vanishing cycle per critical point",
            plus.cycles.len() == plus.critical_values.iter().map(|c| c.points).sum::<usize>(),
            format!("{} cycles", plus.cycles.len()),
        ),
    ];
    if let FiberHandle::Surface(f) = &plus.fiber {
        let chi_m = euler_characteristic(&f.surface);
        let crit = f.data.critical_points() as i64;
        checks.push(Check::flag(
            "euler_count",
            "chi(M) + #crit = chi(N)",
            chi_m + crit == n.euler_characteristic(),
            format!("chi(M) = {chi_m}, #crit = {crit}, chi(N) = {}", n.euler_characteristic()),
        ));
    }
    Ok((Section::new("homology", "E is homotopy equivalent to N", checks), e, n))
}

/// Half-twist correspondence under both chiralities and the monodromy word (dim 2).
pub fn twist_section(input: &MorseInput) -> Result<Section> {
    let MorseInput::Surface(d) = input else {
        return Ok(Section::new("twist", "twist correspondence", vec![]));
    };
    let mut checks = Vec::new();
    for chir in [Chirality::Lower, Chirality::Upper] {
        let f = build_surface_fiber_with(d, chir)?;
        let mut c = half_twist_correspondence(&f)?.check;
        c.name = format!("{} ({chir:?})", c.name);
        checks.push(c);
    }
    for sign in [1, -1] {
        let m = assemble_with(input, sign)?;
        for mut c in monodromy_word(&m)?.checks {
            c.name = format!("{} (sign {sign:+})", c.name);
            checks.push(c);
        }
    }
    Ok(Section::new("twist", "twist correspondence and monodromy", checks))
}

/// Model-level checks on an assembled fibration.
pub fn assembly_section(m: &FibrationModel) -> Result<Section> {
    let mut checks = path_checks(m);
    checks.push(m.correspondence.clone());
    if let FiberHandle::Surface(f) = &m.fiber {
        let curves = f.vanishing_curves();
        let g = geometric_matrix(&f.surface, &curves)?;
        checks.push(Check::flag(
            "geometric_matrix_symmetric",
            "geometric intersection numbers",
            (0..g.len()).all(|i| (0..g.len()).all(|j| g[i][j] == g[j][i])),
            format!("{g:?}"),
        ));
        checks.extend(monodromy_word(m)?.checks);
    }
    Ok(Section::new("assembly", "critical values, basepoint, vanishing paths and cycles", checks))
}
