//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines always reach stdout. The process fails
//! iff some criterion deviates from its expected outcome; criterion 6 is expected to print
//! FAIL because the surgery profile h cannot satisfy its reflection identity (see README).

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use lefschetz_core::cli::parse_config;
use lefschetz_core::fiber_complex::{build_surface_fiber_with, euler_characteristic, half_twist_correspondence, Chirality};
use lefschetz_core::fibration::{assemble_with, halftwist_numeric_check, monodromy_word, FiberHandle};
use lefschetz_core::homology::MorseInput;
use lefschetz_core::profiles::{
    build_cut_profile, build_h_profile, cut_conditions, h_conditions, verify_reflection, ProfileFunction,
};
use lefschetz_core::report::Section;
use lefschetz_core::suite::{
    collar_section, fiber_section, homology_section, radial_section, real_transport_section, rho_section,
    surface_identity_check, surgery_section, transport_sections, Tolerances,
};

const SEED: u64 = 0;

struct Outcome {
    pass: bool,
    detail: String,
    /// a FAIL that reproduces a documented defect rather than a regression
    expected_fail: bool,
}

fn ok(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into(), expected_fail: false }
}

fn fixture(name: &str) -> MorseInput {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(format!("{name}.json"));
    parse_config(&std::fs::read_to_string(path).unwrap()).unwrap().data
}

fn failing(sections: &[&Section]) -> Vec<String> {
    sections
        .iter()
        .flat_map(|s| s.checks.iter().filter(|c| !c.pass).map(move |c| format!("{}/{} {:.2e}", s.name, c.name, c.residual)))
        .collect()
}

fn worst(s: &Section, name: &str) -> f64 {
    s.checks.iter().find(|c| c.name == name).map_or(f64::NAN, |c| c.residual)
}

fn c1_c2(tol: &Tolerances) -> (Outcome, Outcome) {
    let t0 = Instant::now();
    let (equiv, cons) = transport_sections(SEED, tol).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    let dev = worst(&equiv, "transport_vs_closed_form");
    let c1 = ok(
        equiv.pass() && tol.ode <= 1e-10 && tol.transport <= 1e-6 && secs < 60.0,
        format!("max deviation {dev:.2e} (tol 1e-6), {secs:.2} s"),
    );
    let (k, fib) = (worst(&cons, "k_drift_per_length"), worst(&cons, "fiber_tracking"));
    let c2 = ok(cons.pass() && k < 1e-8 && fib < 1e-8, format!("k drift/length {k:.2e}, fiber tracking {fib:.2e}"));
    (c1, c2)
}

fn c3(tol: &Tolerances) -> Outcome {
    let s = rho_section(SEED, tol).unwrap();
    let printed = s.checks.iter().find(|c| c.name == "printed_rho_fails").unwrap();
    ok(
        s.pass() && worst(&s, "corrected_rho_exact") < 1e-6,
        format!("corrected {:.2e}; printed variant: {}", worst(&s, "corrected_rho_exact"), printed.detail),
    )
}

fn c4(tol: &Tolerances) -> Outcome {
    let s = radial_section(SEED, tol).unwrap();
    let m = s.checks.iter().map(|c| c.residual).fold(0.0, f64::max);
    ok(s.pass() && m < 1e-6, format!("max deviation {m:.2e} over n = 1, 2, 3"))
}

fn c5() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for n in 1..=3 {
        let r = halftwist_numeric_check(n, 0.25, 1e-5).unwrap();
        pass &= r.pass && r.plateau_samples > 0 && r.plateau_deviation < 1e-9 && r.max_deviation < 1e-5;
        parts.push(format!("n={n}: {:.1e} (plateau {:.1e})", r.max_deviation, r.plateau_deviation));
    }
    ok(pass, parts.join(", "))
}

fn c6() -> Outcome {
    let r = 1.0;
    let delta = r / 16.0;
    let mut conditions = Vec::new();
    let mut reflections = Vec::new();
    for s in [0.25, 0.5, 1.0] {
        let p = build_cut_profile(s, r).unwrap();
        conditions.extend(cut_conditions(&p));
        reflections.push(verify_reflection(&ProfileFunction::rtilde(s), delta));
        reflections.push(verify_reflection(&p, delta));
    }
    let h = build_h_profile(r).unwrap();
    conditions.extend(h_conditions(&h));
    let hr = verify_reflection(&h, delta);
    let cond_ok = conditions.iter().all(|c| c.pass);
    let refl_ok = reflections.iter().all(|x| x.residual < 1e-12);
    // the defect: h is even to machine precision, so h(-t) - h(t) + t = t, maximal at t = delta
    let reproduced = !hr.check.pass && hr.parity_residual < 1e-12 && (hr.residual - delta).abs() < 1e-12;
    Outcome {
        pass: cond_ok && refl_ok && hr.check.pass,
        detail: format!(
            "{} inequality checks {}, R reflections {}, h reflection residual {:.4} = delta (h even to {:.1e})",
            conditions.len(),
            if cond_ok { "hold" } else { "FAIL" },
            if refl_ok { "exact" } else { "FAIL" },
            hr.residual,
            hr.parity_residual
        ),
        expected_fail: cond_ok && refl_ok && reproduced,
    }
}

fn c7(tol: &Tolerances) -> Outcome {
    let s = surgery_section(SEED, tol).unwrap();
    let action = worst(&s, "action_on_surgered_loops");
    ok(s.pass() && action < 1e-6, format!("{} checks, action {action:.2e}; {:?}", s.checks.len(), failing(&[&s])))
}

fn c8(tol: &Tolerances) -> Outcome {
    let s = real_transport_section(SEED, tol).unwrap();
    let (a, b, c) = (worst(&s, "stays_real"), worst(&s, "gradient_flow"), worst(&s, "conjugation_equivariance"));
    ok(s.pass() && a < 1e-6 && b < 1e-4 && c < 1e-8, format!("imag {a:.1e}, gradient {b:.1e}, conjugation {c:.1e}"))
}

fn c9(tol: &Tolerances) -> Outcome {
    let s = collar_section(SEED, tol).unwrap();
    let r = s.checks[0].residual;
    ok(s.pass() && r < 1e-8 && s.checks[0].detail.contains("1000"), format!("residual {r:.2e}; {}", s.checks[0].detail))
}

fn c10() -> Outcome {
    let cases = [("s2", 0, "(Z, 0, Z)"), ("rp2", -2, "(Z, Z/2, 0)"), ("torus", -4, "(Z, Z^2, Z)")];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, chi, want) in cases {
        let input = fixture(name);
        let (sec, e, n) = homology_section(&input).unwrap();
        let m = assemble_with(&input, 1).unwrap();
        let FiberHandle::Surface(f) = &m.fiber else { unreachable!() };
        let chi_m = euler_characteristic(&f.surface);
        let crit = f.data.critical_points() as i64;
        let good = sec.pass()
            && chi_m == chi
            && e.to_string() == want
            && e == n
            && chi_m + crit == n.euler_characteristic();
        pass &= good;
        parts.push(format!("{name}: chi(M) {chi_m}, E {e}"));
    }
    ok(pass, parts.join("; "))
}

fn c11() -> Outcome {
    let cases = [("s3_genus1", "(Z, 0, 0, Z)"), ("cp2", "(Z, 0, Z, 0, Z)"), ("s2xs2", "(Z, 0, Z^2, 0, Z)")];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, want) in cases {
        let input = fixture(name);
        let (sec, e, n) = homology_section(&input).unwrap();
        let ids = fiber_section(&input).unwrap();
        pass &= sec.pass() && ids.pass() && e.to_string() == want && e == n;
        parts.push(format!("{name}: {e}"));
    }
    // the same identity in the geometric dim-2 fiber
    for name in ["rp2", "torus"] {
        let MorseInput::Surface(d) = fixture(name) else { unreachable!() };
        pass &= surface_identity_check(&d).unwrap().pass;
    }
    ok(pass, parts.join("; "))
}

fn c12() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for name in ["s2", "rp2", "torus"] {
        let input = fixture(name);
        let MorseInput::Surface(d) = &input else { unreachable!() };
        for chir in [Chirality::Lower, Chirality::Upper] {
            let t = half_twist_correspondence(&build_surface_fiber_with(d, chir).unwrap()).unwrap();
            pass &= t.check.pass && t.geometric_m == t.geometric_m2;
        }
        for sign in [1, -1] {
            let m = monodromy_word(&assemble_with(&input, sign).unwrap()).unwrap();
            pass &= m.checks.iter().all(|c| c.pass) && m.twists.iter().all(|t| t.unimodular && t.preserves_form);
        }
        parts.push(format!("k={}", d.k()));
    }
    for name in ["s2", "rp2", "torus", "s3_genus1", "cp2", "s2xs2"] {
        let (sec, _, _) = homology_section(&fixture(name)).unwrap();
        pass &= sec.checks.iter().any(|c| c.name == "sign_flag_invariance" && c.pass);
    }
    ok(pass, format!("{} fixtures, both chiralities and sign flags", parts.join(", ")))
}

fn c13() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_lefschetz");
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/torus.json");
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        Command::new(bin)
            .args(["report-all", "--seed", "7", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(d.path())
            .output()
            .unwrap();
    }
    let mut names: Vec<String> = std::fs::read_dir(dirs[0].path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    let same = names.len() == 4
        && names.iter().all(|n| std::fs::read(dirs[0].path().join(n)).ok() == std::fs::read(dirs[1].path().join(n)).ok());
    ok(same, format!("files {names:?}"))
}

fn main() {
    let tol = Tolerances::default();
    let (o1, o2) = c1_c2(&tol);
    let outcomes = [
        ("transport equivalence", o1),
        ("conservation", o2),
        ("rho exactness", c3(&tol)),
        ("radial factorization", c4(&tol)),
        ("half-twist identity", c5()),
        ("profiles", c6()),
        ("surgery", c7(&tol)),
        ("real transport", c8(&tol)),
        ("real collar", c9(&tol)),
        ("dim-2 pipelines", c10()),
        ("dim-3/4 pipelines", c11()),
        ("twist correspondence", c12()),
        ("determinism", c13()),
    ];
    let mut unexpected = 0;
    for (i, (name, o)) in outcomes.iter().enumerate() {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        let note = if !o.pass && o.expected_fail { " [known defect reproduced]" } else { "" };
        println!("{tag} {:>2} {name}: {}{note}", i + 1, o.detail);
        if !o.pass && !o.expected_fail {
            unexpected += 1;
        }
    }
    println!("{unexpected} unexpected failures");
    if unexpected > 0 {
        std::process::exit(1);
    }
}
