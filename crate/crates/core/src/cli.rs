// config ingestion, job dispatch, report and figure output

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::fiber_complex::{build_surface_fiber, render_svg};
use crate::fibration::{assemble, render_base_svg, FibrationModel};
use crate::homology::{Framing, HandleDataHighDim, MorseData2D, MorseInput};
use crate::report::{Check, Section};
use crate::suite::{
    assembly_section, fiber_section, homology_section, local_sections, profiles_section, surface_identity_check,
    surgery_section, twist_section, Tolerances,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Job {
    VerifyLocal,
    BuildFiber,
    Assemble,
    HomologyCheck,
    Render,
    ReportAll,
}

#[derive(Parser, Debug)]
#[command(name = "lefschetz", about = "Build and verify the Lefschetz fibration model of a Morse function")]
pub struct Args {
    pub job: Job,
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// overrides the transport, radial and half-twist comparison tolerances
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JobConfig {
    pub input: PathBuf,
    pub job: Job,
    pub tolerances: Tolerances,
    pub seed: u64,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedConfig {
    pub data: MorseInput,
    pub tolerances: Tolerances,
}

fn parse_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parse(msg.into()))
}

fn field<T: DeserializeOwned>(obj: &Map<String, Value>, name: &str) -> Result<T> {
    let Some(v) = obj.get(name) else {
        return parse_err(format!("missing field \"{name}\""));
    };
    serde_json::from_value(v.clone()).map_err(|e| Error::Parse(format!("field \"{name}\": {e}")))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HeegaardHandle {
    alpha: Vec<i64>,
    beta: Vec<i64>,
}

const KNOWN_FIELDS: [&str; 7] = ["dim", "case", "handles", "framings", "intersections", "linking", "tolerances"];

/// Parses and validates a JSON config. Schema errors are `Parse` errors naming the field;
/// well-formed but inconsistent handle data is a `Data` error.
pub fn parse_config(text: &str) -> Result<ParsedConfig> {
    let value: Value = serde_json::from_str(text)
        .map_err(|e| Error::Parse(format!("line {}, column {}: {e}", e.line(), e.column())))?;
    let Some(obj) = value.as_object() else {
        return parse_err("top level must be an object");
    };
    if let Some(k) = obj.keys().find(|k| !KNOWN_FIELDS.contains(&k.as_str())) {
        return parse_err(format!("unknown field \"{k}\""));
    }
    let dim: u64 = field(obj, "dim")?;
    let case: String = field(obj, "case")?;
    let data = match dim {
        2 => {
            let handles: Vec<(f64, f64)> = field(obj, "handles")?;
            let framings: Vec<Framing> = field(obj, "framings")?;
            let want = if handles.is_empty() { "two" } else { "three" };
            if case != want {
                return parse_err(format!("field \"case\": {} handles need case \"{want}\"", handles.len()));
            }
            MorseInput::Surface(MorseData2D { attachments: handles, framings })
        }
        3 => {
            let handles: Vec<HeegaardHandle> = field(obj, "handles")?;
            let intersections: Vec<Vec<i64>> = field(obj, "intersections")?;
            if case != "four" {
                return parse_err("field \"case\": dim 3 has four critical values, case \"four\"");
            }
            MorseInput::High(HandleDataHighDim::Heegaard {
                genus: handles.len(),
                alpha: handles.iter().map(|h| h.alpha.clone()).collect(),
                beta: handles.iter().map(|h| h.beta.clone()).collect(),
                intersections,
            })
        }
        4 => {
            let linking: Vec<Vec<i64>> = field(obj, "linking")?;
            let want = if linking.is_empty() { "two" } else { "three" };
            if case != want {
                return parse_err(format!("field \"case\": {} 2-handles need case \"{want}\"", linking.len()));
            }
            MorseInput::High(HandleDataHighDim::Kirby { linking })
        }
        _ => return parse_err("field \"dim\": expected 2, 3 or 4"),
    };
    match &data {
        MorseInput::Surface(d) => d.validate()?,
        MorseInput::High(h) => h.validate()?,
    }
    let tolerances: Tolerances = if obj.contains_key("tolerances") { field(obj, "tolerances")? } else { Tolerances::default() };
    if let Err(name) = tolerances.validate() {
        return parse_err(format!("field \"tolerances.{name}\" must be positive"));
    }
    Ok(ParsedConfig { data, tolerances })
}

/// Reads the config named by the arguments; errors here map to exit status 2.
pub fn load(args: &Args) -> Result<(JobConfig, MorseInput)> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| Error::Parse(format!("cannot read {}: {e}", args.config.display())))?;
    let parsed = parse_config(&text)?;
    let mut tolerances = parsed.tolerances;
    if let Some(t) = args.tol {
        if !(t.is_finite() && t > 0.0) {
            return parse_err("--tol must be positive");
        }
        tolerances.transport = t;
        tolerances.radial = t;
        tolerances.halftwist = t;
    }
    let cfg = JobConfig { input: args.config.clone(), job: args.job, tolerances, seed: args.seed, out: args.out.clone() };
    Ok((cfg, parsed.data))
}

#[derive(Debug, Clone, Serialize)]
pub struct HomologyView {
    pub total_space: String,
    pub morse: String,
    pub equal: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub job: Job,
    pub input: String,
    pub seed: u64,
    pub tolerances: Tolerances,
    pub sections: Vec<Section>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub homology: Option<HomologyView>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<FibrationModel>,
    pub files: Vec<String>,
    pub pass: bool,
}

/// Output of a job: the report and the figures to write next to it.
pub struct JobOutput {
    pub report: Report,
    pub figures: Vec<(String, String)>,
}

fn render_figures(data: &MorseInput, model: &FibrationModel) -> Result<(Vec<(String, String)>, Section)> {
    let mut figures = Vec::new();
    let mut checks = Vec::new();
    if let MorseInput::Surface(d) = data {
        let svg = render_svg(&build_surface_fiber(d)?);
        let colors = ["#1f4fd1", "#1b8f3a", "#d12a1f"];
        let present: Vec<&str> = colors.iter().copied().filter(|c| svg.contains(c)).collect();
        let need: &[&str] = if d.k() == 0 { &colors[..1] } else { &colors };
        checks.push(Check::flag(
            "fiber_svg_curves",
            "blue L0, green L1, red L2",
            need.iter().all(|c| present.contains(c)) && svg.starts_with("<svg"),
            format!("colors {present:?}"),
        ));
        figures.push(("fiber.svg".to_string(), svg));
    }
    let base = render_base_svg(model);
    let arcs = base.matches("class=\"arc\"").count();
    let middle = model.critical_values.len().saturating_sub(2);
    checks.push(Check::flag(
        "base_svg_arcs",
        "one lower half-circle per intermediate critical value",
        arcs == middle,
        format!("{arcs} arcs"),
    ));
    figures.push(("base.svg".to_string(), base));
    Ok((figures, Section::new("render", "figures", checks)))
}

pub fn run_suite(cfg: &JobConfig, data: &MorseInput) -> Result<JobOutput> {
    let tol = &cfg.tolerances;
    let mut sections = Vec::new();
    let mut homology = None;
    let mut model = None;
    let mut figures = Vec::new();
    let all = cfg.job == Job::ReportAll;
    if cfg.job == Job::VerifyLocal || all {
        sections.extend(local_sections(cfg.seed, tol)?);
    }
    if all {
        sections.push(profiles_section()?);
        sections.push(surgery_section(cfg.seed, tol)?);
    }
    if cfg.job == Job::BuildFiber || all {
        let mut s = fiber_section(data)?;
        if let MorseInput::Surface(d) = data {
            if d.k() > 0 {
                s.checks.push(surface_identity_check(d)?);
            }
        }
        sections.push(s);
    }
    if matches!(cfg.job, Job::Assemble | Job::Render) || all {
        let m = assemble(data)?;
        if cfg.job != Job::Render {
            sections.push(assembly_section(&m)?);
            sections.push(twist_section(data)?);
        }
        if cfg.job == Job::Render || all {
            let (f, s) = render_figures(data, &m)?;
            figures = f;
            sections.push(s);
        }
        model = Some(m);
    }
    if cfg.job == Job::HomologyCheck || all {
        let (s, e, n) = homology_section(data)?;
        homology = Some(HomologyView { total_space: e.to_string(), morse: n.to_string(), equal: e == n });
        sections.push(s);
    }
    let pass = sections.iter().all(|s| s.pass());
    let mut files = vec!["report.json".to_string(), "report.md".to_string()];
    files.extend(figures.iter().map(|(n, _)| n.clone()));
    let report = Report {
        job: cfg.job,
        input: cfg.input.display().to_string(),
        seed: cfg.seed,
        tolerances: *tol,
        sections,
        homology,
        model,
        files,
        pass,
    };
    Ok(JobOutput { report, figures })
}

fn mark(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

pub fn render_markdown(r: &Report) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# {} report\n", serde_json::to_value(r.job).unwrap().as_str().unwrap_or(""));
    let _ = writeln!(out, "- input: `{}`", r.input);
    let _ = writeln!(out, "- seed: {}", r.seed);
    let _ = writeln!(out, "- overall: **{}**\n", mark(r.pass));
    if let Some(h) = &r.homology {
        let _ = writeln!(out, "## Homology\n");
        let _ = writeln!(out, "- H_*(E) = {}", h.total_space);
        let _ = writeln!(out, "- H_*(N) = {}", h.morse);
        let _ = writeln!(out, "- {}\n", if h.equal { "EQUAL" } else { "DIFFERENT" });
    }
    if let Some(m) = &r.model {
        let _ = writeln!(out, "## Fibration model\n");
        let vals: Vec<String> = m.critical_values.iter().map(|c| format!("{} (x{})", c.value, c.points)).collect();
        let _ = writeln!(out, "- critical values: {}", vals.join(", "));
        let _ = writeln!(out, "- basepoint: {}", m.basepoint);
        let cyc: Vec<String> = m.cycles.iter().map(|c| format!("{} {:?}", c.name, c.class)).collect();
        let _ = writeln!(out, "- vanishing cycles: {}\n", cyc.join(", "));
    }
    for s in &r.sections {
        let _ = writeln!(out, "## {} ({})\n", s.name, mark(s.pass()));
        let _ = writeln!(out, "_{}_\n", s.anchor);
        let _ = writeln!(out, "| check | result | residual | tol | anchor | detail |");
        let _ = writeln!(out, "|---|---|---|---|---|---|");
        for c in &s.checks {
            let _ = writeln!(
                out,
                "| {} | {} | {:.3e} | {:.1e} | {} | {} |",
                c.name,
                mark(c.pass),
                c.residual,
                c.tol,
                c.anchor,
                c.detail.replace('|', "/")
            );
        }
        out.push('\n');
    }
    out
}

pub fn write_outputs(dir: &Path, out: &JobOutput) -> Result<()> {
    let io = |e: std::io::Error| Error::Construction(format!("cannot write to {}: {e}", dir.display()));
    fs::create_dir_all(dir).map_err(io)?;
    let json = serde_json::to_string_pretty(&out.report).map_err(|e| Error::Construction(e.to_string()))?;
    fs::write(dir.join("report.json"), json + "\n").map_err(io)?;
    fs::write(dir.join("report.md"), render_markdown(&out.report)).map_err(io)?;
    for (name, svg) in &out.figures {
        fs::write(dir.join(name), svg).map_err(io)?;
    }
    Ok(())
}

/// One line per check; FAIL lines carry the anchor and the measured residual.
pub fn summary_lines(r: &Report) -> Vec<String> {
    let mut lines = Vec::new();
    for s in &r.sections {
        for c in &s.checks {
            if c.pass {
                lines.push(format!("PASS {}/{}", s.name, c.name));
            } else {
                lines.push(format!(
                    "FAIL {}/{}: residual {:.3e} >= tol {:.1e} [{}] {}",
                    s.name, c.name, c.residual, c.tol, c.anchor, c.detail
                ));
            }
        }
    }
    lines
}

/// Full run with exit status: 0 all PASS, 1 any FAIL or runtime error, 2 configuration error.
pub fn main_with(args: Args) -> i32 {
    let (cfg, data) = match load(&args) {
        Ok(x) => x,
        Err(e) => {
            eprintln!("configuration error: {e}");
            return 2;
        }
    };
    let out = match run_suite(&cfg, &data).and_then(|o| write_outputs(&cfg.out, &o).map(|_| o)) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    for line in summary_lines(&out.report) {
        println!("{line}");
    }
    println!("{}: {}", mark(out.report.pass), cfg.out.display());
    if out.report.pass {
        0
    } else {
        1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const RP2: &str = r#"{"dim": 2, "case": "three", "handles": [[0.1, 0.6]], "framings": ["reversing"]}"#;

    #[test]
    fn parses_rp2() {
        let p = parse_config(RP2).unwrap();
        let MorseInput::Surface(d) = p.data else { panic!() };
        assert_eq!(d.k(), 1);
        assert_eq!(d.framings, vec![Framing::Reversing]);
        assert_eq!(p.tolerances, Tolerances::default());
    }

    #[test]
    fn missing_dim_names_the_field() {
        let e = parse_config(r#"{"case": "two", "handles": [], "framings": []}"#).unwrap_err();
        assert!(matches!(&e, Error::Parse(m) if m.contains("\"dim\"")), "{e}");
    }

    #[test]
    fn malformed_json_reports_line() {
        let e = parse_config("{\n\"dim\": 2,\n oops}").unwrap_err();
        assert!(matches!(&e, Error::Parse(m) if m.starts_with("line 3")), "{e}");
    }

    #[test]
    fn non_square_heegaard_matrix_is_a_data_error() {
        let text = r#"{"dim": 3, "case": "four", "handles": [{"alpha": [1, 0], "beta": [0, 1]}],
                       "intersections": [[1, 0]]}"#;
        assert!(matches!(parse_config(text), Err(Error::Data(_))));
    }

    #[test]
    fn bad_tolerance_and_unknown_fields() {
        let t = r#"{"dim": 4, "case": "three", "linking": [[1]], "tolerances": {"halftwist": -1}}"#;
        assert!(matches!(parse_config(t), Err(Error::Parse(m)) if m.contains("tolerances.halftwist")));
        let t = r#"{"dim": 4, "case": "three", "linking": [[1]], "tolerances": {"bogus": 1}}"#;
        assert!(matches!(parse_config(t), Err(Error::Parse(m)) if m.contains("bogus")));
        let t = r#"{"dim": 4, "case": "three", "linking": [[1]], "colour": 1}"#;
        assert!(matches!(parse_config(t), Err(Error::Parse(m)) if m.contains("colour")));
        let t = r#"{"dim": 2, "case": "two", "handles": [[0.1, 0.6]], "framings": ["reversing"]}"#;
        assert!(matches!(parse_config(t), Err(Error::Parse(m)) if m.contains("case")));
    }

    #[test]
    fn markdown_lists_every_check() {
        let cfg = JobConfig {
            input: "rp2.json".into(),
            job: Job::HomologyCheck,
            tolerances: Tolerances::default(),
            seed: 0,
            out: "unused".into(),
        };
        let out = run_suite(&cfg, &parse_config(RP2).unwrap().data).unwrap();
        let h = out.report.homology.as_ref().unwrap();
        assert_eq!(h.total_space, "(Z, Z/2, 0)");
        assert_eq!(h.morse, "(Z, Z/2, 0)");
        assert!(h.equal && out.report.pass);
        let md = render_markdown(&out.report);
        let n: usize = out.report.sections.iter().map(|s| s.checks.len()).sum();
        assert_eq!(md.matches("| PASS |").count() + md.matches("| FAIL |").count(), n);
    }
}
