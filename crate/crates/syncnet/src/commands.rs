//! The subcommands as library functions; the binary only parses arguments.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;
use syncnet_core::linalg::{eigenvalues, spectral_radius, Matrix};
use syncnet_core::lti::{analyze, LtiSystem};
use syncnet_core::sim::{run, trace_metrics, MetricSummary};
use syncnet_core::synthesis::{default_target, design_precompensator, GainSet, SynthesisError};
use syncnet_core::verify::{certify_synchronization, oracle_deviation, assemble, Certificate, ORACLE_TOL};

use crate::cases::{self, EXAMPLE_A, EXAMPLE_B, EXAMPLE_C, PRINTED_H, PRINTED_K};
use crate::config::{read_json, Experiment, ExperimentConfig, Overrides};
use crate::error::CliError;
use crate::formats::{CompensatorFile, GainFile, SystemFile};
use crate::report::{certificate_text, plot_script, summary_text, write_trace_csv};

/// Steps compared against matrix iteration by `verify`.
pub const ORACLE_STEPS: usize = 200;

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(CliError::io(dir))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(CliError::io(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
    text.push('\n');
    write_file(path, &text)
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| "experiment".into(), |s| s.to_string_lossy().into_owned())
}

#[derive(Debug, Clone, Serialize)]
struct DesignFile {
    agent: SystemFile,
    eigenvalue_moduli: Vec<f64>,
    stabilizable: bool,
    detectable: bool,
    relative_degree: Option<usize>,
    invariant_zeros: Option<Vec<[f64; 2]>>,
    gains: Option<GainFile>,
    #[serde(skip_serializing_if = "Option::is_none")]
    target_nq: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    compensator: Option<CompensatorFile>,
}

/// Designs `K`, `H` (and a pre-compensator to the `nq`-delay target when
/// `nq` is given) for each agent file. Writes `<stem>.design.json` per agent
/// and `design_report.txt`.
pub fn cmd_design(agent_files: &[PathBuf], nq: Option<usize>, out: &Path) -> Result<String, CliError> {
    if agent_files.is_empty() {
        return Err(CliError::Usage("no agent files given".into()));
    }
    let mut designs = Vec::new();
    let mut report = String::new();
    for path in agent_files {
        let file: SystemFile = read_json(path)?;
        let sys = file.to_system()?;
        let rep = analyze(&sys).map_err(SynthesisError::from)?;
        let gains = GainSet::design(&sys, true)?;
        let compensator = match nq {
            Some(q) => {
                let target = default_target(q)?;
                let comp = design_precompensator(&sys, &target)?;
                let radius = comp.residual_radius().map_err(SynthesisError::from)?;
                Some(CompensatorFile::from_compensator(&comp, radius))
            }
            None => None,
        };
        let name = stem(path);
        let _ = writeln!(report, "agent: {name}");
        let _ = writeln!(report, "  n: {}  m: {}  p: {}", sys.n(), sys.m(), sys.p());
        let _ = writeln!(report, "  stabilizable: {}  detectable: {}", rep.stabilizable, rep.detectable);
        let _ = writeln!(report, "  rho(A-BK): {:.16e}", gains.state_radius());
        if let Some(r) = gains.observer_radius() {
            let _ = writeln!(report, "  rho(A-HC): {r:.16e}");
        }
        if let Some(c) = &compensator {
            let _ = writeln!(report, "  rho(As): {:.16e}  delays: {}", c.residual_radius, c.delays);
        }
        designs.push((
            name,
            DesignFile {
                agent: file,
                eigenvalue_moduli: rep.eigenvalues_of_a.iter().map(|z| z.norm()).collect(),
                stabilizable: rep.stabilizable,
                detectable: rep.detectable,
                relative_degree: rep.relative_degree,
                invariant_zeros: rep.invariant_zeros.map(|zs| zs.iter().map(|z| [z.re, z.im]).collect()),
                gains: Some(GainFile::from_gains(&gains)),
                target_nq: nq,
                compensator,
            },
        ));
    }
    create_dir(out)?;
    for (name, d) in &designs {
        write_json(&out.join(format!("{name}.design.json")), d)?;
    }
    write_file(&out.join("design_report.txt"), &report)?;
    Ok(report)
}

/// Loads a config file and applies overrides.
pub fn load_experiment(path: &Path, ov: &Overrides) -> Result<Experiment, CliError> {
    let (cfg, base) = ExperimentConfig::from_path(path)?;
    cfg.resolve(&base, &stem(path), ov)
}

pub struct SimulateOutput {
    pub summary: MetricSummary,
    pub text: String,
}

/// Runs the experiment; writes `trace.csv`, `summary.txt` and `plot.gp`.
pub fn simulate_experiment(exp: &Experiment, out: &Path) -> Result<SimulateOutput, CliError> {
    let trace = run(&exp.sim)?;
    let summary = trace_metrics(&trace, exp.tol)?;
    create_dir(out)?;
    let csv_path = out.join("trace.csv");
    let file = File::create(&csv_path).map_err(CliError::io(&csv_path))?;
    write_trace_csv(&trace, BufWriter::new(file)).map_err(CliError::io(&csv_path))?;
    let text = summary_text(&exp.name, &trace, exp.sim.seed, exp.tol, &summary);
    write_file(&out.join("summary.txt"), &text)?;
    let state_dim = exp.sim.agents.iter().map(LtiSystem::n).min().unwrap_or(0);
    write_file(&out.join("plot.gp"), &plot_script("trace.csv", &exp.name, exp.sim.n_agents(), state_dim))?;
    Ok(SimulateOutput { summary, text })
}

pub fn cmd_simulate(config: &Path, ov: &Overrides, out: &Path) -> Result<String, CliError> {
    let exp = load_experiment(config, ov)?;
    Ok(simulate_experiment(&exp, out)?.text)
}

pub struct VerifyOutput {
    pub certificate: Certificate,
    pub oracle_deviation: f64,
    pub text: String,
}

/// Certifies and cross-checks; writes `certificate.txt` whenever a
/// certificate exists. Uncertified or oracle mismatch is an internal failure.
pub fn verify_experiment(exp: &Experiment, out: &Path) -> Result<VerifyOutput, CliError> {
    let certificate = certify_synchronization(&exp.sim)?;
    let model = assemble(&exp.sim)?;
    let mut cfg = exp.sim.clone();
    cfg.horizon = ORACLE_STEPS;
    let deviation = oracle_deviation(&model, &run(&cfg)?);
    let text = certificate_text(&exp.name, &certificate, deviation, ORACLE_STEPS);
    create_dir(out)?;
    write_file(&out.join("certificate.txt"), &text)?;
    if !(deviation < ORACLE_TOL) {
        return Err(CliError::Internal(format!("oracle deviation {deviation:e} exceeds {ORACLE_TOL:e}")));
    }
    if !certificate.certified {
        return Err(CliError::Internal(format!(
            "not certified: disagreement radius {:.16e}",
            certificate.disagreement_radius
        )));
    }
    Ok(VerifyOutput { certificate, oracle_deviation: deviation, text })
}

pub fn cmd_verify(config: &Path, ov: &Overrides, out: &Path) -> Result<String, CliError> {
    let exp = load_experiment(config, ov)?;
    Ok(verify_experiment(&exp, out)?.text)
}

/// Which gains the example reproduction uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GainChoice {
    Printed,
    Designed,
}

pub fn example_agent() -> LtiSystem {
    let a: Vec<f64> = EXAMPLE_A.iter().flatten().copied().collect();
    LtiSystem::new(Matrix::from_row_slice(3, 3, &a), Matrix::column(&EXAMPLE_B), Matrix::row(&EXAMPLE_C))
        .expect("example matrices are consistent")
}

/// Spectral data of the example agent under given gains, without the Schur
/// gate that `GainSet` applies.
#[derive(Debug, Clone, PartialEq)]
pub struct GainCheck {
    pub radius_a: f64,
    pub radius_a_bk: f64,
    pub radius_a_hc: f64,
}

pub fn check_gains(sys: &LtiSystem, k: &Matrix, h: &Matrix) -> Result<GainCheck, CliError> {
    let internal = |e: syncnet_core::linalg::LinalgError| CliError::Internal(e.to_string());
    let radius_a = eigenvalues(sys.a()).map_err(internal)?.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let radius_a_bk = spectral_radius(&(sys.a() - &sys.b().matmul(k))).map_err(internal)?;
    let radius_a_hc = spectral_radius(&(sys.a() - &h.matmul(sys.c()))).map_err(internal)?;
    Ok(GainCheck { radius_a, radius_a_bk, radius_a_hc })
}

/// Gain check of the example, then Protocol 2 simulated and verified on the
/// three bundled cases. Writes `report.txt` and one directory per case.
pub fn cmd_paper_example(gains: GainChoice, ov: &Overrides, out: &Path) -> Result<String, CliError> {
    create_dir(out)?;
    let sys = example_agent();
    let printed_k = Matrix::row(&PRINTED_K);
    let printed_h = Matrix::column(&PRINTED_H);
    let printed = check_gains(&sys, &printed_k, &printed_h)?;
    let mut report = String::new();
    let _ = writeln!(report, "example agent: max |eig(A)| = {:.16e}", printed.radius_a);
    let _ = writeln!(report, "printed gains: rho(A-BK) = {:.16e}", printed.radius_a_bk);
    let _ = writeln!(report, "printed gains: rho(A-HC) = {:.16e}", printed.radius_a_hc);
    let designed = GainSet::design(&sys, true)?;
    let _ = writeln!(report, "designed gains: rho(A-BK) = {:.16e}", designed.state_radius());
    let _ = writeln!(report, "designed gains: rho(A-HC) = {:.16e}", designed.observer_radius().unwrap_or(f64::NAN));
    let _ = writeln!(report, "gains used: {}", if gains == GainChoice::Printed { "printed" } else { "designed" });

    let chosen = match gains {
        GainChoice::Printed => GainSet::from_matrices(&sys, printed_k, Some(printed_h)),
        GainChoice::Designed => Ok(designed),
    };
    let chosen = match chosen {
        Ok(g) => g,
        Err(e) => {
            let _ = writeln!(report, "design check: FAILED ({e})");
            write_file(&out.join("report.txt"), &report)?;
            return Err(e.into());
        }
    };
    let _ = writeln!(report, "design check: passed");
    for (name, text) in cases::GRAPH_CASES {
        let mut cfg = ExperimentConfig::from_str(text)?;
        cfg.gains = Some(GainFile::from_gains(&chosen));
        let exp = cfg.resolve(Path::new("."), name, ov)?;
        let dir = out.join(name);
        let sim = simulate_experiment(&exp, &dir);
        let ver = sim.and_then(|s| verify_experiment(&exp, &dir).map(|v| (s, v)));
        match ver {
            Ok((s, v)) => {
                let m = s.summary;
                let _ = writeln!(
                    report,
                    "{name}: N = {}, certified = {}, radius = {:.6}, oracle = {:.3e}, final/initial = {:.3e}, decay = {:.6}",
                    exp.sim.n_agents(),
                    v.certificate.certified,
                    v.certificate.disagreement_radius,
                    v.oracle_deviation,
                    if m.initial > 0.0 { m.final_value / m.initial } else { 0.0 },
                    m.decay_rate
                );
            }
            Err(e) => {
                let _ = writeln!(report, "{name}: FAILED ({e})");
                write_file(&out.join("report.txt"), &report)?;
                return Err(e);
            }
        }
    }
    write_file(&out.join("report.txt"), &report)?;
    Ok(report)
}

/// Simulates and verifies each config in its own thread, into
/// `out/<stem>/`. Returns the report and the worst exit code.
pub fn cmd_batch(configs: &[PathBuf], ov: &Overrides, out: &Path) -> Result<(String, u8), CliError> {
    if configs.is_empty() {
        return Err(CliError::Usage("no config files given".into()));
    }
    let mut names: Vec<String> = configs.iter().map(|p| stem(p)).collect();
    names.sort();
    if names.windows(2).any(|w| w[0] == w[1]) {
        return Err(CliError::Usage("config file names must be distinct".into()));
    }
    create_dir(out)?;
    let results: Vec<(String, Result<String, CliError>)> = std::thread::scope(|scope| {
        let handles: Vec<_> = configs
            .iter()
            .map(|path| {
                scope.spawn(move || {
                    let name = stem(path);
                    let dir = out.join(&name);
                    let res = load_experiment(path, ov).and_then(|exp| {
                        let s = simulate_experiment(&exp, &dir)?;
                        let v = verify_experiment(&exp, &dir)?;
                        Ok(format!(
                            "certified, radius {:.6}, final/initial {:.3e}",
                            v.certificate.disagreement_radius,
                            if s.summary.initial > 0.0 { s.summary.final_value / s.summary.initial } else { 0.0 }
                        ))
                    });
                    (name, res)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("batch worker panicked")).collect()
    });
    let mut report = String::new();
    let mut code = 0;
    for (name, res) in results {
        match res {
            Ok(line) => {
                let _ = writeln!(report, "{name}: ok: {line}");
            }
            Err(e) => {
                code = code.max(e.exit_code());
                let _ = writeln!(report, "{name}: exit {}: {e}", e.exit_code());
            }
        }
    }
    write_file(&out.join("batch_report.txt"), &report)?;
    Ok((report, code))
}
