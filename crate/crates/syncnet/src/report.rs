//! Trace CSV, plot script and plain-text summaries.

use std::fmt::Write as _;
use std::io::{self, Write};

use syncnet_core::sim::{MetricSummary, Trace};
use syncnet_core::verify::Certificate;

use crate::config::ProtocolName;

pub const CSV_HEADER: &str = "k,agent,state_index,x,y,u,zeta,zetahat,eta,xhat,xi,disagreement,regulation_error";

/// 17 significant digits: parses back to the same `f64`.
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn cell(v: &[f64], i: usize) -> String {
    v.get(i).map_or_else(String::new, |&x| num(x))
}

/// One row per `(k, agent, state_index)`; columns shorter than the row's
/// index are left empty. Agent indices are 1-based.
pub fn write_trace_csv<W: Write>(trace: &Trace, mut w: W) -> io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for step in &trace.steps {
        let dis = num(step.disagreement);
        let reg = step.regulation_error.map_or_else(String::new, num);
        for (i, a) in step.agents.iter().enumerate() {
            let rows = [&a.x, &a.y, &a.u, &a.zeta, &a.zetahat, &a.eta, &a.xhat, &a.xi]
                .iter()
                .map(|v| v.len())
                .max()
                .unwrap_or(0)
                .max(1);
            for s in 0..rows {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                    step.k,
                    i + 1,
                    s + 1,
                    cell(&a.x, s),
                    cell(&a.y, s),
                    cell(&a.u, s),
                    cell(&a.zeta, s),
                    cell(&a.zetahat, s),
                    cell(&a.eta, s),
                    cell(&a.xhat, s),
                    cell(&a.xi, s),
                    dis,
                    reg
                )?;
            }
        }
    }
    Ok(())
}

/// Gnuplot script reading `csv`: disagreement (log scale) and every agent's
/// first state.
pub fn plot_script(csv: &str, title: &str, n_agents: usize, state_dim: usize) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# gnuplot script; run: gnuplot -p plot.gp");
    let _ = writeln!(s, "set datafile separator ','");
    let _ = writeln!(s, "set key outside");
    let _ = writeln!(s, "set multiplot layout {},1 title '{title}'", 1 + state_dim);
    let _ = writeln!(s, "set logscale y");
    let _ = writeln!(s, "set ylabel 'disagreement'");
    let _ = writeln!(
        s,
        "plot '{csv}' every ::1 using ($2==1 && $3==1 ? $1 : 1/0):($12 > 0 ? $12 : 1/0) with lines title 'max pairwise'"
    );
    let _ = writeln!(s, "unset logscale y");
    for st in 1..=state_dim {
        let _ = writeln!(s, "set ylabel 'x_{st}'");
        let series: Vec<String> = (1..=n_agents)
            .map(|i| format!("'{csv}' every ::1 using ($2=={i} && $3=={st} ? $1 : 1/0):4 with lines title 'agent {i}'"))
            .collect();
        let _ = writeln!(s, "plot {}", series.join(", \\\n     "));
    }
    let _ = writeln!(s, "unset multiplot");
    s
}

pub fn summary_text(name: &str, trace: &Trace, seed: u64, tol: f64, m: &MetricSummary) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "experiment: {name}");
    let _ = writeln!(s, "protocol: {}", ProtocolName::label(trace.kind));
    let _ = writeln!(s, "agents: {}", trace.steps.first().map_or(0, |r| r.agents.len()));
    let _ = writeln!(s, "horizon: {}", trace.steps.len().saturating_sub(1));
    let _ = writeln!(s, "seed: {seed}");
    let _ = writeln!(s, "tolerance: {tol:e}");
    let _ = writeln!(s, "metric: {}", metric_name(trace));
    let _ = writeln!(s, "initial_metric: {}", num(m.initial));
    let _ = writeln!(s, "final_metric: {}", num(m.final_value));
    let ratio = if m.initial > 0.0 { m.final_value / m.initial } else { 0.0 };
    let _ = writeln!(s, "final_over_initial: {}", num(ratio));
    let _ = writeln!(s, "decay_rate: {}", num(m.decay_rate));
    match m.settled_step {
        Some(k) => {
            let _ = writeln!(s, "settled_step: {k}");
        }
        None => {
            let _ = writeln!(s, "settled_step: none");
        }
    }
    s
}

fn metric_name(trace: &Trace) -> &'static str {
    match trace.kind {
        syncnet_core::protocols::ProtocolKind::RegulatedSync => "max_i |y_i - y_r|",
        syncnet_core::protocols::ProtocolKind::FullState | syncnet_core::protocols::ProtocolKind::PartialState => {
            "max_ij |x_i - x_j|"
        }
        _ => "max_ij |y_i - y_j|",
    }
}

pub fn certificate_text(name: &str, cert: &Certificate, oracle_deviation: f64, oracle_steps: usize) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "experiment: {name}");
    let _ = writeln!(s, "protocol: {}", ProtocolName::label(cert.kind));
    let _ = writeln!(s, "certified: {}", cert.certified);
    let _ = writeln!(s, "disagreement_radius: {}", num(cert.disagreement_radius));
    let _ = writeln!(s, "block_triangular: {}", cert.structure_ok());
    let _ = writeln!(s, "lower_residual: {}", num(cert.lower_residual));
    let _ = writeln!(s, "diagonal_residual: {}", num(cert.diagonal_residual));
    let _ = writeln!(s, "oracle_steps: {oracle_steps}");
    let _ = writeln!(s, "oracle_deviation: {}", num(oracle_deviation));
    for (block, radius) in &cert.blocks {
        let _ = writeln!(s, "block {block}: {}", num(*radius));
    }
    s
}
