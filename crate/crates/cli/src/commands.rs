use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use lbp_core::boundary::{boundary_law_residual, messages_to_boundary_law};
use lbp_core::certify::{dobrushin_certificate, format_sig};
use lbp_core::ctree;
use lbp_core::exact::{ExactDistribution, DEFAULT_ENUMERATION_CAP};
use lbp_core::lbp::{self, multi_restart, RunOptions};
use lbp_core::model::validate;
use lbp_core::{
    BoundaryLaw, ConvergenceReport, GridSweep, MessageSet, ModelSpec, PairwiseModel, Status,
};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::{Command, Engine, Family, Format, Init, Output};

pub fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Validate { model } => {
            let m = load_model(&model)?;
            println!("ok: {} nodes, {} edges", m.num_nodes(), m.num_edges());
            Ok(())
        }
        Command::Lbp {
            model,
            engine,
            init,
            restarts,
            out,
        } => run_lbp(&load_model(&model)?, &engine, init, restarts, &out),
        Command::Exact {
            model,
            marginal,
            out,
        } => run_exact(&load_model(&model)?, &marginal, &out),
        Command::Certify { model, out } => {
            let cert = dobrushin_certificate(&load_model(&model)?);
            let text = match out.format.unwrap_or(Format::Json) {
                Format::Json => to_json(&cert)?,
                Format::Text => cert.to_table(),
                Format::Csv => {
                    let mut w = csv::Writer::from_writer(Vec::new());
                    w.write_record(["node", "sum"]).map_err(csv_err)?;
                    for n in &cert.node_sums {
                        w.write_record([n.node.clone(), n.sum.to_string()])
                            .map_err(csv_err)?;
                    }
                    csv_string(w)?
                }
            };
            emit(&out, &text)
        }
        Command::Ctree {
            model,
            root,
            depth,
            check,
            dot,
            init,
            seed,
            max_nodes,
            out,
        } => {
            let m = load_model(&model)?;
            let root_idx = node(&m, &root)?;
            let opts = CtreeOpts {
                root: root_idx,
                depth,
                init,
                seed,
                max_nodes,
            };
            if check {
                run_check(&m, &opts, &out)
            } else if dot {
                let tree = ctree::build(&m, root_idx, depth, max_nodes)?;
                emit(&out, &tree.to_dot(&m))
            } else {
                let tree = ctree::build(&m, root_idx, depth, max_nodes)?;
                let summary = TreeSummary {
                    root,
                    depth,
                    nodes: tree.len(),
                    leaves: tree.leaves().count(),
                    level_sizes: tree.level_sizes(),
                };
                let text = match out.format.unwrap_or(Format::Json) {
                    Format::Json => to_json(&summary)?,
                    _ => {
                        let mut s = String::new();
                        let _ = writeln!(s, "root: {}", summary.root);
                        let _ = writeln!(s, "depth: {}", summary.depth);
                        let _ = writeln!(s, "nodes: {}", summary.nodes);
                        let _ = writeln!(s, "leaves: {}", summary.leaves);
                        let _ = writeln!(s, "level sizes: {:?}", summary.level_sizes);
                        s
                    }
                };
                emit(&out, &text)
            }
        }
        Command::Sweep {
            family: Family::IsingGrid,
            rows,
            cols,
            j_min,
            j_max,
            steps,
            h,
            engine,
            restarts,
            out,
        } => {
            let sweep = GridSweep {
                rows,
                cols,
                j_min,
                j_max,
                steps,
                field: h,
                run: RunOptions::new(engine.tol, engine.max_iters),
                restarts,
                seed: engine.seed,
            };
            let rows = sweep.run()?;
            let text = match out.format.unwrap_or(Format::Csv) {
                Format::Json => to_json(&rows)?,
                _ => {
                    let mut w = csv::Writer::from_writer(Vec::new());
                    for r in &rows {
                        w.serialize(r).map_err(csv_err)?;
                    }
                    csv_string(w)?
                }
            };
            emit(&out, &text)
        }
    }
}

fn load_model(path: &Path) -> Result<PairwiseModel, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::File {
        path: path.to_owned(),
        source,
    })?;
    let spec: ModelSpec = serde_json::from_str(&text).map_err(|source| CliError::Parse {
        path: path.to_owned(),
        source,
    })?;
    Ok(validate(&spec)?)
}

fn node(model: &PairwiseModel, id: &str) -> Result<usize, CliError> {
    model
        .node_index(id)
        .ok_or_else(|| CliError::UnknownNode(id.to_owned()))
}

fn initial(model: &PairwiseModel, init: Init, seed: u64) -> MessageSet {
    match init {
        Init::Uniform => MessageSet::uniform(model),
        Init::Random => MessageSet::random(model, seed),
    }
}

fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Output(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Output(e.to_string())
}

fn csv_string(w: csv::Writer<Vec<u8>>) -> Result<String, CliError> {
    let bytes = w
        .into_inner()
        .map_err(|e| CliError::Output(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Output(e.to_string()))
}

fn emit(out: &Output, text: &str) -> Result<(), CliError> {
    match &out.output {
        Some(path) => fs::write(path, text).map_err(|source| CliError::File {
            path: path.clone(),
            source,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Document written by `lbp`.
#[derive(Debug, Serialize, Deserialize)]
pub struct LbpOutput {
    /// Node ids, in the order used by `report.beliefs`.
    pub nodes: Vec<String>,
    pub report: ConvergenceReport,
    pub boundary_law: Option<BoundaryLaw>,
    pub boundary_law_residual: Option<f64>,
    pub restarts: Option<RestartSummary>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RestartSummary {
    pub runs: usize,
    pub seed: u64,
    pub converged: usize,
    pub oscillating: usize,
    pub max_iterations: usize,
    pub num_clusters: usize,
}

fn run_lbp(
    model: &PairwiseModel,
    engine: &Engine,
    init: Init,
    restarts: usize,
    out: &Output,
) -> Result<(), CliError> {
    let opts = RunOptions::new(engine.tol, engine.max_iters);
    let report = lbp::run(model, initial(model, init, engine.seed), &opts)?;
    let (boundary_law, boundary_law_residual) = if report.status == Status::Converged {
        let law = messages_to_boundary_law(model, &report.messages)?;
        let residual = boundary_law_residual(model, &law);
        (Some(law), Some(residual))
    } else {
        (None, None)
    };
    let restarts = if restarts > 1 {
        let multi = multi_restart(model, restarts, engine.seed, &opts)?;
        Some(RestartSummary {
            runs: multi.runs.len(),
            seed: engine.seed,
            converged: multi.count(Status::Converged),
            oscillating: multi.count(Status::Oscillating),
            max_iterations: multi.count(Status::MaxIterations),
            num_clusters: multi.num_clusters,
        })
    } else {
        None
    };
    let doc = LbpOutput {
        nodes: (0..model.num_nodes())
            .map(|i| model.node_id(i).to_owned())
            .collect(),
        report,
        boundary_law,
        boundary_law_residual,
        restarts,
    };

    let text = match out.format.unwrap_or(Format::Json) {
        Format::Json => to_json(&doc)?,
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["node", "state", "belief"])
                .map_err(csv_err)?;
            for (id, b) in doc.nodes.iter().zip(&doc.report.beliefs.0) {
                for (x, p) in b.iter().enumerate() {
                    w.write_record([id.clone(), x.to_string(), p.to_string()])
                        .map_err(csv_err)?;
                }
            }
            csv_string(w)?
        }
        Format::Text => {
            let r = &doc.report;
            let mut s = String::new();
            let _ = writeln!(s, "status: {}", r.status);
            let _ = writeln!(s, "iterations: {}", r.iterations);
            let _ = writeln!(s, "final residual: {}", format_sig(r.final_residual));
            if let Some(p) = r.detected_period {
                let _ = writeln!(s, "period: {p}");
            }
            if let Some(res) = doc.boundary_law_residual {
                let _ = writeln!(s, "boundary law residual: {}", format_sig(res));
            }
            if let Some(rs) = &doc.restarts {
                let _ = writeln!(
                    s,
                    "restarts: {} ({} converged, {} oscillating, {} max-iterations), {} fixed-point clusters",
                    rs.runs, rs.converged, rs.oscillating, rs.max_iterations, rs.num_clusters
                );
            }
            let _ = writeln!(s, "beliefs:");
            for (id, b) in doc.nodes.iter().zip(&r.beliefs.0) {
                let cells: Vec<String> = b.iter().map(|&p| format_sig(p)).collect();
                let _ = writeln!(s, "  {id}: {}", cells.join(" "));
            }
            s
        }
    };
    emit(out, &text)
}

/// Marginal table keyed by node ids; row-major, first node most significant.
#[derive(Debug, Serialize, Deserialize)]
pub struct NamedMarginal {
    pub nodes: Vec<String>,
    pub shape: Vec<usize>,
    pub probs: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ExactOutput {
    pub log_partition: f64,
    pub marginals: Vec<NamedMarginal>,
}

fn run_exact(model: &PairwiseModel, marginal: &[String], out: &Output) -> Result<(), CliError> {
    let dist = ExactDistribution::new(model, DEFAULT_ENUMERATION_CAP)?;
    let sets: Vec<Vec<usize>> = if marginal.is_empty() {
        (0..model.num_nodes()).map(|i| vec![i]).collect()
    } else {
        vec![marginal
            .iter()
            .map(|id| node(model, id.trim()))
            .collect::<Result<_, _>>()?]
    };
    let mut marginals = Vec::with_capacity(sets.len());
    for set in &sets {
        let table = dist.marginal(set)?;
        marginals.push(NamedMarginal {
            nodes: table
                .nodes
                .iter()
                .map(|&i| model.node_id(i).to_owned())
                .collect(),
            shape: table.shape,
            probs: table.probs,
        });
    }
    let doc = ExactOutput {
        log_partition: dist.log_partition(),
        marginals,
    };

    let text = match out.format.unwrap_or(Format::Json) {
        Format::Json => to_json(&doc)?,
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["nodes", "states", "probability"])
                .map_err(csv_err)?;
            for m in &doc.marginals {
                for (k, p) in m.probs.iter().enumerate() {
                    w.write_record([m.nodes.join(";"), states_of(k, &m.shape), p.to_string()])
                        .map_err(csv_err)?;
                }
            }
            csv_string(w)?
        }
        Format::Text => {
            let mut s = String::new();
            let _ = writeln!(s, "log Z: {}", format_sig(doc.log_partition));
            for m in &doc.marginals {
                let _ = writeln!(s, "marginal of {}:", m.nodes.join(", "));
                for (k, p) in m.probs.iter().enumerate() {
                    let _ = writeln!(s, "  {}: {}", states_of(k, &m.shape), format_sig(*p));
                }
            }
            s
        }
    };
    emit(out, &text)
}

fn states_of(mut k: usize, shape: &[usize]) -> String {
    let mut states = vec![0; shape.len()];
    for (s, &n) in states.iter_mut().zip(shape).rev() {
        *s = k % n;
        k /= n;
    }
    states
        .iter()
        .map(|s| s.to_string())
        .collect::<Vec<_>>()
        .join(";")
}

struct CtreeOpts {
    root: usize,
    depth: usize,
    init: Init,
    seed: u64,
    max_nodes: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TreeSummary {
    pub root: String,
    pub depth: usize,
    pub nodes: usize,
    pub leaves: usize,
    pub level_sizes: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CheckOutput {
    pub root: String,
    pub depth: usize,
    pub lbp_belief: Vec<f64>,
    pub tree_marginal: Vec<f64>,
    pub gap: f64,
    pub tolerance: f64,
    pub pass: bool,
}

fn run_check(model: &PairwiseModel, opts: &CtreeOpts, out: &Output) -> Result<(), CliError> {
    let init = initial(model, opts.init, opts.seed);
    let eq =
        ctree::equivalence_check_with_cap(model, opts.root, opts.depth, &init, opts.max_nodes)?;
    let doc = CheckOutput {
        root: model.node_id(opts.root).to_owned(),
        depth: opts.depth,
        lbp_belief: eq.lbp_belief,
        tree_marginal: eq.tree_marginal,
        gap: eq.gap,
        tolerance: ctree::EQUIVALENCE_TOLERANCE,
        pass: eq.pass,
    };
    let text = match out.format.unwrap_or(Format::Json) {
        Format::Json => to_json(&doc)?,
        _ => format!("gap: {}\npass: {}\n", format_sig(doc.gap), doc.pass),
    };
    emit(out, &text)?;
    if doc.pass {
        Ok(())
    } else {
        Err(CliError::CheckFailed {
            gap: doc.gap,
            tolerance: doc.tolerance,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn state_labels_are_row_major() {
        assert_eq!(states_of(0, &[2, 3]), "0;0");
        assert_eq!(states_of(1, &[2, 3]), "0;1");
        assert_eq!(states_of(3, &[2, 3]), "1;0");
        assert_eq!(states_of(5, &[2, 3]), "1;2");
        assert_eq!(states_of(2, &[4]), "2");
    }
}
