//! Parallel drivers behind the subcommands and their output formats.
//!
//! Work is spread with rayon; every result is assembled in a fixed order and
//! every random draw is keyed by `(seed, point)`, so outputs do not depend on
//! the thread count.

use bayes_mtl_core::model::ValidatedEnsemble;
use bayes_mtl_core::phase::{self, Axis, PhaseGrid};
use bayes_mtl_core::solver::{self, RiskReport, SolverOptions};
use bayes_mtl_core::synth::{self, RiskEstimate};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::format::{flag, float, json};

#[derive(Serialize)]
struct RiskJson<'a> {
    q_u: &'a [f64],
    q_v: &'a [f64],
    risk: &'a [f64],
    iterations: usize,
    residual: f64,
}

pub fn risk_json(report: &RiskReport) -> Result<String> {
    Ok(json(&RiskJson {
        q_u: &report.overlaps.q_u,
        q_v: &report.overlaps.q_v,
        risk: &report.risk,
        iterations: report.overlaps.iterations,
        residual: report.overlaps.residual,
    })?)
}

fn csv_bytes(header: Vec<String>, rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(&header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| Error::Usage(e.to_string()))
}

fn check_axis_count(axes: &[Axis], max: usize) -> Result<()> {
    if axes.len() > max {
        return Err(Error::Usage(format!(
            "at most {max} --sweep axes allowed, got {}",
            axes.len()
        )));
    }
    Ok(())
}

pub fn phase_grid(
    template: &ValidatedEnsemble,
    axes: &[Axis],
    with_risk: bool,
    opts: &SolverOptions,
) -> Result<PhaseGrid> {
    if axes.is_empty() {
        return Err(Error::Usage("phase needs one or two --sweep axes".into()));
    }
    check_axis_count(axes, 2)?;
    let cells = phase::grid_points(axes)
        .par_iter()
        .map(|coords| phase::evaluate_cell(template, axes, coords, with_risk, opts))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(phase::assemble(axes, cells)?)
}

/// `axis1[,axis2],mu,feasible,risk_task1,...`; `feasible` is 1 or 0.
pub fn phase_csv(grid: &PhaseGrid, tasks: usize) -> Result<Vec<u8>> {
    let with_risk = grid.cells.first().is_some_and(|c| c.risk.is_some());
    let mut header: Vec<String> = (1..=grid.axes.len()).map(|k| format!("axis{k}")).collect();
    header.extend(["mu".into(), "feasible".into()]);
    if with_risk {
        header.extend((1..=tasks).map(|t| format!("risk_task{t}")));
    }
    let rows = grid.cells.iter().map(|cell| {
        let mut row: Vec<String> = cell.coords.iter().map(|&v| float(v)).collect();
        row.push(float(cell.mu));
        row.push(flag(cell.feasible).into());
        if let Some(risk) = &cell.risk {
            row.extend(risk.iter().map(|&r| float(r)));
        }
        row
    });
    csv_bytes(header, rows)
}

#[derive(Debug, Clone)]
pub struct SimulationSpec {
    pub axis: Option<Axis>,
    pub dim: usize,
    /// Points per task; `round(alpha_t D)` when absent.
    pub sizes: Option<Vec<usize>>,
    pub n_test: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationRow {
    pub param: Option<f64>,
    pub theory: Vec<f64>,
    pub empirical: Vec<RiskEstimate>,
}

/// Sweep point `i` draws its dataset and test points from seed `seed + i`.
pub fn simulate(
    template: &ValidatedEnsemble,
    spec: &SimulationSpec,
    opts: &SolverOptions,
) -> Result<Vec<SimulationRow>> {
    let points: Vec<Option<f64>> = match &spec.axis {
        Some(axis) => (0..axis.steps).map(|i| Some(axis.value(i))).collect(),
        None => vec![None],
    };
    points
        .par_iter()
        .enumerate()
        .map(|(i, &param)| {
            let ens = match (&spec.axis, param) {
                (Some(axis), Some(v)) => {
                    phase::apply_coordinates(template, std::slice::from_ref(axis), &[v])?
                }
                _ => template.clone(),
            };
            let seed = spec.seed.wrapping_add(i as u64);
            let theory = solver::risk_report(&ens, opts)?.risk;
            let sizes = spec
                .sizes
                .clone()
                .unwrap_or_else(|| synth::sizes_from_alpha(&ens, spec.dim));
            let data = synth::generate(&ens, spec.dim, &sizes, seed)?;
            let weights = synth::fit_supervised(&ens, &data)?;
            let empirical = (0..ens.tasks())
                .map(|t| synth::empirical_risk(&ens, &data, &weights, t, spec.n_test, seed))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(SimulationRow {
                param,
                theory,
                empirical,
            })
        })
        .collect()
}

/// `param,theory_risk_1,emp_risk_1,stderr_1,theory_risk_2,...`; `param` is
/// empty without a sweep.
pub fn simulation_csv(rows: &[SimulationRow], tasks: usize) -> Result<Vec<u8>> {
    let mut header = vec!["param".to_string()];
    for t in 1..=tasks {
        header.extend([
            format!("theory_risk_{t}"),
            format!("emp_risk_{t}"),
            format!("stderr_{t}"),
        ]);
    }
    let rows = rows.iter().map(|row| {
        let mut out = vec![row.param.map(float).unwrap_or_default()];
        for (theory, emp) in row.theory.iter().zip(&row.empirical) {
            out.extend([float(*theory), float(emp.risk), float(emp.stderr)]);
        }
        out
    });
    csv_bytes(header, rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateRow {
    pub seed: u64,
    /// `max_ts |C_hat_ts - C_ts|`.
    pub c_err_max: f64,
    pub sigma_err: Vec<f64>,
    pub clamped: Vec<bool>,
}

pub fn estimate(
    ens: &ValidatedEnsemble,
    dim: usize,
    sizes: Option<&[usize]>,
    seed: u64,
    seeds: usize,
) -> Result<Vec<EstimateRow>> {
    if let Some(t) = ens.eta().iter().position(|&e| e <= 0.0) {
        return Err(Error::Usage(format!(
            "eta[{t}] = 0: estimating C and sigma needs labeled points in every task"
        )));
    }
    if seeds == 0 {
        return Err(Error::Usage("--seeds must be positive".into()));
    }
    let sizes = sizes.map_or_else(|| synth::sizes_from_alpha(ens, dim), <[usize]>::to_vec);
    let sigma = ens.config().sigma();
    (0..seeds as u64)
        .into_par_iter()
        .map(|k| {
            let seed = seed.wrapping_add(k);
            let data = synth::generate(ens, dim, &sizes, seed)?;
            let est = synth::estimate_parameters(&data)?;
            Ok(EstimateRow {
                seed,
                c_err_max: (&est.correlation - ens.correlation()).amax(),
                sigma_err: est
                    .sigma
                    .iter()
                    .zip(&sigma)
                    .map(|(a, b)| (a - b).abs())
                    .collect(),
                clamped: est.clamped,
            })
        })
        .collect()
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => values[n / 2],
        _ => 0.5 * (values[n / 2 - 1] + values[n / 2]),
    }
}

/// `seed,c_err_max,sigma_err_1,...`, then a `median` row.
pub fn estimate_csv(rows: &[EstimateRow], tasks: usize) -> Result<Vec<u8>> {
    let mut header = vec!["seed".to_string(), "c_err_max".to_string()];
    header.extend((1..=tasks).map(|t| format!("sigma_err_{t}")));
    let mut out: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut row = vec![r.seed.to_string(), float(r.c_err_max)];
            row.extend(r.sigma_err.iter().map(|&e| float(e)));
            row
        })
        .collect();
    let mut summary = vec![
        "median".to_string(),
        float(median(
            &mut rows.iter().map(|r| r.c_err_max).collect::<Vec<_>>(),
        )),
    ];
    summary.extend((0..tasks).map(|t| {
        float(median(
            &mut rows.iter().map(|r| r.sigma_err[t]).collect::<Vec<_>>(),
        ))
    }));
    out.push(summary);
    csv_bytes(header, out)
}

pub struct DatasetFiles {
    /// One CSV per task: `label,labeled_flag,y_0,...`.
    pub tasks: Vec<Vec<u8>>,
    /// `task,u_0,...`, when requested.
    pub hidden: Option<Vec<u8>>,
}

pub fn dataset_csvs(data: &synth::Dataset, hidden: bool) -> Result<DatasetFiles> {
    let dim = data.dim;
    let coords = |prefix: &'static str| (0..dim).map(move |k| format!("{prefix}_{k}"));
    let tasks = data
        .tasks
        .iter()
        .map(|s| {
            let mut header = vec!["label".to_string(), "labeled_flag".to_string()];
            header.extend(coords("y"));
            let rows = (0..s.len()).map(|i| {
                let mut row = vec![s.labels[i].to_string(), flag(s.labeled[i]).to_string()];
                row.extend(s.points.column(i).iter().map(|&v| float(v)));
                row
            });
            csv_bytes(header, rows)
        })
        .collect::<Result<Vec<_>>>()?;
    let hidden = if hidden {
        let mut header = vec!["task".to_string()];
        header.extend(coords("u"));
        let rows = (0..data.hidden.ncols()).map(|t| {
            let mut row = vec![(t + 1).to_string()];
            row.extend(data.hidden.column(t).iter().map(|&v| float(v)));
            row
        });
        Some(csv_bytes(header, rows)?)
    } else {
        None
    };
    Ok(DatasetFiles { tasks, hidden })
}
