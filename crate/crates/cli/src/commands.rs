use serde_json::json;

use sdr_core::data::{load_csv, standardize};
use sdr_core::estimators::{cdr_basis, kernel, Method};
use sdr_core::linalg::DEFAULT_REL_FLOOR;
use sdr_core::simulation::{
    bias_sweep, run_grid, run_mc, ModelSpec, SimConfig, Summary, SweepConfig, SweepStats, SweepTarget,
};
use sdr_core::slicing::{slice_discrete, slice_equal_count, SliceMode};

use crate::output::{emit, json_document, render_table, Cell, Table};
use crate::{CliError, EstimateArgs, OutputMode, SimulateArgs, SweepArgs, SweepMode, Table1Args};

/// `max(2, round(n/20))`
pub fn default_slices(n: usize) -> usize {
    ((n as f64 / 20.0).round() as usize).max(2)
}

pub fn estimate(args: &EstimateArgs) -> Result<(), CliError> {
    let data = load_csv(&args.input, &args.y)?;
    let sd = standardize(&data, DEFAULT_REL_FLOOR)?;
    let assignment = if args.discrete {
        slice_discrete(&sd.y)?
    } else {
        slice_equal_count(&sd.y, args.slices.unwrap_or_else(|| default_slices(sd.n())))?
    };
    let m = kernel(args.method, &sd.z, &assignment, args.divisor)?;
    let basis = cdr_basis(&m, args.k, &sd)?;
    let counts = assignment.counts();
    let p = sd.p();
    let mode = match assignment.mode() {
        SliceMode::EqualCount => "equal-count",
        SliceMode::Discrete => "discrete",
    };

    let text = match args.output.format {
        OutputMode::Human => {
            let mut s = format!(
                "{} with H = {} ({mode} slices), divisor {}, n = {}, p = {p}\n",
                args.method,
                assignment.len(),
                divisor_name(args.divisor),
                sd.n()
            );
            s.push_str(&format!("slice counts: {}\n", join(counts.iter().map(|c| c.to_string()))));
            s.push_str(&format!(
                "eigenvalues: {}\n",
                join(basis.all_eigenvalues.iter().map(|v| format!("{v:.6}")))
            ));
            for j in 0..args.k {
                s.push_str(&format!("\ndirection {} (eigenvalue {:.6})\n", j + 1, basis.eigenvalues[j]));
                s.push_str(&format!("  x-scale: {}\n", join(basis.betas_x.column(j).iter().map(|v| format!("{v:.6}")))));
                s.push_str(&format!("  z-scale: {}\n", join(basis.betas_z.column(j).iter().map(|v| format!("{v:.6}")))));
            }
            if args.method == Method::Csave {
                s.push_str(&format!("\nnegative eigenvalues: {}\n", basis.negative_eigenvalues));
            }
            if basis.ambiguous_dimension {
                s.push_str(&format!(
                    "\nwarning: eigenvalues {} and {} coincide; the {}-dimensional span is not identified\n",
                    args.k,
                    args.k + 1,
                    args.k
                ));
            }
            s
        }
        OutputMode::Csv => {
            let mut t = Table::new(&["quantity", "direction", "coordinate", "value"]);
            for (i, v) in basis.all_eigenvalues.iter().enumerate() {
                t.push(vec!["eigenvalue".into(), (i + 1).into(), Cell::Empty, (*v).into()]);
            }
            for (name, mat) in [("beta_x", &basis.betas_x), ("beta_z", &basis.betas_z)] {
                for j in 0..args.k {
                    for i in 0..p {
                        t.push(vec![name.into(), (j + 1).into(), (i + 1).into(), mat.get(i, j).into()]);
                    }
                }
            }
            for (h, c) in counts.iter().enumerate() {
                t.push(vec!["slice_count".into(), Cell::Empty, (h + 1).into(), (*c).into()]);
            }
            t.push(vec!["negative_eigenvalues".into(), Cell::Empty, Cell::Empty, basis.negative_eigenvalues.into()]);
            t.push(vec!["ambiguous_dimension".into(), Cell::Empty, Cell::Empty, basis.ambiguous_dimension.into()]);
            t.to_csv()
        }
        OutputMode::Json => {
            let directions: Vec<_> = (0..args.k)
                .map(|j| {
                    json!({
                        "index": j + 1,
                        "eigenvalue": basis.eigenvalues[j],
                        "beta_x": basis.betas_x.column(j),
                        "beta_z": basis.betas_z.column(j),
                    })
                })
                .collect();
            let meta = json!({
                "input": args.input.display().to_string(),
                "method": args.method,
                "slices": assignment.len(),
                "slice_mode": mode,
                "divisor": args.divisor,
                "k": args.k,
                "n": sd.n(),
                "p": p,
            });
            let results = json!({
                "eigenvalues": basis.all_eigenvalues,
                "directions": directions,
                "slice_counts": counts,
                "negative_eigenvalues": basis.negative_eigenvalues,
                "ambiguous_dimension": basis.ambiguous_dimension,
            });
            json_document("estimate", meta, results)
        }
    };
    emit(&text, args.output.path.as_deref())
}

fn divisor_name(d: sdr_core::slicing::Divisor) -> &'static str {
    match d {
        sdr_core::slicing::Divisor::Count => "c",
        sdr_core::slicing::Divisor::CountMinusOne => "c-1",
    }
}

fn join(items: impl Iterator<Item = String>) -> String {
    items.collect::<Vec<_>>().join(" ")
}

fn summary_cells(s: &Summary, quantiles: bool) -> Vec<Cell> {
    if quantiles {
        vec![s.median.into(), s.q1.into(), s.q3.into(), s.min.into(), s.max.into()]
    } else {
        vec![s.median.into()]
    }
}

const SUMMARY_FULL: [&str; 5] = ["median", "q1", "q3", "min", "max"];

fn summary_table(quantiles: bool) -> Table {
    let mut h = vec!["model", "method", "H", "n"];
    h.extend_from_slice(if quantiles { &SUMMARY_FULL[..] } else { &SUMMARY_FULL[..1] });
    h.push("reps");
    Table::new(&h)
}

fn sample_note(reps: usize) -> &'static str {
    if reps == 1 {
        " (single sample, no Monte Carlo spread)"
    } else {
        ""
    }
}

pub fn simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let model = ModelSpec::new(args.model, args.p)?;
    let mut cfg = SimConfig::new(model, args.n, args.slices, args.reps, args.seed);
    cfg.methods = args.methods.clone();
    cfg.standardize = args.standardize;
    let report = run_mc(&cfg)?;

    // JSON always carries the full summary
    let quantiles = args.quantiles || args.output.format == OutputMode::Json;
    let mut table = summary_table(quantiles);
    for r in &report.results {
        let mut row: Vec<Cell> = vec![args.model.into(), r.method.name().into(), args.slices.into(), args.n.into()];
        row.extend(summary_cells(&r.summary, quantiles));
        row.push(r.summary.reps.into());
        table.push(row);
    }
    let meta = json!({
        "model": args.model,
        "p": args.p,
        "n": args.n,
        "slices": args.slices,
        "reps": args.reps,
        "seed": args.seed,
        "methods": args.methods,
        "standardize": args.standardize,
    });
    let title = format!(
        "Model {}, n = {}, p = {}, H = {}, {} replicates, seed {}{}",
        args.model,
        args.n,
        args.p,
        args.slices,
        args.reps,
        args.seed,
        sample_note(args.reps)
    );
    let text = render_table(args.output.format, "simulate", meta, &title, &table);
    emit(&text, args.output.path.as_deref())
}

pub fn table1(args: &Table1Args) -> Result<(), CliError> {
    let models = args
        .models
        .iter()
        .map(|&m| ModelSpec::new(m, args.p))
        .collect::<Result<Vec<_>, _>>()?;
    let methods = [Method::Save, Method::Sir, Method::Csave];
    let rows = run_grid(&models, &args.slices, args.n, args.reps, args.seed, &methods, args.standardize)?;

    let text = if args.output.format == OutputMode::Human {
        // one row per (model, method), one column per H
        let mut headers = vec!["model".to_string(), "method".to_string()];
        headers.extend(args.slices.iter().map(|h| format!("H={h}")));
        let mut t = Table {
            headers,
            rows: Vec::new(),
        };
        for chunk in rows.chunks(args.slices.len()) {
            let mut row: Vec<Cell> = vec![chunk[0].model.into(), chunk[0].method.name().into()];
            row.extend(chunk.iter().map(|r| Cell::Float(r.summary.median)));
            t.push(row);
        }
        format!(
            "Median R² over {} replicates, n = {}, p = {}, seed {}{}\n\n{}",
            args.reps,
            args.n,
            args.p,
            args.seed,
            sample_note(args.reps),
            t.to_human()
        )
    } else {
        let mut t = summary_table(true);
        for r in &rows {
            let mut row: Vec<Cell> = vec![r.model.into(), r.method.name().into(), r.slices.into(), args.n.into()];
            row.extend(summary_cells(&r.summary, true));
            row.push(r.summary.reps.into());
            t.push(row);
        }
        let meta = json!({
            "models": args.models,
            "slices": args.slices,
            "n": args.n,
            "p": args.p,
            "reps": args.reps,
            "seed": args.seed,
            "methods": methods,
            "standardize": args.standardize,
        });
        render_table(args.output.format, "table1", meta, "", &t)
    };
    emit(&text, args.output.path.as_deref())
}

pub fn sweep(args: &SweepArgs) -> Result<(), CliError> {
    let (c_default, n_default): (Vec<usize>, Vec<usize>) = match args.mode {
        SweepMode::Bias => (vec![2], vec![20000]),
        SweepMode::Consistency => (vec![4], vec![400, 1600, 6400]),
    };
    let target = match args.model {
        Some(id) => SweepTarget::Model(ModelSpec::new(id, 10)?),
        None => SweepTarget::Null { p: args.p },
    };
    let cfg = SweepConfig {
        target,
        n_grid: args.n_grid.clone().unwrap_or(n_default),
        c_grid: args.c_grid.clone().unwrap_or(c_default),
        reps: args.reps,
        seed: args.seed,
        standardize: args.standardize,
    };
    let rows = bias_sweep(&cfg)?;

    let null = matches!(cfg.target, SweepTarget::Null { .. });
    let mut table = if null {
        Table::new(&[
            "n",
            "c",
            "H",
            "reps",
            "mean_lambda",
            "mean_lambda_corrected",
            "mean_v",
            "mean_err_raw",
            "mean_err_corrected",
            "median_err_raw",
            "median_err_corrected",
            "corrected_err_ratio",
        ])
    } else {
        Table::new(&["n", "c", "H", "reps", "median_r2_save", "median_r2_csave", "median_r2_sir"])
    };
    for row in &rows {
        let mut cells: Vec<Cell> = vec![row.n.into(), row.c.into(), row.slices.into(), row.reps.into()];
        match &row.stats {
            SweepStats::Null(s) => {
                // corrected error relative to the smallest n at the same c
                let first = rows
                    .iter()
                    .find(|r| r.c == row.c)
                    .and_then(|r| r.null_stats())
                    .map(|s| s.median_err_corrected)
                    .unwrap_or(f64::NAN);
                cells.extend([
                    s.mean_lambda,
                    s.mean_lambda_corrected,
                    s.mean_v,
                    s.mean_err_raw,
                    s.mean_err_corrected,
                    s.median_err_raw,
                    s.median_err_corrected,
                    s.median_err_corrected / first,
                ]
                .map(Cell::Float));
            }
            SweepStats::Model(s) => {
                cells.extend([s.median_r2_save, s.median_r2_csave, s.median_r2_sir].map(Cell::Float));
            }
        }
        table.push(cells);
    }
    let mode = match args.mode {
        SweepMode::Bias => "bias",
        SweepMode::Consistency => "consistency",
    };
    let meta = json!({
        "mode": mode,
        "target": cfg.target,
        "n_grid": cfg.n_grid,
        "c_grid": cfg.c_grid,
        "reps": cfg.reps,
        "seed": cfg.seed,
        "standardize": cfg.standardize,
    });
    let what = match &cfg.target {
        SweepTarget::Null { p } => format!("null model, p = {p}"),
        SweepTarget::Model(m) => format!("model {}, p = {}", m.id, m.p),
    };
    let title = format!("{mode} sweep, {what}, {} replicates, seed {}{}", cfg.reps, cfg.seed, sample_note(cfg.reps));
    let text = render_table(args.output.format, "sweep", meta, &title, &table);
    emit(&text, args.output.path.as_deref())
}
