//! Sweep evaluation.

use crate::experiment::{Experiment, Kind, Point, SweepVar};
use crate::table::Table;
use crate::CliError;
use fasris::blockapprox::{approximate, BlockStructure};
use fasris::channel::{jakes_correlation, PortSampler, SystemConfig};
use fasris::montecarlo::{empirical_pdf, outage_from_samples, sample_amax, sample_port_envelopes};
use fasris::optimize::{
    bsm_csi_based, closed_form_csi_free, exhaustive, gda_csi_based, pgda_csi_free, with_overhead, CsiBasedObjective,
    CsiFreeObjective, Solver, ThroughputSolution,
};
use fasris::outage::{evaluate, CsiBasedMoments, CsiFreeMoments, Model, OutageQuery, OverheadPolicy, DEFAULT_TOTAL_SLOTS};
use fasris::specfun::norm_pdf;
use fasris::Scheme;
use indexmap::IndexMap;
use rayon::prelude::*;
use serde_json::Value;
use std::collections::HashMap;
use std::sync::Arc;
use std::time::Instant;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Add a wall-clock `runtime_ms` column (output is then no longer reproducible).
    pub timing: bool,
}

type Row = IndexMap<String, Value>;

fn num(v: f64) -> Value {
    serde_json::Number::from_f64(v).map(Value::Number).unwrap_or(Value::Null)
}

/// Evaluate every point of the experiment; rows follow series then sweep order.
pub fn run_experiment(exp: &Experiment, opts: &RunOptions) -> Result<Table, CliError> {
    exp.validate()?;
    let points = exp.points()?;
    let columns = columns(exp, opts);
    let rows: Vec<Row> = match exp.kind {
        Kind::Pdf => pdf_rows(exp, &points, opts)?,
        Kind::Outage | Kind::Throughput => {
            let samples = simulate(exp, &points)?;
            points
                .par_iter()
                .map(|p| {
                    let start = Instant::now();
                    let mut row = sweep_row(exp, p);
                    let mut errors = Vec::new();
                    match exp.kind {
                        Kind::Outage => outage_cells(exp, p, &samples, &mut row, &mut errors),
                        _ => throughput_cells(exp, p, &samples, &mut row, &mut errors),
                    }
                    row.insert("error".into(), Value::String(errors.join("; ")));
                    if opts.timing {
                        row.insert("runtime_ms".into(), num(start.elapsed().as_secs_f64() * 1e3));
                    }
                    row
                })
                .collect()
        }
    };
    Ok(Table::from_rows(columns, rows))
}

fn sweep_var(exp: &Experiment) -> Option<SweepVar> {
    exp.sweep.as_ref().map(|s| s.variable)
}

fn sweep_row(exp: &Experiment, p: &Point) -> Row {
    let mut row = Row::new();
    for k in exp.series_keys() {
        row.insert(k.clone(), p.series.get(&k).cloned().unwrap_or(Value::Null));
    }
    if let (Some(var), Some(v)) = (sweep_var(exp), p.sweep_value) {
        let val = match var {
            SweepVar::N | SweepVar::M => Value::from(v as u64),
            _ => num(v),
        };
        row.insert(var.key().to_string(), val);
    }
    row
}

/// The column list is fixed by the experiment, never by the data.
pub fn columns(exp: &Experiment, opts: &RunOptions) -> Vec<String> {
    let mut cols = exp.series_keys();
    if let Some(var) = sweep_var(exp) {
        if !cols.iter().any(|c| c == var.key()) {
            cols.push(var.key().to_string());
        }
    }
    match exp.kind {
        Kind::Pdf => {
            cols.extend(["scheme", "quantity", "bin_center", "density", "theory"].map(String::from));
        }
        Kind::Outage => {
            cols.push("B".into());
            for m in &exp.models {
                let l = m.label();
                cols.push(l.clone());
                cols.push(if m.model == Model::Simulation { format!("{l}_ci95") } else { format!("{l}_err") });
            }
            cols.push("error".into());
        }
        Kind::Throughput => {
            cols.push("B".into());
            for m in &exp.models {
                for pol in exp.policies_for(m.scheme) {
                    cols.push(format!("{}_{}", m.label(), pol.as_str()));
                }
            }
            for s in &exp.solvers {
                for pol in exp.policies_for(s.scheme) {
                    let l = format!("{}_{}", s.label(), pol.as_str());
                    cols.push(format!("{l}_r_star"));
                    cols.push(format!("{l}_t_star"));
                }
            }
            cols.push("error".into());
        }
    }
    if opts.timing {
        cols.push("runtime_ms".into());
    }
    cols
}

// Draws of A_max do not depend on P or R, so points that differ only in those share samples.
fn sample_key(cfg: &SystemConfig, scheme: Scheme) -> String {
    let mut c = cfg.clone();
    c.p_dbm = 0.0;
    format!("{}|{}", scheme, serde_json::to_string(&c).expect("config serializes"))
}

type SampleCache = HashMap<String, Result<Arc<Vec<f64>>, String>>;

fn simulate(exp: &Experiment, points: &[Point]) -> Result<SampleCache, CliError> {
    let mut cache = SampleCache::new();
    for m in exp.models.iter().filter(|m| m.model == Model::Simulation) {
        for p in points {
            let key = sample_key(&p.cfg, m.scheme);
            if cache.contains_key(&key) {
                continue;
            }
            let res = jakes_correlation(p.cfg.n, p.cfg.w)
                .and_then(|corr| sample_amax(&p.cfg, &corr, m.scheme, exp.trials, exp.seed))
                .map(Arc::new)
                .map_err(|e| e.to_string());
            cache.insert(key, res);
        }
    }
    Ok(cache)
}

fn structure(p: &Point) -> fasris::error::Result<BlockStructure> {
    approximate(&jakes_correlation(p.cfg.n, p.cfg.w)?, p.cfg.lambda_th, p.cfg.mu_b_sq)
}

/// Outage of one model at data rate `r` under `tau` pilot slots; returns `(p, aux)`
/// where `aux` is the simulation CI or the numeric error bound.
fn outage_at(
    exp: &Experiment,
    p: &Point,
    st: &BlockStructure,
    samples: &SampleCache,
    scheme: Scheme,
    model: Model,
    r: f64,
    tau: u64,
) -> Result<(f64, f64), String> {
    let mut q = OutageQuery::new(p.cfg.clone(), st.clone(), r, scheme, model);
    q.overhead_slots = tau;
    q.total_slots = DEFAULT_TOTAL_SLOTS;
    match model {
        Model::Simulation => {
            let s = samples
                .get(&sample_key(&p.cfg, scheme))
                .expect("samples drawn for every simulated point")
                .clone()?;
            let g = q.gamma_th().map_err(|e| e.to_string())?;
            let res = outage_from_samples(&s, g, scheme, fasris::channel::CorrKind::ExactToeplitz);
            Ok((res.p_hat, res.half_width_95))
        }
        _ => evaluate(&q, &exp.eval_options())
            .map(|e| (e.p, e.numeric_error))
            .map_err(|e| e.to_string()),
    }
}

fn outage_cells(exp: &Experiment, p: &Point, samples: &SampleCache, row: &mut Row, errors: &mut Vec<String>) {
    let st = match structure(p) {
        Ok(st) => st,
        Err(e) => {
            errors.push(format!("block fit: {e}"));
            return;
        }
    };
    row.insert("B".into(), Value::from(st.b));
    for m in &exp.models {
        let l = m.label();
        let aux = if m.model == Model::Simulation { format!("{l}_ci95") } else { format!("{l}_err") };
        match outage_at(exp, p, &st, samples, m.scheme, m.model, p.r, 0) {
            Ok((v, a)) => {
                row.insert(l, num(v));
                row.insert(aux, num(a));
            }
            Err(e) => errors.push(format!("{l}: {e}")),
        }
    }
}

fn throughput_cells(exp: &Experiment, p: &Point, samples: &SampleCache, row: &mut Row, errors: &mut Vec<String>) {
    let st = match structure(p) {
        Ok(st) => st,
        Err(e) => {
            errors.push(format!("block fit: {e}"));
            return;
        }
    };
    row.insert("B".into(), Value::from(st.b));
    for m in &exp.models {
        for pol in exp.policies_for(m.scheme) {
            let l = format!("{}_{}", m.label(), pol.as_str());
            let tau = pol.slots(p.cfg.n, p.cfg.m);
            match outage_at(exp, p, &st, samples, m.scheme, m.model, p.r, tau) {
                Ok((v, _)) => {
                    row.insert(l, num(p.r * (1.0 - v)));
                }
                Err(e) => errors.push(format!("{l}: {e}")),
            }
        }
    }
    for s in &exp.solvers {
        let sol = solve(exp, &p.cfg, st.b, s.scheme, s.solver);
        for pol in exp.policies_for(s.scheme) {
            let l = format!("{}_{}", s.label(), pol.as_str());
            let scaled = sol
                .as_ref()
                .map_err(|e| e.to_string())
                .and_then(|sol| with_overhead(sol, pol.slots(p.cfg.n, p.cfg.m), DEFAULT_TOTAL_SLOTS).map_err(|e| e.to_string()));
            match scaled {
                Ok(sol) => {
                    row.insert(format!("{l}_r_star"), num(sol.r_star));
                    row.insert(format!("{l}_t_star"), num(sol.t_star));
                }
                Err(e) => errors.push(format!("{l}: {e}")),
            }
        }
    }
}

fn solve(
    exp: &Experiment,
    cfg: &SystemConfig,
    b: usize,
    scheme: Scheme,
    solver: Solver,
) -> fasris::error::Result<ThroughputSolution> {
    let bounds = exp.bounds();
    let opts = exp.ascent_options();
    match scheme {
        Scheme::CsiBased => {
            let obj = CsiBasedObjective::new(cfg, b)?;
            match solver {
                Solver::Gda => gda_csi_based(&bounds, &obj, &opts),
                Solver::Bsm => bsm_csi_based(&bounds, &obj),
                _ => exhaustive(&bounds, |r| obj.tbar(r), exp.grid_points),
            }
        }
        Scheme::CsiFree => {
            let obj = CsiFreeObjective::from_config(cfg, b)?;
            match solver {
                Solver::Pgda => pgda_csi_free(&bounds, &obj, &opts),
                Solver::ClosedForm => closed_form_csi_free(&bounds, &obj),
                _ => exhaustive(&bounds, |r| obj.tcheck(r), exp.grid_points),
            }
        }
    }
}

/// Histogram of one port's envelope against its analytic density: `A_k` with
/// the Normal law for the CSI-based scheme, `|A_k|²` with the Exponential law
/// for the CSI-free scheme.
fn pdf_rows(exp: &Experiment, points: &[Point], opts: &RunOptions) -> Result<Vec<Row>, CliError> {
    let mut rows = Vec::new();
    for p in points {
        let corr = jakes_correlation(p.cfg.n, p.cfg.w).map_err(numeric)?;
        let sampler = PortSampler::new(&p.cfg, &corr).map_err(numeric)?;
        for m in &exp.models {
            let start = Instant::now();
            let all = sample_port_envelopes(&sampler, m.scheme, exp.trials, exp.seed);
            let port: Vec<f64> = all.iter().skip(exp.port).step_by(p.cfg.n).copied().collect();
            let (quantity, values, theory): (&str, Vec<f64>, Box<dyn Fn(f64) -> f64>) = match m.scheme {
                Scheme::CsiBased => {
                    let mom = CsiBasedMoments::from_config(&p.cfg).map_err(numeric)?;
                    let sd = mom.sigma_bar_sq.sqrt();
                    ("A_k", port, Box::new(move |x| norm_pdf((x - mom.mu_bar) / sd) / sd))
                }
                Scheme::CsiFree => {
                    let lam = CsiFreeMoments::from_config(&p.cfg).map_err(numeric)?.lambda_a;
                    let sq = port.iter().map(|a| a * a).collect();
                    ("|A_k|^2", sq, Box::new(move |x| if x < 0.0 { 0.0 } else { lam * (-lam * x).exp() }))
                }
            };
            let pdf = empirical_pdf(&values, exp.bins).map_err(|e| CliError::Config(e.to_string()))?;
            let elapsed = start.elapsed().as_secs_f64() * 1e3;
            for (c, d) in pdf.centers().into_iter().zip(&pdf.densities) {
                let mut row = sweep_row(exp, p);
                row.insert("scheme".into(), Value::String(m.scheme.to_string()));
                row.insert("quantity".into(), Value::String(quantity.into()));
                row.insert("bin_center".into(), num(c));
                row.insert("density".into(), num(*d));
                row.insert("theory".into(), num(theory(c)));
                if opts.timing {
                    row.insert("runtime_ms".into(), num(elapsed));
                }
                rows.push(row);
            }
        }
    }
    Ok(rows)
}

fn numeric(e: fasris::error::Error) -> CliError {
    CliError::Numeric(e.to_string())
}

/// Every policy name accepted in `overheads`.
pub fn overhead_names() -> [&'static str; 3] {
    [OverheadPolicy::None, OverheadPolicy::FasOnly, OverheadPolicy::OnOffRis].map(|p| p.as_str())
}
