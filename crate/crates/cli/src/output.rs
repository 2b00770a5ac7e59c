//! Result files. Everything written here depends only on the results, never
//! on thread scheduling, so reruns are byte-identical.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use betasmc::selection::SelectionResult;
use betasmc::stats;

use crate::config::{ExperimentConfig, FilterKindConfig, RuleConfig};
use crate::experiment::ExperimentResult;
use crate::io::write_text;
use crate::CliError;

fn num(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        v.to_string()
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, CliError> {
    let f = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::Writer::from_writer(f))
}

fn write_row<W: std::io::Write, I, S>(w: &mut csv::Writer<W>, row: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = S>,
    S: AsRef<[u8]>,
{
    w.write_record(row).map_err(|e| CliError::Runtime(e.to_string()))
}

pub fn prepare_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn kind_name(k: FilterKindConfig) -> &'static str {
    match k {
        FilterKindConfig::Kalman => "kalman",
        FilterKindConfig::Bpf => "bpf",
        FilterKindConfig::Apf => "apf",
    }
}

fn rule_name(r: RuleConfig) -> &'static str {
    match r {
        RuleConfig::Standard => "standard",
        RuleConfig::Beta => "beta",
    }
}

/// One row per scored state coordinate (`x_j`), one per observation
/// coordinate (`y_j`) and an aggregate `mean` row per run.
pub fn write_metrics_csv(path: &Path, res: &ExperimentResult) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    write_row(
        &mut w,
        [
            "experiment", "filter", "rule", "beta", "run_id", "seed", "dim", "nmse", "coverage", "medae", "min_ess",
            "mean_ess", "status",
        ],
    )?;
    for rec in &res.records {
        let plan = &res.plans[rec.filter];
        let head = [
            res.experiment.name().to_string(),
            plan.label.clone(),
            rule_name(plan.config.rule).to_string(),
            plan.config.beta.map(num).unwrap_or_default(),
            rec.run_id.to_string(),
            rec.seed.to_string(),
        ];
        let mut row = |dim: String, vals: [String; 5], status: &str| {
            let mut r: Vec<String> = head.to_vec();
            r.push(dim);
            r.extend(vals);
            r.push(status.to_string());
            write_row(&mut w, r)
        };
        match &rec.outcome {
            Ok(run) => {
                let m = &run.metrics;
                for (j, &d) in res.scenario.eval_dims.iter().enumerate() {
                    row(
                        format!("x_{}", d + 1),
                        [num(m.nmse_per_dim[j]), num(m.coverage_per_dim[j]), String::new(), String::new(), String::new()],
                        "ok",
                    )?;
                }
                for (j, v) in m.medae_per_obs_dim.iter().enumerate() {
                    row(format!("y_{}", j + 1), [String::new(), String::new(), num(*v), String::new(), String::new()], "ok")?;
                }
                row(
                    "mean".into(),
                    [num(m.nmse), num(m.coverage), num(m.medae), num(m.min_ess), num(m.mean_ess)],
                    "ok",
                )?;
            }
            Err(msg) => {
                row("mean".into(), Default::default(), &format!("failed: {msg}"))?;
            }
        }
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn describe(values: &[f64]) -> Value {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return json!({ "median": null, "iqr": null, "mean": null, "n": 0 });
    }
    json!({
        "median": stats::median(&finite),
        "iqr": stats::iqr(&finite),
        "mean": stats::mean(&finite),
        "n": finite.len(),
    })
}

pub fn summary_json(res: &ExperimentResult) -> Value {
    let filters: Vec<Value> = res
        .plans
        .iter()
        .enumerate()
        .map(|(i, plan)| {
            let ms = res.metrics_of(i);
            let pick = |f: fn(&betasmc::metrics::RunMetrics) -> f64| ms.iter().map(|m| f(m)).collect::<Vec<_>>();
            json!({
                "filter": plan.label,
                "kind": kind_name(plan.config.kind),
                "rule": rule_name(plan.config.rule),
                "beta": plan.config.beta,
                "particles": if plan.config.kind == FilterKindConfig::Kalman { None } else { Some(plan.config.particles) },
                "completed": ms.len(),
                "failed": res.runs - ms.len(),
                "nmse": describe(&pick(|m| m.nmse)),
                "coverage": describe(&pick(|m| m.coverage)),
                "medae": describe(&pick(|m| m.medae)),
                "mean_ess": describe(&pick(|m| m.mean_ess)),
            })
        })
        .collect();
    json!({
        "experiment": res.experiment.name(),
        "base_seed": res.base_seed,
        "runs": res.runs,
        "steps": res.scenario.steps,
        "eval_dims": res.scenario.eval_dims.iter().map(|d| d + 1).collect::<Vec<_>>(),
        "filters": filters,
    })
}

pub fn write_ess_csv(path: &Path, res: &ExperimentResult) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    write_row(&mut w, ["filter", "run_id", "t", "ess"])?;
    for rec in &res.records {
        if let Ok(run) = &rec.outcome {
            for (t, e) in run.ess.iter().enumerate() {
                write_row(
                    &mut w,
                    [res.plans[rec.filter].label.clone(), rec.run_id.to_string(), (t + 1).to_string(), num(*e)],
                )?;
            }
        }
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_summaries_csv(path: &Path, res: &ExperimentResult) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    write_row(&mut w, ["filter", "run_id", "t", "dim", "mean", "lower", "upper", "truth"])?;
    for rec in &res.records {
        let Ok(run) = &rec.outcome else { continue };
        let s = &run.summary;
        for t in 0..s.means.nrows() {
            for (j, d) in res.scenario.eval_dims.iter().enumerate() {
                let truth = res.scenario.truth.as_ref().map_or(f64::NAN, |m| m[(t, j)]);
                write_row(
                    &mut w,
                    [
                        res.plans[rec.filter].label.clone(),
                        rec.run_id.to_string(),
                        (t + 1).to_string(),
                        format!("x_{}", d + 1),
                        num(s.means[(t, j)]),
                        num(s.lower[(t, j)]),
                        num(s.upper[(t, j)]),
                        num(truth),
                    ],
                )?;
            }
        }
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Write all experiment outputs into `dir`; returns the files written.
pub fn write_experiment(dir: &Path, cfg: &ExperimentConfig, res: &ExperimentResult) -> Result<Vec<PathBuf>, CliError> {
    prepare_dir(dir)?;
    let mut files = vec![dir.join("metrics.csv"), dir.join("summary.json"), dir.join("ess.csv")];
    write_metrics_csv(&files[0], res)?;
    let text = serde_json::to_string_pretty(&summary_json(res)).map_err(|e| CliError::Runtime(e.to_string()))?;
    write_text(&files[1], &(text + "\n"))?;
    write_ess_csv(&files[2], res)?;
    if cfg.write_summaries {
        let p = dir.join("summaries.csv");
        write_summaries_csv(&p, res)?;
        files.push(p);
    }
    Ok(files)
}

pub fn write_selection(dir: &Path, cfg: &ExperimentConfig, sel: &SelectionResult) -> Result<Vec<PathBuf>, CliError> {
    prepare_dir(dir)?;
    let scores = dir.join("scores.csv");
    let mut w = csv_writer(&scores)?;
    write_row(&mut w, ["beta", "run_id", "score", "failure"])?;
    for s in &sel.scores {
        let score = if s.score.is_infinite() { "inf".to_string() } else { num(s.score) };
        write_row(
            &mut w,
            [num(s.beta), s.run_id.to_string(), score, s.failure.clone().unwrap_or_default()],
        )?;
    }
    w.flush().map_err(|e| CliError::io(&scores, e))?;

    let summary = dir.join("selection.json");
    let v = json!({
        "experiment": cfg.experiment.name(),
        "base_seed": cfg.base_seed,
        "selected_beta": sel.selected_beta,
        "mode_count": sel.mode_count,
        "tuning_runs": sel.per_run.len(),
        "grid": sel.grid,
        "per_run_argmin": sel.per_run,
    });
    let text = serde_json::to_string_pretty(&v).map_err(|e| CliError::Runtime(e.to_string()))?;
    write_text(&summary, &(text + "\n"))?;
    Ok(vec![scores, summary])
}
