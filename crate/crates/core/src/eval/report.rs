//! Report directories.
//!
//! Every run writes `report.json` (resolved config, seeds, corpus summary
//! and results; no timestamps) plus CSV tables that depend on the
//! experiment. Floats are written with shortest round-trip formatting.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde_json::{json, Value};

use super::comparison::{run_baselines, DetectorResult};
use super::experiment::{
    latency_rows, load_corpus, run_main_experiment, run_robustness_study, run_sensitivity_grid, run_windowed_driver,
    MainOutcome,
};
use crate::config::{Experiment, RunConfig};
use crate::corpus::corpus_stats;
use crate::error::{Error, Result};
use crate::joint::{write_model, IdTables};
use crate::scoring::{write_scores, ScoreRow, ScoredBehavior};

/// The in-memory contents of a report directory.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub report: Value,
    /// File name to contents.
    pub files: BTreeMap<String, Vec<u8>>,
    /// Short human-readable result lines.
    pub summary: Vec<String>,
}

impl Artifacts {
    /// Writes `report.json` and every file into `dir`, creating it.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut json = serde_json::to_string_pretty(&self.report)?;
        json.push('\n');
        std::fs::write(dir.join("report.json"), json)?;
        for (name, bytes) in &self.files {
            std::fs::write(dir.join(name), bytes)?;
        }
        Ok(())
    }
}

fn curve_csv(header: &str, points: &[(f64, f64)]) -> Vec<u8> {
    let mut s = format!("{header}\n");
    for (x, y) in points {
        let _ = writeln!(s, "{x},{y}");
    }
    s.into_bytes()
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| v.to_string())
}

fn fpr_cell(map: &BTreeMap<String, f64>, level: &str) -> String {
    map.get(level).map_or_else(String::new, f64::to_string)
}

/// Config as recorded in reports: everything except the output directory.
pub fn recorded_config(config: &RunConfig) -> Result<Value> {
    let mut v = serde_json::to_value(config)?;
    if let Value::Object(m) = &mut v {
        m.remove("output");
    }
    Ok(v)
}

fn main_files(out: &MainOutcome, files: &mut BTreeMap<String, Vec<u8>>) -> Result<()> {
    let r = &out.report;
    files.insert("roc.csv".into(), curve_csv("fpr,tpr", &r.roc));
    files.insert("pr.csv".into(), curve_csv("recall,precision", &r.pr));
    let mut cost = String::from("threshold,new_normals,new_anomalies,cost\n");
    for p in &r.cost {
        let _ = writeln!(cost, "{},{},{},{}", p.threshold, p.new_normals, p.new_anomalies, p.cost);
    }
    files.insert("cost.csv".into(), cost.into_bytes());
    let corpus = &out.prepared.corpus;
    let rows: Vec<ScoreRow> = out.scored.iter().cloned().map(ScoreRow::Scored).collect();
    let mut scores = Vec::new();
    write_scores(&mut scores, corpus.users(), &rows, None)?;
    files.insert("scores.tsv".into(), scores);
    let mut model = Vec::new();
    write_model(&out.fitted.model, &IdTables::of(corpus), &mut model)?;
    files.insert("model.cbm".into(), model);
    Ok(())
}

fn main_summary(out: &MainOutcome) -> Vec<String> {
    let r = &out.report;
    vec![
        format!("AUC              {:.4}", r.auc),
        format!("TPR @ FPR<=1%    {:.4}", r.tpr_at_fpr.get("0.01").copied().unwrap_or(f64::NAN)),
        format!(
            "threshold        {}{}",
            r.threshold,
            if r.threshold_qualified { "" } else { " (no step had cost < 1)" }
        ),
        format!("test behaviors   {} ({} anomalous)", r.test_behaviors, r.anomalies),
    ]
}

fn detector_file(d: &DetectorResult, corpus: &crate::corpus::Corpus) -> Result<Vec<u8>> {
    let rows: Vec<ScoreRow> = d
        .scores
        .iter()
        .map(|s| match (s.score, &s.failure) {
            (Some(score), _) => ScoreRow::Scored(ScoredBehavior {
                index: s.index,
                user: s.user,
                s_l: score,
                s_r: f64::NAN,
                log_odds: f64::NAN,
                label: s.label,
                empty_words: corpus.behavior(s.index).words.is_empty(),
            }),
            (None, reason) => ScoreRow::Failed {
                index: s.index,
                user: corpus.users().name(s.user).to_owned(),
                reason: reason.clone().unwrap_or_default().replace(['\t', '\n'], " "),
            },
        })
        .collect();
    let mut buf = Vec::new();
    write_scores(&mut buf, corpus.users(), &rows, Some(&d.detector))?;
    Ok(buf)
}

/// Runs the configured experiment and gathers its report.
pub fn run_experiment(config: &RunConfig) -> Result<Artifacts> {
    config.validate()?;
    let corpus = load_corpus(config)?;
    let stats = corpus_stats(&corpus);
    let mut files = BTreeMap::new();
    let mut summary = Vec::new();
    let results: Value = match config.experiment {
        Experiment::Main => {
            let out = run_main_experiment(&corpus, config)?;
            main_files(&out, &mut files)?;
            summary.extend(main_summary(&out));
            json!({ "main": out.report, "injected": out.fitted.injected })
        }
        Experiment::Grid => {
            let cells = run_sensitivity_grid(&corpus, config, &config.grid_c, &config.grid_z)?;
            let mut csv = String::from("c,z,auc\n");
            for c in &cells {
                let _ = writeln!(csv, "{},{},{}", c.communities, c.topics, c.auc);
                summary.push(format!("C={:<3} Z={:<3} AUC {:.4}", c.communities, c.topics, c.auc));
            }
            files.insert("grid.csv".into(), csv.into_bytes());
            json!({ "grid": cells })
        }
        Experiment::Latency => {
            let out = run_main_experiment(&corpus, config)?;
            let rows = latency_rows(&corpus, &out, config, &config.latency_k)?;
            main_files(&out, &mut files)?;
            let mut csv = String::from("k,blocks,positives,excluded_users,auc,tpr_at_fpr_0.001,tpr_at_fpr_0.01\n");
            for r in &rows {
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{},{},{}",
                    r.k,
                    r.blocks,
                    r.positives,
                    r.excluded_users,
                    opt(r.auc),
                    fpr_cell(&r.tpr_at_fpr, "0.001"),
                    fpr_cell(&r.tpr_at_fpr, "0.01")
                );
                summary.push(format!(
                    "k={:<2} AUC {}  TPR@FPR<=1% {}",
                    r.k,
                    r.auc.map_or("n/a".into(), |a| format!("{a:.4}")),
                    r.tpr_at_fpr.get("0.01").map_or("n/a".into(), |t| format!("{t:.4}"))
                ));
            }
            files.insert("latency.csv".into(), csv.into_bytes());
            json!({ "main": out.report, "latency": rows })
        }
        Experiment::Robustness => {
            let rows = run_robustness_study(&corpus, config)?;
            let mut csv = String::from("mode,anomalies,auc,tpr_at_fpr_0.001,tpr_at_fpr_0.01\n");
            for r in &rows {
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{}",
                    r.mode,
                    r.anomalies,
                    r.auc,
                    fpr_cell(&r.tpr_at_fpr, "0.001"),
                    fpr_cell(&r.tpr_at_fpr, "0.01")
                );
                summary.push(format!("{:<6} AUC {:.4}", r.mode.to_string(), r.auc));
            }
            files.insert("robustness.csv".into(), csv.into_bytes());
            json!({ "robustness": rows })
        }
        Experiment::Windowed => {
            let rows = run_windowed_driver(&corpus, config, config.window_size, config.window_step)?;
            let mut csv = String::from(
                "window,train_size,chunk_first_timestamp,chunk_last_timestamp,chunk_size,anomalies,auc,static_auc,threshold,admitted\n",
            );
            for r in &rows {
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{},{},{},{},{},{}",
                    r.window,
                    r.train_size,
                    r.chunk_first_timestamp,
                    r.chunk_last_timestamp,
                    r.chunk_size,
                    r.anomalies,
                    opt(r.auc),
                    opt(r.static_auc),
                    r.threshold,
                    r.admitted
                );
            }
            summary.push(format!("{} windows", rows.len()));
            files.insert("windows.csv".into(), csv.into_bytes());
            json!({ "windows": rows })
        }
        Experiment::Baselines => {
            let out = run_baselines(&corpus, config)?;
            main_files(&out.main, &mut files)?;
            let corpus = &out.main.prepared.corpus;
            let mut csv = String::from("detector,auc,unscored\n");
            for d in &out.detectors {
                files.insert(format!("scores_{}.tsv", d.detector), detector_file(d, corpus)?);
                let _ = writeln!(csv, "{},{},{}", d.detector, d.auc, d.failures);
            }
            let _ = writeln!(csv, "fused,{},0", out.fused.auc);
            files.insert("baselines.csv".into(), csv.into_bytes());
            files.insert("fused_roc.csv".into(), curve_csv("fpr,tpr", &out.fused.frontier));
            for (name, auc) in out.auc_table() {
                summary.push(format!("{name:<6} AUC {auc:.4}"));
            }
            let table: BTreeMap<String, f64> = out.auc_table().into_iter().collect();
            json!({ "main": out.main.report, "auc": table })
        }
    };
    let report = json!({
        "experiment": config.experiment.name(),
        "config": recorded_config(config)?,
        "seeds": config.seeds().to_map(),
        "corpus": {
            "users": stats.users,
            "venues": stats.venues,
            "behaviors": stats.behaviors,
            "vocabulary": stats.vocabulary,
            "friend_pairs": stats.friend_pairs,
        },
        "results": results,
    });
    Ok(Artifacts { report, files, summary })
}

/// Reads the `results` of a report, for tests and tooling.
pub fn read_report(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(Error::from)
}
