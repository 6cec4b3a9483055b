//! Aggregation and output files for a suite run.
//!
//! Four files land in the output directory:
//!
//! * `report.json` — machine-readable results. Contains **no timing or
//!   timestamps**, so two runs with identical behavior produce
//!   byte-identical files (map keys sorted, scenarios in run order, rates
//!   rounded to fixed precision).
//! * `timing.json` — wall time, start time, and per-call latencies; the
//!   nondeterministic measurements live here, out of `report.json`'s way.
//! * `transcript.jsonl` — one line per call with both sides' full answers.
//! * `report.txt` — the human summary.

use super::runner::{ScenarioOutcome, SuiteRun};
use super::HarnessError;
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Per-1K-token prices for a set of models, loaded from a JSON file shaped
/// `{"models": {"<name>": {"input_per_1k": 0.25, "output_per_1k": 1.25}}}`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PriceTable {
    #[serde(default)]
    pub models: BTreeMap<String, ModelPrice>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ModelPrice {
    pub input_per_1k: f64,
    pub output_per_1k: f64,
}

impl PriceTable {
    pub fn load(path: impl AsRef<Path>) -> Result<PriceTable, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| HarnessError::Parse(e.to_string()))
    }

    pub fn price_for(&self, model: &str) -> Option<ModelPrice> {
        self.models.get(model).copied()
    }
}

fn round4(x: f64) -> f64 {
    (x * 10_000.0).round() / 10_000.0
}

fn round6(x: f64) -> f64 {
    (x * 1_000_000.0).round() / 1_000_000.0
}

/// Pass counts for one slice of the scenarios.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Rates {
    pub scenarios: usize,
    pub status_pass: usize,
    pub body_pass: usize,
    pub status_fidelity: f64,
    pub body_fidelity: f64,
}

impl Rates {
    fn tally<'a>(outcomes: impl Iterator<Item = &'a ScenarioOutcome>) -> Rates {
        let mut rates = Rates::default();
        for outcome in outcomes {
            rates.scenarios += 1;
            rates.status_pass += outcome.status_pass as usize;
            rates.body_pass += outcome.body_pass as usize;
        }
        if rates.scenarios > 0 {
            rates.status_fidelity = round4(rates.status_pass as f64 / rates.scenarios as f64);
            rates.body_fidelity = round4(rates.body_pass as f64 / rates.scenarios as f64);
        }
        rates
    }
}

/// The deterministic report: everything except timing.
#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub totals: Rates,
    /// Scenarios that could not be evaluated (network failures); they are
    /// excluded from every rate above.
    pub infra_excluded: Vec<String>,
    pub by_category: BTreeMap<String, Rates>,
    pub by_novelty: BTreeMap<String, Rates>,
    pub scenarios: Vec<ScenarioReport>,
    pub usage: Usage,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioReport {
    pub name: String,
    pub category: String,
    pub novelty: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub infra: Option<String>,
    pub status_pass: bool,
    pub body_pass: bool,
    pub calls: Vec<CallReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CallReport {
    pub method: String,
    pub live_path: String,
    pub sim_path: String,
    pub live_status: u16,
    pub sim_status: u16,
    pub status_match: bool,
    pub shape_match: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Usage {
    pub input_tokens: u64,
    pub output_tokens: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimated_cost_usd: Option<f64>,
}

impl SuiteReport {
    /// Builds the deterministic report from a run. Infra-failed scenarios
    /// are listed but excluded from all denominators.
    pub fn from_run(run: &SuiteRun, prices: Option<&PriceTable>) -> SuiteReport {
        let scored: Vec<&ScenarioOutcome> =
            run.outcomes.iter().filter(|o| o.infra.is_none()).collect();

        let slice_by = |label: fn(&ScenarioOutcome) -> &'static str| -> BTreeMap<String, Rates> {
            let mut slices: BTreeMap<String, Rates> = BTreeMap::new();
            for outcome in &scored {
                let rates = slices.entry(label(outcome).to_string()).or_default();
                rates.scenarios += 1;
                rates.status_pass += outcome.status_pass as usize;
                rates.body_pass += outcome.body_pass as usize;
            }
            for rates in slices.values_mut() {
                rates.status_fidelity = round4(rates.status_pass as f64 / rates.scenarios as f64);
                rates.body_fidelity = round4(rates.body_pass as f64 / rates.scenarios as f64);
            }
            slices
        };
        let by_category = slice_by(|o| o.category.label());
        let by_novelty = slice_by(|o| o.novelty.label());

        let estimated_cost_usd = run.model.as_deref().and_then(|model| {
            let price = prices?.price_for(model)?;
            Some(round6(
                run.input_tokens as f64 / 1_000.0 * price.input_per_1k
                    + run.output_tokens as f64 / 1_000.0 * price.output_per_1k,
            ))
        });

        SuiteReport {
            suite: run.suite.clone(),
            totals: Rates::tally(scored.iter().copied()),
            infra_excluded: run
                .outcomes
                .iter()
                .filter_map(|o| o.infra.as_ref().map(|_| o.name.clone()))
                .collect(),
            by_category,
            by_novelty,
            scenarios: run
                .outcomes
                .iter()
                .map(|o| ScenarioReport {
                    name: o.name.clone(),
                    category: o.category.label().to_string(),
                    novelty: o.novelty.label().to_string(),
                    infra: o.infra.clone(),
                    status_pass: o.status_pass,
                    body_pass: o.body_pass,
                    calls: o
                        .calls
                        .iter()
                        .map(|c| CallReport {
                            method: c.method.clone(),
                            live_path: c.live.path.clone(),
                            sim_path: c.sim.path.clone(),
                            live_status: c.live.status,
                            sim_status: c.sim.status,
                            status_match: c.status_match,
                            shape_match: c.shape_match,
                        })
                        .collect(),
                })
                .collect(),
            usage: Usage {
                input_tokens: run.input_tokens,
                output_tokens: run.output_tokens,
                model: run.model.clone(),
                estimated_cost_usd,
            },
        }
    }

    /// The human summary written to `report.txt`.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let t = &self.totals;
        out.push_str(&format!(
            "suite {}: {} scenarios scored",
            self.suite, t.scenarios
        ));
        if !self.infra_excluded.is_empty() {
            out.push_str(&format!(
                " ({} excluded for infrastructure failures: {})",
                self.infra_excluded.len(),
                self.infra_excluded.join(", ")
            ));
        }
        out.push('\n');
        out.push_str(&format!(
            "status fidelity:     {}/{} ({:.1}%)\n",
            t.status_pass,
            t.scenarios,
            t.status_fidelity * 100.0
        ));
        out.push_str(&format!(
            "body-shape fidelity: {}/{} ({:.1}%)\n",
            t.body_pass,
            t.scenarios,
            t.body_fidelity * 100.0
        ));

        for (title, slice) in [
            ("by category", &self.by_category),
            ("by novelty", &self.by_novelty),
        ] {
            out.push_str(&format!("\n{title}:\n"));
            for (label, rates) in slice {
                out.push_str(&format!(
                    "  {label:<20} {}/{} status   {}/{} body\n",
                    rates.status_pass, rates.scenarios, rates.body_pass, rates.scenarios
                ));
            }
        }

        let failures: Vec<&ScenarioReport> = self
            .scenarios
            .iter()
            .filter(|s| s.infra.is_none() && !(s.status_pass && s.body_pass))
            .collect();
        if !failures.is_empty() {
            out.push_str("\nfailures:\n");
            for scenario in failures {
                let first_bad = scenario
                    .calls
                    .iter()
                    .position(|c| !c.status_match || !c.shape_match);
                match first_bad {
                    Some(i) => {
                        let call = &scenario.calls[i];
                        let what = if !call.status_match {
                            format!("live {} vs sim {}", call.live_status, call.sim_status)
                        } else {
                            "body shapes diverge".to_string()
                        };
                        out.push_str(&format!(
                            "  {}: call {} {} {} — {}\n",
                            scenario.name, i, call.method, call.live_path, what
                        ));
                    }
                    None => out.push_str(&format!("  {}\n", scenario.name)),
                }
            }
        }
        if self.usage.input_tokens > 0 || self.usage.output_tokens > 0 {
            out.push_str(&format!(
                "\ntokens: {} in / {} out",
                self.usage.input_tokens, self.usage.output_tokens
            ));
            if let Some(cost) = self.usage.estimated_cost_usd {
                out.push_str(&format!(" (~${cost})"));
            }
            out.push('\n');
        }
        out
    }
}

/// Where [`write_reports`] put everything.
#[derive(Debug, Clone)]
pub struct ReportPaths {
    pub report_json: PathBuf,
    pub report_txt: PathBuf,
    pub timing_json: PathBuf,
    pub transcript_jsonl: PathBuf,
}

/// Writes all four output files for a run.
pub fn write_reports(
    run: &SuiteRun,
    prices: Option<&PriceTable>,
    out_dir: impl AsRef<Path>,
) -> Result<(ReportPaths, SuiteReport), HarnessError> {
    let out_dir = out_dir.as_ref();
    let io_err = |source: std::io::Error| HarnessError::Io {
        path: out_dir.display().to_string(),
        source,
    };
    std::fs::create_dir_all(out_dir).map_err(io_err)?;
    let report = SuiteReport::from_run(run, prices);
    let paths = ReportPaths {
        report_json: out_dir.join("report.json"),
        report_txt: out_dir.join("report.txt"),
        timing_json: out_dir.join("timing.json"),
        transcript_jsonl: out_dir.join("transcript.jsonl"),
    };

    let mut json_text = serde_json::to_string_pretty(&report).expect("report serializes");
    json_text.push('\n');
    std::fs::write(&paths.report_json, json_text).map_err(io_err)?;
    std::fs::write(&paths.report_txt, report.render_text()).map_err(io_err)?;

    let timing = json!({
        "started_epoch_s": run.started_epoch_s,
        "wall_ms": run.wall_ms,
        "calls": run
            .outcomes
            .iter()
            .flat_map(|o| {
                o.calls.iter().enumerate().filter_map(|(i, c)| {
                    c.sim.latency_ms.map(|ms| {
                        json!({"scenario": o.name, "call": i, "sim_latency_ms": ms})
                    })
                })
            })
            .collect::<Vec<_>>(),
    });
    let mut timing_text = serde_json::to_string_pretty(&timing).expect("timing serializes");
    timing_text.push('\n');
    std::fs::write(&paths.timing_json, timing_text).map_err(io_err)?;

    let mut transcript = std::fs::File::create(&paths.transcript_jsonl).map_err(io_err)?;
    for outcome in &run.outcomes {
        for control in &outcome.controls {
            let line = json!({
                "scenario": outcome.name,
                "control": {"side": control.side, "path": control.path, "status": control.status},
            });
            writeln!(transcript, "{line}").map_err(io_err)?;
        }
        if let Some(reason) = &outcome.infra {
            let line = json!({"scenario": outcome.name, "infra": reason});
            writeln!(transcript, "{line}").map_err(io_err)?;
            continue;
        }
        for (i, call) in outcome.calls.iter().enumerate() {
            let line = json!({
                "scenario": outcome.name,
                "call": i,
                "method": call.method,
                "live": {"path": call.live.path, "status": call.live.status, "body": call.live.body},
                "sim": {"path": call.sim.path, "status": call.sim.status, "body": call.sim.body},
            });
            writeln!(transcript, "{line}").map_err(io_err)?;
        }
    }

    Ok((paths, report))
}
