use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::actors::OracleQuery;
use crate::agent::ScriptedPolicy;
use crate::domain::{DomainSpec, SessionSpec};
use crate::error::{Result, ScoopError};
use crate::knowledge::{derive_graph, map_hypothesis};
use crate::refinement::AgentConfig;
use crate::tasks::{
    gen_confounded, gen_epistemic_battery, score_battery_item, BatteryItem, BatteryProbe, BatteryResponse,
    TaskFamily, TaskFamilySpec,
};

use super::{
    oracle_charges, regret_vs_omniscient, run_confounded, run_session, save_trace, MetricsReport,
    ReasonerKind, RunConfig, SessionTrace,
};

/// A generated family or a domain file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FamilyEntry {
    Generated(TaskFamilySpec),
    File {
        domain: PathBuf,
        #[serde(default = "one")]
        instance_count: usize,
    },
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    pub agents: Vec<ScriptedPolicy>,
    pub families: Vec<FamilyEntry>,
    /// Explicit seeds; when empty, `0..seed_count`.
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub seed_count: u64,
    /// Where traces and the report go; relative paths resolve against the
    /// config file's directory.
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub agent_config: AgentConfig,
    #[serde(default)]
    pub reasoner: ReasonerKind,
    #[serde(default = "yes")]
    pub regret: bool,
}

fn default_out() -> PathBuf {
    PathBuf::from("runs")
}

fn yes() -> bool {
    true
}

impl SuiteConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(ScoopError::from_json)
    }

    pub fn seed_list(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            (0..self.seed_count).collect()
        } else {
            self.seeds.clone()
        }
    }
}

/// One grid cell of a suite run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub agent: String,
    pub family: String,
    pub seed: u64,
    pub metrics: MetricsReport,
    /// Sum of `cost_charged` over the oracle answers of the trace.
    pub oracle_charged: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disambiguating: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace_file: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteRow {
    pub agent: String,
    pub family: String,
    pub seeds: usize,
    pub metrics: MetricsReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disambiguation_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub rows: Vec<SuiteRow>,
    pub cells: Vec<CellSummary>,
    pub beta_total: f64,
}

impl SuiteReport {
    pub fn to_canonical_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

enum Family {
    Session(SessionSpec),
    Confounded(crate::tasks::ConfoundedTask),
    Battery(Vec<BatteryItem>),
}

impl Family {
    fn label(&self) -> String {
        match self {
            Family::Session(s) => family_label(&s.domain),
            Family::Confounded(_) => "confounded".into(),
            Family::Battery(_) => "epistemic_battery".into(),
        }
    }
}

/// Domain name without its seed tag, so rows group across seeds.
fn family_label(domain: &DomainSpec) -> String {
    match domain.name.rsplit_once("-s") {
        Some((head, tail)) if !tail.is_empty() && tail.chars().all(|c| c.is_ascii_digit()) => head.into(),
        _ => domain.name.clone(),
    }
}

fn resolve(entry: &FamilyEntry, seed: u64, base: &Path) -> Result<Family> {
    match entry {
        FamilyEntry::Generated(spec) => {
            let spec = TaskFamilySpec { seed, ..spec.clone() };
            match spec.family {
                TaskFamily::Confounded => Ok(Family::Confounded(gen_confounded(seed)?)),
                TaskFamily::EpistemicBattery => Ok(Family::Battery(gen_epistemic_battery(seed)?)),
                _ => Ok(Family::Session(spec.session()?)),
            }
        }
        FamilyEntry::File {
            domain,
            instance_count,
        } => {
            let path = base.join(domain);
            let domain = DomainSpec::load(&path)
                .map_err(|e| ScoopError::OutOfRange(format!("cannot load domain {}: {e}", path.display())))?;
            Ok(Family::Session(SessionSpec {
                shared_gamma: domain.gamma,
                domain,
                instance_count: *instance_count,
                seed,
            }))
        }
    }
}

/// What `policy` answers on a battery item.
pub fn battery_response(
    item: &BatteryItem,
    policy: ScriptedPolicy,
    config: &AgentConfig,
) -> Result<BatteryResponse> {
    match policy {
        ScriptedPolicy::Causal => item.causal_agent_response(config),
        _ => {
            let instance = item.instance()?;
            let posterior = item.posterior(&instance)?;
            match &item.probe {
                BatteryProbe::QuerySelection { .. } => {
                    let query = match policy {
                        ScriptedPolicy::Baseline => derive_graph(&posterior, &instance.model)
                            .unknown_edges()
                            .next()
                            .map(|(e, _)| OracleQuery::edge(e)),
                        _ => None,
                    };
                    Ok(BatteryResponse::Query(query))
                }
                BatteryProbe::Counterfactual { .. } => {
                    // the other agents reason from their single most likely rule set
                    let map = map_hypothesis(&posterior).to_string();
                    let pinned = BatteryItem {
                        fixed_posterior: Some([(map, 1.0)].into_iter().collect()),
                        ..item.clone()
                    };
                    pinned.causal_agent_response(config)
                }
            }
        }
    }
}

fn run_cell(
    agent: ScriptedPolicy,
    family: &Family,
    seed: u64,
    config: &SuiteConfig,
    out_dir: &Path,
) -> Result<CellSummary> {
    let run = RunConfig {
        agent,
        reasoner: config.reasoner,
        agent_config: config.agent_config.clone(),
        ..RunConfig::default()
    };
    let label = family.label();
    let write = |trace: &SessionTrace| -> Result<String> {
        let name = format!("{agent}__{label}__s{seed}.jsonl");
        save_trace(trace, &out_dir.join(&name))?;
        Ok(name)
    };
    match family {
        Family::Session(spec) => {
            let trace = run_session(spec, &run)?;
            let file = write(&trace)?;
            let regret = if config.regret {
                Some(regret_vs_omniscient(&trace, spec, &run)?)
            } else {
                None
            };
            Ok(CellSummary {
                agent: agent.to_string(),
                family: label,
                seed,
                metrics: MetricsReport::of_session(&trace, regret),
                oracle_charged: oracle_charges(&trace),
                disambiguating: None,
                trace_file: Some(file),
            })
        }
        Family::Confounded(task) => {
            let outcome = run_confounded(task, &run)?;
            let file = write(&outcome.trace)?;
            Ok(CellSummary {
                agent: agent.to_string(),
                family: label,
                seed,
                metrics: MetricsReport::of_session(&outcome.trace, None),
                oracle_charged: oracle_charges(&outcome.trace),
                disambiguating: Some(outcome.disambiguating),
                trace_file: Some(file),
            })
        }
        Family::Battery(items) => {
            let mut scores = Vec::with_capacity(items.len());
            for item in items {
                let response = battery_response(item, agent, &config.agent_config)?;
                scores.push(score_battery_item(item, &response)?);
            }
            let mut metrics = MetricsReport::of_session(&SessionTrace::new("", "", seed, 1.0), None);
            metrics.battery_scores = Some(scores);
            Ok(CellSummary {
                agent: agent.to_string(),
                family: label,
                seed,
                metrics,
                oracle_charged: 0.0,
                disambiguating: None,
                trace_file: None,
            })
        }
    }
}

/// Runs the agent × family × seed grid in parallel, writes one trace per
/// cell plus `report.json` into the output directory, and returns the
/// report. Cells and rows are sorted by (agent, family, seed).
pub fn run_suite(config: &SuiteConfig, base_dir: &Path) -> Result<SuiteReport> {
    let out_dir = base_dir.join(&config.out_dir);
    std::fs::create_dir_all(&out_dir)?;
    let seeds = config.seed_list();
    if config.agents.is_empty() || config.families.is_empty() || seeds.is_empty() {
        return Err(ScoopError::OutOfRange(
            "a suite needs at least one agent, family and seed".into(),
        ));
    }
    let mut families = Vec::new();
    for (fi, entry) in config.families.iter().enumerate() {
        for &seed in &seeds {
            families.push((fi, seed, resolve(entry, seed, base_dir)?));
        }
    }
    let grid: Vec<(ScriptedPolicy, usize)> = config
        .agents
        .iter()
        .flat_map(|a| (0..families.len()).map(move |i| (*a, i)))
        .collect();
    let results: Vec<Result<CellSummary>> = grid
        .par_iter()
        .map(|(agent, i)| {
            let (_, seed, family) = &families[*i];
            run_cell(*agent, family, *seed, config, &out_dir)
        })
        .collect();
    let mut cells = Vec::with_capacity(results.len());
    for r in results {
        cells.push(r?);
    }
    cells.sort_by(|a, b| (&a.agent, &a.family, a.seed).cmp(&(&b.agent, &b.family, b.seed)));

    let mut rows: Vec<SuiteRow> = Vec::new();
    let mut start = 0;
    while start < cells.len() {
        let key = (&cells[start].agent, &cells[start].family);
        let end = start
            + cells[start..]
                .iter()
                .take_while(|c| (&c.agent, &c.family) == key)
                .count();
        let group = &cells[start..end];
        let metrics: Vec<MetricsReport> = group.iter().map(|c| c.metrics.clone()).collect();
        let flags: Vec<bool> = group.iter().filter_map(|c| c.disambiguating).collect();
        rows.push(SuiteRow {
            agent: key.0.clone(),
            family: key.1.clone(),
            seeds: group.len(),
            metrics: MetricsReport::aggregate(&metrics),
            disambiguation_rate: (!flags.is_empty())
                .then(|| flags.iter().filter(|f| **f).count() as f64 / flags.len() as f64),
        });
        start = end;
    }
    let beta_total = rows.iter().map(|r| r.metrics.beta_total).sum();
    let report = SuiteReport {
        rows,
        cells,
        beta_total,
    };
    std::fs::write(out_dir.join("report.json"), report.to_canonical_json())?;
    Ok(report)
}
