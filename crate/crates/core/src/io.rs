//! File formats: scenario inputs (JSON + CSV) and result exports.
//!
//! Inputs are written with shortest round-trip float formatting so that
//! loading a saved scenario reproduces it exactly. Results are written with
//! nine significant digits.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::coordination::{Scenario, Scheme, SettlementOptions, SettlementReport};
use crate::error::{Error, Result};
use crate::model::{
    validate_network, AggregatorSpec, Branch, Bus, Direction, DsoConfig, EvSpec, Network, PriceSet, RegulationDemand,
    TimeGrid, Violation, DEFAULT_BRP_FEE, DEFAULT_CONSUMER_PRICE,
};

pub const SCHEMA_VERSION: u32 = 1;
/// Significant digits of exported result numbers.
pub const RESULT_DIGITS: i32 = 9;

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), line, message: message.into() }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        csv::ErrorKind::Deserialize { err, .. } => parse_err(path, line, err.to_string()),
        other => parse_err(path, line, format!("{other:?}")),
    }
}

/// Reads every row of a headed CSV file together with its line number.
fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| csv_err(path, e))?;
    let mut rows = Vec::new();
    for rec in reader.deserialize() {
        let row: T = rec.map_err(|e| csv_err(path, e))?;
        rows.push(row);
    }
    // Header is line 1, data starts on line 2.
    Ok(rows.into_iter().enumerate().map(|(i, r)| (i + 2, r)).collect())
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    check_schema(path, &text)?;
    serde_json::from_str(&text).map_err(|e| parse_err(path, e.line(), e.to_string()))
}

fn check_schema(path: &Path, text: &str) -> Result<()> {
    #[derive(Deserialize)]
    struct Probe {
        schema_version: Option<u32>,
    }
    let probe: Probe = serde_json::from_str(text).map_err(|e| parse_err(path, e.line(), e.to_string()))?;
    match probe.schema_version {
        Some(SCHEMA_VERSION) => Ok(()),
        Some(found) => Err(Error::SchemaVersion { path: path.to_path_buf(), found, expected: SCHEMA_VERSION }),
        None => Err(parse_err(path, 1, "missing schema_version")),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.into()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| csv_err(path, e))
}

fn write_rows(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush()?;
    Ok(())
}

/// Rounds to `digits` significant digits; negative zero becomes zero.
pub fn round_sig(x: f64, digits: i32) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { 0.0 } else { x };
    }
    let rounded: f64 = format!("{:.*e}", (digits - 1) as usize, x).parse().expect("formatted float parses");
    if rounded == 0.0 {
        0.0
    } else {
        rounded
    }
}

/// Result number formatting: nine significant digits, plain decimal notation.
pub fn fmt_result(x: f64) -> String {
    round_sig(x, RESULT_DIGITS).to_string()
}

// ---------------------------------------------------------------- network

#[derive(Serialize, Deserialize)]
struct NetworkHeader {
    schema_version: u32,
    base_mva: f64,
}

#[derive(Serialize, Deserialize)]
struct BusRow {
    bus_id: u32,
    is_slack: bool,
    gen_mw_profile_ref: Option<u32>,
    demand_mw_profile_ref: Option<u32>,
}

#[derive(Serialize, Deserialize)]
struct BranchRow {
    from: u32,
    to: u32,
    r_pu: f64,
    x_pu: f64,
    rated_mva: f64,
}

#[derive(Serialize, Deserialize)]
struct ProfileRow {
    bus_id: u32,
    step: usize,
    gen_mw: f64,
    demand_mw: f64,
}

/// Loads a network directory (network.json, buses.csv, branches.csv, profiles.csv) and validates it.
pub fn load_network(dir: &Path) -> Result<Network> {
    let (net, mut violations) = parse_network(dir)?;
    if violations.is_empty() {
        violations = validate_network(&net);
    }
    if violations.is_empty() {
        Ok(net)
    } else {
        Err(Error::Validation(violations))
    }
}

/// Parses a network directory, returning slack-flag violations instead of failing on them.
fn parse_network(dir: &Path) -> Result<(Network, Vec<Violation>)> {
    let header: NetworkHeader = read_json(&dir.join("network.json"))?;
    let buses_path = dir.join("buses.csv");
    let bus_rows: Vec<(usize, BusRow)> = read_rows(&buses_path)?;
    let branch_rows: Vec<(usize, BranchRow)> = read_rows(&dir.join("branches.csv"))?;
    let profiles_path = dir.join("profiles.csv");
    let profile_rows: Vec<(usize, ProfileRow)> = read_rows(&profiles_path)?;

    let mut profiles: BTreeMap<u32, Vec<(f64, f64)>> = BTreeMap::new();
    for (line, row) in profile_rows {
        let series = profiles.entry(row.bus_id).or_default();
        if row.step != series.len() {
            return Err(parse_err(
                &profiles_path,
                line,
                format!("profile {} expects step {}, found {}", row.bus_id, series.len(), row.step),
            ));
        }
        series.push((row.gen_mw, row.demand_mw));
    }
    let steps = profiles.values().map(Vec::len).max().unwrap_or(0);

    let slack: Vec<u32> = bus_rows.iter().filter(|(_, r)| r.is_slack).map(|(_, r)| r.bus_id).collect();
    let mut violations = Vec::new();
    if slack.len() != 1 {
        violations.push(Violation::new(
            "network",
            "is_slack",
            format!("exactly one slack bus is required, found {}", slack.len()),
        ));
    }
    let mut buses = Vec::with_capacity(bus_rows.len());
    for (line, row) in &bus_rows {
        let pick = |reference: Option<u32>, gen: bool| -> Result<Vec<f64>> {
            match reference {
                None => Ok(vec![0.0; steps]),
                Some(r) => profiles
                    .get(&r)
                    .map(|s| s.iter().map(|&(g, d)| if gen { g } else { d }).collect())
                    .ok_or_else(|| parse_err(&buses_path, *line, format!("unknown profile {r}"))),
            }
        };
        buses.push(Bus {
            id: row.bus_id,
            gen_mw: pick(row.gen_mw_profile_ref, true)?,
            demand_mw: pick(row.demand_mw_profile_ref, false)?,
        });
    }
    let net = Network {
        base_mva: header.base_mva,
        buses,
        branches: branch_rows
            .into_iter()
            .map(|(_, r)| Branch { from_bus: r.from, to_bus: r.to, r_pu: r.r_pu, x_pu: r.x_pu, rated_mva: r.rated_mva })
            .collect(),
        slack_bus: slack.first().copied().unwrap_or(0),
    };
    Ok((net, violations))
}

/// Writes a network directory readable by [`load_network`]. Each bus owns its profile.
pub fn save_network(net: &Network, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_json(&dir.join("network.json"), &NetworkHeader { schema_version: SCHEMA_VERSION, base_mva: net.base_mva })?;
    write_rows(
        &dir.join("buses.csv"),
        &["bus_id", "is_slack", "gen_mw_profile_ref", "demand_mw_profile_ref"],
        net.buses
            .iter()
            .map(|b| vec![b.id.to_string(), (b.id == net.slack_bus).to_string(), b.id.to_string(), b.id.to_string()]),
    )?;
    write_rows(
        &dir.join("branches.csv"),
        &["from", "to", "r_pu", "x_pu", "rated_mva"],
        net.branches.iter().map(|b| {
            vec![
                b.from_bus.to_string(),
                b.to_bus.to_string(),
                b.r_pu.to_string(),
                b.x_pu.to_string(),
                b.rated_mva.to_string(),
            ]
        }),
    )?;
    write_rows(
        &dir.join("profiles.csv"),
        &["bus_id", "step", "gen_mw", "demand_mw"],
        net.buses.iter().flat_map(|b| {
            b.gen_mw
                .iter()
                .zip(&b.demand_mw)
                .enumerate()
                .map(move |(t, (g, d))| vec![b.id.to_string(), t.to_string(), g.to_string(), d.to_string()])
        }),
    )
}

// ---------------------------------------------------------------- series

#[derive(Deserialize)]
struct PriceRow {
    step: usize,
    da: f64,
    up: f64,
    down: f64,
}

#[derive(Deserialize)]
struct RegulationRow {
    step: usize,
    up: f64,
    down: f64,
}

fn check_steps(path: &Path, found: &[(usize, usize)], expected: usize) -> Result<()> {
    for (k, &(line, step)) in found.iter().enumerate() {
        if step != k {
            return Err(parse_err(path, line, format!("expected step {k}, found {step}")));
        }
    }
    if found.len() != expected {
        let line = found.last().map_or(1, |&(l, _)| l);
        return Err(parse_err(path, line, format!("expected {expected} steps, found {}", found.len())));
    }
    Ok(())
}

/// Loads `step,da,up,down`; scalar prices take their defaults.
pub fn load_prices(path: &Path, steps: usize) -> Result<PriceSet> {
    let rows: Vec<(usize, PriceRow)> = read_rows(path)?;
    check_steps(path, &rows.iter().map(|(l, r)| (*l, r.step)).collect::<Vec<_>>(), steps)?;
    Ok(PriceSet {
        da: rows.iter().map(|(_, r)| r.da).collect(),
        up: rows.iter().map(|(_, r)| r.up).collect(),
        down: rows.iter().map(|(_, r)| r.down).collect(),
        brp_fee: DEFAULT_BRP_FEE,
        consumer_price: DEFAULT_CONSUMER_PRICE,
    })
}

pub fn save_prices(prices: &PriceSet, path: &Path) -> Result<()> {
    write_rows(
        path,
        &["step", "da", "up", "down"],
        (0..prices.da.len()).map(|t| {
            vec![t.to_string(), prices.da[t].to_string(), prices.up[t].to_string(), prices.down[t].to_string()]
        }),
    )
}

/// Loads `step,up,down` regulation demand.
pub fn load_regulation(path: &Path, steps: usize) -> Result<RegulationDemand> {
    let rows: Vec<(usize, RegulationRow)> = read_rows(path)?;
    check_steps(path, &rows.iter().map(|(l, r)| (*l, r.step)).collect::<Vec<_>>(), steps)?;
    Ok(RegulationDemand {
        up: rows.iter().map(|(_, r)| r.up).collect(),
        down: rows.iter().map(|(_, r)| r.down).collect(),
    })
}

pub fn save_regulation(demand: &RegulationDemand, path: &Path) -> Result<()> {
    write_rows(
        path,
        &["step", "up", "down"],
        (0..demand.up.len()).map(|t| vec![t.to_string(), demand.up[t].to_string(), demand.down[t].to_string()]),
    )
}

// ---------------------------------------------------------------- fleet

#[derive(Serialize, Deserialize)]
struct FleetFile {
    schema_version: u32,
    aggregators: Vec<FleetAggregator>,
}

#[derive(Serialize, Deserialize)]
struct FleetAggregator {
    id: String,
    bus_id: u32,
    direction: Direction,
    bid_price: f64,
    fleet: Vec<FleetEntry>,
}

/// One EV, or `count` identical EVs named `{id}-{k}`.
#[derive(Serialize, Deserialize)]
struct FleetEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    count: Option<usize>,
    #[serde(flatten)]
    spec: EvSpec,
}

pub fn load_fleet(path: &Path) -> Result<Vec<AggregatorSpec>> {
    let file: FleetFile = read_json(path)?;
    Ok(file
        .aggregators
        .into_iter()
        .map(|a| AggregatorSpec {
            id: a.id,
            bus_id: a.bus_id,
            direction: a.direction,
            bid_price: a.bid_price,
            fleet: a
                .fleet
                .into_iter()
                .flat_map(|e| match e.count {
                    None => vec![e.spec],
                    Some(n) => (0..n).map(|k| EvSpec { id: format!("{}-{k}", e.spec.id), ..e.spec.clone() }).collect(),
                })
                .collect(),
        })
        .collect())
}

/// Collapses runs `{id}-0, {id}-1, ...` of identical EVs into one counted entry.
fn compress_fleet(fleet: &[EvSpec]) -> Vec<FleetEntry> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < fleet.len() {
        let ev = &fleet[i];
        let run = ev.id.strip_suffix("-0").map_or(1, |prefix| {
            let template = EvSpec { id: String::new(), ..ev.clone() };
            fleet[i..]
                .iter()
                .enumerate()
                .take_while(|(k, e)| {
                    e.id == format!("{prefix}-{k}") && EvSpec { id: String::new(), ..(*e).clone() } == template
                })
                .count()
        });
        if run > 1 {
            let prefix = ev.id.strip_suffix("-0").expect("run implies suffix");
            out.push(FleetEntry { count: Some(run), spec: EvSpec { id: prefix.to_string(), ..ev.clone() } });
        } else {
            out.push(FleetEntry { count: None, spec: ev.clone() });
        }
        i += run;
    }
    out
}

pub fn save_fleet(aggregators: &[AggregatorSpec], path: &Path) -> Result<()> {
    let file = FleetFile {
        schema_version: SCHEMA_VERSION,
        aggregators: aggregators
            .iter()
            .map(|a| FleetAggregator {
                id: a.id.clone(),
                bus_id: a.bus_id,
                direction: a.direction,
                bid_price: a.bid_price,
                fleet: compress_fleet(&a.fleet),
            })
            .collect(),
    };
    write_json(path, &file)
}

// ---------------------------------------------------------------- scenario

#[derive(Serialize, Deserialize)]
struct ScenarioFile {
    schema_version: u32,
    name: String,
    grid: TimeGrid,
    /// Paths relative to the scenario file.
    network: PathBuf,
    fleet: PathBuf,
    prices: PathBuf,
    regulation: PathBuf,
    #[serde(default = "default_brp")]
    brp_fee: f64,
    #[serde(default = "default_consumer")]
    consumer_price: f64,
    #[serde(default)]
    dso: DsoConfig,
    scheme: Scheme,
    #[serde(default)]
    settlement: SettlementOptions,
    #[serde(default)]
    seed: u64,
}

fn default_brp() -> f64 {
    DEFAULT_BRP_FEE
}

fn default_consumer() -> f64 {
    DEFAULT_CONSUMER_PRICE
}

/// Loads a scenario and validates it as a whole.
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let (scenario, violations) = read_scenario(path)?;
    if violations.is_empty() {
        Ok(scenario)
    } else {
        Err(Error::Validation(violations))
    }
}

/// Parses a scenario and lists every model violation without failing on them.
pub fn read_scenario(path: &Path) -> Result<(Scenario, Vec<Violation>)> {
    let file: ScenarioFile = read_json(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let steps = file.grid.steps;
    let ctx = |what: &str| format!("loading {what} for scenario {}", path.display());
    let (network, mut violations) = parse_network(&base.join(&file.network)).map_err(|e| e.context(ctx("network")))?;
    let aggregators = load_fleet(&base.join(&file.fleet)).map_err(|e| e.context(ctx("fleet")))?;
    let mut prices = load_prices(&base.join(&file.prices), steps).map_err(|e| e.context(ctx("prices")))?;
    prices.brp_fee = file.brp_fee;
    prices.consumer_price = file.consumer_price;
    let regulation = load_regulation(&base.join(&file.regulation), steps).map_err(|e| e.context(ctx("regulation")))?;
    let scenario = Scenario {
        name: file.name,
        grid: file.grid,
        network,
        aggregators,
        prices,
        regulation,
        dso: file.dso,
        scheme: file.scheme,
        settlement: file.settlement,
        seed: file.seed,
    };
    violations.extend(scenario.violations());
    Ok((scenario, violations))
}

/// Writes the scenario file at `path` and its data files into a sibling
/// directory named after the file stem (`congested.json` -> `congested/`).
pub fn save_scenario(s: &Scenario, path: &Path) -> Result<()> {
    let stem = path
        .file_stem()
        .and_then(|x| x.to_str())
        .ok_or_else(|| parse_err(path, 0, "scenario path needs a file name"))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let data = PathBuf::from(stem);
    fs::create_dir_all(base.join(&data))?;
    save_network(&s.network, &base.join(data.join("network")))?;
    save_fleet(&s.aggregators, &base.join(data.join("fleet.json")))?;
    save_prices(&s.prices, &base.join(data.join("prices.csv")))?;
    save_regulation(&s.regulation, &base.join(data.join("regulation.csv")))?;
    let file = ScenarioFile {
        schema_version: SCHEMA_VERSION,
        name: s.name.clone(),
        grid: s.grid,
        network: data.join("network"),
        fleet: data.join("fleet.json"),
        prices: data.join("prices.csv"),
        regulation: data.join("regulation.csv"),
        brp_fee: s.prices.brp_fee,
        consumer_price: s.prices.consumer_price,
        dso: s.dso.clone(),
        scheme: s.scheme,
        settlement: s.settlement,
        seed: s.seed,
    };
    write_json(path, &file)
}

// ---------------------------------------------------------------- results

fn round_json(v: &mut serde_json::Value) {
    match v {
        serde_json::Value::Number(n) => {
            if let Some(x) = n.as_f64().filter(|_| n.is_f64()) {
                if let Some(r) = serde_json::Number::from_f64(round_sig(x, RESULT_DIGITS)) {
                    *n = r;
                }
            }
        }
        serde_json::Value::Array(items) => items.iter_mut().for_each(round_json),
        serde_json::Value::Object(map) => map.values_mut().for_each(round_json),
        _ => {}
    }
}

#[derive(Serialize, Deserialize)]
struct SettlementFile {
    schema_version: u32,
    #[serde(flatten)]
    report: SettlementReport,
}

/// Writes settlement.json, volumes.csv and loadings.csv into `dir`.
pub fn export_results(report: &SettlementReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut summary = report.clone();
    summary.volumes.clear();
    summary.loadings.clear();
    let mut value = serde_json::to_value(SettlementFile { schema_version: SCHEMA_VERSION, report: summary })
        .map_err(|e| Error::Io(e.into()))?;
    round_json(&mut value);
    write_json(&dir.join("settlement.json"), &value)?;
    write_rows(
        &dir.join("volumes.csv"),
        &["step", "aggregator_id", "e_up", "e_down", "e_da"],
        report.volumes.iter().map(|r| {
            vec![
                r.step.to_string(),
                r.aggregator_id.clone(),
                fmt_result(r.e_up),
                fmt_result(r.e_down),
                fmt_result(r.e_da),
            ]
        }),
    )?;
    write_rows(
        &dir.join("loadings.csv"),
        &["step", "branch_id", "loading_fraction", "state"],
        report
            .loadings
            .iter()
            .map(|r| vec![r.step.to_string(), r.branch_id.to_string(), fmt_result(r.loading), r.state.to_string()]),
    )
}

/// Reads the summary part of an exported settlement.json (volumes and loadings stay empty).
pub fn load_settlement(path: &Path) -> Result<SettlementReport> {
    let file: SettlementFile = read_json(path)?;
    Ok(file.report)
}

/// Side-by-side figures of the two schemes with percentage deltas relative to hybrid.
pub fn export_comparison(hybrid: &SettlementReport, dso: &SettlementReport, path: &Path) -> Result<()> {
    let delta = |h: f64, d: f64| if h == 0.0 { 0.0 } else { 100.0 * (d - h) / h.abs() };
    write_rows(
        path,
        &[
            "scenario",
            "tso_cost_hybrid",
            "tso_cost_dso_managed",
            "tso_cost_delta_pct",
            "benefit_hybrid",
            "benefit_dso_managed",
            "benefit_delta_pct",
        ],
        [vec![
            hybrid.scenario.clone(),
            fmt_result(hybrid.tso_cost),
            fmt_result(dso.tso_cost),
            fmt_result(delta(hybrid.tso_cost, dso.tso_cost)),
            fmt_result(hybrid.aggregator_benefit),
            fmt_result(dso.aggregator_benefit),
            fmt_result(delta(hybrid.aggregator_benefit, dso.aggregator_benefit)),
        ]],
    )
}

/// One row of a parameter sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub scheme: Scheme,
    pub planned_up: f64,
    pub planned_down: f64,
    pub planned_da: f64,
    pub dispatched_up: f64,
    pub dispatched_down: f64,
    pub planned_objective: f64,
    pub tso_cost: f64,
    pub aggregator_benefit: f64,
}

pub fn export_sweep(parameter: &str, rows: &[SweepRow], path: &Path) -> Result<()> {
    write_rows(
        path,
        &[
            parameter,
            "scheme",
            "planned_up_mwh",
            "planned_down_mwh",
            "planned_da_mwh",
            "dispatched_up_mwh",
            "dispatched_down_mwh",
            "planned_objective",
            "tso_cost",
            "aggregator_benefit",
        ],
        rows.iter().map(|r| {
            vec![
                fmt_result(r.value),
                r.scheme.to_string(),
                fmt_result(r.planned_up),
                fmt_result(r.planned_down),
                fmt_result(r.planned_da),
                fmt_result(r.dispatched_up),
                fmt_result(r.dispatched_down),
                fmt_result(r.planned_objective),
                fmt_result(r.tso_cost),
                fmt_result(r.aggregator_benefit),
            ]
        }),
    )
}
