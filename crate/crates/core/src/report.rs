//! Result persistence and table rendering.
//!
//! Two on-disk formats hold the same data. JSON is the structured record.
//! CSV flattens it into `path,type,value` rows, where `path` joins object keys
//! with `/` and marks array positions as `#k`; empty containers get their own
//! row so the tree can be rebuilt exactly.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Number, Value};

use crate::error::{Error, Result};
use crate::experiments::{
    format_change, format_gain, gain_ratio, rank_regions, Experiment1, Experiment2, ExperimentBody, ExperimentResult,
    RunSummary, Stats, RESULT_SCHEMA_VERSION,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
}

impl ReportFormat {
    /// Guess from the file extension, defaulting to JSON.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => ReportFormat::Csv,
            _ => ReportFormat::Json,
        }
    }
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::InvalidArgument(format!("unknown report format `{other}`"))),
        }
    }
}

impl ExperimentResult {
    pub fn is_empty(&self) -> bool {
        match &self.body {
            ExperimentBody::Experiment1(e) => e.no_nego.seeds.is_empty() && e.nego.seeds.is_empty(),
            ExperimentBody::Experiment2(e) => e.tests.iter().all(|t| t.subtests.is_empty()),
        }
    }
}

pub fn write_report(result: &ExperimentResult, format: ReportFormat, path: &Path) -> Result<()> {
    if result.is_empty() {
        return Err(Error::EmptyResult);
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    match format {
        ReportFormat::Json => {
            serde_json::to_writer_pretty(&mut w, result).map_err(|e| Error::io(path, e.into()))?;
            w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        ReportFormat::Csv => {
            let value = serde_json::to_value(result).expect("results serialize");
            let mut csv = csv::Writer::from_writer(&mut w);
            csv.write_record(["path", "type", "value"])
                .map_err(|e| csv_io(path, e))?;
            let mut rows = Vec::new();
            flatten("", &value, &mut rows);
            for (p, t, v) in rows {
                csv.write_record([p.as_str(), t, v.as_str()])
                    .map_err(|e| csv_io(path, e))?;
            }
            csv.flush().map_err(|e| Error::io(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_report(path: &Path, format: ReportFormat) -> Result<ExperimentResult> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |reason: String| Error::Parse {
        path: path.to_path_buf(),
        reason,
    };
    let value = match format {
        ReportFormat::Json => serde_json::from_reader(BufReader::new(file)).map_err(|e| parse_err(e.to_string()))?,
        ReportFormat::Csv => {
            let mut reader = csv::Reader::from_reader(BufReader::new(file));
            let mut root = Value::Null;
            for (k, rec) in reader.records().enumerate() {
                let rec = rec.map_err(|e| parse_err(e.to_string()))?;
                if rec.len() != 3 {
                    return Err(parse_err(format!("row {}: expected 3 fields", k + 1)));
                }
                let leaf = parse_leaf(&rec[1], &rec[2]).map_err(|r| parse_err(format!("row {}: {r}", k + 1)))?;
                insert(&mut root, &rec[0], leaf).map_err(|r| parse_err(format!("row {}: {r}", k + 1)))?;
            }
            root
        }
    };
    let result: ExperimentResult = serde_json::from_value(value).map_err(|e| parse_err(e.to_string()))?;
    if result.schema_version != RESULT_SCHEMA_VERSION {
        return Err(parse_err(format!(
            "unsupported result schema version {}",
            result.schema_version
        )));
    }
    Ok(result)
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e.to_string()))
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, &'static str, String)>) {
    let join = |seg: &str| {
        if prefix.is_empty() {
            seg.to_string()
        } else {
            format!("{prefix}/{seg}")
        }
    };
    match v {
        Value::Null => out.push((prefix.to_string(), "null", String::new())),
        Value::Bool(b) => out.push((prefix.to_string(), "bool", b.to_string())),
        Value::Number(n) => {
            let t = if n.is_f64() { "float" } else { "int" };
            out.push((prefix.to_string(), t, n.to_string()));
        }
        Value::String(s) => out.push((prefix.to_string(), "string", s.clone())),
        Value::Array(a) if a.is_empty() => out.push((prefix.to_string(), "array", String::new())),
        Value::Object(o) if o.is_empty() => out.push((prefix.to_string(), "object", String::new())),
        Value::Array(a) => {
            for (k, x) in a.iter().enumerate() {
                flatten(&join(&format!("#{k}")), x, out);
            }
        }
        Value::Object(o) => {
            for (k, x) in o {
                flatten(&join(k), x, out);
            }
        }
    }
}

fn parse_leaf(kind: &str, text: &str) -> std::result::Result<Value, String> {
    Ok(match kind {
        "null" => Value::Null,
        "bool" => Value::Bool(text.parse().map_err(|_| format!("bad bool `{text}`"))?),
        "int" => {
            let n: Number = serde_json::from_str(text).map_err(|_| format!("bad integer `{text}`"))?;
            Value::Number(n)
        }
        "float" => {
            let f: f64 = text.parse().map_err(|_| format!("bad float `{text}`"))?;
            Value::Number(Number::from_f64(f).ok_or_else(|| format!("non-finite float `{text}`"))?)
        }
        "string" => Value::String(text.to_string()),
        "array" => Value::Array(Vec::new()),
        "object" => Value::Object(Map::new()),
        other => return Err(format!("unknown type `{other}`")),
    })
}

fn insert(root: &mut Value, path: &str, leaf: Value) -> std::result::Result<(), String> {
    if path.is_empty() {
        *root = leaf;
        return Ok(());
    }
    let mut cur = root;
    for seg in path.split('/') {
        if let Some(idx) = seg.strip_prefix('#') {
            let idx: usize = idx.parse().map_err(|_| format!("bad index in `{path}`"))?;
            if cur.is_null() {
                *cur = Value::Array(Vec::new());
            }
            let arr = cur
                .as_array_mut()
                .ok_or_else(|| format!("`{path}` indexes a non-array"))?;
            if idx == arr.len() {
                arr.push(Value::Null);
            } else if idx > arr.len() {
                return Err(format!("`{path}` skips array positions"));
            }
            cur = &mut arr[idx];
        } else {
            if cur.is_null() {
                *cur = Value::Object(Map::new());
            }
            let obj = cur
                .as_object_mut()
                .ok_or_else(|| format!("`{path}` keys into a non-object"))?;
            cur = obj.entry(seg.to_string()).or_insert(Value::Null);
        }
    }
    *cur = leaf;
    Ok(())
}

fn pm(s: &Stats, digits: usize) -> String {
    format!("{:.digits$} ± {:.digits$}", s.mean, s.std)
}

/// Headline quantities side by side.
pub fn render_table1(e: &Experiment1) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "| quantity | no-nego | nego |");
    let _ = writeln!(out, "|---|---|---|");
    let _ = writeln!(
        out,
        "| global temperature increase | {} | {} |",
        pm(&e.no_nego.temperature_increase, 2),
        pm(&e.nego.temperature_increase, 2)
    );
    let _ = writeln!(
        out,
        "| collective episode-reward | {} | {} |",
        pm(&e.no_nego.collective_reward, 1),
        pm(&e.nego.collective_reward, 1)
    );
    out
}

/// One row per region of the reward/rank/gain comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionRow {
    pub region: usize,
    pub u_no_nego: f64,
    pub rank_no_nego: usize,
    pub u_nego: f64,
    pub rank_nego: usize,
    pub gain: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionTable {
    pub rows: Vec<RegionRow>,
    pub total_no_nego: f64,
    pub total_nego: f64,
}

impl RegionTable {
    pub fn new(u_no_nego: &[f64], u_nego: &[f64]) -> Result<Self> {
        if u_no_nego.len() != u_nego.len() || u_nego.is_empty() {
            return Err(Error::InvalidArgument(
                "region columns must be non-empty and of equal length".into(),
            ));
        }
        let (r0, r1) = (rank_regions(u_no_nego), rank_regions(u_nego));
        let rows = (0..u_nego.len())
            .map(|i| RegionRow {
                region: i,
                u_no_nego: u_no_nego[i],
                rank_no_nego: r0[i],
                u_nego: u_nego[i],
                rank_nego: r1[i],
                gain: gain_ratio(u_nego[i], u_no_nego[i]),
            })
            .collect();
        Ok(Self {
            rows,
            total_no_nego: u_no_nego.iter().sum(),
            total_nego: u_nego.iter().sum(),
        })
    }

    pub fn from_experiment(e: &Experiment1) -> Result<Self> {
        Self::new(&e.no_nego.mean_rewards(), &e.nego.mean_rewards())
    }

    /// One line per region plus a totals line.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "| region | u_i no-nego | rank no-nego | u_i nego | rank nego | gain |"
        );
        let _ = writeln!(out, "|---|---|---|---|---|---|");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "| {} | {:.1} | {} | {:.1} | {} | {} |",
                r.region,
                r.u_no_nego,
                r.rank_no_nego,
                r.u_nego,
                r.rank_nego,
                format_gain(r.gain)
            );
        }
        let _ = writeln!(
            out,
            "| u | {:.1} | | {:.1} | | {} |",
            self.total_no_nego,
            self.total_nego,
            format_gain(gain_ratio(self.total_nego, self.total_no_nego))
        );
        out
    }
}

pub fn render_table3(e: &Experiment1) -> String {
    let (a, b) = (&e.no_nego.actions, &e.nego.actions);
    let rows = [
        ("mitigation rate", &a.mitigation_rate, &b.mitigation_rate),
        ("saving rate", &a.savings_rate, &b.savings_rate),
        ("max export", &a.export_cap, &b.export_cap),
        ("mean imports", &a.import_bid, &b.import_bid),
        ("mean tariffs", &a.tariff, &b.tariff),
    ];
    let mut out = String::new();
    let _ = writeln!(out, "| action | no-nego | nego |");
    let _ = writeln!(out, "|---|---|---|");
    for (name, x, y) in rows {
        let _ = writeln!(out, "| {name} | {} | {} |", pm(x, 3), pm(y, 3));
    }
    out
}

/// Average tracked-region rewards with and without negotiation.
pub fn render_table4(e: &Experiment2) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "| region | u_i no-nego | u_i nego | difference |");
    let _ = writeln!(out, "|---|---|---|---|");
    for d in &e.deltas {
        let name = d.region.map_or("all".to_string(), |r| r.to_string());
        let _ = writeln!(
            out,
            "| {name} | {:.1} | {:.1} | {} |",
            d.no_nego,
            d.nego,
            format_change(d.nego, d.no_nego)
        );
    }
    out
}

/// Per grid point values behind the pooled averages.
pub fn render_table4_per_ltc(e: &Experiment2) -> String {
    let grid = crate::experiments::Ltc::grid();
    let mut out = String::new();
    let _ = write!(out, "| region |");
    for g in &grid {
        let _ = write!(out, " {} |", g.label());
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "|---|{}", "---|".repeat(grid.len()));
    for d in &e.deltas {
        let name = d.region.map_or("all".to_string(), |r| r.to_string());
        let _ = write!(out, "| {name} |");
        for (off, on) in &d.per_ltc {
            let _ = write!(out, " {off:.1} / {on:.1} ({}) |", format_change(*on, *off));
        }
        let _ = writeln!(out);
    }
    out
}

fn summary_header() -> &'static str {
    "test,subtest,labor_delta,tech_delta,negotiation,temperature_increase_mean,temperature_increase_std,\
collective_reward_mean,collective_reward_std,mitigation_mean,mitigation_std,savings_mean,savings_std,\
export_cap_mean,import_bid_mean,tariff_mean"
}

fn summary_line(test: &str, s: &RunSummary) -> String {
    format!(
        "{test},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        s.label,
        s.ltc.labor_delta,
        s.ltc.tech_delta,
        s.negotiation_on,
        s.temperature_increase.mean,
        s.temperature_increase.std,
        s.collective_reward.mean,
        s.collective_reward.std,
        s.actions.mitigation_rate.mean,
        s.actions.mitigation_rate.std,
        s.actions.savings_rate.mean,
        s.actions.savings_rate.std,
        s.actions.export_cap.mean,
        s.actions.import_bid.mean,
        s.actions.tariff.mean
    )
}

/// Plot-ready CSV with one line per configuration.
pub fn plot_data(result: &ExperimentResult) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{}", summary_header());
    match &result.body {
        ExperimentBody::Experiment1(e) => {
            for s in [&e.no_nego, &e.nego] {
                let _ = writeln!(out, "{}", summary_line(&s.label, s));
            }
        }
        ExperimentBody::Experiment2(e) => {
            for t in &e.tests {
                for s in &t.subtests {
                    let _ = writeln!(out, "{}", summary_line(&t.label, s));
                }
            }
        }
    }
    out
}

/// All tables for a result, preceded by its provenance.
pub fn render_tables(result: &ExperimentResult) -> Result<String> {
    let m = &result.metadata;
    let mut out = String::new();
    let _ = writeln!(out, "config hash: {}", m.config_hash);
    let _ = writeln!(out, "build: {}", m.build_id);
    let _ = writeln!(
        out,
        "seeds: {:?}, episodes: {}, wall time: {:.1} s",
        m.seeds, m.episodes, m.wall_time_s
    );
    for n in &m.notes {
        let _ = writeln!(out, "note: {n}");
    }
    let _ = writeln!(out);
    match &result.body {
        ExperimentBody::Experiment1(e) => {
            out.push_str(&render_table1(e));
            out.push('\n');
            out.push_str(&RegionTable::from_experiment(e)?.render());
            out.push('\n');
            out.push_str(&render_table3(e));
            let rho = e
                .rank_correlation
                .map_or("undefined".to_string(), |r| format!("{r:.3}"));
            let _ = writeln!(out, "\nrank correlation (Spearman): {rho}");
        }
        ExperimentBody::Experiment2(e) => {
            out.push_str(&render_table4(e));
            out.push('\n');
            out.push_str(&render_table4_per_ltc(e));
            out.push('\n');
            let _ = writeln!(out, "| test | temperature increase | collective reward | mitigation |");
            let _ = writeln!(out, "|---|---|---|---|");
            for t in &e.tests {
                for s in &t.subtests {
                    let _ = writeln!(
                        out,
                        "| {} | {} | {} | {} |",
                        s.label,
                        pm(&s.temperature_increase, 2),
                        pm(&s.collective_reward, 1),
                        pm(&s.actions.mitigation_rate, 3)
                    );
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn leaf_round_trip() {
        let v: Value = serde_json::json!({
            "a": [1, 2.5, null, {"b": []}],
            "c": {},
            "d": "x,y \"q\"",
            "e": [[0.1, 0.2]],
            "f": true,
            "g": 18446744073709551615u64
        });
        let mut rows = Vec::new();
        flatten("", &v, &mut rows);
        let mut root = Value::Null;
        for (p, t, x) in rows {
            insert(&mut root, &p, parse_leaf(t, &x).unwrap()).unwrap();
        }
        assert_eq!(root, v);
    }

    #[test]
    fn region_table_has_totals_row() {
        let t = RegionTable::new(&[5.8, 3.6], &[5.0, 2.8]).unwrap();
        let text = t.render();
        assert_eq!(text.lines().count(), 2 + 2 + 1);
        assert!(text.contains("| 0 | 5.8 | 0 | 5.0 | 0 | 0.86 |"));
        assert!(text.lines().last().unwrap().starts_with("| u | 9.4 |"));
    }

    #[test]
    fn format_from_path() {
        assert_eq!(ReportFormat::from_path(Path::new("a/b.CSV")), ReportFormat::Csv);
        assert_eq!(ReportFormat::from_path(Path::new("a/b.json")), ReportFormat::Json);
        assert!("xml".parse::<ReportFormat>().is_err());
    }
}
