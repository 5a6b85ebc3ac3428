//! Run artifacts: `epochs.csv`, `summary.json`, plots and `manifest.json`.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use super::config::{canonical_config, digest_of};
use super::plot::emit_plots;
use crate::comms::MethodTag;
use crate::error::{Error, Result};
use crate::sensing::SensingAction;
use crate::sim::{EpochRecord, Scenario, ScenarioSummary, TrafficState};

pub const CSV_HEADER: &str = "epoch,p_x_true,v_x_true,p_x_est,v_x_est,P00,P11,pred_angle_var_rad2,action,traffic,\
selection_bitmask,rate_proposed,rate_conventional,rate_perfect,snr_proposed";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
    Svg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_digest: String,
    pub canonical_config: String,
    pub seed: u64,
    pub tool_version: String,
    pub started_at: String,
    pub finished_at: String,
    pub outputs: Vec<String>,
}

impl RunManifest {
    /// Whether the stored digest matches the stored canonical config.
    pub fn digest_is_consistent(&self) -> bool {
        digest_of(&self.canonical_config) == self.config_digest
    }
}

pub fn timestamp() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

fn num(out: &mut String, v: f64) {
    let _ = write!(out, ",{v:e}");
}

fn opt_num(out: &mut String, v: Option<f64>) {
    match v {
        Some(v) => num(out, v),
        None => out.push(','),
    }
}

pub fn epochs_csv(records: &[EpochRecord]) -> String {
    let mut out = String::with_capacity(200 * (records.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        let est = r.estimate();
        let _ = write!(out, "{}", r.epoch);
        for v in [
            r.truth.position_x,
            r.truth.velocity_x,
            est.position(),
            est.velocity(),
            est.covariance[(0, 0)],
            est.covariance[(1, 1)],
            r.predicted_angle_variance(),
        ] {
            num(&mut out, v);
        }
        let action = match r.action() {
            SensingAction::Sensing => "sensing",
            SensingAction::NoSensing => "no_sensing",
        };
        let traffic = match r.traffic_state {
            TrafficState::On => "on",
            TrafficState::Off => "off",
        };
        let _ = write!(out, ",{action},{traffic},{}", r.selection().bitmask());
        for tag in [MethodTag::Proposed, MethodTag::Conventional, MethodTag::Perfect] {
            opt_num(&mut out, r.rates.get(&tag).map(|l| l.rate));
        }
        opt_num(&mut out, r.rates.get(&MethodTag::Proposed).map(|l| l.snr));
        out.push('\n');
    }
    out
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))
}

/// Writes the requested artifacts into `dir`, then the manifest. The
/// manifest goes through a temporary file and a rename, so it exists only if
/// every other output was written.
pub fn write_records(
    records: &[EpochRecord],
    scenario: &Scenario,
    dir: &Path,
    formats: &BTreeSet<OutputFormat>,
    started_at: &str,
) -> Result<RunManifest> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut outputs = Vec::new();
    if formats.contains(&OutputFormat::Csv) {
        write_file(dir, "epochs.csv", &epochs_csv(records))?;
        outputs.push("epochs.csv".to_string());
    }
    if formats.contains(&OutputFormat::Json) {
        let summary = ScenarioSummary::from_records(records, scenario.policy.variance_threshold);
        let json = serde_json::to_string_pretty(&summary).map_err(|_| Error::NonFinite("summary"))?;
        write_file(dir, "summary.json", &(json + "\n"))?;
        outputs.push("summary.json".to_string());
    }
    if formats.contains(&OutputFormat::Svg) {
        outputs.extend(emit_plots(records, scenario.policy.variance_threshold, dir)?);
    }

    let canonical = canonical_config(scenario);
    let manifest = RunManifest {
        config_digest: digest_of(&canonical),
        canonical_config: canonical,
        seed: scenario.seed,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        started_at: started_at.to_string(),
        finished_at: timestamp(),
        outputs,
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest always serializes") + "\n";
    write_file(dir, "manifest.json.tmp", &json)?;
    let (tmp, fin) = (dir.join("manifest.json.tmp"), dir.join("manifest.json"));
    std::fs::rename(&tmp, &fin).map_err(|e| Error::io(&fin, e))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{run_scenario, TrafficModel};

    fn short(seed: u64) -> (Scenario, Vec<EpochRecord>) {
        let mut s = Scenario::reference(seed);
        s.num_epochs = 30;
        s.traffic = TrafficModel::Intervals { on: vec![(10, 20)] };
        let r = run_scenario(&s).unwrap();
        (s, r)
    }

    #[test]
    fn csv_layout() {
        let (_, records) = short(1);
        let csv = epochs_csv(&records);
        assert!(!csv.contains('\r'));
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 31);
        assert_eq!(lines[0], CSV_HEADER);
        for (i, line) in lines[1..].iter().enumerate() {
            let cols: Vec<&str> = line.split(',').collect();
            assert_eq!(cols.len(), 15, "{line}");
            assert_eq!(cols[0], i.to_string());
            let on = (10..20).contains(&i);
            assert_eq!(cols[9], if on { "on" } else { "off" });
            assert_eq!(cols[11..].iter().all(|c| !c.is_empty()), on);
            assert_eq!(cols[11..].iter().all(|c| c.is_empty()), !on);
            for c in &cols[1..8] {
                let v: f64 = c.parse().unwrap();
                assert_eq!(format!("{v:e}"), *c);
            }
        }
        assert_eq!(lines[1].split(',').nth(8), Some("sensing"));
        assert_eq!(lines[1].split(',').nth(10), Some(records[0].selection().bitmask().to_string().as_str()));
    }

    #[test]
    fn artifacts_and_manifest() {
        let (scenario, records) = short(2);
        let dir = tempfile::tempdir().unwrap();
        let formats = [OutputFormat::Csv, OutputFormat::Json, OutputFormat::Svg].into_iter().collect();
        let m = write_records(&records, &scenario, dir.path(), &formats, &timestamp()).unwrap();
        assert_eq!(m.outputs, ["epochs.csv", "summary.json", "variance.svg", "rate.svg"]);
        assert!(m.digest_is_consistent());
        assert_eq!(m.seed, 2);
        for f in m.outputs.iter().map(String::as_str).chain(["manifest.json"]) {
            assert!(dir.path().join(f).is_file(), "{f}");
        }
        assert!(!dir.path().join("manifest.json.tmp").exists());
        let stored: RunManifest =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
        assert_eq!(stored, m);
        let summary: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
        assert!(summary["proposed"]["sensing_epochs"].as_u64().unwrap() >= 1);
        assert!(summary["mean_rates"]["perfect"].as_f64().unwrap() > 0.0);
    }

    #[test]
    fn unwritable_dir_leaves_no_manifest() {
        let (scenario, records) = short(3);
        let dir = tempfile::tempdir().unwrap();
        let blocked = dir.path().join("file");
        std::fs::write(&blocked, "x").unwrap();
        let formats = [OutputFormat::Csv].into_iter().collect();
        assert!(write_records(&records, &scenario, &blocked.join("out"), &formats, "t").is_err());
        assert!(!blocked.join("out").join("manifest.json").exists());
    }
}
