//! Weight files and CSV/JSON artifacts.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policy::{Mlp, PolicyError};
use crate::sim::{RolloutRecord, SystemModel};
use crate::stl::{robustness_generic, RequirementSet};
use crate::train::{CompareReport, HistoryRow, TestReport};

pub const WEIGHT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("unsupported weight format version {0}")]
    Version(u32),
    #[error("weight file is for the {found} but the {expected} was expected")]
    Role { expected: Role, found: Role },
    #[error("weights were trained with config {found}, current config is {expected}")]
    ConfigMismatch { expected: String, found: String },
    #[error("weights do not match the configured architecture: {0}")]
    Architecture(String),
    #[error("bad action table: {0}")]
    Table(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Attacker,
    Defender,
}

impl std::fmt::Display for Role {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Role::Attacker => "attacker",
            Role::Defender => "defender",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightFile {
    pub format_version: u32,
    pub role: Role,
    pub sizes: Vec<usize>,
    pub activation: String,
    pub negative_slope: f64,
    pub output_bounds: Vec<(f64, f64)>,
    pub params: Vec<f64>,
    pub config_hash: String,
    /// Unix seconds; left empty unless stamping was requested so that
    /// repeated runs produce identical files.
    pub created: Option<u64>,
}

impl WeightFile {
    pub fn new(role: Role, net: &Mlp, config_hash: &str, created: Option<u64>) -> Self {
        Self {
            format_version: WEIGHT_FORMAT_VERSION,
            role,
            sizes: net.sizes.clone(),
            activation: "leaky_relu".into(),
            negative_slope: net.negative_slope,
            output_bounds: net.bounds.clone(),
            params: net.params.clone(),
            config_hash: config_hash.into(),
            created,
        }
    }

    pub fn to_mlp(&self) -> Result<Mlp, PersistError> {
        if self.format_version != WEIGHT_FORMAT_VERSION {
            return Err(PersistError::Version(self.format_version));
        }
        if self.activation != "leaky_relu" {
            return Err(PersistError::Architecture(format!("activation {:?}", self.activation)));
        }
        Ok(Mlp::zeros(self.sizes.clone(), self.output_bounds.clone(), self.negative_slope)?
            .with_params(self.params.clone())?)
    }

    /// Loads a network, checking role, config hash and architecture.
    pub fn load_checked(
        path: &Path,
        role: Role,
        config_hash: &str,
        expected: &Mlp,
    ) -> Result<Mlp, PersistError> {
        let wf: WeightFile = read_json(path)?;
        if wf.role != role {
            return Err(PersistError::Role {
                expected: role,
                found: wf.role,
            });
        }
        if wf.config_hash != config_hash {
            return Err(PersistError::ConfigMismatch {
                expected: config_hash.into(),
                found: wf.config_hash,
            });
        }
        let net = wf.to_mlp()?;
        if net.sizes != expected.sizes || net.bounds != expected.bounds {
            return Err(PersistError::Architecture(format!(
                "sizes {:?} bounds {:?}, expected {:?} {:?}",
                net.sizes, net.bounds, expected.sizes, expected.bounds
            )));
        }
        Ok(net)
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PersistError + '_ {
    move |source| PersistError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<(), PersistError> {
    std::fs::write(path, text).map_err(io_err(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PersistError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| PersistError::Json {
        path: path.display().to_string(),
        source,
    })?;
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, PersistError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| PersistError::Json {
        path: path.display().to_string(),
        source,
    })
}

fn line(out: &mut String, cells: impl IntoIterator<Item = String>) {
    let cells: Vec<String> = cells.into_iter().collect();
    out.push_str(&cells.join(","));
    out.push('\n');
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn history_csv(rows: &[HistoryRow]) -> String {
    let mut out = String::from("iteration,phase,objective,grad_norm\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.iteration, r.phase, r.objective, r.grad_norm);
    }
    out
}

pub fn report_csv(report: &TestReport, state_names: &[String]) -> String {
    let reqs = &report.summary.requirements;
    let mut out = String::new();
    line(
        &mut out,
        ["index".to_string(), "input_hash".into()]
            .into_iter()
            .chain(state_names.iter().map(|n| format!("s0_{n}")))
            .chain(reqs.iter().map(|r| format!("rho_{r}")))
            .chain(reqs.iter().map(|r| format!("sat_{r}")))
            .chain(["error".to_string()]),
    );
    for row in &report.rows {
        let rho = (0..reqs.len()).map(|i| fmt_opt(row.robustness.get(i).copied()));
        let sat = (0..reqs.len()).map(|i| match row.satisfied.get(i) {
            Some(&b) => (b as u8).to_string(),
            None => String::new(),
        });
        line(
            &mut out,
            [row.index.to_string(), row.input_hash.clone()]
                .into_iter()
                .chain(row.initial_state.iter().map(|x| x.to_string()))
                .chain(rho)
                .chain(sat)
                .chain([csv_escape(row.error.as_deref().unwrap_or(""))]),
        );
    }
    out
}

pub fn compare_csv(report: &CompareReport) -> String {
    let reqs = &report.requirements;
    let mut out = String::new();
    line(
        &mut out,
        ["index".to_string(), "input_hash".into()]
            .into_iter()
            .chain(reqs.iter().map(|r| format!("defender_{r}")))
            .chain(reqs.iter().map(|r| format!("baseline_{r}")))
            .chain(reqs.iter().map(|r| format!("diff_{r}")))
            .chain(["error".to_string()]),
    );
    for row in &report.rows {
        let col = |v: &Vec<f64>| (0..reqs.len()).map(|i| fmt_opt(v.get(i).copied())).collect::<Vec<_>>();
        line(
            &mut out,
            [row.index.to_string(), row.input_hash.clone()]
                .into_iter()
                .chain(col(&row.defender))
                .chain(col(&row.baseline))
                .chain(col(&row.difference))
                .chain([csv_escape(row.error.as_deref().unwrap_or(""))]),
        );
    }
    out
}

fn csv_escape(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One row per step: state, both actions and the robustness of each
/// requirement on the window starting at that step (empty when the window
/// runs past the end).
pub fn rollout_csv<M: SystemModel>(m: &M, rec: &RolloutRecord, reqs: &RequirementSet) -> String {
    let h = reqs.window;
    let mut out = String::new();
    line(
        &mut out,
        ["step".to_string(), "time".into()]
            .into_iter()
            .chain(m.state_names())
            .chain(m.agent_action_names().into_iter().map(|n| format!("ua_{n}")))
            .chain(m.env_action_names().into_iter().map(|n| format!("ue_{n}")))
            .chain(reqs.names().into_iter().map(|n| format!("rho_{n}"))),
    );
    let dt = m.dt();
    let shared = (!m.window_local()).then(|| m.monitored_window(&rec.states));
    for j in 0..rec.steps() {
        let rho: Vec<String> = if j + h <= rec.states.len() {
            let local;
            let window = match &shared {
                Some(mon) => &mon[j..j + h],
                None => {
                    local = m.monitored_window(&rec.states[j..j + h]);
                    &local[..]
                }
            };
            reqs.requirements
                .iter()
                .map(|r| fmt_opt(robustness_generic(&r.formula, window, 0).ok()))
                .collect()
        } else {
            vec![String::new(); reqs.len()]
        };
        line(
            &mut out,
            [j.to_string(), (j as f64 * dt).to_string()]
                .into_iter()
                .chain(rec.states[j].iter().map(|x| x.to_string()))
                .chain(rec.actions_a[j].iter().map(|x| x.to_string()))
                .chain(rec.actions_e[j].iter().map(|x| x.to_string()))
                .chain(rho),
        );
    }
    out
}

/// Reads recorded environment actions: a header row, then one row of
/// `width` numbers per step. Columns named `ue_*` are used when present,
/// otherwise all columns.
pub fn read_actions(path: &Path, width: usize) -> Result<Vec<Vec<f64>>, PersistError> {
    let csv_err = |source| PersistError::Csv {
        path: path.display().to_string(),
        source,
    };
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err)?;
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let picked: Vec<usize> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| h.starts_with("ue_"))
        .map(|(i, _)| i)
        .collect();
    let cols: Vec<usize> = if picked.is_empty() {
        (0..headers.len()).collect()
    } else {
        picked
    };
    if cols.len() != width {
        return Err(PersistError::Table(format!(
            "expected {width} action columns, found {}",
            cols.len()
        )));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let row = cols
            .iter()
            .map(|&i| {
                rec.get(i)
                    .and_then(|s| s.trim().parse::<f64>().ok())
                    .ok_or_else(|| PersistError::Table(format!("unparsable cell in column {i}")))
            })
            .collect::<Result<Vec<f64>, _>>()?;
        out.push(row);
    }
    if out.is_empty() {
        return Err(PersistError::Table("no action rows".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn weight_file_roundtrip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let net = Mlp::init(&mut rng, vec![5, 10, 10, 1], vec![(-30.0, 30.0)], 0.01).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.json");
        write_json(&path, &WeightFile::new(Role::Defender, &net, "abc", None)).unwrap();
        let back = WeightFile::load_checked(&path, Role::Defender, "abc", &net).unwrap();
        for (a, b) in back.params.iter().zip(&net.params) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert!(matches!(
            WeightFile::load_checked(&path, Role::Defender, "xyz", &net),
            Err(PersistError::ConfigMismatch { .. })
        ));
        assert!(matches!(
            WeightFile::load_checked(&path, Role::Attacker, "abc", &net),
            Err(PersistError::Role { .. })
        ));
    }

    #[test]
    fn param_count_is_checked() {
        let net = Mlp::zeros(vec![2, 1], vec![(0.0, 1.0)], 0.01).unwrap();
        let mut wf = WeightFile::new(Role::Attacker, &net, "h", None);
        wf.params.pop();
        assert!(wf.to_mlp().is_err());
    }

    #[test]
    fn actions_table() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.csv");
        std::fs::write(&path, "step,ue_mu,ue_rate\n0,0.5,1\n1,0.25,-2\n").unwrap();
        assert!(read_actions(&path, 3).is_err());
        std::fs::write(&path, "mu,rate\n0.5,1\n0.25,-2\n").unwrap();
        assert_eq!(read_actions(&path, 2).unwrap(), vec![vec![0.5, 1.0], vec![0.25, -2.0]]);
        std::fs::write(&path, "step,ue_mu,ue_rate\n0,0.5,1\n").unwrap();
        assert_eq!(read_actions(&path, 2).unwrap(), vec![vec![0.5, 1.0]]);
    }
}
