//! Experiment configuration: a TOML document with dotted-path overrides
//! applied before typed deserialization.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use floquet_flow::dynamics::DEFAULT_SUBSTEPS;
use floquet_flow::flow::FlowConfig;
use floquet_flow::hilbert::SpinChainParams;
use floquet_flow::oscillator::{FreezingOptions, OscillatorParams};
use floquet_flow::scan::{DipCriteria, ScanFlow};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

/// Either explicit points or an inclusive arithmetic range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    Points(Vec<f64>),
    Range { start: f64, stop: f64, step: f64 },
}

impl Grid {
    pub fn values(&self) -> Result<Vec<f64>> {
        let v = match self {
            Grid::Points(p) => p.clone(),
            Grid::Range { start, stop, step } => {
                if !(*step > 0.0) || !(stop >= start) {
                    bail!("grid range needs step > 0 and stop >= start");
                }
                let n = ((stop - start) / step + 1e-9).floor() as usize;
                (0..=n).map(|k| start + k as f64 * step).collect()
            }
        };
        if v.is_empty() {
            bail!("grid is empty");
        }
        if v.windows(2).any(|w| !(w[0] < w[1])) {
            bail!("grid must be sorted and free of duplicates");
        }
        Ok(v)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSection {
    /// Drive ratios `A/Omega`.
    pub ratios: Option<Grid>,
    pub omegas: Option<Grid>,
    /// Chain lengths; defaults to the length in `[chain]`.
    pub sizes: Option<Vec<usize>>,
    /// Second-neighbor couplings for thermalization runs.
    pub j2_values: Option<Vec<f64>>,
    #[serde(default)]
    pub flow: ScanFlow,
    /// Golden-section tolerance in `A/Omega` for minimum refinement.
    pub refine_tol: Option<f64>,
    /// Ratio bracket searched for the freezing point at each frequency.
    pub bracket: Option<[f64; 2]>,
    /// Record stride for the `P(lambda)` curves written at each minimum.
    #[serde(default = "default_stride")]
    pub curve_stride: usize,
    #[serde(default)]
    pub dips: DipCriteria,
}

fn default_stride() -> usize {
    1
}

impl Default for ScanSection {
    fn default() -> Self {
        Self {
            ratios: None,
            omegas: None,
            sizes: None,
            j2_values: None,
            flow: ScanFlow::default(),
            refine_tol: None,
            bracket: None,
            curve_stride: default_stride(),
            dips: DipCriteria::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DynamicsSection {
    pub ratios: Vec<f64>,
    pub n_periods: usize,
    pub substeps: usize,
    /// Also compare quasienergies for the first ratio.
    pub quasienergies: bool,
}

impl Default for DynamicsSection {
    fn default() -> Self {
        Self {
            ratios: vec![0.601],
            n_periods: 100,
            substeps: DEFAULT_SUBSTEPS,
            quasienergies: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub output_dir: Option<PathBuf>,
    /// Reserved; every pipeline is deterministic.
    #[serde(default)]
    pub seed: u64,
    pub chain: Option<SpinChainParams>,
    pub oscillator: Option<OscillatorParams>,
    #[serde(default)]
    pub freezing: FreezingOptions,
    #[serde(default)]
    pub flow: FlowConfig,
    #[serde(default)]
    pub scan: ScanSection,
    #[serde(default)]
    pub dynamics: DynamicsSection,
}

impl ExperimentConfig {
    pub fn chain(&self) -> Result<SpinChainParams> {
        let c = self.chain.ok_or_else(|| anyhow!("missing [chain] section"))?;
        c.validate()?;
        Ok(c)
    }

    pub fn oscillator(&self) -> Result<OscillatorParams> {
        let o = self.oscillator.ok_or_else(|| anyhow!("missing [oscillator] section"))?;
        o.validate()?;
        Ok(o)
    }

    pub fn ratios(&self) -> Result<Vec<f64>> {
        self.scan
            .ratios
            .as_ref()
            .ok_or_else(|| anyhow!("missing scan.ratios"))?
            .values()
            .context("scan.ratios")
    }

    pub fn omegas(&self) -> Result<Vec<f64>> {
        self.scan
            .omegas
            .as_ref()
            .ok_or_else(|| anyhow!("missing scan.omegas"))?
            .values()
            .context("scan.omegas")
    }

    pub fn sizes(&self) -> Result<Vec<usize>> {
        match &self.scan.sizes {
            None => Ok(vec![self.chain()?.length]),
            Some(s) if s.is_empty() => bail!("scan.sizes is empty"),
            Some(s) => Ok(s.clone()),
        }
    }
}

/// Built-in defaults for each subcommand.
pub fn default_config(command: &str) -> &'static str {
    match command {
        "oscillator" => include_str!("../configs/oscillator.toml"),
        "scan-freezing" => include_str!("../configs/scan-freezing.toml"),
        "frequency-scaling" => include_str!("../configs/frequency-scaling.toml"),
        "thermalize" => include_str!("../configs/thermalize.toml"),
        "dynamics" => include_str!("../configs/dynamics.toml"),
        _ => "",
    }
}

fn parse_value(raw: &str) -> Value {
    match format!("v = {raw}").parse::<Table>() {
        Ok(mut t) => t.remove("v").expect("key just written"),
        Err(_) => Value::String(raw.to_owned()),
    }
}

/// Sets `path = value` in `doc`, creating intermediate tables.
pub fn apply_override(doc: &mut Table, spec: &str) -> Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| anyhow!("override `{spec}` is not KEY=VALUE"))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        bail!("override key `{path}` has an empty segment");
    }
    let (last, parents) = keys.split_last().expect("split yields at least one key");
    let mut table = doc;
    for k in parents {
        let entry = table
            .entry(k.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| anyhow!("override `{path}`: `{k}` is not a table"))?;
    }
    table.insert(last.to_string(), parse_value(raw.trim()));
    Ok(())
}

/// Loads the config for `command` from `path` (or the built-in default) and
/// applies overrides in order.
pub fn load(command: &str, path: Option<&Path>, overrides: &[String]) -> Result<ExperimentConfig> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        None => default_config(command).to_owned(),
    };
    let mut doc: Table = text.parse().context("parsing config")?;
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    Value::Table(doc).try_into().context("invalid config")
}
