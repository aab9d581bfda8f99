//! Experiment configuration: a TOML file with dotted section keys
//! (`bc.P = 10`), overridable key by key from the command line.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channels::{BcParams, MacParams};
use crate::error::{usage, Error, Result};
use crate::lattice::LatticeKind;
use crate::lfc::LfcScheme;
use crate::mllfc::MllfcConfig;
use crate::ol::{constellations_for_rates, ol_build, ol_fixed_point};
use crate::regions::{RatePoint, RegionGrids};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BcSection {
    #[serde(rename = "P")]
    pub power: f64,
    pub sigma1_sq: f64,
    pub sigma2_sq: f64,
    pub zeta: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MacSection {
    #[serde(rename = "P")]
    pub power: f64,
    pub sigma_sq: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MllfcSection {
    pub lattice: LatticeKind,
    pub n_lattice: usize,
    pub beta: f64,
}

/// Inner OL scheme. Message sizes are derived from the transformed
/// fixed-point rates shrunk by `margin` unless `m1`/`m2` are given.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OlSection {
    pub nc: usize,
    pub lambda: f64,
    pub margin: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m1: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m2: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSweep {
    /// Volume-to-noise ratios `L` to tabulate.
    pub vnr: Vec<f64>,
    pub samples: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    /// Number of leading trials whose transcripts are written as CSV.
    pub transcripts: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub trials: u64,
    /// Index of the first trial, for splitting a run across invocations.
    pub first_trial: u64,
    pub out: PathBuf,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
    pub bc: BcSection,
    pub mac: MacSection,
    pub mllfc: MllfcSection,
    pub ol: OlSection,
    pub grids: RegionGrids,
    pub lattice_sweep: LatticeSweep,
    pub simulate: SimulateSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            trials: 1000,
            first_trial: 0,
            out: PathBuf::from("out"),
            threads: 0,
            bc: BcSection {
                power: 10.0,
                sigma1_sq: 1.0,
                sigma2_sq: 1.0,
                zeta: 0.0,
            },
            mac: MacSection {
                power: 100.0,
                sigma_sq: 1.0,
            },
            mllfc: MllfcSection {
                lattice: LatticeKind::E8,
                n_lattice: 8,
                beta: 0.5,
            },
            ol: OlSection {
                nc: 40,
                lambda: 0.5,
                margin: 0.15,
                m1: None,
                m2: None,
            },
            grids: RegionGrids::default(),
            lattice_sweep: LatticeSweep {
                vnr: vec![0.5, 1.0, 2.0, 4.0, 8.0, 16.0],
                samples: 100_000,
            },
            simulate: SimulateSection { transcripts: 1 },
        }
    }
}

/// Splits `key=value`; the value is read as a TOML literal, falling back to
/// a bare string.
fn parse_override(item: &str) -> Result<(Vec<String>, toml::Value)> {
    let Some((key, raw)) = item.split_once('=') else {
        return usage(format!("override `{item}` is not of the form key=value"));
    };
    let path: Vec<String> = key.trim().split('.').map(str::to_owned).collect();
    if path.iter().any(String::is_empty) {
        return usage(format!("override key `{key}` has an empty component"));
    }
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_owned()));
    Ok((path, value))
}

fn set_path(table: &mut toml::Table, path: &[String], value: toml::Value) -> Result<()> {
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut t = table;
    for p in parents {
        let entry = t
            .entry(p.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        t = match entry {
            toml::Value::Table(inner) => inner,
            _ => return usage(format!("`{}` is not a section", path.join("."))),
        };
    }
    t.insert(last.clone(), value);
    Ok(())
}

/// Merges `src` over `dst`, section by section.
fn merge_tables(dst: &mut toml::Table, src: toml::Table) {
    for (k, v) in src {
        match (dst.get_mut(&k), v) {
            (Some(toml::Value::Table(d)), toml::Value::Table(s)) => merge_tables(d, s),
            (_, v) => {
                dst.insert(k, v);
            }
        }
    }
}

impl ExperimentConfig {
    /// Parses `text` on top of the defaults, then applies `overrides`.
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table = toml::Table::try_from(Self::default())
            .map_err(|e| Error::Internal(format!("default config does not serialise: {e}")))?;
        let file: toml::Table = toml::from_str(text).map_err(|e| Error::Usage(format!("config: {e}")))?;
        merge_tables(&mut table, file);
        for item in overrides {
            let (path, value) = parse_override(item)?;
            set_path(&mut table, &path, value)?;
        }
        let cfg: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Usage(format!("config: {}", e.message())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path` (or starts from the defaults) and applies `overrides`.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|e| Error::Usage(format!("cannot read config {}: {e}", p.display())))?,
            None => String::new(),
        };
        Self::from_toml_str(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        let field = |name: &str, e: Error| match e {
            Error::Usage(m) | Error::Precondition(m) => Error::Usage(format!("{name}: {m}")),
            other => other,
        };
        if self.trials == 0 {
            return usage("trials: must be >= 1");
        }
        self.bc().map_err(|e| field("bc", e))?;
        self.mac().map_err(|e| field("mac", e))?;
        if self.ol.nc < 3 {
            return usage(format!("ol.nc: OL needs at least 3 rounds, got {}", self.ol.nc));
        }
        if !(0.0..=1.0).contains(&self.ol.lambda) {
            return usage(format!("ol.lambda: must lie in [0, 1], got {}", self.ol.lambda));
        }
        if !(self.ol.margin < 1.0 && self.ol.margin.is_finite()) {
            return usage(format!(
                "ol.margin: must be finite and < 1, got {}",
                self.ol.margin
            ));
        }
        if self.mllfc.n_lattice == 0 {
            return usage("mllfc.n_lattice: must be >= 1");
        }
        if self.mllfc.lattice == LatticeKind::E8 && self.mllfc.n_lattice != 8 {
            return usage(format!(
                "mllfc.n_lattice: the E8 lattice needs n_lattice = 8, got {}",
                self.mllfc.n_lattice
            ));
        }
        self.mllfc_config().map_err(|e| field("mllfc", e))?;
        let g = self.grids;
        if [g.alpha, g.rate, g.split, g.lambda, g.compare]
            .iter()
            .any(|&n| n < 2)
        {
            return usage("grids: every grid needs at least 2 points");
        }
        if self.lattice_sweep.samples == 0 {
            return usage("lattice_sweep.samples: must be >= 1");
        }
        if self
            .lattice_sweep
            .vnr
            .iter()
            .any(|&l| !(l > 0.0 && l.is_finite()))
        {
            return usage("lattice_sweep.vnr: every entry must be positive and finite");
        }
        Ok(())
    }

    pub fn bc(&self) -> Result<BcParams> {
        BcParams::new(self.bc.power, self.bc.sigma1_sq, self.bc.sigma2_sq, self.bc.zeta)
    }

    pub fn mac(&self) -> Result<MacParams> {
        MacParams::new(self.mac.power, self.mac.sigma_sq)
    }

    pub fn mllfc_config(&self) -> Result<MllfcConfig> {
        let (bc, mac) = (self.bc()?, self.mac()?);
        let cfg = MllfcConfig::new(
            self.mllfc.lattice,
            self.mllfc.n_lattice,
            self.ol.nc,
            self.mllfc.beta,
            &bc,
            &mac,
        )?;
        cfg.equivalent_channel(&bc, &mac)?;
        Ok(cfg)
    }

    /// Forward channel the inner scheme is designed for.
    pub fn equivalent_channel(&self) -> Result<BcParams> {
        self.mllfc_config()?.equivalent_channel(&self.bc()?, &self.mac()?)
    }

    /// Rate pair carried by the inner scheme.
    pub fn target_rates(&self) -> Result<RatePoint> {
        let nc = self.ol.nc as f64;
        if let (Some(m1), Some(m2)) = (self.ol.m1, self.ol.m2) {
            return Ok(RatePoint::new((m1 as f64).log2() / nc, (m2 as f64).log2() / nc));
        }
        let fp = ol_fixed_point(&self.equivalent_channel()?, self.ol.lambda)?;
        let k = 1.0 - self.ol.margin;
        Ok(RatePoint::new(fp.r1 * k, fp.r2 * k))
    }

    /// Inner OL scheme built for the equivalent channel.
    pub fn inner_scheme(&self) -> Result<LfcScheme> {
        let eq = self.equivalent_channel()?;
        let [c1, c2] = constellations_for_rates(self.target_rates()?, self.ol.nc)?;
        let m1 = self.ol.m1.unwrap_or(c1.size());
        let m2 = self.ol.m2.unwrap_or(c2.size());
        ol_build(&eq, self.ol.nc, m1, m2, self.ol.lambda)
    }
}
