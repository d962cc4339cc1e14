//! Configuration files and the validated simulation model.
//!
//! The main config is TOML. It points at a region table, a CSV file with the
//! columns `region_id, xA_0, xK_0, xL_0, xL_a, xdelta_A, xg_A, xl_g, xsigma_0`
//! and optional per-region `damage_a1, damage_a2, damage_a3` overrides.
//!
//! Region carbon intensities are read as GtC per unit of production per
//! year, so emissions enter the carbon cycle without further conversion.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::climate::{ClimateParams, ClimateState};
use crate::econ::{DamageCoefficients, GlobalEconParams, RegionParams};
use crate::error::{Error, Result};
use crate::experiments::SubsetRegions;
use crate::policy::TrainBudget;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// The shipped 27-region calibration.
pub const DEFAULT_REGION_TABLE: &str = include_str!("../data/regions_27.csv");

pub const REGION_COLUMNS: [&str; 9] = [
    "region_id",
    "xA_0",
    "xK_0",
    "xL_0",
    "xL_a",
    "xdelta_A",
    "xg_A",
    "xl_g",
    "xsigma_0",
];
pub const DAMAGE_COLUMNS: [&str; 3] = ["damage_a1", "damage_a2", "damage_a3"];

/// Read a region table, filling absent damage columns from `defaults`.
pub fn parse_region_table<R: Read>(
    reader: R,
    source: &Path,
    defaults: &DamageCoefficients,
) -> Result<Vec<RegionParams>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse {
            path: source.to_path_buf(),
            reason: e.to_string(),
        })?
        .clone();

    let mut index = [usize::MAX; 9];
    let mut damage_index = [None; 3];
    for (col, name) in headers.iter().enumerate() {
        if let Some(k) = REGION_COLUMNS.iter().position(|c| *c == name) {
            if index[k] != usize::MAX {
                return Err(table_error(0, name, "duplicate column"));
            }
            index[k] = col;
        } else if let Some(k) = DAMAGE_COLUMNS.iter().position(|c| *c == name) {
            damage_index[k] = Some(col);
        } else {
            return Err(table_error(0, name, "unknown column"));
        }
    }
    if let Some(k) = index.iter().position(|i| *i == usize::MAX) {
        return Err(table_error(0, REGION_COLUMNS[k], "missing column"));
    }

    let mut regions: Vec<RegionParams> = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let row = row + 1;
        let record = record.map_err(|e| Error::Parse {
            path: source.to_path_buf(),
            reason: format!("row {row}: {e}"),
        })?;
        let cell = |k: usize| record.get(index[k]).unwrap_or("");
        let number = |k: usize| -> Result<f64> {
            let raw = cell(k);
            raw.parse::<f64>()
                .map_err(|_| table_error(row, REGION_COLUMNS[k], format!("`{raw}` is not a number")))
        };
        let id: usize = cell(0)
            .parse()
            .map_err(|_| table_error(row, "region_id", format!("`{}` is not a region index", cell(0))))?;
        if regions.iter().any(|r| r.id == id) {
            return Err(table_error(row, "region_id", format!("duplicate region_id {id}")));
        }
        let mut damage = *defaults;
        for (k, slot) in [&mut damage.a1, &mut damage.a2, &mut damage.a3].into_iter().enumerate() {
            if let Some(col) = damage_index[k] {
                let raw = record.get(col).unwrap_or("");
                if !raw.is_empty() {
                    *slot = raw
                        .parse()
                        .map_err(|_| table_error(row, DAMAGE_COLUMNS[k], format!("`{raw}` is not a number")))?;
                }
            }
        }
        let params = RegionParams {
            id,
            a0: number(1)?,
            k0: number(2)?,
            l0: number(3)?,
            l_a: number(4)?,
            delta_a: number(5)?,
            g_a: number(6)?,
            l_g: number(7)?,
            sigma0: number(8)?,
            damage,
        };
        params.validate()?;
        regions.push(params);
    }
    regions.sort_by_key(|r| r.id);
    for (k, r) in regions.iter().enumerate() {
        if r.id != k {
            return Err(Error::config(
                "region_id",
                Some(r.id),
                format!("region ids must be 0..{} without gaps", regions.len()),
            ));
        }
    }
    Ok(regions)
}

fn table_error(row: usize, column: &str, reason: impl Into<String>) -> Error {
    Error::RegionTable {
        row,
        column: column.to_string(),
        reason: reason.into(),
    }
}

/// Load a region table with the default damage coefficients.
pub fn load_region_config(path: impl AsRef<Path>) -> Result<Vec<RegionParams>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_region_table(file, path, &DamageCoefficients::default())
}

pub fn write_region_table<W: Write>(regions: &[RegionParams], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let to_err = |e: csv::Error| Error::InvalidArgument(format!("writing region table: {e}"));
    let header: Vec<&str> = REGION_COLUMNS.iter().chain(DAMAGE_COLUMNS.iter()).copied().collect();
    w.write_record(&header).map_err(to_err)?;
    for r in regions {
        let row = [
            r.id.to_string(),
            r.a0.to_string(),
            r.k0.to_string(),
            r.l0.to_string(),
            r.l_a.to_string(),
            r.delta_a.to_string(),
            r.g_a.to_string(),
            r.l_g.to_string(),
            r.sigma0.to_string(),
            r.damage.a1.to_string(),
            r.damage.a2.to_string(),
            r.damage.a3.to_string(),
        ];
        w.write_record(&row).map_err(to_err)?;
    }
    w.flush()
        .map_err(|e| Error::InvalidArgument(format!("writing region table: {e}")))
}

pub fn default_regions() -> Vec<RegionParams> {
    parse_region_table(
        DEFAULT_REGION_TABLE.as_bytes(),
        Path::new("<embedded regions_27.csv>"),
        &DamageCoefficients::default(),
    )
    .expect("embedded region table is valid")
}

/// Validated inputs of a simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    /// Economic constants with `for_pref` resolved to one weight per region.
    pub econ: GlobalEconParams,
    pub climate: ClimateParams,
    pub initial_climate: ClimateState,
    pub regions: Vec<RegionParams>,
}

impl Model {
    pub fn new(
        econ: GlobalEconParams,
        climate: ClimateParams,
        initial_climate: ClimateState,
        regions: Vec<RegionParams>,
    ) -> Result<Self> {
        let n = regions.len();
        if n == 0 {
            return Err(Error::config("regions", None, "at least one region is required"));
        }
        econ.validate(n)?;
        climate.validate()?;
        initial_climate.validate()?;
        for (k, r) in regions.iter().enumerate() {
            if r.id != k {
                return Err(Error::config(
                    "region_id",
                    Some(r.id),
                    format!("expected id {k} at position {k}"),
                ));
            }
            r.validate()?;
        }
        let for_pref = econ.resolved_for_pref(n);
        Ok(Self {
            econ: GlobalEconParams { for_pref, ..econ },
            climate,
            initial_climate,
            regions,
        })
    }

    /// Default constants with the shipped 27-region table.
    pub fn default_27() -> Self {
        Self::with_regions(default_regions()).expect("default model is valid")
    }

    /// Default constants with the given regions.
    pub fn with_regions(regions: Vec<RegionParams>) -> Result<Self> {
        Self::new(
            GlobalEconParams::default(),
            ClimateParams::default(),
            ClimateState::default(),
            regions,
        )
    }

    /// The first `n` regions of this model. Foreign weights are reset to the
    /// uniform default for the smaller region count.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        if n > self.regions.len() {
            return Err(Error::InvalidArgument(format!(
                "cannot keep {n} of {} regions",
                self.regions.len()
            )));
        }
        let econ = GlobalEconParams {
            for_pref: Vec::new(),
            ..self.econ.clone()
        };
        Self::new(
            econ,
            self.climate.clone(),
            self.initial_climate.clone(),
            self.regions[..n].to_vec(),
        )
    }

    /// Same model with replaced region parameters (ids must stay 0..N-1).
    pub fn with_region_params(&self, regions: Vec<RegionParams>) -> Result<Self> {
        Self::new(
            self.econ.clone(),
            self.climate.clone(),
            self.initial_climate.clone(),
            regions,
        )
    }

    /// `n` regions cycling through the shipped table, for scaling studies.
    pub fn tiled(n: usize) -> Result<Self> {
        let base = default_regions();
        let regions = (0..n)
            .map(|k| RegionParams {
                id: k,
                ..base[k % base.len()].clone()
            })
            .collect();
        Self::with_regions(regions)
    }

    pub fn num_regions(&self) -> usize {
        self.regions.len()
    }

    pub fn num_steps(&self) -> usize {
        self.econ.num_steps
    }

    /// SHA-256 over the canonical JSON form of every model input.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("model serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputPaths {
    pub dir: PathBuf,
}

impl Default for OutputPaths {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
        }
    }
}

/// The main configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub schema_version: u32,
    /// Region table, relative to the config file's directory.
    pub regions_file: PathBuf,
    #[serde(default)]
    pub negotiation_on: bool,
    /// Quantize policy fractions to this many levels.
    #[serde(default)]
    pub quantize_levels: Option<u32>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub econ: GlobalEconParams,
    #[serde(default)]
    pub climate: ClimateParams,
    #[serde(default)]
    pub initial_climate: ClimateState,
    #[serde(default)]
    pub training: TrainBudget,
    #[serde(default)]
    pub experiments: SubsetRegions,
    #[serde(default)]
    pub output: OutputPaths,
    #[serde(skip)]
    pub regions: Vec<RegionParams>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            regions_file: PathBuf::from("regions_27.csv"),
            negotiation_on: false,
            quantize_levels: None,
            seeds: vec![1, 2, 3, 4, 5],
            econ: GlobalEconParams::default(),
            climate: ClimateParams::default(),
            initial_climate: ClimateState::default(),
            training: TrainBudget::default(),
            experiments: SubsetRegions::default(),
            output: OutputPaths::default(),
            regions: default_regions(),
        }
    }
}

impl SimConfig {
    /// Parse config text; the region table is not loaded.
    pub fn from_toml_str(text: &str, source: &Path) -> Result<Self> {
        let cfg: SimConfig = toml::from_str(text).map_err(|e| Error::Parse {
            path: source.to_path_buf(),
            reason: e.to_string(),
        })?;
        if cfg.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::config(
                "schema_version",
                None,
                format!(
                    "unsupported version {} (expected {CONFIG_SCHEMA_VERSION})",
                    cfg.schema_version
                ),
            ));
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::InvalidArgument(format!("serializing config: {e}")))
    }

    /// Load a config file and the region table it references.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text, path)?;
        let table = path.parent().unwrap_or(Path::new(".")).join(&cfg.regions_file);
        let file = std::fs::File::open(&table).map_err(|e| Error::io(&table, e))?;
        cfg.regions = parse_region_table(file, &table, &cfg.econ.damage)?;
        Ok(cfg)
    }

    /// Write the config and its region table side by side.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_toml_string()?).map_err(|e| Error::io(path, e))?;
        let table = path.parent().unwrap_or(Path::new(".")).join(&self.regions_file);
        let file = std::fs::File::create(&table).map_err(|e| Error::io(&table, e))?;
        write_region_table(&self.regions, file)
    }

    pub fn model(&self) -> Result<Model> {
        if self.regions.len() < 2 {
            return Err(Error::config(
                "regions_file",
                None,
                format!("at least 2 regions required, found {}", self.regions.len()),
            ));
        }
        Model::new(
            self.econ.clone(),
            self.climate.clone(),
            self.initial_climate.clone(),
            self.regions.clone(),
        )
    }
}
