//! TOML run configuration.
//!
//! One file may carry any of the sections below; each subcommand reads the
//! sections it needs. Relative dataset paths resolve against the directory
//! holding the config file. `states` is always the total state count `2n`.
//!
//! ```toml
//! [dataset]
//! kind = "csv"              # xor | csv | mnist
//! path = "../data/iris.csv"
//! bits_per_feature = 4
//! train_fraction = 0.8
//!
//! [machine]
//! clauses = 90              # per class, even
//! threshold = 4
//! sensitivity = 1.2
//! states = 200
//! rng = "pcg64"             # or "lfsr:<width>"
//! seed = 42
//! epochs = 100
//! faults = [{ clause = 0, ta = 0, bit = 0, stuck = 1 }]
//!
//! [sweep]
//! clauses = [90]
//! thresholds = [4, 20]
//! sensitivities = [1.2, 18.0]
//! states = 200
//! rng = "pcg64"
//! seed = 1
//! ensembles = 25
//! epochs = 30
//!
//! [campaign]
//! clauses = 4
//! states = 6
//! threshold = 1
//! sensitivity = 3.0
//! clause_grid = [4, 8, 12]
//! state_grid = [6, 8, 10, 12]
//! baseline = true
//! ensembles = 100
//! epochs = 100
//! seed = 7
//! faults = [{ clause = 0, ta = 0, bit = 0, stuck = 1 }]
//!
//! [lfsr]
//! clauses = 140
//! threshold = 11
//! sensitivity = 10.0
//! states = 200
//! widths = [4, 5, 6, 7, 8, 12, 16]
//! regain_width = 7
//! regain_sensitivities = [2.0, 4.0, 6.0, 8.0, 10.0]
//! ensembles = 50
//! epochs = 50
//! seed = 3
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::experiments::{
    DatasetSource, DatasetSpec, FaultCampaignSpec, LfsrStudySpec, SweepSpec,
};
use crate::machine::{PlacedFault, TMConfig};
use crate::rng::{RngKind, RngSpec};

pub const DEFAULT_STATES: u32 = 200;

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub dataset: Option<DatasetSection>,
    pub machine: Option<MachineSection>,
    pub sweep: Option<SweepSection>,
    pub campaign: Option<CampaignSection>,
    pub lfsr: Option<LfsrSection>,
    #[serde(skip)]
    base_dir: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Xor,
    Csv,
    Mnist,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub kind: DatasetKind,
    pub path: Option<PathBuf>,
    pub bits_per_feature: Option<usize>,
    pub train_fraction: Option<f64>,
    pub images: Option<PathBuf>,
    pub labels: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MachineSection {
    pub clauses: usize,
    pub threshold: u32,
    pub sensitivity: f64,
    pub states: Option<u32>,
    pub rng: Option<String>,
    pub seed: Option<u64>,
    pub epochs: usize,
    #[serde(default)]
    pub faults: Vec<PlacedFault>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub clauses: Vec<usize>,
    pub thresholds: Vec<u32>,
    pub sensitivities: Vec<f64>,
    pub states: Option<u32>,
    pub rng: Option<String>,
    pub seed: Option<u64>,
    pub ensembles: usize,
    pub epochs: usize,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignSection {
    pub clauses: usize,
    pub states: u32,
    pub threshold: u32,
    pub sensitivity: f64,
    pub rng: Option<String>,
    #[serde(default)]
    pub clause_grid: Vec<usize>,
    #[serde(default)]
    pub state_grid: Vec<u32>,
    #[serde(default)]
    pub baseline: bool,
    pub ensembles: usize,
    pub epochs: usize,
    pub seed: Option<u64>,
    #[serde(default)]
    pub faults: Vec<PlacedFault>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LfsrSection {
    pub clauses: usize,
    pub threshold: u32,
    pub sensitivity: f64,
    pub states: Option<u32>,
    pub widths: Vec<u32>,
    pub regain_width: Option<u32>,
    #[serde(default)]
    pub regain_sensitivities: Vec<f64>,
    pub ensembles: usize,
    pub epochs: usize,
    pub seed: Option<u64>,
}

fn half_states(states: u32) -> Result<u32> {
    if states < 2 || !states.is_multiple_of(2) {
        return Err(Error::config(format!("states (2n) must be an even number >= 2, got {states}")));
    }
    Ok(states / 2)
}

fn rng_kind(text: Option<&str>) -> Result<RngKind> {
    text.map_or(Ok(RngKind::Pcg64), str::parse)
        .map_err(|e| Error::config(e.to_string()))
}

fn missing(section: &str) -> Error {
    Error::config(format!("config has no [{section}] section"))
}

impl ConfigFile {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: ConfigFile =
            toml::from_str(text).map_err(|e| Error::config(format!("invalid config: {e}")))?;
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &dir)
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn dataset_spec(&self) -> Result<DatasetSpec> {
        let d = self.dataset.as_ref().ok_or_else(|| missing("dataset"))?;
        let need = |v: &Option<PathBuf>, key: &str| {
            v.as_ref()
                .map(|p| self.resolve(p))
                .ok_or_else(|| Error::config(format!("dataset kind needs `{key}`")))
        };
        let source = match d.kind {
            DatasetKind::Xor => DatasetSource::Xor,
            DatasetKind::Csv => DatasetSource::Csv {
                path: need(&d.path, "path")?,
                bits_per_feature: d
                    .bits_per_feature
                    .ok_or_else(|| Error::config("csv dataset needs `bits_per_feature`"))?,
            },
            DatasetKind::Mnist => DatasetSource::Mnist {
                images: need(&d.images, "images")?,
                labels: need(&d.labels, "labels")?,
            },
        };
        let train_fraction = d.train_fraction.unwrap_or(0.8);
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::config(format!("train_fraction must be in (0, 1), got {train_fraction}")));
        }
        Ok(DatasetSpec {
            source,
            train_fraction,
        })
    }

    /// Machine config for the given data shape. `seed` and `rng` override
    /// the file when present.
    pub fn train_config(
        &self,
        inputs: usize,
        classes: usize,
        seed: Option<u64>,
        rng: Option<RngKind>,
    ) -> Result<TMConfig> {
        let m = self.machine.as_ref().ok_or_else(|| missing("machine"))?;
        let kind = match rng {
            Some(k) => k,
            None => rng_kind(m.rng.as_deref())?,
        };
        let seed = seed.or(m.seed).unwrap_or(0);
        let config = TMConfig {
            inputs,
            classes,
            clauses_per_class: m.clauses,
            half_states: half_states(m.states.unwrap_or(DEFAULT_STATES))?,
            threshold: m.threshold,
            sensitivity: m.sensitivity,
            rng: RngSpec::new(kind, 1)?.with_seed(seed),
            epochs: m.epochs,
            faults: m.faults.clone(),
        };
        config.validate()?;
        Ok(config)
    }

    /// Checks the `[machine]` section without knowing the data shape;
    /// fault positions are checked once the shape is known.
    pub fn check_machine(&self, rng: Option<RngKind>) -> Result<()> {
        let m = self.machine.as_ref().ok_or_else(|| missing("machine"))?;
        let mut probe = self.clone();
        if let Some(pm) = probe.machine.as_mut() {
            pm.faults.clear();
        }
        let config = probe.train_config(1, 1, None, rng)?;
        for f in &m.faults {
            f.fault.validate(config.half_states)?;
        }
        Ok(())
    }

    pub fn sweep_spec(&self, seed: Option<u64>, rng: Option<RngKind>) -> Result<SweepSpec> {
        let s = self.sweep.as_ref().ok_or_else(|| missing("sweep"))?;
        let spec = SweepSpec {
            dataset: self.dataset_spec()?,
            clauses: s.clauses.clone(),
            thresholds: s.thresholds.clone(),
            sensitivities: s.sensitivities.clone(),
            half_states: half_states(s.states.unwrap_or(DEFAULT_STATES))?,
            rng: match rng {
                Some(k) => k,
                None => rng_kind(s.rng.as_deref())?,
            },
            seed: seed.or(s.seed).unwrap_or(0),
            ensembles: s.ensembles,
            epochs: s.epochs,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn fault_campaign_spec(&self, seed: Option<u64>, rng: Option<RngKind>) -> Result<FaultCampaignSpec> {
        let c = self.campaign.as_ref().ok_or_else(|| missing("campaign"))?;
        let state_grid = c
            .state_grid
            .iter()
            .map(|&s| half_states(s))
            .collect::<Result<Vec<_>>>()?;
        if c.ensembles == 0 {
            return Err(Error::config("ensembles must be at least 1"));
        }
        Ok(FaultCampaignSpec {
            threshold: c.threshold,
            sensitivity: c.sensitivity,
            rng: match rng {
                Some(k) => k,
                None => rng_kind(c.rng.as_deref())?,
            },
            base_clauses: c.clauses,
            base_half_states: half_states(c.states)?,
            clause_grid: c.clause_grid.clone(),
            state_grid,
            faults: c.faults.clone(),
            baseline: c.baseline,
            ensembles: c.ensembles,
            epochs: c.epochs,
            seed: seed.or(c.seed).unwrap_or(0),
        })
    }

    pub fn lfsr_study_spec(&self, seed: Option<u64>) -> Result<LfsrStudySpec> {
        let l = self.lfsr.as_ref().ok_or_else(|| missing("lfsr"))?;
        if l.ensembles == 0 {
            return Err(Error::config("ensembles must be at least 1"));
        }
        let spec = LfsrStudySpec {
            dataset: self.dataset_spec()?,
            clauses: l.clauses,
            threshold: l.threshold,
            sensitivity: l.sensitivity,
            half_states: half_states(l.states.unwrap_or(DEFAULT_STATES))?,
            widths: l.widths.clone(),
            regain_width: l.regain_width,
            regain_sensitivities: l.regain_sensitivities.clone(),
            ensembles: l.ensembles,
            epochs: l.epochs,
            seed: seed.or(l.seed).unwrap_or(0),
        };
        spec.cells()?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::automata::FaultSpec;

    const FULL: &str = r#"
[dataset]
kind = "csv"
path = "iris.csv"
bits_per_feature = 4

[machine]
clauses = 90
threshold = 4
sensitivity = 1.2
rng = "lfsr:8"
seed = 42
epochs = 100
faults = [{ clause = 1, ta = 2, bit = 0, stuck = 1 }]

[sweep]
clauses = [10, 90]
thresholds = [4]
sensitivities = [1.2, 18.0]
ensembles = 3
epochs = 5

[campaign]
clauses = 4
states = 6
threshold = 1
sensitivity = 3.0
clause_grid = [4, 8]
state_grid = [6, 8]
ensembles = 2
epochs = 10
faults = [{ clause = 0, ta = 0, bit = 0, stuck = 1 }]

[lfsr]
clauses = 140
threshold = 11
sensitivity = 10.0
widths = [4, 8]
regain_width = 7
regain_sensitivities = [2.0]
ensembles = 2
epochs = 5
"#;

    fn full() -> ConfigFile {
        ConfigFile::parse(FULL, Path::new("/cfg")).unwrap()
    }

    #[test]
    fn sections_parse() {
        let c = full();
        let d = c.dataset_spec().unwrap();
        assert_eq!(
            d.source,
            DatasetSource::Csv {
                path: PathBuf::from("/cfg/iris.csv"),
                bits_per_feature: 4
            }
        );
        let m = c.train_config(16, 3, None, None).unwrap();
        assert_eq!(m.half_states, 100);
        assert_eq!(m.rng.kind(), RngKind::Lfsr { width: 8 });
        assert_eq!(m.rng.seed(), 42);
        assert_eq!(
            m.faults,
            vec![PlacedFault {
                clause: 1,
                ta: 2,
                fault: FaultSpec::stuck_at_1(0)
            }]
        );
        let s = c.sweep_spec(Some(9), None).unwrap();
        assert_eq!((s.seed, s.cells().len()), (9, 4));
        let f = c.fault_campaign_spec(None, None).unwrap();
        assert_eq!(f.state_grid, vec![3, 4]);
        assert_eq!(f.base_half_states, 3);
        let l = c.lfsr_study_spec(None).unwrap();
        assert_eq!(l.cells().unwrap().len(), 4);
    }

    #[test]
    fn overrides() {
        let m = full().train_config(16, 3, Some(7), Some(RngKind::Pcg64)).unwrap();
        assert_eq!(m.rng.seed(), 7);
        assert_eq!(m.rng.kind(), RngKind::Pcg64);
    }

    #[test]
    fn rejects_bad_input() {
        let base = Path::new(".");
        assert!(matches!(ConfigFile::parse("[machine]\nbogus = 1", base), Err(Error::Config(_))));
        assert!(ConfigFile::parse("not toml [", base).is_err());
        let odd = "[machine]\nclauses = 4\nthreshold = 1\nsensitivity = 3.0\nstates = 7\nepochs = 1\n";
        let c = ConfigFile::parse(odd, base).unwrap();
        assert!(c.train_config(2, 2, None, None).is_err());
        let bad_rng = "[machine]\nclauses = 4\nthreshold = 1\nsensitivity = 3.0\nrng = \"mt\"\nepochs = 1\n";
        let c = ConfigFile::parse(bad_rng, base).unwrap();
        assert!(matches!(c.train_config(2, 2, None, None), Err(Error::Config(_))));
        assert!(matches!(ConfigFile::default().sweep_spec(None, None), Err(Error::Config(_))));
        let frac = "[dataset]\nkind = \"xor\"\ntrain_fraction = 1.5\n";
        assert!(ConfigFile::parse(frac, base).unwrap().dataset_spec().is_err());
    }

    #[test]
    fn machine_check_defers_fault_indices() {
        let text = "[machine]\nclauses = 4\nthreshold = 1\nsensitivity = 3.0\nstates = 6\nepochs = 1\n\
faults = [{ clause = 3, ta = 3, bit = 0, stuck = 1 }]\n";
        let c = ConfigFile::parse(text, Path::new(".")).unwrap();
        assert!(c.check_machine(None).is_ok());
        let text = "[machine]\nclauses = 3\nthreshold = 1\nsensitivity = 3.0\nepochs = 1\n";
        let c = ConfigFile::parse(text, Path::new(".")).unwrap();
        assert!(c.check_machine(None).is_err());
    }
}
