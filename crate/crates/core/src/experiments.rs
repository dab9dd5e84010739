//! Reproduction harness: hyperparameter sweeps, fault campaigns, LFSR width
//! studies and event-count energy proxies.
//!
//! Every campaign trains `ensembles` machines per grid cell. Ensemble member
//! `e` gets its split seed and machine seed from the campaign seed, so the
//! same member sees the same split and seed in every cell (a paired design).
//! Cells and members run on the current rayon pool; results are merged in
//! grid order, so output does not depend on thread count.

use std::fmt::Write as _;
use std::path::PathBuf;

use rayon::prelude::*;

use crate::datasets::{self, BooleanizedDataset, RawTable, SplitSpec};
use crate::error::{Error, Result};
use crate::machine::{EventCounters, Machine, PlacedFault, TMConfig};
use crate::rng::{derive_seed, RngKind, RngSpec};
use crate::trace::convergence_epoch;

pub const DOMAIN_ENSEMBLE: u64 = 0x656e;
pub const DOMAIN_SPLIT: u64 = 0x7370;

/// Stability window used for convergence epochs.
pub const CONVERGENCE_WINDOW: usize = 5;

#[derive(Clone, Debug, PartialEq)]
pub enum DatasetSource {
    Xor,
    Csv { path: PathBuf, bits_per_feature: usize },
    Mnist { images: PathBuf, labels: PathBuf },
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSpec {
    pub source: DatasetSource,
    pub train_fraction: f64,
}

impl DatasetSpec {
    pub fn xor() -> Self {
        DatasetSpec {
            source: DatasetSource::Xor,
            train_fraction: 0.8,
        }
    }

    pub fn csv(path: impl Into<PathBuf>, bits_per_feature: usize) -> Self {
        DatasetSpec {
            source: DatasetSource::Csv {
                path: path.into(),
                bits_per_feature,
            },
            train_fraction: 0.8,
        }
    }

    pub fn load(&self) -> Result<LoadedData> {
        match &self.source {
            DatasetSource::Xor => Ok(LoadedData::Fixed(datasets::xor_dataset())),
            DatasetSource::Csv {
                path,
                bits_per_feature,
            } => {
                if *bits_per_feature == 0 {
                    return Err(Error::config("bits_per_feature must be at least 1"));
                }
                let table = datasets::load_csv(path)?;
                if table.len() < 2 {
                    return Err(Error::data(format!("{} has fewer than two rows", path.display())));
                }
                Ok(LoadedData::Table {
                    table,
                    bits_per_feature: *bits_per_feature,
                    train_fraction: self.train_fraction,
                })
            }
            DatasetSource::Mnist { images, labels } => Ok(LoadedData::Split {
                data: datasets::load_mnist(images, labels)?,
                train_fraction: self.train_fraction,
            }),
        }
    }
}

/// A dataset in memory, ready to be split per ensemble member.
#[derive(Clone, Debug)]
pub enum LoadedData {
    /// Train and evaluate on the same points (XOR).
    Fixed(BooleanizedDataset),
    /// Raw features; thresholds are fitted on each training split.
    Table {
        table: RawTable,
        bits_per_feature: usize,
        train_fraction: f64,
    },
    /// Already boolean; only split.
    Split {
        data: BooleanizedDataset,
        train_fraction: f64,
    },
}

/// A train/test pair.
#[derive(Clone, Debug)]
pub struct Partition {
    pub train: BooleanizedDataset,
    pub test: BooleanizedDataset,
}

impl LoadedData {
    pub fn partition(&self, shuffle_seed: u64) -> Result<Partition> {
        match self {
            LoadedData::Fixed(d) => Ok(Partition {
                train: d.clone(),
                test: d.clone(),
            }),
            LoadedData::Table {
                table,
                bits_per_feature,
                train_fraction,
            } => {
                let spec = SplitSpec {
                    train_fraction: *train_fraction,
                    shuffle_seed,
                };
                let p = datasets::split_and_booleanize(table, *bits_per_feature, &spec)?;
                Ok(Partition {
                    train: p.train,
                    test: p.test,
                })
            }
            LoadedData::Split {
                data,
                train_fraction,
            } => {
                let spec = SplitSpec {
                    train_fraction: *train_fraction,
                    shuffle_seed,
                };
                let (train, test) = datasets::split(data, &spec)?;
                Ok(Partition { train, test })
            }
        }
    }

    pub fn classes(&self) -> usize {
        match self {
            LoadedData::Fixed(d) | LoadedData::Split { data: d, .. } => d.classes(),
            LoadedData::Table { table, .. } => table.classes,
        }
    }

    pub fn inputs(&self) -> usize {
        match self {
            LoadedData::Fixed(d) | LoadedData::Split { data: d, .. } => d.inputs(),
            LoadedData::Table {
                table,
                bits_per_feature,
                ..
            } => table.features() * bits_per_feature,
        }
    }
}

/// Machine hyperparameters shared by every member of a cell.
#[derive(Clone, Debug, PartialEq)]
pub struct CellParams {
    pub clauses: usize,
    pub threshold: u32,
    pub sensitivity: f64,
    pub half_states: u32,
    pub rng: RngKind,
    pub faults: Vec<PlacedFault>,
    /// Free-form tag shown in reports (fault label, study role).
    pub label: String,
}

impl CellParams {
    fn config(&self, inputs: usize, classes: usize, seed: u64, epochs: usize) -> Result<TMConfig> {
        let rng = RngSpec::new(self.rng, 1)?.with_seed(seed);
        let config = TMConfig {
            inputs,
            classes,
            clauses_per_class: self.clauses,
            half_states: self.half_states,
            threshold: self.threshold,
            sensitivity: self.sensitivity,
            rng,
            epochs,
            faults: self.faults.clone(),
        };
        config.validate()?;
        Ok(config)
    }
}

/// One trained ensemble member.
#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome {
    pub member: usize,
    pub train_accuracy: Vec<f64>,
    pub test_accuracy: Vec<f64>,
    pub events: Vec<EventCounters>,
    pub convergence_epoch: Option<usize>,
}

impl RunOutcome {
    pub fn final_test(&self) -> f64 {
        self.test_accuracy.last().copied().unwrap_or(0.0)
    }

    pub fn final_train(&self) -> f64 {
        self.train_accuracy.last().copied().unwrap_or(0.0)
    }

    pub fn max_train(&self) -> f64 {
        self.train_accuracy.iter().copied().fold(0.0, f64::max)
    }

    /// First epoch (1-based) at which training accuracy hit its maximum.
    pub fn epochs_to_max_train(&self) -> Option<usize> {
        let m = self.max_train();
        self.train_accuracy.iter().position(|&a| a >= m).map(|i| i + 1)
    }

    /// Best test accuracy over the first `epochs` epochs.
    pub fn best_test_within(&self, epochs: usize) -> f64 {
        self.test_accuracy.iter().take(epochs).copied().fold(0.0, f64::max)
    }

    pub fn total_events(&self) -> EventCounters {
        let mut c = EventCounters::default();
        for e in &self.events {
            c.merge(e);
        }
        c
    }
}

/// Trains one machine and records per-epoch accuracy, events and action
/// vector changes.
pub fn train_member(
    params: &CellParams,
    data: &LoadedData,
    campaign_seed: u64,
    member: usize,
    epochs: usize,
) -> Result<RunOutcome> {
    let part = data.partition(derive_seed(campaign_seed, DOMAIN_SPLIT, member as u64))?;
    let seed = derive_seed(campaign_seed, DOMAIN_ENSEMBLE, member as u64);
    let config = params.config(part.train.inputs(), data.classes(), seed, epochs)?;
    let mut machine = Machine::new(config)?;
    let mut out = RunOutcome {
        member,
        train_accuracy: Vec::with_capacity(epochs),
        test_accuracy: Vec::with_capacity(epochs),
        events: Vec::with_capacity(epochs),
        convergence_epoch: None,
    };
    let mut changed = Vec::with_capacity(epochs);
    let mut actions = machine.action_vector();
    for _ in 0..epochs {
        let report = machine.fit(&part.train, Some(&part.test), 1)?;
        let stats = &report.epochs[0];
        out.train_accuracy.push(stats.train_accuracy);
        out.test_accuracy.push(stats.test_accuracy.unwrap_or(0.0));
        out.events.push(stats.counters);
        let now = machine.action_vector();
        changed.push(now != actions);
        actions = now;
    }
    out.convergence_epoch = convergence_epoch(&changed, &out.train_accuracy, CONVERGENCE_WINDOW);
    Ok(out)
}

/// All members of one grid cell.
#[derive(Clone, Debug, PartialEq)]
pub struct CellResult {
    pub params: CellParams,
    pub epochs: usize,
    pub runs: Vec<RunOutcome>,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn median(mut xs: Vec<f64>) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(f64::total_cmp);
    let mid = xs.len() / 2;
    Some(if xs.len() % 2 == 1 {
        xs[mid]
    } else {
        (xs[mid - 1] + xs[mid]) / 2.0
    })
}

impl CellResult {
    pub fn mean_test(&self) -> f64 {
        mean(self.runs.iter().map(RunOutcome::final_test))
    }

    /// Sample standard deviation of final test accuracy.
    pub fn std_test(&self) -> f64 {
        let n = self.runs.len();
        if n < 2 {
            return 0.0;
        }
        let m = self.mean_test();
        let ss: f64 = self.runs.iter().map(|r| (r.final_test() - m).powi(2)).sum();
        (ss / (n - 1) as f64).sqrt()
    }

    pub fn mean_train(&self) -> f64 {
        mean(self.runs.iter().map(RunOutcome::final_train))
    }

    /// Maximum training accuracy over all members and epochs.
    pub fn max_train(&self) -> f64 {
        self.runs.iter().map(RunOutcome::max_train).fold(0.0, f64::max)
    }

    /// Median over members of the first epoch reaching the cell maximum,
    /// counting only members that reached it.
    pub fn median_epochs_to_max(&self) -> Option<f64> {
        let best = self.max_train();
        median(
            self.runs
                .iter()
                .filter_map(|r| r.train_accuracy.iter().position(|&a| a >= best))
                .map(|i| (i + 1) as f64)
                .collect(),
        )
    }

    pub fn convergence_epochs(&self) -> Vec<Option<usize>> {
        self.runs.iter().map(|r| r.convergence_epoch).collect()
    }

    pub fn median_convergence_epoch(&self) -> Option<f64> {
        median(
            self.runs
                .iter()
                .filter_map(|r| r.convergence_epoch)
                .map(|e| e as f64)
                .collect(),
        )
    }

    pub fn total_events(&self) -> EventCounters {
        let mut c = EventCounters::default();
        for r in &self.runs {
            c.merge(&r.total_events());
        }
        c
    }

    /// Reward and penalty events per member per epoch.
    pub fn events_per_epoch(&self) -> f64 {
        let denom = (self.runs.len() * self.epochs).max(1) as f64;
        self.total_events().reinforcements() as f64 / denom
    }

    /// Mean over members of the best test accuracy within `epochs` epochs.
    pub fn mean_best_test_within(&self, epochs: usize) -> f64 {
        mean(self.runs.iter().map(|r| r.best_test_within(epochs)))
    }

    /// Mean test accuracy after each epoch.
    pub fn mean_test_curve(&self) -> Vec<f64> {
        (0..self.epochs)
            .map(|e| mean(self.runs.iter().filter_map(|r| r.test_accuracy.get(e).copied())))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct CampaignResult {
    pub cells: Vec<CellResult>,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x}"))
}

impl CampaignResult {
    pub const CSV_HEADER: &'static str = "cell,label,rng,clauses,threshold,sensitivity,states,faults,ensembles,epochs,\
mean_test,std_test,mean_train,max_train,median_epochs_to_max,converged_runs,median_convergence_epoch,\
reward_i,penalty_i,reward_ii,penalty_ii,inaction,events_per_epoch";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for (i, c) in self.cells.iter().enumerate() {
            let p = &c.params;
            let ev = c.total_events();
            let faults: Vec<String> = p
                .faults
                .iter()
                .map(|f| format!("{}:{}:{}", f.clause, f.ta, f.fault))
                .collect();
            let _ = writeln!(
                out,
                "{i},{},{},{},{},{},{},{},{},{},{:.6},{:.6},{:.6},{:.6},{},{},{},{},{},{},{},{},{:.1}",
                p.label,
                p.rng,
                p.clauses,
                p.threshold,
                p.sensitivity,
                2 * p.half_states,
                faults.join(" "),
                c.runs.len(),
                c.epochs,
                c.mean_test(),
                c.std_test(),
                c.mean_train(),
                c.max_train(),
                opt(c.median_epochs_to_max()),
                c.runs.iter().filter(|r| r.convergence_epoch.is_some()).count(),
                opt(c.median_convergence_epoch()),
                ev.reward_i,
                ev.penalty_i,
                ev.reward_ii,
                ev.penalty_ii,
                ev.inaction,
                c.events_per_epoch(),
            );
        }
        out
    }

    /// Per-epoch mean test accuracy, one row per cell and epoch.
    pub fn curves_csv(&self) -> String {
        let mut out = String::from("cell,epoch,mean_test\n");
        for (i, c) in self.cells.iter().enumerate() {
            for (e, a) in c.mean_test_curve().iter().enumerate() {
                let _ = writeln!(out, "{i},{},{a:.6}", e + 1);
            }
        }
        out
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        for (i, c) in self.cells.iter().enumerate() {
            let p = &c.params;
            let _ = writeln!(
                out,
                "[{i}] {:<10} {:<8} U={:<4} T={:<3} s={:<5} 2n={:<4} runs={:<4} test {:.4} ± {:.4}  max train {:.4}  events/epoch {:.0}",
                if p.label.is_empty() { "-" } else { &p.label },
                p.rng.to_string(),
                p.clauses,
                p.threshold,
                p.sensitivity,
                2 * p.half_states,
                c.runs.len(),
                c.mean_test(),
                c.std_test(),
                c.max_train(),
                c.events_per_epoch()
            );
        }
        out
    }
}

/// Runs every `(cell, member)` pair and groups results by cell.
pub fn run_cells(
    cells: Vec<CellParams>,
    data: &LoadedData,
    seed: u64,
    ensembles: usize,
    epochs: usize,
) -> Result<CampaignResult> {
    if ensembles == 0 {
        return Err(Error::config("ensembles must be at least 1"));
    }
    // Validate every cell up front so a bad grid fails before any training.
    for c in &cells {
        c.config(data.inputs(), data.classes(), 1, epochs)?;
    }
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..ensembles).map(move |m| (c, m)))
        .collect();
    let outcomes: Vec<RunOutcome> = jobs
        .par_iter()
        .map(|&(c, m)| train_member(&cells[c], data, seed, m, epochs))
        .collect::<Result<_>>()?;
    let mut outcomes = outcomes.into_iter();
    let cells = cells
        .into_iter()
        .map(|params| CellResult {
            params,
            epochs,
            runs: outcomes.by_ref().take(ensembles).collect(),
        })
        .collect();
    Ok(CampaignResult { cells })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub dataset: DatasetSpec,
    pub clauses: Vec<usize>,
    pub thresholds: Vec<u32>,
    pub sensitivities: Vec<f64>,
    pub half_states: u32,
    pub rng: RngKind,
    pub seed: u64,
    pub ensembles: usize,
    pub epochs: usize,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.clauses.is_empty() || self.thresholds.is_empty() || self.sensitivities.is_empty() {
            return Err(Error::config("sweep grids must be nonempty"));
        }
        if self.ensembles == 0 {
            return Err(Error::config("ensembles must be at least 1"));
        }
        Ok(())
    }

    /// Grid cells in `U`, then `T`, then `s` order.
    pub fn cells(&self) -> Vec<CellParams> {
        let mut out = Vec::new();
        for &clauses in &self.clauses {
            for &threshold in &self.thresholds {
                for &sensitivity in &self.sensitivities {
                    out.push(CellParams {
                        clauses,
                        threshold,
                        sensitivity,
                        half_states: self.half_states,
                        rng: self.rng,
                        faults: Vec::new(),
                        label: String::new(),
                    });
                }
            }
        }
        out
    }
}

pub fn run_sweep(spec: &SweepSpec) -> Result<CampaignResult> {
    spec.validate()?;
    let data = spec.dataset.load()?;
    run_cells(spec.cells(), &data, spec.seed, spec.ensembles, spec.epochs)
}

/// Fault-injection campaign on XOR.
#[derive(Clone, Debug, PartialEq)]
pub struct FaultCampaignSpec {
    pub threshold: u32,
    pub sensitivity: f64,
    pub rng: RngKind,
    /// U used while sweeping states.
    pub base_clauses: usize,
    /// n used while sweeping clauses.
    pub base_half_states: u32,
    pub clause_grid: Vec<usize>,
    /// Values of n.
    pub state_grid: Vec<u32>,
    pub faults: Vec<PlacedFault>,
    /// Also run each grid point without faults.
    pub baseline: bool,
    pub ensembles: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl FaultCampaignSpec {
    /// Cells grouped by fault case: clause sweep first, then state sweep.
    pub fn cells(&self) -> Vec<CellParams> {
        let mut cases: Vec<(String, Vec<PlacedFault>)> = Vec::new();
        if self.baseline {
            cases.push(("none".into(), Vec::new()));
        }
        for f in &self.faults {
            cases.push((format!("{}:{}:{}", f.clause, f.ta, f.fault), vec![*f]));
        }
        let mut out = Vec::new();
        for (label, faults) in cases {
            let cell = |clauses, half_states, sweep: &str| CellParams {
                clauses,
                threshold: self.threshold,
                sensitivity: self.sensitivity,
                half_states,
                rng: self.rng,
                faults: faults.clone(),
                label: format!("{sweep}/{label}"),
            };
            for &u in &self.clause_grid {
                out.push(cell(u, self.base_half_states, "clauses"));
            }
            for &n in &self.state_grid {
                out.push(cell(self.base_clauses, n, "states"));
            }
        }
        out
    }
}

pub fn run_fault_campaign(spec: &FaultCampaignSpec) -> Result<CampaignResult> {
    if spec.clause_grid.is_empty() && spec.state_grid.is_empty() {
        return Err(Error::config("fault campaign needs a clause or state grid"));
    }
    let data = LoadedData::Fixed(datasets::xor_dataset());
    run_cells(spec.cells(), &data, spec.seed, spec.ensembles, spec.epochs)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LfsrStudySpec {
    pub dataset: DatasetSpec,
    pub clauses: usize,
    pub threshold: u32,
    pub sensitivity: f64,
    pub half_states: u32,
    pub widths: Vec<u32>,
    /// Width whose accuracy is re-measured at lower `s`.
    pub regain_width: Option<u32>,
    pub regain_sensitivities: Vec<f64>,
    pub ensembles: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl LfsrStudySpec {
    /// Baseline first, then one cell per width, then the regain cells.
    pub fn cells(&self) -> Result<Vec<CellParams>> {
        let cell = |rng: RngKind, sensitivity: f64, label: &str| CellParams {
            clauses: self.clauses,
            threshold: self.threshold,
            sensitivity,
            half_states: self.half_states,
            rng,
            faults: Vec::new(),
            label: label.to_string(),
        };
        let mut out = vec![cell(RngKind::Pcg64, self.sensitivity, "baseline")];
        for &w in &self.widths {
            RngSpec::lfsr(w, 1)?;
            out.push(cell(RngKind::Lfsr { width: w }, self.sensitivity, "width"));
        }
        if let Some(w) = self.regain_width {
            RngSpec::lfsr(w, 1)?;
            for &s in &self.regain_sensitivities {
                out.push(cell(RngKind::Lfsr { width: w }, s, "regain"));
            }
        }
        Ok(out)
    }
}

/// LFSR study result with lookups by role.
#[derive(Clone, Debug, PartialEq)]
pub struct LfsrStudyResult {
    pub campaign: CampaignResult,
}

impl LfsrStudyResult {
    pub fn baseline(&self) -> &CellResult {
        &self.campaign.cells[0]
    }

    pub fn width(&self, w: u32) -> Option<&CellResult> {
        self.campaign
            .cells
            .iter()
            .find(|c| c.params.label == "width" && c.params.rng == RngKind::Lfsr { width: w })
    }

    pub fn regain(&self) -> impl Iterator<Item = &CellResult> {
        self.campaign.cells.iter().filter(|c| c.params.label == "regain")
    }

    /// Accuracy of each LFSR width minus the baseline, in accuracy units.
    pub fn deltas(&self) -> Vec<(u32, f64)> {
        let base = self.baseline().mean_test();
        self.campaign
            .cells
            .iter()
            .filter(|c| c.params.label == "width")
            .filter_map(|c| match c.params.rng {
                RngKind::Lfsr { width } => Some((width, c.mean_test() - base)),
                RngKind::Pcg64 => None,
            })
            .collect()
    }
}

pub fn run_lfsr_study(spec: &LfsrStudySpec) -> Result<LfsrStudyResult> {
    let data = spec.dataset.load()?;
    let campaign = run_cells(spec.cells()?, &data, spec.seed, spec.ensembles, spec.epochs)?;
    Ok(LfsrStudyResult { campaign })
}

/// Per-event weights for [`energy_proxy`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostWeights {
    pub reward_i: f64,
    pub penalty_i: f64,
    pub reward_ii: f64,
    pub penalty_ii: f64,
    pub inaction: f64,
}

impl CostWeights {
    /// Weight 1 per reward or penalty, 0 per inaction.
    pub fn unit() -> Self {
        CostWeights {
            reward_i: 1.0,
            penalty_i: 1.0,
            reward_ii: 1.0,
            penalty_ii: 1.0,
            inaction: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.reward_i, self.penalty_i, self.reward_ii, self.penalty_ii, self.inaction];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::config("cost weights must be finite and nonnegative"));
        }
        Ok(())
    }
}

impl Default for CostWeights {
    fn default() -> Self {
        Self::unit()
    }
}

/// Weighted sum of event counts.
pub fn energy_proxy(counters: &EventCounters, costs: &CostWeights) -> Result<f64> {
    costs.validate()?;
    Ok(counters.reward_i as f64 * costs.reward_i
        + counters.penalty_i as f64 * costs.penalty_i
        + counters.reward_ii as f64 * costs.reward_ii
        + counters.penalty_ii as f64 * costs.penalty_ii
        + counters.inaction as f64 * costs.inaction)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::automata::FaultSpec;

    fn counters(reward_i: u64, penalty_i: u64, reward_ii: u64, penalty_ii: u64) -> EventCounters {
        EventCounters {
            reward_i,
            penalty_i,
            reward_ii,
            penalty_ii,
            inaction: 0,
        }
    }

    fn xor_sweep() -> SweepSpec {
        SweepSpec {
            dataset: DatasetSpec::xor(),
            clauses: vec![4],
            thresholds: vec![1],
            sensitivities: vec![3.0],
            half_states: 3,
            rng: RngKind::Pcg64,
            seed: 5,
            ensembles: 1,
            epochs: 10,
        }
    }

    #[test]
    fn energy_proxy_examples() {
        let w = CostWeights::unit();
        assert_eq!(energy_proxy(&EventCounters::default(), &w).unwrap(), 0.0);
        assert_eq!(energy_proxy(&counters(2, 3, 0, 1), &w).unwrap(), 6.0);
        let bad = CostWeights {
            inaction: -1.0,
            ..w
        };
        assert!(energy_proxy(&EventCounters::default(), &bad).is_err());
    }

    #[test]
    fn one_cell_one_row() {
        let r = run_sweep(&xor_sweep()).unwrap();
        assert_eq!(r.cells.len(), 1);
        assert_eq!(r.cells[0].runs.len(), 1);
        assert_eq!(r.to_csv().lines().count(), 2);
    }

    #[test]
    fn grid_order_and_size() {
        let mut s = xor_sweep();
        s.clauses = vec![2, 4];
        s.thresholds = vec![1, 2];
        s.sensitivities = vec![2.0, 3.0, 4.0];
        s.ensembles = 2;
        let r = run_sweep(&s).unwrap();
        assert_eq!(r.cells.len(), 12);
        assert!(r.cells.iter().all(|c| c.runs.len() == 2));
        assert_eq!(r.cells[1].params.sensitivity, 3.0);
        assert_eq!(r.cells[3].params.threshold, 2);
        assert_eq!(r.cells[6].params.clauses, 4);
    }

    #[test]
    fn sweep_is_deterministic() {
        let mut s = xor_sweep();
        s.ensembles = 3;
        let a = run_sweep(&s).unwrap();
        let b = run_sweep(&s).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_csv(), b.to_csv());
    }

    #[test]
    fn empty_grid_is_rejected() {
        let mut s = xor_sweep();
        s.thresholds.clear();
        assert!(run_sweep(&s).is_err());
        let mut s = xor_sweep();
        s.ensembles = 0;
        assert!(run_sweep(&s).is_err());
    }

    #[test]
    fn missing_dataset_is_an_error() {
        let mut s = xor_sweep();
        s.dataset = DatasetSpec::csv("/nonexistent/file.csv", 4);
        assert!(matches!(run_sweep(&s), Err(Error::Data(_))));
    }

    #[test]
    fn invalid_fault_bit_is_rejected() {
        let spec = FaultCampaignSpec {
            threshold: 1,
            sensitivity: 3.0,
            rng: RngKind::Pcg64,
            base_clauses: 4,
            base_half_states: 3,
            clause_grid: vec![4],
            state_grid: vec![],
            faults: vec![PlacedFault {
                clause: 0,
                ta: 0,
                fault: FaultSpec::stuck_at_1(3),
            }],
            baseline: false,
            ensembles: 1,
            epochs: 1,
            seed: 0,
        };
        assert!(matches!(run_fault_campaign(&spec), Err(Error::Config(_))));
    }

    #[test]
    fn fault_free_baseline_reaches_full_accuracy() {
        let spec = FaultCampaignSpec {
            threshold: 1,
            sensitivity: 3.0,
            rng: RngKind::Pcg64,
            base_clauses: 4,
            base_half_states: 3,
            clause_grid: vec![4, 8, 12],
            state_grid: vec![],
            faults: vec![],
            baseline: true,
            ensembles: 10,
            epochs: 50,
            seed: 11,
        };
        let r = run_fault_campaign(&spec).unwrap();
        assert_eq!(r.cells.len(), 3);
        for c in &r.cells {
            assert_eq!(c.max_train(), 1.0, "{}", c.params.label);
            assert!(c.median_epochs_to_max().is_some());
        }
    }

    #[test]
    fn fault_campaign_layout() {
        let spec = FaultCampaignSpec {
            threshold: 1,
            sensitivity: 3.0,
            rng: RngKind::Pcg64,
            base_clauses: 4,
            base_half_states: 3,
            clause_grid: vec![4, 8],
            state_grid: vec![3, 4, 5],
            faults: vec![PlacedFault {
                clause: 0,
                ta: 0,
                fault: FaultSpec::stuck_at_1(0),
            }],
            baseline: true,
            ensembles: 1,
            epochs: 1,
            seed: 0,
        };
        let cells = spec.cells();
        assert_eq!(cells.len(), 10);
        assert_eq!(cells[0].label, "clauses/none");
        assert_eq!(cells[5].label, "clauses/0:0:bit0-stuck-1");
        assert_eq!(cells[9].half_states, 5);
        assert_eq!(cells[9].clauses, 4);
    }

    #[test]
    fn lfsr_study_layout_and_pairing() {
        let spec = LfsrStudySpec {
            dataset: DatasetSpec::xor(),
            clauses: 4,
            threshold: 1,
            sensitivity: 3.0,
            half_states: 3,
            widths: vec![4, 8],
            regain_width: Some(7),
            regain_sensitivities: vec![2.0, 3.0],
            ensembles: 2,
            epochs: 5,
            seed: 3,
        };
        let r = run_lfsr_study(&spec).unwrap();
        assert_eq!(r.campaign.cells.len(), 5);
        assert_eq!(r.deltas().len(), 2);
        assert!(r.width(8).is_some());
        assert_eq!(r.regain().count(), 2);
        let mut bad = spec.clone();
        bad.widths = vec![3];
        assert!(run_lfsr_study(&bad).is_err());
    }

    #[test]
    fn statistics() {
        let run = |member, test: Vec<f64>| RunOutcome {
            member,
            train_accuracy: test.clone(),
            test_accuracy: test,
            events: vec![counters(1, 1, 0, 0); 2],
            convergence_epoch: None,
        };
        let c = CellResult {
            params: xor_sweep().cells().remove(0),
            epochs: 2,
            runs: vec![run(0, vec![0.5, 1.0]), run(1, vec![0.75, 0.5])],
        };
        assert_eq!(c.mean_test(), 0.75);
        assert!((c.std_test() - (0.125f64).sqrt()).abs() < 1e-12);
        assert_eq!(c.max_train(), 1.0);
        assert_eq!(c.median_epochs_to_max(), Some(2.0));
        assert_eq!(c.events_per_epoch(), 2.0);
        assert_eq!(c.mean_best_test_within(1), 0.625);
        assert_eq!(c.mean_test_curve(), vec![0.625, 0.75]);
    }
}
