//! Clauses, class voting and the training loop.
//!
//! Layout: clauses are stored class-major, `U` per class. Even clause
//! indices have positive polarity, odd ones negative. Within a clause,
//! literal `k < L` is input bit `k` and literal `L + k` its complement.
//!
//! Randomness: every automaton has its own stream (domain [`DOMAIN_TA`],
//! index = global automaton index), every clause has a selection stream
//! (domain [`DOMAIN_CLAUSE`], index = global clause index), and two PCG
//! control streams pick the negative class and shuffle each epoch.

use serde::{Deserialize, Serialize};

use crate::automata::{Action, FaultSpec, Reinforcement, TsetlinAutomaton};
use crate::datasets::BooleanizedDataset;
use crate::error::{Error, Result};
use crate::feedback::{FeedbackTables, FeedbackType, SamplerTable};
use crate::rng::{derive_seed, Pcg32, RngSpec, RngStream};
use crate::trace::{TraceEvent, TraceSink};

pub const DOMAIN_TA: u64 = 0x7441;
pub const DOMAIN_CLAUSE: u64 = 0x636c;
pub const DOMAIN_NEGATIVE: u64 = 0x6e65;
pub const DOMAIN_SHUFFLE: u64 = 0x7368;

/// A stuck-at fault placed on one automaton of the machine.
///
/// `clause` is the global clause index `class * U + j`; `ta` is the literal
/// index within that clause.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PlacedFault {
    pub clause: usize,
    pub ta: usize,
    #[serde(flatten)]
    pub fault: FaultSpec,
}

/// Machine hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct TMConfig {
    /// Booleanized inputs per datapoint (L).
    pub inputs: usize,
    /// Output classes (M).
    pub classes: usize,
    /// Clauses per class (U), even.
    pub clauses_per_class: usize,
    /// States per action (n); each automaton has 2n states.
    pub half_states: u32,
    /// Feedback threshold (T).
    pub threshold: u32,
    /// Learning sensitivity (s).
    pub sensitivity: f64,
    /// Generator for automaton and clause-selection streams, plus the base seed.
    pub rng: RngSpec,
    pub epochs: usize,
    pub faults: Vec<PlacedFault>,
}

impl TMConfig {
    pub fn new(inputs: usize, classes: usize, clauses_per_class: usize) -> Self {
        TMConfig {
            inputs,
            classes,
            clauses_per_class,
            half_states: 100,
            threshold: 10,
            sensitivity: 3.0,
            rng: RngSpec::pcg64(1),
            epochs: 100,
            faults: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.inputs == 0 {
            return Err(Error::config("L (inputs) must be at least 1"));
        }
        if self.classes == 0 {
            return Err(Error::config("M (classes) must be at least 1"));
        }
        if self.clauses_per_class == 0 || !self.clauses_per_class.is_multiple_of(2) {
            return Err(Error::config(format!(
                "U (clauses per class) must be even and positive, got {}",
                self.clauses_per_class
            )));
        }
        if self.half_states == 0 {
            return Err(Error::config("n (half states) must be at least 1"));
        }
        if self.threshold == 0 {
            return Err(Error::config("T (threshold) must be a positive integer"));
        }
        if !(self.sensitivity.is_finite() && self.sensitivity > 1.0) {
            return Err(Error::config(format!(
                "s (sensitivity) must be > 1, got {}",
                self.sensitivity
            )));
        }
        for f in &self.faults {
            if f.clause >= self.total_clauses() {
                return Err(Error::config(format!(
                    "fault clause {} outside 0..{}",
                    f.clause,
                    self.total_clauses()
                )));
            }
            if f.ta >= self.literals() {
                return Err(Error::config(format!(
                    "fault automaton {} outside 0..{}",
                    f.ta,
                    self.literals()
                )));
            }
            f.fault.validate(self.half_states)?;
        }
        Ok(())
    }

    pub fn literals(&self) -> usize {
        2 * self.inputs
    }

    pub fn total_clauses(&self) -> usize {
        self.classes * self.clauses_per_class
    }

    /// 2L * U * M.
    pub fn automaton_count(&self) -> usize {
        self.literals() * self.total_clauses()
    }

    fn fault_at(&self, clause: usize, ta: usize) -> Option<FaultSpec> {
        self.faults
            .iter()
            .rev()
            .find(|f| f.clause == clause && f.ta == ta)
            .map(|f| f.fault)
    }
}

/// Validated literal vector `x` of length 2L with `x[L + k] == !x[k]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Literals(Vec<bool>);

impl Literals {
    pub fn from_inputs(bits: &[bool]) -> Self {
        let mut v = Vec::with_capacity(2 * bits.len());
        v.extend_from_slice(bits);
        v.extend(bits.iter().map(|b| !b));
        Literals(v)
    }

    pub fn new(literals: Vec<bool>) -> Result<Self> {
        if !literals.len().is_multiple_of(2) {
            return Err(Error::input("literal vector must have even length 2L"));
        }
        let l = literals.len() / 2;
        if let Some(k) = (0..l).find(|&k| literals[l + k] == literals[k]) {
            return Err(Error::input(format!(
                "literal {} is not the complement of literal {k}",
                l + k
            )));
        }
        Ok(Literals(literals))
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }

    pub fn inputs(&self) -> usize {
        self.0.len() / 2
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Polarity {
    Positive,
    Negative,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvalMode {
    /// Empty clauses output 1.
    Train,
    /// Empty clauses output 0.
    Infer,
}

#[derive(Clone, Debug)]
pub struct Clause {
    polarity: Polarity,
    tas: Vec<TsetlinAutomaton>,
    streams: Vec<RngStream>,
    selector: RngStream,
}

impl Clause {
    pub fn polarity(&self) -> Polarity {
        self.polarity
    }

    pub fn automata(&self) -> &[TsetlinAutomaton] {
        &self.tas
    }

    pub fn actions(&self) -> impl Iterator<Item = Action> + '_ {
        self.tas.iter().map(|t| t.action())
    }

    /// Conjunction over included literals.
    pub fn evaluate(&self, x: &[bool], mode: EvalMode) -> bool {
        let mut any = false;
        for (ta, &lit) in self.tas.iter().zip(x) {
            if ta.includes() {
                if !lit {
                    return false;
                }
                any = true;
            }
        }
        any || mode == EvalMode::Train
    }

    /// Included literal indices.
    pub fn included(&self) -> Vec<usize> {
        self.tas
            .iter()
            .enumerate()
            .filter(|(_, t)| t.includes())
            .map(|(k, _)| k)
            .collect()
    }
}

/// Reinforcement counts.
///
/// `reward_ii` stays zero: no Type II cell has a reward probability.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventCounters {
    pub reward_i: u64,
    pub penalty_i: u64,
    pub reward_ii: u64,
    pub penalty_ii: u64,
    pub inaction: u64,
}

impl EventCounters {
    pub fn record(&mut self, kind: FeedbackType, event: Reinforcement) {
        match (kind, event) {
            (FeedbackType::TypeI, Reinforcement::Reward) => self.reward_i += 1,
            (FeedbackType::TypeI, Reinforcement::Penalty) => self.penalty_i += 1,
            (FeedbackType::TypeII, Reinforcement::Reward) => self.reward_ii += 1,
            (FeedbackType::TypeII, Reinforcement::Penalty) => self.penalty_ii += 1,
            (_, Reinforcement::Inaction) => self.inaction += 1,
        }
    }

    pub fn merge(&mut self, other: &EventCounters) {
        self.reward_i += other.reward_i;
        self.penalty_i += other.penalty_i;
        self.reward_ii += other.reward_ii;
        self.penalty_ii += other.penalty_ii;
        self.inaction += other.inaction;
    }

    /// Rewards plus penalties of both types.
    pub fn reinforcements(&self) -> u64 {
        self.reward_i + self.penalty_i + self.reward_ii + self.penalty_ii
    }
}

/// Per-epoch training record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    pub counters: EventCounters,
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FitReport {
    pub epochs: Vec<EpochStats>,
}

impl FitReport {
    pub fn max_train_accuracy(&self) -> Option<f64> {
        self.epochs.iter().map(|e| e.train_accuracy).reduce(f64::max)
    }

    /// First epoch whose train accuracy reaches `target`.
    pub fn first_epoch_reaching(&self, target: f64) -> Option<usize> {
        self.epochs
            .iter()
            .find(|e| e.train_accuracy >= target)
            .map(|e| e.epoch)
    }

    pub fn final_test_accuracy(&self) -> Option<f64> {
        self.epochs.last().and_then(|e| e.test_accuracy)
    }

    pub fn total_counters(&self) -> EventCounters {
        let mut c = EventCounters::default();
        for e in &self.epochs {
            c.merge(&e.counters);
        }
        c
    }
}

/// Where a traced sample sits in the run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TracePosition {
    pub epoch: u32,
    pub step: u32,
}

pub struct Machine {
    config: TMConfig,
    tables: SamplerTable,
    clauses: Vec<Clause>,
    negative_picker: Pcg32,
    shuffler: Pcg32,
    epochs_trained: usize,
    history: Vec<EventCounters>,
}

impl Machine {
    pub fn new(config: TMConfig) -> Result<Self> {
        config.validate()?;
        let tables = SamplerTable::new(
            &FeedbackTables::new(config.sensitivity)?,
            config.rng.kind().output_bits(),
        );
        let literals = config.literals();
        let n = config.half_states;
        let mut clauses = Vec::with_capacity(config.total_clauses());
        for j in 0..config.total_clauses() {
            let polarity = if j % 2 == 0 {
                Polarity::Positive
            } else {
                Polarity::Negative
            };
            let mut tas = Vec::with_capacity(literals);
            let mut streams = Vec::with_capacity(literals);
            for k in 0..literals {
                let global = (j * literals + k) as u64;
                let mut stream = config.rng.derive(DOMAIN_TA, global).stream();
                tas.push(TsetlinAutomaton::init(n, &mut stream, config.fault_at(j, k))?);
                streams.push(stream);
            }
            let selector = config.rng.derive(DOMAIN_CLAUSE, j as u64).stream();
            clauses.push(Clause {
                polarity,
                tas,
                streams,
                selector,
            });
        }
        let seed = config.rng.seed();
        Ok(Machine {
            negative_picker: Pcg32::from_seed(derive_seed(seed, DOMAIN_NEGATIVE, 0)),
            shuffler: Pcg32::from_seed(derive_seed(seed, DOMAIN_SHUFFLE, 0)),
            config,
            tables,
            clauses,
            epochs_trained: 0,
            history: Vec::new(),
        })
    }

    /// Rebuilds a machine with explicit automaton states, one vector per
    /// global clause. States are taken as stored; fault masks are attached
    /// but not re-applied.
    pub fn from_states(config: TMConfig, states: &[Vec<u32>]) -> Result<Self> {
        let mut m = Machine::new(config)?;
        m.set_states(states)?;
        Ok(m)
    }

    pub fn set_states(&mut self, states: &[Vec<u32>]) -> Result<()> {
        if states.len() != self.clauses.len() {
            return Err(Error::input(format!(
                "expected {} clause state rows, got {}",
                self.clauses.len(),
                states.len()
            )));
        }
        let n = self.config.half_states;
        for (j, (clause, row)) in self.clauses.iter_mut().zip(states).enumerate() {
            if row.len() != clause.tas.len() {
                return Err(Error::input(format!(
                    "clause {j}: expected {} states, got {}",
                    clause.tas.len(),
                    row.len()
                )));
            }
            for (k, (ta, &s)) in clause.tas.iter_mut().zip(row).enumerate() {
                *ta = TsetlinAutomaton::with_state(n, s, self.config.fault_at(j, k))?;
            }
        }
        Ok(())
    }

    pub fn config(&self) -> &TMConfig {
        &self.config
    }

    pub fn clauses(&self) -> &[Clause] {
        &self.clauses
    }

    pub fn class_clauses(&self, class: usize) -> &[Clause] {
        let u = self.config.clauses_per_class;
        &self.clauses[class * u..(class + 1) * u]
    }

    pub fn epochs_trained(&self) -> usize {
        self.epochs_trained
    }

    /// Event counters of each completed epoch.
    pub fn history(&self) -> &[EventCounters] {
        &self.history
    }

    /// Current states, one vector per global clause.
    pub fn states(&self) -> Vec<Vec<u32>> {
        self.clauses
            .iter()
            .map(|c| c.tas.iter().map(|t| t.state()).collect())
            .collect()
    }

    /// Include/exclude vector over every automaton, clause-major.
    pub fn action_vector(&self) -> Vec<Action> {
        self.clauses.iter().flat_map(|c| c.actions()).collect()
    }

    fn check_literals(&self, x: &Literals) -> Result<()> {
        if x.inputs() != self.config.inputs {
            return Err(Error::input(format!(
                "expected {} inputs, got {}",
                self.config.inputs,
                x.inputs()
            )));
        }
        Ok(())
    }

    fn vote_sum_unchecked(&self, class: usize, x: &[bool], mode: EvalMode) -> i64 {
        self.class_clauses(class)
            .iter()
            .filter(|c| c.evaluate(x, mode))
            .map(|c| match c.polarity {
                Polarity::Positive => 1,
                Polarity::Negative => -1,
            })
            .sum()
    }

    /// Positive clause outputs minus negative clause outputs for `class`.
    pub fn vote_sum(&self, class: usize, x: &Literals, mode: EvalMode) -> Result<i64> {
        self.check_literals(x)?;
        if class >= self.config.classes {
            return Err(Error::input(format!("class {class} out of range")));
        }
        Ok(self.vote_sum_unchecked(class, x.as_slice(), mode))
    }

    fn classify_unchecked(&self, x: &[bool]) -> usize {
        let mut best = 0;
        let mut best_sum = i64::MIN;
        for class in 0..self.config.classes {
            let v = self.vote_sum_unchecked(class, x, EvalMode::Infer);
            if v > best_sum {
                best = class;
                best_sum = v;
            }
        }
        best
    }

    /// Argmax of inference-mode vote sums; ties go to the lowest class.
    pub fn classify(&self, x: &Literals) -> Result<usize> {
        self.check_literals(x)?;
        Ok(self.classify_unchecked(x.as_slice()))
    }

    pub fn accuracy(&self, data: &BooleanizedDataset) -> Result<f64> {
        if data.inputs() != self.config.inputs {
            return Err(Error::input(format!(
                "dataset has {} inputs, machine expects {}",
                data.inputs(),
                self.config.inputs
            )));
        }
        if data.is_empty() {
            return Ok(0.0);
        }
        let correct = data
            .samples()
            .iter()
            .filter(|s| self.classify_unchecked(Literals::from_inputs(&s.bits).as_slice()) == s.label)
            .count();
        Ok(correct as f64 / data.len() as f64)
    }

    fn accuracy_on(&self, literals: &[(Literals, usize)]) -> f64 {
        if literals.is_empty() {
            return 0.0;
        }
        let correct = literals
            .iter()
            .filter(|(x, y)| self.classify_unchecked(x.as_slice()) == *y)
            .count();
        correct as f64 / literals.len() as f64
    }

    /// One training step on `(x, y)`; returns the events it generated.
    pub fn train_sample(&mut self, x: &Literals, y: usize) -> Result<EventCounters> {
        self.train_inner(x, y, None)
    }

    /// As [`train_sample`](Self::train_sample), recording every transition.
    pub fn train_sample_traced(
        &mut self,
        x: &Literals,
        y: usize,
        sink: &mut dyn TraceSink,
        at: TracePosition,
    ) -> Result<EventCounters> {
        self.train_inner(x, y, Some((sink, at)))
    }

    fn train_inner(
        &mut self,
        x: &Literals,
        y: usize,
        mut trace: Option<(&mut dyn TraceSink, TracePosition)>,
    ) -> Result<EventCounters> {
        self.check_literals(x)?;
        let m = self.config.classes;
        if y >= m {
            return Err(Error::input(format!("label {y} out of range 0..{m}")));
        }
        let x = x.as_slice();
        let t = i64::from(self.config.threshold);
        let two_t = (2 * t) as f64;

        let v = self
            .vote_sum_unchecked(y, x, EvalMode::Train)
            .clamp(-t, t);
        let negative = if m > 1 {
            let pick = self.negative_picker.below(m as u32 - 1) as usize;
            let other = if pick >= y { pick + 1 } else { pick };
            let v_hat = self
                .vote_sum_unchecked(other, x, EvalMode::Train)
                .clamp(-t, t);
            Some((other, v_hat))
        } else {
            None
        };

        let mut counters = EventCounters::default();
        let p_target = (t - v) as f64 / two_t;
        self.reinforce_class(y, x, p_target, true, &mut counters, &mut trace)?;
        if let Some((other, v_hat)) = negative {
            let p_other = (t + v_hat) as f64 / two_t;
            self.reinforce_class(other, x, p_other, false, &mut counters, &mut trace)?;
        }
        Ok(counters)
    }

    fn reinforce_class(
        &mut self,
        class: usize,
        x: &[bool],
        p_select: f64,
        is_target: bool,
        counters: &mut EventCounters,
        trace: &mut Option<(&mut dyn TraceSink, TracePosition)>,
    ) -> Result<()> {
        let u = self.config.clauses_per_class;
        let tables = &self.tables;
        for (j, clause) in self.clauses[class * u..(class + 1) * u].iter_mut().enumerate() {
            if !clause.selector.bernoulli(p_select)? {
                continue;
            }
            let kind = match (clause.polarity, is_target) {
                (Polarity::Positive, true) | (Polarity::Negative, false) => FeedbackType::TypeI,
                _ => FeedbackType::TypeII,
            };
            let output = clause.evaluate(x, EvalMode::Train);
            for (k, (ta, stream)) in clause.tas.iter_mut().zip(&mut clause.streams).enumerate() {
                let event = tables.sample(kind, ta.action(), output, x[k], stream)?;
                counters.record(kind, event);
                let tr = ta.reinforce(event);
                if let Some((sink, at)) = trace.as_mut() {
                    if event != Reinforcement::Inaction || sink.include_inaction() {
                        sink.record(&TraceEvent {
                            epoch: at.epoch,
                            step: at.step,
                            class: class as u32,
                            clause: j as u32,
                            ta: k as u32,
                            feedback: kind,
                            event,
                            before: tr.before,
                            after: tr.after,
                            flags: tr.flags,
                        })?;
                    }
                }
            }
        }
        Ok(())
    }

    /// Trains for `epochs` passes over `train`, shuffling each epoch.
    pub fn fit(
        &mut self,
        train: &BooleanizedDataset,
        test: Option<&BooleanizedDataset>,
        epochs: usize,
    ) -> Result<FitReport> {
        self.fit_inner(train, test, epochs, None)
    }

    pub fn fit_traced(
        &mut self,
        train: &BooleanizedDataset,
        test: Option<&BooleanizedDataset>,
        epochs: usize,
        sink: &mut dyn TraceSink,
    ) -> Result<FitReport> {
        self.fit_inner(train, test, epochs, Some(sink))
    }

    fn fit_inner(
        &mut self,
        train: &BooleanizedDataset,
        test: Option<&BooleanizedDataset>,
        epochs: usize,
        mut sink: Option<&mut dyn TraceSink>,
    ) -> Result<FitReport> {
        if train.is_empty() {
            return Err(Error::input("training set is empty"));
        }
        let prepare = |d: &BooleanizedDataset| -> Result<Vec<(Literals, usize)>> {
            if d.inputs() != self.config.inputs {
                return Err(Error::input(format!(
                    "dataset has {} inputs, machine expects {}",
                    d.inputs(),
                    self.config.inputs
                )));
            }
            if let Some(s) = d.samples().iter().find(|s| s.label >= self.config.classes) {
                return Err(Error::input(format!("label {} out of range", s.label)));
            }
            Ok(d.samples()
                .iter()
                .map(|s| (Literals::from_inputs(&s.bits), s.label))
                .collect())
        };
        let train_x = prepare(train)?;
        let test_x = test.map(prepare).transpose()?;

        let mut report = FitReport::default();
        let mut order: Vec<usize> = (0..train_x.len()).collect();
        for _ in 0..epochs {
            let epoch = self.epochs_trained + 1;
            self.shuffler.shuffle(&mut order);
            let mut counters = EventCounters::default();
            for (step, &i) in order.iter().enumerate() {
                let (x, y) = &train_x[i];
                let c = match sink.as_deref_mut() {
                    Some(s) => {
                        let at = TracePosition {
                            epoch: epoch as u32,
                            step: step as u32,
                        };
                        self.train_inner(x, *y, Some((s, at)))?
                    }
                    None => self.train_inner(x, *y, None)?,
                };
                counters.merge(&c);
            }
            self.epochs_trained = epoch;
            self.history.push(counters);
            report.epochs.push(EpochStats {
                epoch,
                counters,
                train_accuracy: self.accuracy_on(&train_x),
                test_accuracy: test_x.as_ref().map(|t| self.accuracy_on(t)),
            });
        }
        Ok(report)
    }
}
