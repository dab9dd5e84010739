//! Reachability instrumentation.
//!
//! A [`RecordedRun`] holds a machine's initial states, every recorded
//! transition and the per-epoch training accuracy. That is enough to replay
//! the run against the automaton rules ([`replay`]), rebuild each
//! automaton's visited-state set and detect convergence of the contracted
//! include/exclude vector ([`detect_convergence`]).
//!
//! CSV schema, one row per event:
//!
//! ```text
//! epoch,step,class,clause,ta,feedback,event,before,after,flags
//! ```
//!
//! `feedback` is `I` or `II`, `event` is `reward`/`penalty`/`inaction`, and
//! `flags` is `-`, `fault`, `wrap` or `fault|wrap`.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::automata::{Action, Reinforcement, TsetlinAutomaton, WriteFlags};
use crate::datasets::BooleanizedDataset;
use crate::error::{Error, Result};
use crate::feedback::FeedbackType;
use crate::machine::{FitReport, Machine, PlacedFault, TMConfig};

pub const CSV_HEADER: [&str; 10] = [
    "epoch", "step", "class", "clause", "ta", "feedback", "event", "before", "after", "flags",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TraceEvent {
    /// 1-based epoch.
    pub epoch: u32,
    /// Position of the datapoint within the epoch.
    pub step: u32,
    pub class: u32,
    /// Clause index within its class.
    pub clause: u32,
    /// Literal index within the clause.
    pub ta: u32,
    pub feedback: FeedbackType,
    pub event: Reinforcement,
    pub before: u32,
    pub after: u32,
    pub flags: WriteFlags,
}

fn flags_str(f: WriteFlags) -> &'static str {
    match (f.fault, f.wrap) {
        (false, false) => "-",
        (true, false) => "fault",
        (false, true) => "wrap",
        (true, true) => "fault|wrap",
    }
}

fn parse_flags(s: &str) -> Result<WriteFlags> {
    let mut f = WriteFlags::default();
    if s == "-" || s.is_empty() {
        return Ok(f);
    }
    for part in s.split('|') {
        match part {
            "fault" => f.fault = true,
            "wrap" => f.wrap = true,
            other => return Err(Error::input(format!("unknown trace flag {other:?}"))),
        }
    }
    Ok(f)
}

/// Append-only receiver of trace events.
pub trait TraceSink {
    fn record(&mut self, event: &TraceEvent) -> Result<()>;

    /// Whether inaction events should be delivered at all.
    fn include_inaction(&self) -> bool {
        false
    }
}

/// In-memory sink.
#[derive(Clone, Debug, Default)]
pub struct TraceBuffer {
    events: Vec<TraceEvent>,
    inaction: bool,
}

impl TraceBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_inaction() -> Self {
        TraceBuffer {
            events: Vec::new(),
            inaction: true,
        }
    }

    pub fn events(&self) -> &[TraceEvent] {
        &self.events
    }

    pub fn into_events(self) -> Vec<TraceEvent> {
        self.events
    }
}

impl TraceSink for TraceBuffer {
    fn record(&mut self, event: &TraceEvent) -> Result<()> {
        self.events.push(*event);
        Ok(())
    }

    fn include_inaction(&self) -> bool {
        self.inaction
    }
}

/// Streams events straight to CSV.
pub struct CsvTraceWriter<W: Write> {
    writer: csv::Writer<W>,
    inaction: bool,
}

impl<W: Write> CsvTraceWriter<W> {
    pub fn new(inner: W, include_inaction: bool) -> Result<Self> {
        let mut writer = csv::Writer::from_writer(inner);
        writer.write_record(CSV_HEADER)?;
        Ok(CsvTraceWriter {
            writer,
            inaction: include_inaction,
        })
    }

    pub fn finish(mut self) -> Result<W> {
        self.writer.flush()?;
        self.writer
            .into_inner()
            .map_err(|e| Error::Io(e.into_error()))
    }
}

impl<W: Write> TraceSink for CsvTraceWriter<W> {
    fn record(&mut self, e: &TraceEvent) -> Result<()> {
        self.writer.write_record([
            e.epoch.to_string(),
            e.step.to_string(),
            e.class.to_string(),
            e.clause.to_string(),
            e.ta.to_string(),
            e.feedback.as_str().to_string(),
            e.event.as_str().to_string(),
            e.before.to_string(),
            e.after.to_string(),
            flags_str(e.flags).to_string(),
        ])?;
        Ok(())
    }

    fn include_inaction(&self) -> bool {
        self.inaction
    }
}

pub fn write_csv<W: Write>(events: &[TraceEvent], out: W) -> Result<W> {
    let mut w = CsvTraceWriter::new(out, true)?;
    for e in events {
        w.record(e)?;
    }
    w.finish()
}

pub fn export_csv(events: &[TraceEvent], path: &Path) -> Result<()> {
    let file = BufWriter::new(File::create(path)?);
    write_csv(events, file)?.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<TraceEvent>> {
    let mut reader = csv::Reader::from_reader(input);
    let headers = reader.headers()?.clone();
    if headers.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(Error::input(format!("unexpected trace header {headers:?}")));
    }
    let num = |s: &str| -> Result<u32> {
        s.parse()
            .map_err(|_| Error::input(format!("bad trace number {s:?}")))
    };
    let mut events = Vec::new();
    for row in reader.records() {
        let row = row?;
        events.push(TraceEvent {
            epoch: num(&row[0])?,
            step: num(&row[1])?,
            class: num(&row[2])?,
            clause: num(&row[3])?,
            ta: num(&row[4])?,
            feedback: row[5].parse()?,
            event: row[6].parse()?,
            before: num(&row[7])?,
            after: num(&row[8])?,
            flags: parse_flags(&row[9])?,
        });
    }
    Ok(events)
}

/// Everything needed to reconstruct a training run's state trajectories.
#[derive(Clone, Debug)]
pub struct RecordedRun {
    pub half_states: u32,
    pub literals: usize,
    pub clauses_per_class: usize,
    pub classes: usize,
    pub faults: Vec<PlacedFault>,
    /// Initial state of every automaton, clause-major.
    pub initial_states: Vec<u32>,
    pub events: Vec<TraceEvent>,
    /// Training accuracy after each epoch.
    pub epoch_accuracy: Vec<f64>,
    /// Whether inaction events were recorded.
    pub with_inaction: bool,
}

impl RecordedRun {
    /// Empty recording for a freshly built machine.
    pub fn start(machine: &Machine, with_inaction: bool) -> Self {
        let c = machine.config();
        RecordedRun {
            half_states: c.half_states,
            literals: c.literals(),
            clauses_per_class: c.clauses_per_class,
            classes: c.classes,
            faults: c.faults.clone(),
            initial_states: machine.states().into_iter().flatten().collect(),
            events: Vec::new(),
            epoch_accuracy: Vec::new(),
            with_inaction,
        }
    }

    pub fn automaton_index(&self, e: &TraceEvent) -> usize {
        (e.class as usize * self.clauses_per_class + e.clause as usize) * self.literals
            + e.ta as usize
    }

    pub fn epochs(&self) -> usize {
        self.epoch_accuracy.len()
    }

    fn config_for(&self, index: usize) -> (u32, Option<crate::automata::FaultSpec>) {
        let clause = index / self.literals;
        let ta = index % self.literals;
        let fault = self
            .faults
            .iter()
            .rev()
            .find(|f| f.clause == clause && f.ta == ta)
            .map(|f| f.fault);
        (self.half_states, fault)
    }
}

/// Builds a machine, trains it and records every transition.
pub fn record_fit(
    config: TMConfig,
    train: &BooleanizedDataset,
    epochs: usize,
    with_inaction: bool,
) -> Result<(Machine, FitReport, RecordedRun)> {
    let mut machine = Machine::new(config)?;
    let mut run = RecordedRun::start(&machine, with_inaction);
    let mut sink = if with_inaction {
        TraceBuffer::with_inaction()
    } else {
        TraceBuffer::new()
    };
    let report = machine.fit_traced(train, None, epochs, &mut sink)?;
    run.events = sink.into_events();
    run.epoch_accuracy = report.epochs.iter().map(|e| e.train_accuracy).collect();
    Ok((machine, report, run))
}

/// First mismatch found by [`replay`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReplayMismatch {
    pub position: usize,
    pub reason: String,
}

/// Re-executes every event against the automaton rules, checking that
/// `before` continues the automaton's history and `after` is reproduced.
pub fn replay(run: &RecordedRun) -> std::result::Result<Vec<u32>, ReplayMismatch> {
    let mut states = run.initial_states.clone();
    for (position, e) in run.events.iter().enumerate() {
        let idx = run.automaton_index(e);
        let Some(&current) = states.get(idx) else {
            return Err(ReplayMismatch {
                position,
                reason: format!("automaton index {idx} out of range"),
            });
        };
        if current != e.before {
            return Err(ReplayMismatch {
                position,
                reason: format!("before = {} but automaton is in {current}", e.before),
            });
        }
        let (n, fault) = run.config_for(idx);
        let mut ta = TsetlinAutomaton::with_state(n, current, fault).map_err(|err| ReplayMismatch {
            position,
            reason: err.to_string(),
        })?;
        let t = ta.reinforce(e.event);
        if t.after != e.after || t.flags != e.flags {
            return Err(ReplayMismatch {
                position,
                reason: format!(
                    "{:?} from {current} gives {} ({:?}), trace says {} ({:?})",
                    e.event, t.after, t.flags, e.after, e.flags
                ),
            });
        }
        states[idx] = t.after;
    }
    Ok(states)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReachabilityReport {
    /// Visited states per automaton, clause-major.
    pub visited: Vec<BTreeSet<u32>>,
    pub converged: bool,
    /// Epoch (1-based) at which convergence was first detected.
    pub convergence_epoch: Option<usize>,
    pub final_actions: Vec<Action>,
}

impl ReachabilityReport {
    pub fn visited_by(&self, class: usize, clause: usize, ta: usize, run: &RecordedRun) -> &BTreeSet<u32> {
        &self.visited[(class * run.clauses_per_class + clause) * run.literals + ta]
    }
}

fn action_of(n: u32, state: u32) -> Action {
    if state <= n {
        Action::Exclude
    } else {
        Action::Include
    }
}

/// First epoch `e` (1-based) at which the action vector has not changed for
/// `window` consecutive epochs and accuracy at `e` equals the run maximum.
///
/// `changed[i]` says whether epoch `i + 1` changed the action vector. An
/// empty `accuracy` slice skips the accuracy condition.
pub fn convergence_epoch(changed: &[bool], accuracy: &[f64], window: usize) -> Option<usize> {
    let window = window.max(1);
    let best = accuracy.iter().copied().reduce(f64::max);
    let mut last_change = 0usize;
    for (i, &c) in changed.iter().enumerate() {
        let epoch = i + 1;
        if c {
            last_change = epoch;
        }
        let at_best = match (best, accuracy.get(i)) {
            (Some(b), Some(&a)) => a >= b,
            (None, _) => true,
            (Some(_), None) => false,
        };
        if epoch - last_change >= window && at_best {
            return Some(epoch);
        }
    }
    None
}

/// Rebuilds visited-state sets and applies [`convergence_epoch`] to the
/// recorded run.
pub fn detect_convergence(run: &RecordedRun, window: usize) -> ReachabilityReport {
    let n = run.half_states;
    let mut states = run.initial_states.clone();
    let mut visited: Vec<BTreeSet<u32>> = states.iter().map(|&s| BTreeSet::from([s])).collect();

    let epochs = run
        .epoch_accuracy
        .len()
        .max(run.events.iter().map(|e| e.epoch as usize).max().unwrap_or(0));

    let contract = |s: &[u32]| -> Vec<Action> { s.iter().map(|&v| action_of(n, v)).collect() };
    let mut previous = contract(&states);
    let mut changed = Vec::with_capacity(epochs);

    let mut apply = |e: &TraceEvent, states: &mut Vec<u32>| {
        let idx = run.automaton_index(e);
        if let Some(slot) = states.get_mut(idx) {
            *slot = e.after;
            visited[idx].insert(e.before);
            visited[idx].insert(e.after);
        }
    };
    let mut events = run.events.iter().peekable();
    for epoch in 1..=epochs {
        while let Some(e) = events.next_if(|e| e.epoch as usize <= epoch) {
            apply(e, &mut states);
        }
        let current = contract(&states);
        changed.push(current != previous);
        previous = current;
    }
    for e in events {
        apply(e, &mut states);
    }

    let convergence_epoch = convergence_epoch(&changed, &run.epoch_accuracy, window);
    ReachabilityReport {
        visited,
        converged: convergence_epoch.is_some(),
        convergence_epoch,
        final_actions: contract(&states),
    }
}
