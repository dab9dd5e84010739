//! Plain-text model files.
//!
//! ```text
//! tsetlin-model 1
//! inputs 16
//! classes 3
//! clauses 90
//! states 200
//! threshold 4
//! sensitivity 1.2
//! rng pcg64
//! seed 42
//! epochs 100
//! faults 1
//! fault 0 0 0 1
//! booleanizer 4 4
//! thresholds 5.1 5.6 6.1 6.5
//! ...                       (one line per feature)
//! automata 270
//! 100 101 100 ...           (one line per global clause)
//! ```
//!
//! `booleanizer none` marks a model trained on already-boolean data. A
//! fault line is `clause ta bit stuck`. Automaton states are stored exactly,
//! so a reloaded model classifies identically; generator positions are not
//! stored, so further training restarts the streams from the seed.

use std::fmt::Write as _;
use std::path::Path;

use crate::automata::FaultSpec;
use crate::datasets::Booleanizer;
use crate::error::{Error, Result};
use crate::machine::{Machine, PlacedFault, TMConfig};
use crate::rng::{RngKind, RngSpec};

pub const MODEL_MAGIC: &str = "tsetlin-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: TMConfig,
    pub booleanizer: Option<Booleanizer>,
    /// One row per global clause.
    pub states: Vec<Vec<u32>>,
}

impl Model {
    pub fn from_machine(machine: &Machine, booleanizer: Option<Booleanizer>) -> Self {
        Model {
            config: machine.config().clone(),
            booleanizer,
            states: machine.states(),
        }
    }

    pub fn machine(&self) -> Result<Machine> {
        Machine::from_states(self.config.clone(), &self.states)
    }

    pub fn to_text(&self) -> String {
        let c = &self.config;
        let mut out = String::new();
        let _ = writeln!(out, "{MODEL_MAGIC} {MODEL_VERSION}");
        let _ = writeln!(out, "inputs {}", c.inputs);
        let _ = writeln!(out, "classes {}", c.classes);
        let _ = writeln!(out, "clauses {}", c.clauses_per_class);
        let _ = writeln!(out, "states {}", 2 * c.half_states);
        let _ = writeln!(out, "threshold {}", c.threshold);
        let _ = writeln!(out, "sensitivity {}", c.sensitivity);
        let _ = writeln!(out, "rng {}", c.rng.kind());
        let _ = writeln!(out, "seed {}", c.rng.seed());
        let _ = writeln!(out, "epochs {}", c.epochs);
        let _ = writeln!(out, "faults {}", c.faults.len());
        for f in &c.faults {
            let _ = writeln!(out, "fault {} {} {} {}", f.clause, f.ta, f.fault.bit, u8::from(f.fault.stuck_high));
        }
        match &self.booleanizer {
            None => out.push_str("booleanizer none\n"),
            Some(b) => {
                let _ = writeln!(out, "booleanizer {} {}", b.thresholds().len(), b.bits_per_feature());
                for t in b.thresholds() {
                    let row: Vec<String> = t.iter().map(|v| format!("{v}")).collect();
                    let _ = writeln!(out, "thresholds {}", row.join(" "));
                }
            }
        }
        let _ = writeln!(out, "automata {}", self.states.len());
        for row in &self.states {
            let row: Vec<String> = row.iter().map(u32::to_string).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .enumerate()
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let mut next = |what: &str| {
            lines
                .next()
                .map(|(i, l)| (i + 1, l))
                .ok_or_else(|| Error::input(format!("model file ends before {what}")))
        };

        let (_, header) = next("header")?;
        let version = header
            .strip_prefix(MODEL_MAGIC)
            .map(str::trim)
            .ok_or_else(|| Error::input("not a model file"))?;
        if version != MODEL_VERSION.to_string() {
            return Err(Error::input(format!("unsupported model version {version}")));
        }

        fn field<'a>(line: (usize, &'a str), key: &str) -> Result<(usize, &'a str)> {
            let (no, text) = line;
            text.strip_prefix(key)
                .filter(|rest| rest.starts_with(' '))
                .map(|rest| (no, rest.trim()))
                .ok_or_else(|| Error::input(format!("line {no}: expected `{key}`")))
        }
        fn num<T: std::str::FromStr>((no, text): (usize, &str)) -> Result<T> {
            text.parse()
                .map_err(|_| Error::input(format!("line {no}: bad number {text:?}")))
        }

        let inputs: usize = num(field(next("inputs")?, "inputs")?)?;
        let classes: usize = num(field(next("classes")?, "classes")?)?;
        let clauses: usize = num(field(next("clauses")?, "clauses")?)?;
        let states: u32 = num(field(next("states")?, "states")?)?;
        let threshold: u32 = num(field(next("threshold")?, "threshold")?)?;
        let sensitivity: f64 = num(field(next("sensitivity")?, "sensitivity")?)?;
        let (no, rng) = field(next("rng")?, "rng")?;
        let rng: RngKind = rng
            .parse()
            .map_err(|e| Error::input(format!("line {no}: {e}")))?;
        let seed: u64 = num(field(next("seed")?, "seed")?)?;
        let epochs: usize = num(field(next("epochs")?, "epochs")?)?;
        let fault_count: usize = num(field(next("faults")?, "faults")?)?;
        let mut faults = Vec::with_capacity(fault_count);
        for _ in 0..fault_count {
            let (no, rest) = field(next("fault")?, "fault")?;
            let parts: Vec<u32> = rest
                .split_whitespace()
                .map(|p| num((no, p)))
                .collect::<Result<_>>()?;
            let [clause, ta, bit, stuck] = parts[..] else {
                return Err(Error::input(format!("line {no}: fault needs 4 fields")));
            };
            faults.push(PlacedFault {
                clause: clause as usize,
                ta: ta as usize,
                fault: FaultSpec {
                    bit,
                    stuck_high: stuck != 0,
                },
            });
        }
        let (no, b) = field(next("booleanizer")?, "booleanizer")?;
        let booleanizer = if b == "none" {
            None
        } else {
            let parts: Vec<usize> = b
                .split_whitespace()
                .map(|p| num((no, p)))
                .collect::<Result<_>>()?;
            let [features, bits] = parts[..] else {
                return Err(Error::input(format!("line {no}: booleanizer needs 2 fields")));
            };
            let mut rows = Vec::with_capacity(features);
            for _ in 0..features {
                let (no, rest) = field(next("thresholds")?, "thresholds")?;
                let row: Vec<f64> = rest
                    .split_whitespace()
                    .map(|p| num((no, p)))
                    .collect::<Result<_>>()?;
                if row.len() != bits {
                    return Err(Error::input(format!("line {no}: expected {bits} thresholds")));
                }
                rows.push(row);
            }
            Some(Booleanizer::from_thresholds(rows)?)
        };
        let rows: usize = num(field(next("automata")?, "automata")?)?;
        let mut state_rows = Vec::with_capacity(rows);
        for _ in 0..rows {
            let (no, line) = next("automaton states")?;
            state_rows.push(
                line.split_whitespace()
                    .map(|p| num((no, p)))
                    .collect::<Result<Vec<u32>>>()?,
            );
        }
        if let Some((no, _)) = lines.next() {
            return Err(Error::input(format!("line {}: trailing content", no + 1)));
        }

        if !states.is_multiple_of(2) {
            return Err(Error::input(format!("states must be even, got {states}")));
        }
        let config = TMConfig {
            inputs,
            classes,
            clauses_per_class: clauses,
            half_states: states / 2,
            threshold,
            sensitivity,
            rng: RngSpec::new(rng, seed)?,
            epochs,
            faults,
        };
        config.validate()?;
        if let Some(b) = &booleanizer {
            if b.inputs() != inputs {
                return Err(Error::input("booleanizer width does not match inputs"));
            }
        }
        let model = Model {
            config,
            booleanizer,
            states: state_rows,
        };
        model.machine()?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::input(format!("cannot read model {}: {e}", path.display())))?;
        Self::parse(&text)
    }
}
