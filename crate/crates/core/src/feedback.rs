//! Type I / Type II reinforcement probabilities and event sampling.
//!
//! Cells are indexed by feedback type, the automaton's current action, the
//! clause output and the literal value. The table is generic over the
//! number type so the same closed forms serve `f64` sampling and exact
//! rational analysis.
//!
//! | type | action  | clause | literal | reward   | inaction | penalty  |
//! |------|---------|--------|---------|----------|----------|----------|
//! | I    | include | 1      | 1       | (s-1)/s  | 1/s      | 0        |
//! | I    | include | 0      | any     | 0        | (s-1)/s  | 1/s      |
//! | I    | exclude | 1      | 1       | 0        | 1/s      | (s-1)/s  |
//! | I    | exclude | 1      | 0       | 1/s      | (s-1)/s  | 0        |
//! | I    | exclude | 0      | any     | 1/s      | (s-1)/s  | 0        |
//! | II   | exclude | 1      | 0       | 0        | 0        | 1        |
//! | II   | other reachable cells      | 0        | 1        | 0        |
//!
//! `include / clause 1 / literal 0` cannot happen: an included 0-literal
//! forces the clause to 0. Querying it is a [`Error::Contract`] violation.

use num_traits::Num;

use crate::automata::{Action, Reinforcement};
use crate::error::{Error, Result};
use crate::rng::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeedbackType {
    TypeI,
    TypeII,
}

impl FeedbackType {
    pub fn as_str(self) -> &'static str {
        match self {
            FeedbackType::TypeI => "I",
            FeedbackType::TypeII => "II",
        }
    }
}

impl std::str::FromStr for FeedbackType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "I" => Ok(FeedbackType::TypeI),
            "II" => Ok(FeedbackType::TypeII),
            other => Err(Error::input(format!("unknown feedback type {other:?}"))),
        }
    }
}

/// Reward / inaction / penalty probabilities of one cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CellProbs<T> {
    pub reward: T,
    pub inaction: T,
    pub penalty: T,
}

impl<T> CellProbs<T> {
    fn new(reward: T, inaction: T, penalty: T) -> Self {
        CellProbs {
            reward,
            inaction,
            penalty,
        }
    }
}

/// Looks up one cell for sensitivity `s` (> 1, not checked here).
pub fn cell<T>(
    kind: FeedbackType,
    action: Action,
    clause: bool,
    literal: bool,
    s: T,
) -> Result<CellProbs<T>>
where
    T: Num + Clone,
{
    if action == Action::Include && clause && !literal {
        return Err(Error::Contract(format!(
            "feedback cell {kind:?}/include/clause=1/literal=0 is unreachable"
        )));
    }
    let zero = T::zero;
    let one = T::one;
    let inv = || one() / s.clone();
    let rest = || (s.clone() - one()) / s.clone();
    let probs = match kind {
        FeedbackType::TypeI => match (action, clause, literal) {
            (Action::Include, true, _) => CellProbs::new(rest(), inv(), zero()),
            (Action::Include, false, _) => CellProbs::new(zero(), rest(), inv()),
            (Action::Exclude, true, true) => CellProbs::new(zero(), inv(), rest()),
            (Action::Exclude, _, _) => CellProbs::new(inv(), rest(), zero()),
        },
        FeedbackType::TypeII => match (action, clause, literal) {
            (Action::Exclude, true, false) => CellProbs::new(zero(), zero(), one()),
            _ => CellProbs::new(zero(), one(), zero()),
        },
    };
    Ok(probs)
}

/// Precomputed `f64` cells for one sensitivity value.
///
/// Indexing is `[type][action][clause][literal]`; the unreachable cells hold
/// `None`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeedbackTables {
    s: f64,
    cells: [[[[Option<CellProbs<f64>>; 2]; 2]; 2]; 2],
}

impl FeedbackTables {
    pub fn new(s: f64) -> Result<Self> {
        if !(s.is_finite() && s > 1.0) {
            return Err(Error::config(format!("learning sensitivity s must be > 1, got {s}")));
        }
        let mut cells = [[[[None; 2]; 2]; 2]; 2];
        for (ti, kind) in [FeedbackType::TypeI, FeedbackType::TypeII].into_iter().enumerate() {
            for (ai, action) in [Action::Exclude, Action::Include].into_iter().enumerate() {
                for c in 0..2 {
                    for l in 0..2 {
                        cells[ti][ai][c][l] = cell(kind, action, c == 1, l == 1, s).ok();
                    }
                }
            }
        }
        Ok(FeedbackTables { s, cells })
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    #[inline]
    pub fn get(
        &self,
        kind: FeedbackType,
        action: Action,
        clause: bool,
        literal: bool,
    ) -> Result<CellProbs<f64>> {
        let ti = (kind == FeedbackType::TypeII) as usize;
        let ai = (action == Action::Include) as usize;
        self.cells[ti][ai][clause as usize][literal as usize].ok_or_else(|| {
            Error::Contract(format!(
                "feedback cell {kind:?}/include/clause=1/literal=0 is unreachable"
            ))
        })
    }

    /// Samples one event for a cell; see [`sample_from`].
    #[inline]
    pub fn sample(
        &self,
        kind: FeedbackType,
        action: Action,
        clause: bool,
        literal: bool,
        rng: &mut RngStream,
    ) -> Result<Reinforcement> {
        sample_from(self.get(kind, action, clause, literal)?, rng)
    }
}

/// One stage of a cell draw. Probabilities of exactly 0 or 1 are decided
/// without touching the stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Draw {
    Never,
    Always,
    Below(u64),
}

impl Draw {
    fn new(p: f64, bits: u32) -> Self {
        if p <= 0.0 {
            Draw::Never
        } else if p >= 1.0 {
            Draw::Always
        } else {
            Draw::Below((p * (1u64 << bits) as f64).floor() as u64)
        }
    }

    #[inline]
    fn hit(self, rng: &mut RngStream) -> bool {
        match self {
            Draw::Never => false,
            Draw::Always => true,
            Draw::Below(t) => u64::from(rng.next_raw()) < t,
        }
    }
}

/// Integer-threshold form of one cell for a fixed generator width.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CellSampler {
    reward: Draw,
    penalty: Draw,
}

impl CellSampler {
    pub fn new(p: CellProbs<f64>, bits: u32) -> Self {
        let rest = 1.0 - p.reward;
        let conditional = if rest > 0.0 {
            (p.penalty / rest).clamp(0.0, 1.0)
        } else {
            0.0
        };
        CellSampler {
            reward: Draw::new(p.reward, bits),
            penalty: Draw::new(conditional, bits),
        }
    }

    #[inline]
    pub fn sample(&self, rng: &mut RngStream) -> Reinforcement {
        if self.reward.hit(rng) {
            Reinforcement::Reward
        } else if self.penalty.hit(rng) {
            Reinforcement::Penalty
        } else {
            Reinforcement::Inaction
        }
    }
}

/// All cells of a [`FeedbackTables`] pre-quantized for `bits`-wide draws.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SamplerTable {
    bits: u32,
    cells: [[[[Option<CellSampler>; 2]; 2]; 2]; 2],
}

impl SamplerTable {
    pub fn new(tables: &FeedbackTables, bits: u32) -> Self {
        let mut cells = [[[[None; 2]; 2]; 2]; 2];
        for (ti, kind) in cells.iter_mut().enumerate() {
            for (ai, action) in kind.iter_mut().enumerate() {
                for (c, clause) in action.iter_mut().enumerate() {
                    for (l, slot) in clause.iter_mut().enumerate() {
                        *slot = tables.cells[ti][ai][c][l].map(|p| CellSampler::new(p, bits));
                    }
                }
            }
        }
        SamplerTable { bits, cells }
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    #[inline]
    pub fn sample(
        &self,
        kind: FeedbackType,
        action: Action,
        clause: bool,
        literal: bool,
        rng: &mut RngStream,
    ) -> Result<Reinforcement> {
        debug_assert_eq!(rng.output_bits(), self.bits);
        let ti = (kind == FeedbackType::TypeII) as usize;
        let ai = (action == Action::Include) as usize;
        match &self.cells[ti][ai][clause as usize][literal as usize] {
            Some(c) => Ok(c.sample(rng)),
            None => Err(Error::Contract(format!(
                "feedback cell {kind:?}/include/clause=1/literal=0 is unreachable"
            ))),
        }
    }
}

/// Three-outcome draw: a trial against `reward`, and on a miss a second
/// against `penalty / (1 - reward)`. Each trial compares one raw word with
/// `floor(p * 2^w)`; trials with `p` of exactly 0 or 1 consume no draw.
pub fn sample_from(p: CellProbs<f64>, rng: &mut RngStream) -> Result<Reinforcement> {
    let valid = |v: f64| (0.0..=1.0).contains(&v);
    if !(valid(p.reward) && valid(p.penalty) && valid(p.inaction)) {
        return Err(Error::input(format!("cell probabilities out of range: {p:?}")));
    }
    Ok(CellSampler::new(p, rng.output_bits()).sample(rng))
}

/// One-shot form of [`FeedbackTables::sample`].
pub fn sample_event(
    kind: FeedbackType,
    action: Action,
    clause: bool,
    literal: bool,
    s: f64,
    rng: &mut RngStream,
) -> Result<Reinforcement> {
    if !(s.is_finite() && s > 1.0) {
        return Err(Error::config(format!("learning sensitivity s must be > 1, got {s}")));
    }
    sample_from(cell(kind, action, clause, literal, s)?, rng)
}
