//! The 2n-state Tsetlin automaton.
//!
//! States are numbered `1..=2n` and stored as their plain binary value, so
//! `s3` sits in the register as `011`. States `1..=n` select
//! [`Action::Exclude`], `n+1..=2n` select [`Action::Include`].
//!
//! A [`FaultSpec`] forces one register bit to a constant. The mask is applied
//! after every write, including initialization. A masked value outside
//! `1..=2n` is brought back by `((v - 1) mod 2n) + 1`, after which the mask
//! is applied once more; if that lands outside the range again the wrapped
//! value is kept, so the observable state is always valid.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    Exclude,
    Include,
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Action::Exclude => "Exclude",
            Action::Include => "Include",
        })
    }
}

/// One reinforcement signal delivered to an automaton.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Reinforcement {
    Reward,
    Penalty,
    Inaction,
}

impl Reinforcement {
    pub fn as_str(self) -> &'static str {
        match self {
            Reinforcement::Reward => "reward",
            Reinforcement::Penalty => "penalty",
            Reinforcement::Inaction => "inaction",
        }
    }
}

impl std::str::FromStr for Reinforcement {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reward" => Ok(Reinforcement::Reward),
            "penalty" => Ok(Reinforcement::Penalty),
            "inaction" => Ok(Reinforcement::Inaction),
            other => Err(Error::input(format!("unknown reinforcement {other:?}"))),
        }
    }
}

/// Single stuck-at fault on one bit of the state register.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FaultSpec {
    pub bit: u32,
    #[serde(rename = "stuck", with = "stuck_bit")]
    pub stuck_high: bool,
}

mod stuck_bit {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(u8::from(*v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match u8::deserialize(d)? {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(de::Error::custom(format!("stuck must be 0 or 1, got {other}"))),
        }
    }
}

impl FaultSpec {
    pub fn stuck_at_1(bit: u32) -> Self {
        FaultSpec {
            bit,
            stuck_high: true,
        }
    }

    pub fn stuck_at_0(bit: u32) -> Self {
        FaultSpec {
            bit,
            stuck_high: false,
        }
    }

    pub fn validate(&self, n: u32) -> Result<()> {
        let width = register_bits(n);
        if self.bit >= width {
            return Err(Error::config(format!(
                "fault bit {} outside the {width}-bit state register for 2n = {}",
                self.bit,
                2 * n
            )));
        }
        Ok(())
    }

    pub fn apply(&self, value: u32) -> u32 {
        if self.stuck_high {
            value | (1 << self.bit)
        } else {
            value & !(1 << self.bit)
        }
    }
}

impl fmt::Display for FaultSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "bit{}-stuck-{}", self.bit, u8::from(self.stuck_high))
    }
}

/// Bits needed to hold states `1..=2n`, i.e. `ceil(log2(2n + 1))`.
pub fn register_bits(n: u32) -> u32 {
    u32::BITS - (2 * n).leading_zeros()
}

/// Fewest rewards from a boundary state to the nearest saturated state.
pub fn min_steps_to_saturation(n: u32) -> u32 {
    n
}

/// What happened to the register on one write.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct WriteFlags {
    /// The stuck bit changed the written value.
    pub fault: bool,
    /// The value left `1..=2n` and was wrapped back.
    pub wrap: bool,
}

impl WriteFlags {
    pub fn any(&self) -> bool {
        self.fault || self.wrap
    }
}

/// Result of one `reinforce` call.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Transition {
    pub before: u32,
    pub after: u32,
    pub flags: WriteFlags,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TsetlinAutomaton {
    n: u32,
    state: u32,
    fault: Option<FaultSpec>,
}

impl TsetlinAutomaton {
    /// Starts in `s_n` or `s_{n+1}` with equal odds drawn from `rng`
    /// (a hit selects `s_n`), then applies the fault mask.
    pub fn init(n: u32, rng: &mut RngStream, fault: Option<FaultSpec>) -> Result<Self> {
        let low = rng.bernoulli(0.5)?;
        let raw = if low { n } else { n + 1 };
        Self::init_at(n, raw, fault)
    }

    /// Starts from an explicit raw state, then applies the fault mask.
    pub fn init_at(n: u32, raw: u32, fault: Option<FaultSpec>) -> Result<Self> {
        let mut ta = Self::with_state(n, raw, None)?;
        if let Some(f) = fault {
            f.validate(n)?;
        }
        ta.fault = fault;
        ta.state = ta.write(raw).0;
        Ok(ta)
    }

    /// Restores an automaton exactly as stored, without re-applying the mask.
    pub fn with_state(n: u32, state: u32, fault: Option<FaultSpec>) -> Result<Self> {
        if n == 0 {
            return Err(Error::config("automaton half-depth n must be at least 1"));
        }
        if n > u32::MAX / 4 {
            return Err(Error::config(format!("automaton half-depth {n} too large")));
        }
        if !(1..=2 * n).contains(&state) {
            return Err(Error::config(format!("state {state} outside 1..={}", 2 * n)));
        }
        if let Some(f) = fault {
            f.validate(n)?;
        }
        Ok(TsetlinAutomaton { n, state, fault })
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn state(&self) -> u32 {
        self.state
    }

    pub fn fault(&self) -> Option<FaultSpec> {
        self.fault
    }

    pub fn action(&self) -> Action {
        if self.state <= self.n {
            Action::Exclude
        } else {
            Action::Include
        }
    }

    #[inline]
    pub fn includes(&self) -> bool {
        self.state > self.n
    }

    fn wrap(&self, value: u32) -> u32 {
        let span = 2 * i64::from(self.n);
        ((i64::from(value) - 1).rem_euclid(span) + 1) as u32
    }

    fn in_range(&self, value: u32) -> bool {
        (1..=2 * self.n).contains(&value)
    }

    /// Pushes `raw` through the fault mask and range protection.
    fn write(&self, raw: u32) -> (u32, WriteFlags) {
        let mut flags = WriteFlags::default();
        let Some(fault) = self.fault else {
            return (raw, flags);
        };
        let masked = fault.apply(raw);
        flags.fault = masked != raw;
        if self.in_range(masked) {
            return (masked, flags);
        }
        flags.wrap = true;
        let wrapped = self.wrap(masked);
        let remasked = fault.apply(wrapped);
        if self.in_range(remasked) {
            (remasked, flags)
        } else {
            (wrapped, flags)
        }
    }

    pub fn reinforce(&mut self, event: Reinforcement) -> Transition {
        let before = self.state;
        let top = 2 * self.n;
        let raw = match (event, self.action()) {
            (Reinforcement::Inaction, _) => before,
            (Reinforcement::Reward, Action::Exclude) => before.saturating_sub(1).max(1),
            (Reinforcement::Reward, Action::Include) => (before + 1).min(top),
            (Reinforcement::Penalty, Action::Exclude) => before + 1,
            (Reinforcement::Penalty, Action::Include) => before - 1,
        };
        let (after, flags) = if event == Reinforcement::Inaction {
            (before, WriteFlags::default())
        } else {
            self.write(raw)
        };
        self.state = after;
        Transition {
            before,
            after,
            flags,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngSpec;

    const EVENTS: [Reinforcement; 3] = [
        Reinforcement::Reward,
        Reinforcement::Penalty,
        Reinforcement::Inaction,
    ];

    fn ta(n: u32, state: u32) -> TsetlinAutomaton {
        TsetlinAutomaton::with_state(n, state, None).unwrap()
    }

    #[test]
    fn init_low_and_high_draws() {
        // LFSR w=4 from state 1 outputs 8 first: not below 8, so a miss.
        let mut high = RngSpec::lfsr(4, 1).unwrap().stream();
        assert_eq!(TsetlinAutomaton::init(3, &mut high, None).unwrap().state(), 4);
        // From state 0b0011 the first output is 0b0001: a hit.
        let mut low = RngSpec::lfsr(4, 0b0011).unwrap().stream();
        assert_eq!(TsetlinAutomaton::init(3, &mut low, None).unwrap().state(), 3);
    }

    #[test]
    fn init_applies_fault_mask() {
        let f = Some(FaultSpec::stuck_at_1(0));
        assert_eq!(TsetlinAutomaton::init_at(3, 4, f).unwrap().state(), 5);
        assert_eq!(TsetlinAutomaton::init_at(3, 3, f).unwrap().state(), 3);
    }

    #[test]
    fn init_rejects_bad_fault_bit() {
        // 2n = 6 needs three bits
        assert!(TsetlinAutomaton::init_at(3, 3, Some(FaultSpec::stuck_at_1(2))).is_ok());
        assert!(TsetlinAutomaton::init_at(3, 3, Some(FaultSpec::stuck_at_1(3))).is_err());
        assert!(TsetlinAutomaton::init_at(4, 4, Some(FaultSpec::stuck_at_1(4))).is_err());
        assert!(TsetlinAutomaton::init_at(4, 4, Some(FaultSpec::stuck_at_1(3))).is_ok());
    }

    #[test]
    fn action_map() {
        assert_eq!(ta(3, 3).action(), Action::Exclude);
        assert_eq!(ta(3, 4).action(), Action::Include);
        assert_eq!(ta(1, 2).action(), Action::Include);
        assert_eq!(ta(1, 1).action(), Action::Exclude);
    }

    #[test]
    fn six_state_transition_table() {
        // (state, reward, penalty) per the six-state transition equations
        let table = [(1, 1, 2), (2, 1, 3), (3, 2, 4), (4, 5, 3), (5, 6, 4), (6, 6, 5)];
        for (s, r, p) in table {
            let mut a = ta(3, s);
            assert_eq!(a.reinforce(Reinforcement::Reward).after, r, "reward from {s}");
            let mut a = ta(3, s);
            assert_eq!(a.reinforce(Reinforcement::Penalty).after, p, "penalty from {s}");
            let mut a = ta(3, s);
            assert_eq!(a.reinforce(Reinforcement::Inaction).after, s);
        }
    }

    #[test]
    fn faulted_reward_from_top_wraps_to_one() {
        let f = Some(FaultSpec::stuck_at_1(0));
        let mut a = TsetlinAutomaton::with_state(3, 6, f).unwrap();
        let t = a.reinforce(Reinforcement::Reward);
        assert_eq!(t.after, 1);
        assert!(t.flags.wrap);
        let mut a = TsetlinAutomaton::with_state(3, 5, f).unwrap();
        let t = a.reinforce(Reinforcement::Reward);
        assert_eq!((t.before, t.after), (5, 1));
        assert!(t.flags.fault && t.flags.wrap);
    }

    #[test]
    fn faulted_penalty_from_three_lands_on_five() {
        let mut a = TsetlinAutomaton::init_at(3, 3, Some(FaultSpec::stuck_at_1(0))).unwrap();
        let t = a.reinforce(Reinforcement::Penalty);
        assert_eq!((t.before, t.after), (3, 5));
        assert!(t.flags.fault);
        assert!(!t.flags.wrap);
    }

    #[test]
    fn saturation_steps() {
        assert_eq!(min_steps_to_saturation(1), 1);
        assert_eq!(min_steps_to_saturation(3), 3);
        assert_eq!(min_steps_to_saturation(50), 50);
        // from s3: three rewards reach s1; one penalty plus three rewards reach s6
        let mut a = ta(3, 3);
        for _ in 0..3 {
            a.reinforce(Reinforcement::Reward);
        }
        assert_eq!(a.state(), 1);
        let mut a = ta(3, 3);
        a.reinforce(Reinforcement::Penalty);
        for _ in 0..min_steps_to_saturation(3) - 1 {
            a.reinforce(Reinforcement::Reward);
        }
        assert_eq!(a.state(), 6);
    }

    fn all_faults(n: u32) -> Vec<Option<FaultSpec>> {
        let mut v = vec![None];
        for bit in 0..register_bits(n) {
            v.push(Some(FaultSpec::stuck_at_0(bit)));
            v.push(Some(FaultSpec::stuck_at_1(bit)));
        }
        v
    }

    #[test]
    fn states_stay_in_range_exhaustively() {
        for n in 1..=16 {
            for fault in all_faults(n) {
                for s in 1..=2 * n {
                    for e in EVENTS {
                        let mut a = TsetlinAutomaton::with_state(n, s, fault).unwrap();
                        let t = a.reinforce(e);
                        assert!((1..=2 * n).contains(&t.after), "n={n} s={s} {e:?} {fault:?}");
                        if fault.is_none() {
                            assert!(t.after.abs_diff(s) <= 1);
                        }
                    }
                }
                for raw in [n, n + 1] {
                    let a = TsetlinAutomaton::init_at(n, raw, fault).unwrap();
                    assert!((1..=2 * n).contains(&a.state()));
                }
            }
        }
    }

    #[test]
    fn reward_never_flips_action() {
        for n in 1..=16 {
            for s in 1..=2 * n {
                let mut a = ta(n, s);
                let before = a.action();
                a.reinforce(Reinforcement::Reward);
                assert_eq!(a.action(), before);
            }
        }
    }

    #[test]
    fn bit0_stuck_high_reachable_set() {
        let f = Some(FaultSpec::stuck_at_1(0));
        let mut seen = std::collections::BTreeSet::new();
        let mut frontier: Vec<TsetlinAutomaton> = [3, 4]
            .iter()
            .map(|&r| TsetlinAutomaton::init_at(3, r, f).unwrap())
            .collect();
        while let Some(a) = frontier.pop() {
            if !seen.insert(a.state()) {
                continue;
            }
            for e in EVENTS {
                let mut b = a.clone();
                b.reinforce(e);
                frontier.push(b);
            }
        }
        assert_eq!(seen.into_iter().collect::<Vec<_>>(), vec![1, 3, 5]);
    }

    #[test]
    fn register_widths() {
        assert_eq!(register_bits(1), 2);
        assert_eq!(register_bits(3), 3);
        assert_eq!(register_bits(4), 4);
        assert_eq!(register_bits(6), 4);
        assert_eq!(register_bits(8), 5);
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(TsetlinAutomaton::with_state(0, 1, None).is_err());
        assert!(TsetlinAutomaton::with_state(3, 0, None).is_err());
        assert!(TsetlinAutomaton::with_state(3, 7, None).is_err());
    }
}
