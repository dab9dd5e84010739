//! Pseudorandom sources for the reinforcement hardware model.
//!
//! Two generators share one contract ([`RngStream`]): a PCG with 64-bit
//! state and 32-bit XSH-RR output, and Fibonacci LFSRs of width 4 to 32.
//!
//! # LFSR convention
//!
//! The register shifts right by one per step. The feedback bit is the XOR of
//! the tapped bits and enters at the MSB (bit `w - 1`). Taps are written in
//! the usual polynomial notation `x^w + x^a + ... + 1`, listed as
//! `{w, a, ...}`; tap `t` reads register bit `w - t`, so tap `w` is always
//! the bit about to be shifted out. For `w = 4`, taps `{4, 3}` and state
//! `0b0001`, the feedback is `bit0 ^ bit1 = 1` and the next state is
//! `0b1000`.
//!
//! Every entry of [`LFSR_TAPS`] is a maximal-length tap set, so the register
//! cycles through all `2^w - 1` nonzero states.
//!
//! # Seed derivation
//!
//! Each automaton owns its own stream. Stream seeds are derived from a base
//! seed, a domain tag and an index with [`derive_seed`], a splitmix64-style
//! construction: `mix64(mix64(base ^ domain) + GOLDEN * (index + 1))` where
//! `GOLDEN = 0x9E37_79B9_7F4A_7C15`. `mix64` is a bijection, so distinct
//! indices under one base give distinct 64-bit seeds.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Maximal-length Fibonacci tap sets indexed by `width - 4`.
pub const LFSR_TAPS: [&[u32]; 29] = [
    &[4, 3],
    &[5, 3],
    &[6, 5],
    &[7, 6],
    &[8, 6, 5, 4],
    &[9, 5],
    &[10, 7],
    &[11, 9],
    &[12, 6, 4, 1],
    &[13, 4, 3, 1],
    &[14, 5, 3, 1],
    &[15, 14],
    &[16, 15, 13, 4],
    &[17, 14],
    &[18, 11],
    &[19, 6, 2, 1],
    &[20, 17],
    &[21, 19],
    &[22, 21],
    &[23, 18],
    &[24, 23, 22, 17],
    &[25, 22],
    &[26, 6, 2, 1],
    &[27, 5, 2, 1],
    &[28, 25],
    &[29, 27],
    &[30, 6, 4, 1],
    &[31, 28],
    &[32, 22, 2, 1],
];

pub const MIN_LFSR_WIDTH: u32 = 4;
pub const MAX_LFSR_WIDTH: u32 = 32;

const PCG_MULTIPLIER: u64 = 6_364_136_223_846_793_005;
const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// 64-bit avalanche finalizer (splitmix64).
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent 64-bit seed for stream `index` in `domain`.
pub fn derive_seed(base: u64, domain: u64, index: u64) -> u64 {
    mix64(mix64(base ^ domain).wrapping_add(GOLDEN.wrapping_mul(index.wrapping_add(1))))
}

/// Which generator backs a stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RngKind {
    Pcg64,
    Lfsr { width: u32 },
}

impl RngKind {
    /// Number of bits in one raw output word.
    pub fn output_bits(self) -> u32 {
        match self {
            RngKind::Pcg64 => 32,
            RngKind::Lfsr { width } => width,
        }
    }
}

impl fmt::Display for RngKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RngKind::Pcg64 => f.write_str("pcg64"),
            RngKind::Lfsr { width } => write!(f, "lfsr:{width}"),
        }
    }
}

impl FromStr for RngKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("pcg64") || s.eq_ignore_ascii_case("pcg") {
            return Ok(RngKind::Pcg64);
        }
        if let Some(w) = s.strip_prefix("lfsr:") {
            let width: u32 = w
                .trim()
                .parse()
                .map_err(|_| Error::config(format!("bad LFSR width in {s:?}")))?;
            check_width(width)?;
            return Ok(RngKind::Lfsr { width });
        }
        Err(Error::config(format!(
            "unknown rng {s:?} (expected \"pcg64\" or \"lfsr:<width>\")"
        )))
    }
}

fn check_width(width: u32) -> Result<()> {
    if !(MIN_LFSR_WIDTH..=MAX_LFSR_WIDTH).contains(&width) {
        return Err(Error::config(format!(
            "LFSR width {width} outside {MIN_LFSR_WIDTH}..={MAX_LFSR_WIDTH}"
        )));
    }
    Ok(())
}

fn width_mask(width: u32) -> u64 {
    (1u64 << width) - 1
}

/// Generator choice plus seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RngSpec {
    kind: RngKind,
    seed: u64,
}

impl RngSpec {
    pub fn new(kind: RngKind, seed: u64) -> Result<Self> {
        if let RngKind::Lfsr { width } = kind {
            check_width(width)?;
            if seed & width_mask(width) == 0 {
                return Err(Error::config(format!(
                    "seed {seed} is zero modulo 2^{width}; an all-zero LFSR never leaves zero"
                )));
            }
        }
        Ok(RngSpec { kind, seed })
    }

    pub fn pcg64(seed: u64) -> Self {
        RngSpec {
            kind: RngKind::Pcg64,
            seed,
        }
    }

    pub fn lfsr(width: u32, seed: u64) -> Result<Self> {
        Self::new(RngKind::Lfsr { width }, seed)
    }

    pub fn kind(&self) -> RngKind {
        self.kind
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Same generator kind, seed replaced.
    ///
    /// For LFSRs a seed whose low `width` bits are zero gets its lowest bit
    /// set so the result is always a valid spec.
    pub fn with_seed(&self, seed: u64) -> Self {
        let seed = match self.kind {
            RngKind::Pcg64 => seed,
            RngKind::Lfsr { width } => {
                if seed & width_mask(width) == 0 {
                    seed | 1
                } else {
                    seed
                }
            }
        };
        RngSpec {
            kind: self.kind,
            seed,
        }
    }

    /// Spec for stream `index` of `domain`, derived from this spec's seed.
    pub fn derive(&self, domain: u64, index: u64) -> Self {
        self.with_seed(derive_seed(self.seed, domain, index))
    }

    pub fn stream(&self) -> RngStream {
        RngStream::new(*self)
    }
}

/// PCG-XSH-RR: 64-bit LCG state, 32-bit permuted output.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pcg32 {
    state: u64,
    inc: u64,
}

impl Pcg32 {
    /// Seeds with an explicit stream selector, following the reference
    /// `pcg32_srandom` procedure.
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = Pcg32 {
            state: 0,
            inc: (stream << 1) | 1,
        };
        rng.step();
        rng.state = rng.state.wrapping_add(seed);
        rng.step();
        rng
    }

    /// Seeds from a single value; the odd increment is derived from the seed.
    pub fn from_seed(seed: u64) -> Self {
        Self::with_stream(seed, mix64(seed ^ GOLDEN))
    }

    fn step(&mut self) {
        self.state = self
            .state
            .wrapping_mul(PCG_MULTIPLIER)
            .wrapping_add(self.inc);
    }

    pub fn next_u32(&mut self) -> u32 {
        let old = self.state;
        self.step();
        let xorshifted = (((old >> 18) ^ old) >> 27) as u32;
        let rot = (old >> 59) as u32;
        xorshifted.rotate_right(rot)
    }

    /// Uniform integer in `0..bound` by rejection; `bound` must be nonzero.
    pub fn below(&mut self, bound: u32) -> u32 {
        debug_assert!(bound > 0);
        let threshold = bound.wrapping_neg() % bound;
        loop {
            let r = self.next_u32();
            if r >= threshold {
                return r % bound;
            }
        }
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u32 + 1) as usize;
            items.swap(i, j);
        }
    }
}

/// Fibonacci LFSR of width 4..=32.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Lfsr {
    width: u32,
    tap_mask: u32,
    state: u32,
}

impl Lfsr {
    /// Builds a register from its initial state, which must be nonzero
    /// in the low `width` bits.
    pub fn new(width: u32, state: u32) -> Result<Self> {
        check_width(width)?;
        let state = (u64::from(state) & width_mask(width)) as u32;
        if state == 0 {
            return Err(Error::config("LFSR state must be nonzero"));
        }
        let tap_mask = LFSR_TAPS[(width - MIN_LFSR_WIDTH) as usize]
            .iter()
            .fold(0u32, |m, &t| m | (1 << (width - t)));
        Ok(Lfsr {
            width,
            tap_mask,
            state,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn state(&self) -> u32 {
        self.state
    }

    /// One shift; returns the new register contents.
    pub fn next_state(&mut self) -> u32 {
        let feedback = (self.state & self.tap_mask).count_ones() & 1;
        self.state = (self.state >> 1) | (feedback << (self.width - 1));
        self.state
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Source {
    Pcg(Pcg32),
    Lfsr(Lfsr),
}

/// A single-owner pseudorandom stream.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RngStream {
    spec: RngSpec,
    source: Source,
}

impl RngStream {
    pub fn new(spec: RngSpec) -> Self {
        let source = match spec.kind {
            RngKind::Pcg64 => Source::Pcg(Pcg32::from_seed(spec.seed)),
            RngKind::Lfsr { width } => {
                let state = (spec.seed & width_mask(width)) as u32;
                // RngSpec construction guarantees a nonzero register.
                Source::Lfsr(Lfsr::new(width, state).expect("validated LFSR spec"))
            }
        };
        RngStream { spec, source }
    }

    pub fn spec(&self) -> &RngSpec {
        &self.spec
    }

    pub fn output_bits(&self) -> u32 {
        self.spec.kind.output_bits()
    }

    pub fn next_raw(&mut self) -> u32 {
        match &mut self.source {
            Source::Pcg(p) => p.next_u32(),
            Source::Lfsr(l) => l.next_state(),
        }
    }

    /// Draws one raw word and returns `raw < floor(p * 2^w)`.
    ///
    /// Always consumes exactly one draw. `p = 1` is forced true so that
    /// rounding in `p * 2^w` can never turn a certain event into a miss.
    pub fn bernoulli(&mut self, p: f64) -> Result<bool> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::input(format!("probability {p} outside [0, 1]")));
        }
        let raw = u64::from(self.next_raw());
        if p >= 1.0 {
            return Ok(true);
        }
        let threshold = (p * (1u64 << self.output_bits()) as f64).floor() as u64;
        Ok(raw < threshold)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn lfsr_period(width: u32) -> u64 {
        let mut l = Lfsr::new(width, 1).unwrap();
        let start = l.state();
        let mut n = 0u64;
        loop {
            n += 1;
            if l.next_state() == start {
                return n;
            }
        }
    }

    #[test]
    fn lfsr4_single_step() {
        let mut l = Lfsr::new(4, 0b0001).unwrap();
        assert_eq!(l.next_state(), 0b1000);
    }

    #[test]
    fn lfsr4_hand_stepped_sequence() {
        // state -> (bit0 ^ bit1) << 3 | state >> 1
        let expected = [
            0b1000, 0b0100, 0b0010, 0b1001, 0b1100, 0b0110, 0b1011, 0b0101, 0b1010, 0b1101,
            0b1110, 0b1111, 0b0111, 0b0011, 0b0001,
        ];
        let mut l = Lfsr::new(4, 1).unwrap();
        for e in expected {
            assert_eq!(l.next_state(), e);
        }
    }

    #[test]
    fn lfsr4_visits_fifteen_states() {
        let mut l = Lfsr::new(4, 1).unwrap();
        let seen: HashSet<u32> = (0..15).map(|_| l.next_state()).collect();
        assert_eq!(seen.len(), 15);
        assert!(!seen.contains(&0));
        assert_eq!(l.next_state(), 0b1000);
    }

    #[test]
    fn small_lfsr_periods_are_maximal() {
        for w in 4..=16 {
            assert_eq!(lfsr_period(w), (1u64 << w) - 1, "width {w}");
        }
    }

    #[test]
    #[ignore = "walks 2^w states per width; run with --ignored in release"]
    fn all_lfsr_periods_are_maximal() {
        for w in 17..=32 {
            assert_eq!(lfsr_period(w), (1u64 << w) - 1, "width {w}");
        }
    }

    #[test]
    fn pcg_reference_vector() {
        // pcg32-demo, seed 42, sequence 54.
        let mut p = Pcg32::with_stream(42, 54);
        let got: Vec<u32> = (0..6).map(|_| p.next_u32()).collect();
        assert_eq!(
            got,
            [0xa15c02b7, 0x7b47f409, 0xba1d3330, 0x83d2f293, 0xbfa4784b, 0xcbed606e]
        );
    }

    #[test]
    fn pcg_seed_42_is_not_constant() {
        let mut s = RngSpec::pcg64(42).stream();
        assert_ne!(s.next_raw(), s.next_raw());
    }

    #[test]
    fn identical_specs_give_identical_sequences() {
        for spec in [RngSpec::pcg64(7), RngSpec::lfsr(9, 7).unwrap()] {
            let mut a = spec.stream();
            let mut b = spec.stream();
            for _ in 0..100 {
                assert_eq!(a.next_raw(), b.next_raw());
            }
        }
    }

    #[test]
    fn bernoulli_extremes() {
        for spec in [RngSpec::pcg64(3), RngSpec::lfsr(4, 3).unwrap()] {
            let mut s = spec.stream();
            for _ in 0..64 {
                assert!(!s.bernoulli(0.0).unwrap());
                assert!(s.bernoulli(1.0).unwrap());
            }
        }
    }

    #[test]
    fn bernoulli_rejects_bad_probability() {
        let mut s = RngSpec::pcg64(0).stream();
        assert!(s.bernoulli(-0.1).is_err());
        assert!(s.bernoulli(1.5).is_err());
        assert!(s.bernoulli(f64::NAN).is_err());
    }

    #[test]
    fn lfsr4_half_probability_over_period() {
        let mut s = RngSpec::lfsr(4, 1).unwrap().stream();
        let hits = (0..15).filter(|_| s.bernoulli(0.5).unwrap()).count();
        assert_eq!(hits, 7);
    }

    #[test]
    fn bernoulli_quantization_bound_over_full_period() {
        for w in 4..=8u32 {
            let period = (1usize << w) - 1;
            for &p in &[0.05, 0.1, 0.25, 1.0 / 3.0, 0.5, 0.8333, 0.9, 0.99] {
                let mut s = RngSpec::lfsr(w, 5).unwrap().stream();
                let hits = (0..period).filter(|_| s.bernoulli(p).unwrap()).count();
                let freq = hits as f64 / period as f64;
                // one quantization step of the threshold plus the missing zero state
                let bound = 2.0 / period as f64;
                assert!((freq - p).abs() <= bound, "w={w} p={p} freq={freq}");
            }
        }
    }

    #[test]
    fn lfsr_spec_rejects_zero_register() {
        assert!(RngSpec::lfsr(4, 16).is_err());
        assert!(RngSpec::lfsr(4, 17).is_ok());
        assert!(RngSpec::lfsr(3, 1).is_err());
        assert!(RngSpec::lfsr(33, 1).is_err());
    }

    #[test]
    fn derived_specs_stay_valid() {
        let base = RngSpec::lfsr(4, 1).unwrap();
        for i in 0..1000 {
            let d = base.derive(11, i);
            assert!(RngSpec::new(d.kind(), d.seed()).is_ok());
        }
    }

    #[test]
    fn derived_seeds_are_distinct() {
        let seeds: HashSet<u64> = (0..10_000).map(|i| derive_seed(99, 1, i)).collect();
        assert_eq!(seeds.len(), 10_000);
    }

    #[test]
    fn kind_round_trips_through_text() {
        for text in ["pcg64", "lfsr:4", "lfsr:32"] {
            let k: RngKind = text.parse().unwrap();
            assert_eq!(k.to_string(), text);
        }
        assert!("lfsr:2".parse::<RngKind>().is_err());
        assert!("xorshift".parse::<RngKind>().is_err());
    }
}
