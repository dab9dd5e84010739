//! Single-clause payoff game.
//!
//! A clause over `k` inputs is a team of `2k` automata, one per literal in
//! the order `x1, ¬x1, x2, ¬x2, ...`. Each of the `4^k` include/exclude
//! configurations is a row; row `r` (0-based) encodes the actions in binary
//! with the first automaton as the most significant bit and `1 = Include`.
//!
//! An automaton's expected payoff in a row is the mean over the `2^k`
//! equiprobable inputs of `P(Reward) - P(Penalty)` for its feedback cell.
//! Type I feedback is given when the target is 1 and Type II when it is 0.
//! Everything here is exact rational arithmetic.

use std::fmt::Write as _;

use num_rational::Ratio;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::automata::Action;
use crate::error::{Error, Result};
use crate::feedback::{cell, FeedbackType};

pub type Rational = Ratio<i64>;

pub const MAX_GAME_INPUTS: usize = 8;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BooleanTarget {
    k: usize,
    /// Indexed by the input word with `x1` as the most significant bit.
    truth_table: Vec<bool>,
}

impl BooleanTarget {
    pub fn new(k: usize, truth_table: Vec<bool>) -> Result<Self> {
        if k == 0 || k > MAX_GAME_INPUTS {
            return Err(Error::config(format!("game input count must be 1..={MAX_GAME_INPUTS}, got {k}")));
        }
        if truth_table.len() != 1 << k {
            return Err(Error::config(format!(
                "truth table for {k} inputs needs {} entries, got {}",
                1 << k,
                truth_table.len()
            )));
        }
        Ok(BooleanTarget { k, truth_table })
    }

    pub fn from_fn(k: usize, f: impl Fn(&[bool]) -> bool) -> Result<Self> {
        let table = (0..1usize << k).map(|w| f(&input_bits(k, w))).collect();
        Self::new(k, table)
    }

    pub fn xor() -> Self {
        Self::from_fn(2, |x| x[0] ^ x[1]).expect("static target")
    }

    pub fn and(k: usize) -> Result<Self> {
        Self::from_fn(k, |x| x.iter().all(|&b| b))
    }

    pub fn constant(k: usize, value: bool) -> Result<Self> {
        Self::new(k, vec![value; 1 << k])
    }

    /// Parses a named target (`xor`, `and`, `or`, `true`, `false`,
    /// `identity`) or a bit string such as `0110` (length `2^k`).
    pub fn parse(name: &str, k: usize) -> Result<Self> {
        match name {
            "xor" => Self::from_fn(k, |x| x.iter().fold(false, |a, &b| a ^ b)),
            "and" => Self::and(k),
            "or" => Self::from_fn(k, |x| x.iter().any(|&b| b)),
            "true" => Self::constant(k, true),
            "false" => Self::constant(k, false),
            "identity" => Self::from_fn(k, |x| x[0]),
            bits if !bits.is_empty() && bits.chars().all(|c| c == '0' || c == '1') => {
                Self::new(k, bits.chars().map(|c| c == '1').collect())
            }
            other => Err(Error::config(format!("unknown game target {other:?}"))),
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn eval(&self, word: usize) -> bool {
        self.truth_table[word]
    }
}

fn input_bits(k: usize, word: usize) -> Vec<bool> {
    (0..k).map(|i| word >> (k - 1 - i) & 1 == 1).collect()
}

/// Actions of all `2k` automata in a row.
pub fn row_actions(k: usize, row: usize) -> Vec<Action> {
    let n = 2 * k;
    (0..n)
        .map(|i| {
            if row >> (n - 1 - i) & 1 == 1 {
                Action::Include
            } else {
                Action::Exclude
            }
        })
        .collect()
}

/// Row index of an action vector.
pub fn row_index(actions: &[Action]) -> usize {
    actions
        .iter()
        .fold(0, |acc, &a| acc << 1 | usize::from(a == Action::Include))
}

fn literal_name(i: usize) -> String {
    let var = i / 2 + 1;
    if i.is_multiple_of(2) {
        format!("x{var}")
    } else {
        format!("¬x{var}")
    }
}

/// Conjunction of the included literals; `1` when none are included.
pub fn clause_expr(actions: &[Action]) -> String {
    let parts: Vec<String> = actions
        .iter()
        .enumerate()
        .filter(|(_, &a)| a == Action::Include)
        .map(|(i, _)| literal_name(i))
        .collect();
    if parts.is_empty() {
        "1".to_string()
    } else {
        parts.join(" ∧ ")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PayoffMatrix {
    pub k: usize,
    pub s: Rational,
    /// `payoff[row][ta]`.
    pub payoff: Vec<Vec<Rational>>,
    pub clause_expr: Vec<String>,
}

impl PayoffMatrix {
    pub fn rows(&self) -> usize {
        self.payoff.len()
    }

    pub fn automata(&self) -> usize {
        2 * self.k
    }

    pub fn actions(&self, row: usize) -> Vec<Action> {
        row_actions(self.k, row)
    }
}

fn check_s(s: Rational) -> Result<()> {
    if s <= Rational::one() {
        return Err(Error::config(format!("game sensitivity must exceed 1, got {s}")));
    }
    Ok(())
}

/// Per-automaton tally of how many inputs land in each feedback cell,
/// indexed `[type][clause][literal]`.
type CellCounts = [[[i64; 2]; 2]; 2];

fn cell_counts(actions: &[Action], f: &BooleanTarget) -> Vec<CellCounts> {
    let k = f.k;
    let mut counts = vec![[[[0i64; 2]; 2]; 2]; 2 * k];
    for word in 0..1usize << k {
        let x = input_bits(k, word);
        let lit = |i: usize| x[i / 2] ^ (i % 2 == 1);
        let clause = actions
            .iter()
            .enumerate()
            .all(|(i, &a)| a == Action::Exclude || lit(i));
        let kind = usize::from(!f.eval(word));
        for (i, c) in counts.iter_mut().enumerate() {
            c[kind][usize::from(clause)][usize::from(lit(i))] += 1;
        }
    }
    counts
}

fn net(kind: FeedbackType, action: Action, clause: bool, literal: bool, s: Rational) -> Rational {
    let p = cell(kind, action, clause, literal, s)
        .expect("an included false literal forces the clause to 0");
    p.reward - p.penalty
}

fn payoffs_from_counts(actions: &[Action], counts: &[CellCounts], k: usize, s: Rational) -> Vec<Rational> {
    let inputs = Rational::from_integer(1 << k);
    actions
        .iter()
        .zip(counts)
        .map(|(&a, c)| {
            let mut total = Rational::zero();
            for (ki, kind) in [FeedbackType::TypeI, FeedbackType::TypeII].into_iter().enumerate() {
                for clause in [false, true] {
                    for literal in [false, true] {
                        let n = c[ki][usize::from(clause)][usize::from(literal)];
                        if n != 0 {
                            total += net(kind, a, clause, literal, s) * n;
                        }
                    }
                }
            }
            total / inputs
        })
        .collect()
}

/// Expected payoff of automaton `ta` in configuration `config`.
pub fn expected_payoff(config: &[Action], ta: usize, f: &BooleanTarget, s: Rational) -> Result<Rational> {
    check_s(s)?;
    if config.len() != 2 * f.k {
        return Err(Error::config(format!(
            "configuration has {} actions, target needs {}",
            config.len(),
            2 * f.k
        )));
    }
    if ta >= config.len() {
        return Err(Error::config(format!("automaton index {ta} out of range")));
    }
    let counts = cell_counts(config, f);
    Ok(payoffs_from_counts(config, &counts, f.k, s)[ta])
}

pub fn payoff_matrix(f: &BooleanTarget, s: Rational) -> Result<PayoffMatrix> {
    check_s(s)?;
    let k = f.k;
    let mut payoff = Vec::with_capacity(1 << (2 * k));
    let mut exprs = Vec::with_capacity(1 << (2 * k));
    for row in 0..1usize << (2 * k) {
        let actions = row_actions(k, row);
        let counts = cell_counts(&actions, f);
        payoff.push(payoffs_from_counts(&actions, &counts, k, s));
        exprs.push(clause_expr(&actions));
    }
    Ok(PayoffMatrix {
        k,
        s,
        payoff,
        clause_expr: exprs,
    })
}

/// Rows where no single automaton gains by switching its own action.
pub fn nash_equilibria(m: &PayoffMatrix) -> Vec<usize> {
    let n = m.automata();
    (0..m.rows())
        .filter(|&row| {
            (0..n).all(|ta| {
                let flipped = row ^ (1 << (n - 1 - ta));
                m.payoff[flipped][ta] <= m.payoff[row][ta]
            })
        })
        .collect()
}

/// Equilibria in which every automaton's payoff is strictly positive.
pub fn accepted_equilibria(m: &PayoffMatrix) -> Vec<usize> {
    nash_equilibria(m)
        .into_iter()
        .filter(|&row| m.payoff[row].iter().all(|p| p.is_positive()))
        .collect()
}

/// Published XOR payoffs at `s = 4`, in sixteenths, rows in matrix order.
pub const PUBLISHED_XOR_S4: [[i64; 4]; 16] = [
    [-10, -10, -10, -10],
    [-6, 2, -3, 2],
    [1, -6, 2, -3],
    [2, 2, -2, -2],
    [-3, 2, -6, 1],
    [-2, -2, -2, -2],
    [1, 2, 2, 1],
    [2, -2, -2, -2],
    [2, -3, 2, -6],
    [2, 1, 1, 2],
    [-2, -2, -2, -2],
    [-2, 2, -2, -2],
    [-2, -2, 2, 2],
    [-2, -2, 2, -2],
    [-2, -2, -2, 2],
    [-2, -2, -2, -2],
];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CellDivergence {
    /// 0-based row.
    pub row: usize,
    pub ta: usize,
    pub published: Rational,
    pub computed: Rational,
}

/// Cells of an XOR matrix at `s = 4` that differ from the published table.
pub fn xor_divergences(m: &PayoffMatrix) -> Vec<CellDivergence> {
    let mut out = Vec::new();
    for (row, published) in PUBLISHED_XOR_S4.iter().enumerate() {
        for (ta, &p) in published.iter().enumerate() {
            let published = Rational::new(p, 16);
            let computed = m.payoff[row][ta];
            if published != computed {
                out.push(CellDivergence {
                    row,
                    ta,
                    published,
                    computed,
                });
            }
        }
    }
    out
}

fn action_word(a: Action) -> &'static str {
    match a {
        Action::Include => "Include",
        Action::Exclude => "Exclude",
    }
}

fn decimal(r: Rational) -> String {
    format!("{}", r.to_f64().unwrap_or(f64::NAN))
}

/// Aligned text table; accepted equilibria are marked with `*`.
pub fn render_text(m: &PayoffMatrix) -> String {
    let accepted = accepted_equilibria(m);
    let nash = nash_equilibria(m);
    let n = m.automata();
    let cells: Vec<Vec<String>> = (0..m.rows())
        .map(|row| {
            m.actions(row)
                .iter()
                .zip(&m.payoff[row])
                .map(|(&a, &p)| format!("{} ({})", action_word(a), decimal(p)))
                .collect()
        })
        .collect();
    let mut widths: Vec<usize> = (0..n).map(|i| format!("TA{} {}", i + 1, literal_name(i)).chars().count()).collect();
    for r in &cells {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let pad = |s: &str, w: usize| format!("{s}{}", " ".repeat(w.saturating_sub(s.chars().count())));
    let mut out = String::new();
    let _ = write!(out, "{:>4}  ", "#");
    for (i, w) in widths.iter().enumerate() {
        let _ = write!(out, "{}  ", pad(&format!("TA{} {}", i + 1, literal_name(i)), *w));
    }
    out.push_str("clause\n");
    for (row, r) in cells.iter().enumerate() {
        let mark = if accepted.contains(&row) {
            '*'
        } else if nash.contains(&row) {
            '+'
        } else {
            ' '
        };
        let _ = write!(out, "{:>3}{mark}  ", row + 1);
        for (c, w) in r.iter().zip(&widths) {
            let _ = write!(out, "{}  ", pad(c, *w));
        }
        out.push_str(&m.clause_expr[row]);
        out.push('\n');
    }
    let _ = writeln!(out, "\n* accepted equilibrium, + Nash equilibrium with a non-positive payoff");
    out
}

/// CSV with one row per configuration: actions, exact payoffs, decimal
/// payoffs, clause and equilibrium flags.
pub fn render_csv(m: &PayoffMatrix) -> String {
    let accepted = accepted_equilibria(m);
    let nash = nash_equilibria(m);
    let n = m.automata();
    let mut out = String::from("row");
    for i in 0..n {
        let _ = write!(out, ",ta{0}_action,ta{0}_payoff,ta{0}_payoff_f64", i + 1);
    }
    out.push_str(",clause,nash,accepted\n");
    for row in 0..m.rows() {
        let _ = write!(out, "{}", row + 1);
        for (a, p) in m.actions(row).iter().zip(&m.payoff[row]) {
            let _ = write!(out, ",{},{},{}", action_word(*a).to_lowercase(), p, decimal(*p));
        }
        let _ = writeln!(
            out,
            ",\"{}\",{},{}",
            m.clause_expr[row],
            nash.contains(&row),
            accepted.contains(&row)
        );
    }
    out
}

/// Parses `4`, `1.2`, or `6/5` into an exact rational.
pub fn parse_rational(text: &str) -> Result<Rational> {
    let bad = || Error::config(format!("cannot parse {text:?} as a rational number"));
    let text = text.trim();
    if let Some((n, d)) = text.split_once('/') {
        let n: i64 = n.trim().parse().map_err(|_| bad())?;
        let d: i64 = d.trim().parse().map_err(|_| bad())?;
        if d == 0 {
            return Err(bad());
        }
        return Ok(Rational::new(n, d));
    }
    if let Some((int, frac)) = text.split_once('.') {
        if frac.len() > 12 || !frac.chars().all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        let den = 10i64.pow(frac.len() as u32);
        let neg = int.starts_with('-');
        let int: i64 = if int.is_empty() || int == "-" { 0 } else { int.parse().map_err(|_| bad())? };
        let frac: i64 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| bad())? };
        let mag = int.abs() * den + frac;
        return Ok(Rational::new(if neg { -mag } else { mag }, den));
    }
    Ok(Rational::from_integer(text.parse().map_err(|_| bad())?))
}
