//! Exit criteria. Each test prints one `criterion N: PASS|FAIL` line to
//! stderr (bypassing the capture) and then asserts.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::PathBuf;

use num_rational::Ratio;
use num_traits::{One, ToPrimitive, Zero};
use tsetlin_core::automata::{Action, FaultSpec, Reinforcement, TsetlinAutomaton};
use tsetlin_core::datasets::xor_dataset;
use tsetlin_core::experiments::{
    run_fault_campaign, run_lfsr_study, run_sweep, CampaignResult, DatasetSpec, FaultCampaignSpec,
    LfsrStudySpec, SweepSpec,
};
use tsetlin_core::feedback::{cell, FeedbackTables, FeedbackType};
use tsetlin_core::game::{self, BooleanTarget};
use tsetlin_core::machine::{Machine, PlacedFault, TMConfig};
use tsetlin_core::rng::{Lfsr, RngKind, RngSpec};
use tsetlin_core::trace::{detect_convergence, record_fit, replay};
use tsetlin_core::Error;

type Q = Ratio<i64>;

const SEED: u64 = 1;

fn report(n: u32, name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let line = format!("criterion {n:>2}: {verdict}  {name}  [{detail}]\n");
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn xor_config(clauses: usize, half_states: u32, seed: u64) -> TMConfig {
    let mut c = TMConfig::new(2, 2, clauses);
    c.half_states = half_states;
    c.threshold = 1;
    c.sensitivity = 3.0;
    c.rng = RngSpec::pcg64(seed);
    c
}

fn first_ta_fault() -> PlacedFault {
    PlacedFault {
        clause: 0,
        ta: 0,
        fault: FaultSpec::stuck_at_1(0),
    }
}

// Reward / inaction / penalty per cell, written out by hand. `None` marks
// the include / clause 1 / literal 0 cells that cannot occur.
fn expected_cell(kind: FeedbackType, action: Action, clause: bool, literal: bool, s: Q) -> Option<[Q; 3]> {
    let one = Q::one();
    let zero = Q::zero();
    let inv = one / s;
    let rest = (s - one) / s;
    use Action::{Exclude, Include};
    use FeedbackType::{TypeI, TypeII};
    Some(match (kind, action, clause, literal) {
        (_, Include, true, false) => return None,
        (TypeI, Include, true, true) => [rest, inv, zero],
        (TypeI, Include, false, _) => [zero, rest, inv],
        (TypeI, Exclude, true, true) => [zero, inv, rest],
        (TypeI, Exclude, true, false) => [inv, rest, zero],
        (TypeI, Exclude, false, _) => [inv, rest, zero],
        (TypeII, Exclude, true, false) => [zero, zero, one],
        (TypeII, _, _, _) => [zero, one, zero],
    })
}

const ALL_CELLS: [(FeedbackType, Action, bool, bool); 16] = {
    use Action::{Exclude, Include};
    use FeedbackType::{TypeI, TypeII};
    [
        (TypeI, Include, true, true),
        (TypeI, Include, true, false),
        (TypeI, Include, false, true),
        (TypeI, Include, false, false),
        (TypeI, Exclude, true, true),
        (TypeI, Exclude, true, false),
        (TypeI, Exclude, false, true),
        (TypeI, Exclude, false, false),
        (TypeII, Include, true, true),
        (TypeII, Include, true, false),
        (TypeII, Include, false, true),
        (TypeII, Include, false, false),
        (TypeII, Exclude, true, true),
        (TypeII, Exclude, true, false),
        (TypeII, Exclude, false, true),
        (TypeII, Exclude, false, false),
    ]
};

#[test]
fn criterion_01_feedback_table_fidelity() {
    let mut checked = 0;
    let mut failures = Vec::new();
    for text in ["1.1", "1.2", "1.9", "4", "10", "20"] {
        let s = game::parse_rational(text).unwrap();
        let tables = FeedbackTables::new(s.to_f64().unwrap()).unwrap();
        for &(kind, action, clause, literal) in &ALL_CELLS {
            let got = cell(kind, action, clause, literal, s);
            match expected_cell(kind, action, clause, literal, s) {
                None => {
                    if !matches!(got, Err(Error::Contract(_))) {
                        failures.push(format!("s={text} {kind:?}/{action:?}/{clause}/{literal} should be unreachable"));
                    }
                    if tables.get(kind, action, clause, literal).is_ok() {
                        failures.push(format!("s={text} f64 table answers an unreachable cell"));
                    }
                }
                Some(want) => {
                    let got = got.unwrap();
                    checked += 1;
                    if [got.reward, got.inaction, got.penalty] != want {
                        failures.push(format!("s={text} {kind:?}/{action:?}/{clause}/{literal}"));
                    }
                    if got.reward + got.inaction + got.penalty != Q::one() {
                        failures.push(format!("s={text} row sum"));
                    }
                    let f = tables.get(kind, action, clause, literal).unwrap();
                    for (a, b) in [f.reward, f.inaction, f.penalty].iter().zip(&want) {
                        if (a - b.to_f64().unwrap()).abs() > 1e-15 {
                            failures.push(format!("s={text} f64 cell drift"));
                        }
                    }
                }
            }
        }
    }
    let pass = failures.is_empty() && checked == 6 * 14;
    report(1, "feedback table fidelity", pass, &format!("{checked} reachable cells checked, {} mismatches", failures.len()));
    assert!(pass, "{failures:?}");
}

/// Payoff of automaton `ta` by enumerating all four inputs.
///
/// Automata are ordered x1, ¬x1, x2, ¬x2 and the row index reads their
/// actions as a binary number with the first automaton as the top bit.
fn brute_force_payoff(row: usize, ta: usize, s: Q) -> Q {
    let include = |i: usize| (row >> (3 - i)) & 1 == 1;
    let mut total = Q::zero();
    for x1 in [false, true] {
        for x2 in [false, true] {
            let literals = [x1, !x1, x2, !x2];
            let clause = (0..4).all(|i| !include(i) || literals[i]);
            let kind = if x1 ^ x2 { FeedbackType::TypeI } else { FeedbackType::TypeII };
            let action = if include(ta) { Action::Include } else { Action::Exclude };
            let [reward, _, penalty] = expected_cell(kind, action, clause, literals[ta], s)
                .expect("a single clause never reaches the unreachable cell");
            total += reward - penalty;
        }
    }
    total / 4
}

#[test]
fn criterion_02_game_analysis() {
    let s = Q::from_integer(4);
    let m = game::payoff_matrix(&BooleanTarget::xor(), s).unwrap();
    let mut mismatched = 0;
    for row in 0..16 {
        for ta in 0..4 {
            if m.payoff[row][ta] != brute_force_payoff(row, ta, s) {
                mismatched += 1;
            }
        }
    }
    let accepted: BTreeSet<String> = game::accepted_equilibria(&m)
        .into_iter()
        .map(|r| m.clause_expr[r].clone())
        .collect();
    let want: BTreeSet<String> = ["¬x1 ∧ x2", "x1 ∧ ¬x2"].into_iter().map(String::from).collect();

    let close = |row: usize, ta: usize, v: f64| (m.payoff[row][ta].to_f64().unwrap() - v).abs() <= 1e-12;
    let mut confirmed = close(1, 0, -0.375) && close(8, 0, 0.125);
    let mut constant_rows = 0;
    for row in 0..16 {
        let contradictory = (0..2).any(|k| (row >> (3 - 2 * k)) & 1 == 1 && (row >> (2 - 2 * k)) & 1 == 1);
        if contradictory {
            constant_rows += 1;
            confirmed &= (0..4).all(|ta| close(row, ta, 0.125) || close(row, ta, -0.125));
        }
    }
    let divergences = game::xor_divergences(&m).len();

    let pass = mismatched == 0 && accepted == want && confirmed && constant_rows == 7;
    report(
        2,
        "XOR game at s=4",
        pass,
        &format!(
            "accepted {accepted:?}, {mismatched} cells differ from enumeration, \
             {constant_rows} constant-0 rows, {divergences} printed cells reported as divergent"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_03_xor_convergence() {
    let runs = 100;
    let mut reached = 0;
    let mut epochs_needed = Vec::new();
    for seed in 0..runs {
        let mut m = Machine::new(xor_config(4, 3, SEED + seed)).unwrap();
        let r = m.fit(&xor_dataset(), None, 50).unwrap();
        if let Some(e) = r.first_epoch_reaching(1.0) {
            reached += 1;
            epochs_needed.push(e);
        }
    }
    epochs_needed.sort_unstable();
    let median = epochs_needed.get(epochs_needed.len() / 2).copied().unwrap_or(0);
    let pass = reached >= 95;
    report(3, "XOR U=4 2n=6 reaches 100% within 50 epochs", pass, &format!("{reached}/{runs} runs, median epoch {median}"));
    assert!(pass);
}

fn fault_campaign(clause_grid: Vec<usize>, state_grid: Vec<u32>) -> CampaignResult {
    run_fault_campaign(&FaultCampaignSpec {
        threshold: 1,
        sensitivity: 3.0,
        rng: RngKind::Pcg64,
        base_clauses: 4,
        base_half_states: 3,
        clause_grid,
        state_grid,
        faults: vec![first_ta_fault()],
        baseline: false,
        ensembles: 100,
        epochs: 100,
        seed: SEED,
    })
    .unwrap()
}

fn runs_at_full(c: &tsetlin_core::experiments::CellResult) -> usize {
    c.runs.iter().filter(|r| r.max_train() >= 1.0).count()
}

#[test]
fn criterion_04_fault_masking_by_clauses() {
    let result = fault_campaign(vec![4, 8, 12], Vec::new());
    let mut pass = true;
    let mut detail = Vec::new();
    for c in &result.cells {
        let want = if c.params.clauses == 4 { 0.75 } else { 1.0 };
        let max = c.max_train();
        pass &= max == want;
        detail.push(format!(
            "U={} max {max} (want {want}, {}/100 runs at 1.0)",
            c.params.clauses,
            runs_at_full(c)
        ));
    }
    report(4, "stuck-at-1 bit 0 masked by clauses", pass, &detail.join("; "));
    assert!(pass, "{detail:?}");
}

#[test]
fn criterion_05_fault_masking_by_states() {
    let result = fault_campaign(Vec::new(), vec![4, 5, 6]);
    let mut pass = true;
    let mut detail = Vec::new();
    for c in &result.cells {
        let max = c.max_train();
        pass &= max == 1.0;
        detail.push(format!("2n={} max {max}", 2 * c.params.half_states));
    }
    report(5, "stuck-at-1 bit 0 masked by states", pass, &detail.join("; "));
    assert!(pass);
}

#[test]
fn criterion_06_reachable_set_under_fault() {
    let allowed: BTreeSet<u32> = [1, 3, 5].into();
    let mut union = BTreeSet::new();
    let mut violations = 0;
    for seed in 0..100 {
        let mut c = xor_config(4, 3, SEED + seed);
        c.faults.push(first_ta_fault());
        let (_, _, run) = record_fit(c, &xor_dataset(), 50, false).unwrap();
        let visited = detect_convergence(&run, 5).visited_by(0, 0, 0, &run).clone();
        if !visited.is_subset(&allowed) {
            violations += 1;
        }
        union.extend(visited);
    }
    let pass = violations == 0;
    report(6, "faulted automaton visits only s1, s3, s5", pass, &format!("union of visited states {union:?}, {violations} violating runs"));
    assert!(pass);
}

fn single_cell(file: &str, bits: usize, clauses: usize, threshold: u32, s: f64, ensembles: usize, epochs: usize) -> CampaignResult {
    run_sweep(&SweepSpec {
        dataset: DatasetSpec::csv(data(file), bits),
        clauses: vec![clauses],
        thresholds: vec![threshold],
        sensitivities: vec![s],
        half_states: 100,
        rng: RngKind::Pcg64,
        seed: SEED,
        ensembles,
        epochs,
    })
    .unwrap()
}

#[test]
fn criterion_07_iris_accuracy() {
    let r = single_cell("iris.csv", 4, 90, 4, 1.2, 25, 100);
    let c = &r.cells[0];
    let mean = c.mean_test();
    let pass = mean >= 0.90;
    report(7, "Iris U=90 T=4 s=1.2 mean test >= 0.90", pass, &format!("mean {mean:.4} ± {:.4} over {} runs", c.std_test(), c.runs.len()));
    assert!(pass, "mean test accuracy {mean}");
}

#[test]
fn criterion_08_breast_cancer_accuracy() {
    let r = single_cell("breast_cancer.csv", 10, 60, 5, 1.1, 25, 100);
    let c = &r.cells[0];
    let mean = c.mean_test();
    let pass = mean >= 0.93;
    report(8, "Breast Cancer U=60 T=5 s=1.1 mean test >= 0.93", pass, &format!("mean {mean:.4} ± {:.4} over {} runs", c.std_test(), c.runs.len()));
    assert!(pass, "mean test accuracy {mean}");
}

#[test]
fn criterion_09_lfsr_width_study() {
    let study = run_lfsr_study(&LfsrStudySpec {
        dataset: DatasetSpec::csv(data("iris.csv"), 4),
        clauses: 140,
        threshold: 11,
        sensitivity: 10.0,
        half_states: 100,
        widths: vec![4, 8],
        regain_width: None,
        regain_sensitivities: Vec::new(),
        ensembles: 50,
        epochs: 50,
        seed: SEED,
    })
    .unwrap();
    let base = study.baseline().mean_test();
    let w8 = study.width(8).unwrap().mean_test();
    let w4 = study.width(4).unwrap().mean_test();
    let pass = (w8 - base).abs() <= 0.02 && w4 <= base - 0.10;
    report(9, "LFSR-8 within 2 points of PCG, LFSR-4 at least 10 below", pass, &format!("pcg {base:.4}, lfsr8 {w8:.4}, lfsr4 {w4:.4}"));
    assert!(pass);
}

#[test]
fn criterion_10_event_count_ordering() {
    let r = run_sweep(&SweepSpec {
        dataset: DatasetSpec::csv(data("iris.csv"), 4),
        clauses: vec![90],
        thresholds: vec![4, 20],
        sensitivities: vec![1.2, 18.0],
        half_states: 100,
        rng: RngKind::Pcg64,
        seed: SEED,
        ensembles: 25,
        epochs: 30,
    })
    .unwrap();
    let find = |t: u32, s: f64| {
        r.cells
            .iter()
            .find(|c| c.params.threshold == t && c.params.sensitivity == s)
            .unwrap()
    };
    let prodigal = find(20, 1.2);
    let frugal = find(4, 18.0);
    let (ep, ef) = (prodigal.events_per_epoch(), frugal.events_per_epoch());
    let early = prodigal.mean_best_test_within(5);
    let pass = ep > ef && early >= 0.93;
    report(
        10,
        "Iris events (s=1.2,T=20) > (s=18,T=4), >=93% within 5 epochs",
        pass,
        &format!("events/epoch {ep:.0} vs {ef:.0}, mean best test in epochs 1-5 {early:.4}"),
    );
    assert!(pass);
}

fn lfsr_period(width: u32) -> u64 {
    let mut g = Lfsr::new(width, 1).unwrap();
    let mut steps = 0u64;
    loop {
        steps += 1;
        if g.next_state() == 1 {
            return steps;
        }
    }
}

#[test]
fn criterion_11_property_suites() {
    let mut failures: Vec<String> = Vec::new();

    for w in 4..=8u32 {
        if lfsr_period(w) != (1 << w) - 1 {
            failures.push(format!("LFSR width {w} period"));
        }
    }

    let events = [Reinforcement::Reward, Reinforcement::Penalty, Reinforcement::Inaction];
    for n in 1..=16u32 {
        let bits = u32::BITS - (2 * n).leading_zeros();
        let mut faults = vec![None];
        for bit in 0..bits {
            faults.push(Some(FaultSpec::stuck_at_1(bit)));
            faults.push(Some(FaultSpec::stuck_at_0(bit)));
        }
        for fault in faults {
            for state in 1..=2 * n {
                for &e in &events {
                    let Ok(mut ta) = TsetlinAutomaton::init_at(n, state, fault) else {
                        failures.push(format!("init n={n} state={state}"));
                        continue;
                    };
                    let t = ta.reinforce(e);
                    if !(1..=2 * n).contains(&t.after) {
                        failures.push(format!("n={n} {fault:?} state {state} {e:?} -> {}", t.after));
                    }
                }
            }
        }
    }

    let mut c = xor_config(4, 3, SEED);
    c.faults.push(first_ta_fault());
    let (machine, _, run) = record_fit(c, &xor_dataset(), 40, true).unwrap();
    let live: Vec<u32> = machine.states().into_iter().flatten().collect();
    match replay(&run) {
        Ok(states) if states == live => {}
        Ok(_) => failures.push("replay final states differ".into()),
        Err(m) => failures.push(format!("replay mismatch at {}: {}", m.position, m.reason)),
    }

    let iris = DatasetSpec::csv(data("iris.csv"), 4).load().unwrap().partition(SEED).unwrap();
    let mut config = TMConfig::new(iris.train.inputs(), 3, 20);
    config.threshold = 10;
    config.sensitivity = 1.5;
    config.rng = RngSpec::pcg64(SEED);
    let fit = |config: TMConfig| {
        let mut m = Machine::new(config).unwrap();
        let r = m.fit(&iris.train, Some(&iris.test), 5).unwrap();
        (m.states(), r)
    };
    let (states_a, report_a) = fit(config.clone());
    let (states_b, report_b) = fit(config);
    if states_a != states_b || report_a != report_b {
        failures.push("fit is not bit-reproducible".into());
    }
    if report_a.total_counters().reward_ii != 0 {
        failures.push("reward_ii counter is nonzero".into());
    }

    let pass = failures.is_empty();
    report(
        11,
        "LFSR periods, automaton bounds, replay, reward_ii, reproducibility",
        pass,
        &format!("{} failures", failures.len()),
    );
    assert!(pass, "{failures:?}");
}
