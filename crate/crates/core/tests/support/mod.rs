//! Random gold/machine/adjudication cases with known confusion counts.
#![allow(dead_code)]

use citefn::compute_metrics;
use citefn::corpus::{AnnotationRecord, Origin};
use citefn::sargo::{
    apply_decisions, apply_partial, auto_match, normalize_for_match, score_pair, AggregationDecision,
    AggregationDirection, Category, ItemRef, PairAdjudication, Verdict,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const PAIR: &str = "fuzz";

/// How one assessment unit is built. Every unit becomes exactly one row.
#[derive(Debug, Clone)]
pub enum Unit {
    /// identical strings on both sides
    Exact,
    /// different strings joined by a reviewer verdict
    Verdict,
    Missed,
    Spurious,
    /// machine values into at most one gold value; `absorb` uses an
    /// auto-matched pair as the gold member
    MachineIntoGold { machines: usize, gold: bool, absorb: bool },
    GoldIntoMachine { golds: usize, machine: bool },
}

pub fn unit() -> impl Strategy<Value = Unit> {
    prop_oneof![
        3 => Just(Unit::Exact),
        2 => Just(Unit::Verdict),
        3 => Just(Unit::Missed),
        2 => Just(Unit::Spurious),
        2 => (2usize..5, any::<bool>(), any::<bool>())
            .prop_map(|(machines, gold, absorb)| Unit::MachineIntoGold { machines, gold, absorb }),
        1 => (2usize..5, any::<bool>()).prop_map(|(golds, machine)| Unit::GoldIntoMachine { golds, machine }),
    ]
}

#[derive(Debug, Default)]
struct Built {
    gold: Vec<String>,
    machine: Vec<String>,
    verdicts: Vec<Verdict>,
    groups: Vec<AggregationDecision>,
    // oracle counts
    tp: u64,
    fp: u64,
    fn_: u64,
}

fn build(cat: Category, units: &[Unit]) -> Built {
    let mut b = Built::default();
    let tag = match cat {
        Category::UseCases => "use",
        _ => "tool",
    };
    for (i, u) in units.iter().enumerate() {
        let g = |k: usize| format!("gold {tag} {i}.{k}");
        let m = |k: usize| format!("machine {tag} {i}.{k}");
        let group = |direction, members| AggregationDecision {
            pair_id: PAIR.into(),
            category: cat,
            direction,
            members,
            decided_by: "fuzz".into(),
            rationale: None,
        };
        match *u {
            Unit::Exact => {
                // case and spacing differ; the matcher normalizes both
                b.gold.push(format!("Shared {tag}  {i}"));
                b.machine.push(format!("shared {tag} {i}"));
                b.tp += 1;
            }
            Unit::Verdict => {
                b.gold.push(g(0));
                b.machine.push(m(0));
                b.verdicts.push(Verdict::Match { category: cat, gold: g(0), machine: m(0) });
                b.tp += 1;
            }
            Unit::Missed => {
                b.gold.push(g(0));
                b.verdicts.push(Verdict::FalseNegative { category: cat, gold: g(0) });
                b.fn_ += 1;
            }
            Unit::Spurious => {
                b.machine.push(m(0));
                b.verdicts.push(Verdict::FalsePositive { category: cat, machine: m(0) });
                b.fp += 1;
            }
            Unit::MachineIntoGold { machines, gold, absorb } => {
                let mut members: Vec<ItemRef> = (0..machines)
                    .map(|k| {
                        b.machine.push(m(k));
                        ItemRef::machine(m(k))
                    })
                    .collect();
                if absorb {
                    let shared = format!("absorbed {tag} {i}");
                    b.gold.push(shared.clone());
                    b.machine.push(shared.clone());
                    members.push(ItemRef::gold(shared));
                    b.tp += 1;
                } else if gold {
                    b.gold.push(g(0));
                    members.push(ItemRef::gold(g(0)));
                    b.tp += 1;
                } else {
                    b.fp += 1;
                }
                b.groups.push(group(AggregationDirection::MachineIntoGold, members));
            }
            Unit::GoldIntoMachine { golds, machine } => {
                let mut members: Vec<ItemRef> = (0..golds)
                    .map(|k| {
                        b.gold.push(g(k));
                        ItemRef::gold(g(k))
                    })
                    .collect();
                if machine {
                    b.machine.push(m(0));
                    members.push(ItemRef::machine(m(0)));
                    b.tp += 1;
                } else {
                    b.fn_ += 1;
                }
                b.groups.push(group(AggregationDirection::GoldIntoMachine, members));
            }
        }
    }
    b
}

pub fn record(origin: Origin, accessed: bool, uses: Vec<String>, tools: Vec<String>) -> AnnotationRecord {
    AnnotationRecord {
        pair_id: PAIR.into(),
        origin,
        data_accessed: accessed || !uses.is_empty() || !tools.is_empty(),
        use_cases: uses,
        tools,
    }
}

pub struct Case {
    pub gold: AnnotationRecord,
    pub machine: AnnotationRecord,
    pub submissions: Vec<PairAdjudication>,
    pub oracle: [(u64, u64, u64); 2],
}

pub fn case(uses: &[Unit], tools: &[Unit], da: (bool, bool), seed: u64, parts: usize) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = build(Category::UseCases, uses);
    let mut t = build(Category::Tools, tools);
    for v in [&mut u.gold, &mut u.machine, &mut t.gold, &mut t.machine] {
        v.shuffle(&mut rng);
    }
    let gold = record(Origin::Consensus, da.0, u.gold.clone(), t.gold.clone());
    let machine = record(Origin::Machine, da.1, u.machine.clone(), t.machine.clone());

    let mut verdicts: Vec<Verdict> = u.verdicts.iter().chain(&t.verdicts).cloned().collect();
    let mut groups: Vec<AggregationDecision> = u.groups.iter().chain(&t.groups).cloned().collect();
    verdicts.shuffle(&mut rng);
    groups.shuffle(&mut rng);
    let mut submissions: Vec<PairAdjudication> = (0..parts)
        .map(|_| PairAdjudication { pair_id: PAIR.into(), ..Default::default() })
        .collect();
    for (i, v) in verdicts.into_iter().enumerate() {
        submissions[i % parts].verdicts.push(v);
    }
    for (i, g) in groups.into_iter().enumerate() {
        submissions[(i + 1) % parts].aggregations.push(g);
    }
    Case {
        gold,
        machine,
        submissions,
        oracle: [(u.tp, u.fp, u.fn_), (t.tp, t.fp, t.fn_)],
    }
}

pub fn merged(subs: &[PairAdjudication]) -> PairAdjudication {
    let mut all = PairAdjudication { pair_id: PAIR.into(), ..Default::default() };
    for s in subs {
        all.verdicts.extend(s.verdicts.iter().cloned());
        all.aggregations.extend(s.aggregations.iter().cloned());
    }
    all
}

/// Runs one fuzz case through auto-matching, staged and one-shot
/// adjudication, and scoring, and compares the counts with the oracle.
pub fn check_case(
    uses: &[Unit],
    tools: &[Unit],
    da: (bool, bool),
    seed: u64,
    parts: usize,
) -> Result<(), TestCaseError> {
    let c = case(uses, tools, da, seed, parts);
    let base = auto_match(&c.gold, &c.machine, &normalize_for_match).unwrap();
    prop_assert!(base.check_conservation(&c.gold, &c.machine).is_ok());

    // staged submissions replay to the same result as one submission
    let mut staged = base.clone();
    for s in &c.submissions {
        staged = apply_partial(&staged, s).unwrap();
        prop_assert!(staged.check_conservation(&c.gold, &c.machine).is_ok());
    }
    let at_once = apply_decisions(&base, &merged(&c.submissions)).unwrap();
    prop_assert!(staged.is_complete());
    let score = score_pair(&staged).unwrap();
    prop_assert_eq!(&score, &score_pair(&at_once).unwrap());

    for (cat, (tp, fp, fn_)) in [Category::UseCases, Category::Tools].into_iter().zip(c.oracle) {
        let got = score.get(cat);
        prop_assert_eq!((got.tp, got.fp, got.fn_, got.tn), (tp, fp, fn_, 0));

        let rows: Vec<_> = staged.rows.iter().filter(|r| r.category == cat).collect();
        let gold_rows = rows.iter().filter(|r| !r.gold.is_empty()).count() as u64;
        let machine_rows = rows.iter().filter(|r| !r.machine.is_empty()).count() as u64;
        prop_assert_eq!(got.tp + got.fn_, gold_rows);
        prop_assert_eq!(got.tp + got.fp, machine_rows);
        // grouped rows still carry every original value
        let gold_items: usize = rows.iter().map(|r| r.gold.len()).sum();
        prop_assert_eq!(gold_items, cat_len(&c.gold, cat));
        let m = compute_metrics(&got);
        prop_assert!(m.recall <= 1.0 && m.precision <= 1.0);
    }
    let da_counts = score.data_accessed;
    prop_assert_eq!(da_counts.tp + da_counts.fp + da_counts.tn + da_counts.fn_, 1);
    let total = compute_metrics(&score.total());
    prop_assert!(total.recall <= 1.0 && total.precision <= 1.0);
    prop_assert_eq!(
        score.backwards_aggregations as usize,
        uses.iter().chain(tools).filter(|u| matches!(u, Unit::GoldIntoMachine { .. })).count()
    );
    Ok(())
}

fn cat_len(rec: &AnnotationRecord, cat: Category) -> usize {
    match cat {
        Category::UseCases => rec.use_cases.len(),
        Category::Tools => rec.tools.len(),
        Category::DataAccessed => 1,
    }
}
