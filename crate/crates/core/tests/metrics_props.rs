use citefn::metrics::{compute_metrics, pool_and_report, Grouping, ReportFormat};
use citefn::sargo::{Assessment, Category, ConfusionCounts, PairScore};
use proptest::prelude::*;

fn counts(open_set: bool) -> impl Strategy<Value = ConfusionCounts> {
    if open_set {
        (0u64..15, 0u64..15, 0u64..15)
            .prop_map(|(tp, fp, fn_)| ConfusionCounts::new(tp, fp, 0, fn_))
            .boxed()
    } else {
        prop_oneof![
            Just(ConfusionCounts::new(1, 0, 0, 0)),
            Just(ConfusionCounts::new(0, 1, 0, 0)),
            Just(ConfusionCounts::new(0, 0, 1, 0)),
            Just(ConfusionCounts::new(0, 0, 0, 1)),
        ]
        .boxed()
    }
}

fn pair_score() -> impl Strategy<Value = PairScore> {
    (counts(false), counts(true), counts(true), prop::option::of(prop::sample::select(vec!["v1", "v2"])))
        .prop_map(|(da, uses, tools, set)| PairScore {
            pair_id: String::new(),
            set: set.map(str::to_string),
            data_accessed: da,
            use_cases: uses,
            tools,
            backwards_aggregations: 0,
        })
}

/// Expands counts back into one assessment per row.
fn assessments(c: ConfusionCounts) -> Vec<Assessment> {
    let mut out = Vec::new();
    out.extend(std::iter::repeat_n(Assessment::TP, c.tp as usize));
    out.extend(std::iter::repeat_n(Assessment::FP, c.fp as usize));
    out.extend(std::iter::repeat_n(Assessment::TN, c.tn as usize));
    out.extend(std::iter::repeat_n(Assessment::FN, c.fn_ as usize));
    out
}

/// Brute-force precision/recall/F1/hallucination over a flat list.
fn brute(list: &[Assessment]) -> (f64, f64, f64, f64) {
    let n = |a| list.iter().filter(|&&x| x == a).count() as f64;
    let (tp, fp, fn_) = (n(Assessment::TP), n(Assessment::FP), n(Assessment::FN));
    let p = if tp + fp == 0.0 { 0.0 } else { tp / (tp + fp) };
    let r = if tp + fn_ == 0.0 { 0.0 } else { tp / (tp + fn_) };
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    let h = if tp + fp == 0.0 { 1.0 } else { fp / (tp + fp) };
    (p, r, f, h)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn pooled_metrics_equal_brute_force(mut scores in proptest::collection::vec(pair_score(), 1..30)) {
        for (i, s) in scores.iter_mut().enumerate() {
            s.pair_id = format!("p{i}");
        }
        let report = pool_and_report(&scores, Grouping::ByCategory).unwrap();
        for row in &report.rows {
            let members: Vec<&PairScore> = scores
                .iter()
                .filter(|s| s.set.as_deref().unwrap_or("all") == row.set)
                .collect();
            prop_assert_eq!(row.pairs, members.len());
            let cats: Vec<Category> = match Category::ALL.iter().find(|c| c.label() == row.category) {
                Some(&c) => vec![c],
                None => Category::ALL.to_vec(),
            };
            let flat: Vec<Assessment> = members
                .iter()
                .flat_map(|s| cats.iter().flat_map(|&c| assessments(s.get(c))))
                .collect();
            let (p, r, f, h) = brute(&flat);
            prop_assert_eq!((row.precision, row.recall, row.f1, row.hallucination_rate), (p, r, f, h));
        }
        let overall = pool_and_report(&scores, Grouping::Overall).unwrap();
        let sets = overall.rows.len();
        prop_assert_eq!(report.rows.len(), sets * 4);
    }

    #[test]
    fn metric_identities(c in counts(true)) {
        let m = compute_metrics(&c);
        prop_assert!((m.hallucination_rate + m.precision - 1.0).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&m.recall) && (0.0..=1.0).contains(&m.f1));
        prop_assert!(m.f1 <= m.precision.max(m.recall) + 1e-12);
        prop_assert!(m.f1 >= m.precision.min(m.recall) - 1e-12);
        // one more hit never lowers recall or precision
        let more = compute_metrics(&ConfusionCounts::new(c.tp + 1, c.fp, c.tn, c.fn_));
        prop_assert!(more.recall >= m.recall && more.precision >= m.precision);
        // one more miss never raises recall
        let miss = compute_metrics(&ConfusionCounts::new(c.tp, c.fp, c.tn, c.fn_ + 1));
        prop_assert!(miss.recall <= m.recall);
    }

    #[test]
    fn report_output_is_deterministic(scores in proptest::collection::vec(pair_score(), 1..10)) {
        let a = pool_and_report(&scores, Grouping::ByCategory).unwrap();
        let b = pool_and_report(&scores, Grouping::ByCategory).unwrap();
        for fmt in [ReportFormat::Csv, ReportFormat::Json, ReportFormat::Table] {
            prop_assert_eq!(a.render(fmt).unwrap(), b.render(fmt).unwrap());
        }
        // pair order within a set does not matter
        let mut rev = scores.clone();
        rev.reverse();
        let c = pool_and_report(&rev, Grouping::ByCategory).unwrap();
        for row in &a.rows {
            let twin = c.rows.iter().find(|r| r.set == row.set && r.category == row.category).unwrap();
            prop_assert_eq!(twin, row);
        }
    }
}

#[test]
fn csv_layout() {
    let score = PairScore {
        pair_id: "a".into(),
        set: None,
        data_accessed: ConfusionCounts::new(1, 0, 0, 0),
        use_cases: ConfusionCounts::new(1, 0, 0, 1),
        tools: ConfusionCounts::new(2, 0, 0, 7),
        backwards_aggregations: 0,
    };
    let csv = pool_and_report(&[score], Grouping::ByCategory).unwrap().to_csv().unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "set,category,recall,precision,f1,hallucination_rate,tp,fp,tn,fn");
    assert_eq!(lines.len(), 5);
    assert!(lines[4].starts_with("all,Overall,"));
    assert!(lines[4].ends_with(",4,0,0,8"));
}

#[test]
fn empty_report_is_an_error() {
    assert!(pool_and_report(&[], Grouping::Overall).is_err());
}
