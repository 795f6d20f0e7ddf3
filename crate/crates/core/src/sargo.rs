//! Scoring machine annotations against gold annotations.
//!
//! Scoring happens in three steps:
//!
//! 1. [`auto_match`] scores the data-accessed field immediately and pairs up
//!    open-set values (use cases, tools) whose normalized text is identical.
//!    Everything else goes to the unresolved queue.
//! 2. A reviewer gives every queued value a fate, either a verdict (a
//!    hand-confirmed match, a false positive, or a false negative) or
//!    membership in an aggregation group. A group collapses several redundant
//!    or overly granular values on one side into one row, so several machine
//!    values describing one gold value count as a single true positive.
//!    [`apply_decisions`] folds these in.
//! 3. [`score_pair`] tallies one assessment per row.
//!
//! Because every row holds at most one distinct item per side after
//! aggregation, true positives can never outnumber gold rows and recall
//! stays at or below one.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::corpus::{AnnotationRecord, Origin};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    DataAccessed,
    UseCases,
    Tools,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::DataAccessed, Category::UseCases, Category::Tools];
    pub const OPEN_SET: [Category; 2] = [Category::UseCases, Category::Tools];

    pub fn label(self) -> &'static str {
        match self {
            Category::DataAccessed => "Data Accessed",
            Category::UseCases => "Use Cases",
            Category::Tools => "Tools and Software",
        }
    }

    fn values(self, rec: &AnnotationRecord) -> &[String] {
        match self {
            Category::UseCases => &rec.use_cases,
            Category::Tools => &rec.tools,
            Category::DataAccessed => &[],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Assessment {
    TP,
    FP,
    TN,
    FN,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AggregationDirection {
    #[default]
    None,
    MachineIntoGold,
    GoldIntoMachine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Gold,
    Machine,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Bool(bool),
    Text(String),
}

impl Value {
    fn text(&self) -> Option<&str> {
        match self {
            Value::Text(s) => Some(s),
            Value::Bool(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatrixRow {
    pub category: Category,
    pub gold: Vec<Value>,
    pub machine: Vec<Value>,
    pub assessment: Assessment,
    #[serde(default)]
    pub aggregation_direction: AggregationDirection,
    /// Set by automatic string matching rather than a reviewer.
    #[serde(default)]
    pub auto: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UnresolvedItem {
    pub category: Category,
    pub side: Side,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvaluationMatrix {
    pub pair_id: String,
    pub rows: Vec<MatrixRow>,
    #[serde(default)]
    pub unresolved: Vec<UnresolvedItem>,
}

impl EvaluationMatrix {
    pub fn is_complete(&self) -> bool {
        self.unresolved.is_empty()
    }

    pub fn backwards_aggregations(&self) -> usize {
        self.rows
            .iter()
            .filter(|r| r.aggregation_direction == AggregationDirection::GoldIntoMachine)
            .count()
    }

    /// Every gold and machine value sits in exactly one row or queue slot.
    pub fn check_conservation(
        &self,
        gold: &AnnotationRecord,
        machine: &AnnotationRecord,
    ) -> Result<(), String> {
        for cat in Category::OPEN_SET {
            for (side, rec) in [(Side::Gold, gold), (Side::Machine, machine)] {
                let mut placed: Vec<&str> = self
                    .rows
                    .iter()
                    .filter(|r| r.category == cat)
                    .flat_map(|r| match side {
                        Side::Gold => r.gold.iter(),
                        Side::Machine => r.machine.iter(),
                    })
                    .filter_map(Value::text)
                    .chain(
                        self.unresolved
                            .iter()
                            .filter(|u| u.category == cat && u.side == side)
                            .map(|u| u.value.as_str()),
                    )
                    .collect();
                let mut want: Vec<&str> = cat.values(rec).iter().map(String::as_str).collect();
                placed.sort_unstable();
                want.sort_unstable();
                if placed != want {
                    return Err(format!("{cat:?}/{side:?}: placed {placed:?}, expected {want:?}"));
                }
            }
        }
        let da = self
            .rows
            .iter()
            .filter(|r| r.category == Category::DataAccessed)
            .count();
        if da != 1 {
            return Err(format!("{da} data-accessed rows"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        ConfusionCounts { tp, fp, tn, fn_ }
    }

    pub fn record(&mut self, a: Assessment) {
        match a {
            Assessment::TP => self.tp += 1,
            Assessment::FP => self.fp += 1,
            Assessment::TN => self.tn += 1,
            Assessment::FN => self.fn_ += 1,
        }
    }

    /// Gold items: relevant = TP + FN.
    pub fn relevant(&self) -> u64 {
        self.tp + self.fn_
    }

    /// Machine items after aggregation: retrieved = TP + FP.
    pub fn retrieved(&self) -> u64 {
        self.tp + self.fp
    }
}

impl std::ops::Add for ConfusionCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        ConfusionCounts {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            tn: self.tn + o.tn,
            fn_: self.fn_ + o.fn_,
        }
    }
}

impl std::ops::AddAssign for ConfusionCounts {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl std::iter::Sum for ConfusionCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(ConfusionCounts::default(), |a, b| a + b)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairScore {
    pub pair_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub set: Option<String>,
    pub data_accessed: ConfusionCounts,
    pub use_cases: ConfusionCounts,
    pub tools: ConfusionCounts,
    #[serde(default)]
    pub backwards_aggregations: u32,
}

impl PairScore {
    pub fn get(&self, cat: Category) -> ConfusionCounts {
        match cat {
            Category::DataAccessed => self.data_accessed,
            Category::UseCases => self.use_cases,
            Category::Tools => self.tools,
        }
    }

    fn get_mut(&mut self, cat: Category) -> &mut ConfusionCounts {
        match cat {
            Category::DataAccessed => &mut self.data_accessed,
            Category::UseCases => &mut self.use_cases,
            Category::Tools => &mut self.tools,
        }
    }

    /// Counts pooled over all three categories.
    pub fn total(&self) -> ConfusionCounts {
        self.data_accessed + self.use_cases + self.tools
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Verdict {
    /// Reviewer-confirmed equivalence the string matcher missed.
    Match {
        category: Category,
        gold: String,
        machine: String,
    },
    FalsePositive { category: Category, machine: String },
    FalseNegative { category: Category, gold: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ItemRef {
    pub side: Side,
    pub value: String,
}

impl ItemRef {
    pub fn gold(v: impl Into<String>) -> Self {
        ItemRef {
            side: Side::Gold,
            value: v.into(),
        }
    }

    pub fn machine(v: impl Into<String>) -> Self {
        ItemRef {
            side: Side::Machine,
            value: v.into(),
        }
    }
}

/// A reviewer's grouping of redundant or granular values into one row.
/// Machine-into-gold groups hold two or more machine values and at most one
/// gold value; gold-into-machine groups are the mirror image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregationDecision {
    pub pair_id: String,
    pub category: Category,
    pub direction: AggregationDirection,
    pub members: Vec<ItemRef>,
    pub decided_by: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationale: Option<String>,
}

/// One reviewer submission for one pair; also the line format of the
/// decisions file.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairAdjudication {
    pub pair_id: String,
    #[serde(default)]
    pub verdicts: Vec<Verdict>,
    #[serde(default)]
    pub aggregations: Vec<AggregationDecision>,
}

impl PairAdjudication {
    pub fn is_empty(&self) -> bool {
        self.verdicts.is_empty() && self.aggregations.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SargoError {
    #[error("records belong to different pairs ({gold} vs {machine})")]
    PairMismatch { gold: String, machine: String },
    #[error("expected a {expected:?} record, got {found:?}")]
    WrongOrigin { expected: Origin, found: Origin },
    #[error("{category:?} {side:?} value `{value}` is already assigned")]
    Conflict {
        category: Category,
        side: Side,
        value: String,
    },
    #[error("{category:?} {side:?} value `{value}` does not exist for this pair")]
    UnknownItem {
        category: Category,
        side: Side,
        value: String,
    },
    #[error("invalid decision: {0}")]
    InvalidDecision(String),
    #[error("{} unresolved values remain, first: {:?} `{}`", .0.len(), .0[0].side, .0[0].value)]
    Incomplete(Vec<UnresolvedItem>),
}

/// Case-fold, trim and collapse internal whitespace. No stemming, no fuzzy
/// distance: anything looser is the reviewer's call.
pub fn normalize_for_match(s: &str) -> String {
    s.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

fn assess_bool(gold: bool, machine: bool) -> Assessment {
    match (gold, machine) {
        (true, true) => Assessment::TP,
        (false, false) => Assessment::TN,
        (true, false) => Assessment::FN,
        (false, true) => Assessment::FP,
    }
}

pub fn auto_match(
    gold: &AnnotationRecord,
    machine: &AnnotationRecord,
    normalizer: &dyn Fn(&str) -> String,
) -> Result<EvaluationMatrix, SargoError> {
    if gold.pair_id != machine.pair_id {
        return Err(SargoError::PairMismatch {
            gold: gold.pair_id.clone(),
            machine: machine.pair_id.clone(),
        });
    }
    if gold.origin != Origin::Consensus {
        return Err(SargoError::WrongOrigin {
            expected: Origin::Consensus,
            found: gold.origin,
        });
    }
    if machine.origin != Origin::Machine {
        return Err(SargoError::WrongOrigin {
            expected: Origin::Machine,
            found: machine.origin,
        });
    }

    let mut rows = vec![MatrixRow {
        category: Category::DataAccessed,
        gold: vec![Value::Bool(gold.data_accessed)],
        machine: vec![Value::Bool(machine.data_accessed)],
        assessment: assess_bool(gold.data_accessed, machine.data_accessed),
        aggregation_direction: AggregationDirection::None,
        auto: true,
    }];
    let mut unresolved = Vec::new();

    for cat in Category::OPEN_SET {
        let g = cat.values(gold);
        let m = cat.values(machine);
        let m_norm: Vec<String> = m.iter().map(|s| normalizer(s)).collect();
        let mut m_used = vec![false; m.len()];
        let mut g_left = Vec::new();
        for gv in g {
            let gn = normalizer(gv);
            match (0..m.len()).find(|&j| !m_used[j] && m_norm[j] == gn) {
                Some(j) => {
                    m_used[j] = true;
                    rows.push(MatrixRow {
                        category: cat,
                        gold: vec![Value::Text(gv.clone())],
                        machine: vec![Value::Text(m[j].clone())],
                        assessment: Assessment::TP,
                        aggregation_direction: AggregationDirection::None,
                        auto: true,
                    });
                }
                None => g_left.push(gv),
            }
        }
        unresolved.extend(g_left.into_iter().map(|v| UnresolvedItem {
            category: cat,
            side: Side::Gold,
            value: v.clone(),
        }));
        unresolved.extend(
            m.iter()
                .zip(&m_used)
                .filter(|(_, used)| !**used)
                .map(|(v, _)| UnresolvedItem {
                    category: cat,
                    side: Side::Machine,
                    value: v.clone(),
                }),
        );
    }

    Ok(EvaluationMatrix {
        pair_id: gold.pair_id.clone(),
        rows,
        unresolved,
    })
}

/// Working state while folding one adjudication into a matrix.
struct Fold<'m> {
    matrix: &'m EvaluationMatrix,
    consumed: Vec<bool>,
    absorbed: Vec<bool>,
}

enum Located {
    Pending(usize),
    AutoRow(usize),
}

impl Fold<'_> {
    fn locate(&self, category: Category, side: Side, value: &str) -> Result<Located, SargoError> {
        let err_conflict = || SargoError::Conflict {
            category,
            side,
            value: value.to_string(),
        };
        let q = &self.matrix.unresolved;
        let matches_pending = |exact: bool| {
            (0..q.len()).find(|&i| {
                let u = &q[i];
                u.category == category
                    && u.side == side
                    && if exact {
                        u.value == value
                    } else {
                        normalize_for_match(&u.value) == normalize_for_match(value)
                    }
            })
        };
        if let Some(i) = matches_pending(true).or_else(|| matches_pending(false)) {
            return if self.consumed[i] {
                Err(err_conflict())
            } else {
                Ok(Located::Pending(i))
            };
        }
        let in_row = |r: &MatrixRow| {
            let vals = match side {
                Side::Gold => &r.gold,
                Side::Machine => &r.machine,
            };
            r.category == category
                && vals.iter().filter_map(Value::text).any(|v| {
                    v == value || normalize_for_match(v) == normalize_for_match(value)
                })
        };
        if let Some(i) = self.matrix.rows.iter().position(in_row) {
            let row = &self.matrix.rows[i];
            return if row.auto && row.assessment == Assessment::TP && !self.absorbed[i] {
                Ok(Located::AutoRow(i))
            } else {
                Err(err_conflict())
            };
        }
        Err(SargoError::UnknownItem {
            category,
            side,
            value: value.to_string(),
        })
    }

    fn take_pending(&mut self, category: Category, side: Side, value: &str) -> Result<String, SargoError> {
        match self.locate(category, side, value)? {
            Located::Pending(i) => {
                self.consumed[i] = true;
                Ok(self.matrix.unresolved[i].value.clone())
            }
            Located::AutoRow(_) => Err(SargoError::Conflict {
                category,
                side,
                value: value.to_string(),
            }),
        }
    }
}

fn group_row(
    fold: &mut Fold,
    pair_id: &str,
    d: &AggregationDecision,
) -> Result<MatrixRow, SargoError> {
    if d.pair_id != pair_id {
        return Err(SargoError::InvalidDecision(format!(
            "decision for pair `{}` submitted to `{pair_id}`",
            d.pair_id
        )));
    }
    if d.category == Category::DataAccessed {
        return Err(SargoError::InvalidDecision(
            "data-accessed values cannot be aggregated".into(),
        ));
    }
    if d.members.len() < 2 {
        return Err(SargoError::InvalidDecision("a group needs at least two members".into()));
    }
    let mut seen = HashSet::new();
    for m in &d.members {
        if !seen.insert((m.side, normalize_for_match(&m.value))) {
            return Err(SargoError::Conflict {
                category: d.category,
                side: m.side,
                value: m.value.clone(),
            });
        }
    }

    let mut gold = Vec::new();
    let mut machine = Vec::new();
    for m in &d.members {
        match fold.locate(d.category, m.side, &m.value)? {
            Located::Pending(i) => {
                fold.consumed[i] = true;
                let v = Value::Text(fold.matrix.unresolved[i].value.clone());
                match m.side {
                    Side::Gold => gold.push(v),
                    Side::Machine => machine.push(v),
                }
            }
            Located::AutoRow(i) => {
                fold.absorbed[i] = true;
                let row = &fold.matrix.rows[i];
                gold.extend(row.gold.iter().cloned());
                machine.extend(row.machine.iter().cloned());
            }
        }
    }

    let ok = match d.direction {
        AggregationDirection::MachineIntoGold => machine.len() >= 2 && gold.len() <= 1,
        AggregationDirection::GoldIntoMachine => gold.len() >= 2 && machine.len() <= 1,
        AggregationDirection::None => false,
    };
    if !ok {
        return Err(SargoError::InvalidDecision(format!(
            "{:?} group has {} gold and {} machine values",
            d.direction,
            gold.len(),
            machine.len()
        )));
    }

    let assessment = match (gold.is_empty(), machine.is_empty()) {
        (false, false) => Assessment::TP,
        (true, false) => Assessment::FP,
        (false, true) => Assessment::FN,
        (true, true) => unreachable!("groups have at least two members"),
    };
    Ok(MatrixRow {
        category: d.category,
        gold,
        machine,
        assessment,
        aggregation_direction: d.direction,
        auto: false,
    })
}

/// Folds reviewer decisions into the matrix without requiring the queue to
/// empty. The input matrix is never modified; on error nothing is applied.
pub fn apply_partial(
    matrix: &EvaluationMatrix,
    adj: &PairAdjudication,
) -> Result<EvaluationMatrix, SargoError> {
    if adj.pair_id != matrix.pair_id {
        return Err(SargoError::PairMismatch {
            gold: matrix.pair_id.clone(),
            machine: adj.pair_id.clone(),
        });
    }
    let mut fold = Fold {
        matrix,
        consumed: vec![false; matrix.unresolved.len()],
        absorbed: vec![false; matrix.rows.len()],
    };
    let mut new_rows = Vec::new();

    for d in &adj.aggregations {
        new_rows.push(group_row(&mut fold, &matrix.pair_id, d)?);
    }

    for v in &adj.verdicts {
        let row = match v {
            Verdict::Match {
                category,
                gold,
                machine,
            } => {
                let g = fold.take_pending(*category, Side::Gold, gold)?;
                let m = fold.take_pending(*category, Side::Machine, machine)?;
                MatrixRow {
                    category: *category,
                    gold: vec![Value::Text(g)],
                    machine: vec![Value::Text(m)],
                    assessment: Assessment::TP,
                    aggregation_direction: AggregationDirection::None,
                    auto: false,
                }
            }
            Verdict::FalsePositive { category, machine } => {
                let m = fold.take_pending(*category, Side::Machine, machine)?;
                MatrixRow {
                    category: *category,
                    gold: vec![],
                    machine: vec![Value::Text(m)],
                    assessment: Assessment::FP,
                    aggregation_direction: AggregationDirection::None,
                    auto: false,
                }
            }
            Verdict::FalseNegative { category, gold } => {
                let g = fold.take_pending(*category, Side::Gold, gold)?;
                MatrixRow {
                    category: *category,
                    gold: vec![Value::Text(g)],
                    machine: vec![],
                    assessment: Assessment::FN,
                    aggregation_direction: AggregationDirection::None,
                    auto: false,
                }
            }
        };
        new_rows.push(row);
    }

    let mut rows: Vec<MatrixRow> = matrix
        .rows
        .iter()
        .zip(&fold.absorbed)
        .filter(|(_, a)| !**a)
        .map(|(r, _)| r.clone())
        .collect();
    rows.extend(new_rows);
    rows.sort_by_key(|r| r.category);

    let unresolved = matrix
        .unresolved
        .iter()
        .zip(&fold.consumed)
        .filter(|(_, c)| !**c)
        .map(|(u, _)| u.clone())
        .collect();

    Ok(EvaluationMatrix {
        pair_id: matrix.pair_id.clone(),
        rows,
        unresolved,
    })
}

/// Like [`apply_partial`], but every queued value must receive a fate.
pub fn apply_decisions(
    matrix: &EvaluationMatrix,
    adj: &PairAdjudication,
) -> Result<EvaluationMatrix, SargoError> {
    let out = apply_partial(matrix, adj)?;
    if out.is_complete() {
        Ok(out)
    } else {
        Err(SargoError::Incomplete(out.unresolved))
    }
}

pub fn score_pair(matrix: &EvaluationMatrix) -> Result<PairScore, SargoError> {
    if !matrix.is_complete() {
        return Err(SargoError::Incomplete(matrix.unresolved.clone()));
    }
    Ok(tally(matrix))
}

/// Counts over resolved rows only, for previews of unfinished matrices.
pub fn tally(matrix: &EvaluationMatrix) -> PairScore {
    let mut score = PairScore {
        pair_id: matrix.pair_id.clone(),
        set: None,
        data_accessed: ConfusionCounts::default(),
        use_cases: ConfusionCounts::default(),
        tools: ConfusionCounts::default(),
        backwards_aggregations: matrix.backwards_aggregations() as u32,
    };
    for row in &matrix.rows {
        score.get_mut(row.category).record(row.assessment);
    }
    score
}
