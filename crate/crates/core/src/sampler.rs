//! Reproducible stratified samples of publication/accession pairs.
//!
//! Pairs are split at a cutoff date into pre- and post-cutoff periods, then
//! into quartiles of publication year and character count within each
//! period. The sample is allocated across these strata in proportion to
//! their size (largest-remainder rounding), and within a stratum the draw
//! rotates across publishers and identifier classes so no single one
//! dominates.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::NaiveDate;
use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, PairRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuartileField {
    PubYear,
    CharCount,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiversityField {
    Publisher,
    IdentifierClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrataSpec {
    pub cutoff_date: NaiveDate,
    #[serde(default = "all_quartile_fields")]
    pub quartile_fields: Vec<QuartileField>,
    #[serde(default = "all_diversity_fields")]
    pub diversity_fields: Vec<DiversityField>,
    pub sample_size: usize,
    pub seed: u64,
    /// Pairs that must be in the sample regardless of strata, such as known
    /// false-positive linkages. They count toward `sample_size`.
    #[serde(default)]
    pub include: Vec<String>,
    /// Fixed share of the sample drawn before the cutoff; proportional to
    /// period size when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pre_cutoff_fraction: Option<f64>,
}

fn all_quartile_fields() -> Vec<QuartileField> {
    vec![QuartileField::PubYear, QuartileField::CharCount]
}

fn all_diversity_fields() -> Vec<DiversityField> {
    vec![DiversityField::Publisher, DiversityField::IdentifierClass]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Period {
    PreCutoff,
    PostCutoff,
}

/// A stratum: period plus one quartile index (0-3) per quartile field.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Stratum {
    pub period: Period,
    pub quartiles: Vec<(QuartileField, u8)>,
}

impl fmt::Display for Stratum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let period = match self.period {
            Period::PreCutoff => "pre-cutoff",
            Period::PostCutoff => "post-cutoff",
        };
        write!(f, "{period}")?;
        for (field, q) in &self.quartiles {
            let name = match field {
                QuartileField::PubYear => "pub_year",
                QuartileField::CharCount => "char_count",
            };
            write!(f, " {name}:Q{}", q + 1)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SampleError {
    #[error("sample size {requested} exceeds the {available} pairs available")]
    TooLarge { requested: usize, available: usize },
    #[error("included pair `{0}` is not in the corpus")]
    UnknownInclude(String),
    #[error("{included} included pairs exceed the sample size {sample_size}")]
    IncludeOverflow { included: usize, sample_size: usize },
    #[error("pre_cutoff_fraction must lie in [0, 1], got {0}")]
    BadFraction(f64),
    #[error("stratum `{stratum}` is allocated {needed} pairs but holds {available}")]
    Allocation {
        stratum: String,
        needed: usize,
        available: usize,
    },
}

struct Item<'a> {
    pair: &'a PairRecord,
    period: Period,
    year: i32,
    chars: u64,
    diversity: Vec<String>,
}

fn period_of(corpus: &Corpus, pair: &PairRecord, cutoff: NaiveDate) -> Period {
    let publication = corpus.publication_of(pair);
    let date = publication
        .pub_date
        .or_else(|| NaiveDate::from_ymd_opt(publication.pub_year, 1, 1))
        .unwrap_or(NaiveDate::MIN);
    if date < cutoff {
        Period::PreCutoff
    } else {
        Period::PostCutoff
    }
}

/// Rank-based quartiles; tied values share the quartile of their first rank.
fn quartiles<K: Ord + Copy>(keys: &[K]) -> Vec<u8> {
    let n = keys.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| keys[i]);
    let mut out = vec![0u8; n];
    let mut first_rank = 0;
    for (rank, &i) in order.iter().enumerate() {
        if rank > 0 && keys[order[rank - 1]] != keys[i] {
            first_rank = rank;
        }
        out[i] = (4 * first_rank / n) as u8;
    }
    out
}

/// Largest-remainder proportional allocation of `n` over `sizes`; ties go to
/// the earlier entry.
pub fn allocate(n: usize, sizes: &[usize]) -> Vec<usize> {
    let total: usize = sizes.iter().sum();
    if total == 0 {
        return vec![0; sizes.len()];
    }
    let mut alloc: Vec<usize> = sizes.iter().map(|s| n * s / total).collect();
    let mut rem: Vec<(usize, usize)> = sizes
        .iter()
        .enumerate()
        .map(|(i, s)| (n * s % total, i))
        .collect();
    rem.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let short = n - alloc.iter().sum::<usize>();
    for &(_, i) in rem.iter().take(short) {
        alloc[i] += 1;
    }
    alloc
}

/// Round-robin across diversity groups, groups ordered by first appearance.
fn spread_pick<'a>(items: Vec<&'a Item<'a>>, k: usize) -> Vec<&'a Item<'a>> {
    let mut groups: IndexMap<&[String], Vec<&Item>> = IndexMap::new();
    for it in items {
        groups.entry(it.diversity.as_slice()).or_default().push(it);
    }
    let mut out = Vec::with_capacity(k);
    let mut round = 0;
    while out.len() < k {
        let before = out.len();
        for g in groups.values() {
            if out.len() == k {
                break;
            }
            if let Some(it) = g.get(round) {
                out.push(*it);
            }
        }
        if out.len() == before {
            break;
        }
        round += 1;
    }
    out
}

pub fn stratified_sample(corpus: &Corpus, spec: &StrataSpec) -> Result<Vec<PairRecord>, SampleError> {
    if spec.sample_size > corpus.len() {
        return Err(SampleError::TooLarge {
            requested: spec.sample_size,
            available: corpus.len(),
        });
    }
    if let Some(f) = spec.pre_cutoff_fraction {
        if !(0.0..=1.0).contains(&f) {
            return Err(SampleError::BadFraction(f));
        }
    }

    let include: BTreeSet<&str> = spec.include.iter().map(String::as_str).collect();
    for id in &include {
        if corpus.pair(id).is_none() {
            return Err(SampleError::UnknownInclude(id.to_string()));
        }
    }
    if include.len() > spec.sample_size {
        return Err(SampleError::IncludeOverflow {
            included: include.len(),
            sample_size: spec.sample_size,
        });
    }

    // Sorting first makes the result independent of corpus file order.
    let mut pairs: Vec<&PairRecord> = corpus.pairs.iter().collect();
    pairs.sort_by(|a, b| a.pair_id.cmp(&b.pair_id));

    let mut picked: Vec<&PairRecord> = pairs
        .iter()
        .copied()
        .filter(|p| include.contains(p.pair_id.as_str()))
        .collect();
    let items: Vec<Item> = pairs
        .iter()
        .filter(|p| !include.contains(p.pair_id.as_str()))
        .map(|p| {
            let publication = corpus.publication_of(p);
            let identifier = corpus.identifier_of(p);
            Item {
                pair: p,
                period: period_of(corpus, p, spec.cutoff_date),
                year: publication.pub_year,
                chars: publication.char_count,
                diversity: spec
                    .diversity_fields
                    .iter()
                    .map(|d| match d {
                        DiversityField::Publisher => publication.publisher.clone(),
                        DiversityField::IdentifierClass => identifier.identifier_class.clone(),
                    })
                    .collect(),
            }
        })
        .collect();

    let mut strata: BTreeMap<Stratum, Vec<&Item>> = BTreeMap::new();
    let mut quartile_fields = spec.quartile_fields.clone();
    quartile_fields.sort();
    quartile_fields.dedup();
    for period in [Period::PreCutoff, Period::PostCutoff] {
        let members: Vec<&Item> = items.iter().filter(|i| i.period == period).collect();
        let qs: Vec<Vec<u8>> = quartile_fields
            .iter()
            .map(|f| match f {
                QuartileField::PubYear => quartiles(&members.iter().map(|i| i.year).collect::<Vec<_>>()),
                QuartileField::CharCount => quartiles(&members.iter().map(|i| i.chars).collect::<Vec<_>>()),
            })
            .collect();
        for (j, it) in members.iter().enumerate() {
            let key = Stratum {
                period,
                quartiles: quartile_fields.iter().zip(&qs).map(|(f, q)| (*f, q[j])).collect(),
            };
            strata.entry(key).or_default().push(it);
        }
    }

    let remaining = spec.sample_size - picked.len();
    let keys: Vec<&Stratum> = strata.keys().collect();
    let sizes: Vec<usize> = strata.values().map(Vec::len).collect();
    let alloc = match spec.pre_cutoff_fraction {
        None => allocate(remaining, &sizes),
        Some(f) => {
            let pre = (remaining as f64 * f).round() as usize;
            let mut alloc = vec![0; sizes.len()];
            for (period, n) in [(Period::PreCutoff, pre), (Period::PostCutoff, remaining - pre)] {
                let idx: Vec<usize> = (0..keys.len()).filter(|&i| keys[i].period == period).collect();
                let held: usize = idx.iter().map(|&i| sizes[i]).sum();
                if n > held {
                    let name = match period {
                        Period::PreCutoff => "pre-cutoff",
                        Period::PostCutoff => "post-cutoff",
                    };
                    return Err(SampleError::Allocation {
                        stratum: name.into(),
                        needed: n,
                        available: held,
                    });
                }
                let part = allocate(n, &idx.iter().map(|&i| sizes[i]).collect::<Vec<_>>());
                for (&i, a) in idx.iter().zip(part) {
                    alloc[i] = a;
                }
            }
            alloc
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for ((key, members), k) in strata.into_iter().zip(alloc) {
        if k > members.len() {
            return Err(SampleError::Allocation {
                stratum: key.to_string(),
                needed: k,
                available: members.len(),
            });
        }
        let mut shuffled = members;
        shuffled.shuffle(&mut rng);
        picked.extend(spread_pick(shuffled, k).into_iter().map(|i| i.pair));
    }

    let mut out: Vec<PairRecord> = picked.into_iter().cloned().collect();
    out.sort_by(|a, b| a.pair_id.cmp(&b.pair_id));
    Ok(out)
}
