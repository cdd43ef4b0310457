use std::cmp::Ordering;

use rayon::prelude::*;

use crate::code::TernaryCode;
use crate::error::{Error, Result};

/// Support-intersection tallies between a query and one database code:
/// `sim` counts positions where both are nonzero with equal sign, `dis`
/// positions where both are nonzero with opposite sign.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ScorePair {
    pub sim: u32,
    pub dis: u32,
}

impl ScorePair {
    /// Agreement ratio `sim / (sim + dis)`; an empty intersection scores 0.
    pub fn nu(&self) -> f64 {
        let den = u64::from(self.sim) + u64::from(self.dis);
        if den == 0 {
            0.0
        } else {
            self.sim as f64 / den as f64
        }
    }

    /// Compares agreement ratios exactly via integer cross-multiplication,
    /// with `0/0` ranked as 0.
    pub fn nu_cmp(&self, other: &ScorePair) -> Ordering {
        let da = u64::from(self.sim) + u64::from(self.dis);
        let db = u64::from(other.sim) + u64::from(other.dis);
        match (da == 0, db == 0) {
            (true, true) => Ordering::Equal,
            (true, false) => 0u32.cmp(&other.sim.min(1)),
            (false, true) => self.sim.min(1).cmp(&0u32),
            (false, false) => (u64::from(self.sim) * db).cmp(&(u64::from(other.sim) * da)),
        }
    }
}

/// Ranks `a` against `b`: higher agreement ratio first, then more
/// similarities, then the lower index.
fn rank_cmp(a: (usize, &ScorePair), b: (usize, &ScorePair)) -> Ordering {
    b.1.nu_cmp(a.1)
        .then_with(|| b.1.sim.cmp(&a.1.sim))
        .then_with(|| a.0.cmp(&b.0))
}

/// Which machinery produced a candidate list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// Linear scan over all codes.
    Exhaustive,
    /// Posting-list accumulation in an inverted index.
    Indexed,
}

/// How candidates are admitted to a list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionRule {
    /// Keep the best `gamma` candidates under the ranking order.
    TopGamma(usize),
    /// Keep every candidate with `sim >= min_sim` and `dis <= max_dis`.
    Threshold { min_sim: u32, max_dis: u32 },
}

/// A ranked shortlist of database indices with their score tallies.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateList {
    pub indices: Vec<usize>,
    pub scores: Vec<ScorePair>,
    pub stage: Stage,
    pub rule: SelectionRule,
    /// True when a top-`gamma` request asked for more entries than the
    /// database holds.
    pub truncated: bool,
}

impl CandidateList {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// True when both lists rank the same indices with the same tallies,
    /// regardless of which machinery produced them.
    pub fn same_ranking(&self, other: &CandidateList) -> bool {
        self.indices == other.indices && self.scores == other.scores
    }
}

/// Scores one pair of codes.
pub fn score(a: &TernaryCode, b: &TernaryCode) -> Result<ScorePair> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let mut pair = ScorePair::default();
    for (pos, sign) in a.support() {
        let other = b.entries()[pos];
        if other == sign {
            pair.sim += 1;
        } else if other == -sign {
            pair.dis += 1;
        }
    }
    Ok(pair)
}

/// Scores a query against every code in the slice, in slice order.
pub fn score_all(query: &TernaryCode, codes: &[TernaryCode]) -> Result<Vec<ScorePair>> {
    codes.par_iter().map(|c| score(query, c)).collect()
}

fn select(scores: &[ScorePair], rule: SelectionRule) -> Result<(Vec<usize>, bool)> {
    match rule {
        SelectionRule::TopGamma(gamma) => {
            if gamma == 0 {
                return Err(Error::invalid("gamma must be at least 1"));
            }
            let mut order: Vec<usize> = (0..scores.len()).collect();
            let keep = gamma.min(scores.len());
            if keep < scores.len() {
                order.select_nth_unstable_by(keep - 1, |&a, &b| {
                    rank_cmp((a, &scores[a]), (b, &scores[b]))
                });
                order.truncate(keep);
            }
            order.sort_unstable_by(|&a, &b| rank_cmp((a, &scores[a]), (b, &scores[b])));
            Ok((order, gamma > scores.len()))
        }
        SelectionRule::Threshold { min_sim, max_dis } => {
            let mut picked: Vec<usize> = scores
                .iter()
                .enumerate()
                .filter(|(_, s)| s.sim >= min_sim && s.dis <= max_dis)
                .map(|(i, _)| i)
                .collect();
            picked.sort_unstable_by(|&a, &b| rank_cmp((a, &scores[a]), (b, &scores[b])));
            Ok((picked, false))
        }
    }
}

fn assemble(
    scores: Vec<ScorePair>,
    rule: SelectionRule,
    stage: Stage,
) -> Result<CandidateList> {
    let (indices, truncated) = select(&scores, rule)?;
    let picked_scores = indices.iter().map(|&i| scores[i]).collect();
    Ok(CandidateList {
        indices,
        scores: picked_scores,
        stage,
        rule,
        truncated,
    })
}

/// The `gamma` best-ranked database codes for a query, by linear scan.
pub fn top_gamma(
    query: &TernaryCode,
    codes: &[TernaryCode],
    gamma: usize,
) -> Result<CandidateList> {
    let scores = score_all(query, codes)?;
    assemble(scores, SelectionRule::TopGamma(gamma), Stage::Exhaustive)
}

/// Every database code with `sim >= min_sim` and `dis <= max_dis`, ranked,
/// by linear scan.
pub fn threshold_list(
    query: &TernaryCode,
    codes: &[TernaryCode],
    min_sim: u32,
    max_dis: u32,
) -> Result<CandidateList> {
    let scores = score_all(query, codes)?;
    assemble(scores, SelectionRule::Threshold { min_sim, max_dis }, Stage::Exhaustive)
}

/// Posting lists per `(position, sign)`; queries touch only the postings on
/// their support, and the resulting tallies match the linear scan exactly.
#[derive(Debug, Clone)]
pub struct InvertedIndex {
    code_length: usize,
    items: usize,
    plus: Vec<Vec<u32>>,
    minus: Vec<Vec<u32>>,
}

impl InvertedIndex {
    pub fn build(codes: &[TernaryCode]) -> Result<Self> {
        let Some(first) = codes.first() else {
            return Err(Error::invalid("index needs at least one code"));
        };
        let l = first.len();
        if codes.len() > u32::MAX as usize {
            return Err(Error::invalid("index supports at most 2^32 - 1 codes"));
        }
        let mut plus = vec![Vec::new(); l];
        let mut minus = vec![Vec::new(); l];
        for (item, code) in codes.iter().enumerate() {
            if code.len() != l {
                return Err(Error::DimensionMismatch {
                    expected: l,
                    actual: code.len(),
                });
            }
            for (pos, sign) in code.support() {
                if sign > 0 {
                    plus[pos].push(item as u32);
                } else {
                    minus[pos].push(item as u32);
                }
            }
        }
        Ok(Self {
            code_length: l,
            items: codes.len(),
            plus,
            minus,
        })
    }

    pub fn code_length(&self) -> usize {
        self.code_length
    }

    pub fn num_items(&self) -> usize {
        self.items
    }

    /// Tallies for every database item, in item order.
    pub fn score_all(&self, query: &TernaryCode) -> Result<Vec<ScorePair>> {
        if query.len() != self.code_length {
            return Err(Error::DimensionMismatch {
                expected: self.code_length,
                actual: query.len(),
            });
        }
        let mut scores = vec![ScorePair::default(); self.items];
        for (pos, sign) in query.support() {
            let (agree, disagree) = if sign > 0 {
                (&self.plus[pos], &self.minus[pos])
            } else {
                (&self.minus[pos], &self.plus[pos])
            };
            for &item in agree {
                scores[item as usize].sim += 1;
            }
            for &item in disagree {
                scores[item as usize].dis += 1;
            }
        }
        Ok(scores)
    }

    pub fn top_gamma(&self, query: &TernaryCode, gamma: usize) -> Result<CandidateList> {
        let scores = self.score_all(query)?;
        assemble(scores, SelectionRule::TopGamma(gamma), Stage::Indexed)
    }

    pub fn threshold_list(
        &self,
        query: &TernaryCode,
        min_sim: u32,
        max_dis: u32,
    ) -> Result<CandidateList> {
        let scores = self.score_all(query)?;
        assemble(scores, SelectionRule::Threshold { min_sim, max_dis }, Stage::Indexed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::stream_rng;
    use rand::{Rng, RngExt};

    fn code(entries: Vec<i8>) -> TernaryCode {
        TernaryCode::new(entries).unwrap()
    }

    #[test]
    fn tallies_count_sign_agreement() {
        let a = code(vec![1, -1, 0, 1, 0]);
        let b = code(vec![1, 1, -1, 1, 0]);
        let s = score(&a, &b).unwrap();
        assert_eq!(s, ScorePair { sim: 2, dis: 1 });
        assert_eq!(score(&b, &a).unwrap(), s);
    }

    #[test]
    fn negating_one_side_swaps_tallies() {
        let a = code(vec![1, -1, 0, 1]);
        let b = code(vec![1, 1, 1, -1]);
        let s = score(&a, &b).unwrap();
        let swapped = score(&a, &b.negated()).unwrap();
        assert_eq!(swapped, ScorePair { sim: s.dis, dis: s.sim });
    }

    #[test]
    fn nu_handles_empty_intersection() {
        assert_eq!(ScorePair { sim: 0, dis: 0 }.nu(), 0.0);
        assert_eq!(ScorePair { sim: 3, dis: 1 }.nu(), 0.75);

        let zero = ScorePair { sim: 0, dis: 0 };
        let hit = ScorePair { sim: 1, dis: 3 };
        let miss = ScorePair { sim: 0, dis: 2 };
        assert_eq!(zero.nu_cmp(&hit), Ordering::Less);
        assert_eq!(zero.nu_cmp(&miss), Ordering::Equal);
        assert_eq!(hit.nu_cmp(&zero), Ordering::Greater);
    }

    #[test]
    fn nu_cmp_is_exact_where_floats_round() {
        let a = ScorePair { sim: 333_333_333, dis: 666_666_667 };
        let b = ScorePair { sim: 333_333_334, dis: 666_666_666 };
        assert_eq!(a.nu_cmp(&b), Ordering::Less);
        assert_eq!(a.nu_cmp(&a), Ordering::Equal);
    }

    #[test]
    fn top_gamma_orders_by_ratio_then_sim_then_index() {
        let query = code(vec![1, 1, 1, 1]);
        let db = vec![
            code(vec![1, 1, -1, 0]),  // 2/3
            code(vec![1, 0, 0, 0]),   // 1/1
            code(vec![1, 1, 0, 0]),   // 2/2, more sims than db[1]
            code(vec![-1, -1, 0, 0]), // 0/2
        ];
        let list = top_gamma(&query, &db, 3).unwrap();
        assert_eq!(list.indices, vec![2, 1, 0]);
        assert!(!list.truncated);

        let all = top_gamma(&query, &db, 9).unwrap();
        assert_eq!(all.indices, vec![2, 1, 0, 3]);
        assert!(all.truncated);

        assert!(top_gamma(&query, &db, 0).is_err());
    }

    #[test]
    fn threshold_rule_filters_on_both_tallies() {
        let query = code(vec![1, 1, 1, 1]);
        let db = vec![
            code(vec![1, 1, -1, 0]),
            code(vec![1, 0, 0, 0]),
            code(vec![-1, -1, -1, 0]),
        ];
        let list = threshold_list(&query, &db, 1, 0).unwrap();
        assert_eq!(list.indices, vec![1]);
        let looser = threshold_list(&query, &db, 1, 1).unwrap();
        assert_eq!(looser.indices, vec![1, 0]);
    }

    fn random_code<R: Rng>(l: usize, s: usize, rng: &mut R) -> TernaryCode {
        let mut entries = vec![0i8; l];
        for slot in rand::seq::index::sample(rng, l, s) {
            entries[slot] = if rng.random::<bool>() { 1 } else { -1 };
        }
        TernaryCode::from_signs(entries)
    }

    #[test]
    fn inverted_index_matches_linear_scan() {
        let mut rng = stream_rng(99, 0);
        let db: Vec<TernaryCode> = (0..300).map(|_| random_code(64, 12, &mut rng)).collect();
        let index = InvertedIndex::build(&db).unwrap();
        for _ in 0..20 {
            let q = random_code(64, 20, &mut rng);
            assert_eq!(index.score_all(&q).unwrap(), score_all(&q, &db).unwrap());
            let a = top_gamma(&q, &db, 10).unwrap();
            let b = index.top_gamma(&q, 10).unwrap();
            assert!(a.same_ranking(&b));
            let c = threshold_list(&q, &db, 3, 2).unwrap();
            let d = index.threshold_list(&q, 3, 2).unwrap();
            assert!(c.same_ranking(&d));
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let a = code(vec![1, 0]);
        let b = code(vec![1, 0, -1]);
        assert!(score(&a, &b).is_err());
        let index = InvertedIndex::build(&[b]).unwrap();
        assert!(index.score_all(&a).is_err());
    }
}
