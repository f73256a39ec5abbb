//! Membership inference from output magnitudes.
//!
//! In high dimension, training points sit on the margin (`|Φ(x)| = m`) while
//! fresh points from the same distribution land far inside (`|Φ(x)| ≪ m`).
//! The attacks here only evaluate the network, so they apply in the black-box
//! setting as well.

use std::fmt::Write as _;

use ndarray::{Array2, ArrayView1, Axis};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{forward, NetworkParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackRule {
    KnownMargin,
    LeakedPoints,
    BoundedMargin,
}

impl AttackRule {
    pub fn as_str(self) -> &'static str {
        match self {
            AttackRule::KnownMargin => "known-margin",
            AttackRule::LeakedPoints => "leaked-points",
            AttackRule::BoundedMargin => "bounded-margin",
        }
    }
}

impl std::str::FromStr for AttackRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "known-margin" => Ok(AttackRule::KnownMargin),
            "leaked-points" => Ok(AttackRule::LeakedPoints),
            "bounded-margin" => Ok(AttackRule::BoundedMargin),
            other => Err(Error::invalid(format!("unknown attack rule '{other}'"))),
        }
    }
}

/// Default constant for the bounded-margin rule: trained networks with small
/// loss have margin above `1/e`.
pub const DEFAULT_BOUND: f64 = 1.0 / std::f64::consts::E;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MembershipVerdict {
    pub score: f64,
    pub is_member: bool,
    pub rule: AttackRule,
    pub threshold_used: f64,
}

pub fn membership_score(net: &NetworkParams, x: ArrayView1<f64>) -> Result<f64> {
    Ok(forward(net, x)?.abs())
}

fn scores_of(net: &NetworkParams, points: &Array2<f64>) -> Result<Vec<f64>> {
    if points.ncols() != net.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: net.input_dim(),
            found: points.ncols(),
        });
    }
    let rows: Vec<ArrayView1<f64>> = points.axis_iter(Axis(0)).collect();
    rows.into_par_iter().map(|x| membership_score(net, x)).collect()
}

fn positive(name: &str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be positive, got {value}")))
    }
}

/// Verdict for a precomputed score under the known-margin rule (`score ≥ m/2`).
pub fn verdict_known_margin(score: f64, m: f64) -> MembershipVerdict {
    let threshold = 0.5 * m;
    MembershipVerdict {
        score,
        is_member: score >= threshold,
        rule: AttackRule::KnownMargin,
        threshold_used: threshold,
    }
}

/// Verdict for a precomputed score under the bounded-margin rule (`score > C`).
pub fn verdict_bounded_margin(score: f64, c: f64) -> MembershipVerdict {
    MembershipVerdict {
        score,
        is_member: score > c,
        rule: AttackRule::BoundedMargin,
        threshold_used: c,
    }
}

/// Verdicts for precomputed scores of a leaked set known to hold a member:
/// threshold at half the largest score.
pub fn verdicts_leaked_points(scores: &[f64]) -> Result<Vec<MembershipVerdict>> {
    if scores.is_empty() {
        return Err(Error::EmptyInput("leaked point set"));
    }
    let alpha = scores.iter().copied().fold(0.0, f64::max);
    if alpha <= 0.0 {
        return Err(Error::DegenerateNetwork("every leaked point scores zero".into()));
    }
    let threshold = 0.5 * alpha;
    Ok(scores
        .iter()
        .map(|&score| MembershipVerdict {
            score,
            is_member: score >= threshold,
            rule: AttackRule::LeakedPoints,
            threshold_used: threshold,
        })
        .collect())
}

pub fn attack_known_margin(net: &NetworkParams, m: f64, x: ArrayView1<f64>) -> Result<MembershipVerdict> {
    positive("margin", m)?;
    Ok(verdict_known_margin(membership_score(net, x)?, m))
}

pub fn attack_leaked_points(net: &NetworkParams, zs: &Array2<f64>) -> Result<Vec<MembershipVerdict>> {
    if zs.nrows() == 0 {
        return Err(Error::EmptyInput("leaked point set"));
    }
    verdicts_leaked_points(&scores_of(net, zs)?)
}

pub fn attack_bounded_margin(net: &NetworkParams, c: f64, x: ArrayView1<f64>) -> Result<MembershipVerdict> {
    positive("bound", c)?;
    Ok(verdict_bounded_margin(membership_score(net, x)?, c))
}

/// Rule plus its parameter, as consumed by [`evaluate_attack`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RuleSpec {
    KnownMargin {
        m: f64,
    },
    /// The member set plays the role of the leaked points: α is taken over
    /// both sets, which is what an attacker holding the pooled points sees.
    LeakedPoints,
    BoundedMargin {
        c: f64,
    },
}

impl RuleSpec {
    pub fn rule(&self) -> AttackRule {
        match self {
            RuleSpec::KnownMargin { .. } => AttackRule::KnownMargin,
            RuleSpec::LeakedPoints => AttackRule::LeakedPoints,
            RuleSpec::BoundedMargin { .. } => AttackRule::BoundedMargin,
        }
    }

    /// Verdicts for a batch of scores.
    pub fn apply(&self, scores: &[f64]) -> Result<Vec<MembershipVerdict>> {
        match *self {
            RuleSpec::KnownMargin { m } => {
                positive("margin", m)?;
                Ok(scores.iter().map(|&s| verdict_known_margin(s, m)).collect())
            }
            RuleSpec::LeakedPoints => verdicts_leaked_points(scores),
            RuleSpec::BoundedMargin { c } => {
                positive("bound", c)?;
                Ok(scores.iter().map(|&s| verdict_bounded_margin(s, c)).collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredPoint {
    pub point_id: usize,
    pub truth: bool,
    pub verdict: MembershipVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackEvaluation {
    pub true_positives: usize,
    pub false_positives: usize,
    pub true_negatives: usize,
    pub false_negatives: usize,
    pub accuracy: f64,
    pub true_positive_rate: f64,
    pub false_positive_rate: f64,
    pub auc: f64,
    /// Members first, then fresh points, in input order.
    pub points: Vec<ScoredPoint>,
}

impl AttackEvaluation {
    /// Tallies verdicts against ground truth. `scores` and `truth` run in parallel.
    pub fn from_verdicts(verdicts: Vec<MembershipVerdict>, truth: &[bool]) -> Result<Self> {
        if verdicts.len() != truth.len() {
            return Err(Error::DimensionMismatch {
                expected: truth.len(),
                found: verdicts.len(),
            });
        }
        let (mut tp, mut fp, mut tn, mut fneg) = (0, 0, 0, 0);
        for (v, &t) in verdicts.iter().zip(truth) {
            match (v.is_member, t) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, false) => tn += 1,
                (false, true) => fneg += 1,
            }
        }
        let total = verdicts.len();
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let scores: Vec<f64> = verdicts.iter().map(|v| v.score).collect();
        let points = verdicts
            .into_iter()
            .zip(truth)
            .enumerate()
            .map(|(point_id, (verdict, &truth))| ScoredPoint {
                point_id,
                truth,
                verdict,
            })
            .collect();
        Ok(AttackEvaluation {
            true_positives: tp,
            false_positives: fp,
            true_negatives: tn,
            false_negatives: fneg,
            accuracy: ratio(tp + tn, total),
            true_positive_rate: ratio(tp, tp + fneg),
            false_positive_rate: ratio(fp, fp + tn),
            auc: auc(&scores, truth),
            points,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("point_id,score,truth,verdict,rule\n");
        for p in &self.points {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                p.point_id,
                p.verdict.score,
                if p.truth { "member" } else { "non-member" },
                if p.verdict.is_member { "member" } else { "non-member" },
                p.verdict.rule.as_str()
            );
        }
        out
    }
}

/// Area under the ROC curve of `scores` ranking positives above negatives,
/// via the Mann–Whitney statistic with average ranks for ties. Returns 0.5
/// when either class is empty.
pub fn auc(scores: &[f64], truth: &[bool]) -> f64 {
    let n_pos = truth.iter().filter(|&&t| t).count();
    let n_neg = truth.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return 0.5;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks are 1-based; a tie block i..=j shares the average rank.
        let avg = 0.5 * ((i + 1) + (j + 1)) as f64;
        rank_sum += avg * order[i..=j].iter().filter(|&&k| truth[k]).count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    u / (n_pos as f64 * n_neg as f64)
}

pub fn evaluate_attack(
    net: &NetworkParams,
    members: &Array2<f64>,
    fresh: &Array2<f64>,
    rule: RuleSpec,
) -> Result<AttackEvaluation> {
    if members.nrows() == 0 {
        return Err(Error::EmptyInput("member set"));
    }
    if fresh.nrows() == 0 {
        return Err(Error::EmptyInput("fresh set"));
    }
    let mut scores = scores_of(net, members)?;
    scores.extend(scores_of(net, fresh)?);
    let truth: Vec<bool> = (0..scores.len()).map(|i| i < members.nrows()).collect();
    AttackEvaluation::from_verdicts(rule.apply(&scores)?, &truth)
}
