//! Precision-recall curves and average precision, with disagreement as the
//! positive class. Items sharing a score form one threshold group and enter
//! the ranking together, so results do not depend on input order.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::answers::AgreementLabel;
use crate::corpus::{stratum_name, AnswerType};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub recall: f64,
    pub precision: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    /// One point per distinct score, thresholds descending.
    pub points: Vec<PrPoint>,
    pub n_positive: usize,
    pub n_total: usize,
}

/// (score, positives in group, group size).
type Group = (f64, usize, usize);

/// Groups of equal score, scores descending, plus the total positive count.
fn threshold_groups(scores: &[f64], labels: &[AgreementLabel]) -> Result<(Vec<Group>, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: scores.len(),
            right: labels.len(),
        });
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFiniteScore(i));
    }
    let n_positive = labels.iter().filter(|l| l.is_disagreement()).count();
    if n_positive == 0 {
        return Err(Error::NoPositives);
    }

    let mut ranked: Vec<(f64, bool)> = scores
        .iter()
        .zip(labels)
        .map(|(&s, l)| (s, l.is_disagreement()))
        .collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut groups: Vec<(f64, usize, usize)> = Vec::new();
    for (score, positive) in ranked {
        match groups.last_mut() {
            // -0.0 and 0.0 compare equal and share a group
            Some(g) if g.0 == score => {
                g.1 += usize::from(positive);
                g.2 += 1;
            }
            _ => groups.push((score, usize::from(positive), 1)),
        }
    }
    Ok((groups, n_positive))
}

pub fn pr_curve(scores: &[f64], labels: &[AgreementLabel]) -> Result<PrCurve> {
    let (groups, n_positive) = threshold_groups(scores, labels)?;
    let (mut tp, mut seen) = (0usize, 0usize);
    let points = groups
        .into_iter()
        .map(|(threshold, pos, size)| {
            tp += pos;
            seen += size;
            PrPoint {
                recall: tp as f64 / n_positive as f64,
                precision: tp as f64 / seen as f64,
                threshold,
            }
        })
        .collect();
    Ok(PrCurve {
        points,
        n_positive,
        n_total: scores.len(),
    })
}

/// Non-interpolated average precision: the mean, over positive items, of the
/// precision measured after the item's threshold group.
pub fn average_precision(scores: &[f64], labels: &[AgreementLabel]) -> Result<f64> {
    let (groups, n_positive) = threshold_groups(scores, labels)?;
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut sum = 0.0;
    for (_, pos, size) in groups {
        tp += pos;
        seen += size;
        sum += pos as f64 * (tp as f64 / seen as f64);
    }
    Ok(sum / n_positive as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// `None` when the whole set has no positives.
    pub ap_overall: Option<f64>,
    /// Strata without positives are omitted.
    pub ap_by_type: BTreeMap<String, f64>,
    pub n_by_type: BTreeMap<String, usize>,
}

/// Item indices per answer-type stratum (`"unknown"` for untyped items).
pub fn strata(answer_types: &[Option<AnswerType>]) -> BTreeMap<&'static str, Vec<usize>> {
    let mut out: BTreeMap<&'static str, Vec<usize>> = BTreeMap::new();
    for (i, t) in answer_types.iter().enumerate() {
        out.entry(stratum_name(*t)).or_default().push(i);
    }
    out
}

pub fn stratified_eval(
    scores: &[f64],
    labels: &[AgreementLabel],
    answer_types: &[Option<AnswerType>],
) -> Result<EvalReport> {
    if scores.len() != labels.len() || scores.len() != answer_types.len() {
        return Err(Error::LengthMismatch {
            left: scores.len(),
            right: if scores.len() != labels.len() {
                labels.len()
            } else {
                answer_types.len()
            },
        });
    }
    let ap_or_absent = |s: &[f64], l: &[AgreementLabel]| match average_precision(s, l) {
        Ok(ap) => Ok(Some(ap)),
        Err(Error::NoPositives) => Ok(None),
        Err(e) => Err(e),
    };

    let mut report = EvalReport {
        ap_overall: ap_or_absent(scores, labels)?,
        ap_by_type: BTreeMap::new(),
        n_by_type: BTreeMap::new(),
    };
    for (name, idx) in strata(answer_types) {
        let s: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
        let l: Vec<AgreementLabel> = idx.iter().map(|&i| labels[i]).collect();
        report.n_by_type.insert(name.to_string(), idx.len());
        if let Some(ap) = ap_or_absent(&s, &l)? {
            report.ap_by_type.insert(name.to_string(), ap);
        }
    }
    Ok(report)
}
