//! Reward selection and summary statistics over scored candidates.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::types::Candidate;

/// Orders candidates by the intrinsic tie-break key: lower layer, then lower
/// within-layer index, then lexicographically smaller id.
fn intrinsic_order(a: &Candidate, b: &Candidate) -> Ordering {
    a.layer
        .cmp(&b.layer)
        .then(a.index.cmp(&b.index))
        .then_with(|| a.id.cmp(&b.id))
}

/// Returns the highest-reward candidate.
///
/// Rewards are compared exactly. Ties go to the candidate that comes first in
/// intrinsic order, so the result does not depend on input order.
pub fn select_best<'a, I>(candidates: I) -> Result<&'a Candidate>
where
    I: IntoIterator<Item = &'a Candidate>,
{
    let mut best: Option<(&Candidate, f64)> = None;
    for c in candidates {
        let r = c.scored_reward()?;
        best = match best {
            None => Some((c, r)),
            Some((b, br)) => {
                let better = match r.partial_cmp(&br) {
                    Some(Ordering::Greater) => true,
                    Some(Ordering::Equal) => intrinsic_order(c, b) == Ordering::Less,
                    // NaN never wins
                    _ => br.is_nan() && !r.is_nan(),
                };
                if better {
                    Some((c, r))
                } else {
                    Some((b, br))
                }
            }
        };
    }
    best.map(|(c, _)| c).ok_or(Error::NoCandidates)
}

/// Mean of the `k` largest rewards.
pub fn top_k_mean<'a, I>(candidates: I, k: usize) -> Result<f64>
where
    I: IntoIterator<Item = &'a Candidate>,
{
    let rewards = candidates
        .into_iter()
        .map(Candidate::scored_reward)
        .collect::<Result<Vec<_>>>()?;
    top_k_mean_of(rewards, k)
}

pub fn top_k_mean_of(mut rewards: Vec<f64>, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::Config("k must be >= 1".into()));
    }
    if rewards.len() < k {
        return Err(Error::NotEnoughCandidates {
            needed: k,
            have: rewards.len(),
        });
    }
    rewards.sort_by(|a, b| b.total_cmp(a));
    Ok(rewards[..k].iter().sum::<f64>() / k as f64)
}

/// Population mean and standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}
