use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::features::PairedInput;
use super::model::ScorerModel;

/// Candidates for one question or context, exactly one of which is gold.
#[derive(Debug, Clone, PartialEq)]
pub struct RankingTask {
    pub id: String,
    pub candidates: Vec<PairedInput>,
    pub gold: usize,
}

impl RankingTask {
    pub fn new(id: impl Into<String>, candidates: Vec<PairedInput>, gold: usize) -> Result<Self> {
        let id = id.into();
        if candidates.len() < 2 {
            return Err(Error::config(format!("task `{id}` needs at least 2 candidates")));
        }
        if gold >= candidates.len() {
            return Err(Error::config(format!(
                "task `{id}`: gold index {gold} out of range for {} candidates",
                candidates.len()
            )));
        }
        Ok(RankingTask { id, candidates, gold })
    }
}

/// Indices sorted by score descending; ties keep ascending index order.
pub fn rank_by_scores<T: Scalar>(scores: &[T]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    order
}

pub fn rank_candidates<T: Scalar>(model: &ScorerModel<T>, task: &RankingTask) -> Result<Vec<usize>> {
    let scores = task
        .candidates
        .iter()
        .map(|c| model.predict_score(c))
        .collect::<Result<Vec<T>>>()?;
    Ok(rank_by_scores(&scores))
}
