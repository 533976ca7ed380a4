//! Token, dollar and pass-count estimates for a boosting run.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Training and validation shares of the dataset, in tenths.
const TRAIN_TENTHS: u128 = 5;
const VALIDATION_TENTHS: u128 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostInputs {
    pub examples: u64,
    pub rounds: u64,
    pub resamples: u64,
    pub summary_tokens: u64,
    pub prediction_tokens: u64,
    pub price_per_1k: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub total_tokens: u64,
    pub dollar_cost: f64,
    pub inputs: CostInputs,
}

/// `rounds * [resamples * (summary + 0.5 N * prediction) + 0.1 N * prediction]`
/// tokens, priced per thousand.
pub fn estimate_cost(inputs: CostInputs) -> Result<CostEstimate> {
    let CostInputs { examples, rounds, resamples, summary_tokens, prediction_tokens, price_per_1k } = inputs;
    if [examples, rounds, resamples, summary_tokens, prediction_tokens].contains(&0) {
        return Err(Error::InvalidArgument("cost inputs must be positive".into()));
    }
    if !(price_per_1k.is_finite() && price_per_1k > 0.0) {
        return Err(Error::InvalidArgument("price must be positive".into()));
    }
    let n_p = (examples * prediction_tokens) as u128;
    let per_resample_tenths = 10 * summary_tokens as u128 + TRAIN_TENTHS * n_p;
    let per_round_tenths = resamples as u128 * per_resample_tenths + VALIDATION_TENTHS * n_p;
    let total_tenths = rounds as u128 * per_round_tenths;
    // Round half up to whole tokens.
    let total_tokens = ((total_tenths + 5) / 10) as u64;
    Ok(CostEstimate { total_tokens, dollar_cost: total_tokens as f64 / 1000.0 * price_per_1k, inputs })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PassMode {
    /// One forward and one backward pass per example per epoch.
    Finetune { epochs: u64, examples: u64 },
    /// One summary call per resample per round.
    Boost { rounds: u64, resamples: u64 },
}

pub fn estimate_passes(mode: PassMode) -> Result<u64> {
    let (a, b, factor) = match mode {
        PassMode::Finetune { epochs, examples } => (epochs, examples, 2),
        PassMode::Boost { rounds, resamples } => (rounds, resamples, 1),
    };
    if a == 0 || b == 0 {
        return Err(Error::InvalidArgument("pass-count inputs must be positive".into()));
    }
    Ok(a * b * factor)
}
