use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Duel, PreferenceOracle, Verdict};
use crate::embed::{cosine, Embedding};
use crate::error::{Error, Result};
use crate::gp::sigmoid;

/// Ground-truth utility `f(view) = cos(view, target)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticUtility {
    pub target: Embedding,
    /// Zero gives a noiseless oracle.
    pub noise_beta: f64,
}

impl SyntheticUtility {
    pub fn new(target: Embedding, noise_beta: f64) -> Result<Self> {
        if !(noise_beta >= 0.0 && noise_beta.is_finite()) {
            return Err(Error::InvalidArgument(format!("noise_beta must be ≥ 0, got {noise_beta}")));
        }
        Ok(SyntheticUtility {
            target: target.normalized()?,
            noise_beta,
        })
    }

    pub fn utility(&self, view: &Embedding) -> Result<f64> {
        cosine(view, &self.target)
    }
}

/// Noiseless: challenger wins iff strictly better. Noisy: challenger wins
/// with probability `σ(β (f_ch − f_inc))`.
pub fn synthetic_compare<R: Rng + ?Sized>(
    u: &SyntheticUtility,
    view_inc: &Embedding,
    view_ch: &Embedding,
    rng: &mut R,
) -> Result<Verdict> {
    let f_inc = u.utility(view_inc)?;
    let f_ch = u.utility(view_ch)?;
    let challenger = if u.noise_beta == 0.0 {
        f_ch > f_inc
    } else {
        rng.random::<f64>() < sigmoid(u.noise_beta * (f_ch - f_inc))
    };
    Ok(if challenger { Verdict::Challenger } else { Verdict::Incumbent })
}

#[derive(Debug, Clone)]
pub struct SyntheticOracle {
    pub utility: SyntheticUtility,
    rng: ChaCha8Rng,
}

impl SyntheticOracle {
    pub fn new(utility: SyntheticUtility, seed: u64) -> Self {
        SyntheticOracle {
            utility,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl PreferenceOracle for SyntheticOracle {
    fn compare(&mut self, duel: &Duel) -> Result<Verdict> {
        synthetic_compare(&self.utility, duel.view_incumbent, duel.view_challenger, &mut self.rng)
    }
}

/// Replays fixed verdicts; errors once they run out.
#[derive(Debug, Clone, Default)]
pub struct ScriptedOracle {
    verdicts: VecDeque<Verdict>,
}

impl ScriptedOracle {
    pub fn new(verdicts: impl IntoIterator<Item = Verdict>) -> Self {
        ScriptedOracle {
            verdicts: verdicts.into_iter().collect(),
        }
    }
}

impl PreferenceOracle for ScriptedOracle {
    fn compare(&mut self, _: &Duel) -> Result<Verdict> {
        self.verdicts
            .pop_front()
            .ok_or_else(|| Error::Oracle("scripted verdicts exhausted".into()))
    }
}
