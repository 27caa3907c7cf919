//! Rule semantics shared by the environment, the agent's likelihoods and the
//! planner.
//!
//! One step under a hypothesis:
//! 1. settle the pre-state (derived features reset to defaults, condition
//!    rules fired to a fixpoint);
//! 2. for the agent action then the user action: fire every action-triggered
//!    rule whose trigger matches and whose conditions hold, apply effects
//!    together, then settle again.
//!
//! Stochastic rules flip one coin per step; the coin is shared by every
//! firing opportunity of that rule inside the step.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::GroundModel;
use crate::error::{Result, ScoopError};

/// Stochastic rules per hypothesis beyond this make exact enumeration
/// impractical.
pub const MAX_STOCHASTIC_RULES: usize = 16;

/// Coin outcomes for the stochastic rules of one step, keyed by rule index.
#[derive(Debug, Clone, Default)]
pub struct Coins {
    outcomes: BTreeMap<usize, bool>,
}

impl Coins {
    pub fn new() -> Self {
        Coins::default()
    }

    pub fn set(&mut self, rule: usize, fires: bool) {
        self.outcomes.insert(rule, fires);
    }

    fn fires(&self, model: &GroundModel, rule: usize) -> bool {
        let p = model.rules[rule].probability;
        if p >= 1.0 {
            true
        } else if p <= 0.0 {
            false
        } else {
            self.outcomes.get(&rule).copied().unwrap_or(false)
        }
    }

    /// Draws coins for `hypothesis` from the counter-based stream keyed by
    /// (seed, t).
    pub fn draw(model: &GroundModel, hypothesis: usize, seed: u64, t: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(t);
        let mut coins = Coins::new();
        for &r in &model.hypotheses[hypothesis].rules {
            let rule = &model.rules[r];
            if rule.is_stochastic() {
                let u: f64 = rng.random();
                coins.set(r, u < rule.probability);
            }
        }
        coins
    }
}

fn conditions_hold(model: &GroundModel, values: &[u16], rule: usize) -> bool {
    model.rules[rule].conditions.iter().all(|(f, v)| values[*f] == *v)
}

/// Recomputes derived features under a hypothesis.
pub fn settle(model: &GroundModel, values: &mut [u16], hypothesis: usize, coins: &Coins) {
    for (i, f) in model.features.iter().enumerate() {
        if f.derived {
            values[i] = f.default;
        }
    }
    let rules = &model.hypotheses[hypothesis].rules;
    let passes = rules.len() + 1;
    for _ in 0..passes {
        let mut changed = false;
        for &r in rules {
            if model.rules[r].trigger.is_some() || !coins.fires(model, r) {
                continue;
            }
            if conditions_hold(model, values, r) {
                for &(f, v) in &model.rules[r].effects {
                    if values[f] != v {
                        values[f] = v;
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
}

fn fire_action(model: &GroundModel, values: &mut Vec<u16>, action: usize, hypothesis: usize, coins: &Coins) {
    let mut effects: Vec<(usize, u16)> = Vec::new();
    for &r in &model.hypotheses[hypothesis].rules {
        if model.rules[r].trigger == Some(action)
            && conditions_hold(model, values, r)
            && coins.fires(model, r)
        {
            effects.extend_from_slice(&model.rules[r].effects);
        }
    }
    for (f, v) in effects {
        values[f] = v;
    }
}

/// Applies (agent action, user action) under a hypothesis with fixed coins.
/// `None` stands for NoOp or a query, which do not drive the dynamics.
pub fn apply(
    model: &GroundModel,
    values: &[u16],
    actions: &[Option<usize>],
    hypothesis: usize,
    coins: &Coins,
) -> Vec<u16> {
    let mut s = values.to_vec();
    settle(model, &mut s, hypothesis, coins);
    for a in actions.iter().flatten() {
        fire_action(model, &mut s, *a, hypothesis, coins);
        settle(model, &mut s, hypothesis, coins);
    }
    s
}

fn stochastic_rules(model: &GroundModel, hypothesis: usize) -> Vec<usize> {
    model.hypotheses[hypothesis]
        .rules
        .iter()
        .copied()
        .filter(|&r| model.rules[r].is_stochastic())
        .collect()
}

/// Exact next-state distribution, enumerating every coin assignment.
/// Entries are sorted by state and merged.
pub fn transition_distribution(
    model: &GroundModel,
    values: &[u16],
    actions: &[Option<usize>],
    hypothesis: usize,
) -> Result<Vec<(Vec<u16>, f64)>> {
    let stochastic = stochastic_rules(model, hypothesis);
    if stochastic.is_empty() {
        return Ok(vec![(
            apply(model, values, actions, hypothesis, &Coins::new()),
            1.0,
        )]);
    }
    if stochastic.len() > MAX_STOCHASTIC_RULES {
        return Err(ScoopError::OutOfRange(format!(
            "{} stochastic rules in hypothesis {}",
            stochastic.len(),
            model.hypotheses[hypothesis].id
        )));
    }
    let mut out: BTreeMap<Vec<u16>, f64> = BTreeMap::new();
    for mask in 0u32..(1u32 << stochastic.len()) {
        let mut coins = Coins::new();
        let mut p = 1.0;
        for (bit, &r) in stochastic.iter().enumerate() {
            let fires = mask & (1 << bit) != 0;
            let q = model.rules[r].probability;
            p *= if fires { q } else { 1.0 - q };
            coins.set(r, fires);
        }
        if p == 0.0 {
            continue;
        }
        *out.entry(apply(model, values, actions, hypothesis, &coins))
            .or_insert(0.0) += p;
    }
    Ok(out.into_iter().collect())
}

/// Observable projection of a full assignment.
pub fn observable_part(model: &GroundModel, values: &[u16]) -> Vec<(usize, u16)> {
    model
        .features
        .iter()
        .enumerate()
        .filter(|(_, f)| f.observable)
        .map(|(i, _)| (i, values[i]))
        .collect()
}
