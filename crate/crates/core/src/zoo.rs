//! Problem generators: the Bayesian Bernoulli bandit, crowdsourced binary
//! labeling, dynamic assortment, two tiny fixtures and random instances for
//! property tests.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::belief::{beta_cdf_int, Posterior};
use crate::math;
use crate::model::{ArmModel, KernelBuilder};

/// One state, pulled or idled it stays put; pulling pays 1. `α = 0.5`,
/// two periods.
pub fn single() -> ArmModel {
    let mut kb = KernelBuilder::new(2, 1);
    for t in 0..2 {
        for a in 0..2 {
            kb.set_deterministic(t, 0, a, 0);
        }
    }
    ArmModel::from_parts(
        2,
        vec!["s".into()],
        0,
        kb.build(),
        vec![vec![[0.0, 1.0]]; 2],
        vec![0.5; 2],
    )
    .expect("fixture shape")
}

/// States `G` (index 0, initial) and `B` (index 1, absorbing). Pulling `G`
/// pays 1 and keeps the arm in `G`; idling it sends the arm to `B`.
/// `α = 0.5`, two periods.
pub fn two() -> ArmModel {
    let mut kb = KernelBuilder::new(2, 2);
    for t in 0..2 {
        kb.set_deterministic(t, 0, 1, 0)
            .set_deterministic(t, 0, 0, 1)
            .set_deterministic(t, 1, 0, 1)
            .set_deterministic(t, 1, 1, 1);
    }
    let rewards = vec![vec![[0.0, 1.0], [0.0, 0.0]]; 2];
    ArmModel::from_parts(
        2,
        vec!["G".into(), "B".into()],
        0,
        kb.build(),
        rewards,
        vec![0.5; 2],
    )
    .expect("fixture shape")
}

/// Index of Bernoulli-bandit state `(n, k)`: `n` pulls, `k` successes.
#[inline]
pub fn bernoulli_index(n: usize, k: usize) -> usize {
    n * (n + 1) / 2 + k
}

/// Bayesian Bernoulli bandit with a uniform prior on each arm's success
/// probability. States are `(n, k)` with `k ≤ n ≤ T−1`; the posterior at
/// `(n, k)` is `Beta(1+k, 1+n−k)` and pulling pays its mean.
pub fn bernoulli_bandit(horizon: usize, alpha: f64) -> ArmModel {
    assert!(horizon >= 1, "horizon must be at least 1");
    let max_n = horizon - 1;
    let n_states = bernoulli_index(max_n, max_n) + 1;
    let mut states = Vec::with_capacity(n_states);
    let mut beliefs = Vec::with_capacity(n_states);
    let mut pull_reward = Vec::with_capacity(n_states);
    for n in 0..=max_n {
        for k in 0..=n {
            states.push(format!("({n},{k})"));
            beliefs.push(Posterior::Beta {
                a: (1 + k) as f64,
                b: (1 + n - k) as f64,
            });
            pull_reward.push((1 + k) as f64 / (2 + n) as f64);
        }
    }
    let mut kb = KernelBuilder::new(horizon, n_states);
    for t in 0..horizon {
        for n in 0..=max_n {
            for k in 0..=n {
                let s = bernoulli_index(n, k);
                kb.set_deterministic(t, s, 0, s);
                if n == max_n {
                    kb.set_deterministic(t, s, 1, s);
                } else {
                    let p = pull_reward[s];
                    kb.set_row(
                        t,
                        s,
                        1,
                        [
                            (bernoulli_index(n + 1, k + 1), p),
                            (bernoulli_index(n + 1, k), 1.0 - p),
                        ],
                    );
                }
            }
        }
    }
    let rewards = vec![pull_reward.iter().map(|&r| [0.0, r]).collect::<Vec<_>>(); horizon];
    ArmModel::from_parts(
        horizon,
        states,
        0,
        kb.build(),
        rewards,
        vec![alpha; horizon],
    )
    .and_then(|m| m.with_beliefs(beliefs))
    .expect("generator shape")
}

/// Index of crowdsourcing state `(h, l)` among pairs with `h + l ≤ cap`.
#[inline]
pub fn crowd_index(h: usize, l: usize) -> usize {
    let m = h + l;
    m * (m + 1) / 2 + l
}

/// `w(h, l) = ∫_{1/2}^{1} p^h (1−p)^l · 2 dp`, the evidence for "the arm's
/// true class is 1" after `h` votes for 1 and `l` for 0, with the labeler
/// accuracy uniform on `[1/2, 1]`.
pub fn crowd_weight(h: usize, l: usize) -> f64 {
    let (a, b) = ((h + 1) as u32, (l + 1) as u32);
    let ln_beta = math::lgamma(a as f64) + math::lgamma(b as f64) - math::lgamma((a + b) as f64);
    2.0 * math::exp(ln_beta) * (1.0 - beta_cdf_int(a, b, 0.5))
}

/// Probability that the majority (posterior-mode) class is correct.
pub fn crowd_accuracy(h: usize, l: usize) -> f64 {
    let (w1, w0) = (crowd_weight(h, l), crowd_weight(l, h));
    if w1 > w0 {
        w1 / (w1 + w0)
    } else {
        w0 / (w1 + w0)
    }
}

/// Predictive probability that the next label is a vote for class 1.
pub fn crowd_next_label_one(h: usize, l: usize) -> f64 {
    (crowd_weight(h + 1, l) + crowd_weight(l, h + 1)) / (crowd_weight(h, l) + crowd_weight(l, h))
}

/// Crowdsourced binary labeling: each arm is an item with an unknown class
/// (uniform prior) labeled by workers whose accuracy is uniform on
/// `[1/2, 1]`. Pulling buys one label. The only reward is the expected
/// number of correctly classified items after the last period, folded into
/// the final period's rewards by a one-step lookahead.
pub fn crowdsourcing(horizon: usize, alpha: f64) -> ArmModel {
    assert!(horizon >= 1, "horizon must be at least 1");
    let cap = horizon;
    let n_states = crowd_index(cap, 0) + 1 + cap;
    let mut states = vec![String::new(); n_states];
    let mut acc = vec![0.0; n_states];
    let mut kb = KernelBuilder::new(horizon, n_states);
    for m in 0..=cap {
        for l in 0..=m {
            let h = m - l;
            let s = crowd_index(h, l);
            states[s] = format!("({h},{l})");
            acc[s] = crowd_accuracy(h, l);
        }
    }
    for t in 0..horizon {
        for m in 0..=cap {
            for l in 0..=m {
                let h = m - l;
                let s = crowd_index(h, l);
                kb.set_deterministic(t, s, 0, s);
                if m == cap {
                    kb.set_deterministic(t, s, 1, s);
                } else {
                    let p = crowd_next_label_one(h, l);
                    kb.set_row(
                        t,
                        s,
                        1,
                        [(crowd_index(h + 1, l), p), (crowd_index(h, l + 1), 1.0 - p)],
                    );
                }
            }
        }
    }
    let kernel = kb.build();
    let mut rewards = vec![vec![[0.0, 0.0]; n_states]; horizon];
    let last = horizon - 1;
    for s in 0..n_states {
        for a in 0..2 {
            rewards[last][s][a] = kernel
                .row(last, s, a)
                .iter()
                .map(|&(j, p)| p * acc[j])
                .sum();
        }
    }
    ArmModel::from_parts(
        horizon,
        states,
        crowd_index(0, 0),
        kernel,
        rewards,
        vec![alpha; horizon],
    )
    .expect("generator shape")
}

/// Default success-count cap of the assortment generator.
pub const ASSORT_M_CAP: usize = 120;
/// Default demand cap of the assortment generator.
pub const ASSORT_X_CAP: usize = 120;
/// Prior rate of the Gamma belief on each product's demand intensity.
pub const ASSORT_PRIOR_RATE: f64 = 0.1;

/// Index of assortment state `(m, j)` (`m ≥ 1`).
#[inline]
pub fn assort_index(horizon: usize, m: usize, j: usize) -> usize {
    (m - 1) * (horizon + 1) + j
}

/// Negative-binomial predictive of one period's demand under a
/// `Gamma(m, a)` belief, truncated at `x_cap` with the tail lumped onto
/// `x_cap`. The returned vector has `x_cap + 1` entries summing to 1.
pub fn assort_predictive(m: usize, a: f64, x_cap: usize) -> Vec<f64> {
    let mut probs = Vec::with_capacity(x_cap + 1);
    let mut p = math::powi(a / (a + 1.0), m as i32);
    let mut acc = 0.0;
    for x in 0..x_cap {
        probs.push(p);
        acc += p;
        p *= (m + x) as f64 / (x + 1) as f64 / (a + 1.0);
    }
    probs.push((1.0 - acc).max(0.0));
    probs
}

/// Demand mass lumped onto `x_cap` at the initial state.
pub fn assort_truncation_mass(x_cap: usize) -> f64 {
    assort_predictive(1, ASSORT_PRIOR_RATE, x_cap)[x_cap]
}

/// Dynamic assortment: each arm is a product with Poisson demand of
/// unknown intensity and a `Gamma(1, 0.1)` prior. Displaying (pulling) a
/// product earns its expected sales `m/(0.1+j)` at unit profit and reveals
/// one period's demand. States are `(m, j)`: `m ≤ m_cap` is the posterior
/// shape, `j ≤ T` the number of displays.
pub fn assortment(horizon: usize, alpha: f64, m_cap: usize, x_cap: usize) -> ArmModel {
    assert!(
        horizon >= 1 && m_cap >= 1 && x_cap >= 1,
        "horizon and caps must be at least 1"
    );
    let n_states = m_cap * (horizon + 1);
    let mut states = Vec::with_capacity(n_states);
    let mut beliefs = Vec::with_capacity(n_states);
    let mut pull_reward = Vec::with_capacity(n_states);
    for m in 1..=m_cap {
        for j in 0..=horizon {
            let rate = ASSORT_PRIOR_RATE + j as f64;
            states.push(format!("({m},{j})"));
            beliefs.push(Posterior::Gamma {
                shape: m as f64,
                rate,
            });
            pull_reward.push(m as f64 / rate);
        }
    }
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n_states);
    for m in 1..=m_cap {
        for j in 0..=horizon {
            if j == horizon {
                rows.push(vec![(assort_index(horizon, m, j), 1.0)]);
                continue;
            }
            let pred = assort_predictive(m, ASSORT_PRIOR_RATE + j as f64, x_cap);
            let mut row: Vec<(usize, f64)> = Vec::with_capacity(pred.len());
            for (x, &p) in pred.iter().enumerate() {
                let to = assort_index(horizon, (m + x).min(m_cap), j + 1);
                match row.last_mut() {
                    Some(last) if last.0 == to => last.1 += p,
                    _ => row.push((to, p)),
                }
            }
            // lumping at the cap can overshoot 1 by rounding
            for e in &mut row {
                e.1 = e.1.min(1.0);
            }
            rows.push(row);
        }
    }
    let mut kb = KernelBuilder::new(horizon, n_states);
    for t in 0..horizon {
        for (s, row) in rows.iter().enumerate() {
            kb.set_deterministic(t, s, 0, s);
            kb.set_row(t, s, 1, row.iter().copied());
        }
    }
    let rewards = vec![pull_reward.iter().map(|&r| [0.0, r]).collect::<Vec<_>>(); horizon];
    ArmModel::from_parts(
        horizon,
        states,
        assort_index(horizon, 1, 0),
        kb.build(),
        rewards,
        vec![alpha; horizon],
    )
    .and_then(|m| m.with_beliefs(beliefs))
    .expect("generator shape")
}

/// A random valid model with `n_states` states and `horizon` periods:
/// sparse random kernels, rewards uniform on `[0, 1)`, budget ratios drawn
/// from `{0.1, 0.2, …, 0.9}` and random integer Beta beliefs.
pub fn random_instance<R: Rng + ?Sized>(rng: &mut R, n_states: usize, horizon: usize) -> ArmModel {
    let mut kb = KernelBuilder::new(horizon, n_states);
    for t in 0..horizon {
        for s in 0..n_states {
            for a in 0..2 {
                let support = rng.random_range(1..=n_states.min(3));
                let mut weights: Vec<(usize, f64)> = Vec::with_capacity(support);
                while weights.len() < support {
                    let to = rng.random_range(0..n_states);
                    if weights.iter().all(|w| w.0 != to) {
                        weights.push((to, rng.random_range(0.05..1.0)));
                    }
                }
                let total: f64 = weights.iter().map(|w| w.1).sum();
                for w in &mut weights {
                    w.1 /= total;
                }
                kb.set_row(t, s, a, weights);
            }
        }
    }
    let rewards = (0..horizon)
        .map(|_| {
            (0..n_states)
                .map(|_| [rng.random::<f64>(), rng.random::<f64>()])
                .collect()
        })
        .collect();
    let alpha = (0..horizon)
        .map(|_| rng.random_range(1..=9) as f64 / 10.0)
        .collect();
    let beliefs = (0..n_states)
        .map(|_| Posterior::Beta {
            a: rng.random_range(1..=6) as f64,
            b: rng.random_range(1..=6) as f64,
        })
        .collect();
    ArmModel::from_parts(
        horizon,
        (0..n_states).map(|s| format!("s{s}")).collect(),
        0,
        kb.build(),
        rewards,
        alpha,
    )
    .and_then(|m| m.with_beliefs(beliefs))
    .expect("random instance shape")
}
