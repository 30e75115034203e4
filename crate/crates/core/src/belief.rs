//! Per-state posterior annotations for belief-state baselines (UCB, TS).

use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma, Open01};

use crate::math;

/// Posterior over an arm's unknown parameter given the arm's state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Posterior {
    /// `Beta(a, b)` on a success probability.
    Beta { a: f64, b: f64 },
    /// `Gamma(shape, rate)` on a Poisson intensity.
    Gamma { shape: f64, rate: f64 },
}

impl Posterior {
    pub fn mean(&self) -> f64 {
        match *self {
            Posterior::Beta { a, b } => a / (a + b),
            Posterior::Gamma { shape, rate } => shape / rate,
        }
    }

    pub fn sd(&self) -> f64 {
        match *self {
            Posterior::Beta { a, b } => {
                let s = a + b;
                math::sqrt(a * b / (s * s * (s + 1.0)))
            }
            Posterior::Gamma { shape, rate } => math::sqrt(shape) / rate,
        }
    }

    /// Integer-valued Beta parameters, when both are small positive integers.
    fn integer_beta(&self) -> Option<(u32, u32)> {
        match *self {
            Posterior::Beta { a, b } if is_small_int(a) && is_small_int(b) => {
                Some((a as u32, b as u32))
            }
            _ => None,
        }
    }

    /// Draws one value of the parameter.
    ///
    /// Integer Beta shapes go through `G_a / (G_a + G_b)` with Erlang
    /// variables built from products of uniforms, which is exact and much
    /// cheaper than the general Beta sampler for the small shapes that
    /// Bayesian bandit states produce.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if let Some((a, b)) = self.integer_beta() {
            let ga = erlang(rng, a);
            let gb = erlang(rng, b);
            return ga / (ga + gb);
        }
        match *self {
            Posterior::Beta { a, b } => Beta::new(a, b).expect("valid beta").sample(rng),
            Posterior::Gamma { shape, rate } => Gamma::new(shape, 1.0 / rate)
                .expect("valid gamma")
                .sample(rng),
        }
    }

    /// Closed-form CDF, available for integer Beta shapes.
    pub fn cdf(&self, x: f64) -> Option<f64> {
        let (a, b) = self.integer_beta()?;
        Some(beta_cdf_int(a, b, x))
    }

    /// `(F(x), 1 − F(x))` for integer Beta shapes.
    pub fn tails(&self, x: f64) -> Option<(f64, f64)> {
        let (a, b) = self.integer_beta()?;
        Some(beta_tails_int(a, b, x))
    }

    pub fn has_closed_form_cdf(&self) -> bool {
        self.integer_beta().is_some()
    }
}

fn is_small_int(v: f64) -> bool {
    (1.0..=64.0).contains(&v) && math::floor(v) == v
}

fn erlang<R: Rng + ?Sized>(rng: &mut R, k: u32) -> f64 {
    let mut prod = 1.0;
    let mut acc = 0.0;
    for _ in 0..k {
        let u: f64 = Open01.sample(rng);
        prod *= u;
        // keep the running product away from underflow
        if prod < 1e-280 {
            acc -= math::ln(prod);
            prod = 1.0;
        }
    }
    acc - math::ln(prod)
}

/// `I_x(a, b) = P(Binomial(a+b−1, x) ≥ a)` for integer shapes.
pub fn beta_cdf_int(a: u32, b: u32, x: f64) -> f64 {
    beta_tails_int(a, b, x).0
}

/// `(I_x(a, b), 1 − I_x(a, b))`, each computed without cancellation.
///
/// The binomial terms are generated by ratio recurrences starting from the
/// end whose first term cannot underflow, so the cost is `O(a + b)`
/// multiplications.
pub fn beta_tails_int(a: u32, b: u32, x: f64) -> (f64, f64) {
    if x <= 0.0 {
        return (0.0, 1.0);
    }
    if x >= 1.0 {
        return (1.0, 0.0);
    }
    let n = a + b - 1;
    let q = 1.0 - x;
    let mut lower = 0.0; // P(Bin < a)
    let mut upper = 0.0; // P(Bin ≥ a)
    if x <= 0.5 {
        let ratio = x / q;
        let mut term = math::powi(q, n as i32);
        for j in 0..=n {
            if j >= a {
                upper += term
            } else {
                lower += term
            }
            term *= (n - j) as f64 / (j + 1) as f64 * ratio;
        }
    } else {
        let ratio = q / x;
        let mut term = math::powi(x, n as i32);
        for j in (0..=n).rev() {
            if j >= a {
                upper += term
            } else {
                lower += term
            }
            if j > 0 {
                term *= j as f64 / (n - j + 1) as f64 * ratio;
            }
        }
    }
    let total = lower + upper;
    (upper / total, lower / total)
}
