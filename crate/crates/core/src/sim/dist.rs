//! Delay distributions.

use rand::Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use super::SimError;

/// z-score of the 95th percentile of a standard normal.
const Z95: f64 = 1.644_853_626_951_472_2;

/// Distribution of a delay in milliseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DelayDistribution {
    Constant {
        ms: f64,
    },
    Uniform {
        lo_ms: f64,
        hi_ms: f64,
    },
    /// Log-normal parameterized by its 95th percentile and shape, with
    /// draws above `cap_ms` rejected.
    LogNormal {
        p95_ms: f64,
        sigma: f64,
        cap_ms: f64,
    },
    /// Piecewise-linear inverse CDF through `(ms, cumulative probability)`
    /// points; probabilities non-decreasing and ending at 1.
    Empirical {
        points: Vec<(f64, f64)>,
    },
}

impl DelayDistribution {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |why: &str| Err(SimError::BadDistribution(why.to_string()));
        match self {
            DelayDistribution::Constant { ms } if !ms.is_finite() => bad("constant delay must be finite"),
            DelayDistribution::Uniform { lo_ms, hi_ms } if !(lo_ms.is_finite() && hi_ms.is_finite()) => {
                bad("uniform bounds must be finite")
            }
            DelayDistribution::Uniform { lo_ms, hi_ms } if lo_ms > hi_ms => bad("uniform lo exceeds hi"),
            DelayDistribution::LogNormal { p95_ms, sigma, cap_ms } => {
                if !(*p95_ms > 0.0 && p95_ms.is_finite()) {
                    bad("log-normal p95 must be positive")
                } else if !(*sigma > 0.0 && sigma.is_finite()) {
                    bad("log-normal sigma must be positive")
                } else if !(*cap_ms > 0.0) {
                    bad("log-normal cap must be positive")
                } else {
                    Ok(())
                }
            }
            DelayDistribution::Empirical { points } => {
                if points.is_empty() {
                    return bad("empirical CDF has no points");
                }
                if points.iter().any(|(x, p)| !x.is_finite() || !(0.0..=1.0).contains(p)) {
                    return bad("empirical CDF point out of range");
                }
                if points.windows(2).any(|w| w[1].0 < w[0].0 || w[1].1 < w[0].1) {
                    return bad("empirical CDF must be non-decreasing");
                }
                if (points.last().unwrap().1 - 1.0).abs() > 1e-9 {
                    return bad("empirical CDF must end at 1");
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            DelayDistribution::Constant { ms } => *ms,
            DelayDistribution::Uniform { lo_ms, hi_ms } => {
                if lo_ms == hi_ms {
                    *lo_ms
                } else {
                    rng.gen_range(*lo_ms..*hi_ms)
                }
            }
            DelayDistribution::LogNormal { p95_ms, sigma, cap_ms } => {
                let mu = p95_ms.ln() - Z95 * sigma;
                let d = LogNormal::new(mu, *sigma).expect("validated parameters");
                // rejection keeps the shape below the cap; give up after a
                // bounded number of tries so a tiny cap cannot spin forever
                for _ in 0..1000 {
                    let x = d.sample(rng);
                    if x <= *cap_ms {
                        return x;
                    }
                }
                *cap_ms
            }
            DelayDistribution::Empirical { points } => {
                let u: f64 = rng.gen();
                inverse_cdf(points, u)
            }
        }
    }

    /// Largest value the distribution can produce.
    pub fn upper_bound(&self) -> f64 {
        match self {
            DelayDistribution::Constant { ms } => *ms,
            DelayDistribution::Uniform { hi_ms, .. } => *hi_ms,
            DelayDistribution::LogNormal { cap_ms, .. } => *cap_ms,
            DelayDistribution::Empirical { points } => points.last().map_or(0.0, |p| p.0),
        }
    }
}

fn inverse_cdf(points: &[(f64, f64)], u: f64) -> f64 {
    let (x0, p0) = points[0];
    if u <= p0 {
        return x0;
    }
    for w in points.windows(2) {
        let ((xa, pa), (xb, pb)) = (w[0], w[1]);
        if u <= pb {
            if pb == pa {
                return xb;
            }
            return xa + (xb - xa) * (u - pa) / (pb - pa);
        }
    }
    points.last().unwrap().0
}

/// Empirical quantile by the nearest-rank method.
pub fn quantile(samples: &[f64], q: f64) -> f64 {
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return f64::NAN;
    }
    let rank = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[rank - 1]
}
