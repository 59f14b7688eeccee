//! Per-leaf linear model `n = beta * m + alpha ± epsilon`.

use serde::{Deserialize, Serialize};

use crate::range::ValueRange;
use crate::table::Pair;

/// Least-squares fit of host on target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Fit {
    /// No pairs.
    Empty,
    /// Zero target variance: `beta = 0`, `alpha = mean(n)`.
    Degenerate { alpha: f64 },
    Linear { beta: f64, alpha: f64 },
}

impl Fit {
    pub fn beta(&self) -> f64 {
        match *self {
            Fit::Linear { beta, .. } => beta,
            _ => 0.0,
        }
    }

    pub fn alpha(&self) -> f64 {
        match *self {
            Fit::Linear { alpha, .. } | Fit::Degenerate { alpha } => alpha,
            Fit::Empty => 0.0,
        }
    }
}

/// One-pass ordinary least squares over `pairs`.
///
/// Means and co-moments are accumulated incrementally, which stays accurate
/// when raw sums of squares would lose precision.
pub fn fit_linear_model(pairs: &[Pair]) -> Fit {
    fit_iter(pairs.iter().map(|p| (p.m, p.n)))
}

pub(crate) fn fit_iter(pairs: impl IntoIterator<Item = (f64, f64)>) -> Fit {
    let mut count = 0.0;
    let mut mean_m = 0.0;
    let mut mean_n = 0.0;
    let mut m2 = 0.0;
    let mut cmn = 0.0;
    for (m, n) in pairs {
        count += 1.0;
        let dm = m - mean_m;
        mean_m += dm / count;
        mean_n += (n - mean_n) / count;
        // uses the updated mean_n and the pre-update deviation of m
        cmn += dm * (n - mean_n);
        m2 += dm * (m - mean_m);
    }
    if count == 0.0 {
        Fit::Empty
    } else if m2 == 0.0 {
        Fit::Degenerate { alpha: mean_n }
    } else {
        let beta = cmn / m2;
        Fit::Linear {
            beta,
            alpha: mean_n - beta * mean_m,
        }
    }
}

/// Band half-width giving `error_bound` expected host values per point query
/// for `n` tuples spread uniformly over `range`.
pub fn derive_epsilon(beta: f64, range: &ValueRange, n: usize, error_bound: f64) -> f64 {
    let width = range.width();
    if n == 0 || width.is_nan() || width <= 0.0 || error_bound == 0.0 {
        return 0.0;
    }
    beta.abs() * width * error_bound / (2.0 * n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Empty,
    Degenerate,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeafModel {
    pub kind: ModelKind,
    pub beta: f64,
    pub alpha: f64,
    pub epsilon: f64,
}

impl LeafModel {
    pub const EMPTY: LeafModel = LeafModel {
        kind: ModelKind::Empty,
        beta: 0.0,
        alpha: 0.0,
        epsilon: 0.0,
    };

    /// Fits `pairs`, which all belong to a node covering `range`.
    pub fn fit(pairs: &[Pair], range: &ValueRange, error_bound: f64) -> LeafModel {
        Self::from_fit(fit_linear_model(pairs), pairs, range, error_bound)
    }

    pub(crate) fn from_fit(fit: Fit, pairs: &[Pair], range: &ValueRange, error_bound: f64) -> LeafModel {
        match fit {
            Fit::Empty => LeafModel::EMPTY,
            Fit::Degenerate { alpha } => {
                let (lo, hi) = pairs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                    (lo.min(p.n), hi.max(p.n))
                });
                LeafModel {
                    kind: ModelKind::Degenerate,
                    beta: 0.0,
                    alpha,
                    epsilon: (hi - lo) / 2.0,
                }
            }
            Fit::Linear { beta, alpha } => LeafModel {
                kind: ModelKind::Linear,
                beta,
                alpha,
                epsilon: derive_epsilon(beta, range, pairs.len(), error_bound),
            },
        }
    }

    /// Least-squares fit followed by `steps` refits, each on the
    /// `ceil(keep * n)` pairs closest to the current line. The band width
    /// still reflects all `n` pairs.
    pub fn fit_trimmed(pairs: &[Pair], range: &ValueRange, error_bound: f64, keep: f64, steps: usize) -> LeafModel {
        let mut model = Self::fit(pairs, range, error_bound);
        let k = ((keep * pairs.len() as f64).ceil() as usize).clamp(1, pairs.len().max(1));
        if k >= pairs.len() {
            return model;
        }
        let mut resid = Vec::with_capacity(pairs.len());
        for _ in 0..steps {
            if model.kind != ModelKind::Linear {
                break;
            }
            resid.clear();
            resid.extend(pairs.iter().map(|p| (p.n - model.line(p.m)).abs()));
            let cutoff = *resid.select_nth_unstable_by(k - 1, f64::total_cmp).1;
            let fit = fit_iter(
                pairs
                    .iter()
                    .filter(|p| (p.n - model.line(p.m)).abs() <= cutoff)
                    .map(|p| (p.m, p.n)),
            );
            let next = match fit {
                Fit::Linear { beta, alpha } => LeafModel {
                    kind: ModelKind::Linear,
                    beta,
                    alpha,
                    epsilon: derive_epsilon(beta, range, pairs.len(), error_bound),
                },
                _ => break,
            };
            if next == model {
                break;
            }
            model = next;
        }
        model
    }

    #[inline]
    fn line(&self, m: f64) -> f64 {
        self.beta * m + self.alpha
    }

    /// Whether `(m, n)` falls inside the band.
    #[inline]
    pub fn covers(&self, m: f64, n: f64) -> bool {
        if self.kind == ModelKind::Empty {
            return false;
        }
        let c = self.line(m);
        c - self.epsilon <= n && n <= c + self.epsilon
    }

    /// Host range covering the band over every target value in `r`.
    ///
    /// The endpoints use the same arithmetic as [`LeafModel::covers`], and
    /// IEEE rounding is monotone, so any covered pair with `m` in `r` has its
    /// host value inside the result.
    pub fn host_range(&self, r: &ValueRange) -> Option<ValueRange> {
        let (lo_m, hi_m) = match self.kind {
            ModelKind::Empty => return None,
            _ if self.beta < 0.0 => (r.ub(), r.lb()),
            _ => (r.lb(), r.ub()),
        };
        let lo = self.line(lo_m) - self.epsilon;
        let hi = self.line(hi_m) + self.epsilon;
        ValueRange::new(lo, hi).ok()
    }
}
