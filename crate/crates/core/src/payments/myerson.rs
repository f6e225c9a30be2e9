//! Myerson payments for continuous markets.
//!
//! `P_j = c_hat_j f_j(W*(c_hat)) + int_{c_hat_j}^inf f_j(W*(u, c_hat_-j)) du`.
//!
//! The integrand is non-increasing in `u` but its decay rate is unknown, so
//! the half-line is cut into pieces of doubling length. Integration stops
//! once the integrand is exactly zero, falls below `tail_cutoff`, or the
//! upper limit reaches `max_upper_limit`. Past a cutoff stop, the remaining
//! tail is extrapolated as a power law fitted to the last pieces and its
//! uncertainty is added to the error estimate. A stop at the cap before the
//! integrand has decayed sets the `truncated` flag.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{assemble, Outcome, SellerPayment};
use crate::error::{MarketError, Result};
use crate::model::{CostVector, Domain, Market, PaymentResult, PaymentRule};
use crate::quadrature::{integrate, Quadrature};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegratorSettings {
    pub relative_tolerance: f64,
    /// Stop extending the range once the integrand drops below this.
    pub tail_cutoff: f64,
    /// Hard cap on the integration variable; `None` means `1e6` times the
    /// largest finite reported cost.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_upper_limit: Option<f64>,
    /// Bisection budget per piece.
    pub max_subdivisions: usize,
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        IntegratorSettings {
            relative_tolerance: 1e-6,
            tail_cutoff: 1e-9,
            max_upper_limit: None,
            max_subdivisions: 100,
        }
    }
}

impl IntegratorSettings {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.relative_tolerance > 0.0 && self.relative_tolerance < 1.0) {
            problems.push("relative_tolerance must lie in (0, 1)".to_string());
        }
        if !(self.tail_cutoff >= 0.0) {
            problems.push("tail_cutoff must be >= 0".to_string());
        }
        if let Some(cap) = self.max_upper_limit {
            if !(cap > 0.0) {
                problems.push("max_upper_limit must be > 0".to_string());
            }
        }
        if self.max_subdivisions == 0 {
            problems.push("max_subdivisions must be >= 1".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(MarketError::Invalid(problems))
        }
    }

    fn cap(&self, costs: &CostVector, from: f64) -> f64 {
        self.max_upper_limit
            .unwrap_or_else(|| 1e6 * costs.max_finite().max(from).max(f64::MIN_POSITIVE))
    }
}

/// Value of `int_from^inf f` with its error estimate.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TailIntegral {
    pub value: f64,
    pub error: f64,
    /// The integrand had not decayed below the cutoff at the cap.
    pub truncated: bool,
    /// Where explicit quadrature stopped.
    pub upper_limit: f64,
}

/// Power-law tail estimate from two samples `(a, fa)`, `(b, fb)` with `b > a > 0`.
fn power_tail(a: f64, fa: f64, b: f64, fb: f64) -> Option<f64> {
    if !(fa > 0.0 && fb > 0.0 && b > a && a > 0.0) {
        return None;
    }
    let p = (fa / fb).ln() / (b / a).ln();
    (p > 1.0).then(|| fb * b / (p - 1.0))
}

/// `int_from^inf f(u) du` for a non-increasing, nonnegative `f`.
///
/// `scale` sets the length of the first piece; `f_from` is `f(from)` if known.
///
/// ```
/// use datamarket::payments::{myerson_integral, IntegratorSettings};
/// // f(u) = 1/(1+u)^2 integrates to 1/(1+from)
/// let t = myerson_integral(|u| Ok((1.0 + u).powi(-2)), 1.0, None, 1.0, 1e6,
///     &IntegratorSettings::default()).unwrap();
/// assert!((t.value - 0.5).abs() < 1e-6);
/// ```
pub fn myerson_integral<F>(
    mut f: F,
    from: f64,
    f_from: Option<f64>,
    scale: f64,
    cap: f64,
    settings: &IntegratorSettings,
) -> Result<TailIntegral>
where
    F: FnMut(f64) -> Result<f64>,
{
    settings.validate()?;
    let f0 = match f_from {
        Some(v) => v,
        None => f(from)?,
    };
    if f0 == 0.0 || from >= cap {
        return Ok(TailIntegral {
            upper_limit: from,
            ..Default::default()
        });
    }
    let scale = scale.max(1e-12);
    // breakpoints: from, from + scale, from + 2 scale, from + 4 scale, ...
    let mut samples: Vec<(f64, f64)> = vec![(from, f0)];
    let mut total = Quadrature::default();
    let mut step = scale;
    loop {
        let (a, _) = *samples.last().expect("nonempty");
        let b = (from + step).min(cap);
        let fb = f(b)?;
        let floor = settings.relative_tolerance * 1e-2 * total.value.abs();
        let piece = integrate(
            &mut f,
            a,
            b,
            settings.relative_tolerance,
            floor,
            settings.max_subdivisions,
        )?;
        total = total + piece;
        samples.push((b, fb));
        if fb == 0.0 {
            return Ok(TailIntegral {
                value: total.value,
                error: total.error,
                truncated: false,
                upper_limit: b,
            });
        }
        let at_cap = b >= cap;
        if fb < settings.tail_cutoff || at_cap {
            let n = samples.len();
            let last = power_tail(samples[n - 2].0, samples[n - 2].1, b, fb);
            let earlier = (n >= 3)
                .then(|| {
                    power_tail(
                        samples[n - 3].0,
                        samples[n - 3].1,
                        samples[n - 2].0,
                        samples[n - 2].1,
                    )
                })
                .flatten()
                .map(|t| {
                    // shift the earlier estimate to start at b
                    let p = (samples[n - 3].1 / samples[n - 2].1).ln()
                        / (samples[n - 2].0 / samples[n - 3].0).ln();
                    t * (b / samples[n - 2].0).powf(1.0 - p)
                });
            let (tail, tail_error, decays) = match (last, earlier) {
                (Some(t), Some(e)) => (t, (t - e).abs(), true),
                (Some(t), None) => (t, t, true),
                (None, _) => (0.0, fb * b, false),
            };
            return Ok(TailIntegral {
                value: total.value + tail,
                error: total.error + tail_error,
                truncated: at_cap && (fb >= settings.tail_cutoff || !decays),
                upper_limit: b,
            });
        }
        step *= 2.0;
    }
}

pub(super) fn myerson_one<M: Market + ?Sized>(
    market: &M,
    costs: &CostVector,
    seller: usize,
    outcome: &Outcome,
    settings: &IntegratorSettings,
) -> Result<SellerPayment> {
    let reported = costs.get(seller);
    let f0 = outcome.sharing[seller];
    if !reported.is_finite() || f0 == 0.0 {
        return Ok(SellerPayment::exact(0.0));
    }
    let cap = settings.cap(costs, reported);
    let scale = costs.max_finite().max(reported);
    let tail = myerson_integral(
        |u| Ok(market.sharing(seller, &market.solve(&costs.with_cost(seller, u))?)),
        reported,
        Some(f0),
        scale,
        cap,
        settings,
    )?;
    if tail.truncated {
        log::warn!(
            "Myerson integrand for seller {seller} has not decayed at the cap {}",
            tail.upper_limit
        );
    }
    Ok(SellerPayment {
        value: reported * f0 + tail.value,
        error: tail.error,
        truncated: tail.truncated,
    })
}

/// Myerson payments in a continuous market; discrete markets use
/// [`myerson_discrete`](super::myerson_discrete).
pub fn myerson_payment<M: Market + ?Sized>(
    market: &M,
    costs: &CostVector,
    settings: &IntegratorSettings,
) -> Result<PaymentResult> {
    if market.domain() == Domain::Discrete {
        return Err(MarketError::UnsupportedDomain {
            operation: "myerson_payment",
            domain: market.domain().to_string(),
        });
    }
    settings.validate()?;
    let outcome = Outcome::solve(market, costs)?;
    let payments = (0..market.players().sellers())
        .into_par_iter()
        .map(|j| myerson_one(market, costs, j, &outcome, settings))
        .collect::<Result<Vec<_>>>()?;
    assemble(
        market,
        PaymentRule::Myerson,
        costs,
        outcome.allocation,
        &payments,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_zero_stops_integration() {
        // f = max(0, 3 - u): integral from 1 is 2
        let t = myerson_integral(
            |u| Ok((3.0 - u).max(0.0)),
            1.0,
            None,
            1.0,
            1e6,
            &IntegratorSettings::default(),
        )
        .unwrap();
        assert!((t.value - 2.0).abs() < 1e-9, "{t:?}");
        assert!(!t.truncated);
    }

    #[test]
    fn inverse_square_tail_is_extrapolated() {
        // K / (1 + u m)^2 integrates to K / (m (1 + from m))
        let (k, m, from) = (2.0, 0.3, 4.0);
        let t = myerson_integral(
            |u| Ok(k / (1.0 + u * m).powi(2)),
            from,
            None,
            from,
            1e12,
            &IntegratorSettings::default(),
        )
        .unwrap();
        let exact = k / (m * (1.0 + from * m));
        assert!(
            (t.value - exact).abs() <= 1e-6 * exact,
            "{} vs {exact}",
            t.value
        );
        assert!((t.value - exact).abs() <= t.error.max(1e-12));
    }

    #[test]
    fn slow_decay_is_flagged() {
        let t = myerson_integral(
            |u| Ok(1.0 / (1.0 + u)),
            0.0,
            None,
            1.0,
            1e3,
            &IntegratorSettings::default(),
        )
        .unwrap();
        assert!(t.truncated);
    }

    #[test]
    fn settings_are_validated() {
        let bad = IntegratorSettings {
            relative_tolerance: 2.0,
            tail_cutoff: -1.0,
            ..Default::default()
        };
        assert!(matches!(bad.validate(), Err(MarketError::Invalid(p)) if p.len() == 2));
    }
}
