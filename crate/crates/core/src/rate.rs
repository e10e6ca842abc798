//! Rate functions `G`, the derived `F(x) = x G(x)²`, and their monotone
//! inverses.
//!
//! A [`RateFunction`] is a strictly monotone positive function on a domain
//! `(lower, upper]` (closed at `lower` when `lower > 0`). Monotonicity is
//! sample-checked at construction; inverses are computed by bracketed
//! bisection in log space and never by closed form.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{log_space, Real};

/// Number of log-spaced samples used to verify monotonicity.
pub const MONOTONE_SAMPLES: usize = 256;

/// Serializable description of how a rate function was built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", bound = "T: Real")]
pub enum RateSpec<T> {
    /// `x^p` on `(0, r0]`.
    Power { p: T, r0: T },
    /// `exp(-x^{-p}) / √x` on `(0, r0]`.
    Exp { p: T, r0: T },
    /// `x · G(x)²`.
    Squared { base: Box<RateSpec<T>> },
    /// `C h^{2r+1} F(h)^{4(r+1)}` with `F` built from `base`.
    Nonlinear { constant: T, r: T, base: Box<RateSpec<T>> },
    /// Piecewise-linear interpolation of `(x, G(x))` samples.
    Tabulated { xs: Vec<T>, ys: Vec<T> },
    Custom { label: String },
}

type Eval<T> = Arc<dyn Fn(T) -> T + Send + Sync>;

#[derive(Clone)]
pub struct RateFunction<T> {
    eval: Eval<T>,
    lower: T,
    upper: T,
    increasing: bool,
    spec: RateSpec<T>,
}

impl<T: Real> fmt::Debug for RateFunction<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RateFunction")
            .field("spec", &self.spec)
            .field("lower", &self.lower)
            .field("upper", &self.upper)
            .field("increasing", &self.increasing)
            .finish()
    }
}

impl<T: Real> RateFunction<T> {
    /// `G(x) = x^p` on `(0, r0]`, `p ∉ [-1/2, 0]`.
    pub fn power(p: T, r0: T) -> Result<Self> {
        if !p.is_finite() || (p >= T::lit(-0.5) && p <= T::zero()) {
            return Err(Error::invalid(format!(
                "power rate requires p outside [-1/2, 0], got p = {p}"
            )));
        }
        check_ceiling(r0)?;
        Self::build(
            Arc::new(move |x: T| x.powf(p)),
            T::zero(),
            r0,
            RateSpec::Power { p, r0 },
        )
    }

    /// `G(x) = exp(-x^{-p}) / √x` on `(0, r0]`, `p > 0`.
    pub fn exp(p: T, r0: T) -> Result<Self> {
        if !(p > T::zero()) || !p.is_finite() {
            return Err(Error::invalid(format!(
                "exponential rate requires p > 0, got p = {p}"
            )));
        }
        check_ceiling(r0)?;
        Self::build(
            Arc::new(move |x: T| (-(x.powf(-p))).exp() / x.sqrt()),
            T::zero(),
            r0,
            RateSpec::Exp { p, r0 },
        )
    }

    /// Piecewise-linear rate through `(xs[i], ys[i])`, defined on
    /// `[xs[0], xs[last]]`.
    pub fn tabulated(xs: Vec<T>, ys: Vec<T>) -> Result<Self> {
        if xs.len() != ys.len() || xs.len() < 2 {
            return Err(Error::invalid("tabulated rate needs at least two (x, G(x)) pairs"));
        }
        if xs[0] <= T::zero() || xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("tabulated x values must be positive and strictly increasing"));
        }
        if ys.iter().any(|&y| !(y > T::zero()) || !y.is_finite()) {
            return Err(Error::invalid("tabulated G values must be finite and positive"));
        }
        let inc = ys.windows(2).all(|w| w[1] > w[0]);
        let dec = ys.windows(2).all(|w| w[1] < w[0]);
        if !inc && !dec {
            return Err(Error::invalid("tabulated G values must be strictly monotone"));
        }
        let (lo, hi) = (xs[0], xs[xs.len() - 1]);
        let (tx, ty) = (xs.clone(), ys.clone());
        let eval = Arc::new(move |x: T| interpolate(&tx, &ty, x));
        Self::build(eval, lo, hi, RateSpec::Tabulated { xs, ys })
    }

    /// Arbitrary strictly monotone positive function on `(lower, upper]`.
    pub fn custom(
        label: impl Into<String>,
        f: impl Fn(T) -> T + Send + Sync + 'static,
        lower: T,
        upper: T,
    ) -> Result<Self> {
        if !(lower >= T::zero() && upper > lower) {
            return Err(Error::invalid("custom rate domain must satisfy 0 <= lower < upper"));
        }
        Self::build(Arc::new(f), lower, upper, RateSpec::Custom { label: label.into() })
    }

    fn build(eval: Eval<T>, lower: T, upper: T, spec: RateSpec<T>) -> Result<Self> {
        let increasing = verify_monotone(&*eval, lower, upper)?;
        Ok(Self {
            eval,
            lower,
            upper,
            increasing,
            spec,
        })
    }

    /// `F(x) = x G(x)²` on the same domain.
    pub fn make_f(&self) -> Result<Self> {
        let g = self.eval.clone();
        Self::build(
            Arc::new(move |x: T| squared_rate(x, g(x))),
            self.lower,
            self.upper,
            RateSpec::Squared {
                base: Box::new(self.spec.clone()),
            },
        )
    }

    /// The rate `h ↦ C h^{2r+1} F(h)^{4(r+1)}` driving the nonlinear decay
    /// estimate, with `F` derived from `self`.
    pub fn nonlinear_rate(&self, constant: T, r: T) -> Result<Self> {
        check_nonlinear_params(constant, r)?;
        let g = self.eval.clone();
        Self::build(
            Arc::new(move |h: T| nonlinear_rate_value(h, constant, r, g(h))),
            self.lower,
            self.upper,
            RateSpec::Nonlinear {
                constant,
                r,
                base: Box::new(self.spec.clone()),
            },
        )
    }

    pub fn spec(&self) -> &RateSpec<T> {
        &self.spec
    }

    pub fn is_increasing(&self) -> bool {
        self.increasing
    }

    /// Domain `(lower, upper]`.
    pub fn domain(&self) -> (T, T) {
        (self.lower, self.upper)
    }

    pub fn contains(&self, x: T) -> bool {
        let above = if self.lower > T::zero() {
            x >= self.lower
        } else {
            x > T::zero()
        };
        above && x <= self.upper
    }

    pub fn eval(&self, x: T) -> Result<T> {
        if !self.contains(x) {
            return Err(Error::range(x.as_f64(), self.lower.as_f64(), self.upper.as_f64())
                .with_context("rate function argument"));
        }
        Ok((self.eval)(x))
    }

    /// Value at the top of the domain.
    pub fn ceiling_value(&self) -> T {
        (self.eval)(self.upper)
    }

    /// Solves `f(x) = y` by bracketed bisection.
    ///
    /// The bracket starts at the domain ceiling and is halved toward the
    /// lower edge until it encloses `y`; bisection then proceeds on
    /// `ln x` until the bracket is a few ulps wide.
    pub fn inverse(&self, y: T) -> Result<T> {
        let f = &self.eval;
        let hi_val = f(self.upper);
        let out_of_range = |lo_val: T| {
            let (a, b) = if self.increasing {
                (lo_val, hi_val)
            } else {
                (hi_val, lo_val)
            };
            Error::range(y.as_f64(), a.as_f64(), b.as_f64()).with_context("rate function inverse")
        };
        if !y.is_finite() || !(y > T::zero()) {
            return Err(out_of_range(T::nan()));
        }
        // True when x lies on the upper side of the root.
        let above = |v: T| if self.increasing { v >= y } else { v <= y };
        if !above(hi_val) {
            return Err(out_of_range(f(self.lower.max(T::min_positive_value()))));
        }
        if hi_val == y {
            return Ok(self.upper);
        }
        let mut hi = self.upper;
        let mut lo = self.upper;
        let floor = if self.lower > T::zero() {
            self.lower
        } else {
            T::min_positive_value()
        };
        loop {
            let next = (lo * T::lit(0.5)).max(floor);
            let v = f(next);
            if v == y {
                return Ok(next);
            }
            if !above(v) {
                lo = next;
                break;
            }
            hi = next;
            if next <= floor {
                return Err(out_of_range(v));
            }
            lo = next;
        }
        let two = T::lit(2.0);
        for _ in 0..400 {
            if hi - lo <= T::epsilon() * two * hi {
                break;
            }
            let mid = ((lo.ln() + hi.ln()) / two).exp();
            let mid = if mid > lo && mid < hi { mid } else { (lo + hi) / two };
            if mid <= lo || mid >= hi {
                break;
            }
            let v = f(mid);
            if v == y {
                return Ok(mid);
            }
            if above(v) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let (flo, fhi) = (f(lo), f(hi));
        Ok(if (flo - y).abs() <= (fhi - y).abs() { lo } else { hi })
    }
}

fn check_ceiling<T: Real>(r0: T) -> Result<()> {
    if !(r0 > T::zero()) || !r0.is_finite() {
        return Err(Error::invalid(format!("domain ceiling r0 must be positive, got {r0}")));
    }
    Ok(())
}

fn check_nonlinear_params<T: Real>(constant: T, r: T) -> Result<()> {
    if !(constant > T::zero()) {
        return Err(Error::invalid("nonlinear rate constant must be positive"));
    }
    if !(r >= T::one()) {
        return Err(Error::invalid("nonlinear rate exponent r must be at least 1"));
    }
    Ok(())
}

/// `x · g²`, the pointwise rule defining `F` from `G`.
#[inline]
pub fn squared_rate<T: Real>(x: T, g: T) -> T {
    x * g * g
}

#[inline]
fn nonlinear_rate_value<T: Real>(h: T, constant: T, r: T, g: T) -> T {
    let one = T::one();
    constant * h.powf(T::lit(2.0) * r + one) * squared_rate(h, g).powf(T::lit(4.0) * (r + one))
}

/// `C h^{2r+1} F(h)^{4(r+1)}` with `F` derived from `base`.
pub fn nonlinear_g<T: Real>(h: T, constant: T, r: T, base: &RateFunction<T>) -> Result<T> {
    check_nonlinear_params(constant, r)?;
    if !(h > T::zero()) {
        return Err(Error::invalid("h must be positive"));
    }
    Ok(nonlinear_rate_value(h, constant, r, base.eval(h)?))
}

fn interpolate<T: Real>(xs: &[T], ys: &[T], x: T) -> T {
    let i = match xs.binary_search_by(|p| p.partial_cmp(&x).unwrap()) {
        Ok(i) => return ys[i],
        Err(i) => i,
    };
    if i == 0 {
        return ys[0];
    }
    if i >= xs.len() {
        return ys[xs.len() - 1];
    }
    let theta = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
    ys[i - 1] + theta * (ys[i] - ys[i - 1])
}

/// Returns `true` for increasing, `false` for decreasing.
///
/// Samples whose value underflows to zero or overflows are tolerated only
/// at the lower end of the domain, where e.g. `exp(-1/x)` is not
/// representable.
fn verify_monotone<T: Real>(f: &dyn Fn(T) -> T, lower: T, upper: T) -> Result<bool> {
    let start = if lower > T::zero() {
        lower
    } else {
        upper * T::lit(1e-12)
    };
    let xs = log_space(start, upper, MONOTONE_SAMPLES);
    let vals: Vec<T> = xs.iter().map(|&x| f(x)).collect();
    for (&x, &v) in xs.iter().zip(&vals) {
        if v.is_nan() || v < T::zero() {
            return Err(Error::invalid(format!("rate function is negative or undefined at x = {x}")));
        }
    }
    let representable: Vec<(T, T)> = xs
        .iter()
        .zip(&vals)
        .filter(|(_, &v)| v > T::zero() && v.is_finite())
        .map(|(&x, &v)| (x, v))
        .collect();
    if representable.len() < 2 {
        return Err(Error::invalid("rate function is not representable on its domain"));
    }
    let first = xs
        .iter()
        .zip(&vals)
        .position(|(_, &v)| v > T::zero() && v.is_finite())
        .unwrap_or(0);
    if vals[first..].iter().any(|&v| !(v > T::zero()) || !v.is_finite()) {
        return Err(Error::invalid("rate function vanishes or overflows inside its domain"));
    }
    let increasing = representable[1].1 > representable[0].1;
    for w in representable.windows(2) {
        let ok = if increasing {
            w[1].1 > w[0].1
        } else {
            w[1].1 < w[0].1
        };
        if !ok {
            return Err(Error::invalid(format!(
                "rate function is not strictly monotone near x = {}",
                w[1].0
            )));
        }
    }
    Ok(increasing)
}

/// Outcome of a pointwise structural check on a sample grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct GridCheck<T> {
    pub holds: bool,
    /// Grid points where the check was evaluated.
    pub checked: usize,
    /// Grid points outside the region where the inverses are defined.
    pub skipped: usize,
    /// Most negative slack seen (zero when every slack is nonnegative).
    pub worst_slack: T,
}

/// Checks that `x ↦ x F^{-1}(1/x)` is nondecreasing along `grid`, with
/// `F = x G(x)²`. Points where `1/x` lies outside the range of `F` are
/// skipped; fewer than two evaluated points pass vacuously.
pub fn check_xfinv_increasing<T: Real>(g: &RateFunction<T>, grid: &[T]) -> Result<GridCheck<T>> {
    let f = g.make_f()?;
    let mut values = Vec::new();
    let mut skipped = 0;
    for &x in grid {
        if !(x > T::zero()) {
            skipped += 1;
            continue;
        }
        match f.inverse(T::one() / x) {
            Ok(v) => values.push(x * v),
            Err(Error::OutOfRange { .. }) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    let slack = T::tol(1e-12);
    let mut worst = T::zero();
    for w in values.windows(2) {
        let s = (w[1] - w[0]) / w[0].abs().max(T::min_positive_value());
        worst = worst.min(s);
    }
    Ok(GridCheck {
        holds: worst >= -slack,
        checked: values.len(),
        skipped,
        worst_slack: worst,
    })
}

/// Checks `G^{-1}(x) ≥ c/(c+1) · G^{-1}(x(c0+1))` on `grid`.
pub fn check_g_dilation_condition<T: Real>(
    g: &RateFunction<T>,
    c0: T,
    c: T,
    grid: &[T],
) -> Result<GridCheck<T>> {
    if !(c0 >= T::zero()) || !(c > T::zero()) {
        return Err(Error::invalid("dilation check needs c0 >= 0 and c > 0"));
    }
    let factor = c / (c + T::one());
    let mut checked = 0;
    let mut skipped = 0;
    let mut worst = T::zero();
    for &x in grid {
        let pair = g.inverse(x).and_then(|a| Ok((a, g.inverse(x * (c0 + T::one()))?)));
        match pair {
            Ok((a, b)) => {
                checked += 1;
                let s = (a - factor * b) / a.abs().max(T::min_positive_value());
                worst = worst.min(s);
            }
            Err(Error::OutOfRange { .. }) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(GridCheck {
        holds: worst >= -T::tol(1e-12),
        checked,
        skipped,
        worst_slack: worst,
    })
}

/// Checks `G^{-1}(x) ≤ F^{-1}(x)` on `grid` (meant to approach zero).
/// Points outside either inverse's range are skipped.
pub fn check_ginv_below_finv<T: Real>(g: &RateFunction<T>, grid: &[T]) -> Result<GridCheck<T>> {
    let f = g.make_f()?;
    let mut checked = 0;
    let mut skipped = 0;
    let mut worst = T::zero();
    for &x in grid {
        match g.inverse(x).and_then(|a| Ok((a, f.inverse(x)?))) {
            Ok((gi, fi)) => {
                checked += 1;
                worst = worst.min((fi - gi) / fi.abs().max(T::min_positive_value()));
            }
            Err(Error::OutOfRange { .. }) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(GridCheck {
        holds: worst >= -T::tol(1e-12),
        checked,
        skipped,
        worst_slack: worst,
    })
}

/// The two candidate exponents of the power-law nonlinear rate for a
/// power base `G = x^p` and damping exponent `r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct RateExponents<T> {
    /// `(4p+3)(2r+1) - 1`, as quoted for the power example.
    pub quoted: T,
    /// `(2r+1) + 4(r+1)(2p+1)`, from composing `C h^{2r+1} F(h)^{4(r+1)}`
    /// with `F = x^{2p+1}`.
    pub composed: T,
}

pub fn rate_exponents<T: Real>(p: T, r: T) -> RateExponents<T> {
    let (one, two, three, four) = (T::one(), T::lit(2.0), T::lit(3.0), T::lit(4.0));
    RateExponents {
        quoted: (four * p + three) * (two * r + one) - one,
        composed: (two * r + one) + four * (r + one) * (two * p + one),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    type RateFunction = super::RateFunction<f64>;

    #[test]
    fn power_preset_values_and_band() {
        let g = RateFunction::power(3.0, 4.0).unwrap();
        assert_eq!(g.eval(2.0).unwrap(), 8.0);
        for p in [-0.5, -0.25, 0.0] {
            assert!(matches!(RateFunction::power(p, 1.0), Err(Error::InvalidArgument(_))));
        }
        let dec = RateFunction::power(-1.0, 1.0).unwrap();
        assert!(!dec.is_increasing());
        assert!(RateFunction::power(1.0, 0.0).is_err());
    }

    #[test]
    fn make_f_of_power() {
        let f = RateFunction::power(1.0, 4.0).unwrap().make_f().unwrap();
        assert_eq!(f.eval(2.0).unwrap(), 8.0);
        assert!(f.is_increasing());
    }

    #[test]
    fn squared_rate_of_constant_is_identity() {
        for x in [0.1, 1.0, 7.5] {
            assert_eq!(squared_rate(x, 1.0), x);
        }
    }

    #[test]
    fn exp_preset_values() {
        let g = RateFunction::exp(1.0, 1.0).unwrap();
        assert!((g.eval(1.0).unwrap() - (-1.0f64).exp()).abs() < 1e-16);
        assert!(g.eval(1e-3).unwrap() < 1e-300);
        let f = g.make_f().unwrap();
        // x G(x)² at 1/2: the 1/√x factor squared cancels the leading x.
        assert!((f.eval(0.5).unwrap() - (-4.0f64).exp()).abs() < 1e-17);
        assert!(matches!(RateFunction::exp(0.0, 1.0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn evaluation_outside_domain_is_range_error() {
        let g = RateFunction::power(2.0, 1.0).unwrap();
        assert!(matches!(g.eval(1.5), Err(Error::OutOfRange { .. })));
        assert!(matches!(g.eval(0.0), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn inverse_cases() {
        let f = RateFunction::power(3.0, 4.0).unwrap();
        assert!((f.inverse(8.0).unwrap() - 2.0).abs() < 1e-15);
        let e = RateFunction::exp(1.0, 1.0).unwrap();
        let y = e.eval(0.25).unwrap();
        assert!((e.inverse(y).unwrap() - 0.25).abs() < 1e-10 * 0.25);
        let y = e.eval(0.5).unwrap();
        assert!((e.inverse(y).unwrap() - 0.5).abs() < 1e-10);
        match f.inverse(100.0) {
            Err(Error::OutOfRange { hi, .. }) => assert_eq!(hi, 64.0),
            other => panic!("expected range error, got {other:?}"),
        }
        assert!(f.inverse(-1.0).is_err());
    }

    #[test]
    fn inverse_of_decreasing_power() {
        let g = RateFunction::power(-1.0, 2.0).unwrap();
        assert!((g.inverse(4.0).unwrap() - 0.25).abs() < 1e-15);
        assert!(g.inverse(0.1).is_err());
    }

    #[test]
    fn tabulated_rate() {
        let g = RateFunction::tabulated(vec![0.1, 0.5, 1.0], vec![0.01, 0.3, 1.0]).unwrap();
        assert!((g.eval(0.75).unwrap() - 0.65).abs() < 1e-15);
        assert!((g.inverse(0.65).unwrap() - 0.75).abs() < 1e-14);
        assert!(g.eval(0.05).is_err());
        assert!(RateFunction::tabulated(vec![0.1, 0.5, 1.0], vec![0.01, 0.3, 0.2]).is_err());
        assert!(RateFunction::tabulated(vec![0.5, 0.1], vec![0.01, 0.3]).is_err());
    }

    #[test]
    fn custom_rate_rejects_non_monotone() {
        assert!(RateFunction::custom("bump", |x: f64| (x - 0.5).abs() + 0.1, 0.0, 1.0).is_err());
        assert!(RateFunction::custom("neg", |x: f64| x - 0.5, 0.0, 1.0).is_err());
    }

    #[test]
    fn xfinv_monotonicity() {
        let g = RateFunction::power(1.0, 1.0).unwrap();
        let grid = log_space(1.0, 1e3, 64);
        let c = check_xfinv_increasing(&g, &grid).unwrap();
        assert!(c.holds);
        assert_eq!(c.checked, 64);
        let single = check_xfinv_increasing(&g, &[2.0]).unwrap();
        assert!(single.holds && single.checked == 1);
    }

    #[test]
    fn nonlinear_g_exponent_arithmetic() {
        let base = RateFunction::power(1.0, 4.0).unwrap();
        for h in [0.3, 1.0, 1.7] {
            let v = nonlinear_g(h, 1.0, 1.0, &base).unwrap();
            let expect = f64::powi(h, 27);
            assert!((v - expect).abs() <= 1e-13 * expect);
        }
        assert_eq!(nonlinear_g(1.0, 2.5, 1.0, &base).unwrap(), 2.5);
    }

    #[test]
    fn exponents_for_unit_parameters() {
        let e = rate_exponents(1.0, 1.0);
        assert_eq!(e.quoted, 20.0);
        assert_eq!(e.composed, 27.0);
    }

    #[test]
    fn dilation_condition_trivial_when_c0_zero() {
        let g = RateFunction::power(2.0, 1.0).unwrap();
        let grid = log_space(1e-4, 0.5, 32);
        let c = check_g_dilation_condition(&g, 0.0, 0.3, &grid).unwrap();
        assert!(c.holds);
    }
}
