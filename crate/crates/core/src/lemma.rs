//! Sampled decreasing functions `H` and the recursion
//! `H(s) ≤ c/G(H(s))² · (H(s) - H(s + 1/G(H(s))))`, whose satisfaction
//! forces `H(t) ≤ C F^{-1}(1/√t)` when `x F^{-1}(1/x)` is nondecreasing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rate::{check_xfinv_increasing, GridCheck, RateFunction};
use crate::scalar::{log_space, Real};

/// Decreasing function sampled on increasing positive times, interpolated
/// linearly in `ln t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SampledH<T> {
    times: Vec<T>,
    values: Vec<T>,
}

impl<T: Real> SampledH<T> {
    /// Requires positive strictly increasing times and nonincreasing
    /// values in `(0, 1]`.
    pub fn new(times: Vec<T>, values: Vec<T>) -> Result<Self> {
        if times.len() != values.len() || times.is_empty() {
            return Err(Error::invalid("H needs matching, nonempty time and value columns"));
        }
        if !(times[0] > T::zero()) || times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("H times must be positive and strictly increasing"));
        }
        if let Some(v) = values.iter().find(|&&v| !(v > T::zero() && v <= T::one())) {
            return Err(Error::invalid(format!("H values must lie in (0, 1], found {v}")));
        }
        if values.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::invalid("H values must be nonincreasing"));
        }
        Ok(Self { times, values })
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn t_max(&self) -> T {
        self.times[self.times.len() - 1]
    }

    /// Value at `t` and whether it was interpolated; `None` outside the
    /// sampled range.
    pub fn eval(&self, t: T) -> Option<(T, bool)> {
        let i = match self.times.binary_search_by(|p| p.partial_cmp(&t).unwrap()) {
            Ok(i) => return Some((self.values[i], false)),
            Err(i) => i,
        };
        if i == 0 || i >= self.times.len() {
            return None;
        }
        Some((log_interp(self.times[i - 1], self.times[i], self.values[i - 1], self.values[i], t), true))
    }

    /// `c · H` with values clipped back to `(0, 1]` only by validation.
    pub fn scaled(&self, c: T) -> Result<Self> {
        Self::new(self.times.clone(), self.values.iter().map(|&v| v * c).collect())
    }
}

fn log_interp<T: Real>(t0: T, t1: T, h0: T, h1: T, t: T) -> T {
    let theta = (t.ln() - t0.ln()) / (t1.ln() - t0.ln());
    h0 + theta * (h1 - h0)
}

/// `Ψ_t(s) = 1 / (F^{-1}(c t/s) + G^{-1}(1/t))`. With `c = 1` this is the
/// function used in the recursion argument; a general `c` carries the
/// constant of the hypothesis through the same argument.
pub fn psi_with<T: Real>(t: T, s: T, c: T, f: &RateFunction<T>, g: &RateFunction<T>) -> Result<T> {
    if !(t > T::zero()) || !(s > T::zero()) {
        return Err(Error::invalid("psi needs t > 0 and s > 0"));
    }
    Ok(T::one() / (f.inverse(c * t / s)? + g.inverse(T::one() / t)?))
}

/// `Ψ_t(s) = 1 / (F^{-1}(t/s) + G^{-1}(1/t))`.
pub fn psi<T: Real>(t: T, s: T, f: &RateFunction<T>, g: &RateFunction<T>) -> Result<T> {
    psi_with(t, s, T::one(), f, g)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct HypothesisReport<T> {
    pub holds: bool,
    pub checked: usize,
    /// Samples whose shifted time `s + 1/G(H(s))` lies beyond the grid.
    pub skipped: usize,
    /// Checked samples whose right endpoint was interpolated.
    pub interpolated: usize,
    /// `(c/G(h)²)(h - H(s')) - h` per sample; `None` when skipped.
    pub slacks: Vec<Option<T>>,
    /// Most negative slack relative to `h`.
    pub worst_relative_slack: T,
}

/// Evaluates the recursion hypothesis at every sample time.
pub fn check_hypothesis<T: Real>(h: &SampledH<T>, g: &RateFunction<T>, c: T) -> Result<HypothesisReport<T>> {
    if !(c > T::zero()) {
        return Err(Error::invalid("hypothesis constant c must be positive"));
    }
    let mut rep = HypothesisReport {
        holds: true,
        checked: 0,
        skipped: 0,
        interpolated: 0,
        slacks: Vec::with_capacity(h.len()),
        worst_relative_slack: T::infinity(),
    };
    for (&s, &hv) in h.times.iter().zip(&h.values) {
        let gh = g.eval(hv)?;
        let shifted = s + T::one() / gh;
        let Some((h_shift, interp)) = h.eval(shifted) else {
            rep.skipped += 1;
            rep.slacks.push(None);
            continue;
        };
        let slack = c / (gh * gh) * (hv - h_shift) - hv;
        rep.checked += 1;
        rep.interpolated += usize::from(interp);
        rep.worst_relative_slack = rep.worst_relative_slack.min(slack / hv);
        rep.slacks.push(Some(slack));
    }
    rep.holds = rep.checked > 0 && rep.worst_relative_slack >= -T::tol(1e-12);
    Ok(rep)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ConclusionReport<T> {
    /// `max H(t) / F^{-1}(1/√t)` over usable samples.
    pub c_min: T,
    pub argmax_time: T,
    pub checked: usize,
    pub skipped: usize,
    pub ratios: Vec<Option<T>>,
}

/// Smallest `C` with `H(t) ≤ C F^{-1}(1/√t)` on the samples. Samples where
/// `1/√t` is outside the range of `F` are skipped.
pub fn check_conclusion<T: Real>(h: &SampledH<T>, f: &RateFunction<T>) -> Result<ConclusionReport<T>> {
    let mut rep = ConclusionReport {
        c_min: T::zero(),
        argmax_time: T::nan(),
        checked: 0,
        skipped: 0,
        ratios: Vec::with_capacity(h.len()),
    };
    for (&t, &hv) in h.times.iter().zip(&h.values) {
        match f.inverse(T::one() / t.sqrt()) {
            Ok(fi) => {
                let r = hv / fi;
                rep.checked += 1;
                if rep.checked == 1 || r > rep.c_min {
                    rep.c_min = r;
                    rep.argmax_time = t;
                }
                rep.ratios.push(Some(r));
            }
            Err(Error::OutOfRange { .. }) => {
                rep.skipped += 1;
                rep.ratios.push(None);
            }
            Err(e) => return Err(e),
        }
    }
    if rep.checked == 0 {
        return Err(Error::EmptyWindow("no sample time maps into the range of F".into()));
    }
    Ok(rep)
}

/// Log-spaced grid for the synthetic construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct LemmaGrid<T> {
    pub t_min: T,
    pub t_max: T,
    pub points: usize,
}

impl<T: Real> Default for LemmaGrid<T> {
    fn default() -> Self {
        Self {
            t_min: T::one(),
            t_max: T::lit(1e6),
            points: 512,
        }
    }
}

/// Builds the hardest admissible `H` on the grid: each value is the
/// largest one keeping every already-placed instance of the hypothesis
/// satisfiable with equality up to a relative shrink of `1e-12`.
///
/// A constraint from sample `i` with target `s'_i = t_i + 1/G(h_i)` and
/// bound `b_i = h_i (1 - G(h_i)²/c)` reads `H(s'_i) ≤ b_i`. Sample `j`
/// is chosen after every constraint whose target precedes `t_j` is known.
pub fn saturating_h<T: Real>(g: &RateFunction<T>, c: T, grid: LemmaGrid<T>) -> Result<SampledH<T>> {
    if !(c > T::zero()) || grid.points < 2 || !(grid.t_min > T::zero()) || !(grid.t_max > grid.t_min) {
        return Err(Error::invalid("generator needs c > 0 and a grid 0 < t_min < t_max with >= 2 points"));
    }
    if !g.is_increasing() {
        return Err(Error::invalid("generator needs an increasing G"));
    }
    let times = log_space(grid.t_min, grid.t_max, grid.points);
    let n = times.len();
    let shrink = T::one() - T::lit(1e-12);
    let half_c_sqrt = (c * T::lit(0.5)).sqrt();
    let one = T::one().min(g.domain().1);
    let h0 = if g.eval(one)? <= half_c_sqrt {
        one
    } else {
        g.inverse(half_c_sqrt)
            .map_err(|e| Error::Construction(format!("no admissible starting value: {e}")))?
    };

    struct Target<T> {
        at: T,
        bound: T,
    }
    let mut targets: Vec<Target<T>> = Vec::new();
    let mut values = Vec::with_capacity(n);
    values.push(h0 * shrink);
    let target_of = |h: T, t: T| -> Result<Target<T>> {
        let gh = g.eval(h)?;
        Ok(Target {
            at: t + T::one() / gh,
            bound: h * (T::one() - gh * gh / c),
        })
    };
    targets.push(target_of(values[0], times[0])?);

    for j in 1..n {
        let (t_prev, t_cur) = (times[j - 1], times[j]);
        let h_prev = values[j - 1];
        let mut cap = h_prev;
        // Constraints whose target falls in (t_prev, t_cur].
        for tg in targets.iter().filter(|tg| tg.at > t_prev && tg.at <= t_cur) {
            let theta = (tg.at.ln() - t_prev.ln()) / (t_cur.ln() - t_prev.ln());
            cap = cap.min(h_prev - (h_prev - tg.bound) / theta);
        }
        // Constraints landing in the next cell bound this value directly.
        if j + 1 < n {
            let t_next = times[j + 1];
            for tg in targets.iter().filter(|tg| tg.at > t_cur && tg.at <= t_next) {
                let theta = (tg.at.ln() - t_cur.ln()) / (t_next.ln() - t_cur.ln());
                if theta < T::one() {
                    cap = cap.min(tg.bound / (T::one() - theta));
                }
            }
        }
        if !(cap > T::zero()) {
            return Err(Error::Construction(format!("empty feasible set at t = {t_cur}")));
        }
        // Own constraint: if the target lands in the next cell it must be
        // satisfiable with a positive next value.
        let own_ok = |h: T| -> Result<bool> {
            let tg = target_of(h, t_cur)?;
            if tg.bound <= T::zero() {
                return Ok(false);
            }
            if j + 1 >= n || tg.at > times[j + 1] {
                return Ok(true);
            }
            let theta = (tg.at.ln() - t_cur.ln()) / (times[j + 1].ln() - t_cur.ln());
            Ok((T::one() - theta) * h < tg.bound)
        };
        let mut h = cap;
        if !own_ok(h)? {
            let (mut lo, mut hi) = (cap * T::lit(1e-30), cap);
            if !own_ok(lo)? {
                return Err(Error::Construction(format!("empty feasible set at t = {t_cur}")));
            }
            for _ in 0..200 {
                let mid = (lo.ln() * T::lit(0.5) + hi.ln() * T::lit(0.5)).exp();
                if !(mid > lo && mid < hi) {
                    break;
                }
                if own_ok(mid)? {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            h = lo;
        }
        let h = h * shrink;
        if !(h > T::zero()) {
            return Err(Error::Construction(format!("value underflowed at t = {t_cur}")));
        }
        values.push(h);
        targets.push(target_of(h, t_cur)?);
        targets.retain(|tg| tg.at > t_cur);
    }
    SampledH::new(times, values)
}

/// Counts for one reading of the recursion chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ChainCheck<T> {
    pub checked: usize,
    pub failures: usize,
    /// Worst `lhs - rhs` relative to `rhs` (negative means slack).
    pub worst_excess: T,
    pub closes: bool,
}

impl<T: Real> ChainCheck<T> {
    fn new() -> Self {
        Self {
            checked: 0,
            failures: 0,
            worst_excess: -T::infinity(),
            closes: true,
        }
    }

    fn record(&mut self, lhs: T, rhs: T) {
        self.checked += 1;
        let excess = (lhs - rhs) / rhs.abs().max(T::min_positive_value());
        self.worst_excess = self.worst_excess.max(excess);
        if excess > T::tol(1e-12) {
            self.failures += 1;
            self.closes = false;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct LemmaReport<T> {
    pub c: T,
    pub xfinv: GridCheck<T>,
    pub h: SampledH<T>,
    pub hypothesis: HypothesisReport<T>,
    pub conclusion: ConclusionReport<T>,
    /// `Ψ_t(t+s) H(t+s) ≤ max(1, Ψ_t(s) H(s))` over grid pairs.
    pub psi_monotone: ChainCheck<T>,
    /// Chain step with `Ψ_t(nt) H(nt)` on the right.
    pub chain_psi_t_at_nt: ChainCheck<T>,
    /// Chain step with `Ψ_{nt}(t) H(nt)` on the right.
    pub chain_psi_nt_at_t: ChainCheck<T>,
    /// `G^{-1}(x) ≤ F^{-1}(x)` on a grid approaching zero.
    pub inverse_comparison: GridCheck<T>,
}

/// Builds the saturating `H` for `(G, c)` and runs the hypothesis check,
/// the conclusion fit and the intermediate `Ψ` claims.
pub fn lemma_end_to_end<T: Real>(g: &RateFunction<T>, c: T, grid: LemmaGrid<T>) -> Result<LemmaReport<T>> {
    let xfinv = check_xfinv_increasing(g, &log_space(T::one(), grid.t_max.max(T::lit(2.0)), 256))?;
    if !xfinv.holds {
        return Err(Error::HypothesisUnmet(
            "x F^-1(1/x) is not nondecreasing for this rate".into(),
        ));
    }
    let f = g.make_f()?;
    let h = saturating_h(g, c, grid)?;
    let hypothesis = check_hypothesis(&h, g, c)?;
    if !hypothesis.holds {
        return Err(Error::Construction(format!(
            "generated H violates the hypothesis (worst relative slack {})",
            hypothesis.worst_relative_slack
        )));
    }
    let conclusion = check_conclusion(&h, &f)?;
    let (psi_monotone, chain_a, chain_b) = psi_claims(&h, &f, g, c)?;
    let near_zero = log_space(T::lit(1e-12), T::lit(1e-2), 64);
    let inverse_comparison = crate::rate::check_ginv_below_finv(g, &near_zero)?;
    Ok(LemmaReport {
        c,
        xfinv,
        h,
        hypothesis,
        conclusion,
        psi_monotone,
        chain_psi_t_at_nt: chain_a,
        chain_psi_nt_at_t: chain_b,
        inverse_comparison,
    })
}

type PsiClaims<T> = (ChainCheck<T>, ChainCheck<T>, ChainCheck<T>);

fn psi_claims<T: Real>(h: &SampledH<T>, f: &RateFunction<T>, g: &RateFunction<T>, c: T) -> Result<PsiClaims<T>> {
    let times = h.times();
    let t_max = h.t_max();
    let one = T::one();
    let mut general = ChainCheck::new();
    for &t in times {
        let ginv = g.inverse(one / t)?;
        let psi_t = |s: T| -> Result<T> { Ok(one / (f.inverse(c * t / s)? + ginv)) };
        for (&s, &h_s) in times.iter().zip(h.values()) {
            if t + s > t_max {
                break;
            }
            let Some((h_ts, _)) = h.eval(t + s) else { continue };
            let lhs = psi_t(t + s)? * h_ts;
            let rhs = one.max(psi_t(s)? * h_s);
            general.record(lhs, rhs);
        }
    }

    let mut chain_a = ChainCheck::new();
    let mut chain_b = ChainCheck::new();
    for &t in times {
        let ginv_t = g.inverse(one / t)?;
        let mut n = 1usize;
        loop {
            let nt = t * T::lit(n as f64);
            let n1t = t * T::lit((n + 1) as f64);
            if n1t > t_max {
                break;
            }
            let (Some((h_n1, _)), Some((h_n, _))) = (h.eval(n1t), h.eval(nt)) else {
                break;
            };
            let lhs = one / (f.inverse(c * t / n1t)? + ginv_t) * h_n1;
            let a = one / (f.inverse(c * t / nt)? + ginv_t) * h_n;
            chain_a.record(lhs, one.max(a));
            let ginv_nt = g.inverse(one / nt)?;
            let b = one / (f.inverse(c * nt / t)? + ginv_nt) * h_n;
            chain_b.record(lhs, one.max(b));
            n = if n < 16 { n + 1 } else { n * 2 };
        }
    }
    Ok((general, chain_a, chain_b))
}

#[cfg(test)]
mod tests {
    use super::*;
    type SampledH = super::SampledH<f64>;
    type RateFunction = super::RateFunction<f64>;

    #[test]
    fn sampled_h_validation_and_interpolation() {
        assert!(SampledH::new(vec![1.0, 2.0], vec![0.5, 0.6]).is_err());
        assert!(SampledH::new(vec![1.0, 2.0], vec![1.5, 0.6]).is_err());
        assert!(SampledH::new(vec![0.0, 2.0], vec![1.0, 0.6]).is_err());
        let h = SampledH::new(vec![1.0, 100.0], vec![1.0, 0.5]).unwrap();
        let (v, interp) = h.eval(10.0).unwrap();
        assert!(interp && (v - 0.75).abs() < 1e-15);
        assert_eq!(h.eval(1.0), Some((1.0, false)));
        assert_eq!(h.eval(200.0), None);
    }

    #[test]
    fn psi_simple_values() {
        let g = RateFunction::power(1.0, 100.0).unwrap();
        let f = g.make_f().unwrap();
        assert!((psi(1.0, 1.0, &f, &g).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn constant_h_fails_hypothesis() {
        let g = RateFunction::power(1.0, 10.0).unwrap();
        let h = SampledH::new(log_space(1.0, 1e3, 50), vec![0.5; 50]).unwrap();
        let rep = check_hypothesis(&h, &g, 100.0).unwrap();
        assert!(!rep.holds);
    }

    #[test]
    fn conclusion_of_exact_shape() {
        let g = RateFunction::power(1.0, 1e4).unwrap();
        let f = g.make_f().unwrap();
        let times: Vec<f64> = log_space(1.0, 1e4, 40);
        let values: Vec<f64> = times.iter().map(|t| f.inverse(1.0 / t.sqrt()).unwrap()).collect();
        let h = SampledH::new(times.clone(), values.clone()).unwrap();
        let rep = check_conclusion(&h, &f).unwrap();
        assert!((rep.c_min - 1.0).abs() < 1e-10);
    }
}
