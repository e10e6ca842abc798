use serde::{Deserialize, Serialize};

use super::SpectralOperator;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Real;

/// `a(x) = amplitude` on `[start, end]`, zero elsewhere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Segment<T> {
    pub start: T,
    pub end: T,
    pub amplitude: T,
}

/// Nonnegative damping coefficient `a(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", bound = "T: Real")]
pub enum DampingProfile<T> {
    /// `a ≡ amplitude` on the whole domain.
    Constant { amplitude: T },
    /// Indicator of `[start, end]` scaled by `amplitude`.
    Interval { start: T, end: T, amplitude: T },
    /// Sum of indicator segments.
    Segments { segments: Vec<Segment<T>> },
}

impl<T: Real> DampingProfile<T> {
    pub fn constant(amplitude: T) -> Self {
        DampingProfile::Constant { amplitude }
    }

    pub fn interval(start: T, end: T, amplitude: T) -> Self {
        DampingProfile::Interval {
            start,
            end,
            amplitude,
        }
    }

    /// Segments covering the profile on `[0, length]`.
    pub fn segments(&self, length: T) -> Vec<Segment<T>> {
        match self {
            DampingProfile::Constant { amplitude } => vec![Segment {
                start: T::zero(),
                end: length,
                amplitude: *amplitude,
            }],
            DampingProfile::Interval {
                start,
                end,
                amplitude,
            } => vec![Segment {
                start: *start,
                end: *end,
                amplitude: *amplitude,
            }],
            DampingProfile::Segments { segments } => segments.clone(),
        }
    }

    pub fn validate(&self, length: T) -> Result<()> {
        let segs = self.segments(length);
        if segs.is_empty() {
            return Err(Error::invalid("damping profile has no segments"));
        }
        for s in segs {
            if !(s.amplitude >= T::zero()) || !s.amplitude.is_finite() {
                return Err(Error::invalid(format!(
                    "damping amplitude must be finite and nonnegative, got {}",
                    s.amplitude
                )));
            }
            if !(s.start >= T::zero() && s.start < s.end && s.end <= length) {
                return Err(Error::invalid(format!(
                    "damping interval [{}, {}] must satisfy 0 <= start < end <= {}",
                    s.start, s.end, length
                )));
            }
        }
        Ok(())
    }

    /// Pointwise value; segment endpoints count as inside.
    pub fn eval(&self, length: T, x: T) -> T {
        self.segments(length)
            .iter()
            .filter(|s| x >= s.start && x <= s.end)
            .map(|s| s.amplitude)
            .sum()
    }

    /// Sorted, deduplicated breakpoints including `0` and `length`.
    pub fn breakpoints(&self, length: T) -> Vec<T> {
        let mut pts = vec![T::zero(), length];
        for s in self.segments(length) {
            pts.push(s.start);
            pts.push(s.end);
        }
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        pts.dedup();
        pts
    }

    pub fn is_identically_zero(&self, length: T) -> bool {
        self.segments(length)
            .iter()
            .all(|s| s.amplitude == T::zero())
    }
}

/// `BB*` in the eigenbasis: `M_jk = ∫ a e_j e_k dx`, with `B` acting as
/// multiplication by `√a`, so `‖B*v‖² = vᵀ M v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct DampingMap<T> {
    coupling: Matrix<T>,
    profile: DampingProfile<T>,
    length: T,
}

impl<T: Real> DampingMap<T> {
    /// Builds the coupling matrix from closed-form sine-product integrals.
    pub fn build(op: &SpectralOperator<T>, profile: DampingProfile<T>) -> Result<Self> {
        let length = op.length();
        profile.validate(length)?;
        let n = op.n_modes();
        let coupling = match profile {
            // Orthonormality gives the exact identity; avoid sin(mπ) residue.
            DampingProfile::Constant { amplitude } => Matrix::from_diagonal(&vec![amplitude; n]),
            _ => {
                let mut m = Matrix::zeros(n, n);
                for seg in profile.segments(length) {
                    if seg.amplitude == T::zero() {
                        continue;
                    }
                    for j in 0..n {
                        for k in 0..=j {
                            let v = seg.amplitude
                                * segment_sine_product(j + 1, k + 1, seg.start, seg.end, length);
                            m[(j, k)] += v;
                            if j != k {
                                m[(k, j)] += v;
                            }
                        }
                    }
                }
                m
            }
        };
        Ok(Self {
            coupling,
            profile,
            length,
        })
    }

    /// Arbitrary symmetric PSD coupling (e.g. a finite-rank actuator).
    /// The profile is kept only as a description.
    pub fn from_coupling(coupling: Matrix<T>, profile: DampingProfile<T>, length: T) -> Result<Self> {
        if !coupling.is_square() {
            return Err(Error::invalid("coupling matrix must be square"));
        }
        let scale = coupling.max_abs().max(T::one());
        if coupling.asymmetry() > T::tol(1e-12) * scale {
            return Err(Error::invalid("coupling matrix must be symmetric"));
        }
        Ok(Self {
            coupling,
            profile,
            length,
        })
    }

    pub fn coupling(&self) -> &Matrix<T> {
        &self.coupling
    }

    pub fn profile(&self) -> &DampingProfile<T> {
        &self.profile
    }

    pub fn length(&self) -> T {
        self.length
    }

    pub fn n_modes(&self) -> usize {
        self.coupling.rows()
    }

    /// `‖B* v‖²_U = vᵀ M v`.
    pub fn observed_norm_sq(&self, v: &[T]) -> T {
        self.coupling.quadratic_form(v)
    }

    /// `BB* v = M v`.
    pub fn apply(&self, v: &[T]) -> Vec<T> {
        self.coupling.mul_vec(v)
    }

    pub fn is_zero(&self) -> bool {
        self.coupling.max_abs() == T::zero()
    }
}

/// `∫_α^β e_j e_k dx` for 1-based wave numbers, using
/// `2 sin(jθ) sin(kθ) = cos((j-k)θ) - cos((j+k)θ)`.
fn segment_sine_product<T: Real>(j: usize, k: usize, alpha: T, beta: T, length: T) -> T {
    let cos_integral = |m: usize| -> T {
        if m == 0 {
            return beta - alpha;
        }
        let w = T::lit(m as f64) * T::PI() / length;
        // sin(wβ) - sin(wα) = 2 cos(w(α+β)/2) sin(w(β-α)/2)
        T::lit(2.0) * (w * (alpha + beta) * T::lit(0.5)).cos() * (w * (beta - alpha) * T::lit(0.5)).sin() / w
    };
    let diff = j.abs_diff(k);
    (cos_integral(diff) - cos_integral(j + k)) / length
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate;

    fn op(n: usize, l: f64) -> SpectralOperator<f64> {
        SpectralOperator::dirichlet(n, l).unwrap()
    }

    #[test]
    fn constant_profiles_give_scaled_identity() {
        let op = op(6, 2.0);
        let m = DampingMap::build(&op, DampingProfile::constant(1.0)).unwrap();
        assert_eq!(m.coupling(), &Matrix::identity(6));
        let z = DampingMap::build(&op, DampingProfile::constant(0.0)).unwrap();
        assert!(z.is_zero());
    }

    #[test]
    fn full_interval_matches_identity_and_quadrature() {
        let op = op(12, 1.5);
        let m = DampingMap::build(&op, DampingProfile::interval(0.0, 1.5, 1.0)).unwrap();
        for j in 0..12 {
            for k in 0..12 {
                let quad = integrate(
                    |x| op.eigenfunction(j, x) * op.eigenfunction(k, x),
                    0.0,
                    1.5,
                    40,
                    12,
                );
                let id = if j == k { 1.0 } else { 0.0 };
                assert!((m.coupling()[(j, k)] - quad).abs() <= 1e-10);
                assert!((m.coupling()[(j, k)] - id).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn partial_interval_matches_quadrature() {
        let op = op(16, 1.0);
        let m = DampingMap::build(&op, DampingProfile::interval(0.3, 0.7, 2.5)).unwrap();
        for j in 0..16 {
            for k in 0..16 {
                let quad = 2.5
                    * integrate(
                        |x| op.eigenfunction(j, x) * op.eigenfunction(k, x),
                        0.3,
                        0.7,
                        40,
                        12,
                    );
                assert!((m.coupling()[(j, k)] - quad).abs() <= 1e-10, "{j},{k}");
            }
        }
        assert!(m.coupling().asymmetry() <= 1e-12);
        assert!(m.coupling().symmetric_eigenvalues()[0] >= -1e-12);
    }

    #[test]
    fn rejects_interval_outside_domain() {
        let op = op(4, 1.0);
        for p in [
            DampingProfile::interval(-0.1, 0.5, 1.0),
            DampingProfile::interval(0.5, 1.2, 1.0),
            DampingProfile::interval(0.6, 0.5, 1.0),
            DampingProfile::interval(0.1, 0.5, -1.0),
        ] {
            assert!(matches!(DampingMap::build(&op, p), Err(Error::InvalidArgument(_))));
        }
    }

    #[test]
    fn coupling_is_additive_over_disjoint_segments() {
        let op = op(10, 1.0);
        let a = DampingProfile::interval(0.1, 0.3, 1.0);
        let b = DampingProfile::interval(0.5, 0.9, 0.7);
        let both = DampingProfile::Segments {
            segments: vec![
                Segment { start: 0.1, end: 0.3, amplitude: 1.0 },
                Segment { start: 0.5, end: 0.9, amplitude: 0.7 },
            ],
        };
        let ma = DampingMap::build(&op, a).unwrap();
        let mb = DampingMap::build(&op, b).unwrap();
        let mab = DampingMap::build(&op, both).unwrap();
        let diff = mab.coupling().sub(&ma.coupling().add(mb.coupling()));
        assert!(diff.max_abs() < 1e-14);
    }
}
