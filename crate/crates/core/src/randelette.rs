//! The grand-ensemble potential
//!
//! ```text
//! v(omega; theta) = sum_{n >= 1} a_n sum_k theta_{n,k} phi_{n,k}(omega)
//! ```
//!
//! over indicators of the dyadic cubes of `T^nu`, with `theta_{n,k}` IID
//! uniform on `[0, 1]` and `a_n` decaying polynomially. The series is
//! truncated at a fixed depth; exactly one indicator fires per level, so a
//! level contributes `a_n theta_{n, k(n, omega)}`.
//!
//! Splitting the levels at `n0` gives `v = xi + eta`, where `xi` only reads
//! levels below `n0`. When all orbit points of a cube are at least
//! `2^-n0` apart, the `eta` parts of different sites read disjoint `theta`
//! variables, and `eta` alone has density at most `1 / a_n0`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{keyed_unit, Domain};
use crate::scalar::Real;
use crate::torus::{DyadicCubeIndex, ShiftAction, TorusPoint, MAX_INDEX_BITS};

/// `a_n = s_n c' n^-kappa`, with `c'' n^-M <= |a_n| <= c' n^-kappa`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSchedule<T> {
    pub c_upper: T,
    pub c_lower: T,
    pub kappa: T,
    pub m_exponent: T,
    /// Alternate signs `(-1)^(n+1)` instead of all positive. The potential
    /// is then no longer monotone in `theta`.
    pub alternating: bool,
}

impl<T: Real> CoefficientSchedule<T> {
    pub fn new(c_upper: T, c_lower: T, kappa: T, m_exponent: T) -> Result<Self> {
        let schedule = Self {
            c_upper,
            c_lower,
            kappa,
            m_exponent,
            alternating: false,
        };
        schedule.validate()?;
        Ok(schedule)
    }

    /// `c' = c'' = c`, `M = kappa`.
    pub fn power_law(c: T, kappa: T) -> Result<Self> {
        Self::new(c, c, kappa, kappa)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > T::one()) {
            return Err(Error::InvalidSchedule(format!(
                "decay requires 1 < kappa, got kappa = {}",
                self.kappa
            )));
        }
        if !(self.m_exponent >= self.kappa) {
            return Err(Error::InvalidSchedule(format!(
                "decay requires kappa <= M, got M = {} < kappa = {}",
                self.m_exponent, self.kappa
            )));
        }
        if !(self.c_lower > T::zero() && self.c_lower <= self.c_upper) {
            return Err(Error::InvalidSchedule(format!(
                "decay requires 0 < c'' <= c', got c'' = {}, c' = {}",
                self.c_lower, self.c_upper
            )));
        }
        Ok(())
    }

    /// Whether the potential is nondecreasing in every `theta_{n,k}`.
    pub fn is_monotone(&self) -> bool {
        !self.alternating
    }

    pub fn coefficient(&self, n: u32) -> T {
        let magnitude = self.c_upper * T::of(n.max(1) as f64).powf(-self.kappa);
        if self.alternating && n.is_multiple_of(2) {
            -magnitude
        } else {
            magnitude
        }
    }

    /// Certified bound on `sum_{n > N} |a_n|`, by comparison with
    /// `int_N^inf c' t^-kappa dt`.
    pub fn tail_bound(&self, n: u32) -> T {
        let n = T::of(n.max(1) as f64);
        self.c_upper * n.powf(T::one() - self.kappa) / (self.kappa - T::one())
    }

    /// Upper bound `1 / |a_n0|` on the density of `v` conditioned on the
    /// levels below `n0`.
    pub fn conditional_density_bound(&self, n0: u32) -> T {
        T::one() / self.coefficient(n0).abs()
    }

    /// Smallest `N` with `tail_bound(N) <= tol`.
    pub fn depth_for_tail(&self, tol: T) -> u64 {
        // c' N^(1-kappa) / (kappa-1) <= tol  <=>  N >= (c' / (tol (kappa-1)))^(1/(kappa-1))
        let km1 = self.kappa - T::one();
        let raw = (self.c_upper / (tol * km1)).powf(T::one() / km1);
        let mut n = raw.ceil().to_f64_lossy().clamp(1.0, u64::MAX as f64) as u64;
        while n > 1 && self.tail_bound((n - 1).min(u32::MAX as u64) as u32) <= tol {
            n -= 1;
        }
        n
    }
}

/// Source of the ensemble parameters `theta_{n,k}` in `[0, 1]`.
pub trait ThetaSource: Sync {
    fn theta(&self, n: u32, k: u64) -> f64;
}

/// A point of the parameter space, identified by its seed. Values are
/// generated lazily from a counter-based stream keyed by `(seed, n, k)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ThetaSample {
    pub master_seed: u64,
}

impl ThetaSample {
    pub fn new(master_seed: u64) -> Self {
        Self { master_seed }
    }
}

impl ThetaSource for ThetaSample {
    #[inline]
    fn theta(&self, n: u32, k: u64) -> f64 {
        keyed_unit(self.master_seed, Domain::Theta, n as u64, k)
    }
}

/// `theta_{n,k}` with the index range checked against `K_n = 2^(nu n)`.
pub fn theta_value<S: ThetaSource + ?Sized>(theta: &S, nu: usize, n: u32, k: u64) -> Result<f64> {
    let max = DyadicCubeIndex::cube_count(nu, n)?;
    if k == 0 || k > max {
        return Err(Error::CubeIndexOutOfRange { level: n, k, max });
    }
    Ok(theta.theta(n, k))
}

/// Every `theta_{n,k}` equal to one value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantTheta(pub f64);

impl ThetaSource for ConstantTheta {
    fn theta(&self, _n: u32, _k: u64) -> f64 {
        self.0
    }
}

/// Explicit values on top of a base source.
#[derive(Debug, Clone)]
pub struct TableTheta<S> {
    pub base: S,
    pub values: HashMap<(u32, u64), f64>,
}

impl<S: ThetaSource> TableTheta<S> {
    pub fn new(base: S) -> Self {
        Self {
            base,
            values: HashMap::new(),
        }
    }

    pub fn with(mut self, n: u32, k: u64, value: f64) -> Self {
        self.values.insert((n, k), value);
        self
    }
}

impl<S: ThetaSource> ThetaSource for TableTheta<S> {
    fn theta(&self, n: u32, k: u64) -> f64 {
        self.values
            .get(&(n, k))
            .copied()
            .unwrap_or_else(|| self.base.theta(n, k))
    }
}

/// Levels below `split` from `low`, the rest from `high`: resampling
/// `high` with `low` frozen samples `v` conditioned on the coarse levels.
#[derive(Debug, Clone, Copy)]
pub struct SplicedTheta<A, B> {
    pub low: A,
    pub high: B,
    pub split: u32,
}

impl<A: ThetaSource, B: ThetaSource> ThetaSource for SplicedTheta<A, B> {
    fn theta(&self, n: u32, k: u64) -> f64 {
        if n < self.split {
            self.low.theta(n, k)
        } else {
            self.high.theta(n, k)
        }
    }
}

/// Truncated grand-ensemble potential on `T^nu`.
#[derive(Debug, Clone)]
pub struct RandeletteField<T, S = ThetaSample> {
    pub schedule: CoefficientSchedule<T>,
    pub theta: S,
    nu: usize,
    truncation: u32,
}

impl<T: Real, S: ThetaSource> RandeletteField<T, S> {
    /// Levels `1..=truncation` are summed; `nu * truncation` must stay
    /// within the 63-bit cube index.
    pub fn new(schedule: CoefficientSchedule<T>, theta: S, nu: usize, truncation: u32) -> Result<Self> {
        schedule.validate()?;
        let max = Self::max_truncation(nu);
        if truncation == 0 || truncation > max {
            return Err(Error::LevelTooDeep {
                level: truncation,
                max,
                nu,
            });
        }
        Ok(Self {
            schedule,
            theta,
            nu,
            truncation,
        })
    }

    /// Deepest resolvable level for `nu`, also capped by the mantissa
    /// width of `T`.
    pub fn max_truncation(nu: usize) -> u32 {
        let mantissa = T::epsilon().log2().abs().to_f64_lossy() as u32 + 1;
        (MAX_INDEX_BITS / nu.max(1) as u32).min(mantissa)
    }

    pub fn nu(&self) -> usize {
        self.nu
    }

    pub fn truncation(&self) -> u32 {
        self.truncation
    }

    pub fn with_theta<S2: ThetaSource>(&self, theta: S2) -> RandeletteField<T, S2> {
        RandeletteField {
            schedule: self.schedule.clone(),
            theta,
            nu: self.nu,
            truncation: self.truncation,
        }
    }

    /// `(n, k(n, omega))` for `n = 1..=truncation`.
    pub fn keys(&self, omega: &TorusPoint<T>) -> Result<Vec<(u32, u64)>> {
        self.check_nu(omega)?;
        let top = self.truncation;
        // floor(w 2^n) = floor(w 2^top) >> (top - n): exact since w 2^top is.
        let scale = T::of(2.0).powi(top as i32);
        let side_top = if top >= 64 { u64::MAX } else { (1u64 << top) - 1 };
        let deepest: Vec<u64> = omega
            .coords()
            .iter()
            .map(|&w| (w * scale).floor().to_u64().unwrap_or(0).min(side_top))
            .collect();
        Ok((1..=top)
            .map(|n| {
                let shift = top - n;
                let flat = deepest
                    .iter()
                    .fold(0u64, |acc, &bits| (acc << n) | (bits >> shift));
                (n, flat + 1)
            })
            .collect())
    }

    fn check_nu(&self, omega: &TorusPoint<T>) -> Result<()> {
        if omega.nu() != self.nu {
            return Err(Error::DimensionMismatch {
                expected: self.nu,
                got: omega.nu(),
            });
        }
        Ok(())
    }

    fn level_sum(&self, keys: &[(u32, u64)]) -> T {
        // Smallest terms first.
        keys.iter().rev().fold(T::zero(), |acc, &(n, k)| {
            acc + self.schedule.coefficient(n) * T::of(self.theta.theta(n, k))
        })
    }

    /// `v(omega; theta)`, summed over levels `1..=truncation`.
    pub fn evaluate(&self, omega: &TorusPoint<T>) -> Result<T> {
        Ok(self.level_sum(&self.keys(omega)?))
    }

    /// `(xi, eta)`: levels `1..n0` and `n0..=truncation` of the sum.
    pub fn split(&self, omega: &TorusPoint<T>, n0: u32) -> Result<(T, T)> {
        if n0 == 0 || n0 > self.truncation {
            return Err(Error::SplitLevel {
                n0,
                max: self.truncation,
            });
        }
        let keys = self.keys(omega)?;
        let (low, high) = keys.split_at(n0 as usize - 1);
        Ok((self.level_sum(low), self.level_sum(high)))
    }

    /// Keys read by the `eta` part at split level `n0`.
    pub fn high_keys(&self, omega: &TorusPoint<T>, n0: u32) -> Result<Vec<(u32, u64)>> {
        if n0 == 0 || n0 > self.truncation {
            return Err(Error::SplitLevel {
                n0,
                max: self.truncation,
            });
        }
        Ok(self.keys(omega)?.split_off(n0 as usize - 1))
    }

    /// Certified bound on `|v_truncated - v|`.
    pub fn truncation_error_bound(&self) -> T {
        self.schedule.tail_bound(self.truncation)
    }

    /// `max |v|` over the torus for any `theta` in `[0,1]`.
    pub fn sup_bound(&self) -> T {
        (1..=self.truncation)
            .map(|n| self.schedule.coefficient(n).abs())
            .fold(T::zero(), |a, b| a + b)
    }
}

/// Free-function form of [`RandeletteField::evaluate`].
pub fn evaluate_v<T: Real, S: ThetaSource>(field: &RandeletteField<T, S>, omega: &TorusPoint<T>) -> Result<T> {
    field.evaluate(omega)
}

/// `V(x; omega; theta) = v(T^x omega; theta)`.
pub fn potential<T: Real, S: ThetaSource>(
    field: &RandeletteField<T, S>,
    action: &ShiftAction<T>,
    omega: &TorusPoint<T>,
    x: &[i64],
) -> Result<T> {
    field.evaluate(&action.apply(omega, x)?)
}

/// `(xi_x, eta_x)` for the lattice potential at `x`.
pub fn decompose<T: Real, S: ThetaSource>(
    field: &RandeletteField<T, S>,
    action: &ShiftAction<T>,
    omega: &TorusPoint<T>,
    x: &[i64],
    n0: u32,
) -> Result<(T, T)> {
    field.split(&action.apply(omega, x)?, n0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn schedule() -> CoefficientSchedule<f64> {
        CoefficientSchedule::power_law(1.0, 2.0).unwrap()
    }

    #[test]
    fn coefficient_examples() {
        assert_eq!(schedule().coefficient(1), 1.0);
        assert_eq!(schedule().coefficient(2), 0.25);
        let s = CoefficientSchedule::power_law(0.5, 1.5).unwrap();
        assert_abs_diff_eq!(s.coefficient(4), 0.0625, epsilon = 1e-15);
    }

    #[test]
    fn schedule_validation() {
        assert!(CoefficientSchedule::power_law(1.0, 1.0).is_err());
        assert!(CoefficientSchedule::new(1.0, 2.0, 2.0, 2.0).is_err());
        assert!(CoefficientSchedule::new(1.0, 0.5, 2.0, 1.5).is_err());
        let err = CoefficientSchedule::power_law(1.0, 0.5).unwrap_err().to_string();
        assert!(err.contains("1 < kappa"), "{err}");
    }

    #[test]
    fn coefficients_stay_within_decay_envelope() {
        let s = CoefficientSchedule::new(1.0, 0.3, 1.5, 2.5).unwrap();
        for n in 1..2000u32 {
            let a = s.coefficient(n);
            let nf = n as f64;
            assert!(a <= nf.powf(-1.5) * (1.0 + 1e-14));
            assert!(a >= 0.3 * nf.powf(-2.5));
        }
    }

    #[test]
    fn tail_bound_examples() {
        let s = schedule();
        assert_abs_diff_eq!(s.tail_bound(10), 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(s.tail_bound(100), 0.01, epsilon = 1e-15);
        // Partial-sum oracle: sum_{n=11}^{10^6} n^-2 plus the exact-order remainder.
        let tail: f64 = (11..=1_000_000u64).map(|n| 1.0 / (n as f64 * n as f64)).sum::<f64>() + 1e-6;
        assert_abs_diff_eq!(tail, 0.0951663, epsilon = 1e-6);
        assert!(tail <= s.tail_bound(10));
        for n in 1..200 {
            assert!(s.tail_bound(n) >= s.tail_bound(2 * n));
        }
    }

    #[test]
    fn depth_for_tail_is_minimal() {
        let s = schedule();
        assert_eq!(s.depth_for_tail(0.01), 100);
        assert_eq!(s.depth_for_tail(0.011), 91);
    }

    #[test]
    fn density_bound_example() {
        assert_abs_diff_eq!(schedule().conditional_density_bound(3), 9.0, epsilon = 1e-12);
    }

    #[test]
    fn theta_value_checks_range() {
        let t = ThetaSample::new(3);
        assert!(theta_value(&t, 1, 2, 4).is_ok());
        assert!(matches!(theta_value(&t, 1, 2, 5), Err(Error::CubeIndexOutOfRange { .. })));
        assert!(theta_value(&t, 1, 2, 0).is_err());
        assert_eq!(
            theta_value(&t, 2, 3, 17).unwrap().to_bits(),
            theta_value(&t, 2, 3, 17).unwrap().to_bits()
        );
        assert_ne!(ThetaSample::new(1).theta(1, 1), ThetaSample::new(2).theta(1, 1));
    }

    #[test]
    fn evaluate_worked_example() {
        let theta = TableTheta::new(ConstantTheta(0.0))
            .with(1, 1, 0.5)
            .with(1, 2, 0.3)
            .with(2, 1, 0.1)
            .with(2, 2, 0.2)
            .with(2, 3, 0.3)
            .with(2, 4, 0.4);
        let field = RandeletteField::new(schedule(), theta, 1, 2).unwrap();
        let v = field.evaluate(&TorusPoint::new(vec![0.7])).unwrap();
        assert_abs_diff_eq!(v, 0.375, epsilon = 1e-15);
    }

    #[test]
    fn zero_theta_gives_zero() {
        let field = RandeletteField::new(schedule(), ConstantTheta(0.0), 2, 20).unwrap();
        for w in [0.0, 0.3, 0.999] {
            assert_eq!(field.evaluate(&TorusPoint::new(vec![w, 1.0 - w])).unwrap(), 0.0);
        }
    }

    #[test]
    fn keys_match_partition_index() {
        let field = RandeletteField::new(schedule(), ThetaSample::new(1), 2, 31).unwrap();
        let omega = TorusPoint::new(vec![0.123456789, 0.87654321]);
        for (n, k) in field.keys(&omega).unwrap() {
            assert_eq!(crate::torus::partition_index(n, &omega).unwrap().flat_index, k);
        }
    }

    #[test]
    fn split_edge_cases() {
        let field = RandeletteField::new(schedule(), ThetaSample::new(5), 1, 12).unwrap();
        let omega = TorusPoint::new(vec![0.41]);
        let v = field.evaluate(&omega).unwrap();
        let (xi, eta) = field.split(&omega, 1).unwrap();
        assert_eq!(xi, 0.0);
        assert_eq!(eta, v);
        let (_, eta) = field.split(&omega, 12).unwrap();
        let k = crate::torus::partition_index(12, &omega).unwrap().flat_index;
        assert_eq!(eta, schedule().coefficient(12) * field.theta.theta(12, k));
        assert!(matches!(field.split(&omega, 13), Err(Error::SplitLevel { .. })));
        assert!(field.split(&omega, 0).is_err());
    }

    #[test]
    fn truncation_limits() {
        assert!(RandeletteField::new(schedule(), ThetaSample::new(0), 1, 0).is_err());
        assert!(RandeletteField::new(schedule(), ThetaSample::new(0), 1, 53).is_ok());
        assert!(RandeletteField::new(schedule(), ThetaSample::new(0), 1, 54).is_err());
        assert!(RandeletteField::new(schedule(), ThetaSample::new(0), 2, 31).is_ok());
        assert!(RandeletteField::new(schedule(), ThetaSample::new(0), 2, 32).is_err());
        assert_eq!(RandeletteField::<f32, ThetaSample>::max_truncation(1), 24);
    }

    #[test]
    fn alternating_signs() {
        let mut s = schedule();
        s.alternating = true;
        assert_eq!(s.coefficient(2), -0.25);
        assert_eq!(s.coefficient(3), 1.0 / 9.0);
        assert!(!s.is_monotone());
        assert_abs_diff_eq!(s.conditional_density_bound(2), 4.0, epsilon = 1e-12);
    }
}
