//! Diagonally monotone functions and an empirical harness for the
//! concentration bound `mu^J{Phi in I} <= |J| s(mu, |I|)`.
//!
//! `Phi: R^J -> R` is diagonally monotone (DM) when `Phi(q + r) >= Phi(q)`
//! for every `r >= 0` and `Phi(q + t e) - Phi(q) >= t` for `t > 0`, with
//! `e = (1, ..., 1)`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{assemble_two_particle_with, HamiltonianMatrix, InteractionSpec, ShadowPotential, TwoParticleCube};
use crate::rng::{keyed_stream, keyed_units, Domain};
use crate::spectral::eigenvalues_symmetric;
use crate::stats::ConcentrationEstimate;

/// Floating-point slack allowed on both DM conditions.
pub const DM_SLACK: f64 = 1e-12;

/// A real function of a parameter vector `q in R^J`.
pub trait MonotoneFunctional: Sync {
    /// `|J|`.
    fn arity(&self) -> usize;
    fn eval(&self, q: &[f64]) -> f64;
}

/// Wraps a closure with a fixed arity.
pub struct FnFunctional<F> {
    pub arity: usize,
    pub f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> MonotoneFunctional for FnFunctional<F> {
    fn arity(&self) -> usize {
        self.arity
    }

    fn eval(&self, q: &[f64]) -> f64 {
        (self.f)(q)
    }
}

pub fn mean_functional(arity: usize) -> FnFunctional<impl Fn(&[f64]) -> f64 + Sync> {
    FnFunctional {
        arity,
        f: |q: &[f64]| q.iter().sum::<f64>() / q.len() as f64,
    }
}

pub fn min_functional(arity: usize) -> FnFunctional<impl Fn(&[f64]) -> f64 + Sync> {
    FnFunctional {
        arity,
        f: |q: &[f64]| q.iter().copied().fold(f64::INFINITY, f64::min),
    }
}

/// `k`-th sorted eigenvalue of `H_0 + H(q)`, where `q` is the potential on
/// the shadow of a two-particle cube.
#[derive(Debug, Clone)]
pub struct EigenvalueFunctional {
    pub cube: TwoParticleCube,
    pub interaction: InteractionSpec<f64>,
    pub index: usize,
    /// Fixed symmetric perturbation added before diagonalizing.
    pub offset: Option<HamiltonianMatrix<f64>>,
    shadow: Vec<crate::lattice::Site>,
}

impl EigenvalueFunctional {
    pub fn new(cube: TwoParticleCube, interaction: InteractionSpec<f64>, index: usize) -> Result<Self> {
        if index >= cube.len() {
            return Err(Error::OutOfRange {
                name: "eigenvalue index",
                detail: format!("{index} >= dimension {}", cube.len()),
            });
        }
        let shadow = crate::lattice::shadow(&cube);
        Ok(Self {
            cube,
            interaction,
            index,
            offset: None,
            shadow,
        })
    }

    pub fn with_offset(mut self, offset: HamiltonianMatrix<f64>) -> Result<Self> {
        if offset.dim() != self.cube.len() {
            return Err(Error::DimensionMismatch {
                expected: self.cube.len(),
                got: offset.dim(),
            });
        }
        self.offset = Some(offset);
        Ok(self)
    }

    pub fn matrix(&self, q: &[f64]) -> Result<HamiltonianMatrix<f64>> {
        let pot = ShadowPotential::new(self.shadow.clone(), q.to_vec())?;
        let h = assemble_two_particle_with(&self.cube, &pot, &self.interaction)?;
        match &self.offset {
            Some(h0) => h.plus(h0),
            None => Ok(h),
        }
    }
}

impl MonotoneFunctional for EigenvalueFunctional {
    fn arity(&self) -> usize {
        self.shadow.len()
    }

    fn eval(&self, q: &[f64]) -> f64 {
        let m = self.matrix(q).expect("parameter vector matches the shadow");
        eigenvalues_symmetric(&m).expect("symmetric eigensolver converges").eigenvalues()[self.index]
    }
}

/// Margins of both DM conditions at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DmReport {
    /// `Phi(q + r) - Phi(q)`.
    pub monotone_margin: f64,
    /// `Phi(q + t e) - Phi(q) - t`.
    pub diagonal_margin: f64,
    pub pass: bool,
}

/// Evaluates both DM conditions at `(q, r, t)`.
pub fn check_dm<F: MonotoneFunctional + ?Sized>(phi: &F, q: &[f64], r: &[f64], t: f64) -> Result<DmReport> {
    let m = phi.arity();
    if q.len() != m || r.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: if q.len() != m { q.len() } else { r.len() },
        });
    }
    if r.iter().any(|&x| x < 0.0) {
        return Err(Error::OutOfRange {
            name: "r",
            detail: "increment must be componentwise nonnegative".into(),
        });
    }
    if !(t > 0.0) {
        return Err(Error::OutOfRange {
            name: "t",
            detail: format!("{t} must be positive"),
        });
    }
    let base = phi.eval(q);
    let bumped: Vec<f64> = q.iter().zip(r).map(|(a, b)| a + b).collect();
    let diag: Vec<f64> = q.iter().map(|a| a + t).collect();
    let monotone_margin = phi.eval(&bumped) - base;
    let diagonal_margin = phi.eval(&diag) - base - t;
    Ok(DmReport {
        monotone_margin,
        diagonal_margin,
        pass: monotone_margin >= -DM_SLACK && diagonal_margin >= -DM_SLACK,
    })
}

/// Concentration function of the uniform law on `[0, 1]`:
/// `s(epsilon) = sup_a mu([a, a + epsilon]) = min(epsilon, 1)`.
pub fn concentration_uniform(epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::OutOfRange {
            name: "epsilon",
            detail: format!("{epsilon} not in (0, 1]"),
        });
    }
    Ok(epsilon)
}

/// Uniform concentration function extended to any width `>= 0`.
pub fn uniform_s(width: f64) -> f64 {
    width.clamp(0.0, 1.0)
}

/// Outcome of one empirical concentration check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StollmannReport {
    pub interval_start: f64,
    pub estimate: ConcentrationEstimate,
    /// `|J| s(mu, epsilon)`.
    pub bound: f64,
    /// The lower confidence limit does not exceed the bound.
    pub pass: bool,
}

/// Monte Carlo estimate of `mu^J{Phi(q) in [a, a + epsilon]}` with `q`
/// IID uniform on `[0, 1]^J`.
///
/// Sample `i` draws its parameters from the keyed stream `(seed, i)`.
pub fn stollmann_empirical<F: MonotoneFunctional + ?Sized>(
    phi: &F,
    interval_start: f64,
    epsilon: f64,
    samples: u64,
    seed: u64,
) -> Result<StollmannReport> {
    let values = sample_functional(phi, samples, seed)?;
    stollmann_from_values(&values, phi.arity(), interval_start, epsilon)
}

/// Values `Phi(q_i)` for `i < samples`.
pub fn sample_functional<F: MonotoneFunctional + ?Sized>(phi: &F, samples: u64, seed: u64) -> Result<Vec<f64>> {
    if samples == 0 {
        return Err(Error::ZeroTrials);
    }
    let m = phi.arity();
    Ok((0..samples)
        .into_par_iter()
        .map(|i| phi.eval(&keyed_units(seed, Domain::Parameters, i, m)))
        .collect())
}

/// Same as [`stollmann_empirical`] on precomputed functional values.
pub fn stollmann_from_values(values: &[f64], arity: usize, interval_start: f64, epsilon: f64) -> Result<StollmannReport> {
    if values.is_empty() {
        return Err(Error::ZeroTrials);
    }
    if !(epsilon >= 0.0) {
        return Err(Error::OutOfRange {
            name: "epsilon",
            detail: format!("{epsilon} must be nonnegative"),
        });
    }
    let end = interval_start + epsilon;
    let hits = values.iter().filter(|&&v| v >= interval_start && v <= end).count() as u64;
    let estimate = ConcentrationEstimate::from_counts(epsilon, hits, values.len() as u64)?;
    let bound = arity as f64 * uniform_s(epsilon);
    Ok(StollmannReport {
        interval_start,
        estimate,
        bound,
        pass: estimate.ci_low <= bound,
    })
}

/// Worst case over a batch of random two-particle instances of the two
/// DM properties of the sorted spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmSweep {
    pub instances: u64,
    pub shifts: Vec<f64>,
    /// `max |lambda_k(q + t e) - lambda_k(q) - 2t|` over instances, `k`, `t`.
    pub max_shift_error: f64,
    /// `min (lambda_k(q + t e) - lambda_k(q) - t)`; equals `t` up to rounding.
    pub min_diagonal_margin: f64,
    /// `min (lambda_k(q + r e_j) - lambda_k(q))` over single-site bumps.
    pub min_bump_margin: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Random instances: `u = (0, w)` with `w` uniform in `[-(2L+1), 2L+1]^d`,
/// shadow potential uniform on `[0, 1]`, one bump of size uniform on
/// `[0, 2]` at a uniformly chosen shadow site.
pub fn dm_sweep(
    d: usize,
    radius: u32,
    interaction: &InteractionSpec<f64>,
    shifts: &[f64],
    instances: u64,
    seed: u64,
    tolerance: f64,
) -> Result<DmSweep> {
    if instances == 0 {
        return Err(Error::ZeroTrials);
    }
    if d == 0 {
        return Err(Error::TooFewSites);
    }
    if let Some(&t) = shifts.iter().find(|&&t| !(t > 0.0)) {
        return Err(Error::OutOfRange {
            name: "shift",
            detail: format!("{t} must be positive"),
        });
    }
    let reach = 2 * radius as i64 + 1;
    let per_instance = (0..instances)
        .into_par_iter()
        .map(|i| {
            let mut rng = keyed_stream(seed, Domain::Parameters, i);
            let w: Vec<i64> = (0..d).map(|_| rng.random_range(-reach..=reach)).collect();
            let cube = TwoParticleCube::new(vec![0; d], w, radius)?;
            let sites = crate::lattice::shadow(&cube);
            let q: Vec<f64> = (0..sites.len()).map(|_| rng.random::<f64>()).collect();
            let j = rng.random_range(0..sites.len());
            let bump = 2.0 * rng.random::<f64>();
            let spectrum = |values: Vec<f64>| -> Result<Vec<f64>> {
                let pot = ShadowPotential::new(sites.clone(), values)?;
                let h = assemble_two_particle_with(&cube, &pot, interaction)?;
                Ok(eigenvalues_symmetric(&h)?.eigenvalues().to_vec())
            };
            let base = spectrum(q.clone())?;
            let (mut shift_err, mut diag) = (0.0f64, f64::INFINITY);
            for &t in shifts {
                let moved = spectrum(q.iter().map(|x| x + t).collect())?;
                for (a, b) in base.iter().zip(&moved) {
                    shift_err = shift_err.max((b - a - 2.0 * t).abs());
                    diag = diag.min(b - a - t);
                }
            }
            let mut bumped = q;
            bumped[j] += bump;
            let bumped = spectrum(bumped)?;
            let bump_margin = base.iter().zip(&bumped).map(|(a, b)| b - a).fold(f64::INFINITY, f64::min);
            Ok((shift_err, diag, bump_margin))
        })
        .collect::<Result<Vec<_>>>()?;
    let max_shift_error = per_instance.iter().map(|x| x.0).fold(0.0, f64::max);
    let min_diagonal_margin = per_instance.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
    let min_bump_margin = per_instance.iter().map(|x| x.2).fold(f64::INFINITY, f64::min);
    Ok(DmSweep {
        instances,
        shifts: shifts.to_vec(),
        max_shift_error,
        min_diagonal_margin,
        min_bump_margin,
        tolerance,
        pass: max_shift_error <= tolerance && min_bump_margin >= -DM_SLACK && min_diagonal_margin >= -DM_SLACK,
    })
}

/// One functional checked at several window widths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StollmannCase {
    pub label: String,
    pub arity: usize,
    /// Center of every window.
    pub center: f64,
    pub reports: Vec<StollmannReport>,
}

impl StollmannCase {
    pub fn pass(&self) -> bool {
        self.reports.iter().all(|r| r.pass)
    }
}

/// Checks `phi` on windows `[c - eps/2, c + eps/2]`; `center = None` uses
/// the sample median of `Phi`.
pub fn stollmann_case<F: MonotoneFunctional + ?Sized>(
    label: &str,
    phi: &F,
    center: Option<f64>,
    epsilons: &[f64],
    samples: u64,
    seed: u64,
) -> Result<StollmannCase> {
    let values = sample_functional(phi, samples, seed)?;
    let center = match center {
        Some(c) => c,
        None => {
            let mut sorted = values.clone();
            sorted.sort_by(f64::total_cmp);
            sorted[sorted.len() / 2]
        }
    };
    let reports = epsilons
        .iter()
        .map(|&e| stollmann_from_values(&values, phi.arity(), center - 0.5 * e, e))
        .collect::<Result<Vec<_>>>()?;
    Ok(StollmannCase {
        label: label.to_string(),
        arity: phi.arity(),
        center,
        reports,
    })
}

/// The standard battery: the mean of two parameters around `1/2`, and the
/// ground-state energy of `d = 1`, `L = 1` two-particle cubes
/// `u = (0, w)`, `w = 0..3` (shadows of 3 to 6 sites) around its median.
pub fn stollmann_suite(epsilons: &[f64], samples: u64, seed: u64) -> Result<Vec<StollmannCase>> {
    let mut cases = vec![stollmann_case("mean-of-two", &mean_functional(2), Some(0.5), epsilons, samples, seed)?];
    for w in 0..4i64 {
        let cube = TwoParticleCube::new(vec![0], vec![w], 1)?;
        let phi = EigenvalueFunctional::new(cube, InteractionSpec::default(), 0)?;
        let label = format!("ground-state u=(0,{w})");
        cases.push(stollmann_case(&label, &phi, None, epsilons, samples, seed)?);
    }
    Ok(cases)
}
