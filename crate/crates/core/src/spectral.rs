//! Dense symmetric eigensolver and spectrum queries.
//!
//! Householder reduction to tridiagonal form followed by the implicit QL
//! iteration (EISPACK `tred2`/`tql2`). Eigenvectors are accumulated only
//! when requested.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::HamiltonianMatrix;
use crate::scalar::Real;

/// QL sweeps allowed per eigenvalue before giving up.
const MAX_SWEEPS: usize = 60;

/// Eigenvalues in nondecreasing order, with multiplicity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum<T> {
    eigenvalues: Vec<T>,
}

impl<T: Real> Spectrum<T> {
    pub fn new(mut eigenvalues: Vec<T>) -> Self {
        eigenvalues.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        Self { eigenvalues }
    }

    pub fn eigenvalues(&self) -> &[T] {
        &self.eigenvalues
    }

    pub fn dimension(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn min(&self) -> Option<T> {
        self.eigenvalues.first().copied()
    }

    pub fn max(&self) -> Option<T> {
        self.eigenvalues.last().copied()
    }

    /// `dist(Sigma, E) = min_j |lambda_j - E|`.
    pub fn dist_to_energy(&self, energy: T) -> Result<T> {
        if self.eigenvalues.is_empty() {
            return Err(Error::EmptySpectrum);
        }
        let idx = self.eigenvalues.partition_point(|&l| l < energy);
        let above = self.eigenvalues.get(idx).map(|&l| l - energy);
        let below = idx.checked_sub(1).map(|i| energy - self.eigenvalues[i]);
        Ok(match (below, above) {
            (Some(b), Some(a)) => a.min(b),
            (Some(b), None) => b,
            (None, Some(a)) => a,
            (None, None) => unreachable!(),
        })
    }

    /// `dist(Sigma, Sigma') = min_{i,j} |lambda_i - mu_j|`, by merging.
    pub fn dist_to(&self, other: &Self) -> Result<T> {
        let (a, b) = (&self.eigenvalues, &other.eigenvalues);
        if a.is_empty() || b.is_empty() {
            return Err(Error::EmptySpectrum);
        }
        let (mut i, mut j) = (0, 0);
        let mut best = T::infinity();
        while i < a.len() && j < b.len() {
            best = best.min((a[i] - b[j]).abs());
            if a[i] < b[j] {
                i += 1;
            } else {
                j += 1;
            }
        }
        Ok(best)
    }

    /// `card{j : lambda_j <= E}`.
    pub fn count_below(&self, energy: T) -> usize {
        self.eigenvalues.partition_point(|&l| l <= energy)
    }

    /// Finite-volume integrated density of states, `count_below / dim`.
    pub fn ids_estimate(&self, energy: T) -> T {
        if self.eigenvalues.is_empty() {
            return T::zero();
        }
        T::of_usize(self.count_below(energy)) / T::of_usize(self.dimension())
    }
}

/// Free-function forms matching the spectrum queries.
pub fn dist_to_energy<T: Real>(s: &Spectrum<T>, energy: T) -> Result<T> {
    s.dist_to_energy(energy)
}

pub fn dist_between_spectra<T: Real>(a: &Spectrum<T>, b: &Spectrum<T>) -> Result<T> {
    a.dist_to(b)
}

pub fn count_below<T: Real>(s: &Spectrum<T>, energy: T) -> usize {
    s.count_below(energy)
}

pub fn ids_estimate<T: Real>(s: &Spectrum<T>, energy: T) -> T {
    s.ids_estimate(energy)
}

/// Full eigendecomposition; `vectors[j]` belongs to `spectrum[j]`.
#[derive(Debug, Clone)]
pub struct EigenDecomposition<T> {
    pub spectrum: Spectrum<T>,
    pub vectors: Vec<Vec<T>>,
}

struct Workspace<T> {
    n: usize,
    /// Row-major working copy; holds eigenvectors (as columns) at the end.
    v: Vec<T>,
    d: Vec<T>,
    e: Vec<T>,
}

impl<T: Real> Workspace<T> {
    fn new(m: &HamiltonianMatrix<T>) -> Self {
        let n = m.dim();
        Self {
            n,
            v: m.entries().to_vec(),
            d: vec![T::zero(); n],
            e: vec![T::zero(); n],
        }
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> T {
        self.v[i * self.n + j]
    }

    #[inline]
    fn at_mut(&mut self, i: usize, j: usize) -> &mut T {
        &mut self.v[i * self.n + j]
    }

    /// Householder reduction; `d`, `e` receive the tridiagonal form.
    fn tridiagonalize(&mut self, want_vectors: bool) {
        let n = self.n;
        for j in 0..n {
            self.d[j] = self.at(n - 1, j);
        }

        for i in (1..n).rev() {
            let mut scale = T::zero();
            let mut h = T::zero();
            for k in 0..i {
                scale += self.d[k].abs();
            }
            if scale == T::zero() {
                self.e[i] = self.d[i - 1];
                for j in 0..i {
                    self.d[j] = self.at(i - 1, j);
                    *self.at_mut(i, j) = T::zero();
                    *self.at_mut(j, i) = T::zero();
                }
            } else {
                for k in 0..i {
                    self.d[k] /= scale;
                    h += self.d[k] * self.d[k];
                }
                let mut f = self.d[i - 1];
                let mut g = h.sqrt();
                if f > T::zero() {
                    g = -g;
                }
                self.e[i] = scale * g;
                h -= f * g;
                self.d[i - 1] = f - g;
                for j in 0..i {
                    self.e[j] = T::zero();
                }

                for j in 0..i {
                    f = self.d[j];
                    *self.at_mut(j, i) = f;
                    g = self.e[j] + self.at(j, j) * f;
                    for k in j + 1..i {
                        g += self.at(k, j) * self.d[k];
                        let vkj = self.at(k, j);
                        self.e[k] += vkj * f;
                    }
                    self.e[j] = g;
                }
                f = T::zero();
                for j in 0..i {
                    self.e[j] /= h;
                    f += self.e[j] * self.d[j];
                }
                let hh = f / (h + h);
                for j in 0..i {
                    self.e[j] -= hh * self.d[j];
                }
                for j in 0..i {
                    f = self.d[j];
                    g = self.e[j];
                    for k in j..i {
                        let upd = f * self.e[k] + g * self.d[k];
                        *self.at_mut(k, j) -= upd;
                    }
                    self.d[j] = self.at(i - 1, j);
                    *self.at_mut(i, j) = T::zero();
                }
            }
            self.d[i] = h;
        }

        if !want_vectors {
            for j in 0..n {
                self.d[j] = self.at(j, j);
            }
            self.e[0] = T::zero();
            return;
        }

        for i in 0..n.saturating_sub(1) {
            let diag = self.at(i, i);
            *self.at_mut(n - 1, i) = diag;
            *self.at_mut(i, i) = T::one();
            let h = self.d[i + 1];
            if h != T::zero() {
                for k in 0..=i {
                    self.d[k] = self.at(k, i + 1) / h;
                }
                for j in 0..=i {
                    let mut g = T::zero();
                    for k in 0..=i {
                        g += self.at(k, i + 1) * self.at(k, j);
                    }
                    for k in 0..=i {
                        let upd = g * self.d[k];
                        *self.at_mut(k, j) -= upd;
                    }
                }
            }
            for k in 0..=i {
                *self.at_mut(k, i + 1) = T::zero();
            }
        }
        for j in 0..n {
            self.d[j] = self.at(n - 1, j);
            *self.at_mut(n - 1, j) = T::zero();
        }
        *self.at_mut(n - 1, n - 1) = T::one();
        self.e[0] = T::zero();
    }

    /// Implicit QL on the tridiagonal form.
    fn diagonalize(&mut self, want_vectors: bool) -> Result<()> {
        let n = self.n;
        for i in 1..n {
            self.e[i - 1] = self.e[i];
        }
        self.e[n - 1] = T::zero();

        let two = T::of(2.0);
        let eps = T::epsilon();
        let mut f = T::zero();
        let mut tst1 = T::zero();
        for l in 0..n {
            tst1 = tst1.max(self.d[l].abs() + self.e[l].abs());
            let mut m = l;
            while m < n {
                if self.e[m].abs() <= eps * tst1 {
                    break;
                }
                m += 1;
            }

            if m > l {
                let mut sweeps = 0;
                loop {
                    sweeps += 1;
                    if sweeps > MAX_SWEEPS {
                        return Err(Error::NoConvergence {
                            index: l,
                            iterations: MAX_SWEEPS,
                        });
                    }
                    let mut g = self.d[l];
                    let mut p = (self.d[l + 1] - g) / (two * self.e[l]);
                    let mut r = p.hypot(T::one());
                    if p < T::zero() {
                        r = -r;
                    }
                    self.d[l] = self.e[l] / (p + r);
                    self.d[l + 1] = self.e[l] * (p + r);
                    let dl1 = self.d[l + 1];
                    let mut h = g - self.d[l];
                    for i in l + 2..n {
                        self.d[i] -= h;
                    }
                    f += h;

                    p = self.d[m];
                    let mut c = T::one();
                    let mut c2 = c;
                    let mut c3 = c;
                    let el1 = self.e[l + 1];
                    let mut s = T::zero();
                    let mut s2 = T::zero();
                    for i in (l..m).rev() {
                        c3 = c2;
                        c2 = c;
                        s2 = s;
                        g = c * self.e[i];
                        h = c * p;
                        r = p.hypot(self.e[i]);
                        self.e[i + 1] = s * r;
                        s = self.e[i] / r;
                        c = p / r;
                        p = c * self.d[i] - s * g;
                        self.d[i + 1] = h + s * (c * g + s * self.d[i]);
                        if want_vectors {
                            for k in 0..n {
                                let hk = self.at(k, i + 1);
                                let vk = self.at(k, i);
                                *self.at_mut(k, i + 1) = s * vk + c * hk;
                                *self.at_mut(k, i) = c * vk - s * hk;
                            }
                        }
                    }
                    p = -s * s2 * c3 * el1 * self.e[l] / dl1;
                    self.e[l] = s * p;
                    self.d[l] = c * p;
                    if self.e[l].abs() <= eps * tst1 {
                        break;
                    }
                }
            }
            self.d[l] += f;
            self.e[l] = T::zero();
        }
        Ok(())
    }
}

/// All eigenvalues of a symmetric matrix.
pub fn eigenvalues_symmetric<T: Real>(m: &HamiltonianMatrix<T>) -> Result<Spectrum<T>> {
    if m.dim() == 0 {
        return Err(Error::EmptySpectrum);
    }
    let mut ws = Workspace::new(m);
    ws.tridiagonalize(false);
    ws.diagonalize(false)?;
    Ok(Spectrum::new(ws.d))
}

/// Eigenvalues and orthonormal eigenvectors.
pub fn eigen_decomposition<T: Real>(m: &HamiltonianMatrix<T>) -> Result<EigenDecomposition<T>> {
    if m.dim() == 0 {
        return Err(Error::EmptySpectrum);
    }
    let n = m.dim();
    let mut ws = Workspace::new(m);
    ws.tridiagonalize(true);
    ws.diagonalize(true)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| ws.d[a].partial_cmp(&ws.d[b]).unwrap_or(std::cmp::Ordering::Equal));
    let vectors = order
        .iter()
        .map(|&j| (0..n).map(|k| ws.at(k, j)).collect())
        .collect();
    let values = order.iter().map(|&j| ws.d[j]).collect();
    Ok(EigenDecomposition {
        spectrum: Spectrum { eigenvalues: values },
        vectors,
    })
}

/// Residual and trace diagnostics of a decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenCheck {
    /// `max_j |M v_j - lambda_j v_j|_2`.
    pub max_residual: f64,
    /// `|sum lambda_j - tr M|`.
    pub trace_error: f64,
    pub residual_tolerance: f64,
    pub trace_tolerance: f64,
}

impl EigenCheck {
    pub fn passed(&self) -> bool {
        self.max_residual <= self.residual_tolerance && self.trace_error <= self.trace_tolerance
    }
}

/// Relative residual tolerance: `1e-10` in double precision.
fn residual_scale<T: Real>() -> f64 {
    (T::epsilon().to_f64_lossy() * 1e3).max(1e-10)
}

pub fn check_decomposition<T: Real>(m: &HamiltonianMatrix<T>, dec: &EigenDecomposition<T>) -> EigenCheck {
    let mut max_residual = 0.0f64;
    for (v, &lambda) in dec.vectors.iter().zip(dec.spectrum.eigenvalues()) {
        let mv = m.apply(v);
        let r: f64 = mv
            .iter()
            .zip(v)
            .map(|(&a, &b)| (a - lambda * b).to_f64_lossy().powi(2))
            .sum::<f64>()
            .sqrt();
        max_residual = max_residual.max(r);
    }
    let sum: T = dec.spectrum.eigenvalues().iter().copied().sum();
    let scale = residual_scale::<T>();
    EigenCheck {
        max_residual,
        trace_error: (sum - m.trace()).abs().to_f64_lossy(),
        residual_tolerance: scale * (1.0 + m.norm_inf().to_f64_lossy()),
        trace_tolerance: scale * 10.0 * m.dim() as f64,
    }
}

/// Eigenvalues with residual and trace verification; fails loudly.
pub fn eigenvalues_verified<T: Real>(m: &HamiltonianMatrix<T>) -> Result<Spectrum<T>> {
    let dec = eigen_decomposition(m)?;
    let check = check_decomposition(m, &dec);
    if check.max_residual > check.residual_tolerance {
        return Err(Error::ResidualCheck {
            residual: check.max_residual,
            tolerance: check.residual_tolerance,
        });
    }
    if check.trace_error > check.trace_tolerance {
        return Err(Error::ResidualCheck {
            residual: check.trace_error,
            tolerance: check.trace_tolerance,
        });
    }
    Ok(dec.spectrum)
}

/// Solver entry point used by the experiments.
pub fn solve<T: Real>(m: &HamiltonianMatrix<T>, verify: bool) -> Result<Spectrum<T>> {
    if verify {
        eigenvalues_verified(m)
    } else {
        eigenvalues_symmetric(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn path(m: usize) -> HamiltonianMatrix<f64> {
        let mut e = vec![0.0; m * m];
        for i in 0..m - 1 {
            e[i * m + i + 1] = 1.0;
            e[(i + 1) * m + i] = 1.0;
        }
        HamiltonianMatrix::from_row_major(m, e).unwrap()
    }

    #[test]
    fn diagonal_matrix() {
        let m = HamiltonianMatrix::from_diagonal(&[3.0, 1.0, 2.0]);
        assert_eq!(eigenvalues_symmetric(&m).unwrap().eigenvalues(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn path_three() {
        let s = eigenvalues_symmetric(&path(3)).unwrap();
        let r2 = 2f64.sqrt();
        for (a, b) in s.eigenvalues().iter().zip([-r2, 0.0, r2]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn one_by_one_and_empty() {
        let m = HamiltonianMatrix::from_diagonal(&[-4.5]);
        assert_eq!(eigenvalues_symmetric(&m).unwrap().eigenvalues(), &[-4.5]);
        assert_eq!(eigen_decomposition(&m).unwrap().vectors, vec![vec![1.0]]);
        assert_eq!(eigenvalues_symmetric(&HamiltonianMatrix::<f64>::zeros(0)), Err(Error::EmptySpectrum));
    }

    #[test]
    fn decomposition_is_orthonormal() {
        let m = path(12).shifted(0.5);
        let dec = eigen_decomposition(&m).unwrap();
        for (i, a) in dec.vectors.iter().enumerate() {
            for (j, b) in dec.vectors.iter().enumerate() {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                assert_abs_diff_eq!(dot, if i == j { 1.0 } else { 0.0 }, epsilon = 1e-12);
            }
        }
        assert!(check_decomposition(&m, &dec).passed());
        let plain = eigenvalues_symmetric(&m).unwrap();
        for (a, b) in plain.eigenvalues().iter().zip(dec.spectrum.eigenvalues()) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
        }
    }

    #[test]
    fn single_precision_path() {
        let mut e = vec![0.0f32; 25];
        for i in 0..4 {
            e[i * 5 + i + 1] = 1.0;
            e[(i + 1) * 5 + i] = 1.0;
        }
        let m = HamiltonianMatrix::from_row_major(5, e).unwrap();
        let s = eigenvalues_verified(&m).unwrap();
        for (j, &l) in s.eigenvalues().iter().enumerate() {
            let exact = 2.0 * (std::f32::consts::PI * (5 - j) as f32 / 6.0).cos();
            assert!((l - exact).abs() < 1e-5, "{l} vs {exact}");
        }
    }

    #[test]
    fn dist_examples() {
        let s = |v: Vec<f64>| Spectrum::new(v);
        assert_eq!(s(vec![1.0, 3.0]).dist_to_energy(2.0).unwrap(), 1.0);
        assert_eq!(s(vec![1.0, 3.0]).dist_to_energy(3.0).unwrap(), 0.0);
        assert_eq!(s(vec![-1.0, 0.0, 1.0]).dist_to_energy(10.0).unwrap(), 9.0);
        assert_eq!(s(vec![-1.0, 0.0, 1.0]).dist_to_energy(-10.0).unwrap(), 9.0);
        assert_eq!(s(vec![]).dist_to_energy(0.0), Err(Error::EmptySpectrum));

        assert_eq!(s(vec![0.0, 2.0]).dist_to(&s(vec![5.0, 9.0])).unwrap(), 3.0);
        assert_eq!(s(vec![0.5, 2.0]).dist_to(&s(vec![0.5, 2.0])).unwrap(), 0.0);
        assert_eq!(s(vec![0.0]).dist_to(&s(vec![-0.25, 0.75])).unwrap(), 0.25);
        assert!(s(vec![0.0]).dist_to(&s(vec![])).is_err());
    }

    #[test]
    fn counting_examples() {
        let s = Spectrum::new(vec![-1.0, 0.0, 1.0]);
        assert_eq!(s.count_below(0.0), 2);
        assert_abs_diff_eq!(s.ids_estimate(0.0), 2.0 / 3.0);
        assert_eq!(s.count_below(-5.0), 0);
        assert_eq!(s.count_below(5.0), 3);
        assert_eq!(s.ids_estimate(f64::INFINITY), 1.0);
    }
}
