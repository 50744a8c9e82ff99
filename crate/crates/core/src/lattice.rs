//! Finite-volume tight-binding Hamiltonians with Dirichlet conditions.
//!
//! One particle: `H = Delta + V` on `Lambda_L(u)`. Two particles:
//! `H = Delta_1 + Delta_2 + V(x_1) + V(x_2) + U(x_1, x_2)` on
//! `Lambda_L(u_1) x Lambda_L(u_2)`. `Delta` is pure nearest-neighbour
//! hopping with unit amplitude, `(Delta f)(x) = sum_{|y-x|=1} f(y)`; hops
//! that leave the box are dropped.
//!
//! The external potential only lives on the shadow `Lambda_L(u_1) u
//! Lambda_L(u_2)` and is evaluated once per shadow site.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::randelette::{RandeletteField, ThetaSource};
use crate::scalar::Real;
use crate::torus::{LatticeCube, ShiftAction, TorusPoint};

/// A lattice site of `Z^d`.
pub type Site = Vec<i64>;

/// Center of a two-particle cube, `(u_1, u_2)`.
pub type SitePair = (Site, Site);

/// `Lambda_L(u_1) x Lambda_L(u_2)` in `Z^{2d}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TwoParticleCube {
    pub center: SitePair,
    pub radius: u32,
}

impl TwoParticleCube {
    pub fn new(u1: impl Into<Site>, u2: impl Into<Site>, radius: u32) -> Result<Self> {
        let (u1, u2) = (u1.into(), u2.into());
        if u1.len() != u2.len() {
            return Err(Error::DimensionMismatch {
                expected: u1.len(),
                got: u2.len(),
            });
        }
        Ok(Self {
            center: (u1, u2),
            radius,
        })
    }

    pub fn d(&self) -> usize {
        self.center.0.len()
    }

    pub fn particle_cubes(&self) -> (LatticeCube, LatticeCube) {
        (
            LatticeCube::new(self.center.0.clone(), self.radius),
            LatticeCube::new(self.center.1.clone(), self.radius),
        )
    }

    /// `(2L+1)^{2d}`.
    pub fn len(&self) -> usize {
        let (a, b) = self.particle_cubes();
        a.len() * b.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Configurations `(x_1, x_2)` in row order.
    pub fn sites(&self) -> Vec<SitePair> {
        let (a, b) = self.particle_cubes();
        let bs = b.sites();
        a.sites()
            .into_iter()
            .flat_map(|x1| bs.iter().map(move |x2| (x1.clone(), x2.clone())))
            .collect()
    }

    pub fn exchanged(&self) -> Self {
        Self {
            center: exchange(&self.center),
            radius: self.radius,
        }
    }
}

/// Particle exchange `S(u_1, u_2) = (u_2, u_1)`.
pub fn exchange(u: &SitePair) -> SitePair {
    (u.1.clone(), u.0.clone())
}

/// The total shadow `Lambda_L(u_1) u Lambda_L(u_2)`, sorted.
pub fn shadow(cube: &TwoParticleCube) -> Vec<Site> {
    let (a, b) = cube.particle_cubes();
    let set: BTreeSet<Site> = a.sites().into_iter().chain(b.sites()).collect();
    set.into_iter().collect()
}

/// Sorted union of the shadows of several cubes.
pub fn joint_shadow<'a>(cubes: impl IntoIterator<Item = &'a TwoParticleCube>) -> Vec<Site> {
    let set: BTreeSet<Site> = cubes.into_iter().flat_map(shadow).collect();
    set.into_iter().collect()
}

/// Norm on `Z^{2d}` used by the separation condition.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    #[default]
    Max,
    Euclidean,
}

impl Norm {
    pub fn pair_distance(self, a: &SitePair, b: &SitePair) -> f64 {
        let diffs = a
            .0
            .iter()
            .zip(&b.0)
            .chain(a.1.iter().zip(&b.1))
            .map(|(x, y)| (x - y).unsigned_abs() as f64);
        match self {
            Norm::Max => diffs.fold(0.0, f64::max),
            Norm::Euclidean => diffs.map(|v| v * v).sum::<f64>().sqrt(),
        }
    }
}

/// `min(|u_A - u_B|, |u_A - S(u_B)|) > 8L`.
pub fn separation_ok(ua: &SitePair, ub: &SitePair, radius: u32, norm: Norm) -> bool {
    let direct = norm.pair_distance(ua, ub);
    let swapped = norm.pair_distance(ua, &exchange(ub));
    direct.min(swapped) > 8.0 * radius as f64
}

/// `U(x_1, x_2) = u_0` when `|x_1 - x_2|_inf <= r_0`, else zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InteractionSpec<T> {
    pub strength: T,
    pub range: u32,
}

impl<T: Real> Default for InteractionSpec<T> {
    fn default() -> Self {
        Self {
            strength: T::one(),
            range: 1,
        }
    }
}

impl<T: Real> InteractionSpec<T> {
    pub fn none() -> Self {
        Self {
            strength: T::zero(),
            range: 0,
        }
    }

    pub fn value(&self, x1: &[i64], x2: &[i64]) -> T {
        let dist = x1
            .iter()
            .zip(x2)
            .map(|(a, b)| (a - b).unsigned_abs())
            .max()
            .unwrap_or(0);
        if dist <= self.range as u64 {
            self.strength
        } else {
            T::zero()
        }
    }
}

/// Dense real symmetric matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianMatrix<T> {
    dim: usize,
    entries: Vec<T>,
}

impl<T: Real> HamiltonianMatrix<T> {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            entries: vec![T::zero(); dim * dim],
        }
    }

    /// Rejects input that is not exactly symmetric.
    pub fn from_row_major(dim: usize, entries: Vec<T>) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: entries.len(),
            });
        }
        for i in 0..dim {
            for j in i + 1..dim {
                if entries[i * dim + j] != entries[j * dim + i] {
                    return Err(Error::NotSymmetric { row: i, col: j });
                }
            }
        }
        Ok(Self { dim, entries })
    }

    pub fn from_diagonal(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m.entries[i * diag.len() + i] = v;
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.entries[i * self.dim + j]
    }

    pub fn entries(&self) -> &[T] {
        &self.entries
    }

    #[inline]
    fn set_pair(&mut self, i: usize, j: usize, v: T) {
        self.entries[i * self.dim + j] = v;
        self.entries[j * self.dim + i] = v;
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn trace(&self) -> T {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    /// Max absolute row sum.
    pub fn norm_inf(&self) -> T {
        self.entries
            .chunks(self.dim.max(1))
            .map(|row| row.iter().map(|v| v.abs()).sum::<T>())
            .fold(T::zero(), T::max)
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.dim).all(|i| (i + 1..self.dim).all(|j| self.get(i, j) == self.get(j, i)))
    }

    /// `self + c I`.
    pub fn shifted(&self, c: T) -> Self {
        let mut m = self.clone();
        for i in 0..self.dim {
            m.entries[i * self.dim + i] += c;
        }
        m
    }

    /// Entrywise sum; both must have the same dimension.
    pub fn plus(&self, other: &Self) -> Result<Self> {
        if other.dim != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        let entries = self.entries.iter().zip(&other.entries).map(|(&a, &b)| a + b).collect();
        Ok(Self {
            dim: self.dim,
            entries,
        })
    }

    /// `P^T M P` for the permutation sending row `i` to `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut m = Self::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                m.entries[perm[i] * self.dim + perm[j]] = self.get(i, j);
            }
        }
        m
    }

    /// `y = M x`.
    pub fn apply(&self, x: &[T]) -> Vec<T> {
        self.entries
            .chunks(self.dim.max(1))
            .map(|row| row.iter().zip(x).map(|(&a, &b)| a * b).sum())
            .collect()
    }

    /// Dense text dump: first line `dim`, then one row per line with
    /// space-separated entries in `{:e}` notation.
    pub fn to_text(&self) -> String {
        let mut out = format!("{}\n", self.dim);
        for row in self.entries.chunks(self.dim.max(1)) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
        out
    }
}

/// Local hopping structure of a lattice cube: for each site, the indices of
/// its neighbours inside the cube with a larger index.
fn forward_neighbours(cube: &LatticeCube) -> Vec<Vec<usize>> {
    let d = cube.d();
    let side = cube.side();
    let strides: Vec<usize> = (0..d).map(|j| side.pow((d - 1 - j) as u32)).collect();
    (0..cube.len())
        .map(|i| {
            strides
                .iter()
                .filter(|&&stride| (i / stride) % side + 1 < side)
                .map(|&stride| i + stride)
                .collect()
        })
        .collect()
}

/// One-particle Hamiltonian with diagonal `values` in [`LatticeCube::sites`]
/// order.
pub fn assemble_one_particle_values<T: Real>(cube: &LatticeCube, values: &[T]) -> Result<HamiltonianMatrix<T>> {
    if values.len() != cube.len() {
        return Err(Error::DimensionMismatch {
            expected: cube.len(),
            got: values.len(),
        });
    }
    let mut m = HamiltonianMatrix::from_diagonal(values);
    for (i, nbrs) in forward_neighbours(cube).into_iter().enumerate() {
        for j in nbrs {
            m.set_pair(i, j, T::one());
        }
    }
    Ok(m)
}

/// `H = Delta + V` on `cube`, reading `V` from a site map.
pub fn assemble_one_particle<T: Real>(
    cube: &LatticeCube,
    potential_values: &HashMap<Site, T>,
) -> Result<HamiltonianMatrix<T>> {
    let values = cube
        .sites()
        .into_iter()
        .map(|s| potential_values.get(&s).copied().ok_or(Error::MissingPotential(s)))
        .collect::<Result<Vec<T>>>()?;
    assemble_one_particle_values(cube, &values)
}

/// Potential values on a sorted list of one-particle sites.
#[derive(Debug, Clone, PartialEq)]
pub struct ShadowPotential<T> {
    sites: Vec<Site>,
    values: Vec<T>,
}

impl<T: Real> ShadowPotential<T> {
    /// `sites` must be sorted and free of duplicates (as returned by
    /// [`shadow`]).
    pub fn new(sites: Vec<Site>, values: Vec<T>) -> Result<Self> {
        if sites.len() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: sites.len(),
                got: values.len(),
            });
        }
        debug_assert!(sites.windows(2).all(|w| w[0] < w[1]));
        Ok(Self { sites, values })
    }

    pub fn from_fn(sites: Vec<Site>, mut f: impl FnMut(&[i64]) -> Result<T>) -> Result<Self> {
        let values = sites.iter().map(|s| f(s)).collect::<Result<Vec<T>>>()?;
        Ok(Self { sites, values })
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn get(&self, x: &[i64]) -> Option<T> {
        self.sites
            .binary_search_by(|s| s.as_slice().cmp(x))
            .ok()
            .map(|i| self.values[i])
    }

    fn lookup(&self, cube: &LatticeCube) -> Result<Vec<T>> {
        cube.sites()
            .into_iter()
            .map(|s| self.get(&s).ok_or(Error::MissingPotential(s)))
            .collect()
    }
}

/// Two-particle Hamiltonian from precomputed shadow potential values.
///
/// Row `i_1 * |Lambda(u_2)| + i_2` is the configuration `(x_1, x_2)` with
/// `x_j` the `i_j`-th site of its cube in lexicographic order.
pub fn assemble_two_particle_with<T: Real>(
    cube: &TwoParticleCube,
    potential: &ShadowPotential<T>,
    interaction: &InteractionSpec<T>,
) -> Result<HamiltonianMatrix<T>> {
    let (c1, c2) = cube.particle_cubes();
    let (v1, v2) = (potential.lookup(&c1)?, potential.lookup(&c2)?);
    let (s1, s2) = (c1.sites(), c2.sites());
    let n2 = c2.len();
    let mut m = HamiltonianMatrix::zeros(c1.len() * n2);

    for (i1, x1) in s1.iter().enumerate() {
        for (i2, x2) in s2.iter().enumerate() {
            let row = i1 * n2 + i2;
            m.entries[row * m.dim + row] = v1[i1] + v2[i2] + interaction.value(x1, x2);
        }
    }
    let (h1, h2) = (forward_neighbours(&c1), forward_neighbours(&c2));
    for i1 in 0..c1.len() {
        for i2 in 0..n2 {
            let row = i1 * n2 + i2;
            for &j1 in &h1[i1] {
                m.set_pair(row, j1 * n2 + i2, T::one());
            }
            for &j2 in &h2[i2] {
                m.set_pair(row, i1 * n2 + j2, T::one());
            }
        }
    }
    Ok(m)
}

/// Grand-ensemble potential `V(x; omega; theta)` on the shadow of `cube`.
pub fn shadow_potential<T: Real, S: ThetaSource>(
    sites: Vec<Site>,
    field: &RandeletteField<T, S>,
    action: &ShiftAction<T>,
    omega: &TorusPoint<T>,
) -> Result<ShadowPotential<T>> {
    ShadowPotential::from_fn(sites, |x| crate::randelette::potential(field, action, omega, x))
}

/// `H(omega; theta)` restricted to `cube` with Dirichlet conditions.
pub fn assemble_two_particle<T: Real, S: ThetaSource>(
    cube: &TwoParticleCube,
    field: &RandeletteField<T, S>,
    action: &ShiftAction<T>,
    omega: &TorusPoint<T>,
    interaction: &InteractionSpec<T>,
) -> Result<HamiltonianMatrix<T>> {
    if cube.d() != action.d() {
        return Err(Error::DimensionMismatch {
            expected: action.d(),
            got: cube.d(),
        });
    }
    let potential = shadow_potential(shadow(cube), field, action, omega)?;
    assemble_two_particle_with(cube, &potential, interaction)
}
