//! The torus `T^nu = R^nu / Z^nu`, its `Z^d` translation action, dyadic
//! partitions and the spacing of finite orbits.
//!
//! Metric: max-norm of the per-coordinate circular distance, so every
//! distance lies in `[0, 1/2]` and a dyadic cube of level `n` has diameter
//! `2^-n`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::Site;
use crate::scalar::Real;

/// Largest `nu * n` for which the flat dyadic index fits in a `u64`.
pub const MAX_INDEX_BITS: u32 = 63;

#[inline]
fn frac<T: Real>(x: T) -> T {
    let f = x - x.floor();
    // x slightly below an integer can round up to exactly 1.
    if f >= T::one() || f == T::zero() {
        T::zero()
    } else {
        f
    }
}

/// A point of `T^nu`; coordinates are kept in `[0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorusPoint<T> {
    coords: Vec<T>,
}

impl<T: Real> TorusPoint<T> {
    /// Reduces every coordinate mod 1.
    pub fn new(coords: impl Into<Vec<T>>) -> Self {
        let coords = coords.into().into_iter().map(frac).collect();
        Self { coords }
    }

    pub fn origin(nu: usize) -> Self {
        Self {
            coords: vec![T::zero(); nu],
        }
    }

    pub fn nu(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[T] {
        &self.coords
    }
}

/// Circular max-norm distance on the torus.
pub fn torus_distance<T: Real>(a: &TorusPoint<T>, b: &TorusPoint<T>) -> Result<T> {
    if a.nu() != b.nu() {
        return Err(Error::DimensionMismatch {
            expected: a.nu(),
            got: b.nu(),
        });
    }
    Ok(a.coords
        .iter()
        .zip(&b.coords)
        .map(|(&x, &y)| {
            let diff = (x - y).abs();
            diff.min(T::one() - diff)
        })
        .fold(T::zero(), T::max))
}

/// The translation action `omega -> omega + A x mod 1` of `Z^d` on `T^nu`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftAction<T> {
    d: usize,
    nu: usize,
    /// Row-major `nu x d`.
    frequency: Vec<T>,
    /// Diophantine exponent `B` and constant, when known or estimated.
    pub diophantine_b: Option<T>,
    pub diophantine_c: Option<T>,
}

impl<T: Real> ShiftAction<T> {
    /// `frequency` is the `nu x d` matrix in row-major order.
    ///
    /// No arithmetic property of `A` is checked; whether the orbit is
    /// Diophantine is up to the caller (see [`fit_spacing_exponent`]).
    pub fn new(nu: usize, d: usize, frequency: Vec<T>) -> Result<Self> {
        if nu == 0 || d == 0 {
            return Err(Error::OutOfRange {
                name: "dimension",
                detail: format!("nu={nu}, d={d} must be positive"),
            });
        }
        if frequency.len() != nu * d {
            return Err(Error::DimensionMismatch {
                expected: nu * d,
                got: frequency.len(),
            });
        }
        Ok(Self {
            d,
            nu,
            frequency,
            diophantine_b: None,
            diophantine_c: None,
        })
    }

    /// Rotation of the circle by the golden mean `(sqrt 5 - 1)/2`.
    ///
    /// The golden mean is badly approximable, so the orbit spacing decays
    /// like `1/|x|` (exponent `B = 1`).
    pub fn golden() -> Self {
        let alpha = (T::of(5.0).sqrt() - T::one()) / T::of(2.0);
        let mut action = Self::new(1, 1, vec![alpha]).expect("1x1");
        action.diophantine_b = Some(T::one());
        action
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn nu(&self) -> usize {
        self.nu
    }

    pub fn frequency(&self) -> &[T] {
        &self.frequency
    }

    fn check_site(&self, x: &[i64]) -> Result<()> {
        if x.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// `T^x omega`.
    pub fn apply(&self, omega: &TorusPoint<T>, x: &[i64]) -> Result<TorusPoint<T>> {
        self.check_site(x)?;
        if omega.nu() != self.nu {
            return Err(Error::DimensionMismatch {
                expected: self.nu,
                got: omega.nu(),
            });
        }
        let coords = omega
            .coords
            .iter()
            .enumerate()
            .map(|(i, &w)| {
                let row = &self.frequency[i * self.d..(i + 1) * self.d];
                let shift = row
                    .iter()
                    .zip(x)
                    .fold(T::zero(), |acc, (&a, &xj)| acc + frac(a * T::of_i64(xj)));
                frac(w + shift)
            })
            .collect();
        Ok(TorusPoint { coords })
    }

    /// Scale of `|A x|` over the given sites; used for the coincidence test.
    fn shift_scale(&self, sites: &[Site]) -> T {
        let max_x = sites
            .iter()
            .flat_map(|s| s.iter())
            .map(|&c| c.unsigned_abs())
            .max()
            .unwrap_or(0);
        let row_max = (0..self.nu)
            .map(|i| {
                self.frequency[i * self.d..(i + 1) * self.d]
                    .iter()
                    .fold(T::zero(), |acc, a| acc + a.abs())
            })
            .fold(T::zero(), T::max);
        T::one() + row_max * T::of(max_x as f64)
    }
}

/// Free-function form of [`ShiftAction::apply`].
pub fn apply_shift<T: Real>(
    action: &ShiftAction<T>,
    omega: &TorusPoint<T>,
    x: &[i64],
) -> Result<TorusPoint<T>> {
    action.apply(omega, x)
}

/// `{T^x omega : x in sites}` in the order of `sites`.
pub fn trajectory<T: Real>(
    action: &ShiftAction<T>,
    omega: &TorusPoint<T>,
    sites: &[Site],
) -> Result<Vec<TorusPoint<T>>> {
    sites.iter().map(|x| action.apply(omega, x)).collect()
}

/// Minimal pairwise torus distance `delta` between points of the orbit of
/// `omega` over `sites`.
///
/// For `nu = 1` the orbit is sorted and adjacent circular gaps are
/// compared; otherwise all pairs are scanned.
pub fn orbit_spacing<T: Real>(
    action: &ShiftAction<T>,
    omega: &TorusPoint<T>,
    sites: &[Site],
) -> Result<T> {
    if sites.len() < 2 {
        return Err(Error::TooFewSites);
    }
    let points = trajectory(action, omega, sites)?;
    let tol = T::epsilon() * T::of(16.0) * action.shift_scale(sites);

    let (best, a, b) = if action.nu() == 1 {
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.sort_by(|&i, &j| {
            points[i].coords[0]
                .partial_cmp(&points[j].coords[0])
                .expect("finite coordinates")
        });
        let n = order.len();
        let mut best = (T::infinity(), 0, 0);
        for w in 0..n {
            let (i, j) = (order[w], order[(w + 1) % n]);
            let gap = torus_distance(&points[i], &points[j])?;
            if gap < best.0 {
                best = (gap, i, j);
            }
        }
        best
    } else {
        let mut best = (T::infinity(), 0, 0);
        for i in 0..points.len() {
            for j in i + 1..points.len() {
                let gap = torus_distance(&points[i], &points[j])?;
                if gap < best.0 {
                    best = (gap, i, j);
                }
            }
        }
        best
    };

    if best <= tol {
        return Err(Error::DegenerateOrbit {
            a: sites[a].clone(),
            b: sites[b].clone(),
        });
    }
    Ok(best)
}

/// `delta(Lambda_L(u), omega)`: minimal orbit spacing over a lattice cube.
pub fn min_spacing<T: Real>(
    action: &ShiftAction<T>,
    omega: &TorusPoint<T>,
    cube: &LatticeCube,
) -> Result<T> {
    if cube.center.len() != action.d() {
        return Err(Error::DimensionMismatch {
            expected: action.d(),
            got: cube.center.len(),
        });
    }
    orbit_spacing(action, omega, &cube.sites())
}

/// Smallest `n >= 1` with `2^-n < delta`.
///
/// Points at distance at least `delta` then fall in distinct cubes of the
/// level-`n` partition for every `n >= separation_level(delta)`.
pub fn separation_level<T: Real>(delta: T) -> Result<u32> {
    if !(delta > T::zero() && delta <= T::of(0.5)) {
        return Err(Error::OutOfRange {
            name: "delta",
            detail: format!("{delta} not in (0, 1/2]"),
        });
    }
    let half = T::of(0.5);
    let guess = (T::one() / delta).log2().floor().to_i64().unwrap_or(1).max(0) as i32 + 1;
    let mut n = guess.max(1);
    while half.powi(n) >= delta {
        n += 1;
    }
    while n > 1 && half.powi(n - 1) < delta {
        n -= 1;
    }
    Ok(n as u32)
}

/// Identifies the dyadic cube `C_{n,k} = I_{n,i_1} x ... x I_{n,i_nu}`.
///
/// `multi_index` entries are 1-based. The flat index is the mixed-radix
/// (radix `2^n`) encoding with the first coordinate most significant, plus
/// one: `k = 1 + sum_j (i_j - 1) 2^(n (nu - 1 - j))`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DyadicCubeIndex {
    pub level: u32,
    pub multi_index: Vec<u64>,
    pub flat_index: u64,
}

impl DyadicCubeIndex {
    /// Number of cubes `K_n = 2^(nu n)` at a level.
    pub fn cube_count(nu: usize, level: u32) -> Result<u64> {
        check_depth(nu, level)?;
        Ok(1u64 << (nu as u32 * level))
    }

    pub fn from_multi(level: u32, multi_index: Vec<u64>) -> Result<Self> {
        check_depth(multi_index.len(), level)?;
        let side = 1u64 << level;
        let mut flat = 0u64;
        for &i in &multi_index {
            if i == 0 || i > side {
                return Err(Error::CubeIndexOutOfRange {
                    level,
                    k: i,
                    max: side,
                });
            }
            flat = (flat << level) | (i - 1);
        }
        Ok(Self {
            level,
            multi_index,
            flat_index: flat + 1,
        })
    }

    pub fn from_flat(nu: usize, level: u32, flat_index: u64) -> Result<Self> {
        let max = Self::cube_count(nu, level)?;
        if flat_index == 0 || flat_index > max {
            return Err(Error::CubeIndexOutOfRange {
                level,
                k: flat_index,
                max,
            });
        }
        let mask = (1u64 << level) - 1;
        let mut rest = flat_index - 1;
        let mut multi_index = vec![0u64; nu];
        for slot in multi_index.iter_mut().rev() {
            *slot = (rest & mask) + 1;
            rest >>= level;
        }
        Ok(Self {
            level,
            multi_index,
            flat_index,
        })
    }
}

fn check_depth(nu: usize, level: u32) -> Result<()> {
    let max = MAX_INDEX_BITS / (nu.max(1) as u32);
    if level == 0 || level > max {
        return Err(Error::LevelTooDeep { level, max, nu });
    }
    Ok(())
}

/// The cube of the level-`n` partition containing `omega`.
///
/// Intervals are half open, `I_{n,i} = [(i-1)/2^n, i/2^n)`.
pub fn partition_index<T: Real>(n: u32, omega: &TorusPoint<T>) -> Result<DyadicCubeIndex> {
    check_depth(omega.nu(), n)?;
    let side = 1u64 << n;
    let scale = T::of(side as f64);
    let multi = omega
        .coords
        .iter()
        .map(|&w| {
            let i = (w * scale).floor().to_u64().unwrap_or(0);
            i.min(side - 1) + 1
        })
        .collect();
    DyadicCubeIndex::from_multi(n, multi)
}

/// Indicator `phi_{n,k}(omega)` of the cube `C_{n,k}`.
pub fn indicator<T: Real>(n: u32, k: u64, omega: &TorusPoint<T>) -> Result<bool> {
    let cube = DyadicCubeIndex::from_flat(omega.nu(), n, k)?;
    let side = T::of((1u64 << n) as f64);
    Ok(omega.coords.iter().zip(&cube.multi_index).all(|(&w, &i)| {
        let lo = T::of((i - 1) as f64) / side;
        let hi = T::of(i as f64) / side;
        w >= lo && w < hi
    }))
}

/// Finite lattice cube `Lambda_L(u) = {x : |x - u|_inf <= L}` in `Z^d`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatticeCube {
    pub center: Vec<i64>,
    pub radius: u32,
}

impl LatticeCube {
    pub fn new(center: impl Into<Vec<i64>>, radius: u32) -> Self {
        Self {
            center: center.into(),
            radius,
        }
    }

    pub fn d(&self) -> usize {
        self.center.len()
    }

    pub fn side(&self) -> usize {
        2 * self.radius as usize + 1
    }

    /// `(2L+1)^d`.
    pub fn len(&self) -> usize {
        self.side().pow(self.d() as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, x: &[i64]) -> bool {
        x.len() == self.d()
            && x
                .iter()
                .zip(&self.center)
                .all(|(a, c)| (a - c).unsigned_abs() <= self.radius as u64)
    }

    /// Sites in lexicographic order, first coordinate slowest.
    pub fn sites(&self) -> Vec<Site> {
        let d = self.d();
        let side = self.side();
        let r = self.radius as i64;
        (0..self.len())
            .map(|mut flat| {
                let mut site = vec![0i64; d];
                for j in (0..d).rev() {
                    site[j] = self.center[j] - r + (flat % side) as i64;
                    flat /= side;
                }
                site
            })
            .collect()
    }

    /// Position of `x` in [`LatticeCube::sites`], if inside.
    pub fn index_of(&self, x: &[i64]) -> Option<usize> {
        if !self.contains(x) {
            return None;
        }
        let side = self.side() as i64;
        let r = self.radius as i64;
        Some(
            x.iter()
                .zip(&self.center)
                .fold(0i64, |acc, (a, c)| acc * side + (a - c + r)) as usize,
        )
    }
}

/// Orbit spacings `delta_L` over `Lambda_L(0)` and the fitted Diophantine
/// exponent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpacingFit {
    /// `(L, delta_L)` rows.
    pub table: Vec<(u32, f64)>,
    /// `B` in `delta_L ~ C L^-B`.
    pub exponent_b: f64,
    /// `C` in `delta_L ~ C L^-B`.
    pub constant_c: f64,
    /// `min_L delta_L * L`.
    pub min_delta_times_l: f64,
}

/// Least-squares fit of `log delta_L` against `log L`.
pub fn fit_spacing_exponent<T: Real>(
    action: &ShiftAction<T>,
    omega: &TorusPoint<T>,
    radii: &[u32],
) -> Result<SpacingFit> {
    let usable: Vec<u32> = radii.iter().copied().filter(|&l| l >= 1).collect();
    if usable.len() < 2 {
        return Err(Error::TooFewPoints(usable.len()));
    }
    let mut table = Vec::with_capacity(usable.len());
    for &l in &usable {
        let cube = LatticeCube::new(vec![0; action.d()], l);
        let delta = min_spacing(action, omega, &cube)?.to_f64_lossy();
        table.push((l, delta));
    }
    let xs: Vec<f64> = table.iter().map(|&(l, _)| (l as f64).ln()).collect();
    let ys: Vec<f64> = table.iter().map(|&(_, d)| d.ln()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let min_delta_times_l = table
        .iter()
        .map(|&(l, d)| d * l as f64)
        .fold(f64::INFINITY, f64::min);
    Ok(SpacingFit {
        table,
        exponent_b: -slope,
        constant_c: (my - slope * mx).exp(),
        min_delta_times_l,
    })
}
