//! Monte Carlo estimates of eigenvalue-concentration probabilities.
//!
//! Five experiment modes share one engine: every sample `i` produces one
//! distance (spectrum to energy, or spectrum to spectrum), drawn from the
//! keyed stream `(seed, i)`. The distances are thresholded at every
//! `epsilon` of the grid afterwards, so the whole grid sees the same
//! samples and `p_hat` is exactly monotone in `epsilon`.
//!
//! * `Classical1p`: `Delta + V` on `Lambda_L(u)`, `V` IID uniform on
//!   `[0, 1]`. Bound `|Lambda| eps`.
//! * `Iid2pOneVolume` / `Iid2pTwoVolume`: two-particle cubes with an IID
//!   uniform potential on the shadow. Bounds `|Lambda|^{3/2} s(2 eps)` and
//!   `|Lambda|^{3/2} |Lambda'| s(2 eps)`.
//! * `QpOneVolume` / `QpTwoVolume`: the grand-ensemble potential at a fixed
//!   `theta`, with `omega` Haar-distributed on the torus. Only the shape of
//!   the bound (linear in `eps`) is testable; constants are fitted.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dm::uniform_s;
use crate::error::{Error, Result};
use crate::lattice::{
    assemble_one_particle_values, assemble_two_particle_with, exchange, joint_shadow, separation_ok,
    shadow_potential, InteractionSpec, Norm, ShadowPotential, Site, SitePair, TwoParticleCube,
};
use crate::randelette::{CoefficientSchedule, RandeletteField, ThetaSample};
use crate::rng::{keyed_units, Domain};
use crate::spectral::{solve, Spectrum};
use crate::stats::{fit_epsilon_slope, ConcentrationEstimate, SlopeFit};
use crate::torus::{min_spacing, separation_level, LatticeCube, ShiftAction, TorusPoint};

/// Acceptance window for the fitted `epsilon` exponent.
pub const SLOPE_WINDOW: (f64, f64) = (0.8, 1.2);

/// Levels kept beyond the separation level.
pub const SPLIT_MARGIN: u32 = 4;

/// Tail target used to pick a default truncation depth.
pub const DEFAULT_TAIL_TOLERANCE: f64 = 1e-8;

/// Pilot samples used by [`Energy::SpectralMedian`].
pub const PILOT_SAMPLES: u64 = 256;

/// Target energy of the one-volume modes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Energy {
    Fixed(f64),
    /// Median of all eigenvalues pooled over [`PILOT_SAMPLES`] samples from
    /// a stream disjoint from the measurement samples. Places `E` in the
    /// bulk of the spectrum, away from gaps of the fixed-`theta` ensemble.
    SpectralMedian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Classical1p,
    Iid2pOneVolume,
    Iid2pTwoVolume,
    QpOneVolume,
    QpTwoVolume,
}

impl Mode {
    pub fn is_two_volume(self) -> bool {
        matches!(self, Mode::Iid2pTwoVolume | Mode::QpTwoVolume)
    }

    pub fn is_quasi_periodic(self) -> bool {
        matches!(self, Mode::QpOneVolume | Mode::QpTwoVolume)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WegnerExperimentConfig {
    pub mode: Mode,
    pub radius: u32,
    /// `u = (u_1, u_2)`; one-particle mode uses `u_1` only.
    pub center: SitePair,
    /// Second cube `u''` for two-volume modes.
    pub center_b: Option<SitePair>,
    /// Enclosing scale exponent: `N = ceil(L^r)`.
    pub r: f64,
    /// Measure exponent; only enters the reported diagnostic bound.
    pub b: f64,
    pub energy: Energy,
    /// Ascending.
    pub epsilon_grid: Vec<f64>,
    pub samples: u64,
    /// Keys the per-sample streams (`omega` or IID potentials).
    pub seed: u64,
    /// Fixes the ensemble parameter `theta`.
    pub theta_seed: u64,
    pub action: ShiftAction<f64>,
    pub schedule: CoefficientSchedule<f64>,
    /// `None` picks the default depth.
    pub truncation: Option<u32>,
    pub interaction: InteractionSpec<f64>,
    pub norm: Norm,
    pub verify_eigen: bool,
    /// Skip the separation checks; only for demonstrating why they exist.
    pub force_unseparated: bool,
}

impl WegnerExperimentConfig {
    /// Defaults for `mode` with `d = nu = 1`, golden-mean rotation,
    /// `a_n = n^-2` and `U = 1{|x_1 - x_2| <= 1}`.
    pub fn new(mode: Mode) -> Self {
        Self {
            mode,
            radius: 2,
            center: (vec![0], vec![0]),
            center_b: None,
            r: 2.0,
            b: 1.0,
            energy: Energy::Fixed(0.0),
            epsilon_grid: vec![1e-3, 2e-3, 5e-3, 1e-2, 2e-2, 5e-2, 1e-1],
            samples: 10_000,
            seed: 1,
            theta_seed: 1,
            action: ShiftAction::golden(),
            schedule: CoefficientSchedule::power_law(1.0, 2.0).expect("valid schedule"),
            truncation: None,
            interaction: InteractionSpec::default(),
            norm: Norm::Max,
            verify_eigen: false,
            force_unseparated: false,
        }
    }

    pub fn d(&self) -> usize {
        self.center.0.len()
    }

    fn cube_a(&self) -> Result<TwoParticleCube> {
        TwoParticleCube::new(self.center.0.clone(), self.center.1.clone(), self.radius)
    }

    fn cube_b(&self) -> Result<Option<TwoParticleCube>> {
        self.center_b
            .as_ref()
            .map(|(u1, u2)| TwoParticleCube::new(u1.clone(), u2.clone(), self.radius))
            .transpose()
    }

    /// Checks every precondition and derives the sampling plan.
    pub fn validate(&self) -> Result<ExperimentPlan> {
        let bad = |m: String| Err(Error::Config(m));
        if self.samples == 0 {
            return bad("samples must be positive".into());
        }
        if self.epsilon_grid.is_empty() {
            return bad("epsilon_grid must not be empty".into());
        }
        if self.epsilon_grid.iter().any(|&e| !(e >= 0.0) || !e.is_finite()) {
            return bad("epsilon_grid entries must be finite and nonnegative".into());
        }
        if self.epsilon_grid.windows(2).any(|w| w[0] > w[1]) {
            return bad("epsilon_grid must be ascending".into());
        }
        if !(self.r > 1.0) {
            return bad(format!("enclosing scale requires r > 1, got r = {}", self.r));
        }
        if !(self.b > 0.0) {
            return bad(format!("measure exponent requires b > 0, got b = {}", self.b));
        }
        let d = self.d();
        if d == 0 || self.center.1.len() != d {
            return bad("center components must share a positive dimension".into());
        }
        if self.mode.is_two_volume() != self.center_b.is_some() {
            return bad(format!(
                "mode {:?} {} a second center",
                self.mode,
                if self.mode.is_two_volume() { "requires" } else { "does not take" }
            ));
        }
        if let Some(ub) = &self.center_b {
            if ub.0.len() != d || ub.1.len() != d {
                return bad("second center has the wrong dimension".into());
            }
        }
        self.schedule.validate()?;

        let cube_a = self.cube_a()?;
        let cube_b = self.cube_b()?;
        let l = self.radius as f64;
        let enclosing_radius = l.powf(self.r).ceil().max(1.0) as u64;

        if let (Some(ub), false) = (&self.center_b, self.force_unseparated) {
            if !separation_ok(&self.center, ub, self.radius, self.norm) {
                return bad(format!(
                    "separation condition violated: min(|u' - u''|, |u' - S(u'')|) must exceed 8L = {} \
                     (u' = {:?}, u'' = {:?}, S(u'') = {:?})",
                    8 * self.radius,
                    self.center,
                    ub,
                    exchange(ub)
                ));
            }
            if self.mode == Mode::QpTwoVolume {
                let dist = self.norm.pair_distance(&self.center, ub);
                if dist > l.powf(self.r) {
                    return bad(format!(
                        "cubes too far apart: |u' - u''| = {dist} exceeds L^r = {}",
                        l.powf(self.r)
                    ));
                }
            }
        }

        let cubes: Vec<&TwoParticleCube> = std::iter::once(&cube_a).chain(cube_b.as_ref()).collect();
        let shadow_sites: Vec<Site> = if self.mode == Mode::Classical1p {
            LatticeCube::new(self.center.0.clone(), self.radius).sites()
        } else {
            joint_shadow(cubes.iter().copied())
        };

        let mut plan = ExperimentPlan {
            shadow_sites,
            enclosing_center: Vec::new(),
            enclosing_radius,
            spacing: None,
            separation_level: None,
            truncation: None,
        };

        if self.mode.is_quasi_periodic() {
            if self.action.d() != d {
                return bad(format!(
                    "frequency matrix acts on Z^{} but centers live in Z^{d}",
                    self.action.d()
                ));
            }
            // Midpoint of the shadow's bounding box.
            let center: Vec<i64> = (0..d)
                .map(|j| {
                    let lo = plan.shadow_sites.iter().map(|s| s[j]).min().unwrap();
                    let hi = plan.shadow_sites.iter().map(|s| s[j]).max().unwrap();
                    (lo + hi).div_euclid(2)
                })
                .collect();
            let enclosing = LatticeCube::new(center.clone(), enclosing_radius as u32);
            if let Some(out) = plan.shadow_sites.iter().find(|s| !enclosing.contains(s)) {
                return bad(format!(
                    "shadow site {out:?} lies outside the enclosing cube Lambda_N(v), N = {enclosing_radius}, v = {center:?}"
                ));
            }
            let omega0 = TorusPoint::origin(self.action.nu());
            let delta = min_spacing(&self.action, &omega0, &enclosing)?;
            let n0 = separation_level(delta)?;
            let max = RandeletteField::<f64, ThetaSample>::max_truncation(self.action.nu());
            let truncation = match self.truncation {
                Some(t) => t,
                None => default_truncation(&self.schedule, self.action.nu(), n0),
            };
            if truncation < n0 + SPLIT_MARGIN {
                return bad(format!(
                    "truncation {truncation} must be at least separation level {n0} + {SPLIT_MARGIN}"
                ));
            }
            if truncation > max {
                return bad(format!("truncation {truncation} exceeds the resolvable depth {max}"));
            }
            plan.enclosing_center = center;
            plan.spacing = Some(delta);
            plan.separation_level = Some(n0);
            plan.truncation = Some(truncation);
        }
        Ok(plan)
    }
}

/// Deepest useful level: enough for the tail target, capped by what the
/// cube index and `f64` coordinates resolve, and never above the
/// separation level plus margin.
pub fn default_truncation(schedule: &CoefficientSchedule<f64>, nu: usize, n0: u32) -> u32 {
    let max = RandeletteField::<f64, ThetaSample>::max_truncation(nu);
    let tail_depth = schedule.depth_for_tail(DEFAULT_TAIL_TOLERANCE).min(max as u64) as u32;
    tail_depth.max(n0 + SPLIT_MARGIN).min(max)
}

/// Derived quantities of a validated configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    /// Sites carrying the external potential (the cube itself for the
    /// one-particle mode).
    pub shadow_sites: Vec<Site>,
    pub enclosing_center: Vec<i64>,
    pub enclosing_radius: u64,
    pub spacing: Option<f64>,
    pub separation_level: Option<u32>,
    pub truncation: Option<u32>,
}

/// Fixed-`theta` quantities reported by the quasi-periodic modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpDiagnostics {
    pub enclosing_radius: u64,
    pub spacing: f64,
    pub separation_level: u32,
    pub truncation: u32,
    pub coefficient_at_split: f64,
    pub conditional_density_bound: f64,
    pub truncation_error_bound: f64,
    /// `C` such that `p_hat <= C ln^M N L^{kd} eps` on the grid.
    pub fitted_constant_log_form: f64,
    /// `C` such that `p_hat <= C L^{M + b + kd + r} eps` on the grid.
    pub fitted_constant_power_form: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub mode: Mode,
    /// Target energy actually used (one-volume modes).
    pub energy: Option<f64>,
    pub estimates: Vec<ConcentrationEstimate>,
    /// Bound at each grid point: the theoretical bound for the IID modes,
    /// the fitted diagnostic bound for the quasi-periodic ones.
    pub bounds: Vec<f64>,
    pub monotone: bool,
    pub slope: Option<SlopeFit>,
    pub qp: Option<QpDiagnostics>,
    pub pass: bool,
}

struct Sampler<'a> {
    config: &'a WegnerExperimentConfig,
    plan: &'a ExperimentPlan,
    cube_a: TwoParticleCube,
    cube_b: Option<TwoParticleCube>,
    one_cube: LatticeCube,
    field: Option<RandeletteField<f64, ThetaSample>>,
}

impl<'a> Sampler<'a> {
    fn new(config: &'a WegnerExperimentConfig, plan: &'a ExperimentPlan) -> Result<Self> {
        let field = plan
            .truncation
            .map(|t| {
                RandeletteField::new(
                    config.schedule.clone(),
                    ThetaSample::new(config.theta_seed),
                    config.action.nu(),
                    t,
                )
            })
            .transpose()?;
        Ok(Self {
            config,
            plan,
            cube_a: config.cube_a()?,
            cube_b: config.cube_b()?,
            one_cube: LatticeCube::new(config.center.0.clone(), config.radius),
            field,
        })
    }

    fn potential(&self, pilot: bool, i: u64) -> Result<ShadowPotential<f64>> {
        let sites = self.plan.shadow_sites.clone();
        match &self.field {
            Some(field) => {
                let domain = if pilot { Domain::Pilot } else { Domain::Omega };
                let nu = self.config.action.nu();
                let omega = TorusPoint::new(keyed_units(self.config.seed, domain, i, nu));
                shadow_potential(sites, field, &self.config.action, &omega)
            }
            None => {
                let domain = if pilot { Domain::Pilot } else { Domain::Potential };
                let m = sites.len();
                ShadowPotential::new(sites, keyed_units(self.config.seed, domain, i, m))
            }
        }
    }

    /// Spectrum of the first cube and, in two-volume modes, of the second.
    fn spectra(&self, pilot: bool, i: u64) -> Result<(Spectrum<f64>, Option<Spectrum<f64>>)> {
        let pot = self.potential(pilot, i)?;
        let verify = self.config.verify_eigen;
        let interaction = &self.config.interaction;
        if self.config.mode == Mode::Classical1p {
            let h = assemble_one_particle_values(&self.one_cube, pot.values())?;
            return Ok((solve(&h, verify)?, None));
        }
        let a = solve(&assemble_two_particle_with(&self.cube_a, &pot, interaction)?, verify)?;
        let b = match &self.cube_b {
            Some(cube) => Some(solve(&assemble_two_particle_with(cube, &pot, interaction)?, verify)?),
            None => None,
        };
        Ok((a, b))
    }
}

/// Resolves the target energy; pilot samples never overlap the measured ones.
pub fn resolve_energy(config: &WegnerExperimentConfig, plan: &ExperimentPlan) -> Result<f64> {
    match config.energy {
        Energy::Fixed(e) => Ok(e),
        Energy::SpectralMedian => {
            let sampler = Sampler::new(config, plan)?;
            let mut pooled: Vec<f64> = (0..PILOT_SAMPLES)
                .into_par_iter()
                .map(|i| sampler.spectra(true, i).map(|(a, _)| a.eigenvalues().to_vec()))
                .collect::<Result<Vec<_>>>()?
                .concat();
            pooled.sort_by(f64::total_cmp);
            Ok(pooled[pooled.len() / 2])
        }
    }
}

/// Per-sample distances, in sample order.
pub fn sample_distances(config: &WegnerExperimentConfig, plan: &ExperimentPlan, energy: f64) -> Result<Vec<f64>> {
    let sampler = Sampler::new(config, plan)?;
    (0..config.samples)
        .into_par_iter()
        .map(|i| match sampler.spectra(false, i)? {
            (a, Some(b)) => a.dist_to(&b),
            (a, None) => a.dist_to_energy(energy),
        })
        .collect()
}

/// Runs one experiment end to end.
pub fn run_experiment(config: &WegnerExperimentConfig) -> Result<ExperimentReport> {
    let plan = config.validate()?;
    let energy = resolve_energy(config, &plan)?;
    let distances = sample_distances(config, &plan, energy)?;
    let estimates = ConcentrationEstimate::from_distances(&distances, &config.epsilon_grid)?;
    let monotone = estimates.windows(2).all(|w| w[0].successes <= w[1].successes);
    let slope = fit_epsilon_slope(&estimates).ok();

    let d = config.d() as i32;
    let l = config.radius as f64;
    let one_volume = (2.0 * l + 1.0).powi(2 * d);
    let (bounds, qp, pass) = match config.mode {
        Mode::Classical1p => {
            let volume = (2.0 * l + 1.0).powi(d);
            let bounds: Vec<f64> = config.epsilon_grid.iter().map(|&e| volume * e).collect();
            let pass = iid_pass(&estimates, &bounds);
            (bounds, None, pass)
        }
        Mode::Iid2pOneVolume => {
            let bounds: Vec<f64> = config
                .epsilon_grid
                .iter()
                .map(|&e| one_volume.powf(1.5) * uniform_s(2.0 * e))
                .collect();
            let pass = iid_pass(&estimates, &bounds);
            (bounds, None, pass)
        }
        Mode::Iid2pTwoVolume => {
            let bounds: Vec<f64> = config
                .epsilon_grid
                .iter()
                .map(|&e| one_volume.powf(1.5) * one_volume * uniform_s(2.0 * e))
                .collect();
            let pass = iid_pass(&estimates, &bounds);
            (bounds, None, pass)
        }
        Mode::QpOneVolume | Mode::QpTwoVolume => {
            let k = if config.mode == Mode::QpOneVolume { 3 } else { 5 };
            let n = plan.enclosing_radius as f64;
            let m_exp = config.schedule.m_exponent;
            // ln N is floored at 1 so that tiny enclosures keep a positive scale.
            let log_scale = n.ln().max(1.0).powf(m_exp) * l.max(1.0).powi(k * d);
            let power_scale = l.max(1.0).powf(m_exp + config.b + (k * d) as f64 + config.r);
            let fitted = |scale: f64| {
                estimates
                    .iter()
                    .filter(|e| e.epsilon > 0.0)
                    .map(|e| e.p_hat / (scale * e.epsilon))
                    .fold(0.0, f64::max)
            };
            let c_log = fitted(log_scale);
            let bounds = config.epsilon_grid.iter().map(|&e| c_log * log_scale * e).collect();
            let n0 = plan.separation_level.expect("qp plan");
            let truncation = plan.truncation.expect("qp plan");
            let qp = QpDiagnostics {
                enclosing_radius: plan.enclosing_radius,
                spacing: plan.spacing.expect("qp plan"),
                separation_level: n0,
                truncation,
                coefficient_at_split: config.schedule.coefficient(n0),
                conditional_density_bound: config.schedule.conditional_density_bound(n0),
                truncation_error_bound: config.schedule.tail_bound(truncation),
                fitted_constant_log_form: c_log,
                fitted_constant_power_form: fitted(power_scale),
            };
            let pass = monotone
                && slope.is_some_and(|s| s.slope >= SLOPE_WINDOW.0 && s.slope <= SLOPE_WINDOW.1);
            (bounds, Some(qp), pass)
        }
    };

    Ok(ExperimentReport {
        mode: config.mode,
        energy: (!config.mode.is_two_volume()).then_some(energy),
        estimates,
        bounds,
        monotone,
        slope,
        qp,
        pass,
    })
}

fn iid_pass(estimates: &[ConcentrationEstimate], bounds: &[f64]) -> bool {
    estimates.iter().zip(bounds).all(|(e, &b)| e.ci_low <= b)
}

pub fn run_classical_wegner(config: &WegnerExperimentConfig) -> Result<ExperimentReport> {
    expect_mode(config, &[Mode::Classical1p])?;
    run_experiment(config)
}

pub fn run_iid_two_particle(config: &WegnerExperimentConfig) -> Result<ExperimentReport> {
    expect_mode(config, &[Mode::Iid2pOneVolume, Mode::Iid2pTwoVolume])?;
    run_experiment(config)
}

pub fn run_qp_one_volume(config: &WegnerExperimentConfig) -> Result<ExperimentReport> {
    expect_mode(config, &[Mode::QpOneVolume])?;
    run_experiment(config)
}

pub fn run_qp_two_volume(config: &WegnerExperimentConfig) -> Result<ExperimentReport> {
    expect_mode(config, &[Mode::QpTwoVolume])?;
    run_experiment(config)
}

fn expect_mode(config: &WegnerExperimentConfig, allowed: &[Mode]) -> Result<()> {
    if allowed.contains(&config.mode) {
        Ok(())
    } else {
        Err(Error::Config(format!("mode {:?} not valid here", config.mode)))
    }
}

/// Finite-volume integrated density of states of `Delta + V` on
/// `Lambda_L(u)` with the grand-ensemble potential, averaged over
/// `samples` Haar points `omega`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdsCurve {
    pub energies: Vec<f64>,
    pub ids: Vec<f64>,
    pub samples: u64,
}

pub fn ids_curve(
    cube: &LatticeCube,
    field: &RandeletteField<f64, ThetaSample>,
    action: &ShiftAction<f64>,
    energies: &[f64],
    samples: u64,
    seed: u64,
    verify: bool,
) -> Result<IdsCurve> {
    if samples == 0 {
        return Err(Error::ZeroTrials);
    }
    let sites = cube.sites();
    let spectra = (0..samples)
        .into_par_iter()
        .map(|i| {
            let omega = TorusPoint::new(keyed_units(seed, Domain::Omega, i, action.nu()));
            let values = sites
                .iter()
                .map(|x| crate::randelette::potential(field, action, &omega, x))
                .collect::<Result<Vec<f64>>>()?;
            solve(&assemble_one_particle_values(cube, &values)?, verify)
        })
        .collect::<Result<Vec<_>>>()?;
    let total = (samples as usize * cube.len()) as f64;
    let ids = energies
        .iter()
        .map(|&e| spectra.iter().map(|s| s.count_below(e)).sum::<usize>() as f64 / total)
        .collect();
    Ok(IdsCurve {
        energies: energies.to_vec(),
        ids,
        samples,
    })
}
