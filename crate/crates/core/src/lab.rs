//! Scenario presets and epsilon-sweep convergence studies.
//!
//! A study takes one waveguide geometry through a decreasing list of tube
//! radii: per radius it builds the grid by the refinement rule, assembles
//! the mollified operator, measures eigenvalue and resolvent distances to
//! the effective Hamiltonian together with the theoretical rate bracket,
//! and finally fits log-log slopes and checks the scenario's acceptance
//! assertions. Rows are independent and run in parallel; every solver seed
//! is fixed, so identical configs produce bitwise-identical reports.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cross_section::{CrossSection, Shape};
use crate::curve::ArcGrid;
use crate::error::{Error, Result};
use crate::mollify::{Interpolation, MollifierSchedule, SampledFunction};
use crate::spectral::{
    assemble_3d, assemble_heff, assemble_strip, flatten, interval_eigendata, lowest_eigs,
    min_rayleigh_perp, rate_bracket_on, renormalize, resolvent_mode_gap, resolvent_norm_gap,
    sigma_on, AssemblyMode, BoundConstants, BracketComponents, EffectiveModel, GapResult,
    EIG_TOL, NORM_CAP, NORM_TOL,
};
use crate::tube::{jacobians, strip_jacobians, StripSpec, TubeSpec};

/// Coefficient profile along the curve, the serializable half of a
/// scenario. Rough profiles (square waves, oscillating cells) sample
/// piecewise constantly and always at full operator resolution; smooth
/// ones may be thinned for the bracket moduli, whose integrals do not need
/// the operator grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Profile {
    Constant { value: f64 },
    /// amp * sin(freq s + phase)
    Sine { amp: f64, freq: f64, phase: f64 },
    /// Smooth compactly supported bump amp * exp(1 - 1/(1 - x^2)) with
    /// x = (s - center)/width; identically zero for |x| >= 1.
    Bump { amp: f64, center: f64, width: f64 },
    /// Alternating +-amp, holding each sign for half a period, +amp first.
    SquareWave { amp: f64, period: f64 },
    /// Unit-size oscillation that defeats every vanishing window width:
    /// cell n (of the given count) covers ((n-1)pi, n pi) split into 2n
    /// alternating +-1 subintervals, so some cell always oscillates at the
    /// window scale. Zero outside the cells.
    OscillatingCells { cells: usize },
    /// Explicit node values; must match the operator grid length.
    Table { values: Vec<f64> },
}

impl Profile {
    pub fn sample(&self, grid: ArcGrid) -> Result<Vec<f64>> {
        let vals = match self {
            Profile::Constant { value } => vec![*value; grid.len()],
            Profile::Sine { amp, freq, phase } => {
                grid.nodes().map(|s| amp * (freq * s + phase).sin()).collect()
            }
            Profile::Bump { amp, center, width } => grid
                .nodes()
                .map(|s| {
                    let x = (s - center) / width;
                    if x.abs() < 1.0 {
                        amp * (1.0 - 1.0 / (1.0 - x * x)).exp()
                    } else {
                        0.0
                    }
                })
                .collect(),
            Profile::SquareWave { amp, period } => grid
                .nodes()
                .map(|s| {
                    let half = (s / (0.5 * period)).floor() as i64;
                    if half.rem_euclid(2) == 0 {
                        *amp
                    } else {
                        -amp
                    }
                })
                .collect(),
            Profile::OscillatingCells { cells } => {
                grid.nodes().map(|s| oscillating_value(s, *cells)).collect()
            }
            Profile::Table { values } => {
                if values.len() != grid.len() {
                    return Err(Error::InvalidInput(format!(
                        "profile table has {} values for a grid of {}",
                        values.len(),
                        grid.len()
                    )));
                }
                values.clone()
            }
        };
        if let Some(v) = vals.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("profile produced nonfinite value {v}")));
        }
        Ok(vals)
    }

    pub fn interpolation(&self) -> Interpolation {
        match self {
            Profile::SquareWave { .. } | Profile::OscillatingCells { .. } => {
                Interpolation::PiecewiseConstant
            }
            _ => Interpolation::PiecewiseLinear,
        }
    }

    fn is_smooth(&self) -> bool {
        matches!(
            self,
            Profile::Constant { .. } | Profile::Sine { .. } | Profile::Bump { .. }
        )
    }
}

fn oscillating_value(s: f64, cells: usize) -> f64 {
    use std::f64::consts::PI;
    if s < 0.0 || s >= cells as f64 * PI {
        return 0.0;
    }
    let cell = (s / PI).floor();
    let n = cell as usize + 1;
    let local = s - cell * PI;
    let sub = (local / (PI / (2.0 * n as f64))).floor() as i64;
    if sub.rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    }
}

/// The waveguide a study sweeps.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Geometry {
    /// Planar strip of the given half width about a curve with signed
    /// curvature `kappa`; `n_t` interior transverse nodes.
    Strip { length: f64, half_width: f64, n_t: usize, kappa: Profile },
    /// Spatial tube: cross-section shape spec (e.g. "rect:1,0.5"),
    /// transverse resolution, frame curvatures and rotation rate.
    Tube {
        length: f64,
        section: String,
        section_n: usize,
        #[serde(default)]
        refine_section: bool,
        k1: Profile,
        k2: Profile,
        theta_dot: Profile,
    },
}

/// A geometry realized at one radius: the assembly-ready specification.
#[derive(Debug, Clone)]
pub enum BuiltSpec {
    Strip(StripSpec),
    Tube(Box<TubeSpec>),
}

impl Geometry {
    pub fn length(&self) -> f64 {
        match self {
            Geometry::Strip { length, .. } | Geometry::Tube { length, .. } => *length,
        }
    }

    fn curvature_profiles(&self) -> Vec<&Profile> {
        match self {
            Geometry::Strip { kappa, .. } => vec![kappa],
            Geometry::Tube { k1, k2, .. } => vec![k1, k2],
        }
    }

    /// Solves the cross-section eigendata for tube geometries (`None` for
    /// strips). Compute it once per sweep; it does not depend on eps.
    pub fn section(&self) -> Result<Option<CrossSection>> {
        match self {
            Geometry::Strip { .. } => Ok(None),
            Geometry::Tube { section, section_n, refine_section, .. } => {
                let shape: Shape = section.parse()?;
                Ok(Some(if *refine_section {
                    CrossSection::compute_refined(&shape, *section_n)?
                } else {
                    CrossSection::compute(&shape, *section_n)?
                }))
            }
        }
    }

    /// The same geometry at another transverse resolution.
    pub fn with_transverse(&self, n: usize) -> Geometry {
        let mut g = self.clone();
        match &mut g {
            Geometry::Strip { n_t, .. } => *n_t = n,
            Geometry::Tube { section_n, .. } => *section_n = n,
        }
        g
    }

    /// Samples the profiles on an `n_s`-node grid and builds the
    /// specification at radius `eps`. A precomputed `section` skips the
    /// transverse eigensolve; tube rotation angles integrate the sampled
    /// rate by the trapezoid rule from zero.
    pub fn realize(
        &self,
        eps: f64,
        n_s: usize,
        section: Option<&CrossSection>,
    ) -> Result<BuiltSpec> {
        let grid = ArcGrid::new(0.0, self.length(), n_s)?;
        match self {
            Geometry::Strip { half_width, n_t, kappa, .. } => {
                let kap = kappa.sample(grid)?;
                Ok(BuiltSpec::Strip(StripSpec::new(grid, kap, *half_width, *n_t, eps)?))
            }
            Geometry::Tube { k1, k2, theta_dot, .. } => {
                let sec = match section {
                    Some(s) => s.clone(),
                    None => self.section()?.expect("tube geometry has a section"),
                };
                let k1v = k1.sample(grid)?;
                let k2v = k2.sample(grid)?;
                let tdv = theta_dot.sample(grid)?;
                let ds = grid.delta();
                let mut theta = Vec::with_capacity(n_s);
                let mut acc = 0.0;
                theta.push(0.0);
                for i in 1..n_s {
                    acc += 0.5 * (tdv[i - 1] + tdv[i]) * ds;
                    theta.push(acc);
                }
                let spec =
                    TubeSpec::from_curvatures(&k1v, &k2v, grid, theta, tdv, sec, eps)?;
                Ok(BuiltSpec::Tube(Box::new(spec)))
            }
        }
    }
}

/// Per-scenario acceptance assertions, evaluated on the finished rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StudyAssertion {
    /// Every compared eigenvalue distance stays below `cap` in every row.
    EigGapsBelow { cap: f64 },
    /// Resolvent distances decrease along the sweep.
    GapDecreasing,
    /// Fitted resolvent slope lies in [min, max].
    ResolventSlopeRange { min: f64, max: f64 },
    /// Fitted resolvent slope is at least `min`.
    ResolventSlopeAtLeast { min: f64 },
    /// Fitted bracket slope lies in [min, max].
    BracketSlopeRange { min: f64, max: f64 },
    /// Direct-vs-mollified distances decrease and stay within
    /// `factor` times the bracket.
    ModeGapControlled { factor: f64 },
    /// Minimum over the shipped window schedules of the curvature shift
    /// modulus at the smallest radius exceeds `floor` (counterexample
    /// witness: no schedule rescues the scenario).
    SigmaFloor { floor: f64 },
    /// First-eigenvalue distance to the effective operator, relative to
    /// the predicted rotation shift C_omega theta_dot^2, decreases and
    /// ends at most `rel_tol`.
    TwistShift { rel_tol: f64 },
}

fn default_eig_count() -> usize {
    3
}

fn default_true() -> bool {
    true
}

/// A full scenario: geometry, sweep, schedule, grids and assertions.
/// Serialized as the documented JSON study schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyConfig {
    pub name: String,
    pub geometry: Geometry,
    /// Strictly decreasing tube radii.
    pub eps_list: Vec<f64>,
    pub schedule: MollifierSchedule,
    /// Spectral parameter; must stay below -9 kappa_inf^2.
    pub lambda: f64,
    /// Longitudinal nodes at the largest radius. Later rows grow like
    /// eps^{-1/2} and are floored by the window rule ds <= delta(eps)/8.
    pub n_s_base: usize,
    /// Hard floor on longitudinal nodes (profiles with fine structure).
    #[serde(default)]
    pub n_s_min: usize,
    /// How many low eigenvalues to compare per row.
    #[serde(default = "default_eig_count")]
    pub eig_count: usize,
    /// Evaluate rate brackets only; skip all operators.
    #[serde(default)]
    pub rate_only: bool,
    /// Also measure the direct-vs-mollified resolvent distance.
    #[serde(default = "default_true")]
    pub mode_gap: bool,
    /// Also record the complement Rayleigh floor per row.
    #[serde(default)]
    pub perp_floor: bool,
    /// Optional measurement window for the bracket moduli.
    #[serde(default)]
    pub window: Option<(f64, f64)>,
    pub assertions: Vec<StudyAssertion>,
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::InvalidInput("study name must not be empty".into()));
        }
        if self.eps_list.is_empty() {
            return Err(Error::InvalidInput("eps list must not be empty".into()));
        }
        for w in self.eps_list.windows(2) {
            if !(w[1] < w[0]) {
                return Err(Error::InvalidInput(format!(
                    "eps list must decrease strictly, got {} then {}",
                    w[0], w[1]
                )));
            }
        }
        if self.eps_list.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            return Err(Error::InvalidInput("eps values must be positive".into()));
        }
        if !self.lambda.is_finite() {
            return Err(Error::InvalidInput("lambda must be finite".into()));
        }
        if self.n_s_base < 8 {
            return Err(Error::InvalidInput("n_s_base must be at least 8".into()));
        }
        if !self.rate_only && self.eig_count == 0 {
            return Err(Error::InvalidInput("eig_count must be at least 1".into()));
        }
        match &self.geometry {
            Geometry::Strip { length, half_width, n_t, kappa } => {
                if !(length.is_finite() && *length > 0.0) {
                    return Err(Error::InvalidInput("strip length must be positive".into()));
                }
                if !(half_width.is_finite() && *half_width > 0.0) {
                    return Err(Error::InvalidInput("half width must be positive".into()));
                }
                if *n_t < 3 {
                    return Err(Error::InvalidInput("need at least 3 transverse nodes".into()));
                }
                // The largest radius must clear the curvature ceiling.
                let probe = ArcGrid::new(0.0, *length, probe_nodes(self))?;
                let sup = kappa.sample(probe)?.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if sup > 0.0 && self.eps_list[0] * half_width * sup >= 1.0 {
                    return Err(Error::EpsilonTooLarge {
                        eps: self.eps_list[0],
                        limit: 1.0 / (half_width * sup),
                        context: "largest sweep radius exceeds the strip admissibility bound"
                            .into(),
                    });
                }
            }
            Geometry::Tube { length, section, section_n, .. } => {
                if !(length.is_finite() && *length > 0.0) {
                    return Err(Error::InvalidInput("tube length must be positive".into()));
                }
                section.parse::<Shape>()?;
                if *section_n < 4 {
                    return Err(Error::InvalidInput("section resolution must be at least 4".into()));
                }
                // Curvature admissibility is checked per row by TubeSpec,
                // which knows the section's radius bound.
            }
        }
        Ok(())
    }
}

fn probe_nodes(config: &StudyConfig) -> usize {
    config.n_s_min.max(4001)
}

/// Longitudinal node count for one sweep radius.
pub fn n_s_for(config: &StudyConfig, eps: f64) -> usize {
    let l = config.geometry.length();
    let sqrt_rule =
        (config.n_s_base as f64 * (config.eps_list[0] / eps).sqrt()).ceil() as usize;
    let window_rule = (l / (config.schedule.delta(eps) / 8.0)).ceil() as usize + 1;
    sqrt_rule.max(window_rule).max(config.n_s_min).max(8)
}

/// Transverse resolution for one sweep radius: the geometry's base count
/// under the same eps^{-1/2} growth as the longitudinal grid. Without this
/// the distance between the two assembly modes bottoms out at the fixed
/// transverse quadrature mismatch instead of decreasing with eps. Strips
/// scale the interior node count, tubes the section grid.
pub fn n_t_for(config: &StudyConfig, eps: f64) -> usize {
    let base = match &config.geometry {
        Geometry::Strip { n_t, .. } => *n_t,
        Geometry::Tube { section_n, .. } => *section_n,
    };
    ((base as f64 * (config.eps_list[0] / eps).sqrt()).ceil() as usize).max(base)
}

/// Log-log least-squares fit of a rate.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// Standard error of the slope; +-2 of these is the confidence band.
    pub slope_stderr: f64,
}

pub fn fit_rate(points: &[(f64, f64)]) -> Result<RateFit> {
    if points.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "rate fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    for &(e, v) in points {
        if !(e.is_finite() && e > 0.0 && v.is_finite() && v > 0.0) {
            return Err(Error::InvalidInput(format!(
                "log-log fit needs positive finite data, got ({e}, {v})"
            )));
        }
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|(e, _)| e.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|(_, v)| v.ln()).collect();
    let xbar = xs.iter().sum::<f64>() / n;
    let ybar = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - xbar) * (x - xbar)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xbar) * (y - ybar)).sum();
    let syy: f64 = ys.iter().map(|y| (y - ybar) * (y - ybar)).sum();
    if sxx <= 0.0 {
        return Err(Error::InvalidInput("rate fit needs distinct eps values".into()));
    }
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let ss_res = (syy - slope * sxy).max(0.0);
    let r2 = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    let slope_stderr =
        if points.len() > 2 { (ss_res / ((n - 2.0) * sxx)).sqrt() } else { 0.0 };
    Ok(RateFit { slope, intercept, r2, slope_stderr })
}

/// What one sweep radius produced.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum RowOutcome {
    Ok {
        gap: GapResult,
        /// Bottom of the renormalized spectrum.
        min_eig: f64,
        /// Minimum Rayleigh quotient over the complement of the ground
        /// band, when requested.
        perp_floor: Option<f64>,
    },
    RateOnly { components: BracketComponents },
    Failed { error: String },
}

#[derive(Debug, Clone, Serialize)]
pub struct StudyRow {
    pub eps: f64,
    pub n_s: usize,
    pub n_t: usize,
    pub outcome: RowOutcome,
}

#[derive(Debug, Clone, Serialize)]
pub struct StudyFits {
    pub eig_gap: Option<RateFit>,
    pub resolvent_gap: Option<RateFit>,
    pub mode_gap: Option<RateFit>,
    pub bracket: Option<RateFit>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AssertionOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Solver tolerances and fixed seeds the rows ran under.
#[derive(Debug, Clone, Serialize)]
pub struct EnvMeta {
    pub eig_tol: f64,
    pub norm_tol: f64,
    pub norm_cap: usize,
    /// Rotation coupling constant of the computed section (tube runs).
    pub c_omega: Option<f64>,
    pub version: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct StudyReport {
    pub config: StudyConfig,
    pub rows: Vec<StudyRow>,
    pub fits: StudyFits,
    pub assertions: Vec<AssertionOutcome>,
    pub env: EnvMeta,
    /// True when at least one row succeeded and every assertion held.
    pub passed: bool,
}

/// Runs the sweep. Errors only on an invalid config or when every single
/// row failed; individual row failures are recorded in place. Assertion
/// failures mark the report, not the call.
pub fn run_study(config: &StudyConfig) -> Result<StudyReport> {
    config.validate()?;
    // Base-resolution section: report metadata and assertion scales only;
    // each row computes its own at the row's transverse resolution.
    let section = config.geometry.section()?;

    let rows: Vec<StudyRow> =
        config.eps_list.par_iter().map(|&eps| run_row(config, eps)).collect();

    if rows.iter().all(|r| matches!(r.outcome, RowOutcome::Failed { .. })) {
        let first = rows
            .iter()
            .find_map(|r| match &r.outcome {
                RowOutcome::Failed { error } => Some(error.clone()),
                _ => None,
            })
            .unwrap_or_default();
        return Err(Error::Solver(format!(
            "every row of study '{}' failed; first error: {first}",
            config.name
        )));
    }

    let fits = compute_fits(&rows);
    let c_omega = section.as_ref().map(|s| s.c_omega);
    let assertions = evaluate_assertions(config, &rows, &fits, c_omega);
    let passed = assertions.iter().all(|a| a.passed);
    Ok(StudyReport {
        config: config.clone(),
        rows,
        fits,
        assertions,
        env: EnvMeta {
            eig_tol: EIG_TOL,
            norm_tol: NORM_TOL,
            norm_cap: NORM_CAP,
            c_omega,
            version: env!("CARGO_PKG_VERSION").to_string(),
        },
        passed,
    })
}

fn run_row(config: &StudyConfig, eps: f64) -> StudyRow {
    let n_s = n_s_for(config, eps);
    let row_config = StudyConfig {
        geometry: config.geometry.with_transverse(n_t_for(config, eps)),
        ..config.clone()
    };
    let attempt = || -> Result<(usize, RowOutcome)> {
        let section = row_config.geometry.section()?;
        let n_t = match &row_config.geometry {
            Geometry::Strip { n_t, .. } => *n_t,
            Geometry::Tube { .. } => section.as_ref().map_or(0, |s| s.lattice.len()),
        };
        let outcome = build_row(&row_config, section.as_ref(), eps, n_s, n_t)?;
        Ok((n_t, outcome))
    };
    match attempt() {
        Ok((n_t, outcome)) => StudyRow { eps, n_s, n_t, outcome },
        Err(e) => StudyRow {
            eps,
            n_s,
            n_t: n_t_for(config, eps),
            outcome: RowOutcome::Failed { error: e.to_string() },
        },
    }
}

/// Bracket moduli integrate the profile, not the operator grid, so smooth
/// profiles are thinned to keep the exact-segment quadrature affordable.
fn bracket_function(profile: &Profile, grid: ArcGrid) -> Result<SampledFunction> {
    let g = if profile.is_smooth() && grid.len() > 4001 {
        ArcGrid::new(grid.node(0), grid.node(grid.len() - 1), 4001)?
    } else {
        grid
    };
    SampledFunction::new(g, profile.sample(g)?, profile.interpolation())
}

fn build_row(
    config: &StudyConfig,
    section: Option<&CrossSection>,
    eps: f64,
    n_s: usize,
    n_t: usize,
) -> Result<RowOutcome> {
    let grid = ArcGrid::new(0.0, config.geometry.length(), n_s)?;
    let lambda = config.lambda;

    // Rate-bracket side: moduli live on the profiles, not the operator.
    let zero = zero_function(grid)?;
    let (k1f, k2f, tdf) = match &config.geometry {
        Geometry::Strip { kappa, .. } => {
            (bracket_function(kappa, grid)?, zero.clone(), zero)
        }
        Geometry::Tube { k1, k2, theta_dot, .. } => (
            bracket_function(k1, grid)?,
            bracket_function(k2, grid)?,
            bracket_function(theta_dot, grid)?,
        ),
    };

    // Coercivity data: discrete transverse eigenvalues and curvature sup.
    let (ksup, a_bound, e1d, e2d) = match &config.geometry {
        Geometry::Strip { half_width, kappa, .. } => {
            let kap = kappa.sample(grid)?;
            let ksup = kap.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let dt = 2.0 * half_width / (n_t as f64 + 1.0);
            let (tvals, _) = interval_eigendata(n_t, dt, 2);
            (ksup, *half_width, tvals[0], tvals[1])
        }
        Geometry::Tube { k1, k2, .. } => {
            let sec = section.ok_or_else(|| {
                Error::InvalidInput("tube rows need a computed cross-section".into())
            })?;
            let k1v = k1.sample(grid)?;
            let k2v = k2.sample(grid)?;
            let ksup =
                k1v.iter().zip(&k2v).fold(0.0f64, |m, (a, b)| m.max(a.hypot(*b)));
            (ksup, sec.radius_bound, sec.e1, sec.e2)
        }
    };
    let consts = certified_constants(lambda, ksup, a_bound, eps, e1d, e2d)?;
    let comps = rate_bracket_on(
        eps,
        &k1f,
        &k2f,
        &tdf,
        &config.schedule,
        consts.as_ref(),
        config.window,
    )?;
    if config.rate_only {
        return Ok(RowOutcome::RateOnly { components: comps });
    }

    // Operator side.
    match config.geometry.realize(eps, n_s, section)? {
        BuiltSpec::Strip(spec) => {
            let jac = strip_jacobians(&spec, Some(&config.schedule))?;
            let a_mol = flatten(&assemble_strip(&spec, &jac, AssemblyMode::Mollified)?)?;
            let heff = assemble_heff(
                &spec.kappa,
                &vec![0.0; n_s],
                0.0,
                grid,
                EffectiveModel::Strip,
            )?;
            let a_dir = config
                .mode_gap
                .then(|| -> Result<_> {
                    let dir = assemble_strip(&spec, &jac, AssemblyMode::Direct)?;
                    renormalize(flatten(&dir)?, eps, e1d)
                })
                .transpose()?;
            let (_, tvecs) = interval_eigendata(n_t, spec.dt(), 1);
            finish_row(config, a_mol, a_dir, heff, &tvecs[0], lambda, eps, comps)
        }
        BuiltSpec::Tube(spec) => {
            let jac = jacobians(&spec, Some(&config.schedule))?;
            let a_mol = flatten(&assemble_3d(&spec, &jac, AssemblyMode::Mollified)?)?;
            let heff = assemble_heff(
                &spec.pair.kappa,
                &spec.theta_dot,
                spec.section.c_omega,
                grid,
                EffectiveModel::Tube,
            )?;
            let a_dir = config
                .mode_gap
                .then(|| -> Result<_> {
                    let dir = assemble_3d(&spec, &jac, AssemblyMode::Direct)?;
                    renormalize(flatten(&dir)?, eps, spec.section.e1)
                })
                .transpose()?;
            finish_row(config, a_mol, a_dir, heff, &spec.section.j1, lambda, eps, comps)
        }
    }
}

/// Coercivity constants when the radius sits inside their validity
/// ceiling; `None` above it (the dimensionless bracket still applies,
/// only the explicit constant estimate is dropped).
fn certified_constants(
    lambda: f64,
    kappa_inf: f64,
    a: f64,
    eps: f64,
    e1: f64,
    e2: f64,
) -> Result<Option<BoundConstants>> {
    match BoundConstants::compute(lambda, kappa_inf, a, eps, e1, e2) {
        Ok(c) => Ok(Some(c)),
        Err(Error::EpsilonTooLarge { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

fn zero_function(grid: ArcGrid) -> Result<SampledFunction> {
    let g = if grid.len() > 401 {
        ArcGrid::new(grid.node(0), grid.node(grid.len() - 1), 401)?
    } else {
        grid
    };
    SampledFunction::new(g, vec![0.0; g.len()], Interpolation::PiecewiseLinear)
}

#[allow(clippy::too_many_arguments)]
fn finish_row(
    config: &StudyConfig,
    a_mol: crate::spectral::FlatOperator,
    a_dir: Option<crate::spectral::FlatOperator>,
    heff: crate::spectral::FlatOperator,
    j1: &[f64],
    lambda: f64,
    eps: f64,
    comps: BracketComponents,
) -> Result<RowOutcome> {
    let m = config.eig_count;
    let (ea, _) = lowest_eigs(&a_mol, m, lambda)?;
    let (eh, _) = lowest_eigs(&heff, m, lambda)?;
    let eig_gap: Vec<f64> = ea.iter().zip(&eh).map(|(a, b)| (a - b).abs()).collect();
    let resolvent_gap = resolvent_norm_gap(&a_mol, &heff, lambda, j1)?;
    let mode_gap = a_dir
        .as_ref()
        .map(|dir| resolvent_mode_gap(&a_mol, dir, lambda))
        .transpose()?;
    let perp_floor = config
        .perp_floor
        .then(|| min_rayleigh_perp(&a_mol, j1))
        .transpose()?;
    Ok(RowOutcome::Ok {
        gap: GapResult {
            eps,
            eig_gap,
            resolvent_gap,
            mode_gap,
            bound_bracket: comps.total,
            components: comps,
        },
        min_eig: ea[0],
        perp_floor,
    })
}

fn ok_gaps(rows: &[StudyRow]) -> impl Iterator<Item = (f64, &GapResult)> {
    rows.iter().filter_map(|r| match &r.outcome {
        RowOutcome::Ok { gap, .. } => Some((r.eps, gap)),
        _ => None,
    })
}

fn brackets(rows: &[StudyRow]) -> impl Iterator<Item = (f64, &BracketComponents)> {
    rows.iter().filter_map(|r| match &r.outcome {
        RowOutcome::Ok { gap, .. } => Some((r.eps, &gap.components)),
        RowOutcome::RateOnly { components } => Some((r.eps, components)),
        RowOutcome::Failed { .. } => None,
    })
}

fn fit_if_possible(points: Vec<(f64, f64)>) -> Option<RateFit> {
    let positive: Vec<(f64, f64)> = points.into_iter().filter(|(_, v)| *v > 0.0).collect();
    (positive.len() >= 3).then(|| fit_rate(&positive).ok()).flatten()
}

fn compute_fits(rows: &[StudyRow]) -> StudyFits {
    StudyFits {
        eig_gap: fit_if_possible(
            ok_gaps(rows)
                .filter_map(|(e, g)| g.eig_gap.first().map(|v| (e, *v)))
                .collect(),
        ),
        resolvent_gap: fit_if_possible(ok_gaps(rows).map(|(e, g)| (e, g.resolvent_gap)).collect()),
        mode_gap: fit_if_possible(
            ok_gaps(rows).filter_map(|(e, g)| g.mode_gap.map(|v| (e, v))).collect(),
        ),
        bracket: fit_if_possible(brackets(rows).map(|(e, c)| (e, c.total)).collect()),
    }
}

fn evaluate_assertions(
    config: &StudyConfig,
    rows: &[StudyRow],
    fits: &StudyFits,
    c_omega: Option<f64>,
) -> Vec<AssertionOutcome> {
    config
        .assertions
        .iter()
        .map(|a| evaluate_one(config, rows, fits, c_omega, a))
        .collect()
}

fn slope_assertion(name: &str, fit: Option<&RateFit>, lo: f64, hi: f64) -> AssertionOutcome {
    match fit {
        None => AssertionOutcome {
            name: name.into(),
            passed: false,
            detail: "no fit available (need 3 successful rows with positive values)".into(),
        },
        Some(f) => AssertionOutcome {
            name: name.into(),
            passed: (lo..=hi).contains(&f.slope),
            detail: format!(
                "slope {:.4} (+-{:.4}), r2 {:.4}, required [{lo}, {hi}]",
                f.slope,
                2.0 * f.slope_stderr,
                f.r2
            ),
        },
    }
}

fn decreasing(vals: &[f64]) -> bool {
    vals.windows(2).all(|w| w[1] < w[0] * (1.0 + 1e-9))
}

fn fmt_sci(vals: &[f64]) -> String {
    let cells: Vec<String> = vals.iter().map(|v| format!("{v:.3e}")).collect();
    format!("[{}]", cells.join(", "))
}

fn evaluate_one(
    config: &StudyConfig,
    rows: &[StudyRow],
    fits: &StudyFits,
    c_omega: Option<f64>,
    assertion: &StudyAssertion,
) -> AssertionOutcome {
    match assertion {
        StudyAssertion::EigGapsBelow { cap } => {
            let worst = ok_gaps(rows)
                .flat_map(|(_, g)| g.eig_gap.iter().copied())
                .fold(0.0f64, f64::max);
            let any = ok_gaps(rows).next().is_some();
            AssertionOutcome {
                name: "eig-gaps-below".into(),
                passed: any && worst <= *cap,
                detail: if any {
                    format!("worst eigenvalue distance {worst:.3e}, cap {cap:.3e}")
                } else {
                    "no successful rows".into()
                },
            }
        }
        StudyAssertion::GapDecreasing => {
            let gaps: Vec<f64> = ok_gaps(rows).map(|(_, g)| g.resolvent_gap).collect();
            AssertionOutcome {
                name: "gap-decreasing".into(),
                passed: !gaps.is_empty() && decreasing(&gaps),
                detail: format!("resolvent gaps {}", fmt_sci(&gaps)),
            }
        }
        StudyAssertion::ResolventSlopeRange { min, max } => {
            slope_assertion("resolvent-slope-range", fits.resolvent_gap.as_ref(), *min, *max)
        }
        StudyAssertion::ResolventSlopeAtLeast { min } => slope_assertion(
            "resolvent-slope-at-least",
            fits.resolvent_gap.as_ref(),
            *min,
            f64::INFINITY,
        ),
        StudyAssertion::BracketSlopeRange { min, max } => {
            slope_assertion("bracket-slope-range", fits.bracket.as_ref(), *min, *max)
        }
        StudyAssertion::ModeGapControlled { factor } => {
            let pairs: Vec<(f64, f64)> = ok_gaps(rows)
                .filter_map(|(_, g)| g.mode_gap.map(|m| (m, g.bound_bracket)))
                .collect();
            if pairs.len() < ok_gaps(rows).count() || pairs.is_empty() {
                return AssertionOutcome {
                    name: "mode-gap-controlled".into(),
                    passed: false,
                    detail: "mode gap missing from some rows".into(),
                };
            }
            let gaps: Vec<f64> = pairs.iter().map(|(m, _)| *m).collect();
            let within = pairs.iter().all(|(m, b)| *m <= factor * b);
            AssertionOutcome {
                name: "mode-gap-controlled".into(),
                passed: decreasing(&gaps) && within,
                detail: format!("mode gaps {}, factor {factor}", fmt_sci(&gaps)),
            }
        }
        StudyAssertion::SigmaFloor { floor } => sigma_floor(config, rows, *floor),
        StudyAssertion::TwistShift { rel_tol } => twist_shift(config, rows, c_omega, *rel_tol),
    }
}

/// Counterexample witness: recompute the curvature shift modulus at the
/// smallest radius under every shipped schedule and take the minimum.
fn sigma_floor(config: &StudyConfig, rows: &[StudyRow], floor: f64) -> AssertionOutcome {
    let name = "sigma-floor".to_string();
    let eps = *config.eps_list.last().expect("validated nonempty");
    let run = || -> Result<(f64, Vec<f64>)> {
        let n_s = rows
            .iter()
            .find(|r| r.eps == eps)
            .map_or_else(|| n_s_for(config, eps), |r| r.n_s);
        let grid = ArcGrid::new(0.0, config.geometry.length(), n_s)?;
        let fs: Vec<SampledFunction> = config
            .geometry
            .curvature_profiles()
            .into_iter()
            .map(|p| bracket_function(p, grid))
            .collect::<Result<_>>()?;
        let mut per_schedule = Vec::new();
        for sched in MollifierSchedule::shipped() {
            let delta = sched.delta(eps);
            let mut total = 0.0;
            for f in &fs {
                total += sigma_on(f, delta, config.window)?;
            }
            per_schedule.push(total);
        }
        let min = per_schedule.iter().copied().fold(f64::INFINITY, f64::min);
        Ok((min, per_schedule))
    };
    match run() {
        Ok((min, all)) => AssertionOutcome {
            name,
            passed: min > floor,
            detail: format!("sigma_k per shipped schedule {}, floor {floor}", fmt_sci(&all)),
        },
        Err(e) => AssertionOutcome { name, passed: false, detail: format!("evaluation failed: {e}") },
    }
}

/// Rotation-shift consistency: the first-eigenvalue distance to the
/// effective operator, relative to the predicted shift, must shrink.
fn twist_shift(
    config: &StudyConfig,
    rows: &[StudyRow],
    c_omega: Option<f64>,
    rel_tol: f64,
) -> AssertionOutcome {
    let name = "twist-shift".to_string();
    let (Some(c_omega), Geometry::Tube { theta_dot: Profile::Constant { value }, .. }) =
        (c_omega, &config.geometry)
    else {
        return AssertionOutcome {
            name,
            passed: false,
            detail: "needs a tube with constant rotation rate".into(),
        };
    };
    let shift = c_omega * value * value;
    if !(shift.is_finite() && shift > 0.0) {
        return AssertionOutcome {
            name,
            passed: false,
            detail: format!("predicted shift {shift} is not positive"),
        };
    }
    let rels: Vec<f64> = ok_gaps(rows)
        .filter_map(|(_, g)| g.eig_gap.first().map(|v| v / shift))
        .collect();
    let passed = !rels.is_empty()
        && decreasing(&rels)
        && rels.last().copied().unwrap_or(f64::INFINITY) <= rel_tol;
    AssertionOutcome {
        name,
        passed,
        detail: format!("relative shift errors {}, final tolerance {rel_tol}", fmt_sci(&rels)),
    }
}

/// Relative change of the resolvent gap at the largest radius when both
/// grid spacings are halved: the grid-convergence gate for a scenario.
pub fn refinement_drift(config: &StudyConfig) -> Result<f64> {
    if config.rate_only {
        return Err(Error::InvalidInput("refinement drift needs operator rows".into()));
    }
    let eps = config.eps_list[0];
    let gap_at = |c: &StudyConfig, n_s: usize| -> Result<f64> {
        let section = c.geometry.section()?;
        let n_t = match &c.geometry {
            Geometry::Strip { n_t, .. } => *n_t,
            Geometry::Tube { .. } => section.as_ref().map_or(0, |s| s.lattice.len()),
        };
        match build_row(c, section.as_ref(), eps, n_s, n_t)? {
            RowOutcome::Ok { gap, .. } => Ok(gap.resolvent_gap),
            _ => Err(Error::Solver("refinement row did not produce a gap".into())),
        }
    };
    let n_s = n_s_for(config, eps);
    let coarse = gap_at(config, n_s)?;
    let mut fine_cfg = config.clone();
    match &mut fine_cfg.geometry {
        // dt = 2a/(n_t + 1), so doubling the interior count plus one
        // halves it exactly.
        Geometry::Strip { n_t, .. } => *n_t = 2 * *n_t + 1,
        Geometry::Tube { section_n, .. } => *section_n *= 2,
    }
    let fine = gap_at(&fine_cfg, 2 * n_s - 1)?;
    if coarse == 0.0 {
        return Ok(0.0);
    }
    Ok((fine - coarse).abs() / coarse)
}

/// The shipped scenario catalogue.
pub fn presets() -> Vec<StudyConfig> {
    let two_thirds = MollifierSchedule::two_thirds();
    let proportional = MollifierSchedule::proportional();
    vec![
        StudyConfig {
            name: "straight".into(),
            geometry: Geometry::Tube {
                length: 1.0,
                section: "rect:1,1".into(),
                section_n: 10,
                refine_section: false,
                k1: Profile::Constant { value: 0.0 },
                k2: Profile::Constant { value: 0.0 },
                theta_dot: Profile::Constant { value: 0.0 },
            },
            eps_list: vec![0.2, 0.1, 0.05],
            schedule: two_thirds,
            lambda: -1.0,
            n_s_base: 24,
            n_s_min: 0,
            eig_count: 3,
            rate_only: false,
            mode_gap: true,
            perp_floor: true,
            window: None,
            assertions: vec![
                StudyAssertion::EigGapsBelow { cap: 1e-6 },
                StudyAssertion::GapDecreasing,
            ],
        },
        StudyConfig {
            name: "twisted-straight".into(),
            geometry: Geometry::Tube {
                length: 1.0,
                section: "rect:1,0.5".into(),
                section_n: 16,
                refine_section: false,
                k1: Profile::Constant { value: 0.0 },
                k2: Profile::Constant { value: 0.0 },
                theta_dot: Profile::Constant { value: 1.2 },
            },
            eps_list: vec![0.2, 0.1, 0.05],
            schedule: two_thirds,
            lambda: -1.0,
            n_s_base: 24,
            n_s_min: 0,
            eig_count: 2,
            rate_only: false,
            mode_gap: true,
            perp_floor: true,
            window: None,
            assertions: vec![
                StudyAssertion::TwistShift { rel_tol: 0.05 },
                StudyAssertion::GapDecreasing,
            ],
        },
        StudyConfig {
            name: "bent-arc-2d".into(),
            geometry: Geometry::Strip {
                length: 8.0,
                half_width: 1.0,
                n_t: 15,
                kappa: Profile::Bump { amp: 0.6, center: 4.0, width: 2.5 },
            },
            // The first radius exceeds the certified-constants ceiling
            // (about 0.138 here): its row still runs, only the explicit
            // sigma-tilde column is absent.
            eps_list: vec![0.2, 0.1, 0.05, 0.025],
            schedule: proportional,
            lambda: -4.6,
            n_s_base: 64,
            n_s_min: 0,
            eig_count: 3,
            rate_only: false,
            mode_gap: true,
            perp_floor: true,
            window: None,
            // The bracket rate is exactly checkable; the measured gap often
            // converges faster than its upper bound, so only its floor is
            // asserted.
            assertions: vec![
                StudyAssertion::ResolventSlopeAtLeast { min: 0.8 },
                StudyAssertion::BracketSlopeRange { min: 0.9, max: 1.1 },
                StudyAssertion::ModeGapControlled { factor: 2.0 },
                StudyAssertion::GapDecreasing,
            ],
        },
        StudyConfig {
            name: "bent-arc-3d".into(),
            geometry: Geometry::Tube {
                length: 4.0,
                section: "disc:0.5".into(),
                section_n: 10,
                refine_section: false,
                k1: Profile::Bump { amp: 0.5, center: 2.0, width: 1.5 },
                k2: Profile::Constant { value: 0.0 },
                theta_dot: Profile::Constant { value: 0.0 },
            },
            eps_list: vec![0.2, 0.1],
            schedule: proportional,
            lambda: -3.5,
            n_s_base: 48,
            n_s_min: 0,
            eig_count: 2,
            rate_only: false,
            mode_gap: true,
            perp_floor: true,
            window: None,
            assertions: vec![
                StudyAssertion::GapDecreasing,
                StudyAssertion::ModeGapControlled { factor: 2.0 },
            ],
        },
        StudyConfig {
            name: "helix-rpaf".into(),
            geometry: Geometry::Tube {
                length: 4.0,
                section: "rect:1,0.5".into(),
                section_n: 12,
                refine_section: false,
                k1: Profile::Sine {
                    amp: 0.8,
                    freq: 0.4,
                    phase: std::f64::consts::FRAC_PI_2,
                },
                k2: Profile::Sine { amp: 0.8, freq: 0.4, phase: 0.0 },
                theta_dot: Profile::Constant { value: 0.0 },
            },
            // The 2:1 rectangle packs its transverse band tightly, which
            // caps the certified radius near 0.065.
            eps_list: vec![0.06, 0.04],
            schedule: proportional,
            lambda: -7.4,
            n_s_base: 48,
            n_s_min: 0,
            eig_count: 2,
            rate_only: false,
            mode_gap: true,
            perp_floor: true,
            window: None,
            assertions: vec![
                StudyAssertion::GapDecreasing,
                StudyAssertion::ModeGapControlled { factor: 2.0 },
            ],
        },
        StudyConfig {
            name: "helix-frenet".into(),
            geometry: Geometry::Tube {
                length: 4.0,
                section: "rect:1,0.5".into(),
                section_n: 12,
                refine_section: false,
                k1: Profile::Constant { value: 0.8 },
                k2: Profile::Constant { value: 0.0 },
                theta_dot: Profile::Constant { value: 0.4 },
            },
            eps_list: vec![0.06, 0.04],
            schedule: proportional,
            lambda: -7.4,
            n_s_base: 48,
            n_s_min: 0,
            eig_count: 2,
            rate_only: false,
            mode_gap: true,
            perp_floor: true,
            window: None,
            assertions: vec![
                StudyAssertion::GapDecreasing,
                StudyAssertion::ModeGapControlled { factor: 2.0 },
            ],
        },
        StudyConfig {
            name: "sawtooth-2d".into(),
            geometry: Geometry::Strip {
                length: 12.0,
                half_width: 0.35,
                n_t: 15,
                kappa: Profile::SquareWave { amp: 1.0, period: 0.5 },
            },
            eps_list: vec![0.02, 0.01, 0.005, 0.0025],
            schedule: two_thirds,
            lambda: -11.0,
            n_s_base: 64,
            n_s_min: 0,
            eig_count: 2,
            rate_only: false,
            mode_gap: true,
            perp_floor: true,
            window: None,
            assertions: vec![
                StudyAssertion::BracketSlopeRange {
                    min: 1.0 / 3.0 - 0.05,
                    max: 1.0 / 3.0 + 0.05,
                },
                StudyAssertion::ResolventSlopeAtLeast { min: 0.25 },
                StudyAssertion::GapDecreasing,
                StudyAssertion::ModeGapControlled { factor: 2.0 },
            ],
        },
        StudyConfig {
            name: "oscillating-counterexample".into(),
            geometry: Geometry::Strip {
                length: 132.0 * std::f64::consts::PI,
                half_width: 1.0,
                n_t: 9,
                kappa: Profile::OscillatingCells { cells: 132 },
            },
            // The transverse coercivity constants cap eps near 0.08 for a
            // unit half width at unit curvature; stay below it.
            eps_list: vec![0.05, 0.03, 0.02],
            schedule: two_thirds,
            lambda: -11.0,
            n_s_base: 64,
            n_s_min: 138_241,
            eig_count: 1,
            rate_only: true,
            mode_gap: false,
            perp_floor: false,
            window: None,
            assertions: vec![StudyAssertion::SigmaFloor { floor: 0.5 }],
        },
    ]
}

pub fn preset(name: &str) -> Result<StudyConfig> {
    presets()
        .into_iter()
        .find(|c| c.name == name)
        .ok_or_else(|| Error::InvalidInput(format!("no preset named '{name}'")))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Plot-ready CSV: one row per radius, slopes and assertions in the JSON
/// mirror. Floats print in shortest round-trip form, so identical runs
/// diff clean.
pub fn report_csv(report: &StudyReport) -> String {
    let m = report.config.eig_count;
    let mut head: Vec<String> =
        ["eps", "n_s", "n_t", "status"].iter().map(|s| s.to_string()).collect();
    for i in 1..=m {
        head.push(format!("eig_gap_{i}"));
    }
    head.extend(
        [
            "resolvent_gap",
            "mode_gap",
            "min_eig",
            "perp_floor",
            "bracket",
            "eps_term",
            "steklov_deriv",
            "sigma_k",
            "sigma_theta",
            "delta",
            "delta_tilde",
            "error",
        ]
        .iter()
        .map(|s| s.to_string()),
    );
    let mut out = head.join(",");
    out.push('\n');
    for row in &report.rows {
        let mut cells: Vec<String> =
            vec![row.eps.to_string(), row.n_s.to_string(), row.n_t.to_string()];
        match &row.outcome {
            RowOutcome::Ok { gap, min_eig, perp_floor } => {
                cells.push("ok".into());
                for i in 0..m {
                    cells.push(fmt_opt(gap.eig_gap.get(i).copied()));
                }
                cells.push(gap.resolvent_gap.to_string());
                cells.push(fmt_opt(gap.mode_gap));
                cells.push(min_eig.to_string());
                cells.push(fmt_opt(*perp_floor));
                cells.extend(bracket_cells(&gap.components));
                cells.push(String::new());
            }
            RowOutcome::RateOnly { components } => {
                cells.push("rate-only".into());
                for _ in 0..m {
                    cells.push(String::new());
                }
                cells.extend([String::new(), String::new(), String::new(), String::new()]);
                cells.extend(bracket_cells(components));
                cells.push(String::new());
            }
            RowOutcome::Failed { error } => {
                cells.push("failed".into());
                for _ in 0..m {
                    cells.push(String::new());
                }
                cells.extend(vec![String::new(); 10]);
                cells.push(error.replace(',', ";"));
            }
        }
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

fn bracket_cells(c: &BracketComponents) -> Vec<String> {
    vec![
        c.total.to_string(),
        c.eps_term.to_string(),
        c.steklov_deriv.to_string(),
        c.sigma_k.to_string(),
        c.sigma_theta.to_string(),
        c.delta.to_string(),
        c.delta_tilde.to_string(),
    ]
}

fn atomic_write(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Writes `<name>.csv` and `<name>.json` into `dir` (created if missing),
/// each atomically via a temp file.
pub fn write_report(report: &StudyReport, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir)?;
    let csv_path = dir.join(format!("{}.csv", report.config.name));
    let json_path = dir.join(format!("{}.json", report.config.name));
    atomic_write(&csv_path, &report_csv(report))?;
    let json = serde_json::to_string_pretty(report)
        .map_err(|e| Error::InvalidInput(format!("report serialization failed: {e}")))?;
    atomic_write(&json_path, &(json + "\n"))?;
    Ok((csv_path, json_path))
}
