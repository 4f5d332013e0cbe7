//! Tube geometry: the Jacobian fields of the straightened coordinates,
//! the metric they induce, admissibility limits and twist classification.
//!
//! A tube is a curve swept by a cross-section that rotates by the angle
//! theta(s) relative to the curve's parallel frame. In the straightened
//! coordinates (s, t1, t2) the whole geometry is carried by the scalar
//! field
//!
//!   h(s,t) = 1 - eps [ t1 (k1 cos th + k2 sin th)
//!                    + t2 (-k1 sin th + k2 cos th) ]
//!
//! together with h2 = -t1 th_dot and h3 = t2 th_dot. The mollified
//! variant h_eps applies a window average to the curvature components
//! only; theta is left untouched.
//!
//! Self-intersection of the swept tube in ambient space is not checked.
//! The local condition h > 0 is; with it the assembled operators remain
//! the correct objects on the abstract straightened manifold even when
//! the tube overlaps itself.

use nalgebra::Matrix3;

use crate::cross_section::CrossSection;
use crate::curve::{ArcGrid, CurvaturePair, Frame, SampledCurve};
use crate::error::{Error, Result};
use crate::mollify::{steklov, MollifierSchedule, SampledFunction};

/// Rotation rates below this are treated as no rotation at all.
pub const TWIST_TOL: f64 = 1e-12;

/// Caveat attached to admissibility reports.
pub const ABSTRACT_MANIFOLD_NOTE: &str = "self-intersection in ambient space is not checked; \
     min h > 0 keeps the straightened operator well defined on the abstract manifold";

/// Full specification of a three-dimensional tube.
#[derive(Debug, Clone)]
pub struct TubeSpec {
    pub curve: SampledCurve,
    pub frame: Frame,
    pub pair: CurvaturePair,
    /// Section rotation angle relative to the parallel frame, per node.
    pub theta: Vec<f64>,
    /// Its rate; supplied rather than differenced so rough rates keep
    /// their exact sampled values.
    pub theta_dot: Vec<f64>,
    pub section: CrossSection,
    pub eps: f64,
}

impl TubeSpec {
    pub fn new(
        curve: SampledCurve,
        frame: Frame,
        pair: CurvaturePair,
        theta: Vec<f64>,
        theta_dot: Vec<f64>,
        section: CrossSection,
        eps: f64,
    ) -> Result<Self> {
        let n = curve.grid.len();
        if frame.t.len() != n || pair.k1.len() != n {
            return Err(Error::InvalidInput("frame/curvature length mismatch".into()));
        }
        if theta.len() != n || theta_dot.len() != n {
            return Err(Error::InvalidInput("theta arrays must match the grid".into()));
        }
        if theta.iter().chain(&theta_dot).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("theta data must be finite".into()));
        }
        if !(eps.is_finite() && eps > 0.0) {
            return Err(Error::InvalidInput(format!("eps must be positive, got {eps}")));
        }
        let a = section.radius_bound;
        let ksup = pair.kappa_inf();
        if ksup > 0.0 {
            let limit = 1.0 / (a * ksup);
            if eps >= limit {
                return Err(Error::EpsilonTooLarge {
                    eps,
                    limit,
                    context: "tube thickness times section radius times curvature must stay \
                              below one for a positive Jacobian"
                        .into(),
                });
            }
        }
        Ok(Self { curve, frame, pair, theta, theta_dot, section, eps })
    }

    /// Convenience constructor that integrates the frame system from the
    /// curvature samples.
    #[allow(clippy::too_many_arguments)]
    pub fn from_curvatures(
        k1: &[f64],
        k2: &[f64],
        grid: ArcGrid,
        theta: Vec<f64>,
        theta_dot: Vec<f64>,
        section: CrossSection,
        eps: f64,
    ) -> Result<Self> {
        let init = (nalgebra::Vector3::x(), nalgebra::Vector3::y(), nalgebra::Vector3::z());
        let (curve, frame, pair) =
            crate::curve::build_from_curvatures(k1, k2, grid, nalgebra::Vector3::zeros(), init)?;
        Self::new(curve, frame, pair, theta, theta_dot, section, eps)
    }

    pub fn grid(&self) -> ArcGrid {
        self.curve.grid
    }

    pub fn n_s(&self) -> usize {
        self.curve.grid.len()
    }

    pub fn theta_dot_sup(&self) -> f64 {
        self.theta_dot.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Largest eps with guaranteed h >= 1 - margin.
pub fn epsilon_max(pair: &CurvaturePair, section: &CrossSection, margin: f64) -> Result<f64> {
    if !(margin > 0.0 && margin < 1.0) {
        return Err(Error::InvalidInput(format!("margin must be in (0,1), got {margin}")));
    }
    let ksup = pair.kappa_inf();
    if ksup == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(margin / (section.radius_bound * ksup))
}

/// Why a tube counts as untwisted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UntwistReason {
    /// Rotation invariance of the section makes theta irrelevant.
    CircularSection,
    /// The section keeps a fixed attitude in the parallel frame.
    NoRotation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TwistClass {
    Untwisted(UntwistReason),
    Twisted,
}

impl std::fmt::Display for TwistClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TwistClass::Untwisted(UntwistReason::CircularSection) => {
                write!(f, "untwisted (circular section)")
            }
            TwistClass::Untwisted(UntwistReason::NoRotation) => {
                write!(f, "untwisted (no frame rotation)")
            }
            TwistClass::Twisted => write!(f, "twisted"),
        }
    }
}

/// A tube is untwisted when the section is circular about the axis or
/// when it does not rotate relative to the parallel frame.
pub fn classify_twist(spec: &TubeSpec) -> TwistClass {
    if spec.section.shape.is_axisymmetric() {
        TwistClass::Untwisted(UntwistReason::CircularSection)
    } else if spec.theta_dot_sup() <= TWIST_TOL {
        TwistClass::Untwisted(UntwistReason::NoRotation)
    } else {
        TwistClass::Twisted
    }
}

/// Jacobian data on the tensor grid (s-node major, lattice-node minor).
#[derive(Debug, Clone)]
pub struct JacobianField {
    pub eps: f64,
    pub h: Vec<Vec<f64>>,
    /// Same formula with window-averaged curvatures; equals `h` when no
    /// schedule was given.
    pub h_eps: Vec<Vec<f64>>,
    pub h2: Vec<Vec<f64>>,
    pub h3: Vec<Vec<f64>>,
    pub k1_eps: Vec<f64>,
    pub k2_eps: Vec<f64>,
    /// Window width actually used for the curvatures, if any.
    pub delta: Option<f64>,
    pub min_h: f64,
    pub min_h_eps: f64,
}

pub fn jacobians(spec: &TubeSpec, schedule: Option<&MollifierSchedule>) -> Result<JacobianField> {
    let grid = spec.grid();
    let n = spec.n_s();
    let lat = &spec.section.lattice;
    let m = lat.len();
    let eps = spec.eps;

    let (k1_eps, k2_eps, delta) = match schedule {
        Some(sch) => {
            let d = sch.delta(eps);
            let f1 = SampledFunction::linear(grid, spec.pair.k1.clone())?;
            let f2 = SampledFunction::linear(grid, spec.pair.k2.clone())?;
            (steklov(&f1, d)?.values, steklov(&f2, d)?.values, Some(d))
        }
        None => (spec.pair.k1.clone(), spec.pair.k2.clone(), None),
    };

    let coords: Vec<(f64, f64)> = (0..m).map(|k| lat.coords(k)).collect();
    let mut h = vec![vec![0.0; m]; n];
    let mut h_eps = vec![vec![0.0; m]; n];
    let mut h2 = vec![vec![0.0; m]; n];
    let mut h3 = vec![vec![0.0; m]; n];
    let mut min_h = f64::INFINITY;
    let mut min_h_eps = f64::INFINITY;
    let mut argmin = (0usize, 0usize);

    for i in 0..n {
        let (sin_t, cos_t) = spec.theta[i].sin_cos();
        let td = spec.theta_dot[i];
        let (k1, k2) = (spec.pair.k1[i], spec.pair.k2[i]);
        let (k1e, k2e) = (k1_eps[i], k2_eps[i]);
        for k in 0..m {
            let (t1, t2) = coords[k];
            let hv = 1.0 - eps * (t1 * (k1 * cos_t + k2 * sin_t) + t2 * (-k1 * sin_t + k2 * cos_t));
            let hev =
                1.0 - eps * (t1 * (k1e * cos_t + k2e * sin_t) + t2 * (-k1e * sin_t + k2e * cos_t));
            h[i][k] = hv;
            h_eps[i][k] = hev;
            h2[i][k] = -t1 * td;
            h3[i][k] = t2 * td;
            if hv < min_h {
                min_h = hv;
                argmin = (i, k);
            }
            min_h_eps = min_h_eps.min(hev);
        }
    }

    if min_h <= 0.0 || min_h_eps <= 0.0 {
        return Err(Error::InadmissibleGeometry {
            s_node: argmin.0,
            t_node: argmin.1,
            h: min_h.min(min_h_eps),
        });
    }
    Ok(JacobianField { eps, h, h_eps, h2, h3, k1_eps, k2_eps, delta, min_h, min_h_eps })
}

/// Metric tensors on the tensor grid, for verification and reporting.
/// Assembly never materializes this; it uses the closed-form inverse
/// identity directly. Intended for modest resolutions.
#[derive(Debug, Clone)]
pub struct MetricField {
    pub g: Vec<Vec<Matrix3<f64>>>,
    pub ginv: Vec<Vec<Matrix3<f64>>>,
    pub det_g: Vec<Vec<f64>>,
}

pub fn metric_bundle(jac: &JacobianField) -> Result<MetricField> {
    let eps = jac.eps;
    let e2 = eps * eps;
    let n = jac.h.len();
    let m = if n > 0 { jac.h[0].len() } else { 0 };
    let mut g = vec![Vec::with_capacity(m); n];
    let mut ginv = vec![Vec::with_capacity(m); n];
    let mut det_g = vec![Vec::with_capacity(m); n];
    for i in 0..n {
        for k in 0..m {
            let h = jac.h[i][k];
            if h <= 0.0 {
                return Err(Error::InadmissibleGeometry { s_node: i, t_node: k, h });
            }
            let (h2, h3) = (jac.h2[i][k], jac.h3[i][k]);
            let gm = Matrix3::new(
                h * h + e2 * (h2 * h2 + h3 * h3),
                -e2 * h3,
                -e2 * h2,
                -e2 * h3,
                e2,
                0.0,
                -e2 * h2,
                0.0,
                e2,
            );
            let hh = h * h;
            let gi = Matrix3::new(
                1.0 / hh,
                h3 / hh,
                h2 / hh,
                h3 / hh,
                (hh / e2 + h3 * h3) / hh,
                h2 * h3 / hh,
                h2 / hh,
                h2 * h3 / hh,
                (hh / e2 + h2 * h2) / hh,
            );
            g[i].push(gm);
            ginv[i].push(gi);
            det_g[i].push(e2 * e2 * hh);
        }
    }
    Ok(MetricField { g, ginv, det_g })
}

impl MetricField {
    /// Worst relative deviation of the stored determinant from the 3x3
    /// oracle, and the worst entry of |G Ginv - I|.
    pub fn residuals(&self) -> (f64, f64) {
        let mut det_res = 0.0f64;
        let mut inv_res = 0.0f64;
        for (grow, (girow, drow)) in self.g.iter().zip(self.ginv.iter().zip(&self.det_g)) {
            for ((gm, gi), &d) in grow.iter().zip(girow).zip(drow) {
                let det = gm.determinant();
                det_res = det_res.max((det - d).abs() / d.abs().max(f64::MIN_POSITIVE));
                let prod = gm * gi - Matrix3::identity();
                inv_res = inv_res.max(prod.abs().max());
            }
        }
        (det_res, inv_res)
    }
}

/// Admissibility and classification report for one spec.
#[derive(Debug, Clone, serde::Serialize)]
pub struct TubeCheck {
    pub min_h: f64,
    pub min_h_eps: f64,
    /// Largest eps keeping h >= 3/4 for this curvature and section.
    pub eps_limit_quarter: f64,
    pub twist: String,
    pub det_residual: f64,
    pub inverse_residual: f64,
    pub note: &'static str,
}

pub fn check(spec: &TubeSpec, schedule: Option<&MollifierSchedule>) -> Result<TubeCheck> {
    let jac = jacobians(spec, schedule)?;
    let metric = metric_bundle(&jac)?;
    let (det_residual, inverse_residual) = metric.residuals();
    Ok(TubeCheck {
        min_h: jac.min_h,
        min_h_eps: jac.min_h_eps,
        eps_limit_quarter: epsilon_max(&spec.pair, &spec.section, 0.25)?,
        twist: classify_twist(spec).to_string(),
        det_residual,
        inverse_residual,
        note: ABSTRACT_MANIFOLD_NOTE,
    })
}

/// Planar variant: a strip of half-width `a` about a curve with signed
/// curvature kappa. The Jacobian reduces to h = 1 - eps kappa t and there
/// is no rotation.
#[derive(Debug, Clone)]
pub struct StripSpec {
    pub grid: ArcGrid,
    pub kappa: Vec<f64>,
    pub half_width: f64,
    /// Number of interior transverse nodes.
    pub n_t: usize,
    pub eps: f64,
}

impl StripSpec {
    pub fn new(grid: ArcGrid, kappa: Vec<f64>, half_width: f64, n_t: usize, eps: f64) -> Result<Self> {
        if kappa.len() != grid.len() {
            return Err(Error::InvalidInput("kappa must match the grid".into()));
        }
        if kappa.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("kappa must be finite".into()));
        }
        positive_scalar(half_width, "strip half-width")?;
        positive_scalar(eps, "eps")?;
        if n_t < 3 {
            return Err(Error::InvalidInput(format!("n_t = {n_t} is too small")));
        }
        let ksup = kappa.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if ksup > 0.0 && eps >= 1.0 / (half_width * ksup) {
            return Err(Error::EpsilonTooLarge {
                eps,
                limit: 1.0 / (half_width * ksup),
                context: "strip thickness times curvature must stay below one".into(),
            });
        }
        Ok(Self { grid, kappa, half_width, n_t, eps })
    }

    pub fn kappa_inf(&self) -> f64 {
        self.kappa.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Transverse spacing of the interior nodes.
    pub fn dt(&self) -> f64 {
        2.0 * self.half_width / (self.n_t + 1) as f64
    }

    /// Transverse coordinate of interior node j.
    pub fn t_node(&self, j: usize) -> f64 {
        -self.half_width + (j + 1) as f64 * self.dt()
    }
}

fn positive_scalar(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::InvalidInput(format!("{what} must be positive, got {v}")))
    }
}

#[derive(Debug, Clone)]
pub struct StripJacobian {
    pub eps: f64,
    pub h: Vec<Vec<f64>>,
    pub h_eps: Vec<Vec<f64>>,
    pub kappa_eps: Vec<f64>,
    pub delta: Option<f64>,
    pub min_h: f64,
    pub min_h_eps: f64,
}

pub fn strip_jacobians(
    spec: &StripSpec,
    schedule: Option<&MollifierSchedule>,
) -> Result<StripJacobian> {
    let n = spec.grid.len();
    let eps = spec.eps;
    let (kappa_eps, delta) = match schedule {
        Some(sch) => {
            let d = sch.delta(eps);
            let f = SampledFunction::linear(spec.grid, spec.kappa.clone())?;
            (steklov(&f, d)?.values, Some(d))
        }
        None => (spec.kappa.clone(), None),
    };
    let mut h = vec![vec![0.0; spec.n_t]; n];
    let mut h_eps = vec![vec![0.0; spec.n_t]; n];
    let mut min_h = f64::INFINITY;
    let mut min_h_eps = f64::INFINITY;
    let mut argmin = (0usize, 0usize);
    for i in 0..n {
        for j in 0..spec.n_t {
            let t = spec.t_node(j);
            let hv = 1.0 - eps * spec.kappa[i] * t;
            let hev = 1.0 - eps * kappa_eps[i] * t;
            h[i][j] = hv;
            h_eps[i][j] = hev;
            if hv < min_h {
                min_h = hv;
                argmin = (i, j);
            }
            min_h_eps = min_h_eps.min(hev);
        }
    }
    if min_h <= 0.0 || min_h_eps <= 0.0 {
        return Err(Error::InadmissibleGeometry {
            s_node: argmin.0,
            t_node: argmin.1,
            h: min_h.min(min_h_eps),
        });
    }
    Ok(StripJacobian { eps, h, h_eps, kappa_eps, delta, min_h, min_h_eps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cross_section::Shape;
    use crate::curve::{build_from_curvatures, rpaf_from_embedding_with_normal};
    use approx::assert_relative_eq;
    use nalgebra::Vector3;

    fn section(spec: &str, n: usize) -> CrossSection {
        CrossSection::compute(&spec.parse::<Shape>().unwrap(), n).unwrap()
    }

    fn simple_spec(k1: Vec<f64>, k2: Vec<f64>, theta_dot: Vec<f64>, sec: CrossSection, eps: f64) -> TubeSpec {
        let n = k1.len();
        let grid = ArcGrid::new(0.0, 4.0, n).unwrap();
        let theta: Vec<f64> = {
            // theta is the primitive of theta_dot (trapezoid), so the two
            // stay consistent in tests.
            let ds = grid.delta();
            let mut acc = 0.0;
            let mut out = Vec::with_capacity(n);
            out.push(0.0);
            for i in 1..n {
                acc += 0.5 * (theta_dot[i - 1] + theta_dot[i]) * ds;
                out.push(acc);
            }
            out
        };
        TubeSpec::from_curvatures(&k1, &k2, grid, theta, theta_dot, sec, eps).unwrap()
    }

    #[test]
    fn straight_tube_has_unit_jacobian_and_pure_rotation_fields() {
        let n = 41;
        let sec = section("rect:1,1", 12);
        let spec = simple_spec(vec![0.0; n], vec![0.0; n], vec![0.7; n], sec, 0.1);
        let jac = jacobians(&spec, None).unwrap();
        for i in 0..n {
            for k in 0..spec.section.lattice.len() {
                assert_eq!(jac.h[i][k], 1.0);
                assert_eq!(jac.h_eps[i][k], 1.0);
                let (t1, t2) = spec.section.lattice.coords(k);
                assert_relative_eq!(jac.h2[i][k], -t1 * 0.7, epsilon = 1e-15);
                assert_relative_eq!(jac.h3[i][k], t2 * 0.7, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn jacobian_is_linear_in_transverse_coordinates() {
        let n = 33;
        let sec = section("rect:1,1", 10);
        let spec = simple_spec(vec![1.0; n], vec![0.0; n], vec![0.0; n], sec, 0.1);
        let jac = jacobians(&spec, None).unwrap();
        let bound = 1.0 - 0.1 * (0.5f64.powi(2) + 0.5f64.powi(2)).sqrt();
        for i in 0..n {
            for k in 0..spec.section.lattice.len() {
                let (t1, _) = spec.section.lattice.coords(k);
                assert_relative_eq!(jac.h[i][k], 1.0 - 0.1 * t1, epsilon = 1e-14);
            }
        }
        assert!(jac.min_h >= bound - 1e-12);
    }

    #[test]
    fn metric_matches_determinant_and_inversion_oracles() {
        let n = 25;
        let c = 1.0 / (1.0f64 + 0.25).sqrt();
        let k1: Vec<f64> = (0..n).map(|i| c * c * (0.3 * i as f64).cos()).collect();
        let k2: Vec<f64> = (0..n).map(|i| c * c * (0.3 * i as f64).sin()).collect();
        let sec = section("rect:1,0.8", 10);
        let spec = simple_spec(k1, k2, vec![0.5; n], sec, 0.1);
        let jac = jacobians(&spec, None).unwrap();
        let metric = metric_bundle(&jac).unwrap();
        let (det_res, inv_res) = metric.residuals();
        assert!(det_res <= 1e-12, "det residual {det_res:.3e}");
        assert!(inv_res <= 1e-10, "inverse residual {inv_res:.3e}");

        // Numeric inversion oracle on a few nodes.
        for &(i, k) in &[(0usize, 0usize), (7, 11), (24, 5)] {
            let gi = metric.g[i][k].try_inverse().unwrap();
            let d = (gi - metric.ginv[i][k]).abs().max();
            assert!(d <= 1e-10, "node ({i},{k}): inverse deviation {d:.3e}");
        }
    }

    #[test]
    fn flat_metric_of_straight_untwisted_tube() {
        let n = 11;
        let sec = section("rect:1,1", 8);
        let spec = simple_spec(vec![0.0; n], vec![0.0; n], vec![0.0; n], sec, 0.1);
        let jac = jacobians(&spec, None).unwrap();
        let metric = metric_bundle(&jac).unwrap();
        let expect = Matrix3::from_diagonal(&Vector3::new(1.0, 0.01, 0.01));
        assert!((metric.g[5][3] - expect).abs().max() <= 1e-15);
        assert_relative_eq!(metric.det_g[5][3], 1e-4, epsilon = 1e-18);
    }

    #[test]
    fn twist_classification_covers_all_clauses() {
        let n = 21;
        let disc = section("disc:0.5", 16);
        let spec = simple_spec(vec![0.0; n], vec![0.0; n], vec![3.0; n], disc, 0.1);
        assert_eq!(classify_twist(&spec), TwistClass::Untwisted(UntwistReason::CircularSection));

        let rect = section("rect:1,0.5", 12);
        let spec = simple_spec(vec![0.0; n], vec![0.0; n], vec![0.0; n], rect, 0.1);
        assert_eq!(classify_twist(&spec), TwistClass::Untwisted(UntwistReason::NoRotation));

        let rect = section("rect:1,0.5", 12);
        let spec = simple_spec(vec![0.0; n], vec![0.0; n], vec![1.0; n], rect, 0.1);
        assert_eq!(classify_twist(&spec), TwistClass::Twisted);
    }

    #[test]
    fn epsilon_limit_arithmetic() {
        let n = 9;
        let grid = ArcGrid::new(0.0, 1.0, n).unwrap();
        let mk = |k: f64| {
            let (_, _, pair) = build_from_curvatures(
                &vec![k; n],
                &vec![0.0; n],
                grid,
                Vector3::zeros(),
                (Vector3::x(), Vector3::y(), Vector3::z()),
            )
            .unwrap();
            pair
        };
        // Unit square: corner distance sqrt(2)/2... use explicit sections.
        let sec_r1 = section("disc:1", 16); // radius bound 1
        assert_relative_eq!(epsilon_max(&mk(1.0), &sec_r1, 0.25).unwrap(), 0.25);
        assert_eq!(epsilon_max(&mk(0.0), &sec_r1, 0.25).unwrap(), f64::INFINITY);
        let sec_half = section("disc:0.5", 16); // radius bound 1/2
        assert_relative_eq!(epsilon_max(&mk(2.0), &sec_half, 0.5).unwrap(), 0.5);
        assert!(epsilon_max(&mk(1.0), &sec_r1, 1.0).is_err());
    }

    #[test]
    fn oversized_epsilon_is_rejected_at_spec_construction() {
        let n = 15;
        let grid = ArcGrid::new(0.0, 2.0, n).unwrap();
        let sec = section("disc:1", 16);
        let r = TubeSpec::from_curvatures(
            &vec![1.0; n],
            &vec![0.0; n],
            grid,
            vec![0.0; n],
            vec![0.0; n],
            sec,
            1.1,
        );
        match r {
            Err(Error::EpsilonTooLarge { limit, .. }) => assert_relative_eq!(limit, 1.0),
            other => panic!("expected thickness rejection, got {other:?}"),
        }
    }

    #[test]
    fn mollified_jacobian_stays_near_the_raw_one() {
        let n = 801;
        let grid = ArcGrid::new(0.0, 4.0, n).unwrap();
        // Kinked curvature profile: rough enough that the window average
        // genuinely differs.
        let k1: Vec<f64> = grid.nodes().map(|s| 0.8 * (1.0 - (s - 2.0).abs() / 2.0)).collect();
        let k2 = vec![0.0; n];
        let sec = section("rect:1,1", 12);
        let eps = 0.05;
        let spec = TubeSpec::from_curvatures(
            &k1,
            &k2,
            grid,
            vec![0.0; n],
            vec![0.0; n],
            sec,
            eps,
        )
        .unwrap();
        let schedule = MollifierSchedule::two_thirds();
        let jac = jacobians(&spec, Some(&schedule)).unwrap();

        let a = spec.section.radius_bound;
        let dk1: f64 = spec
            .pair
            .k1
            .iter()
            .zip(&jac.k1_eps)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        let mut worst = 0.0f64;
        let mut worst_ratio = 0.0f64;
        for i in 0..n {
            for k in 0..spec.section.lattice.len() {
                worst = worst.max((jac.h[i][k] - jac.h_eps[i][k]).abs());
                worst_ratio =
                    worst_ratio.max(((jac.h[i][k] / jac.h_eps[i][k]).powf(0.25) - 1.0).abs());
            }
        }
        assert!(worst <= 2.0 * eps * a * dk1 + 1e-12, "{worst} vs {}", 2.0 * eps * a * dk1);
        let ksup = spec.pair.kappa_inf();
        assert!(worst <= 8.0 * eps * a * ksup);
        assert!(worst_ratio <= 5.0 * eps * a * ksup, "quarter-power ratio {worst_ratio}");
    }

    #[test]
    fn jacobian_is_invariant_under_frame_seed_rotation() {
        // Rotating the parallel-frame seed by alpha and shifting theta by
        // -alpha describes the same tube; h must not change.
        let n = 1200;
        let grid = ArcGrid::new(0.0, 6.0, n).unwrap();
        let c = 1.0 / (1.0f64 + 0.25).sqrt();
        let gamma: Vec<Vector3<f64>> = grid
            .nodes()
            .map(|s| Vector3::new((c * s).cos(), (c * s).sin(), 0.5 * c * s))
            .collect();
        let curve = SampledCurve::from_points(grid, gamma).unwrap();
        let (frame_a, pair_a) = rpaf_from_embedding_with_normal(&curve, None, None).unwrap();
        let alpha: f64 = 0.61;
        let seed = frame_a.m1[0] * alpha.cos() + frame_a.m2[0] * alpha.sin();
        let (frame_b, pair_b) =
            rpaf_from_embedding_with_normal(&curve, Some(seed), None).unwrap();

        let sec = section("rect:1,0.5", 10);
        let theta_a: Vec<f64> = grid.nodes().map(|s| 0.3 * s).collect();
        let theta_b: Vec<f64> = grid.nodes().map(|s| 0.3 * s - alpha).collect();
        let td: Vec<f64> = vec![0.3; n];
        let spec_a = TubeSpec::new(
            curve.clone(),
            frame_a,
            pair_a,
            theta_a,
            td.clone(),
            sec.clone(),
            0.1,
        )
        .unwrap();
        let spec_b =
            TubeSpec::new(curve, frame_b, pair_b, theta_b, td, sec, 0.1).unwrap();
        let jac_a = jacobians(&spec_a, None).unwrap();
        let jac_b = jacobians(&spec_b, None).unwrap();
        let mut worst = 0.0f64;
        for i in 0..n {
            for k in 0..spec_a.section.lattice.len() {
                worst = worst.max((jac_a.h[i][k] - jac_b.h[i][k]).abs());
            }
        }
        assert!(worst <= 1e-12, "h changed by {worst:.3e} under seed rotation");
    }

    #[test]
    fn strip_jacobian_is_exact_and_validated() {
        let n = 101;
        let grid = ArcGrid::new(0.0, 10.0, n).unwrap();
        let kappa: Vec<f64> = grid.nodes().map(|s| (0.5 * s).sin()).collect();
        let spec = StripSpec::new(grid, kappa.clone(), 1.0, 15, 0.2).unwrap();
        let jac = strip_jacobians(&spec, None).unwrap();
        for i in 0..n {
            for j in 0..15 {
                assert_relative_eq!(
                    jac.h[i][j],
                    1.0 - 0.2 * kappa[i] * spec.t_node(j),
                    epsilon = 1e-15
                );
            }
        }
        assert!(jac.min_h >= 1.0 - 0.2 * 1.0 * (1.0 - spec.dt()));

        let too_thick = StripSpec::new(grid, vec![2.0; n], 1.0, 15, 0.6);
        assert!(matches!(too_thick, Err(Error::EpsilonTooLarge { .. })));
    }
}
