//! Unit-speed curves on uniform arc-length grids, relatively parallel
//! adapted frames, and curvature data.
//!
//! A frame here is an orthonormal triple (T, M1, M2) attached to the curve
//! whose normal part does not rotate about the tangent: it satisfies
//! T' = k1 M1 + k2 M2 and M_mu' = -k_mu T. The pair (k1, k2) determines the
//! curve up to rigid motion, and kappa = sqrt(k1^2 + k2^2) is independent of
//! the normal basis chosen at the first node. The classical Frenet data,
//! where it exists, is a rotation of (M1, M2) by the running angle
//! atan2(k2, k1).

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default relative tolerance for the unit-speed chord check.
pub const DEFAULT_CHORD_TOL: f64 = 1e-6;

/// Chords of a unit-speed curve never exceed arc length; allow only
/// floating-point headroom above 1.
const CHORD_UPPER_SLACK: f64 = 1e-9;

/// Uniform grid on an arc-length interval [s_min, s_max].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArcGrid {
    s_min: f64,
    s_max: f64,
    n: usize,
}

impl ArcGrid {
    /// Builds a grid with `n >= 2` nodes, endpoints included.
    pub fn new(s_min: f64, s_max: f64, n: usize) -> Result<Self> {
        if !s_min.is_finite() || !s_max.is_finite() {
            return Err(Error::InvalidInput("grid endpoints must be finite".into()));
        }
        if s_max <= s_min {
            return Err(Error::InvalidInput(format!(
                "grid needs s_max > s_min, got [{s_min}, {s_max}]"
            )));
        }
        if n < 2 {
            return Err(Error::InvalidInput(format!("grid needs n >= 2 nodes, got {n}")));
        }
        Ok(Self { s_min, s_max, n })
    }

    pub fn s_min(&self) -> f64 {
        self.s_min
    }

    pub fn s_max(&self) -> f64 {
        self.s_max
    }

    /// Number of nodes.
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Node spacing.
    pub fn delta(&self) -> f64 {
        (self.s_max - self.s_min) / (self.n - 1) as f64
    }

    /// i-th node coordinate.
    pub fn node(&self, i: usize) -> f64 {
        debug_assert!(i < self.n);
        self.s_min + self.delta() * i as f64
    }

    /// Iterator over node coordinates.
    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(move |i| self.node(i))
    }

    /// Length of the interval.
    pub fn span(&self) -> f64 {
        self.s_max - self.s_min
    }
}

/// How a sampled curve was produced; analysis steps check this to pick
/// defaults but never change numerics based on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    /// Integrated from curvature samples.
    FromCurvatures,
    /// Supplied as an embedded point list.
    Embedded,
}

/// Unit-speed curve sampled on an [`ArcGrid`].
#[derive(Debug, Clone)]
pub struct SampledCurve {
    pub grid: ArcGrid,
    pub gamma: Vec<Vector3<f64>>,
    pub provenance: Provenance,
}

impl SampledCurve {
    /// Wraps an embedded point list, checking lengths and finiteness.
    /// The unit-speed property itself is validated by the analysis entry
    /// points, which take a chord tolerance.
    pub fn from_points(grid: ArcGrid, gamma: Vec<Vector3<f64>>) -> Result<Self> {
        if gamma.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "curve has {} points but grid has {} nodes",
                gamma.len(),
                grid.len()
            )));
        }
        if gamma.iter().any(|p| !p.x.is_finite() || !p.y.is_finite() || !p.z.is_finite()) {
            return Err(Error::InvalidInput("curve points must be finite".into()));
        }
        Ok(Self { grid, gamma, provenance: Provenance::Embedded })
    }

    /// Largest deviation of chord length from arc length, as a ratio.
    pub fn worst_chord_ratio(&self) -> (usize, f64) {
        let ds = self.grid.delta();
        let mut worst = (0usize, 1.0f64);
        for i in 0..self.gamma.len() - 1 {
            let ratio = (self.gamma[i + 1] - self.gamma[i]).norm() / ds;
            if (ratio - 1.0).abs() > (worst.1 - 1.0).abs() {
                worst = (i, ratio);
            }
        }
        worst
    }

    fn check_unit_speed(&self, ctol: f64) -> Result<()> {
        let ds = self.grid.delta();
        for i in 0..self.gamma.len() - 1 {
            let ratio = (self.gamma[i + 1] - self.gamma[i]).norm() / ds;
            if ratio < 1.0 - ctol || ratio > 1.0 + CHORD_UPPER_SLACK {
                return Err(Error::UnitSpeed { node: i, ratio, tol: ctol });
            }
        }
        Ok(())
    }
}

/// Orthonormal adapted frame sampled along the curve.
#[derive(Debug, Clone)]
pub struct Frame {
    pub t: Vec<Vector3<f64>>,
    pub m1: Vec<Vector3<f64>>,
    pub m2: Vec<Vector3<f64>>,
}

impl Frame {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Worst orthonormality defect over all nodes: the largest deviation of
    /// the Gram matrix from the identity, plus the deviation of the triple
    /// from right-handedness.
    pub fn orthonormality_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.len() {
            let (t, m1, m2) = (self.t[i], self.m1[i], self.m2[i]);
            worst = worst
                .max((t.norm() - 1.0).abs())
                .max((m1.norm() - 1.0).abs())
                .max((m2.norm() - 1.0).abs())
                .max(t.dot(&m1).abs())
                .max(t.dot(&m2).abs())
                .max(m1.dot(&m2).abs())
                .max((t.cross(&m1) - m2).norm());
        }
        worst
    }
}

/// Frame curvature components and the frame-independent total curvature.
#[derive(Debug, Clone)]
pub struct CurvaturePair {
    pub k1: Vec<f64>,
    pub k2: Vec<f64>,
    pub kappa: Vec<f64>,
}

impl CurvaturePair {
    pub fn new(k1: Vec<f64>, k2: Vec<f64>) -> Result<Self> {
        if k1.len() != k2.len() {
            return Err(Error::InvalidInput("k1 and k2 must have equal length".into()));
        }
        if k1.iter().chain(k2.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("curvature samples must be finite".into()));
        }
        let kappa = k1.iter().zip(&k2).map(|(a, b)| a.hypot(*b)).collect();
        Ok(Self { k1, k2, kappa })
    }

    pub fn len(&self) -> usize {
        self.k1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k1.is_empty()
    }

    /// sup-norm of the total curvature.
    pub fn kappa_inf(&self) -> f64 {
        self.kappa.iter().cloned().fold(0.0, f64::max)
    }
}

/// Frenet normal/binormal, torsion and the angle between the Frenet normal
/// and M1, on the nodes where the total curvature stays above a floor.
#[derive(Debug, Clone)]
pub struct FrenetData {
    pub normal: Vec<Vector3<f64>>,
    pub binormal: Vec<Vector3<f64>>,
    pub tau: Vec<f64>,
    pub vartheta: Vec<f64>,
    /// Nodes where kappa >= floor; entries elsewhere are zeroed and carry
    /// no meaning.
    pub defined: Vec<bool>,
}

fn skew(w: Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// Rotation exp([w]_x * h) applied as a matrix, stable for small angles.
fn rotation_step(w: Vector3<f64>, h: f64) -> Matrix3<f64> {
    let angle = w.norm() * h;
    if angle < 1e-12 {
        let k = skew(w * h);
        return Matrix3::identity() + k + k * k * 0.5;
    }
    let k = skew(w / w.norm());
    Matrix3::identity() + k * angle.sin() + k * k * (1.0 - angle.cos())
}

/// Integral of the rotation over one step: V = int_0^h exp([w]_x u) du.
/// Multiplying the initial tangent by V gives the exact position increment
/// when the curvature is constant over the step, so circular arcs close to
/// machine precision.
fn rotation_step_integral(w: Vector3<f64>, h: f64) -> Matrix3<f64> {
    let speed = w.norm();
    let angle = speed * h;
    if angle < 1e-6 {
        // Series in [w]_x h: h I + h^2/2 K + h^3/6 K^2 with K = [w]_x.
        let k = skew(w);
        return Matrix3::identity() * h + k * (h * h / 2.0) + k * k * (h * h * h / 6.0);
    }
    let k = skew(w / speed);
    Matrix3::identity() * h
        + k * ((1.0 - angle.cos()) / speed)
        + k * k * (h - angle.sin() / speed)
}

fn orthonormalize(t: &mut Vector3<f64>, m1: &mut Vector3<f64>, m2: &mut Vector3<f64>) {
    *t /= t.norm();
    *m1 -= t.clone_owned() * t.dot(m1);
    *m1 /= m1.norm();
    *m2 = t.cross(m1);
}

fn validate_frame_triple(t: &Vector3<f64>, m1: &Vector3<f64>, m2: &Vector3<f64>) -> Result<()> {
    let tol = 1e-12;
    let defect = (t.norm() - 1.0)
        .abs()
        .max((m1.norm() - 1.0).abs())
        .max((m2.norm() - 1.0).abs())
        .max(t.dot(m1).abs())
        .max(t.dot(m2).abs())
        .max(m1.dot(m2).abs())
        .max((t.cross(m1) - m2).norm());
    if defect > tol {
        return Err(Error::InvalidInput(format!(
            "initial frame is not orthonormal right-handed: defect {defect:.3e} > {tol:.0e}"
        )));
    }
    Ok(())
}

/// Integrates the frame system T' = k1 M1 + k2 M2, M_mu' = -k_mu T from
/// curvature samples, producing the curve, its frame and the echoed
/// curvature pair.
///
/// Each step rotates the frame exactly (Rodrigues formula) about the
/// instantaneous rotation vector -k2 M1 + k1 M2 evaluated from
/// midpoint-averaged curvature, and advances the position by the exact
/// integral of the rotated tangent. The frame is re-orthonormalised after
/// every step, so the orthonormality defect stays near machine precision
/// over millions of nodes.
///
/// # Input
/// * `k1`, `k2` - curvature samples on the grid nodes (equal length `grid.len()`)
/// * `init_point` - curve position at `s_min`
/// * `init_frame` - right-handed orthonormal (T, M1, M2) at `s_min`
pub fn build_from_curvatures(
    k1: &[f64],
    k2: &[f64],
    grid: ArcGrid,
    init_point: Vector3<f64>,
    init_frame: (Vector3<f64>, Vector3<f64>, Vector3<f64>),
) -> Result<(SampledCurve, Frame, CurvaturePair)> {
    let n = grid.len();
    if n < 3 {
        return Err(Error::InvalidInput(format!("need at least 3 nodes, got {n}")));
    }
    if k1.len() != n || k2.len() != n {
        return Err(Error::InvalidInput(format!(
            "curvature arrays must match the grid: got {} and {}, grid {}",
            k1.len(),
            k2.len(),
            n
        )));
    }
    if k1.iter().chain(k2.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("curvature samples must be finite".into()));
    }
    let (t0, m10, m20) = init_frame;
    validate_frame_triple(&t0, &m10, &m20)?;
    if !init_point.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidInput("initial point must be finite".into()));
    }

    let ds = grid.delta();
    let mut gamma = Vec::with_capacity(n);
    let mut t = Vec::with_capacity(n);
    let mut m1 = Vec::with_capacity(n);
    let mut m2 = Vec::with_capacity(n);

    gamma.push(init_point);
    t.push(t0);
    m1.push(m10);
    m2.push(m20);

    for i in 0..n - 1 {
        let k1m = 0.5 * (k1[i] + k1[i + 1]);
        let k2m = 0.5 * (k2[i] + k2[i + 1]);
        // Instantaneous rotation vector of the frame in world coordinates.
        let w = m1[i] * (-k2m) + m2[i] * k1m;
        let rot = rotation_step(w, ds);
        let v = rotation_step_integral(w, ds);

        gamma.push(gamma[i] + v * t[i]);
        let mut tn = rot * t[i];
        let mut m1n = rot * m1[i];
        let mut m2n = rot * m2[i];
        orthonormalize(&mut tn, &mut m1n, &mut m2n);
        t.push(tn);
        m1.push(m1n);
        m2.push(m2n);
    }

    let curve = SampledCurve { grid, gamma, provenance: Provenance::FromCurvatures };
    let frame = Frame { t, m1, m2 };
    let pair = CurvaturePair::new(k1.to_vec(), k2.to_vec())?;
    Ok((curve, frame, pair))
}

/// Second-order tangent estimates: centered differences inside, one-sided
/// three-point stencils at the ends.
fn tangent_estimates(curve: &SampledCurve) -> Vec<Vector3<f64>> {
    let n = curve.gamma.len();
    let ds = curve.grid.delta();
    let g = &curve.gamma;
    let mut t = Vec::with_capacity(n);
    // Third-order one-sided stencils at the ends keep the curvature
    // recovery (one more difference of these tangents) second order all
    // the way to the boundary.
    if n >= 4 {
        t.push((g[0] * -11.0 + g[1] * 18.0 - g[2] * 9.0 + g[3] * 2.0) / (6.0 * ds));
    } else {
        t.push((-g[2] + g[1] * 4.0 - g[0] * 3.0) / (2.0 * ds));
    }
    for i in 1..n - 1 {
        t.push((g[i + 1] - g[i - 1]) / (2.0 * ds));
    }
    if n >= 4 {
        t.push(
            (g[n - 1] * 11.0 - g[n - 2] * 18.0 + g[n - 3] * 9.0 - g[n - 4] * 2.0) / (6.0 * ds),
        );
    } else {
        t.push((g[n - 1] * 3.0 - g[n - 2] * 4.0 + g[n - 3]) / (2.0 * ds));
    }
    t
}

/// Least-aligned coordinate axis, projected orthogonally to `t`.
fn default_normal(t: &Vector3<f64>) -> Vector3<f64> {
    let ax = t.x.abs();
    let ay = t.y.abs();
    let az = t.z.abs();
    let pick = if ax <= ay && ax <= az {
        Vector3::x()
    } else if ay <= az {
        Vector3::y()
    } else {
        Vector3::z()
    };
    let mut m = pick - t * t.dot(&pick);
    m /= m.norm();
    m
}

/// Rotation taking unit vector `a` to unit vector `b` about the axis
/// `a x b`; identity when they are already aligned.
fn transport_rotation(a: &Vector3<f64>, b: &Vector3<f64>) -> Matrix3<f64> {
    let axis = a.cross(b);
    let sin = axis.norm();
    let cos = a.dot(b).clamp(-1.0, 1.0);
    if sin < 1e-20 {
        if cos > 0.0 {
            return Matrix3::identity();
        }
        // Antipodal tangents over one step mean the sampling is far too
        // coarse; rotate half-turn about any perpendicular axis.
        let perp = default_normal(a);
        let k = skew(perp);
        return Matrix3::identity() + k * k * 2.0;
    }
    let k = skew(axis / sin);
    let angle = sin.atan2(cos);
    Matrix3::identity() + k * angle.sin() + k * k * (1.0 - angle.cos())
}

/// Recovers a relatively parallel frame and curvature pair from an embedded
/// unit-speed curve, using a default first normal.
///
/// Tangents come from second-order finite differences; normals are moved
/// node to node by the rotation taking each tangent into the next, which is
/// the discrete version of parallel transport and keeps the normal part of
/// the frame from spinning about the tangent. Curvature components are read
/// off as k_mu = T' . M_mu.
///
/// The chord-length/arc-length ratio is checked against `ctol`
/// ([`DEFAULT_CHORD_TOL`] when `None`); data failing the check is rejected
/// as not unit-speed.
pub fn rpaf_from_embedding(
    curve: &SampledCurve,
    ctol: Option<f64>,
) -> Result<(Frame, CurvaturePair)> {
    rpaf_from_embedding_with_normal(curve, None, ctol)
}

/// Same as [`rpaf_from_embedding`], but seeds the transport with a chosen
/// first normal (projected orthogonally to the first tangent). Different
/// seeds rotate the recovered (k1, k2) by one constant angle and leave
/// kappa unchanged.
pub fn rpaf_from_embedding_with_normal(
    curve: &SampledCurve,
    first_normal: Option<Vector3<f64>>,
    ctol: Option<f64>,
) -> Result<(Frame, CurvaturePair)> {
    let n = curve.gamma.len();
    if n < 3 {
        return Err(Error::InvalidInput(format!("need at least 3 nodes, got {n}")));
    }
    let ctol = ctol.unwrap_or(DEFAULT_CHORD_TOL);
    if !(ctol.is_finite() && ctol > 0.0) {
        return Err(Error::InvalidInput("chord tolerance must be positive".into()));
    }
    curve.check_unit_speed(ctol)?;

    let raw_t = tangent_estimates(curve);
    let mut t: Vec<Vector3<f64>> = raw_t.iter().map(|v| v / v.norm()).collect();

    let mut m1 = Vec::with_capacity(n);
    let mut m2 = Vec::with_capacity(n);
    let first = match first_normal {
        Some(seed) => {
            let mut m = seed - t[0] * t[0].dot(&seed);
            let norm = m.norm();
            if !(norm.is_finite() && norm > 1e-12) {
                return Err(Error::InvalidInput(
                    "first normal is parallel to the initial tangent".into(),
                ));
            }
            m /= norm;
            m
        }
        None => default_normal(&t[0]),
    };
    m1.push(first);
    m2.push(t[0].cross(&first));

    for i in 0..n - 1 {
        let rot = transport_rotation(&t[i], &t[i + 1]);
        let mut tn = t[i + 1];
        let mut m1n = rot * m1[i];
        let mut m2n = rot * m2[i];
        orthonormalize(&mut tn, &mut m1n, &mut m2n);
        t[i + 1] = tn;
        m1.push(m1n);
        m2.push(m2n);
    }

    // Curvature components come from second differences of the positions
    // themselves, projected on the normals. Differencing the estimated
    // tangents instead would mix the centered and one-sided error families
    // near the ends and lose an order there.
    let ds = curve.grid.delta();
    let g = &curve.gamma;
    let mut k1 = Vec::with_capacity(n);
    let mut k2 = Vec::with_capacity(n);
    for i in 0..n {
        let ddg = if i == 0 && n >= 4 {
            (g[0] * 2.0 - g[1] * 5.0 + g[2] * 4.0 - g[3]) / (ds * ds)
        } else if i == n - 1 && n >= 4 {
            (g[n - 1] * 2.0 - g[n - 2] * 5.0 + g[n - 3] * 4.0 - g[n - 4]) / (ds * ds)
        } else {
            let c = i.clamp(1, n - 2);
            (g[c + 1] - g[c] * 2.0 + g[c - 1]) / (ds * ds)
        };
        k1.push(ddg.dot(&m1[i]));
        k2.push(ddg.dot(&m2[i]));
    }

    let frame = Frame { t, m1, m2 };
    let pair = CurvaturePair::new(k1, k2)?;
    Ok((frame, pair))
}

/// Extracts the Frenet data wherever the total curvature stays at or above
/// `kappa_floor`. The rotation angle vartheta = atan2(k2, k1) is unwrapped
/// separately on each maximal run of defined nodes, and the torsion is its
/// arc-length derivative on the spacing `ds` (centered inside a run,
/// one-sided at run edges).
pub fn frenet_of(
    frame: &Frame,
    pair: &CurvaturePair,
    kappa_floor: f64,
    ds: f64,
) -> Result<FrenetData> {
    let n = frame.len();
    if pair.len() != n {
        return Err(Error::InvalidInput("frame and curvature lengths differ".into()));
    }
    if !(ds.is_finite() && ds > 0.0) {
        return Err(Error::InvalidInput("node spacing must be positive".into()));
    }
    if !(kappa_floor.is_finite() && kappa_floor > 0.0) {
        return Err(Error::InvalidInput("kappa floor must be positive".into()));
    }

    let defined: Vec<bool> = pair.kappa.iter().map(|&k| k >= kappa_floor).collect();
    let mut normal = vec![Vector3::zeros(); n];
    let mut binormal = vec![Vector3::zeros(); n];
    let mut vartheta = vec![0.0; n];
    let mut tau = vec![0.0; n];

    let mut i = 0;
    while i < n {
        if !defined[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i < n && defined[i] {
            i += 1;
        }
        let end = i; // run is [start, end)

        vartheta[start] = pair.k2[start].atan2(pair.k1[start]);
        for j in start + 1..end {
            let raw = pair.k2[j].atan2(pair.k1[j]);
            let mut d = raw - vartheta[j - 1];
            d -= (d / std::f64::consts::TAU).round() * std::f64::consts::TAU;
            vartheta[j] = vartheta[j - 1] + d;
        }
        for j in start..end {
            let (c, s) = (vartheta[j].cos(), vartheta[j].sin());
            let nvec = frame.m1[j] * c + frame.m2[j] * s;
            normal[j] = nvec;
            binormal[j] = frame.t[j].cross(&nvec);
        }
        let len = end - start;
        for j in start..end {
            tau[j] = if len == 1 {
                0.0
            } else if j == start {
                if len >= 3 {
                    (-vartheta[start + 2] + 4.0 * vartheta[start + 1] - 3.0 * vartheta[start])
                        / (2.0 * ds)
                } else {
                    (vartheta[start + 1] - vartheta[start]) / ds
                }
            } else if j == end - 1 {
                if len >= 3 {
                    (3.0 * vartheta[end - 1] - 4.0 * vartheta[end - 2] + vartheta[end - 3])
                        / (2.0 * ds)
                } else {
                    (vartheta[end - 1] - vartheta[end - 2]) / ds
                }
            } else {
                (vartheta[j + 1] - vartheta[j - 1]) / (2.0 * ds)
            };
        }
    }
    Ok(FrenetData { normal, binormal, tau, vartheta, defined })
}

/// Direction of a cross-section angle conversion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AngleConvention {
    /// From an angle measured against the parallel frame to one measured
    /// against the Frenet frame: adds the accumulated torsion integral.
    ParallelToFrenet,
    /// Inverse map: subtracts the accumulated torsion integral.
    FrenetToParallel,
}

/// Converts a cross-section rotation angle between the parallel-frame and
/// Frenet-frame conventions: theta_F = theta + int tau ds (trapezoid rule
/// from `s_min`). Torsion samples must be defined on all nodes involved.
pub fn frenet_angle_convert(
    theta: &[f64],
    tau: &[f64],
    direction: AngleConvention,
    grid: ArcGrid,
) -> Result<Vec<f64>> {
    let n = grid.len();
    if theta.len() != n || tau.len() != n {
        return Err(Error::InvalidInput(format!(
            "angle/torsion arrays must match the grid: {} and {} vs {}",
            theta.len(),
            tau.len(),
            n
        )));
    }
    if theta.iter().chain(tau.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("angle and torsion samples must be finite".into()));
    }
    let ds = grid.delta();
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        if i > 0 {
            acc += 0.5 * (tau[i - 1] + tau[i]) * ds;
        }
        out.push(match direction {
            AngleConvention::ParallelToFrenet => theta[i] + acc,
            AngleConvention::FrenetToParallel => theta[i] - acc,
        });
    }
    Ok(out)
}

pub mod table {
    //! Plain-text tables for curve data: whitespace-separated columns, one
    //! node per line, `#` comments allowed.

    use nalgebra::Vector3;

    use super::{ArcGrid, CurvaturePair, Frame, SampledCurve};
    use crate::error::{Error, Result};

    fn parse_rows(text: &str, cols: usize) -> Result<Vec<Vec<f64>>> {
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let row: Vec<f64> = line
                .split_whitespace()
                .map(|tok| {
                    tok.parse::<f64>().map_err(|_| {
                        Error::Parse(format!("line {}: bad number {tok:?}", lineno + 1))
                    })
                })
                .collect::<Result<_>>()?;
            if row.len() != cols {
                return Err(Error::Parse(format!(
                    "line {}: expected {cols} columns, found {}",
                    lineno + 1,
                    row.len()
                )));
            }
            rows.push(row);
        }
        if rows.len() < 2 {
            return Err(Error::Parse("table needs at least 2 rows".into()));
        }
        Ok(rows)
    }

    fn grid_from_s(svals: &[f64]) -> Result<ArcGrid> {
        let n = svals.len();
        let grid = ArcGrid::new(svals[0], svals[n - 1], n)?;
        let ds = grid.delta();
        for (i, &s) in svals.iter().enumerate() {
            if (s - grid.node(i)).abs() > 1e-9 * ds.max(1.0) {
                return Err(Error::Parse(format!(
                    "s column is not a uniform grid at row {i}: {s} vs {}",
                    grid.node(i)
                )));
            }
        }
        Ok(grid)
    }

    /// Parses `s x y z` rows into a sampled curve.
    pub fn parse_embedding(text: &str) -> Result<SampledCurve> {
        let rows = parse_rows(text, 4)?;
        let svals: Vec<f64> = rows.iter().map(|r| r[0]).collect();
        let grid = grid_from_s(&svals)?;
        let gamma = rows.iter().map(|r| Vector3::new(r[1], r[2], r[3])).collect();
        SampledCurve::from_points(grid, gamma)
    }

    /// Parses `s value` rows into a grid and scalar samples.
    pub fn parse_samples(text: &str) -> Result<(ArcGrid, Vec<f64>)> {
        let rows = parse_rows(text, 2)?;
        let svals: Vec<f64> = rows.iter().map(|r| r[0]).collect();
        let grid = grid_from_s(&svals)?;
        Ok((grid, rows.iter().map(|r| r[1]).collect()))
    }

    /// Parses `s k1 k2 theta` rows into grid, curvature pair and angle.
    pub fn parse_curvatures(text: &str) -> Result<(ArcGrid, CurvaturePair, Vec<f64>)> {
        let rows = parse_rows(text, 4)?;
        let svals: Vec<f64> = rows.iter().map(|r| r[0]).collect();
        let grid = grid_from_s(&svals)?;
        let k1: Vec<f64> = rows.iter().map(|r| r[1]).collect();
        let k2: Vec<f64> = rows.iter().map(|r| r[2]).collect();
        let theta: Vec<f64> = rows.iter().map(|r| r[3]).collect();
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse("theta column must be finite".into()));
        }
        Ok((grid, CurvaturePair::new(k1, k2)?, theta))
    }

    /// Writes `s T M1 M2 k1 k2 kappa` rows (13 columns).
    pub fn format_frame(grid: &ArcGrid, frame: &Frame, pair: &CurvaturePair) -> String {
        let mut out = String::from("# s tx ty tz m1x m1y m1z m2x m2y m2z k1 k2 kappa\n");
        for i in 0..grid.len() {
            let (t, m1, m2) = (frame.t[i], frame.m1[i], frame.m2[i]);
            out.push_str(&format!(
                "{} {} {} {} {} {} {} {} {} {} {} {} {}\n",
                grid.node(i),
                t.x,
                t.y,
                t.z,
                m1.x,
                m1.y,
                m1.z,
                m2.x,
                m2.y,
                m2.z,
                pair.k1[i],
                pair.k2[i],
                pair.kappa[i]
            ));
        }
        out
    }
}
