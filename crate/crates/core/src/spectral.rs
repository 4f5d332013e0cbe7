//! Discrete operators on the straightened tube.
//!
//! The longitudinal grid keeps Dirichlet endpoints, so degrees of freedom
//! live on interior s-levels; each level carries one copy of the
//! cross-section lattice (or the transverse interval for planar strips),
//! indexed s-major. Stiffness matrices are assembled edge by edge as outer
//! products of small linear functionals, which makes them symmetric by
//! construction, and all measure weights are lumped into a positive
//! diagonal so that the flattening to plain l2 is an exact diagonal
//! congruence rather than an approximation.
//!
//! Two assemblies of the same tube are supported: `Direct` discretizes the
//! raw weighted form of the metric, `Mollified` discretizes the seven-term
//! form whose curvature coefficients are window averages; the rotation
//! rate is never smoothed. Alongside them live the effective
//! one-dimensional Hamiltonian, the tensor comparison operator that shares
//! its longitudinal part, and estimators for the distance between
//! resolvents together with the theoretical rate bracket.

use serde::Serialize;

use crate::cross_section::CrossSection;
use crate::curve::ArcGrid;
use crate::error::{Error, Result};
use crate::linalg::{
    lanczos_extreme, lowest_eigs_shift_invert, seeded_unit_vector, symmetric_operator_norm,
    BandedCholesky, RitzSide, SparseSym,
};
use crate::mollify::{
    shift_modulus, sigma, steklov_derivative, MollifierSchedule, SampledFunction,
};
use crate::tube::{JacobianField, StripJacobian, StripSpec, TubeSpec};

/// Relative residual demanded from eigenvalue extraction.
pub const EIG_TOL: f64 = 1e-9;
/// Relative residual tolerance of the resolvent-gap norm estimate.
pub const NORM_TOL: f64 = 1e-6;
/// Krylov step cap of the resolvent-gap norm estimate.
pub const NORM_CAP: usize = 500;

const EIG_SEED: u64 = 0x7ab5;
const GAP_SEED: u64 = 0x9e1a;
const PERP_SEED: u64 = 0x51ce;
const EIG_CAP: usize = 900;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DimTag {
    OneD,
    Strip2d,
    Tube3d,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AssemblyMode {
    Direct,
    Mollified,
}

/// Which effective Hamiltonian to build: the spatial tube keeps the
/// rotation term, the planar strip has none.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EffectiveModel {
    Tube,
    Strip,
}

/// Grid bookkeeping shared by all operators over the same tube.
#[derive(Debug, Clone)]
pub struct OperatorMeta {
    pub dim: DimTag,
    pub mode: AssemblyMode,
    pub eps: f64,
    pub ds: f64,
    /// Interior longitudinal levels (both endpoints are Dirichlet).
    pub n_s: usize,
    /// Transverse nodes per level; 1 for one-dimensional operators.
    pub n_t: usize,
    /// Transverse cell measure entering the lumped weight.
    pub cell: f64,
    /// Ground and first excited eigenvalues of the transverse stencil.
    pub e1_disc: f64,
    pub e2_disc: f64,
}

/// Weighted pencil (K, W): stiffness plus lumped diagonal measure.
#[derive(Debug, Clone)]
pub struct GridOperator {
    pub stiffness: SparseSym,
    pub weight: Vec<f64>,
    pub meta: OperatorMeta,
}

/// Plain-l2 symmetric operator, W^{-1/2} K W^{-1/2} of some pencil.
/// `renorm` records the scalar already subtracted from the diagonal.
#[derive(Debug, Clone)]
pub struct FlatOperator {
    pub matrix: SparseSym,
    pub renorm: f64,
    pub meta: OperatorMeta,
}

/// Outer-product assembler: feed it weighted squares and products of
/// sparse linear functionals and it produces an exactly symmetric matrix.
struct FormBuilder {
    dim: usize,
    triplets: Vec<(usize, usize, f64)>,
}

impl FormBuilder {
    fn new(dim: usize, capacity: usize) -> Self {
        Self { dim, triplets: Vec::with_capacity(capacity) }
    }

    /// Adds w * (c psi)^2. The product is grouped as w * (ca * cb) so the
    /// (a, b) and (b, a) entries round identically and the finished matrix
    /// is symmetric bitwise, not just up to rounding.
    fn square(&mut self, c: &[(usize, f64)], w: f64) {
        for &(a, ca) in c {
            for &(b, cb) in c {
                self.triplets.push((a, b, w * (ca * cb)));
            }
        }
    }

    /// Adds w * (c psi)(d psi), split evenly between (a,b) and (b,a).
    fn product(&mut self, c: &[(usize, f64)], d: &[(usize, f64)], w: f64) {
        for &(a, ca) in c {
            for &(b, db) in d {
                let v = 0.5 * w * ca * db;
                self.triplets.push((a, b, v));
                self.triplets.push((b, a, v));
            }
        }
    }

    fn diag(&mut self, i: usize, v: f64) {
        self.triplets.push((i, i, v));
    }

    fn finish(self) -> Result<SparseSym> {
        SparseSym::from_triplets(self.dim, self.triplets)
    }
}

fn push_dof(c: &mut Vec<(usize, f64)>, idx: Option<usize>, v: f64) {
    if v == 0.0 {
        return;
    }
    if let Some(g) = idx {
        c.push((g, v));
    }
}

/// Discretizes the tube form on the tensor grid.
///
/// `Direct` assembles eps^2/h |D psi|^2 + h |grad' psi|^2 against the
/// lumped weight eps^2 h; `Mollified` assembles the seven-term form with
/// window-averaged curvatures against the weight h/h_eps, including the
/// transverse ground-energy subtraction, so its flattening needs no
/// further renormalization. D psi = d_s psi + theta_dot d_alpha psi is
/// evaluated at longitudinal edge midpoints with the centered angular
/// stencil (zero extension at walls) plus the half-weight wall rows of the
/// angular quadrature; gradient coefficients are sampled at edge midpoints
/// and potential coefficients at nodes.
pub fn assemble_3d(
    spec: &TubeSpec,
    jac: &JacobianField,
    mode: AssemblyMode,
) -> Result<GridOperator> {
    let grid = spec.grid();
    let n = spec.n_s();
    let lat = &spec.section.lattice;
    let m = lat.len();
    if jac.h.len() != n || jac.h.iter().any(|row| row.len() != m) {
        return Err(Error::InvalidInput("jacobian field does not match the spec grid".into()));
    }
    if mode == AssemblyMode::Mollified && jac.delta.is_none() {
        return Err(Error::InvalidInput(
            "mollified assembly needs jacobians built with a mollifier schedule".into(),
        ));
    }
    if n < 4 {
        return Err(Error::InvalidInput(format!("need at least 4 longitudinal nodes, got {n}")));
    }

    let ds = grid.delta();
    let mu = lat.cell_area();
    let (dx, dy) = lat.spacing();
    let eps = spec.eps;
    let ns_int = n - 2;
    let dofs = ns_int * m;
    let gdof = |i: usize, k: usize| -> Option<usize> {
        (i >= 1 && i + 1 < n).then(|| (i - 1) * m + k)
    };
    let coords: Vec<(f64, f64)> = (0..m).map(|k| lat.coords(k)).collect();
    let neighbors: Vec<[Option<usize>; 4]> = (0..m).map(|k| lat.neighbors(k)).collect();

    let mut fb = FormBuilder::new(dofs, 160 * n * m);

    // Longitudinal edges: |D psi|^2, and for the mollified form the mixed
    // term pairing D psi with the edge-midpoint value of psi.
    let mut func: Vec<(usize, f64)> = Vec::with_capacity(10);
    let mut midv: Vec<(usize, f64)> = Vec::with_capacity(2);
    for i in 0..n - 1 {
        let td_mid = 0.5 * (spec.theta_dot[i] + spec.theta_dot[i + 1]);
        for k in 0..m {
            func.clear();
            push_dof(&mut func, gdof(i, k), -1.0 / ds);
            push_dof(&mut func, gdof(i + 1, k), 1.0 / ds);
            if td_mid != 0.0 {
                let (t1, t2) = coords[k];
                let [left, right, down, up] = neighbors[k];
                for lvl in [i, i + 1] {
                    // Half weight: the angular derivative is averaged over
                    // the two levels of the edge.
                    let w = 0.5 * td_mid;
                    push_dof(&mut func, lvl_dof(gdof, lvl, right), w * t2 / (2.0 * dx));
                    push_dof(&mut func, lvl_dof(gdof, lvl, left), -w * t2 / (2.0 * dx));
                    push_dof(&mut func, lvl_dof(gdof, lvl, up), -w * t1 / (2.0 * dy));
                    push_dof(&mut func, lvl_dof(gdof, lvl, down), w * t1 / (2.0 * dy));
                }
            }
            if func.is_empty() {
                continue;
            }
            let h_mid = 0.5 * (jac.h[i][k] + jac.h[i + 1][k]);
            let he_mid = 0.5 * (jac.h_eps[i][k] + jac.h_eps[i + 1][k]);
            match mode {
                AssemblyMode::Direct => {
                    fb.square(&func, (eps * eps / h_mid) * ds * mu);
                }
                AssemblyMode::Mollified => {
                    fb.square(&func, ds * mu / (h_mid * he_mid));
                    let dshe = (jac.h_eps[i + 1][k] - jac.h_eps[i][k]) / ds;
                    if dshe != 0.0 {
                        midv.clear();
                        push_dof(&mut midv, gdof(i, k), 0.5);
                        push_dof(&mut midv, gdof(i + 1, k), 0.5);
                        let c7 = -dshe / (h_mid * he_mid * he_mid);
                        fb.product(&midv, &func, c7 * ds * mu);
                    }
                }
            }
            if td_mid != 0.0 {
                // Trapezoid boundary rows of the angular quadrature: on a
                // wall both psi and d_s psi vanish, but theta_dot d_alpha
                // psi does not; each wall point adjacent to node k enters
                // at half weight with the one-sided difference against the
                // zero extension (mirroring the C_omega quadrature, which
                // keeps the twist response of this operator consistent
                // with the effective potential). Jacobians are lumped to
                // the adjacent node.
                let (t1, t2) = coords[k];
                for (slot, coeff) in neighbors[k]
                    .iter()
                    .zip([t2 / dx, -t2 / dx, -t1 / dy, t1 / dy])
                {
                    if slot.is_some() || coeff == 0.0 {
                        continue;
                    }
                    let v = 0.5 * td_mid * coeff;
                    midv.clear();
                    push_dof(&mut midv, gdof(i, k), v);
                    push_dof(&mut midv, gdof(i + 1, k), v);
                    if midv.is_empty() {
                        continue;
                    }
                    let w_wall = match mode {
                        AssemblyMode::Direct => (eps * eps / h_mid) * ds * 0.5 * mu,
                        AssemblyMode::Mollified => ds * 0.5 * mu / (h_mid * he_mid),
                    };
                    fb.square(&midv, w_wall);
                }
            }
        }
    }

    // Transverse edges, one interior level at a time. Interior edges are
    // visited once (from the lower index); every missing neighbor is a
    // Dirichlet wall half-edge owned by its node.
    for i in 1..n - 1 {
        for k in 0..m {
            let gk = gdof(i, k).expect("interior level");
            for (slot, d) in neighbors[k].iter().zip([dx, dx, dy, dy]) {
                match slot {
                    Some(j) => {
                        if *j < k {
                            continue;
                        }
                        let gj = gdof(i, *j).expect("interior level");
                        let c = transverse_coeff(
                            mode,
                            eps,
                            0.5 * (jac.h[i][k] + jac.h[i][*j]),
                            0.5 * (jac.h_eps[i][k] + jac.h_eps[i][*j]),
                        );
                        fb.square(&[(gk, -1.0 / d), (gj, 1.0 / d)], c * ds * mu);
                    }
                    None => {
                        let c = transverse_coeff(mode, eps, jac.h[i][k], jac.h_eps[i][k]);
                        fb.square(&[(gk, 1.0 / d)], c * ds * mu);
                    }
                }
            }
        }
    }

    // Node potentials (mollified form only).
    if mode == AssemblyMode::Mollified {
        let e1 = spec.section.e1;
        for i in 1..n - 1 {
            let (k1, k2) = (spec.pair.k1[i], spec.pair.k2[i]);
            let (k1e, k2e) = (jac.k1_eps[i], jac.k2_eps[i]);
            for k in 0..m {
                let h = jac.h[i][k];
                let he = jac.h_eps[i][k];
                let dshe = (jac.h_eps[i + 1][k] - jac.h_eps[i - 1][k]) / (2.0 * ds);
                let v = -e1 / (eps * eps) * (h / he)
                    + 0.5 * (k1 * k1e + k2 * k2e) / (he * he)
                    - 0.75 * h * (k1e * k1e + k2e * k2e) / (he * he * he)
                    + dshe * dshe / (4.0 * h * he * he * he);
                fb.diag(gdof(i, k).expect("interior level"), v * ds * mu);
            }
        }
    }

    let mut weight = Vec::with_capacity(dofs);
    for i in 1..n - 1 {
        for k in 0..m {
            let w = match mode {
                AssemblyMode::Direct => eps * eps * jac.h[i][k],
                AssemblyMode::Mollified => jac.h[i][k] / jac.h_eps[i][k],
            };
            weight.push(w * ds * mu);
        }
    }

    Ok(GridOperator {
        stiffness: fb.finish()?,
        weight,
        meta: OperatorMeta {
            dim: DimTag::Tube3d,
            mode,
            eps,
            ds,
            n_s: ns_int,
            n_t: m,
            cell: mu,
            e1_disc: spec.section.e1,
            e2_disc: spec.section.e2,
        },
    })
}

fn lvl_dof(
    gdof: impl Fn(usize, usize) -> Option<usize>,
    lvl: usize,
    node: Option<usize>,
) -> Option<usize> {
    node.and_then(|k| gdof(lvl, k))
}

fn transverse_coeff(mode: AssemblyMode, eps: f64, h: f64, h_eps: f64) -> f64 {
    match mode {
        AssemblyMode::Direct => h,
        AssemblyMode::Mollified => h / h_eps / (eps * eps),
    }
}

/// Planar analogue of [`assemble_3d`] on the strip about a curve with
/// signed curvature. The Jacobian h = 1 - eps kappa t is affine in t, so
/// edge-midpoint coefficients are evaluated exactly from the curvature
/// samples instead of being averaged.
pub fn assemble_strip(
    spec: &StripSpec,
    jac: &StripJacobian,
    mode: AssemblyMode,
) -> Result<GridOperator> {
    let n = spec.grid.len();
    let nt = spec.n_t;
    if jac.h.len() != n || jac.h.iter().any(|row| row.len() != nt) {
        return Err(Error::InvalidInput("strip jacobian does not match the spec grid".into()));
    }
    if mode == AssemblyMode::Mollified && jac.delta.is_none() {
        return Err(Error::InvalidInput(
            "mollified assembly needs jacobians built with a mollifier schedule".into(),
        ));
    }
    if n < 4 {
        return Err(Error::InvalidInput(format!("need at least 4 longitudinal nodes, got {n}")));
    }

    let ds = spec.grid.delta();
    let dt = spec.dt();
    let eps = spec.eps;
    let ns_int = n - 2;
    let dofs = ns_int * nt;
    let gdof = |i: usize, j: usize| -> Option<usize> {
        (i >= 1 && i + 1 < n).then(|| (i - 1) * nt + j)
    };
    let (e1, e2) = {
        let (vals, _) = interval_eigendata(nt, dt, 2);
        (vals[0], vals[1])
    };
    let hline = |kap: f64, t: f64| 1.0 - eps * kap * t;

    let mut fb = FormBuilder::new(dofs, 16 * n * nt);

    // Longitudinal edges.
    let mut func: Vec<(usize, f64)> = Vec::with_capacity(2);
    let mut midv: Vec<(usize, f64)> = Vec::with_capacity(2);
    for i in 0..n - 1 {
        let kap_mid = 0.5 * (spec.kappa[i] + spec.kappa[i + 1]);
        let kape_mid = 0.5 * (jac.kappa_eps[i] + jac.kappa_eps[i + 1]);
        for j in 0..nt {
            func.clear();
            push_dof(&mut func, gdof(i, j), -1.0 / ds);
            push_dof(&mut func, gdof(i + 1, j), 1.0 / ds);
            if func.is_empty() {
                continue;
            }
            let t = spec.t_node(j);
            let h_mid = hline(kap_mid, t);
            match mode {
                AssemblyMode::Direct => {
                    fb.square(&func, ds * dt / h_mid);
                }
                AssemblyMode::Mollified => {
                    let he_mid = hline(kape_mid, t);
                    fb.square(&func, ds * dt / (h_mid * he_mid));
                    let dshe = (jac.h_eps[i + 1][j] - jac.h_eps[i][j]) / ds;
                    if dshe != 0.0 {
                        midv.clear();
                        push_dof(&mut midv, gdof(i, j), 0.5);
                        push_dof(&mut midv, gdof(i + 1, j), 0.5);
                        let c7 = -dshe / (h_mid * he_mid * he_mid);
                        fb.product(&midv, &func, c7 * ds * dt);
                    }
                }
            }
        }
    }

    // Transverse edges: nt + 1 per level, walls included.
    for i in 1..n - 1 {
        for e in 0..=nt {
            let t_mid = -spec.half_width + (e as f64 + 0.5) * dt;
            let c = match mode {
                AssemblyMode::Direct => hline(spec.kappa[i], t_mid) / (eps * eps),
                AssemblyMode::Mollified => {
                    hline(spec.kappa[i], t_mid) / hline(jac.kappa_eps[i], t_mid) / (eps * eps)
                }
            };
            func.clear();
            if e > 0 {
                push_dof(&mut func, gdof(i, e - 1), -1.0 / dt);
            }
            if e < nt {
                push_dof(&mut func, gdof(i, e), 1.0 / dt);
            }
            fb.square(&func, c * ds * dt);
        }
    }

    // Node potentials (mollified form only).
    if mode == AssemblyMode::Mollified {
        for i in 1..n - 1 {
            let kap = spec.kappa[i];
            let kape = jac.kappa_eps[i];
            for j in 0..nt {
                let h = jac.h[i][j];
                let he = jac.h_eps[i][j];
                let dshe = (jac.h_eps[i + 1][j] - jac.h_eps[i - 1][j]) / (2.0 * ds);
                let v = -e1 / (eps * eps) * (h / he) + 0.5 * kap * kape / (he * he)
                    - 0.75 * h * kape * kape / (he * he * he)
                    + dshe * dshe / (4.0 * h * he * he * he);
                fb.diag(gdof(i, j).expect("interior level"), v * ds * dt);
            }
        }
    }

    let mut weight = Vec::with_capacity(dofs);
    for i in 1..n - 1 {
        for j in 0..nt {
            let w = match mode {
                AssemblyMode::Direct => jac.h[i][j],
                AssemblyMode::Mollified => jac.h[i][j] / jac.h_eps[i][j],
            };
            weight.push(w * ds * dt);
        }
    }

    Ok(GridOperator {
        stiffness: fb.finish()?,
        weight,
        meta: OperatorMeta {
            dim: DimTag::Strip2d,
            mode,
            eps,
            ds,
            n_s: ns_int,
            n_t: nt,
            cell: dt,
            e1_disc: e1,
            e2_disc: e2,
        },
    })
}

/// Diagonal congruence A = W^{-1/2} K W^{-1/2}. Because the weight is
/// lumped, this realizes the multiplication unitary exactly at the
/// discrete level. Mollified pencils carry their ground-energy subtraction
/// inside the stiffness, which the `renorm` field reports.
pub fn flatten(op: &GridOperator) -> Result<FlatOperator> {
    if let Some((i, w)) =
        op.weight.iter().enumerate().find(|(_, w)| !(w.is_finite() && **w > 0.0))
    {
        return Err(Error::InvalidInput(format!("nonpositive weight {w} at node {i}")));
    }
    let d: Vec<f64> = op.weight.iter().map(|w| 1.0 / w.sqrt()).collect();
    let mut matrix = op.stiffness.clone();
    matrix.scale_sym(&d)?;
    let renorm = match op.meta.mode {
        AssemblyMode::Mollified => op.meta.e1_disc / (op.meta.eps * op.meta.eps),
        AssemblyMode::Direct => 0.0,
    };
    Ok(FlatOperator { matrix, renorm, meta: op.meta.clone() })
}

/// Subtracts e1_disc/eps^2 from the diagonal. `e1_disc` must be the ground
/// eigenvalue of the same transverse stencil the operator was assembled
/// with; the continuum value would leave an O(dt^2)/eps^2 offset that
/// swamps thin-tube comparisons. Mollified operators already carry the
/// subtraction (see [`flatten`]); renormalizing them again is a caller bug
/// that the accumulated `renorm` field makes visible.
pub fn renormalize(mut op: FlatOperator, eps: f64, e1_disc: f64) -> Result<FlatOperator> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::InvalidInput(format!("eps must be positive, got {eps}")));
    }
    let shift = e1_disc / (eps * eps);
    op.matrix.diag_add(-shift)?;
    op.renorm += shift;
    Ok(op)
}

/// Effective one-dimensional Hamiltonian: Dirichlet three-point stencil
/// plus the potential -kappa^2/4 + C_omega theta_dot^2 (the strip model
/// drops the rotation term; its kappa is the signed planar curvature).
pub fn assemble_heff(
    kappa: &[f64],
    theta_dot: &[f64],
    c_omega: f64,
    grid: ArcGrid,
    model: EffectiveModel,
) -> Result<FlatOperator> {
    let n = grid.len();
    if kappa.len() != n || theta_dot.len() != n {
        return Err(Error::InvalidInput("coefficient arrays must match the grid".into()));
    }
    if n < 4 {
        return Err(Error::InvalidInput(format!("need at least 4 longitudinal nodes, got {n}")));
    }
    if !c_omega.is_finite() || c_omega < 0.0 {
        return Err(Error::InvalidInput(format!("rotation coupling must be >= 0, got {c_omega}")));
    }
    let ds = grid.delta();
    let ni = n - 2;
    let mut t = Vec::with_capacity(3 * ni);
    for i in 0..ni {
        let full = i + 1;
        let twist = match model {
            EffectiveModel::Tube => c_omega * theta_dot[full] * theta_dot[full],
            EffectiveModel::Strip => 0.0,
        };
        let v = -0.25 * kappa[full] * kappa[full] + twist;
        t.push((i, i, 2.0 / (ds * ds) + v));
        if i + 1 < ni {
            t.push((i, i + 1, -1.0 / (ds * ds)));
            t.push((i + 1, i, -1.0 / (ds * ds)));
        }
    }
    Ok(FlatOperator {
        matrix: SparseSym::from_triplets(ni, t)?,
        renorm: 0.0,
        meta: OperatorMeta {
            dim: DimTag::OneD,
            mode: AssemblyMode::Direct,
            eps: 0.0,
            ds,
            n_s: ni,
            n_t: 1,
            cell: 1.0,
            e1_disc: 0.0,
            e2_disc: 0.0,
        },
    })
}

/// Tensor comparison operator: identity (x) (K_t - E1)/eps^2 plus the
/// effective longitudinal part (x) identity, on the same index set as the
/// flat tube operators. Restricted to the discrete ground band it
/// coincides with [`assemble_heff`]; every other band sits at least
/// (E2 - E1)/eps^2 higher.
pub fn assemble_h0(
    grid: ArcGrid,
    section: &CrossSection,
    eps: f64,
    kappa: &[f64],
    theta_dot: &[f64],
    c_omega: f64,
) -> Result<FlatOperator> {
    let n = grid.len();
    if kappa.len() != n || theta_dot.len() != n {
        return Err(Error::InvalidInput("coefficient arrays must match the grid".into()));
    }
    if n < 4 {
        return Err(Error::InvalidInput(format!("need at least 4 longitudinal nodes, got {n}")));
    }
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::InvalidInput(format!("eps must be positive, got {eps}")));
    }
    let ds = grid.delta();
    let ni = n - 2;
    let kt = section.lattice.stiffness();
    let m = kt.dim();
    let e1 = section.e1;
    let dofs = ni * m;
    let mut t = Vec::with_capacity(dofs * 8);
    let inv_e2 = 1.0 / (eps * eps);
    for i in 0..ni {
        let full = i + 1;
        let v = -0.25 * kappa[full] * kappa[full]
            + c_omega * theta_dot[full] * theta_dot[full];
        for k in 0..m {
            let g = i * m + k;
            t.push((g, g, 2.0 / (ds * ds) + v - e1 * inv_e2));
            for (k2, val) in kt.row(k) {
                t.push((g, i * m + k2, val * inv_e2));
            }
            if i + 1 < ni {
                t.push((g, g + m, -1.0 / (ds * ds)));
                t.push((g + m, g, -1.0 / (ds * ds)));
            }
        }
    }
    Ok(FlatOperator {
        matrix: SparseSym::from_triplets(dofs, t)?,
        renorm: e1 * inv_e2,
        meta: OperatorMeta {
            dim: DimTag::Tube3d,
            mode: AssemblyMode::Direct,
            eps,
            ds,
            n_s: ni,
            n_t: m,
            cell: section.lattice.cell_area(),
            e1_disc: e1,
            e2_disc: section.e2,
        },
    })
}

/// Closed-form Dirichlet eigendata of the interval stencil: `n_t` interior
/// nodes at spacing `dt`, eigenvalues (4/dt^2) sin^2(k pi/(2(n_t+1))),
/// eigenvectors sin(k pi j/(n_t+1)) normalized so that sum v^2 dt = 1.
/// These are exact identities of the three-point stencil, not numerics.
pub fn interval_eigendata(n_t: usize, dt: f64, m: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let np = (n_t + 1) as f64;
    let mut vals = Vec::with_capacity(m);
    let mut vecs = Vec::with_capacity(m);
    for k in 1..=m.min(n_t) {
        let s = (0.5 * k as f64 * std::f64::consts::PI / np).sin();
        vals.push(4.0 / (dt * dt) * s * s);
        let norm = (0.5 * np * dt).sqrt();
        vecs.push(
            (1..=n_t)
                .map(|j| (k as f64 * j as f64 * std::f64::consts::PI / np).sin() / norm)
                .collect(),
        );
    }
    (vals, vecs)
}

/// The `m` lowest eigenpairs of a flat operator by shift-invert iteration.
/// `sigma_shift` must lie strictly below the spectrum.
pub fn lowest_eigs(op: &FlatOperator, m: usize, sigma_shift: f64) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    lowest_eigs_shift_invert(&op.matrix, m, sigma_shift, EIG_TOL, EIG_CAP, EIG_SEED)
}

fn band_vector(j1: &[f64]) -> Result<Vec<f64>> {
    let norm = j1.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm.is_finite() && norm > 0.0) {
        return Err(Error::InvalidInput("band vector must be nonzero".into()));
    }
    Ok(j1.iter().map(|v| v / norm).collect())
}

/// Norm distance between the resolvent of a tube operator and the
/// resolvent of the effective Hamiltonian embedded on the discrete ground
/// band. `j1` is the transverse ground vector (any nonzero scaling); the
/// band projector uses its unit-l2 normalization. The distance is the
/// operator norm of
///   (A - lambda)^{-1} - E (Heff - lambda)^{-1} P
/// obtained by a seeded Lanczos norm estimate of this symmetric operator,
/// so repeated runs agree bitwise. `lambda` must lie
/// below both spectra; a value inside the spectrum surfaces as a
/// factorization error.
pub fn resolvent_norm_gap(
    a: &FlatOperator,
    heff: &FlatOperator,
    lambda: f64,
    j1: &[f64],
) -> Result<f64> {
    let n = a.matrix.dim();
    let ns = heff.matrix.dim();
    let m = j1.len();
    if ns * m != n {
        return Err(Error::InvalidInput(format!(
            "band dimensions do not compose: {ns} levels x {m} transverse != {n}"
        )));
    }
    if !lambda.is_finite() {
        return Err(Error::InvalidInput("spectral parameter must be finite".into()));
    }
    let jhat = band_vector(j1)?;
    let fa = BandedCholesky::factor(&a.matrix, lambda)?;
    let fh = BandedCholesky::factor(&heff.matrix, lambda)?;
    let apply = |x: &[f64]| {
        let mut out = fa.solve(x);
        let mut px = vec![0.0; ns];
        for i in 0..ns {
            px[i] = jhat.iter().zip(&x[i * m..(i + 1) * m]).map(|(j, v)| j * v).sum();
        }
        let y = fh.solve(&px);
        for i in 0..ns {
            for (k, j) in jhat.iter().enumerate() {
                out[i * m + k] -= y[i] * j;
            }
        }
        out
    };
    symmetric_operator_norm(n, apply, NORM_TOL, NORM_CAP, GAP_SEED)
}

/// Norm distance between the resolvents of two operators on the same index
/// set, e.g. the direct and mollified assemblies of one tube.
pub fn resolvent_mode_gap(a: &FlatOperator, b: &FlatOperator, lambda: f64) -> Result<f64> {
    let n = a.matrix.dim();
    if b.matrix.dim() != n {
        return Err(Error::InvalidInput("operators live on different index sets".into()));
    }
    if !lambda.is_finite() {
        return Err(Error::InvalidInput("spectral parameter must be finite".into()));
    }
    let fa = BandedCholesky::factor(&a.matrix, lambda)?;
    let fb = BandedCholesky::factor(&b.matrix, lambda)?;
    let apply = |x: &[f64]| {
        let mut out = fa.solve(x);
        for (o, v) in out.iter_mut().zip(fb.solve(x)) {
            *o -= v;
        }
        out
    };
    symmetric_operator_norm(n, apply, NORM_TOL, NORM_CAP, GAP_SEED)
}

/// Minimum Rayleigh quotient of a flat operator over the orthogonal
/// complement of the ground band. The spectrum down there is tightly
/// clustered relative to its spread (longitudinal spacing against the
/// transverse band height), which defeats plain inverse iteration, so this
/// runs Lanczos with full reorthogonalization on the projected operator
/// and stops on the Ritz residual bound.
pub fn min_rayleigh_perp(a: &FlatOperator, j1: &[f64]) -> Result<f64> {
    let n = a.matrix.dim();
    let m = j1.len();
    if m == 0 || n % m != 0 {
        return Err(Error::InvalidInput(format!(
            "band of {m} transverse nodes does not divide dimension {n}"
        )));
    }
    let ns = n / m;
    let jhat = band_vector(j1)?;
    let project = |x: &mut Vec<f64>| {
        for i in 0..ns {
            let c: f64 = jhat.iter().zip(&x[i * m..(i + 1) * m]).map(|(j, v)| j * v).sum();
            for (k, j) in jhat.iter().enumerate() {
                x[i * m + k] -= c * j;
            }
        }
    };
    let bapply = |x: &[f64]| {
        let mut v = x.to_vec();
        project(&mut v);
        let mut y = a.matrix.apply(&v);
        project(&mut y);
        y
    };
    let mut start = seeded_unit_vector(n, PERP_SEED);
    project(&mut start);
    lanczos_extreme(bapply, start, RitzSide::MinValue, 1e-5, 500)
}

/// Explicit constants of the lower-bound machinery.
///
/// `c1`, `c2`, `c3` have closed forms in terms of the curvature bound and
/// are absent for straight curves (their formulas divide by the bound; the
/// terms they multiply vanish identically in that case). `c_perp` controls
/// the transverse coercivity: the complement of the ground band obeys
/// ||psi_perp|| <= eps (c_perp/2) sqrt(form), and it exists only while eps
/// is small enough to keep the coercivity floor positive.
#[derive(Debug, Clone, Serialize)]
pub struct BoundConstants {
    pub lambda: f64,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub c3: Option<f64>,
    pub c_perp: f64,
    pub beta: f64,
}

impl BoundConstants {
    /// `kappa_inf` is the curvature sup, `a` the section radius bound and
    /// `e1`, `e2` the transverse stencil eigenvalues. Requires
    /// lambda < -9 kappa_inf^2, which keeps the shifted operators
    /// invertible, and eps small enough for the coercivity constant.
    pub fn compute(
        lambda: f64,
        kappa_inf: f64,
        a: f64,
        eps: f64,
        e1: f64,
        e2: f64,
    ) -> Result<Self> {
        if !(kappa_inf.is_finite() && kappa_inf >= 0.0) {
            return Err(Error::InvalidInput("curvature bound must be >= 0".into()));
        }
        let ceiling = -9.0 * kappa_inf * kappa_inf;
        if !lambda.is_finite() || lambda >= ceiling {
            return Err(Error::InvalidInput(format!(
                "spectral parameter {lambda} must lie below -9 kappa^2 = {ceiling}"
            )));
        }
        if !(a.is_finite() && a > 0.0) || !(eps.is_finite() && eps > 0.0) {
            return Err(Error::InvalidInput("radius bound and eps must be positive".into()));
        }
        if !(e1.is_finite() && e2.is_finite() && 0.0 < e1 && e1 < e2) {
            return Err(Error::InvalidInput(format!(
                "transverse eigenvalues must satisfy 0 < e1 < e2, got {e1}, {e2}"
            )));
        }
        let s = 4.0 * eps * a * kappa_inf;
        if s >= 1.0 {
            return Err(Error::EpsilonTooLarge {
                eps,
                limit: 1.0 / (4.0 * a * kappa_inf),
                context: "the lower-bound constants need 4 eps a kappa < 1".into(),
            });
        }
        let r = (1.0 - s) / (1.0 + s);
        // The coercivity floor is min of a decreasing and an increasing
        // affine function of beta; the optimum sits at their crossing.
        let beta =
            ((e2 * r - e1 / r) / (r * (1.0 + e2))).clamp(f64::EPSILON, 1.0 - f64::EPSILON);
        let a_tilde = e2 * r * (1.0 - beta) - e1 / r;
        let b_tilde = beta * r;
        let floor = a_tilde.min(b_tilde);
        if floor <= 0.0 {
            // Positivity of e2 r^2 - e1 bounds the admissible eps.
            let q = (e1 / e2).sqrt();
            let limit = (1.0 - q) / ((1.0 + q) * 4.0 * a * kappa_inf.max(f64::MIN_POSITIVE));
            return Err(Error::EpsilonTooLarge {
                eps,
                limit,
                context: "transverse coercivity floor is nonpositive; shrink eps".into(),
            });
        }
        let c_perp = 2.0 / floor.sqrt();
        let (c1, c2, c3) = if kappa_inf > 0.0 {
            (
                Some(4.0 * a * a / (kappa_inf * kappa_inf)),
                Some(10.0 * a / kappa_inf),
                Some(12.0 * a * lambda.abs() / kappa_inf),
            )
        } else {
            (None, None, None)
        };
        Ok(Self { lambda, c1, c2, c3, c_perp, beta })
    }
}

/// Names of prefactor constants that carry no closed form; they multiply
/// the same measured moduli that `BracketComponents` reports.
pub const SYMBOLIC_SLOTS: [&str; 6] = ["C4", "C5", "C6", "C7", "C8", "C9"];

/// Measured pieces of the convergence-rate bracket
///   eps + eps (sup|dk1^e| + sup|dk2^e|) + sigma_k(delta) + sigma_td(delta~).
#[derive(Debug, Clone, Serialize)]
pub struct BracketComponents {
    pub eps_term: f64,
    /// eps times the sup of the window-average derivatives of k1, k2.
    pub steklov_deriv: f64,
    /// Shift moduli of the curvature components at window delta(eps).
    pub sigma_k: f64,
    /// Shift modulus of the rotation rate at window delta~(eps).
    pub sigma_theta: f64,
    pub total: f64,
    pub delta: f64,
    pub delta_tilde: f64,
    /// (C1 + C2) steklov_deriv + C3 eps, when those constants exist.
    pub sigma_tilde_explicit: Option<f64>,
    /// Prefactor slots with no closed-form value.
    pub symbolic_slots: [&'static str; 6],
}

/// One radius of an epsilon sweep: per-index eigenvalue distances, the
/// measured resolvent distances and the theoretical bracket they are
/// tested against.
#[derive(Debug, Clone, Serialize)]
pub struct GapResult {
    pub eps: f64,
    pub eig_gap: Vec<f64>,
    pub resolvent_gap: f64,
    /// Distance between direct and mollified resolvents, when both were
    /// assembled.
    pub mode_gap: Option<f64>,
    pub bound_bracket: f64,
    pub components: BracketComponents,
}

/// Evaluates the rate bracket over the functions' whole domain, with the
/// same zero-extension and unit-cell conventions as [`crate::mollify`].
/// `consts` only feeds the explicit constant estimate; pass `None` when
/// none are certified.
pub fn rate_bracket(
    eps: f64,
    k1: &SampledFunction,
    k2: &SampledFunction,
    theta_dot: &SampledFunction,
    schedule: &MollifierSchedule,
    consts: Option<&BoundConstants>,
) -> Result<BracketComponents> {
    rate_bracket_on(eps, k1, k2, theta_dot, schedule, consts, None)
}

/// Same bracket with every sup and shift modulus restricted to a window
/// inside the domain. Zero extension makes even constant data rough at the
/// domain ends, so structural statements (constants are fixed points of
/// the averaging, Lipschitz data keeps its slope) hold exactly only on
/// windows the boundary layer cannot reach.
pub fn rate_bracket_on(
    eps: f64,
    k1: &SampledFunction,
    k2: &SampledFunction,
    theta_dot: &SampledFunction,
    schedule: &MollifierSchedule,
    consts: Option<&BoundConstants>,
    window: Option<(f64, f64)>,
) -> Result<BracketComponents> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::InvalidInput(format!("eps must be positive, got {eps}")));
    }
    if let Some((lo, hi)) = window {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidInput(format!("bad measurement window ({lo}, {hi})")));
        }
    }
    let delta = schedule.delta(eps);
    let delta_tilde = schedule.delta_tilde(eps);
    let d1 = sup_on(&steklov_derivative(k1, delta)?, window);
    let d2 = sup_on(&steklov_derivative(k2, delta)?, window);
    let steklov_deriv = eps * (d1 + d2);
    let sigma_k = sigma_on(k1, delta, window)? + sigma_on(k2, delta, window)?;
    let sigma_theta = sigma_on(theta_dot, delta_tilde, window)?;
    let total = eps + steklov_deriv + sigma_k + sigma_theta;
    // Without certified coercivity constants (curvature-free geometry, or
    // a radius above their validity ceiling) the explicit part is absent;
    // the dimensionless bracket stands on its own.
    let sigma_tilde_explicit = match consts.map(|c| (c.c1, c.c2, c.c3)) {
        Some((Some(c1), Some(c2), Some(c3))) => Some((c1 + c2) * steklov_deriv + c3 * eps),
        _ => None,
    };
    Ok(BracketComponents {
        eps_term: eps,
        steklov_deriv,
        sigma_k,
        sigma_theta,
        total,
        delta,
        delta_tilde,
        sigma_tilde_explicit,
        symbolic_slots: SYMBOLIC_SLOTS,
    })
}

fn sup_on(f: &SampledFunction, window: Option<(f64, f64)>) -> f64 {
    match window {
        None => f.sup_norm(),
        Some((lo, hi)) => f
            .grid
            .nodes()
            .zip(&f.values)
            .filter(|(s, _)| (lo..=hi).contains(s))
            .fold(0.0f64, |m, (_, v)| m.max(v.abs())),
    }
}

pub(crate) fn sigma_on(
    f: &SampledFunction,
    delta: f64,
    window: Option<(f64, f64)>,
) -> Result<f64> {
    match window {
        None => sigma(f, delta),
        Some((lo, hi)) => {
            // Unit cells anchored at the window start; the trailing
            // partial cell is kept (a shorter cell only lowers the sup).
            let mut partition = Vec::new();
            let mut x = lo;
            while x < hi {
                partition.push(x);
                x += 1.0;
            }
            partition.push(hi);
            let moduli = shift_modulus(f, delta, &partition)?;
            Ok(moduli.into_iter().fold(0.0, f64::max))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cross_section::Shape;
    use crate::mollify::Interpolation;
    use crate::tube::{jacobians, strip_jacobians};
    use approx::assert_relative_eq;

    fn section(spec: &str, n: usize) -> CrossSection {
        CrossSection::compute(&spec.parse::<Shape>().unwrap(), n).unwrap()
    }

    fn tube(
        k1: Vec<f64>,
        k2: Vec<f64>,
        theta_dot: Vec<f64>,
        sec: CrossSection,
        length: f64,
        eps: f64,
    ) -> TubeSpec {
        let n = k1.len();
        let grid = ArcGrid::new(0.0, length, n).unwrap();
        let ds = grid.delta();
        let mut theta = Vec::with_capacity(n);
        let mut acc = 0.0;
        theta.push(0.0);
        for i in 1..n {
            acc += 0.5 * (theta_dot[i - 1] + theta_dot[i]) * ds;
            theta.push(acc);
        }
        TubeSpec::from_curvatures(&k1, &k2, grid, theta, theta_dot, sec, eps).unwrap()
    }

    fn toy_meta() -> OperatorMeta {
        OperatorMeta {
            dim: DimTag::OneD,
            mode: AssemblyMode::Direct,
            eps: 1.0,
            ds: 1.0,
            n_s: 2,
            n_t: 1,
            cell: 1.0,
            e1_disc: 0.0,
            e2_disc: 0.0,
        }
    }

    #[test]
    fn flatten_arithmetic_on_a_two_node_pencil() {
        let k = SparseSym::from_triplets(
            2,
            vec![(0, 0, 2.0), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 2.0)],
        )
        .unwrap();
        let op = GridOperator { stiffness: k.clone(), weight: vec![4.0, 1.0], meta: toy_meta() };
        let a = flatten(&op).unwrap();
        let d = a.matrix.to_dense();
        assert_eq!(d[(0, 0)], 0.5);
        assert_eq!(d[(0, 1)], -0.5);
        assert_eq!(d[(1, 0)], -0.5);
        assert_eq!(d[(1, 1)], 2.0);
        assert_eq!(a.renorm, 0.0);

        let identity_weight = GridOperator { stiffness: k, weight: vec![1.0, 1.0], meta: toy_meta() };
        let b = flatten(&identity_weight).unwrap();
        assert_eq!(b.matrix.to_dense(), identity_weight.stiffness.to_dense());

        let bad = GridOperator {
            stiffness: identity_weight.stiffness.clone(),
            weight: vec![1.0, 0.0],
            meta: toy_meta(),
        };
        assert!(flatten(&bad).is_err());
    }

    #[test]
    fn flattened_pairs_solve_the_weighted_pencil() {
        let n = 16;
        let sec = section("rect:1,0.8", 5);
        let k1: Vec<f64> = (0..n).map(|i| 0.5 * (0.4 * i as f64).cos()).collect();
        let spec = tube(k1, vec![0.0; n], vec![0.4; n], sec, 3.0, 0.1);
        let jac = jacobians(&spec, None).unwrap();
        let op = assemble_3d(&spec, &jac, AssemblyMode::Direct).unwrap();
        assert!(op.stiffness.symmetry_violation().is_none());
        let flat = flatten(&op).unwrap();

        let dense = flat.matrix.to_dense();
        let (vals, vecs) = crate::linalg::dense_sym_eigs(&dense);
        // Map eigenvectors back through W^{1/2} and check the generalized
        // residual K u = lambda W u.
        let scale = dense.norm();
        for idx in [0usize, 3, 10] {
            let u: Vec<f64> = vecs
                .column(idx)
                .iter()
                .zip(&op.weight)
                .map(|(v, w)| v / w.sqrt())
                .collect();
            let ku = op.stiffness.apply(&u);
            let worst = ku
                .iter()
                .zip(&u)
                .zip(&op.weight)
                .map(|((kv, uv), w)| (kv - vals[idx] * w * uv).abs())
                .fold(0.0f64, f64::max);
            assert!(worst <= 1e-10 * scale, "pencil residual {worst:.3e} at index {idx}");
        }
    }

    #[test]
    fn straight_tube_separates_into_tensor_parts() {
        let n = 14;
        let sec = section("rect:1,1", 6);
        let spec = tube(vec![0.0; n], vec![0.0; n], vec![0.0; n], sec, 1.0, 0.1);
        let jac = jacobians(&spec, None).unwrap();
        let op = assemble_3d(&spec, &jac, AssemblyMode::Direct).unwrap();
        let flat = renormalize(flatten(&op).unwrap(), spec.eps, spec.section.e1).unwrap();

        let ds = spec.grid().delta();
        let m = spec.section.lattice.len();
        let kt = spec.section.lattice.stiffness();
        let ni = n - 2;
        let mut expect = Vec::new();
        let inv_e2 = 1.0 / (spec.eps * spec.eps);
        for i in 0..ni {
            for k in 0..m {
                let g = i * m + k;
                expect.push((g, g, 2.0 / (ds * ds) - spec.section.e1 * inv_e2));
                for (k2, v) in kt.row(k) {
                    expect.push((g, i * m + k2, v * inv_e2));
                }
                if i + 1 < ni {
                    expect.push((g, g + m, -1.0 / (ds * ds)));
                    expect.push((g + m, g, -1.0 / (ds * ds)));
                }
            }
        }
        let expect = SparseSym::from_triplets(ni * m, expect).unwrap();
        let diff = (flat.matrix.to_dense() - expect.to_dense()).abs().max();
        assert!(diff <= 1e-12 * expect.norm_inf(), "tensor mismatch {diff:.3e}");
    }

    #[test]
    fn mollified_equals_direct_for_straight_twisted_tubes() {
        // With zero curvature both jacobians are one, the seven-term form
        // collapses onto the direct one and the two flattened matrices
        // agree entry by entry.
        let n = 18;
        let sec = section("rect:1,0.5", 6);
        let td: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * (0.7 * i as f64).sin()).collect();
        let spec = tube(vec![0.0; n], vec![0.0; n], td, sec, 2.0, 0.2);
        let schedule = MollifierSchedule::two_thirds();
        let jac = jacobians(&spec, Some(&schedule)).unwrap();

        let mol = flatten(&assemble_3d(&spec, &jac, AssemblyMode::Mollified).unwrap()).unwrap();
        let dir = renormalize(
            flatten(&assemble_3d(&spec, &jac, AssemblyMode::Direct).unwrap()).unwrap(),
            spec.eps,
            spec.section.e1,
        )
        .unwrap();
        let scale = dir.matrix.norm_inf();
        let diff = (mol.matrix.to_dense() - dir.matrix.to_dense()).abs().max();
        assert!(diff <= 1e-12 * scale, "mode mismatch {diff:.3e} (scale {scale:.3e})");
        assert_relative_eq!(mol.renorm, dir.renorm);
    }

    #[test]
    fn mollified_mode_stays_near_direct_for_constant_curvature() {
        // Constant curvature is a fixed point of the window average away
        // from the domain ends, so the two assemblies may differ only
        // through the boundary layer and through quadrature-level terms.
        let n = 301;
        let grid = ArcGrid::new(0.0, 6.0, n).unwrap();
        let spec = StripSpec::new(grid, vec![0.4; n], 1.0, 13, 0.05).unwrap();
        let schedule = MollifierSchedule::two_thirds();
        let jac = strip_jacobians(&spec, Some(&schedule)).unwrap();

        let mol = flatten(&assemble_strip(&spec, &jac, AssemblyMode::Mollified).unwrap()).unwrap();
        let (e1, _) = interval_eigendata(spec.n_t, spec.dt(), 2);
        let dir = renormalize(
            flatten(&assemble_strip(&spec, &jac, AssemblyMode::Direct).unwrap()).unwrap(),
            spec.eps,
            e1[0],
        )
        .unwrap();
        let (lm, _) = lowest_eigs(&mol, 1, -2.0).unwrap();
        let (ld, _) = lowest_eigs(&dir, 1, -2.0).unwrap();
        assert!(
            (lm[0] - ld[0]).abs() <= 2e-3,
            "ground state moved by {:.3e} between modes",
            (lm[0] - ld[0]).abs()
        );
    }

    #[test]
    fn effective_hamiltonian_examples() {
        // Straight: Richardson over two stencils recovers pi^2.
        let coarse = ArcGrid::new(0.0, 1.0, 501).unwrap();
        let fine = ArcGrid::new(0.0, 1.0, 1001).unwrap();
        let hc = assemble_heff(&vec![0.0; 501], &vec![0.0; 501], 0.0, coarse, EffectiveModel::Tube)
            .unwrap();
        let hf = assemble_heff(&vec![0.0; 1001], &vec![0.0; 1001], 0.0, fine, EffectiveModel::Tube)
            .unwrap();
        let (lc, _) = lowest_eigs(&hc, 1, -1.0).unwrap();
        let (lf, _) = lowest_eigs(&hf, 1, -1.0).unwrap();
        let extrap = (4.0 * lf[0] - lc[0]) / 3.0;
        let pi2 = std::f64::consts::PI.powi(2);
        assert!((extrap - pi2).abs() <= 1e-5, "extrapolated {extrap} vs {pi2}");

        // Constant curvature shifts the whole matrix by -1/4.
        let grid = ArcGrid::new(0.0, 1.0, 41).unwrap();
        let straight =
            assemble_heff(&vec![0.0; 41], &vec![0.0; 41], 0.0, grid, EffectiveModel::Tube).unwrap();
        let bent =
            assemble_heff(&vec![1.0; 41], &vec![0.0; 41], 0.0, grid, EffectiveModel::Tube).unwrap();
        let diff = bent.matrix.to_dense() - straight.matrix.to_dense();
        for i in 0..diff.nrows() {
            for j in 0..diff.ncols() {
                let want = if i == j { -0.25 } else { 0.0 };
                assert!((diff[(i, j)] - want).abs() <= 1e-15);
            }
        }

        // Constant rotation rate shifts by +C_omega omega^2 in the tube
        // model and not at all in the strip model.
        let twisted =
            assemble_heff(&vec![0.0; 41], &vec![3.0; 41], 0.5, grid, EffectiveModel::Tube).unwrap();
        let d2 = twisted.matrix.to_dense() - straight.matrix.to_dense();
        for i in 0..d2.nrows() {
            for j in 0..d2.ncols() {
                let want = if i == j { 0.5 * 9.0 } else { 0.0 };
                assert!((d2[(i, j)] - want).abs() <= 1e-13);
            }
        }
        let strip =
            assemble_heff(&vec![0.0; 41], &vec![3.0; 41], 0.5, grid, EffectiveModel::Strip)
                .unwrap();
        assert_eq!(
            (strip.matrix.to_dense() - straight.matrix.to_dense()).abs().max(),
            0.0
        );
    }

    #[test]
    fn comparison_operator_restricts_to_the_effective_band() {
        let n = 16;
        let sec = section("rect:1,0.6", 6);
        let grid = ArcGrid::new(0.0, 2.0, n).unwrap();
        let kappa: Vec<f64> = (0..n).map(|i| 0.6 * (0.3 * i as f64).sin()).collect();
        let td = vec![0.8; n];
        let eps = 0.1;
        let h0 = assemble_h0(grid, &sec, eps, &kappa, &td, sec.c_omega).unwrap();
        let heff = assemble_heff(&kappa, &td, sec.c_omega, grid, EffectiveModel::Tube).unwrap();

        let m = sec.lattice.len();
        let ni = n - 2;
        let jhat = band_vector(&sec.j1).unwrap();
        // Act on an embedded band vector and split the image.
        let u = seeded_unit_vector(ni, 42);
        let mut eu = vec![0.0; ni * m];
        for i in 0..ni {
            for k in 0..m {
                eu[i * m + k] = u[i] * jhat[k];
            }
        }
        let v = h0.matrix.apply(&eu);
        let want = heff.matrix.apply(&u);
        let mut band = vec![0.0; ni];
        let mut leak = 0.0f64;
        for i in 0..ni {
            band[i] = jhat.iter().zip(&v[i * m..(i + 1) * m]).map(|(j, w)| j * w).sum();
            let mut res = 0.0;
            for k in 0..m {
                let r = v[i * m + k] - band[i] * jhat[k];
                res += r * r;
            }
            leak += res;
        }
        let band_err = band
            .iter()
            .zip(&want)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(band_err <= 1e-5, "band action differs by {band_err:.3e}");
        assert!(leak.sqrt() <= 1e-5, "leak into the complement {:.3e}", leak.sqrt());

        // Tensor enumeration oracle for the low spectrum.
        let (hs, _) = crate::linalg::dense_sym_eigs(&heff.matrix.to_dense());
        let (et, _) = crate::cross_section::transverse_eigs(&sec.lattice, 4).unwrap();
        let mut sums = Vec::new();
        for l in &hs {
            for e in &et {
                sums.push(l + (e - et[0]) / (eps * eps));
            }
        }
        sums.sort_by(f64::total_cmp);
        let (got, _) = lowest_eigs(&h0, 4, sums[0] - 1.0).unwrap();
        for (g, w) in got.iter().zip(&sums) {
            assert!((g - w).abs() <= 1e-7, "tensor spectrum mismatch {g} vs {w}");
        }
    }

    #[test]
    fn comparison_operator_equals_flat_straight_tube() {
        let n = 12;
        let sec = section("rect:1,1", 5);
        let grid = ArcGrid::new(0.0, 1.5, n).unwrap();
        let spec = tube(vec![0.0; n], vec![0.0; n], vec![0.0; n], sec.clone(), 1.5, 0.15);
        let jac = jacobians(&spec, None).unwrap();
        let flat = renormalize(
            flatten(&assemble_3d(&spec, &jac, AssemblyMode::Direct).unwrap()).unwrap(),
            spec.eps,
            sec.e1,
        )
        .unwrap();
        let h0 = assemble_h0(grid, &sec, 0.15, &vec![0.0; n], &vec![0.0; n], 0.0).unwrap();
        let diff = (flat.matrix.to_dense() - h0.matrix.to_dense()).abs().max();
        assert!(diff <= 1e-12 * h0.matrix.norm_inf(), "flat/h0 mismatch {diff:.3e}");
    }

    #[test]
    fn straight_resolvent_gap_matches_the_band_formula() {
        let n = 20;
        let sec = section("rect:1,1", 8);
        let grid = ArcGrid::new(0.0, 1.0, n).unwrap();
        let eps = 0.15;
        let lambda = -1.0;
        let spec = tube(vec![0.0; n], vec![0.0; n], vec![0.0; n], sec.clone(), 1.0, eps);
        let jac = jacobians(&spec, None).unwrap();
        let a = renormalize(
            flatten(&assemble_3d(&spec, &jac, AssemblyMode::Direct).unwrap()).unwrap(),
            eps,
            sec.e1,
        )
        .unwrap();
        let heff =
            assemble_heff(&vec![0.0; n], &vec![0.0; n], 0.0, grid, EffectiveModel::Tube).unwrap();
        let gap = resolvent_norm_gap(&a, &heff, lambda, &sec.j1).unwrap();

        let ni = (n - 2) as f64;
        let ds = grid.delta();
        let l1s = 4.0 / (ds * ds) * (0.5 * std::f64::consts::PI / (ni + 1.0)).sin().powi(2);
        let closed = 1.0 / ((sec.e2 - sec.e1) / (eps * eps) + l1s - lambda);
        assert!(
            (gap - closed).abs() <= 1e-6,
            "gap {gap:.8e} vs closed form {closed:.8e}"
        );
    }

    #[test]
    fn identical_resolvents_have_zero_distance() {
        let grid = ArcGrid::new(0.0, 1.0, 30).unwrap();
        let h = assemble_heff(&vec![0.0; 30], &vec![0.0; 30], 0.0, grid, EffectiveModel::Tube)
            .unwrap();
        let gap = resolvent_mode_gap(&h, &h, -3.0).unwrap();
        assert_eq!(gap, 0.0);
    }

    #[test]
    fn lambda_inside_the_spectrum_is_rejected() {
        let grid = ArcGrid::new(0.0, 1.0, 30).unwrap();
        let h = assemble_heff(&vec![0.0; 30], &vec![0.0; 30], 0.0, grid, EffectiveModel::Tube)
            .unwrap();
        // The spectrum starts near pi^2; factoring at 50 must fail.
        assert!(resolvent_mode_gap(&h, &h, 50.0).is_err());
    }

    #[test]
    fn renormalized_spectrum_obeys_the_form_lower_bound() {
        let n = 121;
        let grid = ArcGrid::new(0.0, 6.0, n).unwrap();
        let kappa: Vec<f64> = grid.nodes().map(|s| 0.7 * (1.2 * s).sin()).collect();
        let spec = StripSpec::new(grid, kappa.clone(), 1.0, 11, 0.1).unwrap();
        let schedule = MollifierSchedule::two_thirds();
        let jac = strip_jacobians(&spec, Some(&schedule)).unwrap();
        let a = flatten(&assemble_strip(&spec, &jac, AssemblyMode::Mollified).unwrap()).unwrap();

        let ksup = spec.kappa_inf();
        let floor = -9.0 * ksup * ksup;
        let (vals, _) = lowest_eigs(&a, 1, floor - 5.0).unwrap();
        assert!(
            vals[0] >= floor - 0.1,
            "ground state {:.6} sank below the bound {:.6}",
            vals[0],
            floor
        );
        // Same inequality phrased through the resolvent at admissible lambda.
        let lambda = floor - 1.0;
        assert!(1.0 / (vals[0] - lambda) <= 1.0 / (lambda.abs() + floor) + 1e-9);
    }

    #[test]
    fn perpendicular_rayleigh_floor() {
        // Straight strip: the complement minimum is exactly the second
        // transverse level plus the lowest longitudinal eigenvalue.
        let n = 41;
        let grid = ArcGrid::new(0.0, 2.0, n).unwrap();
        let eps = 0.2;
        let spec = StripSpec::new(grid, vec![0.0; n], 1.0, 11, eps).unwrap();
        let jac = strip_jacobians(&spec, None).unwrap();
        let (vals, vecs) = interval_eigendata(spec.n_t, spec.dt(), 2);
        let a = renormalize(
            flatten(&assemble_strip(&spec, &jac, AssemblyMode::Direct).unwrap()).unwrap(),
            eps,
            vals[0],
        )
        .unwrap();
        let rq = min_rayleigh_perp(&a, &vecs[0]).unwrap();
        let ni = (n - 2) as f64;
        let ds = grid.delta();
        let l1s = 4.0 / (ds * ds) * (0.5 * std::f64::consts::PI / (ni + 1.0)).sin().powi(2);
        let want = (vals[1] - vals[0]) / (eps * eps) + l1s;
        assert_relative_eq!(rq, want, max_relative = 1e-4);

        // Bent strip keeps at least half the band gap.
        let kappa: Vec<f64> = grid.nodes().map(|s| 0.5 * (1.1 * s).cos()).collect();
        let spec = StripSpec::new(grid, kappa, 1.0, 11, eps).unwrap();
        let jac = strip_jacobians(&spec, None).unwrap();
        let a = renormalize(
            flatten(&assemble_strip(&spec, &jac, AssemblyMode::Direct).unwrap()).unwrap(),
            eps,
            vals[0],
        )
        .unwrap();
        let rq = min_rayleigh_perp(&a, &vecs[0]).unwrap();
        assert!(rq >= 0.5 * (vals[1] - vals[0]) / (eps * eps), "perp floor {rq:.3}");
    }

    #[test]
    fn bound_constants_arithmetic() {
        let c = BoundConstants::compute(-10.0, 1.0, 1.0, 0.01, 10.0, 40.0).unwrap();
        assert_relative_eq!(c.c1.unwrap(), 4.0);
        assert_relative_eq!(c.c2.unwrap(), 10.0);
        assert_relative_eq!(c.c3.unwrap(), 120.0);
        assert!(c.beta > 0.0 && c.beta < 1.0);
        assert!(c.c_perp > 0.0);

        // Straight curve: explicit constants are undefined, coercivity is
        // not. beta* = (e2 - e1)/(1 + e2) at r = 1.
        let c0 = BoundConstants::compute(-1.0, 0.0, 1.0, 0.1, 10.0, 40.0).unwrap();
        assert!(c0.c1.is_none() && c0.c2.is_none() && c0.c3.is_none());
        let beta = 30.0 / 41.0;
        assert_relative_eq!(c0.beta, beta, max_relative = 1e-12);
        assert_relative_eq!(c0.c_perp, 2.0 / (beta as f64).sqrt(), max_relative = 1e-12);

        // Inadmissible spectral parameter and oversized eps.
        assert!(BoundConstants::compute(-8.0, 1.0, 1.0, 0.01, 10.0, 40.0).is_err());
        assert!(matches!(
            BoundConstants::compute(-10.0, 1.0, 1.0, 0.3, 10.0, 40.0),
            Err(Error::EpsilonTooLarge { .. })
        ));
    }

    #[test]
    fn bracket_is_exactly_eps_for_constants_on_interior_windows() {
        let grid = ArcGrid::new(0.0, 20.0, 2001).unwrap();
        let k1 = SampledFunction::linear(grid, vec![0.7; 2001]).unwrap();
        let k2 = SampledFunction::linear(grid, vec![-0.2; 2001]).unwrap();
        let td = SampledFunction::linear(grid, vec![0.3; 2001]).unwrap();
        let schedule = MollifierSchedule::two_thirds();
        let consts =
            BoundConstants::compute(-10.0, 0.73, 1.0, 0.1, 10.0, 40.0).unwrap();
        let b =
            rate_bracket_on(0.1, &k1, &k2, &td, &schedule, Some(&consts), Some((2.0, 18.0)))
                .unwrap();
        assert_eq!(b.steklov_deriv, 0.0);
        assert_eq!(b.sigma_k, 0.0);
        assert_eq!(b.sigma_theta, 0.0);
        assert_eq!(b.total, 0.1);
        // Off the window the zero extension makes the same data rough.
        let full = rate_bracket(0.1, &k1, &k2, &td, &schedule, Some(&consts)).unwrap();
        assert!(full.sigma_k > 0.0);
    }

    #[test]
    fn bracket_scales_like_cube_root_for_square_wave_curvature() {
        // Alternating +-1 curvature with period 1/2 and the window
        // delta = eps^(2/3): the averaged derivative is capped by the
        // total jump over the window and the shift modulus scales like
        // sqrt(delta).
        let n = 6001;
        let grid = ArcGrid::new(0.0, 12.0, n).unwrap();
        let vals: Vec<f64> = grid
            .nodes()
            .map(|s| if (s / 0.25).floor() as i64 % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let k1 = SampledFunction::new(grid, vals, Interpolation::PiecewiseConstant).unwrap();
        let k2 = SampledFunction::linear(grid, vec![0.0; n]).unwrap();
        let td = SampledFunction::linear(grid, vec![0.0; n]).unwrap();
        let schedule = MollifierSchedule::two_thirds();
        let eps = 1e-3;
        let consts = BoundConstants::compute(-10.0, 1.0, 1.0, eps, 10.0, 40.0).unwrap();
        let b = rate_bracket_on(
            eps,
            &k1,
            &k2,
            &td,
            &schedule,
            Some(&consts),
            Some((1.0, 11.0)),
        )
        .unwrap();
        let third = eps.powf(1.0 / 3.0);
        assert!(b.steklov_deriv <= 2.0 * third + 1e-9, "deriv term {:.6}", b.steklov_deriv);
        assert!(b.steklov_deriv >= 1.8 * third, "deriv term too small {:.6}", b.steklov_deriv);
        // Four jumps of height 2 per unit cell: the squared modulus is
        // 16 |eta|, maximized at eta = delta/2.
        assert!(
            (b.sigma_k - (8.0 * b.delta).sqrt()).abs() <= 1e-9,
            "sigma_k {:.9} vs sqrt(8 delta) {:.9}",
            b.sigma_k,
            (8.0 * b.delta).sqrt()
        );
        assert_eq!(b.sigma_theta, 0.0);
    }

    #[test]
    fn bracket_inherits_lipschitz_slopes() {
        let n = 4001;
        let grid = ArcGrid::new(0.0, 16.0, n).unwrap();
        let k1v: Vec<f64> = grid.nodes().map(|s| 0.5 * (0.7 * s).sin()).collect();
        let k2v: Vec<f64> = grid.nodes().map(|s| 0.3 * (0.4 * s).cos()).collect();
        let tdv: Vec<f64> = grid.nodes().map(|s| 0.2 * (0.5 * s).sin()).collect();
        let k1 = SampledFunction::linear(grid, k1v).unwrap();
        let k2 = SampledFunction::linear(grid, k2v).unwrap();
        let td = SampledFunction::linear(grid, tdv).unwrap();
        let (l1, l2) = (0.5 * 0.7, 0.3 * 0.4);
        let schedule = MollifierSchedule::proportional();
        let eps = 0.01;
        let consts = BoundConstants::compute(-10.0, 0.8, 1.0, eps, 10.0, 40.0).unwrap();
        let b = rate_bracket_on(
            eps,
            &k1,
            &k2,
            &td,
            &schedule,
            Some(&consts),
            Some((1.0, 15.0)),
        )
        .unwrap();
        // Window averaging cannot steepen a Lipschitz function.
        assert!(b.steklov_deriv <= eps * (l1 + l2) * 1.0001);
        // The shift modulus of an L-Lipschitz function over unit cells is
        // at most L delta/2 per component.
        assert!(b.sigma_k <= 0.5 * (l1 + l2) * b.delta * 1.0001);
        assert!(b.total >= eps);
        let st = b.sigma_tilde_explicit.unwrap();
        assert!(st > 0.0 && st.is_finite());
    }
}
