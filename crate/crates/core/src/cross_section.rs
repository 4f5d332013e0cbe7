//! Cross-section geometry and its Dirichlet eigendata.
//!
//! A tube is a curve swept by a fixed planar section. Everything the
//! effective dynamics needs from that section is computed here: the two
//! lowest Dirichlet eigenvalues on a uniform lattice, the normalized
//! ground state, and the angular coupling constant that multiplies the
//! squared frame-rotation rate in the effective potential.
//!
//! Conventions: the section lives in the (t1, t2) plane with the tube axis
//! through the origin. `rect` and `ellipse` take full side/axis lengths,
//! `disc` and `annulus` take radii. An optional offset displaces the
//! section relative to the axis; offsets break the rotational symmetry
//! that otherwise makes the angular coupling vanish identically.

use std::collections::VecDeque;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::{lowest_eigs_shift_invert, SparseSym};

/// Geometric kind of a cross-section, centered at its own origin.
#[derive(Debug, Clone, PartialEq)]
pub enum ShapeKind {
    /// Full side lengths.
    Rectangle { width: f64, height: f64 },
    Disc { radius: f64 },
    Annulus { inner: f64, outer: f64 },
    /// Full axis lengths.
    Ellipse { width: f64, height: f64 },
    /// Bitmap of square cells of side `pitch`, centered on the bitmap's
    /// bounding box. Must be 4-connected.
    Mask { cells: Vec<Vec<bool>>, pitch: f64 },
}

/// A cross-section: a shape kind plus an offset of its center from the
/// tube axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Shape {
    kind: ShapeKind,
    offset: (f64, f64),
}

fn positive(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::InvalidInput(format!("{what} must be positive, got {v}")))
    }
}

impl Shape {
    pub fn rectangle(width: f64, height: f64) -> Result<Self> {
        positive(width, "rectangle width")?;
        positive(height, "rectangle height")?;
        Ok(Self { kind: ShapeKind::Rectangle { width, height }, offset: (0.0, 0.0) })
    }

    pub fn disc(radius: f64) -> Result<Self> {
        positive(radius, "disc radius")?;
        Ok(Self { kind: ShapeKind::Disc { radius }, offset: (0.0, 0.0) })
    }

    pub fn annulus(inner: f64, outer: f64) -> Result<Self> {
        positive(inner, "annulus inner radius")?;
        positive(outer, "annulus outer radius")?;
        if inner >= outer {
            return Err(Error::InvalidInput(format!(
                "annulus needs inner < outer, got {inner} >= {outer}"
            )));
        }
        Ok(Self { kind: ShapeKind::Annulus { inner, outer }, offset: (0.0, 0.0) })
    }

    pub fn ellipse(width: f64, height: f64) -> Result<Self> {
        positive(width, "ellipse width")?;
        positive(height, "ellipse height")?;
        Ok(Self { kind: ShapeKind::Ellipse { width, height }, offset: (0.0, 0.0) })
    }

    pub fn mask(cells: Vec<Vec<bool>>, pitch: f64) -> Result<Self> {
        positive(pitch, "mask pitch")?;
        if cells.is_empty() || cells[0].is_empty() {
            return Err(Error::InvalidInput("mask must be non-empty".into()));
        }
        let ncols = cells[0].len();
        if cells.iter().any(|r| r.len() != ncols) {
            return Err(Error::InvalidInput("mask rows must have equal length".into()));
        }
        check_mask_connected(&cells)?;
        Ok(Self { kind: ShapeKind::Mask { cells, pitch }, offset: (0.0, 0.0) })
    }

    pub fn with_offset(mut self, ox: f64, oy: f64) -> Result<Self> {
        if !(ox.is_finite() && oy.is_finite()) {
            return Err(Error::InvalidInput("offset must be finite".into()));
        }
        self.offset = (ox, oy);
        Ok(self)
    }

    pub fn kind(&self) -> &ShapeKind {
        &self.kind
    }

    pub fn offset(&self) -> (f64, f64) {
        self.offset
    }

    /// Bounding box (x0, x1, y0, y1) including the offset.
    pub fn bounding_box(&self) -> (f64, f64, f64, f64) {
        let (hw, hh) = match &self.kind {
            ShapeKind::Rectangle { width, height } => (width / 2.0, height / 2.0),
            ShapeKind::Disc { radius } => (*radius, *radius),
            ShapeKind::Annulus { outer, .. } => (*outer, *outer),
            ShapeKind::Ellipse { width, height } => (width / 2.0, height / 2.0),
            ShapeKind::Mask { cells, pitch } => (
                cells[0].len() as f64 * pitch / 2.0,
                cells.len() as f64 * pitch / 2.0,
            ),
        };
        let (ox, oy) = self.offset;
        (ox - hw, ox + hw, oy - hh, oy + hh)
    }

    /// Strict interior test in axis coordinates; boundary points count as
    /// outside (they carry the Dirichlet condition).
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (ox, oy) = self.offset;
        let (u, v) = (x - ox, y - oy);
        match &self.kind {
            ShapeKind::Rectangle { width, height } => {
                u.abs() < width / 2.0 && v.abs() < height / 2.0
            }
            ShapeKind::Disc { radius } => u * u + v * v < radius * radius,
            ShapeKind::Annulus { inner, outer } => {
                let r2 = u * u + v * v;
                r2 > inner * inner && r2 < outer * outer
            }
            ShapeKind::Ellipse { width, height } => {
                let (a, b) = (width / 2.0, height / 2.0);
                (u / a) * (u / a) + (v / b) * (v / b) < 1.0
            }
            ShapeKind::Mask { cells, pitch } => {
                let nrows = cells.len() as f64;
                let ncols = cells[0].len() as f64;
                let cx = (u + ncols * pitch / 2.0) / pitch;
                let cy = (v + nrows * pitch / 2.0) / pitch;
                if cx <= 0.0 || cy <= 0.0 || cx >= ncols || cy >= nrows {
                    return false;
                }
                cells[cy as usize][cx as usize]
            }
        }
    }

    /// Upper bound on the distance from the axis to any section point.
    /// Exact for rectangles, discs, annuli and masks; for ellipses it is
    /// the safe estimate |offset| + max semi-axis.
    pub fn radius_bound(&self) -> f64 {
        let (ox, oy) = self.offset;
        let off = (ox * ox + oy * oy).sqrt();
        match &self.kind {
            ShapeKind::Rectangle { width, height } => {
                let (hw, hh) = (width / 2.0, height / 2.0);
                [(hw, hh), (hw, -hh), (-hw, hh), (-hw, -hh)]
                    .iter()
                    .map(|&(cx, cy)| ((ox + cx).powi(2) + (oy + cy).powi(2)).sqrt())
                    .fold(0.0f64, f64::max)
            }
            ShapeKind::Disc { radius } => off + radius,
            ShapeKind::Annulus { outer, .. } => off + outer,
            ShapeKind::Ellipse { width, height } => off + width.max(*height) / 2.0,
            ShapeKind::Mask { cells, pitch } => {
                let (hw, hh) =
                    (cells[0].len() as f64 * pitch / 2.0, cells.len() as f64 * pitch / 2.0);
                let mut best = 0.0f64;
                for (ri, row) in cells.iter().enumerate() {
                    for (ci, &on) in row.iter().enumerate() {
                        if !on {
                            continue;
                        }
                        for (cx, cy) in [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)] {
                            let x = ox - hw + (ci as f64 + cx) * pitch;
                            let y = oy - hh + (ri as f64 + cy) * pitch;
                            best = best.max((x * x + y * y).sqrt());
                        }
                    }
                }
                best
            }
        }
    }

    /// True when the section is rotation invariant about the tube axis.
    /// In that case the angular derivative of the (radial) ground state
    /// vanishes identically and the angular coupling is exactly zero.
    pub fn is_axisymmetric(&self) -> bool {
        if self.offset != (0.0, 0.0) {
            return false;
        }
        match &self.kind {
            ShapeKind::Disc { .. } | ShapeKind::Annulus { .. } => true,
            ShapeKind::Ellipse { width, height } => width == height,
            _ => false,
        }
    }
}

fn check_mask_connected(cells: &[Vec<bool>]) -> Result<()> {
    let nrows = cells.len();
    let ncols = cells[0].len();
    let total: usize = cells.iter().map(|r| r.iter().filter(|&&b| b).count()).sum();
    if total == 0 {
        return Err(Error::InvalidInput("mask has no active cells".into()));
    }
    let start = cells
        .iter()
        .enumerate()
        .find_map(|(r, row)| row.iter().position(|&b| b).map(|c| (r, c)))
        .unwrap();
    let mut seen = vec![vec![false; ncols]; nrows];
    let mut queue = VecDeque::from([start]);
    seen[start.0][start.1] = true;
    let mut count = 0usize;
    while let Some((r, c)) = queue.pop_front() {
        count += 1;
        let mut push = |rr: usize, cc: usize| {
            if cells[rr][cc] && !seen[rr][cc] {
                seen[rr][cc] = true;
                queue.push_back((rr, cc));
            }
        };
        if r > 0 {
            push(r - 1, c);
        }
        if r + 1 < nrows {
            push(r + 1, c);
        }
        if c > 0 {
            push(r, c - 1);
        }
        if c + 1 < ncols {
            push(r, c + 1);
        }
    }
    if count != total {
        return Err(Error::DisconnectedMask);
    }
    Ok(())
}

impl FromStr for Shape {
    type Err = Error;

    /// Parses `rect:W,H`, `disc:R`, `annulus:RI,RO`, `ellipse:W,H`, each
    /// optionally followed by `@OX,OY`.
    fn from_str(s: &str) -> Result<Self> {
        let (body, offset) = match s.split_once('@') {
            Some((b, o)) => {
                let nums = parse_floats(o, 2)?;
                (b, (nums[0], nums[1]))
            }
            None => (s, (0.0, 0.0)),
        };
        let (name, args) = body
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("shape spec '{s}' is missing ':'")))?;
        let shape = match name.trim() {
            "rect" => {
                let v = parse_floats(args, 2)?;
                Shape::rectangle(v[0], v[1])?
            }
            "disc" => {
                let v = parse_floats(args, 1)?;
                Shape::disc(v[0])?
            }
            "annulus" => {
                let v = parse_floats(args, 2)?;
                Shape::annulus(v[0], v[1])?
            }
            "ellipse" => {
                let v = parse_floats(args, 2)?;
                Shape::ellipse(v[0], v[1])?
            }
            other => {
                return Err(Error::Parse(format!(
                    "unknown shape '{other}' (expected rect, disc, annulus or ellipse)"
                )))
            }
        };
        shape.with_offset(offset.0, offset.1)
    }
}

fn parse_floats(s: &str, expect: usize) -> Result<Vec<f64>> {
    let vals: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| Error::Parse(format!("'{p}': {e}"))))
        .collect::<Result<_>>()?;
    if vals.len() != expect {
        return Err(Error::Parse(format!("expected {expect} numbers, got {}", vals.len())));
    }
    Ok(vals)
}

/// Uniform lattice of interior nodes over a shape's bounding box.
///
/// `n` subdivides the longer bounding-box side; the shorter side gets a
/// proportional count so the spacings stay close to square. Only nodes
/// strictly inside the shape are kept, and the Dirichlet condition is the
/// zero extension to everything else.
#[derive(Debug, Clone)]
pub struct CrossLattice {
    shape: Shape,
    nx: usize,
    ny: usize,
    dx: f64,
    dy: f64,
    x0: f64,
    y0: f64,
    /// Row-major (iy-major) map from grid lines (1..nx) x (1..ny) to the
    /// packed interior index.
    index: Vec<Option<usize>>,
    points: Vec<(usize, usize)>,
}

impl CrossLattice {
    pub fn new(shape: &Shape, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidInput(format!("lattice resolution {n} is too small")));
        }
        let (x0, x1, y0, y1) = shape.bounding_box();
        let (w, h) = (x1 - x0, y1 - y0);
        let spacing = w.max(h) / n as f64;
        let nx = (w / spacing).round().max(2.0) as usize;
        let ny = (h / spacing).round().max(2.0) as usize;
        let dx = w / nx as f64;
        let dy = h / ny as f64;

        let mut index = vec![None; (nx - 1) * (ny - 1)];
        let mut points = Vec::new();
        for iy in 1..ny {
            for ix in 1..nx {
                let x = x0 + ix as f64 * dx;
                let y = y0 + iy as f64 * dy;
                if shape.contains(x, y) {
                    index[(iy - 1) * (nx - 1) + (ix - 1)] = Some(points.len());
                    points.push((ix, iy));
                }
            }
        }
        if points.len() < 5 {
            return Err(Error::DegenerateSection(format!(
                "only {} interior nodes at resolution {n}; refine the lattice",
                points.len()
            )));
        }
        Ok(Self { shape: shape.clone(), nx, ny, dx, dy, x0, y0, index, points })
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn spacing(&self) -> (f64, f64) {
        (self.dx, self.dy)
    }

    pub fn cell_area(&self) -> f64 {
        self.dx * self.dy
    }

    /// Axis coordinates of interior node k.
    pub fn coords(&self, k: usize) -> (f64, f64) {
        let (ix, iy) = self.points[k];
        (self.x0 + ix as f64 * self.dx, self.y0 + iy as f64 * self.dy)
    }

    fn at(&self, ix: usize, iy: usize) -> Option<usize> {
        if ix == 0 || iy == 0 || ix >= self.nx || iy >= self.ny {
            return None;
        }
        self.index[(iy - 1) * (self.nx - 1) + (ix - 1)]
    }

    /// Packed indices of the four lattice neighbors (left, right, down,
    /// up); None where the neighbor is outside (Dirichlet zero).
    pub fn neighbors(&self, k: usize) -> [Option<usize>; 4] {
        let (ix, iy) = self.points[k];
        [
            (ix > 0).then(|| self.at(ix - 1, iy)).flatten(),
            self.at(ix + 1, iy),
            (iy > 0).then(|| self.at(ix, iy - 1)).flatten(),
            self.at(ix, iy + 1),
        ]
    }

    /// Five-point Dirichlet stiffness matrix (the negative lattice
    /// Laplacian, positive definite).
    pub fn stiffness(&self) -> SparseSym {
        let (cx, cy) = (1.0 / (self.dx * self.dx), 1.0 / (self.dy * self.dy));
        let mut t = Vec::with_capacity(5 * self.len());
        for k in 0..self.len() {
            t.push((k, k, 2.0 * cx + 2.0 * cy));
            let nb = self.neighbors(k);
            for (slot, coeff) in nb.iter().zip([cx, cx, cy, cy]) {
                if let Some(j) = slot {
                    t.push((k, *j, -coeff));
                }
            }
        }
        SparseSym::from_triplets(self.len(), t).expect("stencil triplets are in range")
    }
}

/// Lowest `m` Dirichlet eigenpairs on the lattice. Eigenvectors come back
/// unit in the plain euclidean sense.
pub fn transverse_eigs(lattice: &CrossLattice, m: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let k = lattice.stiffness();
    // The stiffness matrix is positive definite, so factoring at shift
    // zero is legal and gives the fastest inverse-iteration contrast.
    lowest_eigs_shift_invert(&k, m, 0.0, 1e-10, 600, 0x5ec7)
}

/// Angular coupling quadrature: the squared L2 norm of the angular
/// derivative t2 d1 - t1 d2 of a lattice function.
///
/// Interior nodes use centered differences (missing neighbors contribute
/// their Dirichlet zero) under the node quadrature rule. The derivative
/// does not vanish on the wall itself, so each wall point adjacent to an
/// interior node additionally enters as a trapezoid boundary row at half
/// weight, with the one-sided difference against the zero extension and a
/// vanishing along-wall derivative. Dropping those rows would lose the
/// boundary strip of the integrand and with it an order of accuracy; this
/// is also exactly the stencil the tube assembly applies to theta_dot
/// d_alpha, which keeps the effective potential consistent with the 3D
/// operator it summarizes.
pub fn angular_coupling(lattice: &CrossLattice, j: &[f64]) -> f64 {
    let (dx, dy) = lattice.spacing();
    let mu = lattice.cell_area();
    let g = |o: Option<usize>| o.map_or(0.0, |idx: usize| j[idx]);
    let mut total = 0.0;
    for k in 0..lattice.len() {
        let (t1, t2) = lattice.coords(k);
        let [left, right, down, up] = lattice.neighbors(k);
        let d1 = (g(right) - g(left)) / (2.0 * dx);
        let d2 = (g(up) - g(down)) / (2.0 * dy);
        let ang = t2 * d1 - t1 * d2;
        total += mu * ang * ang;
        for (slot, coeff) in
            [left, right, down, up].iter().zip([t2 / dx, -t2 / dx, -t1 / dy, t1 / dy])
        {
            if slot.is_none() {
                let wall = coeff * j[k];
                total += 0.5 * mu * wall * wall;
            }
        }
    }
    total
}

/// Eigendata of a cross-section on a concrete lattice.
///
/// `e1`, `e2` and `j1` are the discrete values of that lattice; operators
/// assembled over the same lattice reproduce them exactly, which is what
/// the renormalized comparisons rely on. `extrapolated` carries the
/// two-level Richardson estimates of the continuum energies when the
/// section was computed with refinement.
#[derive(Debug, Clone)]
pub struct CrossSection {
    pub shape: Shape,
    pub lattice: CrossLattice,
    pub e1: f64,
    pub e2: f64,
    pub extrapolated: Option<(f64, f64)>,
    /// Ground state, positive, normalized so that sum(j1^2) dx dy = 1.
    pub j1: Vec<f64>,
    pub c_omega: f64,
    pub radius_bound: f64,
}

impl CrossSection {
    pub fn compute(shape: &Shape, n: usize) -> Result<Self> {
        let lattice = CrossLattice::new(shape, n)?;
        let (vals, mut vecs) = transverse_eigs(&lattice, 2)?;
        let (e1, e2) = (vals[0], vals[1]);
        if !(e1 > 0.0 && e2 > e1) {
            return Err(Error::DegenerateSection(format!(
                "transverse energies not ordered positively: E1 = {e1:.6e}, E2 = {e2:.6e}"
            )));
        }
        let mut j1 = std::mem::take(&mut vecs[0]);
        // The ground state of the lattice stencil is single-signed; fix the
        // positive representative and switch to the quadrature norm.
        if j1.iter().sum::<f64>() < 0.0 {
            for v in &mut j1 {
                *v = -*v;
            }
        }
        let scale = 1.0 / lattice.cell_area().sqrt();
        for v in &mut j1 {
            *v *= scale;
        }
        let c_omega = if shape.is_axisymmetric() {
            // Rotation invariance about the axis makes the angular
            // derivative of the radial ground state vanish identically;
            // zero is exact where the quadrature would only add noise.
            0.0
        } else {
            angular_coupling(&lattice, &j1)
        };
        Ok(Self {
            shape: shape.clone(),
            radius_bound: shape.radius_bound(),
            lattice,
            e1,
            e2,
            extrapolated: None,
            j1,
            c_omega,
        })
    }

    /// Computes on lattices of resolution n and 2n and keeps the fine
    /// one, adding second-order Richardson estimates of the continuum
    /// energies.
    pub fn compute_refined(shape: &Shape, n: usize) -> Result<Self> {
        let coarse = Self::compute(shape, n)?;
        let mut fine = Self::compute(shape, 2 * n)?;
        fine.extrapolated =
            Some(((4.0 * fine.e1 - coarse.e1) / 3.0, (4.0 * fine.e2 - coarse.e2) / 3.0));
        Ok(fine)
    }

    /// Spectral gap of the lattice operator.
    pub fn gap(&self) -> f64 {
        self.e2 - self.e1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn square_spectrum_matches_separable_closed_form() {
        // On the unit square with spacing h the five-point eigenvalues are
        // (4/h^2)(sin^2(pi k h/2) + sin^2(pi l h/2)).
        let shape = Shape::rectangle(1.0, 1.0).unwrap();
        let lattice = CrossLattice::new(&shape, 40).unwrap();
        assert_eq!(lattice.len(), 39 * 39);
        let (vals, vecs) = transverse_eigs(&lattice, 2).unwrap();
        let h = 1.0 / 40.0;
        let mode = |k: f64, l: f64| {
            4.0 / (h * h) * ((PI * k * h / 2.0).sin().powi(2) + (PI * l * h / 2.0).sin().powi(2))
        };
        assert_relative_eq!(vals[0], mode(1.0, 1.0), max_relative = 1e-9);
        assert_relative_eq!(vals[1], mode(1.0, 2.0), max_relative = 1e-9);

        // Ground state is the product of sines up to normalization; check
        // the value ratio at two nodes.
        let k = lattice.len() / 2; // center node (odd count per side)
        let (xc, yc) = lattice.coords(k);
        assert_relative_eq!(xc, 0.0, epsilon = 1e-12);
        assert_relative_eq!(yc, 0.0, epsilon = 1e-12);
        let exact = |x: f64, y: f64| (PI * (x + 0.5)).sin() * (PI * (y + 0.5)).sin();
        let (x9, y9) = lattice.coords(9);
        let ratio = vecs[0][9] / vecs[0][k];
        assert_relative_eq!(ratio, exact(x9, y9) / exact(xc, yc), epsilon = 1e-8);
    }

    #[test]
    fn richardson_reaches_continuum_square_energies() {
        let shape = Shape::rectangle(1.0, 1.0).unwrap();
        let cs = CrossSection::compute_refined(&shape, 32).unwrap();
        let (e1, e2) = cs.extrapolated.unwrap();
        assert_relative_eq!(e1, 2.0 * PI * PI, max_relative = 5e-4);
        assert_relative_eq!(e2, 5.0 * PI * PI, max_relative = 2e-3);
    }

    #[test]
    fn disc_energies_approach_bessel_zeros() {
        let shape = Shape::disc(1.0).unwrap();
        let cs = CrossSection::compute(&shape, 64).unwrap();
        // Squares of the first zeros of J0 and J1.
        assert_relative_eq!(cs.e1, 5.7831859629467, max_relative = 5e-2);
        assert_relative_eq!(cs.e2, 14.681970642124, max_relative = 5e-2);
        assert!(cs.j1.iter().all(|&v| v > -1e-12));
    }

    #[test]
    fn axisymmetric_sections_have_exactly_zero_coupling() {
        for spec in ["disc:0.8", "annulus:0.4,1.0", "ellipse:2,2"] {
            let shape: Shape = spec.parse().unwrap();
            assert!(shape.is_axisymmetric(), "{spec}");
            let cs = CrossSection::compute(&shape, 48).unwrap();
            assert_eq!(cs.c_omega, 0.0, "{spec}");
        }
    }

    #[test]
    fn offset_disc_couples_to_rotation() {
        let shape: Shape = "disc:1@0.4,0".parse().unwrap();
        assert!(!shape.is_axisymmetric());
        let cs = CrossSection::compute(&shape, 48).unwrap();
        // The ground state stays radial about the displaced center, so its
        // angular derivative about the axis is genuinely nonzero.
        assert!(cs.c_omega > 1e-3, "c_omega = {}", cs.c_omega);
        assert_relative_eq!(cs.radius_bound, 1.4);
    }

    #[test]
    fn rectangle_coupling_matches_analytic_ground_state() {
        // Independent oracle: the continuum ground state of a centered
        // W x H rectangle is known in closed form; quadrature of its
        // angular derivative on a fine auxiliary grid approximates the
        // continuum coupling. The lattice value must land nearby.
        let (w, h) = (2.0, 1.0);
        let shape = Shape::rectangle(w, h).unwrap();
        let cs = CrossSection::compute(&shape, 96).unwrap();

        let norm = (4.0 / (w * h)).sqrt();
        let m = 800;
        let (du, dv) = (w / m as f64, h / m as f64);
        let mut acc = 0.0;
        for i in 0..m {
            for j in 0..m {
                let x = -w / 2.0 + (i as f64 + 0.5) * du;
                let y = -h / 2.0 + (j as f64 + 0.5) * dv;
                let d1 = -norm * PI / w * (PI * x / w).sin() * (PI * y / h).cos();
                let d2 = -norm * PI / h * (PI * x / w).cos() * (PI * y / h).sin();
                let ang = y * d1 - x * d2;
                acc += ang * ang;
            }
        }
        let oracle = acc * du * dv;
        assert_relative_eq!(cs.c_omega, oracle, max_relative = 5e-3);
    }

    #[test]
    fn domain_monotonicity_of_ground_energy() {
        // disc(0.5) inside ellipse(2,1) inside rect(2,1): Dirichlet ground
        // energies must decrease along the inclusions.
        let e_disc = CrossSection::compute(&Shape::disc(0.5).unwrap(), 48).unwrap().e1;
        let e_ell = CrossSection::compute(&Shape::ellipse(2.0, 1.0).unwrap(), 48).unwrap().e1;
        let e_rect = CrossSection::compute(&Shape::rectangle(2.0, 1.0).unwrap(), 48).unwrap().e1;
        assert!(e_disc > e_ell, "{e_disc} vs {e_ell}");
        assert!(e_ell > e_rect, "{e_ell} vs {e_rect}");
    }

    #[test]
    fn mask_sections_validate_connectivity() {
        let l_shape = vec![
            vec![true, false],
            vec![true, true],
        ];
        let shape = Shape::mask(l_shape, 1.0).unwrap();
        let cs = CrossSection::compute(&shape, 40).unwrap();
        // Smaller domain than its 2 x 2 bounding square: higher energy.
        let square = CrossSection::compute(&Shape::rectangle(2.0, 2.0).unwrap(), 40).unwrap();
        assert!(cs.e1 > square.e1);

        let split = vec![
            vec![true, false],
            vec![false, true],
        ];
        match Shape::mask(split, 1.0) {
            Err(Error::DisconnectedMask) => {}
            other => panic!("expected disconnected mask, got {other:?}"),
        }
    }

    #[test]
    fn shape_specs_parse_and_validate() {
        let s: Shape = "rect:2,1".parse().unwrap();
        assert_relative_eq!(s.radius_bound(), (1.0f64 + 0.25).sqrt());
        let s: Shape = "disc:1.5@0.2,-0.1".parse().unwrap();
        assert_eq!(s.offset(), (0.2, -0.1));
        assert!("annulus:1,0.5".parse::<Shape>().is_err());
        assert!("blob:1".parse::<Shape>().is_err());
        assert!("rect:2".parse::<Shape>().is_err());
        assert!("disc:".parse::<Shape>().is_err());
    }

    #[test]
    fn tiny_lattices_are_rejected() {
        let shape = Shape::disc(1.0).unwrap();
        match CrossLattice::new(&shape, 2) {
            Err(Error::DegenerateSection(_)) => {}
            other => panic!("expected degenerate section, got {other:?}"),
        }
    }
}
