//! Sparse symmetric matrices and the few iterative solvers the spectral
//! layer needs.
//!
//! Every operator assembled in this crate is symmetric with a moderate
//! bandwidth under the s-major node ordering, so a banded Cholesky
//! factorisation of (A - sigma I) carries all the shifted solves: inverse
//! and Lanczos iterations for low eigenvalues, and resolvent applications
//! for gap estimates. Nothing here is adaptive or clever; determinism and
//! exact symmetry are worth more to the studies than raw speed.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Symmetric sparse matrix in CSR form, both triangles stored.
#[derive(Debug, Clone)]
pub struct SparseSym {
    n: usize,
    row_ptr: Vec<usize>,
    col: Vec<usize>,
    val: Vec<f64>,
}

impl SparseSym {
    /// Builds from (row, col, value) triplets, summing duplicates.
    ///
    /// The sort is stable, so entries contributed pairwise to (i, j) and
    /// (j, i) are summed in the same order and the result is symmetric to
    /// the last bit, not merely up to rounding.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Result<Self> {
        if triplets.iter().any(|&(i, j, v)| i >= n || j >= n || !v.is_finite()) {
            return Err(Error::InvalidInput("triplet out of range or non-finite".into()));
        }
        triplets.sort_by_key(|&(i, j, _)| (i, j));
        let mut rows = Vec::with_capacity(triplets.len());
        let mut col = Vec::with_capacity(triplets.len());
        let mut val = Vec::with_capacity(triplets.len());
        for &(i, j, v) in &triplets {
            if rows.last() == Some(&i) && col.last() == Some(&j) {
                *val.last_mut().unwrap() += v;
            } else {
                rows.push(i);
                col.push(j);
                val.push(v);
            }
        }
        let mut row_ptr = vec![0usize; n + 1];
        for &i in &rows {
            row_ptr[i + 1] += 1;
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(Self { n, row_ptr, col, val })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.val.len()
    }

    /// Entries of row i as (column, value) pairs.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        self.col[lo..hi].iter().cloned().zip(self.val[lo..hi].iter().cloned())
    }

    /// Row-sum norm; bounds the spectral norm for symmetric matrices.
    pub fn inf_norm(&self) -> f64 {
        (0..self.n)
            .map(|i| self.row(i).map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// y = A x.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(y.len(), self.n);
        for i in 0..self.n {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.val[k] * x[self.col[k]];
            }
            y[i] = acc;
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec(x, &mut y);
        y
    }

    /// Adds `shift` to every diagonal entry (the diagonal must be present,
    /// which holds for every operator assembled in this crate).
    pub fn diag_add(&mut self, shift: f64) -> Result<()> {
        for i in 0..self.n {
            let mut found = false;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                if self.col[k] == i {
                    self.val[k] += shift;
                    found = true;
                    break;
                }
            }
            if !found {
                return Err(Error::InvalidInput(format!("missing diagonal at row {i}")));
            }
        }
        Ok(())
    }

    /// Symmetric diagonal congruence A -> D A D with D = diag(d).
    pub fn scale_sym(&mut self, d: &[f64]) -> Result<()> {
        if d.len() != self.n {
            return Err(Error::InvalidInput("scaling vector length mismatch".into()));
        }
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                self.val[k] *= d[i] * d[self.col[k]];
            }
        }
        Ok(())
    }

    /// Largest |i - j| over stored entries.
    pub fn bandwidth(&self) -> usize {
        let mut b = 0usize;
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                b = b.max(i.abs_diff(self.col[k]));
            }
        }
        b
    }

    /// Checks bitwise symmetry; returns the first asymmetric pair if any.
    pub fn symmetry_violation(&self) -> Option<(usize, usize)> {
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col[k];
                let v = self.val[k];
                let found = self.row(j).find(|&(c, _)| c == i);
                match found {
                    Some((_, w)) if w == v => {}
                    _ => return Some((i, j)),
                }
            }
        }
        None
    }

    /// Dense copy, for small oracles and tests.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                m[(i, self.col[k])] += self.val[k];
            }
        }
        m
    }

    /// Infinity norm estimate (max absolute row sum).
    pub fn norm_inf(&self) -> f64 {
        (0..self.n)
            .map(|i| self.row(i).map(|(_, v)| v.abs()).sum())
            .fold(0.0f64, f64::max)
    }
}

/// Cholesky factorisation of (A - shift I) in banded storage. Fails with a
/// descriptive error if the shifted matrix is not positive definite, which
/// is the natural signal that the shift is not below the spectrum.
pub struct BandedCholesky {
    n: usize,
    band: usize,
    /// Row-major lower band: entry (i, j) with i - band <= j <= i lives at
    /// data[i * (band + 1) + (j - i + band)].
    data: Vec<f64>,
}

impl BandedCholesky {
    pub fn factor(a: &SparseSym, shift: f64) -> Result<Self> {
        let n = a.dim();
        let band = a.bandwidth();
        let stride = band + 1;
        let mut data = vec![0.0f64; n * stride];
        // Load the lower triangle of A - shift I.
        for i in 0..n {
            for (j, v) in a.row(i) {
                if j <= i {
                    data[i * stride + (j + band - i)] += v;
                }
            }
            data[i * stride + band] -= shift;
        }
        // In-place banded Cholesky.
        for i in 0..n {
            let lo = i.saturating_sub(band);
            for j in lo..=i {
                let mut sum = data[i * stride + (j + band - i)];
                let kstart = lo.max(j.saturating_sub(band));
                for k in kstart..j {
                    sum -= data[i * stride + (k + band - i)] * data[j * stride + (k + band - j)];
                }
                if j < i {
                    data[i * stride + (j + band - i)] = sum / data[j * stride + band];
                } else {
                    if sum <= 0.0 {
                        return Err(Error::Solver(format!(
                            "matrix minus shift {shift:.6e} is not positive definite \
                             (pivot {sum:.3e} at row {i}); the shift must lie below the spectrum"
                        )));
                    }
                    data[i * stride + band] = sum.sqrt();
                }
            }
        }
        Ok(Self { n, band, data })
    }

    /// Solves (A - shift I) x = b.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        debug_assert_eq!(b.len(), self.n);
        let stride = self.band + 1;
        let mut x = b.to_vec();
        // L y = b
        for i in 0..self.n {
            let lo = i.saturating_sub(self.band);
            let mut sum = x[i];
            for j in lo..i {
                sum -= self.data[i * stride + (j + self.band - i)] * x[j];
            }
            x[i] = sum / self.data[i * stride + self.band];
        }
        // L^T x = y
        for i in (0..self.n).rev() {
            let hi = (i + self.band).min(self.n - 1);
            let mut sum = x[i];
            for j in i + 1..=hi {
                sum -= self.data[j * stride + (i + self.band - j)] * x[j];
            }
            x[i] = sum / self.data[i * stride + self.band];
        }
        x
    }
}

/// Deterministic unit start vector.
pub fn seeded_unit_vector(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in &mut v {
        *x /= norm;
    }
    v
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Eigenvalues (ascending) and vectors of a dense symmetric matrix; oracle
/// path for small problems and the Rayleigh-Ritz step of Lanczos.
pub fn dense_sym_eigs(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = m.clone().symmetric_eigen();
    let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let vals: Vec<f64> = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = DMatrix::zeros(m.nrows(), idx.len());
    for (c, &i) in idx.iter().enumerate() {
        vecs.set_column(c, &eig.eigenvectors.column(i));
    }
    (vals, vecs)
}

/// Size below which eigenproblems go to the dense solver directly.
const DENSE_CUTOFF: usize = 220;

/// The m lowest eigenpairs of a symmetric matrix by shift-invert Lanczos
/// with full reorthogonalisation.
///
/// `sigma` must lie strictly below the smallest eigenvalue: the banded
/// Cholesky of (A - sigma I) both enforces and exploits this. Convergence
/// is declared when every requested Ritz pair has relative residual
/// ||A v - lambda v|| <= tol * max(1, |lambda|), floored at the rounding
/// level of forming A v itself.
pub fn lowest_eigs_shift_invert(
    a: &SparseSym,
    m: usize,
    sigma: f64,
    tol: f64,
    max_iter: usize,
    seed: u64,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = a.dim();
    if m == 0 {
        return Err(Error::InvalidInput("need at least one eigenpair".into()));
    }
    if m > n {
        return Err(Error::InvalidInput(format!("{m} eigenpairs of a {n}-dim matrix")));
    }
    if !sigma.is_finite() {
        return Err(Error::InvalidInput("shift must be finite".into()));
    }

    if n <= DENSE_CUTOFF {
        let (vals, vecs) = dense_sym_eigs(&a.to_dense());
        let out_vals = vals[..m].to_vec();
        let out_vecs = (0..m).map(|c| vecs.column(c).iter().cloned().collect()).collect();
        return Ok((out_vals, out_vecs));
    }

    let chol = BandedCholesky::factor(a, sigma)?;
    // Forming A v in f64 carries rounding of order eps * ||A||, so residuals
    // plateau there no matter how long the iteration runs; a tolerance below
    // that floor would spin to the cap on stiff operators (fine transverse
    // grids push ||A|| past 1e8, where the floor crosses 1e-9).
    let res_floor = 8.0 * f64::EPSILON * a.inf_norm();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();

    let mut q = seeded_unit_vector(n, seed);
    basis.push(q.clone());

    let max_iter = max_iter.min(n);
    for j in 0..max_iter {
        let mut w = chol.solve(&q);
        let alpha = dot(&w, &q);
        alphas.push(alpha);
        // Full reorthogonalisation, twice for safety.
        for _ in 0..2 {
            for b in &basis {
                let c = dot(&w, b);
                for (wi, bi) in w.iter_mut().zip(b) {
                    *wi -= c * bi;
                }
            }
        }
        let beta = norm(&w);

        // Rayleigh-Ritz on the tridiagonal every few steps once the space
        // is large enough.
        let k = alphas.len();
        let check = k >= m + 2 && (k % 4 == 0 || beta < 1e-14 || j + 1 == max_iter);
        if check {
            let mut t = DMatrix::zeros(k, k);
            for i in 0..k {
                t[(i, i)] = alphas[i];
                if i + 1 < k {
                    t[(i, i + 1)] = betas[i];
                    t[(i + 1, i)] = betas[i];
                }
            }
            let (tvals, tvecs) = dense_sym_eigs(&t);
            // Largest Ritz values of the inverted operator map to the
            // eigenvalues nearest above sigma.
            let mut order: Vec<usize> = (0..k).collect();
            order.sort_by(|&x, &y| tvals[y].partial_cmp(&tvals[x]).unwrap());
            let take: Vec<usize> = order.into_iter().take(m).collect();

            let mut vals = Vec::with_capacity(m);
            let mut vecs = Vec::with_capacity(m);
            let mut all_ok = true;
            for &ti in &take {
                let theta = tvals[ti];
                if theta.abs() < 1e-300 {
                    all_ok = false;
                    break;
                }
                let lambda = sigma + 1.0 / theta;
                let mut v = vec![0.0; n];
                for (bi, b) in basis.iter().enumerate() {
                    let c = tvecs[(bi, ti)];
                    for (vi, xi) in v.iter_mut().zip(b) {
                        *vi += c * xi;
                    }
                }
                let vn = norm(&v);
                for x in &mut v {
                    *x /= vn;
                }
                let av = a.apply(&v);
                let res: f64 = av
                    .iter()
                    .zip(&v)
                    .map(|(a_i, v_i)| (a_i - lambda * v_i) * (a_i - lambda * v_i))
                    .sum::<f64>()
                    .sqrt();
                if res > (tol * lambda.abs().max(1.0)).max(res_floor) {
                    all_ok = false;
                }
                vals.push(lambda);
                vecs.push(v);
            }
            if all_ok && vals.len() == m {
                let mut idx: Vec<usize> = (0..m).collect();
                idx.sort_by(|&x, &y| vals[x].partial_cmp(&vals[y]).unwrap());
                let vals_sorted = idx.iter().map(|&i| vals[i]).collect();
                let vecs_sorted = idx.iter().map(|&i| vecs[i].clone()).collect();
                return Ok((vals_sorted, vecs_sorted));
            }
        }

        if beta < 1e-14 {
            // Invariant subspace hit before convergence: restart direction.
            q = seeded_unit_vector(n, seed.wrapping_add(j as u64 + 1));
            for _ in 0..2 {
                for b in &basis {
                    let c = dot(&q, b);
                    for (qi, bi) in q.iter_mut().zip(b) {
                        *qi -= c * bi;
                    }
                }
            }
            let qn = norm(&q);
            if qn < 1e-12 {
                break;
            }
            for x in &mut q {
                *x /= qn;
            }
            betas.push(0.0);
            basis.push(q.clone());
            continue;
        }

        betas.push(beta);
        for x in &mut w {
            *x /= beta;
        }
        q = w;
        basis.push(q.clone());
    }

    Err(Error::NonConvergence(format!(
        "Lanczos did not reach tolerance {tol:.1e} for {m} eigenpairs in {max_iter} iterations"
    )))
}

/// Operator norm of a symmetric operator given as a closure, via power
/// iteration on its square (so the sign of extreme eigenvalues is
/// irrelevant). Deterministic start vector from `seed`; converges when the
/// squared-norm estimate moves by less than `rel_tol` relatively.
pub fn symmetric_operator_norm(
    n: usize,
    apply: impl FnMut(&[f64]) -> Vec<f64>,
    rel_tol: f64,
    cap: usize,
    seed: u64,
) -> Result<f64> {
    let theta =
        lanczos_extreme(apply, seeded_unit_vector(n, seed), RitzSide::MaxMagnitude, rel_tol, cap)?;
    Ok(theta.abs())
}

/// Which extreme Ritz value a Krylov run is after.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RitzSide {
    /// Smallest eigenvalue (signed).
    MinValue,
    /// Largest eigenvalue in magnitude, i.e. the spectral norm point.
    MaxMagnitude,
}

/// Extreme Ritz value of a symmetric operator given through its action:
/// Lanczos with full reorthogonalization, stopping once the residual bound
/// beta |s_k| certifies `rel_tol` relative accuracy. Plain power or inverse
/// iteration is useless for the spectra this serves (resolvent differences,
/// band complements): their rate is the eigenvalue ratio, which sits within
/// a fraction of a percent of 1 there, while the Krylov polynomial isolates
/// a clustered extreme in a few dozen steps.
pub fn lanczos_extreme(
    mut apply: impl FnMut(&[f64]) -> Vec<f64>,
    start: Vec<f64>,
    side: RitzSide,
    rel_tol: f64,
    cap: usize,
) -> Result<f64> {
    let mut q = start;
    let qn = norm(&q);
    if !(qn.is_finite() && qn > 0.0) {
        return Err(Error::Solver("Krylov start vector collapsed to zero".into()));
    }
    for v in q.iter_mut() {
        *v /= qn;
    }
    let mut basis: Vec<Vec<f64>> = vec![q];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut scale = 0.0f64;
    for j in 0..cap {
        let mut w = apply(&basis[j]);
        let alpha = dot(&w, &basis[j]);
        alphas.push(alpha);
        scale = scale.max(alpha.abs());
        for b in &basis {
            let c = dot(&w, b);
            for (wv, bv) in w.iter_mut().zip(b) {
                *wv -= c * bv;
            }
        }
        let beta = norm(&w);
        let breakdown = beta <= 1e-13 * scale.max(1.0);
        if breakdown || (j >= 8 && j % 4 == 0) || j + 1 == cap {
            let k = alphas.len();
            let mut t = DMatrix::zeros(k, k);
            for (i, a) in alphas.iter().enumerate() {
                t[(i, i)] = *a;
            }
            for (i, b) in betas.iter().enumerate() {
                t[(i, i + 1)] = *b;
                t[(i + 1, i)] = *b;
            }
            let (vals, vecs) = dense_sym_eigs(&t);
            let col = match side {
                RitzSide::MinValue => 0,
                RitzSide::MaxMagnitude => {
                    if vals[k - 1].abs() >= vals[0].abs() {
                        k - 1
                    } else {
                        0
                    }
                }
            };
            let theta = vals[col];
            let resid = beta * vecs[(k - 1, col)].abs();
            if resid <= rel_tol * theta.abs().max(1e-300) || breakdown {
                return Ok(theta);
            }
        }
        if j + 1 < cap {
            betas.push(beta);
            for v in w.iter_mut() {
                *v /= beta;
            }
            basis.push(w);
        }
    }
    Err(Error::NonConvergence(format!(
        "Lanczos did not certify the extreme eigenvalue within {cap} steps"
    )))
}

/// Conjugate gradients for a symmetric positive definite operator given as
/// a closure. Returns an error if a nonpositive curvature direction shows
/// up, which means the operator is not positive definite on the iterated
/// subspace.
pub fn cg_solve(
    n: usize,
    mut apply: impl FnMut(&[f64]) -> Vec<f64>,
    b: &[f64],
    rel_tol: f64,
    cap: usize,
) -> Result<Vec<f64>> {
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let b_norm = norm(b).max(1e-300);
    let mut rs = dot(&r, &r);
    for _ in 0..cap {
        if rs.sqrt() <= rel_tol * b_norm {
            return Ok(x);
        }
        let ap = apply(&p);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::Solver(format!(
                "operator is not positive definite on the Krylov space (p^T A p = {pap:.3e})"
            )));
        }
        let alpha = rs / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rs_new = dot(&r, &r);
        let beta = rs_new / rs;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rs = rs_new;
    }
    Err(Error::NonConvergence(format!(
        "CG stalled: residual {:.3e} of {:.3e} after {cap} iterations",
        rs.sqrt(),
        rel_tol * b_norm
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn laplacian_1d(n: usize) -> SparseSym {
        // Dirichlet second-difference matrix on n interior nodes, h = 1.
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        SparseSym::from_triplets(n, t).unwrap()
    }

    #[test]
    fn triplets_sum_duplicates_and_stay_symmetric() {
        let t = vec![
            (0usize, 1usize, 0.5),
            (1, 0, 0.5),
            (0, 1, 0.25),
            (1, 0, 0.25),
            (0, 0, 1.0),
            (1, 1, 1.0),
            (2, 2, 3.0),
        ];
        let a = SparseSym::from_triplets(3, t).unwrap();
        assert_eq!(a.symmetry_violation(), None);
        let d = a.to_dense();
        assert_relative_eq!(d[(0, 1)], 0.75);
        assert_relative_eq!(d[(1, 0)], 0.75);
        assert_relative_eq!(d[(2, 2)], 3.0);
        assert_eq!(a.bandwidth(), 1);
    }

    #[test]
    fn matvec_matches_dense() {
        let n = 40;
        let a = laplacian_1d(n);
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let y = a.apply(&x);
        let xd = DMatrix::from_column_slice(n, 1, &x);
        let yd = a.to_dense() * xd;
        for i in 0..n {
            assert_relative_eq!(y[i], yd[(i, 0)], epsilon = 1e-13);
        }
    }

    #[test]
    fn banded_cholesky_solves_shifted_systems() {
        let n = 200;
        let a = laplacian_1d(n);
        let shift = -0.5; // spectrum of the stencil is positive
        let chol = BandedCholesky::factor(&a, shift).unwrap();
        let b: Vec<f64> = (0..n).map(|i| ((i * 7 % 13) as f64) - 6.0).collect();
        let x = chol.solve(&b);
        // Residual of (A - shift I) x = b.
        let mut r = a.apply(&x);
        for i in 0..n {
            r[i] -= shift * x[i];
            r[i] -= b[i];
        }
        assert!(norm(&r) <= 1e-10 * norm(&b));
    }

    #[test]
    fn cholesky_rejects_shift_inside_spectrum() {
        let a = laplacian_1d(50);
        // Smallest eigenvalue is about pi^2 / 51^2 * ... well above 0; a
        // shift of 1.0 sits inside the spectrum.
        match BandedCholesky::factor(&a, 1.0) {
            Err(Error::Solver(msg)) => assert!(msg.contains("positive definite")),
            Err(e) => panic!("wrong error kind: {e}"),
            Ok(_) => panic!("factorisation should have failed"),
        }
    }

    #[test]
    fn lanczos_matches_closed_form_laplacian_spectrum() {
        let n = 400; // large enough to take the sparse path
        let a = laplacian_1d(n);
        let (vals, vecs) = lowest_eigs_shift_invert(&a, 4, -1.0, 1e-10, 300, 7).unwrap();
        let h = 1.0;
        for (k, &v) in vals.iter().enumerate() {
            let exact =
                4.0 / (h * h) * (std::f64::consts::PI * (k + 1) as f64 / (2.0 * (n + 1) as f64))
                    .sin()
                    .powi(2);
            assert_relative_eq!(v, exact, epsilon = 1e-9, max_relative = 1e-9);
        }
        // Residual check on the returned vectors.
        for (k, v) in vecs.iter().enumerate() {
            let av = a.apply(v);
            let res: f64 = av
                .iter()
                .zip(v)
                .map(|(x, y)| (x - vals[k] * y) * (x - vals[k] * y))
                .sum::<f64>()
                .sqrt();
            assert!(res <= 1e-9 * vals[k].max(1.0));
        }
    }

    #[test]
    fn lanczos_dense_fallback_for_small_systems() {
        let mut t = Vec::new();
        for (i, d) in [1.0f64, 2.0, 3.0].iter().enumerate() {
            t.push((i, i, *d));
        }
        let a = SparseSym::from_triplets(3, t).unwrap();
        let (vals, _) = lowest_eigs_shift_invert(&a, 2, 0.0, 1e-12, 50, 1).unwrap();
        assert_relative_eq!(vals[0], 1.0);
        assert_relative_eq!(vals[1], 2.0);
    }

    #[test]
    fn power_iteration_recovers_known_norm() {
        let n = 300;
        let a = laplacian_1d(n);
        let exact = 4.0 * (std::f64::consts::PI * n as f64 / (2.0 * (n + 1) as f64)).sin().powi(2);
        let norm_est =
            symmetric_operator_norm(n, |x| a.apply(x), 1e-9, 5000, 42).unwrap();
        assert_relative_eq!(norm_est, exact, epsilon = 1e-5, max_relative = 1e-5);
    }

    #[test]
    fn power_iteration_of_zero_operator_is_zero() {
        let est = symmetric_operator_norm(64, |x| vec![0.0; x.len()], 1e-8, 100, 3).unwrap();
        assert_eq!(est, 0.0);
    }

    #[test]
    fn cg_solves_spd_system() {
        let n = 150;
        let a = laplacian_1d(n);
        let b: Vec<f64> = (0..n).map(|i| (i as f64 / 10.0).cos()).collect();
        let x = cg_solve(n, |v| a.apply(v), &b, 1e-12, 2000).unwrap();
        let ax = a.apply(&x);
        for i in 0..n {
            assert_relative_eq!(ax[i], b[i], epsilon = 1e-8);
        }
    }
}
