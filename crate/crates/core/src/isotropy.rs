//! Isotropy Lie algebras `Ker #ₓ`, their structure constants, center and
//! Killing form, plus a matrix Lie-group path integrator.

use nalgebra::{Complex, DMatrix, DVector};
use serde::Serialize;

use crate::numeric::norm;
use crate::structure::{sharp_with, torsion_with, PoissonStructure};
use crate::{Error, Result};

/// Default relative rank tolerance.
pub const RANK_TOL: f64 = 1e-8;
/// Minimum accepted ratio between the last kept and first dropped singular value.
pub const MIN_GAP_RATIO: f64 = 10.0;

#[derive(Debug, Clone, Serialize)]
pub struct KernelBasis {
    /// Orthonormal covectors spanning `Ker #ₓ`, one per row.
    #[serde(skip)]
    pub basis: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub rank: usize,
    /// `σ_rank-1 / σ_rank`, infinite when nothing is dropped or the gap is exact.
    pub gap_ratio: f64,
    pub tol: f64,
}

impl KernelBasis {
    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn row(&self, a: usize) -> Vec<f64> {
        self.basis.row(a).iter().copied().collect()
    }
}

/// Descending singular values and the matching right singular vectors (as columns).
fn sorted_svd(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.ncols();
    let svd = m.clone().svd(false, true);
    let vt = svd.v_t.expect("requested right singular vectors");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|a, b| svd.singular_values[*b].total_cmp(&svd.singular_values[*a]));
    let values: Vec<f64> = order.iter().map(|k| svd.singular_values[*k]).collect();
    let mut v = DMatrix::zeros(n, n);
    for (col, k) in order.iter().enumerate() {
        for i in 0..n {
            v[(i, col)] = vt[(*k, i)];
        }
    }
    (values, v)
}

/// Numerical rank with a relative threshold and a gap-ratio guard.
fn decide_rank(values: &[f64], tol: f64) -> Result<(usize, f64)> {
    let smax = values.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return Ok((0, f64::INFINITY));
    }
    let rank = values.iter().filter(|s| **s > tol * smax).count();
    if rank == values.len() {
        return Ok((rank, f64::INFINITY));
    }
    let kept = values[rank - 1];
    let dropped = values[rank];
    let ratio = if dropped == 0.0 { f64::INFINITY } else { kept / dropped };
    if ratio < MIN_GAP_RATIO {
        return Err(Error::AmbiguousRank { ratio, kept, dropped });
    }
    Ok((rank, ratio))
}

/// Column-pivoted Gram-Schmidt on the projections of the coordinate axes, so
/// that coordinate-aligned kernels come out as coordinate covectors.
fn canonical_basis(kernel: &DMatrix<f64>) -> DMatrix<f64> {
    let n = kernel.nrows();
    let r = kernel.ncols();
    let proj = kernel * kernel.transpose();
    let mut cols: Vec<DVector<f64>> = (0..n).map(|i| proj.column(i).into_owned()).collect();
    let mut out = DMatrix::zeros(r, n);
    for row in 0..r {
        let mut best = 0;
        let mut best_norm = -1.0;
        for (i, c) in cols.iter().enumerate() {
            let nn = c.norm();
            if nn > best_norm + 1e-12 {
                best = i;
                best_norm = nn;
            }
        }
        let q = &cols[best] / best_norm;
        for c in cols.iter_mut() {
            let d = q.dot(c);
            *c -= &q * d;
        }
        for j in 0..n {
            out[(row, j)] = q[j];
        }
    }
    out
}

/// Basis of `Ker #ₓ` from the singular value decomposition of `Π(x)`.
pub fn kernel_basis(structure: &PoissonStructure, x: &[f64], tol: f64) -> Result<KernelBasis> {
    let pi = structure.pi_at(x)?;
    kernel_of(&pi, tol)
}

pub(crate) fn kernel_of(pi: &DMatrix<f64>, tol: f64) -> Result<KernelBasis> {
    let n = pi.nrows();
    let (values, v) = sorted_svd(pi);
    let (rank, gap_ratio) = decide_rank(&values, tol)?;
    let kernel = v.columns(rank, n - rank).into_owned();
    Ok(KernelBasis {
        basis: canonical_basis(&kernel),
        singular_values: values,
        rank,
        gap_ratio,
        tol,
    })
}

fn kernel_tolerance(pi: &DMatrix<f64>, tol: f64) -> f64 {
    tol * pi.amax().max(1.0)
}

/// `[u, v]_i = ∂_iΠ^{jk}(x) u_j v_k` for `u, v ∈ Ker #ₓ`.
pub fn isotropy_bracket(structure: &PoissonStructure, x: &[f64], u: &[f64], v: &[f64], tol: f64) -> Result<Vec<f64>> {
    let pi = structure.pi_at(x)?;
    let limit = kernel_tolerance(&pi, tol);
    for w in [u, v] {
        let s = norm(&sharp_with(&pi, w));
        if s > limit * norm(w).max(1.0) {
            return Err(Error::NotInKernel(s));
        }
    }
    Ok(torsion_with(&structure.dpi_at(x)?, u, v))
}

/// Classification flags of an isotropy algebra.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Flags {
    pub abelian: bool,
    pub has_center: bool,
    pub semisimple: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct IsotropyAlgebra {
    pub point: Vec<f64>,
    pub kernel_dim: usize,
    /// Basis covectors (rows of the kernel basis).
    pub basis: Vec<Vec<f64>>,
    /// `structure_constants[a][b][c] = c^{ab}_c`.
    pub structure_constants: Vec<Vec<Vec<f64>>>,
    /// Center basis as covectors.
    pub center: Vec<Vec<f64>>,
    pub center_dim: usize,
    pub killing: Vec<Vec<f64>>,
    pub killing_rank: usize,
    pub killing_det: f64,
    pub flags: Flags,
    pub closure_residual: f64,
    pub jacobi_residual: f64,
    pub rank_tol: f64,
    pub singular_values: Vec<f64>,
    pub gap_ratio: f64,
}

/// Null space dimension and basis (columns) with a relative tolerance; an
/// all-zero matrix has full null space.
fn null_space(m: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let n = m.ncols();
    if m.amax() == 0.0 || m.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    let padded = if m.nrows() < n {
        let mut p = DMatrix::zeros(n, n);
        p.rows_mut(0, m.nrows()).copy_from(m);
        p
    } else {
        m.clone()
    };
    let (values, v) = sorted_svd(&padded);
    let smax = values[0];
    let rank = values.iter().filter(|s| **s > tol * smax).count();
    v.columns(rank, n - rank).into_owned()
}

/// Full isotropy analysis at `x`.
pub fn analyze(structure: &PoissonStructure, x: &[f64], tol: f64) -> Result<IsotropyAlgebra> {
    let pi = structure.pi_at(x)?;
    let dpi = structure.dpi_at(x)?;
    let k = kernel_of(&pi, tol)?;
    let r = k.dim();
    let rows: Vec<Vec<f64>> = (0..r).map(|a| k.row(a)).collect();
    let limit = kernel_tolerance(&pi, tol);
    for u in &rows {
        let s = norm(&sharp_with(&pi, u));
        if s > limit {
            return Err(Error::NotInKernel(s));
        }
    }
    let mut c = vec![vec![vec![0.0; r]; r]; r];
    let mut closure = 0.0f64;
    for a in 0..r {
        for b in 0..r {
            let br = torsion_with(&dpi, &rows[a], &rows[b]);
            let mut rem = br.clone();
            for (cc, u) in rows.iter().enumerate() {
                let coef: f64 = br.iter().zip(u).map(|(p, q)| p * q).sum();
                c[a][b][cc] = coef;
                for (ri, ui) in rem.iter_mut().zip(u) {
                    *ri -= coef * ui;
                }
            }
            closure = closure.max(norm(&rem));
        }
    }
    let mut jacobi = 0.0f64;
    for a in 0..r {
        for b in 0..r {
            for cc in 0..r {
                for e in 0..r {
                    let mut v = 0.0;
                    for d in 0..r {
                        v += c[a][b][d] * c[d][cc][e] + c[b][cc][d] * c[d][a][e] + c[cc][a][d] * c[d][b][e];
                    }
                    jacobi = jacobi.max(v.abs());
                }
            }
        }
    }
    let mut killing = DMatrix::zeros(r, r);
    for a in 0..r {
        for b in 0..r {
            let mut v = 0.0;
            for d in 0..r {
                for e in 0..r {
                    v += c[a][d][e] * c[b][e][d];
                }
            }
            killing[(a, b)] = v;
        }
    }
    let cmax = c.iter().flatten().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let abelian = cmax <= 1e-10;
    // ad maps stacked: row (b, c), column a holds c^{ab}_c.
    let mut ad = DMatrix::zeros(r * r, r);
    for a in 0..r {
        for b in 0..r {
            for cc in 0..r {
                ad[(b * r + cc, a)] = c[a][b][cc];
            }
        }
    }
    let center_coeffs = if abelian { DMatrix::identity(r, r) } else { null_space(&ad, 1e-8) };
    let center: Vec<Vec<f64>> = center_coeffs
        .column_iter()
        .map(|col| {
            (0..structure.dim())
                .map(|i| (0..r).map(|a| col[a] * rows[a][i]).sum())
                .collect()
        })
        .collect();
    let killing_rank = if killing.amax() <= 1e-10 {
        0
    } else {
        let (vals, _) = sorted_svd(&killing);
        vals.iter().filter(|s| **s > 1e-8 * vals[0]).count()
    };
    let killing_det = if r == 0 { 0.0 } else { killing.determinant() };
    let center_dim = center.len();
    Ok(IsotropyAlgebra {
        point: x.to_vec(),
        kernel_dim: r,
        basis: rows,
        structure_constants: c,
        center,
        center_dim,
        killing: (0..r).map(|a| killing.row(a).iter().copied().collect()).collect(),
        killing_rank,
        killing_det,
        flags: Flags {
            abelian,
            has_center: center_dim > 0,
            semisimple: r > 0 && killing_det.abs() > 1e-6,
        },
        closure_residual: closure,
        jacobi_residual: jacobi,
        rank_tol: tol,
        singular_values: k.singular_values,
        gap_ratio: k.gap_ratio,
    })
}

pub type CMatrix = DMatrix<Complex<f64>>;

/// `E_k = −(i/2) σ_k`, satisfying `[E_a, E_b] = ε_abc E_c`.
pub fn su2_basis() -> Vec<CMatrix> {
    let c = |re: f64, im: f64| Complex::new(re, im);
    let z = c(0.0, 0.0);
    let s1 = [z, c(1.0, 0.0), c(1.0, 0.0), z];
    let s2 = [z, c(0.0, -1.0), c(0.0, 1.0), z];
    let s3 = [c(1.0, 0.0), z, z, c(-1.0, 0.0)];
    [s1, s2, s3]
        .iter()
        .map(|s| CMatrix::from_row_slice(2, 2, s) * c(0.0, -0.5))
        .collect()
}

/// Closed form of `exp(Σ a_k E_k)` in the basis of [`su2_basis`].
pub fn su2_exp(a: &[f64; 3]) -> CMatrix {
    let theta = norm(a);
    let half = 0.5 * theta;
    let mut m = CMatrix::identity(2, 2) * Complex::new(half.cos(), 0.0);
    if theta > 0.0 {
        let s = half.sin() / theta;
        for (e, ak) in su2_basis().iter().zip(a) {
            m += e * Complex::new(2.0 * s * ak, 0.0);
        }
    }
    m
}

fn is_anti_hermitian(m: &CMatrix) -> bool {
    (m + m.adjoint()).iter().all(|z| z.norm() < 1e-14)
}

fn reunitarize(g: &CMatrix) -> CMatrix {
    let svd = g.clone().svd(true, true);
    match (svd.u, svd.v_t) {
        (Some(u), Some(vt)) => u * vt,
        _ => g.clone(),
    }
}

/// Solve `dg/dt = A(t) g`, `g(0) = I`, `A = Σ a_i(t) E_i`, on the uniform
/// samples `a[0..=N]` of `[0, 1]` (`N` even). RK4 with step `2/N` over sample
/// triples; compact algebras are re-unitarized every 100 steps.
pub fn matrix_lie_path_integrate(basis: &[CMatrix], a: &[Vec<f64>]) -> Result<CMatrix> {
    let dim = basis.first().map(|m| m.nrows()).ok_or_else(|| Error::Invalid("empty basis".into()))?;
    if basis.iter().any(|m| m.nrows() != dim || m.ncols() != dim) {
        return Err(Error::Dimension("basis matrices must be square and equal in size".into()));
    }
    if a.iter().any(|v| v.len() != basis.len()) {
        return Err(Error::Dimension("coefficient samples must match the basis size".into()));
    }
    let n = a.len().saturating_sub(1);
    if n < 2 || !n.is_multiple_of(2) {
        return Err(Error::Invalid(format!("need an even number of intervals, got {n}")));
    }
    let compact = basis.iter().all(is_anti_hermitian);
    let h = 1.0 / n as f64;
    let gen = |k: usize| -> CMatrix {
        let mut m = CMatrix::zeros(dim, dim);
        for (e, c) in basis.iter().zip(&a[k]) {
            if *c != 0.0 {
                m += e * Complex::new(*c, 0.0);
            }
        }
        m
    };
    let mut g = CMatrix::identity(dim, dim);
    let step = Complex::new(2.0 * h, 0.0);
    let mut count = 0;
    let mut k = 0;
    while k + 2 <= n {
        let a0 = gen(k);
        let a1 = gen(k + 1);
        let a2 = gen(k + 2);
        let half = Complex::new(0.5, 0.0);
        let k1 = &a0 * &g;
        let k2 = &a1 * (&g + &k1 * step * half);
        let k3 = &a1 * (&g + &k2 * step * half);
        let k4 = &a2 * (&g + &k3 * step);
        g += (k1 + k2 * Complex::new(2.0, 0.0) + k3 * Complex::new(2.0, 0.0) + k4) * (step / Complex::new(6.0, 0.0));
        count += 1;
        if compact && count % 100 == 0 {
            g = reunitarize(&g);
        }
        if g.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Ode {
                t: (k + 2) as f64 * h,
                reason: "group element is no longer finite".into(),
            });
        }
        k += 2;
    }
    if compact {
        g = reunitarize(&g);
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse, Params};

    fn su2() -> PoissonStructure {
        let e = |s: &str| parse(s, 3).unwrap();
        PoissonStructure::new(
            3,
            vec![((0, 1), e("x3")), ((1, 2), e("x1")), ((2, 0), e("x2"))],
            Params::new(),
            "su2",
        )
        .unwrap()
    }

    #[test]
    fn kernel_dimensions() {
        let s = su2();
        assert_eq!(kernel_basis(&s, &[0.0; 3], RANK_TOL).unwrap().dim(), 3);
        let k = kernel_basis(&s, &[0.0, 0.0, 1.0], RANK_TOL).unwrap();
        assert_eq!(k.dim(), 1);
        assert!((k.row(0)[2].abs() - 1.0).abs() < 1e-12);
        let sym = PoissonStructure::new(2, vec![((0, 1), parse("1", 2).unwrap())], Params::new(), "sym").unwrap();
        assert_eq!(kernel_basis(&sym, &[0.3, 0.4], RANK_TOL).unwrap().dim(), 0);
    }

    #[test]
    fn ambiguous_rank_is_flagged() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1e-8 * 0.5, 1e-8 * 2.0]));
        assert!(matches!(kernel_of(&m, 1e-8), Err(Error::AmbiguousRank { .. })));
    }

    #[test]
    fn su2_origin_analysis() {
        let alg = analyze(&su2(), &[0.0; 3], RANK_TOL).unwrap();
        assert_eq!(alg.kernel_dim, 3);
        assert!(alg.flags.semisimple && !alg.flags.has_center);
        for a in 0..3 {
            assert_eq!(alg.killing[a][a], -2.0);
        }
        assert_eq!(alg.structure_constants[0][1][2], 1.0);
    }

    #[test]
    fn su2_exponentials() {
        let b = su2_basis();
        let path = vec![vec![0.0, 0.0, 2.0 * std::f64::consts::PI]; 2001];
        let g = matrix_lie_path_integrate(&b, &path).unwrap();
        assert!((g.clone() + CMatrix::identity(2, 2)).camax() < 1e-10, "{g}");
        let a = [0.3, -1.1, 0.7];
        let g = matrix_lie_path_integrate(&b, &vec![a.to_vec(); 1001]).unwrap();
        assert!((g - su2_exp(&a)).camax() < 1e-10);
    }
}
