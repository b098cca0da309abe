//! The contravariant connection on `T*M` induced by the flat chart connection.

use nalgebra::DMatrix;

use crate::forms::TimeDependentOneForm;
use crate::numeric::{derivative5_vec, solve_on_samples};
use crate::ode::OdeSettings;
use crate::paths::{integrate_base, piece_step, CotangentPath};
use crate::structure::{torsion_with, PoissonStructure};
use crate::{Error, Result};

/// `(∇_a s)_i = ds_i/dt + ∂_iΠ^{jk}(γ) a_j s_k` on the path grid.
pub fn contravariant_derivative(
    structure: &PoissonStructure,
    path: &CotangentPath,
    section: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    if section.len() != path.t.len() {
        return Err(Error::Dimension(format!(
            "section has {} samples, path has {}",
            section.len(),
            path.t.len()
        )));
    }
    let mut out = vec![Vec::new(); section.len()];
    for r in path.pieces() {
        let h = piece_step(&path.t, &r);
        let ds = derivative5_vec(&section[r.clone()], h)?;
        for (k, d) in r.zip(ds) {
            let dpi = structure.dpi_at(&path.gamma[k])?;
            let tq = torsion_with(&dpi, &path.a[k], &section[k]);
            out[k] = d.iter().zip(&tq).map(|(x, y)| x + y).collect();
        }
    }
    Ok(out)
}

/// Solve `∇_a s = 0` along the path from `s0` and return the whole curve.
pub fn transport_curve(
    structure: &PoissonStructure,
    path: &CotangentPath,
    s0: &[f64],
) -> Result<Vec<Vec<f64>>> {
    let n = structure.dim();
    if s0.len() != n {
        return Err(Error::Dimension(format!("initial covector must have {n} components")));
    }
    let dpis = path
        .gamma
        .iter()
        .map(|x| structure.dpi_at(x))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::with_capacity(path.t.len());
    let mut s = s0.to_vec();
    for r in path.pieces() {
        let h = piece_step(&path.t, &r);
        let base = r.start;
        let piece = solve_on_samples(r.len(), h, &s, |k, y| {
            let v = torsion_with(&dpis[base + k], &path.a[base + k], y);
            Ok(v.into_iter().map(|x| -x).collect())
        })?;
        s = piece.last().cloned().unwrap_or_default();
        out.extend(piece);
    }
    Ok(out)
}

/// Parallel transport `s0 ↦ s1` along the whole path.
pub fn parallel_transport(structure: &PoissonStructure, path: &CotangentPath, s0: &[f64]) -> Result<Vec<f64>> {
    let curve = transport_curve(structure, path, s0)?;
    Ok(curve.last().cloned().unwrap_or_default())
}

/// Matrix of the (linear) transport map in the coordinate coframe: column `j`
/// is the transport of `dx^{j+1}`.
pub fn transport_matrix(structure: &PoissonStructure, path: &CotangentPath) -> Result<DMatrix<f64>> {
    let n = structure.dim();
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let s1 = parallel_transport(structure, path, &e)?;
        for i in 0..n {
            m[(i, j)] = s1[i];
        }
    }
    Ok(m)
}

/// Contravariant torsion `T(α, β)_i = ∂_iΠ^{jk}(x) α_j β_k`.
pub fn torsion(structure: &PoissonStructure, x: &[f64], alpha: &[f64], beta: &[f64]) -> Result<Vec<f64>> {
    structure.torsion(x, alpha, beta)
}

/// Cotangent geodesic with initial covector `alpha0`.
///
/// For the flat-induced connection `∇_a a = ds/dt` since the torsion term is
/// antisymmetric, so geodesics have constant components and only the base
/// equation `γ' = #α0` is integrated.
pub fn exponential_path(
    structure: &PoissonStructure,
    x0: &[f64],
    alpha0: &[f64],
    settings: &OdeSettings,
) -> Result<CotangentPath> {
    let path = integrate_base(structure, &TimeDependentOneForm::constant(alpha0), x0, settings)?;
    let residual = contravariant_derivative(structure, &path, &path.a)?
        .iter()
        .flatten()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    if residual > 1e-9 {
        return Err(Error::Ode {
            t: 1.0,
            reason: format!("geodesic residual {residual:e} exceeds 1e-9"),
        });
    }
    Ok(path)
}
