//! Poisson bivectors on a chart: anchor, bracket, Jacobi residual, Koszul
//! bracket on 1-forms and Lie derivatives of the bivector.

use nalgebra::DMatrix;

use crate::expr::{Expression, Params, Scope};
use crate::forms::{OneForm, VectorField};
use crate::numeric::sample_box;
use crate::{Error, Result};

/// A bivector `Π = Σ_{i<j} Π^{ij} ∂_i ∧ ∂_j` with cached symbolic partials.
#[derive(Debug, Clone)]
pub struct PoissonStructure {
    dim: usize,
    /// Full antisymmetric matrix of components.
    pi: Vec<Vec<Expression>>,
    /// `dpi[l][j][k] = ∂_l Π^{jk}`
    dpi: Vec<Vec<Vec<Expression>>>,
    params: Params,
    label: String,
}

impl PoissonStructure {
    /// Build from upper-triangular entries `((i, j), Π^{ij})`, 0-based with `i != j`.
    ///
    /// Entries given with `i > j` are stored with the sign flipped.
    pub fn new(
        dim: usize,
        entries: Vec<((usize, usize), Expression)>,
        params: Params,
        label: impl Into<String>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Dimension("chart dimension must be positive".into()));
        }
        let mut pi = vec![vec![Expression::zero(dim); dim]; dim];
        let mut seen = vec![vec![false; dim]; dim];
        for ((i, j), e) in entries {
            if i >= dim || j >= dim || i == j {
                return Err(Error::Dimension(format!(
                    "bivector entry ({},{}) invalid for dimension {dim}",
                    i + 1,
                    j + 1
                )));
            }
            let e = e.with_dim(dim)?;
            let (lo, hi, e) = if i < j { (i, j, e) } else { (j, i, -e) };
            if seen[lo][hi] {
                return Err(Error::Invalid(format!(
                    "bivector entry ({},{}) given twice",
                    lo + 1,
                    hi + 1
                )));
            }
            seen[lo][hi] = true;
            pi[hi][lo] = -&e;
            pi[lo][hi] = e;
        }
        let dpi = (0..dim)
            .map(|l| {
                (0..dim)
                    .map(|j| (0..dim).map(|k| pi[j][k].diff(l)).collect::<Result<Vec<_>, _>>())
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            dim,
            pi,
            dpi,
            params,
            label: label.into(),
        })
    }

    pub fn zero(dim: usize) -> Self {
        Self::new(dim, Vec::new(), Params::new(), format!("zero({dim})"))
            .expect("zero structure is well formed")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    /// Symbolic component `Π^{ij}` (0-based).
    pub fn component(&self, i: usize, j: usize) -> &Expression {
        &self.pi[i][j]
    }

    pub fn partial(&self, l: usize, j: usize, k: usize) -> &Expression {
        &self.dpi[l][j][k]
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::Dimension(format!(
                "point has {} coordinates, chart dimension is {}",
                x.len(),
                self.dim
            )));
        }
        Ok(())
    }

    /// Matrix `Π^{ij}(x)`.
    pub fn pi_at(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.check_point(x)?;
        let n = self.dim;
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i + 1..n {
                let e = &self.pi[i][j];
                if !e.is_zero() {
                    let v = e.eval(x, &self.params)?;
                    m[(i, j)] = v;
                    m[(j, i)] = -v;
                }
            }
        }
        Ok(m)
    }

    /// `out[l] = (∂_l Π^{jk}(x))_{jk}`.
    pub fn dpi_at(&self, x: &[f64]) -> Result<Vec<DMatrix<f64>>> {
        self.check_point(x)?;
        let n = self.dim;
        (0..n)
            .map(|l| {
                let mut m = DMatrix::zeros(n, n);
                for j in 0..n {
                    for k in j + 1..n {
                        let e = &self.dpi[l][j][k];
                        if !e.is_zero() {
                            let v = e.eval(x, &self.params)?;
                            m[(j, k)] = v;
                            m[(k, j)] = -v;
                        }
                    }
                }
                Ok(m)
            })
            .collect()
    }

    /// Anchor `(#α)^k = Π^{jk}(x) α_j`.
    pub fn sharp(&self, x: &[f64], alpha: &[f64]) -> Result<Vec<f64>> {
        let pi = self.pi_at(x)?;
        Ok(sharp_with(&pi, alpha))
    }

    /// Symbolic anchor of a 1-form.
    pub fn sharp_form(&self, alpha: &OneForm) -> Result<VectorField> {
        self.check_form(alpha.dim())?;
        let n = self.dim;
        let comps = (0..n)
            .map(|k| {
                let mut acc = Expression::zero(n);
                for j in 0..n {
                    if !self.pi[j][k].is_zero() && !alpha.component(j).is_zero() {
                        acc = acc + &self.pi[j][k] * alpha.component(j);
                    }
                }
                acc
            })
            .collect();
        VectorField::new(comps)
    }

    /// Hamiltonian vector field `X_h = #dh`.
    pub fn hamiltonian_field(&self, h: &Expression) -> Result<VectorField> {
        self.sharp_form(&OneForm::exact(&h.with_dim(self.dim)?))
    }

    /// `{f, g} = Π^{jk} ∂_j f ∂_k g`, symbolically.
    pub fn poisson_bracket(&self, f: &Expression, g: &Expression) -> Result<Expression> {
        let n = self.dim;
        let df = f.with_dim(n)?.gradient();
        let dg = g.with_dim(n)?.gradient();
        let mut acc = Expression::zero(n);
        for j in 0..n {
            for k in 0..n {
                if self.pi[j][k].is_zero() || df[j].is_zero() || dg[k].is_zero() {
                    continue;
                }
                acc = acc + &(&self.pi[j][k] * &df[j]) * &dg[k];
            }
        }
        Ok(acc)
    }

    /// `max_{i<j<k} |Π^{il}∂_lΠ^{jk} + Π^{jl}∂_lΠ^{ki} + Π^{kl}∂_lΠ^{ij}|` at `x`.
    pub fn jacobi_residual(&self, x: &[f64]) -> Result<f64> {
        let pi = self.pi_at(x)?;
        let dpi = self.dpi_at(x)?;
        Ok(jacobi_residual_with(&pi, &dpi))
    }

    /// Maximum Jacobi residual over `count` seeded points in `[lo, hi]^n`.
    ///
    /// Fails with [`Error::NotPoisson`] when it exceeds `tol`.
    pub fn jacobi_gate(&self, seed: u64, count: usize, lo: f64, hi: f64, tol: f64) -> Result<f64> {
        let mut worst = 0.0f64;
        let mut worst_at = Vec::new();
        for x in sample_box(seed, count, self.dim, lo, hi) {
            let r = self.jacobi_residual(&x)?;
            if r > worst || worst_at.is_empty() {
                worst = worst.max(r);
                worst_at = x;
            }
        }
        if worst > tol {
            return Err(Error::NotPoisson {
                residual: worst,
                point: worst_at,
            });
        }
        Ok(worst)
    }

    fn check_form(&self, d: usize) -> Result<()> {
        if d != self.dim {
            return Err(Error::Dimension(format!(
                "field has {d} components, chart dimension is {}",
                self.dim
            )));
        }
        Ok(())
    }

    /// Symbolic Koszul bracket in flat components:
    /// `[α,β]_i = (#α)^j ∂_j β_i − (#β)^j ∂_j α_i + ∂_iΠ^{jk} α_j β_k`.
    pub fn koszul_bracket(&self, alpha: &OneForm, beta: &OneForm) -> Result<OneForm> {
        self.check_form(alpha.dim())?;
        self.check_form(beta.dim())?;
        let n = self.dim;
        let sa = self.sharp_form(alpha)?;
        let sb = self.sharp_form(beta)?;
        let mut comps = Vec::with_capacity(n);
        for i in 0..n {
            let dbi = beta.component(i).gradient();
            let dai = alpha.component(i).gradient();
            let mut acc = Expression::zero(n);
            for j in 0..n {
                if !dbi[j].is_zero() && !sa.component(j).is_zero() {
                    acc = acc + sa.component(j) * &dbi[j];
                }
                if !dai[j].is_zero() && !sb.component(j).is_zero() {
                    acc = acc - sb.component(j) * &dai[j];
                }
                for k in 0..n {
                    let d = &self.dpi[i][j][k];
                    if d.is_zero() || alpha.component(j).is_zero() || beta.component(k).is_zero() {
                        continue;
                    }
                    acc = acc + &(d * alpha.component(j)) * beta.component(k);
                }
            }
            comps.push(acc);
        }
        OneForm::new(comps)
    }

    /// Pointwise Koszul bracket from values and Jacobians
    /// (`dalpha[(i, j)] = ∂_j α_i`). Only derivatives along `#α` and `#β`
    /// enter, so leafwise derivative data suffices.
    pub fn koszul_at(
        &self,
        x: &[f64],
        alpha: &[f64],
        dalpha: &DMatrix<f64>,
        beta: &[f64],
        dbeta: &DMatrix<f64>,
    ) -> Result<Vec<f64>> {
        let pi = self.pi_at(x)?;
        let dpi = self.dpi_at(x)?;
        let sa = sharp_with(&pi, alpha);
        let sb = sharp_with(&pi, beta);
        let n = self.dim;
        let t = torsion_with(&dpi, alpha, beta);
        Ok((0..n)
            .map(|i| {
                let mut v = t[i];
                for j in 0..n {
                    v += sa[j] * dbeta[(i, j)] - sb[j] * dalpha[(i, j)];
                }
                v
            })
            .collect())
    }

    /// `(L_X Π)^{jk} = X^l∂_lΠ^{jk} − Π^{lk}∂_lX^j − Π^{jl}∂_lX^k` at `x`.
    pub fn lie_derivative_bivector(&self, field: &VectorField, x: &[f64]) -> Result<DMatrix<f64>> {
        self.check_form(field.dim())?;
        let pi = self.pi_at(x)?;
        let dpi = self.dpi_at(x)?;
        let xv = field.eval(x, &self.params)?;
        let dx = field.jacobian(x, &self.params)?;
        let n = self.dim;
        let mut out = DMatrix::zeros(n, n);
        for j in 0..n {
            for k in 0..n {
                let mut v = 0.0;
                for l in 0..n {
                    v += xv[l] * dpi[l][(j, k)] - pi[(l, k)] * dx[(j, l)] - pi[(j, l)] * dx[(k, l)];
                }
                out[(j, k)] = v;
            }
        }
        Ok(out)
    }

    /// Whether `L_X Π` vanishes to `tol` at every sample point; also returns the max residual.
    pub fn is_poisson_vf(&self, field: &VectorField, points: &[Vec<f64>], tol: f64) -> Result<(bool, f64)> {
        let mut worst = 0.0f64;
        for x in points {
            let l = self.lie_derivative_bivector(field, x)?;
            worst = worst.max(l.amax());
        }
        Ok((worst <= tol, worst))
    }

    /// Torsion of the flat-induced contravariant connection, `T_i = ∂_iΠ^{jk} α_j β_k`.
    pub fn torsion(&self, x: &[f64], alpha: &[f64], beta: &[f64]) -> Result<Vec<f64>> {
        Ok(torsion_with(&self.dpi_at(x)?, alpha, beta))
    }

    /// Evaluation scope of the structure's bound parameters.
    pub fn scope(&self) -> &dyn Scope {
        &self.params
    }
}

pub(crate) fn sharp_with(pi: &DMatrix<f64>, alpha: &[f64]) -> Vec<f64> {
    let n = alpha.len();
    (0..n)
        .map(|k| (0..n).map(|j| pi[(j, k)] * alpha[j]).sum())
        .collect()
}

pub(crate) fn torsion_with(dpi: &[DMatrix<f64>], alpha: &[f64], beta: &[f64]) -> Vec<f64> {
    dpi.iter()
        .map(|d| {
            let mut v = 0.0;
            for (j, aj) in alpha.iter().enumerate() {
                if *aj == 0.0 {
                    continue;
                }
                for (k, bk) in beta.iter().enumerate() {
                    v += d[(j, k)] * aj * bk;
                }
            }
            v
        })
        .collect()
}

fn jacobi_residual_with(pi: &DMatrix<f64>, dpi: &[DMatrix<f64>]) -> f64 {
    let n = pi.nrows();
    let term = |a: usize, b: usize, c: usize| -> f64 { (0..n).map(|l| pi[(a, l)] * dpi[l][(b, c)]).sum() };
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let r = term(i, j, k) + term(j, k, i) + term(k, i, j);
                worst = worst.max(r.abs());
            }
        }
    }
    worst
}
