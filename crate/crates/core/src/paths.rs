//! Cotangent paths: generation from a time-dependent 1-form, path integrals,
//! concatenation and reversal.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::expr::Scope;
use crate::forms::{TimeDependentOneForm, VectorField};
use crate::numeric::{derivative5_vec, dot, max_abs_diff, norm, simpson, uniform_grid};
use crate::ode::{solve_on_grid, OdeSettings};
use crate::structure::{sharp_with, PoissonStructure};
use crate::{Error, Result};

/// Global sign `s` in `∫_a X_h = s · (h(γ(1)) − h(γ(0)))`.
pub const HAMILTONIAN_SIGN: f64 = -1.0;

/// A sampled cotangent path `t ↦ a(t) ∈ T*_{γ(t)} M`.
///
/// Concatenated paths repeat the junction time once, with the left and right
/// covector values; each maximal strictly increasing run of `t` is a piece
/// sampled on its own uniform grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CotangentPath {
    pub t: Vec<f64>,
    pub gamma: Vec<Vec<f64>>,
    pub a: Vec<Vec<f64>>,
    pub defect: f64,
    #[serde(skip)]
    pub generator: Option<TimeDependentOneForm>,
    #[serde(skip)]
    pub settings: Option<OdeSettings>,
}

impl CotangentPath {
    /// Wrap samples and compute the cotangent defect against `structure`.
    pub fn from_samples(
        structure: &PoissonStructure,
        t: Vec<f64>,
        gamma: Vec<Vec<f64>>,
        a: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let mut p = Self {
            t,
            gamma,
            a,
            defect: 0.0,
            generator: None,
            settings: None,
        };
        p.check_shape(structure.dim())?;
        p.defect = defect(structure, &p)?;
        Ok(p)
    }

    fn check_shape(&self, dim: usize) -> Result<()> {
        if self.t.len() != self.gamma.len() || self.t.len() != self.a.len() {
            return Err(Error::Dimension("path sample arrays differ in length".into()));
        }
        if self.gamma.iter().chain(&self.a).any(|v| v.len() != dim) {
            return Err(Error::Dimension(format!("path samples must have {dim} components")));
        }
        for r in self.pieces() {
            let n = r.len() - 1;
            if n < 4 || n % 2 != 0 {
                return Err(Error::Invalid(format!(
                    "each path piece needs an even number (>= 4) of intervals, got {n}"
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.gamma.first().map_or(0, Vec::len)
    }

    pub fn start(&self) -> &[f64] {
        &self.gamma[0]
    }

    pub fn end(&self) -> &[f64] {
        &self.gamma[self.gamma.len() - 1]
    }

    /// Index ranges of the uniformly sampled pieces.
    pub fn pieces(&self) -> Vec<Range<usize>> {
        let mut out = Vec::new();
        let mut start = 0;
        for k in 1..self.t.len() {
            if self.t[k] <= self.t[k - 1] {
                out.push(start..k);
                start = k;
            }
        }
        out.push(start..self.t.len());
        out
    }

    /// Check that this path came through validation and report it if not.
    pub fn ensure_valid(&self, tol: f64) -> Result<()> {
        if self.defect > tol {
            return Err(Error::Defect {
                defect: self.defect,
                tol,
            });
        }
        Ok(())
    }

    /// Simpson quadrature of a per-sample integrand, piece by piece.
    pub fn integrate_samples(&self, values: &[f64]) -> Result<f64> {
        let mut total = 0.0;
        for r in self.pieces() {
            let h = piece_step(&self.t, &r);
            total += simpson(&values[r], h)?;
        }
        Ok(total)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str, structure: &PoissonStructure) -> Result<Self> {
        let raw: CotangentPath = serde_json::from_str(text)?;
        Self::from_samples(structure, raw.t, raw.gamma, raw.a)
    }
}

pub(crate) fn piece_step(t: &[f64], r: &Range<usize>) -> f64 {
    (t[r.end - 1] - t[r.start]) / (r.len() - 1) as f64
}

/// Solve `γ' = #(gen(t, γ))` from `x0` and set `a(t) = gen(t, γ(t))`.
pub fn integrate_base(
    structure: &PoissonStructure,
    generator: &TimeDependentOneForm,
    x0: &[f64],
    settings: &OdeSettings,
) -> Result<CotangentPath> {
    settings.validate()?;
    let n = structure.dim();
    if generator.dim() != n || x0.len() != n {
        return Err(Error::Dimension(format!(
            "generator and start point must have dimension {n}"
        )));
    }
    let scope = structure.scope();
    let rhs = |t: f64, y: &[f64], dy: &mut [f64]| -> Result<()> {
        let a = generator.eval(t, y, scope)?;
        let v = structure.sharp(y, &a)?;
        dy.copy_from_slice(&v);
        Ok(())
    };
    let grid = uniform_grid(0.0, 1.0, settings.steps);
    let gamma = solve_on_grid(rhs, x0, &grid, settings)?;
    let a = grid
        .iter()
        .zip(&gamma)
        .map(|(t, x)| generator.eval(*t, x, scope))
        .collect::<Result<Vec<_>>>()?;
    let mut path = CotangentPath::from_samples(structure, grid, gamma, a)?;
    path.ensure_valid(settings.defect_tol)?;
    path.generator = Some(generator.clone());
    path.settings = Some(*settings);
    Ok(path)
}

/// `max_k |γ'(t_k) − #a(t_k)|`, with `γ'` from five-point differences on each piece.
pub fn defect(structure: &PoissonStructure, path: &CotangentPath) -> Result<f64> {
    let mut worst = 0.0f64;
    for r in path.pieces() {
        let h = piece_step(&path.t, &r);
        let dg = derivative5_vec(&path.gamma[r.clone()], h)?;
        for (k, d) in r.zip(dg) {
            let pi = structure.pi_at(&path.gamma[k])?;
            let v = sharp_with(&pi, &path.a[k]);
            let diff: Vec<f64> = d.iter().zip(&v).map(|(x, y)| x - y).collect();
            worst = worst.max(norm(&diff));
        }
    }
    Ok(worst)
}

/// `∫_0^1 ⟨a(t), X(γ(t))⟩ dt` by Simpson quadrature.
pub fn path_integral(path: &CotangentPath, field: &VectorField, scope: &dyn Scope) -> Result<f64> {
    if field.dim() != path.dim() {
        return Err(Error::Dimension("vector field and path dimensions differ".into()));
    }
    let vals = path
        .gamma
        .iter()
        .zip(&path.a)
        .map(|(x, a)| Ok(dot(a, &field.eval(x, scope)?)))
        .collect::<Result<Vec<_>>>()?;
    path.integrate_samples(&vals)
}

/// Run `p` then `q`, each at double speed on half of `[0, 1]`.
pub fn concatenate(p: &CotangentPath, q: &CotangentPath, tol: f64) -> Result<CotangentPath> {
    if p.dim() != q.dim() {
        return Err(Error::Dimension("paths have different dimensions".into()));
    }
    let gap = max_abs_diff(p.end(), q.start());
    if gap > tol {
        return Err(Error::EndpointMismatch(gap));
    }
    let scale = |v: &Vec<f64>| v.iter().map(|x| 2.0 * x).collect::<Vec<_>>();
    let mut t: Vec<f64> = p.t.iter().map(|t| 0.5 * t).collect();
    t.extend(q.t.iter().map(|t| 0.5 + 0.5 * t));
    let mut gamma = p.gamma.clone();
    gamma.extend(q.gamma.iter().cloned());
    let mut a: Vec<Vec<f64>> = p.a.iter().map(scale).collect();
    a.extend(q.a.iter().map(scale));
    Ok(CotangentPath {
        t,
        gamma,
        a,
        defect: 2.0 * p.defect.max(q.defect),
        generator: None,
        settings: p.settings,
    })
}

/// Reverse path `ā(t) = −a(1 − t)`.
pub fn reverse(p: &CotangentPath) -> CotangentPath {
    CotangentPath {
        t: p.t.iter().rev().map(|t| 1.0 - t).collect(),
        gamma: p.gamma.iter().rev().cloned().collect(),
        a: p.a.iter().rev().map(|v| v.iter().map(|x| -x).collect()).collect(),
        defect: p.defect,
        generator: None,
        settings: p.settings,
    }
}
