//! Families of cotangent paths, their variation, the homotopy-invariance
//! identity for path integrals, and the flow generated by a 1-form action.

use serde::{Deserialize, Serialize};

use crate::expr::{Expression, Layered, Scope};
use crate::forms::{OneForm, TimeDependentOneForm, VectorField, EPS};
use crate::numeric::{dot, max_abs_diff, norm, simpson_extrapolated, solve_on_samples, uniform_grid};
use crate::ode::{solve_on_grid, OdeSettings};
use crate::paths::{defect, CotangentPath};
use crate::structure::{sharp_with, torsion_with, PoissonStructure};
use crate::{Error, Result};

/// Sign `σ` in the variation equation `∂_t b − ∂_ε a = σ · T(a, b)`.
///
/// Only `σ = −1` makes the variation of families induced by group paths
/// vanish; equivalently `∂_ε a = ∇_a b`.
pub const VARIATION_TORSION_SIGN: f64 = -1.0;

/// JSON description of a family.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FamilySpec {
    /// Components of `α(ε, t, x)`, using `eps`, `t` and `x1..xn`.
    pub generator: Vec<String>,
    /// Start point; entries may be numbers or expressions in `eps`.
    pub x0: Vec<StartCoordinate>,
    pub eps_grid: usize,
    pub t_grid: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StartCoordinate {
    Value(f64),
    Expr(String),
}

/// A family `a(ε, t)` of cotangent paths, `ε ∈ [0, 1]`, solved slice by slice.
#[derive(Debug, Clone)]
pub struct PathFamily {
    pub generator: TimeDependentOneForm,
    pub x0: Vec<Expression>,
    pub eps: Vec<f64>,
    pub settings: OdeSettings,
    pub slices: Vec<CotangentPath>,
    /// `∂_ε a` at every `(ε, t)` sample, from forward sensitivities.
    pub da_deps: Vec<Vec<Vec<f64>>>,
    /// `∂_ε γ` at every sample.
    pub dgamma_deps: Vec<Vec<Vec<f64>>>,
}

impl PathFamily {
    pub fn from_spec(structure: &PoissonStructure, spec: &FamilySpec, settings: &OdeSettings) -> Result<Self> {
        let n = structure.dim();
        let generator = TimeDependentOneForm::new(OneForm::new(
            spec.generator
                .iter()
                .map(|s| Expression::parse(s, n))
                .collect::<Result<Vec<_>, _>>()?,
        )?);
        let x0 = spec
            .x0
            .iter()
            .map(|c| match c {
                StartCoordinate::Value(v) => Ok(Expression::constant(*v, n)),
                StartCoordinate::Expr(s) => Expression::parse(s, n).map_err(Error::from),
            })
            .collect::<Result<Vec<_>>>()?;
        let settings = settings.with_steps(spec.t_grid);
        Self::solve(structure, generator, x0, spec.eps_grid, &settings)
    }

    /// Solve every ε-slice together with the sensitivities `∂_ε γ`, `∂_ε a`.
    pub fn solve(
        structure: &PoissonStructure,
        generator: TimeDependentOneForm,
        x0: Vec<Expression>,
        eps_points: usize,
        settings: &OdeSettings,
    ) -> Result<Self> {
        settings.validate()?;
        let n = structure.dim();
        if generator.dim() != n || x0.len() != n {
            return Err(Error::Dimension(format!("family data must have dimension {n}")));
        }
        if eps_points < 3 || !(eps_points - 1).is_multiple_of(2) {
            return Err(Error::Invalid(format!(
                "eps grid needs an odd number (>= 3) of points, got {eps_points}"
            )));
        }
        let eps = uniform_grid(0.0, 1.0, eps_points - 1);
        let d_eps = generator.form().diff_param(EPS);
        let dx0: Vec<Expression> = x0.iter().map(|e| e.diff_param(EPS)).collect();

        let solve_slice = |e: &f64| -> Result<(CotangentPath, Vec<Vec<f64>>, Vec<Vec<f64>>)> {
            let extra = [(EPS, *e)];
            let scope = Layered {
                extra: &extra,
                base: structure.scope(),
            };
            let start: Vec<f64> = x0.iter().map(|c| c.eval_scalar(&scope)).collect::<Result<_, _>>()?;
            let dstart: Vec<f64> = dx0.iter().map(|c| c.eval_scalar(&scope)).collect::<Result<_, _>>()?;
            let d_eps = TimeDependentOneForm::new(d_eps.clone());
            let covectors = |t: f64, x: &[f64], delta: &[f64]| -> Result<(Vec<f64>, Vec<f64>)> {
                let a = generator.eval(t, x, &scope)?;
                let j = generator.jacobian(t, x, &scope)?;
                let mut da = d_eps.eval(t, x, &scope)?;
                for i in 0..n {
                    for l in 0..n {
                        da[i] += j[(i, l)] * delta[l];
                    }
                }
                Ok((a, da))
            };
            let rhs = |t: f64, y: &[f64], dy: &mut [f64]| -> Result<()> {
                let (x, delta) = y.split_at(n);
                let (a, da) = covectors(t, x, delta)?;
                let pi = structure.pi_at(x)?;
                let dpi = structure.dpi_at(x)?;
                let v = sharp_with(&pi, &a);
                let w = sharp_with(&pi, &da);
                for k in 0..n {
                    dy[k] = v[k];
                    let mut acc = w[k];
                    for (l, dl) in delta.iter().enumerate() {
                        if *dl == 0.0 {
                            continue;
                        }
                        for j in 0..n {
                            acc += dpi[l][(j, k)] * dl * a[j];
                        }
                    }
                    dy[n + k] = acc;
                }
                Ok(())
            };
            let grid = uniform_grid(0.0, 1.0, settings.steps);
            let mut y0 = start.clone();
            y0.extend_from_slice(&dstart);
            let sol = solve_on_grid(rhs, &y0, &grid, settings)?;
            let mut gamma = Vec::with_capacity(sol.len());
            let mut a = Vec::with_capacity(sol.len());
            let mut da = Vec::with_capacity(sol.len());
            let mut dg = Vec::with_capacity(sol.len());
            for (t, y) in grid.iter().zip(&sol) {
                let (x, delta) = y.split_at(n);
                let (av, dav) = covectors(*t, x, delta)?;
                gamma.push(x.to_vec());
                dg.push(delta.to_vec());
                a.push(av);
                da.push(dav);
            }
            let mut path = CotangentPath::from_samples(structure, grid, gamma, a)?;
            path.ensure_valid(settings.defect_tol)?;
            path.settings = Some(*settings);
            Ok((path, da, dg))
        };

        let solved = crate::numeric::par_map(&eps, solve_slice)
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let mut slices = Vec::with_capacity(solved.len());
        let mut da_deps = Vec::with_capacity(solved.len());
        let mut dgamma_deps = Vec::with_capacity(solved.len());
        for (p, da, dg) in solved {
            slices.push(p);
            da_deps.push(da);
            dgamma_deps.push(dg);
        }
        Ok(Self {
            generator,
            x0,
            eps,
            settings: *settings,
            slices,
            da_deps,
            dgamma_deps,
        })
    }

    pub fn dim(&self) -> usize {
        self.generator.dim()
    }

    pub fn eps_step(&self) -> f64 {
        self.eps[1] - self.eps[0]
    }

    /// `∂_ε a` by central differences across slices (one-sided at the ends),
    /// kept as a cross-check of the sensitivity values.
    pub fn da_deps_central(&self) -> Vec<Vec<Vec<f64>>> {
        let m = self.eps.len();
        let h = self.eps_step();
        let diff = |i0: usize, i1: usize, scale: f64, k: usize| -> Vec<f64> {
            self.slices[i1].a[k]
                .iter()
                .zip(&self.slices[i0].a[k])
                .map(|(x, y)| (x - y) / scale)
                .collect()
        };
        (0..m)
            .map(|e| {
                (0..self.slices[e].t.len())
                    .map(|k| match e {
                        0 => {
                            let f0 = &self.slices[0].a[k];
                            let f1 = &self.slices[1].a[k];
                            let f2 = &self.slices[2].a[k];
                            (0..f0.len())
                                .map(|i| (-3.0 * f0[i] + 4.0 * f1[i] - f2[i]) / (2.0 * h))
                                .collect()
                        }
                        e if e == m - 1 => {
                            let f0 = &self.slices[e].a[k];
                            let f1 = &self.slices[e - 1].a[k];
                            let f2 = &self.slices[e - 2].a[k];
                            (0..f0.len())
                                .map(|i| (3.0 * f0[i] - 4.0 * f1[i] + f2[i]) / (2.0 * h))
                                .collect()
                        }
                        e => diff(e - 1, e + 1, 2.0 * h, k),
                    })
                    .collect()
            })
            .collect()
    }
}

/// Solved variation field of a family.
#[derive(Debug, Clone, Serialize)]
pub struct VariationResult {
    pub eps: Vec<f64>,
    /// `b(ε, t)` at every sample, `b(ε, 0) = 0`.
    #[serde(skip)]
    pub b: Vec<Vec<Vec<f64>>>,
    /// `var(ε) = b(ε, 1)`.
    pub var: Vec<Vec<f64>>,
    pub max_var: f64,
    pub sign: f64,
}

/// Solve the variation equation with the pinned sign.
pub fn solve_variation(structure: &PoissonStructure, fam: &PathFamily) -> Result<VariationResult> {
    solve_variation_signed(structure, fam, VARIATION_TORSION_SIGN)
}

/// Solve `db_i/dt = ∂_ε a_i + sign · ∂_iΠ^{jk}(γ) a_j b_k`, `b(ε, 0) = 0`, per slice.
pub fn solve_variation_signed(structure: &PoissonStructure, fam: &PathFamily, sign: f64) -> Result<VariationResult> {
    let n = structure.dim();
    let idx: Vec<usize> = (0..fam.eps.len()).collect();
    let per_slice = |e: &usize| -> Result<Vec<Vec<f64>>> {
        let path = &fam.slices[*e];
        let da = &fam.da_deps[*e];
        let dpis = path
            .gamma
            .iter()
            .map(|x| structure.dpi_at(x))
            .collect::<Result<Vec<_>>>()?;
        let h = 1.0 / (path.t.len() - 1) as f64;
        solve_on_samples(path.t.len(), h, &vec![0.0; n], |k, y| {
            let tq = torsion_with(&dpis[k], &path.a[k], y);
            Ok((0..n).map(|i| da[k][i] + sign * tq[i]).collect())
        })
    };
    let b = crate::numeric::par_map(&idx, per_slice)
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let var: Vec<Vec<f64>> = b.iter().map(|s| s.last().cloned().unwrap_or_default()).collect();
    let max_var = var.iter().map(|v| norm(v)).fold(0.0, f64::max);
    Ok(VariationResult {
        eps: fam.eps.clone(),
        b,
        var,
        max_var,
        sign,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum HomotopyVerdict {
    Homotopy { max_var: f64 },
    VariationNonzero { max_var: f64 },
    EndpointsNotFixed { spread: f64 },
}

impl HomotopyVerdict {
    pub fn is_homotopy(&self) -> bool {
        matches!(self, HomotopyVerdict::Homotopy { .. })
    }
}

/// Largest distance of a slice's base start or end from the first slice's.
pub fn endpoint_spread(fam: &PathFamily) -> f64 {
    let first = &fam.slices[0];
    fam.slices
        .iter()
        .map(|p| max_abs_diff(p.start(), first.start()).max(max_abs_diff(p.end(), first.end())))
        .fold(0.0, f64::max)
}

/// A family is a homotopy when its base endpoints are fixed and its variation vanishes.
pub fn is_homotopy(fam: &PathFamily, var: &VariationResult, tol: f64) -> HomotopyVerdict {
    let spread = endpoint_spread(fam);
    if spread > tol {
        HomotopyVerdict::EndpointsNotFixed { spread }
    } else if var.max_var > tol {
        HomotopyVerdict::VariationNonzero { max_var: var.max_var }
    } else {
        HomotopyVerdict::Homotopy { max_var: var.max_var }
    }
}

/// The four quantities of the invariance identity
/// `∫_{a1}X − ∫_{a0}X = ∫⟨b(ε,1), X(γ(ε,1))⟩ dε + ∬ (L_XΠ)(a, b) dt dε`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct IdentityTerms {
    pub lhs: f64,
    pub boundary: f64,
    pub bulk: f64,
    pub residual: f64,
}

pub fn invariance_identity(
    structure: &PoissonStructure,
    fam: &PathFamily,
    var: &VariationResult,
    field: &VectorField,
) -> Result<IdentityTerms> {
    let drift = fam
        .slices
        .iter()
        .map(|p| max_abs_diff(p.start(), fam.slices[0].start()))
        .fold(0.0, f64::max);
    if drift > 1e-12 {
        return Err(Error::Invalid(format!(
            "the invariance identity needs a fixed start point (start moves by {drift:e})"
        )));
    }
    let scope = structure.scope();
    let m = fam.eps.len();
    let h_eps = fam.eps_step();
    let mut integrals = Vec::with_capacity(m);
    let mut boundary = Vec::with_capacity(m);
    let mut bulk = Vec::with_capacity(m);
    for (e, path) in fam.slices.iter().enumerate() {
        let b = &var.b[e];
        let mut pair = Vec::with_capacity(path.t.len());
        let mut lie = Vec::with_capacity(path.t.len());
        for k in 0..path.t.len() {
            let x = &path.gamma[k];
            pair.push(dot(&path.a[k], &field.eval(x, scope)?));
            let l = structure.lie_derivative_bivector(field, x)?;
            let mut v = 0.0;
            for j in 0..path.a[k].len() {
                for i in 0..b[k].len() {
                    v += l[(j, i)] * path.a[k][j] * b[k][i];
                }
            }
            lie.push(v);
        }
        integrals.push(path.integrate_samples(&pair)?);
        bulk.push(path.integrate_samples(&lie)?);
        boundary.push(dot(&var.var[e], &field.eval(path.end(), scope)?));
    }
    let lhs = integrals[m - 1] - integrals[0];
    let boundary = simpson_extrapolated(&boundary, h_eps)?;
    let bulk = simpson_extrapolated(&bulk, h_eps)?;
    Ok(IdentityTerms {
        lhs,
        boundary,
        bulk,
        residual: (lhs - boundary - bulk).abs(),
    })
}

/// Residual `|LHS − RHS|` of the invariance identity.
pub fn invariance_identity_residual(
    structure: &PoissonStructure,
    fam: &PathFamily,
    var: &VariationResult,
    field: &VectorField,
) -> Result<f64> {
    Ok(invariance_identity(structure, fam, var, field)?.residual)
}

/// Move a path along the action of `η` (with `η(0,·) = η(1,·) = 0`):
/// `m` explicit Euler steps `γ += h #b`, `a += h ∇_a b`, where `b(t) = η(t, γ(t))`.
pub fn flow_by_action(
    structure: &PoissonStructure,
    path: &CotangentPath,
    eta: &TimeDependentOneForm,
    h: f64,
    m: usize,
    defect_tol: f64,
) -> Result<CotangentPath> {
    let n = structure.dim();
    if eta.dim() != n {
        return Err(Error::Dimension(format!("action form must have {n} components")));
    }
    let scope: &dyn Scope = structure.scope();
    let last = path.t.len() - 1;
    let at_ends = norm(&eta.eval(path.t[0], path.start(), scope)?)
        .max(norm(&eta.eval(path.t[last], path.end(), scope)?));
    if at_ends > 1e-12 {
        return Err(Error::Invalid(format!(
            "action form must vanish at t = 0 and t = 1 (found {at_ends:e})"
        )));
    }
    let mut gamma = path.gamma.clone();
    let mut a = path.a.clone();
    for _ in 0..m {
        let mut next_g = gamma.clone();
        let mut next_a = a.clone();
        for k in 0..path.t.len() {
            let t = path.t[k];
            let x = &gamma[k];
            let pi = structure.pi_at(x)?;
            let dpi = structure.dpi_at(x)?;
            let b = eta.eval(t, x, scope)?;
            let jb = eta.jacobian(t, x, scope)?;
            let mut db = eta.time_derivative(t, x, scope)?;
            let xdot = sharp_with(&pi, &a[k]);
            for i in 0..n {
                for l in 0..n {
                    db[i] += jb[(i, l)] * xdot[l];
                }
            }
            let tq = torsion_with(&dpi, &a[k], &b);
            let vb = sharp_with(&pi, &b);
            for i in 0..n {
                next_g[k][i] += h * vb[i];
                next_a[k][i] += h * (db[i] + tq[i]);
            }
        }
        gamma = next_g;
        a = next_a;
    }
    let mut out = CotangentPath {
        t: path.t.clone(),
        gamma,
        a,
        defect: 0.0,
        generator: None,
        settings: path.settings,
    };
    out.defect = defect(structure, &out)?;
    out.ensure_valid(defect_tol)?;
    Ok(out)
}
