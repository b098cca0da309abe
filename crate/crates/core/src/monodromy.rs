//! Leafwise symplectic areas of sphere families, their transverse variation,
//! splitting-curvature periods, monodromy period groups, the discreteness
//! radius `r_N` and integrability scans.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize, Serializer};

use crate::expr::{Expression, Layered, Params, Scope};
use crate::forms::{OneForm, VectorField};
use crate::isotropy::{kernel_of, RANK_TOL};
use crate::numeric::{dot, lstsq, norm, par_map, simpson_weights, uniform_grid};
use crate::structure::{sharp_with, torsion_with, PoissonStructure};
use crate::{Error, Result};

pub const TAU: &str = "tau";
pub const THETA: &str = "theta";
pub const PHI: &str = "phi";

/// Relative residual below which a vector counts as tangent to the leaf.
pub const TANGENCY_TOL: f64 = 1e-6;

/// Sign relating the curvature period to the area variation:
/// `⟨∫Ω_σ, ∂_τσ⟩ = CURVATURE_SIGN · dA/dτ` with the conventions of this crate.
pub const CURVATURE_SIGN: f64 = 1.0;

// ---------------------------------------------------------------------------
// sphere families

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SphereFamilySpec {
    pub sigma: Vec<String>,
    pub tau_range: [f64; 2],
}

/// Chart map `σ(τ, θ, φ)` of a family of spheres, each inside one leaf.
#[derive(Debug, Clone)]
pub struct SphereFamily {
    sigma: Vec<Expression>,
    d_theta: Vec<Expression>,
    d_phi: Vec<Expression>,
    d_tau: Vec<Expression>,
    pub tau_range: (f64, f64),
}

impl SphereFamily {
    pub fn new(sigma: Vec<Expression>, tau_range: (f64, f64)) -> Result<Self> {
        if sigma.is_empty() {
            return Err(Error::Dimension("sphere map needs components".into()));
        }
        if !(tau_range.0 < tau_range.1) {
            return Err(Error::Invalid(format!("empty tau range {tau_range:?}")));
        }
        let d = |name: &str| sigma.iter().map(|e| e.diff_param(name)).collect();
        Ok(Self {
            d_theta: d(THETA),
            d_phi: d(PHI),
            d_tau: d(TAU),
            sigma,
            tau_range,
        })
    }

    pub fn from_spec(spec: &SphereFamilySpec, dim: usize) -> Result<Self> {
        if spec.sigma.len() != dim {
            return Err(Error::Dimension(format!(
                "sphere map has {} components, chart dimension is {dim}",
                spec.sigma.len()
            )));
        }
        let sigma = spec
            .sigma
            .iter()
            .map(|s| Expression::parse(s, dim))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(sigma, (spec.tau_range[0], spec.tau_range[1]))
    }

    /// Round spheres `τ (sinθ cosφ, sinθ sinφ, cosθ)` in the first three coordinates.
    pub fn round(dim: usize, tau_range: (f64, f64)) -> Result<Self> {
        let mut src = vec![
            "tau*sin(theta)*cos(phi)".to_string(),
            "tau*sin(theta)*sin(phi)".to_string(),
            "tau*cos(theta)".to_string(),
        ];
        if dim < 3 {
            return Err(Error::Dimension("round spheres need at least 3 coordinates".into()));
        }
        src.resize(dim, "0".to_string());
        Self::from_spec(
            &SphereFamilySpec {
                sigma: src,
                tau_range: [tau_range.0, tau_range.1],
            },
            dim,
        )
    }

    pub fn dim(&self) -> usize {
        self.sigma.len()
    }

    fn eval_list(list: &[Expression], tau: f64, theta: f64, phi: f64, base: &dyn Scope) -> Result<Vec<f64>> {
        let extra = [(TAU, tau), (THETA, theta), (PHI, phi)];
        let scope = Layered { extra: &extra, base };
        list.iter().map(|e| e.eval_scalar(&scope).map_err(Error::from)).collect()
    }

    pub fn point(&self, tau: f64, theta: f64, phi: f64, base: &dyn Scope) -> Result<Vec<f64>> {
        Self::eval_list(&self.sigma, tau, theta, phi, base)
    }

    /// `(σ, ∂_θσ, ∂_φσ, ∂_τσ)` at one parameter point.
    pub fn frame(&self, tau: f64, theta: f64, phi: f64, base: &dyn Scope) -> Result<[Vec<f64>; 4]> {
        Ok([
            Self::eval_list(&self.sigma, tau, theta, phi, base)?,
            Self::eval_list(&self.d_theta, tau, theta, phi, base)?,
            Self::eval_list(&self.d_phi, tau, theta, phi, base)?,
            Self::eval_list(&self.d_tau, tau, theta, phi, base)?,
        ])
    }
}

/// Quadrature grid on the `(θ, φ)` chart: Simpson in θ over `[0, π]`
/// (poles included), periodic trapezoid in φ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SphereGrid {
    pub n_theta: usize,
    pub n_phi: usize,
}

impl Default for SphereGrid {
    fn default() -> Self {
        Self {
            n_theta: 100,
            n_phi: 200,
        }
    }
}

impl SphereGrid {
    pub fn coarse() -> Self {
        Self { n_theta: 40, n_phi: 80 }
    }

    fn validate(&self) -> Result<()> {
        if self.n_theta < 2 || !self.n_theta.is_multiple_of(2) || self.n_phi < 3 {
            return Err(Error::Invalid(format!(
                "sphere grid needs an even θ count >= 2 and φ count >= 3, got {}x{}",
                self.n_theta, self.n_phi
            )));
        }
        Ok(())
    }
}

/// Integrate `f(θ, φ)` over the chart rectangle.
fn sphere_quadrature<F>(grid: SphereGrid, f: F) -> Result<f64>
where
    F: Fn(f64, f64) -> Result<f64> + Sync + Send,
{
    grid.validate()?;
    let thetas = uniform_grid(0.0, std::f64::consts::PI, grid.n_theta);
    let wt = simpson_weights(grid.n_theta, std::f64::consts::PI / grid.n_theta as f64)?;
    let hphi = std::f64::consts::TAU / grid.n_phi as f64;
    let rows = par_map(&thetas, |theta| -> Result<f64> {
        let mut acc = 0.0;
        for j in 0..grid.n_phi {
            acc += f(*theta, j as f64 * hphi)?;
        }
        Ok(acc * hphi)
    });
    let mut total = 0.0;
    for (w, r) in wt.iter().zip(rows) {
        total += w * r?;
    }
    Ok(total)
}

// ---------------------------------------------------------------------------
// leafwise symplectic form

/// Pseudo-inverse data of the anchor at a point.
struct LeafSolver {
    pinv: DMatrix<f64>,
    proj: DMatrix<f64>,
}

impl LeafSolver {
    fn new(pi: &DMatrix<f64>) -> Self {
        // #α = Πᵀ α
        let m = pi.transpose();
        let svd = m.clone().svd(true, true);
        let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
        let eps = (RANK_TOL * smax).max(f64::MIN_POSITIVE);
        let pinv = svd.pseudo_inverse(eps).unwrap_or_else(|_| DMatrix::zeros(m.ncols(), m.nrows()));
        let proj = &m * &pinv;
        Self { pinv, proj }
    }

    fn preimage(&self, u: &[f64]) -> Result<Vec<f64>> {
        let uv = DVector::from_column_slice(u);
        let scale = uv.norm();
        if scale == 0.0 {
            return Ok(vec![0.0; u.len()]);
        }
        let residual = (&self.proj * &uv - &uv).norm() / scale;
        if residual > TANGENCY_TOL {
            return Err(Error::NotTangent(residual));
        }
        Ok((&self.pinv * uv).iter().copied().collect())
    }

    fn omega(&self, u: &[f64], v: &[f64]) -> Result<f64> {
        let alpha = self.preimage(u)?;
        self.preimage(v)?;
        Ok(-dot(&alpha, v))
    }
}

/// `ω_x(u, v) = −⟨α, v⟩` where `#α = u`, so that `ω(#α, #β) = Π(α, β)`.
pub fn leaf_symplectic_form(structure: &PoissonStructure, x: &[f64], u: &[f64], v: &[f64]) -> Result<f64> {
    LeafSolver::new(&structure.pi_at(x)?).omega(u, v)
}

/// `∬ ω(∂_θσ, ∂_φσ) dθ dφ` at fixed `τ`.
pub fn symplectic_area(structure: &PoissonStructure, fam: &SphereFamily, tau: f64, grid: SphereGrid) -> Result<f64> {
    check_family_dim(structure, fam)?;
    let scope = structure.scope();
    sphere_quadrature(grid, |theta, phi| {
        let [x, st, sp, _] = fam.frame(tau, theta, phi, scope)?;
        if norm(&st) == 0.0 || norm(&sp) == 0.0 {
            return Ok(0.0);
        }
        LeafSolver::new(&structure.pi_at(&x)?).omega(&st, &sp)
    })
}

/// Area together with a convergence check against the half-resolution grid.
pub fn symplectic_area_checked(
    structure: &PoissonStructure,
    fam: &SphereFamily,
    tau: f64,
    grid: SphereGrid,
) -> Result<f64> {
    let fine = symplectic_area(structure, fam, tau, grid)?;
    let half = SphereGrid {
        n_theta: (grid.n_theta / 2).max(2) + (grid.n_theta / 2) % 2,
        n_phi: (grid.n_phi / 2).max(3),
    };
    let coarse = symplectic_area(structure, fam, tau, half)?;
    let rel = (fine - coarse).abs() / fine.abs().max(1e-12);
    if rel >= 1e-4 && (fine - coarse).abs() > 1e-10 {
        return Err(Error::Quadrature(format!(
            "area changes by {rel:e} (relative) between grids {}x{} and {}x{}",
            half.n_theta, half.n_phi, grid.n_theta, grid.n_theta
        )));
    }
    Ok(fine)
}

fn check_family_dim(structure: &PoissonStructure, fam: &SphereFamily) -> Result<()> {
    if fam.dim() != structure.dim() {
        return Err(Error::Dimension(format!(
            "sphere family has dimension {}, structure has {}",
            fam.dim(),
            structure.dim()
        )));
    }
    Ok(())
}

/// Check at a few sample points that the sphere tangents lie in `Im #`.
pub fn check_leafwise(structure: &PoissonStructure, fam: &SphereFamily, tau: f64) -> Result<f64> {
    let scope = structure.scope();
    let mut worst = 0.0f64;
    for (theta, phi) in [(0.7, 0.3), (1.3, 2.1), (2.2, 4.0), (1.0, 5.5)] {
        let [x, st, sp, _] = fam.frame(tau, theta, phi, scope)?;
        let solver = LeafSolver::new(&structure.pi_at(&x)?);
        for u in [&st, &sp] {
            let uv = DVector::from_column_slice(u);
            if uv.norm() > 0.0 {
                worst = worst.max((&solver.proj * &uv - &uv).norm() / uv.norm());
            }
        }
    }
    if worst > TANGENCY_TOL {
        return Err(Error::NotTangent(worst));
    }
    Ok(worst)
}

/// Unit conormal covector at `x` (corank 1 only), oriented so that `⟨κ, w⟩ > 0`.
fn conormal(structure: &PoissonStructure, x: &[f64], w: &[f64]) -> Result<(Vec<f64>, f64)> {
    let k = kernel_of(&structure.pi_at(x)?, RANK_TOL)?;
    if k.dim() != 1 {
        return Err(Error::Invalid(format!(
            "monodromy from sphere families needs corank 1, found corank {} at {x:?}",
            k.dim()
        )));
    }
    let mut kappa = k.row(0);
    let mut pairing = dot(&kappa, w);
    if pairing < 0.0 {
        kappa.iter_mut().for_each(|v| *v = -*v);
        pairing = -pairing;
    }
    if pairing <= 1e-8 * norm(w).max(1e-300) {
        return Err(Error::Invalid(
            "transverse variation degenerates: the north-pole path is tangent to the leaf".into(),
        ));
    }
    Ok((kappa, pairing))
}

#[derive(Debug, Clone, Serialize)]
pub struct AreaVariation {
    pub tau: f64,
    pub point: Vec<f64>,
    pub area: f64,
    pub d_area: f64,
    /// `∂_τσ(τ, 0, 0)`.
    pub w: Vec<f64>,
    pub kappa: Vec<f64>,
    /// `⟨κ, w⟩`.
    pub pairing: f64,
    /// Generator in the conormal coordinate along `κ`.
    pub generator: f64,
    /// `ξ = generator · κ`.
    pub xi: Vec<f64>,
    pub h: f64,
    /// Relative change of `dA/dτ` when `h` is halved, when checked.
    pub step_check: Option<f64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct VariationOptions {
    pub h: f64,
    pub grid: SphereGrid,
    pub check_step: bool,
}

impl Default for VariationOptions {
    fn default() -> Self {
        Self {
            h: 1e-4,
            grid: SphereGrid::default(),
            check_step: true,
        }
    }
}

/// Central-difference `dA/dτ` and the monodromy covector it defines.
pub fn area_variation(
    structure: &PoissonStructure,
    fam: &SphereFamily,
    tau: f64,
    opts: &VariationOptions,
) -> Result<AreaVariation> {
    check_family_dim(structure, fam)?;
    let scope = structure.scope();
    let h = opts.h;
    let area_at = |t: f64| symplectic_area(structure, fam, t, opts.grid);
    let d_area = (area_at(tau + h)? - area_at(tau - h)?) / (2.0 * h);
    let step_check = if opts.check_step {
        let half = (area_at(tau + 0.5 * h)? - area_at(tau - 0.5 * h)?) / h;
        let rel = (half - d_area).abs() / d_area.abs().max(1e-300);
        if (half - d_area).abs() > 1e-6 && rel > 1e-3 {
            return Err(Error::Quadrature(format!(
                "dA/dτ not reproducible under step halving (relative change {rel:e})"
            )));
        }
        Some(if d_area == 0.0 { 0.0 } else { rel })
    } else {
        None
    };
    let [x, _, _, w] = fam.frame(tau, 0.0, 0.0, scope)?;
    let (kappa, pairing) = conormal(structure, &x, &w)?;
    let generator = d_area / pairing;
    Ok(AreaVariation {
        tau,
        area: area_at(tau)?,
        point: x,
        d_area,
        xi: kappa.iter().map(|k| generator * k).collect(),
        w,
        kappa,
        pairing,
        generator,
        h,
        step_check,
    })
}

// ---------------------------------------------------------------------------
// splitting curvature

/// A linear splitting `σ: TL → T*M` given on a (possibly redundant) frame of
/// leaf tangents: `forms[a] = σ(frame[a])` with `#forms[a] = frame[a]`.
#[derive(Debug, Clone)]
pub struct Splitting {
    pub frame: Vec<VectorField>,
    pub forms: Vec<OneForm>,
    /// `[V_a, V_b]` for `a < b`.
    lie: Vec<Vec<Option<VectorField>>>,
    /// `[σ_a, σ_b]` for `a < b`.
    koszul: Vec<Vec<Option<OneForm>>>,
}

fn vector_bracket(v: &VectorField, w: &VectorField) -> Result<VectorField> {
    let n = v.dim();
    let comps = (0..n)
        .map(|k| {
            let dw = w.component(k).gradient();
            let dv = v.component(k).gradient();
            let mut acc = Expression::zero(n);
            for j in 0..n {
                if !dw[j].is_zero() && !v.component(j).is_zero() {
                    acc = acc + v.component(j) * &dw[j];
                }
                if !dv[j].is_zero() && !w.component(j).is_zero() {
                    acc = acc - w.component(j) * &dv[j];
                }
            }
            acc
        })
        .collect();
    VectorField::new(comps)
}

impl Splitting {
    pub fn new(structure: &PoissonStructure, frame: Vec<VectorField>, forms: Vec<OneForm>) -> Result<Self> {
        if frame.len() != forms.len() || frame.is_empty() {
            return Err(Error::Splitting("frame and forms must be non-empty and equal in number".into()));
        }
        let n = structure.dim();
        if frame.iter().any(|v| v.dim() != n) || forms.iter().any(|f| f.dim() != n) {
            return Err(Error::Splitting(format!("frame and forms must have dimension {n}")));
        }
        let m = frame.len();
        let mut lie = vec![vec![None; m]; m];
        let mut koszul = vec![vec![None; m]; m];
        for a in 0..m {
            for b in a + 1..m {
                lie[a][b] = Some(vector_bracket(&frame[a], &frame[b])?);
                koszul[a][b] = Some(structure.koszul_bracket(&forms[a], &forms[b])?);
            }
        }
        Ok(Self {
            frame,
            forms,
            lie,
            koszul,
        })
    }

    /// Max of `|#σ_a − V_a|` over the given points; fails above `tol`.
    pub fn validate(&self, structure: &PoissonStructure, points: &[Vec<f64>], tol: f64) -> Result<f64> {
        let scope = structure.scope();
        let mut worst = 0.0f64;
        for x in points {
            let pi = structure.pi_at(x)?;
            for (v, s) in self.frame.iter().zip(&self.forms) {
                let sv = sharp_with(&pi, &s.eval(x, scope)?);
                let vv = v.eval(x, scope)?;
                worst = worst.max(sv.iter().zip(&vv).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max));
            }
        }
        if worst > tol {
            return Err(Error::Splitting(format!("#σ(V) differs from V by {worst:e}")));
        }
        Ok(worst)
    }

    /// `Ω_σ(u, v)` at `x` for leaf tangents `u`, `v`.
    pub fn curvature(&self, structure: &PoissonStructure, x: &[f64], u: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        let scope = structure.scope();
        let n = structure.dim();
        let m = self.frame.len();
        let mut fm = DMatrix::zeros(n, m);
        for (a, f) in self.frame.iter().enumerate() {
            for (i, c) in f.eval(x, scope)?.into_iter().enumerate() {
                fm[(i, a)] = c;
            }
        }
        let sig: Vec<Vec<f64>> = self.forms.iter().map(|f| f.eval(x, scope)).collect::<Result<_>>()?;
        let coords = |vec: &[f64]| -> Result<DVector<f64>> {
            let rhs = DVector::from_column_slice(vec);
            let (c, res) = lstsq(&fm, &rhs, RANK_TOL);
            if res > TANGENCY_TOL * rhs.norm().max(1.0) {
                return Err(Error::NotTangent(res));
            }
            Ok(c)
        };
        let cu = coords(u)?;
        let cv = coords(v)?;
        let mut out = vec![0.0; n];
        for a in 0..m {
            for b in a + 1..m {
                let weight = cu[a] * cv[b] - cu[b] * cv[a];
                if weight == 0.0 {
                    continue;
                }
                let lie = self.lie[a][b].as_ref().expect("a < b").eval(x, scope)?;
                let cl = coords(&lie)?;
                let kz = self.koszul[a][b].as_ref().expect("a < b").eval(x, scope)?;
                for i in 0..n {
                    let s_lie: f64 = (0..m).map(|e| cl[e] * sig[e][i]).sum();
                    out[i] += weight * (s_lie - kz[i]);
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CurvaturePeriod {
    pub tau: f64,
    pub point: Vec<f64>,
    /// `∬ ⟨Ω_σ(∂_θσ, ∂_φσ), ∂_τσ⟩ dθ dφ`.
    pub pairing_integral: f64,
    pub kappa: Vec<f64>,
    pub generator: f64,
    pub xi: Vec<f64>,
    /// Largest `|#Ω|` or `|[Ω, k]|` seen at the check points.
    pub center_residual: f64,
}

/// Sphere period of the splitting curvature, paired with the transverse field
/// `∂_τσ` (parallel for the Bott connection), expressed as a conormal covector
/// at the north pole with the orientation of [`area_variation`].
pub fn curvature_periods(
    structure: &PoissonStructure,
    splitting: &Splitting,
    fam: &SphereFamily,
    tau: f64,
    grid: SphereGrid,
) -> Result<CurvaturePeriod> {
    check_family_dim(structure, fam)?;
    let scope = structure.scope();
    // Center-valuedness at a few points.
    let mut center_residual = 0.0f64;
    for (theta, phi) in [(0.9, 0.4), (1.6, 2.5), (2.4, 4.4)] {
        let [x, st, sp, _] = fam.frame(tau, theta, phi, scope)?;
        let om = splitting.curvature(structure, &x, &st, &sp)?;
        let pi = structure.pi_at(&x)?;
        let scale = norm(&om).max(1.0);
        center_residual = center_residual.max(norm(&sharp_with(&pi, &om)) / scale);
        let k = kernel_of(&pi, RANK_TOL)?;
        let dpi = structure.dpi_at(&x)?;
        for a in 0..k.dim() {
            center_residual = center_residual.max(norm(&torsion_with(&dpi, &om, &k.row(a))) / scale);
        }
    }
    if center_residual > 1e-6 {
        return Err(Error::Splitting(format!(
            "curvature is not center-valued (residual {center_residual:e})"
        )));
    }
    let integral = sphere_quadrature(grid, |theta, phi| {
        let [x, st, sp, dt] = fam.frame(tau, theta, phi, scope)?;
        if norm(&st) == 0.0 || norm(&sp) == 0.0 {
            return Ok(0.0);
        }
        Ok(dot(&splitting.curvature(structure, &x, &st, &sp)?, &dt))
    })?;
    let [x, _, _, w] = fam.frame(tau, 0.0, 0.0, scope)?;
    let (kappa, pairing) = conormal(structure, &x, &w)?;
    let generator = CURVATURE_SIGN * integral / pairing;
    Ok(CurvaturePeriod {
        tau,
        point: x,
        pairing_integral: integral,
        xi: kappa.iter().map(|k| generator * k).collect(),
        kappa,
        generator,
        center_residual,
    })
}

// ---------------------------------------------------------------------------
// abstract regular model

/// Leaves `S² × ... × S²` (k factors) over a transverse line with coordinate
/// `x1 = τ`, leafwise form `Σ f_i(τ) · (unit area form on factor i)`.
#[derive(Debug, Clone)]
pub struct FoliatedSphereProduct {
    pub f: Vec<Expression>,
    df: Vec<Expression>,
    pub params: Params,
}

impl FoliatedSphereProduct {
    pub fn new(f: Vec<Expression>, params: Params) -> Result<Self> {
        if f.is_empty() {
            return Err(Error::Invalid("need at least one sphere factor".into()));
        }
        let f = f.into_iter().map(|e| e.with_dim(1)).collect::<Result<Vec<_>, _>>()?;
        let df = f.iter().map(|e| e.diff(0)).collect::<Result<Vec<_>, _>>()?;
        Ok(Self { f, df, params })
    }

    pub fn k(&self) -> usize {
        self.f.len()
    }

    /// Factor areas `4π f_i(τ)`.
    pub fn areas(&self, tau: f64) -> Result<Vec<f64>> {
        self.f
            .iter()
            .map(|e| Ok(4.0 * std::f64::consts::PI * e.eval(&[tau], &self.params)?))
            .collect()
    }

    /// Period generators `4π f_i′(τ)` in the conormal coordinate `dτ`.
    pub fn generators(&self, tau: f64) -> Result<Vec<f64>> {
        self.df
            .iter()
            .map(|e| Ok(4.0 * std::f64::consts::PI * e.eval(&[tau], &self.params)?))
            .collect()
    }
}

// ---------------------------------------------------------------------------
// period groups

/// Distance from 0 to the rest of a period group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RN {
    Finite(f64),
    Infinite,
    Dense,
}

impl RN {
    /// Ordering value with `+∞` for the trivial group and `0` for dense groups.
    pub fn value(&self) -> f64 {
        match self {
            RN::Finite(v) => *v,
            RN::Infinite => f64::INFINITY,
            RN::Dense => 0.0,
        }
    }
}

impl fmt::Display for RN {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RN::Finite(v) => write!(f, "{v:.12e}"),
            RN::Infinite => f.write_str("+inf"),
            RN::Dense => f.write_str("DENSE"),
        }
    }
}

impl Serialize for RN {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            RN::Finite(v) => s.serialize_f64(*v),
            RN::Infinite => s.serialize_str("+inf"),
            RN::Dense => s.serialize_str("DENSE"),
        }
    }
}

/// Parameters of the discreteness test.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DiscretenessOptions {
    /// Largest admissible denominator `Q`.
    pub q_bound: u64,
    /// Tolerance on `|q·r − p|` for a ratio `r`.
    pub tol: f64,
    /// Generators with magnitude at or below this are treated as zero.
    pub zero_tol: f64,
}

impl Default for DiscretenessOptions {
    fn default() -> Self {
        Self {
            q_bound: 1_000_000,
            tol: 1e-9,
            zero_tol: 1e-9,
        }
    }
}

fn gcd(a: u128, b: u128) -> u128 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Smallest-denominator convergent `p/q` of `r` with `|q r − p| ≤ tol`, `q ≤ bound`.
fn rational_relation(r: f64, bound: u64, tol: f64) -> Option<(i128, u128)> {
    let (mut p0, mut q0, mut p1, mut q1) = (1i128, 0i128, r.floor() as i128, 1i128);
    let mut x = r;
    loop {
        if q1 as u64 > bound {
            return None;
        }
        if (q1 as f64 * r - p1 as f64).abs() <= tol {
            return Some((p1, q1 as u128));
        }
        let frac = x - x.floor();
        if frac.abs() < 1e-300 {
            return None;
        }
        x = 1.0 / frac;
        if !x.is_finite() || x > 1e18 {
            return None;
        }
        let a = x.floor() as i128;
        let (p2, q2) = (a * p1 + p0, a * q1 + q0);
        p0 = p1;
        q0 = q1;
        p1 = p2;
        q1 = q2;
    }
}

/// `r_N` of the subgroup of ℝ generated by `generators`.
///
/// All ratios to the first nonzero generator must satisfy an integer relation
/// `|q·r − p| ≤ tol` with `q ≤ Q`; the group is then `(|g₀| · G / L) ℤ` with
/// `L` the lcm of the denominators and `G` the gcd of the scaled numerators.
pub fn discreteness(generators: &[f64], opts: &DiscretenessOptions) -> RN {
    let nonzero: Vec<f64> = generators.iter().copied().filter(|g| g.abs() > opts.zero_tol).collect();
    let Some(&g0) = nonzero.first() else {
        return RN::Infinite;
    };
    let mut rel = Vec::with_capacity(nonzero.len());
    for g in &nonzero {
        match rational_relation(g / g0, opts.q_bound, opts.tol) {
            Some(pq) => rel.push(pq),
            None => return RN::Dense,
        }
    }
    let mut l: u128 = 1;
    for (_, q) in &rel {
        l = l / gcd(l, *q) * q;
        if l > 1_000_000_000_000 {
            return RN::Dense;
        }
    }
    let mut g: u128 = 0;
    for (p, q) in &rel {
        g = gcd(g, p.unsigned_abs() * (l / q));
    }
    RN::Finite(g0.abs() * g as f64 / l as f64)
}

/// Monodromy report at one point of a corank-1 family.
#[derive(Debug, Clone, Serialize)]
pub struct PeriodGroupReport {
    pub tau: f64,
    pub point: Vec<f64>,
    pub conormal_dim: usize,
    pub conormal_basis: Vec<f64>,
    pub generators: Vec<f64>,
    pub r_n: RN,
    pub methods: Vec<String>,
    pub curvature_generator: Option<f64>,
    pub method_agreement: Option<f64>,
    pub discreteness: DiscretenessOptions,
    pub grid: SphereGrid,
    pub h: f64,
}

/// Period group of the abstract model at `τ`.
pub fn abstract_periods(model: &FoliatedSphereProduct, tau: f64, opts: &DiscretenessOptions) -> Result<PeriodGroupReport> {
    let generators = model.generators(tau)?;
    Ok(PeriodGroupReport {
        tau,
        point: vec![tau],
        conormal_dim: 1,
        conormal_basis: vec![1.0],
        r_n: discreteness(&generators, opts),
        generators,
        methods: vec!["abstract".into()],
        curvature_generator: None,
        method_agreement: None,
        discreteness: *opts,
        grid: SphereGrid::default(),
        h: 0.0,
    })
}

/// Period group from the area variation, cross-checked with the curvature
/// integral when a splitting is supplied.
pub fn monodromy_report(
    structure: &PoissonStructure,
    fam: &SphereFamily,
    tau: f64,
    splitting: Option<&Splitting>,
    var_opts: &VariationOptions,
    opts: &DiscretenessOptions,
) -> Result<PeriodGroupReport> {
    let av = area_variation(structure, fam, tau, var_opts)?;
    let mut methods = vec!["area-variation".to_string()];
    let (curvature_generator, method_agreement) = match splitting {
        Some(sp) => {
            let cp = curvature_periods(structure, sp, fam, tau, var_opts.grid)?;
            methods.push("curvature".into());
            let diff = (cp.generator - av.generator).abs();
            let rel = if av.generator.abs() > opts.zero_tol { diff / av.generator.abs() } else { diff };
            (Some(cp.generator), Some(rel))
        }
        None => (None, None),
    };
    Ok(PeriodGroupReport {
        tau,
        point: av.point.clone(),
        conormal_dim: 1,
        conormal_basis: av.kappa.clone(),
        generators: vec![av.generator],
        r_n: discreteness(&[av.generator], opts),
        methods,
        curvature_generator,
        method_agreement,
        discreteness: *opts,
        grid: var_opts.grid,
        h: var_opts.h,
    })
}

// ---------------------------------------------------------------------------
// integrability scan

pub enum ScanSource<'a> {
    Chart {
        structure: &'a PoissonStructure,
        family: &'a SphereFamily,
        variation: VariationOptions,
    },
    Abstract(&'a FoliatedSphereProduct),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanOptions {
    pub tau_range: (f64, f64),
    pub samples: usize,
    /// `r_N` values below this count as collapsing.
    pub threshold: f64,
    pub discreteness: DiscretenessOptions,
    /// Golden-section iterations used to locate a collapse point.
    pub locate_iterations: usize,
    /// Maximum number of halvings when approaching a collapse point.
    pub approach_levels: usize,
}

impl ScanOptions {
    pub fn new(tau_range: (f64, f64), samples: usize) -> Self {
        Self {
            tau_range,
            samples,
            threshold: 1e-3,
            discreteness: DiscretenessOptions {
                zero_tol: 1e-6,
                ..DiscretenessOptions::default()
            },
            locate_iterations: 40,
            approach_levels: 30,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanRow {
    pub tau: f64,
    pub areas: Vec<f64>,
    pub d_areas: Vec<f64>,
    pub generators: Vec<f64>,
    pub r_n: RN,
    pub flag: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    IntegrableEvidence { inf_r_n: f64 },
    NonIntegrable { tau: f64, reason: String },
    Inconclusive { reason: String },
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::IntegrableEvidence { .. } => f.write_str("INTEGRABLE_EVIDENCE"),
            Verdict::NonIntegrable { tau, .. } => write!(f, "NON_INTEGRABLE({tau:.6})"),
            Verdict::Inconclusive { .. } => f.write_str("INCONCLUSIVE"),
        }
    }
}

/// Search near a local minimum of the sampled `r_N`.
#[derive(Debug, Clone, Serialize)]
pub struct Refinement {
    pub start_tau: f64,
    pub located_tau: f64,
    pub approach: Vec<(f64, f64)>,
    pub collapses: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanReport {
    pub rows: Vec<ScanRow>,
    pub refinements: Vec<Refinement>,
    pub verdict: Verdict,
    pub options: ScanOptions,
}

impl ScanReport {
    pub const CSV_HEADER: [&'static str; 6] = ["tau", "area", "dA_dtau", "generators", "r_N", "flag"];

    /// CSV with one row per sample; multi-valued cells are `;`-joined.
    pub fn to_csv(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:.12e}")).collect::<Vec<_>>().join(";");
        let mut out = Self::CSV_HEADER.join(",");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{:.12e},{},{},{},{},{}\n",
                r.tau,
                join(&r.areas),
                join(&r.d_areas),
                join(&r.generators),
                r.r_n,
                r.flag
            ));
        }
        out
    }
}

impl ScanSource<'_> {
    fn row(&self, tau: f64, opts: &DiscretenessOptions) -> Result<ScanRow> {
        let (areas, d_areas, generators) = match self {
            ScanSource::Chart {
                structure,
                family,
                variation,
            } => {
                let v = area_variation(structure, family, tau, variation)?;
                (vec![v.area], vec![v.d_area], vec![v.generator])
            }
            ScanSource::Abstract(m) => {
                let g = m.generators(tau)?;
                (m.areas(tau)?, g.iter().map(|x| x / (4.0 * std::f64::consts::PI) * 4.0 * std::f64::consts::PI).collect(), g)
            }
        };
        let r_n = discreteness(&generators, opts);
        Ok(ScanRow {
            tau,
            areas,
            d_areas,
            generators,
            flag: match r_n {
                RN::Dense => "DENSE".into(),
                RN::Infinite => "TRIVIAL".into(),
                RN::Finite(_) => String::new(),
            },
            r_n,
        })
    }

    fn rn(&self, tau: f64, opts: &DiscretenessOptions) -> Result<f64> {
        Ok(self.row(tau, opts)?.r_n.value())
    }
}

/// Tabulate `r_N` over `τ` and decide an integrability verdict.
///
/// Collapse detection: every sampled local minimum of `r_N` is located by
/// golden-section search inside its neighbouring samples; `r_N` is then
/// evaluated on points approaching the located `τ*` with halving offsets. A
/// collapse (`NON_INTEGRABLE`) requires that approach sequence to decrease
/// strictly, at a non-stalling rate, to below the threshold.
pub fn integrability_scan(source: &ScanSource, opts: &ScanOptions) -> Result<ScanReport> {
    if opts.samples < 20 {
        return Err(Error::Invalid(format!("a scan needs at least 20 samples, got {}", opts.samples)));
    }
    let (lo, hi) = opts.tau_range;
    if !(lo < hi) {
        return Err(Error::Invalid(format!("empty tau range {lo}:{hi}")));
    }
    let taus = uniform_grid(lo, hi, opts.samples - 1);
    let d = &opts.discreteness;
    let mut rows = par_map(&taus, |t| source.row(*t, d))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    if let Some(r) = rows.iter().find(|r| r.r_n == RN::Dense) {
        let tau = r.tau;
        return Ok(ScanReport {
            rows,
            refinements: Vec::new(),
            verdict: Verdict::NonIntegrable {
                tau,
                reason: "period group is dense".into(),
            },
            options: opts.clone(),
        });
    }

    let vals: Vec<f64> = rows.iter().map(|r| r.r_n.value()).collect();
    let n = vals.len();
    let mut dips = Vec::new();
    for k in 0..n {
        if !vals[k].is_finite() {
            continue;
        }
        let left = if k > 0 { vals[k - 1] } else { f64::NEG_INFINITY };
        let right = if k + 1 < n { vals[k + 1] } else { f64::NEG_INFINITY };
        let neigh = left.max(right);
        let below_left = k == 0 || vals[k] < (1.0 - 1e-6) * vals[k - 1];
        let below_right = k + 1 == n || vals[k] < (1.0 - 1e-6) * vals[k + 1];
        if below_left && below_right && neigh.is_finite() || (below_left && below_right && neigh == f64::INFINITY) {
            dips.push(k);
        }
    }
    for &k in &dips {
        rows[k].flag = "DIP".into();
    }

    let spacing = taus[1] - taus[0];
    let mut refinements = Vec::new();
    for &k in &dips {
        let a = (taus[k] - spacing).max(lo);
        let b = (taus[k] + spacing).min(hi);
        let located = golden_section(|t| source.rn(t, d), a, b, taus[k], vals[k], opts.locate_iterations)?;
        let mut approach = Vec::new();
        let mut offset = spacing;
        let mut collapses = false;
        for _ in 0..opts.approach_levels {
            offset *= 0.5;
            let mut best = f64::INFINITY;
            for t in [located - offset, located + offset] {
                if t < lo || t > hi {
                    continue;
                }
                best = best.min(source.rn(t, d)?);
            }
            if !best.is_finite() {
                continue;
            }
            approach.push((offset, best));
            if approach_collapses(&approach, opts.threshold) {
                collapses = true;
                break;
            }
            if approach_stalls(&approach) {
                break;
            }
        }
        refinements.push(Refinement {
            start_tau: taus[k],
            located_tau: located,
            approach,
            collapses,
        });
    }

    let verdict = if let Some(r) = refinements.iter().find(|r| r.collapses) {
        Verdict::NonIntegrable {
            tau: r.located_tau,
            reason: "r_N tends to 0 approaching this point".into(),
        }
    } else {
        let inf = vals
            .iter()
            .copied()
            .chain(refinements.iter().flat_map(|r| r.approach.iter().map(|p| p.1)))
            .fold(f64::INFINITY, f64::min);
        if inf >= opts.threshold {
            Verdict::IntegrableEvidence { inf_r_n: inf }
        } else {
            Verdict::Inconclusive {
                reason: format!("r_N reaches {inf:e} without a clear collapse"),
            }
        }
    };
    Ok(ScanReport {
        rows,
        refinements,
        verdict,
        options: opts.clone(),
    })
}

/// Strictly decreasing over the last three halvings, each by a factor of at
/// least 1.5, and below the threshold.
fn approach_collapses(seq: &[(f64, f64)], threshold: f64) -> bool {
    if seq.len() < 4 {
        return false;
    }
    let tail = &seq[seq.len() - 4..];
    tail.windows(2).all(|w| w[1].1 > 0.0 && w[0].1 >= 1.5 * w[1].1) && tail[3].1 < threshold
}

/// The last three halvings changed the value by less than 5% each.
fn approach_stalls(seq: &[(f64, f64)]) -> bool {
    seq.len() >= 4 && seq[seq.len() - 4..].windows(2).all(|w| w[1].1 > w[0].1 / 1.05)
}

/// Golden-section minimization on `[a, b]` starting from a known value; `+∞`
/// values are treated as larger than everything.
fn golden_section<F>(f: F, mut a: f64, mut b: f64, best_t: f64, best_v: f64, iters: usize) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut best = (best_t, best_v);
    let mut c = b - g * (b - a);
    let mut dd = a + g * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(dd)?;
    for _ in 0..iters {
        for (t, v) in [(c, fc), (dd, fd)] {
            if v < best.1 {
                best = (t, v);
            }
        }
        if fc <= fd {
            b = dd;
            dd = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = dd;
            fc = fd;
            dd = a + g * (b - a);
            fd = f(dd)?;
        }
        if (b - a).abs() < 1e-12 {
            break;
        }
    }
    for (t, v) in [(c, fc), (dd, fd)] {
        if v < best.1 {
            best = (t, v);
        }
    }
    Ok(best.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    #[test]
    fn discreteness_examples() {
        let o = DiscretenessOptions::default();
        let pi4 = 4.0 * std::f64::consts::PI;
        assert_eq!(discreteness(&[pi4], &o), RN::Finite(pi4));
        assert_eq!(discreteness(&[], &o), RN::Infinite);
        assert_eq!(discreteness(&[0.0], &o), RN::Infinite);
        assert_eq!(discreteness(&[pi4, pi4 * 2f64.sqrt()], &o), RN::Dense);
        match discreteness(&[6.0, 4.0, 10.0], &o) {
            RN::Finite(v) => assert!((v - 2.0).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
        match discreteness(&[1.5, 1.0], &o) {
            RN::Finite(v) => assert!((v - 0.5).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn constant_symplectic_form_value() {
        let s = PoissonStructure::new(2, vec![((0, 1), parse("1", 2).unwrap())], Params::new(), "sym").unwrap();
        let w = leaf_symplectic_form(&s, &[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert!((w.abs() - 1.0).abs() < 1e-14);
        assert_eq!(leaf_symplectic_form(&s, &[0.0, 0.0], &[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
    }

    #[test]
    fn golden_section_finds_a_kink() {
        let t = golden_section(|t| Ok((t - 0.37).abs()), 0.0, 1.0, 0.5, 0.13, 60).unwrap();
        assert!((t - 0.37).abs() < 1e-9);
    }
}
