//! Built-in structures and models, the structure JSON format and `builtin:`
//! source strings.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::expr::{Expression, Params, Scope};
use crate::forms::{OneForm, VectorField};
use crate::monodromy::{FoliatedSphereProduct, SphereFamily, Splitting};
use crate::structure::PoissonStructure;
use crate::{Error, Result};

/// Jacobi gate applied to every chart structure before it is handed out.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct JacobiGate {
    pub seed: u64,
    pub points: usize,
    pub lo: f64,
    pub hi: f64,
    pub tol: f64,
}

impl Default for JacobiGate {
    fn default() -> Self {
        Self {
            seed: 0,
            points: 100,
            lo: -2.0,
            hi: 2.0,
            tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone)]
pub enum Model {
    Chart(PoissonStructure),
    Foliated(FoliatedSphereProduct),
}

/// Closed forms attached to an entry, as expressions in one variable `x1`
/// (the sphere radius or transverse parameter `τ`).
#[derive(Debug, Clone, Default)]
pub struct Oracles {
    /// Leaf areas, one per sphere factor.
    pub area: Vec<Expression>,
    /// Period generators, one per sphere factor.
    pub generator: Vec<Expression>,
    pub params: Params,
}

impl Oracles {
    fn eval(list: &[Expression], tau: f64, params: &Params) -> Result<Vec<f64>> {
        list.iter().map(|e| Ok(e.eval(&[tau], params)?)).collect()
    }

    pub fn area_at(&self, tau: f64) -> Result<Vec<f64>> {
        Self::eval(&self.area, tau, &self.params)
    }

    pub fn generator_at(&self, tau: f64) -> Result<Vec<f64>> {
        Self::eval(&self.generator, tau, &self.params)
    }
}

#[derive(Debug, Clone)]
pub struct RegistryEntry {
    pub label: String,
    pub name: String,
    pub args: BTreeMap<String, String>,
    pub model: Model,
    pub oracles: Oracles,
    /// Default sphere family for monodromy computations.
    pub family: Option<SphereFamily>,
    /// Default splitting for curvature periods.
    pub splitting: Option<Splitting>,
    pub jacobi_residual: Option<f64>,
}

impl RegistryEntry {
    pub fn structure(&self) -> Result<&PoissonStructure> {
        match &self.model {
            Model::Chart(s) => Ok(s),
            Model::Foliated(_) => Err(Error::Invalid(format!(
                "`{}` is an abstract foliated model without a chart bivector",
                self.label
            ))),
        }
    }

    pub fn foliated(&self) -> Option<&FoliatedSphereProduct> {
        match &self.model {
            Model::Foliated(m) => Some(m),
            Model::Chart(_) => None,
        }
    }
}

pub const BUILTIN_NAMES: [&str; 5] = ["zero", "symplectic", "linear", "su2_scaled", "foliated_spheres"];

/// Structure constants `c[(i, j, k)] = c^{ij}_k` (0-based, `i < j`) of su(2).
pub fn su2_constants() -> Vec<((usize, usize, usize), f64)> {
    vec![((0, 1, 2), 1.0), ((1, 2, 0), 1.0), ((0, 2, 1), -1.0)]
}

/// Structure constants `f_abc` of su(3) in the Gell-Mann basis `E_a = −(i/2) λ_a`.
pub fn su3_constants() -> Vec<((usize, usize, usize), f64)> {
    let h = 0.5;
    let r = 3f64.sqrt() / 2.0;
    let base = [
        ((1, 2, 3), 1.0),
        ((1, 4, 7), h),
        ((1, 5, 6), -h),
        ((2, 4, 6), h),
        ((2, 5, 7), h),
        ((3, 4, 5), h),
        ((3, 6, 7), -h),
        ((4, 5, 8), r),
        ((6, 7, 8), r),
    ];
    // Expand the totally antisymmetric f_abc into c^{ij}_k with i < j.
    let mut out = Vec::new();
    for ((a, b, c), v) in base {
        let (a, b, c) = (a - 1, b - 1, c - 1);
        for (i, j, k, s) in [(a, b, c, 1.0), (b, c, a, 1.0), (c, a, b, 1.0)] {
            if i < j {
                out.push(((i, j, k), s * v));
            } else {
                out.push(((j, i, k), -s * v));
            }
        }
    }
    out.sort_by_key(|x| x.0);
    out
}

/// The point of su(3)* dual to `diag(i, i, −2i)`.
pub fn su3_special_point() -> Vec<f64> {
    let mut x = vec![0.0; 8];
    x[7] = -2.0 * 3f64.sqrt();
    x
}

/// Linear bivector `Π^{ij}(x) = Σ_k c^{ij}_k x_k`.
pub fn linear_structure(
    dim: usize,
    constants: &[((usize, usize, usize), f64)],
    label: &str,
    gate: &JacobiGate,
) -> Result<(PoissonStructure, f64)> {
    let mut entries: BTreeMap<(usize, usize), Expression> = BTreeMap::new();
    for &((i, j, k), c) in constants {
        if i >= dim || j >= dim || k >= dim || i == j {
            return Err(Error::Dimension(format!(
                "structure constant c^{{{},{}}}_{} out of range for dimension {dim}",
                i + 1,
                j + 1,
                k + 1
            )));
        }
        let (key, sign) = if i < j { ((i, j), 1.0) } else { ((j, i), -1.0) };
        let term = Expression::var(k, dim) * (sign * c);
        let slot = entries.entry(key).or_insert_with(|| Expression::zero(dim));
        *slot = &*slot + &term;
    }
    let s = PoissonStructure::new(dim, entries.into_iter().collect(), Params::new(), label)?;
    let res = s.jacobi_gate(gate.seed, gate.points, gate.lo, gate.hi, gate.tol)?;
    Ok((s, res))
}

fn su2_bivector(a: &Expression) -> Vec<((usize, usize), Expression)> {
    let x = |k| Expression::var(k, 3);
    vec![((0, 1), a * &x(2)), ((1, 2), a * &x(0)), ((2, 0), a * &x(1))]
}

/// Frame `V_a` and forms `σ_a = (1/a)(dx^a − x_a x_j dx^j / R²)` for the
/// scaled su(2)* bracket, so that `#σ_a = V_a` away from the origin.
pub fn su2_scaled_splitting(structure: &PoissonStructure, a: &Expression) -> Result<Splitting> {
    let frame = vec![
        VectorField::parse("0, x3, -x2", 3)?,
        VectorField::parse("-x3, 0, x1", 3)?,
        VectorField::parse("x2, -x1, 0", 3)?,
    ];
    let r2 = Expression::parse("x1^2 + x2^2 + x3^2", 3)?;
    let forms = (0..3)
        .map(|i| {
            let comps = (0..3)
                .map(|j| {
                    let delta = if i == j { 1.0 } else { 0.0 };
                    let xx = Expression::var(i, 3) * &Expression::var(j, 3);
                    (Expression::constant(delta, 3) - xx / &r2) / a
                })
                .collect();
            OneForm::new(comps)
        })
        .collect::<Result<Vec<_>>>()?;
    Splitting::new(structure, frame, forms)
}

fn require_positive_on(a: &Expression, params: &Params, lo: f64, hi: f64, what: &str) -> Result<()> {
    let n = 400;
    for k in 0..=n {
        let r = lo + (hi - lo) * k as f64 / n as f64;
        if r <= 0.0 {
            continue;
        }
        let v = a.eval(&[r], params)?;
        if !(v > 0.0) {
            return Err(Error::NotPositive {
                what: what.to_string(),
                at: r,
                value: v,
            });
        }
    }
    Ok(())
}

/// Check positivity of the `su2_scaled` coefficient on an explicit radius range.
pub fn check_scaling_positive(entry: &RegistryEntry, lo: f64, hi: f64) -> Result<()> {
    if entry.name != "su2_scaled" {
        return Ok(());
    }
    let a = Expression::parse(&entry.args["a"], 1)?;
    require_positive_on(&a, &entry.oracles.params, lo, hi, "a(R)")
}

fn take<'a>(args: &'a BTreeMap<String, String>, key: &str) -> Result<&'a str> {
    args.get(key)
        .map(String::as_str)
        .ok_or_else(|| Error::Invalid(format!("missing builtin argument `{key}`")))
}

fn take_usize(args: &BTreeMap<String, String>, key: &str) -> Result<usize> {
    take(args, key)?
        .trim()
        .parse()
        .map_err(|_| Error::Invalid(format!("argument `{key}` must be a non-negative integer")))
}

/// Every argument not in `reserved` must be a numeric parameter value.
fn numeric_params(args: &BTreeMap<String, String>, reserved: &[&str]) -> Result<Params> {
    let mut p = Params::new();
    for (k, v) in args {
        if reserved.contains(&k.as_str()) {
            continue;
        }
        let value: f64 = v
            .trim()
            .parse()
            .map_err(|_| Error::Invalid(format!("unknown argument `{k}` (parameters must be numbers)")))?;
        p.insert(k, value);
    }
    Ok(p)
}

fn chart_entry(name: &str, args: BTreeMap<String, String>, s: PoissonStructure, residual: f64) -> RegistryEntry {
    RegistryEntry {
        label: s.label().to_string(),
        name: name.to_string(),
        args,
        model: Model::Chart(s),
        oracles: Oracles::default(),
        family: None,
        splitting: None,
        jacobi_residual: Some(residual),
    }
}

/// Build a registry entry by name; see [`BUILTIN_NAMES`].
pub fn builtin(name: &str, args: &BTreeMap<String, String>) -> Result<RegistryEntry> {
    builtin_with_gate(name, args, &JacobiGate::default())
}

pub fn builtin_with_gate(name: &str, args: &BTreeMap<String, String>, gate: &JacobiGate) -> Result<RegistryEntry> {
    let owned = args.clone();
    match name {
        "zero" => {
            let n = take_usize(args, "n")?;
            numeric_params(args, &["n"])?;
            let s = PoissonStructure::zero(n);
            Ok(chart_entry(name, owned, s, 0.0))
        }
        "symplectic" => {
            let m = take_usize(args, "m")?;
            numeric_params(args, &["m"])?;
            if m == 0 {
                return Err(Error::Invalid("symplectic needs m >= 1".into()));
            }
            let entries = (0..m).map(|i| ((i, i + m), Expression::constant(1.0, 2 * m))).collect();
            let s = PoissonStructure::new(2 * m, entries, Params::new(), format!("symplectic(2m={})", 2 * m))?;
            let res = s.jacobi_gate(gate.seed, gate.points, gate.lo, gate.hi, gate.tol)?;
            Ok(chart_entry(name, owned, s, res))
        }
        "linear" => {
            let (dim, constants, label) = match args.get("preset").map(String::as_str) {
                Some("su2") => (3, su2_constants(), "su2*".to_string()),
                Some("su3") => (8, su3_constants(), "su3*".to_string()),
                Some(other) => return Err(Error::Invalid(format!("unknown linear preset `{other}`"))),
                None => {
                    let dim = take_usize(args, "dim")?;
                    let c = parse_constants(take(args, "c")?)?;
                    (dim, c, format!("linear(dim={dim})"))
                }
            };
            numeric_params(args, &["preset", "dim", "c"])?;
            let (s, res) = linear_structure(dim, &constants, &label, gate)?;
            Ok(chart_entry(name, owned, s, res))
        }
        "su2_scaled" => {
            let a_text = args.get("a").map(String::as_str).unwrap_or("1");
            let params = numeric_params(args, &["a"])?;
            let a = Expression::parse(a_text, 3)?;
            let a1 = Expression::parse(a_text, 1)?;
            require_positive_on(&a1, &params, 0.0, 4.0, "a(R)")?;
            let s = PoissonStructure::new(3, su2_bivector(&a), params.clone(), format!("su2_scaled(a={a_text})"))?;
            let res = s.jacobi_gate(gate.seed, gate.points, gate.lo, gate.hi, gate.tol)?;
            let r = Expression::var(0, 1);
            let da = a1.diff(0)?;
            let area = Expression::constant(4.0 * PI, 1) * &r / &a1;
            let generator = Expression::constant(4.0 * PI, 1) * (&r * &da - &a1) / (&a1 * &a1);
            let splitting = su2_scaled_splitting(&s, &a)?;
            let mut entry = chart_entry(name, owned, s, res);
            entry.oracles = Oracles {
                area: vec![area],
                generator: vec![generator],
                params,
            };
            entry.family = Some(SphereFamily::round(3, (0.1, 3.0))?);
            entry.splitting = Some(splitting);
            let mut args = entry.args.clone();
            args.entry("a".into()).or_insert_with(|| a_text.to_string());
            entry.args = args;
            Ok(entry)
        }
        "foliated_spheres" => {
            let k = match args.get("k") {
                Some(_) => take_usize(args, "k")?,
                None => 1,
            };
            if k == 0 {
                return Err(Error::Invalid("foliated_spheres needs k >= 1".into()));
            }
            let mut reserved = vec!["k".to_string(), "f".to_string()];
            let texts: Vec<String> = if k == 1 && args.contains_key("f") {
                vec![args["f"].clone()]
            } else {
                (1..=k)
                    .map(|i| {
                        reserved.push(format!("f{i}"));
                        take(args, &format!("f{i}")).map(str::to_string)
                    })
                    .collect::<Result<_>>()?
            };
            let reserved: Vec<&str> = reserved.iter().map(String::as_str).collect();
            let params = numeric_params(args, &reserved)?;
            let f = texts.iter().map(|t| Expression::parse(t, 1)).collect::<Result<Vec<_>, _>>()?;
            let df = f.iter().map(|e| e.diff(0)).collect::<Result<Vec<_>, _>>()?;
            let model = FoliatedSphereProduct::new(f.clone(), params.clone())?;
            let four_pi = Expression::constant(4.0 * PI, 1);
            Ok(RegistryEntry {
                label: format!("foliated_spheres(k={k}; f={})", texts.join("; ")),
                name: name.to_string(),
                args: owned,
                model: Model::Foliated(model),
                oracles: Oracles {
                    area: f.iter().map(|e| &four_pi * e).collect(),
                    generator: df.iter().map(|e| &four_pi * e).collect(),
                    params,
                },
                family: None,
                splitting: None,
                jacobi_residual: None,
            })
        }
        other => Err(Error::Invalid(format!(
            "unknown builtin `{other}` (available: {})",
            BUILTIN_NAMES.join(", ")
        ))),
    }
}

/// `"i,j,k:value;..."` with 1-based indices, meaning `c^{ij}_k = value`.
fn parse_constants(text: &str) -> Result<Vec<((usize, usize, usize), f64)>> {
    let bad = || Error::Invalid(format!("cannot read structure constants `{text}` (expected i,j,k:value;...)"));
    text.split(';')
        .filter(|s| !s.trim().is_empty())
        .map(|item| {
            let (idx, val) = item.split_once(':').ok_or_else(bad)?;
            let ids = idx
                .split(',')
                .map(|s| s.trim().parse::<usize>().ok().filter(|v| *v >= 1).map(|v| v - 1))
                .collect::<Option<Vec<_>>>()
                .ok_or_else(bad)?;
            let [i, j, k] = ids[..] else { return Err(bad()) };
            let v: f64 = val.trim().parse().map_err(|_| bad())?;
            Ok(((i, j, k), v))
        })
        .collect()
}

/// Structure JSON: `{"dim": n, "pi": {"1,2": "expr", ...}, "params": {...}}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StructureJson {
    pub dim: usize,
    pub pi: BTreeMap<String, String>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default)]
    pub label: Option<String>,
}

pub fn structure_from_json(text: &str, gate: &JacobiGate) -> Result<(PoissonStructure, f64)> {
    let raw: StructureJson = serde_json::from_str(text)?;
    let mut entries = Vec::new();
    for (key, value) in &raw.pi {
        let (i, j) = key
            .split_once(',')
            .and_then(|(i, j)| Some((i.trim().parse::<usize>().ok()?, j.trim().parse::<usize>().ok()?)))
            .filter(|(i, j)| *i >= 1 && *j >= 1)
            .ok_or_else(|| Error::Invalid(format!("bivector key `{key}` must look like \"i,j\" (1-based)")))?;
        entries.push(((i - 1, j - 1), Expression::parse(value, raw.dim)?));
    }
    let params = Params(raw.params.clone());
    let s = PoissonStructure::new(raw.dim, entries, params, raw.label.unwrap_or_else(|| "json".into()))?;
    check_params_bound(&s)?;
    let res = s.jacobi_gate(gate.seed, gate.points, gate.lo, gate.hi, gate.tol)?;
    Ok((s, res))
}

fn check_params_bound(s: &PoissonStructure) -> Result<()> {
    for i in 0..s.dim() {
        for j in i + 1..s.dim() {
            for p in s.component(i, j).params() {
                if s.params().lookup(&p).is_none() {
                    return Err(Error::Expr(crate::ExprError::UnboundParameter(p)));
                }
            }
        }
    }
    Ok(())
}

/// Split `builtin:name?k=v&k=v` into its name and arguments.
pub fn parse_builtin_source(source: &str) -> Result<(String, BTreeMap<String, String>)> {
    let rest = source
        .strip_prefix("builtin:")
        .ok_or_else(|| Error::Invalid(format!("`{source}` is not a builtin source")))?;
    let (name, query) = rest.split_once('?').unwrap_or((rest, ""));
    let mut args = BTreeMap::new();
    for pair in query.split('&').filter(|s| !s.is_empty()) {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::Invalid(format!("builtin argument `{pair}` needs the form key=value")))?;
        if args.insert(k.trim().to_string(), v.to_string()).is_some() {
            return Err(Error::Invalid(format!("builtin argument `{k}` given twice")));
        }
    }
    Ok((name.to_string(), args))
}

/// Resolve a structure source: `builtin:...`, inline JSON, or a JSON file path.
pub fn load_source(source: &str, gate: &JacobiGate) -> Result<RegistryEntry> {
    if source.starts_with("builtin:") {
        let (name, args) = parse_builtin_source(source)?;
        return builtin_with_gate(&name, &args, gate);
    }
    let text = if source.trim_start().starts_with('{') {
        source.to_string()
    } else {
        std::fs::read_to_string(source)?
    };
    let (s, res) = structure_from_json(&text, gate)?;
    Ok(chart_entry("json", BTreeMap::new(), s, res))
}
