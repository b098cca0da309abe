use poisson_core::connection::parallel_transport;
use poisson_core::homotopy::{invariance_identity, is_homotopy, solve_variation, FamilySpec, PathFamily};
use poisson_core::isotropy::analyze;
use poisson_core::monodromy::{
    abstract_periods, area_variation, integrability_scan, monodromy_report, symplectic_area, ScanOptions, ScanSource,
    SphereFamily, SphereFamilySpec, SphereGrid, Splitting, VariationOptions,
};
use poisson_core::paths::{integrate_base, path_integral};
use poisson_core::registry::{check_scaling_positive, load_source, JacobiGate, RegistryEntry};
use poisson_core::{CotangentPath, Expression, OdeSettings, OneForm, PoissonStructure, TimeDependentOneForm, VectorField};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::config::Defaults;
use crate::error::{usage, CliError, CliResult};
use crate::{Command, GridArgs, OdeArgs};

pub fn execute(command: Command, defaults: &Defaults) -> CliResult<String> {
    let report = match command {
        Command::Validate { source, points, sample_box } => {
            let mut gate = defaults.jacobi_gate;
            if let Some(p) = points {
                gate.points = p;
            }
            if let Some(b) = sample_box {
                (gate.lo, gate.hi) = parse_range(&b)?;
            }
            return validate(&source, gate);
        }
        Command::Bracket { source, alpha, beta, at } => {
            let entry = load(&source, defaults)?;
            let s = entry.structure()?;
            let n = s.dim();
            let a = OneForm::parse(&alpha, n)?;
            let b = OneForm::parse(&beta, n)?;
            let x = parse_point(&at, n)?;
            let bracket = s.koszul_bracket(&a, &b)?;
            json!({
                "command": "bracket",
                "structure": entry.label,
                "at": x,
                "alpha": a.eval(&x, s.params())?,
                "beta": b.eval(&x, s.params())?,
                "bracket": bracket.eval(&x, s.params())?,
                "bracket_expressions": strings(bracket.components()),
            })
        }
        Command::Sharp { source, alpha, at } => {
            let entry = load(&source, defaults)?;
            let s = entry.structure()?;
            let field = s.sharp_form(&OneForm::parse(&alpha, s.dim())?)?;
            field_report("sharp", &entry, s, &field, at.as_deref())?
        }
        Command::Hamiltonian { source, h, at } => {
            let entry = load(&source, defaults)?;
            let s = entry.structure()?;
            let field = s.hamiltonian_field(&Expression::parse(&h, s.dim())?)?;
            field_report("hamiltonian", &entry, s, &field, at.as_deref())?
        }
        Command::Path { source, generator, x0, ode, save } => {
            let entry = load(&source, defaults)?;
            let s = entry.structure()?;
            let settings = ode_settings(&ode, defaults)?;
            let gen = TimeDependentOneForm::parse(&generator, s.dim())?;
            let path = integrate_base(s, &gen, &parse_point(&x0, s.dim())?, &settings)?;
            if let Some(file) = save {
                std::fs::write(file, path.to_json()?)?;
            }
            json!({
                "command": "path",
                "structure": entry.label,
                "samples": path.t.len(),
                "start": path.start(),
                "end": path.end(),
                "defect": path.defect,
                "ode": settings,
            })
        }
        Command::IntegrateField { source, path, field } => {
            let entry = load(&source, defaults)?;
            let s = entry.structure()?;
            let p = load_path(&path, s)?;
            let x = VectorField::parse(&field, s.dim())?;
            json!({
                "command": "integrate-field",
                "structure": entry.label,
                "samples": p.t.len(),
                "defect": p.defect,
                "integral": path_integral(&p, &x, s.scope())?,
            })
        }
        Command::Transport { source, path, s0 } => {
            let entry = load(&source, defaults)?;
            let s = entry.structure()?;
            let p = load_path(&path, s)?;
            let s0 = parse_point(&s0, s.dim())?;
            json!({
                "command": "transport",
                "structure": entry.label,
                "samples": p.t.len(),
                "defect": p.defect,
                "s0": s0,
                "s1": parallel_transport(s, &p, &s0)?,
            })
        }
        Command::Variation { source, family, field, tol, ode } => {
            let entry = load(&source, defaults)?;
            let s = entry.structure()?;
            let spec: FamilySpec = serde_json::from_str(&read_json(&family)?).map_err(poisson_core::Error::from)?;
            let settings = ode_settings(&ode, defaults)?;
            let fam = PathFamily::from_spec(s, &spec, &settings)?;
            let var = solve_variation(s, &fam)?;
            let tol = tol.unwrap_or(defaults.homotopy_tol);
            let identity = match field {
                Some(f) => Some(invariance_identity(s, &fam, &var, &VectorField::parse(&f, s.dim())?)?),
                None => None,
            };
            json!({
                "command": "variation",
                "structure": entry.label,
                "eps": var.eps,
                "var": var.var,
                "max_var": var.max_var,
                "sign": var.sign,
                "verdict": is_homotopy(&fam, &var, tol),
                "identity": identity,
                "homotopy_tol": tol,
                "eps_grid": spec.eps_grid,
                "t_grid": spec.t_grid,
                "ode": fam.settings,
            })
        }
        Command::Area { source, family, tau, grid } => {
            let entry = load(&source, defaults)?;
            let grid = sphere_grid(&grid, defaults.area_grid)?;
            let closed_form = closed(entry.oracles.area_at(tau));
            match entry.foliated() {
                Some(model) => json!({
                    "command": "area",
                    "structure": entry.label,
                    "tau": tau,
                    "areas": model.areas(tau)?,
                    "closed_form": closed_form,
                }),
                None => {
                    let s = entry.structure()?;
                    let fam = sphere_family(&entry, family.as_deref())?;
                    json!({
                        "command": "area",
                        "structure": entry.label,
                        "tau": tau,
                        "areas": [symplectic_area(s, &fam, tau, grid)?],
                        "closed_form": closed_form,
                        "grid": grid,
                    })
                }
            }
        }
        Command::AreaVariation { source, family, tau, h, grid } => {
            let entry = load(&source, defaults)?;
            let s = entry.structure()?;
            let fam = sphere_family(&entry, family.as_deref())?;
            let opts = VariationOptions {
                h: h.unwrap_or(defaults.variation.h),
                grid: sphere_grid(&grid, defaults.variation.grid)?,
                check_step: defaults.variation.check_step,
            };
            json!({
                "command": "area-variation",
                "structure": entry.label,
                "result": area_variation(s, &fam, tau, &opts)?,
                "closed_form_generator": closed(entry.oracles.generator_at(tau)),
                "options": opts,
            })
        }
        Command::Monodromy { source, family, tau, splitting, h, grid, q_bound, rational_tol, zero_tol } => {
            let entry = load(&source, defaults)?;
            let mut disc = defaults.discreteness;
            if let Some(q) = q_bound {
                disc.q_bound = q;
            }
            if let Some(t) = rational_tol {
                disc.tol = t;
            }
            if let Some(z) = zero_tol {
                disc.zero_tol = z;
            }
            let report = match entry.foliated() {
                Some(model) => abstract_periods(model, tau, &disc)?,
                None => {
                    let s = entry.structure()?;
                    let fam = sphere_family(&entry, family.as_deref())?;
                    let own;
                    let split = match splitting.as_deref() {
                        None => None,
                        Some("registry") => Some(entry.splitting.as_ref().ok_or_else(|| {
                            usage(format!("{} has no registry splitting; pass splitting JSON", entry.label))
                        })?),
                        Some(text) => {
                            own = load_splitting(text, s)?;
                            Some(&own)
                        }
                    };
                    let opts = VariationOptions {
                        h: h.unwrap_or(defaults.variation.h),
                        grid: sphere_grid(&grid, defaults.variation.grid)?,
                        check_step: defaults.variation.check_step,
                    };
                    monodromy_report(s, &fam, tau, split, &opts, &disc)?
                }
            };
            json!({ "command": "monodromy", "structure": entry.label, "report": report })
        }
        Command::Scan { source, family, tau_range, samples, threshold, grid, format } => {
            return scan(&source, family.as_deref(), tau_range.as_deref(), samples, threshold, &grid, &format, defaults);
        }
        Command::Isotropy { source, at, rank_tol } => {
            let entry = load(&source, defaults)?;
            let s = entry.structure()?;
            let x = parse_point(&at, s.dim())?;
            json!({
                "command": "isotropy",
                "structure": entry.label,
                "algebra": analyze(s, &x, rank_tol.unwrap_or(defaults.isotropy_rank_tol))?,
            })
        }
    };
    Ok(pretty(&report))
}

fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("reports serialize")
}

fn validate(source: &str, gate: JacobiGate) -> CliResult<String> {
    // Load without the gate, then apply it here so the residual is reported either way.
    let open = JacobiGate { tol: f64::INFINITY, ..gate };
    let entry = load_source(source, &open)?;
    let residual = match entry.structure() {
        Ok(s) => Some(s.jacobi_gate(gate.seed, gate.points, gate.lo, gate.hi, f64::INFINITY)?),
        Err(_) => None,
    };
    let pass = residual.is_none_or(|r| r <= gate.tol);
    let report = json!({
        "command": "validate",
        "structure": entry.label,
        "max_residual": residual,
        "pass": pass,
        "gate": gate,
    });
    if pass {
        Ok(pretty(&report))
    } else {
        eprintln!("{}", pretty(&report));
        Err(CliError::Validation(format!(
            "{}: max Jacobi residual {:e} exceeds {:e}",
            entry.label,
            residual.unwrap_or_default(),
            gate.tol
        )))
    }
}

#[allow(clippy::too_many_arguments)]
fn scan(
    source: &str,
    family: Option<&str>,
    tau_range: Option<&str>,
    samples: usize,
    threshold: Option<f64>,
    grid: &GridArgs,
    format: &str,
    defaults: &Defaults,
) -> CliResult<String> {
    if format != "csv" && format != "json" {
        return Err(usage(format!("unknown format `{format}` (csv or json)")));
    }
    let entry = load(source, defaults)?;
    let variation = VariationOptions {
        h: defaults.variation.h,
        grid: sphere_grid(grid, defaults.scan_grid)?,
        check_step: false,
    };
    let fam;
    let (src, family_range) = match entry.foliated() {
        Some(model) => (ScanSource::Abstract(model), None),
        None => {
            fam = sphere_family(&entry, family)?;
            let src = ScanSource::Chart {
                structure: entry.structure()?,
                family: &fam,
                variation,
            };
            (src, Some(fam.tau_range))
        }
    };
    let range = match (tau_range, family_range) {
        (Some(r), _) => parse_range(r)?,
        (None, Some(r)) => r,
        (None, None) => return Err(usage("--tau-range is required for abstract models")),
    };
    check_scaling_positive(&entry, range.0, range.1)?;
    let mut opts = ScanOptions::new(range, samples);
    opts.threshold = threshold.unwrap_or(defaults.scan_threshold);
    let report = integrability_scan(&src, &opts)?;
    if format == "json" {
        let grid = matches!(src, ScanSource::Chart { .. }).then_some(variation);
        return Ok(pretty(&json!({
            "command": "scan",
            "structure": entry.label,
            "report": report,
            "variation": grid,
        })));
    }
    eprintln!("verdict: {}", report.verdict);
    Ok(report.to_csv().trim_end().to_string())
}

fn load(source: &str, defaults: &Defaults) -> CliResult<RegistryEntry> {
    Ok(load_source(source, &defaults.jacobi_gate)?)
}

fn field_report(
    command: &str,
    entry: &RegistryEntry,
    s: &PoissonStructure,
    field: &VectorField,
    at: Option<&str>,
) -> CliResult<Value> {
    let value = match at {
        Some(p) => Some(field.eval(&parse_point(p, s.dim())?, s.params())?),
        None => None,
    };
    Ok(json!({
        "command": command,
        "structure": entry.label,
        "field": strings(field.components()),
        "value": value,
    }))
}

fn strings(exprs: &[Expression]) -> Vec<String> {
    exprs.iter().map(ToString::to_string).collect()
}

fn closed(values: poisson_core::Result<Vec<f64>>) -> Option<Vec<f64>> {
    values.ok().filter(|v| !v.is_empty())
}

fn ode_settings(args: &OdeArgs, defaults: &Defaults) -> CliResult<OdeSettings> {
    let mut s = defaults.ode;
    if let Some(m) = &args.method {
        s.method = m.parse()?;
    }
    if let Some(n) = args.steps {
        s.steps = n;
    }
    if let Some(v) = args.atol {
        s.atol = v;
    }
    if let Some(v) = args.rtol {
        s.rtol = v;
    }
    if let Some(v) = args.defect_tol {
        s.defect_tol = v;
    }
    s.validate()?;
    Ok(s)
}

fn sphere_grid(args: &GridArgs, default: SphereGrid) -> CliResult<SphereGrid> {
    let Some(text) = &args.grid else { return Ok(default) };
    let (a, b) = text
        .split_once(['x', 'X'])
        .ok_or_else(|| usage(format!("grid `{text}` must look like 100x200")))?;
    let parse = |s: &str| s.trim().parse::<usize>().map_err(|_| usage(format!("bad grid size `{s}`")));
    Ok(SphereGrid {
        n_theta: parse(a)?,
        n_phi: parse(b)?,
    })
}

fn sphere_family(entry: &RegistryEntry, family: Option<&str>) -> CliResult<SphereFamily> {
    match family {
        Some(text) => {
            let spec: SphereFamilySpec = serde_json::from_str(&read_json(text)?).map_err(poisson_core::Error::from)?;
            Ok(SphereFamily::from_spec(&spec, entry.structure()?.dim())?)
        }
        None => entry
            .family
            .clone()
            .ok_or_else(|| usage(format!("{} has no registry sphere family; pass --family", entry.label))),
    }
}

#[derive(Deserialize)]
struct SplittingSpec {
    frame: Vec<Vec<String>>,
    forms: Vec<Vec<String>>,
}

fn load_splitting(text: &str, s: &PoissonStructure) -> CliResult<Splitting> {
    let spec: SplittingSpec = serde_json::from_str(&read_json(text)?).map_err(poisson_core::Error::from)?;
    let exprs = |rows: &[Vec<String>]| -> CliResult<Vec<Vec<Expression>>> {
        rows.iter()
            .map(|r| r.iter().map(|e| Ok(Expression::parse(e, s.dim())?)).collect())
            .collect()
    };
    let frame = exprs(&spec.frame)?
        .into_iter()
        .map(VectorField::new)
        .collect::<Result<Vec<_>, _>>()?;
    let forms = exprs(&spec.forms)?
        .into_iter()
        .map(OneForm::new)
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Splitting::new(s, frame, forms)?)
}

fn load_path(text: &str, s: &PoissonStructure) -> CliResult<CotangentPath> {
    Ok(CotangentPath::from_json(&read_json(text)?, s)?)
}

/// Inline JSON or the contents of a file.
fn read_json(text: &str) -> CliResult<String> {
    if text.trim_start().starts_with('{') {
        Ok(text.to_string())
    } else {
        std::fs::read_to_string(text).map_err(|e| usage(format!("cannot read `{text}`: {e}")))
    }
}

fn parse_point(text: &str, dim: usize) -> CliResult<Vec<f64>> {
    let params = poisson_core::Params::new();
    let values = text
        .split(',')
        .map(|p| Expression::parse(p, dim).and_then(|e| e.eval(&vec![0.0; dim], &params)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| usage(format!("bad point `{text}`: {e}")))?;
    if values.len() != dim {
        return Err(usage(format!("point `{text}` needs {dim} coordinates")));
    }
    Ok(values)
}

fn parse_range(text: &str) -> CliResult<(f64, f64)> {
    let (a, b) = text
        .split_once(':')
        .ok_or_else(|| usage(format!("range `{text}` must look like LO:HI")))?;
    let parse = |s: &str| s.trim().parse::<f64>().map_err(|_| usage(format!("bad number `{s}`")));
    let (lo, hi) = (parse(a)?, parse(b)?);
    if !(lo < hi) {
        return Err(usage(format!("empty range `{text}`")));
    }
    Ok((lo, hi))
}
