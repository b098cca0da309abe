//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Each exported function takes plain strings and numbers and returns a JSON
//! string. The same functions are callable from Rust, where errors come back
//! as `String`.

use std::collections::BTreeMap;

use poisson_core::isotropy::{analyze, RANK_TOL};
use poisson_core::monodromy::{integrability_scan, ScanOptions, ScanSource, SphereGrid, VariationOptions, RN};
use poisson_core::paths::integrate_base;
use poisson_core::registry::{builtin, check_scaling_positive, load_source, JacobiGate};
use poisson_core::{OdeSettings, TimeDependentOneForm};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct CurvePoint {
    tau: f64,
    area: f64,
    generator: f64,
    /// `null` when no nonzero period exists or the group is dense.
    r_n: Option<f64>,
    flag: String,
}

#[derive(Serialize)]
struct Curve {
    points: Vec<CurvePoint>,
    verdict: String,
}

/// Area and `r_N` along the round spheres of `M_a` for a user-supplied `a(R)`.
pub fn area_curve(a: &str, lo: f64, hi: f64, samples: usize) -> Result<String, String> {
    let args = BTreeMap::from([("a".to_string(), a.to_string())]);
    let entry = builtin("su2_scaled", &args).map_err(|e| e.to_string())?;
    check_scaling_positive(&entry, lo, hi).map_err(|e| e.to_string())?;
    let structure = entry.structure().map_err(|e| e.to_string())?;
    let family = entry.family.as_ref().ok_or("no sphere family")?;
    let source = ScanSource::Chart {
        structure,
        family,
        variation: VariationOptions {
            h: 1e-4,
            grid: SphereGrid { n_theta: 24, n_phi: 48 },
            check_step: false,
        },
    };
    let report = integrability_scan(&source, &ScanOptions::new((lo, hi), samples.max(20))).map_err(|e| e.to_string())?;
    let points = report
        .rows
        .iter()
        .map(|r| CurvePoint {
            tau: r.tau,
            area: r.areas[0],
            generator: r.generators[0],
            r_n: match r.r_n {
                RN::Finite(v) => Some(v),
                _ => None,
            },
            flag: r.flag.clone(),
        })
        .collect();
    json(&Curve {
        points,
        verdict: report.verdict.to_string(),
    })
}

#[derive(Serialize)]
struct Trajectory {
    points: Vec<Vec<f64>>,
    defect: f64,
    casimir: Vec<f64>,
}

/// Base path of a cotangent path on su(2)* for a generator in `t, x1, x2, x3`.
pub fn su2_trajectory(generator: &str, x0: &[f64], steps: usize) -> Result<String, String> {
    let args = BTreeMap::from([("preset".to_string(), "su2".to_string())]);
    let entry = builtin("linear", &args).map_err(|e| e.to_string())?;
    let s = entry.structure().map_err(|e| e.to_string())?;
    let gen = TimeDependentOneForm::parse(generator, 3).map_err(|e| e.to_string())?;
    let steps = steps.max(4).div_ceil(2) * 2;
    let path = integrate_base(s, &gen, x0, &OdeSettings::default().with_steps(steps)).map_err(|e| e.to_string())?;
    let casimir = path.gamma.iter().map(|x| x.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    json(&Trajectory {
        points: path.gamma,
        defect: path.defect,
        casimir,
    })
}

/// Isotropy algebra at a point of any structure source (`builtin:...` or JSON).
pub fn isotropy(source: &str, point: &[f64]) -> Result<String, String> {
    let entry = load_source(source, &JacobiGate::default()).map_err(|e| e.to_string())?;
    let s = entry.structure().map_err(|e| e.to_string())?;
    let algebra = analyze(s, point, RANK_TOL).map_err(|e| e.to_string())?;
    json(&algebra)
}

fn json<T: Serialize>(value: &T) -> Result<String, String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

#[wasm_bindgen(js_name = areaCurve)]
pub fn area_curve_js(a: &str, lo: f64, hi: f64, samples: usize) -> Result<String, JsError> {
    area_curve(a, lo, hi, samples).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = su2Trajectory)]
pub fn su2_trajectory_js(generator: &str, x0: &[f64], steps: usize) -> Result<String, JsError> {
    su2_trajectory(generator, x0, steps).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = isotropy)]
pub fn isotropy_js(source: &str, point: &[f64]) -> Result<String, JsError> {
    isotropy(source, point).map_err(|e| JsError::new(&e))
}
