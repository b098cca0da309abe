//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use poisson_core::numeric::seeded_rng;
use poisson_core::registry::{builtin, RegistryEntry};
use poisson_core::{Expression, OneForm, PoissonStructure, VectorField};
use rand::RngExt;

pub fn args(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

pub fn entry(name: &str, pairs: &[(&str, &str)]) -> RegistryEntry {
    builtin(name, &args(pairs)).unwrap()
}

pub fn su2_scaled(a: &str) -> RegistryEntry {
    entry("su2_scaled", &[("a", a)])
}

pub fn su2() -> RegistryEntry {
    entry("linear", &[("preset", "su2")])
}

/// The chart structures of the registry used across tests.
pub fn chart_registry() -> Vec<RegistryEntry> {
    vec![
        entry("zero", &[("n", "3")]),
        entry("symplectic", &[("m", "2")]),
        su2(),
        entry("linear", &[("preset", "su3")]),
        su2_scaled("1"),
        su2_scaled("1+R^2"),
        su2_scaled("exp(R^2/5)"),
        su2_scaled("R^2"),
    ]
}

/// `Π(α, β) = Π^{jk} α_j β_k` as an expression.
fn pairing(s: &PoissonStructure, alpha: &OneForm, beta: &OneForm) -> Expression {
    let n = s.dim();
    let mut acc = Expression::zero(n);
    for j in 0..n {
        for k in 0..n {
            acc = acc + s.component(j, k) * alpha.component(j) * beta.component(k);
        }
    }
    acc
}

/// `(L_V β)_i = V^l ∂_l β_i + β_l ∂_i V^l`, expanded symbolically.
fn lie_form(v: &VectorField, beta: &OneForm) -> Vec<Expression> {
    let n = beta.dim();
    (0..n)
        .map(|i| {
            let mut acc = Expression::zero(n);
            for l in 0..n {
                acc = acc + v.component(l) * beta.component(i).diff(l).unwrap();
                acc = acc + beta.component(l) * v.component(l).diff(i).unwrap();
            }
            acc
        })
        .collect()
}

/// Bracket on 1-forms from its invariant definition
/// `[α, β] = L_{#α} β − L_{#β} α − d(Π(α, β))`.
pub fn invariant_bracket(s: &PoissonStructure, alpha: &OneForm, beta: &OneForm) -> OneForm {
    let la = lie_form(&s.sharp_form(alpha).unwrap(), beta);
    let lb = lie_form(&s.sharp_form(beta).unwrap(), alpha);
    let p = pairing(s, alpha, beta);
    let comps = (0..s.dim())
        .map(|i| &la[i] - &lb[i] - p.diff(i).unwrap())
        .collect();
    OneForm::new(comps).unwrap()
}

/// Random polynomial of low degree in `dim` variables, as source text.
pub fn random_polynomial(seed: u64, dim: usize, terms: usize) -> String {
    let mut rng = seeded_rng(seed);
    let mut parts = Vec::new();
    for _ in 0..terms {
        let c: f64 = rng.random_range(-2.0..2.0);
        let mut mono = format!("({c:.6})");
        for k in 1..=dim {
            let e: u32 = rng.random_range(0..3);
            if e > 0 {
                mono.push_str(&format!("*x{k}^{e}"));
            }
        }
        parts.push(mono);
    }
    parts.join(" + ")
}

pub fn rel_err(got: &[f64], want: &[f64]) -> f64 {
    let diff = got.iter().zip(want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let scale = want.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1.0);
    diff / scale
}
