mod common;

use common::*;
use poisson_core::homotopy::{flow_by_action, solve_variation, PathFamily};
use poisson_core::numeric::max_abs_diff;
use poisson_core::paths::integrate_base;
use poisson_core::registry::{su2_constants, su3_constants};
use poisson_core::{CotangentPath, Expression, OdeSettings, TimeDependentOneForm};

fn fixed(x: &[f64]) -> Vec<Expression> {
    x.iter().map(|v| Expression::constant(*v, x.len())).collect()
}

#[test]
fn slowing_the_family_parameter_rescales_the_variation() {
    let e = su2_scaled("1+R^2");
    let s = e.structure().unwrap();
    let text = "x2 + eps*t, eps - 0.3*x1, 1 + eps*eps*x3";
    let settings = OdeSettings::default().with_steps(400);
    let x0 = [0.5, 0.3, 0.6];
    let full = PathFamily::solve(s, TimeDependentOneForm::parse(text, 3).unwrap(), fixed(&x0), 21, &settings).unwrap();
    let slow_text = text.replace("eps", "(eps/2)");
    let slow = PathFamily::solve(s, TimeDependentOneForm::parse(&slow_text, 3).unwrap(), fixed(&x0), 41, &settings).unwrap();
    let v_full = solve_variation(s, &full).unwrap();
    let v_slow = solve_variation(s, &slow).unwrap();
    // v_slow(ε) = ½ v_full(ε/2). Node 4k of the 41-point grid maps to node k of the 21-point grid.
    let mut worst = 0.0f64;
    for k in 0..=10 {
        let want: Vec<f64> = v_full.var[k].iter().map(|v| 0.5 * v).collect();
        worst = worst.max(max_abs_diff(&v_slow.var[4 * k], &want));
    }
    assert!(v_full.max_var > 1e-2, "family should have a visible variation");
    assert!(worst <= 1e-6, "{worst:e}");
}

/// `db/dt = ∂_ε a + [b, a]` with `[u, v]_k = c^{ij}_k u_i v_j`, by plain RK4.
fn lie_algebra_variation(
    c: &[Vec<Vec<f64>>],
    a: &dyn Fn(f64, f64) -> Vec<f64>,
    da: &dyn Fn(f64, f64) -> Vec<f64>,
    eps: f64,
    steps: usize,
) -> Vec<f64> {
    let n = c.len();
    let rhs = |t: f64, b: &[f64]| -> Vec<f64> {
        let (av, dv) = (a(eps, t), da(eps, t));
        (0..n)
            .map(|k| {
                let mut v = dv[k];
                for i in 0..n {
                    for j in 0..n {
                        v += c[i][j][k] * b[i] * av[j];
                    }
                }
                v
            })
            .collect()
    };
    let h = 1.0 / steps as f64;
    let mut b = vec![0.0; n];
    for s in 0..steps {
        let t = s as f64 * h;
        let axpy = |y: &[f64], k: &[f64], f: f64| y.iter().zip(k).map(|(u, v)| u + f * v).collect::<Vec<_>>();
        let k1 = rhs(t, &b);
        let k2 = rhs(t + h / 2.0, &axpy(&b, &k1, h / 2.0));
        let k3 = rhs(t + h / 2.0, &axpy(&b, &k2, h / 2.0));
        let k4 = rhs(t + h, &axpy(&b, &k3, h));
        b = (0..n).map(|i| b[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect();
    }
    b
}

fn full_constants(n: usize, table: &[((usize, usize, usize), f64)]) -> Vec<Vec<Vec<f64>>> {
    let mut c = vec![vec![vec![0.0; n]; n]; n];
    for &((i, j, k), v) in table {
        c[i][j][k] = v;
        c[j][i][k] = -v;
    }
    c
}

#[test]
fn variation_at_the_origin_solves_the_lie_algebra_equation() {
    let cases = [(su2(), su2_constants()), (entry("linear", &[("preset", "su3")]), su3_constants())];
    for (e, table) in cases {
        let s = e.structure().unwrap();
        let n = s.dim();
        // a_k = ε cos((k+1) t) + (k+1) t / n + ε² sin(t), with matching ∂_ε a.
        let text: Vec<String> = (0..n)
            .map(|k| format!("eps*cos({}*t) + {}*t/{n} + eps*eps*sin(t)", k + 1, k + 1))
            .collect();
        let a = |eps: f64, t: f64| -> Vec<f64> {
            (0..n)
                .map(|k| eps * ((k + 1) as f64 * t).cos() + (k + 1) as f64 * t / n as f64 + eps * eps * t.sin())
                .collect()
        };
        let da = |eps: f64, t: f64| -> Vec<f64> {
            (0..n).map(|k| ((k + 1) as f64 * t).cos() + 2.0 * eps * t.sin()).collect()
        };
        let gen = TimeDependentOneForm::parse(&text.join(", "), n).unwrap();
        let fam = PathFamily::solve(s, gen, fixed(&vec![0.0; n]), 11, &OdeSettings::default().with_steps(400)).unwrap();
        let var = solve_variation(s, &fam).unwrap();
        let c = full_constants(n, &table);
        let mut worst = 0.0f64;
        for (e_idx, eps) in fam.eps.iter().enumerate() {
            let want = lie_algebra_variation(&c, &a, &da, *eps, 4000);
            worst = worst.max(max_abs_diff(&var.var[e_idx], &want));
        }
        assert!(worst <= 1e-7, "{}: {worst:e}", e.label);
    }
}

fn spread(p: &CotangentPath, q: &CotangentPath) -> f64 {
    (0..p.t.len())
        .map(|k| max_abs_diff(&p.gamma[k], &q.gamma[k]).max(max_abs_diff(&p.a[k], &q.a[k])))
        .fold(0.0, f64::max)
}

#[test]
fn flow_by_action_is_first_order_in_the_step() {
    let e = su2();
    let s = e.structure().unwrap();
    let path = integrate_base(
        s,
        &TimeDependentOneForm::parse("0, 0.3, 1", 3).unwrap(),
        &[0.8, 0.1, 0.2],
        &OdeSettings::default().with_steps(400),
    )
    .unwrap();
    let eta = TimeDependentOneForm::parse("t*(1-t)*x2, t*(1-t), t*(1-t)*x1*x3", 3).unwrap();
    let total = 0.2;
    let flow = |m: usize| flow_by_action(s, &path, &eta, total / m as f64, m, 1e-2).unwrap();
    let (p1, p2, p4) = (flow(10), flow(20), flow(40));
    let (d1, d2) = (spread(&p1, &p2), spread(&p2, &p4));
    let ratio = d1 / d2;
    assert!(d1 > 0.0 && (1.6..=2.4).contains(&ratio), "{d1:e} / {d2:e} = {ratio}");
}
