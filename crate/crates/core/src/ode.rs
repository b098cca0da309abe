//! Explicit Runge-Kutta integration onto a prescribed output grid.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Classical RK4, one step per output interval.
    Rk4,
    /// Dormand-Prince 5(4) with error control, hitting every output node.
    Rk45,
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rk4" => Ok(Method::Rk4),
            "rk45" | "dopri5" => Ok(Method::Rk45),
            other => Err(Error::Invalid(format!("unknown ODE method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdeSettings {
    pub method: Method,
    /// Number of uniform output intervals on `[0, 1]` (even, for Simpson quadrature).
    pub steps: usize,
    pub atol: f64,
    pub rtol: f64,
    /// Upper bound on accepted plus rejected adaptive steps.
    pub max_steps: usize,
    /// Maximum admissible cotangent defect of a produced path.
    pub defect_tol: f64,
}

impl Default for OdeSettings {
    fn default() -> Self {
        Self {
            method: Method::Rk45,
            steps: 1000,
            atol: 1e-10,
            rtol: 1e-10,
            max_steps: 1_000_000,
            defect_tol: 1e-6,
        }
    }
}

impl OdeSettings {
    pub fn rk4(steps: usize) -> Self {
        Self {
            method: Method::Rk4,
            steps,
            ..Self::default()
        }
    }

    pub fn with_steps(mut self, steps: usize) -> Self {
        self.steps = steps;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps < 4 || !self.steps.is_multiple_of(2) {
            return Err(Error::Invalid(format!(
                "step count must be even and at least 4 (got {})",
                self.steps
            )));
        }
        if !(self.atol > 0.0 && self.rtol > 0.0 && self.defect_tol > 0.0) {
            return Err(Error::Invalid("tolerances must be positive".into()));
        }
        if self.max_steps == 0 {
            return Err(Error::Invalid("max_steps must be positive".into()));
        }
        Ok(())
    }
}

/// Right-hand side `f(t, y, dy)`.
pub trait Rhs {
    fn eval(&mut self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()>;
}

impl<F> Rhs for F
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    fn eval(&mut self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        self(t, y, dy)
    }
}

fn check_finite(t: f64, y: &[f64]) -> Result<()> {
    if y.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Ode {
            t,
            reason: "solution is no longer finite".into(),
        })
    }
}

/// Solve `y' = f(t, y)` from `grid[0]` and return the solution at every grid node.
pub fn solve_on_grid<F: Rhs>(
    mut f: F,
    y0: &[f64],
    grid: &[f64],
    settings: &OdeSettings,
) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(grid.len());
    out.push(y0.to_vec());
    if grid.len() < 2 {
        return Ok(out);
    }
    match settings.method {
        Method::Rk4 => {
            let mut y = y0.to_vec();
            for w in grid.windows(2) {
                y = rk4_step(&mut f, w[0], &y, w[1] - w[0])?;
                check_finite(w[1], &y)?;
                out.push(y.clone());
            }
        }
        Method::Rk45 => {
            let mut state = Dopri {
                h: grid[1] - grid[0],
                steps: 0,
            };
            let mut y = y0.to_vec();
            for w in grid.windows(2) {
                y = state.advance(&mut f, w[0], w[1], y, settings)?;
                out.push(y.clone());
            }
        }
    }
    Ok(out)
}

pub fn rk4_step<F: Rhs>(f: &mut F, t: f64, y: &[f64], h: f64) -> Result<Vec<f64>> {
    let n = y.len();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    f.eval(t, y, &mut k1)?;
    for i in 0..n {
        tmp[i] = y[i] + 0.5 * h * k1[i];
    }
    f.eval(t + 0.5 * h, &tmp, &mut k2)?;
    for i in 0..n {
        tmp[i] = y[i] + 0.5 * h * k2[i];
    }
    f.eval(t + 0.5 * h, &tmp, &mut k3)?;
    for i in 0..n {
        tmp[i] = y[i] + h * k3[i];
    }
    f.eval(t + h, &tmp, &mut k4)?;
    Ok((0..n)
        .map(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B_HAT: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

struct Dopri {
    h: f64,
    steps: usize,
}

impl Dopri {
    fn advance<F: Rhs>(
        &mut self,
        f: &mut F,
        t0: f64,
        t1: f64,
        mut y: Vec<f64>,
        s: &OdeSettings,
    ) -> Result<Vec<f64>> {
        let n = y.len();
        let mut k = vec![vec![0.0; n]; 7];
        let mut tmp = vec![0.0; n];
        let mut t = t0;
        let span = t1 - t0;
        while t < t1 {
            self.steps += 1;
            if self.steps > s.max_steps {
                return Err(Error::Ode {
                    t,
                    reason: format!("exceeded {} steps", s.max_steps),
                });
            }
            let last = t + self.h >= t1 - 1e-12 * span.abs();
            let h = if last { t1 - t } else { self.h };
            for stage in 0..7 {
                let (prev, rest) = k.split_at_mut(stage);
                for i in 0..n {
                    let incr: f64 = prev.iter().enumerate().map(|(j, kj)| A[stage][j] * kj[i]).sum();
                    tmp[i] = y[i] + h * incr;
                }
                f.eval(t + C[stage] * h, &tmp, &mut rest[0])?;
            }
            let mut err = 0.0f64;
            let mut y_new = vec![0.0; n];
            for i in 0..n {
                let mut hi = 0.0;
                let mut lo = 0.0;
                for st in 0..7 {
                    hi += B[st] * k[st][i];
                    lo += B_HAT[st] * k[st][i];
                }
                y_new[i] = y[i] + h * hi;
                let scale = s.atol + s.rtol * y[i].abs().max(y_new[i].abs());
                err = err.max((h * (hi - lo)).abs() / scale);
            }
            if !err.is_finite() {
                return Err(Error::Ode {
                    t,
                    reason: "non-finite error estimate".into(),
                });
            }
            if err <= 1.0 {
                t = if last { t1 } else { t + h };
                y = y_new;
                check_finite(t, &y)?;
            }
            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            let proposed = h * factor;
            // Keep the carried step from collapsing onto a short final sliver.
            self.h = if last && err <= 1.0 { self.h.max(proposed) } else { proposed };
            if self.h.abs() < 1e-14 * span.abs().max(1e-300) {
                return Err(Error::Ode {
                    t,
                    reason: "step size underflow".into(),
                });
            }
        }
        Ok(y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::uniform_grid;

    fn rotation(_t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        dy[0] = y[1];
        dy[1] = -y[0];
        Ok(())
    }

    #[test]
    fn both_methods_reproduce_a_rotation() {
        let grid = uniform_grid(0.0, 1.0, 100);
        for s in [OdeSettings::rk4(100), OdeSettings::default().with_steps(100)] {
            let sol = solve_on_grid(rotation, &[1.0, 0.0], &grid, &s).unwrap();
            for (t, y) in grid.iter().zip(&sol) {
                assert!((y[0] - t.cos()).abs() < 1e-9, "{:?}", s.method);
                assert!((y[1] + t.sin()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rk4_is_fourth_order() {
        let err = |n: usize| {
            let grid = uniform_grid(0.0, 1.0, n);
            let sol = solve_on_grid(rotation, &[1.0, 0.0], &grid, &OdeSettings::rk4(n)).unwrap();
            (sol[n][0] - 1f64.cos()).abs()
        };
        let ratio = err(10) / err(20);
        assert!((ratio - 16.0).abs() < 1.5, "ratio {ratio}");
    }

    #[test]
    fn blow_up_is_reported() {
        let grid = uniform_grid(0.0, 1.0, 10);
        let f = |_t: f64, y: &[f64], dy: &mut [f64]| -> Result<()> {
            dy[0] = y[0] * y[0];
            Ok(())
        };
        let s = OdeSettings {
            max_steps: 10_000,
            ..OdeSettings::default().with_steps(10)
        };
        assert!(matches!(solve_on_grid(f, &[2.0], &grid, &s), Err(Error::Ode { .. })));
    }

    #[test]
    fn settings_validation() {
        assert!(OdeSettings::default().validate().is_ok());
        assert!(OdeSettings::rk4(7).validate().is_err());
        assert_eq!("RK4".parse::<Method>().unwrap(), Method::Rk4);
    }
}
