//! Chart-global 1-forms and vector fields with symbolic components.

use nalgebra::DMatrix;

use crate::expr::{parse_list, Expression, Layered, Scope};
use crate::{Error, Result};

macro_rules! component_field {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name {
            components: Vec<Expression>,
            /// `partials[i][j] = ∂_j (component i)`
            partials: Vec<Vec<Expression>>,
        }

        impl $name {
            pub fn new(components: Vec<Expression>) -> Result<Self> {
                let dim = components.len();
                if dim == 0 {
                    return Err(Error::Dimension("field needs at least one component".into()));
                }
                if let Some(bad) = components.iter().find(|c| c.dim() != dim) {
                    return Err(Error::Dimension(format!(
                        "component declared over dimension {} inside a {dim}-component field",
                        bad.dim()
                    )));
                }
                let partials = components.iter().map(Expression::gradient).collect();
                Ok(Self { components, partials })
            }

            /// Parse comma-separated component expressions.
            pub fn parse(text: &str, dim: usize) -> Result<Self> {
                let comps = parse_list(text, dim)?;
                if comps.len() != dim {
                    return Err(Error::Dimension(format!(
                        "expected {dim} components, got {}",
                        comps.len()
                    )));
                }
                Self::new(comps)
            }

            pub fn zero(dim: usize) -> Self {
                Self::constant(&vec![0.0; dim])
            }

            pub fn constant(values: &[f64]) -> Self {
                let dim = values.len();
                Self::new(values.iter().map(|v| Expression::constant(*v, dim)).collect())
                    .expect("constant field is well formed")
            }

            pub fn dim(&self) -> usize {
                self.components.len()
            }

            pub fn components(&self) -> &[Expression] {
                &self.components
            }

            pub fn component(&self, i: usize) -> &Expression {
                &self.components[i]
            }

            pub fn eval(&self, x: &[f64], scope: &dyn Scope) -> Result<Vec<f64>> {
                self.components
                    .iter()
                    .map(|c| c.eval(x, scope).map_err(Error::from))
                    .collect()
            }

            /// Matrix with entry `(i, j) = ∂_j (component i)` at `x`.
            pub fn jacobian(&self, x: &[f64], scope: &dyn Scope) -> Result<DMatrix<f64>> {
                let n = self.dim();
                let mut m = DMatrix::zeros(n, n);
                for i in 0..n {
                    for j in 0..n {
                        let p = &self.partials[i][j];
                        if !p.is_zero() {
                            m[(i, j)] = p.eval(x, scope)?;
                        }
                    }
                }
                Ok(m)
            }

            /// Partial derivative of every component by a named parameter.
            pub fn diff_param(&self, name: &str) -> Self {
                Self::new(self.components.iter().map(|c| c.diff_param(name)).collect())
                    .expect("same shape")
            }
        }

        impl std::fmt::Display for $name {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                for (k, c) in self.components.iter().enumerate() {
                    if k > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{c}")?;
                }
                Ok(())
            }
        }
    };
}

component_field!(
    /// A 1-form `α = α_i dx^i`.
    OneForm
);
component_field!(
    /// A vector field `X = X^i ∂_i`.
    VectorField
);

impl OneForm {
    /// Differential `df`.
    pub fn exact(f: &Expression) -> Self {
        Self::new(f.gradient()).expect("gradient has the chart dimension")
    }

    /// Coordinate differential `dx^{k+1}`.
    pub fn coordinate(k: usize, dim: usize) -> Self {
        let mut v = vec![0.0; dim];
        v[k] = 1.0;
        Self::constant(&v)
    }
}

/// A 1-form whose components may also reference the time `t` (and, for
/// families, the homotopy parameter `eps`) as free parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeDependentOneForm {
    form: OneForm,
    dt: OneForm,
}

pub const TIME: &str = "t";
pub const EPS: &str = "eps";

impl TimeDependentOneForm {
    pub fn new(form: OneForm) -> Self {
        let dt = form.diff_param(TIME);
        Self { form, dt }
    }

    pub fn parse(text: &str, dim: usize) -> Result<Self> {
        Ok(Self::new(OneForm::parse(text, dim)?))
    }

    pub fn constant(values: &[f64]) -> Self {
        Self::new(OneForm::constant(values))
    }

    pub fn dim(&self) -> usize {
        self.form.dim()
    }

    pub fn form(&self) -> &OneForm {
        &self.form
    }

    pub fn eval(&self, t: f64, x: &[f64], base: &dyn Scope) -> Result<Vec<f64>> {
        let extra = [(TIME, t)];
        self.form.eval(x, &Layered { extra: &extra, base })
    }

    pub fn jacobian(&self, t: f64, x: &[f64], base: &dyn Scope) -> Result<DMatrix<f64>> {
        let extra = [(TIME, t)];
        self.form.jacobian(x, &Layered { extra: &extra, base })
    }

    /// Explicit time derivative `∂_t α` at `(t, x)`.
    pub fn time_derivative(&self, t: f64, x: &[f64], base: &dyn Scope) -> Result<Vec<f64>> {
        let extra = [(TIME, t)];
        self.dt.eval(x, &Layered { extra: &extra, base })
    }
}

impl From<OneForm> for TimeDependentOneForm {
    fn from(form: OneForm) -> Self {
        Self::new(form)
    }
}
