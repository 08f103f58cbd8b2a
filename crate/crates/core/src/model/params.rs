use serde::{Deserialize, Serialize};

use super::{Arm, Transition};
use crate::error::{Error, Result};

/// Full parameter vector on the natural scale.
///
/// Indexing is `[arm][transition]`, arm 0 = control, transition 0 = healthy to ill.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub alpha: [[f64; 3]; 2],
    pub kappa: [[f64; 3]; 2],
    pub beta: [[Vec<f64>; 3]; 2],
    /// Frailty variance.
    pub sigma: f64,
}

impl ModelParams {
    /// Parameters with every coefficient vector zero.
    pub fn with_shapes(alpha: [[f64; 3]; 2], kappa: [[f64; 3]; 2], sigma: f64, p: usize) -> Self {
        let zeros = || [vec![0.0; p], vec![0.0; p], vec![0.0; p]];
        ModelParams {
            alpha,
            kappa,
            beta: [zeros(), zeros()],
            sigma,
        }
    }

    pub fn p(&self) -> usize {
        self.beta[0][0].len()
    }

    pub fn shape(&self, z: Arm, j: Transition) -> f64 {
        self.alpha[z.index()][j.index()]
    }

    pub fn rate(&self, z: Arm, j: Transition) -> f64 {
        self.kappa[z.index()][j.index()]
    }

    pub fn coefs(&self, z: Arm, j: Transition) -> &[f64] {
        &self.beta[z.index()][j.index()]
    }

    /// `x' beta` for one arm and transition.
    pub fn linear_predictor(&self, z: Arm, j: Transition, x: &[f64]) -> f64 {
        dot(self.coefs(z, j), x)
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.p();
        for z in 0..2 {
            for j in 0..3 {
                let (a, k) = (self.alpha[z][j], self.kappa[z][j]);
                if !(a > 0.0 && a.is_finite()) {
                    return Err(Error::domain(format!("alpha[{z}][{j}] = {a} must be positive")));
                }
                if !(k > 0.0 && k.is_finite()) {
                    return Err(Error::domain(format!("kappa[{z}][{j}] = {k} must be positive")));
                }
                if self.beta[z][j].len() != p {
                    return Err(Error::domain("coefficient vectors differ in length"));
                }
                if self.beta[z][j].iter().any(|b| !b.is_finite()) {
                    return Err(Error::domain(format!("beta[{z}][{j}] is not finite")));
                }
            }
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::domain(format!("sigma = {} must be positive", self.sigma)));
        }
        Ok(())
    }

    pub fn unconstrain(&self) -> UnconstrainedParams {
        let layout = ParamLayout::new(self.p());
        let mut v = vec![0.0; layout.dim()];
        for z in Arm::BOTH {
            for j in Transition::ALL {
                v[layout.log_kappa(z, j)] = self.rate(z, j).ln();
                v[layout.log_alpha(z, j)] = self.shape(z, j).ln();
                let start = layout.beta(z, j, 0);
                v[start..start + layout.p].copy_from_slice(self.coefs(z, j));
            }
        }
        v[layout.log_sigma()] = self.sigma.ln();
        UnconstrainedParams(v)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Unconstrained sampler coordinates: `(log kappa, log alpha)` per arm and
/// transition, then every coefficient block, then `log sigma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnconstrainedParams(pub Vec<f64>);

impl UnconstrainedParams {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn constrain(&self, layout: &ParamLayout) -> Result<ModelParams> {
        if self.0.len() != layout.dim() {
            return Err(Error::domain(format!(
                "unconstrained vector has length {}, layout expects {}",
                self.0.len(),
                layout.dim()
            )));
        }
        Ok(layout.constrain(&self.0))
    }
}

/// Positions of each parameter block inside the unconstrained vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamLayout {
    pub p: usize,
}

impl ParamLayout {
    pub fn new(p: usize) -> Self {
        ParamLayout { p }
    }

    pub fn dim(&self) -> usize {
        12 + 6 * self.p + 1
    }

    fn block(z: Arm, j: Transition) -> usize {
        3 * z.index() + j.index()
    }

    pub fn log_kappa(&self, z: Arm, j: Transition) -> usize {
        2 * Self::block(z, j)
    }

    pub fn log_alpha(&self, z: Arm, j: Transition) -> usize {
        2 * Self::block(z, j) + 1
    }

    pub fn beta(&self, z: Arm, j: Transition, k: usize) -> usize {
        12 + Self::block(z, j) * self.p + k
    }

    pub fn log_sigma(&self) -> usize {
        12 + 6 * self.p
    }

    /// Maps an unconstrained slice of length `dim()` to natural parameters.
    pub fn constrain(&self, u: &[f64]) -> ModelParams {
        debug_assert_eq!(u.len(), self.dim());
        let mut params = ModelParams::with_shapes([[0.0; 3]; 2], [[0.0; 3]; 2], u[self.log_sigma()].exp(), self.p);
        for z in Arm::BOTH {
            for j in Transition::ALL {
                let (zi, ji) = (z.index(), j.index());
                params.kappa[zi][ji] = u[self.log_kappa(z, j)].exp();
                params.alpha[zi][ji] = u[self.log_alpha(z, j)].exp();
                let start = self.beta(z, j, 0);
                params.beta[zi][ji].copy_from_slice(&u[start..start + self.p]);
            }
        }
        params
    }

    /// Natural-scale parameter names, in the order of [`ParamLayout::natural_values`].
    pub fn natural_names(&self, covariates: &[String]) -> Vec<String> {
        let cov = |k: usize| {
            covariates
                .get(k)
                .cloned()
                .unwrap_or_else(|| format!("x{}", k + 1))
        };
        let mut names = Vec::with_capacity(self.dim());
        for z in Arm::BOTH {
            for j in Transition::ALL {
                names.push(format!("kappa_z{}_j{}", z.index(), j.label()));
                names.push(format!("alpha_z{}_j{}", z.index(), j.label()));
            }
        }
        for z in Arm::BOTH {
            for j in Transition::ALL {
                for k in 0..self.p {
                    names.push(format!("beta_z{}_j{}_{}", z.index(), j.label(), cov(k)));
                }
            }
        }
        names.push("sigma".to_string());
        names
    }

    /// Natural-scale values aligned with the unconstrained layout: `kappa`,
    /// `alpha` and `sigma` are exponentiated, coefficients copied.
    pub fn natural_values(&self, u: &[f64]) -> Vec<f64> {
        let mut out = u.to_vec();
        for z in Arm::BOTH {
            for j in Transition::ALL {
                out[self.log_kappa(z, j)] = u[self.log_kappa(z, j)].exp();
                out[self.log_alpha(z, j)] = u[self.log_alpha(z, j)].exp();
            }
        }
        out[self.log_sigma()] = u[self.log_sigma()].exp();
        out
    }

    /// Inverse of [`ParamLayout::natural_values`].
    pub fn params_from_natural(&self, values: &[f64]) -> Result<ModelParams> {
        if values.len() != self.dim() {
            return Err(Error::data(format!(
                "expected {} parameter values, found {}",
                self.dim(),
                values.len()
            )));
        }
        let mut params = ModelParams::with_shapes([[0.0; 3]; 2], [[0.0; 3]; 2], values[self.log_sigma()], self.p);
        for z in Arm::BOTH {
            for j in Transition::ALL {
                let (zi, ji) = (z.index(), j.index());
                params.kappa[zi][ji] = values[self.log_kappa(z, j)];
                params.alpha[zi][ji] = values[self.log_alpha(z, j)];
                let start = self.beta(z, j, 0);
                params.beta[zi][ji].copy_from_slice(&values[start..start + self.p]);
            }
        }
        params.validate()?;
        Ok(params)
    }
}
