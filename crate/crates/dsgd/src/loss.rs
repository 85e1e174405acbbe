//! Loss models and the regularized local subgradient.

use serde::{Deserialize, Serialize};

use crate::data::ExampleRef;

/// Convex margin loss `ℓ(z)` applied to `z = wᵀx` with label-scaled `x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Loss {
    /// `(1 - z)_+`; the subgradient at the kink `z = 1` is taken as 0.
    Hinge,
    /// `((1 - z)_+)²`; differentiable everywhere.
    SquaredHinge,
}

impl Loss {
    #[inline]
    pub fn value(self, z: f64) -> f64 {
        match self {
            Loss::Hinge => (1.0 - z).max(0.0),
            Loss::SquaredHinge => {
                let h = (1.0 - z).max(0.0);
                h * h
            }
        }
    }

    /// An element of the subdifferential `∂ℓ(z)`.
    #[inline]
    pub fn subgradient(self, z: f64) -> f64 {
        match self {
            Loss::Hinge => {
                if z < 1.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            Loss::SquaredHinge => {
                if z < 1.0 {
                    -2.0 * (1.0 - z)
                } else {
                    0.0
                }
            }
        }
    }

    /// Global Lipschitz constant of `ℓ`, when one exists. The squared hinge
    /// is only Lipschitz on bounded sets, so callers track the largest
    /// observed `|∂ℓ|` instead.
    pub fn lipschitz(self) -> Option<f64> {
        match self {
            Loss::Hinge => Some(1.0),
            Loss::SquaredHinge => None,
        }
    }
}

impl std::str::FromStr for Loss {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hinge" => Ok(Loss::Hinge),
            "squared-hinge" => Ok(Loss::SquaredHinge),
            other => Err(crate::Error::InvalidArgument(format!("unknown loss {other:?}"))),
        }
    }
}

/// `∂ℓ(wᵀx)·x + μw`, materialized as a dense vector.
pub fn local_subgradient(loss: Loss, mu: f64, w: &[f64], example: ExampleRef<'_>) -> Vec<f64> {
    let z = example.dot(w);
    let coeff = loss.subgradient(z);
    let mut g: Vec<f64> = w.iter().map(|&wi| mu * wi).collect();
    example.add_scaled(coeff, &mut g);
    g
}
