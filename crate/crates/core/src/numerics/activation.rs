use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::Matrix;

/// Elementwise nonlinearity applied to a layer's pre-activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Linear,
}

impl Activation {
    #[inline]
    pub fn apply_scalar(self, u: f64) -> f64 {
        match self {
            Activation::Relu => u.max(0.0),
            Activation::Tanh => u.tanh(),
            Activation::Linear => u,
        }
    }

    /// Derivative with respect to the pre-activation. ReLU uses 0 at `u == 0`.
    #[inline]
    pub fn derivative_scalar(self, u: f64) -> f64 {
        match self {
            Activation::Relu => {
                if u > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = u.tanh();
                1.0 - t * t
            }
            Activation::Linear => 1.0,
        }
    }

    pub fn apply(self, u: &Matrix) -> Matrix {
        u.map(|v| self.apply_scalar(v))
    }

    pub fn derivative(self, u: &Matrix) -> Matrix {
        u.map(|v| self.derivative_scalar(v))
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Linear => "linear",
        })
    }
}

impl FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "linear" | "identity" => Ok(Activation::Linear),
            other => Err(format!("unknown activation `{other}`")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Prng;

    #[test]
    fn relu_values_and_derivative() {
        let u = Matrix::from_rows(&[[-1.0, 2.0, 0.0]]).unwrap();
        assert_eq!(Activation::Relu.apply(&u).data(), &[0.0, 2.0, 0.0]);
        assert_eq!(Activation::Relu.derivative(&u).data(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn tanh_at_zero() {
        assert_eq!(Activation::Tanh.apply_scalar(0.0), 0.0);
        assert_eq!(Activation::Tanh.derivative_scalar(0.0), 1.0);
    }

    #[test]
    fn tanh_derivative_matches_central_differences() {
        let mut rng = Prng::new(11);
        let h = 1e-5;
        for _ in 0..200 {
            let u = 4.0 * rng.normal();
            let fd = (Activation::Tanh.apply_scalar(u + h) - Activation::Tanh.apply_scalar(u - h))
                / (2.0 * h);
            assert!((fd - Activation::Tanh.derivative_scalar(u)).abs() < 1e-6);
        }
    }

    #[test]
    fn linear_is_identity() {
        assert_eq!(Activation::Linear.apply_scalar(-3.5), -3.5);
        assert_eq!(Activation::Linear.derivative_scalar(-3.5), 1.0);
    }

    #[test]
    fn parses_names() {
        assert_eq!("ReLU".parse::<Activation>().unwrap(), Activation::Relu);
        assert!("gelu".parse::<Activation>().is_err());
    }
}
