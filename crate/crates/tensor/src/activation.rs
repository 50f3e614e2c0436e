use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::str::FromStr;

use crate::error::TensorError;

/// Lower bound of the randomized leaky slope.
pub const RRELU_LOWER: f64 = 1.0 / 8.0;
/// Upper bound of the randomized leaky slope.
pub const RRELU_UPPER: f64 = 1.0 / 3.0;
/// Negative-side slope used by the deterministic RReLU, `(lower + upper) / 2`.
pub const RRELU_SLOPE: f64 = (RRELU_LOWER + RRELU_UPPER) / 2.0;

/// Pointwise nonlinearities supported by the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    /// Leaky ReLU with the fixed mid-point slope, i.e. RReLU in evaluation form.
    RReluEval,
    Tanh,
    Gelu,
    Sigmoid,
    Relu,
    Cos,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::RReluEval => {
                if x >= 0.0 {
                    x
                } else {
                    RRELU_SLOPE * x
                }
            }
            Activation::Tanh => x.tanh(),
            Activation::Gelu => 0.5 * x * (1.0 + libm::erf(x * FRAC_1_SQRT_2)),
            Activation::Sigmoid => sigmoid(x),
            Activation::Relu => x.max(0.0),
            Activation::Cos => x.cos(),
        }
    }

    /// Derivative at `x`, given the forward output `y = apply(x)`.
    pub fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::RReluEval => {
                if x >= 0.0 {
                    1.0
                } else {
                    RRELU_SLOPE
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Gelu => {
                let cdf = 0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2));
                let pdf = (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
                cdf + x * pdf
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Cos => -x.sin(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::RReluEval => "rrelu-eval",
            Activation::Tanh => "tanh",
            Activation::Gelu => "gelu",
            Activation::Sigmoid => "sigmoid",
            Activation::Relu => "relu",
            Activation::Cos => "cos",
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = TensorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "rrelu-eval" | "rrelu" => Activation::RReluEval,
            "tanh" => Activation::Tanh,
            "gelu" => Activation::Gelu,
            "sigmoid" => Activation::Sigmoid,
            "relu" => Activation::Relu,
            "cos" => Activation::Cos,
            other => {
                return Err(TensorError::InvalidArgument {
                    op: "activation",
                    detail: format!("unknown activation tag {other:?}"),
                })
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zeros_map_to_zero() {
        assert_eq!(Activation::RReluEval.apply(0.0), 0.0);
        assert_eq!(Activation::Tanh.apply(0.0), 0.0);
        assert_eq!(Activation::Gelu.apply(0.0), 0.0);
        assert_eq!(Activation::Relu.apply(0.0), 0.0);
        assert_eq!(Activation::Sigmoid.apply(0.0), 0.5);
    }

    #[test]
    fn rrelu_uses_midpoint_slope() {
        assert!((Activation::RReluEval.apply(-1.0) + 11.0 / 48.0).abs() < 1e-15);
        assert_eq!(Activation::RReluEval.apply(2.0), 2.0);
    }

    #[test]
    fn gelu_derivative_matches_central_difference() {
        let h = 1e-5;
        for &x in &[0.5, -1.3, 2.0, 0.0] {
            let numeric = (Activation::Gelu.apply(x + h) - Activation::Gelu.apply(x - h)) / (2.0 * h);
            let analytic = Activation::Gelu.derivative(x, Activation::Gelu.apply(x));
            assert!((numeric - analytic).abs() < 1e-6, "x={x}: {numeric} vs {analytic}");
        }
    }

    #[test]
    fn unknown_tag_is_rejected() {
        assert!("swish".parse::<Activation>().is_err());
        assert_eq!("tanh".parse::<Activation>().unwrap(), Activation::Tanh);
    }
}
