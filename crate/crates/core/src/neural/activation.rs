use serde::{Deserialize, Serialize};

/// Negative-side slope of [`Activation::LeakyRelu`].
pub const LEAKY_RELU_SLOPE: f64 = 0.01;

/// Element-wise nonlinearity applied after a dense layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Sigmoid,
    Tanh,
    LeakyRelu,
    Linear,
    /// Gaussian radial response `exp(-x²)`, i.e. [`rbf_response`] with unit
    /// width centered at zero.
    Rbf,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Activation::Tanh => x.tanh(),
            Activation::LeakyRelu => x.max(LEAKY_RELU_SLOPE * x),
            Activation::Linear => x,
            Activation::Rbf => rbf_response(x, 0.0, 1.0),
        }
    }

    /// Derivative with respect to the input.
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => {
                let s = 1.0 / (1.0 + (-x).exp());
                s * (1.0 - s)
            }
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::LeakyRelu => {
                if x > 0.0 {
                    1.0
                } else {
                    LEAKY_RELU_SLOPE
                }
            }
            Activation::Linear => 1.0,
            Activation::Rbf => -2.0 * x * (-x * x).exp(),
        }
    }
}

pub fn activation_apply(kind: Activation, x: f64) -> f64 {
    kind.apply(x)
}

/// `exp(-(σ·(r − c))²)`.
#[inline]
pub fn rbf_response(r: f64, center: f64, width: f64) -> f64 {
    let u = width * (r - center);
    (-u * u).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_values() {
        assert_eq!(activation_apply(Activation::Sigmoid, 0.0), 0.5);
        assert_eq!(rbf_response(1.3, 1.3, 4.0), 1.0);
        assert!((rbf_response(2.0, 1.0, 1.0) - 0.367_879_441_171_442_3).abs() < 1e-15);
        assert_eq!(activation_apply(Activation::Relu, -3.0), 0.0);
        assert_eq!(activation_apply(Activation::Relu, 2.0), 2.0);
        assert_eq!(activation_apply(Activation::LeakyRelu, -2.0), -0.02);
        assert_eq!(activation_apply(Activation::Linear, -2.5), -2.5);
        assert_eq!(activation_apply(Activation::Rbf, 0.0), 1.0);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let h = 1e-6;
        for kind in [
            Activation::Sigmoid,
            Activation::Tanh,
            Activation::Linear,
            Activation::Rbf,
            Activation::Relu,
            Activation::LeakyRelu,
        ] {
            for x in [-2.1, -0.4, 0.3, 1.7] {
                let fd = (kind.apply(x + h) - kind.apply(x - h)) / (2.0 * h);
                assert!((fd - kind.derivative(x)).abs() < 1e-8, "{kind:?} at {x}");
            }
        }
    }
}
