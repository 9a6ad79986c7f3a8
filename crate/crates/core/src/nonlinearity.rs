//! Bounded Lipschitz nonlinearities with declared constants.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};

type VectorMap = dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync;

/// An evaluator together with its declared sup bound and Lipschitz constant.
#[derive(Clone)]
pub struct Nonlinearity {
    name: String,
    dim: usize,
    bound: f64,
    lipschitz: f64,
    eval: Arc<VectorMap>,
}

impl fmt::Debug for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Nonlinearity")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("bound", &self.bound)
            .field("lipschitz", &self.lipschitz)
            .finish()
    }
}

impl Nonlinearity {
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        bound: f64,
        lipschitz: f64,
        eval: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Domain("nonlinearity dimension must be positive".into()));
        }
        if !(bound >= 0.0 && bound.is_finite()) || !(lipschitz >= 0.0 && lipschitz.is_finite()) {
            return Err(Error::Domain(format!(
                "declared constants must be finite and non-negative (bound {bound}, lipschitz {lipschitz})"
            )));
        }
        Ok(Nonlinearity {
            name: name.into(),
            dim,
            bound,
            lipschitz,
            eval: Arc::new(eval),
        })
    }

    /// The zero map, with both constants zero.
    pub fn zero(dim: usize) -> Self {
        Nonlinearity::new("zero", dim, 0.0, 0.0, move |_| DVector::zeros(dim)).expect("zero map is valid")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.eval)(x)
    }

    /// Samples random points and point pairs and compares the observed
    /// norms and difference quotients with the declared constants.
    pub fn spot_check(&self, pairs: usize, seed: u64) -> SpotCheck {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut max_norm = 0.0_f64;
        let mut max_ratio = 0.0_f64;
        for n in 0..pairs {
            // alternate wide draws with close pairs so both regimes are probed
            let scale = [1.0, 10.0, 100.0][n % 3];
            let x = DVector::from_fn(self.dim, |_, _| rng.random_range(-scale..scale));
            let gap = if n % 2 == 0 { 1e-3 } else { scale };
            let y = &x + DVector::from_fn(self.dim, |_, _| rng.random_range(-gap..gap));
            let (fx, fy) = (self.eval(&x), self.eval(&y));
            max_norm = max_norm.max(fx.norm()).max(fy.norm());
            let dx = (&x - &y).norm();
            if dx > 0.0 {
                max_ratio = max_ratio.max((fx - fy).norm() / dx);
            }
        }
        // tiny relative slack for rounding in the evaluator itself
        let slack = 1e-12;
        SpotCheck {
            pairs,
            max_norm,
            max_ratio,
            bound_ok: max_norm <= self.bound * (1.0 + slack) + slack,
            lipschitz_ok: max_ratio <= self.lipschitz * (1.0 + 1e-9) + slack,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpotCheck {
    pub pairs: usize,
    pub max_norm: f64,
    pub max_ratio: f64,
    pub bound_ok: bool,
    pub lipschitz_ok: bool,
}

/// `arccot` with range `(0, π)`, continuous on the whole line.
pub fn arccot(x: f64) -> f64 {
    std::f64::consts::FRAC_PI_2 - x.atan()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_map_passes() {
        let z = Nonlinearity::zero(3);
        let c = z.spot_check(100, 1);
        assert!(c.bound_ok && c.lipschitz_ok);
        assert_eq!(c.max_norm, 0.0);
    }

    #[test]
    fn understated_constants_are_caught() {
        let f = Nonlinearity::new("tanh", 1, 0.5, 0.5, |x| x.map(f64::tanh)).unwrap();
        let c = f.spot_check(1000, 7);
        assert!(!c.bound_ok);
        assert!(!c.lipschitz_ok);
        let f = Nonlinearity::new("tanh", 1, 1.0, 1.0, |x| x.map(f64::tanh)).unwrap();
        let c = f.spot_check(1000, 7);
        assert!(c.bound_ok && c.lipschitz_ok);
    }

    #[test]
    fn arccot_is_continuous_and_in_range() {
        assert!((arccot(0.0) - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        assert!(arccot(1e-12) < arccot(-1e-12));
        assert!(arccot(1e300) >= 0.0 && arccot(-1e300) <= std::f64::consts::PI);
    }

    #[test]
    fn rejects_negative_constants() {
        assert!(Nonlinearity::new("bad", 1, -1.0, 1.0, |x| x.clone()).is_err());
        assert!(Nonlinearity::new("bad", 0, 1.0, 1.0, |x| x.clone()).is_err());
    }
}
