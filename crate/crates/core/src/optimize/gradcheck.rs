use alloc::vec::Vec;

use crate::error::{Error, Result};

/// A differentiable scalar objective over a flat parameter vector.
pub trait GradientProvider {
    fn evaluate(&self, params: &[f64]) -> Result<f64>;
    fn gradient(&self, params: &[f64]) -> Result<Vec<f64>>;

    /// Fingerprint of the objective's discrete state (pixel coverage,
    /// nearest-neighbour picks, ...) at `params`. Finite differences are
    /// only meaningful when it is the same at both probes and the centre.
    fn regime(&self, _params: &[f64]) -> Result<u64> {
        Ok(0)
    }
}

impl<P: GradientProvider + ?Sized> GradientProvider for &P {
    fn evaluate(&self, params: &[f64]) -> Result<f64> {
        (**self).evaluate(params)
    }

    fn gradient(&self, params: &[f64]) -> Result<Vec<f64>> {
        (**self).gradient(params)
    }

    fn regime(&self, params: &[f64]) -> Result<u64> {
        (**self).regime(params)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradientReport {
    pub max_relative_error: f64,
    /// Parameter with the worst error.
    pub worst_index: usize,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    /// Parameters whose probes kept straddling a discontinuity even after
    /// shrinking the step; they are left out of the maximum.
    pub skipped: Vec<usize>,
}

/// Relative error of a single partial, with denominator
/// `max(|analytic|, |numeric|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compare the analytic gradient against central differences with step
/// `h`. When the provider reports a change of discrete regime across the
/// probes, the step is shrunk tenfold, up to three times.
pub fn check_gradients<P: GradientProvider + ?Sized>(provider: &P, params: &[f64], h: f64) -> Result<GradientReport> {
    if !(h > 0.0) {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let analytic = provider.gradient(params)?;
    if analytic.len() != params.len() {
        return Err(Error::mismatch("gradient", params.len(), analytic.len()));
    }
    let base = provider.regime(params)?;
    let mut numeric = Vec::with_capacity(params.len());
    let mut skipped = Vec::new();
    let mut x = params.to_vec();
    let (mut worst, mut worst_index) = (0.0, 0);
    for i in 0..params.len() {
        let mut step = h;
        let mut value = None;
        for _ in 0..4 {
            x[i] = params[i] + step;
            let (fp, rp) = (provider.evaluate(&x)?, provider.regime(&x)?);
            x[i] = params[i] - step;
            let (fm, rm) = (provider.evaluate(&x)?, provider.regime(&x)?);
            x[i] = params[i];
            if rp == base && rm == base {
                value = Some((fp - fm) / (2.0 * step));
                break;
            }
            step *= 0.1;
        }
        match value {
            Some(n) => {
                let e = relative_error(analytic[i], n);
                if e > worst || !e.is_finite() {
                    worst = e;
                    worst_index = i;
                }
                numeric.push(n);
            }
            None => {
                skipped.push(i);
                numeric.push(f64::NAN);
            }
        }
    }
    Ok(GradientReport {
        max_relative_error: worst,
        worst_index,
        analytic,
        numeric,
        skipped,
    })
}

/// Wraps a provider and scales its gradient; a sanity check for the
/// detector itself.
pub struct ScaledGradient<P> {
    pub inner: P,
    pub factor: f64,
}

impl<P: GradientProvider> GradientProvider for ScaledGradient<P> {
    fn evaluate(&self, params: &[f64]) -> Result<f64> {
        self.inner.evaluate(params)
    }

    fn gradient(&self, params: &[f64]) -> Result<Vec<f64>> {
        Ok(self.inner.gradient(params)?.into_iter().map(|g| g * self.factor).collect())
    }

    fn regime(&self, params: &[f64]) -> Result<u64> {
        self.inner.regime(params)
    }
}
