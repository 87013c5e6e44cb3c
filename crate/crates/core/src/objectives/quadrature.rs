//! Integration of intensities over inter-event intervals.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffgraph::{Tape, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureMethod {
    #[default]
    GaussLegendre,
    Trapezoid,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    pub method: QuadratureMethod,
    /// Nodes (or samples) per inter-event interval.
    pub nodes: usize,
    /// Only used by Monte Carlo.
    pub seed: u64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            method: QuadratureMethod::GaussLegendre,
            nodes: 32,
            seed: 0,
        }
    }
}

/// A quadrature rule on `[0, 1]`, built once from a [`QuadratureConfig`].
#[derive(Debug, Clone, PartialEq)]
pub struct Quadrature {
    pub config: QuadratureConfig,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, by Newton iteration on
/// the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * z * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 1 { z } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * p - pm1) / (z * z - 1.0);
            let dz = p / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

impl Quadrature {
    pub fn new(config: QuadratureConfig) -> Result<Self> {
        if config.nodes < 2 {
            return Err(Error::InvalidConfig(
                "quadrature needs at least 2 nodes".into(),
            ));
        }
        let (nodes, weights) = match config.method {
            QuadratureMethod::GaussLegendre => {
                let (x, w) = gauss_legendre(config.nodes);
                (
                    x.iter().map(|v| 0.5 * (v + 1.0)).collect(),
                    w.iter().map(|v| 0.5 * v).collect(),
                )
            }
            QuadratureMethod::Trapezoid => {
                let n = config.nodes;
                let h = 1.0 / (n - 1) as f64;
                let x = (0..n).map(|i| i as f64 * h).collect();
                let w = (0..n)
                    .map(|i| if i == 0 || i == n - 1 { 0.5 * h } else { h })
                    .collect();
                (x, w)
            }
            QuadratureMethod::MonteCarlo => (Vec::new(), Vec::new()),
        };
        Ok(Self {
            config,
            nodes,
            weights,
        })
    }

    /// Node positions and weights on `[a, b]`; Monte Carlo draws its
    /// abscissae from the stream `stream` of the configured seed.
    fn rule(&self, a: f64, b: f64, stream: u64) -> (Vec<f64>, Vec<f64>) {
        let len = b - a;
        match self.config.method {
            QuadratureMethod::MonteCarlo => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
                rng.set_stream(stream);
                let n = self.config.nodes;
                let x = (0..n).map(|_| a + len * rng.gen::<f64>()).collect();
                (x, vec![len / n as f64; n])
            }
            _ => (
                self.nodes.iter().map(|u| a + len * u).collect(),
                self.weights.iter().map(|w| len * w).collect(),
            ),
        }
    }

    fn mc_stderr(&self, a: f64, b: f64, samples: &[f64]) -> f64 {
        if self.config.method != QuadratureMethod::MonteCarlo {
            return 0.0;
        }
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (b - a) * (var / n).sqrt()
    }

    /// `∫_a^b f` with its Monte Carlo standard error (0 for deterministic rules).
    pub fn integrate(&self, f: impl Fn(f64) -> f64, a: f64, b: f64, stream: u64) -> (f64, f64) {
        if b <= a {
            return (0.0, 0.0);
        }
        let (x, w) = self.rule(a, b, stream);
        let vals: Vec<f64> = x.iter().map(|s| f(*s)).collect();
        let value = vals.iter().zip(&w).map(|(v, w)| v * w).sum();
        (value, self.mc_stderr(a, b, &vals))
    }

    /// Differentiable `∫_0^b f` where `f` builds a scalar node at each abscissa.
    pub fn integrate_on_tape<F>(
        &self,
        tape: &mut Tape,
        b: f64,
        stream: u64,
        mut f: F,
    ) -> Result<(Var, f64)>
    where
        F: FnMut(&mut Tape, f64) -> Result<Var>,
    {
        if b <= 0.0 {
            return Ok((tape.constant_scalar(0.0), 0.0));
        }
        let (x, w) = self.rule(0.0, b, stream);
        let mut terms = Vec::with_capacity(x.len());
        for s in &x {
            terms.push(f(tape, *s)?);
        }
        let vals: Vec<f64> = terms.iter().map(|v| tape.scalar(*v)).collect();
        let stderr = self.mc_stderr(0.0, b, &vals);
        Ok((tape.weighted_sum(&terms, &w)?, stderr))
    }
}

/// `∫_a^b λ` for a plain function under the given configuration.
pub fn integrate_ground_intensity(
    lambda: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    config: QuadratureConfig,
) -> Result<(f64, f64)> {
    Ok(Quadrature::new(config)?.integrate(lambda, a, b, 0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(method: QuadratureMethod, nodes: usize) -> QuadratureConfig {
        QuadratureConfig {
            method,
            nodes,
            seed: 42,
        }
    }

    #[test]
    fn constant_integrand() {
        let (v, e) =
            integrate_ground_intensity(|_| 2.0, 0.0, 0.5, QuadratureConfig::default()).unwrap();
        assert!((v - 1.0).abs() < 1e-15);
        assert_eq!(e, 0.0);
        let (v, _) =
            integrate_ground_intensity(|_| 2.0, 0.0, 0.5, cfg(QuadratureMethod::Trapezoid, 5))
                .unwrap();
        assert!((v - 1.0).abs() < 1e-15);
    }

    #[test]
    fn two_point_rule_is_exact_for_cubics() {
        let c = cfg(QuadratureMethod::GaussLegendre, 2);
        let (v, _) = integrate_ground_intensity(|s| s, 0.0, 1.0, c).unwrap();
        assert!((v - 0.5).abs() < 1e-15);
        let (v, _) = integrate_ground_intensity(|s| s * s * s - 2.0 * s * s, 0.0, 2.0, c).unwrap();
        assert!((v - (4.0 - 16.0 / 3.0)).abs() < 1e-13);
    }

    #[test]
    fn nodes_and_weights_are_consistent() {
        for n in [2, 3, 7, 32, 64] {
            let (x, w) = gauss_legendre(n);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-13);
            // exact for x^(2n-2)
            let p = 2 * n as i32 - 2;
            let integral: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(p)).sum();
            assert!((integral - 2.0 / (p as f64 + 1.0)).abs() < 1e-12, "n={n}");
        }
    }

    #[test]
    fn monte_carlo_is_reproducible_and_converges() {
        let f = |s: f64| (s * 3.0).sin() + 1.5;
        let exact = (1.0 - 3.0f64.cos()) / 3.0 + 1.5;
        let small = integrate_ground_intensity(f, 0.0, 1.0, cfg(QuadratureMethod::MonteCarlo, 400))
            .unwrap();
        let again = integrate_ground_intensity(f, 0.0, 1.0, cfg(QuadratureMethod::MonteCarlo, 400))
            .unwrap();
        assert_eq!(small, again);
        let large =
            integrate_ground_intensity(f, 0.0, 1.0, cfg(QuadratureMethod::MonteCarlo, 40000))
                .unwrap();
        // stderr shrinks like 1/sqrt(n): 100x samples -> about 10x smaller
        let ratio = small.1 / large.1;
        assert!((ratio - 10.0).abs() < 1.5, "ratio {ratio}");
        assert!((large.0 - exact).abs() < 4.0 * large.1);
    }

    #[test]
    fn tape_integral_matches_plain_integral_and_gradient() {
        let q = Quadrature::new(QuadratureConfig::default()).unwrap();
        let mut t = Tape::new();
        let a = t.constant_scalar(0.7);
        let (v, _) = q
            .integrate_on_tape(&mut t, 2.0, 0, |t, s| {
                let x = t.scale(a, s);
                Ok(t.exp(x))
            })
            .unwrap();
        let exact = ((0.7f64 * 2.0).exp() - 1.0) / 0.7;
        assert!((t.scalar(v) - exact).abs() < 1e-12);
    }

    #[test]
    fn too_few_nodes_rejected() {
        assert!(Quadrature::new(cfg(QuadratureMethod::GaussLegendre, 1)).is_err());
    }
}
