//! Multivariate Hawkes processes with exponential kernels
//! `φ_kj(s) = α_kj exp(-β_kj s)`, simulated by Ogata's thinning.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Dataset, Event, EventSequence};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HawkesConfig {
    pub mu: Vec<f64>,
    /// Row `k` holds the excitation of mark `k` by each source mark.
    pub alpha: Vec<Vec<f64>>,
    pub beta: Vec<Vec<f64>>,
    pub horizon: f64,
}

impl HawkesConfig {
    /// Checks shapes, signs and stationarity.
    pub fn new(
        mu: Vec<f64>,
        alpha: Vec<Vec<f64>>,
        beta: Vec<Vec<f64>>,
        horizon: f64,
    ) -> Result<Self> {
        let cfg = Self {
            mu,
            alpha,
            beta,
            horizon,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn num_marks(&self) -> usize {
        self.mu.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.mu.len();
        if k == 0 {
            return Err(Error::InvalidConfig(
                "Hawkes process needs at least one mark".into(),
            ));
        }
        let square = |m: &Vec<Vec<f64>>| m.len() == k && m.iter().all(|r| r.len() == k);
        if !square(&self.alpha) || !square(&self.beta) {
            return Err(Error::InvalidConfig(format!(
                "alpha and beta must be {k}x{k}"
            )));
        }
        if self.mu.iter().any(|m| !(*m >= 0.0 && m.is_finite())) {
            return Err(Error::InvalidConfig("mu must be nonnegative".into()));
        }
        if self
            .alpha
            .iter()
            .flatten()
            .any(|a| !(*a >= 0.0 && a.is_finite()))
        {
            return Err(Error::InvalidConfig("alpha must be nonnegative".into()));
        }
        if self
            .beta
            .iter()
            .flatten()
            .any(|b| !(*b > 0.0 && b.is_finite()))
        {
            return Err(Error::InvalidConfig("beta must be positive".into()));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidConfig("horizon must be positive".into()));
        }
        let rho = self.spectral_radius();
        if rho >= 1.0 {
            return Err(Error::UnstableProcess {
                spectral_radius: rho,
            });
        }
        Ok(())
    }

    /// Spectral radius of the branching matrix `α / β`.
    pub fn spectral_radius(&self) -> f64 {
        let m: Vec<Vec<f64>> = self
            .alpha
            .iter()
            .zip(&self.beta)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x / y).collect())
            .collect();
        spectral_radius(&m)
    }

    /// Stationary mean intensity per mark, `(I - α/β)^{-1} μ`.
    pub fn stationary_rates(&self) -> Vec<f64> {
        let k = self.num_marks();
        // a = I - α/β, solved by Gaussian elimination with partial pivoting
        let mut a: Vec<Vec<f64>> = (0..k)
            .map(|i| {
                (0..k)
                    .map(|j| f64::from(u8::from(i == j)) - self.alpha[i][j] / self.beta[i][j])
                    .collect()
            })
            .collect();
        let mut b = self.mu.clone();
        for col in 0..k {
            let piv = (col..k)
                .max_by(|&x, &y| a[x][col].abs().partial_cmp(&a[y][col].abs()).unwrap())
                .unwrap();
            a.swap(col, piv);
            b.swap(col, piv);
            for row in col + 1..k {
                let f = a[row][col] / a[col][col];
                let (upper, lower) = a.split_at_mut(row);
                for (x, p) in lower[0][col..k].iter_mut().zip(&upper[col][col..k]) {
                    *x -= f * p;
                }
                b[row] -= f * b[col];
            }
        }
        let mut x = vec![0.0; k];
        for row in (0..k).rev() {
            let s: f64 = (row + 1..k).map(|c| a[row][c] * x[c]).sum();
            x[row] = (b[row] - s) / a[row][row];
        }
        x
    }
}

/// Gelfand's formula `ρ = lim ‖A^n‖^{1/n}` evaluated by repeated squaring
/// with renormalization.
fn spectral_radius(m: &[Vec<f64>]) -> f64 {
    let k = m.len();
    let mut a: Vec<Vec<f64>> = m.to_vec();
    let mut log_scale = 0.0;
    let mut power = 1.0;
    for _ in 0..48 {
        let norm = a.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        for x in a.iter_mut().flatten() {
            *x /= norm;
        }
        log_scale += norm.ln() / power;
        let mut sq = vec![vec![0.0; k]; k];
        for i in 0..k {
            for (&ail, row_l) in a[i].iter().zip(&a) {
                if ail == 0.0 {
                    continue;
                }
                for j in 0..k {
                    sq[i][j] += ail * row_l[j];
                }
            }
        }
        a = sq;
        power *= 2.0;
    }
    let norm = a.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return 0.0;
    }
    (log_scale + norm.ln() / power).exp()
}

/// Exponentially decaying excitation sums, advanced in time so intensities
/// and compensators need no pass over the full history.
#[derive(Debug, Clone)]
pub struct HawkesState<'a> {
    cfg: &'a HawkesConfig,
    time: f64,
    /// `excite[k][j] = Σ_{events i of mark j} exp(-β_kj (time - t_i))`.
    excite: Vec<Vec<f64>>,
}

impl<'a> HawkesState<'a> {
    pub fn new(cfg: &'a HawkesConfig) -> Self {
        let k = cfg.num_marks();
        Self {
            cfg,
            time: 0.0,
            excite: vec![vec![0.0; k]; k],
        }
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Per-mark intensity at `time + tau`.
    pub fn intensities_after(&self, tau: f64) -> Vec<f64> {
        let c = self.cfg;
        (0..c.num_marks())
            .map(|k| {
                c.mu[k]
                    + (0..c.num_marks())
                        .map(|j| c.alpha[k][j] * self.excite[k][j] * (-c.beta[k][j] * tau).exp())
                        .sum::<f64>()
            })
            .collect()
    }

    /// Ground compensator over `[time, time + tau]`.
    pub fn compensator_after(&self, tau: f64) -> f64 {
        let c = self.cfg;
        let mut total = 0.0;
        for k in 0..c.num_marks() {
            total += c.mu[k] * tau;
            for j in 0..c.num_marks() {
                let b = c.beta[k][j];
                total += c.alpha[k][j] / b * self.excite[k][j] * -(-b * tau).exp_m1();
            }
        }
        total
    }

    /// Moves the clock forward by `tau` without adding an event.
    pub fn advance(&mut self, tau: f64) {
        let c = self.cfg;
        for k in 0..c.num_marks() {
            for j in 0..c.num_marks() {
                self.excite[k][j] *= (-c.beta[k][j] * tau).exp();
            }
        }
        self.time += tau;
    }

    /// Registers an event of mark `mark` at the current clock.
    pub fn record(&mut self, mark: usize) {
        for row in &mut self.excite {
            row[mark] += 1.0;
        }
    }
}

fn simulate_one(cfg: &HawkesConfig, rng: &mut ChaCha8Rng) -> Vec<Event> {
    let mut state = HawkesState::new(cfg);
    let mut events = Vec::new();
    loop {
        // intensities only decay between events, so the current value bounds the future
        let bound: f64 = state.intensities_after(0.0).iter().sum();
        if bound <= 0.0 {
            break;
        }
        let u: f64 = rng.gen();
        let wait = -(1.0 - u).ln() / bound;
        if state.time() + wait > cfg.horizon {
            break;
        }
        state.advance(wait);
        let lam = state.intensities_after(0.0);
        let total: f64 = lam.iter().sum();
        let accept: f64 = rng.gen::<f64>() * bound;
        if accept <= total {
            let mut pick = rng.gen::<f64>() * total;
            let mut mark = lam.len() - 1;
            for (k, l) in lam.iter().enumerate() {
                if pick < *l {
                    mark = k;
                    break;
                }
                pick -= l;
            }
            events.push(Event {
                t: state.time(),
                k: mark,
            });
            state.record(mark);
        }
    }
    events
}

/// Draws `n_seq` sequences on `[0, horizon]`. Sequence `i` uses its own
/// ChaCha stream, so results do not depend on thread scheduling.
pub fn simulate_hawkes(cfg: &HawkesConfig, n_seq: usize, seed: u64) -> Result<Dataset> {
    cfg.validate()?;
    let sequences: Vec<EventSequence> = (0..n_seq)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            EventSequence {
                seq_id: format!("hawkes-{i}"),
                horizon: cfg.horizon,
                events: simulate_one(cfg, &mut rng),
            }
        })
        .collect();
    Dataset::new("hawkes", cfg.num_marks(), sequences)
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, Poisson};

    fn poisson(mu: Vec<f64>, horizon: f64) -> HawkesConfig {
        let k = mu.len();
        HawkesConfig::new(mu, vec![vec![0.0; k]; k], vec![vec![1.0; k]; k], horizon).unwrap()
    }

    #[test]
    fn poisson_mean_count() {
        let cfg = poisson(vec![0.3, 0.2], 10.0);
        let ds = simulate_hawkes(&cfg, 2000, 11).unwrap();
        let expected: f64 = 0.5 * 10.0;
        let mean = ds.num_events() as f64 / 2000.0;
        // standard error of the mean of Poisson(5) counts
        let se = (expected / 2000.0).sqrt();
        assert!((mean - expected).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn poisson_count_distribution_fits() {
        let cfg = poisson(vec![0.3, 0.2], 10.0);
        let ds = simulate_hawkes(&cfg, 2000, 5).unwrap();
        let pois = Poisson::new(5.0).unwrap();
        // cells 0..=1, 2, ..., 9, >=10 keep expected counts above 5
        let cell = |n: usize| n.clamp(1, 10) - 1;
        let mut observed = [0.0f64; 10];
        for s in &ds.sequences {
            observed[cell(s.len())] += 1.0;
        }
        let mut expected = [0.0f64; 10];
        for n in 0..10 {
            expected[cell(n)] += 2000.0 * pois.pmf(n as u64);
        }
        expected[9] = 2000.0 - expected[..9].iter().sum::<f64>();
        let chi2: f64 = observed
            .iter()
            .zip(&expected)
            .map(|(o, e)| (o - e).powi(2) / e)
            .sum();
        let p = 1.0 - ChiSquared::new(9.0).unwrap().cdf(chi2);
        assert!(p > 0.01, "chi2 {chi2}, p {p}");
    }

    #[test]
    fn zero_intensity_gives_empty_sequences() {
        let cfg = poisson(vec![0.0, 0.0], 10.0);
        let ds = simulate_hawkes(&cfg, 50, 1).unwrap();
        assert_eq!(ds.num_events(), 0);
        assert_eq!(ds.len(), 50);
    }

    #[test]
    fn stationary_rate_matches_formula() {
        let cfg = HawkesConfig::new(vec![0.5], vec![vec![0.4]], vec![vec![1.0]], 4000.0).unwrap();
        let ds = simulate_hawkes(&cfg, 10, 3).unwrap();
        let rate = ds.num_events() as f64 / (10.0 * 4000.0);
        let target = 0.5 / (1.0 - 0.4);
        assert!((cfg.stationary_rates()[0] - target).abs() < 1e-12);
        assert!((rate - target).abs() / target < 0.05, "rate {rate}");
    }

    #[test]
    fn unstable_configuration_rejected() {
        let r = HawkesConfig::new(vec![0.5], vec![vec![1.2]], vec![vec![1.0]], 10.0);
        assert!(matches!(r, Err(Error::UnstableProcess { .. })));
        let r = HawkesConfig::new(
            vec![0.1, 0.1],
            vec![vec![0.0, 2.0], vec![0.5, 0.0]],
            vec![vec![1.0, 1.0], vec![1.0, 1.0]],
            10.0,
        );
        // eigenvalues ±1 -> not stationary
        assert!(matches!(r, Err(Error::UnstableProcess { .. })));
    }

    #[test]
    fn spectral_radius_known_values() {
        let rho = spectral_radius(&[vec![0.3, 0.1], vec![0.1, 0.3]]);
        assert!((rho - 0.4).abs() < 1e-12);
        let rho = spectral_radius(&[vec![0.5, 1.0], vec![0.0, 0.5]]);
        assert!((rho - 0.5).abs() < 1e-9);
        assert_eq!(spectral_radius(&[vec![0.0]]), 0.0);
    }

    #[test]
    fn simulation_is_reproducible_and_valid() {
        let cfg = HawkesConfig::new(
            vec![0.4, 0.4],
            vec![vec![0.3, 0.1], vec![0.1, 0.3]],
            vec![vec![1.0, 1.0], vec![1.0, 1.0]],
            10.0,
        )
        .unwrap();
        let a = simulate_hawkes(&cfg, 30, 9).unwrap();
        let b = simulate_hawkes(&cfg, 30, 9).unwrap();
        assert_eq!(a, b);
        for s in &a.sequences {
            s.validate(2).unwrap();
        }
        assert_ne!(a, simulate_hawkes(&cfg, 30, 10).unwrap());
    }

    #[test]
    fn compensator_matches_quadrature_of_intensity() {
        let cfg = HawkesConfig::new(
            vec![0.4, 0.2],
            vec![vec![0.3, 0.1], vec![0.2, 0.3]],
            vec![vec![1.0, 2.0], vec![1.5, 1.0]],
            10.0,
        )
        .unwrap();
        let mut st = HawkesState::new(&cfg);
        st.advance(0.7);
        st.record(0);
        st.advance(0.4);
        st.record(1);
        let tau = 1.3;
        let n = 20000;
        let h = tau / n as f64;
        let mut integral = 0.0;
        for i in 0..n {
            let s = (i as f64 + 0.5) * h;
            integral += st.intensities_after(s).iter().sum::<f64>() * h;
        }
        assert!((integral - st.compensator_after(tau)).abs() < 1e-8);
    }
}
