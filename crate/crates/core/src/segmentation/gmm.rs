use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Normal density `N(z | mean, sigma²)`.
pub fn normal_pdf(z: f64, mean: f64, sigma: f64) -> f64 {
    normal_ln_pdf(z, mean, sigma).exp()
}

fn normal_ln_pdf(z: f64, mean: f64, sigma: f64) -> f64 {
    let u = (z - mean) / sigma;
    -0.5 * u * u - sigma.ln() - LN_SQRT_2PI
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub weight: f64,
    pub mean: f64,
    pub sigma: f64,
}

/// One-dimensional Gaussian mixture with shared component weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    pub components: Vec<Component>,
}

impl GmmModel {
    pub fn new(components: Vec<Component>) -> Result<Self> {
        let m = GmmModel { components };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(Error::Config("mixture needs at least one component".into()));
        }
        for c in &self.components {
            if !(c.sigma > 0.0 && c.sigma.is_finite()) || !c.mean.is_finite() {
                return Err(Error::Config(format!("invalid component {c:?}")));
            }
            if !(0.0..=1.0).contains(&c.weight) {
                return Err(Error::Config(format!("weight {} outside [0, 1]", c.weight)));
            }
        }
        let total: f64 = self.components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("weights sum to {total}, expected 1")));
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn density(&self, z: f64) -> f64 {
        self.components
            .iter()
            .map(|c| c.weight * normal_pdf(z, c.mean, c.sigma))
            .sum()
    }

    /// Index of the component with the smallest mean (first on ties).
    pub fn nearest_component(&self) -> usize {
        let mut best = 0;
        for (k, c) in self.components.iter().enumerate() {
            if c.mean < self.components[best].mean {
                best = k;
            }
        }
        best
    }

    pub fn weights(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.weight).collect()
    }

    pub fn means(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.mean).collect()
    }

    pub fn sigmas(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.sigma).collect()
    }

    /// Posterior membership of `z`, written into `out` (length `k`).
    /// Returns the log of the mixture density at `z`.
    pub fn posterior(&self, z: f64, out: &mut [f64]) -> f64 {
        let mut max = f64::NEG_INFINITY;
        for (o, c) in out.iter_mut().zip(&self.components) {
            *o = if c.weight > 0.0 {
                c.weight.ln() + normal_ln_pdf(z, c.mean, c.sigma)
            } else {
                f64::NEG_INFINITY
            };
            max = max.max(*o);
        }
        let mut sum = 0.0;
        for o in out.iter_mut() {
            *o = (*o - max).exp();
            sum += *o;
        }
        for o in out.iter_mut() {
            *o /= sum;
        }
        max + sum.ln()
    }
}

/// Two-component starting point built from patch modes.
///
/// Both widths are a quarter of the mode range; the means sit one width
/// either side of the mean mode. Component 0 is the nearer (foreground)
/// surface.
pub fn init_gmm(modes: &[f64]) -> Result<GmmModel> {
    if modes.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 patch modes, got {}",
            modes.len()
        )));
    }
    let (lo, hi) = modes
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &z| (a.min(z), b.max(z)));
    if !(hi > lo) {
        return Err(Error::Degenerate(format!(
            "all {} patch modes equal {lo}; surface is flat",
            modes.len()
        )));
    }
    let sigma = (hi - lo) / 4.0;
    let mean = modes.iter().sum::<f64>() / modes.len() as f64;
    GmmModel::new(vec![
        Component { weight: 0.5, mean: mean - sigma, sigma },
        Component { weight: 0.5, mean: mean + sigma, sigma },
    ])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmConfig {
    /// Relative log-likelihood change that counts as converged.
    pub tol: f64,
    pub max_iter: usize,
    pub sigma_floor: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig { tol: 1e-8, max_iter: 200, sigma_floor: 0.0039 }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("EM tolerance must be > 0, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("EM max_iter must be at least 1".into()));
        }
        if !(self.sigma_floor > 0.0) {
            return Err(Error::Config(format!(
                "sigma floor must be > 0, got {}",
                self.sigma_floor
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct EmFit {
    pub model: GmmModel,
    /// Row-major `n × k` posterior memberships under `model`.
    pub responsibilities: Vec<f64>,
    pub iterations: usize,
    pub loglik: f64,
    /// Log-likelihood of every parameter set visited, starting with the
    /// initial one.
    pub history: Vec<f64>,
    pub converged: bool,
    /// Set when some component width hit the floor.
    pub sigma_clamped: bool,
}

impl EmFit {
    pub fn responsibility(&self, i: usize) -> &[f64] {
        let k = self.model.k();
        &self.responsibilities[i * k..(i + 1) * k]
    }
}

fn e_step(data: &[f64], model: &GmmModel, resp: &mut [f64]) -> Result<f64> {
    let k = model.k();
    let mut ll = 0.0;
    for (z, r) in data.iter().zip(resp.chunks_exact_mut(k)) {
        ll += model.posterior(*z, r);
    }
    if !ll.is_finite() {
        return Err(Error::Numeric(format!("log-likelihood is {ll}")));
    }
    Ok(ll)
}

/// Maximum-likelihood fit by expectation-maximisation.
///
/// Stops when the log-likelihood changes by less than `tol` relative to
/// its magnitude, or after `max_iter` updates. The returned
/// responsibilities belong to the returned model.
pub fn em_fit(data: &[f64], init: &GmmModel, cfg: &EmConfig) -> Result<EmFit> {
    cfg.validate()?;
    init.validate()?;
    if data.is_empty() {
        return Err(Error::InsufficientData("EM needs at least one feature".into()));
    }
    let k = init.k();
    let n = data.len() as f64;
    let mut model = init.clone();
    let mut resp = vec![0.0; data.len() * k];
    let mut ll = e_step(data, &model, &mut resp)?;
    let mut history = vec![ll];
    let mut converged = false;
    let mut clamped = false;
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        // M-step
        let mut next = Vec::with_capacity(k);
        for j in 0..k {
            let (mut nk, mut s1) = (0.0, 0.0);
            for (z, r) in data.iter().zip(resp.chunks_exact(k)) {
                nk += r[j];
                s1 += r[j] * z;
            }
            let prev = model.components[j];
            if nk <= f64::MIN_POSITIVE {
                // An emptied component keeps its place with zero weight.
                next.push(Component { weight: 0.0, ..prev });
                continue;
            }
            let mean = s1 / nk;
            let mut s2 = 0.0;
            for (z, r) in data.iter().zip(resp.chunks_exact(k)) {
                s2 += r[j] * (z - mean) * (z - mean);
            }
            let mut sigma = (s2 / nk).sqrt();
            if !(sigma >= cfg.sigma_floor) {
                sigma = cfg.sigma_floor;
                clamped = true;
            }
            next.push(Component { weight: nk / n, mean, sigma });
        }
        let total: f64 = next.iter().map(|c| c.weight).sum();
        for c in &mut next {
            c.weight /= total;
        }
        if next.iter().any(|c| !(c.mean.is_finite() && c.sigma.is_finite() && c.weight.is_finite())) {
            return Err(Error::Numeric("EM produced non-finite parameters".into()));
        }
        model = GmmModel { components: next };
        let prev = ll;
        ll = e_step(data, &model, &mut resp)?;
        history.push(ll);
        iterations += 1;
        if (ll - prev).abs() <= cfg.tol * prev.abs().max(1.0) {
            converged = true;
            break;
        }
    }
    Ok(EmFit {
        model,
        responsibilities: resp,
        iterations,
        loglik: ll,
        history,
        converged,
        sigma_clamped: clamped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn two(w: f64, m: [f64; 2], s: [f64; 2]) -> GmmModel {
        GmmModel::new(vec![
            Component { weight: w, mean: m[0], sigma: s[0] },
            Component { weight: 1.0 - w, mean: m[1], sigma: s[1] },
        ])
        .unwrap()
    }

    #[test]
    fn standard_normal_peak() {
        assert!((normal_pdf(0.0, 0.0, 1.0) - 0.398_942_280_401_432_7).abs() < 1e-15);
    }

    #[test]
    fn init_two_modes() {
        let m = init_gmm(&[10.0, 20.0]).unwrap();
        assert_eq!(m.means(), vec![12.5, 17.5]);
        assert_eq!(m.sigmas(), vec![2.5, 2.5]);
        assert_eq!(m.weights(), vec![0.5, 0.5]);
    }

    #[test]
    fn init_three_modes() {
        let m = init_gmm(&[0.0, 4.0, 8.0]).unwrap();
        assert_eq!(m.means(), vec![2.0, 6.0]);
        assert_eq!(m.sigmas(), vec![2.0, 2.0]);
    }

    #[test]
    fn init_rejects_flat_and_tiny_inputs() {
        assert!(matches!(init_gmm(&[3.0, 3.0, 3.0]), Err(Error::Degenerate(_))));
        assert!(matches!(init_gmm(&[3.0]), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn single_component_closed_form() {
        let init = GmmModel::new(vec![Component { weight: 1.0, mean: 5.0, sigma: 3.0 }]).unwrap();
        let fit = em_fit(&[-1.0, 0.0, 1.0], &init, &EmConfig::default()).unwrap();
        let c = fit.model.components[0];
        assert!(c.mean.abs() < 1e-15);
        assert!((c.sigma - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(c.weight, 1.0);
        assert!(fit.converged);
    }

    #[test]
    fn recovers_separated_mixture() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
        let a = Normal::new(12.0, 0.5).unwrap();
        let b = Normal::new(18.0, 0.5).unwrap();
        let data: Vec<f64> = (0..2000)
            .map(|i| if i % 2 == 0 { a.sample(&mut rng) } else { b.sample(&mut rng) })
            .collect();
        let init = init_gmm(&data).unwrap();
        let fit = em_fit(&data, &init, &EmConfig::default()).unwrap();
        let mut means = fit.model.means();
        means.sort_by(f64::total_cmp);
        assert!((means[0] - 12.0).abs() < 0.1, "{means:?}");
        assert!((means[1] - 18.0).abs() < 0.1, "{means:?}");
        assert!(fit.converged);
    }

    #[test]
    fn collapse_is_clamped_and_flagged() {
        let data = [1.0, 1.0, 1.0, 1.0, 5.0];
        let init = two(0.5, [0.5, 5.5], [1.0, 1.0]);
        let cfg = EmConfig { sigma_floor: 0.01, ..EmConfig::default() };
        let fit = em_fit(&data, &init, &cfg).unwrap();
        assert!(fit.sigma_clamped);
        assert!(fit.model.sigmas().iter().all(|&s| s >= 0.01));
    }

    #[test]
    fn nan_feature_is_numeric_failure() {
        let init = two(0.5, [0.0, 1.0], [1.0, 1.0]);
        let r = em_fit(&[0.0, f64::NAN, 1.0], &init, &EmConfig::default());
        assert!(matches!(r, Err(Error::Numeric(_))));
    }

    #[test]
    fn rejects_bad_config() {
        let init = two(0.5, [0.0, 1.0], [1.0, 1.0]);
        let cfg = EmConfig { tol: 0.0, ..EmConfig::default() };
        assert!(matches!(em_fit(&[0.0, 1.0], &init, &cfg), Err(Error::Config(_))));
    }

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn em_invariants(
            seed in 0u64..10_000,
            n in 20usize..300,
            sep in 0.0f64..5.0,
            frac in 0.1f64..0.9,
        ) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let a = Normal::new(0.0, 1.0).unwrap();
            let b = Normal::new(sep, 0.7).unwrap();
            let cut = (n as f64 * frac) as usize;
            let data: Vec<f64> = (0..n)
                .map(|i| if i < cut { a.sample(&mut rng) } else { b.sample(&mut rng) })
                .collect();
            let init = init_gmm(&data).unwrap();
            let fit = em_fit(&data, &init, &EmConfig { sigma_floor: 1e-3, ..EmConfig::default() }).unwrap();
            for w in fit.history.windows(2) {
                // Allow only rounding-level decreases.
                prop_assert!(w[1] >= w[0] - 1e-10 * w[0].abs(), "{} -> {}", w[0], w[1]);
            }
            for i in 0..n {
                let s: f64 = fit.responsibility(i).iter().sum();
                prop_assert!((s - 1.0).abs() < 1e-12);
            }
            let lo = fit.model.components.iter().map(|c| c.mean - 10.0 * c.sigma).fold(f64::INFINITY, f64::min);
            let hi = fit.model.components.iter().map(|c| c.mean + 10.0 * c.sigma).fold(f64::NEG_INFINITY, f64::max);
            let narrow = fit.model.sigmas().into_iter().fold(f64::INFINITY, f64::min);
            let steps = (((hi - lo) / narrow * 20.0) as usize).max(2000) / 2 * 2;
            let area = simpson(|z| fit.model.density(z), lo, hi, steps);
            prop_assert!((area - 1.0).abs() < 1e-6, "area {}", area);
        }

        #[test]
        fn depth_shift_equivariance(seed in 0u64..10_000, shift in -200.0f64..200.0) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let a = Normal::new(145.0, 0.02).unwrap();
            let b = Normal::new(145.3, 0.02).unwrap();
            let data: Vec<f64> = (0..200)
                .map(|i| if i % 3 == 0 { b.sample(&mut rng) } else { a.sample(&mut rng) })
                .collect();
            let shifted: Vec<f64> = data.iter().map(|z| z + shift).collect();
            let cfg = EmConfig::default();
            let f0 = em_fit(&data, &init_gmm(&data).unwrap(), &cfg).unwrap();
            let f1 = em_fit(&shifted, &init_gmm(&shifted).unwrap(), &cfg).unwrap();
            for (m0, m1) in f0.model.means().iter().zip(f1.model.means()) {
                prop_assert!((m0 + shift - m1).abs() < 1e-6, "{} {}", m0, m1);
            }
            for i in 0..data.len() {
                let r0 = f0.responsibility(i);
                let r1 = f1.responsibility(i);
                prop_assert_eq!(r0[0] >= r0[1], r1[0] >= r1[1]);
            }
        }
    }
}
