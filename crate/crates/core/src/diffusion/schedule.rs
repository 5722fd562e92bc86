use serde::{Deserialize, Serialize};

use super::{DiffusionError, Result};

/// Variance schedule: `beta[t]` and `alpha_bar[t] = prod_{s<=t} (1 - beta[s])`.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    beta: Vec<f64>,
    alpha_bar: Vec<f64>,
}

/// Serialized form: a linear ramp of `beta` over `steps`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearSchedule {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for LinearSchedule {
    /// The usual 1e-4..0.02 over 1000 steps, rescaled to 200 steps so the
    /// endpoint `alpha_bar` still reaches (nearly) pure noise.
    fn default() -> Self {
        Self {
            steps: 200,
            beta_start: 1e-4,
            beta_end: 0.032,
        }
    }
}

impl LinearSchedule {
    pub fn build(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::linear(self.steps, self.beta_start, self.beta_end)
    }
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        LinearSchedule::default().build().expect("default schedule is valid")
    }
}

impl NoiseSchedule {
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if steps < 2 {
            return Err(DiffusionError::Schedule(format!("{steps} steps")));
        }
        let betas = (0..steps)
            .map(|i| beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64)
            .collect();
        Self::from_betas(betas)
    }

    /// Builds and validates a schedule from explicit variances.
    pub fn from_betas(beta: Vec<f64>) -> Result<Self> {
        if let Some((t, b)) = beta
            .iter()
            .enumerate()
            .find(|(_, b)| !(**b > 0.0 && **b < 1.0))
        {
            return Err(DiffusionError::Schedule(format!("beta[{t}] = {b}")));
        }
        let mut alpha_bar = Vec::with_capacity(beta.len());
        let mut acc = 1.0;
        for b in &beta {
            acc *= 1.0 - b;
            alpha_bar.push(acc);
        }
        let s = Self { beta, alpha_bar };
        s.check_endpoints()?;
        Ok(s)
    }

    fn check_endpoints(&self) -> Result<()> {
        let first = self.alpha_bar[0];
        let last = *self.alpha_bar.last().expect("nonempty");
        if first <= 0.99 {
            return Err(DiffusionError::Schedule(format!(
                "alpha_bar[0] = {first} must exceed 0.99"
            )));
        }
        if last >= 0.05 {
            return Err(DiffusionError::Schedule(format!(
                "alpha_bar[T-1] = {last} must be below 0.05"
            )));
        }
        if self.alpha_bar.windows(2).any(|w| w[1] >= w[0]) {
            return Err(DiffusionError::Schedule(
                "alpha_bar not strictly decreasing".into(),
            ));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }

    pub fn betas(&self) -> &[f64] {
        &self.beta
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }

    pub fn check(&self, t: usize) -> Result<()> {
        if t < self.len() {
            Ok(())
        } else {
            Err(DiffusionError::Timestep { t, len: self.len() })
        }
    }

    pub fn beta(&self, t: usize) -> Result<f64> {
        self.check(t)?;
        Ok(self.beta[t])
    }

    pub fn alpha_bar(&self, t: usize) -> Result<f64> {
        self.check(t)?;
        Ok(self.alpha_bar[t])
    }

    /// `steps` timesteps, evenly spaced over `[0, T-1]` with both ends
    /// included, in descending (sampling) order.
    pub fn timesteps(&self, steps: usize) -> Result<Vec<usize>> {
        let last = self.len() - 1;
        if steps == 0 || steps > self.len() {
            return Err(DiffusionError::Config(format!(
                "{steps} sampling steps for a schedule of length {}",
                self.len()
            )));
        }
        if steps == 1 {
            return Ok(vec![last]);
        }
        let mut ts: Vec<usize> = (0..steps)
            .map(|i| ((i * last) as f64 / (steps - 1) as f64).round() as usize)
            .collect();
        ts.dedup();
        ts.reverse();
        Ok(ts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_schedule_meets_endpoint_bounds() {
        let s = NoiseSchedule::default();
        assert_eq!(s.len(), 200);
        assert!(s.alpha_bars()[0] > 0.99);
        assert!(*s.alpha_bars().last().unwrap() < 0.05);
    }

    #[test]
    fn unscaled_short_schedule_is_rejected() {
        // 1e-4..0.02 over only 200 steps leaves alpha_bar near 0.13.
        assert!(NoiseSchedule::linear(200, 1e-4, 0.02).is_err());
        assert!(NoiseSchedule::linear(1000, 1e-4, 0.02).is_ok());
    }

    #[test]
    fn timesteps_include_both_ends() {
        let s = NoiseSchedule::default();
        let ts = s.timesteps(20).unwrap();
        assert_eq!(ts.len(), 20);
        assert_eq!(ts[0], 199);
        assert_eq!(*ts.last().unwrap(), 0);
        assert!(ts.windows(2).all(|w| w[0] > w[1]));
        assert_eq!(s.timesteps(200).unwrap(), (0..200).rev().collect::<Vec<_>>());
        assert!(s.timesteps(201).is_err());
    }
}
