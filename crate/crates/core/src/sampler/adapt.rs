//! Warmup adaptation: dual-averaging step size and a windowed diagonal metric.

#[derive(Debug, Clone)]
pub(crate) struct DualAveraging {
    target: f64,
    mu: f64,
    s_bar: f64,
    x_bar: f64,
    counter: f64,
}

const GAMMA: f64 = 0.05;
const T0: f64 = 10.0;
const KAPPA: f64 = 0.75;

impl DualAveraging {
    pub fn new(target: f64, step_size: f64) -> Self {
        let mut da = Self {
            target,
            mu: 0.0,
            s_bar: 0.0,
            x_bar: 0.0,
            counter: 0.0,
        };
        da.restart(step_size);
        da
    }

    pub fn restart(&mut self, step_size: f64) {
        self.mu = (10.0 * step_size).ln();
        self.s_bar = 0.0;
        self.x_bar = 0.0;
        self.counter = 0.0;
    }

    /// Feeds one acceptance statistic and returns the next step size.
    pub fn update(&mut self, accept_stat: f64) -> f64 {
        self.counter += 1.0;
        let stat = accept_stat.min(1.0);
        let eta = 1.0 / (self.counter + T0);
        self.s_bar = (1.0 - eta) * self.s_bar + eta * (self.target - stat);
        let x = self.mu - self.s_bar * self.counter.sqrt() / GAMMA;
        let x_eta = self.counter.powf(-KAPPA);
        self.x_bar = (1.0 - x_eta) * self.x_bar + x_eta * x;
        x.exp()
    }

    pub fn final_step_size(&self) -> f64 {
        self.x_bar.exp()
    }
}

/// Running mean/variance per coordinate.
#[derive(Debug, Clone)]
struct Welford {
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Welford {
    fn new(dim: usize) -> Self {
        Self {
            n: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    fn push(&mut self, x: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let d = v - *m;
            *m += d / n;
            *s += d * (v - *m);
        }
    }

    /// Sample variance shrunk towards `1e-3`.
    fn regularized_variance(&self) -> Vec<f64> {
        let n = self.n as f64;
        self.m2
            .iter()
            .map(|s| {
                let var = s / (n - 1.0);
                (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))
            })
            .collect()
    }

    fn restart(&mut self) {
        self.n = 0;
        self.mean.iter_mut().for_each(|m| *m = 0.0);
        self.m2.iter_mut().for_each(|m| *m = 0.0);
    }
}

/// Slow-window schedule: an initial fast buffer, doubling metric windows and
/// a terminal fast buffer.
#[derive(Debug, Clone)]
pub(crate) struct WindowedAdaptation {
    warmup: usize,
    init_buffer: usize,
    term_buffer: usize,
    window_size: usize,
    window_end: usize,
    estimator: Welford,
}

impl WindowedAdaptation {
    pub fn new(dim: usize, warmup: usize) -> Self {
        let (mut init_buffer, mut term_buffer, mut base_window) = (75, 50, 25);
        if init_buffer + base_window + term_buffer > warmup {
            init_buffer = (0.15 * warmup as f64) as usize;
            term_buffer = (0.1 * warmup as f64) as usize;
            base_window = warmup - (init_buffer + term_buffer);
        }
        let mut w = Self {
            warmup,
            init_buffer,
            term_buffer,
            window_size: base_window,
            window_end: init_buffer + base_window,
            estimator: Welford::new(dim),
        };
        w.clip_last_window();
        w
    }

    fn clip_last_window(&mut self) {
        let slow_end = self.warmup - self.term_buffer;
        let next_end = self.window_end + 2 * self.window_size;
        if next_end > slow_end {
            self.window_end = slow_end;
        }
    }

    fn in_slow_phase(&self, iter: usize) -> bool {
        iter >= self.init_buffer && iter < self.warmup - self.term_buffer
    }

    /// Records the draw of warmup iteration `iter` (0-based). Returns a new
    /// inverse metric when a slow window closes.
    pub fn observe(&mut self, iter: usize, x: &[f64]) -> Option<Vec<f64>> {
        if !self.in_slow_phase(iter) {
            return None;
        }
        self.estimator.push(x);
        if iter + 1 != self.window_end {
            return None;
        }
        let var = self.estimator.regularized_variance();
        self.estimator.restart();
        self.window_size *= 2;
        self.window_end += self.window_size;
        self.clip_last_window();
        Some(var)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_schedule_for_default_warmup() {
        let mut w = WindowedAdaptation::new(1, 1000);
        let ends: Vec<usize> = (0..1000).filter(|&i| w.observe(i, &[i as f64]).is_some()).map(|i| i + 1).collect();
        assert_eq!(ends, vec![100, 150, 250, 450, 950]);
    }

    #[test]
    fn short_warmup_still_closes_a_window() {
        let mut w = WindowedAdaptation::new(1, 150);
        let ends: Vec<usize> = (0..150).filter(|&i| w.observe(i, &[i as f64]).is_some()).map(|i| i + 1).collect();
        assert_eq!(ends, vec![100]);
        let mut w = WindowedAdaptation::new(1, 100);
        let ends: Vec<usize> = (0..100).filter(|&i| w.observe(i, &[i as f64]).is_some()).map(|i| i + 1).collect();
        assert_eq!(ends, vec![90]);
    }

    #[test]
    fn dual_averaging_moves_towards_target() {
        let mut da = DualAveraging::new(0.8, 1.0);
        let mut eps = 1.0;
        for _ in 0..50 {
            eps = da.update(0.2);
        }
        assert!(eps < 1.0);
        let mut da = DualAveraging::new(0.8, 1.0);
        for _ in 0..50 {
            eps = da.update(1.0);
        }
        assert!(eps > 1.0);
    }
}
