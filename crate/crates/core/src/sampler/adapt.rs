//! Warmup adaptation: dual-averaging step size and windowed diagonal metric.

#[derive(Debug, Clone)]
pub(crate) struct DualAveraging {
    delta: f64,
    mu: f64,
    counter: f64,
    s_bar: f64,
    x_bar: f64,
}

impl DualAveraging {
    const GAMMA: f64 = 0.05;
    const T0: f64 = 10.0;
    const KAPPA: f64 = 0.75;

    pub fn new(delta: f64, step_size: f64) -> Self {
        let mut d = DualAveraging {
            delta,
            mu: 0.0,
            counter: 0.0,
            s_bar: 0.0,
            x_bar: 0.0,
        };
        d.restart(step_size);
        d
    }

    /// Re-centres the iterates at `log(10 * step_size)`.
    pub fn restart(&mut self, step_size: f64) {
        self.mu = (10.0 * step_size).ln();
        self.counter = 0.0;
        self.s_bar = 0.0;
        self.x_bar = 0.0;
    }

    pub fn update(&mut self, accept_stat: f64) -> f64 {
        self.counter += 1.0;
        let a = accept_stat.min(1.0);
        let eta = 1.0 / (self.counter + Self::T0);
        self.s_bar = (1.0 - eta) * self.s_bar + eta * (self.delta - a);
        let x = self.mu - self.s_bar * self.counter.sqrt() / Self::GAMMA;
        let x_eta = self.counter.powf(-Self::KAPPA);
        self.x_bar = (1.0 - x_eta) * self.x_bar + x_eta * x;
        x.exp()
    }

    pub fn final_step_size(&self) -> f64 {
        self.x_bar.exp()
    }
}

/// Welford accumulator of per-coordinate sample variances.
#[derive(Debug, Clone)]
struct Welford {
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Welford {
    fn new(dim: usize) -> Self {
        Welford {
            n: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    fn add(&mut self, x: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let d = v - *m;
            *m += d / n;
            *s += d * (v - *m);
        }
    }

    fn variance(&self) -> Vec<f64> {
        let denom = (self.n.max(2) - 1) as f64;
        self.m2.iter().map(|s| s / denom).collect()
    }

    fn restart(&mut self) {
        self.n = 0;
        self.mean.iter_mut().for_each(|v| *v = 0.0);
        self.m2.iter_mut().for_each(|v| *v = 0.0);
    }
}

/// Fast initial buffer, doubling slow windows for the metric, fast terminal buffer.
#[derive(Debug, Clone)]
pub(crate) struct WindowedMetric {
    num_warmup: usize,
    init_buffer: usize,
    term_buffer: usize,
    window_size: usize,
    next_window: usize,
    counter: usize,
    estimator: Welford,
    enabled: bool,
}

impl WindowedMetric {
    pub fn new(dim: usize, num_warmup: usize) -> Self {
        let (mut init_buffer, mut term_buffer, mut base_window) = (75, 50, 25);
        let enabled = num_warmup >= 20;
        if enabled && init_buffer + base_window + term_buffer > num_warmup {
            init_buffer = (0.15 * num_warmup as f64) as usize;
            term_buffer = (0.1 * num_warmup as f64) as usize;
            base_window = num_warmup - (init_buffer + term_buffer);
        }
        WindowedMetric {
            num_warmup,
            init_buffer,
            term_buffer,
            window_size: base_window,
            next_window: init_buffer + base_window - 1,
            counter: 0,
            estimator: Welford::new(dim),
            enabled,
        }
    }

    fn in_window(&self) -> bool {
        self.counter >= self.init_buffer
            && self.counter < self.num_warmup - self.term_buffer
            && self.counter != self.num_warmup
    }

    fn window_ends(&self) -> bool {
        self.counter == self.next_window && self.counter != self.num_warmup
    }

    fn advance_window(&mut self) {
        let last = self.num_warmup - self.term_buffer - 1;
        if self.next_window == last {
            return;
        }
        self.window_size *= 2;
        self.next_window = self.counter + self.window_size;
        if self.next_window != last && self.next_window + 2 * self.window_size >= self.num_warmup - self.term_buffer {
            self.next_window = last;
        }
    }

    /// Feeds one warmup draw; returns a new inverse metric at window ends.
    pub fn observe(&mut self, q: &[f64]) -> Option<Vec<f64>> {
        if !self.enabled {
            return None;
        }
        if self.in_window() {
            self.estimator.add(q);
        }
        if self.window_ends() {
            self.advance_window();
            let n = self.estimator.n as f64;
            let var = self
                .estimator
                .variance()
                .into_iter()
                .map(|v| (n / (n + 5.0)) * v + 1e-3 * (5.0 / (n + 5.0)))
                .collect();
            self.estimator.restart();
            self.counter += 1;
            return Some(var);
        }
        self.counter += 1;
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_schedule_for_default_warmup() {
        let mut w = WindowedMetric::new(1, 1000);
        let mut ends = Vec::new();
        for i in 0..1000 {
            if w.observe(&[i as f64]).is_some() {
                ends.push(i);
            }
        }
        assert_eq!(ends, vec![99, 149, 249, 449, 949]);
    }

    #[test]
    fn short_warmup_uses_proportional_buffers() {
        let mut w = WindowedMetric::new(1, 100);
        let ends: Vec<usize> = (0..100).filter(|&i| w.observe(&[i as f64]).is_some()).collect();
        assert_eq!(ends, vec![89]);
    }

    #[test]
    fn regularized_variance() {
        let mut w = WindowedMetric::new(2, 100);
        let mut last = None;
        for i in 0..100 {
            let x = [if i % 2 == 0 { 1.0 } else { -1.0 }, 3.0];
            if let Some(v) = w.observe(&x) {
                last = Some(v);
            }
        }
        let v = last.unwrap();
        // window 15..89 holds 75 draws
        let n = 75.0;
        let s2 = (37.0 * (1.0 + 1.0 / 75.0f64).powi(2) + 38.0 * (1.0 - 1.0 / 75.0f64).powi(2)) / 74.0;
        assert!((v[0] - (n / (n + 5.0) * s2 + 1e-3 * 5.0 / (n + 5.0))).abs() < 1e-12);
        assert!((v[1] - 1e-3 * 5.0 / (n + 5.0)).abs() < 1e-15);
    }

    #[test]
    fn dual_averaging_moves_toward_target() {
        let mut da = DualAveraging::new(0.8, 1.0);
        let low = da.update(0.2);
        let mut da2 = DualAveraging::new(0.8, 1.0);
        let high = da2.update(1.0);
        assert!(low < high);
    }
}
