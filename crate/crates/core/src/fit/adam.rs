//! Adam with bias correction, plus the stall-based early-stopping rule.

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    epsilon: f64,
}

impl Adam {
    pub fn new(dim: usize) -> Self {
        Self::with_epsilon(dim, EPSILON)
    }

    /// `epsilon == 0` is allowed; coordinates with a zero second moment
    /// then stay put.
    pub fn with_epsilon(dim: usize, epsilon: f64) -> Self {
        Self {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
            epsilon,
        }
    }

    pub fn step(&mut self, x: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        for i in 0..x.len() {
            let g = grad[i];
            self.m[i] = BETA1 * self.m[i] + (1.0 - BETA1) * g;
            self.v[i] = BETA2 * self.v[i] + (1.0 - BETA2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            let denom = vh.sqrt() + self.epsilon;
            if denom > 0.0 {
                x[i] -= lr * mh / denom;
            }
        }
    }
}

/// Tracks the best loss seen and counts consecutive steps that fail to
/// improve it by a relative margin.
#[derive(Debug, Clone)]
pub struct EarlyStop {
    patience: usize,
    min_relative_improvement: f64,
    best: f64,
    stalled: usize,
}

impl EarlyStop {
    pub fn new(initial_loss: f64, patience: usize, min_relative_improvement: f64) -> Self {
        Self {
            patience,
            min_relative_improvement,
            best: initial_loss,
            stalled: 0,
        }
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    /// Records a new loss. Returns `(is_new_best, should_stop)`.
    pub fn observe(&mut self, loss: f64) -> (bool, bool) {
        let threshold = self.best - self.min_relative_improvement * self.best.abs();
        if loss < threshold {
            self.stalled = 0;
        } else {
            self.stalled += 1;
        }
        let new_best = loss < self.best;
        if new_best {
            self.best = loss;
        }
        (new_best, self.patience > 0 && self.stalled >= self.patience)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_minimizes_quadratic() {
        let mut x = vec![3.0, -2.0];
        let mut opt = Adam::new(2);
        for _ in 0..2000 {
            let g = vec![2.0 * x[0], 20.0 * x[1]];
            opt.step(&mut x, &g, 0.01);
        }
        assert!(x[0].abs() < 1e-2 && x[1].abs() < 1e-2, "{x:?}");
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut x = vec![0.0];
        Adam::new(1).step(&mut x, &[123.0], 0.03);
        assert!((x[0] + 0.03).abs() < 1e-9);
    }

    #[test]
    fn zero_epsilon_is_scale_free() {
        let run = |c: f64| {
            let mut x = vec![1.0, -0.5, 0.0];
            let mut opt = Adam::with_epsilon(3, 0.0);
            for _ in 0..50 {
                let g = vec![c * 2.0 * x[0], c * 6.0 * x[1], 0.0];
                opt.step(&mut x, &g, 0.05);
            }
            x
        };
        assert_eq!(run(1.0), run(4.0));
        assert_eq!(run(1.0)[2], 0.0);
    }

    #[test]
    fn early_stop_counts_stalls() {
        let mut es = EarlyStop::new(1.0, 3, 1e-3);
        assert_eq!(es.observe(0.5), (true, false));
        assert_eq!(es.observe(0.4999999), (true, false));
        assert_eq!(es.observe(0.6), (false, false));
        assert_eq!(es.observe(0.6), (false, true));
        assert_eq!(es.best(), 0.4999999);
    }
}
