//! Dynamic (Irons-Tuck) relaxation form of Aitken acceleration with a scalar factor.

/// State of an accelerated fixed-point iteration `x <- G(x)`.
#[derive(Debug, Clone)]
pub struct AitkenState {
    /// Iterate most recently handed to the map.
    pub current: Vec<f64>,
    /// Previous increment `G(x) - x`.
    pub previous_increment: Option<Vec<f64>>,
    pub theta: f64,
    weights: Option<Vec<f64>>,
}

impl AitkenState {
    pub fn new(initial: Vec<f64>) -> Self {
        Self {
            current: initial,
            previous_increment: None,
            theta: 1.0,
            weights: None,
        }
    }

    /// Inner products use these weights (cell volumes for Favre-consistent products).
    pub fn with_weights(initial: Vec<f64>, weights: Vec<f64>) -> Self {
        Self {
            current: initial,
            previous_increment: None,
            theta: 1.0,
            weights: Some(weights),
        }
    }

    fn dot(&self, a: &[f64], b: &[f64]) -> f64 {
        match &self.weights {
            Some(w) => a.iter().zip(b).zip(w).map(|((x, y), w)| x * y * w).sum(),
            None => a.iter().zip(b).map(|(x, y)| x * y).sum(),
        }
    }

    /// Restarts from `x` with an unrelaxed step.
    pub fn reset(&mut self, x: Vec<f64>) {
        self.current = x;
        self.previous_increment = None;
        self.theta = 1.0;
    }

    /// Takes `G(current)` and returns the next iterate `current + theta * increment`.
    pub fn next(&mut self, mapped: &[f64]) -> Vec<f64> {
        let inc: Vec<f64> = mapped
            .iter()
            .zip(&self.current)
            .map(|(g, x)| g - x)
            .collect();
        if let Some(prev) = &self.previous_increment {
            let diff: Vec<f64> = inc.iter().zip(prev).map(|(a, b)| a - b).collect();
            let denom = self.dot(&diff, &diff);
            let scale = self.dot(&inc, &inc).max(self.dot(prev, prev));
            if denom > 1e-28 * scale && denom > 1e-300 {
                let theta = -self.theta * self.dot(prev, &diff) / denom;
                self.theta = if theta.is_finite() { theta } else { 1.0 };
            } else {
                self.theta = 1.0;
            }
        }
        let next: Vec<f64> = self
            .current
            .iter()
            .zip(&inc)
            .map(|(x, d)| x + self.theta * d)
            .collect();
        self.previous_increment = Some(inc);
        self.current = next.clone();
        next
    }
}

/// One accelerated step on a sequence: given `x0`, `G(x0)`, `G(x1)` returns `x2`.
pub fn aitken_accelerate(state: &mut AitkenState, new_iterate: &[f64]) -> Vec<f64> {
    state.next(new_iterate)
}
