//! ADADELTA step sizes, one state per coordinate.

use serde::{Deserialize, Serialize};

pub const DEFAULT_EPSILON: f64 = 1e-6;
pub const DEFAULT_ZETA: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdadeltaState {
    pub eps: f64,
    pub zeta: f64,
    /// Running average of squared gradients.
    pub eg2: Vec<f64>,
    /// Running average of squared updates.
    pub ed2: Vec<f64>,
}

impl AdadeltaState {
    pub fn new(n: usize, eps: f64, zeta: f64) -> Self {
        Self {
            eps,
            zeta,
            eg2: vec![0.0; n],
            ed2: vec![0.0; n],
        }
    }

    /// Returns the ascent step for gradient `g`, updating both averages.
    pub fn step(&mut self, g: &[f64]) -> Vec<f64> {
        debug_assert_eq!(g.len(), self.eg2.len());
        let (eps, zeta) = (self.eps, self.zeta);
        g.iter()
            .enumerate()
            .map(|(i, &gi)| {
                self.eg2[i] = zeta * self.eg2[i] + (1.0 - zeta) * gi * gi;
                let rho = (self.ed2[i] + eps).sqrt() / (self.eg2[i] + eps).sqrt();
                let delta = rho * gi;
                self.ed2[i] = zeta * self.ed2[i] + (1.0 - zeta) * delta * delta;
                delta
            })
            .collect()
    }
}
