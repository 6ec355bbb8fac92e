use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dual variables of the three constraints with the slack and step size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintState {
    pub lambda: [f64; 3],
    pub eps: f64,
    pub eta: f64,
}

impl ConstraintState {
    pub fn new(eps: f64, eta: f64) -> Result<Self> {
        if !(eps.is_finite() && eta.is_finite()) || eta < 0.0 {
            return Err(Error::Validation(format!(
                "need finite eps and eta >= 0, got eps={eps}, eta={eta}"
            )));
        }
        Ok(ConstraintState {
            lambda: [0.0; 3],
            eps,
            eta,
        })
    }

    /// Constraint slacks; positive means violated.
    pub fn slack(&self, g: [f64; 3]) -> [f64; 3] {
        [g[0] - self.eps, g[1] - self.eps, 1.0 - self.eps - g[2]]
    }
}

/// Projected ascent step on the duals.
pub fn dual_update(state: &ConstraintState, g1: f64, g2: f64, g3: f64) -> ConstraintState {
    let s = state.slack([g1, g2, g3]);
    let mut next = *state;
    for k in 0..3 {
        next.lambda[k] = (state.lambda[k] + state.eta * s[k]).max(0.0);
    }
    next
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn update_examples() {
        let s = ConstraintState {
            lambda: [0.5, 0.0, 0.2],
            eps: 0.1,
            eta: 0.1,
        };
        let n = dual_update(&s, 0.3, -0.9, 1.0);
        assert!((n.lambda[0] - 0.52).abs() < 1e-12);
        assert_eq!(n.lambda[1], 0.0);
        assert!(n.lambda[2] < 0.2);
        assert!((n.lambda[2] - 0.19).abs() < 1e-12);
    }

    #[test]
    fn frozen_duals() {
        let s = ConstraintState::new(0.1, 0.0).unwrap();
        assert_eq!(dual_update(&s, 5.0, 5.0, -1.0).lambda, [0.0; 3]);
        assert!(ConstraintState::new(0.1, -1.0).is_err());
    }
}
