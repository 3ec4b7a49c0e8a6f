//! Network input coordinates.
//!
//! The input is `(x1, x2, tau)` with tau the time-to-go. In reduced form the
//! last density entry of each player is dropped since it is fixed by the
//! others; gradients then map back to full-coordinate vectors whose dropped
//! entry is zero. That representative is as good as any other because only
//! differences of gradient entries along edges enter the Hamiltonian.

use ndarray::Array2;
use swarmgame_core::payoff::Player;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Coords {
    regions: usize,
    reduced: bool,
}

impl Coords {
    pub fn new(regions: usize, reduced: bool) -> Self {
        Self { regions, reduced }
    }

    pub fn regions(&self) -> usize {
        self.regions
    }

    pub fn is_reduced(&self) -> bool {
        self.reduced
    }

    /// Input entries per player.
    pub fn per_player(&self) -> usize {
        if self.reduced {
            self.regions - 1
        } else {
            self.regions
        }
    }

    pub fn input_dim(&self) -> usize {
        2 * self.per_player() + 1
    }

    pub fn tau_index(&self) -> usize {
        2 * self.per_player()
    }

    fn block(&self, player: Player) -> std::ops::Range<usize> {
        let k = self.per_player();
        let o = player.index() * k;
        o..o + k
    }

    pub fn encode_into(&self, x1: &[f64], x2: &[f64], tau: f64, out: &mut [f64]) {
        let k = self.per_player();
        out[..k].copy_from_slice(&x1[..k]);
        out[k..2 * k].copy_from_slice(&x2[..k]);
        out[2 * k] = tau;
    }

    pub fn encode(&self, x1: &[f64], x2: &[f64], tau: f64) -> Vec<f64> {
        let mut z = vec![0.0; self.input_dim()];
        self.encode_into(x1, x2, tau, &mut z);
        z
    }

    pub fn encode_batch(&self, x1s: &[Vec<f64>], x2s: &[Vec<f64>], taus: &[f64]) -> Array2<f64> {
        let mut z = Array2::zeros((x1s.len(), self.input_dim()));
        for (i, mut row) in z.rows_mut().into_iter().enumerate() {
            self.encode_into(&x1s[i], &x2s[i], taus[i], row.as_slice_mut().unwrap());
        }
        z
    }

    /// Full-coordinate gradient with respect to `player`'s density, taken
    /// from one row of the input Jacobian.
    pub fn state_gradient(&self, jac_row: &[f64], player: Player) -> Vec<f64> {
        let mut g = jac_row[self.block(player)].to_vec();
        if self.reduced {
            g.push(0.0);
        }
        g
    }

    /// Input tangent `(f1, f2, -1)` whose directional derivative is the HJI
    /// residual.
    pub fn residual_tangent(&self, f1: &[f64], f2: &[f64], out: &mut [f64]) {
        let k = self.per_player();
        out[..k].copy_from_slice(&f1[..k]);
        out[k..2 * k].copy_from_slice(&f2[..k]);
        out[2 * k] = -1.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dimensions() {
        assert_eq!(Coords::new(2, true).input_dim(), 3);
        assert_eq!(Coords::new(4, true).input_dim(), 7);
        assert_eq!(Coords::new(10, false).input_dim(), 21);
    }

    #[test]
    fn encode_and_gradient_blocks() {
        let c = Coords::new(3, true);
        let z = c.encode(&[0.2, 0.3, 0.5], &[0.6, 0.1, 0.3], 1.5);
        assert_eq!(z, vec![0.2, 0.3, 0.6, 0.1, 1.5]);
        let row = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(c.state_gradient(&row, Player::One), vec![1.0, 2.0, 0.0]);
        assert_eq!(c.state_gradient(&row, Player::Two), vec![3.0, 4.0, 0.0]);
        let full = Coords::new(2, false);
        assert_eq!(full.state_gradient(&row, Player::Two), vec![3.0, 4.0]);
    }
}
