//! Terminal payoffs: the Boltzmann soft-max of the element-wise density
//! difference between the two sub-swarms.
//!
//! `S_a(v) = sum_j v_j exp(a v_j) / sum_j exp(a v_j)` with gradient
//! `p_i (1 + a (v_i - S_a(v)))`, `p = softmax(a v)`. Everything is evaluated
//! with the `max(a v)` shift so large temperatures do not overflow.

use crate::error::{check_len, Error, Result};

/// The two players of the game.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Player {
    One,
    Two,
}

impl Player {
    pub const BOTH: [Player; 2] = [Player::One, Player::Two];

    pub fn index(self) -> usize {
        match self {
            Player::One => 0,
            Player::Two => 1,
        }
    }

    pub fn other(self) -> Player {
        match self {
            Player::One => Player::Two,
            Player::Two => Player::One,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PayoffParams {
    pub alpha: f64,
}

impl Default for PayoffParams {
    fn default() -> Self {
        Self { alpha: 1.0 }
    }
}

impl PayoffParams {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha > 0.0 && alpha.is_finite() {
            Ok(Self { alpha })
        } else {
            Err(Error::InvalidArgument(format!(
                "temperature must be positive, got {alpha}"
            )))
        }
    }
}

fn softmax(v: &[f64], alpha: f64) -> Vec<f64> {
    let shift = v
        .iter()
        .map(|x| alpha * x)
        .fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = v.iter().map(|x| (alpha * x - shift).exp()).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|e| e / z).collect()
}

fn boltzmann_parts(v: &[f64], alpha: f64) -> (f64, Vec<f64>) {
    let p = softmax(v, alpha);
    let s = v.iter().zip(&p).map(|(a, b)| a * b).sum();
    (s, p)
}

pub fn boltzmann(v: &[f64], alpha: f64) -> Result<f64> {
    if v.is_empty() {
        return Err(Error::Empty("Boltzmann operator input"));
    }
    Ok(boltzmann_parts(v, alpha).0)
}

pub fn boltzmann_grad(v: &[f64], alpha: f64) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::Empty("Boltzmann operator input"));
    }
    let (s, p) = boltzmann_parts(v, alpha);
    Ok(p.iter()
        .zip(v)
        .map(|(pi, vi)| pi * (1.0 + alpha * (vi - s)))
        .collect())
}

/// Row-major `M x M` Hessian of `S_a`.
///
/// `d2S/dv_i dv_j = a p_i (d_ij - p_j)(1 + a(v_i - S)) + a p_i (d_ij - dS/dv_j)`.
pub fn boltzmann_hessian(v: &[f64], alpha: f64) -> Result<Vec<f64>> {
    let grad = boltzmann_grad(v, alpha)?;
    let (s, p) = boltzmann_parts(v, alpha);
    let m = v.len();
    let mut h = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            let dij = if i == j { 1.0 } else { 0.0 };
            h[i * m + j] = alpha * p[i] * (dij - p[j]) * (1.0 + alpha * (v[i] - s))
                + alpha * p[i] * (dij - grad[j]);
        }
    }
    Ok(h)
}

fn difference(player: Player, x1: &[f64], x2: &[f64]) -> Result<Vec<f64>> {
    check_len("opponent density", x1.len(), x2.len())?;
    let (own, other) = match player {
        Player::One => (x1, x2),
        Player::Two => (x2, x1),
    };
    Ok(own.iter().zip(other).map(|(a, b)| a - b).collect())
}

/// `g_1 = S_a(x1 - x2)`, `g_2 = S_a(x2 - x1)`.
pub fn terminal_payoff(player: Player, x1: &[f64], x2: &[f64], params: &PayoffParams) -> Result<f64> {
    boltzmann(&difference(player, x1, x2)?, params.alpha)
}

/// Gradient of `g_i` with respect to the concatenated state `(x1, x2)`.
pub fn terminal_payoff_grad(
    player: Player,
    x1: &[f64],
    x2: &[f64],
    params: &PayoffParams,
) -> Result<Vec<f64>> {
    let own = boltzmann_grad(&difference(player, x1, x2)?, params.alpha)?;
    let neg: Vec<f64> = own.iter().map(|v| -v).collect();
    Ok(match player {
        Player::One => [own, neg].concat(),
        Player::Two => [neg, own].concat(),
    })
}

/// Row-major `2M x 2M` Hessian of `g_i` with respect to `(x1, x2)`.
pub fn terminal_payoff_hessian(
    player: Player,
    x1: &[f64],
    x2: &[f64],
    params: &PayoffParams,
) -> Result<Vec<f64>> {
    let m = x1.len();
    let hs = boltzmann_hessian(&difference(player, x1, x2)?, params.alpha)?;
    // d(x_own - x_other)/dx1 is +I for player one and -I for player two; the
    // sign pattern of the Hessian blocks is the product of the two signs.
    let sign = |block: usize| -> f64 {
        match (player, block) {
            (Player::One, 0) | (Player::Two, 1) => 1.0,
            _ => -1.0,
        }
    };
    let n = 2 * m;
    let mut h = vec![0.0; n * n];
    for bi in 0..2 {
        for bj in 0..2 {
            let s = sign(bi) * sign(bj);
            for i in 0..m {
                for j in 0..m {
                    h[(bi * m + i) * n + bj * m + j] = s * hs[i * m + j];
                }
            }
        }
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-3)
    }

    fn central_diff(f: impl Fn(&[f64]) -> f64, v: &[f64], i: usize, h: f64) -> f64 {
        let mut p = v.to_vec();
        let mut m = v.to_vec();
        p[i] += h;
        m[i] -= h;
        (f(&p) - f(&m)) / (2.0 * h)
    }

    #[test]
    fn boltzmann_examples() {
        assert_eq!(boltzmann(&[0.0; 4], 3.0).unwrap(), 0.0);
        assert_abs_diff_eq!(boltzmann(&[1.0, -1.0], 1.0).unwrap(), 1f64.tanh(), epsilon = 1e-12);
        assert_abs_diff_eq!(boltzmann(&[0.3, -0.3, 0.0], 100.0).unwrap(), 0.3, epsilon = 1e-6);
        assert!(boltzmann(&[], 1.0).is_err());
        assert!(boltzmann(&[1.0, -1.0, 0.5], 1000.0).unwrap().is_finite());
    }

    #[test]
    fn gradient_at_zero_is_uniform() {
        for m in [2, 4, 10] {
            let g = boltzmann_grad(&vec![0.0; m], 1.0).unwrap();
            for gi in &g {
                assert_abs_diff_eq!(*gi, 1.0 / m as f64, epsilon = 1e-15);
            }
            let fd = central_diff(|v| boltzmann(v, 1.0).unwrap(), &vec![0.0; m], 0, 1e-5);
            assert!(rel_err(g[0], fd) < 1e-6);
        }
    }

    #[test]
    fn two_region_reduced_gradient() {
        // Along (1, -1) in the full coordinates, d/dd [d tanh d] at d = x - y.
        for d in [0.2_f64, 0.5, -0.7] {
            let g = boltzmann_grad(&[d, -d], 1.0).unwrap();
            let reduced = d.tanh() + d / d.cosh().powi(2);
            // d/dx of S(x - y, y - x) with v = (d, -d): dS/dv1 - dS/dv2.
            assert_abs_diff_eq!(g[0] - g[1], reduced, epsilon = 1e-12);
        }
        let v = [0.2, -0.2];
        let g = boltzmann_grad(&v, 1.0).unwrap();
        for i in 0..2 {
            let fd = central_diff(|v| boltzmann(v, 1.0).unwrap(), &v, i, 1e-5);
            assert!(rel_err(g[i], fd) < 1e-6);
        }
    }

    #[test]
    fn hessian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &alpha in &[1.0, 20.0] {
            for m in [2, 4] {
                let v: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
                let h = boltzmann_hessian(&v, alpha).unwrap();
                for j in 0..m {
                    let mut p = v.clone();
                    let mut q = v.clone();
                    p[j] += 1e-6;
                    q[j] -= 1e-6;
                    let gp = boltzmann_grad(&p, alpha).unwrap();
                    let gq = boltzmann_grad(&q, alpha).unwrap();
                    for i in 0..m {
                        let fd = (gp[i] - gq[i]) / 2e-6;
                        assert!((h[i * m + j] - fd).abs() < 1e-5 * (1.0 + fd.abs()));
                    }
                }
            }
        }
    }

    #[test]
    fn terminal_payoff_examples() {
        let p = PayoffParams::default();
        let x = [0.3, 0.7];
        for pl in Player::BOTH {
            assert_eq!(terminal_payoff(pl, &x, &x, &p).unwrap(), 0.0);
            assert_abs_diff_eq!(
                terminal_payoff(pl, &[1.0, 0.0], &[0.0, 1.0], &p).unwrap(),
                1f64.tanh(),
                epsilon = 1e-12
            );
        }
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let a: f64 = rng.random();
            let b: f64 = rng.random();
            let g1 = terminal_payoff(Player::One, &[a, 1.0 - a], &[b, 1.0 - b], &p).unwrap();
            assert_abs_diff_eq!(g1, (a - b) * (a - b).tanh(), epsilon = 1e-12);
        }
        assert!(terminal_payoff(Player::One, &[1.0], &[0.5, 0.5], &p).is_err());
    }

    #[test]
    fn terminal_gradient_blocks() {
        let p = PayoffParams::default();
        let g = terminal_payoff_grad(Player::One, &[0.5, 0.5], &[0.5, 0.5], &p).unwrap();
        // reduced coordinate derivative d/dx = g[0] - g[1]
        assert_abs_diff_eq!(g[0] - g[1], 0.0, epsilon = 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let x1: Vec<f64> = (0..4).map(|_| rng.random()).collect();
            let x2: Vec<f64> = (0..4).map(|_| rng.random()).collect();
            for pl in Player::BOTH {
                let g = terminal_payoff_grad(pl, &x1, &x2, &p).unwrap();
                for i in 0..4 {
                    assert_eq!(g[4 + i], -g[i]);
                }
                let joint = [x1.clone(), x2.clone()].concat();
                let f = |z: &[f64]| terminal_payoff(pl, &z[..4], &z[4..], &p).unwrap();
                for i in 0..8 {
                    let fd = central_diff(f, &joint, i, 1e-5);
                    assert!(rel_err(g[i], fd) < 1e-6, "{} vs {}", g[i], fd);
                }
            }
        }
    }

    #[test]
    fn params_reject_nonpositive_alpha() {
        assert!(PayoffParams::new(0.0).is_err());
        assert!(PayoffParams::new(20.0).is_ok());
    }
}
