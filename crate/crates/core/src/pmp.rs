//! Equilibrial Hamiltonians, bang-bang controls and costate dynamics.
//!
//! With zero running loss the Hamiltonian of player `i` is
//! `h_i = l_i1 . f(x1, u1) + l_i2 . f(x2, u2)`, affine in each control. Its
//! coefficient on edge `e` for the owning player is the switching function
//! `s_e = l . (B_e x) = x_S (l_T - l_S)`, so the maximizer is chosen edge by
//! edge. Costates satisfy `l' = -sum_e u_e B_e^T l` block-wise, every block
//! evolving under the controls of the player whose state it differentiates,
//! and end at `l_i(T) = grad g_i`.

use crate::dynamics::drift_into;
use crate::error::{check_len, Result};
use crate::graph::RegionGraph;
use crate::payoff::{terminal_payoff_grad, PayoffParams, Player};

/// Costates of both players: `blocks[i][j]` is player `i`'s adjoint with
/// respect to swarm `j`'s density (`d nu_i / d x_j`).
#[derive(Debug, Clone, PartialEq)]
pub struct CostatePair {
    pub blocks: [[Vec<f64>; 2]; 2],
}

impl CostatePair {
    pub fn zeros(m: usize) -> Self {
        let z = || vec![0.0; m];
        Self {
            blocks: [[z(), z()], [z(), z()]],
        }
    }

    pub fn own(&self, p: Player) -> &[f64] {
        &self.blocks[p.index()][p.index()]
    }

    pub fn cross(&self, p: Player) -> &[f64] {
        &self.blocks[p.index()][p.other().index()]
    }

    /// Terminal costates `grad g_i` at `(x1, x2)`.
    pub fn terminal(x1: &[f64], x2: &[f64], params: &PayoffParams) -> Result<Self> {
        let m = x1.len();
        let g1 = terminal_payoff_grad(Player::One, x1, x2, params)?;
        let g2 = terminal_payoff_grad(Player::Two, x1, x2, params)?;
        Ok(Self {
            blocks: [
                [g1[..m].to_vec(), g1[m..].to_vec()],
                [g2[..m].to_vec(), g2[m..].to_vec()],
            ],
        })
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.blocks.iter().flatten().flatten().copied().collect()
    }

    pub fn from_flat(m: usize, v: &[f64]) -> Self {
        let b = |k: usize| v[k * m..(k + 1) * m].to_vec();
        Self {
            blocks: [[b(0), b(1)], [b(2), b(3)]],
        }
    }
}

/// `h_i` for one player's costate row `(l_i1, l_i2)`.
pub fn hamiltonian(
    g: &RegionGraph,
    x1: &[f64],
    x2: &[f64],
    costate_row: [&[f64]; 2],
    u1: &[f64],
    u2: &[f64],
) -> Result<f64> {
    let m = g.num_regions();
    for v in [x1, x2, costate_row[0], costate_row[1]] {
        check_len("hamiltonian argument", m, v.len())?;
    }
    check_len("controls", g.num_edges(), u1.len())?;
    check_len("controls", g.num_edges(), u2.len())?;
    let mut f = vec![0.0; m];
    let mut h = 0.0;
    for (x, u, l) in [(x1, u1, costate_row[0]), (x2, u2, costate_row[1])] {
        drift_into(g, x, u, &mut f);
        h += l.iter().zip(&f).map(|(a, b)| a * b).sum::<f64>();
    }
    Ok(h)
}

/// Coefficients `s_e = l . (B_e x)` of the Hamiltonian in each edge control.
pub fn switching_functions(g: &RegionGraph, x: &[f64], costate: &[f64]) -> Vec<f64> {
    g.edges()
        .iter()
        .map(|e| x[e.source] * (costate[e.target] - costate[e.source]))
        .collect()
}

/// Bang-bang maximizer of the Hamiltonian: `u_max` where `s_e > 0`,
/// `u_min` otherwise (ties included).
pub fn optimal_controls(g: &RegionGraph, x: &[f64], costate: &[f64]) -> Vec<f64> {
    switching_functions(g, x, costate)
        .into_iter()
        .zip(g.edges())
        .map(|(s, e)| if s > 0.0 { e.u_max } else { e.u_min })
        .collect()
}

/// Writes `-sum_e u_e B_e^T l` into `out`.
pub fn costate_rhs_into(g: &RegionGraph, u: &[f64], costate: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for (e, &ue) in g.edges().iter().zip(u) {
        out[e.source] -= ue * (costate[e.target] - costate[e.source]);
    }
}

pub fn costate_rhs(g: &RegionGraph, u: &[f64], costate: &[f64]) -> Result<Vec<f64>> {
    check_len("controls", g.num_edges(), u.len())?;
    check_len("costate", g.num_regions(), costate.len())?;
    let mut out = vec![0.0; costate.len()];
    costate_rhs_into(g, u, costate, &mut out);
    Ok(out)
}

/// Layout of the stacked state `(x1, x2, l11, l12, l21, l22)`, `6M` entries.
#[derive(Debug, Clone, Copy)]
pub struct AugmentedLayout {
    pub m: usize,
}

impl AugmentedLayout {
    pub fn len(&self) -> usize {
        6 * self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    /// Offset of swarm `j`'s density.
    pub fn state(&self, j: usize) -> usize {
        j * self.m
    }

    /// Offset of costate block `l_ij`.
    pub fn costate(&self, i: usize, j: usize) -> usize {
        (2 + 2 * i + j) * self.m
    }
}

/// Stacked derivative given both players' controls.
pub fn augmented_rhs_with_controls(
    g: &RegionGraph,
    y: &[f64],
    controls: [&[f64]; 2],
    out: &mut [f64],
) {
    let lay = AugmentedLayout {
        m: g.num_regions(),
    };
    let m = lay.m;
    for j in 0..2 {
        let o = lay.state(j);
        drift_into(g, &y[o..o + m], controls[j], &mut out[o..o + m]);
    }
    for i in 0..2 {
        for j in 0..2 {
            let o = lay.costate(i, j);
            costate_rhs_into(g, controls[j], &y[o..o + m], &mut out[o..o + m]);
        }
    }
}

/// Equilibrium controls from the own-blocks, then the stacked derivative
/// `(x1', x2', l11', l12', l21', l22')`.
pub fn augmented_rhs(
    g: &RegionGraph,
    x1: &[f64],
    x2: &[f64],
    costates: &CostatePair,
) -> Result<Vec<f64>> {
    let m = g.num_regions();
    check_len("density", m, x1.len())?;
    check_len("density", m, x2.len())?;
    for v in costates.blocks.iter().flatten() {
        check_len("costate", m, v.len())?;
    }
    let u1 = optimal_controls(g, x1, costates.own(Player::One));
    let u2 = optimal_controls(g, x2, costates.own(Player::Two));
    let y = [x1.to_vec(), x2.to_vec(), costates.to_flat()].concat();
    let mut out = vec![0.0; 6 * m];
    augmented_rhs_with_controls(g, &y, [&u1, &u2], &mut out);
    Ok(out)
}
