//! Nash equilibria of finite two-player stage games by support enumeration.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Feasibility tolerance for probabilities and best-response checks.
pub const FEASIBILITY_TOL: f64 = 1e-9;
/// Largest supported dimension on either side.
pub const MAX_ACTIONS: usize = 8;

/// Payoff matrices `A` (row player) and `B` (column player), both `m x n`.
#[derive(Debug, Clone, PartialEq)]
pub struct BimatrixGame {
    rows: usize,
    cols: usize,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl BimatrixGame {
    pub fn new(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>) -> Result<Self> {
        let rows = a.len();
        let cols = a.first().map_or(0, Vec::len);
        if rows == 0 || cols == 0 {
            return Err(Error::Empty("payoff matrix"));
        }
        if b.len() != rows
            || a.iter().chain(&b).any(|r| r.len() != cols)
        {
            return Err(Error::InvalidArgument(
                "payoff matrices must be rectangular and of equal shape".into(),
            ));
        }
        let a: Vec<f64> = a.concat();
        let b: Vec<f64> = b.concat();
        if a.iter().chain(&b).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite payoff".into()));
        }
        Ok(Self { rows, cols, a, b })
    }

    /// Zero-sum game `(A, -A)`.
    pub fn zero_sum(a: Vec<Vec<f64>>) -> Result<Self> {
        let b = a.iter().map(|r| r.iter().map(|v| -v).collect()).collect();
        Self::new(a, b)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn row_payoff(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.cols + j]
    }

    pub fn col_payoff(&self, i: usize, j: usize) -> f64 {
        self.b[i * self.cols + j]
    }

    /// Game seen from the other side: rows and columns swap roles.
    pub fn transpose(&self) -> Self {
        let (m, n) = (self.rows, self.cols);
        let tr = |v: &[f64]| -> Vec<f64> {
            (0..n)
                .flat_map(|j| (0..m).map(move |i| (i, j)))
                .map(|(i, j)| v[i * n + j])
                .collect()
        };
        Self {
            rows: n,
            cols: m,
            a: tr(&self.b),
            b: tr(&self.a),
        }
    }

    /// Expected payoffs `(sigma_r^T A sigma_c, sigma_r^T B sigma_c)`.
    pub fn expected(&self, row: &[f64], col: &[f64]) -> (f64, f64) {
        let mut va = 0.0;
        let mut vb = 0.0;
        for i in 0..self.rows {
            for j in 0..self.cols {
                let w = row[i] * col[j];
                va += w * self.row_payoff(i, j);
                vb += w * self.col_payoff(i, j);
            }
        }
        (va, vb)
    }

    fn row_best_gain(&self, row: &[f64], col: &[f64]) -> f64 {
        let (v, _) = self.expected(row, col);
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| col[j] * self.row_payoff(i, j)).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max)
            - v
    }

    fn col_best_gain(&self, row: &[f64], col: &[f64]) -> f64 {
        let (_, w) = self.expected(row, col);
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| row[i] * self.col_payoff(i, j)).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max)
            - w
    }
}

/// A mixed-strategy profile with its expected payoffs.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedProfile {
    pub row: Vec<f64>,
    pub col: Vec<f64>,
    pub row_value: f64,
    pub col_value: f64,
    pub row_support: Vec<usize>,
    pub col_support: Vec<usize>,
}

impl MixedProfile {
    pub fn pure(game: &BimatrixGame, i: usize, j: usize) -> Self {
        let (m, n) = game.shape();
        let mut row = vec![0.0; m];
        let mut col = vec![0.0; n];
        row[i] = 1.0;
        col[j] = 1.0;
        Self {
            row,
            col,
            row_value: game.row_payoff(i, j),
            col_value: game.col_payoff(i, j),
            row_support: vec![i],
            col_support: vec![j],
        }
    }

    pub fn welfare(&self) -> f64 {
        self.row_value + self.col_value
    }

    /// Index of the most likely row and column action (first on ties).
    pub fn modal_actions(&self) -> (usize, usize) {
        let argmax = |v: &[f64]| {
            v.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |b, (i, &p)| if p > b.1 { (i, p) } else { b })
                .0
        };
        (argmax(&self.row), argmax(&self.col))
    }
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::with_capacity(k), &mut out);
    out
}

/// Solves `sum_{j in J} s_j M[i][j] = v` for `i in I`, `sum s = 1`.
/// `payoff(i, j)` indexes the indifferent player's opponent mix by `j`.
fn indifference(
    own: &[usize],
    other: &[usize],
    payoff: impl Fn(usize, usize) -> f64,
) -> Option<Vec<f64>> {
    let k = own.len();
    let mut m = DMatrix::<f64>::zeros(k + 1, k + 1);
    let mut rhs = DVector::<f64>::zeros(k + 1);
    for (r, &i) in own.iter().enumerate() {
        for (c, &j) in other.iter().enumerate() {
            m[(r, c)] = payoff(i, j);
        }
        m[(r, k)] = -1.0;
    }
    for c in 0..k {
        m[(k, c)] = 1.0;
    }
    rhs[k] = 1.0;
    // reject numerically singular systems, relative to Hadamard's bound
    let hadamard: f64 = m.row_iter().map(|r| r.norm()).product();
    let lu = m.lu();
    let det = lu.determinant();
    if !det.is_finite() || det.abs() <= 1e-12 * hadamard {
        return None;
    }
    let sol = lu.solve(&rhs)?;
    let s: Vec<f64> = sol.iter().take(k).copied().collect();
    if s.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some(s)
}

fn expand(n: usize, support: &[usize], probs: &[f64]) -> Option<Vec<f64>> {
    if probs.iter().any(|p| *p < -FEASIBILITY_TOL) {
        return None;
    }
    let mut v = vec![0.0; n];
    for (&i, &p) in support.iter().zip(probs) {
        v[i] = p.max(0.0);
    }
    let s: f64 = v.iter().sum();
    if s <= 0.0 {
        return None;
    }
    v.iter_mut().for_each(|p| *p /= s);
    Some(v)
}

/// All equilibria found on equal-size support pairs, in lexicographic
/// support order. Near-duplicates (within `1e-9`) are merged.
pub fn support_enumeration(game: &BimatrixGame) -> Result<Vec<MixedProfile>> {
    let (m, n) = game.shape();
    if m > MAX_ACTIONS || n > MAX_ACTIONS {
        return Err(Error::InvalidArgument(format!(
            "stage game {m}x{n} exceeds {MAX_ACTIONS}x{MAX_ACTIONS}"
        )));
    }
    let mut found: Vec<MixedProfile> = Vec::new();
    for k in 1..=m.min(n) {
        let row_sets = combinations(m, k);
        let col_sets = combinations(n, k);
        for rs in &row_sets {
            for cs in &col_sets {
                // column mix makes the row player indifferent over rs
                let Some(cp) = indifference(rs, cs, |i, j| game.row_payoff(i, j)) else {
                    continue;
                };
                let Some(rp) = indifference(cs, rs, |j, i| game.col_payoff(i, j)) else {
                    continue;
                };
                let (Some(col), Some(row)) = (expand(n, cs, &cp), expand(m, rs, &rp)) else {
                    continue;
                };
                if game.row_best_gain(&row, &col) > FEASIBILITY_TOL
                    || game.col_best_gain(&row, &col) > FEASIBILITY_TOL
                {
                    continue;
                }
                let duplicate = found.iter().any(|f| {
                    f.row.iter().zip(&row).all(|(a, b)| (a - b).abs() <= FEASIBILITY_TOL)
                        && f.col.iter().zip(&col).all(|(a, b)| (a - b).abs() <= FEASIBILITY_TOL)
                });
                if duplicate {
                    continue;
                }
                let (row_value, col_value) = game.expected(&row, &col);
                found.push(MixedProfile {
                    row,
                    col,
                    row_value,
                    col_value,
                    row_support: rs.clone(),
                    col_support: cs.clone(),
                });
            }
        }
    }
    Ok(found)
}

/// True iff no pure deviation gains more than `eps` for either player.
pub fn is_epsilon_nash(game: &BimatrixGame, profile: &MixedProfile, eps: f64) -> bool {
    game.row_best_gain(&profile.row, &profile.col) <= eps
        && game.col_best_gain(&profile.row, &profile.col) <= eps
}

/// Welfare-maximizing equilibrium; ties keep the earliest in support order.
pub fn select_equilibrium(list: &[MixedProfile]) -> Result<&MixedProfile> {
    let mut best: Option<&MixedProfile> = None;
    for p in list {
        match best {
            Some(b) if p.welfare() <= b.welfare() + FEASIBILITY_TOL => {}
            _ => best = Some(p),
        }
    }
    best.ok_or(Error::NoEquilibrium)
}

/// Enumerate then select.
pub fn solve(game: &BimatrixGame) -> Result<MixedProfile> {
    let all = support_enumeration(game)?;
    select_equilibrium(&all).cloned()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_game(rng: &mut ChaCha8Rng, m: usize, n: usize) -> BimatrixGame {
        let mut gen = || -> Vec<Vec<f64>> {
            (0..m)
                .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect()
        };
        let a = gen();
        let b = gen();
        BimatrixGame::new(a, b).unwrap()
    }

    #[test]
    fn matching_pennies() {
        let g = BimatrixGame::zero_sum(vec![vec![1.0, -1.0], vec![-1.0, 1.0]]).unwrap();
        let eq = support_enumeration(&g).unwrap();
        assert_eq!(eq.len(), 1);
        let p = &eq[0];
        for v in p.row.iter().chain(&p.col) {
            assert!((v - 0.5).abs() < 1e-12);
        }
        assert!(p.row_value.abs() < 1e-12 && p.col_value.abs() < 1e-12);
        assert!(is_epsilon_nash(&g, p, 1e-6));
        assert!(!is_epsilon_nash(&g, &MixedProfile::pure(&g, 0, 0), 1e-6));
        // column player gains 2 by switching
        assert!((g.col_best_gain(&[1.0, 0.0], &[1.0, 0.0]) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn dominance_game() {
        let a = vec![vec![3.0, 0.0], vec![5.0, 1.0]];
        let b = vec![vec![3.0, 5.0], vec![0.0, 1.0]];
        let g = BimatrixGame::new(a, b).unwrap();
        let eq = support_enumeration(&g).unwrap();
        assert_eq!(eq.len(), 1);
        assert_eq!(eq[0], MixedProfile::pure(&g, 1, 1));
        assert_eq!((eq[0].row_value, eq[0].col_value), (1.0, 1.0));
        // brute-force check over pure profiles
        let pure_eq: Vec<_> = (0..2)
            .flat_map(|i| (0..2).map(move |j| (i, j)))
            .filter(|&(i, j)| is_epsilon_nash(&g, &MixedProfile::pure(&g, i, j), 0.0))
            .collect();
        assert_eq!(pure_eq, vec![(1, 1)]);
    }

    #[test]
    fn coordination_game() {
        let a = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let g = BimatrixGame::new(a.clone(), a).unwrap();
        let eq = support_enumeration(&g).unwrap();
        assert_eq!(eq.len(), 3);
        assert_eq!(eq[0], MixedProfile::pure(&g, 0, 0));
        assert_eq!(eq[1], MixedProfile::pure(&g, 1, 1));
        assert!((eq[2].row[0] - 0.5).abs() < 1e-12 && (eq[2].col[1] - 0.5).abs() < 1e-12);
        assert!((eq[2].row_value - 0.5).abs() < 1e-12);
        let sel = select_equilibrium(&eq).unwrap();
        assert_eq!(sel, &eq[0]);
        assert_eq!((sel.row_value, sel.col_value), (1.0, 1.0));
    }

    #[test]
    fn selection_rules() {
        assert!(select_equilibrium(&[]).is_err());
        let g = BimatrixGame::new(vec![vec![1.0]], vec![vec![2.0]]).unwrap();
        let only = MixedProfile::pure(&g, 0, 0);
        assert_eq!(select_equilibrium(std::slice::from_ref(&only)).unwrap(), &only);
    }

    #[test]
    fn zero_game_is_deterministic() {
        let z = vec![vec![0.0; 4]; 4];
        let g = BimatrixGame::new(z.clone(), z).unwrap();
        let sel = solve(&g).unwrap();
        assert_eq!(sel, MixedProfile::pure(&g, 0, 0));
        assert_eq!(solve(&g).unwrap(), sel);
    }

    #[test]
    fn random_games_are_sound_and_odd() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for trial in 0..1000 {
            let n = if trial % 2 == 0 { 3 } else { 4 };
            let g = random_game(&mut rng, n, n);
            let eq = support_enumeration(&g).unwrap();
            assert!(!eq.is_empty());
            assert_eq!(eq.len() % 2, 1, "trial {trial}: {} equilibria", eq.len());
            for p in &eq {
                assert!(is_epsilon_nash(&g, p, 1e-6));
                assert!((p.row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                assert!((p.col.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn selection_is_shift_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        for _ in 0..200 {
            let g = random_game(&mut rng, 4, 4);
            let c = rng.random_range(-3.0..3.0);
            let shift = |get: &dyn Fn(usize, usize) -> f64| -> Vec<Vec<f64>> {
                (0..4).map(|i| (0..4).map(|j| get(i, j) + c).collect()).collect()
            };
            let h = BimatrixGame::new(
                shift(&|i, j| g.row_payoff(i, j)),
                shift(&|i, j| g.col_payoff(i, j)),
            )
            .unwrap();
            let a = solve(&g).unwrap();
            let b = solve(&h).unwrap();
            assert_eq!((a.row_support, a.col_support), (b.row_support, b.col_support));
        }
    }

    #[test]
    fn transpose_swaps_roles() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let g = random_game(&mut rng, 3, 4);
        let t = g.transpose();
        assert_eq!(t.shape(), (4, 3));
        assert_eq!(t.row_payoff(2, 1), g.col_payoff(1, 2));
        assert_eq!(t.transpose(), g);
        let eg = support_enumeration(&g).unwrap();
        let et = support_enumeration(&t).unwrap();
        assert_eq!(eg.len(), et.len());
    }
}
