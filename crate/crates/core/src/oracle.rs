//! Brute-force reference implementations, kept independent of the fast paths.
//!
//! Nothing here is used by the solvers; the validation suite and the tests
//! compare the solvers against these.

use faer::Mat;

use crate::linalg::{c64, ComplexMatrix};
use crate::model::ReferenceBathState;

/// `-2J cos(m pi / (N + 1))`, `m = 1..=N`.
pub fn open_chain_frequencies(n_sites: usize, hopping: f64) -> Vec<f64> {
    (1..=n_sites)
        .map(|m| -2.0 * hopping * (m as f64 * std::f64::consts::PI / (n_sites as f64 + 1.0)).cos())
        .collect()
}

/// Standing wave `sqrt(2 / (N + 1)) sin(k_m j)` on site `j` (1-based), `k_m = m pi / (N + 1)`.
pub fn open_chain_mode(n_sites: usize, m: usize, site: usize) -> f64 {
    let k = m as f64 * std::f64::consts::PI / (n_sites as f64 + 1.0);
    (2.0 / (n_sites as f64 + 1.0)).sqrt() * (k * site as f64).sin()
}

/// Full SPDM `[[p, x], [conj(x)^T, diag(c0)]]`.
pub fn full_spdm(p: f64, x: &[c64], c0: &ReferenceBathState) -> ComplexMatrix {
    let n = x.len();
    Mat::from_fn(1 + n, 1 + n, |a, b| match (a, b) {
        (0, 0) => c64::new(p, 0.0),
        (0, k) => x[k - 1],
        (k, 0) => x[k - 1].conj(),
        (i, j) if i == j => c64::new(c0.occupations[i - 1], 0.0),
        _ => c64::new(0.0, 0.0),
    })
}

/// One cycle on the dense SPDM: `U rho U^H`, then keep the system entry,
/// scale the coherence blocks by `eta` and overwrite the bath block with `C0`.
///
/// Returns the pre-reset and post-reset matrices.
pub fn conjugate_and_reset(
    rho: &ComplexMatrix,
    u_full: &ComplexMatrix,
    eta: f64,
    c0: &ReferenceBathState,
) -> (ComplexMatrix, ComplexMatrix) {
    let pre = u_full * rho * u_full.adjoint();
    let dim = pre.nrows();
    let post = Mat::from_fn(dim, dim, |a, b| match (a, b) {
        (0, 0) => pre[(0, 0)],
        (0, _) | (_, 0) => pre[(a, b)] * eta,
        (i, j) if i == j => c64::new(c0.occupations[i - 1], 0.0),
        _ => c64::new(0.0, 0.0),
    });
    (pre, post)
}

/// Generic stroboscopic reset with a kept-entry set: the entries listed in
/// `kept` evolve unitarily, every other entry is restored to `reference`.
///
/// Returns `(D, C)` with `V' = D V + C` on the kept entries, where
/// `D_ij = U[a_i, a_j] conj(U[b_i, b_j])` and
/// `C_i = sum over restored (a, b) of U[a_i, a] reference[a, b] conj(U[b_i, b])`.
pub fn kept_entry_map(
    u_full: &ComplexMatrix,
    kept: &[(usize, usize)],
    reference: &ComplexMatrix,
) -> (ComplexMatrix, Vec<c64>) {
    let dim = u_full.nrows();
    let is_kept = |a: usize, b: usize| kept.contains(&(a, b));
    let d = Mat::from_fn(kept.len(), kept.len(), |i, j| {
        let (ai, bi) = kept[i];
        let (aj, bj) = kept[j];
        u_full[(ai, aj)] * u_full[(bi, bj)].conj()
    });
    let c = kept
        .iter()
        .map(|&(ai, bi)| {
            let mut acc = c64::new(0.0, 0.0);
            for a in 0..dim {
                for b in 0..dim {
                    let r = reference[(a, b)];
                    if r != c64::new(0.0, 0.0) && !is_kept(a, b) {
                        acc += u_full[(ai, a)] * r * u_full[(bi, b)].conj();
                    }
                }
            }
            acc
        })
        .collect();
    (d, c)
}

/// Kept set of the complete-erasure rule: the system occupation only.
pub fn erasure_kept_set() -> Vec<(usize, usize)> {
    vec![(0, 0)]
}

/// Kept set of the coherence-keeping rule, ordered `(P, x_1..x_N, y_1..y_N)`.
pub fn coherent_kept_set(n_modes: usize) -> Vec<(usize, usize)> {
    let mut out = vec![(0, 0)];
    out.extend((1..=n_modes).map(|k| (0, k)));
    out.extend((1..=n_modes).map(|k| (k, 0)));
    out
}

/// Reference SPDM for both rules: empty system, no coherences, bath at `C0`.
pub fn reset_reference(c0: &ReferenceBathState) -> ComplexMatrix {
    full_spdm(0.0, &vec![c64::new(0.0, 0.0); c0.n_modes()], c0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_closed_forms() {
        let w = open_chain_frequencies(1, 1.0);
        assert!(w[0].abs() < 1e-15);
        assert!((open_chain_mode(1, 1, 1) - 1.0).abs() < 1e-15);
        // normalization of a standing wave
        let norm: f64 = (1..=7).map(|j| open_chain_mode(7, 3, j).powi(2)).sum();
        assert!((norm - 1.0).abs() < 1e-14);
    }

    #[test]
    fn identity_step_keeps_kept_entries() {
        let c0 = ReferenceBathState {
            occupations: vec![0.3, 0.6],
        };
        let x = [c64::new(0.01, 0.02), c64::new(-0.03, 0.0)];
        let rho = full_spdm(0.4, &x, &c0);
        let id = Mat::<c64>::identity(3, 3);
        let (_, post) = conjugate_and_reset(&rho, &id, 0.5, &c0);
        assert_eq!(post[(0, 0)], c64::new(0.4, 0.0));
        assert_eq!(post[(0, 1)], x[0] * 0.5);
        let (d, c) = kept_entry_map(&id, &coherent_kept_set(2), &reset_reference(&c0));
        for i in 0..5 {
            assert_eq!(d[(i, i)], c64::new(1.0, 0.0));
            assert_eq!(c[i], c64::new(0.0, 0.0));
        }
    }
}
