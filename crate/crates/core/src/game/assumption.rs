use serde::{Deserialize, Serialize};

use crate::blockmat::Mat;
use crate::error::{Error, Result};
use crate::linalg::{eigenvalues, sym_eigen, Lu};
use crate::scalar::Scalar;

use super::LqGame;

/// Outcome of the spectral condition on the open-loop Hamiltonian-like
/// matrix `H` that guarantees a stabilizing solution of the coupled
/// open-loop Riccati equations.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectralCheck {
    pub n_states: usize,
    /// Eigenvalues of `H` with modulus below one.
    pub stable_count: usize,
    pub moduli: Vec<f64>,
    /// Whether the stable invariant subspace is complementary to
    /// `Im col(0, I)`.
    pub complementary: bool,
}

impl SpectralCheck {
    pub fn holds(&self) -> bool {
        self.stable_count == self.n_states && self.complementary
    }
}

/// `H = [A + Σ S_j A⁻ᵀQ_j, row(−S_j A⁻ᵀ); col(−A⁻ᵀQ_j), I_N ⊗ A⁻ᵀ]`,
/// `S_j = B_j R_j⁻¹ B_jᵀ`.
pub fn hamiltonian<T: Scalar>(g: &LqGame<T>) -> Result<Mat<T>> {
    let n = g.n_states();
    let na = g.n_agents();
    let a_inv_t = Lu::new(&g.a).map_err(|_| Error::SingularA)?.inverse().transpose();
    let mut h = Mat::zeros(n * (na + 1), n * (na + 1));
    h.set_block(0, 0, &g.a);
    for j in 0..na {
        let r_inv = Lu::new(&g.r[j])?;
        let s = g.b[j].matmul(&r_inv.solve_mat(&g.b[j].transpose()));
        let s_ait = s.matmul(&a_inv_t);
        h.add_block(0, 0, &s_ait.matmul(&g.q[j]));
        h.set_block(0, n * (j + 1), &s_ait.scale(-T::one()));
        h.set_block(n * (j + 1), 0, &a_inv_t.matmul(&g.q[j]).scale(-T::one()));
        h.set_block(n * (j + 1), n * (j + 1), &a_inv_t);
    }
    Ok(h)
}

pub fn check_spectral_condition<T: Scalar>(g: &LqGame<T>) -> Result<SpectralCheck> {
    let n = g.n_states();
    let h = hamiltonian(g)?;
    let moduli: Vec<f64> = eigenvalues(&h)?
        .into_iter()
        .map(|(re, im)| (re * re + im * im).sqrt().to_f64_lossy())
        .collect();
    let stable_count = moduli.iter().filter(|&&m| m < 1.0).count();
    let complementary = stable_projector(&h)
        .map(|p| {
            let top = p.row_block(0, n);
            let (ev, _) = sym_eigen(&top.matmul(&top.transpose()), false);
            let big = ev.last().copied().unwrap_or(T::zero());
            big > T::zero() && ev.iter().all(|&e| e > T::lit(1e-10) * big)
        })
        .unwrap_or(false);
    Ok(SpectralCheck {
        n_states: n,
        stable_count,
        moduli,
        complementary,
    })
}

/// Spectral projector onto the invariant subspace of eigenvalues inside the
/// unit circle: Cayley transform `Z = (H + I)(H − I)⁻¹` maps them to the open
/// left half-plane, and `(I − sign Z)/2` with the Newton sign iteration.
fn stable_projector<T: Scalar>(h: &Mat<T>) -> Option<Mat<T>> {
    let k = h.rows();
    let id = Mat::identity(k);
    let minus = Lu::new(&(h - &id)).ok()?;
    // (H + I)(H − I)⁻¹ = ((H − I)⁻ᵀ(H + I)ᵀ)ᵀ; H ± I commute so either order works
    let mut z = minus.solve_mat(&(h + &id));
    let half = T::lit(0.5);
    for _ in 0..100 {
        let inv = Lu::new(&z).ok()?.inverse();
        let next = (&z + &inv).scale(half);
        let change = (&next - &z).max_abs();
        z = next;
        if change <= T::lit(1e-12) * z.max_abs().max(T::one()) {
            return Some((&id - &z).scale(half));
        }
    }
    None
}
