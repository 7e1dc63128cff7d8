use crate::blockmat::{blkdg, Mat};
use crate::error::{Error, Result};
use crate::linalg::{spectral_radius, Lu};
use crate::scalar::Scalar;

use super::LqGame;

#[derive(Clone, Copy, Debug)]
pub struct RiccatiSettings<T> {
    /// Tolerance on the entrywise equation residuals, relative to
    /// `max(1, largest entry of P)`.
    pub tol: T,
    pub max_iter: usize,
}

impl<T: Scalar> Default for RiccatiSettings<T> {
    fn default() -> Self {
        RiccatiSettings {
            tol: T::lit(1e-10),
            max_iter: 200_000,
        }
    }
}

/// Solution of the coupled open-loop Riccati equations
///
/// ```text
/// P_i = Q_i + Aᵀ P_i (A + Σ_j B_j K_j)
/// K_i = −R_i⁻¹ B_iᵀ P_i (A + Σ_j B_j K_j)
/// ```
///
/// The `P_i` are in general not symmetric.
#[derive(Clone, Debug)]
pub struct OpenLoopRiccati<T> {
    pub p: Vec<Mat<T>>,
    pub k: Vec<Mat<T>>,
    /// `A + Σ B_j K_j`
    pub closed_loop: Mat<T>,
    pub spectral_radius: T,
    /// Largest entrywise residual of either equation, per agent.
    pub residuals: Vec<T>,
    pub iterations: usize,
}

/// Joint gain solve for fixed `P_i`:
/// `(blkdg(R_i) + [B_iᵀ P_i B_j]_{ij}) col(K_i) = −col(B_iᵀ P_i A)`.
fn joint_gains<T: Scalar>(g: &LqGame<T>, p: &[Mat<T>]) -> Result<Vec<Mat<T>>> {
    let na = g.n_agents();
    let n = g.n_states();
    let dims: Vec<usize> = (0..na).map(|i| g.input_dim(i)).collect();
    let offs: Vec<usize> = dims
        .iter()
        .scan(0, |acc, &m| {
            let o = *acc;
            *acc += m;
            Some(o)
        })
        .collect();
    let total: usize = dims.iter().sum();
    let mut lhs = blkdg(&g.r);
    let mut rhs = Mat::zeros(total, n);
    for i in 0..na {
        let btp = g.b[i].tr_matmul(&p[i]);
        for j in 0..na {
            lhs.add_block(offs[i], offs[j], &btp.matmul(&g.b[j]));
        }
        rhs.set_block(offs[i], 0, &btp.matmul(&g.a).scale(-T::one()));
    }
    let k = Lu::new(&lhs)
        .map_err(|_| Error::NoConvergence("singular joint gain system".into()))?
        .solve_mat(&rhs);
    Ok((0..na).map(|i| k.block(offs[i], 0, dims[i], n)).collect())
}

fn closed_loop<T: Scalar>(g: &LqGame<T>, k: &[Mat<T>]) -> Mat<T> {
    let mut acl = g.a.clone();
    for (b, ki) in g.b.iter().zip(k) {
        acl = &acl + &b.matmul(ki);
    }
    acl
}

fn open_loop_residuals<T: Scalar>(g: &LqGame<T>, p: &[Mat<T>], k: &[Mat<T>]) -> Result<Vec<T>> {
    let acl = closed_loop(g, k);
    (0..g.n_agents())
        .map(|i| {
            let at_p = g.a.tr_matmul(&p[i]);
            let r1 = (&(&g.q[i] + &at_p.matmul(&acl)) - &p[i]).max_abs();
            let bpa = g.b[i].tr_matmul(&p[i]).matmul(&acl);
            let r_inv = Lu::new(&g.r[i])?;
            let r2 = (&k[i] + &r_inv.solve_mat(&bpa)).max_abs();
            Ok(r1.max(r2))
        })
        .collect()
}

/// Fixed-point sweep from `P_i = Q_i`, `K_i = 0`: joint gain solve, then
/// `P_i ← Q_i + Aᵀ P_i A_cl`. Fails if the sweep does not settle or the
/// resulting closed loop is not Schur stable.
pub fn solve_open_loop_riccati<T: Scalar>(
    g: &LqGame<T>,
    settings: &RiccatiSettings<T>,
) -> Result<OpenLoopRiccati<T>> {
    let na = g.n_agents();
    let mut p: Vec<Mat<T>> = g.q.clone();
    let mut k: Vec<Mat<T>>;
    for it in 1..=settings.max_iter {
        k = joint_gains(g, &p)?;
        let acl = closed_loop(g, &k);
        let next: Vec<Mat<T>> = (0..na)
            .map(|i| &g.q[i] + &g.a.tr_matmul(&p[i]).matmul(&acl))
            .collect();
        let change = next
            .iter()
            .zip(&p)
            .map(|(a, b)| (a - b).max_abs())
            .fold(T::zero(), |a, b| a.max(b));
        if !next.iter().all(Mat::is_finite) {
            return Err(Error::NoConvergence(format!(
                "open-loop Riccati sweep diverged after {it} iterations"
            )));
        }
        p = next;
        let scale = p.iter().fold(T::one(), |a, m| a.max(m.max_abs()));
        if change <= settings.tol * scale {
            let k = joint_gains(g, &p)?;
            let residuals = open_loop_residuals(g, &p, &k)?;
            if residuals.iter().all(|&r| r <= settings.tol * scale) {
                let closed_loop = closed_loop(g, &k);
                let rho = spectral_radius(&closed_loop)?;
                if !(rho < T::one()) {
                    return Err(Error::NoConvergence(format!(
                        "open-loop Riccati solution is not stabilizing (spectral radius {:e})",
                        rho
                    )));
                }
                return Ok(OpenLoopRiccati {
                    p,
                    k,
                    closed_loop,
                    spectral_radius: rho,
                    residuals,
                    iterations: it,
                });
            }
        }
    }
    Err(Error::NoConvergence(format!(
        "open-loop Riccati sweep did not settle in {} iterations",
        settings.max_iter
    )))
}

/// Single-agent discrete algebraic Riccati equation
/// `P = Q + AᵀPA − AᵀPB(R + BᵀPB)⁻¹BᵀPA` by the structure-preserving
/// doubling iteration
///
/// ```text
/// W     = (I + G_k H_k)⁻¹
/// A_k+1 = A_k W A_k
/// G_k+1 = G_k + A_k W G_k A_kᵀ
/// H_k+1 = H_k + A_kᵀ H_k W A_k
/// ```
///
/// from `A_0 = A`, `G_0 = BR⁻¹Bᵀ`, `H_0 = Q`; `H_k → P` quadratically.
/// Returns `(P, K)` with `K = −(R + BᵀPB)⁻¹BᵀPA`, after checking the
/// equation residual.
pub fn solve_dare<T: Scalar>(
    a: &Mat<T>,
    b: &Mat<T>,
    q: &Mat<T>,
    r: &Mat<T>,
    settings: &RiccatiSettings<T>,
) -> Result<(Mat<T>, Mat<T>)> {
    let n = a.rows();
    let id = Mat::identity(n);
    let r_lu = Lu::new(r)?;
    let mut ak = a.clone();
    let mut gk = b.matmul(&r_lu.solve_mat(&b.transpose())).sym_part();
    let mut hk = q.sym_part();
    let fail = || Error::NoConvergence("Riccati doubling iteration did not settle".into());
    let mut settled = false;
    for _ in 0..settings.max_iter.min(200) {
        let w = Lu::new(&(&id + &gk.matmul(&hk))).map_err(|_| fail())?;
        let wa = w.solve_mat(&ak);
        let wg = w.solve_mat(&gk);
        let next_h = (&hk + &ak.tr_matmul(&hk.matmul(&wa))).sym_part();
        let next_g = (&gk + &ak.matmul(&wg.matmul(&ak.transpose()))).sym_part();
        ak = ak.matmul(&wa);
        let change = (&next_h - &hk).max_abs();
        hk = next_h;
        gk = next_g;
        if !hk.is_finite() || !gk.is_finite() {
            return Err(fail());
        }
        if change <= settings.tol * hk.max_abs().max(T::one()) {
            settled = true;
            break;
        }
    }
    if !settled {
        return Err(fail());
    }
    let p = hk;
    let btp = b.tr_matmul(&p);
    let k = Lu::new(&(r + &btp.matmul(b)))?
        .solve_mat(&btp.matmul(a))
        .scale(-T::one());
    let acl = a + &b.matmul(&k);
    let residual = (&(q + &a.tr_matmul(&p).matmul(&acl)) - &p).max_abs();
    if !(residual <= T::lit(1e3) * settings.tol * p.max_abs().max(T::one())) {
        return Err(fail());
    }
    Ok((p, k))
}

/// The system seen by agent `i` when every other agent follows its
/// open-loop equilibrium feedback: state `(x, x̄)`, where `x̄` evolves under
/// the equilibrium closed loop,
///
/// ```text
/// Â_i = [A  Σ_{j≠i} B_j K_j]    B̂_i = [B_i]    Q̂_i = [Q_i 0]
///       [0  A_cl           ]          [0  ]          [0   0]
/// ```
#[derive(Clone, Debug)]
pub struct AugmentedSystem<T> {
    pub a: Mat<T>,
    pub b: Mat<T>,
    pub q: Mat<T>,
    /// Solution of the Riccati equation of `(Â_i, B̂_i, Q̂_i, R_i)`.
    pub p: Mat<T>,
    pub k: Mat<T>,
}

impl<T: Scalar> AugmentedSystem<T> {
    /// Upper-left block of the cost matrix (own state).
    pub fn p11(&self) -> Mat<T> {
        let n = self.a.rows() / 2;
        self.p.block(0, 0, n, n)
    }

    /// Upper-right block (coupling to the reference trajectory).
    pub fn p12(&self) -> Mat<T> {
        let n = self.a.rows() / 2;
        self.p.block(0, n, n, n)
    }
}

pub fn augmented_systems<T: Scalar>(
    g: &LqGame<T>,
    ol: &OpenLoopRiccati<T>,
    settings: &RiccatiSettings<T>,
) -> Result<Vec<AugmentedSystem<T>>> {
    let n = g.n_states();
    (0..g.n_agents())
        .map(|i| {
            let mut others = Mat::zeros(n, n);
            for (j, (b, k)) in g.b.iter().zip(&ol.k).enumerate() {
                if j != i {
                    others = &others + &b.matmul(k);
                }
            }
            let mut a = Mat::zeros(2 * n, 2 * n);
            a.set_block(0, 0, &g.a);
            a.set_block(0, n, &others);
            a.set_block(n, n, &ol.closed_loop);
            let mut b = Mat::zeros(2 * n, g.input_dim(i));
            b.set_block(0, 0, &g.b[i]);
            let mut q = Mat::zeros(2 * n, 2 * n);
            q.set_block(0, 0, &g.q[i]);
            let (p, k) = solve_dare(&a, &b, &q, &g.r[i], settings)?;
            Ok(AugmentedSystem { a, b, q, p, k })
        })
        .collect()
}
