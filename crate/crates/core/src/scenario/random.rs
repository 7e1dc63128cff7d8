use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::avi::{AviProblem, Polyhedron};
use crate::blockmat::Mat;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Shift added to the identity in the random operator; lower bound on `μ`.
pub const RANDOM_AVI_SHIFT: f64 = 0.1;

/// A random strongly monotone AVI together with the strictly feasible point
/// its constraints were built around.
#[derive(Clone, Debug)]
pub struct RandomAvi<T> {
    pub problem: AviProblem<T>,
    pub interior_point: Vec<T>,
    /// `D u₀ + d = −slack`, entrywise positive.
    pub slack: Vec<T>,
}

/// `M = 0.1·I + SSᵀ/n + (W − Wᵀ)/2` with standard normal `S`, `W`; standard
/// normal `q` and `D`; `d = −D u₀ − s` with standard normal `u₀` and `s`
/// uniform on `[0.1, 1.1)`. Deterministic in `seed`.
pub fn random_avi_with_witness<T: Scalar>(n: usize, m: usize, seed: u64) -> Result<RandomAvi<T>> {
    if n == 0 || m == 0 {
        return Err(Error::InvalidConfig("random AVI needs n, m >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = |rows: usize, cols: usize| -> Mat<f64> {
        Mat::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
    };
    let s = normal(n, n);
    let w = normal(n, n);
    let dm = normal(m, n);
    let q = normal(n, 1).into_vec();
    let u0 = normal(n, 1).into_vec();
    let ss = s.matmul(&s.transpose()).scale(1.0 / n as f64);
    let skew = (&w - &w.transpose()).scale(0.5);
    let mm = &(&Mat::identity(n).scale(RANDOM_AVI_SHIFT) + &ss) + &skew;
    let slack: Vec<f64> = (0..m).map(|_| rng.random_range(0.1..1.1)).collect();
    let du0 = dm.matvec(&u0);
    let d: Vec<f64> = du0.iter().zip(&slack).map(|(a, s)| -a - s).collect();
    let problem = AviProblem::new(mm, q, Polyhedron::new(dm, d)?)?;
    Ok(RandomAvi {
        problem: AviProblem::from_f64(&problem),
        interior_point: u0.into_iter().map(T::lit).collect(),
        slack: slack.into_iter().map(T::lit).collect(),
    })
}

pub fn random_avi<T: Scalar>(n: usize, m: usize, seed: u64) -> Result<AviProblem<T>> {
    Ok(random_avi_with_witness(n, m, seed)?.problem)
}
