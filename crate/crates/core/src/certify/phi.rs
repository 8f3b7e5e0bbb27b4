//! Gain-parametrized split `Ψ = Ψ₀ + κΦ` for uniform delay bounds.
//!
//! With `K = κ𝒦`, `L̄ = κL̂`, `𝒯_m = κ𝒯̂_m` and `S = κ𝒮`, every block of `Ψ`
//! is affine in `κ` once the `κ^{½}` and `κ` factors are kept inside `Φ`.

use nalgebra::{DMatrix, DVector};

use super::lmi::{psi_dim, Decision, DelayBounds, Psi44Coupling, Vertex};
use crate::error::{Error, Result};
use crate::linalg::{max_eigenvalue, put, put_sym, sqrt_psd};

#[derive(Debug, Clone, PartialEq)]
pub struct PhiDecomposition {
    pub psi0: DMatrix<f64>,
    pub phi: DMatrix<f64>,
}

impl PhiDecomposition {
    pub fn psi(&self, kappa: f64) -> DMatrix<f64> {
        &self.psi0 + &self.phi * kappa
    }
}

/// `kw_hat = 𝒦^{½}W` and `vertex_hat = (L̂, {𝒯̂_m})` at unit gain; `dec`
/// holds `(𝒮_m, R_m, S12_m)`.
pub fn assemble_phi(
    kw_hat: &DMatrix<f64>,
    damping: &DVector<f64>,
    vertex_hat: &Vertex,
    bounds: &DelayBounds,
    kappa: f64,
    dec: &Decision,
    coupling: Psi44Coupling,
) -> Result<PhiDecomposition> {
    let h = bounds.as_uniform().ok_or_else(|| {
        Error::InvalidParameter("the split needs one delay bound for all channels".into())
    })?;
    let n = kw_hat.nrows();
    let r = kw_hat.ncols();
    let c = vertex_hat.tbar.len();
    let dim = psi_dim(n, c);
    let (op, oe1, oe2) = (n, n + r, n + r + c * r);
    let h2 = h * h;
    let sk = kappa.sqrt();
    let r_sum = dec.r.iter().fold(DMatrix::zeros(r, r), |acc, m| acc + m);
    let l = &vertex_hat.lbar;
    let t = &vertex_hat.tbar;

    let mut psi0 = DMatrix::zeros(dim, dim);
    put(&mut psi0, 0, 0, &DMatrix::from_diagonal(damping));
    for m in 0..c {
        put(&mut psi0, oe1 + m * r, oe1 + m * r, &dec.r[m]);
        put(&mut psi0, oe2 + m * r, oe2 + m * r, &dec.r[m]);
        put_sym(&mut psi0, oe1 + m * r, oe2 + m * r, &dec.s12[m]);
    }

    let kwr = kw_hat * &r_sum;
    let lr = l * &r_sum;
    let mut phi = DMatrix::zeros(dim, dim);
    put(&mut phi, 0, 0, &(-&kwr * kw_hat.transpose() * h2));
    put_sym(&mut phi, 0, op, &(&kwr * l * (h2 * sk)));
    put(&mut phi, op, op, &(l - &lr * l * (h2 * kappa)));
    for m in 0..c {
        let s = &dec.s[m];
        put_sym(&mut phi, 0, oe2 + m * r, &(-&kwr * &t[m] * (h2 * sk)));
        put_sym(&mut phi, op, oe1 + m * r, &(-s));
        put_sym(
            &mut phi,
            op,
            oe2 + m * r,
            &(&lr * &t[m] * (h2 * kappa) - s - &t[m] * 0.5),
        );
        put(&mut phi, oe1 + m * r, oe1 + m * r, s);
        put_sym(&mut phi, oe1 + m * r, oe2 + m * r, s);
        for j in 0..=m {
            if j != m && coupling == Psi44Coupling::BlockDiagonal {
                continue;
            }
            let cross = t[m].transpose() * &r_sum * &t[j] * (h2 * kappa);
            if j == m {
                put(&mut phi, oe2 + m * r, oe2 + m * r, &(s - cross));
            } else {
                put_sym(&mut phi, oe2 + m * r, oe2 + j * r, &(-cross));
            }
        }
    }
    Ok(PhiDecomposition {
        psi0,
        phi: crate::linalg::symmetrize(&phi),
    })
}

/// Gains below this bound keep `L̂ − h²κL̂RL̂ ≻ 0`:
/// `1 / (h² λ_max(R^{½} L̂ R^{½}))`.
pub fn remark2_bound(lhat: &DMatrix<f64>, r_sum: &DMatrix<f64>, h: f64) -> f64 {
    let rh = sqrt_psd(r_sum);
    1.0 / (h * h * max_eigenvalue(&(&rh * lhat * &rh)))
}
