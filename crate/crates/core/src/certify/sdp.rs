//! Semidefinite programs in LMI form and a dense interior-point backend.
//!
//! Problems are `max bᵀy` subject to `F_k(y) = F_k0 + Σ_i y_i F_ki ⪰ 0` for
//! every block `k`. The reference backend is an infeasible primal–dual
//! predictor–corrector method with the HKM search direction.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Symmetric coefficient matrix as a full (both triangles) triplet list.
pub type Triplets = Vec<(usize, usize, f64)>;

#[derive(Debug, Clone, PartialEq)]
pub struct LmiBlock {
    pub constant: DMatrix<f64>,
    /// `(variable index, coefficient matrix)` pairs.
    pub terms: Vec<(usize, Triplets)>,
}

impl LmiBlock {
    pub fn dim(&self) -> usize {
        self.constant.nrows()
    }

    /// `F(y)`.
    pub fn eval(&self, y: &DVector<f64>) -> DMatrix<f64> {
        let mut f = self.constant.clone();
        for (i, trip) in &self.terms {
            let yi = y[*i];
            if yi != 0.0 {
                for &(r, c, v) in trip {
                    f[(r, c)] += yi * v;
                }
            }
        }
        f
    }
}

/// Converts a dense symmetric coefficient into triplets, dropping zeros.
pub fn triplets_of(m: &DMatrix<f64>) -> Triplets {
    let mut t = Vec::new();
    for c in 0..m.ncols() {
        for r in 0..m.nrows() {
            let v = m[(r, c)];
            if v != 0.0 {
                t.push((r, c, v));
            }
        }
    }
    t
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpProblem {
    pub num_vars: usize,
    pub objective: DVector<f64>,
    pub blocks: Vec<LmiBlock>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdpOptions {
    pub max_iter: usize,
    /// Relative tolerance on residuals and duality gap.
    pub tol: f64,
    /// Stop as soon as an iterate is strictly feasible with `bᵀy ≥ target`,
    /// or the primal objective certifies `bᵀy < target`.
    pub target: Option<f64>,
}

impl Default for SdpOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-8,
            target: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdpStatus {
    Optimal,
    TargetReached,
    BelowTarget,
    /// Iteration limit or stalled steps; the last iterate is returned.
    Inaccurate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpSolution {
    pub y: DVector<f64>,
    pub status: SdpStatus,
    pub iterations: usize,
    pub primal_objective: f64,
    pub dual_objective: f64,
}

/// Backend-agnostic SDP solver.
pub trait SdpOracle {
    fn solve(&self, problem: &SdpProblem, options: &SdpOptions) -> Result<SdpSolution>;
}

/// In-repo reference backend.
#[derive(Debug, Clone, Copy, Default)]
pub struct InteriorPoint;

struct Block<'a> {
    lmi: &'a LmiBlock,
    /// Problem data in primal form: `C = F0`, `A_i = −F_i`.
    x: DMatrix<f64>,
    z: DMatrix<f64>,
}

fn inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn apply_adjoint(lmi: &LmiBlock, y: &DVector<f64>) -> DMatrix<f64> {
    // Σ y_i A_i with A_i = −F_i.
    let mut m = DMatrix::zeros(lmi.dim(), lmi.dim());
    for (i, trip) in &lmi.terms {
        let yi = y[*i];
        if yi != 0.0 {
            for &(r, c, v) in trip {
                m[(r, c)] -= yi * v;
            }
        }
    }
    m
}

fn apply_op(lmi: &LmiBlock, m: &DMatrix<f64>, out: &mut DVector<f64>) {
    for (i, trip) in &lmi.terms {
        let s: f64 = trip.iter().map(|&(r, c, v)| v * m[(r, c)]).sum();
        out[*i] -= s;
    }
}

fn cholesky(m: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    Cholesky::new(crate::linalg::symmetrize(m))
}

/// Largest `α` with `x + α·dx ⪰ 0`, given `x ≻ 0`.
fn max_step(chol: &Cholesky<f64, Dyn>, dx: &DMatrix<f64>) -> f64 {
    let l = chol.l();
    let Some(a) = l.solve_lower_triangular(dx) else {
        return 0.0;
    };
    let Some(b) = l.solve_lower_triangular(&a.transpose()) else {
        return 0.0;
    };
    let lmin = crate::linalg::min_eigenvalue(&b);
    if lmin >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lmin
    }
}

impl SdpOracle for InteriorPoint {
    fn solve(&self, problem: &SdpProblem, options: &SdpOptions) -> Result<SdpSolution> {
        solve_hkm(problem, options)
    }
}

fn norm_f(m: &DMatrix<f64>) -> f64 {
    m.norm()
}

fn solve_hkm(problem: &SdpProblem, opt: &SdpOptions) -> Result<SdpSolution> {
    let nv = problem.num_vars;
    let b = &problem.objective;
    if b.len() != nv {
        return Err(Error::Dimension(
            "objective length differs from variable count".into(),
        ));
    }
    let total_dim: usize = problem.blocks.iter().map(LmiBlock::dim).sum();
    if total_dim == 0 {
        return Err(Error::Oracle("empty SDP".into()));
    }

    // Starting point scaled to the data.
    let mut a_norm = vec![0.0_f64; nv];
    for lmi in &problem.blocks {
        for (i, trip) in &lmi.terms {
            a_norm[*i] += trip.iter().map(|t| t.2 * t.2).sum::<f64>();
        }
    }
    let a_norm: Vec<f64> = a_norm.into_iter().map(f64::sqrt).collect();
    let mut blocks: Vec<Block> = problem
        .blocks
        .iter()
        .map(|lmi| {
            let n = lmi.dim() as f64;
            let xi = (0..nv)
                .filter(|&i| a_norm[i] > 0.0)
                .map(|i| n.sqrt() * (1.0 + b[i].abs()) / (1.0 + a_norm[i]))
                .fold(n.sqrt().max(10.0), f64::max);
            let eta = a_norm
                .iter()
                .cloned()
                .fold(norm_f(&lmi.constant), f64::max)
                .max(n.sqrt())
                .max(10.0);
            let id = DMatrix::identity(lmi.dim(), lmi.dim());
            Block {
                lmi,
                x: &id * xi,
                z: &id * eta,
            }
        })
        .collect();
    let mut y = DVector::zeros(nv);
    let b_norm = b.norm();
    let c_norm = problem
        .blocks
        .iter()
        .map(|l| norm_f(&l.constant).powi(2))
        .sum::<f64>()
        .sqrt();

    let mut iterations = 0;
    let mut status = SdpStatus::Inaccurate;
    loop {
        let mut pobj = 0.0;
        let mut gap = 0.0;
        let mut ax = DVector::zeros(nv);
        let mut rd = Vec::with_capacity(blocks.len());
        let mut rd_norm2 = 0.0;
        for blk in &blocks {
            pobj += inner(&blk.lmi.constant, &blk.x);
            gap += inner(&blk.x, &blk.z);
            apply_op(blk.lmi, &blk.x, &mut ax);
            let r = &blk.lmi.constant - &blk.z - apply_adjoint(blk.lmi, &y);
            rd_norm2 += r.norm_squared();
            rd.push(r);
        }
        let dobj = b.dot(&y);
        let rp = b - &ax;
        let p_inf = rp.norm() / (1.0 + b_norm);
        let d_inf = rd_norm2.sqrt() / (1.0 + c_norm);
        let rel_gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
        let mu = gap / total_dim as f64;

        if let Some(target) = opt.target {
            if dobj >= target
                && problem
                    .blocks
                    .iter()
                    .all(|l| cholesky(&l.eval(&y)).is_some())
            {
                status = SdpStatus::TargetReached;
            } else if p_inf < 1e-7 && pobj < target - 1e-7 * (1.0 + pobj.abs()) && rel_gap < 1e-2 {
                status = SdpStatus::BelowTarget;
            }
        }
        if status == SdpStatus::Inaccurate
            && p_inf < opt.tol
            && d_inf < opt.tol
            && rel_gap < opt.tol
        {
            status = SdpStatus::Optimal;
        }
        if status != SdpStatus::Inaccurate || iterations >= opt.max_iter || !mu.is_finite() {
            return Ok(SdpSolution {
                y,
                status,
                iterations,
                primal_objective: pobj,
                dual_objective: dobj,
            });
        }
        iterations += 1;

        // Schur complement M_ij = Σ_k ⟨A_ki, Z_k⁻¹ A_kj X_k⟩.
        let mut zinv = Vec::with_capacity(blocks.len());
        let mut zchol = Vec::with_capacity(blocks.len());
        let mut xchol = Vec::with_capacity(blocks.len());
        for blk in &blocks {
            let zc = cholesky(&blk.z)
                .ok_or_else(|| Error::Oracle("dual slack lost definiteness".into()))?;
            let xc = cholesky(&blk.x)
                .ok_or_else(|| Error::Oracle("primal iterate lost definiteness".into()))?;
            zinv.push(crate::linalg::symmetrize(&zc.inverse()));
            zchol.push(zc);
            xchol.push(xc);
        }
        let mut schur = DMatrix::zeros(nv, nv);
        for (k, blk) in blocks.iter().enumerate() {
            let n = blk.lmi.dim();
            let zi = &zinv[k];
            for (jpos, (j, trip_j)) in blk.lmi.terms.iter().enumerate() {
                // G = Z⁻¹ A_j X with A_j = −F_j.
                let g = if trip_j.len() < n {
                    let mut g = DMatrix::zeros(n, n);
                    for &(r, c, v) in trip_j {
                        let zc = zi.column(r);
                        let xr = blk.x.row(c);
                        g.ger(-v, &zc, &xr.transpose(), 1.0);
                    }
                    g
                } else {
                    let mut za = DMatrix::zeros(n, n);
                    for &(r, c, v) in trip_j {
                        for q in 0..n {
                            za[(q, c)] -= zi[(q, r)] * v;
                        }
                    }
                    za * &blk.x
                };
                for (i, trip_i) in blk.lmi.terms[..=jpos].iter() {
                    let s: f64 = trip_i.iter().map(|&(r, c, v)| -v * g[(c, r)]).sum();
                    schur[(*i, *j)] += s;
                    if i != j {
                        schur[(*j, *i)] += s;
                    }
                }
            }
        }
        let schur = crate::linalg::symmetrize(&schur);
        let factor = SchurFactor::new(schur)?;

        // Shared rhs part: b + 𝒜(Z⁻¹ R_d X).
        let mut rhs_base = b.clone();
        for (k, blk) in blocks.iter().enumerate() {
            let m = &zinv[k] * &rd[k] * &blk.x;
            let mut tmp = DVector::zeros(nv);
            apply_op(blk.lmi, &m, &mut tmp);
            rhs_base += tmp;
        }

        let direction = |sigma_mu: f64,
                         corr: Option<&[DMatrix<f64>]>|
         -> Result<(DVector<f64>, Vec<DMatrix<f64>>, Vec<DMatrix<f64>>)> {
            let mut rhs = rhs_base.clone();
            for (k, blk) in blocks.iter().enumerate() {
                let mut tmp = DVector::zeros(nv);
                let mut m = &zinv[k] * (-sigma_mu);
                if let Some(c) = corr {
                    m += &c[k];
                }
                apply_op(blk.lmi, &m, &mut tmp);
                rhs += tmp;
            }
            let dy = factor.solve(&rhs)?;
            let mut dzs = Vec::with_capacity(blocks.len());
            let mut dxs = Vec::with_capacity(blocks.len());
            for (k, blk) in blocks.iter().enumerate() {
                let dz = &rd[k] - apply_adjoint(blk.lmi, &dy);
                let mut dx = &zinv[k] * sigma_mu - &blk.x - &zinv[k] * &dz * &blk.x;
                if let Some(c) = corr {
                    dx -= &c[k];
                }
                dxs.push(crate::linalg::symmetrize(&dx));
                dzs.push(dz);
            }
            Ok((dy, dxs, dzs))
        };
        let steps = |dxs: &[DMatrix<f64>], dzs: &[DMatrix<f64>]| {
            let mut ap = f64::INFINITY;
            let mut ad = f64::INFINITY;
            for k in 0..blocks.len() {
                ap = ap.min(max_step(&xchol[k], &dxs[k]));
                ad = ad.min(max_step(&zchol[k], &dzs[k]));
            }
            (ap, ad)
        };

        // Predictor.
        let (_, dxa, dza) = direction(0.0, None)?;
        let (ap, ad) = steps(&dxa, &dza);
        let (ap, ad) = (ap.min(1.0), ad.min(1.0));
        let mut mu_aff = 0.0;
        for (k, blk) in blocks.iter().enumerate() {
            mu_aff += inner(&(&blk.x + &dxa[k] * ap), &(&blk.z + &dza[k] * ad));
        }
        mu_aff /= total_dim as f64;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        // Corrector.
        let corr: Vec<DMatrix<f64>> = (0..blocks.len())
            .map(|k| &zinv[k] * &dza[k] * &dxa[k])
            .collect();
        let (dy, dx, dz) = direction(sigma * mu, Some(&corr))?;
        let (ap, ad) = steps(&dx, &dz);
        let ap = (0.95 * ap).min(1.0);
        let ad = (0.95 * ad).min(1.0);
        if ap < 1e-12 && ad < 1e-12 {
            return Ok(SdpSolution {
                y,
                status: SdpStatus::Inaccurate,
                iterations,
                primal_objective: pobj,
                dual_objective: dobj,
            });
        }
        for (k, blk) in blocks.iter_mut().enumerate() {
            blk.x += &dx[k] * ap;
            blk.z += &dz[k] * ad;
        }
        y += dy * ad;
    }
}

enum SchurFactor {
    Chol(Cholesky<f64, Dyn>),
    Lu(nalgebra::LU<f64, Dyn, Dyn>),
}

impl SchurFactor {
    fn new(m: DMatrix<f64>) -> Result<Self> {
        if let Some(c) = Cholesky::new(m.clone()) {
            return Ok(Self::Chol(c));
        }
        let scale = m.diagonal().amax().max(1e-300);
        let dim = m.nrows();
        let reg = m + DMatrix::identity(dim, dim) * (1e-12 * scale);
        if let Some(c) = Cholesky::new(reg.clone()) {
            return Ok(Self::Chol(c));
        }
        Ok(Self::Lu(reg.lu()))
    }

    fn solve(&self, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        let sol = match self {
            Self::Chol(c) => Some(c.solve(rhs)),
            Self::Lu(lu) => lu.solve(rhs),
        };
        match sol {
            Some(s) if s.iter().all(|v| v.is_finite()) => Ok(s),
            _ => Err(Error::Oracle("Schur complement system is singular".into())),
        }
    }
}
