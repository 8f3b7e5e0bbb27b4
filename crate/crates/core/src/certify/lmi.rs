//! Affine assembly of the delay-dependent certificate matrix `Ψ`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::sdp::{triplets_of, Triplets};
use crate::error::{Error, Result};
use crate::linalg::{put, put_sym};

/// Per-channel delay bounds `h_m` in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayBounds {
    pub h: Vec<f64>,
}

impl DelayBounds {
    pub fn new(h: Vec<f64>) -> Result<Self> {
        if let Some(m) = h.iter().position(|&x| !(x >= 0.0 && x.is_finite())) {
            return Err(Error::InvalidParameter(format!(
                "delay bound {m} must be >= 0"
            )));
        }
        Ok(Self { h })
    }

    pub fn uniform(h: f64, channels: usize) -> Result<Self> {
        Self::new(vec![h; channels])
    }

    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }

    /// The common bound if all channels share one.
    pub fn as_uniform(&self) -> Option<f64> {
        let first = *self.h.first()?;
        self.h.iter().all(|&x| x == first).then_some(first)
    }

    pub fn max(&self) -> f64 {
        self.h.iter().cloned().fold(0.0, f64::max)
    }
}

/// Coupling of the delayed-state blocks in the lower-right corner of `Ψ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Psi44Coupling {
    /// Only the diagonal terms `−𝒯_mᵀR̄𝒯_m`.
    BlockDiagonal,
    /// All cross terms `−𝒯_iᵀR̄𝒯_j`, as produced by expanding `ṗ̃ᵀR̄ṗ̃`.
    #[default]
    Full,
}

/// Which delays the certificate distinguishes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelMode {
    /// One delay per directed channel.
    #[default]
    Directed,
    /// One delay per link, shared by both directions.
    PerLink,
}

impl ChannelMode {
    /// Delay count for `directed` directed channels.
    pub fn count(self, directed: usize) -> usize {
        match self {
            ChannelMode::Directed => directed,
            ChannelMode::PerLink => directed / 2,
        }
    }
}

/// One `(L̄, {𝒯_m})` pair at which `Ψ` is enforced.
#[derive(Debug, Clone, PartialEq)]
pub struct Vertex {
    pub lbar: DMatrix<f64>,
    pub tbar: Vec<DMatrix<f64>>,
}

impl Vertex {
    /// Convex combination `(1 − s)·self + s·other`.
    pub fn blend(&self, other: &Vertex, s: f64) -> Result<Vertex> {
        if self.tbar.len() != other.tbar.len() || self.lbar.shape() != other.lbar.shape() {
            return Err(Error::Dimension("vertices differ in shape".into()));
        }
        Ok(Vertex {
            lbar: &self.lbar * (1.0 - s) + &other.lbar * s,
            tbar: self
                .tbar
                .iter()
                .zip(&other.tbar)
                .map(|(a, b)| a * (1.0 - s) + b * s)
                .collect(),
        })
    }

    /// Vertex for `mode`, given one on directed channels (both directions of
    /// a link are adjacent).
    pub fn with_mode(&self, mode: ChannelMode) -> Vertex {
        match mode {
            ChannelMode::Directed => self.clone(),
            ChannelMode::PerLink => Vertex {
                lbar: self.lbar.clone(),
                tbar: self
                    .tbar
                    .chunks(2)
                    .map(|c| c.iter().skip(1).fold(c[0].clone(), |acc, t| acc + t))
                    .collect(),
            },
        }
    }
}

/// Decision matrices of the certificate, one triple per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub s: Vec<DMatrix<f64>>,
    pub r: Vec<DMatrix<f64>>,
    pub s12: Vec<DMatrix<f64>>,
}

/// Flat indexing of [`Decision`]: per channel, `svec(S_m)`, `svec(R_m)`,
/// then `S12_m` column-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecisionLayout {
    pub dim: usize,
    pub channels: usize,
}

impl DecisionLayout {
    pub fn sym_len(&self) -> usize {
        self.dim * (self.dim + 1) / 2
    }

    pub fn per_channel(&self) -> usize {
        2 * self.sym_len() + self.dim * self.dim
    }

    pub fn len(&self) -> usize {
        self.channels * self.per_channel()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn s_offset(&self, m: usize) -> usize {
        m * self.per_channel()
    }

    pub fn r_offset(&self, m: usize) -> usize {
        self.s_offset(m) + self.sym_len()
    }

    pub fn s12_offset(&self, m: usize) -> usize {
        self.r_offset(m) + self.sym_len()
    }

    fn sym_from(&self, x: &[f64]) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.dim, self.dim);
        let mut idx = 0;
        for c in 0..self.dim {
            for r in 0..=c {
                out[(r, c)] = x[idx];
                out[(c, r)] = x[idx];
                idx += 1;
            }
        }
        out
    }

    pub fn decision(&self, x: &[f64]) -> Decision {
        let d = self.dim;
        let mut dec = Decision {
            s: Vec::new(),
            r: Vec::new(),
            s12: Vec::new(),
        };
        for m in 0..self.channels {
            dec.s.push(self.sym_from(&x[self.s_offset(m)..]));
            dec.r.push(self.sym_from(&x[self.r_offset(m)..]));
            let o = self.s12_offset(m);
            dec.s12
                .push(DMatrix::from_column_slice(d, d, &x[o..o + d * d]));
        }
        dec
    }

    pub fn flatten(&self, dec: &Decision) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.len());
        for m in 0..self.channels {
            for mat in [&dec.s[m], &dec.r[m]] {
                for c in 0..self.dim {
                    for r in 0..=c {
                        x.push(mat[(r, c)]);
                    }
                }
            }
            x.extend(dec.s12[m].iter());
        }
        x
    }

    pub fn zeros(&self) -> Decision {
        self.decision(&vec![0.0; self.len()])
    }

    pub fn unit(&self, i: usize) -> Decision {
        let mut x = vec![0.0; self.len()];
        x[i] = 1.0;
        self.decision(&x)
    }
}

/// `Ψ = constant + Σ_i x_i·coeffs[i]` over a [`DecisionLayout`].
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMatrix {
    pub constant: DMatrix<f64>,
    pub coeffs: Vec<Triplets>,
}

impl AffineMatrix {
    pub fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        let mut out = self.constant.clone();
        for (xi, trip) in x.iter().zip(&self.coeffs) {
            if *xi != 0.0 {
                for &(r, c, v) in trip {
                    out[(r, c)] += xi * v;
                }
            }
        }
        out
    }
}

/// Fixed data entering `Ψ` for one vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiData<'a> {
    /// `K^{½}W`, n × (n−1).
    pub kw: &'a DMatrix<f64>,
    pub damping: &'a DVector<f64>,
    pub vertex: &'a Vertex,
    pub h: &'a [f64],
    pub coupling: Psi44Coupling,
}

/// Side length of `Ψ`: `n + (n−1)(1 + 2C)` for `C` channels.
pub fn psi_dim(n: usize, channels: usize) -> usize {
    n + (n - 1) * (1 + 2 * channels)
}

/// Dense `Ψ` at fixed decision matrices. With `include_constant = false` only
/// the part linear in the decision matrices is returned.
pub fn psi_matrix(data: &PsiData, dec: &Decision, include_constant: bool) -> DMatrix<f64> {
    let n = data.kw.nrows();
    let r = data.kw.ncols();
    let c = data.vertex.tbar.len();
    let dim = psi_dim(n, c);
    let (op, oe1, oe2) = (n, n + r, n + r + c * r);
    let mut psi = DMatrix::zeros(dim, dim);

    let mut rbar = DMatrix::zeros(r, r);
    for (m, hm) in data.h.iter().enumerate() {
        if *hm > 0.0 {
            rbar += &dec.r[m] * (hm * hm);
        }
    }
    let l = &data.vertex.lbar;
    let t = &data.vertex.tbar;
    let kw_rbar = data.kw * &rbar;
    let l_rbar = l * &rbar;

    let mut b11 = -&kw_rbar * data.kw.transpose();
    let mut b22 = -&l_rbar * l;
    if include_constant {
        for i in 0..n {
            b11[(i, i)] += data.damping[i];
        }
        b22 += l;
    }
    put(&mut psi, 0, 0, &b11);
    put(&mut psi, op, op, &b22);
    put_sym(&mut psi, 0, op, &(&kw_rbar * l));

    let rbar_t: Vec<DMatrix<f64>> = t.iter().map(|tm| &rbar * tm).collect();
    for m in 0..c {
        let s = &dec.s[m];
        put_sym(&mut psi, 0, oe2 + m * r, &(-&kw_rbar * &t[m]));
        put_sym(&mut psi, op, oe1 + m * r, &(-s));
        let mut b24 = &l_rbar * &t[m] - s;
        if include_constant {
            b24 -= &t[m] * 0.5;
        }
        put_sym(&mut psi, op, oe2 + m * r, &b24);
        let rs = &dec.r[m] + s;
        put(&mut psi, oe1 + m * r, oe1 + m * r, &rs);
        put_sym(&mut psi, oe1 + m * r, oe2 + m * r, &(&dec.s12[m] + s));
        put(
            &mut psi,
            oe2 + m * r,
            oe2 + m * r,
            &(rs - t[m].transpose() * &rbar_t[m]),
        );
        if data.coupling == Psi44Coupling::Full {
            for j in 0..m {
                put_sym(
                    &mut psi,
                    oe2 + m * r,
                    oe2 + j * r,
                    &(-t[m].transpose() * &rbar_t[j]),
                );
            }
        }
    }
    crate::linalg::symmetrize(&psi)
}

/// Affine form of `Ψ` over the decision layout.
pub fn assemble_psi_affine(data: &PsiData, layout: &DecisionLayout) -> Result<AffineMatrix> {
    if data.h.len() != layout.channels || data.vertex.tbar.len() != layout.channels {
        return Err(Error::Dimension(format!(
            "{} delay bounds and {} channel matrices for {} channels",
            data.h.len(),
            data.vertex.tbar.len(),
            layout.channels
        )));
    }
    let zero = layout.zeros();
    let constant = psi_matrix(data, &zero, true);
    let coeffs = (0..layout.len())
        .map(|i| triplets_of(&psi_matrix(data, &layout.unit(i), false)))
        .collect();
    Ok(AffineMatrix { constant, coeffs })
}

/// `[[R_m, S12_m], [S12_mᵀ, R_m]]`.
pub fn rs12_matrix(dec: &Decision, m: usize) -> DMatrix<f64> {
    let r = dec.r[m].nrows();
    let mut out = DMatrix::zeros(2 * r, 2 * r);
    put(&mut out, 0, 0, &dec.r[m]);
    put(&mut out, r, r, &dec.r[m]);
    put_sym(&mut out, 0, r, &dec.s12[m]);
    out
}
