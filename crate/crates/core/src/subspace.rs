//! Gradient-informed subspace: empirical Fisher matrix of posterior-mean
//! gradients, its eigendecomposition, and back-projection of subspace
//! coefficients into the unit cube.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::domain::ObservationSet;
use crate::error::{Error, Result};

/// Spectra whose largest eigenvalue is at or below this are treated as empty.
pub const DEGENERATE_EIGVAL: f64 = 1e-14;

#[derive(Debug, Clone)]
pub struct FisherMatrix {
    pub h: DMatrix<f64>,
    pub sample_count: usize,
}

/// `H = (1/m) Σ g gᵀ` over the rows of `grads`, symmetrized.
pub fn fisher_matrix(grads: &DMatrix<f64>) -> Result<FisherMatrix> {
    let m = grads.nrows();
    if m == 0 {
        return Err(Error::InvalidArgument("no gradient rows".into()));
    }
    if let Some(row) = grads.row_iter().position(|r| r.iter().any(|v| !v.is_finite())) {
        return Err(Error::InvalidGradient { row });
    }
    let mut h = grads.tr_mul(grads) / m as f64;
    let ht = h.transpose();
    h = (h + ht) * 0.5;
    Ok(FisherMatrix { h, sample_count: m })
}

/// Full symmetric eigendecomposition with eigenvalues in descending order.
/// Each eigenvector is signed so its largest-magnitude entry is positive
/// (first such entry on ties).
pub fn top_eigvecs(h: &FisherMatrix) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let d = h.h.nrows();
    if d == 0 || h.h.ncols() != d {
        return Err(Error::InvalidArgument("Fisher matrix must be square and nonempty".into()));
    }
    let eig = SymmetricEigen::try_new(h.h.clone(), f64::EPSILON, 0)
        .ok_or_else(|| Error::Numeric("symmetric eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let vals = DVector::from_iterator(d, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vecs = DMatrix::zeros(d, d);
    for (j, &k) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(k).clone_owned();
        let pivot = col.iter().enumerate().fold(0, |best, (i, v)| {
            if v.abs() > col[best].abs() {
                i
            } else {
                best
            }
        });
        if col[pivot] < 0.0 {
            col.neg_mut();
        }
        vecs.set_column(j, &col);
    }
    Ok((vals, vecs))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RSelectionPolicy {
    Fixed { r: usize },
    VarianceExplained { threshold: f64 },
}

impl Default for RSelectionPolicy {
    fn default() -> Self {
        RSelectionPolicy::Fixed { r: 10 }
    }
}

impl RSelectionPolicy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            RSelectionPolicy::Fixed { r } if r == 0 => {
                Err(Error::InvalidConfig("fixed r must be at least 1".into()))
            }
            RSelectionPolicy::VarianceExplained { threshold } if !(threshold > 0.0 && threshold < 1.0) => Err(
                Error::InvalidConfig(format!("variance threshold {threshold} not in (0, 1)")),
            ),
            _ => Ok(()),
        }
    }

    pub fn label(&self) -> String {
        match *self {
            RSelectionPolicy::Fixed { r } => format!("r={r}"),
            RSelectionPolicy::VarianceExplained { threshold } => format!("var={threshold}"),
        }
    }
}

/// Subspace dimension for a descending, nonnegative spectrum.
pub fn select_r(eigvals: &[f64], policy: RSelectionPolicy) -> usize {
    let d = eigvals.len().max(1);
    match policy {
        RSelectionPolicy::Fixed { r } => r.clamp(1, d),
        RSelectionPolicy::VarianceExplained { threshold } => {
            let total: f64 = eigvals.iter().map(|v| v.max(0.0)).sum();
            if total <= 0.0 {
                return 1;
            }
            let mut acc = 0.0;
            for (k, v) in eigvals.iter().enumerate() {
                acc += v.max(0.0);
                if acc / total >= threshold {
                    return k + 1;
                }
            }
            d
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum XRefMode {
    #[default]
    Centroid,
    Incumbent,
}

impl XRefMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            XRefMode::Centroid => "centroid",
            XRefMode::Incumbent => "incumbent",
        }
    }
}

/// Column-wise mean of the observed inputs.
pub fn centroid(obs: &ObservationSet) -> Result<DVector<f64>> {
    reference_point(obs, XRefMode::Centroid)
}

pub fn reference_point(obs: &ObservationSet, mode: XRefMode) -> Result<DVector<f64>> {
    if obs.is_empty() {
        return Err(Error::InvalidArgument("reference point of an empty observation set".into()));
    }
    Ok(match mode {
        XRefMode::Centroid => obs.x().row_mean().transpose(),
        XRefMode::Incumbent => {
            let i = obs.argmax().expect("nonempty");
            obs.x().row(i).transpose()
        }
    })
}

/// Rows `x_ref + V_r z_j`, optionally clamped to the unit cube.
pub fn project_candidates(
    x_ref: &DVector<f64>,
    v_r: &DMatrix<f64>,
    z: &DMatrix<f64>,
    clip: bool,
) -> Result<DMatrix<f64>> {
    let d = x_ref.len();
    if v_r.nrows() != d || z.ncols() != v_r.ncols() {
        return Err(Error::InvalidArgument(format!(
            "shape mismatch: x_ref {d}, V_r {}x{}, Z {}x{}",
            v_r.nrows(),
            v_r.ncols(),
            z.nrows(),
            z.ncols()
        )));
    }
    let mut out = z * v_r.transpose();
    for mut row in out.row_iter_mut() {
        for (j, v) in row.iter_mut().enumerate() {
            *v += x_ref[j];
            if clip {
                *v = v.clamp(0.0, 1.0);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct GiSubspace {
    pub v_r: DMatrix<f64>,
    pub eigvals: DVector<f64>,
    pub r: usize,
    pub x_ref: DVector<f64>,
    /// Set when the spectrum was empty and the first axis was used instead.
    pub degenerate: bool,
}

impl GiSubspace {
    /// Builds the subspace from mean gradients and the reference point.
    pub fn from_gradients(grads: &DMatrix<f64>, policy: RSelectionPolicy, x_ref: DVector<f64>) -> Result<Self> {
        let h = fisher_matrix(grads)?;
        let (eigvals, vecs) = top_eigvecs(&h)?;
        let d = eigvals.len();
        if x_ref.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: x_ref.len(),
            });
        }
        if eigvals[0] <= DEGENERATE_EIGVAL {
            let mut v_r = DMatrix::zeros(d, 1);
            v_r[(0, 0)] = 1.0;
            return Ok(Self {
                v_r,
                eigvals: eigvals.map(|v| v.max(0.0)),
                r: 1,
                x_ref,
                degenerate: true,
            });
        }
        let eigvals = eigvals.map(|v| v.max(0.0));
        let r = select_r(eigvals.as_slice(), policy);
        Ok(Self {
            v_r: vecs.columns(0, r).into_owned(),
            eigvals,
            r,
            x_ref,
            degenerate: false,
        })
    }

    pub fn project(&self, z: &DMatrix<f64>, clip: bool) -> Result<DMatrix<f64>> {
        project_candidates(&self.x_ref, &self.v_r, z, clip)
    }
}
