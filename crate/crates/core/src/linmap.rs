//! Invertible linear maps of ℝ^{2n+1} and their norm with respect to the
//! Korányi gauge, `‖M‖ = sup_{|x|_h = 1} |Mx|_h`.

use std::f64::consts::PI;
use std::sync::OnceLock;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heis::{koranyi, Coords, GroupPoint, HeisDim};

/// An estimate of `‖M‖`. `refinement_gap` is how much local refinement
/// improved on the best grid value; it is zero for closed-form results.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormEstimate {
    pub value: f64,
    pub refinement_gap: f64,
    pub grid_points: usize,
    pub exact: bool,
}

impl NormEstimate {
    fn exact(value: f64) -> Self {
        NormEstimate { value, refinement_gap: 0.0, grid_points: 0, exact: true }
    }

    /// Absolute tolerance to apply when comparing against the true supremum.
    pub fn tolerance(&self) -> f64 {
        if self.exact {
            0.0
        } else {
            self.refinement_gap.max(1e-12 * self.value)
        }
    }
}

#[derive(Debug, Clone)]
pub struct LinearMap {
    entries: DMatrix<f64>,
    det: f64,
    inverse: Option<DMatrix<f64>>,
    op_norm: OnceLock<NormEstimate>,
}

impl LinearMap {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        let k = entries.nrows();
        if k != entries.ncols() || k < 3 || k.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "linear map on ℍⁿ must be (2n+1)×(2n+1), got {}×{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("matrix entries must be finite"));
        }
        let det = entries.determinant();
        let inverse = if det != 0.0 { entries.clone().try_inverse() } else { None };
        Ok(LinearMap { entries, det, inverse, op_norm: OnceLock::new() })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::invalid("matrix rows must all have the same length"));
        }
        LinearMap::new(DMatrix::from_fn(k, k, |i, j| rows[i][j]))
    }

    pub fn diagonal(diag: &[f64]) -> Result<Self> {
        LinearMap::new(DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(diag)))
    }

    pub fn identity(n: usize) -> Self {
        LinearMap::new(DMatrix::identity(2 * n + 1, 2 * n + 1)).expect("identity is valid")
    }

    pub fn dim(&self) -> HeisDim {
        HeisDim::new((self.entries.nrows() - 1) / 2).expect("validated at construction")
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn det(&self) -> f64 {
        self.det
    }

    pub fn inverse_matrix(&self) -> Option<&DMatrix<f64>> {
        self.inverse.as_ref()
    }

    pub fn inverse(&self) -> Result<LinearMap> {
        match &self.inverse {
            Some(inv) => LinearMap::new(inv.clone()),
            None => Err(Error::Singular(self.det)),
        }
    }

    pub fn apply(&self, x: &GroupPoint) -> Result<GroupPoint> {
        if x.coords().len() != self.entries.nrows() {
            return Err(Error::DimensionMismatch { expected: self.dim().n(), found: x.n() });
        }
        Ok(GroupPoint::from_coords(self.apply_coords(x.coords())))
    }

    pub(crate) fn apply_coords(&self, x: &[f64]) -> Coords {
        let k = self.entries.nrows();
        (0..k).map(|i| (0..k).map(|j| self.entries[(i, j)] * x[j]).sum()).collect()
    }

    /// Diagonal entries if the map is diagonal.
    pub fn as_diagonal(&self) -> Option<Vec<f64>> {
        let k = self.entries.nrows();
        for i in 0..k {
            for j in 0..k {
                if i != j && self.entries[(i, j)] != 0.0 {
                    return None;
                }
            }
        }
        Some((0..k).map(|i| self.entries[(i, i)]).collect())
    }

    /// `‖M‖`, computed on first use and cached.
    pub fn op_norm(&self) -> NormEstimate {
        *self.op_norm.get_or_init(|| matrix_op_norm(self))
    }
}

/// Exact `‖diag(a₁, …, a_{2n}, a_t)‖ = max(maxᵢ |aᵢ|, |a_t|^{1/2})`.
///
/// On the unit sphere write `s = |x_h|²`, `t² = 1 − s²`; then
/// `|Mx|_h⁴ ≤ A⁴ s² + a_t² (1 − s²)` with `A = maxᵢ |aᵢ|`, and the bound is
/// attained at `s ∈ {0, 1}`.
pub fn diagonal_op_norm(diag: &[f64]) -> f64 {
    let (h, t) = diag.split_at(diag.len() - 1);
    let horizontal = h.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    horizontal.max(t[0].abs().sqrt())
}

const GRID_TARGET: usize = 12_000;
const REFINE_STARTS: usize = 6;
const REFINE_SWEEPS: usize = 8;

/// Estimate of `sup_{|x|_h=1} |Mx|_h`.
///
/// The Korányi sphere is parametrized as `x = (√(cos φ) u(θ), sin φ)` with
/// `u(θ)` hyperspherical on `S^{2n−1}` and `φ ∈ [−π/2, π/2]`. A regular grid
/// of at least 10⁴ parameter points is scanned and the best few points are
/// refined by coordinate-wise golden-section search. Maps of the form
/// `diag(a, …, a, a²)` with `a > 0` return `a` exactly.
pub fn matrix_op_norm(m: &LinearMap) -> NormEstimate {
    if m.entries.iter().all(|&v| v == 0.0) {
        return NormEstimate::exact(0.0);
    }
    if let Some(d) = m.as_diagonal() {
        let a = d[0];
        let (h, t) = d.split_at(d.len() - 1);
        if a > 0.0 && h.iter().all(|&v| v == a) && t[0] == a * a {
            return NormEstimate::exact(a);
        }
    }

    let n = m.dim().n();
    let axes = grid_axes(n);
    let total: usize = axes.iter().map(|a| a.len()).product();
    let objective = |angles: &[f64]| koranyi(&m.apply_coords(&sphere_point(angles, n)));

    // Grid scan, keeping the best few points.
    let mut best: Vec<(f64, Vec<f64>)> = Vec::with_capacity(REFINE_STARTS + 1);
    let mut idx = vec![0usize; axes.len()];
    for _ in 0..total {
        let angles: Vec<f64> = idx.iter().zip(&axes).map(|(&i, ax)| ax[i]).collect();
        let v = objective(&angles);
        if best.len() < REFINE_STARTS || v > best[best.len() - 1].0 {
            best.push((v, angles));
            best.sort_by(|a, b| b.0.total_cmp(&a.0));
            best.truncate(REFINE_STARTS);
        }
        for (k, ax) in axes.iter().enumerate() {
            idx[k] += 1;
            if idx[k] < ax.len() {
                break;
            }
            idx[k] = 0;
        }
    }
    let grid_best = best[0].0;

    let steps: Vec<f64> = axes.iter().map(|ax| ax[1] - ax[0]).collect();
    let mut refined = grid_best;
    for (_, start) in best {
        let mut a = start;
        let mut current = objective(&a);
        for _ in 0..REFINE_SWEEPS {
            let before = current;
            for k in 0..a.len() {
                let centre = a[k];
                let (lo, hi) = (centre - steps[k], centre + steps[k]);
                let arg = golden_max(
                    |s| {
                        let mut b = a.clone();
                        b[k] = s;
                        objective(&b)
                    },
                    lo,
                    hi,
                );
                let mut b = a.clone();
                b[k] = arg;
                let v = objective(&b);
                if v > current {
                    current = v;
                    a = b;
                }
            }
            if current - before <= 1e-15 * current {
                break;
            }
        }
        refined = refined.max(current);
    }

    NormEstimate {
        value: refined,
        refinement_gap: refined - grid_best,
        grid_points: total,
        exact: false,
    }
}

/// Parameter grids: `2n − 1` sphere angles followed by `φ`.
fn grid_axes(n: usize) -> Vec<Vec<f64>> {
    let d = 2 * n;
    let per = ((GRID_TARGET as f64).powf(1.0 / d as f64).ceil() as usize).max(6);
    let mut axes = Vec::with_capacity(d);
    if n == 1 {
        axes.push(periodic_axis(128));
        axes.push(closed_axis(-PI / 2.0, PI / 2.0, 97));
        return axes;
    }
    for _ in 0..d - 2 {
        axes.push(closed_axis(0.0, PI, per));
    }
    axes.push(periodic_axis(2 * per));
    axes.push(closed_axis(-PI / 2.0, PI / 2.0, per | 1));
    axes
}

fn periodic_axis(k: usize) -> Vec<f64> {
    (0..k).map(|i| 2.0 * PI * i as f64 / k as f64).collect()
}

fn closed_axis(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    (0..k).map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64).collect()
}

fn sphere_point(angles: &[f64], n: usize) -> Coords {
    let d = 2 * n;
    let phi = angles[d - 1].clamp(-PI / 2.0, PI / 2.0);
    let s = phi.cos().max(0.0).sqrt();
    let mut x: Coords = Coords::from_elem(0.0, d + 1);
    let mut sin_prod = 1.0;
    for i in 0..d - 1 {
        x[i] = sin_prod * angles[i].cos();
        sin_prod *= angles[i].sin();
    }
    x[d - 1] = sin_prod;
    for v in &mut x[..d] {
        *v *= s;
    }
    x[d] = phi.sin();
    x
}

fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut c = hi - INV_PHI * (hi - lo);
    let mut d = lo + INV_PHI * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while hi - lo > 1e-10 {
        if fc > fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - INV_PHI * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + INV_PHI * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn closed_form_fast_path() {
        let m = LinearMap::diagonal(&[2.0, 2.0, 4.0]).unwrap();
        let e = m.op_norm();
        assert!(e.exact);
        assert_eq!(e.value, 2.0);
        assert_eq!(LinearMap::identity(1).op_norm().value, 1.0);
        assert_eq!(LinearMap::new(DMatrix::zeros(3, 3)).unwrap().op_norm().value, 0.0);
    }

    #[test]
    fn anisotropic_diagonal() {
        let m = LinearMap::diagonal(&[2.0, 1.0, 1.0]).unwrap();
        let e = m.op_norm();
        assert!(!e.exact);
        assert!((e.value - 2.0).abs() < 1e-3);
        assert_relative_eq!(diagonal_op_norm(&[2.0, 1.0, 1.0]), 2.0);
    }

    #[test]
    fn estimator_matches_diagonal_closed_form() {
        for d in [[0.5, 1.5, 0.3], [1.0, 0.2, 9.0], [-3.0, 0.1, 4.0], [0.7, 0.7, 0.2]] {
            let est = LinearMap::diagonal(&d).unwrap().op_norm().value;
            assert_relative_eq!(est, diagonal_op_norm(&d), max_relative = 1e-6);
        }
    }

    #[test]
    fn two_dimensional_grid() {
        let m = LinearMap::diagonal(&[1.0, 3.0, 0.5, 1.0, 4.0]).unwrap();
        let est = m.op_norm().value;
        assert_relative_eq!(est, 3.0, max_relative = 1e-4);
    }

    #[test]
    fn sphere_parametrization_is_on_sphere() {
        for n in 1..=2 {
            let axes = grid_axes(n);
            let angles: Vec<f64> = axes.iter().map(|a| a[a.len() / 3]).collect();
            assert_relative_eq!(koranyi(&sphere_point(&angles, n)), 1.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn determinant_and_inverse() {
        let m = LinearMap::from_rows(&[vec![2., 1., 0.], vec![0., 1., 0.], vec![0., 0., 3.]]).unwrap();
        assert_relative_eq!(m.det(), 6.0, max_relative = 1e-14);
        let inv = m.inverse().unwrap();
        let x = GroupPoint::new(vec![0.3, -0.2, 1.1]).unwrap();
        let back = inv.apply(&m.apply(&x).unwrap()).unwrap();
        for (a, b) in back.coords().iter().zip(x.coords()) {
            assert!((a - b).abs() < 1e-14);
        }
        let sing = LinearMap::diagonal(&[1.0, 0.0, 1.0]).unwrap();
        assert!(matches!(sing.inverse(), Err(Error::Singular(_))));
        assert!(LinearMap::from_rows(&[vec![1., 0.], vec![0., 1.]]).is_err());
    }
}
