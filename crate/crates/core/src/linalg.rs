use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result};

pub(crate) fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

pub(crate) fn gaussian_vector<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Array1<f64> {
    Array1::from_shape_simple_fn(len, || rng.sample(StandardNormal))
}

/// Orthonormalizes the rows of `m` in place (modified Gram-Schmidt, two passes).
pub(crate) fn orthonormalize_rows(m: &mut Array2<f64>) -> Result<()> {
    if m.nrows() > m.ncols() {
        return Err(Error::Infeasible(format!(
            "{} orthonormal vectors do not fit in dimension {}",
            m.nrows(),
            m.ncols()
        )));
    }
    for i in 0..m.nrows() {
        for _pass in 0..2 {
            for j in 0..i {
                let proj = m.row(i).dot(&m.row(j));
                let rj = m.row(j).to_owned();
                m.row_mut(i).scaled_add(-proj, &rj);
            }
        }
        let norm = m.row(i).dot(&m.row(i)).sqrt();
        if norm < 1e-12 {
            return Err(Error::Infeasible("rank-deficient matrix".into()));
        }
        m.row_mut(i).mapv_inplace(|v| v / norm);
    }
    Ok(())
}

pub(crate) fn normalize(v: &mut Array1<f64>) -> Result<()> {
    let norm = v.dot(v).sqrt();
    if norm < 1e-300 {
        return Err(Error::Infeasible("cannot normalize zero vector".into()));
    }
    v.mapv_inplace(|x| x / norm);
    Ok(())
}
