use alloc::vec::Vec;

use super::params::ParamSet;
use super::tensor::Tensor;
use crate::{Error, Result};

/// Central-difference gradient of a scalar function of `params`, one tensor
/// per parameter in set order. `params` is restored before returning.
pub fn finite_diff_grad<F>(mut f: F, params: &mut ParamSet, h: f64) -> Result<Vec<Tensor>>
where
    F: FnMut(&ParamSet) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let mut out = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let n = params.value(i).len();
        let mut g = Vec::with_capacity(n);
        for j in 0..n {
            let orig = params.value(i).data()[j];
            params.value_mut(i).data_mut()[j] = orig + h;
            let plus = f(params);
            params.value_mut(i).data_mut()[j] = orig - h;
            let minus = f(params);
            params.value_mut(i).data_mut()[j] = orig;
            g.push((plus? - minus?) / (2.0 * h));
        }
        out.push(Tensor::new(params.value(i).shape(), g)?);
    }
    Ok(out)
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    let scale = a.abs().max(b.abs()).max(floor);
    (a - b).abs() / scale
}

/// Largest entrywise relative error between two gradient lists.
pub fn max_relative_error(analytic: &[Tensor], numeric: &[Tensor], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .flat_map(|(a, n)| a.data().iter().zip(n.data()))
        .map(|(&a, &n)| relative_error(a, n, floor))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_has_unit_slope() {
        let mut ps = ParamSet::new();
        ps.insert("p", Tensor::scalar(0.3)).unwrap();
        let g = finite_diff_grad(|p| Ok(p.value(0).data()[0]), &mut ps, 1e-5).unwrap();
        assert!((g[0].data()[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn square_at_three() {
        let mut ps = ParamSet::new();
        ps.insert("p", Tensor::scalar(3.0)).unwrap();
        let g = finite_diff_grad(
            |p| {
                let v = p.value(0).data()[0];
                Ok(v * v)
            },
            &mut ps,
            1e-5,
        )
        .unwrap();
        assert!((g[0].data()[0] - 6.0).abs() < 1e-9);
        assert_eq!(ps.value(0).data(), &[3.0]);
    }

    #[test]
    fn rejects_nonpositive_step() {
        let mut ps = ParamSet::new();
        ps.insert("p", Tensor::scalar(3.0)).unwrap();
        assert!(finite_diff_grad(|_| Ok(0.0), &mut ps, 0.0).is_err());
    }
}
