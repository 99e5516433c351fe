//! Within/between-class covariance and the NC1 neural-collapse measure.

use crate::error::{ApaError, Result};
use crate::scalar::{count, lit, Scalar};
use crate::tensor::Tensor;

/// Eigenvalues below this fraction of the largest are treated as zero when
/// forming the pseudo-inverse.
pub const PINV_RELATIVE_CUTOFF: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct CovariancePair<T> {
    /// `(1/n) ΣₖΣⱼ (f − f̄ₖ)(f − f̄ₖ)ᵀ`
    pub sigma_w: Tensor<T>,
    /// `(1/K) Σₖ (f̄ₖ − f_G)(f̄ₖ − f_G)ᵀ`
    pub sigma_b: Tensor<T>,
    pub classes: usize,
    pub dim: usize,
}

/// Class means (`K × d`) and the global mean (`1 × d`).
fn means<T: Scalar>(features: &Tensor<T>, labels: &[usize]) -> Result<(Tensor<T>, Tensor<T>, Vec<usize>)> {
    let (n, d) = features.shape();
    if labels.len() != n {
        return Err(ApaError::Shape(format!("{} labels for {n} feature rows", labels.len())));
    }
    if n == 0 || d == 0 {
        return Err(ApaError::Domain("covariances need at least one sample and one feature".into()));
    }
    let k = labels.iter().max().map_or(0, |&m| m + 1);
    let mut class_means = Tensor::zeros(k, d);
    let mut sizes = vec![0usize; k];
    for (i, &y) in labels.iter().enumerate() {
        sizes[y] += 1;
        for (m, &x) in class_means.row_mut(y).iter_mut().zip(features.row(i)) {
            *m = *m + x;
        }
    }
    if let Some(empty) = sizes.iter().position(|&s| s == 0) {
        return Err(ApaError::Domain(format!("class {empty} has no samples")));
    }
    for (c, &s) in sizes.iter().enumerate() {
        let s: T = count(s);
        for m in class_means.row_mut(c) {
            *m = *m / s;
        }
    }
    let global = features.sum_rows().scale(T::one() / count(n));
    Ok((class_means, global, sizes))
}

fn add_outer<T: Scalar>(acc: &mut Tensor<T>, v: &[T]) {
    let d = v.len();
    for i in 0..d {
        for j in 0..d {
            acc[(i, j)] = acc[(i, j)] + v[i] * v[j];
        }
    }
}

/// Within- and between-class covariances of `n × d` features with labels in
/// `0..K`, where `K` is one past the largest label. Every class must occur.
pub fn covariances<T: Scalar>(features: &Tensor<T>, labels: &[usize]) -> Result<CovariancePair<T>> {
    let (class_means, global, _) = means(features, labels)?;
    let (n, d) = features.shape();
    let k = class_means.rows();
    let mut sigma_w = Tensor::zeros(d, d);
    let mut diff = vec![T::zero(); d];
    for (i, &y) in labels.iter().enumerate() {
        for ((o, &x), &m) in diff.iter_mut().zip(features.row(i)).zip(class_means.row(y)) {
            *o = x - m;
        }
        add_outer(&mut sigma_w, &diff);
    }
    let mut sigma_b = Tensor::zeros(d, d);
    for c in 0..k {
        for ((o, &m), &g) in diff.iter_mut().zip(class_means.row(c)).zip(global.row(0)) {
            *o = m - g;
        }
        add_outer(&mut sigma_b, &diff);
    }
    Ok(CovariancePair {
        sigma_w: sigma_w.scale(T::one() / count(n)),
        sigma_b: sigma_b.scale(T::one() / count(k)),
        classes: k,
        dim: d,
    })
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues and the matrix whose columns are eigenvectors.
pub fn symmetric_eigen<T: Scalar>(m: &Tensor<T>) -> Result<(Vec<T>, Tensor<T>)> {
    let (n, c) = m.shape();
    if n != c {
        return Err(ApaError::Shape(format!("eigen-decomposition of non-square {n}x{c}")));
    }
    let mut a = m.clone();
    let mut v = Tensor::identity(n);
    let two: T = lit(2.0);
    for _sweep in 0..100 {
        let off: T = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        let diag: T = (0..n).map(|i| a[(i, i)] * a[(i, i)]).sum();
        if off <= T::epsilon() * T::epsilon() * diag || off == T::zero() {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (two * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let cs = T::one() / (t * t + T::one()).sqrt();
                let sn = t * cs;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = cs * akp - sn * akq;
                    a[(k, q)] = sn * akp + cs * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = cs * apk - sn * aqk;
                    a[(q, k)] = sn * apk + cs * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = cs * vkp - sn * vkq;
                    v[(k, q)] = sn * vkp + cs * vkq;
                }
            }
        }
    }
    Ok(((0..n).map(|i| a[(i, i)]).collect(), v))
}

/// Moore–Penrose pseudo-inverse of a symmetric positive semidefinite matrix.
/// Errors with [`ApaError::UndefinedCollapse`] if the matrix has no positive
/// eigenvalue.
pub fn symmetric_pinv<T: Scalar>(m: &Tensor<T>) -> Result<Tensor<T>> {
    let (vals, vecs) = symmetric_eigen(m)?;
    let top = vals.iter().fold(T::zero(), |acc, &x| acc.max(x));
    if !(top > T::zero()) {
        return Err(ApaError::UndefinedCollapse);
    }
    let cutoff = top * lit(PINV_RELATIVE_CUTOFF);
    let n = m.rows();
    let mut out = Tensor::zeros(n, n);
    for (k, &lam) in vals.iter().enumerate() {
        if lam <= cutoff {
            continue;
        }
        let inv = T::one() / lam;
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] = out[(i, j)] + vecs[(i, k)] * inv * vecs[(j, k)];
            }
        }
    }
    Ok(out)
}

/// `NC1 = (1/K) · trace(Σ_W · Σ_B†)`.
pub fn nc1<T: Scalar>(pair: &CovariancePair<T>) -> Result<T> {
    let pinv = symmetric_pinv(&pair.sigma_b)?;
    Ok(pair.sigma_w.matmul(&pinv)?.trace() / count(pair.classes))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn feats(rows: &[[f64; 2]]) -> Tensor<f64> {
        Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn collapsed_features_have_zero_within() {
        let f = feats(&[[1., 0.], [1., 0.], [-1., 0.], [-1., 0.]]);
        let c = covariances(&f, &[0, 0, 1, 1]).unwrap();
        assert_eq!(c.sigma_w.max_abs(), 0.0);
        assert_eq!(c.sigma_b.data(), &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(nc1(&c).unwrap(), 0.0);
    }

    #[test]
    fn single_class_has_zero_between_and_undefined_nc1() {
        let f = feats(&[[1., 2.], [3., -1.], [0., 0.]]);
        let c = covariances(&f, &[0, 0, 0]).unwrap();
        assert!(c.sigma_b.max_abs() < 1e-15);
        assert!(matches!(nc1(&c), Err(ApaError::UndefinedCollapse)));
    }

    #[test]
    fn missing_class_is_an_error() {
        let f = feats(&[[1., 2.], [3., -1.]]);
        assert!(matches!(covariances(&f, &[0, 2]), Err(ApaError::Domain(_))));
        assert!(matches!(covariances(&f, &[0]), Err(ApaError::Shape(_))));
    }

    #[test]
    fn identity_pair_gives_dim_over_classes() {
        let pair = CovariancePair {
            sigma_w: Tensor::<f64>::identity(3),
            sigma_b: Tensor::identity(3),
            classes: 5,
            dim: 3,
        };
        assert!((nc1(&pair).unwrap() - 0.6).abs() < 1e-12);
    }

    #[test]
    fn jacobi_reconstructs() {
        let m = Tensor::from_vec(3, 3, vec![4.0f64, 1.0, -2.0, 1.0, 2.0, 0.5, -2.0, 0.5, 3.0]).unwrap();
        let (vals, vecs) = symmetric_eigen(&m).unwrap();
        let mut diag = Tensor::zeros(3, 3);
        for i in 0..3 {
            diag[(i, i)] = vals[i];
        }
        let back = vecs.matmul(&diag).unwrap().matmul(&vecs.transpose()).unwrap();
        for (a, b) in back.data().iter().zip(m.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn pinv_of_rank_deficient() {
        // diag(2, 0) rotated by 45°
        let m = Tensor::from_vec(2, 2, vec![1.0f64, 1.0, 1.0, 1.0]).unwrap();
        let p = symmetric_pinv(&m).unwrap();
        for &x in p.data() {
            assert!((x - 0.25).abs() < 1e-14);
        }
    }
}
