use super::{Rng, Tensor};

/// Uniform `U(-bound, bound)` matrix.
pub fn uniform_init(rows: usize, cols: usize, bound: f64, rng: &mut Rng) -> Tensor {
    let values = (0..rows * cols)
        .map(|_| rng.uniform_range(-bound, bound))
        .collect();
    Tensor::matrix(rows, cols, values).expect("positive dimensions")
}

/// Random matrix with orthonormal rows (wide) or columns (tall/square).
///
/// A standard-normal sample is orthogonalized by modified Gram-Schmidt with
/// one re-orthogonalization pass. Gram-Schmidt yields the QR factor whose
/// triangular part has a nonnegative diagonal, which makes the result unique
/// for a given sample.
pub fn orthogonal_init(rows: usize, cols: usize, rng: &mut Rng) -> Tensor {
    assert!(
        rows >= 1 && cols >= 1,
        "orthogonal_init needs positive dimensions"
    );
    let sample: Vec<f64> = (0..rows * cols).map(|_| rng.normal()).collect();
    // Work on the tall orientation: n vectors of length len (n <= len).
    let tall = rows >= cols;
    let (n, len) = if tall { (cols, rows) } else { (rows, cols) };
    let mut basis: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            (0..len)
                .map(|i| {
                    if tall {
                        sample[i * cols + j]
                    } else {
                        sample[j * cols + i]
                    }
                })
                .collect()
        })
        .collect();
    for j in 0..n {
        for _pass in 0..2 {
            for p in 0..j {
                let (done, rest) = basis.split_at_mut(j);
                let q = &done[p];
                let v = &mut rest[0];
                let proj: f64 = q.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(q).for_each(|(vi, qi)| *vi -= proj * qi);
            }
        }
        let norm = basis[j].iter().map(|v| v * v).sum::<f64>().sqrt();
        // A normal sample is rank-deficient with probability zero.
        basis[j].iter_mut().for_each(|v| *v /= norm);
    }
    let mut values = vec![0.0; rows * cols];
    for (j, q) in basis.iter().enumerate() {
        for (i, &v) in q.iter().enumerate() {
            if tall {
                values[i * cols + j] = v;
            } else {
                values[j * cols + i] = v;
            }
        }
    }
    Tensor::matrix(rows, cols, values).expect("positive dimensions")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn orthogonality_defect(q: &Tensor) -> f64 {
        let (r, c) = (q.rows(), q.cols());
        let gram = if r >= c {
            q.transpose().unwrap().matmul(q).unwrap()
        } else {
            q.matmul(&q.transpose().unwrap()).unwrap()
        };
        let n = gram.rows();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((gram.get(i, j) - target).abs());
            }
        }
        worst
    }

    #[test]
    fn scalar_is_unit() {
        let q = orthogonal_init(1, 1, &mut Rng::new(7));
        assert!((q.values()[0].abs() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn square_tall_and_wide_are_orthonormal() {
        for &(r, c, seed) in &[(4, 4, 1), (4, 4, 99), (7, 3, 2), (3, 5, 1), (16, 35, 5)] {
            let q = orthogonal_init(r, c, &mut Rng::new(seed));
            assert!(orthogonality_defect(&q) <= 1e-10, "{r}x{c}");
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = orthogonal_init(3, 5, &mut Rng::new(1));
        let b = orthogonal_init(3, 5, &mut Rng::new(1));
        let bits = |t: &Tensor| t.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn uniform_respects_bound() {
        let t = uniform_init(10, 10, 0.25, &mut Rng::new(4));
        assert!(t.values().iter().all(|v| v.abs() <= 0.25));
    }
}
