use super::{CellParams, CellShape};
use crate::error::{Error, Result};
use crate::numerics::{softmax_slice, Rng, Tensor};

/// K cells of identical shape plus a `T x K` table of mixing logits.
///
/// The mixing coefficients are the row-wise softmax of the logits, so every
/// row lies on the probability simplex by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct MixBank {
    cells: Vec<CellParams>,
    logits: Tensor,
}

/// Convex combination `sum_k weights[k] * cells[k]`, taken over every
/// parameter of the cell including the output head.
pub fn mix_cells<S: AsRef<[f64]>>(cells: &[CellParams<S>], weights: &[f64]) -> Result<CellParams> {
    let first = cells
        .first()
        .ok_or_else(|| Error::invalid("mixing needs at least one cell"))?;
    if weights.len() != cells.len() {
        return Err(Error::shape("one weight per cell required"));
    }
    let shape = first.shape();
    if cells.iter().any(|c| c.shape() != shape) {
        return Err(Error::shape("mixed cells must share a shape"));
    }
    let mut out = vec![0.0; shape.len()];
    mix_into(cells.iter().map(|c| c.as_slice()), weights, &mut out);
    CellParams::from_buffer(shape, out)
}

pub(crate) fn mix_into<'a>(
    cells: impl Iterator<Item = &'a [f64]>,
    weights: &[f64],
    out: &mut [f64],
) {
    for (k, cell) in cells.enumerate() {
        let lam = weights[k];
        if k == 0 {
            out.iter_mut().zip(cell).for_each(|(o, w)| *o = lam * w);
        } else {
            out.iter_mut().zip(cell).for_each(|(o, w)| *o += lam * w);
        }
    }
}

impl MixBank {
    pub fn new(cells: Vec<CellParams>, logits: Tensor) -> Result<Self> {
        let k = cells.len();
        if k == 0 {
            return Err(Error::invalid("a mix bank needs K >= 1 cells"));
        }
        if cells.iter().any(|c| c.shape() != cells[0].shape()) {
            return Err(Error::shape("mix bank cells must share a shape"));
        }
        if logits.shape().len() != 2 || logits.cols() != k {
            return Err(Error::shape(format!(
                "logits must be T x {k}, got {:?}",
                logits.shape()
            )));
        }
        if !logits.is_finite() {
            return Err(Error::numeric("non-finite mixing logits"));
        }
        Ok(Self { cells, logits })
    }

    /// Fresh bank: cells from [`CellParams::init`], logits `U(-0.1, 0.1)`.
    pub fn init(
        shape: CellShape,
        k: usize,
        t_len: usize,
        orthogonal: bool,
        rng: &mut Rng,
    ) -> Result<Self> {
        let cells = (0..k)
            .map(|_| CellParams::init(shape, orthogonal, rng))
            .collect();
        let logits = Tensor::matrix(
            t_len,
            k,
            (0..t_len * k)
                .map(|_| rng.uniform_range(-0.1, 0.1))
                .collect(),
        )?;
        Self::new(cells, logits)
    }

    pub fn k(&self) -> usize {
        self.cells.len()
    }

    pub fn t_len(&self) -> usize {
        self.logits.rows()
    }

    pub fn cells(&self) -> &[CellParams] {
        &self.cells
    }

    pub fn logits(&self) -> &Tensor {
        &self.logits
    }

    /// `T x K` mixing coefficients (row-wise softmax of the logits).
    pub fn mixing_coefficients(&self) -> Tensor {
        let k = self.k();
        let mut lam = vec![0.0; self.logits.len()];
        for t in 0..self.t_len() {
            softmax_slice(self.logits.row(t), &mut lam[t * k..(t + 1) * k]);
        }
        Tensor::matrix(self.t_len(), k, lam).expect("same shape as logits")
    }

    /// Mixed parameters for 1-indexed step `t`.
    pub fn mix_params(&self, t: usize) -> Result<CellParams> {
        if t < 1 || t > self.t_len() {
            return Err(Error::invalid(format!(
                "step {t} outside 1..={}",
                self.t_len()
            )));
        }
        let lam = self.mixing_coefficients();
        mix_cells(&self.cells, lam.row(t - 1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bank(k: usize, t_len: usize, seed: u64) -> MixBank {
        MixBank::init(
            CellShape::new(2, 3, 1, false),
            k,
            t_len,
            false,
            &mut Rng::new(seed),
        )
        .unwrap()
    }

    #[test]
    fn coefficient_rows_are_on_the_simplex() {
        let b = MixBank::new(
            vec![CellParams::zeros(CellShape::new(1, 1, 1, false)); 2],
            Tensor::matrix(3, 2, vec![0.0, 0.0, 10.0, -10.0, 0.0, 0.0]).unwrap(),
        )
        .unwrap();
        let lam = b.mixing_coefficients();
        assert_eq!(lam.row(0), &[0.5, 0.5]);
        assert!((lam.get(1, 0) - 0.9999999979).abs() < 1e-10);
        assert!((lam.get(1, 1) - 2.06e-9).abs() < 1e-11);
        let single = bank(1, 4, 0).mixing_coefficients();
        assert!(single.values().iter().all(|&v| v == 1.0));
        for t in 0..lam.rows() {
            assert!((lam.row(t).iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn one_hot_row_returns_that_cell_bitwise() {
        let mut b = bank(3, 2, 4);
        b.logits = Tensor::matrix(2, 3, vec![-1e3, 1e3, -1e3, 0.0, 0.0, 0.0]).unwrap();
        let mixed = b.mix_params(1).unwrap();
        assert_eq!(mixed.as_slice(), b.cells()[1].as_slice());
    }

    #[test]
    fn midpoint_of_zero_and_two_is_one() {
        let shape = CellShape::new(1, 2, 1, false);
        let mut two = CellParams::zeros(shape);
        two.as_mut_slice().iter_mut().for_each(|v| *v = 2.0);
        let mixed = mix_cells(&[CellParams::zeros(shape), two], &[0.5, 0.5]).unwrap();
        assert!(mixed.as_slice().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn matches_weighted_sum_oracle() {
        let mut rng = Rng::new(9);
        let shape = CellShape::new(1, 1, 1, false);
        let cells: Vec<CellParams> = (0..3)
            .map(|_| CellParams::init(shape, false, &mut rng))
            .collect();
        let raw: Vec<f64> = (0..3).map(|_| rng.uniform()).collect();
        let s: f64 = raw.iter().sum();
        let lam: Vec<f64> = raw.iter().map(|r| r / s).collect();
        let mixed = mix_cells(&cells, &lam).unwrap();
        for i in 0..shape.len() {
            let oracle: f64 = (0..3).map(|k| lam[k] * cells[k].as_slice()[i]).sum();
            assert!((mixed.as_slice()[i] - oracle).abs() <= 1e-12);
        }
    }

    #[test]
    fn mixing_is_linear_in_lambda() {
        let b = bank(3, 1, 2);
        let l1 = [0.2, 0.5, 0.3];
        let l2 = [0.6, 0.1, 0.3];
        for &alpha in &[0.0, 0.25, 0.8, 1.0] {
            let l: Vec<f64> = l1
                .iter()
                .zip(&l2)
                .map(|(a, b)| alpha * a + (1.0 - alpha) * b)
                .collect();
            let lhs = mix_cells(b.cells(), &l).unwrap();
            let m1 = mix_cells(b.cells(), &l1).unwrap();
            let m2 = mix_cells(b.cells(), &l2).unwrap();
            for i in 0..lhs.as_slice().len() {
                let rhs = alpha * m1.as_slice()[i] + (1.0 - alpha) * m2.as_slice()[i];
                assert!((lhs.as_slice()[i] - rhs).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn index_errors() {
        let b = bank(2, 4, 1);
        assert!(b.mix_params(0).is_err());
        assert!(b.mix_params(5).is_err());
        assert!(b.mix_params(4).is_ok());
        assert!(MixBank::new(vec![], Tensor::zeros(vec![1, 1])).is_err());
    }
}
