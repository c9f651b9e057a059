use ndarray::{Array2, ArrayView2};

use super::{Gradients, Init, ParamId, ParameterSet, Real};
use crate::error::{Error, Result};

/// Row lookup into a `vocab x dim` table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Embedding {
    pub table: ParamId,
    pub vocab: usize,
    pub dim: usize,
}

impl Embedding {
    pub fn new(params: &mut ParameterSet, name: &str, vocab: usize, dim: usize) -> Result<Self> {
        let a = 1.0 / (dim.max(1) as f64).sqrt();
        Ok(Self {
            table: params.add(name, vocab, dim, Init::Uniform(a))?,
            vocab,
            dim,
        })
    }

    pub fn forward(&self, params: &ParameterSet, ids: &[usize]) -> Result<Array2<Real>> {
        let table = params.get(self.table);
        let mut out = Array2::zeros((ids.len(), self.dim));
        for (mut row, &id) in out.rows_mut().into_iter().zip(ids) {
            if id >= self.vocab {
                return Err(Error::Shape(format!(
                    "token index {id} outside vocabulary of {}",
                    self.vocab
                )));
            }
            row.assign(&table.row(id));
        }
        Ok(out)
    }

    /// Scatters `dy` rows back into the looked-up table rows.
    pub fn backward(&self, grads: &mut Gradients, ids: &[usize], dy: ArrayView2<Real>) {
        let g = &mut grads[self.table];
        for (&id, row) in ids.iter().zip(dy.rows()) {
            g.row_mut(id).scaled_add(1.0, &row);
        }
    }
}
