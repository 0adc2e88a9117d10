use nalgebra::{DMatrix, DVectorView};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Library spectra `D` (M bands × K members) with one label per column.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDictionary<T: Real> {
    spectra: DMatrix<T>,
    labels: Vec<String>,
}

impl<T: Real> SpectralDictionary<T> {
    pub fn new(spectra: DMatrix<T>, labels: Vec<String>) -> Result<Self> {
        let k = spectra.ncols();
        if k < 2 {
            return Err(Error::invalid(format!("dictionary needs at least 2 members, got {k}")));
        }
        if spectra.nrows() == 0 {
            return Err(Error::invalid("dictionary has no bands"));
        }
        if labels.len() != k {
            return Err(Error::invalid(format!(
                "{} labels for {k} dictionary columns",
                labels.len()
            )));
        }
        if spectra.iter().any(|v| !v.is_finite_value()) {
            return Err(Error::invalid("dictionary contains non-finite entries"));
        }
        if let Some(j) = (0..k).find(|&j| spectra.column(j).norm() <= T::zero()) {
            return Err(Error::invalid(format!("dictionary column {j} is zero")));
        }
        Ok(Self { spectra, labels })
    }

    /// Sub-dictionaries may hold a single member, which the public constructor rejects.
    pub(crate) fn from_parts(spectra: DMatrix<T>, labels: Vec<String>) -> Self {
        debug_assert_eq!(spectra.ncols(), labels.len());
        Self { spectra, labels }
    }

    /// Labels columns `d0, d1, …`.
    pub fn unlabeled(spectra: DMatrix<T>) -> Result<Self> {
        let labels = (0..spectra.ncols()).map(|j| format!("d{j}")).collect();
        Self::new(spectra, labels)
    }

    pub fn spectra(&self) -> &DMatrix<T> {
        &self.spectra
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn bands(&self) -> usize {
        self.spectra.nrows()
    }

    pub fn len(&self) -> usize {
        self.spectra.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.spectra.ncols() == 0
    }

    pub fn column(&self, k: usize) -> DVectorView<'_, T> {
        self.spectra.column(k)
    }

    pub fn column_norms(&self) -> Vec<T> {
        self.spectra.column_iter().map(|c| c.norm()).collect()
    }

    /// `(k⋆, ‖d_{k⋆}‖₂)` for the smallest-norm member; ties go to the lower index.
    pub fn min_norm_column(&self) -> (usize, T) {
        self.column_norms()
            .into_iter()
            .enumerate()
            .fold(None, |best: Option<(usize, T)>, (k, n)| match best {
                Some((_, b)) if b <= n => best,
                _ => Some((k, n)),
            })
            .expect("dictionary is non-empty")
    }

    /// Sub-dictionary made of the given columns, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&k| k >= self.len()) {
            return Err(Error::invalid(format!("column index {bad} out of range")));
        }
        let cols: Vec<_> = indices.iter().map(|&k| self.spectra.column(k)).collect();
        let labels = indices.iter().map(|&k| self.labels[k].clone()).collect();
        let spectra = if cols.is_empty() {
            DMatrix::zeros(self.bands(), 0)
        } else {
            DMatrix::from_columns(&cols)
        };
        Ok(Self::from_parts(spectra, labels))
    }
}
