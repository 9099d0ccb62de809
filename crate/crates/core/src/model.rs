//! Dataset containers: observation matrices and the locus x period grid.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// An `n x p` matrix of observations (rows) on `p` variables (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationMatrix {
    values: DMatrix<f64>,
}

impl ObservationMatrix {
    pub fn new(values: DMatrix<f64>) -> Self {
        ObservationMatrix { values }
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn p(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// Sample standard deviation of column `i` (n-1 denominator).
    pub fn column_sd(&self, i: usize) -> f64 {
        let col = self.values.column(i);
        let n = col.len() as f64;
        if n < 2.0 {
            return 0.0;
        }
        let mean = col.mean();
        let ss: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum();
        (ss / (n - 1.0)).sqrt()
    }

    /// Column means are zero up to rounding relative to the column magnitude.
    pub fn is_centered(&self) -> bool {
        (0..self.p()).all(|j| {
            let col = self.values.column(j);
            let rms = (col.iter().map(|v| v * v).sum::<f64>() / col.len().max(1) as f64).sqrt();
            col.mean().abs() <= 1e-10 * (1.0 + rms)
        })
    }
}

/// Subtracts each column mean; row and column counts are unchanged.
pub fn center_columns(x: &ObservationMatrix) -> ObservationMatrix {
    let mut values = x.values.clone();
    for mut col in values.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    ObservationMatrix { values }
}

/// Identifies one grid cell by its locus and period labels.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellKey {
    pub locus: String,
    pub period: i64,
}

impl std::fmt::Display for CellKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}_{}", self.locus, self.period)
    }
}

/// A locus x period grid of observation matrices. Cells may be missing.
///
/// Temporal adjacency is defined on the integer period labels: two cells of
/// the same locus are neighbors iff their labels differ by exactly 1.
#[derive(Debug, Clone)]
pub struct DatasetGrid {
    loci: Vec<String>,
    periods: Vec<i64>,
    /// Row-major over (locus, period); `None` marks a missing cell.
    cells: Vec<Option<ObservationMatrix>>,
}

/// A structural problem found while validating a grid.
#[derive(Debug, Clone, PartialEq)]
pub enum ValidationIssue {
    /// Hard error: present cells disagree on the number of variables.
    ColumnCountMismatch {
        cell: CellKey,
        p: usize,
        expected: usize,
    },
    /// Hard error: fewer than two variables.
    TooFewVariables { p: usize },
    /// Hard error: no present cells at all.
    EmptyGrid,
    /// Flagged for exclusion: too few replicates to fit a regression.
    TooFewRows { cell: CellKey, n: usize },
}

impl ValidationIssue {
    pub fn is_hard(&self) -> bool {
        !matches!(self, ValidationIssue::TooFewRows { .. })
    }
}

/// Outcome of [`validate_grid`].
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn passes(&self) -> bool {
        self.issues.iter().all(|i| !i.is_hard())
    }

    pub fn excluded_cells(&self) -> Vec<CellKey> {
        self.issues
            .iter()
            .filter_map(|i| match i {
                ValidationIssue::TooFewRows { cell, .. } => Some(cell.clone()),
                _ => None,
            })
            .collect()
    }
}

impl DatasetGrid {
    /// Builds a grid from labelled cells. Loci keep first-appearance order;
    /// periods are sorted ascending and deduplicated.
    pub fn from_cells(entries: Vec<(CellKey, ObservationMatrix)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidGrid("no cells provided".into()));
        }
        let mut loci: Vec<String> = Vec::new();
        let mut periods: Vec<i64> = Vec::new();
        for (key, _) in &entries {
            if !loci.contains(&key.locus) {
                loci.push(key.locus.clone());
            }
            if !periods.contains(&key.period) {
                periods.push(key.period);
            }
        }
        periods.sort_unstable();

        let mut cells: Vec<Option<ObservationMatrix>> = vec![None; loci.len() * periods.len()];
        for (key, x) in entries {
            let b = loci.iter().position(|l| *l == key.locus).unwrap();
            let t = periods.iter().position(|p| *p == key.period).unwrap();
            let slot = &mut cells[b * periods.len() + t];
            if slot.is_some() {
                return Err(Error::InvalidGrid(format!("duplicate cell {key}")));
            }
            *slot = Some(x);
        }
        Ok(DatasetGrid {
            loci,
            periods,
            cells,
        })
    }

    /// Single-graph problems are the degenerate 1x1 grid.
    pub fn single(x: ObservationMatrix) -> Self {
        DatasetGrid {
            loci: vec!["G".to_string()],
            periods: vec![0],
            cells: vec![Some(x)],
        }
    }

    pub fn loci(&self) -> &[String] {
        &self.loci
    }

    pub fn periods(&self) -> &[i64] {
        &self.periods
    }

    pub fn n_loci(&self) -> usize {
        self.loci.len()
    }

    pub fn n_periods(&self) -> usize {
        self.periods.len()
    }

    pub fn cell(&self, b: usize, t: usize) -> Option<&ObservationMatrix> {
        self.cells[b * self.periods.len() + t].as_ref()
    }

    pub fn key(&self, b: usize, t: usize) -> CellKey {
        CellKey {
            locus: self.loci[b].clone(),
            period: self.periods[t],
        }
    }

    /// Present cells in row-major (locus-major) order.
    pub fn present_cells(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for b in 0..self.n_loci() {
            for t in 0..self.n_periods() {
                if self.cell(b, t).is_some() {
                    out.push((b, t));
                }
            }
        }
        out
    }

    /// The common column count, if any cell is present.
    pub fn p(&self) -> Option<usize> {
        self.cells.iter().flatten().next().map(|x| x.p())
    }

    /// Applies exclusions from a validation report and centers every
    /// remaining cell. Fails on hard validation errors.
    pub fn prepared(&self) -> Result<DatasetGrid> {
        let report = validate_grid(self);
        if !report.passes() {
            let msg = report
                .issues
                .iter()
                .filter(|i| i.is_hard())
                .map(|i| format!("{i:?}"))
                .collect::<Vec<_>>()
                .join("; ");
            return Err(Error::InvalidGrid(msg));
        }
        let excluded = report.excluded_cells();
        let mut cells = Vec::with_capacity(self.cells.len());
        for b in 0..self.n_loci() {
            for t in 0..self.n_periods() {
                let key = self.key(b, t);
                let cell = match self.cell(b, t) {
                    Some(x) if !excluded.contains(&key) => Some(center_columns(x)),
                    _ => None,
                };
                cells.push(cell);
            }
        }
        let grid = DatasetGrid {
            loci: self.loci.clone(),
            periods: self.periods.clone(),
            cells,
        };
        if grid.present_cells().is_empty() {
            return Err(Error::InvalidGrid(
                "all cells excluded (every cell has <= 2 replicates)".into(),
            ));
        }
        Ok(grid)
    }
}

/// Checks grid invariants. Cells with `n <= 2` are flagged for exclusion
/// (a perfect line fits two points); column-count mismatches are hard errors.
pub fn validate_grid(grid: &DatasetGrid) -> ValidationReport {
    let mut issues = Vec::new();
    let mut expected_p: Option<usize> = None;
    let mut any_present = false;

    for b in 0..grid.n_loci() {
        for t in 0..grid.n_periods() {
            let Some(x) = grid.cell(b, t) else { continue };
            any_present = true;
            let key = grid.key(b, t);
            match expected_p {
                None => {
                    expected_p = Some(x.p());
                    if x.p() < 2 {
                        issues.push(ValidationIssue::TooFewVariables { p: x.p() });
                    }
                }
                Some(p) if x.p() != p => {
                    issues.push(ValidationIssue::ColumnCountMismatch {
                        cell: key.clone(),
                        p: x.p(),
                        expected: p,
                    });
                }
                _ => {}
            }
            if x.n() <= 2 {
                issues.push(ValidationIssue::TooFewRows {
                    cell: key,
                    n: x.n(),
                });
            }
        }
    }
    if !any_present {
        issues.push(ValidationIssue::EmptyGrid);
    }
    ValidationReport { issues }
}
