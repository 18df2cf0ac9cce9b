//! Observed series mapped onto the unit cube: discrete cells become latent
//! boxes `[a, b)`, continuous cells are fixed at their PIT value.

use crate::error::{Error, Result};
use crate::margins::Margin;
use serde::{Deserialize, Serialize};

/// One observed column.
#[derive(Debug, Clone, PartialEq)]
pub enum SeriesData {
    Discrete(Vec<i64>),
    Continuous(Vec<f64>),
}

impl SeriesData {
    pub fn len(&self) -> usize {
        match self {
            SeriesData::Discrete(v) => v.len(),
            SeriesData::Continuous(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Cell {
    Latent { a: f64, b: f64 },
    Fixed(f64),
}

/// Flattened (series-within-time) cells of an `r`-series dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedData {
    r: usize,
    t_len: usize,
    cells: Vec<Cell>,
    latent_positions: Vec<usize>,
    boxes: Vec<(f64, f64)>,
}

impl AugmentedData {
    pub fn new(columns: &[SeriesData], margins: &[Margin]) -> Result<Self> {
        if columns.is_empty() || columns.len() != margins.len() {
            return Err(Error::InvalidInput(format!(
                "{} columns but {} margins",
                columns.len(),
                margins.len()
            )));
        }
        let t_len = columns[0].len();
        if t_len == 0 || columns.iter().any(|c| c.len() != t_len) {
            return Err(Error::InvalidInput("columns must be nonempty and of equal length".into()));
        }
        let r = columns.len();
        let mut cells = Vec::with_capacity(r * t_len);
        for t in 0..t_len {
            for (col, margin) in columns.iter().zip(margins) {
                let cell = match (col, margin) {
                    (SeriesData::Discrete(y), Margin::Ordinal(m)) => {
                        let (a, b) = m.bounds(y[t])?;
                        Cell::Latent { a, b }
                    }
                    (SeriesData::Continuous(x), Margin::Continuous(m)) => Cell::Fixed(m.pit(x[t])?),
                    _ => {
                        return Err(Error::InvalidInput(
                            "series type does not match its margin kind".into(),
                        ))
                    }
                };
                cells.push(cell);
            }
        }
        Self::from_cells(r, cells)
    }

    pub fn from_cells(r: usize, cells: Vec<Cell>) -> Result<Self> {
        if r == 0 || cells.is_empty() || !cells.len().is_multiple_of(r) {
            return Err(Error::InvalidInput(format!(
                "{} cells cannot be split into {r} series",
                cells.len()
            )));
        }
        let mut latent_positions = Vec::new();
        let mut boxes = Vec::new();
        for (i, c) in cells.iter().enumerate() {
            match *c {
                Cell::Latent { a, b } => {
                    if !(0.0 <= a && a < b && b <= 1.0) {
                        return Err(Error::InvalidInput(format!("invalid box [{a}, {b}) at cell {i}")));
                    }
                    latent_positions.push(i);
                    boxes.push((a, b));
                }
                Cell::Fixed(u) => {
                    if !(u > 0.0 && u < 1.0) {
                        return Err(Error::InvalidInput(format!("fixed value {u} at cell {i} outside (0,1)")));
                    }
                }
            }
        }
        Ok(Self {
            r,
            t_len: cells.len() / r,
            cells,
            latent_positions,
            boxes,
        })
    }

    /// Univariate all-discrete data from boxes.
    pub fn from_boxes(boxes: &[(f64, f64)]) -> Result<Self> {
        Self::from_cells(1, boxes.iter().map(|&(a, b)| Cell::Latent { a, b }).collect())
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn t_len(&self) -> usize {
        self.t_len
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    /// Number of latent (discrete) cells.
    pub fn n_latent(&self) -> usize {
        self.boxes.len()
    }

    /// Boxes of latent cells in flattened order.
    pub fn boxes(&self) -> &[(f64, f64)] {
        &self.boxes
    }

    /// Flattened positions of latent cells.
    pub fn latent_positions(&self) -> &[usize] {
        &self.latent_positions
    }

    /// Full flattened vector with latent cells taken from `latent`.
    pub fn fill(&self, latent: &[f64]) -> Vec<f64> {
        debug_assert_eq!(latent.len(), self.boxes.len());
        let mut out = Vec::with_capacity(self.cells.len());
        let mut next = latent.iter();
        for c in &self.cells {
            out.push(match *c {
                Cell::Latent { .. } => *next.next().expect("latent vector too short"),
                Cell::Fixed(u) => u,
            });
        }
        out
    }
}
