//! Per-step diagnostics and their CSV form.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::variational::{NehariClass, NehariTag};

pub const CSV_HEADER: &str = "t,dt,l2,h2,J,I,w14_4,nehari,ut_l2,cum_grad";

/// Snapshots kept for the lagged-distance check.
pub const MAX_LAG: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagRow {
    pub t: f64,
    pub dt: f64,
    pub l2: f64,
    pub h2: f64,
    pub energy: f64,
    pub i: f64,
    pub w14_4: f64,
    pub nehari: NehariClass,
    pub ut_l2: f64,
    pub cum_grad: f64,
    /// `max |u|` over the nodes.
    pub linf: f64,
    /// `‖Δ²u‖₂`.
    pub bilap_l2: f64,
    /// `‖f‖₂` of the source at the step midpoint (0 without source).
    pub source_l2: f64,
    /// `‖u(t) − u(t_{k−δ})‖₂²` for `δ = 1..=MAX_LAG` (as many as exist).
    pub lag_dist_sq: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub rows: Vec<DiagRow>,
    /// Set when the step-size controller could not proceed above `dt_min`.
    pub collapsed: bool,
    /// Mesh width of the run (enters monitor tolerances).
    pub h: f64,
}

impl Diagnostics {
    pub fn new(h: f64) -> Self {
        Self { rows: Vec::new(), collapsed: false, h }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn first(&self) -> Option<&DiagRow> {
        self.rows.first()
    }

    pub fn last(&self) -> Option<&DiagRow> {
        self.rows.last()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        for r in &self.rows {
            writeln!(w, "{}", csv_line(r))?;
        }
        Ok(())
    }

    /// Reads the fixed columns back; auxiliary fields are left empty.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().transpose()?.unwrap_or_default();
        if header.trim() != CSV_HEADER {
            return Err(LabError::InvalidArgument(format!("unexpected diagnostics header `{header}`")));
        }
        let mut rows = Vec::new();
        for (k, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split(',').collect();
            let bad = || LabError::InvalidArgument(format!("diagnostics row {}", k + 2));
            if cells.len() != 10 {
                return Err(bad());
            }
            let num = |i: usize| cells[i].trim().parse::<f64>().map_err(|_| bad());
            let tag = NehariTag::parse(cells[7].trim()).ok_or_else(bad)?;
            let (h2, i) = (num(3)?, num(5)?);
            rows.push(DiagRow {
                t: num(0)?,
                dt: num(1)?,
                l2: num(2)?,
                h2,
                energy: num(4)?,
                i,
                w14_4: num(6)?,
                nehari: NehariClass { tag, margin: h2 * h2 - 3.0 * i },
                ut_l2: num(8)?,
                cum_grad: num(9)?,
                linf: f64::NAN,
                bilap_l2: f64::NAN,
                source_l2: f64::NAN,
                lag_dist_sq: Vec::new(),
            });
        }
        Ok(Self { rows, collapsed: false, h: f64::NAN })
    }
}

pub fn csv_line(r: &DiagRow) -> String {
    format!(
        "{:?},{:?},{:?},{:?},{:?},{:?},{:?},{},{:?},{:?}",
        r.t,
        r.dt,
        r.l2,
        r.h2,
        r.energy,
        r.i,
        r.w14_4,
        r.nehari.tag.as_str(),
        r.ut_l2,
        r.cum_grad
    )
}
