//! Reference solutions on a regular `(t, x)` grid and their CSV/JSON form.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::problem::{Domain, ProblemKind};
use crate::error::{Error, Result};

/// Sidecar metadata stored next to the CSV grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceMeta {
    pub oracle: String,
    pub kind: ProblemKind,
    pub domain: Domain,
    pub nx: usize,
    pub nt: usize,
    /// Largest disagreement seen in the final refinement check.
    pub convergence_residual: f64,
    /// Oracle-specific resolution detail (substeps per output, quadrature order).
    pub resolution: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSolution {
    pub x: Vec<f64>,
    pub t: Vec<f64>,
    /// `u[it * nx + ix]`
    pub u: Vec<f64>,
    /// Imaginary part for complex fields.
    pub v: Option<Vec<f64>>,
    pub meta: ReferenceMeta,
}

impl ReferenceSolution {
    pub fn nx(&self) -> usize {
        self.x.len()
    }

    pub fn nt(&self) -> usize {
        self.t.len()
    }

    pub fn channels(&self) -> usize {
        if self.v.is_some() {
            2
        } else {
            1
        }
    }

    /// Field components at grid node `(it, ix)`.
    pub fn at(&self, it: usize, ix: usize) -> Vec<f64> {
        let i = it * self.nx() + ix;
        match &self.v {
            Some(v) => vec![self.u[i], v[i]],
            None => vec![self.u[i]],
        }
    }

    /// Index of the grid time closest to `t`.
    pub fn nearest_time(&self, t: f64) -> usize {
        let mut best = 0;
        for (i, &ti) in self.t.iter().enumerate() {
            if (ti - t).abs() < (self.t[best] - t).abs() {
                best = i;
            }
        }
        best
    }

    /// Grid points flattened row-major in `t` then `x`, as network inputs.
    pub fn grid_points(&self) -> Vec<f64> {
        let mut pts = Vec::with_capacity(2 * self.nx() * self.nt());
        for &t in &self.t {
            for &x in &self.x {
                pts.push(x);
                pts.push(t);
            }
        }
        pts
    }

    pub fn sidecar_path(csv: &Path) -> PathBuf {
        csv.with_extension("json")
    }

    /// Writes `x,t,u[,v]` rows plus the JSON metadata sidecar.
    pub fn write(&self, csv: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(csv)?);
        match self.v {
            Some(_) => writeln!(w, "x,t,u,v")?,
            None => writeln!(w, "x,t,u")?,
        }
        for (it, &t) in self.t.iter().enumerate() {
            for (ix, &x) in self.x.iter().enumerate() {
                let i = it * self.nx() + ix;
                match &self.v {
                    Some(v) => writeln!(w, "{x:e},{t:e},{:e},{:e}", self.u[i], v[i])?,
                    None => writeln!(w, "{x:e},{t:e},{:e}", self.u[i])?,
                }
            }
        }
        w.flush()?;
        let meta = File::create(Self::sidecar_path(csv))?;
        serde_json::to_writer_pretty(meta, &self.meta)?;
        Ok(())
    }

    pub fn read(csv: &Path) -> Result<Self> {
        let meta: ReferenceMeta =
            serde_json::from_reader(BufReader::new(File::open(Self::sidecar_path(csv))?))?;
        let reader = BufReader::new(File::open(csv)?);
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Shape("empty reference CSV".into()))??;
        let complex = match header.trim() {
            "x,t,u,v" => true,
            "x,t,u" => false,
            other => return Err(Error::Shape(format!("unexpected CSV header {other:?}"))),
        };
        let (mut u, mut v) = (Vec::new(), Vec::new());
        let (mut xs, mut ts) = (Vec::new(), Vec::new());
        for (row, line) in lines.enumerate() {
            let line = line?;
            let fields: Vec<f64> = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Shape(format!("row {row}: {e}")))?;
            if fields.len() != if complex { 4 } else { 3 } {
                return Err(Error::Shape(format!("row {row} has {} fields", fields.len())));
            }
            if row < meta.nx {
                xs.push(fields[0]);
            }
            if row % meta.nx == 0 {
                ts.push(fields[1]);
            }
            u.push(fields[2]);
            if complex {
                v.push(fields[3]);
            }
        }
        if u.len() != meta.nx * meta.nt {
            return Err(Error::Shape(format!(
                "reference CSV has {} rows, metadata says {} x {}",
                u.len(),
                meta.nt,
                meta.nx
            )));
        }
        Ok(Self {
            x: xs,
            t: ts,
            u,
            v: complex.then_some(v),
            meta,
        })
    }
}
