//! Plain-text model files.
//!
//! A factor block is a header line `factors <n_rows> <n_cols> <rank>`
//! followed by the rows of `U` and then the rows of `V`, one matrix row per
//! line, values in `{:.16e}` so every `f64` survives a round trip. A model
//! file starts with `scale <min> <max> <default>`, then either one global
//! block or `locals <q>` and `q` blocks each preceded by `anchor <row> <col>`.

use std::io::{BufRead, Write};

use nalgebra::DMatrix;

use crate::data::RatingScale;
use crate::error::{LrmaError, Result};
use crate::factor::FactorPair;
use crate::local::{Anchor, LocalModel};

#[derive(Debug, Clone, PartialEq)]
pub enum SavedModel {
    Global(FactorPair),
    Local(Vec<LocalModel>),
}

fn write_matrix<W: Write>(w: &mut W, m: &DMatrix<f64>) -> Result<()> {
    for i in 0..m.nrows() {
        let line: Vec<String> = m.row(i).iter().map(|x| format!("{x:.16e}")).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    Ok(())
}

pub fn write_factors<W: Write>(w: &mut W, f: &FactorPair) -> Result<()> {
    writeln!(w, "factors {} {} {}", f.n_rows(), f.n_cols(), f.rank())?;
    write_matrix(w, f.u())?;
    write_matrix(w, f.v())
}

pub fn write_model<W: Write>(mut w: W, scale: RatingScale, model: &SavedModel) -> Result<()> {
    writeln!(
        w,
        "scale {:.16e} {:.16e} {:.16e}",
        scale.min, scale.max, scale.default
    )?;
    match model {
        SavedModel::Global(f) => write_factors(&mut w, f)?,
        SavedModel::Local(locals) => {
            writeln!(w, "locals {}", locals.len())?;
            for l in locals {
                writeln!(w, "anchor {} {}", l.anchor.row, l.anchor.col)?;
                write_factors(&mut w, &l.factors)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    line: usize,
    pushed: Option<String>,
}

impl<R: BufRead> Lines<R> {
    fn next_line(&mut self) -> Result<String> {
        if let Some(l) = self.pushed.take() {
            return Ok(l);
        }
        loop {
            self.line += 1;
            match self.inner.next() {
                Some(l) => {
                    let l = l?;
                    let t = l.trim();
                    if !t.is_empty() {
                        return Ok(t.to_string());
                    }
                }
                None => return Err(self.error("unexpected end of file")),
            }
        }
    }

    fn error(&self, message: impl Into<String>) -> LrmaError {
        LrmaError::Parse {
            line: self.line,
            message: message.into(),
        }
    }

    /// Next line split into fields, checking the leading keyword.
    fn keyword(&mut self, key: &str, n_fields: usize) -> Result<Vec<String>> {
        let line = self.next_line()?;
        let mut fields = line.split_whitespace();
        if fields.next() != Some(key) {
            return Err(self.error(format!("expected '{key}'")));
        }
        let rest: Vec<String> = fields.map(str::to_string).collect();
        if rest.len() != n_fields {
            return Err(self.error(format!("'{key}' takes {n_fields} fields")));
        }
        Ok(rest)
    }

    fn number<T: std::str::FromStr>(&self, s: &str) -> Result<T> {
        s.parse()
            .map_err(|_| self.error(format!("bad number '{s}'")))
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let line = self.next_line()?;
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|s| self.number(s))
                .collect::<Result<_>>()?;
            if vals.len() != cols {
                return Err(self.error(format!("expected {cols} values, got {}", vals.len())));
            }
            data.extend(vals);
        }
        Ok(DMatrix::from_row_slice(rows, cols, &data))
    }

    fn factors(&mut self) -> Result<FactorPair> {
        let h = self.keyword("factors", 3)?;
        let (n_rows, n_cols, rank): (usize, usize, usize) = (
            self.number(&h[0])?,
            self.number(&h[1])?,
            self.number(&h[2])?,
        );
        let u = self.matrix(n_rows, rank)?;
        let v = self.matrix(n_cols, rank)?;
        FactorPair::new(u, v)
    }
}

pub fn read_model<R: BufRead>(reader: R) -> Result<(RatingScale, SavedModel)> {
    let mut lines = Lines {
        inner: reader.lines(),
        line: 0,
        pushed: None,
    };
    let s = lines.keyword("scale", 3)?;
    let scale = RatingScale::new(
        lines.number(&s[0])?,
        lines.number(&s[1])?,
        lines.number(&s[2])?,
    )?;
    let first = lines.next_line()?;
    let model = if first.starts_with("factors") {
        lines.pushed = Some(first);
        SavedModel::Global(lines.factors()?)
    } else {
        let mut fields = first.split_whitespace();
        if fields.next() != Some("locals") {
            return Err(lines.error("expected 'factors' or 'locals'"));
        }
        let q: usize = lines.number(fields.next().unwrap_or(""))?;
        let mut locals = Vec::with_capacity(q);
        for _ in 0..q {
            let a = lines.keyword("anchor", 2)?;
            let anchor = Anchor::new(lines.number(&a[0])?, lines.number(&a[1])?);
            let factors = lines.factors()?;
            locals.push(LocalModel { anchor, factors });
        }
        SavedModel::Local(locals)
    };
    Ok((scale, model))
}
