//! Dense row-major matrices over [`FieldElem`].

use std::io::{Read, Write};

use rand::Rng;

use crate::error::{Error, Result};
use crate::metrics::Work;
use crate::verify::field::FieldElem;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<FieldElem>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![FieldElem::ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, FieldElem::ONE);
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<FieldElem>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_u64_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Shape("ragged rows".into()));
        }
        let data = rows.iter().flatten().map(|&v| FieldElem::new(v)).collect();
        Self::from_vec(r, c, data)
    }

    pub fn random<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Self {
        let data = (0..rows * cols).map(|_| FieldElem::random(rng)).collect();
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, r: usize, c: usize) -> FieldElem {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: FieldElem) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[FieldElem] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn entries(&self) -> &[FieldElem] {
        &self.data
    }

    /// Rows `start..start + count`.
    pub fn row_block(&self, start: usize, count: usize) -> Matrix {
        let data = self.data[start * self.cols..(start + count) * self.cols].to_vec();
        Matrix {
            rows: count,
            cols: self.cols,
            data,
        }
    }

    /// Columns `start..start + count`.
    pub fn col_block(&self, start: usize, count: usize) -> Matrix {
        let mut data = Vec::with_capacity(self.rows * count);
        for r in 0..self.rows {
            data.extend_from_slice(&self.row(r)[start..start + count]);
        }
        Matrix {
            rows: self.rows,
            cols: count,
            data,
        }
    }

    /// Copies `block` into `self` with its top-left corner at `(r0, c0)`.
    pub fn paste(&mut self, r0: usize, c0: usize, block: &Matrix) {
        for r in 0..block.rows {
            let dst = (r0 + r) * self.cols + c0;
            self.data[dst..dst + block.cols].copy_from_slice(block.row(r));
        }
    }

    /// Schoolbook product; one multiply-add per inner-product term.
    pub fn mul(&self, rhs: &Matrix, work: &mut Work) -> Result<Matrix> {
        if self.cols != rhs.rows {
            return Err(Error::Shape(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let acc = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for (t, &a) in self.row(i).iter().enumerate() {
                for (o, &b) in acc.iter_mut().zip(rhs.row(t)) {
                    *o += a * b;
                }
            }
        }
        work.mul_adds += (self.rows * self.cols * rhs.cols) as u64;
        Ok(out)
    }

    /// Matrix-vector product; one multiply-add per entry.
    pub fn mul_vec(&self, x: &[FieldElem], work: &mut Work) -> Result<Vec<FieldElem>> {
        if x.len() != self.cols {
            return Err(Error::Shape(format!(
                "{}x{} times vector of {}",
                self.rows,
                self.cols,
                x.len()
            )));
        }
        work.mul_adds += self.data.len() as u64;
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(x).fold(FieldElem::ZERO, |s, (&a, &b)| s + a * b))
            .collect())
    }

    /// Product with a 0/1 vector, computed with additions only.
    pub fn select_sum(&self, r: &[bool], work: &mut Work) -> Result<Vec<FieldElem>> {
        if r.len() != self.cols {
            return Err(Error::Shape(format!(
                "{}x{} times vector of {}",
                self.rows,
                self.cols,
                r.len()
            )));
        }
        work.additions += self.data.len() as u64;
        Ok((0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(r)
                    .filter(|(_, &bit)| bit)
                    .fold(FieldElem::ZERO, |s, (&a, _)| s + a)
            })
            .collect())
    }

    /// Writes the dense binary format: `rows` and `cols` as little-endian
    /// `u64`, then every entry row-major as a little-endian `u64`.
    pub fn write_dense<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(&(self.rows as u64).to_le_bytes())?;
        out.write_all(&(self.cols as u64).to_le_bytes())?;
        for e in &self.data {
            out.write_all(&e.value().to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads the format produced by [`Matrix::write_dense`].
    pub fn read_dense<R: Read>(mut input: R) -> Result<Matrix> {
        let mut word = [0u8; 8];
        let mut next = |input: &mut R| -> Result<u64> {
            input.read_exact(&mut word)?;
            Ok(u64::from_le_bytes(word))
        };
        let rows = next(&mut input)? as usize;
        let cols = next(&mut input)? as usize;
        let count = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::Shape("dimension overflow".into()))?;
        let mut data = Vec::with_capacity(count);
        for _ in 0..count {
            let v = next(&mut input)?;
            if v >= crate::verify::field::MODULUS {
                return Err(Error::Shape(format!("entry {v} is not a reduced field element")));
            }
            data.push(FieldElem::new(v));
        }
        Matrix::from_vec(rows, cols, data)
    }
}
