//! Rectangular lattices of ±1 spins.
//!
//! Sites are indexed column-major: site `i` sits at row `i % rows`, column
//! `i / rows`, so an interior site has first-order neighbours
//! `{i - rows, i - 1, i + 1, i + rows}`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Lattice {
    rows: usize,
    cols: usize,
    values: Vec<i8>,
}

/// Direction of a first-order edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Within a column (sites `i` and `i + 1`).
    Vertical,
    /// Between adjacent columns (sites `i` and `i + rows`).
    Horizontal,
}

impl Lattice {
    /// Builds a lattice from column-major spins.
    pub fn new(rows: usize, cols: usize, values: Vec<i8>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidShape { rows, cols });
        }
        if values.len() != rows * cols {
            return Err(Error::DimensionMismatch { expected: rows * cols, got: values.len() });
        }
        if let Some((site, &v)) = values.iter().enumerate().find(|(_, &v)| v != 1 && v != -1) {
            return Err(Error::InvalidSpin { site, value: v as i64 });
        }
        Ok(Self { rows, cols, values })
    }

    /// Lattice with every spin set to `value` (which must be ±1).
    pub fn filled(rows: usize, cols: usize, value: i8) -> Result<Self> {
        Self::new(rows, cols, vec![value; rows * cols])
    }

    /// Builds a lattice from spins given row by row.
    pub fn from_row_major(rows: usize, cols: usize, row_major: &[i8]) -> Result<Self> {
        if row_major.len() != rows * cols {
            return Err(Error::DimensionMismatch { expected: rows * cols, got: row_major.len() });
        }
        let mut values = vec![0i8; rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                values[c * rows + r] = row_major[r * cols + c];
            }
        }
        Self::new(rows, cols, values)
    }

    /// Decodes the lattice whose column-major spins are the bits of `code`
    /// (bit set means +1). Used by enumeration oracles.
    pub fn from_bits(rows: usize, cols: usize, code: u64) -> Result<Self> {
        let n = rows * cols;
        if n > 64 {
            return Err(Error::TooLargeForEnumeration { sites: n, max: 64 });
        }
        let values = (0..n).map(|i| if code >> i & 1 == 1 { 1 } else { -1 }).collect();
        Self::new(rows, cols, values)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[i8] {
        &self.values
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        col * self.rows + row
    }

    #[inline]
    pub fn coords(&self, site: usize) -> (usize, usize) {
        (site % self.rows, site / self.rows)
    }

    #[inline]
    pub fn get(&self, site: usize) -> i8 {
        self.values[site]
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> i8 {
        self.values[col * self.rows + row]
    }

    /// Returns a copy with one spin replaced.
    pub fn with_spin(&self, site: usize, value: i8) -> Result<Self> {
        if site >= self.len() {
            return Err(Error::InvalidSite { site, n: self.len() });
        }
        let mut values = self.values.clone();
        values[site] = value;
        Self::new(self.rows, self.cols, values)
    }

    /// Global spin flip.
    pub fn flipped(&self) -> Self {
        Self { rows: self.rows, cols: self.cols, values: self.values.iter().map(|v| -v).collect() }
    }

    /// Swaps rows and columns.
    pub fn transposed(&self) -> Self {
        let mut values = vec![0i8; self.len()];
        for c in 0..self.cols {
            for r in 0..self.rows {
                // (r, c) becomes (c, r) in a lattice with `cols` rows
                values[r * self.cols + c] = self.values[c * self.rows + r];
            }
        }
        Self { rows: self.cols, cols: self.rows, values }
    }

    /// First-order neighbours of `site` with the direction of the shared edge.
    pub fn neighbours(&self, site: usize) -> impl Iterator<Item = (usize, Direction)> + '_ {
        let (r, c) = self.coords(site);
        let m = self.rows;
        let up = (r > 0).then(|| (site - 1, Direction::Vertical));
        let down = (r + 1 < m).then(|| (site + 1, Direction::Vertical));
        let left = (c > 0).then(|| (site - m, Direction::Horizontal));
        let right = (c + 1 < self.cols).then(|| (site + m, Direction::Horizontal));
        [left, up, down, right].into_iter().flatten()
    }

    /// Number of vertical and horizontal edges.
    pub fn edge_counts(&self) -> (usize, usize) {
        ((self.rows - 1) * self.cols, self.rows * (self.cols - 1))
    }

    /// Sum of spins and once-per-edge sums of vertical and horizontal spin
    /// products.
    pub fn raw_stats(&self) -> RawStats {
        let m = self.rows;
        let mut stats = RawStats::default();
        for c in 0..self.cols {
            for r in 0..m {
                let i = c * m + r;
                let v = self.values[i] as i64;
                stats.sum += v;
                if r + 1 < m {
                    stats.vertical += v * self.values[i + 1] as i64;
                }
                if c + 1 < self.cols {
                    stats.horizontal += v * self.values[i + m] as i64;
                }
            }
        }
        stats
    }

    /// Human-readable form: one line per lattice row of `+1`/`-1` tokens.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.len() * 3 + self.rows);
        for r in 0..self.rows {
            let row: Vec<&str> =
                (0..self.cols).map(|c| if self.at(r, c) > 0 { "+1" } else { "-1" }).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    /// Parses the row-major text form. Blank lines and `#` comments are ignored.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut rows: Vec<Vec<i8>> = Vec::new();
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let row = line.split_whitespace().map(parse_spin).collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        let m = rows.len();
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Parse("ragged lattice rows".into()));
        }
        let flat: Vec<i8> = rows.into_iter().flatten().collect();
        Self::from_row_major(m, cols, &flat)
    }

    /// CSV form: `rows,cols,v_0,...,v_{n-1}` with column-major spins.
    pub fn to_csv(&self) -> String {
        let mut fields = vec![self.rows.to_string(), self.cols.to_string()];
        fields.extend(self.values.iter().map(|v| v.to_string()));
        let mut line = fields.join(",");
        line.push('\n');
        line
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let fields: Vec<&str> = text.trim().split(',').map(str::trim).collect();
        if fields.len() < 3 {
            return Err(Error::Parse("lattice csv needs rows, cols and values".into()));
        }
        let rows: usize = fields[0].parse().map_err(|_| Error::Parse(format!("bad rows '{}'", fields[0])))?;
        let cols: usize = fields[1].parse().map_err(|_| Error::Parse(format!("bad cols '{}'", fields[1])))?;
        let values = fields[2..].iter().map(|s| parse_spin(s)).collect::<Result<Vec<_>>>()?;
        Self::new(rows, cols, values)
    }
}

fn parse_spin(token: &str) -> Result<i8> {
    match token {
        "+1" | "1" => Ok(1),
        "-1" => Ok(-1),
        other => Err(Error::Parse(format!("invalid spin token '{other}'"))),
    }
}

impl fmt::Display for Lattice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

impl FromStr for Lattice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::from_text(s)
    }
}

/// Spin sum and once-per-edge vertical/horizontal interaction sums.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RawStats {
    pub sum: i64,
    pub vertical: i64,
    pub horizontal: i64,
}

impl std::ops::Add for RawStats {
    type Output = RawStats;

    fn add(self, o: RawStats) -> RawStats {
        RawStats {
            sum: self.sum + o.sum,
            vertical: self.vertical + o.vertical,
            horizontal: self.horizontal + o.horizontal,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn column_major_indexing() {
        let l = Lattice::from_row_major(2, 3, &[1, 1, -1, -1, 1, 1]).unwrap();
        // column 0 = (1, -1), column 1 = (1, 1), column 2 = (-1, 1)
        assert_eq!(l.values(), &[1, -1, 1, 1, -1, 1]);
        assert_eq!(l.at(0, 2), -1);
        assert_eq!(l.coords(3), (1, 1));
    }

    #[test]
    fn interior_and_edge_neighbours() {
        let l = Lattice::filled(4, 4, 1).unwrap();
        let m = 4;
        let i = l.index(1, 1);
        let mut n: Vec<usize> = l.neighbours(i).map(|(j, _)| j).collect();
        n.sort();
        assert_eq!(n, vec![i - m, i - 1, i + 1, i + m]);
        assert_eq!(l.neighbours(0).count(), 2);
        assert_eq!(l.neighbours(l.index(0, 1)).count(), 3);
    }

    #[test]
    fn neighbour_lists_count_each_edge_twice() {
        for (m, c) in [(1, 5), (3, 4), (5, 2), (4, 4)] {
            let l = Lattice::filled(m, c, 1).unwrap();
            let (ev, eh) = l.edge_counts();
            let (mut nv, mut nh) = (0, 0);
            for i in 0..l.len() {
                for (_, d) in l.neighbours(i) {
                    match d {
                        Direction::Vertical => nv += 1,
                        Direction::Horizontal => nh += 1,
                    }
                }
            }
            assert_eq!((nv, nh), (2 * ev, 2 * eh));
        }
    }

    #[test]
    fn rejects_bad_spins_and_lengths() {
        assert!(matches!(Lattice::new(2, 2, vec![1, 0, 1, 1]), Err(Error::InvalidSpin { site: 1, .. })));
        assert!(matches!(Lattice::new(2, 2, vec![1, 1, 1]), Err(Error::DimensionMismatch { .. })));
        assert!(Lattice::new(0, 2, vec![]).is_err());
    }

    #[test]
    fn text_and_csv_forms() {
        let l = Lattice::from_row_major(2, 3, &[1, -1, 1, -1, -1, 1]).unwrap();
        assert_eq!(l.to_text(), "+1 -1 +1\n-1 -1 +1\n");
        assert_eq!(Lattice::from_text(&l.to_text()).unwrap(), l);
        assert_eq!(l.to_csv(), "2,3,1,-1,-1,-1,1,1\n");
        assert_eq!(Lattice::from_csv(&l.to_csv()).unwrap(), l);
        assert!(Lattice::from_text("+1 -1\n+1\n").is_err());
    }

    #[test]
    fn transpose_swaps_edge_directions() {
        let l = Lattice::from_row_major(2, 3, &[1, -1, 1, -1, -1, 1]).unwrap();
        let t = l.transposed();
        assert_eq!((t.rows(), t.cols()), (3, 2));
        let (a, b) = (l.raw_stats(), t.raw_stats());
        assert_eq!(a.sum, b.sum);
        assert_eq!(a.vertical, b.horizontal);
        assert_eq!(a.horizontal, b.vertical);
        assert_eq!(t.transposed(), l);
    }
}
