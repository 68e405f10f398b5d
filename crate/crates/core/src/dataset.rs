//! Data model for fragmented functional observations.
//!
//! A dataset holds `n` curves, each observed at `m` grid points inside a
//! short fragment of `[0, 1]`. The design is rectangular: every curve has
//! exactly `m` observations, matching the sampling assumptions used by all
//! estimators. Time indices `t` and grid indices `j` are 1-based at the API
//! boundary (CSV, error messages) and 0-based internally.

use crate::error::{Error, Result};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

/// Fragmented functional observations: grid locations `x` and noisy values
/// `y`, both `n x m` row-major. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct FragmentedDataset {
    n: usize,
    m: usize,
    x: Vec<f64>,
    y: Vec<f64>,
    delta: Option<f64>,
}

impl FragmentedDataset {
    pub fn new(
        n: usize,
        m: usize,
        x: Vec<f64>,
        y: Vec<f64>,
        delta: Option<f64>,
    ) -> Result<Self> {
        if n < 2 || m < 2 {
            return Err(Error::InvalidArgument(format!(
                "dataset requires n >= 2 and m >= 2, got n = {n}, m = {m}"
            )));
        }
        if x.len() != n * m || y.len() != n * m {
            return Err(Error::DimensionMismatch(format!(
                "expected {} entries, got x: {}, y: {}",
                n * m,
                x.len(),
                y.len()
            )));
        }
        for (idx, &v) in x.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidArgument(format!(
                    "grid location x[t={}, j={}] = {v} outside [0, 1]",
                    idx / m + 1,
                    idx % m + 1
                )));
            }
        }
        if let Some(d) = delta {
            if !(0.0..=1.0).contains(&d) {
                return Err(Error::InvalidArgument(format!(
                    "fragment length delta = {d} outside (0, 1]"
                )));
            }
            for t in 0..n {
                let row = &x[t * m..(t + 1) * m];
                let lo = row.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                if hi - lo > d + 1e-12 {
                    return Err(Error::InvalidArgument(format!(
                        "row t = {} spans {} > delta = {d}",
                        t + 1,
                        hi - lo
                    )));
                }
            }
        }
        Ok(Self { n, m, x, y, delta })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn delta(&self) -> Option<f64> {
        self.delta
    }

    /// Grid location, 0-based indices.
    pub fn x(&self, t: usize, j: usize) -> f64 {
        self.x[t * self.m + j]
    }

    /// Observed value, 0-based indices.
    pub fn y(&self, t: usize, j: usize) -> f64 {
        self.y[t * self.m + j]
    }

    pub fn x_row(&self, t: usize) -> &[f64] {
        &self.x[t * self.m..(t + 1) * self.m]
    }

    pub fn y_row(&self, t: usize) -> &[f64] {
        &self.y[t * self.m..(t + 1) * self.m]
    }

    /// Load from CSV with header `t,j,x,y`; `t` in `1..=n` and `j` in
    /// `1..=m` must be contiguous and complete.
    pub fn load_csv<P: AsRef<Path>>(path: P) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_reader(BufReader::new(file))
    }

    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self> {
        let mut rows: Vec<(usize, usize, f64, f64)> = Vec::new();
        let mut max_t = 0usize;
        let mut max_j = 0usize;
        for (line_no, line) in reader.lines().enumerate() {
            let line = line?;
            let line_no = line_no + 1;
            if line_no == 1 {
                if line.trim() != "t,j,x,y" {
                    return Err(Error::Parse {
                        line: 1,
                        msg: format!("expected header 't,j,x,y', got '{}'", line.trim()),
                    });
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 4 {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("expected 4 fields, got {}", fields.len()),
                });
            }
            let parse_usize = |s: &str, name: &str| {
                s.trim().parse::<usize>().map_err(|_| Error::Parse {
                    line: line_no,
                    msg: format!("cannot parse {name} '{s}'"),
                })
            };
            let parse_f64 = |s: &str, name: &str| {
                s.trim().parse::<f64>().map_err(|_| Error::Parse {
                    line: line_no,
                    msg: format!("cannot parse {name} '{s}'"),
                })
            };
            let t = parse_usize(fields[0], "t")?;
            let j = parse_usize(fields[1], "j")?;
            let xv = parse_f64(fields[2], "x")?;
            let yv = parse_f64(fields[3], "y")?;
            if t == 0 || j == 0 {
                return Err(Error::Parse {
                    line: line_no,
                    msg: "indices t and j are 1-based".into(),
                });
            }
            if !(0.0..=1.0).contains(&xv) {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("x = {xv} outside [0, 1]"),
                });
            }
            max_t = max_t.max(t);
            max_j = max_j.max(j);
            rows.push((t, j, xv, yv));
        }
        if max_t < 2 || max_j < 2 {
            return Err(Error::InvalidArgument(format!(
                "dataset requires n >= 2 and m >= 2, got n = {max_t}, m = {max_j}"
            )));
        }
        let (n, m) = (max_t, max_j);
        let mut x = vec![f64::NAN; n * m];
        let mut y = vec![f64::NAN; n * m];
        let mut seen = vec![false; n * m];
        for (t, j, xv, yv) in rows {
            let idx = (t - 1) * m + (j - 1);
            seen[idx] = true;
            x[idx] = xv;
            y[idx] = yv;
        }
        if let Some(idx) = seen.iter().position(|&s| !s) {
            return Err(Error::InvalidArgument(format!(
                "missing cell (t = {}, j = {})",
                idx / m + 1,
                idx % m + 1
            )));
        }
        Self::new(n, m, x, y, None)
    }

    pub fn save_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        self.to_writer(&mut file)
    }

    pub fn to_writer<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "t,j,x,y")?;
        for t in 0..self.n {
            for j in 0..self.m {
                // `{}` on f64 prints the shortest representation that parses
                // back to the same bits, so save/load round trips losslessly.
                writeln!(w, "{},{},{},{}", t + 1, j + 1, self.x(t, j), self.y(t, j))?;
            }
        }
        Ok(())
    }

    /// Subtract pooled bin means: each `y[t,j]` loses the mean of every
    /// observation whose grid location falls in the same of `bins`
    /// equal-width bins over `[0, 1]`. Empty bins subtract 0.
    pub fn center(&self, bins: usize) -> Result<FragmentedDataset> {
        if bins == 0 {
            return Err(Error::InvalidArgument("bins must be at least 1".into()));
        }
        let bin_of = |x: f64| ((x * bins as f64) as usize).min(bins - 1);
        let mut sums = vec![0.0; bins];
        let mut counts = vec![0usize; bins];
        for (xv, yv) in self.x.iter().zip(self.y.iter()) {
            let b = bin_of(*xv);
            sums[b] += yv;
            counts[b] += 1;
        }
        let means: Vec<f64> = sums
            .iter()
            .zip(counts.iter())
            .map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
            .collect();
        let y = self
            .x
            .iter()
            .zip(self.y.iter())
            .map(|(xv, yv)| yv - means[bin_of(*xv)])
            .collect();
        FragmentedDataset::new(self.n, self.m, self.x.clone(), y, self.delta)
    }

    /// Restrict to a subset of rows (0-based), preserving order.
    pub(crate) fn select_rows(&self, rows: &[usize]) -> Result<FragmentedDataset> {
        let mut x = Vec::with_capacity(rows.len() * self.m);
        let mut y = Vec::with_capacity(rows.len() * self.m);
        for &t in rows {
            x.extend_from_slice(self.x_row(t));
            y.extend_from_slice(self.y_row(t));
        }
        FragmentedDataset::new(rows.len(), self.m, x, y, self.delta)
    }
}

/// The disjoint observation pairs `(1,2), (3,4), ...` used to form products
/// of observations; stored 0-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairSet {
    pairs: Vec<(usize, usize)>,
}

impl PairSet {
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Pairs `(2i-1, 2i)` for `i = 1..floor(m/2)` in paper indexing; an odd
/// trailing grid point is dropped.
pub fn pair_set(m: usize) -> Result<PairSet> {
    if m < 2 {
        return Err(Error::InvalidArgument(format!(
            "pair set requires m >= 2, got {m}"
        )));
    }
    let pairs = (0..m / 2).map(|i| (2 * i, 2 * i + 1)).collect();
    Ok(PairSet { pairs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn pair_set_even() {
        let p = pair_set(4).unwrap();
        assert_eq!(p.pairs(), &[(0, 1), (2, 3)]);
    }

    #[test]
    fn pair_set_two() {
        assert_eq!(pair_set(2).unwrap().pairs(), &[(0, 1)]);
    }

    #[test]
    fn pair_set_odd_drops_last() {
        let p = pair_set(5).unwrap();
        assert_eq!(p.pairs(), &[(0, 1), (2, 3)]);
        let covered: usize = p.pairs().len() * 2;
        assert_eq!(covered, 4);
    }

    #[test]
    fn pair_set_rejects_m1() {
        assert!(pair_set(1).is_err());
    }

    #[test]
    fn load_small_csv() {
        let csv = "t,j,x,y\n1,1,0.1,1.0\n1,2,0.2,2.0\n2,1,0.3,3.0\n2,2,0.4,4.0\n";
        let d = FragmentedDataset::from_reader(Cursor::new(csv)).unwrap();
        assert_eq!(d.n(), 2);
        assert_eq!(d.m(), 2);
        assert_eq!(d.x(0, 1), 0.2);
        assert_eq!(d.y(1, 1), 4.0);
    }

    #[test]
    fn missing_cell_is_named() {
        let csv = "t,j,x,y\n1,1,0.1,1.0\n1,2,0.2,2.0\n2,1,0.3,3.0\n";
        let err = FragmentedDataset::from_reader(Cursor::new(csv)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("t = 2") && msg.contains("j = 2"), "{msg}");
    }

    #[test]
    fn bad_x_is_rejected_with_row() {
        let csv = "t,j,x,y\n1,1,0.1,1.0\n1,2,1.2,2.0\n";
        let err = FragmentedDataset::from_reader(Cursor::new(csv)).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn save_load_round_trip_is_bit_exact() {
        let x = vec![0.1, 0.2 + 1e-16, 0.3, 0.47, 1.0 / 3.0, 0.9999999999];
        let y = vec![1.5, -2.25, 3.0e-13, 4.0, 5.5e15, -0.1];
        let d = FragmentedDataset::new(3, 2, x, y, None).unwrap();
        let mut buf = Vec::new();
        d.to_writer(&mut buf).unwrap();
        let d2 = FragmentedDataset::from_reader(Cursor::new(buf)).unwrap();
        assert_eq!(d, d2);
    }

    #[test]
    fn center_removes_constant_shift() {
        let x = vec![0.1, 0.9, 0.4, 0.6];
        let y: Vec<f64> = vec![1.0, -1.0, 0.5, -0.5];
        let shifted: Vec<f64> = y.iter().map(|v| v + 7.0).collect();
        let base = FragmentedDataset::new(2, 2, x.clone(), y, None).unwrap();
        let d = FragmentedDataset::new(2, 2, x, shifted, None).unwrap();
        let centered = d.center(1).unwrap();
        for t in 0..2 {
            for j in 0..2 {
                assert!((centered.y(t, j) - base.y(t, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn center_is_idempotent_on_centered_data() {
        let x = vec![0.05, 0.3, 0.55, 0.8];
        let y = vec![2.0, -2.0, 1.0, -1.0];
        let d = FragmentedDataset::new(2, 2, x, y, None).unwrap();
        let c1 = d.center(4).unwrap();
        let c2 = c1.center(4).unwrap();
        for t in 0..2 {
            for j in 0..2 {
                assert!((c1.y(t, j) - c2.y(t, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn center_zeroes_bin_means_for_linear_signal() {
        // y = 10 x on a grid covering all four bins.
        let m = 8;
        let n = 4;
        let mut x = Vec::new();
        let mut y = Vec::new();
        for t in 0..n {
            for j in 0..m {
                let v = (t * m + j) as f64 / (n * m) as f64;
                x.push(v);
                y.push(10.0 * v);
            }
        }
        let d = FragmentedDataset::new(n, m, x, y, None).unwrap();
        let bins = 4;
        let c = d.center(bins).unwrap();
        let mut sums = vec![0.0; bins];
        let mut counts = vec![0usize; bins];
        for t in 0..n {
            for j in 0..m {
                let b = ((c.x(t, j) * bins as f64) as usize).min(bins - 1);
                sums[b] += c.y(t, j);
                counts[b] += 1;
            }
        }
        for b in 0..bins {
            assert!(counts[b] > 0);
            assert!((sums[b] / counts[b] as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn delta_invariant_enforced() {
        let x = vec![0.1, 0.9, 0.4, 0.6];
        let y = vec![0.0; 4];
        assert!(FragmentedDataset::new(2, 2, x.clone(), y.clone(), Some(0.5)).is_err());
        assert!(FragmentedDataset::new(2, 2, x, y, Some(0.9)).is_ok());
    }
}
