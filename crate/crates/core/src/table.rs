//! Piecewise-linear sampled functions loaded from two-column CSV.

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SampledTable {
    t: Vec<f64>,
    v: Vec<f64>,
}

impl SampledTable {
    pub fn new(t: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if t.len() != v.len() || t.len() < 2 {
            return Err(Error::Table("need at least two (t, value) rows".into()));
        }
        if t.iter().chain(v.iter()).any(|x| !x.is_finite()) {
            return Err(Error::Table("non-finite entry".into()));
        }
        if t.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Table("t column must be strictly increasing".into()));
        }
        Ok(Self { t, v })
    }

    /// Reads `t,value` rows. A first row that does not parse as numbers is
    /// treated as a header.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_path(path)
            .map_err(|e| Error::Table(format!("{}: {e}", path.display())))?;
        let (mut t, mut v) = (Vec::new(), Vec::new());
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Table(format!("{}: {e}", path.display())))?;
            if rec.len() < 2 {
                return Err(Error::Table(format!(
                    "{}: row {} has fewer than two columns",
                    path.display(),
                    i + 1
                )));
            }
            match (rec[0].parse::<f64>(), rec[1].parse::<f64>()) {
                (Ok(a), Ok(b)) => {
                    t.push(a);
                    v.push(b);
                }
                _ if i == 0 => continue,
                _ => {
                    return Err(Error::Table(format!(
                        "{}: row {} is not numeric",
                        path.display(),
                        i + 1
                    )))
                }
            }
        }
        Self::new(t, v)
    }

    pub fn t_min(&self) -> f64 {
        self.t[0]
    }
    pub fn t_max(&self) -> f64 {
        *self.t.last().unwrap()
    }
    pub fn times(&self) -> &[f64] {
        &self.t
    }
    pub fn values(&self) -> &[f64] {
        &self.v
    }

    /// Index `i` with `t[i] <= x < t[i+1]`, clamped to the valid segments.
    fn segment(&self, x: f64) -> usize {
        let i = self.t.partition_point(|&s| s <= x);
        i.saturating_sub(1).min(self.t.len() - 2)
    }

    /// Linear interpolation; linear extrapolation with the end slopes.
    pub fn eval(&self, x: f64) -> f64 {
        let i = self.segment(x);
        let (t0, t1, v0, v1) = (self.t[i], self.t[i + 1], self.v[i], self.v[i + 1]);
        v0 + (v1 - v0) * (x - t0) / (t1 - t0)
    }

    pub fn slope_at_end(&self) -> f64 {
        let n = self.t.len();
        (self.v[n - 1] - self.v[n - 2]) / (self.t[n - 1] - self.t[n - 2])
    }

    /// Exact integral of the interpolant (or of its square) over
    /// `[a, b] ∩ [t_min, t_max]`.
    fn integral_with(&self, a: f64, b: f64, seg: impl Fn(f64, f64, f64) -> f64) -> f64 {
        let lo = a.max(self.t_min());
        let hi = b.min(self.t_max());
        if lo >= hi {
            return 0.0;
        }
        let mut i = self.segment(lo);
        let mut acc = 0.0;
        let mut x = lo;
        while x < hi {
            let end = self.t[i + 1].min(hi);
            acc += seg(self.eval(x), self.eval(end), end - x);
            x = end;
            i += 1;
            if i + 1 >= self.t.len() {
                break;
            }
        }
        acc
    }

    pub fn integral(&self, a: f64, b: f64) -> f64 {
        self.integral_with(a, b, |p, q, h| 0.5 * h * (p + q))
    }

    pub fn integral_of_square(&self, a: f64, b: f64) -> f64 {
        self.integral_with(a, b, |p, q, h| h * (p * p + p * q + q * q) / 3.0)
    }
}
