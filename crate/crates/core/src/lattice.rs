//! Uniform tensor-product lattices over a box, multilinear interpolation and
//! the text file format used to persist grid value pairs.
//!
//! File layout (`dgame-lattice v1`), one record per line, fields separated by
//! single spaces, floats in shortest round-trip decimal form:
//!
//! ```text
//! dgame-lattice v1
//! dim <d>
//! lower <d floats>
//! step <d floats>
//! nodes <d integers>
//! param <name> <float>        (zero or more)
//! levels <L>
//! time <t>                    (then, per level)
//! c1 <N floats, row-major, last axis fastest>
//! c2 <N floats>
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

const MAGIC: &str = "dgame-lattice v1";

/// Uniform lattice with `nodes[i]` points on axis `i`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Lattice {
    pub lower: Vec<f64>,
    pub step: Vec<f64>,
    pub nodes: Vec<usize>,
    strides: Vec<usize>,
}

impl Lattice {
    /// Covers `[lower, upper]` with spacing as close to `h` as the box allows.
    pub fn covering(lower: &[f64], upper: &[f64], h: f64) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() || !(h > 0.0) {
            return Err(Error::Config(format!("bad lattice box {lower:?}..{upper:?} with h={h}")));
        }
        let mut nodes = Vec::new();
        let mut step = Vec::new();
        for (lo, hi) in lower.iter().zip(upper) {
            if !(hi > lo) {
                return Err(Error::Config(format!("empty lattice axis [{lo}, {hi}]")));
            }
            let cells = ((hi - lo) / h).round().max(2.0) as usize;
            nodes.push(cells + 1);
            step.push((hi - lo) / cells as f64);
        }
        Self::from_parts(lower.to_vec(), step, nodes)
    }

    pub fn from_parts(lower: Vec<f64>, step: Vec<f64>, nodes: Vec<usize>) -> Result<Self> {
        if lower.len() != step.len() || lower.len() != nodes.len() || nodes.iter().any(|&n| n < 3) || step.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::Config("lattice needs at least 3 nodes and positive spacing per axis".into()));
        }
        let d = nodes.len();
        let mut strides = vec![1; d];
        for i in (0..d - 1).rev() {
            strides[i] = strides[i + 1] * nodes[i + 1];
        }
        Ok(Self { lower, step, nodes, strides })
    }

    pub fn dim(&self) -> usize {
        self.nodes.len()
    }

    pub fn len(&self) -> usize {
        self.nodes.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn upper(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.lower[i] + self.step[i] * (self.nodes[i] - 1) as f64).collect()
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.strides[axis]
    }

    pub fn index_of(&self, flat: usize) -> Vec<usize> {
        (0..self.dim()).map(|i| flat / self.strides[i] % self.nodes[i]).collect()
    }

    pub fn node(&self, flat: usize) -> Vec<f64> {
        (0..self.dim())
            .map(|i| self.lower[i] + self.step[i] * (flat / self.strides[i] % self.nodes[i]) as f64)
            .collect()
    }

    pub fn is_interior(&self, flat: usize) -> bool {
        (0..self.dim()).all(|i| {
            let k = flat / self.strides[i] % self.nodes[i];
            k > 0 && k + 1 < self.nodes[i]
        })
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        let up = self.upper();
        x.iter().enumerate().all(|(i, v)| *v >= self.lower[i] - 1e-12 && *v <= up[i] + 1e-12)
    }

    /// Nodal gradient: central differences, one-sided on faces.
    pub fn nodal_gradient(&self, values: &[f64], flat: usize) -> Vec<f64> {
        (0..self.dim())
            .map(|i| {
                let k = flat / self.strides[i] % self.nodes[i];
                let s = self.strides[i];
                let h = self.step[i];
                if k == 0 {
                    (values[flat + s] - values[flat]) / h
                } else if k + 1 == self.nodes[i] {
                    (values[flat] - values[flat - s]) / h
                } else {
                    (values[flat + s] - values[flat - s]) / (2.0 * h)
                }
            })
            .collect()
    }

    /// Corner indices and weights of the multilinear stencil at `x`; weights
    /// extrapolate linearly outside the box.
    fn stencil(&self, x: &[f64]) -> (Vec<(usize, f64)>, bool) {
        let d = self.dim();
        let mut base = 0;
        let mut frac = Vec::with_capacity(d);
        let mut outside = false;
        for i in 0..d {
            let pos = (x[i] - self.lower[i]) / self.step[i];
            let cell = (pos.floor().max(0.0) as usize).min(self.nodes[i] - 2);
            let s = pos - cell as f64;
            outside |= !(-1e-9..=1.0 + 1e-9).contains(&s);
            base += cell * self.strides[i];
            frac.push(s);
        }
        let corners = (0..1usize << d)
            .map(|mask| {
                let mut idx = base;
                let mut w = 1.0;
                for (i, s) in frac.iter().enumerate() {
                    if mask >> i & 1 == 1 {
                        idx += self.strides[i];
                        w *= s;
                    } else {
                        w *= 1.0 - s;
                    }
                }
                (idx, w)
            })
            .collect();
        (corners, outside)
    }

    /// Multilinear interpolation; the flag marks extrapolation.
    pub fn interpolate(&self, values: &[f64], x: &[f64]) -> (f64, bool) {
        let (corners, outside) = self.stencil(x);
        (corners.iter().map(|(i, w)| w * values[*i]).sum(), outside)
    }

    /// Multilinear interpolation of the nodal gradients.
    pub fn interpolate_gradient(&self, values: &[f64], x: &[f64]) -> Vec<f64> {
        let (corners, _) = self.stencil(x);
        let mut g = vec![0.0; self.dim()];
        for (i, w) in corners {
            for (gk, nk) in g.iter_mut().zip(self.nodal_gradient(values, i)) {
                *gk += w * nk;
            }
        }
        g
    }

    /// Overwrites face nodes by linear extrapolation from the two inner
    /// neighbours, axis by axis.
    pub fn extrapolate_faces(&self, values: &mut [f64]) {
        for axis in 0..self.dim() {
            let s = self.strides[axis];
            let n = self.nodes[axis];
            for flat in 0..values.len() {
                let k = flat / s % n;
                if k == 0 {
                    values[flat] = 2.0 * values[flat + s] - values[flat + 2 * s];
                } else if k + 1 == n {
                    values[flat] = 2.0 * values[flat - s] - values[flat - 2 * s];
                }
            }
        }
    }
}

/// Values of a pair on a lattice at a list of increasing times.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPair {
    pub lattice: Lattice,
    pub times: Vec<f64>,
    pub c1: Vec<Vec<f64>>,
    pub c2: Vec<Vec<f64>>,
    pub params: BTreeMap<String, f64>,
}

impl GridPair {
    pub fn validate(&self) -> Result<()> {
        let n = self.lattice.len();
        let levels = self.times.len();
        if levels == 0 || self.c1.len() != levels || self.c2.len() != levels {
            return Err(Error::Config("grid pair needs one c1 and one c2 array per time level".into()));
        }
        if self.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("grid pair times must increase".into()));
        }
        for level in self.c1.iter().chain(&self.c2) {
            if level.len() != n {
                return Err(Error::Config(format!("grid level has {} values, lattice has {n}", level.len())));
            }
            if level.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric("grid pair holds non-finite values".into()));
            }
        }
        Ok(())
    }

    /// Bracketing levels and blend weight of the later one.
    pub fn bracket(&self, t: f64) -> (usize, usize, f64) {
        let ts = &self.times;
        if t <= ts[0] || ts.len() == 1 {
            return (0, 0, 0.0);
        }
        if t >= *ts.last().unwrap() {
            let l = ts.len() - 1;
            return (l, l, 0.0);
        }
        let hi = ts.partition_point(|&s| s <= t);
        let lo = hi - 1;
        (lo, hi, (t - ts[lo]) / (ts[hi] - ts[lo]))
    }

    pub fn to_text(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ");
        let mut s = String::new();
        let lat = &self.lattice;
        let _ = writeln!(s, "{MAGIC}");
        let _ = writeln!(s, "dim {}", lat.dim());
        let _ = writeln!(s, "lower {}", join(&lat.lower));
        let _ = writeln!(s, "step {}", join(&lat.step));
        let _ = writeln!(s, "nodes {}", lat.nodes.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(" "));
        for (k, v) in &self.params {
            let _ = writeln!(s, "param {k} {v:?}");
        }
        let _ = writeln!(s, "levels {}", self.times.len());
        for ((t, a), b) in self.times.iter().zip(&self.c1).zip(&self.c2) {
            let _ = writeln!(s, "time {t:?}");
            let _ = writeln!(s, "c1 {}", join(a));
            let _ = writeln!(s, "c2 {}", join(b));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let mut next = |key: &str| -> Result<(usize, Vec<String>)> {
            let (no, line) = lines.next().ok_or_else(|| Error::Parse(format!("unexpected end of file, expected `{key}`")))?;
            let mut parts = line.split_whitespace();
            let head = parts.next().unwrap_or("");
            if head != key {
                return Err(Error::Parse(format!("line {}: expected `{key}`, found `{head}`", no + 1)));
            }
            Ok((no + 1, parts.map(str::to_owned).collect()))
        };
        let floats = |no: usize, parts: &[String]| -> Result<Vec<f64>> {
            parts
                .iter()
                .map(|p| p.parse::<f64>().map_err(|e| Error::Parse(format!("line {no}: `{p}`: {e}"))))
                .collect()
        };
        let (no, magic) = next("dgame-lattice")?;
        if magic != ["v1"] {
            return Err(Error::Parse(format!("line {no}: unsupported lattice version {magic:?}")));
        }
        let (no, dim) = next("dim")?;
        let d: usize = dim.first().and_then(|s| s.parse().ok()).ok_or_else(|| Error::Parse(format!("line {no}: bad dim")))?;
        let (no, lower) = next("lower")?;
        let lower = floats(no, &lower)?;
        let (no, step) = next("step")?;
        let step = floats(no, &step)?;
        let (no, nodes) = next("nodes")?;
        let nodes = nodes
            .iter()
            .map(|p| p.parse::<usize>().map_err(|e| Error::Parse(format!("line {no}: `{p}`: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        if lower.len() != d || step.len() != d || nodes.len() != d {
            return Err(Error::Parse(format!("line {no}: lattice header does not match dim {d}")));
        }
        let lattice = Lattice::from_parts(lower, step, nodes)?;
        let mut params = BTreeMap::new();
        let levels = loop {
            let (no, line) = lines.next().ok_or_else(|| Error::Parse("missing `levels`".into()))?;
            let parts: Vec<&str> = line.split_whitespace().collect();
            match parts.as_slice() {
                ["param", k, v] => {
                    params.insert(k.to_string(), v.parse::<f64>().map_err(|e| Error::Parse(format!("line {}: {e}", no + 1)))?);
                }
                ["levels", n] => break n.parse::<usize>().map_err(|e| Error::Parse(format!("line {}: {e}", no + 1)))?,
                _ => return Err(Error::Parse(format!("line {}: expected `param` or `levels`", no + 1))),
            }
        };
        let mut next = |key: &str| -> Result<(usize, Vec<String>)> {
            let (no, line) = lines.next().ok_or_else(|| Error::Parse(format!("unexpected end of file, expected `{key}`")))?;
            let mut parts = line.split_whitespace();
            if parts.next() != Some(key) {
                return Err(Error::Parse(format!("line {}: expected `{key}`", no + 1)));
            }
            Ok((no + 1, parts.map(str::to_owned).collect()))
        };
        let mut pair = GridPair { lattice, times: Vec::new(), c1: Vec::new(), c2: Vec::new(), params };
        for _ in 0..levels {
            let (no, t) = next("time")?;
            pair.times.push(*floats(no, &t)?.first().ok_or_else(|| Error::Parse(format!("line {no}: missing time")))?);
            let (no, a) = next("c1")?;
            pair.c1.push(floats(no, &a)?);
            let (no, b) = next("c2")?;
            pair.c2.push(floats(no, &b)?);
        }
        pair.validate()?;
        Ok(pair)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_values(lat: &Lattice, a: &[f64], c: f64) -> Vec<f64> {
        (0..lat.len()).map(|i| crate::linalg::dot(a, &lat.node(i)) + c).collect()
    }

    #[test]
    fn linear_function_is_reproduced() {
        let lat = Lattice::covering(&[-1.0, -2.0], &[1.0, 2.0], 0.1).unwrap();
        let a = [0.25, -1.0];
        let vals = linear_values(&lat, &a, 0.3);
        for x in [[0.013, 0.77], [-0.999, 1.999], [1.0, -2.0], [1.3, 2.4]] {
            let (v, ext) = lat.interpolate(&vals, &x);
            assert!((v - (crate::linalg::dot(&a, &x) + 0.3)).abs() < 1e-12);
            assert_eq!(ext, x[0] > 1.0);
            let g = lat.interpolate_gradient(&vals, &x);
            assert!((g[0] - a[0]).abs() < 1e-12 && (g[1] - a[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn face_extrapolation_is_exact_for_linear() {
        let lat = Lattice::covering(&[0.0, 0.0], &[1.0, 1.0], 0.25).unwrap();
        let want = linear_values(&lat, &[2.0, -3.0], 1.0);
        let mut vals = want.clone();
        for (i, v) in vals.iter_mut().enumerate() {
            if !lat.is_interior(i) {
                *v = 99.0;
            }
        }
        lat.extrapolate_faces(&mut vals);
        for (a, b) in vals.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn text_round_trip_is_lossless() {
        let lat = Lattice::covering(&[-0.3, 0.1], &[0.7, 0.9], 0.1).unwrap();
        let vals: Vec<f64> = (0..lat.len()).map(|i| (i as f64 * 0.1).sin() / 3.0).collect();
        let mut params = BTreeMap::new();
        params.insert("zeta".to_string(), 0.25);
        let pair = GridPair {
            lattice: lat,
            times: vec![0.0, 1.0 / 3.0],
            c1: vec![vals.clone(), vals.iter().map(|v| v * std::f64::consts::PI).collect()],
            c2: vec![vals.clone(), vals],
            params,
        };
        let back = GridPair::from_text(&pair.to_text()).unwrap();
        assert_eq!(back, pair);
        assert!(matches!(GridPair::from_text("dgame-lattice v2\n"), Err(Error::Parse(_))));
    }
}
