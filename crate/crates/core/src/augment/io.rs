//! Flat-file formats for the frequency tensor and Tucker factors.
//!
//! ```text
//! cbm-tensor 1
//! dims <users> <venues> <topics>
//! entries <n>
//! <user> <venue> <topic> <count>      (n lines, sorted)
//! end
//!
//! cbm-tucker 1
//! lambda <value>
//! core <d_U> <d_V> <d_Z>
//! <d_U * d_V * d_Z values, row-major, one line>
//! matrix U <rows> <cols>
//! <one row per line>
//! matrix V ... / matrix Z ...
//! trace <n>
//! <n values, one line>
//! end
//! ```

use std::io::{BufRead, Write};

use super::{Dense3, FrequencyTensor, TuckerFactors};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

const TENSOR_VERSION: u32 = 1;
const FACTORS_VERSION: u32 = 1;

pub fn write_tensor(tensor: &FrequencyTensor, mut w: impl Write) -> Result<()> {
    writeln!(w, "cbm-tensor {TENSOR_VERSION}")?;
    writeln!(w, "dims {} {} {}", tensor.dims.0, tensor.dims.1, tensor.dims.2)?;
    writeln!(w, "entries {}", tensor.entries.len())?;
    for (&(u, v, z), &n) in &tensor.entries {
        writeln!(w, "{u} {v} {z} {n}")?;
    }
    writeln!(w, "end")?;
    Ok(())
}

fn join(values: &[f64]) -> String {
    values.iter().map(f64::to_string).collect::<Vec<_>>().join(" ")
}

pub fn write_factors(factors: &TuckerFactors, mut w: impl Write) -> Result<()> {
    writeln!(w, "cbm-tucker {FACTORS_VERSION}")?;
    writeln!(w, "lambda {}", factors.lambda)?;
    let [a, b, c] = factors.core.dims;
    writeln!(w, "core {a} {b} {c}")?;
    writeln!(w, "{}", join(&factors.core.data))?;
    for (name, m) in [("U", &factors.u), ("V", &factors.v), ("Z", &factors.z)] {
        writeln!(w, "matrix {name} {} {}", m.rows(), m.cols())?;
        for r in 0..m.rows() {
            writeln!(w, "{}", join(m.row(r)))?;
        }
    }
    writeln!(w, "trace {}", factors.trace.len())?;
    writeln!(w, "{}", join(&factors.trace))?;
    writeln!(w, "end")?;
    Ok(())
}

/// Objective trace as CSV with header `iteration,objective`.
pub fn write_trace(trace: &[f64], mut w: impl Write) -> Result<()> {
    writeln!(w, "iteration,objective")?;
    for (i, f) in trace.iter().enumerate() {
        writeln!(w, "{i},{f}")?;
    }
    Ok(())
}

struct Reader<R> {
    lines: std::io::Lines<R>,
    lineno: usize,
    what: &'static str,
}

impl<R: BufRead> Reader<R> {
    fn new(r: R, what: &'static str) -> Self {
        Reader {
            lines: r.lines(),
            lineno: 0,
            what,
        }
    }

    fn line(&mut self) -> Result<String> {
        self.lineno += 1;
        match self.lines.next() {
            Some(l) => Ok(l?),
            None => Err(self.err("unexpected end of file")),
        }
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::parse(self.what, self.lineno, msg)
    }

    /// Reads `keyword` followed by exactly `n` fields.
    fn header(&mut self, keyword: &str, n: usize) -> Result<Vec<String>> {
        let line = self.line()?;
        let parts: Vec<String> = line.split(' ').map(str::to_owned).collect();
        if parts[0] != keyword || parts.len() != n + 1 {
            return Err(self.err(format!("expected `{keyword}` with {n} fields, got `{line}`")));
        }
        Ok(parts[1..].to_vec())
    }

    fn parse<T: std::str::FromStr>(&self, s: &str) -> Result<T> {
        s.parse().map_err(|_| self.err(format!("bad number `{s}`")))
    }

    fn values(&mut self, expected: usize) -> Result<Vec<f64>> {
        let line = self.line()?;
        let out = line
            .split(' ')
            .filter(|t| !t.is_empty())
            .map(|t| self.parse(t))
            .collect::<Result<Vec<f64>>>()?;
        if out.len() != expected {
            return Err(self.err(format!("expected {expected} values, found {}", out.len())));
        }
        Ok(out)
    }

    fn version(&mut self, magic: &str, supported: u32) -> Result<()> {
        let p = self.header(magic, 1)?;
        let v: u32 = self.parse(&p[0])?;
        if v != supported {
            return Err(self.err(format!("unsupported {magic} version {v}")));
        }
        Ok(())
    }

    fn end(&mut self) -> Result<()> {
        if self.line()? != "end" {
            return Err(self.err("expected `end`"));
        }
        Ok(())
    }
}

pub fn read_tensor(r: impl BufRead) -> Result<FrequencyTensor> {
    let mut rd = Reader::new(r, "tensor");
    rd.version("cbm-tensor", TENSOR_VERSION)?;
    let d = rd.header("dims", 3)?;
    let dims = (rd.parse(&d[0])?, rd.parse(&d[1])?, rd.parse(&d[2])?);
    let h = rd.header("entries", 1)?;
    let n: usize = rd.parse(&h[0])?;
    let mut tensor = FrequencyTensor::new(dims);
    for _ in 0..n {
        let line = rd.line()?;
        let f: Vec<&str> = line.split(' ').collect();
        if f.len() != 4 {
            return Err(rd.err(format!("expected `user venue topic count`, got `{line}`")));
        }
        let key: (usize, usize, usize) = (rd.parse(f[0])?, rd.parse(f[1])?, rd.parse(f[2])?);
        if key.0 >= dims.0 || key.1 >= dims.1 || key.2 >= dims.2 {
            return Err(rd.err(format!("entry {key:?} outside dims {dims:?}")));
        }
        tensor.entries.insert(key, rd.parse(f[3])?);
    }
    rd.end()?;
    Ok(tensor)
}

pub fn read_factors(r: impl BufRead) -> Result<TuckerFactors> {
    let mut rd = Reader::new(r, "factors");
    rd.version("cbm-tucker", FACTORS_VERSION)?;
    let h = rd.header("lambda", 1)?;
    let lambda: f64 = rd.parse(&h[0])?;
    let c = rd.header("core", 3)?;
    let dims: [usize; 3] = [rd.parse(&c[0])?, rd.parse(&c[1])?, rd.parse(&c[2])?];
    let core = Dense3::from_vec(dims, rd.values(dims.iter().product())?);
    let mut mats = Vec::with_capacity(3);
    for name in ["U", "V", "Z"] {
        let p = rd.header("matrix", 3)?;
        if p[0] != name {
            return Err(rd.err(format!("expected matrix {name}, found {}", p[0])));
        }
        let rows: usize = rd.parse(&p[1])?;
        let cols: usize = rd.parse(&p[2])?;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            data.extend(rd.values(cols)?);
        }
        mats.push(Matrix::from_vec(rows, cols, data));
    }
    let h = rd.header("trace", 1)?;
    let n: usize = rd.parse(&h[0])?;
    let trace = if n == 0 {
        rd.line()?;
        Vec::new()
    } else {
        rd.values(n)?
    };
    rd.end()?;
    let z = mats.pop().unwrap();
    let v = mats.pop().unwrap();
    let u = mats.pop().unwrap();
    if u.cols() != dims[0] || v.cols() != dims[1] || z.cols() != dims[2] {
        return Err(Error::InvalidArgument("factor ranks disagree with core dimensions".into()));
    }
    Ok(TuckerFactors {
        core,
        u,
        v,
        z,
        lambda,
        trace,
    })
}
