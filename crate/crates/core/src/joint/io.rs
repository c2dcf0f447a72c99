//! Versioned flat-file model format.
//!
//! ```text
//! cbm-model 1
//! hyper <alpha> <beta> <gamma> <eta> <communities> <topics>
//! table users <n> <sha256>
//! <one name per line>
//! table venues <n> <sha256>
//! ...
//! table words <n> <sha256>
//! ...
//! matrix pi <rows> <cols>
//! <one row per line, space separated>
//! matrix theta ... / matrix vartheta ... / matrix phi ...
//! end
//! ```
//!
//! Floats use Rust's shortest round-trip formatting, so a write/read cycle
//! is bit-exact.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{CbmModel, Hyperparams};
use crate::corpus::{hash_names, Corpus};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// External names for the model's user, venue and word indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdTables {
    pub users: Vec<String>,
    pub venues: Vec<String>,
    pub words: Vec<String>,
}

impl IdTables {
    pub fn of(corpus: &Corpus) -> Self {
        IdTables {
            users: corpus.users().names().to_vec(),
            venues: corpus.venues().names().to_vec(),
            words: corpus.words().names().to_vec(),
        }
    }
}

pub fn write_model(model: &CbmModel, tables: &IdTables, mut w: impl Write) -> Result<()> {
    let dims = model.dims();
    if tables.users.len() != dims.users || tables.venues.len() != dims.venues || tables.words.len() != dims.words {
        return Err(Error::InvalidArgument("id tables disagree with model dimensions".into()));
    }
    let h = &model.hyper;
    writeln!(w, "cbm-model {MODEL_FORMAT_VERSION}")?;
    writeln!(w, "hyper {} {} {} {} {} {}", h.alpha, h.beta, h.gamma, h.eta, h.communities, h.topics)?;
    for (name, table) in [("users", &tables.users), ("venues", &tables.venues), ("words", &tables.words)] {
        writeln!(w, "table {name} {} {}", table.len(), hash_names(table))?;
        for n in table.iter() {
            writeln!(w, "{n}")?;
        }
    }
    for (name, m) in [("pi", &model.pi), ("theta", &model.theta), ("vartheta", &model.vartheta), ("phi", &model.phi)] {
        writeln!(w, "matrix {name} {} {}", m.rows(), m.cols())?;
        for r in 0..m.rows() {
            let row: Vec<String> = m.row(r).iter().map(f64::to_string).collect();
            writeln!(w, "{}", row.join(" "))?;
        }
    }
    writeln!(w, "end")?;
    Ok(())
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    lineno: usize,
}

impl<R: BufRead> Lines<R> {
    fn next(&mut self) -> Result<String> {
        self.lineno += 1;
        match self.inner.next() {
            Some(l) => Ok(l?),
            None => Err(self.err("unexpected end of file")),
        }
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::parse("model", self.lineno, msg)
    }

    fn header<'a>(&self, line: &'a str, keyword: &str, fields: usize) -> Result<Vec<&'a str>> {
        let parts: Vec<&str> = line.split(' ').collect();
        if parts.first() != Some(&keyword) || parts.len() != fields {
            return Err(self.err(format!("expected `{keyword}` header with {fields} fields, got `{line}`")));
        }
        Ok(parts)
    }
}

fn num<T: std::str::FromStr>(lines: &Lines<impl BufRead>, s: &str) -> Result<T> {
    s.parse().map_err(|_| lines.err(format!("bad number `{s}`")))
}

pub fn read_model(r: impl BufRead) -> Result<(CbmModel, IdTables)> {
    let mut lines = Lines { inner: r.lines(), lineno: 0 };
    let magic = lines.next()?;
    let parts = lines.header(&magic, "cbm-model", 2)?;
    let version: u32 = num(&lines, parts[1])?;
    if version != MODEL_FORMAT_VERSION {
        return Err(lines.err(format!("unsupported model format version {version}")));
    }
    let line = lines.next()?;
    let p = lines.header(&line, "hyper", 7)?;
    let hyper = Hyperparams {
        alpha: num(&lines, p[1])?,
        beta: num(&lines, p[2])?,
        gamma: num(&lines, p[3])?,
        eta: num(&lines, p[4])?,
        communities: num(&lines, p[5])?,
        topics: num(&lines, p[6])?,
    };

    let mut tables: Vec<Vec<String>> = Vec::new();
    for name in ["users", "venues", "words"] {
        let line = lines.next()?;
        let p = lines.header(&line, "table", 4)?;
        if p[1] != name {
            return Err(lines.err(format!("expected table `{name}`, found `{}`", p[1])));
        }
        let n: usize = num(&lines, p[2])?;
        let declared = p[3].to_owned();
        let mut names = Vec::with_capacity(n);
        for _ in 0..n {
            names.push(lines.next()?);
        }
        let computed = hash_names(&names);
        if computed != declared {
            return Err(Error::HashMismatch {
                table: name.to_owned(),
                declared,
                computed,
            });
        }
        tables.push(names);
    }

    let mut mats = Vec::new();
    for name in ["pi", "theta", "vartheta", "phi"] {
        let line = lines.next()?;
        let p = lines.header(&line, "matrix", 4)?;
        if p[1] != name {
            return Err(lines.err(format!("expected matrix `{name}`, found `{}`", p[1])));
        }
        let rows: usize = num(&lines, p[2])?;
        let cols: usize = num(&lines, p[3])?;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let line = lines.next()?;
            let before = data.len();
            for tok in line.split(' ').filter(|t| !t.is_empty()) {
                data.push(num::<f64>(&lines, tok)?);
            }
            if data.len() - before != cols {
                return Err(lines.err(format!("matrix {name}: expected {cols} values per row")));
            }
        }
        mats.push(Matrix::from_vec(rows, cols, data));
    }
    if lines.next()? != "end" {
        return Err(lines.err("expected `end`"));
    }
    let phi = mats.pop().unwrap();
    let vartheta = mats.pop().unwrap();
    let theta = mats.pop().unwrap();
    let pi = mats.pop().unwrap();
    let words = tables.pop().unwrap();
    let venues = tables.pop().unwrap();
    let users = tables.pop().unwrap();
    let model = CbmModel {
        pi,
        theta,
        vartheta,
        phi,
        hyper,
    };
    let dims = model.dims();
    if model.theta.rows() != hyper.communities
        || model.phi.rows() != hyper.topics
        || dims.users != users.len()
        || dims.venues != venues.len()
        || dims.words != words.len()
    {
        return Err(Error::InvalidArgument("model matrices disagree with header dimensions".into()));
    }
    Ok((model, IdTables { users, venues, words }))
}
