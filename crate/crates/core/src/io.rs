//! CSV persistence with versioned schema headers.
//!
//! Every file starts with a `# schema=<id>` comment line, optionally followed
//! by `key=value` metadata on the same line. Floats are written with 17
//! significant digits so they reparse bit-for-bit.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::finite_oracle::FiniteChain;
use crate::samplers::Trace;

pub const CHAIN_SCHEMA: &str = "pmcmc.chain.v1";
pub const TRACE_SCHEMA: &str = "pmcmc.trace.v1";

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn schema_line(schema: &str, meta: &[(&str, String)]) -> String {
    let mut line = format!("# schema={schema}");
    for (k, v) in meta {
        line.push_str(&format!(" {k}={v}"));
    }
    line
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("not a number: {s:?}")))
}

fn open(path: &Path) -> Result<File> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    Ok(File::open(path)?)
}

/// Row-major transition matrix: schema line, `n,<N>`, then `N` rows.
pub fn write_chain<W: Write>(chain: &FiniteChain, mut out: W) -> Result<()> {
    writeln!(out, "{}", schema_line(CHAIN_SCHEMA, &[]))?;
    writeln!(out, "n,{}", chain.n())?;
    for i in 0..chain.n() {
        let row: Vec<String> = chain.matrix().row(i).iter().map(|v| fmt_f64(*v)).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn read_chain<R: Read>(input: R) -> Result<FiniteChain> {
    let mut lines = BufReader::new(input)
        .lines()
        .filter(|l| l.as_ref().map_or(true, |l| !l.trim().is_empty() && !l.starts_with('#')));
    let header = lines
        .next()
        .ok_or_else(|| Error::InvalidArgument("empty chain file".into()))??;
    let n: usize = header
        .strip_prefix("n,")
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| Error::InvalidArgument(format!("expected `n,<size>`, got {header:?}")))?;
    let mut values = Vec::with_capacity(n * n);
    for line in lines.by_ref().take(n) {
        let line = line?;
        let row = line.split(',').map(parse_f64).collect::<Result<Vec<_>>>()?;
        if row.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: row.len() });
        }
        values.extend(row);
    }
    if values.len() != n * n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: values.len() / n.max(1),
        });
    }
    FiniteChain::from_matrix(DMatrix::from_row_slice(n, n, &values))
}

pub fn save_chain(chain: &FiniteChain, path: &Path) -> Result<()> {
    write_chain(chain, File::create(path)?)
}

pub fn load_chain(path: &Path) -> Result<FiniteChain> {
    read_chain(open(path)?)
}

/// Trace as `iter,accepted,x0,…` rows; the seed and kernel go in the header.
pub fn write_trace<W: Write>(trace: &Trace, out: W) -> Result<()> {
    let mut out = out;
    writeln!(
        out,
        "{}",
        schema_line(TRACE_SCHEMA, &[("seed", trace.seed.to_string()), ("kernel", trace.kernel.replace(' ', "_"))])
    )?;
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["iter".to_string(), "accepted".to_string()];
    header.extend((0..trace.dim()).map(|j| format!("x{j}")));
    w.write_record(&header)?;
    let acc = trace.acceptance_indicators();
    for (i, s) in trace.states().enumerate() {
        let mut rec = vec![i.to_string(), (acc[i] as u8).to_string()];
        rec.extend(s.iter().map(|v| fmt_f64(*v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_roundtrip_exactly() {
        for v in [0.1, 1.0 / 3.0, f64::MIN_POSITIVE, 1e300, -2.5e-17, std::f64::consts::PI] {
            assert_eq!(parse_f64(&fmt_f64(v)).unwrap(), v);
        }
    }

    #[test]
    fn chain_roundtrip() {
        let c = FiniteChain::new(vec![vec![0.1, 0.9], vec![1.0 / 3.0, 2.0 / 3.0]]).unwrap();
        let mut buf = Vec::new();
        write_chain(&c, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# schema=pmcmc.chain.v1\nn,2\n"));
        assert_eq!(read_chain(buf.as_slice()).unwrap().matrix(), c.matrix());
    }

    #[test]
    fn malformed_chains_are_rejected() {
        assert!(read_chain("n,2\n0.5,0.5\n".as_bytes()).is_err());
        assert!(read_chain("size 2\n".as_bytes()).is_err());
        assert!(read_chain("n,2\n0.5,0.6\n0.5,0.5\n".as_bytes()).is_err());
        assert!(matches!(load_chain(Path::new("/nonexistent/chain.csv")), Err(Error::MissingFile(_))));
    }
}
