//! Chains as CSV: header `chain,iteration,<name>...`, one row per kept draw,
//! chains in order, iterations counted from 0 within each chain.

use std::io::{Read, Write};
use std::path::Path;

use super::ChainSet;
use crate::error::{Error, Result};

pub fn write_chains_csv<W: Write>(cs: &ChainSet, names: &[String], out: W) -> Result<()> {
    if names.len() != cs.dim() {
        return Err(Error::Shape(format!(
            "{} column names for dimension {}",
            names.len(),
            cs.dim()
        )));
    }
    let mut w = csv::Writer::from_writer(out);
    let header = ["chain".to_string(), "iteration".to_string()]
        .into_iter()
        .chain(names.iter().cloned());
    w.write_record(header).map_err(csv_err)?;
    for (c, chain) in cs.draws.iter().enumerate() {
        for (i, d) in chain.iter().enumerate() {
            let row = [c.to_string(), i.to_string()]
                .into_iter()
                .chain(d.iter().map(|v| format!("{v:e}")));
            w.write_record(row).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse(format!("chains CSV: {other:?}")),
    }
}

/// Parse chains CSV; returns the parameter names and the draws.
pub fn parse_chains_csv<R: Read>(input: R) -> Result<(Vec<String>, ChainSet)> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(input);
    let header = r.headers().map_err(csv_err)?.clone();
    if header.len() < 3 || &header[0] != "chain" || &header[1] != "iteration" {
        return Err(Error::Parse(
            "chains CSV header must start with `chain,iteration` followed by at least one parameter".into(),
        ));
    }
    let names: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
    let mut draws: Vec<Vec<Vec<f64>>> = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let row = line + 2;
        let field = |k: usize| rec.get(k).unwrap_or("");
        let chain: usize = field(0)
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("line {row}: bad chain index `{}`", field(0))))?;
        let iter: usize = field(1)
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("line {row}: bad iteration `{}`", field(1))))?;
        if chain == draws.len() {
            draws.push(Vec::new());
        } else if chain + 1 != draws.len() {
            return Err(Error::Parse(format!(
                "line {row}: chains must appear in order 0, 1, ..."
            )));
        }
        let current = draws.last_mut().expect("pushed");
        if iter != current.len() {
            return Err(Error::Parse(format!(
                "line {row}: expected iteration {} of chain {chain}, found {iter}",
                current.len()
            )));
        }
        let values = (2..rec.len())
            .map(|k| {
                field(k)
                    .trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        Error::Parse(format!(
                            "line {row}: bad value `{}` in column {}",
                            field(k),
                            k + 1
                        ))
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        current.push(values);
    }
    if draws.is_empty() {
        return Err(Error::Parse("chains CSV has no draws".into()));
    }
    let cs = ChainSet::from_draws(draws).map_err(|e| Error::Parse(e.to_string()))?;
    Ok((names, cs))
}

pub fn read_chains_csv(path: &Path) -> Result<(Vec<String>, ChainSet)> {
    parse_chains_csv(std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writes_expected_layout() {
        let cs = ChainSet::from_draws(vec![vec![vec![0.5, -1.0]], vec![vec![2.0, 3.0]]]).unwrap();
        let mut buf = Vec::new();
        write_chains_csv(&cs, &["theta".into(), "gamma_1".into()], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "chain,iteration,theta,gamma_1\n0,0,5e-1,-1e0\n1,0,2e0,3e0\n"
        );
        let (names, back) = parse_chains_csv(text.as_bytes()).unwrap();
        assert_eq!(names, vec!["theta", "gamma_1"]);
        assert_eq!(back.draws, cs.draws);
    }

    #[test]
    fn rejects_malformed_input() {
        for bad in [
            "",
            "a,b,c\n",
            "chain,iteration\n0,0\n",
            "chain,iteration,x\n1,0,1.0\n",
            "chain,iteration,x\n0,1,1.0\n",
            "chain,iteration,x\n0,0,nan\n",
            "chain,iteration,x\n0,0,1.0,2.0\n",
            "chain,iteration,x\n0,0,1.0\n0,1,1.0\n1,0,2.0\n",
        ] {
            assert!(parse_chains_csv(bad.as_bytes()).is_err(), "{bad:?}");
        }
    }
}
