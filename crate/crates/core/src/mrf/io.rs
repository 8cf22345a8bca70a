//! Text model format:
//!
//! ```text
//! n k
//! phi i v_1 .. v_k
//! psi i j
//! <k lines of k values>
//! ```
//!
//! Nodes without a `phi` line get `φ = 1`. Blank lines and `#` comments are
//! ignored.

use std::path::Path;

use super::{MrfError, PairwiseMRF};

fn err(line: usize, msg: impl Into<String>) -> MrfError {
    MrfError::Parse {
        line,
        msg: msg.into(),
    }
}

fn floats(line: usize, toks: &[&str]) -> Result<Vec<f64>, MrfError> {
    toks.iter()
        .map(|t| t.parse::<f64>().map_err(|_| err(line, format!("bad number {t:?}"))))
        .collect()
}

fn index(line: usize, tok: Option<&&str>) -> Result<usize, MrfError> {
    let tok = tok.ok_or_else(|| err(line, "missing node index"))?;
    tok.parse().map_err(|_| err(line, format!("bad node index {tok:?}")))
}

pub fn parse_mrf(text: &str) -> Result<PairwiseMRF, MrfError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());

    let (hl, header) = lines.next().ok_or_else(|| err(1, "empty model file"))?;
    let h: Vec<&str> = header.split_whitespace().collect();
    if h.len() != 2 {
        return Err(err(hl, "expected header `n k`"));
    }
    let n = index(hl, h.first())?;
    let k = index(hl, h.get(1))?;

    let mut phi = vec![vec![1.0; k]; n];
    let mut psi = Vec::new();
    while let Some((ln, l)) = lines.next() {
        let toks: Vec<&str> = l.split_whitespace().collect();
        match toks[0] {
            "phi" => {
                let i = index(ln, toks.get(1))?;
                if i >= n {
                    return Err(MrfError::IndexOutOfRange { index: i, n });
                }
                let v = floats(ln, &toks[2..])?;
                if v.len() != k {
                    return Err(err(ln, format!("phi needs {k} values, got {}", v.len())));
                }
                phi[i] = v;
            }
            "psi" => {
                if toks.len() != 3 {
                    return Err(err(ln, "expected `psi i j`"));
                }
                let (i, j) = (index(ln, toks.get(1))?, index(ln, toks.get(2))?);
                let mut table = Vec::with_capacity(k);
                for _ in 0..k {
                    let (rl, row) = lines.next().ok_or_else(|| err(ln, "truncated psi table"))?;
                    let toks: Vec<&str> = row.split_whitespace().collect();
                    let v = floats(rl, &toks)?;
                    if v.len() != k {
                        return Err(err(rl, format!("psi row needs {k} values, got {}", v.len())));
                    }
                    table.push(v);
                }
                psi.push(((i, j), table));
            }
            other => return Err(err(ln, format!("unknown record {other:?}"))),
        }
    }
    PairwiseMRF::new(k, phi, psi)
}

pub fn load_mrf(path: impl AsRef<Path>) -> Result<PairwiseMRF, MrfError> {
    parse_mrf(&std::fs::read_to_string(path)?)
}

/// Serializes a model; parsing the output reproduces it up to `exp`/`ln` rounding.
pub fn format_mrf(m: &PairwiseMRF) -> String {
    let mut out = format!("{} {}\n", m.n(), m.k());
    for i in 0..m.n() {
        let v: Vec<String> = m.log_phi(i).iter().map(|l| format!("{:?}", l.exp())).collect();
        out.push_str(&format!("phi {i} {}\n", v.join(" ")));
    }
    for (e, &(i, j)) in m.edges().iter().enumerate() {
        out.push_str(&format!("psi {i} {j}\n"));
        for a in 0..m.k() {
            let row: Vec<String> = (0..m.k())
                .map(|b| format!("{:?}", m.log_psi(e, a, b).exp()))
                .collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_example() {
        let m = parse_mrf(
            "# chain\n2 2\nphi 0 1 3\npsi 0 1\n2 1\n1 2\n",
        )
        .unwrap();
        assert_eq!(m.n(), 2);
        assert_eq!(m.edges(), &[(0, 1)]);
        assert!((m.log_phi(0)[1] - 3.0_f64.ln()).abs() < 1e-15);
        assert_eq!(m.log_phi(1), &[0.0, 0.0]);
        assert!((m.log_psi(0, 0, 0) - 2.0_f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(parse_mrf("").is_err());
        assert!(parse_mrf("2 2\npsi 0 1\n1 1\n").is_err());
        assert!(parse_mrf("2 2\nphi 5 1 1\n").is_err());
        assert!(parse_mrf("2 2\nphi 0 1 -1\n").is_err());
        assert!(parse_mrf("2 2\nfoo\n").is_err());
    }

    #[test]
    fn round_trip() {
        let m = parse_mrf("3 2\nphi 0 0.5 2\npsi 0 2\n1 3\n2 0.25\npsi 1 2\n1 1\n1 4\n").unwrap();
        let again = parse_mrf(&format_mrf(&m)).unwrap();
        assert_eq!(m.edges(), again.edges());
        for e in 0..2 {
            for a in 0..2 {
                for b in 0..2 {
                    assert!((m.log_psi(e, a, b) - again.log_psi(e, a, b)).abs() < 1e-14);
                }
            }
        }
    }
}
