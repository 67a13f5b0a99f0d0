//! Scalar functions of `x` given as config strings.
//!
//! Two forms are accepted: `A + B*cos(2*pi*k*x)` (any part but the cosine
//! may be dropped, `-` works in place of `+`), and `table:<path>` naming a
//! file of samples on a uniform grid over `[0, length)`, interpolated
//! linearly and periodically.

use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use weakkam_core::Potential;

const NUM: &str = r"(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?";

fn constant_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(&format!(r"^\s*([+-]?\s*{NUM})\s*$")).unwrap())
}

fn cosine_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(&format!(
            r"^\s*(?:(?P<a>[+-]?\s*{NUM})\s*(?P<op>[+-]))?\s*(?P<sign>[+-])?\s*(?:(?P<b>{NUM})\s*\*\s*)?cos\s*\(\s*2\s*\*\s*pi\s*\*\s*(?:(?P<k>{NUM})\s*\*\s*)?x\s*\)\s*$"
        ))
        .unwrap()
    })
}

fn number(s: &str) -> f64 {
    s.chars().filter(|c| !c.is_whitespace()).collect::<String>().parse().expect("matched a number")
}

/// Parses `expr`; relative table paths resolve against `base_dir`.
pub fn parse_function(expr: &str, length: f64, base_dir: &Path) -> Result<Potential, String> {
    if let Some(path) = expr.trim().strip_prefix("table:") {
        let path = base_dir.join(path.trim());
        let text = std::fs::read_to_string(&path).map_err(|e| format!("cannot read table {}: {e}", path.display()))?;
        let values = text
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>().map_err(|_| format!("bad number {s:?} in {}", path.display())))
            .collect::<Result<Vec<_>, _>>()?;
        return Potential::table(values, length).map_err(|e| format!("table {}: {e}", path.display()));
    }
    if let Some(c) = constant_re().captures(expr) {
        return Ok(Potential::constant(number(&c[1])));
    }
    let c = cosine_re()
        .captures(expr)
        .ok_or_else(|| format!("cannot parse {expr:?}; expected \"A + B*cos(2*pi*k*x)\" or \"table:<path>\""))?;
    let a = c.name("a").map_or(0.0, |m| number(m.as_str()));
    let mut b = c.name("b").map_or(1.0, |m| number(m.as_str()));
    if c.name("op").is_some_and(|m| m.as_str() == "-") {
        b = -b;
    }
    if c.name("sign").is_some_and(|m| m.as_str() == "-") {
        b = -b;
    }
    let k = c.name("k").map_or(1.0, |m| number(m.as_str()));
    if a.is_finite() && b.is_finite() && k.is_finite() {
        Ok(Potential::cosine(a, b, k))
    } else {
        Err(format!("non-finite coefficient in {expr:?}"))
    }
}
