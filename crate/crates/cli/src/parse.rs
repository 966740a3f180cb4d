//! Parsers for command-line values: covariate patterns, subgroup filters,
//! time grids and structure lists.

use anyhow::{anyhow, bail, ensure, Context, Result};
use ghew::{Dataset, Structure, StructureKind, SubjectRecord};

/// `name=value,...` naming every covariate once, or bare values in
/// covariate order.
pub fn parse_pattern(text: &str, names: &[String]) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    let number = |s: &str| -> Result<f64> {
        let v: f64 = s.parse().with_context(|| format!("invalid number `{s}` in pattern `{text}`"))?;
        ensure!(v.is_finite(), "non-finite value `{s}` in pattern `{text}`");
        Ok(v)
    };
    if !parts.iter().any(|p| p.contains('=')) {
        ensure!(
            parts.len() == names.len(),
            "pattern `{text}` has {} values; expected {} ({})",
            parts.len(),
            names.len(),
            names.join(", ")
        );
        return parts.iter().map(|p| number(p)).collect();
    }
    let mut x: Vec<Option<f64>> = vec![None; names.len()];
    for p in &parts {
        let (name, value) = p.split_once('=').ok_or_else(|| anyhow!("pattern entry `{p}` is not name=value"))?;
        let i = names
            .iter()
            .position(|n| n == name.trim())
            .ok_or_else(|| anyhow!("unknown covariate `{}` in pattern (known: {})", name.trim(), names.join(", ")))?;
        ensure!(x[i].is_none(), "covariate `{}` set twice in pattern", names[i]);
        x[i] = Some(number(value.trim())?);
    }
    let missing: Vec<&str> = names.iter().zip(&x).filter(|(_, v)| v.is_none()).map(|(n, _)| n.as_str()).collect();
    ensure!(missing.is_empty(), "pattern `{text}` does not set {}", missing.join(", "));
    Ok(x.into_iter().flatten().collect())
}

/// Pattern label safe for a comma-delimited column.
pub fn pattern_id(text: &str) -> String {
    text.split(',').map(str::trim).collect::<Vec<_>>().join(";")
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Eq,
    Lt,
    Le,
    Gt,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
enum Field {
    Covariate(usize),
    Age,
    Year,
    Time,
    Status,
    Strata,
}

/// One `field op value` condition on dataset records.
#[derive(Debug, Clone, PartialEq)]
pub struct Filter {
    field: Field,
    op: Op,
    number: f64,
    text: String,
}

impl Filter {
    /// Fields are covariate names, `age`, `year`, `time`, `status` or
    /// `strata` (equality only). Operators: `=`, `<`, `<=`, `>`, `>=`.
    pub fn parse(expr: &str, names: &[String]) -> Result<Self> {
        let at = expr.find(['<', '>', '=']).ok_or_else(|| anyhow!("filter `{expr}` has no operator"))?;
        let name = expr[..at].trim();
        let rest = &expr[at..];
        let (op, len) = if rest.starts_with("<=") {
            (Op::Le, 2)
        } else if rest.starts_with(">=") {
            (Op::Ge, 2)
        } else if rest.starts_with('<') {
            (Op::Lt, 1)
        } else if rest.starts_with('>') {
            (Op::Gt, 1)
        } else {
            (Op::Eq, 1)
        };
        let value = rest[len..].trim();
        ensure!(!value.is_empty(), "filter `{expr}` has no value");
        let field = if let Some(i) = names.iter().position(|n| n == name) {
            Field::Covariate(i)
        } else {
            match name {
                "age" => Field::Age,
                "year" => Field::Year,
                "time" => Field::Time,
                "status" => Field::Status,
                "strata" => Field::Strata,
                _ => bail!("unknown filter field `{name}` (covariates: {})", names.join(", ")),
            }
        };
        let number = if field == Field::Strata {
            ensure!(op == Op::Eq, "strata filters support `=` only");
            f64::NAN
        } else {
            value.parse().with_context(|| format!("invalid number `{value}` in filter `{expr}`"))?
        };
        Ok(Self { field, op, number, text: value.to_string() })
    }

    pub fn matches(&self, r: &SubjectRecord) -> bool {
        let v = match self.field {
            Field::Covariate(i) => r.covariates[i],
            Field::Age => r.demographic.age,
            Field::Year => r.demographic.year,
            Field::Time => r.time,
            Field::Status => f64::from(u8::from(r.status)),
            Field::Strata => return r.demographic.strata == self.text,
        };
        match self.op {
            Op::Eq => v == self.number,
            Op::Lt => v < self.number,
            Op::Le => v <= self.number,
            Op::Gt => v > self.number,
            Op::Ge => v >= self.number,
        }
    }
}

/// Covariate vectors of the records satisfying every filter.
pub fn subgroup(data: &Dataset, filters: &[Filter]) -> Vec<Vec<f64>> {
    data.records.iter().filter(|r| filters.iter().all(|f| f.matches(r))).map(|r| r.covariates.clone()).collect()
}

/// `start:end:n` (inclusive, evenly spaced) or a comma list. Points are
/// finite, positive and strictly increasing.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let grid: Vec<f64> = if text.contains(':') {
        let parts: Vec<&str> = text.split(':').map(str::trim).collect();
        ensure!(parts.len() == 3, "grid `{text}` must be start:end:n");
        let a: f64 = parts[0].parse().with_context(|| format!("invalid grid start `{}`", parts[0]))?;
        let b: f64 = parts[1].parse().with_context(|| format!("invalid grid end `{}`", parts[1]))?;
        let n: usize = parts[2].parse().with_context(|| format!("invalid grid size `{}`", parts[2]))?;
        ensure!(n >= 2, "grid `{text}` needs at least 2 points");
        (0..n).map(|i| if i + 1 == n { b } else { a + (b - a) * i as f64 / (n - 1) as f64 }).collect()
    } else {
        text.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>().with_context(|| format!("invalid time `{s}`")))
            .collect::<Result<_>>()?
    };
    ensure!(!grid.is_empty(), "empty time grid");
    ensure!(grid.iter().all(|t| t.is_finite() && *t > 0.0), "time points must be finite and > 0");
    ensure!(grid.windows(2).all(|w| w[1] > w[0]), "time points must be strictly increasing");
    Ok(grid)
}

/// Comma-separated structure names; `all` expands to PH, AH, AFT and GH,
/// plus HH when `hh` is given.
pub fn parse_structures(items: &[String], hh: Option<(Vec<usize>, Vec<usize>)>) -> Result<Vec<Structure>> {
    let mut out: Vec<Structure> = Vec::new();
    let mut push = |s: Structure| {
        if !out.contains(&s) {
            out.push(s);
        }
    };
    for item in items {
        if item.eq_ignore_ascii_case("all") {
            for s in [Structure::Ph, Structure::Ah, Structure::Aft] {
                push(s);
            }
            if let Some((t, l)) = &hh {
                push(Structure::hh(t.clone(), l.clone()));
            }
            push(Structure::Gh);
            continue;
        }
        let kind: StructureKind = item.parse()?;
        if kind == StructureKind::Hh {
            let (t, l) = hh.clone().ok_or_else(|| anyhow!("structure hh requires --hh-time and --hh-level"))?;
            push(Structure::hh(t, l));
        } else {
            push(Structure::simple(kind)?);
        }
    }
    ensure!(!out.is_empty(), "no structure selected");
    Ok(out)
}

/// Covariate references by name or zero-based index.
pub fn covariate_indices(items: &[String], names: &[String]) -> Result<Vec<usize>> {
    items
        .iter()
        .map(|s| {
            names.iter().position(|n| n == s).map(Ok).unwrap_or_else(|| {
                let i: usize =
                    s.parse().map_err(|_| anyhow!("unknown covariate `{s}` (known: {})", names.join(", ")))?;
                ensure!(i < names.len(), "covariate index {i} out of range");
                Ok(i)
            })
        })
        .collect()
}

/// `sigma,kappa,alpha`.
pub fn parse_baseline(text: &str) -> Result<ghew::EwParams> {
    let v: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>().with_context(|| format!("invalid baseline value `{s}`")))
        .collect::<Result<_>>()?;
    ensure!(v.len() == 3, "baseline `{text}` must be sigma,kappa,alpha");
    let p = ghew::EwParams { sigma: v[0], kappa: v[1], alpha: v[2] };
    p.validate()?;
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ghew::DemographicKey;

    fn names() -> Vec<String> {
        ["agec", "sex", "W"].iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn patterns() {
        assert_eq!(parse_pattern("W=1, agec=-5,sex=0", &names()).unwrap(), vec![-5.0, 0.0, 1.0]);
        assert_eq!(parse_pattern("1,2,3", &names()).unwrap(), vec![1.0, 2.0, 3.0]);
        assert!(parse_pattern("agec=1,sex=0", &names()).is_err());
        assert!(parse_pattern("agec=1,sex=0,W=1,W=0", &names()).is_err());
        assert!(parse_pattern("age=1,sex=0,W=1", &names()).is_err());
        assert!(parse_pattern("1,2", &names()).is_err());
        assert!(parse_pattern("1,nan,2", &names()).is_err());
        assert_eq!(pattern_id("agec=0, sex=1,W=0"), "agec=0;sex=1;W=0");
    }

    #[test]
    fn filters() {
        let r = SubjectRecord {
            time: 2.0,
            status: true,
            covariates: vec![-3.0, 1.0, 0.0],
            demographic: DemographicKey::new(67.0, 2010.0, "female"),
        };
        let ok = |e: &str| Filter::parse(e, &names()).unwrap().matches(&r);
        assert!(ok("sex=1"));
        assert!(ok("age<=67"));
        assert!(!ok("age<67"));
        assert!(ok("agec>-4"));
        assert!(ok("strata=female"));
        assert!(ok("status>=1"));
        assert!(Filter::parse("strata<1", &names()).is_err());
        assert!(Filter::parse("foo=1", &names()).is_err());
        assert!(Filter::parse("sex", &names()).is_err());
    }

    #[test]
    fn grids() {
        assert_eq!(parse_grid("1:2:3").unwrap(), vec![1.0, 1.5, 2.0]);
        assert_eq!(parse_grid("0.5, 1,4").unwrap(), vec![0.5, 1.0, 4.0]);
        assert!(parse_grid("0:1:5").is_err());
        assert!(parse_grid("2,1").is_err());
        assert!(parse_grid("1:2").is_err());
        assert!(parse_grid("").is_err());
    }

    #[test]
    fn structures() {
        let all = parse_structures(&["all".into()], None).unwrap();
        assert_eq!(all, vec![Structure::Ph, Structure::Ah, Structure::Aft, Structure::Gh]);
        assert!(parse_structures(&["hh".into()], None).is_err());
        let hh = parse_structures(&["hh".into()], Some((vec![2], vec![0, 1]))).unwrap();
        assert_eq!(hh, vec![Structure::hh(vec![2], vec![0, 1])]);
        assert_eq!(covariate_indices(&["W".into(), "0".into()], &names()).unwrap(), vec![2, 0]);
        assert!(covariate_indices(&["7".into()], &names()).is_err());
    }
}
