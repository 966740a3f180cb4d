//! Population mortality tables.
//!
//! Rates are piecewise constant on integer (age, calendar year) cells per
//! strata key. Follow-up moves along the Lexis diagonal: age and year both
//! advance by `t`, so the rate changes whenever either crosses an integer.
//! Keys outside the table are clamped to the nearest boundary cell.

use serde::{Deserialize, Serialize};
use std::io::Read;
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};

use crate::error::{domain, Error, Result};

static CLAMP_WARNED: AtomicBool = AtomicBool::new(false);

/// Header of the life-table file format.
pub const LIFE_TABLE_HEADER: [&str; 4] = ["age", "year", "sex", "rate"];

/// Age and year at diagnosis plus the strata key used for the table lookup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemographicKey {
    pub age: f64,
    pub year: f64,
    pub strata: String,
}

impl DemographicKey {
    pub fn new(age: f64, year: f64, strata: impl Into<String>) -> Self {
        Self { age, year, strata: strata.into() }
    }

    /// The key `dt` years later along the Lexis diagonal.
    pub fn advance(&self, dt: f64) -> Self {
        Self { age: self.age + dt, year: self.year + dt, strata: self.strata.clone() }
    }
}

/// Complete grid of rates over `age_min..=age_max` x `year_min..=year_max`
/// x strata.
#[derive(Debug, Clone, PartialEq)]
pub struct LifeTable {
    age_min: i64,
    age_max: i64,
    year_min: i64,
    year_max: i64,
    strata: Vec<String>,
    // [strata][year][age]
    rates: Vec<f64>,
}

impl LifeTable {
    /// Builds a table from a rate function evaluated on every cell.
    pub fn from_fn(
        ages: (i64, i64),
        years: (i64, i64),
        strata: &[&str],
        mut rate: impl FnMut(i64, i64, &str) -> f64,
    ) -> Result<Self> {
        let mut cells = Vec::new();
        for s in strata {
            for y in years.0..=years.1 {
                for a in ages.0..=ages.1 {
                    cells.push((a, y, s.to_string(), rate(a, y, s)));
                }
            }
        }
        Self::from_cells(cells)
    }

    /// Same rate in every cell.
    pub fn constant(rate: f64, ages: (i64, i64), years: (i64, i64), strata: &[&str]) -> Result<Self> {
        Self::from_fn(ages, years, strata, |_, _, _| rate)
    }

    /// Gompertz-type synthetic table for simulation: ages 0-110, years
    /// 1990-2060, strata `male`/`female`, rate `exp(a_s + 0.094 age - 0.01 (year - 2010))`
    /// capped at 5 per person-year.
    pub fn synthetic() -> Self {
        Self::from_fn((0, 110), (1990, 2060), &["male", "female"], |age, year, sex| {
            let a = if sex == "male" { -10.3 } else { -10.8 };
            (a + 0.094 * age as f64 - 0.01 * (year - 2010) as f64).exp().min(5.0)
        })
        .expect("synthetic table is complete")
    }

    /// Validates and assembles `(age, year, strata, rate)` cells. Duplicate
    /// cells are rejected; missing cells are reported (first ten listed).
    pub fn from_cells(cells: Vec<(i64, i64, String, f64)>) -> Result<Self> {
        if cells.is_empty() {
            return Err(Error::Empty("life table has no rows".into()));
        }
        let mut strata: Vec<String> = Vec::new();
        let (mut age_min, mut age_max) = (i64::MAX, i64::MIN);
        let (mut year_min, mut year_max) = (i64::MAX, i64::MIN);
        for (a, y, s, r) in &cells {
            if !r.is_finite() || *r < 0.0 {
                return Err(domain(format!("rate for ({a}, {y}, {s}) must be finite and >= 0, got {r}")));
            }
            age_min = age_min.min(*a);
            age_max = age_max.max(*a);
            year_min = year_min.min(*y);
            year_max = year_max.max(*y);
            if !strata.contains(s) {
                strata.push(s.clone());
            }
        }
        let n_age = (age_max - age_min + 1) as usize;
        let n_year = (year_max - year_min + 1) as usize;
        let size = n_age
            .checked_mul(n_year)
            .and_then(|v| v.checked_mul(strata.len()))
            .filter(|&v| v <= 50_000_000)
            .ok_or_else(|| domain("life table grid is too large"))?;
        let mut rates = vec![f64::NAN; size];
        for (a, y, s, r) in &cells {
            let si = strata.iter().position(|k| k == s).unwrap();
            let idx = (si * n_year + (y - year_min) as usize) * n_age + (a - age_min) as usize;
            if !rates[idx].is_nan() {
                return Err(domain(format!("duplicate life-table cell (age={a}, year={y}, sex={s})")));
            }
            rates[idx] = *r;
        }
        let mut missing = Vec::new();
        let mut n_missing = 0;
        for (si, s) in strata.iter().enumerate() {
            for yi in 0..n_year {
                for ai in 0..n_age {
                    if rates[(si * n_year + yi) * n_age + ai].is_nan() {
                        n_missing += 1;
                        if missing.len() < 10 {
                            missing.push(format!(
                                "(age={}, year={}, sex={s})",
                                age_min + ai as i64,
                                year_min + yi as i64
                            ));
                        }
                    }
                }
            }
        }
        if n_missing > 0 {
            return Err(Error::IncompleteTable { missing: n_missing, first: missing });
        }
        Ok(Self { age_min, age_max, year_min, year_max, strata, rates })
    }

    pub fn age_range(&self) -> (i64, i64) {
        (self.age_min, self.age_max)
    }

    pub fn year_range(&self) -> (i64, i64) {
        (self.year_min, self.year_max)
    }

    pub fn strata_keys(&self) -> &[String] {
        &self.strata
    }

    pub fn n_cells(&self) -> usize {
        self.rates.len()
    }

    pub fn strata_index(&self, strata: &str) -> Result<usize> {
        self.strata.iter().position(|s| s == strata).ok_or_else(|| Error::UnknownStrata(strata.to_string()))
    }

    #[inline]
    fn cell(&self, si: usize, age_cell: i64, year_cell: i64) -> f64 {
        let a = age_cell.clamp(self.age_min, self.age_max);
        let y = year_cell.clamp(self.year_min, self.year_max);
        if (a != age_cell || y != year_cell) && !CLAMP_WARNED.swap(true, Ordering::Relaxed) {
            log::warn!(
                "life-table key (age cell {age_cell}, year cell {year_cell}) outside table; clamped to boundary"
            );
        }
        let n_age = (self.age_max - self.age_min + 1) as usize;
        let n_year = (self.year_max - self.year_min + 1) as usize;
        self.rates[(si * n_year + (y - self.year_min) as usize) * n_age + (a - self.age_min) as usize]
    }

    /// Rate of the cell containing `(floor(age), floor(year))` for a resolved strata index.
    #[inline]
    pub fn rate_by_index(&self, si: usize, age: f64, year: f64) -> f64 {
        self.cell(si, floor_cell(age), floor_cell(year))
    }

    /// Walks the Lexis diagonal from `key` calling `visit(s_start, s_end, rate)`
    /// for consecutive constant-rate segments; `visit` returns `false` to stop.
    /// The final segment (beyond every table boundary) has `s_end = inf`.
    fn walk(&self, si: usize, age: f64, year: f64, mut visit: impl FnMut(f64, f64, f64) -> bool) {
        let mut ai = floor_cell(age);
        let mut yi = floor_cell(year);
        let mut s = 0.0;
        loop {
            let rate = self.cell(si, ai, yi);
            let age_done = ai >= self.age_max;
            let year_done = yi >= self.year_max;
            let s_age = if age_done { f64::INFINITY } else { (ai + 1) as f64 - age };
            let s_year = if year_done { f64::INFINITY } else { (yi + 1) as f64 - year };
            let s_end = s_age.min(s_year);
            if !visit(s, s_end, rate) || s_end.is_infinite() {
                return;
            }
            if s_age == s_end {
                ai += 1;
            }
            if s_year == s_end {
                yi += 1;
            }
            s = s_end;
        }
    }

    fn check_key(&self, key: &DemographicKey) -> Result<usize> {
        if !key.age.is_finite() || !key.year.is_finite() {
            return Err(domain("age and year must be finite"));
        }
        self.strata_index(&key.strata)
    }

    /// Exact integral of the rate along the diagonal over `[0, t]`.
    pub fn population_cum_hazard(&self, key: &DemographicKey, t: f64) -> Result<f64> {
        let si = self.check_key(key)?;
        if !t.is_finite() || t < 0.0 {
            return Err(domain(format!("time must be finite and >= 0, got {t}")));
        }
        Ok(self.cum_hazard_by_index(si, key.age, key.year, t))
    }

    pub(crate) fn cum_hazard_by_index(&self, si: usize, age: f64, year: f64, t: f64) -> f64 {
        let mut total = 0.0;
        self.walk(si, age, year, |s0, s1, rate| {
            total += rate * (s1.min(t) - s0);
            s1 < t
        });
        total
    }

    /// Other-cause death time for uniform draw `u`: solves
    /// `population_cum_hazard(key, t) = -ln(u)` segment by segment.
    /// Returns `+inf` when the rate beyond the table horizon is zero and the
    /// target is never reached.
    pub fn sample_other_cause_time(&self, key: &DemographicKey, u: f64) -> Result<f64> {
        let si = self.check_key(key)?;
        if !(u > 0.0 && u < 1.0) {
            return Err(domain(format!("uniform draw must lie in (0, 1), got {u}")));
        }
        Ok(self.invert_by_index(si, key.age, key.year, -u.ln()))
    }

    pub(crate) fn invert_by_index(&self, si: usize, age: f64, year: f64, target: f64) -> f64 {
        let mut acc = 0.0;
        let mut out = f64::INFINITY;
        self.walk(si, age, year, |s0, s1, rate| {
            let seg = rate * (s1 - s0);
            if rate > 0.0 && acc + seg >= target {
                out = s0 + (target - acc) / rate;
                return false;
            }
            acc += seg;
            true
        });
        out
    }

    /// Writes the table in the `age,year,sex,rate` format.
    pub fn to_csv_string(&self) -> String {
        let mut out = LIFE_TABLE_HEADER.join(",");
        out.push('\n');
        for (si, s) in self.strata.iter().enumerate() {
            for y in self.year_min..=self.year_max {
                for a in self.age_min..=self.age_max {
                    out.push_str(&format!("{a},{y},{s},{:e}\n", self.cell(si, a, y)));
                }
            }
        }
        out
    }
}

#[inline]
fn floor_cell(x: f64) -> i64 {
    x.floor() as i64
}

/// Rate of the integer cell containing `(age, year)` for `strata`.
pub fn lookup_rate(lt: &LifeTable, age: f64, year: f64, strata: &str) -> Result<f64> {
    if !age.is_finite() || !year.is_finite() {
        return Err(domain("age and year must be finite"));
    }
    let si = lt.strata_index(strata)?;
    Ok(lt.rate_by_index(si, age, year))
}

/// Parses a life table from `age,year,sex,rate` text.
pub fn parse_life_table(reader: impl Read) -> Result<LifeTable> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| Error::Parse { line: 1, message: e.to_string() })?;
    let names: Vec<&str> = header.iter().collect();
    if names != LIFE_TABLE_HEADER {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `{}`, got `{}`", LIFE_TABLE_HEADER.join(","), names.join(",")),
        });
    }
    let mut cells = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let field = |i: usize| rec.get(i).unwrap_or("");
        let parse_int = |i: usize, what: &str| {
            field(i)
                .parse::<i64>()
                .map_err(|_| Error::Parse { line, message: format!("{what} must be an integer, got `{}`", field(i)) })
        };
        let age = parse_int(0, "age")?;
        let year = parse_int(1, "year")?;
        let sex = field(2).to_string();
        if sex.is_empty() {
            return Err(Error::Parse { line, message: "empty sex key".into() });
        }
        let rate: f64 = field(3)
            .parse()
            .map_err(|_| Error::Parse { line, message: format!("rate must be a number, got `{}`", field(3)) })?;
        if !rate.is_finite() || rate < 0.0 {
            return Err(Error::Parse { line, message: format!("rate must be finite and >= 0, got {rate}") });
        }
        cells.push((age, year, sex, rate));
    }
    LifeTable::from_cells(cells)
}

pub fn load_life_table(path: impl AsRef<Path>) -> Result<LifeTable> {
    let file = std::fs::File::open(path)?;
    parse_life_table(std::io::BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_band() -> LifeTable {
        LifeTable::from_fn((0, 100), (2000, 2020), &["male", "female"], |a, _, _| if a < 70 { 0.01 } else { 0.05 })
            .unwrap()
    }

    #[test]
    fn constant_table_lookup() {
        let lt = LifeTable::constant(0.01, (0, 100), (2000, 2020), &["male"]).unwrap();
        assert_eq!(lookup_rate(&lt, 55.3, 2010.7, "male").unwrap(), 0.01);
        let key = DemographicKey::new(60.0, 2010.0, "male");
        assert!((lt.population_cum_hazard(&key, 2.0).unwrap() - 0.02).abs() < 1e-15);
        assert_eq!(lt.population_cum_hazard(&key, 0.0).unwrap(), 0.0);
        let u: f64 = 0.3;
        let t = lt.sample_other_cause_time(&key, u).unwrap();
        assert!((t - (-u.ln() / 0.01)).abs() < 1e-10);
    }

    #[test]
    fn clamping_beyond_range() {
        let lt = LifeTable::from_fn((0, 100), (2000, 2020), &["male"], |a, _, _| a as f64 * 1e-3).unwrap();
        assert_eq!(lookup_rate(&lt, 130.0, 2010.0, "male").unwrap(), 0.1);
        assert_eq!(lookup_rate(&lt, 50.0, 2100.0, "male").unwrap(), 0.05);
        assert_eq!(lookup_rate(&lt, -5.0, 1900.0, "male").unwrap(), 0.0);
    }

    #[test]
    fn floor_rule_at_band_edge() {
        let lt = two_band();
        assert_eq!(lookup_rate(&lt, 69.9, 2010.0, "male").unwrap(), 0.01);
        assert_eq!(lookup_rate(&lt, 70.0, 2010.0, "male").unwrap(), 0.05);
    }

    #[test]
    fn integration_across_band_change() {
        let lt = two_band();
        let key = DemographicKey::new(69.5, 2010.0, "female");
        let h = lt.population_cum_hazard(&key, 1.0).unwrap();
        assert!((h - 0.03).abs() < 1e-15);
    }

    #[test]
    fn unknown_strata() {
        let lt = two_band();
        assert!(matches!(lookup_rate(&lt, 50.0, 2010.0, "other"), Err(Error::UnknownStrata(_))));
        let key = DemographicKey::new(50.0, 2010.0, "x");
        assert!(lt.population_cum_hazard(&key, 1.0).is_err());
    }

    #[test]
    fn sampling_near_one_stays_in_first_band() {
        let lt = two_band();
        let key = DemographicKey::new(60.2, 2010.4, "male");
        let t = lt.sample_other_cause_time(&key, 1.0 - 1e-6).unwrap();
        assert!(t > 0.0 && t < 0.6);
        assert!((t - 1e-6 / 0.01).abs() < 1e-9);
    }

    #[test]
    fn zero_rate_table_gives_infinite_time() {
        let lt = LifeTable::constant(0.0, (0, 10), (2000, 2001), &["m"]).unwrap();
        let key = DemographicKey::new(5.0, 2000.0, "m");
        assert_eq!(lt.sample_other_cause_time(&key, 0.5).unwrap(), f64::INFINITY);
    }

    #[test]
    fn toy_file_and_rejections() {
        let text =
            "age,year,sex,rate\n50,2010,male,0.01\n51,2010,male,0.02\n50,2010,female,0.005\n51,2010,female,0.006\n";
        let lt = parse_life_table(text.as_bytes()).unwrap();
        assert_eq!(lt.n_cells(), 4);
        assert_eq!(lookup_rate(&lt, 51.5, 2010.2, "female").unwrap(), 0.006);

        let dup = "age,year,sex,rate\n50,2010,male,0.01\n50,2010,male,0.02\n";
        assert!(parse_life_table(dup.as_bytes()).is_err());

        let holes = "age,year,sex,rate\n50,2010,male,0.01\n52,2010,male,0.02\n";
        match parse_life_table(holes.as_bytes()) {
            Err(Error::IncompleteTable { missing, first }) => {
                assert_eq!(missing, 1);
                assert_eq!(first, vec!["(age=51, year=2010, sex=male)".to_string()]);
            }
            other => panic!("unexpected {other:?}"),
        }

        let bad = "age,year,sex,rate\n50,2010,male,0.01\n51,20x0,male,0.02\n";
        match parse_life_table(bad.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_life_table("a,b,c,d\n".as_bytes()).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let lt = LifeTable::synthetic();
        let back = parse_life_table(lt.to_csv_string().as_bytes()).unwrap();
        assert_eq!(back.age_range(), lt.age_range());
        for (a, y) in [(30.2, 2011.9), (85.0, 2015.5), (109.9, 2059.0)] {
            let r0 = lookup_rate(&lt, a, y, "female").unwrap();
            let r1 = lookup_rate(&back, a, y, "female").unwrap();
            assert!((r0 - r1).abs() <= 1e-15 * r0);
        }
    }
}
