//! Scenario configuration, presets and the TOML scenario schema.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{domain, Error, Result};
use crate::ew::EwParams;
use crate::life_table::{load_life_table, LifeTable};
use crate::likelihood::{ParamLayout, ParamVector};
use crate::structure::{ModelSpec, RegressionParams, Structure, StructureKind};

/// Model covariates of simulated data: centred age, sex and `W`.
pub const SIM_COVARIATES: [&str; 3] = ["agec", "sex", "W"];
pub const DEFAULT_ADMIN_HORIZON: f64 = 5.0;
pub const DEFAULT_AGE_CENTRE: f64 = 70.0;
pub const DEFAULT_DIAGNOSIS_YEAR: f64 = 2010.0;

/// Time-scale and level effects of `W` in the crossing-hazards preset,
/// found by [`crate::sim::search_crossing_parameters`].
pub const CH_BETA1_W: f64 = 0.6;
pub const CH_BETA2_W: f64 = 0.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum Censoring {
    /// Administrative censoring at the horizon only.
    Administrative,
    /// Plus exponential dropout with a fixed rate.
    Dropout { rate: f64 },
    /// Plus exponential dropout calibrated to a censoring proportion.
    Target { proportion: f64 },
}

/// Named scenario families. Only GH carries published truth values; CH uses
/// a searched fixture. PH, AH, AFT and HH need user-supplied parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Ph,
    Ah,
    Aft,
    Hh,
    Gh,
    Ch,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "ph" => Preset::Ph,
            "ah" => Preset::Ah,
            "aft" => Preset::Aft,
            "hh" => Preset::Hh,
            "gh" => Preset::Gh,
            "ch" => Preset::Ch,
            other => return Err(domain(format!("unknown preset `{other}` (expected ph, ah, aft, hh, gh or ch)"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub structure: Structure,
    pub baseline: EwParams,
    pub betas: RegressionParams,
    pub n: usize,
    pub replicates: usize,
    pub censoring: Censoring,
    pub admin_horizon: f64,
    pub age_centre: f64,
    pub diagnosis_year: f64,
    /// `None` selects [`LifeTable::synthetic`].
    pub life_table: Option<PathBuf>,
    pub seed: u64,
}

impl ScenarioConfig {
    /// GH scenario with `(sigma, kappa, alpha) = (1.75, 0.6, 2.5)`,
    /// `beta1 = (0.1, 0.1, 0.1)`, `beta2 = (0.05, 0.2, 0.25)`, n = 5000,
    /// administrative censoring at 5 years.
    pub fn gh() -> Self {
        Self {
            name: "gh".into(),
            structure: Structure::Gh,
            baseline: EwParams { sigma: 1.75, kappa: 0.6, alpha: 2.5 },
            betas: RegressionParams::new(vec![0.1, 0.1, 0.1], vec![0.05, 0.2, 0.25]),
            n: 5000,
            replicates: 100,
            censoring: Censoring::Administrative,
            admin_horizon: DEFAULT_ADMIN_HORIZON,
            age_centre: DEFAULT_AGE_CENTRE,
            diagnosis_year: DEFAULT_DIAGNOSIS_YEAR,
            life_table: None,
            seed: 1,
        }
    }

    /// Crossing hazards: HH with `W` on the time scale and every covariate
    /// on the level, GH baseline, age and sex level effects as in GH.
    /// Hazard and net-survival curves of `W = 0` and `W = 1` cross in (0, 5).
    pub fn ch() -> Self {
        Self {
            name: "ch".into(),
            structure: Structure::hh(vec![2], vec![0, 1, 2]),
            betas: RegressionParams::new(vec![CH_BETA1_W], vec![0.05, 0.2, CH_BETA2_W]),
            ..Self::gh()
        }
    }

    /// Scenario for `preset`. PH, AH, AFT and HH have no published values and
    /// require `baseline` and `betas`; HH also requires `hh`.
    pub fn from_preset(
        preset: Preset,
        baseline: Option<EwParams>,
        betas: Option<RegressionParams>,
        hh: Option<(Vec<usize>, Vec<usize>)>,
    ) -> Result<Self> {
        let mut cfg = match preset {
            Preset::Gh => Self::gh(),
            Preset::Ch => Self::ch(),
            other => {
                let mut errors = Vec::new();
                if baseline.is_none() {
                    errors.push(format!("preset `{other:?}` has no published baseline; set [baseline]"));
                }
                if betas.is_none() {
                    errors.push(format!("preset `{other:?}` has no published coefficients; set [betas]"));
                }
                let structure = match other {
                    Preset::Ph => Structure::Ph,
                    Preset::Ah => Structure::Ah,
                    Preset::Aft => Structure::Aft,
                    _ => match &hh {
                        Some((t, l)) => Structure::hh(t.clone(), l.clone()),
                        None => {
                            errors.push("preset `Hh` requires hh_time and hh_level".into());
                            Structure::hh(vec![], vec![])
                        }
                    },
                };
                if !errors.is_empty() {
                    return Err(Error::Config(errors));
                }
                Self { name: format!("{other:?}").to_lowercase(), structure, ..Self::gh() }
            }
        };
        if let Some(b) = baseline {
            cfg.baseline = b;
        }
        if let Some(b) = betas {
            cfg.betas = b;
        }
        if let (Some((t, l)), Preset::Hh | Preset::Ch) = (hh, preset) {
            cfg.structure = Structure::hh(t, l);
        }
        Ok(cfg)
    }

    pub fn covariate_names(&self) -> Vec<String> {
        SIM_COVARIATES.iter().map(|s| s.to_string()).collect()
    }

    /// Every violated constraint, not just the first.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.n == 0 {
            out.push("n must be > 0".into());
        }
        if self.replicates == 0 {
            out.push("replicates must be > 0".into());
        }
        if !(self.admin_horizon > 0.0) {
            out.push(format!("admin_horizon must be > 0, got {}", self.admin_horizon));
        }
        if !self.age_centre.is_finite() {
            out.push("age_centre must be finite".into());
        }
        if !self.diagnosis_year.is_finite() {
            out.push("diagnosis_year must be finite".into());
        }
        match self.censoring {
            Censoring::Administrative => {}
            Censoring::Dropout { rate } => {
                if !(rate >= 0.0 && rate.is_finite()) {
                    out.push(format!("dropout rate must be finite and >= 0, got {rate}"));
                }
            }
            Censoring::Target { proportion } => {
                if !(proportion > 0.0 && proportion < 1.0) {
                    out.push(format!("target censoring proportion must lie in (0, 1), got {proportion}"));
                }
            }
        }
        if let Err(e) = self.baseline.validate() {
            out.push(format!("baseline: {e}"));
        } else if let Err(e) = self.model_spec() {
            out.push(format!("structure or coefficients: {e}"));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }

    pub fn model_spec(&self) -> Result<ModelSpec> {
        ModelSpec::new(self.structure.clone(), self.baseline, self.betas.clone(), self.covariate_names())
    }

    /// True parameters on the working scale.
    pub fn truth(&self) -> Result<ParamVector> {
        ParamLayout::new(self.structure.clone(), SIM_COVARIATES.len())?.pack(&self.baseline, &self.betas)
    }

    /// The configured life table, or the synthetic one.
    pub fn load_life_table(&self) -> Result<LifeTable> {
        match &self.life_table {
            Some(p) => load_life_table(p),
            None => Ok(LifeTable::synthetic()),
        }
    }

    pub fn from_toml_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        let mut cfg = Self::from_toml_str(&text)?;
        // relative life-table paths resolve against the config file
        if let (Some(lt), Some(dir)) = (&cfg.life_table, path.as_ref().parent()) {
            if lt.is_relative() {
                cfg.life_table = Some(dir.join(lt));
            }
        }
        Ok(cfg)
    }

    /// Parses the scenario schema, collecting every violation.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table =
            text.parse().map_err(|e: toml::de::Error| Error::Config(vec![format!("TOML syntax: {}", e.message())]))?;
        let mut errors = Vec::new();
        const KEYS: [&str; 15] = [
            "name",
            "preset",
            "structure",
            "hh_time",
            "hh_level",
            "n",
            "replicates",
            "seed",
            "admin_horizon",
            "age_centre",
            "diagnosis_year",
            "life_table",
            "baseline",
            "betas",
            "censoring",
        ];
        for k in table.keys() {
            if !KEYS.contains(&k.as_str()) {
                errors.push(format!("unknown key `{k}`"));
            }
        }

        let get_str = |k: &str, errors: &mut Vec<String>| -> Option<String> {
            match table.get(k) {
                None => None,
                Some(toml::Value::String(s)) => Some(s.clone()),
                Some(_) => {
                    errors.push(format!("`{k}` must be a string"));
                    None
                }
            }
        };
        let get_f64 = |t: &toml::Table, k: &str, ctx: &str, errors: &mut Vec<String>| -> Option<f64> {
            match t.get(k) {
                None => None,
                Some(toml::Value::Float(v)) => Some(*v),
                Some(toml::Value::Integer(v)) => Some(*v as f64),
                Some(_) => {
                    errors.push(format!("`{ctx}{k}` must be a number"));
                    None
                }
            }
        };
        let get_uint = |k: &str, errors: &mut Vec<String>| -> Option<u64> {
            match table.get(k) {
                None => None,
                Some(toml::Value::Integer(v)) if *v >= 0 => Some(*v as u64),
                Some(_) => {
                    errors.push(format!("`{k}` must be a non-negative integer"));
                    None
                }
            }
        };
        let get_f64_list = |t: &toml::Table, k: &str, ctx: &str, errors: &mut Vec<String>| -> Option<Vec<f64>> {
            match t.get(k) {
                None => None,
                Some(toml::Value::Array(a)) => {
                    let v: Option<Vec<f64>> = a
                        .iter()
                        .map(|x| match x {
                            toml::Value::Float(f) => Some(*f),
                            toml::Value::Integer(i) => Some(*i as f64),
                            _ => None,
                        })
                        .collect();
                    if v.is_none() {
                        errors.push(format!("`{ctx}{k}` must be an array of numbers"));
                    }
                    v
                }
                Some(_) => {
                    errors.push(format!("`{ctx}{k}` must be an array of numbers"));
                    None
                }
            }
        };
        let get_index_list = |k: &str, errors: &mut Vec<String>| -> Option<Vec<usize>> {
            match table.get(k) {
                None => None,
                Some(toml::Value::Array(a)) => {
                    let v: Option<Vec<usize>> = a
                        .iter()
                        .map(|x| match x {
                            toml::Value::Integer(i) if *i >= 0 => Some(*i as usize),
                            _ => None,
                        })
                        .collect();
                    if v.is_none() {
                        errors.push(format!("`{k}` must be an array of covariate indices"));
                    }
                    v
                }
                Some(_) => {
                    errors.push(format!("`{k}` must be an array of covariate indices"));
                    None
                }
            }
        };
        let sub_table = |k: &str, errors: &mut Vec<String>| -> Option<&toml::Table> {
            match table.get(k) {
                None => None,
                Some(toml::Value::Table(t)) => Some(t),
                Some(_) => {
                    errors.push(format!("`{k}` must be a table"));
                    None
                }
            }
        };

        let preset = get_str("preset", &mut errors).and_then(|s| match s.parse::<Preset>() {
            Ok(p) => Some(p),
            Err(e) => {
                errors.push(e.to_string());
                None
            }
        });
        let structure_kind = get_str("structure", &mut errors).and_then(|s| match s.parse::<StructureKind>() {
            Ok(k) => Some(k),
            Err(e) => {
                errors.push(e.to_string());
                None
            }
        });
        let hh_time = get_index_list("hh_time", &mut errors);
        let hh_level = get_index_list("hh_level", &mut errors);
        let hh = match (hh_time, hh_level) {
            (Some(t), Some(l)) => Some((t, l)),
            (None, None) => None,
            _ => {
                errors.push("hh_time and hh_level must be given together".into());
                None
            }
        };

        let baseline = sub_table("baseline", &mut errors).and_then(|t| {
            for k in t.keys() {
                if !["sigma", "kappa", "alpha"].contains(&k.as_str()) {
                    errors.push(format!("unknown key `baseline.{k}`"));
                }
            }
            let vals: Vec<Option<f64>> = ["sigma", "kappa", "alpha"]
                .iter()
                .map(|k| {
                    let v = get_f64(t, k, "baseline.", &mut errors);
                    if v.is_none() && !t.contains_key(*k) {
                        errors.push(format!("missing `baseline.{k}`"));
                    }
                    v
                })
                .collect();
            match vals[..] {
                [Some(sigma), Some(kappa), Some(alpha)] => match EwParams::new(sigma, kappa, alpha) {
                    Ok(p) => Some(p),
                    Err(e) => {
                        errors.push(format!("baseline: {e}"));
                        None
                    }
                },
                _ => None,
            }
        });
        let betas = sub_table("betas", &mut errors).map(|t| {
            for k in t.keys() {
                if !["beta1", "beta2"].contains(&k.as_str()) {
                    errors.push(format!("unknown key `betas.{k}`"));
                }
            }
            RegressionParams::new(
                get_f64_list(t, "beta1", "betas.", &mut errors).unwrap_or_default(),
                get_f64_list(t, "beta2", "betas.", &mut errors).unwrap_or_default(),
            )
        });
        let censoring = sub_table("censoring", &mut errors).and_then(|t| {
            let mode = match t.get("mode") {
                Some(toml::Value::String(s)) => Some(s.clone()),
                _ => {
                    errors.push("`censoring.mode` must be one of administrative, dropout, target".into());
                    None
                }
            };
            let allowed: &[&str] = match mode.as_deref() {
                Some("administrative") => &["mode"],
                Some("dropout") => &["mode", "rate"],
                Some("target") => &["mode", "proportion"],
                Some(other) => {
                    errors.push(format!("unknown censoring mode `{other}`"));
                    return None;
                }
                None => return None,
            };
            for k in t.keys() {
                if !allowed.contains(&k.as_str()) {
                    errors.push(format!("unknown key `censoring.{k}` for this mode"));
                }
            }
            match mode.as_deref() {
                Some("administrative") => Some(Censoring::Administrative),
                Some("dropout") => match get_f64(t, "rate", "censoring.", &mut errors) {
                    Some(rate) => Some(Censoring::Dropout { rate }),
                    None => {
                        errors.push("missing `censoring.rate`".into());
                        None
                    }
                },
                _ => match get_f64(t, "proportion", "censoring.", &mut errors) {
                    Some(proportion) => Some(Censoring::Target { proportion }),
                    None => {
                        errors.push("missing `censoring.proportion`".into());
                        None
                    }
                },
            }
        });

        let mut cfg = match (preset, structure_kind) {
            (Some(p), _) => match Self::from_preset(p, baseline, betas.clone(), hh.clone()) {
                Ok(c) => Some(c),
                Err(Error::Config(v)) => {
                    errors.extend(v);
                    None
                }
                Err(e) => {
                    errors.push(e.to_string());
                    None
                }
            },
            (None, Some(kind)) => {
                let structure = match kind {
                    StructureKind::Hh => match &hh {
                        Some((t, l)) => Some(Structure::hh(t.clone(), l.clone())),
                        None => {
                            errors.push("structure `hh` requires hh_time and hh_level".into());
                            None
                        }
                    },
                    k => Structure::simple(k).ok(),
                };
                if baseline.is_none() && !table.contains_key("baseline") {
                    errors.push("missing [baseline] (required without a preset)".into());
                }
                if betas.is_none() {
                    errors.push("missing [betas] (required without a preset)".into());
                }
                match (structure, baseline, betas) {
                    (Some(structure), Some(baseline), Some(betas)) => {
                        Some(Self { name: kind.label().to_lowercase(), structure, baseline, betas, ..Self::gh() })
                    }
                    _ => None,
                }
            }
            (None, None) => {
                if !errors.iter().any(|e| e.contains("preset") || e.contains("structure")) {
                    errors.push("one of `preset` or `structure` is required".into());
                }
                None
            }
        };
        if preset.is_some() && structure_kind.is_some() {
            errors.push("give either `preset` or `structure`, not both".into());
        }

        let n = get_uint("n", &mut errors);
        let replicates = get_uint("replicates", &mut errors);
        let seed = get_uint("seed", &mut errors);
        let name = get_str("name", &mut errors);
        let life_table = get_str("life_table", &mut errors);
        let admin = get_f64(&table, "admin_horizon", "", &mut errors);
        let centre = get_f64(&table, "age_centre", "", &mut errors);
        let year = get_f64(&table, "diagnosis_year", "", &mut errors);

        if let Some(c) = cfg.as_mut() {
            if let Some(v) = n {
                c.n = v as usize;
            }
            if let Some(v) = replicates {
                c.replicates = v as usize;
            }
            if let Some(v) = seed {
                c.seed = v;
            }
            if let Some(v) = name {
                c.name = v;
            }
            if let Some(v) = life_table {
                c.life_table = Some(PathBuf::from(v));
            }
            if let Some(v) = admin {
                c.admin_horizon = v;
            }
            if let Some(v) = centre {
                c.age_centre = v;
            }
            if let Some(v) = year {
                c.diagnosis_year = v;
            }
            if let Some(v) = censoring {
                c.censoring = v;
            }
            errors.extend(c.violations());
        }
        if errors.is_empty() {
            Ok(cfg.expect("configuration assembled without errors"))
        } else {
            errors.dedup();
            Err(Error::Config(errors))
        }
    }

    /// Serialises in the same schema accepted by [`Self::from_toml_str`].
    pub fn to_toml_string(&self) -> String {
        let mut t = toml::Table::new();
        t.insert("name".into(), self.name.clone().into());
        t.insert("structure".into(), self.structure.kind().label().to_lowercase().into());
        if let Structure::Hh { time, level } = &self.structure {
            let arr = |v: &Vec<usize>| toml::Value::Array(v.iter().map(|&i| (i as i64).into()).collect());
            t.insert("hh_time".into(), arr(time));
            t.insert("hh_level".into(), arr(level));
        }
        t.insert("n".into(), (self.n as i64).into());
        t.insert("replicates".into(), (self.replicates as i64).into());
        // seeds above i64::MAX do not fit TOML integers
        t.insert("seed".into(), (self.seed.min(i64::MAX as u64) as i64).into());
        t.insert("admin_horizon".into(), self.admin_horizon.into());
        t.insert("age_centre".into(), self.age_centre.into());
        t.insert("diagnosis_year".into(), self.diagnosis_year.into());
        if let Some(p) = &self.life_table {
            t.insert("life_table".into(), p.display().to_string().into());
        }
        let mut b = toml::Table::new();
        b.insert("sigma".into(), self.baseline.sigma.into());
        b.insert("kappa".into(), self.baseline.kappa.into());
        b.insert("alpha".into(), self.baseline.alpha.into());
        t.insert("baseline".into(), b.into());
        let list = |v: &Vec<f64>| toml::Value::Array(v.iter().map(|&x| x.into()).collect());
        let mut r = toml::Table::new();
        r.insert("beta1".into(), list(&self.betas.beta1));
        r.insert("beta2".into(), list(&self.betas.beta2));
        t.insert("betas".into(), r.into());
        let mut c = toml::Table::new();
        match self.censoring {
            Censoring::Administrative => {
                c.insert("mode".into(), "administrative".into());
            }
            Censoring::Dropout { rate } => {
                c.insert("mode".into(), "dropout".into());
                c.insert("rate".into(), rate.into());
            }
            Censoring::Target { proportion } => {
                c.insert("mode".into(), "target".into());
                c.insert("proportion".into(), proportion.into());
            }
        }
        t.insert("censoring".into(), c.into());
        toml::to_string(&t).expect("scenario serialises")
    }
}
