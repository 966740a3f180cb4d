//! Subcommand implementations. Each builds its outputs in memory and
//! commits them with one manifest at the end.

use anyhow::{anyhow, bail, ensure, Context, Result};
use serde_json::json;
use std::fmt::Write as _;
use std::path::Path;

use ghew::fit::{confidence_intervals, fit, select_model, FitSettings, ModelFit};
use ghew::netsurv::{simulate_ns_ci, stream_rng, NsTarget};
use ghew::sim::{
    generate_dataset_with_rate, model_label, resolve_dropout_rate, run_study, Preset, ScenarioConfig, StudySettings,
};
use ghew::{classify_shape, ew_hazard, hazard_curve, load_dataset, load_life_table, LifeTable, Structure};

use crate::artifact::{read_fit, FitArtifact};
use crate::output::{sidecar_manifest, Outputs};
use crate::parse::{
    covariate_indices, parse_baseline, parse_grid, parse_pattern, parse_structures, pattern_id, subgroup, Filter,
};
use crate::{CurvesArgs, FitArgs, LifeTableArgs, NetSurvArgs, ScenarioArgs, SimulateArgs, StudyArgs};

/// Tolerance of the first-difference shape classification.
const SHAPE_REL_TOL: f64 = 1e-12;

/// Statistical failure after the outputs were committed: a fit did not
/// converge or a study produced no usable replicate.
#[derive(Debug)]
pub struct StatFailure(pub String);

impl std::fmt::Display for StatFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for StatFailure {}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

fn file_stem(s: &Structure) -> String {
    s.kind().label().to_ascii_lowercase()
}

pub fn cmd_fit(args: &FitArgs) -> Result<()> {
    let data = load_dataset(&args.data).with_context(|| format!("loading {}", args.data.display()))?;
    let lt = load_life_table(&args.life_table).with_context(|| format!("loading {}", args.life_table.display()))?;
    let names = &data.covariate_names;
    let hh = match (args.hh_time.is_empty(), args.hh_level.is_empty()) {
        (true, true) => None,
        _ => Some((covariate_indices(&args.hh_time, names)?, covariate_indices(&args.hh_level, names)?)),
    };
    let structures = parse_structures(&args.structure, hh)?;
    for s in &structures {
        s.validate(names.len())?;
    }
    if args.fix_beta1.is_some() {
        ensure!(structures.iter().all(|s| matches!(s, Structure::Gh)), "--fix-beta1 applies to the gh structure only");
    }
    let mut settings = FitSettings { seed: args.seed, ..FitSettings::default() };
    settings.hessian.richardson = args.richardson;
    if let Some(v) = args.fix_beta1 {
        settings.fixed = (0..names.len()).map(|j| (3 + j, v)).collect();
    }

    let mut out = Outputs::new("fit");
    let mut fits: Vec<ModelFit> = Vec::with_capacity(structures.len());
    for s in &structures {
        log::info!("fitting {}", model_label(s));
        let f = fit(&data, s, &lt, None, &settings)?;
        out.warnings.extend(f.warnings.iter().map(|w| format!("{}: {w}", model_label(s))));
        if !f.converged {
            out.warnings.push(format!(
                "{}: did not converge (gradient norm {:e} after {} iterations, {} restarts)",
                model_label(s),
                f.gradient_norm,
                f.iterations,
                f.restarts
            ));
        }
        out.add(args.out.join(format!("fit_{}.json", file_stem(s))), FitArtifact::new(f.clone()).to_json()?);
        fits.push(f);
    }
    let selected = select_model(&fits).ok();

    let mut est = String::from("model,parameter,scale,estimate,se,lower,upper,fixed\n");
    for f in &fits {
        let label = model_label(&f.structure);
        let ci = confidence_intervals(f, args.level).ok();
        for i in 0..f.psi_hat.len() {
            let (name, scale, estimate, iv) = match &ci {
                Some(ci) => {
                    let p = &ci[i];
                    let iv = p.natural.as_ref().unwrap_or(&p.working);
                    (p.name.clone(), p.natural.is_some(), iv.estimate, Some(iv))
                }
                None => {
                    (f.param_names[i].clone(), i < 3, if i < 3 { f.psi_hat.0[i].exp() } else { f.psi_hat.0[i] }, None)
                }
            };
            let name = if scale { name.trim_start_matches("log_").to_string() } else { name };
            writeln!(
                est,
                "{label},{name},{},{estimate},{},{},{},{}",
                if scale { "natural" } else { "coefficient" },
                opt(iv.map(|v| v.se)),
                opt(iv.map(|v| v.lower)),
                opt(iv.map(|v| v.upper)),
                u8::from(f.fixed[i])
            )?;
        }
    }
    out.add(args.out.join("estimates.csv"), est);

    let mut aic = String::from("model,loglik,k,aic,converged,selected\n");
    for (i, f) in fits.iter().enumerate() {
        writeln!(
            aic,
            "{},{},{},{},{},{}",
            model_label(&f.structure),
            f.loglik,
            f.k,
            f.aic,
            u8::from(f.converged),
            u8::from(selected == Some(i))
        )?;
    }
    out.add(args.out.join("aic.csv"), aic);

    let failed: Vec<String> = fits.iter().filter(|f| !f.converged).map(|f| model_label(&f.structure)).collect();
    out.details = json!({
        "n_obs": data.len(),
        "n_deaths": data.n_deaths(),
        "selected": selected.map(|i| model_label(&fits[i].structure)),
    });
    let config = json!({
        "data": args.data, "life_table": args.life_table, "structures": structures,
        "fix_beta1": args.fix_beta1, "level": args.level, "richardson": args.richardson,
    });
    out.commit(&args.out.join("manifest.json"), config, Some(args.seed))?;
    for f in &fits {
        println!(
            "{}\tloglik={}\tk={}\taic={}\tconverged={}",
            model_label(&f.structure),
            f.loglik,
            f.k,
            f.aic,
            f.converged
        );
    }
    if !failed.is_empty() {
        return Err(StatFailure(format!("non-converged fits: {}", failed.join(", "))).into());
    }
    Ok(())
}

pub fn cmd_netsurv(args: &NetSurvArgs) -> Result<()> {
    let fit = read_fit(&args.fit)?;
    let names = &fit.covariate_names;
    let times = parse_grid(&args.times)?;
    let (target, description) = match (&args.pattern, &args.subgroup_data) {
        (Some(p), None) => {
            ensure!(args.filter.is_empty(), "--filter requires --subgroup-data");
            (NsTarget::Individual(parse_pattern(p, names)?), json!({ "pattern": p }))
        }
        (None, Some(path)) => {
            let data = load_dataset(path).with_context(|| format!("loading {}", path.display()))?;
            ensure!(
                &data.covariate_names == names,
                "dataset covariates ({}) differ from the fit's ({})",
                data.covariate_names.join(", "),
                names.join(", ")
            );
            let filters: Vec<Filter> = args.filter.iter().map(|f| Filter::parse(f, names)).collect::<Result<_>>()?;
            let members = subgroup(&data, &filters);
            ensure!(!members.is_empty(), "no record matches the subgroup filter");
            let d = json!({ "subgroup_data": path, "filters": args.filter, "members": members.len() });
            (NsTarget::Subgroup(members), d)
        }
        _ => bail!("give exactly one of --pattern or --subgroup-data"),
    };
    let est = simulate_ns_ci(&fit, &target, &times, args.draws, args.level, args.seed)?;
    let mut csv = String::from("time,ns,lower,upper\n");
    for k in 0..times.len() {
        writeln!(csv, "{},{},{},{}", est.times[k], est.point[k], est.lower[k], est.upper[k])?;
    }
    let mut out = Outputs::new("netsurv");
    if !fit.converged {
        out.warnings.push(format!("{} fit did not converge", model_label(&fit.structure)));
    }
    if est.draws_used < args.draws {
        out.warnings.push(format!("{} of {} draws were not finite", args.draws - est.draws_used, args.draws));
    }
    out.details = json!({ "target": description, "draws_used": est.draws_used });
    out.add(&args.out, csv);
    let config = json!({
        "fit": args.fit, "times": times, "draws": args.draws, "level": args.level, "model": model_label(&fit.structure),
    });
    out.commit(&sidecar_manifest(&args.out), config, Some(args.seed))
}

pub fn cmd_curves(args: &CurvesArgs) -> Result<()> {
    let grid = parse_grid(&args.grid)?;
    let mut curves: Vec<(String, Vec<f64>)> = Vec::new();
    let config;
    match (&args.fit, args.baseline.is_empty()) {
        (Some(path), true) => {
            let fit = read_fit(path)?;
            let spec = fit.model_spec()?;
            let patterns: Vec<String> = if args.pattern.is_empty() {
                vec![fit.covariate_names.iter().map(|n| format!("{n}=0")).collect::<Vec<_>>().join(",")]
            } else {
                args.pattern.clone()
            };
            for p in &patterns {
                let x = parse_pattern(p, &fit.covariate_names)?;
                let h = hazard_curve(&x, &spec, &grid)?;
                curves.push((pattern_id(p), h.into_iter().map(|(_, v)| v).collect()));
            }
            config = json!({ "fit": path, "patterns": patterns, "model": model_label(&fit.structure) });
        }
        (None, false) => {
            ensure!(args.pattern.is_empty(), "--pattern requires --fit");
            for b in &args.baseline {
                let p = parse_baseline(b)?;
                let h = grid.iter().map(|&t| ew_hazard(t, &p)).collect::<ghew::Result<Vec<f64>>>()?;
                curves.push((format!("ew:{}/{}/{}", p.sigma, p.kappa, p.alpha), h));
            }
            config = json!({ "baselines": args.baseline });
        }
        _ => bail!("give exactly one of --fit or --baseline"),
    }
    let mut csv = String::from("pattern_id,t,hazard\n");
    let mut shapes = serde_json::Map::new();
    for (id, h) in &curves {
        ensure!(h.iter().all(|v| v.is_finite()), "hazard of `{id}` is not finite on the grid");
        for (t, v) in grid.iter().zip(h) {
            writeln!(csv, "{id},{t},{v}")?;
        }
        let shape = classify_shape(h, SHAPE_REL_TOL);
        println!("{id}\t{shape}");
        shapes.insert(id.clone(), json!(shape));
    }
    let mut out = Outputs::new("curves");
    out.details = json!({ "shapes": shapes, "grid_points": grid.len() });
    out.add(&args.out, csv);
    let mut config = config;
    config["grid"] = json!(args.grid);
    out.commit(&sidecar_manifest(&args.out), config, None)
}

/// Scenario from `--config` or `--preset`, with command-line overrides.
fn scenario(args: &ScenarioArgs) -> Result<ScenarioConfig> {
    let mut cfg = match (&args.config, &args.preset) {
        (Some(path), None) => ScenarioConfig::from_toml_path(path)?,
        (None, Some(p)) => ScenarioConfig::from_preset(p.parse::<Preset>()?, None, None, None)?,
        _ => bail!("give exactly one of --config or --preset"),
    };
    if let Some(n) = args.n {
        cfg.n = n;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn scenario_life_table(cfg: &ScenarioConfig) -> Result<LifeTable> {
    cfg.load_life_table().map_err(|e| anyhow!(e))
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let cfg = scenario(&args.scenario)?;
    cfg.validate()?;
    let lt = scenario_life_table(&cfg)?;
    let rate = resolve_dropout_rate(&cfg, &lt)?;
    let sim = generate_dataset_with_rate(&cfg, &lt, rate, &mut stream_rng(cfg.seed, args.replicate))?;
    let mut out = Outputs::new("simulate");
    out.details = json!({
        "replicate": args.replicate,
        "dropout_rate": rate,
        "censoring": sim.dataset.censoring_proportion(),
        "truth_working_scale": sim.truth.0,
    });
    out.add(&args.out, sim.dataset.to_csv_string());
    out.commit(&sidecar_manifest(&args.out), serde_json::to_value(&cfg)?, Some(cfg.seed))
}

pub fn cmd_study(args: &StudyArgs) -> Result<()> {
    let mut cfg = scenario(&args.scenario)?;
    if let Some(r) = args.replicates {
        cfg.replicates = r;
    }
    cfg.validate()?;
    let lt = scenario_life_table(&cfg)?;
    let hh = match &cfg.structure {
        Structure::Hh { time, level } => Some((time.clone(), level.clone())),
        _ => None,
    };
    let mut settings = StudySettings { level: args.level, truth_init: !args.no_truth_init, ..StudySettings::default() };
    if !args.candidates.is_empty() {
        settings.candidates = parse_structures(&args.candidates, hh)?;
    }
    ghew::fit::critical_value(args.level)?;
    let result = run_study(&cfg, &lt, &settings)?;

    let mut out = Outputs::new("study");
    out.add(args.out.join("performance.csv"), result.performance.to_csv_string());
    out.add(args.out.join("selection.csv"), result.selection.to_csv_string());
    out.add(args.out.join("replicates.json"), serde_json::to_vec_pretty(&result.replicates)?);
    if cfg.replicates == 1 || args.save_datasets {
        for i in 0..cfg.replicates {
            let sim = generate_dataset_with_rate(&cfg, &lt, result.dropout_rate, &mut stream_rng(cfg.seed, i as u64))?;
            out.add(args.out.join(format!("dataset_{i:04}.csv")), sim.dataset.to_csv_string());
        }
    }
    for r in &result.replicates {
        if let Some(why) = &r.exclusion {
            out.warnings.push(format!("replicate {} excluded: {why}", r.index));
        }
    }
    out.details = json!({
        "dropout_rate": result.dropout_rate,
        "mean_censoring": result.mean_censoring,
        "replicates_used": result.performance.replicates_used,
        "replicates_excluded": result.performance.replicates_excluded,
        "hessian_pd": result.hessian_pd_count(),
        "candidates": settings.candidates.iter().map(model_label).collect::<Vec<_>>(),
        "level": args.level,
        "truth_init": settings.truth_init,
    });
    out.commit(&args.out.join("manifest.json"), serde_json::to_value(&cfg)?, Some(cfg.seed))?;
    print!("{}", result.selection.to_csv_string());
    Ok(())
}

pub fn cmd_lifetable(args: &LifeTableArgs) -> Result<()> {
    match (&args.check, args.synthetic, &args.out) {
        (Some(path), false, None) => {
            let lt = load_life_table(path).with_context(|| format!("loading {}", path.display()))?;
            let (a0, a1) = lt.age_range();
            let (y0, y1) = lt.year_range();
            println!("ages {a0}..={a1}");
            println!("years {y0}..={y1}");
            println!("strata {}", lt.strata_keys().join(","));
            println!("cells {}", lt.n_cells());
            Ok(())
        }
        (None, true, Some(out_path)) => write_synthetic(out_path),
        _ => bail!("use either --check FILE or --synthetic --out FILE"),
    }
}

fn write_synthetic(path: &Path) -> Result<()> {
    let mut out = Outputs::new("lifetable");
    out.add(path, LifeTable::synthetic().to_csv_string());
    out.commit(&sidecar_manifest(path), json!({ "synthetic": true }), None).context("writing life table")
}
