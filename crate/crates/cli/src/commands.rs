use std::fs;
use std::path::Path;

use distgp::diagnostics::{
    identifiability_suite, negdef_suite, nondegen_suite, DiagnosticReport, IdentifiabilityConfig,
};
use distgp::io::{fmt_sig, match_targets, read_observations, read_targets, write_predictions, Observation};
use distgp::simulation::{beta_skewness_experiment, table1_benchmark, table2_benchmark, BetaConfig, SimConfig};
use distgp::*;
use serde_json::json;

use crate::settings::Settings;
use crate::Failure;

type Outcome = std::result::Result<(), Failure>;

fn to_quantile(obs: &Observation, m: usize) -> Result<QuantileFunction> {
    match obs {
        Observation::Samples(xs) => quantile_from_samples(&EmpiricalDistribution::new(xs.clone())?, m),
        Observation::Density(g) => quantile_from_density(g, m),
    }
}

fn provenance(obs: &Observation) -> Provenance {
    match obs {
        Observation::Samples(xs) => Provenance::Empirical { sample_count: xs.len() },
        Observation::Density(_) => Provenance::Density,
    }
}

fn densities<'a>(path: &Path, obs: &'a [(String, Observation)], family: KernelFamily) -> Result<Vec<&'a GridDensity>> {
    obs.iter()
        .map(|(id, o)| match o {
            Observation::Density(g) => Ok(g),
            Observation::Samples(_) => Err(Error::InvalidInput(format!(
                "{}: obs '{id}': {family} kernels need densities (obs_id,x,f), not samples",
                path.display()
            ))),
        })
        .collect()
}

fn single(path: &Path) -> Result<Observation> {
    let mut obs = read_observations(path)?;
    if obs.len() != 1 {
        return Err(Error::InvalidInput(format!(
            "{}: expected one observation, found {}",
            path.display(),
            obs.len()
        )));
    }
    Ok(obs.remove(0).1)
}

pub fn distance(s: &Settings, a: &Path, b: &Path) -> Outcome {
    let m = s.grid();
    let d = w2_distance(&to_quantile(&single(a)?, m)?, &to_quantile(&single(b)?, m)?)?;
    println!("{}", fmt_sig(d));
    Ok(())
}

fn template(s: &Settings, train: &[&GridDensity]) -> Result<KernelSpec> {
    let projection = ProjectionParams {
        order: s.order,
        sigma2: 1.0,
        ells: vec![1.0; s.order],
        hurst: 0.5,
    };
    Ok(match s.kernel {
        KernelFamily::Powexp => KernelSpec::Powexp(PowExpParams {
            sigma2: 1.0,
            ell: 1.0,
            hurst: 0.5,
            nugget: match s.nugget {
                NuggetMode::Fixed(v) => v,
                _ => 0.0,
            },
        }),
        KernelFamily::Fbm => KernelSpec::Fbm(FbmParams {
            sigma2: 1.0,
            hurst: 0.5,
            origin: QuantileFunction::point_mass(0.0, s.grid())?,
        }),
        KernelFamily::Legendre => KernelSpec::Legendre(projection),
        KernelFamily::Pca => {
            let owned: Vec<GridDensity> = train.iter().map(|g| (*g).clone()).collect();
            KernelSpec::Pca {
                params: projection,
                basis: pca_fit(&owned, s.order)?,
            }
        }
    })
}

/// Inputs for `spec` from the observations in `path`.
fn inputs_for(spec: &KernelSpec, path: &Path, obs: &[(String, Observation)], m: usize) -> Result<Inputs> {
    Ok(match spec {
        KernelSpec::Powexp(_) | KernelSpec::Fbm(_) => {
            Inputs::Quantiles(obs.iter().map(|(_, o)| to_quantile(o, m)).collect::<Result<_>>()?)
        }
        KernelSpec::Legendre(p) => Inputs::Features(
            densities(path, obs, KernelFamily::Legendre)?
                .into_iter()
                .map(|g| legendre_features(g, p.order))
                .collect::<Result<_>>()?,
        ),
        KernelSpec::Pca { basis, .. } => Inputs::Features(
            densities(path, obs, KernelFamily::Pca)?
                .into_iter()
                .map(|g| pca_features(g, basis))
                .collect::<Result<_>>()?,
        ),
    })
}

pub fn fit(s: &Settings, inputs: &Path, targets: &Path, out: &Path, summary: Option<&Path>) -> Outcome {
    let obs = read_observations(inputs)?;
    let ids: Vec<String> = obs.iter().map(|(id, _)| id.clone()).collect();
    let y = match_targets(targets, &ids, &read_targets(targets)?)?;
    let train = match s.kernel {
        KernelFamily::Legendre | KernelFamily::Pca => densities(inputs, &obs, s.kernel)?,
        _ => Vec::new(),
    };
    let template = template(s, &train)?;
    let x = inputs_for(&template, inputs, &obs, s.grid())?;
    let meta = match &x {
        Inputs::Features(_) => vec![Provenance::Features; obs.len()],
        Inputs::Quantiles(_) => obs.iter().map(|(_, o)| provenance(o)).collect(),
    };
    let data = Dataset::new(x, y, meta)?;
    let cfg = FitConfig {
        n_starts: s.starts,
        seed: s.seed,
        nugget: s.nugget,
        center_targets: s.center_targets,
        ..Default::default()
    };
    let outcome = fit_ml(&data, &template, &cfg)?;
    let model = &outcome.model;
    fs::write(
        out,
        serde_json::to_string_pretty(&model.to_file()).map_err(Error::from)? + "\n",
    )?;

    let information = match info_matrix(model, Coordinates::LogLogit) {
        Ok(info) => json!({ "coordinates": "loglogit", "names": info.names, "eigenvalues": info.eigenvalues }),
        Err(e) => {
            log::warn!("information matrix unavailable: {e}");
            serde_json::Value::Null
        }
    };
    let spec = model.spec();
    let params: serde_json::Map<String, serde_json::Value> = spec
        .param_names()
        .into_iter()
        .zip(spec.params())
        .map(|(k, v)| (k, json!(v)))
        .collect();
    let report = json!({
        "kernel": spec.family().to_string(),
        "n": model.len(),
        "parameters": params,
        "criterion": model.criterion(),
        "log_likelihood": model.log_likelihood(),
        "jitter_used": model.jitter_used(),
        "mean_offset": model.mean_offset(),
        "information": information,
        "best_start": outcome.best_start,
        "starts": outcome.starts.len(),
    });
    let text = serde_json::to_string_pretty(&report).map_err(Error::from)? + "\n";
    match summary {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

pub fn predict(model: &Path, inputs: &Path, out: Option<&Path>) -> Outcome {
    let raw = fs::read_to_string(model).map_err(|e| Error::InvalidInput(format!("{}: {e}", model.display())))?;
    let file: ModelFile =
        serde_json::from_str(&raw).map_err(|e| Error::InvalidInput(format!("{}: {e}", model.display())))?;
    let model = GPModel::from_file(file)?;
    let m = match model.inputs() {
        Inputs::Quantiles(q) => q[0].grid_size(),
        Inputs::Features(_) => 0,
    };
    let obs = read_observations(inputs)?;
    let queries = inputs_for(model.spec(), inputs, &obs, m)?;
    let preds = model.predict_many(&queries)?;
    let rows: Vec<(String, f64, f64)> = obs
        .into_iter()
        .zip(preds)
        .map(|((id, _), p)| (id, p.mean, p.sd()))
        .collect();
    match out {
        Some(p) => write_predictions(fs::File::create(p)?, &rows)?,
        None => write_predictions(std::io::stdout().lock(), &rows)?,
    }
    Ok(())
}

pub fn benchmark(s: &Settings, experiment: &str, out_dir: Option<&Path>) -> Outcome {
    let report = if experiment == "beta" {
        let d = BetaConfig::default();
        beta_skewness_experiment(&BetaConfig {
            n_train: s.n_train.unwrap_or(d.n_train),
            n_test: s.n_test.unwrap_or(d.n_test),
            samples_per_dist: s.samples.unwrap_or(d.samples_per_dist),
            grid_size: s.grid(),
            seed: s.seed,
            n_starts: s.starts,
            threads: s.threads,
            center_targets: s.center_targets,
            ..d
        })?
    } else {
        let d = SimConfig::default();
        let cfg = SimConfig {
            n_train: s.n_train.unwrap_or(d.n_train),
            n_test: s.n_test.unwrap_or(d.n_test),
            samples_per_dist: s.samples.unwrap_or(d.samples_per_dist),
            grid_size: s.grid(),
            seed: s.seed,
            n_starts: s.starts,
            threads: s.threads,
            center_targets: s.center_targets,
            ..d
        };
        if experiment == "table1" {
            table1_benchmark(&cfg)?
        } else {
            table2_benchmark(&cfg)?
        }
    };
    print!("{}", report.to_table());
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        fs::write(
            dir.join("report.json"),
            serde_json::to_string_pretty(&report).map_err(Error::from)? + "\n",
        )?;
        fs::write(dir.join("rows.csv"), report.rows_csv()?)?;
        fs::write(dir.join("pairs.csv"), report.pairs_csv()?)?;
    }
    Ok(())
}

pub fn diagnose(s: &Settings, suite: &str, out: Option<&Path>) -> Outcome {
    let report: DiagnosticReport = match suite {
        "negdef" => negdef_suite(s.configs, s.seed)?,
        "nondegen" => nondegen_suite(s.configs, s.seed)?,
        _ => {
            let d = IdentifiabilityConfig::default();
            identifiability_suite(&IdentifiabilityConfig {
                grid_size: s.grid_size.unwrap_or(d.grid_size),
                seed: s.seed,
                ..d
            })?
        }
    };
    let text = serde_json::to_string_pretty(&report).map_err(Error::from)? + "\n";
    match out {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    let failed: Vec<String> = report
        .failures()
        .map(|r| {
            format!(
                "{} {} (statistic {} vs threshold {})",
                r.test, r.configuration, r.statistic, r.threshold
            )
        })
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Diagnostic(format!(
            "{} of {} checks failed; first: {}",
            failed.len(),
            report.records.len(),
            failed[0]
        )))
    }
}
