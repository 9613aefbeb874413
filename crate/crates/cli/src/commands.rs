//! The five subcommands.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use loadvine::clustering::DensityGrid;
use loadvine::ingest::{digest_hex, filter_calendar, parse_meter_csv, SlotMatrix, SLOTS_PER_DAY};
use loadvine::model::HouseholdModel;
use loadvine::pipeline::fit_household;
use loadvine::rng::stage_seed;
use loadvine::simulate::{assemble_day, quantile_bands, truncated_profiles, SimulatedProfile};
use loadvine::stats::{mean, sample_sd};
use loadvine::validate::{features, permutation_test, FeatureVector};
use serde::Serialize;

use crate::config::PipelineConfig;
use crate::output::{fmt, slot_header, slot_label, write_segments, write_vine_edges, OutputDir};
use crate::CliError;

/// Filtered days plus the input digest.
struct LoadedData {
    matrix: SlotMatrix,
    digest: String,
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

/// Reads either a raw meter file (and applies the calendar filter) or a
/// slot matrix written by `ingest`.
fn load_data(config: &PipelineConfig) -> Result<LoadedData, CliError> {
    if let Some(path) = &config.slots {
        let bytes = read_bytes(path)?;
        let digest = digest_hex(&bytes);
        let mut matrix = SlotMatrix::read_csv(bytes.as_slice()).map_err(|e| e.in_stage("ingest"))?;
        matrix.provenance.filter = format!("slot matrix {}", path.display());
        matrix.provenance.source_digest = Some(digest.clone());
        return Ok(LoadedData { matrix, digest });
    }
    let path = config.input.as_deref().ok_or_else(|| CliError::Usage("an input file is required (--input or --slots)".into()))?;
    let filter = config.filter()?;
    let bytes = read_bytes(path)?;
    let digest = digest_hex(&bytes);
    let parsed = parse_meter_csv(bytes.as_slice(), &config.schema()).map_err(|e| e.in_stage("ingest"))?;
    for w in &parsed.warnings {
        log::warn!("{w}");
    }
    let mut matrix = filter_calendar(&parsed.records, &filter).map_err(|e| e.in_stage("ingest"))?;
    matrix.provenance.source_digest = Some(digest.clone());
    Ok(LoadedData { matrix, digest })
}

fn read_allowlist(path: &Path) -> Result<Vec<u64>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut ids = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.split('#').next().unwrap_or("").trim();
        if t.is_empty() {
            continue;
        }
        let id = t
            .parse::<u64>()
            .map_err(|_| CliError::Usage(format!("{}:{}: not a customer id: {t}", path.display(), i + 1)))?;
        ids.insert(id);
    }
    if ids.is_empty() {
        return Err(CliError::Usage(format!("{} lists no customer ids", path.display())));
    }
    Ok(ids.into_iter().collect())
}

pub fn ingest(config: &PipelineConfig, allowlist: Option<&Path>) -> Result<(), CliError> {
    let path = config.input.as_deref().ok_or_else(|| CliError::Usage("an input file is required (--input)".into()))?;
    let out_dir = config.output_dir()?;
    let bytes = read_bytes(path)?;
    let digest = digest_hex(&bytes);
    let parsed = parse_meter_csv(bytes.as_slice(), &config.schema()).map_err(|e| e.in_stage("ingest"))?;
    for w in &parsed.warnings {
        log::warn!("{w}");
    }

    let customers = match allowlist {
        Some(p) => read_allowlist(p)?,
        None => vec![config.customer_id.ok_or_else(|| CliError::Usage("customer id is required (--customer)".into()))?],
    };
    let mut selected = Vec::new();
    for &c in &customers {
        let mut cfg = config.clone();
        cfg.customer_id = Some(c);
        let filter = cfg.filter()?;
        match filter_calendar(&parsed.records, &filter) {
            Ok(m) => selected.push((c, Some(m))),
            Err(e @ loadvine::Error::EmptySelection(_)) if allowlist.is_some() => {
                log::warn!("{e}");
                selected.push((c, None));
            }
            Err(e) => return Err(e.in_stage("ingest").into()),
        }
    }
    if selected.iter().all(|(_, m)| m.is_none()) {
        return Err(loadvine::Error::EmptySelection(format!("no listed customer has matching days in {}", path.display()))
            .in_stage("ingest")
            .into());
    }

    let out = OutputDir::acquire(out_dir)?;
    let mut summary = out.csv("households.csv")?;
    summary.write_record(["customer_id", "n_days", "file"])?;
    for (c, matrix) in &selected {
        let (n, file) = match matrix {
            Some(m) => {
                let name = if allowlist.is_some() { format!("slots_{c}.csv") } else { "slots.csv".to_string() };
                let p = out.path(&name);
                let f = fs::File::create(&p).map_err(|e| CliError::io(&p, e))?;
                m.write_csv(std::io::BufWriter::new(f))?;
                (m.n_days(), name)
            }
            None => (0, String::new()),
        };
        summary.write_record([c.to_string(), n.to_string(), file])?;
        println!("customer {c}: {n} days");
    }
    summary.flush().map_err(|e| CliError::io(&out.path("households.csv"), e))?;

    let mut errs = out.csv("row_errors.csv")?;
    errs.write_record(["line", "message"])?;
    for e in &parsed.row_errors {
        errs.write_record([e.line.to_string(), e.message.clone()])?;
    }
    errs.flush().map_err(|e| CliError::io(&out.path("row_errors.csv"), e))?;
    if !parsed.row_errors.is_empty() {
        println!("{} malformed rows skipped (see row_errors.csv)", parsed.row_errors.len());
    }
    log::info!("input sha256 {digest}");
    Ok(())
}

#[derive(Serialize)]
struct FitReport<'a> {
    customer_id: u64,
    n_days: usize,
    filter: &'a str,
    input_sha256: &'a str,
    library_version: &'a str,
    k: usize,
    average_silhouette: f64,
    segments: usize,
    vine_edges: usize,
    flagged_edges: usize,
    total_aic: f64,
    warnings: &'a [String],
    config: &'a PipelineConfig,
}

pub fn fit(config: &PipelineConfig) -> Result<(), CliError> {
    let out_dir = config.output_dir()?;
    let data = load_data(config)?;
    let customer = config.customer_id.unwrap_or(0);
    let mut fit_cfg = config.fit.clone();
    if let Some(s) = config.seed {
        fit_cfg.seed = s;
    }
    let model = fit_household(&data.matrix, customer, &fit_cfg)?;

    let out = OutputDir::acquire(out_dir)?;
    let model_path = out.path("model.json");
    model.save(&model_path)?;

    let mut w = out.csv("bandwidths.csv")?;
    w.write_record(["slot", "label", "bandwidth", "offset", "n", "silverman_fallback"])?;
    for (s, d) in model.marginals.iter().enumerate() {
        w.write_record([
            (s + 1).to_string(),
            slot_label(s),
            fmt(d.bandwidth()),
            fmt(d.offset()),
            d.sample_count().to_string(),
            d.bandwidth_fallback().to_string(),
        ])?;
    }
    w.flush().map_err(|e| CliError::io(&out.path("bandwidths.csv"), e))?;

    write_k_curve(&out, "k_curve.csv", &model)?;
    write_segments(&out, &model)?;
    write_vine_edges(&out, &model)?;

    let mut resolved = config.clone();
    resolved.fit = fit_cfg;
    resolved.seed = Some(resolved.fit.seed);
    out.json(
        "fit_report.json",
        &FitReport {
            customer_id: customer,
            n_days: model.metadata.n_days,
            filter: &model.metadata.filter,
            input_sha256: &data.digest,
            library_version: &model.metadata.library_version,
            k: model.clusters.k,
            average_silhouette: model.clusters.average_silhouette,
            segments: model.clusters.segments.len(),
            vine_edges: model.vines.iter().map(|v| v.edge_count()).sum(),
            flagged_edges: model.vines.iter().map(|v| v.flagged_edges()).sum(),
            total_aic: model.vines.iter().map(|v| v.total_aic()).sum(),
            warnings: &model.metadata.warnings,
            config: &resolved,
        },
    )?;
    for w in &model.metadata.warnings {
        log::warn!("{w}");
    }
    println!(
        "fitted {} days: K = {}, average silhouette {:.4}, {} segments",
        model.metadata.n_days,
        model.clusters.k,
        model.clusters.average_silhouette,
        model.clusters.segments.len()
    );
    println!("model written to {}", model_path.display());
    Ok(())
}

fn write_k_curve(out: &OutputDir, name: &str, model: &HouseholdModel) -> Result<(), CliError> {
    let mut w = out.csv(name)?;
    w.write_record(["k", "average_silhouette"])?;
    for (k, s) in &model.clusters.silhouette_curve {
        w.write_record([k.to_string(), fmt(*s)])?;
    }
    w.flush().map_err(|e| CliError::io(&out.path(name), e))
}

fn band_of(config: &PipelineConfig) -> Option<(f64, f64)> {
    config.simulate.band.map(|[lo, hi]| (lo, hi))
}

/// Sorted, de-duplicated quantile levels, including the band edges.
fn band_levels(config: &PipelineConfig) -> Vec<f64> {
    let mut levels = config.simulate.levels.clone();
    if let Some((lo, hi)) = band_of(config) {
        levels.extend([lo, hi].into_iter().filter(|l| *l > 0.0 && *l < 1.0));
    }
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    levels
}

pub fn simulate(config: &PipelineConfig) -> Result<(), CliError> {
    let seed = config.seed()?;
    let out_dir = config.output_dir()?;
    let model = HouseholdModel::load(config.model_path()?)?;
    let n = config.simulate.n;
    if n == 0 {
        return Err(CliError::Usage("the number of profiles must be positive".into()));
    }
    let levels = band_levels(config);
    let bands = quantile_bands(&model, &levels)?;
    let profiles = match band_of(config) {
        Some(band) => truncated_profiles(&model, band, n, config.simulate.max_attempts, seed)?,
        None => assemble_day(&model, n, seed)?,
    };

    let out = OutputDir::acquire(out_dir)?;
    write_profiles(&out, &profiles)?;
    let mut w = out.csv("bands.csv")?;
    let mut header = vec!["slot".to_string(), "label".to_string()];
    header.extend(levels.iter().map(|l| format!("q{l}")));
    w.write_record(&header)?;
    for s in 0..model.slot_count() {
        let mut row = vec![(s + 1).to_string(), slot_label(s)];
        row.extend(bands.curves.iter().map(|c| fmt(c[s])));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| CliError::io(&out.path("bands.csv"), e))?;

    let attempts: u64 = profiles.iter().map(|p| p.attempts).sum();
    println!("{n} profiles written to {}", out.path("profiles.csv").display());
    if band_of(config).is_some() {
        println!("acceptance rate {:.4}", n as f64 / attempts as f64);
    }
    Ok(())
}

fn write_profiles(out: &OutputDir, profiles: &[SimulatedProfile]) -> Result<(), CliError> {
    let mut w = out.csv("profiles.csv")?;
    let mut header = vec!["profile".to_string(), "seed".to_string(), "attempts".to_string()];
    header.extend(slot_header());
    w.write_record(&header)?;
    for p in profiles {
        let mut row = vec![(p.index + 1).to_string(), p.seed.to_string(), p.attempts.to_string()];
        row.extend(p.values.iter().map(|v| fmt(*v)));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| CliError::io(&out.path("profiles.csv"), e))
}

pub fn validate(config: &PipelineConfig) -> Result<(), CliError> {
    let seed = config.seed()?;
    let out_dir = config.output_dir()?;
    let model = HouseholdModel::load(config.model_path()?)?;
    let data = load_data(config)?;
    if let Some(c) = config.customer_id.filter(|c| *c != model.customer_id) {
        log::warn!("real data is customer {c} but the model was fitted for customer {}", model.customer_id);
    }
    let reps = config.validate.repetitions;
    if reps == 0 {
        return Err(CliError::Usage("at least one repetition is required".into()));
    }
    let perm = config.validate.permutation_config();
    let real: Vec<FeatureVector> = data.matrix.rows().iter().map(|r| features(r)).collect::<Result<_, _>>()?;
    let n = real.len();

    let mut rows = Vec::with_capacity(reps);
    for r in 0..reps {
        let sim_seed = stage_seed(seed, &format!("validate/simulate/{r}"));
        let perm_seed = stage_seed(seed, &format!("validate/permute/{r}"));
        let sim = assemble_day(&model, n, sim_seed).map_err(|e| e.in_stage(format!("validation repetition {}", r + 1)))?;
        let sim: Vec<FeatureVector> = sim.iter().map(|p| features(&p.values)).collect::<Result<_, _>>()?;
        let report = permutation_test(&real, &sim, &perm, perm_seed)
            .map_err(|e| e.in_stage(format!("validation repetition {}", r + 1)))?;
        log::info!("repetition {}: T = {}, p = {}", r + 1, report.t_observed, report.p_value);
        rows.push((sim_seed, report));
    }

    let out = OutputDir::acquire(out_dir)?;
    let mut w = out.csv("pvalues.csv")?;
    w.write_record([
        "repetition", "simulation_seed", "permutation_seed", "t_observed", "p_value", "exceedances", "permutations",
        "condition_number", "ridge", "ridged_permutations",
    ])?;
    for (r, (sim_seed, rep)) in rows.iter().enumerate() {
        w.write_record([
            (r + 1).to_string(),
            sim_seed.to_string(),
            rep.seed.to_string(),
            fmt(rep.t_observed),
            fmt(rep.p_value),
            rep.exceedances.to_string(),
            rep.permutations.to_string(),
            fmt(rep.observed_covariance.condition_number),
            fmt(rep.observed_covariance.ridge),
            rep.ridged_permutations.to_string(),
        ])?;
    }
    w.flush().map_err(|e| CliError::io(&out.path("pvalues.csv"), e))?;

    let p: Vec<f64> = rows.iter().map(|(_, r)| r.p_value).collect();
    let (mean_p, sd_p) = (mean(&p), sample_sd(&p));
    let mut w = out.csv("validate_summary.csv")?;
    w.write_record(["n_real", "repetitions", "permutations", "mean_p", "sd_p", "min_p", "max_p"])?;
    w.write_record([
        n.to_string(),
        reps.to_string(),
        perm.permutations.to_string(),
        fmt(mean_p),
        fmt(sd_p),
        fmt(p.iter().copied().fold(f64::INFINITY, f64::min)),
        fmt(p.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
    ])?;
    w.flush().map_err(|e| CliError::io(&out.path("validate_summary.csv"), e))?;
    println!("{reps} repetitions over {n} real days: mean p = {mean_p:.4}, sd = {sd_p:.4}");
    Ok(())
}

pub fn report(config: &PipelineConfig, grid_points: usize, marginal_points: usize) -> Result<(), CliError> {
    let out_dir = config.output_dir()?;
    let model = HouseholdModel::load(config.model_path()?)?;
    if grid_points < 2 || marginal_points < 2 {
        return Err(CliError::Usage("grid sizes must be at least 2".into()));
    }
    let densities = model.clustering_densities();
    let grid = DensityGrid::from_models(densities, grid_points)?;
    let eps_ref = densities.iter().map(|d| d.offset()).fold(f64::INFINITY, f64::min);

    let out = OutputDir::acquire(out_dir)?;
    let mut w = out.csv("density_grid.csv")?;
    w.write_record(["slot", "z", "x_kwh", "density"])?;
    for (s, row) in grid.rows().iter().enumerate() {
        for (&z, &d) in grid.grid().iter().zip(row) {
            w.write_record([(s + 1).to_string(), fmt(z), fmt(z.exp() - eps_ref), fmt(d)])?;
        }
    }
    w.flush().map_err(|e| CliError::io(&out.path("density_grid.csv"), e))?;

    let mut w = out.csv("marginals.csv")?;
    w.write_record(["slot", "x_kwh", "pdf", "cdf"])?;
    for (s, m) in model.marginals.iter().enumerate() {
        for (x, pdf, cdf) in m.grid(marginal_points) {
            w.write_record([(s + 1).to_string(), fmt(x), fmt(pdf), fmt(cdf)])?;
        }
    }
    w.flush().map_err(|e| CliError::io(&out.path("marginals.csv"), e))?;

    write_k_curve(&out, "silhouette_curve.csv", &model)?;

    let mut w = out.csv("silhouettes.csv")?;
    w.write_record(["slot", "label", "cluster", "silhouette"])?;
    for s in 0..SLOTS_PER_DAY.min(model.clusters.labels.len()) {
        w.write_record([
            (s + 1).to_string(),
            slot_label(s),
            (model.clusters.labels[s] + 1).to_string(),
            fmt(model.clusters.per_density_silhouette[s]),
        ])?;
    }
    w.flush().map_err(|e| CliError::io(&out.path("silhouettes.csv"), e))?;

    let mut w = out.csv("distance_matrix.csv")?;
    let mut header = vec!["slot".to_string()];
    header.extend(slot_header());
    w.write_record(&header)?;
    for (s, row) in grid.distance_matrix().iter().enumerate() {
        let mut rec = vec![(s + 1).to_string()];
        rec.extend(row.iter().map(|d| fmt(*d)));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| CliError::io(&out.path("distance_matrix.csv"), e))?;

    write_segments(&out, &model)?;
    write_vine_edges(&out, &model)?;
    println!("report written to {}", out_dir.display());
    Ok(())
}
