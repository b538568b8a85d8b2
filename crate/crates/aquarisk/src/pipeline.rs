//! The eight pipeline commands. Each reads its inputs from the output
//! directory (or the configured data paths), writes its artifacts there,
//! updates `manifest.json` and returns a JSON summary.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use aquarisk_core::calibrate::fit_calibrated;
use aquarisk_core::encode::{EncodingMap, FeatureMatrix};
use aquarisk_core::evaluate::{cross_validate_many, grid_search, learning_curve, roc_auc, Metric};
use aquarisk_core::merge::{filter_occupied, merge_datasets};
use aquarisk_core::quantile::{monthly_p90_series, MonthlySeries, SeriesOptions, SeriesSample};
use aquarisk_core::records::TestSource;
use aquarisk_core::risk::{quartile_tables, rank_untested, QuartileInput, QuartileRow};
use aquarisk_core::rng::derive_seed;
use aquarisk_core::synth::{generate, SynthConfig};
use chrono::NaiveDate;
use serde_json::{json, Value};

use crate::config::PipelineConfig;
use crate::error::{AppError, Result};
use crate::exec::RayonExecutor;
use crate::io::{self, fmt_f64, fmt_opt, CsvOut};
use crate::manifest::Manifest;
use crate::model_doc::ModelDocument;

pub const PARCELS_CSV: &str = "parcels.csv";
pub const TESTS_CSV: &str = "tests.csv";
pub const CENSUS_CSV: &str = "census.csv";
pub const SERVICE_LINES_CSV: &str = "service_lines.csv";
pub const GROUND_TRUTH_CSV: &str = "ground_truth.csv";
pub const TRUTH_SERIES_CSV: &str = "truth_series.csv";
pub const LABELED_CSV: &str = "labeled.csv";
pub const PREDICTION_CSV: &str = "prediction.csv";
pub const PARCEL_META_CSV: &str = "parcel_meta.csv";
pub const SAMPLES_CSV: &str = "samples.csv";
pub const UNMATCHED_CSV: &str = "unmatched.csv";
pub const DISCARDS_CSV: &str = "discards.csv";
pub const ENCODING_JSON: &str = "encoding_map.json";
pub const MODEL_JSON: &str = "model.json";
pub const PROPENSITY_MODEL_JSON: &str = "propensity_model.json";
pub const PROPENSITIES_CSV: &str = "propensities.csv";
pub const IMPORTANCE_CSV: &str = "importance.csv";
pub const PROPENSITY_IMPORTANCE_CSV: &str = "propensity_importance.csv";
pub const CV_REPORT_CSV: &str = "cv_report.csv";
pub const ROC_CSV: &str = "roc.csv";
pub const EVALUATION_JSON: &str = "evaluation.json";
pub const LEARNING_CURVE_CSV: &str = "learning_curve.csv";
pub const GRID_SEARCH_CSV: &str = "grid_search.csv";
pub const PREDICTIONS_CSV: &str = "predictions.csv";
pub const RANKED_CSV: &str = "ranked_risk.csv";
pub const RANKED_GEOJSON: &str = "ranked_risk.geojson";
pub const SERIES_CSV: &str = "series.csv";
pub const QUARTILES_CSV: &str = "quartiles.csv";
pub const QUARTILES_BY_YEAR_CSV: &str = "quartiles_by_year.csv";

/// Attributes summarized by the quartile tables.
pub const QUARTILE_ATTRIBUTES: &[&str] = &[
    "building_value",
    "land_value",
    "home_sev",
    "land_improvements",
    "parcel_acres",
    "year_built",
];

/// Seed streams derived from the master seed, one per consumer.
mod streams {
    pub const SYNTH: u64 = 1;
    pub const MODEL: u64 = 2;
    pub const PROPENSITY: u64 = 3;
    pub const EVALUATE: u64 = 4;
    pub const SERIES: u64 = 5;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Ingest,
    Train,
    Evaluate,
    Predict,
    Rank,
    Series,
    Synth,
    Quartiles,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Ingest => "ingest",
            Command::Train => "train",
            Command::Evaluate => "evaluate",
            Command::Predict => "predict",
            Command::Rank => "rank",
            Command::Series => "series",
            Command::Synth => "synth",
            Command::Quartiles => "quartiles",
        }
    }
}

pub struct Context {
    pub config: PipelineConfig,
    pub out: PathBuf,
    pub exec: RayonExecutor,
}

impl Context {
    pub fn new(config: PipelineConfig, out: PathBuf, threads: usize) -> Result<Self> {
        config.validate()?;
        std::fs::create_dir_all(&out).map_err(|e| AppError::io(&out, e))?;
        Ok(Context {
            config,
            out,
            exec: RayonExecutor::new(threads),
        })
    }

    fn seed(&self) -> u64 {
        self.config.seed()
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn data_path(&self, configured: &Option<PathBuf>, default: &str) -> PathBuf {
        configured.clone().unwrap_or_else(|| self.path(default))
    }
}

/// Tracks inputs read and outputs written by one command.
struct Run<'a> {
    ctx: &'a Context,
    command: Command,
    manifest: Manifest,
    outputs: Vec<String>,
}

impl<'a> Run<'a> {
    fn new(ctx: &'a Context, command: Command) -> Result<Self> {
        Ok(Run {
            ctx,
            command,
            manifest: Manifest::load(&ctx.out)?,
            outputs: Vec::new(),
        })
    }

    /// Resolve an input, failing with a dependency diagnostic when absent and
    /// with a staleness error when it no longer matches the manifest.
    fn input(&self, path: PathBuf, what: &'static str, producer: &'static str) -> Result<PathBuf> {
        if !path.exists() {
            return Err(AppError::MissingArtifact {
                what,
                path,
                producer,
            });
        }
        self.manifest.verify(&self.ctx.out, &path)?;
        Ok(path)
    }

    fn artifact(&self, name: &str, what: &'static str, producer: &'static str) -> Result<PathBuf> {
        self.input(self.ctx.path(name), what, producer)
    }

    fn output(&mut self, name: &str) -> PathBuf {
        self.outputs.push(name.to_string());
        self.ctx.path(name)
    }

    fn finish(mut self, mut summary: serde_json::Map<String, Value>) -> Result<Value> {
        let seed = self.ctx.seed();
        self.manifest
            .record(&self.ctx.out, &self.outputs, self.command.name(), seed)?;
        self.manifest.save(&self.ctx.out)?;
        summary.insert("command".into(), json!(self.command.name()));
        summary.insert("seed".into(), json!(seed));
        let outputs: Vec<String> = self
            .outputs
            .iter()
            .map(|n| self.ctx.path(n).display().to_string())
            .collect();
        summary.insert("outputs".into(), json!(outputs));
        Ok(Value::Object(summary))
    }
}

pub fn run(command: Command, ctx: &Context) -> Result<Value> {
    match command {
        Command::Synth => synth(ctx),
        Command::Ingest => ingest(ctx),
        Command::Train => train(ctx),
        Command::Evaluate => evaluate(ctx),
        Command::Predict => predict(ctx),
        Command::Rank => rank(ctx),
        Command::Series => series(ctx),
        Command::Quartiles => quartiles(ctx),
    }
}

fn summary(pairs: Vec<(&str, Value)>) -> serde_json::Map<String, Value> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

fn synth(ctx: &Context) -> Result<Value> {
    let mut run = Run::new(ctx, Command::Synth)?;
    let cfg = SynthConfig {
        seed: derive_seed(ctx.seed(), streams::SYNTH),
        ..ctx.config.synth.clone()
    };
    let (city, batch) = generate(&cfg)?;
    io::write_parcels(&run.output(PARCELS_CSV), &city.parcels)?;
    io::write_tests(&run.output(TESTS_CSV), &batch.tests)?;
    io::write_census(&run.output(CENSUS_CSV), &city.census)?;
    io::write_service_lines(&run.output(SERVICE_LINES_CSV), &city.service_lines)?;

    let mut gt = CsvOut::create(
        &run.output(GROUND_TRUTH_CSV),
        &[
            "parcel_id",
            "latent_risk",
            "true_propensity",
            "base_propensity",
            "occupied",
            "year_built",
            "sentinel",
            "lead_line",
        ],
    )?;
    for p in &city.truth.parcels {
        gt.row([
            p.parcel_id.clone(),
            fmt_f64(p.latent_risk),
            fmt_f64(p.propensity),
            fmt_f64(p.base_propensity),
            u8::from(p.occupied).to_string(),
            p.year_built.to_string(),
            u8::from(p.sentinel).to_string(),
            u8::from(p.lead_line).to_string(),
        ])?;
    }
    gt.finish()?;
    let mut ts = CsvOut::create(
        &run.output(TRUTH_SERIES_CSV),
        &["month", "true_p90", "month_effect"],
    )?;
    for m in &city.truth.months {
        ts.row([
            m.month.to_string(),
            m.true_p90.to_string(),
            fmt_f64(m.effect),
        ])?;
    }
    ts.finish()?;
    let occupied = city.truth.parcels.iter().filter(|p| p.occupied).count();
    run.finish(summary(vec![
        ("parcels", json!(city.parcels.len())),
        ("occupied", json!(occupied)),
        ("tests", json!(batch.tests.len())),
        (
            "outcome",
            serde_json::to_value(city.truth.outcome).expect("outcome serializes"),
        ),
    ]))
}

fn ingest(ctx: &Context) -> Result<Value> {
    let mut run = Run::new(ctx, Command::Ingest)?;
    let d = &ctx.config.data;
    let parcels_path = run.input(
        ctx.data_path(&d.parcels, PARCELS_CSV),
        "parcels dataset",
        "synth",
    )?;
    let tests_path = run.input(ctx.data_path(&d.tests, TESTS_CSV), "tests dataset", "synth")?;
    let census_path = run.input(
        ctx.data_path(&d.census, CENSUS_CSV),
        "census dataset",
        "synth",
    )?;
    let lines_path = run.input(
        ctx.data_path(&d.service_lines, SERVICE_LINES_CSV),
        "service-line dataset",
        "synth",
    )?;

    let parcels = io::read_parcels(&parcels_path)?;
    let tests = io::read_tests(&tests_path)?;
    let census = io::read_census(&census_path)?;
    let lines = io::read_service_lines(&lines_path)?;

    let occupied = filter_occupied(&parcels.records);
    let merged = merge_datasets(&occupied, &tests.records, &census.records, &lines.records)?;
    let map = EncodingMap::fit(&merged.prediction);
    let labeled = map.apply(&merged.labeled)?;
    let prediction = map.apply(&merged.prediction)?;

    io::write_matrix(&run.output(LABELED_CSV), &labeled)?;
    io::write_matrix(&run.output(PREDICTION_CSV), &prediction)?;
    let mut enc = serde_json::to_string_pretty(&map).expect("encoding map serializes");
    enc.push('\n');
    io::write_text(&run.output(ENCODING_JSON), &enc)?;

    let mut all_tests = vec![0usize; occupied.len()];
    for a in merged.assignments.iter().flatten() {
        all_tests[*a] += 1;
    }
    let mut meta = CsvOut::create(
        &run.output(PARCEL_META_CSV),
        &[
            "parcel_id",
            "year_built",
            "latitude",
            "longitude",
            "residential_tests",
            "all_tests",
        ],
    )?;
    for (i, p) in occupied.iter().enumerate() {
        meta.row([
            p.parcel_id.clone(),
            fmt_opt(&p.year_built),
            fmt_opt(&p.latitude),
            fmt_opt(&p.longitude),
            merged.prediction.rows[i].residential_tests.to_string(),
            all_tests[i].to_string(),
        ])?;
    }
    meta.finish()?;

    let mut samples = CsvOut::create(
        &run.output(SAMPLES_CSV),
        &[
            "sample_id",
            "parcel_id",
            "sample_date",
            "lead_ppb",
            "source",
        ],
    )?;
    for (t, a) in tests.records.iter().zip(&merged.assignments) {
        samples.row([
            t.sample_id.clone(),
            a.map(|i| occupied[i].parcel_id.clone()).unwrap_or_default(),
            t.sample_date.format("%Y-%m-%d").to_string(),
            t.lead_ppb.to_string(),
            t.source.as_str().to_string(),
        ])?;
    }
    samples.finish()?;

    let mut un = CsvOut::create(
        &run.output(UNMATCHED_CSV),
        &["sample_id", "normalized_address", "reason"],
    )?;
    for u in &merged.unmatched {
        un.row([
            u.sample_id.as_str(),
            u.normalized_address.as_str(),
            u.reason.code(),
        ])?;
    }
    un.finish()?;

    let mut disc = CsvOut::create(&run.output(DISCARDS_CSV), &["dataset", "row", "message"])?;
    let all_discards = [
        ("parcels", &parcels.discarded),
        ("tests", &tests.discarded),
        ("census", &census.discarded),
        ("service_lines", &lines.discarded),
    ];
    for (name, list) in all_discards {
        for x in list.iter() {
            disc.row([name.to_string(), x.row.to_string(), x.message.clone()])?;
        }
    }
    disc.finish()?;

    let discards: BTreeMap<&str, usize> = all_discards.iter().map(|(n, l)| (*n, l.len())).collect();
    run.finish(summary(vec![
        ("parcels", json!(parcels.records.len())),
        ("occupied", json!(occupied.len())),
        (
            "vacant_discarded",
            json!(parcels.records.len() - occupied.len()),
        ),
        ("tests", json!(tests.records.len())),
        ("matched", json!(merged.matched_count())),
        ("unmatched", json!(merged.unmatched.len())),
        ("labeled_rows", json!(labeled.n_rows())),
        (
            "positives",
            json!(labeled
                .labels
                .as_ref()
                .map_or(0, |l| l.iter().filter(|&&y| y == 1).count())),
        ),
        ("features", json!(labeled.n_cols)),
        ("discarded_rows", json!(discards)),
    ]))
}

struct ParcelMeta {
    parcel_id: String,
    year_built: Option<i32>,
    latitude: Option<f64>,
    longitude: Option<f64>,
    residential_tests: usize,
    all_tests: usize,
}

fn read_meta(path: &Path) -> Result<Vec<ParcelMeta>> {
    let (header, rows) = io::read_table(path)?;
    let bad = |m: String| AppError::Schema {
        path: path.into(),
        message: m,
    };
    if header
        != [
            "parcel_id",
            "year_built",
            "latitude",
            "longitude",
            "residential_tests",
            "all_tests",
        ]
    {
        return Err(bad("unexpected header".into()));
    }
    fn opt<T: std::str::FromStr>(s: &str) -> std::result::Result<Option<T>, ()> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|_| ())
        }
    }
    rows.iter()
        .enumerate()
        .map(|(i, r)| {
            let e = |_| bad(format!("row {} does not parse", i + 1));
            Ok(ParcelMeta {
                parcel_id: r[0].clone(),
                year_built: opt(&r[1]).map_err(e)?,
                latitude: opt(&r[2]).map_err(e)?,
                longitude: opt(&r[3]).map_err(e)?,
                residential_tests: r[4]
                    .parse()
                    .map_err(|_| bad(format!("row {} does not parse", i + 1)))?,
                all_tests: r[5]
                    .parse()
                    .map_err(|_| bad(format!("row {} does not parse", i + 1)))?,
            })
        })
        .collect()
}

fn read_encoding(path: &Path) -> Result<EncodingMap> {
    let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| AppError::json(path, e))
}

fn write_importance(path: &Path, importance: &BTreeMap<String, f64>) -> Result<()> {
    let mut rows: Vec<(&String, &f64)> = importance.iter().collect();
    rows.sort_by(|a, b| b.1.total_cmp(a.1).then_with(|| a.0.cmp(b.0)));
    let mut out = CsvOut::create(path, &["feature", "importance"])?;
    for (f, v) in rows {
        out.row([f.clone(), fmt_f64(*v)])?;
    }
    out.finish()
}

/// Submission labels for the prediction matrix: a parcel is positive when it
/// has at least one matched residential test.
fn submission_matrix(prediction: FeatureMatrix, meta: &[ParcelMeta]) -> Result<FeatureMatrix> {
    let by_id: BTreeMap<&str, usize> = meta
        .iter()
        .map(|m| (m.parcel_id.as_str(), m.residential_tests))
        .collect();
    let labels = prediction
        .parcel_ids
        .iter()
        .map(|p| {
            by_id
                .get(p.as_str())
                .map(|&n| u8::from(n > 0))
                .ok_or_else(|| {
                    AppError::Config(format!("parcel {p} missing from {PARCEL_META_CSV}"))
                })
        })
        .collect::<Result<Vec<u8>>>()?;
    Ok(prediction.with_labels(labels)?)
}

fn train(ctx: &Context) -> Result<Value> {
    let mut run = Run::new(ctx, Command::Train)?;
    let labeled = io::read_matrix(&run.artifact(LABELED_CSV, "ingest output", "ingest")?)?;
    let prediction = io::read_matrix(&run.artifact(PREDICTION_CSV, "ingest output", "ingest")?)?;
    let meta = read_meta(&run.artifact(PARCEL_META_CSV, "ingest output", "ingest")?)?;
    let encoding = read_encoding(&run.artifact(ENCODING_JSON, "ingest output", "ingest")?)?;
    let folds = ctx.config.calibration_folds;

    let model_seed = derive_seed(ctx.seed(), streams::MODEL);
    let spec = ctx.config.model.with_seed(model_seed);
    let model = fit_calibrated(&labeled, &spec, folds, model_seed, &ctx.exec)?;
    io::write_text(
        &run.output(MODEL_JSON),
        &ModelDocument::from_model(&model, &encoding, "lead_exceedance").to_json(),
    )?;
    write_importance(&run.output(IMPORTANCE_CSV), &model.base.importance())?;

    let prop_seed = derive_seed(ctx.seed(), streams::PROPENSITY);
    let sub = submission_matrix(prediction, &meta)?;
    let prop_spec = ctx.config.propensity.with_seed(prop_seed);
    let prop_model = fit_calibrated(&sub, &prop_spec, folds, prop_seed, &ctx.exec)?;
    io::write_text(
        &run.output(PROPENSITY_MODEL_JSON),
        &ModelDocument::from_model(&prop_model, &encoding, "submission").to_json(),
    )?;
    write_importance(
        &run.output(PROPENSITY_IMPORTANCE_CSV),
        &prop_model.base.importance(),
    )?;
    let probs = prop_model.predict_probas(&sub)?;
    let mut out = CsvOut::create(&run.output(PROPENSITIES_CSV), &["parcel_id", "propensity"])?;
    for (p, v) in sub.parcel_ids.iter().zip(&probs) {
        out.row([p.clone(), fmt_f64(*v)])?;
    }
    out.finish()?;

    let train_auc =
        aquarisk_core::evaluate::auc(&model.predict_probas(&labeled)?, labeled.labels()?)?;
    run.finish(summary(vec![
        ("model", json!(spec.kind().as_str())),
        ("rows", json!(labeled.n_rows())),
        (
            "calibration",
            json!({"a": model.calibration.a, "b": model.calibration.b}),
        ),
        ("train_auc", json!(train_auc)),
        ("propensity_model", json!(prop_spec.kind().as_str())),
        (
            "submitting_parcels",
            json!(sub.labels()?.iter().filter(|&&y| y == 1).count()),
        ),
    ]))
}

fn evaluate(ctx: &Context) -> Result<Value> {
    let mut run = Run::new(ctx, Command::Evaluate)?;
    let labeled = io::read_matrix(&run.artifact(LABELED_CSV, "ingest output", "ingest")?)?;
    let ev = &ctx.config.evaluate;
    let seed = derive_seed(ctx.seed(), streams::EVALUATE);
    let spec = ctx.config.model.clone();
    let primary = Metric::parse(&ev.metric)?;
    let mut metrics = vec![Metric::Auc, Metric::Recall, Metric::Accuracy];
    if !metrics.contains(&primary) {
        metrics.push(primary);
    }
    let reports = cross_validate_many(
        &labeled, &spec, &metrics, ev.folds, ev.runs, seed, &ctx.exec,
    )?;

    let mut cv = CsvOut::create(&run.output(CV_REPORT_CSV), &["metric", "run", "value"])?;
    for r in &reports {
        for (i, v) in r.values.iter().enumerate() {
            cv.row([r.metric.as_str().to_string(), i.to_string(), fmt_f64(*v)])?;
        }
    }
    cv.finish()?;

    // pooled out-of-fold scores from run 0's partition give the ROC curve
    let oof =
        aquarisk_core::calibrate::out_of_fold_scores(&labeled, &spec, ev.folds, seed, &ctx.exec)?;
    let roc = roc_auc(&oof, labeled.labels()?)?;
    let mut rc = CsvOut::create(&run.output(ROC_CSV), &["fpr", "tpr"])?;
    for (f, t) in roc.fpr.iter().zip(&roc.tpr) {
        rc.row([fmt_f64(*f), fmt_f64(*t)])?;
    }
    rc.finish()?;

    let mut s = serde_json::Map::new();
    for r in &reports {
        s.insert(format!("{}_mean", r.metric.as_str()), json!(r.mean));
        s.insert(format!("{}_sd", r.metric.as_str()), json!(r.sd));
    }
    s.insert("metric".into(), json!(primary.as_str()));
    s.insert("folds".into(), json!(ev.folds));
    s.insert("runs".into(), json!(ev.runs));
    s.insert("pooled_oof_auc".into(), json!(roc.auc));

    if ev.learning_curve {
        let lc = learning_curve(
            &labeled,
            &spec,
            primary,
            &ev.fractions,
            ev.folds,
            seed,
            &ctx.exec,
        )?;
        let mut out = CsvOut::create(
            &run.output(LEARNING_CURVE_CSV),
            &[
                "fraction",
                "train_mean",
                "train_sd",
                "validation_mean",
                "validation_sd",
            ],
        )?;
        for p in &lc.points {
            let f = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
            out.row([
                fmt_f64(p.fraction),
                f(p.train_mean),
                f(p.train_sd),
                f(p.validation_mean),
                f(p.validation_sd),
            ])?;
        }
        out.finish()?;
    }
    if !ev.grid.is_empty() {
        let gs = grid_search(
            &labeled, &spec, &ev.grid, primary, ev.folds, ev.runs, seed, &ctx.exec,
        )?;
        let names: Vec<&str> = ev.grid.keys().map(String::as_str).collect();
        let mut header = names.clone();
        header.extend(["mean", "sd", "best"]);
        let mut out = CsvOut::create(&run.output(GRID_SEARCH_CSV), &header)?;
        for (i, row) in gs.rows.iter().enumerate() {
            let mut fields: Vec<String> = row.params.iter().map(|(_, v)| fmt_f64(*v)).collect();
            fields.extend([
                fmt_f64(row.report.mean),
                fmt_f64(row.report.sd),
                u8::from(i == gs.best_index).to_string(),
            ]);
            out.row(fields)?;
        }
        out.finish()?;
        s.insert(
            "grid_best".into(),
            json!(gs
                .best()
                .params
                .iter()
                .cloned()
                .collect::<BTreeMap<String, f64>>()),
        );
    }

    let mut doc =
        serde_json::to_string_pretty(&Value::Object(s.clone())).expect("summary serializes");
    doc.push('\n');
    io::write_text(&run.output(EVALUATION_JSON), &doc)?;
    run.finish(s)
}

fn load_model(run: &Run<'_>, name: &str) -> Result<ModelDocument> {
    ModelDocument::read(&run.artifact(name, "model", "train")?)
}

fn predict(ctx: &Context) -> Result<Value> {
    let mut run = Run::new(ctx, Command::Predict)?;
    let doc = load_model(&run, MODEL_JSON)?;
    let model = doc.to_model()?;
    let prediction = io::read_matrix(&run.artifact(PREDICTION_CSV, "ingest output", "ingest")?)?;
    let thresholds = ctx.config.rank.thresholds();
    let probs = model.predict_probas(&prediction)?;
    let mut out = CsvOut::create(
        &run.output(PREDICTIONS_CSV),
        &["parcel_id", "probability", "tier"],
    )?;
    for (p, v) in prediction.parcel_ids.iter().zip(&probs) {
        out.row([p.as_str(), &fmt_f64(*v), thresholds.tier(*v).as_str()])?;
    }
    out.finish()?;
    let mean = probs.iter().sum::<f64>() / probs.len().max(1) as f64;
    run.finish(summary(vec![
        ("parcels", json!(probs.len())),
        ("mean_probability", json!(mean)),
    ]))
}

fn rank(ctx: &Context) -> Result<Value> {
    let mut run = Run::new(ctx, Command::Rank)?;
    let model = load_model(&run, MODEL_JSON)?.to_model()?;
    let prediction = io::read_matrix(&run.artifact(PREDICTION_CSV, "ingest output", "ingest")?)?;
    let meta = read_meta(&run.artifact(PARCEL_META_CSV, "ingest output", "ingest")?)?;
    let tested: BTreeSet<String> = meta
        .iter()
        .filter(|m| m.all_tests > 0)
        .map(|m| m.parcel_id.clone())
        .collect();
    let coords: BTreeMap<&str, (Option<f64>, Option<f64>)> = meta
        .iter()
        .map(|m| (m.parcel_id.as_str(), (m.latitude, m.longitude)))
        .collect();
    let r = &ctx.config.rank;
    let ranked = rank_untested(&model, &prediction, &tested, r.top_k, &r.thresholds())?;

    let mut out = CsvOut::create(
        &run.output(RANKED_CSV),
        &["rank", "parcel_id", "probability", "tier", "lat", "lon"],
    )?;
    let mut features = Vec::with_capacity(ranked.len());
    for (i, a) in ranked.iter().enumerate() {
        let (lat, lon) = coords
            .get(a.parcel_id.as_str())
            .copied()
            .unwrap_or((None, None));
        out.row([
            (i + 1).to_string(),
            a.parcel_id.clone(),
            fmt_f64(a.probability),
            a.tier.as_str().to_string(),
            fmt_opt(&lat),
            fmt_opt(&lon),
        ])?;
        let geometry = match (lat, lon) {
            (Some(lat), Some(lon)) => json!({"type": "Point", "coordinates": [lon, lat]}),
            _ => Value::Null,
        };
        features.push(json!({
            "type": "Feature",
            "geometry": geometry,
            "properties": {"rank": i + 1, "parcel_id": a.parcel_id, "probability": a.probability, "tier": a.tier.as_str()},
        }));
    }
    out.finish()?;
    let mut geo =
        serde_json::to_string(&json!({"type": "FeatureCollection", "features": features}))
            .expect("geojson serializes");
    geo.push('\n');
    io::write_text(&run.output(RANKED_GEOJSON), &geo)?;

    let mut tiers: BTreeMap<&str, usize> = BTreeMap::new();
    for a in &ranked {
        *tiers.entry(a.tier.as_str()).or_default() += 1;
    }
    run.finish(summary(vec![
        ("ranked", json!(ranked.len())),
        ("previously_tested", json!(tested.len())),
        ("tiers", json!(tiers)),
    ]))
}

fn read_samples(path: &Path) -> Result<Vec<SeriesSample>> {
    let (header, rows) = io::read_table(path)?;
    let bad = |m: String| AppError::Schema {
        path: path.into(),
        message: m,
    };
    if header
        != [
            "sample_id",
            "parcel_id",
            "sample_date",
            "lead_ppb",
            "source",
        ]
    {
        return Err(bad("unexpected header".into()));
    }
    rows.iter()
        .enumerate()
        .map(|(i, r)| {
            let e = || bad(format!("row {} does not parse", i + 1));
            Ok(SeriesSample {
                parcel_id: (!r[1].is_empty()).then(|| r[1].clone()),
                sample_date: NaiveDate::parse_from_str(&r[2], "%Y-%m-%d").map_err(|_| e())?,
                lead_ppb: r[3].parse().map_err(|_| e())?,
                source: r[4].parse().map_err(|_| e())?,
            })
        })
        .collect()
}

fn read_propensities(path: &Path) -> Result<BTreeMap<String, f64>> {
    let (header, rows) = io::read_table(path)?;
    if header != ["parcel_id", "propensity"] {
        return Err(AppError::Schema {
            path: path.into(),
            message: "unexpected header".into(),
        });
    }
    rows.iter()
        .map(|r| {
            r[1].parse::<f64>()
                .map(|p| (r[0].clone(), p))
                .map_err(|_| AppError::Schema {
                    path: path.into(),
                    message: format!("bad propensity for {}", r[0]),
                })
        })
        .collect()
}

fn series(ctx: &Context) -> Result<Value> {
    let mut run = Run::new(ctx, Command::Series)?;
    let samples = read_samples(&run.artifact(SAMPLES_CSV, "ingest output", "ingest")?)?;
    let props =
        read_propensities(&run.artifact(PROPENSITIES_CSV, "propensity model output", "train")?)?;
    let base = SeriesOptions {
        source: Some(TestSource::Residential),
        weighted: false,
        q: ctx.config.series.q,
        bootstrap: ctx.config.series.bootstrap,
        seed: derive_seed(ctx.seed(), streams::SERIES),
    };
    let variants = [
        base,
        SeriesOptions {
            weighted: true,
            ..base
        },
        SeriesOptions {
            source: Some(TestSource::Sentinel),
            ..base
        },
    ];
    let all: Vec<MonthlySeries> = variants
        .iter()
        .map(|o| monthly_p90_series(&samples, &props, o, &ctx.exec))
        .collect::<aquarisk_core::Result<_>>()?;
    let mut out = CsvOut::create(
        &run.output(SERIES_CSV),
        &[
            "month",
            "n",
            "estimate_ppb",
            "bootstrap_sd",
            "weighted",
            "source",
            "compliant",
        ],
    )?;
    for s in &all {
        for m in &s.months {
            out.row([
                m.month.to_string(),
                m.n.to_string(),
                fmt_f64(m.estimate_ppb),
                fmt_f64(m.bootstrap_sd),
                u8::from(s.weighted).to_string(),
                s.source_label().to_string(),
                u8::from(m.compliant).to_string(),
            ])?;
        }
    }
    out.finish()?;
    let shift: Vec<f64> = all[1]
        .months
        .iter()
        .zip(&all[0].months)
        .map(|(w, u)| w.estimate_ppb - u.estimate_ppb)
        .collect();
    run.finish(summary(vec![
        ("months", json!(all[0].months.len())),
        ("sentinel_months", json!(all[2].months.len())),
        (
            "mean_correction_ppb",
            json!(shift.iter().sum::<f64>() / shift.len().max(1) as f64),
        ),
    ]))
}

fn write_quartiles(path: &Path, rows: &[QuartileRow]) -> Result<()> {
    let mut out = CsvOut::create(
        path,
        &[
            "attribute",
            "bucket",
            "stratum",
            "n_parcels",
            "n_values",
            "q1",
            "median",
            "q3",
            "nonzero_share",
        ],
    )?;
    let f = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    for r in rows {
        out.row([
            r.attribute.clone(),
            r.bucket.as_str().to_string(),
            r.stratum.map_or("all", |s| s.as_str()).to_string(),
            r.n_parcels.to_string(),
            r.n_values.to_string(),
            f(r.q1),
            f(r.median),
            f(r.q3),
            f(r.nonzero_share),
        ])?;
    }
    out.finish()
}

fn quartiles(ctx: &Context) -> Result<Value> {
    let mut run = Run::new(ctx, Command::Quartiles)?;
    let prediction = io::read_matrix(&run.artifact(PREDICTION_CSV, "ingest output", "ingest")?)?;
    let meta = read_meta(&run.artifact(PARCEL_META_CSV, "ingest output", "ingest")?)?;
    let cols: Vec<usize> = QUARTILE_ATTRIBUTES
        .iter()
        .map(|a| {
            prediction
                .feature_names
                .iter()
                .position(|n| n == a)
                .ok_or_else(|| AppError::Schema {
                    path: ctx.path(PREDICTION_CSV),
                    message: format!("missing attribute column `{a}`"),
                })
        })
        .collect::<Result<_>>()?;
    let by_id: BTreeMap<&str, &ParcelMeta> =
        meta.iter().map(|m| (m.parcel_id.as_str(), m)).collect();
    let inputs: Vec<QuartileInput> = (0..prediction.n_rows())
        .map(|i| {
            let m = by_id.get(prediction.parcel_ids[i].as_str());
            QuartileInput {
                year_built: m.and_then(|m| m.year_built),
                submissions: m.map_or(0, |m| m.residential_tests),
                values: cols
                    .iter()
                    .map(|&j| Some(prediction.get(i, j)).filter(|v| !v.is_nan()))
                    .collect(),
            }
        })
        .collect();
    let names: Vec<String> = QUARTILE_ATTRIBUTES.iter().map(|s| s.to_string()).collect();
    let flat = quartile_tables(&inputs, &names, false)?;
    let strat = quartile_tables(&inputs, &names, true)?;
    write_quartiles(&run.output(QUARTILES_CSV), &flat)?;
    write_quartiles(&run.output(QUARTILES_BY_YEAR_CSV), &strat)?;
    let medians: BTreeMap<&str, Option<f64>> = flat
        .iter()
        .filter(|r| r.attribute == "building_value")
        .map(|r| (r.bucket.as_str(), r.median))
        .collect();
    run.finish(summary(vec![
        ("parcels", json!(inputs.len())),
        ("building_value_median_by_bucket", json!(medians)),
    ]))
}
