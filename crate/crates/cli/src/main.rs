use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::json;

use une_core::editing::{direction_from_probe, edit_rows_to_intensity, orthogonalize_many, SemanticDirection};
use une_core::gaussianity::{projection_battery, BatteryConfig};
use une_core::latent_store::lat1::{load_latents, save_latents, save_matrix};
use une_core::latent_store::{sha256_file, split, AttributeTable, DatasetManifest, LatentMatrix};
use une_core::probing::{load_probe, probe_all, save_probe, LinearProbe, ProbeConfig};
use une_core::report::{metric_rows, rows_to_csv, ReportEnvelope};
use une_core::shared_space::{
    gcca_fit, random_subset, save_shared, shared_preset, shared_probe_curve, spearman_structure, GccaConfig,
    DEFAULT_RANK_TOL,
};
use une_core::synthetic::{build_oracle, control_distribution, ControlKind, OracleConfig, OracleDataset};
use une_core::transfer::{evaluate_transfer, fit_ridge_map, normal_equation_residual};
use une_core::UneError;

#[derive(Parser)]
#[command(name = "une", version, about = "Gaussianity tests, probes, maps and shared spaces for latent matrices")]
struct Cli {
    /// Base directory for every relative input and output path.
    #[arg(long, global = true, default_value = ".")]
    workdir: PathBuf,

    /// Caps the number of worker threads.
    #[arg(long, global = true, env = "UNE_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset with known ground truth.
    Simulate(SimulateArgs),
    /// Random-projection normality battery on one latent matrix.
    Gaussianity(GaussianityArgs),
    /// Fit and evaluate linear attribute probes.
    Probe(ProbeArgs),
    /// Fit a ridge map between two latent spaces.
    Transfer(TransferArgs),
    /// Fit a shared space across several views.
    Shared(SharedArgs),
    /// Compare retrieval structure across spaces.
    Retrieval(RetrievalArgs),
    /// Move latents along a probe direction.
    Edit(EditArgs),
    /// Collect report JSON files into one table.
    Report(ReportArgs),
}

#[derive(clap::Args, Serialize)]
struct SimulateArgs {
    #[arg(long, default_value = "oracle-default")]
    preset: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    une_dim: Option<usize>,
    /// Comma-separated view widths.
    #[arg(long, value_delimiter = ',')]
    view_dims: Option<Vec<usize>>,
    #[arg(long)]
    attributes: Option<usize>,
    #[arg(long)]
    orthonormal: bool,
    /// Also write a control distribution, e.g. `delta`, `uniform_lowdim:5`, `bimodal:4`.
    #[arg(long)]
    control: Vec<String>,
    /// Width of the control matrices.
    #[arg(long, default_value_t = 64)]
    control_dim: usize,
}

#[derive(clap::Args, Serialize)]
struct GaussianityArgs {
    #[arg(long)]
    latents: PathBuf,
    #[arg(long, default_value_t = 5000)]
    projections: usize,
    #[arg(long, default_value_t = 250)]
    subset: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Draw a fresh subset for every projection.
    #[arg(long)]
    resample_subset: bool,
    #[arg(long)]
    out: PathBuf,
}

/// Latents and labels given either as explicit files or through a manifest.
#[derive(clap::Args, Serialize, Clone)]
struct SplitInputs {
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long)]
    attrs: Option<PathBuf>,
    #[arg(long)]
    test_attrs: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
}

#[derive(clap::Args, Serialize)]
struct ProbeArgs {
    #[command(flatten)]
    inputs: SplitInputs,
    #[arg(long)]
    pca_k: Option<usize>,
    /// L2 penalty; defaults to 1/n_train.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, default_value_t = 100)]
    max_iters: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    save_probe: Option<PathBuf>,
}

#[derive(clap::Args, Serialize)]
struct TransferArgs {
    /// Source latents used to fit the map.
    #[arg(long)]
    src: Option<PathBuf>,
    /// Target latents used to fit the map, row-aligned with `--src`.
    #[arg(long)]
    dst: Option<PathBuf>,
    #[arg(long)]
    src_test: Option<PathBuf>,
    #[arg(long)]
    dst_test: Option<PathBuf>,
    /// Labels for the evaluation rows.
    #[arg(long)]
    test_attrs: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    src_model: Option<String>,
    #[arg(long)]
    dst_model: Option<String>,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Probe trained on the target space.
    #[arg(long)]
    probe: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Directory for `weights.lat1` and `bias.lat1`.
    #[arg(long)]
    save_map: Option<PathBuf>,
}

#[derive(clap::Args, Serialize)]
struct SharedArgs {
    /// Comma-separated training views, row-aligned.
    #[arg(long, value_delimiter = ',', required = true)]
    views: Vec<PathBuf>,
    #[arg(long)]
    k: usize,
    /// Named group of models; the number of views must match it.
    #[arg(long)]
    preset: Option<String>,
    /// Ridge penalty per view, or one for all.
    #[arg(long, value_delimiter = ',')]
    lambda: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    alternations: usize,
    #[arg(long, default_value_t = DEFAULT_RANK_TOL)]
    rank_tol: f64,
    /// Output directory for the fitted space.
    #[arg(long)]
    out: PathBuf,
    /// Report path; defaults to `report.json` inside `--out`.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Probe-accuracy curve over these k (needs the test views and both label files).
    #[arg(long, value_delimiter = ',')]
    curve: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    test_views: Vec<PathBuf>,
    #[arg(long)]
    attrs: Option<PathBuf>,
    #[arg(long)]
    test_attrs: Option<PathBuf>,
}

#[derive(clap::Args, Serialize)]
struct RetrievalArgs {
    /// Comma-separated row-aligned latent matrices.
    #[arg(long, value_delimiter = ',', required = true)]
    spaces: Vec<PathBuf>,
    #[arg(long, default_value_t = 10_000)]
    subset_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args, Serialize)]
struct EditArgs {
    #[arg(long)]
    latents: PathBuf,
    #[arg(long)]
    probe: PathBuf,
    /// Latents the probe was trained on; sets the margin scale.
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    attr: String,
    /// Target intensities in units of the training margin spread.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    intensity: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    orth_against: Vec<String>,
    /// Edited rows, one block of all inputs per intensity.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    log: PathBuf,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Csv,
    Json,
}

#[derive(clap::Args, Serialize)]
struct ReportArgs {
    #[arg(long, num_args = 1.., required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Defaults to standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Data(UneError),
}

impl From<UneError> for Failure {
    fn from(e: UneError) -> Self {
        Failure::Data(e)
    }
}

type CmdResult<T = ()> = Result<T, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

struct Ctx {
    workdir: PathBuf,
}

impl Ctx {
    fn path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.workdir.join(p)
        }
    }

    fn mkdir(&self, p: &Path) -> CmdResult<PathBuf> {
        let p = self.path(p);
        fs::create_dir_all(&p).map_err(|e| UneError::io(&p, e))?;
        Ok(p)
    }

    fn write(&self, p: &Path, text: &str) -> CmdResult {
        let p = self.path(p);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).map_err(|e| UneError::io(parent, e))?;
        }
        fs::write(&p, text).map_err(|e| UneError::io(&p, e))?;
        Ok(())
    }
}

/// Builds the envelope and records the checksum of every input, keyed by the
/// path as given on the command line.
fn envelope(
    command: &str,
    config: impl Serialize,
    seed: Option<u64>,
    result: impl Serialize,
    inputs: &[(String, PathBuf)],
) -> CmdResult<ReportEnvelope> {
    let mut env = ReportEnvelope::new(command, config, seed, result)?;
    for (label, path) in inputs {
        env = env.with_input(label.clone(), sha256_file(path)?);
    }
    Ok(env)
}

fn model_of(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("une: UNE_THREADS must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("une: cannot size thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    let ctx = Ctx { workdir: cli.workdir };
    let outcome = match cli.command {
        Command::Simulate(a) => simulate(&ctx, a),
        Command::Gaussianity(a) => gaussianity(&ctx, a),
        Command::Probe(a) => probe(&ctx, a),
        Command::Transfer(a) => transfer(&ctx, a),
        Command::Shared(a) => shared(&ctx, a),
        Command::Retrieval(a) => retrieval(&ctx, a),
        Command::Edit(a) => edit(&ctx, a),
        Command::Report(a) => report(&ctx, a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("une: {msg}");
            eprintln!("Run `une --help` for usage.");
            ExitCode::from(2)
        }
        Err(Failure::Data(e)) => {
            eprintln!("une: {e}");
            ExitCode::from(1)
        }
    }
}

fn simulate(ctx: &Ctx, a: SimulateArgs) -> CmdResult {
    if a.preset != "oracle-default" {
        return Err(usage(format!("unknown simulation preset '{}' (expected oracle-default)", a.preset)));
    }
    let mut cfg = OracleConfig::oracle_default(a.sigma, a.seed);
    if let Some(n) = a.n {
        cfg.n = n;
    }
    if let Some(d) = a.une_dim {
        cfg.une_dim = d;
    }
    if let Some(v) = &a.view_dims {
        cfg.view_dims = v.clone();
    }
    if let Some(k) = a.attributes {
        cfg.n_attributes = k;
    }
    cfg.orthonormal_mixing = a.orthonormal;
    let controls = a
        .control
        .iter()
        .map(|s| ControlKind::parse(s).map(|k| (s.clone(), k)).map_err(|e| usage(e.to_string())))
        .collect::<CmdResult<Vec<_>>>()?;

    let ds = build_oracle(&cfg)?;
    let out = ctx.mkdir(&a.out)?;
    let mut manifest = DatasetManifest {
        dataset_name: a.preset.clone(),
        models: Default::default(),
        attributes_path: Some("attributes.csv".into()),
        train_indices: ds.train_indices.clone(),
        test_indices: ds.test_indices.clone(),
        checksums: Default::default(),
    };
    save_latents(&ds.une, out.join("une.lat1"))?;
    for i in 0..ds.views.len() {
        let id = OracleDataset::view_id(i);
        let mut splits = std::collections::BTreeMap::new();
        for (name, m) in [("all", ds.views[i].clone()), ("train", ds.train_view(i)?), ("test", ds.test_view(i)?)] {
            let file = format!("{id}_{name}.lat1");
            save_latents(&m, out.join(&file))?;
            splits.insert(name.to_string(), file);
        }
        manifest.models.insert(id, splits);
    }
    ds.attributes.save_csv(out.join("attributes.csv"))?;
    ds.train_attrs()?.save_csv(out.join("attributes_train.csv"))?;
    ds.test_attrs()?.save_csv(out.join("attributes_test.csv"))?;
    manifest.record_checksums(&out)?;
    manifest.save(out.join("manifest.json"))?;
    let truth = serde_json::to_string_pretty(&ds.ground_truth()).map_err(UneError::from)? + "\n";
    fs::write(out.join("ground_truth.json"), truth).map_err(|e| UneError::io(out.join("ground_truth.json"), e))?;

    let mut control_files = Vec::new();
    for (i, (spec, kind)) in controls.into_iter().enumerate() {
        let m = control_distribution(kind, cfg.n, a.control_dim, a.seed.wrapping_add(1000 + i as u64))?;
        let file = format!("control_{}.lat1", spec.replace([':', '.'], "_"));
        save_latents(&m, out.join(&file))?;
        control_files.push(file);
    }

    let result = json!({
        "n_train": ds.train_indices.len(),
        "n_test": ds.test_indices.len(),
        "views": (0..ds.views.len()).map(OracleDataset::view_id).collect::<Vec<_>>(),
        "controls": control_files,
        "checksums": manifest.checksums,
    });
    let env = envelope("simulate", json!({ "args": a, "oracle": cfg }), Some(cfg.seed), result, &[])?;
    env.save(out.join("simulate.json"))?;
    Ok(())
}

fn gaussianity(ctx: &Ctx, a: GaussianityArgs) -> CmdResult {
    let path = ctx.path(&a.latents);
    let m = load_latents(&path)?;
    let cfg = BatteryConfig {
        n_projections: a.projections,
        subset_size: a.subset,
        seed: a.seed,
        resample_subset: a.resample_subset,
    };
    let rep = projection_battery(&m, &cfg)?;
    let config = json!({ "model": model_of(&a.latents), "args": &a });
    let env = envelope(
        "gaussianity",
        config,
        Some(a.seed),
        rep,
        &[(a.latents.display().to_string(), path)],
    )?;
    ctx.write(&a.out, &env.to_canonical_json()?)
}

/// Loaded training and test data with the files they came from.
struct Loaded {
    model: String,
    train: LatentMatrix,
    test: LatentMatrix,
    train_attrs: AttributeTable,
    test_attrs: AttributeTable,
    files: Vec<(String, PathBuf)>,
}

fn load_split_inputs(ctx: &Ctx, s: &SplitInputs) -> CmdResult<Loaded> {
    if let Some(mpath) = &s.manifest {
        let model = s
            .model
            .clone()
            .ok_or_else(|| usage("--manifest needs --model"))?;
        let (train, test, attrs, files) = load_from_manifest(ctx, mpath, &model)?;
        let (train_attrs, test_attrs) = split_attrs(&attrs, ctx, mpath)?;
        return Ok(Loaded {
            model,
            train,
            test,
            train_attrs,
            test_attrs,
            files,
        });
    }
    let (Some(train), Some(test), Some(attrs), Some(test_attrs)) = (&s.train, &s.test, &s.attrs, &s.test_attrs)
    else {
        return Err(usage("give --train, --test, --attrs and --test-attrs, or --manifest with --model"));
    };
    let paths = [train, test, attrs, test_attrs].map(|p| ctx.path(p));
    Ok(Loaded {
        model: s.model.clone().unwrap_or_else(|| model_of(train)),
        train: load_latents(&paths[0])?.with_ids(model_of(train), "train"),
        test: load_latents(&paths[1])?.with_ids(model_of(train), "test"),
        train_attrs: AttributeTable::load_csv(&paths[2])?,
        test_attrs: AttributeTable::load_csv(&paths[3])?,
        files: [train, test, attrs, test_attrs]
            .iter()
            .zip(paths)
            .map(|(p, full)| (p.display().to_string(), full))
            .collect(),
    })
}

type ManifestData = (LatentMatrix, LatentMatrix, AttributeTable, Vec<(String, PathBuf)>);

/// Train and test latents for one model, preferring explicit split files and
/// falling back to splitting the `all` file by the manifest indices.
fn load_from_manifest(ctx: &Ctx, mpath: &Path, model: &str) -> CmdResult<ManifestData> {
    let full = ctx.path(mpath);
    let manifest = DatasetManifest::load(&full)?;
    let base = full.parent().unwrap_or(Path::new(".")).to_path_buf();
    manifest.verify_files(&base)?;
    let mut files = vec![(mpath.display().to_string(), full.clone())];
    let mut load = |rel: &str| -> CmdResult<LatentMatrix> {
        let p = manifest.resolve(&base, rel);
        files.push((rel.to_string(), p.clone()));
        Ok(load_latents(&p)?)
    };
    let (train, test) = match (manifest.latent_path(model, "train"), manifest.latent_path(model, "test")) {
        (Ok(tr), Ok(te)) => (load(tr)?.with_ids(model, "train"), load(te)?.with_ids(model, "test")),
        _ => {
            let all = load(manifest.latent_path(model, "all")?)?.with_ids(model, "all");
            split(&all, &manifest)?
        }
    };
    let attrs_rel = manifest
        .attributes_path
        .clone()
        .ok_or_else(|| UneError::Manifest("manifest has no attributes_path".into()))?;
    let attrs_path = manifest.resolve(&base, &attrs_rel);
    files.push((attrs_rel, attrs_path.clone()));
    let attrs = AttributeTable::load_csv(&attrs_path)?;
    Ok((train, test, attrs, files))
}

fn split_attrs(attrs: &AttributeTable, ctx: &Ctx, mpath: &Path) -> CmdResult<(AttributeTable, AttributeTable)> {
    let manifest = DatasetManifest::load(ctx.path(mpath))?;
    Ok((
        attrs.select_rows(&manifest.train_indices)?,
        attrs.select_rows(&manifest.test_indices)?,
    ))
}

fn probe(ctx: &Ctx, a: ProbeArgs) -> CmdResult {
    let data = load_split_inputs(ctx, &a.inputs)?;
    let cfg = ProbeConfig {
        pca_k: a.pca_k,
        l2_lambda: a.lambda,
        max_iters: a.max_iters,
        ..Default::default()
    };
    let (fitted, rep) = probe_all(&data.train, &data.test, &data.train_attrs, &data.test_attrs, &cfg)?;
    if let Some(dir) = &a.save_probe {
        save_probe(&fitted, ctx.path(dir))?;
    }
    let config = json!({ "model": data.model, "args": &a, "probe": cfg });
    let env = envelope("probe", config, None, rep, &data.files)?;
    ctx.write(&a.out, &env.to_canonical_json()?)
}

fn transfer(ctx: &Ctx, a: TransferArgs) -> CmdResult {
    let mut files = Vec::new();
    let (src_train, dst_train, src_eval, dst_eval, eval_attrs, src_name, dst_name);
    if let Some(mpath) = &a.manifest {
        let (Some(sm), Some(dm)) = (&a.src_model, &a.dst_model) else {
            return Err(usage("--manifest needs --src-model and --dst-model"));
        };
        let (s_tr, s_te, attrs, f1) = load_from_manifest(ctx, mpath, sm)?;
        let (d_tr, d_te, _, f2) = load_from_manifest(ctx, mpath, dm)?;
        files.extend(f1);
        files.extend(f2);
        let (_, test_attrs) = split_attrs(&attrs, ctx, mpath)?;
        (src_train, dst_train, src_eval, dst_eval) = (s_tr, d_tr, s_te, d_te);
        eval_attrs = Some(test_attrs);
        (src_name, dst_name) = (sm.clone(), dm.clone());
    } else {
        let (Some(src), Some(dst)) = (&a.src, &a.dst) else {
            return Err(usage("give --src and --dst, or --manifest with --src-model and --dst-model"));
        };
        let mut load = |p: &PathBuf| -> CmdResult<LatentMatrix> {
            let full = ctx.path(p);
            files.push((p.display().to_string(), full.clone()));
            Ok(load_latents(&full)?)
        };
        src_train = load(src)?;
        dst_train = load(dst)?;
        match (&a.src_test, &a.dst_test) {
            (Some(s), Some(d)) => {
                src_eval = load(s)?;
                dst_eval = load(d)?;
            }
            (None, None) => {
                src_eval = src_train.clone();
                dst_eval = dst_train.clone();
            }
            _ => return Err(usage("--src-test and --dst-test go together")),
        }
        eval_attrs = match &a.test_attrs {
            Some(p) => {
                let full = ctx.path(p);
                files.push((p.display().to_string(), full.clone()));
                Some(AttributeTable::load_csv(&full)?)
            }
            None => None,
        };
        (src_name, dst_name) = (
            a.src_model.clone().unwrap_or_else(|| model_of(src)),
            a.dst_model.clone().unwrap_or_else(|| model_of(dst)),
        );
    }

    let map = fit_ridge_map(&src_train, &dst_train, a.alpha)?;
    let residual = normal_equation_residual(&src_train, &dst_train, &map);
    let evaluation = match &a.probe {
        Some(dir) => {
            let attrs = eval_attrs.ok_or_else(|| usage("--probe needs labels for the evaluation rows"))?;
            let full = ctx.path(dir);
            let sidecar = full.join(une_core::probing::PROBE_SIDECAR);
            files.push((format!("{}/{}", dir.display(), une_core::probing::PROBE_SIDECAR), sidecar));
            let dst_probe: LinearProbe = load_probe(&full)?;
            Some(evaluate_transfer(&map, &src_eval, &dst_eval, &dst_probe, &attrs)?)
        }
        None => None,
    };
    if let Some(dir) = &a.save_map {
        let dir = ctx.mkdir(dir)?;
        save_matrix(&map.weights, dir.join("weights.lat1"))?;
        save_matrix(&DMatrix::from_row_slice(1, map.bias.len(), map.bias.as_slice()), dir.join("bias.lat1"))?;
    }
    let result = json!({
        "alpha": map.alpha,
        "effective_lambda": map.effective_lambda,
        "normal_equation_residual": residual,
        "n_train": src_train.nrows(),
        "evaluation": evaluation,
    });
    let config = json!({ "src_model": src_name, "dst_model": dst_name, "args": &a });
    let env = envelope("transfer", config, None, result, &files)?;
    ctx.write(&a.out, &env.to_canonical_json()?)
}

fn load_views(ctx: &Ctx, paths: &[PathBuf], files: &mut Vec<(String, PathBuf)>, split_id: &str) -> CmdResult<Vec<LatentMatrix>> {
    paths
        .iter()
        .map(|p| {
            let full = ctx.path(p);
            files.push((p.display().to_string(), full.clone()));
            Ok(load_latents(&full)?.with_ids(model_of(p), split_id))
        })
        .collect()
}

fn shared(ctx: &Ctx, a: SharedArgs) -> CmdResult {
    let models: Vec<String> = match &a.preset {
        Some(name) => {
            let list = shared_preset(name).map_err(|e| usage(e.to_string()))?;
            if list.len() != a.views.len() {
                return Err(usage(format!(
                    "preset {name} lists {} models ({}) but {} views were given",
                    list.len(),
                    list.join(","),
                    a.views.len()
                )));
            }
            list.iter().map(|s| s.to_string()).collect()
        }
        None => a.views.iter().map(|p| model_of(p)).collect(),
    };
    let mut files = Vec::new();
    let views: Vec<LatentMatrix> = load_views(ctx, &a.views, &mut files, "train")?
        .into_iter()
        .zip(&models)
        .map(|(v, id)| v.with_ids(id.clone(), "train"))
        .collect();
    let cfg = GccaConfig {
        rank_tol: a.rank_tol,
        lambdas: a.lambda.clone(),
        alternations: a.alternations,
    };
    let space = gcca_fit(&views, a.k, &cfg)?;
    let out = ctx.mkdir(&a.out)?;
    save_shared(&space, &out)?;

    let curve = if a.curve.is_empty() {
        None
    } else {
        let (Some(tr), Some(te)) = (&a.attrs, &a.test_attrs) else {
            return Err(usage("--curve needs --attrs and --test-attrs"));
        };
        if a.test_views.len() != a.views.len() {
            return Err(usage("--curve needs one --test-views entry per view"));
        }
        let test_views = load_views(ctx, &a.test_views, &mut files, "test")?;
        let tr_full = ctx.path(tr);
        let te_full = ctx.path(te);
        files.push((tr.display().to_string(), tr_full.clone()));
        files.push((te.display().to_string(), te_full.clone()));
        Some(shared_probe_curve(
            &views,
            &test_views,
            &AttributeTable::load_csv(&tr_full)?,
            &AttributeTable::load_csv(&te_full)?,
            &a.curve,
            &cfg,
            &ProbeConfig::default(),
        )?)
    };
    let result = json!({
        "k": space.k(),
        "n_views": space.n_views(),
        "models": models,
        "eigenvalues": space.eigenvalues,
        "residual": space.residual,
        "view_residuals": space.view_residuals,
        "attained_rank": space.attained_rank,
        "curve": curve,
    });
    let config = json!({ "model": a.preset.clone().unwrap_or_else(|| models.join("+")), "args": &a, "gcca": cfg });
    let env = envelope("shared", config, None, result, &files)?;
    let report_path = a.report.clone().unwrap_or_else(|| a.out.join("report.json"));
    ctx.write(&report_path, &env.to_canonical_json()?)
}

fn retrieval(ctx: &Ctx, a: RetrievalArgs) -> CmdResult {
    let mut files = Vec::new();
    let spaces: Vec<DMatrix<f64>> = load_views(ctx, &a.spaces, &mut files, "all")?
        .into_iter()
        .map(LatentMatrix::into_data)
        .collect();
    let n = spaces[0].nrows();
    let subset = random_subset(n, a.subset_size, a.seed);
    let structure = spearman_structure(&spaces, &subset)?;
    let models: Vec<String> = a.spaces.iter().map(|p| model_of(p)).collect();
    let result = json!({ "models": models, "structure": structure });
    let config = json!({ "model": models.join("+"), "args": &a });
    let env = envelope("retrieval", config, Some(a.seed), result, &files)?;
    ctx.write(&a.out, &env.to_canonical_json()?)
}

#[derive(Serialize)]
struct DirectionSummary {
    attribute: String,
    norm: f64,
    margin_std: f64,
    orthogonal_to: Vec<String>,
}

impl DirectionSummary {
    fn of(d: &SemanticDirection) -> Self {
        Self {
            attribute: d.attribute_name.clone(),
            norm: d.w.norm(),
            margin_std: d.margin_std,
            orthogonal_to: d.orthogonal_to.clone(),
        }
    }
}

#[derive(Serialize)]
struct IntensityLog {
    intensity: f64,
    first_row: usize,
    mean_achieved: f64,
    max_abs_error: f64,
    /// Mean change in each spurious attribute's score.
    spurious_drift: Vec<(String, f64)>,
}

fn edit(ctx: &Ctx, a: EditArgs) -> CmdResult {
    let lat_path = ctx.path(&a.latents);
    let train_path = ctx.path(&a.train);
    let probe_dir = ctx.path(&a.probe);
    let latents = load_latents(&lat_path)?;
    let train = load_latents(&train_path)?;
    let probe = load_probe(&probe_dir)?;
    let target = direction_from_probe(&probe, &a.attr, &train)?;
    let spurious = a
        .orth_against
        .iter()
        .map(|name| direction_from_probe(&probe, name, &train))
        .collect::<Result<Vec<_>, _>>()?;
    let dir = if spurious.is_empty() {
        target.clone()
    } else {
        orthogonalize_many(&target, &spurious.iter().collect::<Vec<_>>(), train.data())?
    };

    let n = latents.nrows();
    let mut blocks = Vec::with_capacity(a.intensity.len());
    let mut logs = Vec::with_capacity(a.intensity.len());
    for (i, &t) in a.intensity.iter().enumerate() {
        let edited = edit_rows_to_intensity(latents.data(), &dir, t)?;
        let achieved: Vec<f64> = (0..n).map(|r| dir.intensity(&edited.row(r).transpose())).collect();
        let spurious_drift = spurious
            .iter()
            .map(|s| {
                let drift = (0..n)
                    .map(|r| s.score(&edited.row(r).transpose()) - s.score(&latents.row_vector(r)))
                    .sum::<f64>()
                    / n as f64;
                (s.attribute_name.clone(), drift)
            })
            .collect();
        logs.push(IntensityLog {
            intensity: t,
            first_row: i * n,
            mean_achieved: achieved.iter().sum::<f64>() / n as f64,
            max_abs_error: achieved.iter().map(|x| (x - t).abs()).fold(0.0, f64::max),
            spurious_drift,
        });
        blocks.push(edited);
    }
    let d = latents.ncols();
    let mut stacked = DMatrix::zeros(n * blocks.len(), d);
    for (i, b) in blocks.iter().enumerate() {
        stacked.rows_mut(i * n, n).copy_from(b);
    }
    let out = ctx.path(&a.out);
    if let Some(parent) = out.parent() {
        fs::create_dir_all(parent).map_err(|e| UneError::io(parent, e))?;
    }
    save_matrix(&stacked, &out)?;

    let result = json!({
        "rows_per_intensity": n,
        "direction": DirectionSummary::of(&dir),
        "original_direction": DirectionSummary::of(&target),
        "edits": logs,
        "output_sha256": sha256_file(&out)?,
    });
    let config = json!({ "model": model_of(&a.latents), "args": &a });
    let files = vec![
        (a.latents.display().to_string(), lat_path),
        (a.train.display().to_string(), train_path),
        (
            format!("{}/{}", a.probe.display(), une_core::probing::PROBE_SIDECAR),
            probe_dir.join(une_core::probing::PROBE_SIDECAR),
        ),
    ];
    let env = envelope("edit", config, None, result, &files)?;
    ctx.write(&a.log, &env.to_canonical_json()?)
}

fn report(ctx: &Ctx, a: ReportArgs) -> CmdResult {
    let reports = a
        .inputs
        .iter()
        .map(|p| ReportEnvelope::load(ctx.path(p)))
        .collect::<Result<Vec<_>, _>>()?;
    let text = match a.format {
        Format::Csv => rows_to_csv(&reports.iter().flat_map(metric_rows).collect::<Vec<_>>()),
        Format::Json => {
            let all: Vec<_> = reports
                .iter()
                .map(|r| json!({ "command": r.command, "model": r.model_label(), "result": r.result }))
                .collect();
            serde_json::to_string_pretty(&all).map_err(UneError::from)? + "\n"
        }
    };
    match &a.out {
        Some(p) => ctx.write(p, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
