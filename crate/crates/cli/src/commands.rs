use std::fs;
use std::path::Path;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use seqpix::baselines::{BaselineTable, DEFAULT_EPSILON};
use seqpix::codec::{
    compress_dataset, decompress_dataset, fit_baseline, run_table1, BaselineMethod, BenchDataset, CenterSetting,
    CodecContainer, NeuralRow, NeuralSource, Predictor, Table1Config, CENTER_EPSILON_GRID,
};
use seqpix::dataset::{
    binarize_all, encode_pgm, load_mnist, load_usps, mnist_present, parse_idx_images, read_maybe_gzip, tile_grid,
    usps_path, write_idx_images, write_idx_labels, BinaryImage, DataSplits, GrayImage, MNIST_THRESHOLD, USPS_THRESHOLD,
};
use seqpix::model::{export_filters, sample_image, FilterKind, Model, Variant};
use seqpix::trainer::{train_with_progress, PermutationStrategy, TrainConfig};

use crate::{
    BenchArgs, BenchMethod, Command, CompressArgs, DataArgs, DatasetName, DecompressArgs, EvalArgs, FilterArg,
    FiltersArgs, IngestArgs, Method, PermArg, SampleArgs, SplitName, TrainArgs, TrainFlags, UsageError, VariantArg,
};

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Ingest(a) => cmd_ingest(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Compress(a) => cmd_compress(a),
        Command::Decompress(a) => cmd_decompress(a),
        Command::Sample(a) => cmd_sample(a),
        Command::Filters(a) => cmd_filters(a),
        Command::Bench(a) => cmd_bench(a),
    }
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn load_data(dataset: DatasetName, data_dir: Option<&Path>, seed: u64) -> Result<DataSplits> {
    let dir = data_dir.ok_or_else(|| usage("no data directory: pass --data-dir or set SEQPIX_DATA_DIR"))?;
    match dataset {
        DatasetName::Mnist => {
            if !mnist_present(dir) {
                return Err(usage(format!("MNIST IDX files not found in {}", dir.display())));
            }
            Ok(load_mnist(dir, MNIST_THRESHOLD)?)
        }
        DatasetName::Usps => {
            if usps_path(dir).is_none() {
                return Err(usage(format!("usps.txt not found in {}", dir.display())));
            }
            Ok(load_usps(dir, USPS_THRESHOLD, seed)?)
        }
    }
}

fn load_args(data: &DataArgs, seed: u64) -> Result<DataSplits> {
    load_data(data.dataset, data.data_dir.as_deref(), seed)
}

/// A model file or a baseline table file.
enum Loaded {
    Neural(Model),
    Table(BaselineTable),
}

impl Loaded {
    fn predictor(&self) -> &dyn Predictor {
        match self {
            Loaded::Neural(m) => m,
            Loaded::Table(t) => t,
        }
    }
}

fn load_predictor(path: &Path) -> Result<Loaded> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    if bytes.starts_with(b"SPPM") {
        Ok(Loaded::Neural(Model::from_bytes(&bytes).with_context(|| format!("bad model file {}", path.display()))?))
    } else {
        Ok(Loaded::Table(BaselineTable::from_bytes(&bytes).with_context(|| format!("bad model file {}", path.display()))?))
    }
}

fn load_model(path: &Path) -> Result<Model> {
    match load_predictor(path)? {
        Loaded::Neural(m) => Ok(m),
        Loaded::Table(_) => bail!("{} is a baseline table; a neural model is required", path.display()),
    }
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn to_gray(images: &[BinaryImage]) -> Vec<GrayImage> {
    images.iter().map(BinaryImage::to_gray).collect()
}

fn cmd_ingest(a: IngestArgs) -> Result<()> {
    let splits = load_args(&a.data, a.seed.seed)?;
    let name = a.data.dataset.name();
    for (split, ds) in [("train", &splits.train), ("test", &splits.test)] {
        let labels: Vec<u8> = ds.images.iter().map(|im| im.label).collect();
        write(&a.out.join(format!("{name}-{split}-images-idx3-ubyte")), &write_idx_images(&to_gray(&ds.images)))?;
        write(&a.out.join(format!("{name}-{split}-labels-idx1-ubyte")), &write_idx_labels(&labels))?;
        let ones: usize = ds.images.iter().map(BinaryImage::ones).sum();
        println!(
            "{name} {split}: {} images of {}x{}, {:.2}% pixels set",
            ds.len(),
            ds.width,
            ds.height,
            100.0 * ones as f64 / (ds.len() * ds.n_pixels()).max(1) as f64
        );
    }
    Ok(())
}

fn variant_of(v: VariantArg) -> Variant {
    match v {
        VariantArg::ROnly => Variant::R_ONLY,
        VariantArg::UvOnly => Variant::UV_ONLY,
        VariantArg::Full => Variant::FULL,
    }
}

fn train_config(flags: &TrainFlags, seed: u64) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::default();
    if let Some(path) = &flags.config {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        cfg.apply_text(&text).map_err(|e| usage(e.to_string()))?;
    }
    cfg.seed = seed;
    if let Some(h) = flags.hidden {
        cfg.hidden = h;
    }
    if let Some(v) = flags.variant {
        cfg.variant = variant_of(v);
    }
    if let Some(p) = flags.perm {
        cfg.strategy = match p {
            PermArg::PerIter => PermutationStrategy::PerIterationRandom,
            PermArg::Fixed => PermutationStrategy::FixedRandom,
            PermArg::Raster => PermutationStrategy::Raster,
        };
    }
    if let Some(l2) = flags.l2 {
        cfg.l2_lambda = l2;
    }
    if let Some(e) = flags.eta0 {
        cfg.eta0 = e;
    }
    if let Some(n) = flags.max_iterations {
        cfg.max_iterations = n;
    }
    if let Some(n) = flags.eval_every {
        cfg.eval_every = n;
    }
    if let Some(n) = flags.patience {
        cfg.patience = n;
    }
    if let Some(s) = flags.time_budget {
        cfg.time_budget = Some(Duration::try_from_secs_f64(s).map_err(|e| usage(format!("--time-budget: {e}")))?);
    }
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

fn train_neural(train: &seqpix::dataset::Dataset, cfg: &TrainConfig) -> Result<(Model, String)> {
    let (model, report) = train_with_progress(train, cfg, |p| {
        eprintln!("iter {:>9}  train {:>8.2}  val {:>8.2} bits/image", p.iteration, p.train_bits, p.val_bits)
    })?;
    if let (Some(bits), Some(it)) = (report.best_val_bits, report.best_iteration) {
        eprintln!("best validation {bits:.2} bits/image at iteration {it} of {}", report.iterations);
    }
    Ok((model, report.to_records()))
}

fn center_setting(train_len: usize, dataset: DatasetName, centers: Option<usize>, epsilon: Option<f64>) -> CenterSetting {
    match centers {
        Some(n) => CenterSetting::Fixed { n_centers: n, epsilon: epsilon.unwrap_or(0.02) },
        None => {
            let grid: &[usize] = match dataset {
                DatasetName::Usps => &[250, 500, 1000, 2000],
                DatasetName::Mnist => &[500, 1000, 2000, 4000],
            };
            let fit = train_len * 4 / 5;
            let mut n_grid: Vec<usize> = grid.iter().copied().filter(|&n| n <= fit).collect();
            if n_grid.is_empty() {
                n_grid.push((fit / 2).max(1));
            }
            let epsilon_grid = epsilon.map_or_else(|| CENTER_EPSILON_GRID.to_vec(), |e| vec![e]);
            CenterSetting::CrossValidate { n_grid, epsilon_grid }
        }
    }
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let cfg = train_config(&a.train, a.seed.seed)?;
    let splits = load_args(&a.data, a.seed.seed)?;
    let baseline = match a.method {
        Method::Neural => None,
        Method::Constant => Some(BaselineMethod::Constant),
        Method::Pixel => Some(BaselineMethod::Pixel),
        Method::Centers => Some(BaselineMethod::Centers),
        Method::Context => Some(BaselineMethod::Context),
    };
    match baseline {
        None => {
            let (model, curve) = train_neural(&splits.train, &cfg)?;
            model.save(&a.out)?;
            let curve_path = a.out.with_extension("curve.jsonl");
            write(&curve_path, curve.as_bytes())?;
            println!("wrote {} and {}", a.out.display(), curve_path.display());
        }
        Some(method) => {
            let eps = a.epsilon.unwrap_or(DEFAULT_EPSILON);
            let centers = center_setting(splits.train.len(), a.data.dataset, a.centers, a.epsilon);
            let (table, note) = fit_baseline(method, &splits.train.images, eps, &centers, a.seed.seed)?;
            table.save(&a.out)?;
            println!("wrote {} ({} {note})", a.out.display(), method.name());
        }
    }
    Ok(())
}

fn split_images(splits: DataSplits, split: SplitName) -> Vec<BinaryImage> {
    match split {
        SplitName::Train => splits.train.images,
        SplitName::Test => splits.test.images,
    }
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let images = split_images(load_args(&a.data, a.seed.seed)?, a.split);
    let pred = load_predictor(&a.model)?;
    let c = compress_dataset(pred.predictor(), &images)?;
    let n = images.len().max(1) as f64;
    let analytic = c.analytic_bits.iter().sum::<f64>() / n;
    let actual = c.actual_bits().iter().sum::<f64>() / n;
    println!("{} images: {analytic:.3} bits/image (ideal), {actual:.3} bits/image (coded)", images.len());
    Ok(())
}

fn cmd_compress(a: CompressArgs) -> Result<()> {
    let mut images = match (&a.images, a.dataset) {
        (Some(path), _) => {
            let bytes = read_maybe_gzip(path)?;
            binarize_all(&parse_idx_images(&bytes)?, MNIST_THRESHOLD)
        }
        (None, Some(ds)) => split_images(load_data(ds, a.data_dir.as_deref(), a.seed.seed)?, a.split),
        (None, None) => return Err(usage("pass --dataset or --images")),
    };
    if let Some(n) = a.limit {
        images.truncate(n);
    }
    let pred = load_predictor(&a.model)?;
    let c = compress_dataset(pred.predictor(), &images)?;
    let bytes = c.container.to_bytes();
    write(&a.out, &bytes)?;
    println!("{} images -> {} bytes", images.len(), bytes.len());
    Ok(())
}

fn cmd_decompress(a: DecompressArgs) -> Result<()> {
    let pred = load_predictor(&a.model)?;
    let bytes = fs::read(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let container = CodecContainer::from_bytes(&bytes)?;
    let images = decompress_dataset(&container, pred.predictor())?;
    write(&a.out, &write_idx_images(&to_gray(&images)))?;
    println!("{} images -> {}", images.len(), a.out.display());
    Ok(())
}

fn grid_cols(count: usize, cols: Option<usize>) -> usize {
    cols.unwrap_or_else(|| (count as f64).sqrt().ceil() as usize).max(1)
}

fn cmd_sample(a: SampleArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed.seed);
    let images: Vec<GrayImage> = (0..a.count).map(|_| sample_image(&model, &mut rng).to_gray()).collect();
    write(&a.out, &encode_pgm(&tile_grid(&images, grid_cols(a.count, a.cols))))?;
    println!("{} samples -> {}", a.count, a.out.display());
    Ok(())
}

fn cmd_filters(a: FiltersArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let kind = match a.kind {
        FilterArg::U => FilterKind::U,
        FilterArg::V => FilterKind::V,
        FilterArg::R => FilterKind::R,
    };
    let mut filters = export_filters(&model, kind);
    filters.truncate(a.limit);
    write(&a.out, &encode_pgm(&tile_grid(&filters, grid_cols(filters.len(), None))))?;
    println!("{} filters -> {}", filters.len(), a.out.display());
    Ok(())
}

fn neural_label(m: BenchMethod) -> Option<(&'static str, Variant)> {
    match m {
        BenchMethod::ROnly => Some(("r_only", Variant::R_ONLY)),
        BenchMethod::UvOnly => Some(("uv_only", Variant::UV_ONLY)),
        BenchMethod::Full => Some(("full", Variant::FULL)),
        _ => None,
    }
}

fn cmd_bench(a: BenchArgs) -> Result<()> {
    let mut pretrained = Vec::new();
    for spec in &a.models {
        let (key, path) = spec.split_once('=').ok_or_else(|| usage(format!("--model expects dataset:label=path, got {spec}")))?;
        let (ds, label) = key.split_once(':').ok_or_else(|| usage(format!("--model expects dataset:label=path, got {spec}")))?;
        pretrained.push((ds.to_string(), label.to_string(), load_model(Path::new(path))?));
    }
    let base_cfg = train_config(&a.train, a.seed.seed)?;
    let baselines: Vec<BaselineMethod> = a
        .methods
        .iter()
        .filter_map(|m| match m {
            BenchMethod::Constant => Some(BaselineMethod::Constant),
            BenchMethod::Pixel => Some(BaselineMethod::Pixel),
            BenchMethod::Centers => Some(BaselineMethod::Centers),
            BenchMethod::Context => Some(BaselineMethod::Context),
            _ => None,
        })
        .collect();

    let mut datasets = Vec::new();
    for &ds in &a.dataset {
        let splits = load_data(ds, a.data_dir.as_deref(), a.seed.seed)?;
        let mut neural = Vec::new();
        for (label, variant) in a.methods.iter().filter_map(|&m| neural_label(m)) {
            let source = match pretrained.iter().find(|(d, l, _)| d == ds.name() && l == label) {
                Some((_, _, m)) => NeuralSource::Trained(m.clone()),
                None => {
                    let secs = a.train_budget.ok_or_else(|| {
                        usage(format!("no model for {}:{label}; pass --model {}:{label}=PATH or --train-budget", ds.name(), ds.name()))
                    })?;
                    let mut cfg = base_cfg.clone();
                    cfg.variant = variant;
                    cfg.time_budget = Some(Duration::try_from_secs_f64(secs).map_err(|e| anyhow!("--train-budget: {e}"))?);
                    NeuralSource::Train(cfg)
                }
            };
            neural.push(NeuralRow { label: label.into(), source });
        }
        let centers = center_setting(splits.train.len(), ds, a.centers, a.epsilon);
        datasets.push(BenchDataset { name: ds.name().into(), splits, centers, neural });
    }
    let config = Table1Config { baselines, epsilon: a.epsilon.unwrap_or(DEFAULT_EPSILON), seed: a.seed.seed };
    let report = run_table1(&datasets, &config)?;
    let text = report.to_text();
    print!("{text}");
    write(&a.out.join("table1.txt"), text.as_bytes())?;
    write(&a.out.join("table1.csv"), report.to_csv().as_bytes())?;
    if let Some(bad) = report.rows.iter().find(|r| !r.overhead_ok()) {
        bail!("coder overhead bound violated for {} on {}", bad.method, bad.dataset);
    }
    Ok(())
}
