use std::fs;
use std::io::Read;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde_json::json;
use sha2::{Digest, Sha256};
use viper_core::checkpoint::Checkpoint;
use viper_core::data::{load_split, LabeledFrame};
use viper_core::eval::{
    ablation_csv, ablation_table, load_eval_split, median_weak_iou, oracle_predictions, predict_frames,
    reports_csv, reports_table, run_ablation_suite, score, AblationData, MetricReport,
};
use viper_core::servo::{run_bench, write_trajectories, EpisodeResult, Estimator};
use viper_core::synthworld::{generate_dataset, Manifest, Split, World};
use viper_core::training::{train, write_curve_csv};
use viper_core::Domain;
use viper_service::{AppState, ServiceConfig};

use crate::error::{CliError, CliResult};
use crate::settings::Settings;

/// `(use_domain_loss, use_ft_loss)` overrides from `--flags`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LossFlags {
    pub domain: Option<bool>,
    pub ft: Option<bool>,
}

pub fn parse_loss_flags(s: &str) -> Result<LossFlags, String> {
    let mut flags = LossFlags::default();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (key, value) = part.split_once('=').ok_or_else(|| format!("expected key=on|off, got {part:?}"))?;
        let on = match value.trim() {
            "on" => true,
            "off" => false,
            other => return Err(format!("{key} must be on or off, got {other:?}")),
        };
        match key.trim() {
            "domain" => flags.domain = Some(on),
            "ft" => flags.ft = Some(on),
            other => return Err(format!("unknown loss flag {other:?}; expected domain or ft")),
        }
    }
    Ok(flags)
}

/// Scene seeds for the service.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedPool(pub Vec<u64>);

/// Accepts `1-100`, `4,9,12` or any comma-separated mix of both.
pub fn parse_seed_pool(s: &str) -> Result<SeedPool, String> {
    let mut pool = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let num = |t: &str| t.trim().parse::<u64>().map_err(|e| format!("bad seed {t:?}: {e}"));
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b) = (num(a)?, num(b)?);
                if a > b {
                    return Err(format!("empty seed range {part}"));
                }
                pool.extend(a..=b);
            }
            None => pool.push(num(part)?),
        }
    }
    if pool.is_empty() {
        return Err("seed pool is empty".into());
    }
    Ok(SeedPool(pool))
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir.display(), e))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| CliError::io(path.display(), e))
}

fn to_json<T: serde::Serialize>(value: &T) -> CliResult<String> {
    serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> CliResult<()> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::io(dir.display(), e))?;
    for entry in entries {
        let path = entry.map_err(|e| CliError::io(dir.display(), e))?.path();
        if path.is_dir() {
            collect_files(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

/// SHA-256 over every file below `root`, visited in path order, each
/// prefixed by its relative path.
pub fn dataset_checksum(root: &Path) -> CliResult<String> {
    let mut files = Vec::new();
    collect_files(root, &mut files)?;
    files.sort();
    let mut hasher = Sha256::new();
    let mut buf = Vec::new();
    for path in files {
        let rel = path.strip_prefix(root).expect("below root");
        hasher.update(rel.to_string_lossy().as_bytes());
        hasher.update([0]);
        buf.clear();
        fs::File::open(&path)
            .and_then(|mut f| f.read_to_end(&mut buf))
            .map_err(|e| CliError::io(path.display(), e))?;
        hasher.update((buf.len() as u64).to_le_bytes());
        hasher.update(&buf);
    }
    Ok(format!("{:x}", hasher.finalize()))
}

pub fn gen_data(mut s: Settings, seed: Option<u64>, out: &Path) -> CliResult<()> {
    if let Some(seed) = seed {
        s.dataset.seed = seed;
    }
    let m = generate_dataset(&s.dataset, out)?;
    println!("dataset   {}", out.display());
    println!("seed      {}   image {}x{}", m.seed, m.image_size, m.image_size);
    println!(
        "train     {} fully labeled, {} weakly labeled",
        m.counts.train_full, m.counts.train_weak
    );
    println!(
        "test      {} fully labeled, {} weakly labeled",
        m.counts.test_full, m.counts.test_weak
    );
    println!("sigma_F   {:.4} N", m.sigma_force);
    println!("sigma_T   {:.5} Nm", m.sigma_torque);
    println!("checksum  sha256:{}", dataset_checksum(out)?);
    Ok(())
}

fn load_manifest(data: &Path) -> CliResult<Manifest> {
    if !data.is_dir() {
        return Err(CliError::Runtime(format!("dataset directory {} does not exist", data.display())));
    }
    Ok(Manifest::load(data)?)
}

/// Sibling file of the checkpoint holding the loss curve.
pub fn curve_path(checkpoint: &Path) -> PathBuf {
    let mut name = checkpoint.file_stem().unwrap_or_default().to_os_string();
    name.push(".curve.csv");
    checkpoint.with_file_name(name)
}

pub fn train_cmd(mut s: Settings, seed: Option<u64>, flags: LossFlags, data: &Path, out: &Path) -> CliResult<()> {
    let manifest = load_manifest(data)?;
    let binning = manifest.binning()?;
    let cfg = &mut s.train;
    cfg.model.image_size = manifest.image_size;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(on) = flags.domain {
        cfg.weights.use_domain_loss = on;
    }
    if let Some(on) = flags.ft {
        cfg.weights.use_ft_loss = on;
    }
    cfg.validate()?;

    let full = load_split(data, &manifest, Split::Train, Domain::FullyLabeled)?;
    let weak: Vec<LabeledFrame> = if cfg.effective_n_weak() > 0 {
        load_split(data, &manifest, Split::Train, Domain::WeaklyLabeled)?
    } else {
        Vec::new()
    };
    log::info!(
        "training {} on {} full + {} weak frames for {} iterations",
        viper_core::eval::ablation_name(cfg.weights.use_domain_loss, cfg.weights.use_ft_loss),
        full.len(),
        weak.len(),
        cfg.iterations
    );
    let outcome = train(&full, &weak, cfg)?;
    let meta = json!({
        "use_domain_loss": cfg.weights.use_domain_loss,
        "use_ft_loss": cfg.weights.use_ft_loss,
        "seed": cfg.seed,
        "dataset_seed": manifest.seed,
        "train": cfg,
    });
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    Checkpoint {
        model: outcome.model,
        binning,
        iteration: outcome.iterations,
        ft_scale: outcome.ft_scale,
        meta,
    }
    .save(out)?;
    let curve = curve_path(out);
    write_curve_csv(&curve, &outcome.curve)?;
    if let Some(last) = outcome.curve.last() {
        println!(
            "final     L {:.4}   L_p {:.4}   L_ft {:.4}   L_d {:.4}",
            last.total, last.l_p, last.l_ft, last.l_d
        );
    }
    println!("checkpoint {}", out.display());
    println!("curve      {}", curve.display());
    Ok(())
}

fn eval_domains(manifest: &Manifest, split: Split) -> Vec<Domain> {
    [Domain::FullyLabeled, Domain::WeaklyLabeled]
        .into_iter()
        .filter(|&d| manifest.counts.get(split, d) > 0)
        .collect()
}

fn domain_tag(d: Domain) -> &'static str {
    match d {
        Domain::FullyLabeled => "full",
        Domain::WeaklyLabeled => "weak",
    }
}

pub fn eval_cmd(checkpoint: Option<&Path>, data: &Path, report: &Path, split: Split) -> CliResult<()> {
    let manifest = load_manifest(data)?;
    let binning = manifest.binning()?;
    let ck = match checkpoint {
        Some(path) => Some(Checkpoint::load_compatible(path, manifest.image_size, &binning)?),
        None => None,
    };
    let predictor = if ck.is_some() { "model" } else { "oracle" };
    let mut reports: Vec<(String, MetricReport)> = Vec::new();
    for domain in eval_domains(&manifest, split) {
        let frames = load_eval_split(data, &manifest, split, domain)?;
        let predictions = match &ck {
            Some(ck) => predict_frames(&ck.model, &ck.binning, &frames)?,
            None => oracle_predictions(&frames),
        };
        let name = format!("{predictor}/{}-{}", split.as_str(), domain_tag(domain));
        reports.push((name, score(&predictions, &frames)?));
    }
    if reports.is_empty() {
        return Err(CliError::Runtime(format!("the {} split is empty", split.as_str())));
    }
    create_dir(report)?;
    let table = reports_table(&reports);
    write(&report.join("metrics.csv"), reports_csv(&reports))?;
    write(&report.join("metrics.txt"), &table)?;
    let json: Vec<_> = reports.iter().map(|(n, r)| json!({"name": n, "report": r})).collect();
    write(&report.join("metrics.json"), to_json(&json)?)?;
    print!("{table}");
    println!("report    {}", report.display());
    Ok(())
}

pub fn ablate(mut s: Settings, seed: Option<u64>, data: &Path, out: &Path) -> CliResult<()> {
    let manifest = load_manifest(data)?;
    s.train.model.image_size = manifest.image_size;
    if let Some(seed) = seed {
        s.train.seed = seed;
    }
    s.train.validate()?;
    if s.ablation.runs == 0 {
        return Err(CliError::Usage("ablation.runs must be positive".into()));
    }
    let seeds: Vec<u64> = (0..s.ablation.runs as u64).map(|i| s.train.seed.wrapping_add(i)).collect();
    let train_full = load_split(data, &manifest, Split::Train, Domain::FullyLabeled)?;
    let train_weak = load_split(data, &manifest, Split::Train, Domain::WeaklyLabeled)?;
    let test_full = load_eval_split(data, &manifest, Split::Test, Domain::FullyLabeled)?;
    let test_weak = load_eval_split(data, &manifest, Split::Test, Domain::WeaklyLabeled)?;
    let suite = AblationData {
        train_full: &train_full,
        train_weak: &train_weak,
        test_full: &test_full,
        test_weak: &test_weak,
    };
    create_dir(out)?;
    let rows = run_ablation_suite(&suite, &s.train, &seeds, |r| {
        println!(
            "{:<18} seed {:<4} weak IoUc {:5.1}%  weak contact {:5.1}%",
            r.name(),
            r.seed,
            100.0 * r.weak.iou_contact,
            100.0 * r.weak.contact_accuracy
        );
    })?;
    let table = ablation_table(&rows);
    write(&out.join("ablation.csv"), ablation_csv(&rows))?;
    write(&out.join("ablation.txt"), &table)?;
    write(&out.join("rows.json"), to_json(&rows)?)?;
    print!("\n{table}");
    let medians = median_weak_iou(&rows);
    let line: Vec<String> = medians
        .iter()
        .map(|((d, f), v)| format!("{} {:.1}%", viper_core::eval::ablation_name(*d, *f), 100.0 * v))
        .collect();
    println!("median weak IoUc: {}", line.join(", "));
    println!("report    {}", out.display());
    Ok(())
}

pub fn servo_bench(
    mut s: Settings,
    seed: Option<u64>,
    checkpoint: Option<&Path>,
    trials: Option<usize>,
    report: Option<&Path>,
) -> CliResult<()> {
    if let Some(seed) = seed {
        s.bench.seed = seed;
    }
    if let Some(n) = trials {
        s.bench.trials = n;
    }
    if s.bench.trials == 0 {
        return Err(CliError::Usage("--trials must be positive".into()));
    }
    s.servo.validate()?;
    let mut world_cfg = s.dataset.world;
    let estimator = match checkpoint {
        Some(path) => {
            let ck = Checkpoint::load(path)?;
            world_cfg.image_size = ck.model.config().image_size;
            Estimator::Learned {
                model: Arc::new(ck.model),
                binning: ck.binning,
            }
        }
        None => Estimator::Oracle,
    };
    let world = Arc::new(World::new(world_cfg)?);
    let mut results: Vec<EpisodeResult> = Vec::new();
    let bench = run_bench(&world, &s.servo, &estimator, s.bench.trials, s.bench.seed, |r| {
        log::info!("episode seed {} {}: {} in {} steps", r.seed, r.object, r.success, r.steps);
        if report.is_some() {
            results.push(r.clone());
        }
    })?;
    let table = bench.table();
    print!("{table}");
    for (reason, n) in &bench.failures {
        println!("failure   {reason}: {n}");
    }
    println!("success rate {:.1}%", 100.0 * bench.success_rate());
    if let Some(dir) = report {
        create_dir(dir)?;
        write(&dir.join("bench.txt"), &table)?;
        write(&dir.join("bench.json"), to_json(&bench)?)?;
        write_trajectories(&dir.join("trajectories.jsonl"), &results)?;
        println!("report    {}", dir.display());
    }
    Ok(())
}

pub fn serve(s: Settings, addr: SocketAddr, checkpoint: Option<PathBuf>, seed_pool: SeedPool) -> CliResult<()> {
    s.servo.validate()?;
    let config = ServiceConfig {
        world: s.dataset.world,
        servo: s.servo,
        checkpoint,
        seed_pool: seed_pool.0,
        ..Default::default()
    };
    let state = AppState::new(config)?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::io("tokio runtime", e))?;
    println!("serving on http://{addr}");
    runtime
        .block_on(viper_service::serve(addr, state))
        .map_err(|e| CliError::io(addr, e))
}
