use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use langdaug::energy::{load_energy, save_energy, EnergyParams};
use langdaug::experiment::{params_only, run_dg_experiment, train_domain_ebms};
use langdaug::io::sha256_hex;
use langdaug::langevin::LangevinConfig;
use langdaug::numerics::derive_stream;
use langdaug::pca::pca_project;
use langdaug::pipeline::{default_hook_for, generate_augmented, load_augmented, save_augmented, AugmentedDataset};
use langdaug::seg::{
    evaluate, mean_dice_by_method, per_sample_csv, results_csv, train_segmenter, EvalResult, Method, SegArch,
    SegModel,
};
use langdaug::synth::{generate_benchmark, generate_vector_glm, identity, load_benchmark, save_benchmark, MultiDomainDataset};
use langdaug::theory::{
    coverage_csv, coverage_study, rademacher_study, taylor_remainder_scan, ScoredData,
};
use langdaug::{Error, Result};

use crate::config::ExperimentConfig;
use crate::run_dir::RunDir;

const BENCHMARK: &str = "data/benchmark";
const EBM_DIR: &str = "train-ebms";
const AUG_DIR: &str = "augment";

fn config_checksum(cfg: &ExperimentConfig) -> Result<String> {
    Ok(sha256_hex(serde_json::to_string(cfg)?.as_bytes()))
}

fn benchmark_base(root: &Path) -> PathBuf {
    root.join("gen-data").join(BENCHMARK)
}

fn load_data(run: &mut RunDir) -> Result<MultiDomainDataset> {
    let base = benchmark_base(&run.root);
    for suffix in [".ldtn", ".mask.ldtn", ".meta.json"] {
        run.input(&langdaug::io::with_suffix(&base, suffix))?;
    }
    load_benchmark(&base)
}

fn ebm_path(root: &Path, i: usize, j: usize) -> PathBuf {
    root.join(EBM_DIR).join(format!("ebm_{i}_{j}"))
}

fn load_ebms(run: &mut RunDir, domains: &[usize]) -> Result<BTreeMap<(usize, usize), EnergyParams>> {
    let mut out = BTreeMap::new();
    for &i in domains {
        for &j in domains {
            if i == j {
                continue;
            }
            let base = ebm_path(&run.root, i, j);
            run.input(&base.with_extension("ldtn"))?;
            run.input(&base.with_extension("meta.json"))?;
            let (params, pair) = load_energy(&base)?;
            if pair != (i, j) {
                return Err(Error::Format(format!("{} holds pair {pair:?}", base.display())));
            }
            out.insert((i, j), params);
        }
    }
    Ok(out)
}

fn domains(cfg: &ExperimentConfig, data: &MultiDomainDataset) -> Vec<usize> {
    cfg.augment.domains.clone().unwrap_or_else(|| (0..data.n_domains()).collect())
}

/// Augmentation sampler with the channel hook filled in for colour images.
fn aug_langevin(cfg: &ExperimentConfig, data: &MultiDomainDataset) -> LangevinConfig {
    let mut ld = cfg.langevin.clone();
    if ld.hook.is_none() {
        ld.hook = default_hook_for(data.image_shape().last().copied().unwrap_or(1));
    }
    ld
}

pub fn gen_data(cfg: &ExperimentConfig, root: &Path) -> Result<()> {
    let mut run = RunDir::create(root, "gen-data", cfg)?;
    let data = generate_benchmark(&cfg.data.benchmark(cfg.base_seed))?;
    let base = run.dir.join(BENCHMARK);
    save_benchmark(&data, &base)?;
    for suffix in [".ldtn", ".mask.ldtn", ".meta.json"] {
        run.output(langdaug::io::with_suffix(&base, suffix));
    }
    run.log(&format!("{} domains, counts {:?}", data.n_domains(), data.counts()))?;
    run.finish()
}

pub fn train_ebms(cfg: &ExperimentConfig, root: &Path) -> Result<()> {
    let mut run = RunDir::create(root, EBM_DIR, cfg)?;
    let data = load_data(&mut run)?;
    let doms = domains(cfg, &data);
    let arch = cfg.ebm.arch(&data.image_shape());
    let models = train_domain_ebms(&data, &doms, &arch, &cfg.ebm.cd(cfg.base_seed))?;
    for (&(i, j), (params, trace)) in &models {
        let base = ebm_path(root, i, j);
        save_energy(params, (i, j), &base)?;
        run.output(base.with_extension("ldtn"));
        run.output(base.with_extension("meta.json"));
        run.write(&format!("trace_{i}_{j}.csv"), &trace.to_csv())?;
    }
    run.log(&format!("trained {} pairs", models.len()))?;
    run.finish()
}

pub fn augment(cfg: &ExperimentConfig, root: &Path) -> Result<()> {
    let mut run = RunDir::create(root, AUG_DIR, cfg)?;
    let data = load_data(&mut run)?;
    let doms = domains(cfg, &data);
    let ebms = load_ebms(&mut run, &doms)?;
    let aug = generate_augmented(&data, &doms, &ebms, &aug_langevin(cfg, &data), cfg.base_seed)?;
    save_augmented(&aug, &run.dir.join("data"))?;
    let aug_dir = run.dir.join("data");
    register_dir(&mut run, &aug_dir)?;
    let mut counts = String::from("source,target,step,count\n");
    for ((i, j, k), c) in aug.counts() {
        let _ = writeln!(counts, "{i},{j},{k},{c}");
    }
    run.write("counts.csv", &counts)?;
    run.log(&format!("{} entries, {} chains skipped", aug.len(), aug.skipped_chains))?;
    run.finish()
}

fn register_dir(run: &mut RunDir, dir: &Path) -> Result<()> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<std::io::Result<_>>()?;
    files.sort();
    for f in files {
        run.output(f);
    }
    Ok(())
}

fn load_aug(run: &mut RunDir) -> Result<AugmentedDataset> {
    let dir = run.root.join(AUG_DIR).join("data");
    let meta = dir.join(langdaug::pipeline::AUG_MANIFEST);
    run.input(&meta)?;
    let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    files.sort();
    for f in files.iter().filter(|f| f.extension().is_some_and(|e| e == "ldtn")) {
        run.input(f)?;
    }
    load_augmented(&dir)
}

/// Train on the training splits of every domain and score each domain's
/// test split. Adds augmented rows when an augmentation run exists.
pub fn train_seg(cfg: &ExperimentConfig, root: &Path) -> Result<()> {
    let mut run = RunDir::create(root, "train-seg", cfg)?;
    let data = load_data(&mut run)?;
    let aug = if root.join(AUG_DIR).join("data").is_dir() {
        Some(load_aug(&mut run)?)
    } else {
        run.log("no augmentation run found; ERM only")?;
        None
    };
    let arch = SegArch::new(&data.image_shape())?;
    let data = &data;
    let source: Vec<_> = (0..data.n_domains())
        .flat_map(|d| data.split[d].train.iter().map(move |&i| (&data.images[d][i], &data.masks[d][i])))
        .collect();
    let augmented: Vec<_> = aug
        .iter()
        .flat_map(|a| a.entries.iter().map(|e| (&e.image, &e.mask)))
        .collect();
    let checksum = config_checksum(cfg)?;
    let mut methods = vec![Method::Erm];
    if aug.is_some() {
        methods.push(Method::LangDaug);
    }
    let mut results = Vec::new();
    for &method in &methods {
        for &seed in &cfg.segmenter.seeds {
            let init_seed = derive_stream(seed, &[("seg-train", 0)]).next_u64();
            let pool = if method == Method::LangDaug { &augmented[..] } else { &[][..] };
            let model = train_segmenter(SegModel::init(arch.clone(), init_seed), &source, pool, &cfg.segmenter.seg, init_seed)?;
            for d in 0..data.n_domains() {
                let imgs: Vec<_> = data.split[d].test.iter().map(|&i| data.images[d][i].clone()).collect();
                let masks: Vec<_> = data.split[d].test.iter().map(|&i| data.masks[d][i].clone()).collect();
                let (dice, iou) = evaluate(&model, &imgs, &masks, cfg.segmenter.seg.threshold)?;
                results.push(EvalResult {
                    fold: d,
                    method,
                    seed,
                    mean_dice: langdaug::numerics::mean(&dice),
                    mean_iou: langdaug::numerics::mean(&iou),
                    dice,
                    iou,
                    config_checksum: checksum.clone(),
                });
            }
        }
    }
    results.sort_by_key(|r| (r.fold, r.method, r.seed));
    run.write("results.csv", &results_csv(&results))?;
    run.write("per_sample.csv", &per_sample_csv(&results))?;
    run.finish()
}

pub fn eval_loo(cfg: &ExperimentConfig, root: &Path) -> Result<()> {
    let mut run = RunDir::create(root, "eval-loo", cfg)?;
    let data = load_data(&mut run)?;
    let all: Vec<usize> = (0..data.n_domains()).collect();
    let ebms = if cfg.segmenter.with_augmentation {
        load_ebms(&mut run, &all)?
    } else {
        BTreeMap::new()
    };
    let results = run_dg_experiment(
        &data,
        &ebms,
        &aug_langevin(cfg, &data),
        &cfg.segmenter,
        cfg.base_seed,
        &config_checksum(cfg)?,
    )?;
    run.write("results.csv", &results_csv(&results))?;
    run.write("per_sample.csv", &per_sample_csv(&results))?;
    run.write_json("summary.json", &method_summary(&results))?;
    run.finish()
}

fn method_summary(results: &[EvalResult]) -> BTreeMap<&'static str, f64> {
    mean_dice_by_method(results).into_iter().map(|(m, v)| (m.name(), v)).collect()
}

pub fn verify_theory(cfg: &ExperimentConfig, root: &Path) -> Result<()> {
    let mut run = RunDir::create(root, "verify-theory", cfg)?;
    let th = &cfg.theory;
    let d = th.theta.len();
    let glm = generate_vector_glm(th.k, &vec![0.0; d], &identity(d), &th.theta, th.family, cfg.base_seed)?;
    let data = ScoredData::from_glm(&glm);
    let mut report = taylor_remainder_scan(&th.theta, &data, th.family, &th.scan_config(cfg.base_seed))?;
    report.rademacher = rademacher_study(&th.rademacher, cfg.base_seed)?;
    let coverage = coverage_study(&th.coverage, cfg.base_seed)?;
    report.bound = coverage.first().map(|c| c.inputs.clone());
    run.write("report.csv", &report.to_csv())?;
    let mut rad = String::from("k,ambient_dim,rank,rho_hat,gamma,C,estimate,stderr,bound,unit_estimate\n");
    for r in &report.rademacher {
        let _ = writeln!(
            rad,
            "{},{},{},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            r.k, r.ambient_dim, r.rank, r.rho_hat, r.gamma, r.c, r.estimate, r.stderr, r.bound, r.unit_estimate
        );
    }
    run.write("rademacher.csv", &rad)?;
    run.write("coverage.csv", &coverage_csv(&coverage))?;
    let mut summary = report.summary_json();
    summary["decomposition_holds"] = report.decomposition_holds().into();
    summary["coverage"] = serde_json::json!({
        "replicates": coverage.len(),
        "covered": coverage.iter().filter(|c| c.covered()).count(),
        "delta": th.coverage.delta,
    });
    run.write_json("summary.json", &summary)?;
    run.finish()
}

pub const SWEEP_CSV_HEADER: &str = "axis,value,fold,method,seed,mean_dice,mean_iou";
pub const SWEEP_SUMMARY_HEADER: &str = "axis,value,erm_mean_dice,langdaug_mean_dice,delta";

pub fn sweep(cfg: &ExperimentConfig, root: &Path) -> Result<()> {
    let mut run = RunDir::create(root, "sweep", cfg)?;
    let data = load_data(&mut run)?;
    let all: Vec<usize> = (0..data.n_domains()).collect();
    let axis = cfg.sweep.axis;
    let mut rows = format!("{SWEEP_CSV_HEADER}\n");
    let mut summary = format!("{SWEEP_SUMMARY_HEADER}\n");
    let mut shared = None;
    for &v in &cfg.sweep.values {
        let c = cfg.with_sweep_value(v)?;
        let ebms = match (&shared, axis.retrains()) {
            (Some(e), false) => BTreeMap::clone(e),
            _ => {
                let arch = c.ebm.arch(&data.image_shape());
                params_only(&train_domain_ebms(&data, &all, &arch, &c.ebm.cd(c.base_seed))?)
            }
        };
        let results = run_dg_experiment(&data, &ebms, &aug_langevin(&c, &data), &c.segmenter, c.base_seed, &config_checksum(&c)?)?;
        shared = Some(ebms);
        for line in results_csv(&results).lines().skip(1) {
            let _ = writeln!(rows, "{},{v},{line}", axis.name());
        }
        let m = mean_dice_by_method(&results);
        let erm = m.get(&Method::Erm).copied().unwrap_or(f64::NAN);
        let ld = m.get(&Method::LangDaug).copied().unwrap_or(f64::NAN);
        let _ = writeln!(summary, "{},{v},{erm},{ld},{}", axis.name(), ld - erm);
        run.log(&format!("{} = {v}: erm {erm:.4}, langdaug {ld:.4}", axis.name()))?;
    }
    run.write("sweep.csv", &rows)?;
    run.write("sweep_summary.csv", &summary)?;
    run.finish()
}

pub const COORDS_CSV_HEADER: &str = "kind,index,source,target,step,pc1,pc2";
pub const CENTROID_CSV_HEADER: &str = "source,target,step,dist_source,dist_target,t";

fn centroid(points: &[&[f64]]) -> Vec<f64> {
    let n = points.len() as f64;
    let mut c = vec![0.0; points.first().map_or(0, |p| p.len())];
    for p in points {
        c.iter_mut().zip(*p).for_each(|(a, b)| *a += b / n);
    }
    c
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// PCA coordinates of every source image and augmented sample, plus each
/// `(i, j, k)` centroid's distances to the domain centroids and its
/// position `t` along the segment from domain `i` to domain `j`.
pub fn project(cfg: &ExperimentConfig, root: &Path) -> Result<()> {
    let mut run = RunDir::create(root, "project", cfg)?;
    let data = load_data(&mut run)?;
    let aug = load_aug(&mut run)?;
    let mut tags = Vec::new();
    let mut vectors = Vec::new();
    for d in 0..data.n_domains() {
        for (i, img) in data.images[d].iter().enumerate() {
            tags.push(("source", i, d, d, 0));
            vectors.push(img.data.clone());
        }
    }
    for (i, e) in aug.entries.iter().enumerate() {
        tags.push(("aug", i, e.source, e.target, e.step));
        vectors.push(e.image.data.clone());
    }
    let proj = pca_project(&vectors, 2)?;
    let mut coords = format!("{COORDS_CSV_HEADER}\n");
    for (t, c) in tags.iter().zip(&proj.coords) {
        let pc2 = c.get(1).copied().unwrap_or(0.0);
        let _ = writeln!(coords, "{},{},{},{},{},{:e},{:e}", t.0, t.1, t.2, t.3, t.4, c[0], pc2);
    }
    run.write("coords.csv", &coords)?;

    let mut groups: BTreeMap<(usize, usize, usize), Vec<&[f64]>> = BTreeMap::new();
    let mut domain_pts: BTreeMap<usize, Vec<&[f64]>> = BTreeMap::new();
    for (t, c) in tags.iter().zip(&proj.coords) {
        if t.0 == "source" {
            domain_pts.entry(t.2).or_default().push(c);
        } else {
            groups.entry((t.2, t.3, t.4)).or_default().push(c);
        }
    }
    let dc: BTreeMap<usize, Vec<f64>> = domain_pts.iter().map(|(d, p)| (*d, centroid(p))).collect();
    let mut report = format!("{CENTROID_CSV_HEADER}\n");
    for ((i, j, k), pts) in &groups {
        let a = centroid(pts);
        let (ci, cj) = (&dc[i], &dc[j]);
        let seg: Vec<f64> = cj.iter().zip(ci).map(|(x, y)| x - y).collect();
        let len2: f64 = seg.iter().map(|v| v * v).sum();
        let t: f64 = a.iter().zip(ci).zip(&seg).map(|((p, c), s)| (p - c) * s).sum::<f64>() / len2.max(1e-300);
        let _ = writeln!(report, "{i},{j},{k},{:e},{:e},{:e}", dist(&a, ci), dist(&a, cj), t);
    }
    run.write("centroids.csv", &report)?;
    run.write_json(
        "pca.json",
        &serde_json::json!({ "explained_variance": proj.explained_variance, "dim": proj.dim() }),
    )?;
    run.finish()
}
