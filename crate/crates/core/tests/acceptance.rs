//! Acceptance suite. Runs every criterion in order and prints one line per
//! criterion; pass criterion numbers as arguments to run a subset.
//!
//! Criteria listed in `KNOWN_RED` are still evaluated exactly as stated and
//! reported as FAIL, but do not fail the process.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use langdaug::cd::{train_ebm, CdConfig};
use langdaug::energy::{EnergyArch, EnergyParams};
use langdaug::experiment::{params_only, run_dg_experiment, train_domain_ebms};
use langdaug::langevin::{run_chain, LangevinConfig};
use langdaug::numerics::{compare_gradients, derive_stream, finite_diff_grad_at, mean, AdamHyper, GradComparison, Tensor};
use langdaug::pipeline::generate_augmented;
use langdaug::seg::{mean_dice_by_method, results_csv, LooConfig, Method, SegArch, SegModel, SegTrainConfig};
use langdaug::synth::{generate_benchmark, generate_vector_glm, identity, BenchmarkConfig, MultiDomainDataset};
use langdaug::theory::{
    coverage_csv, coverage_study, reg_glm, reg_terms_general, rademacher_study, taylor_remainder_scan, CoverageStudy,
    GlmFamily, RademacherStudy, ScanConfig, ScanStatus, ScoredData,
};

/// Criterion 5 asks for an identity that does not hold; see the notes in
/// `criterion_5`.
const KNOWN_RED: &[u32] = &[5];

struct Outcome {
    pass: bool,
    detail: String,
    /// Deterministic artifact compared across reruns.
    csv: String,
}

fn out_dir() -> PathBuf {
    let d = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    std::fs::create_dir_all(&d).unwrap();
    d
}

// ---------------------------------------------------------------- 1

const FD_STEP: f64 = 1e-5;
const FD_FLOOR: f64 = 1e-6;
const FD_REL: f64 = 1e-4;
const FD_ABS_SMALL: f64 = 1e-8;
const MAX_FD_COORDS: usize = 96;

fn coords(n: usize, rng: &mut langdaug::numerics::RngStream) -> Vec<usize> {
    if n <= MAX_FD_COORDS {
        (0..n).collect()
    } else {
        let mut p = rng.permutation(n);
        p.truncate(MAX_FD_COORDS);
        p.sort_unstable();
        p
    }
}

fn energy_config(kind: &str, cfg: u64) -> (EnergyParams, Vec<f64>) {
    let mut rng = derive_stream(1, &[("fd-config", cfg), ("kind", kind.len() as u64)]);
    let arch = match kind {
        "conv" => {
            let s = 4 + 2 * rng.below(3);
            EnergyArch::conv(&[s, s, 1 + rng.below(3)], 1 + rng.below(2))
        }
        "mlp" => EnergyArch::mlp(2 + rng.below(10), 2 + rng.below(12)),
        "quadratic" => EnergyArch::quadratic(&[1 + rng.below(8)]),
        _ => EnergyArch::linear(&[1 + rng.below(8)]),
    };
    let mut p = EnergyParams::init(arch, rng.next_u64()).unwrap();
    p.theta.iter_mut().for_each(|t| *t += 0.3 * rng.normal());
    let x = rng.normal_vec(p.arch.input_len());
    (p, x)
}

fn criterion_1() -> Outcome {
    let n_configs = 100;
    let mut lines = Vec::new();
    let mut pass = true;
    let mut csv = String::from("arch,wrt,configs,compared,max_rel_err,max_abs_err_small\n");
    for kind in ["conv", "mlp", "quadratic", "linear"] {
        let (mut wrt_x, mut wrt_t) = (GradComparison::default(), GradComparison::default());
        for cfg in 0..n_configs {
            let (p, x) = energy_config(kind, cfg);
            let mut rng = derive_stream(2, &[("fd-coords", cfg)]);
            let cx = coords(x.len(), &mut rng);
            let gx = p.grad_input(&x).unwrap();
            let nx = finite_diff_grad_at(|v| p.energy(v).unwrap(), &x, FD_STEP, &cx).unwrap();
            let ax: Vec<f64> = cx.iter().map(|&i| gx[i]).collect();
            wrt_x.merge(compare_gradients(&ax, &nx, FD_FLOOR));
            let ct = coords(p.theta.len(), &mut rng);
            let gt = p.grad_params(&x).unwrap();
            let nt = finite_diff_grad_at(
                |t| EnergyParams::new(p.arch.clone(), t.to_vec()).unwrap().energy(&x).unwrap(),
                &p.theta,
                FD_STEP,
                &ct,
            )
            .unwrap();
            let at: Vec<f64> = ct.iter().map(|&i| gt[i]).collect();
            wrt_t.merge(compare_gradients(&at, &nt, FD_FLOOR));
        }
        for (wrt, c) in [("x", wrt_x), ("theta", wrt_t)] {
            pass &= c.passes(FD_REL, FD_ABS_SMALL);
            lines.push(format!("{kind}/{wrt} rel {:.1e}", c.max_rel_err));
            let _ = writeln!(csv, "{kind},{wrt},{n_configs},{},{:e},{:e}", c.compared, c.max_rel_err, c.max_abs_err_small);
        }
    }
    let mut seg = GradComparison::default();
    for cfg in 0..n_configs {
        let mut rng = derive_stream(3, &[("seg-config", cfg)]);
        let (h, w, c) = (3 + rng.below(4), 3 + rng.below(4), 1 + rng.below(3));
        let mut model = SegModel::init(SegArch::new(&[h, w, c]).unwrap(), rng.next_u64());
        model.theta.iter_mut().for_each(|t| *t += 0.1 * rng.normal());
        let img = Tensor::new(vec![h, w, c], (0..h * w * c).map(|_| rng.uniform()).collect()).unwrap();
        let mask = Tensor::new(vec![h, w], (0..h * w).map(|_| f64::from(u8::from(rng.uniform() < 0.4))).collect()).unwrap();
        let mut g = vec![0.0; model.theta.len()];
        model.loss_and_grad(&img, &mask, Some((&mut g, 1.0))).unwrap();
        let ct = coords(g.len(), &mut rng);
        let num = finite_diff_grad_at(
            |t| {
                SegModel {
                    arch: model.arch.clone(),
                    theta: t.to_vec(),
                }
                .loss_and_grad(&img, &mask, None)
                .unwrap()
            },
            &model.theta,
            FD_STEP,
            &ct,
        )
        .unwrap();
        let a: Vec<f64> = ct.iter().map(|&i| g[i]).collect();
        seg.merge(compare_gradients(&a, &num, FD_FLOOR));
    }
    pass &= seg.passes(FD_REL, FD_ABS_SMALL);
    lines.push(format!("segmenter/theta rel {:.1e}", seg.max_rel_err));
    let _ = writeln!(csv, "segmenter,theta,{n_configs},{},{:e},{:e}", seg.compared, seg.max_rel_err, seg.max_abs_err_small);
    Outcome {
        pass,
        detail: format!("{n_configs} configs per arch; {}", lines.join(", ")),
        csv,
    }
}

// ---------------------------------------------------------------- 2

fn criterion_2() -> Outcome {
    let mu = [1.0, -1.0];
    let (step, n_chains, n_steps, burn, thin) = (0.05, 64, 20_000, 5_000, 5);
    let p = EnergyParams::new(EnergyArch::quadratic(&[2]), mu.to_vec()).unwrap();
    let cfg = LangevinConfig {
        step_size: step,
        n_steps,
        store_stride: thin,
        store_offset: burn + thin,
        hook: None,
        clamp: false,
    };
    let x0 = Tensor::zeros(&[2]);
    let chains: Vec<Vec<Vec<f64>>> = (0..n_chains)
        .map(|c| {
            let rec = run_chain(&x0, &p, &cfg, derive_stream(2, &[("chain", c)]), (0, 0)).unwrap();
            rec.stored.into_iter().map(|(_, t)| t.data).collect()
        })
        .collect();
    // Exact stationary variance of the discretized chain:
    // η² / (1 − (1 − η²/2)²) = 1 / (1 − η²/4).
    let var_exact = 1.0 / (1.0 - step * step / 4.0);
    let mut pass = true;
    let mut parts = Vec::new();
    let mut csv = String::from("coord,mu,pooled_mean,mc_stderr,pooled_var,analytic_var\n");
    for d in 0..2 {
        let chain_means: Vec<f64> = chains.iter().map(|ch| mean(&ch.iter().map(|x| x[d]).collect::<Vec<_>>())).collect();
        let pooled: Vec<f64> = chains.iter().flat_map(|ch| ch.iter().map(move |x| x[d])).collect();
        let m = mean(&pooled);
        // Chains are independent, so the spread of chain means gives an
        // autocorrelation-aware standard error.
        let se = langdaug::numerics::std_error(&chain_means);
        let var = pooled.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (pooled.len() - 1) as f64;
        let ok_mean = (m - mu[d]).abs() <= 3.0 * se;
        let ok_var = (var / var_exact - 1.0).abs() <= 0.10;
        pass &= ok_mean && ok_var;
        parts.push(format!(
            "x{d}: mean {m:.4} (|Δ|/se {:.2}), var {var:.4} vs {var_exact:.4}",
            (m - mu[d]).abs() / se
        ));
        let _ = writeln!(csv, "{d},{},{m:e},{se:e},{var:e},{var_exact:e}", mu[d]);
    }
    Outcome {
        pass,
        detail: parts.join("; "),
        csv,
    }
}

// ---------------------------------------------------------------- 3

fn gaussian(n: usize, mu: f64, seed: u64, label: &str) -> Vec<Tensor> {
    let mut rng = derive_stream(seed, &[(label, 0)]);
    (0..n).map(|_| Tensor::new(vec![1], vec![mu + rng.normal()]).unwrap()).collect()
}

fn criterion_3() -> Outcome {
    let mut csv = String::from("seed,theta,abs_err\n");
    let mut thetas = Vec::new();
    for seed in 0..3u64 {
        let src = gaussian(2000, 0.0, seed, "cd-source");
        let tgt = gaussian(2000, 3.0, seed, "cd-target");
        // Unit step: the 40-step chain forgets its start, so the CD fixed
        // point is the target mean.
        let cfg = CdConfig {
            n_iters: 4000,
            batch_size: 1024,
            ld: LangevinConfig {
                step_size: 1.0,
                ..CdConfig::default().ld
            },
            adam: AdamHyper {
                lr: 0.002,
                ..AdamHyper::default()
            },
            base_seed: seed,
            grad_clip: None,
        };
        let s: Vec<&Tensor> = src.iter().collect();
        let t: Vec<&Tensor> = tgt.iter().collect();
        let (p, _) = train_ebm(&s, &t, &EnergyArch::quadratic(&[1]), &cfg, (0, 1)).unwrap();
        let th = p.theta[0];
        let _ = writeln!(csv, "{seed},{th:e},{:e}", (th - 3.0).abs());
        thetas.push(th);
    }
    Outcome {
        pass: thetas.iter().all(|t| (t - 3.0).abs() <= 0.1),
        detail: format!("theta per seed {:?}", thetas.iter().map(|t| format!("{t:.4}")).collect::<Vec<_>>()),
        csv,
    }
}

// ---------------------------------------------------------------- 4

fn logistic_task(k: usize, theta: &[f64], seed: u64) -> ScoredData {
    let d = theta.len();
    ScoredData::from_glm(&generate_vector_glm(k, &vec![0.0; d], &identity(d), theta, GlmFamily::Logistic, seed).unwrap())
}

fn criterion_4() -> Outcome {
    let theta = [1.0, -1.0];
    let data = logistic_task(200, &theta, 4);
    let cfg = ScanConfig {
        betas: vec![0.02, 0.04, 0.08, 0.16],
        seed: 4,
        ..ScanConfig::default()
    };
    let report = taylor_remainder_scan(&theta, &data, GlmFamily::Logistic, &cfg).unwrap();
    let resolved = report.rows.iter().all(|r| r.mc_stderr < 0.1 * r.rem_gen().abs());
    let pass = report.status == ScanStatus::Conclusive && resolved && report.slope > 2.0 && report.slope_doubled <= 2.1;
    Outcome {
        pass,
        detail: format!(
            "slope {:.3} (> 2), doubled-regularizer slope {:.3} (<= 2.1), max stderr/|rem| {:.3}, pairs {}",
            report.slope,
            report.slope_doubled,
            report.rows.iter().map(|r| r.mc_stderr / r.rem_gen().abs()).fold(0.0, f64::max),
            report.rows[0].n_mc
        ),
        csv: report.to_csv(),
    }
}

// ---------------------------------------------------------------- 5

/// As stated: `reg_glm` against `reg_terms_general` with each `yᵢ` replaced
/// by `A'(θᵀxᵢ)`. Substituting the mean zeroes `R1`, leaving only `R2`,
/// while `reg_glm = R2 − (β²/2k) Σ A'(θᵀxᵢ) θᵀs(xᵢ)`. The two agree only
/// when that score term vanishes, so the check fails on generic data.
fn criterion_5() -> Outcome {
    let mut worst = 0.0f64;
    let mut worst_explained = 0.0f64;
    for case in 0..100u64 {
        let mut rng = derive_stream(5, &[("case", case)]);
        let d = 1 + rng.below(4);
        let theta = rng.normal_vec(d);
        let family = [GlmFamily::Gaussian, GlmFamily::Logistic, GlmFamily::Poisson][rng.below(3)];
        let scale = if family == GlmFamily::Poisson { 0.3 } else { 1.0 };
        let theta: Vec<f64> = theta.iter().map(|t| t * scale).collect();
        let k = 5 + rng.below(50);
        let beta = rng.uniform_range(0.01, 0.5);
        let data = ScoredData::from_glm(&generate_vector_glm(k, &vec![0.0; d], &identity(d), &theta, family, rng.next_u64()).unwrap());
        let mean_resp: Vec<f64> = data.x.iter().map(|x| family.a1(langdaug::numerics::dot(&theta, x))).collect();
        let substituted = ScoredData::new(data.x.clone(), mean_resp.clone(), data.scores.clone()).unwrap();
        let general = reg_terms_general(&theta, &substituted, beta, family).unwrap().total();
        let glm = reg_glm(&theta, &data, beta, family).unwrap();
        let diff = (glm - general).abs();
        worst = worst.max(diff);
        let score_term: f64 = beta * beta / (2.0 * k as f64)
            * data
                .x
                .iter()
                .zip(&data.scores)
                .zip(&mean_resp)
                .map(|((_, s), a1)| a1 * langdaug::numerics::dot(&theta, s))
                .sum::<f64>();
        worst_explained = worst_explained.max((glm - (general - score_term)).abs());
    }
    Outcome {
        pass: worst <= 1e-12,
        detail: format!(
            "max |reg_glm − general(y←A')| = {worst:.3e} (tolerance 1e-12); after adding back the score term: {worst_explained:.1e}"
        ),
        csv: String::new(),
    }
}

// ---------------------------------------------------------------- 6

fn criterion_6() -> Outcome {
    let rows = rademacher_study(&RademacherStudy::default(), 6).unwrap();
    let checked: Vec<_> = rows.iter().filter(|r| r.rho_hat > 0.0).collect();
    let below = checked.iter().all(|r| r.estimate <= r.bound);
    let units: Vec<f64> = rows.iter().map(|r| r.unit_estimate).collect();
    let (lo, hi) = units.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    let spread = hi / lo - 1.0;
    let mut csv = String::from("ambient_dim,rank,rho_hat,gamma,C,estimate,bound,unit_estimate\n");
    for r in &rows {
        let _ = writeln!(
            csv,
            "{},{},{:e},{:e},{:e},{:e},{:e},{:e}",
            r.ambient_dim, r.rank, r.rho_hat, r.gamma, r.c, r.estimate, r.bound, r.unit_estimate
        );
    }
    Outcome {
        pass: !checked.is_empty() && below && spread < 0.10,
        detail: format!(
            "{} of {} dims with ρ̂ > 0; estimate/bound {:?}; unit-ball spread across d {:.2e}",
            checked.len(),
            rows.len(),
            checked.iter().map(|r| format!("{:.3}", r.estimate / r.bound)).collect::<Vec<_>>(),
            spread
        ),
        csv,
    }
}

// ---------------------------------------------------------------- 7

fn criterion_7() -> Outcome {
    let rows = coverage_study(&CoverageStudy::default(), 7).unwrap();
    let covered = rows.iter().filter(|r| r.covered()).count();
    let gaps: Vec<f64> = rows.iter().map(|r| r.gap()).collect();
    let bounds: Vec<f64> = rows.iter().map(|r| r.inputs.value - r.l_std).collect();
    Outcome {
        pass: rows.len() == 100 && covered >= 95,
        detail: format!(
            "{covered}/{} covered at δ = 0.05; max gap {:.3}, min bound − l_std {:.3}",
            rows.len(),
            gaps.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            bounds.iter().cloned().fold(f64::INFINITY, f64::min)
        ),
        csv: coverage_csv(&rows),
    }
}

// ---------------------------------------------------------------- 8

fn bits(t: &Tensor) -> Vec<u64> {
    t.data.iter().map(|v| v.to_bits()).collect()
}

fn criterion_8() -> Outcome {
    let data = generate_benchmark(&BenchmarkConfig::default()).unwrap();
    let n = data.n_domains();
    let n_i = data.split[0].train.len();
    let ld = LangevinConfig {
        step_size: 0.005,
        n_steps: 40,
        store_stride: 3,
        store_offset: 3,
        hook: None,
        clamp: false,
    };
    let cd = CdConfig {
        n_iters: 5,
        ..CdConfig::default()
    };
    let all: Vec<usize> = (0..n).collect();
    let arch = EnergyArch::conv(&data.image_shape(), 2);
    let ebms = params_only(&train_domain_ebms(&data, &all, &arch, &cd).unwrap());
    let aug = generate_augmented(&data, &all, &ebms, &ld, 8).unwrap();
    let per_chain = ld.stored_count();
    let expected = n * (n - 1) * n_i * per_chain;
    let labels_ok = aug.entries.iter().all(|e| bits(&e.mask) == bits(&data.masks[e.source][e.origin]));
    let counts_ok = aug.counts().values().all(|&c| c == n_i) && aug.counts().len() == n * (n - 1) * per_chain;
    let mut leak_free = true;
    let mut fold_sizes = Vec::new();
    for t in 0..n {
        let sources: Vec<usize> = all.iter().copied().filter(|&d| d != t).collect();
        let fold = generate_augmented(&data, &sources, &ebms, &ld, 8).unwrap();
        leak_free &= fold.audit_no_leakage(t).is_ok()
            && fold.entries.iter().all(|e| e.source != t && e.target != t && e.origin < data.images[e.source].len());
        fold_sizes.push(fold.len());
    }
    let mut csv = String::from("source,target,step,count,image_checksum\n");
    let mut sums: BTreeMap<(usize, usize, usize), f64> = BTreeMap::new();
    for e in &aug.entries {
        *sums.entry((e.source, e.target, e.step)).or_default() += e.image.data.iter().sum::<f64>();
    }
    for ((i, j, k), c) in aug.counts() {
        let _ = writeln!(csv, "{i},{j},{k},{c},{:e}", sums[&(i, j, k)]);
    }
    Outcome {
        pass: per_chain == 13 && aug.len() == expected && aug.skipped_chains == 0 && labels_ok && counts_ok && leak_free,
        detail: format!(
            "{per_chain} iterates per chain, |D_aug| = {} (expected 12·{n_i}·13 = {expected}), labels bit-identical: {labels_ok}, leakage-free folds: {leak_free} {fold_sizes:?}",
            aug.len()
        ),
        csv,
    }
}

// ---------------------------------------------------------------- 9

/// Same settings as `configs/dg.json`.
fn dg_run(data: &MultiDomainDataset) -> Vec<langdaug::seg::EvalResult> {
    let cd = CdConfig {
        n_iters: 100,
        batch_size: 16,
        ld: LangevinConfig {
            step_size: 0.005,
            n_steps: 40,
            store_stride: 40,
            store_offset: 40,
            hook: None,
            clamp: false,
        },
        adam: AdamHyper {
            lr: 0.05,
            ..AdamHyper::default()
        },
        base_seed: 0,
        grad_clip: None,
    };
    let aug_ld = LangevinConfig {
        step_size: 0.005,
        n_steps: 40,
        store_stride: 3,
        store_offset: 3,
        hook: None,
        clamp: false,
    };
    let loo = LooConfig {
        seeds: (0..5).collect(),
        seg: SegTrainConfig {
            epochs: 60,
            mix_ratio: 0.5,
            ..SegTrainConfig::default()
        },
        with_augmentation: true,
    };
    let all: Vec<usize> = (0..data.n_domains()).collect();
    let arch = EnergyArch::conv(&data.image_shape(), 2);
    let ebms = params_only(&train_domain_ebms(data, &all, &arch, &cd).unwrap());
    run_dg_experiment(data, &ebms, &aug_ld, &loo, 0, "acceptance-dg").unwrap()
}

fn criterion_9() -> Outcome {
    let data = generate_benchmark(&BenchmarkConfig::default()).unwrap();
    let results = dg_run(&data);
    let m = mean_dice_by_method(&results);
    let (erm, ld) = (m[&Method::Erm], m[&Method::LangDaug]);
    let mut per_fold = Vec::new();
    for t in 0..data.n_domains() {
        let f = |meth: Method| mean(&results.iter().filter(|r| r.fold == t && r.method == meth).map(|r| r.mean_dice).collect::<Vec<_>>());
        per_fold.push(format!("{t}: {:.3}/{:.3}", f(Method::Erm), f(Method::LangDaug)));
    }
    Outcome {
        pass: results.len() == 40 && ld - erm >= 0.02,
        detail: format!(
            "mean held-out Dice ERM {erm:.4}, ERM+LangDAug {ld:.4}, gain {:+.4} (>= +0.02); per fold erm/langdaug {}",
            ld - erm,
            per_fold.join(", ")
        ),
        csv: results_csv(&results),
    }
}

// ---------------------------------------------------------------- 10

fn criterion_10(first: &BTreeMap<u32, String>) -> Outcome {
    let rerun: [(u32, fn() -> Outcome); 5] =
        [(2, criterion_2), (3, criterion_3), (4, criterion_4), (8, criterion_8), (9, criterion_9)];
    let mut same = Vec::new();
    let mut pass = true;
    for (id, f) in rerun {
        let again = f().csv;
        let first_csv = match first.get(&id) {
            Some(c) => c.clone(),
            None => f().csv,
        };
        let eq = !again.is_empty() && again.as_bytes() == first_csv.as_bytes();
        pass &= eq;
        same.push(format!("{id}: {}", if eq { "identical" } else { "DIFFERENT" }));
    }
    Outcome {
        pass,
        detail: same.join(", "),
        csv: String::new(),
    }
}

fn main() {
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let run = |id: u32| wanted.is_empty() || wanted.contains(&id);
    let budgets: [(u32, fn() -> Outcome, u64); 9] = [
        (1, criterion_1, 60),
        (2, criterion_2, 120),
        (3, criterion_3, 120),
        (4, criterion_4, 300),
        (5, criterion_5, 10),
        (6, criterion_6, 120),
        (7, criterion_7, 300),
        (8, criterion_8, 300),
        (9, criterion_9, 1200),
    ];
    let dir = out_dir();
    let mut csvs = BTreeMap::new();
    let mut unexpected = Vec::new();
    let mut report = |id: u32, o: Outcome, took: Duration, budget: Option<u64>| {
        let in_time = budget.is_none_or(|b| took.as_secs_f64() <= b as f64);
        let pass = o.pass && in_time;
        let status = match (pass, KNOWN_RED.contains(&id)) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known red, documented)",
            (false, false) => "FAIL",
        };
        let budget = budget.map_or(String::new(), |b| format!(" / {b} s"));
        println!("criterion {id:>2}: {status} [{:.1} s{budget}] {}", took.as_secs_f64(), o.detail);
        if !pass && !KNOWN_RED.contains(&id) {
            unexpected.push(id);
        }
        if !o.csv.is_empty() {
            std::fs::write(dir.join(format!("criterion_{id}.csv")), &o.csv).unwrap();
        }
        o.csv
    };
    for (id, f, budget) in budgets {
        if run(id) {
            let t = Instant::now();
            let o = f();
            let csv = report(id, o, t.elapsed(), Some(budget));
            csvs.insert(id, csv);
        }
    }
    if run(10) {
        let t = Instant::now();
        let o = criterion_10(&csvs);
        report(10, o, t.elapsed(), None);
    }
    println!("artifacts: {}", dir.display());
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
