//! Acceptance suite. Prints one `[PASS]`/`[FAIL]` line per criterion and
//! exits non-zero when a hard criterion fails. Soft criteria are reported
//! only.

use std::f64::consts::PI;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use sonar_atr::chip::{ComplexChip, RealChip, ReprKind, ReprSet, Representation};
use sonar_atr::experiment::{
    cmd_all, cmd_compare, cmd_eval, cmd_synth, cmd_train, embed_config, ExperimentConfig, MODELS_DIR,
};
use sonar_atr::latent::{ksg_mi, FeatureCloud};
use sonar_atr::nn::layers::{
    avgpool_backward, avgpool_forward, bce_with_logits, conv2d_backward, conv2d_forward, dense_backward,
    dense_forward, relu_backward, relu_forward, add_forward,
};
use sonar_atr::nn::{Model, Tensor};
use sonar_atr::repr::{dft2d, fftshift, power_spectrum, unwrap_phase_dct, wrap_angle, Direction};
use sonar_atr::rng::SplitMix64;
use sonar_atr::stats::{auc, ALL_ROW, roc_auc, wilcoxon_signed_rank, wsr_normal_p, WsrMethod};
use sonar_atr::synth::Dataset;
use sonar_atr::trainer::{EarlyStopper, MODEL_FILE};

/// Epoch budget for the end-to-end replication, sized to the runtime cap.
const E2E_MAX_EPOCHS: usize = 12;
const E2E_PATIENCE: usize = 6;
const E2E_SECONDS: f64 = 20.0 * 60.0;

struct Report {
    hard_failures: usize,
}

impl Report {
    fn record(&mut self, id: u32, name: &str, pass: bool, detail: String) {
        let tag = if pass { "PASS" } else { "FAIL" };
        println!("[{tag}] {id}: {name}: {detail}");
        if !pass {
            self.hard_failures += 1;
        }
    }

    fn soft(&mut self, id: u32, name: &str, pass: bool, detail: String) {
        let tag = if pass { "PASS" } else { "FAIL" };
        println!("[{tag}] {id}: {name} (soft, reported only): {detail}");
    }
}

fn rand_tensor(dims: &[usize], rng: &mut SplitMix64) -> Tensor<f64> {
    let n = dims.iter().product();
    Tensor::new(dims.to_vec(), (0..n).map(|_| rng.uniform_in(-1.0, 1.0)).collect()).unwrap()
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-8)
}

/// Central differences of `f` at `coords` of `v` against `analytic`.
/// Returns `(worst relative error, coordinates checked)`.
fn fd(v: &Tensor<f64>, analytic: &Tensor<f64>, coords: usize, rng: &mut SplitMix64, f: impl Fn(&Tensor<f64>) -> f64) -> (f64, usize) {
    let h = 1e-3;
    let picks: Vec<usize> = if coords >= v.len() { (0..v.len()).collect() } else { (0..coords).map(|_| rng.below(v.len())).collect() };
    let mut worst = 0.0f64;
    for &i in &picks {
        let mut p = v.clone();
        p.data_mut()[i] += h;
        let mut m = v.clone();
        m.data_mut()[i] -= h;
        let num = (f(&p) - f(&m)) / (2.0 * h);
        worst = worst.max(rel_err(analytic.data()[i], num));
    }
    (worst, picks.len())
}

fn gradients(report: &mut Report) {
    let start = Instant::now();
    let mut rng = SplitMix64::new(101);
    let mut worst = 0.0f64;
    let mut checked = 0;
    let mut acc = |(w, n): (f64, usize)| {
        worst = worst.max(w);
        checked += n;
    };

    // convolution, 8x8 input with an 8x8 kernel
    let x = rand_tensor(&[2, 8, 8, 2], &mut rng);
    let k = rand_tensor(&[8, 8, 2, 3], &mut rng);
    let b = rand_tensor(&[3], &mut rng);
    let r = rand_tensor(&[2, 8, 8, 3], &mut rng);
    let (gx, gk, gb) = conv2d_backward(&r, &x, &k).unwrap();
    acc(fd(&x, &gx, 40, &mut rng, |x| dot(&conv2d_forward(x, &k, &b).unwrap(), &r)));
    acc(fd(&k, &gk, 40, &mut rng, |k| dot(&conv2d_forward(&x, k, &b).unwrap(), &r)));
    acc(fd(&b, &gb, 3, &mut rng, |b| dot(&conv2d_forward(&x, &k, b).unwrap(), &r)));

    // average pooling
    let x = rand_tensor(&[2, 8, 8, 2], &mut rng);
    let r = rand_tensor(&[2, 2, 2, 2], &mut rng);
    let gx = avgpool_backward(&r, x.dims(), 4).unwrap();
    acc(fd(&x, &gx, 30, &mut rng, |x| dot(&avgpool_forward(x, 4).unwrap(), &r)));

    // ReLU, inputs kept away from the kink
    let mut x = rand_tensor(&[2, 8, 8, 1], &mut rng);
    x.data_mut().iter_mut().for_each(|v| *v += 0.05 * v.signum());
    let r = rand_tensor(&[2, 8, 8, 1], &mut rng);
    let gx = relu_backward(&r, &x).unwrap();
    acc(fd(&x, &gx, 30, &mut rng, |x| dot(&relu_forward(x), &r)));

    // residual addition
    let a = rand_tensor(&[2, 8, 8, 2], &mut rng);
    let c = rand_tensor(&[2, 8, 8, 2], &mut rng);
    let r = rand_tensor(&[2, 8, 8, 2], &mut rng);
    acc(fd(&a, &r, 20, &mut rng, |a| dot(&add_forward(a, &c).unwrap(), &r)));

    // dense head with BCE on logits
    let x = rand_tensor(&[4, 12], &mut rng);
    let w = rand_tensor(&[12, 1], &mut rng);
    let bias = rand_tensor(&[1], &mut rng);
    let y = [1.0, 0.0, 0.0, 1.0];
    let loss = |x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>| {
        bce_with_logits(dense_forward(x, w, b).unwrap().data(), &y).unwrap().0
    };
    let z = dense_forward(&x, &w, &bias).unwrap();
    let (_, dz) = bce_with_logits(z.data(), &y).unwrap();
    let (gx, gw, gb) = dense_backward(&Tensor::new(vec![4, 1], dz).unwrap(), &x, &w).unwrap();
    acc(fd(&x, &gx, 20, &mut rng, |x| loss(x, &w, &bias)));
    acc(fd(&w, &gw, 12, &mut rng, |w| loss(&x, w, &bias)));
    acc(fd(&bias, &gb, 1, &mut rng, |b| loss(&x, &w, b)));

    // full two-path model
    let reprs = ReprSet::new([Representation::Magnitude, Representation::Psd]).unwrap();
    let m = Model::<f64>::build(&reprs, (16, 16), 0.0, 11).unwrap();
    let inputs: Vec<Tensor<f64>> = (0..2).map(|_| rand_tensor(&[2, 16, 16, 1], &mut rng)).collect();
    let labels = [1.0, 0.0];
    let (_, grads) = m.loss_and_gradients_masked(&inputs, &labels, None).unwrap();
    let base = m.relu_pattern(&inputs).unwrap();
    let total = m.param_count();
    let mut model_checked = 0;
    while model_checked < 120 {
        let mut flat = rng.below(total);
        let mut t = 0;
        while flat >= m.params()[t].len() {
            flat -= m.params()[t].len();
            t += 1;
        }
        let h = 1e-3;
        let eval = |delta: f64| {
            let mut mm = m.clone();
            mm.params_mut()[t].data_mut()[flat] += delta;
            let same = mm.relu_pattern(&inputs).unwrap() == base;
            (mm.loss_and_gradients_masked(&inputs, &labels, None).unwrap().0, same)
        };
        let ((lp, okp), (lm, okm)) = (eval(h), eval(-h));
        if !(okp && okm) {
            continue;
        }
        worst = worst.max(rel_err(grads[t].data()[flat], (lp - lm) / (2.0 * h)));
        model_checked += 1;
    }
    checked += model_checked;

    let secs = start.elapsed().as_secs_f64();
    report.record(
        1,
        "gradients vs central differences",
        worst < 1e-4 && checked >= 100 && secs < 60.0,
        format!("worst rel err {worst:.2e} over {checked} coords ({model_checked} on the two-path model), {secs:.1}s"),
    );
}

fn auc_oracle(report: &mut Report) {
    let mut rng = SplitMix64::new(202);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = 2 + rng.below(49);
        let mut labels: Vec<u8> = (0..n).map(|_| rng.bernoulli(0.4) as u8).collect();
        labels[0] = 1;
        labels[1] = 0;
        let scores: Vec<f64> = (0..n).map(|_| rng.below(10) as f64 / 9.0).collect();
        let (mut num, mut pairs) = (0.0, 0.0);
        for i in (0..n).filter(|&i| labels[i] == 1) {
            for j in (0..n).filter(|&j| labels[j] == 0) {
                pairs += 1.0;
                num += if scores[i] > scores[j] {
                    1.0
                } else if scores[i] == scores[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
        let oracle = num / pairs;
        worst = worst.max((roc_auc(&scores, &labels).unwrap().auc - oracle).abs());
        worst = worst.max((auc(&scores, &labels).unwrap() - oracle).abs());
    }
    report.record(2, "AUC vs pairwise oracle", worst < 1e-12, format!("max |diff| {worst:.1e} on 1000 tied instances"));
}

fn enumerate_p(w_plus: f64, n: usize) -> f64 {
    let (mut le, mut ge) = (0u64, 0u64);
    for mask in 0u64..(1 << n) {
        let w: usize = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| i + 1).sum();
        le += ((w as f64) <= w_plus) as u64;
        ge += ((w as f64) >= w_plus) as u64;
    }
    ((2 * le.min(ge)) as f64 / (1u64 << n) as f64).min(1.0)
}

fn wsr_oracle(report: &mut Report) {
    let mut rng = SplitMix64::new(303);
    let mut exact_ok = true;
    let mut cases = 0;
    for n in 5..=12 {
        for _ in 0..40 {
            let diffs: Vec<f64> = (1..=n).map(|m| if rng.bernoulli(0.5) { m as f64 } else { -(m as f64) } * 0.01).collect();
            let r = wilcoxon_signed_rank(&diffs).unwrap();
            exact_ok &= r.method == WsrMethod::Exact && r.p_value == enumerate_p(r.w_plus, n);
            cases += 1;
        }
    }
    let mut worst_normal = 0.0f64;
    for w in 0..=78 {
        worst_normal = worst_normal.max((wsr_normal_p(12, w as f64, 0.0) - enumerate_p(w as f64, 12)).abs());
    }
    report.record(
        3,
        "WSR vs 2^n enumeration",
        exact_ok && worst_normal < 0.05,
        format!("exact equal on {cases} cases (n = 5..12): {exact_ok}; normal path max |dp| {worst_normal:.4} at n = 12"),
    );
}

fn gaussian_pair(n: usize, rho: f64, seed: u64) -> (FeatureCloud, FeatureCloud) {
    let mut rng = SplitMix64::new(seed);
    let (mut x, mut y) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for _ in 0..n {
        let a: f64 = rng.sample(StandardNormal);
        let b: f64 = rng.sample(StandardNormal);
        x.push(a);
        y.push(rho * a + (1.0 - rho * rho).sqrt() * b);
    }
    (FeatureCloud::anonymous(n, 1, x).unwrap(), FeatureCloud::anonymous(n, 1, y).unwrap())
}

fn ksg_benchmark(report: &mut Report) {
    let start = Instant::now();
    let truth = -0.5 * (1.0f64 - 0.81).ln();
    let (x, y) = gaussian_pair(2000, 0.9, 404);
    let dep = ksg_mi(&x, &y, 3, 1).unwrap().value;
    let (x, y) = gaussian_pair(2000, 0.0, 405);
    let ind = ksg_mi(&x, &y, 3, 1).unwrap().value;
    let secs = start.elapsed().as_secs_f64();
    report.record(
        4,
        "KSG on bivariate Gaussians",
        (dep - truth).abs() <= 0.05 && ind.abs() < 0.05 && secs < 30.0,
        format!("rho 0.9: {dep:.4} (analytic {truth:.4}); independent: {ind:.4}; {secs:.2}s"),
    );
}

fn dft_parseval(report: &mut Report) {
    let mut rng = SplitMix64::new(505);
    let (h, w) = (8, 8);
    let pixels = (0..h * w).map(|_| Complex64::new(rng.uniform_in(-1.0, 1.0), rng.uniform_in(-1.0, 1.0))).collect();
    let chip = ComplexChip::grid(h, w, pixels).unwrap();
    let fast = dft2d(&chip, Direction::Forward).unwrap();
    let mut oracle = vec![Complex64::new(0.0, 0.0); h * w];
    for u in 0..h {
        for v in 0..w {
            for r in 0..h {
                for c in 0..w {
                    let ang = -2.0 * PI * ((u * r) as f64 / h as f64 + (v * c) as f64 / w as f64);
                    oracle[u * w + v] += chip.at(r, c) * Complex64::from_polar(1.0, ang);
                }
            }
        }
    }
    let dft_err = fast.pixels().iter().zip(&oracle).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    let psd_oracle = fftshift(&oracle.iter().map(|z| z.norm_sqr()).collect::<Vec<_>>(), h, w);
    let psd_err = power_spectrum(&chip).iter().zip(&psd_oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    let mut parseval = 0.0f64;
    for _ in 0..3 {
        let pixels = (0..100 * 100).map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))).collect();
        let z = ComplexChip::new(100, 100, pixels).unwrap();
        let spatial: f64 = z.pixels().iter().map(|p| p.norm_sqr()).sum();
        let spectral: f64 = dft2d(&z, Direction::Forward).unwrap().pixels().iter().map(|p| p.norm_sqr()).sum();
        parseval = parseval.max((spectral / (100.0 * 100.0) - spatial).abs() / spatial);
    }
    report.record(
        5,
        "DFT/PSD vs direct sum, Parseval",
        dft_err < 1e-9 && psd_err < 1e-9 && parseval < 1e-6,
        format!("8x8 DFT max abs err {dft_err:.1e}, PSD {psd_err:.1e}; 100x100 Parseval rel err {parseval:.1e}"),
    );
}

fn unwrapping(report: &mut Report) {
    let n = 64;
    let (a, b) = (0.9, -1.7);
    let truth = |r: usize, c: usize| a * r as f64 + b * c as f64;
    let wrapped = RealChip::from_fn(n, n, ReprKind::Generic, |r, c| wrap_angle(truth(r, c))).unwrap();
    let out = unwrap_phase_dct(&wrapped).unwrap();
    let mean = (0..n * n).map(|i| truth(i / n, i % n)).sum::<f64>() / (n * n) as f64;
    let err = (0..n * n).map(|i| (out.values()[i] - (truth(i / n, i % n) - mean)).abs()).fold(0.0, f64::max);
    report.record(6, "phase unwrapping of a wrapped ramp", err < 1e-6, format!("64x64 max abs err {err:.1e} rad"));
}

fn early_stopping(report: &mut Report) {
    // (sequence, patience, expected stop epoch, expected snapshot epoch)
    let mut scripts: Vec<(Vec<f64>, usize, Option<usize>, usize)> = vec![
        ((1..=30).map(|e| e as f64 / 100.0).collect(), 20, None, 30),
        ((1..=40).map(|e| if e <= 5 { e as f64 / 10.0 } else { 0.4 }).collect(), 20, Some(25), 5),
        (vec![0.7, 0.7, 0.7, 0.7], 3, Some(4), 1),
        (vec![0.6, 0.8, 0.7, 0.81, 0.79, 0.5, 0.9], 2, Some(6), 4),
    ];
    let mut plateau: Vec<f64> = vec![0.5; 50];
    plateau[10] = 0.9;
    plateau[29] = 0.95;
    scripts.push((plateau, 20, Some(50), 30));

    let mut ok = true;
    let mut seen = Vec::new();
    for (seq, patience, stop, snap) in &scripts {
        let mut s = EarlyStopper::new(*patience);
        let mut stopped = None;
        for (i, &v) in seq.iter().enumerate() {
            if s.observe(i + 1, v).1 {
                stopped = Some(i + 1);
                break;
            }
        }
        let best = s.best().map(|b| b.0);
        ok &= stopped == *stop && best == Some(*snap);
        seen.push(format!("stop {stopped:?} best {best:?}"));
    }
    report.record(8, "early-stopping scripts", ok, seen.join("; "));
}

fn serialization(report: &mut Report) {
    let mut rng = SplitMix64::new(1111);
    let sets = ReprSet::grid();
    let mut ok = true;
    for i in 0..12 {
        let reprs = sets[i % sets.len()].clone();
        let hw = [(32, 32), (64, 64), (48, 32)][i % 3];
        let mut m = Model::<f32>::build(&reprs, hw, rng.below(8) as f64 / 8.0, rng.next()).unwrap();
        for p in m.params_mut() {
            p.data_mut().iter_mut().for_each(|v| *v = f32::from_bits(rng.next() as u32 & 0x3fff_ffff) - 1.0);
        }
        let bytes = m.to_bytes();
        let back = Model::<f32>::from_bytes(&bytes).unwrap();
        ok &= back == m && back.to_bytes() == bytes;
    }
    // both chip formats store f32 samples, so values are drawn as f32
    for _ in 0..20 {
        let (h, w) = (16 + rng.below(40), 16 + rng.below(40));
        let pixels = (0..h * w).map(|_| Complex64::new(finite(&mut rng), finite(&mut rng))).collect();
        let chip = ComplexChip::new(h, w, pixels).unwrap();
        let bytes = chip.to_bytes();
        let back = ComplexChip::from_bytes(&bytes).unwrap();
        ok &= back.pixels().iter().zip(chip.pixels()).all(|(a, b)| a.re.to_bits() == b.re.to_bits() && a.im.to_bits() == b.im.to_bits())
            && back.height() == h
            && back.width() == w
            && back.to_bytes() == bytes;
        let real = RealChip::new(h, w, ReprKind::Generic, (0..h * w).map(|_| finite(&mut rng)).collect()).unwrap();
        let bytes = real.to_bytes();
        let rb = RealChip::from_bytes(&bytes).unwrap();
        ok &= rb.values().iter().zip(real.values()).all(|(a, b)| a.to_bits() == b.to_bits()) && rb.to_bytes() == bytes;
    }
    report.record(11, "CNET and CHIP round-trips", ok, "12 random models, 20 complex and 20 real chips".into());

    /// A finite f32 with random sign, mantissa and exponent.
    fn finite(rng: &mut SplitMix64) -> f64 {
        let bits = rng.next() as u32;
        let exp = (bits >> 23) % 255;
        f32::from_bits(bits & !(0xff << 23) | (exp << 23)) as f64
    }
}

fn files_under(dir: &Path, name: &str) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    if let Ok(entries) = std::fs::read_dir(dir) {
        let mut entries: Vec<_> = entries.flatten().collect();
        entries.sort_by_key(|e| e.file_name());
        for e in entries {
            let p = e.path().join(name);
            if let Ok(b) = std::fs::read(&p) {
                out.push((e.file_name().to_string_lossy().into_owned(), b));
            }
        }
    }
    out
}

fn tiny_config(out: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.out_dir = out.to_path_buf();
    cfg.synth.chips_per_trial = 60;
    cfg.synth.chip_dims = (40, 40);
    cfg.train.preprocess.input_hw = (32, 32);
    cfg.train.batch_size = 8;
    cfg.train.max_epochs = 2;
    cfg.train.steps_per_epoch = Some(2);
    cfg.eval.bootstrap = 20;
    cfg.analysis.probe_size = 60;
    cfg.analysis.embed_size = 60;
    cfg.analysis.perplexity = 10.0;
    cfg.analysis.tsne_iterations = 300;
    cfg
}

fn determinism(report: &mut Report) {
    let tmp = tempfile::tempdir().unwrap();
    let runs: Vec<_> = ["a", "b"]
        .iter()
        .map(|r| {
            let mut cfg = tiny_config(&tmp.path().join(r));
            let summary = cmd_all(&mut cfg).map(|t| t.render());
            let bytes = std::fs::read(cfg.out_dir.join("summary.tsv")).unwrap_or_default();
            (summary, bytes, files_under(&cfg.out_dir.join(MODELS_DIR), MODEL_FILE))
        })
        .collect();
    let (a, b) = (&runs[0], &runs[1]);
    let shape = a.0.as_ref().map(|s| {
        let lines: Vec<&str> = s.lines().collect();
        (lines[0].split('\t').count(), lines.len() - 1)
    });
    let ok = a.0.is_ok()
        && !a.1.is_empty()
        && a.1 == b.1
        && a.2.len() == 6
        && a.2 == b.2
        && shape.as_ref().is_ok_and(|&(cols, rows)| cols == 2 + 6 && rows >= 2)
        && a.0.as_ref().is_ok_and(|s| s.lines().last().is_some_and(|l| l.starts_with(ALL_ROW)));
    report.record(
        10,
        "cmd_all determinism",
        ok,
        match &a.0 {
            Ok(_) => format!(
                "summary identical: {}; {} model files identical: {}; summary columns/rows {:?}",
                a.1 == b.1,
                a.2.len(),
                a.2 == b.2,
                shape.unwrap()
            ),
            Err(e) => format!("run failed: {e}"),
        },
    );
}

fn end_to_end(report: &mut Report) {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::default();
    cfg.out_dir = tmp.path().to_path_buf();
    cfg.train.max_epochs = E2E_MAX_EPOCHS;
    cfg.train.patience = E2E_PATIENCE;
    let mag = ReprSet::single(Representation::Magnitude);
    let mag_psd = ReprSet::new([Representation::Magnitude, Representation::Psd]).unwrap();
    let configs = vec![mag.clone(), mag_psd.clone()];
    cfg.configurations = configs.clone();

    let run = || -> sonar_atr::Result<(Dataset, f64, f64, f64, f64)> {
        let ds = cmd_synth(&cfg)?;
        for r in &configs {
            cmd_train(&cfg, r, &ds)?;
        }
        let (scores, _) = cmd_eval(&cfg, &configs, &ds)?;
        let a_mag = auc(&scores[0].scores, &scores[0].labels)?;
        let a_psd = auc(&scores[1].scores, &scores[1].labels)?;
        let cmp = cmd_compare(&cfg, &configs)?;
        Ok((ds, a_mag, a_psd, cmp[0].wsr.p_value, cmp[0].mean_diff))
    };
    match run() {
        Ok((ds, a_mag, a_psd, p, diff)) => {
            let secs = start.elapsed().as_secs_f64();
            report.record(
                7,
                "end-to-end synthetic replication",
                a_mag >= 0.85 && a_psd >= a_mag && diff > 0.0 && p < 0.05 && secs < E2E_SECONDS,
                format!(
                    "{} chips; Mag AUC {a_mag:.4}, Mag+PSD AUC {a_psd:.4}, mean bootstrap diff {diff:+.5}, WSR p {p:.2e}; {:.0}s",
                    ds.len(),
                    secs
                ),
            );
            trial_clustering(report, &cfg, &mag, &mag_psd, &ds);
        }
        Err(e) => {
            report.record(7, "end-to-end synthetic replication", false, format!("run failed: {e}"));
            report.soft(9, "trial clustering", false, "skipped: no trained models".into());
        }
    }
}

fn trial_clustering(report: &mut Report, cfg: &ExperimentConfig, mag: &ReprSet, mag_psd: &ReprSet, ds: &Dataset) {
    let mut wins = 0;
    let mut detail = Vec::new();
    for seed in 1..=5 {
        let s = |r: &ReprSet| embed_config(cfg, r, ds, seed).map(|e| e.2);
        match (s(mag), s(mag_psd)) {
            (Ok(a), Ok(b)) => {
                wins += (b > a) as usize;
                detail.push(format!("{a:.3}/{b:.3}"));
            }
            (Err(e), _) | (_, Err(e)) => detail.push(format!("error: {e}")),
        }
    }
    report.soft(
        9,
        "trial clustering",
        wins >= 4,
        format!("Mag+PSD silhouette above Mag in {wins}/5 seeds (Mag/Mag+PSD: {})", detail.join(", ")),
    );
}

fn main() -> ExitCode {
    // Optional criterion numbers on the command line restrict the run.
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let want = |id: u32| only.is_empty() || only.contains(&id);
    let mut report = Report { hard_failures: 0 };
    let quick: [(u32, fn(&mut Report)); 9] = [
        (1, gradients),
        (2, auc_oracle),
        (3, wsr_oracle),
        (4, ksg_benchmark),
        (5, dft_parseval),
        (6, unwrapping),
        (8, early_stopping),
        (11, serialization),
        (10, determinism),
    ];
    for (id, f) in quick {
        if want(id) {
            f(&mut report);
        }
    }
    if want(7) || want(9) {
        end_to_end(&mut report);
    }
    if report.hard_failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{} hard criteria failed", report.hard_failures);
        ExitCode::FAILURE
    }
}
