//! Acceptance suite: one line per criterion, nonzero exit on any failure.
//!
//!     cargo test --test acceptance
//!
//! Every check compares library output against an oracle computed here.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::time::{Duration, Instant};

use harmonize::btrank::{fit_bradley_terry, ComparisonMatrix, FitOptions};
use harmonize::config::RunConfig;
use harmonize::dove::{
    domain_similarity, extract_domain_reps, generator_total_loss, hinge_d_loss, hinge_g_loss, partial_conv,
    reconstruction_loss, spectral_normalize, ConvWeights, Differentiable, DomainSimilarityFn, Extractor, FeatureMap,
    GeneratorTotalFn, HingeDFn, HingeGFn, LossConfig, ReconstructionFn,
};
use harmonize::imgcore::{Image, Mask};
use harmonize::metrics::{
    evaluate_set, fmse, mse, psnr, psnr_from_mse, BucketEdges, EvalOptions, EvalTags, ImagePairEval, MetricsReport,
};
use harmonize::review::{ItemStatus, ReviewService, ServiceOptions};
use harmonize::synth::fixtures::{demo_scene, random_pair, write_demo_sources, DemoSpec};
use harmonize::synth::{synthesize, Manifest};
use harmonize::transfer::{
    histogram_match_channels, match_histogram_1d, transfer_fecker, transfer_pitie, transfer_reinhard, transfer_xiao,
    DistributionTransfer, RotationSource,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond { Ok(()) } else { Err(msg()) }
}

fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn fg(img: &Image, mask: &Mask) -> Vec<[f64; 3]> {
    (0..img.pixel_count()).filter(|&i| mask.is_foreground(i)).map(|i| img.pixel(i)).collect()
}

/// Population mean, std and covariance of a point cloud.
fn moments(cloud: &[[f64; 3]]) -> ([f64; 3], [f64; 3], [[f64; 3]; 3]) {
    let n = cloud.len() as f64;
    let mean: [f64; 3] = std::array::from_fn(|c| cloud.iter().map(|p| p[c]).sum::<f64>() / n);
    let cov: [[f64; 3]; 3] = std::array::from_fn(|a| {
        std::array::from_fn(|b| cloud.iter().map(|p| (p[a] - mean[a]) * (p[b] - mean[b])).sum::<f64>() / n)
    });
    (mean, std::array::from_fn(|c| cov[c][c].sqrt()), cov)
}

/// Reinhard's l-alpha-beta with row-normalized LMS and a 1/255² log offset.
fn oracle_lab(p: [f64; 3]) -> [f64; 3] {
    let rows = [[0.3811, 0.5783, 0.0402], [0.1967, 0.7244, 0.0782], [0.0241, 0.1288, 0.8444]];
    let lms: [f64; 3] = std::array::from_fn(|r| {
        let s: f64 = rows[r].iter().sum();
        ((rows[r][0] * p[0] + rows[r][1] * p[1] + rows[r][2] * p[2]) / s + 1.0 / 65025.0).log10()
    });
    [
        (lms[0] + lms[1] + lms[2]) / 3f64.sqrt(),
        (lms[0] + lms[1] - 2.0 * lms[2]) / 6f64.sqrt(),
        (lms[0] - lms[1]) / 2f64.sqrt(),
    ]
}

/// Full-range BT.601.
fn oracle_ycbcr([r, g, b]: [f64; 3]) -> [f64; 3] {
    let y = 0.299 * r + 0.587 * g + 0.114 * b;
    [y, 0.5 + (b - y) / 1.772, 0.5 + (r - y) / 1.402]
}

fn c1_moment_matching() -> Check {
    let start = Instant::now();
    let (mut reinhard_n, mut xiao_n, mut worst_lab, mut worst_rgb, mut worst_cov, mut worst_id) = (0, 0, 0f64, 0f64, 0f64, 0f64);
    for seed in 0..50 {
        let (t, tm, r, rm) = random_pair(seed, 48, 40);
        let ref_cloud = fg(&r, &rm);

        let out = transfer_reinhard(&t, &tm, &r, &rm).map_err(|e| e.to_string())?;
        if out.clamp_fraction == 0.0 {
            let lab = |c: &[[f64; 3]]| moments(&c.iter().map(|&p| oracle_lab(p)).collect::<Vec<_>>());
            let (om, os, _) = lab(&fg(&out.image, &tm));
            let (rmu, rs, _) = lab(&ref_cloud);
            worst_lab = worst_lab.max(max_abs(&om, &rmu)).max(max_abs(&os, &rs));
            reinhard_n += 1;
        }

        let out = transfer_xiao(&t, &tm, &r, &rm).map_err(|e| e.to_string())?;
        if out.clamp_fraction == 0.0 {
            let (om, os, oc) = moments(&fg(&out.image, &tm));
            let (rmu, rs, rc) = moments(&ref_cloud);
            worst_rgb = worst_rgb.max(max_abs(&om, &rmu)).max(max_abs(&os, &rs));
            let frob = (0..9).map(|k| (oc[k / 3][k % 3] - rc[k / 3][k % 3]).powi(2)).sum::<f64>().sqrt();
            worst_cov = worst_cov.max(frob);
            xiao_n += 1;
        }

        for out in [transfer_reinhard(&t, &tm, &t, &tm), transfer_xiao(&t, &tm, &t, &tm)] {
            let out = out.map_err(|e| e.to_string())?;
            worst_id = worst_id.max(max_abs(out.image.data(), t.data()));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(reinhard_n >= 25 && xiao_n >= 25, || format!("too few unclamped cases: {reinhard_n}, {xiao_n}"))?;
    ensure(worst_lab < 1e-3, || format!("reinhard Lab moment error {worst_lab:.2e}"))?;
    ensure(worst_rgb < 1e-3, || format!("xiao RGB moment error {worst_rgb:.2e}"))?;
    ensure(worst_cov < 1e-2, || format!("xiao covariance Frobenius error {worst_cov:.2e}"))?;
    ensure(worst_id < 1e-3, || format!("identity round trip {worst_id:.2e}"))?;
    ensure(secs < 10.0, || format!("runtime {secs:.2}s"))?;
    Ok(format!(
        "unclamped {reinhard_n}+{xiao_n}/50, moment err {:.1e}, cov err {worst_cov:.1e}, identity {worst_id:.1e}, {secs:.2}s",
        worst_lab.max(worst_rgb)
    ))
}

/// Two-sided KS distance between two samples quantized to `bins` levels on [0, 1].
fn ks_levels(a: &[f64], b: &[f64], bins: usize) -> f64 {
    let hist = |v: &[f64]| {
        let mut h = vec![0.0; bins];
        for &x in v {
            h[(x.clamp(0.0, 1.0) * (bins - 1) as f64).round() as usize] += 1.0 / v.len() as f64;
        }
        h
    };
    let (ha, hb) = (hist(a), hist(b));
    let (mut ca, mut cb, mut d) = (0.0, 0.0, 0f64);
    for k in 0..bins {
        ca += ha[k];
        cb += hb[k];
        d = d.max((ca - cb).abs());
    }
    d
}

fn c2_histogram_exactness() -> Check {
    let target: Vec<f64> = (0..64).map(|i| (i % 2) as f64).collect();
    let reference: Vec<f64> = (0..64).map(|i| if i % 2 == 0 { 0.25 } else { 0.75 }).collect();
    let lut = match_histogram_1d(&target, &reference, 256).map_err(|e| e.to_string())?;
    ensure(lut.map(0.0) == 0.25 && lut.map(1.0) == 0.75, || {
        format!("two-level mapping 0->{}, 1->{}", lut.map(0.0), lut.map(1.0))
    })?;

    // Full-range random images: every quantization level carries about 1/bins of the mass.
    let bins = 256;
    let limit = 2.0 / bins as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let (mut worst_rgb, mut worst_out, mut worst_lut) = (0f64, 0f64, 0f64);
    let channel = |cloud: &[[f64; 3]], f: fn([f64; 3]) -> [f64; 3], c: usize| -> Vec<f64> {
        cloud.iter().map(|&p| f(p)[c]).collect()
    };
    for k in 0..6 {
        let gamma = if k % 2 == 0 { 1.0 } else { 1.3 };
        let t = Image::from_fn(256, 256, |_, _| std::array::from_fn(|_| rng.random()));
        let r = Image::from_fn(256, 256, |_, _| std::array::from_fn(|_| rng.random::<f64>().powf(gamma)));
        let tm = Mask::from_fn(256, 256, |x, y| (x * 7 + y * 3) % 10 < 7);
        let rm = Mask::from_fn(256, 256, |_, y| y > 30);
        let (tc, rc) = (fg(&t, &tm), fg(&r, &rm));

        let rgb = histogram_match_channels(&t, &tm, &r, &rm, bins).map_err(|e| e.to_string())?;
        let out = fg(&rgb.image, &tm);
        for c in 0..3 {
            worst_rgb = worst_rgb.max(ks_levels(&channel(&out, |p| p, c), &channel(&rc, |p| p, c), bins));
            // The YCbCr lookup table on its own, before conversion back to RGB.
            let (tv, rv) = (channel(&tc, oracle_ycbcr, c), channel(&rc, oracle_ycbcr, c));
            let lut = match_histogram_1d(&tv, &rv, bins).map_err(|e| e.to_string())?;
            let mapped: Vec<f64> = tv.iter().map(|&v| lut.map(v)).collect();
            worst_lut = worst_lut.max(ks_levels(&mapped, &rv, bins));
        }
        if gamma == 1.0 {
            let ycc = transfer_fecker(&t, &tm, &r, &rm, bins).map_err(|e| e.to_string())?;
            let out = fg(&ycc.image, &tm);
            for c in 0..3 {
                let ks = ks_levels(&channel(&out, oracle_ycbcr, c), &channel(&rc, oracle_ycbcr, c), bins);
                worst_out = worst_out.max(ks);
            }
        }
    }
    ensure(worst_rgb < limit, || format!("RGB KS {worst_rgb:.5} >= {limit:.5}"))?;
    ensure(worst_lut < limit, || format!("YCbCr table KS {worst_lut:.5} >= {limit:.5}"))?;
    ensure(worst_out < limit, || format!("transfer_fecker KS {worst_out:.5} >= {limit:.5}"))?;
    Ok(format!(
        "0->0.25, 1->0.75 exact; KS rgb {worst_rgb:.5}, ycbcr table {worst_lut:.5}, end-to-end {worst_out:.5} (limit {limit:.5})"
    ))
}

/// Exact Wasserstein-1 distance between two 1-D empirical distributions.
fn w1(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let mut xs: Vec<f64> = a.iter().chain(&b).copied().collect();
    xs.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut total) = (0, 0, 0.0);
    for k in 0..xs.len() - 1 {
        while i < a.len() && a[i] <= xs[k] {
            i += 1;
        }
        while j < b.len() && b[j] <= xs[k] {
            j += 1;
        }
        total += (i as f64 / n - j as f64 / m).abs() * (xs[k + 1] - xs[k]);
    }
    total
}

/// Mean over probe directions of the 1-D Wasserstein-1 distance between projected clouds.
fn sliced_w1(a: &[[f64; 3]], b: &[[f64; 3]], probes: &[[f64; 3]]) -> f64 {
    let proj = |cloud: &[[f64; 3]], d: &[f64; 3]| cloud.iter().map(|p| p[0] * d[0] + p[1] * d[1] + p[2] * d[2]).collect();
    probes.iter().map(|d| w1(proj(a, d), proj(b, d))).sum::<f64>() / probes.len() as f64
}

fn c3_pitie_convergence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    let probes: Vec<[f64; 3]> = (0..20)
        .map(|_| {
            let v: [f64; 3] = std::array::from_fn(|_| Distribution::<f64>::sample(&StandardNormal, &mut rng));
            let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            v.map(|x| x / n)
        })
        .collect();
    let (mut worst_rise, mut rises, mut first, mut last) = (0f64, 0, 0.0, 0.0);
    let mut worst_id = 0f64;
    for seed in 300..320u64 {
        let (t, tm, r, rm) = random_pair(seed, 40, 32);
        let reference = fg(&r, &rm);
        let mut idt = DistributionTransfer::new(fg(&t, &tm), reference.clone());
        let mut rotations = RotationSource::seeded(seed);
        let mut d = vec![sliced_w1(idt.current(), &reference, &probes)];
        for _ in 0..10 {
            idt.step(&rotations.next_rotation());
            d.push(sliced_w1(idt.current(), &reference, &probes));
        }
        for w in d.windows(2) {
            if w[1] > w[0] {
                rises += 1;
                worst_rise = worst_rise.max((w[1] - w[0]) / w[0]);
            }
        }
        first += d[0] / 20.0;
        last += d[10] / 20.0;

        let out = transfer_pitie(&t, &tm, &t, &tm, 10, seed).map_err(|e| e.to_string())?;
        worst_id = worst_id.max(max_abs(out.image.data(), t.data()));
    }
    ensure(rises == 0, || format!("sliced distance rose in {rises} of 200 steps, worst by {:.1}%", 100.0 * worst_rise))?;
    ensure(worst_id < 1e-2, || format!("identity error {worst_id:.2e}"))?;
    Ok(format!("mean sliced W1 {first:.4} -> {last:.4}, never increasing; identity {worst_id:.1e}"))
}

fn solid(w: usize, h: usize, v: f64) -> Image {
    Image::filled(w, h, [v; 3])
}

fn c4_metric_formulas() -> Check {
    let e = |r: Result<f64, _>| r.map_err(|e: harmonize::metrics::MetricsError| e.to_string());
    let zeros = solid(4, 4, 0.0);
    ensure(e(mse(&zeros, &zeros))? == 0.0, || "mse(a, a) != 0".into())?;
    ensure(e(mse(&zeros, &solid(4, 4, 1.0)))? == 65025.0, || "black vs white != 65025".into())?;
    let mut one = solid(2, 2, 0.0);
    one.set_pixel(3, [0.0, 1.0, 0.0]);
    ensure(e(mse(&solid(2, 2, 0.0), &one))? == 5418.75, || "single pixel != 5418.75".into())?;
    ensure(e(psnr(&zeros, &zeros))? == 100.0, || "identical psnr != 100".into())?;
    ensure(psnr_from_mse(65025.0) == 0.0, || "psnr(65025) != 0".into())?;
    let p = psnr_from_mse(172.47);
    ensure(format!("{p:.2}") == "25.76", || format!("psnr(172.47) = {p}"))?;
    ensure(format!("{:.2}", psnr_from_mse(100.0)) == "28.13", || "psnr(100) != 28.13".into())?;

    let fg_one = Mask::from_fn(2, 2, |x, y| (x, y) == (1, 1));
    ensure(e(fmse(&solid(2, 2, 0.0), &one, &fg_one))? == 21675.0, || "fmse single pixel != 21675".into())?;
    let mut bg_diff = solid(2, 2, 0.0);
    bg_diff.set_pixel(0, [1.0; 3]);
    ensure(e(fmse(&solid(2, 2, 0.0), &bg_diff, &fg_one))? == 0.0, || "background difference counted".into())?;

    let edges = BucketEdges::default();
    let b = |r| edges.bucket_of(r).map_err(|e| e.to_string());
    ensure(b(0.03)? == 0 && b(0.05)? == 1 && b(0.50)? == 2, || "bucket assignment".into())?;
    ensure(b(3277.0 / 65536.0)? == 1, || "3277/65536 not in 5%~15%".into())?;
    let labels: Vec<String> = (0..3).map(|k| edges.label(k)).collect();
    ensure(labels == ["0%~5%", "5%~15%", "15%~100%"], || format!("labels {labels:?}"))?;

    let tags = EvalTags { method: "m".into(), category: "c".into(), sub_dataset: None };
    let evals = vec![
        ImagePairEval { id: "a".into(), mse: 0.0, psnr: 100.0, fmse: 0.0, foreground_ratio: 0.1, tags: tags.clone() },
        ImagePairEval { id: "b".into(), mse: 100.0, psnr: psnr_from_mse(100.0), fmse: 0.0, foreground_ratio: 0.5, tags },
    ];
    let rep = MetricsReport::build("x", evals, &edges).map_err(|e| e.to_string())?;
    let (am, ap) = (rep.overall.mse.unwrap_or(f64::NAN), rep.overall.psnr.unwrap_or(f64::NAN));
    ensure(am == 50.0 && format!("{ap:.2}") == "64.07", || format!("aggregate {am} / {ap}"))?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let spec = DemoSpec { transfer_targets: 80, ..DemoSpec::default() };
    let sources = write_demo_sources(&dir.path().join("sources"), &spec).map_err(|e| e.to_string())?;
    let cfg = RunConfig { seed: 5, composites_per_target: 4, ..RunConfig::default() };
    synthesize(&sources, dir.path(), &cfg).map_err(|e| e.to_string())?;
    let mut manifest = Manifest::load(dir.path().join("manifest.jsonl")).map_err(|e| e.to_string())?;
    ensure(manifest.entries.len() >= 100, || format!("only {} records", manifest.entries.len()))?;
    manifest.entries.truncate(100);
    let opts = EvalOptions { label: "Ground truth".into(), split: None, ..EvalOptions::default() };
    let rep = evaluate_set(&manifest, dir.path(), &dir.path().join("real"), &opts).map_err(|e| e.to_string())?;
    ensure(rep.per_image.len() == 100 && rep.skipped.is_empty(), || format!("{} evaluated", rep.per_image.len()))?;
    ensure(rep.per_image.iter().all(|r| r.mse == 0.0 && r.fmse == 0.0 && r.psnr == 100.0), || "nonzero identity error".into())?;
    let total: usize = rep.buckets.iter().map(|b| b.aggregate.count).sum();
    ensure(total == 100, || format!("bucket populations sum to {total}"))?;
    Ok("closed forms exact, psnr(172.47) = 25.76 dB, buckets 0%~5% / 5%~15% / 15%~100%, 100-image identity MSE 0 fMSE 0".into())
}

fn c5_no_leakage() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let weights = [ConvWeights::he_normal(4, 3, 3, 3, 1), ConvWeights::he_normal(2, 3, 5, 5, 2)];
    let (mut masks, mut perturbations) = (0, 0);
    for _ in 0..40 {
        let input = FeatureMap::from_fn(3, 5, 5, |_, _, _| rng.random_range(-1.0..1.0));
        let per_channel = rng.random_bool(0.5);
        let mc = if per_channel { 3 } else { 1 };
        let mask = FeatureMap::from_fn(mc, 5, 5, |_, _, _| if rng.random_bool(0.5) { 1.0 } else { 0.0 });
        let hidden: Vec<(usize, usize, usize)> = (0..3)
            .flat_map(|c| (0..5).flat_map(move |y| (0..5).map(move |x| (c, y, x))))
            .filter(|&(c, y, x)| mask.get(if per_channel { c } else { 0 }, y, x) == 0.0)
            .collect();
        for w in &weights {
            for stride in [1, 2] {
                let (base, base_mask) = partial_conv(&input, &mask, w, stride).map_err(|e| e.to_string())?;
                let bits = |f: &FeatureMap| f.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
                let mut variants: Vec<FeatureMap> = hidden
                    .iter()
                    .map(|&(c, y, x)| {
                        let mut p = input.clone();
                        p.set(c, y, x, rng.random_range(-1e6..1e6));
                        p
                    })
                    .collect();
                let mut all = input.clone();
                for &(c, y, x) in &hidden {
                    all.set(c, y, x, f64::from(rng.random_range(-1000i32..1000)));
                }
                variants.push(all);
                for p in &variants {
                    let (out, out_mask) = partial_conv(p, &mask, w, stride).map_err(|e| e.to_string())?;
                    ensure(bits(&out) == bits(&base) && bits(&out_mask) == bits(&base_mask), || {
                        "masked-out entry changed the output".into()
                    })?;
                    perturbations += 1;
                }
            }
        }
        masks += 1;
    }

    let extractor = Extractor::seeded(9);
    let (img, mask) = demo_scene(&mut rng, 40, 32);
    let base = extract_domain_reps(&img, &mask, &extractor).map_err(|e| e.to_string())?;
    for _ in 0..100 {
        let redrawn = Image::from_fn(40, 32, |x, y| {
            if mask.get(x, y) { img.get(x, y) } else { std::array::from_fn(|_| rng.random()) }
        });
        let reps = extract_domain_reps(&redrawn, &mask, &extractor).map_err(|e| e.to_string())?;
        let same = reps.foreground.iter().zip(&base.foreground).all(|(a, b)| a.to_bits() == b.to_bits());
        ensure(same, || "l_f changed under background redraw".into())?;
    }
    Ok(format!("{perturbations} perturbations over {masks} 5x5 masks bit-identical; l_f fixed over 100 redraws"))
}

/// Worst relative error of `f.grad` against central differences computed here.
fn fd_error(f: &dyn Differentiable, x: &[f64], h: f64) -> Result<(f64, usize), String> {
    let g = f.grad(x).map_err(|e| e.to_string())?;
    let (mut worst, mut checked) = (0f64, 0);
    for i in 0..x.len() {
        if f.near_kink(x, i, h) {
            continue;
        }
        let mut up = x.to_vec();
        let mut down = x.to_vec();
        up[i] += h;
        down[i] -= h;
        let num = (f.eval(&up).map_err(|e| e.to_string())? - f.eval(&down).map_err(|e| e.to_string())?) / (2.0 * h);
        let scale = g[i].abs().max(num.abs()).max(1e-12);
        worst = worst.max((g[i] - num).abs() / scale);
        checked += 1;
    }
    Ok((worst, checked))
}

fn c6_losses() -> Check {
    let e = |r: Result<f64, harmonize::dove::DoveError>| r.map_err(|e| e.to_string());
    let cfg = LossConfig::new(0.01).map_err(|e| e.to_string())?;
    ensure(cfg.lambda == 0.01 && LossConfig::default().lambda == 0.01, || "default lambda".into())?;
    for (real, fake, want) in [(1.0, -1.0, 0.0), (0.0, 0.0, 2.0), (-1.0, 1.0, 4.0)] {
        let got = e(hinge_d_loss(&[real], &[fake]))?;
        ensure(got == want, || format!("hinge_d([{real}], [{fake}]) = {got}"))?;
    }
    for (scores, want) in [(&[0.0][..], 0.0), (&[0.5][..], -0.5), (&[1.0, -1.0][..], 0.0)] {
        let got = e(hinge_g_loss(scores))?;
        ensure(got == want, || format!("hinge_g({scores:?}) = {got}"))?;
    }
    ensure(e(domain_similarity(&[1.0, 2.0], &[3.0, 4.0]))? == 11.0, || "(1,2).(3,4) != 11".into())?;
    ensure(e(reconstruction_loss(&[0.0, 0.5, 0.0, 0.5], &[0.0; 4]))? == 0.25, || "half entries at 0.5".into())?;
    let total = e(generator_total_loss(1.0, -2.0, -3.0, cfg))?;
    ensure(total == 0.95, || format!("generator total {total}"))?;
    let zero_lambda = LossConfig::new(0.0).map_err(|e| e.to_string())?;
    ensure(e(generator_total_loss(0.7, 5.0, 9.0, zero_lambda))? == 0.7, || "lambda 0".into())?;

    let mut rng = ChaCha8Rng::seed_from_u64(66);
    let mut draw = |n: usize| (0..n).map(|_| rng.random_range(-2.0..2.0)).collect::<Vec<f64>>();
    let target = draw(12);
    let nonlinear: Vec<(Box<dyn Differentiable>, Vec<f64>)> = vec![
        (Box::new(HingeDFn { n_real: 5 }), draw(11)),
        (Box::new(ReconstructionFn { target }), draw(12)),
    ];
    let linear: Vec<(Box<dyn Differentiable>, Vec<f64>)> = vec![
        (Box::new(DomainSimilarityFn { dim: 8 }), draw(16)),
        (Box::new(HingeGFn), draw(7)),
        (Box::new(GeneratorTotalFn { cfg }), draw(3)),
    ];
    let (mut worst_nl, mut worst_lin) = (0f64, 0f64);
    for (f, x) in &nonlinear {
        worst_nl = worst_nl.max(fd_error(f.as_ref(), x, 1e-5)?.0);
    }
    for (f, x) in &linear {
        worst_lin = worst_lin.max(fd_error(f.as_ref(), x, 1e-3)?.0);
    }
    let x = [0.3, -1.2, 0.8];
    let g = GeneratorTotalFn { cfg }.grad(&x).map_err(|e| e.to_string())?;
    ensure(g == [1.0, 0.01, 0.01], || format!("generator grad {g:?}"))?;
    let v = [0.5, -0.25, 2.0, 1.0];
    let g = DomainSimilarityFn { dim: 2 }.grad(&v).map_err(|e| e.to_string())?;
    ensure(g == [2.0, 1.0, 0.5, -0.25], || format!("similarity grad {g:?}"))?;
    ensure(worst_nl < 1e-3, || format!("nonlinear grad error {worst_nl:.2e}"))?;
    ensure(worst_lin < 1e-8, || format!("linear grad error {worst_lin:.2e}"))?;
    Ok(format!("examples exact (lambda 0.01); grad err nonlinear {worst_nl:.1e}, linear {worst_lin:.1e}"))
}

fn c7_spectral() -> Check {
    let d = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
    let sn = spectral_normalize(&d, 50, 0).map_err(|e| e.to_string())?;
    let want = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.5]);
    ensure((sn.matrix - want).abs().max() < 1e-9, || "diag(2,1) -> diag(1,0.5)".into())?;

    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst = 0f64;
    for k in 0..100u64 {
        let w = DMatrix::from_fn(8, 8, |_, _| Distribution::<f64>::sample(&StandardNormal, &mut rng));
        let sn = spectral_normalize(&w, 50, k).map_err(|e| e.to_string())?;
        let top = sn.matrix.singular_values().max();
        worst = worst.max((top - 1.0).abs());
    }
    ensure(worst < 1e-3, || format!("top singular value off by {worst:.2e}"))?;
    Ok(format!("100 8x8 matrices, 50 iterations, max |sigma_max - 1| = {worst:.1e} (SVD oracle)"))
}

fn bt_log_likelihood(m: &ComparisonMatrix, log_worth: &[f64]) -> f64 {
    let n = log_worth.len();
    let mut ll = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let p = 1.0 / (1.0 + (log_worth[j] - log_worth[i]).exp());
                ll += m.wins(i, j) as f64 * p.ln();
            }
        }
    }
    ll
}

fn c8_bradley_terry() -> Check {
    let start = Instant::now();
    let fit = |m: &ComparisonMatrix| fit_bradley_terry(m, FitOptions::default()).map_err(|e| e.to_string());
    let two = ComparisonMatrix::from_counts(vec!["a".into(), "b".into()], vec![vec![0, 75], vec![25, 0]])
        .map_err(|e| e.to_string())?;
    let s = fit(&two)?;
    let ratio = (s.log_worth[0] - s.log_worth[1]).exp();
    ensure((ratio - 3.0).abs() < 1e-6, || format!("75/25 ratio {ratio}"))?;

    let truth = [1.0, 2.0, 3.0, 4.0, 5.0];
    let names: Vec<String> = (1..=5).map(|k| format!("m{k}")).collect();
    let mut m = ComparisonMatrix::new(names.clone()).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(88);
    for i in 0..5 {
        for j in i + 1..5 {
            for _ in 0..10_000 {
                if rng.random_bool(truth[i] / (truth[i] + truth[j])) {
                    m.record(&names[i], &names[j]).map_err(|e| e.to_string())?;
                } else {
                    m.record(&names[j], &names[i]).map_err(|e| e.to_string())?;
                }
            }
        }
    }
    let s = fit(&m)?;
    let mut worst = 0f64;
    for i in 1..5 {
        let got = (s.log_worth[i] - s.log_worth[0]).exp();
        worst = worst.max((got / truth[i] - 1.0).abs());
    }
    let trace = &s.log_likelihood;
    let dips = trace.windows(2).filter(|w| w[1] < w[0] - 1e-12 * w[0].abs()).count();
    let ll = bt_log_likelihood(&m, &s.log_worth);
    let secs = start.elapsed().as_secs_f64();
    ensure(worst < 0.05, || format!("worth ratio error {:.2}%", 100.0 * worst))?;
    ensure(dips == 0, || format!("log-likelihood decreased {dips} times"))?;
    ensure((ll - trace[trace.len() - 1]).abs() < 1e-6 * ll.abs(), || "reported log-likelihood differs".into())?;
    ensure(s.converged, || "did not converge".into())?;
    ensure(secs < 5.0, || format!("runtime {secs:.2}s"))?;
    Ok(format!(
        "75/25 ratio {ratio:.9}; 5-method ratios within {:.2}%; {} monotone iterations; {secs:.2}s",
        100.0 * worst,
        s.iterations
    ))
}

fn read_tree(root: &Path) -> Result<BTreeMap<PathBuf, Vec<u8>>, String> {
    let mut out = BTreeMap::new();
    for sub in ["composite", "real", "mask"] {
        let dir = root.join(sub);
        for entry in std::fs::read_dir(&dir).map_err(|e| format!("{}: {e}", dir.display()))? {
            let p = entry.map_err(|e| e.to_string())?.path();
            out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).map_err(|e| e.to_string())?);
        }
    }
    for f in ["manifest.jsonl", "manifest.config"] {
        out.insert(f.into(), std::fs::read(root.join(f)).map_err(|e| e.to_string())?);
    }
    Ok(out)
}

fn c9_pipeline_determinism() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let sources = write_demo_sources(&tmp.path().join("sources"), &DemoSpec::default()).map_err(|e| e.to_string())?;
    let mut trees = Vec::new();
    for (run, workers) in [(1, 1), (2, 3)] {
        let root = tmp.path().join(format!("run{run}"));
        let cfg = RunConfig { seed: 31, workers, ..RunConfig::default() };
        synthesize(&sources, &root, &cfg).map_err(|e| e.to_string())?;
        trees.push((root.clone(), read_tree(&root)?));
    }
    let diff: Vec<_> = trees[0].1.iter().filter(|(k, v)| trees[1].1.get(*k) != Some(v)).map(|(k, _)| k).collect();
    ensure(diff.is_empty() && trees[0].1.len() == trees[1].1.len(), || format!("runs differ: {diff:?}"))?;

    let root = &trees[0].0;
    let manifest = Manifest::load(root.join("manifest.jsonl")).map_err(|e| e.to_string())?;
    let load = |p: &Path| image::open(root.join(p)).map_err(|e| format!("{}: {e}", p.display()));
    let mut bg_pixels = 0usize;
    let mut split_of: BTreeMap<&str, harmonize::synth::Split> = BTreeMap::new();
    for entry in &manifest.entries {
        let rec = &entry.record;
        let comp = load(&rec.composite_path)?.to_rgb8();
        let real = load(&rec.real_path)?.to_rgb8();
        let mask = load(&rec.mask_path)?.to_luma8();
        for ((c, r), m) in comp.pixels().zip(real.pixels()).zip(mask.pixels()) {
            if m.0[0] < 128 {
                ensure(c == r, || format!("{}: background pixel differs", rec.id))?;
                bg_pixels += 1;
            }
        }
        let prev = *split_of.entry(&rec.real_id).or_insert(entry.split);
        ensure(prev == entry.split, || format!("real image {} straddles splits", rec.real_id))?;
    }
    Ok(format!(
        "{} files byte-identical across runs; {} composites, {bg_pixels} background pixels exact; {} real groups unsplit",
        trees[0].1.len(),
        manifest.entries.len(),
        split_of.len()
    ))
}

/// Minimal HTTP/1.1 client over one connection per request.
fn http(port: u16, method: &str, path: &str, session: Option<&str>, body: &str) -> Result<(u16, Vec<u8>), String> {
    let mut s = TcpStream::connect(("127.0.0.1", port)).map_err(|e| e.to_string())?;
    s.set_read_timeout(Some(Duration::from_secs(10))).map_err(|e| e.to_string())?;
    let session = session.map(|t| format!("x-session: {t}\r\n")).unwrap_or_default();
    let req = format!(
        "{method} {path} HTTP/1.1\r\nhost: localhost\r\n{session}content-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
        body.len()
    );
    s.write_all(req.as_bytes()).map_err(|e| e.to_string())?;
    let mut raw = Vec::new();
    s.read_to_end(&mut raw).map_err(|e| e.to_string())?;
    let split = raw.windows(4).position(|w| w == b"\r\n\r\n").ok_or("malformed response")?;
    let head = String::from_utf8_lossy(&raw[..split]);
    let status = head.split_whitespace().nth(1).and_then(|c| c.parse().ok()).ok_or("bad status line")?;
    Ok((status, raw[split + 4..].to_vec()))
}

fn json(port: u16, method: &str, path: &str, session: Option<&str>, body: &str) -> Result<(u16, serde_json::Value), String> {
    let (status, bytes) = http(port, method, path, session, body)?;
    let v = serde_json::from_slice(&bytes).map_err(|e| format!("{method} {path}: {e}"))?;
    Ok((status, v))
}

struct Server(Child, u16);

impl Server {
    fn start(root: &Path, log: &Path, manifest: &Path, duels: &Path) -> Result<Self, String> {
        let mut child = Command::new(env!("CARGO_BIN_EXE_harmonize"))
            .args(["--root".as_ref(), root.as_os_str(), "--seed".as_ref(), "17".as_ref(), "serve".as_ref()])
            .args(["--addr", "127.0.0.1:0"])
            .arg("--log")
            .arg(log)
            .arg("--manifest")
            .arg(manifest)
            .arg("--duels")
            .arg(duels)
            .stdout(Stdio::null())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| e.to_string())?;
        let mut lines = BufReader::new(child.stderr.take().unwrap()).lines();
        let port = loop {
            let line = lines.next().ok_or("server exited before listening")?.map_err(|e| e.to_string())?;
            if let Some(addr) = line.strip_prefix("review service listening on http://") {
                break addr.rsplit(':').next().and_then(|p| p.parse().ok()).ok_or("bad address line")?;
            }
        };
        std::thread::spawn(move || lines.for_each(drop));
        Ok(Self(child, port))
    }

    fn kill(mut self) -> Result<(), String> {
        self.0.kill().map_err(|e| e.to_string())?;
        self.0.wait().map_err(|e| e.to_string())?;
        Ok(())
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn log_lines(log: &Path) -> usize {
    std::fs::read_to_string(log).map(|t| t.lines().count()).unwrap_or(0)
}

fn c10_event_replay() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = tmp.path();
    let sources = write_demo_sources(&root.join("sources"), &DemoSpec::default()).map_err(|e| e.to_string())?;
    synthesize(&sources, root, &RunConfig::default()).map_err(|e| e.to_string())?;
    let manifest_path = root.join("manifest.jsonl");
    let n_items = Manifest::load(&manifest_path).map_err(|e| e.to_string())?.entries.len();

    // Five methods, each a distinct solid image so the rater can tell them apart by bytes.
    let methods = ["m0", "m1", "m2", "m3", "m4"];
    std::fs::create_dir_all(root.join("duel")).map_err(|e| e.to_string())?;
    let mut by_bytes: Vec<(Vec<u8>, usize)> = Vec::new();
    let mut outputs = serde_json::Map::new();
    for (k, m) in methods.iter().enumerate() {
        let rel = format!("duel/{m}.png");
        harmonize::imgcore::write_image(root.join(&rel), &solid(8, 8, k as f64 / 5.0)).map_err(|e| e.to_string())?;
        by_bytes.push((std::fs::read(root.join(&rel)).map_err(|e| e.to_string())?, k));
        outputs.insert(m.to_string(), rel.into());
    }
    let duels = root.join("duels.jsonl");
    let line = serde_json::json!({ "duel_id": "d0", "outputs": outputs, "replicates": 40 });
    std::fs::write(&duels, format!("{line}\n")).map_err(|e| e.to_string())?;
    let log = root.join("review/events.jsonl");

    let mut expected_items: BTreeMap<String, ItemStatus> = BTreeMap::new();
    let mut expected_wins = vec![vec![0u64; 5]; 5];
    let mut sessions: Vec<String> = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let mut submissions = 0usize;
    let mut kills = 0;
    let mut server = Server::start(root, &log, &manifest_path, &duels)?;
    ensure(log_lines(&log) == n_items + 1, || format!("startup wrote {} events", log_lines(&log)))?;
    let mut snapshot = None;

    while log_lines(&log) < 500 {
        if kills == 0 && log_lines(&log) >= 250 {
            server.kill()?;
            kills += 1;
            server = Server::start(root, &log, &manifest_path, &duels)?;
        }
        let port = server.1;
        if sessions.is_empty() || (sessions.len() < 6 && rng.random_bool(0.05)) {
            let (_, v) = json(port, "POST", "/api/session", None, "")?;
            sessions.push(v["session"].as_str().ok_or("no session")?.to_string());
            continue;
        }
        let s = sessions[rng.random_range(0..sessions.len())].clone();
        if rng.random_bool(0.3) {
            let (status, item) = json(port, "GET", "/api/review/next", Some(&s), "")?;
            if status != 200 {
                continue;
            }
            let id = item["item_id"].as_str().ok_or("no item id")?.to_string();
            let (body, want) = if expected_items.len() % 3 == 2 {
                (r#"{"verdict":"reject","reason":"hue_change"}"#, ItemStatus::Rejected { reason: "hue_change".parse().unwrap() })
            } else {
                (r#"{"verdict":"accept"}"#, ItemStatus::Accepted)
            };
            let (status, _) = json(port, "POST", &format!("/api/review/{id}/verdict"), None, body)?;
            ensure(status == 200, || format!("verdict on {id}: {status}"))?;
            expected_items.insert(id, want);
        } else {
            let (status, task) = json(port, "GET", "/api/compare/next", Some(&s), "")?;
            if task["error"] == "exhausted" {
                // This session has seen every pair; a fresh rater joins.
                let (_, v) = json(port, "POST", "/api/session", None, "")?;
                sessions.push(v["session"].as_str().ok_or("no session")?.to_string());
                continue;
            }
            ensure(status == 200, || format!("compare/next: {status} {task}"))?;
            if rng.random_bool(0.1) {
                continue;
            }
            let left = http(port, "GET", task["left_url"].as_str().ok_or("no left url")?, None, "")?.1;
            let right = http(port, "GET", task["right_url"].as_str().ok_or("no right url")?, None, "")?.1;
            let who = |b: &[u8]| by_bytes.iter().find(|(bytes, _)| bytes == b).map(|&(_, k)| k).ok_or("unknown image");
            let (l, r) = (who(&left)?, who(&right)?);
            // Lower index preferred, except on every seventh submission.
            let pick_left = (l < r) != (submissions % 7 == 6);
            let (w, los) = if pick_left { (l, r) } else { (r, l) };
            let body = if pick_left { r#"{"winner":"left"}"# } else { r#"{"winner":"right"}"# };
            let id = task["task_id"].as_str().ok_or("no task id")?;
            let (status, _) = json(port, "POST", &format!("/api/compare/{id}"), Some(&s), body)?;
            ensure(status == 200, || format!("submit {id}: {status}"))?;
            expected_wins[w][los] += 1;
            submissions += 1;
        }
        if log_lines(&log) == 500 {
            let (_, stats) = json(port, "GET", "/api/review/stats", None, "")?;
            let (_, export) = json(port, "GET", "/api/export/comparisons?format=json", None, "")?;
            snapshot = Some((stats, export));
        }
    }
    server.kill()?;
    let events = log_lines(&log);
    ensure(events == 500, || format!("trace has {events} events"))?;
    let (live_stats, live_export) = snapshot.ok_or("no live snapshot")?;

    // Torn write on top of the killed log.
    let mut f = std::fs::OpenOptions::new().append(true).open(&log).map_err(|e| e.to_string())?;
    f.write_all(br#"{"seq":500,"ts_ms":1,"event":{"type":"verd"#).map_err(|e| e.to_string())?;
    drop(f);

    let svc = ReviewService::open(&log, root, ServiceOptions { seed: 17 }).map_err(|e| e.to_string())?;
    let state = svc.state();
    ensure(state.events_applied() == 500, || format!("replayed {} events", state.events_applied()))?;
    for item in state.items() {
        let want = expected_items.get(&item.item_id).copied().unwrap_or(ItemStatus::Pending);
        ensure(item.status == want, || format!("{}: {:?} != {want:?}", item.item_id, item.status))?;
    }
    ensure(state.items().count() == n_items, || "item count".into())?;
    let m = svc.comparison_matrix().map_err(|e| e.to_string())?;
    for i in 0..5 {
        for j in 0..5 {
            let (a, b) = (m.index_of(methods[i]).map_err(|e| e.to_string())?, m.index_of(methods[j]).map_err(|e| e.to_string())?);
            ensure(m.wins(a, b) == expected_wins[i][j], || format!("wins[{i}][{j}] = {} != {}", m.wins(a, b), expected_wins[i][j]))?;
        }
    }
    let (p, a, r) = state.item_counts();
    let replayed_stats = serde_json::json!({ "pending": p, "accepted": a, "rejected": r });
    ensure(replayed_stats == live_stats, || "triage counts differ from live server".into())?;
    ensure(live_export["total"] == serde_json::json!(m.total()), || "comparison total differs from live server".into())?;
    let again = ReviewService::open(&log, root, ServiceOptions { seed: 17 }).map_err(|e| e.to_string())?.state();
    ensure(again == state, || "second replay differs".into())?;
    Ok(format!(
        "500 events, {} kills (SIGKILL) + torn tail; {} verdicts and {submissions} comparisons reconstructed",
        kills + 1,
        expected_items.len()
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 10] = [
        ("color-transfer moment matching", c1_moment_matching),
        ("histogram-match exactness", c2_histogram_exactness),
        ("iterative distribution transfer convergence", c3_pitie_convergence),
        ("metric formulas", c4_metric_formulas),
        ("partial-conv no-leakage", c5_no_leakage),
        ("loss correctness", c6_losses),
        ("spectral normalization", c7_spectral),
        ("bradley-terry recovery", c8_bradley_terry),
        ("pipeline determinism", c9_pipeline_determinism),
        ("event-log replay", c10_event_replay),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
