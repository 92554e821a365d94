//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::path::Path;
use std::time::Instant;

use odos::channels::{ablation_channels, Ablation};
use odos::cli::{cmd_prepare, GlobalArgs, PrepareCmd};
use odos::dataset::{decode_dataset, encode_dataset};
use odos::filter::{cascade_with, multi_step, sweep_with, FilterConfig, OrientationSweepResult};
use odos::image::{save_image, BinaryMask, GrayImage};
use odos::metrics::{confusion, score, ConfusionCounts};
use odos::stick::{build_kernel, orientation_angle, orientation_count, Offset};
use odos::vector::theta_map;
use odos::Execution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> GrayImage {
    GrayImage::from_fn(w, h, |_, _| rng.random::<f64>())
}

/// Direct per-pixel loop: clamp every sample, sum in kernel order, keep the
/// first strict maximum.
fn naive_sweep(img: &GrayImage, length: usize, spacing: u32, kappa: f64) -> (Vec<f64>, Vec<f64>, Vec<Option<usize>>) {
    let (w, h) = (img.width() as isize, img.height() as isize);
    let kernels: Vec<_> = (1..=orientation_count(length).unwrap())
        .map(|i| build_kernel(length, spacing, i).unwrap())
        .collect();
    let px = |x: isize, y: isize, o: &Offset| {
        let sx = (x + o.dx).clamp(0, w - 1) as usize;
        let sy = (y + o.dy).clamp(0, h - 1) as usize;
        img.data()[sy * w as usize + sx]
    };
    let n = length as f64;
    let mut f_max = Vec::new();
    let mut f_min = Vec::new();
    let mut theta = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let mut best_max = f64::NEG_INFINITY;
            let mut best_min = f64::NEG_INFINITY;
            let mut arg = 0;
            for k in &kernels {
                let (mut sl, mut sm, mut sq, mut sr) = (0.0, 0.0, 0.0, 0.0);
                for j in 0..length {
                    let m = px(x, y, &k.middle[j]);
                    sl += px(x, y, &k.left[j]);
                    sm += m;
                    sq += m * m;
                    sr += px(x, y, &k.right[j]);
                }
                let (ul, um, ur) = (sl / n, sm / n, sr / n);
                let sigma = (sq / n - um * um).max(0.0).sqrt();
                let (a, b) = (um - ul, um - ur);
                let lmax = a.max(b) - kappa * sigma;
                let lmin = a.min(b) - kappa * sigma;
                if lmax > best_max {
                    best_max = lmax;
                    arg = k.index;
                }
                if lmin > best_min {
                    best_min = lmin;
                }
            }
            f_max.push(best_max.max(0.0));
            f_min.push(best_min.max(0.0));
            theta.push((best_max > 0.0).then_some(arg));
        }
    }
    (f_max, f_min, theta)
}

fn same_bits(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

fn sweep_matches(r: &OrientationSweepResult, o: &(Vec<f64>, Vec<f64>, Vec<Option<usize>>)) -> bool {
    same_bits(r.f_max.data(), &o.0) && same_bits(r.f_min.data(), &o.1) && r.theta.iter().eq(o.2.iter().copied())
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let images: Vec<GrayImage> = (0..100).map(|_| random_image(&mut rng, 32, 32)).collect();
    let mut mismatches = Vec::new();
    for length in [3, 5, 7] {
        for spacing in [1, 2, 3] {
            let cfg = FilterConfig::new(length, vec![spacing], 0.7).unwrap();
            for (k, img) in images.iter().enumerate() {
                let oracle = naive_sweep(img, length, spacing, 0.7);
                let cascade_oracle = naive_sweep(&GrayImage::new(32, 32, oracle.1.clone()).unwrap(), length, spacing, 0.7).0;
                for exec in executions() {
                    let r = sweep_with(img, &cfg, spacing, exec).unwrap();
                    let c = cascade_with(img, &cfg, spacing, exec).unwrap();
                    if !sweep_matches(&r, &oracle) || !same_bits(c.data(), &cascade_oracle) {
                        mismatches.push(format!("L={length} S={spacing} image {k} {exec:?}"));
                    }
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        mismatches.is_empty() && secs < 60.0,
        format!(
            "100 images x 9 (L,S), sweep and cascade bit-exact in every execution mode; {} mismatches; {secs:.1}s",
            mismatches.len()
        ),
    )
}

fn executions() -> Vec<Execution> {
    #[allow(unused_mut)]
    let mut v = vec![Execution::Sequential];
    #[cfg(feature = "parallel")]
    v.push(Execution::Parallel);
    v
}

fn peak(img: &GrayImage) -> f64 {
    img.min_max().1
}

fn step_edge_suppression() -> Outcome {
    let edge = GrayImage::from_fn(64, 64, |x, _| if x >= 32 { 1.0 } else { 0.0 });
    let line = GrayImage::from_fn(64, 64, |x, _| if x == 32 { 1.0 } else { 0.0 });
    let cfg = FilterConfig::new(7, vec![1, 2, 3], 0.7).unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for s in [1, 2, 3] {
        let line_peak = peak(&cascade_with(&line, &cfg, s, Execution::default()).unwrap());
        let edge_cascade = peak(&cascade_with(&edge, &cfg, s, Execution::default()).unwrap());
        let edge_fmax = peak(&sweep_with(&edge, &cfg, s, Execution::default()).unwrap().f_max);
        let (rc, rf) = (edge_cascade / line_peak, edge_fmax / line_peak);
        ok &= line_peak > 0.0 && rc <= 0.05 && rf > 0.2;
        parts.push(format!("S={s}: cascade {rc:.3}, f_max {rf:.3}"));
    }
    check(ok, format!("edge/line peak (L=7) {}", parts.join("; ")))
}

/// Anti-aliased unit-contrast line through the image center at `deg`
/// (intensity 1 - d at perpendicular distance d) and its centerline pixels.
fn draw_line(n: usize, deg: f64) -> (GrayImage, Vec<(usize, usize)>) {
    let c = (n / 2) as f64;
    let (s, co) = deg.to_radians().sin_cos();
    let mut pts = Vec::new();
    let img = GrayImage::from_fn(n, n, |x, y| {
        let d = ((y as f64 - c) * co - (x as f64 - c) * s).abs();
        if d < 0.5 {
            pts.push((x, y));
        }
        (1.0 - d).max(0.0)
    });
    (img, pts)
}

fn orientation_correctness() -> Outcome {
    let (length, n, margin) = (7, 64, 12);
    let mut worst = (f64::INFINITY, 0);
    let mut per_angle = Vec::new();
    for spacing in [1, 2, 3] {
        let cfg = FilterConfig::new(length, vec![spacing], 0.7).unwrap();
        for i in 1..=orientation_count(length).unwrap() {
            let (img, pts) = draw_line(n, orientation_angle(i, length).unwrap());
            let tmap = theta_map(&img, &cfg, spacing).unwrap();
            let interior: Vec<_> = pts
                .iter()
                .filter(|&&(x, y)| x >= margin && y >= margin && x < n - margin && y < n - margin)
                .collect();
            let hits = interior.iter().filter(|&&&(x, y)| tmap.get(x, y) == Some(i)).count();
            let frac = hits as f64 / interior.len() as f64;
            if frac < worst.0 {
                worst = (frac, i);
            }
            if spacing == 1 {
                per_angle.push(format!("{:.0}", frac * 100.0));
            }
        }
    }
    check(
        worst.0 >= 0.9,
        format!(
            "L=7, S=1..3: worst {:.1}% (index {}); S=1 per-index % [{}]",
            worst.0 * 100.0,
            worst.1,
            per_angle.join(" ")
        ),
    )
}

fn interior_rel_err(a: &GrayImage, b: &GrayImage, factor: f64, margin: usize) -> f64 {
    let mut worst = 0.0f64;
    for y in margin..a.height() - margin {
        for x in margin..a.width() - margin {
            let (got, want) = (a.get(x, y), b.get(x, y) * factor);
            let err = (got - want).abs();
            let rel = if want.abs() > 1e-12 { err / want.abs() } else { err };
            worst = worst.max(rel);
        }
    }
    worst
}

fn homogeneity_and_shift() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let cfg = FilterConfig::default();
    let mut worst_scale = 0.0f64;
    let mut worst_shift = 0.0f64;
    let mut theta_same = true;
    for _ in 0..5 {
        let img = GrayImage::from_fn(48, 48, |_, _| rng.random::<f64>() * 0.8);
        let scaled = img.map(|v| v * 3.7);
        let shifted = img.map(|v| v + 0.2);
        for &s in &cfg.spacings {
            let margin = 2 * build_kernel(cfg.length, s, 1).unwrap().radius().max(1) + 2;
            let base = sweep_with(&img, &cfg, s, Execution::default()).unwrap();
            let base_c = cascade_with(&img, &cfg, s, Execution::default()).unwrap();
            for (other, factor) in [(&scaled, 3.7), (&shifted, 1.0)] {
                let r = sweep_with(other, &cfg, s, Execution::default()).unwrap();
                let c = cascade_with(other, &cfg, s, Execution::default()).unwrap();
                let e = interior_rel_err(&r.f_max, &base.f_max, factor, margin)
                    .max(interior_rel_err(&r.f_min, &base.f_min, factor, margin))
                    .max(interior_rel_err(&c, &base_c, factor, margin));
                if factor == 1.0 {
                    worst_shift = worst_shift.max(e);
                } else {
                    worst_scale = worst_scale.max(e);
                }
                theta_same &= r.theta == base.theta;
            }
        }
    }
    check(
        worst_scale <= 1e-9 && worst_shift <= 1e-9 && theta_same,
        format!("x3.7 worst rel err {worst_scale:.2e}, +0.2 worst rel err {worst_shift:.2e}, theta identical: {theta_same}"),
    )
}

fn metrics_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut exact = true;
    let mut worst_ulps = 0u64;
    for _ in 0..1000 {
        let c = ConfusionCounts {
            tp: rng.random_range(0..100_000),
            fp: rng.random_range(0..100_000),
            fn_: rng.random_range(0..100_000),
            tn: rng.random_range(0..1_000_000),
        };
        let r = score(&c);
        let union = c.tp + c.fp + c.fn_;
        if union == 0 {
            continue;
        }
        // IoU = tp/u, so 2·IoU/(1+IoU) = 2tp/(u+tp) as an exact fraction;
        // F1 must be that fraction rounded once.
        let (num, den) = (2 * c.tp, union + c.tp);
        exact &= r.iou.to_bits() == (c.tp as f64 / union as f64).to_bits();
        exact &= r.f1.to_bits() == (num as f64 / den as f64).to_bits();
        // and it agrees with 2·PR·SE/(PR+SE) written over the same counts
        exact &= (num as u128) * ((c.tp + c.fp) as u128 + (c.tp + c.fn_) as u128)
            == 2 * (c.tp as u128) * (den as u128);
        let float_form = 2.0 * r.iou / (1.0 + r.iou);
        worst_ulps = worst_ulps.max(r.f1.to_bits().abs_diff(float_form.to_bits()));
    }
    exact &= worst_ulps <= 2;

    let mut brute_ok = true;
    for k in 0..50 {
        let (w, h) = (rng.random_range(1..40), rng.random_range(1..40));
        let pred = BinaryMask::from_fn(w, h, |_, _| rng.random_bool(0.3));
        let gt = BinaryMask::from_fn(w, h, |_, _| rng.random_bool(0.4));
        let fov = BinaryMask::from_fn(w, h, |_, _| rng.random_bool(0.8));
        let use_fov = k % 2 == 0;
        let mut b = ConfusionCounts::default();
        for y in 0..h {
            for x in 0..w {
                if use_fov && !fov.get(x, y) {
                    continue;
                }
                match (pred.get(x, y), gt.get(x, y)) {
                    (true, true) => b.tp += 1,
                    (true, false) => b.fp += 1,
                    (false, true) => b.fn_ += 1,
                    (false, false) => b.tn += 1,
                }
            }
        }
        brute_ok &= confusion(&pred, &gt, use_fov.then_some(&fov)).unwrap() == b;
    }
    check(
        exact && brute_ok,
        format!(
            "1000 counts: F1 is the once-rounded 2·IoU/(1+IoU) fraction: {exact} (float form within {worst_ulps} ulp); brute-force confusion on 50 masks: {brute_ok}"
        ),
    )
}

fn write_toy_dataset(dir: &Path) {
    std::fs::create_dir_all(dir.join("images")).unwrap();
    std::fs::create_dir_all(dir.join("labels")).unwrap();
    for k in 0..3usize {
        let (w, h) = (150 + 10 * k, 140);
        let on = |x: usize, y: usize| (x + 2 * y + 7 * k) % 23 == 0 || y == 40 + 10 * k;
        let img = GrayImage::from_fn(w, h, |x, y| if on(x, y) { 0.85 } else { 0.15 + 0.001 * ((x * y) % 50) as f64 });
        save_image(&img, dir.join("images").join(format!("{k:02}.png"))).unwrap();
        save_image(&BinaryMask::from_fn(w, h, on), dir.join("labels").join(format!("{k:02}.png"))).unwrap();
    }
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    write_toy_dataset(&data);
    let run = |name: &str, jobs: usize| {
        let out = tmp.path().join(name);
        let cmd = PrepareCmd {
            dataset: Some(data.clone()),
            output: Some(out.clone()),
            seed: Some(42),
            patches_per_image: Some(6),
            augmentations: Some(3),
            ..Default::default()
        };
        let code = cmd_prepare(&cmd, &GlobalArgs { config: None, jobs: Some(jobs) });
        (code, std::fs::read(out).unwrap_or_default())
    };
    let (c1, a) = run("a.odst", 1);
    let (c2, b) = run("b.odst", 1);
    let (c3, c) = run("c.odst", 8);
    let codes_ok = [c1, c2, c3] == [0, 0, 0];
    let same = !a.is_empty() && a == b && a == c;
    let round_trip = match decode_dataset(&a) {
        Ok((header, samples)) => {
            header.count == 18 && header.channels == 4 && encode_dataset(&samples).map(|bytes| bytes == a).unwrap_or(false)
        }
        Err(_) => false,
    };
    check(
        codes_ok && same && round_trip,
        format!(
            "exit codes {:?}; {} bytes; run1 == run2: {}; jobs 1 == jobs 8: {}; decode/encode identical: {round_trip}",
            [c1, c2, c3],
            a.len(),
            !a.is_empty() && a == b,
            !a.is_empty() && a == c
        ),
    )
}

fn blob_suppression() -> Outcome {
    let (w, h) = (96, 64);
    let (bx, by) = (24.0, 32.0);
    let img = GrayImage::from_fn(w, h, |x, y| {
        let (dx, dy) = (x as f64 - bx, y as f64 - by);
        let blob = (-(dx * dx + dy * dy) / (2.0 * 2.0 * 2.0)).exp();
        if x == 70 {
            1.0
        } else {
            blob
        }
    });
    let cfg = FilterConfig::new(7, vec![1, 2, 3], 0.7).unwrap();
    let ms = multi_step(&img, &cfg).unwrap();
    let mut blob_peak = 0.0f64;
    let mut line_peak = 0.0f64;
    for y in 0..h {
        for x in 0..w {
            let v = ms.get(x, y);
            if x < 48 {
                blob_peak = blob_peak.max(v);
            } else {
                line_peak = line_peak.max(v);
            }
        }
    }
    let ratio = line_peak / blob_peak.max(f64::MIN_POSITIVE);
    // multi-step plane of the channel stack is the same map
    let plane = ablation_channels(&img, &Default::default(), Ablation::MultistepOnly).unwrap();
    let consistent = plane.plane(0) == &ms;
    check(
        ratio >= 5.0 && consistent,
        format!("kappa=0.7, sigma=2 blob: line peak {line_peak:.3} / blob peak {blob_peak:.3} = {ratio:.1}"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 7] = [
        ("sweep equals naive per-pixel oracle", oracle_equivalence),
        ("step-edge suppression by the cascade", step_edge_suppression),
        ("orientation index on drawn lines", orientation_correctness),
        ("homogeneity and shift invariance", homogeneity_and_shift),
        ("F1/IoU identity and brute-force confusion", metrics_identity),
        ("prepare determinism and ODST round trip", determinism),
        ("blob suppression", blob_suppression),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        match f() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
