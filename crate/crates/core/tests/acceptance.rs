//! Acceptance gate: every numbered claim this project makes, measured in one
//! place. Each criterion prints one pass/fail line with its observed values;
//! the test fails if any line fails. Training criteria run desk-scale CPU
//! budgets, so the whole gate takes tens of minutes.

use std::time::{Duration, Instant};

use qtae_core::data::{
    generate_pairs, rotation_factor_space, scene6_factor_space, scene_factor, split_holdout,
    synth_affine_pair, synth_scene_pair, FactorSpace,
};
use qtae_core::lattice::{
    compose_offsets, EmbeddingTensor, FactorSpec, LatticeMode, LatticeOffset, LatticeSpec,
};
use qtae_core::metrics::{psnr, ssim, PSNR_CAP_DB};
use qtae_core::model::{gradcheck_suite, QtaeModel};
use qtae_core::pose::{estimate_offset, offset_abs_error, SearchRange};
use qtae_core::rng::SeedStream;
use qtae_core::tensor::{Padding, Tensor};
use qtae_core::train::{
    evaluate, load_checkpoint, report_capacity, resume, save_checkpoint, tae_pose_estimate,
    train, TrainConfig, TrainMode, TrainedModel,
};

struct Gate {
    lines: Vec<(bool, String)>,
}

impl Gate {
    fn record(&mut self, index: usize, name: &str, passed: bool, detail: String) {
        let verdict = if passed { "pass" } else { "FAIL" };
        let line = format!("{verdict} criterion {index} ({name}): {detail}");
        println!("{line}");
        self.lines.push((passed, line));
    }
}

#[test]
fn acceptance_gate() {
    let mut gate = Gate { lines: Vec::new() };
    criterion_1_shift_algebra(&mut gate);
    criterion_2_gradients(&mut gate);
    criterion_3_cnn_special_case(&mut gate);
    let glyph = criterion_4_equivariant_training(&mut gate);
    criterion_5_pose(&mut gate, &glyph);
    criterion_6_capacity(&mut gate);
    criterion_7_holdout(&mut gate);
    criterion_8_metric_oracles(&mut gate);
    criterion_9_persistence(&mut gate);

    let failures: Vec<&str> =
        gate.lines.iter().filter(|(ok, _)| !ok).map(|(_, l)| l.as_str()).collect();
    assert!(failures.is_empty(), "failed criteria:\n{}", failures.join("\n"));
}

// ---------------------------------------------------------------- criterion 1

fn random_spec(rng: &mut SeedStream, mode: LatticeMode) -> LatticeSpec {
    let t = rng.int_inclusive(1, 4) as usize;
    let factors = (0..t)
        .map(|i| FactorSpec {
            name: format!("f{i}"),
            extent: rng.int_inclusive(1, 8) as usize,
            periodic: rng.index(2) == 0,
            stride: 1 + rng.index(2),
        })
        .collect();
    LatticeSpec::new(factors, rng.int_inclusive(1, 4) as usize, mode).expect("spec in range")
}

fn random_embedding(spec: &LatticeSpec, rng: &mut SeedStream) -> EmbeddingTensor<f64> {
    let tensor = Tensor::random_uniform(&spec.embedding_shape(), -1.0, 1.0, rng);
    EmbeddingTensor::new(spec.clone(), tensor).expect("shape by construction")
}

/// Offset with periodic components free and aperiodic components chosen by
/// `aperiodic`: None = zero, Some(true) = both draws share one sign later.
fn random_offset(spec: &LatticeSpec, rng: &mut SeedStream, aperiodic_magnitude: i64) -> LatticeOffset {
    let components = spec
        .factors
        .iter()
        .map(|f| {
            let d = f.extent as i64;
            if f.periodic {
                rng.int_inclusive(-2 * d, 2 * d)
            } else {
                rng.int_inclusive(-aperiodic_magnitude.min(d), aperiodic_magnitude.min(d))
            }
        })
        .collect();
    LatticeOffset::new(components)
}

/// Direct index-walk shift for product lattices: output[v] = input[v + u*stride],
/// wrapped when periodic, zero when an aperiodic coordinate leaves the axis.
fn product_shift_oracle(y: &EmbeddingTensor<f64>, u: &LatticeOffset) -> Vec<f64> {
    let spec = y.spec();
    let extents: Vec<i64> = spec.factors.iter().map(|f| f.extent as i64).collect();
    let t = extents.len();
    let m = spec.channels;
    let mut site_strides = vec![1usize; t];
    for i in (0..t.saturating_sub(1)).rev() {
        site_strides[i] = site_strides[i + 1] * extents[i + 1] as usize;
    }
    let sites: usize = extents.iter().map(|&d| d as usize).product();
    let data = y.tensor().data();
    let mut out = vec![0.0f64; data.len()];
    for v in 0..sites {
        let mut src_site = 0usize;
        let mut alive = true;
        for axis in 0..t {
            let vi = (v / site_strides[axis]) as i64 % extents[axis];
            let raw = vi + u.components[axis] * spec.factors[axis].stride as i64;
            let wi = if spec.factors[axis].periodic {
                raw.rem_euclid(extents[axis])
            } else if (0..extents[axis]).contains(&raw) {
                raw
            } else {
                alive = false;
                break;
            };
            src_site += wi as usize * site_strides[axis];
        }
        if alive {
            out[v * m..(v + 1) * m].copy_from_slice(&data[src_site * m..(src_site + 1) * m]);
        }
    }
    out
}

/// Per-block shift for additive lattices: rows of block i move by u_i alone.
fn additive_shift_oracle(y: &EmbeddingTensor<f64>, u: &LatticeOffset) -> Vec<f64> {
    let spec = y.spec();
    let m = spec.channels;
    let data = y.tensor().data();
    let mut out = vec![0.0f64; data.len()];
    let mut base = 0usize;
    for (factor, &ui) in spec.factors.iter().zip(&u.components) {
        let d = factor.extent as i64;
        for v in 0..d {
            let raw = v + ui * factor.stride as i64;
            let w = if factor.periodic {
                raw.rem_euclid(d)
            } else if (0..d).contains(&raw) {
                raw
            } else {
                continue;
            };
            let dst = (base + v as usize) * m;
            let src = (base + w as usize) * m;
            out[dst..dst + m].copy_from_slice(&data[src..src + m]);
        }
        base += factor.extent;
    }
    out
}

fn criterion_1_shift_algebra(gate: &mut Gate) {
    let started = Instant::now();
    let mut rng = SeedStream::new(101);
    let mut cases = 0usize;
    let mut bad = 0usize;
    let mut check = |ok: bool| {
        cases += 1;
        if !ok {
            bad += 1;
        }
    };

    for _ in 0..1300 {
        for mode in [LatticeMode::Product, LatticeMode::Additive] {
            let spec = random_spec(&mut rng, mode);
            let y = random_embedding(&spec, &mut rng);

            // composition over periodic components (aperiodic held at zero)
            let u = random_offset(&spec, &mut rng, 0);
            let v = random_offset(&spec, &mut rng, 0);
            let w = compose_offsets(&u, &v, &spec).unwrap();
            check(
                y.shifted(&u).unwrap().shifted(&v).unwrap().tensor().data()
                    == y.shifted(&w).unwrap().tensor().data(),
            );

            // same-sign composition with aperiodic components live
            let a = random_offset(&spec, &mut rng, 8);
            let mut b = random_offset(&spec, &mut rng, 8);
            for (i, f) in spec.factors.iter().enumerate() {
                if !f.periodic && a.components[i].signum() * b.components[i].signum() < 0 {
                    b.components[i] = -b.components[i];
                }
            }
            let ab = compose_offsets(&a, &b, &spec).unwrap();
            check(
                y.shifted(&a).unwrap().shifted(&b).unwrap().tensor().data()
                    == y.shifted(&ab).unwrap().tensor().data(),
            );

            // roll invertibility on the periodic components
            let r = random_offset(&spec, &mut rng, 0);
            check(y.shifted(&r).unwrap().shifted(&r.negated()).unwrap().tensor().data() == y.tensor().data());

            // mode-specific enumeration oracle, arbitrary signs throughout
            let full = random_offset(&spec, &mut rng, 8);
            let expect = match mode {
                LatticeMode::Product => product_shift_oracle(&y, &full),
                LatticeMode::Additive => additive_shift_oracle(&y, &full),
            };
            check(y.shifted(&full).unwrap().tensor().data() == expect.as_slice());
        }
    }

    let elapsed = started.elapsed();
    let passed = bad == 0 && cases >= 10_000 && elapsed < Duration::from_secs(60);
    gate.record(
        1,
        "shift algebra",
        passed,
        format!("{cases} cases, {bad} mismatches, {:.1}s (budget 60s)", elapsed.as_secs_f64()),
    );
}

// ---------------------------------------------------------------- criterion 2

fn criterion_2_gradients(gate: &mut Gate) {
    let started = Instant::now();
    let cases = gradcheck_suite(202, 20, 1e-6, 1e-4).expect("suite construction");
    let elapsed = started.elapsed();
    let all_pass = cases.iter().all(|c| c.report.passed);
    let worst_op = cases
        .iter()
        .filter(|c| !c.stack)
        .map(|c| c.report.max_rel_diff)
        .fold(0.0f64, f64::max);
    let worst_stack = cases
        .iter()
        .filter(|c| c.stack)
        .map(|c| c.report.max_rel_diff)
        .fold(0.0f64, f64::max);
    let passed = all_pass && elapsed < Duration::from_secs(120);
    gate.record(
        2,
        "gradient checks",
        passed,
        format!(
            "{} checks x 20 instances, max rel {:.2e} ops / {:.2e} stacks, {:.1}s (budget 120s)",
            cases.len(),
            worst_op,
            worst_stack,
            elapsed.as_secs_f64()
        ),
    );
}

// ---------------------------------------------------------------- criterion 3

fn criterion_3_cnn_special_case(gate: &mut Gate) {
    let spec = LatticeSpec::new(
        vec![FactorSpec::aperiodic("dy", 2), FactorSpec::aperiodic("dx", 2)],
        2,
        LatticeMode::Product,
    )
    .unwrap();
    let model = QtaeModel::<f32>::new([1, 32, 32], spec, Padding::Circular(1), 303).unwrap();
    let mut rng = SeedStream::new(304);
    let pixels_per_step = 16i64; // 32-pixel frame over a 2-cell axis
    let mut max_dev = 0f32;
    for _ in 0..100 {
        let x = Tensor::<f32>::random_uniform(&[1, 32, 32], 0.0, 1.0, &mut rng);
        let (dy, dx) = loop {
            let pair = (rng.int_inclusive(0, 1), rng.int_inclusive(0, 1));
            if pair != (0, 0) {
                break pair;
            }
        };
        let mut moved = Tensor::<f32>::zeros(&[1, 32, 32]);
        for row in 0..32usize {
            for col in 0..32usize {
                let sr = (row as i64 + pixels_per_step * dy).rem_euclid(32) as usize;
                let sc = (col as i64 + pixels_per_step * dx).rem_euclid(32) as usize;
                moved.data_mut()[row * 32 + col] = x.data()[sr * 32 + sc];
            }
        }
        let base = model.encode(&x).unwrap();
        let rolled = model.encode(&moved).unwrap();
        let m = 2usize;
        for v0 in 0..2i64 {
            for v1 in 0..2i64 {
                for c in 0..m {
                    let s0 = (v0 + dy).rem_euclid(2) as usize;
                    let s1 = (v1 + dx).rem_euclid(2) as usize;
                    let expect = base.tensor().data()[(s0 * 2 + s1) * m + c];
                    let got = rolled.tensor().data()[((v0 as usize) * 2 + v1 as usize) * m + c];
                    max_dev = max_dev.max((expect - got).abs());
                }
            }
        }
    }
    gate.record(
        3,
        "translation equals roll",
        max_dev < 1e-5,
        format!("100 cases, max abs deviation {max_dev:.2e} (tolerance 1e-5)"),
    );
}

// ------------------------------------------------------------- criteria 4 & 5

struct GlyphArtifacts {
    model: TrainedModel,
    spec: LatticeSpec,
    config: TrainConfig,
    test_pairs: Vec<qtae_core::data::SamplePair>,
}

fn criterion_4_equivariant_training(gate: &mut Gate) -> GlyphArtifacts {
    let started = Instant::now();
    let space = rotation_factor_space(8).unwrap();
    let train_pairs = generate_pairs(&space, 2000, 404, synth_affine_pair).unwrap();
    let test_pairs = generate_pairs(&space, 500, 405, synth_affine_pair).unwrap();
    let mut config = TrainConfig::new(TrainMode::QtaeProduct, space.lattice_factors(), 16, 406);
    config.epochs = 40;
    config.batch_size = 16;
    config.learning_rates = vec![1e-3];
    let outcome = train(&config, &train_pairs).unwrap();
    let (model, _, _) = outcome.checkpoint.instantiate().unwrap();
    let report = evaluate(&model, &test_pairs).unwrap();
    let elapsed = started.elapsed();

    let gap = report.model.psnr - report.mean_baseline.psnr;
    let passed = gap >= 6.0
        && report.model.ssim > report.mean_baseline.ssim
        && elapsed < Duration::from_secs(30 * 60);
    gate.record(
        4,
        "equivariant training",
        passed,
        format!(
            "test {:.2} dB / ssim {:.4} vs baseline {:.2} dB / ssim {:.4}; gap {gap:+.2} dB (need >= +6), {:.0}s (budget 1800s)",
            report.model.psnr,
            report.model.ssim,
            report.mean_baseline.psnr,
            report.mean_baseline.ssim,
            elapsed.as_secs_f64()
        ),
    );
    let spec = config.lattice().unwrap();
    GlyphArtifacts { model, spec, config, test_pairs }
}

fn criterion_5_pose(gate: &mut Gate, glyph: &GlyphArtifacts) {
    let TrainedModel::Qtae(qtae) = &glyph.model else {
        gate.record(5, "pose estimation", false, "criterion 4 produced no QTAE model".into());
        return;
    };
    let range = SearchRange::full(&glyph.spec).unwrap();
    let mut exact = 0usize;
    let mut total_err = 0.0f64;
    for pair in &glyph.test_pairs {
        let y1 = qtae.encode(&pair.source).unwrap();
        let y2 = qtae.encode(&pair.target).unwrap();
        let estimate = estimate_offset(&y1, &y2, &range).unwrap();
        let err = offset_abs_error(&glyph.spec, &pair.offset, &estimate.best_offset).unwrap();
        total_err += err;
        if err == 0.0 {
            exact += 1;
        }
    }
    let n = glyph.test_pairs.len();
    let qtae_exact = exact as f64 / n as f64;
    let qtae_mae = total_err / n as f64;

    // continuous baseline under the identical training budget
    let mut tae_config = glyph.config.clone();
    tae_config.mode = TrainMode::TaeBaseline;
    let glyph_space = rotation_factor_space(8).unwrap();
    let train_pairs = generate_pairs(&glyph_space, 2000, 404, synth_affine_pair).unwrap();
    let outcome = train(&tae_config, &train_pairs).unwrap();
    let (tae_model, _, _) = outcome.checkpoint.instantiate().unwrap();
    let TrainedModel::Tae(tae) = &tae_model else {
        gate.record(5, "pose estimation", false, "baseline training produced no TAE model".into());
        return;
    };
    let mut tae_exact_count = 0usize;
    let mut tae_total_err = 0.0f64;
    for pair in &glyph.test_pairs {
        let (_, offset) = tae_pose_estimate(tae, &pair.source, &pair.target, &glyph.spec).unwrap();
        let err = offset_abs_error(&glyph.spec, &pair.offset, &offset).unwrap();
        tae_total_err += err;
        if err == 0.0 {
            tae_exact_count += 1;
        }
    }
    let tae_exact = tae_exact_count as f64 / n as f64;
    let tae_mae = tae_total_err / n as f64;

    let passed = qtae_exact >= 0.90 && qtae_mae <= 0.25 && qtae_exact > tae_exact;
    gate.record(
        5,
        "pose estimation",
        passed,
        format!(
            "exact {:.1}% (need >= 90%), mae {qtae_mae:.3} bins (need <= 0.25); baseline exact {:.1}% / mae {tae_mae:.3}",
            100.0 * qtae_exact,
            100.0 * tae_exact
        ),
    );
}

// ---------------------------------------------------------------- criterion 6

fn reduced_scene_space() -> FactorSpace {
    FactorSpace::new(vec![
        scene_factor("object_colour", 5).unwrap(),
        scene_factor("shape", 4).unwrap(),
        scene_factor("orientation", 5).unwrap(),
    ])
    .unwrap()
}

fn criterion_6_capacity(gate: &mut Gate) {
    let spec = LatticeSpec::new(scene6_factor_space().lattice_factors(), 4, LatticeMode::Product)
        .unwrap();
    let report = report_capacity(&spec, [3, 32, 32]).unwrap();
    let counts_ok = report.product_cells == 1_920_000 && report.additive_cells == 228;

    // trend: the additive embedding stays competitive at desk scale
    let space = reduced_scene_space();
    let train_pairs = generate_pairs(&space, 2000, 606, synth_scene_pair).unwrap();
    let eval_pairs = generate_pairs(&space, 400, 607, synth_scene_pair).unwrap();
    let mut product_config =
        TrainConfig::new(TrainMode::QtaeProduct, space.lattice_factors(), 4, 608);
    product_config.epochs = 12;
    product_config.batch_size = 16;
    product_config.learning_rates = vec![1e-3];
    let mut additive_config = product_config.clone();
    additive_config.mode = TrainMode::QtaeAdditive;

    let product = train(&product_config, &train_pairs).unwrap();
    let (product_model, _, _) = product.checkpoint.instantiate().unwrap();
    let product_psnr = evaluate(&product_model, &eval_pairs).unwrap().model.psnr;
    let additive = train(&additive_config, &train_pairs).unwrap();
    let (additive_model, _, _) = additive.checkpoint.instantiate().unwrap();
    let additive_psnr = evaluate(&additive_model, &eval_pairs).unwrap().model.psnr;

    let within = additive_psnr >= product_psnr - 3.0;
    gate.record(
        6,
        "additive vs product capacity",
        counts_ok && within,
        format!(
            "cells {} / {} (want 1920000 / 228); additive {additive_psnr:.2} dB vs product {product_psnr:.2} dB (within 3 dB: {within})",
            report.product_cells, report.additive_cells
        ),
    );
}

// ---------------------------------------------------------------- criterion 7

fn criterion_7_holdout(gate: &mut Gate) {
    let started = Instant::now();
    let space = reduced_scene_space();
    let excluded = [("object_colour".to_string(), 3), ("shape".to_string(), 1)];
    let raw_train = generate_pairs(&space, 2400, 707, synth_scene_pair).unwrap();
    let (train_pairs, _) = split_holdout(raw_train, &space, &excluded).unwrap();
    let raw_eval = generate_pairs(&space, 3000, 708, synth_scene_pair).unwrap();
    let (in_dist_all, excluded_eval) = split_holdout(raw_eval, &space, &excluded).unwrap();
    let in_dist_eval: Vec<_> = in_dist_all.into_iter().take(300).collect();

    let mut config = TrainConfig::new(TrainMode::QtaeProduct, space.lattice_factors(), 4, 709);
    config.epochs = 30;
    config.batch_size = 16;
    config.learning_rates = vec![1e-3];
    let qtae = train(&config, &train_pairs).unwrap();
    let (qtae_model, _, _) = qtae.checkpoint.instantiate().unwrap();
    let qtae_in = evaluate(&qtae_model, &in_dist_eval).unwrap().model.psnr;
    let qtae_ex = evaluate(&qtae_model, &excluded_eval).unwrap().model.psnr;

    let mut tae_config = config.clone();
    tae_config.mode = TrainMode::TaeBaseline;
    let tae = train(&tae_config, &train_pairs).unwrap();
    let (tae_model, _, _) = tae.checkpoint.instantiate().unwrap();
    let tae_ex = evaluate(&tae_model, &excluded_eval).unwrap().model.psnr;

    let elapsed = started.elapsed();
    let within = qtae_ex >= qtae_in - 3.0;
    let margin = qtae_ex - tae_ex;
    let passed = within && margin >= 2.0 && elapsed < Duration::from_secs(45 * 60);
    gate.record(
        7,
        "compositional holdout",
        passed,
        format!(
            "excluded {qtae_ex:.2} dB vs in-dist {qtae_in:.2} dB (within 3 dB: {within}); baseline excluded {tae_ex:.2} dB, margin {margin:+.2} dB (need >= +2); {:.0}s (budget 2700s)",
            elapsed.as_secs_f64()
        ),
    );
}

// ---------------------------------------------------------------- criterion 8

fn gaussian_kernel_11() -> [[f64; 11]; 11] {
    let mut kernel = [[0.0f64; 11]; 11];
    let mut sum = 0.0;
    for (i, row) in kernel.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let dy = i as f64 - 5.0;
            let dx = j as f64 - 5.0;
            *v = (-(dy * dy + dx * dx) / (2.0 * 1.5 * 1.5)).exp();
            sum += *v;
        }
    }
    for row in kernel.iter_mut() {
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    kernel
}

fn psnr_oracle(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    let mse = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.len() as f64;
    10.0 * (1.0 / mse).log10()
}

/// Windowed double-sum SSIM straight from the definition.
fn ssim_oracle(a: &Tensor<f64>, b: &Tensor<f64>, kernel: &[[f64; 11]; 11]) -> f64 {
    let (c, h, w) = match a.shape() {
        [h, w] => (1, *h, *w),
        [c, h, w] => (*c, *h, *w),
        other => panic!("oracle on non-image shape {other:?}"),
    };
    let (c1, c2) = (1e-4, 9e-4);
    let plane = h * w;
    let mut total = 0.0;
    for ch in 0..c {
        let pa = &a.data()[ch * plane..(ch + 1) * plane];
        let pb = &b.data()[ch * plane..(ch + 1) * plane];
        let mut acc = 0.0;
        let mut count = 0usize;
        for top in 0..=(h - 11) {
            for left in 0..=(w - 11) {
                let (mut ma, mut mb) = (0.0, 0.0);
                for (i, row) in kernel.iter().enumerate() {
                    for (j, k) in row.iter().enumerate() {
                        let px = (top + i) * w + left + j;
                        ma += k * pa[px];
                        mb += k * pb[px];
                    }
                }
                let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
                for (i, row) in kernel.iter().enumerate() {
                    for (j, k) in row.iter().enumerate() {
                        let px = (top + i) * w + left + j;
                        va += k * (pa[px] - ma) * (pa[px] - ma);
                        vb += k * (pb[px] - mb) * (pb[px] - mb);
                        cov += k * (pa[px] - ma) * (pb[px] - mb);
                    }
                }
                acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                    / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                count += 1;
            }
        }
        total += acc / count as f64;
    }
    total / c as f64
}

fn criterion_8_metric_oracles(gate: &mut Gate) {
    let kernel = gaussian_kernel_11();
    let shapes: [&[usize]; 4] = [&[1, 16, 16], &[3, 16, 16], &[1, 20, 24], &[3, 12, 13]];
    let mut rng = SeedStream::new(808);
    let mut worst_psnr = 0.0f64;
    let mut worst_ssim = 0.0f64;
    for case in 0..1000 {
        let shape = shapes[case % shapes.len()];
        let a = Tensor::<f64>::random_uniform(shape, 0.0, 1.0, &mut rng);
        let b = Tensor::<f64>::random_uniform(shape, 0.0, 1.0, &mut rng);
        worst_psnr = worst_psnr.max((psnr(&a, &b, 1.0).unwrap() - psnr_oracle(&a, &b)).abs());
        worst_ssim = worst_ssim.max((ssim(&a, &b).unwrap() - ssim_oracle(&a, &b, &kernel)).abs());
    }

    let img = Tensor::<f64>::random_uniform(&[3, 16, 16], 0.0, 1.0, &mut rng);
    let zeros = Tensor::<f64>::zeros(&[16, 16]);
    let ones = Tensor::<f64>::filled(&[16, 16], 1.0);
    let tenth = Tensor::<f64>::filled(&[16, 16], 0.1);
    let anchors = psnr(&img, &img, 1.0).unwrap() == PSNR_CAP_DB
        && ssim(&img, &img).unwrap() == 1.0
        && (psnr(&zeros, &tenth, 1.0).unwrap() - 20.0).abs() < 1e-9
        && psnr(&zeros, &ones, 1.0).unwrap().abs() < 1e-9
        && (ssim(&zeros, &ones).unwrap() - 1e-4 / (1.0 + 1e-4)).abs() < 1e-12;

    let passed = worst_psnr < 1e-6 && worst_ssim < 1e-6 && anchors;
    gate.record(
        8,
        "metric oracles",
        passed,
        format!(
            "1000 pairs, max |Δpsnr| {worst_psnr:.2e}, max |Δssim| {worst_ssim:.2e} (tolerance 1e-6); anchors {anchors}"
        ),
    );
}

// ---------------------------------------------------------------- criterion 9

fn criterion_9_persistence(gate: &mut Gate) {
    let space = rotation_factor_space(2).unwrap();
    let pairs = generate_pairs(&space, 8, 901, synth_affine_pair).unwrap();
    let mut config = TrainConfig::new(TrainMode::QtaeProduct, space.lattice_factors(), 2, 902);
    config.epochs = 4;
    config.batch_size = 4;
    config.learning_rates = vec![1e-3];

    let full = train(&config, &pairs).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("checkpoint.bin");
    save_checkpoint(&full.checkpoint, &path).unwrap();
    let loaded = load_checkpoint(&path).unwrap();
    let round_trip = loaded.to_bytes().unwrap() == full.checkpoint.to_bytes().unwrap();

    let mut half_config = config.clone();
    half_config.epochs = 2;
    let half = train(&half_config, &pairs).unwrap();
    let resumed = resume(&half.checkpoint, &pairs, 4).unwrap();
    let resume_exact =
        resumed.checkpoint.to_bytes().unwrap() == full.checkpoint.to_bytes().unwrap();

    gate.record(
        9,
        "persistence",
        round_trip && resume_exact,
        format!("save/load bit-identical: {round_trip}; resumed run bit-identical: {resume_exact}"),
    );
}
