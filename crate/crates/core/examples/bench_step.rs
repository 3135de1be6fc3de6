use qtae_core::data::{generate_pairs, split_holdout, synth_scene_pair, FactorDef, FactorSpace};
use qtae_core::train::{evaluate, train, TrainConfig, TrainMode};
use std::time::Instant;

fn main() {
    let space = FactorSpace::new(vec![
        FactorDef::aperiodic("object_colour", 5, 0.0, 9.0),
        FactorDef::aperiodic("shape", 4, 0.0, 3.0),
        FactorDef::periodic("orientation", 5, 0.0, std::f64::consts::TAU),
    ])
    .unwrap();
    let excluded = [("object_colour".to_string(), 3), ("shape".to_string(), 1)];

    let raw_train = generate_pairs(&space, 2400, 31, synth_scene_pair).unwrap();
    let (train_pairs, _) = split_holdout(raw_train, &space, &excluded).unwrap();
    let raw_eval = generate_pairs(&space, 3000, 32, synth_scene_pair).unwrap();
    let (in_dist_all, excluded_eval) = split_holdout(raw_eval, &space, &excluded).unwrap();
    let in_dist_eval: Vec<_> = in_dist_all.into_iter().take(300).collect();
    eprintln!(
        "train {} | in-dist eval {} | excluded eval {}",
        train_pairs.len(),
        in_dist_eval.len(),
        excluded_eval.len()
    );

    for (tag, mode, epochs) in [
        ("additive m=16", TrainMode::QtaeAdditive, 80),
        ("tae m=16", TrainMode::TaeBaseline, 80),
        ("product m=16", TrainMode::QtaeProduct, 60),
    ] {
        let mut config = TrainConfig::new(mode, space.lattice_factors(), 16, 77);
        config.epochs = epochs;
        config.batch_size = 16;
        config.learning_rates = vec![1e-3];
        let t = Instant::now();
        let out = train(&config, &train_pairs).unwrap();
        eprintln!("[{tag}] {} epochs in {:?}", epochs, t.elapsed());
        for s in &out.sweep {
            for r in s.curve.iter().step_by(5) {
                eprintln!("  epoch {} loss {:.4} val_psnr {:.2}", r.epoch, r.train_loss, r.val_psnr);
            }
        }
        let (model, _, _) = out.checkpoint.instantiate().unwrap();
        let in_rep = evaluate(&model, &in_dist_eval).unwrap();
        let ex_rep = evaluate(&model, &excluded_eval).unwrap();
        eprintln!(
            "[{tag}] in-dist {:.2} dB ssim {:.4} | excluded {:.2} dB ssim {:.4}",
            in_rep.model.psnr, in_rep.model.ssim, ex_rep.model.psnr, ex_rep.model.ssim
        );
    }
}
