use driftcast::adapter::{AdapterBuildConfig, DriftAdapter};
use driftcast::engine::{
    pretrain, run_online, train_adapter, OnlineConfig, ReportTags, Strategy, Variant,
};
use driftcast::forecasters::build_mlp;
use driftcast::seriesdata::{chronological_split, generate_synthetic, make_windows, SyntheticSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn main() {
    let spec = SyntheticSpec::desk_default();
    let (frame, _) = generate_synthetic(&spec).unwrap();
    let split = chronological_split(&frame, (0.20, 0.05, 0.75)).unwrap();
    let l = 96usize;
    let h = 8usize;

    let train = make_windows(&frame, l, h, (1, split.train_end)).unwrap();
    let valid = make_windows(&frame, l, h, (split.train_end, split.valid_end)).unwrap();

    // One pretrained model per seed, reused across sweep settings.
    let mut snapshots = Vec::new();
    for seed in 0..3u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut model = build_mlp(4, l, h, 64, false, &mut rng);
        let mut cfg = OnlineConfig::new(l, h);
        cfg.epochs = 10;
        cfg.batch = 32;
        pretrain(&mut model, &train, &valid, &cfg, &mut rng).unwrap();
        snapshots.push(model);
    }

    for (epochs, batch, r) in [
        (5usize, 32usize, 32usize),
        (10, 8, 32),
        (10, 8, 8),
        (10, 4, 32),
        (20, 8, 32),
    ] {
        println!("--- adapter epochs={epochs} batch={batch} r={r}");
        let mut wins = 0;
        let mut pm = 0.0;
        let mut cm = 0.0;
        for seed in 0..3u64 {
            let t0 = Instant::now();
            let tags = ReportTags {
                dataset: "synth".into(),
                model: "mlp".into(),
                seed,
            };
            let base_cfg = OnlineConfig::new(l, h);

            let mut model = snapshots[seed as usize].clone();
            let mut arng = ChaCha8Rng::seed_from_u64(seed + 100);
            let build = AdapterBuildConfig {
                r,
                ..AdapterBuildConfig::new(4, l, h)
            };
            let mut adapter = DriftAdapter::build(model.registry(), &build, &mut arng);
            let mut acfg = base_cfg.clone();
            acfg.epochs = epochs;
            acfg.batch = batch;
            train_adapter(&mut model, &mut adapter, &train, &acfg, &mut arng).unwrap();
            let mut cfgx = base_cfg.clone();
            cfgx.strategy = Strategy::Proceed;
            let rx = run_online(&mut model, Some(&adapter), &frame, &split, &cfgx, &tags).unwrap();

            let mut model_c = snapshots[seed as usize].clone();
            let mut crng = ChaCha8Rng::seed_from_u64(seed + 100);
            let cbuild = AdapterBuildConfig {
                r,
                concept_only: true,
                ..AdapterBuildConfig::new(4, l, h)
            };
            let mut cadapter = DriftAdapter::build(model_c.registry(), &cbuild, &mut crng);
            train_adapter(&mut model_c, &mut cadapter, &train, &acfg, &mut crng).unwrap();
            let mut cfgc = base_cfg.clone();
            cfgc.strategy = Strategy::ProceedVariant(Variant::ConceptOnly);
            let rc = run_online(&mut model_c, Some(&cadapter), &frame, &split, &cfgc, &tags)
                .unwrap();

            if rx.mse <= rc.mse {
                wins += 1;
            }
            pm += rx.mse / 3.0;
            cm += rc.mse / 3.0;
            println!(
                "seed={seed} proceed={:.4} concept_only={:.4} diff={:+.4} ({:.0}s)",
                rx.mse,
                rc.mse,
                rc.mse - rx.mse,
                t0.elapsed().as_secs_f64()
            );
        }
        println!("wins={wins}/3 proceed_mean={pm:.4} concept_mean={cm:.4}");
    }
}
