use ratelab_core::config::RunConfig;
use ratelab_core::experiments::{compare, standard_suite};
use ratelab_core::trainer::{load_policy, train};
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(60);
    let iters: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(6);

    let mut cfg = RunConfig::default();
    cfg.epochs = epochs;
    cfg.phase1_epochs = (epochs / 6).max(1);
    cfg.iterations_per_epoch = iters;
    cfg.validation_period = 10;
    cfg.eval_seeds = 12;
    cfg.seed = 42;

    let dir = std::path::PathBuf::from("/tmp/train_probe");
    let _ = std::fs::remove_dir_all(&dir);
    let t0 = Instant::now();
    let out = train(&cfg, &dir).unwrap();
    println!("trained {} epochs x {} iters in {:.1}s, best val {:.3}",
        cfg.epochs, cfg.iterations_per_epoch, t0.elapsed().as_secs_f64(), out.best_validation_score);

    // Return curve summary (phase-2 rows only, per-frame normalized).
    let p2: Vec<f64> = out.log.iter()
        .filter(|r| r.epoch >= cfg.phase1_epochs)
        .map(|r| r.mean_return / cfg.phase2_frames as f64)
        .collect();
    let chunk = (p2.len() / 12).max(1);
    for (i, c) in p2.chunks(chunk).enumerate() {
        let m = c.iter().sum::<f64>() / c.len() as f64;
        print!("[{}]{:.2} ", i, m);
    }
    println!();

    let artifact = load_policy(&out.best_checkpoint).unwrap();
    let suite = standard_suite(&cfg);
    let t1 = Instant::now();
    let eval = ratelab_core::trainer::evaluate(&artifact, &cfg, &suite).unwrap();
    println!("eval in {:.1}s: agent mean_dR {:.3}% mean_psnr {:.3} mean_bpp {:.2}",
        t1.elapsed().as_secs_f64(), eval.summary.delta_r_pct, eval.summary.mean_psnr, eval.summary.mean_bpp);
    // per-target breakdown
    let nt = cfg.n_eval_targets;
    for ti in 0..nt {
        let rows: Vec<_> = eval.per_sequence.chunks(nt).filter_map(|c| c.get(ti)).collect();
        let dr = rows.iter().map(|s| s.delta_r_pct).sum::<f64>() / rows.len() as f64;
        let bpp = rows.iter().map(|s| s.achieved_bpp).sum::<f64>() / rows.len() as f64;
        let tar = rows.iter().map(|s| s.r_tar).sum::<f64>() / rows.len() as f64;
        let psnr = rows.iter().map(|s| s.mean_psnr).sum::<f64>() / rows.len() as f64;
        let mlam: f64 = rows.iter().map(|s| s.rows.iter().map(|r| r.lambda).sum::<f64>() / s.rows.len() as f64).sum::<f64>() / rows.len() as f64;
        let mm: f64 = rows.iter().map(|s| s.rows.iter().map(|r| r.m).sum::<f64>() / s.rows.len() as f64).sum::<f64>() / rows.len() as f64;
        println!("  target[{ti}] tar {:.2} -> got {:.2} (dR {:.2}%) psnr {:.2} lam~{:.0} m~{:.2}", tar, bpp, dr, psnr, mlam, mm);
    }
    match compare(&cfg, Some(&artifact), &suite) {
        Ok(report) => {
            for m in &report.methods {
                println!(
                    "{:<14} mean_dR {:>7.3}%  bd_rate {:>10}  psnr {:>7.3}",
                    m.name, m.mean_delta_r,
                    m.bd_rate_vs_anchor.map(|b| format!("{b:.2}%")).unwrap_or("-".into()),
                    m.mean_psnr);
            }
        }
        Err(e) => println!("compare failed: {e}"),
    }
}
