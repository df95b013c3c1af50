//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits non-zero if any
//! criterion fails. `cargo test --test acceptance -- 4 6` runs only criteria 4 and 6.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use ndarray::Array2;
use omniflow::audio::{measure_snr_db, mix_at_snr, pitch_shift, time_stretch, AudioBuffer, VocoderConfig};
use omniflow::conditioning::{mask_prompt, ConditioningBundle, FrameFeatures};
use omniflow::dataforge::{compose_soundscape, draw_scene, forge_scene, ClipLibrary, ForgeConfig, SceneConfig, Task};
use omniflow::diffsub::{op_suite, AdamWConfig, OP_TOLERANCE};
use omniflow::evalkit::{embed_stats, energy_distance, frechet_distance, EmbeddingStats};
use omniflow::flowdit::toy::{draw_points, mode_center, EightGaussians, MODES, SIGMA};
use omniflow::flowdit::{
    cfg_velocity, interpolate, loss_gradcheck, sample_batch, sample_with_noise, target_velocity, train, FlowError,
    FlowModelState, LatentSeq, SamplerConfig, Solver, TrainConfig, VelocityModel, LOSS_GRADCHECK_TOLERANCE,
};
use omniflow::rng::named_rng;
use omniflow::spectral::{lsd, lsd_linear, mel_spectrogram, stft, MelConfig};
use omniflow_cli::RunConfig;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn random_latent<R: Rng>(rng: &mut R, t: usize, d: usize) -> LatentSeq {
    LatentSeq::new(Array2::from_shape_simple_fn((t, d), || StandardNormal.sample(&mut *rng))).unwrap()
}

fn noise<R: Rng>(rng: &mut R, sr: u32, len: usize, amp: f32) -> AudioBuffer {
    AudioBuffer::new(sr, (0..len).map(|_| amp * rng.random_range(-1.0f32..1.0)).collect()).unwrap()
}

/// Six-dimensional Gaussian with per-axis scale growing by 10% per axis.
fn gaussian_cloud<R: Rng>(rng: &mut R, n: usize, shift: f64, scale: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            (0..6)
                .map(|j| {
                    let z: f64 = StandardNormal.sample(rng);
                    shift + scale * (1.0 + j as f64 * 0.1) * z
                })
                .collect()
        })
        .collect()
}

fn max_abs_diff(a: &LatentSeq, b: &LatentSeq) -> f64 {
    a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_omniflow")
}

/// Runs the CLI; returns stdout on success.
fn cli(args: &[&str]) -> Result<String, String> {
    let out = Command::new(bin()).args(args).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr).trim()));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

/// Desk-scale config: 8 kHz audio, 16 mel bins, a one-block model and a short sampler.
fn small_config(dir: &Path) -> PathBuf {
    let p = dir.join("small.json");
    let cfg = serde_json::json!({
        "sample_rate": 8000,
        "mel": {"sample_rate": 8000, "n_fft": 256, "hop": 64, "n_mels": 16, "f_max": 4000.0},
        "model": {"mm_dim": 8, "trans_dim": 8, "sync_dim": 2, "context_dim": 16, "depth": 1, "width": 16,
                  "heads": 2, "time_features": 8, "encoder_blocks": 1},
        "forge": {"scene": {"duration_s": 1.0, "events_per_scene": 1}, "per_task": 3},
        "train": {"batch_size": 4, "log_every": 0},
        "optimizer": {"lr": 0.001},
        "sampler": {"steps": 8},
        "vocoder": {"iterations": 8}
    });
    std::fs::write(&p, cfg.to_string()).unwrap();
    p
}

fn c1_gradients() -> Check {
    let start = Instant::now();
    let ops = op_suite(0).map_err(|e| e.to_string())?;
    let worst = ops
        .iter()
        .max_by(|a, b| a.report.max_rel_err.total_cmp(&b.report.max_rel_err))
        .unwrap();
    let (param, loss) = loss_gradcheck(0).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let detail = format!(
        "{} ops, worst {} {:.2e} (< {OP_TOLERANCE:.0e}); full loss {:.2e} at {param} (< {LOSS_GRADCHECK_TOLERANCE:.0e}); {secs:.1}s",
        ops.len(),
        worst.name,
        worst.report.max_rel_err,
        loss.max_rel_err
    );
    ensure(ops.iter().all(|c| c.passed()), format!("op failed: {detail}"))?;
    ensure(loss.max_rel_err < LOSS_GRADCHECK_TOLERANCE, format!("loss failed: {detail}"))?;
    ensure(secs < 60.0, format!("too slow: {detail}"))?;
    Ok(detail)
}

/// Constant field `x1 - x0`.
struct Oracle(LatentSeq);

impl VelocityModel for Oracle {
    fn latent_dim(&self) -> usize {
        self.0.dim()
    }

    fn velocity(&self, x: &[LatentSeq], _t: &[f64], _b: &[&ConditioningBundle]) -> Result<Vec<LatentSeq>, FlowError> {
        Ok(vec![self.0.clone(); x.len()])
    }
}

fn c2_flow_identities() -> Check {
    let mut rng = named_rng(2, "acceptance");
    let mut worst_path: f64 = 0.0;
    for _ in 0..200 {
        let (x0, x1) = (random_latent(&mut rng, 7, 5), random_latent(&mut rng, 7, 5));
        ensure(interpolate(&x0, &x1, 0.0).unwrap() == x0, "t = 0 is not x0")?;
        ensure(interpolate(&x0, &x1, 1.0).unwrap() == x1, "t = 1 is not x1")?;
        let t: f64 = rng.random();
        let xt = interpolate(&x0, &x1, t).unwrap();
        let v = target_velocity(&x0, &x1).unwrap();
        for ((a, b), c) in xt.values().iter().zip(v.values()).zip(x1.values()) {
            let scale = a.abs().max(b.abs()).max(c.abs()).max(1.0);
            worst_path = worst_path.max((a + (1.0 - t) * b - c).abs() / scale);
        }
    }
    ensure(worst_path <= 4.0 * f64::EPSILON, format!("path identity error {worst_path:e}"))?;

    let (x0, x1) = (random_latent(&mut rng, 6, 4), random_latent(&mut rng, 6, 4));
    let oracle = Oracle(target_velocity(&x0, &x1).unwrap());
    let bundle = ConditioningBundle::null(1, 6, 0);
    let mut errs = Vec::new();
    for steps in [1, 10, 100] {
        let cfg = SamplerConfig {
            steps,
            guidance_scale: 6.0,
            solver: Solver::Euler,
            seed: 0,
        };
        let out = sample_with_noise(&oracle, std::slice::from_ref(&bundle), vec![x1.clone()], &cfg).unwrap();
        let e = max_abs_diff(&out[0], &x0);
        ensure(e < 1e-6, format!("{steps} steps: L-inf error {e:e}"))?;
        errs.push(format!("{steps}: {e:.1e}"));
    }
    Ok(format!(
        "boundaries exact, path identity within {worst_path:.1e} relative, oracle recovery L-inf [{}]",
        errs.join(", ")
    ))
}

fn c3_cfg_identities() -> Check {
    let mut rng = named_rng(3, "acceptance");
    for _ in 0..100 {
        let (c, u) = (random_latent(&mut rng, 5, 3), random_latent(&mut rng, 5, 3));
        ensure(cfg_velocity(&c, &u, 1.0).unwrap() == c, "scale 1 is not the conditional velocity")?;
        ensure(cfg_velocity(&c, &u, 0.0).unwrap() == u, "scale 0 is not the unconditional velocity")?;
        for s in [0.0, 0.5, 1.0, 3.0, 6.0, 17.25] {
            ensure(cfg_velocity(&c, &c, s).unwrap() == c, format!("equal inputs change at scale {s}"))?;
        }
    }
    Ok("scale 1, scale 0 and equal-input cases bit-exact on 100 random pairs".into())
}

fn c4_toy_generation() -> Check {
    let start = Instant::now();
    let toy = EightGaussians::new(0);
    let mut state = FlowModelState::new(EightGaussians::model_config(), 0).map_err(|e| e.to_string())?;
    let tc = TrainConfig {
        steps: 5000,
        optimizer: AdamWConfig {
            lr: 1e-3,
            ..AdamWConfig::default()
        },
        drop_prob: 0.1,
        seed: 0,
        log_every: 0,
    };
    let report = train(&mut state, toy.batches(128, 0), &tc).map_err(|e| e.to_string())?;
    let (first, last) = (report.mean_loss(0..500), report.mean_loss(4500..5000));

    let n = 2000;
    let classes: Vec<usize> = (0..n).map(|i| i % MODES).collect();
    let bundles = classes.iter().map(|&k| toy.bundle(k)).collect::<Result<Vec<_>, _>>().map_err(|e| e.to_string())?;
    let cfg = SamplerConfig {
        steps: 100,
        guidance_scale: 6.0,
        solver: Solver::Euler,
        seed: 0,
    };
    let out = sample_batch(&state, &bundles, 1, &cfg).map_err(|e| e.to_string())?;
    let points: Vec<[f64; 2]> = out.iter().map(|l| [l.values()[[0, 0]], l.values()[[0, 1]]]).collect();
    let hits = points
        .iter()
        .zip(&classes)
        .filter(|(p, &k)| {
            let c = mode_center(k);
            ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)).sqrt() <= 3.0 * SIGMA
        })
        .count();
    let hit_rate = hits as f64 / n as f64;

    // per class: generated vs a true draw, and two independent true draws as the oracle
    let mut rng = named_rng(4, "acceptance-truth");
    let per_class = n / MODES;
    let (mut gen_ed, mut oracle_ed) = (0.0, 0.0);
    for k in 0..MODES {
        let gen: Vec<Vec<f64>> = points
            .iter()
            .zip(&classes)
            .filter(|(_, &c)| c == k)
            .map(|(p, _)| p.to_vec())
            .collect();
        let truth = |rng: &mut _| -> Vec<Vec<f64>> { draw_points(k, per_class, rng).iter().map(|p| p.to_vec()).collect() };
        let (t0, t1, t2) = (truth(&mut rng), truth(&mut rng), truth(&mut rng));
        gen_ed += energy_distance(&gen, &t0).map_err(|e| e.to_string())? / MODES as f64;
        oracle_ed += energy_distance(&t1, &t2).map_err(|e| e.to_string())? / MODES as f64;
    }
    let ratio = gen_ed / oracle_ed;
    let secs = start.elapsed().as_secs_f64();
    let detail = format!(
        "hit rate {:.2}% (>= 90%), energy distance {gen_ed:.4} vs oracle {oracle_ed:.5}, ratio {ratio:.1} (< 3); \
         loss {first:.3} -> {last:.3}; {secs:.0}s",
        100.0 * hit_rate
    );
    ensure(hit_rate >= 0.90, format!("hit rate: {detail}"))?;
    ensure(ratio < 3.0, format!("energy distance: {detail}"))?;
    ensure(secs < 300.0, format!("too slow: {detail}"))?;
    Ok(detail)
}

fn peak_bin(buf: &AudioBuffer, cfg: &MelConfig) -> usize {
    let mags = stft(buf, cfg).unwrap().magnitudes();
    let mean = mags.mean_axis(ndarray::Axis(0)).unwrap();
    mean.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0
}

fn c5_dsp_oracles() -> Check {
    let sr = 44_100;
    let mut rng = named_rng(5, "acceptance");
    let mut worst_snr: f64 = 0.0;
    for snr in [0.0, 1.5, 3.0] {
        let bg = noise(&mut rng, sr, sr as usize, 0.1);
        let fg = AudioBuffer::sine(sr, sr as usize / 2, 660.0, 0.5);
        let m = mix_at_snr(&fg, &bg, snr, 0.25).map_err(|e| e.to_string())?;
        let span = m.onset..m.onset + fg.len();
        let got = measure_snr_db(m.stem.samples(), m.background.samples(), span);
        worst_snr = worst_snr.max((got - snr).abs());
    }
    ensure(worst_snr <= 0.1, format!("SNR off by {worst_snr:.3} dB"))?;

    let analysis = MelConfig {
        n_fft: 8192,
        hop: 2048,
        ..MelConfig::default()
    };
    let tone = AudioBuffer::sine(sr, 2 * sr as usize, 440.0, 0.5);
    let bin_hz = f64::from(sr) / analysis.n_fft as f64;
    let mut shifts = Vec::new();
    for (st, hz) in [(12.0, 880.0), (-12.0, 220.0)] {
        let got = peak_bin(&pitch_shift(&tone, st).map_err(|e| e.to_string())?, &analysis) as i64;
        let want = (hz / bin_hz).round() as i64;
        ensure((got - want).abs() <= 1, format!("{st:+} st: peak bin {got}, expected {want}"))?;
        shifts.push(format!("{st:+}: bin {got}/{want}"));
    }

    let hop = VocoderConfig::default().hop as f64;
    let clip = AudioBuffer::sine(sr, 30_000, 300.0, 0.4);
    for f in [0.8, 1.0, 1.2] {
        let out = time_stretch(&clip, f).map_err(|e| e.to_string())?;
        let want = clip.len() as f64 * f;
        ensure((out.len() as f64 - want).abs() <= hop, format!("stretch {f}: {} samples, expected {want}", out.len()))?;
    }

    let lib = ClipLibrary::synthetic(16_000, 3.0, 5).map_err(|e| e.to_string())?;
    let scene_cfg = SceneConfig {
        duration_s: 3.0,
        events_per_scene: 2,
    };
    for k in 0..100 {
        let scene = draw_scene(&lib, 55, k, &scene_cfg).map_err(|e| e.to_string())?;
        let s = compose_soundscape(&scene, &lib).map_err(|e| e.to_string())?;
        for i in 0..s.mixture.len() {
            let sum = f64::from(s.background.samples()[i]) + s.stems.iter().map(|x| f64::from(x.samples()[i])).sum::<f64>();
            ensure(f64::from(s.mixture.samples()[i]) == sum, format!("scene {k} sample {i}: stems do not sum"))?;
        }
    }
    Ok(format!(
        "SNR within {worst_snr:.4} dB; pitch {}; stretch lengths within one hop; stem sums exact on 100 two-event scenes",
        shifts.join(", ")
    ))
}

fn c6_editing() -> Check {
    let lib = ClipLibrary::synthetic(16_000, 2.0, 6).map_err(|e| e.to_string())?;
    let cfg = ForgeConfig {
        seed: 6,
        scene: SceneConfig {
            duration_s: 2.0,
            events_per_scene: 2,
        },
        ..ForgeConfig::default()
    };
    for k in 0..100 {
        let trio = forge_scene(&lib, &cfg, k).map_err(|e| e.to_string())?;
        let get = |t: Task| trio.iter().find(|c| c.triplet.task == t).unwrap();
        let (add, remove, extract) = (get(Task::Add), get(Task::Remove), get(Task::Extract));
        ensure(add.target == remove.source && add.source == remove.target, format!("scene {k}: add/remove not inverse"))?;
        ensure(extract.source == remove.source, format!("scene {k}: extract source is not the mixture"))?;
        for i in 0..extract.source.len() {
            let sum = f64::from(remove.target.samples()[i]) + f64::from(extract.target.samples()[i]);
            ensure(f64::from(extract.source.samples()[i]) == sum, format!("scene {k} sample {i}: mixture != rest + stem"))?;
        }
    }

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let small = small_config(d);
    let s = |p: PathBuf| p.to_string_lossy().into_owned();
    let config = s(small);
    cli(&["forge", "--config", &config, "--seed", "1", "--out", &s(d.join("data"))])?;
    let ckpt = s(d.join("toy.ckpt"));
    cli(&["train", "--config", &config, "--manifest", &s(d.join("data/manifest.json")), "--steps", "30", "--out", &ckpt])?;
    let source = s(d.join("data/audio/s000000-remove_src.wav"));
    let out = cli(&[
        "edit", "--config", &config, "--checkpoint", &ckpt, "--source", &source,
        "--instruction", "remove the high beep", "--out", &s(d.join("edited.wav")),
    ])?;
    let report: serde_json::Value = serde_json::from_str(&out).map_err(|e| e.to_string())?;
    let mel = RunConfig::resolve(Some(&d.join("small.json")), None, &[]).map_err(|e| e.to_string())?.mel;
    let src_frames = mel_spectrogram(&omniflow::audio::read_wav(Path::new(&source)).unwrap(), &mel).unwrap().n_frames();
    let out_frames = mel_spectrogram(&omniflow::audio::read_wav(&d.join("edited.wav")).unwrap(), &mel).unwrap().n_frames();
    ensure(src_frames == out_frames, format!("edit output has {out_frames} frames, source {src_frames}"))?;
    ensure(report["output_frames"] == src_frames, "edit report disagrees with the file")?;
    Ok(format!(
        "task algebra sample-exact on 100 two-event scenes; edit CLI output {out_frames} mel frames = source {src_frames}"
    ))
}

fn c7_masking() -> Check {
    let mut rng = named_rng(7, "acceptance");
    let mut summary = Vec::new();
    for t in [100usize, 37] {
        let mel = FrameFeatures::from_frames(Array2::ones((t, 3))).unwrap();
        let (lo, hi) = (0.20 - 1.0 / t as f64, 0.75 + 1.0 / t as f64);
        let mut sum = 0.0;
        for draw in 0..10_000 {
            let (masked, m) = mask_prompt(&mel, &mut rng, None).map_err(|e| e.to_string())?;
            ensure((lo..=hi).contains(&m.ratio), format!("T={t} draw {draw}: ratio {}", m.ratio))?;
            let zeroed: Vec<usize> = (0..t).filter(|&i| !masked.valid()[i]).collect();
            let contiguous = zeroed.windows(2).all(|w| w[1] == w[0] + 1);
            ensure(contiguous && zeroed.first() == Some(&m.start) && zeroed.len() == m.end - m.start, format!("T={t} draw {draw}: span not contiguous"))?;
            ensure(zeroed.iter().all(|&i| masked.frames().row(i).iter().all(|&v| v == 0.0)), "masked frames not zeroed")?;
            sum += m.ratio;
        }
        let mean = sum / 10_000.0;
        let tol = if t == 100 { 0.01 } else { 0.01 + 0.5 / t as f64 };
        ensure((mean - 0.475).abs() <= tol, format!("T={t}: mean ratio {mean:.4}"))?;
        summary.push(format!("T={t} mean {mean:.4}"));
    }
    Ok(format!("10k draws per T, ratios in bounds, spans contiguous; {}", summary.join(", ")))
}

fn c8_metrics() -> Check {
    let cfg = MelConfig::default();
    let mut rng = named_rng(8, "acceptance");
    let noise = noise(&mut rng, 44_100, 44_100, 0.2);
    let m = mel_spectrogram(&noise, &cfg).unwrap();
    ensure(lsd(&m, &m).unwrap() == 0.0, "LSD(x, x) != 0")?;
    let mags = stft(&noise, &cfg).unwrap().magnitudes();
    let louder = mags.mapv(|v| 10.0 * v);
    let d20 = lsd_linear(&louder, &mags, 0.0).unwrap();
    ensure((d20 - 20.0).abs() < 1e-9, format!("20 dB offset gives {d20}"))?;

    let a = embed_stats(&gaussian_cloud(&mut rng, 500, 0.0, 1.0)).unwrap();
    let b = embed_stats(&gaussian_cloud(&mut rng, 300, 0.4, 0.7)).unwrap();
    ensure(frechet_distance(&a, &a).unwrap().abs() < 1e-6, "Frechet(a, a) != 0")?;
    let (ab, ba) = (frechet_distance(&a, &b).unwrap(), frechet_distance(&b, &a).unwrap());
    ensure((ab - ba).abs() < 1e-6, format!("asymmetric: {ab} vs {ba}"))?;
    let gap = nalgebra::DVector::from_fn(6, |i, _| 0.1 * i as f64 - 0.2);
    let shifted = EmbeddingStats::new(&a.mean + &gap, a.cov.clone(), a.count).unwrap();
    let fd = frechet_distance(&a, &shifted).unwrap();
    ensure((fd - gap.norm_squared()).abs() < 1e-6, format!("mean-gap case {fd} vs {}", gap.norm_squared()))?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let s = |p: PathBuf| p.to_string_lossy().into_owned();
    let config = s(small_config(d));
    cli(&["forge", "--config", &config, "--out", &s(d.join("data"))])?;
    let out = cli(&["eval", "--config", &config, "--reference", &s(d.join("data/audio")), "--candidate", &s(d.join("data/audio"))])?;
    let r: serde_json::Value = serde_json::from_str(&out).map_err(|e| e.to_string())?;
    ensure(r["fad-proxy"] == 0.0 && r["lsd"] == 0.0, format!("folder vs itself: lsd {} fad-proxy {}", r["lsd"], r["fad-proxy"]))?;
    Ok(format!(
        "LSD(x,x)=0, 20 dB offset {:.1e} off, Frechet zero/symmetry/mean-gap within 1e-6, fad-proxy on a {}-clip folder vs itself = 0",
        (d20 - 20.0).abs(),
        r["pairs"]
    ))
}

fn read_tree(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(p) = stack.pop() {
        for e in std::fs::read_dir(&p).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((path.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn c9_determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let s = |p: PathBuf| p.to_string_lossy().into_owned();
    let config = s(small_config(d));
    for run in ["a", "b"] {
        let r = d.join(run);
        cli(&["forge", "--config", &config, "--seed", "7", "--out", &s(r.join("data"))])?;
        cli(&["train", "--config", &config, "--seed", "7", "--manifest", &s(r.join("data/manifest.json")),
              "--steps", "100", "--out", &s(r.join("model/m.ckpt"))])?;
        cli(&["sample", "--config", &config, "--seed", "7", "--checkpoint", &s(r.join("model/m.ckpt")),
              "--instruction", "add a rising chirp", "--frames", "60", "--out", &s(r.join("sample.wav"))])?;
    }
    let (fa, fb) = (read_tree(&d.join("a/data")), read_tree(&d.join("b/data")));
    ensure(fa == fb, "forge outputs differ")?;
    for f in ["model/m.ckpt", "model/m.json", "model/m.loss.csv", "sample.wav"] {
        let (x, y) = (std::fs::read(d.join("a").join(f)).unwrap(), std::fs::read(d.join("b").join(f)).unwrap());
        ensure(x == y, format!("{f} differs"))?;
    }
    let steps = std::fs::read_to_string(d.join("a/model/m.loss.csv")).unwrap().lines().count() - 1;
    ensure(steps == 100, format!("{steps} training steps"))?;
    Ok(format!("forge ({} files), train (100 steps: checkpoint, sidecar, loss trace) and sample byte-identical", fa.len()))
}

fn c10_config() -> Check {
    let v = RunConfig::default().to_json();
    let expect = [
        ("/mel/sample_rate", serde_json::json!(44_100)),
        ("/mel/n_fft", serde_json::json!(1024)),
        ("/mel/hop", serde_json::json!(256)),
        ("/mel/n_mels", serde_json::json!(100)),
        ("/sample_rate", serde_json::json!(44_100)),
        ("/optimizer/lr", serde_json::json!(5e-5)),
        ("/optimizer/beta1", serde_json::json!(0.9)),
        ("/optimizer/beta2", serde_json::json!(0.999)),
        ("/optimizer/weight_decay", serde_json::json!(1e-3)),
        ("/sampler/steps", serde_json::json!(100)),
        ("/sampler/guidance_scale", serde_json::json!(6.0)),
    ];
    for (ptr, want) in &expect {
        ensure(v.pointer(ptr) == Some(want), format!("{ptr} = {:?}, expected {want}", v.pointer(ptr)))?;
    }
    let snap_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/snapshots/default_config.json");
    let snap: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&snap_path).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    ensure(v == snap, "default config differs from the snapshot")?;
    Ok(format!("{} constants and the full default snapshot match", expect.len()))
}

fn main() {
    let criteria: [(u32, &str, fn() -> Check); 10] = [
        (1, "gradient suite", c1_gradients),
        (2, "flow identities", c2_flow_identities),
        (3, "CFG identities", c3_cfg_identities),
        (4, "toy conditional generation", c4_toy_generation),
        (5, "DSP oracles", c5_dsp_oracles),
        (6, "editing algebra", c6_editing),
        (7, "masking law", c7_masking),
        (8, "metrics", c8_metrics),
        (9, "determinism", c9_determinism),
        (10, "default config", c10_config),
    ];
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, f) in criteria {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {id:>2} PASS  {name}: {detail} [{secs:.1}s]"),
            Err(why) => {
                failed += 1;
                println!("criterion {id:>2} FAIL  {name}: {why} [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
