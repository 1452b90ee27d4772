use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use lmcot::losses::{arcface_loss, cosface_loss, lmcot_loss, softmax_loss, sphereface_loss};
use lmcot::metrics::{auc, eer, far_frr_sweep, histogram, histogram_csv, sweep_csv, RankedRetrieval, ScoredPairs};
use lmcot::pipeline::{
    authenticate, default_count_threshold, sharpness_gate, AuthThresholds, ConstantSpoof, Embedder, EnrollStatus,
    Gallery, GrayImage, OpenEyes, Scorers, ToyEmbedder, WholeFrameDetector,
};
use lmcot::train::{gradcheck as run_gradcheck, train_loop, MlpModel, SynthConfig, TrainConfig};
use lmcot::{AngularBatch, Execution, LogBase, LossConfig};

use crate::{exit, parse_grad_targets, EmbedderArgs, Format, TrainArgs};

/// Two samples, two classes; target angles 0.1 and 1.37.
const EXAMPLE_THETA: [[f64; 2]; 2] = [[0.1, 1.47], [0.2, 1.37]];
const EXAMPLE_LOGITS: [[f64; 2]; 2] = [[0.995, 0.1], [0.9798, 0.2]];
const EXAMPLE_TOLERANCE: f64 = 1e-3;

fn print_rows(format: Format, header: &[&str], rows: &[Vec<String>], record_tag: &str) {
    match format {
        Format::Table => {
            let widths: Vec<usize> = (0..header.len())
                .map(|c| rows.iter().map(|r| r[c].len()).chain([header[c].len()]).max().unwrap_or(0))
                .collect();
            let line = |cells: &[String]| {
                cells
                    .iter()
                    .zip(&widths)
                    .map(|(c, w)| format!("{c:<w$}"))
                    .collect::<Vec<_>>()
                    .join("  ")
                    .trim_end()
                    .to_string()
            };
            println!("{}", line(&header.iter().map(|h| h.to_string()).collect::<Vec<_>>()));
            for r in rows {
                println!("{}", line(r));
            }
        }
        Format::Record => {
            for r in rows {
                let fields: Vec<String> = header.iter().zip(r).map(|(h, v)| format!("{h}={v}")).collect();
                println!("{record_tag} {}", fields.join(" "));
            }
        }
    }
}

fn verdict(ok: bool) -> String {
    if ok { "PASS" } else { "FAIL" }.to_string()
}

pub fn example_check(m: Option<f64>, format: Format) -> Result<u8> {
    let theta = ndarray_from(EXAMPLE_THETA);
    let batch = AngularBatch::new(theta, vec![0, 1])?;
    let additive = m.unwrap_or(0.05);
    let cases = [
        ("softmax", 0.3257, softmax_loss(&ndarray_from(EXAMPLE_LOGITS), &[0, 1], LogBase::Ten)?.value),
        ("sphereface", 0.4638, sphereface_loss(&batch, &LossConfig::worked_example(1.1))?.value),
        ("cosface", 0.4353, cosface_loss(&batch, &LossConfig::worked_example(additive))?.value),
        ("arcface", 0.4322, arcface_loss(&batch, &LossConfig::worked_example(additive))?.value),
        ("lmcot", 2.0765, lmcot_loss(&batch, &LossConfig::worked_example(additive))?.value),
    ];
    let mut all_ok = true;
    let rows: Vec<Vec<String>> = cases
        .iter()
        .map(|&(name, expected, got)| {
            let diff = got - expected;
            let ok = diff.abs() <= EXAMPLE_TOLERANCE;
            all_ok &= ok;
            vec![name.to_string(), format!("{expected:.4}"), format!("{got:.6}"), format!("{diff:+.2e}"), verdict(ok)]
        })
        .collect();
    print_rows(format, &["loss", "expected", "computed", "diff", "status"], &rows, "check");
    Ok(if all_ok { exit::SUCCESS } else { exit::REJECTED })
}

fn ndarray_from(rows: [[f64; 2]; 2]) -> ndarray::Array2<f64> {
    ndarray::Array2::from_shape_fn((2, 2), |(i, j)| rows[i][j])
}

pub fn gradcheck(
    loss: &str,
    trials: usize,
    h: f64,
    tol: f64,
    seed: u64,
    sequential: bool,
    format: Format,
) -> Result<u8> {
    let targets = parse_grad_targets(loss)?;
    let exec = if sequential { Execution::Sequential } else { Execution::default() };
    let mut all_ok = true;
    let mut rows = Vec::new();
    for target in targets {
        let r = run_gradcheck(target, trials, h, seed, exec)?;
        let ok = r.passes(tol);
        all_ok &= ok;
        rows.push(vec![
            target.to_string(),
            r.trials.to_string(),
            format!("{:.3e}", r.max_rel_err),
            r.worst_trial.to_string(),
            r.worst_config.replace(' ', ","),
            verdict(ok),
        ]);
    }
    print_rows(
        format,
        &["target", "trials", "max_rel_err", "worst_trial", "worst_config", "status"],
        &rows,
        "gradcheck",
    );
    Ok(if all_ok { exit::SUCCESS } else { exit::REJECTED })
}

/// Write every file or none: contents go to temporary names first and are
/// renamed into place once all writes succeeded.
fn write_all(dir: &Path, files: &[(&str, String)]) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let temp = |name: &str| dir.join(format!(".{name}.partial"));
    let staged = files.iter().try_for_each(|(name, body)| fs::write(temp(name), body));
    if let Err(e) = staged {
        for (name, _) in files {
            let _ = fs::remove_file(temp(name));
        }
        return Err(e).with_context(|| format!("writing into {}", dir.display()));
    }
    for (name, _) in files {
        fs::rename(temp(name), dir.join(name)).with_context(|| format!("moving {name} into place"))?;
    }
    Ok(())
}

pub fn train(args: &TrainArgs) -> Result<u8> {
    let n_classes = if args.task.is_binary() { 2 } else { args.classes };
    let cfg = TrainConfig {
        data: SynthConfig {
            n_classes,
            dim: args.dim,
            per_class: args.per_class,
            intra_spread: args.spread,
            seed: args.seed,
            task: args.task,
        },
        objective: args.loss,
        loss: args.loss_args.config(args.seed),
        steps: args.steps,
        lr: args.lr,
        batch_size: args.batch,
        hidden: args.hidden.clone(),
        embed_dim: args.embed_dim,
        score_margin: args.score_margin,
        seed: args.seed,
    };
    cfg.validate()?;
    let outcome = train_loop(&cfg)?;
    let r = &outcome.report;
    write_all(
        &args.out,
        &[("report.txt", r.to_text(false)), ("timing.csv", r.timing_csv()), ("model.txt", outcome.model.to_text())],
    )?;
    let first = r.loss_curve.first().copied().unwrap_or(f64::NAN);
    let last = r.loss_curve.last().copied().unwrap_or(f64::NAN);
    println!(
        "trained {} steps: loss {first:.6} -> {last:.6}, held-out {} {:.6} -> {:.6}",
        r.loss_curve.len(),
        r.metric.name(),
        r.initial_metric,
        r.final_metric
    );
    Ok(exit::SUCCESS)
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn parse_label(s: &str) -> Option<bool> {
    match s {
        "1" | "genuine" | "live" | "true" => Some(true),
        "0" | "impostor" | "spoof" | "false" => Some(false),
        _ => None,
    }
}

/// `label,score` lines, label 1 for genuine and 0 for impostor. A first line
/// that does not parse is taken as a header.
fn parse_scores(text: &str) -> Result<ScoredPairs> {
    let mut pairs = ScoredPairs::default();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parsed = line.split_once(',').and_then(|(l, s)| {
            let score = s.trim().parse::<f64>().ok().filter(|x| x.is_finite())?;
            Some((parse_label(l.trim())?, score))
        });
        match parsed {
            Some((true, s)) => pairs.genuine.push(s),
            Some((false, s)) => pairs.impostor.push(s),
            None if ln == 0 => {}
            None => return Err(lmcot::Error::Format(format!("scores line {}: expected 'label,score'", ln + 1)).into()),
        }
    }
    Ok(pairs)
}

pub fn eval(scores: &Path, out: &Path, bins: usize, sweep_points: usize, format: Format) -> Result<u8> {
    let pairs = parse_scores(&read_text(scores)?)?;
    if sweep_points < 2 {
        return Err(lmcot::Error::Config("sweep needs at least 2 points".into()).into());
    }
    let e = eer(&pairs)?;
    let area = auc(&pairs)?;
    let all = pairs.genuine.iter().chain(&pairs.impostor);
    let (mut lo, mut hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    if lo == hi {
        lo -= 0.5;
        hi += 0.5;
    }
    let thresholds: Vec<f64> =
        (0..sweep_points).map(|k| lo + (hi - lo) * k as f64 / (sweep_points - 1) as f64).collect();
    let sweep = far_frr_sweep(&pairs, &thresholds)?;
    write_all(
        out,
        &[
            ("histogram_genuine.csv", histogram_csv(&histogram(&pairs.genuine, bins, lo, hi)?, lo, hi)),
            ("histogram_impostor.csv", histogram_csv(&histogram(&pairs.impostor, bins, lo, hi)?, lo, hi)),
            ("sweep.csv", sweep_csv(&sweep)),
        ],
    )?;
    let row = vec![
        pairs.genuine.len().to_string(),
        pairs.impostor.len().to_string(),
        format!("{:.6}", e.eer),
        format!("{}", e.threshold),
        format!("{area:.6}"),
    ];
    print_rows(format, &["genuine", "impostor", "eer", "eer_threshold", "auc"], &[row], "eval");
    Ok(exit::SUCCESS)
}

pub fn retrieval_eval(ranked: &Path, format: Format) -> Result<u8> {
    let r = RankedRetrieval::parse(&read_text(ranked)?)?;
    let row = vec![r.queries.len().to_string(), format!("{:.6}", r.map_at_100()?), format!("{:.6}", r.gap()?)];
    print_rows(format, &["queries", "map_at_100", "gap"], &[row], "retrieval");
    Ok(exit::SUCCESS)
}

fn embedder(args: &EmbedderArgs) -> Result<ToyEmbedder> {
    Ok(match &args.model {
        Some(path) => {
            ToyEmbedder::from_model(MlpModel::load(path).with_context(|| format!("loading {}", path.display()))?)?
        }
        None => ToyEmbedder::seeded(args.seed, args.embed_dim)?,
    })
}

fn load_gallery(path: &Path, create: bool) -> Result<Gallery> {
    if create && !path.exists() {
        return Ok(Gallery::new());
    }
    Gallery::load(path).with_context(|| format!("loading gallery {}", path.display()))
}

fn read_image(path: &Path) -> Result<GrayImage> {
    GrayImage::read_pnm(path).with_context(|| format!("reading {}", path.display()))
}

/// Per image: embed, run the sharpness gate, then store if it passed and
/// the identity has room.
pub fn enroll(
    gallery_path: &Path,
    name: &str,
    images: &[PathBuf],
    edge_threshold: f64,
    args: &EmbedderArgs,
) -> Result<u8> {
    let mut gallery = load_gallery(gallery_path, true)?;
    let model = embedder(args)?;
    let mut report = String::new();
    let mut stored = 0;
    for path in images {
        let img = read_image(path)?;
        let embedding = model.embed(&img)?;
        let needed = default_count_threshold(&img);
        let (sharp, edges) = sharpness_gate(&img, edge_threshold, needed)?;
        let line = match gallery.enroll(name, &embedding, sharp)? {
            EnrollStatus::Stored { count } => {
                stored += 1;
                format!("stored identity={name} count={count}")
            }
            EnrollStatus::RejectedBlurry => format!("rejected reason=blurry edge_pixels={edges} needed={needed}"),
            EnrollStatus::RejectedFull => format!("rejected reason=capacity identity={name}"),
        };
        let _ = writeln!(report, "{} {line}", path.display());
    }
    let tmp = gallery_path.with_extension("partial");
    gallery.save(&tmp).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, gallery_path).with_context(|| format!("writing {}", gallery_path.display()))?;
    print!("{report}");
    Ok(if stored > 0 { exit::SUCCESS } else { exit::REJECTED })
}

pub fn auth(
    gallery_path: &Path,
    frame: &Path,
    spoof_score: f64,
    spoof_threshold: f64,
    similarity_threshold: f64,
    args: &EmbedderArgs,
) -> Result<u8> {
    if !(0.0..=1.0).contains(&spoof_score) {
        return Err(lmcot::Error::Config(format!("spoof score must be in [0, 1], got {spoof_score}")).into());
    }
    let gallery = load_gallery(gallery_path, false)?;
    let frame = read_image(frame)?;
    let model = embedder(args)?;
    let scorers = Scorers {
        detector: &WholeFrameDetector,
        spoof: &ConstantSpoof(spoof_score),
        embedder: &model,
        eyes: &OpenEyes,
    };
    let thresholds = AuthThresholds { spoof: spoof_threshold, similarity: similarity_threshold };
    let outcome = authenticate(&frame, &gallery, &scorers, &thresholds)?;
    println!("{outcome}");
    Ok(if outcome.is_accepted() { exit::SUCCESS } else { exit::REJECTED })
}
