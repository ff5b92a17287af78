//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails.
//!
//! Pass `-- --reuse DIR` to keep the desk-scale artifacts in `DIR` and skip
//! stages whose checkpoints already exist there.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_4;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use navattn_core::agent::EpsilonSchedule;
use navattn_core::branch::DistillConfig;
use navattn_core::eval::{
    angle_sweep, averaged_attention_per_action, deletion_curve, insertion_curve, sample_eval_states, EvalState,
    SWEEP_DISTANCE,
};
use navattn_core::io::pipeline::{load_model, saliency_maps, Workspace, MODEL_FILE, TRUNK_FILE};
use navattn_core::io::{params_digest, Checkpoint, RunConfig};
use navattn_core::nn::{GradcheckConfig, LayerProbe, LayerSpec};
use navattn_core::planner::{plan, PlanResult, PlannerConfig, RrtStar};
use navattn_core::saliency::SaliencyMap;
use navattn_core::sim::{step, Action, Point, Rect, RobotPose, SimConfig, StepEvent, WorldMap};

type Check = Result<String, String>;

struct Report {
    failed: usize,
}

impl Report {
    fn record(&mut self, id: u32, name: &str, started: Instant, outcome: Check) {
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {id:>2} PASS {name}: {detail} [{secs:.1} s]"),
            Err(detail) => {
                self.failed += 1;
                println!("criterion {id:>2} FAIL {name}: {detail} [{secs:.1} s]");
            }
        }
    }
}

fn ensure(cond: bool, detail: String) -> Check {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn navattn(config: &Path, out: &Path, args: &[&str]) -> Result<String, String> {
    let output = Command::new(env!("CARGO_BIN_EXE_navattn"))
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .map_err(|e| format!("spawn failed: {e}"))?;
    let stdout = String::from_utf8_lossy(&output.stdout).into_owned();
    if !output.status.success() {
        return Err(format!(
            "navattn {args:?} failed: {}",
            String::from_utf8_lossy(&output.stderr).trim()
        ));
    }
    Ok(stdout)
}

/// Rows of a small CSV file as maps from header name to field.
fn read_csv(path: &Path) -> Result<Vec<BTreeMap<String, String>>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or("empty csv")?.split(',').collect();
    Ok(lines
        .map(|l| {
            header
                .iter()
                .zip(l.split(','))
                .map(|(h, v)| (h.to_string(), v.to_string()))
                .collect()
        })
        .collect())
}

fn field(row: &BTreeMap<String, String>, key: &str) -> Result<f64, String> {
    row.get(key)
        .ok_or_else(|| format!("missing column {key}"))?
        .parse()
        .map_err(|e| format!("{key}: {e}"))
}

fn gradients() -> Check {
    let kinds: Vec<(LayerSpec, Vec<Vec<usize>>)> = vec![
        (
            LayerSpec::Conv2d {
                in_channels: 3,
                out_channels: 4,
                kernel: 3,
                stride: 2,
                padding: 1,
            },
            vec![vec![2, 3, 9, 9]],
        ),
        (LayerSpec::FullyConnected { inputs: 20, outputs: 6 }, vec![vec![3, 20]]),
        (LayerSpec::Relu, vec![vec![2, 4, 5, 5]]),
        (LayerSpec::Sigmoid, vec![vec![2, 4, 5, 5]]),
        (LayerSpec::Softmax, vec![vec![40, 3]]),
        (LayerSpec::GlobalAvgPool, vec![vec![2, 4, 5, 5]]),
        (LayerSpec::ConcatChannels, vec![vec![2, 2, 5, 5], vec![2, 3, 5, 5]]),
        (LayerSpec::BroadcastScalars { height: 4, width: 5 }, vec![vec![60, 2]]),
    ];
    let cfg = GradcheckConfig {
        samples: 150,
        ..GradcheckConfig::default()
    };
    let mut worst = 0.0f64;
    let mut min_checked = usize::MAX;
    for (spec, shapes) in &kinds {
        let refs: Vec<&[usize]> = shapes.iter().map(Vec::as_slice).collect();
        let report = LayerProbe::new(*spec, &refs, 7)
            .and_then(|mut p| p.check(&cfg))
            .map_err(|e| format!("{}: {e}", spec.kind()))?;
        if report.checked < 100 || report.max_rel_error >= 1e-3 {
            return Err(format!(
                "{}: {} probes, max rel error {:.2e}",
                spec.kind(),
                report.checked,
                report.max_rel_error
            ));
        }
        worst = worst.max(report.max_rel_error);
        min_checked = min_checked.min(report.checked);
    }
    Ok(format!(
        "{} layer kinds, >= {min_checked} probes each, max rel error {worst:.2e}",
        kinds.len()
    ))
}

fn rewards() -> Check {
    let room = WorldMap::new(Rect::new(0.0, 0.0, 10.0, 10.0), vec![]).map_err(|e| e.to_string())?;
    let blocked = WorldMap::new(Rect::new(0.0, 0.0, 10.0, 10.0), vec![Rect::new(5.3, 4.0, 6.0, 6.0)])
        .map_err(|e| e.to_string())?;
    let cfg = SimConfig::default();
    let goal = step(&room, &cfg, &RobotPose::new(5.0, 5.0, 0.0), Action::Forward, Point::new(5.6, 5.0));
    let crash = step(&blocked, &cfg, &RobotPose::new(4.9, 5.0, 0.0), Action::Forward, Point::new(9.0, 5.0));
    let progress = step(&room, &cfg, &RobotPose::new(3.0, 5.0, 0.0), Action::Forward, Point::new(5.0, 5.0));
    let left = step(&room, &cfg, &RobotPose::new(3.0, 5.0, 0.0), Action::TurnLeft, Point::new(5.0, 5.0));
    let right = step(&room, &cfg, &RobotPose::new(3.0, 5.0, 0.0), Action::TurnRight, Point::new(5.0, 5.0));
    let ok = goal.event == StepEvent::SubgoalReached
        && goal.reward == 30.0
        && crash.event == StepEvent::Crash
        && crash.reward == -5.0
        && crash.terminal
        && (progress.reward - 0.2).abs() < 1e-12
        && left.reward == 0.0
        && right.reward == 0.0;
    ensure(
        ok,
        format!(
            "goal {} crash {} progress {:.6} turns {} {}",
            goal.reward, crash.reward, progress.reward, left.reward, right.reward
        ),
    )
}

fn schedules() -> Check {
    let e = EpsilonSchedule::default();
    let eps = [e.epsilon_at(0), e.epsilon_at(40_000), e.epsilon_at(80_000)];
    let b = DistillConfig::default();
    let lr = [b.lr_at(0), b.lr_at(50), b.lr_at(75)];
    let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
    let ok = close(eps[0], 0.9)
        && close(eps[1], 0.5)
        && close(eps[2], 0.1)
        && close(lr[0], 0.1)
        && close(lr[1], 0.01)
        && close(lr[2], 0.001)
        && b.epochs == 100;
    ensure(ok, format!("epsilon {eps:?}, branch lr {lr:?}, {} epochs", b.epochs))
}

fn planner() -> Check {
    let room = WorldMap::new(Rect::new(0.0, 0.0, 10.0, 10.0), vec![]).map_err(|e| e.to_string())?;
    let (start, goal) = (Point::new(1.0, 1.0), Point::new(9.0, 9.0));
    let cfg = |iterations, seed| PlannerConfig {
        max_iterations: iterations,
        seed,
        ..PlannerConfig::default()
    };
    let mut costs = Vec::new();
    for seed in 0..20 {
        let r = plan(start, goal, &room, &cfg(5000, seed)).map_err(|e| e.to_string())?;
        costs.push(r.cost().ok_or("empty map without a path")?);
    }
    costs.sort_by(f64::total_cmp);
    let ratio = (costs[9] + costs[10]) / 2.0 / start.distance(goal);

    let wall = WorldMap::new(Rect::new(0.0, 0.0, 10.0, 10.0), vec![Rect::new(4.5, 0.0, 5.5, 10.0)])
        .map_err(|e| e.to_string())?;
    let blocked = plan(start, goal, &wall, &cfg(2000, 1)).map_err(|e| e.to_string())? == PlanResult::Infeasible;

    let bundled = WorldMap::bundled();
    let audit = cfg(500, 3);
    let mut search = RrtStar::new(&bundled, Point::new(1.0, 1.0), Point::new(7.2, 7.2), &audit).map_err(|e| e.to_string())?;
    let mut drift = 0.0f64;
    for _ in 0..audit.max_iterations {
        search.iterate();
        drift = drift.max(search.tree().cost_inconsistency().ok_or("cycle in tree")?);
    }
    ensure(
        ratio <= 1.05 && blocked && drift <= 1e-9,
        format!("median cost / euclidean {ratio:.4}, blocked infeasible {blocked}, max cost drift {drift:.1e}"),
    )
}

fn determinism(scratch: &Path) -> Check {
    let config = scratch.join("determinism.ini");
    std::fs::write(
        &config,
        "[run]\nseed = 5\n[planner]\nmax_iterations = 1500\n[dqn]\nepisodes = 500\nepsilon_anneal_episodes = 500\n\
         [branch]\nepochs = 5\nharvest_episodes = 50\n[eval]\nstates = 50\n",
    )
    .map_err(|e| e.to_string())?;
    let mut runs = Vec::new();
    for name in ["a", "b"] {
        let out = scratch.join(name);
        navattn(&config, &out, &["train"])?;
        navattn(&config, &out, &["distill"])?;
        navattn(&config, &out, &["metrics"])?;
        let mut files = BTreeMap::new();
        for entry in std::fs::read_dir(&out).map_err(|e| e.to_string())? {
            let path = entry.map_err(|e| e.to_string())?.path();
            let bytes = std::fs::read(&path).map_err(|e| e.to_string())?;
            files.insert(path.file_name().unwrap().to_string_lossy().into_owned(), bytes);
        }
        runs.push(files);
    }
    let names: Vec<&String> = runs[0].keys().collect();
    let differing: Vec<&String> = names.iter().copied().filter(|n| runs[1].get(*n) != runs[0].get(*n)).collect();
    let required = [TRUNK_FILE, MODEL_FILE, "train_log.csv", "distill_log.csv", "auc.csv", "deletion.csv", "insertion.csv"];
    let missing: Vec<&str> = required.iter().copied().filter(|f| !runs[0].contains_key(*f)).collect();
    ensure(
        differing.is_empty() && missing.is_empty() && runs[0].len() == runs[1].len(),
        format!("{} files compared, differing {differing:?}, missing {missing:?}", names.len()),
    )
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let reuse = args.iter().position(|a| a == "--reuse").map(|i| PathBuf::from(&args[i + 1]));
    let scratch = tempfile::tempdir().expect("temp dir");
    let work = reuse.clone().unwrap_or_else(|| scratch.path().join("desk"));
    let desk = repo_root().join("configs/desk.ini");
    let mut report = Report { failed: 0 };

    let t = Instant::now();
    report.record(1, "gradient correctness", t, gradients());
    let t = Instant::now();
    report.record(2, "reward values", t, rewards());
    let t = Instant::now();
    report.record(3, "schedules", t, schedules());
    let t = Instant::now();
    report.record(11, "planner", t, planner());
    let t = Instant::now();
    report.record(12, "end-to-end determinism", t, determinism(scratch.path()));

    // Stage 1 at desk scale.
    let t = Instant::now();
    let trunk_path = work.join(TRUNK_FILE);
    let trained = if reuse.is_some() && trunk_path.exists() {
        Ok(String::new())
    } else {
        navattn(&desk, &work, &["train"])
    };
    let nav = trained.and_then(|_| {
        navattn(&desk, &work, &["eval-nav", "--trials", "50"])?;
        let row = read_csv(&work.join("nav_stats.csv"))?.remove(0);
        let (succ, trials, coll) = (field(&row, "successes")?, field(&row, "trials")?, field(&row, "collisions")?);
        let dist = field(&row, "avg_final_distance_m")?;
        ensure(
            trials == 50.0 && succ >= 40.0 && coll <= 5.0,
            format!("{succ}/{trials} successes, {coll} collisions, mean final distance {dist:.3} m"),
        )
    });
    let have_trunk = trunk_path.exists();
    report.record(5, "desk-scale navigation", t, nav);

    // Stage 2.
    let t = Instant::now();
    let model_path = work.join(MODEL_FILE);
    let distilled = if !have_trunk {
        Err("no trunk checkpoint".to_string())
    } else if reuse.is_some() && model_path.exists() {
        Ok(None)
    } else {
        let before = Checkpoint::load(&trunk_path)
            .and_then(|c| c.trunk())
            .map(|n| params_digest(&n))
            .map_err(|e| e.to_string());
        navattn(&desk, &work, &["distill"]).and_then(|stdout| before.map(|b| Some((b, stdout))))
    };
    let distill_secs = t.elapsed().as_secs_f64();
    let frozen = distilled.clone().and_then(|d| {
        let after_ck = Checkpoint::load(&model_path).and_then(|c| c.trunk()).map_err(|e| e.to_string())?;
        let after = params_digest(&after_ck);
        let before = Checkpoint::load(&trunk_path)
            .and_then(|c| c.trunk())
            .map(|n| params_digest(&n))
            .map_err(|e| e.to_string())?;
        let printed = d
            .as_ref()
            .and_then(|(_, out)| out.lines().find_map(|l| l.strip_prefix("trunk sha256 ")).map(str::to_string));
        let pre_run = d.as_ref().map_or(before.clone(), |(b, _)| b.clone());
        let ok = before == after && pre_run == after && printed.as_ref().is_none_or(|p| *p == after);
        ensure(ok, format!("sha256 {}… before and after distill", &after[..16]))
    });
    report.record(4, "frozen trunk", t, frozen);
    let t = Instant::now();
    let agreement = distilled.and_then(|_| {
        let log = read_csv(&work.join("distill_log.csv"))?;
        let last = log.last().ok_or("empty distill log")?;
        let (epochs, held) = (log.len(), field(last, "heldout_agreement")?);
        ensure(
            epochs == 100 && held >= 0.90,
            format!("held-out agreement {held:.4} after {epochs} epochs (distill took {distill_secs:.0} s)"),
        )
    });
    report.record(6, "distillation agreement", t, agreement);

    let t = Instant::now();
    let metrics = if model_path.exists() {
        navattn(&desk, &work, &["metrics", "--states", "1000"]).and_then(|_| {
            let rows = read_csv(&work.join("auc.csv"))?;
            let get = |src: &str, col: &str| -> Result<f64, String> {
                field(rows.iter().find(|r| r["source"] == src).ok_or(format!("no {src} row"))?, col)
            };
            let (db, dv, dr) = (get("branch", "deletion_auc")?, get("visualbackprop", "deletion_auc")?, get("random", "deletion_auc")?);
            let (ib, iv, ir) = (get("branch", "insertion_auc")?, get("visualbackprop", "insertion_auc")?, get("random", "insertion_auc")?);
            ensure(
                db + 0.03 <= dr && ib >= ir + 0.03 && (db < dv || ib > iv),
                format!(
                    "deletion branch {db:.4} vbp {dv:.4} random {dr:.4}; insertion branch {ib:.4} vbp {iv:.4} random {ir:.4}"
                ),
            )
        })
    } else {
        Err("no model checkpoint".into())
    };
    report.record(7, "explanation ordering", t, metrics);

    // In-process checks on the distilled model.
    let setup = RunConfig::load(&desk)
        .and_then(Workspace::new)
        .and_then(|ws| load_model(&model_path).map(|m| (ws, m)))
        .map_err(|e| e.to_string());
    let (ws, (trunk, branch)) = match setup {
        Ok(s) => s,
        Err(e) => {
            for (id, name) in [(8, "curve anchors"), (9, "sub-goal sensitivity"), (10, "action lateralization")] {
                report.record(id, name, Instant::now(), Err(e.clone()));
            }
            finish(report);
            return;
        }
    };
    let d_max = ws.cfg.dqn.d_max;
    let ctx = ws.eval_context();

    let t = Instant::now();
    let anchors = (|| -> Check {
        let states = sample_eval_states(&ctx, &trunk, 200, ws.cfg.seed).map_err(|e| e.to_string())?;
        let mut lines = Vec::new();
        for (source, maps) in saliency_maps(&trunk, &branch, &states, d_max, ws.cfg.seed).map_err(|e| e.to_string())? {
            let squared: Vec<SaliencyMap> = maps.iter().map(|m| m.map_values(|v| v * v).unwrap()).collect();
            let curve = |m: &[SaliencyMap], del: bool| {
                if del {
                    deletion_curve(&trunk, &states, m, ws.cfg.eval.steps, d_max)
                } else {
                    insertion_curve(&trunk, &states, m, ws.cfg.eval.steps, d_max)
                }
                .map_err(|e| e.to_string())
            };
            let (d, i) = (curve(&maps, true)?, curve(&maps, false)?);
            let invariant = d == curve(&squared, true)? && i == curve(&squared, false)?;
            if d.accuracy[0] != 1.0 || *i.accuracy.last().unwrap() != 1.0 || !invariant {
                return Err(format!(
                    "{source}: deletion(0) {} insertion(1) {} rank-invariant {invariant}",
                    d.accuracy[0],
                    i.accuracy.last().unwrap()
                ));
            }
            lines.push(source.name());
        }
        Ok(format!("deletion(0) = insertion(1) = 1 and squaring-invariant for {lines:?} on 200 states"))
    })();
    report.record(8, "curve anchors", t, anchors);

    let t = Instant::now();
    let sensitivity = (|| -> Check {
        let probes = sample_eval_states(&ctx, &trunk, 100, ws.cfg.seed + 1).map_err(|e| e.to_string())?;
        // Angles are positive to the left here, so the right-front sub-goal
        // is -pi/4 and the left-front one is +pi/4.
        let (mut differ, mut right_cols, mut left_cols) = (0, Vec::new(), Vec::new());
        for s in &probes {
            let maps = angle_sweep(&trunk, &branch, &s.frame, &[-FRAC_PI_4, FRAC_PI_4], SWEEP_DISTANCE, d_max)
                .map_err(|e| e.to_string())?;
            differ += usize::from(maps[0].l1_distance(&maps[1]) > 0.01);
            right_cols.push(maps[0].mean_column());
            left_cols.push(maps[1].mean_column());
        }
        let (r, l) = (mean(&right_cols), mean(&left_cols));
        ensure(
            differ * 100 >= 80 * probes.len() && r >= l,
            format!(
                "{differ}/{} probes differ by L1 > 0.01; mean column right-front {r:.2} vs left-front {l:.2}",
                probes.len()
            ),
        )
    })();
    report.record(9, "sub-goal sensitivity", t, sensitivity);

    let t = Instant::now();
    let lateral = (|| -> Check {
        let states: Vec<EvalState> =
            sample_eval_states(&ctx, &trunk, ws.cfg.eval.states, ws.cfg.seed).map_err(|e| e.to_string())?;
        let avg = averaged_attention_per_action(&trunk, &branch, &states, d_max).map_err(|e| e.to_string())?;
        let (l, r) = (avg.mean_column(Action::TurnLeft), avg.mean_column(Action::TurnRight));
        match (l, r) {
            (Some(l), Some(r)) => ensure(
                l < r,
                format!("mean column turn_left {l:.2} vs turn_right {r:.2}; counts {:?}", avg.counts()),
            ),
            _ => Err(format!("a turn partition is empty; counts {:?}", avg.counts())),
        }
    })();
    report.record(10, "action lateralization", t, lateral);

    finish(report);
}

fn finish(report: Report) {
    println!("acceptance: {} of 12 criteria failed", report.failed);
    if report.failed > 0 {
        std::process::exit(1);
    }
}
