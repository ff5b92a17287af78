use std::path::Path;

use navattn_core::agent::{DqnNetwork, EpisodeLog};
use navattn_core::branch::AttentionBranch;
use navattn_core::io::pipeline::{self, Workspace};
use navattn_core::io::{encode_ppm, params_digest, training_log_csv, Checkpoint, RunConfig};
use navattn_core::nn::Parameterized;
use navattn_core::rng;
use navattn_core::Error;

fn models() -> (DqnNetwork<f32>, AttentionBranch<f32>) {
    let mut trunk = DqnNetwork::new(&mut rng::stream(11, "init.dqn"));
    trunk.freeze();
    (trunk, AttentionBranch::new(&mut rng::stream(11, "init.branch")))
}

fn bits<M: Parameterized<f32>>(m: &M) -> Vec<u32> {
    m.named_params()
        .into_iter()
        .flat_map(|(_, t)| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>())
        .collect()
}

#[test]
fn checkpoint_file_round_trip_is_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    let (trunk, branch) = models();
    Checkpoint::from_models(&trunk, Some(&branch)).save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert!(back.frozen && back.has_branch());
    assert_eq!(bits(&back.trunk().unwrap()), bits(&trunk));
    assert_eq!(bits(&back.branch().unwrap()), bits(&branch));
    assert_eq!(params_digest(&back.trunk().unwrap()), params_digest(&trunk));
    // Only the target file remains; the temporary was renamed over it.
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
}

#[test]
fn corrupted_or_truncated_checkpoints_are_rejected() {
    let (trunk, _) = models();
    let bytes = Checkpoint::from_models(&trunk, None).to_bytes();
    let mut flipped = bytes.clone();
    let mid = flipped.len() / 2;
    flipped[mid] ^= 0x40;
    assert!(Checkpoint::from_bytes(&flipped).is_err());
    assert!(Checkpoint::from_bytes(&bytes[..bytes.len() / 3]).is_err());
    assert!(Checkpoint::from_bytes(&[]).is_err());
}

#[test]
fn config_round_trips_with_overrides() {
    let text = "[run]\nseed = 17\n[dqn]\nepisodes = 321\nepsilon_anneal_episodes = 99\n[branch]\nepochs = 7\n[eval]\ntrials = 3\n";
    let cfg = RunConfig::parse(text).unwrap();
    assert_eq!(cfg.seed, 17);
    assert_eq!(cfg.dqn.episodes, 321);
    assert_eq!(RunConfig::parse(&cfg.render()).unwrap(), cfg);
    assert_ne!(cfg, RunConfig::default());
}

#[test]
fn shipped_desk_config_parses() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.ini");
    let cfg = RunConfig::load(&path).unwrap();
    assert_eq!(RunConfig::parse(&cfg.render()).unwrap(), cfg);
    assert!(cfg.dqn.episodes <= 20_000);
}

#[test]
fn malformed_config_names_the_line() {
    assert!(matches!(
        RunConfig::parse("[run]\nseed = 1\n[dqn\n"),
        Err(Error::Config { line: 3, .. })
    ));
    assert!(matches!(RunConfig::parse("seed = 1\n"), Err(Error::Config { line: 1, .. })));
    assert!(matches!(
        RunConfig::parse("[optics]\nzoom = 2\n"),
        Err(Error::Config { line: 1, .. })
    ));
}

#[test]
fn distill_requires_a_frozen_trunk_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let ws = Workspace::new(RunConfig::default()).unwrap();
    let missing = dir.path().join("trunk.ckpt");
    assert!(pipeline::distill(&ws, &missing, dir.path(), |_| {}).is_err());

    let live = DqnNetwork::new(&mut rng::stream(0, "init.dqn"));
    Checkpoint::from_models(&live, None).save(&missing).unwrap();
    assert!(matches!(
        pipeline::distill(&ws, &missing, dir.path(), |_| {}),
        Err(Error::NotFrozen(_))
    ));
}

#[test]
fn training_log_has_documented_columns() {
    let log = [EpisodeLog {
        episode: 0,
        total_return: 29.8,
        steps: 12,
        success: true,
        epsilon: 0.9,
        td_loss_mean: f64::NAN,
        skipped: false,
    }];
    let text = String::from_utf8(training_log_csv(&log).unwrap()).unwrap();
    let mut lines = text.lines();
    assert!(lines
        .next()
        .unwrap()
        .starts_with("episode,return,steps,success,epsilon,td_loss_mean"));
    assert_eq!(lines.next().unwrap(), "0,29.8,12,1,0.9,,0");
}

#[test]
fn ppm_header_and_size() {
    let img = encode_ppm(2, 1, &[255, 0, 0, 0, 0, 255]).unwrap();
    assert_eq!(&img[..11], b"P6\n2 1\n255\n");
    assert_eq!(img.len(), 11 + 6);
    assert!(encode_ppm(2, 2, &[0; 6]).is_err());
}
