//! The operations behind each CLI subcommand. All outputs live under one
//! root directory laid out by [`Layout`].

use std::fs;
use std::path::Path;

use super::experiment::{run_method, Experiment, Method, MethodOutcome, TrainedModels};
use super::io::{
    content_hash, merge_method_rows, read_csv, read_popularity_csv, requests_from_rows, round_rows, trace_rows,
    write_csv, write_popularity_csv, EvalRow, Layout, MixtureRow, OnlineRow, ProfileFile, TraceRow,
};
use super::mixture_check::{check_case, reference_cases, MixtureCheck};
use super::online::{run_online, OnlineSlot};
use super::ExperimentConfig;
use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::popdyn::{PopularityVector, RequestTrace};
use crate::rng::{stream, Stream};

const MANIFEST_MAGIC: &str = "edgepop-manifest v1";

/// Dataset manifest: seed, combined content hash, per-file hashes and the
/// generating config.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub seed: u64,
    pub content_sha256: String,
    pub files: Vec<(String, String)>,
    pub config: ExperimentConfig,
}

impl Manifest {
    pub fn render(&self) -> Result<String> {
        let mut s = format!(
            "{MANIFEST_MAGIC}\nseed {}\ncontent_sha256 {}\n",
            self.seed, self.content_sha256
        );
        for (path, hash) in &self.files {
            s.push_str(&format!("file {path} {hash}\n"));
        }
        s.push_str("config\n");
        s.push_str(&self.config.to_toml()?);
        Ok(s)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |line: usize, msg: &str| Error::Parse {
            line,
            msg: msg.to_string(),
        };
        let mut lines = text.lines().enumerate();
        if lines.next().map(|(_, l)| l) != Some(MANIFEST_MAGIC) {
            return Err(bad(1, "missing manifest header"));
        }
        let mut seed = None;
        let mut hash = None;
        let mut files = Vec::new();
        let mut config_start = None;
        for (i, line) in lines.by_ref() {
            let mut parts = line.split(' ');
            match (parts.next(), parts.next(), parts.next(), parts.next()) {
                (Some("seed"), Some(v), None, None) => {
                    seed = Some(v.parse::<u64>().map_err(|_| bad(i + 1, "bad seed"))?);
                }
                (Some("content_sha256"), Some(v), None, None) => hash = Some(v.to_string()),
                (Some("file"), Some(p), Some(h), None) => files.push((p.to_string(), h.to_string())),
                (Some("config"), None, None, None) => {
                    config_start = Some(i + 1);
                    break;
                }
                _ => return Err(bad(i + 1, "unrecognised manifest line")),
            }
        }
        let start = config_start.ok_or_else(|| bad(0, "missing config section"))?;
        let body: Vec<&str> = text.lines().skip(start).collect();
        let config = ExperimentConfig::from_toml(&body.join("\n"))?;
        let seed = seed.ok_or_else(|| bad(0, "missing seed"))?;
        if seed != config.seed {
            return Err(Error::Mismatch(format!(
                "manifest seed {seed} but config seed {}",
                config.seed
            )));
        }
        Ok(Manifest {
            seed,
            content_sha256: hash.ok_or_else(|| bad(0, "missing content_sha256"))?,
            files,
            config,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

/// Simulates every user's trace and writes traces, true popularities,
/// profiles and the manifest.
pub fn cmd_generate(cfg: &ExperimentConfig, out: &Path) -> Result<Manifest> {
    let exp = Experiment::generate(cfg)?;
    let layout = Layout::new(out);
    let mut files = Vec::new();
    for (i, (tr, prof)) in exp.traces.iter().zip(&exp.profiles).enumerate() {
        let trace = layout.trace(i);
        write_csv(&trace, &trace_rows(tr))?;
        let pop = layout.popularity(i);
        write_popularity_csv(&pop, &tr.truth_popularity)?;
        let profile = layout.profile(i);
        let text = ProfileFile {
            seed: cfg.seed,
            n_contents: cfg.n_contents,
            profile: prof.clone(),
        }
        .to_toml()?;
        if let Some(dir) = profile.parent() {
            super::io::ensure_dir(dir)?;
        }
        fs::write(&profile, text).map_err(|e| Error::io(&profile, e))?;
        files.extend([trace, pop, profile]);
    }
    let (content_sha256, files) = content_hash(out, &files)?;
    let manifest = Manifest {
        seed: cfg.seed,
        content_sha256,
        files,
        config: cfg.clone(),
    };
    let path = layout.manifest();
    fs::write(&path, manifest.render()?).map_err(|e| Error::io(&path, e))?;
    log::info!("generated {} users into {}", cfg.n_users, out.display());
    Ok(manifest)
}

/// Reads back a generated dataset and checks it against `cfg`.
pub fn load_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<Experiment> {
    let layout = Layout::new(out);
    let manifest = Manifest::load(&layout.manifest())?;
    if manifest.seed != cfg.seed {
        return Err(Error::Mismatch(format!(
            "dataset generated with seed {}, config seed {}",
            manifest.seed, cfg.seed
        )));
    }
    let gen = &manifest.config;
    if gen.n_contents != cfg.n_contents || gen.n_users != cfg.n_users {
        return Err(Error::Mismatch(format!(
            "dataset has N={} I={}, config N={} I={}",
            gen.n_contents, gen.n_users, cfg.n_contents, cfg.n_users
        )));
    }
    let mut profiles = Vec::with_capacity(cfg.n_users);
    let mut traces = Vec::with_capacity(cfg.n_users);
    for i in 0..cfg.n_users {
        let p = layout.profile(i);
        let pf = ProfileFile::from_toml(&fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?)?;
        if pf.n_contents != cfg.n_contents || pf.seed != cfg.seed {
            return Err(Error::Mismatch(format!(
                "profile {} does not match the config",
                p.display()
            )));
        }
        profiles.push(pf.profile);
        let rows: Vec<TraceRow> = read_csv(&layout.trace(i))?;
        let (requests, truth_alpha) = requests_from_rows(&rows, cfg.n_contents)?;
        let truth_popularity: Vec<PopularityVector> = read_popularity_csv(&layout.popularity(i))?;
        if truth_popularity.len() != requests.len() {
            return Err(Error::Mismatch(format!(
                "user {i}: trace and popularity lengths differ"
            )));
        }
        traces.push(RequestTrace {
            requests,
            truth_alpha,
            truth_popularity,
        });
    }
    Experiment::from_parts(cfg.clone(), profiles, traces)
}

fn client_name(prefix: &str, i: usize) -> String {
    format!("{prefix}_client_{i}")
}

fn global_name(prefix: &str) -> String {
    format!("{prefix}_global")
}

/// Writes one checkpoint per client model plus the global encoder.
pub fn save_models(layout: &Layout, prefix: &str, models: &TrainedModels, cfg: &ExperimentConfig) -> Result<()> {
    let window = cfg.window + 1;
    let mut ckpts = Vec::new();
    match models {
        TrainedModels::Lstm { clients, global } => {
            for (i, c) in clients.iter().enumerate() {
                ckpts.push((client_name(prefix, i), Checkpoint::from_lstm(c, window, cfg.seed)?));
            }
            if let Some(g) = global {
                ckpts.push((global_name(prefix), Checkpoint::from_lstm_encoder(g, window, cfg.seed)?));
            }
        }
        TrainedModels::Dense { clients, global } => {
            for (i, c) in clients.iter().enumerate() {
                ckpts.push((client_name(prefix, i), Checkpoint::from_dense(c, cfg.seed)));
            }
            if let Some(g) = global {
                ckpts.push((global_name(prefix), Checkpoint::from_dense_encoder(g, cfg.seed)));
            }
        }
    }
    for (name, c) in ckpts {
        c.save(&layout.checkpoint(&name))?;
    }
    Ok(())
}

fn check_header(c: &Checkpoint, cfg: &ExperimentConfig, path: &Path) -> Result<()> {
    if c.header.n_contents != cfg.n_contents || c.header.window != cfg.window + 1 {
        return Err(Error::Mismatch(format!(
            "{} was trained with N={} window={}, config N={} window={}",
            path.display(),
            c.header.n_contents,
            c.header.window,
            cfg.n_contents,
            cfg.window + 1
        )));
    }
    Ok(())
}

/// Loads the final checkpoints written by `cmd_train` for `method`.
pub fn load_models(layout: &Layout, method: Method, cfg: &ExperimentConfig) -> Result<TrainedModels> {
    let prefix = method.name();
    let n_clients = if method == Method::Drael { 1 } else { cfg.n_users };
    let mut clients = Vec::with_capacity(n_clients);
    for i in 0..n_clients {
        let path = layout.checkpoint(&client_name(prefix, i));
        let c = Checkpoint::load(&path)?;
        check_header(&c, cfg, &path)?;
        clients.push(c);
    }
    let gpath = layout.checkpoint(&global_name(prefix));
    let global = if gpath.exists() {
        let c = Checkpoint::load(&gpath)?;
        check_header(&c, cfg, &gpath)?;
        Some(c)
    } else {
        None
    };
    if method.is_dense() {
        Ok(TrainedModels::Dense {
            clients: clients.into_iter().map(Checkpoint::into_dense).collect::<Result<_>>()?,
            global: global.map(Checkpoint::into_dense_encoder).transpose()?,
        })
    } else {
        Ok(TrainedModels::Lstm {
            clients: clients.into_iter().map(Checkpoint::into_lstm).collect::<Result<_>>()?,
            global: global.map(Checkpoint::into_lstm_encoder).transpose()?,
        })
    }
}

/// Trains `method` on a generated dataset, writing `reports/rounds.csv`
/// and checkpoints.
pub fn cmd_train(cfg: &ExperimentConfig, out: &Path, method: Method) -> Result<MethodOutcome> {
    let exp = load_experiment(cfg, out)?;
    let layout = Layout::new(out);
    let prefix = method.name();
    let mut hook =
        |round: usize, models: &TrainedModels| save_models(&layout, &format!("{prefix}_round_{round}"), models, cfg);
    let outcome = run_method(&exp, method, Some(&mut hook))?;
    save_models(&layout, prefix, &outcome.models, cfg)?;
    merge_method_rows(
        &layout.report("rounds.csv"),
        prefix,
        round_rows(prefix, &outcome.reports),
        |r| r.method.as_str(),
    )?;
    if let Some(last) = outcome.reports.last() {
        log::info!(
            "{prefix}: {} rounds, global RMSE {:?}, mean local RMSE {:?}",
            outcome.reports.len(),
            last.global_rmse,
            last.mean_local_rmse()
        );
    }
    Ok(outcome)
}

fn online_rows(method: &str, slots: &[OnlineSlot], exp: &Experiment) -> Vec<OnlineRow> {
    let mut rows = Vec::new();
    let mut push = |slot, user_id: Option<u32>, pred: &PopularityVector, truth: &PopularityVector, err: &[f64]| {
        let entries = pred.as_slice().iter().zip(truth.as_slice()).zip(err);
        for (n, ((&predicted, &truth), &abs_error)) in entries.enumerate() {
            rows.push(OnlineRow {
                method: method.to_string(),
                slot,
                scope: if user_id.is_some() { "local" } else { "global" }.into(),
                user_id,
                content: n + 1,
                predicted,
                truth,
                abs_error,
            });
        }
    };
    for s in slots {
        for (i, (pred, err)) in s.local_pred.iter().zip(&s.local_errors).enumerate() {
            push(
                s.slot,
                Some(i as u32),
                pred,
                &exp.traces[i].truth_popularity[s.slot],
                err,
            );
        }
        if let (Some(pred), Some(err)) = (&s.global_pred, &s.global_errors) {
            push(s.slot, None, pred, &s.global_truth, err);
        }
    }
    rows
}

/// Replays the online slots with trained checkpoints, writing
/// `reports/online.csv`.
pub fn cmd_online(cfg: &ExperimentConfig, out: &Path, method: Method) -> Result<Vec<OnlineSlot>> {
    let exp = load_experiment(cfg, out)?;
    let layout = Layout::new(out);
    let models = load_models(&layout, method, cfg)?;
    let has_global = !matches!(
        &models,
        TrainedModels::Lstm { global: None, .. } | TrainedModels::Dense { global: None, .. }
    );
    let global: Option<&dyn super::online::GlobalPredictor> = if has_global { Some(&models) } else { None };
    let slots = run_online(&exp, &models, global, exp.online_range())?;
    if slots.iter().any(|s| !s.buffer_cleared) {
        return Err(Error::InvalidParameter("server buffer not cleared after a slot".into()));
    }
    merge_method_rows(
        &layout.report("online.csv"),
        method.name(),
        online_rows(method.name(), &slots, &exp),
        |r| r.method.as_str(),
    )?;
    Ok(slots)
}

/// Compares the closed-form mixture with sampled estimates for the four
/// reference groups, writing `reports/theorem1.csv`.
pub fn cmd_validate_theorem1(seed: u64, n_slots: usize, out: &Path) -> Result<Vec<MixtureCheck>> {
    let mut rng = stream(seed, Stream::Mixture);
    let checks = reference_cases()
        .iter()
        .map(|c| check_case(c, n_slots, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for c in &checks {
        for (n, (t, e)) in c.theoretical.as_slice().iter().zip(c.estimate.as_slice()).enumerate() {
            rows.push(MixtureRow {
                distribution: c.name.clone(),
                content: n + 1,
                theoretical: *t,
                estimate: *e,
                gap: e - t,
            });
        }
        log::info!("{}: max-abs gap {:.5}, RMSE {:.5}", c.name, c.max_abs_gap, c.rmse);
    }
    write_csv(&Layout::new(out).report("theorem1.csv"), &rows)?;
    Ok(checks)
}

/// Held-out RMSE of trained checkpoints next to the uniform predictor,
/// writing `reports/eval.csv`.
pub fn cmd_eval(cfg: &ExperimentConfig, out: &Path, method: Method) -> Result<Vec<EvalRow>> {
    let exp = load_experiment(cfg, out)?;
    let layout = Layout::new(out);
    let models = load_models(&layout, method, cfg)?;
    let mut rows = Vec::new();
    for i in 0..cfg.n_users {
        let set = exp.local_eval(i)?;
        rows.push(EvalRow {
            method: method.name().into(),
            scope: "local".into(),
            user_id: Some(i as u32),
            rmse: set.mean_rmse(|w| models.predict_local(i, w))?,
            uniform_rmse: set.uniform_rmse()?,
        });
    }
    let set = exp.global_eval()?;
    let refs: Vec<&[_]> = set.windows.iter().map(|w| w.as_slice()).collect();
    if models.predict_global(&refs[..1])?.is_some() {
        rows.push(EvalRow {
            method: method.name().into(),
            scope: "global".into(),
            user_id: None,
            rmse: set.mean_rmse(|w| models.predict_global(w)?.ok_or(Error::Empty("global model")))?,
            uniform_rmse: set.uniform_rmse()?,
        });
    }
    merge_method_rows(&layout.report("eval.csv"), method.name(), rows.clone(), |r| {
        r.method.as_str()
    })?;
    Ok(rows)
}

/// Loads the config at `path`, or the one echoed in the dataset manifest.
pub fn resolve_config(path: Option<&Path>, out: &Path) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(Manifest::load(&Layout::new(out).manifest())?.config),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(seed: u64) -> ExperimentConfig {
        ExperimentConfig {
            n_contents: 5,
            n_users: 2,
            window: 3,
            epochs: 2,
            samples: 16,
            batch: 4,
            rounds: 2,
            encoder_widths: vec![6, 5],
            train_slots: 40,
            eval_slots: 10,
            online_slots: 4,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn manifest_round_trip_and_rejects() {
        let m = Manifest {
            seed: 3,
            content_sha256: "ab".into(),
            files: vec![("traces/user_0.csv".into(), "cd".into())],
            config: tiny(3),
        };
        let text = m.render().unwrap();
        assert_eq!(Manifest::parse(&text).unwrap(), m);
        assert!(Manifest::parse("nope").is_err());
        assert!(Manifest::parse(&text.replace("seed 3\n", "seed 4\n")).is_err());
        assert!(Manifest::parse(&text.replace("\nconfig\n", "\n")).is_err());
    }

    #[test]
    fn generate_is_reproducible_and_loadable() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let ma = cmd_generate(&tiny(5), a.path()).unwrap();
        let mb = cmd_generate(&tiny(5), b.path()).unwrap();
        assert_eq!(ma.content_sha256, mb.content_sha256);
        assert_eq!(ma.files.len(), 6);
        let exp = load_experiment(&tiny(5), a.path()).unwrap();
        assert_eq!(exp, Experiment::generate(&tiny(5)).unwrap());
        assert!(load_experiment(&tiny(6), a.path()).is_err());
        let mut wrong = tiny(5);
        wrong.n_contents = 6;
        wrong.encoder_widths = vec![6];
        assert!(matches!(load_experiment(&wrong, a.path()), Err(Error::Mismatch(_))));
    }

    #[test]
    fn zero_rounds_leaves_initialization() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny(8);
        cfg.rounds = 0;
        cmd_generate(&cfg, dir.path()).unwrap();
        let out = cmd_train(&cfg, dir.path(), Method::Urfl).unwrap();
        assert!(out.reports.is_empty());
        let layout = Layout::new(dir.path());
        let loaded = load_models(&layout, Method::Urfl, &cfg).unwrap();
        let init = crate::lstm_ae::ModelParams::init(&cfg.layer_spec().unwrap(), &mut stream(8, Stream::Init));
        match loaded {
            TrainedModels::Lstm { clients, .. } => assert!(clients.iter().all(|c| *c == init)),
            _ => panic!("expected LSTM models"),
        }
    }

    #[test]
    fn train_online_eval_for_every_method() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny(9);
        cmd_generate(&cfg, dir.path()).unwrap();
        for m in Method::ALL {
            let out = cmd_train(&cfg, dir.path(), m).unwrap();
            assert_eq!(out.reports.len(), cfg.rounds);
            let slots = cmd_online(&cfg, dir.path(), m).unwrap();
            assert_eq!(slots.len(), cfg.online_slots);
            let rows = cmd_eval(&cfg, dir.path(), m).unwrap();
            assert!(rows.iter().all(|r| r.rmse >= 0.0));
        }
        let layout = Layout::new(dir.path());
        let rounds: Vec<super::super::io::RoundRow> = read_csv(&layout.report("rounds.csv")).unwrap();
        assert_eq!(rounds.len(), Method::ALL.len() * cfg.rounds * cfg.n_users);
        let online: Vec<OnlineRow> = read_csv(&layout.report("online.csv")).unwrap();
        assert!(online.iter().all(|r| r.abs_error >= 0.0));
    }

    #[test]
    fn missing_checkpoints_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny(10);
        cmd_generate(&cfg, dir.path()).unwrap();
        assert!(matches!(
            cmd_online(&cfg, dir.path(), Method::Urfl),
            Err(Error::Io { .. })
        ));
    }
}
