use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fedcore::RoundReport;
use crate::popdyn::{ContentId, MarkovChain, PopularityVector, RequestTrace, UserProfile};

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        source: e,
    }
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_err(path, e))).collect()
}

/// Parses CSV text held in memory.
pub fn parse_csv<T: DeserializeOwned>(text: &str) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize()
        .map(|row| row.map_err(|e| csv_err(Path::new("<memory>"), e)))
        .collect()
}

/// One slot of a request trace file. `request` is empty for no request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub slot: usize,
    pub request: Option<usize>,
    pub alpha: f64,
}

pub fn trace_rows(trace: &RequestTrace) -> Vec<TraceRow> {
    trace
        .requests
        .iter()
        .zip(&trace.truth_alpha)
        .enumerate()
        .map(|(slot, (r, a))| TraceRow {
            slot,
            request: r.map(|c| c.get()),
            alpha: *a,
        })
        .collect()
}

/// Checks slot numbering and content range, returning requests and alphas.
pub fn requests_from_rows(rows: &[TraceRow], n_contents: usize) -> Result<(Vec<Option<ContentId>>, Vec<f64>)> {
    let mut requests = Vec::with_capacity(rows.len());
    let mut alphas = Vec::with_capacity(rows.len());
    for (i, r) in rows.iter().enumerate() {
        if r.slot != i {
            return Err(Error::parse(i + 2, format!("expected slot {i}, found {}", r.slot)));
        }
        requests.push(r.request.map(|c| ContentId::new(c, n_contents)).transpose()?);
        alphas.push(r.alpha);
    }
    Ok((requests, alphas))
}

pub fn write_popularity_csv(path: &Path, popularity: &[PopularityVector]) -> Result<()> {
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let n = popularity.first().map_or(0, |p| p.len());
    let mut header = vec!["slot".to_string()];
    header.extend((1..=n).map(|i| format!("p{i}")));
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for (slot, p) in popularity.iter().enumerate() {
        let mut rec = vec![slot.to_string()];
        rec.extend(p.as_slice().iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Parses a popularity table: header `slot,p1..pN`, one valid PMF per row.
pub fn parse_popularity_csv<R: std::io::Read>(reader: R) -> Result<Vec<PopularityVector>> {
    let mut r = csv::Reader::from_reader(reader);
    let headers = r.headers().map_err(|e| Error::parse(1, e.to_string()))?.clone();
    let n = headers.len().saturating_sub(1);
    let expected = (1..=n).all(|i| headers.get(i) == Some(format!("p{i}").as_str()));
    if headers.get(0) != Some("slot") || n == 0 || !expected {
        return Err(Error::parse(1, "expected header slot,p1..pN"));
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::parse(line, e.to_string()))?;
        if rec.get(0).and_then(|s| s.parse::<usize>().ok()) != Some(i) {
            return Err(Error::parse(line, format!("expected slot {i}")));
        }
        let probs = rec
            .iter()
            .skip(1)
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| Error::parse(line, format!("bad probability {v:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        out.push(PopularityVector::new(probs).map_err(|e| Error::parse(line, e.to_string()))?);
    }
    Ok(out)
}

pub fn read_popularity_csv(path: &Path) -> Result<Vec<PopularityVector>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_popularity_csv(f).map_err(|e| match e {
        Error::Parse { line, msg } => Error::Parse {
            line,
            msg: format!("{}: {msg}", path.display()),
        },
        other => other,
    })
}

/// Contents of a stored profile file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileFile {
    pub seed: u64,
    pub n_contents: usize,
    pub profile: UserProfile,
}

impl ProfileFile {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Parses and re-validates the chain and arrival rate.
    pub fn from_toml(text: &str) -> Result<Self> {
        let f: ProfileFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let c = &f.profile.chain;
        MarkovChain::new(c.states().to_vec(), c.transition().to_vec(), c.current())?;
        f.profile.arrival_rate.validate()?;
        if f.n_contents == 0 {
            return Err(Error::Config("n_contents must be positive".into()));
        }
        Ok(f)
    }
}

pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }

    pub fn trace(&self, user: usize) -> PathBuf {
        self.root.join(format!("traces/user_{user}.csv"))
    }

    pub fn popularity(&self, user: usize) -> PathBuf {
        self.root.join(format!("traces/user_{user}_popularity.csv"))
    }

    pub fn profile(&self, user: usize) -> PathBuf {
        self.root.join(format!("profiles/user_{user}.txt"))
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.txt")
    }

    pub fn report(&self, name: &str) -> PathBuf {
        self.root.join("reports").join(name)
    }

    pub fn checkpoint(&self, name: &str) -> PathBuf {
        self.root.join("checkpoints").join(format!("{name}.ckpt"))
    }
}

/// One row of `reports/rounds.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRow {
    pub method: String,
    pub round: usize,
    pub client_id: u32,
    pub avg_loss: Option<f64>,
    pub gamma: Option<f64>,
    pub local_rmse: Option<f64>,
    pub global_rmse: Option<f64>,
    pub bytes_cum: u64,
}

pub fn round_rows(method: &str, reports: &[RoundReport]) -> Vec<RoundRow> {
    reports
        .iter()
        .flat_map(|r| {
            r.clients.iter().map(move |c| RoundRow {
                method: method.to_string(),
                round: r.round,
                client_id: c.client_id,
                avg_loss: c.avg_loss,
                gamma: c.gamma,
                local_rmse: c.local_rmse,
                global_rmse: r.global_rmse,
                bytes_cum: r.bytes_cum,
            })
        })
        .collect()
}

/// One per-content error entry of `reports/online.csv`. `user_id` is
/// empty for the global prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineRow {
    pub method: String,
    pub slot: usize,
    pub scope: String,
    pub user_id: Option<u32>,
    pub content: usize,
    pub predicted: f64,
    pub truth: f64,
    pub abs_error: f64,
}

/// One content of one case in `reports/theorem1.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureRow {
    pub distribution: String,
    pub content: usize,
    pub theoretical: f64,
    pub estimate: f64,
    pub gap: f64,
}

/// One row of `reports/eval.csv`. `user_id` is empty for global rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub method: String,
    pub scope: String,
    pub user_id: Option<u32>,
    pub rmse: f64,
    pub uniform_rmse: f64,
}

/// Replaces the rows of one method in a method-keyed report, keeping others.
pub fn merge_method_rows<T, F>(path: &Path, method: &str, rows: Vec<T>, method_of: F) -> Result<()>
where
    T: Serialize + DeserializeOwned,
    F: Fn(&T) -> &str,
{
    let mut all: Vec<T> = if path.exists() {
        read_csv::<T>(path)?
            .into_iter()
            .filter(|r| method_of(r) != method)
            .collect()
    } else {
        Vec::new()
    };
    all.extend(rows);
    write_csv(path, &all)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash over the named files: each contributes `path NUL sha256(content) \n`.
pub fn content_hash(root: &Path, files: &[PathBuf]) -> Result<(String, Vec<(String, String)>)> {
    let mut entries = Vec::with_capacity(files.len());
    for f in files {
        let bytes = fs::read(f).map_err(|e| Error::io(f, e))?;
        let rel = f.strip_prefix(root).unwrap_or(f).to_string_lossy().replace('\\', "/");
        entries.push((rel, sha256_hex(&bytes)));
    }
    entries.sort();
    let mut h = Sha256::new();
    for (p, d) in &entries {
        h.update(p.as_bytes());
        h.update([0]);
        h.update(d.as_bytes());
        h.update(b"\n");
    }
    let hash = h.finalize().iter().map(|b| format!("{b:02x}")).collect();
    Ok((hash, entries))
}
