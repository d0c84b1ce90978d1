//! Run configuration: a JSON file plus `--set path=value` overrides.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use fedlearn_core::data::{attach_labels, check_alignment, load_csv, Alignment, PartyTable};
use fedlearn_core::forest::ForestConfig;
use fedlearn_core::kernel::KernelConfig;
use fedlearn_core::MASTER;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Kernel,
    Forest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransportKind {
    Tcp,
    Loopback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartyEntry {
    pub name: String,
    /// `host:port`, required with the tcp transport.
    #[serde(default)]
    pub endpoint: Option<String>,
    pub data_path: PathBuf,
    #[serde(default)]
    pub is_active: bool,
    #[serde(default)]
    pub label_path: Option<PathBuf>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_timeout() -> u64 {
    300
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub parties: Vec<PartyEntry>,
    pub algorithm: Algorithm,
    #[serde(default)]
    pub kernel: KernelConfig,
    #[serde(default)]
    pub forest: ForestConfig,
    pub transport: TransportKind,
    /// Model manifest, metrics and per-party model fragments go here.
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Per-request network timeout in seconds.
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

/// Applies `path=value` to a JSON tree. Path segments are object keys or array indices;
/// the value is parsed as JSON and taken as a string when that fails.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| anyhow!("override {assignment:?} is not of the form path=value"))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_owned()));
    let mut node = root;
    let segments: Vec<&str> = path.split('.').collect();
    for (i, seg) in segments.iter().enumerate() {
        let last = i + 1 == segments.len();
        node = match node {
            Value::Array(items) => {
                let idx: usize = seg
                    .parse()
                    .map_err(|_| anyhow!("{path}: {seg:?} is not an array index"))?;
                let len = items.len();
                items
                    .get_mut(idx)
                    .ok_or_else(|| anyhow!("{path}: index {idx} out of {len}"))?
            }
            Value::Object(map) => {
                let fill = if last { Value::Null } else { Value::Object(Default::default()) };
                map.entry(seg.to_string()).or_insert(fill)
            }
            _ => bail!("{path}: {seg:?} is not inside an object or array"),
        };
    }
    *node = value;
    Ok(())
}

impl RunConfig {
    /// Reads, overrides, deserializes and validates. Relative paths are taken from the
    /// config file's directory.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut value: Value = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let mut config: RunConfig = serde_path_to_error::deserialize(value).map_err(|e| {
            let at = e.path().to_string();
            anyhow!("config {}: {at}: {}", path.display(), e.into_inner())
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        config.validate()?;
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for party in &mut self.parties {
            fix(&mut party.data_path);
            if let Some(l) = party.label_path.as_mut() {
                fix(l);
            }
        }
        fix(&mut self.output_dir);
    }

    pub fn validate(&self) -> Result<()> {
        if self.parties.is_empty() {
            bail!("parties: at least one party is required");
        }
        let active = self.parties.iter().filter(|p| p.is_active).count();
        if active != 1 {
            bail!("parties: exactly one party must have is_active=true, found {active}");
        }
        let mut seen = HashSet::new();
        for (i, p) in self.parties.iter().enumerate() {
            if p.name.is_empty() || p.name == MASTER {
                bail!("parties[{i}].name: {:?} is not a usable party name", p.name);
            }
            if !seen.insert(&p.name) {
                bail!("parties[{i}].name: duplicate party {:?}", p.name);
            }
            if !p.data_path.is_file() {
                bail!("parties[{i}].data_path: no such file {}", p.data_path.display());
            }
            match (&p.label_path, p.is_active) {
                (Some(l), true) if !l.is_file() => {
                    bail!("parties[{i}].label_path: no such file {}", l.display())
                }
                (None, true) => bail!("parties[{i}].label_path: required for the active party"),
                (Some(_), false) => bail!("parties[{i}].label_path: only the active party holds labels"),
                _ => {}
            }
            if self.transport == TransportKind::Tcp && p.endpoint.is_none() {
                bail!("parties[{i}].endpoint: required with the tcp transport");
            }
        }
        if self.timeout_secs == 0 {
            bail!("timeout_secs: must be at least 1");
        }
        match self.algorithm {
            Algorithm::Kernel => self.kernel.validate()?,
            Algorithm::Forest => self.forest.validate()?,
        }
        Ok(())
    }

    pub fn names(&self) -> Vec<String> {
        self.parties.iter().map(|p| p.name.clone()).collect()
    }

    pub fn active_index(&self) -> usize {
        self.parties.iter().position(|p| p.is_active).expect("validated")
    }

    pub fn party(&self, name: &str) -> Result<(usize, &PartyEntry)> {
        self.parties
            .iter()
            .enumerate()
            .find(|(_, p)| p.name == name)
            .ok_or_else(|| anyhow!("no party named {name:?} in the config"))
    }

    /// Model fragments of one party.
    pub fn model_dir(&self, name: &str) -> PathBuf {
        self.output_dir.join(name)
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.output_dir.join("model.json")
    }

    pub fn metrics_path(&self) -> PathBuf {
        self.output_dir.join("metrics.json")
    }

    /// The table of one party, named as in the config, with labels when active.
    pub fn load_table(&self, index: usize) -> Result<PartyTable> {
        let entry = &self.parties[index];
        let mut table = load_csv(&entry.data_path, false)?;
        table.set_name(entry.name.clone());
        if let Some(labels) = &entry.label_path {
            attach_labels(&mut table, labels)?;
        }
        Ok(table)
    }

    pub fn load_tables(&self) -> Result<Vec<PartyTable>> {
        let tables = (0..self.parties.len())
            .map(|i| self.load_table(i))
            .collect::<Result<Vec<_>>>()?;
        if let Alignment::Mismatch {
            party,
            position,
            expected,
            found,
        } = check_alignment(&tables)
        {
            bail!(
                "parties[{party}].data_path: sample ids disagree with parties[0] at row {position} ({expected:?} vs {found:?})"
            );
        }
        Ok(tables)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn overrides_reach_nested_fields() {
        let mut v = json!({"kernel": {"gamma": 1.0}, "parties": [{"name": "a"}]});
        apply_override(&mut v, "kernel.gamma=0.25").unwrap();
        apply_override(&mut v, "parties.0.endpoint=127.0.0.1:9000").unwrap();
        apply_override(&mut v, "forest.n_trees=3").unwrap();
        assert_eq!(v["kernel"]["gamma"], json!(0.25));
        assert_eq!(v["parties"][0]["endpoint"], json!("127.0.0.1:9000"));
        assert_eq!(v["forest"]["n_trees"], json!(3));
        assert!(apply_override(&mut v, "parties.4.name=x").is_err());
        assert!(apply_override(&mut v, "novalue").is_err());
    }

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    fn base(dir: &Path) -> Value {
        write(dir, "a.csv", "id,x\n1,0.5\n2,1.5\n");
        write(dir, "b.csv", "id,z\n1,2.0\n2,3.0\n");
        write(dir, "y.csv", "id,label\n1,1\n2,-1\n");
        json!({
            "parties": [
                {"name": "a", "data_path": "a.csv", "is_active": true, "label_path": "y.csv"},
                {"name": "b", "data_path": "b.csv"}
            ],
            "algorithm": "kernel",
            "transport": "loopback"
        })
    }

    fn load(dir: &Path, v: &Value, overrides: &[&str]) -> Result<RunConfig> {
        let p = write(dir, "run.json", &v.to_string());
        let o: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
        RunConfig::load(&p, &o)
    }

    #[test]
    fn loads_and_resolves_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let c = load(dir.path(), &base(dir.path()), &[]).unwrap();
        assert_eq!(c.parties[0].data_path, dir.path().join("a.csv"));
        assert_eq!(c.output_dir, dir.path().join("out"));
        let tables = c.load_tables().unwrap();
        assert_eq!(tables[0].labels(), Some(&[1.0, -1.0][..]));
        assert_eq!(tables[1].name(), "b");
    }

    #[test]
    fn rejections_name_the_field() {
        let dir = tempfile::tempdir().unwrap();
        let v = base(dir.path());
        let cases: [(&[&str], &str); 7] = [
            (&["kernel.gamma=-1"], "kernel.gamma"),
            (&["kernel.gama=1"], "kernel"),
            (&["parties.1.is_active=true"], "parties: exactly one"),
            (&["parties.1.data_path=missing.csv"], "parties[1].data_path"),
            (&["transport=tcp"], "parties[0].endpoint"),
            (&["algorithm=boost"], "algorithm"),
            (&["algorithm=forest", "forest.key_bits=64"], "forest.key_bits"),
        ];
        for (o, needle) in cases {
            let err = format!("{:#}", load(dir.path(), &v, o).unwrap_err());
            assert!(err.contains(needle), "{o:?}: {err}");
        }
    }
}
