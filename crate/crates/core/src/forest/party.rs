use std::collections::{BTreeMap, HashMap};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::{ChaCha20Rng, ChaCha8Rng};

use super::model::{read_records, write_records, SplitRecord, RECORDS_FILE};
use super::stats::{decrypt_stats, encrypted_stats, plain_stats, read_stats, sample_features, write_stats, FeatureStats};
use super::split::{find_best_split, PartyStats, SplitDecision};
use super::{cut_points, encrypt_seed, keygen_seed, subsample_seed};
use crate::data::to_zero_one;
use crate::error::{Error, Result};
use crate::he::{get_ciphertexts, max_scale_bits, put_ciphertexts, Ciphertext, KeyPair, PublicKey};
use crate::party::Party;
use crate::phase::{PhaseRegistry, RF_FIND, RF_FINALIZE, RF_SAMPLE, RF_SETUP, RF_SPLIT, RF_STATS, RF_STEP};
use crate::wire::{ids_to_floats, Body, Message};

/// Training and inference state of one party.
#[derive(Debug, Clone, Default)]
pub struct ForestPartyState {
    pub index: usize,
    pub quantiles: usize,
    pub min_leaf: usize,
    pub epsilon: f64,
    pub seed: u64,
    /// Active party only.
    pub keypair: Option<KeyPair>,
    /// `{0, 1}` labels, active party only.
    pub labels: Option<Vec<f64>>,
    /// Passive parties only.
    pub public: Option<PublicKey>,
    /// Encrypted labels by table row, passive parties only.
    pub encrypted_labels: Vec<Ciphertext>,
    /// The active party's own statistics, per `(tree, node)`, until the split is chosen.
    pub pending: HashMap<(u64, u64), Vec<FeatureStats<f64>>>,
    pub records: BTreeMap<u64, SplitRecord>,
}

pub(crate) fn register(registry: &mut PhaseRegistry<Party>) -> Result<()> {
    registry.register(RF_SETUP, setup)?;
    registry.register(RF_STATS, stats)?;
    registry.register(RF_SAMPLE, draw_sample)?;
    registry.register(RF_FIND, find)?;
    registry.register(RF_SPLIT, split)?;
    registry.register(RF_FINALIZE, finalize)?;
    registry.register(RF_STEP, step)?;
    Ok(())
}

fn state(party: &mut Party) -> Result<&mut ForestPartyState> {
    let name = party.name().to_owned();
    party
        .forest
        .as_mut()
        .ok_or_else(|| Error::Protocol(format!("{name} has not been set up for forest training")))
}

fn setup(party: &mut Party, req: &Message) -> Result<Body> {
    let b = &req.body;
    let mut st = ForestPartyState {
        index: b.index("party")?,
        quantiles: b.index("quantiles")?,
        min_leaf: b.index("min_leaf")?,
        epsilon: b.float("epsilon")?,
        seed: b.int("seed")? as u64,
        ..ForestPartyState::default()
    };
    let n = party.table().n_rows();
    let body = if b.contains("y") {
        let modulus = b.big_ints("n")?.first().cloned().ok_or_else(|| {
            Error::Protocol("setup carries no public modulus".into())
        })?;
        let enc = get_ciphertexts(b, "y", "y.exp")?;
        if enc.len() != n {
            return Err(Error::Protocol(format!(
                "{} encrypted labels for {n} samples",
                enc.len()
            )));
        }
        st.public = Some(PublicKey::from_modulus(modulus));
        st.encrypted_labels = enc;
        Body::new().with("N", n as i64)
    } else {
        let labels = to_zero_one(party.labels()?)?;
        let bits = u32::try_from(b.index("key_bits")?)
            .map_err(|_| Error::Config("key_bits out of range".into()))?;
        let kp = KeyPair::generate(bits, Some(keygen_seed(st.seed)), b.int("allow_insecure")? != 0)?;
        let pk = kp.public();
        let scale = max_scale_bits(pk.n(), 1.0);
        let mut rng = ChaCha20Rng::seed_from_u64(encrypt_seed(st.seed));
        let enc = labels
            .iter()
            .map(|&y| pk.encrypt_real(y, scale, &mut rng))
            .collect::<Result<Vec<_>, _>>()?;
        let mut body = Body::new()
            .with("N", n as i64)
            .with("n", vec![pk.n().clone()]);
        put_ciphertexts(&mut body, "y", "y.exp", &enc)?;
        st.labels = Some(labels);
        st.keypair = Some(kp);
        body
    };
    party.forest = Some(st);
    Ok(body)
}

fn node_key(b: &Body) -> Result<(u64, u64)> {
    Ok((b.index("tree")? as u64, b.index("node")? as u64))
}

fn stats(party: &mut Party, req: &Message) -> Result<Body> {
    let b = &req.body;
    let rows = party.rows_of(&b.ids("ids")?)?;
    let features = sample_features(party.table().n_features(), b.int("seed")? as u64);
    let key = node_key(b)?;
    let (table, st) = party.forest_parts()?;
    if let Some(labels) = &st.labels {
        let own = plain_stats(table, &rows, labels, &features, st.quantiles)?;
        let k = own.len();
        st.pending.insert(key, own);
        return Ok(Body::new().with("features", k as i64));
    }
    let pk = st
        .public
        .as_ref()
        .ok_or_else(|| Error::Protocol("no public key".into()))?;
    let enc = encrypted_stats(table, &rows, &st.encrypted_labels, pk, &features, st.quantiles)?;
    let mut body = Body::new();
    write_stats(&mut body, "", &enc)?;
    Ok(body)
}

fn draw_sample(party: &mut Party, req: &Message) -> Result<Body> {
    let tree = req.body.index("tree")?;
    let fraction = req.body.float("fraction")?;
    let ids = party.table().ids().to_vec();
    let st = state(party)?;
    let n = ids.len();
    let k = ((fraction * n as f64).round() as usize).clamp(1, n.max(1));
    let mut picked = sample(&mut ChaCha8Rng::seed_from_u64(subsample_seed(st.seed, tree)), n, k).into_vec();
    picked.sort_unstable();
    let chosen: Vec<u64> = picked.into_iter().map(|i| ids[i]).collect();
    Ok(Body::new().with("ids", ids_to_floats(&chosen)))
}

fn mean_label(labels: &[f64], rows: &[usize]) -> f64 {
    rows.iter().map(|&r| labels[r]).sum::<f64>() / rows.len().max(1) as f64
}

fn find(party: &mut Party, req: &Message) -> Result<Body> {
    let b = &req.body;
    let rows = party.rows_of(&b.ids("ids")?)?;
    let key = node_key(b)?;
    let st = state(party)?;
    let labels = st
        .labels
        .as_ref()
        .ok_or_else(|| Error::Protocol("only the active party selects splits".into()))?;
    let leaf = |value: f64| Body::new().with("leaf", 1i64).with("value", value);
    if b.int("force_leaf")? != 0 {
        st.pending.remove(&key);
        return Ok(leaf(mean_label(labels, &rows)));
    }
    let own = st
        .pending
        .remove(&key)
        .ok_or_else(|| Error::Protocol(format!("no statistics cached for node {key:?}")))?;
    let kp = st.keypair.as_ref().expect("active party holds the key");
    let mut all = vec![PartyStats {
        party: st.index,
        features: own,
    }];
    for p in b.ids("sources")? {
        let enc = read_stats(b, &format!("p{p}."))?;
        all.push(PartyStats {
            party: p as usize,
            features: decrypt_stats(kp, &enc)?,
        });
    }
    if all.iter().all(|s| s.features.is_empty()) {
        return Ok(leaf(mean_label(labels, &rows)));
    }
    Ok(match find_best_split(&all, st.min_leaf, st.epsilon)? {
        SplitDecision::Leaf { value } => leaf(value),
        SplitDecision::Split {
            party,
            feature,
            quantile,
            score,
            n_left,
            n_right,
        } => Body::new()
            .with("leaf", 0i64)
            .with("party", party as i64)
            .with("feature", feature as i64)
            .with("quantile", quantile as i64)
            .with("score", score)
            .with("n_left", n_left as i64)
            .with("n_right", n_right as i64),
    })
}

fn split(party: &mut Party, req: &Message) -> Result<Body> {
    let b = &req.body;
    let ids = b.ids("ids")?;
    let rows = party.rows_of(&ids)?;
    let feature = b.index("feature")?;
    let quantile = b.index("quantile")?;
    let record = b.index("record")? as u64;
    let node = b.index("node")?;
    let (table, st) = party.forest_parts()?;
    if feature >= table.n_features() {
        return Err(Error::Protocol(format!("no local feature {feature}")));
    }
    let values: Vec<f64> = rows.iter().map(|&r| table.value(r, feature)).collect();
    let cuts = cut_points(&values, st.quantiles);
    let threshold = *cuts
        .get(quantile)
        .ok_or_else(|| Error::Protocol(format!("quantile {quantile} out of {} cuts", cuts.len())))?;
    let (mut left, mut right) = (Vec::new(), Vec::new());
    for (&id, &x) in ids.iter().zip(&values) {
        if x <= threshold {
            left.push(id);
        } else {
            right.push(id);
        }
    }
    if left.is_empty() || right.is_empty() {
        return Err(Error::Protocol(format!(
            "split of node {node} leaves one side empty"
        )));
    }
    st.records.insert(
        record,
        SplitRecord {
            record,
            feature: feature as u32,
            threshold,
        },
    );
    Ok(Body::new()
        .with("left", ids_to_floats(&left))
        .with("right", ids_to_floats(&right)))
}

fn finalize(party: &mut Party, _req: &Message) -> Result<Body> {
    let dir = party.model_dir().map(|d| d.to_path_buf());
    let st = state(party)?;
    let records: Vec<SplitRecord> = st.records.values().copied().collect();
    let persisted = match dir {
        Some(dir) => {
            std::fs::create_dir_all(&dir)
                .map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
            write_records(&dir.join(RECORDS_FILE), &records)?;
            1
        }
        None => 0,
    };
    Ok(Body::new()
        .with("records", records.len() as i64)
        .with("persisted", persisted as i64))
}

fn load_records(party: &mut Party) -> Result<()> {
    if party.forest.is_some() {
        return Ok(());
    }
    let path = party.require_model_dir()?.join(RECORDS_FILE);
    let records = read_records(&path)?;
    party.forest = Some(ForestPartyState {
        records: records.into_iter().map(|r| (r.record, r)).collect(),
        ..ForestPartyState::default()
    });
    Ok(())
}

fn direction(party: &Party, record: u64, id: u64) -> Result<bool> {
    let st = party.forest.as_ref().expect("records loaded");
    let rec = st
        .records
        .get(&record)
        .ok_or_else(|| Error::Protocol(format!("{} holds no split record {record}", party.name())))?;
    let row = party.rows_of(&[id])?[0];
    Ok(party.table().value(row, rec.feature as usize) > rec.threshold)
}

/// Direction `0` is left (`x <= threshold`), `1` is right.
fn step(party: &mut Party, req: &Message) -> Result<Body> {
    load_records(party)?;
    let b = &req.body;
    if b.contains("records") {
        let records = b.ids("records")?;
        let ids = b.ids("ids")?;
        if records.len() != ids.len() {
            return Err(Error::Protocol(format!(
                "{} records for {} samples",
                records.len(),
                ids.len()
            )));
        }
        let dirs = records
            .iter()
            .zip(&ids)
            .map(|(&r, &id)| direction(party, r, id).map(|right| f64::from(u8::from(right))))
            .collect::<Result<Vec<_>>>()?;
        return Ok(Body::new().with("directions", dirs));
    }
    let right = direction(party, b.index("record")? as u64, b.index("id")? as u64)?;
    Ok(Body::new().with("direction", i64::from(right)))
}
