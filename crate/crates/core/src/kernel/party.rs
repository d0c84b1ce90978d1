use nalgebra::{DMatrix, DVector};

use super::{
    local_solve, party_seed, read_weights, sample_rff, write_weights, KernelConfig, RffMap,
    WEIGHTS_FILE,
};
use crate::data::to_pm1;
use crate::error::{Error, Result};
use crate::party::Party;
use crate::phase::{PhaseRegistry, KERNEL_FINALIZE, KERNEL_PREDICT, KERNEL_SETUP, KERNEL_UPDATE};
use crate::wire::{Body, Message};

#[derive(Debug, Clone)]
pub struct KernelPartyState {
    pub index: usize,
    pub config: KernelConfig,
    /// `None` for a party without feature columns.
    pub map: Option<RffMap>,
    /// `N x D` transformed design (`N x 0` without features).
    pub phi: DMatrix<f64>,
    pub weights: DVector<f64>,
    /// Last value reported to the coordinator.
    pub contribution: DVector<f64>,
    /// `{-1, +1}` labels on the active party.
    pub labels: Option<DVector<f64>>,
}

impl KernelPartyState {
    /// `phi w`, minus the labels on the active party.
    pub fn recompute_contribution(&self) -> DVector<f64> {
        let mut u = &self.phi * &self.weights;
        if let Some(y) = &self.labels {
            u -= y;
        }
        u
    }
}

pub(crate) fn register(registry: &mut PhaseRegistry<Party>) -> Result<()> {
    registry.register(KERNEL_SETUP, setup)?;
    registry.register(KERNEL_UPDATE, update)?;
    registry.register(KERNEL_FINALIZE, finalize)?;
    registry.register(KERNEL_PREDICT, predict)?;
    Ok(())
}

fn feature_map(party: &Party, config: &KernelConfig, index: usize) -> Result<Option<RffMap>> {
    let d = party.table().n_features();
    if d == 0 {
        return Ok(None);
    }
    sample_rff(
        d,
        config.features,
        config.gamma,
        party_seed(config.seed, index),
        config.normalization,
    )
    .map(Some)
}

fn setup(party: &mut Party, req: &Message) -> Result<Body> {
    let config = KernelConfig::read_from(&req.body)?;
    config.validate()?;
    let index = req.body.index("party")?;
    let map = feature_map(party, &config, index)?;
    let table = party.table();
    let n = table.n_rows();
    let phi = match &map {
        Some(m) => m.apply(&table.to_matrix())?,
        None => DMatrix::zeros(n, 0),
    };
    let labels = match table.labels() {
        Some(y) => Some(DVector::from_vec(to_pm1(y)?)),
        None => None,
    };
    let mut state = KernelPartyState {
        index,
        config,
        weights: DVector::zeros(phi.ncols()),
        map,
        phi,
        contribution: DVector::zeros(n),
        labels,
    };
    state.contribution = state.recompute_contribution();
    let body = Body::new()
        .with("N", n as i64)
        .with("active", i64::from(state.labels.is_some()))
        .with("u", state.contribution.as_slice().to_vec());
    party.kernel = Some(state);
    Ok(body)
}

fn state_mut(party: &mut Party) -> Result<&mut KernelPartyState> {
    let name = party.name().to_owned();
    party
        .kernel
        .as_mut()
        .ok_or_else(|| Error::Protocol(format!("{name} received a kernel update before setup")))
}

fn update(party: &mut Party, req: &Message) -> Result<Body> {
    let state = state_mut(party)?;
    let v = req.body.float_vec("v")?;
    if v.len() != state.phi.nrows() {
        return Err(Error::Protocol(format!(
            "residual has length {}, party has {} samples",
            v.len(),
            state.phi.nrows()
        )));
    }
    if req.body.int("selected")? == 0 {
        return Ok(Body::new().with("unchanged", 1i64));
    }
    // Everything in v except this party's own feature term.
    let s = DVector::from_column_slice(v) - &state.phi * &state.weights;
    state.weights = local_solve(&state.phi, &s, state.config.lambda)?;
    state.contribution = state.recompute_contribution();
    Ok(Body::new().with("u", state.contribution.as_slice().to_vec()))
}

fn finalize(party: &mut Party, _req: &Message) -> Result<Body> {
    let weights = party
        .kernel
        .as_ref()
        .ok_or_else(|| Error::Protocol("kernel finalize before setup".into()))?
        .weights
        .as_slice()
        .to_vec();
    let persisted = match party.model_dir() {
        Some(dir) => {
            std::fs::create_dir_all(dir)
                .map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
            write_weights(&dir.join(WEIGHTS_FILE), &weights)?;
            1
        }
        None => 0,
    };
    Ok(Body::new()
        .with("weights", weights.len() as i64)
        .with("persisted", persisted as i64))
}

fn predict(party: &mut Party, req: &Message) -> Result<Body> {
    let config = KernelConfig::read_from(&req.body)?;
    let index = req.body.index("party")?;
    let ids = req.body.ids("ids")?;
    let rows = party.rows_of(&ids)?;
    let d = party.table().n_features();
    if d == 0 {
        return Ok(Body::new().with("scores", vec![0.0; ids.len()]));
    }
    let weights = match &party.kernel {
        Some(state) => state.weights.as_slice().to_vec(),
        None => read_weights(&party.require_model_dir()?.join(WEIGHTS_FILE))?,
    };
    if weights.len() != config.features {
        return Err(Error::Config(format!(
            "stored model has {} weights, request expects D = {}",
            weights.len(),
            config.features
        )));
    }
    let reuse = party
        .kernel
        .as_ref()
        .filter(|s| {
            s.index == index
                && s.config.features == config.features
                && s.config.gamma == config.gamma
                && s.config.seed == config.seed
                && s.config.normalization == config.normalization
        })
        .and_then(|s| s.map.clone());
    let map = match reuse {
        Some(m) => m,
        None => feature_map(party, &config, index)?.expect("party has features"),
    };
    let phi = map.apply(&party.table().rows_matrix(&rows))?;
    let scores = phi * DVector::from_vec(weights);
    Ok(Body::new().with("scores", scores.as_slice().to_vec()))
}
