//! Deterministic simulation of one server and its replicas.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use super::scenario::{ClientSpec, Scenario, Step};
use crate::delta::DeltaSet;
use crate::model::{Schema, SystemData};
use crate::oracle::{oracle_sync, reconstruct, SnapshotStore};
use crate::path::{select_relevant, Binding, EvalError};
use crate::replica::{ApplyWarning, Replica, ReplicaError};
use crate::store::{Store, StoreError};
use crate::timestamp::timestamp_sync;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    Timestamp,
    Oracle,
    /// Timestamp sync for the replica, shadowed and checked by the oracle.
    #[default]
    Both,
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "timestamp" => Ok(Mode::Timestamp),
            "oracle" => Ok(Mode::Oracle),
            "both" => Ok(Mode::Both),
            _ => Err(format!(
                "unknown mode '{s}' (expected timestamp, oracle or both)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DivergenceKind {
    /// Replica differs from the client's relevant server data.
    Replica,
    /// Oracle delta applied to the previous relevant data misses the current one.
    OracleReconstruction,
    /// Timestamp delta omits a change the oracle reports.
    UnderDelivery,
    /// A repeated sync with no commits in between delivered something.
    Idempotence,
    /// `assert-delta` expectation differs from the delivered delta.
    DeltaMismatch,
}

impl DivergenceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DivergenceKind::Replica => "replica",
            DivergenceKind::OracleReconstruction => "oracle-reconstruction",
            DivergenceKind::UnderDelivery => "under-delivery",
            DivergenceKind::Idempotence => "idempotence",
            DivergenceKind::DeltaMismatch => "delta-mismatch",
        }
    }
}

/// Differences found at one step. `missing` holds what was expected and
/// absent, `extra` what was present and not expected.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DivergenceReport {
    pub step: usize,
    pub client: String,
    pub kind: DivergenceKind,
    pub missing: Vec<String>,
    pub extra: Vec<String>,
    pub state_mismatches: Vec<String>,
}

impl DivergenceReport {
    fn new(step: usize, client: &str, kind: DivergenceKind) -> Self {
        Self {
            step,
            client: client.to_owned(),
            kind,
            missing: Vec::new(),
            extra: Vec::new(),
            state_mismatches: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.missing.is_empty() && self.extra.is_empty() && self.state_mismatches.is_empty()
    }
}

impl fmt::Display for DivergenceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "step {} client {}: {}",
            self.step,
            self.client,
            self.kind.as_str()
        )?;
        for m in &self.missing {
            writeln!(f, "  missing {m}")?;
        }
        for e in &self.extra {
            writeln!(f, "  extra {e}")?;
        }
        for s in &self.state_mismatches {
            writeln!(f, "  state {s}")?;
        }
        Ok(())
    }
}

/// Compares `actual` with `expected` element by element.
pub fn diff_data(
    expected: &SystemData,
    actual: &SystemData,
) -> (Vec<String>, Vec<String>, Vec<String>) {
    let obj = |d: &SystemData, id| format!("obj {id} {}", d.objects[id]);
    let mut missing: Vec<String> = Vec::new();
    let mut extra: Vec<String> = Vec::new();
    let mut states = Vec::new();
    for (id, class) in &expected.objects {
        match actual.class_of(id) {
            None => missing.push(obj(expected, id)),
            Some(c) if c != class => {
                missing.push(obj(expected, id));
                extra.push(obj(actual, id));
            }
            Some(_) => {
                let (want, got) = (expected.state(id).cloned(), actual.state(id).cloned());
                if want != got {
                    states.push(format!(
                        "{id}: expected {} got {}",
                        want.unwrap_or_default(),
                        got.unwrap_or_default()
                    ));
                }
            }
        }
    }
    extra.extend(
        actual
            .objects
            .keys()
            .filter(|id| !expected.contains(id))
            .map(|id| obj(actual, id)),
    );
    missing.extend(
        expected
            .links
            .difference(&actual.links)
            .map(|l| format!("link {l}")),
    );
    extra.extend(
        actual
            .links
            .difference(&expected.links)
            .map(|l| format!("link {l}")),
    );
    (missing, extra, states)
}

fn lines(text: &str) -> BTreeSet<&str> {
    text.lines().collect()
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("step {step}: transaction rejected: {source}")]
    Transaction { step: usize, source: StoreError },
    #[error("step {step}: client {client}: {source}")]
    Replica {
        step: usize,
        client: String,
        source: Box<ReplicaError>,
    },
    #[error("step {step}: {source}")]
    Eval { step: usize, source: EvalError },
    #[error("step {step}: unknown client '{client}'")]
    UnknownClient { step: usize, client: String },
}

/// A delta handed to a client.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeliveredDelta {
    pub step: usize,
    pub client: String,
    pub delta: DeltaSet,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RunOutput {
    /// Nonempty reports only.
    pub reports: Vec<DivergenceReport>,
    pub deltas: Vec<DeliveredDelta>,
    /// Tolerated oddities during delta application, by step and client.
    pub warnings: Vec<(usize, String, ApplyWarning)>,
}

impl RunOutput {
    pub fn converged(&self) -> bool {
        self.reports.is_empty()
    }
}

#[derive(Debug, Clone)]
struct Client {
    replica: Replica,
    last_delta: Option<DeltaSet>,
}

/// Server plus replicas, driven one step at a time.
#[derive(Debug, Clone)]
pub struct Simulation {
    store: Store,
    clients: BTreeMap<String, Client>,
    snapshots: SnapshotStore<String>,
    mode: Mode,
    step: usize,
    output: RunOutput,
}

impl Simulation {
    pub fn new(schema: Schema, clients: &[ClientSpec], mode: Mode) -> Self {
        let clients = clients
            .iter()
            .map(|c| {
                let replica = Replica::new(schema.clone(), c.root.clone(), c.exprs.clone());
                (
                    c.name.clone(),
                    Client {
                        replica,
                        last_delta: None,
                    },
                )
            })
            .collect();
        Self {
            store: Store::new(schema),
            clients,
            snapshots: SnapshotStore::new(),
            mode,
            step: 0,
            output: RunOutput::default(),
        }
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn replica(&self, client: &str) -> Option<&Replica> {
        self.clients.get(client).map(|c| &c.replica)
    }

    /// Index of the next step to run.
    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn output(&self) -> &RunOutput {
        &self.output
    }

    pub fn into_output(self) -> RunOutput {
        self.output
    }

    /// The client's relevant data on the server right now.
    pub fn relevant(&self, client: &str) -> Result<SystemData, EvalError> {
        let r = &self.clients[client].replica;
        relevant_of(self.store.schema(), self.store.data(), r)
    }

    fn report(&mut self, r: DivergenceReport) {
        if !r.is_empty() {
            self.output.reports.push(r);
        }
    }

    pub fn run(&mut self, step: &Step) -> Result<(), RunError> {
        let index = self.step;
        if let Some(c) = step.client().filter(|c| !self.clients.contains_key(*c)) {
            return Err(RunError::UnknownClient {
                step: index,
                client: c.to_owned(),
            });
        }
        let eval = |source| RunError::Eval {
            step: index,
            source,
        };
        match step {
            Step::Tx(ms) => {
                self.store
                    .apply(ms.iter().cloned())
                    .map_err(|source| RunError::Transaction {
                        step: index,
                        source,
                    })?;
            }
            Step::Push(name, m) => {
                let client = self.clients.get_mut(name).expect("checked above");
                client
                    .replica
                    .push_local_change(m.clone(), &mut self.store)
                    .map_err(|source| RunError::Replica {
                        step: index,
                        client: name.clone(),
                        source: Box::new(source),
                    })?;
            }
            Step::Sync(name) => match self.mode {
                Mode::Oracle => self.sync_oracle(name)?,
                Mode::Timestamp | Mode::Both => self.sync_timestamp(name)?,
            },
            Step::SyncOracle(name) => self.sync_oracle(name)?,
            Step::AssertConverged(name) => {
                let expected = self.relevant(name).map_err(eval)?;
                let (missing, extra, state_mismatches) =
                    diff_data(&expected, &self.clients[name].replica.data);
                self.report(DivergenceReport {
                    missing,
                    extra,
                    state_mismatches,
                    ..DivergenceReport::new(index, name, DivergenceKind::Replica)
                });
            }
            Step::AssertDelta(name, expected) => {
                let actual = self.clients[name]
                    .last_delta
                    .as_ref()
                    .map(DeltaSet::render)
                    .unwrap_or_default();
                let expected = expected.render();
                let (want, got) = (lines(&expected), lines(&actual));
                let mut r = DivergenceReport::new(index, name, DivergenceKind::DeltaMismatch);
                r.missing = want.difference(&got).map(|s| s.to_string()).collect();
                r.extra = got.difference(&want).map(|s| s.to_string()).collect();
                self.report(r);
            }
        }
        self.step += 1;
        Ok(())
    }

    fn deliver(&mut self, name: &str, delta: DeltaSet) -> Result<(), RunError> {
        let index = self.step;
        let client = self.clients.get_mut(name).expect("client exists");
        let warnings = client
            .replica
            .apply_delta(&delta)
            .map_err(|source| RunError::Replica {
                step: index,
                client: name.to_owned(),
                source: Box::new(source),
            })?;
        client.replica.gc_sweep().map_err(|source| RunError::Eval {
            step: index,
            source,
        })?;
        self.output
            .warnings
            .extend(warnings.into_iter().map(|w| (index, name.to_owned(), w)));
        client.last_delta = Some(delta.clone());
        self.output.deltas.push(DeliveredDelta {
            step: index,
            client: name.to_owned(),
            delta,
        });
        Ok(())
    }

    fn check_replica(&mut self, name: &str, expected: &SystemData) {
        let (missing, extra, state_mismatches) =
            diff_data(expected, &self.clients[name].replica.data);
        self.report(DivergenceReport {
            missing,
            extra,
            state_mismatches,
            ..DivergenceReport::new(self.step, name, DivergenceKind::Replica)
        });
    }

    /// Runs the oracle for `name`, recording the snapshot; in mode both it
    /// also checks the oracle's reconstruction property.
    fn shadow_oracle(&mut self, name: &str) -> Result<(DeltaSet, SystemData), RunError> {
        let index = self.step;
        let eval = |source| RunError::Eval {
            step: index,
            source,
        };
        let replica = &self.clients[name].replica;
        let schema = self.store.schema();
        let prev = self
            .snapshots
            .latest(&name.to_owned())
            .map(|(d, _)| d.clone())
            .unwrap_or_default();
        let delta = oracle_sync(
            &mut self.snapshots,
            name.to_owned(),
            &replica.root,
            self.store.view(),
            &replica.exprs,
        )
        .map_err(eval)?;
        let now = relevant_of(schema, self.store.data(), replica).map_err(eval)?;
        if self.mode == Mode::Both {
            let before = relevant_of(schema, &prev, replica).map_err(eval)?;
            let (missing, extra, state_mismatches) = diff_data(&now, &reconstruct(&before, &delta));
            let r = DivergenceReport {
                missing,
                extra,
                state_mismatches,
                ..DivergenceReport::new(index, name, DivergenceKind::OracleReconstruction)
            };
            self.report(r);
        }
        Ok((delta, now))
    }

    fn sync_oracle(&mut self, name: &str) -> Result<(), RunError> {
        let (delta, now) = self.shadow_oracle(name)?;
        self.deliver(name, delta)?;
        if self.mode == Mode::Both {
            self.check_replica(name, &now);
        }
        Ok(())
    }

    fn sync_timestamp(&mut self, name: &str) -> Result<(), RunError> {
        let index = self.step;
        let eval = |source| RunError::Eval {
            step: index,
            source,
        };
        let replica = &self.clients[name].replica;
        let delta =
            timestamp_sync(&replica.cursor, self.store.view(), &replica.exprs).map_err(eval)?;
        // Keeps the oracle's snapshot current in every mode.
        let (oracle, now) = self.shadow_oracle(name)?;
        if self.mode == Mode::Both {
            self.report(under_delivery(index, name, &oracle, &delta));
        }
        self.deliver(name, delta)?;
        if self.mode == Mode::Both {
            self.check_replica(name, &now);
            let replica = &self.clients[name].replica;
            let again =
                timestamp_sync(&replica.cursor, self.store.view(), &replica.exprs).map_err(eval)?;
            let mut r = DivergenceReport::new(index, name, DivergenceKind::Idempotence);
            if !again.is_empty() || again.ts_cs != replica.cursor.ts_ls {
                r.extra = again.render().lines().map(str::to_owned).collect();
            }
            self.report(r);
        }
        Ok(())
    }
}

fn relevant_of(schema: &Schema, data: &SystemData, r: &Replica) -> Result<SystemData, EvalError> {
    Ok(select_relevant(schema, data, &r.exprs, &Binding::user(r.root.clone()))?.data)
}

/// Oracle changes the timestamp delta fails to carry: oracle creates must be
/// timestamp creates, oracle updates must be timestamp creates or updates.
fn under_delivery(step: usize, client: &str, oracle: &DeltaSet, ts: &DeltaSet) -> DivergenceReport {
    let mut r = DivergenceReport::new(step, client, DivergenceKind::UnderDelivery);
    for id in oracle
        .crt_objects
        .keys()
        .filter(|id| !ts.crt_objects.contains_key(*id))
    {
        r.missing.push(format!("crt-obj {id}"));
    }
    for id in oracle
        .upd_objects
        .iter()
        .filter(|id| !ts.crt_objects.contains_key(*id) && !ts.upd_objects.contains(*id))
    {
        r.missing.push(format!("upd-obj {id}"));
    }
    for l in oracle.crt_links.difference(&ts.crt_links) {
        r.missing.push(format!("crt-link {l}"));
    }
    r
}

/// Runs every step of `s`. Divergences are data in the output; a step that
/// cannot be executed aborts the run.
pub fn run_scenario(s: &Scenario, mode: Mode) -> Result<RunOutput, RunError> {
    let mut sim = Simulation::new(s.schema.clone(), &s.clients, mode);
    for step in &s.steps {
        sim.run(step)?;
    }
    Ok(sim.into_output())
}

/// The server after every transaction and push of `s`, ignoring syncs and
/// assertions.
pub fn replay_server(s: &Scenario) -> Result<Store, RunError> {
    let mut store = Store::new(s.schema.clone());
    for (step, st) in s.steps.iter().enumerate() {
        let ms = match st {
            Step::Tx(ms) => ms.clone(),
            Step::Push(_, m) => vec![m.clone()],
            _ => continue,
        };
        store
            .apply(ms)
            .map_err(|source| RunError::Transaction { step, source })?;
    }
    Ok(store)
}

/// File name for the delta of `d` when dumped: `step-0005-A.delta`.
pub fn delta_file_name(d: &DeliveredDelta) -> String {
    format!("step-{:04}-{}.delta", d.step, d.client)
}
