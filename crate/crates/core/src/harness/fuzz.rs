//! Random scenarios on the social-event schema, run in mode both.
//!
//! Each scenario is generated while it runs, so pushes can be drawn from what
//! the pushing replica actually holds. Iteration `i` of seed `s` uses ChaCha8
//! stream `i` of seed `s`, which makes every iteration reproducible on its own
//! and independent of how iterations are scheduled.

use std::collections::BTreeSet;
use std::path::{Path as FsPath, PathBuf};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::runner::{DivergenceReport, Mode, RunError, Simulation};
use super::scenario::{ClientSpec, Scenario, Step};
use crate::exec::{self, Execution};
use crate::model::{social_event_schema, Link, ObjectId, Schema, StateValue, SystemData};
use crate::path::PathExpr;
use crate::store::Mutation;

pub const FIXTURE_EXPRS: [&str; 2] = [
    "{user}.Contact.contactIdentity",
    "{user}.Participation.Event.Participation.Identity",
];

/// Fruitless draws after which generation stops mutating.
const MAX_STALLS: usize = 200;

const CLIENT_NAMES: [&str; 3] = ["A", "B", "C"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FuzzBounds {
    pub max_objects: usize,
    pub max_mutations: usize,
    /// Including the final sync every client gets.
    pub max_syncs_per_client: usize,
    pub max_clients: usize,
}

impl Default for FuzzBounds {
    fn default() -> Self {
        Self {
            max_objects: 30,
            max_mutations: 60,
            max_syncs_per_client: 4,
            max_clients: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FuzzConfig {
    pub seed: u64,
    pub iterations: usize,
    pub bounds: FuzzBounds,
    pub execution: Execution,
}

impl FuzzConfig {
    pub fn new(seed: u64, iterations: usize) -> Self {
        Self {
            seed,
            iterations,
            bounds: FuzzBounds::default(),
            execution: Execution::default(),
        }
    }
}

/// Outcome of one generated scenario.
#[derive(Debug, Clone)]
pub struct FuzzRun {
    pub iteration: usize,
    pub scenario: Scenario,
    pub reports: Vec<DivergenceReport>,
    /// Set when a step could not run; the generator should never cause one.
    pub error: Option<String>,
    pub syncs: usize,
}

impl FuzzRun {
    pub fn failed(&self) -> bool {
        !self.reports.is_empty() || self.error.is_some()
    }
}

#[derive(Debug, Clone)]
pub struct FuzzSummary {
    pub seed: u64,
    pub runs: Vec<FuzzRun>,
}

impl FuzzSummary {
    pub fn iterations(&self) -> usize {
        self.runs.len()
    }

    pub fn failures(&self) -> impl Iterator<Item = &FuzzRun> {
        self.runs.iter().filter(|r| r.failed())
    }

    pub fn failure_count(&self) -> usize {
        self.failures().count()
    }

    pub fn syncs(&self) -> usize {
        self.runs.iter().map(|r| r.syncs).sum()
    }

    /// Stable one-line summary.
    pub fn line(&self) -> String {
        let reports: usize = self.runs.iter().map(|r| r.reports.len()).sum();
        format!(
            "seed {} iterations {} syncs {} failures {} reports {}",
            self.seed,
            self.iterations(),
            self.syncs(),
            self.failure_count(),
            reports
        )
    }

    /// Writes each failing scenario as `fail-<seed>-<iteration>.scn` in `dir`.
    pub fn write_failures(&self, dir: &FsPath) -> std::io::Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for run in self.failures() {
            let path = dir.join(format!("fail-{}-{:04}.scn", self.seed, run.iteration));
            let mut text = format!("# fuzz seed {} iteration {}\n", self.seed, run.iteration);
            for r in &run.reports {
                for line in r.to_string().lines() {
                    text.push_str(&format!("# {line}\n"));
                }
            }
            if let Some(e) = &run.error {
                text.push_str(&format!("# error: {e}\n"));
            }
            text.push_str(&run.scenario.render());
            std::fs::write(&path, text)?;
            written.push(path);
        }
        Ok(written)
    }
}

pub fn fuzz(config: &FuzzConfig) -> FuzzSummary {
    let runs = exec::map_range(config.execution, config.iterations, |i| {
        fuzz_one(config.seed, i, &config.bounds)
    });
    FuzzSummary {
        seed: config.seed,
        runs,
    }
}

pub fn fuzz_sequential(seed: u64, iterations: usize, bounds: FuzzBounds) -> FuzzSummary {
    fuzz(&FuzzConfig {
        seed,
        iterations,
        bounds,
        execution: Execution::Sequential,
    })
}

pub fn fixture_exprs() -> Vec<PathExpr> {
    FIXTURE_EXPRS
        .iter()
        .map(|e| PathExpr::parse(e).expect("fixture expression"))
        .collect()
}

fn rng_for(seed: u64, iteration: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(iteration as u64);
    rng
}

/// Generates and runs iteration `iteration` of `seed`.
pub fn fuzz_one(seed: u64, iteration: usize, bounds: &FuzzBounds) -> FuzzRun {
    let mut g = Generator {
        rng: rng_for(seed, iteration),
        schema: social_event_schema(),
        bounds: *bounds,
        mutations: 0,
        objects: 0,
        next_id: 1,
        roots: BTreeSet::new(),
    };
    let n_clients = g
        .rng
        .random_range(1..=bounds.max_clients.clamp(1, CLIENT_NAMES.len()));
    // Vary scenario size; small ones sync more often relative to their changes.
    g.bounds.max_mutations = g
        .rng
        .random_range(bounds.max_mutations / 2..=bounds.max_mutations);
    let bounds = g.bounds;
    let clients: Vec<ClientSpec> = (0..n_clients)
        .map(|i| ClientSpec {
            name: CLIENT_NAMES[i].to_owned(),
            root: ObjectId::from(format!("I{}", i + 1)),
            exprs: fixture_exprs(),
        })
        .collect();
    g.next_id = n_clients + 1;
    g.roots = clients.iter().map(|c| c.root.clone()).collect();

    let mut sim = Simulation::new(g.schema.clone(), &clients, Mode::Both);
    let mut steps = Vec::new();
    let mut syncs_left = vec![bounds.max_syncs_per_client; n_clients];
    let mut error = None;
    let run = |sim: &mut Simulation, steps: &mut Vec<Step>, step: Step| -> Result<(), RunError> {
        let r = sim.run(&step);
        steps.push(step);
        r
    };

    let outcome = (|| -> Result<(), RunError> {
        let roots: Vec<Mutation> = clients
            .iter()
            .take(bounds.max_mutations.min(bounds.max_objects))
            .map(|c| Mutation::CreateObject {
                id: c.root.clone(),
                class: "Identity".into(),
                state: g.state(),
            })
            .collect();
        if !roots.is_empty() {
            g.mutations += roots.len();
            g.objects += roots.len();
            run(&mut sim, &mut steps, Step::Tx(roots))?;
        }
        let mut stalls = 0;
        loop {
            let can_mutate = g.mutations < bounds.max_mutations && stalls < MAX_STALLS;
            let can_sync = syncs_left.iter().any(|&n| n > 1);
            if !can_mutate && !can_sync {
                break;
            }
            let roll = g.rng.random_range(0..100);
            if can_sync && (roll < 25 || !can_mutate) {
                let eligible: Vec<usize> = (0..n_clients).filter(|&i| syncs_left[i] > 1).collect();
                let i = *eligible.choose(&mut g.rng).expect("some client can sync");
                syncs_left[i] -= 1;
                run(&mut sim, &mut steps, Step::Sync(clients[i].name.clone()))?;
                if !can_mutate {
                    break;
                }
            } else if can_mutate && roll < 50 {
                let i = g.rng.random_range(0..n_clients);
                let replica = &sim.replica(&clients[i].name).expect("client").data;
                if let Some(m) = g.single(replica, sim.store().data()) {
                    g.mutations += 1;
                    run(&mut sim, &mut steps, Step::Push(clients[i].name.clone(), m))?;
                } else {
                    stalls += 1;
                }
            } else if can_mutate {
                let ms = g.transaction(sim.store().data());
                if !ms.is_empty() {
                    g.mutations += ms.len();
                    run(&mut sim, &mut steps, Step::Tx(ms))?;
                } else {
                    stalls += 1;
                }
            }
        }
        for c in &clients {
            run(&mut sim, &mut steps, Step::Sync(c.name.clone()))?;
        }
        Ok(())
    })();
    if let Err(e) = outcome {
        error = Some(e.to_string());
    }
    let syncs = steps.iter().filter(|s| matches!(s, Step::Sync(_))).count();
    FuzzRun {
        iteration,
        scenario: Scenario {
            schema: g.schema.clone(),
            clients,
            steps,
        },
        reports: sim.into_output().reports,
        error,
        syncs,
    }
}

/// Objects and links present in both.
fn intersect(a: &SystemData, b: &SystemData) -> SystemData {
    let keep: BTreeSet<ObjectId> = a
        .objects
        .keys()
        .filter(|id| b.contains(id))
        .cloned()
        .collect();
    let links = a.links.intersection(&b.links).cloned();
    b.restrict(&keep, links)
}

struct Generator {
    rng: ChaCha8Rng,
    schema: Schema,
    bounds: FuzzBounds,
    mutations: usize,
    objects: usize,
    next_id: usize,
    roots: BTreeSet<ObjectId>,
}

/// What the transaction built so far has touched.
#[derive(Default)]
struct TxScope {
    created: BTreeSet<ObjectId>,
    deleted: BTreeSet<ObjectId>,
    links: BTreeSet<Link>,
}

const CLASSES: [(&str, &str); 4] = [
    ("Identity", "I"),
    ("Contact", "C"),
    ("Participation", "P"),
    ("Event", "E"),
];

impl Generator {
    fn state(&mut self) -> StateValue {
        let names = ["ann", "bo", "cy", "dee", "eli"];
        match self.rng.random_range(0..3) {
            0 => StateValue::new(),
            1 => StateValue::new().with("name", *names.choose(&mut self.rng).expect("names")),
            _ => StateValue::new().with("n", self.rng.random_range(0..100i64)),
        }
    }

    fn budget(&self, used: usize) -> usize {
        self.bounds
            .max_mutations
            .saturating_sub(self.mutations + used)
    }

    fn fresh_id(&mut self, prefix: &str) -> ObjectId {
        let id = ObjectId::from(format!("{prefix}{}", self.next_id));
        self.next_id += 1;
        id
    }

    fn of_class<'d>(
        &self,
        data: &'d SystemData,
        live: &BTreeSet<ObjectId>,
        class: &str,
    ) -> Vec<&'d ObjectId> {
        data.objects
            .iter()
            .filter(|(id, c)| c.as_str() == class && live.contains(*id))
            .map(|(id, _)| id)
            .collect()
    }

    /// A random link of association `assoc` between objects in `live`,
    /// absent from `data` and untouched by `scope`.
    fn random_link(
        &mut self,
        data: &SystemData,
        live: &BTreeSet<ObjectId>,
        scope: &TxScope,
        assoc: &str,
    ) -> Option<Link> {
        let def = self
            .schema
            .association(&assoc.into())
            .expect("fixture association")
            .clone();
        let mut all = data.clone();
        for id in &scope.created {
            all.objects
                .entry(id.clone())
                .or_insert_with(|| class_of_id(id).into());
        }
        let srcs = self.of_class(&all, live, def.class_a.as_str());
        let dsts = self.of_class(&all, live, def.class_b.as_str());
        let candidates: Vec<Link> = srcs
            .iter()
            .flat_map(|s| {
                dsts.iter()
                    .map(|d| Link::new((*s).clone(), def.name.clone(), (*d).clone()))
            })
            .filter(|l| !data.links.contains(l) && !scope.links.contains(l))
            .collect();
        candidates.choose(&mut self.rng).cloned()
    }

    /// One mutation drawn with the configured mix, valid against `data` plus
    /// whatever `scope` already staged.
    fn mutation(&mut self, data: &SystemData, scope: &mut TxScope, used: usize) -> Vec<Mutation> {
        let mut live: BTreeSet<ObjectId> = data
            .objects
            .keys()
            .filter(|id| !scope.deleted.contains(*id))
            .cloned()
            .collect();
        live.extend(scope.created.iter().cloned());
        let roll = self.rng.random_range(0..100);
        if roll < 35 {
            if self.objects >= self.bounds.max_objects {
                return Vec::new();
            }
            let (class, prefix) = *CLASSES.choose(&mut self.rng).expect("classes");
            let id = self.fresh_id(prefix);
            let state = self.state();
            self.objects += 1;
            scope.created.insert(id.clone());
            live.insert(id.clone());
            let mut out = vec![Mutation::CreateObject {
                id: id.clone(),
                class: class.into(),
                state,
            }];
            let wanted: &[&str] = match class {
                "Contact" => &["Ownership", "Reference"],
                "Participation" => &["Attendance", "Invitation"],
                "Identity" => &["Attendance", "Reference"],
                _ => &["Invitation"],
            };
            for assoc in wanted {
                if out.len() >= self.budget(used) || self.rng.random_bool(0.25) {
                    continue;
                }
                if let Some(l) = self.link_touching(data, &live, scope, assoc, &id) {
                    scope.links.insert(l.clone());
                    out.push(Mutation::CreateLink(l));
                }
            }
            out
        } else if roll < 60 {
            let assoc = ["Ownership", "Reference", "Attendance", "Invitation"]
                .choose(&mut self.rng)
                .copied()
                .expect("assocs");
            match self.random_link(data, &live, scope, assoc) {
                Some(l) => {
                    scope.links.insert(l.clone());
                    vec![Mutation::CreateLink(l)]
                }
                None => Vec::new(),
            }
        } else if roll < 80 {
            let ids: Vec<ObjectId> = live.iter().cloned().collect();
            match ids.choose(&mut self.rng) {
                Some(id) => vec![Mutation::UpdateState {
                    id: id.clone(),
                    state: self.state(),
                }],
                None => Vec::new(),
            }
        } else if roll < 90 {
            let links: Vec<&Link> = data
                .links
                .iter()
                .filter(|l| {
                    !scope.links.contains(*l)
                        && !scope.deleted.contains(&l.src)
                        && !scope.deleted.contains(&l.dst)
                })
                .collect();
            match links.choose(&mut self.rng) {
                Some(l) => {
                    scope.links.insert((*l).clone());
                    vec![Mutation::DeleteLink((*l).clone())]
                }
                None => Vec::new(),
            }
        } else {
            let ids: Vec<&ObjectId> = data
                .objects
                .keys()
                .filter(|id| {
                    !self.roots.contains(*id)
                        && !scope.created.contains(*id)
                        && !scope.deleted.contains(*id)
                })
                .collect();
            match ids.choose(&mut self.rng).map(|id| (*id).clone()) {
                Some(id) => {
                    scope.deleted.insert(id.clone());
                    vec![Mutation::DeleteObject { id }]
                }
                None => Vec::new(),
            }
        }
    }

    fn link_touching(
        &mut self,
        data: &SystemData,
        live: &BTreeSet<ObjectId>,
        scope: &TxScope,
        assoc: &str,
        id: &ObjectId,
    ) -> Option<Link> {
        let def = self
            .schema
            .association(&assoc.into())
            .expect("fixture association")
            .clone();
        let class = class_of_id(id);
        let mut all = data.clone();
        for c in &scope.created {
            all.objects
                .entry(c.clone())
                .or_insert_with(|| class_of_id(c).into());
        }
        let mut candidates = Vec::new();
        if def.class_a.as_str() == class {
            for d in self.of_class(&all, live, def.class_b.as_str()) {
                candidates.push(Link::new(id.clone(), def.name.clone(), d.clone()));
            }
        }
        if def.class_b.as_str() == class {
            for s in self.of_class(&all, live, def.class_a.as_str()) {
                candidates.push(Link::new(s.clone(), def.name.clone(), id.clone()));
            }
        }
        candidates.retain(|l| !scope.links.contains(l) && !data.links.contains(l));
        candidates.choose(&mut self.rng).cloned()
    }

    /// A transaction of one to four drawn mutations against the server data.
    fn transaction(&mut self, data: &SystemData) -> Vec<Mutation> {
        let mut scope = TxScope::default();
        let mut out = Vec::new();
        let draws = self.rng.random_range(1..=4);
        for _ in 0..draws {
            if self.budget(out.len()) == 0 {
                break;
            }
            let ms = self.mutation(data, &mut scope, out.len());
            out.extend(ms);
        }
        out.truncate(self.bounds.max_mutations.saturating_sub(self.mutations));
        out
    }

    /// One mutation for a push, against the replica's confirmed view. Links
    /// only one side has are off limits: creating them fails on that side.
    fn single(&mut self, replica: &SystemData, server: &SystemData) -> Option<Mutation> {
        let view = intersect(replica, server);
        let mut scope = TxScope {
            links: replica
                .links
                .symmetric_difference(&server.links)
                .cloned()
                .collect(),
            ..TxScope::default()
        };
        self.mutation(&view, &mut scope, 0).into_iter().next()
    }
}

fn class_of_id(id: &ObjectId) -> &'static str {
    let prefix = &id.as_str()[..1];
    CLASSES
        .iter()
        .find(|(_, p)| *p == prefix)
        .map(|(c, _)| *c)
        .expect("generated ids carry a class prefix")
}
