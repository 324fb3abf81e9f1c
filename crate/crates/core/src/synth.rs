//! Synthetic stand-in for a country-scale credit bureau: a static family
//! network over people, a monthly employment/ownership network over people
//! and companies, per-period financial attributes, a benchmark score and
//! delinquency histories.
//!
//! Network influence enters through a latent social factor
//! `s = (1 − α)·ε + α · mean_nbr(s)`, solved by fixed-point iteration and
//! scaled to unit variance, so default risk is correlated along edges with
//! a strength set by `beta`: `risk = σ(c + own + β·s + noise)`.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{borrower_attribute_names, GraphBuilder, NodeAttributeTable, TemporalNetwork, BENCH_SCORE};
use crate::linalg::sigmoid;
use crate::n2v::{mix_seed, AliasTable};
use crate::pipeline::{LabelTable, TargetSpec};

pub const FAMILY_NETWORK: &str = "FamilyNet";
pub const EOW_NETWORK: &str = "EOWNet";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_people: usize,
    pub n_companies: usize,
    pub periods: i64,
    /// Weight of the network factor in the default logit.
    pub beta: f64,
    /// Weight of the entity's private risk factor in the default logit.
    pub own_weight: f64,
    /// Share of the population entering the system per period after the first.
    pub entry_rate: f64,
    /// Share of the population already in the system at period 1.
    pub initial_fraction: f64,
    /// Benchmark-score noise (logit scale) for a new entrant.
    pub benchmark_noise: f64,
    /// Attribute noise for a new entrant.
    pub attribute_noise: f64,
    /// Mean 12-period default probability the intercept is calibrated to.
    pub target_prevalence: f64,
    /// Neighbor weight `α` of the social factor, in [0, 1).
    pub social_damping: f64,
    pub employment_rate: f64,
    /// Per-period chance an employee changes company.
    pub churn_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_people: 20_000,
            n_companies: 2_000,
            periods: 24,
            beta: 1.0,
            own_weight: 0.7,
            entry_rate: 0.065,
            initial_fraction: 0.2,
            benchmark_noise: 2.5,
            attribute_noise: 3.0,
            target_prevalence: 0.08,
            social_damping: 0.85,
            employment_rate: 0.6,
            churn_rate: 0.02,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let target = TargetSpec::default();
        if self.n_people < 10 || self.n_companies < 10 {
            return Err(Error::Config("n_people and n_companies must be >= 10".into()));
        }
        if self.periods < target.horizon + 1 {
            return Err(Error::Config(format!("periods must be >= {}", target.horizon + 1)));
        }
        if !(self.beta >= 0.0) || !(self.own_weight >= 0.0) {
            return Err(Error::Config("beta and own_weight must be >= 0".into()));
        }
        let unit = |v: f64| v > 0.0 && v < 1.0;
        if !unit(self.entry_rate) || !unit(self.initial_fraction) || !unit(self.employment_rate) {
            return Err(Error::Config("entry_rate, initial_fraction and employment_rate must be in (0,1)".into()));
        }
        if !(0.0..1.0).contains(&self.social_damping) || !(0.0..1.0).contains(&self.churn_rate) {
            return Err(Error::Config("social_damping and churn_rate must be in [0,1)".into()));
        }
        if !(0.03..=0.15).contains(&self.target_prevalence) {
            return Err(Error::Config("target_prevalence must be in [0.03, 0.15]".into()));
        }
        if !(self.benchmark_noise >= 0.0 && self.attribute_noise >= 0.0) {
            return Err(Error::Config("noise levels must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentRecord {
    pub entity: String,
    pub own: f64,
    pub social: f64,
    pub logit: f64,
    /// 12-period default probability.
    pub risk: f64,
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub family: TemporalNetwork,
    pub eow: TemporalNetwork,
    pub attrs: NodeAttributeTable,
    pub labels: LabelTable,
    pub latent: Vec<LatentRecord>,
    /// Default rate of the application sample the generator was checked on.
    pub prevalence: f64,
    pub fixed_point_iterations: usize,
    pub fixed_point_change: f64,
}

impl SynthData {
    /// Writes the edge lists, attribute table, labels and latent risk.
    pub fn write_to_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.family.save_edge_list(&dir.join("family_edges.csv"))?;
        self.eow.save_edge_list(&dir.join("eow_edges.csv"))?;
        self.attrs.save_csv(&dir.join("attributes.csv"))?;
        self.labels.save_csv(&dir.join("labels.csv"))?;
        let path = dir.join("latent.csv");
        let mut w = csv::Writer::from_path(&path)?;
        for r in &self.latent {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        Ok(())
    }
}

/// Loading of a person's seed factor on the household factor.
const HOUSEHOLD_SHARE: f64 = 0.9;

const STREAM_FAMILY: u64 = 1;
const STREAM_EOW: u64 = 2;
const STREAM_LATENT: u64 = 3;
const STREAM_ENTITY: u64 = 4;

fn rng_for(cfg: &SynthConfig, attempt: u64, stream: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_seed(&[cfg.seed, attempt, stream, index]))
}

fn person_id(i: usize) -> String {
    format!("P{i:06}")
}

fn company_id(i: usize) -> String {
    format!("C{i:05}")
}

type Adjacency = Vec<Vec<(usize, f64)>>;

fn add_undirected(adj: &mut Adjacency, a: usize, b: usize, w: f64) {
    adj[a].push((b, w));
    adj[b].push((a, w));
}

/// Household blocks: a couple, children tied to both parents, siblings tied
/// to each other, and one tie from every household to another one.
fn family_edges(cfg: &SynthConfig, attempt: u64) -> (Vec<usize>, Vec<(usize, usize, f64)>) {
    let mut rng = rng_for(cfg, attempt, STREAM_FAMILY, 0);
    let sizes = AliasTable::new(&[0.25, 0.30, 0.20, 0.15, 0.10]);
    let mut households: Vec<Vec<usize>> = Vec::new();
    let mut next = 0;
    while next < cfg.n_people {
        let size = (sizes.sample(&mut rng) + 1).min(cfg.n_people - next);
        households.push((next..next + size).collect());
        next += size;
    }
    let mut edges = Vec::new();
    for h in &households {
        if h.len() >= 2 {
            edges.push((h[0], h[1], 1.0));
        }
        for (k, &child) in h.iter().enumerate().skip(2) {
            edges.push((h[0], child, 1.0));
            edges.push((h[1], child, 1.0));
            for &sib in &h[2..k] {
                edges.push((sib, child, 0.5));
            }
        }
    }
    if households.len() > 1 {
        for (i, h) in households.iter().enumerate() {
            let mut j = rng.random_range(0..households.len() - 1);
            if j >= i {
                j += 1;
            }
            let other = &households[j];
            let a = h[rng.random_range(0..h.len())];
            let b = other[rng.random_range(0..other.len())];
            edges.push((a, b, 0.5));
        }
    }
    let mut household_of = vec![0; cfg.n_people];
    for (i, h) in households.iter().enumerate() {
        for &p in h {
            household_of[p] = i;
        }
    }
    (household_of, edges)
}

/// Company edges per period; entity indices put companies after people.
fn eow_edges(cfg: &SynthConfig, attempt: u64) -> Vec<Vec<(usize, usize, f64)>> {
    let mut rng = rng_for(cfg, attempt, STREAM_EOW, 0);
    let np = cfg.n_people;
    let nc = cfg.n_companies;
    let company = |c: usize| np + c;
    let appeal: Vec<f64> = (0..nc)
        .map(|_| (1.0 - rng.random::<f64>()).powf(-1.0 / 1.5))
        .collect();
    let pick = AliasTable::new(&appeal);
    let mut fixed = Vec::new();
    for c in 0..nc {
        fixed.push((rng.random_range(0..np), company(c), 2.0));
        if rng.random::<f64>() < 0.2 {
            fixed.push((rng.random_range(0..np), company(c), 2.0));
        }
        if rng.random::<f64>() < 0.1 {
            let mut other = rng.random_range(0..nc - 1);
            if other >= c {
                other += 1;
            }
            fixed.push((company(c), company(other), 1.0));
        }
    }
    let mut employer: Vec<Option<usize>> = (0..np)
        .map(|_| (rng.random::<f64>() < cfg.employment_rate).then(|| pick.sample(&mut rng)))
        .collect();
    let mut out = Vec::with_capacity(cfg.periods as usize);
    for p in 1..=cfg.periods {
        if p > 1 {
            for e in employer.iter_mut().flatten() {
                if rng.random::<f64>() < cfg.churn_rate {
                    *e = pick.sample(&mut rng);
                }
            }
        }
        let mut edges = fixed.clone();
        for (person, e) in employer.iter().enumerate() {
            if let Some(c) = e {
                edges.push((person, company(*c), 1.0));
            }
        }
        out.push(edges);
    }
    out
}

/// Solves `s = (1 − α)·ε + α · weighted_mean_nbr(s)`; returns iterations
/// used and the final sup-norm change.
fn social_factor(adj: &Adjacency, eps: &[f64], alpha: f64) -> (Vec<f64>, usize, f64) {
    let mut s = eps.to_vec();
    let mut change = f64::INFINITY;
    let mut iterations = 0;
    while iterations < 500 && change >= 1e-10 {
        let next: Vec<f64> = (0..s.len())
            .map(|v| {
                let wsum: f64 = adj[v].iter().map(|&(_, w)| w).sum();
                if wsum > 0.0 {
                    (1.0 - alpha) * eps[v] + alpha * adj[v].iter().map(|&(u, w)| w * s[u]).sum::<f64>() / wsum
                } else {
                    eps[v]
                }
            })
            .collect();
        change = next.iter().zip(&s).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        s = next;
        iterations += 1;
    }
    (s, iterations, change)
}

/// Intercept `c` with mean `σ(c + rest)` equal to `target`.
fn calibrate_intercept(rest: &[f64], target: f64) -> f64 {
    let (mut lo, mut hi) = (-20.0, 10.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        let mean = rest.iter().map(|r| sigmoid(mid + r)).sum::<f64>() / rest.len() as f64;
        if mean < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Per-entity simulated history.
struct History {
    entered: i64,
    /// dpd for periods `entered..=periods` (index `p - entered`)
    dpd: Vec<f64>,
}

impl History {
    fn at(&self, p: i64) -> f64 {
        if p < self.entered {
            0.0
        } else {
            self.dpd[(p - self.entered) as usize]
        }
    }
}

fn simulate_history(cfg: &SynthConfig, risk: f64, rng: &mut ChaCha8Rng) -> History {
    let span = ((1.0 - cfg.initial_fraction) / cfg.entry_rate).round().max(1.0) as i64;
    let entered = if rng.random::<f64>() < cfg.initial_fraction {
        1 - rng.random_range(0..12)
    } else {
        2 + rng.random_range(0..span)
    };
    let hazard = 1.0 - (1.0 - risk).powf(1.0 / 12.0);
    let minor = (2.0 * hazard + 0.005).min(0.3);
    let len = (cfg.periods - entered + 1).max(0) as usize;
    let mut dpd = vec![0.0; len];
    let mut default_at: Option<usize> = None;
    for (t, d) in dpd.iter_mut().enumerate() {
        if rng.random::<f64>() < hazard {
            default_at = Some(t);
            break;
        }
        if rng.random::<f64>() < minor {
            *d = 30.0;
        }
    }
    if let Some(td) = default_at {
        if td >= 1 {
            dpd[td - 1] = 60.0;
        }
        if td >= 2 {
            dpd[td - 2] = 30.0;
        }
        for (k, d) in dpd.iter_mut().enumerate().skip(td) {
            *d = (90.0 + 30.0 * (k - td) as f64).min(180.0);
        }
    }
    History { entered, dpd }
}

struct EntityTraits {
    eta: f64,
    xi: f64,
    mortgage: f64,
    age: f64,
}

fn attribute_row(
    cfg: &SynthConfig,
    h: &History,
    p: i64,
    logit: f64,
    latent: f64,
    traits: &EntityTraits,
    rng: &mut ChaCha8Rng,
) -> [f64; 14] {
    let n = Normal::new(0.0, 1.0).expect("unit normal");
    let mut z = || n.sample(rng);
    let tau = (p - h.entered) as f64;
    let decay = 1.0 / (1.0 + tau / 3.0);
    let signal = latent + traits.eta * cfg.attribute_noise * decay + 0.15 * z();
    let window = |len: i64| (p - len + 1).max(h.entered)..=p;
    let cur = h.at(p);
    let max6 = window(6).map(|q| h.at(q)).fold(0.0, f64::max);
    let count12 = window(12).filter(|&q| h.at(q) > 0.0).count() as f64;
    let since = (h.entered..=p)
        .rev()
        .position(|q| h.at(q) > 0.0)
        .map_or(tau.min(24.0), |k| (k as f64).min(24.0));
    let bench_logit = logit + traits.xi * cfg.benchmark_noise * decay + if cur >= 30.0 { 2.5 } else { 0.0 } + 0.1 * z();
    [
        cur,
        max6,
        count12,
        since,
        // debt levels: weakly tied to risk
        (5.0 - 0.4 * signal + z()).max(0.0),
        (2.0 + 0.5 * traits.mortgage + 0.2 * z()).exp(),
        (1.0 + 0.15 * signal + 0.5 * z()).exp(),
        (0.5 + 0.15 * signal + 0.7 * z()).exp(),
        // products, income, age, institutions
        (2.0 + tau / 12.0 - 0.3 * signal + z()).round().max(1.0),
        (3.0 - 0.3 * signal + 0.2 * z()).exp(),
        traits.age + p as f64 / 12.0,
        (1.5 + 0.3 * signal + 0.8 * z()).round().max(1.0),
        tau,
        sigmoid(bench_logit),
    ]
}

/// Generates networks, attributes and labels; retries with fresh random
/// streams until the application-sample default rate lands in [3%, 15%].
pub fn generate(cfg: &SynthConfig) -> Result<SynthData> {
    cfg.validate()?;
    let target = TargetSpec::default();
    for attempt in 0..20u64 {
        let data = generate_attempt(cfg, attempt)?;
        if (0.03..=0.15).contains(&data.prevalence) {
            return Ok(data);
        }
        log::warn!(
            "synthetic prevalence {:.4} outside [0.03, 0.15] (attempt {attempt}, horizon {})",
            data.prevalence,
            target.horizon
        );
    }
    Err(Error::Config(
        "could not reach a default prevalence in [3%, 15%] after 20 attempts".into(),
    ))
}

fn generate_attempt(cfg: &SynthConfig, attempt: u64) -> Result<SynthData> {
    let np = cfg.n_people;
    let n = np + cfg.n_companies;
    let ids: Vec<String> = (0..np).map(person_id).chain((0..cfg.n_companies).map(company_id)).collect();

    let (household_of, fam) = family_edges(cfg, attempt);
    let eow = eow_edges(cfg, attempt);

    let mut adj: Adjacency = vec![Vec::new(); n];
    for &(a, b, w) in fam.iter().chain(&eow[0]) {
        add_undirected(&mut adj, a, b, w);
    }
    let mut rng = rng_for(cfg, attempt, STREAM_LATENT, 0);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    // people share most of their seed factor with their household
    let n_households = household_of.iter().max().map_or(0, |m| m + 1);
    let shared: Vec<f64> = (0..n_households).map(|_| unit.sample(&mut rng)).collect();
    let eps: Vec<f64> = (0..n)
        .map(|v| {
            let own = unit.sample(&mut rng);
            if v < np {
                HOUSEHOLD_SHARE * shared[household_of[v]] + (1.0 - HOUSEHOLD_SHARE.powi(2)).sqrt() * own
            } else {
                own
            }
        })
        .collect();
    let own: Vec<f64> = (0..n).map(|_| unit.sample(&mut rng)).collect();
    let noise: Vec<f64> = (0..n).map(|_| 0.3 * unit.sample(&mut rng)).collect();
    let (mut social, iterations, change) = social_factor(&adj, &eps, cfg.social_damping);
    let mean = social.iter().sum::<f64>() / n as f64;
    let sd = (social.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    for x in &mut social {
        *x = (*x - mean) / sd.max(1e-12);
    }
    let rest: Vec<f64> = (0..n).map(|v| cfg.own_weight * own[v] + cfg.beta * social[v] + noise[v]).collect();
    let intercept = calibrate_intercept(&rest, cfg.target_prevalence);
    let logits: Vec<f64> = rest.iter().map(|r| intercept + r).collect();

    let mut attrs = NodeAttributeTable::new({
        let mut names = borrower_attribute_names();
        names.push(BENCH_SCORE.to_string());
        names
    })?;
    let mut labels = LabelTable::new();
    let mut latent = Vec::with_capacity(n);
    let (mut sampled, mut defaults) = (0usize, 0usize);
    let horizon = TargetSpec::default().horizon;
    for v in 0..n {
        let mut erng = rng_for(cfg, attempt, STREAM_ENTITY, v as u64);
        let risk = sigmoid(logits[v]);
        let h = simulate_history(cfg, risk, &mut erng);
        let traits = EntityTraits {
            eta: unit.sample(&mut erng),
            xi: unit.sample(&mut erng),
            mortgage: unit.sample(&mut erng),
            age: if v < np {
                erng.random_range(20.0..65.0)
            } else {
                erng.random_range(0.0..30.0)
            },
        };
        for p in h.entered.max(1)..=cfg.periods {
            let row = attribute_row(cfg, &h, p, logits[v], rest[v], &traits, &mut erng);
            attrs.push_row(&ids[v], p, &row)?;
            labels.push(&ids[v], p, h.at(p), h.entered)?;
        }
        if v < np && h.entered >= 2 && h.entered + horizon <= cfg.periods && h.at(h.entered) < 90.0 {
            sampled += 1;
            if (h.entered + 1..=h.entered + horizon).any(|q| h.at(q) >= 90.0) {
                defaults += 1;
            }
        }
        latent.push(LatentRecord {
            entity: ids[v].clone(),
            own: own[v],
            social: social[v],
            logit: logits[v],
            risk,
        });
    }

    let mut fb = GraphBuilder::new();
    for v in 0..np {
        fb.add_node(v as u32);
    }
    for &(a, b, w) in &fam {
        fb.add_edge(a as u32, b as u32, w)?;
    }
    let family = TemporalNetwork::from_static(ids.clone(), fb.build())?;
    let mut snapshots = Vec::with_capacity(eow.len());
    for edges in &eow {
        let mut b = GraphBuilder::new();
        for &(a, c, w) in edges {
            b.add_edge(a as u32, c as u32, w)?;
        }
        snapshots.push(b.build());
    }
    let eow_net = TemporalNetwork::new(ids, (1..=cfg.periods).collect(), snapshots)?;
    Ok(SynthData {
        family,
        eow: eow_net,
        attrs,
        labels,
        latent,
        prevalence: if sampled > 0 {
            defaults as f64 / sampled as f64
        } else {
            f64::NAN
        },
        fixed_point_iterations: iterations,
        fixed_point_change: change,
    })
}

/// Weighted mean latent risk of each entity's neighbors in the family
/// network and the first employment snapshot (NaN without neighbors).
pub fn neighbor_mean_risk(data: &SynthData) -> Vec<f64> {
    let n = data.latent.len();
    let mut sum = vec![0.0; n];
    let mut wsum = vec![0.0; n];
    for tn in [&data.family, &data.eow] {
        let g = &tn.snapshots()[0];
        for e in g.edges() {
            let (a, b) = (g.entity(e.u) as usize, g.entity(e.v) as usize);
            sum[a] += e.weight * data.latent[b].risk;
            wsum[a] += e.weight;
            sum[b] += e.weight * data.latent[a].risk;
            wsum[b] += e.weight;
        }
    }
    sum.iter().zip(&wsum).map(|(s, w)| if *w > 0.0 { s / w } else { f64::NAN }).collect()
}

/// Whether each entity defaults (90+ dpd) at any observed period.
pub fn ever_defaulted(data: &SynthData) -> Vec<bool> {
    data.latent
        .iter()
        .map(|r| data.labels.history(&r.entity).iter().any(|h| h.days_past_due_max >= 90.0))
        .collect()
}
