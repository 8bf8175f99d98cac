use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use anyhow::Context;
use edgepir::cache::EncodedCache;
use edgepir::codes::for_each_subset;
use edgepir::optimizer::{
    default_nopir_ks, optimize_weighted, popular_pir, sweep_cache_size, sweep_density, transitions, NoPirPlanner,
    SearchSpace, SweepRow,
};
use edgepir::pirproto::{PrivacyReport, ProtocolParams};
use edgepir::rates::{backhaul_pir, sbs_rate_pir, weighted_rate, RateInputs};
use edgepir::simnet::{Network, SessionConfig, Simulator};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{config_err, ExperimentConfig, PrivacyMode, SweepAxis, TopologyConfig};
use crate::{constraint_err, verification_err};

pub struct Ctx {
    pub cfg: ExperimentConfig,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub trials: Option<u64>,
}

impl Ctx {
    fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }

    fn sink(&self) -> anyhow::Result<Box<dyn Write>> {
        Ok(match &self.out {
            Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
            None => Box::new(io::stdout().lock()),
        })
    }

    /// Human-readable notes go to stdout when the data goes to a file.
    fn note(&self, msg: &str) {
        if self.out.is_some() {
            println!("{msg}");
        } else {
            eprintln!("{msg}");
        }
    }

    fn space(&self) -> SearchSpace {
        let space = SearchSpace::new(self.cfg.n_sbs(), self.cfg.scheme.t);
        match &self.cfg.sweep {
            Some(s) if s.full_range => space.with_full_range(),
            _ => space,
        }
    }

    /// Configured `n`, or the one minimizing `R + θD` for the placement.
    fn n(&self) -> anyhow::Result<Option<usize>> {
        if let Some(n) = self.cfg.protocol.n {
            return Ok(Some(n));
        }
        let mu = self.cfg.mu()?;
        let Some(k_max) = self.cfg.ks()?.iter().flatten().copied().max() else {
            return Ok(None);
        };
        let (t, theta) = (self.cfg.scheme.t, self.cfg.scheme.theta);
        let (p, gamma) = (self.cfg.popularity()?, self.cfg.gamma()?);
        let mut best: Option<(f64, usize)> = None;
        for n in k_max + t..=self.cfg.n_sbs() {
            let c = weighted_rate(backhaul_pir(&p, &mu, &gamma, n, t)?, sbs_rate_pir(&mu, &gamma, n, t)?, theta)?;
            if best.is_none_or(|(b, _)| c < b - 1e-12) {
                best = Some((c, n));
            }
        }
        best.map(|(_, n)| Some(n))
            .ok_or_else(|| constraint_err(format!("k_max + T = {} exceeds N_SBS = {}", k_max + t, self.cfg.n_sbs())))
    }

    fn build(&self) -> anyhow::Result<(Option<usize>, edgepir::cache::FileLibrary, EncodedCache)> {
        let n = self.n()?;
        let beta = self.cfg.beta(n)?;
        let mut rng = self.rng();
        let lib = self.cfg.library(beta, &mut rng)?;
        let cache = self.cfg.encode(&lib)?;
        Ok((n, lib, cache))
    }

    fn session(&self, n: usize) -> anyhow::Result<SessionConfig> {
        let mut s = SessionConfig::new(self.cfg.scheme.t, n);
        s.blinding = self.cfg.protocol.blinding;
        s.blinding_code = self.cfg.blinding_code()?;
        Ok(s)
    }
}

fn bits(b: &[bool]) -> String {
    b.iter().map(|&x| if x { '1' } else { '0' }).collect()
}

pub fn encode(ctx: &Ctx) -> anyhow::Result<()> {
    let path = ctx.out.as_ref().ok_or_else(|| config_err("encode writes a snapshot: pass --out PATH"))?;
    let (n, lib, cache) = ctx.build()?;
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    cache.write_snapshot(&mut w)?;
    w.flush()?;
    let layout = cache.layout();
    let scheme = cache.scheme();
    println!(
        "{} SBSs, {} of {} files cached, beta = {}, L = {} bits, q = {}, delta_max = {}, column length {}{}",
        cache.n_sbs(),
        scheme.cached_files().len(),
        lib.num_files(),
        cache.beta(),
        layout.l_bits,
        layout.q,
        layout.delta_max,
        cache.column_len(),
        n.map(|n| format!(", n = {n}")).unwrap_or_default()
    );
    for i in scheme.cached_files() {
        println!("  file {i}: k = {}, delta = {}", scheme.k(i).unwrap(), layout.delta[i].unwrap());
    }
    println!("snapshot written to {}", path.display());
    Ok(())
}

pub fn retrieve(ctx: &Ctx) -> anyhow::Result<()> {
    let (n, lib, mut cache) = ctx.build()?;
    if let Some(snap) = &ctx.cfg.retrieve.snapshot {
        let mut r = io::BufReader::new(File::open(snap).map_err(|e| config_err(format!("{snap}: {e}")))?);
        let loaded = EncodedCache::read_snapshot(&mut r)?;
        let same = loaded.scheme().ks() == cache.scheme().ks()
            && loaded.layout() == cache.layout()
            && (0..cache.n_sbs()).all(|j| loaded.column(j).ok() == cache.column(j).ok());
        if !same {
            return Err(verification_err(format!("snapshot {snap} does not match the configured library")));
        }
        cache = loaded;
    }
    let topology = ctx.cfg.topology()?;
    let net = Network::new(&lib, &cache, topology)?;
    let n = n.unwrap_or(ctx.cfg.n_sbs());
    let mut session = ctx.session(n)?;
    session.keep_protocol = true;
    let sim = Simulator::new(&net, session)?;
    let mut rng = ctx.rng();
    let in_range = match &ctx.cfg.retrieve.in_range {
        Some(v) => v.clone(),
        None => net.sample_coverage(&mut rng),
    };
    let file = ctx.cfg.retrieve.file;
    let tr = sim.run_retrieval(file, &in_range, &mut rng)?;

    let mut w = ctx.sink()?;
    serde_json::to_writer_pretty(&mut w, &tr)?;
    writeln!(w)?;
    w.flush()?;

    let mut notes = vec![format!(
        "file {file} ({}), SBSs in range {:?}, coordinates {:?}",
        if tr.cached { "cached" } else { "not cached" },
        tr.in_range,
        tr.coords
    )];
    if let Some(p) = &tr.protocol {
        for (j, round) in p.recovered.iter().enumerate() {
            let rho: Vec<u64> = p.responses.iter().map(|r| r[j]).collect();
            let got: Vec<String> = round
                .iter()
                .map(|s| s.map_or("-".to_string(), |v| format!("{v:b}")))
                .collect();
            notes.push(format!("  rho_{} = {:?}  recovered [{}]", j + 1, rho, got.join(", ")));
        }
    }
    notes.push(format!("bits from MBS {}, from SBSs {}", tr.bits_from_mbs, tr.bits_from_sbs));
    match &tr.recovered {
        Some(stripes) => notes.push(format!("recovered {} (library {})", stripes.join(" "), lib.file(file).iter().map(|s| bits(s)).collect::<Vec<_>>().join(" "))),
        None => notes.push("downloaded in plain from the MBS".into()),
    }
    ctx.note(&notes.join("\n"));
    Ok(())
}

#[derive(Serialize)]
struct RatesRow {
    #[serde(rename = "M")]
    m: f64,
    #[serde(rename = "T")]
    t: usize,
    theta: f64,
    n: Option<usize>,
    files_cached: usize,
    k_min: Option<usize>,
    k_max: Option<usize>,
    #[serde(rename = "R_noPIR")]
    r_nopir: f64,
    #[serde(rename = "R_PIR")]
    r_pir: f64,
    #[serde(rename = "D_PIR")]
    d_pir: f64,
    #[serde(rename = "C_PIR")]
    c_pir: f64,
}

pub fn rates(ctx: &Ctx) -> anyhow::Result<()> {
    let cfg = &ctx.cfg;
    let ks = cfg.ks()?;
    cfg.scheme()?;
    let n = ctx.n()?;
    let mu = cfg.mu()?;
    let report = RateInputs {
        p: cfg.popularity()?,
        gamma: cfg.gamma()?,
        mu,
        n: n.unwrap_or(cfg.scheme.t),
        t: cfg.scheme.t,
        theta: cfg.scheme.theta,
    }
    .report()?;
    let row = RatesRow {
        m: cfg.scheme.cache_size,
        t: cfg.scheme.t,
        theta: cfg.scheme.theta,
        n,
        files_cached: ks.iter().flatten().count(),
        k_min: ks.iter().flatten().copied().min(),
        k_max: ks.iter().flatten().copied().max(),
        r_nopir: report.r_nopir,
        r_pir: report.r_pir,
        d_pir: report.d_pir,
        c_pir: report.c_pir,
    };
    let mut w = csv::Writer::from_writer(ctx.sink()?);
    w.serialize(row)?;
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct EvalRow {
    k: usize,
    n: usize,
    files_cached: usize,
    #[serde(rename = "R_PIR")]
    r: f64,
    #[serde(rename = "D_PIR")]
    d: f64,
    #[serde(rename = "C_PIR")]
    c: f64,
    optimal: bool,
}

pub fn optimize(ctx: &Ctx) -> anyhow::Result<()> {
    let cfg = &ctx.cfg;
    let (p, gamma) = (cfg.popularity()?, cfg.gamma()?);
    let m = cfg.scheme.cache_size;
    let space = ctx.space();
    let opt = optimize_weighted(&p, &gamma, m, cfg.scheme.theta, &space)?;
    let pop = popular_pir(&p, &gamma, m, &space)?;
    let mut w = csv::Writer::from_writer(ctx.sink()?);
    for e in &opt.table {
        w.serialize(EvalRow {
            k: e.k,
            n: e.n,
            files_cached: e.files_cached,
            r: e.r,
            d: e.d,
            c: e.objective,
            optimal: Some(e.k) == opt.k_star && Some(e.n) == opt.n_star,
        })?;
    }
    w.flush()?;
    let mut notes = vec![match (opt.k_star, opt.n_star) {
        (Some(k), Some(n)) => format!(
            "optimum: k = {k}, n = {n}, {} files cached, R = {:.6}, D = {:.6}, C = {:.6}",
            opt.files_cached, opt.r, opt.d, opt.objective
        ),
        _ => format!("optimum: no caching, C = {:.6}", opt.objective),
    }];
    notes.push(format!("popular placement: R = {:.6}{}", pop.r, pop.n_star.map(|n| format!(" at n = {n}")).unwrap_or_default()));
    match NoPirPlanner::new(&p, &gamma, &default_nopir_ks(&gamma)) {
        Ok(planner) => notes.push(format!("without privacy: R = {:.6}", planner.rate(m))),
        Err(e) => notes.push(format!("without privacy: skipped ({e})")),
    }
    ctx.note(&notes.join("\n"));
    Ok(())
}

#[derive(Serialize)]
struct SweepOut {
    #[serde(rename = "M")]
    m: f64,
    lambda: Option<f64>,
    #[serde(rename = "T")]
    t: usize,
    theta: f64,
    mu_star: f64,
    k_star: Option<usize>,
    n_star: Option<usize>,
    #[serde(rename = "R_PIR")]
    r_pir: f64,
    #[serde(rename = "D_PIR")]
    d_pir: f64,
    #[serde(rename = "C_PIR")]
    c_pir: f64,
    #[serde(rename = "R_PIR_pop")]
    r_pir_pop: f64,
    #[serde(rename = "R_noPIR")]
    r_nopir: Option<f64>,
    #[serde(rename = "R_noPIR_pop")]
    r_nopir_pop: f64,
}

fn sweep_out(row: &SweepRow, m: f64, lambda: Option<f64>, t: usize, theta: f64, r_nopir: Option<f64>) -> SweepOut {
    SweepOut {
        m,
        lambda,
        t,
        theta,
        mu_star: row.mu_star,
        k_star: row.k_star,
        n_star: row.n_star,
        r_pir: row.r_pir,
        d_pir: row.d_pir,
        c_pir: row.c_pir,
        r_pir_pop: row.r_pir_popular,
        r_nopir,
        r_nopir_pop: row.r_nopir_popular,
    }
}

fn describe_transitions(rows: &[SweepRow]) -> String {
    transitions(rows)
        .iter()
        .map(|t| {
            let what = match (t.n, t.k) {
                (Some(n), Some(k)) => format!("(n,k)=({n},{k})"),
                _ => "no caching".into(),
            };
            if t.from == t.to { format!("{what} at {}", t.from) } else { format!("{what} on [{}, {}]", t.from, t.to) }
        })
        .collect::<Vec<_>>()
        .join("; ")
}

pub fn sweep(ctx: &Ctx) -> anyhow::Result<()> {
    let cfg = &ctx.cfg;
    let sw = cfg.sweep()?;
    let p = cfg.popularity()?;
    let mut out = Vec::new();
    let mut notes = Vec::new();
    match sw.axis {
        SweepAxis::CacheSize => {
            let ms = sw
                .cache_sizes
                .as_ref()
                .ok_or_else(|| config_err("cache-size sweep needs sweep.cache_sizes"))?
                .expand()?;
            let gamma = cfg.gamma()?;
            let nopir = NoPirPlanner::new(&p, &gamma, &default_nopir_ks(&gamma)).ok();
            for &t in &sw.t {
                for &theta in &sw.theta {
                    let mut space = SearchSpace::new(cfg.n_sbs(), t);
                    if sw.full_range {
                        space = space.with_full_range();
                    }
                    let rows = sweep_cache_size(&p, &gamma, &ms, theta, &space)?;
                    notes.push(format!("T={t} theta={theta}: {}", describe_transitions(&rows)));
                    for r in &rows {
                        out.push(sweep_out(r, r.axis, None, t, theta, nopir.as_ref().map(|pl| pl.rate(r.axis))));
                    }
                }
            }
        }
        SweepAxis::Density => {
            let lambdas = sw
                .densities
                .as_ref()
                .ok_or_else(|| config_err("density sweep needs sweep.densities"))?
                .expand()?;
            let r_u = match (sw.r_u, &cfg.topology) {
                (Some(r), _) => r,
                (None, TopologyConfig::Ppp { r_u, .. }) => *r_u,
                _ => return Err(config_err("density sweep needs sweep.r_u or a ppp topology")),
            };
            let ms = match &sw.cache_sizes {
                Some(v) => v.expand()?,
                None => vec![cfg.scheme.cache_size],
            };
            for &m in &ms {
                for &t in &sw.t {
                    for &theta in &sw.theta {
                        let mut space = SearchSpace::new(cfg.n_sbs(), t);
                        if sw.full_range {
                            space = space.with_full_range();
                        }
                        let rows = sweep_density(&p, r_u, &lambdas, m, theta, &space)?;
                        notes.push(format!("M={m} T={t} theta={theta}: {}", describe_transitions(&rows)));
                        for r in &rows {
                            out.push(sweep_out(r, m, Some(r.axis), t, theta, None));
                        }
                    }
                }
            }
        }
    }
    let mut w = csv::Writer::from_writer(ctx.sink()?);
    for row in out {
        w.serialize(row)?;
    }
    w.flush()?;
    ctx.note(&notes.join("\n"));
    Ok(())
}

pub fn verify_privacy(ctx: &Ctx) -> anyhow::Result<()> {
    let cfg = &ctx.cfg;
    let (n, _lib, cache) = ctx.build()?;
    let n = n.ok_or_else(|| constraint_err("nothing is cached, so there is no query to test"))?;
    let coords: Vec<usize> = (0..n).collect();
    let t = cfg.scheme.t;
    let params = match cfg.blinding_code()? {
        Some(code) => ProtocolParams::plan_with_blinding(&cache, t, &coords, code)?,
        None => ProtocolParams::plan(&cache, t, &coords)?,
    };
    let coalitions = match &cfg.privacy.coalitions {
        Some(c) => c.clone(),
        None => {
            let mut all = Vec::new();
            for_each_subset(n, t, &mut |s| {
                all.push(s.to_vec());
                true
            });
            all
        }
    };
    let blinding = cfg.protocol.blinding;
    let mut rng = ctx.rng();
    let mut reports: Vec<PrivacyReport> = Vec::with_capacity(coalitions.len());
    for c in &coalitions {
        reports.push(match cfg.privacy.mode {
            PrivacyMode::Exact => params.verify_privacy_exact(c, blinding, cfg.privacy.limit)?,
            PrivacyMode::Statistical => params.verify_privacy_statistical(
                c,
                blinding,
                ctx.trials.unwrap_or(cfg.privacy.sessions),
                cfg.privacy.buckets,
                &mut rng,
            )?,
        });
    }
    let mut w = ctx.sink()?;
    serde_json::to_writer_pretty(&mut w, &reports)?;
    writeln!(w)?;
    w.flush()?;
    let failed: Vec<&PrivacyReport> = reports.iter().filter(|r| !r.passes(cfg.privacy.alpha)).collect();
    let worst_tv = reports.iter().map(|r| r.tv_distance).fold(0.0, f64::max);
    ctx.note(&format!(
        "{} coalitions checked ({:?} mode, blinding {:?}), worst TV distance {worst_tv:.4}, {} failed",
        reports.len(),
        cfg.privacy.mode,
        blinding,
        failed.len()
    ));
    if let Some(r) = failed.first() {
        return Err(verification_err(format!(
            "coalition {:?} distinguishes the requested file (TV {:.4}, p {:?})",
            r.coalition, r.tv_distance, r.p_value
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct SimulateOut {
    trials: u64,
    seed: u64,
    n: Option<usize>,
    r_hat: f64,
    r_se: f64,
    d_hat: f64,
    d_se: f64,
    r_analytic: f64,
    d_analytic: f64,
    within_3se: bool,
}

pub fn simulate(ctx: &Ctx) -> anyhow::Result<()> {
    let cfg = &ctx.cfg;
    let (n, lib, cache) = ctx.build()?;
    let topology = cfg.topology()?;
    let gamma = topology.gamma();
    let net = Network::new(&lib, &cache, topology)?;
    let sim = Simulator::new(&net, ctx.session(n.unwrap_or(cfg.n_sbs()))?)?;
    let trials = ctx.trials.unwrap_or(10_000);
    let mc = sim.monte_carlo(trials, ctx.seed)?;
    let mu = cfg.mu()?;
    let (r, d) = match n {
        Some(n) => (
            backhaul_pir(lib.popularity(), &mu, &gamma, n, cfg.scheme.t)?,
            sbs_rate_pir(&mu, &gamma, n, cfg.scheme.t)?,
        ),
        None => (1.0, 0.0),
    };
    let agrees = mc.agrees_with(r, d, 3.0);
    let out = SimulateOut {
        trials,
        seed: ctx.seed,
        n,
        r_hat: mc.r_hat,
        r_se: mc.r_se,
        d_hat: mc.d_hat,
        d_se: mc.d_se,
        r_analytic: r,
        d_analytic: d,
        within_3se: agrees,
    };
    let mut w = ctx.sink()?;
    serde_json::to_writer_pretty(&mut w, &out)?;
    writeln!(w)?;
    w.flush()?;
    ctx.note(&format!(
        "R_hat = {:.5} ± {:.5} (analytic {r:.5}), D_hat = {:.5} ± {:.5} (analytic {d:.5})",
        mc.r_hat, mc.r_se, mc.d_hat, mc.d_se
    ));
    if !agrees {
        return Err(verification_err("Monte-Carlo estimate differs from the closed form by more than 3 standard errors"));
    }
    Ok(())
}
