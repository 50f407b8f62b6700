use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use log::{info, warn};
use mor2s::deim::precompute_rom_factors;
use mor2s::full::{Stepper, SnapshotKind, TimeGrid};
use mor2s::io::{load_basis, save_basis, FORMAT_VERSION};
use mor2s::linalg::Tolerances;
use mor2s::memory::MemoryFigure;
use mor2s::pipeline::{
    breakdown, build_offline, evaluate_online, funcapprox, online_cost_scan, sweep_trend, sweep_tau,
    FuncApproxOptions, Method, OfflineOptions, OnlineOptions,
};
use mor2s::pod::BasisPair;
use mor2s::problems::{build_problem, AnalyticId, ProblemSpec};
use mor2s::rom::assemble;
use mor2s::{Error, Result};

use crate::config::{parse_kv, RunConfig};

const MANIFEST: &str = "manifest.txt";
const BASIS_U: &str = "basis_u.bin";
const BASIS_F: &str = "basis_f.bin";

/// A CSV report: config echo, header, rows, optional footer comments.
struct Report {
    text: String,
}

impl Report {
    fn new(cfg: &RunConfig, header: &str) -> Self {
        Report { text: format!("{}{header}\n", cfg.echo()) }
    }

    fn row(&mut self, cells: &[String]) {
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    fn note(&mut self, s: &str) {
        let _ = writeln!(self.text, "# {s}");
    }

    fn save(&self, dir: &Path, name: &str) -> Result<()> {
        let path = dir.join(name);
        fs::write(&path, &self.text).map_err(|e| Error::Report(format!("{}: {e}", path.display())))?;
        info!("wrote {}", path.display());
        Ok(())
    }
}

fn e(x: f64) -> String {
    format!("{x:.6e}")
}

fn opt<V: ToString>(v: Option<V>) -> String {
    v.map_or_else(|| "-".into(), |v| v.to_string())
}

fn prepare_out(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out).map_err(|e| Error::Report(format!("{}: {e}", cfg.out.display())))
}

fn problem(cfg: &RunConfig) -> Result<ProblemSpec<f64>> {
    build_problem(&cfg.problem, cfg.n, &cfg.params).map_err(|err| match err {
        Error::Dimension(m) => Error::Config(m),
        other => other,
    })
}

fn offline_options(cfg: &RunConfig) -> OfflineOptions {
    OfflineOptions {
        n_max: cfg.n_max,
        kappa: cfg.kappa,
        tau: cfg.tau,
        tol: cfg.tol,
        n_t: cfg.n_t,
        scheme: cfg.snapshot_scheme,
        use_symmetry: cfg.symmetric,
        override_guard: cfg.override_memory_guard,
        ..OfflineOptions::default()
    }
}

fn online_options(cfg: &RunConfig) -> OnlineOptions {
    OnlineOptions {
        n_t: cfg.n_t,
        reference: cfg.reference_scheme,
        stride: cfg.stride,
        repeats: cfg.repeats,
        with_reference: true,
    }
}

/// Two-column plot data.
fn series(cfg: &RunConfig, header: &str, pts: impl Iterator<Item = (f64, f64)>) -> Report {
    let mut r = Report::new(cfg, header);
    for (a, b) in pts {
        r.row(&[e(a), e(b)]);
    }
    r
}

fn singular_values(cfg: &RunConfig, tag: &str, b: &BasisPair<f64>) -> Result<()> {
    for (side, s) in [("left", &b.singvals_l), ("right", &b.singvals_r)] {
        let pts = s.iter().enumerate().map(|(i, &v)| ((i + 1) as f64, v));
        series(cfg, "index,singular_value", pts).save(&cfg.out, &format!("singvals_{tag}_{side}.csv"))?;
    }
    Ok(())
}

pub fn cmd_funcapprox(cfg: &RunConfig) -> Result<()> {
    let id: AnalyticId = cfg.problem.parse()?;
    let methods = cfg.methods_or(&[Method::Dynamic, Method::Vanilla, Method::Vector]);
    let opts = FuncApproxOptions {
        id,
        n: cfg.n,
        n_max: cfg.n_max,
        kappa: cfg.kappa,
        tau: cfg.tau,
        tol: cfg.tol,
        n_test: cfg.n_test,
        override_guard: cfg.override_memory_guard,
    };
    if methods.contains(&Method::Vector) {
        mor2s::pod::check_memory_guard((cfg.n, cfg.n), cfg.override_memory_guard)?;
    }
    prepare_out(cfg)?;
    let mut report = Report::new(cfg, "method,phases,n_s,nu_l,nu_r,memory,memory_entries,mean_error");
    let mut timing = Report::new(cfg, "method,basis_seconds");
    for m in methods {
        let row = funcapprox::<f64>(&opts, m)?;
        let mem = MemoryFigure::new(row.memory_entries, cfg.n);
        let label = if m == Method::Vector { mem.label_n2() } else { mem.label_n() };
        info!("{m}: n_s = {}, error = {:.3e}", row.n_s, row.mean_error);
        report.row(&[
            m.to_string(),
            opt(row.phases),
            row.n_s.to_string(),
            row.nu_l.to_string(),
            opt(row.nu_r),
            label,
            row.memory_entries.to_string(),
            e(row.mean_error),
        ]);
        timing.row(&[m.to_string(), e(row.basis_seconds)]);
    }
    report.note("memory: dynamic = peak accumulator storage, vanilla = peak running bases, vector = stored snapshots");
    report.save(&cfg.out, "funcapprox.csv")?;
    timing.save(&cfg.out, "funcapprox_timing.csv")
}

pub fn cmd_reduce(cfg: &RunConfig) -> Result<()> {
    let spec = problem(cfg)?;
    prepare_out(cfg)?;
    let off = build_offline(&spec, &offline_options(cfg))?;
    info!(
        "offline: basis {:.3}s, deim {:.3}s, {} steps integrated",
        off.basis_seconds, off.deim_seconds, off.steps_integrated
    );
    if cfg.problem == "rdc" && cfg.params.get("eps1") == Some(&0.05) {
        let (l, r) = (off.ubasis.nu_l(), off.ubasis.nu_r());
        if l.abs_diff(14) > 4 || r.abs_diff(14) > 4 {
            warn!("state basis ({l}, {r}) is more than 4 away from the reference (14, 14)");
        }
    }
    save_basis(&cfg.out.join(BASIS_U), &off.ubasis, None)?;
    save_basis(&cfg.out.join(BASIS_F), &off.fbasis, Some(&off.deim))?;
    let manifest = format!(
        "format = {FORMAT_VERSION}\nproblem = {}\nn = {}\nhash = {}\nbasis_u = {BASIS_U}\nbasis_f = {BASIS_F}\n",
        cfg.problem,
        cfg.n,
        cfg.problem_hash()
    );
    fs::write(cfg.out.join(MANIFEST), format!("{}{manifest}", cfg.echo()))?;

    let mut report = Report::new(cfg, "stream,phases,n_s,nu_l,nu_r,p1,p2,c_l,c_r,memory,memory_entries");
    for (name, rep, b) in [("U", &off.u_report, &off.ubasis), ("F", &off.f_report, &off.fbasis)] {
        let mem = MemoryFigure::new(rep.peak_storage_entries, cfg.n);
        let deim = (name == "F").then_some(&off.deim);
        report.row(&[
            name.into(),
            rep.phases_used.to_string(),
            rep.n_s().to_string(),
            b.nu_l().to_string(),
            b.nu_r().to_string(),
            opt(deim.map(|d| d.p1())),
            opt(deim.map(|d| d.p2())),
            opt(deim.map(|d| e(d.c_l))),
            opt(deim.map(|d| e(d.c_r))),
            mem.label_n(),
            rep.peak_storage_entries.to_string(),
        ]);
    }
    report.save(&cfg.out, "reduce.csv")?;
    let mut timing = Report::new(cfg, "basis_seconds,deim_seconds");
    timing.row(&[e(off.basis_seconds), e(off.deim_seconds)]);
    timing.save(&cfg.out, "reduce_timing.csv")?;
    singular_values(cfg, "u", &off.ubasis)?;
    singular_values(cfg, "f", &off.fbasis)
}

fn check_manifest(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::Integrity(format!("{}: {e}", path.display())))?;
    let kv = parse_kv(&text, &path.display().to_string()).map_err(|e| Error::Integrity(e.to_string()))?;
    let get = |k: &str| kv.iter().rev().find(|(key, _)| key == k).map(|(_, v)| v.as_str());
    let want_n = cfg.n.to_string();
    let want_hash = cfg.problem_hash();
    for (k, want) in [("n", want_n.as_str()), ("hash", want_hash.as_str())] {
        match get(k) {
            Some(v) if v == want => {}
            got => {
                return Err(Error::Integrity(format!(
                    "{}: artifacts were built for {k} = {}, config has {want}",
                    path.display(),
                    got.unwrap_or("<missing>")
                )))
            }
        }
    }
    Ok(())
}

pub fn cmd_solve(cfg: &RunConfig) -> Result<()> {
    let dir = cfg.artifacts_dir().to_path_buf();
    check_manifest(cfg, &dir)?;
    let spec = problem(cfg)?;
    let (ubasis, _) = load_basis::<f64>(&dir.join(BASIS_U))?;
    let (fbasis, deim) = load_basis::<f64>(&dir.join(BASIS_F))?;
    let deim = deim.ok_or_else(|| Error::Integrity(format!("{}: no interpolation indices", dir.join(BASIS_F).display())))?;
    if ubasis.vl.nrows() != spec.shape().0 || ubasis.wr.nrows() != spec.shape().1 {
        return Err(Error::Integrity("basis rows do not match the problem size".into()));
    }
    let factors = precompute_rom_factors(&ubasis, &fbasis, &deim).map_err(|e| e.in_stage("deim"))?;
    let model = assemble(&spec, &ubasis, &factors).map_err(|e| e.in_stage("assembly"))?;
    prepare_out(cfg)?;
    let on = evaluate_online(&spec, &model, &online_options(cfg))?;
    let mean = on.mean_error.map(|x| x.to_string());
    info!("online: {:.4}s for {} steps, mean error {}", on.online_seconds, cfg.n_t, opt(mean));

    let entries = ubasis.vl.len() + ubasis.wr.len() + fbasis.vl.len() + fbasis.wr.len();
    let mut report = Report::new(cfg, "method,n_t,nu_l,nu_r,p1,p2,memory,memory_entries,mean_error");
    report.row(&[
        Method::Dynamic.to_string(),
        cfg.n_t.to_string(),
        ubasis.nu_l().to_string(),
        ubasis.nu_r().to_string(),
        deim.p1().to_string(),
        deim.p2().to_string(),
        MemoryFigure::new(entries, cfg.n).label_n(),
        entries.to_string(),
        opt(on.mean_error.map(e)),
    ]);
    report.note("memory: entries of the four basis matrices");
    report.save(&cfg.out, "solve.csv")?;
    series(cfg, "t,relative_error", on.errors.iter().copied()).save(&cfg.out, "error_vs_time.csv")?;
    let mut timing = Report::new(cfg, "online_seconds,steps");
    timing.row(&[e(on.online_seconds), cfg.n_t.to_string()]);
    timing.save(&cfg.out, "solve_timing.csv")?;
    singular_values(cfg, "u", &ubasis)?;
    singular_values(cfg, "f", &fbasis)
}

pub fn cmd_full(cfg: &RunConfig) -> Result<()> {
    let spec = problem(cfg)?;
    prepare_out(cfg)?;
    let grid = TimeGrid::new(spec.t_final, cfg.n_t)?;
    let stepper = Stepper::new(&spec, cfg.reference_scheme, grid.h(), &Tolerances::default())?;
    let start = Instant::now();
    let mut u = spec.u0.clone();
    let mut norms = vec![(0.0, u.norm())];
    for i in 0..grid.n_t {
        u = stepper.step(&spec, &u, grid.node(i))?;
        if !u.iter().all(|x| x.is_finite()) || u.norm() > 1e12 {
            return Err(Error::Divergence { step: i + 1 });
        }
        if (i + 1) % cfg.stride == 0 || i + 1 == grid.n_t {
            norms.push((grid.node(i + 1), u.norm()));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    info!("full: {} steps in {secs:.3}s", grid.n_t);
    series(cfg, "t,frobenius_norm", norms.into_iter()).save(&cfg.out, "full.csv")?;
    let mut fin = Report::new(cfg, "final state, row-major");
    for r in 0..u.nrows() {
        fin.row(&u.row(r).iter().map(|&x| e(x)).collect::<Vec<_>>());
    }
    fin.save(&cfg.out, "full_final.csv")?;
    let mut timing = Report::new(cfg, "seconds,steps");
    timing.row(&[e(secs), grid.n_t.to_string()]);
    timing.save(&cfg.out, "full_timing.csv")
}

pub fn cmd_sweep_tau(cfg: &RunConfig) -> Result<()> {
    let spec = problem(cfg)?;
    let methods = cfg.methods_or(&[Method::Dynamic, Method::Vector]);
    prepare_out(cfg)?;
    let rows = sweep_tau(&spec, &offline_options(cfg), &cfg.taus, &methods)?;
    let mut report = Report::new(cfg, "tau,method,stream,phases,n_s,dim");
    for r in &rows {
        let stream = if r.stream == SnapshotKind::State { "U" } else { "F" };
        report.row(&[e(r.tau), r.method.to_string(), stream.into(), r.phases.to_string(), r.n_s.to_string(), r.dim.to_string()]);
    }
    if cfg.taus.len() >= 2 {
        for (name, kind) in [("U", SnapshotKind::State), ("F", SnapshotKind::Nonlinearity)] {
            if let Some((mono, range)) = sweep_trend(&rows, kind) {
                report.note(&format!("trend {name}: vector_nondecreasing = {mono}, dynamic_range_le_vector = {range}"));
                if !(mono && range) {
                    warn!("{name}-stream trend not reproduced (vector nondecreasing: {mono}, ranges: {range})");
                }
            }
        }
    }
    report.save(&cfg.out, "sweep_tau.csv")
}

pub fn cmd_bench(cfg: &RunConfig) -> Result<()> {
    let spec = problem(cfg)?;
    let mut methods = cfg.methods_or(&[Method::Dynamic, Method::Vector]);
    if cfg.methods.is_none() && mor2s::pod::check_memory_guard(spec.shape(), cfg.override_memory_guard).is_err() {
        warn!("n = {} is above the vector memory guard; benchmarking the dynamic method only", cfg.n);
        methods.retain(|&m| m != Method::Vector);
    }
    prepare_out(cfg)?;
    let rows = breakdown(&spec, &offline_options(cfg), &online_options(cfg), &methods)?;
    let mut report = Report::new(
        cfg,
        "method,u_phases,u_n_s,u_nu_l,u_nu_r,f_phases,f_n_s,f_nu_l,f_nu_r,offline_memory,offline_entries,n_t,online_memory,online_entries,mean_error",
    );
    let mut timing = Report::new(cfg, "method,basis_seconds,deim_seconds,online_seconds");
    for r in &rows {
        let off = MemoryFigure::new(r.offline_entries, cfg.n);
        let on = MemoryFigure::new(r.online_entries, cfg.n);
        let (off_l, on_l) = match r.method {
            Method::Vector => (off.label_n2(), on.label_n2()),
            _ => (off.label_n(), on.label_n()),
        };
        let (u, f) = (r.u_dims, r.f_dims);
        report.row(&[
            r.method.to_string(),
            u.0.to_string(),
            u.1.to_string(),
            u.2.to_string(),
            u.3.to_string(),
            f.0.to_string(),
            f.1.to_string(),
            f.2.to_string(),
            f.3.to_string(),
            off_l,
            r.offline_entries.to_string(),
            r.n_t.to_string(),
            on_l,
            r.online_entries.to_string(),
            opt(r.mean_error.map(e)),
        ]);
        timing.row(&[r.method.to_string(), e(r.basis_seconds), e(r.deim_seconds), e(r.online_seconds)]);
    }
    report.note("offline memory: peak snapshot storage (dynamic: both accumulators; vector: stored snapshot matrices)");
    report.note("online memory: basis entries (dynamic: four small-side bases; vector: the two long bases)");
    report.save(&cfg.out, "bench.csv")?;
    timing.save(&cfg.out, "bench_timing.csv")?;

    if !cfg.bench_ns.is_empty() {
        let build = |n| build_problem::<f64>(&cfg.problem, n, &cfg.params);
        let pts = online_cost_scan(build, &cfg.bench_ns, cfg.bench_k, cfg.bench_p, cfg.bench_steps, cfg.repeats, cfg.seed)?;
        let mut scan = Report::new(cfg, "n,k1,k2,p1,p2,steps,seconds_per_step");
        for p in &pts {
            scan.row(&[
                p.n.to_string(),
                p.k.0.to_string(),
                p.k.1.to_string(),
                p.p.0.to_string(),
                p.p.1.to_string(),
                p.steps.to_string(),
                e(p.seconds_per_step),
            ]);
        }
        scan.save(&cfg.out, "online_cost_timing.csv")?;
    }
    Ok(())
}
