//! Subcommand bodies.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rmtmean::experiments::{mse_cov_experiment, mse_mean_experiment, CovExperiment, MeanExperiment, ResultTable, Sweep};
use rmtmean::gradcheck::{run_gradcheck, GradcheckConfig};
use rmtmean::io::{matrix_to_csv, read_data_csv, read_manifest, ManifestEntry};
use rmtmean::learning::{aligned_accuracy, kmeans_fit, nc_fit, nc_predict, CentroidMethod, CentroidModel, KMeansConfig, LabeledSet, RestartSelect};
use rmtmean::{classical_mean, lw_linear, rmt_cov, rmt_mean, scm, CovInit, DataMatrix, DescentConfig, DescentTrace, MeanInit, SpdMatrix};

use crate::*;

type Res<T> = std::result::Result<T, Failure>;

pub fn dispatch(cli: &Cli, header: &str) -> Res<()> {
    match &cli.command {
        Command::EstimateCov(a) => estimate_cov(a, header),
        Command::Mean(a) => mean(a, header),
        Command::NearestCentroid(NcCommand::Fit(a)) => nc_fit_cmd(a, header),
        Command::NearestCentroid(NcCommand::Predict(a)) => nc_predict_cmd(a, header),
        Command::Kmeans(a) => kmeans(a, cli.seed, header),
        Command::BenchMean(a) => bench_mean(a, cli.seed, header),
        Command::BenchCov(a) => bench_cov(a, cli.seed, header),
        Command::Gradcheck(a) => gradcheck(a, cli.seed),
    }
}

fn descent(d: &DescentArgs, alpha: f64) -> DescentConfig {
    DescentConfig {
        max_iters: d.max_iters,
        step_tol: d.eps,
        validity_alpha: alpha,
        initial_step: d.step_rule,
        ..DescentConfig::default()
    }
}

/// Errors about a named file are input errors that carry the path.
fn in_file(path: &Path, e: rmtmean::Error) -> Failure {
    match e {
        rmtmean::Error::Parse { .. } => Failure::Input(e.to_string()),
        _ => Failure::Input(format!("{}: {e}", path.display())),
    }
}

fn write_file(path: &Path, text: &str) -> Res<()> {
    fs::write(path, text).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn emit(output: Option<&PathBuf>, text: &str) -> Res<()> {
    match output {
        Some(p) => write_file(p, text),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Failure::Runtime(format!("stdout: {e}"))),
    }
}

fn write_trace(path: Option<&PathBuf>, trace: &DescentTrace, header: &str) -> Res<()> {
    let Some(path) = path else { return Ok(()) };
    let mut buf = format!("# {header}\n").into_bytes();
    trace.write_csv(&mut buf).map_err(|e| Failure::Runtime(e.to_string()))?;
    write_file(path, &String::from_utf8_lossy(&buf))
}

fn load_data(path: &Path, center: bool) -> Res<DataMatrix> {
    let x = read_data_csv(path).map_err(|e| in_file(path, e))?;
    if center {
        x.centered().map_err(|e| in_file(path, e))
    } else {
        Ok(x)
    }
}

fn load_manifest(path: &Path) -> Res<Vec<ManifestEntry>> {
    read_manifest(path).map_err(|e| in_file(path, e))
}

/// Loads every entry and checks all share the first entry's shape.
fn load_all(entries: &[ManifestEntry], center: bool) -> Res<Vec<DataMatrix>> {
    let mut out: Vec<DataMatrix> = Vec::with_capacity(entries.len());
    for e in entries {
        let x = load_data(&e.path, center)?;
        if let Some(first) = out.first() {
            if (x.p(), x.n()) != (first.p(), first.n()) {
                return Err(Failure::Input(format!(
                    "{}: shape {}x{} differs from {}x{} of {}",
                    e.path.display(),
                    x.p(),
                    x.n(),
                    first.p(),
                    first.n(),
                    entries[0].path.display()
                )));
            }
        }
        out.push(x);
    }
    Ok(out)
}

fn report(trace: &DescentTrace) {
    eprintln!("{} after {} iterations, cost {:.6e}", trace.termination, trace.iterations(), trace.final_cost());
}

fn estimate_cov(a: &EstimateCovArgs, header: &str) -> Res<()> {
    let x = load_data(&a.input, a.center)?;
    let est = match a.method {
        CovMethodArg::Scm => scm(&x)?,
        CovMethodArg::Lw => {
            let lw = lw_linear(&x)?;
            eprintln!("shrinkage {:.6}", lw.shrinkage);
            lw.estimate
        }
        CovMethodArg::Rmt => {
            let init = match a.init {
                CovInitArg::Identity => CovInit::Identity,
                CovInitArg::Lw => CovInit::LedoitWolf,
            };
            let (r, trace) = rmt_cov(&x, &init, &descent(&a.descent, a.alpha))?;
            report(&trace);
            write_trace(a.trace.as_ref(), &trace, header)?;
            r
        }
    };
    emit(a.output.as_ref(), &matrix_to_csv(est.as_matrix(), Some(header)))
}

fn centroid_method(m: MeanMethodArg) -> CentroidMethod {
    match m {
        MeanMethodArg::Rmt => CentroidMethod::Rmt,
        MeanMethodArg::ClassicalScm => CentroidMethod::ClassicalScm,
        MeanMethodArg::ClassicalLw => CentroidMethod::ClassicalLw,
    }
}

fn mean_init(i: MeanInitArg) -> MeanInit {
    match i {
        MeanInitArg::Identity => MeanInit::Identity,
        MeanInitArg::LwMean => MeanInit::LwMean,
    }
}

fn mean(a: &MeanArgs, header: &str) -> Res<()> {
    let xs = load_all(&load_manifest(&a.inputs)?, a.center)?;
    let cfg = descent(&a.descent, a.alpha);
    let (g, trace) = match a.method {
        MeanMethodArg::Rmt => rmt_mean(&xs, &mean_init(a.init), &cfg)?,
        MeanMethodArg::ClassicalScm | MeanMethodArg::ClassicalLw => {
            let lw = |x: &DataMatrix| lw_linear(x).map(|l| l.estimate);
            let cs: Vec<SpdMatrix> = match a.method {
                MeanMethodArg::ClassicalScm => xs.iter().map(scm).collect::<Result<_, _>>()?,
                _ => xs.iter().map(lw).collect::<Result<_, _>>()?,
            };
            let start = match a.init {
                MeanInitArg::Identity => None,
                MeanInitArg::LwMean => {
                    let lws: Vec<SpdMatrix> = xs.iter().map(lw).collect::<Result<_, _>>()?;
                    Some(classical_mean(&lws, None, &DescentConfig::for_mean())?.0)
                }
            };
            classical_mean(&cs, start.as_ref(), &cfg)?
        }
    };
    report(&trace);
    write_trace(a.trace.as_ref(), &trace, header)?;
    emit(a.output.as_ref(), &matrix_to_csv(g.as_matrix(), Some(header)))
}

fn nc_fit_cmd(a: &NcFitArgs, header: &str) -> Res<()> {
    let entries = load_manifest(&a.train)?;
    let mut labels = Vec::with_capacity(entries.len());
    for e in &entries {
        let l = e
            .label
            .ok_or_else(|| Failure::Input(format!("{}: training entry {} has no label", a.train.display(), e.path.display())))?;
        labels.push(l);
    }
    let xs = load_all(&entries, false)?;
    let train = LabeledSet::new(xs, labels).map_err(|e| in_file(&a.train, e))?;
    let cfg = descent(&a.descent, 0.0);
    let model = nc_fit(&train, centroid_method(a.method), &mean_init(a.init), &cfg)?;
    model
        .save(&a.model, Some(header))
        .map_err(|e| Failure::Runtime(format!("{}: {e}", a.model.display())))?;
    eprintln!("fitted {} centroids", model.num_classes());
    Ok(())
}

fn label_csv(entries: &[ManifestEntry], labels: &[usize], header: &str) -> String {
    let mut out = format!("# {header}\npath,label\n");
    for (e, l) in entries.iter().zip(labels) {
        out.push_str(&format!("{},{l}\n", e.path.display()));
    }
    out
}

/// Truth labels when every manifest entry carries one.
fn truth(entries: &[ManifestEntry]) -> Option<Vec<usize>> {
    entries.iter().map(|e| e.label).collect()
}

fn nc_predict_cmd(a: &NcPredictArgs, header: &str) -> Res<()> {
    let model = CentroidModel::load(&a.model).map_err(|e| in_file(&a.model, e))?;
    let entries = load_manifest(&a.inputs)?;
    let xs = load_all(&entries, false)?;
    if let Some(x) = xs.first() {
        if (x.p(), x.n()) != (model.p(), model.n) {
            return Err(Failure::Input(format!(
                "{}: shape {}x{} does not match the model's {}x{}",
                entries[0].path.display(),
                x.p(),
                x.n(),
                model.p(),
                model.n
            )));
        }
    }
    let pred: Vec<usize> = xs.iter().map(|x| nc_predict(&model, x)).collect::<Result<_, _>>()?;
    if let Some(t) = truth(&entries) {
        let acc = t.iter().zip(&pred).filter(|(a, b)| a == b).count() as f64 / t.len() as f64;
        eprintln!("accuracy {acc:.4}");
    }
    emit(a.output.as_ref(), &label_csv(&entries, &pred, header))
}

fn kmeans(a: &KmeansArgs, seed: u64, header: &str) -> Res<()> {
    let entries = load_manifest(&a.inputs)?;
    let xs = load_all(&entries, false)?;
    let cfg = KMeansConfig {
        restarts: a.restarts as usize,
        max_iters: a.rounds,
        label_tol: a.label_tol,
        select: match a.restart_select {
            SelectArg::Max => RestartSelect::Max,
            SelectArg::Min => RestartSelect::Min,
        },
        descent: descent(&a.descent, 0.0),
    };
    let z = a.clusters as usize;
    let fit = kmeans_fit(&xs, z, &cfg, seed)?;
    for (m, r) in fit.runs.iter().enumerate() {
        let mark = if m == fit.chosen { " *" } else { "" };
        println!("restart {m}: inertia {} after {} rounds{mark}", rmtmean::io::fmt_g17(r.inertia), r.iterations);
    }
    if let Some(t) = truth(&entries) {
        if z <= 8 && t.iter().all(|&l| (1..=z).contains(&l)) {
            eprintln!("aligned accuracy {:.4}", aligned_accuracy(&t, fit.labels(), z)?);
        }
    }
    emit(a.output.as_ref(), &label_csv(&entries, fit.labels(), header))
}

fn write_table(table: &ResultTable, dir: &Path, header: &str) -> Res<()> {
    table
        .write_csvs(dir, Some(header))
        .map_err(|e| Failure::Runtime(format!("{}: {e}", dir.display())))?;
    let failed = table.failures();
    if failed > 0 {
        eprintln!("{failed} trial estimates failed and were left out of the quantiles");
    }
    println!("wrote mean.csv, 5.csv and 95.csv to {}", dir.display());
    Ok(())
}

fn bench_mean(a: &BenchMeanArgs, seed: u64, header: &str) -> Res<()> {
    let p = a.p as usize;
    let sweep = match (&a.n_grid, &a.k_grid) {
        (Some(Grid(grid)), None) => Sweep::Samples { grid: grid.clone(), k: a.k },
        (None, Some(Grid(grid))) => Sweep::Matrices { grid: grid.clone(), n: a.n },
        _ => return Err(Failure::Input("give exactly one of --n-grid and --k-grid".into())),
    };
    let (ns, ks): (Vec<usize>, Vec<usize>) = match &sweep {
        Sweep::Samples { grid, k } => (grid.clone(), vec![*k]),
        Sweep::Matrices { grid, n } => (vec![*n], grid.clone()),
    };
    if let Some(&n) = ns.iter().find(|&&n| n <= p) {
        return Err(Failure::Input(format!("--p {p} needs more samples than dimensions, got n={n}")));
    }
    if ks.contains(&1) {
        return Err(Failure::Input("cluster generation needs at least 2 matrices".into()));
    }
    let cfg = MeanExperiment {
        trials: a.trials as usize,
        sigma2: a.sigma2,
        condition: a.condition,
        seed,
        descent: descent(&a.descent, 0.0),
        ..MeanExperiment::new(p, sweep)
    };
    let table = mse_mean_experiment(&cfg)?;
    write_table(&table, &a.out_dir, header)
}

fn bench_cov(a: &BenchCovArgs, seed: u64, header: &str) -> Res<()> {
    let p = a.p as usize;
    if let Some(&n) = a.n_grid.0.iter().find(|&&n| n <= p) {
        return Err(Failure::Input(format!("--p {p} needs more samples than dimensions, got n={n}")));
    }
    let cfg = CovExperiment {
        trials: a.trials as usize,
        condition: a.condition,
        init: match a.init {
            CovInitArg::Identity => CovInit::Identity,
            CovInitArg::Lw => CovInit::LedoitWolf,
        },
        seed,
        descent: descent(&a.descent, a.alpha),
        ..CovExperiment::new(p, a.n_grid.0.clone())
    };
    let table = mse_cov_experiment(&cfg)?;
    write_table(&table, &a.out_dir, header)
}

fn gradcheck(a: &GradcheckArgs, seed: u64) -> Res<()> {
    let mut cfg = GradcheckConfig {
        instances: a.trials as usize,
        directions: a.directions as usize,
        n: a.n,
        seed,
        ..GradcheckConfig::default()
    };
    if let Some(p) = a.p {
        cfg.dims = vec![p as usize];
    }
    let r = run_gradcheck(&cfg)?;
    println!("rmt_distance {:.3e}", r.rmt_distance);
    println!("rmt_mean {:.3e}", r.rmt_mean);
    println!("classical_mean {:.3e}", r.classical_mean);
    println!("max rel err {:.3e} over {} directional checks", r.max(), r.checks);
    if r.max() > a.tol {
        return Err(Failure::Runtime(format!("max relative error {:.3e} exceeds --tol {:.1e}", r.max(), a.tol)));
    }
    Ok(())
}
