//! Nearest-centroid classification and K-means clustering of data sets,
//! with centroids computed as corrected Fréchet means or, for comparison,
//! as classical means of per-item covariance estimates.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::index::sample;
use rayon::prelude::*;

use crate::covariance::{lw_linear, scm, DataMatrix};
use crate::error::{Error, Result};
use crate::frechet::{classical_mean, rmt_mean, rmt_mean_of_scms, MeanInit};
use crate::io::{read_spd_csv, write_matrix_csv};
use crate::linalg::{check_same_dim, fisher_dist2, SpdMatrix};
use crate::optim::DescentConfig;
use crate::rmt_distance::{check_aspect, rmt_dist2};
use crate::synthetic::stream_rng;

/// Data sets with class labels in `1..=Z`.
#[derive(Debug, Clone)]
pub struct LabeledSet {
    items: Vec<DataMatrix>,
    labels: Vec<usize>,
}

impl LabeledSet {
    pub fn new(items: Vec<DataMatrix>, labels: Vec<usize>) -> Result<Self> {
        if items.len() != labels.len() {
            return Err(Error::invalid(format!("{} items but {} labels", items.len(), labels.len())));
        }
        let first = items.first().ok_or_else(|| Error::invalid("empty training set"))?;
        for x in &items {
            check_same_dim(first.p(), x.p())?;
            check_same_dim(first.n(), x.n())?;
        }
        if labels.contains(&0) {
            return Err(Error::invalid("class labels start at 1"));
        }
        Ok(LabeledSet { items, labels })
    }

    pub fn items(&self) -> &[DataMatrix] {
        &self.items
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.labels.iter().copied().max().unwrap_or(0)
    }

    pub fn class(&self, z: usize) -> Vec<DataMatrix> {
        self.items.iter().zip(&self.labels).filter(|(_, &l)| l == z).map(|(x, _)| x.clone()).collect()
    }
}

/// How class centroids are formed and compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CentroidMethod {
    /// Corrected mean of the raw data; corrected distance to the SCM.
    #[default]
    Rmt,
    /// Karcher mean of SCMs; Fisher distance to the SCM.
    ClassicalScm,
    /// Karcher mean of Ledoit-Wolf estimates; Fisher distance to the LW estimate.
    ClassicalLw,
}

impl fmt::Display for CentroidMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CentroidMethod::Rmt => "rmt",
            CentroidMethod::ClassicalScm => "classical-scm",
            CentroidMethod::ClassicalLw => "classical-lw",
        })
    }
}

impl FromStr for CentroidMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rmt" => Ok(CentroidMethod::Rmt),
            "classical-scm" => Ok(CentroidMethod::ClassicalScm),
            "classical-lw" => Ok(CentroidMethod::ClassicalLw),
            other => Err(Error::invalid(format!("unknown centroid method '{other}'"))),
        }
    }
}

/// Fitted class centroids; `centroids[z − 1]` belongs to class `z`.
#[derive(Debug, Clone)]
pub struct CentroidModel {
    pub centroids: Vec<SpdMatrix>,
    pub n: usize,
    pub method: CentroidMethod,
}

const MANIFEST: &str = "manifest.txt";

impl CentroidModel {
    pub fn p(&self) -> usize {
        self.centroids[0].dim()
    }

    pub fn num_classes(&self) -> usize {
        self.centroids.len()
    }

    /// Distance from every centroid to the covariance estimate of `x`.
    pub fn distances(&self, x: &DataMatrix) -> Result<Vec<f64>> {
        check_same_dim(self.p(), x.p())?;
        check_same_dim(self.n, x.n())?;
        match self.method {
            CentroidMethod::Rmt => {
                let chat = scm(x)?;
                self.centroids.iter().map(|g| rmt_dist2(g, &chat, x.n())).collect()
            }
            CentroidMethod::ClassicalScm => {
                let c = scm(x)?;
                self.centroids.iter().map(|g| fisher_dist2(g, &c)).collect()
            }
            CentroidMethod::ClassicalLw => {
                let c = lw_linear(x)?.estimate;
                self.centroids.iter().map(|g| fisher_dist2(g, &c)).collect()
            }
        }
    }

    /// Writes `manifest.txt` and one `centroid_<z>.csv` per class into `dir`.
    pub fn save(&self, dir: &Path, header: Option<&str>) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut manifest = String::new();
        if let Some(h) = header {
            for line in h.lines() {
                manifest.push_str(&format!("# {line}\n"));
            }
        }
        manifest.push_str(&format!(
            "method={}\np={}\nn={}\nz={}\n",
            self.method,
            self.p(),
            self.n,
            self.num_classes()
        ));
        fs::write(dir.join(MANIFEST), manifest)?;
        for (i, g) in self.centroids.iter().enumerate() {
            write_matrix_csv(&dir.join(format!("centroid_{}.csv", i + 1)), g.as_matrix(), header)?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path)?;
        let fail = |msg: String| Error::Parse { path: path.clone(), msg };
        let mut method = None;
        let (mut p, mut n, mut z) = (None, None, None);
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let (k, v) = line.split_once('=').ok_or_else(|| fail(format!("expected key=value, got '{line}'")))?;
            let num = || v.trim().parse::<usize>().map_err(|e| fail(format!("{k}: {e}")));
            match k.trim() {
                "method" => method = Some(v.trim().parse::<CentroidMethod>().map_err(|e| fail(e.to_string()))?),
                "p" => p = Some(num()?),
                "n" => n = Some(num()?),
                "z" => z = Some(num()?),
                other => return Err(fail(format!("unknown key '{other}'"))),
            }
        }
        let (Some(method), Some(p), Some(n), Some(z)) = (method, p, n, z) else {
            return Err(fail("manifest needs method, p, n and z".into()));
        };
        if z == 0 {
            return Err(fail("model has no classes".into()));
        }
        let centroids = (1..=z)
            .map(|i| {
                let g = read_spd_csv(&dir.join(format!("centroid_{i}.csv")))?;
                check_same_dim(p, g.dim())?;
                Ok(g)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CentroidModel { centroids, n, method })
    }
}

/// One centroid per class `1..=Z`; every class must be non-empty.
pub fn nc_fit(train: &LabeledSet, method: CentroidMethod, init: &MeanInit, cfg: &DescentConfig) -> Result<CentroidModel> {
    let z = train.num_classes();
    let (p, n) = (train.items[0].p(), train.items[0].n());
    if method == CentroidMethod::Rmt {
        check_aspect(p, n)?;
    }
    let centroids = (1..=z)
        .map(|class| {
            let xs = train.class(class);
            if xs.is_empty() {
                return Err(Error::invalid(format!("class {class} has no training items")));
            }
            let g = match method {
                CentroidMethod::Rmt => rmt_mean(&xs, init, cfg)?.0,
                CentroidMethod::ClassicalScm => {
                    let cs: Vec<_> = xs.iter().map(scm).collect::<Result<_>>()?;
                    classical_mean(&cs, None, cfg)?.0
                }
                CentroidMethod::ClassicalLw => {
                    let cs: Vec<_> = xs.iter().map(|x| lw_linear(x).map(|l| l.estimate)).collect::<Result<_>>()?;
                    classical_mean(&cs, None, cfg)?.0
                }
            };
            Ok(g)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CentroidModel { centroids, n, method })
}

/// Index (1-based) of the smallest value; ties go to the lowest index.
fn argmin(d: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in d.iter().enumerate().skip(1) {
        if v < d[best] || (d[best].is_nan() && !v.is_nan()) {
            best = i;
        }
    }
    best + 1
}

/// Class of `x` under the nearest-centroid rule.
pub fn nc_predict(model: &CentroidModel, x: &DataMatrix) -> Result<usize> {
    Ok(argmin(&model.distances(x)?))
}

/// Which restart K-means keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RestartSelect {
    /// Largest inertia.
    #[default]
    Max,
    /// Smallest inertia, as in conventional K-means.
    Min,
}

impl FromStr for RestartSelect {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(RestartSelect::Max),
            "min" => Ok(RestartSelect::Min),
            other => Err(Error::invalid(format!("unknown restart selection '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct KMeansConfig {
    pub restarts: usize,
    pub max_iters: usize,
    /// Stop once the fraction of changed labels is at most this.
    pub label_tol: f64,
    pub select: RestartSelect,
    /// Settings for each centroid update.
    pub descent: DescentConfig,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig {
            restarts: 5,
            max_iters: 100,
            label_tol: 0.0,
            select: RestartSelect::default(),
            descent: DescentConfig::for_mean(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct KMeansRun {
    pub labels: Vec<usize>,
    pub centroids: Vec<SpdMatrix>,
    /// `Σₖ δ̂²(Ĝ^{(yₖ)}, Ĉₖ)`.
    pub inertia: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub runs: Vec<KMeansRun>,
    pub chosen: usize,
}

impl KMeansFit {
    pub fn best(&self) -> &KMeansRun {
        &self.runs[self.chosen]
    }

    pub fn labels(&self) -> &[usize] {
        &self.best().labels
    }

    pub fn centroids(&self) -> &[SpdMatrix] {
        &self.best().centroids
    }

    pub fn inertia(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.inertia).collect()
    }
}

/// `Z` distinct item indices per restart, from seed-derived streams.
pub fn init_indices(k: usize, z: usize, restarts: usize, seed: u64) -> Vec<Vec<usize>> {
    (0..restarts)
        .map(|m| sample(&mut stream_rng(seed, &[m as u64]), k, z).into_vec())
        .collect()
}

pub fn kmeans_fit(items: &[DataMatrix], z: usize, cfg: &KMeansConfig, seed: u64) -> Result<KMeansFit> {
    if z == 0 || z > items.len() {
        return Err(Error::invalid(format!("cannot form {z} clusters from {} items", items.len())));
    }
    let inits = init_indices(items.len(), z, cfg.restarts.max(1), seed);
    kmeans_fit_with_inits(items, z, &inits, cfg)
}

/// K-means where restart `m` starts from the SCMs of `inits[m]`.
pub fn kmeans_fit_with_inits(items: &[DataMatrix], z: usize, inits: &[Vec<usize>], cfg: &KMeansConfig) -> Result<KMeansFit> {
    let first = items.first().ok_or_else(|| Error::invalid("no items to cluster"))?;
    let (p, n) = (first.p(), first.n());
    for x in items {
        check_same_dim(p, x.p())?;
        check_same_dim(n, x.n())?;
    }
    check_aspect(p, n)?;
    if z == 0 || z > items.len() {
        return Err(Error::invalid(format!("cannot form {z} clusters from {} items", items.len())));
    }
    for init in inits {
        if init.len() != z || init.iter().any(|&i| i >= items.len()) {
            return Err(Error::invalid("initial indices must pick Z items"));
        }
    }
    if inits.is_empty() {
        return Err(Error::invalid("at least one restart is needed"));
    }
    let chats: Vec<_> = items.iter().map(scm).collect::<Result<_>>()?;
    let runs = inits
        .par_iter()
        .map(|init| kmeans_run(&chats, n, init, cfg))
        .collect::<Result<Vec<_>>>()?;
    let key = |r: &KMeansRun| match cfg.select {
        RestartSelect::Max => r.inertia,
        RestartSelect::Min => -r.inertia,
    };
    // first restart wins ties
    let mut chosen = 0;
    for (m, r) in runs.iter().enumerate() {
        if key(r) > key(&runs[chosen]) {
            chosen = m;
        }
    }
    Ok(KMeansFit { runs, chosen })
}

/// Nearest centroid and its distance for every item.
pub(crate) fn assign(chats: &[SpdMatrix], n: usize, centroids: &[SpdMatrix]) -> Result<(Vec<usize>, Vec<f64>)> {
    let rows = chats
        .par_iter()
        .map(|c| {
            let d = centroids.iter().map(|g| rmt_dist2(g, c, n)).collect::<Result<Vec<_>>>()?;
            let z = argmin(&d);
            Ok((z, d[z - 1]))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(rows.into_iter().unzip())
}

/// Gives every empty cluster the item farthest from its own centroid.
fn reseed_empty(chats: &[SpdMatrix], labels: &mut [usize], dist: &mut [f64], centroids: &mut [SpdMatrix]) {
    for z in 1..=centroids.len() {
        if labels.contains(&z) {
            continue;
        }
        let far = (0..labels.len())
            .max_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a)))
            .expect("items exist");
        labels[far] = z;
        dist[far] = f64::NEG_INFINITY;
        centroids[z - 1] = chats[far].clone();
    }
}

fn kmeans_run(chats: &[SpdMatrix], n: usize, init: &[usize], cfg: &KMeansConfig) -> Result<KMeansRun> {
    let mut centroids: Vec<_> = init.iter().map(|&i| chats[i].clone()).collect();
    let (mut labels, mut dist) = assign(chats, n, &centroids)?;
    reseed_empty(chats, &mut labels, &mut dist, &mut centroids);
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        iterations += 1;
        for (zi, g) in centroids.iter_mut().enumerate() {
            let members: Vec<_> = chats.iter().zip(&labels).filter(|(_, &l)| l == zi + 1).map(|(c, _)| c.clone()).collect();
            *g = rmt_mean_of_scms(&members, n, g.clone(), &cfg.descent)?.0;
        }
        let (mut next, mut d) = assign(chats, n, &centroids)?;
        reseed_empty(chats, &mut next, &mut d, &mut centroids);
        let changed = next.iter().zip(&labels).filter(|(a, b)| a != b).count();
        labels = next;
        if changed as f64 / chats.len() as f64 <= cfg.label_tol {
            break;
        }
    }
    // summed in sorted order so item order cannot change the last bits
    let mut terms = labels
        .iter()
        .zip(chats)
        .map(|(&l, c)| rmt_dist2(&centroids[l - 1], c, n))
        .collect::<Result<Vec<f64>>>()?;
    terms.sort_by(f64::total_cmp);
    let inertia = terms.iter().sum();
    Ok(KMeansRun { labels, centroids, inertia, iterations })
}

/// Fraction of agreeing labels under the best relabelling of `pred`.
/// Both label sets live in `1..=z`, `z ≤ 8`.
pub fn aligned_accuracy(truth: &[usize], pred: &[usize], z: usize) -> Result<f64> {
    if truth.len() != pred.len() || truth.is_empty() {
        return Err(Error::invalid("label vectors must be non-empty and of equal length"));
    }
    if z == 0 || z > 8 {
        return Err(Error::invalid("label alignment supports 1 to 8 classes"));
    }
    let mut counts = vec![vec![0usize; z]; z];
    for (&t, &p) in truth.iter().zip(pred) {
        if t == 0 || t > z || p == 0 || p > z {
            return Err(Error::invalid(format!("label outside 1..={z}")));
        }
        counts[p - 1][t - 1] += 1;
    }
    let mut perm: Vec<usize> = (0..z).collect();
    let mut best = 0;
    permute(&mut perm, 0, &mut |p| {
        let hits: usize = p.iter().enumerate().map(|(i, &j)| counts[i][j]).sum();
        best = best.max(hits);
    });
    Ok(best as f64 / truth.len() as f64)
}

fn permute(v: &mut [usize], k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == v.len() {
        visit(v);
        return;
    }
    for i in k..v.len() {
        v.swap(k, i);
        permute(v, k + 1, visit);
        v.swap(k, i);
    }
}
