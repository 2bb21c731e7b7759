//! Pilot productions, virtual batches and non-conformity rates.
//!
//! Random numbers come from ChaCha8. Every draw `i` of a run uses its own
//! stream: the generator is keyed by `seed_from_u64(mix(seed, role))` and
//! positioned with `set_stream(i)`, so a draw never depends on how many
//! workers produced the others. `role` separates the pilot and virtual
//! draws of the two parts when a single user seed drives a whole run.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::contact::Assembler;
use crate::error::{invalid, Error, Result};
use crate::kinematics::{domain_contains, Case, Domain, Sdt};
use crate::signature::ModalSignature;

/// Stream roles used by [`part_seed`].
pub const ROLE_PILOT: u64 = 0;
pub const ROLE_VIRTUAL: u64 = 1;

/// Derives the key of one part's pilot or virtual draws from a run seed.
/// `part` is 1 or 2.
pub fn part_seed(seed: u64, part: u64, role: u64) -> u64 {
    // splitmix64 finaliser over the packed tag
    let mut z = seed ^ (part << 32 | role).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for draw `index` of the run keyed by `key`.
pub fn substream(key: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(index);
    rng
}

/// Mean signature of a simulated production: `lambda_i = mu0 / i`.
pub fn mother_shape(mu0: f64, m: usize) -> Result<ModalSignature> {
    if !(mu0 >= 0.0 && mu0.is_finite()) {
        return Err(invalid(format!("mu0 must be finite and non-negative, got {mu0}")));
    }
    if m == 0 {
        return Err(invalid("mother shape needs at least one coefficient"));
    }
    ModalSignature::new((1..=m).map(|i| mu0 / i as f64).collect())
}

/// Mean and covariance of the modal coefficients of a production.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    mu: DVector<f64>,
    cov: DMatrix<f64>,
    n: usize,
}

impl BatchStats {
    pub fn new(mu: DVector<f64>, cov: DMatrix<f64>, n: usize) -> Result<BatchStats> {
        let m = mu.len();
        if m == 0 || cov.nrows() != m || cov.ncols() != m {
            return Err(invalid(format!(
                "covariance must be {m}x{m}, got {}x{}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        if mu.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(invalid("batch statistics must be finite"));
        }
        let scale = cov.amax().max(f64::MIN_POSITIVE);
        for i in 0..m {
            for j in 0..i {
                if (cov[(i, j)] - cov[(j, i)]).abs() > 1e-12 * scale {
                    return Err(invalid(format!("covariance is not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(BatchStats { mu, cov, n })
    }

    /// Sample mean and covariance (divisor `n - 1`) of a set of signatures.
    pub fn from_samples(samples: &[ModalSignature]) -> Result<BatchStats> {
        let n = samples.len();
        if n < 2 {
            return Err(invalid(format!("covariance needs at least 2 samples, got {n}")));
        }
        let m = samples[0].len();
        if samples.iter().any(|s| s.len() != m) {
            return Err(invalid("samples have different lengths"));
        }
        let mut mu = DVector::zeros(m);
        for s in samples {
            mu += s.lambda();
        }
        mu /= n as f64;
        let mut cov = DMatrix::zeros(m, m);
        for s in samples {
            let d = s.lambda() - &mu;
            cov.ger(1.0, &d, &d, 1.0);
        }
        cov /= (n - 1) as f64;
        // exact symmetry, whatever the summation order did
        let cov = (&cov + cov.transpose()) * 0.5;
        BatchStats::new(mu, cov, n)
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn m(&self) -> usize {
        self.mu.len()
    }

    /// Size of the sample the statistics came from.
    pub fn n(&self) -> usize {
        self.n
    }
}

/// Draws `n` signatures with coefficient `i` (1-based) distributed as
/// `Normal(mother_i, (sigma0 / i)^2)`, and their sample statistics.
pub fn draw_pilot_batch(
    mother: &ModalSignature,
    sigma0: f64,
    n: usize,
    seed: u64,
) -> Result<(Vec<ModalSignature>, BatchStats)> {
    if !(sigma0 >= 0.0 && sigma0.is_finite()) {
        return Err(invalid(format!("sigma0 must be finite and non-negative, got {sigma0}")));
    }
    if n < 2 {
        return Err(invalid(format!("pilot batch needs n >= 2, got {n}")));
    }
    let m = mother.len();
    let samples: Vec<ModalSignature> = (0..n)
        .map(|k| {
            let mut rng = substream(seed, k as u64);
            let lambda = DVector::from_fn(m, |i, _| {
                let z: f64 = StandardNormal.sample(&mut rng);
                mother.lambda()[i] + sigma0 / (i + 1) as f64 * z
            });
            ModalSignature::from_vector(lambda)
        })
        .collect::<Result<_>>()?;
    let stats = BatchStats::from_samples(&samples)?;
    Ok((samples, stats))
}

/// `P sqrt(diag)` factor of a covariance matrix.
#[derive(Debug, Clone)]
pub struct CovarianceFactor {
    factor: DMatrix<f64>,
    mu: DVector<f64>,
    /// Eigenvalues below zero that were raised to zero.
    pub clamped: Vec<f64>,
}

impl CovarianceFactor {
    pub fn new(stats: &BatchStats) -> CovarianceFactor {
        let eig = SymmetricEigen::new(stats.cov.clone());
        let mut clamped = Vec::new();
        let roots = DVector::from_iterator(
            eig.eigenvalues.len(),
            eig.eigenvalues.iter().map(|&v| {
                if v < 0.0 {
                    clamped.push(v);
                    0.0
                } else {
                    v.sqrt()
                }
            }),
        );
        let mut factor = eig.eigenvectors;
        for (j, r) in roots.iter().enumerate() {
            factor.column_mut(j).scale_mut(*r);
        }
        CovarianceFactor {
            factor,
            mu: stats.mu.clone(),
            clamped,
        }
    }

    /// `P sqrt(C_diag) z + mu` for a standard normal vector `z`.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> DVector<f64> {
        let m = self.mu.len();
        let z = DVector::from_fn(m, |_, _| StandardNormal.sample(rng));
        &self.factor * z + &self.mu
    }
}

/// `count` virtual signatures following `stats`, draw `i` from substream `i`.
pub fn generate_virtual_batch(stats: &BatchStats, count: usize, seed: u64) -> Result<Vec<ModalSignature>> {
    if count == 0 {
        return Err(invalid("virtual batch size must be at least 1"));
    }
    let factor = CovarianceFactor::new(stats);
    (0..count)
        .map(|k| ModalSignature::from_vector(factor.sample(&mut substream(seed, k as u64))))
        .collect()
}

/// How parts of the two batches are put together.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Pairing {
    /// Assembly `i` uses part 1 `i` and part 2 `i`.
    #[default]
    Index,
    /// Every part 1 with every part 2.
    AllPairs,
}

impl std::str::FromStr for Pairing {
    type Err = Error;

    fn from_str(s: &str) -> Result<Pairing> {
        match s {
            "index" => Ok(Pairing::Index),
            "all-pairs" => Ok(Pairing::AllPairs),
            _ => Err(invalid(format!("unknown pairing `{s}` (expected index or all-pairs)"))),
        }
    }
}

impl std::fmt::Display for Pairing {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Pairing::Index => "index",
            Pairing::AllPairs => "all-pairs",
        })
    }
}

/// Outcome of one simulated assembly, torsors at the domain point.
#[derive(Debug, Clone, PartialEq)]
pub struct AssemblyRecord {
    pub part1: usize,
    pub part2: usize,
    /// `None` when the force axis misses every supporting facet.
    pub with_form: Option<Sdt>,
    pub rigid_only: Sdt,
    /// Distance to the closest domain face; `-inf` without stable contact.
    pub margin_with_form: f64,
    pub margin_rigid_only: f64,
}

impl AssemblyRecord {
    pub fn stable(&self) -> bool {
        self.with_form.is_some()
    }

    pub fn conform_with_form(&self) -> bool {
        self.margin_with_form >= 0.0
    }

    pub fn conform_rigid_only(&self) -> bool {
        self.margin_rigid_only >= 0.0
    }
}

/// Mean and covariance of reduced torsor components.
#[derive(Debug, Clone, PartialEq)]
pub struct SdtPopulation {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub count: usize,
}

impl SdtPopulation {
    fn of<'a>(case: Case, sdts: impl Iterator<Item = &'a Sdt>) -> SdtPopulation {
        let rows: Vec<DVector<f64>> = sdts.map(|s| DVector::from_vec(s.reduced(case))).collect();
        let d = case.dim();
        let count = rows.len();
        let mut mean = DVector::zeros(d);
        for r in &rows {
            mean += r;
        }
        if count > 0 {
            mean /= count as f64;
        }
        let mut cov = DMatrix::zeros(d, d);
        if count > 1 {
            for r in &rows {
                let e = r - &mean;
                cov.ger(1.0, &e, &e, 1.0);
            }
            cov /= (count - 1) as f64;
        }
        SdtPopulation { mean, cov, count }
    }
}

/// Non-conformity rates of a simulated production.
#[derive(Debug, Clone, PartialEq)]
pub struct NcrReport {
    pub case: Case,
    pub seed: u64,
    pub pairing: Pairing,
    pub records: Vec<AssemblyRecord>,
    pub ncr_with_form: f64,
    pub ncr_rigid_only: f64,
    /// Assemblies without a stable contact (counted non-conform).
    pub unstable: usize,
    pub with_form: SdtPopulation,
    pub rigid_only: SdtPopulation,
}

impl NcrReport {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Assembles the paired parts of two batches in parallel and tests every
/// resulting torsor against `domain`. Records keep the pairing order.
pub fn run_ncr(
    batch1: &[ModalSignature],
    batch2: &[ModalSignature],
    assembler: &Assembler<'_>,
    domain: &Domain,
    pairing: Pairing,
    seed: u64,
) -> Result<NcrReport> {
    if batch1.is_empty() || batch2.is_empty() {
        return Err(invalid("batches must not be empty"));
    }
    let pairs: Vec<(usize, usize)> = match pairing {
        Pairing::Index => {
            if batch1.len() != batch2.len() {
                return Err(invalid(format!(
                    "index pairing needs equal batch sizes, got {} and {}",
                    batch1.len(),
                    batch2.len()
                )));
            }
            (0..batch1.len()).map(|i| (i, i)).collect()
        }
        Pairing::AllPairs => (0..batch1.len())
            .flat_map(|i| (0..batch2.len()).map(move |j| (i, j)))
            .collect(),
    };
    let case = domain.case;
    let records: Vec<AssemblyRecord> = pairs
        .par_iter()
        .map(|&(i, j)| -> Result<AssemblyRecord> {
            match assembler.assemble(&batch1[i], &batch2[j]) {
                Ok(res) => {
                    let with_form = res.sdt_with_form.transport(domain.point);
                    let rigid_only = res.sdt_rigid_only.transport(domain.point);
                    Ok(AssemblyRecord {
                        part1: i,
                        part2: j,
                        margin_with_form: domain_contains(domain, &with_form)?.margin,
                        margin_rigid_only: domain_contains(domain, &rigid_only)?.margin,
                        with_form: Some(with_form),
                        rigid_only,
                    })
                }
                Err(Error::NoStableContact(_)) => {
                    let rigid_only = assembler.rigid_only(&batch1[i], &batch2[j])?.transport(domain.point);
                    Ok(AssemblyRecord {
                        part1: i,
                        part2: j,
                        with_form: None,
                        margin_with_form: f64::NEG_INFINITY,
                        margin_rigid_only: domain_contains(domain, &rigid_only)?.margin,
                        rigid_only,
                    })
                }
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let n = records.len() as f64;
    let out_form = records.iter().filter(|r| !r.conform_with_form()).count();
    let out_rigid = records.iter().filter(|r| !r.conform_rigid_only()).count();
    Ok(NcrReport {
        case,
        seed,
        pairing,
        ncr_with_form: out_form as f64 / n,
        ncr_rigid_only: out_rigid as f64 / n,
        unstable: records.iter().filter(|r| !r.stable()).count(),
        with_form: SdtPopulation::of(case, records.iter().filter_map(|r| r.with_form.as_ref())),
        rigid_only: SdtPopulation::of(case, records.iter().map(|r| &r.rigid_only)),
        records,
    })
}

/// Spread of a rate over repeated runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dispersion {
    pub runs: usize,
    pub mean: f64,
    /// Sample standard deviation across runs.
    pub std: f64,
    /// `sqrt(p (1 - p) / N)` at the mean rate.
    pub binomial: f64,
}

impl Dispersion {
    pub fn from_rates(rates: &[f64], n: usize) -> Result<Dispersion> {
        if rates.len() < 2 {
            return Err(invalid("dispersion needs at least 2 runs"));
        }
        if n == 0 {
            return Err(invalid("assembly count must be positive"));
        }
        let k = rates.len() as f64;
        // shifted by the first rate so equal runs give exactly zero
        let d: Vec<f64> = rates.iter().map(|r| r - rates[0]).collect();
        let sum: f64 = d.iter().sum();
        let mean = rates[0] + sum / k;
        let var = ((d.iter().map(|v| v * v).sum::<f64>() - sum * sum / k) / (k - 1.0)).max(0.0);
        Ok(Dispersion {
            runs: rates.len(),
            mean,
            std: var.sqrt(),
            binomial: binomial_std(mean, n),
        })
    }
}

/// Standard deviation of a rate `p` estimated from `n` trials.
pub fn binomial_std(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Dispersion of both rates across runs of equal size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NcrDispersion {
    pub with_form: Dispersion,
    pub rigid_only: Dispersion,
}

pub fn ncr_dispersion(reports: &[NcrReport]) -> Result<NcrDispersion> {
    let n = reports.first().map_or(0, |r| r.len());
    if reports.iter().any(|r| r.len() != n) {
        return Err(invalid("runs have different assembly counts"));
    }
    let with: Vec<f64> = reports.iter().map(|r| r.ncr_with_form).collect();
    let rigid: Vec<f64> = reports.iter().map(|r| r.ncr_rigid_only).collect();
    Ok(NcrDispersion {
        with_form: Dispersion::from_rates(&with, n)?,
        rigid_only: Dispersion::from_rates(&rigid, n)?,
    })
}

/// Per-assembly torsor components, margins and verdicts.
pub fn records_csv(report: &NcrReport) -> String {
    let comps = report.case.components();
    let mut s = String::from("assembly,part1,part2,stable");
    for prefix in ["with_form", "rigid_only"] {
        for c in comps {
            let _ = write!(s, ",{prefix}_{}", c.name());
        }
        let _ = write!(s, ",{prefix}_margin_mm,{prefix}_conform");
    }
    s.push('\n');
    for (k, r) in report.records.iter().enumerate() {
        let _ = write!(s, "{k},{},{},{}", r.part1, r.part2, r.stable());
        match &r.with_form {
            Some(sdt) => {
                for v in sdt.reduced(report.case) {
                    let _ = write!(s, ",{v:e}");
                }
                let _ = write!(s, ",{:e},{}", r.margin_with_form, r.conform_with_form());
            }
            None => {
                s.push_str(&",".repeat(comps.len()));
                s.push_str(",,false");
            }
        }
        for v in r.rigid_only.reduced(report.case) {
            let _ = write!(s, ",{v:e}");
        }
        let _ = writeln!(s, ",{:e},{}", r.margin_rigid_only, r.conform_rigid_only());
    }
    s
}

/// Mean torsor and covariance of both populations, for ellipse plots.
pub fn ellipse_csv(report: &NcrReport) -> String {
    let comps = report.case.components();
    let mut s = String::from("population,row");
    for c in comps {
        let _ = write!(s, ",{}", c.name());
    }
    s.push('\n');
    for (name, pop) in [("with_form", &report.with_form), ("rigid_only", &report.rigid_only)] {
        s.push_str(name);
        s.push_str(",mean");
        for v in pop.mean.iter() {
            let _ = write!(s, ",{v:e}");
        }
        s.push('\n');
        for (i, c) in comps.iter().enumerate() {
            let _ = write!(s, "{name},cov_{}", c.name());
            for v in pop.cov.row(i).iter() {
                let _ = write!(s, ",{v:e}");
            }
            s.push('\n');
        }
    }
    s
}

/// Human-readable report summary.
pub fn summary(report: &NcrReport) -> String {
    let comps = report.case.components();
    let mut s = String::new();
    let _ = writeln!(s, "assemblies: {} ({} pairing)", report.len(), report.pairing);
    let _ = writeln!(s, "seed: {}", report.seed);
    let _ = writeln!(s, "ncr_with_form: {:.4}", report.ncr_with_form);
    let _ = writeln!(s, "ncr_rigid_only: {:.4}", report.ncr_rigid_only);
    let _ = writeln!(s, "no_stable_contact: {}", report.unstable);
    for (name, pop) in [("with_form", &report.with_form), ("rigid_only", &report.rigid_only)] {
        let parts: Vec<String> = comps
            .iter()
            .zip(pop.mean.iter())
            .map(|(c, v)| format!("{}={v:.6e}", c.name()))
            .collect();
        let _ = writeln!(s, "mean_{name}: {}", parts.join(" "));
        let stds: Vec<String> = comps
            .iter()
            .enumerate()
            .map(|(i, c)| format!("{}={:.6e}", c.name(), pop.cov[(i, i)].max(0.0).sqrt()))
            .collect();
        let _ = writeln!(s, "std_{name}: {}", stds.join(" "));
    }
    let _ = writeln!(
        s,
        "binomial_std_with_form: {:.4}",
        binomial_std(report.ncr_with_form, report.len())
    );
    s
}
