//! Timing and error sweeps behind the `bench`, `amm`, `attn-compare` and
//! `gen` commands. Everything except wall-clock fields is a pure function of
//! the seed.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;

use crate::causal::{
    causal_exact_poly_attention, causal_polysketch_attention, lt_multiply_blocked, lt_multiply_naive, EXACT_CAUSAL_CAP,
    NAIVE_CAP,
};
use crate::error::{Error, Result};
use crate::io::{write_csv, write_pskm};
use crate::matrix::{relative_frobenius_error, Element, Matrix, Precision};
use crate::rng::{self, derive_seed};
use crate::sketch::{amm_relative_error, sample_sketch, AMM_MAX_DIM, AMM_MAX_ROWS};

/// Column order of [`BenchRecord`] CSV output.
pub const BENCH_HEADER: &str = "mechanism,n,h,r,p,b,local,seed,wall_time_us,us_per_token,rel_error";
/// Column order of AMM sweep CSV output.
pub const AMM_HEADER: &str = "n,h,p,r,trial,seed,rel_error,median_rel_error";
/// Largest sequence length accepted by the linear-time mechanisms.
pub const BENCH_MAX_N: usize = 1 << 17;
pub const BENCH_MAX_H: usize = 1024;
pub const BENCH_MAX_R: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mechanism {
    ExactPolyCausal,
    PolysketchCausal,
    LtNaive,
    LtBlocked,
}

impl Mechanism {
    pub const NAMES: [&'static str; 4] = ["exact-poly-causal", "polysketch-causal", "lt-naive", "lt-blocked"];

    pub fn cap(self) -> usize {
        match self {
            Mechanism::ExactPolyCausal => EXACT_CAUSAL_CAP,
            Mechanism::LtNaive => NAIVE_CAP,
            Mechanism::PolysketchCausal | Mechanism::LtBlocked => BENCH_MAX_N,
        }
    }
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(Self::NAMES[*self as usize])
    }
}

impl FromStr for Mechanism {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "exact-poly-causal" => Mechanism::ExactPolyCausal,
            "polysketch-causal" => Mechanism::PolysketchCausal,
            "lt-naive" => Mechanism::LtNaive,
            "lt-blocked" => Mechanism::LtBlocked,
            other => return Err(Error::invalid(format!("unknown mechanism {other:?}"))),
        })
    }
}

/// One CSV row of a timing or accuracy measurement.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRecord {
    pub mechanism: String,
    pub n: usize,
    pub h: usize,
    pub r: usize,
    pub p: u32,
    pub b: usize,
    pub local: bool,
    pub seed: u64,
    pub wall_time_us: f64,
    pub us_per_token: f64,
    pub rel_error: Option<f64>,
}

impl BenchRecord {
    fn timed(mechanism: &str, spec: &BenchSpec, n: usize, wall_time_us: f64) -> Self {
        BenchRecord {
            mechanism: mechanism.to_string(),
            n,
            h: spec.h,
            r: spec.r,
            p: spec.p,
            b: spec.block,
            local: spec.local,
            seed: spec.seed,
            wall_time_us,
            us_per_token: wall_time_us / n as f64,
            rel_error: None,
        }
    }
}

pub fn write_bench_csv<W: std::io::Write>(w: W, records: &[BenchRecord]) -> Result<()> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    out.write_record(BENCH_HEADER.split(','))?;
    for rec in records {
        out.write_record([
            rec.mechanism.clone(),
            rec.n.to_string(),
            rec.h.to_string(),
            rec.r.to_string(),
            rec.p.to_string(),
            rec.b.to_string(),
            rec.local.to_string(),
            rec.seed.to_string(),
            format!("{:.3}", rec.wall_time_us),
            format!("{:.6}", rec.us_per_token),
            rec.rel_error.map(|e| format!("{e:e}")).unwrap_or_default(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct BenchSpec {
    pub mechanism: Mechanism,
    pub n_list: Vec<usize>,
    pub h: usize,
    pub r: usize,
    pub p: u32,
    pub block: usize,
    pub local: bool,
    pub reps: usize,
    pub seed: u64,
}

impl BenchSpec {
    /// Rejects the whole sweep up front if any configuration is over a cap.
    pub fn validate(&self) -> Result<()> {
        if self.n_list.is_empty() {
            return Err(Error::invalid("n-list is empty"));
        }
        if self.reps == 0 {
            return Err(Error::invalid("reps must be at least 1"));
        }
        if self.h == 0 || self.r == 0 || self.block == 0 {
            return Err(Error::invalid("h, r and block must be positive"));
        }
        crate::sketch::half_degree(self.p)?;
        let cap = self.mechanism.cap();
        for &n in &self.n_list {
            if n == 0 {
                return Err(Error::invalid("n must be positive"));
            }
            if n > cap {
                return Err(Error::CapExceeded { what: "n", value: n, cap });
            }
        }
        if self.h > BENCH_MAX_H {
            return Err(Error::CapExceeded { what: "h", value: self.h, cap: BENCH_MAX_H });
        }
        if self.r > BENCH_MAX_R {
            return Err(Error::CapExceeded { what: "r", value: self.r, cap: BENCH_MAX_R });
        }
        Ok(())
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Median wall time in microseconds over `reps` runs after one warm-up run.
fn time_median<F: FnMut() -> Result<()>>(reps: usize, mut f: F) -> Result<f64> {
    f()?;
    let mut times = Vec::with_capacity(reps);
    for _ in 0..reps {
        let start = Instant::now();
        f()?;
        times.push(start.elapsed().as_secs_f64() * 1e6);
    }
    Ok(median(times))
}

/// Runs one timing sweep. The lt mechanisms multiply `lt(A·Bᵀ)·C` with
/// `A, B` of width `r` and `C` of width `h`; `p` is ignored for them.
pub fn run_bench(spec: &BenchSpec) -> Result<Vec<BenchRecord>> {
    spec.validate()?;
    let tree = match spec.mechanism {
        Mechanism::PolysketchCausal => Some(sample_sketch(spec.h, spec.r, spec.p, derive_seed(spec.seed, 0))?),
        _ => None,
    };
    let mut records = Vec::with_capacity(spec.n_list.len());
    for &n in &spec.n_list {
        let data = |key: u64, cols: usize| -> Matrix<f64> { rng::gaussian(n, cols, derive_seed(spec.seed, key)) };
        let wall = match spec.mechanism {
            Mechanism::ExactPolyCausal | Mechanism::PolysketchCausal => {
                let q: Matrix<f64> = rng::unit_rows(n, spec.h, derive_seed(spec.seed, 1));
                let k: Matrix<f64> = rng::unit_rows(n, spec.h, derive_seed(spec.seed, 2));
                let v = data(3, spec.h);
                match &tree {
                    Some(tree) => time_median(spec.reps, || {
                        causal_polysketch_attention(&q, &k, &v, tree, spec.block, spec.local).map(drop)
                    })?,
                    None => time_median(spec.reps, || causal_exact_poly_attention(&q, &k, &v, spec.p).map(drop))?,
                }
            }
            Mechanism::LtNaive | Mechanism::LtBlocked => {
                let a = data(4, spec.r);
                let b = data(5, spec.r);
                let c = data(6, spec.h);
                if spec.mechanism == Mechanism::LtNaive {
                    time_median(spec.reps, || lt_multiply_naive(&a, &b, &c).map(drop))?
                } else {
                    time_median(spec.reps, || lt_multiply_blocked(&a, &b, &c, spec.block).map(drop))?
                }
            }
        };
        records.push(BenchRecord::timed(&spec.mechanism.to_string(), spec, n, wall));
    }
    Ok(records)
}

#[derive(Debug, Clone)]
pub struct AmmSpec {
    pub n: usize,
    pub h: usize,
    pub p: u32,
    pub r_list: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    pub zero_input: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AmmRecord {
    pub n: usize,
    pub h: usize,
    pub p: u32,
    pub r: usize,
    pub trial: usize,
    pub seed: u64,
    pub rel_error: f64,
    pub median_rel_error: f64,
}

/// AMM sweep over unit-norm rows. Trial `t` uses the same `Q, K` for every
/// `r` and an independent sketch per `(r, t)`.
pub fn run_amm(spec: &AmmSpec) -> Result<Vec<AmmRecord>> {
    if spec.r_list.is_empty() || spec.trials == 0 {
        return Err(Error::invalid("r-list and trials must be non-empty"));
    }
    if spec.n == 0 || spec.h == 0 || spec.r_list.contains(&0) {
        return Err(Error::invalid("n, h and r must be positive"));
    }
    for (what, value, cap) in [
        ("n", spec.n, AMM_MAX_ROWS),
        ("h", spec.h, AMM_MAX_DIM),
        ("r", spec.r_list.iter().copied().max().unwrap_or(0), BENCH_MAX_R),
    ] {
        if value > cap {
            return Err(Error::CapExceeded { what, value, cap });
        }
    }
    crate::sketch::half_degree(spec.p)?;
    let mut out = Vec::new();
    for &r in &spec.r_list {
        let mut rows = Vec::with_capacity(spec.trials);
        for trial in 0..spec.trials {
            let trial_seed = derive_seed(spec.seed, trial as u64);
            let (q, k) = if spec.zero_input {
                (Matrix::<f64>::zeros(spec.n, spec.h), Matrix::<f64>::zeros(spec.n, spec.h))
            } else {
                (
                    rng::unit_rows(spec.n, spec.h, derive_seed(trial_seed, 1)),
                    rng::unit_rows(spec.n, spec.h, derive_seed(trial_seed, 2)),
                )
            };
            let sketch_seed = derive_seed(trial_seed, 3 + ((r as u64) << 8));
            let tree = sample_sketch(spec.h, r, spec.p, sketch_seed)?;
            rows.push(AmmRecord {
                n: spec.n,
                h: spec.h,
                p: spec.p,
                r,
                trial,
                seed: sketch_seed,
                rel_error: amm_relative_error(&q, &k, &tree, spec.p)?,
                median_rel_error: 0.0,
            });
        }
        let m = median(rows.iter().map(|x| x.rel_error).collect());
        rows.iter_mut().for_each(|x| x.median_rel_error = m);
        out.extend(rows);
    }
    Ok(out)
}

pub fn write_amm_csv<W: std::io::Write>(w: W, records: &[AmmRecord]) -> Result<()> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    out.write_record(AMM_HEADER.split(','))?;
    for rec in records {
        out.write_record([
            rec.n.to_string(),
            rec.h.to_string(),
            rec.p.to_string(),
            rec.r.to_string(),
            rec.trial.to_string(),
            rec.seed.to_string(),
            format!("{:e}", rec.rel_error),
            format!("{:e}", rec.median_rel_error),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct CompareSpec {
    pub p: u32,
    pub n: usize,
    pub h: usize,
    pub r: usize,
    pub block: usize,
    pub local: bool,
    pub seed: u64,
}

/// Relative Frobenius error of causal sketched attention against the exact
/// causal oracle, on unit-norm queries and keys. Uses the same inputs as
/// `bench --mechanism polysketch-causal` with the same seed.
pub fn attn_compare(spec: &CompareSpec) -> Result<BenchRecord> {
    if spec.n > EXACT_CAUSAL_CAP {
        return Err(Error::CapExceeded { what: "n", value: spec.n, cap: EXACT_CAUSAL_CAP });
    }
    if spec.h > BENCH_MAX_H {
        return Err(Error::CapExceeded { what: "h", value: spec.h, cap: BENCH_MAX_H });
    }
    if spec.r > BENCH_MAX_R {
        return Err(Error::CapExceeded { what: "r", value: spec.r, cap: BENCH_MAX_R });
    }
    if spec.n == 0 || spec.h == 0 || spec.r == 0 || spec.block == 0 {
        return Err(Error::invalid("n, h, r and b must be positive"));
    }
    let tree = sample_sketch(spec.h, spec.r, spec.p, derive_seed(spec.seed, 0))?;
    let q: Matrix<f64> = rng::unit_rows(spec.n, spec.h, derive_seed(spec.seed, 1));
    let k: Matrix<f64> = rng::unit_rows(spec.n, spec.h, derive_seed(spec.seed, 2));
    let v: Matrix<f64> = rng::gaussian(spec.n, spec.h, derive_seed(spec.seed, 3));
    let start = Instant::now();
    let got = causal_polysketch_attention(&q, &k, &v, &tree, spec.block, spec.local)?;
    let wall = start.elapsed().as_secs_f64() * 1e6;
    let want = causal_exact_poly_attention(&q, &k, &v, spec.p)?;
    Ok(BenchRecord {
        mechanism: Mechanism::PolysketchCausal.to_string(),
        n: spec.n,
        h: spec.h,
        r: spec.r,
        p: spec.p,
        b: spec.block,
        local: spec.local,
        seed: spec.seed,
        wall_time_us: wall,
        us_per_token: wall / spec.n as f64,
        rel_error: Some(relative_frobenius_error(&got, &want)?),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Distribution {
    Gaussian,
    UnitRows,
}

impl FromStr for Distribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Distribution::Gaussian),
            "unit-rows" => Ok(Distribution::UnitRows),
            other => Err(Error::invalid(format!("unknown distribution {other:?}"))),
        }
    }
}

/// Largest element count written by `gen`.
pub const GEN_MAX_ELEMENTS: usize = 1 << 26;

pub fn generate<T: Element>(rows: usize, cols: usize, dist: Distribution, seed: u64) -> Result<Matrix<T>> {
    let value = rows.saturating_mul(cols);
    if value > GEN_MAX_ELEMENTS {
        return Err(Error::CapExceeded { what: "rows*cols", value, cap: GEN_MAX_ELEMENTS });
    }
    Ok(match dist {
        Distribution::Gaussian => rng::gaussian(rows, cols, seed),
        Distribution::UnitRows => rng::unit_rows(rows, cols, seed),
    })
}

/// Writes CSV when the path ends in `.csv`, PSKM otherwise.
pub fn write_matrix<T: Element>(path: &Path, m: &Matrix<T>) -> Result<()> {
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        write_csv(path, m)
    } else {
        write_pskm(path, m)
    }
}

pub fn gen_to_file(
    path: &Path,
    rows: usize,
    cols: usize,
    dist: Distribution,
    seed: u64,
    precision: Precision,
) -> Result<()> {
    match precision {
        Precision::F32 => write_matrix(path, &generate::<f32>(rows, cols, dist, seed)?),
        Precision::F64 => write_matrix(path, &generate::<f64>(rows, cols, dist, seed)?),
    }
}
