//! Problem builders for the two shipped applications and file IO.
//!
//! - Compressed modes (CM): `min tr(XᵀHX) + μ‖X‖₁` on `St(n, r)` with `H` the
//!   periodic finite-difference discretization of `−½ d²/dx²`.
//! - Robust matrix completion (RMC): `min ‖P_Ω(X − A)‖₁` on `Fr(m, n, r)`.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::sync::Arc;

use nalgebra::DVector;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::convex::{BoundaryConvention, L1Norm};
use crate::geometry::{random_tangent, retract, tangent_project, Manifold, ManifoldPoint};
use crate::lagrangian::{AugLagEval, ProblemSpec, SmoothMap, SmoothObjective};
use crate::ralm::IterateRecord;
use crate::{Error, Mat, Result};

/// `f(X) = tr(XᵀHX)`.
#[derive(Debug, Clone)]
pub struct TraceQuadratic {
    pub h: Mat,
}

impl SmoothObjective for TraceQuadratic {
    fn value(&self, x: &Mat) -> f64 {
        x.dot(&(&self.h * x))
    }

    fn gradient(&self, x: &Mat) -> Mat {
        (&self.h * x) * 2.0
    }

    fn hess_vec(&self, _: &Mat, v: &Mat) -> Mat {
        (&self.h * v) * 2.0
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ZeroObjective;

impl SmoothObjective for ZeroObjective {
    fn value(&self, _: &Mat) -> f64 {
        0.0
    }

    fn gradient(&self, x: &Mat) -> Mat {
        Mat::zeros(x.nrows(), x.ncols())
    }

    fn hess_vec(&self, _: &Mat, v: &Mat) -> Mat {
        Mat::zeros(v.nrows(), v.ncols())
    }
}

/// `g(X) = X`.
#[derive(Debug, Clone, Copy)]
pub struct IdentityMap {
    pub rows: usize,
    pub cols: usize,
}

impl SmoothMap for IdentityMap {
    fn output_shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    fn value(&self, x: &Mat) -> Mat {
        x.clone()
    }

    fn jvp(&self, _: &Mat, v: &Mat) -> Mat {
        v.clone()
    }

    fn vjp(&self, _: &Mat, w: &Mat) -> Mat {
        w.clone()
    }

    fn weighted_hess_vec(&self, _: &Mat, _: &Mat, v: &Mat) -> Mat {
        Mat::zeros(v.nrows(), v.ncols())
    }
}

/// `g(X) = P_Ω(X − A)` with `Ω` stored as a 0/1 mask.
#[derive(Debug, Clone)]
pub struct MaskedResidual {
    pub a: Mat,
    pub mask: Mat,
}

impl SmoothMap for MaskedResidual {
    fn output_shape(&self) -> (usize, usize) {
        self.a.shape()
    }

    fn value(&self, x: &Mat) -> Mat {
        (x - &self.a).component_mul(&self.mask)
    }

    fn jvp(&self, _: &Mat, v: &Mat) -> Mat {
        v.component_mul(&self.mask)
    }

    fn vjp(&self, _: &Mat, w: &Mat) -> Mat {
        w.component_mul(&self.mask)
    }

    fn weighted_hess_vec(&self, _: &Mat, _: &Mat, v: &Mat) -> Mat {
        Mat::zeros(v.nrows(), v.ncols())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmInstance {
    pub n: usize,
    pub r: usize,
    pub mu: f64,
    pub len: f64,
    #[serde(skip)]
    pub h: Mat,
}

impl CmInstance {
    pub fn new(n: usize, r: usize, mu: f64, len: f64) -> Result<Self> {
        if n < 3 {
            return Err(Error::param("n", format!("need n >= 3, got {n}")));
        }
        if r == 0 || r > n {
            return Err(Error::param(
                "r",
                format!("need 1 <= r <= n = {n}, got {r}"),
            ));
        }
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::param("mu", format!("must be positive, got {mu}")));
        }
        if !(len > 0.0 && len.is_finite()) {
            return Err(Error::param("len", format!("must be positive, got {len}")));
        }
        Ok(CmInstance {
            n,
            r,
            mu,
            len,
            h: cm_hamiltonian(n, len),
        })
    }

    pub fn problem(&self) -> Result<ProblemSpec> {
        Ok(ProblemSpec {
            manifold: Manifold::Stiefel {
                n: self.n,
                r: self.r,
            },
            objective: Arc::new(TraceQuadratic { h: self.h.clone() }),
            constraint: Arc::new(IdentityMap {
                rows: self.n,
                cols: self.r,
            }),
            theta: Arc::new(L1Norm::new(self.mu)?),
        })
    }

    /// Seeded start: Q factor of a Gaussian matrix.
    pub fn start(&self, seed: u64) -> ManifoldPoint {
        Manifold::Stiefel {
            n: self.n,
            r: self.r,
        }
        .random_point(seed)
    }
}

/// Periodic stencil `H_ii = 1/h²`, `H_{i,i±1} = −1/(2h²)`, `h = len/n`.
pub fn cm_hamiltonian(n: usize, len: f64) -> Mat {
    let h = len / n as f64;
    let d = 1.0 / (h * h);
    let mut m = Mat::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = d;
        m[(i, (i + 1) % n)] -= 0.5 * d;
        m[(i, (i + n - 1) % n)] -= 0.5 * d;
    }
    m
}

pub fn build_cm(n: usize, r: usize, mu: f64, len: f64) -> Result<ProblemSpec> {
    CmInstance::new(n, r, mu, len)?.problem()
}

/// The analytic stationary pair of the `n = 4, r = 2, len = 2` instance:
/// `X̄ = [0,0,s,s; s,s,0,0]ᵀ` with `s = 1/√2`, `ȳ = μ·[0,0,1,1; 1,1,0,0]ᵀ`.
pub fn cm_reference_pair(mu: f64) -> (ManifoldPoint, Mat) {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let x = Mat::from_row_slice(4, 2, &[0.0, s, 0.0, s, s, 0.0, s, 0.0]);
    let y = Mat::from_row_slice(4, 2, &[0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0]) * mu;
    let x = ManifoldPoint::stiefel(x).expect("orthonormal by construction");
    (x, y)
}

#[derive(Debug, Clone)]
pub struct RmcInstance {
    pub a: Mat,
    /// 0/1 observation mask.
    pub mask: Mat,
    pub r: usize,
    pub mu: f64,
}

impl RmcInstance {
    pub fn new(a: Mat, mask: Mat, r: usize, mu: f64) -> Result<Self> {
        if a.shape() != mask.shape() {
            return Err(Error::ShapeMismatch {
                context: "observation mask",
                expected: a.shape(),
                found: mask.shape(),
            });
        }
        if mask.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::param("mask", "entries must be 0 or 1"));
        }
        if mask.iter().all(|&v| v == 0.0) {
            return Err(Error::param("omega", "observation set is empty"));
        }
        let (m, n) = a.shape();
        if r == 0 || r > m.min(n) {
            return Err(Error::param(
                "r",
                format!("need 1 <= r <= {}, got {r}", m.min(n)),
            ));
        }
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::param("mu", format!("must be positive, got {mu}")));
        }
        Ok(RmcInstance { a, mask, r, mu })
    }

    pub fn manifold(&self) -> Manifold {
        Manifold::FixedRank {
            m: self.a.nrows(),
            n: self.a.ncols(),
            r: self.r,
        }
    }

    pub fn problem(&self) -> Result<ProblemSpec> {
        Ok(ProblemSpec {
            manifold: self.manifold(),
            objective: Arc::new(ZeroObjective),
            constraint: Arc::new(MaskedResidual {
                a: self.a.clone(),
                mask: self.mask.clone(),
            }),
            theta: Arc::new(L1Norm::new(self.mu)?),
        })
    }

    pub fn observed(&self) -> usize {
        self.mask.iter().filter(|&&v| v == 1.0).count()
    }
}

pub fn build_rmc(a: Mat, mask: Mat, r: usize, mu: f64) -> Result<ProblemSpec> {
    RmcInstance::new(a, mask, r, mu)?.problem()
}

/// The 5×5 rank-3 example with outliers `E_out` in the lower-right 2×2 block.
#[derive(Debug, Clone)]
pub struct RmcFixture {
    pub instance: RmcInstance,
    /// Low-rank part `A_ex = U S Vᵀ`.
    pub a_ex: ManifoldPoint,
    /// Full-size outlier matrix.
    pub e_out: Mat,
    /// A multiplier making `(A_ex, y)` stationary: `y = −sgn(E_out)` on the
    /// outliers (since `g(A_ex) = −E_out`), zero elsewhere.
    pub multiplier: Mat,
}

pub fn rmc_reference_fixture(e_block: [[f64; 2]; 2]) -> RmcFixture {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    // Columns ordered by decreasing singular value (S = diag(3, 2, 1)).
    let u = Mat::from_column_slice(
        5,
        3,
        &[
            0.0, s, s, 0.0, 0.0, //
            0.0, -s, s, 0.0, 0.0, //
            1.0, 0.0, 0.0, 0.0, 0.0,
        ],
    );
    let v = Mat::from_column_slice(
        5,
        3,
        &[
            0.0, 0.8, 0.6, 0.0, 0.0, //
            0.0, 0.6, -0.8, 0.0, 0.0, //
            1.0, 0.0, 0.0, 0.0, 0.0,
        ],
    );
    let sigma = DVector::from_vec(vec![3.0, 2.0, 1.0]);
    let a_ex = ManifoldPoint::fixed_rank(u, sigma, v).expect("orthonormal factors");
    let mut e_out = Mat::zeros(5, 5);
    for (i, row) in e_block.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            e_out[(3 + i, 3 + j)] = v;
        }
    }
    let a = a_ex.ambient() + &e_out;
    let multiplier = e_out.map(|v| if v == 0.0 { 0.0 } else { -v.signum() });
    let instance =
        RmcInstance::new(a, Mat::from_element(5, 5, 1.0), 3, 1.0).expect("fixture is well formed");
    RmcFixture {
        instance,
        a_ex,
        e_out,
        multiplier,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RmcGenerator {
    pub m: usize,
    pub n: usize,
    pub r: usize,
    /// Fraction of observed entries.
    pub sampling: f64,
    /// Fraction of observed entries hit by an outlier.
    pub outlier_density: f64,
    pub outlier_magnitude: f64,
}

/// Synthetic RMC data: ground truth, corrupted observation and mask.
#[derive(Debug, Clone)]
pub struct RmcData {
    pub truth: Mat,
    pub a: Mat,
    pub mask: Mat,
}

impl RmcGenerator {
    pub fn generate(&self, seed: u64) -> Result<RmcData> {
        let RmcGenerator {
            m,
            n,
            r,
            sampling,
            outlier_density,
            outlier_magnitude,
        } = *self;
        if r == 0 || r > m.min(n) {
            return Err(Error::param(
                "r",
                format!("need 1 <= r <= {}, got {r}", m.min(n)),
            ));
        }
        if !(sampling > 0.0 && sampling <= 1.0) {
            return Err(Error::param("sampling", "must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&outlier_density) {
            return Err(Error::param("outlier_density", "must lie in [0, 1]"));
        }
        if !(outlier_magnitude >= 0.0 && outlier_magnitude.is_finite()) {
            return Err(Error::param("outlier_magnitude", "must be nonnegative"));
        }
        // Orthonormal factors give entries of order 1/sqrt(mn/r); rescale so
        // the truth has unit-order entries and outliers are comparable in size.
        let truth = Manifold::FixedRank { m, n, r }.random_point(seed).ambient()
            * ((m * n) as f64 / r as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let total = m * n;
        let observed = ((sampling * total as f64).round() as usize).clamp(1, total);
        let mut mask = Mat::zeros(m, n);
        let picks = sample(&mut rng, total, observed).into_vec();
        for &k in &picks {
            mask[(k % m, k / m)] = 1.0;
        }
        let mut a = truth.component_mul(&mask);
        let outliers = (outlier_density * observed as f64).round() as usize;
        for &k in sample(&mut rng, observed, outliers)
            .iter()
            .map(|i| &picks[i])
        {
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            a[(k % m, k / m)] += sign * outlier_magnitude;
        }
        Ok(RmcData { truth, a, mask })
    }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

/// Reads a headerless comma-separated dense matrix.
pub fn load_csv(path: &Path) -> Result<Mat> {
    read_csv(File::open(path)?, path)
}

pub fn read_csv<R: Read>(reader: R, path: &Path) -> Result<Mat> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        let mut row = Vec::with_capacity(rec.len());
        for (col, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                parse_err(
                    path,
                    line,
                    format!("column {}: cannot parse {field:?} as a number", col + 1),
                )
            })?;
            row.push(v);
        }
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(parse_err(
                    path,
                    line,
                    format!("expected {} columns, found {}", first.len(), row.len()),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(parse_err(path, 0, "empty matrix"));
    }
    let cols = rows[0].len();
    Ok(Mat::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

/// Writes every entry with 17 significant digits so that loading recovers
/// the matrix exactly.
pub fn write_csv<W: Write>(mut w: W, m: &Mat) -> Result<()> {
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols())
            .map(|j| format!("{:.16e}", m[(i, j)]))
            .collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_csv(path: &Path, m: &Mat) -> Result<()> {
    write_csv(std::io::BufWriter::new(File::create(path)?), m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DenseFormat {
    Csv,
    MatrixMarket,
}

pub fn load_dense(path: &Path, format: DenseFormat) -> Result<Mat> {
    match format {
        DenseFormat::Csv => load_csv(path),
        DenseFormat::MatrixMarket => Ok(load_matrix_market(path)?.0),
    }
}

/// Reads a Matrix Market file. Coordinate files return the stored entries
/// and the 0/1 mask of stored positions; array files return a full mask.
pub fn load_matrix_market(path: &Path) -> Result<(Mat, Mat)> {
    read_matrix_market(BufReader::new(File::open(path)?), path)
}

pub fn read_matrix_market<R: BufRead>(reader: R, path: &Path) -> Result<(Mat, Mat)> {
    let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let header = header?.to_ascii_lowercase();
    let words: Vec<&str> = header.split_whitespace().collect();
    if words.len() < 5 || words[0] != "%%matrixmarket" || words[1] != "matrix" {
        return Err(parse_err(path, 1, "missing %%MatrixMarket matrix header"));
    }
    let coordinate = match words[2] {
        "coordinate" => true,
        "array" => false,
        other => return Err(parse_err(path, 1, format!("unsupported layout {other}"))),
    };
    if !matches!(words[3], "real" | "integer" | "double") {
        return Err(parse_err(
            path,
            1,
            format!("unsupported field {}", words[3]),
        ));
    }
    let symmetric = match words[4] {
        "general" => false,
        "symmetric" => true,
        other => return Err(parse_err(path, 1, format!("unsupported symmetry {other}"))),
    };

    let mut body = lines.filter_map(|(no, l)| match l {
        Ok(s) if s.trim().is_empty() || s.trim_start().starts_with('%') => None,
        Ok(s) => Some(Ok((no, s))),
        Err(e) => Some(Err(e)),
    });
    let (size_line, size) = body
        .next()
        .ok_or_else(|| parse_err(path, 2, "missing size line"))??;
    let dims = parse_numbers::<usize>(&size, path, size_line)?;
    let need = if coordinate { 3 } else { 2 };
    if dims.len() != need {
        return Err(parse_err(
            path,
            size_line,
            format!("size line needs {need} integers"),
        ));
    }
    let (m, n) = (dims[0], dims[1]);
    let mut a = Mat::zeros(m, n);
    let mut mask = Mat::zeros(m, n);

    if coordinate {
        let nnz = dims[2];
        let mut count = 0;
        for item in body {
            let (no, line) = item?;
            let v = parse_numbers::<f64>(&line, path, no)?;
            if v.len() != 3 {
                return Err(parse_err(
                    path,
                    no,
                    format!("expected 3 fields, found {}", v.len()),
                ));
            }
            let (i, j) = (v[0] as usize, v[1] as usize);
            if v[0].fract() != 0.0 || v[1].fract() != 0.0 || i == 0 || j == 0 || i > m || j > n {
                return Err(parse_err(
                    path,
                    no,
                    format!("index ({}, {}) out of range", v[0], v[1]),
                ));
            }
            a[(i - 1, j - 1)] = v[2];
            mask[(i - 1, j - 1)] = 1.0;
            if symmetric {
                a[(j - 1, i - 1)] = v[2];
                mask[(j - 1, i - 1)] = 1.0;
            }
            count += 1;
        }
        if count != nnz {
            return Err(parse_err(
                path,
                size_line,
                format!("declared {nnz} entries, found {count}"),
            ));
        }
    } else {
        let mut vals = Vec::with_capacity(m * n);
        for item in body {
            let (no, line) = item?;
            vals.extend(parse_numbers::<f64>(&line, path, no)?);
        }
        if symmetric || vals.len() != m * n {
            return Err(parse_err(
                path,
                size_line,
                format!("array body holds {} values, expected {}", vals.len(), m * n),
            ));
        }
        a = Mat::from_column_slice(m, n, &vals);
        mask.fill(1.0);
    }
    Ok((a, mask))
}

fn parse_numbers<T: std::str::FromStr>(line: &str, path: &Path, no: usize) -> Result<Vec<T>> {
    line.split_whitespace()
        .enumerate()
        .map(|(col, w)| {
            w.parse()
                .map_err(|_| parse_err(path, no, format!("column {}: cannot parse {w:?}", col + 1)))
        })
        .collect()
}

pub const LOG_HEADER: &str =
    "k,rho,rho_tilde,inner_iters,grad_norm,kkt_residual,dual_step_norm,auglag";

pub fn write_log<W: Write>(w: W, records: &[IterateRecord]) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    wtr.write_record(LOG_HEADER.split(','))
        .map_err(|e| Error::Io(e.into()))?;
    for r in records {
        wtr.write_record([
            r.k.to_string(),
            format!("{:.16e}", r.rho),
            format!("{:.16e}", r.rho_tilde),
            r.inner_iters.to_string(),
            format!("{:.16e}", r.grad_norm),
            format!("{:.16e}", r.kkt_residual),
            format!("{:.16e}", r.dual_step_norm),
            format!("{:.16e}", r.auglag),
        ])
        .map_err(|e| Error::Io(e.into()))?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn save_log(path: &Path, records: &[IterateRecord]) -> Result<()> {
    write_log(std::io::BufWriter::new(File::create(path)?), records)
}

pub fn read_log(path: &Path) -> Result<Vec<IterateRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| parse_err(path, 0, e.to_string()))?;
    let header = rdr
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if header != LOG_HEADER {
        return Err(parse_err(path, 1, format!("unexpected header {header:?}")));
    }
    rdr.deserialize()
        .map(|r| {
            r.map_err(|e: csv::Error| {
                let line = e.position().map_or(0, |p| p.line() as usize);
                parse_err(path, line, e.to_string())
            })
        })
        .collect()
}

pub const GRAD_CHECK_TOL: f64 = 1e-5;
pub const HESS_CHECK_TOL: f64 = 1e-3;

/// Worst relative errors of the augmented Lagrangian derivatives against
/// central differences along retraction curves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivativeReport {
    pub samples: usize,
    pub grad_rel_err: f64,
    pub hess_rel_err: f64,
    /// Samples whose Hessian check straddled a prox kink.
    pub hess_skipped: usize,
}

impl DerivativeReport {
    pub fn passed(&self) -> bool {
        self.grad_rel_err <= GRAD_CHECK_TOL && self.hess_rel_err <= HESS_CHECK_TOL
    }
}

/// Checks `auglag_rgrad` and the generalized Hessian at `samples` seeded
/// random points, multipliers and unit directions.
pub fn derivative_check(
    p: &ProblemSpec,
    rho: f64,
    samples: usize,
    seed: u64,
) -> Result<DerivativeReport> {
    if samples == 0 {
        return Err(Error::param("samples", "must be positive"));
    }
    let conv = BoundaryConvention::Zero;
    let (rows, cols) = p.multiplier_shape();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = DerivativeReport {
        samples,
        grad_rel_err: 0.0,
        hess_rel_err: 0.0,
        hess_skipped: 0,
    };
    for _ in 0..samples {
        let x = p.manifold.random_point(rng.random()).shared();
        let y = Mat::from_fn(rows, cols, |_, _| rng.random_range(-0.5..0.5));
        let xi = random_tangent(&x, rng.random())?;
        let at = |t: f64| -> Result<AugLagEval<'_>> {
            let q = retract(&x, &xi.scaled(t))?.shared();
            AugLagEval::new(p, rho, &q, &y, conv)
        };
        let here = at(0.0)?;

        let h = 1e-6;
        let fd = (at(h)?.value - at(-h)?.value) / (2.0 * h);
        let an = here.rgrad.inner(&xi)?;
        let err = (fd - an).abs() / here.grad_norm().max(1e-12);
        report.grad_rel_err = report.grad_rel_err.max(err);

        let h = 1e-5;
        let (plus, minus) = (at(h)?, at(-h)?);
        if plus.jacobian.mask != here.jacobian.mask || minus.jacobian.mask != here.jacobian.mask {
            report.hess_skipped += 1;
            continue;
        }
        // Projecting the derivative of the Riemannian gradient field gives
        // the Riemannian Hessian on embedded manifolds.
        let diff = (plus.rgrad.coords() - minus.rgrad.coords()) / (2.0 * h);
        let fd = tangent_project(&x, &diff)?;
        let an = here.hess_vec(&xi)?;
        let err = (fd.coords() - an.coords()).norm() / an.norm().max(1e-12);
        report.hess_rel_err = report.hess_rel_err.max(err);
    }
    Ok(report)
}
