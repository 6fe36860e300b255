//! Persistence: Matrix Market matrices, headered CSV vectors and tables, JSON sidecars, and
//! system manifests. Floats are written in shortest round-trip form so that reloading is exact.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::covariance::{AffineSystem, CoefficientFn, Parameter, ParameterDomain, SampleRole, SampleSet, SpdMatrix};
use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, DMatrix};
use crate::primal::{ColumnSource, GreedyStep, ReducedSpace, SpaceStatus};
use crate::scalar::Scalar;
use crate::sketch::{Sketch, SketchCertificate};

/// Shortest representation that parses back to the same value.
pub fn fmt_float<T: Scalar>(x: T) -> String {
    format!("{x:e}")
}

fn parse_float<T: Scalar>(s: &str, what: &str) -> Result<T> {
    T::parse_str(s).ok_or_else(|| Error::Parse(format!("invalid number `{s}` in {what}")))
}

fn parse_usize(s: &str, what: &str) -> Result<usize> {
    s.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("invalid integer `{s}` in {what}")))
}

pub fn write_matrix_market<T: Scalar>(path: &Path, a: &CsrMatrix<T>) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(w, "{} {} {}", a.nrows(), a.ncols(), a.nnz())?;
    for (i, j, v) in a.triplets() {
        writeln!(w, "{} {} {}", i + 1, j + 1, fmt_float(v))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `coordinate real general` or `coordinate real symmetric` files.
pub fn read_matrix_market<T: Scalar>(path: &Path) -> Result<CsrMatrix<T>> {
    let what = path.display().to_string();
    let reader = BufReader::new(fs::File::open(path)?);
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse(format!("{what}: empty file")))??
        .to_lowercase();
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() < 5 || fields[0] != "%%matrixmarket" || fields[1] != "matrix" || fields[2] != "coordinate" {
        return Err(Error::Parse(format!("{what}: unsupported Matrix Market header `{header}`")));
    }
    if fields[3] != "real" && fields[3] != "integer" {
        return Err(Error::Parse(format!("{what}: unsupported field `{}`", fields[3])));
    }
    let symmetric = match fields[4] {
        "general" => false,
        "symmetric" => true,
        other => return Err(Error::Parse(format!("{what}: unsupported symmetry `{other}`"))),
    };
    let mut size: Option<(usize, usize, usize)> = None;
    let mut trip = Vec::new();
    for line in lines {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let parts: Vec<&str> = t.split_whitespace().collect();
        match size {
            None => {
                if parts.len() != 3 {
                    return Err(Error::Parse(format!("{what}: bad size line `{t}`")));
                }
                size = Some((parse_usize(parts[0], &what)?, parse_usize(parts[1], &what)?, parse_usize(parts[2], &what)?));
            }
            Some((m, n, _)) => {
                if parts.len() != 3 {
                    return Err(Error::Parse(format!("{what}: bad entry `{t}`")));
                }
                let i = parse_usize(parts[0], &what)?;
                let j = parse_usize(parts[1], &what)?;
                if i == 0 || j == 0 || i > m || j > n {
                    return Err(Error::Parse(format!("{what}: index ({i},{j}) out of range")));
                }
                let v: T = parse_float(parts[2], &what)?;
                trip.push((i - 1, j - 1, v));
                if symmetric && i != j {
                    trip.push((j - 1, i - 1, v));
                }
            }
        }
    }
    let (m, n, nnz) = size.ok_or_else(|| Error::Parse(format!("{what}: missing size line")))?;
    let stored = if symmetric { trip.iter().filter(|t| t.0 >= t.1).count() } else { trip.len() };
    if stored != nnz {
        return Err(Error::Parse(format!("{what}: expected {nnz} entries, found {stored}")));
    }
    Ok(CsrMatrix::from_triplets(m, n, &trip))
}

pub fn write_vector_csv<T: Scalar>(path: &Path, name: &str, v: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([name])?;
    for x in v {
        w.write_record([fmt_float(*x)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_vector_csv<T: Scalar>(path: &Path) -> Result<Vec<T>> {
    let what = path.display().to_string();
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != 1 {
            return Err(Error::Parse(format!("{what}: expected one column")));
        }
        out.push(parse_float(&rec[0], &what)?);
    }
    Ok(out)
}

/// Row-per-line dense matrix with a `c0,c1,…` header.
pub fn write_dense_csv<T: Scalar>(path: &Path, m: &DMatrix<T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record((0..m.ncols()).map(|j| format!("c{j}")))?;
    for i in 0..m.nrows() {
        w.write_record(m.row(i).into_iter().map(fmt_float))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dense_csv<T: Scalar>(path: &Path) -> Result<DMatrix<T>> {
    let what = path.display().to_string();
    let mut r = csv::Reader::from_path(path)?;
    let ncols = r.headers()?.len();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != ncols {
            return Err(Error::Parse(format!("{what}: ragged row")));
        }
        rows.push(rec.iter().map(|s| parse_float(s, &what)).collect::<Result<Vec<T>>>()?);
    }
    if rows.is_empty() {
        return Ok(DMatrix::zeros(0, ncols));
    }
    Ok(DMatrix::from_rows(&rows))
}

fn mu_header(p: usize) -> Vec<String> {
    (1..=p).map(|i| format!("mu_{i}")).collect()
}

pub fn write_samples_csv<T: Scalar>(path: &Path, set: &SampleSet<T>) -> Result<()> {
    let p = set.points[0].dim();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(mu_header(p))?;
    for mu in set.iter() {
        w.write_record(mu.coords().iter().map(|&c| fmt_float(c)))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_samples_csv<T: Scalar>(path: &Path, seed: u64, role: SampleRole) -> Result<SampleSet<T>> {
    let what = path.display().to_string();
    let mut r = csv::Reader::from_path(path)?;
    let mut pts = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        pts.push(Parameter::new(
            rec.iter().map(|s| parse_float(s, &what)).collect::<Result<Vec<T>>>()?,
        ));
    }
    SampleSet::from_points(pts, seed, role)
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn read_json<S: for<'de> Deserialize<'de>>(path: &Path) -> Result<S> {
    Ok(serde_json::from_reader(BufReader::new(fs::File::open(path)?))?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SketchMeta {
    dim: usize,
    k: usize,
    seed: u64,
    covariance: String,
    certificate: Option<SketchCertificate>,
}

/// Writes `<stem>.csv` (columns `vector,entry,value`) and `<stem>.json`.
pub fn save_sketch<T: Scalar>(dir: &Path, stem: &str, sk: &Sketch<T>) -> Result<()> {
    let mut w = csv::Writer::from_path(dir.join(format!("{stem}.csv")))?;
    w.write_record(["vector", "entry", "value"])?;
    for (i, z) in sk.vectors().columns().enumerate() {
        for (j, v) in z.iter().enumerate() {
            w.write_record([i.to_string(), j.to_string(), fmt_float(*v)])?;
        }
    }
    w.flush()?;
    write_json(
        &dir.join(format!("{stem}.json")),
        &SketchMeta {
            dim: sk.dim(),
            k: sk.k(),
            seed: sk.seed(),
            covariance: sk.covariance_label().to_string(),
            certificate: sk.certificate(),
        },
    )
}

pub fn load_sketch<T: Scalar>(dir: &Path, stem: &str) -> Result<Sketch<T>> {
    let meta: SketchMeta = read_json(&dir.join(format!("{stem}.json")))?;
    let path = dir.join(format!("{stem}.csv"));
    let what = path.display().to_string();
    let mut m = DMatrix::zeros(meta.dim, meta.k);
    let mut r = csv::Reader::from_path(&path)?;
    let mut count = 0;
    for rec in r.records() {
        let rec = rec?;
        let i = parse_usize(&rec[0], &what)?;
        let j = parse_usize(&rec[1], &what)?;
        if i >= meta.k || j >= meta.dim {
            return Err(Error::Parse(format!("{what}: entry ({i},{j}) out of range")));
        }
        m[(j, i)] = parse_float(&rec[2], &what)?;
        count += 1;
    }
    if count != meta.k * meta.dim {
        return Err(Error::Parse(format!("{what}: expected {} entries, found {count}", meta.k * meta.dim)));
    }
    let sk = Sketch::from_vectors(m, meta.seed, meta.covariance)?;
    Ok(match meta.certificate {
        Some(c) => sk.with_certificate(c),
        None => sk,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SpaceMeta {
    inner_product: String,
    status: SpaceStatus,
    sources: Vec<ColumnSource>,
}

/// Writes `<stem>.csv` (the basis, one row per entry) and `<stem>.json`.
pub fn save_space<T: Scalar>(dir: &Path, stem: &str, space: &ReducedSpace<T>) -> Result<()> {
    write_dense_csv(&dir.join(format!("{stem}.csv")), space.basis())?;
    write_json(
        &dir.join(format!("{stem}.json")),
        &SpaceMeta {
            inner_product: space.inner_product().to_string(),
            status: space.status(),
            sources: space.sources().to_vec(),
        },
    )
}

pub fn load_space<T: Scalar>(dir: &Path, stem: &str) -> Result<ReducedSpace<T>> {
    let meta: SpaceMeta = read_json(&dir.join(format!("{stem}.json")))?;
    let basis = read_dense_csv(&dir.join(format!("{stem}.csv")))?;
    ReducedSpace::from_parts(basis, meta.inner_product, meta.sources, meta.status)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermEntry {
    pub file: String,
    pub coefficient: CoefficientFn,
}

/// JSON description of an affine system stored next to its term files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemManifest {
    pub dim: usize,
    pub operator_terms: Vec<TermEntry>,
    pub rhs_terms: Vec<TermEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub riesz: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<ParameterDomain>,
}

/// A system loaded from a manifest, with its optional Riesz matrix and parameter box.
#[derive(Debug, Clone)]
pub struct LoadedSystem<T> {
    pub system: AffineSystem<T>,
    pub riesz: Option<SpdMatrix<T>>,
    pub domain: Option<ParameterDomain>,
}

/// Writes `A_q` as `A{q}.mtx`, `f_q` as `f{q}.csv`, the Riesz matrix as `riesz.mtx` and
/// `system.json`; returns the manifest path.
pub fn save_system<T: Scalar>(
    dir: &Path,
    sys: &AffineSystem<T>,
    riesz: Option<&SpdMatrix<T>>,
    domain: Option<&ParameterDomain>,
) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let mut operator_terms = Vec::new();
    for (q, (a, c)) in sys.operator_terms().iter().zip(sys.operator_coeff_fns()).enumerate() {
        let file = format!("A{q}.mtx");
        write_matrix_market(&dir.join(&file), a)?;
        operator_terms.push(TermEntry { file, coefficient: c.clone() });
    }
    let mut rhs_terms = Vec::new();
    for (q, (f, c)) in sys.rhs_terms().iter().zip(sys.rhs_coeff_fns()).enumerate() {
        let file = format!("f{q}.csv");
        write_vector_csv(&dir.join(&file), "value", f)?;
        rhs_terms.push(TermEntry { file, coefficient: c.clone() });
    }
    let riesz_file = match riesz {
        Some(r) => {
            write_matrix_market(&dir.join("riesz.mtx"), r.matrix())?;
            Some("riesz.mtx".to_string())
        }
        None => None,
    };
    let manifest = SystemManifest {
        dim: sys.dim(),
        operator_terms,
        rhs_terms,
        riesz: riesz_file,
        domain: domain.cloned(),
    };
    let path = dir.join("system.json");
    write_json(&path, &manifest)?;
    Ok(path)
}

pub fn load_system<T: Scalar>(manifest_path: &Path) -> Result<LoadedSystem<T>> {
    let manifest: SystemManifest = read_json(manifest_path)?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let mut ops = Vec::new();
    let mut op_coeffs = Vec::new();
    for t in &manifest.operator_terms {
        ops.push(read_matrix_market(&base.join(&t.file))?);
        op_coeffs.push(t.coefficient.clone());
    }
    let mut rhs = Vec::new();
    let mut rhs_coeffs = Vec::new();
    for t in &manifest.rhs_terms {
        rhs.push(read_vector_csv(&base.join(&t.file))?);
        rhs_coeffs.push(t.coefficient.clone());
    }
    let system = AffineSystem::new(ops, op_coeffs, rhs, rhs_coeffs)?;
    if system.dim() != manifest.dim {
        return Err(Error::DimensionMismatch {
            context: "manifest dimension",
            expected: manifest.dim,
            found: system.dim(),
        });
    }
    let riesz = match &manifest.riesz {
        Some(f) => Some(SpdMatrix::new(read_matrix_market(&base.join(f))?)?),
        None => None,
    };
    Ok(LoadedSystem {
        system,
        riesz,
        domain: manifest.domain,
    })
}

/// One online point of an estimator sweep. Optional quantities are left empty in the CSV; `status`
/// is `ok` or an error description for that point.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub mu: Vec<f64>,
    pub true_error_sigma: Option<f64>,
    pub delta_exact: Option<f64>,
    pub delta_fast: Option<f64>,
    pub effectivity: Option<f64>,
    pub seed: u64,
    pub n_primal: usize,
    pub n_dual: usize,
    pub k: usize,
    pub w: Option<f64>,
    pub delta_prob: Option<f64>,
    pub status: String,
}

pub fn sweep_header(p: usize) -> Vec<String> {
    let mut h = mu_header(p);
    h.extend(
        [
            "true_error_sigma",
            "delta_exact",
            "delta_fast",
            "effectivity",
            "seed",
            "n_primal",
            "n_dual",
            "K",
            "w",
            "delta_prob",
            "status",
        ]
        .map(String::from),
    );
    h
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_float).unwrap_or_default()
}

impl SweepRow {
    pub fn record(&self) -> Vec<String> {
        let mut r: Vec<String> = self.mu.iter().map(|&c| fmt_float(c)).collect();
        r.extend([
            opt(self.true_error_sigma),
            opt(self.delta_exact),
            opt(self.delta_fast),
            opt(self.effectivity),
            self.seed.to_string(),
            self.n_primal.to_string(),
            self.n_dual.to_string(),
            self.k.to_string(),
            opt(self.w),
            opt(self.delta_prob),
            self.status.clone(),
        ]);
        r
    }
}

pub fn write_sweep_csv(path: &Path, p: usize, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(sweep_header(p))?;
    for row in rows {
        w.write_record(row.record())?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace_csv(path: &Path, p: usize, trace: &[GreedyStep]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut h = vec!["iteration".to_string()];
    h.extend(mu_header(p));
    h.extend(["index", "lambda", "criterion", "n_dual"].map(String::from));
    w.write_record(&h)?;
    for s in trace {
        let mut r = vec![s.iteration.to_string()];
        r.extend(s.mu.iter().map(|&c| fmt_float(c)));
        r.push(s.index.map(|i| i.to_string()).unwrap_or_default());
        r.push(
            s.lambda
                .as_ref()
                .map(|l| l.iter().map(|&x| fmt_float(x)).collect::<Vec<_>>().join(";"))
                .unwrap_or_default(),
        );
        r.push(fmt_float(s.criterion));
        r.push(s.dim_after.to_string());
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json_file<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    write_json(path, value)
}

pub fn read_json_file<S: for<'de> Deserialize<'de>>(path: &Path) -> Result<S> {
    read_json(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips() {
        for x in [0.1, -1.0 / 3.0, 1e-300, 6.02e23, 0.0, f64::INFINITY] {
            let s = fmt_float(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{s}");
        }
        let y = 0.1f32;
        assert_eq!(fmt_float(y).parse::<f32>().unwrap(), y);
    }

    #[test]
    fn matrix_market_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let a = CsrMatrix::from_triplets(3, 2, &[(0, 1, 0.1), (2, 0, -1.0 / 7.0)]);
        let p = dir.path().join("a.mtx");
        write_matrix_market(&p, &a).unwrap();
        let b: CsrMatrix<f64> = read_matrix_market(&p).unwrap();
        assert_eq!(a.triplets().collect::<Vec<_>>(), b.triplets().collect::<Vec<_>>());
        fs::write(&p, "%%MatrixMarket matrix coordinate real symmetric\n2 2 2\n1 1 2\n2 1 -1\n").unwrap();
        let s: CsrMatrix<f64> = read_matrix_market(&p).unwrap();
        assert_eq!(s.get(0, 1), -1.0);
        fs::write(&p, "%%MatrixMarket matrix array real general\n").unwrap();
        assert!(read_matrix_market::<f64>(&p).is_err());
    }
}
