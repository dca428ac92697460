//! Graph construction, Laplacian assembly, eigendecomposition, and
//! frequency splitting of point-cloud coordinate signals.
//!
//! A cloud's kNN graph carries Gaussian edge weights
//! `w_ij = exp(-d_ij^2 / (2 eps^2))`. The combinatorial Laplacian `L = D - A`
//! is decomposed as `L = V Lambda V^T`; the first `m` eigenvector columns span
//! the low-frequency band, and `P_m = V_m V_m^T` is the low-pass projector
//! applied to each coordinate axis.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, ArrayView2};
use thiserror::Error;

use crate::pointcloud::PointCloud;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("k = {k} must satisfy 1 <= k < n = {n}")]
    BadK { k: usize, n: usize },
    #[error("degenerate graph: {0}")]
    DegenerateGraph(String),
    #[error("eigensolver failed to converge after {iterations} sweeps (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("m = {m} exceeds basis dimension {n}")]
    MTooLarge { m: usize, n: usize },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: bad basis file: {detail}")]
    BadBasisFile { path: PathBuf, detail: String },
}

pub type Result<T> = std::result::Result<T, SpectralError>;

/// Kernel bandwidth selection for edge weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BandwidthMode {
    /// eps = mean directed kNN edge length of the cloud.
    Auto,
    Fixed(f64),
}

/// Symmetrized kNN graph with Gaussian edge weights.
#[derive(Debug, Clone)]
pub struct KnnGraph {
    pub n: usize,
    pub adjacency: Array2<f64>,
    pub k: usize,
    pub kernel_bandwidth: f64,
}

/// Eigendecomposition of a graph Laplacian: ascending eigenvalues paired
/// with orthonormal eigenvector columns.
#[derive(Debug, Clone)]
pub struct SpectralBasis {
    pub eigenvalues: Array1<f64>,
    pub eigenvectors: Array2<f64>,
}

impl SpectralBasis {
    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Low-pass projector P_m = V_m V_m^T over the first m eigenvectors.
    pub fn projector(&self, m: usize) -> Result<Array2<f64>> {
        let n = self.n();
        if m > n {
            return Err(SpectralError::MTooLarge { m, n });
        }
        let vm = self.eigenvectors.slice(ndarray::s![.., ..m]);
        Ok(vm.dot(&vm.t()))
    }
}

/// Spectral coefficients of the three coordinate signals.
#[derive(Debug, Clone)]
pub struct SpectralCoefficients {
    pub alpha: Array1<f64>,
    pub beta: Array1<f64>,
    pub gamma_coef: Array1<f64>,
}

/// Directed k nearest neighbors of every point, ties broken by lower index.
fn knn_indices(points: &ArrayView2<f64>, k: usize) -> Vec<Vec<usize>> {
    let n = points.nrows();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let pi = points.row(i);
        let mut dists: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| {
                let d = &points.row(j) - &pi;
                (d.dot(&d), j)
            })
            .collect();
        dists.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        out.push(dists[..k].iter().map(|&(_, j)| j).collect());
    }
    out
}

/// Build the symmetrized kNN graph: edge (i,j) exists iff j is among i's k
/// nearest neighbors or vice versa, with weight `exp(-d^2 / (2 eps^2))`.
pub fn build_knn_graph(cloud: &PointCloud, k: usize, mode: BandwidthMode) -> Result<KnnGraph> {
    let n = cloud.len();
    if k < 1 || k >= n {
        return Err(SpectralError::BadK { k, n });
    }
    let points = cloud.points.view();
    let neighbors = knn_indices(&points, k);
    let eps = match mode {
        BandwidthMode::Fixed(v) => v,
        BandwidthMode::Auto => {
            // Mean directed kNN edge length, each direction counted once.
            let mut sum = 0.0;
            let mut count = 0usize;
            for (i, nbrs) in neighbors.iter().enumerate() {
                for &j in nbrs {
                    let d = &points.row(j) - &points.row(i);
                    sum += d.dot(&d).sqrt();
                    count += 1;
                }
            }
            sum / count as f64
        }
    };
    if !(eps > 0.0) {
        return Err(SpectralError::DegenerateGraph(format!(
            "kernel bandwidth {eps} is not positive (all-identical cloud?)"
        )));
    }
    let mut adjacency = Array2::zeros((n, n));
    for (i, nbrs) in neighbors.iter().enumerate() {
        for &j in nbrs {
            let d = &points.row(j) - &points.row(i);
            let w = (-d.dot(&d) / (2.0 * eps * eps)).exp();
            adjacency[[i, j]] = w;
            adjacency[[j, i]] = w;
        }
    }
    Ok(KnnGraph { n, adjacency, k, kernel_bandwidth: eps })
}

/// Combinatorial Laplacian L = D - A.
pub fn laplacian(graph: &KnnGraph) -> Array2<f64> {
    let n = graph.n;
    let mut l = -&graph.adjacency;
    for i in 0..n {
        l[[i, i]] = graph.adjacency.row(i).sum();
    }
    l
}

const QL_MAX_SWEEPS: usize = 30;

/// Eigendecompose a symmetric matrix by Householder tridiagonalization
/// followed by implicit-shift QL. Eigenvalues are returned ascending with
/// eigenvector columns permuted in lockstep.
pub fn eigendecompose(l: &Array2<f64>) -> Result<SpectralBasis> {
    let n = l.nrows();
    if n != l.ncols() {
        return Err(SpectralError::DimensionMismatch(format!(
            "matrix is {} x {}",
            n,
            l.ncols()
        )));
    }
    let sym_err = l
        .iter()
        .zip(l.t().iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    if sym_err > 1e-10 {
        return Err(SpectralError::DimensionMismatch(format!(
            "matrix not symmetric (max asymmetry {sym_err:.3e})"
        )));
    }
    let mut z = l.clone();
    let mut d = vec![0.0f64; n];
    let mut e = vec![0.0f64; n];
    tred2(&mut z, &mut d, &mut e);
    tql2(&mut z, &mut d, &mut e)?;
    // Sort ascending, permuting columns in lockstep.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].partial_cmp(&d[b]).unwrap());
    let eigenvalues = Array1::from_iter(order.iter().map(|&i| d[i]));
    let mut eigenvectors = Array2::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.column_mut(dst).assign(&z.column(src));
    }
    Ok(SpectralBasis { eigenvalues, eigenvectors })
}

/// Householder reduction to tridiagonal form, accumulating the transform in z.
fn tred2(z: &mut Array2<f64>, d: &mut [f64], e: &mut [f64]) {
    let n = d.len();
    for j in 0..n {
        d[j] = z[[n - 1, j]];
    }
    for i in (1..n).rev() {
        let l = i - 1;
        let mut h = 0.0;
        let mut scale = 0.0;
        for k in 0..=l {
            scale += d[k].abs();
        }
        if scale == 0.0 {
            e[i] = d[l];
            for j in 0..i {
                d[j] = z[[l, j]];
                z[[i, j]] = 0.0;
                z[[j, i]] = 0.0;
            }
        } else {
            for k in 0..=l {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let mut f = d[l];
            let mut g = if f > 0.0 { -h.sqrt() } else { h.sqrt() };
            e[i] = scale * g;
            h -= f * g;
            d[l] = f - g;
            for j in 0..=l {
                e[j] = 0.0;
            }
            for j in 0..=l {
                f = d[j];
                z[[j, i]] = f;
                g = e[j] + z[[j, j]] * f;
                for k in j + 1..=l {
                    g += z[[k, j]] * d[k];
                    e[k] += z[[k, j]] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..=l {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..=l {
                e[j] -= hh * d[j];
            }
            for j in 0..=l {
                f = d[j];
                g = e[j];
                for k in j..=l {
                    z[[k, j]] -= f * e[k] + g * d[k];
                }
                d[j] = z[[l, j]];
                z[[i, j]] = 0.0;
            }
        }
        d[i] = h;
    }
    for i in 0..n - 1 {
        z[[n - 1, i]] = z[[i, i]];
        z[[i, i]] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = z[[k, i + 1]] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += z[[k, i + 1]] * z[[k, j]];
                }
                for k in 0..=i {
                    z[[k, j]] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            z[[k, i + 1]] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = z[[n - 1, j]];
        z[[n - 1, j]] = 0.0;
    }
    z[[n - 1, n - 1]] = 1.0;
    e[0] = 0.0;
}

/// Implicit-shift QL on a symmetric tridiagonal matrix, accumulating
/// eigenvectors in z. Caps at QL_MAX_SWEEPS sweeps per eigenvalue.
fn tql2(z: &mut Array2<f64>, d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let n = d.len();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    let mut f = 0.0f64;
    let mut tst1 = 0.0f64;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > QL_MAX_SWEEPS {
                    return Err(SpectralError::NoConvergence {
                        iterations: QL_MAX_SWEEPS,
                        residual: e[l].abs(),
                    });
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for i in l + 2..n {
                    d[i] -= h;
                }
                f += h;
                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for k in 0..n {
                        h = z[[k, i + 1]];
                        z[[k, i + 1]] = s * z[[k, i]] + c * h;
                        z[[k, i]] = c * z[[k, i]] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

/// Compute the spectral basis of a cloud's kNN-graph Laplacian.
pub fn basis_of_cloud(cloud: &PointCloud, k: usize, mode: BandwidthMode) -> Result<SpectralBasis> {
    let graph = build_knn_graph(cloud, k, mode)?;
    eigendecompose(&laplacian(&graph))
}

/// Split a cloud into its low- and high-frequency components using the first
/// m Laplacian eigenvectors. The HFC is computed by subtraction and the pair
/// is refined to a mutual fixpoint, so the subtractive reconstructions
/// `cloud - hfc == lfc` and `cloud - lfc == hfc` hold bitwise. The additive
/// reconstruction `lfc + hfc` is correct to one rounding of the true sum;
/// exact bitwise addition is unattainable whenever a low-pass coefficient
/// exceeds the original coordinate in magnitude (cancellation leaves the
/// achievable sums coarser than one ulp of the coordinate).
pub fn lfc_split(
    cloud: &PointCloud,
    m: usize,
    k: usize,
) -> Result<(PointCloud, PointCloud, SpectralBasis)> {
    let basis = basis_of_cloud(cloud, k, BandwidthMode::Auto)?;
    let (lfc, hfc) = lfc_split_with_basis(cloud, m, &basis)?;
    Ok((lfc, hfc, basis))
}

/// As [`lfc_split`] but reusing an already-computed basis.
pub fn lfc_split_with_basis(
    cloud: &PointCloud,
    m: usize,
    basis: &SpectralBasis,
) -> Result<(PointCloud, PointCloud)> {
    if cloud.len() != basis.n() {
        return Err(SpectralError::DimensionMismatch(format!(
            "cloud has {} points, basis dimension {}",
            cloud.len(),
            basis.n()
        )));
    }
    let p = basis.projector(m)?;
    let (lfc_pts, hfc_pts) = subtractive_fixpoint(&cloud.points, p.dot(&cloud.points));
    let mut lfc = PointCloud::new(lfc_pts);
    lfc.label = cloud.label;
    lfc.name = cloud.name.clone();
    let mut hfc = PointCloud::new(hfc_pts);
    hfc.label = cloud.label;
    hfc.name = cloud.name.clone();
    Ok((lfc, hfc))
}

/// Iterate `low = x - (x - low)` to a mutual fixpoint. At the fixpoint both
/// subtractions are bitwise-stable: `x - high == low` and `x - low == high`.
/// Empirically one round suffices; the cap is a safety margin.
fn subtractive_fixpoint(x: &Array2<f64>, mut low: Array2<f64>) -> (Array2<f64>, Array2<f64>) {
    let mut high = x - &low;
    for _ in 0..8 {
        let l2 = x - &high;
        if l2 == low {
            break;
        }
        low = l2;
        high = x - &low;
    }
    (low, high)
}

/// Split a perturbation into low- and high-frequency parts with the clean
/// cloud's basis; the high part is the remainder, refined so both subtractive
/// reconstructions hold bitwise (see [`lfc_split`]).
pub fn project_perturbation(
    delta: &Array2<f64>,
    basis: &SpectralBasis,
    m: usize,
) -> Result<(Array2<f64>, Array2<f64>)> {
    if delta.nrows() != basis.n() {
        return Err(SpectralError::DimensionMismatch(format!(
            "perturbation has {} rows, basis dimension {}",
            delta.nrows(),
            basis.n()
        )));
    }
    let p = basis.projector(m)?;
    let (low, high) = subtractive_fixpoint(delta, p.dot(delta));
    Ok((low, high))
}

/// Project the three coordinate signals onto the eigenbasis.
pub fn spectral_coefficients(
    cloud: &PointCloud,
    basis: &SpectralBasis,
) -> Result<SpectralCoefficients> {
    if cloud.len() != basis.n() {
        return Err(SpectralError::DimensionMismatch(format!(
            "cloud has {} points, basis dimension {}",
            cloud.len(),
            basis.n()
        )));
    }
    let coeffs = basis.eigenvectors.t().dot(&cloud.points);
    Ok(SpectralCoefficients {
        alpha: coeffs.column(0).to_owned(),
        beta: coeffs.column(1).to_owned(),
        gamma_coef: coeffs.column(2).to_owned(),
    })
}

const BASIS_MAGIC: &[u8; 9] = b"AOFBASIS1";

/// Binary debug dump of a basis: magic, N as u64 LE, eigenvalues, then V
/// column-major, all f64 LE.
pub fn dump_basis(basis: &SpectralBasis, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io = |e| SpectralError::Io { path: path.to_path_buf(), source: e };
    let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    let io = |e| SpectralError::Io { path: path.to_path_buf(), source: e };
    w.write_all(BASIS_MAGIC).map_err(io)?;
    let n = basis.n();
    w.write_all(&(n as u64).to_le_bytes()).map_err(io)?;
    for v in basis.eigenvalues.iter() {
        w.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    for col in 0..n {
        for row in 0..n {
            w.write_all(&basis.eigenvectors[[row, col]].to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

/// Parse a basis dump produced by [`dump_basis`].
pub fn parse_basis(bytes: &[u8], path: &Path) -> Result<SpectralBasis> {
    let bad = |detail: String| SpectralError::BadBasisFile { path: path.to_path_buf(), detail };
    let mut r = bytes;
    let mut magic = [0u8; 9];
    r.read_exact(&mut magic)
        .map_err(|_| bad("truncated magic".into()))?;
    if &magic != BASIS_MAGIC {
        return Err(bad("magic mismatch".into()));
    }
    let mut nb = [0u8; 8];
    r.read_exact(&mut nb).map_err(|_| bad("truncated size".into()))?;
    let n = u64::from_le_bytes(nb) as usize;
    let expected = n
        .checked_mul(n)
        .and_then(|nn| nn.checked_add(n))
        .and_then(|c| c.checked_mul(8))
        .ok_or_else(|| bad(format!("size overflow for n = {n}")))?;
    if r.len() != expected {
        return Err(bad(format!("expected {expected} payload bytes, found {}", r.len())));
    }
    let mut next = || {
        let mut b = [0u8; 8];
        r.read_exact(&mut b).unwrap();
        f64::from_le_bytes(b)
    };
    let eigenvalues = Array1::from_iter((0..n).map(|_| next()));
    let mut eigenvectors = Array2::zeros((n, n));
    for col in 0..n {
        for row in 0..n {
            eigenvectors[[row, col]] = next();
        }
    }
    Ok(SpectralBasis { eigenvalues, eigenvectors })
}

pub fn load_basis(path: impl AsRef<Path>) -> Result<SpectralBasis> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)
        .map_err(|e| SpectralError::Io { path: path.to_path_buf(), source: e })?;
    parse_basis(&bytes, path)
}
