//! Problem instances: dynamics `x_{t+1} = A x_t + B u_t + w_t`, quadratic
//! costs, and bounded zero-mean i.i.d. noise models.
//!
//! The control matrix is named `b_ctrl` throughout; `bound` on the noise
//! model is the sup of `‖w‖₂` over the support. Keeping the two apart avoids
//! reusing one letter for both roles.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::linalg::{spectral_radius, sym_min_eig, sym_norm2, symmetrize};
use crate::riccati;

/// Number of steps in a finite-horizon experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Horizon(usize);

impl Horizon {
    pub fn new(steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::DimensionMismatch("horizon must be >= 1".into()));
        }
        Ok(Horizon(steps))
    }

    pub fn steps(self) -> usize {
        self.0
    }
}

/// A problem instance: dynamics `(A, B)` and costs `(Q, R, Q_f)`.
///
/// Immutable after construction; the constructor checks only dimensional
/// consistency — structural assumptions (PSD costs, stabilizability) are
/// the business of [`validate_spec`].
#[derive(Debug, Clone)]
pub struct SystemSpec {
    a: DMatrix<f64>,
    b_ctrl: DMatrix<f64>,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    q_f: DMatrix<f64>,
}

impl SystemSpec {
    /// Build a spec. `q_f = None` defaults to the zero matrix, which keeps
    /// the infinite-horizon quantities unchanged while staying configurable
    /// for finite-horizon tests.
    pub fn new(
        a: DMatrix<f64>,
        b_ctrl: DMatrix<f64>,
        q: DMatrix<f64>,
        r: DMatrix<f64>,
        q_f: Option<DMatrix<f64>>,
    ) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "A must be square, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b_ctrl.nrows() != n {
            return Err(Error::DimensionMismatch(format!(
                "B must have {} rows, got {}",
                n,
                b_ctrl.nrows()
            )));
        }
        let m = b_ctrl.ncols();
        if m == 0 || n == 0 {
            return Err(Error::DimensionMismatch(
                "state and control dimensions must be positive".into(),
            ));
        }
        if q.shape() != (n, n) {
            return Err(Error::DimensionMismatch(format!(
                "Q must be {n}x{n}, got {}x{}",
                q.nrows(),
                q.ncols()
            )));
        }
        if r.shape() != (m, m) {
            return Err(Error::DimensionMismatch(format!(
                "R must be {m}x{m}, got {}x{}",
                r.nrows(),
                r.ncols()
            )));
        }
        let q_f = q_f.unwrap_or_else(|| DMatrix::zeros(n, n));
        if q_f.shape() != (n, n) {
            return Err(Error::DimensionMismatch(format!(
                "Qf must be {n}x{n}, got {}x{}",
                q_f.nrows(),
                q_f.ncols()
            )));
        }
        Ok(SystemSpec { a, b_ctrl, q, r, q_f })
    }

    /// Scalar convenience constructor with `Q_f = 0`.
    pub fn scalar(a: f64, b: f64, q: f64, r: f64) -> Self {
        SystemSpec::new(
            DMatrix::from_element(1, 1, a),
            DMatrix::from_element(1, 1, b),
            DMatrix::from_element(1, 1, q),
            DMatrix::from_element(1, 1, r),
            None,
        )
        .expect("scalar dimensions are always consistent")
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b_ctrl.ncols()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b_ctrl(&self) -> &DMatrix<f64> {
        &self.b_ctrl
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn q_f(&self) -> &DMatrix<f64> {
        &self.q_f
    }

    /// Replace the terminal cost (used by tests mixing `Q_f ∈ {0, Q}`).
    pub fn with_terminal_cost(mut self, q_f: DMatrix<f64>) -> Result<Self> {
        if q_f.shape() != (self.n(), self.n()) {
            return Err(Error::DimensionMismatch(format!(
                "Qf must be {0}x{0}",
                self.n()
            )));
        }
        self.q_f = q_f;
        Ok(self)
    }

    /// Scale-relative PSD tolerance and absolute PD tolerance.
    pub fn default_tolerances(&self) -> (f64, f64) {
        (1e-9 * sym_norm2(&self.q).max(1.0), 1e-12)
    }

    /// [`validate_spec`] with the default tolerances.
    pub fn validate(&self) -> ValidationReport {
        let (tol_psd, tol_pd) = self.default_tolerances();
        validate_spec(self, tol_psd, tol_pd)
    }
}

/// Witness of stabilizability: a gain with `ρ(A − B K) < 1`.
#[derive(Debug, Clone)]
pub struct StabilizingWitness {
    pub gain: DMatrix<f64>,
    pub closed_loop_radius: f64,
}

/// Pass/fail per structural invariant, plus the stabilizing witness on pass.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub q_psd: bool,
    pub r_pd: bool,
    pub qf_psd: bool,
    pub stabilizable: bool,
    pub witness: Option<StabilizingWitness>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.q_psd && self.r_pd && self.qf_psd && self.stabilizable
    }

    /// First failing invariant as a typed error, or the witness on pass.
    pub fn as_result(&self) -> Result<&StabilizingWitness> {
        if !self.q_psd {
            return Err(Error::CostNotPsd("Q has an eigenvalue below -tol_psd".into()));
        }
        if !self.qf_psd {
            return Err(Error::CostNotPsd("Qf has an eigenvalue below -tol_psd".into()));
        }
        if !self.r_pd {
            return Err(Error::CostNotPd("R has an eigenvalue below tol_pd".into()));
        }
        match &self.witness {
            Some(w) if self.stabilizable => Ok(w),
            _ => Err(Error::NotStabilizable(
                "Riccati fixed-point iteration produced no stabilizing gain".into(),
            )),
        }
    }
}

/// Check the structural assumptions: `Q, Q_f ⪰ 0`, `R ≻ 0`, and `(A, B)`
/// stabilizable. The stabilizability test is constructive: the Riccati
/// fixed-point iteration must converge to a gain with `ρ(A − B K) < 1`,
/// which is exactly the gain the rest of the toolkit uses.
pub fn validate_spec(spec: &SystemSpec, tol_psd: f64, tol_pd: f64) -> ValidationReport {
    let sym_tol = 1e-10;
    let q_psd = matrix_is_psd(&spec.q, sym_tol, -tol_psd);
    let qf_psd = matrix_is_psd(&spec.q_f, sym_tol, -tol_psd);
    let r_pd = matrix_is_psd(&spec.r, sym_tol, tol_pd);

    let (stabilizable, witness) = if r_pd {
        match riccati::solve_dare(spec, riccati::DEFAULT_TOL, riccati::DEFAULT_MAX_ITER) {
            Ok(sol) => {
                let rho = spectral_radius(&(spec.a() - spec.b_ctrl() * &sol.k));
                (
                    rho < 1.0,
                    Some(StabilizingWitness {
                        gain: sol.k,
                        closed_loop_radius: rho,
                    }),
                )
            }
            Err(_) => (false, None),
        }
    } else {
        (false, None)
    };

    ValidationReport {
        q_psd,
        r_pd,
        qf_psd,
        stabilizable,
        witness,
    }
}

fn matrix_is_psd(m: &DMatrix<f64>, sym_tol: f64, eig_floor: f64) -> bool {
    let asym = (m - m.transpose()).norm();
    if asym > sym_tol * (1.0 + m.norm()) {
        return false;
    }
    sym_min_eig(m) >= eig_floor
}

/// Zero-mean, bounded-support i.i.d. noise distributions.
#[derive(Debug, Clone)]
pub enum NoiseKind {
    /// Each coordinate i.i.d. uniform on `[-half_width, half_width]`.
    UniformBox { half_width: f64 },
    /// Isotropic Gaussian `N(0, sigma² I)` conditioned on `‖w‖₂ ≤ radius`.
    TruncatedGaussian { sigma: f64, radius: f64 },
    /// Each coordinate independently `±scale` with equal probability.
    ScaledRademacher { scale: f64 },
    /// Uniform i.i.d. resampling (with replacement) from a finite atom set,
    /// re-centered at construction so the mean is exactly zero.
    Empirical { atoms: Vec<DVector<f64>> },
}

/// A noise model together with its sup-norm bound and covariance `W`.
#[derive(Debug, Clone)]
pub struct NoiseModel {
    n: usize,
    kind: NoiseKind,
    bound: f64,
    covariance: DMatrix<f64>,
}

impl NoiseModel {
    pub fn uniform_box(n: usize, half_width: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidNoiseModel("dimension must be positive".into()));
        }
        if !(half_width > 0.0) || !half_width.is_finite() {
            return Err(Error::InvalidNoiseModel(
                "uniform_box half_width must be positive and finite".into(),
            ));
        }
        Ok(NoiseModel {
            n,
            kind: NoiseKind::UniformBox { half_width },
            bound: half_width * (n as f64).sqrt(),
            covariance: DMatrix::identity(n, n) * (half_width * half_width / 3.0),
        })
    }

    /// `half_width = √3` gives unit variance per coordinate.
    pub fn unit_variance_uniform(n: usize) -> Self {
        NoiseModel::uniform_box(n, 3f64.sqrt()).expect("positive half width")
    }

    pub fn truncated_gaussian(n: usize, sigma: f64, radius: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidNoiseModel("dimension must be positive".into()));
        }
        if !(sigma > 0.0) || !(radius > 0.0) || !sigma.is_finite() || !radius.is_finite() {
            return Err(Error::InvalidNoiseModel(
                "truncated_gaussian sigma and radius must be positive and finite".into(),
            ));
        }
        let t = (radius / sigma).powi(2);
        let chi_n = ChiSquared::new(n as f64)
            .map_err(|e| Error::InvalidNoiseModel(format!("chi-squared setup: {e}")))?;
        let chi_n2 = ChiSquared::new((n + 2) as f64)
            .map_err(|e| Error::InvalidNoiseModel(format!("chi-squared setup: {e}")))?;
        let accept = chi_n.cdf(t);
        if accept < 1e-3 {
            return Err(Error::InvalidNoiseModel(format!(
                "truncation radius keeps only {accept:.2e} of the Gaussian mass; \
                 rejection sampling would be impractical"
            )));
        }
        // Radially symmetric truncation: the mean is exactly zero and the
        // covariance stays isotropic, W = sigma² * F_{n+2}(t)/F_n(t) * I.
        let shrink = chi_n2.cdf(t) / accept;
        Ok(NoiseModel {
            n,
            kind: NoiseKind::TruncatedGaussian { sigma, radius },
            bound: radius,
            covariance: DMatrix::identity(n, n) * (sigma * sigma * shrink),
        })
    }

    pub fn scaled_rademacher(n: usize, scale: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidNoiseModel("dimension must be positive".into()));
        }
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::InvalidNoiseModel(
                "scaled_rademacher scale must be positive and finite".into(),
            ));
        }
        Ok(NoiseModel {
            n,
            kind: NoiseKind::ScaledRademacher { scale },
            bound: scale * (n as f64).sqrt(),
            covariance: DMatrix::identity(n, n) * (scale * scale),
        })
    }

    /// Atoms are re-centered so the resampling distribution has mean
    /// exactly zero, as the model requires.
    pub fn empirical(atoms: Vec<DVector<f64>>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidNoiseModel("empirical atom set is empty".into()));
        }
        let n = atoms[0].len();
        if n == 0 {
            return Err(Error::InvalidNoiseModel("atoms must be non-empty vectors".into()));
        }
        if atoms.iter().any(|a| a.len() != n) {
            return Err(Error::InvalidNoiseModel(
                "all atoms must share one dimension".into(),
            ));
        }
        if atoms.iter().any(|a| a.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidNoiseModel("atoms must be finite".into()));
        }
        let count = atoms.len() as f64;
        let mean = atoms.iter().fold(DVector::zeros(n), |acc, a| acc + a) / count;
        let centered: Vec<DVector<f64>> = atoms.into_iter().map(|a| a - &mean).collect();
        let mut cov = DMatrix::zeros(n, n);
        for a in &centered {
            cov += a * a.transpose();
        }
        cov /= count;
        let bound = centered.iter().map(|a| a.norm()).fold(0.0, f64::max);
        Ok(NoiseModel {
            n,
            kind: NoiseKind::Empirical { atoms: centered },
            bound: bound.max(f64::MIN_POSITIVE),
            covariance: symmetrize(&cov),
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> &NoiseKind {
        &self.kind
    }

    /// Sup of `‖w‖₂` over the support.
    pub fn bound(&self) -> f64 {
        self.bound
    }

    /// Covariance `W` of a single draw.
    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    /// One draw. Every sample satisfies `‖w‖₂ ≤ bound`, asserted here.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        let w = match &self.kind {
            NoiseKind::UniformBox { half_width } => DVector::from_fn(self.n, |_, _| {
                rng.random_range(-half_width..=*half_width)
            }),
            NoiseKind::TruncatedGaussian { sigma, radius } => loop {
                let cand = DVector::from_fn(self.n, |_, _| {
                    let z: f64 = rng.sample(StandardNormal);
                    sigma * z
                });
                if cand.norm() <= *radius {
                    break cand;
                }
            },
            NoiseKind::ScaledRademacher { scale } => DVector::from_fn(self.n, |_, _| {
                if rng.random::<bool>() {
                    *scale
                } else {
                    -*scale
                }
            }),
            NoiseKind::Empirical { atoms } => {
                atoms[rng.random_range(0..atoms.len())].clone()
            }
        };
        assert!(
            w.norm() <= self.bound * (1.0 + 1e-12),
            "noise draw violated its support bound"
        );
        w
    }
}

/// Deterministic i.i.d. noise sequence: a pure function of `(model, T, seed)`.
pub fn sample_noise(model: &NoiseModel, horizon: Horizon, seed: u64) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..horizon.steps()).map(|_| model.sample(&mut rng)).collect()
}

/// Load a `SystemSpec` and `NoiseModel` from the JSON document format
/// `{"A": [[..]], "B": [[..]], "Q": [[..]], "R": [[..]], "Qf": [[..]]?,
///   "noise": {"kind": "...", "params": {...}}}` (row-major matrices).
/// Errors name the offending field by path.
pub fn load_spec_json(text: &str) -> Result<(SystemSpec, NoiseModel)> {
    let root: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: "$".into(),
        reason: format!("invalid JSON: {e}"),
    })?;
    let obj = as_object(&root, "$")?;
    for key in obj.keys() {
        if !matches!(key.as_str(), "A" | "B" | "Q" | "R" | "Qf" | "noise") {
            return Err(Error::Parse {
                path: key.clone(),
                reason: "unknown key (expected A, B, Q, R, Qf, noise)".into(),
            });
        }
    }

    let a = parse_matrix(obj, "A")?;
    let b = parse_matrix(obj, "B")?;
    let q = parse_matrix(obj, "Q")?;
    let r = parse_matrix(obj, "R")?;
    let q_f = if obj.contains_key("Qf") {
        Some(parse_matrix(obj, "Qf")?)
    } else {
        None
    };
    let spec = SystemSpec::new(a, b, q, r, q_f)?;

    let noise_val = obj.get("noise").ok_or_else(|| Error::Parse {
        path: "noise".into(),
        reason: "missing field".into(),
    })?;
    let noise = parse_noise(noise_val, spec.n())?;
    Ok((spec, noise))
}

/// Read a whole spec file; see [`load_spec_json`].
pub fn load_spec_file(path: &std::path::Path) -> Result<(SystemSpec, NoiseModel)> {
    let text = std::fs::read_to_string(path)?;
    load_spec_json(&text)
}

fn as_object<'v>(
    v: &'v serde_json::Value,
    path: &str,
) -> Result<&'v serde_json::Map<String, serde_json::Value>> {
    v.as_object().ok_or_else(|| Error::Parse {
        path: path.into(),
        reason: "expected an object".into(),
    })
}

fn parse_matrix(
    obj: &serde_json::Map<String, serde_json::Value>,
    key: &str,
) -> Result<DMatrix<f64>> {
    let v = obj.get(key).ok_or_else(|| Error::Parse {
        path: key.into(),
        reason: "missing field".into(),
    })?;
    let rows = v.as_array().ok_or_else(|| Error::Parse {
        path: key.into(),
        reason: "expected an array of rows".into(),
    })?;
    if rows.is_empty() {
        return Err(Error::Parse {
            path: key.into(),
            reason: "matrix has no rows".into(),
        });
    }
    let mut data: Vec<f64> = Vec::new();
    let mut ncols = 0usize;
    for (i, row) in rows.iter().enumerate() {
        let row = row.as_array().ok_or_else(|| Error::Parse {
            path: format!("{key}[{i}]"),
            reason: "expected an array of numbers".into(),
        })?;
        if i == 0 {
            ncols = row.len();
            if ncols == 0 {
                return Err(Error::Parse {
                    path: format!("{key}[0]"),
                    reason: "row is empty".into(),
                });
            }
        } else if row.len() != ncols {
            return Err(Error::Parse {
                path: format!("{key}[{i}]"),
                reason: format!("row length {} != {}", row.len(), ncols),
            });
        }
        for (j, cell) in row.iter().enumerate() {
            let x = cell.as_f64().ok_or_else(|| Error::Parse {
                path: format!("{key}[{i}][{j}]"),
                reason: "expected a number".into(),
            })?;
            if !x.is_finite() {
                return Err(Error::Parse {
                    path: format!("{key}[{i}][{j}]"),
                    reason: "expected a finite number".into(),
                });
            }
            data.push(x);
        }
    }
    Ok(DMatrix::from_row_slice(rows.len(), ncols, &data))
}

fn parse_noise(v: &serde_json::Value, n: usize) -> Result<NoiseModel> {
    let obj = as_object(v, "noise")?;
    for key in obj.keys() {
        if !matches!(key.as_str(), "kind" | "params") {
            return Err(Error::Parse {
                path: format!("noise.{key}"),
                reason: "unknown key (expected kind, params)".into(),
            });
        }
    }
    let kind = obj
        .get("kind")
        .and_then(|k| k.as_str())
        .ok_or_else(|| Error::Parse {
            path: "noise.kind".into(),
            reason: "expected a string".into(),
        })?;
    let params = obj.get("params").map(|p| as_object(p, "noise.params")).transpose()?;
    let num = |name: &str| -> Result<f64> {
        params
            .and_then(|p| p.get(name))
            .and_then(|x| x.as_f64())
            .ok_or_else(|| Error::Parse {
                path: format!("noise.params.{name}"),
                reason: "expected a number".into(),
            })
    };
    match kind {
        "uniform_box" => NoiseModel::uniform_box(n, num("half_width")?),
        "truncated_gaussian" => NoiseModel::truncated_gaussian(n, num("sigma")?, num("radius")?),
        "scaled_rademacher" => NoiseModel::scaled_rademacher(n, num("scale")?),
        "empirical" => {
            let atoms_val = params
                .and_then(|p| p.get("atoms"))
                .and_then(|a| a.as_array())
                .ok_or_else(|| Error::Parse {
                    path: "noise.params.atoms".into(),
                    reason: "expected an array of vectors".into(),
                })?;
            let mut atoms = Vec::with_capacity(atoms_val.len());
            for (i, atom) in atoms_val.iter().enumerate() {
                let row = atom.as_array().ok_or_else(|| Error::Parse {
                    path: format!("noise.params.atoms[{i}]"),
                    reason: "expected an array of numbers".into(),
                })?;
                let mut vals = Vec::with_capacity(row.len());
                for (j, cell) in row.iter().enumerate() {
                    vals.push(cell.as_f64().ok_or_else(|| Error::Parse {
                        path: format!("noise.params.atoms[{i}][{j}]"),
                        reason: "expected a number".into(),
                    })?);
                }
                if vals.len() != n {
                    return Err(Error::Parse {
                        path: format!("noise.params.atoms[{i}]"),
                        reason: format!("atom length {} != state dimension {}", vals.len(), n),
                    });
                }
                atoms.push(DVector::from_vec(vals));
            }
            NoiseModel::empirical(atoms)
        }
        other => Err(Error::Parse {
            path: "noise.kind".into(),
            reason: format!(
                "unknown kind {other:?} (expected uniform_box, truncated_gaussian, \
                 scaled_rademacher, empirical)"
            ),
        }),
    }
}
