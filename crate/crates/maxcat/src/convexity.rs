//! Numerical certification of the convexity structure behind the model.
//!
//! Strict convexity of the mathematical entropy `rho E~` in the conserved
//! variables is what buys symmetrizability and hyperbolicity, so this
//! module verifies it three independent ways:
//!
//! 1. **Closed-form leading principal minors** of the auxiliary scalar
//!    potentials `e^{qy} / (x^p z^r ...)` that the volumetric energies
//!    reduce to, cross-checked against finite-difference Hessians
//!    ([`pg_minors`], [`nasg_minors`], [`kbkz_minors`]). Positivity of
//!    every leading minor is Sylvester's criterion for a positive
//!    definite Hessian.
//! 2. **Sampled FD Hessians** of the actual energy functionals over the
//!    admissible set ([`strict_convexity_sample`]): smallest eigenvalue
//!    positive at every draw.
//! 3. **Midpoint inequalities** `g((a+b)/2) <= (g(a)+g(b))/2` on random
//!    pairs, strict for the strictly convex targets and slack-tolerant
//!    for the merely convex trace term (which is flat along the joint
//!    scaling `F -> t F`, `Y -> t^4 Y`).
//!
//! All sampling is ChaCha-seeded and rejection loops consume the stream
//! deterministically, so reports are reproducible bit for bit.

use crate::eos::VolumetricEos;
use crate::fd::{self, FdError};
use crate::state::{math_entropy, to_primitive, ConservedState, Material, DIM};
use crate::tensor::{Mat3, SymMat3};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConvexityError {
    #[error("parameter out of domain: {0}")]
    Domain(String),
    #[error("{label} rejected too many draws ({accepted} accepted of {attempted})")]
    SamplingFailure {
        label: &'static str,
        accepted: usize,
        attempted: usize,
    },
    #[error(transparent)]
    Fd(#[from] FdError),
}

fn require(ok: bool, msg: &str) -> Result<(), ConvexityError> {
    if ok {
        Ok(())
    } else {
        Err(ConvexityError::Domain(msg.to_string()))
    }
}

// =====================================================================
// Closed-form leading principal minors
// =====================================================================

/// Leading principal minors of the Hessian of
/// `f(x, y, z) = exp(q y) / (x^p z^r)` on `x, z > 0` with `p, q, r > 0`.
///
/// Returns `(H1, H2, H3)`:
///
/// ```text
/// H1 = p (p+1) e^{qy} / (x^{p+2} z^r)
/// H2 = q^2 p   e^{2qy} / (x^{2p+2} z^{2r})
/// H3 = q^2 p r e^{3qy} / (x^{3p+2} z^{3r+2})
/// ```
///
/// Every factor is positive, so by Sylvester's criterion the Hessian is
/// positive definite and `f` is strictly convex on its domain. This is
/// the shape of the polytropic tilde potential in `(1/rho, eta, y)`.
pub fn pg_minors(
    p: f64,
    q: f64,
    r: f64,
    x: f64,
    y: f64,
    z: f64,
) -> Result<[f64; 3], ConvexityError> {
    require(p > 0.0 && q > 0.0 && r > 0.0, "p, q, r must be positive")?;
    require(x > 0.0 && z > 0.0, "x and z must be positive")?;
    Ok([
        p * (p + 1.0) * (q * y).exp() / (x.powf(p + 2.0) * z.powf(r)),
        q * q * p * (2.0 * q * y).exp() / (x.powf(2.0 * p + 2.0) * z.powf(2.0 * r)),
        q * q * p * r * (3.0 * q * y).exp() / (x.powf(3.0 * p + 2.0) * z.powf(3.0 * r + 2.0)),
    ])
}

/// Leading principal minors of the Hessian of
/// `f(x, y, z) = exp(q y) / ((x-b)^p x^r z^r)` on `x > b >= 0`, `z > 0`,
/// the covolume (stiffened-gas) analogue of [`pg_minors`].
///
/// ```text
/// H1 = e^{qy} / ((x-b)^{p+2} x^{r+2} z^r)
///        * [ (p+r)(1+p+r) x^2 - 2br(1+p+r) x + b^2 r(1+r) ]
/// H2 = q^2 e^{2qy} / ((x-b)^{2p+2} x^{2r+2} z^{2r})
///        * [ (p+r) x^2 - 2br x + b^2 r ]
/// H3 = q^2 r e^{3qy} / ((x-b)^{3p+2} x^{3r+2} z^{3r+2})
///        * [ (p+r) x^2 - 2br x + b^2 r ]
/// ```
///
/// Both brackets are quadratics in `x` with negative discriminants
/// (`-4 b^2 p r (1+p+r)` and `-4 b^2 p r`, see [`nasg_discriminants`])
/// and positive leading coefficients, hence positive for every real `x`;
/// all three minors are therefore positive on the domain. The
/// discriminant of the first bracket also pins its linear coefficient:
/// `(2br(1+p+r))^2 - 4 (p+r)(1+p+r) b^2 r(1+r)` reduces to
/// `-4 b^2 p r (1+p+r)` only with the factor of `x` present in the
/// middle term.
pub fn nasg_minors(
    p: f64,
    q: f64,
    r: f64,
    b: f64,
    x: f64,
    y: f64,
    z: f64,
) -> Result<[f64; 3], ConvexityError> {
    require(p > 0.0 && q > 0.0 && r > 0.0, "p, q, r must be positive")?;
    require(b >= 0.0, "covolume b must be non-negative")?;
    require(x > b && z > 0.0, "need x > b and z > 0")?;
    let d = x - b;
    let bracket1 =
        (p + r) * (1.0 + p + r) * x * x - 2.0 * b * r * (1.0 + p + r) * x + b * b * r * (1.0 + r);
    let bracket2 = (p + r) * x * x - 2.0 * b * r * x + b * b * r;
    Ok([
        (q * y).exp() / (d.powf(p + 2.0) * x.powf(r + 2.0) * z.powf(r)) * bracket1,
        q * q * (2.0 * q * y).exp() / (d.powf(2.0 * p + 2.0) * x.powf(2.0 * r + 2.0) * z.powf(2.0 * r))
            * bracket2,
        q * q
            * r
            * (3.0 * q * y).exp()
            / (d.powf(3.0 * p + 2.0) * x.powf(3.0 * r + 2.0) * z.powf(3.0 * r + 2.0))
            * bracket2,
    ])
}

/// Discriminants of the two quadratic brackets of [`nasg_minors`],
/// computed from the quadratic coefficients as written there. `q` does
/// not enter either bracket (the exponential prefactor divides out).
pub fn nasg_discriminants(p: f64, _q: f64, r: f64, b: f64) -> (f64, f64) {
    let a1 = (p + r) * (1.0 + p + r);
    let l1 = -2.0 * b * r * (1.0 + p + r);
    let c1 = b * b * r * (1.0 + r);
    let a2 = p + r;
    let l2 = -2.0 * b * r;
    let c2 = b * b * r;
    (l1 * l1 - 4.0 * a1 * c1, l2 * l2 - 4.0 * a2 * c2)
}

/// The fully reduced forms of [`nasg_discriminants`]:
/// `-4 b^2 p r (1+p+r)` and `-4 b^2 p r`. Strictly negative whenever
/// `b > 0` and `p, r > 0`, which is what makes both brackets positive
/// definite quadratics.
pub fn nasg_discriminants_reduced(p: f64, r: f64, b: f64) -> (f64, f64) {
    let d2 = -4.0 * b * b * p * r;
    (d2 * (1.0 + p + r), d2)
}

/// Leading principal minors of the Hessian of the four-variable
/// auxiliary potential `f(x, y, z1, z2) = exp(q y) / (x^p z1^r z2^r)`
/// (the two-network tilde potential in `(1/rho, eta, y1, y2)`).
///
/// ```text
/// H1 = p (p+1)   e^{qy}  / (x^{p+2}  z1^r      z2^r)
/// H2 = q^2 p     e^{2qy} / (x^{2p+2} z1^{2r}   z2^{2r})
/// H3 = q^2 p r   e^{3qy} / (x^{3p+2} z1^{3r+2} z2^{3r})
/// H4 = q^2 p r^2 e^{4qy} / (x^{4p+2} z1^{4r+2} z2^{4r+2})
/// ```
pub fn kbkz_minors(
    p: f64,
    q: f64,
    r: f64,
    x: f64,
    y: f64,
    z1: f64,
    z2: f64,
) -> Result<[f64; 4], ConvexityError> {
    require(p > 0.0 && q > 0.0 && r > 0.0, "p, q, r must be positive")?;
    require(x > 0.0 && z1 > 0.0 && z2 > 0.0, "x, z1, z2 must be positive")?;
    Ok([
        p * (p + 1.0) * (q * y).exp() / (x.powf(p + 2.0) * z1.powf(r) * z2.powf(r)),
        q * q * p * (2.0 * q * y).exp()
            / (x.powf(2.0 * p + 2.0) * z1.powf(2.0 * r) * z2.powf(2.0 * r)),
        q * q * p * r * (3.0 * q * y).exp()
            / (x.powf(3.0 * p + 2.0) * z1.powf(3.0 * r + 2.0) * z2.powf(3.0 * r)),
        q * q * p * r * r * (4.0 * q * y).exp()
            / (x.powf(4.0 * p + 2.0) * z1.powf(4.0 * r + 2.0) * z2.powf(4.0 * r + 2.0)),
    ])
}

// =====================================================================
// FD cross-checks of the minors
// =====================================================================

/// The three auxiliary-potential families whose minors have closed forms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MinorFamily {
    /// `e^{qy} / (x^p z^r)`.
    Pg,
    /// `e^{qy} / ((x-b)^p x^r z^r)`.
    Nasg,
    /// `e^{qy} / (x^p z1^r z2^r)`.
    Kbkz,
}

impl MinorFamily {
    pub fn label(self) -> &'static str {
        match self {
            MinorFamily::Pg => "polytropic",
            MinorFamily::Nasg => "covolume",
            MinorFamily::Kbkz => "two-network",
        }
    }
}

/// One sampled comparison of closed-form vs finite-difference minors.
#[derive(Debug, Clone)]
pub struct MinorReport {
    pub family: MinorFamily,
    /// `(p, q, r, b)`; `b` is zero except for the covolume family.
    pub params: [f64; 4],
    /// `(x, y, z, z2)`; `z2` is zero except for the two-network family.
    pub point: [f64; 4],
    pub closed: Vec<f64>,
    pub fd: Vec<f64>,
    pub rel_err: Vec<f64>,
    pub pass: bool,
}

/// Relative FD step for the minor determinants. Larger than the step
/// used for eigenvalue checks: a determinant subtracts near-equal
/// products of Hessian entries, so the ~1e-7 second-difference roundoff
/// left at step 1e-4 can amplify past 1e-6. At 1e-3 the roundoff floor
/// is ~1e-9 per entry while the Richardson-refined truncation is still
/// ~1e-12, keeping the comparison honest at 1e-6.
const FD_REL_MINORS: f64 = 1e-3;

/// Leading principal minors of the FD Hessian of `g` at `point`.
fn fd_leading_minors<G>(g: G, point: &[f64]) -> Result<Vec<f64>, ConvexityError>
where
    G: FnMut(&[f64]) -> Result<f64, String>,
{
    let h = fd::hessian(g, point, FD_REL_MINORS)?;
    let h = (h.transpose() + &h) * 0.5;
    Ok((1..=point.len())
        .map(|k| h.view((0, 0), (k, k)).clone_owned().determinant())
        .collect())
}

/// Compare closed-form minors against FD minors at `n_samples` random
/// parameter/point tuples; a sample passes when every relative error is
/// below `tol`.
pub fn minor_sweep(
    family: MinorFamily,
    n_samples: usize,
    seed: u64,
    tol: f64,
) -> Result<Vec<MinorReport>, ConvexityError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let p = log_uniform(&mut rng, 0.3, 3.0);
        let q = log_uniform(&mut rng, 0.3, 3.0);
        let r = log_uniform(&mut rng, 0.3, 3.0);
        let b = if family == MinorFamily::Nasg {
            log_uniform(&mut rng, 0.02, 0.3)
        } else {
            0.0
        };
        let x = log_uniform(&mut rng, 0.6, 2.5);
        let y = 0.5 * gauss(&mut rng);
        let z = log_uniform(&mut rng, 0.5, 2.0);
        let z2 = if family == MinorFamily::Kbkz {
            log_uniform(&mut rng, 0.5, 2.0)
        } else {
            0.0
        };
        let (closed, fd_minors): (Vec<f64>, Vec<f64>) = match family {
            MinorFamily::Pg => {
                let closed = pg_minors(p, q, r, x, y, z)?.to_vec();
                let g = move |w: &[f64]| -> Result<f64, String> {
                    if w[0] <= 0.0 || w[2] <= 0.0 {
                        return Err("outside domain".into());
                    }
                    Ok((q * w[1]).exp() / (w[0].powf(p) * w[2].powf(r)))
                };
                (closed, fd_leading_minors(g, &[x, y, z])?)
            }
            MinorFamily::Nasg => {
                let closed = nasg_minors(p, q, r, b, x, y, z)?.to_vec();
                let g = move |w: &[f64]| -> Result<f64, String> {
                    if w[0] <= b || w[2] <= 0.0 {
                        return Err("outside domain".into());
                    }
                    Ok((q * w[1]).exp() / ((w[0] - b).powf(p) * w[0].powf(r) * w[2].powf(r)))
                };
                (closed, fd_leading_minors(g, &[x, y, z])?)
            }
            MinorFamily::Kbkz => {
                let closed = kbkz_minors(p, q, r, x, y, z, z2)?.to_vec();
                let g = move |w: &[f64]| -> Result<f64, String> {
                    if w[0] <= 0.0 || w[2] <= 0.0 || w[3] <= 0.0 {
                        return Err("outside domain".into());
                    }
                    Ok((q * w[1]).exp() / (w[0].powf(p) * w[2].powf(r) * w[3].powf(r)))
                };
                (closed, fd_leading_minors(g, &[x, y, z, z2])?)
            }
        };
        let rel_err: Vec<f64> = closed
            .iter()
            .zip(&fd_minors)
            .map(|(c, f)| (c - f).abs() / c.abs().max(f64::MIN_POSITIVE))
            .collect();
        let pass = rel_err.iter().all(|e| e.is_finite() && *e < tol);
        out.push(MinorReport {
            family,
            params: [p, q, r, b],
            point: [x, y, z, z2],
            closed,
            fd: fd_minors,
            rel_err,
            pass,
        });
    }
    Ok(out)
}

// =====================================================================
// Admissible-state sampling
// =====================================================================

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.gen_range(lo.ln()..hi.ln()).exp()
}

fn random_orthogonal(rng: &mut ChaCha8Rng) -> Mat3 {
    let g = nalgebra::Matrix3::from_fn(|_, _| gauss(rng));
    let q = g.qr().q();
    let mut e = [0.0; 9];
    for i in 0..3 {
        for j in 0..3 {
            e[3 * i + j] = q[(i, j)];
        }
    }
    Mat3::new(e)
}

/// Random SPD matrix `Q diag(lambda) Q^T` with log-uniform eigenvalues
/// in `[0.1, 10]` and a Haar-ish rotation from the QR of a Gaussian.
pub fn random_spd(rng: &mut ChaCha8Rng) -> SymMat3 {
    let q = random_orthogonal(rng);
    let lam = [
        log_uniform(rng, 0.1, 10.0),
        log_uniform(rng, 0.1, 10.0),
        log_uniform(rng, 0.1, 10.0),
    ];
    let mut e = [0.0; 6];
    let mut n = 0;
    for i in 0..3 {
        for j in i..3 {
            let mut s = 0.0;
            for (k, l) in lam.iter().enumerate() {
                s += l * q.get(i, k) * q.get(j, k);
            }
            e[n] = s;
            n += 1;
        }
    }
    SymMat3::new(e)
}

/// Random deformation gradient `I + 0.5 G` (Gaussian `G`), rejecting
/// draws with `|det F| < 0.2` so FD stencils never straddle a fold.
pub fn random_deformation(rng: &mut ChaCha8Rng) -> Mat3 {
    loop {
        let mut e = [0.0; 9];
        for v in &mut e {
            *v = 0.5 * gauss(rng);
        }
        for i in 0..3 {
            e[4 * i] += 1.0;
        }
        let f = Mat3::new(e);
        if f.det().abs() >= 0.2 {
            return f;
        }
    }
}

fn draw_state(mat: &Material, rng: &mut ChaCha8Rng) -> ConservedState {
    let rho_hi = (0.95 * mat.eos.rho_max()).min(10.0);
    let rho_lo = (0.1_f64).min(0.5 * rho_hi);
    let rho = log_uniform(rng, rho_lo, rho_hi);
    let dety = log_uniform(rng, 0.1, 10.0);
    let eta = gauss(rng);
    let q = [gauss(rng), gauss(rng), gauss(rng)];
    let v = [gauss(rng), gauss(rng), gauss(rng)];
    let y = random_spd(rng);
    let f = random_deformation(rng);
    ConservedState::from_specific(rho, eta, q, v, f, y, dety)
}

fn collect_admissible(
    mat: &Material,
    rng: &mut ChaCha8Rng,
    n: usize,
    label: &'static str,
) -> Result<Vec<ConservedState>, ConvexityError> {
    let mut out = Vec::with_capacity(n);
    let mut attempted = 0usize;
    while out.len() < n {
        attempted += 1;
        if attempted >= 100 * n.max(1) && (out.len() as f64) < 0.01 * attempted as f64 {
            return Err(ConvexityError::SamplingFailure {
                label,
                accepted: out.len(),
                attempted,
            });
        }
        let u = draw_state(mat, rng);
        if to_primitive(&u, mat).is_ok() {
            out.push(u);
        }
    }
    Ok(out)
}

/// Draw `n` admissible conserved states: `rho` and `y` log-uniform over
/// the admissible window, `eta`, `v`, `q` standard Gaussian, `Y` a
/// random SPD matrix, `F` a perturbed identity. Deterministic per seed.
pub fn sample_states(
    mat: &Material,
    n: usize,
    seed: u64,
) -> Result<Vec<ConservedState>, ConvexityError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    collect_admissible(mat, &mut rng, n, "conserved-state sampler")
}

/// Admissible states with the entropy drawn through a temperature window
/// (log-uniform in [0.1, 10], plus Gaussian noise on eta) instead of a
/// flat eta window. The solvent energy is exponential in eta, so flat
/// draws land at temperatures orders of magnitude from the reference.
/// Eigenvalue-sign checks are immune to that, but cancellation
/// measurements (the symmetrizer asymmetry ratio) lose their meaning
/// once the energy magnitude swamps f64 resolution; this sampler covers
/// the same admissible manifold at energy scales the finite-difference
/// instrument resolves.
pub fn sample_tempered_states(
    mat: &Material,
    n: usize,
    seed: u64,
) -> Result<Vec<ConservedState>, ConvexityError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    let mut attempted = 0usize;
    while out.len() < n {
        attempted += 1;
        if attempted >= 100 * n.max(1) && (out.len() as f64) < 0.01 * attempted as f64 {
            return Err(ConvexityError::SamplingFailure {
                label: "tempered conserved-state sampler",
                accepted: out.len(),
                attempted,
            });
        }
        let rho_hi = (0.95 * mat.eos.rho_max()).min(10.0);
        let rho = log_uniform(&mut rng, (0.1_f64).min(0.5 * rho_hi), rho_hi);
        let dety = log_uniform(&mut rng, 0.1, 10.0);
        let theta = log_uniform(&mut rng, 0.1, 10.0);
        let q = [gauss(&mut rng), gauss(&mut rng), gauss(&mut rng)];
        let v = [gauss(&mut rng), gauss(&mut rng), gauss(&mut rng)];
        let y = random_spd(&mut rng);
        let f = random_deformation(&mut rng);
        let Ok(y_inv_sqrt) = y.spd_inv_sqrt() else {
            continue;
        };
        let tr_c = y_inv_sqrt.congruence(&f).trace();
        let Ok(shift) = mat.entropy_shift(tr_c, rho, dety) else {
            continue;
        };
        let Ok(eta_at_theta) = mat.eos.eta_solvent(rho, theta) else {
            continue;
        };
        let eta = eta_at_theta - shift + 0.3 * gauss(&mut rng);
        let u = ConservedState::from_specific(rho, eta, q, v, f, y, dety);
        if to_primitive(&u, mat).is_ok() {
            out.push(u);
        }
    }
    Ok(out)
}

// =====================================================================
// Sampled strict-convexity verification
// =====================================================================

/// Energy functionals whose convexity the suite certifies numerically.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    /// `rho E~` as a function of all 24 conserved fields: FD Hessian SPD
    /// at every sample, strict midpoint inequality on random pairs.
    ConservedEntropy,
    /// The solvent potential as a function of `(1/rho, eta, y)` at frozen
    /// deformation: strictly convex; for a covolume law the report also
    /// confirms the affine tail contributes nothing to the Hessian.
    SolventPotential,
    /// `tr(F Y^{-1/2} F^T)` as a function of `(F, Y)` jointly: convex but
    /// not strictly (flat along `F -> t F`, `Y -> t^4 Y`), so only the
    /// slack-tolerant midpoint inequality is asserted.
    ExtensionTrace,
    /// The finite-extensibility energy `-b^2 log(1 - tr C / b^2)`:
    /// strictly convex in `F` at frozen `Y`, convex in `(F, Y)` jointly.
    ExtensionEnergy,
}

/// One verified property with its worst observed margin.
#[derive(Debug, Clone)]
pub struct CheckRecord {
    pub label: String,
    pub samples: usize,
    /// Smallest margin observed: minimal Hessian eigenvalue, minimal
    /// midpoint gap `(g(a)+g(b))/2 - g(mid)`, or (negated) largest
    /// spurious Hessian norm for the vanishing-tail check.
    pub worst: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Default)]
pub struct VerificationReport {
    pub records: Vec<CheckRecord>,
}

impl VerificationReport {
    pub fn all_pass(&self) -> bool {
        self.records.iter().all(|r| r.pass)
    }

    pub fn merge(&mut self, other: VerificationReport) {
        self.records.extend(other.records);
    }
}

/// Number of random midpoint pairs each target checks.
const MIDPOINT_PAIRS: usize = 100;
/// Slack for the non-strict midpoint inequalities (the convex-only
/// targets have exactly flat directions, so the gap may round to zero
/// from either side).
const MIDPOINT_SLACK: f64 = 1e-10;
/// Relative FD step for sampled Hessians (with Richardson refinement).
const FD_REL: f64 = 1e-4;

pub(crate) fn min_eigenvalue(h: &DMatrix<f64>) -> Result<f64, ConvexityError> {
    let sym = (h.transpose() + h) * 0.5;
    let eig = sym
        .try_symmetric_eigen(1e-13, 50_000)
        .ok_or_else(|| ConvexityError::Domain("symmetric eigensolver stalled".into()))?;
    Ok(eig
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |m, &x| m.min(x)))
}

fn midpoint_state(a: &ConservedState, b: &ConservedState) -> ConservedState {
    let (aa, bb) = (a.to_array(), b.to_array());
    let mut m = [0.0; DIM];
    for k in 0..DIM {
        m[k] = 0.5 * (aa[k] + bb[k]);
    }
    ConservedState::from_array(&m)
}

fn entropy_of_array(arr: &[f64], mat: &Material) -> Result<f64, String> {
    let u = ConservedState::from_array(arr.try_into().expect("state dimension"));
    math_entropy(&u, mat).map_err(|e| e.to_string())
}

fn conserved_entropy_checks(
    mat: &Material,
    n_samples: usize,
    seed: u64,
) -> Result<VerificationReport, ConvexityError> {
    let states = sample_states(mat, n_samples, seed)?;
    // Hessians are embarrassingly parallel; the fold over the collected
    // (index-ordered) results keeps the report thread-count independent.
    let eigs: Vec<Result<f64, ConvexityError>> = states
        .par_iter()
        .map(|u| {
            let arr = u.to_array();
            let h = fd::hessian(|w| entropy_of_array(w, mat), &arr, FD_REL)?;
            min_eigenvalue(&h)
        })
        .collect();
    let mut worst_eig = f64::INFINITY;
    for e in eigs {
        worst_eig = worst_eig.min(e?);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut worst_gap = f64::INFINITY;
    let mut pairs = 0;
    let mut attempted = 0;
    while pairs < MIDPOINT_PAIRS {
        attempted += 1;
        if attempted > 100 * MIDPOINT_PAIRS {
            return Err(ConvexityError::SamplingFailure {
                label: "midpoint pair sampler",
                accepted: pairs,
                attempted,
            });
        }
        let a = draw_state(mat, &mut rng);
        let b = draw_state(mat, &mut rng);
        let mid = midpoint_state(&a, &b);
        let (Ok(ga), Ok(gb), Ok(gm)) = (
            math_entropy(&a, mat),
            math_entropy(&b, mat),
            math_entropy(&mid, mat),
        ) else {
            continue;
        };
        worst_gap = worst_gap.min(0.5 * (ga + gb) - gm);
        pairs += 1;
    }

    Ok(VerificationReport {
        records: vec![
            CheckRecord {
                label: "conserved-entropy FD Hessian min eigenvalue".into(),
                samples: n_samples,
                worst: worst_eig,
                pass: worst_eig > 0.0,
            },
            CheckRecord {
                label: "conserved-entropy strict midpoint inequality".into(),
                samples: MIDPOINT_PAIRS,
                worst: worst_gap,
                pass: worst_gap > 0.0,
            },
        ],
    })
}

fn solvent_potential_checks(
    mat: &Material,
    n_samples: usize,
    seed: u64,
) -> Result<VerificationReport, ConvexityError> {
    let states = sample_states(mat, n_samples, seed)?;
    let mut worst_eig = f64::INFINITY;
    let mut worst_tail = 0.0_f64;
    let tail = match mat.eos {
        VolumetricEos::Nasg { b, q, p_inf, .. } => Some((b, q, p_inf)),
        VolumetricEos::Polytropic { .. } => None,
    };
    for u in &states {
        let pv = to_primitive(u, mat).expect("sampler only returns admissible states");
        let tr_c = pv.tr_c;
        let g = |w: &[f64]| -> Result<f64, String> {
            if w[0] <= 0.0 || w[2] <= 0.0 {
                return Err("outside domain".into());
            }
            let rho = 1.0 / w[0];
            let shift = mat.entropy_shift(tr_c, rho, w[2]).map_err(|e| e.to_string())?;
            mat.eos.e_solvent(rho, w[1] + shift).map_err(|e| e.to_string())
        };
        let point = [1.0 / pv.rho, pv.eta, pv.dety];
        let h = fd::hessian(g, &point, FD_REL)?;
        worst_eig = worst_eig.min(min_eigenvalue(&h)?);
        if let Some((b, q_off, p_inf)) = tail {
            let affine = |w: &[f64]| -> Result<f64, String> { Ok((w[0] - b) * p_inf + q_off) };
            let ht = fd::hessian(affine, &point, FD_REL)?;
            worst_tail = worst_tail.max(ht.norm());
        }
    }

    // Midpoint pairs live in the (1/rho, eta, y) box at a frozen trace.
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x51a2_33f1_90cd_aa07);
    let mut worst_gap = f64::INFINITY;
    let rho_hi = (0.95 * mat.eos.rho_max()).min(10.0);
    for u in states.iter().cycle().take(MIDPOINT_PAIRS) {
        let pv = to_primitive(u, mat).expect("admissible");
        let tr_c = pv.tr_c;
        let g = |x: f64, y: f64, z: f64| -> f64 {
            let rho = 1.0 / x;
            let shift = mat.entropy_shift(tr_c, rho, z).expect("interior point");
            mat.eos.e_solvent(rho, y + shift).expect("interior point")
        };
        let draw3 = |rng: &mut ChaCha8Rng| {
            [
                1.0 / log_uniform(rng, 0.1_f64.min(0.5 * rho_hi), rho_hi),
                gauss(rng),
                log_uniform(rng, 0.1, 10.0),
            ]
        };
        let a = draw3(&mut rng);
        let b = draw3(&mut rng);
        let gm = g(
            0.5 * (a[0] + b[0]),
            0.5 * (a[1] + b[1]),
            0.5 * (a[2] + b[2]),
        );
        worst_gap = worst_gap.min(0.5 * (g(a[0], a[1], a[2]) + g(b[0], b[1], b[2])) - gm);
    }

    let mut records = vec![
        CheckRecord {
            label: "solvent-potential FD Hessian min eigenvalue in (1/rho, eta, y)".into(),
            samples: n_samples,
            worst: worst_eig,
            pass: worst_eig > 0.0,
        },
        CheckRecord {
            label: "solvent-potential strict midpoint inequality".into(),
            samples: MIDPOINT_PAIRS,
            worst: worst_gap,
            pass: worst_gap > 0.0,
        },
    ];
    if tail.is_some() {
        records.push(CheckRecord {
            label: "covolume affine tail contributes zero Hessian".into(),
            samples: n_samples,
            worst: -worst_tail,
            pass: worst_tail < 1e-6,
        });
    }
    Ok(VerificationReport { records })
}

/// `tr(F Y^{-1/2} F^T)` from a packed `[F(9), Y(6)]` coordinate vector.
fn trace_term(w: &[f64]) -> Result<f64, String> {
    let f = Mat3::new(w[0..9].try_into().expect("nine deformation entries"));
    let y = SymMat3::new(w[9..15].try_into().expect("six strain entries"));
    let yis = y.spd_inv_sqrt().map_err(|e| e.to_string())?;
    Ok(yis.congruence(&f).trace())
}

fn pack_fy(f: &Mat3, y: &SymMat3) -> [f64; 15] {
    let mut w = [0.0; 15];
    w[0..9].copy_from_slice(&f.e);
    w[9..15].copy_from_slice(&y.e);
    w
}

fn extension_trace_checks(n_samples: usize, seed: u64) -> Result<VerificationReport, ConvexityError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs = n_samples.max(MIDPOINT_PAIRS);
    let mut worst_gap = f64::INFINITY;
    for _ in 0..pairs {
        let a = pack_fy(&random_deformation(&mut rng), &random_spd(&mut rng));
        let b = pack_fy(&random_deformation(&mut rng), &random_spd(&mut rng));
        let mut m = [0.0; 15];
        for k in 0..15 {
            m[k] = 0.5 * (a[k] + b[k]);
        }
        let (ga, gb, gm) = (
            trace_term(&a).map_err(ConvexityError::Domain)?,
            trace_term(&b).map_err(ConvexityError::Domain)?,
            trace_term(&m).map_err(ConvexityError::Domain)?,
        );
        worst_gap = worst_gap.min(0.5 * (ga + gb) - gm);
    }
    Ok(VerificationReport {
        records: vec![CheckRecord {
            label: "trace-term midpoint inequality in (F, Y), non-strict".into(),
            samples: pairs,
            worst: worst_gap,
            pass: worst_gap > -MIDPOINT_SLACK,
        }],
    })
}

fn extension_energy_checks(
    mat: &Material,
    n_samples: usize,
    seed: u64,
) -> Result<VerificationReport, ConvexityError> {
    let limit = mat.elastic.tr_c_limit();
    if !limit.is_finite() {
        return Err(ConvexityError::Domain(
            "extension-energy target needs a finite-extensibility elastic law".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Draw (F, Y) with tr C comfortably inside the barrier so the FD
    // stencil and midpoints stay admissible.
    let draw_pair = |rng: &mut ChaCha8Rng| -> Result<(Mat3, SymMat3), ConvexityError> {
        let mut attempted = 0;
        loop {
            attempted += 1;
            if attempted > 10_000 {
                return Err(ConvexityError::SamplingFailure {
                    label: "extension-energy sampler",
                    accepted: 0,
                    attempted,
                });
            }
            let f = random_deformation(rng);
            let y = random_spd(rng);
            let Ok(yis) = y.spd_inv_sqrt() else { continue };
            if yis.congruence(&f).trace() < 0.8 * limit {
                return Ok((f, y));
            }
        }
    };

    let mut worst_eig = f64::INFINITY;
    for _ in 0..n_samples {
        let (f, y) = draw_pair(&mut rng)?;
        let yis = y.spd_inv_sqrt().map_err(|e| ConvexityError::Domain(e.to_string()))?;
        let g = |w: &[f64]| -> Result<f64, String> {
            let fv = Mat3::new(w.try_into().expect("nine deformation entries"));
            let tr_c = yis.congruence(&fv).trace();
            mat.elastic.phi(tr_c).map_err(|e| e.to_string())
        };
        let h = fd::hessian(g, &f.e, FD_REL)?;
        worst_eig = worst_eig.min(min_eigenvalue(&h)?);
    }

    let mut worst_gap = f64::INFINITY;
    for _ in 0..MIDPOINT_PAIRS {
        let (fa, ya) = draw_pair(&mut rng)?;
        let (fb, yb) = draw_pair(&mut rng)?;
        let a = pack_fy(&fa, &ya);
        let b = pack_fy(&fb, &yb);
        let mut m = [0.0; 15];
        for k in 0..15 {
            m[k] = 0.5 * (a[k] + b[k]);
        }
        let phi_of = |w: &[f64]| -> Result<f64, ConvexityError> {
            let tr = trace_term(w).map_err(ConvexityError::Domain)?;
            mat.elastic
                .phi(tr)
                .map_err(|e| ConvexityError::Domain(e.to_string()))
        };
        worst_gap = worst_gap.min(0.5 * (phi_of(&a)? + phi_of(&b)?) - phi_of(&m)?);
    }

    Ok(VerificationReport {
        records: vec![
            CheckRecord {
                label: "extension-energy FD Hessian min eigenvalue in F".into(),
                samples: n_samples,
                worst: worst_eig,
                pass: worst_eig > 0.0,
            },
            CheckRecord {
                label: "extension-energy midpoint inequality in (F, Y)".into(),
                samples: MIDPOINT_PAIRS,
                worst: worst_gap,
                pass: worst_gap > -MIDPOINT_SLACK,
            },
        ],
    })
}

/// Run the sampled convexity verification for one target functional.
///
/// Every record reports the worst margin seen over the whole sample so
/// a marginal pass is visible, not just a boolean.
pub fn strict_convexity_sample(
    target: Target,
    mat: &Material,
    n_samples: usize,
    seed: u64,
) -> Result<VerificationReport, ConvexityError> {
    require(n_samples >= 1, "need at least one sample")?;
    match target {
        Target::ConservedEntropy => conserved_entropy_checks(mat, n_samples, seed),
        Target::SolventPotential => solvent_potential_checks(mat, n_samples, seed),
        Target::ExtensionTrace => extension_trace_checks(n_samples, seed),
        Target::ExtensionEnergy => extension_energy_checks(mat, n_samples, seed),
    }
}

// =====================================================================
// Tests
// =====================================================================

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eos::ElasticLaw;

    fn nasg_material() -> Material {
        let mut mat = Material::baseline();
        mat.eos = VolumetricEos::Nasg {
            c_v: 1.0,
            gamma: 1.4,
            theta_ref: 1.0,
            rho_ref: 1.0,
            b: 0.1,
            q: 0.3,
            p_inf: 2.0,
        };
        mat
    }

    fn fenep_material(b_ext: f64) -> Material {
        let mut mat = Material::baseline();
        mat.elastic = ElasticLaw::FeneP {
            k0: 0.5,
            k1: 0.5,
            b_ext,
        };
        mat
    }

    #[test]
    fn minors_at_the_unit_point_take_their_tabulated_values() {
        assert_eq!(pg_minors(1.0, 1.0, 1.0, 1.0, 0.0, 1.0).unwrap(), [2.0, 1.0, 1.0]);
        assert_eq!(
            kbkz_minors(1.0, 1.0, 1.0, 1.0, 0.0, 1.0, 1.0).unwrap(),
            [2.0, 1.0, 1.0, 1.0]
        );
    }

    #[test]
    fn closed_form_minors_match_finite_difference_hessians() {
        for family in [MinorFamily::Pg, MinorFamily::Nasg, MinorFamily::Kbkz] {
            let reports = minor_sweep(family, 25, 37, 1e-6).unwrap();
            for rep in &reports {
                assert!(
                    rep.pass,
                    "{} sample at params {:?}, point {:?}: rel errs {:?}",
                    family.label(),
                    rep.params,
                    rep.point,
                    rep.rel_err
                );
                for m in &rep.closed {
                    assert!(*m > 0.0, "closed-form minor not positive: {m}");
                }
            }
        }
    }

    #[test]
    fn covolume_minors_reduce_to_polytropic_when_the_covolume_vanishes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let p = log_uniform(&mut rng, 0.3, 3.0);
            let q = log_uniform(&mut rng, 0.3, 3.0);
            let r = log_uniform(&mut rng, 0.3, 3.0);
            let x = log_uniform(&mut rng, 0.5, 2.0);
            let y = gauss(&mut rng);
            let z = log_uniform(&mut rng, 0.5, 2.0);
            let a = nasg_minors(p, q, r, 0.0, x, y, z).unwrap();
            // With b = 0 the x-powers merge into a single exponent p + r.
            let b = pg_minors(p + r, q, r, x, y, z).unwrap();
            for k in 0..3 {
                assert!(
                    (a[k] - b[k]).abs() <= 1e-12 * b[k].abs(),
                    "minor {k}: {} vs {}",
                    a[k],
                    b[k]
                );
            }
        }
    }

    #[test]
    fn bracket_discriminants_match_their_reduced_forms() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let p = log_uniform(&mut rng, 0.3, 3.0);
            let q = log_uniform(&mut rng, 0.3, 3.0);
            let r = log_uniform(&mut rng, 0.3, 3.0);
            let b = log_uniform(&mut rng, 0.02, 0.5);
            let (d1, d2) = nasg_discriminants(p, q, r, b);
            let (e1, e2) = nasg_discriminants_reduced(p, r, b);
            assert!((d1 - e1).abs() <= 1e-12 * e1.abs().max(1.0), "{d1} vs {e1}");
            assert!((d2 - e2).abs() <= 1e-12 * e2.abs().max(1.0), "{d2} vs {e2}");
            assert!(d1 < 0.0 && d2 < 0.0);
        }
    }

    #[test]
    fn sampler_is_deterministic_and_respects_the_density_window() {
        let mat = nasg_material();
        let a = sample_states(&mat, 20, 99).unwrap();
        let b = sample_states(&mat, 20, 99).unwrap();
        for (u, w) in a.iter().zip(&b) {
            assert_eq!(u.to_array(), w.to_array());
        }
        for u in &a {
            assert!(u.rho < 0.95 * mat.eos.rho_max());
        }
    }

    #[test]
    fn tempered_sampler_keeps_temperatures_near_the_reference() {
        let mat = Material::baseline();
        let a = sample_tempered_states(&mat, 30, 99).unwrap();
        let b = sample_tempered_states(&mat, 30, 99).unwrap();
        for (u, w) in a.iter().zip(&b) {
            assert_eq!(u.to_array(), w.to_array());
        }
        for u in &a {
            let pv = to_primitive(u, &mat).unwrap();
            assert!(
                pv.theta > 0.02 && pv.theta < 50.0,
                "temperature {} left the window",
                pv.theta
            );
        }
    }

    #[test]
    fn impossible_extensibility_reports_sampling_failure() {
        // tr C is ~3 at any gentle state; a bound of 0.01 rejects all.
        let err = sample_states(&fenep_material(0.1), 5, 3).unwrap_err();
        assert!(matches!(err, ConvexityError::SamplingFailure { .. }), "{err}");
    }

    #[test]
    fn conserved_entropy_hessian_is_positive_definite_at_samples() {
        let report =
            strict_convexity_sample(Target::ConservedEntropy, &Material::baseline(), 10, 7)
                .unwrap();
        assert!(report.all_pass(), "{:?}", report.records);
        assert!(report.records[0].worst > 0.0);
    }

    #[test]
    fn conserved_entropy_stays_convex_for_covolume_and_extensible_laws() {
        for mat in [nasg_material(), fenep_material(6.0)] {
            let report = strict_convexity_sample(Target::ConservedEntropy, &mat, 5, 21).unwrap();
            assert!(report.all_pass(), "{:?}", report.records);
        }
    }

    #[test]
    fn solvent_potential_is_strictly_convex_in_its_three_variables() {
        for mat in [Material::baseline(), nasg_material()] {
            let report = strict_convexity_sample(Target::SolventPotential, &mat, 10, 13).unwrap();
            assert!(report.all_pass(), "{:?}", report.records);
        }
        // The covolume material's report carries the extra vanishing-tail
        // record.
        let report = strict_convexity_sample(Target::SolventPotential, &nasg_material(), 5, 13)
            .unwrap();
        assert_eq!(report.records.len(), 3);
    }

    #[test]
    fn trace_term_midpoint_inequality_holds_jointly() {
        let report =
            strict_convexity_sample(Target::ExtensionTrace, &Material::baseline(), 50, 17)
                .unwrap();
        assert!(report.all_pass(), "{:?}", report.records);
    }

    #[test]
    fn extension_energy_is_strictly_convex_in_the_deformation() {
        let report =
            strict_convexity_sample(Target::ExtensionEnergy, &fenep_material(5.0), 8, 29).unwrap();
        assert!(report.all_pass(), "{:?}", report.records);
    }

    #[test]
    fn extension_energy_requires_a_finite_extensibility_law() {
        let err = strict_convexity_sample(Target::ExtensionEnergy, &Material::baseline(), 3, 1)
            .unwrap_err();
        assert!(matches!(err, ConvexityError::Domain(_)), "{err}");
    }
}
