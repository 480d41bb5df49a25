//! Risk certificates assembled from measured empirical terms and dataset
//! geometry.
//!
//! Every certificate has the shape
//!
//! ```text
//! emp_rec + kl_sum/λ + [avg_dist] + exp_moment + ln(1/δ)/λ + [K_θ · prior_gap]
//! ```
//!
//! and the report keeps each summand so tables can show them separately.

pub mod moment;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, LatentPrior, Split, SplitId};
use crate::error::{Error, Result};
use crate::math::{Matrix, Rng};
use crate::vae::{kl_terms, prior_gap_terms, VaeModel};

pub use moment::{mc_exponential_moment, MomentConfig, MomentEstimate};

/// β values of the tables; λ = n/β.
pub const BETA_GRID: [f64; 9] = [0.01, 0.025, 0.05, 0.075, 0.1, 0.25, 0.5, 0.75, 1.0];
pub const DEFAULT_DELTA: f64 = 0.05;
pub const DEFAULT_MC_SAMPLES_CERT: usize = 16;

/// Rows encoded per batch while measuring.
const CHUNK: usize = 4096;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalTerms {
    pub n: usize,
    /// Mean over the set of the Monte-Carlo estimate of `E_q ‖x − g_θ(z)‖`.
    pub rec_mean: f64,
    /// Standard error of `rec_mean` across points.
    pub rec_std_err: f64,
    pub kl_sum: f64,
    /// Mean posterior-to-prior W2 distance.
    pub prior_gap: f64,
    pub mc_samples_cert: usize,
    pub seed: u64,
}

/// Measures the empirical side of every certificate on `cert`. The set must
/// not be the split the model was trained on.
pub fn measure_empirical_terms(
    model: &VaeModel,
    cert: &Dataset,
    trained_on: &SplitId,
    mc_samples_cert: usize,
    rng: &mut Rng,
) -> Result<EmpiricalTerms> {
    if cert.split == Split::Train {
        return Err(Error::Protocol("certificates cannot be computed on a training split".into()));
    }
    let id = cert.id();
    if id.fingerprint == trained_on.fingerprint {
        return Err(Error::Protocol(format!(
            "certification set {} is the training set the model was fitted on",
            id.split.name()
        )));
    }
    measure_terms_unchecked(model, &cert.samples, mc_samples_cert, rng)
}

/// Same measurement without the split protocol; used for held-out
/// reconstruction error on the test split and by diagnostics.
pub fn measure_terms_unchecked(model: &VaeModel, x: &Matrix, mc: usize, rng: &mut Rng) -> Result<EmpiricalTerms> {
    if x.rows() == 0 {
        return Err(Error::contract("empty certification set"));
    }
    if mc == 0 {
        return Err(Error::contract("at least one posterior draw per point is required"));
    }
    let seed = rng.seed();
    let eff = model.effective()?;
    let d = model.latent_dim;
    let n = x.rows();
    let mut per_point = Vec::with_capacity(n);
    let (mut kl_sum, mut gap_sum) = (0.0, 0.0);
    for start in (0..n).step_by(CHUNK) {
        let end = (start + CHUNK).min(n);
        let xb = x.row_block(start, end);
        let (mu, sigma) = eff.encode_batch(&xb)?;
        let k = end - start;
        for r in 0..k {
            kl_sum += kl_terms(mu.row(r), sigma.row(r));
            gap_sum += prior_gap_terms(mu.row(r), sigma.row(r));
        }
        // Draw-major layout: rows s*k..(s+1)*k hold draw s for every point.
        let mut z = Matrix::zeros(k * mc, d);
        let mut targets = Matrix::zeros(k * mc, x.cols());
        for s in 0..mc {
            let eps = rng.gaussian(k * d);
            for r in 0..k {
                let row = z.row_mut(s * k + r);
                for j in 0..d {
                    row[j] = mu.get(r, j) + sigma.get(r, j) * eps[r * d + j];
                }
                targets.row_mut(s * k + r).copy_from_slice(xb.row(r));
            }
        }
        let losses = eff.rec_rmse_rows(&z, &targets)?;
        for r in 0..k {
            per_point.push((0..mc).map(|s| losses[s * k + r]).sum::<f64>() / mc as f64);
        }
    }
    if !kl_sum.is_finite() || per_point.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite empirical term".into()));
    }
    let nf = n as f64;
    let rec_mean = per_point.iter().sum::<f64>() / nf;
    let var = if n > 1 { per_point.iter().map(|v| (v - rec_mean).powi(2)).sum::<f64>() / (nf - 1.0) } else { 0.0 };
    Ok(EmpiricalTerms {
        n,
        rec_mean,
        rec_std_err: (var / nf).sqrt(),
        kl_sum: kl_sum.max(0.0),
        prior_gap: gap_sum / nf,
        mc_samples_cert: mc,
        seed,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiameterSource {
    Analytic,
    Empirical,
    /// Fixed 2-Gaussian value, 2.668, below the support diameter.
    ExactMatch,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometryBounded {
    pub delta_diam: f64,
    pub source: DiameterSource,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometryManifold {
    pub k_star: f64,
    pub d_star: usize,
    /// Latent box half-width; Gaussian prior only.
    pub a: Option<f64>,
    pub prior: LatentPrior,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Geometry {
    Bounded(GeometryBounded),
    Manifold(GeometryManifold),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateKind {
    RecBounded,
    RecManifoldGauss,
    RecManifoldUniform,
    RegenBounded,
    GenBounded,
    RegenManifold,
    GenManifold,
}

impl CertificateKind {
    pub fn name(self) -> &'static str {
        match self {
            CertificateKind::RecBounded => "rec_bounded",
            CertificateKind::RecManifoldGauss => "rec_manifold_gauss",
            CertificateKind::RecManifoldUniform => "rec_manifold_uniform",
            CertificateKind::RegenBounded => "regen_bounded",
            CertificateKind::GenBounded => "gen_bounded",
            CertificateKind::RegenManifold => "regen_manifold",
            CertificateKind::GenManifold => "gen_manifold",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Components {
    pub emp_rec: f64,
    /// `kl_sum / λ`.
    pub kl_term: f64,
    pub avg_dist_term: Option<f64>,
    pub exp_moment_term: f64,
    /// `ln(1/δ) / λ`.
    pub delta_term: f64,
    pub prior_gap_term: Option<f64>,
}

impl Components {
    /// Summed in a fixed order.
    pub fn total(&self) -> f64 {
        self.emp_rec
            + self.kl_term
            + self.avg_dist_term.unwrap_or(0.0)
            + self.exp_moment_term
            + self.delta_term
            + self.prior_gap_term.unwrap_or(0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub kind: CertificateKind,
    pub n: usize,
    pub lambda: f64,
    pub delta: f64,
    pub confidence: f64,
    /// Set when the confidence is not positive; the bound is then void.
    pub vacuous_confidence: bool,
    pub components: Components,
    pub bound: f64,
    pub geometry: Geometry,
}

/// Network constants and the PAC-Bayes trade-off.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertParams {
    pub lambda: f64,
    pub delta: f64,
    pub k_phi: f64,
    pub k_theta: f64,
}

impl CertParams {
    /// `λ = n / β`.
    pub fn from_beta(n: usize, beta: f64, delta: f64, k_phi: f64, k_theta: f64) -> Self {
        CertParams { lambda: n as f64 / beta, delta, k_phi, k_theta }
    }
}

fn check_common(terms: &EmpiricalTerms, p: &CertParams) -> Result<()> {
    if !(p.lambda > 0.0) || !p.lambda.is_finite() {
        return Err(Error::contract(format!("lambda must be positive and finite, got {}", p.lambda)));
    }
    if !(p.delta > 0.0 && p.delta < 1.0) {
        return Err(Error::contract(format!("delta must lie in (0, 1), got {}", p.delta)));
    }
    if !(p.k_phi > 0.0) || !(p.k_theta > 0.0) {
        return Err(Error::contract("Lipschitz constants must be positive"));
    }
    if terms.n == 0 {
        return Err(Error::contract("certification set size must be positive"));
    }
    if !(terms.rec_mean >= 0.0) || !(terms.kl_sum >= 0.0) || !(terms.prior_gap >= 0.0) {
        return Err(Error::contract("empirical terms must be nonnegative"));
    }
    Ok(())
}

fn check_bounded(g: &GeometryBounded) -> Result<()> {
    if !(g.delta_diam > 0.0) || !g.delta_diam.is_finite() {
        return Err(Error::contract(format!("diameter must be positive and finite, got {}", g.delta_diam)));
    }
    Ok(())
}

fn check_manifold(g: &GeometryManifold) -> Result<()> {
    if !(g.k_star > 0.0) || !g.k_star.is_finite() || g.d_star == 0 {
        return Err(Error::contract("manifold geometry needs k_star > 0 and d_star >= 1"));
    }
    if g.prior == LatentPrior::Gaussian && !g.a.is_some_and(|a| a > 0.0) {
        return Err(Error::contract("Gaussian manifold geometry needs a > 0"));
    }
    Ok(())
}

fn base(terms: &EmpiricalTerms, p: &CertParams) -> (f64, f64, f64) {
    (terms.rec_mean, terms.kl_sum / p.lambda, (1.0 / p.delta).ln() / p.lambda)
}

fn report(
    kind: CertificateKind,
    terms: &EmpiricalTerms,
    p: &CertParams,
    confidence: f64,
    components: Components,
    geometry: Geometry,
) -> CertificateReport {
    CertificateReport {
        kind,
        n: terms.n,
        lambda: p.lambda,
        delta: p.delta,
        confidence,
        vacuous_confidence: !(confidence > 0.0),
        bound: components.total(),
        components,
        geometry,
    }
}

/// `λΔ²/(8n)`: Hoeffding bound on the exponential moment over λ.
pub fn bounded_moment_term(lambda: f64, delta_diam: f64, n: usize) -> f64 {
    lambda * delta_diam * delta_diam / (8.0 * n as f64)
}

/// `λK_*²/(2n)`: Gaussian concentration bound on the exponential moment
/// over λ.
pub fn manifold_moment_term(lambda: f64, k_star: f64, n: usize) -> f64 {
    lambda * k_star * k_star / (2.0 * n as f64)
}

/// `(n d_*/2) e^{−a²/2}`: probability that some latent leaves `[−a, a]^{d_*}`.
pub fn manifold_penalty(n: usize, d_star: usize, a: f64) -> f64 {
    n as f64 * d_star as f64 / 2.0 * (-a * a / 2.0).exp()
}

/// Reconstruction certificate on a bounded instance space.
pub fn cert_rec_bounded(terms: &EmpiricalTerms, geom: &GeometryBounded, p: &CertParams) -> Result<CertificateReport> {
    check_common(terms, p)?;
    check_bounded(geom)?;
    let (emp_rec, kl_term, delta_term) = base(terms, p);
    let c = Components {
        emp_rec,
        kl_term,
        avg_dist_term: Some(p.k_phi * p.k_theta * geom.delta_diam),
        exp_moment_term: bounded_moment_term(p.lambda, geom.delta_diam, terms.n),
        delta_term,
        prior_gap_term: None,
    };
    Ok(report(CertificateKind::RecBounded, terms, p, 1.0 - p.delta, c, Geometry::Bounded(*geom)))
}

/// Reconstruction certificate for data pushed forward from a standard
/// Gaussian latent.
pub fn cert_rec_manifold_gauss(
    terms: &EmpiricalTerms,
    geom: &GeometryManifold,
    p: &CertParams,
) -> Result<CertificateReport> {
    check_common(terms, p)?;
    check_manifold(geom)?;
    if geom.prior != LatentPrior::Gaussian {
        return Err(Error::contract("Gaussian manifold certificate needs a Gaussian latent prior"));
    }
    let a = geom.a.expect("checked above");
    let d = geom.d_star as f64;
    let (emp_rec, kl_term, delta_term) = base(terms, p);
    let c = Components {
        emp_rec,
        kl_term,
        avg_dist_term: Some(p.k_phi * p.k_theta * geom.k_star * ((1.0 + a * a) * d).sqrt()),
        exp_moment_term: manifold_moment_term(p.lambda, geom.k_star, terms.n),
        delta_term,
        prior_gap_term: None,
    };
    let confidence = 1.0 - p.delta - manifold_penalty(terms.n, geom.d_star, a);
    Ok(report(CertificateKind::RecManifoldGauss, terms, p, confidence, c, Geometry::Manifold(*geom)))
}

/// Reconstruction certificate for data pushed forward from a uniform
/// latent on the unit cube.
pub fn cert_rec_manifold_uniform(
    terms: &EmpiricalTerms,
    geom: &GeometryManifold,
    p: &CertParams,
) -> Result<CertificateReport> {
    check_common(terms, p)?;
    check_manifold(geom)?;
    if geom.prior != LatentPrior::Uniform {
        return Err(Error::contract("uniform manifold certificate needs a uniform latent prior"));
    }
    let (emp_rec, kl_term, delta_term) = base(terms, p);
    let c = Components {
        emp_rec,
        kl_term,
        avg_dist_term: Some(p.k_phi * p.k_theta * geom.k_star * (geom.d_star as f64).sqrt()),
        exp_moment_term: manifold_moment_term(p.lambda, geom.k_star, terms.n),
        delta_term,
        prior_gap_term: None,
    };
    Ok(report(CertificateKind::RecManifoldUniform, terms, p, 1.0 - p.delta, c, Geometry::Manifold(*geom)))
}

/// W1 bound between the data distribution and the regenerated
/// distribution. There is no average-distance term, and the manifold
/// version holds with confidence `1 − δ` since no latent box is needed.
pub fn cert_regeneration(terms: &EmpiricalTerms, geometry: &Geometry, p: &CertParams) -> Result<CertificateReport> {
    check_common(terms, p)?;
    let (emp_rec, kl_term, delta_term) = base(terms, p);
    let (kind, exp_moment_term) = match geometry {
        Geometry::Bounded(g) => {
            check_bounded(g)?;
            (CertificateKind::RegenBounded, bounded_moment_term(p.lambda, g.delta_diam, terms.n))
        }
        Geometry::Manifold(g) => {
            check_manifold(g)?;
            if g.prior != LatentPrior::Gaussian {
                return Err(Error::contract("regeneration bounds under the manifold assumption need a Gaussian latent"));
            }
            (CertificateKind::RegenManifold, manifold_moment_term(p.lambda, g.k_star, terms.n))
        }
    };
    let c = Components { emp_rec, kl_term, avg_dist_term: None, exp_moment_term, delta_term, prior_gap_term: None };
    Ok(report(kind, terms, p, 1.0 - p.delta, c, *geometry))
}

/// W1 bound between the data distribution and the generated distribution:
/// the regeneration bound plus `K_θ` times the mean posterior-to-prior gap.
pub fn cert_generation(terms: &EmpiricalTerms, geometry: &Geometry, p: &CertParams) -> Result<CertificateReport> {
    let mut r = cert_regeneration(terms, geometry, p)?;
    r.kind = match r.kind {
        CertificateKind::RegenBounded => CertificateKind::GenBounded,
        _ => CertificateKind::GenManifold,
    };
    r.components.prior_gap_term = Some(p.k_theta * terms.prior_gap);
    r.bound = r.components.total();
    Ok(r)
}

/// The latent box half-width `a`, plus whether the request was degenerate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoxWidth {
    pub a: f64,
    /// `n d_*/(2δ′) ≤ 1`: any `a ≥ 0` already meets the budget.
    pub degenerate: bool,
}

/// Smallest `a` whose confidence penalty `(n d_*/2) e^{−a²/2}` equals `δ′`.
pub fn confidence_to_a(n: usize, d_star: usize, delta_prime: f64) -> Result<BoxWidth> {
    if !(delta_prime > 0.0 && delta_prime < 1.0) {
        return Err(Error::contract(format!("delta' must lie in (0, 1), got {delta_prime}")));
    }
    let ratio = n as f64 * d_star as f64 / (2.0 * delta_prime);
    if ratio <= 1.0 {
        return Ok(BoxWidth { a: 0.0, degenerate: true });
    }
    Ok(BoxWidth { a: (2.0 * ratio.ln()).sqrt(), degenerate: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, proptest};

    fn terms(n: usize, rec: f64, kl_mean: f64) -> EmpiricalTerms {
        EmpiricalTerms {
            n,
            rec_mean: rec,
            rec_std_err: 0.0,
            kl_sum: kl_mean * n as f64,
            prior_gap: 0.0,
            mc_samples_cert: 16,
            seed: 0,
        }
    }

    fn bounded(d: f64) -> GeometryBounded {
        GeometryBounded { delta_diam: d, source: DiameterSource::ExactMatch }
    }

    fn gauss(k: f64, d: usize, a: f64) -> GeometryManifold {
        GeometryManifold { k_star: k, d_star: d, a: Some(a), prior: LatentPrior::Gaussian }
    }

    #[test]
    fn table_row_two_gaussians_beta_half() {
        let n = 20_000;
        let t = terms(n, 0.2162, 0.9602 / 0.5);
        let p = CertParams::from_beta(n, 0.5, DEFAULT_DELTA, 2.0, 2.0);
        let r = cert_rec_bounded(&t, &bounded(2.668), &p).unwrap();
        let c = r.components;
        assert!((c.kl_term - 0.9602).abs() < 1e-12, "{}", c.kl_term);
        assert!((c.avg_dist_term.unwrap() - 10.672).abs() < 1e-12);
        assert!((c.exp_moment_term - 1.780).abs() / 1.780 < 5e-3);
        assert!((r.bound - 13.63).abs() < 0.01, "{}", r.bound);
        assert_eq!(r.confidence, 0.95);
    }

    #[test]
    fn circle_moment_at_smallest_beta() {
        let n = 20_000;
        let p = CertParams::from_beta(n, 0.01, DEFAULT_DELTA, 2.0, 2.0);
        let r = cert_rec_bounded(&terms(n, 0.0, 0.0), &bounded(3.8), &p).unwrap();
        assert!((r.components.exp_moment_term - 3.8 * 3.8 / 0.08).abs() < 1e-9);
        assert!((r.components.exp_moment_term - 180.5).abs() < 1e-9);
    }

    #[test]
    fn large_lambda_limit() {
        let n = 1000;
        let t = terms(n, 0.0, 0.0);
        let lambda = 1e9;
        let p = CertParams { lambda, delta: 0.05, k_phi: 2.0, k_theta: 2.0 };
        let r = cert_rec_bounded(&t, &bounded(1.0), &p).unwrap();
        let floor = 4.0 + lambda / (8.0 * n as f64);
        assert!((r.bound - floor).abs() <= 1e-9 * floor);
    }

    #[test]
    fn manifold_components() {
        let n = 1000;
        let t = terms(n, 0.0, 0.0);
        let p = CertParams { lambda: n as f64, delta: 0.05, k_phi: 2.0, k_theta: 2.0 };
        let r = cert_rec_manifold_gauss(&t, &gauss(1.0, 4, 3.0), &p).unwrap();
        assert!((r.components.avg_dist_term.unwrap() - 4.0 * 40f64.sqrt()).abs() < 1e-12);
        assert!((r.components.exp_moment_term - 0.5).abs() < 1e-15);
        let u = GeometryManifold { a: None, prior: LatentPrior::Uniform, ..gauss(1.0, 4, 3.0) };
        let r = cert_rec_manifold_uniform(&t, &u, &p).unwrap();
        assert_eq!(r.components.avg_dist_term, Some(8.0));
        assert_eq!(r.confidence, 0.95);
        let one = GeometryManifold { d_star: 1, ..u };
        let p1 = CertParams { k_phi: 1.0, k_theta: 1.0, ..p };
        assert_eq!(cert_rec_manifold_uniform(&t, &one, &p1).unwrap().components.avg_dist_term, Some(1.0));
    }

    #[test]
    fn manifold_confidence_and_vacuity() {
        let n = 50_000;
        let w = confidence_to_a(n, 2, 0.01).unwrap();
        assert!(!w.degenerate);
        assert!((w.a - 5.554).abs() < 1e-3, "{}", w.a);
        let p = CertParams::from_beta(n, 1.0, 0.05, 2.0, 2.0);
        let r = cert_rec_manifold_gauss(&terms(n, 0.1, 0.1), &gauss(1.0, 2, w.a), &p).unwrap();
        assert!((r.confidence - (1.0 - 0.05 - 0.01)).abs() < 1e-9);
        assert!(!r.vacuous_confidence);
        let r = cert_rec_manifold_gauss(&terms(n, 0.1, 0.1), &gauss(1.0, 2, 1.0), &p).unwrap();
        assert!(r.vacuous_confidence);
        assert!(r.confidence <= 0.0);
    }

    #[test]
    fn confidence_to_a_cases() {
        for &(n, d, dp) in &[(50_000usize, 2usize, 0.01), (20_000, 5, 0.001), (100, 1, 0.3)] {
            let a = confidence_to_a(n, d, dp).unwrap().a;
            assert!((manifold_penalty(n, d, a) - dp).abs() <= 1e-12, "{n} {d} {dp}");
        }
        // δ′ = n d/2 is outside (0, 1) unless n d < 2.
        let w = confidence_to_a(1, 1, 0.5).unwrap();
        assert_eq!((w.a, w.degenerate), (0.0, true));
        assert!(confidence_to_a(10, 1, 0.0).is_err());
    }

    #[test]
    fn regeneration_drops_average_distance() {
        let n = 20_000;
        let t = terms(n, 0.2162, 0.9602 / 0.5);
        let p = CertParams::from_beta(n, 0.5, DEFAULT_DELTA, 2.0, 2.0);
        let g = Geometry::Bounded(bounded(2.668));
        let rec = cert_rec_bounded(&t, &bounded(2.668), &p).unwrap();
        let regen = cert_regeneration(&t, &g, &p).unwrap();
        assert_eq!(regen.components.avg_dist_term, None);
        // Independent re-assembly of the bound without the distance term.
        let direct = 0.2162 + 0.9602 + 2.668f64.powi(2) / (8.0 * 0.5) + 0.5 * (20.0f64).ln() / n as f64;
        assert!((regen.bound - direct).abs() < 1e-12, "{} {}", regen.bound, direct);
        assert!((rec.bound - regen.bound - 10.672).abs() < 1e-12);
        assert!((regen.bound - 2.96).abs() < 0.01);
    }

    #[test]
    fn regeneration_rate() {
        for n in [100usize, 10_000, 1_000_000] {
            let p = CertParams { lambda: (n as f64).sqrt(), delta: 0.05, k_phi: 2.0, k_theta: 2.0 };
            let r = cert_regeneration(&terms(n, 0.0, 0.0), &Geometry::Bounded(bounded(1.0)), &p).unwrap();
            let expected = (20.0f64).ln() / (n as f64).sqrt() + (n as f64).sqrt() / (8.0 * n as f64);
            assert!((r.bound - expected).abs() < 1e-12);
            assert!(r.bound * (n as f64).sqrt() < 3.2);
        }
    }

    #[test]
    fn generation_adds_prior_gap() {
        let n = 10;
        let mut t = terms(n, 0.3, 0.2);
        let p = CertParams::from_beta(n, 1.0, 0.05, 2.0, 2.0);
        let g = Geometry::Bounded(bounded(2.8));
        let regen = cert_regeneration(&t, &g, &p).unwrap();
        assert_eq!(cert_generation(&t, &g, &p).unwrap().bound, regen.bound);
        t.prior_gap = prior_gap_terms(&[3.0, 4.0], &[1.0, 1.0]);
        let gen = cert_generation(&t, &g, &p).unwrap();
        assert_eq!(gen.components.prior_gap_term, Some(10.0));
        assert_eq!(gen.kind, CertificateKind::GenBounded);
        assert!((gen.bound - regen.bound - 10.0).abs() < 1e-12);
    }

    #[test]
    fn manifold_regeneration_confidence_is_not_lowered() {
        let n = 50_000;
        let p = CertParams::from_beta(n, 0.5, 0.05, 2.0, 2.0);
        let g = Geometry::Manifold(gauss(1.0, 2, 1.0));
        let r = cert_regeneration(&terms(n, 0.1, 0.1), &g, &p).unwrap();
        assert_eq!(r.kind, CertificateKind::RegenManifold);
        assert_eq!(r.confidence, 0.95);
        assert!((r.components.exp_moment_term - 1.0).abs() < 1e-12);
        assert_eq!(cert_generation(&terms(n, 0.1, 0.1), &g, &p).unwrap().kind, CertificateKind::GenManifold);
        let uni = Geometry::Manifold(GeometryManifold { a: None, prior: LatentPrior::Uniform, ..gauss(1.0, 2, 1.0) });
        assert!(cert_regeneration(&terms(n, 0.1, 0.1), &uni, &p).is_err());
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        let t = terms(100, 0.1, 0.1);
        let ok = CertParams { lambda: 10.0, delta: 0.05, k_phi: 2.0, k_theta: 2.0 };
        assert!(cert_rec_bounded(&t, &bounded(1.0), &CertParams { lambda: 0.0, ..ok }).is_err());
        assert!(cert_rec_bounded(&t, &bounded(1.0), &CertParams { lambda: -1.0, ..ok }).is_err());
        assert!(cert_rec_bounded(&t, &bounded(0.0), &ok).is_err());
        assert!(cert_rec_bounded(&t, &bounded(1.0), &CertParams { delta: 1.0, ..ok }).is_err());
        assert!(cert_rec_manifold_gauss(&t, &gauss(1.0, 2, 0.0), &ok).is_err());
        assert!(cert_rec_manifold_uniform(&t, &gauss(1.0, 2, 1.0), &ok).is_err());
    }

    proptest! {
        #[test]
        fn bound_is_sum_and_monotone(
            rec in 0.0f64..3.0, kl in 0.0f64..5.0, gap in 0.0f64..3.0,
            beta in 0.01f64..1.0, diam in 0.1f64..5.0, k in 0.5f64..3.0, delta in 0.001f64..0.5,
        ) {
            let n = 20_000;
            let mut t = terms(n, rec, kl);
            t.prior_gap = gap;
            let p = CertParams::from_beta(n, beta, delta, k, k);
            let g = bounded(diam);
            let r = cert_rec_bounded(&t, &g, &p).unwrap();
            prop_assert!((r.bound - r.components.total()).abs() <= 1e-12 * r.bound.max(1.0));
            // λ = n/β scaling identities.
            prop_assert!((r.components.kl_term - beta * kl).abs() <= 1e-12 * kl.max(1.0));
            prop_assert!((r.components.delta_term - beta * (1.0 / delta).ln() / n as f64).abs() <= 1e-15);

            let bigger = |f: &dyn Fn(&mut EmpiricalTerms, &mut CertParams, &mut GeometryBounded)| {
                let (mut t2, mut p2, mut g2) = (t.clone(), p, g);
                f(&mut t2, &mut p2, &mut g2);
                cert_rec_bounded(&t2, &g2, &p2).unwrap().bound
            };
            prop_assert!(bigger(&|_, _, g| g.delta_diam *= 1.1) >= r.bound);
            prop_assert!(bigger(&|_, p, _| p.k_phi *= 1.1) >= r.bound);
            prop_assert!(bigger(&|t, _, _| t.kl_sum += 1.0) >= r.bound);
            prop_assert!(bigger(&|_, p, _| p.delta /= 2.0) >= r.bound);

            let geo = Geometry::Bounded(g);
            let regen = cert_regeneration(&t, &geo, &p).unwrap();
            let gen = cert_generation(&t, &geo, &p).unwrap();
            prop_assert!(gen.bound >= regen.bound);
            prop_assert!((gen.bound - gen.components.total()).abs() <= 1e-12 * gen.bound.max(1.0));
        }
    }

    mod measurement {
        use super::super::*;
        use crate::data::{generate, DatasetSpec};
        use crate::net::{LipschitzMlp, OrthLayer};
        use crate::vae::VaeSpec;

        fn layer(weight: Matrix, bias: Vec<f64>) -> OrthLayer {
            OrthLayer { bias: Matrix::row_vector(&bias), weight, bjorck_iterations: 15, power_iterations: 25, prescale: 1.01 }
        }

        /// Encoder `x -> (x, σ)` with `σ = softplus(raw)`, identity decoder.
        fn identity_vae(raw_sigma: f64) -> VaeModel {
            let mut w = Matrix::zeros(4, 2);
            w.set(0, 0, 1.0);
            w.set(1, 1, 1.0);
            let enc = LipschitzMlp::from_layers(vec![layer(w, vec![0.0, 0.0, raw_sigma, raw_sigma])], 2, 1.0).unwrap();
            let dec = LipschitzMlp::from_layers(vec![layer(Matrix::identity(2), vec![0.0, 0.0])], 2, 1.0).unwrap();
            VaeModel::from_parts(enc, dec).unwrap()
        }

        fn sets() -> (Dataset, Dataset) {
            let spec = DatasetSpec::TwoGaussians;
            (generate(&spec, 300, 1, Split::Train).unwrap(), generate(&spec, 200, 1, Split::Val).unwrap())
        }

        #[test]
        fn deterministic_autoencoder_has_no_reconstruction_error() {
            let (train, val) = sets();
            let t = measure_empirical_terms(&identity_vae(-400.0), &val, &train.id(), 16, &mut Rng::new(2)).unwrap();
            assert!(t.rec_mean < 1e-9, "{}", t.rec_mean);
            assert_eq!(t.n, 200);
        }

        #[test]
        fn prior_matching_encoder_has_zero_kl_and_gap() {
            let (train, val) = sets();
            let mut enc_w = Matrix::zeros(4, 2);
            enc_w.set(0, 0, 1.0);
            let raw = (std::f64::consts::E - 1.0).ln();
            let mut model = identity_vae(raw);
            // Zero weights: μ = 0 and σ = softplus(ln(e − 1)) = 1 for every input.
            model.encoder.layers_mut()[0].weight = Matrix::zeros(4, 2);
            model.encoder.layers_mut()[0].bias = Matrix::row_vector(&[0.0, 0.0, raw, raw]);
            let t = measure_empirical_terms(&model, &val, &train.id(), 4, &mut Rng::new(3)).unwrap();
            assert!(t.kl_sum.abs() < 1e-12, "{}", t.kl_sum);
            assert!(t.prior_gap.abs() < 1e-12, "{}", t.prior_gap);
        }

        #[test]
        fn reconstruction_mean_is_self_consistent() {
            let (train, val) = sets();
            let model = VaeModel::new(&VaeSpec { hidden: vec![8, 8], ..VaeSpec::standard(2, 2) }, &mut Rng::new(4)).unwrap();
            let small = measure_empirical_terms(&model, &val, &train.id(), 16, &mut Rng::new(5)).unwrap();
            let large = measure_empirical_terms(&model, &val, &train.id(), 160, &mut Rng::new(6)).unwrap();
            // Same points, so the spread across points cancels; only the
            // posterior-draw noise remains. Bound it by the across-point error.
            let se = (small.rec_std_err.powi(2) + large.rec_std_err.powi(2)).sqrt();
            assert!((small.rec_mean - large.rec_mean).abs() <= 3.0 * se);
            assert_eq!(small.kl_sum, large.kl_sum);
        }

        #[test]
        fn training_split_is_refused() {
            let (train, val) = sets();
            let model = identity_vae(0.0);
            assert!(matches!(
                measure_empirical_terms(&model, &train, &train.id(), 4, &mut Rng::new(7)),
                Err(Error::Protocol(_))
            ));
            let mut relabelled = train.clone();
            relabelled.split = Split::Val;
            assert!(matches!(
                measure_empirical_terms(&model, &relabelled, &train.id(), 4, &mut Rng::new(7)),
                Err(Error::Protocol(_))
            ));
            assert!(measure_empirical_terms(&model, &val, &train.id(), 4, &mut Rng::new(7)).is_ok());
        }
    }
}
