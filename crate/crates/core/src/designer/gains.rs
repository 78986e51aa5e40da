//! Gain recovery from a feasible certificate and the certificate-derived
//! interval lengths.

use super::assemble::{decay_matrices, CertificateSet};
use super::DesignError;
use crate::linalg::{max_singular_value, Matrix, SymMatrix};
use crate::model::{DesignConfig, GainScheduleEntry, LinkSet, LipschitzBounds, PlantSnapshot, SubsystemDims};
use std::collections::BTreeMap;

/// Slack allowed on the recovered gain-norm caps.
const GAIN_NORM_SLACK: f64 = 1e-8;

/// Controller and observer gains recovered from one certificate.
#[derive(Clone, Debug)]
pub struct GainSet {
    pub k: Vec<Matrix>,
    pub l: BTreeMap<(usize, usize), Matrix>,
    pub m: Vec<Matrix>,
    pub o: BTreeMap<(usize, usize), Matrix>,
}

/// Undo the change of variables: `K_i = W_i Z_i⁻¹`, `L_ij = Y_ij Z_j⁻¹`,
/// `M_i = P̂_i⁻¹ Ŵ_i`, `O_ij = P̂_i⁻¹ Ŷ_ij`; validates the recovered
/// norms against the configured caps.
pub fn recover_gains(
    cert: &CertificateSet,
    config: &DesignConfig,
) -> Result<GainSet, DesignError> {
    let nsub = cert.z.len();
    let mut z_chol = Vec::with_capacity(nsub);
    let mut phat_chol = Vec::with_capacity(nsub);
    for i in 0..nsub {
        let zc = cert.z[i].to_dense().cholesky().map_err(|_| {
            DesignError::Certificate(format!("certificate Z block {} is not positive", i + 1))
        })?;
        z_chol.push(zc);
        let pe = cert.phat[i]
            .min_eig()
            .map_err(|e| DesignError::Certificate(format!("certificate eigencheck: {e}")))?;
        if pe < config.epsilon[i] / 2.0 {
            return Err(DesignError::Certificate(format!(
                "certificate P-hat block {} fell below half the floor ({pe:.3e})",
                i + 1
            )));
        }
        phat_chol.push(cert.phat[i].to_dense().cholesky().map_err(|_| {
            DesignError::Certificate(format!(
                "certificate P-hat block {} is not positive",
                i + 1
            ))
        })?);
    }

    let mut k_gain = Vec::with_capacity(nsub);
    let mut m_gain = Vec::with_capacity(nsub);
    for i in 0..nsub {
        // K = W Z⁻¹  ⇔  Kᵀ = Z⁻¹ Wᵀ
        let kt = z_chol[i].solve_matrix(&cert.w[i].transpose());
        let k = kt.transpose();
        let norm = max_singular_value(&k)
            .map_err(|e| DesignError::Certificate(format!("gain norm: {e}")))?;
        if norm > config.kappa[i] + GAIN_NORM_SLACK {
            return Err(DesignError::Certificate(format!(
                "recovered local controller gain {} has norm {norm:.6} above the cap {}",
                i + 1,
                config.kappa[i]
            )));
        }
        k_gain.push(k);

        let m = phat_chol[i].solve_matrix(&cert.what[i]);
        let norm = max_singular_value(&m)
            .map_err(|e| DesignError::Certificate(format!("gain norm: {e}")))?;
        if norm > config.mu[i] + GAIN_NORM_SLACK {
            return Err(DesignError::Certificate(format!(
                "recovered local observer gain {} has norm {norm:.6} above the cap {}",
                i + 1,
                config.mu[i]
            )));
        }
        m_gain.push(m);
    }

    let mut l_gain = BTreeMap::new();
    for (&(i, j), y) in &cert.y {
        let lt = z_chol[j].solve_matrix(&y.transpose());
        let l = lt.transpose();
        let norm = max_singular_value(&l)
            .map_err(|e| DesignError::Certificate(format!("gain norm: {e}")))?;
        let cap = config.iota[&(i, j)];
        if norm > cap + GAIN_NORM_SLACK {
            return Err(DesignError::Certificate(format!(
                "recovered coupling controller gain ({},{}) has norm {norm:.6} above {cap}",
                i + 1,
                j + 1
            )));
        }
        l_gain.insert((i, j), l);
    }
    let mut o_gain = BTreeMap::new();
    for (&(i, j), yh) in &cert.yhat {
        let o = phat_chol[i].solve_matrix(yh);
        let norm = max_singular_value(&o)
            .map_err(|e| DesignError::Certificate(format!("gain norm: {e}")))?;
        let cap = config.omega[&(i, j)];
        if norm > cap + GAIN_NORM_SLACK {
            return Err(DesignError::Certificate(format!(
                "recovered coupling observer gain ({},{}) has norm {norm:.6} above {cap}",
                i + 1,
                j + 1
            )));
        }
        o_gain.insert((i, j), o);
    }

    Ok(GainSet {
        k: k_gain,
        l: l_gain,
        m: m_gain,
        o: o_gain,
    })
}

/// Rebuild the change-of-variables matrices from stored certificates and
/// gains. This is what ties the stored schedule to the interval-length
/// formula: anyone holding (Z, P̂, K, L, M, O) can recompute it exactly.
pub fn certificate_from_entry(entry: &GainScheduleEntry) -> CertificateSet {
    let nsub = entry.z.len();
    let w: Vec<Matrix> = (0..nsub)
        .map(|i| entry.k_gain[i].mul(&entry.z[i].to_dense()))
        .collect();
    let what: Vec<Matrix> = (0..nsub)
        .map(|i| entry.phat[i].to_dense().mul(&entry.m_gain[i]))
        .collect();
    let mut y = BTreeMap::new();
    for (&(i, j), l) in entry.l_gain.blocks() {
        y.insert((i, j), l.mul(&entry.z[j].to_dense()));
    }
    let mut yhat = BTreeMap::new();
    for (&(i, j), o) in entry.o_gain.blocks() {
        yhat.insert((i, j), entry.phat[i].to_dense().mul(o));
    }
    CertificateSet {
        z: entry.z.clone(),
        phat: entry.phat.clone(),
        w,
        what,
        y,
        yhat,
        slack: 0.0,
    }
}

/// Interval length over which the frozen certificate remains valid: half
/// the certified decay margin divided by the worst-case drift rate of the
/// decay matrices, taken over both loops, clamped to `t_max`. A vanishing
/// drift denominator (time-invariant data) contributes `t_max`.
pub fn switching_time(
    snapshot: &PlantSnapshot,
    cert: &CertificateSet,
    links: &LinkSet,
    config: &DesignConfig,
    lipschitz: LipschitzBounds,
) -> Result<f64, DesignError> {
    let (g_state, g_est) = decay_matrices(snapshot, cert, links, config);
    let num_state = -SymMatrix::from_dense_symmetrized(&g_state)
        .max_eig()
        .map_err(|e| DesignError::Certificate(format!("decay eigencheck: {e}")))?;
    let num_est = -SymMatrix::from_dense_symmetrized(&g_est)
        .max_eig()
        .map_err(|e| DesignError::Certificate(format!("decay eigencheck: {e}")))?;
    if num_state <= 0.0 || num_est <= 0.0 {
        return Err(DesignError::Certificate(format!(
            "certificate has nonpositive decay margin (state {num_state:.3e}, estimator {num_est:.3e})"
        )));
    }

    let z_norm = cert
        .z
        .iter()
        .map(|z| z.spectral_norm().unwrap_or(f64::NAN))
        .fold(0.0f64, f64::max);
    let phat_norm = cert
        .phat
        .iter()
        .map(|p| p.spectral_norm().unwrap_or(f64::NAN))
        .fold(0.0f64, f64::max);

    // ‖W + Y‖ and ‖Ŵ + Ŷ‖ with the link mask applied
    let nsub = cert.z.len();
    let state_dims: Vec<usize> = cert.z.iter().map(|z| z.order()).collect();
    let input_dims: Vec<usize> = (0..nsub).map(|i| cert.w[i].rows()).collect();
    let output_dims: Vec<usize> = (0..nsub).map(|i| cert.what[i].cols()).collect();
    let s_off = super::assemble::offsets_of(&state_dims);
    let i_off = super::assemble::offsets_of(&input_dims);
    let o_off = super::assemble::offsets_of(&output_dims);
    let n: usize = state_dims.iter().sum();
    let mut wy = Matrix::zeros(input_dims.iter().sum(), n);
    for i in 0..nsub {
        super::assemble::paste(&mut wy, i_off[i], s_off[i], &cert.w[i]);
    }
    for (&(i, j), y) in &cert.y {
        if links.contains(&(i, j)) {
            super::assemble::paste(&mut wy, i_off[i], s_off[j], y);
        }
    }
    let mut wyh = Matrix::zeros(n, output_dims.iter().sum());
    for i in 0..nsub {
        super::assemble::paste(&mut wyh, s_off[i], o_off[i], &cert.what[i]);
    }
    for (&(i, j), yh) in &cert.yhat {
        if links.contains(&(i, j)) {
            super::assemble::paste(&mut wyh, s_off[i], o_off[j], yh);
        }
    }
    let wy_norm = max_singular_value(&wy)
        .map_err(|e| DesignError::Certificate(format!("gain norm: {e}")))?;
    let wyh_norm = max_singular_value(&wyh)
        .map_err(|e| DesignError::Certificate(format!("gain norm: {e}")))?;

    let den_state = (lipschitz.a + lipschitz.h) * z_norm + lipschitz.b * wy_norm;
    let den_est = (lipschitz.a + lipschitz.h) * phat_norm + lipschitz.c * wyh_norm;
    let branch_state = if den_state == 0.0 {
        config.t_max
    } else {
        0.5 * num_state / den_state
    };
    let branch_est = if den_est == 0.0 {
        config.t_max
    } else {
        0.5 * num_est / den_est
    };
    let t = branch_state.min(branch_est).min(config.t_max);
    if !(t > 0.0) {
        return Err(DesignError::Certificate(format!(
            "computed interval length is not positive ({t:.3e})"
        )));
    }
    Ok(t)
}

/// A priori floor on every interval length, from the configured margins,
/// the drift rates, and the first estimator certificate. Branches with a
/// vanishing denominator are unbounded and drop out of the minimum.
pub fn dwell_time_floor(
    config: &DesignConfig,
    dims: &[SubsystemDims],
    adjacency: &LinkSet,
    lipschitz: LipschitzBounds,
    phat0: &[SymMatrix],
) -> f64 {
    let eps = config.min_epsilon();
    let min_dim = |a: usize, b: usize| a.min(b) as f64;
    let kappa_sum: f64 = dims
        .iter()
        .zip(&config.kappa)
        .map(|(d, &k)| min_dim(d.m, d.n).sqrt() * k)
        .sum();
    let iota_sum: f64 = adjacency
        .iter()
        .map(|&(i, j)| min_dim(dims[i].m, dims[j].n).sqrt() * config.iota[&(i, j)])
        .sum();
    let mu_sum: f64 = dims
        .iter()
        .zip(&config.mu)
        .map(|(d, &m)| min_dim(d.n, d.r).sqrt() * m)
        .sum();
    let omega_sum: f64 = adjacency
        .iter()
        .map(|&(i, j)| min_dim(dims[i].n, dims[j].r).sqrt() * config.omega[&(i, j)])
        .sum();

    let den1 = lipschitz.a + lipschitz.h + lipschitz.b * (kappa_sum + iota_sum);
    let b1 = if den1 > 0.0 {
        eps * config.gamma / den1
    } else {
        f64::INFINITY
    };
    let phat0_norm = phat0
        .iter()
        .map(|p| p.spectral_norm().unwrap_or(f64::NAN))
        .fold(0.0f64, f64::max);
    let den2 = lipschitz.a + lipschitz.h + lipschitz.c * (mu_sum + omega_sum);
    let b2 = if den2 > 0.0 && phat0_norm > 0.0 {
        config.gamma / (phat0_norm * den2)
    } else {
        f64::INFINITY
    };
    0.5 * b1.min(b2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::BlockMatrix;
    use crate::model::LinkSet;

    fn scalar_cert(z: f64, w: f64) -> CertificateSet {
        CertificateSet {
            z: vec![SymMatrix::diag(&[z])],
            phat: vec![SymMatrix::diag(&[1.0])],
            w: vec![Matrix::from_rows(&[vec![w]])],
            what: vec![Matrix::from_rows(&[vec![0.0, 0.0]])],
            y: BTreeMap::new(),
            yhat: BTreeMap::new(),
            slack: 1.0,
        }
    }

    fn scalar_config() -> DesignConfig {
        DesignConfig::uniform(1, &LinkSet::new(), 10.0, 10.0, 1.0, 1.0, 0.01, 0.05, 0.2)
    }

    #[test]
    fn zero_certificate_gives_zero_gains() {
        let cert = scalar_cert(2.0, 0.0);
        let gains = recover_gains(&cert, &scalar_config()).unwrap();
        assert_eq!(gains.k[0].get(0, 0), 0.0);
        assert_eq!(gains.m[0].get(0, 0), 0.0);
        assert!(gains.l.is_empty());
    }

    #[test]
    fn scalar_division_recovery() {
        let cert = scalar_cert(2.0, 3.0);
        let gains = recover_gains(&cert, &scalar_config()).unwrap();
        assert!((gains.k[0].get(0, 0) - 1.5).abs() < 1e-14);
    }

    #[test]
    fn norm_cap_violation_is_an_error() {
        let cert = scalar_cert(0.1, 3.0); // K = 30 > kappa = 10
        assert!(matches!(
            recover_gains(&cert, &scalar_config()),
            Err(DesignError::Certificate(_))
        ));
    }

    #[test]
    fn interval_formula_simple_case() {
        // decay matrix eigenvalue -2, drift rate (a+h)‖Z‖ = 1 → half of 2
        let mut config = scalar_config();
        config.t_max = 5.0;
        let plant = crate::model::Plant::new(
            vec![crate::model::Subsystem {
                a: crate::model::TimeMatrix::constant(&Matrix::from_rows(&[vec![-1.01]])),
                b: crate::model::TimeMatrix::constant(&Matrix::from_rows(&[vec![0.0]])),
                c: crate::model::TimeMatrix::constant(&Matrix::from_rows(&[vec![0.0], vec![0.0]])),
            }],
            Default::default(),
            LipschitzBounds {
                a: 1.0,
                b: 0.0,
                c: 0.0,
                h: 0.0,
            },
        )
        .unwrap();
        let snapshot = plant.aggregate(0.0);
        // Z = P̂ = 1, W = 0, beta = 0.01: both decay matrices equal -2
        let cert = scalar_cert(1.0, 0.0);
        let t = switching_time(&snapshot, &cert, &LinkSet::new(), &config, plant.lipschitz())
            .unwrap();
        assert!((t - 1.0).abs() < 1e-12, "t = {t}");
    }

    #[test]
    fn zero_drift_hits_the_cap() {
        let mut config = scalar_config();
        config.t_max = 2.0;
        let plant = crate::model::Plant::new(
            vec![crate::model::Subsystem {
                a: crate::model::TimeMatrix::constant(&Matrix::from_rows(&[vec![-1.0]])),
                b: crate::model::TimeMatrix::constant(&Matrix::from_rows(&[vec![0.0]])),
                c: crate::model::TimeMatrix::constant(&Matrix::from_rows(&[vec![0.0], vec![0.0]])),
            }],
            Default::default(),
            LipschitzBounds {
                a: 0.0,
                b: 0.0,
                c: 0.0,
                h: 0.0,
            },
        )
        .unwrap();
        let snapshot = plant.aggregate(0.0);
        let cert = scalar_cert(1.0, 0.0);
        let t = switching_time(&snapshot, &cert, &LinkSet::new(), &config, plant.lipschitz())
            .unwrap();
        assert_eq!(t, 2.0);
    }

    #[test]
    fn nonpositive_margin_rejected() {
        let config = scalar_config();
        let plant = crate::model::Plant::new(
            vec![crate::model::Subsystem {
                a: crate::model::TimeMatrix::constant(&Matrix::from_rows(&[vec![1.0]])),
                b: crate::model::TimeMatrix::constant(&Matrix::from_rows(&[vec![0.0]])),
                c: crate::model::TimeMatrix::constant(&Matrix::from_rows(&[vec![0.0], vec![0.0]])),
            }],
            Default::default(),
            LipschitzBounds {
                a: 1.0,
                b: 0.0,
                c: 0.0,
                h: 0.0,
            },
        )
        .unwrap();
        let snapshot = plant.aggregate(0.0);
        let cert = scalar_cert(1.0, 0.0); // decay = +2 + 0.02 > 0
        assert!(matches!(
            switching_time(&snapshot, &cert, &LinkSet::new(), &config, plant.lipschitz()),
            Err(DesignError::Certificate(_))
        ));
    }

    #[test]
    fn dwell_floor_formula() {
        // eps = 1, gamma = 2, a+h = 1, b = c = 0, second branch slower
        let mut config = DesignConfig::uniform(
            1,
            &LinkSet::new(),
            10.0,
            10.0,
            1.0,
            1.0,
            0.01,
            1.0,
            2.0,
        );
        config.epsilon = vec![1.0];
        let dims = [SubsystemDims { n: 1, m: 1, r: 1 }];
        let lips = LipschitzBounds {
            a: 1.0,
            b: 0.0,
            c: 0.0,
            h: 0.0,
        };
        // ‖P̂_0‖ = 0.5 makes the second branch 2/(0.5·1) = 4 > first = 2
        let phat0 = vec![SymMatrix::diag(&[0.5])];
        let bound = dwell_time_floor(&config, &dims, &LinkSet::new(), lips, &phat0);
        assert!((bound - 1.0).abs() < 1e-12, "bound = {bound}");
    }

    #[test]
    fn entry_roundtrip_reconstruction() {
        let cert = scalar_cert(2.0, 3.0);
        let config = scalar_config();
        let gains = recover_gains(&cert, &config).unwrap();
        let entry = GainScheduleEntry {
            k: 0,
            t_k: 0.0,
            t_len: 1.0,
            alpha: LinkSet::new(),
            k_gain: gains.k.clone(),
            l_gain: BlockMatrix::new(vec![1], vec![1]),
            m_gain: gains.m.clone(),
            o_gain: BlockMatrix::new(vec![1], vec![2]),
            z: cert.z.clone(),
            phat: cert.phat.clone(),
        };
        let back = certificate_from_entry(&entry);
        assert!((back.w[0].get(0, 0) - cert.w[0].get(0, 0)).abs() < 1e-12);
        assert!((back.what[0].get(0, 0) - cert.what[0].get(0, 0)).abs() < 1e-12);
    }
}
