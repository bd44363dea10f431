//! Honest lossy, noisy Gaussian channel: expected observations, outcome
//! statistics, error-correction leakage and the projected honest state.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::fock::{CMat, C64};
use crate::protocol::{frame_centers, moment_diagonals, v1_diagonal, ObservableKind, ObservableSpec, ProtocolParams};
use crate::quad::integrate_2d;
use crate::special::{ln_factorial, shannon_entropy};

/// Fibre transmittance `10^{-0.02 L}` for `L` km at 0.2 dB/km.
pub fn transmittance_from_distance(l_km: f64) -> f64 {
    10f64.powf(-0.02 * l_km)
}

/// Phase-insensitive Gaussian channel with transmittance `eta` and excess noise `xi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelModel {
    /// Transmittance.
    pub eta: f64,
    /// Excess noise in shot-noise units, referred to the channel input.
    pub xi: f64,
}

impl ChannelModel {
    /// Channel for a fibre of `l_km` km.
    pub fn from_distance(l_km: f64, xi: f64) -> Self {
        Self { eta: transmittance_from_distance(l_km), xi }
    }

    /// Thermal occupation of each output state, `eta xi / 2`.
    pub fn nbar(&self) -> f64 {
        0.5 * self.eta * self.xi
    }
}

/// Heterodyne outcome law for signal `x`: complex Gaussian centre and `E|y - c|^2`.
pub fn outcome_gaussian(p: &ProtocolParams, ch: &ChannelModel, x: usize) -> (C64, f64) {
    let centre = p.constellation()[x] * (ch.eta * p.eta_d).sqrt();
    let spread = if p.trusted { 1.0 + p.nu_el + p.eta_d * ch.nbar() } else { 1.0 + ch.nbar() };
    (centre, spread)
}

/// Honest values `gamma_j = Tr[Gamma_j rho_AB]`, so moment observables of
/// signal `i` carry the factor `p_i`.
pub fn honest_expectations(p: &ProtocolParams, ch: &ChannelModel, obs: &[ObservableSpec]) -> Vec<f64> {
    let nb = ch.nbar();
    // Thermal moments in each signal's own frame: <n> = nbar, <n^2> = 2 nbar^2 + nbar.
    let populations = thermal_populations(nb, 1e-20, 400);
    obs.iter()
        .map(|o| match o.kind {
            ObservableKind::Identity => 1.0,
            _ => {
                let (first, second) = moment_diagonals(p, populations.len()).expect("validated params");
                let diag = if o.kind == ObservableKind::FirstMoment { first } else { second };
                let weight = o.signal_index.map_or(1.0, |i| p.probs[i]);
                weight * populations.iter().zip(diag).map(|(pn, v)| pn * v).sum::<f64>()
            }
        })
        .collect()
}

/// Geometric populations `nbar^n / (1+nbar)^{n+1}` until the tail is below `tail`.
pub fn thermal_populations(nbar: f64, tail: f64, max_len: usize) -> Vec<f64> {
    let ratio = nbar / (1.0 + nbar);
    let mut out = vec![1.0 / (1.0 + nbar)];
    while out.len() < max_len && ratio.powi(out.len() as i32) > tail {
        let last = *out.last().expect("non-empty");
        out.push(last * ratio);
    }
    out
}

/// Probability of the honest state leaving the cutoff space, `(nbar/(1+nbar))^{n_c+1}`.
pub fn expected_weight(nbar: f64, n_c: usize) -> f64 {
    (nbar / (1.0 + nbar)).powi(n_c as i32 + 1)
}

/// Honest probability `Tr[sigma V_1]` that a test outcome lies at least
/// `beta_test` from its frame centre, averaged over signals.
pub fn honest_v1_expectation(p: &ProtocolParams, ch: &ChannelModel, beta_test: f64) -> Result<f64> {
    let pops = thermal_populations(ch.nbar(), 1e-20, 400);
    let v1 = v1_diagonal(p, beta_test, pops.len())?;
    // Every signal sees the same centred thermal state in its own frame.
    Ok(pops.iter().zip(&v1).map(|(a, b)| a * b).sum())
}

/// Conditional outcome distribution and error-correction quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeStats {
    /// `P(z|x)` with the discard symbol as the last column.
    pub joint_zx: Vec<Vec<f64>>,
    /// Probability that a round survives postselection.
    pub p_pass: f64,
    /// `H(Z)` on the pass-conditioned distribution.
    pub h_z: f64,
    /// `H(Z|X)` on the pass-conditioned distribution.
    pub h_z_given_x: f64,
    /// `p_pass [(1-beta) H(Z) + beta H(Z|X)]` in bits per key round.
    pub leak_per_round: f64,
}

/// Integrates the honest outcome density over each annular sector.
pub fn outcome_distribution(p: &ProtocolParams, ch: &ChannelModel) -> Result<Vec<Vec<f64>>> {
    p.validate()?;
    let mut rows = Vec::with_capacity(p.n_states);
    for x in 0..p.n_states {
        let (c, s) = outcome_gaussian(p, ch, x);
        let mut row = Vec::with_capacity(p.n_states + 1);
        for z in 0..p.n_states {
            let (lo, hi) = p.sector(z);
            let v = integrate_2d(
                |r, phi| {
                    let y = C64::from_polar(r, phi);
                    r * (-(y - c).norm_sqr() / s).exp() / (PI * s)
                },
                (p.delta_r, p.m_cut),
                (lo, hi),
                1e-13,
            )?;
            row.push(v);
        }
        let pass: f64 = row.iter().sum();
        row.push((1.0 - pass).max(0.0));
        rows.push(row);
    }
    Ok(rows)
}

/// Error-correction statistics with reconciliation efficiency `beta_rec`.
pub fn ec_statistics(p: &ProtocolParams, joint_zx: &[Vec<f64>], beta_rec: f64) -> Result<OutcomeStats> {
    if !(0.0..=1.0).contains(&beta_rec) {
        return Err(Error::InvalidParameter(format!("reconciliation efficiency {beta_rec}")));
    }
    let nz = p.n_states;
    let pass_x: Vec<f64> = joint_zx.iter().map(|r| r[..nz].iter().sum()).collect();
    let p_pass: f64 = p.probs.iter().zip(&pass_x).map(|(a, b)| a * b).sum();
    if !(p_pass > 0.0) {
        return Ok(OutcomeStats {
            joint_zx: joint_zx.to_vec(),
            p_pass: 0.0,
            h_z: 0.0,
            h_z_given_x: 0.0,
            leak_per_round: 0.0,
        });
    }
    let mut pz = vec![0.0; nz];
    let mut h_zx = 0.0;
    for x in 0..p.n_states {
        let px_pass = p.probs[x] * pass_x[x] / p_pass;
        if pass_x[x] <= 0.0 {
            continue;
        }
        let cond: Vec<f64> = joint_zx[x][..nz].iter().map(|v| v / pass_x[x]).collect();
        h_zx += px_pass * shannon_entropy(&cond);
        for z in 0..nz {
            pz[z] += px_pass * cond[z];
        }
    }
    let h_z = shannon_entropy(&pz);
    let leak = p_pass * ((1.0 - beta_rec) * h_z + beta_rec * h_zx);
    Ok(OutcomeStats { joint_zx: joint_zx.to_vec(), p_pass, h_z, h_z_given_x: h_zx, leak_per_round: leak })
}

/// Outcome distribution followed by [`ec_statistics`].
pub fn outcome_distribution_and_ec(p: &ProtocolParams, ch: &ChannelModel, beta_rec: f64) -> Result<OutcomeStats> {
    let joint = outcome_distribution(p, ch)?;
    ec_statistics(p, &joint, beta_rec)
}

/// Honest state `Pi rho_AB Pi` in the basis `|i> (x) D(beta_i)|n>`.
///
/// Block `(i, j)` equals `sqrt(p_i p_j) <alpha_j|alpha_i>^{1-eta} K(beta_i - beta_j)`
/// where `K(Delta)_{nm} = int P(zeta) e^{zeta Delta^* - zeta^* Delta} <n|zeta><zeta|m>`
/// and `P` is the thermal P-function of occupation `nbar`.
pub fn honest_state(p: &ProtocolParams, ch: &ChannelModel) -> Result<CMat> {
    p.validate()?;
    let db = p.dim_b();
    let ns = p.n_states;
    let alphas = p.constellation();
    let betas = frame_centers(p, ch.eta);
    let nb = ch.nbar();
    let mut rho = CMat::zeros(ns * db, ns * db);
    for i in 0..ns {
        for j in 0..ns {
            let a_i = alphas[i];
            let a_j = alphas[j];
            let expo = -0.5 * a_i.norm_sqr() - 0.5 * a_j.norm_sqr() + a_j.conj() * a_i;
            let pref = (expo * (1.0 - ch.eta)).exp() * (p.probs[i] * p.probs[j]).sqrt();
            let k = noise_kernel(betas[i] - betas[j], nb, db);
            for n in 0..db {
                for m in 0..db {
                    rho[(i * db + n, j * db + m)] = pref * k[(n, m)];
                }
            }
        }
    }
    Ok(crate::fock::hermitian_part(&rho))
}

/// `K(Delta)` on `dim` levels for additive thermal noise `nbar`.
fn noise_kernel(delta: C64, nbar: f64, dim: usize) -> CMat {
    let inv_lambda = nbar / (1.0 + nbar);
    let pref = (-delta.norm_sqr() * inv_lambda).exp() / (1.0 + nbar);
    let a = delta.conj();
    let b = -delta;
    let mut k = CMat::zeros(dim, dim);
    for n in 0..dim {
        for m in 0..dim {
            let mut acc = C64::new(0.0, 0.0);
            for q in 0..=n.min(m) {
                let power = (n + m - q) as i32;
                let lam = inv_lambda.powi(power);
                if lam == 0.0 {
                    continue;
                }
                let comb = (ln_factorial(n) + ln_factorial(m)
                    - ln_factorial(q)
                    - ln_factorial(n - q)
                    - ln_factorial(m - q)
                    - 0.5 * (ln_factorial(n) + ln_factorial(m)))
                .exp();
                acc += a.powu((m - q) as u32) * b.powu((n - q) as u32) * (comb * lam);
            }
            k[(n, m)] = acc * pref;
        }
    }
    k
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transmittance_examples() {
        assert_eq!(transmittance_from_distance(0.0), 1.0);
        assert!((transmittance_from_distance(50.0) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn weight_formula() {
        assert!((expected_weight(1.0, 3) - 0.0625).abs() < 1e-16);
    }
}
