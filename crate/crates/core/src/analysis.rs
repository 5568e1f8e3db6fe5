//! Entanglement measures and end-of-run summaries.
//!
//! For a shared single excitation the reduced state of one atom is diagonal,
//! so its entanglement with the rest of the system is the binary entropy of
//! its excitation probability. Fidelities compare the atomic amplitudes with
//! the maximally entangled two-atom (Bell) and three-atom (W) targets.

use num_complex::Complex64;

use crate::dynamics::{final_state, ExcitationState, TimeSeries};
use crate::error::{Error, Result};

/// Tolerated overshoot of a probability outside [0, 1] before it is treated
/// as a caller error rather than roundoff.
const P_SLACK: f64 = 1e-12;

/// Binary von Neumann entropy -p ln p - (1-p) ln(1-p) in nats.
///
/// `p` is the excitation probability of the subsystem being traced out;
/// values within roundoff slack of [0, 1] are clamped, anything further out
/// is rejected. The p ln p terms vanish at both endpoints.
pub fn von_neumann_entropy(p: f64) -> Result<f64> {
    if !(p >= -P_SLACK) || !(p <= 1.0 + P_SLACK) {
        return Err(Error::invalid(format!(
            "excitation probability must lie in [0, 1], got {p}"
        )));
    }
    let p = p.clamp(0.0, 1.0);
    let term = |x: f64| if x == 0.0 { 0.0 } else { -x * x.ln() };
    Ok(term(p) + term(1.0 - p))
}

/// Entanglement entropy of the first atom in a two-atom state, in nats.
///
/// The state is normalized first so that small integrator drift does not
/// push the probability outside [0, 1].
pub fn entropy_from_state(state: &ExcitationState) -> Result<f64> {
    if state.atom_amps.len() != 2 {
        return Err(Error::invalid(format!(
            "entanglement entropy is defined here for 2 atoms, got {}",
            state.atom_amps.len()
        )));
    }
    let n2 = state.norm().powi(2);
    if !(n2 > 0.0) {
        return Err(Error::invalid("cannot normalize a zero state"));
    }
    von_neumann_entropy(state.atom_amps[0].norm_sqr() / n2)
}

/// Overlap with the symmetric Bell state (|eg> + |ge>)/sqrt(2).
pub fn bell_fidelity(state: &ExcitationState) -> Result<f64> {
    if state.atom_amps.len() != 2 {
        return Err(Error::invalid(format!(
            "Bell fidelity requires 2 atoms, got {}",
            state.atom_amps.len()
        )));
    }
    let overlap = (state.atom_amps[0] + state.atom_amps[1]) / 2f64.sqrt();
    Ok(overlap.norm_sqr())
}

/// Bell fidelity maximized over the relative phase of the two amplitudes,
/// (|a| + |b|)^2 / 2; useful when a local phase rotation is free.
pub fn best_bell_fidelity(state: &ExcitationState) -> Result<f64> {
    if state.atom_amps.len() != 2 {
        return Err(Error::invalid(format!(
            "Bell fidelity requires 2 atoms, got {}",
            state.atom_amps.len()
        )));
    }
    let s = state.atom_amps[0].norm() + state.atom_amps[1].norm();
    Ok(s * s / 2.0)
}

/// Overlap with the three-atom W state (|egg> + |geg> + |gge>)/sqrt(3).
pub fn w_fidelity(state: &ExcitationState) -> Result<f64> {
    if state.atom_amps.len() != 3 {
        return Err(Error::invalid(format!(
            "W fidelity requires 3 atoms, got {}",
            state.atom_amps.len()
        )));
    }
    let overlap: Complex64 = state.atom_amps.iter().sum::<Complex64>() / 3f64.sqrt();
    Ok(overlap.norm_sqr())
}

/// End-of-run summary of the shared excitation.
///
/// Every derived number is recomputed from the stored amplitudes, so the
/// report cannot drift out of sync with them. Entanglement fields are
/// present only where they are defined: entropy and Bell fidelities for two
/// atoms, W fidelity for three.
#[derive(Debug, Clone, PartialEq)]
pub struct FinalStateReport {
    pub labels: Vec<String>,
    pub amplitudes: Vec<Complex64>,
    pub populations: Vec<f64>,
    pub photon_amp: Complex64,
    pub photon_prob: f64,
    pub entropy_nats: Option<f64>,
    pub bell_fidelity: Option<f64>,
    pub best_bell_fidelity: Option<f64>,
    pub w_fidelity: Option<f64>,
    pub norm_drift: f64,
}

impl FinalStateReport {
    /// Summarize a normalized state.
    pub fn from_state(
        state: &ExcitationState,
        labels: Vec<String>,
        norm_drift: f64,
    ) -> Result<FinalStateReport> {
        let n = state.atom_amps.len();
        if labels.len() != n {
            return Err(Error::invalid(format!(
                "{} labels for {} atoms",
                labels.len(),
                n
            )));
        }
        let two = n == 2;
        Ok(FinalStateReport {
            labels,
            amplitudes: state.atom_amps.clone(),
            populations: state.populations(),
            photon_amp: state.photon_amp,
            photon_prob: state.photon_prob(),
            entropy_nats: if two { Some(entropy_from_state(state)?) } else { None },
            bell_fidelity: if two { Some(bell_fidelity(state)?) } else { None },
            best_bell_fidelity: if two { Some(best_bell_fidelity(state)?) } else { None },
            w_fidelity: if n == 3 { Some(w_fidelity(state)?) } else { None },
            norm_drift,
        })
    }

    /// Summarize the renormalized final state of a time series, failing if
    /// the integration drifted more than the renormalization budget.
    pub fn from_series(series: &TimeSeries) -> Result<FinalStateReport> {
        let state = final_state(series)?;
        Self::from_state(&state, series.labels.clone(), series.max_norm_drift)
    }
}
