//! Closed-form operation counts of the estimators at test time.

use serde::{Deserialize, Serialize};

use super::{EstimatorChoice, ExperimentConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Somp,
    MmvAmp,
    MmvLamp,
    GmmvAmp,
    GmmvLamp,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [Scheme::Somp, Scheme::MmvAmp, Scheme::MmvLamp, Scheme::GmmvAmp, Scheme::GmmvLamp];
}

impl From<EstimatorChoice> for Scheme {
    fn from(e: EstimatorChoice) -> Self {
        match e {
            EstimatorChoice::Somp => Scheme::Somp,
            EstimatorChoice::GmmvAmp => Scheme::GmmvAmp,
            EstimatorChoice::GmmvLamp => Scheme::GmmvLamp,
        }
    }
}

/// Problem dimensions entering the counts. `iterations` is `I` for SOMP, `T_0` for
/// the AMP variants and `T` for the unrolled networks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplexityRow {
    pub scheme: Scheme,
    pub g: u64,
    pub v: u64,
    pub k: u64,
    pub n_ap: u64,
    pub iterations: u64,
    pub flops: u64,
    /// `G V K` times the iteration count.
    pub dominant: u64,
}

/// SOMP: `GVKI + I^2(I+1)^2/4 + GI(I+1)(2I+1)/3 + GKI(I+1)/2 + VKI`;
/// AMP / MMV-LAMP: `GVKT + G N_AP K`; GMMV-LAMP: `(GVK + K^2)T + G N_AP K`.
/// All fractions divide exactly.
pub fn flop_count(scheme: Scheme, g: u64, v: u64, k: u64, n_ap: u64, iterations: u64) -> u64 {
    let i = iterations;
    let synth = g * n_ap * k;
    match scheme {
        Scheme::Somp => {
            g * v * k * i + i * i * (i + 1) * (i + 1) / 4 + g * (i * (i + 1) * (2 * i + 1) / 6) * 2 + g * k * (i * (i + 1) / 2) + v * k * i
        }
        Scheme::MmvAmp | Scheme::MmvLamp | Scheme::GmmvAmp => g * v * k * i + synth,
        Scheme::GmmvLamp => (g * v * k + k * k) * i + synth,
    }
}

/// Counts for every scheme and every configured dictionary size, at the base geometry.
pub fn complexity_report(config: &ExperimentConfig) -> Vec<ComplexityRow> {
    let geo = config.geometry;
    let (g, k, n_ap) = (config.pilots.slots as u64, geo.n_subcarriers as u64, geo.n_ap as u64);
    let mut rows = Vec::new();
    for d in &config.dictionaries {
        let v = d.n_atoms(geo.n_ap) as u64;
        for scheme in Scheme::ALL {
            let iterations = match scheme {
                Scheme::Somp => config.sparsity(),
                Scheme::MmvAmp | Scheme::GmmvAmp => config.amp.iterations,
                Scheme::MmvLamp | Scheme::GmmvLamp => config.layers,
            } as u64;
            rows.push(ComplexityRow {
                scheme,
                g,
                v,
                k,
                n_ap,
                iterations,
                flops: flop_count(scheme, g, v, k, n_ap, iterations),
                dominant: g * v * k * iterations,
            });
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reference_dominant_term() {
        let c = ExperimentConfig::default();
        let rows = complexity_report(&c);
        let lamp = rows.iter().find(|r| r.scheme == Scheme::GmmvLamp).unwrap();
        assert_eq!((lamp.g, lamp.v, lamp.k, lamp.iterations), (32, 512, 64, 5));
        assert_eq!(lamp.dominant, 5_242_880);
        assert_eq!(lamp.flops, 5_242_880 + 64 * 64 * 5 + 32 * 128 * 64);
    }

    #[test]
    fn somp_polynomial_at_small_i() {
        // I = 1: GVK + 1 + 2G + GK + VK
        assert_eq!(flop_count(Scheme::Somp, 2, 3, 5, 7, 1), 30 + 1 + 4 + 10 + 15);
        // I = 2: 2GVK + 9 + 10G + 3GK + 2VK
        assert_eq!(flop_count(Scheme::Somp, 2, 3, 5, 7, 2), 60 + 9 + 20 + 30 + 30);
    }

    proptest! {
        #[test]
        fn lamp_exceeds_amp_by_k_squared_t(g in 1u64..64, v in 1u64..1024, k in 1u64..128, n in 2u64..256, t in 1u64..20) {
            prop_assert_eq!(flop_count(Scheme::GmmvLamp, g, v, k, n, t) - flop_count(Scheme::GmmvAmp, g, v, k, n, t), k * k * t);
        }

        #[test]
        fn gmmv_and_mmv_agree_at_k1(g in 1u64..64, v in 1u64..1024, n in 2u64..256, t in 1u64..20) {
            prop_assert_eq!(flop_count(Scheme::GmmvAmp, g, v, 1, n, t), flop_count(Scheme::MmvAmp, g, v, 1, n, t));
            prop_assert_eq!(flop_count(Scheme::MmvLamp, g, v, 1, n, t), flop_count(Scheme::MmvAmp, g, v, 1, n, t));
        }
    }
}
