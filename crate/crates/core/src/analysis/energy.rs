use alloc::vec::Vec;

use super::spikes::SpikeStats;
use crate::network::{LayerKind, NetSpec};
use crate::{Error, Result};

/// Per-operation energy costs (pJ, 45 nm CMOS, 32-bit float) and the
/// normalized neuromorphic costs per spike and per timestep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyTable {
    pub e_mult: f64,
    pub e_add: f64,
    pub e_mac: f64,
    pub e_ac: f64,
    pub e_dyn: f64,
    pub e_sta: f64,
}

impl Default for EnergyTable {
    fn default() -> Self {
        EnergyTable {
            e_mult: 3.7,
            e_add: 0.9,
            e_mac: 4.6,
            e_ac: 0.9,
            e_dyn: 0.4,
            e_sta: 0.6,
        }
    }
}

impl EnergyTable {
    pub fn validate(&self) -> Result<()> {
        let all = [self.e_mult, self.e_add, self.e_mac, self.e_ac, self.e_dyn, self.e_sta];
        if all.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid("energy", "costs must be finite and non-negative"));
        }
        if (self.e_mac - (self.e_mult + self.e_add)).abs() > 1e-9 * self.e_mac.max(1.0) {
            return Err(Error::invalid("energy", "a MAC must cost one multiply plus one add"));
        }
        Ok(())
    }
}

/// Which spike rate scales a layer's operation count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RateAttribution {
    /// The rate of the spikes the layer receives: the nearest spiking layer
    /// upstream, or the encoder for the first weighted layer. Every incoming
    /// spike triggers one accumulate per fan-out connection.
    #[default]
    Input,
    /// The layer's own firing rate (zero for the non-spiking output layer).
    Own,
}

/// Dense operation counts per layer: `k²·O²·C_in·C_out` for convolutions,
/// `C_in·C_out` for linear layers, 0 for pooling.
pub fn flops_ann(spec: &NetSpec) -> Result<Vec<u64>> {
    let resolved = spec.resolve()?;
    Ok(resolved
        .iter()
        .map(|r| match r.spec.kind {
            LayerKind::Conv { kernel, .. } => {
                let (cin, cout) = (r.in_shape[0] as u64, r.out_shape[0] as u64);
                let o2 = (r.out_shape[1] * r.out_shape[2]) as u64;
                (kernel * kernel) as u64 * o2 * cin * cout
            }
            LayerKind::Linear { out_features } => r.in_shape.iter().product::<usize>() as u64 * out_features as u64,
            LayerKind::AvgPool => 0,
        })
        .collect())
}

/// Energy estimates of one network under measured spike statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    pub flops_ann: Vec<u64>,
    pub flops_snn: Vec<f64>,
    /// Spike rate applied to each layer.
    pub rates: Vec<f64>,
    pub e_ann: f64,
    pub e_snn: f64,
    /// `E_ANN / E_SNN`; infinite when the network emits no spikes.
    pub ratio: f64,
    /// `spikes per sample × E_dyn + timesteps × E_sta` (normalized units).
    pub neuromorphic: f64,
}

/// `E_ANN = Σ FLOPS_ANN(l)·E_MAC`, `E_SNN = Σ FLOPS_ANN(l)·R(l)·E_AC`.
pub fn energy_report(
    spec: &NetSpec,
    stats: &SpikeStats,
    table: &EnergyTable,
    rates: RateAttribution,
) -> Result<EnergyReport> {
    table.validate()?;
    let resolved = spec.resolve()?;
    let neurons: Vec<u64> = resolved.iter().map(|r| r.neurons() as u64).collect();
    if neurons != stats.neurons || stats.input_neurons != spec.input.iter().product::<usize>() as u64 {
        return Err(Error::invalid(
            "energy",
            "spike statistics come from a different architecture",
        ));
    }
    let flops = flops_ann(spec)?;
    let mut applied = Vec::with_capacity(flops.len());
    let mut upstream = stats.input_rate();
    for (l, r) in resolved.iter().enumerate() {
        applied.push(match rates {
            RateAttribution::Input => upstream,
            RateAttribution::Own => stats.rate(l),
        });
        if r.spec.spikes() {
            upstream = stats.rate(l);
        }
    }
    let flops_snn: Vec<f64> = flops.iter().zip(&applied).map(|(&f, &r)| f as f64 * r).collect();
    let e_ann = flops.iter().map(|&f| f as f64).sum::<f64>() * table.e_mac;
    let e_snn = flops_snn.iter().sum::<f64>() * table.e_ac;
    let ratio = if e_snn > 0.0 { e_ann / e_snn } else { f64::INFINITY };
    let neuromorphic = stats.hidden_spikes_per_sample() * table.e_dyn + stats.timesteps as f64 * table.e_sta;
    Ok(EnergyReport {
        flops_ann: flops,
        flops_snn,
        rates: applied,
        e_ann,
        e_snn,
        ratio,
        neuromorphic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{LayerSpec, Norm};
    use alloc::vec;

    #[test]
    fn unit_cases() {
        let spec = NetSpec {
            input: [3, 32, 32],
            layers: vec![LayerSpec::conv(64, Norm::Bntt), LayerSpec::output(10, Norm::None)],
        };
        assert_eq!(flops_ann(&spec).unwrap(), vec![1_769_472, 64 * 32 * 32 * 10]);
        let spec = NetSpec {
            input: [512, 1, 1],
            layers: vec![LayerSpec::output(10, Norm::None)],
        };
        assert_eq!(flops_ann(&spec).unwrap(), vec![5120]);
        let spec = NetSpec {
            input: [1, 1, 1],
            layers: vec![
                LayerSpec {
                    kind: LayerKind::Conv {
                        out_channels: 1,
                        kernel: 1,
                        stride: 1,
                        pad: 0,
                    },
                    norm: Norm::None,
                    is_output: false,
                },
                LayerSpec::output(1, Norm::None),
            ],
        };
        assert_eq!(flops_ann(&spec).unwrap()[0], 1);
    }

    #[test]
    fn table_consistency() {
        assert!(EnergyTable::default().validate().is_ok());
        let bad = EnergyTable {
            e_mac: 5.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
