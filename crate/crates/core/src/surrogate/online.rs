//! Q-matrix assembly from a trained network.

use super::dataset::SampleRegion;
use super::mlp::{InferenceNet, MlpParams};
use crate::field_exact::{rescale_kernels, CoilSpec, GeometryKernels, QMatrix};
use crate::frames::{canonical_input, pair_frame, Axis, Dcm, PairFrameContext};
use crate::{Error, Result, Vec3};

/// What to do when a query falls outside the training region.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ExtrapolationPolicy {
    #[default]
    Warn,
    Error,
    /// Only set the flag on the result.
    Ignore,
}

/// Relative slack on the region bounds before a query counts as
/// extrapolation.
const REGION_TOL: f64 = 1e-9;

/// A trained network together with the region and coil radius it was
/// trained for.
#[derive(Clone, Debug, PartialEq)]
pub struct Surrogate {
    params: MlpParams,
    net: InferenceNet,
    pub region: SampleRegion,
    pub policy: ExtrapolationPolicy,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurrogateQ {
    pub q: QMatrix,
    /// Set when any of the nine canonical inputs was outside the region.
    pub extrapolated: bool,
}

impl Surrogate {
    pub fn new(params: MlpParams, region: SampleRegion) -> Result<Self> {
        region.validate()?;
        if params.n_inputs() != 4 || params.n_outputs() != 6 {
            return Err(Error::Shape(format!(
                "surrogate needs a 4-input, 6-output network, got {:?}",
                params.sizes()
            )));
        }
        if let Some(r) = &params.radial {
            r.validate(4, 6)?;
        }
        Ok(Surrogate {
            net: InferenceNet::new(&params),
            params,
            region,
            policy: ExtrapolationPolicy::Warn,
        })
    }

    pub fn params(&self) -> &MlpParams {
        &self.params
    }

    pub fn with_policy(mut self, policy: ExtrapolationPolicy) -> Self {
        self.policy = policy;
        self
    }

    /// Ratio between `coil` and the training coil.
    pub fn scale_for(&self, coil: &CoilSpec) -> f64 {
        coil.radius() / self.region.coil_radius
    }
}

/// Surrogate counterpart of `q_matrix_exact`: all nine axis pairs are
/// canonicalized, divided by `gamma`, evaluated in one network batch,
/// rescaled and mapped back to frame A.
pub fn q_matrix_surrogate(
    r_jk: &Vec3,
    dcm_j: &Dcm,
    dcm_k: &Dcm,
    coil: &CoilSpec,
    surrogate: &Surrogate,
    gamma: f64,
) -> Result<SurrogateQ> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::Validation(format!("scale factor must be positive, got {gamma}")));
    }
    let mut batch = Vec::with_capacity(36);
    let mut contexts = Vec::with_capacity(9);
    let mut extrapolated = false;
    for l in Axis::ALL {
        let c_d_from_a = pair_frame(r_jk, dcm_k, l)?;
        let r_d = c_d_from_a.apply(r_jk) / gamma;
        for m in Axis::ALL {
            let n_d = c_d_from_a.apply(&dcm_j.column(m.index()));
            let input = canonical_input(&r_d, &n_d);
            if !surrogate.region.contains(&input, REGION_TOL) {
                extrapolated = true;
            }
            batch.extend_from_slice(&input.to_array());
            contexts.push(PairFrameContext {
                c_d_from_a,
                source_axis: l,
                target_axis: m,
            });
        }
    }
    if extrapolated {
        let d = r_jk.norm() / gamma;
        let msg = format!(
            "surrogate query at scaled distance {d:.4} m outside the trained region [{}, {}] m",
            surrogate.region.r_min, surrogate.region.r_max
        );
        match surrogate.policy {
            ExtrapolationPolicy::Warn => log::warn!("{msg}"),
            ExtrapolationPolicy::Error => return Err(Error::Domain(msg)),
            ExtrapolationPolicy::Ignore => {}
        }
    }
    let out = surrogate.net.forward(&batch)?;
    let area = coil.area();
    let mut q = QMatrix::zeros();
    for (row, ctx) in out.chunks_exact(6).zip(&contexts) {
        let k_d = rescale_kernels(&GeometryKernels::from_array(row.try_into().unwrap()), gamma)?;
        let k_a = crate::frames::decanonicalize_kernels(&k_d, ctx)?;
        q.set_block(ctx.source_axis, ctx.target_axis, &k_a, area);
    }
    if !q.is_finite() {
        return Err(Error::Numeric("surrogate produced a non-finite Q matrix".into()));
    }
    Ok(SurrogateQ { q, extrapolated })
}
