//! Refinement fusion: per-modality attention, cross-modal attention through
//! [`Uim`], residual refinement, and the final multi-modal merge of a level.

use candle_core::Tensor;

use super::uim::{FusionMode, MultiFusion, Uim};
use crate::attention::{CoordinateAttention, SpatialAttention, COORDINATE_REDUCTION};
use crate::error::{Error, Result};
use crate::nn::{cat_channels, check_same_shape, BConv, ConvSpec, ParamBuilder};

/// Intermediate tensors of one attention stage. Index 0 is the main
/// modality; the remaining entries follow the auxiliary order.
#[derive(Debug, Clone)]
pub struct AttentionStage {
    /// Dense per-modality attention maps.
    pub attention: Vec<Tensor>,
    /// Inputs gated by their own attention.
    pub self_attended: Vec<Tensor>,
    /// Cross-modal attention maps, one per auxiliary.
    pub cross_attention: Vec<Tensor>,
    /// Main-modality features gated by each cross-modal map.
    pub main_cross: Vec<Tensor>,
    /// Refined outputs: main first, then auxiliaries.
    pub refined: Vec<Tensor>,
}

/// Everything [`rfm_forward`] computes for one level.
#[derive(Debug, Clone)]
pub struct RfmState {
    pub adapted: Vec<Tensor>,
    pub coordinate: AttentionStage,
    pub spatial: AttentionStage,
    pub fused: Tensor,
}

impl RfmState {
    /// Outputs of the spatial stage; main first.
    pub fn post_spatial(&self) -> &[Tensor] {
        &self.spatial.refined
    }
}

#[derive(Debug, Clone)]
pub struct RfmParameters {
    pub adapt: Vec<BConv>,
    pub coordinate: Vec<CoordinateAttention>,
    pub coordinate_cross: Vec<Uim>,
    pub coordinate_merge: BConv,
    pub spatial: Vec<SpatialAttention>,
    pub spatial_cross: Vec<Uim>,
    pub spatial_merge: BConv,
    pub fusion: MultiFusion,
}

impl RfmParameters {
    pub fn new(b: &mut ParamBuilder, channels: usize, num_aux: usize, mode: FusionMode) -> Result<Self> {
        let streams = num_aux + 1;
        let adapt = (0..streams)
            .map(|i| BConv::new(&mut b.pp(format!("adapt{i}")), ConvSpec::k3(channels, channels)))
            .collect::<Result<_>>()?;
        let coordinate = (0..streams)
            .map(|i| CoordinateAttention::new(&mut b.pp(format!("coord{i}")), channels, COORDINATE_REDUCTION))
            .collect::<Result<_>>()?;
        let coordinate_cross = (0..num_aux)
            .map(|i| Uim::new(&mut b.pp(format!("coord_cross{i}")), channels))
            .collect::<Result<_>>()?;
        let coordinate_merge = BConv::new(&mut b.pp("coord_merge"), ConvSpec::k3(num_aux * channels, channels))?;
        let spatial = (0..streams)
            .map(|i| SpatialAttention::new(&mut b.pp(format!("spatial{i}"))))
            .collect::<Result<_>>()?;
        let spatial_cross = (0..num_aux)
            .map(|i| Uim::new(&mut b.pp(format!("spatial_cross{i}")), 1))
            .collect::<Result<_>>()?;
        let spatial_merge = BConv::new(&mut b.pp("spatial_merge"), ConvSpec::k3(num_aux * channels, channels))?;
        let fusion = MultiFusion::new(&mut b.pp("fusion"), channels, num_aux, mode, false)?;
        Ok(Self {
            adapt,
            coordinate,
            coordinate_cross,
            coordinate_merge,
            spatial,
            spatial_cross,
            spatial_merge,
            fusion,
        })
    }

    pub fn num_aux(&self) -> usize {
        self.coordinate_cross.len()
    }
}

/// Shared residual pattern of both attention stages.
///
/// For each auxiliary `m`: `cross = uim(att_main, att_m)`,
/// `aux' = cross * x_m + att_m * x_m + x_m`, `main_cross_m = cross * x_main + att_main * x_main`;
/// then `main' = merge([main_cross...]) + x_main`.
fn attention_stage(
    inputs: &[Tensor],
    attention: Vec<Tensor>,
    cross: &[Uim],
    merge: &BConv,
    train: bool,
) -> Result<AttentionStage> {
    let self_attended = inputs
        .iter()
        .zip(&attention)
        .map(|(x, a)| Ok(x.broadcast_mul(a)?))
        .collect::<Result<Vec<_>>>()?;
    let mut cross_attention = Vec::with_capacity(cross.len());
    let mut main_cross = Vec::with_capacity(cross.len());
    let mut refined_aux = Vec::with_capacity(cross.len());
    for (k, uim) in cross.iter().enumerate() {
        let m = k + 1;
        let att = uim.forward(&attention[0], &attention[m], train)?;
        let aux = ((inputs[m].broadcast_mul(&att)? + &self_attended[m])? + &inputs[m])?;
        let main = (inputs[0].broadcast_mul(&att)? + &self_attended[0])?;
        cross_attention.push(att);
        main_cross.push(main);
        refined_aux.push(aux);
    }
    let refs: Vec<&Tensor> = main_cross.iter().collect();
    let main = (merge.forward(&cat_channels(&refs)?, train)? + &inputs[0])?;
    let mut refined = vec![main];
    refined.extend(refined_aux);
    Ok(AttentionStage {
        attention,
        self_attended,
        cross_attention,
        main_cross,
        refined,
    })
}

/// Refines and fuses one level. `main` is the main-modality feature and
/// `aux` the auxiliary features (flow then depth for an RGB main stream).
pub fn rfm_forward(main: &Tensor, aux: &[&Tensor], params: &RfmParameters, train: bool) -> Result<RfmState> {
    if aux.len() != params.num_aux() {
        return Err(Error::Shape(format!(
            "refinement block expects {} auxiliary inputs, got {}",
            params.num_aux(),
            aux.len()
        )));
    }
    for a in aux {
        check_same_shape(main, a, "refinement inputs")?;
    }
    let inputs: Vec<&Tensor> = std::iter::once(main).chain(aux.iter().copied()).collect();
    let adapted = inputs
        .iter()
        .zip(&params.adapt)
        .map(|(x, blk)| blk.forward(x, train))
        .collect::<Result<Vec<_>>>()?;

    let coord_maps = adapted
        .iter()
        .zip(&params.coordinate)
        .map(|(t, ca)| ca.forward(t, train)?.dense())
        .collect::<Result<Vec<_>>>()?;
    let coordinate = attention_stage(
        &adapted,
        coord_maps,
        &params.coordinate_cross,
        &params.coordinate_merge,
        train,
    )?;

    let spatial_maps = coordinate
        .refined
        .iter()
        .zip(&params.spatial)
        .map(|(c, sa)| sa.forward(c))
        .collect::<Result<Vec<_>>>()?;
    let spatial = attention_stage(
        &coordinate.refined,
        spatial_maps,
        &params.spatial_cross,
        &params.spatial_merge,
        train,
    )?;

    let z = &spatial.refined;
    let aux_z: Vec<&Tensor> = z[1..].iter().collect();
    let fused = params.fusion.forward(&z[0], &aux_z, train)?;
    Ok(RfmState {
        adapted,
        coordinate,
        spatial,
        fused,
    })
}
