//! Model catalog and assembly: declarative architecture specs, a builder
//! with deterministic initialization, the forward pass, and exact parameter
//! counting.
//!
//! A [`ModelPlan`] is a pure description (stage list per branch plus fusion
//! wiring); parameters can be counted from it without allocating anything,
//! which matters for the full-size configurations whose weights run into
//! the hundreds of millions.

pub mod catalog;

pub use catalog::{list_architectures, ArchInfo};

use rand_chacha::ChaCha8Rng;

use crate::error::{AvError, Result};
use crate::layers::{
    classifier_head, cross_modal_attention, dropout, fc_forward, self_attention, Activation,
    AttnVars, FcParams, FcVars, GateVars, ResidualVars,
};
use crate::rng;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

// ── Architecture specification ───────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArchName {
    FcAudio,
    FcVisual,
    FcEarly,
    FcLate,
    FcrnEarly,
    FcrnLate,
    FcrgnEarly,
    FcrgnLate,
    FcAttention,
    ResAttentionEarly,
    ResAttentionLate,
    AttendFusion,
    AvAttention,
    SelfCrossAttention,
    SelfAttendedCrossFcrn,
}

pub const ALL_ARCHS: [ArchName; 15] = [
    ArchName::FcAudio,
    ArchName::FcVisual,
    ArchName::FcEarly,
    ArchName::FcLate,
    ArchName::FcrnEarly,
    ArchName::FcrnLate,
    ArchName::FcrgnEarly,
    ArchName::FcrgnLate,
    ArchName::FcAttention,
    ArchName::ResAttentionEarly,
    ArchName::ResAttentionLate,
    ArchName::AttendFusion,
    ArchName::AvAttention,
    ArchName::SelfCrossAttention,
    ArchName::SelfAttendedCrossFcrn,
];

impl ArchName {
    pub fn as_str(self) -> &'static str {
        match self {
            ArchName::FcAudio => "fc_audio",
            ArchName::FcVisual => "fc_visual",
            ArchName::FcEarly => "fc_early",
            ArchName::FcLate => "fc_late",
            ArchName::FcrnEarly => "fcrn_early",
            ArchName::FcrnLate => "fcrn_late",
            ArchName::FcrgnEarly => "fcrgn_early",
            ArchName::FcrgnLate => "fcrgn_late",
            ArchName::FcAttention => "fc_attention",
            ArchName::ResAttentionEarly => "res_attention_early",
            ArchName::ResAttentionLate => "res_attention_late",
            ArchName::AttendFusion => "attend_fusion",
            ArchName::AvAttention => "av_attention",
            ArchName::SelfCrossAttention => "self_cross_attention",
            ArchName::SelfAttendedCrossFcrn => "self_attended_cross_fcrn",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        ALL_ARCHS
            .iter()
            .copied()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| AvError::UnknownArchitecture(s.to_string()))
    }

    pub fn is_unimodal(self) -> bool {
        matches!(self, ArchName::FcAudio | ArchName::FcVisual)
    }

    pub fn is_baseline(self) -> bool {
        matches!(
            self,
            ArchName::FcAudio
                | ArchName::FcVisual
                | ArchName::FcEarly
                | ArchName::FcLate
                | ArchName::FcrnEarly
                | ArchName::FcrnLate
                | ArchName::FcrgnEarly
                | ArchName::FcrgnLate
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fusion {
    None,
    Early,
    Late,
}

impl Fusion {
    pub fn as_str(self) -> &'static str {
        match self {
            Fusion::None => "none",
            Fusion::Early => "early",
            Fusion::Late => "late",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modality {
    Audio,
    Visual,
}

/// Declarative description of one catalog architecture at concrete sizes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchSpec {
    pub name: ArchName,
    pub visual_dim: usize,
    pub audio_dim: usize,
    pub hidden_dim: usize,
    pub attn_dim: usize,
    pub num_classes: usize,
    /// Stage count per modality branch; meaning per family is documented in
    /// the catalog (hidden layers for FC stacks, residual blocks for
    /// residual families, pre/post stack depth for attention branches).
    pub branch_depth: usize,
    /// Stage count after the fusion point (0 = classifier directly on the
    /// concatenated representations, where the family allows it).
    pub fusion_depth: usize,
    /// Rows the attention blocks operate over (the projection layer maps
    /// branch features to `attn_rows * attn_dim`).
    pub attn_rows: usize,
    /// When false, every attention block is replaced by a same-width linear
    /// FC layer (the ablation wiring).
    pub use_attention: bool,
    pub fusion: Fusion,
}

impl ArchSpec {
    /// Catalog defaults at full published sizes: 1024/128 inputs, 8000-wide
    /// baselines, 2000-wide proposed stacks, 1024 attention width, 4716
    /// classes.
    pub fn defaults(name: ArchName) -> ArchSpec {
        let (branch_depth, fusion_depth) = catalog::default_depths(name);
        ArchSpec {
            name,
            visual_dim: 1024,
            audio_dim: 128,
            hidden_dim: if name.is_baseline() { 8000 } else { 2000 },
            attn_dim: 1024,
            num_classes: 4716,
            branch_depth,
            fusion_depth,
            attn_rows: 2,
            use_attention: true,
            fusion: catalog::default_fusion(name),
        }
    }

    /// Same architecture at reduced sizes, for tests and desk-scale runs.
    pub fn with_dims(
        mut self,
        visual_dim: usize,
        audio_dim: usize,
        hidden_dim: usize,
        attn_dim: usize,
        num_classes: usize,
    ) -> ArchSpec {
        self.visual_dim = visual_dim;
        self.audio_dim = audio_dim;
        self.hidden_dim = hidden_dim;
        self.attn_dim = attn_dim;
        self.num_classes = num_classes;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (what, v) in [
            ("visual_dim", self.visual_dim),
            ("audio_dim", self.audio_dim),
            ("hidden_dim", self.hidden_dim),
            ("attn_dim", self.attn_dim),
            ("num_classes", self.num_classes),
            ("attn_rows", self.attn_rows),
        ] {
            if v == 0 {
                return Err(AvError::InvalidArgument(format!("{what} must be positive")));
            }
        }
        let unimodal = self.name.is_unimodal();
        if unimodal != (self.fusion == Fusion::None) {
            return Err(AvError::InvalidArgument(format!(
                "fusion must be \"none\" exactly for unimodal architectures; \
                 got {} for {}",
                self.fusion.as_str(),
                self.name.as_str()
            )));
        }
        catalog::validate_depths(self)
    }
}

// ── Plan ─────────────────────────────────────────────────────────────

/// One layer-level step in a branch or fusion stack.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StageSpec {
    Fc {
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        dropout: bool,
    },
    /// Residual block with a fixed two-layer mapping (relu then linear),
    /// optionally gated.
    Residual { dim: usize, gated: bool },
    /// Single-head self-attention over `rows` rows of width `dim`; input
    /// and output are the flattened `rows * dim` vector.
    Attention { rows: usize, dim: usize },
}

impl StageSpec {
    pub fn in_dim(&self) -> usize {
        match self {
            StageSpec::Fc { in_dim, .. } => *in_dim,
            StageSpec::Residual { dim, .. } => *dim,
            StageSpec::Attention { rows, dim } => rows * dim,
        }
    }

    pub fn out_dim(&self) -> usize {
        match self {
            StageSpec::Fc { out_dim, .. } => *out_dim,
            StageSpec::Residual { dim, .. } => *dim,
            StageSpec::Attention { rows, dim } => rows * dim,
        }
    }
}

/// How branches combine. Branch stage lists always start from the raw
/// modality width (or the concatenated width for early fusion).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WiringPlan {
    Unimodal {
        modality: Modality,
        stack: Vec<StageSpec>,
    },
    EarlyFusion { stack: Vec<StageSpec> },
    LateFusion {
        audio: Vec<StageSpec>,
        visual: Vec<StageSpec>,
        fusion: Vec<StageSpec>,
    },
    /// Branches end in self-attention; a cross-attention exchange runs
    /// between the two row sets, optionally followed by one more
    /// self-attention per exchanged stream, and all four streams are
    /// concatenated into the fusion stack.
    CrossModal {
        audio: Vec<StageSpec>,
        visual: Vec<StageSpec>,
        post_self_attention: bool,
        fusion: Vec<StageSpec>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelPlan {
    pub wiring: WiringPlan,
    pub classifier: StageSpec,
}

/// Shape and init recipe for one parameter tensor.
#[derive(Debug, Clone)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    init: InitKind,
}

#[derive(Debug, Clone, Copy)]
enum InitKind {
    Weight(Activation),
    Bias(Activation),
}

fn fc_param_specs(prefix: &str, in_dim: usize, out_dim: usize, activation: Activation, out: &mut Vec<ParamSpec>) {
    out.push(ParamSpec {
        name: format!("{prefix}.weight"),
        shape: vec![in_dim, out_dim],
        init: InitKind::Weight(activation),
    });
    out.push(ParamSpec {
        name: format!("{prefix}.bias"),
        shape: vec![out_dim],
        init: InitKind::Bias(activation),
    });
}

fn attn_param_specs(prefix: &str, dim: usize, out: &mut Vec<ParamSpec>) {
    for field in ["w_query", "w_key", "w_value"] {
        out.push(ParamSpec {
            name: format!("{prefix}.{field}"),
            shape: vec![dim, dim],
            init: InitKind::Weight(Activation::None),
        });
    }
}

fn stage_param_specs(prefix: &str, stage: &StageSpec, out: &mut Vec<ParamSpec>) {
    match stage {
        StageSpec::Fc {
            in_dim,
            out_dim,
            activation,
            ..
        } => fc_param_specs(&format!("{prefix}.fc"), *in_dim, *out_dim, *activation, out),
        StageSpec::Residual { dim, gated } => {
            fc_param_specs(&format!("{prefix}.res.f0"), *dim, *dim, Activation::Relu, out);
            fc_param_specs(&format!("{prefix}.res.f1"), *dim, *dim, Activation::None, out);
            if *gated {
                fc_param_specs(&format!("{prefix}.res.gate"), *dim, *dim, Activation::Sigmoid, out);
            }
        }
        StageSpec::Attention { dim, .. } => attn_param_specs(&format!("{prefix}.attn"), *dim, out),
    }
}

impl ModelPlan {
    /// Named stack groups in canonical order (registration, counting, and
    /// checkpoint order all follow this enumeration).
    fn groups(&self) -> Vec<(&'static str, &[StageSpec])> {
        match &self.wiring {
            WiringPlan::Unimodal { stack, .. } | WiringPlan::EarlyFusion { stack } => {
                vec![("net", stack.as_slice())]
            }
            WiringPlan::LateFusion { audio, visual, fusion } => vec![
                ("audio", audio.as_slice()),
                ("visual", visual.as_slice()),
                ("fusion", fusion.as_slice()),
            ],
            WiringPlan::CrossModal { audio, visual, fusion, .. } => vec![
                ("audio", audio.as_slice()),
                ("visual", visual.as_slice()),
                ("fusion", fusion.as_slice()),
            ],
        }
    }

    /// All parameter tensors of the model, in the order they are
    /// initialized, registered on the tape, and serialized.
    pub fn param_specs(&self) -> Vec<ParamSpec> {
        let mut out = Vec::new();
        for (group, stages) in self.groups() {
            if group == "fusion" {
                // cross-attention parameters sit between the branches and
                // the fusion stack
                if let WiringPlan::CrossModal {
                    post_self_attention, ..
                } = &self.wiring
                {
                    let dim = self.cross_dim();
                    attn_param_specs("cross.audio", dim, &mut out);
                    attn_param_specs("cross.visual", dim, &mut out);
                    if *post_self_attention {
                        attn_param_specs("cross.post_v_given_a", dim, &mut out);
                        attn_param_specs("cross.post_a_given_v", dim, &mut out);
                    }
                }
            }
            for (i, stage) in stages.iter().enumerate() {
                stage_param_specs(&format!("{group}.{i}"), stage, &mut out);
            }
        }
        if let StageSpec::Fc {
            in_dim,
            out_dim,
            activation,
            ..
        } = &self.classifier
        {
            fc_param_specs("classifier", *in_dim, *out_dim, *activation, &mut out);
        }
        out
    }

    fn cross_dim(&self) -> usize {
        match &self.wiring {
            WiringPlan::CrossModal { audio, .. } => match audio.last() {
                Some(StageSpec::Attention { dim, .. }) => *dim,
                _ => 0,
            },
            _ => 0,
        }
    }

    fn cross_rows(&self) -> (usize, usize) {
        match &self.wiring {
            WiringPlan::CrossModal { audio, visual, .. } => {
                let rows = |stages: &[StageSpec]| match stages.last() {
                    Some(StageSpec::Attention { rows, .. }) => *rows,
                    _ => 0,
                };
                (rows(audio), rows(visual))
            }
            _ => (0, 0),
        }
    }

    /// Exact parameter count: sum over every tensor of the product of its
    /// extents, biases included. Pure arithmetic; nothing is allocated.
    pub fn count_params(&self) -> u64 {
        self.param_specs()
            .iter()
            .map(|p| p.shape.iter().map(|&e| e as u64).product::<u64>())
            .sum()
    }

    /// Per-group subtotals for reporting, in canonical order.
    pub fn count_by_group(&self) -> Vec<(String, u64)> {
        let mut groups: Vec<(String, u64)> = Vec::new();
        for p in self.param_specs() {
            let group = p.name.split('.').next().unwrap_or("?").to_string();
            let n: u64 = p.shape.iter().map(|&e| e as u64).product();
            match groups.last_mut() {
                Some((g, total)) if *g == group => *total += n,
                _ => groups.push((group, n)),
            }
        }
        groups
    }

    /// Verify stage widths chain: every stage's input must equal the
    /// previous stage's output, branches must meet the fusion stack at the
    /// right concatenated width, and the classifier must match the end.
    pub fn validate(&self, spec: &ArchSpec) -> Result<()> {
        let chain = |stages: &[StageSpec], mut width: usize, what: &str| -> Result<usize> {
            for (i, stage) in stages.iter().enumerate() {
                if stage.in_dim() != width {
                    return Err(AvError::ShapeMismatch(format!(
                        "{what} stage {i} expects width {}, gets {width}",
                        stage.in_dim()
                    )));
                }
                width = stage.out_dim();
            }
            Ok(width)
        };
        let classifier_in = self.classifier.in_dim();
        let end = match &self.wiring {
            WiringPlan::Unimodal { modality, stack } => {
                let input = match modality {
                    Modality::Audio => spec.audio_dim,
                    Modality::Visual => spec.visual_dim,
                };
                chain(stack, input, "branch")?
            }
            WiringPlan::EarlyFusion { stack } => {
                chain(stack, spec.visual_dim + spec.audio_dim, "trunk")?
            }
            WiringPlan::LateFusion { audio, visual, fusion } => {
                let a = chain(audio, spec.audio_dim, "audio branch")?;
                let v = chain(visual, spec.visual_dim, "visual branch")?;
                chain(fusion, a + v, "fusion")?
            }
            WiringPlan::CrossModal { audio, visual, fusion, .. } => {
                let a = chain(audio, spec.audio_dim, "audio branch")?;
                let v = chain(visual, spec.visual_dim, "visual branch")?;
                for (stages, what) in [(audio, "audio"), (visual, "visual")] {
                    if !matches!(stages.last(), Some(StageSpec::Attention { .. })) {
                        return Err(AvError::InvalidArgument(format!(
                            "{what} branch of a cross-modal wiring must end in attention"
                        )));
                    }
                }
                // four streams: two self-attended, two cross-attended
                chain(fusion, 2 * a + 2 * v, "fusion")?
            }
        };
        if end != classifier_in {
            return Err(AvError::ShapeMismatch(format!(
                "classifier expects width {classifier_in}, network ends at {end}"
            )));
        }
        if !matches!(
            self.classifier,
            StageSpec::Fc {
                activation: Activation::Sigmoid,
                ..
            }
        ) {
            return Err(AvError::InvalidArgument(
                "classifier must be a sigmoid FC stage".into(),
            ));
        }
        Ok(())
    }
}

// ── Model ────────────────────────────────────────────────────────────

#[derive(Debug, Clone)]
pub struct NamedTensor {
    pub name: String,
    pub tensor: Tensor,
}

/// A built model: spec, plan, and the flat ordered parameter list.
#[derive(Debug, Clone)]
pub struct Model {
    pub spec: ArchSpec,
    pub plan: ModelPlan,
    pub params: Vec<NamedTensor>,
}

/// Options for one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct ForwardOpts {
    pub training: bool,
    /// Register parameters with gradient tracking.
    pub trainable: bool,
    pub dropout_rate: f64,
    /// Seed for this pass's dropout masks.
    pub seed: u64,
}

impl ForwardOpts {
    pub fn inference() -> Self {
        ForwardOpts {
            training: false,
            trainable: false,
            dropout_rate: 0.0,
            seed: 0,
        }
    }
}

/// Sequential reader over registered parameter vars, consumed in the same
/// order `param_specs` emits them.
struct VarCursor<'a> {
    vars: &'a [Var],
    pos: usize,
}

impl<'a> VarCursor<'a> {
    fn take(&mut self) -> Result<Var> {
        let v = self.vars.get(self.pos).copied().ok_or_else(|| {
            AvError::InvalidArgument("forward consumed more parameters than registered".into())
        })?;
        self.pos += 1;
        Ok(v)
    }

    fn take_fc(&mut self, activation: Activation) -> Result<FcVars> {
        Ok(FcVars {
            weight: self.take()?,
            bias: self.take()?,
            activation,
        })
    }

    fn take_attn(&mut self) -> Result<AttnVars> {
        Ok(AttnVars {
            w_query: self.take()?,
            w_key: self.take()?,
            w_value: self.take()?,
        })
    }
}

struct ForwardCtx<'a> {
    cursor: VarCursor<'a>,
    opts: ForwardOpts,
    dropout_counter: u64,
}

impl ForwardCtx<'_> {
    fn apply_dropout(&mut self, tape: &mut Tape, h: Var) -> Result<Var> {
        let seed = rng::derive2(self.opts.seed, 0xd0, self.dropout_counter);
        self.dropout_counter += 1;
        dropout(tape, h, self.opts.dropout_rate, seed, self.opts.training)
    }
}

fn run_stack(tape: &mut Tape, mut h: Var, stages: &[StageSpec], ctx: &mut ForwardCtx) -> Result<Var> {
    for stage in stages {
        match stage {
            StageSpec::Fc {
                activation,
                dropout: drop,
                ..
            } => {
                let fc = ctx.cursor.take_fc(*activation)?;
                h = fc_forward(tape, h, &fc)?;
                if *drop {
                    h = ctx.apply_dropout(tape, h)?;
                }
            }
            StageSpec::Residual { gated, .. } => {
                let f0 = ctx.cursor.take_fc(Activation::Relu)?;
                let f1 = ctx.cursor.take_fc(Activation::None)?;
                let res = ResidualVars { inner: vec![f0, f1] };
                if *gated {
                    let gate = GateVars {
                        weight: ctx.cursor.take()?,
                        bias: ctx.cursor.take()?,
                    };
                    h = crate::layers::gated_residual_block(tape, h, &res, &gate)?;
                } else {
                    h = crate::layers::residual_block(tape, h, &res)?;
                }
            }
            StageSpec::Attention { rows, dim } => {
                let attn = ctx.cursor.take_attn()?;
                let batch = tape.value(h).shape()[0];
                let r = tape.reshape(h, vec![batch, *rows, *dim])?;
                let out = self_attention(tape, r, &attn)?;
                h = tape.reshape(out, vec![batch, rows * dim])?;
            }
        }
    }
    Ok(h)
}

impl Model {
    /// Deterministically initialize all parameters from `seed` and the
    /// architecture spec.
    pub fn build(spec: ArchSpec, seed: u64) -> Result<Model> {
        spec.validate()?;
        let plan = catalog::plan(&spec)?;
        plan.validate(&spec)?;
        let mut r = rng::rng(rng::derive(seed, 0x1217));
        let params = plan
            .param_specs()
            .into_iter()
            .map(|p| NamedTensor {
                tensor: init_param(&p, &mut r),
                name: p.name,
            })
            .collect();
        Ok(Model { spec, plan, params })
    }

    /// Exact total parameter count (weights and biases).
    pub fn count_params(&self) -> u64 {
        self.plan.count_params()
    }

    /// Register all parameters on a tape, in canonical order.
    pub fn register_params(&self, tape: &mut Tape, trainable: bool) -> Vec<Var> {
        self.params
            .iter()
            .map(|p| {
                let mut t = p.tensor.clone();
                t.requires_grad = trainable;
                tape.leaf(t)
            })
            .collect()
    }

    /// Forward pass from already-registered parameter vars. `visual` and
    /// `audio` are tape vars of shape `[batch, dim]`; unimodal specs ignore
    /// the unused modality entirely.
    pub fn forward_with_vars(
        &self,
        tape: &mut Tape,
        param_vars: &[Var],
        visual: Var,
        audio: Var,
        opts: ForwardOpts,
    ) -> Result<Var> {
        self.check_inputs(tape.value(visual).shape(), tape.value(audio).shape())?;
        let mut ctx = ForwardCtx {
            cursor: VarCursor {
                vars: param_vars,
                pos: 0,
            },
            opts,
            dropout_counter: 0,
        };
        let features = match &self.plan.wiring {
            WiringPlan::Unimodal { modality, stack } => {
                let input = match modality {
                    Modality::Audio => audio,
                    Modality::Visual => visual,
                };
                run_stack(tape, input, stack, &mut ctx)?
            }
            WiringPlan::EarlyFusion { stack } => {
                let joint = tape.concat_last(&[visual, audio])?;
                run_stack(tape, joint, stack, &mut ctx)?
            }
            WiringPlan::LateFusion { audio: a, visual: v, fusion } => {
                let ha = run_stack(tape, audio, a, &mut ctx)?;
                let hv = run_stack(tape, visual, v, &mut ctx)?;
                let joint = tape.concat_last(&[ha, hv])?;
                run_stack(tape, joint, fusion, &mut ctx)?
            }
            WiringPlan::CrossModal {
                audio: a,
                visual: v,
                post_self_attention,
                fusion,
            } => {
                let ha = run_stack(tape, audio, a, &mut ctx)?;
                let hv = run_stack(tape, visual, v, &mut ctx)?;
                let cross_a = ctx.cursor.take_attn()?;
                let cross_v = ctx.cursor.take_attn()?;
                let post = if *post_self_attention {
                    Some((ctx.cursor.take_attn()?, ctx.cursor.take_attn()?))
                } else {
                    None
                };
                let dim = self.plan.cross_dim();
                let (rows_a, rows_v) = self.plan.cross_rows();
                let batch = tape.value(ha).shape()[0];
                let ra = tape.reshape(ha, vec![batch, rows_a, dim])?;
                let rv = tape.reshape(hv, vec![batch, rows_v, dim])?;
                let (mut v_given_a, mut a_given_v) =
                    cross_modal_attention(tape, ra, rv, &cross_a, &cross_v)?;
                if let Some((post_va, post_av)) = &post {
                    v_given_a = self_attention(tape, v_given_a, post_va)?;
                    a_given_v = self_attention(tape, a_given_v, post_av)?;
                }
                let f_va = tape.reshape(v_given_a, vec![batch, rows_a * dim])?;
                let f_av = tape.reshape(a_given_v, vec![batch, rows_v * dim])?;
                let joint = tape.concat_last(&[ha, hv, f_va, f_av])?;
                run_stack(tape, joint, fusion, &mut ctx)?
            }
        };
        let StageSpec::Fc { activation, .. } = self.plan.classifier else {
            return Err(AvError::InvalidArgument("classifier must be an FC stage".into()));
        };
        let head = ctx.cursor.take_fc(activation)?;
        let probs = classifier_head(tape, features, &head)?;
        if ctx.cursor.pos != param_vars.len() {
            return Err(AvError::InvalidArgument(format!(
                "forward consumed {} of {} registered parameters",
                ctx.cursor.pos,
                param_vars.len()
            )));
        }
        Ok(probs)
    }

    /// Register parameters and run one forward pass; returns the parameter
    /// vars (canonical order) and the probability output.
    pub fn forward_on_tape(
        &self,
        tape: &mut Tape,
        visual: &Tensor,
        audio: &Tensor,
        opts: ForwardOpts,
    ) -> Result<(Vec<Var>, Var)> {
        let param_vars = self.register_params(tape, opts.trainable);
        let v = tape.constant(visual.clone());
        let a = tape.constant(audio.clone());
        let probs = self.forward_with_vars(tape, &param_vars, v, a, opts)?;
        Ok((param_vars, probs))
    }

    /// Inference forward pass: deterministic, dropout off.
    pub fn infer(&self, visual: &Tensor, audio: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let (_, probs) = self.forward_on_tape(&mut tape, visual, audio, ForwardOpts::inference())?;
        Ok(tape.value(probs).clone())
    }

    fn check_inputs(&self, visual: &[usize], audio: &[usize]) -> Result<()> {
        if visual.len() != 2 || audio.len() != 2 || visual[0] != audio[0] {
            return Err(AvError::ShapeMismatch(format!(
                "inputs must be [batch, dim] with a common batch; got {visual:?} and {audio:?}"
            )));
        }
        if visual[1] != self.spec.visual_dim || audio[1] != self.spec.audio_dim {
            return Err(AvError::ShapeMismatch(format!(
                "inputs {}x{} against spec {}x{}",
                visual[1], audio[1], self.spec.visual_dim, self.spec.audio_dim
            )));
        }
        Ok(())
    }
}

fn init_param(spec: &ParamSpec, r: &mut ChaCha8Rng) -> Tensor {
    match spec.init {
        InitKind::Weight(activation) => {
            FcParams::init(spec.shape[0], spec.shape[1], activation, r).weight
        }
        InitKind::Bias(activation) => crate::layers::init_bias(spec.shape[0], activation),
    }
}

#[cfg(test)]
mod tests;
