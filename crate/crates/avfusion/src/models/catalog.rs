//! The architecture catalog: plan construction for all fifteen networks.
//!
//! Widths follow the published configuration (8000-wide baseline stacks,
//! 2000-wide proposed stacks, 1024-wide attention); the layer counts around
//! them are reconstructions chosen to land the documented parameter totals
//! and are spelled out in each builder below.

use crate::error::{AvError, Result};
use crate::layers::Activation;

use super::{ArchName, ArchSpec, Fusion, Modality, ModelPlan, StageSpec, WiringPlan, ALL_ARCHS};

/// Catalog row: name, description, default spec.
#[derive(Debug, Clone)]
pub struct ArchInfo {
    pub name: ArchName,
    pub description: &'static str,
    pub default_spec: ArchSpec,
}

pub fn describe(name: ArchName) -> &'static str {
    match name {
        ArchName::FcAudio => "audio-only FC baseline: 2 hidden layers, sigmoid classifier",
        ArchName::FcVisual => "visual-only FC baseline: 2 hidden layers, sigmoid classifier",
        ArchName::FcEarly => "early fusion: concat raw features, 2 hidden FC layers",
        ArchName::FcLate => "late fusion: 3 FC layers per modality branch, concat, classifier",
        ArchName::FcrnEarly => "early fusion with a residual block replacing the middle FC layers",
        ArchName::FcrnLate => "late fusion with one residual block per modality branch",
        ArchName::FcrgnEarly => "early fusion with a context-gated residual block",
        ArchName::FcrgnLate => "late fusion with context-gated residual blocks per branch",
        ArchName::FcAttention => {
            "self-attention per modality, attended features concatenated into an FC stack"
        }
        ArchName::ResAttentionEarly => {
            "early fusion: attention on the joint features, then a residual block"
        }
        ArchName::ResAttentionLate => {
            "late fusion: per-modality attention and residual block, concat, classifier"
        }
        ArchName::AttendFusion => {
            "compact late fusion: per-modality FC + self-attention + FC branches, joint FC stack"
        }
        ArchName::AvAttention => {
            "hierarchical attention: per-modality self-attention, then cross-modal exchange"
        }
        ArchName::SelfCrossAttention => {
            "cross-modal exchange refined by additional self-attention on the exchanged streams"
        }
        ArchName::SelfAttendedCrossFcrn => {
            "self + cross-modal attention feeding a residual fusion stack"
        }
    }
}

/// Default (branch_depth, fusion_depth) per architecture.
pub fn default_depths(name: ArchName) -> (usize, usize) {
    match name {
        ArchName::FcAudio | ArchName::FcVisual | ArchName::FcEarly => (2, 0),
        ArchName::FcLate => (3, 0),
        ArchName::FcrnEarly
        | ArchName::FcrnLate
        | ArchName::FcrgnEarly
        | ArchName::FcrgnLate => (1, 0),
        ArchName::FcAttention => (0, 2),
        ArchName::ResAttentionEarly | ArchName::ResAttentionLate => (1, 0),
        ArchName::AttendFusion => (3, 1),
        ArchName::AvAttention | ArchName::SelfCrossAttention => (0, 2),
        ArchName::SelfAttendedCrossFcrn => (0, 1),
    }
}

pub fn default_fusion(name: ArchName) -> Fusion {
    match name {
        ArchName::FcAudio | ArchName::FcVisual => Fusion::None,
        ArchName::FcEarly
        | ArchName::FcrnEarly
        | ArchName::FcrgnEarly
        | ArchName::ResAttentionEarly => Fusion::Early,
        _ => Fusion::Late,
    }
}

pub fn validate_depths(spec: &ArchSpec) -> Result<()> {
    let needs_branch_stack = matches!(
        spec.name,
        ArchName::FcAudio
            | ArchName::FcVisual
            | ArchName::FcEarly
            | ArchName::FcLate
            | ArchName::FcrnEarly
            | ArchName::FcrnLate
            | ArchName::FcrgnEarly
            | ArchName::FcrgnLate
            | ArchName::ResAttentionEarly
            | ArchName::ResAttentionLate
            | ArchName::AttendFusion
    );
    if needs_branch_stack && spec.branch_depth == 0 {
        return Err(AvError::InvalidArgument(format!(
            "{} requires branch_depth >= 1",
            spec.name.as_str()
        )));
    }
    let cross = matches!(
        spec.name,
        ArchName::AvAttention | ArchName::SelfCrossAttention | ArchName::SelfAttendedCrossFcrn
    );
    if (cross || spec.name == ArchName::FcAttention) && spec.fusion_depth == 0 {
        return Err(AvError::InvalidArgument(format!(
            "{} requires fusion_depth >= 1",
            spec.name.as_str()
        )));
    }
    if !spec.use_attention && cross {
        return Err(AvError::InvalidArgument(
            "the no-attention ablation is not defined for cross-modal wirings".into(),
        ));
    }
    Ok(())
}

/// `count` relu FC layers with dropout: `in -> width -> ... -> width`.
fn fc_stack(in_dim: usize, width: usize, count: usize) -> Vec<StageSpec> {
    let mut stages = Vec::with_capacity(count);
    for i in 0..count {
        stages.push(StageSpec::Fc {
            in_dim: if i == 0 { in_dim } else { width },
            out_dim: width,
            activation: Activation::Relu,
            dropout: true,
        });
    }
    stages
}

/// Linear projection to `rows * attn` followed by self-attention; with
/// attention disabled, a single same-width linear FC stands in for the
/// whole block.
fn attention_block(spec: &ArchSpec, in_dim: usize) -> Vec<StageSpec> {
    let width = spec.attn_rows * spec.attn_dim;
    let mut stages = vec![StageSpec::Fc {
        in_dim,
        out_dim: width,
        activation: Activation::None,
        dropout: false,
    }];
    if spec.use_attention {
        stages.push(StageSpec::Attention {
            rows: spec.attn_rows,
            dim: spec.attn_dim,
        });
    } else {
        stages.push(StageSpec::Fc {
            in_dim: width,
            out_dim: width,
            activation: Activation::None,
            dropout: false,
        });
    }
    stages
}

fn residual_stack(dim: usize, blocks: usize, gated: bool) -> Vec<StageSpec> {
    (0..blocks).map(|_| StageSpec::Residual { dim, gated }).collect()
}

fn classifier(in_dim: usize, classes: usize) -> StageSpec {
    StageSpec::Fc {
        in_dim,
        out_dim: classes,
        activation: Activation::Sigmoid,
        dropout: false,
    }
}

/// Build the layer plan for a spec.
pub fn plan(spec: &ArchSpec) -> Result<ModelPlan> {
    let h = spec.hidden_dim;
    let c = spec.num_classes;
    let a_in = spec.audio_dim;
    let v_in = spec.visual_dim;
    let joint_in = v_in + a_in;
    let bd = spec.branch_depth;
    let fd = spec.fusion_depth;
    let attn_width = spec.attn_rows * spec.attn_dim;

    // Late-fusion helper: optional joint FC stack between the concat and
    // the classifier.
    let late_fusion_stack = |concat_width: usize| -> (Vec<StageSpec>, usize) {
        if fd == 0 {
            (vec![], concat_width)
        } else {
            (fc_stack(concat_width, h, fd), h)
        }
    };

    let plan = match spec.name {
        ArchName::FcAudio | ArchName::FcVisual => {
            let (modality, input) = if spec.name == ArchName::FcAudio {
                (Modality::Audio, a_in)
            } else {
                (Modality::Visual, v_in)
            };
            ModelPlan {
                wiring: WiringPlan::Unimodal {
                    modality,
                    stack: fc_stack(input, h, bd),
                },
                classifier: classifier(h, c),
            }
        }
        ArchName::FcEarly => ModelPlan {
            wiring: WiringPlan::EarlyFusion {
                stack: fc_stack(joint_in, h, bd),
            },
            classifier: classifier(h, c),
        },
        ArchName::FcLate => {
            let (fusion, end) = late_fusion_stack(2 * h);
            ModelPlan {
                wiring: WiringPlan::LateFusion {
                    audio: fc_stack(a_in, h, bd),
                    visual: fc_stack(v_in, h, bd),
                    fusion,
                },
                classifier: classifier(end, c),
            }
        }
        ArchName::FcrnEarly | ArchName::FcrgnEarly => {
            let gated = spec.name == ArchName::FcrgnEarly;
            let mut stack = fc_stack(joint_in, h, 1);
            stack.extend(residual_stack(h, bd, gated));
            ModelPlan {
                wiring: WiringPlan::EarlyFusion { stack },
                classifier: classifier(h, c),
            }
        }
        ArchName::FcrnLate | ArchName::FcrgnLate => {
            let gated = spec.name == ArchName::FcrgnLate;
            let branch = |input: usize| {
                let mut s = fc_stack(input, h, 1);
                s.extend(residual_stack(h, bd, gated));
                s
            };
            let (fusion, end) = late_fusion_stack(2 * h);
            ModelPlan {
                wiring: WiringPlan::LateFusion {
                    audio: branch(a_in),
                    visual: branch(v_in),
                    fusion,
                },
                classifier: classifier(end, c),
            }
        }
        ArchName::FcAttention => {
            // attention straight on the raw features of each modality,
            // attended outputs concatenated into the joint FC stack
            ModelPlan {
                wiring: WiringPlan::LateFusion {
                    audio: attention_block(spec, a_in),
                    visual: attention_block(spec, v_in),
                    fusion: fc_stack(2 * attn_width, h, fd),
                },
                classifier: classifier(h, c),
            }
        }
        ArchName::ResAttentionEarly => {
            let mut stack = attention_block(spec, joint_in);
            stack.extend(fc_stack(attn_width, h, 1));
            stack.extend(residual_stack(h, bd, false));
            ModelPlan {
                wiring: WiringPlan::EarlyFusion { stack },
                classifier: classifier(h, c),
            }
        }
        ArchName::ResAttentionLate => {
            let branch = |input: usize| {
                let mut s = attention_block(spec, input);
                s.extend(fc_stack(attn_width, h, 1));
                s.extend(residual_stack(h, bd, false));
                s
            };
            let (fusion, end) = late_fusion_stack(2 * h);
            ModelPlan {
                wiring: WiringPlan::LateFusion {
                    audio: branch(a_in),
                    visual: branch(v_in),
                    fusion,
                },
                classifier: classifier(end, c),
            }
        }
        ArchName::AttendFusion => {
            // per-modality: bd-layer FC stack, attention, bd-layer FC stack
            let branch = |input: usize| {
                let mut s = fc_stack(input, h, bd);
                s.extend(attention_block(spec, h));
                s.extend(fc_stack(attn_width, h, bd));
                s
            };
            let (fusion, end) = late_fusion_stack(2 * h);
            ModelPlan {
                wiring: WiringPlan::LateFusion {
                    audio: branch(a_in),
                    visual: branch(v_in),
                    fusion,
                },
                classifier: classifier(end, c),
            }
        }
        ArchName::AvAttention | ArchName::SelfCrossAttention | ArchName::SelfAttendedCrossFcrn => {
            let post = spec.name != ArchName::AvAttention;
            let fusion = if spec.name == ArchName::SelfAttendedCrossFcrn {
                let mut s = fc_stack(4 * attn_width, h, 1);
                s.extend(residual_stack(h, fd, false));
                s
            } else {
                fc_stack(4 * attn_width, h, fd)
            };
            ModelPlan {
                wiring: WiringPlan::CrossModal {
                    audio: attention_block(spec, a_in),
                    visual: attention_block(spec, v_in),
                    post_self_attention: post,
                    fusion,
                },
                classifier: classifier(h, c),
            }
        }
    };
    Ok(plan)
}

/// All fifteen catalog entries with their default specs.
pub fn list_architectures() -> Vec<ArchInfo> {
    ALL_ARCHS
        .iter()
        .map(|&name| ArchInfo {
            name,
            description: describe(name),
            default_spec: ArchSpec::defaults(name),
        })
        .collect()
}
