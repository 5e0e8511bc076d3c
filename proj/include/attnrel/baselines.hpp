#pragma once

#include <string>

#include "attnrel/model.hpp"
#include "attnrel/relevancy.hpp"

namespace attnrel {

enum class MethodId { Ours, RawAttention, Rollout, GradCam, TransAttrNoLrp };

std::string to_string(MethodId method);
MethodId method_from_string(const std::string& name);

// Uniform head mean of the last attention map of the given kind.
Tensor raw_attention(const ForwardTrace& trace, AttentionKind kind);

// Gradient-free rollout: per-domain product of row-renormalized (head-mean A
// + I) across the self-attention layers; cross maps combine the rollout self
// maps with the head mean of the last cross map.
RelevancyState rollout(const ForwardTrace& trace);

// Heads of the last map of the given kind weighted by their mean gradient,
// averaged, then clamped at zero.
Tensor gradcam_attention(const ForwardTrace& trace, AttentionKind kind);

// Self-attention accumulation rule with gradient-weighted head averaging on
// every self layer; cross relevance is the gradient-weighted head average of
// the last cross map.
RelevancyState trans_attr(const ForwardTrace& trace);

// Full relevancy maps for any method, shaped like propagate()'s output.
RelevancyState method_relevancy(const ForwardTrace& trace, MethodId method,
                                AblationVariant variant = AblationVariant::Full);

} // namespace attnrel
