#pragma once

#include <functional>
#include <vector>

#include "attnrel/baselines.hpp"
#include "attnrel/model.hpp"
#include "attnrel/relevancy.hpp"

namespace attnrel {

// Per-token relevance in dataset coordinates: text[j] scores the j-th content
// text token, image[j] the j-th image token. Structural slots (CLS, SEP) are
// already dropped.
struct TokenRelevance {
    std::vector<double> text;
    std::vector<double> image;
};

// Target whose logit the explanation is computed for: the model's prediction
// on the unmodified sample, or the stored label.
enum class TargetMode { Predicted, GroundTruth };

Target predicted_target(const ForwardTrace& trace);
Target resolve_target(const ForwardTrace& trace, const Sample& sample, TargetMode mode);

// Relevance maps for `method` reduced to per-token scores. For detection the
// target's query row provides the image scores.
TokenRelevance explain_tokens(const Model& model, const Sample& sample, MethodId method,
                              AblationVariant variant, const Target& target);

// Scores plus the full maps, for dumps.
struct Explanation {
    RelevancyState state;
    TokenRelevance tokens;
    Target target;
};
Explanation explain(const Model& model, const Sample& sample, MethodId method,
                    AblationVariant variant, const Target& target);

using Relevancer =
    std::function<TokenRelevance(const Model&, const Sample&, const Target&)>;

Relevancer method_relevancer(MethodId method, AblationVariant variant = AblationVariant::Full);

// Reduces an extraction of slot-space vectors to dataset coordinates.
TokenRelevance to_token_relevance(const ClsExtraction& extraction, Architecture arch);

} // namespace attnrel
