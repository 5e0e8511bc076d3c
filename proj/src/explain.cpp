#include "attnrel/explain.hpp"

#include "attnrel/errors.hpp"

namespace attnrel {

Target predicted_target(const ForwardTrace& trace) {
    const Tensor& logits = trace.logits;
    if (logits.rank() == 1) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < logits.size(); ++c)
            if (logits[c] > logits[best]) best = c;
        return Target{-1, static_cast<int>(best)};
    }
    // Detection: the most confident non-background query and its top class.
    const std::size_t queries = logits.dim(0), ncol = logits.dim(1);
    std::size_t best_q = 0, best_c = 1;
    double best_v = -1e300;
    for (std::size_t q = 0; q < queries; ++q)
        for (std::size_t c = 1; c < ncol; ++c)
            if (logits(q, c) > best_v) {
                best_v = logits(q, c);
                best_q = q;
                best_c = c;
            }
    return Target{static_cast<int>(best_q), static_cast<int>(best_c)};
}

Target resolve_target(const ForwardTrace& trace, const Sample& sample, TargetMode mode) {
    if (mode == TargetMode::Predicted) return predicted_target(trace);
    if (trace.logits.rank() == 1) return Target{-1, sample.label};
    if (sample.objects.empty()) return predicted_target(trace);
    return Target{sample.objects.front().query, sample.objects.front().cls};
}

TokenRelevance to_token_relevance(const ClsExtraction& extraction, Architecture arch) {
    TokenRelevance out;
    out.image = extraction.image;
    // Slot 0 of the text vector is the CLS slot for both classification
    // architectures.
    if (!extraction.text.empty())
        out.text.assign(extraction.text.begin() + 1, extraction.text.end());
    (void)arch;
    return out;
}

Explanation explain(const Model& model, const Sample& sample, MethodId method,
                    AblationVariant variant, const Target& target) {
    ForwardTrace trace = model.forward(sample);
    const bool needs_grads = method == MethodId::Ours || method == MethodId::GradCam ||
                             method == MethodId::TransAttrNoLrp;
    if (needs_grads) backward_fill(trace, target);

    Explanation out{method_relevancy(trace, method, variant), {}, target};
    if (model.config().architecture == Architecture::EncoderDecoder) {
        if (!target.is_detection())
            throw RejectedInput("detection explanation needs a (query, class) target");
        out.tokens.image = extract_query(out.state, target.query);
    } else {
        const ClsExtraction extraction =
            extract_cls(out.state, 0, model.config().text_tokens, model.config().image_tokens);
        out.tokens = to_token_relevance(extraction, model.config().architecture);
    }
    return out;
}

TokenRelevance explain_tokens(const Model& model, const Sample& sample, MethodId method,
                              AblationVariant variant, const Target& target) {
    return explain(model, sample, method, variant, target).tokens;
}

Relevancer method_relevancer(MethodId method, AblationVariant variant) {
    return [method, variant](const Model& model, const Sample& sample, const Target& target) {
        return explain_tokens(model, sample, method, variant, target);
    };
}

} // namespace attnrel
