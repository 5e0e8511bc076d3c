#include "attnrel/relevancy.hpp"

#include <algorithm>

#include "attnrel/errors.hpp"

namespace attnrel {

namespace {
constexpr double kZeroRowEps = 1e-12;
}

std::string to_string(AblationVariant variant) {
    switch (variant) {
        case AblationVariant::Full: return "full";
        case AblationVariant::NoNormalization: return "no_normalization";
        case AblationVariant::NoAggregation: return "no_aggregation";
        case AblationVariant::NoSelfAttInCross: return "no_self_attention_cross";
    }
    return "?";
}

AblationVariant ablation_from_string(const std::string& name) {
    if (name == "full") return AblationVariant::Full;
    if (name == "no_normalization") return AblationVariant::NoNormalization;
    if (name == "no_aggregation") return AblationVariant::NoAggregation;
    if (name == "no_self_attention_cross") return AblationVariant::NoSelfAttInCross;
    throw RejectedInput("unknown ablation variant: " + name);
}

std::vector<std::pair<std::string, const Tensor*>> RelevancyState::maps() const {
    switch (architecture) {
        case Architecture::PureSelf:
            return {{"joint", &joint}};
        case Architecture::SelfPlusCo:
            return {{"text_text", &text_text},
                    {"image_image", &image_image},
                    {"text_image", &text_image},
                    {"image_text", &image_text}};
        case Architecture::EncoderDecoder:
            return {{"encoder_encoder", &enc_enc},
                    {"decoder_decoder", &dec_dec},
                    {"decoder_encoder", &dec_enc}};
    }
    return {};
}

RelevancyState init_state(Architecture arch, int text_or_enc_tokens, int image_or_dec_tokens) {
    if (text_or_enc_tokens < 1 || (arch != Architecture::PureSelf && image_or_dec_tokens < 1))
        throw RejectedInput("init_state: token counts must be >= 1");
    RelevancyState state;
    state.architecture = arch;
    const auto a = static_cast<std::size_t>(text_or_enc_tokens);
    const auto b = static_cast<std::size_t>(image_or_dec_tokens);
    switch (arch) {
        case Architecture::PureSelf:
            state.joint = Tensor::identity(a);
            break;
        case Architecture::SelfPlusCo:
            state.text_text = Tensor::identity(a);
            state.image_image = Tensor::identity(b);
            state.text_image = Tensor({a, b});
            state.image_text = Tensor({b, a});
            break;
        case Architecture::EncoderDecoder:
            state.enc_enc = Tensor::identity(a);
            state.dec_dec = Tensor::identity(b);
            state.dec_enc = Tensor({b, a});
            break;
    }
    return state;
}

Tensor head_average(const Tensor& attention, const Tensor& grad) {
    if (attention.rank() != 3) throw RejectedInput("head_average expects [heads, s, q]");
    if (!attention.same_shape(grad))
        throw RejectedInput("head_average: attention and gradient shapes disagree");
    return mean_axis0(clamp_min(hadamard(grad, attention), 0.0));
}

Tensor head_average(const AttentionRecord& record) {
    if (!record.grad)
        throw TraceError("attention record has no gradient; run backward_fill first");
    return head_average(record.attention, *record.grad);
}

void apply_self(Tensor& self_map, Tensor* cross_map, const Tensor& avg, AblationVariant variant) {
    if (avg.rank() != 2 || avg.dim(0) != avg.dim(1) || avg.dim(0) != self_map.dim(0))
        throw RejectedInput("apply_self: averaged map must be square and match the domain");
    const bool aggregate = variant != AblationVariant::NoAggregation;
    Tensor self_new = matmul(avg, self_map);
    if (cross_map != nullptr && !cross_map->empty()) {
        Tensor cross_new = matmul(avg, *cross_map);
        *cross_map = aggregate ? add(*cross_map, cross_new) : std::move(cross_new);
    }
    self_map = aggregate ? add(self_map, self_new) : std::move(self_new);
}

Tensor normalize_self(const Tensor& self_map) {
    if (self_map.rank() != 2 || self_map.dim(0) != self_map.dim(1))
        throw RejectedInput("normalize_self expects a square matrix");
    const std::size_t n = self_map.dim(0);
    Tensor out({n, n});
    for (std::size_t r = 0; r < n; ++r) {
        double sum = 0.0;
        for (std::size_t c = 0; c < n; ++c) sum += self_map(r, c) - (r == c ? 1.0 : 0.0);
        if (sum > kZeroRowEps) {
            for (std::size_t c = 0; c < n; ++c)
                out(r, c) = (self_map(r, c) - (r == c ? 1.0 : 0.0)) / sum;
        }
        out(r, r) += 1.0;
    }
    return out;
}

void apply_cross(Tensor& cross_sq, Tensor* self_ss_out, const Tensor& avg,
                 const CrossInputs& snapshot, AblationVariant variant) {
    if (avg.rank() != 2 || !avg.same_shape(cross_sq))
        throw RejectedInput("apply_cross: averaged map must match the cross shape");
    const bool aggregate = variant != AblationVariant::NoAggregation;

    Tensor cross_new;
    if (variant == AblationVariant::NoSelfAttInCross) {
        cross_new = avg;
    } else {
        if (snapshot.self_ss == nullptr || snapshot.self_qq == nullptr)
            throw RejectedInput("apply_cross: missing self-map snapshots");
        const bool normalize = variant != AblationVariant::NoNormalization;
        Tensor left = normalize ? normalize_self(*snapshot.self_ss) : *snapshot.self_ss;
        Tensor right = normalize ? normalize_self(*snapshot.self_qq) : *snapshot.self_qq;
        cross_new = matmul(transpose(left), matmul(avg, right));
    }
    cross_sq = aggregate ? add(cross_sq, cross_new) : std::move(cross_new);

    if (self_ss_out != nullptr && snapshot.cross_qs != nullptr) {
        Tensor self_new = matmul(avg, *snapshot.cross_qs);
        *self_ss_out = aggregate ? add(*self_ss_out, self_new) : std::move(self_new);
    }
}

namespace {

bool is_cross_kind(AttentionKind kind) {
    return kind == AttentionKind::CrossTextFromImage || kind == AttentionKind::CrossImageFromText;
}

void require_kind(Architecture arch, AttentionKind kind) {
    bool ok = false;
    switch (arch) {
        case Architecture::PureSelf:
            ok = kind == AttentionKind::SelfJoint;
            break;
        case Architecture::SelfPlusCo:
            ok = kind == AttentionKind::SelfText || kind == AttentionKind::SelfImage ||
                 is_cross_kind(kind);
            break;
        case Architecture::EncoderDecoder:
            ok = kind == AttentionKind::EncoderSelf || kind == AttentionKind::DecoderSelf ||
                 kind == AttentionKind::DecoderCross;
            break;
    }
    if (!ok)
        throw TraceError("record kind " + to_string(kind) + " does not belong to architecture " +
                         to_string(arch));
}

} // namespace

RelevancyState propagate(const ForwardTrace& trace, AblationVariant variant) {
    if (trace.records.empty()) throw TraceError("propagate: empty trace");
    for (const AttentionRecord& record : trace.records) {
        require_kind(trace.architecture, record.kind);
        if (!record.grad)
            throw TraceError("propagate: gradients missing; run backward_fill first");
    }

    auto find_dim = [&](AttentionKind kind, int axis) -> int {
        for (const AttentionRecord& r : trace.records)
            if (r.kind == kind) return static_cast<int>(r.attention.dim(static_cast<std::size_t>(axis)));
        throw TraceError("propagate: trace lacks a " + to_string(kind) + " record");
    };

    RelevancyState state;
    switch (trace.architecture) {
        case Architecture::PureSelf:
            state = init_state(trace.architecture, find_dim(AttentionKind::SelfJoint, 1), 0);
            break;
        case Architecture::SelfPlusCo:
            state = init_state(trace.architecture, find_dim(AttentionKind::SelfText, 1),
                               find_dim(AttentionKind::SelfImage, 1));
            break;
        case Architecture::EncoderDecoder:
            state = init_state(trace.architecture, find_dim(AttentionKind::EncoderSelf, 1),
                               find_dim(AttentionKind::DecoderSelf, 1));
            break;
    }

    std::size_t i = 0;
    while (i < trace.records.size()) {
        const AttentionRecord& record = trace.records[i];
        const Tensor avg = head_average(record);
        switch (record.kind) {
            case AttentionKind::SelfJoint:
                apply_self(state.joint, nullptr, avg, variant);
                ++i;
                break;
            case AttentionKind::SelfText:
                apply_self(state.text_text, &state.text_image, avg, variant);
                ++i;
                break;
            case AttentionKind::SelfImage:
                apply_self(state.image_image, &state.image_text, avg, variant);
                ++i;
                break;
            case AttentionKind::EncoderSelf:
                apply_self(state.enc_enc, nullptr, avg, variant);
                ++i;
                break;
            case AttentionKind::DecoderSelf:
                apply_self(state.dec_dec, &state.dec_enc, avg, variant);
                ++i;
                break;
            case AttentionKind::DecoderCross: {
                CrossInputs snap{&state.dec_dec, &state.enc_enc, nullptr};
                apply_cross(state.dec_enc, nullptr, avg, snap, variant);
                ++i;
                break;
            }
            case AttentionKind::CrossTextFromImage:
            case AttentionKind::CrossImageFromText: {
                // Both directions of a co-attention stage update against the
                // state as of the stage entry.
                const Tensor tt = state.text_text, ii = state.image_image;
                const Tensor ti = state.text_image, it = state.image_text;
                std::size_t j = i;
                while (j < trace.records.size() && is_cross_kind(trace.records[j].kind) &&
                       trace.records[j].layer_index == record.layer_index)
                    ++j;
                for (std::size_t k = i; k < j; ++k) {
                    const AttentionRecord& cross = trace.records[k];
                    const Tensor cross_avg = k == i ? avg : head_average(cross);
                    if (cross.kind == AttentionKind::CrossTextFromImage) {
                        CrossInputs snap{&tt, &ii, &it};
                        apply_cross(state.text_image, &state.text_text, cross_avg, snap, variant);
                    } else {
                        CrossInputs snap{&ii, &tt, &ti};
                        apply_cross(state.image_text, &state.image_image, cross_avg, snap,
                                    variant);
                    }
                }
                i = j;
                break;
            }
        }
    }
    return state;
}

ClsExtraction extract_cls(const RelevancyState& state, int cls_index, int text_tokens,
                          int image_tokens) {
    ClsExtraction out;
    if (state.architecture == Architecture::SelfPlusCo) {
        const std::size_t t = state.text_text.dim(0), im = state.text_image.dim(1);
        if (cls_index < 0 || static_cast<std::size_t>(cls_index) >= t)
            throw RejectedInput("extract_cls: cls index out of range");
        out.text.resize(t);
        out.image.resize(im);
        for (std::size_t c = 0; c < t; ++c)
            out.text[c] = state.text_text(static_cast<std::size_t>(cls_index), c);
        for (std::size_t c = 0; c < im; ++c)
            out.image[c] = state.text_image(static_cast<std::size_t>(cls_index), c);
        out.text[static_cast<std::size_t>(cls_index)] = 0.0;
        return out;
    }
    if (state.architecture == Architecture::PureSelf) {
        const std::size_t n = state.joint.dim(0);
        if (text_tokens < 0 || image_tokens < 0 ||
            static_cast<std::size_t>(text_tokens + image_tokens + 2) != n)
            throw RejectedInput("extract_cls: joint split does not match the state size");
        if (cls_index < 0 || static_cast<std::size_t>(cls_index) >= n)
            throw RejectedInput("extract_cls: cls index out of range");
        const auto row = static_cast<std::size_t>(cls_index);
        const auto nt = static_cast<std::size_t>(text_tokens);
        out.text.resize(nt + 1);
        out.image.resize(static_cast<std::size_t>(image_tokens));
        for (std::size_t c = 0; c <= nt; ++c) out.text[c] = state.joint(row, c);
        for (std::size_t c = 0; c < out.image.size(); ++c)
            out.image[c] = state.joint(row, nt + 2 + c);
        if (static_cast<std::size_t>(cls_index) <= nt)
            out.text[static_cast<std::size_t>(cls_index)] = 0.0;
        return out;
    }
    throw RejectedInput("extract_cls needs a classification architecture");
}

std::vector<double> extract_query(const RelevancyState& state, int query) {
    if (state.architecture != Architecture::EncoderDecoder)
        throw RejectedInput("extract_query needs an encoder-decoder state");
    if (query < 0 || static_cast<std::size_t>(query) >= state.dec_enc.dim(0))
        throw RejectedInput("extract_query: query out of range");
    std::vector<double> out(state.dec_enc.dim(1));
    for (std::size_t c = 0; c < out.size(); ++c)
        out[c] = state.dec_enc(static_cast<std::size_t>(query), c);
    return out;
}

} // namespace attnrel
