#include "attnrel/baselines.hpp"

#include "attnrel/errors.hpp"

namespace attnrel {

std::string to_string(MethodId method) {
    switch (method) {
        case MethodId::Ours: return "ours";
        case MethodId::RawAttention: return "raw_attention";
        case MethodId::Rollout: return "rollout";
        case MethodId::GradCam: return "grad_cam";
        case MethodId::TransAttrNoLrp: return "trans_attr";
    }
    return "?";
}

MethodId method_from_string(const std::string& name) {
    if (name == "ours") return MethodId::Ours;
    if (name == "raw_attention") return MethodId::RawAttention;
    if (name == "rollout") return MethodId::Rollout;
    if (name == "grad_cam") return MethodId::GradCam;
    if (name == "trans_attr") return MethodId::TransAttrNoLrp;
    throw RejectedInput("unknown method: " + name);
}

namespace {

const AttentionRecord* last_of(const ForwardTrace& trace, AttentionKind kind) {
    const AttentionRecord* found = nullptr;
    for (const AttentionRecord& record : trace.records)
        if (record.kind == kind) found = &record;
    return found;
}

const AttentionRecord& require_last(const ForwardTrace& trace, AttentionKind kind) {
    const AttentionRecord* found = last_of(trace, kind);
    if (found == nullptr)
        throw RejectedInput("trace has no " + to_string(kind) + " record");
    return *found;
}

// Product of row-renormalized (head-mean A + I) over records of one kind,
// later layers on the left.
Tensor rollout_self(const ForwardTrace& trace, AttentionKind kind) {
    Tensor result;
    for (const AttentionRecord& record : trace.records) {
        if (record.kind != kind) continue;
        Tensor step = mean_axis0(record.attention);
        const std::size_t n = step.dim(0);
        step = add(step, Tensor::identity(n));
        for (std::size_t r = 0; r < n; ++r) {
            double sum = 0.0;
            for (std::size_t c = 0; c < n; ++c) sum += step(r, c);
            for (std::size_t c = 0; c < n; ++c) step(r, c) /= sum;
        }
        result = result.empty() ? std::move(step) : matmul(step, result);
    }
    if (result.empty()) throw RejectedInput("trace has no " + to_string(kind) + " record");
    return result;
}

void require_grads(const ForwardTrace& trace) {
    if (!trace.has_grads())
        throw TraceError("method needs gradients; run backward_fill first");
}

} // namespace

Tensor raw_attention(const ForwardTrace& trace, AttentionKind kind) {
    return mean_axis0(require_last(trace, kind).attention);
}

RelevancyState rollout(const ForwardTrace& trace) {
    RelevancyState state;
    state.architecture = trace.architecture;
    switch (trace.architecture) {
        case Architecture::PureSelf:
            state.joint = rollout_self(trace, AttentionKind::SelfJoint);
            break;
        case Architecture::SelfPlusCo: {
            state.text_text = rollout_self(trace, AttentionKind::SelfText);
            state.image_image = rollout_self(trace, AttentionKind::SelfImage);
            const Tensor ti = mean_axis0(
                require_last(trace, AttentionKind::CrossTextFromImage).attention);
            const Tensor it = mean_axis0(
                require_last(trace, AttentionKind::CrossImageFromText).attention);
            state.text_image = matmul(transpose(state.text_text), matmul(ti, state.image_image));
            state.image_text = matmul(transpose(state.image_image), matmul(it, state.text_text));
            break;
        }
        case Architecture::EncoderDecoder: {
            state.enc_enc = rollout_self(trace, AttentionKind::EncoderSelf);
            state.dec_dec = rollout_self(trace, AttentionKind::DecoderSelf);
            const Tensor de = mean_axis0(
                require_last(trace, AttentionKind::DecoderCross).attention);
            state.dec_enc = matmul(transpose(state.dec_dec), matmul(de, state.enc_enc));
            break;
        }
    }
    return state;
}

Tensor gradcam_attention(const ForwardTrace& trace, AttentionKind kind) {
    require_grads(trace);
    const AttentionRecord& record = require_last(trace, kind);
    if (!record.grad) throw TraceError("attention record has no gradient");
    const Tensor& a = record.attention;
    const Tensor& g = *record.grad;
    const std::size_t h = a.dim(0), cells = a.dim(1) * a.dim(2);
    Tensor out({a.dim(1), a.dim(2)});
    for (std::size_t head = 0; head < h; ++head) {
        double weight = 0.0;
        for (std::size_t j = 0; j < cells; ++j) weight += g[head * cells + j];
        weight /= static_cast<double>(cells);
        for (std::size_t j = 0; j < cells; ++j) out[j] += weight * a[head * cells + j];
    }
    for (std::size_t j = 0; j < cells; ++j) out[j] = std::max(out[j] / static_cast<double>(h), 0.0);
    return out;
}

namespace {

Tensor trans_attr_self(const ForwardTrace& trace, AttentionKind kind) {
    Tensor result;
    for (const AttentionRecord& record : trace.records) {
        if (record.kind != kind) continue;
        const Tensor avg = head_average(record);
        if (result.empty()) result = Tensor::identity(avg.dim(0));
        result = add(result, matmul(avg, result));
    }
    if (result.empty()) throw RejectedInput("trace has no " + to_string(kind) + " record");
    return result;
}

} // namespace

RelevancyState trans_attr(const ForwardTrace& trace) {
    require_grads(trace);
    RelevancyState state;
    state.architecture = trace.architecture;
    switch (trace.architecture) {
        case Architecture::PureSelf:
            state.joint = trans_attr_self(trace, AttentionKind::SelfJoint);
            break;
        case Architecture::SelfPlusCo:
            state.text_text = trans_attr_self(trace, AttentionKind::SelfText);
            state.image_image = trans_attr_self(trace, AttentionKind::SelfImage);
            state.text_image =
                head_average(require_last(trace, AttentionKind::CrossTextFromImage));
            state.image_text =
                head_average(require_last(trace, AttentionKind::CrossImageFromText));
            break;
        case Architecture::EncoderDecoder:
            state.enc_enc = trans_attr_self(trace, AttentionKind::EncoderSelf);
            state.dec_dec = trans_attr_self(trace, AttentionKind::DecoderSelf);
            state.dec_enc = head_average(require_last(trace, AttentionKind::DecoderCross));
            break;
    }
    return state;
}

RelevancyState method_relevancy(const ForwardTrace& trace, MethodId method,
                                AblationVariant variant) {
    switch (method) {
        case MethodId::Ours:
            return propagate(trace, variant);
        case MethodId::Rollout:
            return rollout(trace);
        case MethodId::TransAttrNoLrp:
            return trans_attr(trace);
        case MethodId::RawAttention:
        case MethodId::GradCam: {
            auto reduce = [&](AttentionKind kind) {
                return method == MethodId::RawAttention ? raw_attention(trace, kind)
                                                        : gradcam_attention(trace, kind);
            };
            RelevancyState state;
            state.architecture = trace.architecture;
            switch (trace.architecture) {
                case Architecture::PureSelf:
                    state.joint = reduce(AttentionKind::SelfJoint);
                    break;
                case Architecture::SelfPlusCo:
                    state.text_text = reduce(AttentionKind::SelfText);
                    state.image_image = reduce(AttentionKind::SelfImage);
                    state.text_image = reduce(AttentionKind::CrossTextFromImage);
                    state.image_text = reduce(AttentionKind::CrossImageFromText);
                    break;
                case Architecture::EncoderDecoder:
                    state.enc_enc = reduce(AttentionKind::EncoderSelf);
                    state.dec_dec = reduce(AttentionKind::DecoderSelf);
                    state.dec_enc = reduce(AttentionKind::DecoderCross);
                    break;
            }
            return state;
        }
    }
    throw RejectedInput("unknown method");
}

} // namespace attnrel
