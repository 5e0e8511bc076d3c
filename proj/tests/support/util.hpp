#pragma once

#include <string>
#include <vector>

#include "attnrel/dataset.hpp"
#include "attnrel/model.hpp"
#include "attnrel/relevancy.hpp"
#include "attnrel/rng.hpp"
#include "oracle.hpp"

namespace testutil {

using namespace attnrel;

inline Tensor random_tensor(Rng& rng, std::vector<std::size_t> shape, double lo = -1.0,
                            double hi = 1.0) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

// Small model/sample pairs for randomized checks. Sizes stay within the token
// and layer bounds the propagation oracle is exercised at.
struct RandomCase {
    ModelConfig config;
    Sample sample;
};

inline RandomCase random_case(Architecture arch, Rng& rng, int max_tokens = 4,
                              int max_layers = 3, int max_heads = 2) {
    ModelConfig cfg;
    cfg.architecture = arch;
    cfg.layers = rng.uniform_int(1, max_layers);
    cfg.heads = rng.uniform_int(1, max_heads);
    cfg.head_dim = 4;
    cfg.classes = 3;
    cfg.seed = rng.next();
    Sample sample;
    if (arch == Architecture::EncoderDecoder) {
        cfg.text_tokens = 0;
        cfg.image_tokens = rng.uniform_int(2, max_tokens);
        cfg.queries = rng.uniform_int(1, max_tokens);
        cfg.image_vocab = 5;
        cfg.text_vocab = 2;
        for (int j = 0; j < cfg.image_tokens; ++j)
            sample.image.push_back(rng.uniform_int(0, cfg.image_vocab - 1));
    } else {
        cfg.text_tokens = rng.uniform_int(1, max_tokens);
        cfg.image_tokens = rng.uniform_int(1, max_tokens);
        cfg.text_vocab = 8;
        cfg.image_vocab = 8;
        for (int j = 0; j < cfg.text_tokens; ++j)
            sample.text.push_back(rng.uniform_int(2, cfg.text_vocab - 1));
        for (int j = 0; j < cfg.image_tokens; ++j)
            sample.image.push_back(rng.uniform_int(1, cfg.image_vocab - 1));
        sample.label = 0;
    }
    return RandomCase{cfg, sample};
}

inline Target random_target(const ModelConfig& cfg, Rng& rng) {
    if (cfg.architecture == Architecture::EncoderDecoder)
        return Target{rng.uniform_int(0, cfg.queries - 1), rng.uniform_int(0, cfg.classes)};
    return Target{-1, rng.uniform_int(0, cfg.classes - 1)};
}

inline oracle::Cube to_cube(const Tensor& t) {
    oracle::Cube cube(t.dim(0),
                      oracle::Mat(t.dim(1), std::vector<double>(t.dim(2), 0.0)));
    for (std::size_t h = 0; h < t.dim(0); ++h)
        for (std::size_t i = 0; i < t.dim(1); ++i)
            for (std::size_t j = 0; j < t.dim(2); ++j) cube[h][i][j] = t(h, i, j);
    return cube;
}

inline std::string oracle_kind(AttentionKind kind) {
    switch (kind) {
        case AttentionKind::SelfJoint: return "self_joint";
        case AttentionKind::SelfText: return "self_text";
        case AttentionKind::SelfImage: return "self_image";
        case AttentionKind::CrossTextFromImage: return "cross_ti";
        case AttentionKind::CrossImageFromText: return "cross_it";
        case AttentionKind::EncoderSelf: return "enc_self";
        case AttentionKind::DecoderSelf: return "dec_self";
        case AttentionKind::DecoderCross: return "dec_cross";
    }
    return "?";
}

inline std::vector<oracle::Record> to_oracle_records(const ForwardTrace& trace) {
    std::vector<oracle::Record> records;
    for (const AttentionRecord& record : trace.records) {
        oracle::Record r;
        r.kind = oracle_kind(record.kind);
        r.layer = record.layer_index;
        r.attention = to_cube(record.attention);
        r.grad = to_cube(*record.grad);
        records.push_back(std::move(r));
    }
    return records;
}

inline double max_diff(const Tensor& t, const oracle::Mat& m) {
    double worst = 0.0;
    for (std::size_t i = 0; i < t.dim(0); ++i)
        for (std::size_t j = 0; j < t.dim(1); ++j)
            worst = std::max(worst, std::abs(t(i, j) - m[i][j]));
    return worst;
}

// Largest disagreement between the library propagation and the straight-line
// oracle across every populated map.
inline double oracle_gap(const RelevancyState& state, const oracle::Maps& maps) {
    switch (state.architecture) {
        case Architecture::PureSelf:
            return max_diff(state.joint, maps.joint);
        case Architecture::SelfPlusCo:
            return std::max(std::max(max_diff(state.text_text, maps.tt),
                                     max_diff(state.image_image, maps.ii)),
                            std::max(max_diff(state.text_image, maps.ti),
                                     max_diff(state.image_text, maps.it)));
        case Architecture::EncoderDecoder:
            return std::max(max_diff(state.enc_enc, maps.ee),
                            std::max(max_diff(state.dec_dec, maps.dd),
                                     max_diff(state.dec_enc, maps.de)));
    }
    return 1e300;
}

// Gradient vs central differences with the tolerance split at 1e-4: relative
// error above it, absolute error below.
inline double grad_violation(const Tensor& analytic, const Tensor& numeric) {
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        const double a = analytic[i], n = numeric[i];
        if (std::abs(n) < 1e-4)
            worst = std::max(worst, std::abs(a - n) / 1e-3); // scaled so 1e-7 -> 1e-4
        else
            worst = std::max(worst, std::abs(a - n) / std::abs(n));
    }
    return worst;
}

} // namespace testutil
