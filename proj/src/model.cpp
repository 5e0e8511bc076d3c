#include "attnrel/model.hpp"

#include <array>
#include <cmath>

#include "attnrel/errors.hpp"
#include "attnrel/rng.hpp"

namespace attnrel {

std::string to_string(Architecture arch) {
    switch (arch) {
        case Architecture::PureSelf: return "pure_self";
        case Architecture::SelfPlusCo: return "self_plus_co";
        case Architecture::EncoderDecoder: return "encoder_decoder";
    }
    return "?";
}

Architecture architecture_from_string(const std::string& name) {
    if (name == "pure_self") return Architecture::PureSelf;
    if (name == "self_plus_co") return Architecture::SelfPlusCo;
    if (name == "encoder_decoder") return Architecture::EncoderDecoder;
    throw ConfigError("unknown architecture: " + name);
}

std::string to_string(AttentionKind kind) {
    switch (kind) {
        case AttentionKind::SelfText: return "self_text";
        case AttentionKind::SelfImage: return "self_image";
        case AttentionKind::SelfJoint: return "self_joint";
        case AttentionKind::CrossTextFromImage: return "cross_text_from_image";
        case AttentionKind::CrossImageFromText: return "cross_image_from_text";
        case AttentionKind::EncoderSelf: return "encoder_self";
        case AttentionKind::DecoderSelf: return "decoder_self";
        case AttentionKind::DecoderCross: return "decoder_cross";
    }
    return "?";
}

void ModelConfig::validate() const {
    if (heads < 1) throw ConfigError("heads must be >= 1");
    if (head_dim < 1) throw ConfigError("head_dim must be >= 1");
    if (layers < 1) throw ConfigError("layers must be >= 1");
    if (text_tokens < 1 && architecture != Architecture::EncoderDecoder)
        throw ConfigError("text_tokens must be >= 1");
    if (image_tokens < 1) throw ConfigError("image_tokens must be >= 1");
    if (classes < 2) throw ConfigError("classes must be >= 2");
    if (architecture == Architecture::EncoderDecoder && queries < 1)
        throw ConfigError("encoder_decoder needs queries >= 1");
    if (text_vocab < 2 || image_vocab < 1) throw ConfigError("vocabulary too small");
}

namespace {

// One attention block owns ten tensors in this order.
constexpr int kBlockParams = 10;
enum BlockParam { kWq, kBq, kWk, kBk, kWv, kBv, kWo, kBo, kWf, kBf };

struct ParamLayout {
    struct Spec {
        std::vector<std::size_t> shape;
        double init_range; // uniform(-r, r); 0 keeps zeros
    };
    std::vector<Spec> specs;

    int text_embed = -1, image_embed = -1, cls_row = -1, sep_row = -1;
    int text_pos = -1, image_pos = -1, query_embed = -1;
    int head_w = -1, head_b = -1, box_w = -1, box_b = -1;
    std::vector<std::array<int, kBlockParams>> blocks;

    int push(std::vector<std::size_t> shape, double range) {
        specs.push_back({std::move(shape), range});
        return static_cast<int>(specs.size() - 1);
    }

    void push_block(std::size_t d) {
        const double w = std::sqrt(3.0 / static_cast<double>(d));
        std::array<int, kBlockParams> b{};
        for (int p = 0; p < kBlockParams; ++p) {
            const bool is_bias = (p % 2) == 1;
            b[p] = is_bias ? push({1, d}, 0.0) : push({d, d}, w);
        }
        blocks.push_back(b);
    }
};

ParamLayout make_layout(const ModelConfig& cfg) {
    ParamLayout lay;
    const auto d = static_cast<std::size_t>(cfg.embed_dim());
    const double emb = 0.5;
    const double head_range = std::sqrt(3.0 / static_cast<double>(cfg.embed_dim()));

    switch (cfg.architecture) {
        case Architecture::PureSelf: {
            lay.cls_row = lay.push({1, d}, emb);
            lay.sep_row = lay.push({1, d}, emb);
            lay.text_embed = lay.push({static_cast<std::size_t>(cfg.text_vocab), d}, emb);
            lay.image_embed = lay.push({static_cast<std::size_t>(cfg.image_vocab), d}, emb);
            const std::size_t joint = static_cast<std::size_t>(cfg.text_tokens + cfg.image_tokens + 2);
            lay.text_pos = lay.push({joint, d}, emb);
            for (int l = 0; l < cfg.layers; ++l) lay.push_block(d);
            lay.head_w = lay.push({d, static_cast<std::size_t>(cfg.classes)}, head_range);
            lay.head_b = lay.push({1, static_cast<std::size_t>(cfg.classes)}, 0.0);
            break;
        }
        case Architecture::SelfPlusCo: {
            lay.text_embed = lay.push({static_cast<std::size_t>(cfg.text_vocab), d}, emb);
            lay.image_embed = lay.push({static_cast<std::size_t>(cfg.image_vocab), d}, emb);
            lay.text_pos = lay.push({static_cast<std::size_t>(cfg.text_tokens + 1), d}, emb);
            lay.image_pos = lay.push({static_cast<std::size_t>(cfg.image_tokens), d}, emb);
            for (int l = 0; l < cfg.layers; ++l)
                for (int b = 0; b < 4; ++b) lay.push_block(d);
            lay.head_w = lay.push({d, static_cast<std::size_t>(cfg.classes)}, head_range);
            lay.head_b = lay.push({1, static_cast<std::size_t>(cfg.classes)}, 0.0);
            break;
        }
        case Architecture::EncoderDecoder: {
            lay.image_embed = lay.push({static_cast<std::size_t>(cfg.image_vocab), d}, emb);
            lay.image_pos = lay.push({static_cast<std::size_t>(cfg.image_tokens), d}, emb);
            lay.query_embed = lay.push({static_cast<std::size_t>(cfg.queries), d}, emb);
            for (int l = 0; l < cfg.layers; ++l) lay.push_block(d);      // encoder self
            for (int l = 0; l < cfg.layers; ++l) {
                lay.push_block(d); // decoder self
                lay.push_block(d); // decoder cross
            }
            lay.head_w = lay.push({d, static_cast<std::size_t>(cfg.classes + 1)}, head_range);
            lay.head_b = lay.push({1, static_cast<std::size_t>(cfg.classes + 1)}, 0.0);
            lay.box_w = lay.push({d, 4}, head_range);
            lay.box_b = lay.push({1, 4}, 0.0);
            break;
        }
    }
    return lay;
}

struct BlockLeaves {
    std::array<Tape::Value, kBlockParams> p;
};

// Shared attention + residual + feed-forward block. Queries come from
// queries_in, keys/values from keys_in.
Tape::Value run_block(Tape& tape, const ModelConfig& cfg, const BlockLeaves& w,
                      Tape::Value queries_in, Tape::Value keys_in, AttentionKind kind, int layer,
                      std::vector<AttentionRecord>& records, const AttentionOffset* offset,
                      int& ordinal) {
    const int dh = cfg.head_dim;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

    Tape::Value q = tape.add_rowvec(tape.matmul(queries_in, w.p[kWq]), w.p[kBq]);
    Tape::Value k = tape.add_rowvec(tape.matmul(keys_in, w.p[kWk]), w.p[kBk]);
    Tape::Value v = tape.add_rowvec(tape.matmul(keys_in, w.p[kWv]), w.p[kBv]);

    std::vector<Tape::Value> scores;
    for (int h = 0; h < cfg.heads; ++h) {
        const std::size_t c0 = static_cast<std::size_t>(h) * dh, c1 = c0 + dh;
        Tape::Value qh = tape.col_range(q, c0, c1);
        Tape::Value kh = tape.col_range(k, c0, c1);
        scores.push_back(tape.scale(tape.matmul(qh, tape.transpose(kh)), inv_sqrt));
    }
    Tape::Value attn = tape.softmax(tape.stack0(scores));

    Tape::Value attn_used = attn;
    if (offset != nullptr && offset->record_ordinal == ordinal) {
        if (!offset->delta.same_shape(tape.value(attn)))
            throw RejectedInput("attention offset shape mismatch");
        attn_used = tape.add(attn, tape.leaf(offset->delta));
    }
    records.push_back(AttentionRecord{kind, layer, tape.value(attn), std::nullopt, attn});
    ++ordinal;

    std::vector<Tape::Value> heads_out;
    for (int h = 0; h < cfg.heads; ++h) {
        const std::size_t c0 = static_cast<std::size_t>(h) * dh, c1 = c0 + dh;
        heads_out.push_back(
            tape.matmul(tape.slice0(attn_used, static_cast<std::size_t>(h)),
                        tape.col_range(v, c0, c1)));
    }
    Tape::Value merged = tape.add_rowvec(tape.matmul(tape.concat_cols(heads_out), w.p[kWo]),
                                         w.p[kBo]);
    Tape::Value with_residual = tape.add(queries_in, merged);
    Tape::Value ffn = tape.relu(tape.add_rowvec(tape.matmul(with_residual, w.p[kWf]), w.p[kBf]));
    return tape.add(with_residual, ffn);
}

void check_ids(const std::vector<int>& ids, int vocab, std::size_t expected, const char* what) {
    if (ids.size() != expected)
        throw RejectedInput(std::string(what) + ": token count does not match the config");
    for (int id : ids)
        if (id < 0 || id >= vocab)
            throw RejectedInput(std::string(what) + ": symbol id out of vocabulary");
}

} // namespace

Model::Model(const ModelConfig& config) : cfg_(config) {
    cfg_.validate();
    ParamLayout lay = make_layout(cfg_);
    Rng rng(cfg_.seed);
    params_.reserve(lay.specs.size());
    for (const auto& spec : lay.specs) {
        Tensor t(spec.shape);
        if (spec.init_range > 0.0)
            for (std::size_t i = 0; i < t.size(); ++i)
                t[i] = rng.uniform(-spec.init_range, spec.init_range);
        params_.push_back(std::move(t));
    }
}

int Model::record_count() const {
    switch (cfg_.architecture) {
        case Architecture::PureSelf: return cfg_.layers;
        case Architecture::SelfPlusCo: return 4 * cfg_.layers;
        case Architecture::EncoderDecoder: return 3 * cfg_.layers;
    }
    return 0;
}

int Model::joint_length() const { return cfg_.text_tokens + cfg_.image_tokens + 2; }

std::vector<double> Model::flat_parameters() const {
    std::vector<double> flat;
    for (const Tensor& t : params_) flat.insert(flat.end(), t.data().begin(), t.data().end());
    return flat;
}

void Model::set_flat_parameters(const std::vector<double>& flat) {
    std::size_t need = 0;
    for (const Tensor& t : params_) need += t.size();
    if (flat.size() != need) throw RejectedInput("parameter vector length mismatch");
    std::size_t at = 0;
    for (Tensor& t : params_) {
        std::copy_n(flat.begin() + at, t.size(), t.data().begin());
        at += t.size();
    }
}

ForwardTrace Model::forward(const Sample& sample, const AttentionOffset* offset) const {
    const ParamLayout lay = make_layout(cfg_);
    auto tape = std::make_shared<Tape>();

    std::vector<Tape::Value> leaf(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) leaf[i] = tape->leaf(params_[i]);

    auto block_leaves = [&](int ordinal) {
        BlockLeaves b;
        for (int p = 0; p < kBlockParams; ++p) b.p[p] = leaf[lay.blocks[ordinal][p]];
        return b;
    };

    ForwardTrace trace;
    trace.architecture = cfg_.architecture;
    trace.tape = tape;
    trace.param_nodes = leaf;
    int ordinal = 0;

    switch (cfg_.architecture) {
        case Architecture::PureSelf: {
            check_ids(sample.text, cfg_.text_vocab, static_cast<std::size_t>(cfg_.text_tokens),
                      "text");
            check_ids(sample.image, cfg_.image_vocab, static_cast<std::size_t>(cfg_.image_tokens),
                      "image");
            Tape::Value x = tape->concat0({leaf[lay.cls_row],
                                           tape->rows(leaf[lay.text_embed], sample.text),
                                           leaf[lay.sep_row],
                                           tape->rows(leaf[lay.image_embed], sample.image)});
            x = tape->add(x, leaf[lay.text_pos]);
            for (int l = 0; l < cfg_.layers; ++l)
                x = run_block(*tape, cfg_, block_leaves(l), x, x, AttentionKind::SelfJoint, l,
                              trace.records, offset, ordinal);
            Tape::Value cls = tape->row_range(x, 0, 1);
            trace.logits_node = tape->add_rowvec(tape->matmul(cls, leaf[lay.head_w]),
                                                 leaf[lay.head_b]);
            trace.logits = Tensor({static_cast<std::size_t>(cfg_.classes)},
                                  tape->value(trace.logits_node).data());
            break;
        }
        case Architecture::SelfPlusCo: {
            check_ids(sample.text, cfg_.text_vocab, static_cast<std::size_t>(cfg_.text_tokens),
                      "text");
            check_ids(sample.image, cfg_.image_vocab, static_cast<std::size_t>(cfg_.image_tokens),
                      "image");
            std::vector<int> text_ids;
            text_ids.reserve(sample.text.size() + 1);
            text_ids.push_back(kTextCls);
            text_ids.insert(text_ids.end(), sample.text.begin(), sample.text.end());

            Tape::Value xt = tape->add(tape->rows(leaf[lay.text_embed], text_ids),
                                       leaf[lay.text_pos]);
            Tape::Value xi = tape->add(tape->rows(leaf[lay.image_embed], sample.image),
                                       leaf[lay.image_pos]);
            for (int l = 0; l < cfg_.layers; ++l) {
                xt = run_block(*tape, cfg_, block_leaves(4 * l + 0), xt, xt,
                               AttentionKind::SelfText, l, trace.records, offset, ordinal);
                xi = run_block(*tape, cfg_, block_leaves(4 * l + 1), xi, xi,
                               AttentionKind::SelfImage, l, trace.records, offset, ordinal);
                // Both cross directions read the representations entering the
                // co-attention stage of this layer.
                Tape::Value t_in = xt, i_in = xi;
                xt = run_block(*tape, cfg_, block_leaves(4 * l + 2), t_in, i_in,
                               AttentionKind::CrossTextFromImage, l, trace.records, offset,
                               ordinal);
                xi = run_block(*tape, cfg_, block_leaves(4 * l + 3), i_in, t_in,
                               AttentionKind::CrossImageFromText, l, trace.records, offset,
                               ordinal);
            }
            Tape::Value cls = tape->row_range(xt, 0, 1);
            trace.logits_node = tape->add_rowvec(tape->matmul(cls, leaf[lay.head_w]),
                                                 leaf[lay.head_b]);
            trace.logits = Tensor({static_cast<std::size_t>(cfg_.classes)},
                                  tape->value(trace.logits_node).data());
            break;
        }
        case Architecture::EncoderDecoder: {
            check_ids(sample.image, cfg_.image_vocab, static_cast<std::size_t>(cfg_.image_tokens),
                      "image");
            Tape::Value xe = tape->add(tape->rows(leaf[lay.image_embed], sample.image),
                                       leaf[lay.image_pos]);
            for (int l = 0; l < cfg_.layers; ++l)
                xe = run_block(*tape, cfg_, block_leaves(l), xe, xe, AttentionKind::EncoderSelf, l,
                               trace.records, offset, ordinal);
            Tape::Value xd = leaf[lay.query_embed];
            for (int l = 0; l < cfg_.layers; ++l) {
                xd = run_block(*tape, cfg_, block_leaves(cfg_.layers + 2 * l), xd, xd,
                               AttentionKind::DecoderSelf, l, trace.records, offset, ordinal);
                xd = run_block(*tape, cfg_, block_leaves(cfg_.layers + 2 * l + 1), xd, xe,
                               AttentionKind::DecoderCross, l, trace.records, offset, ordinal);
            }
            trace.logits_node = tape->add_rowvec(tape->matmul(xd, leaf[lay.head_w]),
                                                 leaf[lay.head_b]);
            trace.logits = tape->value(trace.logits_node);
            trace.boxes_node = tape->sigmoid(
                tape->add_rowvec(tape->matmul(xd, leaf[lay.box_w]), leaf[lay.box_b]));
            trace.boxes = tape->value(trace.boxes_node);
            break;
        }
    }
    return trace;
}

void backward_fill(ForwardTrace& trace, const Target& target) {
    if (!trace.tape) throw TraceError("trace has no tape");
    const Tensor& logits = trace.logits;
    std::size_t flat = 0;
    if (logits.rank() == 1) {
        if (target.is_detection())
            throw RejectedInput("classification trace cannot take a (query, class) target");
        if (target.cls < 0 || static_cast<std::size_t>(target.cls) >= logits.dim(0))
            throw RejectedInput("target class out of range");
        flat = static_cast<std::size_t>(target.cls);
    } else {
        if (!target.is_detection())
            throw RejectedInput("detection trace needs a (query, class) target");
        if (static_cast<std::size_t>(target.query) >= logits.dim(0) || target.cls < 0 ||
            static_cast<std::size_t>(target.cls) >= logits.dim(1))
            throw RejectedInput("target (query, class) out of range");
        flat = static_cast<std::size_t>(target.query) * logits.dim(1) +
               static_cast<std::size_t>(target.cls);
    }
    Gradients grads = trace.tape->gradient(trace.logits_node, flat);
    for (AttentionRecord& record : trace.records) record.grad = grads.at(record.node);
    trace.filled_target = target;
}

} // namespace attnrel
