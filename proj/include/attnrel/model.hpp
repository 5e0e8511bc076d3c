#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "attnrel/tape.hpp"
#include "attnrel/tensor.hpp"

namespace attnrel {

enum class Architecture { PureSelf, SelfPlusCo, EncoderDecoder };

enum class AttentionKind {
    SelfText,
    SelfImage,
    SelfJoint,
    CrossTextFromImage,
    CrossImageFromText,
    EncoderSelf,
    DecoderSelf,
    DecoderCross,
};

std::string to_string(Architecture arch);
Architecture architecture_from_string(const std::string& name);
std::string to_string(AttentionKind kind);

struct ModelConfig {
    Architecture architecture = Architecture::SelfPlusCo;
    int layers = 2;   // per block type
    int heads = 2;
    int head_dim = 8; // embed dim = heads * head_dim
    // Content token counts. SelfPlusCo prepends a CLS slot to the text
    // stream; PureSelf wraps the joint stream as [CLS, text, SEP, image].
    int text_tokens = 6;
    int image_tokens = 9; // encoder tokens for EncoderDecoder (grid*grid)
    int queries = 0;      // decoder queries (EncoderDecoder only)
    int classes = 4;      // detection logits get one extra no-object column
    int text_vocab = 12;
    int image_vocab = 11;
    std::uint64_t seed = 1;

    int embed_dim() const { return heads * head_dim; }
    void validate() const;
};

struct DetObject {
    int query = 0;              // decoder query this object belongs to
    int cls = 0;                // 1-based object class
    int r0 = 0, c0 = 0, r1 = 0, c1 = 0; // half-open cell ranges
    std::vector<std::uint8_t> mask;     // grid*grid, row-major, {0,1}
};

struct Sample {
    std::vector<int> text;  // content symbol ids
    std::vector<int> image; // content symbol ids / grid cells row-major
    int label = -1;
    int designated_text = -1;  // index into text
    int designated_image = -1; // index into image
    std::vector<DetObject> objects; // detection ground truth
};

// Class target to differentiate: classification uses cls only; detection
// selects one (query, cls) logit.
struct Target {
    int query = -1;
    int cls = 0;
    bool is_detection() const { return query >= 0; }
};

struct AttentionRecord {
    AttentionKind kind;
    int layer_index = 0;
    Tensor attention;           // [heads, s, q], rows sum to 1
    std::optional<Tensor> grad; // filled by backward_fill
    Tape::Value node;           // internal handle into the trace's tape
};

struct ForwardTrace {
    Architecture architecture;
    std::vector<AttentionRecord> records;
    Tensor logits; // [classes] or [queries, classes+1]
    Tensor boxes;  // [queries, 4], detection only
    std::shared_ptr<Tape> tape;
    Tape::Value logits_node;
    Tape::Value boxes_node;
    std::vector<Tape::Value> param_nodes; // leaf per model parameter, in order
    std::optional<Target> filled_target;

    bool has_grads() const { return filled_target.has_value(); }
};

// Additive offset applied to one attention map after its softmax; the
// finite-difference oracle perturbs maps through this hook.
struct AttentionOffset {
    int record_ordinal = 0;
    Tensor delta;
};

class Model {
public:
    explicit Model(const ModelConfig& config);

    const ModelConfig& config() const { return cfg_; }

    ForwardTrace forward(const Sample& sample, const AttentionOffset* offset = nullptr) const;

    // Number of attention records a forward pass emits (pure function of the
    // config).
    int record_count() const;

    std::vector<double> flat_parameters() const;
    void set_flat_parameters(const std::vector<double>& flat);
    const std::vector<Tensor>& parameters() const { return params_; }
    std::vector<Tensor>& mutable_parameters() { return params_; }

    // Joint-stream geometry for PureSelf.
    int joint_length() const;

private:
    ModelConfig cfg_;
    std::vector<Tensor> params_;
};

// Populates record.grad with d(logits[target]) / dA for every record.
void backward_fill(ForwardTrace& trace, const Target& target);

// Reserved symbols for the synthetic vocabularies.
inline constexpr int kTextCls = 0;
inline constexpr int kTextMask = 1;
inline constexpr int kImageMask = 0;

} // namespace attnrel
