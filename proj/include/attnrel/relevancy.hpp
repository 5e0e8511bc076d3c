#pragma once

#include <string>
#include <utility>
#include <vector>

#include "attnrel/model.hpp"
#include "attnrel/tensor.hpp"

namespace attnrel {

enum class AblationVariant { Full, NoNormalization, NoAggregation, NoSelfAttInCross };

std::string to_string(AblationVariant variant);
AblationVariant ablation_from_string(const std::string& name);

// Aggregated relevancy maps for one propagation. Which members are populated
// depends on the architecture:
//   PureSelf       -> joint
//   SelfPlusCo     -> text_text, image_image, text_image, image_text
//   EncoderDecoder -> enc_enc, dec_dec, dec_enc
struct RelevancyState {
    Architecture architecture = Architecture::PureSelf;
    Tensor joint;
    Tensor text_text, image_image, text_image, image_text;
    Tensor enc_enc, dec_dec, dec_enc;

    // map name -> matrix, for dumps and shape checks
    std::vector<std::pair<std::string, const Tensor*>> maps() const;
};

// Self maps start as identity, cross maps as zeros.
RelevancyState init_state(Architecture arch, int text_or_enc_tokens, int image_or_dec_tokens);

// Mean over heads of the positively clamped gradient-weighted attention.
// Throws TraceError when grad is absent.
Tensor head_average(const Tensor& attention, const Tensor& grad);
Tensor head_average(const AttentionRecord& record);

// R_self += avg * R_self, and R_cross += avg * R_cross when a cross map
// accompanies this domain. Null cross pointer skips the second rule.
void apply_self(Tensor& self_map, Tensor* cross_map, const Tensor& avg, AblationVariant variant);

// Row-normalizes the accumulated part of a self map: subtract identity,
// divide each row by its sum (rows with sum <= 1e-12 become zero), add the
// identity back.
Tensor normalize_self(const Tensor& self_map);

// Bi-modal update for one direction (s attends over q):
//   cross_sq += norm(R_ss)^T * avg * norm(R_qq)
//   self_ss  += avg * cross_qs            (skipped when cross_qs is null)
// Inputs are read from the provided snapshot tensors so both directions of a
// layer can be applied against the same state.
struct CrossInputs {
    const Tensor* self_ss = nullptr;
    const Tensor* self_qq = nullptr;
    const Tensor* cross_qs = nullptr; // null when the reverse map does not exist
};
void apply_cross(Tensor& cross_sq, Tensor* self_ss_out, const Tensor& avg,
                 const CrossInputs& snapshot, AblationVariant variant);

// Runs the per-record update rules over a trace with gradients filled.
RelevancyState propagate(const ForwardTrace& trace,
                         AblationVariant variant = AblationVariant::Full);

// CLS-row extraction for classification states. Returns per-slot scores for
// the text stream (CLS slot zeroed) and the image stream. For PureSelf the
// joint row is split as [CLS | text | SEP | image]; the SEP slot belongs to
// neither vector.
struct ClsExtraction {
    std::vector<double> text;
    std::vector<double> image;
};
ClsExtraction extract_cls(const RelevancyState& state, int cls_index = 0, int text_tokens = -1,
                          int image_tokens = -1);

// Row j of the decoder-encoder map.
std::vector<double> extract_query(const RelevancyState& state, int query);

} // namespace attnrel
