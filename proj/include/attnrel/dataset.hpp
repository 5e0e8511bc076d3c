#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "attnrel/model.hpp"

namespace attnrel {

enum class TaskKind { Vqa, Detection };

std::string to_string(TaskKind kind);
TaskKind task_kind_from_string(const std::string& name);

struct Dataset {
    TaskKind kind = TaskKind::Vqa;
    int grid = 0; // detection image side length
    std::vector<Sample> samples;
};

// Text vocabulary: 0 CLS, 1 MASK, then noise symbols, then signal symbols.
// Image vocabulary: 0 MASK, then noise symbols, then signal symbols.
struct VqaVocab {
    int text_noise = 6;
    int text_signal = 4;
    int image_noise = 6;
    int image_signal = 4;

    int text_vocab() const { return 2 + text_noise + text_signal; }
    int image_vocab() const { return 1 + image_noise + image_signal; }
    int text_signal_base() const { return 2 + text_noise; }
    int image_signal_base() const { return 1 + image_noise; }
    bool is_text_signal(int id) const { return id >= text_signal_base(); }
    bool is_image_signal(int id) const { return id >= image_signal_base(); }
};

// The class label combines the parity of the one text signal symbol and the
// one image signal symbol: label = 2 * (text % 2) + (image % 2). Every other
// position holds a noise symbol (occasionally the mask symbol), so the label
// is a function of the designated tokens only.
Dataset gen_vqa_task(std::uint64_t seed, int n, int text_tokens = 6, int image_tokens = 9,
                     VqaVocab vocab = {});

// Grid images with 1..3 disjoint axis-aligned rectangles of distinct classes.
// The grid is split into `queries` horizontal bands; object j, when present,
// lies inside band j, so query identity is positional and no bipartite
// matching is needed. Cell symbol = covering object class, 0 elsewhere.
Dataset gen_detection_task(std::uint64_t seed, int n, int grid = 6, int queries = 3,
                           int classes = 3);

// Model configs whose token counts and vocabularies match the generators.
ModelConfig default_vqa_config(Architecture arch, std::uint64_t seed);
ModelConfig default_detection_config(std::uint64_t seed);

int vqa_label(int text_signal_symbol, int image_signal_symbol);

} // namespace attnrel
