#include "attnrel/dataset.hpp"

#include <algorithm>

#include "attnrel/errors.hpp"
#include "attnrel/rng.hpp"

namespace attnrel {

std::string to_string(TaskKind kind) { return kind == TaskKind::Vqa ? "vqa" : "detect"; }

TaskKind task_kind_from_string(const std::string& name) {
    if (name == "vqa") return TaskKind::Vqa;
    if (name == "detect") return TaskKind::Detection;
    throw ConfigError("unknown task kind: " + name);
}

int vqa_label(int text_signal_symbol, int image_signal_symbol) {
    return 2 * (text_signal_symbol % 2) + (image_signal_symbol % 2);
}

Dataset gen_vqa_task(std::uint64_t seed, int n, int text_tokens, int image_tokens, VqaVocab vocab) {
    if (n <= 0) throw RejectedInput("gen_vqa_task: n must be positive");
    if (text_tokens < 1 || image_tokens < 1) throw RejectedInput("gen_vqa_task: bad token counts");

    Rng rng(seed);
    Dataset ds;
    ds.kind = TaskKind::Vqa;
    ds.samples.reserve(static_cast<std::size_t>(n));

    // Mask symbols appear among the noise so masking at evaluation time stays
    // in-distribution.
    auto text_noise_symbol = [&]() {
        return rng.uniform() < 0.15 ? kTextMask : 2 + rng.uniform_int(0, vocab.text_noise - 1);
    };
    auto image_noise_symbol = [&]() {
        return rng.uniform() < 0.15 ? kImageMask : 1 + rng.uniform_int(0, vocab.image_noise - 1);
    };

    for (int s = 0; s < n; ++s) {
        Sample sample;
        sample.text.resize(static_cast<std::size_t>(text_tokens));
        sample.image.resize(static_cast<std::size_t>(image_tokens));
        sample.designated_text = rng.uniform_int(0, text_tokens - 1);
        sample.designated_image = rng.uniform_int(0, image_tokens - 1);
        for (int j = 0; j < text_tokens; ++j) sample.text[j] = text_noise_symbol();
        for (int j = 0; j < image_tokens; ++j) sample.image[j] = image_noise_symbol();
        const int ts = vocab.text_signal_base() + rng.uniform_int(0, vocab.text_signal - 1);
        const int is = vocab.image_signal_base() + rng.uniform_int(0, vocab.image_signal - 1);
        sample.text[sample.designated_text] = ts;
        sample.image[sample.designated_image] = is;
        sample.label = vqa_label(ts, is);
        ds.samples.push_back(std::move(sample));
    }
    return ds;
}

Dataset gen_detection_task(std::uint64_t seed, int n, int grid, int queries, int classes) {
    if (n <= 0) throw RejectedInput("gen_detection_task: n must be positive");
    if (queries < 1 || classes < queries) throw RejectedInput("gen_detection_task: bad shape");
    if (grid < 2 * queries) throw RejectedInput("gen_detection_task: grid too small for bands");

    Rng rng(seed);
    Dataset ds;
    ds.kind = TaskKind::Detection;
    ds.grid = grid;
    ds.samples.reserve(static_cast<std::size_t>(n));

    const int band = grid / queries;

    for (int s = 0; s < n; ++s) {
        Sample sample;
        sample.image.assign(static_cast<std::size_t>(grid) * grid, 0);

        const int count = rng.uniform_int(1, std::min(3, queries));
        std::vector<int> bands(queries);
        for (int j = 0; j < queries; ++j) bands[j] = j;
        for (int j = queries - 1; j > 0; --j) std::swap(bands[j], bands[rng.uniform_int(0, j)]);
        bands.resize(static_cast<std::size_t>(count));
        std::sort(bands.begin(), bands.end());

        std::vector<int> palette(classes);
        for (int c = 0; c < classes; ++c) palette[c] = c + 1;
        for (int c = classes - 1; c > 0; --c) std::swap(palette[c], palette[rng.uniform_int(0, c)]);

        for (int k = 0; k < count; ++k) {
            const int b = bands[static_cast<std::size_t>(k)];
            DetObject obj;
            obj.query = b;
            obj.cls = palette[static_cast<std::size_t>(k)];
            const int band_top = b * band;
            const int height = rng.uniform_int(1, band);
            obj.r0 = band_top + rng.uniform_int(0, band - height);
            obj.r1 = obj.r0 + height;
            const int width = rng.uniform_int(2, std::min(5, grid));
            obj.c0 = rng.uniform_int(0, grid - width);
            obj.c1 = obj.c0 + width;
            obj.mask.assign(static_cast<std::size_t>(grid) * grid, 0);
            for (int r = obj.r0; r < obj.r1; ++r)
                for (int c = obj.c0; c < obj.c1; ++c) {
                    obj.mask[static_cast<std::size_t>(r) * grid + c] = 1;
                    sample.image[static_cast<std::size_t>(r) * grid + c] = obj.cls;
                }
            sample.objects.push_back(std::move(obj));
        }
        ds.samples.push_back(std::move(sample));
    }
    return ds;
}

ModelConfig default_vqa_config(Architecture arch, std::uint64_t seed) {
    VqaVocab vocab;
    ModelConfig cfg;
    cfg.architecture = arch;
    cfg.layers = 2;
    cfg.heads = 2;
    cfg.head_dim = 8;
    cfg.text_tokens = 6;
    cfg.image_tokens = 9;
    cfg.queries = 0;
    cfg.classes = 4;
    cfg.text_vocab = vocab.text_vocab();
    cfg.image_vocab = vocab.image_vocab();
    cfg.seed = seed;
    return cfg;
}

ModelConfig default_detection_config(std::uint64_t seed) {
    ModelConfig cfg;
    cfg.architecture = Architecture::EncoderDecoder;
    cfg.layers = 2;
    cfg.heads = 2;
    cfg.head_dim = 8;
    cfg.text_tokens = 0;
    cfg.image_tokens = 36;
    cfg.queries = 3;
    cfg.classes = 3;
    cfg.text_vocab = 2;
    cfg.image_vocab = 4; // background + 3 object classes
    cfg.seed = seed;
    return cfg;
}

} // namespace attnrel
