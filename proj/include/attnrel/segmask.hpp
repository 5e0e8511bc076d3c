#pragma once

#include <cstdint>
#include <vector>

#include "attnrel/tensor.hpp"

namespace attnrel {

struct OtsuResult {
    double threshold = 0.0;
    bool degenerate = false; // constant input: no split exists
};

// Threshold maximizing the inter-class variance over a 256-bin histogram of
// [min, max]. Class statistics use the actual values accumulated per bin, so
// on data quantized to <= 256 levels the split is exact. Ties within relative
// 1e-10 of the maximum variance resolve to the lowest threshold. Constant
// input yields a degenerate result (everything background) instead of an
// error.
OtsuResult otsu(const std::vector<double>& heatmap);

// heatmap > threshold as {0, 1}.
std::vector<std::uint8_t> otsu_mask(const std::vector<double>& heatmap);

// Corner-aligned bilinear interpolation of a square grid.
std::vector<double> upsample_bilinear(const std::vector<double>& grid, int size, int out_size);
// Nearest-neighbor scaling, source index = floor(target * size / out_size).
std::vector<std::uint8_t> upsample_nearest(const std::vector<std::uint8_t>& grid, int size,
                                           int out_size);

struct SegMask {
    int query = 0;
    int class_id = 0;
    double probability = 0.0;
    int size = 0; // square side length
    std::vector<std::uint8_t> mask;
    bool degenerate = false; // heatmap was constant
};

struct SegMaskOptions {
    int target_mask_size = 0;  // 0: 4x the token grid
    int original_size = 0;     // 0: 8x the token grid
    int background_class = -1; // class column excluded from the keep filter
};

// Per-query masks from relevancy rows: softmax the logits, keep queries whose
// top class probability exceeds 0.5, threshold each kept row with Otsu,
// upsample bilinearly, keep strictly positive values, and scale to the
// original resolution with nearest neighbor.
std::vector<SegMask> build_masks(const Tensor& relevance_rows, const Tensor& logits, int grid,
                                 const SegMaskOptions& options = {});

double mask_iou(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b);

struct GroundTruthMask {
    int class_id = 0;
    std::vector<std::uint8_t> mask;
    int size = 0;            // square side length, same space as predictions
    double area_cells = 0.0; // object area in token-grid cells, for buckets
};

// One image's predictions and ground truth; matching never crosses items.
struct SegEvalItem {
    std::vector<SegMask> predictions;
    std::vector<GroundTruthMask> ground_truth;
};

struct ApArBucket {
    double ap = 0.0;
    double ar = 0.0;
    int ground_truth = 0;
};

struct ApArReport {
    ApArBucket all;
    ApArBucket medium;
    ApArBucket large;
};

struct ApArOptions {
    double iou_threshold = 0.2;
    // Ground-truth size buckets in token-grid cells.
    double medium_min = 8.0;
    double large_min = 32.0;
};

// Greedy matching by descending probability at the IoU threshold; AP and AR
// per class, averaged over classes present in the ground truth. Bucket rows
// restrict the ground truth by area; predictions matched to out-of-bucket
// objects are left out of that bucket's ranking.
ApArReport ap_ar(const std::vector<SegEvalItem>& items, const ApArOptions& options = {});

} // namespace attnrel
