#include "attnrel/segmask.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "attnrel/errors.hpp"

namespace attnrel {

namespace {
constexpr int kBins = 256;
}

OtsuResult otsu(const std::vector<double>& heatmap) {
    if (heatmap.empty()) throw RejectedInput("otsu: empty heatmap");
    const auto [mn_it, mx_it] = std::minmax_element(heatmap.begin(), heatmap.end());
    const double mn = *mn_it, mx = *mx_it;
    if (mx <= mn) return OtsuResult{mx, true};

    const double width = (mx - mn) / kBins;
    std::vector<double> count(kBins, 0.0), sum(kBins, 0.0), top(kBins, -1e300);
    for (double v : heatmap) {
        int bin = static_cast<int>((v - mn) / width);
        bin = std::min(bin, kBins - 1);
        count[bin] += 1.0;
        sum[bin] += v;
        top[bin] = std::max(top[bin], v);
    }

    const double total_n = static_cast<double>(heatmap.size());
    const double total_sum = std::accumulate(heatmap.begin(), heatmap.end(), 0.0);

    // Two passes: find the maximum inter-class variance, then take the lowest
    // threshold within relative 1e-10 of it. Near-ties are decided by the
    // threshold value, not by accumulation order.
    std::vector<double> variance(kBins, -1.0);
    double left_n = 0.0, left_sum = 0.0, best_variance = -1.0;
    for (int split = 0; split + 1 < kBins; ++split) {
        left_n += count[split];
        left_sum += sum[split];
        const double right_n = total_n - left_n;
        if (left_n == 0.0 || right_n == 0.0) continue;
        const double mean_left = left_sum / left_n;
        const double mean_right = (total_sum - left_sum) / right_n;
        variance[split] =
            left_n * right_n * (mean_left - mean_right) * (mean_left - mean_right);
        best_variance = std::max(best_variance, variance[split]);
    }
    double threshold = mn, left_top = mn;
    for (int split = 0; split + 1 < kBins; ++split) {
        if (count[split] > 0.0) left_top = top[split];
        if (variance[split] >= best_variance * (1.0 - 1e-10)) {
            threshold = left_top;
            break;
        }
    }
    return OtsuResult{threshold, false};
}

std::vector<std::uint8_t> otsu_mask(const std::vector<double>& heatmap) {
    const OtsuResult result = otsu(heatmap);
    std::vector<std::uint8_t> mask(heatmap.size(), 0);
    if (result.degenerate) return mask;
    for (std::size_t i = 0; i < heatmap.size(); ++i)
        mask[i] = heatmap[i] > result.threshold ? 1 : 0;
    return mask;
}

std::vector<double> upsample_bilinear(const std::vector<double>& grid, int size, int out_size) {
    if (size < 1 || out_size < 1 || grid.size() != static_cast<std::size_t>(size) * size)
        throw RejectedInput("upsample_bilinear: bad sizes");
    std::vector<double> out(static_cast<std::size_t>(out_size) * out_size);
    const double scale = out_size > 1 ? static_cast<double>(size - 1) / (out_size - 1) : 0.0;
    for (int r = 0; r < out_size; ++r) {
        const double y = r * scale;
        const int y0 = std::min(static_cast<int>(y), size - 1);
        const int y1 = std::min(y0 + 1, size - 1);
        const double fy = y - y0;
        for (int c = 0; c < out_size; ++c) {
            const double x = c * scale;
            const int x0 = std::min(static_cast<int>(x), size - 1);
            const int x1 = std::min(x0 + 1, size - 1);
            const double fx = x - x0;
            const double v00 = grid[static_cast<std::size_t>(y0) * size + x0];
            const double v01 = grid[static_cast<std::size_t>(y0) * size + x1];
            const double v10 = grid[static_cast<std::size_t>(y1) * size + x0];
            const double v11 = grid[static_cast<std::size_t>(y1) * size + x1];
            out[static_cast<std::size_t>(r) * out_size + c] =
                (1 - fy) * ((1 - fx) * v00 + fx * v01) + fy * ((1 - fx) * v10 + fx * v11);
        }
    }
    return out;
}

std::vector<std::uint8_t> upsample_nearest(const std::vector<std::uint8_t>& grid, int size,
                                           int out_size) {
    if (size < 1 || out_size < 1 || grid.size() != static_cast<std::size_t>(size) * size)
        throw RejectedInput("upsample_nearest: bad sizes");
    std::vector<std::uint8_t> out(static_cast<std::size_t>(out_size) * out_size);
    for (int r = 0; r < out_size; ++r) {
        const int sr = std::min(r * size / out_size, size - 1);
        for (int c = 0; c < out_size; ++c) {
            const int sc = std::min(c * size / out_size, size - 1);
            out[static_cast<std::size_t>(r) * out_size + c] =
                grid[static_cast<std::size_t>(sr) * size + sc];
        }
    }
    return out;
}

std::vector<SegMask> build_masks(const Tensor& relevance_rows, const Tensor& logits, int grid,
                                 const SegMaskOptions& options) {
    if (relevance_rows.rank() != 2 || logits.rank() != 2 ||
        relevance_rows.dim(0) != logits.dim(0))
        throw RejectedInput("build_masks: relevancy rows and logits rows disagree");
    if (relevance_rows.dim(1) != static_cast<std::size_t>(grid) * grid)
        throw RejectedInput("build_masks: relevancy row length is not grid*grid");

    const int target = options.target_mask_size > 0 ? options.target_mask_size : 4 * grid;
    const int original = options.original_size > 0 ? options.original_size : 8 * grid;
    const std::size_t queries = logits.dim(0), ncol = logits.dim(1);

    const Tensor probabilities = softmax_rows(logits);

    std::vector<SegMask> masks;
    for (std::size_t q = 0; q < queries; ++q) {
        std::size_t best = ncol; // first eligible column
        for (std::size_t c = 0; c < ncol; ++c) {
            if (static_cast<int>(c) == options.background_class) continue;
            if (best == ncol || probabilities(q, c) > probabilities(q, best)) best = c;
        }
        if (best == ncol || probabilities(q, best) <= 0.5) continue;

        std::vector<double> heat(relevance_rows.dim(1));
        for (std::size_t j = 0; j < heat.size(); ++j) heat[j] = relevance_rows(q, j);

        SegMask out;
        out.query = static_cast<int>(q);
        out.class_id = static_cast<int>(best);
        out.probability = probabilities(q, best);
        out.size = original;

        const OtsuResult threshold = otsu(heat);
        out.degenerate = threshold.degenerate;
        std::vector<std::uint8_t> grid_mask = otsu_mask(heat);

        std::vector<double> coarse(grid_mask.begin(), grid_mask.end());
        const std::vector<double> up = upsample_bilinear(coarse, grid, target);
        // sigmoid(x) > 0.5 keeps exactly the strictly positive values
        std::vector<std::uint8_t> binary(up.size());
        for (std::size_t j = 0; j < up.size(); ++j) binary[j] = up[j] > 0.0 ? 1 : 0;
        out.mask = upsample_nearest(binary, target, original);
        masks.push_back(std::move(out));
    }
    return masks;
}

double mask_iou(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b) {
    if (a.size() != b.size()) throw RejectedInput("mask_iou: shapes disagree");
    double inter = 0.0, uni = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const bool av = a[i] != 0, bv = b[i] != 0;
        inter += av && bv ? 1.0 : 0.0;
        uni += av || bv ? 1.0 : 0.0;
    }
    return uni == 0.0 ? 0.0 : inter / uni;
}

namespace {

struct RankedPrediction {
    double probability;
    std::size_t item;
    int query;
    int matched_gt = -1; // index into the item's ground truth
};

ApArBucket bucket_metrics(const std::vector<SegEvalItem>& items,
                          const std::vector<RankedPrediction>& ranked, double area_min,
                          double area_max) {
    auto in_bucket = [&](const GroundTruthMask& gt) {
        return gt.area_cells >= area_min && gt.area_cells < area_max;
    };

    std::map<int, int> gt_per_class;
    for (const SegEvalItem& item : items)
        for (const GroundTruthMask& gt : item.ground_truth)
            if (in_bucket(gt)) ++gt_per_class[gt.class_id];

    ApArBucket bucket;
    for (const auto& [cls, gt_count] : gt_per_class) bucket.ground_truth += gt_count;
    if (gt_per_class.empty()) return bucket;

    double ap_sum = 0.0, ar_sum = 0.0;
    for (const auto& [cls, gt_count] : gt_per_class) {
        int seen = 0, matched = 0;
        double ap = 0.0;
        for (const RankedPrediction& pred : ranked) {
            const SegEvalItem& item = items[pred.item];
            const SegMask* mask = nullptr;
            for (const SegMask& m : item.predictions)
                if (m.query == pred.query) mask = &m;
            if (mask == nullptr || mask->class_id != cls) continue;
            const bool is_match = pred.matched_gt >= 0 &&
                                  in_bucket(item.ground_truth[pred.matched_gt]);
            if (pred.matched_gt >= 0 && !is_match) continue; // matched outside the bucket
            ++seen;
            if (is_match) {
                ++matched;
                ap += static_cast<double>(matched) / seen;
            }
        }
        ap_sum += ap / gt_count;
        ar_sum += static_cast<double>(matched) / gt_count;
    }
    ap_sum /= static_cast<double>(gt_per_class.size());
    ar_sum /= static_cast<double>(gt_per_class.size());
    return ApArBucket{ap_sum, ar_sum, bucket.ground_truth};
}

} // namespace

ApArReport ap_ar(const std::vector<SegEvalItem>& items, const ApArOptions& options) {
    std::vector<RankedPrediction> ranked;
    for (std::size_t i = 0; i < items.size(); ++i)
        for (const SegMask& pred : items[i].predictions)
            ranked.push_back(RankedPrediction{pred.probability, i, pred.query});
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const RankedPrediction& a, const RankedPrediction& b) {
                         return a.probability > b.probability;
                     });

    // Greedy matching within each item, highest probability first.
    std::vector<std::vector<bool>> taken(items.size());
    for (std::size_t i = 0; i < items.size(); ++i)
        taken[i].assign(items[i].ground_truth.size(), false);
    for (RankedPrediction& pred : ranked) {
        const SegEvalItem& item = items[pred.item];
        const SegMask* mask = nullptr;
        for (const SegMask& m : item.predictions)
            if (m.query == pred.query) mask = &m;
        double best_iou = -1.0;
        for (std::size_t g = 0; g < item.ground_truth.size(); ++g) {
            const GroundTruthMask& gt = item.ground_truth[g];
            if (taken[pred.item][g] || gt.class_id != mask->class_id) continue;
            const double iou = mask_iou(mask->mask, gt.mask);
            if (iou >= options.iou_threshold && iou > best_iou) {
                best_iou = iou;
                pred.matched_gt = static_cast<int>(g);
            }
        }
        if (pred.matched_gt >= 0) taken[pred.item][pred.matched_gt] = true;
    }

    ApArReport report;
    constexpr double inf = 1e300;
    report.all = bucket_metrics(items, ranked, 0.0, inf);
    report.medium = bucket_metrics(items, ranked, options.medium_min, options.large_min);
    report.large = bucket_metrics(items, ranked, options.large_min, inf);
    return report;
}

} // namespace attnrel
