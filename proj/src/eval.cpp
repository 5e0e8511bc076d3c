#include "attnrel/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "attnrel/errors.hpp"
#include "attnrel/parallel.hpp"

namespace attnrel {

std::string to_string(Modality modality) { return modality == Modality::Text ? "text" : "img"; }

std::string to_string(Polarity polarity) {
    return polarity == Polarity::Positive ? "pos" : "neg";
}

int tokens_removed(double fraction, int n) {
    if (fraction < 0.0 || fraction > 1.0) throw RejectedInput("fraction outside [0, 1]");
    return static_cast<int>(std::ceil(fraction * n - 1e-9));
}

namespace {

void require_modality(const Model& model, Modality modality) {
    if (model.config().architecture == Architecture::EncoderDecoder)
        throw RejectedInput("architecture has no " + to_string(modality) +
                            " modality to perturb");
}

std::vector<int>& modality_tokens(Sample& sample, Modality modality) {
    return modality == Modality::Text ? sample.text : sample.image;
}

int mask_symbol(Modality modality) {
    return modality == Modality::Text ? kTextMask : kImageMask;
}

// Token indices ordered by relevance; ties keep the lower index first.
std::vector<int> relevance_order(const std::vector<double>& scores, Polarity polarity) {
    std::vector<int> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return polarity == Polarity::Positive ? scores[a] > scores[b] : scores[a] < scores[b];
    });
    return order;
}

int predicted_class(const Tensor& logits) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < logits.size(); ++c)
        if (logits[c] > logits[best]) best = c;
    return static_cast<int>(best);
}

} // namespace

PerturbationCurve perturb_curve(const Model& model, const Dataset& dataset,
                                const Relevancer& relevancer, Modality modality,
                                Polarity polarity, const EvalOptions& options) {
    require_modality(model, modality);
    if (options.steps < 2) throw RejectedInput("perturb_curve needs at least 2 steps");
    if (dataset.samples.empty()) throw RejectedInput("perturb_curve: empty dataset");

    const std::size_t n_samples = dataset.samples.size();
    const int steps = options.steps;
    std::vector<std::vector<double>> correct(n_samples, std::vector<double>(steps, 0.0));

    parallel_for(n_samples, options.workers, [&](std::size_t s) {
        const Sample& original = dataset.samples[s];
        ForwardTrace base = model.forward(original);
        const Target target = resolve_target(base, original, options.target_mode);
        const TokenRelevance rel = relevancer(model, original, target);
        const std::vector<double>& scores = modality == Modality::Text ? rel.text : rel.image;
        const std::vector<int> order = relevance_order(scores, polarity);
        const int n_tokens = static_cast<int>(order.size());

        for (int k = 0; k < steps; ++k) {
            const double fraction = static_cast<double>(k) / (steps - 1);
            const int removed = tokens_removed(fraction, n_tokens);
            Sample masked = original;
            std::vector<int>& tokens = modality_tokens(masked, modality);
            for (int j = 0; j < removed; ++j) tokens[order[j]] = mask_symbol(modality);
            ForwardTrace trace = model.forward(masked);
            correct[s][k] = predicted_class(trace.logits) == original.label ? 1.0 : 0.0;
        }
    });

    PerturbationCurve curve;
    curve.modality = modality;
    curve.polarity = polarity;
    curve.fractions.resize(steps);
    curve.accuracy.resize(steps);
    for (int k = 0; k < steps; ++k) {
        curve.fractions[k] = static_cast<double>(k) / (steps - 1);
        double sum = 0.0;
        for (std::size_t s = 0; s < n_samples; ++s) sum += correct[s][k];
        curve.accuracy[k] = sum / static_cast<double>(n_samples);
    }
    return curve;
}

PerturbationCurve perturb_curve(const Model& model, const Dataset& dataset, MethodId method,
                                Modality modality, Polarity polarity,
                                const EvalOptions& options) {
    PerturbationCurve curve = perturb_curve(model, dataset, method_relevancer(method), modality,
                                            polarity, options);
    curve.method = to_string(method);
    return curve;
}

double auc(const PerturbationCurve& curve) {
    const std::size_t n = curve.fractions.size();
    if (n < 2 || curve.accuracy.size() != n)
        throw RejectedInput("auc needs at least 2 curve points");
    double area = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const double df = curve.fractions[i + 1] - curve.fractions[i];
        if (df <= 0.0) throw RejectedInput("auc: fractions must be strictly increasing");
        area += df * 0.5 * (curve.accuracy[i] + curve.accuracy[i + 1]);
    }
    return area;
}

double ground_truth_rank(const Model& model, const Dataset& dataset,
                         const Relevancer& relevancer, Modality modality,
                         const EvalOptions& options) {
    require_modality(model, modality);
    if (dataset.samples.empty()) throw RejectedInput("ground_truth_rank: empty dataset");
    const std::size_t n = dataset.samples.size();
    std::vector<double> hit(n, 0.0);
    parallel_for(n, options.workers, [&](std::size_t s) {
        const Sample& sample = dataset.samples[s];
        const int designated =
            modality == Modality::Text ? sample.designated_text : sample.designated_image;
        if (designated < 0) return;
        ForwardTrace base = model.forward(sample);
        const Target target = resolve_target(base, sample, options.target_mode);
        const TokenRelevance rel = relevancer(model, sample, target);
        const std::vector<double>& scores = modality == Modality::Text ? rel.text : rel.image;
        int best = 0;
        for (int j = 1; j < static_cast<int>(scores.size()); ++j)
            if (scores[j] > scores[best]) best = j;
        hit[s] = best == designated ? 1.0 : 0.0;
    });
    return std::accumulate(hit.begin(), hit.end(), 0.0) / static_cast<double>(n);
}

double ground_truth_rank(const Model& model, const Dataset& dataset, MethodId method,
                         Modality modality, const EvalOptions& options) {
    return ground_truth_rank(model, dataset, method_relevancer(method), modality, options);
}

namespace {

MethodScores score_relevancer(const Model& model, const Dataset& dataset,
                              const Relevancer& relevancer, const std::string& name,
                              std::vector<PerturbationCurve>& curves,
                              const EvalOptions& options) {
    MethodScores scores;
    const struct {
        Modality modality;
        Polarity polarity;
        double MethodScores::* slot;
    } settings[] = {
        {Modality::Image, Polarity::Negative, &MethodScores::neg_img},
        {Modality::Image, Polarity::Positive, &MethodScores::pos_img},
        {Modality::Text, Polarity::Negative, &MethodScores::neg_text},
        {Modality::Text, Polarity::Positive, &MethodScores::pos_text},
    };
    for (const auto& setting : settings) {
        PerturbationCurve curve =
            perturb_curve(model, dataset, relevancer, setting.modality, setting.polarity, options);
        curve.method = name;
        scores.*(setting.slot) = auc(curve);
        curves.push_back(std::move(curve));
    }
    scores.hit_rate_text = ground_truth_rank(model, dataset, relevancer, Modality::Text, options);
    scores.hit_rate_image =
        ground_truth_rank(model, dataset, relevancer, Modality::Image, options);
    return scores;
}

} // namespace

CompareReport compare_report(const Model& model, const Dataset& dataset,
                             const std::vector<MethodId>& methods, const EvalOptions& options) {
    CompareReport report;
    report.options = options;
    for (MethodId method : methods) {
        const std::string name = to_string(method);
        report.rows.emplace_back(
            name, score_relevancer(model, dataset, method_relevancer(method), name,
                                   report.curves, options));
    }
    return report;
}

CompareReport ablation_report(const Model& model, const Dataset& dataset,
                              const EvalOptions& options) {
    CompareReport report;
    report.options = options;
    for (AblationVariant variant :
         {AblationVariant::Full, AblationVariant::NoNormalization, AblationVariant::NoAggregation,
          AblationVariant::NoSelfAttInCross}) {
        const std::string name = to_string(variant);
        report.rows.emplace_back(
            name, score_relevancer(model, dataset, method_relevancer(MethodId::Ours, variant),
                                   name, report.curves, options));
    }
    return report;
}

} // namespace attnrel
