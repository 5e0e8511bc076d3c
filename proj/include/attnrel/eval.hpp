#pragma once

#include <string>
#include <vector>

#include "attnrel/dataset.hpp"
#include "attnrel/explain.hpp"

namespace attnrel {

enum class Modality { Text, Image };
enum class Polarity { Positive, Negative };

std::string to_string(Modality modality);
std::string to_string(Polarity polarity);

struct PerturbationCurve {
    std::vector<double> fractions; // strictly increasing, starts at 0
    std::vector<double> accuracy;  // same length, values in [0, 1]
    Modality modality = Modality::Image;
    Polarity polarity = Polarity::Negative;
    std::string method;
};

struct EvalOptions {
    int steps = 11;
    TargetMode target_mode = TargetMode::Predicted;
    int workers = 1;
};

// Number of masked tokens at a fraction: ceil(fraction * n), lowest-relevance
// ties broken by lower token index.
int tokens_removed(double fraction, int n);

// Replaces the top (positive) or bottom (negative) fraction of tokens of one
// modality with the mask symbol and records mean top-1 accuracy per fraction.
PerturbationCurve perturb_curve(const Model& model, const Dataset& dataset,
                                const Relevancer& relevancer, Modality modality,
                                Polarity polarity, const EvalOptions& options = {});
PerturbationCurve perturb_curve(const Model& model, const Dataset& dataset, MethodId method,
                                Modality modality, Polarity polarity,
                                const EvalOptions& options = {});

// Trapezoidal area under accuracy over fraction.
double auc(const PerturbationCurve& curve);

// Fraction of samples whose designated token ranks first by relevance.
double ground_truth_rank(const Model& model, const Dataset& dataset,
                         const Relevancer& relevancer, Modality modality,
                         const EvalOptions& options = {});
double ground_truth_rank(const Model& model, const Dataset& dataset, MethodId method,
                         Modality modality, const EvalOptions& options = {});

struct MethodScores {
    double neg_img = 0.0;
    double pos_img = 0.0;
    double neg_text = 0.0;
    double pos_text = 0.0;
    double hit_rate_text = 0.0;
    double hit_rate_image = 0.0;
    double hit_rate() const { return 0.5 * (hit_rate_text + hit_rate_image); }
};

struct CompareReport {
    std::vector<std::pair<std::string, MethodScores>> rows; // keyed by method name
    std::vector<PerturbationCurve> curves;
    EvalOptions options;
};

// All four perturbation settings plus ground-truth hit rates, one row per
// method.
CompareReport compare_report(const Model& model, const Dataset& dataset,
                             const std::vector<MethodId>& methods,
                             const EvalOptions& options = {});

// Same table across the ablation variants of the full method.
CompareReport ablation_report(const Model& model, const Dataset& dataset,
                              const EvalOptions& options = {});

} // namespace attnrel
