#pragma once

#include "attnrel/dataset.hpp"
#include "attnrel/model.hpp"

namespace attnrel {

struct TrainOptions {
    int epochs = 60;
    double learning_rate = 0.05;
    int batch_size = 16;
    double box_loss_weight = 0.5; // detection only
};

struct TrainResult {
    Model model;
    double accuracy = 0.0; // final pass over the training set
    std::vector<double> epoch_loss;
};

// Plain minibatch gradient descent over cross-entropy (classification) or
// per-query cross-entropy plus L1 box regression (detection). Deterministic
// for a fixed model seed and dataset. Throws NumericError on divergence.
TrainResult train(const Model& model, const Dataset& dataset, const TrainOptions& options = {});

// Top-1 accuracy: classification over samples, detection over (sample, query)
// class assignments.
double evaluate_accuracy(const Model& model, const Dataset& dataset);

// Per-query class target for a detection sample; 0 means no-object.
std::vector<int> detection_query_classes(const Sample& sample, int queries);

} // namespace attnrel
