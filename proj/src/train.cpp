#include "attnrel/train.hpp"

#include <cmath>

#include "attnrel/errors.hpp"

namespace attnrel {

std::vector<int> detection_query_classes(const Sample& sample, int queries) {
    std::vector<int> cls(static_cast<std::size_t>(queries), 0);
    for (const DetObject& obj : sample.objects) {
        if (obj.query < 0 || obj.query >= queries)
            throw RejectedInput("detection object query out of range");
        cls[static_cast<std::size_t>(obj.query)] = obj.cls;
    }
    return cls;
}

namespace {

struct SampleLoss {
    double loss = 0.0;
    Tape::Value node;
};

// Builds the loss on the trace's own tape so one backward pass yields all
// parameter gradients.
SampleLoss build_loss(const Model& model, ForwardTrace& trace, const Sample& sample,
                      const TrainOptions& opt) {
    Tape& tape = *trace.tape;
    SampleLoss out;
    if (model.config().architecture == Architecture::EncoderDecoder) {
        const int queries = model.config().queries;
        const std::vector<int> cls = detection_query_classes(sample, queries);
        Tape::Value total;
        for (int q = 0; q < queries; ++q) {
            Tape::Value ce = tape.cross_entropy(trace.logits_node, static_cast<std::size_t>(q),
                                                static_cast<std::size_t>(cls[q]));
            total = total.valid() ? tape.add(total, ce) : ce;
        }
        const double grid = std::sqrt(static_cast<double>(model.config().image_tokens));
        for (const DetObject& obj : sample.objects) {
            std::vector<double> target = {obj.r0 / grid, obj.c0 / grid, obj.r1 / grid,
                                          obj.c1 / grid};
            Tape::Value l1 = tape.l1_to(trace.boxes_node, static_cast<std::size_t>(obj.query),
                                        std::move(target));
            total = tape.add(total, tape.scale(l1, opt.box_loss_weight));
        }
        out.node = total;
    } else {
        if (sample.label < 0 || sample.label >= model.config().classes)
            throw RejectedInput("sample label out of range");
        out.node = tape.cross_entropy(trace.logits_node, 0,
                                      static_cast<std::size_t>(sample.label));
    }
    out.loss = tape.value(out.node)[0];
    return out;
}

} // namespace

double evaluate_accuracy(const Model& model, const Dataset& dataset) {
    if (dataset.samples.empty()) return 0.0;
    double correct = 0.0, total = 0.0;
    for (const Sample& sample : dataset.samples) {
        ForwardTrace trace = model.forward(sample);
        if (model.config().architecture == Architecture::EncoderDecoder) {
            const int queries = model.config().queries;
            const std::vector<int> cls = detection_query_classes(sample, queries);
            const std::size_t ncol = trace.logits.dim(1);
            for (int q = 0; q < queries; ++q) {
                std::size_t best = 0;
                for (std::size_t c = 1; c < ncol; ++c)
                    if (trace.logits(static_cast<std::size_t>(q), c) >
                        trace.logits(static_cast<std::size_t>(q), best))
                        best = c;
                correct += best == static_cast<std::size_t>(cls[q]) ? 1.0 : 0.0;
                total += 1.0;
            }
        } else {
            std::size_t best = 0;
            for (std::size_t c = 1; c < trace.logits.size(); ++c)
                if (trace.logits[c] > trace.logits[best]) best = c;
            correct += best == static_cast<std::size_t>(sample.label) ? 1.0 : 0.0;
            total += 1.0;
        }
    }
    return correct / total;
}

TrainResult train(const Model& model, const Dataset& dataset, const TrainOptions& options) {
    if (dataset.samples.empty()) throw RejectedInput("train: empty dataset");
    const bool detection = model.config().architecture == Architecture::EncoderDecoder;
    if (detection != (dataset.kind == TaskKind::Detection))
        throw ConfigError("dataset kind does not match the architecture");
    if (options.epochs < 0) throw RejectedInput("train: negative epoch count");

    Model current = model;
    TrainResult result{current, 0.0, {}};
    const std::size_t n = dataset.samples.size();
    const std::size_t batch = options.batch_size > 0 ? static_cast<std::size_t>(options.batch_size)
                                                     : n;

    for (int epoch = 0; epoch < options.epochs; ++epoch) {
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < n; start += batch) {
            const std::size_t stop = std::min(n, start + batch);
            std::vector<Tensor> grad;
            grad.reserve(current.parameters().size());
            for (const Tensor& p : current.parameters()) grad.emplace_back(p.shape());

            for (std::size_t s = start; s < stop; ++s) {
                ForwardTrace trace = current.forward(dataset.samples[s]);
                SampleLoss loss = build_loss(current, trace, dataset.samples[s], options);
                if (!std::isfinite(loss.loss)) throw NumericError("training loss diverged");
                epoch_loss += loss.loss;
                Gradients grads = trace.tape->gradient(loss.node, 0);
                for (std::size_t p = 0; p < grad.size(); ++p) {
                    if (const Tensor* g = grads.find(trace.param_nodes[p])) {
                        for (std::size_t i = 0; i < grad[p].size(); ++i) grad[p][i] += (*g)[i];
                    }
                }
            }

            const double step = options.learning_rate / static_cast<double>(stop - start);
            std::vector<Tensor>& params = current.mutable_parameters();
            for (std::size_t p = 0; p < params.size(); ++p)
                for (std::size_t i = 0; i < params[p].size(); ++i)
                    params[p][i] -= step * grad[p][i];
        }
        result.epoch_loss.push_back(epoch_loss / static_cast<double>(n));
    }

    result.model = current;
    result.accuracy = evaluate_accuracy(current, dataset);
    return result;
}

} // namespace attnrel
