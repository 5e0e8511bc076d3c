#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "attnrel/baselines.hpp"
#include "attnrel/dataset.hpp"
#include "attnrel/errors.hpp"
#include "attnrel/eval.hpp"
#include "attnrel/explain.hpp"
#include "attnrel/io.hpp"
#include "attnrel/log.hpp"
#include "attnrel/parallel.hpp"
#include "attnrel/relevancy.hpp"
#include "attnrel/segmask.hpp"
#include "attnrel/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace attnrel;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;

std::vector<MethodId> parse_methods(const std::vector<std::string>& names) {
    std::vector<MethodId> methods;
    if (names.empty()) {
        methods = {MethodId::Ours, MethodId::RawAttention, MethodId::Rollout, MethodId::GradCam,
                   MethodId::TransAttrNoLrp};
    } else {
        for (const std::string& name : names) methods.push_back(method_from_string(name));
    }
    return methods;
}

Target parse_target(const std::string& spec, const ForwardTrace& trace, const Sample& sample) {
    if (spec.empty() || spec == "pred") return predicted_target(trace);
    if (spec == "label") return resolve_target(trace, sample, TargetMode::GroundTruth);
    const auto colon = spec.find(':');
    if (colon != std::string::npos) {
        return Target{std::stoi(spec.substr(0, colon)), std::stoi(spec.substr(colon + 1))};
    }
    return Target{-1, std::stoi(spec)};
}

int cmd_gen_data(const std::string& kind_name, std::uint64_t seed, int n, int grid,
                 const fs::path& out) {
    const TaskKind kind = task_kind_from_string(kind_name);
    Dataset dataset = kind == TaskKind::Vqa ? gen_vqa_task(seed, n)
                                            : gen_detection_task(seed, n, grid);
    save_dataset(out, dataset);
    std::cout << "wrote " << dataset.samples.size() << " samples to " << out.string() << "\n";
    return 0;
}

int cmd_train(const fs::path& config_path, const fs::path& data_path, const fs::path& out,
              std::optional<std::uint64_t> seed, TrainOptions options) {
    ModelConfig cfg = load_config(config_path);
    if (seed) cfg.seed = *seed;
    Dataset dataset = load_dataset(data_path);
    Model model(cfg);
    TrainResult result = train(model, dataset, options);
    save_checkpoint(out, result.model);
    std::printf("train_accuracy %.6f\n", result.accuracy);
    return 0;
}

int cmd_explain(const fs::path& ckpt, const fs::path& data_path, int index,
                const std::string& method_name, const std::string& variant_name,
                const std::string& target_spec, std::uint64_t seed, const fs::path& out) {
    Model model = load_checkpoint(ckpt);
    Dataset dataset = load_dataset(data_path);
    if (index < 0 || static_cast<std::size_t>(index) >= dataset.samples.size())
        throw RejectedInput("sample index out of range");
    const Sample& sample = dataset.samples[static_cast<std::size_t>(index)];

    const MethodId method = method_from_string(method_name);
    const AblationVariant variant = ablation_from_string(variant_name);
    if (model.config().architecture == Architecture::EncoderDecoder &&
        dataset.kind != TaskKind::Detection)
        throw ConfigError("encoder_decoder checkpoints need a detection dataset");

    ForwardTrace probe = model.forward(sample);
    const Target target = parse_target(target_spec, probe, sample);
    Explanation explanation = explain(model, sample, method, variant, target);

    fs::create_directories(out);
    write_text_file(out / "relevancy.json",
                    relevancy_dump_json(explanation, model.config(), method, variant, seed));
    if (!explanation.tokens.text.empty())
        write_pgm(out / "text_scores.pgm", explanation.tokens.text, 1,
                  static_cast<int>(explanation.tokens.text.size()));
    if (!explanation.tokens.image.empty()) {
        const int n = static_cast<int>(explanation.tokens.image.size());
        const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(n))));
        const bool square = side * side == n;
        write_pgm(out / "image_scores.pgm", explanation.tokens.image, square ? side : 1,
                  square ? side : n);
    }
    std::cout << "wrote explanation to " << out.string() << "\n";
    return 0;
}

int cmd_eval_perturb(const fs::path& ckpt, const fs::path& data_path,
                     const std::vector<std::string>& method_names, const std::string& target_spec,
                     int steps, int workers, std::uint64_t seed, const fs::path& out) {
    Model model = load_checkpoint(ckpt);
    Dataset dataset = load_dataset(data_path);
    EvalOptions options;
    options.steps = steps;
    options.workers = workers;
    options.target_mode =
        target_spec == "label" ? TargetMode::GroundTruth : TargetMode::Predicted;

    CompareReport report = compare_report(model, dataset, parse_methods(method_names), options);
    fs::create_directories(out);
    write_text_file(out / "report.json", compare_report_json(report, model.config(), seed));
    for (const PerturbationCurve& curve : report.curves) {
        const std::string name = "curve_" + curve.method + "_" + to_string(curve.modality) + "_" +
                                 to_string(curve.polarity) + ".csv";
        write_text_file(out / name, curve_csv(curve));
    }
    std::cout << "wrote perturbation report to " << out.string() << "\n";
    return 0;
}

// Relevance rows for every decoder query; gradient methods differentiate each
// query's top-class logit.
Tensor query_relevance_rows(const Model& model, const Sample& sample, MethodId method,
                            AblationVariant variant) {
    const int queries = model.config().queries;
    const int cells = model.config().image_tokens;
    Tensor rows({static_cast<std::size_t>(queries), static_cast<std::size_t>(cells)});

    const bool gradient_free = method == MethodId::RawAttention || method == MethodId::Rollout;
    if (gradient_free) {
        ForwardTrace trace = model.forward(sample);
        RelevancyState state = method_relevancy(trace, method, variant);
        for (int q = 0; q < queries; ++q) {
            const std::vector<double> row = extract_query(state, q);
            for (int c = 0; c < cells; ++c) rows(q, c) = row[static_cast<std::size_t>(c)];
        }
        return rows;
    }

    ForwardTrace probe = model.forward(sample);
    for (int q = 0; q < queries; ++q) {
        std::size_t best = 1;
        for (std::size_t c = 1; c < probe.logits.dim(1); ++c)
            if (probe.logits(static_cast<std::size_t>(q), c) >
                probe.logits(static_cast<std::size_t>(q), best))
                best = c;
        const Target target{q, static_cast<int>(best)};
        ForwardTrace trace = model.forward(sample);
        backward_fill(trace, target);
        RelevancyState state = method_relevancy(trace, method, variant);
        const std::vector<double> row = extract_query(state, q);
        for (int c = 0; c < cells; ++c) rows(q, c) = row[static_cast<std::size_t>(c)];
    }
    return rows;
}

int cmd_eval_seg(const fs::path& ckpt, const fs::path& data_path,
                 const std::vector<std::string>& method_names, int mask_size, int orig_size,
                 double iou_threshold, int workers, std::uint64_t seed, const fs::path& out) {
    Model model = load_checkpoint(ckpt);
    if (model.config().architecture != Architecture::EncoderDecoder)
        throw ConfigError("eval-seg needs an encoder_decoder checkpoint");
    Dataset dataset = load_dataset(data_path);
    if (dataset.kind != TaskKind::Detection)
        throw ConfigError("eval-seg needs a detection dataset");
    const int grid = dataset.grid;

    SegMaskOptions mask_options;
    mask_options.target_mask_size = mask_size;
    mask_options.original_size = orig_size;
    mask_options.background_class = 0;
    const int original = orig_size > 0 ? orig_size : 8 * grid;

    const std::vector<MethodId> methods = parse_methods(method_names);
    json method_results;
    fs::create_directories(out);
    json index = json::array();

    for (MethodId method : methods) {
        std::vector<SegEvalItem> items(dataset.samples.size());
        std::vector<double> iou_sums(dataset.samples.size(), 0.0);
        std::vector<int> iou_counts(dataset.samples.size(), 0);
        std::vector<int> mask_counts(dataset.samples.size(), 0);

        parallel_for(dataset.samples.size(), workers, [&](std::size_t s) {
            const Sample& sample = dataset.samples[s];
            const Tensor rows = query_relevance_rows(model, sample, method,
                                                     AblationVariant::Full);
            ForwardTrace trace = model.forward(sample);
            SegEvalItem item;
            item.predictions = build_masks(rows, trace.logits, grid, mask_options);
            for (const DetObject& obj : sample.objects) {
                GroundTruthMask gt;
                gt.class_id = obj.cls;
                gt.size = original;
                gt.mask = upsample_nearest(obj.mask, grid, original);
                gt.area_cells = 0.0;
                for (std::uint8_t bit : obj.mask) gt.area_cells += bit;
                item.ground_truth.push_back(std::move(gt));
            }
            mask_counts[s] = static_cast<int>(item.predictions.size());
            for (const SegMask& pred : item.predictions) {
                for (std::size_t g = 0; g < item.ground_truth.size(); ++g) {
                    if (sample.objects[g].query == pred.query) {
                        iou_sums[s] += mask_iou(pred.mask, item.ground_truth[g].mask);
                        iou_counts[s] += 1;
                    }
                }
            }
            items[s] = std::move(item);
        });

        ApArOptions ap_options;
        ap_options.iou_threshold = iou_threshold;
        const ApArReport ap = ap_ar(items, ap_options);

        double iou_sum = 0.0;
        int iou_count = 0, mask_count = 0;
        for (std::size_t s = 0; s < items.size(); ++s) {
            iou_sum += iou_sums[s];
            iou_count += iou_counts[s];
            mask_count += mask_counts[s];
        }

        const std::string name = to_string(method);
        method_results[name] = json{
            {"mean_iou", iou_count > 0 ? iou_sum / iou_count : 0.0},
            {"matched_queries", iou_count},
            {"masks", mask_count},
            {"ap", ap.all.ap},
            {"ar", ap.all.ar},
            {"ap_medium", ap.medium.ap},
            {"ar_medium", ap.medium.ar},
            {"ap_large", ap.large.ap},
            {"ar_large", ap.large.ar},
        };

        const fs::path mask_dir = out / "masks" / name;
        fs::create_directories(mask_dir);
        for (std::size_t s = 0; s < items.size(); ++s) {
            for (const SegMask& pred : items[s].predictions) {
                char file[64];
                std::snprintf(file, sizeof(file), "sample%04zu_query%d.pgm", s, pred.query);
                write_pgm_mask(mask_dir / file, pred.mask, pred.size, pred.size);
                index.push_back(json{{"method", name},
                                     {"sample", s},
                                     {"query", pred.query},
                                     {"class", pred.class_id},
                                     {"probability", pred.probability},
                                     {"file", std::string("masks/") + name + "/" + file}});
            }
        }
    }

    json report{{"tool_version", kToolVersion},
                {"config_hash", config_hash(model.config())},
                {"seed", seed},
                {"iou_threshold", iou_threshold},
                {"methods", method_results}};
    write_text_file(out / "report.json", report.dump(2) + "\n");
    write_text_file(out / "masks_index.json", index.dump(2) + "\n");
    std::cout << "wrote segmentation report to " << out.string() << "\n";
    return 0;
}

int cmd_ablate(const fs::path& ckpt, const fs::path& data_path, int steps, int workers,
               std::uint64_t seed, const fs::path& out) {
    Model model = load_checkpoint(ckpt);
    Dataset dataset = load_dataset(data_path);
    EvalOptions options;
    options.steps = steps;
    options.workers = workers;

    CompareReport report = ablation_report(model, dataset, options);
    fs::create_directories(out);
    write_text_file(out / "report.json", compare_report_json(report, model.config(), seed));

    std::printf("%-26s %9s %9s %9s %9s %9s\n", "variant", "neg_img", "pos_img", "neg_text",
                "pos_text", "hit_rate");
    for (const auto& [name, scores] : report.rows)
        std::printf("%-26s %9.4f %9.4f %9.4f %9.4f %9.4f\n", name.c_str(), scores.neg_img,
                    scores.pos_img, scores.neg_text, scores.pos_text, scores.hit_rate());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"attention relevancy toolkit"};
    app.require_subcommand(1);

    std::string kind = "vqa", method = "ours", variant = "full", target = "pred";
    std::vector<std::string> methods;
    std::string config_path, data_path, ckpt_path, out_path;
    std::uint64_t seed = 7;
    bool seed_given = false;
    int n = 1000, grid = 6, index = 0, steps = 11, workers = 1;
    int mask_size = 0, orig_size = 0;
    TrainOptions train_options;
    double iou_threshold = 0.2;

    auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
    gen->add_option("--kind", kind, "vqa or detect");
    gen->add_option("--seed", seed, "generator seed");
    gen->add_option("--n", n, "sample count");
    gen->add_option("--grid", grid, "detection grid side");
    gen->add_option("--out", out_path, "output JSONL path")->required();

    auto* tr = app.add_subcommand("train", "train a model on a dataset");
    tr->add_option("--config", config_path, "model config JSON")->required();
    tr->add_option("--data", data_path, "dataset JSONL")->required();
    tr->add_option("--out", out_path, "checkpoint path")->required();
    tr->add_option("--seed", seed, "override the config seed")->each([&](const std::string&) {
        seed_given = true;
    });
    tr->add_option("--epochs", train_options.epochs, "training epochs");
    tr->add_option("--lr", train_options.learning_rate, "learning rate");
    tr->add_option("--batch", train_options.batch_size, "minibatch size");

    auto* ex = app.add_subcommand("explain", "explain one sample");
    ex->add_option("--ckpt", ckpt_path, "checkpoint path")->required();
    ex->add_option("--data", data_path, "dataset JSONL")->required();
    ex->add_option("--index", index, "sample index");
    ex->add_option("--method", method, "attribution method");
    ex->add_option("--variant", variant, "ablation variant");
    ex->add_option("--target", target, "pred, label, class id, or query:class");
    ex->add_option("--seed", seed, "seed recorded in outputs");
    ex->add_option("--out", out_path, "output directory")->required();

    auto* ep = app.add_subcommand("eval-perturb", "perturbation AUC evaluation");
    ep->add_option("--ckpt", ckpt_path, "checkpoint path")->required();
    ep->add_option("--data", data_path, "dataset JSONL")->required();
    ep->add_option("--method", methods, "methods to evaluate (default: all)");
    ep->add_option("--target", target, "pred or label");
    ep->add_option("--steps", steps, "fraction grid size");
    ep->add_option("--workers", workers, "sample-level parallelism");
    ep->add_option("--seed", seed, "seed recorded in outputs");
    ep->add_option("--out", out_path, "output directory")->required();

    auto* es = app.add_subcommand("eval-seg", "segmentation mask evaluation");
    es->add_option("--ckpt", ckpt_path, "checkpoint path")->required();
    es->add_option("--data", data_path, "dataset JSONL")->required();
    es->add_option("--method", methods, "methods to evaluate (default: all)");
    es->add_option("--mask-size", mask_size, "target mask size (default 4x grid)");
    es->add_option("--orig-size", orig_size, "original image size (default 8x grid)");
    es->add_option("--iou", iou_threshold, "matching IoU threshold");
    es->add_option("--workers", workers, "sample-level parallelism");
    es->add_option("--seed", seed, "seed recorded in outputs");
    es->add_option("--out", out_path, "output directory")->required();

    auto* ab = app.add_subcommand("ablate", "compare ablation variants");
    ab->add_option("--ckpt", ckpt_path, "checkpoint path")->required();
    ab->add_option("--data", data_path, "dataset JSONL")->required();
    ab->add_option("--steps", steps, "fraction grid size");
    ab->add_option("--workers", workers, "sample-level parallelism");
    ab->add_option("--seed", seed, "seed recorded in outputs");
    ab->add_option("--out", out_path, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(kind, seed, n, grid, out_path);
        if (tr->parsed())
            return cmd_train(config_path, data_path, out_path,
                             seed_given ? std::optional<std::uint64_t>(seed) : std::nullopt,
                             train_options);
        if (ex->parsed())
            return cmd_explain(ckpt_path, data_path, index, method, variant, target, seed,
                               out_path);
        if (ep->parsed())
            return cmd_eval_perturb(ckpt_path, data_path, methods, target, steps, workers, seed,
                                    out_path);
        if (es->parsed())
            return cmd_eval_seg(ckpt_path, data_path, methods, mask_size, orig_size,
                                iou_threshold, workers, seed, out_path);
        if (ab->parsed()) return cmd_ablate(ckpt_path, data_path, steps, workers, seed, out_path);
    } catch (const ConfigError& e) {
        log::error(e.what());
        return kExitConfig;
    } catch (const RejectedInput& e) {
        log::error(e.what());
        return kExitConfig;
    } catch (const TraceError& e) {
        log::error(e.what());
        return kExitConfig;
    } catch (const IoError& e) {
        log::error(e.what());
        return kExitIo;
    } catch (const NumericError& e) {
        log::error(e.what());
        return kExitNumeric;
    } catch (const std::exception& e) {
        log::error(e.what());
        return 1;
    }
    return 0;
}
