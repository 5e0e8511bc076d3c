#include "attnrel/io.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "attnrel/errors.hpp"

namespace attnrel {

using nlohmann::json;

namespace {

json config_json(const ModelConfig& cfg) {
    return json{{"architecture", to_string(cfg.architecture)},
                {"layers", cfg.layers},
                {"heads", cfg.heads},
                {"head_dim", cfg.head_dim},
                {"text_tokens", cfg.text_tokens},
                {"image_tokens", cfg.image_tokens},
                {"queries", cfg.queries},
                {"classes", cfg.classes},
                {"text_vocab", cfg.text_vocab},
                {"image_vocab", cfg.image_vocab},
                {"seed", cfg.seed}};
}

ModelConfig config_from(const json& j) {
    ModelConfig cfg;
    cfg.architecture = architecture_from_string(j.at("architecture").get<std::string>());
    cfg.layers = j.at("layers").get<int>();
    cfg.heads = j.at("heads").get<int>();
    cfg.head_dim = j.at("head_dim").get<int>();
    cfg.text_tokens = j.at("text_tokens").get<int>();
    cfg.image_tokens = j.at("image_tokens").get<int>();
    cfg.queries = j.value("queries", 0);
    cfg.classes = j.at("classes").get<int>();
    cfg.text_vocab = j.at("text_vocab").get<int>();
    cfg.image_vocab = j.at("image_vocab").get<int>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.validate();
    return cfg;
}

json parse(const std::string& text, const char* what) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) throw IoError(std::string("malformed JSON in ") + what);
    return j;
}

} // namespace

std::string config_to_json(const ModelConfig& config) { return config_json(config).dump(); }

ModelConfig config_from_json(const std::string& text) {
    return config_from(parse(text, "model config"));
}

ModelConfig load_config(const std::filesystem::path& path) {
    return config_from_json(read_text_file(path));
}

std::string config_hash(const ModelConfig& config) {
    const std::string text = config_to_json(config);
    std::uint64_t hash = 0xcbf29ce484222325ull;
    for (unsigned char c : text) {
        hash ^= c;
        hash *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
    return buf;
}

void save_checkpoint(const std::filesystem::path& path, const Model& model) {
    json j{{"format_version", 1},
           {"tool_version", kToolVersion},
           {"config", config_json(model.config())},
           {"params", model.flat_parameters()}};
    write_text_file(path, j.dump() + "\n");
}

Model load_checkpoint(const std::filesystem::path& path) {
    json j = parse(read_text_file(path), "checkpoint");
    if (j.value("format_version", 0) != 1) throw IoError("unsupported checkpoint version");
    Model model(config_from(j.at("config")));
    model.set_flat_parameters(j.at("params").get<std::vector<double>>());
    return model;
}

namespace {

json sample_json(const Sample& sample, TaskKind kind) {
    json j;
    if (kind == TaskKind::Vqa) {
        j["text"] = sample.text;
        j["image"] = sample.image;
        j["label"] = sample.label;
        j["gt"] = json{{"text", sample.designated_text}, {"image", sample.designated_image}};
    } else {
        j["image"] = sample.image;
        json objs = json::array();
        for (const DetObject& obj : sample.objects) {
            std::string bits(obj.mask.size(), '0');
            for (std::size_t i = 0; i < obj.mask.size(); ++i)
                if (obj.mask[i]) bits[i] = '1';
            objs.push_back(json{{"query", obj.query},
                                {"class", obj.cls},
                                {"box", {obj.r0, obj.c0, obj.r1, obj.c1}},
                                {"mask", bits}});
        }
        j["objects"] = objs;
    }
    return j;
}

Sample sample_from(const json& j) {
    Sample sample;
    if (j.contains("text")) sample.text = j.at("text").get<std::vector<int>>();
    sample.image = j.at("image").get<std::vector<int>>();
    sample.label = j.value("label", -1);
    if (j.contains("gt")) {
        sample.designated_text = j.at("gt").value("text", -1);
        sample.designated_image = j.at("gt").value("image", -1);
    }
    if (j.contains("objects")) {
        for (const json& o : j.at("objects")) {
            DetObject obj;
            obj.query = o.at("query").get<int>();
            obj.cls = o.at("class").get<int>();
            const auto box = o.at("box").get<std::vector<int>>();
            if (box.size() != 4) throw IoError("object box must have 4 entries");
            obj.r0 = box[0];
            obj.c0 = box[1];
            obj.r1 = box[2];
            obj.c1 = box[3];
            const std::string bits = o.at("mask").get<std::string>();
            obj.mask.resize(bits.size());
            for (std::size_t i = 0; i < bits.size(); ++i) obj.mask[i] = bits[i] == '1' ? 1 : 0;
            sample.objects.push_back(std::move(obj));
        }
    }
    return sample;
}

} // namespace

void save_dataset(const std::filesystem::path& path, const Dataset& dataset) {
    std::ostringstream out;
    for (const Sample& sample : dataset.samples)
        out << sample_json(sample, dataset.kind).dump() << "\n";
    write_text_file(path, out.str());
}

Dataset load_dataset(const std::filesystem::path& path) {
    const std::string text = read_text_file(path);
    Dataset dataset;
    bool first = true;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = parse(line, "dataset line");
        if (first) {
            dataset.kind = j.contains("objects") ? TaskKind::Detection : TaskKind::Vqa;
            first = false;
        }
        dataset.samples.push_back(sample_from(j));
    }
    if (dataset.samples.empty()) throw IoError("dataset file has no samples");
    if (dataset.kind == TaskKind::Detection) {
        const auto cells = dataset.samples.front().image.size();
        dataset.grid = static_cast<int>(std::lround(std::sqrt(static_cast<double>(cells))));
        if (static_cast<std::size_t>(dataset.grid) * dataset.grid != cells)
            throw IoError("detection images must be square grids");
    }
    return dataset;
}

namespace {

json matrix_json(const Tensor& m) {
    json rows = json::array();
    for (std::size_t r = 0; r < m.dim(0); ++r) {
        json row = json::array();
        for (std::size_t c = 0; c < m.dim(1); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

} // namespace

std::string relevancy_dump_json(const Explanation& explanation, const ModelConfig& config,
                                MethodId method, AblationVariant variant, std::uint64_t seed) {
    json maps;
    for (const auto& [name, tensor] : explanation.state.maps()) maps[name] = matrix_json(*tensor);
    json target{{"class", explanation.target.cls}};
    if (explanation.target.is_detection()) target["query"] = explanation.target.query;
    json j{{"tool_version", kToolVersion},
           {"config_hash", config_hash(config)},
           {"seed", seed},
           {"architecture", to_string(config.architecture)},
           {"method", to_string(method)},
           {"variant", to_string(variant)},
           {"target", target},
           {"maps", maps},
           {"text_scores", explanation.tokens.text},
           {"image_scores", explanation.tokens.image}};
    return j.dump(2) + "\n";
}

void write_pgm(const std::filesystem::path& path, const std::vector<double>& values, int rows,
               int cols) {
    if (values.size() != static_cast<std::size_t>(rows) * cols)
        throw RejectedInput("write_pgm: size mismatch");
    const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
    const double lo = values.empty() ? 0.0 : *mn;
    const double range = values.empty() ? 0.0 : *mx - lo;
    std::string bytes;
    bytes.reserve(values.size());
    for (double v : values) {
        const double unit = range > 0.0 ? (v - lo) / range : 0.0;
        bytes.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(unit * 255.0))));
    }
    std::ostringstream out;
    out << "P5\n" << cols << " " << rows << "\n255\n" << bytes;
    write_text_file(path, out.str());
}

void write_pgm_mask(const std::filesystem::path& path, const std::vector<std::uint8_t>& mask,
                    int rows, int cols) {
    std::vector<double> values(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) values[i] = mask[i] ? 255.0 : 0.0;
    write_pgm(path, values, rows, cols);
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << text;
    if (!out) throw IoError("write failed: " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::string curve_csv(const PerturbationCurve& curve) {
    std::ostringstream out;
    out << "fraction,accuracy\n";
    for (std::size_t i = 0; i < curve.fractions.size(); ++i) {
        char line[64];
        std::snprintf(line, sizeof(line), "%.12g,%.12g\n", curve.fractions[i],
                      curve.accuracy[i]);
        out << line;
    }
    return out.str();
}

std::string compare_report_json(const CompareReport& report, const ModelConfig& config,
                                std::uint64_t seed) {
    json methods;
    for (const auto& [name, scores] : report.rows) {
        methods[name] = json{{"neg_img", scores.neg_img},
                             {"pos_img", scores.pos_img},
                             {"neg_text", scores.neg_text},
                             {"pos_text", scores.pos_text},
                             {"hit_rate", scores.hit_rate()},
                             {"hit_rate_text", scores.hit_rate_text},
                             {"hit_rate_image", scores.hit_rate_image}};
    }
    json j{{"tool_version", kToolVersion},
           {"config_hash", config_hash(config)},
           {"seed", seed},
           {"steps", report.options.steps},
           {"target", report.options.target_mode == TargetMode::Predicted ? "predicted"
                                                                          : "ground_truth"},
           {"methods", methods}};
    return j.dump(2) + "\n";
}

} // namespace attnrel
