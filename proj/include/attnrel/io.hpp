#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "attnrel/dataset.hpp"
#include "attnrel/eval.hpp"
#include "attnrel/explain.hpp"
#include "attnrel/model.hpp"
#include "attnrel/segmask.hpp"

namespace attnrel {

inline constexpr const char* kToolVersion = "0.1.0";

// Model config <-> JSON object (architecture, sizes, seed).
std::string config_to_json(const ModelConfig& config);
ModelConfig config_from_json(const std::string& text);
ModelConfig load_config(const std::filesystem::path& path);

// FNV-1a over the canonical config JSON, as 16 hex digits.
std::string config_hash(const ModelConfig& config);

// Versioned checkpoint: config plus the flat parameter vector.
void save_checkpoint(const std::filesystem::path& path, const Model& model);
Model load_checkpoint(const std::filesystem::path& path);

// JSON lines, one sample per line.
void save_dataset(const std::filesystem::path& path, const Dataset& dataset);
Dataset load_dataset(const std::filesystem::path& path);

// Relevancy dump: metadata plus map name -> nested row arrays.
std::string relevancy_dump_json(const Explanation& explanation, const ModelConfig& config,
                                MethodId method, AblationVariant variant, std::uint64_t seed);

// 8-bit binary PGM (P5), values scaled so the map's max is white. A constant
// map renders black.
void write_pgm(const std::filesystem::path& path, const std::vector<double>& values, int rows,
               int cols);
void write_pgm_mask(const std::filesystem::path& path, const std::vector<std::uint8_t>& mask,
                    int rows, int cols);

void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

std::string curve_csv(const PerturbationCurve& curve);
std::string compare_report_json(const CompareReport& report, const ModelConfig& config,
                                std::uint64_t seed);

} // namespace attnrel
