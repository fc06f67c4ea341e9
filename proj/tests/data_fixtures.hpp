#pragma once

// Shipped dataset helpers shared by the unit tests and the acceptance binary.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "semparse/lf_tree.hpp"
#include "semparse/pipeline.hpp"

namespace fixtures {

inline std::filesystem::path data_dir() {
  if (const char* env = std::getenv("SEMPARSE_DATA_DIR"); env && *env) return env;
  return SEMPARSE_SOURCE_DATA_DIR;
}

struct DatasetInfo {
  std::string name;
  semparse::LfFormat format;
};

inline const std::vector<DatasetInfo>& shipped_datasets() {
  static const std::vector<DatasetInfo> all{
      {"jobs", semparse::LfFormat::kProlog},
      {"geo", semparse::LfFormat::kBracket},
      {"atis", semparse::LfFormat::kBracket},
  };
  return all;
}

/// Every example file of a dataset directory (all .tsv except the lexicon).
inline std::vector<std::filesystem::path> example_files(const std::string& name) {
  std::vector<std::filesystem::path> out;
  const auto dir = data_dir() / name;
  if (!std::filesystem::is_directory(dir)) return out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.path().extension() == ".tsv" && e.path().filename() != "lexicon.tsv") {
      out.push_back(e.path());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline semparse::Pipeline dataset_pipeline(const DatasetInfo& info) {
  semparse::PipelineOptions options;
  options.lf_format = info.format;
  return semparse::Pipeline(
      options,
      semparse::ArgumentLexicon::load((data_dir() / info.name / "lexicon.tsv").string()));
}

struct RoundTripReport {
  int examples = 0;
  std::vector<std::string> failures;
};

/// Text round trip, level-sequence round trip and mask/unmask round trip on
/// every example of every file of the dataset.
inline RoundTripReport round_trip_dataset(const DatasetInfo& info) {
  using namespace semparse;
  RoundTripReport report;
  const Pipeline pipeline = dataset_pipeline(info);
  for (const auto& path : example_files(info.name)) {
    for (const RawExample& raw : load_dataset(path.string())) {
      ++report.examples;
      const std::string where = path.filename().string() + ":" + std::to_string(raw.line);
      try {
        const LfTree tree = pipeline.parse_gold(raw.logical_form);
        if (pipeline.render(tree) != raw.logical_form) {
          report.failures.push_back(where + " text: " + pipeline.render(tree));
          continue;
        }
        if (from_level_sequences(to_level_sequences(tree)) != tree) {
          report.failures.push_back(where + " level sequences");
          continue;
        }
        const ExamplePair pair = pipeline.prepare(raw);
        const Tokens masked = lf_tokens(pair.logical_form);
        const auto restored = pipeline.restore(masked, pair.input.masked.table);
        if (!restored.tree || pipeline.render(*restored.tree) != raw.logical_form) {
          report.failures.push_back(where + " mask/unmask");
        }
      } catch (const std::exception& e) {
        report.failures.push_back(where + " " + e.what());
      }
    }
  }
  return report;
}

}  // namespace fixtures
