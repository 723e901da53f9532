#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "rphoc/imaging.hpp"
#include "rphoc/model.hpp"
#include "rphoc/phoc.hpp"
#include "rphoc/proposals.hpp"
#include "rphoc/retrieval.hpp"
#include "rphoc/synth.hpp"
#include "rphoc/training.hpp"

namespace rphoc {

struct ProposalConfig {
  int max_run = 8;
  FilterConfig features;  // avg sizes are learned from data
  FilterTrainConfig train;
  double threshold = 0.0;
};

struct RetrievalConfig {
  EvalOptions eval;
  // Boxes outside every tile are embedded from a tile-sized crop around them.
  bool fallback_crop = true;
};

struct PipelineConfig {
  std::uint64_t seed = 1;
  int fold_bins = 4;
  ImagingConfig imaging;
  ProposalConfig proposals;
  PhocConfig phoc;
  Architecture arch = Architecture::desk_default();
  TrainConfig train;
  RetrievalConfig retrieval;
  SynthSpec synth;

  // Propagates `seed` into every seeded sub-config.
  void apply_seed(std::uint64_t s);
  void validate() const;
  std::string to_json() const;
};

// Missing keys keep their defaults; unknown keys are rejected.
PipelineConfig parse_config(const std::string& text, bool toml);
// `.toml` parsed as TOML, anything else as JSON.
PipelineConfig load_config(const std::filesystem::path& path);

}  // namespace rphoc
