#pragma once

// Checkpoint container:
//   "SEMPCKPT" | uint64 LE header length | JSON header | float64 LE payload
// The header holds format version, model dimensions and mode, vocabularies,
// pipeline options and lexicon, decoding caps, the training config echo, the
// seed, and for each tensor its name, shape, payload offset (in values) and
// the CRC-32 of its bytes. Tensors are stored row-major in
// ModelParameters::parameters() order.

#include <cstdint>
#include <string>

#include "json.hpp"
#include "semparse/parser.hpp"

namespace semparse {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  Parser parser;
  nlohmann::json config;  // training config echo, may be null
  std::uint64_t seed = 0;
};

std::string serialize_checkpoint(const Parser& parser, const nlohmann::json& config,
                                 std::uint64_t seed);
/// Throws DataError on a malformed, truncated or corrupted container.
Checkpoint deserialize_checkpoint(std::string_view bytes);

void save_checkpoint(const std::string& path, const Parser& parser,
                     const nlohmann::json& config, std::uint64_t seed);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace semparse
