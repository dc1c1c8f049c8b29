#pragma once

#include <string>

#include "spanrec/model.hpp"

namespace spanrec {

// Binary checkpoint: magic + version tag, config digest string, training
// seed, the ModelConfig, then each named parameter tensor as a shape header
// followed by row-major 64-bit floats. Save -> load round-trips bit-exactly.
void save_checkpoint(const std::string& path, const Model& model, const std::string& config_digest,
                     std::uint64_t seed);

struct LoadedCheckpoint {
    Model model;
    std::string config_digest;
    std::uint64_t seed = 0;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace spanrec
