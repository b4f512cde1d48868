#pragma once

#include <string>

#include "mcqa/tensor.hpp"

namespace mcqa {

// Named-tensor archive shared by both models. Plain text with hexfloat
// values, so round-trips are bit-exact and files are diffable. The manifest
// is an opaque single-line string (JSON in practice) recording config and
// RNG provenance.
void save_checkpoint(const ParamStore& store, const std::string& manifest,
                     const std::string& path);

struct Checkpoint {
    ParamStore params;
    std::string manifest;
};

Checkpoint load_checkpoint(const std::string& path);

}  // namespace mcqa
