#pragma once

#include <map>
#include <string>
#include <vector>

#include "xlir/array.hpp"

namespace xlir {

// Serialized model state. Ordered maps keep the JSON output deterministic.
struct Checkpoint {
    std::string arch;  // "knrm", "convknrm" or "matchpyramid"
    std::vector<double> mu;
    std::vector<double> sigma;
    std::map<std::string, numeric::Array> params;
    std::map<std::string, double> meta_num;
    std::map<std::string, std::string> meta_str;
};

inline constexpr int kCheckpointVersion = 1;

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);

// Throws ParseError on malformed files (bad tag, unknown arch, shape/data
// mismatch, non-finite values).
Checkpoint load_checkpoint(const std::string& path);

}  // namespace xlir
