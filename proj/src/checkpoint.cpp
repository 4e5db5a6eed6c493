#include "xlir/checkpoint.hpp"

#include <fstream>

#include <json.hpp>

#include "xlir/common.hpp"

namespace xlir {

namespace {

using ordered = nlohmann::json;  // nlohmann::json sorts object keys

bool known_arch(const std::string& arch) {
    return arch == "knrm" || arch == "convknrm" || arch == "matchpyramid";
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    if (!known_arch(ckpt.arch)) {
        throw ContractError("save_checkpoint: unknown arch '" + ckpt.arch + "'");
    }
    ordered j;
    j["format"] = "reranker-checkpoint";
    j["version"] = kCheckpointVersion;
    j["arch"] = ckpt.arch;
    j["kernel_bank"]["mu"] = ckpt.mu;
    j["kernel_bank"]["sigma"] = ckpt.sigma;
    ordered params = ordered::object();
    for (const auto& [name, arr] : ckpt.params) {
        params[name]["shape"] = arr.shape();
        params[name]["data"] = arr.vec();
    }
    j["params"] = std::move(params);
    j["meta_num"] = ckpt.meta_num;
    j["meta_str"] = ckpt.meta_str;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ContractError("save_checkpoint: cannot open " + path + " for writing");
    out << j.dump(2) << '\n';
    if (!out) throw ContractError("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(path, 0, "cannot open checkpoint");
    ordered j;
    try {
        in >> j;
    } catch (const ordered::parse_error& e) {
        throw ParseError(path, 0, std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object() || j.value("format", "") != "reranker-checkpoint") {
        throw ParseError(path, 0, "not a checkpoint file");
    }
    if (j.value("version", -1) != kCheckpointVersion) {
        throw ParseError(path, 0, "unsupported checkpoint version");
    }
    Checkpoint ckpt;
    ckpt.arch = j.value("arch", "");
    if (!known_arch(ckpt.arch)) {
        throw ParseError(path, 0, "unknown arch '" + ckpt.arch + "'");
    }
    try {
        const ordered& bank = j.at("kernel_bank");
        ckpt.mu = bank.at("mu").get<std::vector<double>>();
        ckpt.sigma = bank.at("sigma").get<std::vector<double>>();
        if (ckpt.mu.size() != ckpt.sigma.size()) {
            throw ParseError(path, 0, "kernel bank mu/sigma length mismatch");
        }
        for (const auto& [name, entry] : j.at("params").items()) {
            auto shape = entry.at("shape").get<std::vector<std::int64_t>>();
            auto data = entry.at("data").get<std::vector<double>>();
            if (numeric::shape_size(shape) != static_cast<std::int64_t>(data.size())) {
                throw ParseError(path, 0, "parameter '" + name + "' shape/data size mismatch");
            }
            numeric::Array arr(std::move(shape), std::move(data));
            if (!arr.all_finite()) {
                throw ParseError(path, 0, "parameter '" + name + "' has non-finite values");
            }
            ckpt.params.emplace(name, std::move(arr));
        }
        if (j.contains("meta_num")) {
            ckpt.meta_num = j.at("meta_num").get<std::map<std::string, double>>();
        }
        if (j.contains("meta_str")) {
            ckpt.meta_str = j.at("meta_str").get<std::map<std::string, std::string>>();
        }
    } catch (const ordered::exception& e) {
        throw ParseError(path, 0, std::string("malformed checkpoint: ") + e.what());
    }
    return ckpt;
}

}  // namespace xlir
