// Copyright (c) 2026, The OffloadLab Authors
// SPDX-License-Identifier: Apache-2.0

#include "config.hpp"

#include <charconv>
#include <cstdlib>
#include <functional>
#include <map>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include "offloadlab/error.hpp"

namespace offloadlab::cli {

namespace {

std::uint64_t parse_unsigned(const std::string& key, const std::string& text) {
    std::uint64_t value = 0;
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc() || ptr != end) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("{}: '{}' is not a non-negative integer", key, text));
    }
    return value;
}

double parse_double(const std::string& key, const std::string& text) {
    try {
        std::size_t used = 0;
        const double value = std::stod(text, &used);
        if (used == text.size()) return value;
    } catch (const std::exception&) {
    }
    throw Error(ErrorCode::InvalidArgument, fmt::format("{}: '{}' is not a number", key, text));
}

bool parse_bool(const std::string& key, const std::string& text) {
    if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
    if (text == "false" || text == "0" || text == "no" || text == "off") return false;
    throw Error(ErrorCode::InvalidArgument, fmt::format("{}: '{}' is not a boolean", key, text));
}

using Setter = std::function<void(Config&, const std::string& key, const std::string& value)>;

struct Key {
    const char* name;
    const char* doc;
    Setter set;
};

template <typename T>
Setter unsigned_field(T Config::*field) {
    return [field](Config& c, const std::string& k, const std::string& v) {
        c.*field = static_cast<T>(parse_unsigned(k, v));
    };
}

const std::vector<Key>& keys() {
    static const std::vector<Key> table = {
        {"seed", "64-bit seed for data, initialization and benchmarks", unsigned_field(&Config::seed)},
        {"steps", "training steps", unsigned_field(&Config::steps)},
        {"dpu", "delayed parameter update on/off",
         [](Config& c, const std::string& k, const std::string& v) { c.dpu = parse_bool(k, v); }},
        {"dpu_after", "step at which the delayed update starts", unsigned_field(&Config::dpu_after)},
        {"overlap", "run the delayed host update on its own thread",
         [](Config& c, const std::string& k, const std::string& v) { c.overlap = parse_bool(k, v); }},
        {"model.kind", "linreg | logreg | mlp",
         [](Config& c, const std::string&, const std::string& v) { c.kind = parse_model_kind(v); }},
        {"model.features", "input dimension", unsigned_field(&Config::features)},
        {"model.hidden", "mlp hidden layer sizes, comma separated",
         [](Config& c, const std::string&, const std::string& v) { c.hidden = parse_size_list(v); }},
        {"model.outputs", "mlp output dimension", unsigned_field(&Config::outputs)},
        {"model.rows", "dataset rows", unsigned_field(&Config::rows)},
        {"model.batch_size", "rows per step, 0 for the whole dataset", unsigned_field(&Config::batch_size)},
        {"model.micro_batches", "gradient accumulation slices per step", unsigned_field(&Config::micro_batches)},
        {"model.params", "parameter count M for analyze", unsigned_field(&Config::params)},
        {"model.batch", "batch size B for analyze", unsigned_field(&Config::batch)},
        {"adam.alpha", "learning rate",
         [](Config& c, const std::string& k, const std::string& v) { c.adam.alpha = parse_double(k, v); }},
        {"adam.beta1", "first-moment decay",
         [](Config& c, const std::string& k, const std::string& v) { c.adam.beta1 = parse_double(k, v); }},
        {"adam.beta2", "second-moment decay",
         [](Config& c, const std::string& k, const std::string& v) { c.adam.beta2 = parse_double(k, v); }},
        {"adam.eps", "denominator epsilon",
         [](Config& c, const std::string& k, const std::string& v) { c.adam.eps = parse_double(k, v); }},
        {"tile.tile_width", "elements per write-back tile",
         [](Config& c, const std::string& k, const std::string& v) { c.tile.tile_width = parse_unsigned(k, v); }},
        {"tile.unroll_width", "lane groups per inner iteration",
         [](Config& c, const std::string& k, const std::string& v) { c.tile.unroll_width = parse_unsigned(k, v); }},
        {"tile.lane_width", "elements per lane group",
         [](Config& c, const std::string& k, const std::string& v) { c.tile.lane_width = parse_unsigned(k, v); }},
        {"tile.workers", "host optimizer threads",
         [](Config& c, const std::string& k, const std::string& v) { c.tile.worker_count = parse_unsigned(k, v); }},
        {"hardware.gpu_flops", "accelerator flop/s",
         [](Config& c, const std::string& k, const std::string& v) { c.hardware.gpu_flops = parse_double(k, v); }},
        {"hardware.cpu_flops", "host flop/s",
         [](Config& c, const std::string& k, const std::string& v) { c.hardware.cpu_flops = parse_double(k, v); }},
        {"hardware.pcie_bw", "host link bytes/s",
         [](Config& c, const std::string& k, const std::string& v) { c.hardware.pcie_bw = parse_double(k, v); }},
        {"hardware.cpu_mem_bw", "host memory bytes/s",
         [](Config& c, const std::string& k, const std::string& v) { c.hardware.cpu_mem_bw = parse_double(k, v); }},
    };
    return table;
}

const Key* find_key(const std::string& name) {
    for (const Key& k : keys()) {
        if (name == k.name) return &k;
    }
    return nullptr;
}

}  // namespace

ModelSpec Config::model_spec() const {
    switch (kind) {
        case ModelKind::LinearRegression: return ModelSpec::linear(features);
        case ModelKind::LogisticRegression: return ModelSpec::logistic(features);
        case ModelKind::Mlp: break;
    }
    std::vector<std::size_t> sizes{features};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(outputs);
    return ModelSpec::mlp(std::move(sizes));
}

Dataset Config::dataset() const {
    switch (kind) {
        case ModelKind::LinearRegression: return make_linear_dataset(rows, features, seed);
        case ModelKind::LogisticRegression: return make_blobs(rows, features, seed);
        case ModelKind::Mlp: break;
    }
    return make_regression_dataset(rows, features, outputs, seed);
}

std::vector<std::size_t> parse_size_list(const std::string& text) {
    std::vector<std::size_t> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        const std::size_t comma = std::min(text.find(',', start), text.size());
        std::string item = text.substr(start, comma - start);
        item.erase(0, item.find_first_not_of(' '));
        item.erase(item.find_last_not_of(' ') + 1);
        if (!item.empty()) out.push_back(static_cast<std::size_t>(parse_unsigned("size list", item)));
        start = comma + 1;
    }
    return out;
}

Config load_config(const std::string& path, Config base) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    try {
        pt::read_ini(path, tree);
    } catch (const pt::ini_parser_error& e) {
        const bool missing = e.line() == 0;
        throw Error(missing ? ErrorCode::IoError : ErrorCode::InvalidArgument, e.what());
    }
    for (const auto& [name, node] : tree) {
        if (node.empty()) {
            const Key* key = find_key(name);
            if (!key) throw Error(ErrorCode::InvalidArgument, fmt::format("unknown config key '{}'", name));
            key->set(base, name, node.data());
            continue;
        }
        for (const auto& [child, leaf] : node) {
            const std::string full = name + "." + child;
            const Key* key = find_key(full);
            if (!key) throw Error(ErrorCode::InvalidArgument, fmt::format("unknown config key '{}'", full));
            key->set(base, full, leaf.data());
        }
    }
    return base;
}

void apply_environment(Config& cfg) {
    if (const char* seed = std::getenv("OFFLOADLAB_SEED"); seed && *seed) {
        cfg.seed = parse_unsigned("OFFLOADLAB_SEED", seed);
    }
}

std::string config_reference() {
    std::string out = "Config file keys (INI; global keys first, then [model] [adam] [tile] [hardware]):\n";
    for (const Key& k : keys()) out += fmt::format("  {:<22} {}\n", k.name, k.doc);
    out += "OFFLOADLAB_SEED overrides seed; command-line flags override both.\n";
    return out;
}

}  // namespace offloadlab::cli
