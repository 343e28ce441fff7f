// Copyright (c) 2026, The OffloadLab Authors
// SPDX-License-Identifier: Apache-2.0

#include "offloadlab/graph_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <tuple>

#include <fmt/format.h>

#include "offloadlab/error.hpp"

namespace offloadlab {

namespace {

constexpr std::uint64_t kFp16Bytes = 2;
constexpr std::uint64_t kFp32Bytes = 4;
constexpr std::uint64_t kBaselineBytesPerParam = 16;

std::uint64_t state_bytes_per_param(NodeId id) {
    switch (id) {
        case NodeId::P16:
        case NodeId::G16: return kFp16Bytes;
        case NodeId::P32:
        case NodeId::M32:
        case NodeId::V32: return kFp32Bytes;
        case NodeId::UpdateSuper: return 3 * kFp32Bytes;
        default: return 0;
    }
}

// Which fused node absorbs each unfused node.
NodeId group_of(NodeId id) {
    switch (id) {
        case NodeId::Forward:
        case NodeId::Backward: return NodeId::FwdBwdSuper;
        case NodeId::ParamUpdate:
        case NodeId::Float2Half:
        case NodeId::P32:
        case NodeId::M32:
        case NodeId::V32: return NodeId::UpdateSuper;
        default: return id;
    }
}

bool partition_is_fused(const Partition& p) {
    return p.assigned(NodeId::FwdBwdSuper) || p.assigned(NodeId::UpdateSuper);
}

Device forward_device(const Partition& p) {
    if (partition_is_fused(p)) return p.at(NodeId::FwdBwdSuper);
    const Device fwd = p.at(NodeId::Forward);
    const Device bwd = p.at(NodeId::Backward);
    return (fwd == Device::Cpu || bwd == Device::Cpu) ? Device::Cpu : Device::Gpu;
}

Device update_device(const Partition& p) {
    return partition_is_fused(p) ? p.at(NodeId::UpdateSuper) : p.at(NodeId::ParamUpdate);
}

double reduction_for(std::uint64_t gpu_bytes, std::uint64_t m) {
    if (gpu_bytes == 0) return std::numeric_limits<double>::infinity();
    return static_cast<double>(kBaselineBytesPerParam * m) / static_cast<double>(gpu_bytes);
}

StrategyReport make_report(const DataflowGraph& fused, const Partition& p, const ModelConfig& cfg) {
    StrategyReport r;
    r.partition = p;
    r.comm_volume_bytes = comm_volume(fused, p);
    r.gpu_memory_bytes = gpu_memory_bytes(p, cfg);
    r.cpu_compute_class = cpu_compute_class(p, cfg);
    r.reduction_factor = reduction_for(r.gpu_memory_bytes, cfg.param_count);
    return r;
}

// Deterministic tie-break for sorting: the Cpu bits of (p16, g16, Update).
int assignment_code(const Partition& p) {
    int code = 0;
    for (NodeId id : {NodeId::P16, NodeId::G16, NodeId::UpdateSuper}) {
        code = code * 2 + (p.assigned(id) && p.at(id) == Device::Cpu ? 1 : 0);
    }
    return code;
}

bool report_order(const StrategyReport& a, const StrategyReport& b) {
    return std::make_tuple(a.comm_volume_bytes, -a.reduction_factor, assignment_code(a.partition)) <
           std::make_tuple(b.comm_volume_bytes, -b.reduction_factor, assignment_code(b.partition));
}

}  // namespace

std::string_view label(NodeId id) {
    switch (id) {
        case NodeId::Forward: return "Forward";
        case NodeId::Backward: return "Backward";
        case NodeId::ParamUpdate: return "ParamUpdate";
        case NodeId::Float2Half: return "float2half";
        case NodeId::P16: return "p16";
        case NodeId::G16: return "g16";
        case NodeId::P32: return "p32";
        case NodeId::M32: return "m32";
        case NodeId::V32: return "v32";
        case NodeId::FwdBwdSuper: return "FWD-BWD Super";
        case NodeId::UpdateSuper: return "Update Super";
    }
    return "?";
}

std::string_view to_string(Device d) { return d == Device::Gpu ? "gpu" : "cpu"; }

std::string_view to_string(ComputeClass c) { return c == ComputeClass::OrderM ? "O(M)" : "O(MB)"; }

void ModelConfig::validate() const {
    if (param_count < 1) throw Error(ErrorCode::InvalidArgument, "param_count must be >= 1");
    if (batch_size < 1) throw Error(ErrorCode::InvalidArgument, "batch_size must be >= 1");
}

void HardwareProfile::validate() const {
    for (double v : {gpu_flops, cpu_flops, pcie_bw, cpu_mem_bw}) {
        if (!(v > 0.0) || !std::isfinite(v)) {
            throw Error(ErrorCode::InvalidProfile, "hardware profile fields must be positive and finite");
        }
    }
}

bool DataflowGraph::contains(NodeId id) const {
    return std::any_of(nodes.begin(), nodes.end(), [id](const Node& n) { return n.id == id; });
}

bool DataflowGraph::fused() const { return contains(NodeId::FwdBwdSuper) || contains(NodeId::UpdateSuper); }

Device Partition::at(NodeId id) const {
    auto it = assignment_.find(id);
    if (it == assignment_.end()) {
        throw Error(ErrorCode::UnassignedNode, fmt::format("node '{}' has no device", label(id)));
    }
    return it->second;
}

bool StrategyReport::offloads_anything() const {
    return std::any_of(partition.assignment().begin(), partition.assignment().end(),
                       [](const auto& kv) { return kv.second == Device::Cpu; });
}

DataflowGraph build_dataflow_graph(const ModelConfig& cfg) {
    cfg.validate();
    DataflowGraph g;
    g.param_count = cfg.param_count;
    g.nodes = {
        {NodeId::Forward, NodeKind::Compute, Precision::Fp16},
        {NodeId::Backward, NodeKind::Compute, Precision::Fp16},
        {NodeId::ParamUpdate, NodeKind::Compute, Precision::Fp32},
        {NodeId::Float2Half, NodeKind::Compute, Precision::Fp16},
        {NodeId::P16, NodeKind::Data, Precision::Fp16},
        {NodeId::G16, NodeKind::Data, Precision::Fp16},
        {NodeId::P32, NodeKind::Data, Precision::Fp32},
        {NodeId::M32, NodeKind::Data, Precision::Fp32},
        {NodeId::V32, NodeKind::Data, Precision::Fp32},
    };
    // Momentum and variance are read and rewritten by ParamUpdate; the two
    // directions are one 4M edge each. p32 is rewritten by ParamUpdate and
    // then read by float2half, so it sits on the update -> p16 path.
    g.edges = {
        {NodeId::P16, NodeId::Forward, kFp16Bytes},
        {NodeId::P16, NodeId::Backward, kFp16Bytes},
        {NodeId::Backward, NodeId::G16, kFp16Bytes},
        {NodeId::G16, NodeId::ParamUpdate, kFp16Bytes},
        {NodeId::ParamUpdate, NodeId::M32, kFp32Bytes},
        {NodeId::ParamUpdate, NodeId::V32, kFp32Bytes},
        {NodeId::ParamUpdate, NodeId::P32, kFp32Bytes},
        {NodeId::P32, NodeId::Float2Half, kFp32Bytes},
        {NodeId::Float2Half, NodeId::P16, kFp16Bytes},
    };
    return g;
}

DataflowGraph fuse_graph(const DataflowGraph& g) {
    if (g.fused()) throw Error(ErrorCode::AlreadyFused, "graph already contains a super-node");

    DataflowGraph out;
    out.param_count = g.param_count;
    out.nodes = {
        {NodeId::FwdBwdSuper, NodeKind::Compute, Precision::Fp16},
        {NodeId::P16, NodeKind::Data, Precision::Fp16},
        {NodeId::G16, NodeKind::Data, Precision::Fp16},
        {NodeId::UpdateSuper, NodeKind::Compute, Precision::Fp32},
    };

    // Sum the edges crossing each ordered pair of groups; edges inside a
    // group disappear.
    std::map<std::pair<NodeId, NodeId>, std::uint64_t> crossing;
    std::vector<std::pair<NodeId, NodeId>> order;
    for (const Edge& e : g.edges) {
        const NodeId src = group_of(e.src);
        const NodeId dst = group_of(e.dst);
        if (src == dst) continue;
        auto [it, inserted] = crossing.try_emplace({src, dst}, 0);
        if (inserted) order.push_back({src, dst});
        it->second += e.bytes_per_param;
    }
    for (const auto& key : order) out.edges.push_back({key.first, key.second, crossing.at(key)});
    return out;
}

std::uint64_t comm_volume(const DataflowGraph& g, const Partition& p) {
    for (const Node& n : g.nodes) (void)p.at(n.id);
    std::uint64_t total = 0;
    for (const Edge& e : g.edges) {
        if (p.at(e.src) != p.at(e.dst)) total += g.weight_bytes(e);
    }
    return total;
}

std::uint64_t gpu_memory_bytes(const Partition& p, const ModelConfig& cfg) {
    cfg.validate();
    std::vector<NodeId> states = {NodeId::P16, NodeId::G16};
    if (p.assigned(NodeId::UpdateSuper)) {
        states.push_back(NodeId::UpdateSuper);
    } else {
        states.insert(states.end(), {NodeId::P32, NodeId::M32, NodeId::V32});
    }
    std::uint64_t per_param = 0;
    for (NodeId id : states) {
        if (p.at(id) == Device::Gpu) per_param += state_bytes_per_param(id);
    }
    return per_param * cfg.param_count;
}

ComputeClass cpu_compute_class(const Partition& p, const ModelConfig& cfg) {
    cfg.validate();
    const std::vector<NodeId> compute =
        partition_is_fused(p)
            ? std::vector<NodeId>{NodeId::FwdBwdSuper, NodeId::UpdateSuper}
            : std::vector<NodeId>{NodeId::Forward, NodeId::Backward, NodeId::ParamUpdate, NodeId::Float2Half};
    for (NodeId id : compute) (void)p.at(id);
    return forward_device(p) == Device::Cpu ? ComputeClass::OrderMB : ComputeClass::OrderM;
}

std::vector<StrategyReport> enumerate_strategies(const ModelConfig& cfg) {
    cfg.validate();
    const DataflowGraph fused = fuse_graph(build_dataflow_graph(cfg));
    constexpr std::array<NodeId, 3> free_nodes = {NodeId::P16, NodeId::G16, NodeId::UpdateSuper};

    std::vector<StrategyReport> reports;
    for (unsigned mask = 0; mask < (1u << free_nodes.size()); ++mask) {
        Partition p{{NodeId::FwdBwdSuper, Device::Gpu}};
        for (std::size_t i = 0; i < free_nodes.size(); ++i) {
            p.assign(free_nodes[i], (mask >> i) & 1u ? Device::Cpu : Device::Gpu);
        }
        reports.push_back(make_report(fused, p, cfg));
    }
    std::sort(reports.begin(), reports.end(), report_order);
    return reports;
}

StrategyReport optimal_strategy(const ModelConfig& cfg) {
    std::vector<StrategyReport> offload;
    for (auto& r : enumerate_strategies(cfg)) {
        if (r.offloads_anything()) offload.push_back(std::move(r));
    }
    const StrategyReport& best = offload.front();
    const auto ties = std::count_if(offload.begin(), offload.end(), [&](const StrategyReport& r) {
        return r.comm_volume_bytes == best.comm_volume_bytes && r.reduction_factor == best.reduction_factor;
    });
    if (ties != 1) {
        throw Error(ErrorCode::ConsistencyFailure,
                    fmt::format("{} strategies tie for the optimum; expected exactly one", ties));
    }
    return best;
}

StrategyReport layer_streaming_strategy(const ModelConfig& cfg) {
    cfg.validate();
    StrategyReport r;
    r.partition = Partition{{NodeId::FwdBwdSuper, Device::Gpu},
                            {NodeId::P16, Device::Cpu},
                            {NodeId::G16, Device::Cpu},
                            {NodeId::UpdateSuper, Device::Gpu}};
    const std::uint64_t per_param = kFp16Bytes + kFp16Bytes + 2 * 3 * kFp32Bytes;
    r.comm_volume_bytes = per_param * cfg.param_count;
    // Only one layer is resident at a time; in the many-layer limit the
    // resident model-state footprint vanishes.
    r.gpu_memory_bytes = 0;
    r.cpu_compute_class = ComputeClass::OrderM;
    r.reduction_factor = reduction_for(0, cfg.param_count);
    return r;
}

StepTimeBreakdown estimate_step_breakdown(const ModelConfig& cfg, const HardwareProfile& hw,
                                          const StrategyReport& s, const CostConstants& c) {
    cfg.validate();
    hw.validate();
    const double m = static_cast<double>(cfg.param_count);
    const double b = static_cast<double>(cfg.batch_size);
    const double fwd_bwd_flops = c.fwd_bwd_flops_per_param_sample * m * b;
    const double update_flops = c.update_flops_per_param * m;

    double gpu_flops = 0.0;
    double cpu_flops = 0.0;
    double cpu_bytes = 0.0;
    (forward_device(s.partition) == Device::Gpu ? gpu_flops : cpu_flops) += fwd_bwd_flops;
    if (update_device(s.partition) == Device::Gpu) {
        gpu_flops += update_flops;
    } else {
        cpu_flops += update_flops;
        cpu_bytes += c.update_bytes_per_param * m;
    }

    StepTimeBreakdown t;
    t.gpu_secs = gpu_flops / hw.gpu_flops;
    t.cpu_secs = std::max(cpu_flops / hw.cpu_flops, cpu_bytes / hw.cpu_mem_bw);
    t.transfer_secs = static_cast<double>(s.comm_volume_bytes) / hw.pcie_bw;
    // Transfers overlap with compute, so the slowest resource sets the pace.
    t.total_secs = std::max({t.gpu_secs, t.cpu_secs, t.transfer_secs});
    return t;
}

double estimate_step_time(const ModelConfig& cfg, const HardwareProfile& hw, const StrategyReport& s,
                          const CostConstants& c) {
    return estimate_step_breakdown(cfg, hw, s, c).total_secs;
}

std::vector<SavingsTableRow> savings_table(const ModelConfig& cfg) {
    struct Tabulated {
        Device g16;
        Device update;
        std::uint64_t memory_multiple;
        double reduction;
    };
    constexpr std::array<Tabulated, 4> tabulated = {{
        {Device::Gpu, Device::Gpu, 16, 1.0},
        {Device::Cpu, Device::Gpu, 14, 1.14},
        {Device::Gpu, Device::Cpu, 4, 4.0},
        {Device::Cpu, Device::Cpu, 4, 8.0},
    }};

    const DataflowGraph fused = fuse_graph(build_dataflow_graph(cfg));
    std::vector<SavingsTableRow> rows;
    for (const Tabulated& t : tabulated) {
        const Partition p{{NodeId::FwdBwdSuper, Device::Gpu},
                          {NodeId::P16, Device::Gpu},
                          {NodeId::G16, t.g16},
                          {NodeId::UpdateSuper, t.update}};
        const StrategyReport r = make_report(fused, p, cfg);
        SavingsTableRow row{};
        row.g16 = t.g16;
        row.update = t.update;
        row.tabulated_memory_multiple = t.memory_multiple;
        row.tabulated_reduction = t.reduction;
        row.computed_memory_bytes = r.gpu_memory_bytes;
        row.computed_reduction = r.reduction_factor;
        row.memory_consistent = r.gpu_memory_bytes == t.memory_multiple * cfg.param_count;
        // The table prints reductions to two decimals.
        row.reduction_consistent = std::round(r.reduction_factor * 100.0) == std::round(t.reduction * 100.0);
        rows.push_back(row);
    }
    return rows;
}

nlohmann::json to_json(const StrategyReport& r) {
    nlohmann::json assignment = nlohmann::json::object();
    for (const auto& [id, dev] : r.partition.assignment()) assignment[std::string(label(id))] = to_string(dev);
    nlohmann::json j;
    j["assignment"] = assignment;
    j["comm_volume_bytes"] = r.comm_volume_bytes;
    j["gpu_memory_bytes"] = r.gpu_memory_bytes;
    j["cpu_compute_class"] = to_string(r.cpu_compute_class);
    // JSON has no infinity; an unbounded reduction is written as null.
    if (std::isfinite(r.reduction_factor)) {
        j["reduction_factor"] = r.reduction_factor;
    } else {
        j["reduction_factor"] = nullptr;
    }
    return j;
}

nlohmann::json strategies_json(const ModelConfig& cfg, const std::vector<StrategyReport>& reports) {
    const StrategyReport best = optimal_strategy(cfg);
    nlohmann::json j;
    j["schema_version"] = kReportSchemaVersion;
    j["param_count"] = cfg.param_count;
    j["batch_size"] = cfg.batch_size;
    j["strategies"] = nlohmann::json::array();
    for (const StrategyReport& r : reports) {
        nlohmann::json e = to_json(r);
        e["optimal"] = r.partition == best.partition;
        j["strategies"].push_back(std::move(e));
    }
    j["savings_table"] = nlohmann::json::array();
    for (const SavingsTableRow& row : savings_table(cfg)) {
        j["savings_table"].push_back({
            {"g16", to_string(row.g16)},
            {"update", to_string(row.update)},
            {"tabulated_memory_bytes", row.tabulated_memory_multiple * cfg.param_count},
            {"tabulated_reduction", row.tabulated_reduction},
            {"computed_memory_bytes", row.computed_memory_bytes},
            {"computed_reduction", row.computed_reduction},
            {"memory_consistent", row.memory_consistent},
            {"reduction_consistent", row.reduction_consistent},
        });
    }
    return j;
}

namespace {

std::string multiple_of_m(std::uint64_t bytes, std::uint64_t m) {
    if (bytes % m == 0) return fmt::format("{}M", bytes / m);
    return fmt::format("{:.2f}M", static_cast<double>(bytes) / static_cast<double>(m));
}

std::string reduction_text(double r) {
    if (!std::isfinite(r)) return "inf";
    return fmt::format("{:.2f}x", r);
}

}  // namespace

std::string format_strategy_table(const ModelConfig& cfg, const std::vector<StrategyReport>& reports) {
    const StrategyReport best = optimal_strategy(cfg);
    const std::uint64_t m = cfg.param_count;
    std::string out = fmt::format("{:<8} {:<4} {:<4} {:<7} {:>8} {:>10} {:>8}\n", "FWD-BWD", "p16", "g16",
                                  "Update", "Memory", "Reduction", "Comm");
    for (const StrategyReport& r : reports) {
        const Partition& p = r.partition;
        out += fmt::format("{:<8} {:<4} {:<4} {:<7} {:>8} {:>10} {:>8}{}\n", to_string(p.at(NodeId::FwdBwdSuper)),
                           to_string(p.at(NodeId::P16)), to_string(p.at(NodeId::G16)),
                           to_string(p.at(NodeId::UpdateSuper)), multiple_of_m(r.gpu_memory_bytes, m),
                           reduction_text(r.reduction_factor), multiple_of_m(r.comm_volume_bytes, m),
                           p == best.partition ? "  <- optimal" : "");
    }
    for (const SavingsTableRow& row : savings_table(cfg)) {
        if (!row.memory_consistent) {
            out += fmt::format(
                "note: tabulated row (g16={}, Update={}) lists {}M at {:.2f}x; {:.2f}x of 16M is {}\n",
                to_string(row.g16), to_string(row.update), row.tabulated_memory_multiple, row.tabulated_reduction,
                row.tabulated_reduction, multiple_of_m(row.computed_memory_bytes, m));
        }
    }
    return out;
}

}  // namespace offloadlab
