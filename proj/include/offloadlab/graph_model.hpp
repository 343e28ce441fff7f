// Copyright (c) 2026, The OffloadLab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Offload-strategy analysis over the data-flow graph of one mixed-precision
// Adam training iteration.
//
// The graph has data nodes for the model states (p16, g16, p32, m32, v32) and
// compute nodes (Forward, Backward, ParamUpdate, Float2Half). Edge weights are
// bytes per iteration: 2 bytes/param when the source carries fp16 data and
// 4 bytes/param when it carries fp32 data. A device partition of the graph is
// an offload strategy; its cut weight is the host<->accelerator traffic.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace offloadlab {

enum class NodeId : std::uint8_t {
    Forward,
    Backward,
    ParamUpdate,
    Float2Half,
    P16,
    G16,
    P32,
    M32,
    V32,
    FwdBwdSuper,
    UpdateSuper,
};

enum class NodeKind : std::uint8_t { Compute, Data };
enum class Precision : std::uint8_t { Fp16, Fp32 };
enum class Device : std::uint8_t { Gpu, Cpu };
enum class ComputeClass : std::uint8_t { OrderM, OrderMB };

std::string_view label(NodeId id);
std::string_view to_string(Device d);
std::string_view to_string(ComputeClass c);

struct ModelConfig {
    std::uint64_t param_count = 1;  // M
    std::uint64_t batch_size = 1;   // B

    void validate() const;
};

struct Node {
    NodeId id;
    NodeKind kind;
    Precision precision;
};

struct Edge {
    NodeId src;
    NodeId dst;
    std::uint64_t bytes_per_param;  // weight = bytes_per_param * M
};

struct DataflowGraph {
    std::uint64_t param_count = 0;
    std::vector<Node> nodes;
    std::vector<Edge> edges;

    bool contains(NodeId id) const;
    bool fused() const;
    std::uint64_t weight_bytes(const Edge& e) const { return e.bytes_per_param * param_count; }
};

/// Node -> device map. Lookups of missing nodes throw UnassignedNode.
class Partition {
public:
    Partition() = default;
    Partition(std::initializer_list<std::pair<const NodeId, Device>> init) : assignment_(init) {}

    void assign(NodeId id, Device d) { assignment_[id] = d; }
    bool assigned(NodeId id) const { return assignment_.contains(id); }
    Device at(NodeId id) const;
    const std::map<NodeId, Device>& assignment() const { return assignment_; }

    friend bool operator==(const Partition&, const Partition&) = default;

private:
    std::map<NodeId, Device> assignment_;
};

struct StrategyReport {
    Partition partition;
    std::uint64_t comm_volume_bytes = 0;
    std::uint64_t gpu_memory_bytes = 0;
    ComputeClass cpu_compute_class = ComputeClass::OrderM;
    /// 16*M / gpu_memory_bytes; +infinity when nothing stays on the GPU.
    double reduction_factor = 1.0;

    bool offloads_anything() const;
};

struct HardwareProfile {
    double gpu_flops = 100e12;   // flop/s
    double cpu_flops = 1e12;     // flop/s
    double pcie_bw = 12e9;       // bytes/s
    double cpu_mem_bw = 100e9;   // bytes/s

    void validate() const;
};

/// Flop and byte conventions of the step-time estimate.
struct CostConstants {
    double fwd_bwd_flops_per_param_sample = 6.0;
    double update_flops_per_param = 12.0;
    // p32, m32, v32 read and written (24), g16 read (2), p16 written (2).
    double update_bytes_per_param = 28.0;
};

struct StepTimeBreakdown {
    double gpu_secs = 0.0;
    double cpu_secs = 0.0;
    double transfer_secs = 0.0;
    double total_secs = 0.0;
};

DataflowGraph build_dataflow_graph(const ModelConfig& cfg);
DataflowGraph fuse_graph(const DataflowGraph& g);

std::uint64_t comm_volume(const DataflowGraph& g, const Partition& p);
std::uint64_t gpu_memory_bytes(const Partition& p, const ModelConfig& cfg);
ComputeClass cpu_compute_class(const Partition& p, const ModelConfig& cfg);

/// All assignments of the fused graph with FWD-BWD pinned to the GPU, sorted
/// by (comm_volume ascending, reduction_factor descending).
std::vector<StrategyReport> enumerate_strategies(const ModelConfig& cfg);

/// The unique offload strategy (at least one node on the CPU) with minimum
/// communication and, among those, maximum memory reduction.
StrategyReport optimal_strategy(const ModelConfig& cfg);

/// Layer-by-layer streaming: every model state lives on the host and each
/// layer's p16, g16 and fp32 optimizer states cross the link once per
/// iteration (2M + 2M + 24M = 28M). Compute stays on the GPU.
StrategyReport layer_streaming_strategy(const ModelConfig& cfg);

StepTimeBreakdown estimate_step_breakdown(const ModelConfig& cfg, const HardwareProfile& hw,
                                          const StrategyReport& s, const CostConstants& c = {});
double estimate_step_time(const ModelConfig& cfg, const HardwareProfile& hw, const StrategyReport& s,
                          const CostConstants& c = {});

/// Rows of the classic savings table for strategies at minimum communication,
/// with the tabulated figures next to the computed ones.
struct SavingsTableRow {
    Device g16;
    Device update;
    std::uint64_t tabulated_memory_multiple;  // in units of M
    double tabulated_reduction;
    std::uint64_t computed_memory_bytes;
    double computed_reduction;
    bool memory_consistent;
    bool reduction_consistent;
};

std::vector<SavingsTableRow> savings_table(const ModelConfig& cfg);

inline constexpr int kReportSchemaVersion = 1;

nlohmann::json to_json(const StrategyReport& r);
nlohmann::json strategies_json(const ModelConfig& cfg, const std::vector<StrategyReport>& reports);

/// Plain-text table: FWD-BWD, p16, g16, Update, Memory, Reduction, Comm.
std::string format_strategy_table(const ModelConfig& cfg, const std::vector<StrategyReport>& reports);

}  // namespace offloadlab
