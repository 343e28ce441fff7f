// Copyright (c) 2026, The OffloadLab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string_view>
#include <vector>

namespace offloadlab {

enum class Direction : std::uint8_t {
    HostToAccel,
    AccelToHost,
    AccelToAccel,  // peer fabric, never the host link
};

enum class TransferTag : std::uint8_t { Gradient, Parameter, Other };

std::string_view to_string(Direction d);
std::string_view to_string(TransferTag t);

struct TransferEntry {
    std::uint64_t step;
    Direction direction;
    std::uint64_t bytes;
    TransferTag tag;
};

struct StepTraffic {
    std::uint64_t host_to_accel = 0;
    std::uint64_t accel_to_host = 0;
    std::uint64_t fabric = 0;

    std::uint64_t host_link() const { return host_to_accel + accel_to_host; }
};

/// Append-only record of simulated transfers plus resident-memory peaks on
/// both sides of the link. Appends and memory updates are serialized.
class DeviceLedger {
public:
    DeviceLedger();
    DeviceLedger(const DeviceLedger& other);
    DeviceLedger(DeviceLedger&& other) noexcept;
    DeviceLedger& operator=(DeviceLedger other) noexcept;
    ~DeviceLedger();

    void record(std::uint64_t step, Direction direction, std::uint64_t bytes, TransferTag tag);

    void accel_alloc(std::uint64_t bytes);
    void accel_free(std::uint64_t bytes);
    void host_alloc(std::uint64_t bytes);
    void host_free(std::uint64_t bytes);

    std::uint64_t accel_bytes() const;
    std::uint64_t host_bytes() const;
    std::uint64_t peak_accel_bytes() const;
    std::uint64_t peak_host_bytes() const;

    std::vector<TransferEntry> entries() const;
    std::uint64_t bytes(Direction direction, std::optional<TransferTag> tag = std::nullopt,
                        std::optional<std::uint64_t> step = std::nullopt) const;
    std::map<std::uint64_t, StepTraffic> per_step() const;

private:
    std::unique_ptr<std::mutex> mu_;
    std::vector<TransferEntry> entries_;
    std::uint64_t accel_ = 0;
    std::uint64_t host_ = 0;
    std::uint64_t peak_accel_ = 0;
    std::uint64_t peak_host_ = 0;
};

}  // namespace offloadlab
