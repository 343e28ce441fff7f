// Copyright (c) 2026, The OffloadLab Authors
// SPDX-License-Identifier: Apache-2.0

#include "offloadlab/ledger.hpp"

#include <algorithm>

#include "offloadlab/error.hpp"

namespace offloadlab {

std::string_view to_string(Direction d) {
    switch (d) {
        case Direction::HostToAccel: return "host_to_accel";
        case Direction::AccelToHost: return "accel_to_host";
        case Direction::AccelToAccel: return "accel_to_accel";
    }
    return "?";
}

std::string_view to_string(TransferTag t) {
    switch (t) {
        case TransferTag::Gradient: return "gradient";
        case TransferTag::Parameter: return "parameter";
        case TransferTag::Other: return "other";
    }
    return "?";
}

DeviceLedger::DeviceLedger() : mu_(std::make_unique<std::mutex>()) {}

DeviceLedger::DeviceLedger(const DeviceLedger& other) : mu_(std::make_unique<std::mutex>()) {
    std::lock_guard lock(*other.mu_);
    entries_ = other.entries_;
    accel_ = other.accel_;
    host_ = other.host_;
    peak_accel_ = other.peak_accel_;
    peak_host_ = other.peak_host_;
}

DeviceLedger::DeviceLedger(DeviceLedger&& other) noexcept
    : mu_(std::move(other.mu_)),
      entries_(std::move(other.entries_)),
      accel_(other.accel_),
      host_(other.host_),
      peak_accel_(other.peak_accel_),
      peak_host_(other.peak_host_) {
    other.mu_ = std::make_unique<std::mutex>();
}

DeviceLedger& DeviceLedger::operator=(DeviceLedger other) noexcept {
    std::swap(mu_, other.mu_);
    std::swap(entries_, other.entries_);
    std::swap(accel_, other.accel_);
    std::swap(host_, other.host_);
    std::swap(peak_accel_, other.peak_accel_);
    std::swap(peak_host_, other.peak_host_);
    return *this;
}

DeviceLedger::~DeviceLedger() = default;

void DeviceLedger::record(std::uint64_t step, Direction direction, std::uint64_t bytes, TransferTag tag) {
    std::lock_guard lock(*mu_);
    entries_.push_back({step, direction, bytes, tag});
}

void DeviceLedger::accel_alloc(std::uint64_t bytes) {
    std::lock_guard lock(*mu_);
    accel_ += bytes;
    peak_accel_ = std::max(peak_accel_, accel_);
}

void DeviceLedger::accel_free(std::uint64_t bytes) {
    std::lock_guard lock(*mu_);
    if (bytes > accel_) throw Error(ErrorCode::ConsistencyFailure, "accelerator free exceeds resident bytes");
    accel_ -= bytes;
}

void DeviceLedger::host_alloc(std::uint64_t bytes) {
    std::lock_guard lock(*mu_);
    host_ += bytes;
    peak_host_ = std::max(peak_host_, host_);
}

void DeviceLedger::host_free(std::uint64_t bytes) {
    std::lock_guard lock(*mu_);
    if (bytes > host_) throw Error(ErrorCode::ConsistencyFailure, "host free exceeds resident bytes");
    host_ -= bytes;
}

std::uint64_t DeviceLedger::accel_bytes() const {
    std::lock_guard lock(*mu_);
    return accel_;
}

std::uint64_t DeviceLedger::host_bytes() const {
    std::lock_guard lock(*mu_);
    return host_;
}

std::uint64_t DeviceLedger::peak_accel_bytes() const {
    std::lock_guard lock(*mu_);
    return peak_accel_;
}

std::uint64_t DeviceLedger::peak_host_bytes() const {
    std::lock_guard lock(*mu_);
    return peak_host_;
}

std::vector<TransferEntry> DeviceLedger::entries() const {
    std::lock_guard lock(*mu_);
    return entries_;
}

std::uint64_t DeviceLedger::bytes(Direction direction, std::optional<TransferTag> tag,
                                  std::optional<std::uint64_t> step) const {
    std::lock_guard lock(*mu_);
    std::uint64_t total = 0;
    for (const TransferEntry& e : entries_) {
        if (e.direction != direction) continue;
        if (tag && e.tag != *tag) continue;
        if (step && e.step != *step) continue;
        total += e.bytes;
    }
    return total;
}

std::map<std::uint64_t, StepTraffic> DeviceLedger::per_step() const {
    std::lock_guard lock(*mu_);
    std::map<std::uint64_t, StepTraffic> out;
    for (const TransferEntry& e : entries_) {
        StepTraffic& t = out[e.step];
        switch (e.direction) {
            case Direction::HostToAccel: t.host_to_accel += e.bytes; break;
            case Direction::AccelToHost: t.accel_to_host += e.bytes; break;
            case Direction::AccelToAccel: t.fabric += e.bytes; break;
        }
    }
    return out;
}

}  // namespace offloadlab
