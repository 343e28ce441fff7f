// Copyright (c) 2026, The OffloadLab Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <exception>
#include <mutex>
#include <thread>

#include "offloadlab/adam.hpp"
#include "offloadlab/error.hpp"

namespace offloadlab {

namespace {

struct StateView {
    const Half* __restrict g;
    float* __restrict p;
    float* __restrict m;
    float* __restrict v;
};

inline void update_element(const StateView& s, std::size_t i, const AdamConstants<float>& c) {
    const float grad = half_to_float(s.g[i]);
    const float mi = std::fma(grad, c.one_minus_beta1, c.beta1 * s.m[i]);
    const float vi = std::fma(grad * grad, c.one_minus_beta2, c.beta2 * s.v[i]);
    const float denom = std::fma(std::sqrt(vi), c.bias.inv_sqrt_beta2, c.eps);
    s.p[i] = std::fma(mi / denom, c.bias.step_size, s.p[i]);
    s.m[i] = mi;
    s.v[i] = vi;
}

// Fixed lane widths let the compiler map one lane group onto vector
// registers; Lane == 0 means the width is only known at run time.
template <std::size_t Lane>
void update_block(const StateView& s, std::size_t first, std::size_t count, std::size_t lane,
                  std::size_t unroll, const AdamConstants<float>& c) {
    const std::size_t width = Lane == 0 ? lane : Lane;
    const std::size_t end = first + count;
    std::size_t i = first;
    for (std::size_t u = 0; u < unroll && i + width <= end; ++u, i += width) {
        if constexpr (Lane == 0) {
            for (std::size_t l = 0; l < width; ++l) update_element(s, i + l, c);
        } else {
#pragma GCC unroll 16
            for (std::size_t l = 0; l < Lane; ++l) update_element(s, i + l, c);
        }
    }
    for (; i < end; ++i) update_element(s, i, c);
}

template <std::size_t Lane>
void update_tile(const StateView& s, std::size_t first, std::size_t count, const TileConfig& t,
                 const AdamConstants<float>& c) {
    const std::size_t block = t.lane_width * t.unroll_width;
    const auto blocks = static_cast<std::ptrdiff_t>((count + block - 1) / block);
    const int workers = static_cast<int>(t.worker_count);
#pragma omp parallel for num_threads(workers) schedule(static) if (workers > 1)
    for (std::ptrdiff_t b = 0; b < blocks; ++b) {
        const std::size_t start = first + static_cast<std::size_t>(b) * block;
        update_block<Lane>(s, start, std::min(block, first + count - start), t.lane_width, t.unroll_width, c);
    }
}

void update_tile_dispatch(const StateView& s, std::size_t first, std::size_t count, const TileConfig& t,
                          const AdamConstants<float>& c) {
    switch (t.lane_width) {
        case 4: update_tile<4>(s, first, count, t, c); break;
        case 8: update_tile<8>(s, first, count, t, c); break;
        case 16: update_tile<16>(s, first, count, t, c); break;
        default: update_tile<0>(s, first, count, t, c); break;
    }
}

void write_tile(std::span<const float> p32, std::span<Half> out, std::size_t first, std::size_t count) {
    const float* __restrict src = p32.data() + first;
    Half* __restrict dst = out.data() + first;
    for (std::size_t i = 0; i < count; ++i) dst[i] = float_to_half(src[i]);
}

// Narrows finished tiles on its own thread while later tiles are computed.
class TileWriter {
public:
    TileWriter(std::span<const float> p32, std::span<Half> out, const TileWrittenFn& on_tile)
        : p32_(p32), out_(out), on_tile_(on_tile), thread_([this] { run(); }) {}

    TileWriter(const TileWriter&) = delete;
    TileWriter& operator=(const TileWriter&) = delete;

    ~TileWriter() {
        if (thread_.joinable()) {
            close();
            thread_.join();
        }
    }

    void submit(std::size_t first, std::size_t count) {
        {
            std::lock_guard lock(mu_);
            pending_.emplace_back(first, count);
        }
        cv_.notify_one();
    }

    // Blocks until every submitted tile has been written.
    void finish() {
        close();
        thread_.join();
        if (failure_) std::rethrow_exception(failure_);
    }

private:
    void close() {
        {
            std::lock_guard lock(mu_);
            closed_ = true;
        }
        cv_.notify_one();
    }

    void run() {
        for (;;) {
            std::pair<std::size_t, std::size_t> tile;
            {
                std::unique_lock lock(mu_);
                cv_.wait(lock, [this] { return closed_ || !pending_.empty(); });
                if (pending_.empty()) return;
                tile = pending_.front();
                pending_.pop_front();
            }
            if (failure_) continue;
            try {
                write_tile(p32_, out_, tile.first, tile.second);
                if (on_tile_) on_tile_(tile.first, tile.second);
            } catch (...) {
                failure_ = std::current_exception();
            }
        }
    }

    std::span<const float> p32_;
    std::span<Half> out_;
    const TileWrittenFn& on_tile_;
    std::mutex mu_;
    std::condition_variable cv_;
    std::deque<std::pair<std::size_t, std::size_t>> pending_;
    bool closed_ = false;
    std::exception_ptr failure_;
    std::thread thread_;
};

}  // namespace

void adam_update_tiled(OptimizerShard& shard, std::span<const Half> g16, const AdamHyper& h, const TileConfig& t,
                       std::span<Half> out, const TileWrittenFn& on_tile) {
    t.validate();
    h.validate();
    shard.check_lengths();
    const std::size_t n = shard.size();
    if (g16.size() != n || out.size() != n) {
        throw Error(ErrorCode::LengthMismatch, "gradient/output length differs from the shard");
    }
    const auto c = AdamConstants<float>::make(h, shard.step);
    if (n == 0) return;

    const StateView s{g16.data(), shard.p32.data(), shard.m32.data(), shard.v32.data()};
    if (n <= t.tile_width) {
        // One tile: nothing to overlap the write-back with.
        update_tile_dispatch(s, 0, n, t, c);
        write_tile(shard.p32, out, 0, n);
        if (on_tile) on_tile(0, n);
        return;
    }

    TileWriter writer(shard.p32, out, on_tile);
    for (std::size_t first = 0; first < n; first += t.tile_width) {
        const std::size_t count = std::min(t.tile_width, n - first);
        update_tile_dispatch(s, first, count, t, c);
        writer.submit(first, count);
    }
    writer.finish();
}

OptimizerShard adam_step_tiled(OptimizerShard shard, std::span<const Half> g16, const AdamHyper& h,
                               const TileConfig& t, std::span<Half> out, const TileWrittenFn& on_tile) {
    adam_update_tiled(shard, g16, h, t, out, on_tile);
    return shard;
}

}  // namespace offloadlab
