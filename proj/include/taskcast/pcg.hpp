#pragma once

#include <cstdint>
#include <span>
#include <utility>

namespace taskcast {

// PCG32 (XSH-RR 64/32, O'Neill 2014). Pinned so that split plans are
// reproducible across implementations. Reference vector: Pcg32(42, 54) yields
// 0xa15c02b7, 0x7b47f409, 0xba1d3330, 0x83d2f293, 0xbfa4784b, 0xcbed606e.
class Pcg32 {
public:
    using result_type = std::uint32_t;

    static constexpr std::uint64_t kMultiplier = 6364136223846793005ULL;
    // Stream used for split plans and subsampling ("task").
    static constexpr std::uint64_t kTaskStream = 0x7461736bULL;

    constexpr Pcg32(std::uint64_t initstate, std::uint64_t initseq = kTaskStream) noexcept
        : state_(0), inc_((initseq << 1u) | 1u)
    {
        step();
        state_ += initstate;
        step();
    }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return 0xffffffffu; }

    constexpr result_type operator()() noexcept
    {
        const std::uint64_t old = state_;
        step();
        const auto xorshifted = static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
        const auto rot = static_cast<std::uint32_t>(old >> 59u);
        return (xorshifted >> rot) | (xorshifted << ((-rot) & 31u));
    }

    // Uniform draw in [0, bound) without modulo bias.
    constexpr std::uint32_t bounded(std::uint32_t bound) noexcept
    {
        const std::uint32_t threshold = (-bound) % bound;
        for (;;) {
            const std::uint32_t r = (*this)();
            if (r >= threshold)
                return r % bound;
        }
    }

private:
    constexpr void step() noexcept { state_ = state_ * kMultiplier + inc_; }

    std::uint64_t state_;
    std::uint64_t inc_;
};

// Fisher-Yates from the back: for i = n-1 down to 1 swap items[i] with
// items[bounded(i + 1)]. Fixed so shuffles are portable (std::shuffle is not).
template <typename T>
void pcg_shuffle(std::span<T> items, Pcg32& rng)
{
    for (std::size_t i = items.size(); i > 1; --i) {
        const auto j = rng.bounded(static_cast<std::uint32_t>(i));
        using std::swap;
        swap(items[i - 1], items[j]);
    }
}

} // namespace taskcast
