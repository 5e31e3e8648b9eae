#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

namespace calars {

/// Order-independent summation of doubles.
///
/// Values are added into a window of 32-bit digits held in 64-bit limbs
/// (carry-save), so every partial sum is exact. `value()` rounds the exact
/// total to the nearest double, which makes the result a function of the
/// multiset of addends only: any partition of the terms across ranks and
/// any merge order produce the same bits. This is what lets a row-partitioned
/// reduction give identical results for every processor count.
class ExactAccumulator {
public:
    ExactAccumulator() = default;

    void add(double x)
    {
        if (x == 0.0) return;
        if (!std::isfinite(x)) {
            special_ += x;
            return;
        }
        int exp = 0;
        const double frac = std::frexp(x, &exp);
        auto mant = static_cast<std::int64_t>(std::ldexp(frac, 53));
        const bool negative = mant < 0;
        if (negative) mant = -mant;

        // x == mant * 2^(exp - 53)
        const int shift = exp - 53;
        const int digit = floor_div(shift, 32);
        const int offset = shift - digit * 32;
        const unsigned __int128 wide = static_cast<unsigned __int128>(mant) << offset;

        reserve(digit, digit + 2);
        for (int k = 0; k < 3; ++k) {
            const auto piece = static_cast<std::int64_t>((wide >> (32 * k)) & kMask);
            limbs_[digit - lo_ + k] += negative ? -piece : piece;
        }
        if (++pending_ >= kMaxPending) normalize();
    }

    void merge(const ExactAccumulator& other)
    {
        special_ += other.special_;
        if (other.limbs_.empty()) return;
        reserve(other.lo_, other.lo_ + static_cast<int>(other.limbs_.size()) - 1);
        for (std::size_t i = 0; i < other.limbs_.size(); ++i)
            limbs_[other.lo_ - lo_ + static_cast<int>(i)] += other.limbs_[i];
        pending_ += other.pending_ + 1;
        if (pending_ >= kMaxPending) normalize();
    }

    /// Nearest double to the exact sum (ties to even) for results in the
    /// normal range; subnormal results may be off by one unit.
    double value() const
    {
        if (special_ != 0.0 || std::isnan(special_)) return special_;
        ExactAccumulator tmp = *this;
        tmp.normalize();
        if (tmp.limbs_.empty()) return 0.0;

        bool negative = false;
        if (tmp.limbs_.back() < 0) {
            negative = true;
            for (auto& l : tmp.limbs_) l = -l;
            tmp.normalize();
        }
        // Top three digits carry >= 65 significant bits; fold the rest into a sticky bit.
        const int top = static_cast<int>(tmp.limbs_.size()) - 1;
        unsigned __int128 head = 0;
        for (int k = 0; k < 3; ++k) {
            head <<= 32;
            const int i = top - k;
            if (i >= 0) head |= static_cast<std::uint64_t>(tmp.limbs_[i]);
        }
        bool sticky = false;
        for (int i = 0; i <= top - 3; ++i) sticky = sticky || tmp.limbs_[i] != 0;
        if (sticky) head |= 1;

        const double mag = std::ldexp(static_cast<double>(head), 32 * (tmp.lo_ + top - 2));
        return negative ? -mag : mag;
    }

    bool empty() const noexcept { return limbs_.empty() && special_ == 0.0; }

private:
    static constexpr std::int64_t kMask = 0xFFFFFFFFLL;
    // Each add contributes < 2^32 per limb; stay well clear of int64 overflow.
    static constexpr std::int64_t kMaxPending = std::int64_t{1} << 28;

    static int floor_div(int a, int b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }

    void reserve(int first, int last)
    {
        if (limbs_.empty()) {
            lo_ = first;
            limbs_.assign(static_cast<std::size_t>(last - first + 1), 0);
            return;
        }
        if (first < lo_) {
            limbs_.insert(limbs_.begin(), static_cast<std::size_t>(lo_ - first), 0);
            lo_ = first;
        }
        const int hi = lo_ + static_cast<int>(limbs_.size()) - 1;
        if (last > hi) limbs_.resize(limbs_.size() + static_cast<std::size_t>(last - hi), 0);
    }

    // Canonical digits: all limbs in [0, 2^32) except a signed top limb; zero limbs trimmed.
    void normalize()
    {
        std::int64_t carry = 0;
        for (auto& l : limbs_) {
            const std::int64_t v = l + carry;
            carry = v >> 32;  // arithmetic shift: floor division
            l = v - (carry << 32);
        }
        while (carry != 0 && carry != -1) {
            limbs_.push_back(carry & kMask);
            carry >>= 32;
        }
        if (carry == -1) limbs_.push_back(-1);
        while (!limbs_.empty() && limbs_.back() == 0) limbs_.pop_back();
        std::size_t skip = 0;
        while (skip < limbs_.size() && limbs_[skip] == 0) ++skip;
        if (skip) {
            limbs_.erase(limbs_.begin(), limbs_.begin() + static_cast<std::ptrdiff_t>(skip));
            lo_ += static_cast<int>(skip);
        }
        // A top limb of -1 over a full digit collapses: -B + d == d - B.
        while (limbs_.size() >= 2 && limbs_.back() == -1) {
            limbs_.pop_back();
            limbs_.back() -= (std::int64_t{1} << 32);
        }
        pending_ = 0;
    }

    std::vector<std::int64_t> limbs_;
    int lo_ = 0;
    std::int64_t pending_ = 0;
    double special_ = 0.0;
};

}  // namespace calars
