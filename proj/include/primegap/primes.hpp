#pragma once

// Prime generation and prime-gap records.
//
// Odd-only segmented sieve of Eratosthenes:
//   bit index i  ->  odd number first_odd + 2*i
// 2 is handled as a special case everywhere.

#include "primegap/common.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <type_traits>
#include <stdexcept>
#include <vector>

namespace primegap {

inline constexpr std::uint64_t kDefaultSegmentEntries = std::uint64_t{1} << 22;

// ---------------------------------------------------------------------------
// Deterministic Miller-Rabin for 64-bit inputs
// ---------------------------------------------------------------------------

namespace detail {

inline std::uint64_t mul_mod(std::uint64_t a, std::uint64_t b, std::uint64_t m) {
    return static_cast<std::uint64_t>(static_cast<unsigned __int128>(a) * b % m);
}

inline std::uint64_t pow_mod(std::uint64_t base, std::uint64_t exp, std::uint64_t m) {
    std::uint64_t result = 1 % m;
    base %= m;
    while (exp > 0) {
        if (exp & 1U) {
            result = mul_mod(result, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1U;
    }
    return result;
}

inline std::uint64_t isqrt(std::uint64_t n) {
    auto r = static_cast<std::uint64_t>(std::sqrt(static_cast<long double>(n)));
    while (r > 0 && r * r > n) {
        --r;
    }
    while ((r + 1) * (r + 1) <= n) {
        ++r;
    }
    return r;
}

}  // namespace detail

// Exact for every 64-bit n: the first twelve primes form a deterministic
// witness set below 3.3 * 10^24.
inline bool is_prime_u64(std::uint64_t n) {
    if (n < 2) {
        return false;
    }
    constexpr std::uint64_t kSmall[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37};
    for (std::uint64_t p : kSmall) {
        if (n % p == 0) {
            return n == p;
        }
    }
    std::uint64_t d = n - 1;
    int s = 0;
    while ((d & 1U) == 0) {
        d >>= 1U;
        ++s;
    }
    for (std::uint64_t a : kSmall) {
        std::uint64_t v = detail::pow_mod(a, d, n);
        if (v == 1 || v == n - 1) {
            continue;
        }
        bool composite = true;
        for (int k = 1; k < s; ++k) {
            v = detail::mul_mod(v, v, n);
            if (v == n - 1) {
                composite = false;
                break;
            }
        }
        if (composite) {
            return false;
        }
    }
    return true;
}

// Simple sieve, for base primes and small tables.
inline std::vector<std::uint64_t> primes_up_to(std::uint64_t limit) {
    std::vector<std::uint64_t> out;
    if (limit < 2) {
        return out;
    }
    require_memory(limit / 2 + 1, "primes_up_to");
    std::vector<std::uint8_t> composite(limit / 2 + 1, 0);  // index i -> 2i+1
    out.push_back(2);
    for (std::uint64_t i = 1; 2 * i + 1 <= limit; ++i) {
        if (composite[i] != 0U) {
            continue;
        }
        const std::uint64_t p = 2 * i + 1;
        out.push_back(p);
        for (std::uint64_t m = p * p; m <= limit; m += 2 * p) {
            composite[m / 2] = 1;
        }
    }
    return out;
}

// Calls fn(p) for every prime p in [lo, hi] in increasing order. fn may return
// false to stop early (a void-returning callable never stops).
template <class Fn>
void for_each_prime(std::uint64_t lo, std::uint64_t hi, Fn&& fn,
                    std::uint64_t segment_entries = kDefaultSegmentEntries) {
    if (hi < 2 || lo > hi) {
        return;
    }
    auto emit = [&fn](std::uint64_t p) -> bool {
        if constexpr (std::is_same_v<std::invoke_result_t<Fn&, std::uint64_t>, bool>) {
            return fn(p);
        } else {
            fn(p);
            return true;
        }
    };
    if (lo <= 2) {
        if (!emit(2)) {
            return;
        }
    }
    const std::uint64_t root = detail::isqrt(hi);
    const std::vector<std::uint64_t> base = primes_up_to(root);
    if (segment_entries == 0) {
        segment_entries = kDefaultSegmentEntries;
    }
    std::uint64_t first_odd = std::max<std::uint64_t>(lo, 3) | 1U;
    std::vector<std::uint8_t> seg;
    while (first_odd <= hi) {
        const std::uint64_t span_entries = (hi - first_odd) / 2 + 1;
        const std::uint64_t n = std::min(segment_entries, span_entries);
        const std::uint64_t last = first_odd + 2 * (n - 1);
        seg.assign(n, 1);
        for (std::size_t k = 1; k < base.size(); ++k) {
            const std::uint64_t p = base[k];
            if (p * p > last) {
                break;
            }
            std::uint64_t start = std::max(p * p, (first_odd + p - 1) / p * p);
            if ((start & 1U) == 0) {
                start += p;
            }
            for (std::uint64_t m = start; m <= last; m += 2 * p) {
                seg[(m - first_odd) / 2] = 0;
            }
        }
        for (std::uint64_t i = 0; i < n; ++i) {
            const std::uint64_t v = first_odd + 2 * i;
            if (seg[i] != 0U && v > 1) {
                if (!emit(v)) {
                    return;
                }
            }
        }
        if (last >= hi || hi - last < 2) {
            break;
        }
        first_odd = last + 2;
    }
}

// ---------------------------------------------------------------------------
// PrimeTable
// ---------------------------------------------------------------------------

// Primality bitmask over [lo, hi] plus the sorted list of primes in range.
class PrimeTable {
public:
    PrimeTable() = default;

    std::uint64_t lo() const { return lo_; }
    std::uint64_t hi() const { return hi_; }
    std::span<const std::uint64_t> primes() const { return primes_; }
    std::size_t count() const { return primes_.size(); }

    bool contains(std::uint64_t n) const { return n >= lo_ && n <= hi_; }

    bool is_prime(std::uint64_t n) const {
        if (!contains(n)) {
            throw std::out_of_range("PrimeTable::is_prime: " + std::to_string(n) + " outside [" +
                                    std::to_string(lo_) + ", " + std::to_string(hi_) + "]");
        }
        if (n == 2) {
            return true;
        }
        if (n < 2 || (n & 1U) == 0) {
            return false;
        }
        const std::uint64_t idx = (n - first_odd_) / 2;
        return ((bits_[idx / 64] >> (idx % 64)) & 1U) != 0;
    }

    // Number of primes in [a, b] (both clamped to the table range).
    std::size_t count_between(std::uint64_t a, std::uint64_t b) const {
        if (a > b) {
            return 0;
        }
        auto first = std::lower_bound(primes_.begin(), primes_.end(), a);
        auto last = std::upper_bound(primes_.begin(), primes_.end(), b);
        return first < last ? static_cast<std::size_t>(last - first) : 0;
    }

    // Primes in [a, b], as a view into the table.
    std::span<const std::uint64_t> primes_between(std::uint64_t a, std::uint64_t b) const {
        auto first = std::lower_bound(primes_.begin(), primes_.end(), a);
        auto last = std::upper_bound(primes_.begin(), primes_.end(), b);
        if (first >= last) {
            return {};
        }
        return {&*first, static_cast<std::size_t>(last - first)};
    }

private:
    friend PrimeTable sieve_range(std::uint64_t lo, std::uint64_t hi, std::uint64_t segment_entries);

    std::uint64_t lo_ = 0;
    std::uint64_t hi_ = 0;
    std::uint64_t first_odd_ = 1;
    std::vector<std::uint64_t> bits_;
    std::vector<std::uint64_t> primes_;
};

inline PrimeTable sieve_range(std::uint64_t lo, std::uint64_t hi,
                              std::uint64_t segment_entries = kDefaultSegmentEntries) {
    if (lo >= hi) {
        throw invalid_parameter("sieve_range: need lo < hi");
    }
    const std::uint64_t width = hi - lo + 1;
    // Bitmask plus a prime list sized by a generous pi(x) estimate.
    const double log_hi = std::log(static_cast<double>(std::max<std::uint64_t>(hi, 3)));
    const auto est_primes = static_cast<std::uint64_t>(1.3 * static_cast<double>(width) / log_hi) + 64;
    require_memory(width / 16 + 8 + est_primes * 8, "sieve_range");

    PrimeTable t;
    t.lo_ = lo;
    t.hi_ = hi;
    t.first_odd_ = lo | 1U;
    const std::uint64_t odd_entries = hi >= t.first_odd_ ? (hi - t.first_odd_) / 2 + 1 : 0;
    t.bits_.assign((odd_entries + 63) / 64, 0);
    for_each_prime(lo, hi, [&t](std::uint64_t p) {
        t.primes_.push_back(p);
        if (p != 2) {
            const std::uint64_t idx = (p - t.first_odd_) / 2;
            t.bits_[idx / 64] |= std::uint64_t{1} << (idx % 64);
        }
    }, segment_entries);
    return t;
}

// ---------------------------------------------------------------------------
// Primorial
// ---------------------------------------------------------------------------

inline BigInt primorial(std::uint64_t x) {
    if (x < 2) {
        throw invalid_parameter("primorial: need x >= 2");
    }
    BigInt product = 1;
    for_each_prime(2, x, [&product](std::uint64_t p) { product *= p; });
    return product;
}

// ---------------------------------------------------------------------------
// Gaps between consecutive primes below X
// ---------------------------------------------------------------------------

struct GapRecord {
    std::uint64_t start = 0;
    std::uint64_t gap = 0;

    friend bool operator==(const GapRecord&, const GapRecord&) = default;
};

// Record-setting gaps between consecutive primes p < q <= X, in increasing
// start order. Each gap strictly exceeds every earlier gap.
inline std::vector<GapRecord> gap_records(std::uint64_t X,
                                          std::uint64_t segment_entries = kDefaultSegmentEntries) {
    if (X < 3) {
        throw invalid_parameter("gap_records: need X >= 3 (two primes up to X)");
    }
    std::vector<GapRecord> records;
    std::uint64_t prev = 0;
    std::uint64_t best = 0;
    for_each_prime(2, X, [&](std::uint64_t p) {
        if (prev != 0 && p - prev > best) {
            best = p - prev;
            records.push_back({prev, best});
        }
        prev = p;
    }, segment_entries);
    return records;
}

// Largest gap between consecutive primes up to X; ties go to the smallest
// start.
inline GapRecord max_gap(std::uint64_t X, std::uint64_t segment_entries = kDefaultSegmentEntries) {
    return gap_records(X, segment_entries).back();
}

struct MeritRow {
    std::uint64_t gap = 0;
    std::uint64_t start = 0;
    double merit = 0.0;   // gap / log(start)
    double merit2 = 0.0;  // gap / log^2(start)
};

// Normalized gap sizes for every record below X. Descriptive only.
inline std::vector<MeritRow> merit_report(std::uint64_t X) {
    std::vector<MeritRow> rows;
    for (const GapRecord& rec : gap_records(X)) {
        const double l = std::log(static_cast<double>(rec.start));
        rows.push_back({rec.gap, rec.start, static_cast<double>(rec.gap) / l,
                        static_cast<double>(rec.gap) / (l * l)});
    }
    return rows;
}

}  // namespace primegap
