#pragma once

// Test-only reference implementations. These deliberately share no code with
// the library paths they check: trial division instead of sieving, full
// enumeration instead of pruned search, direct factorization instead of
// marking multiples.

#include <cstdint>
#include <map>
#include <vector>

namespace oracle {

inline bool trial_division_is_prime(std::uint64_t n) {
    if (n < 2) {
        return false;
    }
    for (std::uint64_t d = 2; d * d <= n; ++d) {
        if (n % d == 0) {
            return false;
        }
    }
    return true;
}

inline std::vector<std::uint64_t> trial_division_primes(std::uint64_t lo, std::uint64_t hi) {
    std::vector<std::uint64_t> out;
    for (std::uint64_t n = lo; n <= hi; ++n) {
        if (trial_division_is_prime(n)) {
            out.push_back(n);
        }
    }
    return out;
}

inline std::uint64_t largest_prime_factor(std::uint64_t n) {
    std::uint64_t best = 1;
    for (std::uint64_t d = 2; d * d <= n; ++d) {
        while (n % d == 0) {
            best = d;
            n /= d;
        }
    }
    return n > 1 ? n : best;
}

inline bool is_smooth(std::uint64_t n, std::uint64_t z) { return largest_prime_factor(n) <= z; }

// Streaming re-scan of records with a different primality source (trial
// division on odd candidates with a running prime list).
struct Record {
    std::uint64_t start;
    std::uint64_t gap;
};

inline std::vector<Record> rescan_gap_records(std::uint64_t X) {
    std::vector<std::uint64_t> found;  // primes so far, for trial division
    std::vector<Record> out;
    std::uint64_t prev = 0;
    std::uint64_t best = 0;
    for (std::uint64_t n = 2; n <= X; ++n) {
        bool prime = true;
        for (std::uint64_t p : found) {
            if (p * p > n) {
                break;
            }
            if (n % p == 0) {
                prime = false;
                break;
            }
        }
        if (!prime) {
            continue;
        }
        found.push_back(n);
        if (prev != 0 && n - prev > best) {
            best = n - prev;
            out.push_back({prev, best});
        }
        prev = n;
    }
    return out;
}

// Y(x) by enumerating every residue tuple: for each tuple the covered prefix
// length, maximized. Only for tiny x (product of primes up to ~ 10^5).
inline std::uint64_t brute_force_Y(const std::vector<std::uint64_t>& primes) {
    std::vector<std::uint64_t> a(primes.size(), 0);
    std::uint64_t best = 0;
    for (;;) {
        std::uint64_t t = 1;
        for (;; ++t) {
            bool hit = false;
            for (std::size_t k = 0; k < primes.size(); ++k) {
                if (t % primes[k] == a[k]) {
                    hit = true;
                    break;
                }
            }
            if (!hit) {
                break;
            }
        }
        best = std::max(best, t - 1);
        std::size_t k = 0;
        while (k < a.size() && ++a[k] == primes[k]) {
            a[k] = 0;
            ++k;
        }
        if (k == a.size()) {
            break;
        }
    }
    return best;
}

// Longest run of consecutive integers each divisible by some prime in the
// list, scanned directly over one period plus slack; j = run + 1.
inline std::uint64_t jacobsthal_by_runs(const std::vector<std::uint64_t>& primes) {
    std::uint64_t period = 1;
    for (std::uint64_t p : primes) {
        period *= p;
    }
    std::uint64_t run = 0;
    std::uint64_t best = 0;
    for (std::uint64_t n = 0; n <= 2 * period; ++n) {
        bool divisible = false;
        for (std::uint64_t p : primes) {
            if (n % p == 0) {
                divisible = true;
                break;
            }
        }
        run = divisible ? run + 1 : 0;
        best = std::max(best, run);
    }
    return best + 1;
}

}  // namespace oracle
