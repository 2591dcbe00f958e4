#pragma once

// Residue-class coverings of [1, y], the Jacobsthal function, and
// certificates for runs of consecutive composites.
//
// A covering assigns one class a_p (mod p) to primes p <= x. Covering is
// monotone in added classes, so partial assignments are allowed everywhere;
// a partial covering extends to a total one by giving the missing primes any
// class.

#include "primegap/common.hpp"
#include "primegap/primes.hpp"

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace primegap {

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

class ResidueAssignment {
public:
    ResidueAssignment() = default;
    explicit ResidueAssignment(std::uint64_t x) : x_(x) {}

    std::uint64_t x() const { return x_; }

    // Sets a_p. p must be a prime <= x and a must lie in [0, p).
    void set(std::uint64_t p, std::uint64_t a) {
        if (p > x_ || !is_prime_u64(p)) {
            throw invalid_parameter("residue class key " + std::to_string(p) +
                                    " is not a prime <= x = " + std::to_string(x_));
        }
        if (a >= p) {
            throw invalid_parameter("residue " + std::to_string(a) + " not in [0, " + std::to_string(p) + ")");
        }
        classes_[p] = a;
    }

    std::optional<std::uint64_t> get(std::uint64_t p) const {
        auto it = classes_.find(p);
        if (it == classes_.end()) {
            return std::nullopt;
        }
        return it->second;
    }

    bool contains(std::uint64_t p) const { return classes_.contains(p); }
    std::size_t size() const { return classes_.size(); }
    bool empty() const { return classes_.empty(); }
    const std::map<std::uint64_t, std::uint64_t>& classes() const { return classes_; }

    // Copies every class of `other` (which must share or lie below this x).
    void merge(const ResidueAssignment& other) {
        for (const auto& [p, a] : other.classes_) {
            set(p, a);
        }
    }

    // True iff every prime <= x has a class.
    bool is_total() const {
        std::size_t primes = 0;
        for_each_prime(2, x_, [&primes](std::uint64_t) { ++primes; });
        return primes == classes_.size();
    }

    friend bool operator==(const ResidueAssignment&, const ResidueAssignment&) = default;

private:
    std::uint64_t x_ = 0;
    std::map<std::uint64_t, std::uint64_t> classes_;
};

// Coverage of [1, y]: covered[t-1] for position t, plus the uncovered
// positions in increasing order.
struct SieveInterval {
    std::uint64_t y = 0;
    std::vector<bool> covered;
    std::vector<std::uint64_t> survivors;

    bool is_covered(std::uint64_t t) const { return covered.at(t - 1); }

    // Covers every t in [1, y] with t = a (mod p) and refreshes survivors.
    // Returns the number of newly covered positions.
    std::uint64_t sieve(std::uint64_t p, std::uint64_t a) {
        std::uint64_t fresh = 0;
        for (std::uint64_t t = (a == 0 ? p : a); t <= y; t += p) {
            if (!covered[t - 1]) {
                covered[t - 1] = true;
                ++fresh;
            }
        }
        if (fresh != 0) {
            std::erase_if(survivors, [this](std::uint64_t t) { return covered[t - 1]; });
        }
        return fresh;
    }

    // Covers individual positions (no residue structure).
    std::uint64_t remove(std::span<const std::uint64_t> positions) {
        std::uint64_t fresh = 0;
        for (std::uint64_t t : positions) {
            if (t >= 1 && t <= y && !covered[t - 1]) {
                covered[t - 1] = true;
                ++fresh;
            }
        }
        if (fresh != 0) {
            std::erase_if(survivors, [this](std::uint64_t t) { return covered[t - 1]; });
        }
        return fresh;
    }

    // Largest y' such that [1, y'] is fully covered.
    std::uint64_t covered_prefix() const { return survivors.empty() ? y : survivors.front() - 1; }
};

inline SieveInterval empty_interval(std::uint64_t y) {
    require_memory(y / 8 + y * 8, "sieve interval");
    SieveInterval s;
    s.y = y;
    s.covered.assign(y, false);
    s.survivors.resize(y);
    std::iota(s.survivors.begin(), s.survivors.end(), std::uint64_t{1});
    return s;
}

// For each 1 <= t <= y a prime p with p | m + t and m + t > p.
struct CompositeRunCertificate {
    BigInt m = 0;
    std::uint64_t y = 0;
    std::vector<std::pair<std::uint64_t, std::uint64_t>> witnesses;  // (t, p)

    friend bool operator==(const CompositeRunCertificate&, const CompositeRunCertificate&) = default;
};

// ---------------------------------------------------------------------------
// Applying and verifying coverings
// ---------------------------------------------------------------------------

inline SieveInterval apply_classes(std::uint64_t y, const ResidueAssignment& assignment) {
    if (y < 1) {
        throw invalid_parameter("apply_classes: need y >= 1");
    }
    SieveInterval s;
    s.y = y;
    require_memory(y / 8 + y * 8, "apply_classes");
    s.covered.assign(y, false);
    for (const auto& [p, a] : assignment.classes()) {
        for (std::uint64_t t = (a == 0 ? p : a); t <= y; t += p) {
            s.covered[t - 1] = true;
        }
    }
    for (std::uint64_t t = 1; t <= y; ++t) {
        if (!s.covered[t - 1]) {
            s.survivors.push_back(t);
        }
    }
    return s;
}

inline bool verify_cover(std::uint64_t y, const ResidueAssignment& assignment) {
    if (y == 0) {
        return true;
    }
    return apply_classes(y, assignment).survivors.empty();
}

// ---------------------------------------------------------------------------
// Greedy coverings
// ---------------------------------------------------------------------------

enum class GreedyOrder { increasing, decreasing };

struct CoverResult {
    std::uint64_t y = 0;
    ResidueAssignment witness;
    bool optimal = false;        // exact search proved no larger y is coverable
    std::uint64_t nodes = 0;     // search nodes visited (exact search only)
};

namespace detail {

inline std::vector<std::uint64_t> primes_list(std::uint64_t x) {
    std::vector<std::uint64_t> ps;
    for_each_prime(2, x, [&ps](std::uint64_t p) { ps.push_back(p); });
    return ps;
}

// Residue with the most survivors; ties go to the smallest residue.
inline std::pair<std::uint64_t, std::uint64_t> best_class(std::span<const std::uint64_t> survivors,
                                                          std::uint64_t p, std::vector<std::uint64_t>& counts) {
    counts.assign(p, 0);
    for (std::uint64_t t : survivors) {
        ++counts[t % p];
    }
    std::uint64_t best = 0;
    for (std::uint64_t a = 1; a < p; ++a) {
        if (counts[a] > counts[best]) {
            best = a;
        }
    }
    return {best, counts[best]};
}

}  // namespace detail

// Runs the greedy heuristic on [1, y]: primes in the given order, each taking
// the class with the most current survivors. Returns the assignment if it
// covers [1, y].
inline std::optional<ResidueAssignment> greedy_cover(std::uint64_t x, std::uint64_t y,
                                                     GreedyOrder order = GreedyOrder::increasing) {
    std::vector<std::uint64_t> ps = detail::primes_list(x);
    if (order == GreedyOrder::decreasing) {
        std::reverse(ps.begin(), ps.end());
    }
    std::vector<std::uint64_t> survivors(y);
    std::iota(survivors.begin(), survivors.end(), std::uint64_t{1});
    ResidueAssignment out(x);
    std::vector<std::uint64_t> counts;
    for (std::uint64_t p : ps) {
        const auto [a, hits] = detail::best_class(survivors, p, counts);
        out.set(p, a);
        if (hits != 0) {
            std::erase_if(survivors, [p, a](std::uint64_t t) { return t % p == a; });
        }
    }
    if (!survivors.empty()) {
        return std::nullopt;
    }
    return out;
}

// Largest y found by binary search over greedy_cover. The greedy predicate is
// not monotone in y; the search keeps a covered lower end and an uncovered
// upper end, so the result is always a verified covering.
inline CoverResult greedy_Y(std::uint64_t x, GreedyOrder order = GreedyOrder::increasing) {
    if (x < 2) {
        throw invalid_parameter("greedy_Y: need x >= 2");
    }
    std::uint64_t lo = 1;
    ResidueAssignment best = *greedy_cover(x, 1, order);  // p = 2 alone covers [1, 1]
    std::uint64_t hi = 2;
    while (auto w = greedy_cover(x, hi, order)) {
        lo = hi;
        best = std::move(*w);
        hi *= 2;
    }
    while (hi - lo > 1) {
        const std::uint64_t mid = lo + (hi - lo) / 2;
        if (auto w = greedy_cover(x, mid, order)) {
            lo = mid;
            best = std::move(*w);
        } else {
            hi = mid;
        }
    }
    return {lo, std::move(best), false, 0};
}

// ---------------------------------------------------------------------------
// Exact Y(x): depth-first search over residue tuples
// ---------------------------------------------------------------------------

struct ExactSearchOptions {
    std::uint64_t node_budget = 1'000'000'000;
    unsigned threads = 0;  // 0: hardware concurrency
};

namespace detail {

struct BudgetExhausted {};

// Decides whether [1, y] can be covered by one class per prime in `primes`
// (processed in the given order). Shares the node counter and stop flag.
class CoverSearch {
public:
    CoverSearch(std::uint64_t y, std::vector<std::uint64_t> primes, std::atomic<std::uint64_t>& nodes,
                std::uint64_t budget, std::atomic<bool>& stop)
        : y_(y), primes_(std::move(primes)), nodes_(nodes), budget_(budget), stop_(stop),
          choice_(primes_.size(), 0) {}

    // Search below a fixed first choice a for primes_[0] (or every choice if
    // a is nullopt). Throws BudgetExhausted.
    bool run(std::span<const std::uint64_t> survivors, std::optional<std::uint64_t> first_choice) {
        if (first_choice) {
            const std::uint64_t p = primes_[0];
            const std::uint64_t a = *first_choice;
            choice_[0] = a;
            std::vector<std::uint64_t> next;
            for (std::uint64_t t : survivors) {
                if (t % p != a) {
                    next.push_back(t);
                }
            }
            return dfs(1, next);
        }
        return dfs(0, {survivors.begin(), survivors.end()});
    }

    ResidueAssignment witness(std::uint64_t x) const {
        ResidueAssignment out(x);
        for (std::size_t k = 0; k < primes_.size(); ++k) {
            out.set(primes_[k], choice_[k]);
        }
        return out;
    }

private:
    bool dfs(std::size_t depth, const std::vector<std::uint64_t>& survivors) {
        if (stop_.load(std::memory_order_relaxed)) {
            return false;
        }
        if (nodes_.fetch_add(1, std::memory_order_relaxed) >= budget_) {
            throw BudgetExhausted{};
        }
        if (survivors.empty()) {
            for (std::size_t k = depth; k < primes_.size(); ++k) {
                choice_[k] = 0;
            }
            return true;
        }
        if (depth == primes_.size()) {
            return false;
        }
        // Upper bound: every remaining prime removes at most its largest class.
        std::uint64_t capacity = 0;
        for (std::size_t k = depth; k < primes_.size() && capacity < survivors.size(); ++k) {
            capacity += detail::best_class(survivors, primes_[k], counts_).second;
        }
        if (capacity < survivors.size()) {
            return false;
        }
        const std::uint64_t p = primes_[depth];
        std::vector<std::uint64_t> counts(p, 0);
        for (std::uint64_t t : survivors) {
            ++counts[t % p];
        }
        std::vector<std::uint64_t> order;
        for (std::uint64_t a = 0; a < p; ++a) {
            if (counts[a] != 0) {
                order.push_back(a);
            }
        }
        // Reflection t -> y + 1 - t maps coverings to coverings; for even y it
        // swaps the two classes mod 2, so a_2 = 1 loses nothing.
        if (p == 2 && y_ % 2 == 0) {
            std::erase(order, std::uint64_t{0});
        }
        std::stable_sort(order.begin(), order.end(),
                         [&counts](std::uint64_t a, std::uint64_t b) { return counts[a] > counts[b]; });
        std::vector<std::uint64_t> next;
        for (std::uint64_t a : order) {
            next.clear();
            for (std::uint64_t t : survivors) {
                if (t % p != a) {
                    next.push_back(t);
                }
            }
            choice_[depth] = a;
            if (dfs(depth + 1, next)) {
                return true;
            }
        }
        return false;
    }

    std::uint64_t y_;
    std::vector<std::uint64_t> primes_;
    std::atomic<std::uint64_t>& nodes_;
    std::uint64_t budget_;
    std::atomic<bool>& stop_;
    std::vector<std::uint64_t> choice_;
    std::vector<std::uint64_t> counts_;
};

// Parallel over the classes of the largest prime. Returns the witness when
// [1, y] is coverable.
inline std::optional<ResidueAssignment> coverable(std::uint64_t x, std::uint64_t y,
                                                  std::atomic<std::uint64_t>& nodes, std::uint64_t budget,
                                                  unsigned threads) {
    std::vector<std::uint64_t> ps = primes_list(x);
    std::reverse(ps.begin(), ps.end());
    std::vector<std::uint64_t> survivors(y);
    std::iota(survivors.begin(), survivors.end(), std::uint64_t{1});

    const std::uint64_t top = ps.front();
    std::vector<std::uint64_t> counts(top, 0);
    for (std::uint64_t t : survivors) {
        ++counts[t % top];
    }
    // Empty classes are never better than a nonempty one.
    std::vector<std::uint64_t> firsts;
    for (std::uint64_t a = 0; a < top; ++a) {
        if (counts[a] != 0 && !(top == 2 && y % 2 == 0 && a == 0)) {
            firsts.push_back(a);
        }
    }
    std::stable_sort(firsts.begin(), firsts.end(),
                     [&counts](std::uint64_t a, std::uint64_t b) { return counts[a] > counts[b]; });

    std::atomic<bool> stop{false};
    std::atomic<std::size_t> next_branch{0};
    std::mutex mu;
    std::optional<ResidueAssignment> found;
    bool exhausted = false;

    auto worker = [&] {
        CoverSearch search(y, ps, nodes, budget, stop);
        for (;;) {
            const std::size_t k = next_branch.fetch_add(1);
            if (k >= firsts.size() || stop.load()) {
                return;
            }
            try {
                if (search.run(survivors, firsts[k])) {
                    std::lock_guard lock(mu);
                    if (!found) {
                        found = search.witness(x);
                    }
                    stop.store(true);
                    return;
                }
            } catch (const BudgetExhausted&) {
                std::lock_guard lock(mu);
                exhausted = true;
                stop.store(true);
                return;
            }
        }
    };

    unsigned n = threads == 0 ? std::max(1U, std::thread::hardware_concurrency()) : threads;
    n = static_cast<unsigned>(std::min<std::size_t>(n, firsts.size()));
    if (n <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned k = 0; k < n; ++k) {
            pool.emplace_back(worker);
        }
    }
    if (found) {
        return found;
    }
    if (exhausted) {
        throw BudgetExhausted{};
    }
    return std::nullopt;
}

}  // namespace detail

// Y(x): the largest y such that [1, y] is covered by one class per prime
// p <= x. Starts from the greedy lower bound and raises y until the exhaustive
// search proves [1, y + 1] uncoverable. If the node budget runs out, returns
// the best covering found with optimal = false.
inline CoverResult exact_Y(std::uint64_t x, const ExactSearchOptions& options = {}) {
    if (x < 2) {
        throw invalid_parameter("exact_Y: need x >= 2");
    }
    CoverResult best = greedy_Y(x, GreedyOrder::increasing);
    CoverResult alt = greedy_Y(x, GreedyOrder::decreasing);
    if (alt.y > best.y) {
        best = std::move(alt);
    }
    std::atomic<std::uint64_t> nodes{0};
    for (std::uint64_t y = best.y + 1;; ++y) {
        try {
            auto w = detail::coverable(x, y, nodes, options.node_budget, options.threads);
            if (!w) {
                best.optimal = true;
                break;
            }
            best.y = y;
            best.witness = std::move(*w);
        } catch (const detail::BudgetExhausted&) {
            best.optimal = false;
            break;
        }
    }
    best.nodes = nodes.load();
    return best;
}

// ---------------------------------------------------------------------------
// Jacobsthal function
// ---------------------------------------------------------------------------

struct JacobsthalOptions {
    std::uint64_t trial_division_limit = 1'000'000;
    std::uint64_t max_period = 10'000'000'000ULL;  // largest radical scanned
    std::uint64_t segment = std::uint64_t{1} << 22;
};

// Distinct prime factors of n by trial division. Throws
// factorization_unavailable if a cofactor above the trial limit remains and
// cannot be certified prime (n beyond 64 bits).
inline std::vector<std::uint64_t> distinct_prime_factors(const BigInt& n, std::uint64_t trial_limit = 1'000'000) {
    if (n < 1) {
        throw invalid_parameter("distinct_prime_factors: need n >= 1");
    }
    std::vector<std::uint64_t> out;
    BigInt rest = n;
    const std::vector<std::uint64_t> small = primes_up_to(trial_limit);
    for (std::uint64_t p : small) {
        if (rest == 1) {
            break;
        }
        if (BigInt(p) * p > rest) {
            break;
        }
        if (rest % p == 0) {
            out.push_back(p);
            while (rest % p == 0) {
                rest /= p;
            }
        }
    }
    if (rest > 1) {
        if (rest <= std::numeric_limits<std::uint64_t>::max()) {
            const auto r = rest.convert_to<std::uint64_t>();
            // Every factor <= min(trial_limit, sqrt) is gone; rest is prime if
            // trial division ran past its square root, or MR says so.
            if (is_prime_u64(r)) {
                out.push_back(r);
            } else {
                throw factorization_unavailable("cofactor " + rest.str() + " has no prime factor <= " +
                                                std::to_string(trial_limit));
            }
        } else {
            throw factorization_unavailable("cofactor " + rest.str() + " exceeds 64 bits after trial division");
        }
    }
    return out;
}

// j(n) from the distinct primes dividing n: the longest gap between
// consecutive integers coprime to n, found by scanning one period.
inline std::uint64_t jacobsthal_from_primes(std::span<const std::uint64_t> primes,
                                            const JacobsthalOptions& options = {}) {
    if (primes.empty()) {
        return 1;
    }
    unsigned __int128 rad = 1;
    for (std::uint64_t p : primes) {
        rad *= p;
        if (rad > options.max_period) {
            throw search_budget_exceeded("jacobsthal: period exceeds the scan limit of " +
                                         std::to_string(options.max_period));
        }
    }
    const auto period = static_cast<std::uint64_t>(rad);
    // 1 and period + 1 are both coprime; gaps inside [1, period + 1] are all gaps.
    const std::uint64_t end = period + 1;
    std::uint64_t last = 1;
    std::uint64_t best = 0;
    std::vector<std::uint8_t> blocked;
    for (std::uint64_t lo = 2; lo <= end; lo += options.segment) {
        const std::uint64_t hi = std::min(end, lo + options.segment - 1);
        blocked.assign(hi - lo + 1, 0);
        for (std::uint64_t p : primes) {
            for (std::uint64_t m = (lo + p - 1) / p * p; m <= hi; m += p) {
                blocked[m - lo] = 1;
            }
        }
        for (std::uint64_t v = lo; v <= hi; ++v) {
            if (blocked[v - lo] == 0U) {
                best = std::max(best, v - last);
                last = v;
            }
        }
    }
    return best;
}

inline std::uint64_t jacobsthal(const BigInt& n, const JacobsthalOptions& options = {}) {
    if (n < 1) {
        throw invalid_parameter("jacobsthal: need n >= 1");
    }
    const auto ps = distinct_prime_factors(n, options.trial_division_limit);
    return jacobsthal_from_primes(ps, options);
}

// ---------------------------------------------------------------------------
// CRT assembly and certificate checking
// ---------------------------------------------------------------------------

// Smallest m in (x, x + P(x)] with m = -a_p (mod p) for every p <= x, with a
// witness prime for each of m+1, ..., m+y.
inline CompositeRunCertificate crt_assemble(const ResidueAssignment& assignment, std::uint64_t y) {
    const std::uint64_t x = assignment.x();
    if (x < 2) {
        throw invalid_parameter("crt_assemble: need x >= 2");
    }
    if (!assignment.is_total()) {
        throw invalid_parameter("crt_assemble: assignment must give a class to every prime <= x");
    }
    if (!verify_cover(y, assignment)) {
        throw invalid_parameter("crt_assemble: assignment does not cover [1, " + std::to_string(y) + "]");
    }
    BigInt residue = 0;
    BigInt modulus = 1;
    for (const auto& [p, a] : assignment.classes()) {
        const std::uint64_t target = (p - a) % p;  // -a_p mod p
        // Solve residue + modulus * k = target (mod p).
        const auto mod_p = static_cast<std::uint64_t>(modulus % p);
        const auto res_p = static_cast<std::uint64_t>(residue % p);
        const std::uint64_t inv = detail::pow_mod(mod_p, p - 2, p);  // p prime, gcd(modulus, p) = 1
        const std::uint64_t diff = (target + p - res_p) % p;
        const std::uint64_t k = detail::mul_mod(diff, inv, p);
        residue += modulus * k;
        modulus *= p;
    }
    BigInt m = residue;
    while (m <= x) {
        m += modulus;
    }
    CompositeRunCertificate cert;
    cert.m = m;
    cert.y = y;
    cert.witnesses.reserve(y);
    for (std::uint64_t t = 1; t <= y; ++t) {
        for (const auto& [p, a] : assignment.classes()) {
            if (t % p == a) {
                cert.witnesses.emplace_back(t, p);
                break;
            }
        }
    }
    return cert;
}

// Accepts iff there is exactly one witness per t in [1, y] and each witness
// (t, p) has p >= 2, p | m + t and m + t > p. Independent of how the
// certificate was produced.
inline bool check_certificate(const CompositeRunCertificate& cert) {
    if (cert.m < 1) {
        return false;
    }
    if (cert.witnesses.size() != cert.y) {
        return false;
    }
    std::vector<bool> seen(cert.y, false);
    for (const auto& [t, p] : cert.witnesses) {
        if (t < 1 || t > cert.y || seen[t - 1] || p < 2) {
            return false;
        }
        seen[t - 1] = true;
        const BigInt value = cert.m + t;
        if (value % p != 0 || value <= p) {
            return false;
        }
    }
    return true;
}

}  // namespace primegap
