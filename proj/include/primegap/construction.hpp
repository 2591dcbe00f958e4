#pragma once

// Four-stage randomized residue-class sieve covering [1, y] with one class
// per prime s <= x.
//
//   stage 1  a_s = 0 on S1 = {s <= log x} u (z, x/4]
//   stage 2  a_s uniform on S2 = (log x, z]
//   stage 3  for p in (x/2, x], a_p = q_p mod p where q_p is a uniformly
//            chosen start of an r-term prime progression q, q + r!p, ...
//   stage 4  leftover survivors matched one-to-one to (x/4, x/2] plus any
//            unused stage-3 primes
//
// All logarithms are natural. Random choices are keyed on (seed, prime), so
// a run is a pure function of its parameters.

#include "primegap/common.hpp"
#include "primegap/covering.hpp"
#include "primegap/primes.hpp"
#include "primegap/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace primegap {

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

struct ConstructionParams {
    std::uint64_t r = 2;
    std::uint64_t x = 0;
    std::optional<std::uint64_t> y;  // defaults to the y formula below
    std::optional<std::uint64_t> z;  // defaults to the z formula below
    double epsilon = 0.1;
    std::uint64_t seed = 0;
    double band = 0.5;  // tolerance for the degree diagnostics
};

struct ResolvedParams {
    std::uint64_t r = 2;
    std::uint64_t x = 0;
    std::uint64_t y = 0;
    std::uint64_t z = 0;
    double epsilon = 0.1;
    std::uint64_t seed = 0;
    double band = 0.5;
    bool y_defaulted = false;
    bool z_defaulted = false;
    double z_formula = 0;  // unfloored value of the z formula
    bool xy_window = false;  // x sqrt(log x) <= y <= x log x
    std::vector<std::string> warnings;
};

inline double log2_(double x) { return std::log(std::log(x)); }
inline double log3_(double x) { return std::log(std::log(std::log(x))); }

// floor(r / (6 log r) * x log x log_3 x / (log_2 x)^2); needs x > e^e.
inline double default_y_formula(std::uint64_t r, std::uint64_t x) {
    const double lx = std::log(static_cast<double>(x));
    const double l2 = log2_(static_cast<double>(x));
    const double l3 = log3_(static_cast<double>(x));
    const double rr = static_cast<double>(r);
    return rr / (6.0 * std::log(rr)) * static_cast<double>(x) * lx * l3 / (l2 * l2);
}

// x^(log_3 x / (3 log_2 x)); needs x > e^e.
inline double default_z_formula(std::uint64_t x) {
    const double xd = static_cast<double>(x);
    return std::pow(xd, log3_(xd) / (3.0 * log2_(xd)));
}

inline ResolvedParams resolve_params(const ConstructionParams& in) {
    ResolvedParams out;
    out.r = in.r;
    out.x = in.x;
    out.epsilon = in.epsilon;
    out.seed = in.seed;
    out.band = in.band;
    if (in.r < 2 || in.r > 12) {
        throw invalid_parameter("r must lie in [2, 12]");
    }
    if (in.x < 8) {
        throw invalid_parameter("x must be >= 8");
    }
    if (in.x > std::numeric_limits<std::uint32_t>::max() / 4) {
        throw invalid_parameter("x too large");
    }
    if (!(in.epsilon > 0 && in.epsilon < 1)) {
        throw invalid_parameter("epsilon must lie in (0, 1)");
    }
    if (!(in.band > 0)) {
        throw invalid_parameter("band must be positive");
    }
    const bool formulas_defined = in.x >= 16;  // log_3 x > 0
    out.z_formula = formulas_defined ? default_z_formula(in.x) : 0;
    if (in.z) {
        out.z = *in.z;
    } else {
        if (!formulas_defined) {
            throw invalid_parameter("default z needs x >= 16; pass z explicitly");
        }
        out.z_defaulted = true;
        out.z = static_cast<std::uint64_t>(std::floor(out.z_formula));
        if (out.z < 2) {
            out.warnings.push_back("default z = " + std::to_string(out.z_formula) +
                                   " is below 2; using z = 2");
            out.z = 2;
        }
    }
    if (out.z < 2 || 4 * out.z >= in.x) {
        throw invalid_parameter("z must satisfy 2 <= z < x/4");
    }
    if (in.y) {
        out.y = *in.y;
    } else {
        if (!formulas_defined) {
            throw invalid_parameter("default y needs x >= 16; pass y explicitly");
        }
        out.y_defaulted = true;
        out.y = static_cast<std::uint64_t>(std::floor(default_y_formula(in.r, in.x)));
    }
    if (4 * out.y <= in.x) {
        throw invalid_parameter("y must satisfy y > x/4");
    }
    if (out.y > std::numeric_limits<std::uint32_t>::max()) {
        throw invalid_parameter("y must be < 2^32");
    }
    const double xd = static_cast<double>(in.x);
    const double yd = static_cast<double>(out.y);
    const double lx = std::log(xd);
    out.xy_window = xd * std::sqrt(lx) <= yd && yd <= xd * lx;
    if (!out.xy_window) {
        out.warnings.push_back("y lies outside [x sqrt(log x), x log x]");
    }
    return out;
}

inline std::uint64_t factorial(std::uint64_t r) {
    std::uint64_t f = 1;
    for (std::uint64_t k = 2; k <= r; ++k) {
        f *= k;
    }
    return f;
}

// ---------------------------------------------------------------------------
// Partition
// ---------------------------------------------------------------------------

struct PrimePartition {
    std::vector<std::uint64_t> S1, S2, S3, S4;
};

inline PrimePartition partition_primes(const ResolvedParams& params) {
    const double lx = std::log(static_cast<double>(params.x));
    PrimePartition part;
    for (std::uint64_t p : primes_up_to(params.x)) {
        if (2 * p > params.x) {
            part.S3.push_back(p);
        } else if (4 * p > params.x) {
            part.S4.push_back(p);
        } else if (static_cast<double>(p) <= lx || p > params.z) {
            part.S1.push_back(p);
        } else {
            part.S2.push_back(p);
        }
    }
    return part;
}

namespace detail {

// Marks every class, then rebuilds the survivor list once.
inline void sieve_all(SieveInterval& s, const ResidueAssignment& classes) {
    for (const auto& [p, a] : classes.classes()) {
        for (std::uint64_t t = (a == 0 ? p : a); t <= s.y; t += p) {
            s.covered[t - 1] = true;
        }
    }
    std::erase_if(s.survivors, [&s](std::uint64_t t) { return s.covered[t - 1]; });
}

inline bool is_smooth(std::uint64_t n, const std::vector<std::uint64_t>& small_primes, std::uint64_t z) {
    for (std::uint64_t p : small_primes) {
        if (p > z) {
            break;
        }
        while (n % p == 0) {
            n /= p;
        }
    }
    return n == 1;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Stages 1 and 2
// ---------------------------------------------------------------------------

struct Stage1Result {
    ResidueAssignment assignment;
    SieveInterval interval;
    std::uint64_t q_primes = 0;   // survivors that are primes in (x/4, y]
    std::uint64_t smooth = 0;     // z-smooth survivors (1 included)
    std::uint64_t other = 0;      // neither; needs y >= (x/4) log x
    bool exhaustive = false;      // q_primes + smooth + other == #survivors
};

inline Stage1Result stage1(const ResolvedParams& params, const PrimePartition& part) {
    Stage1Result out;
    out.assignment = ResidueAssignment(params.x);
    for (std::uint64_t s : part.S1) {
        out.assignment.set(s, 0);
    }
    out.interval = empty_interval(params.y);
    detail::sieve_all(out.interval, out.assignment);
    const auto small = primes_up_to(params.z);
    for (std::uint64_t n : out.interval.survivors) {
        if (4 * n > params.x && is_prime_u64(n)) {
            ++out.q_primes;
        } else if (detail::is_smooth(n, small, params.z)) {
            ++out.smooth;
        } else {
            ++out.other;
        }
    }
    out.exhaustive = out.q_primes + out.smooth + out.other == out.interval.survivors.size();
    return out;
}

// a_s for s in S2, drawn uniformly from [0, s) keyed on (seed, s).
inline std::uint64_t stage2_residue(std::uint64_t seed, std::uint64_t s) {
    return keyed_uniform(seed, Stream::stage2_residue, s, s);
}

struct Stage2Result {
    ResidueAssignment assignment;
    SieveInterval interval;
    std::uint64_t q_before = 0;  // #Q
    std::uint64_t q_after = 0;   // #Q(a)
    Rational gamma = 1;
};

inline Rational gamma_of(const std::vector<std::uint64_t>& S2) {
    Rational g = 1;
    for (std::uint64_t s : S2) {
        g *= Rational(s - 1, s);
    }
    return g;
}

inline std::uint64_t count_q(const ResolvedParams& params, const SieveInterval& s) {
    std::uint64_t n = 0;
    for (std::uint64_t t : s.survivors) {
        n += (4 * t > params.x && is_prime_u64(t)) ? 1 : 0;
    }
    return n;
}

inline Stage2Result stage2(const ResolvedParams& params, const PrimePartition& part, const SieveInterval& after1) {
    Stage2Result out;
    out.assignment = ResidueAssignment(params.x);
    for (std::uint64_t s : part.S2) {
        out.assignment.set(s, stage2_residue(params.seed, s));
    }
    out.interval = after1;
    detail::sieve_all(out.interval, out.assignment);
    out.q_before = count_q(params, after1);
    out.q_after = count_q(params, out.interval);
    out.gamma = gamma_of(part.S2);
    return out;
}

struct GammaFactors {
    std::vector<Rational> gamma;  // gamma[i - 1] = prod_{s in S2} (1 - i/s)
    double max_rel_dev = 0;       // max_i |gamma_i / gamma^i - 1|
};

inline GammaFactors gamma_factors(const std::vector<std::uint64_t>& S2, std::uint64_t i_max) {
    GammaFactors out;
    if (!S2.empty() && *std::min_element(S2.begin(), S2.end()) <= i_max) {
        throw invalid_parameter("gamma_factors: i_max must be below min(S2)");
    }
    const Rational g1 = gamma_of(S2);
    Rational power = 1;
    for (std::uint64_t i = 1; i <= i_max; ++i) {
        Rational g = 1;
        for (std::uint64_t s : S2) {
            g *= Rational(s - i, s);
        }
        power *= g1;
        const double dev = std::abs(static_cast<double>(g / power) - 1.0);
        out.max_rel_dev = std::max(out.max_rel_dev, dev);
        out.gamma.push_back(g);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Relation graph between P = primes in (x/2, x] and Q = primes in (x/4, y]
// ---------------------------------------------------------------------------

// p |- q   iff q + j r! p lies in Q for every 0 <= j < r;
// p |-' q  iff additionally q + r r! p does not.
struct RelationGraph {
    std::uint64_t r = 0, x = 0, y = 0;
    std::uint64_t step = 0;  // r!
    std::vector<std::uint64_t> P;
    std::vector<std::uint64_t> Q;
    std::vector<std::vector<std::uint32_t>> primed;  // per p: q with p |-' q
    std::vector<std::vector<std::uint32_t>> extra;   // per p: q with p |- q but not |-'
    std::vector<std::vector<std::uint32_t>> deg_q;   // deg_q[i][k]: #{p : p |-' Q[k] - i r! p}
    std::uint64_t disj_violations = 0;

    // deg_i(p) = #{q : p |-' q - i r! p}; the same for every i < r.
    std::uint64_t deg_p(std::size_t k) const { return primed[k].size(); }

    std::size_t q_index(std::uint64_t q) const {
        return static_cast<std::size_t>(std::lower_bound(Q.begin(), Q.end(), q) - Q.begin());
    }

    std::uint64_t edge_count() const {
        std::uint64_t n = 0;
        for (const auto& v : primed) {
            n += v.size();
        }
        return n;
    }
};

namespace detail {

inline unsigned worker_count(std::size_t jobs) {
    const unsigned hw = std::max(1U, std::thread::hardware_concurrency());
    return static_cast<unsigned>(std::min<std::size_t>(hw, std::max<std::size_t>(jobs, 1)));
}

// Runs fn(k) for k in [0, n) split into contiguous chunks over worker threads.
template <class Fn>
void parallel_for(std::size_t n, Fn fn) {
    const unsigned w = worker_count(n / 64);
    if (w <= 1) {
        for (std::size_t k = 0; k < n; ++k) {
            fn(k);
        }
        return;
    }
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < w; ++t) {
        pool.emplace_back([=, &fn] {
            for (std::size_t k = t; k < n; k += w) {
                fn(k);
            }
        });
    }
}

}  // namespace detail

inline RelationGraph build_relation(std::uint64_t r, std::uint64_t x, std::uint64_t y) {
    if (r < 1 || r > 12) {
        throw invalid_parameter("build_relation: r must lie in [1, 12]");
    }
    if (y > std::numeric_limits<std::uint32_t>::max()) {
        throw invalid_parameter("build_relation: y must be < 2^32");
    }
    RelationGraph g;
    g.r = r;
    g.x = x;
    g.y = y;
    g.step = factorial(r);
    const std::uint64_t top = std::max<std::uint64_t>({x, y, 1});
    require_memory(top / 8 + top / 4, "relation graph prime table");
    const auto table = sieve_range(0, top);
    auto in_q = [&](std::uint64_t n) { return 4 * n > x && n <= y && table.is_prime(n); };
    for (std::uint64_t p : table.primes_between(0, x)) {
        if (2 * p > x) {
            g.P.push_back(p);
        }
    }
    for (std::uint64_t q : table.primes_between(0, y)) {
        if (4 * q > x) {
            g.Q.push_back(q);
        }
    }
    g.primed.resize(g.P.size());
    g.extra.resize(g.P.size());
    detail::parallel_for(g.P.size(), [&](std::size_t k) {
        const std::uint64_t d = g.step * g.P[k];
        const std::uint64_t span = (r - 1) * d;
        for (std::uint64_t q : g.Q) {
            if (q + span > y) {
                break;
            }
            bool all = true;
            for (std::uint64_t j = 1; j < r && all; ++j) {
                all = table.is_prime(q + j * d);
            }
            if (!all) {
                continue;
            }
            if (in_q(q + span + d)) {
                g.extra[k].push_back(static_cast<std::uint32_t>(q));
            } else {
                g.primed[k].push_back(static_cast<std::uint32_t>(q));
            }
        }
    });

    // Degrees on the Q side, and the uniqueness check: for fixed (p, q) at
    // most one shift i has p |-' q - i r! p.
    g.deg_q.assign(r, std::vector<std::uint32_t>(g.Q.size(), 0));
    for (std::size_t k = 0; k < g.P.size(); ++k) {
        const std::uint64_t d = g.step * g.P[k];
        const auto& list = g.primed[k];
        for (std::uint64_t q : list) {
            for (std::uint64_t i = 0; i < r; ++i) {
                ++g.deg_q[i][g.q_index(q + i * d)];
            }
            for (std::uint64_t i = 1; i < r; ++i) {
                if (std::binary_search(list.begin(), list.end(), static_cast<std::uint32_t>(q + i * d))) {
                    ++g.disj_violations;
                }
            }
        }
    }
    return g;
}

inline RelationGraph build_relation(const ResolvedParams& params) {
    return build_relation(params.r, params.x, params.y);
}

// Per p in P, the q with p |-' q whose whole progression survived stage 2.
struct RefinedRelation {
    std::vector<std::vector<std::uint32_t>> choices;  // Q(a, p)
    std::uint64_t edge_count() const {
        std::uint64_t n = 0;
        for (const auto& v : choices) {
            n += v.size();
        }
        return n;
    }
};

inline RefinedRelation refine_relation(const RelationGraph& g, const SieveInterval& after2) {
    if (after2.y != g.y) {
        throw invalid_parameter("refine_relation: interval and graph disagree on y");
    }
    RefinedRelation out;
    out.choices.resize(g.P.size());
    for (std::size_t k = 0; k < g.P.size(); ++k) {
        const std::uint64_t d = g.step * g.P[k];
        for (std::uint64_t q : g.primed[k]) {
            bool alive = true;
            for (std::uint64_t j = 0; j < g.r && alive; ++j) {
                alive = !after2.is_covered(q + j * d);
            }
            if (alive) {
                out.choices[k].push_back(static_cast<std::uint32_t>(q));
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Stages 3 and 4
// ---------------------------------------------------------------------------

struct Stage3Result {
    ResidueAssignment assignment;
    std::vector<std::pair<std::uint64_t, std::uint64_t>> chosen;  // (p, q_p)
    std::vector<std::uint64_t> deferred;                          // p with empty Q(a, p)
    SieveInterval interval;              // after applying a_p = q_p mod p
    std::uint64_t q_before = 0;          // #Q(a)
    std::uint64_t progression_removed = 0;  // #(Q(a) meeting some chosen progression)
    std::uint64_t q_after = 0;           // #Q_1: Q(a) minus the chosen progressions
    double survival_rate = 1;            // q_after / q_before
};

inline std::uint64_t stage3_choice(std::uint64_t seed, std::uint64_t p, std::uint64_t size) {
    return keyed_uniform(seed, Stream::stage3_choice, p, size);
}

inline Stage3Result stage3(const ResolvedParams& params, const RelationGraph& g, const RefinedRelation& refined,
                           const SieveInterval& after2) {
    Stage3Result out;
    out.assignment = ResidueAssignment(params.x);
    std::vector<bool> hit(g.Q.size(), false);
    for (std::size_t k = 0; k < g.P.size(); ++k) {
        const std::uint64_t p = g.P[k];
        const auto& options = refined.choices[k];
        if (options.empty()) {
            out.deferred.push_back(p);
            continue;
        }
        const std::uint64_t q = options[stage3_choice(params.seed, p, options.size())];
        out.chosen.emplace_back(p, q);
        out.assignment.set(p, q % p);
        for (std::uint64_t j = 0; j < g.r; ++j) {
            hit[g.q_index(q + j * g.step * p)] = true;
        }
    }
    for (std::size_t k = 0; k < g.Q.size(); ++k) {
        if (!after2.is_covered(g.Q[k])) {
            ++out.q_before;
            if (hit[k]) {
                ++out.progression_removed;
            }
        }
    }
    out.q_after = out.q_before - out.progression_removed;
    out.survival_rate = out.q_before == 0 ? 1.0
                                          : static_cast<double>(out.q_after) / static_cast<double>(out.q_before);
    out.interval = after2;
    detail::sieve_all(out.interval, out.assignment);
    return out;
}

struct Stage4Result {
    ResidueAssignment assignment;
    std::vector<std::pair<std::uint64_t, std::uint64_t>> matched;  // (survivor v, prime s)
    std::vector<std::uint64_t> remainder;                          // unmatched survivors
    std::uint64_t pool_size = 0;
};

// Matches survivors (ascending) to pool primes (ascending) with a_s = v mod s;
// unmatched pool primes get a_s = 0.
inline Stage4Result stage4(std::uint64_t x, const std::vector<std::uint64_t>& survivors,
                           const std::vector<std::uint64_t>& S4, const std::vector<std::uint64_t>& unused) {
    Stage4Result out;
    out.assignment = ResidueAssignment(x);
    std::vector<std::uint64_t> pool(S4);
    pool.insert(pool.end(), unused.begin(), unused.end());
    std::sort(pool.begin(), pool.end());
    out.pool_size = pool.size();
    std::size_t k = 0;
    for (; k < pool.size(); ++k) {
        if (k < survivors.size()) {
            out.assignment.set(pool[k], survivors[k] % pool[k]);
            out.matched.emplace_back(survivors[k], pool[k]);
        } else {
            out.assignment.set(pool[k], 0);
        }
    }
    for (; k < survivors.size(); ++k) {
        out.remainder.push_back(survivors[k]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Full run
// ---------------------------------------------------------------------------

struct StageReport {
    ResolvedParams params;
    std::size_t s1 = 0, s2 = 0, s3 = 0, s4 = 0;

    // stage 1
    std::uint64_t survivors1 = 0;
    std::uint64_t q_count = 0;
    std::uint64_t smooth_leftovers = 0;
    std::uint64_t other_leftovers = 0;
    bool split_exhaustive = false;
    double p_count_predicted = 0;  // x / (2 log x)
    double q_count_predicted = 0;  // y / log x

    // stage 2
    std::uint64_t survivors2 = 0;
    std::uint64_t q_survivors = 0;  // #Q(a)
    Rational gamma = 1;
    double q_survivors_expected = 0;  // gamma #Q
    std::vector<Rational> gamma_i;    // i = 1 .. min(r, min S2 - 1)
    double gamma_max_rel_dev = 0;

    // relation graph
    std::uint64_t p_count = 0;
    std::uint64_t edges = 0;          // |-' edges
    std::uint64_t edges_extra = 0;    // |- edges that are not |-'
    std::uint64_t refined_edges = 0;  // |-_a edges
    std::uint64_t disj_violations = 0;
    bool double_count_ok = false;
    double alpha_r = 0;
    double deg_p_predicted = 0;  // alpha_r y / log^r x
    double deg_q_predicted = 0;  // alpha_r x / (2 log^r x)
    std::uint64_t p0 = 0, q0 = 0, p1 = 0, q1 = 0;

    // stage 3
    std::uint64_t chosen = 0;
    std::uint64_t deferred = 0;
    std::uint64_t progression_removed = 0;
    std::uint64_t q_after3 = 0;
    double survival_rate3 = 1;
    double survival_bound3 = 0;  // (1 + epsilon) / r
    std::uint64_t survivors3 = 0;

    // stage 4
    std::uint64_t pool_size = 0;
    std::uint64_t matched = 0;
    std::uint64_t deficit = 0;
    std::vector<std::uint64_t> remainder;

    // outcome
    std::uint64_t y_covered = 0;  // y'
    bool success = false;         // remainder empty and verify_cover(y) holds
};

struct ConstructionResult {
    ResidueAssignment assignment;
    StageReport report;
};

namespace detail {

// Partial singular-series product over p <= 10^4, double precision; used
// only for the diagnostic predictions in the report.
inline double alpha_estimate(std::uint64_t r) {
    double v = 1;
    for (std::uint64_t p : primes_up_to(10'000)) {
        const double pd = static_cast<double>(p);
        const double rd = static_cast<double>(r);
        if (p <= r) {
            v *= std::pow(pd / (pd - 1), rd - 1);
        } else {
            v *= (pd - rd) * std::pow(pd, rd - 1) / std::pow(pd - 1, rd);
        }
    }
    return v;
}

inline bool within(double actual, double predicted, double band) {
    if (predicted <= 0) {
        return false;
    }
    const double ratio = actual / predicted;
    return ratio >= 1 - band && ratio <= 1 + band;
}

}  // namespace detail

inline ConstructionResult run_construction(const ConstructionParams& input) {
    StageReport rep;
    rep.params = resolve_params(input);
    const ResolvedParams& params = rep.params;
    const auto part = partition_primes(params);
    rep.s1 = part.S1.size();
    rep.s2 = part.S2.size();
    rep.s3 = part.S3.size();
    rep.s4 = part.S4.size();
    const double lx = std::log(static_cast<double>(params.x));
    rep.p_count_predicted = static_cast<double>(params.x) / (2 * lx);
    rep.q_count_predicted = static_cast<double>(params.y) / lx;

    auto s1 = stage1(params, part);
    rep.survivors1 = s1.interval.survivors.size();
    rep.q_count = s1.q_primes;
    rep.smooth_leftovers = s1.smooth;
    rep.other_leftovers = s1.other;
    rep.split_exhaustive = s1.exhaustive;

    auto s2 = stage2(params, part, s1.interval);
    rep.survivors2 = s2.interval.survivors.size();
    rep.q_survivors = s2.q_after;
    rep.gamma = s2.gamma;
    rep.q_survivors_expected = static_cast<double>(s2.gamma) * static_cast<double>(s2.q_before);
    std::uint64_t i_max = params.r;
    if (!part.S2.empty()) {
        i_max = std::min(i_max, part.S2.front() - 1);
    }
    const auto gf = gamma_factors(part.S2, i_max);
    rep.gamma_i = gf.gamma;
    rep.gamma_max_rel_dev = gf.max_rel_dev;

    const auto graph = build_relation(params);
    const auto refined = refine_relation(graph, s2.interval);
    rep.p_count = graph.P.size();
    rep.edges = graph.edge_count();
    for (const auto& v : graph.extra) {
        rep.edges_extra += v.size();
    }
    rep.refined_edges = refined.edge_count();
    rep.disj_violations = graph.disj_violations;
    rep.double_count_ok = true;
    for (std::uint64_t i = 0; i < params.r; ++i) {
        std::uint64_t q_side = 0;
        for (std::uint32_t c : graph.deg_q[i]) {
            q_side += c;
        }
        rep.double_count_ok = rep.double_count_ok && q_side == rep.edges;
    }

    // Degree diagnostics: vertices whose realized degree is within the band
    // of the heuristic prediction. They gate nothing.
    rep.alpha_r = detail::alpha_estimate(params.r);
    const double lr = std::pow(lx, static_cast<double>(params.r));
    rep.deg_p_predicted = rep.alpha_r * static_cast<double>(params.y) / lr;
    rep.deg_q_predicted = rep.alpha_r * static_cast<double>(params.x) / (2 * lr);
    const double gamma_r = params.r <= rep.gamma_i.size() ? static_cast<double>(rep.gamma_i[params.r - 1])
                                                          : 0.0;
    const double gamma = static_cast<double>(rep.gamma);
    for (std::size_t k = 0; k < graph.P.size(); ++k) {
        rep.p0 += detail::within(static_cast<double>(graph.deg_p(k)), rep.deg_p_predicted, params.band) ? 1 : 0;
        rep.p1 += detail::within(static_cast<double>(refined.choices[k].size()), gamma_r * rep.deg_p_predicted,
                                 params.band)
                      ? 1
                      : 0;
    }
    {
        // Q-side refined degrees, summed over shifts.
        std::vector<std::uint32_t> refined_q(graph.Q.size(), 0);
        for (std::size_t k = 0; k < graph.P.size(); ++k) {
            const std::uint64_t d = graph.step * graph.P[k];
            for (std::uint64_t q : refined.choices[k]) {
                for (std::uint64_t i = 0; i < params.r; ++i) {
                    ++refined_q[graph.q_index(q + i * d)];
                }
            }
        }
        const double rd = static_cast<double>(params.r);
        const double cond = gamma > 0 ? gamma_r / gamma : 0.0;
        for (std::size_t k = 0; k < graph.Q.size(); ++k) {
            std::uint64_t total = 0;
            for (std::uint64_t i = 0; i < params.r; ++i) {
                total += graph.deg_q[i][k];
            }
            rep.q0 += detail::within(static_cast<double>(total), rd * rep.deg_q_predicted, params.band) ? 1 : 0;
            if (!s2.interval.is_covered(graph.Q[k])) {
                rep.q1 += detail::within(static_cast<double>(refined_q[k]), cond * rd * rep.deg_q_predicted,
                                         params.band)
                              ? 1
                              : 0;
            }
        }
    }

    auto s3 = stage3(params, graph, refined, s2.interval);
    rep.chosen = s3.chosen.size();
    rep.deferred = s3.deferred.size();
    rep.progression_removed = s3.progression_removed;
    rep.q_after3 = s3.q_after;
    rep.survival_rate3 = s3.survival_rate;
    rep.survival_bound3 = (1 + params.epsilon) / static_cast<double>(params.r);
    rep.survivors3 = s3.interval.survivors.size();

    auto s4 = stage4(params.x, s3.interval.survivors, part.S4, s3.deferred);
    rep.pool_size = s4.pool_size;
    rep.matched = s4.matched.size();
    rep.deficit = s4.remainder.size();
    rep.remainder = s4.remainder;

    ConstructionResult out;
    out.assignment = ResidueAssignment(params.x);
    out.assignment.merge(s1.assignment);
    out.assignment.merge(s2.assignment);
    out.assignment.merge(s3.assignment);
    out.assignment.merge(s4.assignment);

    // Never trust the pipeline: coverage is recomputed from the assignment.
    const auto check = apply_classes(params.y, out.assignment);
    rep.y_covered = check.covered_prefix();
    rep.success = s4.remainder.empty() && check.survivors.empty();
    if (s4.remainder.empty() && !check.survivors.empty()) {
        throw std::logic_error("construction: empty remainder but assignment does not cover [1, y]");
    }
    out.report = std::move(rep);
    return out;
}

}  // namespace primegap
