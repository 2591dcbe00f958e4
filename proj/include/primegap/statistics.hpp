#pragma once

// Arithmetic constants behind the construction and empirical checks of them:
// the singular series alpha_r, local factors beta_p of affine-linear form
// systems, degree statistics of the relation graph, exact and Monte Carlo
// survival probabilities under the random stage-2 sieve, and smooth counts.

#include "primegap/common.hpp"
#include "primegap/construction.hpp"
#include "primegap/primes.hpp"
#include "primegap/rng.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace primegap {

// ---------------------------------------------------------------------------
// Singular series
// ---------------------------------------------------------------------------

struct SingularSeriesApprox {
    std::uint64_t r = 1;
    std::uint64_t cutoff = 2;
    HighFloat value = 1;
    // Bound on |log(alpha_r / value)| from the omitted primes p > cutoff;
    // infinite when cutoff < 2r.
    double tail_bound = 0;
    bool low_precision = false;
};

// Factor of alpha_r at the prime p, formed as an exact ratio and rounded once.
inline HighFloat singular_factor(std::uint64_t r, std::uint64_t p) {
    BigInt num = 1;
    BigInt den = 1;
    if (p <= r) {
        for (std::uint64_t k = 1; k < r; ++k) {
            num *= p;
            den *= p - 1;
        }
    } else {
        num = p - r;
        for (std::uint64_t k = 1; k < r; ++k) {
            num *= p;
        }
        for (std::uint64_t k = 0; k < r; ++k) {
            den *= p - 1;
        }
    }
    return HighFloat(num) / HighFloat(den);
}

inline SingularSeriesApprox singular_series(std::uint64_t r, std::uint64_t cutoff) {
    if (r < 1) {
        throw invalid_parameter("singular_series: r must be >= 1");
    }
    if (cutoff < 2) {
        throw invalid_parameter("singular_series: cutoff must be >= 2");
    }
    SingularSeriesApprox out;
    out.r = r;
    out.cutoff = cutoff;
    for_each_prime(2, cutoff, [&](std::uint64_t p) { out.value *= singular_factor(r, p); });
    // For p >= 2r, |log f_p| <= 2r(r-1)/p^2, and sum_{n > C} 1/n^2 <= 1/C.
    const double rd = static_cast<double>(r);
    if (r == 1) {
        out.tail_bound = 0;
    } else if (cutoff >= 2 * r) {
        out.tail_bound = 2 * rd * (rd - 1) / static_cast<double>(cutoff);
    } else {
        out.tail_bound = std::numeric_limits<double>::infinity();
        out.low_precision = true;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Local factors of affine-linear form systems
// ---------------------------------------------------------------------------

// p / (p - 1) if p does not divide b, else 0.
inline Rational local_von_mangoldt(std::uint64_t p, const BigInt& b) {
    if (p < 2) {
        throw invalid_parameter("local_von_mangoldt: p must be prime");
    }
    if (b % p == 0) {
        return 0;
    }
    return Rational(p, p - 1);
}

struct AffineForm {
    std::vector<std::int64_t> coef;
    std::int64_t constant = 0;
};

struct AffineLinearSystem {
    std::size_t d = 0;
    std::vector<AffineForm> forms;

    std::size_t t() const { return forms.size(); }

    // No homogeneous part is zero or a rational multiple of another.
    bool finite_complexity() const {
        for (std::size_t a = 0; a < forms.size(); ++a) {
            const auto& u = forms[a].coef;
            if (std::all_of(u.begin(), u.end(), [](std::int64_t c) { return c == 0; })) {
                return false;
            }
            for (std::size_t b = a + 1; b < forms.size(); ++b) {
                const auto& v = forms[b].coef;
                bool parallel = true;
                for (std::size_t j = 0; j < d && parallel; ++j) {
                    for (std::size_t k = j + 1; k < d && parallel; ++k) {
                        const __int128 minor = static_cast<__int128>(u[j]) * v[k] - static_cast<__int128>(u[k]) * v[j];
                        parallel = minor == 0;
                    }
                }
                if (parallel) {
                    return false;
                }
            }
        }
        return true;
    }
};

inline constexpr std::uint64_t kMaxLocalEnumeration = 100'000'000;

// E_{n in (Z/pZ)^d} prod_i Lambda_p(psi_i(n)), exactly, by full enumeration.
inline Rational local_factor(const AffineLinearSystem& sys, std::uint64_t p) {
    if (!is_prime_u64(p)) {
        throw invalid_parameter("local_factor: p must be prime");
    }
    if (sys.d == 0) {
        throw invalid_parameter("local_factor: dimension must be positive");
    }
    std::uint64_t cells = 1;
    for (std::size_t k = 0; k < sys.d; ++k) {
        if (cells > kMaxLocalEnumeration / p) {
            throw invalid_parameter("local_factor: p^d exceeds the enumeration limit 10^8");
        }
        cells *= p;
    }
    const std::size_t t = sys.t();
    const auto pi = static_cast<std::int64_t>(p);
    auto reduce = [pi](std::int64_t v) { return static_cast<std::uint64_t>(((v % pi) + pi) % pi); };
    // coef[i][k] and constants reduced mod p.
    std::vector<std::vector<std::uint64_t>> coef(t, std::vector<std::uint64_t>(sys.d));
    std::vector<std::uint64_t> constant(t);
    for (std::size_t i = 0; i < t; ++i) {
        if (sys.forms[i].coef.size() != sys.d) {
            throw invalid_parameter("local_factor: form dimension mismatch");
        }
        for (std::size_t k = 0; k < sys.d; ++k) {
            coef[i][k] = reduce(sys.forms[i].coef[k]);
        }
        constant[i] = reduce(sys.forms[i].constant);
    }

    // The outer p^(d-1) prefixes are split across workers; the last
    // coordinate is swept incrementally.
    const std::uint64_t prefixes = cells / p;
    const std::size_t last = sys.d - 1;
    std::atomic<std::uint64_t> good{0};
    const unsigned workers = detail::worker_count(static_cast<std::size_t>(prefixes / 256));
    auto sweep = [&](std::uint64_t begin, std::uint64_t end) {
        std::uint64_t local = 0;
        std::vector<std::uint64_t> val(t);
        for (std::uint64_t idx = begin; idx < end; ++idx) {
            std::uint64_t rest = idx;
            for (std::size_t i = 0; i < t; ++i) {
                val[i] = constant[i];
            }
            for (std::size_t k = 0; k < last; ++k) {
                const std::uint64_t nk = rest % p;
                rest /= p;
                for (std::size_t i = 0; i < t; ++i) {
                    val[i] = (val[i] + coef[i][k] * nk) % p;
                }
            }
            for (std::uint64_t n = 0; n < p; ++n) {
                bool all = true;
                for (std::size_t i = 0; i < t; ++i) {
                    all = all && val[i] != 0;
                    val[i] += coef[i][last];
                    if (val[i] >= p) {
                        val[i] -= p;
                    }
                }
                local += all ? 1 : 0;
            }
        }
        good += local;
    };
    if (workers <= 1) {
        sweep(0, prefixes);
    } else {
        std::vector<std::jthread> pool;
        const std::uint64_t chunk = (prefixes + workers - 1) / workers;
        for (unsigned w = 0; w < workers; ++w) {
            const std::uint64_t b = std::min(prefixes, w * chunk);
            const std::uint64_t e = std::min(prefixes, b + chunk);
            pool.emplace_back(sweep, b, e);
        }
    }
    BigInt num = good.load();
    BigInt den = cells;
    for (std::size_t i = 0; i < t; ++i) {
        num *= p;
        den *= p - 1;
    }
    return Rational(num, den);
}

enum class SystemKind { progression_pair_d3, progression_d2, shifted_d3, shifted_d2 };

inline std::string to_string(SystemKind k) {
    switch (k) {
        case SystemKind::progression_pair_d3: return "progression_pair_d3";
        case SystemKind::progression_d2: return "progression_d2";
        case SystemKind::shifted_d3: return "shifted_d3";
        case SystemKind::shifted_d2: return "shifted_d2";
    }
    return "?";
}

inline SystemKind parse_system_kind(const std::string& s) {
    for (auto k : {SystemKind::progression_pair_d3, SystemKind::progression_d2, SystemKind::shifted_d3,
                   SystemKind::shifted_d2}) {
        if (to_string(k) == s) {
            return k;
        }
    }
    throw invalid_parameter("unknown system kind '" + s + "'");
}

inline bool is_d3(SystemKind k) { return k == SystemKind::progression_pair_d3 || k == SystemKind::shifted_d3; }

// The form systems used to count prime progressions:
//   progression_pair_d3  (n1, (n_l + j r! n1 + mx)_{0<=j<r, l=2,3})
//   progression_d2       (n1, (n2 + j r! n1 + mx)_{0<=j<r})
//   shifted_d3           (n1 + mx, n2, n3, (n1 + j r! n_l + mx)_{-i<=j<r-i, j!=0, l=2,3})
//   shifted_d2           (n2, (n1 + j r! n2 + mx)_{-i<=j<r-i})
inline AffineLinearSystem make_form_system(SystemKind kind, std::uint64_t r, std::int64_t m, std::int64_t x,
                                            std::uint64_t i = 0) {
    if (r < 1 || r > 12) {
        throw invalid_parameter("make_form_system: r must lie in [1, 12]");
    }
    if (i >= r) {
        throw invalid_parameter("make_form_system: shift i must lie in [0, r)");
    }
    const auto f = static_cast<std::int64_t>(factorial(r));
    const std::int64_t mx = m * x;
    const auto ri = static_cast<std::int64_t>(r);
    const auto ii = static_cast<std::int64_t>(i);
    AffineLinearSystem s;
    switch (kind) {
        case SystemKind::progression_pair_d3:
            s.d = 3;
            s.forms.push_back({{1, 0, 0}, 0});
            for (int l = 2; l <= 3; ++l) {
                for (std::int64_t j = 0; j < ri; ++j) {
                    s.forms.push_back({{j * f, l == 2 ? 1 : 0, l == 3 ? 1 : 0}, mx});
                }
            }
            break;
        case SystemKind::progression_d2:
            s.d = 2;
            s.forms.push_back({{1, 0}, 0});
            for (std::int64_t j = 0; j < ri; ++j) {
                s.forms.push_back({{j * f, 1}, mx});
            }
            break;
        case SystemKind::shifted_d3:
            s.d = 3;
            s.forms.push_back({{1, 0, 0}, mx});
            s.forms.push_back({{0, 1, 0}, 0});
            s.forms.push_back({{0, 0, 1}, 0});
            for (int l = 2; l <= 3; ++l) {
                for (std::int64_t j = -ii; j < ri - ii; ++j) {
                    if (j != 0) {
                        s.forms.push_back({{1, l == 2 ? j * f : 0, l == 3 ? j * f : 0}, mx});
                    }
                }
            }
            break;
        case SystemKind::shifted_d2:
            s.d = 2;
            s.forms.push_back({{0, 1}, 0});
            for (std::int64_t j = -ii; j < ri - ii; ++j) {
                s.forms.push_back({{1, j * f}, mx});
            }
            break;
    }
    return s;
}

// Closed forms of beta_p for the d = 2 systems; the d = 3 systems square it.
inline Rational beta_closed_form(SystemKind kind, std::uint64_t r, std::uint64_t p) {
    Rational b = 1;
    if (p <= r) {
        for (std::uint64_t k = 1; k < r; ++k) {
            b *= Rational(p, p - 1);
        }
    } else {
        b = Rational(p - r, p);
        for (std::uint64_t k = 0; k < r; ++k) {
            b *= Rational(p, p - 1);
        }
    }
    return is_d3(kind) ? b * b : b;
}

// sum_{i,j} |coef_ij| + sum_i |c_i| / (N log^B N). B = 0 gives the plain norm.
inline double psi_norm(const AffineLinearSystem& sys, std::uint64_t N, double B) {
    if (N < 3) {
        throw invalid_parameter("psi_norm: N must be >= 3");
    }
    const double nd = static_cast<double>(N);
    const double scale = nd * std::pow(std::log(nd), B);
    double homogeneous = 0;
    double constants = 0;
    for (const auto& f : sys.forms) {
        for (std::int64_t c : f.coef) {
            homogeneous += std::abs(static_cast<double>(c));
        }
        constants += std::abs(static_cast<double>(f.constant)) / scale;
    }
    return homogeneous + constants;
}

// ---------------------------------------------------------------------------
// Degree statistics
// ---------------------------------------------------------------------------

enum class Side { P, Q };

// Which relation the counts use: p |- q, or the stricter p |-' q.
enum class RelationKind { forward, primed };

struct Quantiles {
    double min = 0, q25 = 0, median = 0, q75 = 0, max = 0;
};

struct DegreeStats {
    std::uint64_t r = 0, x = 0, y = 0, shift = 0;
    Side side = Side::P;
    RelationKind relation = RelationKind::forward;
    std::vector<std::uint64_t> vertices;
    std::vector<std::uint64_t> counts;
    std::uint64_t total = 0;
    double alpha_r = 0;
    double predicted = 0;
    Quantiles ratio;  // counts / predicted
};

inline double quantile(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) {
        return 0;
    }
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline Quantiles quantiles(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    Quantiles q;
    if (v.empty()) {
        return q;
    }
    q.min = v.front();
    q.q25 = quantile(v, 0.25);
    q.median = quantile(v, 0.5);
    q.q75 = quantile(v, 0.75);
    q.max = v.back();
    return q;
}

// Per-vertex counts for shift i:
//   side P: #{q in Q : p R q - i r! p}
//   side Q: #{p in P : p R q - i r! p}
// with predictions alpha_r y / log^r x and alpha_r x / (2 log^r x).
inline DegreeStats degree_stats(const RelationGraph& g, Side side, std::uint64_t i,
                                RelationKind relation = RelationKind::forward) {
    if (i >= g.r) {
        throw invalid_parameter("degree_stats: shift i must lie in [0, r)");
    }
    DegreeStats out;
    out.r = g.r;
    out.x = g.x;
    out.y = g.y;
    out.shift = i;
    out.side = side;
    out.relation = relation;
    auto lists = [&](std::size_t k, auto&& fn) {
        for (std::uint64_t q : g.primed[k]) {
            fn(q);
        }
        if (relation == RelationKind::forward) {
            for (std::uint64_t q : g.extra[k]) {
                fn(q);
            }
        }
    };
    if (side == Side::P) {
        out.vertices = g.P;
        out.counts.resize(g.P.size());
        for (std::size_t k = 0; k < g.P.size(); ++k) {
            // Every progression term lies in Q, so each edge counts once for
            // every shift i < r.
            std::uint64_t c = 0;
            lists(k, [&c](std::uint64_t) { ++c; });
            out.counts[k] = c;
        }
    } else {
        out.vertices = g.Q;
        out.counts.assign(g.Q.size(), 0);
        for (std::size_t k = 0; k < g.P.size(); ++k) {
            const std::uint64_t shift = i * g.step * g.P[k];
            lists(k, [&](std::uint64_t q) { ++out.counts[g.q_index(q + shift)]; });
        }
    }
    out.total = std::accumulate(out.counts.begin(), out.counts.end(), std::uint64_t{0});
    out.alpha_r = static_cast<double>(singular_series(g.r, 100'000).value);
    const double lr = std::pow(std::log(static_cast<double>(g.x)), static_cast<double>(g.r));
    out.predicted = side == Side::P ? out.alpha_r * static_cast<double>(g.y) / lr
                                    : out.alpha_r * static_cast<double>(g.x) / (2 * lr);
    std::vector<double> ratios;
    ratios.reserve(out.counts.size());
    for (std::uint64_t c : out.counts) {
        ratios.push_back(out.predicted > 0 ? static_cast<double>(c) / out.predicted : 0.0);
    }
    out.ratio = quantiles(std::move(ratios));
    return out;
}

// ---------------------------------------------------------------------------
// Survival under the random stage-2 sieve
// ---------------------------------------------------------------------------

inline constexpr std::uint64_t kMaxExhaustiveAssignments = 1'000'000;

// Fraction of all residue choices (a_s)_{s in S2} under which every element
// avoids every class a_s (mod s), by enumerating every choice.
inline Rational exhaustive_survival(const std::vector<std::uint64_t>& S2, const std::vector<std::uint64_t>& elements) {
    std::uint64_t total = 1;
    for (std::uint64_t s : S2) {
        if (s < 2) {
            throw invalid_parameter("exhaustive_survival: moduli must be >= 2");
        }
        if (total > kMaxExhaustiveAssignments / s) {
            throw invalid_parameter("exhaustive_survival: more than 10^6 assignments");
        }
        total *= s;
    }
    // hit[k][a]: some element is = a (mod S2[k]).
    std::vector<std::vector<bool>> hit(S2.size());
    for (std::size_t k = 0; k < S2.size(); ++k) {
        hit[k].assign(S2[k], false);
        for (std::uint64_t n : elements) {
            hit[k][n % S2[k]] = true;
        }
    }
    std::vector<std::uint64_t> a(S2.size(), 0);
    std::uint64_t alive = 0;
    for (std::uint64_t idx = 0; idx < total; ++idx) {
        bool ok = true;
        for (std::size_t k = 0; k < S2.size() && ok; ++k) {
            ok = !hit[k][a[k]];
        }
        alive += ok ? 1 : 0;
        for (std::size_t k = 0; k < a.size(); ++k) {
            if (++a[k] < S2[k]) {
                break;
            }
            a[k] = 0;
        }
    }
    return Rational(alive, total);
}

enum class MonteCarloTarget { survivor_count, pair_survival, ap_survival };

inline std::string to_string(MonteCarloTarget t) {
    switch (t) {
        case MonteCarloTarget::survivor_count: return "survivor_count";
        case MonteCarloTarget::pair_survival: return "pair_survival";
        case MonteCarloTarget::ap_survival: return "ap_survival";
    }
    return "?";
}

inline MonteCarloTarget parse_montecarlo_target(const std::string& s) {
    for (auto t : {MonteCarloTarget::survivor_count, MonteCarloTarget::pair_survival, MonteCarloTarget::ap_survival}) {
        if (to_string(t) == s) {
            return t;
        }
    }
    throw invalid_parameter("unknown Monte Carlo target '" + s + "'");
}

struct MonteCarloConfig {
    std::uint64_t r = 2;
    std::uint64_t x = 100'000;
    std::uint64_t y = 1'000'000;
    std::uint64_t z = 1'000;
    std::optional<std::vector<std::uint64_t>> S2;  // overrides (log x, z]
    MonteCarloTarget target = MonteCarloTarget::survivor_count;
    std::uint64_t trials = 1'000;
    std::uint64_t seed = 0;
};

struct MonteCarloResult {
    MonteCarloTarget target = MonteCarloTarget::survivor_count;
    std::uint64_t trials = 0;
    std::uint64_t seed = 0;
    std::vector<std::uint64_t> S2;
    std::vector<std::uint64_t> elements;  // tracked set (pair / progression); empty for survivor_count
    std::uint64_t q_count = 0;            // #Q
    double empirical = 0;                 // mean #Q(a), or survival frequency
    double predicted = 0;                 // gamma #Q, gamma_2, or gamma_r
    double ratio = 0;                     // empirical / predicted
    double stddev = 0;                    // standard error of the empirical mean
    double z_score = 0;
    std::optional<Rational> exact;        // exhaustive value when S2 is small enough
};

// Stage-2 seed used by trial t of a Monte Carlo run.
inline std::uint64_t trial_seed(std::uint64_t seed, std::uint64_t t) {
    return KeyedRng(seed, Stream::montecarlo, t).next();
}

inline MonteCarloResult montecarlo_stage2(const MonteCarloConfig& cfg) {
    if (cfg.trials < 1) {
        throw invalid_parameter("montecarlo: trials must be >= 1");
    }
    if (cfg.r < 1 || cfg.r > 12) {
        throw invalid_parameter("montecarlo: r must lie in [1, 12]");
    }
    if (4 * cfg.y <= cfg.x) {
        throw invalid_parameter("montecarlo: need y > x/4");
    }
    MonteCarloResult out;
    out.target = cfg.target;
    out.trials = cfg.trials;
    out.seed = cfg.seed;
    const double lx = std::log(static_cast<double>(cfg.x));
    if (cfg.S2) {
        out.S2 = *cfg.S2;
        for (std::uint64_t s : out.S2) {
            if (!is_prime_u64(s)) {
                throw invalid_parameter("montecarlo: S2 entries must be prime");
            }
        }
    } else {
        for (std::uint64_t s : primes_up_to(cfg.z)) {
            if (static_cast<double>(s) > lx) {
                out.S2.push_back(s);
            }
        }
    }
    require_memory(cfg.y / 4, "montecarlo prime table");
    const auto table = sieve_range(0, std::max(cfg.y, cfg.x));
    std::vector<std::uint64_t> Q;
    for (std::uint64_t q : table.primes_between(cfg.x / 4 + 1, cfg.y)) {
        Q.push_back(q);
    }
    if (Q.empty()) {
        throw invalid_parameter("montecarlo: Q = primes in (x/4, y] is empty");
    }
    out.q_count = Q.size();
    const Rational gamma = gamma_of(out.S2);

    std::uint64_t i_needed = 1;
    if (cfg.target == MonteCarloTarget::pair_survival) {
        i_needed = 2;
        out.elements.push_back(Q.front());
        for (std::size_t k = 1; k < Q.size() && out.elements.size() < 2; ++k) {
            const std::uint64_t diff = Q[k] - Q.front();
            if (std::none_of(out.S2.begin(), out.S2.end(), [diff](std::uint64_t s) { return diff % s == 0; })) {
                out.elements.push_back(Q[k]);
            }
        }
        if (out.elements.size() < 2) {
            throw invalid_parameter("montecarlo: no pair in Q with difference coprime to S2");
        }
    } else if (cfg.target == MonteCarloTarget::ap_survival) {
        i_needed = cfg.r;
        const auto P = table.primes_between(cfg.x / 2 + 1, cfg.x);
        const auto it = std::find_if(P.begin(), P.end(), [&](std::uint64_t p) {
            return std::find(out.S2.begin(), out.S2.end(), p) == out.S2.end();
        });
        if (it == P.end()) {
            throw invalid_parameter("montecarlo: no prime in (x/2, x] outside S2");
        }
        const std::uint64_t d = factorial(cfg.r) * *it;
        for (std::uint64_t j = 0; j < cfg.r; ++j) {
            out.elements.push_back(Q.front() + j * d);
        }
    }
    if (!out.S2.empty() && *std::min_element(out.S2.begin(), out.S2.end()) <= i_needed) {
        throw invalid_parameter("montecarlo: min(S2) must exceed the tracked set size");
    }

    std::uint64_t total = 1;
    bool exhaustible = true;
    for (std::uint64_t s : out.S2) {
        if (total > kMaxExhaustiveAssignments / s) {
            exhaustible = false;
            break;
        }
        total *= s;
    }

    if (cfg.target == MonteCarloTarget::survivor_count) {
        // buckets[k][a]: indices of q in Q with q = a (mod S2[k]).
        std::vector<std::vector<std::vector<std::uint32_t>>> buckets(out.S2.size());
        for (std::size_t k = 0; k < out.S2.size(); ++k) {
            buckets[k].resize(out.S2[k]);
            for (std::size_t idx = 0; idx < Q.size(); ++idx) {
                buckets[k][Q[idx] % out.S2[k]].push_back(static_cast<std::uint32_t>(idx));
            }
        }
        std::vector<std::uint64_t> stamp(Q.size(), 0);
        double sum = 0;
        double sum_sq = 0;
        for (std::uint64_t t = 0; t < cfg.trials; ++t) {
            const std::uint64_t s_seed = trial_seed(cfg.seed, t);
            std::uint64_t removed = 0;
            for (std::size_t k = 0; k < out.S2.size(); ++k) {
                for (std::uint32_t idx : buckets[k][stage2_residue(s_seed, out.S2[k])]) {
                    if (stamp[idx] != t + 1) {
                        stamp[idx] = t + 1;
                        ++removed;
                    }
                }
            }
            const auto kept = static_cast<double>(Q.size() - removed);
            sum += kept;
            sum_sq += kept * kept;
        }
        const auto n = static_cast<double>(cfg.trials);
        out.empirical = sum / n;
        out.predicted = static_cast<double>(gamma) * static_cast<double>(Q.size());
        // Survivors sharing a residue mod s are positively correlated, so the
        // binomial variance understates the spread; use the sample variance.
        if (cfg.trials > 1) {
            const double var = std::max(0.0, (sum_sq - sum * sum / n) / (n - 1));
            out.stddev = std::sqrt(var / n);
        }
        if (exhaustible) {
            // Each single element survives in the same fraction of choices
            // (one class per modulus), so the mean count is #Q times it.
            out.exact = exhaustive_survival(out.S2, {Q.front()}) * static_cast<std::uint64_t>(Q.size());
        }
    } else {
        std::uint64_t alive = 0;
        for (std::uint64_t t = 0; t < cfg.trials; ++t) {
            const std::uint64_t s_seed = trial_seed(cfg.seed, t);
            bool ok = true;
            for (std::size_t k = 0; k < out.S2.size() && ok; ++k) {
                const std::uint64_t a = stage2_residue(s_seed, out.S2[k]);
                for (std::uint64_t n : out.elements) {
                    ok = ok && n % out.S2[k] != a;
                }
            }
            alive += ok ? 1 : 0;
        }
        const auto gf = gamma_factors(out.S2, i_needed);
        const double g = static_cast<double>(gf.gamma.back());
        out.empirical = static_cast<double>(alive) / static_cast<double>(cfg.trials);
        out.predicted = g;
        out.stddev = std::sqrt(g * (1 - g) / static_cast<double>(cfg.trials));
        if (exhaustible) {
            out.exact = exhaustive_survival(out.S2, out.elements);
        }
    }
    out.ratio = out.predicted > 0 ? out.empirical / out.predicted : 0.0;
    if (out.stddev > 0) {
        out.z_score = (out.empirical - out.predicted) / out.stddev;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Smooth numbers
// ---------------------------------------------------------------------------

struct SmoothCount {
    std::uint64_t y = 0, z = 0;
    std::uint64_t count = 0;  // #{1 <= n <= y : every prime factor of n is <= z}, 1 included
    double u = 0;             // log y / log z
    double de_bruijn = 0;     // y exp(-u log u)
};

inline SmoothCount smooth_count(std::uint64_t y, std::uint64_t z) {
    if (y < 1) {
        throw invalid_parameter("smooth_count: y must be >= 1");
    }
    if (z < 2) {
        throw invalid_parameter("smooth_count: z must be >= 2");
    }
    SmoothCount out;
    out.y = y;
    out.z = z;
    if (z >= y) {
        out.count = y;
    } else {
        require_memory(y / 8, "smooth_count");
        // Strike every multiple of a prime in (z, y].
        std::vector<bool> rough(y + 1, false);
        for_each_prime(z + 1, y, [&](std::uint64_t p) {
            for (std::uint64_t n = p; n <= y; n += p) {
                rough[n] = true;
            }
        });
        for (std::uint64_t n = 1; n <= y; ++n) {
            out.count += rough[n] ? 0 : 1;
        }
    }
    const double yd = static_cast<double>(y);
    out.u = std::log(yd) / std::log(static_cast<double>(z));
    out.de_bruijn = out.u > 0 ? yd * std::exp(-out.u * std::log(out.u)) : yd;
    return out;
}

}  // namespace primegap
