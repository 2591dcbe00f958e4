#pragma once

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <boost/multiprecision/cpp_int.hpp>

#include <cstdint>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace primegap {

using BigInt = boost::multiprecision::cpp_int;
using Rational = boost::multiprecision::cpp_rational;
// 50 decimal digits, roughly 166 bits of mantissa.
using HighFloat = boost::multiprecision::cpp_bin_float_50;

// Thrown for precondition violations on user-supplied parameters.
class invalid_parameter : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Thrown when an operation would exceed the configured memory budget.
class memory_budget_exceeded : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Thrown when a search or scan runs past its work budget.
class search_budget_exceeded : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class factorization_unavailable : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr std::uint64_t kDefaultMemoryMb = 4096;

// Memory cap for large allocations, in bytes. PRIMEGAP_MEM_MB overrides the
// default of 4 GiB.
inline std::uint64_t memory_budget_bytes() {
    if (const char* env = std::getenv("PRIMEGAP_MEM_MB"); env != nullptr && *env != '\0') {
        char* end = nullptr;
        const unsigned long long mb = std::strtoull(env, &end, 10);
        if (end != env && *end == '\0' && mb > 0) {
            return static_cast<std::uint64_t>(mb) << 20;
        }
    }
    return kDefaultMemoryMb << 20;
}

inline void require_memory(std::uint64_t bytes, const char* what) {
    const std::uint64_t budget = memory_budget_bytes();
    if (bytes > budget) {
        throw memory_budget_exceeded(std::string(what) + " needs " + std::to_string(bytes >> 20) +
                                     " MiB, budget is " + std::to_string(budget >> 20) + " MiB");
    }
}

inline std::string to_decimal(const BigInt& n) { return n.str(); }

inline BigInt parse_decimal(const std::string& s) {
    if (s.empty()) {
        throw invalid_parameter("empty integer literal");
    }
    std::size_t start = (s[0] == '-' || s[0] == '+') ? 1 : 0;
    if (start == s.size()) {
        throw invalid_parameter("malformed integer literal '" + s + "'");
    }
    for (std::size_t k = start; k < s.size(); ++k) {
        if (s[k] < '0' || s[k] > '9') {
            throw invalid_parameter("malformed integer literal '" + s + "'");
        }
    }
    return BigInt(s);
}

}  // namespace primegap
