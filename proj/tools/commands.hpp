#pragma once

// Command-line front end. dispatch() is the whole program minus main(), so
// tests and the batch runner drive it in-process.

#include "primegap/construction.hpp"
#include "primegap/covering.hpp"

#include "json.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace primegap::cli {

using json = nlohmann::ordered_json;

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitError = 2;

// Runs one command line (without the program name). Primary output goes to
// `out`; failures print one line "error: <kind>: <message>" to `err`.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// One run of a batch, stored as a flat JSON object mirroring the flags:
//   {"command": "construct", "r": 2, "x": 30, "seed": 7, "format": "json"}
// Boolean values stand for presence flags. Unknown keys are rejected.
struct RunConfig {
    std::string command;                 // "construct", "stats alpha", ...
    std::map<std::string, json> params;  // flag name without dashes -> scalar
    std::optional<std::uint64_t> seed;
    std::string format = "json";
    std::optional<std::string> output;

    static RunConfig from_json(const json& j);
    json to_json() const;
    std::vector<std::string> to_argv() const;

    friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

// Thrown for malformed config documents and input files.
class config_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

json run_batch(const std::vector<RunConfig>& runs, unsigned workers);

// JSON encodings shared with the schemas.
json assignment_to_json(const ResidueAssignment& a);
ResidueAssignment assignment_from_json(const json& j);
json certificate_to_json(const CompositeRunCertificate& c);
CompositeRunCertificate certificate_from_json(const json& j);
json report_to_json(const StageReport& rep, bool seed_given);

// Renders a document as json, csv, or an aligned text table.
std::string render(const json& doc, const std::string& format);

}  // namespace primegap::cli
